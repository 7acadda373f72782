//! Synthetic evaluation corpora with known system quality.
//!
//! Each system copies the reference and replaces a system-specific fraction
//! of words with random vocabulary; the human score of a segment is the share
//! of intact words on a 0-100 scale minus a small integer jitter, so scores are
//! integers and ties occur. Challenge triples pair a clean text (A) with a
//! character-noised spelling of it (B) and a one-word meaning change (C),
//! scored against a noised reference.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::challenge::{ChallengeTriple, EditOperation, EquivalentPair, Variant, WorksheetRow, Worksheet};
use crate::corpus::{CorpusError, EvalDataset, Judgment, JudgmentSet, LoadOptions, Segment, SegmentKey};
use crate::noise::{build_alphabet, noise_dataset, noise_text, stream_rng, Alphabet, NoiseConfig, NoiseError, NoiseField, NoiseTarget};
use crate::tokenize::token_spans;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 2 systems and 1 segment")]
    TooSmall,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub systems: usize,
    pub segments: usize,
    pub dialects: Vec<String>,
    pub seed: u64,
    /// Word-corruption rate added per system rank.
    pub quality_step: f64,
    /// Noise rate for challenge references and B variants.
    pub noise_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            systems: 8,
            segments: 200,
            dialects: vec!["BE".into(), "ZH".into()],
            seed: 1,
            quality_step: 0.06,
            noise_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDialect {
    pub label: String,
    pub dataset: EvalDataset,
    pub judgments: JudgmentSet,
    pub triples: Vec<ChallengeTriple>,
}

const LETTERS: &str = "abcdefghijklmnoprstuwäöü";

fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let letters: Vec<char> = LETTERS.chars().collect();
    let mut words = BTreeSet::new();
    while words.len() < size {
        let len = rng.gen_range(2..=8);
        words.insert((0..len).map(|_| *letters.choose(rng).unwrap()).collect::<String>());
    }
    let mut words: Vec<String> = words.into_iter().collect();
    words.shuffle(rng);
    words
}

fn sentence(rng: &mut ChaCha8Rng, vocab: &[String]) -> Vec<String> {
    let n = rng.gen_range(6..=14);
    (0..n).map(|_| vocab.choose(rng).unwrap().clone()).collect()
}

/// System ids `sys_a`, `sys_b`, ...; `sys_a` is the best system.
pub fn system_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let mut s = String::new();
            let mut k = i;
            loop {
                s.insert(0, (b'a' + (k % 26) as u8) as char);
                if k < 26 {
                    break;
                }
                k = k / 26 - 1;
            }
            format!("sys_{s}")
        })
        .collect()
}

/// Lower-cased language pair for a dialect label, e.g. `de-gsw_be`.
pub fn lang_pair_for(label: &str) -> String {
    format!("de-gsw_{}", label.to_lowercase())
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthDialect>> {
    if cfg.systems < 2 || cfg.segments == 0 {
        return Err(SynthError::TooSmall);
    }
    let systems = system_names(cfg.systems);
    let mut out = Vec::with_capacity(cfg.dialects.len());
    for (di, label) in cfg.dialects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(di as u64);
        let src_vocab = vocabulary(&mut rng, 400);
        let tgt_vocab = vocabulary(&mut rng, 400);

        let mut segments = Vec::with_capacity(cfg.segments);
        let mut grid: BTreeMap<String, BTreeMap<SegmentKey, String>> = BTreeMap::new();
        let mut records = Vec::new();
        for g in 0..cfg.segments {
            let key = SegmentKey::new(format!("doc{}", g / 10), (g % 10) as u32);
            let source = sentence(&mut rng, &src_vocab).join(" ");
            let reference = sentence(&mut rng, &tgt_vocab);
            for (rank, sys) in systems.iter().enumerate() {
                let rate = cfg.quality_step * rank as f64;
                let mut hyp = reference.clone();
                let mut changed = 0usize;
                for w in hyp.iter_mut() {
                    if rng.gen_bool(rate.min(1.0)) {
                        let new = tgt_vocab.choose(&mut rng).unwrap();
                        if new != w {
                            *w = new.clone();
                            changed += 1;
                        }
                    }
                }
                let intact = 1.0 - changed as f64 / hyp.len() as f64;
                let jitter: f64 = f64::from(rng.gen_range(0..=4u8));
                let score = (100.0 * intact - jitter).round().clamp(0.0, 100.0);
                grid.entry(sys.clone()).or_default().insert(key.clone(), hyp.join(" "));
                records.push(Judgment {
                    system_id: sys.clone(),
                    key: key.clone(),
                    rater_id: "r1".into(),
                    score,
                });
            }
            segments.push(Segment {
                key,
                source,
                reference: reference.join(" "),
            });
        }
        let dataset = EvalDataset::new(lang_pair_for(label), segments, grid, &LoadOptions::default())?;
        let triples = challenge_triples(&dataset, cfg.noise_rate, cfg.seed)?;
        out.push(SynthDialect {
            label: label.clone(),
            dataset,
            judgments: JudgmentSet {
                records,
                aggregation: Default::default(),
            },
            triples,
        });
    }
    Ok(out)
}

/// Target-side alphabet of a dataset (every character of references and
/// hypotheses).
pub fn target_alphabet(dataset: &EvalDataset) -> Alphabet {
    let (_, tgt) = dataset.languages();
    let texts = dataset.segments().iter().map(|s| s.reference.as_str()).chain(
        dataset
            .system_ids()
            .flat_map(|sys| dataset.hypotheses(sys).into_iter().flat_map(|h| h.values().map(String::as_str))),
    );
    build_alphabet(texts, tgt, 1)
}

/// Spelling-variation triples: A is the clean reference, B a noised copy of
/// it, C is A with one word replaced by another word of the corpus. The
/// triple reference is an independently noised copy of the clean reference
/// (the "dialect" reference a metric sees).
pub fn challenge_triples(dataset: &EvalDataset, rate: f64, seed: u64) -> Result<Vec<ChallengeTriple>> {
    let alphabet = target_alphabet(dataset);
    let (_, tgt) = dataset.languages();
    let alphabets = BTreeMap::from([(tgt.to_string(), alphabet.clone())]);
    let ref_cfg = NoiseConfig {
        rate,
        seed,
        targets: [NoiseTarget::Reference].into_iter().collect(),
        ..NoiseConfig::default()
    };
    let (noised, _) = noise_dataset(dataset, &alphabets, &ref_cfg)?;
    let vocab: Vec<String> = dataset
        .segments()
        .iter()
        .flat_map(|s| s.reference.split(' ').map(String::from))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let b_cfg = NoiseConfig {
        rate,
        seed: seed.wrapping_add(1),
        ..NoiseConfig::default()
    };
    let mut triples = Vec::new();
    for (seg, noisy) in dataset.segments().iter().zip(noised.segments()) {
        let a = seg.reference.clone();
        let mut rng = stream_rng(b_cfg.seed, &seg.key, &NoiseField::Hypothesis("B".into()));
        let (b, _) = noise_text(&a, &alphabet, &b_cfg, &mut rng)?;
        let c = replace_one_word(&a, &vocab, &mut rng);
        if a == b || c == a || c == b {
            continue;
        }
        triples.push(ChallengeTriple {
            pair_id: format!("{}-{}", seg.key.doc_id, seg.key.seg_index),
            pair: EquivalentPair {
                key: seg.key.clone(),
                source: seg.source.clone(),
                reference: noisy.reference.clone(),
                hyp_a: a,
                hyp_b: b,
                system_a: "clean".into(),
                system_b: "noised".into(),
            },
            hyp_c: c,
            operation: EditOperation::Substitution,
            edited_from: Variant::A,
        });
    }
    Ok(triples)
}

/// Replaces one whitespace token of `text` with a different word of `vocab`.
pub fn replace_one_word(text: &str, vocab: &[String], rng: &mut ChaCha8Rng) -> String {
    let spans = token_spans(text);
    if spans.is_empty() || vocab.len() < 2 {
        return text.to_string();
    }
    let (start, end) = spans[rng.gen_range(0..spans.len())];
    let old = &text[start..end];
    let new = loop {
        let w = vocab.choose(rng).unwrap();
        if w != old {
            break w;
        }
    };
    format!("{}{}{}", &text[..start], new, &text[end..])
}

/// Paths of one dialect's bundle files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFiles {
    pub label: String,
    pub lang_pair: String,
    pub dataset: PathBuf,
    pub judgments: PathBuf,
    pub triples: PathBuf,
}

/// Writes `<label>.jsonl`, `<label>.judgments.tsv` and `<label>.triples.tsv`
/// per dialect into `dir`.
pub fn write_bundle(dir: &Path, dialects: &[SynthDialect]) -> io::Result<Vec<BundleFiles>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for d in dialects {
        let files = BundleFiles {
            label: d.label.clone(),
            lang_pair: d.dataset.lang_pair.clone(),
            dataset: dir.join(format!("{}.jsonl", d.label)),
            judgments: dir.join(format!("{}.judgments.tsv", d.label)),
            triples: dir.join(format!("{}.triples.tsv", d.label)),
        };
        d.dataset.write_jsonl(BufWriter::new(fs::File::create(&files.dataset)?))?;
        d.judgments.write_tsv(BufWriter::new(fs::File::create(&files.judgments)?))?;
        write_triples(&d.triples, BufWriter::new(fs::File::create(&files.triples)?))?;
        out.push(files);
    }
    Ok(out)
}

/// Writes triples in the completed-worksheet format.
pub fn write_triples<W: io::Write>(triples: &[ChallengeTriple], w: W) -> io::Result<()> {
    let sheet = Worksheet {
        rows: triples
            .iter()
            .map(|t| WorksheetRow {
                pair_id: t.pair_id.clone(),
                pair: t.pair.clone(),
                operation: t.operation,
                edited_from: t.edited_from,
            })
            .collect(),
    };
    let hyp_c: BTreeMap<&str, &str> = triples.iter().map(|t| (t.pair_id.as_str(), t.hyp_c.as_str())).collect();
    sheet.write_filled_tsv(w, |id| hyp_c.get(id).copied().unwrap_or(""))
}
