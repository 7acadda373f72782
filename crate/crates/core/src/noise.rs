//! Character-level noise injection.
//!
//! A fixed share of the whitespace tokens of each sentence receives exactly
//! one character edit (substitution, deletion or insertion) drawn from a
//! per-language alphabet of frequent characters. Every sentence gets its own
//! RNG stream keyed by `(seed, doc_id, seg_index, field)`, so results do not
//! depend on iteration order or thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{EvalDataset, Segment, SegmentKey};
use crate::tokenize::{is_split_whitespace, token_spans, TokenList};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("noise rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("no noise operations enabled")]
    NoOperations,
    #[error("alphabet for {0:?} is empty but substitution/insertion is enabled")]
    EmptyAlphabet(String),
    #[error("no alphabet for language {0:?}")]
    MissingAlphabet(String),
    #[error("unknown noise {kind} {value:?}")]
    Unknown { kind: &'static str, value: String },
}

pub type Result<T> = std::result::Result<T, NoiseError>;

/// Characters of one language that occur more than `min_count` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub language: String,
    pub min_count: u64,
    pub counts: BTreeMap<char, u64>,
    chars: Vec<char>,
}

impl Alphabet {
    pub fn from_counts(language: impl Into<String>, counts: BTreeMap<char, u64>, min_count: u64) -> Self {
        let counts: BTreeMap<char, u64> = counts
            .into_iter()
            .filter(|(c, _)| !is_split_whitespace(*c))
            .collect();
        let chars = counts
            .iter()
            .filter(|(_, &n)| n > min_count)
            .map(|(&c, _)| c)
            .collect();
        Self {
            language: language.into(),
            min_count,
            counts,
            chars,
        }
    }

    /// Retained characters in code-point order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.binary_search(&c).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    /// SHA-256 over the retained characters and their counts.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.language.as_bytes());
        h.update([0]);
        for &c in &self.chars {
            h.update(format!("{}:{};", c as u32, self.counts[&c]).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Counts every non-whitespace code point of `corpus`.
pub fn build_alphabet<I, S>(corpus: I, language: &str, min_count: u64) -> Alphabet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<char, u64> = BTreeMap::new();
    let mut lines = 0usize;
    for line in corpus {
        lines += 1;
        for c in line.as_ref().chars() {
            if !is_split_whitespace(c) {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
    }
    let alphabet = Alphabet::from_counts(language, counts, min_count);
    if lines == 0 {
        log::warn!("alphabet for {language:?} built from an empty corpus");
    } else if alphabet.is_empty() {
        log::warn!("no character of {language:?} occurs more than {min_count} times");
    }
    alphabet
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseOp {
    Substitute,
    Delete,
    Insert,
}

impl NoiseOp {
    pub const ALL: [NoiseOp; 3] = [NoiseOp::Substitute, NoiseOp::Delete, NoiseOp::Insert];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseOp::Substitute => "substitute",
            NoiseOp::Delete => "delete",
            NoiseOp::Insert => "insert",
        }
    }
}

impl fmt::Display for NoiseOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseOp {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "substitute" | "sub" => Ok(NoiseOp::Substitute),
            "delete" | "del" => Ok(NoiseOp::Delete),
            "insert" | "ins" => Ok(NoiseOp::Insert),
            _ => Err(NoiseError::Unknown {
                kind: "operation",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTarget {
    Source,
    Hypothesis,
    Reference,
}

impl NoiseTarget {
    pub const ALL: [NoiseTarget; 3] = [
        NoiseTarget::Source,
        NoiseTarget::Hypothesis,
        NoiseTarget::Reference,
    ];
}

impl FromStr for NoiseTarget {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" | "src" => Ok(NoiseTarget::Source),
            "hypothesis" | "hyp" | "translation" => Ok(NoiseTarget::Hypothesis),
            "reference" | "ref" => Ok(NoiseTarget::Reference),
            _ => Err(NoiseError::Unknown {
                kind: "target",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub rate: f64,
    pub seed: u64,
    pub operations: BTreeSet<NoiseOp>,
    pub targets: BTreeSet<NoiseTarget>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            rate: 0.15,
            seed: 0,
            operations: NoiseOp::ALL.into_iter().collect(),
            targets: NoiseTarget::ALL.into_iter().collect(),
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(NoiseError::InvalidRate(self.rate));
        }
        if self.operations.is_empty() {
            return Err(NoiseError::NoOperations);
        }
        Ok(())
    }

    fn needs_alphabet(&self) -> bool {
        self.operations.contains(&NoiseOp::Substitute) || self.operations.contains(&NoiseOp::Insert)
    }

    /// Number of tokens edited in a sentence of `n` tokens: `rate * n`
    /// rounded half up, no minimum.
    pub fn edits_for(&self, n: usize) -> usize {
        // the epsilon absorbs representation error such as 0.15 * 30 = 4.4999...
        let k = (self.rate * n as f64 + 0.5 + 1e-9).floor() as usize;
        k.min(n)
    }
}

/// One character-level edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEdit {
    pub token: usize,
    pub op: NoiseOp,
    /// Character (code point) offset within the original token.
    pub pos: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub old: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub new: Option<String>,
}

pub type NoiseLog = Vec<NoiseEdit>;

fn edit_token(
    token: &str,
    index: usize,
    op: NoiseOp,
    alphabet: &Alphabet,
    rng: &mut ChaCha8Rng,
) -> (String, NoiseEdit) {
    let mut chars: Vec<char> = token.chars().collect();
    let mut op = op;
    if op == NoiseOp::Delete && chars.len() == 1 {
        op = NoiseOp::Substitute;
    }
    if op == NoiseOp::Substitute {
        let pos = rng.gen_range(0..chars.len());
        let old = chars[pos];
        let pool: Vec<char> = alphabet.chars().iter().copied().filter(|&c| c != old).collect();
        if !pool.is_empty() {
            let new = pool[rng.gen_range(0..pool.len())];
            chars[pos] = new;
            let edit = NoiseEdit {
                token: index,
                op,
                pos,
                old: Some(old.to_string()),
                new: Some(new.to_string()),
            };
            return (chars.into_iter().collect(), edit);
        }
        // only the original character is available
        op = NoiseOp::Insert;
    }
    match op {
        NoiseOp::Delete => {
            let pos = rng.gen_range(0..chars.len());
            let old = chars.remove(pos);
            let edit = NoiseEdit {
                token: index,
                op,
                pos,
                old: Some(old.to_string()),
                new: None,
            };
            (chars.into_iter().collect(), edit)
        }
        NoiseOp::Insert => {
            let pos = rng.gen_range(0..=chars.len());
            let new = alphabet.chars()[rng.gen_range(0..alphabet.len())];
            chars.insert(pos, new);
            let edit = NoiseEdit {
                token: index,
                op,
                pos,
                old: None,
                new: Some(new.to_string()),
            };
            (chars.into_iter().collect(), edit)
        }
        NoiseOp::Substitute => unreachable!(),
    }
}

fn plan_edits(
    n_tokens: usize,
    cfg: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, NoiseOp)> {
    let k = cfg.edits_for(n_tokens);
    let mut picked = sample(rng, n_tokens, k).into_vec();
    picked.sort_unstable();
    let ops: Vec<NoiseOp> = cfg.operations.iter().copied().collect();
    picked
        .into_iter()
        .map(|i| (i, ops[rng.gen_range(0..ops.len())]))
        .collect()
}

fn check_alphabet(alphabet: &Alphabet, cfg: &NoiseConfig) -> Result<()> {
    if cfg.needs_alphabet() && alphabet.is_empty() {
        return Err(NoiseError::EmptyAlphabet(alphabet.language.clone()));
    }
    Ok(())
}

/// Noises a token list.
pub fn noise_sentence(
    tokens: &TokenList,
    alphabet: &Alphabet,
    cfg: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(TokenList, NoiseLog)> {
    cfg.validate()?;
    if tokens.is_empty() {
        return Ok((tokens.clone(), Vec::new()));
    }
    let plan = plan_edits(tokens.len(), cfg, rng);
    if !plan.is_empty() {
        check_alphabet(alphabet, cfg)?;
    }
    let mut out: Vec<String> = tokens.to_vec();
    let mut log = Vec::with_capacity(plan.len());
    for (i, op) in plan {
        let (t, edit) = edit_token(&tokens[i], i, op, alphabet, rng);
        out[i] = t;
        log.push(edit);
    }
    Ok((TokenList::new(out), log))
}

/// Noises raw text, leaving every byte outside the edited tokens untouched.
pub fn noise_text(
    text: &str,
    alphabet: &Alphabet,
    cfg: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(String, NoiseLog)> {
    cfg.validate()?;
    let spans = token_spans(text);
    if spans.is_empty() {
        return Ok((text.to_string(), Vec::new()));
    }
    let plan = plan_edits(spans.len(), cfg, rng);
    if plan.is_empty() {
        return Ok((text.to_string(), Vec::new()));
    }
    check_alphabet(alphabet, cfg)?;
    let mut out = String::with_capacity(text.len() + plan.len() * 4);
    let mut log = Vec::with_capacity(plan.len());
    let mut cursor = 0;
    for (i, op) in plan {
        let (start, end) = spans[i];
        let (t, edit) = edit_token(&text[start..end], i, op, alphabet, rng);
        out.push_str(&text[cursor..start]);
        out.push_str(&t);
        cursor = end;
        log.push(edit);
    }
    out.push_str(&text[cursor..]);
    Ok((out, log))
}

/// Which text of a segment a log refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NoiseField {
    Source,
    Reference,
    Hypothesis(String),
}

impl fmt::Display for NoiseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseField::Source => f.write_str("source"),
            NoiseField::Reference => f.write_str("reference"),
            NoiseField::Hypothesis(sys) => write!(f, "hypothesis:{sys}"),
        }
    }
}

/// Seeds the RNG stream of one (segment, field).
pub fn stream_rng(seed: u64, key: &SegmentKey, field: &NoiseField) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [key.doc_id.as_str(), &key.seg_index.to_string(), &field.to_string()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Noise log of one (segment, field); also the sidecar JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldLog {
    pub doc_id: String,
    pub seg_index: u32,
    pub field: String,
    pub edits: NoiseLog,
}

/// Applies noise to every targeted field of every segment. Logs are ordered
/// by segment key, then source, reference, hypotheses by system id. Fields
/// without edits produce no log entry.
pub fn noise_dataset(
    dataset: &EvalDataset,
    alphabets: &BTreeMap<String, Alphabet>,
    cfg: &NoiseConfig,
) -> Result<(EvalDataset, Vec<FieldLog>)> {
    cfg.validate()?;
    let (src_lang, tgt_lang) = dataset.languages();
    let lookup = |lang: &str| {
        alphabets
            .get(lang)
            .ok_or_else(|| NoiseError::MissingAlphabet(lang.to_string()))
    };
    let src_alpha = if cfg.targets.contains(&NoiseTarget::Source) {
        Some(lookup(src_lang)?)
    } else {
        None
    };
    let tgt_alpha = if cfg.targets.contains(&NoiseTarget::Reference)
        || cfg.targets.contains(&NoiseTarget::Hypothesis)
    {
        Some(lookup(tgt_lang)?)
    } else {
        None
    };
    let systems: Vec<&str> = dataset.system_ids().collect();

    type SegOut = (Segment, Vec<(String, String)>, Vec<FieldLog>);
    let results: Vec<SegOut> = dataset
        .segments()
        .par_iter()
        .map(|seg| -> Result<SegOut> {
            let mut logs = Vec::new();
            let mut run = |text: &str, field: NoiseField, alpha: &Alphabet| -> Result<String> {
                let mut rng = stream_rng(cfg.seed, &seg.key, &field);
                let (noised, edits) = noise_text(text, alpha, cfg, &mut rng)?;
                if !edits.is_empty() {
                    logs.push(FieldLog {
                        doc_id: seg.key.doc_id.clone(),
                        seg_index: seg.key.seg_index,
                        field: field.to_string(),
                        edits,
                    });
                }
                Ok(noised)
            };
            let source = match src_alpha {
                Some(a) => run(&seg.source, NoiseField::Source, a)?,
                None => seg.source.clone(),
            };
            let reference = match (tgt_alpha, cfg.targets.contains(&NoiseTarget::Reference)) {
                (Some(a), true) => run(&seg.reference, NoiseField::Reference, a)?,
                _ => seg.reference.clone(),
            };
            let mut hyps = Vec::with_capacity(systems.len());
            for sys in &systems {
                let hyp = dataset.hypothesis(sys, &seg.key).unwrap_or_default();
                let text = match (tgt_alpha, cfg.targets.contains(&NoiseTarget::Hypothesis)) {
                    (Some(a), true) => run(hyp, NoiseField::Hypothesis(sys.to_string()), a)?,
                    _ => hyp.to_string(),
                };
                hyps.push((sys.to_string(), text));
            }
            Ok((
                Segment {
                    key: seg.key.clone(),
                    source,
                    reference,
                },
                hyps,
                logs,
            ))
        })
        .collect::<Result<_>>()?;

    let mut segments = Vec::with_capacity(results.len());
    let mut grid: BTreeMap<String, BTreeMap<SegmentKey, String>> = BTreeMap::new();
    let mut logs = Vec::new();
    for (seg, hyps, seg_logs) in results {
        for (sys, text) in hyps {
            grid.entry(sys).or_default().insert(seg.key.clone(), text);
        }
        logs.extend(seg_logs);
        segments.push(seg);
    }
    Ok((dataset.with_texts(segments, grid), logs))
}

/// Levenshtein distance over code points.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
