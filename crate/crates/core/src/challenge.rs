//! Challenge sets of spelling-variant hypothesis pairs.
//!
//! Two hypotheses that humans rated perfect for the same segment form an
//! equivalent pair (A, B). An annotator adds a meaning-changed variant C,
//! and a metric succeeds on the triple when
//! `|s_A - s_B| < min(s_A, s_B) - s_C`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{average_judgments, EvalDataset, JudgmentSet, ScoreKey, SegmentKey};
use crate::metrics::StringMetric;
use crate::noise::levenshtein;
use crate::tsv;

#[derive(Debug, Error)]
pub enum ChallengeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no triples to score")]
    NoTriples,
    #[error("triple {pair_id}, hypothesis {variant}: {message}")]
    Scorer {
        pair_id: String,
        variant: Variant,
        message: String,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

pub type Result<T> = std::result::Result<T, ChallengeError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalentPair {
    pub key: SegmentKey,
    pub source: String,
    pub reference: String,
    pub hyp_a: String,
    pub hyp_b: String,
    pub system_a: String,
    pub system_b: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOperation {
    Deletion,
    Insertion,
    Substitution,
}

impl EditOperation {
    pub const ALL: [EditOperation; 3] = [
        EditOperation::Deletion,
        EditOperation::Insertion,
        EditOperation::Substitution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EditOperation::Deletion => "deletion",
            EditOperation::Insertion => "insertion",
            EditOperation::Substitution => "substitution",
        }
    }
}

impl fmt::Display for EditOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditOperation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deletion" => Ok(EditOperation::Deletion),
            "insertion" => Ok(EditOperation::Insertion),
            "substitution" => Ok(EditOperation::Substitution),
            other => Err(format!("unknown operation {other:?}")),
        }
    }
}

/// Which hypothesis of a triple a score belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
    C,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::C => "C",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            "C" | "c" => Ok(Variant::C),
            other => Err(format!("expected A, B or C, found {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeTriple {
    pub pair_id: String,
    pub pair: EquivalentPair,
    pub hyp_c: String,
    pub operation: EditOperation,
    pub edited_from: Variant,
}

impl ChallengeTriple {
    pub fn hypothesis(&self, variant: Variant) -> &str {
        match variant {
            Variant::A => &self.pair.hyp_a,
            Variant::B => &self.pair.hyp_b,
            Variant::C => &self.hyp_c,
        }
    }
}

/// Unordered pairs of distinct hypotheses whose aggregated human score
/// reaches `threshold`, per segment. Systems are visited in sorted order and
/// the first system producing a string represents it.
pub fn extract_perfect_pairs(
    dataset: &EvalDataset,
    judgments: &JudgmentSet,
    threshold: f64,
) -> Result<Vec<EquivalentPair>> {
    let human = average_judgments(judgments)?;
    let mut perfect: BTreeMap<&SegmentKey, Vec<(&str, &str)>> = BTreeMap::new();
    for sys in dataset.system_ids() {
        for seg in dataset.segments() {
            let Some(score) = human.get(&ScoreKey::segment(sys, seg.key.clone())) else {
                continue;
            };
            if score < threshold {
                continue;
            }
            let Some(hyp) = dataset.hypothesis(sys, &seg.key) else {
                continue;
            };
            let hyps = perfect.entry(&seg.key).or_default();
            if !hyps.iter().any(|(_, h)| *h == hyp) {
                hyps.push((sys, hyp));
            }
        }
    }
    let mut pairs = Vec::new();
    for (key, hyps) in perfect {
        let seg = dataset.segment(key).expect("key from dataset");
        for i in 0..hyps.len() {
            for j in i + 1..hyps.len() {
                pairs.push(EquivalentPair {
                    key: key.clone(),
                    source: seg.source.clone(),
                    reference: seg.reference.clone(),
                    hyp_a: hyps[i].1.to_string(),
                    hyp_b: hyps[j].1.to_string(),
                    system_a: hyps[i].0.to_string(),
                    system_b: hyps[j].0.to_string(),
                });
            }
        }
    }
    Ok(pairs)
}

pub const WORKSHEET_HEADER: [&str; 10] = [
    "pair_id",
    "doc_id",
    "seg_index",
    "source",
    "reference",
    "hyp_a",
    "hyp_b",
    "operation",
    "edited_from",
    "hyp_c",
];

/// Provenance columns appended after the fixed worksheet columns.
pub const WORKSHEET_EXTRA: [&str; 2] = ["system_a", "system_b"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorksheetRow {
    pub pair_id: String,
    pub pair: EquivalentPair,
    pub operation: EditOperation,
    pub edited_from: Variant,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Worksheet {
    pub rows: Vec<WorksheetRow>,
}

impl Worksheet {
    /// Writes the worksheet with an empty `hyp_c` column to fill in.
    pub fn write_tsv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.write_filled_tsv(w, |_| "")
    }

    /// Writes the worksheet with `hyp_c` looked up by pair id.
    pub fn write_filled_tsv<'a, W: Write>(&self, mut w: W, hyp_c: impl Fn(&str) -> &'a str) -> std::io::Result<()> {
        let header: Vec<&str> = WORKSHEET_HEADER.iter().chain(&WORKSHEET_EXTRA).copied().collect();
        writeln!(w, "{}", header.join("\t"))?;
        for row in &self.rows {
            let p = &row.pair;
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                tsv::escape(&row.pair_id),
                tsv::escape(&p.key.doc_id),
                p.key.seg_index,
                tsv::escape(&p.source),
                tsv::escape(&p.reference),
                tsv::escape(&p.hyp_a),
                tsv::escape(&p.hyp_b),
                row.operation,
                row.edited_from,
                tsv::escape(hyp_c(&row.pair_id)),
                tsv::escape(&p.system_a),
                tsv::escape(&p.system_b),
            )?;
        }
        Ok(())
    }
}

/// Assigns each pair a uniformly drawn operation and edit target.
pub fn make_worksheet(pairs: &[EquivalentPair], seed: u64) -> Worksheet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = pairs.len().max(1).to_string().len();
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let operation = EditOperation::ALL[rng.gen_range(0..3)];
            let edited_from = if rng.gen_bool(0.5) { Variant::A } else { Variant::B };
            WorksheetRow {
                pair_id: format!("p{:0width$}", i + 1),
                pair: pair.clone(),
                operation,
                edited_from,
            }
        })
        .collect();
    Worksheet { rows }
}

/// A worksheet row that did not yield a triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub pair_id: String,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} ({}): {}", self.line, self.pair_id, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedTriples {
    pub triples: Vec<ChallengeTriple>,
    pub rejected: Vec<Rejection>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| ChallengeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Reads a completed worksheet. Missing columns are a format error; rows
/// that violate a triple invariant are returned as rejections.
pub fn load_triples(path: &Path) -> Result<LoadedTriples> {
    let lines = read_lines(path)?;
    let has_systems = lines
        .first()
        .map(|h| WORKSHEET_EXTRA.iter().all(|c| h.split('\t').any(|f| f.trim_end_matches('\r') == *c)))
        .unwrap_or(false);
    let mut columns: Vec<&str> = WORKSHEET_HEADER.to_vec();
    if has_systems {
        columns.extend(WORKSHEET_EXTRA);
    }
    let rows = tsv::parse_named(&lines, &columns).map_err(|(line, message)| ChallengeError::Format {
        path: path.to_path_buf(),
        line,
        message,
    })?;

    let mut out = LoadedTriples::default();
    let mut seen = BTreeSet::new();
    for (line, f) in rows {
        let pair_id = f[0].clone();
        let reject = |reason: String| Rejection {
            line,
            pair_id: pair_id.clone(),
            reason,
        };
        if !seen.insert(pair_id.clone()) {
            out.rejected.push(reject("duplicate pair_id".into()));
            continue;
        }
        let seg_index = match f[2].trim().parse::<u32>() {
            Ok(v) => v,
            Err(_) => {
                out.rejected.push(reject(format!("bad seg_index {:?}", f[2])));
                continue;
            }
        };
        let operation = match f[7].parse::<EditOperation>() {
            Ok(op) => op,
            Err(e) => {
                out.rejected.push(reject(e));
                continue;
            }
        };
        let edited_from = match f[8].parse::<Variant>() {
            Ok(Variant::C) | Err(_) => {
                out.rejected.push(reject(format!("edited_from must be A or B, found {:?}", f[8])));
                continue;
            }
            Ok(v) => v,
        };
        let (hyp_a, hyp_b, hyp_c) = (&f[5], &f[6], &f[9]);
        let reason = if hyp_c.trim().is_empty() {
            Some("hyp_c is empty")
        } else if hyp_a == hyp_b {
            Some("hyp_a equals hyp_b")
        } else if hyp_c == hyp_a {
            Some("hyp_c equals hyp_a")
        } else if hyp_c == hyp_b {
            Some("hyp_c equals hyp_b")
        } else {
            None
        };
        if let Some(reason) = reason {
            out.rejected.push(reject(reason.into()));
            continue;
        }
        let (system_a, system_b) = if has_systems {
            (f[10].clone(), f[11].clone())
        } else {
            (String::new(), String::new())
        };
        out.triples.push(ChallengeTriple {
            pair_id: pair_id.clone(),
            pair: EquivalentPair {
                key: SegmentKey::new(f[1].clone(), seg_index),
                source: f[3].clone(),
                reference: f[4].clone(),
                hyp_a: hyp_a.clone(),
                hyp_b: hyp_b.clone(),
                system_a,
                system_b,
            },
            hyp_c: hyp_c.clone(),
            operation,
            edited_from,
        });
    }
    Ok(out)
}

/// Success iff `|s_a - s_b| < min(s_a, s_b) - s_c`; ties fail.
pub fn triple_success(s_a: f64, s_b: f64, s_c: f64) -> bool {
    (s_a - s_b).abs() < s_a.min(s_b) - s_c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleOutcome {
    pub pair_id: String,
    pub s_a: f64,
    pub s_b: f64,
    pub s_c: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub outcomes: Vec<TripleOutcome>,
    pub successes: usize,
    pub success_rate: f64,
}

impl SuccessReport {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// Success rate with a `(source, reference, hypothesis)` scorer.
pub fn success_rate<F, E>(triples: &[ChallengeTriple], scorer: F) -> Result<SuccessReport>
where
    F: Fn(&str, &str, &str) -> std::result::Result<f64, E> + Sync,
    E: fmt::Display,
{
    success_rate_with(triples, |t, v| {
        scorer(&t.pair.source, &t.pair.reference, t.hypothesis(v)).map_err(|e| e.to_string())
    })
}

/// Success rate with a scorer that sees the whole triple, e.g. a lookup
/// into precomputed scores.
pub fn success_rate_with<F>(triples: &[ChallengeTriple], scorer: F) -> Result<SuccessReport>
where
    F: Fn(&ChallengeTriple, Variant) -> std::result::Result<f64, String> + Sync,
{
    if triples.is_empty() {
        return Err(ChallengeError::NoTriples);
    }
    let outcomes = triples
        .par_iter()
        .map(|t| {
            let score = |v| {
                scorer(t, v).map_err(|message| ChallengeError::Scorer {
                    pair_id: t.pair_id.clone(),
                    variant: v,
                    message,
                })
            };
            let (s_a, s_b, s_c) = (score(Variant::A)?, score(Variant::B)?, score(Variant::C)?);
            Ok(TripleOutcome {
                pair_id: t.pair_id.clone(),
                s_a,
                s_b,
                s_c,
                success: triple_success(s_a, s_b, s_c),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let successes = outcomes.iter().filter(|o| o.success).count();
    Ok(SuccessReport {
        success_rate: successes as f64 / outcomes.len() as f64,
        successes,
        outcomes,
    })
}

/// Scorers computed in-process against the reference.
#[derive(Debug, Clone, PartialEq)]
pub enum TripleScorer {
    Metric(StringMetric),
    /// Negative character edit distance to the reference.
    NegEditDistance,
}

impl TripleScorer {
    pub fn metric_id(&self) -> &str {
        match self {
            TripleScorer::Metric(m) => m.metric_id(),
            TripleScorer::NegEditDistance => "neg_edit_distance",
        }
    }

    pub fn score(&self, reference: &str, hypothesis: &str) -> std::result::Result<f64, String> {
        if reference.is_empty() {
            return Err("reference-based scorer needs a reference".into());
        }
        Ok(match self {
            TripleScorer::Metric(m) => m.sentence(hypothesis, reference),
            TripleScorer::NegEditDistance => -(levenshtein(hypothesis, reference) as f64),
        })
    }
}

pub const TRIPLE_SCORE_HEADER: [&str; 4] = ["metric_id", "pair_id", "variant", "score"];

/// Precomputed triple scores keyed by metric, then `(pair_id, variant)`.
pub type TripleScores = BTreeMap<String, BTreeMap<(String, Variant), f64>>;

pub fn load_triple_scores(path: &Path) -> Result<TripleScores> {
    let lines = read_lines(path)?;
    let fmt_err = |line: usize, message: String| ChallengeError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let rows = tsv::parse_table(&lines, &TRIPLE_SCORE_HEADER).map_err(|(l, m)| fmt_err(l, m))?;
    let mut out = TripleScores::new();
    for (line, f) in rows {
        let variant: Variant = f[2].parse().map_err(|e| fmt_err(line, e))?;
        let score: f64 = f[3]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| fmt_err(line, format!("score {:?} is not a finite number", f[3])))?;
        let prev = out
            .entry(f[0].clone())
            .or_default()
            .insert((f[1].clone(), variant), score);
        if prev.is_some() {
            return Err(fmt_err(line, format!("duplicate score for {} {}", f[1], variant)));
        }
    }
    Ok(out)
}

/// Success rate from one metric's precomputed scores.
pub fn success_rate_from_scores(
    triples: &[ChallengeTriple],
    scores: &BTreeMap<(String, Variant), f64>,
) -> Result<SuccessReport> {
    success_rate_with(triples, |t, v| {
        scores
            .get(&(t.pair_id.clone(), v))
            .copied()
            .ok_or_else(|| "no score".to_string())
    })
}
