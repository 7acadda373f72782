//! Evaluation data model: documents, segments, system outputs, human
//! judgments and score tables, plus the JSONL/TSV loaders that produce them.
//!
//! All text is NFC-normalized at load time. Every loaded structure is
//! immutable afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::tsv;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate segment key {0}")]
    DuplicateSegment(SegmentKey),
    #[error("incomplete system grid, missing: {}", format_missing(.0))]
    IncompleteGrid(Vec<(String, SegmentKey)>),
    #[error("segment {0} has an empty source")]
    EmptySource(SegmentKey),
    #[error("segment {0} has an empty reference (pass allow_missing_reference to permit)")]
    EmptyReference(SegmentKey),
    #[error("score {score} out of range [0, 100] at line {line}")]
    ScoreOutOfRange { line: usize, score: f64 },
    #[error("unknown system {system:?} at line {line}")]
    UnknownSystem { line: usize, system: String },
    #[error("unknown segment {key} at line {line}")]
    UnknownSegment { line: usize, key: SegmentKey },
    #[error("duplicate score key at line {line}")]
    DuplicateScore { line: usize },
    #[error("score file mixes segment and system rows (line {line})")]
    MixedLevels { line: usize },
    #[error("score file declares more than one metric id ({0:?}, {1:?})")]
    MixedMetrics(String, String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("expected a {expected} level table, got {actual}")]
    WrongLevel { expected: Level, actual: Level },
}

fn format_missing(missing: &[(String, SegmentKey)]) -> String {
    let shown: Vec<String> = missing
        .iter()
        .take(20)
        .map(|(sys, key)| format!("({sys:?}, {:?}, {})", key.doc_id, key.seg_index))
        .collect();
    let mut out = shown.join(", ");
    if missing.len() > 20 {
        out.push_str(&format!(" ... and {} more", missing.len() - 20));
    }
    out
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Position of a segment: document id plus index within the document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub doc_id: String,
    pub seg_index: u32,
}

impl SegmentKey {
    pub fn new(doc_id: impl Into<String>, seg_index: u32) -> Self {
        Self {
            doc_id: doc_id.into(),
            seg_index,
        }
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.seg_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub key: SegmentKey,
    pub source: String,
    pub reference: String,
}

/// Dialect region of the target side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dialect {
    Be,
    Zh,
    Other(String),
}

impl Dialect {
    /// Derives the dialect from a language pair such as `en-gsw_be`.
    pub fn from_lang_pair(lang_pair: &str) -> Self {
        let target = lang_pair.rsplit('-').next().unwrap_or(lang_pair);
        let region = target.rsplit('_').next().unwrap_or(target);
        Self::from_label(region)
    }

    pub fn from_label(label: &str) -> Self {
        match label.to_ascii_lowercase().as_str() {
            "be" => Dialect::Be,
            "zh" => Dialect::Zh,
            _ => Dialect::Other(label.to_string()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Dialect::Be => "BE",
            Dialect::Zh => "ZH",
            Dialect::Other(s) => s,
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One language pair + dialect: segments and a complete system/hypothesis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset {
    pub lang_pair: String,
    pub dialect: Dialect,
    segments: Vec<Segment>,
    systems: BTreeMap<String, BTreeMap<SegmentKey, String>>,
}

impl EvalDataset {
    /// Builds and validates a dataset. Text is NFC-normalized and segments
    /// sorted by key.
    pub fn new(
        lang_pair: impl Into<String>,
        segments: Vec<Segment>,
        systems: BTreeMap<String, BTreeMap<SegmentKey, String>>,
        opts: &LoadOptions,
    ) -> Result<Self> {
        let lang_pair = lang_pair.into();
        let mut segments: Vec<Segment> = segments
            .into_iter()
            .map(|s| Segment {
                key: s.key,
                source: nfc(&s.source),
                reference: nfc(&s.reference),
            })
            .collect();
        segments.sort_by(|a, b| a.key.cmp(&b.key));
        for w in segments.windows(2) {
            if w[0].key == w[1].key {
                return Err(CorpusError::DuplicateSegment(w[0].key.clone()));
            }
        }
        for s in &segments {
            if s.source.is_empty() {
                return Err(CorpusError::EmptySource(s.key.clone()));
            }
            if s.reference.is_empty() && !opts.allow_missing_reference {
                return Err(CorpusError::EmptyReference(s.key.clone()));
            }
        }

        let systems: BTreeMap<String, BTreeMap<SegmentKey, String>> = systems
            .into_iter()
            .map(|(sys, hyps)| (sys, hyps.into_iter().map(|(k, h)| (k, nfc(&h))).collect()))
            .collect();

        let mut missing = Vec::new();
        for (sys, hyps) in &systems {
            for s in &segments {
                if !hyps.contains_key(&s.key) {
                    missing.push((sys.clone(), s.key.clone()));
                }
            }
        }
        if !missing.is_empty() {
            return Err(CorpusError::IncompleteGrid(missing));
        }
        let known: BTreeSet<&SegmentKey> = segments.iter().map(|s| &s.key).collect();
        for hyps in systems.values() {
            if let Some(k) = hyps.keys().find(|k| !known.contains(k)) {
                return Err(CorpusError::UnknownSegment {
                    line: 0,
                    key: k.clone(),
                });
            }
        }

        let dialect = opts
            .dialect
            .clone()
            .unwrap_or_else(|| Dialect::from_lang_pair(&lang_pair));
        Ok(Self {
            lang_pair,
            dialect,
            segments,
            systems,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, key: &SegmentKey) -> Option<&Segment> {
        self.segments
            .binary_search_by(|s| s.key.cmp(key))
            .ok()
            .map(|i| &self.segments[i])
    }

    pub fn system_ids(&self) -> impl Iterator<Item = &str> {
        self.systems.keys().map(String::as_str)
    }

    pub fn num_systems(&self) -> usize {
        self.systems.len()
    }

    pub fn has_system(&self, system: &str) -> bool {
        self.systems.contains_key(system)
    }

    pub fn hypotheses(&self, system: &str) -> Option<&BTreeMap<SegmentKey, String>> {
        self.systems.get(system)
    }

    pub fn hypothesis(&self, system: &str, key: &SegmentKey) -> Option<&str> {
        self.systems.get(system)?.get(key).map(String::as_str)
    }

    /// Source-side and target-side language codes of `lang_pair`.
    pub fn languages(&self) -> (&str, &str) {
        match self.lang_pair.split_once('-') {
            Some((src, tgt)) => (src, tgt),
            None => (self.lang_pair.as_str(), self.lang_pair.as_str()),
        }
    }

    /// Returns a copy with the given texts substituted. Callers must keep the
    /// grid shape; used by the noise injector.
    pub(crate) fn with_texts(
        &self,
        segments: Vec<Segment>,
        systems: BTreeMap<String, BTreeMap<SegmentKey, String>>,
    ) -> Self {
        Self {
            lang_pair: self.lang_pair.clone(),
            dialect: self.dialect.clone(),
            segments,
            systems,
        }
    }

    /// Writes the dataset as JSONL, one record per segment in key order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for seg in &self.segments {
            let hypotheses: BTreeMap<&str, &str> = self
                .systems
                .iter()
                .map(|(sys, hyps)| (sys.as_str(), hyps[&seg.key].as_str()))
                .collect();
            let record = DatasetRecordOut {
                doc_id: &seg.key.doc_id,
                seg_index: seg.key.seg_index,
                source: &seg.source,
                reference: &seg.reference,
                hypotheses,
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub(crate) fn nfc(s: &str) -> String {
    s.nfc().collect()
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Accept empty references (reference-free scoring scenarios).
    pub allow_missing_reference: bool,
    /// Overrides the dialect derived from the language pair.
    pub dialect: Option<Dialect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    doc_id: String,
    seg_index: u32,
    source: String,
    #[serde(default)]
    reference: String,
    hypotheses: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct DatasetRecordOut<'a> {
    doc_id: &'a str,
    seg_index: u32,
    source: &'a str,
    reference: &'a str,
    hypotheses: BTreeMap<&'a str, &'a str>,
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    open(path)?
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads a dataset file. Blank lines are skipped.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    lang_pair: &str,
    opts: &LoadOptions,
) -> Result<EvalDataset> {
    let DatasetFormat::Jsonl = format;
    let mut segments = Vec::new();
    let mut systems: BTreeMap<String, BTreeMap<SegmentKey, String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let key = SegmentKey::new(nfc(&rec.doc_id), rec.seg_index);
        if !seen.insert(key.clone()) {
            return Err(CorpusError::DuplicateSegment(key));
        }
        for (sys, hyp) in rec.hypotheses {
            systems
                .entry(nfc(&sys))
                .or_default()
                .insert(key.clone(), hyp);
        }
        segments.push(Segment {
            key,
            source: rec.source,
            reference: rec.reference,
        });
    }
    if segments.is_empty() {
        return Err(CorpusError::Empty("dataset has no segments"));
    }
    EvalDataset::new(lang_pair, segments, systems, opts)
}

/// One human rating.
#[derive(Debug, Clone, PartialEq)]
pub struct Judgment {
    pub system_id: String,
    pub key: SegmentKey,
    pub rater_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentSet {
    pub records: Vec<Judgment>,
    pub aggregation: Aggregation,
}

impl JudgmentSet {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", JUDGMENT_HEADER.join("\t"))?;
        for j in &self.records {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                tsv::escape(&j.system_id),
                tsv::escape(&j.key.doc_id),
                j.key.seg_index,
                tsv::escape(&j.rater_id),
                j.score
            )?;
        }
        Ok(())
    }
}

pub const JUDGMENT_HEADER: [&str; 5] = ["system_id", "doc_id", "seg_index", "rater_id", "score"];
pub const SCORE_HEADER: [&str; 6] = [
    "metric_id",
    "level",
    "system_id",
    "doc_id",
    "seg_index",
    "score",
];

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_score(path: &Path, line: usize, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("score {raw:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("score {raw:?} is not finite")));
    }
    Ok(v)
}

fn parse_index(path: &Path, line: usize, raw: &str) -> Result<u32> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("seg_index {raw:?} is not a non-negative integer")))
}

/// Loads a judgments TSV and validates every row against `dataset`.
pub fn load_judgments(path: &Path, dataset: &EvalDataset) -> Result<JudgmentSet> {
    let lines = read_lines(path)?;
    let rows = tsv::parse_table(&lines, &JUDGMENT_HEADER)
        .map_err(|(line, msg)| parse_err(path, line, msg))?;
    let mut records = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let system_id = nfc(&fields[0]);
        let key = SegmentKey::new(nfc(&fields[1]), parse_index(path, line, &fields[2])?);
        let score = parse_score(path, line, &fields[4])?;
        if !(0.0..=100.0).contains(&score) {
            return Err(CorpusError::ScoreOutOfRange { line, score });
        }
        if !dataset.has_system(&system_id) {
            return Err(CorpusError::UnknownSystem {
                line,
                system: system_id,
            });
        }
        if dataset.segment(&key).is_none() {
            return Err(CorpusError::UnknownSegment { line, key });
        }
        records.push(Judgment {
            system_id,
            key,
            rater_id: fields[3].clone(),
            score,
        });
    }
    Ok(JudgmentSet {
        records,
        aggregation: Aggregation::Mean,
    })
}

/// Mean rater score per (system, segment).
pub fn average_judgments(judgments: &JudgmentSet) -> Result<ScoreTable> {
    if judgments.records.is_empty() {
        return Err(CorpusError::Empty("no judgments"));
    }
    // Scores are sorted per key before summing so the mean is independent of
    // rater order down to the last bit.
    let mut per_key: BTreeMap<ScoreKey, Vec<f64>> = BTreeMap::new();
    for j in &judgments.records {
        per_key
            .entry(ScoreKey::segment(&j.system_id, j.key.clone()))
            .or_default()
            .push(j.score);
    }
    let entries = per_key
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, mean)
        })
        .collect();
    Ok(ScoreTable {
        metric_id: "human".to_string(),
        level: Level::Segment,
        entries,
        higher_is_better: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Segment,
    System,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Segment => "segment",
            Level::System => "system",
        })
    }
}

/// `(system, segment)` at segment level, `(system, None)` at system level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreKey {
    pub system_id: String,
    pub segment: Option<SegmentKey>,
}

impl ScoreKey {
    pub fn segment(system_id: &str, key: SegmentKey) -> Self {
        Self {
            system_id: system_id.to_string(),
            segment: Some(key),
        }
    }

    pub fn system(system_id: &str) -> Self {
        Self {
            system_id: system_id.to_string(),
            segment: None,
        }
    }
}

/// Metric or human scores at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub metric_id: String,
    pub level: Level,
    pub entries: BTreeMap<ScoreKey, f64>,
    pub higher_is_better: bool,
}

impl ScoreTable {
    pub fn new(metric_id: impl Into<String>, level: Level) -> Self {
        Self {
            metric_id: metric_id.into(),
            level,
            entries: BTreeMap::new(),
            higher_is_better: true,
        }
    }

    pub fn get(&self, key: &ScoreKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn system_score(&self, system_id: &str) -> Option<f64> {
        self.entries.get(&ScoreKey::system(system_id)).copied()
    }

    pub fn segment_score(&self, system_id: &str, key: &SegmentKey) -> Option<f64> {
        self.entries
            .get(&ScoreKey::segment(system_id, key.clone()))
            .copied()
    }

    pub fn systems(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|k| k.system_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score with the sign flipped when lower is better, so statistics can
    /// always treat larger as preferred.
    pub fn oriented(&self, key: &ScoreKey) -> Option<f64> {
        self.get(key)
            .map(|v| if self.higher_is_better { v } else { -v })
    }

    /// Keys of the dataset grid absent from this segment-level table.
    pub fn missing_keys(&self, dataset: &EvalDataset) -> Vec<(String, SegmentKey)> {
        let mut missing = Vec::new();
        for sys in dataset.system_ids() {
            for seg in dataset.segments() {
                if !self
                    .entries
                    .contains_key(&ScoreKey::segment(sys, seg.key.clone()))
                {
                    missing.push((sys.to_string(), seg.key.clone()));
                }
            }
        }
        missing
    }

    /// Every key must name a known system (and segment, at segment level).
    pub fn validate(&self, dataset: &EvalDataset) -> Result<()> {
        for k in self.entries.keys() {
            if !dataset.has_system(&k.system_id) {
                return Err(CorpusError::UnknownSystem {
                    line: 0,
                    system: k.system_id.clone(),
                });
            }
            match (&k.segment, self.level) {
                (Some(seg), Level::Segment) => {
                    if dataset.segment(seg).is_none() {
                        return Err(CorpusError::UnknownSegment {
                            line: 0,
                            key: seg.clone(),
                        });
                    }
                }
                (None, Level::System) => {}
                _ => return Err(CorpusError::MixedLevels { line: 0 }),
            }
        }
        Ok(())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", SCORE_HEADER.join("\t"))?;
        for (k, v) in &self.entries {
            let (doc, idx) = match &k.segment {
                Some(s) => (tsv::escape(&s.doc_id), s.seg_index.to_string()),
                None => ("-".to_string(), "-".to_string()),
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                tsv::escape(&self.metric_id),
                self.level,
                tsv::escape(&k.system_id),
                doc,
                idx,
                v
            )?;
        }
        Ok(())
    }
}

/// Loads a scores TSV. Segment-level gaps against the dataset grid are
/// logged as warnings.
pub fn load_scores(path: &Path, dataset: &EvalDataset) -> Result<ScoreTable> {
    let lines = read_lines(path)?;
    let rows = tsv::parse_table(&lines, &SCORE_HEADER)
        .map_err(|(line, msg)| parse_err(path, line, msg))?;
    let mut table: Option<ScoreTable> = None;
    for (line, f) in rows {
        let level = match f[1].as_str() {
            "segment" | "seg" => Level::Segment,
            "system" | "sys" => Level::System,
            other => return Err(parse_err(path, line, format!("unknown level {other:?}"))),
        };
        let metric_id = nfc(&f[0]);
        let t = table.get_or_insert_with(|| ScoreTable::new(metric_id.clone(), level));
        if t.level != level {
            return Err(CorpusError::MixedLevels { line });
        }
        if t.metric_id != metric_id {
            return Err(CorpusError::MixedMetrics(t.metric_id.clone(), metric_id));
        }
        let system_id = nfc(&f[2]);
        if !dataset.has_system(&system_id) {
            return Err(CorpusError::UnknownSystem {
                line,
                system: system_id,
            });
        }
        let key = match level {
            Level::System => {
                if f[3] != "-" || f[4] != "-" {
                    return Err(parse_err(
                        path,
                        line,
                        "system-level rows need \"-\" for doc_id and seg_index",
                    ));
                }
                ScoreKey::system(&system_id)
            }
            Level::Segment => {
                let seg = SegmentKey::new(nfc(&f[3]), parse_index(path, line, &f[4])?);
                if dataset.segment(&seg).is_none() {
                    return Err(CorpusError::UnknownSegment { line, key: seg });
                }
                ScoreKey::segment(&system_id, seg)
            }
        };
        let score = parse_score(path, line, &f[5])?;
        if t.entries.insert(key, score).is_some() {
            return Err(CorpusError::DuplicateScore { line });
        }
    }
    let table = table.ok_or(CorpusError::Empty("score file has no rows"))?;
    if table.level == Level::Segment {
        let missing = table.missing_keys(dataset);
        if !missing.is_empty() {
            log::warn!(
                "{}: segment scores for {:?} do not cover the grid ({} missing)",
                path.display(),
                table.metric_id,
                missing.len()
            );
        }
    }
    Ok(table)
}

/// Per-system arithmetic mean of a complete segment-level table.
pub fn system_average(table: &ScoreTable, dataset: &EvalDataset) -> Result<ScoreTable> {
    if table.level != Level::Segment {
        return Err(CorpusError::WrongLevel {
            expected: Level::Segment,
            actual: table.level,
        });
    }
    let missing = table.missing_keys(dataset);
    if !missing.is_empty() {
        return Err(CorpusError::IncompleteGrid(missing));
    }
    let mut out = ScoreTable::new(table.metric_id.clone(), Level::System);
    out.higher_is_better = table.higher_is_better;
    for sys in dataset.system_ids() {
        // Key order, not file order, so the mean ignores segment reordering.
        let vals: Vec<f64> = dataset
            .segments()
            .iter()
            .map(|s| table.segment_score(sys, &s.key).unwrap_or(f64::NAN))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        out.entries.insert(ScoreKey::system(sys), mean);
    }
    Ok(out)
}
