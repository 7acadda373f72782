//! BLEU and chrF/chrF++ at corpus and segment level.
//!
//! Both metrics follow the semantics of the common reference scorer for the
//! signatures
//!
//! ```text
//! BLEU: nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp
//! chrF: nrefs:1|case:mixed|eff:yes|nc:6|nw:0|space:no
//! ```
//!
//! which are what [`BleuConfig::default`] and [`ChrfConfig::default`] produce.
//! Only a single reference per segment is supported.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{EvalDataset, Level, ScoreKey, ScoreTable, SegmentKey};
use crate::tokenize::{char_ngrams_upto, split_edge_punctuation, tokenize_13a, word_ngrams};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("hypothesis and reference counts differ ({hyps} vs {refs})")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot parse signature {0:?}")]
    Signature(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// A metric value in `[0, 100]` plus named diagnostic components.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScore {
    pub value: f64,
    pub components: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BleuTokenizer {
    #[default]
    ThirteenA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Each successive order with zero matches halves the pseudo-count.
    #[default]
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuConfig {
    pub max_order: usize,
    pub tokenizer: BleuTokenizer,
    pub smoothing: Smoothing,
    pub effective_order: bool,
    pub lowercase: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_order: 4,
            tokenizer: BleuTokenizer::ThirteenA,
            smoothing: Smoothing::Exponential,
            effective_order: false,
            lowercase: false,
        }
    }
}

impl BleuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(MetricError::InvalidConfig("max_order must be >= 1".into()));
        }
        Ok(())
    }

    /// The configuration used for single-segment scores: identical except
    /// that effective order is on, so short segments are not zeroed out by
    /// orders they cannot contain.
    pub fn sentence_config(&self) -> Self {
        Self {
            effective_order: true,
            ..self.clone()
        }
    }

    pub fn signature(&self) -> String {
        let mut s = format!(
            "nrefs:1|case:{}|eff:{}|tok:13a|smooth:exp",
            if self.lowercase { "lc" } else { "mixed" },
            yes_no(self.effective_order)
        );
        if self.max_order != 4 {
            s.push_str(&format!("|order:{}", self.max_order));
        }
        s
    }
}

impl fmt::Display for BleuConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature())
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn parse_yes_no(v: &str, sig: &str) -> Result<bool> {
    match v {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(MetricError::Signature(sig.to_string())),
    }
}

fn signature_fields(sig: &str) -> Result<Vec<(&str, &str)>> {
    sig.split('|')
        .map(|kv| kv.split_once(':').ok_or_else(|| MetricError::Signature(sig.to_string())))
        .collect()
}

impl FromStr for BleuConfig {
    type Err = MetricError;

    fn from_str(sig: &str) -> Result<Self> {
        let bad = || MetricError::Signature(sig.to_string());
        let mut cfg = BleuConfig::default();
        for (k, v) in signature_fields(sig)? {
            match k {
                "nrefs" if v == "1" => {}
                "case" => {
                    cfg.lowercase = match v {
                        "lc" => true,
                        "mixed" => false,
                        _ => return Err(bad()),
                    }
                }
                "eff" => cfg.effective_order = parse_yes_no(v, sig)?,
                "tok" if v == "13a" => cfg.tokenizer = BleuTokenizer::ThirteenA,
                "smooth" if v == "exp" => cfg.smoothing = Smoothing::Exponential,
                "order" => cfg.max_order = v.parse().map_err(|_| bad())?,
                "version" => {}
                _ => return Err(bad()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sufficient statistics for BLEU; additive over segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub hyp_len: usize,
    pub ref_len: usize,
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
}

impl BleuStats {
    fn zero(max_order: usize) -> Self {
        Self {
            hyp_len: 0,
            ref_len: 0,
            matches: vec![0; max_order],
            totals: vec![0; max_order],
        }
    }

    fn add(&mut self, other: &BleuStats) {
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
    }
}

fn bleu_tokens(text: &str, cfg: &BleuConfig) -> Vec<String> {
    let BleuTokenizer::ThirteenA = cfg.tokenizer;
    if cfg.lowercase {
        tokenize_13a(&text.to_lowercase()).into_inner()
    } else {
        tokenize_13a(text).into_inner()
    }
}

pub fn bleu_segment_stats(hyp: &str, reference: &str, cfg: &BleuConfig) -> BleuStats {
    let h = bleu_tokens(hyp, cfg);
    let r = bleu_tokens(reference, cfg);
    let mut stats = BleuStats::zero(cfg.max_order);
    stats.hyp_len = h.len();
    stats.ref_len = r.len();
    for n in 1..=cfg.max_order {
        let hc = word_ngrams(&h, n);
        let rc = word_ngrams(&r, n);
        stats.totals[n - 1] = hc.total();
        stats.matches[n - 1] = hc.overlap(&rc);
    }
    stats
}

/// BLEU from accumulated statistics.
pub fn bleu_from_stats(stats: &BleuStats, cfg: &BleuConfig) -> MetricScore {
    let max_order = cfg.max_order;
    let bp = if stats.hyp_len == 0 {
        0.0
    } else if stats.hyp_len < stats.ref_len {
        (1.0 - stats.ref_len as f64 / stats.hyp_len as f64).exp()
    } else {
        1.0
    };

    let mut components = BTreeMap::new();
    components.insert("bp".to_string(), bp);
    components.insert("hyp_len".to_string(), stats.hyp_len as f64);
    components.insert("ref_len".to_string(), stats.ref_len as f64);

    let mut precisions = vec![0.0; max_order];
    let mut value = 0.0;
    if stats.matches.iter().any(|&m| m > 0) {
        let mut smooth = 1.0;
        let mut used = max_order;
        for (n, (p, (&total, &matched))) in precisions
            .iter_mut()
            .zip(stats.totals.iter().zip(&stats.matches))
            .enumerate()
        {
            if total == 0 {
                // orders beyond the hypothesis length: precision stays 0
                break;
            }
            if cfg.effective_order {
                used = n + 1;
            }
            *p = if matched == 0 {
                smooth *= 2.0;
                1.0 / (smooth * total as f64)
            } else {
                matched as f64 / total as f64
            };
        }
        let used_p = &precisions[..used];
        if used_p.iter().all(|&p| p > 0.0) {
            let log_mean = used_p.iter().map(|p| p.ln()).sum::<f64>() / used as f64;
            value = 100.0 * bp * log_mean.exp();
        }
    }
    for (n, p) in precisions.iter().enumerate() {
        components.insert(format!("p{}", n + 1), *p);
    }
    MetricScore {
        value: value.clamp(0.0, 100.0),
        components,
    }
}

fn check_lengths<A, B>(hyps: &[A], refs: &[B]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

/// Corpus-level BLEU: n-gram statistics are summed over segments before the
/// precisions are formed.
pub fn bleu_corpus<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    cfg: &BleuConfig,
) -> Result<MetricScore> {
    cfg.validate()?;
    check_lengths(hyps, refs)?;
    let mut total = BleuStats::zero(cfg.max_order);
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&bleu_segment_stats(h.as_ref(), r.as_ref(), cfg));
    }
    Ok(bleu_from_stats(&total, cfg))
}

/// Segment-level BLEU with [`BleuConfig::sentence_config`].
pub fn bleu_sentence(hyp: &str, reference: &str, cfg: &BleuConfig) -> MetricScore {
    let cfg = cfg.sentence_config();
    bleu_from_stats(&bleu_segment_stats(hyp, reference, &cfg), &cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChrfConfig {
    pub char_order: usize,
    /// 0 for chrF, 2 for chrF++.
    pub word_order: usize,
    pub beta: f64,
    pub remove_space: bool,
    pub effective_order: bool,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        Self {
            char_order: 6,
            word_order: 0,
            beta: 2.0,
            remove_space: true,
            effective_order: true,
        }
    }
}

impl ChrfConfig {
    pub fn chrf_plus_plus() -> Self {
        Self {
            word_order: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.char_order == 0 {
            return Err(MetricError::InvalidConfig("char_order must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(MetricError::InvalidConfig("beta must be > 0".into()));
        }
        Ok(())
    }

    pub fn metric_id(&self) -> &'static str {
        if self.word_order == 0 {
            "chrF"
        } else {
            "chrF++"
        }
    }

    pub fn signature(&self) -> String {
        let mut s = format!(
            "nrefs:1|case:mixed|eff:{}|nc:{}|nw:{}|space:{}",
            yes_no(self.effective_order),
            self.char_order,
            self.word_order,
            yes_no(!self.remove_space)
        );
        if self.beta != 2.0 {
            s.push_str(&format!("|beta:{}", self.beta));
        }
        s
    }

    fn orders(&self) -> usize {
        self.char_order + self.word_order
    }
}

impl fmt::Display for ChrfConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature())
    }
}

impl FromStr for ChrfConfig {
    type Err = MetricError;

    fn from_str(sig: &str) -> Result<Self> {
        let bad = || MetricError::Signature(sig.to_string());
        let mut cfg = ChrfConfig::default();
        for (k, v) in signature_fields(sig)? {
            match k {
                "nrefs" if v == "1" => {}
                "case" if v == "mixed" => {}
                "eff" => cfg.effective_order = parse_yes_no(v, sig)?,
                "nc" => cfg.char_order = v.parse().map_err(|_| bad())?,
                "nw" => cfg.word_order = v.parse().map_err(|_| bad())?,
                "space" => cfg.remove_space = !parse_yes_no(v, sig)?,
                "beta" => cfg.beta = v.parse().map_err(|_| bad())?,
                "version" => {}
                _ => return Err(bad()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-order `(hyp_total, ref_total, matches)`, character orders first, then
/// word orders. Additive over segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChrfStats(pub Vec<[usize; 3]>);

impl ChrfStats {
    fn zero(orders: usize) -> Self {
        Self(vec![[0; 3]; orders])
    }

    fn add(&mut self, other: &ChrfStats) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for i in 0..3 {
                a[i] += b[i];
            }
        }
    }
}

pub fn chrf_segment_stats(hyp: &str, reference: &str, cfg: &ChrfConfig) -> ChrfStats {
    let mut hyp_grams = char_ngrams_upto(hyp, cfg.char_order, cfg.remove_space);
    let mut ref_grams = char_ngrams_upto(reference, cfg.char_order, cfg.remove_space);
    if cfg.word_order > 0 {
        let hw = split_edge_punctuation(hyp);
        let rw = split_edge_punctuation(reference);
        for n in 1..=cfg.word_order {
            hyp_grams.push(word_ngrams(&hw, n));
            ref_grams.push(word_ngrams(&rw, n));
        }
    }
    ChrfStats(
        hyp_grams
            .iter()
            .zip(&ref_grams)
            .map(|(h, r)| [h.total(), r.total(), h.overlap(r)])
            .collect(),
    )
}

/// chrF from accumulated statistics.
///
/// With effective order, precision and recall are averaged over the orders
/// for which both sides have at least one n-gram. Without it, a per-order
/// F-score is computed (absent sides count as 1e-16) and averaged over all
/// orders.
pub fn chrf_from_stats(stats: &ChrfStats, cfg: &ChrfConfig) -> MetricScore {
    const EPS: f64 = 1e-16;
    let factor = cfg.beta * cfg.beta;
    let mut avg_p = 0.0;
    let mut avg_r = 0.0;
    let mut eff = 0usize;
    let mut f_sum = 0.0;
    for &[n_hyp, n_ref, n_match] in &stats.0 {
        let p = if n_hyp > 0 {
            n_match as f64 / n_hyp as f64
        } else {
            EPS
        };
        let r = if n_ref > 0 {
            n_match as f64 / n_ref as f64
        } else {
            EPS
        };
        let denom = factor * p + r;
        f_sum += if denom > 0.0 {
            (1.0 + factor) * p * r / denom
        } else {
            EPS
        };
        if n_hyp > 0 && n_ref > 0 {
            avg_p += p;
            avg_r += r;
            eff += 1;
        }
    }

    let mut components = BTreeMap::new();
    let value = if cfg.effective_order {
        if eff > 0 {
            avg_p /= eff as f64;
            avg_r /= eff as f64;
        } else {
            avg_p = 0.0;
            avg_r = 0.0;
        }
        components.insert("precision".to_string(), avg_p);
        components.insert("recall".to_string(), avg_r);
        components.insert("effective_orders".to_string(), eff as f64);
        if avg_p + avg_r > 0.0 {
            100.0 * (1.0 + factor) * avg_p * avg_r / (factor * avg_p + avg_r)
        } else {
            0.0
        }
    } else {
        100.0 * f_sum / stats.0.len() as f64
    };
    MetricScore {
        value: value.clamp(0.0, 100.0),
        components,
    }
}

/// Corpus-level chrF: statistics are summed over segments first.
pub fn chrf_corpus<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    cfg: &ChrfConfig,
) -> Result<MetricScore> {
    cfg.validate()?;
    check_lengths(hyps, refs)?;
    let mut total = ChrfStats::zero(cfg.orders());
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&chrf_segment_stats(h.as_ref(), r.as_ref(), cfg));
    }
    Ok(chrf_from_stats(&total, cfg))
}

pub fn chrf_sentence(hyp: &str, reference: &str, cfg: &ChrfConfig) -> MetricScore {
    chrf_from_stats(&chrf_segment_stats(hyp, reference, cfg), cfg)
}

/// A string metric together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum StringMetric {
    Bleu(BleuConfig),
    Chrf(ChrfConfig),
}

impl StringMetric {
    pub fn metric_id(&self) -> &'static str {
        match self {
            StringMetric::Bleu(_) => "BLEU",
            StringMetric::Chrf(c) => c.metric_id(),
        }
    }

    pub fn signature(&self) -> String {
        match self {
            StringMetric::Bleu(c) => c.signature(),
            StringMetric::Chrf(c) => c.signature(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StringMetric::Bleu(c) => c.validate(),
            StringMetric::Chrf(c) => c.validate(),
        }
    }

    /// Segment-level score of one hypothesis.
    pub fn sentence(&self, hyp: &str, reference: &str) -> f64 {
        match self {
            StringMetric::Bleu(c) => bleu_sentence(hyp, reference, c).value,
            StringMetric::Chrf(c) => chrf_sentence(hyp, reference, c).value,
        }
    }

    pub fn corpus<H: AsRef<str>, R: AsRef<str>>(&self, hyps: &[H], refs: &[R]) -> Result<f64> {
        Ok(match self {
            StringMetric::Bleu(c) => bleu_corpus(hyps, refs, c)?.value,
            StringMetric::Chrf(c) => chrf_corpus(hyps, refs, c)?.value,
        })
    }
}

/// Scores every hypothesis of the dataset. The system table holds corpus-level
/// scores over each system's full output, not means of segment scores.
pub fn score_dataset(
    metric: &StringMetric,
    dataset: &EvalDataset,
) -> Result<(ScoreTable, ScoreTable)> {
    metric.validate()?;
    let systems: Vec<&str> = dataset.system_ids().collect();
    let segments = dataset.segments();
    if segments.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }

    let cells: Vec<(usize, usize)> = (0..systems.len())
        .flat_map(|s| (0..segments.len()).map(move |g| (s, g)))
        .collect();
    let seg_scores: Vec<f64> = cells
        .par_iter()
        .map(|&(s, g)| {
            let seg = &segments[g];
            let hyp = dataset.hypothesis(systems[s], &seg.key).unwrap_or("");
            metric.sentence(hyp, &seg.reference)
        })
        .collect();
    let sys_scores: Vec<f64> = systems
        .par_iter()
        .map(|sys| {
            let hyps: Vec<&str> = segments
                .iter()
                .map(|seg| dataset.hypothesis(sys, &seg.key).unwrap_or(""))
                .collect();
            let refs: Vec<&str> = segments.iter().map(|s| s.reference.as_str()).collect();
            metric.corpus(&hyps, &refs)
        })
        .collect::<Result<_>>()?;

    let id = metric.metric_id();
    let mut seg_table = ScoreTable::new(id, Level::Segment);
    for (&(s, g), v) in cells.iter().zip(seg_scores) {
        let key: SegmentKey = segments[g].key.clone();
        seg_table
            .entries
            .insert(ScoreKey::segment(systems[s], key), v);
    }
    let mut sys_table = ScoreTable::new(id, Level::System);
    for (sys, v) in systems.iter().zip(sys_scores) {
        sys_table.entries.insert(ScoreKey::system(sys), v);
    }
    Ok((seg_table, sys_table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LoadOptions, Segment};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn bleu_perfect_match() {
        let s = bleu_corpus(&["the cat sat on the mat"], &["the cat sat on the mat"], &BleuConfig::default()).unwrap();
        assert!(close(s.value, 100.0));
    }

    #[test]
    fn bleu_worked_example() {
        let s = bleu_corpus(&["the cat sat on mat"], &["the cat sat on the mat"], &BleuConfig::default()).unwrap();
        let c = &s.components;
        assert!(close(c["p1"], 1.0));
        assert!(close(c["p2"], 0.75));
        assert!(close(c["p3"], 2.0 / 3.0));
        assert!(close(c["p4"], 0.5));
        assert!(close(c["bp"], (-0.2f64).exp()));
        // 100 * exp(-0.2) * 0.25^(1/4); the reference scorer reports 57.89
        assert!(close(s.value, 57.893_006_746_741_01));
    }

    #[test]
    fn bleu_no_matches_is_zero() {
        let s = bleu_corpus(&["xx yy"], &["aa bb"], &BleuConfig::default()).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn bleu_smoothing_applies_to_zero_orders() {
        // one unigram match, no higher-order matches
        let cfg = BleuConfig::default();
        let s = bleu_corpus(&["a x b y"], &["a c d e"], &cfg).unwrap();
        let c = &s.components;
        assert!(close(c["p1"], 0.25));
        assert!(close(c["p2"], 1.0 / (2.0 * 3.0)));
        assert!(close(c["p3"], 1.0 / (4.0 * 2.0)));
        assert!(close(c["p4"], 1.0 / (8.0 * 1.0)));
        let want = 100.0 * (0.25f64 * (1.0 / 6.0) * (1.0 / 8.0) * (1.0 / 8.0)).powf(0.25);
        assert!(close(s.value, want));
    }

    #[test]
    fn bleu_empty_hypothesis() {
        let s = bleu_sentence("", "a b c", &BleuConfig::default());
        assert_eq!(s.value, 0.0);
        assert_eq!(s.components["bp"], 0.0);
    }

    #[test]
    fn bleu_short_sentence_uses_effective_order() {
        assert!(close(bleu_sentence("a b", "a b", &BleuConfig::default()).value, 100.0));
        // corpus level keeps eff:no, so the missing orders zero it
        assert_eq!(bleu_corpus(&["a b"], &["a b"], &BleuConfig::default()).unwrap().value, 0.0);
    }

    #[test]
    fn bleu_errors() {
        let cfg = BleuConfig::default();
        assert_eq!(
            bleu_corpus::<&str, &str>(&[], &[], &cfg).unwrap_err(),
            MetricError::EmptyCorpus
        );
        assert!(matches!(
            bleu_corpus(&["a"], &["a", "b"], &cfg),
            Err(MetricError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn chrf_cases() {
        let cfg = ChrfConfig::default();
        assert!(close(chrf_sentence("Grüezi mitenand", "Grüezi mitenand", &cfg).value, 100.0));
        assert_eq!(chrf_sentence("", "abc", &cfg).value, 0.0);
        // reference scorer: 41.85983092446141 (chrF), 44.66608846487425 (chrF++)
        assert!(close(chrf_sentence("abcd", "abcd efgh", &cfg).value, 41.859_830_924_461_41));
        assert!(close(
            chrf_sentence("abcd", "abcd efgh", &ChrfConfig::chrf_plus_plus()).value,
            44.666_088_464_874_25
        ));
    }

    #[test]
    fn chrf_beta_one_is_symmetric() {
        let cfg = ChrfConfig {
            beta: 1.0,
            ..ChrfConfig::default()
        };
        let a = chrf_sentence("abcde fg", "abxde", &cfg).value;
        let b = chrf_sentence("abxde", "abcde fg", &cfg).value;
        assert!(close(a, b));
    }

    #[test]
    fn chrf_recall_weighted() {
        let cfg = ChrfConfig::default();
        let base = chrf_sentence("abcdef", "abcdef", &cfg).value;
        let junk = chrf_sentence("abcdef zzzzzz", "abcdef", &cfg).value;
        let short = chrf_sentence("abc", "abcdef", &cfg).value;
        assert!(junk < base);
        // losing half the recall hurts more than halving precision
        assert!(short < junk);
    }

    #[test]
    fn signatures_round_trip() {
        let b = BleuConfig::default();
        assert_eq!(b.signature(), "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp");
        assert_eq!(b.signature().parse::<BleuConfig>().unwrap(), b);
        let c = ChrfConfig::default();
        assert_eq!(c.signature(), "nrefs:1|case:mixed|eff:yes|nc:6|nw:0|space:no");
        assert_eq!(c.signature().parse::<ChrfConfig>().unwrap(), c);
        let pp = ChrfConfig::chrf_plus_plus();
        assert_eq!(pp.signature().parse::<ChrfConfig>().unwrap(), pp);
        assert!(
            "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp|version:2.3.0"
                .parse::<BleuConfig>()
                .is_ok()
        );
        assert!("tok:intl".parse::<BleuConfig>().is_err());
        assert!("beta:0".parse::<ChrfConfig>().is_err());
    }

    fn dataset(hyps: &[(&str, [&str; 2])], refs: [&str; 2]) -> EvalDataset {
        let segments = refs
            .iter()
            .enumerate()
            .map(|(i, r)| Segment {
                key: SegmentKey::new("d", i as u32),
                source: "src".into(),
                reference: r.to_string(),
            })
            .collect();
        let systems = hyps
            .iter()
            .map(|(sys, hs)| {
                (
                    sys.to_string(),
                    hs.iter()
                        .enumerate()
                        .map(|(i, h)| (SegmentKey::new("d", i as u32), h.to_string()))
                        .collect(),
                )
            })
            .collect();
        EvalDataset::new("en-gsw_be", segments, systems, &LoadOptions::default()).unwrap()
    }

    #[test]
    fn score_dataset_grid() {
        let refs = ["Sie händ s Huus verchauft.", "Mer gönd hei."];
        let ds = dataset(
            &[("copy", refs), ("other", ["Si hei ds Huus verchouft.", ""])],
            refs,
        );
        for metric in [
            StringMetric::Bleu(BleuConfig::default()),
            StringMetric::Chrf(ChrfConfig::default()),
        ] {
            let (seg, sys) = score_dataset(&metric, &ds).unwrap();
            assert_eq!(seg.len(), 4);
            assert_eq!(sys.len(), 2);
            assert!(close(sys.system_score("copy").unwrap(), 100.0));
            for i in 0..2 {
                assert!(close(seg.segment_score("copy", &SegmentKey::new("d", i)).unwrap(), 100.0));
            }
            assert_eq!(seg.segment_score("other", &SegmentKey::new("d", 1)), Some(0.0));
        }
    }
}
