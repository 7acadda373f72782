//! Meta-evaluation statistics: how well metric scores agree with human scores.
//!
//! System level: pairwise accuracy over system pairs whose human scores differ
//! significantly (two-sided Wilcoxon signed-rank test on paired segment
//! scores), and Pearson correlation. Segment level: Kendall tau over
//! within-segment system pairs, and accuracy with an optimized tie threshold.
//! Metric-vs-metric comparisons use a paired permutation test.
//!
//! All statistics treat larger values as better; tables with
//! `higher_is_better == false` are negated on extraction.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::{Level, ScoreKey, ScoreTable, SegmentKey};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("correlation undefined: constant input")]
    ConstantInput,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("need at least 2 systems, got {0}")]
    TooFewSystems(usize),
    #[error("no significantly different system pairs")]
    NoSignificantPairs,
    #[error("{metric}: {detail}")]
    Misaligned { metric: String, detail: String },
    #[error("{metric}: expected a {expected} level table")]
    WrongLevel { metric: String, expected: Level },
    #[error("permutation test needs at least 100 iterations, got {0}")]
    TooFewIterations(usize),
}

pub type Result<T> = std::result::Result<T, StatsError>;

impl StatsError {
    /// Short machine-readable reason used when a statistic is reported as
    /// undefined.
    pub fn reason_code(&self) -> &'static str {
        match self {
            StatsError::LengthMismatch(..) => "length_mismatch",
            StatsError::TooFewPoints { .. } => "too_few_points",
            StatsError::ConstantInput => "constant_input",
            StatsError::NoComparablePairs => "no_comparable_pairs",
            StatsError::TooFewSystems(_) => "too_few_systems",
            StatsError::NoSignificantPairs => "no_significant_pairs",
            StatsError::Misaligned { .. } => "misaligned",
            StatsError::WrongLevel { .. } => "wrong_level",
            StatsError::TooFewIterations(_) => "too_few_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub statistic: f64,
    pub n: usize,
    pub p_value: Option<f64>,
}

pub(crate) fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation with a two-sided t-test p-value (when n > 2).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewPoints { need: 2, got: n });
    }
    let r = pearson_r(x, y).ok_or(StatsError::ConstantInput)?;
    let p_value = if n > 2 {
        if r.abs() >= 1.0 {
            Some(0.0)
        } else {
            let df = (n - 2) as f64;
            let t = r * (df / (1.0 - r * r)).sqrt();
            StudentsT::new(0.0, 1.0, df)
                .ok()
                .map(|dist| (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0))
        }
    } else {
        None
    };
    Ok(CorrelationResult {
        statistic: r,
        n,
        p_value,
    })
}

fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Average (mid) ranks, 1-based, of `values`.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Largest number of non-zero differences handled by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped. With at most [`WILCOXON_EXACT_MAX`]
/// remaining differences the null distribution of the positive rank sum is
/// enumerated exactly (mid-ranks for tied magnitudes); otherwise the normal
/// approximation with tie and continuity correction is used. If every
/// difference is zero the p-value is 1.
pub fn wilcoxon_two_sided(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::TooFewPoints { need: 1, got: 0 });
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    Ok(wilcoxon_from_diffs(&diffs))
}

fn wilcoxon_from_diffs(diffs: &[f64]) -> f64 {
    let m = diffs.len();
    if m == 0 {
        return 1.0;
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let t_plus: f64 = ranks
        .iter()
        .zip(diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    if m <= WILCOXON_EXACT_MAX {
        wilcoxon_exact(&ranks, t_plus)
    } else {
        wilcoxon_normal(&abs, &ranks, t_plus)
    }
}

fn wilcoxon_exact(ranks: &[f64], t_plus: f64) -> f64 {
    // Mid-ranks are multiples of 1/2, so doubled ranks are integers and the
    // null distribution is a subset-sum count.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let t = (2.0 * t_plus).round() as usize;
    let all = (1u64 << ranks.len()) as f64;
    let lower: u64 = counts[..=t].iter().sum();
    let upper: u64 = counts[t..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

fn wilcoxon_normal(abs: &[f64], ranks: &[f64], t_plus: f64) -> f64 {
    let n = abs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted: Vec<f64> = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    debug_assert_eq!(ranks.len(), abs.len());
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((t_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Scores of one set of systems, aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemScores {
    pub systems: Vec<String>,
    pub values: Vec<f64>,
}

impl SystemScores {
    /// Extracts `systems` from a system-level table.
    pub fn from_table(table: &ScoreTable, systems: &[String]) -> Result<Self> {
        if table.level != Level::System {
            return Err(StatsError::WrongLevel {
                metric: table.metric_id.clone(),
                expected: Level::System,
            });
        }
        let mut values = Vec::with_capacity(systems.len());
        for sys in systems {
            let v = table
                .oriented(&ScoreKey::system(sys))
                .ok_or_else(|| StatsError::Misaligned {
                    metric: table.metric_id.clone(),
                    detail: format!("no system score for {sys:?}"),
                })?;
            values.push(v);
        }
        Ok(Self {
            systems: systems.to_vec(),
            values,
        })
    }
}

/// Segment-level scores as a systems x segments matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGrid {
    pub systems: Vec<String>,
    pub segments: Vec<SegmentKey>,
    /// `values[system][segment]`
    pub values: Vec<Vec<f64>>,
}

impl SegmentGrid {
    /// The grid spanned by every system and segment present in `table`,
    /// which must be complete over it.
    pub fn from_table_full(table: &ScoreTable) -> Result<Self> {
        let systems: Vec<String> = table.systems().into_iter().map(String::from).collect();
        let segments: Vec<SegmentKey> = table
            .entries
            .keys()
            .filter_map(|k| k.segment.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::from_table(table, &systems, &segments)
    }

    pub fn from_table(table: &ScoreTable, systems: &[String], segments: &[SegmentKey]) -> Result<Self> {
        if table.level != Level::Segment {
            return Err(StatsError::WrongLevel {
                metric: table.metric_id.clone(),
                expected: Level::Segment,
            });
        }
        let mut values = Vec::with_capacity(systems.len());
        let mut missing = 0usize;
        let mut example = None;
        for sys in systems {
            let mut row = Vec::with_capacity(segments.len());
            for seg in segments {
                match table.oriented(&ScoreKey::segment(sys, seg.clone())) {
                    Some(v) => row.push(v),
                    None => {
                        missing += 1;
                        example.get_or_insert_with(|| format!("({sys:?}, {seg})"));
                        row.push(f64::NAN);
                    }
                }
            }
            values.push(row);
        }
        if missing > 0 {
            return Err(StatsError::Misaligned {
                metric: table.metric_id.clone(),
                detail: format!("{missing} grid cells missing, e.g. {}", example.unwrap()),
            });
        }
        Ok(Self {
            systems: systems.to_vec(),
            segments: segments.to_vec(),
            values,
        })
    }

    pub fn num_systems(&self) -> usize {
        self.systems.len()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }
}

/// One compared system pair. Deltas are `score(sys_i) - score(sys_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemPair {
    pub sys_i: String,
    pub sys_j: String,
    pub human_delta: f64,
    pub metric_delta: f64,
    pub significant: bool,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub pairs: Vec<SystemPair>,
    /// Agreements over significant pairs; `None` when no pair is significant.
    pub accuracy: Option<f64>,
    pub n_significant: usize,
}

impl PairwiseResult {
    pub fn n_agree(&self) -> usize {
        self.pairs.iter().filter(|p| p.significant && p.agree).count()
    }

    fn from_pairs(pairs: Vec<SystemPair>) -> Self {
        let n_significant = pairs.iter().filter(|p| p.significant).count();
        let agree = pairs.iter().filter(|p| p.significant && p.agree).count();
        let accuracy = (n_significant > 0).then(|| agree as f64 / n_significant as f64);
        Self {
            pairs,
            accuracy,
            n_significant,
        }
    }

    /// Pools several results (e.g. one per dialect) into one accuracy.
    pub fn merge(results: &[PairwiseResult]) -> Self {
        Self::from_pairs(results.iter().flat_map(|r| r.pairs.iter().cloned()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOptions {
    pub alpha: f64,
    /// When false every pair counts, significant or not.
    pub gate: bool,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            gate: true,
        }
    }
}

/// Systems of the human segment table, in sorted order.
fn human_systems(human_seg: &ScoreTable) -> Vec<String> {
    human_seg.systems().into_iter().map(String::from).collect()
}

/// Significance of every unordered system pair (`i < j`) on the human grid.
pub fn significance_matrix(human: &SegmentGrid, opts: PairwiseOptions) -> Vec<(usize, usize, bool)> {
    let n = human.num_systems();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let significant = if opts.gate {
                let p = wilcoxon_two_sided(&human.values[i], &human.values[j]).unwrap_or(1.0);
                p < opts.alpha
            } else {
                true
            };
            out.push((i, j, significant));
        }
    }
    out
}

fn pairs_from_vectors(
    systems: &[String],
    human: &[f64],
    metric: &[f64],
    significance: &[(usize, usize, bool)],
) -> Vec<SystemPair> {
    significance
        .iter()
        .map(|&(i, j, significant)| {
            let human_delta = human[i] - human[j];
            let metric_delta = metric[i] - metric[j];
            SystemPair {
                sys_i: systems[i].clone(),
                sys_j: systems[j].clone(),
                human_delta,
                metric_delta,
                significant,
                agree: sign(human_delta) == sign(metric_delta),
            }
        })
        .collect()
}

/// Pairwise accuracy of `metric_sys` against `human_sys` over system pairs
/// whose per-segment human scores differ significantly.
pub fn pairwise_accuracy(
    human_sys: &ScoreTable,
    metric_sys: &ScoreTable,
    human_seg: &ScoreTable,
    opts: PairwiseOptions,
) -> Result<PairwiseResult> {
    let systems = human_systems(human_seg);
    if systems.len() < 2 {
        return Err(StatsError::TooFewSystems(systems.len()));
    }
    let human_grid = SegmentGrid::from_table_full(human_seg)?;
    let h = SystemScores::from_table(human_sys, &systems)?;
    let m = SystemScores::from_table(metric_sys, &systems)?;
    let sig = significance_matrix(&human_grid, opts);
    Ok(PairwiseResult::from_pairs(pairs_from_vectors(
        &systems, &h.values, &m.values, &sig,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KendallGrouping {
    /// Only systems' scores for the same segment are compared.
    #[default]
    WithinSegment,
}

/// `(human_delta, metric_delta)` for every within-segment system pair.
pub fn within_segment_pairs(human: &SegmentGrid, metric: &SegmentGrid) -> Vec<(f64, f64)> {
    let n = human.num_systems();
    let mut out = Vec::with_capacity(human.num_segments() * n * n.saturating_sub(1) / 2);
    for g in 0..human.num_segments() {
        for i in 0..n {
            for j in i + 1..n {
                out.push((
                    human.values[i][g] - human.values[j][g],
                    metric.values[i][g] - metric.values[j][g],
                ));
            }
        }
    }
    out
}

/// Kendall tau over pairs: human ties are dropped, metric ties count half
/// concordant and half discordant. Returns `(tau, comparable pairs)`.
pub fn kendall_from_pairs(pairs: &[(f64, f64)]) -> Option<(f64, usize)> {
    let mut concordant = 0.0;
    let mut discordant = 0.0;
    let mut n = 0usize;
    for &(h, m) in pairs {
        let sh = sign(h);
        if sh == 0 {
            continue;
        }
        n += 1;
        match sign(m) {
            0 => {
                concordant += 0.5;
                discordant += 0.5;
            }
            sm if sm == sh => concordant += 1.0,
            _ => discordant += 1.0,
        }
    }
    (n > 0).then(|| ((concordant - discordant) / (concordant + discordant), n))
}

fn aligned_grids(human_seg: &ScoreTable, metric_seg: &ScoreTable) -> Result<(SegmentGrid, SegmentGrid)> {
    let human = SegmentGrid::from_table_full(human_seg)?;
    let metric = SegmentGrid::from_table(metric_seg, &human.systems, &human.segments)?;
    Ok((human, metric))
}

/// Segment-level Kendall tau with within-segment pairing.
pub fn kendall_segment(
    human_seg: &ScoreTable,
    metric_seg: &ScoreTable,
    grouping: KendallGrouping,
) -> Result<CorrelationResult> {
    let KendallGrouping::WithinSegment = grouping;
    let (human, metric) = aligned_grids(human_seg, metric_seg)?;
    let (tau, n) =
        kendall_from_pairs(&within_segment_pairs(&human, &metric)).ok_or(StatsError::NoComparablePairs)?;
    Ok(CorrelationResult {
        statistic: tau,
        n,
        p_value: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieOptimizedResult {
    pub epsilon_star: f64,
    pub accuracy: f64,
    pub n_pairs: usize,
}

/// Accuracy of `{<, =, >}` labels at threshold `epsilon`: humans tie only
/// on exact equality, the metric ties when `|delta| <= epsilon`.
pub fn tie_accuracy_at(pairs: &[(f64, f64)], epsilon: f64) -> f64 {
    let correct = pairs
        .iter()
        .filter(|&&(h, m)| {
            let metric_label = if m.abs() <= epsilon { 0 } else { sign(m) };
            metric_label == sign(h)
        })
        .count();
    correct as f64 / pairs.len() as f64
}

/// Searches epsilon over 0, midpoints of consecutive distinct `|metric_delta|`
/// values and the largest `|metric_delta|`; returns the smallest maximizer.
pub fn tie_optimized_from_pairs(pairs: &[(f64, f64)]) -> Option<TieOptimizedResult> {
    if pairs.is_empty() {
        return None;
    }
    let mut by_abs: Vec<(f64, bool, bool)> = pairs
        .iter()
        .map(|&(h, m)| {
            let correct_untied = sign(h) != 0 && sign(h) == sign(m);
            let correct_tied = sign(h) == 0;
            (m.abs(), correct_tied, correct_untied)
        })
        .collect();
    by_abs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut correct: i64 = by_abs.iter().filter(|p| p.2).count() as i64;
    let mut best = (0.0, i64::MIN);
    let mut consider = |eps: f64, c: i64| {
        if c > best.1 {
            best = (eps, c);
        }
    };
    if by_abs[0].0 > 0.0 {
        consider(0.0, correct);
    }
    let mut i = 0;
    while i < by_abs.len() {
        let d = by_abs[i].0;
        let mut j = i;
        while j < by_abs.len() && by_abs[j].0 == d {
            correct += i64::from(by_abs[j].1) - i64::from(by_abs[j].2);
            j += 1;
        }
        if d == 0.0 {
            consider(0.0, correct);
        }
        let eps = if j < by_abs.len() {
            let next = by_abs[j].0;
            let mid = d + (next - d) / 2.0;
            // adjacent floats: the midpoint must not swallow the next group
            if mid < next {
                mid
            } else {
                d
            }
        } else {
            d
        };
        consider(eps, correct);
        i = j;
    }
    Some(TieOptimizedResult {
        epsilon_star: best.0,
        accuracy: best.1 as f64 / pairs.len() as f64,
        n_pairs: pairs.len(),
    })
}

/// Segment-level accuracy with an optimized metric tie threshold.
pub fn tie_optimized_accuracy(human_seg: &ScoreTable, metric_seg: &ScoreTable) -> Result<TieOptimizedResult> {
    let (human, metric) = aligned_grids(human_seg, metric_seg)?;
    tie_optimized_from_pairs(&within_segment_pairs(&human, &metric)).ok_or(StatsError::NoComparablePairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    PairwiseAccuracy,
    Pearson,
    TieOptimized,
    Kendall,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::PairwiseAccuracy => "pairwise_accuracy",
            Statistic::Pearson => "pearson",
            Statistic::TieOptimized => "tie_optimized_accuracy",
            Statistic::Kendall => "kendall",
        }
    }

    pub fn is_system_level(self) -> bool {
        matches!(self, Statistic::PairwiseAccuracy | Statistic::Pearson)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermOptions {
    pub iterations: usize,
    pub seed: u64,
    pub pairwise: PairwiseOptions,
}

impl Default for PermOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            seed: 0,
            pairwise: PairwiseOptions::default(),
        }
    }
}

/// Inputs for one permutation group (typically one dialect). `metric_a` and
/// `metric_b` are system-level tables for system-level statistics and
/// segment-level tables otherwise.
#[derive(Debug, Clone, Copy)]
pub struct PermInput<'a> {
    pub human_seg: &'a ScoreTable,
    pub human_sys: &'a ScoreTable,
    pub metric_a: &'a ScoreTable,
    pub metric_b: &'a ScoreTable,
}

fn standardize(values: &mut [f64]) {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = if sd > 0.0 { (*v - m) / sd } else { *v - m };
    }
}

struct SystemGroup {
    systems: Vec<String>,
    human: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    significance: Vec<(usize, usize, bool)>,
}

struct SegmentGroup {
    human: SegmentGrid,
    a: SegmentGrid,
    b: SegmentGrid,
}

enum Prepared {
    System(Vec<SystemGroup>),
    Segment(Vec<SegmentGroup>),
}

fn prepare(inputs: &[PermInput<'_>], statistic: Statistic, opts: &PermOptions) -> Result<Prepared> {
    if statistic.is_system_level() {
        let mut groups = Vec::with_capacity(inputs.len());
        for inp in inputs {
            let systems = human_systems(inp.human_seg);
            if systems.len() < 2 {
                return Err(StatsError::TooFewSystems(systems.len()));
            }
            let human_grid = SegmentGrid::from_table_full(inp.human_seg)?;
            let human = SystemScores::from_table(inp.human_sys, &systems)?.values;
            let mut a = SystemScores::from_table(inp.metric_a, &systems)?.values;
            let mut b = SystemScores::from_table(inp.metric_b, &systems)?.values;
            standardize(&mut a);
            standardize(&mut b);
            let significance = if statistic == Statistic::PairwiseAccuracy {
                significance_matrix(&human_grid, opts.pairwise)
            } else {
                Vec::new()
            };
            groups.push(SystemGroup {
                systems,
                human,
                a,
                b,
                significance,
            });
        }
        Ok(Prepared::System(groups))
    } else {
        let mut groups = Vec::with_capacity(inputs.len());
        for inp in inputs {
            let human = SegmentGrid::from_table_full(inp.human_seg)?;
            let mut a = SegmentGrid::from_table(inp.metric_a, &human.systems, &human.segments)?;
            let mut b = SegmentGrid::from_table(inp.metric_b, &human.systems, &human.segments)?;
            for grid in [&mut a, &mut b] {
                let mut flat: Vec<f64> = grid.values.iter().flatten().copied().collect();
                standardize(&mut flat);
                let cols = grid.num_segments();
                for (s, row) in grid.values.iter_mut().enumerate() {
                    row.copy_from_slice(&flat[s * cols..(s + 1) * cols]);
                }
            }
            groups.push(SegmentGroup { human, a, b });
        }
        Ok(Prepared::Segment(groups))
    }
}

fn system_statistic(statistic: Statistic, groups: &[SystemGroup], pick: &dyn Fn(usize) -> Vec<f64>) -> Option<f64> {
    match statistic {
        Statistic::PairwiseAccuracy => {
            let mut pairs = Vec::new();
            for (gi, g) in groups.iter().enumerate() {
                pairs.extend(pairs_from_vectors(&g.systems, &g.human, &pick(gi), &g.significance));
            }
            PairwiseResult::from_pairs(pairs).accuracy
        }
        Statistic::Pearson => {
            let mut h = Vec::new();
            let mut m = Vec::new();
            for (gi, g) in groups.iter().enumerate() {
                h.extend_from_slice(&g.human);
                m.extend(pick(gi));
            }
            pearson_r(&h, &m)
        }
        _ => unreachable!("segment statistic on system data"),
    }
}

fn segment_statistic(statistic: Statistic, pairs: &[(f64, f64)]) -> Option<f64> {
    match statistic {
        Statistic::Kendall => kendall_from_pairs(pairs).map(|(t, _)| t),
        Statistic::TieOptimized => tie_optimized_from_pairs(pairs).map(|r| r.accuracy),
        _ => unreachable!("system statistic on segment data"),
    }
}

fn segment_pairs_with(groups: &[SegmentGroup], pick: &dyn Fn(usize, usize, usize) -> f64) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let n = g.human.num_systems();
        for s in 0..g.human.num_segments() {
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((
                        g.human.values[i][s] - g.human.values[j][s],
                        pick(gi, i, s) - pick(gi, j, s),
                    ));
                }
            }
        }
    }
    pairs
}

/// One-sided paired permutation test of "metric A improves on metric B".
pub fn perm_significance(input: &PermInput<'_>, statistic: Statistic, opts: &PermOptions) -> Result<f64> {
    perm_significance_grouped(std::slice::from_ref(input), statistic, opts)
}

/// Like [`perm_significance`] with the statistic pooled over several groups.
///
/// Scores are z-normalized per metric and group first, which leaves every
/// statistic unchanged but puts both metrics on one scale. Each iteration
/// swaps A and B per system (system-level statistics) or per segment
/// (segment-level statistics) with probability 1/2; iteration `i` draws from
/// ChaCha stream `i` of `seed`, so the result is independent of thread
/// count. Returns the fraction of permuted deltas `stat(A) - stat(B)` that
/// reach the observed delta; a permuted statistic that is undefined counts
/// as 0.
pub fn perm_significance_grouped(
    inputs: &[PermInput<'_>],
    statistic: Statistic,
    opts: &PermOptions,
) -> Result<f64> {
    if opts.iterations < 100 {
        return Err(StatsError::TooFewIterations(opts.iterations));
    }
    let prepared = prepare(inputs, statistic, opts)?;
    let undefined = || match statistic {
        Statistic::PairwiseAccuracy => StatsError::NoSignificantPairs,
        Statistic::Pearson => StatsError::ConstantInput,
        _ => StatsError::NoComparablePairs,
    };
    const TOL: f64 = 1e-12;

    match prepared {
        Prepared::System(groups) => {
            let sa = system_statistic(statistic, &groups, &|g| groups[g].a.clone()).ok_or_else(undefined)?;
            let sb = system_statistic(statistic, &groups, &|g| groups[g].b.clone()).ok_or_else(undefined)?;
            let observed = sa - sb;
            let hits = (0..opts.iterations)
                .into_par_iter()
                .filter(|&it| {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                    rng.set_stream(it as u64);
                    let swaps: Vec<Vec<bool>> = groups
                        .iter()
                        .map(|g| (0..g.a.len()).map(|_| rng.gen_bool(0.5)).collect())
                        .collect();
                    let (groups, swaps) = (&groups, &swaps);
                    let pick = |side_a: bool| {
                        move |g: usize| -> Vec<f64> {
                            let grp = &groups[g];
                            (0..grp.a.len())
                                .map(|s| if swaps[g][s] == side_a { grp.b[s] } else { grp.a[s] })
                                .collect()
                        }
                    };
                    let pa = system_statistic(statistic, groups, &pick(true)).unwrap_or(0.0);
                    let pb = system_statistic(statistic, groups, &pick(false)).unwrap_or(0.0);
                    pa - pb >= observed - TOL
                })
                .count();
            Ok(hits as f64 / opts.iterations as f64)
        }
        Prepared::Segment(groups) => {
            let sa = segment_statistic(statistic, &segment_pairs_with(&groups, &|g, i, s| groups[g].a.values[i][s]))
                .ok_or_else(undefined)?;
            let sb = segment_statistic(statistic, &segment_pairs_with(&groups, &|g, i, s| groups[g].b.values[i][s]))
                .ok_or_else(undefined)?;
            let observed = sa - sb;
            let hits = (0..opts.iterations)
                .into_par_iter()
                .filter(|&it| {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                    rng.set_stream(it as u64);
                    let swaps: Vec<Vec<bool>> = groups
                        .iter()
                        .map(|g| (0..g.human.num_segments()).map(|_| rng.gen_bool(0.5)).collect())
                        .collect();
                    let pa_pairs = segment_pairs_with(&groups, &|g, i, s| {
                        if swaps[g][s] {
                            groups[g].b.values[i][s]
                        } else {
                            groups[g].a.values[i][s]
                        }
                    });
                    let pb_pairs = segment_pairs_with(&groups, &|g, i, s| {
                        if swaps[g][s] {
                            groups[g].a.values[i][s]
                        } else {
                            groups[g].b.values[i][s]
                        }
                    });
                    let pa = segment_statistic(statistic, &pa_pairs).unwrap_or(0.0);
                    let pb = segment_statistic(statistic, &pb_pairs).unwrap_or(0.0);
                    pa - pb >= observed - TOL
                })
                .count();
            Ok(hits as f64 / opts.iterations as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let r = pearson(&x, &x.map(|v| 2.0 * v + 1.0)).unwrap();
        assert!(close(r.statistic, 1.0));
        assert!(close(pearson(&x, &x.map(|v| -v)).unwrap().statistic, -1.0));
        // cov = 4/... hand computation: sxy = 4, sxx = syy = 5
        let r = pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!(close(r.statistic, 0.8));
        assert_eq!(r.n, 4);
        let p = r.p_value.unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(pearson(&x, &[1.0; 4]).unwrap_err(), StatsError::ConstantInput);
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(StatsError::TooFewPoints { .. })));
        assert!(matches!(pearson(&x, &[1.0]), Err(StatsError::LengthMismatch(4, 1))));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn wilcoxon_exact_values() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(wilcoxon_two_sided(&x, &x).unwrap(), 1.0);
        let zeros = [0.0; 5];
        assert!(close(wilcoxon_two_sided(&[1.0, 2.0, 3.0, 4.0, 5.0], &zeros).unwrap(), 0.0625));
        assert!(close(
            wilcoxon_two_sided(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.0; 6]).unwrap(),
            0.03125
        ));
        // symmetric in direction
        assert!(close(wilcoxon_two_sided(&zeros, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 0.0625));
        assert!(wilcoxon_two_sided(&[], &[]).is_err());
    }

    #[test]
    fn wilcoxon_normal_branch() {
        // 30 positive differences 1..30: T+ = 465, mean 232.5, var 2363.75
        let x: Vec<f64> = (1..=30).map(f64::from).collect();
        let p = wilcoxon_two_sided(&x, &[0.0; 30]).unwrap();
        let z = (465.0f64 - 232.5 - 0.5) / 2363.75f64.sqrt();
        assert!(close(p, erfc(z / std::f64::consts::SQRT_2)));
        assert!(p < 1e-5);
    }

    fn seg_table(id: &str, rows: &[(&str, u32, f64)]) -> ScoreTable {
        let mut t = ScoreTable::new(id, Level::Segment);
        for (sys, idx, v) in rows {
            t.entries.insert(ScoreKey::segment(sys, SegmentKey::new("d", *idx)), *v);
        }
        t
    }

    fn sys_table(id: &str, rows: &[(&str, f64)]) -> ScoreTable {
        let mut t = ScoreTable::new(id, Level::System);
        for (sys, v) in rows {
            t.entries.insert(ScoreKey::system(sys), *v);
        }
        t
    }

    #[test]
    fn pairwise_three_systems_ungated() {
        let human_seg = seg_table("human", &[("A", 0, 3.0), ("B", 0, 2.0), ("C", 0, 1.0)]);
        let human_sys = sys_table("human", &[("A", 3.0), ("B", 2.0), ("C", 1.0)]);
        let metric = sys_table("m", &[("A", 0.9), ("B", 0.1), ("C", 0.5)]);
        let opts = PairwiseOptions { alpha: 0.05, gate: false };
        let r = pairwise_accuracy(&human_sys, &metric, &human_seg, opts).unwrap();
        assert_eq!(r.n_significant, 3);
        assert!(close(r.accuracy.unwrap(), 2.0 / 3.0));

        let same = pairwise_accuracy(&human_sys, &human_sys, &human_seg, opts).unwrap();
        assert_eq!(same.accuracy, Some(1.0));
        let flipped = sys_table("neg", &[("A", -3.0), ("B", -2.0), ("C", -1.0)]);
        assert_eq!(pairwise_accuracy(&human_sys, &flipped, &human_seg, opts).unwrap().accuracy, Some(0.0));

        // with the gate on, one segment can never be significant
        let gated = pairwise_accuracy(&human_sys, &metric, &human_seg, PairwiseOptions::default()).unwrap();
        assert_eq!(gated.n_significant, 0);
        assert_eq!(gated.accuracy, None);
    }

    #[test]
    fn pairwise_respects_lower_is_better() {
        let human_seg = seg_table("human", &[("A", 0, 3.0), ("B", 0, 1.0)]);
        let human_sys = sys_table("human", &[("A", 3.0), ("B", 1.0)]);
        let mut ter = sys_table("ter", &[("A", 0.2), ("B", 0.6)]);
        ter.higher_is_better = false;
        let opts = PairwiseOptions { alpha: 0.05, gate: false };
        assert_eq!(pairwise_accuracy(&human_sys, &ter, &human_seg, opts).unwrap().accuracy, Some(1.0));
    }

    #[test]
    fn kendall_example() {
        let human = seg_table("human", &[("s1", 0, 4.0), ("s2", 0, 3.0), ("s3", 0, 2.0), ("s4", 0, 1.0)]);
        let metric = seg_table("m", &[("s1", 0, 4.0), ("s2", 0, 3.0), ("s3", 0, 1.0), ("s4", 0, 2.0)]);
        let r = kendall_segment(&human, &metric, KendallGrouping::WithinSegment).unwrap();
        assert!(close(r.statistic, 4.0 / 6.0));
        assert_eq!(r.n, 6);
        assert!(close(kendall_segment(&human, &human, KendallGrouping::WithinSegment).unwrap().statistic, 1.0));
        let ties = seg_table("human", &[("s1", 0, 1.0), ("s2", 0, 1.0)]);
        assert_eq!(
            kendall_segment(&ties, &ties, KendallGrouping::WithinSegment).unwrap_err(),
            StatsError::NoComparablePairs
        );
    }

    #[test]
    fn kendall_metric_ties_half_credit() {
        let pairs = [(1.0, 0.0), (1.0, 1.0)];
        let (tau, n) = kendall_from_pairs(&pairs).unwrap();
        assert_eq!(n, 2);
        assert!(close(tau, 0.5));
    }

    #[test]
    fn tie_optimized_toy() {
        // human labels >, >, =, <
        let pairs = [(1.0, 2.0), (1.0, 0.4), (0.0, 0.1), (-1.0, -1.5)];
        let r = tie_optimized_from_pairs(&pairs).unwrap();
        assert!(r.epsilon_star > 0.1 && r.epsilon_star < 0.4);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.n_pairs, 4);
        assert_eq!(tie_accuracy_at(&pairs, 0.0), 0.75);
    }

    #[test]
    fn tie_optimized_exact_reproduction() {
        let pairs = [(1.0, 1.0), (0.0, 0.0), (-2.0, -2.0)];
        let r = tie_optimized_from_pairs(&pairs).unwrap();
        assert_eq!((r.epsilon_star, r.accuracy), (0.0, 1.0));
        let distinct = [(1.0, 1.0), (-2.0, -2.0)];
        assert_eq!(tie_optimized_from_pairs(&distinct).unwrap().epsilon_star, 0.0);
        assert!(tie_optimized_from_pairs(&[]).is_none());
    }

    #[test]
    fn perm_rejects_few_iterations() {
        let h = seg_table("human", &[("a", 0, 1.0), ("b", 0, 2.0)]);
        let hs = sys_table("human", &[("a", 1.0), ("b", 2.0)]);
        let input = PermInput {
            human_seg: &h,
            human_sys: &hs,
            metric_a: &h,
            metric_b: &h,
        };
        let opts = PermOptions {
            iterations: 99,
            ..PermOptions::default()
        };
        assert_eq!(
            perm_significance(&input, Statistic::Kendall, &opts).unwrap_err(),
            StatsError::TooFewIterations(99)
        );
    }
}
