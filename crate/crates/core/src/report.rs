//! Evaluation reports: one row per metric, a joint pairwise-accuracy column
//! and per-dialect Pearson, tie-optimized accuracy, Kendall and challenge
//! success-rate columns, plus pairwise plot data.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::challenge::SuccessReport;
use crate::corpus::ScoreTable;
use crate::stats::{
    self, KendallGrouping, PairwiseOptions, PairwiseResult, PermInput, PermOptions, Statistic,
    StatsError, SystemPair,
};
use crate::tsv;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("misaligned score tables:\n  {}", .0.join("\n  "))]
    Misaligned(Vec<String>),
    #[error("no dialects to report")]
    Empty,
    #[error("baseline metric {0:?} is not among the reported metrics")]
    UnknownBaseline(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ReportError>;

/// A report column kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    PairwiseAccuracy,
    Pearson,
    TieOptimized,
    Kendall,
    SuccessRate,
}

impl Column {
    pub const PER_DIALECT: [Column; 4] = [
        Column::Pearson,
        Column::TieOptimized,
        Column::Kendall,
        Column::SuccessRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Column::PairwiseAccuracy => "pairwise_accuracy",
            Column::Pearson => "pearson",
            Column::TieOptimized => "tie_optimized_accuracy",
            Column::Kendall => "kendall",
            Column::SuccessRate => "success_rate",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Column::PairwiseAccuracy => "acc",
            Column::Pearson => "r",
            Column::TieOptimized => "acc_eq",
            Column::Kendall => "tau",
            Column::SuccessRate => "succ",
        }
    }

    fn statistic(self) -> Option<Statistic> {
        match self {
            Column::PairwiseAccuracy => Some(Statistic::PairwiseAccuracy),
            Column::Pearson => Some(Statistic::Pearson),
            Column::TieOptimized => Some(Statistic::TieOptimized),
            Column::Kendall => Some(Statistic::Kendall),
            Column::SuccessRate => None,
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Column {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [
            Column::PairwiseAccuracy,
            Column::Pearson,
            Column::TieOptimized,
            Column::Kendall,
            Column::SuccessRate,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| format!("unknown statistic {s:?}"))
    }
}

/// Dialect label used for the pooled pairwise column.
pub const ALL_DIALECTS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellValue {
    Value { value: f64, n: usize },
    Undefined { reason: String },
}

impl CellValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            CellValue::Value { value, .. } => Some(*value),
            CellValue::Undefined { .. } => None,
        }
    }

    fn undefined(reason: impl Into<String>) -> Self {
        CellValue::Undefined { reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub column: Column,
    pub dialect: String,
    pub value: CellValue,
    /// Permutation-test p-value of "this metric beats the baseline".
    pub p_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric_id: String,
    pub cells: Vec<ReportCell>,
}

impl ReportRow {
    pub fn cell(&self, column: Column, dialect: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.column == column && c.dialect == dialect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dialects: Vec<String>,
    pub baseline: Option<String>,
    pub rows: Vec<ReportRow>,
}

/// Segment- and system-level scores of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScores {
    pub seg: ScoreTable,
    pub sys: ScoreTable,
}

impl MetricScores {
    pub fn metric_id(&self) -> &str {
        &self.seg.metric_id
    }
}

/// Everything computed for one dialect.
#[derive(Debug, Clone, PartialEq)]
pub struct DialectData {
    pub label: String,
    pub human_seg: ScoreTable,
    pub human_sys: ScoreTable,
    pub metrics: Vec<MetricScores>,
    /// Challenge results keyed by metric id.
    pub success: BTreeMap<String, SuccessReport>,
}

impl DialectData {
    fn metric(&self, id: &str) -> Option<&MetricScores> {
        self.metrics.iter().find(|m| m.metric_id() == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub pairwise: PairwiseOptions,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            pairwise: PairwiseOptions::default(),
            iterations: 1000,
            seed: 0,
        }
    }
}

impl ReportConfig {
    fn perm(&self) -> PermOptions {
        PermOptions {
            iterations: self.iterations,
            seed: self.seed,
            pairwise: self.pairwise,
        }
    }
}

fn is_alignment(e: &StatsError) -> bool {
    matches!(e, StatsError::Misaligned { .. } | StatsError::WrongLevel { .. })
}

fn metric_order(dialects: &[DialectData]) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for d in dialects {
        for m in &d.metrics {
            if !order.iter().any(|id| id == m.metric_id()) {
                order.push(m.metric_id().to_string());
            }
        }
        for id in d.success.keys() {
            if !order.contains(id) {
                order.push(id.clone());
            }
        }
    }
    order
}

/// Per-dialect pairwise results of one metric, `None` where the metric has
/// no scores for a dialect.
pub fn pairwise_by_dialect(
    dialects: &[DialectData],
    metric_id: &str,
    opts: PairwiseOptions,
) -> std::result::Result<Vec<Option<PairwiseResult>>, StatsError> {
    dialects
        .iter()
        .map(|d| {
            d.metric(metric_id)
                .map(|m| stats::pairwise_accuracy(&d.human_sys, &m.sys, &d.human_seg, opts))
                .transpose()
        })
        .collect()
}

/// Computes every statistic for every metric and dialect.
pub fn build_report(
    dialects: &[DialectData],
    baseline: Option<&str>,
    cfg: &ReportConfig,
) -> Result<EvaluationReport> {
    if dialects.is_empty() {
        return Err(ReportError::Empty);
    }
    let order = metric_order(dialects);
    if let Some(b) = baseline {
        if !order.iter().any(|m| m == b) || dialects.iter().all(|d| d.metric(b).is_none()) {
            return Err(ReportError::UnknownBaseline(b.to_string()));
        }
    }
    let mut misaligned = Vec::new();
    let mut note = |metric: &str, dialect: &str, e: &StatsError| {
        let line = format!("{metric} [{dialect}]: {e}");
        if !misaligned.contains(&line) {
            misaligned.push(line);
        }
    };
    let cell_of = |r: std::result::Result<(f64, usize), StatsError>| match r {
        Ok((value, n)) => CellValue::Value { value, n },
        Err(e) => CellValue::undefined(e.reason_code()),
    };

    let mut rows = Vec::with_capacity(order.len());
    for metric_id in &order {
        let mut cells = Vec::new();

        // pairwise accuracy pooled over dialects
        let pairwise = match pairwise_by_dialect(dialects, metric_id, cfg.pairwise) {
            Ok(per) => {
                let present: Vec<PairwiseResult> = per.into_iter().flatten().collect();
                if present.is_empty() {
                    CellValue::undefined("missing_scores")
                } else {
                    let joint = PairwiseResult::merge(&present);
                    match joint.accuracy {
                        Some(value) => CellValue::Value {
                            value,
                            n: joint.n_significant,
                        },
                        None => CellValue::undefined(StatsError::NoSignificantPairs.reason_code()),
                    }
                }
            }
            Err(e) => {
                if is_alignment(&e) {
                    note(metric_id, ALL_DIALECTS, &e);
                }
                CellValue::undefined(e.reason_code())
            }
        };
        cells.push(ReportCell {
            column: Column::PairwiseAccuracy,
            dialect: ALL_DIALECTS.to_string(),
            value: pairwise,
            p_vs_baseline: None,
        });

        for column in Column::PER_DIALECT {
            for d in dialects {
                let value = if column == Column::SuccessRate {
                    match d.success.get(metric_id) {
                        Some(rep) => CellValue::Value {
                            value: rep.success_rate,
                            n: rep.len(),
                        },
                        None => CellValue::undefined("no_triples"),
                    }
                } else if let Some(m) = d.metric(metric_id) {
                    let r = match column {
                        Column::Pearson => pearson_cell(d, m),
                        Column::TieOptimized => {
                            stats::tie_optimized_accuracy(&d.human_seg, &m.seg).map(|t| (t.accuracy, t.n_pairs))
                        }
                        Column::Kendall => {
                            stats::kendall_segment(&d.human_seg, &m.seg, KendallGrouping::WithinSegment)
                                .map(|c| (c.statistic, c.n))
                        }
                        _ => unreachable!(),
                    };
                    if let Err(e) = &r {
                        if is_alignment(e) {
                            note(metric_id, &d.label, e);
                        }
                    }
                    cell_of(r)
                } else {
                    CellValue::undefined("missing_scores")
                };
                cells.push(ReportCell {
                    column,
                    dialect: d.label.clone(),
                    value,
                    p_vs_baseline: None,
                });
            }
        }
        rows.push(ReportRow {
            metric_id: metric_id.clone(),
            cells,
        });
    }
    if !misaligned.is_empty() {
        return Err(ReportError::Misaligned(misaligned));
    }

    if let Some(b) = baseline {
        attach_p_values(&mut rows, dialects, b, cfg);
    }
    Ok(EvaluationReport {
        dialects: dialects.iter().map(|d| d.label.clone()).collect(),
        baseline: baseline.map(String::from),
        rows,
    })
}

fn pearson_cell(d: &DialectData, m: &MetricScores) -> std::result::Result<(f64, usize), StatsError> {
    let systems: Vec<String> = d.human_seg.systems().into_iter().map(String::from).collect();
    let h = stats::SystemScores::from_table(&d.human_sys, &systems)?;
    let x = stats::SystemScores::from_table(&m.sys, &systems)?;
    stats::pearson(&h.values, &x.values).map(|c| (c.statistic, c.n))
}

fn attach_p_values(rows: &mut [ReportRow], dialects: &[DialectData], baseline: &str, cfg: &ReportConfig) {
    let perm = cfg.perm();
    for row in rows.iter_mut() {
        if row.metric_id == baseline {
            continue;
        }
        let metric_id = row.metric_id.clone();
        for cell in row.cells.iter_mut() {
            let Some(statistic) = cell.column.statistic() else {
                continue;
            };
            if cell.value.value().is_none() {
                continue;
            }
            let inputs: Vec<PermInput<'_>> = dialects
                .iter()
                .filter(|d| cell.dialect == ALL_DIALECTS || d.label == cell.dialect)
                .filter_map(|d| {
                    let a = d.metric(&metric_id)?;
                    let b = d.metric(baseline)?;
                    let (ta, tb) = if statistic.is_system_level() {
                        (&a.sys, &b.sys)
                    } else {
                        (&a.seg, &b.seg)
                    };
                    Some(PermInput {
                        human_seg: &d.human_seg,
                        human_sys: &d.human_sys,
                        metric_a: ta,
                        metric_b: tb,
                    })
                })
                .collect();
            if inputs.is_empty() {
                continue;
            }
            cell.p_vs_baseline = stats::perm_significance_grouped(&inputs, statistic, &perm).ok();
        }
    }
}

pub const REPORT_HEADER: [&str; 6] = ["metric_id", "statistic", "dialect", "value", "n", "p_vs_baseline"];

fn fmt_opt(p: Option<f64>) -> String {
    p.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl EvaluationReport {
    /// Ordered `(column, dialect)` pairs of the value columns.
    pub fn columns(&self) -> Vec<(Column, String)> {
        let mut cols = vec![(Column::PairwiseAccuracy, ALL_DIALECTS.to_string())];
        for c in Column::PER_DIALECT {
            for d in &self.dialects {
                cols.push((c, d.clone()));
            }
        }
        cols
    }

    pub fn row(&self, metric_id: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric_id == metric_id)
    }

    /// `(metric, column, dialect, reason)` for every undefined cell.
    pub fn undefined_cells(&self) -> Vec<(String, Column, String, String)> {
        let mut out = Vec::new();
        for row in &self.rows {
            for c in &row.cells {
                if let CellValue::Undefined { reason } = &c.value {
                    out.push((row.metric_id.clone(), c.column, c.dialect.clone(), reason.clone()));
                }
            }
        }
        out
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", REPORT_HEADER.join("\t"))?;
        for row in &self.rows {
            for c in &row.cells {
                let (value, n) = match &c.value {
                    CellValue::Value { value, n } => (value.to_string(), n.to_string()),
                    CellValue::Undefined { reason } => (format!("n/a:{reason}"), "-".to_string()),
                };
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    tsv::escape(&row.metric_id),
                    c.column,
                    tsv::escape(&c.dialect),
                    value,
                    n,
                    fmt_opt(c.p_vs_baseline)
                )?;
            }
        }
        Ok(())
    }

    /// Parses a report written by [`EvaluationReport::write_tsv`].
    pub fn from_tsv(text: &str) -> Result<Self> {
        let lines: Vec<String> = text.lines().map(String::from).collect();
        let rows = tsv::parse_table(&lines, &REPORT_HEADER)
            .map_err(|(line, message)| ReportError::Parse { line, message })?;
        let mut report = EvaluationReport {
            dialects: Vec::new(),
            baseline: None,
            rows: Vec::new(),
        };
        for (line, f) in rows {
            let err = |message: String| ReportError::Parse { line, message };
            let column: Column = f[1].parse().map_err(err)?;
            let dialect = f[2].clone();
            let value = if let Some(reason) = f[3].strip_prefix("n/a:") {
                CellValue::undefined(reason)
            } else {
                let value = f[3].parse().map_err(|_| err(format!("bad value {:?}", f[3])))?;
                let n = f[4].parse().map_err(|_| err(format!("bad n {:?}", f[4])))?;
                CellValue::Value { value, n }
            };
            let p_vs_baseline = match f[5].as_str() {
                "-" => None,
                s => Some(s.parse().map_err(|_| err(format!("bad p-value {s:?}")))?),
            };
            if dialect != ALL_DIALECTS && !report.dialects.contains(&dialect) {
                report.dialects.push(dialect.clone());
            }
            let cell = ReportCell {
                column,
                dialect,
                value,
                p_vs_baseline,
            };
            match report.rows.iter_mut().find(|r| r.metric_id == f[0]) {
                Some(row) => row.cells.push(cell),
                None => report.rows.push(ReportRow {
                    metric_id: f[0].clone(),
                    cells: vec![cell],
                }),
            }
        }
        Ok(report)
    }

    /// Aligned plain-text table. `*` marks cells whose p-value against the
    /// baseline is below `alpha`.
    pub fn render_text(&self, alpha: f64) -> String {
        let cols = self.columns();
        let mut header = vec!["metric".to_string()];
        header.extend(cols.iter().map(|(c, d)| {
            if d == ALL_DIALECTS {
                c.short().to_string()
            } else {
                format!("{} {}", c.short(), d)
            }
        }));
        let mut table = vec![header];
        for row in &self.rows {
            let mut line = vec![row.metric_id.clone()];
            for (c, d) in &cols {
                let text = match row.cell(*c, d) {
                    Some(cell) => match &cell.value {
                        CellValue::Value { value, .. } => {
                            let mark = if cell.p_vs_baseline.is_some_and(|p| p < alpha) { "*" } else { "" };
                            format!("{value:.3}{mark}")
                        }
                        CellValue::Undefined { .. } => "n/a".to_string(),
                    },
                    None => "n/a".to_string(),
                };
                line.push(text);
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|i| table.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (ri, r) in table.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if i == 0 {
                        format!("{s:<w$}", w = widths[i])
                    } else {
                        format!("{s:>w$}", w = widths[i])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if ri == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        if let Some(b) = &self.baseline {
            out.push_str(&format!("* p < {alpha} against baseline {b}\n"));
        }
        let undefined = self.undefined_cells();
        if !undefined.is_empty() {
            out.push_str("undefined cells:\n");
            for (m, c, d, reason) in undefined {
                out.push_str(&format!("  {m} {c} {d}: {reason}\n"));
            }
        }
        out
    }
}

/// One point per unordered system pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwisePlotData {
    pub points: Vec<SystemPair>,
}

pub const PLOT_HEADER: [&str; 5] = ["sys_i", "sys_j", "human_delta", "metric_delta", "significant"];

/// Plot points from aligned system scores and per-pair significance flags
/// (`(i, j, significant)` with `i < j`).
pub fn emit_plot_data(
    human_sys: &stats::SystemScores,
    metric_sys: &stats::SystemScores,
    significance: &[(usize, usize, bool)],
) -> PairwisePlotData {
    let points = significance
        .iter()
        .map(|&(i, j, significant)| {
            let (a, b) = if human_sys.systems[i] <= human_sys.systems[j] { (i, j) } else { (j, i) };
            let human_delta = human_sys.values[a] - human_sys.values[b];
            let metric_delta = metric_sys.values[a] - metric_sys.values[b];
            SystemPair {
                sys_i: human_sys.systems[a].clone(),
                sys_j: human_sys.systems[b].clone(),
                human_delta,
                metric_delta,
                significant,
                agree: stats::sign(human_delta) == stats::sign(metric_delta),
            }
        })
        .collect();
    PairwisePlotData { points }
}

impl PairwisePlotData {
    pub fn from_pairwise(result: &PairwiseResult) -> Self {
        Self {
            points: result.pairs.clone(),
        }
    }

    /// Points whose human and metric deltas disagree in sign.
    pub fn disagreements(&self) -> usize {
        self.points.iter().filter(|p| !p.agree).count()
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", PLOT_HEADER.join("\t"))?;
        for p in &self.points {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                tsv::escape(&p.sys_i),
                tsv::escape(&p.sys_j),
                p.human_delta,
                p.metric_delta,
                p.significant
            )?;
        }
        Ok(())
    }
}
