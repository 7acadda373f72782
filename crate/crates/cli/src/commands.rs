use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dialect_eval::challenge::{
    self, load_triple_scores, load_triples, make_worksheet, success_rate, success_rate_from_scores,
    ChallengeTriple, SuccessReport, TripleScorer,
};
use dialect_eval::corpus::{
    average_judgments, load_dataset, load_judgments, load_scores, system_average, DatasetFormat,
    EvalDataset, Level, LoadOptions, ScoreTable,
};
use dialect_eval::metrics::{score_dataset, BleuConfig, ChrfConfig, StringMetric};
use dialect_eval::noise::{build_alphabet, noise_dataset, Alphabet, NoiseConfig, NoiseOp, NoiseTarget};
use dialect_eval::report::{
    build_report, pairwise_by_dialect, DialectData, EvaluationReport, MetricScores, PairwisePlotData,
    ReportConfig,
};
use dialect_eval::stats::PairwiseOptions;
use dialect_eval::synth::{self, SynthConfig};
use log::{info, warn};
use serde::Serialize;

use crate::args::*;
use crate::manifest::Manifest;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("cannot write {}", path.display()))
}

/// Scores print as `100.0` rather than `100`, otherwise shortest round-trip.
fn fmt_score(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        v.to_string()
    }
}

/// Replaces characters that are awkward in file names.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_alphanumeric() || "+-_.".contains(c) { c } else { '_' })
        .collect()
}

fn load(data: &DatasetArgs) -> Result<EvalDataset> {
    let opts = LoadOptions {
        allow_missing_reference: data.allow_missing_reference,
        ..LoadOptions::default()
    };
    Ok(load_dataset(&data.dataset, DatasetFormat::Jsonl, &data.lang_pair, &opts)?)
}

pub fn string_metric(args: &MetricArgs) -> Result<StringMetric> {
    let metric = match args.metric {
        MetricKind::Bleu => {
            if args.word_order.is_some() {
                bail!("--word-order applies to chrF only");
            }
            StringMetric::Bleu(BleuConfig {
                max_order: args.max_order,
                lowercase: args.lowercase,
                effective_order: args.effective_order,
                ..BleuConfig::default()
            })
        }
        MetricKind::Chrf | MetricKind::ChrfPlusPlus => {
            let default_words = if args.metric == MetricKind::ChrfPlusPlus { 2 } else { 0 };
            StringMetric::Chrf(ChrfConfig {
                char_order: args.char_order,
                word_order: args.word_order.unwrap_or(default_words),
                beta: args.beta,
                ..ChrfConfig::default()
            })
        }
    };
    metric.validate()?;
    Ok(metric)
}

fn default_metric(kind: MetricKind) -> StringMetric {
    match kind {
        MetricKind::Bleu => StringMetric::Bleu(BleuConfig::default()),
        MetricKind::Chrf => StringMetric::Chrf(ChrfConfig::default()),
        MetricKind::ChrfPlusPlus => StringMetric::Chrf(ChrfConfig::chrf_plus_plus()),
    }
}

pub fn score(cmd: &Command, args: &ScoreArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let metric = string_metric(&args.metric)?;
    let (seg, sys) = score_dataset(&metric, &dataset)?;
    create_dir(&args.out)?;
    let stem = file_stem(metric.metric_id());
    write_with(&args.out.join(format!("{stem}.seg.tsv")), |w| seg.write_tsv(w))?;
    write_with(&args.out.join(format!("{stem}.sys.tsv")), |w| sys.write_tsv(w))?;
    println!("# {} {}", metric.metric_id(), metric.signature());
    for (key, v) in &sys.entries {
        println!("{}\t{}", key.system_id, fmt_score(*v));
    }
    Manifest::new(cmd, &[&args.data.dataset])?
        .detail("metric_id", metric.metric_id())
        .detail("signature", metric.signature())
        .write(&args.out)
}

#[derive(Serialize)]
struct AlphabetInfo {
    fingerprint: String,
    size: usize,
    min_count: u64,
    corpus: Option<PathBuf>,
}

pub fn noise(cmd: &Command, args: &NoiseArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let operations = args
        .ops
        .iter()
        .map(|s| s.parse::<NoiseOp>())
        .collect::<Result<_, _>>()?;
    let targets = args
        .targets
        .iter()
        .map(|s| s.parse::<NoiseTarget>())
        .collect::<Result<_, _>>()?;
    let cfg = NoiseConfig {
        rate: args.rate,
        seed: args.common.seed,
        operations,
        targets,
    };
    cfg.validate()?;

    let (src, tgt) = dataset.languages();
    let mut alphabets: BTreeMap<String, Alphabet> = BTreeMap::new();
    let mut info_map = BTreeMap::new();
    let mut inputs: Vec<&Path> = vec![&args.data.dataset];
    for lang in [src, tgt] {
        if alphabets.contains_key(lang) {
            continue;
        }
        let corpus = args.corpora.iter().find(|(l, _)| l == lang).map(|(_, p)| p);
        let alphabet = match corpus {
            Some(path) => {
                inputs.push(path);
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                build_alphabet(text.lines(), lang, args.min_count)
            }
            None => {
                info!("no --corpus for {lang:?}; building its alphabet from the dataset");
                let texts = dataset_side_texts(&dataset, lang == src && lang != tgt, lang == tgt);
                build_alphabet(texts, lang, args.min_count)
            }
        };
        info_map.insert(
            lang.to_string(),
            AlphabetInfo {
                fingerprint: alphabet.fingerprint(),
                size: alphabet.len(),
                min_count: args.min_count,
                corpus: corpus.cloned(),
            },
        );
        alphabets.insert(lang.to_string(), alphabet);
    }

    let (noised, logs) = noise_dataset(&dataset, &alphabets, &cfg).map_err(|e| match e {
        dialect_eval::noise::NoiseError::EmptyAlphabet(lang) => anyhow!(
            "alphabet for {lang:?} is empty: no character occurs at least {} times; \
             lower --min-count or pass a larger --corpus {lang}=PATH",
            args.min_count
        ),
        other => other.into(),
    })?;

    create_dir(&args.out)?;
    let data_path = args.out.join("noised.jsonl");
    write_with(&data_path, |w| noised.write_jsonl(w))?;
    write_with(&args.out.join("noise_log.jsonl"), |w| {
        for log in &logs {
            serde_json::to_writer(&mut *w, log)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    let edits: usize = logs.iter().map(|l| l.edits.len()).sum();
    println!("{} edits in {} fields -> {}", edits, logs.len(), data_path.display());
    Manifest::new(cmd, &inputs)?
        .detail("alphabets", info_map)
        .detail("output_sha256", crate::manifest::sha256_file(&data_path)?)
        .write(&args.out)
}

fn dataset_side_texts(dataset: &EvalDataset, source: bool, target: bool) -> Vec<String> {
    let mut texts = Vec::new();
    for seg in dataset.segments() {
        if source {
            texts.push(seg.source.clone());
        }
        if target {
            texts.push(seg.reference.clone());
        }
    }
    if target {
        for sys in dataset.system_ids() {
            if let Some(h) = dataset.hypotheses(sys) {
                texts.extend(h.values().cloned());
            }
        }
    }
    texts
}

pub fn challenge_build(cmd: &Command, args: &ChallengeBuildArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let judgments = load_judgments(&args.judgments, &dataset)?;
    let pairs = challenge::extract_perfect_pairs(&dataset, &judgments, args.threshold)?;
    let sheet = make_worksheet(&pairs, args.common.seed);
    create_dir(&args.out)?;
    let path = args.out.join("worksheet.tsv");
    write_with(&path, |w| sheet.write_tsv(w))?;
    println!("{} pairs -> {}", sheet.rows.len(), path.display());
    Manifest::new(cmd, &[&args.data.dataset, &args.judgments])?.write(&args.out)
}

fn scorer_for(kind: ScorerKind) -> TripleScorer {
    match kind {
        ScorerKind::Bleu => TripleScorer::Metric(default_metric(MetricKind::Bleu)),
        ScorerKind::Chrf => TripleScorer::Metric(default_metric(MetricKind::Chrf)),
        ScorerKind::ChrfPlusPlus => TripleScorer::Metric(default_metric(MetricKind::ChrfPlusPlus)),
        ScorerKind::Edit => TripleScorer::NegEditDistance,
    }
}

/// Loads triples, warning about rejected rows; no valid triple is an error.
fn load_valid_triples(path: &Path) -> Result<Vec<ChallengeTriple>> {
    let loaded = load_triples(path)?;
    for r in &loaded.rejected {
        warn!("{}: rejected {}", path.display(), r);
    }
    if loaded.triples.is_empty() {
        bail!(
            "{}: no valid triples ({} rows rejected)",
            path.display(),
            loaded.rejected.len()
        );
    }
    Ok(loaded.triples)
}

fn score_triples(triples: &[ChallengeTriple], scorer: &TripleScorer) -> Result<SuccessReport> {
    Ok(success_rate(triples, |_, r, h| scorer.score(r, h))?)
}

/// Success reports keyed by metric id from precomputed triple-score files.
fn external_success(triples: &[ChallengeTriple], path: &Path) -> Result<BTreeMap<String, SuccessReport>> {
    let scores = load_triple_scores(path)?;
    let mut out = BTreeMap::new();
    for (metric, table) in scores {
        let rep = success_rate_from_scores(triples, &table)
            .with_context(|| format!("metric {metric} in {}", path.display()))?;
        out.insert(metric, rep);
    }
    Ok(out)
}

pub fn challenge_eval(cmd: &Command, args: &ChallengeEvalArgs) -> Result<()> {
    if args.scorers.is_empty() && args.triple_scores.is_empty() {
        bail!("give at least one --scorer or --triple-scores");
    }
    let mut inputs: Vec<&Path> = Vec::new();
    let mut results: Vec<(String, String, SuccessReport)> = Vec::new();
    for (label, path) in &args.triples {
        inputs.push(path);
        let triples = load_valid_triples(path)?;
        for kind in &args.scorers {
            let scorer = scorer_for(*kind);
            results.push((scorer.metric_id().to_string(), label.clone(), score_triples(&triples, &scorer)?));
        }
        for (l, spath) in args.triple_scores.iter().filter(|(l, _)| l == label) {
            debug_assert_eq!(l, label);
            inputs.push(spath);
            for (metric, rep) in external_success(&triples, spath)? {
                results.push((metric, label.clone(), rep));
            }
        }
    }
    for (l, _) in &args.triple_scores {
        if !args.triples.iter().any(|(t, _)| t == l) {
            bail!("--triple-scores label {l:?} has no matching --triples");
        }
    }

    println!("metric_id\tdialect\tsuccess_rate\tsuccesses\ttriples");
    for (metric, label, rep) in &results {
        println!("{metric}\t{label}\t{}\t{}\t{}", rep.success_rate, rep.successes, rep.len());
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_with(&out.join("success.tsv"), |w| {
            writeln!(w, "metric_id\tdialect\tpair_id\ts_a\ts_b\ts_c\tsuccess")?;
            for (metric, label, rep) in &results {
                for o in &rep.outcomes {
                    writeln!(
                        w,
                        "{metric}\t{label}\t{}\t{}\t{}\t{}\t{}",
                        o.pair_id, o.s_a, o.s_b, o.s_c, o.success
                    )?;
                }
            }
            Ok(())
        })?;
        Manifest::new(cmd, &inputs)?.write(out)?;
    }
    Ok(())
}

fn lookup<'a, T>(pairs: &'a [(String, T)], label: &'a str) -> impl Iterator<Item = &'a T> {
    pairs.iter().filter(move |(l, _)| l == label).map(|(_, v)| v)
}

fn human_as_metric(seg: &ScoreTable, sys: &ScoreTable) -> MetricScores {
    let mut seg = seg.clone();
    let mut sys = sys.clone();
    seg.metric_id = "human".into();
    sys.metric_id = "human".into();
    MetricScores { seg, sys }
}

/// Merges external score tables of one dialect into per-metric pairs,
/// deriving system scores by averaging when only segment scores are given.
fn external_metrics(paths: &[&PathBuf], dataset: &EvalDataset) -> Result<Vec<MetricScores>> {
    let mut by_id: BTreeMap<String, (Option<ScoreTable>, Option<ScoreTable>)> = BTreeMap::new();
    let mut order = Vec::new();
    for path in paths {
        let table = load_scores(path, dataset)?;
        let id = table.metric_id.clone();
        if !by_id.contains_key(&id) {
            order.push(id.clone());
        }
        let slot = by_id.entry(id.clone()).or_default();
        let target = match table.level {
            Level::Segment => &mut slot.0,
            Level::System => &mut slot.1,
        };
        if target.is_some() {
            bail!("{}: second {} level table for metric {id}", path.display(), table.level);
        }
        *target = Some(table);
    }
    let mut out = Vec::new();
    for id in order {
        let (seg, sys) = by_id.remove(&id).unwrap();
        let seg = seg.ok_or_else(|| anyhow!("metric {id}: segment-level scores are required"))?;
        let sys = match sys {
            Some(s) => s,
            None => system_average(&seg, dataset)?,
        };
        out.push(MetricScores { seg, sys });
    }
    Ok(out)
}

pub fn evaluate(cmd: &Command, args: &EvaluateArgs) -> Result<()> {
    let labels: Vec<String> = args.datasets.iter().map(|(l, _)| l.clone()).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            bail!("dataset label {l:?} given twice");
        }
    }
    for (flag, given) in [
        ("--judgments", args.judgments.iter().map(|(l, _)| l).collect::<Vec<_>>()),
        ("--scores", args.scores.iter().map(|(l, _)| l).collect()),
        ("--triples", args.triples.iter().map(|(l, _)| l).collect()),
        ("--triple-scores", args.triple_scores.iter().map(|(l, _)| l).collect()),
        ("--lang-pair", args.lang_pairs.iter().map(|(l, _)| l).collect()),
    ] {
        if let Some(l) = given.iter().find(|l| !labels.contains(l)) {
            bail!("{flag} label {l:?} has no matching --dataset");
        }
    }
    if args.metrics.is_empty() && args.scores.is_empty() {
        bail!("give at least one --metric or --scores");
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        bail!("--alpha must be in (0, 1)");
    }

    let mut inputs: Vec<&Path> = Vec::new();
    let mut dialects = Vec::with_capacity(labels.len());
    let mut problems = Vec::new();
    for (label, data_path) in &args.datasets {
        let lang_pair = lookup(&args.lang_pairs, label)
            .next()
            .cloned()
            .unwrap_or_else(|| synth::lang_pair_for(label));
        let dataset = load_dataset(data_path, DatasetFormat::Jsonl, &lang_pair, &LoadOptions::default())?;
        inputs.push(data_path);
        let jpath = lookup(&args.judgments, label)
            .next()
            .ok_or_else(|| anyhow!("no --judgments for {label}"))?;
        inputs.push(jpath);
        let judgments = load_judgments(jpath, &dataset)?;
        let human_seg = average_judgments(&judgments)?;
        let human_sys = match system_average(&human_seg, &dataset) {
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("{label}: human judgments: {e}"));
                continue;
            }
        };

        let mut metrics = Vec::new();
        let mut scorers = Vec::new();
        for m in &args.metrics {
            let kind = match m {
                EvalMetric::Human => {
                    metrics.push(human_as_metric(&human_seg, &human_sys));
                    continue;
                }
                EvalMetric::Bleu => MetricKind::Bleu,
                EvalMetric::Chrf => MetricKind::Chrf,
                EvalMetric::ChrfPlusPlus => MetricKind::ChrfPlusPlus,
            };
            let metric = default_metric(kind);
            let (seg, sys) = score_dataset(&metric, &dataset)?;
            metrics.push(MetricScores { seg, sys });
            scorers.push(TripleScorer::Metric(metric));
        }
        let score_paths: Vec<&PathBuf> = lookup(&args.scores, label).collect();
        inputs.extend(score_paths.iter().map(|p| p.as_path()));
        match external_metrics(&score_paths, &dataset) {
            Ok(ext) => {
                for m in ext {
                    if metrics.iter().any(|x| x.metric_id() == m.metric_id()) {
                        problems.push(format!("{label}: metric {} given twice", m.metric_id()));
                    }
                    metrics.push(m);
                }
            }
            Err(e) => problems.push(format!("{label}: {e:#}")),
        }
        for m in &metrics {
            for t in [&m.seg, &m.sys] {
                if let Err(e) = t.validate(&dataset) {
                    problems.push(format!("{label}: {} {}: {e}", m.metric_id(), t.level));
                }
            }
        }

        let mut success = BTreeMap::new();
        for tpath in lookup(&args.triples, label) {
            inputs.push(tpath);
            let triples = load_valid_triples(tpath)?;
            for s in &scorers {
                success.insert(s.metric_id().to_string(), score_triples(&triples, s)?);
            }
            for spath in lookup(&args.triple_scores, label) {
                inputs.push(spath);
                success.extend(external_success(&triples, spath)?);
            }
        }
        if lookup(&args.triples, label).next().is_none() && lookup(&args.triple_scores, label).next().is_some() {
            bail!("--triple-scores for {label} needs --triples {label}=PATH");
        }
        dialects.push(DialectData {
            label: label.clone(),
            human_seg,
            human_sys,
            metrics,
            success,
        });
    }
    if !problems.is_empty() {
        bail!("validation failed:\n  {}", problems.join("\n  "));
    }

    let cfg = ReportConfig {
        pairwise: PairwiseOptions {
            alpha: args.alpha,
            gate: true,
        },
        iterations: args.iterations,
        seed: args.common.seed,
    };
    let report = build_report(&dialects, args.baseline.as_deref(), &cfg)?;

    create_dir(&args.out)?;
    write_with(&args.out.join("report.tsv"), |w| report.write_tsv(w))?;
    let text = report.render_text(args.alpha);
    fs::write(args.out.join("report.txt"), &text)
        .with_context(|| format!("cannot write {}", args.out.join("report.txt").display()))?;
    let plot_dir = args.out.join("plot");
    create_dir(&plot_dir)?;
    let mut n_significant = BTreeMap::new();
    for row in &report.rows {
        let per = pairwise_by_dialect(&dialects, &row.metric_id, cfg.pairwise)?;
        for (d, res) in dialects.iter().zip(per) {
            let Some(res) = res else { continue };
            n_significant.insert(format!("{}/{}", row.metric_id, d.label), res.n_significant);
            let path = plot_dir.join(format!("{}.{}.tsv", file_stem(&row.metric_id), file_stem(&d.label)));
            write_with(&path, |w| PairwisePlotData::from_pairwise(&res).write_tsv(w))?;
        }
    }
    print!("{text}");
    Manifest::new(cmd, &inputs)?
        .detail("significant_pairs", &n_significant)
        .write(&args.out)?;

    check_undefined(&report, args.allow_undefined)
}

/// Correlation statistics are required; challenge success rates are only
/// reported when triples were given.
fn check_undefined(report: &EvaluationReport, allow: bool) -> Result<()> {
    let missing: Vec<String> = report
        .undefined_cells()
        .into_iter()
        .filter(|(_, c, _, _)| *c != dialect_eval::report::Column::SuccessRate)
        .map(|(m, c, d, r)| format!("{m} {c} {d}: {r}"))
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    if allow {
        for m in &missing {
            warn!("undefined statistic: {m}");
        }
        Ok(())
    } else {
        bail!(
            "undefined statistics (pass --allow-undefined to accept):\n  {}",
            missing.join("\n  ")
        )
    }
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let report = EvaluationReport::from_tsv(&text).with_context(|| format!("{}", args.input.display()))?;
    print!("{}", report.render_text(args.alpha));
    Ok(())
}

pub fn synth(cmd: &Command, args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        systems: args.systems,
        segments: args.segments,
        dialects: args.dialects.clone(),
        seed: args.common.seed,
        ..SynthConfig::default()
    };
    let dialects = synth::generate(&cfg)?;
    let files = synth::write_bundle(&args.out, &dialects).with_context(|| format!("cannot write {}", args.out.display()))?;
    for f in &files {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            f.label,
            f.lang_pair,
            f.dataset.display(),
            f.judgments.display(),
            f.triples.display()
        );
    }
    Manifest::new(cmd, &[])?.detail("files", &files).write(&args.out)
}
