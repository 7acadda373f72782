//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line.
#![allow(clippy::type_complexity, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dialect_eval::challenge::{
    extract_perfect_pairs, success_rate, triple_success, ChallengeTriple, EditOperation, EquivalentPair, Variant,
};
use dialect_eval::corpus::{
    average_judgments, system_average, EvalDataset, Judgment, JudgmentSet, Level, LoadOptions, ScoreKey, ScoreTable,
    Segment, SegmentKey,
};
use dialect_eval::metrics::{
    bleu_corpus, bleu_from_stats, bleu_segment_stats, bleu_sentence, chrf_corpus, chrf_sentence, BleuConfig,
    BleuStats, ChrfConfig,
};
use dialect_eval::noise::{build_alphabet, noise_dataset, NoiseConfig, NoiseTarget};
use dialect_eval::report::{Column, EvaluationReport, ALL_DIALECTS};
use dialect_eval::stats::{
    kendall_segment, pairwise_accuracy, pearson, tie_optimized_from_pairs, wilcoxon_two_sided, KendallGrouping,
    PairwiseOptions, SystemScores,
};
use dialect_eval::synth::{challenge_triples, generate, SynthConfig};
use dialect_eval::tokenize::tokenize_13a;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if let false = $cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    } else {
        Ok(format!("{took:.2?}"))
    }
}

// ---------------------------------------------------------------- oracles

fn count_in<T: PartialEq>(gram: &[T], seq: &[T]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

/// (hyp total, ref total, clipped matches) of order `n`, by enumeration.
fn gram_stats<T: PartialEq>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let windows = |s: &[T]| s.len().saturating_sub(n - 1).min(s.len());
    let (th, tr) = (windows(hyp), windows(reference));
    let mut matched = 0;
    for i in 0..th {
        let g = &hyp[i..i + n];
        // count each distinct gram at its first occurrence only
        if (0..i).any(|k| &hyp[k..k + n] == g) {
            continue;
        }
        matched += count_in(g, hyp).min(count_in(g, reference));
    }
    (th, tr, matched)
}

fn words(s: &str) -> Vec<&str> {
    s.split(' ').filter(|w| !w.is_empty()).collect()
}

fn oracle_bleu(pairs: &[(String, String)], effective: bool) -> f64 {
    let mut hyp_len = 0;
    let mut ref_len = 0;
    let mut totals = [0usize; 4];
    let mut matches = [0usize; 4];
    for (h, r) in pairs {
        let (h, r) = (words(h), words(r));
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let (t, _, m) = gram_stats(&h, &r, n);
            totals[n - 1] += t;
            matches[n - 1] += m;
        }
    }
    if matches.iter().all(|&m| m == 0) || hyp_len == 0 {
        return 0.0;
    }
    let bp = if hyp_len < ref_len { (1.0 - ref_len as f64 / hyp_len as f64).exp() } else { 1.0 };
    let mut logs = Vec::new();
    let mut halvings = 0;
    for n in 0..4 {
        if totals[n] == 0 {
            break;
        }
        let p = if matches[n] == 0 {
            halvings += 1;
            1.0 / (2f64.powi(halvings) * totals[n] as f64)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        logs.push(p.ln());
    }
    if !effective && logs.len() < 4 {
        return 0.0;
    }
    100.0 * bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

fn oracle_chrf(pairs: &[(String, String)], word_order: usize) -> f64 {
    let mut stats = vec![(0usize, 0usize, 0usize); 6 + word_order];
    for (h, r) in pairs {
        let hc: Vec<char> = h.chars().filter(|c| *c != ' ').collect();
        let rc: Vec<char> = r.chars().filter(|c| *c != ' ').collect();
        for n in 1..=6 {
            let (a, b, m) = gram_stats(&hc, &rc, n);
            stats[n - 1].0 += a;
            stats[n - 1].1 += b;
            stats[n - 1].2 += m;
        }
        for n in 1..=word_order {
            let (a, b, m) = gram_stats(&words(h), &words(r), n);
            stats[5 + n].0 += a;
            stats[5 + n].1 += b;
            stats[5 + n].2 += m;
        }
    }
    let used: Vec<_> = stats.iter().filter(|s| s.0 > 0 && s.1 > 0).collect();
    if used.is_empty() {
        return 0.0;
    }
    let p = used.iter().map(|s| s.2 as f64 / s.0 as f64).sum::<f64>() / used.len() as f64;
    let r = used.iter().map(|s| s.2 as f64 / s.1 as f64).sum::<f64>() / used.len() as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

fn oracle_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Two-sided signed-rank p-value by enumerating all 2^m sign vectors.
fn oracle_wilcoxon(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let m = d.len();
    if m == 0 {
        return 1.0;
    }
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = ranks.iter().zip(&d).filter(|(_, x)| **x > 0.0).map(|(r, _)| r).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..(1 << m) {
        let t: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if t <= observed + 1e-9 {
            le += 1;
        }
        if t >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << m) as f64).min(1.0)
}

fn oracle_kendall(human: &[Vec<f64>], metric: &[Vec<f64>]) -> Option<f64> {
    let (systems, segments) = (human.len(), human[0].len());
    let (mut c, mut d) = (0.0, 0.0);
    for g in 0..segments {
        for i in 0..systems {
            for j in 0..systems {
                if i >= j || human[i][g] == human[j][g] {
                    continue;
                }
                let hs = human[i][g] > human[j][g];
                if metric[i][g] == metric[j][g] {
                    c += 0.5;
                    d += 0.5;
                } else if (metric[i][g] > metric[j][g]) == hs {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
    }
    (c + d > 0.0).then(|| (c - d) / (c + d))
}

fn oracle_tie_accuracy(pairs: &[(f64, f64)], eps: f64) -> f64 {
    let label = |x: f64, tie: bool| if tie { 0 } else if x > 0.0 { 1 } else { -1 };
    let ok = pairs
        .iter()
        .filter(|(h, m)| label(*h, *h == 0.0) == label(*m, m.abs() <= eps))
        .count();
    ok as f64 / pairs.len() as f64
}

fn grid_tables(name: &str, values: &[Vec<f64>]) -> ScoreTable {
    let mut t = ScoreTable::new(name, Level::Segment);
    for (s, row) in values.iter().enumerate() {
        for (g, v) in row.iter().enumerate() {
            t.entries.insert(ScoreKey::segment(&format!("s{s}"), SegmentKey::new("d", g as u32)), *v);
        }
    }
    t
}

// ---------------------------------------------------------------- criteria

fn c1_string_metrics() -> Outcome {
    let start = Instant::now();
    let cfg = BleuConfig::default();
    let stats = BleuStats { hyp_len: 5, ref_len: 6, matches: vec![5, 3, 2, 1], totals: vec![5, 4, 3, 2] };
    let expected = 100.0 * (-0.2f64).exp() * (1.0f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
    let got = bleu_from_stats(&stats, &cfg);
    ensure!((got.value - expected).abs() < 1e-9, "worked example stats: {} vs {expected}", got.value);
    let s = bleu_segment_stats("the cat sat on mat", "the cat sat on the mat", &cfg);
    ensure!(s == stats, "worked example counts: {s:?}");
    let v = bleu_corpus(&["the cat sat on mat"], &["the cat sat on the mat"], &cfg).unwrap().value;
    ensure!((v - expected).abs() < 1e-9, "worked example corpus: {v}");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let letters = ['a', 'b', 'c', 'd', 'e'];
    let sent = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(1..=8);
        (0..n).map(|_| letters.choose(rng).unwrap().to_string()).collect::<Vec<_>>().join(" ")
    };
    let pairs: Vec<(String, String)> = (0..200).map(|_| (sent(&mut rng), sent(&mut rng))).collect();
    let chrf = ChrfConfig::default();
    let chrfpp = ChrfConfig::chrf_plus_plus();
    let mut worst: f64 = 0.0;
    for (h, r) in &pairs {
        let one = [(h.clone(), r.clone())];
        let checks = [
            (bleu_corpus(&[h], &[r], &cfg).unwrap().value, oracle_bleu(&one, false)),
            (bleu_sentence(h, r, &cfg).value, oracle_bleu(&one, true)),
            (chrf_sentence(h, r, &chrf).value, oracle_chrf(&one, 0)),
            (chrf_sentence(h, r, &chrfpp).value, oracle_chrf(&one, 2)),
        ];
        for (i, (a, b)) in checks.iter().enumerate() {
            ensure!((a - b).abs() <= 1e-9, "check {i} on {h:?} / {r:?}: {a} vs oracle {b}");
            worst = worst.max((a - b).abs());
        }
    }
    let hyps: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
    let refs: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
    let corpus_checks = [
        (bleu_corpus(&hyps, &refs, &cfg).unwrap().value, oracle_bleu(&pairs, false)),
        (chrf_corpus(&hyps, &refs, &chrf).unwrap().value, oracle_chrf(&pairs, 0)),
    ];
    for (a, b) in corpus_checks {
        ensure!((a - b).abs() <= 1e-9, "corpus level: {a} vs oracle {b}");
        worst = worst.max((a - b).abs());
    }
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!("200 pairs, max |diff| {worst:.1e}, {t}"))
}

fn c2_signatures() -> Outcome {
    let bleu = BleuConfig::default();
    ensure!(bleu.max_order == 4 && !bleu.effective_order, "bleu defaults {bleu:?}");
    let sig = bleu.signature();
    ensure!(sig == "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp", "bleu signature {sig}");
    ensure!(sig.parse::<BleuConfig>().map_err(|e| e.to_string())? == bleu, "bleu round trip");
    let chrf = ChrfConfig::default();
    ensure!(chrf.beta == 2.0 && chrf.effective_order && chrf.char_order == 6, "chrf defaults {chrf:?}");
    let sig = chrf.signature();
    ensure!(sig == "nrefs:1|case:mixed|eff:yes|nc:6|nw:0|space:no", "chrf signature {sig}");
    ensure!(sig.parse::<ChrfConfig>().map_err(|e| e.to_string())? == chrf, "chrf round trip");
    let pp = ChrfConfig::chrf_plus_plus();
    ensure!(pp.signature().parse::<ChrfConfig>().map_err(|e| e.to_string())? == pp, "chrf++ round trip");
    let lc = BleuConfig { lowercase: true, max_order: 3, effective_order: true, ..BleuConfig::default() };
    ensure!(lc.signature().parse::<BleuConfig>().map_err(|e| e.to_string())? == lc, "bleu variant round trip");

    let hello = tokenize_13a("Hello, world!").into_inner();
    ensure!(hello == ["Hello", ",", "world", "!"], "13a {hello:?}");
    let num = tokenize_13a("2,000").into_inner();
    ensure!(num == ["2,000"], "13a {num:?}");
    Ok("signatures and 13a goldens".into())
}

fn c3_noise() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let common: Vec<char> = "abcdefghiklmnorstuäöü".chars().collect();
    let rare = ['q', 'x', 'ß'];
    let mut segments = Vec::with_capacity(10_000);
    for i in 0..10_000u32 {
        let toks: Vec<String> = (0..20)
            .map(|_| {
                let len = rng.gen_range(2..=7);
                (0..len)
                    .map(|_| if rng.gen_bool(0.0005) { *rare.choose(&mut rng).unwrap() } else { *common.choose(&mut rng).unwrap() })
                    .collect()
            })
            .collect();
        segments.push(Segment { key: SegmentKey::new("doc", i), source: "quelle".into(), reference: toks.join(" ") });
    }
    let dataset = EvalDataset::new("de-gsw_be", segments, BTreeMap::new(), &LoadOptions::default())
        .map_err(|e| e.to_string())?;
    let (_, tgt) = dataset.languages();
    let alphabet = build_alphabet(dataset.segments().iter().map(|s| s.reference.as_str()), tgt, 1000);
    let allowed: BTreeSet<char> = alphabet.chars().iter().copied().collect();
    let expected: BTreeSet<char> = common.iter().copied().collect();
    ensure!(allowed == expected, "alphabet {allowed:?}");
    let alphabets = BTreeMap::from([(tgt.to_string(), alphabet)]);
    let cfg = NoiseConfig { rate: 0.15, seed: 42, targets: BTreeSet::from([NoiseTarget::Reference]), ..NoiseConfig::default() };

    let run = |threads: usize| -> Result<(EvalDataset, String), String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let (noised, logs) = pool.install(|| noise_dataset(&dataset, &alphabets, &cfg)).map_err(|e| e.to_string())?;
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        noised.write_jsonl(&mut buf).map_err(|e| e.to_string())?;
        h.update(&buf);
        h.update(serde_json::to_vec(&logs).map_err(|e| e.to_string())?);
        Ok((noised, hex::encode(h.finalize())))
    };
    let (noised, h1) = run(8)?;
    let (_, h2) = run(8)?;
    let (_, h3) = run(1)?;
    ensure!(h1 == h2, "two runs differ");
    ensure!(h1 == h3, "1 vs 8 threads differ");

    for (before, after) in dataset.segments().iter().zip(noised.segments()) {
        let (b, a) = (words(&before.reference), words(&after.reference));
        ensure!(b.len() == a.len(), "token count changed in {}", before.key);
        let modified: Vec<(&str, &str)> = b.iter().zip(&a).filter(|(x, y)| x != y).map(|(x, y)| (*x, *y)).collect();
        ensure!(modified.len() == 3, "{} modified tokens in {}", modified.len(), before.key);
        for (x, y) in modified {
            ensure!(oracle_levenshtein(x, y) == 1, "{x:?} -> {y:?}");
            let mut left: Vec<char> = x.chars().collect();
            for c in y.chars() {
                if let Some(i) = left.iter().position(|k| *k == c) {
                    left.remove(i);
                } else {
                    ensure!(allowed.contains(&c), "introduced {c:?} not in alphabet");
                }
            }
        }
    }
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!("10000 sentences, hash {}, {t}", &h1[..12]))
}

fn c4_challenge() -> Outcome {
    let key = SegmentKey::new("d1", 0);
    let hyps = [
        ("s1", "Mir gönd hei."),
        ("s2", "Mir göh hei."),
        ("s3", "Mer gönd hei."),
        ("s4", "Mir gö hei."),
        ("s5", "Mir gönd hei."),
        ("s6", "Mir gönd nöd hei."),
    ];
    let systems = hyps
        .iter()
        .map(|(s, h)| (s.to_string(), BTreeMap::from([(key.clone(), h.to_string())])))
        .collect();
    let seg = Segment { key: key.clone(), source: "Wir gehen heim.".into(), reference: "Mir gönd hei.".into() };
    let dataset = EvalDataset::new("de-gsw_be", vec![seg], systems, &LoadOptions::default()).map_err(|e| e.to_string())?;
    let records = hyps
        .iter()
        .map(|(s, _)| Judgment {
            system_id: s.to_string(),
            key: key.clone(),
            rater_id: "r1".into(),
            score: if *s == "s6" { 70.0 } else { 100.0 },
        })
        .collect();
    let judgments = JudgmentSet { records, aggregation: Default::default() };
    let pairs = extract_perfect_pairs(&dataset, &judgments, 100.0).map_err(|e| e.to_string())?;
    ensure!(pairs.len() == 6, "{} pairs", pairs.len());
    let got: BTreeSet<BTreeSet<&str>> =
        pairs.iter().map(|p| BTreeSet::from([p.hyp_a.as_str(), p.hyp_b.as_str()])).collect();
    let unique = ["Mir gönd hei.", "Mir göh hei.", "Mer gönd hei.", "Mir gö hei."];
    let mut want = BTreeSet::new();
    for i in 0..4 {
        for j in i + 1..4 {
            want.insert(BTreeSet::from([unique[i], unique[j]]));
        }
    }
    ensure!(got == want, "pairs {got:?}");

    ensure!(triple_success(0.90, 0.85, 0.50), "0.90/0.85/0.50 should succeed");
    ensure!(!triple_success(0.7, 0.7, 0.7), "equal scores should fail");
    ensure!(!triple_success(0.9, 0.4, 0.6), "C above min(A, B) should fail");

    // B re-spells A with a consistent vowel map; C swaps one word
    let fold = |s: &str| s.replace(['ö', 'ä'], "e").replace('ü', "i");
    let sentences = ["mir gönd hüt hei", "das hüsli isch chli", "är chunt spät", "mär händ öppis gässe"];
    let swaps = ["morn", "gross", "früe", "trunke"];
    let mut triples = Vec::new();
    for (i, (a, w)) in sentences.iter().zip(swaps).enumerate() {
        let b = fold(a);
        let mut toks: Vec<&str> = a.split(' ').collect();
        toks[2] = w;
        let c = toks.join(" ");
        triples.push(ChallengeTriple {
            pair_id: format!("t{i}"),
            pair: EquivalentPair {
                key: SegmentKey::new("d", i as u32),
                source: "src".into(),
                reference: a.to_string(),
                hyp_a: a.to_string(),
                hyp_b: b,
                system_a: "x".into(),
                system_b: "y".into(),
            },
            hyp_c: c,
            operation: EditOperation::Substitution,
            edited_from: Variant::A,
        });
    }
    let chrf = ChrfConfig::default();
    let invariant =
        success_rate(&triples, |_: &str, r: &str, h: &str| Ok::<_, String>(chrf_sentence(&fold(h), &fold(r), &chrf).value))
            .map_err(|e| e.to_string())?;
    ensure!(invariant.success_rate == 1.0, "invariant scorer {}", invariant.success_rate);
    let constant = success_rate(&triples, |_: &str, _: &str, _: &str| Ok::<_, String>(42.0)).map_err(|e| e.to_string())?;
    ensure!(constant.success_rate == 0.0, "constant scorer {}", constant.success_rate);
    Ok("6 pairs, success boundaries, invariant 1.0, constant 0.0".into())
}

fn c5_stats() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut instances = 0;
    for m in 1..=12usize {
        for _ in 0..100 {
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-4..=4) as f64).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-4..=4) as f64 * 0.5).collect();
            let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let ours = wilcoxon_two_sided(&x, &y).map_err(|e| e.to_string())?;
            let oracle = oracle_wilcoxon(&diffs);
            ensure!((ours - oracle).abs() <= 1e-12, "wilcoxon m={m} {diffs:?}: {ours} vs {oracle}");
            instances += 1;
        }
    }

    for _ in 0..100 {
        let systems = rng.gen_range(2..=6);
        let segments = rng.gen_range(1..=10);
        let mut grid = || -> Vec<Vec<f64>> {
            (0..systems).map(|_| (0..segments).map(|_| rng.gen_range(0..5) as f64).collect()).collect()
        };
        let (h, m) = (grid(), grid());
        let ours = kendall_segment(&grid_tables("human", &h), &grid_tables("m", &m), KendallGrouping::WithinSegment)
            .ok()
            .map(|r| r.statistic);
        match (ours, oracle_kendall(&h, &m)) {
            (None, None) => {}
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
            (a, b) => return Err(format!("kendall {a:?} vs oracle {b:?}")),
        }
    }

    for _ in 0..100 {
        let n = rng.gen_range(1..=40);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(-2..=2) as f64, rng.gen_range(-6..=6) as f64 * 0.25))
            .collect();
        let ours = tie_optimized_from_pairs(&pairs).ok_or("no result")?;
        let mut candidates: Vec<f64> = pairs.iter().map(|p| p.1.abs()).collect();
        candidates.push(0.0);
        candidates.sort_by(f64::total_cmp);
        let (mut best_eps, mut best) = (0.0, -1.0);
        for &eps in &candidates {
            let acc = oracle_tie_accuracy(&pairs, eps);
            if acc > best {
                (best_eps, best) = (eps, acc);
            }
        }
        ensure!((ours.accuracy - best).abs() <= 1e-12, "tie accuracy {} vs {best}", ours.accuracy);
        ensure!(
            (oracle_tie_accuracy(&pairs, ours.epsilon_star) - best).abs() <= 1e-12,
            "eps* {} does not reach the optimum",
            ours.epsilon_star
        );
        // same threshold class: the same pairs are labelled as ties
        let tied = |eps: f64| pairs.iter().map(|p| p.1.abs() <= eps).collect::<Vec<_>>();
        ensure!(tied(ours.epsilon_star) == tied(best_eps), "eps* {} vs oracle {best_eps}", ours.epsilon_star);
    }
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!("{instances} wilcoxon, 100 kendall, 100 tie-opt instances, {t}"))
}

fn c6_sanity() -> Outcome {
    let cfg = SynthConfig { systems: 5, segments: 100, dialects: vec!["BE".into()], seed: 6, ..SynthConfig::default() };
    let d = generate(&cfg).map_err(|e| e.to_string())?.remove(0);
    let human_seg = average_judgments(&d.judgments).map_err(|e| e.to_string())?;
    let human_sys = system_average(&human_seg, &d.dataset).map_err(|e| e.to_string())?;
    let rename = |t: &ScoreTable, negate: bool| {
        let mut t = t.clone();
        t.metric_id = "metric".into();
        if negate {
            t.entries.values_mut().for_each(|v| *v = -*v);
        }
        t
    };
    let opts = PairwiseOptions::default();
    let mut summary = Vec::new();
    for negate in [false, true] {
        let (mseg, msys) = (rename(&human_seg, negate), rename(&human_sys, negate));
        let pw = pairwise_accuracy(&human_sys, &msys, &human_seg, opts).map_err(|e| e.to_string())?;
        ensure!(pw.n_significant >= 3, "only {} significant pairs", pw.n_significant);
        let kendall = kendall_segment(&human_seg, &mseg, KendallGrouping::WithinSegment).map_err(|e| e.to_string())?;
        let want = if negate { (0.0, -1.0) } else { (1.0, 1.0) };
        ensure!(pw.accuracy == Some(want.0), "pairwise {:?} (negate={negate})", pw.accuracy);
        ensure!(kendall.statistic == want.1, "kendall {} (negate={negate})", kendall.statistic);
        if !negate {
            let systems: Vec<String> = human_sys.systems().into_iter().map(String::from).collect();
            let h = SystemScores::from_table(&human_sys, &systems).map_err(|e| e.to_string())?;
            let m = SystemScores::from_table(&msys, &systems).map_err(|e| e.to_string())?;
            let r = pearson(&h.values, &m.values).map_err(|e| e.to_string())?;
            ensure!(r.statistic == 1.0, "pearson {}", r.statistic);
            let tie = dialect_eval::stats::tie_optimized_accuracy(&human_seg, &mseg).map_err(|e| e.to_string())?;
            ensure!(tie.accuracy == 1.0, "tie-optimized {}", tie.accuracy);
        }
        summary.push(pw.n_significant);
    }
    Ok(format!("{} significant pairs; identity 1/1/1/1, sign flip 0/-1", summary[0]))
}

fn dialect_eval(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dialect-eval")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut files = 0;
    for entry in fs::read_dir(a).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let other = b.join(entry.file_name());
        if entry.path().is_dir() {
            files += same_tree(&entry.path(), &other)?;
        } else {
            let x = fs::read(entry.path()).map_err(|e| e.to_string())?;
            let y = fs::read(&other).map_err(|e| format!("{}: {e}", other.display()))?;
            ensure!(x == y, "{} differs", other.display());
            files += 1;
        }
    }
    Ok(files)
}

fn c7_end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_string();
    dialect_eval(&["synth", "--systems", "8", "--segments", "200", "--seed", "1", "--out", &p("data")])?;
    let ds = |l: &str| format!("{l}={}", p(&format!("data/{l}.jsonl")));
    let jd = |l: &str| format!("{l}={}", p(&format!("data/{l}.judgments.tsv")));
    let tr = |l: &str| format!("{l}={}", p(&format!("data/{l}.triples.tsv")));
    #[rustfmt::skip]
    let args = [
        "evaluate",
        "--dataset", &ds("BE"), "--dataset", &ds("ZH"),
        "--judgments", &jd("BE"), "--judgments", &jd("ZH"),
        "--triples", &tr("BE"), "--triples", &tr("ZH"),
        "--metric", "bleu", "--metric", "chrf",
        "--baseline", "BLEU", "--seed", "7",
        "--out", &p("run1"),
    ];
    dialect_eval(&args)?;
    dialect_eval(&["replay", &p("run1/manifest.json"), "--out", &p("run2")])?;
    let files = same_tree(tmp.path().join("run1").as_path(), tmp.path().join("run2").as_path())?;

    let text = fs::read_to_string(p("run1/report.tsv")).map_err(|e| e.to_string())?;
    let report = EvaluationReport::from_tsv(&text).map_err(|e| e.to_string())?;
    let mut want = vec![(Column::PairwiseAccuracy, ALL_DIALECTS.to_string())];
    for col in [Column::Pearson, Column::TieOptimized, Column::Kendall, Column::SuccessRate] {
        for l in ["BE", "ZH"] {
            want.push((col, l.to_string()));
        }
    }
    ensure!(report.columns() == want, "columns {:?}", report.columns());
    ensure!(report.rows.len() == 2, "{} rows", report.rows.len());
    ensure!(report.undefined_cells().is_empty(), "undefined cells {:?}", report.undefined_cells());
    for metric in ["BLEU", "chrF"] {
        for l in ["BE", "ZH"] {
            let plot = fs::read_to_string(p(&format!("run1/plot/{metric}.{l}.tsv"))).map_err(|e| e.to_string())?;
            ensure!(plot.lines().count() == 1 + 28, "{metric}.{l}: {} lines", plot.lines().count());
        }
    }
    let t = within(Duration::from_secs(120), start)?;
    Ok(format!("9 columns, 28-row plots, {files} files identical on replay, {t}"))
}

/// Mean chrF of the meaning-preserving variants against the noised reference
/// must fall to this value or below; fixed before the first run.
const C8_MAX_MEAN_CHRF: f64 = 90.0;

fn c8_directional() -> Outcome {
    let cfg = SynthConfig { systems: 2, segments: 300, dialects: vec!["BE".into()], seed: 8, ..SynthConfig::default() };
    let base = generate(&cfg).map_err(|e| e.to_string())?.remove(0).dataset;
    // copy system: every hypothesis is the clean reference
    let copies = BTreeMap::from([(
        "copy".to_string(),
        base.segments().iter().map(|s| (s.key.clone(), s.reference.clone())).collect::<BTreeMap<_, _>>(),
    )]);
    let dataset = EvalDataset::new(base.lang_pair.clone(), base.segments().to_vec(), copies, &LoadOptions::default())
        .map_err(|e| e.to_string())?;
    let triples = challenge_triples(&dataset, 0.15, 8).map_err(|e| e.to_string())?;
    ensure!(triples.len() >= 250, "only {} triples", triples.len());

    let chrf = ChrfConfig::default();
    let variant_scores: Vec<f64> = triples
        .iter()
        .flat_map(|t| [Variant::A, Variant::B].map(|v| chrf_sentence(t.hypothesis(v), &t.pair.reference, &chrf).value))
        .collect();
    let mean = variant_scores.iter().sum::<f64>() / variant_scores.len() as f64;
    ensure!(mean <= C8_MAX_MEAN_CHRF, "mean chrF of A/B variants {mean:.2} > {C8_MAX_MEAN_CHRF}");
    let report = success_rate(&triples, |_: &str, r: &str, h: &str| Ok::<_, String>(chrf_sentence(h, r, &chrf).value))
        .map_err(|e| e.to_string())?;
    ensure!(report.success_rate < 0.5, "chrF success rate {}", report.success_rate);
    Ok(format!(
        "{} triples, mean chrF(A,B) {mean:.2}, chrF success rate {:.3}",
        triples.len(),
        report.success_rate
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("string-metric oracle equivalence", c1_string_metrics),
        ("signature conformance", c2_signatures),
        ("noise injection statistics", c3_noise),
        ("challenge combinatorics", c4_challenge),
        ("statistics oracles", c5_stats),
        ("meta-evaluation sanity", c6_sanity),
        ("end-to-end replay", c7_end_to_end),
        ("directional spelling-variation finding", c8_directional),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{detail}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{why}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
