//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use langrec::data_io::{Corpus, IVectorRecord, PairKind, TrialPair};
use langrec::dnn::{init_dnn, loss_and_gradients, DnnModel};
use langrec::duration_fusion::{fit_density_model, lr_universal, transform_scores, DensityConfig};
use langrec::fusion_eval::{compute_cost, det_points, CostParams};
use langrec::gmm::{fit_gmm_em, fit_gmm_mml, map_adapt, CovarianceKind, GmmConfig};
use langrec::gmm_system::{loo_scores, train_language_models, GmmSystemConfig};
use langrec::pipeline::{run, PipelineConfig, PipelineReport};
use langrec::preprocess::{fit_center_whiten, apply_center_whiten, fit_lda, length_normalize, Preprocessor};
use langrec::scores::{ScoreKind, TrialScoreMatrix};
use langrec::{seeded_rng, OUT_OF_SET};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

const ACCEPTANCE_SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn normal(rng: &mut langrec::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two pipeline runs on the acceptance corpus into separate directories.
struct PipelineRuns {
    report: PipelineReport,
    first_run: Duration,
    identical: Result<usize, String>,
}

fn pipeline_runs() -> PipelineRuns {
    let cfg = PipelineConfig::acceptance(ACCEPTANCE_SEED);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let report = run(&cfg, Some(a.path())).expect("pipeline run");
    let first_run = t.elapsed();
    run(&cfg, Some(b.path())).expect("second pipeline run");
    PipelineRuns { report, first_run, identical: compare_dirs(a.path(), b.path()) }
}

/// Number of files compared, or the first difference.
fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let list = |d: &Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect()
    };
    let (fa, fb) = (list(a), list(b));
    if fa.keys().ne(fb.keys()) {
        return Err("different file sets".into());
    }
    for (name, bytes) in &fa {
        if &fb[name] != bytes {
            return Err(format!("{name} differs"));
        }
    }
    Ok(fa.len())
}

fn criterion_1(runs: &PipelineRuns) -> Outcome {
    let r = &runs.report;
    let (a, c) = (r.cost("gmm").unwrap(), r.cost("gmm_lr").unwrap());
    let (d, cd) = (r.cost("dnn_lr").unwrap(), r.cost("gmm_lr+dnn_lr").unwrap());
    let rel = (a - c) / a;
    let secs = runs.first_run.as_secs_f64();
    let pass = c < a && rel >= 0.03 && cd <= c.min(d) && secs <= 300.0;
    outcome(
        pass,
        format!("A={a:.3} C={c:.3} ({:+.1}% relative) D={d:.3} C+D={cd:.3} runtime={secs:.1}s", 100.0 * rel),
    )
}

fn criterion_2(runs: &PipelineRuns) -> Outcome {
    let r = &runs.report;
    let (base, a) = (r.cost("baseline").unwrap(), r.cost("gmm").unwrap());
    outcome(base > a, format!("baseline={base:.3} gmm={a:.3}"))
}

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(3);
    let data: Vec<Vec<f64>> = (0..10_000)
        .map(|i| vec![if i % 2 == 0 { -5.0 } else { 5.0 } + normal(&mut rng)])
        .collect();
    let t = Instant::now();
    let cfg = GmmConfig { seed: 3, ..GmmConfig::default() };
    let fit = fit_gmm_em(&data, 2, &cfg).expect("EM fit");
    let secs = t.elapsed().as_secs_f64();
    let mut means: Vec<f64> = fit.model.means().iter().map(|m| m[0]).collect();
    means.sort_by(f64::total_cmp);
    let worst_step = fit.log_likelihoods.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let pass = (means[0] + 5.0).abs() <= 0.1 && (means[1] - 5.0).abs() <= 0.1 && worst_step >= -1e-9 && secs < 10.0;
    outcome(
        pass,
        format!(
            "means=({:.4}, {:.4}) smallest log-likelihood step={worst_step:.3e} iterations={} runtime={secs:.2}s",
            means[0],
            means[1],
            fit.iterations
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = seeded_rng(4);
    let centers = [[-2.0, 0.0], [2.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
    let records: Vec<IVectorRecord> = (0..100)
        .map(|i| {
            let c = centers[i % 4];
            IVectorRecord {
                id: format!("v{i}"),
                duration_s: 10.0,
                label: Some(format!("lang{}", i % 4)),
                vec: vec![c[0] + normal(&mut rng), c[1] + normal(&mut rng)],
            }
        })
        .collect();
    let train = Corpus::new(2, records).unwrap();
    let cfg = GmmSystemConfig {
        components: 2,
        relevance: 4.0,
        em: GmmConfig { seed: 4, ..GmmConfig::default() },
    };
    let models = train_language_models(&train, &train, &cfg, "raw").unwrap();
    let loo = loo_scores(&models, &train).unwrap();

    let mut worst = 0.0f64;
    for (i, r) in train.records().iter().enumerate() {
        for (l, lang) in models.languages.iter().enumerate() {
            let adapted = if r.label.as_deref() == Some(lang) {
                let rest: Vec<Vec<f64>> = train
                    .records()
                    .iter()
                    .enumerate()
                    .filter(|(j, o)| *j != i && o.label.as_deref() == Some(lang))
                    .map(|(_, o)| o.vec.clone())
                    .collect();
                map_adapt(&models.ubm, &rest, cfg.relevance).unwrap()
            } else {
                models.per_language[l].clone()
            };
            let brute = adapted.log_likelihood(&r.vec).unwrap() - models.ubm.log_likelihood(&r.vec).unwrap();
            worst = worst.max((brute - loo.matrix.get(i, l)).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max |LOO − brute force| = {worst:.3e} over 100 × 4 scores"))
}

fn criterion_5() -> Outcome {
    let centers = [[-10.0, -10.0], [10.0, -10.0], [-10.0, 10.0], [10.0, 10.0]];
    let mut four = 0;
    let mut one = 0;
    let mut picked = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let mut rng = seeded_rng(500 + seed);
        let data: Vec<Vec<f64>> = (0..800)
            .map(|i| {
                let c = centers[i % 4];
                vec![c[0] + normal(&mut rng), c[1] + normal(&mut rng)]
            })
            .collect();
        let cfg = GmmConfig { seed, covariance_kind: CovarianceKind::Full, ..GmmConfig::default() };
        let c = fit_gmm_mml(&data, 16, &cfg).unwrap().model.n_components();
        four += usize::from(c == 4);
        picked.0.push(c);

        let single: Vec<Vec<f64>> = (0..5000).map(|_| vec![normal(&mut rng), 2.0 * normal(&mut rng)]).collect();
        let c = fit_gmm_mml(&single, 8, &cfg).unwrap().model.n_components();
        one += usize::from(c == 1);
        picked.1.push(c);
    }
    outcome(
        four >= 16 && one >= 18,
        format!("C=4 chosen {four}/20 {:?}; C=1 chosen {one}/20 {:?}", picked.0, picked.1),
    )
}

fn criterion_6() -> Outcome {
    let model = init_dnn(&[3, 5, 4], (0..4).map(|i| format!("l{i}")).collect(), 6).unwrap();
    let mut rng = seeded_rng(6);
    let inputs: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| normal(&mut rng)).collect()).collect();
    let targets: Vec<usize> = (0..8).map(|i| i % 4).collect();
    let l2 = 1e-3;
    let (_, grads) = loss_and_gradients(&model, &inputs, &targets, l2).unwrap();
    let loss = |m: &DnnModel| loss_and_gradients(m, &inputs, &targets, l2).unwrap().0;
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..model.layers.len() {
        let (outs, ins) = (model.layers[k].outputs, model.layers[k].inputs);
        for o in 0..outs {
            for i in 0..=ins {
                let analytic = if i < ins { grads.weights[k][(o, i)] } else { grads.biases[k][o] };
                let nudge = |delta: f64| {
                    let mut m = model.clone();
                    if i < ins {
                        m.layers[k].weights[o * ins + i] += delta;
                    } else {
                        m.layers[k].bias[o] += delta;
                    }
                    loss(&m)
                };
                let numeric = (nudge(h) - nudge(-h)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.3e} over {count} parameters"))
}

/// Per-class tallies written out directly from the definition.
fn tallied_cost(decisions: &[(String, String)], truth: &[(String, String)], n: usize, p_oos: f64) -> f64 {
    let mut classes: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    let mut oos = (0.0, 0.0);
    for ((_, d), (_, t)) in decisions.iter().zip(truth) {
        let wrong = if d == t { 0.0 } else { 1.0 };
        if t == OUT_OF_SET {
            oos = (oos.0 + wrong, oos.1 + 1.0);
        } else {
            let e = classes.entry(t.as_str()).or_default();
            *e = (e.0 + wrong, e.1 + 1.0);
        }
    }
    let in_set: f64 = classes.values().map(|(e, t)| e / t).sum();
    let oos_rate = if oos.1 > 0.0 { oos.0 / oos.1 } else { 0.0 };
    100.0 * ((1.0 - p_oos) / n as f64 * in_set + p_oos * oos_rate)
}

fn criterion_7() -> Outcome {
    let pairs = |v: &[(&str, &str)]| -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    };
    let truth = pairs(&[("1", "A"), ("2", "A"), ("3", "B"), ("4", "B"), ("5", OUT_OF_SET)]);
    let dec = pairs(&[("1", "A"), ("2", "B"), ("3", "B"), ("4", "B"), ("5", "A")]);
    let hand = compute_cost(&dec, &truth, &CostParams { n_classes: 2, p_oos: 0.23, scale: 100.0 }).unwrap().cost;

    let mut rng = seeded_rng(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..6usize);
        let labels: Vec<String> =
            (0..n).map(|k| format!("L{k}")).chain(std::iter::once(OUT_OF_SET.to_string())).collect();
        let segs = rng.random_range(1..40usize);
        let mut truth = Vec::new();
        let mut dec = Vec::new();
        for s in 0..segs {
            truth.push((format!("s{s}"), labels[rng.random_range(0..labels.len())].clone()));
            dec.push((format!("s{s}"), labels[rng.random_range(0..labels.len())].clone()));
        }
        let p_oos = rng.random_range(0.0..1.0);
        let got = compute_cost(&dec, &truth, &CostParams { n_classes: n, p_oos, scale: 100.0 }).unwrap().cost;
        worst = worst.max((got - tallied_cost(&dec, &truth, n, p_oos)).abs());
    }
    outcome(hand == 42.25 && worst <= 1e-9, format!("hand case={hand}; max deviation over 100 instances {worst:.3e}"))
}

fn criterion_8() -> Outcome {
    let mut rng = seeded_rng(8);
    let languages: Vec<String> = (0..3).map(|k| format!("l{k}")).collect();
    let mut pairs = Vec::new();
    for (k, lang) in languages.iter().enumerate() {
        for _ in 0..300 {
            let log_dur = rng.random_range(0.5..4.0);
            let tar = rng.random_bool(0.3);
            let score = if tar { 2.0 + k as f64 + 0.5 * log_dur } else { -1.0 } + normal(&mut rng);
            let kind = if tar { PairKind::Target } else { PairKind::Nontarget };
            pairs.push(TrialPair { score, log_dur, language: lang.clone(), kind });
        }
    }
    let cfg = DensityConfig { c_max: 4, relevance: 1e15, ..DensityConfig::default() };
    let model = fit_density_model(&pairs, &languages, ScoreKind::Gmm, &cfg).unwrap();

    let mut same = model.clone();
    same.universal_nontarget = same.universal_target.clone();
    let mut zero_dev = 0.0f64;
    for _ in 0..200 {
        let (s, d) = (4.0 * normal(&mut rng), rng.random_range(0.0..5.0));
        zero_dev = zero_dev.max(lr_universal(&same, s, d).unwrap().abs());
    }

    let ids: Vec<String> = (0..50).map(|i| format!("t{i}")).collect();
    let durations: Vec<f64> = (0..50).map(|_| rng.random_range(2.0..60.0)).collect();
    let scores: Vec<f64> = (0..150).map(|_| 3.0 * normal(&mut rng)).collect();
    let raw = TrialScoreMatrix::new(ids, durations, languages.clone(), scores, ScoreKind::Gmm).unwrap();
    let per = transform_scores(&model, &raw, true).unwrap();
    let uni = transform_scores(&model, &raw, false).unwrap();
    let adapt_dev =
        per.scores().iter().zip(uni.scores()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    outcome(
        zero_dev == 0.0 && adapt_dev <= 1e-6,
        format!("equal densities max |log LR|={zero_dev:.1e}; r=1e15 per-language vs universal max diff={adapt_dev:.3e}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = seeded_rng(9);
    let dim = 12;
    let mix: Vec<Vec<f64>> = (0..dim).map(|_| (0..dim).map(|_| normal(&mut rng)).collect()).collect();
    let record = |rng: &mut langrec::Rng, i: usize, label: Option<String>, shift: f64| {
        let z: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let vec = (0..dim).map(|r| shift + (0..dim).map(|c| mix[r][c] * z[c]).sum::<f64>()).collect();
        IVectorRecord { id: format!("r{i}"), duration_s: 5.0, label, vec }
    };
    let dev = Corpus::new(dim, (0..400).map(|i| record(&mut rng, i, None, 3.0)).collect()).unwrap();
    let w = fit_center_whiten(&dev, 1e-10).unwrap();
    let white: Vec<Vec<f64>> = dev.records().iter().map(|r| apply_center_whiten(&w, &r.vec).unwrap()).collect();
    let n = white.len() as f64;
    let mut frob = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            let mean_a = white.iter().map(|v| v[a]).sum::<f64>() / n;
            let mean_b = white.iter().map(|v| v[b]).sum::<f64>() / n;
            let cov = white.iter().map(|v| (v[a] - mean_a) * (v[b] - mean_b)).sum::<f64>() / n;
            let target = if a == b { 1.0 } else { 0.0 };
            frob += (cov - target).powi(2);
        }
    }
    let frob = frob.sqrt();

    let unit_dev = white
        .iter()
        .map(|v| (length_normalize(v).unwrap().iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0f64, f64::max);

    let classes = 5;
    let train = Corpus::new(
        dim,
        (0..300).map(|i| record(&mut rng, i, Some(format!("c{}", i % classes)), (i % classes) as f64)).collect(),
    )
    .unwrap();
    let mut dims_ok = true;
    let mut seen = Vec::new();
    for k in [1, 3, 4, 6, 11] {
        if k < classes {
            dims_ok &= fit_lda(&train, k, 1e-10).unwrap().output_dim() == k;
        }
        let full = Preprocessor::fit(&dev, &train, 1e-10, Some(k)).unwrap();
        let got = full.lda.as_ref().map_or(0, |l| l.output_dim());
        dims_ok &= got == k.min(classes - 1);
        seen.push((k, got));
    }
    outcome(
        frob <= 1e-6 && unit_dev <= 1e-12 && dims_ok,
        format!("whitened covariance Frobenius error {frob:.2e}; max unit-norm deviation {unit_dev:.1e}; LDA (k, dim) {seen:?}"),
    )
}

fn criterion_10(runs: &PipelineRuns) -> Outcome {
    let mut rng = seeded_rng(10);
    let mut monotone = true;
    for _ in 0..50 {
        let n = rng.random_range(2..200usize);
        let scores: Vec<f64> = (0..n).map(|_| (normal(&mut rng) * 4.0).round() / 4.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let curve = det_points(&scores, &labels).unwrap();
        monotone &= curve.points.windows(2).all(|w| {
            w[0].threshold < w[1].threshold && w[1].false_alarm <= w[0].false_alarm && w[1].miss >= w[0].miss
        });
    }
    let r = &runs.report;
    outcome(
        monotone && r.eer_gmm_lr <= r.eer_gmm,
        format!("monotone on 50 random curves: {monotone}; EER gmm={:.4} gmm_lr={:.4}", r.eer_gmm, r.eer_gmm_lr),
    )
}

fn criterion_11(runs: &PipelineRuns) -> Outcome {
    match &runs.identical {
        Ok(n) => outcome(true, format!("{n} output files bit-identical across two runs")),
        Err(e) => outcome(false, e.clone()),
    }
}

fn main() {
    let runs = pipeline_runs();
    println!("acceptance corpus (seed {ACCEPTANCE_SEED}): {}", runs.report.summary_line());
    let results = [
        ("1 duration-LR GMM beats raw GMM by >= 3%, C+D <= min(C, D), runtime", criterion_1(&runs)),
        ("2 baseline cost above GMM cost", criterion_2(&runs)),
        ("3 EM oracle", criterion_3()),
        ("4 MAP leave-one-out oracle", criterion_4()),
        ("5 MML component selection", criterion_5()),
        ("6 network gradient check", criterion_6()),
        ("7 cost oracle", criterion_7()),
        ("8 likelihood-ratio identities", criterion_8()),
        ("9 preprocessing invariants", criterion_9()),
        ("10 DET monotonicity and EER ordering", criterion_10(&runs)),
        ("11 pipeline determinism", criterion_11(&runs)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
