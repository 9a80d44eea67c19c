//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Criteria can be selected by name, e.g.
//! `cargo test -p grbm-cli --test acceptance -- C1 C7`.
//!
//! Set `GRBM_ACCEPTANCE_IMAGES` to a directory of grayscale images (PGM or
//! text matrices) for the patch check; synthetic dead-leaves scenes are used
//! otherwise.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use grbm::data::dead_leaves_image;
use grbm::data::io::load_image;
use grbm::estimators::{ais_log_partition, AisConfig};
use grbm::exact::{exact_gradient, log_partition_exact, mixture_view, poe_expert_logs};
use grbm::experiment::{
    run_bss, run_bss_trial, run_patch_study, run_sampler_bench, BssConfig, ExperimentReport,
    PatchStudyConfig, Recovery, SamplerBenchConfig, TrialRecord,
};
use grbm::rng::{seeded, stream};
use grbm::training::init_params;
use grbm::{DataBatch, ExactDensity, GrbmParams};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with('C'))
        .collect();
    let criteria: [(&str, &str, fn() -> Verdict); 10] = [
        ("C1", "marginal forms and quadrature", c1_exactness),
        ("C2", "gradient against finite differences", c2_gradient),
        ("C3", "separation log-likelihood table", c3_table),
        ("C4", "order masses", c4_order_mass),
        ("C5", "recovery statistics", c5_recovery),
        ("C6", "AIS against enumeration", c6_ais),
        ("C7", "initial mixing ratio", c7_init_ratio),
        ("C8", "sampler comparison", c8_samplers),
        ("C9", "image patches", c9_patches),
        ("C10", "determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{id:<4} {} {name}: {} [{secs:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// Oracles written against the energy definition, independent of the
// library's density code.

fn energy(p: &GrbmParams, x: ArrayView1<f64>, h: &[f64]) -> f64 {
    let s2 = p.sigma * p.sigma;
    let mut quad = 0.0;
    let mut inter = 0.0;
    for i in 0..p.n_visible() {
        quad += (x[i] - p.visible_bias[i]).powi(2);
        for (j, hj) in h.iter().enumerate() {
            inter += x[i] * p.weights[[i, j]] * hj;
        }
    }
    let bias: f64 = h.iter().zip(p.hidden_bias.iter()).map(|(a, b)| a * b).sum();
    quad / (2.0 * s2) - bias - inter / s2
}

fn states(n: usize) -> Vec<Vec<f64>> {
    (0..1u32 << n)
        .map(|s| (0..n).map(|j| f64::from((s >> j) & 1)).collect())
        .collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn brute_log_unnormalized(p: &GrbmParams, x: ArrayView1<f64>) -> f64 {
    let terms: Vec<f64> = states(p.n_hidden())
        .iter()
        .map(|h| -energy(p, x, h))
        .collect();
    log_sum_exp(&terms)
}

/// Midpoint rule for `∫∫ Σ_h e^{−E}` over a box that covers every
/// component mean by 10σ.
fn quadrature_z(p: &GrbmParams, step: f64) -> f64 {
    let hs = states(p.n_hidden());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for h in &hs {
        for i in 0..2 {
            let m = p.visible_bias[i] + (0..h.len()).map(|j| p.weights[[i, j]] * h[j]).sum::<f64>();
            lo[i] = lo[i].min(m - 10.0 * p.sigma);
            hi[i] = hi[i].max(m + 10.0 * p.sigma);
        }
    }
    let nx = ((hi[0] - lo[0]) / step).ceil() as usize;
    let ny = ((hi[1] - lo[1]) / step).ceil() as usize;
    let mut total = 0.0;
    let mut x = Array1::zeros(2);
    for a in 0..nx {
        x[0] = lo[0] + (a as f64 + 0.5) * step;
        for b in 0..ny {
            x[1] = lo[1] + (b as f64 + 0.5) * step;
            total += hs
                .iter()
                .map(|h| (-energy(p, x.view(), h)).exp())
                .sum::<f64>();
        }
    }
    total * step * step
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn c1_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded(2024);
    let mut worst_form = 0.0f64;
    let mut worst_quad = 0.0f64;
    for i in 0..50 {
        let (m, n) = (2 + i % 2, 2 + (i / 2) % 2);
        let p = GrbmParams::random(m, n, 1.5, &mut rng);
        let log_z = log_partition_exact(&p).unwrap();
        let view = mixture_view(&p).unwrap();
        for _ in 0..20 {
            let x = Array1::from_shape_fn(m, |_| rng.random_range(-4.0..4.0));
            let direct = brute_log_unnormalized(&p, x.view()) - log_z;
            let poe = poe_expert_logs(x.view(), &p).unwrap().log_pdf();
            let mog = view.log_pdf(x.view()).unwrap();
            worst_form = worst_form.max(rel(poe, direct)).max(rel(mog, direct));
        }
        if m == 2 {
            worst_quad = worst_quad.max(rel(log_z.exp(), quadrature_z(&p, 0.02)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_form < 1e-10 && worst_quad < 1e-3 && secs < 60.0,
        format!("max relative gap between forms {worst_form:.1e} (< 1e-10), Z vs quadrature {worst_quad:.1e} (< 1e-3)"),
    )
}

fn c2_gradient() -> Verdict {
    let mut rng = seeded(77);
    let p = GrbmParams::random(3, 3, 1.0, &mut rng);
    let d = DataBatch::new(Array2::from_shape_fn((60, 3), |_| {
        rng.random_range(-2.5..2.5)
    }))
    .unwrap();
    let g = exact_gradient(&d, &p).unwrap();
    let ll = |q: &GrbmParams| {
        ExactDensity::new(q)
            .unwrap()
            .avg_log_likelihood(&d)
            .unwrap()
    };
    let step = 1e-5;
    let fd = |poke: &dyn Fn(&mut GrbmParams, f64)| {
        let (mut a, mut b) = (p.clone(), p.clone());
        poke(&mut a, step);
        poke(&mut b, -step);
        (ll(&a) - ll(&b)) / (2.0 * step)
    };
    let mut worst = 0.0f64;
    let mut track = |analytic: f64, numeric: f64| {
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1e-3));
    };
    for i in 0..3 {
        for j in 0..3 {
            track(g.d_w[[i, j]], fd(&|q, s| q.weights[[i, j]] += s));
        }
        track(g.d_b[i], fd(&|q, s| q.visible_bias[i] += s));
        track(g.d_c[i], fd(&|q, s| q.hidden_bias[i] += s));
    }
    track(g.d_sigma, fd(&|q, s| q.sigma += s));
    verdict(
        worst < 1e-6,
        format!("max relative error {worst:.1e} over W, b, c, σ (< 1e-6)"),
    )
}

/// Trials 0..20 as one timed run, then trials 20..40 added; per-trial seeds
/// are derived from the master seed, so the first block is exactly the
/// 20-trial study.
struct BssRun {
    first: ExperimentReport,
    all: ExperimentReport,
    first_seconds: f64,
}

fn bss_run() -> &'static BssRun {
    static RUN: std::sync::OnceLock<BssRun> = std::sync::OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = BssConfig {
            trials: 20,
            ..BssConfig::default()
        };
        let start = Instant::now();
        let first = run_bss(&cfg).expect("bss run");
        let first_seconds = start.elapsed().as_secs_f64();
        let mut records = first.records.clone();
        for t in 20..40 {
            match run_bss_trial(&cfg, t) {
                Ok((r, _)) => records.extend(r),
                Err(e) => records.push(TrialRecord::failed(t, 0, "trial", &e)),
            }
        }
        BssRun {
            first,
            all: ExperimentReport::from_records(records),
            first_seconds,
        }
    })
}

fn mean_test(report: &ExperimentReport, method: &str) -> f64 {
    report
        .summary_for(method, "test_ll")
        .map_or(f64::NAN, |s| s.mean)
}

fn c3_table() -> Verdict {
    let run = bss_run();
    let r = &run.first;
    let (grbm, gauss, ica, truth) = (
        mean_test(r, "grbm-2-2"),
        mean_test(r, "gaussian"),
        mean_test(r, "ica"),
        mean_test(r, "true"),
    );
    // Whitened 2-D data: N(0, I) has ℓ = −(1 + ln 2π); unit-variance
    // Laplace sources have ℓ = −2(1 + ln √2).
    let gauss_analytic = -(1.0 + (2.0 * PI).ln());
    let laplace_analytic = -2.0 * (1.0 + 2f64.sqrt().ln());
    let checks = [
        (grbm - -2.807).abs() <= 0.03,
        (gauss - gauss_analytic).abs() <= 0.01 && (gauss - -2.8367).abs() <= 0.01,
        (ica - -2.738).abs() <= 0.03,
        (truth - -2.692).abs() <= 0.02 && (truth - laplace_analytic).abs() <= 0.02,
        gauss < grbm && grbm < ica && ica < truth,
        run.first_seconds < 600.0,
    ];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "GRBM-2-2 {grbm:.4}, Gaussian {gauss:.4} (analytic {gauss_analytic:.4}), ICA {ica:.4}, \
             true {truth:.4} (analytic {laplace_analytic:.4}); 20 trials in {:.0} s",
            run.first_seconds
        ),
    )
}

fn by_trial<'a>(r: &'a ExperimentReport, method: &'a str) -> Vec<&'a TrialRecord> {
    r.records_for(method)
        .filter(|t| t.error.is_none())
        .collect()
}

fn c4_order_mass() -> Verdict {
    let r = &bss_run().all;
    let gauss: Vec<f64> = by_trial(r, "gaussian")
        .iter()
        .map(|t| t.test_ll.unwrap())
        .collect();
    let all = by_trial(r, "grbm-2-2");
    let trained: Vec<&TrialRecord> = all
        .iter()
        .copied()
        .filter(|t| gauss.get(t.trial).is_some_and(|g| t.test_ll.unwrap() > *g))
        .collect();
    let masses: Vec<&Vec<f64>> = trained
        .iter()
        .filter_map(|t| t.order_mass.as_ref())
        .collect();
    let min_anchor = masses.iter().map(|m| m[0]).fold(f64::INFINITY, f64::min);
    let max_second = masses.iter().map(|m| m[2]).fold(0.0, f64::max);
    let big: Vec<&Vec<f64>> = by_trial(r, "grbm-2-4")
        .iter()
        .filter_map(|t| t.order_mass.as_ref())
        .collect();
    let profile: Vec<f64> = (0..5)
        .map(|k| big.iter().map(|m| m[k]).sum::<f64>() / big.len() as f64)
        .collect();
    let decreasing = !big.is_empty() && profile.windows(2).all(|w| w[0] > w[1]);
    let mog: Vec<f64> = by_trial(r, "mog-3")
        .iter()
        .filter_map(|t| t.order_mass.as_ref().map(|w| w[0]))
        .collect();
    let min_dominant = mog.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        trained.len() * 2 >= all.len()
            && !masses.is_empty()
            && min_anchor >= 0.95
            && max_second <= 1e-3
            && decreasing
            && !mog.is_empty()
            && min_dominant >= 0.95,
        format!(
            "{}/{} GRBM-2-2 trials beat the Gaussian: anchor ≥ {min_anchor:.4}, 2nd order ≤ {max_second:.1e}; \
             GRBM-2-4 profile [{}]; MoG-3 dominant weight ≥ {min_dominant:.4}",
            trained.len(),
            all.len(),
            profile.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c5_recovery() -> Verdict {
    let r = &bss_run().all;
    let trials = by_trial(r, "grbm-2-2");
    let recovered = trials
        .iter()
        .filter(|t| t.recovery == Some(Recovery::Recovered))
        .count();
    let fraction = recovered as f64 / trials.len().max(1) as f64;
    let lls: Vec<f64> = trials.iter().map(|t| t.test_ll.unwrap()).collect();
    let mean = lls.iter().sum::<f64>() / lls.len().max(1) as f64;
    let spread = lls.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    verdict(
        trials.len() >= 40 && (0.2..=0.8).contains(&fraction) && spread <= 0.05,
        format!(
            "{recovered}/{} trials recovered both directions ({fraction:.3}); max |ℓ̂ − mean| {spread:.4} (≤ 0.05)",
            trials.len()
        ),
    )
}

fn c6_ais() -> Verdict {
    let p = GrbmParams::random(6, 10, 1.0, &mut seeded(606));
    let exact = log_partition_exact(&p).unwrap();
    let errors: Vec<f64> = (0..20)
        .map(|seed| {
            let cfg = AisConfig {
                num_chains: 100,
                num_betas: 1000,
                seed,
                ..AisConfig::default()
            };
            (ais_log_partition(&p, &cfg).unwrap().log_z - exact).abs()
        })
        .collect();
    let good = errors.iter().filter(|&&e| e <= 0.05).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    verdict(
        good >= 18,
        format!("{good}/20 runs within 0.05 nats of ln Z = {exact:.4}; worst error {worst:.4}"),
    )
}

fn c7_init_ratio() -> Verdict {
    let mut rng = seeded(7);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for m in 1..=20 {
        for n in 1..=20 {
            let tau = 10f64.powf(rng.random_range(-4.0..-0.5));
            let x = Array2::from_shape_fn((30, m), |_| rng.random_range(-3.0..3.0));
            let p = init_params(&DataBatch::new(x).unwrap(), n, tau, &mut rng).unwrap();
            let zero = vec![0.0; n];
            // P(h) ∝ ∫ e^{−E(x,h)} dx = e^{cᵀh + (‖b+Wh‖² − ‖b‖²)/2σ²} × const.
            let log_hidden = |h: &[f64]| {
                let mean = &p.visible_bias + &p.weights.dot(&Array1::from(h.to_vec()));
                let c: f64 = h.iter().zip(p.hidden_bias.iter()).map(|(a, b)| a * b).sum();
                c + (mean.dot(&mean) - p.visible_bias.dot(&p.visible_bias))
                    / (2.0 * p.sigma * p.sigma)
            };
            for j in 0..n {
                let mut h = zero.clone();
                h[j] = 1.0;
                let ratio = log_hidden(&h).exp();
                worst = worst.max((ratio - tau).abs() / tau);
                cases += 1;
            }
        }
    }
    verdict(
        worst <= 1e-12,
        format!("{cases} first-order components over M, N ≤ 20: max relative deviation from τ {worst:.1e}"),
    )
}

fn c8_samplers() -> Verdict {
    let cfg = SamplerBenchConfig::default();
    let report = run_sampler_bench(&cfg).expect("sampler bench");
    let time = |s: &str| report.seconds_per_epoch(s).unwrap_or(f64::NAN);
    let plateau = |s: &str| {
        report
            .summary_for(s)
            .map_or(usize::MAX, |r| r.epochs_to_plateau)
    };
    let (pt, cd10, cd1) = (time("PT-10"), time("CD-10"), time("CD-1"));
    let diverged: usize = report.summary.iter().map(|s| s.diverged_runs).sum();
    verdict(
        pt > cd10 && cd10 > cd1 && plateau("PT-10") <= plateau("CD-1") && diverged == 0,
        format!(
            "s/epoch PT-10 {pt:.4} > CD-10 {cd10:.4} > CD-1 {cd1:.4} (CD-10/CD-1 = {:.1}); \
             epochs to plateau PT-10 {} vs CD-1 {}; {diverged} diverged runs",
            cd10 / cd1,
            plateau("PT-10"),
            plateau("CD-1")
        ),
    )
}

fn c9_patches() -> Verdict {
    let (images, source) = match std::env::var_os("GRBM_ACCEPTANCE_IMAGES") {
        Some(dir) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .expect("image directory")
                .map(|e| e.unwrap().path())
                .collect();
            paths.sort();
            let imgs: Vec<_> = paths
                .iter()
                .map(|p| load_image(p).expect("image"))
                .collect();
            let n = imgs.len();
            (imgs, format!("{n} user images"))
        }
        None => {
            let mut rng = stream(9, 0);
            let imgs = (0..8)
                .map(|_| dead_leaves_image(256, 256, &mut rng))
                .collect();
            (imgs, "8 dead-leaves scenes".to_string())
        }
    };
    let r = run_patch_study(&images, &PatchStudyConfig::default()).expect("patch study");
    verdict(
        r.grbm_test_ll > r.gaussian_test_ll && r.mean_active_after < r.mean_active_before,
        format!(
            "{source}: GRBM-64-64 test ℓ̂ {:.3} vs Gaussian {:.3}; mean active units {:.3} at init, {:.3} trained",
            r.grbm_test_ll, r.gaussian_test_ll, r.mean_active_before, r.mean_active_after
        ),
    )
}

/// Every command, run twice with one worker from separate directories.
fn c10_determinism() -> Verdict {
    let bin = Path::new(env!("CARGO_BIN_EXE_grbm"));
    let run_all = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut outputs = Vec::new();
        let steps: &[(&str, &[&str], &[&str])] = &[
            (
                "patches-extract",
                &[
                    "patches",
                    "--dead-leaves",
                    "2",
                    "--scene-size",
                    "64",
                    "--patch-size",
                    "2",
                    "--n-patches",
                    "3000",
                    "--extract-only",
                    "--out",
                    "raw.bin",
                ],
                &["raw.bin"],
            ),
            (
                "whiten",
                &[
                    "whiten",
                    "--data",
                    "raw.bin",
                    "--out",
                    "white.csv",
                    "--transform",
                    "t.json",
                ],
                &["white.csv", "t.json"],
            ),
            (
                "train",
                &[
                    "train",
                    "--data",
                    "white.csv",
                    "--hidden",
                    "3",
                    "--epochs",
                    "3",
                    "--method",
                    "pcd",
                    "--out",
                    "m.grbm",
                ],
                &["m.grbm"],
            ),
            (
                "train-pt",
                &[
                    "train",
                    "--data",
                    "white.csv",
                    "--hidden",
                    "3",
                    "--epochs",
                    "2",
                    "--method",
                    "pt",
                    "--out",
                    "pt.grbm",
                    "--format",
                    "csv",
                ],
                &["pt.grbm"],
            ),
            (
                "eval",
                &["eval", "--model", "m.grbm", "--data", "white.csv"],
                &[],
            ),
            (
                "eval-ais",
                &[
                    "eval",
                    "--model",
                    "m.grbm",
                    "--data",
                    "white.csv",
                    "--use-ais",
                    "--ais-betas",
                    "200",
                ],
                &[],
            ),
            (
                "mixture",
                &[
                    "mixture",
                    "--model",
                    "m.grbm",
                    "--components",
                    "comp.csv",
                    "--format",
                    "csv",
                ],
                &["comp.csv"],
            ),
            (
                "ais",
                &[
                    "ais",
                    "--model",
                    "m.grbm",
                    "--ais-chains",
                    "40",
                    "--ais-betas",
                    "300",
                    "--ais-schedule",
                    "geometric-tail",
                ],
                &[],
            ),
            (
                "sample",
                &[
                    "sample",
                    "--model",
                    "m.grbm",
                    "--count",
                    "50",
                    "--burn-in",
                    "20",
                    "--out",
                    "s.bin",
                ],
                &["s.bin"],
            ),
            (
                "bss",
                &[
                    "bss",
                    "--trials",
                    "3",
                    "--n-train",
                    "3000",
                    "--n-test",
                    "1000",
                    "--epochs",
                    "3",
                    "--out",
                    "bss",
                ],
                &["bss/records.jsonl", "bss/summary.csv"],
            ),
            (
                "bench",
                &[
                    "bench",
                    "--runs",
                    "1",
                    "--epochs",
                    "3",
                    "--n-samples",
                    "800",
                    "--samplers",
                    "cd-1,pcd-2,pt-4",
                    "--out",
                    "bench",
                ],
                &["bench/runs.jsonl", "bench/summary.csv", "bench/curves.csv"],
            ),
            (
                "patches",
                &[
                    "patches",
                    "--dead-leaves",
                    "2",
                    "--scene-size",
                    "64",
                    "--patch-size",
                    "3",
                    "--n-patches",
                    "1500",
                    "--n-hidden",
                    "6",
                    "--epochs",
                    "2",
                    "--ais-chains",
                    "20",
                    "--ais-betas",
                    "100",
                ],
                &[],
            ),
        ];
        for (name, args, files) in steps {
            let out = Command::new(bin)
                .current_dir(dir)
                .args(*args)
                .args(["--seed", "11", "--workers", "1"])
                .output()
                .map_err(|e| format!("{name}: {e}"))?;
            if !out.status.success() {
                return Err(format!("{name}: {}", String::from_utf8_lossy(&out.stderr)));
            }
            outputs.push((format!("{name} stdout"), out.stdout));
            for f in *files {
                let bytes = std::fs::read(dir.join(f)).map_err(|e| format!("{name}: {f}: {e}"))?;
                outputs.push((format!("{name} {f}"), bytes));
            }
        }
        Ok(outputs)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (first, second) = match (run_all(a.path()), run_all(b.path())) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return verdict(false, format!("command failed: {e}")),
    };
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let bytes: usize = first.iter().map(|o| o.1.len()).sum();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "{} outputs of 12 commands identical ({bytes} bytes)",
                first.len()
            )
        } else {
            format!("outputs differ: {}", differing.join(", "))
        },
    )
}
