//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cbp_cli::bench::{bench, BenchConfig};
use cbp_cli::gradcheck::{gradcheck, GradCheckConfig, GradMethod, GRADCHECK_TOL};
use cbp_cli::pooling::{pooled_features, Method};
use cbp_cli::sweep::{kernel_sweep, median, SweepConfig};
use cbp_cli::synth::{generate, split_per_class, SynthConfig};
use cbp_core::bilinear::{bilinear_pool, exact_kernel};
use cbp_core::postproc::{
    fewshot_eval, predict, train_logreg, FewShotConfig, TrainConfig, DEFAULT_LAMBDA,
};
use cbp_core::rm::{gen_rm, rm_pool};
use cbp_core::sketch::{circ_conv_fast, circ_conv_naive};
use cbp_core::ts::{gen_ts, ts_pool, ts_project};
use cbp_core::{LocalDescriptorGrid, SeededRng};

type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gaussian_grid(rng: &mut SeededRng, h: usize, w: usize, c: usize) -> LocalDescriptorGrid {
    LocalDescriptorGrid::from_fn(1, h, w, c, |_, _, _, _| rng.normal()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var)
}

fn bilinear_identity() -> Outcome {
    let mut rng = SeededRng::new(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let c = 1 + rng.index(32);
        let (h, w) = loop {
            let (h, w) = (1 + rng.index(4), 1 + rng.index(4));
            if h * w <= 16 {
                break (h, w);
            }
        };
        let a = gaussian_grid(&mut rng, h, w, c);
        let b = gaussian_grid(&mut rng, h, w, c);
        let lhs = dot(bilinear_pool(&a).data(), bilinear_pool(&b).data());
        let direct: f64 = a
            .descriptors(0)
            .flat_map(|x| b.descriptors(0).map(move |y| dot(x, y).powi(2)))
            .sum();
        let kernel = exact_kernel(&a, &b).unwrap();
        worst = worst.max(rel_err(lhs, kernel)).max(rel_err(kernel, direct));
    }
    outcome(
        worst < 1e-10,
        format!("max rel err {worst:.3e} over 200 pairs (tol 1e-10)"),
    )
}

fn convolution_theorem() -> Outcome {
    let mut rng = SeededRng::new(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = 1 + rng.index(16);
        let d = 1 + rng.index(64);
        let p = gen_ts(c, d, &mut rng).unwrap();
        let x: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let (h1, s1) = (p.sketch1().buckets(), p.sketch1().signs());
        let (h2, s2) = (p.sketch2().buckets(), p.sketch2().signs());
        let mut oracle = vec![0.0; d];
        for i in 0..c {
            for j in 0..c {
                oracle[(h1[i] + h2[j]) % d] += s1[i] * s2[j] * x[i] * x[j];
            }
        }
        let got = ts_project(&x, &p).unwrap();
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let err = got
            .iter()
            .zip(&oracle)
            .fold(0.0f64, |m, (g, o)| m.max((g - o).abs()))
            / scale;
        worst = worst.max(err);
    }
    outcome(
        worst < 1e-10,
        format!("max rel err {worst:.3e} over 100 cases (tol 1e-10)"),
    )
}

fn transform_equivalence() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut worst = 0.0f64;
    let mut primes = 0;
    for k in 0..1000 {
        // Every length 1..=257 appears, the rest drawn at random.
        let d = if k < 257 { k + 1 } else { 1 + rng.index(257) };
        if (2..d).all(|q| d % q != 0) && d > 1 {
            primes += 1;
        }
        let a: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let fast = circ_conv_fast(&a, &b).unwrap();
        let naive = circ_conv_naive(&a, &b).unwrap();
        let norm = naive.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let diff = fast
            .iter()
            .zip(&naive)
            .map(|(f, n)| (f - n).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / norm);
    }
    outcome(
        worst < 1e-8,
        format!("max rel err {worst:.3e} over 1000 pairs, {primes} prime lengths (tol 1e-8)"),
    )
}

fn gradient_suite() -> Outcome {
    let mut rng = SeededRng::new(4);
    let methods = [
        GradMethod::Bilinear,
        GradMethod::Rm,
        GradMethod::Ts,
        GradMethod::SignedSqrt,
        GradMethod::L2norm,
    ];
    let dims = [1, 7, 12, 17, 30, 64];
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut checks = 0;
    for &method in &methods {
        for &d in &dims {
            let cfg = GradCheckConfig {
                method,
                c: 2 + rng.index(7),
                d,
                h: 1 + rng.index(3),
                w: 1 + rng.index(3),
                seed: rng.index(1 << 20) as u64,
                eps: 1e-6,
            };
            let report = gradcheck(&cfg).unwrap();
            checks += report.outputs.len();
            if report.max_rel_err() > worst {
                worst = report.max_rel_err();
                worst_at = format!("{} c={} d={}", method.name(), cfg.c, d);
            }
        }
    }
    outcome(
        worst < GRADCHECK_TOL,
        format!("max rel err {worst:.3e} at {worst_at} over {checks} gradients (tol 1e-5)"),
    )
}

/// `⟨C(a), C(b)⟩` for `seeds` independent parameter draws.
fn estimates(
    method: Method,
    a: &LocalDescriptorGrid,
    b: &LocalDescriptorGrid,
    d: usize,
    seeds: u64,
    stream: u64,
) -> Vec<f64> {
    let root = SeededRng::new(stream);
    (0..seeds)
        .map(|t| {
            let mut rng = root.child(t);
            let c = a.c();
            match method {
                Method::Rm => {
                    let p = gen_rm(c, d, &mut rng).unwrap();
                    dot(
                        rm_pool(a, &p).unwrap().data(),
                        rm_pool(b, &p).unwrap().data(),
                    )
                }
                Method::Ts => {
                    let p = gen_ts(c, d, &mut rng).unwrap();
                    dot(
                        ts_pool(a, &p).unwrap().data(),
                        ts_pool(b, &p).unwrap().data(),
                    )
                }
                Method::Bilinear => unreachable!(),
            }
        })
        .collect()
}

fn fixed_pairs() -> Vec<(LocalDescriptorGrid, LocalDescriptorGrid)> {
    let mut rng = SeededRng::new(5);
    (0..2)
        .map(|_| {
            (
                gaussian_grid(&mut rng, 2, 2, 8),
                gaussian_grid(&mut rng, 2, 2, 8),
            )
        })
        .collect()
}

fn unbiasedness() -> Outcome {
    let seeds = 1000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (a, b)) in fixed_pairs().iter().enumerate() {
        let exact = exact_kernel(a, b).unwrap();
        for method in [Method::Rm, Method::Ts] {
            let (mean, var) = mean_var(&estimates(method, a, b, 64, seeds, 50 + k as u64));
            let z = (mean - exact) / (var / seeds as f64).sqrt();
            ok &= z.abs() <= 3.0;
            parts.push(format!("pair{k} {method} z={z:+.2}"));
        }
    }
    outcome(
        ok,
        format!("{} ({seeds} seeds, |z| <= 3)", parts.join(", ")),
    )
}

fn variance_decay() -> Outcome {
    let seeds = 1000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (a, b)) in fixed_pairs().iter().enumerate() {
        for method in [Method::Rm, Method::Ts] {
            let (_, v256) = mean_var(&estimates(method, a, b, 256, seeds, 60 + k as u64));
            let (_, v1024) = mean_var(&estimates(method, a, b, 1024, seeds, 70 + k as u64));
            let ratio = v1024 / v256;
            ok &= ratio <= 0.35;
            parts.push(format!("pair{k} {method} {ratio:.3}"));
        }
    }
    outcome(
        ok,
        format!("var(1024)/var(256): {} (max 0.35)", parts.join(", ")),
    )
}

fn sweep_trend() -> Outcome {
    let dims: Vec<usize> = (6..=13).map(|e| 1 << e).collect();
    let report = kernel_sweep(&SweepConfig {
        c: 32,
        h: 3,
        w: 3,
        dims,
        methods: vec![Method::Ts],
        pairs: 4,
        trials: 100,
        seed: 7,
    })
    .unwrap();
    let medians: Vec<f64> = report.rows.iter().map(|r| r.median_rel_err).collect();
    let ok = medians.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.4}")).collect();
    outcome(
        ok,
        format!("ts medians d=64..8192, 100 trials: {}", shown.join(" > ")),
    )
}

fn classification_parity() -> Outcome {
    let mut gaps = Vec::new();
    let mut bil = Vec::new();
    for seed in 0..10u64 {
        let (grid, labels) = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let (train, test) = split_per_class(&labels, 30);
        let acc = |method, d| {
            let f = pooled_features(&grid, method, d, SeededRng::derive_seed(seed, 1)).unwrap();
            let model =
                train_logreg(&f, &train, 10, DEFAULT_LAMBDA, &TrainConfig::default()).unwrap();
            predict(&model, &f).unwrap().accuracy(&test)
        };
        let b = acc(Method::Bilinear, 0);
        let t = acc(Method::Ts, 1024);
        bil.push(b);
        gaps.push((b - t).abs());
    }
    let gap = median(&mut gaps);
    let b = median(&mut bil);
    outcome(
        gap <= 0.03,
        format!(
            "median |bilinear - ts1024| = {:.2} points (max 3), bilinear median {:.1}%",
            gap * 100.0,
            b * 100.0
        ),
    )
}

/// Few-shot comparison uses `c = 32` (bilinear dimension 1024) against TS
/// at `d = 256`.
const FEWSHOT_TS_DIM: usize = 256;
/// Largest drop in mean accuracy between consecutive shot counts still
/// counted as non-decreasing.
const MONOTONE_SLACK: f64 = 0.02;

fn fewshot_trend() -> Outcome {
    let shots = [1, 2, 3, 7, 14];
    let (grid, labels) = generate(&SynthConfig::default()).unwrap();
    let run = |method, d| {
        let f = pooled_features(&grid, method, d, 11).unwrap();
        fewshot_eval(
            &f,
            &labels,
            &shots,
            10,
            &mut SeededRng::new(12),
            &FewShotConfig::default(),
        )
        .unwrap()
    };
    let bil = run(Method::Bilinear, 0);
    let ts = run(Method::Ts, FEWSHOT_TS_DIM);
    let mut diffs: Vec<f64> = ts[0]
        .accuracies
        .iter()
        .zip(&bil[0].accuracies)
        .map(|(t, b)| t - b)
        .collect();
    let one_shot = median(&mut diffs);
    let monotone = |rows: &[cbp_core::postproc::FewShotRow]| {
        rows.windows(2)
            .all(|w| w[1].mean_accuracy >= w[0].mean_accuracy - MONOTONE_SLACK)
    };
    let curve = |rows: &[cbp_core::postproc::FewShotRow]| {
        rows.iter()
            .map(|r| format!("{:.3}", r.mean_accuracy))
            .collect::<Vec<_>>()
            .join(",")
    };
    let (mb, mt) = (monotone(&bil), monotone(&ts));
    outcome(
        one_shot >= 0.0 && mb && mt,
        format!(
            "1-shot median(ts{FEWSHOT_TS_DIM} - bilinear) = {:+.1} points (need >= 0); monotone bilinear={mb} ts={mt}; \
             bilinear [{}] ts [{}]",
            one_shot * 100.0,
            curve(&bil),
            curve(&ts)
        ),
    )
}

/// Median forward time of each config over interleaved rounds, so slow
/// drift on a shared machine hits both sides of a ratio.
fn forward_times(configs: &[BenchConfig], rounds: usize) -> Vec<f64> {
    let mut samples = vec![Vec::new(); configs.len()];
    for _ in 0..rounds {
        for (cfg, out) in configs.iter().zip(samples.iter_mut()) {
            out.push(bench(cfg).unwrap().forward_s);
        }
    }
    samples.iter_mut().map(|s| median(s)).collect()
}

fn timing_ratios() -> Outcome {
    let base = BenchConfig {
        method: Method::Ts,
        c: 512,
        d: Some(4096),
        h: 13,
        w: 13,
        reps: 10,
        seed: 0,
    };
    let ts = forward_times(
        &[
            base,
            BenchConfig {
                d: Some(8192),
                ..base
            },
        ],
        5,
    );
    let bil_base = BenchConfig {
        method: Method::Bilinear,
        c: 64,
        d: None,
        ..base
    };
    let bil = forward_times(&[bil_base, BenchConfig { c: 256, ..bil_base }], 5);
    let ts_ratio = ts[1] / ts[0];
    let bil_ratio = bil[1] / bil[0];
    outcome(
        ts_ratio <= 2.6 && bil_ratio >= 8.0,
        format!(
            "ts d 4096->8192 x{ts_ratio:.2} (max 2.6); bilinear c 64->256 x{bil_ratio:.2} (min 8)"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "1 bilinear kernel identity",
            Duration::from_secs(10),
            bilinear_identity,
        ),
        (
            "2 tensor sketch of outer product",
            Duration::from_secs(5),
            convolution_theorem,
        ),
        (
            "3 fast vs naive convolution",
            Duration::from_secs(10),
            transform_equivalence,
        ),
        ("4 gradient suite", Duration::from_secs(60), gradient_suite),
        ("5 unbiasedness", Duration::from_secs(60), unbiasedness),
        ("6 variance decay", Duration::from_secs(60), variance_decay),
        (
            "7 kernel sweep trend",
            Duration::from_secs(300),
            sweep_trend,
        ),
        (
            "8 classification parity",
            Duration::from_secs(300),
            classification_parity,
        ),
        ("9 few-shot trend", Duration::from_secs(600), fewshot_trend),
        ("10 timing ratios", Duration::from_secs(300), timing_ratios),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < limit;
        let pass = out.passed && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s, limit {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
