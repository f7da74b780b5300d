//! Kernel-approximation error as a function of the projection dimension.
//!
//! For random Gaussian grid pairs `(A, B)` and independent parameter draws,
//! records `|<C(A), C(B)> - K(A, B)| / max(|K(A, B)|, 1e-12)` where `K` is
//! the exact second-order kernel.

use rayon::prelude::*;

use cbp_core::bilinear::exact_kernel;
use cbp_core::{LocalDescriptorGrid, Result, SeededRng};

use crate::pooling::{pool, Method};

pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub dims: Vec<usize>,
    pub methods: Vec<Method>,
    pub pairs: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub d: usize,
    /// Parameter draws per pair.
    pub seeds: usize,
    pub median_rel_err: f64,
    pub mean_rel_err: f64,
    pub std_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub const HEADER: [&'static str; 6] = [
        "method",
        "d",
        "seeds",
        "median_rel_err",
        "mean_rel_err",
        "std_rel_err",
    ];

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        use crate::report::sig9;
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.method.to_string(),
                    r.d.to_string(),
                    r.seeds.to_string(),
                    sig9(r.median_rel_err),
                    sig9(r.mean_rel_err),
                    sig9(r.std_rel_err),
                ]
            })
            .collect()
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

fn method_stream(method: Method) -> u64 {
    match method {
        Method::Bilinear => 0,
        Method::Rm => 1,
        Method::Ts => 2,
    }
}

pub fn kernel_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let root = SeededRng::new(cfg.seed);
    let mut data_rng = root.child(0);
    let mut pairs = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        let mut grid =
            || LocalDescriptorGrid::from_fn(1, cfg.h, cfg.w, cfg.c, |_, _, _, _| data_rng.normal());
        let a = grid()?;
        let b = grid()?;
        let exact = exact_kernel(&a, &b)?;
        pairs.push((a, b, exact));
    }

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut dims = cfg.dims.clone();
    dims.sort_unstable();
    dims.dedup();

    let mut rows = Vec::new();
    for &method in &methods {
        for &d in &dims {
            let stream = root.child(method_stream(method)).child(d as u64);
            let per_trial: Vec<Vec<f64>> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = stream.child(t as u64).seed();
                    pairs
                        .iter()
                        .map(|(a, b, exact)| {
                            let pa = pool(a, method, d, seed)?;
                            let pb = pool(b, method, d, seed)?;
                            let approx: f64 =
                                pa.data().iter().zip(pb.data()).map(|(x, y)| x * y).sum();
                            Ok((approx - exact).abs() / exact.abs().max(DENOMINATOR_FLOOR))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            let mut errs: Vec<f64> = per_trial.into_iter().flatten().collect();
            let m = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / m;
            let std = if errs.len() > 1 {
                (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(SweepRow {
                method,
                d,
                seeds: cfg.trials,
                median_rel_err: median(&mut errs),
                mean_rel_err: mean,
                std_rel_err: std,
            });
        }
    }
    Ok(SweepReport { rows })
}
