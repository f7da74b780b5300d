//! Wall-clock timing of forward and backward passes.

use std::time::Instant;

use cbp_core::bilinear::{bilinear_pool, bilinear_pool_backward};
use cbp_core::rm::{gen_rm, rm_backward_with, rm_pool, RmBackwardOptions};
use cbp_core::sketch::CircularConvolver;
use cbp_core::ts::{gen_ts, ts_backward_with, ts_pool_with, TsBackwardOptions};
use cbp_core::{Error, LocalDescriptorGrid, Matrix, Result, SeededRng};

use crate::pooling::Method;
use crate::report::sig9;
use crate::sweep::median;

pub const MIN_REPS: usize = 5;
const WARMUP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub method: Method,
    pub c: usize,
    /// Output dimension; must be `None` for bilinear pooling.
    pub d: Option<usize>,
    pub h: usize,
    pub w: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub reps: usize,
    /// Median seconds per forward pass.
    pub forward_s: f64,
    /// Median seconds per backward pass (input gradient only).
    pub backward_s: f64,
}

impl BenchRow {
    pub const HEADER: [&'static str; 8] = [
        "method",
        "c",
        "d",
        "h",
        "w",
        "reps",
        "forward_s",
        "backward_s",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.method.to_string(),
            self.c.to_string(),
            self.d.to_string(),
            self.h.to_string(),
            self.w.to_string(),
            self.reps.to_string(),
            sig9(self.forward_s),
            sig9(self.backward_s),
        ]
    }
}

fn median_time(reps: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..WARMUP {
        f();
    }
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    // Guard against timer granularity on tiny problems.
    median(&mut times).max(f64::MIN_POSITIVE)
}

pub fn validate(cfg: &BenchConfig) -> Result<()> {
    if cfg.reps < MIN_REPS {
        return Err(Error::Parameter(format!(
            "reps must be at least {MIN_REPS}, got {}",
            cfg.reps
        )));
    }
    if cfg.c == 0 || cfg.h == 0 || cfg.w == 0 {
        return Err(Error::Parameter("c, h and w must be positive".into()));
    }
    match (cfg.method, cfg.d) {
        (Method::Bilinear, Some(_)) => Err(Error::Parameter(
            "--dim is not accepted for bilinear pooling".into(),
        )),
        (Method::Rm | Method::Ts, None) => Err(Error::Parameter(format!(
            "--dim is required for {}",
            cfg.method
        ))),
        (_, Some(0)) => Err(Error::Parameter("--dim must be positive".into())),
        _ => Ok(()),
    }
}

/// Times one sample of an `h x w x c` grid.
pub fn bench(cfg: &BenchConfig) -> Result<BenchRow> {
    validate(cfg)?;
    let mut rng = SeededRng::new(cfg.seed);
    let grid = LocalDescriptorGrid::from_fn(1, cfg.h, cfg.w, cfg.c, |_, _, _, _| rng.normal())?;
    let (forward_s, backward_s, d) = match cfg.method {
        Method::Bilinear => {
            let d = cfg.c * cfg.c;
            let g = Matrix::from_fn(1, d, |_, _| rng.normal());
            let f = median_time(cfg.reps, || {
                std::hint::black_box(bilinear_pool(&grid));
            });
            let b = median_time(cfg.reps, || {
                std::hint::black_box(bilinear_pool_backward(&grid, &g).unwrap());
            });
            (f, b, d)
        }
        Method::Rm => {
            let d = cfg.d.unwrap();
            let p = gen_rm(cfg.c, d, &mut rng)?;
            let g = Matrix::from_fn(1, d, |_, _| rng.normal());
            let opts = RmBackwardOptions { param_grads: false };
            let f = median_time(cfg.reps, || {
                std::hint::black_box(rm_pool(&grid, &p).unwrap());
            });
            let b = median_time(cfg.reps, || {
                std::hint::black_box(rm_backward_with(&grid, &p, &g, opts).unwrap());
            });
            (f, b, d)
        }
        Method::Ts => {
            let d = cfg.d.unwrap();
            let p = gen_ts(cfg.c, d, &mut rng)?;
            let conv = CircularConvolver::new(d);
            let g = Matrix::from_fn(1, d, |_, _| rng.normal());
            let opts = TsBackwardOptions { param_grads: false };
            let f = median_time(cfg.reps, || {
                std::hint::black_box(ts_pool_with(&grid, &p, &conv).unwrap());
            });
            let b = median_time(cfg.reps, || {
                std::hint::black_box(ts_backward_with(&grid, &p, &g, opts).unwrap());
            });
            (f, b, d)
        }
    };
    Ok(BenchRow {
        method: cfg.method,
        c: cfg.c,
        d,
        h: cfg.h,
        w: cfg.w,
        reps: cfg.reps,
        forward_s,
        backward_s,
    })
}
