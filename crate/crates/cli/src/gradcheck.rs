//! Finite-difference verification of every backward pass.
//!
//! Each check draws random inputs and an upstream gradient `G`, and compares
//! the analytic gradient of `L = <G, f(inputs)>` with central differences of
//! `L` using step `eps * max(1, |x_i|)`. Only forward passes are used on the
//! numeric side.

use cbp_core::bilinear::{bilinear_pool, bilinear_pool_backward};
use cbp_core::postproc::{l2_normalize, l2_normalize_backward, signed_sqrt, signed_sqrt_backward};
use cbp_core::rm::{gen_rm, rm_backward, rm_pool, RmParams};
use cbp_core::ts::{gen_ts, ts_backward, ts_pool};
use cbp_core::{LocalDescriptorGrid, Matrix, Result, SeededRng};

/// Pass threshold on the maximum relative error.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Samples per randomized check.
const SAMPLES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GradMethod {
    Bilinear,
    Rm,
    Ts,
    SignedSqrt,
    L2norm,
}

impl GradMethod {
    pub fn name(self) -> &'static str {
        match self {
            GradMethod::Bilinear => "bilinear",
            GradMethod::Rm => "rm",
            GradMethod::Ts => "ts",
            GradMethod::SignedSqrt => "signed_sqrt",
            GradMethod::L2norm => "l2norm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub method: GradMethod,
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub seed: u64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub method: GradMethod,
    /// `(gradient name, max relative error)` per checked output.
    pub outputs: Vec<(&'static str, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.outputs.iter().map(|o| o.1).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < GRADCHECK_TOL
    }
}

pub fn central_difference(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = eps * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest entrywise relative error. Denominators are floored at 1e-3 of
/// the largest magnitude in either vector, so entries near zero are judged
/// against the gradient's scale.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
        return Err(cbp_core::Error::Parameter(format!(
            "eps must be positive, got {}",
            cfg.eps
        )));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let (n, h, w, c, d, eps) = (SAMPLES, cfg.h, cfg.w, cfg.c, cfg.d, cfg.eps);
    let grid = LocalDescriptorGrid::from_fn(n, h, w, c, |_, _, _, _| rng.normal())?;
    let remake =
        |x: &[f64]| LocalDescriptorGrid::new(n, h, w, c, x.to_vec()).expect("finite probe");

    let outputs = match cfg.method {
        GradMethod::Bilinear => {
            let g = Matrix::from_fn(n, c * c, |_, _| rng.normal());
            let analytic = bilinear_pool_backward(&grid, &g)?;
            let numeric = central_difference(grid.data(), eps, |x| {
                inner(bilinear_pool(&remake(x)).data(), g.data())
            });
            vec![("x", max_rel_err(analytic.data(), &numeric))]
        }
        GradMethod::Rm => {
            let p = gen_rm(c, d, &mut rng)?;
            let g = Matrix::from_fn(n, d, |_, _| rng.normal());
            let r = rm_backward(&grid, &p, &g)?;
            let loss = |grid: &LocalDescriptorGrid, p: &RmParams| {
                inner(rm_pool(grid, p).expect("shapes").data(), g.data())
            };
            let num_x = central_difference(grid.data(), eps, |x| loss(&remake(x), &p));
            let num_w1 = central_difference(p.w1().data(), eps, |v| {
                let q =
                    RmParams::new(Matrix::new(d, c, v.to_vec()).unwrap(), p.w2().clone()).unwrap();
                loss(&grid, &q)
            });
            let num_w2 = central_difference(p.w2().data(), eps, |v| {
                let q =
                    RmParams::new(p.w1().clone(), Matrix::new(d, c, v.to_vec()).unwrap()).unwrap();
                loss(&grid, &q)
            });
            vec![
                ("x", max_rel_err(r.x.data(), &num_x)),
                ("w1", max_rel_err(r.w1.as_ref().unwrap().data(), &num_w1)),
                ("w2", max_rel_err(r.w2.as_ref().unwrap().data(), &num_w2)),
            ]
        }
        GradMethod::Ts => {
            let p = gen_ts(c, d, &mut rng)?;
            let g = Matrix::from_fn(n, d, |_, _| rng.normal());
            let r = ts_backward(&grid, &p, &g)?;
            let loss = |grid: &LocalDescriptorGrid, p: &cbp_core::ts::TsParams| {
                inner(ts_pool(grid, p).expect("shapes").data(), g.data())
            };
            let (s1, s2) = (p.sketch1().signs().to_vec(), p.sketch2().signs().to_vec());
            let num_x = central_difference(grid.data(), eps, |x| loss(&remake(x), &p));
            let num_s1 = central_difference(&s1, eps, |v| {
                let mut q = p.clone();
                q.set_signs(v.to_vec(), s2.clone()).unwrap();
                loss(&grid, &q)
            });
            let num_s2 = central_difference(&s2, eps, |v| {
                let mut q = p.clone();
                q.set_signs(s1.clone(), v.to_vec()).unwrap();
                loss(&grid, &q)
            });
            vec![
                ("x", max_rel_err(r.x.data(), &num_x)),
                ("s1", max_rel_err(r.s1.as_ref().unwrap(), &num_s1)),
                ("s2", max_rel_err(r.s2.as_ref().unwrap(), &num_s2)),
            ]
        }
        GradMethod::SignedSqrt => {
            // Keep inputs away from the kink at zero.
            let v = Matrix::from_fn(n, d, |_, _| rng.sign() * rng.uniform(0.1, 2.0));
            let g = Matrix::from_fn(n, d, |_, _| rng.normal());
            let analytic = signed_sqrt_backward(&v, &g)?;
            let numeric = central_difference(v.data(), eps, |x| {
                inner(
                    signed_sqrt(&Matrix::new(n, d, x.to_vec()).unwrap()).data(),
                    g.data(),
                )
            });
            vec![("v", max_rel_err(analytic.data(), &numeric))]
        }
        GradMethod::L2norm => {
            let v = Matrix::from_fn(n, d, |_, _| rng.normal());
            let g = Matrix::from_fn(n, d, |_, _| rng.normal());
            let analytic = l2_normalize_backward(&v, &g)?;
            let numeric = central_difference(v.data(), eps, |x| {
                inner(
                    l2_normalize(&Matrix::new(n, d, x.to_vec()).unwrap()).data(),
                    g.data(),
                )
            });
            vec![("v", max_rel_err(analytic.data(), &numeric))]
        }
    };
    Ok(GradCheckReport {
        method: cfg.method,
        outputs,
    })
}
