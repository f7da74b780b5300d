//! Random Maclaurin pooling.
//!
//! `φ(x) = (W1 x) ∘ (W2 x) / √d` with `W1, W2` drawn as `d x c` Rademacher
//! matrices. Each output coordinate is an unbiased estimate of `<x, y>²`
//! when paired with `φ(y)`, so `<φ(x), φ(y)>` estimates the squared inner
//! product with variance shrinking as `1/d`. Pooling sums `φ` over the
//! spatial locations of each sample.
//!
//! The backward pass carries the `1/√d` factor of the forward map into both
//! the input and the projection gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{dot, LocalDescriptorGrid, Matrix, PoolKind, PooledDescriptor};

/// Samples per partial sum when reducing projection gradients.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RmParams {
    c: usize,
    d: usize,
    w1: Matrix,
    w2: Matrix,
}

impl RmParams {
    /// Wraps explicit projections, e.g. after tuning. Entries may be any
    /// finite reals.
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        if w1.rows() == 0 || w1.cols() == 0 {
            return Err(Error::parameter("projection matrices must be non-empty"));
        }
        if w1.rows() != w2.rows() || w1.cols() != w2.cols() {
            return Err(Error::shape(format!(
                "W1 is {}x{} but W2 is {}x{}",
                w1.rows(),
                w1.cols(),
                w2.rows(),
                w2.cols()
            )));
        }
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::parameter("projection entries must be finite"));
        }
        Ok(Self {
            c: w1.cols(),
            d: w1.rows(),
            w1,
            w2,
        })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    /// Bytes needed to store both projections at 32-bit precision.
    pub fn param_bytes_f32(&self) -> usize {
        2 * self.c * self.d * 4
    }

    fn scale(&self) -> f64 {
        1.0 / (self.d as f64).sqrt()
    }

    fn project_into(&self, x: &[f64], u1: &mut [f64], u2: &mut [f64]) {
        for r in 0..self.d {
            u1[r] = dot(self.w1.row(r), x);
            u2[r] = dot(self.w2.row(r), x);
        }
    }
}

pub fn gen_rm(c: usize, d: usize, rng: &mut SeededRng) -> Result<RmParams> {
    if c == 0 || d == 0 {
        return Err(Error::parameter(format!(
            "random maclaurin needs c >= 1 and d >= 1, got c={c} d={d}"
        )));
    }
    let base = rng.fork();
    let mut r1 = base.child(1);
    let mut r2 = base.child(2);
    let w1 = Matrix::from_fn(d, c, |_, _| r1.sign());
    let w2 = Matrix::from_fn(d, c, |_, _| r2.sign());
    Ok(RmParams { c, d, w1, w2 })
}

pub fn rm_project(x: &[f64], p: &RmParams) -> Result<Vec<f64>> {
    if x.len() != p.c {
        return Err(Error::shape(format!(
            "input has length {}, projection expects {}",
            x.len(),
            p.c
        )));
    }
    let mut u1 = vec![0.0; p.d];
    let mut u2 = vec![0.0; p.d];
    p.project_into(x, &mut u1, &mut u2);
    let scale = p.scale();
    Ok(u1.iter().zip(&u2).map(|(a, b)| a * b * scale).collect())
}

fn check_channels(grid: &LocalDescriptorGrid, p: &RmParams) -> Result<()> {
    if grid.c() != p.c {
        return Err(Error::shape(format!(
            "grid has {} channels, projection expects {}",
            grid.c(),
            p.c
        )));
    }
    Ok(())
}

pub fn rm_pool(grid: &LocalDescriptorGrid, p: &RmParams) -> Result<PooledDescriptor> {
    check_channels(grid, p)?;
    let d = p.d;
    let scale = p.scale();
    let mut out = Matrix::zeros(grid.n(), d);
    out.data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            let mut u1 = vec![0.0; d];
            let mut u2 = vec![0.0; d];
            for x in grid.descriptors(i) {
                p.project_into(x, &mut u1, &mut u2);
                for ((o, a), b) in row.iter_mut().zip(&u1).zip(&u2) {
                    *o += a * b;
                }
            }
            row.iter_mut().for_each(|v| *v *= scale);
        });
    PooledDescriptor::new(PoolKind::RandomMaclaurin, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmBackwardOptions {
    /// Also compute gradients for `W1` and `W2`.
    pub param_grads: bool,
}

/// Projection tuning is off by default.
impl Default for RmBackwardOptions {
    fn default() -> Self {
        Self { param_grads: false }
    }
}

#[derive(Debug, Clone)]
pub struct RmGrads {
    pub x: LocalDescriptorGrid,
    /// `None` when projection gradients were not requested.
    pub w1: Option<Matrix>,
    pub w2: Option<Matrix>,
}

/// Gradients of `<grad_out, rm_pool(grid, p)>`.
pub fn rm_backward(grid: &LocalDescriptorGrid, p: &RmParams, grad_out: &Matrix) -> Result<RmGrads> {
    rm_backward_with(grid, p, grad_out, RmBackwardOptions { param_grads: true })
}

pub fn rm_backward_with(
    grid: &LocalDescriptorGrid,
    p: &RmParams,
    grad_out: &Matrix,
    opts: RmBackwardOptions,
) -> Result<RmGrads> {
    check_channels(grid, p)?;
    if grad_out.rows() != grid.n() || grad_out.cols() != p.d {
        return Err(Error::shape(format!(
            "grad_out is {}x{}, expected {}x{}",
            grad_out.rows(),
            grad_out.cols(),
            grid.n(),
            p.d
        )));
    }
    let (c, d) = (p.c, p.d);
    let scale = p.scale();
    let stride = grid.locations() * c;
    let mut grad_x = vec![0.0; grid.data().len()];

    let partials: Vec<Option<(Vec<f64>, Vec<f64>)>> = grad_x
        .par_chunks_mut(stride * GRAD_CHUNK)
        .enumerate()
        .map(|(chunk, gx_chunk)| {
            let mut gw = opts
                .param_grads
                .then(|| (vec![0.0; d * c], vec![0.0; d * c]));
            let mut u1 = vec![0.0; d];
            let mut u2 = vec![0.0; d];
            let mut a1 = vec![0.0; d];
            let mut a2 = vec![0.0; d];
            for (offset, gx_sample) in gx_chunk.chunks_exact_mut(stride).enumerate() {
                let i = chunk * GRAD_CHUNK + offset;
                let g = grad_out.row(i);
                for (x, gx) in grid.descriptors(i).zip(gx_sample.chunks_exact_mut(c)) {
                    p.project_into(x, &mut u1, &mut u2);
                    // a1 = ∂/∂(W1 x), a2 = ∂/∂(W2 x)
                    for r in 0..d {
                        a1[r] = scale * g[r] * u2[r];
                        a2[r] = scale * g[r] * u1[r];
                    }
                    for r in 0..d {
                        let (w1r, w2r) = (p.w1.row(r), p.w2.row(r));
                        let (s1, s2) = (a1[r], a2[r]);
                        for t in 0..c {
                            gx[t] += s1 * w1r[t] + s2 * w2r[t];
                        }
                    }
                    if let Some((gw1, gw2)) = gw.as_mut() {
                        for r in 0..d {
                            let row1 = &mut gw1[r * c..(r + 1) * c];
                            let row2 = &mut gw2[r * c..(r + 1) * c];
                            for t in 0..c {
                                row1[t] += a1[r] * x[t];
                                row2[t] += a2[r] * x[t];
                            }
                        }
                    }
                }
            }
            gw
        })
        .collect();

    let (w1, w2) = if opts.param_grads {
        let mut gw1 = vec![0.0; d * c];
        let mut gw2 = vec![0.0; d * c];
        for (p1, p2) in partials.into_iter().flatten() {
            gw1.iter_mut().zip(&p1).for_each(|(a, b)| *a += b);
            gw2.iter_mut().zip(&p2).for_each(|(a, b)| *a += b);
        }
        (Some(Matrix::new(d, c, gw1)?), Some(Matrix::new(d, c, gw2)?))
    } else {
        (None, None)
    };

    Ok(RmGrads {
        x: LocalDescriptorGrid::from_parts_unchecked(grid.n(), grid.h(), grid.w(), c, grad_x),
        w1,
        w2,
    })
}
