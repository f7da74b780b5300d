//! Tensor Sketch pooling.
//!
//! `φ(x) = Ψ(x, h1, s1) * Ψ(x, h2, s2)`, the circular convolution of two
//! independent Count Sketches, equals the Count Sketch of `x ⊗ x` under the
//! combined hash `(h1(i) + h2(j)) mod d` and sign `s1(i) s2(j)`. Pooling
//! sums `φ` over locations; since the inverse transform is linear the sum is
//! taken in the frequency domain and inverted once per sample.
//!
//! Hashes are fixed. The backward pass returns gradients for the input and
//! for the sign vectors, obtained by correlating the output gradient with
//! the opposite branch's sketch and scattering through the hash.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::sketch::{gen_count_sketch, CircularConvolver, CountSketchParams, SpectralScratch};
use crate::tensor::{LocalDescriptorGrid, Matrix, PoolKind, PooledDescriptor};

const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TsParams {
    c: usize,
    d: usize,
    sketch1: CountSketchParams,
    sketch2: CountSketchParams,
}

impl TsParams {
    pub fn new(sketch1: CountSketchParams, sketch2: CountSketchParams) -> Result<Self> {
        if sketch1.c() != sketch2.c() || sketch1.d() != sketch2.d() {
            return Err(Error::shape(format!(
                "sketch shapes differ: ({}, {}) vs ({}, {})",
                sketch1.c(),
                sketch1.d(),
                sketch2.c(),
                sketch2.d()
            )));
        }
        Ok(Self {
            c: sketch1.c(),
            d: sketch1.d(),
            sketch1,
            sketch2,
        })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sketch1(&self) -> &CountSketchParams {
        &self.sketch1
    }

    pub fn sketch2(&self) -> &CountSketchParams {
        &self.sketch2
    }

    /// Replaces both sign vectors; hashes are untouched.
    pub fn set_signs(&mut self, s1: Vec<f64>, s2: Vec<f64>) -> Result<()> {
        self.sketch1.set_signs(s1)?;
        self.sketch2.set_signs(s2)
    }

    /// Bytes for the two sign vectors at 32-bit precision. Hashes are
    /// reproducible from the seed and not counted.
    pub fn param_bytes_f32(&self) -> usize {
        2 * self.c * 4
    }
}

pub fn gen_ts(c: usize, d: usize, rng: &mut SeededRng) -> Result<TsParams> {
    if c == 0 || d == 0 {
        return Err(Error::parameter(format!(
            "tensor sketch needs c >= 1 and d >= 1, got c={c} d={d}"
        )));
    }
    let base = rng.fork();
    let sketch1 = gen_count_sketch(c, d, &mut base.child(1))?;
    let sketch2 = gen_count_sketch(c, d, &mut base.child(2))?;
    TsParams::new(sketch1, sketch2)
}

fn check_len(x: &[f64], p: &TsParams) -> Result<()> {
    if x.len() != p.c {
        return Err(Error::shape(format!(
            "input has length {}, sketch expects {}",
            x.len(),
            p.c
        )));
    }
    Ok(())
}

fn check_channels(grid: &LocalDescriptorGrid, p: &TsParams) -> Result<()> {
    if grid.c() != p.c {
        return Err(Error::shape(format!(
            "grid has {} channels, sketch expects {}",
            grid.c(),
            p.c
        )));
    }
    Ok(())
}

pub fn ts_project(x: &[f64], p: &TsParams) -> Result<Vec<f64>> {
    check_len(x, p)?;
    let conv = CircularConvolver::new(p.d);
    ts_project_with(x, p, &conv)
}

/// [`ts_project`] with a caller-held transform plan of length `p.d()`.
pub fn ts_project_with(x: &[f64], p: &TsParams, conv: &CircularConvolver) -> Result<Vec<f64>> {
    check_len(x, p)?;
    if conv.d() != p.d {
        return Err(Error::shape(format!(
            "transform length {} does not match d={}",
            conv.d(),
            p.d
        )));
    }
    let mut a = vec![0.0; p.d];
    let mut b = vec![0.0; p.d];
    p.sketch1.apply_into(x, &mut a);
    p.sketch2.apply_into(x, &mut b);
    Ok(conv.conv(&a, &b))
}

/// Reusable per-thread state for pooling and backward.
struct Workspace {
    scratch: SpectralScratch,
    a: Vec<f64>,
    b: Vec<f64>,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
}

impl Workspace {
    fn new(conv: &CircularConvolver) -> Self {
        let d = conv.d();
        Self {
            scratch: conv.scratch(),
            a: vec![0.0; d],
            b: vec![0.0; d],
            spec_a: vec![Complex64::default(); d],
            spec_b: vec![Complex64::default(); d],
        }
    }

    /// Sketches `x` with both branches and transforms them.
    fn sketch_spectra(&mut self, x: &[f64], p: &TsParams, conv: &CircularConvolver) {
        p.sketch1.apply_into(x, &mut self.a);
        p.sketch2.apply_into(x, &mut self.b);
        conv.forward_pair(
            &self.a,
            &self.b,
            &mut self.scratch,
            &mut self.spec_a,
            &mut self.spec_b,
        );
    }

    /// Adds the half spectrum of `Ψ1(x) * Ψ2(x)` to `acc`.
    fn accumulate_spectrum(
        &mut self,
        x: &[f64],
        p: &TsParams,
        conv: &CircularConvolver,
        acc: &mut [Complex64],
    ) {
        p.sketch1.apply_into(x, &mut self.a);
        p.sketch2.apply_into(x, &mut self.b);
        conv.accumulate_product_half(&mut self.a, &mut self.b, &mut self.scratch, acc);
    }
}

/// Per-location sketch spectra saved by [`ts_pool_cached`] so the backward
/// pass can skip recomputing them. Holds `2 * n * h * w * d` complex values.
#[derive(Debug, Clone)]
pub struct TsCache {
    n: usize,
    locations: usize,
    d: usize,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
}

impl TsCache {
    fn location(&self, i: usize, s: usize) -> (&[Complex64], &[Complex64]) {
        let start = (i * self.locations + s) * self.d;
        (
            &self.spec_a[start..start + self.d],
            &self.spec_b[start..start + self.d],
        )
    }
}

pub fn ts_pool(grid: &LocalDescriptorGrid, p: &TsParams) -> Result<PooledDescriptor> {
    check_channels(grid, p)?;
    let conv = CircularConvolver::new(p.d);
    ts_pool_impl(grid, p, &conv, None)
}

/// [`ts_pool`] with a caller-held transform plan, for repeated calls.
pub fn ts_pool_with(
    grid: &LocalDescriptorGrid,
    p: &TsParams,
    conv: &CircularConvolver,
) -> Result<PooledDescriptor> {
    check_channels(grid, p)?;
    if conv.d() != p.d {
        return Err(Error::shape(format!(
            "transform length {} does not match d={}",
            conv.d(),
            p.d
        )));
    }
    ts_pool_impl(grid, p, conv, None)
}

/// Pools and keeps every location's sketch spectra for [`ts_backward_cached`].
pub fn ts_pool_cached(
    grid: &LocalDescriptorGrid,
    p: &TsParams,
) -> Result<(PooledDescriptor, TsCache)> {
    check_channels(grid, p)?;
    let conv = CircularConvolver::new(p.d);
    let total = grid.n() * grid.locations() * p.d;
    let mut cache = TsCache {
        n: grid.n(),
        locations: grid.locations(),
        d: p.d,
        spec_a: vec![Complex64::default(); total],
        spec_b: vec![Complex64::default(); total],
    };
    let pooled = ts_pool_impl(grid, p, &conv, Some(&mut cache))?;
    Ok((pooled, cache))
}

fn ts_pool_impl(
    grid: &LocalDescriptorGrid,
    p: &TsParams,
    conv: &CircularConvolver,
    cache: Option<&mut TsCache>,
) -> Result<PooledDescriptor> {
    let d = p.d;
    let per_sample = grid.locations() * d;
    let mut out = Matrix::zeros(grid.n(), d);

    let pool_sample =
        |ws: &mut Workspace,
         i: usize,
         row: &mut [f64],
         mut save: Option<(&mut [Complex64], &mut [Complex64])>| {
            let Some((ca, cb)) = save.as_mut() else {
                let mut acc = vec![Complex64::default(); conv.half_len()];
                for x in grid.descriptors(i) {
                    ws.accumulate_spectrum(x, p, conv, &mut acc);
                }
                conv.inverse_half(&mut acc, &mut ws.scratch, row);
                return;
            };
            let mut acc = vec![Complex64::default(); d];
            for (s, x) in grid.descriptors(i).enumerate() {
                ws.sketch_spectra(x, p, conv);
                for ((o, a), b) in acc.iter_mut().zip(&ws.spec_a).zip(&ws.spec_b) {
                    *o += a * b;
                }
                ca[s * d..(s + 1) * d].copy_from_slice(&ws.spec_a);
                cb[s * d..(s + 1) * d].copy_from_slice(&ws.spec_b);
            }
            conv.inverse_real(&acc, &mut ws.scratch, row);
        };

    match cache {
        None => out.data_mut().par_chunks_mut(d).enumerate().for_each_init(
            || Workspace::new(conv),
            |ws, (i, row)| pool_sample(ws, i, row, None),
        ),
        Some(cache) => out
            .data_mut()
            .par_chunks_mut(d)
            .zip(cache.spec_a.par_chunks_mut(per_sample))
            .zip(cache.spec_b.par_chunks_mut(per_sample))
            .enumerate()
            .for_each_init(
                || Workspace::new(conv),
                |ws, (i, ((row, ca), cb))| pool_sample(ws, i, row, Some((ca, cb))),
            ),
    }
    PooledDescriptor::new(PoolKind::TensorSketch, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TsBackwardOptions {
    /// Also compute gradients for the sign vectors.
    pub param_grads: bool,
}

/// Sign tuning is off by default.
impl Default for TsBackwardOptions {
    fn default() -> Self {
        Self { param_grads: false }
    }
}

#[derive(Debug, Clone)]
pub struct TsGrads {
    pub x: LocalDescriptorGrid,
    /// `None` when sign gradients were not requested.
    pub s1: Option<Vec<f64>>,
    pub s2: Option<Vec<f64>>,
}

/// Gradients of `<grad_out, ts_pool(grid, p)>`, recomputing sketches.
pub fn ts_backward(grid: &LocalDescriptorGrid, p: &TsParams, grad_out: &Matrix) -> Result<TsGrads> {
    ts_backward_with(grid, p, grad_out, TsBackwardOptions { param_grads: true })
}

pub fn ts_backward_with(
    grid: &LocalDescriptorGrid,
    p: &TsParams,
    grad_out: &Matrix,
    opts: TsBackwardOptions,
) -> Result<TsGrads> {
    ts_backward_impl(grid, p, grad_out, opts, None)
}

/// Same as [`ts_backward_with`], reading sketch spectra from `cache`.
pub fn ts_backward_cached(
    cache: &TsCache,
    grid: &LocalDescriptorGrid,
    p: &TsParams,
    grad_out: &Matrix,
    opts: TsBackwardOptions,
) -> Result<TsGrads> {
    if cache.n != grid.n() || cache.locations != grid.locations() || cache.d != p.d {
        return Err(Error::shape(
            "cache was built for a different grid or sketch",
        ));
    }
    ts_backward_impl(grid, p, grad_out, opts, Some(cache))
}

fn ts_backward_impl(
    grid: &LocalDescriptorGrid,
    p: &TsParams,
    grad_out: &Matrix,
    opts: TsBackwardOptions,
    cache: Option<&TsCache>,
) -> Result<TsGrads> {
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
    let conv = CircularConvolver::new(d);
    let stride = grid.locations() * c;
    let (h1, s1) = (p.sketch1.buckets(), p.sketch1.signs());
    let (h2, s2) = (p.sketch2.buckets(), p.sketch2.signs());
    let zeros = vec![0.0; d];
    let mut grad_x = vec![0.0; grid.data().len()];

    let partials: Vec<Option<(Vec<f64>, Vec<f64>)>> = grad_x
        .par_chunks_mut(stride * GRAD_CHUNK)
        .enumerate()
        .map(|(chunk, gx_chunk)| {
            let mut gs = opts.param_grads.then(|| (vec![0.0; c], vec![0.0; c]));
            let mut ws = Workspace::new(&conv);
            let mut spec_g = vec![Complex64::default(); d];
            let mut unused = vec![Complex64::default(); d];
            let mut corr_a = vec![Complex64::default(); d];
            let mut corr_b = vec![Complex64::default(); d];
            let mut ga = vec![0.0; d];
            let mut gb = vec![0.0; d];
            for (offset, gx_sample) in gx_chunk.chunks_exact_mut(stride).enumerate() {
                let i = chunk * GRAD_CHUNK + offset;
                conv.forward_pair(
                    grad_out.row(i),
                    &zeros,
                    &mut ws.scratch,
                    &mut spec_g,
                    &mut unused,
                );
                for (s, (x, gx)) in grid
                    .descriptors(i)
                    .zip(gx_sample.chunks_exact_mut(c))
                    .enumerate()
                {
                    let (spec_a, spec_b) = match cache {
                        Some(cache) => cache.location(i, s),
                        None => {
                            ws.sketch_spectra(x, p, &conv);
                            (&ws.spec_a[..], &ws.spec_b[..])
                        }
                    };
                    // ∂L/∂a = g ⋆ b, ∂L/∂b = g ⋆ a
                    for k in 0..d {
                        corr_a[k] = spec_g[k] * spec_b[k].conj();
                        corr_b[k] = spec_g[k] * spec_a[k].conj();
                    }
                    conv.inverse_pair(&corr_a, &corr_b, &mut ws.scratch, &mut ga, &mut gb);
                    for t in 0..c {
                        let (ea, eb) = (ga[h1[t]], gb[h2[t]]);
                        gx[t] = s1[t] * ea + s2[t] * eb;
                        if let Some((gs1, gs2)) = gs.as_mut() {
                            gs1[t] += x[t] * ea;
                            gs2[t] += x[t] * eb;
                        }
                    }
                }
            }
            gs
        })
        .collect();

    let (gs1, gs2) = if opts.param_grads {
        let mut gs1 = vec![0.0; c];
        let mut gs2 = vec![0.0; c];
        for (p1, p2) in partials.into_iter().flatten() {
            gs1.iter_mut().zip(&p1).for_each(|(a, b)| *a += b);
            gs2.iter_mut().zip(&p2).for_each(|(a, b)| *a += b);
        }
        (Some(gs1), Some(gs2))
    } else {
        (None, None)
    };

    Ok(TsGrads {
        x: LocalDescriptorGrid::from_parts_unchecked(grid.n(), grid.h(), grid.w(), c, grad_x),
        s1: gs1,
        s2: gs2,
    })
}
