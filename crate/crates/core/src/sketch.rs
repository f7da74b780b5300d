//! Count Sketch and circular convolution.
//!
//! Hash indices are 0-based: bucket `h[i]` lies in `0..d`.
//!
//! [`circ_conv_naive`] and [`circ_corr`] evaluate their definitions in
//! `O(d²)` and serve as oracles. [`CircularConvolver`] does the same work in
//! `O(d log d)` through FFTs of any length (mixed radix, with Bluestein's
//! algorithm for large prime factors).

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct CountSketchParams {
    c: usize,
    d: usize,
    h: Vec<usize>,
    s: Vec<f64>,
}

impl CountSketchParams {
    /// Builds parameters from explicit hashes and signs. Signs may be any
    /// finite reals, which is how tuned sign vectors are represented.
    pub fn new(d: usize, h: Vec<usize>, s: Vec<f64>) -> Result<Self> {
        if d == 0 || h.is_empty() {
            return Err(Error::parameter("count sketch needs c >= 1 and d >= 1"));
        }
        if h.len() != s.len() {
            return Err(Error::shape(format!(
                "{} hash entries but {} signs",
                h.len(),
                s.len()
            )));
        }
        if let Some(&bad) = h.iter().find(|&&b| b >= d) {
            return Err(Error::parameter(format!(
                "bucket {bad} out of range 0..{d}"
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("signs must be finite"));
        }
        Ok(Self {
            c: h.len(),
            d,
            h,
            s,
        })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn buckets(&self) -> &[usize] {
        &self.h
    }

    pub fn signs(&self) -> &[f64] {
        &self.s
    }

    /// Replaces the signs (e.g. after a tuning step). Buckets stay fixed.
    pub fn set_signs(&mut self, s: Vec<f64>) -> Result<()> {
        if s.len() != self.c {
            return Err(Error::shape(format!(
                "expected {} signs, got {}",
                self.c,
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("signs must be finite"));
        }
        self.s = s;
        Ok(())
    }

    /// `out[h[t]] += s[t] * x[t]` without allocation or shape checks.
    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for ((&b, &s), &v) in self.h.iter().zip(&self.s).zip(x) {
            out[b] += s * v;
        }
    }
}

/// Uniform buckets and Rademacher signs, each from its own child stream.
pub fn gen_count_sketch(c: usize, d: usize, rng: &mut SeededRng) -> Result<CountSketchParams> {
    if c == 0 || d == 0 {
        return Err(Error::parameter(format!(
            "count sketch needs c >= 1 and d >= 1, got c={c} d={d}"
        )));
    }
    let base = rng.fork();
    let mut hash_rng = base.child(0);
    let mut sign_rng = base.child(1);
    let h = (0..c).map(|_| hash_rng.index(d)).collect();
    let s = (0..c).map(|_| sign_rng.sign()).collect();
    Ok(CountSketchParams { c, d, h, s })
}

pub fn count_sketch(x: &[f64], p: &CountSketchParams) -> Result<Vec<f64>> {
    if x.len() != p.c {
        return Err(Error::shape(format!(
            "input has length {}, sketch expects {}",
            x.len(),
            p.c
        )));
    }
    let mut out = vec![0.0; p.d];
    p.apply_into(x, &mut out);
    Ok(out)
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "operands must have equal nonzero length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `out[j] = Σ_i a[i] b[(j - i) mod d]`, evaluated directly.
pub fn circ_conv_naive(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    same_len(a, b)?;
    let d = a.len();
    let mut out = vec![0.0; d];
    for (i, &ai) in a.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += ai * b[(j + d - i) % d];
        }
    }
    Ok(out)
}

/// `out[j] = Σ_i a[i] b[(i - j) mod d]`, the adjoint of convolution by `b`,
/// evaluated directly.
pub fn circ_corr(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    same_len(a, b)?;
    let d = a.len();
    let mut out = vec![0.0; d];
    for (i, &ai) in a.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += ai * b[(i + d - j) % d];
        }
    }
    Ok(out)
}

/// `a * b` through the FFT. Plans a transform per call; reuse a
/// [`CircularConvolver`] when convolving many vectors of one length.
pub fn circ_conv_fast(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    same_len(a, b)?;
    Ok(CircularConvolver::new(a.len()).conv(a, b))
}

/// Planned forward and inverse transforms of one length.
#[derive(Clone)]
pub struct CircularConvolver {
    d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for CircularConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircularConvolver")
            .field("d", &self.d)
            .finish()
    }
}

/// Per-thread buffers for [`CircularConvolver`].
#[derive(Debug, Clone)]
pub struct SpectralScratch {
    pub(crate) buf: Vec<Complex64>,
    pub(crate) fft: Vec<Complex64>,
    half_a: Vec<Complex64>,
    half_b: Vec<Complex64>,
}

impl CircularConvolver {
    /// `d` must be at least 1.
    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "transform length must be positive");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(d);
        let inverse = planner.plan_fft_inverse(d);
        let mut real_planner = RealFftPlanner::new();
        let r2c = real_planner.plan_fft_forward(d);
        let c2r = real_planner.plan_fft_inverse(d);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len())
            .max(r2c.get_scratch_len())
            .max(c2r.get_scratch_len());
        Self {
            d,
            forward,
            inverse,
            r2c,
            c2r,
            scratch_len,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn scratch(&self) -> SpectralScratch {
        SpectralScratch {
            buf: vec![Complex64::default(); self.d],
            fft: vec![Complex64::default(); self.scratch_len],
            half_a: vec![Complex64::default(); self.half_len()],
            half_b: vec![Complex64::default(); self.half_len()],
        }
    }

    /// Length of the non-redundant half spectrum of a real signal.
    pub(crate) fn half_len(&self) -> usize {
        self.d / 2 + 1
    }

    /// Adds the half spectrum of `a * b` to `acc`. `a` and `b` are
    /// overwritten.
    pub(crate) fn accumulate_product_half(
        &self,
        a: &mut [f64],
        b: &mut [f64],
        scratch: &mut SpectralScratch,
        acc: &mut [Complex64],
    ) {
        let SpectralScratch {
            fft,
            half_a,
            half_b,
            ..
        } = scratch;
        self.r2c
            .process_with_scratch(a, half_a, fft)
            .expect("buffer lengths fixed at construction");
        self.r2c
            .process_with_scratch(b, half_b, fft)
            .expect("buffer lengths fixed at construction");
        for ((o, x), y) in acc.iter_mut().zip(half_a.iter()).zip(half_b.iter()) {
            *o += x * y;
        }
    }

    /// Inverse of a half spectrum, including `1/d`. `spec` is overwritten.
    pub(crate) fn inverse_half(
        &self,
        spec: &mut [Complex64],
        scratch: &mut SpectralScratch,
        out: &mut [f64],
    ) {
        // Bins whose conjugate is themselves are real; clear roundoff.
        spec[0].im = 0.0;
        if self.d.is_multiple_of(2) {
            spec[self.d / 2].im = 0.0;
        }
        self.c2r
            .process_with_scratch(spec, out, &mut scratch.fft)
            .expect("buffer lengths fixed at construction");
        let norm = 1.0 / self.d as f64;
        for o in out.iter_mut() {
            *o *= norm;
        }
    }

    /// Spectra of two real signals from one complex transform.
    pub(crate) fn forward_pair(
        &self,
        a: &[f64],
        b: &[f64],
        scratch: &mut SpectralScratch,
        spec_a: &mut [Complex64],
        spec_b: &mut [Complex64],
    ) {
        let d = self.d;
        let SpectralScratch { buf, fft, .. } = scratch;
        for ((z, &x), &y) in buf.iter_mut().zip(a).zip(b) {
            *z = Complex64::new(x, y);
        }
        self.forward.process_with_scratch(buf, fft);
        for k in 0..d {
            let z = buf[k];
            let zc = buf[(d - k) % d].conj();
            spec_a[k] = (z + zc) * 0.5;
            // (z - zc) / 2i
            let diff = z - zc;
            spec_b[k] = Complex64::new(diff.im * 0.5, -diff.re * 0.5);
        }
    }

    /// Inverse transforms of two Hermitian spectra, written to real
    /// outputs. Includes the `1/d` normalization.
    pub(crate) fn inverse_pair(
        &self,
        spec_p: &[Complex64],
        spec_q: &[Complex64],
        scratch: &mut SpectralScratch,
        p: &mut [f64],
        q: &mut [f64],
    ) {
        let SpectralScratch { buf, fft, .. } = scratch;
        for ((z, &x), &y) in buf.iter_mut().zip(spec_p).zip(spec_q) {
            *z = x + Complex64::new(-y.im, y.re);
        }
        self.inverse.process_with_scratch(buf, fft);
        let norm = 1.0 / self.d as f64;
        for ((z, pv), qv) in buf.iter().zip(p.iter_mut()).zip(q.iter_mut()) {
            *pv = z.re * norm;
            *qv = z.im * norm;
        }
    }

    /// Inverse transform of one Hermitian spectrum, including `1/d`.
    pub(crate) fn inverse_real(
        &self,
        spec: &[Complex64],
        scratch: &mut SpectralScratch,
        out: &mut [f64],
    ) {
        let SpectralScratch { buf, fft, .. } = scratch;
        buf.copy_from_slice(spec);
        self.inverse.process_with_scratch(buf, fft);
        let norm = 1.0 / self.d as f64;
        for (z, o) in buf.iter().zip(out.iter_mut()) {
            *o = z.re * norm;
        }
    }

    /// Circular convolution of two length-`d` vectors.
    pub fn conv(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.d);
        assert_eq!(b.len(), self.d);
        let mut scratch = self.scratch();
        let mut sa = vec![Complex64::default(); self.d];
        let mut sb = vec![Complex64::default(); self.d];
        self.forward_pair(a, b, &mut scratch, &mut sa, &mut sb);
        for (x, y) in sa.iter_mut().zip(&sb) {
            *x *= y;
        }
        let mut out = vec![0.0; self.d];
        self.inverse_real(&sa, &mut scratch, &mut out);
        out
    }

    /// Circular correlation, same contract as [`circ_corr`].
    pub fn corr(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.d);
        assert_eq!(b.len(), self.d);
        let mut scratch = self.scratch();
        let mut sa = vec![Complex64::default(); self.d];
        let mut sb = vec![Complex64::default(); self.d];
        self.forward_pair(a, b, &mut scratch, &mut sa, &mut sb);
        for (x, y) in sa.iter_mut().zip(&sb) {
            *x *= y.conj();
        }
        let mut out = vec![0.0; self.d];
        self.inverse_real(&sa, &mut scratch, &mut out);
        out
    }
}
