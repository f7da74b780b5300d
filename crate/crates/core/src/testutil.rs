//! Finite-difference oracle and random fixtures for unit tests.

use crate::{LocalDescriptorGrid, Matrix, SeededRng};

pub fn random_grid(
    rng: &mut SeededRng,
    n: usize,
    h: usize,
    w: usize,
    c: usize,
) -> LocalDescriptorGrid {
    LocalDescriptorGrid::from_fn(n, h, w, c, |_, _, _, _| rng.normal()).unwrap()
}

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Central differences of a scalar function, step `eps * max(1, |x_i|)`.
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

/// Largest entrywise relative error; denominators are floored at 1e-3 of
/// the largest magnitude so near-zero entries are compared absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
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
