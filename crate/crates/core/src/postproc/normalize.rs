//! Signed square root and row-wise l2 normalization.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, PoolKind, PooledDescriptor};

/// Floor on `√|x|` in the signed square root derivative.
pub const SIGNED_SQRT_EPS: f64 = 1e-8;

pub fn signed_sqrt(v: &Matrix) -> Matrix {
    let data = v
        .data()
        .iter()
        .map(|&x| {
            if x == 0.0 {
                0.0
            } else {
                x.signum() * x.abs().sqrt()
            }
        })
        .collect();
    Matrix::new(v.rows(), v.cols(), data).expect("same shape")
}

/// `grad / (2 max(√|x|, ε))`, given the layer input `v`.
pub fn signed_sqrt_backward(v: &Matrix, grad: &Matrix) -> Result<Matrix> {
    same_shape(v, grad)?;
    let data = v
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| g / (2.0 * x.abs().sqrt().max(SIGNED_SQRT_EPS)))
        .collect();
    Matrix::new(v.rows(), v.cols(), data)
}

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Divides each row by its l2 norm; zero rows stay zero.
pub fn l2_normalize(v: &Matrix) -> Matrix {
    let mut out = v.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
    out
}

/// `(g - y <y, g>) / ‖v‖` per row, with `y = v / ‖v‖`; zero rows get zero.
pub fn l2_normalize_backward(v: &Matrix, grad: &Matrix) -> Result<Matrix> {
    same_shape(v, grad)?;
    let mut out = Matrix::zeros(v.rows(), v.cols());
    for i in 0..v.rows() {
        let x = v.row(i);
        let n = norm(x);
        if n == 0.0 {
            continue;
        }
        let g = grad.row(i);
        let proj: f64 = x.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((o, &xv), &gv) in out.row_mut(i).iter_mut().zip(x).zip(g) {
            *o = (gv - xv / n * proj) / n;
        }
    }
    Ok(out)
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "gradient is {}x{}, input is {}x{}",
            b.rows(),
            b.cols(),
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Pooled descriptors after signed square root then l2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDescriptor {
    kind: PoolKind,
    values: Matrix,
}

impl NormalizedDescriptor {
    pub fn from_pooled(pooled: &PooledDescriptor) -> Self {
        Self {
            kind: pooled.kind(),
            values: l2_normalize(&signed_sqrt(pooled.values())),
        }
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }
}
