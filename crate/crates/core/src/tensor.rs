//! Dense containers shared by every layer.
//!
//! Grids are stored sample-major, then row, column and channel, so the
//! descriptor of one spatial location is a contiguous slice of length `c`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptorGrid {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl LocalDescriptorGrid {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::validation(format!(
                "grid dimensions must be positive, got n={n} h={h} w={w} c={c}"
            )));
        }
        let len = n
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| Error::validation("grid size overflows usize"))?;
        if data.len() != len {
            return Err(Error::shape(format!(
                "grid {n}x{h}x{w}x{c} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite grid value at flat offset {pos}"
            )));
        }
        Ok(Self { n, h, w, c, data })
    }

    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        Self::new(n, h, w, c, vec![0.0; n * h * w * c])
    }

    /// Builds a grid from a generator called in layout order with
    /// `(sample, row, col, channel)`.
    pub fn from_fn(
        n: usize,
        h: usize,
        w: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n * h * w * c);
        for i in 0..n {
            for r in 0..h {
                for q in 0..w {
                    for k in 0..c {
                        data.push(f(i, r, q, k));
                    }
                }
            }
        }
        Self::new(n, h, w, c, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// Number of spatial locations `h * w`.
    pub fn locations(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// All descriptors of one sample, `h * w * c` values.
    pub fn sample(&self, i: usize) -> &[f64] {
        let stride = self.h * self.w * self.c;
        &self.data[i * stride..(i + 1) * stride]
    }

    /// Iterator over the `c`-vectors of one sample in row-major spatial order.
    pub fn descriptors(&self, i: usize) -> std::slice::ChunksExact<'_, f64> {
        self.sample(i).chunks_exact(self.c)
    }

    pub fn descriptor_at(&self, sample: usize, row: usize, col: usize) -> Result<&[f64]> {
        check_index("sample", sample, self.n)?;
        check_index("row", row, self.h)?;
        check_index("col", col, self.w)?;
        let start = ((sample * self.h + row) * self.w + col) * self.c;
        Ok(&self.data[start..start + self.c])
    }

    /// Copy of samples `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.h * self.w * self.c);
        for &i in indices {
            check_index("sample", i, self.n)?;
            data.extend_from_slice(self.sample(i));
        }
        Self::new(indices.len(), self.h, self.w, self.c, data)
    }

    /// Gradient containers share the grid layout but are built internally
    /// from finite arithmetic on finite inputs.
    pub(crate) fn from_parts_unchecked(
        n: usize,
        h: usize,
        w: usize,
        c: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), n * h * w * c);
        Self { n, h, w, c, data }
    }
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        Err(Error::IndexOutOfRange { what, index, len })
    } else {
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of rows `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            check_index("row", i, self.rows)?;
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    FullBilinear,
    RandomMaclaurin,
    TensorSketch,
}

/// Global descriptors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDescriptor {
    kind: PoolKind,
    values: Matrix,
}

impl PooledDescriptor {
    pub fn new(kind: PoolKind, values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::validation("pooled descriptor has non-finite values"));
        }
        if kind == PoolKind::FullBilinear {
            let root = (values.cols() as f64).sqrt().round() as usize;
            if root * root != values.cols() {
                return Err(Error::validation(format!(
                    "full bilinear dimension {} is not a perfect square",
                    values.cols()
                )));
            }
        }
        Ok(Self { kind, values })
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn data(&self) -> &[f64] {
        self.values.data()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
