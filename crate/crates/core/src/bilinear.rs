//! Exact second-order pooling and the kernel it induces.
//!
//! `bilinear_pool` sums `x xᵀ` over all locations of a sample and flattens
//! the `c x c` result row-major. A linear kernel between two such
//! descriptors equals the sum of squared inner products between all pairs
//! of local descriptors, which `exact_kernel` evaluates directly. Every
//! compact approximation in this crate is checked against these two.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{dot, LocalDescriptorGrid, Matrix, PoolKind, PooledDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BilinearConfig {
    pub c: usize,
}

impl BilinearConfig {
    pub fn new(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::parameter("channel count must be positive"));
        }
        Ok(Self { c })
    }

    pub fn output_dim(&self) -> usize {
        self.c * self.c
    }
}

fn accumulate_outer(x: &[f64], out: &mut [f64]) {
    let c = x.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &xj) in out[i * c..(i + 1) * c].iter_mut().zip(x) {
            *o += xi * xj;
        }
    }
}

pub fn bilinear_pool(grid: &LocalDescriptorGrid) -> PooledDescriptor {
    let c = grid.c();
    let dim = c * c;
    let mut out = Matrix::zeros(grid.n(), dim);
    out.data_mut()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, row)| {
            for x in grid.descriptors(i) {
                accumulate_outer(x, row);
            }
        });
    PooledDescriptor::new(PoolKind::FullBilinear, out).expect("pooling finite inputs is finite")
}

/// Gradient of `<grad_out, bilinear_pool(grid)>` with respect to the grid:
/// `(G + Gᵀ) x_s` at every location, `G` being the row of `grad_out`
/// viewed as `c x c`.
pub fn bilinear_pool_backward(
    grid: &LocalDescriptorGrid,
    grad_out: &Matrix,
) -> Result<LocalDescriptorGrid> {
    let c = grid.c();
    if grad_out.rows() != grid.n() || grad_out.cols() != c * c {
        return Err(Error::shape(format!(
            "grad_out is {}x{}, expected {}x{}",
            grad_out.rows(),
            grad_out.cols(),
            grid.n(),
            c * c
        )));
    }
    let stride = grid.locations() * c;
    let mut grad = vec![0.0; grid.data().len()];
    grad.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(i, g_sample)| {
            let g = grad_out.row(i);
            let sym: Vec<f64> = (0..c * c)
                .map(|idx| {
                    let (r, q) = (idx / c, idx % c);
                    g[idx] + g[q * c + r]
                })
                .collect();
            for (x, gx) in grid.descriptors(i).zip(g_sample.chunks_exact_mut(c)) {
                for (r, out) in gx.iter_mut().enumerate() {
                    *out = dot(&sym[r * c..(r + 1) * c], x);
                }
            }
        });
    Ok(LocalDescriptorGrid::from_parts_unchecked(
        grid.n(),
        grid.h(),
        grid.w(),
        c,
        grad,
    ))
}

/// `Σ_s Σ_u <x_s, y_u>²` between the single samples of `a` and `b`.
pub fn exact_kernel(a: &LocalDescriptorGrid, b: &LocalDescriptorGrid) -> Result<f64> {
    if a.n() != 1 || b.n() != 1 {
        return Err(Error::shape(format!(
            "exact_kernel takes single-sample grids, got n={} and n={}",
            a.n(),
            b.n()
        )));
    }
    exact_kernel_samples(a, 0, b, 0)
}

/// Same as [`exact_kernel`] between sample `i` of `a` and sample `j` of `b`.
pub fn exact_kernel_samples(
    a: &LocalDescriptorGrid,
    i: usize,
    b: &LocalDescriptorGrid,
    j: usize,
) -> Result<f64> {
    if a.c() != b.c() {
        return Err(Error::shape(format!(
            "channel mismatch: {} vs {}",
            a.c(),
            b.c()
        )));
    }
    if i >= a.n() || j >= b.n() {
        return Err(Error::IndexOutOfRange {
            what: "sample",
            index: if i >= a.n() { i } else { j },
            len: if i >= a.n() { a.n() } else { b.n() },
        });
    }
    let mut total = 0.0;
    for x in a.descriptors(i) {
        for y in b.descriptors(j) {
            let ip = dot(x, y);
            total += ip * ip;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, max_rel_err, random_grid, random_matrix};
    use crate::SeededRng;
    use proptest::prelude::*;

    fn single(x: &[f64]) -> LocalDescriptorGrid {
        LocalDescriptorGrid::new(1, 1, 1, x.len(), x.to_vec()).unwrap()
    }

    #[test]
    fn one_location_outer_product() {
        let p = bilinear_pool(&single(&[1.0, 2.0]));
        assert_eq!(p.data(), &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(p.kind(), PoolKind::FullBilinear);
    }

    #[test]
    fn two_locations_sum() {
        let g = LocalDescriptorGrid::new(1, 1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(bilinear_pool(&g).data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn typical_output_dim() {
        assert_eq!(BilinearConfig::new(512).unwrap().output_dim(), 262_144);
        assert!(BilinearConfig::new(0).is_err());
    }

    #[test]
    fn backward_zero() {
        let mut rng = SeededRng::new(1);
        let g = random_grid(&mut rng, 2, 2, 3, 4);
        let grad = bilinear_pool_backward(&g, &Matrix::zeros(2, 16)).unwrap();
        assert!(grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_identity() {
        let grad = bilinear_pool_backward(
            &single(&[1.0, 2.0]),
            &Matrix::new(1, 4, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(grad.data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_shape_mismatch() {
        assert!(bilinear_pool_backward(&single(&[1.0, 2.0]), &Matrix::zeros(1, 3)).is_err());
        assert!(bilinear_pool_backward(&single(&[1.0, 2.0]), &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(11);
        let grid = random_grid(&mut rng, 2, 2, 3, 5);
        let g = random_matrix(&mut rng, 2, 25);
        let analytic = bilinear_pool_backward(&grid, &g).unwrap();
        let numeric = central_difference(grid.data(), 1e-6, |x| {
            let gr = LocalDescriptorGrid::new(2, 2, 3, 5, x.to_vec()).unwrap();
            dot(bilinear_pool(&gr).data(), g.data())
        });
        assert!(max_rel_err(analytic.data(), &numeric) < 1e-6);
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(
            exact_kernel(&single(&[1.0, 0.0]), &single(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_eq!(
            exact_kernel(&single(&[1.0, 1.0]), &single(&[1.0, 1.0])).unwrap(),
            4.0
        );
    }

    #[test]
    fn kernel_channel_mismatch() {
        assert!(exact_kernel(&single(&[1.0, 0.0]), &single(&[1.0])).is_err());
        let two = LocalDescriptorGrid::zeros(2, 1, 1, 1).unwrap();
        assert!(exact_kernel(&two, &single(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn linear_kernel_identity(seed in any::<u64>(), c in 1usize..8, ha in 1usize..4, wb in 1usize..4) {
            let mut rng = SeededRng::new(seed);
            let a = random_grid(&mut rng, 1, ha, 2, c);
            let b = random_grid(&mut rng, 1, 3, wb, c);
            let direct = exact_kernel(&a, &b).unwrap();
            let via_pool = dot(bilinear_pool(&a).data(), bilinear_pool(&b).data());
            prop_assert!((direct - via_pool).abs() <= 1e-10 * direct.abs().max(1e-300));
            prop_assert!((direct - exact_kernel(&b, &a).unwrap()).abs() <= 1e-12 * direct.abs());
            prop_assert!(exact_kernel(&a, &a).unwrap() >= 0.0);
        }

        #[test]
        fn pooled_matrix_symmetric(seed in any::<u64>(), c in 1usize..7) {
            let mut rng = SeededRng::new(seed);
            let g = random_grid(&mut rng, 2, 2, 2, c);
            let p = bilinear_pool(&g);
            for n in 0..2 {
                let row = p.row(n);
                for i in 0..c {
                    for j in 0..c {
                        prop_assert_eq!(row[i * c + j], row[j * c + i]);
                    }
                }
            }
        }

        #[test]
        fn additive_over_locations(seed in any::<u64>(), c in 1usize..6, h in 1usize..4, w in 1usize..4) {
            let mut rng = SeededRng::new(seed);
            let g = random_grid(&mut rng, 1, h, w, c);
            let pooled = bilinear_pool(&g);
            let mut sum = vec![0.0; c * c];
            for x in g.descriptors(0) {
                for (s, v) in sum.iter_mut().zip(bilinear_pool(&single(x)).data()) {
                    *s += v;
                }
            }
            let scale = pooled.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in pooled.data().iter().zip(&sum) {
                prop_assert!((a - b).abs() <= 1e-12 * scale.max(1e-300));
            }
        }
    }
}
