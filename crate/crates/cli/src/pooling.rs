use std::fmt;

use cbp_core::bilinear::bilinear_pool;
use cbp_core::postproc::NormalizedDescriptor;
use cbp_core::rm::{gen_rm, rm_pool};
use cbp_core::ts::{gen_ts, ts_pool};
use cbp_core::{LocalDescriptorGrid, Matrix, PooledDescriptor, Result, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
pub enum Method {
    Bilinear,
    Rm,
    Ts,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bilinear => "bilinear",
            Method::Rm => "rm",
            Method::Ts => "ts",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pools `grid` with `method`. Random parameters come from `seed`; `dim`
/// is ignored for bilinear pooling.
pub fn pool(
    grid: &LocalDescriptorGrid,
    method: Method,
    dim: usize,
    seed: u64,
) -> Result<PooledDescriptor> {
    let mut rng = SeededRng::new(seed);
    match method {
        Method::Bilinear => Ok(bilinear_pool(grid)),
        Method::Rm => rm_pool(grid, &gen_rm(grid.c(), dim, &mut rng)?),
        Method::Ts => ts_pool(grid, &gen_ts(grid.c(), dim, &mut rng)?),
    }
}

/// Pools, then applies signed square root and l2 normalization.
pub fn pooled_features(
    grid: &LocalDescriptorGrid,
    method: Method,
    dim: usize,
    seed: u64,
) -> Result<Matrix> {
    Ok(NormalizedDescriptor::from_pooled(&pool(grid, method, dim, seed)?).into_values())
}
