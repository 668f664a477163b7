//! Seeded spatial white noise on the grid.
//!
//! Each node receives an independent `N(0, h⁻²)` sample, so that
//! `inner_l2(ξ, φ)` is centered Gaussian with variance `inner_l2(φ, φ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};

/// Name of the generator recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64) + ziggurat StandardNormal (rand_distr 0.5)";

/// A white-noise realization together with what is needed to regenerate it.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSample {
    pub field: GridField,
    pub seed: u64,
    /// Retained frequencies `|k|_∞ ≤ cutoff`, if mollified.
    pub cutoff: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub cutoff: Option<usize>,
}

impl NoiseSample {
    /// Noise identically zero; useful for analytic checks.
    pub fn zero(grid: &TorusGrid) -> Self {
        Self::deterministic(GridField::zeros(grid))
    }

    /// Wraps a prescribed potential in place of a random sample.
    pub fn deterministic(field: GridField) -> Self {
        NoiseSample {
            field,
            seed: 0,
            cutoff: None,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.field.grid()
    }
}

pub fn sample_white_noise(grid: &TorusGrid, seed: u64) -> NoiseSample {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sd = 1.0 / grid.h();
    let values = (0..grid.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    NoiseSample {
        field: GridField::from_vec_unchecked(grid, values),
        seed,
        cutoff: None,
    }
}

/// Zeroes every Fourier mode with `|k|_∞ > cutoff`. `cutoff = n/2` is the identity.
pub fn mollify(xi: &NoiseSample, cutoff: usize) -> Result<NoiseSample> {
    let grid = xi.grid();
    let n = grid.n();
    if cutoff > n / 2 {
        return Err(Error::Domain(format!(
            "cutoff {cutoff} exceeds n/2 = {}",
            n / 2
        )));
    }
    if cutoff == n / 2 {
        return Ok(NoiseSample {
            cutoff: Some(cutoff),
            ..xi.clone()
        });
    }
    let mut coeffs = grid.forward_raw(xi.field.values());
    for a in 0..n {
        let k1 = if a < n / 2 { a } else { n - a };
        for b in 0..n {
            let k2 = if b < n / 2 { b } else { n - b };
            if k1.max(k2) > cutoff {
                coeffs[a * n + b] = Default::default();
            }
        }
    }
    Ok(NoiseSample {
        field: GridField::from_vec_unchecked(grid, grid.inverse_raw(coeffs)),
        seed: xi.seed,
        cutoff: Some(cutoff),
    })
}

/// Regenerates a sample from its spec.
pub fn regenerate(grid: &TorusGrid, spec: NoiseSpec) -> Result<NoiseSample> {
    let xi = sample_white_noise(grid, spec.seed);
    match spec.cutoff {
        Some(k) => mollify(&xi, k),
        None => Ok(xi),
    }
}
