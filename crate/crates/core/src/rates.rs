//! Mesh-dependent rate formulas relating the lattice model to the
//! continuum hard-sphere model.
//!
//! All bimolecular quantities take the *pair* parameters: `d` is the sum of
//! the two diffusion constants and `sigma` the sum of the reaction radii.

use crate::error::{Error, Result};
use crate::mesh::{jump_rate, CartesianMesh};
use crate::model::{Model, ReactionKind};

use std::f64::consts::PI;

/// Lattice Green's function constant for the 2D square lattice.
pub const C2: f64 = 0.1951;
/// Lattice Green's function constant for the 3D cubic lattice.
pub const C3: f64 = 1.5164;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

/// `G(h, sigma) = 1/(4 pi sigma) - C3/(6h)`; negative below the critical mesh size.
pub fn g3(h: f64, sigma: f64) -> f64 {
    1.0 / (4.0 * PI * sigma) - C3 / (6.0 * h)
}

/// Mesh size at which the lattice and continuum mean diffusion times agree.
pub fn h_star(sigma: f64, dim: Dim) -> f64 {
    match dim {
        Dim::Three => 2.0 * C3 / 3.0 * PI * sigma,
        Dim::Two => PI.sqrt() * ((3.0 + 2.0 * C2 * PI) / 4.0).exp() * sigma,
    }
}

/// Well-mixed association rate per pair in a volume `v`.
pub fn collins_kimball(k_a: f64, d: f64, sigma: f64, v: f64) -> f64 {
    let kd = 4.0 * PI * sigma * d;
    kd * k_a / (kd + k_a) / v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesoRate {
    /// Per-pair propensity constant inside one voxel (1/time).
    pub k_meso: f64,
    /// `h < h*`: the rate exists but accuracy degrades.
    pub below_optimal: bool,
}

/// Corrected mesoscopic rate `k_a/h^3 * (1 + (k_a/D) G(h, sigma))^-1`.
pub fn meso_rate(k_a: f64, d: f64, sigma: f64, h: f64) -> Result<MesoRate> {
    let denominator = 1.0 + k_a / d * g3(h, sigma);
    let h_star = h_star(sigma, Dim::Three);
    if !(denominator > 0.0) {
        return Err(Error::NonPositiveDenominator { denominator, h, h_star });
    }
    Ok(MesoRate {
        k_meso: k_a / h.powi(3) / denominator,
        below_optimal: h < h_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanTimes {
    pub tau_diff_micro: f64,
    pub tau_react_micro: f64,
    pub tau_diff_meso: f64,
    pub tau_react_meso: f64,
}

impl MeanTimes {
    pub fn micro(&self) -> f64 {
        self.tau_diff_micro + self.tau_react_micro
    }

    pub fn meso(&self) -> f64 {
        self.tau_diff_meso + self.tau_react_meso
    }
}

/// Mean binding-time decomposition for one pair in a 3D volume `v` meshed
/// with voxels of width `h` (`N = v/h^3`). Only the leading term of the
/// lattice diffusion time is kept.
pub fn mean_times(k_a: f64, d: f64, sigma: f64, h: f64, v: f64) -> Result<MeanTimes> {
    let n = v / h.powi(3);
    let k_meso = meso_rate(k_a, d, sigma, h)?.k_meso;
    Ok(MeanTimes {
        tau_diff_micro: v / (4.0 * PI * sigma * d),
        tau_react_micro: v / k_a,
        tau_diff_meso: C3 * v / (6.0 * d * h),
        tau_react_meso: n / k_meso,
    })
}

/// 2D mean diffusion times `(micro, meso)` for `n` voxels; formula level only.
pub fn mean_diffusion_times_2d(v: f64, sigma: f64, d: f64, n: f64) -> (f64, f64) {
    let micro = v * (v.sqrt() / (PI * sigma)).ln() / (2.0 * PI * d);
    let meso = v / (4.0 * PI * d) * n.ln() + C2 * v / (4.0 * d);
    (micro, meso)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    /// Relative error indicator `(k_a/D) G(h, sigma)` (absolute value below h*).
    pub w: f64,
    pub below_optimal: bool,
}

pub fn resolution_error_w(k_a: f64, d: f64, sigma: f64, h: f64) -> Resolution {
    let w = k_a / d * g3(h, sigma);
    Resolution {
        w: w.abs(),
        below_optimal: h < h_star(sigma, Dim::Three),
    }
}

/// Rate data for one bimolecular channel on a given mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRate {
    pub k_a: f64,
    pub d: f64,
    pub sigma: f64,
    pub h_star: f64,
    pub k_meso: f64,
    pub w: f64,
    pub below_optimal: bool,
}

/// Per-mesh rate table: meso pair rates for every bimolecular reaction and
/// per-face jump rates for every species.
#[derive(Debug, Clone)]
pub struct RateTable {
    pub h: f64,
    pub pair: Vec<Option<PairRate>>,
    pub jump: Vec<f64>,
}

impl RateTable {
    pub fn build(model: &Model, mesh: &CartesianMesh) -> Result<Self> {
        let h = mesh.h;
        let mut pair = Vec::with_capacity(model.kinds.len());
        for kind in &model.kinds {
            pair.push(match *kind {
                ReactionKind::Bi { a, b, k_a, .. } => {
                    let d = model.diffusion(a) + model.diffusion(b);
                    let sigma = model.sigma(a) + model.sigma(b);
                    let m = meso_rate(k_a, d, sigma, h)?;
                    Some(PairRate {
                        k_a,
                        d,
                        sigma,
                        h_star: h_star(sigma, Dim::Three),
                        k_meso: m.k_meso,
                        w: resolution_error_w(k_a, d, sigma, h).w,
                        below_optimal: m.below_optimal,
                    })
                }
                ReactionKind::Uni { .. } => None,
            });
        }
        let jump = model.species.iter().map(|s| jump_rate(s.diffusion, h)).collect();
        Ok(Self { h, pair, jump })
    }

    pub fn k_meso(&self, rid: usize) -> f64 {
        self.pair[rid].map_or(0.0, |p| p.k_meso)
    }
}
