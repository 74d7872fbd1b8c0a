//! Isolated-pair propagator with a partially absorbing contact sphere.
//!
//! The relative coordinate of a reactive pair diffuses with `D = D1 + D2`
//! outside the sphere `|r| = sigma` and reacts there with intrinsic rate
//! `k_a`. The radial problem has a closed-form Green's function; the
//! functions below evaluate its survival probability, sample reaction
//! times and sample the separation of a surviving pair.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::geom::{self, Vec3};
use crate::rng::normal3;
use crate::special::{erfc, erfcx};

/// Width multiple beyond which the contact sphere is invisible within one step.
pub const FAR_WIDTHS: f64 = 6.0;

/// Parameters of one reactive pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairKernel {
    pub sigma: f64,
    pub d: f64,
    pub k_a: f64,
}

impl PairKernel {
    pub fn new(sigma: f64, d: f64, k_a: f64) -> Self {
        Self { sigma, d, k_a }
    }

    /// Smoluchowski diffusion-limited rate `4 pi sigma D`.
    pub fn k_diff(&self) -> f64 {
        4.0 * PI * self.sigma * self.d
    }

    /// Boundary decay constant `alpha = (1 + k_a/(4 pi sigma D)) sqrt(D)/sigma`.
    pub fn alpha(&self) -> f64 {
        (1.0 + self.k_a / self.k_diff()) * self.d.sqrt() / self.sigma
    }

    /// Probability that a pair started at separation `r0` has reacted by `t`.
    pub fn reaction_probability(&self, r0: f64, t: f64) -> f64 {
        if t <= 0.0 || self.k_a <= 0.0 || self.d <= 0.0 {
            return 0.0;
        }
        let sq = (4.0 * self.d * t).sqrt();
        let y = (r0 - self.sigma).max(0.0) / sq;
        let pref = self.sigma / r0 * self.k_a / (self.k_a + self.k_diff());
        let bracket = erfc(y) - (-y * y).exp() * erfcx(y + self.alpha() * t.sqrt());
        (pref * bracket).clamp(0.0, 1.0)
    }

    /// Survival probability of the pair started at separation `r0`.
    pub fn survival(&self, r0: f64, t: f64) -> f64 {
        1.0 - self.reaction_probability(r0, t)
    }

    /// Density in `r` of the separation at time `t` (not normalized by survival).
    pub fn radial_density(&self, r0: f64, t: f64, r: f64) -> f64 {
        if r < self.sigma {
            return 0.0;
        }
        let four_dt = 4.0 * self.d * t;
        let x = r - self.sigma;
        let x0 = r0 - self.sigma;
        let s = x + x0;
        let kappa = self.alpha() / self.d.sqrt();
        let g = |z: f64| (-z * z / four_dt).exp() / (PI * four_dt).sqrt();
        let boundary = kappa * (-s * s / four_dt).exp() * erfcx(s / four_dt.sqrt() + kappa * (self.d * t).sqrt());
        (r / r0 * (g(x - x0) + g(s) - boundary)).max(0.0)
    }

    /// Whether a pair at `r0` cannot feel the contact sphere within `t`.
    pub fn is_far(&self, r0: f64, t: f64) -> bool {
        r0 - self.sigma > FAR_WIDTHS * (4.0 * self.d * t).sqrt()
    }

    /// Reaction time within `(0, dt]` or `None` if the pair survives the step.
    pub fn sample_reaction_time<R: Rng + ?Sized>(&self, r0: f64, dt: f64, rng: &mut R) -> Option<f64> {
        if self.k_a <= 0.0 || dt <= 0.0 || self.is_far(r0, dt) {
            return None;
        }
        let u: f64 = rng.random();
        if u >= self.reaction_probability(r0, dt) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, dt);
        let tol = 1e-10 * dt;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.reaction_probability(r0, mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Separation at `t` given that the pair started at `r0` has not reacted.
    ///
    /// In `x = r - sigma` the one-dimensional kernel splits into a killed
    /// Gaussian `g(x - x0) - g(x + x0)` and a non-negative boundary part
    /// `2 int exp(-kappa xi) |g'(x + x0 + xi)| dxi`; both are sampled exactly
    /// and the `r/r0` weight is applied by rejection.
    pub fn sample_separation<R: Rng + ?Sized>(&self, r0: f64, t: f64, rng: &mut R) -> f64 {
        let dt = self.d * t;
        let width = (4.0 * dt).sqrt();
        let x0 = (r0 - self.sigma).max(0.0);
        let kappa = self.alpha() / self.d.sqrt();
        let y = x0 / width;
        let mass_killed = 1.0 - erfc(y);
        let mass_boundary = (-y * y).exp() * erfcx(y + kappa * dt.sqrt());
        let p_killed = mass_killed / (mass_killed + mass_boundary);
        let r_cap = r0 + 7.0 * width;
        let step = (2.0 * dt).sqrt();
        loop {
            let x = if rng.random::<f64>() < p_killed {
                loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = x0 + step * z;
                    if x > 0.0 && rng.random::<f64>() < -(-x0 * x / dt).exp_m1() {
                        break x;
                    }
                }
            } else {
                let mean = x0 + 2.0 * kappa * dt;
                let xi = step * positive_normal_tail(mean / step, rng) - mean;
                let start = x0 + xi;
                let e: f64 = rng.sample(Exp1);
                (start * start + 4.0 * dt * e).sqrt() - start
            };
            let r = self.sigma + x;
            if r >= r_cap || rng.random::<f64>() * r_cap < r {
                return r;
            }
        }
    }

    /// New relative vector after `t` for a pair known to survive the step.
    pub fn propagate_relative<R: Rng + ?Sized>(&self, r: Vec3, t: f64, rng: &mut R) -> Vec3 {
        if t <= 0.0 || self.d <= 0.0 {
            return r;
        }
        let r0 = geom::norm(r);
        if self.is_far(r0, t) {
            let next = geom::add(r, geom::scale(normal3(rng), (2.0 * self.d * t).sqrt()));
            return push_outside(next, self.sigma);
        }
        let r_new = self.sample_separation(r0, t, rng);
        let kappa = r_new * r0 / (2.0 * self.d * t);
        let dir = sample_von_mises_fisher(geom::scale(r, 1.0 / r0), kappa, rng);
        geom::scale(dir, r_new)
    }
}

/// Survival probability of a pair started at contact.
pub fn contact_survival(k_a: f64, d: f64, sigma: f64, t: f64) -> f64 {
    let k = PairKernel::new(sigma, d, k_a);
    if t <= 0.0 || k_a <= 0.0 {
        return 1.0;
    }
    1.0 - k_a / (k.k_diff() + k_a) * (1.0 - erfcx(k.alpha() * t.sqrt()))
}

/// Standard normal conditioned on exceeding `a >= 0`.
fn positive_normal_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a < 0.5 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    // exponential proposal with the optimal rate
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a + rng.sample::<f64, _>(Exp1) / lambda;
        if rng.random::<f64>() < (-0.5 * (z - lambda) * (z - lambda)).exp() {
            return z;
        }
    }
}

/// Reflect a relative vector that ended inside the contact sphere.
pub fn push_outside(r: Vec3, sigma: f64) -> Vec3 {
    let n = geom::norm(r);
    if n >= sigma {
        return r;
    }
    if n == 0.0 {
        return [sigma, 0.0, 0.0];
    }
    geom::scale(r, (2.0 * sigma - n).max(sigma) / n)
}

/// Direction with density proportional to `exp(kappa mu . x)` on the unit sphere.
pub fn sample_von_mises_fisher<R: Rng + ?Sized>(mu: Vec3, kappa: f64, rng: &mut R) -> Vec3 {
    let u: f64 = rng.random();
    let w = if kappa < 1e-8 {
        2.0 * u - 1.0
    } else {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    };
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let (e1, e2) = geom::orthonormal_pair(mu);
    let s = (1.0 - w * w).max(0.0).sqrt();
    geom::add(
        geom::scale(mu, w),
        geom::add(geom::scale(e1, s * phi.cos()), geom::scale(e2, s * phi.sin())),
    )
}
