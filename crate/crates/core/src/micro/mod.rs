//! Particle-level solver.

pub mod kernel;
pub mod solver;

use rand::Rng;

use crate::geom::{self, Vec3};
use crate::model::{BoxDomain, Model, Placement, SpeciesId};
use crate::rng::unit_vector;

/// Product positions for a dissociation of a parent at `parent`: the pair
/// is separated by `separation` along a uniform random direction, with the
/// diffusion-weighted center at the parent position.
pub fn dissociation_positions<R: Rng + ?Sized>(
    domain: &BoxDomain,
    parent: Vec3,
    d1: f64,
    d2: f64,
    separation: f64,
    rng: &mut R,
) -> (Vec3, Vec3) {
    let dir = unit_vector(rng);
    let (w1, w2) = if d1 + d2 > 0.0 {
        (d1 / (d1 + d2), d2 / (d1 + d2))
    } else {
        (0.5, 0.5)
    };
    let p1 = geom::add(parent, geom::scale(dir, w1 * separation));
    let p2 = geom::sub(parent, geom::scale(dir, w2 * separation));
    (domain.reflect(p1), domain.reflect(p2))
}

/// Diffusion-weighted center `(D2 r1 + D1 r2)/(D1 + D2)`; stationary for an immobile partner.
pub fn reaction_center(r1: Vec3, r2: Vec3, d1: f64, d2: f64) -> Vec3 {
    let d = d1 + d2;
    if d <= 0.0 {
        return geom::scale(geom::add(r1, r2), 0.5);
    }
    geom::scale(geom::add(geom::scale(r1, d2), geom::scale(r2, d1)), 1.0 / d)
}

/// Initial particle positions for every species' `initial_count`. Uniformly
/// placed particles are redrawn until they do not overlap a reactive
/// partner already placed.
pub fn initial_particles<R: Rng + ?Sized>(model: &Model, domain: &BoxDomain, rng: &mut R) -> Vec<(SpeciesId, Vec3)> {
    let mut out: Vec<(SpeciesId, Vec3)> = Vec::new();
    for (s, spec) in model.species.iter().enumerate() {
        for _ in 0..spec.initial_count {
            let pos = match spec.initial_placement {
                Placement::FixedPoint(p) => p,
                Placement::Uniform => {
                    let mut tries = 0;
                    loop {
                        let p: Vec3 = std::array::from_fn(|k| {
                            domain.lower[k] + rng.random::<f64>() * (domain.upper[k] - domain.lower[k])
                        });
                        tries += 1;
                        let clash = out
                            .iter()
                            .any(|&(o, q)| model.reactive(s, o) && geom::dist(p, q) < model.sigma(s) + model.sigma(o));
                        if !clash || tries > 1000 {
                            break p;
                        }
                    }
                }
            };
            out.push((s, pos));
        }
    }
    out
}
