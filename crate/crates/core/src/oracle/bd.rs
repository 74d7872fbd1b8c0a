//! Brute-force Brownian dynamics reference simulator.
//!
//! Every particle takes Gaussian increments on a common time step. A
//! reactive pair that ends a step closer than its contact distance reacts
//! with probability `k_a sqrt(pi dt / D) / (4 pi sigma^2)` and is otherwise
//! reflected radially. The step adapts to the closest reactive gap but
//! never drops below the contact step `dt_bd`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::micro::{dissociation_positions, initial_particles, reaction_center};
use crate::model::{BoxDomain, Model, ReactionId, ReactionKind, SpeciesId};
use crate::rng::{exp_time, normal3};

/// Reaction probability for a pair found overlapping after a step of length `dt`.
pub fn contact_acceptance(k_a: f64, sigma: f64, d: f64, dt: f64) -> f64 {
    (k_a * (PI * dt / d).sqrt() / (4.0 * PI * sigma * sigma)).min(1.0)
}

/// Largest contact step for which the per-step RMS displacement stays
/// below `sigma/5` and the contact acceptance below one quarter.
pub fn default_contact_step(model: &Model) -> f64 {
    let mut dt = f64::INFINITY;
    for kind in &model.kinds {
        if let ReactionKind::Bi { a, b, k_a, .. } = *kind {
            let sigma = model.sigma(a) + model.sigma(b);
            let d = model.diffusion(a) + model.diffusion(b);
            dt = dt.min(sigma * sigma / (150.0 * d));
            if k_a > 0.0 {
                let root = 0.25 * 4.0 * PI * sigma * sigma / k_a;
                dt = dt.min(root * root * d / PI);
            }
        }
    }
    dt
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdOptions {
    /// Step used when reactive particles are in or near contact.
    pub dt_bd: f64,
    /// Upper bound on any step.
    pub dt_max: f64,
}

impl BdOptions {
    pub fn for_model(model: &Model) -> Self {
        let dt_max = 1e-3;
        Self {
            dt_bd: default_contact_step(model).min(dt_max),
            dt_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionEvent {
    pub time: f64,
    pub reaction: ReactionId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdOutput {
    /// `counts[k][s]`: population of species `s` at the `k`-th sample time.
    pub counts: Vec<Vec<u32>>,
    pub events: Vec<ReactionEvent>,
    /// Species and position of every particle at the end of the run.
    pub final_particles: Vec<(SpeciesId, Vec3)>,
}

#[derive(Debug, Clone)]
struct Particle {
    species: SpeciesId,
    pos: Vec3,
    clock: f64,
}

fn new_particle<R: Rng + ?Sized>(model: &Model, species: SpeciesId, pos: Vec3, now: f64, rng: &mut R) -> Particle {
    Particle {
        species,
        pos,
        clock: now + exp_time(rng, model.unimolecular_rate(species)),
    }
}

/// Spawn `products` at `center` (one product) or around it (two products).
fn spawn<R: Rng + ?Sized>(
    model: &Model,
    domain: &BoxDomain,
    products: &[SpeciesId],
    center: Vec3,
    now: f64,
    out: &mut Vec<Particle>,
    rng: &mut R,
) {
    match products {
        [] => {}
        [p] => out.push(new_particle(model, *p, center, now, rng)),
        [p, q] => {
            let (a, b) = dissociation_positions(
                domain,
                center,
                model.diffusion(*p),
                model.diffusion(*q),
                model.sigma(*p) + model.sigma(*q),
                rng,
            );
            out.push(new_particle(model, *p, a, now, rng));
            out.push(new_particle(model, *q, b, now, rng));
        }
        _ => unreachable!("validated models have at most two products"),
    }
}

fn census(model: &Model, particles: &[Particle]) -> Vec<u32> {
    let mut c = vec![0u32; model.n_species()];
    for p in particles {
        c[p.species] += 1;
    }
    c
}

/// Simulate the full system from its initial condition up to the last sample time.
pub fn bd_simulate<R: Rng + ?Sized>(
    model: &Model,
    domain: &BoxDomain,
    sample_times: &[f64],
    opts: &BdOptions,
    rng: &mut R,
) -> Result<BdOutput> {
    let initial = initial_particles(model, domain, rng);
    bd_simulate_from(model, domain, initial, sample_times, opts, rng)
}

/// [`bd_simulate`] from given initial positions.
pub fn bd_simulate_from<R: Rng + ?Sized>(
    model: &Model,
    domain: &BoxDomain,
    initial: Vec<(SpeciesId, Vec3)>,
    sample_times: &[f64],
    opts: &BdOptions,
    rng: &mut R,
) -> Result<BdOutput> {
    if !(opts.dt_bd > 0.0) || !(opts.dt_max >= opts.dt_bd) {
        return Err(Error::InvalidParam(format!(
            "need 0 < dt_bd <= dt_max (dt_bd={}, dt_max={})",
            opts.dt_bd, opts.dt_max
        )));
    }
    let mut particles: Vec<Particle> = initial
        .into_iter()
        .map(|(s, p)| new_particle(model, s, p, 0.0, rng))
        .collect();
    let t_end = sample_times.last().copied().unwrap_or(0.0);
    let mut out = BdOutput {
        counts: Vec::with_capacity(sample_times.len()),
        events: Vec::new(),
        final_particles: Vec::new(),
    };
    let mut next_sample = 0;
    let mut t = 0.0;

    let bimolecular: Vec<bool> = (0..model.n_species())
        .map(|a| (0..model.n_species()).any(|b| model.reactive(a, b)))
        .collect();
    loop {
        while next_sample < sample_times.len() && sample_times[next_sample] <= t {
            out.counts.push(census(model, &particles));
            next_sample += 1;
        }
        if next_sample == sample_times.len() || t >= t_end {
            break;
        }

        // adaptive step
        let mut dt = opts.dt_max.min(sample_times[next_sample] - t);
        for p in &particles {
            dt = dt.min(p.clock - t);
        }
        let active: Vec<usize> = (0..particles.len())
            .filter(|&i| bimolecular[particles[i].species])
            .collect();
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let (a, b) = (particles[i].species, particles[j].species);
                if !model.reactive(a, b) {
                    continue;
                }
                let d = model.diffusion(a) + model.diffusion(b);
                let gap = geom::dist(particles[i].pos, particles[j].pos) - model.sigma(a) - model.sigma(b);
                let safe = (gap.max(0.0) / 5.0).powi(2) / (2.0 * d);
                dt = dt.min(safe.max(opts.dt_bd));
            }
        }
        let dt = dt.max(0.0);

        for p in particles.iter_mut() {
            let dcoef = model.diffusion(p.species);
            if dcoef > 0.0 && dt > 0.0 {
                let step = geom::scale(normal3(rng), (2.0 * dcoef * dt).sqrt());
                p.pos = domain.reflect(geom::add(p.pos, step));
            }
        }
        t += dt;

        // bimolecular contacts
        let mut consumed = vec![false; particles.len()];
        let mut born = Vec::new();
        for (x, &i) in active.iter().enumerate() {
            if consumed[i] {
                continue;
            }
            for &j in &active[x + 1..] {
                if consumed[j] || consumed[i] {
                    continue;
                }
                let (a, b) = (particles[i].species, particles[j].species);
                let channels = model.channels(a, b);
                if channels.is_empty() {
                    continue;
                }
                let sigma = model.sigma(a) + model.sigma(b);
                let rel = geom::sub(particles[i].pos, particles[j].pos);
                let dist = geom::norm(rel);
                if dist >= sigma {
                    continue;
                }
                let (da, db) = (model.diffusion(a), model.diffusion(b));
                let d = da + db;
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut fired = None;
                for &rid in channels {
                    acc += contact_acceptance(model.kinds[rid].rate(), sigma, d, dt);
                    if u < acc {
                        fired = Some(rid);
                        break;
                    }
                }
                if let Some(rid) = fired {
                    consumed[i] = true;
                    consumed[j] = true;
                    let center = reaction_center(particles[i].pos, particles[j].pos, da, db);
                    spawn(model, domain, model.products(rid), center, t, &mut born, rng);
                    out.events.push(ReactionEvent { time: t, reaction: rid });
                } else {
                    // reflect the separation radially to 2 sigma - |r|
                    let target = (2.0 * sigma - dist).max(sigma);
                    let dir = if dist > 0.0 {
                        geom::scale(rel, 1.0 / dist)
                    } else {
                        [1.0, 0.0, 0.0]
                    };
                    let delta = geom::scale(dir, target - dist);
                    particles[i].pos = domain.reflect(geom::add(particles[i].pos, geom::scale(delta, da / d)));
                    particles[j].pos = domain.reflect(geom::sub(particles[j].pos, geom::scale(delta, db / d)));
                }
            }
        }

        // unimolecular clocks
        for i in 0..particles.len() {
            if consumed[i] || particles[i].clock > t {
                continue;
            }
            let s = particles[i].species;
            let total = model.unimolecular_rate(s);
            let mut u = rng.random::<f64>() * total;
            let mut chosen = model.unimolecular(s)[0];
            for &rid in model.unimolecular(s) {
                let k = model.kinds[rid].rate();
                if u < k {
                    chosen = rid;
                    break;
                }
                u -= k;
            }
            consumed[i] = true;
            spawn(
                model,
                domain,
                model.products(chosen),
                particles[i].pos,
                t,
                &mut born,
                rng,
            );
            out.events.push(ReactionEvent {
                time: t,
                reaction: chosen,
            });
        }

        let mut k = 0;
        particles.retain(|_| {
            k += 1;
            !consumed[k - 1]
        });
        particles.extend(born);
    }
    while out.counts.len() < sample_times.len() {
        out.counts.push(census(model, &particles));
    }
    out.final_particles = particles.iter().map(|p| (p.species, p.pos)).collect();
    Ok(out)
}

/// Reaction times of an isolated pair started at separation `r0`, simulated
/// in the relative coordinate only. Entries are `None` when the pair has
/// not reacted by `t_end`.
pub fn bd_pair_reaction_times<R: Rng + ?Sized>(
    sigma: f64,
    d: f64,
    k_a: f64,
    r0: f64,
    t_end: f64,
    dt_bd: f64,
    n: usize,
    rng: &mut R,
) -> Vec<Option<f64>> {
    let dt_max = t_end / 50.0;
    (0..n)
        .map(|_| {
            let mut r = [r0, 0.0, 0.0];
            let mut t = 0.0;
            while t < t_end {
                let gap = geom::norm(r) - sigma;
                let dt = ((gap / 5.0).powi(2) / (2.0 * d)).max(dt_bd).min(dt_max).min(t_end - t);
                r = geom::add(r, geom::scale(normal3(rng), (2.0 * d * dt).sqrt()));
                t += dt;
                let dist = geom::norm(r);
                if dist < sigma {
                    if rng.random::<f64>() < contact_acceptance(k_a, sigma, d, dt) {
                        return Some(t);
                    }
                    r = geom::scale(r, (2.0 * sigma - dist).max(sigma) / dist.max(1e-300));
                }
            }
            None
        })
        .collect()
}

/// Empirical survival curve from [`bd_pair_reaction_times`].
pub fn bd_pair_survival<R: Rng + ?Sized>(
    sigma: f64,
    d: f64,
    k_a: f64,
    r0: f64,
    times: &[f64],
    dt_bd: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let t_end = times.last().copied().unwrap_or(0.0);
    let samples = bd_pair_reaction_times(sigma, d, k_a, r0, t_end, dt_bd, n, rng);
    times
        .iter()
        .map(|&t| samples.iter().filter(|s| s.is_none_or(|x| x > t)).count() as f64 / n as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Reaction, ReactionNetwork, SpeciesSpec};
    use crate::rng::replica_rng;

    #[test]
    fn acceptance_scales_with_root_dt() {
        let a = contact_acceptance(0.1, 0.005, 2.0, 1e-8);
        let b = contact_acceptance(0.1, 0.005, 2.0, 4e-8);
        assert!((b / a - 2.0).abs() < 1e-12);
        assert_eq!(contact_acceptance(1e9, 0.005, 2.0, 1.0), 1.0);
    }

    #[test]
    fn free_diffusion_msd() {
        let network = ReactionNetwork {
            species: vec![SpeciesSpec::new("A", 1.0, 0.001).with_count(1).fixed_at([0.5; 3])],
            reactions: vec![],
        };
        let model = Model::compile(&network).unwrap();
        let domain = BoxDomain::cube(1.0);
        let opts = BdOptions {
            dt_bd: 2.5e-4,
            dt_max: 2.5e-4,
        };
        let mut rng = replica_rng(4, 0);
        let t = 1e-3;
        let n = 100_000;
        let mut msd = 0.0;
        for _ in 0..n {
            let out = bd_simulate(&model, &domain, &[t], &opts, &mut rng).unwrap();
            let p = out.final_particles[0].1;
            msd += geom::dot(geom::sub(p, [0.5; 3]), geom::sub(p, [0.5; 3]));
        }
        msd /= n as f64;
        assert!((msd / (6.0 * t) - 1.0).abs() < 0.01, "msd {msd}");
    }

    #[test]
    fn dissociation_chain_conserves_mass() {
        let network = ReactionNetwork {
            species: vec![
                SpeciesSpec::new("S1", 1.0, 0.0025).with_count(10),
                SpeciesSpec::new("S11", 1.0, 0.0025),
                SpeciesSpec::new("S12", 1.0, 0.0025),
                SpeciesSpec::new("S2", 1.0, 0.0025),
            ],
            reactions: vec![
                Reaction::uni("S1", &["S11", "S12"], 10.0),
                Reaction::bi("S11", "S12", &["S2"], 0.1),
            ],
        };
        let model = Model::compile(&network).unwrap();
        let domain = BoxDomain::cube(1.0);
        let mut rng = replica_rng(8, 0);
        let opts = BdOptions::for_model(&model);
        let times: Vec<f64> = (1..=5).map(|i| i as f64 * 0.05).collect();
        let out = bd_simulate(&model, &domain, &times, &opts, &mut rng).unwrap();
        for c in &out.counts {
            // S1 + S2 + (S11 + S12)/2 is invariant
            assert_eq!(2 * (c[0] + c[3]) + c[1] + c[2], 20);
            assert_eq!(c[1], c[2]);
        }
    }
}
