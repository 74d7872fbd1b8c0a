//! Operator-split coupling of the lattice and particle solvers.
//!
//! Each window of length `dt_split` starts with a synchronization in which
//! every particle is assigned a scale from its species policy and age. The
//! mesoscopic particles are then advanced over the window with the particle
//! set frozen, after which the particles are advanced with the lattice set
//! frozen except for particle-lattice reactions.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::geom::Vec3;
use crate::mesh::{CartesianMesh, VoxelId};
use crate::meso::{MesoParticle, NpmState};
use crate::micro::kernel::contact_survival;
use crate::micro::solver::{MesoReservoir, MicroParticle, MicroSolver};
use crate::model::{BoxDomain, Model, SpeciesId};
use crate::partition::SplitPlan;
use crate::rates::{g3, RateTable};
use crate::rng::uniform_in_cube;

/// Continuous position drawn uniformly in the particle's voxel.
pub fn switch_to_micro<R: Rng + ?Sized>(p: &MesoParticle, mesh: &CartesianMesh, rng: &mut R) -> MicroParticle {
    MicroParticle {
        id: p.id,
        species: p.species,
        position: uniform_in_cube(rng, mesh.voxel_lower(p.voxel), mesh.h),
        birth: p.birth,
    }
}

/// Voxel containing the particle's position.
pub fn switch_to_meso(p: &MicroParticle, mesh: &CartesianMesh) -> MesoParticle {
    MesoParticle {
        id: p.id,
        species: p.species,
        voxel: mesh.voxel_of(&p.position),
        birth: p.birth,
    }
}

/// Optimistic bound on the rebinding error left after a residency of
/// `t_m`: the contact survival at `t_m` times the resolution indicator.
/// The unobservable mesoscopic remainder is taken as zero.
pub fn estimate_e_hybrid(k_a: f64, d: f64, sigma: f64, h: f64, t_m: f64) -> f64 {
    if k_a <= 0.0 {
        return 0.0;
    }
    if !t_m.is_finite() {
        return 0.0;
    }
    contact_survival(k_a, d, sigma, t_m) * (k_a / d * g3(h, sigma)).abs()
}

/// Frozen lattice population exposed to the particle substep.
struct FrozenMeso {
    particles: Vec<MesoParticle>,
    alive: Vec<bool>,
    by_voxel: HashMap<(VoxelId, SpeciesId), Vec<usize>>,
    totals: Vec<u32>,
}

impl FrozenMeso {
    fn new(particles: Vec<MesoParticle>, n_species: usize) -> Self {
        let mut by_voxel: HashMap<(VoxelId, SpeciesId), Vec<usize>> = HashMap::new();
        let mut totals = vec![0; n_species];
        for (i, p) in particles.iter().enumerate() {
            by_voxel.entry((p.voxel, p.species)).or_default().push(i);
            totals[p.species] += 1;
        }
        Self {
            alive: vec![true; particles.len()],
            particles,
            by_voxel,
            totals,
        }
    }

    fn into_particles(self) -> Vec<MesoParticle> {
        self.particles
            .into_iter()
            .zip(self.alive)
            .filter_map(|(p, a)| a.then_some(p))
            .collect()
    }
}

impl MesoReservoir for FrozenMeso {
    fn count(&self, voxel: VoxelId, species: SpeciesId) -> u32 {
        self.by_voxel.get(&(voxel, species)).map_or(0, |v| v.len() as u32)
    }

    fn total(&self, species: SpeciesId) -> u32 {
        self.totals[species]
    }

    fn take(&mut self, voxel: VoxelId, species: SpeciesId, _time: f64) -> bool {
        match self.by_voxel.get_mut(&(voxel, species)).and_then(|v| v.pop()) {
            Some(i) => {
                self.alive[i] = false;
                self.totals[species] -= 1;
                true
            }
            None => false,
        }
    }
}

/// Wall-clock time spent in each phase of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTiming {
    pub meso: Duration,
    pub micro: Duration,
    pub switching: Duration,
    pub total: Duration,
}

impl std::ops::AddAssign for PhaseTiming {
    fn add_assign(&mut self, o: Self) {
        self.meso += o.meso;
        self.micro += o.micro;
        self.switching += o.switching;
        self.total += o.total;
    }
}

/// Scale census taken at a synchronization point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Census {
    pub time: f64,
    pub micro: usize,
    pub meso: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutput {
    /// `counts[k][s]`: population of species `s` at sample `k`.
    pub counts: Vec<Vec<u32>>,
    pub census: Vec<Census>,
    pub timing: PhaseTiming,
    /// Time of the first reaction, if any reaction fired.
    pub first_reaction: Option<f64>,
    /// Every sync-time age check passed.
    pub ages_respected: bool,
}

#[derive(Debug, Clone)]
pub struct HybridSetup<'a> {
    pub model: &'a Model,
    pub domain: BoxDomain,
    pub mesh: &'a CartesianMesh,
    pub rates: &'a RateTable,
    pub plan: &'a SplitPlan,
    pub dt_split: f64,
    pub t_final: f64,
    pub sample_times: &'a [f64],
    /// Stop at the end of the window in which the first reaction fired.
    pub stop_after_reaction: bool,
}

/// Run one trajectory from particles at continuous positions.
pub fn hybrid_run<R: Rng + ?Sized>(setup: &HybridSetup, initial: &[(SpeciesId, Vec3)], rng: &mut R) -> HybridOutput {
    let started = Instant::now();
    let model = setup.model;
    let mesh = setup.mesh;
    let n_species = model.n_species();
    let mut counts = vec![vec![0u32; n_species]; setup.sample_times.len()];
    let mut micro: Vec<MicroParticle> = initial
        .iter()
        .enumerate()
        .map(|(i, &(species, position))| MicroParticle {
            id: i as u64,
            species,
            position,
            birth: 0.0,
        })
        .collect();
    let mut meso: Vec<MesoParticle> = Vec::new();
    let mut next_id = micro.len() as u64;
    let mut timing = PhaseTiming::default();
    let mut census = Vec::new();
    let mut first_reaction: Option<f64> = None;
    let mut ages_respected = true;
    let mut t = 0.0;

    let mut window = 0usize;
    while t < setup.t_final {
        let t_next = (((window + 1) as f64) * setup.dt_split).min(setup.t_final);
        let last = t_next >= setup.t_final;

        // synchronization
        let clock = Instant::now();
        let mut keep_micro = Vec::with_capacity(micro.len());
        for p in micro.drain(..) {
            if setup.plan.policy(p.species).is_micro(t - p.birth) {
                keep_micro.push(p);
            } else {
                meso.push(switch_to_meso(&p, mesh));
            }
        }
        let mut keep_meso = Vec::with_capacity(meso.len());
        for p in meso.drain(..) {
            if setup.plan.policy(p.species).is_micro(t - p.birth) {
                keep_micro.push(switch_to_micro(&p, mesh, rng));
            } else {
                keep_meso.push(p);
            }
        }
        micro = keep_micro;
        meso = keep_meso;
        ages_respected &= meso.iter().all(|p| !setup.plan.policy(p.species).is_micro(t - p.birth));
        census.push(Census {
            time: t,
            micro: micro.len(),
            meso: meso.len(),
        });
        timing.switching += clock.elapsed();

        // samples owned by this window
        let lo = setup.sample_times.partition_point(|&s| s < t);
        let hi = if last {
            setup.sample_times.partition_point(|&s| s <= t_next)
        } else {
            setup.sample_times.partition_point(|&s| s < t_next)
        };
        let window_samples = &setup.sample_times[lo..hi];

        // lattice substep
        let clock = Instant::now();
        let mut meso_reacted = None;
        if !meso.is_empty() {
            let mut npm = NpmState::new(model, mesh, setup.rates, &meso, t, rng);
            npm.set_next_id(next_id);
            if setup.stop_after_reaction {
                let mut k = 0;
                while let Some(rec) = npm.step(t_next, rng) {
                    while k < window_samples.len() && window_samples[k] < rec.time {
                        add(&mut counts[lo + k], npm.counts());
                        k += 1;
                    }
                    if matches!(rec.event, crate::meso::MesoEvent::Reaction { .. }) {
                        meso_reacted = Some(rec.time);
                        break;
                    }
                }
                if meso_reacted.is_none() {
                    for c in &mut counts[lo + k..hi] {
                        add(c, npm.counts());
                    }
                }
            } else {
                npm.run(t_next, window_samples, rng, |k, c| add(&mut counts[lo + k], c));
            }
            next_id = next_id.max(npm.next_id());
            meso = npm.into_particles();
        } else {
            // empty lattice contributes zero counts
        }
        timing.meso += clock.elapsed();

        // particle substep
        let clock = Instant::now();
        let mut micro_reacted = None;
        if !micro.is_empty() {
            let mut frozen = FrozenMeso::new(std::mem::take(&mut meso), n_species);
            let mut solver =
                MicroSolver::new(model, setup.domain, std::mem::take(&mut micro), t).with_coupling(mesh, setup.rates);
            solver.set_next_id(next_id);
            solver.options.stop_after_reaction = setup.stop_after_reaction;
            solver.run(t_next, window_samples, &mut frozen, rng, |k, c| {
                add(&mut counts[lo + k], c)
            });
            micro_reacted = solver.reactions.first().map(|r| r.time);
            next_id = next_id.max(solver.next_id());
            micro = solver.particles;
            meso = frozen.into_particles();
        }
        timing.micro += clock.elapsed();

        if setup.stop_after_reaction {
            let hit = match (meso_reacted, micro_reacted) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            if hit.is_some() {
                first_reaction = hit;
                break;
            }
        }
        t = t_next;
        window += 1;
    }
    timing.total = started.elapsed();
    HybridOutput {
        counts,
        census,
        timing,
        first_reaction,
        ages_respected,
    }
}

fn add(acc: &mut [u32], c: &[u32]) {
    for (a, b) in acc.iter_mut().zip(c) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn switching_round_trip() {
        let mesh = CartesianMesh::cube(1.0, 10);
        let mut rng = replica_rng(1, 0);
        let corner = mesh.index([9, 9, 9]);
        let p = MesoParticle {
            id: 42,
            species: 1,
            voxel: corner,
            birth: 0.3,
        };
        for _ in 0..1000 {
            let q = switch_to_micro(&p, &mesh, &mut rng);
            assert!(mesh.domain.contains(&q.position));
            assert_eq!((q.id, q.birth), (42, 0.3));
            assert_eq!(switch_to_meso(&q, &mesh), p);
        }
        let center = MicroParticle {
            id: 0,
            species: 0,
            position: mesh.voxel_center(17),
            birth: 0.0,
        };
        assert_eq!(switch_to_meso(&center, &mesh).voxel, 17);
        let face = MicroParticle {
            position: [0.1, 0.05, 0.05],
            ..center
        };
        assert_eq!(mesh.coords(switch_to_meso(&face, &mesh).voxel), [1, 0, 0]);
    }

    #[test]
    fn error_estimate_limits() {
        assert_eq!(estimate_e_hybrid(0.0, 2.0, 0.005, 0.05, 1e-3), 0.0);
        assert_eq!(estimate_e_hybrid(1.0, 2.0, 0.005, 0.05, f64::INFINITY), 0.0);
        let a = estimate_e_hybrid(1.0, 2.0, 0.005, 0.05, 1e-6);
        let b = estimate_e_hybrid(1.0, 2.0, 0.005, 0.05, 1e3);
        assert!(a.is_finite() && a > b && b >= 0.0);
    }
}
