//! Windowed particle solver: the population is decomposed into singles and
//! pairs of mutual nearest reactive neighbours, each propagated
//! independently over a common protective step.

use rand::Rng;

use crate::geom::{self, Vec3};
use crate::mesh::{CartesianMesh, VoxelId};
use crate::micro::kernel::PairKernel;
use crate::micro::{dissociation_positions, reaction_center};
use crate::model::{BoxDomain, Model, ReactionId, ReactionKind, SpeciesId};
use crate::oracle::bd::contact_acceptance;
use crate::rates::RateTable;
use crate::rng::{exp_time, normal3};

/// Standard-normal quantile for a per-step escape probability of 1e-3.
pub const PROTECT_QUANTILE: f64 = 3.090_232_306_167_813;

/// Pairs farther apart than this multiple of the contact radius are moved
/// with plain Brownian steps.
pub const DEFAULT_CUTOFF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroParticle {
    pub id: u64,
    pub species: SpeciesId,
    pub position: Vec3,
    pub birth: f64,
}

impl MicroParticle {
    pub fn voxel(&self, mesh: &CartesianMesh) -> VoxelId {
        mesh.voxel_of(&self.position)
    }
}

/// Frozen mesoscopic population seen by particles during a micro substep.
pub trait MesoReservoir {
    fn count(&self, voxel: VoxelId, species: SpeciesId) -> u32;
    fn total(&self, species: SpeciesId) -> u32;
    /// Remove one particle of `species` from `voxel`; false if none is left.
    fn take(&mut self, voxel: VoxelId, species: SpeciesId, time: f64) -> bool;
}

/// Reservoir with no particles.
pub struct NoMeso;

impl MesoReservoir for NoMeso {
    fn count(&self, _: VoxelId, _: SpeciesId) -> u32 {
        0
    }
    fn total(&self, _: SpeciesId) -> u32 {
        0
    }
    fn take(&mut self, _: VoxelId, _: SpeciesId, _: f64) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Members {
    Single(usize),
    Pair(usize, usize),
}

/// One independently propagated group and its protective step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDomain {
    pub members: Members,
    pub dt: f64,
}

/// Step over which a particle with diffusion `d` crosses half of `gap`
/// with probability below 1e-3.
pub fn protective_step(gap: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return f64::INFINITY;
    }
    let half = 0.5 * gap.max(0.0);
    half * half / (2.0 * d * PROTECT_QUANTILE * PROTECT_QUANTILE)
}

fn contact_radius(model: &Model, a: SpeciesId, b: SpeciesId) -> f64 {
    model.sigma(a) + model.sigma(b)
}

fn gap(model: &Model, p: &MicroParticle, q: &MicroParticle) -> f64 {
    geom::dist(p.position, q.position) - contact_radius(model, p.species, q.species)
}

fn pairable(model: &Model, p: &MicroParticle, q: &MicroParticle) -> bool {
    model.reactive(p.species, q.species) && model.diffusion(p.species) + model.diffusion(q.species) > 0.0
}

/// Split particles into pairs of mutual nearest reactive neighbours and
/// singles, each with a protective step no longer than `window`.
pub fn decompose(model: &Model, particles: &[MicroParticle], window: f64) -> Vec<PairDomain> {
    let n = particles.len();
    let bimolecular = model.bimolecular_species();
    let active: Vec<usize> = (0..n)
        .filter(|&i| bimolecular.contains(&particles[i].species))
        .collect();
    let mut nearest: Vec<Option<usize>> = vec![None; n];
    for &i in &active {
        let mut best = f64::INFINITY;
        for &j in &active {
            if i != j && pairable(model, &particles[i], &particles[j]) {
                let g = gap(model, &particles[i], &particles[j]);
                if g < best {
                    best = g;
                    nearest[i] = Some(j);
                }
            }
        }
    }
    let step_of = |i: usize, partner: Option<usize>| {
        let p = &particles[i];
        let ext = active
            .iter()
            .filter(|&&k| k != i && Some(k) != partner && model.reactive(p.species, particles[k].species))
            .map(|&k| gap(model, p, &particles[k]))
            .fold(f64::INFINITY, f64::min);
        protective_step(ext, model.diffusion(p.species))
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        match nearest[i] {
            Some(j) if nearest[j] == Some(i) => {
                if i < j {
                    let dt = step_of(i, Some(j)).min(step_of(j, Some(i))).min(window);
                    out.push(PairDomain {
                        members: Members::Pair(i, j),
                        dt,
                    });
                }
            }
            Some(_) => out.push(PairDomain {
                members: Members::Single(i),
                dt: step_of(i, None).min(window),
            }),
            None => out.push(PairDomain {
                members: Members::Single(i),
                dt: if active.contains(&i) {
                    step_of(i, None).min(window)
                } else {
                    window
                },
            }),
        }
    }
    out
}

#[derive(Debug, Clone)]
struct PairChannels {
    kernel: PairKernel,
    channels: Vec<(ReactionId, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroOptions {
    /// Brownian fallback beyond `cutoff * sigma`.
    pub cutoff: f64,
    /// Lower bound on the global step.
    pub min_step: f64,
    /// Upper bound on the global step.
    pub max_step: f64,
    /// Return as soon as any reaction has fired.
    pub stop_after_reaction: bool,
}

impl MicroOptions {
    pub fn for_model(model: &Model, domain: &BoxDomain) -> Self {
        let d_max = model.species.iter().map(|s| s.diffusion).fold(0.0, f64::max);
        let side = domain.extent().into_iter().fold(f64::INFINITY, f64::min);
        let mut min_step = f64::INFINITY;
        for kind in &model.kinds {
            if let ReactionKind::Bi { a, b, .. } = *kind {
                let d = model.diffusion(a) + model.diffusion(b);
                if d > 0.0 {
                    let s = contact_radius(model, a, b);
                    min_step = min_step.min(s * s / (150.0 * d));
                }
            }
        }
        Self {
            cutoff: DEFAULT_CUTOFF,
            min_step: if min_step.is_finite() { min_step } else { 0.0 },
            max_step: if d_max > 0.0 {
                side * side / (2.0 * d_max)
            } else {
                f64::INFINITY
            },
            stop_after_reaction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionRecord {
    pub time: f64,
    pub reaction: ReactionId,
}

enum Hazard {
    Uni(ReactionId),
    WithMeso(ReactionId, SpeciesId, VoxelId),
}

/// Particle solver state.
#[derive(Debug, Clone)]
pub struct MicroSolver<'a> {
    model: &'a Model,
    domain: BoxDomain,
    coupling: Option<(&'a CartesianMesh, &'a RateTable)>,
    pair_table: Vec<Option<PairChannels>>,
    pub particles: Vec<MicroParticle>,
    pub options: MicroOptions,
    pub reactions: Vec<ReactionRecord>,
    pub steps: u64,
    time: f64,
    next_id: u64,
}

impl<'a> MicroSolver<'a> {
    pub fn new(model: &'a Model, domain: BoxDomain, particles: Vec<MicroParticle>, t0: f64) -> Self {
        let n = model.n_species();
        let mut pair_table = vec![None; n * n];
        for a in 0..n {
            for b in 0..n {
                let channels: Vec<(ReactionId, f64)> = model
                    .channels(a, b)
                    .iter()
                    .map(|&r| (r, model.kinds[r].rate()))
                    .collect();
                let d = model.diffusion(a) + model.diffusion(b);
                if channels.is_empty() || d <= 0.0 {
                    continue;
                }
                let k_total = channels.iter().map(|c| c.1).sum();
                pair_table[a * n + b] = Some(PairChannels {
                    kernel: PairKernel::new(contact_radius(model, a, b), d, k_total),
                    channels,
                });
            }
        }
        let next_id = particles.iter().map(|p| p.id + 1).max().unwrap_or(0);
        Self {
            model,
            domain,
            coupling: None,
            pair_table,
            particles,
            options: MicroOptions::for_model(model, &domain),
            reactions: Vec::new(),
            steps: 0,
            time: t0,
            next_id,
        }
    }

    /// Enable reactions with a frozen mesoscopic population on `mesh`.
    pub fn with_coupling(mut self, mesh: &'a CartesianMesh, rates: &'a RateTable) -> Self {
        self.coupling = Some((mesh, rates));
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn set_next_id(&mut self, id: u64) {
        self.next_id = self.next_id.max(id);
    }

    pub fn counts(&self) -> Vec<u32> {
        let mut c = vec![0; self.model.n_species()];
        for p in &self.particles {
            c[p.species] += 1;
        }
        c
    }

    fn channels(&self, a: SpeciesId, b: SpeciesId) -> Option<&PairChannels> {
        self.pair_table[a * self.model.n_species() + b].as_ref()
    }

    fn fresh(&mut self, species: SpeciesId, position: Vec3, birth: f64) -> MicroParticle {
        self.next_id += 1;
        MicroParticle {
            id: self.next_id - 1,
            species,
            position,
            birth,
        }
    }

    /// Run to `t_end`, reporting counts at each sample time in
    /// `[current time, t_end]`.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        sample_times: &[f64],
        meso: &mut dyn MesoReservoir,
        rng: &mut R,
        mut on_sample: impl FnMut(usize, &[u32]),
    ) {
        let mut k = sample_times.partition_point(|&s| s < self.time);
        loop {
            while k < sample_times.len() && sample_times[k] <= self.time && sample_times[k] <= t_end {
                on_sample(k, &self.counts());
                k += 1;
            }
            if self.time >= t_end || (self.options.stop_after_reaction && !self.reactions.is_empty()) {
                return;
            }
            let stop = match sample_times.get(k) {
                Some(&s) if s < t_end => s,
                _ => t_end,
            };
            self.step(stop - self.time, meso, rng);
            if stop - self.time < 1e-12 * stop.abs().max(1.0) {
                self.time = stop;
            }
        }
    }

    fn micro_meso_hazards(&self, meso: &dyn MesoReservoir) -> Vec<(usize, Hazard, f64)> {
        let mut out = Vec::new();
        for (i, p) in self.particles.iter().enumerate() {
            for &rid in self.model.unimolecular(p.species) {
                out.push((i, Hazard::Uni(rid), self.model.kinds[rid].rate()));
            }
        }
        if let Some((mesh, rates)) = self.coupling {
            let n = self.model.n_species();
            let present: Vec<SpeciesId> = (0..n).filter(|&s| meso.total(s) > 0).collect();
            if present.is_empty() {
                return out;
            }
            for (i, p) in self.particles.iter().enumerate() {
                let v = p.voxel(mesh);
                for &s in &present {
                    let c = meso.count(v, s);
                    if c == 0 {
                        continue;
                    }
                    for &rid in self.model.channels(p.species, s) {
                        out.push((i, Hazard::WithMeso(rid, s, v), rates.k_meso(rid) * c as f64));
                    }
                }
            }
        }
        out
    }

    /// Longest step over which the meso partner counts seen by each
    /// particle may be treated as constant.
    fn coupling_cap(&self, meso: &dyn MesoReservoir) -> f64 {
        let Some((mesh, _)) = self.coupling else {
            return f64::INFINITY;
        };
        let n = self.model.n_species();
        let present: Vec<SpeciesId> = (0..n).filter(|&s| meso.total(s) > 0).collect();
        let mut cap = f64::INFINITY;
        for p in &self.particles {
            let d = self.model.diffusion(p.species);
            if d > 0.0 && present.iter().any(|&s| self.model.reactive(p.species, s)) {
                cap = cap.min(0.25 * mesh.h * mesh.h / (2.0 * d));
            }
        }
        cap
    }

    /// Advance by at most `max_dt`.
    pub fn step<R: Rng + ?Sized>(&mut self, max_dt: f64, meso: &mut dyn MesoReservoir, rng: &mut R) {
        if max_dt <= 0.0 {
            return;
        }
        self.steps += 1;
        let domains = decompose(self.model, &self.particles, max_dt);
        let mut dt = domains.iter().map(|d| d.dt).fold(max_dt, f64::min);
        dt = dt
            .max(self.options.min_step)
            .min(self.coupling_cap(meso))
            .min(self.options.max_step)
            .min(max_dt);

        let hazards = self.micro_meso_hazards(meso);
        let total: f64 = hazards.iter().map(|h| h.2).sum();
        let mut fire = None;
        let t_fire = exp_time(rng, total);
        if t_fire < dt {
            dt = t_fire;
            let mut u = rng.random::<f64>() * total;
            for (k, h) in hazards.iter().enumerate() {
                if u < h.2 || k + 1 == hazards.len() {
                    fire = Some(k);
                    break;
                }
                u -= h.2;
            }
        }

        let t0 = self.time;
        let mut removed = vec![false; self.particles.len()];
        let mut born: Vec<MicroParticle> = Vec::new();
        for dom in &domains {
            match dom.members {
                Members::Single(i) => {
                    let p = &mut self.particles[i];
                    p.position = free_step(&self.domain, p.position, self.model.diffusion(p.species), dt, rng);
                }
                Members::Pair(i, j) => {
                    if let Some((t_r, rid, center)) = self.propagate_pair(i, j, dt, rng) {
                        removed[i] = true;
                        removed[j] = true;
                        self.reactions.push(ReactionRecord {
                            time: t0 + t_r,
                            reaction: rid,
                        });
                        let products = self.place_products(rid, center, t0 + t_r, dt - t_r, rng);
                        born.extend(products);
                    }
                }
            }
        }
        self.time = t0 + dt;

        if let Some(k) = fire {
            let (i, ref hazard, _) = hazards[k];
            if !removed[i] {
                let parent = self.particles[i];
                match *hazard {
                    Hazard::Uni(rid) => {
                        removed[i] = true;
                        self.reactions.push(ReactionRecord {
                            time: self.time,
                            reaction: rid,
                        });
                        born.extend(self.place_products(rid, parent.position, self.time, 0.0, rng));
                    }
                    Hazard::WithMeso(rid, partner, voxel) => {
                        if meso.take(voxel, partner, self.time) {
                            removed[i] = true;
                            self.reactions.push(ReactionRecord {
                                time: self.time,
                                reaction: rid,
                            });
                            born.extend(self.place_products(rid, parent.position, self.time, 0.0, rng));
                        }
                    }
                }
            }
        }

        let mut k = 0;
        self.particles.retain(|_| {
            k += 1;
            !removed[k - 1]
        });
        self.particles.extend(born);
        self.separate_overlaps();
    }

    /// Move a pair over `dt`; returns the reaction time, channel and
    /// reaction position if the pair reacted.
    fn propagate_pair<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        j: usize,
        dt: f64,
        rng: &mut R,
    ) -> Option<(f64, ReactionId, Vec3)> {
        let (pi, pj) = (self.particles[i], self.particles[j]);
        let (d1, d2) = (self.model.diffusion(pi.species), self.model.diffusion(pj.species));
        let chans = self.channels(pi.species, pj.species)?.clone();
        let kernel = chans.kernel;
        let d = d1 + d2;
        let d_center = d1 * d2 / d;
        let sigma = kernel.sigma;
        let analytic_span = (self.options.cutoff * sigma).powi(2) / d;
        let (mut xi, mut xj) = (pi.position, pj.position);
        let mut elapsed = 0.0;
        let mut reacted: Option<(f64, Vec3)> = None;

        while elapsed < dt {
            let remaining = dt - elapsed;
            let rel = geom::sub(xj, xi);
            let r0 = geom::norm(rel);
            if r0 > self.options.cutoff * sigma {
                // Brownian fallback in lab coordinates
                let gap = r0 - sigma;
                let sub = (gap * gap / (50.0 * d)).min(remaining);
                let ni = free_step(&self.domain, xi, d1, sub, rng);
                let nj = free_step(&self.domain, xj, d2, sub, rng);
                elapsed += sub;
                let rel = geom::sub(nj, ni);
                let r = geom::norm(rel);
                if r < sigma {
                    let center = reaction_center(ni, nj, d1, d2);
                    if rng.random::<f64>() < contact_acceptance(kernel.k_a, sigma, d, sub) {
                        reacted = Some((elapsed, center));
                        break;
                    }
                    let rel = geom::scale(rel, (2.0 * sigma - r) / r);
                    xi = self.domain.reflect(geom::sub(center, geom::scale(rel, d1 / d)));
                    xj = self.domain.reflect(geom::add(center, geom::scale(rel, d2 / d)));
                } else {
                    (xi, xj) = (ni, nj);
                }
            } else {
                let sub = remaining.min(analytic_span);
                let center = reaction_center(xi, xj, d1, d2);
                if let Some(t_r) = kernel.sample_reaction_time(r0, sub, rng) {
                    let center = geom::add(center, geom::scale(normal3(rng), (2.0 * d_center * t_r).sqrt()));
                    reacted = Some((elapsed + t_r, self.domain.reflect(center)));
                    break;
                }
                let rel = kernel.propagate_relative(rel, sub, rng);
                let center = geom::add(center, geom::scale(normal3(rng), (2.0 * d_center * sub).sqrt()));
                xi = self.domain.reflect(geom::sub(center, geom::scale(rel, d1 / d)));
                xj = self.domain.reflect(geom::add(center, geom::scale(rel, d2 / d)));
                elapsed += sub;
            }
        }

        if let Some((t_r, center)) = reacted {
            let rid = pick_channel(&chans.channels, rng);
            return Some((t_r, rid, center));
        }
        self.particles[i].position = xi;
        self.particles[j].position = xj;
        None
    }

    /// Products of `rid` created at `at`, then moved freely for `remaining`.
    fn place_products<R: Rng + ?Sized>(
        &mut self,
        rid: ReactionId,
        at: Vec3,
        birth: f64,
        remaining: f64,
        rng: &mut R,
    ) -> Vec<MicroParticle> {
        let products = self.model.products(rid).to_vec();
        let positions: Vec<Vec3> = match products.as_slice() {
            [] => vec![],
            [_] => vec![at],
            [a, b] => {
                let (pa, pb) = dissociation_positions(
                    &self.domain,
                    at,
                    self.model.diffusion(*a),
                    self.model.diffusion(*b),
                    contact_radius(self.model, *a, *b),
                    rng,
                );
                vec![pa, pb]
            }
            _ => products.iter().map(|_| at).collect(),
        };
        products
            .iter()
            .zip(positions)
            .map(|(&s, pos)| {
                let pos = free_step(&self.domain, pos, self.model.diffusion(s), remaining, rng);
                self.fresh(s, pos, birth)
            })
            .collect()
    }

    /// Push apart reactive particles found inside each other's contact radius.
    fn separate_overlaps(&mut self) {
        let bimolecular = self.model.bimolecular_species();
        let active: Vec<usize> = (0..self.particles.len())
            .filter(|&i| bimolecular.contains(&self.particles[i].species))
            .collect();
        for _ in 0..100 {
            let mut clean = true;
            for (x, &i) in active.iter().enumerate() {
                for &j in &active[x + 1..] {
                    let (a, b) = (self.particles[i], self.particles[j]);
                    if !self.model.reactive(a.species, b.species) {
                        continue;
                    }
                    let sigma = contact_radius(self.model, a.species, b.species);
                    let rel = geom::sub(b.position, a.position);
                    let r = geom::norm(rel);
                    if r >= sigma {
                        continue;
                    }
                    clean = false;
                    let dir = if r > 0.0 {
                        geom::scale(rel, 1.0 / r)
                    } else {
                        [1.0, 0.0, 0.0]
                    };
                    let (d1, d2) = (self.model.diffusion(a.species), self.model.diffusion(b.species));
                    let (w1, w2) = if d1 + d2 > 0.0 {
                        (d1 / (d1 + d2), d2 / (d1 + d2))
                    } else {
                        (0.5, 0.5)
                    };
                    let push = (sigma - r) * (1.0 + 1e-9) + 1e-15;
                    self.particles[i].position =
                        self.domain.reflect(geom::sub(a.position, geom::scale(dir, w1 * push)));
                    self.particles[j].position =
                        self.domain.reflect(geom::add(b.position, geom::scale(dir, w2 * push)));
                }
            }
            if clean {
                return;
            }
        }
    }
}

fn pick_channel<R: Rng + ?Sized>(channels: &[(ReactionId, f64)], rng: &mut R) -> ReactionId {
    let total: f64 = channels.iter().map(|c| c.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(rid, k) in channels {
        if u < k {
            return rid;
        }
        u -= k;
    }
    channels.last().expect("reactive pair has a channel").0
}

/// Gaussian displacement with diffusion `d` over `dt`, reflected into the box.
pub fn free_step<R: Rng + ?Sized>(domain: &BoxDomain, p: Vec3, d: f64, dt: f64, rng: &mut R) -> Vec3 {
    if d <= 0.0 || dt <= 0.0 {
        return p;
    }
    domain.reflect(geom::add(p, geom::scale(normal3(rng), (2.0 * d * dt).sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Reaction, ReactionNetwork, SpeciesSpec};
    use crate::rng::replica_rng;

    fn model(species: Vec<SpeciesSpec>, reactions: Vec<Reaction>) -> Model {
        Model::compile(&ReactionNetwork { species, reactions }).unwrap()
    }

    fn at(id: u64, species: SpeciesId, position: Vec3) -> MicroParticle {
        MicroParticle {
            id,
            species,
            position,
            birth: 0.0,
        }
    }

    fn ab_model(k: f64) -> Model {
        model(
            vec![SpeciesSpec::new("A", 1.0, 0.0025), SpeciesSpec::new("B", 1.0, 0.0025)],
            vec![Reaction::bi("A", "B", &[], k)],
        )
    }

    #[test]
    fn decomposition_shapes() {
        let m = ab_model(1.0);
        let two = [at(0, 0, [0.1; 3]), at(1, 1, [0.2; 3])];
        let doms = decompose(&m, &two, 1.0);
        assert_eq!(doms.len(), 1);
        assert_eq!(doms[0].members, Members::Pair(0, 1));
        let one = [at(0, 0, [0.1; 3])];
        assert_eq!(decompose(&m, &one, 1.0)[0].members, Members::Single(0));

        let delta = 0.02;
        let three = [
            at(0, 0, [0.1, 0.5, 0.5]),
            at(1, 1, [0.1 + delta, 0.5, 0.5]),
            at(2, 0, [0.1 + 11.0 * delta, 0.5, 0.5]),
        ];
        let doms = decompose(&m, &three, 10.0);
        assert_eq!(doms.len(), 2);
        let single = doms.iter().find(|d| d.members == Members::Single(2)).unwrap();
        let want = protective_step(10.0 * delta - 0.005, 1.0);
        assert!((single.dt / want - 1.0).abs() < 1e-12);
        let ratio = protective_step(10.0 * delta, 1.0) / protective_step(delta, 1.0);
        assert!((ratio - 100.0).abs() < 1e-9);
    }

    #[test]
    fn free_diffusion_variance() {
        let m = model(vec![SpeciesSpec::new("A", 1.0, 0.0025)], vec![]);
        let dom = BoxDomain::cube(100.0);
        let mut rng = replica_rng(5, 0);
        let n = 100_000;
        let parts: Vec<_> = (0..n).map(|i| at(i as u64, 0, [50.0; 3])).collect();
        let mut s = MicroSolver::new(&m, dom, parts, 0.0);
        s.run(0.5, &[], &mut NoMeso, &mut rng, |_, _| {});
        let var: f64 = s.particles.iter().map(|p| (p.position[0] - 50.0).powi(2)).sum::<f64>() / n as f64;
        assert!((var / 1.0 - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn pair_survival_matches_kernel() {
        let m = ab_model(1.0);
        let dom = BoxDomain::cube(1.0);
        let kernel = PairKernel::new(0.005, 2.0, 1.0);
        let t = 1e-3;
        let n = 20_000;
        let mut survived = 0;
        for rep in 0..n {
            let mut rng = replica_rng(6, rep);
            let parts = vec![at(0, 0, [0.5; 3]), at(1, 1, [0.5 + 0.005, 0.5, 0.5])];
            let mut s = MicroSolver::new(&m, dom, parts, 0.0);
            s.run(t, &[], &mut NoMeso, &mut rng, |_, _| {});
            if s.particles.len() == 2 {
                survived += 1;
                let r = geom::dist(s.particles[0].position, s.particles[1].position);
                assert!(r >= 0.005 * (1.0 - 1e-9));
            }
        }
        let p = kernel.survival(0.005, t);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let got = survived as f64 / n as f64;
        assert!((got - p).abs() < 4.0 * se, "{got} vs {p}");
    }

    #[test]
    fn far_pair_cannot_react_quickly() {
        let m = ab_model(1e6);
        let dom = BoxDomain::cube(1.0);
        let mut reacted = 0;
        for rep in 0..2000 {
            let mut rng = replica_rng(7, rep);
            let parts = vec![at(0, 0, [0.3; 3]), at(1, 1, [0.7; 3])];
            let mut s = MicroSolver::new(&m, dom, parts, 0.0);
            s.run(1e-4, &[], &mut NoMeso, &mut rng, |_, _| {});
            reacted += usize::from(s.particles.is_empty());
        }
        assert_eq!(reacted, 0);
    }

    #[test]
    fn zero_window_leaves_positions() {
        let m = ab_model(1.0);
        let parts = vec![at(0, 0, [0.3; 3]), at(1, 1, [0.31, 0.3, 0.3])];
        let mut s = MicroSolver::new(&m, BoxDomain::cube(1.0), parts.clone(), 0.0);
        let mut rng = replica_rng(8, 0);
        s.run(0.0, &[], &mut NoMeso, &mut rng, |_, _| {});
        assert_eq!(s.particles, parts);
    }

    #[test]
    fn dissociation_geometry() {
        let m = model(
            vec![
                SpeciesSpec::new("C", 1.0, 0.003),
                SpeciesSpec::new("A", 1.0, 0.002),
                SpeciesSpec::new("B", 0.5, 0.004),
            ],
            vec![Reaction::uni("C", &["A", "B"], 1e9)],
        );
        let dom = BoxDomain::cube(1.0);
        let mut rng = replica_rng(9, 0);
        let mut s = MicroSolver::new(&m, dom, vec![at(0, 0, [0.0, 0.0, 0.0])], 0.0);
        s.step(1.0, &mut NoMeso, &mut rng);
        assert_eq!(s.particles.len(), 2);
        for p in &s.particles {
            assert!(dom.contains(&p.position));
            assert_eq!(p.birth, s.time());
        }
        let mut s = MicroSolver::new(&m, dom, vec![at(0, 0, [0.5; 3])], 0.0);
        s.step(1.0, &mut NoMeso, &mut rng);
        let r = geom::dist(s.particles[0].position, s.particles[1].position);
        assert!((r - 0.006).abs() < 1e-12);
    }

    struct OnePartner {
        voxel: VoxelId,
        n: u32,
    }

    impl MesoReservoir for OnePartner {
        fn count(&self, voxel: VoxelId, species: SpeciesId) -> u32 {
            if voxel == self.voxel && species == 1 {
                self.n
            } else {
                0
            }
        }
        fn total(&self, species: SpeciesId) -> u32 {
            if species == 1 {
                self.n
            } else {
                0
            }
        }
        fn take(&mut self, voxel: VoxelId, species: SpeciesId, _: f64) -> bool {
            if self.count(voxel, species) > 0 {
                self.n -= 1;
                true
            } else {
                false
            }
        }
    }

    #[test]
    fn meso_partner_waiting_time() {
        let m = model(
            vec![
                SpeciesSpec::new("A", 0.0, 0.0025),
                SpeciesSpec::new("B", 1.0, 0.0025),
                SpeciesSpec::new("C", 0.0, 0.0025),
            ],
            vec![Reaction::bi("A", "B", &["C"], 1.0)],
        );
        let mesh = CartesianMesh::cube(1.0, 10);
        let rates = RateTable::build(&m, &mesh).unwrap();
        let k = rates.k_meso(0);
        let home = mesh.voxel_of(&[0.55; 3]);
        for (n, tol) in [(0u32, 0.0), (1, 0.03), (2, 0.03)] {
            let mut mean = 0.0;
            let reps = 10_000;
            let mut hits = 0;
            for rep in 0..reps {
                let mut rng = replica_rng(10 + n as u64, rep);
                let mut s = MicroSolver::new(&m, BoxDomain::cube(1.0), vec![at(0, 0, [0.55; 3])], 0.0)
                    .with_coupling(&mesh, &rates);
                s.options.stop_after_reaction = true;
                let mut res = OnePartner { voxel: home, n };
                s.run(100.0 / k, &[], &mut res, &mut rng, |_, _| {});
                if let Some(r) = s.reactions.first() {
                    mean += r.time;
                    hits += 1;
                    assert_eq!(s.particles[0].species, 2);
                }
            }
            if n == 0 {
                assert_eq!(hits, 0);
            } else {
                assert_eq!(hits, reps);
                let mean = mean / reps as f64;
                let want = 1.0 / (k * n as f64);
                assert!((mean / want - 1.0).abs() < tol, "n={n}: {mean} vs {want}");
            }
        }
    }

    #[test]
    fn samples_and_conservation() {
        let m = ab_model(0.0);
        let parts: Vec<_> = (0..20)
            .map(|i| at(i, (i % 2) as usize, [0.05 * i as f64 + 0.01, 0.5, 0.5]))
            .collect();
        let mut s = MicroSolver::new(&m, BoxDomain::cube(1.0), parts, 0.0);
        let times = [0.0, 0.01, 0.02, 0.05];
        let mut seen = vec![];
        let mut rng = replica_rng(11, 0);
        s.run(0.05, &times, &mut NoMeso, &mut rng, |k, c| {
            assert_eq!(c.iter().sum::<u32>(), 20);
            seen.push(k);
        });
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert_eq!(s.time(), 0.05);
    }
}
