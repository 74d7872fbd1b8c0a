//! Next-particle method: event-driven simulation of the lattice model with
//! one event stream per particle and per co-located reactive pair.
//!
//! Events are kept in a binary heap and invalidated lazily: every particle
//! slot carries a generation counter that is bumped whenever the particle
//! moves or is consumed, and an event is discarded on pop if any stamp it
//! carries is stale.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};

use rand::Rng;

use crate::mesh::{CartesianMesh, VoxelId};
use crate::model::{Model, ReactionId, SpeciesId};
use crate::rates::RateTable;
use crate::rng::exp_time;

/// Multiplicative hash for voxel indices.
#[derive(Default)]
pub struct VoxelHasher(u64);

impl Hasher for VoxelHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(8) ^ b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        }
    }
    fn write_usize(&mut self, n: usize) {
        self.0 = (n as u64 ^ self.0).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
}

pub type VoxelMap<V> = HashMap<VoxelId, V, BuildHasherDefault<VoxelHasher>>;

/// A particle on the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesoParticle {
    pub id: u64,
    pub species: SpeciesId,
    pub voxel: VoxelId,
    pub birth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Diffuse(usize),
    Uni(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
    gens: (u64, u64),
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone)]
struct Slot {
    particle: MesoParticle,
    alive: bool,
    generation: u64,
}

/// What an executed event did.
#[derive(Debug, Clone, PartialEq)]
pub enum MesoEvent {
    Jump {
        species: SpeciesId,
        from: VoxelId,
        to: VoxelId,
    },
    Reaction {
        reaction: ReactionId,
        voxel: VoxelId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub event: MesoEvent,
}

/// Solver state for one trajectory.
#[derive(Debug, Clone)]
pub struct NpmState<'a> {
    model: &'a Model,
    mesh: &'a CartesianMesh,
    rates: &'a RateTable,
    time: f64,
    slots: Vec<Slot>,
    free: Vec<usize>,
    occupancy: VoxelMap<Vec<usize>>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    counts: Vec<u32>,
    next_id: u64,
    pub executed: u64,
}

impl<'a> NpmState<'a> {
    /// Build the state and schedule the initial events.
    pub fn new<R: Rng + ?Sized>(
        model: &'a Model,
        mesh: &'a CartesianMesh,
        rates: &'a RateTable,
        particles: &[MesoParticle],
        t0: f64,
        rng: &mut R,
    ) -> Self {
        let mut st = Self {
            model,
            mesh,
            rates,
            time: t0,
            slots: Vec::with_capacity(particles.len()),
            free: Vec::new(),
            occupancy: VoxelMap::default(),
            queue: BinaryHeap::new(),
            seq: 0,
            counts: vec![0; model.n_species()],
            next_id: particles.iter().map(|p| p.id + 1).max().unwrap_or(0),
            executed: 0,
        };
        // insert all first so that pair events are created exactly once
        for p in particles {
            st.insert(*p);
        }
        for i in 0..st.slots.len() {
            st.schedule_own(i, rng);
            let voxel = st.slots[i].particle.voxel;
            let partners: Vec<usize> = st.occupancy[&voxel].iter().copied().filter(|&j| j > i).collect();
            for j in partners {
                st.schedule_pair(i, j, rng);
            }
        }
        st
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Identifier handed to the next product particle.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn set_next_id(&mut self, id: u64) {
        self.next_id = self.next_id.max(id);
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Live particles.
    pub fn particles(&self) -> impl Iterator<Item = &MesoParticle> {
        self.slots.iter().filter(|s| s.alive).map(|s| &s.particle)
    }

    /// Number of live particles of `species` in `voxel`.
    pub fn count_in(&self, voxel: VoxelId, species: SpeciesId) -> usize {
        self.occupancy.get(&voxel).map_or(0, |v| {
            v.iter().filter(|&&i| self.slots[i].particle.species == species).count()
        })
    }

    /// Pending (possibly stale) events.
    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn insert(&mut self, p: MesoParticle) -> usize {
        let slot = Slot {
            particle: p,
            alive: true,
            generation: 0,
        };
        let i = match self.free.pop() {
            Some(i) => {
                let generation = self.slots[i].generation + 1;
                self.slots[i] = Slot { generation, ..slot };
                i
            }
            None => {
                self.slots.push(slot);
                self.slots.len() - 1
            }
        };
        self.occupancy.entry(p.voxel).or_default().push(i);
        self.counts[p.species] += 1;
        i
    }

    fn detach(&mut self, i: usize) {
        let v = self.slots[i].particle.voxel;
        if let Some(list) = self.occupancy.get_mut(&v) {
            if let Some(k) = list.iter().position(|&j| j == i) {
                list.swap_remove(k);
            }
        }
        self.slots[i].generation += 1;
    }

    fn remove(&mut self, i: usize) {
        self.detach(i);
        self.slots[i].alive = false;
        self.counts[self.slots[i].particle.species] -= 1;
        self.free.push(i);
    }

    fn push(&mut self, time: f64, kind: EventKind, gens: (u64, u64)) {
        if time.is_finite() {
            self.seq += 1;
            self.queue.push(Reverse(Event {
                time,
                seq: self.seq,
                kind,
                gens,
            }));
        }
    }

    fn schedule_own<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let p = self.slots[i].particle;
        let g = self.slots[i].generation;
        let jump = self.rates.jump[p.species] * self.mesh.n_neighbors(p.voxel) as f64;
        let t = self.time + exp_time(rng, jump);
        self.push(t, EventKind::Diffuse(i), (g, 0));
        let uni = self.model.unimolecular_rate(p.species);
        let t = self.time + exp_time(rng, uni);
        self.push(t, EventKind::Uni(i), (g, 0));
    }

    fn pair_rate(&self, a: SpeciesId, b: SpeciesId) -> f64 {
        self.model.channels(a, b).iter().map(|&r| self.rates.k_meso(r)).sum()
    }

    fn schedule_pair<R: Rng + ?Sized>(&mut self, i: usize, j: usize, rng: &mut R) {
        let rate = self.pair_rate(self.slots[i].particle.species, self.slots[j].particle.species);
        if rate > 0.0 {
            let t = self.time + exp_time(rng, rate);
            let gens = (self.slots[i].generation, self.slots[j].generation);
            self.push(t, EventKind::Pair(i, j), gens);
        }
    }

    /// Schedule own events of `i` and pair events with everything in its voxel.
    fn schedule_all<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        self.schedule_own(i, rng);
        let voxel = self.slots[i].particle.voxel;
        let n = self.occupancy[&voxel].len();
        for k in 0..n {
            let j = self.occupancy[&voxel][k];
            if j != i {
                self.schedule_pair(i, j, rng);
            }
        }
    }

    fn valid(&self, e: &Event) -> bool {
        match e.kind {
            EventKind::Diffuse(i) | EventKind::Uni(i) => self.slots[i].alive && self.slots[i].generation == e.gens.0,
            EventKind::Pair(i, j) => {
                self.slots[i].alive
                    && self.slots[j].alive
                    && self.slots[i].generation == e.gens.0
                    && self.slots[j].generation == e.gens.1
            }
        }
    }

    /// Time of the next valid event, discarding stale entries.
    pub fn peek_time(&mut self) -> Option<f64> {
        while let Some(Reverse(e)) = self.queue.peek() {
            if self.valid(e) {
                return Some(e.time);
            }
            self.queue.pop();
        }
        None
    }

    fn choose_channel<R: Rng + ?Sized>(
        &self,
        channels: &[ReactionId],
        weight: impl Fn(ReactionId) -> f64,
        rng: &mut R,
    ) -> ReactionId {
        let total: f64 = channels.iter().map(|&r| weight(r)).sum();
        let mut u = rng.random::<f64>() * total;
        for &r in channels {
            let w = weight(r);
            if u < w {
                return r;
            }
            u -= w;
        }
        *channels.last().unwrap()
    }

    fn produce<R: Rng + ?Sized>(&mut self, rid: ReactionId, voxel: VoxelId, rng: &mut R) {
        let products: Vec<SpeciesId> = self.model.products(rid).to_vec();
        let new: Vec<usize> = products
            .into_iter()
            .map(|s| {
                self.next_id += 1;
                self.insert(MesoParticle {
                    id: self.next_id - 1,
                    species: s,
                    voxel,
                    birth: self.time,
                })
            })
            .collect();
        // pair events among the new particles are created once, from the later one
        for (k, &i) in new.iter().enumerate() {
            self.schedule_own(i, rng);
            let partners: Vec<usize> = self.occupancy[&voxel]
                .iter()
                .copied()
                .filter(|j| !new[k..].contains(j))
                .collect();
            for j in partners {
                self.schedule_pair(i, j, rng);
            }
        }
    }

    /// Execute the next event if it occurs no later than `t_limit`;
    /// otherwise advance the clock to `t_limit` and return `None`.
    pub fn step<R: Rng + ?Sized>(&mut self, t_limit: f64, rng: &mut R) -> Option<EventRecord> {
        match self.peek_time() {
            Some(t) if t <= t_limit => {}
            _ => {
                self.time = self.time.max(t_limit);
                return None;
            }
        }
        let Reverse(e) = self.queue.pop().expect("peeked event");
        self.time = e.time;
        self.executed += 1;
        let event = match e.kind {
            EventKind::Diffuse(i) => {
                let from = self.slots[i].particle.voxel;
                let k = rng.random_range(0..self.mesh.n_neighbors(from));
                let to = self.mesh.neighbors(from).nth(k).expect("jump needs a neighbor");
                self.detach(i);
                self.slots[i].particle.voxel = to;
                self.occupancy.entry(to).or_default().push(i);
                self.schedule_all(i, rng);
                MesoEvent::Jump {
                    species: self.slots[i].particle.species,
                    from,
                    to,
                }
            }
            EventKind::Uni(i) => {
                let p = self.slots[i].particle;
                let model = self.model;
                let rid = self.choose_channel(model.unimolecular(p.species), |r| model.kinds[r].rate(), rng);
                self.remove(i);
                self.produce(rid, p.voxel, rng);
                MesoEvent::Reaction {
                    reaction: rid,
                    voxel: p.voxel,
                }
            }
            EventKind::Pair(i, j) => {
                let (a, b) = (self.slots[i].particle, self.slots[j].particle);
                let rates = self.rates;
                let rid = self.choose_channel(self.model.channels(a.species, b.species), |r| rates.k_meso(r), rng);
                self.remove(i);
                self.remove(j);
                self.produce(rid, a.voxel, rng);
                MesoEvent::Reaction {
                    reaction: rid,
                    voxel: a.voxel,
                }
            }
        };
        Some(EventRecord { time: e.time, event })
    }

    /// Run to `t_end`, calling `on_sample(k, counts)` for every sample time
    /// `sample_times[k]` in `(current time, t_end]` (and at the current time
    /// if it coincides with a sample).
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        sample_times: &[f64],
        rng: &mut R,
        mut on_sample: impl FnMut(usize, &[u32]),
    ) {
        let mut k = sample_times.partition_point(|&s| s < self.time);
        loop {
            let next = self.peek_time().filter(|&t| t <= t_end);
            let horizon = next.unwrap_or(t_end);
            while k < sample_times.len() && sample_times[k] <= t_end && (sample_times[k] < horizon || next.is_none()) {
                on_sample(k, &self.counts);
                k += 1;
            }
            if next.is_none() {
                self.time = self.time.max(t_end);
                return;
            }
            self.step(t_end, rng);
        }
    }

    /// Consume the state, returning the live particles.
    pub fn into_particles(self) -> Vec<MesoParticle> {
        self.slots.into_iter().filter(|s| s.alive).map(|s| s.particle).collect()
    }
}
