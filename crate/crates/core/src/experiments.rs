//! Named experiment presets and the single-trajectory drivers behind them.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom;
use crate::hybrid::{hybrid_run, Census, HybridSetup, PhaseTiming};
use crate::mesh::CartesianMesh;
use crate::meso::{MesoEvent, MesoParticle, NpmState};
use crate::micro::initial_particles;
use crate::micro::solver::{MicroParticle, MicroSolver, NoMeso};
use crate::model::{
    validate_model, BoxDomain, Model, ModelFile, Reaction, ReactionNetwork, SimConfig, SolverKind, SpeciesId,
    SpeciesSpec,
};
use crate::oracle::bd::{bd_simulate_from, BdOptions};
use crate::partition::{build_split, PartitionOptions, SplitPlan};
use crate::rates::{h_star, Dim, RateTable};
use crate::rng::{replica_rng, unit_vector};
use crate::stats::{
    bootstrap_se, bootstrap_se_many, log_histogram, max_norm_error, mean_abs_error, mean_se, summarize, Trajectories,
};

/// Two species `A + B -> C` in a unit cube, contact radius split evenly.
pub fn binding_model(sigma: f64, d_total: f64, k_a: f64) -> Model {
    let net = ReactionNetwork {
        species: vec![
            SpeciesSpec::new("A", 0.5 * d_total, 0.5 * sigma).with_count(1),
            SpeciesSpec::new("B", 0.5 * d_total, 0.5 * sigma).with_count(1),
            SpeciesSpec::new("C", 0.0, 0.5 * sigma),
        ],
        reactions: vec![Reaction::bi("A", "B", &["C"], k_a)],
    };
    Model::compile(&net).expect("static model")
}

/// Reversible binding with an immobile `A` at the box center:
/// `C -> A + B`, `A + B -> C`.
pub fn rebind_model(sigma: f64, d: f64, k_a: f64, k_d: f64) -> Model {
    let net = ReactionNetwork {
        species: vec![
            SpeciesSpec::new("C", 0.0, 0.5 * sigma),
            SpeciesSpec::new("A", 0.0, 0.5 * sigma).with_count(1).fixed_at([0.5; 3]),
            SpeciesSpec::new("B", d, 0.5 * sigma).with_count(1),
        ],
        reactions: vec![
            Reaction::uni("C", &["A", "B"], k_d),
            Reaction::bi("A", "B", &["C"], k_a),
        ],
    };
    Model::compile(&net).expect("static model")
}

fn uniform_point<R: Rng + ?Sized>(domain: &BoxDomain, rng: &mut R) -> geom::Vec3 {
    std::array::from_fn(|k| domain.lower[k] + rng.random::<f64>() * (domain.upper[k] - domain.lower[k]))
}

/// Time until the pair of [`binding_model`] reacts, both started uniformly,
/// with the particle solver.
pub fn binding_time_micro(model: &Model, seed: u64, replica: u64) -> f64 {
    let mut rng = replica_rng(seed, replica);
    let domain = BoxDomain::cube(1.0);
    let sigma = model.sigma(0) + model.sigma(1);
    let a = uniform_point(&domain, &mut rng);
    let b = loop {
        let b = uniform_point(&domain, &mut rng);
        if geom::dist(a, b) >= sigma {
            break b;
        }
    };
    let particles = vec![
        MicroParticle {
            id: 0,
            species: 0,
            position: a,
            birth: 0.0,
        },
        MicroParticle {
            id: 1,
            species: 1,
            position: b,
            birth: 0.0,
        },
    ];
    let mut solver = MicroSolver::new(model, domain, particles, 0.0);
    solver.options.stop_after_reaction = true;
    solver.run(f64::INFINITY, &[], &mut NoMeso, &mut rng, |_, _| {});
    solver.reactions[0].time
}

/// Same as [`binding_time_micro`] on the lattice.
pub fn binding_time_meso(model: &Model, mesh: &CartesianMesh, rates: &RateTable, seed: u64, replica: u64) -> f64 {
    let mut rng = replica_rng(seed, replica);
    let n = mesh.n_voxels();
    let particles: Vec<MesoParticle> = (0..2)
        .map(|s| MesoParticle {
            id: s as u64,
            species: s,
            voxel: rng.random_range(0..n),
            birth: 0.0,
        })
        .collect();
    let mut npm = NpmState::new(model, mesh, rates, &particles, 0.0, &mut rng);
    loop {
        let rec = npm
            .step(f64::INFINITY, &mut rng)
            .expect("pair always reacts eventually");
        if matches!(rec.event, MesoEvent::Reaction { .. }) {
            return rec.time;
        }
    }
}

/// Which solver produced a rebinding time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebindSolver {
    Micro,
    Meso,
    Hybrid,
}

/// Settings for the rebinding study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebindStudy {
    pub sigma: f64,
    pub d: f64,
    pub k_a: f64,
    pub voxels: usize,
    pub dt_split: f64,
    /// Rebinding times beyond this are censored.
    pub t_max: f64,
}

impl RebindStudy {
    pub fn new(k_a: f64) -> Self {
        Self {
            sigma: 0.005,
            d: 1.0,
            k_a,
            voxels: 20,
            dt_split: 0.01,
            t_max: 1.0,
        }
    }

    pub fn model(&self) -> Model {
        rebind_model(self.sigma, self.d, self.k_a, 1.0)
    }

    /// First rebinding time of a pair released at contact, or `None` if it
    /// exceeds `t_max`.
    pub fn sample(&self, solver: RebindSolver, model: &Model, seed: u64, replica: u64) -> Result<Option<f64>> {
        let mut rng = replica_rng(seed, replica);
        let domain = BoxDomain::cube(1.0);
        let center = domain.center();
        let released = geom::add(center, geom::scale(unit_vector(&mut rng), self.sigma));
        let (a, b) = (model.species_id("A").unwrap(), model.species_id("B").unwrap());
        let hit = match solver {
            RebindSolver::Micro => {
                let particles = vec![
                    MicroParticle {
                        id: 0,
                        species: a,
                        position: center,
                        birth: 0.0,
                    },
                    MicroParticle {
                        id: 1,
                        species: b,
                        position: released,
                        birth: 0.0,
                    },
                ];
                let mut solver = MicroSolver::new(model, domain, particles, 0.0);
                solver.options.stop_after_reaction = true;
                solver.run(self.t_max, &[], &mut NoMeso, &mut rng, |_, _| {});
                solver.reactions.first().map(|r| r.time)
            }
            RebindSolver::Meso => {
                let mesh = CartesianMesh::new(&domain, [self.voxels; 3])?;
                let rates = RateTable::build(model, &mesh)?;
                let v = mesh.voxel_of(&center);
                let particles = [a, b].map(|s| MesoParticle {
                    id: s as u64,
                    species: s,
                    voxel: v,
                    birth: 0.0,
                });
                let mut npm = NpmState::new(model, &mesh, &rates, &particles, 0.0, &mut rng);
                let mut hit = None;
                while let Some(rec) = npm.step(self.t_max, &mut rng) {
                    if matches!(rec.event, MesoEvent::Reaction { .. }) {
                        hit = Some(rec.time);
                        break;
                    }
                }
                hit
            }
            RebindSolver::Hybrid => {
                let mesh = CartesianMesh::new(&domain, [self.voxels; 3])?;
                let rates = RateTable::build(model, &mesh)?;
                let plan = build_split(model, &mesh, &PartitionOptions::default())?;
                let setup = HybridSetup {
                    model,
                    domain,
                    mesh: &mesh,
                    rates: &rates,
                    plan: &plan,
                    dt_split: self.dt_split,
                    t_final: self.t_max,
                    sample_times: &[],
                    stop_after_reaction: true,
                };
                hybrid_run(&setup, &[(a, center), (b, released)], &mut rng).first_reaction
            }
        };
        Ok(hit.filter(|&t| t <= self.t_max))
    }
}

/// A validated model with its simulation settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: Model,
    pub domain: BoxDomain,
    pub config: SimConfig,
    pub partition: PartitionOptions,
}

/// Voxels per axis when a model does not specify a mesh.
pub const DEFAULT_VOXELS: usize = 20;

impl Scenario {
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let network = file.network();
        validate_model(&network, &file.domain, &file.config).into_result()?;
        let model = Model::compile(&network)?;
        let partition = PartitionOptions {
            epsilon: file.config.epsilon,
            k_factor: file.config.k_factor,
            t_m: file.config.t_m,
            ..PartitionOptions::default()
        };
        Ok(Self {
            model,
            domain: file.domain,
            config: file.config.clone(),
            partition,
        })
    }

    pub fn mesh(&self) -> Result<CartesianMesh> {
        CartesianMesh::new(&self.domain, self.config.voxels.unwrap_or([DEFAULT_VOXELS; 3]))
    }
}

/// Mesh, lattice rates and scale plan shared by all replicas of one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mesh: CartesianMesh,
    pub rates: Option<RateTable>,
    pub plan: SplitPlan,
}

impl Prepared {
    pub fn new(scenario: &Scenario, solver: SolverKind) -> Result<Self> {
        let mesh = scenario.mesh()?;
        let n = scenario.model.n_species();
        let (rates, plan) = match solver {
            SolverKind::Meso => (Some(RateTable::build(&scenario.model, &mesh)?), SplitPlan::all_meso(n)),
            SolverKind::Hybrid => (
                Some(RateTable::build(&scenario.model, &mesh)?),
                build_split(&scenario.model, &mesh, &scenario.partition)?,
            ),
            SolverKind::Micro | SolverKind::BdOracle => (None, SplitPlan::all_micro(n)),
        };
        Ok(Self { mesh, rates, plan })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaOutput {
    /// `counts[k][s]` at the configured sample times.
    pub counts: Vec<Vec<u32>>,
    pub timing: PhaseTiming,
    pub census: Vec<Census>,
}

/// Run replica `replica` of `scenario` with `solver`.
pub fn run_replica(
    scenario: &Scenario,
    solver: SolverKind,
    prepared: &Prepared,
    replica: u64,
) -> Result<ReplicaOutput> {
    let mut rng = replica_rng(scenario.config.rng_seed, replica);
    let model = &scenario.model;
    let samples = &scenario.config.sample_times;
    let t_final = scenario.config.t_final;
    let initial = initial_particles(model, &scenario.domain, &mut rng);
    let started = Instant::now();
    let mut counts = vec![vec![0u32; model.n_species()]; samples.len()];
    let mut timing = PhaseTiming::default();
    let mut census = Vec::new();
    match solver {
        SolverKind::Meso => {
            let rates = prepared.rates.as_ref().expect("lattice rates");
            let particles: Vec<MesoParticle> = initial
                .iter()
                .enumerate()
                .map(|(i, &(species, p))| MesoParticle {
                    id: i as u64,
                    species,
                    voxel: prepared.mesh.voxel_of(&p),
                    birth: 0.0,
                })
                .collect();
            let mut npm = NpmState::new(model, &prepared.mesh, rates, &particles, 0.0, &mut rng);
            npm.run(t_final, samples, &mut rng, |k, c| counts[k] = c.to_vec());
            timing.meso = started.elapsed();
        }
        SolverKind::Micro => {
            let particles = initial
                .iter()
                .enumerate()
                .map(|(i, &(species, position))| MicroParticle {
                    id: i as u64,
                    species,
                    position,
                    birth: 0.0,
                })
                .collect();
            let mut solver = MicroSolver::new(model, scenario.domain, particles, 0.0);
            solver.run(t_final, samples, &mut NoMeso, &mut rng, |k, c| counts[k] = c.to_vec());
            timing.micro = started.elapsed();
        }
        SolverKind::Hybrid => {
            let setup = HybridSetup {
                model,
                domain: scenario.domain,
                mesh: &prepared.mesh,
                rates: prepared.rates.as_ref().expect("lattice rates"),
                plan: &prepared.plan,
                dt_split: scenario.config.dt_split,
                t_final,
                sample_times: samples,
                stop_after_reaction: false,
            };
            let out = hybrid_run(&setup, &initial, &mut rng);
            counts = out.counts;
            census = out.census;
            timing = out.timing;
        }
        SolverKind::BdOracle => {
            let opts = BdOptions::for_model(model);
            let out = bd_simulate_from(model, &scenario.domain, initial, samples, &opts, &mut rng)?;
            counts = out.counts;
            timing.micro = started.elapsed();
        }
    }
    timing.total = started.elapsed();
    Ok(ReplicaOutput { counts, timing, census })
}

/// Run `replicas` replicas on a pool of `threads` workers; output order
/// follows the replica index.
pub fn run_ensemble(
    scenario: &Scenario,
    solver: SolverKind,
    prepared: &Prepared,
    replicas: u64,
    threads: usize,
) -> Result<Vec<ReplicaOutput>> {
    pool(threads)?.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|r| run_replica(scenario, solver, prepared, r))
            .collect()
    })
}

fn species(name: &str, d: f64, sigma: f64) -> SpeciesSpec {
    SpeciesSpec::new(name, d, sigma)
}

/// Stage-by-stage dissociation/association chain with `k_assoc.len()` stages:
/// `S_i -> S_i1 + S_i2 -> S_(i+1)`.
pub fn chain_file(k_dissoc: f64, k_assoc: &[f64], sigma: f64, d: f64, initial: &[(usize, u32)]) -> ModelFile {
    let mut spec = Vec::new();
    let mut reactions = Vec::new();
    let n = k_assoc.len();
    for i in 1..=n + 1 {
        spec.push(species(&format!("S{i}"), d, sigma));
    }
    for (i, &k) in k_assoc.iter().enumerate() {
        let s = i + 1;
        let (a, b) = (format!("S{s}1"), format!("S{s}2"));
        spec.push(species(&a, d, sigma));
        spec.push(species(&b, d, sigma));
        reactions.push(Reaction::uni(&format!("S{s}"), &[&a, &b], k_dissoc));
        reactions.push(Reaction::bi(&a, &b, &[&format!("S{}", s + 1)], k));
    }
    for &(stage, count) in initial {
        spec[stage - 1].initial_count = count;
    }
    ModelFile {
        domain: BoxDomain::cube(1.0),
        species: spec,
        reactions,
        config: SimConfig::new(1.0, 0.01).uniform_samples(51),
    }
}

/// Three-stage chain with the given association rates.
pub fn three_stage_chain(k_assoc: [f64; 3], n_s1: u32) -> ModelFile {
    let mut f = chain_file(10.0, &k_assoc, 0.0025, 1.0, &[(1, n_s1)]);
    f.config.voxels = Some([20; 3]);
    f
}

/// Two associations whose optimal mesh sizes differ by a factor of two.
pub fn two_resolution_file(n_s1: u32) -> ModelFile {
    let radii = [
        ("S1", 1.0e-3),
        ("S11", 0.8e-3),
        ("S12", 0.8e-3),
        ("S2", 2.0e-3),
        ("S21", 1.8e-3),
        ("S22", 1.8e-3),
        ("S3", 2.5e-3),
    ];
    let mut spec: Vec<SpeciesSpec> = radii.iter().map(|&(n, s)| species(n, 1.0, s)).collect();
    spec[0].initial_count = n_s1;
    let reactions = vec![
        Reaction::uni("S1", &["S11", "S12"], 10.0),
        Reaction::bi("S11", "S12", &["S2"], 0.1),
        Reaction::uni("S2", &["S21", "S22"], 10.0),
        Reaction::bi("S21", "S22", &["S3"], 0.1),
    ];
    let mut config = SimConfig::new(2.0, 0.01).uniform_samples(201);
    config.voxels = Some([40; 3]);
    ModelFile {
        domain: BoxDomain::cube(1.0),
        species: spec,
        reactions,
        config,
    }
}

/// Slow three-stage chain used for the mesh-size performance sweep.
pub fn mesh_sweep_file() -> ModelFile {
    let mut f = chain_file(20.0, &[0.0016, 0.00145, 0.0014], 0.001, 1.0, &[(1, 200), (2, 200)]);
    f.config = SimConfig::new(0.2, 0.01).uniform_samples(21);
    f
}

/// Single reaction `S1 -> S11 + S12 -> S2` in a cube sized to 50 optimal voxels per side.
pub fn eps_sweep_file(k_assoc: f64, n_s1: u32) -> ModelFile {
    let mut f = chain_file(10.0, &[k_assoc], 0.0025, 1.0, &[(1, n_s1)]);
    let side = 50.0 * h_star(0.005, Dim::Three);
    f.domain = BoxDomain::cube(side);
    f.config = SimConfig::new(1.0, 0.01).uniform_samples(21);
    f
}

/// Named presets.
pub const PRESETS: &[&str] = &[
    "rebind",
    "binding-time",
    "eps-sweep",
    "dt-convergence",
    "mesh-sweep",
    "two-resolution",
];

/// Model file behind a preset that is driven by a model.
pub fn preset_file(name: &str) -> Option<ModelFile> {
    Some(match name {
        "dt-convergence" => three_stage_chain([0.1; 3], 30),
        "two-resolution" => two_resolution_file(30),
        "mesh-sweep" => mesh_sweep_file(),
        "eps-sweep" => eps_sweep_file(0.1, 30),
        _ => return None,
    })
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParam(e.to_string()))
}

/// How two ensemble means are compared.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorMeasure {
    /// Largest deviation over sample times of one species.
    MaxNorm(SpeciesId),
    /// Time-averaged sum of deviations over a set of species.
    MeanAbs(Vec<SpeciesId>),
}

impl ErrorMeasure {
    pub fn eval(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        match self {
            ErrorMeasure::MaxNorm(s) => max_norm_error(a, b, *s),
            ErrorMeasure::MeanAbs(s) => mean_abs_error(a, b, s),
        }
    }
}

/// Error of an ensemble against a reference, with its bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub error: f64,
    pub std_error: f64,
}

/// Bootstrap resamples used for error bars.
pub const BOOTSTRAP_RESAMPLES: usize = 400;

pub fn compare(runs: &Trajectories, reference: &Trajectories, measure: &ErrorMeasure, seed: u64) -> ErrorEstimate {
    let error = measure.eval(&summarize(runs).mean, &summarize(reference).mean);
    let mut rng = replica_rng(seed, u64::MAX);
    let std_error = bootstrap_se(runs, reference, BOOTSTRAP_RESAMPLES, &mut rng, |a, b| {
        measure.eval(a, b)
    });
    ErrorEstimate { error, std_error }
}

/// Population samples of every replica of an ensemble.
pub fn trajectories(outputs: &[ReplicaOutput]) -> Vec<Vec<Vec<u32>>> {
    outputs.iter().map(|o| o.counts.clone()).collect()
}

/// Bins of the log-time rebinding histogram (plus one overflow bin).
pub const REBIND_BINS: usize = 16;
/// Lower edge of the rebinding histogram.
pub const REBIND_T_MIN: f64 = 1e-10;

/// Rebinding times of `replicas` released pairs.
pub fn rebind_times(
    study: &RebindStudy,
    solver: RebindSolver,
    seed: u64,
    replicas: u64,
    threads: usize,
) -> Result<Vec<Option<f64>>> {
    let model = study.model();
    pool(threads)?.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|r| study.sample(solver, &model, seed, r))
            .collect()
    })
}

pub fn rebind_histogram(times: &[Option<f64>], study: &RebindStudy) -> Vec<f64> {
    log_histogram(times, REBIND_T_MIN, study.t_max, REBIND_BINS)
}

/// Mean binding time of the [`binding_model`] pair and its standard error.
pub fn binding_time_stats(
    model: &Model,
    solver: SolverKind,
    seed: u64,
    replicas: u64,
    threads: usize,
) -> Result<(f64, f64)> {
    let times: Vec<f64> = match solver {
        SolverKind::Meso => {
            let mesh = CartesianMesh::cube(1.0, DEFAULT_VOXELS);
            let rates = RateTable::build(model, &mesh)?;
            pool(threads)?.install(|| {
                (0..replicas)
                    .into_par_iter()
                    .map(|r| binding_time_meso(model, &mesh, &rates, seed, r))
                    .collect()
            })
        }
        SolverKind::Micro => pool(threads)?.install(|| {
            (0..replicas)
                .into_par_iter()
                .map(|r| binding_time_micro(model, seed, r))
                .collect()
        }),
        other => {
            return Err(Error::InvalidParam(format!(
                "binding times need meso or micro, got {other}"
            )))
        }
    };
    Ok(mean_se(&times))
}

/// One point of the resolution-threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSweepRow {
    pub k_a: f64,
    pub voxels: usize,
    pub h: f64,
    pub w: f64,
    pub error: ErrorEstimate,
}

/// Lattice-vs-particle error on the final product of [`eps_sweep_file`]
/// across association rates and mesh resolutions.
pub fn eps_sweep(
    k_list: &[f64],
    voxel_list: &[usize],
    n_s1: u32,
    seed: u64,
    replicas: u64,
    threads: usize,
) -> Result<Vec<EpsSweepRow>> {
    let mut rows = Vec::new();
    for &k in k_list {
        let mut scenario = Scenario::from_file(&eps_sweep_file(k, n_s1))?;
        scenario.config.rng_seed = seed;
        let micro = trajectories(&run_ensemble(
            &scenario,
            SolverKind::Micro,
            &Prepared::new(&scenario, SolverKind::Micro)?,
            replicas,
            threads,
        )?);
        let product = scenario.model.species_id("S2").expect("preset species");
        for &n in voxel_list {
            scenario.config.voxels = Some([n; 3]);
            let prepared = Prepared::new(&scenario, SolverKind::Meso)?;
            let meso = trajectories(&run_ensemble(
                &scenario,
                SolverKind::Meso,
                &prepared,
                replicas,
                threads,
            )?);
            let res = prepared
                .rates
                .as_ref()
                .and_then(|r| r.pair.iter().flatten().next().copied());
            rows.push(EpsSweepRow {
                k_a: k,
                voxels: n,
                h: prepared.mesh.h,
                w: res.map_or(0.0, |r| r.w),
                error: compare(&meso, &micro, &ErrorMeasure::MaxNorm(product), seed),
            });
        }
    }
    Ok(rows)
}

/// Ensembles behind the splitting-step convergence study.
#[derive(Debug, Clone)]
pub struct DtConvergence {
    pub dts: Vec<f64>,
    pub hybrid: Vec<Vec<Vec<Vec<u32>>>>,
    pub micro: Vec<Vec<Vec<u32>>>,
    pub oracle: Vec<Vec<Vec<u32>>>,
}

impl DtConvergence {
    pub fn run(scenario: &Scenario, dts: &[f64], replicas: u64, threads: usize) -> Result<Self> {
        let ensemble = |sc: &Scenario, solver| -> Result<Vec<Vec<Vec<u32>>>> {
            Ok(trajectories(&run_ensemble(
                sc,
                solver,
                &Prepared::new(sc, solver)?,
                replicas,
                threads,
            )?))
        };
        let oracle = ensemble(scenario, SolverKind::BdOracle)?;
        let micro = ensemble(scenario, SolverKind::Micro)?;
        let mut hybrid = Vec::new();
        for &dt in dts {
            let mut sc = scenario.clone();
            sc.config.dt_split = dt;
            hybrid.push(ensemble(&sc, SolverKind::Hybrid)?);
        }
        Ok(Self {
            dts: dts.to_vec(),
            hybrid,
            micro,
            oracle,
        })
    }

    pub fn hybrid_error(&self, i: usize, measure: &ErrorMeasure, seed: u64) -> ErrorEstimate {
        compare(&self.hybrid[i], &self.oracle, measure, seed)
    }

    pub fn micro_error(&self, measure: &ErrorMeasure, seed: u64) -> ErrorEstimate {
        compare(&self.micro, &self.oracle, measure, seed)
    }

    /// `E(a) - E(b)` between two ensembles sharing the oracle reference, with
    /// a bootstrap standard error that accounts for the shared reference.
    pub fn difference(&self, a: &Trajectories, b: &Trajectories, measure: &ErrorMeasure, seed: u64) -> ErrorEstimate {
        let o = summarize(&self.oracle).mean;
        let error = measure.eval(&summarize(a).mean, &o) - measure.eval(&summarize(b).mean, &o);
        let mut rng = replica_rng(seed, u64::MAX - 1);
        let std_error = bootstrap_se_many(&[a, b, &self.oracle], BOOTSTRAP_RESAMPLES, &mut rng, |m| {
            measure.eval(&m[0], &m[2]) - measure.eval(&m[1], &m[2])
        });
        ErrorEstimate { error, std_error }
    }
}

/// One mesh resolution of a performance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub voxels: usize,
    pub h: f64,
    /// Mean wall-clock per replica.
    pub timing: PhaseTiming,
    /// Species that are not always mesoscopic under the scale plan.
    pub micro_species: usize,
    /// Mean (time, micro count, meso count) over replicas at each sync.
    pub census: Vec<(f64, f64, f64)>,
    pub error: Option<ErrorEstimate>,
}

/// Run `solver` at each cubic resolution in `voxel_list`, optionally
/// measuring the error against `reference`.
pub fn mesh_sweep(
    scenario: &Scenario,
    solver: SolverKind,
    voxel_list: &[usize],
    replicas: u64,
    threads: usize,
    reference: Option<(&Trajectories, &ErrorMeasure)>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &n in voxel_list {
        let mut sc = scenario.clone();
        sc.config.voxels = Some([n; 3]);
        let prepared = Prepared::new(&sc, solver)?;
        let out = run_ensemble(&sc, solver, &prepared, replicas, threads)?;
        let mut timing = PhaseTiming::default();
        for o in &out {
            timing += o.timing;
        }
        let r = out.len().max(1) as u32;
        timing = PhaseTiming {
            meso: timing.meso / r,
            micro: timing.micro / r,
            switching: timing.switching / r,
            total: timing.total / r,
        };
        let steps = out.iter().map(|o| o.census.len()).min().unwrap_or(0);
        let census = (0..steps)
            .map(|k| {
                let (mi, me) = out.iter().fold((0.0, 0.0), |(a, b), o| {
                    (a + o.census[k].micro as f64, b + o.census[k].meso as f64)
                });
                (out[0].census[k].time, mi / r as f64, me / r as f64)
            })
            .collect();
        let error = reference.map(|(refs, m)| compare(&trajectories(&out), refs, m, sc.config.rng_seed));
        rows.push(SweepRow {
            voxels: n,
            h: prepared.mesh.h,
            timing,
            micro_species: prepared.plan.micro_species().len(),
            census,
            error,
        });
    }
    Ok(rows)
}
