//! Command-line front end: argument parsing, run manifests and CSV output.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    binding_model, binding_time_stats, eps_sweep, mesh_sweep, preset_file, rebind_histogram, rebind_times,
    run_ensemble, trajectories, DtConvergence, ErrorMeasure, Prepared, RebindSolver, RebindStudy, ReplicaOutput,
    Scenario, SweepRow, PRESETS, REBIND_BINS, REBIND_T_MIN,
};
use crate::hybrid::estimate_e_hybrid;
use crate::micro::kernel::contact_survival;
use crate::model::{ModelFile, ReactionKind, SolverKind};
use crate::oracle::pde::pde_survival;
use crate::partition::{build_split, t_m, PartitionOptions, ScalePolicy};
use crate::stats::{l1_distance, summarize};

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-rdme",
    version,
    about = "Hybrid lattice/particle stochastic reaction-diffusion simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate lattice rates and resolution indicators per bimolecular reaction.
    Rates(ModelArgs),
    /// Assign every species a scale and report the split.
    Partition(ModelArgs),
    /// Simulate a model or run a named experiment.
    Simulate(RunArgs),
    /// Repeat a simulation over several mesh resolutions with timing.
    Sweep(SweepArgs),
    /// Reference solutions for testing.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt_split: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub kfactor: Option<f64>,
    /// Voxels per axis: one value for a cube or three values.
    #[arg(long, value_delimiter = ',')]
    pub voxels: Vec<usize>,
    /// Keep under-resolved reactions without a dissociation source on the lattice.
    #[arg(long)]
    pub force_meso: bool,
    /// Species forced to the particle scale.
    #[arg(long, value_delimiter = ',')]
    pub force_micro: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_solver)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Replicas of the particle oracle used as error reference (0 skips the error column).
    #[arg(long, default_value_t = 0)]
    pub oracle_replicas: u64,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Survival of an isolated pair from the radial diffusion solver.
    Pde(PdeArgs),
    /// Brute-force particle simulation of a model.
    Bd(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PdeArgs {
    #[arg(long, default_value_t = 0.005)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    pub diffusion: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ka: f64,
    /// Initial separation; defaults to contact.
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub t_max: f64,
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_solver(s: &str) -> std::result::Result<SolverKind, String> {
    s.parse::<SolverKind>().map_err(|e| e.to_string())
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Rates(args) => cmd_rates(args),
        Command::Partition(args) => cmd_partition(args),
        Command::Simulate(args) => cmd_simulate(args, None),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Oracle(OracleCommand::Pde(args)) => cmd_pde(args),
        Command::Oracle(OracleCommand::Bd(args)) => cmd_simulate(args, Some(SolverKind::BdOracle)),
    }
}

/// A table with a provenance comment line.
struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

struct Meta {
    seed: u64,
    solver: String,
}

fn emit(out: Option<&Path>, meta: &Meta, table: &Table) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Box::new(File::create(dir.join(format!("{}.csv", table.name)))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = io::BufWriter::new(sink);
    writeln!(
        sink,
        "# hybrid-rdme {} seed={} solver={} table={}",
        env!("CARGO_PKG_VERSION"),
        meta.seed,
        meta.solver,
        table.name
    )?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x:.9e}")
}

/// Model file from `--model`, else from a model-backed `--experiment`.
fn load_file(args: &ModelArgs) -> Result<ModelFile> {
    if let Some(path) = &args.model {
        return ModelFile::load(path);
    }
    match &args.experiment {
        Some(name) => preset_file(name).ok_or_else(|| {
            Error::InvalidParam(format!(
                "experiment '{name}' has no model; known presets: {}",
                PRESETS.join(", ")
            ))
        }),
        None => Err(Error::InvalidParam("one of --model or --experiment is required".into())),
    }
}

fn voxel_override(v: &[usize]) -> Result<Option<[usize; 3]>> {
    match v {
        [] => Ok(None),
        [n] => Ok(Some([*n; 3])),
        [a, b, c] => Ok(Some([*a, *b, *c])),
        _ => Err(Error::InvalidParam("--voxels takes one or three values".into())),
    }
}

/// Apply command-line overrides; all of them are checked before any work starts.
fn scenario(args: &ModelArgs, voxels: bool) -> Result<Scenario> {
    let mut file = load_file(args)?;
    let c = &mut file.config;
    if let Some(s) = args.seed {
        c.rng_seed = s;
    }
    if let Some(dt) = args.dt_split {
        c.dt_split = dt;
    }
    if let Some(e) = args.epsilon {
        c.epsilon = e;
    }
    if let Some(k) = args.kfactor {
        c.k_factor = k;
    }
    if voxels {
        if let Some(v) = voxel_override(&args.voxels)? {
            c.voxels = Some(v);
        }
    }
    let mut sc = Scenario::from_file(&file)?;
    sc.partition.force_meso = args.force_meso;
    for name in &args.force_micro {
        let id = sc
            .model
            .species_id(name)
            .ok_or_else(|| Error::InvalidParam(format!("--force-micro: unknown species '{name}'")))?;
        sc.partition.force_micro.push(id);
    }
    Ok(sc)
}

fn threads(t: Option<usize>) -> usize {
    t.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn cmd_rates(args: &ModelArgs) -> Result<()> {
    let sc = scenario(args, true)?;
    let mesh = sc.mesh()?;
    // tabulation only: never fail on unresolvable reactions
    let opts = PartitionOptions {
        force_meso: true,
        ..sc.partition.clone()
    };
    let plan = build_split(&sc.model, &mesh, &opts)?;
    let mut t = Table::new(
        "rates",
        &[
            "reaction",
            "k_a",
            "sigma",
            "diffusion",
            "h",
            "h_star",
            "k_meso",
            "w",
            "resolved",
        ],
    );
    for r in &plan.reactions {
        t.push(vec![
            sc.model.reactions[r.reaction].to_string(),
            f(r.k_a),
            f(r.sigma),
            f(r.d),
            f(r.h),
            f(r.h_star),
            r.k_meso.map_or("nan".into(), f),
            f(r.w),
            r.resolved.to_string(),
        ]);
    }
    let meta = Meta {
        seed: sc.config.rng_seed,
        solver: "none".into(),
    };
    emit(args.out.as_deref(), &meta, &t)
}

fn cmd_partition(args: &ModelArgs) -> Result<()> {
    let sc = scenario(args, true)?;
    let mesh = sc.mesh()?;
    let plan = build_split(&sc.model, &mesh, &sc.partition)?;
    let model = &sc.model;

    let mut text = String::new();
    text.push_str(&format!("mesh {:?} voxels, h = {:.6e}\n", mesh.dims, mesh.h));
    for r in &plan.reactions {
        text.push_str(&format!(
            "  {:<28} W = {:.4e}  h* = {:.4e}  {}\n",
            model.reactions[r.reaction].to_string(),
            r.w,
            r.h_star,
            if r.resolved { "resolved" } else { "under-resolved" }
        ));
    }
    let micro: Vec<&str> = plan
        .micro_species()
        .iter()
        .map(|&s| model.species[s].name.as_str())
        .collect();
    text.push_str(&format!("micro species: {{{}}}\n", micro.join(", ")));

    let mut t = Table::new("partition", &["species", "policy", "t_m", "e_hybrid"]);
    for (s, spec) in model.species.iter().enumerate() {
        let policy = plan.policy(s);
        let residency = match policy {
            ScalePolicy::MicroUntilAge(age) => f(age),
            ScalePolicy::AlwaysMicro => "inf".into(),
            ScalePolicy::AlwaysMeso => f(0.0),
        };
        // worst remaining rebinding error among flagged reactions this species enters
        let e = plan
            .flagged()
            .filter(|r| matches!(model.kinds[r.reaction], ReactionKind::Bi { a, b, .. } if a == s || b == s))
            .map(|r| match policy {
                ScalePolicy::MicroUntilAge(age) => estimate_e_hybrid(r.k_a, r.d, r.sigma, r.h, age),
                ScalePolicy::AlwaysMicro => 0.0,
                ScalePolicy::AlwaysMeso => r.w,
            })
            .fold(0.0, f64::max);
        t.push(vec![spec.name.clone(), policy.to_string(), residency, f(e)]);
    }
    let mut w = Table::new(
        "resolution",
        &["reaction", "w", "h", "h_star", "resolved", "t_m_default"],
    );
    for r in &plan.reactions {
        w.push(vec![
            model.reactions[r.reaction].to_string(),
            f(r.w),
            f(r.h),
            f(r.h_star),
            r.resolved.to_string(),
            f(t_m(mesh.voxel_volume(), r.d, sc.partition.k_factor)),
        ]);
    }
    let meta = Meta {
        seed: sc.config.rng_seed,
        solver: "none".into(),
    };
    print!("{text}");
    if let Some(dir) = &args.out {
        emit(Some(dir), &meta, &t)?;
        emit(Some(dir), &meta, &w)?;
        std::fs::write(dir.join("partition.txt"), &text)?;
    } else {
        emit(None, &meta, &t)?;
    }
    Ok(())
}

fn cmd_simulate(args: &RunArgs, forced: Option<SolverKind>) -> Result<()> {
    let m = &args.model;
    if m.model.is_none() {
        match m.experiment.as_deref() {
            Some("rebind") => return exp_rebind(args),
            Some("binding-time") => return exp_binding(args),
            Some("eps-sweep") => return exp_eps(args),
            Some("dt-convergence") => return exp_dt(args),
            _ => {}
        }
    }
    let sc = scenario(m, true)?;
    let solver = forced.or(args.solver).unwrap_or(sc.config.solver);
    let replicas = args.replicas.unwrap_or(8);
    let prepared = Prepared::new(&sc, solver)?;
    let out = run_ensemble(&sc, solver, &prepared, replicas, threads(args.threads))?;
    let meta = Meta {
        seed: sc.config.rng_seed,
        solver: solver.to_string(),
    };
    write_ensemble(m.out.as_deref(), &meta, &sc, &out)
}

fn write_ensemble(out: Option<&Path>, meta: &Meta, sc: &Scenario, runs: &[ReplicaOutput]) -> Result<()> {
    let names: Vec<&str> = sc.model.species.iter().map(|s| s.name.as_str()).collect();
    let times = &sc.config.sample_times;
    let summary = summarize(&trajectories(runs));
    let mut agg = Table::new("aggregate", &["time", "species", "mean", "std_error", "replicas"]);
    for (k, &t) in times.iter().enumerate() {
        for (s, name) in names.iter().enumerate() {
            agg.push(vec![
                f(t),
                name.to_string(),
                f(summary.mean[k][s]),
                f(summary.std_error[k][s]),
                runs.len().to_string(),
            ]);
        }
    }
    if out.is_none() {
        return emit(None, meta, &agg);
    }
    let mut traj = Table::new("trajectories", &["replica", "time", "species", "count"]);
    let mut timing = Table::new("timing", &["replica", "meso_s", "micro_s", "switching_s", "total_s"]);
    for (r, run) in runs.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            for (s, name) in names.iter().enumerate() {
                traj.push(vec![
                    r.to_string(),
                    f(t),
                    name.to_string(),
                    run.counts[k][s].to_string(),
                ]);
            }
        }
        let tm = run.timing;
        timing.push(vec![
            r.to_string(),
            f(tm.meso.as_secs_f64()),
            f(tm.micro.as_secs_f64()),
            f(tm.switching.as_secs_f64()),
            f(tm.total.as_secs_f64()),
        ]);
    }
    emit(out, meta, &traj)?;
    emit(out, meta, &agg)?;
    emit(out, meta, &timing)
}

fn exp_rebind(args: &RunArgs) -> Result<()> {
    let seed = args.model.seed.unwrap_or(1);
    let replicas = args.replicas.unwrap_or(10_000);
    let th = threads(args.threads);
    let mut hist = Table::new("rebind", &["k_a", "solver", "bin", "t_lo", "t_hi", "mass"]);
    let mut summary = Table::new("rebind_summary", &["k_a", "solver", "l1_vs_micro", "samples"]);
    for k_a in [1.0, 0.1] {
        let mut study = RebindStudy::new(k_a);
        if let Some(v) = voxel_override(&args.model.voxels)? {
            study.voxels = v[0];
        }
        if let Some(dt) = args.model.dt_split {
            study.dt_split = dt;
        }
        let mut reference = Vec::new();
        for (label, solver) in [
            ("micro", RebindSolver::Micro),
            ("meso", RebindSolver::Meso),
            ("hybrid", RebindSolver::Hybrid),
        ] {
            let h = rebind_histogram(&rebind_times(&study, solver, seed, replicas, th)?, &study);
            if solver == RebindSolver::Micro {
                reference = h.clone();
            }
            let (a, b) = (REBIND_T_MIN.log10(), study.t_max.log10());
            for (i, m) in h.iter().enumerate() {
                let (lo, hi) = if i < REBIND_BINS {
                    let w = (b - a) / REBIND_BINS as f64;
                    (10f64.powf(a + w * i as f64), 10f64.powf(a + w * (i + 1) as f64))
                } else {
                    (study.t_max, f64::INFINITY)
                };
                hist.push(vec![f(k_a), label.into(), i.to_string(), f(lo), f(hi), f(*m)]);
            }
            summary.push(vec![
                f(k_a),
                label.into(),
                f(l1_distance(&h, &reference)),
                replicas.to_string(),
            ]);
        }
    }
    let meta = Meta {
        seed,
        solver: "micro,meso,hybrid".into(),
    };
    if let Some(dir) = &args.model.out {
        emit(Some(dir), &meta, &hist)?;
    }
    emit(args.model.out.as_deref(), &meta, &summary)
}

fn exp_binding(args: &RunArgs) -> Result<()> {
    let seed = args.model.seed.unwrap_or(1);
    let replicas = args.replicas.unwrap_or(10_000);
    let model = binding_model(0.005, 2.0, 1.0);
    let mut t = Table::new("binding_time", &["solver", "mean", "std_error", "replicas"]);
    for solver in [SolverKind::Micro, SolverKind::Meso] {
        let (m, se) = binding_time_stats(&model, solver, seed, replicas, threads(args.threads))?;
        t.push(vec![solver.to_string(), f(m), f(se), replicas.to_string()]);
    }
    let meta = Meta {
        seed,
        solver: "micro,meso".into(),
    };
    emit(args.model.out.as_deref(), &meta, &t)
}

fn exp_eps(args: &RunArgs) -> Result<()> {
    let seed = args.model.seed.unwrap_or(1);
    let replicas = args.replicas.unwrap_or(50);
    let voxels = if args.model.voxels.is_empty() {
        vec![10, 25, 50]
    } else {
        args.model.voxels.clone()
    };
    let rows = eps_sweep(
        &[0.001, 0.01, 0.1, 1.0],
        &voxels,
        30,
        seed,
        replicas,
        threads(args.threads),
    )?;
    let mut t = Table::new("eps_sweep", &["k_a", "voxels", "h", "w", "error", "std_error"]);
    for r in rows {
        t.push(vec![
            f(r.k_a),
            r.voxels.to_string(),
            f(r.h),
            f(r.w),
            f(r.error.error),
            f(r.error.std_error),
        ]);
    }
    let meta = Meta {
        seed,
        solver: "meso,micro".into(),
    };
    emit(args.model.out.as_deref(), &meta, &t)
}

fn exp_dt(args: &RunArgs) -> Result<()> {
    let sc = scenario(&args.model, true)?;
    let seed = sc.config.rng_seed;
    let replicas = args.replicas.unwrap_or(200);
    let dts = [0.1, 0.01, 0.001];
    let study = DtConvergence::run(&sc, &dts, replicas, threads(args.threads))?;
    let measure = ErrorMeasure::MaxNorm(sc.model.species_id("S4").unwrap_or(sc.model.n_species() - 1));
    let mut t = Table::new(
        "dt_convergence",
        &["solver", "dt_split", "error", "std_error", "replicas"],
    );
    for (i, &dt) in dts.iter().enumerate() {
        let e = study.hybrid_error(i, &measure, seed);
        t.push(vec![
            "hybrid".into(),
            f(dt),
            f(e.error),
            f(e.std_error),
            replicas.to_string(),
        ]);
    }
    let e = study.micro_error(&measure, seed);
    t.push(vec![
        "micro".into(),
        "nan".into(),
        f(e.error),
        f(e.std_error),
        replicas.to_string(),
    ]);
    let meta = Meta {
        seed,
        solver: "hybrid,micro,bd-oracle".into(),
    };
    emit(args.model.out.as_deref(), &meta, &t)
}

/// Default resolutions of the mesh sweep.
pub const DEFAULT_SWEEP_VOXELS: [usize; 5] = [10, 16, 20, 30, 40];

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let m = &args.run.model;
    let sc = scenario(m, false)?;
    let solver = args.run.solver.unwrap_or(SolverKind::Hybrid);
    let voxels = if m.voxels.is_empty() {
        DEFAULT_SWEEP_VOXELS.to_vec()
    } else {
        m.voxels.clone()
    };
    let replicas = args.run.replicas.unwrap_or(4);
    let th = threads(args.run.threads);
    let oracle = if args.oracle_replicas > 0 {
        let prepared = Prepared::new(&sc, SolverKind::BdOracle)?;
        Some(trajectories(&run_ensemble(
            &sc,
            SolverKind::BdOracle,
            &prepared,
            args.oracle_replicas,
            th,
        )?))
    } else {
        None
    };
    let measure = ErrorMeasure::MeanAbs((0..sc.model.n_species()).collect());
    let rows = mesh_sweep(
        &sc,
        solver,
        &voxels,
        replicas,
        th,
        oracle.as_deref().map(|o| (o, &measure)),
    )?;
    let meta = Meta {
        seed: sc.config.rng_seed,
        solver: solver.to_string(),
    };
    let (sweep, census) = sweep_tables(&rows);
    if let Some(dir) = &m.out {
        emit(Some(dir), &meta, &census)?;
    }
    emit(m.out.as_deref(), &meta, &sweep)
}

fn sweep_tables(rows: &[SweepRow]) -> (Table, Table) {
    let mut sweep = Table::new(
        "sweep",
        &[
            "voxels",
            "h",
            "meso_s",
            "micro_s",
            "switching_s",
            "total_s",
            "micro_species",
            "error",
            "error_se",
        ],
    );
    let mut census = Table::new("census", &["voxels", "time", "micro_mean", "meso_mean"]);
    for r in rows {
        let (e, se) = r
            .error
            .map_or(("nan".into(), "nan".into()), |e| (f(e.error), f(e.std_error)));
        sweep.push(vec![
            r.voxels.to_string(),
            f(r.h),
            f(r.timing.meso.as_secs_f64()),
            f(r.timing.micro.as_secs_f64()),
            f(r.timing.switching.as_secs_f64()),
            f(r.timing.total.as_secs_f64()),
            r.micro_species.to_string(),
            e,
            se,
        ]);
        for &(t, mi, me) in &r.census {
            census.push(vec![r.voxels.to_string(), f(t), f(mi), f(me)]);
        }
    }
    (sweep, census)
}

fn cmd_pde(args: &PdeArgs) -> Result<()> {
    if !(args.t_min > 0.0 && args.t_max > args.t_min && args.points >= 2) {
        return Err(Error::InvalidParam("need 0 < t_min < t_max and points >= 2".into()));
    }
    let r0 = args.r0.unwrap_or(args.sigma);
    let ratio = (args.t_max / args.t_min).ln() / (args.points - 1) as f64;
    let times: Vec<f64> = (0..args.points)
        .map(|i| args.t_min * (ratio * i as f64).exp())
        .collect();
    let s = pde_survival(r0, args.sigma, args.ka, args.diffusion, &times)?;
    let mut t = Table::new("pde_survival", &["time", "survival", "contact_closed_form"]);
    for (tt, sv) in times.iter().zip(s) {
        let closed = if r0 == args.sigma {
            f(contact_survival(args.ka, args.diffusion, args.sigma, *tt))
        } else {
            "nan".into()
        };
        t.push(vec![f(*tt), f(sv), closed]);
    }
    let meta = Meta {
        seed: 0,
        solver: "pde".into(),
    };
    emit(args.out.as_deref(), &meta, &t)
}
