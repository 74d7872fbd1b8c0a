//! One line per criterion, `[PASS]` or `[FAIL]`, then the assertion.
//! Run with `--nocapture --test-threads=1` to read the report in order.


use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};

use hybrid_rdme::experiments::{
    binding_model, binding_time_stats, compare, mesh_sweep, mesh_sweep_file, rebind_histogram, rebind_times,
    run_ensemble, three_stage_chain, trajectories, two_resolution_file, DtConvergence, ErrorMeasure, Prepared,
    RebindSolver, RebindStudy, Scenario,
};
use hybrid_rdme::mesh::CartesianMesh;
use hybrid_rdme::micro::kernel::contact_survival;
use hybrid_rdme::model::{Model, Reaction, ReactionNetwork, SolverKind, SpeciesSpec};
use hybrid_rdme::oracle::pde::pde_survival;
use hybrid_rdme::partition::{build_split, PartitionOptions, ScalePolicy};
use hybrid_rdme::rates::{g3, h_star, meso_rate, resolution_error_w, Dim};
use hybrid_rdme::stats::l1_distance;

/// Worker count for ensembles: all available cores.
const THREADS: usize = 0;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("\n[{}] {id} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------- 1

/// Lattice-limit rate written out independently: `k_a 4 pi sigma D / (4 pi sigma D + k_a) / h^3`.
fn well_mixed_voxel_rate(k_a: f64, d: f64, sigma: f64, h: f64) -> f64 {
    let kd = 4.0 * PI * sigma * d;
    kd * k_a / (kd + k_a) / h.powi(3)
}

#[test]
fn c1_analytic_identities() {
    let mut worst_root = 0.0f64;
    for sigma in [1e-4, 1e-2, 1.0] {
        let hs = h_star(sigma, Dim::Three);
        worst_root = worst_root.max((g3(hs, sigma) * 4.0 * PI * sigma).abs());
    }

    let (k_a, d, sigma) = (1.0, 2.0, 0.005);
    let hs = h_star(sigma, Dim::Three);
    let at_star = meso_rate(k_a, d, sigma, hs).unwrap().k_meso;
    let star_rel = (at_star / (k_a / hs.powi(3)) - 1.0).abs();

    let mut worst_large = 0.0f64;
    for h in [1e4, 1e5, 1e6] {
        let got = meso_rate(k_a, d, sigma, h).unwrap().k_meso;
        worst_large = worst_large.max((got / well_mixed_voxel_rate(k_a, d, sigma, h) - 1.0).abs());
    }

    // below threshold iff the lattice rate lies in (k_a/h^3/(1+eps), k_a/h^3]
    let eps = 0.025;
    let mut band_violations = 0;
    let mut checked = 0;
    for k_a in [0.001, 0.01, 0.1, 1.0, 10.0] {
        for i in 0..400 {
            let h = hs * (1.0 + 1e-9) * 10f64.powf(i as f64 * 3.0 / 400.0);
            let w = resolution_error_w(k_a, d, sigma, h).w;
            let k = meso_rate(k_a, d, sigma, h).unwrap().k_meso;
            let upper = k_a / h.powi(3);
            let in_band = upper / (1.0 + eps) < k && k <= upper * (1.0 + 1e-14);
            if (w < eps) != in_band {
                band_violations += 1;
            }
            checked += 1;
        }
    }

    let pass = worst_root < 1e-12 && star_rel < 1e-12 && worst_large < 1e-4 && band_violations == 0;
    report(
        1,
        "analytic identities",
        pass,
        &format!(
            "|G(h*)| rel {worst_root:.1e} (tol 1e-12), rate at h* rel {star_rel:.1e}, large-h rel {worst_large:.1e} (tol 1e-4), W band {band_violations}/{checked} violations"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn c2_contact_survival_vs_radial_solver() {
    let (sigma, d) = (0.005, 2.0);
    let times: Vec<f64> = (0..=50).map(|i| 1e-7 * 10f64.powf(i as f64 * 5.0 / 50.0)).collect();
    let mut worst = Vec::new();
    for k_a in [0.1, 1.0] {
        let pde = pde_survival(sigma, sigma, k_a, d, &times).unwrap();
        let dev = times
            .iter()
            .zip(&pde)
            .map(|(&t, &p)| (contact_survival(k_a, d, sigma, t) - p).abs())
            .fold(0.0, f64::max);
        worst.push((k_a, dev));
    }
    let pass = worst.iter().all(|&(_, e)| e < 1e-3);
    let detail = worst
        .iter()
        .map(|(k, e)| format!("k_a={k}: {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        2,
        "contact survival vs radial solver",
        pass,
        &format!("max |dev| {detail} (tol 1e-3)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn c3_mean_binding_time() {
    let model = binding_model(0.005, 2.0, 1.0);
    let (meso, meso_se) = binding_time_stats(&model, SolverKind::Meso, 301, 20_000, THREADS).unwrap();
    let (micro, micro_se) = binding_time_stats(&model, SolverKind::Micro, 302, 40_000, THREADS).unwrap();
    let rel = (meso - micro).abs() / micro;
    let pass = rel < 0.02;
    report(
        3,
        "mean binding time",
        pass,
        &format!(
            "lattice {meso:.3} ± {meso_se:.3} vs particle {micro:.3} ± {micro_se:.3} (rel {:.2}%, tol 2%)",
            100.0 * rel
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn c4_rebinding_histograms() {
    let samples = 10_000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (k_a, check_meso) in [(1.0, true), (0.1, false)] {
        let study = RebindStudy::new(k_a);
        let hist =
            |solver, seed| rebind_histogram(&rebind_times(&study, solver, seed, samples, THREADS).unwrap(), &study);
        let micro = hist(RebindSolver::Micro, 401);
        let hybrid = l1_distance(&hist(RebindSolver::Hybrid, 402), &micro);
        pass &= hybrid < 0.05;
        let mut line = format!("k_a={k_a}: hybrid L1 {hybrid:.3} (< 0.05)");
        if check_meso {
            let meso = l1_distance(&hist(RebindSolver::Meso, 403), &micro);
            pass &= meso > 0.15;
            line += &format!(", lattice L1 {meso:.3} (> 0.15)");
        }
        lines.push(line);
    }
    report(4, "rebinding-time histograms", pass, &lines.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn c5_splitting_step_convergence() {
    let mut sc = Scenario::from_file(&three_stage_chain([0.1; 3], 50)).unwrap();
    sc.config.rng_seed = 501;
    let dts = [0.1, 0.01, 0.001];
    let study = DtConvergence::run(&sc, &dts, 200, THREADS).unwrap();
    let measure = ErrorMeasure::MaxNorm(sc.model.species_id("S4").unwrap());

    let errors: Vec<_> = (0..dts.len())
        .map(|i| study.hybrid_error(i, &measure, 510 + i as u64))
        .collect();
    let floor = study.micro_error(&measure, 520);
    let fine = dts.len() - 1;
    // E(fine) - E(coarse) < 0 at one-sided 95%
    let gain = study.difference(&study.hybrid[fine], &study.hybrid[0], &measure, 530);
    let improves = gain.error < -1.645 * gain.std_error;
    let to_floor = study.difference(&study.hybrid[fine], &study.micro, &measure, 540);
    let at_floor = to_floor.error.abs() <= 3.0 * to_floor.std_error;

    let listing = dts
        .iter()
        .zip(&errors)
        .map(|(dt, e)| format!("E({dt})={:.3}±{:.3}", e.error, e.std_error))
        .collect::<Vec<_>>()
        .join(" ");
    report(
        5,
        "splitting-step convergence",
        improves && at_floor,
        &format!(
            "{listing}, particle floor {:.3}±{:.3}; E(0.001)-E(0.1) = {:.3}±{:.3} (needs < -1.645 se), E(0.001)-floor = {:.3}±{:.3} (needs within 3 se)",
            floor.error, floor.std_error, gain.error, gain.std_error, to_floor.error, to_floor.std_error
        ),
    );
    assert!(improves && at_floor);
}

// ---------------------------------------------------------------- 6

fn always_micro(model: &Model, voxels: usize) -> Vec<String> {
    let mesh = CartesianMesh::cube(1.0, voxels);
    let plan = build_split(model, &mesh, &PartitionOptions::default()).unwrap();
    let mut names: Vec<String> = (0..model.n_species())
        .filter(|&s| plan.policy(s) == ScalePolicy::AlwaysMicro)
        .map(|s| model.species[s].name.clone())
        .collect();
    names.sort();
    names
}

fn species(names: &[&str]) -> Vec<SpeciesSpec> {
    names.iter().map(|n| SpeciesSpec::new(n, 1.0, 0.0025)).collect()
}

#[test]
fn c6_partitioner_worked_examples() {
    // S1 -> S11 + S12, S11 -> S11x, S11x + S12 -> S2
    let first = Model::compile(&ReactionNetwork {
        species: species(&["S1", "S11", "S12", "S11x", "S2"]),
        reactions: vec![
            Reaction::uni("S1", &["S11", "S12"], 10.0),
            Reaction::uni("S11", &["S11x"], 1.0),
            Reaction::bi("S11x", "S12", &["S2"], 1.0),
        ],
    })
    .unwrap();
    // S1 -> P + S12, P -> D + S11, S12 -> S12x, S11 + S12x -> S2
    let second = Model::compile(&ReactionNetwork {
        species: species(&["S1", "P", "D", "S11", "S12", "S12x", "S2"]),
        reactions: vec![
            Reaction::uni("S1", &["P", "S12"], 10.0),
            Reaction::uni("P", &["D", "S11"], 1.0),
            Reaction::uni("S12", &["S12x"], 1.0),
            Reaction::bi("S11", "S12x", &["S2"], 1.0),
        ],
    })
    .unwrap();
    let only_s1 = vec!["S1".to_owned()];
    let mut results = vec![
        ("first example", always_micro(&first, 20), only_s1.clone()),
        ("second example", always_micro(&second, 20), only_s1),
    ];

    // association-rate table of the three-stage chain; S_i is a particle iff k2^i is fast
    let cases = [
        [0.1, 0.1, 0.1],
        [0.001, 0.3, 0.001],
        [0.1, 0.3, 0.001],
        [0.1, 0.001, 0.2],
        [0.001, 0.001, 0.2],
        [0.001, 0.001, 0.001],
    ];
    for (i, k) in cases.iter().enumerate() {
        let sc = Scenario::from_file(&three_stage_chain(*k, 50)).unwrap();
        let expected: Vec<String> = (0..3)
            .filter(|&s| k[s] > 0.001)
            .map(|s| format!("S{}", s + 1))
            .collect();
        let got = always_micro(&sc.model, sc.config.voxels.unwrap()[0]);
        results.push((
            ["case 1", "case 2", "case 3", "case 4", "case 5", "case 6"][i],
            got,
            expected,
        ));
    }
    // case 6 has no particle species at all
    let case6 = Scenario::from_file(&three_stage_chain(cases[5], 50)).unwrap();
    let mesh = case6.mesh().unwrap();
    let plan = build_split(&case6.model, &mesh, &PartitionOptions::default()).unwrap();
    let all_meso = plan.micro_species().is_empty();

    let pass = all_meso && results.iter().all(|(_, got, want)| got == want);
    let detail = results
        .iter()
        .map(|(name, got, _)| format!("{name} {{{}}}", got.join(",")))
        .collect::<Vec<_>>()
        .join("; ");
    report(
        6,
        "partitioner worked examples",
        pass,
        &format!("{detail}; case 6 all lattice: {all_meso}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn c7_two_resolution_system() {
    let replicas = 40;
    let mut sc = Scenario::from_file(&two_resolution_file(30)).unwrap();
    sc.config.rng_seed = 701;
    let measure = ErrorMeasure::MeanAbs((0..sc.model.n_species()).collect());
    let bd = Prepared::new(&sc, SolverKind::BdOracle).unwrap();
    let mut oracle_sc = sc.clone();
    oracle_sc.config.rng_seed = 702;
    let oracle = trajectories(&run_ensemble(&oracle_sc, SolverKind::BdOracle, &bd, replicas, THREADS).unwrap());

    let mut rows = Vec::new();
    for n in [20, 40, 80] {
        let mut at = sc.clone();
        at.config.voxels = Some([n; 3]);
        let mut errs = Vec::new();
        for solver in [SolverKind::Meso, SolverKind::Hybrid] {
            let prepared = Prepared::new(&at, solver).unwrap();
            let runs = trajectories(&run_ensemble(&at, solver, &prepared, replicas, THREADS).unwrap());
            errs.push(compare(&runs, &oracle, &measure, 710 + n as u64));
        }
        rows.push((n, errs[0], errs[1]));
    }
    let best_meso = rows.iter().map(|r| r.1.error).fold(f64::INFINITY, f64::min);
    let worst_hybrid = rows.iter().map(|r| r.2.error).fold(0.0, f64::max);
    let pass = worst_hybrid < best_meso;
    let detail = rows
        .iter()
        .map(|(n, m, h)| {
            format!(
                "{n}^3: lattice {:.2}±{:.2} hybrid {:.2}±{:.2}",
                m.error, m.std_error, h.error, h.std_error
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report(
        7,
        "two-resolution system",
        pass,
        &format!("{detail}; worst hybrid {worst_hybrid:.2} < best lattice {best_meso:.2}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn c8_property_suites() {
    let suites: [(&str, fn()); 7] = [
        ("msd particles", properties::free_diffusion_msd_particles),
        ("msd brownian", properties::free_diffusion_msd_oracle),
        ("occupancy lattice", properties::uniform_equilibrium_occupancy_lattice),
        (
            "occupancy particles",
            properties::uniform_equilibrium_occupancy_particles,
        ),
        (
            "hard spheres",
            properties::hard_sphere_exclusion_between_reactive_particles,
        ),
        ("mass bookkeeping", properties::mass_bookkeeping_all_solvers),
        ("seed reproducibility", properties::seed_reproducibility_all_solvers),
    ];
    let failed: Vec<&str> = suites
        .iter()
        .filter(|(_, f)| catch_unwind(AssertUnwindSafe(f)).is_err())
        .map(|(n, _)| *n)
        .collect();
    let pass = failed.is_empty();
    let detail = if pass {
        format!("{} suites green", suites.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    report(8, "property suites", pass, &detail);
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn c9_mesh_sweep_accounting() {
    let voxels = [10, 16, 20, 30, 40];
    let sc = Scenario::from_file(&mesh_sweep_file()).unwrap();
    let rows = mesh_sweep(&sc, SolverKind::Hybrid, &voxels, 2, THREADS, None).unwrap();
    let mut accounting = true;
    for r in &rows {
        let parts = (r.timing.meso + r.timing.micro + r.timing.switching).as_secs_f64();
        let total = r.timing.total.as_secs_f64();
        accounting &= (parts - total).abs() <= 0.05 * total;
    }
    let census: Vec<usize> = rows.iter().map(|r| r.micro_species).collect();
    let monotone = census.windows(2).all(|w| w[1] <= w[0]);
    let timings = rows
        .iter()
        .map(|r| format!("{}^3 {:.2}s", r.voxels, r.timing.total.as_secs_f64()))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = accounting && monotone;
    report(
        9,
        "mesh sweep",
        pass,
        &format!("phase sums within 5%: {accounting}; particle species {census:?} non-increasing: {monotone}; wall clock {timings}"),
    );
    assert!(pass);
}
