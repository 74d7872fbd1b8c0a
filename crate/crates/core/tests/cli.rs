use std::fs;
use std::path::{Path, PathBuf};

use hybrid_rdme::cli::main_with_args;
use tempfile::TempDir;

fn bundled(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name);
    p.to_str().unwrap().to_owned()
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("hybrid-rdme").chain(args.iter().copied()))
}

fn write_model(dir: &TempDir, text: &str) -> String {
    let p = dir.path().join("model.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

/// `A + B -> C` with no producer for A or B.
fn bare_association(side: f64, k_a: f64) -> String {
    format!(
        r#"{{
  "domain": {{ "lower": [0, 0, 0], "upper": [{side}, {side}, {side}] }},
  "species": [
    {{ "name": "A", "D": 1, "sigma": 0.005, "initial_count": 5 }},
    {{ "name": "B", "D": 1, "sigma": 0.005, "initial_count": 5 }},
    {{ "name": "C", "D": 1, "sigma": 0.005 }}
  ],
  "reactions": [
    {{ "type": "bimolecular", "reactant_a": "A", "reactant_b": "B", "products": ["C"], "k_a": {k_a} }}
  ],
  "config": {{ "t_final": 0.1, "dt_split": 0.01 }}
}}"#
    )
}

fn read_table(path: PathBuf) -> (String, String, Vec<String>) {
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().map(str::to_owned);
    let comment = lines.next().unwrap();
    let header = lines.next().unwrap();
    (comment, header, lines.collect())
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["rates", "--model", "/nonexistent/model.json"]), 1);

    let broken = write_model(&dir, "{\n  \"domain\": {\n    \"lower\": [0, 0 0]\n}");
    assert_eq!(run(&["partition", "--model", &broken]), 1);

    let unresolvable = write_model(&dir, &bare_association(1.0, 1.0));
    assert_eq!(run(&["partition", "--model", &unresolvable]), 2);
    assert_eq!(run(&["partition", "--model", &unresolvable, "--force-meso"]), 0);
    assert_eq!(run(&["partition", "--model", &unresolvable, "--force-micro", "A,B"]), 0);

    // h = 0.001 lies far below the critical size for k_a = 100
    let too_fine = write_model(&dir, &bare_association(0.1, 100.0));
    let fine = ["--model", &too_fine, "--voxels", "100", "--force-meso"];
    assert_eq!(
        run(&[&["simulate", "--solver", "meso", "--replicas", "1"], &fine[..]].concat()),
        3
    );
    // tabulation reports the missing rate instead of failing
    assert_eq!(run(&[&["rates"], &fine[..]].concat()), 0);

    assert_eq!(
        run(&["rates", "--model", &bundled("two_resolution.json"), "--voxels", "40"]),
        0
    );
}

#[test]
fn csv_tables_carry_metadata_and_header() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = run(&[
        "simulate",
        "--model",
        &bundled("three_stage_chain.json"),
        "--solver",
        "meso",
        "--replicas",
        "2",
        "--threads",
        "1",
        "--seed",
        "5",
        "--out",
        out,
    ]);
    assert_eq!(code, 0);
    for (table, header) in [
        ("trajectories", "replica,time,species,count"),
        ("aggregate", "time,species,mean,std_error,replicas"),
        ("timing", "replica,meso_s,micro_s,switching_s,total_s"),
    ] {
        let (comment, head, rows) = read_table(dir.path().join(format!("{table}.csv")));
        assert!(comment.starts_with("# hybrid-rdme "), "{comment}");
        assert!(
            comment.contains("seed=5") && comment.contains("solver=meso"),
            "{comment}"
        );
        assert!(comment.ends_with(&format!("table={table}")), "{comment}");
        assert_eq!(head, header);
        assert!(!rows.is_empty());
    }
    let (_, _, timing) = read_table(dir.path().join("timing.csv"));
    assert_eq!(timing.len(), 2);
}

#[test]
fn replay_is_byte_identical() {
    let model = bundled("three_stage_chain.json");
    let dirs: Vec<TempDir> = (0..2).map(|_| TempDir::new().unwrap()).collect();
    for (i, d) in dirs.iter().enumerate() {
        // thread count must not matter
        let threads = if i == 0 { "1" } else { "3" };
        let code = run(&[
            "simulate",
            "--model",
            &model,
            "--solver",
            "hybrid",
            "--replicas",
            "3",
            "--threads",
            threads,
            "--seed",
            "17",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    for table in ["trajectories.csv", "aggregate.csv"] {
        let a = fs::read(dirs[0].path().join(table)).unwrap();
        let b = fs::read(dirs[1].path().join(table)).unwrap();
        assert!(a == b, "{table} differs between replays");
    }
}

#[test]
fn single_resolution_sweep_has_one_row() {
    let dir = TempDir::new().unwrap();
    let code = run(&[
        "sweep",
        "--model",
        &bundled("three_stage_chain.json"),
        "--solver",
        "hybrid",
        "--voxels",
        "20",
        "--replicas",
        "1",
        "--threads",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (_, header, rows) = read_table(dir.path().join("sweep.csv"));
    assert!(
        header.starts_with("voxels,h,meso_s,micro_s,switching_s,total_s,micro_species"),
        "{header}"
    );
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("20,"), "{}", rows[0]);
    assert!(dir.path().join("census.csv").exists());
}

#[test]
fn partition_of_bundled_chain() {
    let dir = TempDir::new().unwrap();
    let code = run(&[
        "partition",
        "--model",
        &bundled("three_stage_chain.json"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (_, header, rows) = read_table(dir.path().join("partition.csv"));
    assert_eq!(header, "species,policy,t_m,e_hybrid");
    let policy = |name: &str| {
        rows.iter()
            .find(|r| r.split(',').next() == Some(name))
            .map(|r| r.split(',').nth(1).unwrap().to_owned())
            .unwrap()
    };
    for s in ["S1", "S2", "S3"] {
        assert_eq!(policy(s), "always-micro");
    }
    assert_eq!(policy("S4"), "always-meso");
    for s in ["S11", "S12", "S21", "S22", "S31", "S32"] {
        assert!(policy(s).starts_with("micro-until-age"), "{s}");
    }
    let (_, _, resolution) = read_table(dir.path().join("resolution.csv"));
    assert_eq!(resolution.len(), 3);
    assert!(fs::read_to_string(dir.path().join("partition.txt"))
        .unwrap()
        .contains("under-resolved"));
}

#[test]
fn pde_oracle_prints_to_stdout() {
    assert_eq!(
        run(&["oracle", "pde", "--sigma", "0.005", "--diffusion", "2", "--ka", "1"]),
        0
    );
}
