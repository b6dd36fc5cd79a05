use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qensemble::evolution::{EvolutionConfig, Population};
use qensemble::harness::parse_results_csv;
use qensemble::{Circuit, Ensemble, FitnessReport};

fn qensemble(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qensemble"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL_CONFIG: &str = "population_size = 20\ngenerations = 50\ngate_cap = 6\nseed = 3\n";

fn trivial_problem(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let config = dir.join("config.toml");
    let tests = dir.join("tests.jsonl");
    fs::write(&config, SMALL_CONFIG).unwrap();
    fs::write(&tests, "{\"init_gates\":[],\"expected\":0}\n").unwrap();
    (config, tests)
}

fn listing(text: &str) -> Vec<f64> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,fitness"));
    lines
        .enumerate()
        .map(|(i, l)| {
            let (idx, f) = l.split_once(',').unwrap();
            assert_eq!(idx.parse::<usize>().unwrap(), i);
            f.parse().unwrap()
        })
        .collect()
}

/// Population of empty circuits: every member measures |00> with certainty.
fn no_op_population(dir: &Path, size: usize) -> std::path::PathBuf {
    let config = EvolutionConfig {
        ensemble_size: size,
        ..EvolutionConfig::desk_scale()
    };
    let member = Circuit::empty(config.num_qubits, config.measured_qubits.clone()).unwrap();
    let individuals: Vec<_> = (0..4)
        .map(|_| Ensemble::new(vec![member.clone(); size]).unwrap())
        .collect();
    let pop = Population {
        config,
        generation: 0,
        fitnesses: vec![FitnessReport::from_per_test(vec![1.0]); individuals.len()],
        individuals,
    };
    let file = dir.join(format!("noop_n{size}.json"));
    pop.save(&file).unwrap();
    file
}

#[test]
fn evolve_solves_trivial_problem_and_reports_progress() {
    let dir = tempfile::tempdir().unwrap();
    let (config, tests) = trivial_problem(dir.path());
    let out_file = dir.path().join("pop.json");
    let out = qensemble(&[
        "evolve",
        "--config",
        path(&config),
        "--tests",
        path(&tests),
        "--population",
        path(&out_file),
    ]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 51);
    assert!(text
        .lines()
        .all(|l| l.contains("best") && l.contains("mean")));

    let pop = Population::load(&out_file).unwrap();
    assert_eq!(pop.individuals.len(), 20);
    assert!(pop.best().unwrap().1 >= 0.99);
}

#[test]
fn evolve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (config, tests) = trivial_problem(dir.path());
    let files: Vec<_> = ["a.json", "b.json"]
        .iter()
        .map(|name| {
            let f = dir.path().join(name);
            stdout(&qensemble(&[
                "evolve",
                "--config",
                path(&config),
                "--tests",
                path(&tests),
                "--population",
                path(&f),
                "--ensemble-size",
                "3",
                "--quiet",
            ]));
            fs::read(f).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
}

#[test]
fn missing_test_file_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("pop.json");
    let out = qensemble(&[
        "evolve",
        "--tests",
        path(&dir.path().join("absent.jsonl")),
        "--population",
        path(&out_file),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!out_file.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn malformed_test_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let tests = dir.path().join("tests.jsonl");
    fs::write(
        &tests,
        "{\"init_gates\":[],\"expected\":0}\n{\"expected\":1}\n",
    )
    .unwrap();
    let out_file = dir.path().join("pop.json");
    let out = qensemble(&[
        "evolve",
        "--tests",
        path(&tests),
        "--population",
        path(&out_file),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tests.jsonl:2"));
    assert!(!out_file.exists());
}

#[test]
fn evaluate_no_op_population() {
    let dir = tempfile::tempdir().unwrap();
    let pop = no_op_population(dir.path(), 3);
    let tests = dir.path().join("tests.jsonl");
    fs::write(
        &tests,
        "{\"init_gates\":[],\"expected\":0}\n{\"features\":[0,0,0,0],\"expected\":0}\n",
    )
    .unwrap();
    let ideal = listing(&stdout(&qensemble(&[
        "evaluate",
        "--population",
        path(&pop),
        "--tests",
        path(&tests),
    ])));
    assert_eq!(ideal, vec![1.0; 4]);

    let zero = dir.path().join("zero.toml");
    fs::write(
        &zero,
        "name = \"zero\"\np1 = 0.0\np2 = 0.0\nreadout_flip_0to1 = 0.0\nreadout_flip_1to0 = 0.0\n",
    )
    .unwrap();
    let args = [
        "evaluate",
        "--population",
        path(&pop),
        "--tests",
        path(&tests),
        "--noise",
        path(&zero),
    ];
    let noiseless = listing(&stdout(&qensemble(&args)));
    assert!(ideal
        .iter()
        .zip(&noiseless)
        .all(|(a, b)| (a - b).abs() < 1e-10));

    let coin = dir.path().join("coin.toml");
    fs::write(
        &coin,
        "name = \"coin\"\np1 = 0.0\np2 = 0.0\nreadout_flip_0to1 = 0.5\nreadout_flip_1to0 = 0.5\n",
    )
    .unwrap();
    let out_file = dir.path().join("listing.csv");
    let args = [
        "evaluate",
        "--population",
        path(&pop),
        "--tests",
        path(&tests),
        "--noise",
        path(&coin),
        "--out",
        path(&out_file),
    ];
    stdout(&qensemble(&args));
    let uniform = listing(&fs::read_to_string(&out_file).unwrap());
    assert!(
        uniform.iter().all(|f| (f - 0.25).abs() < 1e-12),
        "{uniform:?}"
    );
}

#[test]
fn unknown_noise_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let pop = no_op_population(dir.path(), 1);
    let tests = dir.path().join("tests.jsonl");
    fs::write(&tests, "{\"init_gates\":[],\"expected\":0}\n").unwrap();
    let out = qensemble(&[
        "evaluate",
        "--population",
        path(&pop),
        "--tests",
        path(&tests),
        "--noise",
        "kyoto",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("balanced") && err.contains("harsh"), "{err}");
}

#[test]
fn shots_mode_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let pop = no_op_population(dir.path(), 3);
    let tests = dir.path().join("tests.jsonl");
    fs::write(&tests, "{\"init_gates\":[],\"expected\":0}\n").unwrap();
    let args = [
        "evaluate",
        "--population",
        path(&pop),
        "--tests",
        path(&tests),
        "--mode",
        "shots:100",
        "--seed",
        "5",
    ];
    assert_eq!(listing(&stdout(&qensemble(&args))), vec![1.0; 4]);
    let bad = qensemble(&[
        "evaluate",
        "--population",
        path(&pop),
        "--tests",
        path(&tests),
        "--mode",
        "shots:x",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn encode_compare_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    stdout(&qensemble(&[
        "encode-dataset",
        "--seed",
        "9",
        "--out-dir",
        path(&data),
    ]));
    let evo = data.join("evolution_tests.jsonl");
    let eval = data.join("evaluation_tests.jsonl");
    assert_eq!(fs::read_to_string(&evo).unwrap().lines().count(), 100);
    assert_eq!(fs::read_to_string(&eval).unwrap().lines().count(), 50);

    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        "population_size = 12\ngenerations = 3\ngate_cap = 4\n",
    )
    .unwrap();
    let evolve = |n: &str| {
        let f = dir.path().join(format!("pop{n}.json"));
        let args = [
            "evolve",
            "--config",
            path(&config),
            "--tests",
            path(&evo),
            "--population",
            path(&f),
            "--ensemble-size",
            n,
            "--quiet",
        ];
        stdout(&qensemble(&args));
        f
    };
    let (base, het) = (evolve("1"), evolve("3"));

    let mut rows = Vec::new();
    for noise in [None, Some("quiet")] {
        let out = dir
            .path()
            .join(format!("row_{}.csv", noise.unwrap_or("ideal")));
        let mut args = vec![
            "compare",
            "--population",
            path(&het),
            "--baseline",
            path(&base),
            "--ensemble-size",
            "3",
            "--tests",
            path(&eval),
            "--out",
            path(&out),
        ];
        if let Some(n) = noise {
            args.extend(["--noise", n]);
        }
        stdout(&qensemble(&args));
        rows.push(out);
    }

    let report_dir = dir.path().join("report");
    let mut args = vec!["report", "--out-dir", path(&report_dir)];
    args.extend(rows.iter().map(|r| path(r)));
    let table = stdout(&qensemble(&args));
    assert!(table.lines().any(|l| l.starts_with("quiet")));

    let merged = parse_results_csv(
        &fs::read_to_string(report_dir.join("results.csv")).unwrap(),
        "results.csv",
    )
    .unwrap();
    assert_eq!(merged.len(), 2);
    assert_eq!(merged[0].backend, "ideal");
    assert!(merged
        .iter()
        .all(|r| r.n == 3 && (0.0..=1.0).contains(&r.p_value)));
    assert_eq!(
        fs::read_to_string(report_dir.join("results.txt")).unwrap(),
        table
    );
}

#[test]
fn compare_rejects_non_singleton_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let het = no_op_population(dir.path(), 3);
    let tests = dir.path().join("tests.jsonl");
    fs::write(&tests, "{\"init_gates\":[],\"expected\":0}\n").unwrap();
    let out_file = dir.path().join("row.csv");
    let args = [
        "compare",
        "--population",
        path(&het),
        "--baseline",
        path(&het),
        "--ensemble-size",
        "3",
        "--tests",
        path(&tests),
        "--out",
        path(&out_file),
    ];
    assert_eq!(qensemble(&args).status.code(), Some(2));
    assert!(!out_file.exists());
}
