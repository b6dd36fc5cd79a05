//! The examples in docs/formats.md, read through the public API.

use std::f64::consts::PI;
use std::io::Cursor;

use qensemble::data::{bundled_dataset, encode_all, EncodingSpec, Species, INVALID_CLASS};
use qensemble::ensemble::{read_test_cases, write_test_cases, TestInit};
use qensemble::evolution::{EvolutionConfig, Population};
use qensemble::harness::{parse_results_csv, results_csv, SplitTests};
use qensemble::{EvalMode, Gate, NoiseModel};

fn doc() -> String {
    std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../docs/formats.md"
    ))
    .unwrap()
}

/// Fenced blocks of one language, in document order.
fn blocks(text: &str, lang: &str) -> Vec<String> {
    let fence = format!("```{lang}\n");
    text.split(fence.as_str())
        .skip(1)
        .map(|rest| rest.split("```").next().unwrap().to_string())
        .collect()
}

#[test]
fn documented_test_cases_parse() {
    let json = blocks(&doc(), "json");
    let gates: Vec<Gate> = json[0]
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(gates, vec![Gate::u(0, PI / 2.0, 0.0, PI), Gate::cx(0, 1)]);

    let tests = read_test_cases(Cursor::new(&json[1]), "doc").unwrap();
    assert_eq!(tests.len(), 2);
    assert!(matches!(&tests[0].init, TestInit::Features(f) if f.len() == 4));
    assert_eq!(tests[1].expected, 1);

    let mut out = Vec::new();
    write_test_cases(&mut out, &tests).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), json[1]);
}

#[test]
fn documented_noise_and_config_parse() {
    let toml = blocks(&doc(), "toml");
    let noise = NoiseModel::from_toml_str(&toml[0], "doc").unwrap();
    assert_eq!(noise, NoiseModel::preset("balanced").unwrap());

    let config = EvolutionConfig::from_toml_str(&toml[1], "doc").unwrap();
    assert_eq!(config, EvolutionConfig::default());
    assert_eq!(config.eval_mode, EvalMode::Exact);
    assert_eq!(config.elite_count(), 6);
}

#[test]
fn documented_preset_table_matches_shipped_presets() {
    let text = doc();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| name"))
        .map(|l| l.trim_matches('|').split('|').map(str::trim).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    for (row, model) in rows.iter().zip(NoiseModel::presets()) {
        let nums: Vec<f64> = row[1..].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(row[0], model.name);
        assert_eq!(
            nums,
            vec![
                model.p1,
                model.p2,
                model.readout_flip_0to1,
                model.readout_flip_1to0
            ]
        );
    }
}

#[test]
fn documented_results_row_parses() {
    let csv = doc()
        .lines()
        .skip_while(|l| !l.starts_with("backend,"))
        .take(2)
        .map(|l| format!("{l}\n"))
        .collect::<String>();
    let rows = parse_results_csv(&csv, "doc").unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n, 5);
    assert!((rows[0].p_value - 6.695106946519076e-16).abs() < 1e-30);
    assert_eq!(results_csv(&rows).unwrap(), csv);
}

#[test]
fn iris_encoding_layout() {
    let examples = bundled_dataset();
    let spec = EncodingSpec::from_examples(&examples).unwrap();
    let tests = encode_all(&examples, &spec).unwrap();
    for (t, e) in tests.iter().zip(&examples) {
        let TestInit::Features(angles) = &t.init else {
            panic!("features expected")
        };
        assert!(angles.iter().all(|a| (0.0..=PI).contains(a)));
        assert_eq!(t.expected, e.species.code());
        assert_ne!(t.expected, INVALID_CLASS);
    }
    assert_eq!(Species::ALL.map(Species::code), [0b00, 0b01, 0b10]);

    let split = SplitTests::from_dataset(&examples, 100, 42).unwrap();
    assert_eq!((split.evolution.len(), split.evaluation.len()), (100, 50));
}

#[test]
fn population_file_survives_a_round_trip() {
    let config = EvolutionConfig {
        population_size: 6,
        generations: 2,
        ensemble_size: 3,
        ..EvolutionConfig::desk_scale()
    };
    let tests = SplitTests::from_dataset(&bundled_dataset(), 100, 1)
        .unwrap()
        .evolution;
    let pop = qensemble::evolve(&config, &tests, &qensemble::Simulator::Ideal).unwrap();
    let text = pop.to_json();
    assert!(text.ends_with("}\n"));
    let back = Population::from_json(&text, "mem").unwrap();
    assert_eq!(back, pop);
    assert_eq!(back.to_json(), text);
}
