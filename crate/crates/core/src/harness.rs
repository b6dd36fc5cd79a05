//! Experiment orchestration: evolve one population per ensemble size, build
//! homogeneous baselines from the size-1 population, and compare them with the
//! heterogeneous populations on held-out tests under ideal and noisy simulation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{self, LabeledExample};
use crate::ensemble::{
    replicate_homogeneous, write_test_cases, EvalMode, FitnessReport, PreparedTests, Simulator,
    TestCase,
};
use crate::error::{Error, Result};
use crate::evolution::{evolve_with, EvolutionConfig, GenerationStats, Population};
use crate::noise::NoiseModel;
use crate::parallel::{self, Parallelism};
use crate::seed;
use crate::stats::{mann_whitney, median};

pub const IDEAL_BACKEND: &str = "ideal";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub ensemble_sizes: Vec<usize>,
    /// Template for every evolution run; `ensemble_size` and `seed` are overridden.
    pub evolution: EvolutionConfig,
    /// Empty means ideal simulation only.
    pub noise_models: Vec<NoiseModel>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub n_evolution: usize,
    pub eval_mode: EvalMode,
}

impl ExperimentPlan {
    /// Sizes 1, 3, 5, 7 at desk scale, ideal only, 100 evolution tests.
    pub fn desk_scale(seed: u64) -> Self {
        ExperimentPlan {
            ensemble_sizes: vec![1, 3, 5, 7],
            evolution: EvolutionConfig::desk_scale(),
            noise_models: Vec::new(),
            output_dir: None,
            seed,
            n_evolution: 100,
            eval_mode: EvalMode::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_sizes.is_empty() || self.ensemble_sizes.contains(&0) {
            return Err(Error::validation(
                "ensemble sizes must be non-empty and all ≥ 1",
            ));
        }
        if self.ensemble_sizes.iter().any(|&n| n > 1) && !self.ensemble_sizes.contains(&1) {
            return Err(Error::validation(
                "size 1 is required to build homogeneous baselines",
            ));
        }
        self.evolution.validate()
    }

    fn config_for(&self, ensemble_size: usize) -> EvolutionConfig {
        EvolutionConfig {
            ensemble_size,
            seed: self.seed,
            ..self.evolution.clone()
        }
    }
}

/// One comparison cell group: medians, p-value, and effect size for a backend and size.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub backend: String,
    pub n: usize,
    pub median_het: f64,
    pub median_hom: f64,
    pub p_value: f64,
    pub effect_r: f64,
}

/// Where the harness gets its two test sets from.
pub trait TestSource {
    fn evolution_tests(&mut self) -> Result<Vec<TestCase>>;
    fn evaluation_tests(&mut self) -> Result<Vec<TestCase>>;
}

#[derive(Debug, Clone)]
pub struct SplitTests {
    pub evolution: Vec<TestCase>,
    pub evaluation: Vec<TestCase>,
}

impl SplitTests {
    /// Encode with ranges from the whole dataset, then split uniformly at random.
    pub fn from_dataset(
        examples: &[LabeledExample],
        n_evolution: usize,
        seed: u64,
    ) -> Result<Self> {
        let spec = data::EncodingSpec::from_examples(examples)?;
        let tests = data::encode_all(examples, &spec)?;
        let (evolution, evaluation) = data::split(&tests, n_evolution, seed)?;
        Ok(SplitTests {
            evolution,
            evaluation,
        })
    }
}

impl TestSource for SplitTests {
    fn evolution_tests(&mut self) -> Result<Vec<TestCase>> {
        Ok(self.evolution.clone())
    }

    fn evaluation_tests(&mut self) -> Result<Vec<TestCase>> {
        Ok(self.evaluation.clone())
    }
}

/// Fitness of every ensemble in population order. Shots-mode streams are keyed
/// by (seed, ensemble index).
pub fn evaluate_population(
    population: &Population,
    tests: &[TestCase],
    sim: &Simulator,
    mode: EvalMode,
    seed: u64,
    parallelism: Parallelism,
) -> Result<Vec<FitnessReport>> {
    let prepared = PreparedTests::new(
        tests,
        population.config.num_qubits,
        population.config.num_outputs(),
    )?;
    parallel::map_indexed(&population.individuals, parallelism, |i, e| {
        prepared.fitness(e, sim, mode, seed::derive_seed(seed, &[i as u64]))
    })
    .into_iter()
    .collect()
}

/// Replace each size-1 ensemble with `n` copies of its circuit.
pub fn homogeneous_population(base: &Population, n: usize) -> Result<Population> {
    if base.ensemble_size() != 1 {
        return Err(Error::validation(format!(
            "homogeneous baselines come from a size-1 population, got size {}",
            base.ensemble_size()
        )));
    }
    let individuals = base
        .individuals
        .iter()
        .map(|e| replicate_homogeneous(&e.circuits()[0], n))
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        config: EvolutionConfig {
            ensemble_size: n,
            ..base.config.clone()
        },
        generation: base.generation,
        individuals,
        fitnesses: base.fitnesses.clone(),
    })
}

/// Mann-Whitney comparison with heterogeneous fitnesses as sample A.
pub fn compare_fitness(backend: &str, n: usize, het: &[f64], hom: &[f64]) -> Result<ResultRow> {
    let test = mann_whitney(het, hom)?;
    Ok(ResultRow {
        backend: backend.to_string(),
        n,
        median_het: median(het)?,
        median_hom: median(hom)?,
        p_value: test.p_value,
        effect_r: test.effect_size_r,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn compare_populations(
    het: &Population,
    hom_base: &Population,
    n: usize,
    tests: &[TestCase],
    sim: &Simulator,
    mode: EvalMode,
    seed: u64,
    parallelism: Parallelism,
) -> Result<ResultRow> {
    if het.ensemble_size() != n {
        return Err(Error::validation(format!(
            "heterogeneous population has ensemble size {}, comparison requested n = {n}",
            het.ensemble_size()
        )));
    }
    let hom = homogeneous_population(hom_base, n)?;
    let het_fit = fitness_values(&evaluate_population(
        het,
        tests,
        sim,
        mode,
        seed,
        parallelism,
    )?);
    let hom_fit = fitness_values(&evaluate_population(
        &hom,
        tests,
        sim,
        mode,
        seed,
        parallelism,
    )?);
    compare_fitness(sim.name(), n, &het_fit, &hom_fit)
}

fn fitness_values(reports: &[FitnessReport]) -> Vec<f64> {
    reports.iter().map(|r| r.fitness).collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub populations: BTreeMap<usize, Population>,
    pub rows: Vec<ResultRow>,
    /// Evaluation-test fitness listings keyed by (backend, "het" | "hom", n).
    pub evaluations: BTreeMap<(String, &'static str, usize), Vec<FitnessReport>>,
}

/// Evolve every size on the evolution tests (ideal simulation), then evaluate
/// on the evaluation tests under ideal simulation and each noise model.
pub fn run_experiment<S, F>(
    plan: &ExperimentPlan,
    source: &mut S,
    parallelism: Parallelism,
    mut progress: F,
) -> Result<ExperimentOutcome>
where
    S: TestSource,
    F: FnMut(usize, &GenerationStats),
{
    plan.validate()?;
    let mut sizes = plan.ensemble_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    let evolution_tests = source.evolution_tests()?;
    let mut populations = BTreeMap::new();
    for &n in &sizes {
        let config = plan.config_for(n);
        let pop = evolve_with(
            &config,
            &evolution_tests,
            &Simulator::Ideal,
            parallelism,
            |s| progress(n, s),
        )?;
        populations.insert(n, pop);
    }

    let evaluation_tests = source.evaluation_tests()?;
    let mut sims = vec![Simulator::Ideal];
    sims.extend(plan.noise_models.iter().cloned().map(Simulator::Noisy));

    let mut rows = Vec::new();
    let mut evaluations = BTreeMap::new();
    for sim in &sims {
        let backend = sim.name().to_string();
        let eval = |pop: &Population| {
            evaluate_population(
                pop,
                &evaluation_tests,
                sim,
                plan.eval_mode,
                plan.seed,
                parallelism,
            )
        };
        for &n in &sizes {
            let het = eval(&populations[&n])?;
            if n > 1 {
                let hom = eval(&homogeneous_population(&populations[&1], n)?)?;
                rows.push(compare_fitness(
                    &backend,
                    n,
                    &fitness_values(&het),
                    &fitness_values(&hom),
                )?);
                evaluations.insert((backend.clone(), "hom", n), hom);
            }
            evaluations.insert((backend.clone(), "het", n), het);
        }
    }

    let outcome = ExperimentOutcome {
        populations,
        rows,
        evaluations,
    };
    if let Some(dir) = &plan.output_dir {
        write_outputs(dir, &outcome, &evolution_tests, &evaluation_tests)?;
    }
    Ok(outcome)
}

fn write_outputs(
    dir: &Path,
    outcome: &ExperimentOutcome,
    evolution: &[TestCase],
    evaluation: &[TestCase],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (n, pop) in &outcome.populations {
        pop.save(&dir.join(format!("population_n{n}.json")))?;
    }
    for (name, tests) in [
        ("evolution_tests.jsonl", evolution),
        ("evaluation_tests.jsonl", evaluation),
    ] {
        let path = dir.join(name);
        let mut buf = Vec::new();
        write_test_cases(&mut buf, tests).map_err(|e| Error::io(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    if !outcome.rows.is_empty() {
        write_report(dir, &outcome.rows)?;
    }
    Ok(())
}

/// Write `results.csv` and `results.txt` into `dir`.
pub fn write_report(dir: &Path, rows: &[ResultRow]) -> Result<(PathBuf, PathBuf)> {
    let csv = results_csv(rows)?;
    let text = results_table(rows)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let txt_path = dir.join("results.txt");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    std::fs::write(&txt_path, text).map_err(|e| Error::io(&txt_path, e))?;
    Ok((csv_path, txt_path))
}

struct Grid<'a> {
    backends: Vec<&'a str>,
    sizes: Vec<usize>,
    cells: BTreeMap<(&'a str, usize), &'a ResultRow>,
}

fn grid(rows: &[ResultRow]) -> Result<Grid<'_>> {
    if rows.is_empty() {
        return Err(Error::validation("a report needs at least one result row"));
    }
    let mut backends: Vec<&str> = Vec::new();
    if rows.iter().any(|r| r.backend == IDEAL_BACKEND) {
        backends.push(IDEAL_BACKEND);
    }
    let mut cells = BTreeMap::new();
    for r in rows {
        if r.backend.contains([',', '\n', '"']) || r.backend.is_empty() {
            return Err(Error::validation(format!(
                "backend name `{}` is not CSV-safe",
                r.backend
            )));
        }
        if !backends.contains(&r.backend.as_str()) {
            backends.push(&r.backend);
        }
        if cells.insert((r.backend.as_str(), r.n), r).is_some() {
            return Err(Error::validation(format!(
                "duplicate row for {} n={}",
                r.backend, r.n
            )));
        }
    }
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    Ok(Grid {
        backends,
        sizes,
        cells,
    })
}

/// One line per backend (ideal first), four columns per ensemble size.
pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let g = grid(rows)?;
    let mut out = String::from("backend");
    for n in &g.sizes {
        write!(out, ",n{n}_med_het,n{n}_med_hom,n{n}_p,n{n}_r").unwrap();
    }
    out.push('\n');
    for b in &g.backends {
        out.push_str(b);
        for n in &g.sizes {
            match g.cells.get(&(*b, *n)) {
                Some(r) => write!(
                    out,
                    ",{},{},{},{}",
                    r.median_het, r.median_hom, r.p_value, r.effect_r
                )
                .unwrap(),
                None => out.push_str(",,,,"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_results_csv(text: &str, origin: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, "empty results file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"backend") || !(cols.len() - 1).is_multiple_of(4) {
        return Err(Error::parse(format!("{origin}:1"), "unexpected header"));
    }
    let mut sizes = Vec::new();
    for chunk in cols[1..].chunks(4) {
        let n: usize = chunk[0]
            .strip_prefix('n')
            .and_then(|s| s.strip_suffix("_med_het"))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::parse(format!("{origin}:1"), format!("bad column `{}`", chunk[0]))
            })?;
        sizes.push(n);
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let at = || format!("{origin}:{}", i + 1);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                at(),
                format!("expected {} fields", cols.len()),
            ));
        }
        for (k, &n) in sizes.iter().enumerate() {
            let cell = &fields[1 + 4 * k..5 + 4 * k];
            if cell.iter().all(|f| f.is_empty()) {
                continue;
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(at(), format!("`{s}` is not a number")))
            };
            rows.push(ResultRow {
                backend: fields[0].to_string(),
                n,
                median_het: num(cell[0])?,
                median_hom: num(cell[1])?,
                p_value: num(cell[2])?,
                effect_r: num(cell[3])?,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::validation(format!("{origin}: no result rows")));
    }
    Ok(rows)
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

/// Human-readable table grouped by ensemble size.
pub fn results_table(rows: &[ResultRow]) -> Result<String> {
    let g = grid(rows)?;
    let mut header = vec!["backend".to_string()];
    for n in &g.sizes {
        for c in ["het", "hom", "p", "r"] {
            header.push(format!("n={n} {c}"));
        }
    }
    let mut body: Vec<Vec<String>> = Vec::new();
    for b in &g.backends {
        let mut line = vec![b.to_string()];
        for n in &g.sizes {
            match g.cells.get(&(*b, *n)) {
                Some(r) => line.extend([
                    format!("{:.3}", r.median_het),
                    format!("{:.3}", r.median_hom),
                    fmt_p(r.p_value),
                    format!("{:.3}", r.effect_r),
                ]),
                None => line.extend(std::iter::repeat_n("-".to_string(), 4)),
            }
        }
        body.push(line);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            body.iter()
                .map(|l| l[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap()
        })
        .collect();
    let render = |cells: &[String]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                write!(s, "{cell:<w$}", w = widths[c]).unwrap();
            } else {
                write!(s, "  {cell:>w$}", w = widths[c]).unwrap();
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = render(&header);
    out.push_str(&"-".repeat(out.len() - 1));
    out.push('\n');
    for l in &body {
        out.push_str(&render(l));
    }
    Ok(out)
}

/// Fitness listing as CSV: `index,fitness`.
pub fn fitness_listing(reports: &[FitnessReport]) -> String {
    let mut out = String::from("index,fitness\n");
    for (i, r) in reports.iter().enumerate() {
        writeln!(out, "{i},{}", r.fitness).unwrap();
    }
    out
}
