use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qensemble::data::{self, EncodingSpec};
use qensemble::ensemble::{load_test_cases, write_test_cases, Simulator};
use qensemble::evolution::{evolve_with, EvolutionConfig, Population};
use qensemble::harness::{
    compare_populations, evaluate_population, fitness_listing, parse_results_csv, results_csv,
    run_experiment, write_report, ExperimentPlan, ResultRow, SplitTests,
};
use qensemble::{EvalMode, NoiseModel, Parallelism};

#[derive(Parser)]
#[command(
    name = "qensemble",
    version,
    about = "Evolve and compare ensembles of quantum circuits"
)]
struct Cli {
    /// Run evaluation on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a population of ensembles against a test-case file.
    Evolve(EvolveArgs),
    /// Print the fitness of every ensemble in a population.
    Evaluate(EvaluateArgs),
    /// Compare a heterogeneous population with homogeneous copies of a size-1 population.
    Compare(CompareArgs),
    /// Merge result rows into results.csv and results.txt.
    Report(ReportArgs),
    /// Encode the Iris dataset into evolution/evaluation test-case files.
    EncodeDataset(EncodeArgs),
    /// Run the full evolve / evaluate / compare pipeline.
    Experiment(ExperimentArgs),
    /// List the shipped noise presets.
    Presets,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tests: PathBuf,
    /// Output population file.
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    mode: Option<EvalMode>,
    /// Suppress the per-generation progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    tests: PathBuf,
    /// Preset name or path to a noise file; ideal simulation when absent.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value = "exact")]
    mode: EvalMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the listing here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Heterogeneous population.
    #[arg(long)]
    population: PathBuf,
    /// Size-1 population the homogeneous ensembles are built from.
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    ensemble_size: usize,
    #[arg(long)]
    tests: PathBuf,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value = "exact")]
    mode: EvalMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the result row as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result CSV files from `compare` or `experiment`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    /// Iris CSV; the bundled copy when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n_evolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    stratified: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Evolution settings; desk-scale defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    sizes: Vec<usize>,
    /// Noise presets or files to evaluate under, in addition to ideal simulation.
    #[arg(long)]
    noise: Vec<String>,
    /// Evaluate under every shipped preset.
    #[arg(long)]
    all_presets: bool,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "exact")]
    mode: EvalMode,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parallelism(cli: &Cli) -> Parallelism {
    if cli.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Rayon
    }
}

fn simulator(noise: Option<&str>) -> Result<Simulator> {
    Ok(match noise {
        None => Simulator::Ideal,
        Some(spec) => Simulator::Noisy(NoiseModel::resolve(spec)?),
    })
}

/// Write through a sibling temp file so failures never leave partial output.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e).with_context(|| format!("writing {}", path.display()));
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_evolve(args: &EvolveArgs, par: Parallelism) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => EvolutionConfig::load(path)?,
        None => EvolutionConfig::desk_scale(),
    };
    if let Some(q) = args.qubits {
        config.num_qubits = q;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.ensemble_size {
        config.ensemble_size = n;
    }
    if let Some(m) = args.mode {
        config.eval_mode = m;
    }
    config.validate()?;
    let tests = load_test_cases(&args.tests)?;
    let population = evolve_with(&config, &tests, &Simulator::Ideal, par, |s| {
        if !args.quiet {
            println!(
                "generation {:>5}  best {:.6}  mean {:.6}",
                s.generation, s.best, s.mean
            );
        }
    })?;
    write_atomic(&args.population, &population.to_json())
}

fn cmd_evaluate(args: &EvaluateArgs, par: Parallelism) -> Result<()> {
    let sim = simulator(args.noise.as_deref())?;
    let population = Population::load(&args.population)?;
    let tests = load_test_cases(&args.tests)?;
    let reports = evaluate_population(&population, &tests, &sim, args.mode, args.seed, par)?;
    emit(args.out.as_deref(), &fitness_listing(&reports))
}

fn cmd_compare(args: &CompareArgs, par: Parallelism) -> Result<()> {
    let sim = simulator(args.noise.as_deref())?;
    let het = Population::load(&args.population)?;
    let hom = Population::load(&args.baseline)?;
    let tests = load_test_cases(&args.tests)?;
    let row = compare_populations(
        &het,
        &hom,
        args.ensemble_size,
        &tests,
        &sim,
        args.mode,
        args.seed,
        par,
    )?;
    emit(args.out.as_deref(), &results_csv(&[row])?)
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for path in &args.inputs {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        rows.extend(parse_results_csv(&text, &path.display().to_string())?);
    }
    let (csv, txt) = write_report(&args.out_dir, &rows)?;
    print!("{}", fs::read_to_string(&txt)?);
    eprintln!("wrote {} and {}", csv.display(), txt.display());
    Ok(())
}

fn load_examples(input: Option<&Path>) -> Result<Vec<data::LabeledExample>> {
    Ok(match input {
        Some(path) => data::load_dataset(path)?,
        None => data::bundled_dataset(),
    })
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let examples = load_examples(args.input.as_deref())?;
    let spec = EncodingSpec::from_examples(&examples)?;
    let tests = data::encode_all(&examples, &spec)?;
    let (evolution, evaluation) = if args.stratified {
        let groups: Vec<_> = examples.iter().map(|e| e.species).collect();
        data::split_stratified(&tests, &groups, args.n_evolution, args.seed)?
    } else {
        data::split(&tests, args.n_evolution, args.seed)?
    };
    fs::create_dir_all(&args.out_dir)?;
    for (name, set) in [
        ("evolution_tests.jsonl", &evolution),
        ("evaluation_tests.jsonl", &evaluation),
    ] {
        let mut buf = Vec::new();
        write_test_cases(&mut buf, set)?;
        write_atomic(&args.out_dir.join(name), std::str::from_utf8(&buf)?)?;
    }
    println!(
        "wrote {} evolution and {} evaluation tests to {}",
        evolution.len(),
        evaluation.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs, par: Parallelism) -> Result<()> {
    let mut plan = ExperimentPlan::desk_scale(args.seed);
    if let Some(path) = &args.config {
        plan.evolution = EvolutionConfig::load(path)?;
    }
    plan.ensemble_sizes = args.sizes.clone();
    plan.eval_mode = args.mode;
    plan.output_dir = Some(args.out_dir.clone());
    if args.all_presets {
        plan.noise_models = NoiseModel::presets();
    }
    for spec in &args.noise {
        plan.noise_models.push(NoiseModel::resolve(spec)?);
    }
    let examples = load_examples(args.input.as_deref())?;
    let mut source = SplitTests::from_dataset(&examples, plan.n_evolution, plan.seed)?;
    let outcome = run_experiment(&plan, &mut source, par, |n, s| {
        if s.generation % 20 == 0 {
            eprintln!(
                "n={n} generation {:>4}  best {:.4}  mean {:.4}",
                s.generation, s.best, s.mean
            );
        }
    })?;
    if outcome.rows.is_empty() {
        bail!("no comparisons: include size 1 and at least one larger size");
    }
    print!("{}", fs::read_to_string(args.out_dir.join("results.txt"))?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let par = parallelism(cli);
    match &cli.command {
        Command::Evolve(a) => cmd_evolve(a, par),
        Command::Evaluate(a) => cmd_evaluate(a, par),
        Command::Compare(a) => cmd_compare(a, par),
        Command::Report(a) => cmd_report(a),
        Command::EncodeDataset(a) => cmd_encode(a),
        Command::Experiment(a) => cmd_experiment(a, par),
        Command::Presets => {
            for m in NoiseModel::presets() {
                println!(
                    "{:<16} p1={:<6} p2={:<6} readout 0->1={:<6} 1->0={}",
                    m.name, m.p1, m.p2, m.readout_flip_0to1, m.readout_flip_1to0
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
