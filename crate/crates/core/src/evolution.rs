//! Generational evolutionary algorithm over populations of fixed-size ensembles.
//!
//! All random choices come from a single ChaCha stream rooted at the config
//! seed and are drawn on the calling thread. Fitness evaluation is the only
//! parallel step, and it is order-preserving and side-effect free, so the
//! final population is independent of the thread count.

use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, EvalMode, FitnessReport, PreparedTests, Simulator, TestCase};
use crate::error::{Error, Result};
use crate::parallel::{self, Parallelism};
use crate::seed;
use crate::sim::{Circuit, Gate, MAX_QUBITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub ensemble_size: usize,
    pub gate_cap: usize,
    pub num_qubits: usize,
    pub measured_qubits: Vec<usize>,
    pub crossover_rate: f64,
    /// Probability that each member circuit of an offspring is mutated.
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elite_fraction: f64,
    pub angle_sigma: f64,
    pub seed: u64,
    pub eval_mode: EvalMode,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 600,
            generations: 5000,
            ensemble_size: 1,
            gate_cap: 20,
            num_qubits: 4,
            measured_qubits: vec![0, 1],
            crossover_rate: 0.7,
            mutation_rate: 0.3,
            tournament_size: 3,
            elite_fraction: 0.01,
            angle_sigma: 0.1,
            seed: 0,
            eval_mode: EvalMode::Exact,
        }
    }
}

impl EvolutionConfig {
    /// Population 60, 200 generations, gate cap 12.
    pub fn desk_scale() -> Self {
        EvolutionConfig {
            population_size: 60,
            generations: 200,
            gate_cap: 12,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::validation(msg));
        if self.population_size < 2 {
            return fail(format!("population_size {} < 2", self.population_size));
        }
        if self.generations < 1 {
            return fail("generations must be at least 1".into());
        }
        if self.ensemble_size < 1 {
            return fail("ensemble_size must be at least 1".into());
        }
        if self.gate_cap < 1 {
            return fail("gate_cap must be at least 1".into());
        }
        if self.num_qubits < 1 || self.num_qubits > MAX_QUBITS {
            return fail(format!(
                "num_qubits {} outside 1..={MAX_QUBITS}",
                self.num_qubits
            ));
        }
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
            ("elite_fraction", self.elite_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.tournament_size < 1 || self.tournament_size > self.population_size {
            return fail(format!(
                "tournament_size {} outside 1..={}",
                self.tournament_size, self.population_size
            ));
        }
        if !(self.angle_sigma.is_finite() && self.angle_sigma >= 0.0) {
            return fail(format!(
                "angle_sigma {} must be finite and ≥ 0",
                self.angle_sigma
            ));
        }
        Circuit::empty(self.num_qubits, self.measured_qubits.clone()).map(|_| ())
    }

    pub fn num_outputs(&self) -> usize {
        1 << self.measured_qubits.len()
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).ceil() as usize)
            .min(self.population_size)
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let config: EvolutionConfig =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// A generation of ensembles with their fitness on the tests they were evolved against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub config: EvolutionConfig,
    pub generation: usize,
    pub individuals: Vec<Ensemble>,
    pub fitnesses: Vec<FitnessReport>,
}

impl Population {
    pub fn validate(&self) -> Result<()> {
        if self.individuals.len() != self.fitnesses.len() {
            return Err(Error::structural(
                "individuals and fitnesses differ in length",
            ));
        }
        let size = self.individuals.first().map(Ensemble::size);
        for e in &self.individuals {
            e.validate()?;
            if Some(e.size()) != size
                || e.num_qubits() != self.config.num_qubits
                || e.measured_qubits() != self.config.measured_qubits
            {
                return Err(Error::structural("population members differ in dimensions"));
            }
        }
        Ok(())
    }

    pub fn ensemble_size(&self) -> usize {
        self.individuals.first().map_or(0, Ensemble::size)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.fitnesses
            .iter()
            .map(|f| f.fitness)
            .enumerate()
            .fold(None, |best, (i, f)| match best {
                Some((_, b)) if b >= f => best,
                _ => Some((i, f)),
            })
    }

    pub fn mean_fitness(&self) -> f64 {
        self.fitnesses.iter().map(|f| f.fitness).sum::<f64>() / self.fitnesses.len().max(1) as f64
    }

    /// Pretty JSON; float formatting is shortest round-trip so angles survive exactly.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("population serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let pop: Population = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                format!("{origin}:{}:{}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        pop.validate()?;
        Ok(pop)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

fn random_gate<R: Rng>(num_qubits: usize, rng: &mut R) -> Gate {
    if num_qubits >= 2 && rng.random_bool(0.5) {
        let control = rng.random_range(0..num_qubits);
        let mut target = rng.random_range(0..num_qubits - 1);
        if target >= control {
            target += 1;
        }
        Gate::cx(control, target)
    } else {
        Gate::u(
            rng.random_range(0..num_qubits),
            rng.random_range(0.0..TAU),
            rng.random_range(0.0..TAU),
            rng.random_range(0.0..TAU),
        )
    }
}

pub fn random_circuit<R: Rng>(config: &EvolutionConfig, rng: &mut R) -> Result<Circuit> {
    if config.gate_cap < 1 {
        return Err(Error::validation("gate_cap must be at least 1"));
    }
    let len = rng.random_range(1..=config.gate_cap);
    let gates = (0..len)
        .map(|_| random_gate(config.num_qubits, rng))
        .collect();
    Circuit::new(config.num_qubits, config.measured_qubits.clone(), gates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mutation {
    Insert,
    Delete,
    Replace,
    Perturb,
    Rewire,
}

/// Any other qubit index that keeps the gate valid, or `None`.
fn rewire_choices(gate: &Gate, num_qubits: usize) -> Vec<(usize, usize)> {
    // (operand slot, new qubit)
    match *gate {
        Gate::U { target, .. } => (0..num_qubits)
            .filter(|&q| q != target)
            .map(|q| (0, q))
            .collect(),
        Gate::Cx { control, target } => {
            let mut out = Vec::new();
            for q in 0..num_qubits {
                if q != control && q != target {
                    out.push((0, q));
                    out.push((1, q));
                }
            }
            out
        }
    }
}

/// Apply one uniformly chosen applicable mutation operator.
pub fn mutate<R: Rng>(circuit: &Circuit, config: &EvolutionConfig, rng: &mut R) -> Circuit {
    let n = config.num_qubits;
    let mut gates = circuit.gates().to_vec();
    let u_positions: Vec<usize> = (0..gates.len())
        .filter(|&i| matches!(gates[i], Gate::U { .. }))
        .collect();
    let rewirable: Vec<usize> = (0..gates.len())
        .filter(|&i| !rewire_choices(&gates[i], n).is_empty())
        .collect();

    let mut menu = Vec::with_capacity(5);
    if gates.len() < config.gate_cap {
        menu.push(Mutation::Insert);
    }
    if gates.len() > 1 {
        menu.push(Mutation::Delete);
    }
    if !gates.is_empty() {
        menu.push(Mutation::Replace);
    }
    if !u_positions.is_empty() {
        menu.push(Mutation::Perturb);
    }
    if !rewirable.is_empty() {
        menu.push(Mutation::Rewire);
    }
    let Some(&op) = menu.choose(rng) else {
        return circuit.clone();
    };
    match op {
        Mutation::Insert => {
            let at = rng.random_range(0..=gates.len());
            gates.insert(at, random_gate(n, rng));
        }
        Mutation::Delete => {
            let at = rng.random_range(0..gates.len());
            gates.remove(at);
        }
        Mutation::Replace => {
            let at = rng.random_range(0..gates.len());
            gates[at] = random_gate(n, rng);
        }
        Mutation::Perturb => {
            let at = *u_positions.choose(rng).expect("non-empty");
            let which = rng.random_range(0..3);
            let delta = if config.angle_sigma > 0.0 {
                Normal::new(0.0, config.angle_sigma)
                    .expect("sigma validated")
                    .sample(rng)
            } else {
                0.0
            };
            if let Gate::U {
                theta, phi, lambda, ..
            } = &mut gates[at]
            {
                match which {
                    0 => *theta += delta,
                    1 => *phi += delta,
                    _ => *lambda += delta,
                }
            }
        }
        Mutation::Rewire => {
            let at = *rewirable.choose(rng).expect("non-empty");
            let &(slot, q) = rewire_choices(&gates[at], n)
                .choose(rng)
                .expect("non-empty");
            match &mut gates[at] {
                Gate::U { target, .. } => *target = q,
                Gate::Cx { control, target } => {
                    if slot == 0 {
                        *control = q;
                    } else {
                        *target = q;
                    }
                }
            }
        }
    }
    circuit.with_gates_unchecked(gates)
}

/// The random decisions of one crossover, separated from their application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossoverPlan {
    /// Member slots exchanged between the two parents.
    pub swaps: Vec<bool>,
    /// `(slot, cut)`: one-point crossover of the aligned members after swapping.
    pub gate_level: Option<(usize, usize)>,
}

impl CrossoverPlan {
    pub fn draw<R: Rng>(a: &Ensemble, b: &Ensemble, rng: &mut R) -> Self {
        let swaps: Vec<bool> = (0..a.size()).map(|_| rng.random_bool(0.5)).collect();
        let gate_level = if rng.random_bool(0.5) {
            let slot = rng.random_range(0..a.size());
            let shorter = a.circuits()[slot].len().min(b.circuits()[slot].len());
            Some((slot, rng.random_range(shorter.min(1)..=shorter)))
        } else {
            None
        };
        CrossoverPlan { swaps, gate_level }
    }

    pub fn apply(
        &self,
        a: &Ensemble,
        b: &Ensemble,
        config: &EvolutionConfig,
    ) -> Result<(Ensemble, Ensemble)> {
        if a.size() != b.size() || self.swaps.len() != a.size() {
            return Err(Error::structural(format!(
                "crossover of ensembles with sizes {} and {}",
                a.size(),
                b.size()
            )));
        }
        if a.num_qubits() != b.num_qubits() || a.measured_qubits() != b.measured_qubits() {
            return Err(Error::structural(
                "crossover of ensembles with different registers",
            ));
        }
        let mut left: Vec<Circuit> = Vec::with_capacity(a.size());
        let mut right: Vec<Circuit> = Vec::with_capacity(a.size());
        for (i, &swap) in self.swaps.iter().enumerate() {
            let (x, y) = (&a.circuits()[i], &b.circuits()[i]);
            if swap {
                left.push(y.clone());
                right.push(x.clone());
            } else {
                left.push(x.clone());
                right.push(y.clone());
            }
        }
        if let Some((slot, cut)) = self.gate_level {
            if slot >= left.len() {
                return Err(Error::structural("crossover slot beyond ensemble size"));
            }
            let ga = left[slot].gates();
            let gb = right[slot].gates();
            if cut > ga.len().min(gb.len()) {
                return Err(Error::structural("crossover cut beyond circuit length"));
            }
            let mut ca: Vec<Gate> = ga[..cut].iter().chain(&gb[cut..]).copied().collect();
            let mut cb: Vec<Gate> = gb[..cut].iter().chain(&ga[cut..]).copied().collect();
            ca.truncate(config.gate_cap);
            cb.truncate(config.gate_cap);
            left[slot] = left[slot].with_gates_unchecked(ca);
            right[slot] = right[slot].with_gates_unchecked(cb);
        }
        Ok((Ensemble::new(left)?, Ensemble::new(right)?))
    }
}

/// Uniform slot swap, then with probability 0.5 a one-point crossover of one aligned member pair.
pub fn crossover<R: Rng>(
    a: &Ensemble,
    b: &Ensemble,
    config: &EvolutionConfig,
    rng: &mut R,
) -> Result<(Ensemble, Ensemble)> {
    if a.size() != b.size() {
        return Err(Error::structural(format!(
            "crossover of ensembles with sizes {} and {}",
            a.size(),
            b.size()
        )));
    }
    CrossoverPlan::draw(a, b, rng).apply(a, b, config)
}

fn tournament<R: Rng>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}

fn random_ensemble<R: Rng>(config: &EvolutionConfig, rng: &mut R) -> Result<Ensemble> {
    let circuits = (0..config.ensemble_size)
        .map(|_| random_circuit(config, rng))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(circuits)
}

fn evaluate_pending(
    individuals: &[Ensemble],
    fitnesses: &mut [Option<FitnessReport>],
    tests: &PreparedTests,
    sim: &Simulator,
    config: &EvolutionConfig,
    generation: usize,
    parallelism: Parallelism,
) -> Result<()> {
    let pending: Vec<usize> = (0..individuals.len())
        .filter(|&i| fitnesses[i].is_none())
        .collect();
    let results = parallel::map_indexed(&pending, parallelism, |_, &i| {
        let eval_seed = seed::derive_seed(config.seed, &[generation as u64, i as u64]);
        tests.fitness(&individuals[i], sim, config.eval_mode, eval_seed)
    });
    for (i, r) in pending.into_iter().zip(results) {
        fitnesses[i] = Some(r?);
    }
    Ok(())
}

/// Run the generational loop with the default parallelism and no progress callback.
pub fn evolve(config: &EvolutionConfig, tests: &[TestCase], sim: &Simulator) -> Result<Population> {
    evolve_with(config, tests, sim, Parallelism::default(), |_| {})
}

pub fn evolve_with<F>(
    config: &EvolutionConfig,
    tests: &[TestCase],
    sim: &Simulator,
    parallelism: Parallelism,
    mut observe: F,
) -> Result<Population>
where
    F: FnMut(&GenerationStats),
{
    config.validate()?;
    let prepared = PreparedTests::new(tests, config.num_qubits, config.num_outputs())?;
    let mut rng: ChaCha8Rng = seed::stream(config.seed, &[u64::MAX]);
    let pop_size = config.population_size;

    let mut individuals = (0..pop_size)
        .map(|_| random_ensemble(config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut fitnesses: Vec<Option<FitnessReport>> = vec![None; pop_size];
    evaluate_pending(
        &individuals,
        &mut fitnesses,
        &prepared,
        sim,
        config,
        0,
        parallelism,
    )?;
    let mut scores: Vec<f64> = fitnesses
        .iter()
        .map(|f| f.as_ref().unwrap().fitness)
        .collect();
    observe(&stats(0, &scores));

    for generation in 1..=config.generations {
        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

        let mut next: Vec<Ensemble> = Vec::with_capacity(pop_size);
        let mut next_fit: Vec<Option<FitnessReport>> = Vec::with_capacity(pop_size);
        for &i in order.iter().take(config.elite_count()) {
            next.push(individuals[i].clone());
            next_fit.push(fitnesses[i].clone());
        }
        while next.len() < pop_size {
            let pa = tournament(&scores, config.tournament_size, &mut rng);
            let pb = tournament(&scores, config.tournament_size, &mut rng);
            let crossed = rng.random_bool(config.crossover_rate);
            let children = if crossed {
                let (x, y) = crossover(&individuals[pa], &individuals[pb], config, &mut rng)?;
                [(x, None), (y, None)]
            } else {
                [
                    (individuals[pa].clone(), fitnesses[pa].clone()),
                    (individuals[pb].clone(), fitnesses[pb].clone()),
                ]
            };
            for (child, inherited) in children {
                if next.len() == pop_size {
                    break;
                }
                let mut mutated = false;
                let members: Vec<Circuit> = child
                    .into_circuits()
                    .into_iter()
                    .map(|c| {
                        if rng.random_bool(config.mutation_rate) {
                            mutated = true;
                            mutate(&c, config, &mut rng)
                        } else {
                            c
                        }
                    })
                    .collect();
                next.push(Ensemble::new(members)?);
                next_fit.push(if mutated { None } else { inherited });
            }
        }
        individuals = next;
        fitnesses = next_fit;
        evaluate_pending(
            &individuals,
            &mut fitnesses,
            &prepared,
            sim,
            config,
            generation,
            parallelism,
        )?;
        scores = fitnesses
            .iter()
            .map(|f| f.as_ref().unwrap().fitness)
            .collect();
        observe(&stats(generation, &scores));
    }

    let population = Population {
        config: config.clone(),
        generation: config.generations,
        individuals,
        fitnesses: fitnesses.into_iter().map(Option::unwrap).collect(),
    };
    population.validate()?;
    Ok(population)
}

fn stats(generation: usize, scores: &[f64]) -> GenerationStats {
    GenerationStats {
        generation,
        best: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
    }
}
