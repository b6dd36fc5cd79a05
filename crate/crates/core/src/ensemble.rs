//! Plurality-vote ensembles, their exact output distributions, and fitness.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{run_noisy, NoiseModel};
use crate::seed;
use crate::sim::{run_ideal, sample_shots, Circuit, Gate, OutputDistribution, StateVector};

/// Fixed-size list of circuits sharing register width and measured qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    circuits: Vec<Circuit>,
}

impl Ensemble {
    pub fn new(circuits: Vec<Circuit>) -> Result<Self> {
        let ensemble = Ensemble { circuits };
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .circuits
            .first()
            .ok_or_else(|| Error::validation("an ensemble needs at least one circuit"))?;
        for c in &self.circuits {
            c.validate()?;
            if c.num_qubits() != first.num_qubits()
                || c.measured_qubits() != first.measured_qubits()
            {
                return Err(Error::structural(
                    "ensemble members must share register width and measured qubits",
                ));
            }
        }
        Ok(())
    }

    pub fn circuits(&self) -> &[Circuit] {
        &self.circuits
    }

    pub fn size(&self) -> usize {
        self.circuits.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.circuits[0].num_qubits()
    }

    pub fn measured_qubits(&self) -> &[usize] {
        self.circuits[0].measured_qubits()
    }

    pub fn into_circuits(self) -> Vec<Circuit> {
        self.circuits
    }
}

/// `n` copies of the same circuit: one circuit executed `n` times and voted.
pub fn replicate_homogeneous(circuit: &Circuit, n: usize) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::validation(
            "homogeneous ensemble size must be at least 1",
        ));
    }
    Ensemble::new(vec![circuit.clone(); n])
}

/// How a test case prepares the register before the circuit runs.
#[derive(Debug, Clone, PartialEq)]
pub enum TestInit {
    /// Angle-encoded features: `U(θ_j, 0, 0)` on qubit `j`.
    Features(Vec<f64>),
    /// Arbitrary preparation gates applied to `|0…0⟩`.
    Gates(Vec<Gate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestCaseRecord", into = "TestCaseRecord")]
pub struct TestCase {
    pub init: TestInit,
    pub expected: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestCaseRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init_gates: Option<Vec<Gate>>,
    expected: usize,
}

impl TryFrom<TestCaseRecord> for TestCase {
    type Error = String;

    fn try_from(r: TestCaseRecord) -> std::result::Result<Self, String> {
        let init = match (r.features, r.init_gates) {
            (Some(f), None) => TestInit::Features(f),
            (None, Some(g)) => TestInit::Gates(g),
            _ => return Err("exactly one of `features` or `init_gates` is required".into()),
        };
        Ok(TestCase {
            init,
            expected: r.expected,
        })
    }
}

impl From<TestCase> for TestCaseRecord {
    fn from(t: TestCase) -> Self {
        let (features, init_gates) = match t.init {
            TestInit::Features(f) => (Some(f), None),
            TestInit::Gates(g) => (None, Some(g)),
        };
        TestCaseRecord {
            features,
            init_gates,
            expected: t.expected,
        }
    }
}

impl TestCase {
    pub fn from_features(features: Vec<f64>, expected: usize) -> Self {
        TestCase {
            init: TestInit::Features(features),
            expected,
        }
    }

    pub fn from_gates(gates: Vec<Gate>, expected: usize) -> Self {
        TestCase {
            init: TestInit::Gates(gates),
            expected,
        }
    }

    /// The preparation expressed as gates.
    pub fn init_gates(&self) -> Vec<Gate> {
        match &self.init {
            TestInit::Features(f) => f
                .iter()
                .enumerate()
                .map(|(q, &theta)| Gate::u(q, theta, 0.0, 0.0))
                .collect(),
            TestInit::Gates(g) => g.clone(),
        }
    }

    pub fn initial_state(&self, num_qubits: usize) -> Result<StateVector> {
        if let TestInit::Features(f) = &self.init {
            if f.len() > num_qubits {
                return Err(Error::structural(format!(
                    "{} features do not fit a {num_qubits}-qubit register",
                    f.len()
                )));
            }
        }
        StateVector::prepared(num_qubits, &self.init_gates())
    }

    pub fn validate(&self, num_qubits: usize, num_outputs: usize) -> Result<()> {
        if self.expected >= num_outputs {
            return Err(Error::validation(format!(
                "expected output {} is outside 0..{num_outputs}",
                self.expected
            )));
        }
        self.initial_state(num_qubits).map(|_| ())
    }
}

/// Read line-delimited JSON test cases. Blank lines are skipped.
pub fn read_test_cases<R: BufRead>(reader: R, origin: &str) -> Result<Vec<TestCase>> {
    let mut tests = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(format!("{origin}:{}", i + 1), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let test: TestCase = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{origin}:{}", i + 1), e.to_string()))?;
        tests.push(test);
    }
    Ok(tests)
}

pub fn write_test_cases<W: Write>(mut writer: W, tests: &[TestCase]) -> std::io::Result<()> {
    for t in tests {
        serde_json::to_writer(&mut writer, t)?;
        writeln!(writer)?;
    }
    Ok(())
}

pub fn load_test_cases(path: &Path) -> Result<Vec<TestCase>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_test_cases(std::io::BufReader::new(file), &path.display().to_string())
}

/// Ensemble fitness: mean over tests of the probability the vote returns the expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub fitness: f64,
    pub per_test: Vec<f64>,
}

impl FitnessReport {
    pub fn from_per_test(per_test: Vec<f64>) -> Self {
        let fitness = per_test.iter().sum::<f64>() / per_test.len().max(1) as f64;
        FitnessReport { fitness, per_test }
    }
}

/// Which simulator produces member distributions.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Simulator {
    #[default]
    Ideal,
    Noisy(NoiseModel),
}

impl Simulator {
    pub fn run(&self, circuit: &Circuit, init: &StateVector) -> Result<OutputDistribution> {
        match self {
            Simulator::Ideal => run_ideal(circuit, init),
            Simulator::Noisy(noise) => run_noisy(circuit, init, noise),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Simulator::Ideal => "ideal",
            Simulator::Noisy(noise) => &noise.name,
        }
    }
}

/// Exact probabilities, or member distributions re-estimated from a finite shot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    #[default]
    Exact,
    Shots(u64),
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMode::Exact => f.write_str("exact"),
            EvalMode::Shots(n) => write!(f, "shots:{n}"),
        }
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(EvalMode::Exact);
        }
        let bad = || {
            Error::parse(
                "eval mode",
                format!("expected `exact` or `shots:<count>`, got `{s}`"),
            )
        };
        let count = s.strip_prefix("shots:").ok_or_else(bad)?;
        let n: u64 = count.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(Error::validation("shot count must be at least 1"));
        }
        Ok(EvalMode::Shots(n))
    }
}

impl Serialize for EvalMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EvalMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings for the vote combiner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteOptions {
    /// Above this many distinct count vectors the exact combiner gives way to sampling.
    pub exact_state_limit: u64,
    pub mc_samples: u64,
    pub mc_seed: u64,
}

impl Default for VoteOptions {
    fn default() -> Self {
        VoteOptions {
            exact_state_limit: 1_000_000,
            mc_samples: 1_000_000,
            mc_seed: 0,
        }
    }
}

/// Exact output distribution of a plurality vote over independent members, with
/// ties split uniformly among the tied values.
pub fn vote_distribution(members: &[OutputDistribution]) -> Result<OutputDistribution> {
    vote_distribution_with(members, &VoteOptions::default())
}

pub fn vote_distribution_with(
    members: &[OutputDistribution],
    options: &VoteOptions,
) -> Result<OutputDistribution> {
    let first = members
        .first()
        .ok_or_else(|| Error::validation("cannot vote over an empty member list"))?;
    let k = first.len();
    if members.iter().any(|m| m.len() != k) {
        return Err(Error::structural(
            "member distributions have different domains",
        ));
    }
    if members.len() == 1 {
        return Ok(first.clone());
    }
    let rows: Vec<&[f64]> = members.iter().map(|m| m.probs()).collect();
    let probs = if count_vectors(members.len(), k) > options.exact_state_limit as f64 {
        vote_monte_carlo(&rows, k, options.mc_samples.max(1), options.mc_seed)
    } else {
        vote_exact(&rows, k)
    };
    Ok(OutputDistribution::from_raw(probs))
}

/// Number of ways to distribute `n` votes over `k` values: `C(n+k−1, k−1)`.
fn count_vectors(n: usize, k: usize) -> f64 {
    let (top, r) = ((n + k - 1) as f64, (k - 1).min(n) as f64);
    (0..r as usize).fold(1.0, |acc, i| acc * (top - i as f64) / (i as f64 + 1.0))
}

/// Dynamic program over vote-count vectors: the joint distribution of the
/// count vector is built member by member, then each vector's mass is shared
/// among its argmax set.
fn vote_exact(rows: &[&[f64]], k: usize) -> Vec<f64> {
    let n = rows.len();
    let radix = n + 1;
    let dense_len = (radix as f64).powi(k as i32);
    if dense_len <= (1u64 << 22) as f64 {
        vote_exact_dense(rows, k, radix)
    } else {
        vote_exact_sparse(rows, k)
    }
}

fn vote_exact_dense(rows: &[&[f64]], k: usize, radix: usize) -> Vec<f64> {
    let size = radix.pow(k as u32);
    let place: Vec<usize> = (0..k).map(|v| radix.pow(v as u32)).collect();
    let mut mass = vec![0.0f64; size];
    let mut next = vec![0.0f64; size];
    let mut active = vec![0usize];
    let mut next_active = Vec::new();
    mass[0] = 1.0;
    for row in rows {
        next_active.clear();
        for &idx in &active {
            let m = mass[idx];
            mass[idx] = 0.0;
            for (v, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let j = idx + place[v];
                if next[j] == 0.0 {
                    next_active.push(j);
                }
                next[j] += m * p;
            }
        }
        std::mem::swap(&mut mass, &mut next);
        std::mem::swap(&mut active, &mut next_active);
    }
    let mut out = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for &idx in &active {
        let mut rest = idx;
        for c in counts.iter_mut() {
            *c = rest % radix;
            rest /= radix;
        }
        share_among_winners(&counts, std::mem::take(&mut mass[idx]), &mut out);
    }
    out
}

fn vote_exact_sparse(rows: &[&[f64]], k: usize) -> Vec<f64> {
    let mut layer: HashMap<Vec<u16>, f64> = HashMap::from([(vec![0u16; k], 1.0)]);
    for row in rows {
        let mut next: HashMap<Vec<u16>, f64> = HashMap::with_capacity(layer.len() * 2);
        for (counts, m) in &layer {
            for (v, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let mut c = counts.clone();
                c[v] += 1;
                *next.entry(c).or_insert(0.0) += m * p;
            }
        }
        layer = next;
    }
    let mut out = vec![0.0; k];
    // Sum in a fixed order so results do not depend on hash iteration order.
    let mut entries: Vec<_> = layer.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    for (counts, m) in entries {
        let counts: Vec<usize> = counts.into_iter().map(usize::from).collect();
        share_among_winners(&counts, m, &mut out);
    }
    out
}

fn share_among_winners(counts: &[usize], mass: f64, out: &mut [f64]) {
    let best = counts.iter().copied().max().unwrap_or(0);
    let winners = counts.iter().filter(|&&c| c == best).count();
    let share = mass / winners as f64;
    for (v, &c) in counts.iter().enumerate() {
        if c == best {
            out[v] += share;
        }
    }
}

fn vote_monte_carlo(rows: &[&[f64]], k: usize, samples: u64, seed: u64) -> Vec<f64> {
    let mut rng = seed::stream(seed, &[0x766f_7465]);
    let cdfs: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let w = 1.0 / samples as f64;
    for _ in 0..samples {
        counts.iter_mut().for_each(|c| *c = 0);
        for cdf in &cdfs {
            counts[draw(cdf, &mut rng)] += 1;
        }
        share_among_winners(&counts, w, &mut out);
    }
    out
}

fn draw<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Tests prepared once, reused across many ensemble evaluations.
#[derive(Debug, Clone)]
pub struct PreparedTests {
    tests: Vec<TestCase>,
    states: Vec<StateVector>,
    num_outputs: usize,
}

impl PreparedTests {
    pub fn new(tests: &[TestCase], num_qubits: usize, num_outputs: usize) -> Result<Self> {
        if tests.is_empty() {
            return Err(Error::validation("fitness needs at least one test case"));
        }
        let states = tests
            .iter()
            .map(|t| {
                t.validate(num_qubits, num_outputs)?;
                t.initial_state(num_qubits)
            })
            .collect::<Result<_>>()?;
        Ok(PreparedTests {
            tests: tests.to_vec(),
            states,
            num_outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn tests(&self) -> &[TestCase] {
        &self.tests
    }

    /// Fitness of `ensemble`. In shots mode `seed` roots an RNG stream per
    /// (test index, member index) pair.
    pub fn fitness(
        &self,
        ensemble: &Ensemble,
        sim: &Simulator,
        mode: EvalMode,
        seed: u64,
    ) -> Result<FitnessReport> {
        let num_qubits = self.states[0].num_qubits();
        if ensemble.num_qubits() != num_qubits
            || ensemble.circuits()[0].num_outputs() != self.num_outputs
        {
            return Err(Error::structural(
                "ensemble dimensions do not match the prepared tests",
            ));
        }
        let circuits = ensemble.circuits();
        // Identical members share one simulation.
        let mut slot = Vec::with_capacity(circuits.len());
        let mut unique: Vec<&Circuit> = Vec::new();
        for c in circuits {
            match unique.iter().position(|u| *u == c) {
                Some(i) => slot.push(i),
                None => {
                    slot.push(unique.len());
                    unique.push(c);
                }
            }
        }
        let mut per_test = Vec::with_capacity(self.len());
        let mut members = Vec::with_capacity(circuits.len());
        for (t, (test, state)) in self.tests.iter().zip(&self.states).enumerate() {
            let dists = unique
                .iter()
                .map(|c| sim.run(c, state))
                .collect::<Result<Vec<_>>>()?;
            members.clear();
            for (m, &s) in slot.iter().enumerate() {
                let d = match mode {
                    EvalMode::Exact => dists[s].clone(),
                    EvalMode::Shots(shots) => {
                        let mut rng = seed::stream(seed, &[t as u64, m as u64]);
                        sample_shots(&dists[s], shots, &mut rng)?
                    }
                };
                members.push(d);
            }
            let vote = vote_distribution(&members)?;
            per_test.push(vote.prob(test.expected));
        }
        Ok(FitnessReport::from_per_test(per_test))
    }
}

/// One-shot fitness evaluation; prefer [`PreparedTests`] when evaluating many ensembles.
pub fn ensemble_fitness(
    ensemble: &Ensemble,
    tests: &[TestCase],
    sim: &Simulator,
    mode: EvalMode,
    seed: u64,
) -> Result<FitnessReport> {
    ensemble.validate()?;
    let prepared = PreparedTests::new(
        tests,
        ensemble.num_qubits(),
        ensemble.circuits()[0].num_outputs(),
    )?;
    prepared.fitness(ensemble, sim, mode, seed)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;

    use super::*;

    fn dist(p: &[f64]) -> OutputDistribution {
        OutputDistribution::new(p.to_vec()).unwrap()
    }

    /// Independent oracle: walk all k^n joint outcomes.
    fn enumerate_votes(members: &[OutputDistribution]) -> Vec<f64> {
        let k = members[0].len();
        let n = members.len();
        let mut out = vec![0.0; k];
        let total = k.pow(n as u32);
        for joint in 0..total {
            let mut rest = joint;
            let mut p = 1.0;
            let mut counts = vec![0usize; k];
            for m in members {
                let v = rest % k;
                rest /= k;
                p *= m.prob(v);
                counts[v] += 1;
            }
            let best = *counts.iter().max().unwrap();
            let winners: Vec<usize> = (0..k).filter(|&v| counts[v] == best).collect();
            for v in &winners {
                out[*v] += p / winners.len() as f64;
            }
        }
        out
    }

    #[test]
    fn single_member_passes_through() {
        let d = dist(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(vote_distribution(std::slice::from_ref(&d)).unwrap(), d);
    }

    #[test]
    fn strict_majority_wins() {
        let a = OutputDistribution::point(4, 2).unwrap();
        let b = OutputDistribution::point(4, 1).unwrap();
        let v = vote_distribution(&[a.clone(), a, b]).unwrap();
        assert_eq!(v.probs(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_way_tie_splits_evenly() {
        let a = OutputDistribution::point(4, 0).unwrap();
        let b = OutputDistribution::point(4, 3).unwrap();
        let v = vote_distribution(&[a, b]).unwrap();
        assert_eq!(v.probs(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn hand_enumerated_pair() {
        // Joint outcomes: (0,0)=0.30 -> 0; (1,1)=0.20 -> 1; (0,1)=0.30 and (1,0)=0.20 tie.
        let v = vote_distribution(&[dist(&[0.6, 0.4]), dist(&[0.5, 0.5])]).unwrap();
        assert!((v.prob(0) - 0.55).abs() < 1e-15);
        assert!((v.prob(1) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn vote_errors() {
        assert!(matches!(vote_distribution(&[]), Err(Error::Validation(_))));
        assert!(matches!(
            vote_distribution(&[dist(&[0.5, 0.5]), dist(&[0.25; 4])]),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn binomial_majority_of_three() {
        let p = 0.6;
        let c = dist(&[p, 1.0 - p]);
        let v = vote_distribution(&[c.clone(), c.clone(), c]).unwrap();
        let formula = p.powi(3) + 3.0 * p * p * (1.0 - p);
        assert!((formula - 0.648).abs() < 1e-12);
        assert!((v.prob(0) - formula).abs() < 1e-12);
    }

    #[test]
    fn condorcet_amplification_for_odd_sizes() {
        for i in 1..50 {
            let p = 0.5 + i as f64 / 100.0;
            for n in [3usize, 5, 7] {
                let members = vec![dist(&[p, 1.0 - p]); n];
                let v = vote_distribution(&members).unwrap();
                assert!(v.prob(0) >= p - 1e-12, "p={p} n={n}");
            }
        }
    }

    #[test]
    fn sparse_and_monte_carlo_paths_agree_with_dense() {
        let members = vec![
            dist(&[0.1, 0.2, 0.3, 0.4]),
            dist(&[0.4, 0.3, 0.2, 0.1]),
            dist(&[0.25, 0.25, 0.25, 0.25]),
        ];
        let rows: Vec<&[f64]> = members.iter().map(|m| m.probs()).collect();
        let dense = vote_exact_dense(&rows, 4, 4);
        let sparse = vote_exact_sparse(&rows, 4);
        let brute = enumerate_votes(&members);
        for v in 0..4 {
            assert!((dense[v] - brute[v]).abs() < 1e-12);
            assert!((sparse[v] - brute[v]).abs() < 1e-12);
        }
        let opts = VoteOptions {
            exact_state_limit: 1,
            mc_samples: 400_000,
            mc_seed: 5,
        };
        let mc = vote_distribution_with(&members, &opts).unwrap();
        let tv: f64 = 0.5 * (0..4).map(|v| (mc.prob(v) - brute[v]).abs()).sum::<f64>();
        assert!(tv < 0.01, "tv={tv}");
    }

    #[test]
    fn count_vectors_matches_binomial() {
        assert_eq!(count_vectors(7, 4), 120.0);
        assert_eq!(count_vectors(1, 2), 2.0);
        assert_eq!(count_vectors(3, 1), 1.0);
    }

    fn bell() -> Circuit {
        Circuit::new(
            4,
            vec![0, 1],
            vec![Gate::u(0, FRAC_PI_2, 0.0, PI), Gate::cx(0, 1)],
        )
        .unwrap()
    }

    fn zero_test() -> TestCase {
        TestCase::from_features(vec![0.0; 4], 0)
    }

    #[test]
    fn empty_circuits_are_perfect() {
        let e = Ensemble::new(vec![Circuit::empty(4, vec![0, 1]).unwrap(); 3]).unwrap();
        let r =
            ensemble_fitness(&e, &[zero_test()], &Simulator::Ideal, EvalMode::Exact, 0).unwrap();
        assert_eq!(r.fitness, 1.0);
    }

    #[test]
    fn bell_singleton_scores_half() {
        let e = replicate_homogeneous(&bell(), 1).unwrap();
        let r =
            ensemble_fitness(&e, &[zero_test()], &Simulator::Ideal, EvalMode::Exact, 0).unwrap();
        assert!((r.fitness - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pair_vote_as_fitness() {
        // Member A: P(0)=0.6 via Y-rotation; member B: Hadamard-like P(0)=0.5.
        let theta_a = 2.0 * 0.6f64.sqrt().acos();
        let a = Circuit::new(1, vec![0], vec![Gate::u(0, theta_a, 0.0, 0.0)]).unwrap();
        let b = Circuit::new(1, vec![0], vec![Gate::u(0, FRAC_PI_2, 0.0, 0.0)]).unwrap();
        let e = Ensemble::new(vec![a, b]).unwrap();
        let t = TestCase::from_gates(vec![], 0);
        let r = ensemble_fitness(&e, &[t], &Simulator::Ideal, EvalMode::Exact, 0).unwrap();
        assert!((r.fitness - 0.55).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_replication() {
        assert!(matches!(
            replicate_homogeneous(&bell(), 0),
            Err(Error::Validation(_))
        ));
        let det = Circuit::new(4, vec![0, 1], vec![Gate::u(0, PI, 0.0, PI)]).unwrap();
        let tests = [zero_test(), TestCase::from_features(vec![0.0; 4], 1)];
        let one = ensemble_fitness(
            &replicate_homogeneous(&det, 1).unwrap(),
            &tests,
            &Simulator::Ideal,
            EvalMode::Exact,
            0,
        )
        .unwrap();
        let seven = ensemble_fitness(
            &replicate_homogeneous(&det, 7).unwrap(),
            &tests,
            &Simulator::Ideal,
            EvalMode::Exact,
            0,
        )
        .unwrap();
        for (a, b) in one.per_test.iter().zip(&seven.per_test) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((one.fitness - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_tests_rejected() {
        let e = replicate_homogeneous(&bell(), 1).unwrap();
        assert!(matches!(
            ensemble_fitness(&e, &[], &Simulator::Ideal, EvalMode::Exact, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn shots_mode_is_deterministic_and_close() {
        let e =
            Ensemble::new(vec![bell(), bell(), Circuit::empty(4, vec![0, 1]).unwrap()]).unwrap();
        let tests = [zero_test()];
        let exact = ensemble_fitness(&e, &tests, &Simulator::Ideal, EvalMode::Exact, 0).unwrap();
        let a = ensemble_fitness(&e, &tests, &Simulator::Ideal, EvalMode::Shots(1000), 11).unwrap();
        let b = ensemble_fitness(&e, &tests, &Simulator::Ideal, EvalMode::Shots(1000), 11).unwrap();
        assert_eq!(a, b);
        assert!((a.fitness - exact.fitness).abs() < 0.1);
    }

    #[test]
    fn ensemble_homogeneity_enforced() {
        let a = Circuit::empty(4, vec![0, 1]).unwrap();
        let b = Circuit::empty(3, vec![0, 1]).unwrap();
        let c = Circuit::empty(4, vec![1, 0]).unwrap();
        assert!(Ensemble::new(vec![]).is_err());
        assert!(Ensemble::new(vec![a.clone(), b]).is_err());
        assert!(Ensemble::new(vec![a, c]).is_err());
    }

    #[test]
    fn test_case_lines() {
        let text = "{\"features\":[0.1,0.2,0.3,0.4],\"expected\":2}\n\n{\"init_gates\":[{\"gate\":\"cx\",\"control\":0,\"target\":1}],\"expected\":0}\n";
        let tests = read_test_cases(text.as_bytes(), "mem").unwrap();
        assert_eq!(tests.len(), 2);
        assert_eq!(tests[0].expected, 2);
        assert_eq!(tests[1].init, TestInit::Gates(vec![Gate::cx(0, 1)]));
        let mut out = Vec::new();
        write_test_cases(&mut out, &tests).unwrap();
        assert_eq!(read_test_cases(out.as_slice(), "mem").unwrap(), tests);

        let both = "{\"features\":[0.1],\"init_gates\":[],\"expected\":0}";
        let err = read_test_cases(both.as_bytes(), "f.jsonl").unwrap_err();
        assert!(err.to_string().contains("f.jsonl:1"));
    }

    #[test]
    fn eval_mode_strings() {
        assert_eq!("exact".parse::<EvalMode>().unwrap(), EvalMode::Exact);
        assert_eq!(
            "shots:1000".parse::<EvalMode>().unwrap(),
            EvalMode::Shots(1000)
        );
        assert!("shots:0".parse::<EvalMode>().is_err());
        assert!("many".parse::<EvalMode>().is_err());
        assert_eq!(EvalMode::Shots(7).to_string(), "shots:7");
    }

    fn member_dists(k: usize, n: usize) -> impl Strategy<Value = Vec<OutputDistribution>> {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), n).prop_map(|rows| {
            rows.into_iter()
                .map(|mut r| {
                    r[0] += 1e-3;
                    let s: f64 = r.iter().sum();
                    OutputDistribution::new(r.iter().map(|x| x / s).collect()).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn vote_matches_enumeration(members in (1usize..=5, prop::sample::select(vec![2usize, 4]))
            .prop_flat_map(|(n, k)| member_dists(k, n)))
        {
            let v = vote_distribution(&members).unwrap();
            let brute = enumerate_votes(&members);
            prop_assert!(v.is_valid());
            for (a, b) in v.probs().iter().zip(&brute) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn vote_is_permutation_invariant(members in member_dists(4, 4), rot in 0usize..4) {
            let mut shuffled = members.clone();
            shuffled.rotate_left(rot);
            shuffled.swap(0, 3);
            let a = vote_distribution(&members).unwrap();
            let b = vote_distribution(&shuffled).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
