//! Exact statevector simulation of U/CX gate lists.
//!
//! Qubit 0 is the least-significant bit of every basis index and of every
//! classical output value. Global phase is never observable here: only
//! measurement probabilities leave this module.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the statevector simulator accepts.
pub const MAX_QUBITS: usize = 16;

const NORM_TOLERANCE: f64 = 1e-10;
const DIST_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    /// Generic single-qubit rotation
    /// `[[cos(θ/2), −e^{iλ} sin(θ/2)], [e^{iφ} sin(θ/2), e^{i(φ+λ)} cos(θ/2)]]`.
    U {
        target: usize,
        theta: f64,
        phi: f64,
        lambda: f64,
    },
    /// Controlled-NOT.
    Cx { control: usize, target: usize },
}

impl Gate {
    pub fn u(target: usize, theta: f64, phi: f64, lambda: f64) -> Self {
        Gate::U {
            target,
            theta,
            phi,
            lambda,
        }
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Gate::Cx { control, target }
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        match *self {
            Gate::U {
                target,
                theta,
                phi,
                lambda,
            } => {
                check_qubit(target, num_qubits)?;
                if !(theta.is_finite() && phi.is_finite() && lambda.is_finite()) {
                    return Err(Error::validation(format!(
                        "U gate angles must be finite, got ({theta}, {phi}, {lambda})"
                    )));
                }
            }
            Gate::Cx { control, target } => {
                check_qubit(control, num_qubits)?;
                check_qubit(target, num_qubits)?;
                if control == target {
                    return Err(Error::structural(format!(
                        "CX control and target are both qubit {control}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The 2×2 unitary of a U gate, row-major.
    pub fn u_matrix(theta: f64, phi: f64, lambda: f64) -> [Complex64; 4] {
        let (s, c) = (theta / 2.0).sin_cos();
        [
            Complex64::new(c, 0.0),
            -Complex64::from_polar(s, lambda),
            Complex64::from_polar(s, phi),
            Complex64::from_polar(c, phi + lambda),
        ]
    }
}

fn check_qubit(q: usize, num_qubits: usize) -> Result<()> {
    if q >= num_qubits {
        return Err(Error::structural(format!(
            "qubit index {q} out of range for a {num_qubits}-qubit register"
        )));
    }
    Ok(())
}

/// Ordered gate list over an `num_qubits` register. Position `i` of
/// `measured_qubits` produces classical bit `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_qubits: usize,
    measured_qubits: Vec<usize>,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(num_qubits: usize, measured_qubits: Vec<usize>, gates: Vec<Gate>) -> Result<Self> {
        let circuit = Circuit {
            num_qubits,
            measured_qubits,
            gates,
        };
        circuit.validate()?;
        Ok(circuit)
    }

    pub fn empty(num_qubits: usize, measured_qubits: Vec<usize>) -> Result<Self> {
        Self::new(num_qubits, measured_qubits, Vec::new())
    }

    /// Re-check every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return Err(Error::structural(format!(
                "register width {} outside 1..={MAX_QUBITS}",
                self.num_qubits
            )));
        }
        if self.measured_qubits.is_empty() {
            return Err(Error::structural(
                "a circuit must measure at least one qubit",
            ));
        }
        for (i, &q) in self.measured_qubits.iter().enumerate() {
            check_qubit(q, self.num_qubits)?;
            if self.measured_qubits[..i].contains(&q) {
                return Err(Error::structural(format!("qubit {q} measured twice")));
            }
        }
        for gate in &self.gates {
            gate.validate(self.num_qubits)?;
        }
        Ok(())
    }

    pub fn validate_cap(&self, gate_cap: usize) -> Result<()> {
        if self.gates.len() > gate_cap {
            return Err(Error::validation(format!(
                "circuit has {} gates, cap is {gate_cap}",
                self.gates.len()
            )));
        }
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn measured_qubits(&self) -> &[usize] {
        &self.measured_qubits
    }

    pub fn num_outputs(&self) -> usize {
        1 << self.measured_qubits.len()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Replace the gate list. Each gate is validated against the register.
    pub fn with_gates(&self, gates: Vec<Gate>) -> Result<Self> {
        Circuit::new(self.num_qubits, self.measured_qubits.clone(), gates)
    }

    /// Unchecked variant for operators that already guarantee gate validity.
    pub(crate) fn with_gates_unchecked(&self, gates: Vec<Gate>) -> Self {
        debug_assert!(gates.iter().all(|g| g.validate(self.num_qubits).is_ok()));
        Circuit {
            num_qubits: self.num_qubits,
            measured_qubits: self.measured_qubits.clone(),
            gates,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::structural(format!(
                "register width {num_qubits} outside 1..={MAX_QUBITS}"
            )));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::structural(format!(
                "basis index {index} out of range for {num_qubits} qubits"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() || dim > 1 << MAX_QUBITS {
            return Err(Error::structural(format!(
                "amplitude vector length {dim} is not a supported power of two"
            )));
        }
        let state = StateVector {
            num_qubits: dim.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::validation(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    /// Apply `gates` in order starting from `|0…0⟩`.
    pub fn prepared(num_qubits: usize, gates: &[Gate]) -> Result<Self> {
        let mut state = Self::zero(num_qubits)?;
        for gate in gates {
            state.apply(gate)?;
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::U {
                target,
                theta,
                phi,
                lambda,
            } => self.apply_u(target, theta, phi, lambda),
            Gate::Cx { control, target } => self.apply_cx(control, target),
        }
    }

    pub fn apply_u(&mut self, target: usize, theta: f64, phi: f64, lambda: f64) -> Result<()> {
        Gate::u(target, theta, phi, lambda).validate(self.num_qubits)?;
        let m = Gate::u_matrix(theta, phi, lambda);
        let stride = 1usize << target;
        for base in (0..self.amplitudes.len()).step_by(stride << 1) {
            for i0 in base..base + stride {
                let i1 = i0 | stride;
                let a0 = self.amplitudes[i0];
                let a1 = self.amplitudes[i1];
                self.amplitudes[i0] = m[0] * a0 + m[1] * a1;
                self.amplitudes[i1] = m[2] * a0 + m[3] * a1;
            }
        }
        Ok(())
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) -> Result<()> {
        Gate::cx(control, target).validate(self.num_qubits)?;
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
        Ok(())
    }

    /// Exact probabilities of the measured-bit patterns.
    pub fn marginal(&self, measured_qubits: &[usize]) -> Result<OutputDistribution> {
        for &q in measured_qubits {
            check_qubit(q, self.num_qubits)?;
        }
        let mut probs = vec![0.0; 1 << measured_qubits.len()];
        for (index, amp) in self.amplitudes.iter().enumerate() {
            probs[output_value(index, measured_qubits)] += amp.norm_sqr();
        }
        Ok(OutputDistribution::from_raw(probs))
    }
}

/// Classical output value of basis index `index` when `measured` qubits are read.
#[inline]
pub(crate) fn output_value(index: usize, measured: &[usize]) -> usize {
    measured
        .iter()
        .enumerate()
        .fold(0, |acc, (bit, &q)| acc | (((index >> q) & 1) << bit))
}

/// Probability vector over the `2^m` classical outputs of `m` measured bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputDistribution {
    probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 || !probs.len().is_power_of_two() {
            return Err(Error::structural(format!(
                "distribution length {} is not a power of two ≥ 2",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("probability {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DIST_TOLERANCE {
            return Err(Error::validation(format!("probabilities sum to {total}")));
        }
        Ok(OutputDistribution { probs })
    }

    /// Point mass on `value` over `num_outputs` outcomes.
    pub fn point(num_outputs: usize, value: usize) -> Result<Self> {
        if value >= num_outputs {
            return Err(Error::structural(format!(
                "value {value} outside a domain of {num_outputs}"
            )));
        }
        let mut probs = vec![0.0; num_outputs];
        probs[value] = 1.0;
        Self::new(probs)
    }

    /// Clamp rounding residue into `[0, 1]` without other checks.
    pub(crate) fn from_raw(mut probs: Vec<f64>) -> Self {
        for p in &mut probs {
            *p = p.clamp(0.0, 1.0);
        }
        OutputDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_bits(&self) -> usize {
        self.probs.len().trailing_zeros() as usize
    }

    pub fn prob(&self, value: usize) -> f64 {
        self.probs.get(value).copied().unwrap_or(0.0)
    }

    pub fn total_variation(&self, other: &OutputDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn is_valid(&self) -> bool {
        self.probs.iter().all(|p| (0.0..=1.0).contains(p))
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= DIST_TOLERANCE
    }
}

/// Apply every gate of `circuit` to `init` and return the exact measured-bit marginals.
pub fn run_ideal(circuit: &Circuit, init: &StateVector) -> Result<OutputDistribution> {
    if init.num_qubits() != circuit.num_qubits() {
        return Err(Error::structural(format!(
            "initial state has {} qubits, circuit expects {}",
            init.num_qubits(),
            circuit.num_qubits()
        )));
    }
    let mut state = init.clone();
    for gate in circuit.gates() {
        state.apply(gate)?;
    }
    state.marginal(circuit.measured_qubits())
}

/// Empirical distribution of `shots` independent draws from `dist`.
///
/// Counts are drawn as a chain of conditional binomials, which has the same
/// law as `shots` categorical draws at `O(len)` cost.
pub fn sample_shots<R: Rng + ?Sized>(
    dist: &OutputDistribution,
    shots: u64,
    rng: &mut R,
) -> Result<OutputDistribution> {
    if shots == 0 {
        return Err(Error::validation("shot count must be at least 1"));
    }
    let mut counts = vec![0u64; dist.len()];
    let mut remaining = shots;
    let mut mass: f64 = dist.probs.iter().sum();
    for (value, &p) in dist.probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let drawn = if value + 1 == dist.len() || p >= mass {
            remaining
        } else if p <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q)
                .map_err(|e| Error::validation(e.to_string()))?
                .sample(rng)
        };
        counts[value] = drawn;
        remaining -= drawn;
        mass -= p;
    }
    let probs = counts
        .into_iter()
        .map(|c| c as f64 / shots as f64)
        .collect();
    Ok(OutputDistribution::from_raw(probs))
}

/// `(|0⟩ + |1⟩)/√2` amplitude, exposed for tests and examples.
pub const HALF_AMPLITUDE: f64 = FRAC_1_SQRT_2;
