//! Parametric noise: depolarizing channels after gates plus classical readout flips,
//! simulated exactly on a density matrix.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{output_value, Circuit, Gate, OutputDistribution, StateVector};

/// Largest register the density-matrix simulator accepts.
pub const MAX_DENSITY_QUBITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub name: String,
    /// Depolarizing probability applied to the target after every U gate.
    pub p1: f64,
    /// Depolarizing probability applied jointly to both operands after every CX.
    pub p2: f64,
    pub readout_flip_0to1: f64,
    pub readout_flip_1to0: f64,
}

const PRESETS: [(&str, &str); 10] = [
    ("quiet", include_str!("../presets/quiet.toml")),
    ("calm", include_str!("../presets/calm.toml")),
    ("mild", include_str!("../presets/mild.toml")),
    ("balanced", include_str!("../presets/balanced.toml")),
    ("moderate", include_str!("../presets/moderate.toml")),
    (
        "readout-heavy",
        include_str!("../presets/readout-heavy.toml"),
    ),
    ("gate-heavy", include_str!("../presets/gate-heavy.toml")),
    (
        "entangler-heavy",
        include_str!("../presets/entangler-heavy.toml"),
    ),
    ("noisy", include_str!("../presets/noisy.toml")),
    ("harsh", include_str!("../presets/harsh.toml")),
];

impl NoiseModel {
    pub fn new(
        name: impl Into<String>,
        p1: f64,
        p2: f64,
        readout_flip_0to1: f64,
        readout_flip_1to0: f64,
    ) -> Result<Self> {
        let model = NoiseModel {
            name: name.into(),
            p1,
            p2,
            readout_flip_0to1,
            readout_flip_1to0,
        };
        model.validate()?;
        Ok(model)
    }

    /// All probabilities zero: reproduces ideal simulation.
    pub fn zero() -> Self {
        NoiseModel {
            name: "zero".into(),
            p1: 0.0,
            p2: 0.0,
            readout_flip_0to1: 0.0,
            readout_flip_1to0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, p) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("readout_flip_0to1", self.readout_flip_0to1),
            ("readout_flip_1to0", self.readout_flip_1to0),
        ] {
            check_probability(field, p)?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let model: NoiseModel =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.message().to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("noise model serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn preset_names() -> Vec<&'static str> {
        PRESETS.iter().map(|(name, _)| *name).collect()
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::from_toml_str(text, n).expect("shipped preset is valid"))
    }

    pub fn presets() -> Vec<Self> {
        Self::preset_names()
            .into_iter()
            .filter_map(Self::preset)
            .collect()
    }

    /// Resolve a preset name, or else treat `spec` as a path to a noise file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(model) = Self::preset(spec) {
            return Ok(model);
        }
        let path = Path::new(spec);
        if path.is_file() {
            return Self::load(path);
        }
        Err(Error::validation(format!(
            "unknown noise model '{spec}'; available presets: {}",
            Self::preset_names().join(", ")
        )))
    }
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!(
            "{what} = {p} is not a probability"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    dim: usize,
    /// Row-major `dim × dim`.
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    /// `|ψ⟩⟨ψ|`.
    pub fn from_state(state: &StateVector) -> Result<Self> {
        let num_qubits = state.num_qubits();
        if num_qubits > MAX_DENSITY_QUBITS {
            return Err(Error::structural(format!(
                "density matrices are limited to {MAX_DENSITY_QUBITS} qubits, got {num_qubits}"
            )));
        }
        let amps = state.amplitudes();
        let dim = amps.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for a in amps {
            for b in amps {
                entries.push(a * b.conj());
            }
        }
        Ok(DensityMatrix {
            num_qubits,
            dim,
            entries,
        })
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        let mut rho = Self::from_state(&StateVector::zero(num_qubits)?)?;
        let w = 1.0 / rho.dim as f64;
        for (k, e) in rho.entries.iter_mut().enumerate() {
            *e = if k % (rho.dim + 1) == 0 {
                Complex64::new(w, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        Ok(rho)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|ρ_ij − conj(ρ_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match *gate {
            Gate::U {
                target,
                theta,
                phi,
                lambda,
            } => self.apply_single(target, Gate::u_matrix(theta, phi, lambda)),
            Gate::Cx { control, target } => self.apply_cx(control, target),
        }
        Ok(())
    }

    fn apply_single(&mut self, target: usize, m: [Complex64; 4]) {
        let dim = self.dim;
        let stride = 1usize << target;
        let pairs = || {
            (0..dim)
                .step_by(stride << 1)
                .flat_map(move |base| (base..base + stride).map(move |i0| (i0, i0 | stride)))
        };
        // U ρ
        for col in 0..dim {
            for (r0, r1) in pairs() {
                let a0 = self.entries[r0 * dim + col];
                let a1 = self.entries[r1 * dim + col];
                self.entries[r0 * dim + col] = m[0] * a0 + m[1] * a1;
                self.entries[r1 * dim + col] = m[2] * a0 + m[3] * a1;
            }
        }
        // (U ρ) U†
        let mc = [m[0].conj(), m[1].conj(), m[2].conj(), m[3].conj()];
        for row in 0..dim {
            let r = &mut self.entries[row * dim..(row + 1) * dim];
            for (c0, c1) in pairs() {
                let a0 = r[c0];
                let a1 = r[c1];
                r[c0] = a0 * mc[0] + a1 * mc[1];
                r[c1] = a0 * mc[2] + a1 * mc[3];
            }
        }
    }

    fn apply_cx(&mut self, control: usize, target: usize) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        let flip = |i: usize| if i & cbit != 0 { i ^ tbit } else { i };
        let dim = self.dim;
        let old = self.entries.clone();
        for i in 0..dim {
            let fi = flip(i);
            for j in 0..dim {
                self.entries[i * dim + j] = old[fi * dim + flip(j)];
            }
        }
    }

    /// `ρ ← (1−p)·ρ + p·(Tr_Q ρ ⊗ I/2^k)` over the `k` listed qubits `Q`.
    pub fn depolarize(&mut self, qubits: &[usize], p: f64) -> Result<()> {
        check_probability("depolarizing probability", p)?;
        let mut mask = 0usize;
        for &q in qubits {
            if q >= self.num_qubits {
                return Err(Error::structural(format!(
                    "qubit {q} out of range for {} qubits",
                    self.num_qubits
                )));
            }
            if mask & (1 << q) != 0 {
                return Err(Error::structural(format!("qubit {q} listed twice")));
            }
            mask |= 1 << q;
        }
        if p == 0.0 || mask == 0 {
            return Ok(());
        }
        let dim = self.dim;
        let subsets: Vec<usize> = subsets_of(mask).collect();
        let weight = p / subsets.len() as f64;
        let old = self.entries.clone();
        for i in 0..dim {
            for j in 0..dim {
                let k = i * dim + j;
                let mut value = old[k] * (1.0 - p);
                if i & mask == j & mask {
                    let (ri, rj) = (i & !mask, j & !mask);
                    let traced: Complex64 = subsets
                        .iter()
                        .map(|&s| old[(ri | s) * dim + (rj | s)])
                        .sum();
                    value += traced * weight;
                }
                self.entries[k] = value;
            }
        }
        Ok(())
    }

    /// Diagonal probabilities grouped by measured-bit pattern.
    pub fn marginal(&self, measured_qubits: &[usize]) -> Result<OutputDistribution> {
        for &q in measured_qubits {
            if q >= self.num_qubits {
                return Err(Error::structural(format!(
                    "measured qubit {q} out of range"
                )));
            }
        }
        let mut probs = vec![0.0; 1 << measured_qubits.len()];
        for i in 0..self.dim {
            probs[output_value(i, measured_qubits)] += self.get(i, i).re;
        }
        Ok(OutputDistribution::from_raw(probs))
    }
}

/// Every submask of `mask`, including 0 and `mask` itself.
fn subsets_of(mask: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let current = next?;
        next = if current == 0 {
            None
        } else {
            Some((current - 1) & mask)
        };
        Some(current)
    })
}

/// Flip every classical bit independently: 0→1 with `flip_0to1`, 1→0 with `flip_1to0`.
pub fn apply_readout(
    dist: &OutputDistribution,
    flip_0to1: f64,
    flip_1to0: f64,
) -> Result<OutputDistribution> {
    check_probability("readout_flip_0to1", flip_0to1)?;
    check_probability("readout_flip_1to0", flip_1to0)?;
    let mut probs = dist.probs().to_vec();
    if flip_0to1 == 0.0 && flip_1to0 == 0.0 {
        return Ok(dist.clone());
    }
    for bit in 0..dist.num_bits() {
        let b = 1usize << bit;
        for v in (0..probs.len()).filter(|v| v & b == 0) {
            let (zero, one) = (probs[v], probs[v | b]);
            probs[v] = zero * (1.0 - flip_0to1) + one * flip_1to0;
            probs[v | b] = zero * flip_0to1 + one * (1.0 - flip_1to0);
        }
    }
    Ok(OutputDistribution::from_raw(probs))
}

/// Density-matrix simulation with depolarizing noise after each gate and
/// readout flips on the final distribution.
pub fn run_noisy(
    circuit: &Circuit,
    init: &StateVector,
    noise: &NoiseModel,
) -> Result<OutputDistribution> {
    noise.validate()?;
    if init.num_qubits() != circuit.num_qubits() {
        return Err(Error::structural(format!(
            "initial state has {} qubits, circuit expects {}",
            init.num_qubits(),
            circuit.num_qubits()
        )));
    }
    let mut rho = DensityMatrix::from_state(init)?;
    for gate in circuit.gates() {
        rho.apply(gate)?;
        match *gate {
            Gate::U { target, .. } => rho.depolarize(&[target], noise.p1)?,
            Gate::Cx { control, target } => rho.depolarize(&[control, target], noise.p2)?,
        }
    }
    let dist = rho.marginal(circuit.measured_qubits())?;
    apply_readout(&dist, noise.readout_flip_0to1, noise.readout_flip_1to0)
}
