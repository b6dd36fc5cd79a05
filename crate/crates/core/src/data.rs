//! Iris ingestion, angle encoding, and the evolution/evaluation split.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ensemble::TestCase;
use crate::error::{Error, Result};
use crate::seed;

pub const NUM_FEATURES: usize = 4;
pub const EXAMPLES_PER_CLASS: usize = 50;

/// The canonical 150-row Iris file shipped with the crate.
pub const BUNDLED_IRIS: &str = include_str!("../data/iris.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    Setosa,
    Versicolor,
    Virginica,
}

impl Species {
    pub const ALL: [Species; 3] = [Species::Setosa, Species::Versicolor, Species::Virginica];

    /// Two-bit class code: setosa 00, versicolor 01, virginica 10.
    pub fn code(self) -> usize {
        match self {
            Species::Setosa => 0b00,
            Species::Versicolor => 0b01,
            Species::Virginica => 0b10,
        }
    }
}

/// Output value that no species maps to.
pub const INVALID_CLASS: usize = 0b11;

impl FromStr for Species {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let name = s.trim().to_ascii_lowercase();
        match name.strip_prefix("iris-").unwrap_or(&name) {
            "setosa" => Ok(Species::Setosa),
            "versicolor" => Ok(Species::Versicolor),
            "virginica" => Ok(Species::Virginica),
            _ => Err(format!("unknown species `{}`", s.trim())),
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Species::Setosa => "Iris-setosa",
            Species::Versicolor => "Iris-versicolor",
            Species::Virginica => "Iris-virginica",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// Sepal length, sepal width, petal length, petal width (cm).
    pub features: [f64; NUM_FEATURES],
    pub species: Species,
}

/// Parse rows of `f1,f2,f3,f4,species`. Blank lines are skipped.
pub fn parse_examples(text: &str, origin: &str) -> Result<Vec<LabeledExample>> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{origin}:{}", i + 1);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_FEATURES + 1 {
            return Err(Error::parse(
                at(),
                format!(
                    "expected {} columns, found {} in `{line}`",
                    NUM_FEATURES + 1,
                    fields.len()
                ),
            ));
        }
        let mut features = [0.0; NUM_FEATURES];
        for (slot, field) in features.iter_mut().zip(&fields) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(at(), format!("`{}` is not a number", field.trim())))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parse(
                    at(),
                    format!("feature {v} must be finite and positive"),
                ));
            }
            *slot = v;
        }
        let species = fields[NUM_FEATURES]
            .parse()
            .map_err(|e| Error::parse(at(), e))?;
        examples.push(LabeledExample { features, species });
    }
    if examples.is_empty() {
        return Err(Error::parse(origin, "no examples found"));
    }
    Ok(examples)
}

/// Parse and require the canonical shape: 150 rows, 50 per species.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<LabeledExample>> {
    let examples = parse_examples(text, origin)?;
    let counts = class_counts(&examples);
    if counts != [EXAMPLES_PER_CLASS; 3] {
        return Err(Error::validation(format!(
            "{origin}: expected {EXAMPLES_PER_CLASS} examples per class, found {counts:?}"
        )));
    }
    Ok(examples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

pub fn bundled_dataset() -> Vec<LabeledExample> {
    parse_dataset(BUNDLED_IRIS, "iris.csv").expect("bundled dataset is valid")
}

pub fn class_counts(examples: &[LabeledExample]) -> [usize; 3] {
    let mut counts = [0; 3];
    for e in examples {
        counts[e.species as usize] += 1;
    }
    counts
}

/// Per-feature min–max ranges plus the class map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub mins: [f64; NUM_FEATURES],
    pub maxs: [f64; NUM_FEATURES],
}

impl EncodingSpec {
    pub fn from_examples(examples: &[LabeledExample]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::validation(
                "cannot derive an encoding from no examples",
            ));
        }
        let mut mins = [f64::INFINITY; NUM_FEATURES];
        let mut maxs = [f64::NEG_INFINITY; NUM_FEATURES];
        for e in examples {
            for j in 0..NUM_FEATURES {
                mins[j] = mins[j].min(e.features[j]);
                maxs[j] = maxs[j].max(e.features[j]);
            }
        }
        let spec = EncodingSpec { mins, maxs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..NUM_FEATURES {
            if self.mins[j].partial_cmp(&self.maxs[j]) != Some(std::cmp::Ordering::Less) {
                return Err(Error::validation(format!(
                    "feature {j} has a degenerate range [{}, {}]",
                    self.mins[j], self.maxs[j]
                )));
            }
        }
        Ok(())
    }

    /// `π · (x − min)/(max − min)`, clamped to `[0, π]`.
    pub fn angle(&self, feature: usize, value: f64) -> f64 {
        let t = (value - self.mins[feature]) / (self.maxs[feature] - self.mins[feature]);
        PI * t.clamp(0.0, 1.0)
    }
}

/// One qubit per feature, prepared by `U(θ_j, 0, 0)`; the species code is the expected output.
pub fn encode(example: &LabeledExample, spec: &EncodingSpec) -> Result<TestCase> {
    spec.validate()?;
    let angles = (0..NUM_FEATURES)
        .map(|j| spec.angle(j, example.features[j]))
        .collect();
    Ok(TestCase::from_features(angles, example.species.code()))
}

pub fn encode_all(examples: &[LabeledExample], spec: &EncodingSpec) -> Result<Vec<TestCase>> {
    examples.iter().map(|e| encode(e, spec)).collect()
}

/// Uniform random partition into `(n_evolution, rest)`, deterministic per seed.
pub fn split<T: Clone>(items: &[T], n_evolution: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    check_split(items.len(), n_evolution)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seed::stream(seed, &[0x73706c69]));
    Ok(partition(items, &order, n_evolution))
}

/// Like [`split`] but keeps each group's share as even as possible.
/// `groups[i]` labels `items[i]`.
pub fn split_stratified<T: Clone, G: Ord + Copy>(
    items: &[T],
    groups: &[G],
    n_evolution: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    check_split(items.len(), n_evolution)?;
    if groups.len() != items.len() {
        return Err(Error::structural("one group label is needed per item"));
    }
    let mut rng = seed::stream(seed, &[0x73747261]);
    let mut labels: Vec<G> = groups.to_vec();
    labels.sort();
    labels.dedup();
    let mut buckets: Vec<Vec<usize>> = labels
        .iter()
        .map(|g| (0..items.len()).filter(|&i| groups[i] == *g).collect())
        .collect();
    for b in &mut buckets {
        b.shuffle(&mut rng);
    }
    // Largest-remainder allocation of n_evolution across groups.
    let total = items.len() as f64;
    let exact: Vec<f64> = buckets
        .iter()
        .map(|b| n_evolution as f64 * b.len() as f64 / total)
        .collect();
    let mut take: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..buckets.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut missing = n_evolution - take.iter().sum::<usize>();
    for &g in by_remainder.iter().cycle() {
        if missing == 0 {
            break;
        }
        if take[g] < buckets[g].len() {
            take[g] += 1;
            missing -= 1;
        }
    }
    let mut first: Vec<usize> = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (b, &t) in buckets.iter().zip(&take) {
        first.extend(&b[..t]);
        rest.extend(&b[t..]);
    }
    first.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    let order: Vec<usize> = first.into_iter().chain(rest).collect();
    Ok(partition(items, &order, n_evolution))
}

fn check_split(total: usize, n_evolution: usize) -> Result<()> {
    if n_evolution == 0 || n_evolution >= total {
        return Err(Error::validation(format!(
            "evolution set size {n_evolution} must be in 1..{total}"
        )));
    }
    Ok(())
}

fn partition<T: Clone>(items: &[T], order: &[usize], n: usize) -> (Vec<T>, Vec<T>) {
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    (pick(&order[..n]), pick(&order[n..]))
}
