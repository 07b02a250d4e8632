//! Agent features, the laws they are sampled from, and class proportions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedKey;

const WEIGHT_TOL: f64 = 1e-12;

/// Immutable characteristics of one agent. `kappa` is zero-based here; the
/// text interfaces (configs, CSV) number classes from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub xi: bool,
    pub kappa: usize,
    pub c0_row: Vec<f64>,
    pub threshold: f64,
}

/// Law of the adoption thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ThresholdLaw {
    Uniform01,
    PointMass { value: f64 },
    /// Finite mixture of atoms `(weight, value)`.
    Discrete { atoms: Vec<(f64, f64)> },
}

impl Default for ThresholdLaw {
    fn default() -> Self {
        ThresholdLaw::Uniform01
    }
}

impl ThresholdLaw {
    fn sample(&self, u: f64) -> f64 {
        match self {
            ThresholdLaw::Uniform01 => u,
            ThresholdLaw::PointMass { value } => *value,
            ThresholdLaw::Discrete { atoms } => pick(atoms.iter().map(|a| a.0), u).map_or(atoms[atoms.len() - 1].1, |i| atoms[i].1),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, ThresholdLaw::Uniform01)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub c0: Vec<f64>,
}

/// Conditional law of the influencer coefficients given the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMixture {
    pub components: Vec<MixtureComponent>,
}

impl ClassMixture {
    pub fn point(c0: Vec<f64>) -> Self {
        ClassMixture { components: vec![MixtureComponent { weight: 1.0, c0 }] }
    }
}

/// Distributional description of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    /// Class law, length K.
    pub mu: Vec<f64>,
    /// K x K inter-class influence matrix, rows indexed by the influenced class.
    pub inter_class: Vec<Vec<f64>>,
    /// Number of major influencers.
    pub influencers: usize,
    /// One coefficient mixture per class.
    pub mixture: Vec<ClassMixture>,
    #[serde(default)]
    pub threshold: ThresholdLaw,
    /// Per-class probability that the initial opinion is 1.
    pub initial: Vec<f64>,
    /// Probability of an influence event per agent and step.
    #[serde(default = "default_h")]
    pub h: f64,
    /// When set, validation also checks that every class/component satisfies
    /// `sum_l mu_l c_{k,l} + sum_m c0_m = 1`.
    #[serde(default)]
    pub enforce_normalization: bool,
}

fn default_h() -> f64 {
    1.0
}

impl PopulationSpec {
    pub fn classes(&self) -> usize {
        self.mu.len()
    }

    /// One class, one influencer, deterministic coefficient `c0`, uniform
    /// thresholds and Bernoulli(`initial`) initial opinions.
    pub fn single_class(c: f64, c0: f64, initial: f64) -> Self {
        PopulationSpec {
            mu: vec![1.0],
            inter_class: vec![vec![c]],
            influencers: 1,
            mixture: vec![ClassMixture::point(vec![c0])],
            threshold: ThresholdLaw::Uniform01,
            initial: vec![initial],
            h: 1.0,
            enforce_normalization: false,
        }
    }

    /// Two non-interacting communities: class 1 follows the influencer with
    /// weight 1/2, class 2 is repelled by it with probability `nu`. The
    /// inter-class weights are divided by the class masses so that each class
    /// reacts to the proportion of opinion 1 *within* its own class.
    pub fn echo_chamber(epsilon: f64, nu: f64, mu1: f64) -> Self {
        let mu2 = 1.0 - mu1;
        PopulationSpec {
            mu: vec![mu1, mu2],
            inter_class: vec![vec![0.5 / mu1, 0.0], vec![0.0, 1.0 / mu2]],
            influencers: 1,
            mixture: vec![
                ClassMixture::point(vec![0.5]),
                ClassMixture {
                    components: vec![
                        MixtureComponent { weight: 1.0 - nu, c0: vec![0.0] },
                        MixtureComponent { weight: nu, c0: vec![-1.0] },
                    ],
                },
            ],
            threshold: ThresholdLaw::Uniform01,
            initial: vec![epsilon, epsilon],
            h: 1.0,
            enforce_normalization: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 {
            return Err(Error::config("population.mu", "at least one class is required"));
        }
        check_probability_vector("population.mu", self.mu.iter().copied())?;
        if self.inter_class.len() != k || self.inter_class.iter().any(|r| r.len() != k) {
            return Err(Error::config("population.inter_class", format!("expected a {k}x{k} matrix")));
        }
        if self.inter_class.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("population.inter_class", "entries must be finite"));
        }
        if self.mixture.len() != k {
            return Err(Error::config("population.mixture", format!("expected {k} class mixtures, got {}", self.mixture.len())));
        }
        for (class, mix) in self.mixture.iter().enumerate() {
            let field = format!("population.mixture[{}]", class + 1);
            if mix.components.is_empty() {
                return Err(Error::config(field, "mixture has no components"));
            }
            check_probability_vector(&format!("{field}.weight"), mix.components.iter().map(|c| c.weight))?;
            for comp in &mix.components {
                if comp.c0.len() != self.influencers {
                    return Err(Error::config(
                        format!("{field}.c0"),
                        format!("expected {} coefficients, got {}", self.influencers, comp.c0.len()),
                    ));
                }
                if comp.c0.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config(format!("{field}.c0"), "coefficients must be finite"));
                }
            }
        }
        match &self.threshold {
            ThresholdLaw::Uniform01 => {}
            ThresholdLaw::PointMass { value } if !value.is_finite() => {
                return Err(Error::config("population.threshold.value", "must be finite"));
            }
            ThresholdLaw::PointMass { .. } => {}
            ThresholdLaw::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::config("population.threshold.atoms", "no atoms"));
                }
                check_probability_vector("population.threshold.atoms", atoms.iter().map(|a| a.0))?;
            }
        }
        if self.initial.len() != k {
            return Err(Error::config("population.initial", format!("expected {k} probabilities")));
        }
        if self.initial.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::config("population.initial", "probabilities must lie in [0, 1]"));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::config("population.h", format!("influence probability {} is outside (0, 1]", self.h)));
        }
        if self.enforce_normalization {
            self.check_normalization()?;
        }
        Ok(())
    }

    /// Checks `sum_l mu_l c_{k,l} + sum_m c0_m = 1` for every class and
    /// every coefficient component.
    pub fn check_normalization(&self) -> Result<()> {
        for (k, (row, mix)) in self.inter_class.iter().zip(&self.mixture).enumerate() {
            let social: f64 = row.iter().zip(&self.mu).map(|(c, m)| c * m).sum();
            for comp in &mix.components {
                let total = social + comp.c0.iter().sum::<f64>();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(
                        format!("population.mixture[{}]", k + 1),
                        format!("weights sum to {total}, normalization requires 1"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `P[xi = 1, kappa = k]` for each class.
    pub fn initial_proportions(&self) -> ClassProportions {
        ClassProportions(self.mu.iter().zip(&self.initial).map(|(m, b)| m * b).collect())
    }

    /// Whether every class has a single, deterministic coefficient vector.
    pub fn class_deterministic(&self) -> bool {
        self.mixture.iter().all(|m| m.components.len() == 1)
    }
}

fn check_probability_vector(field: &str, weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::config(field, format!("weight {w} is not a nonnegative number")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::config(field, format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Index of the cell of `u` in the cumulative weights; `None` when rounding
/// leaves `u` past the last cumulative sum.
fn pick(weights: impl Iterator<Item = f64>, u: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (i, w) in weights.enumerate() {
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    None
}

/// N sampled agents, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    spec: PopulationSpec,
    xi: Vec<bool>,
    kappa: Vec<usize>,
    c0: Vec<f64>,
    threshold: Vec<f64>,
    class_counts: Vec<usize>,
}

impl Population {
    /// Builds a population from explicit feature vectors.
    pub fn from_features(spec: PopulationSpec, agents: &[FeatureVector]) -> Result<Self> {
        spec.validate()?;
        let k = spec.classes();
        let m0 = spec.influencers;
        let mut pop = Population {
            xi: Vec::with_capacity(agents.len()),
            kappa: Vec::with_capacity(agents.len()),
            c0: Vec::with_capacity(agents.len() * m0),
            threshold: Vec::with_capacity(agents.len()),
            class_counts: vec![0; k],
            spec,
        };
        for (n, a) in agents.iter().enumerate() {
            if a.kappa >= k {
                return Err(Error::usage(format!("agent {n} has class {} but there are {k} classes", a.kappa + 1)));
            }
            if a.c0_row.len() != m0 {
                return Err(Error::usage(format!("agent {n} has {} influencer coefficients, expected {m0}", a.c0_row.len())));
            }
            pop.xi.push(a.xi);
            pop.kappa.push(a.kappa);
            pop.c0.extend_from_slice(&a.c0_row);
            pop.threshold.push(a.threshold);
            pop.class_counts[a.kappa] += 1;
        }
        Ok(pop)
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn spec(&self) -> &PopulationSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn agent(&self, n: usize) -> FeatureVector {
        let m0 = self.spec.influencers;
        FeatureVector {
            xi: self.xi[n],
            kappa: self.kappa[n],
            c0_row: self.c0[n * m0..(n + 1) * m0].to_vec(),
            threshold: self.threshold[n],
        }
    }

    pub fn agents(&self) -> impl Iterator<Item = FeatureVector> + '_ {
        (0..self.len()).map(|n| self.agent(n))
    }

    pub fn initial_opinions(&self) -> Vec<bool> {
        self.xi.clone()
    }

    #[inline]
    pub fn kappa(&self, n: usize) -> usize {
        self.kappa[n]
    }

    #[inline]
    pub fn threshold(&self, n: usize) -> f64 {
        self.threshold[n]
    }

    #[inline]
    pub fn c0_row(&self, n: usize) -> &[f64] {
        let m0 = self.spec.influencers;
        &self.c0[n * m0..(n + 1) * m0]
    }

    /// `c0_n . x0` for every agent.
    pub fn influencer_scores(&self, x0: &[u8]) -> Vec<f64> {
        let m0 = self.spec.influencers;
        if m0 == 0 {
            return vec![0.0; self.len()];
        }
        self.c0
            .chunks_exact(m0)
            .map(|row| row.iter().zip(x0).map(|(c, &x)| if x == 1 { *c } else { 0.0 }).sum())
            .collect()
    }

    /// `c_k . p` for every class.
    pub fn class_scores(&self, p: &[f64]) -> Vec<f64> {
        self.spec.inter_class.iter().map(|row| row.iter().zip(p).map(|(c, q)| c * q).sum()).collect()
    }
}

/// Opinion-1 mass per class, measured over the whole population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassProportions(pub Vec<f64>);

impl ClassProportions {
    pub fn zeros(k: usize) -> Self {
        ClassProportions(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn l1_distance(&self, other: &ClassProportions) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Membership in `{p in [0,1]^K : sum p <= 1}`, up to `1e-12`.
    pub fn check_simplex(&self) -> Result<()> {
        const TOL: f64 = 1e-12;
        if self.0.iter().any(|&v| !(v >= -TOL && v <= 1.0 + TOL)) || self.total() > 1.0 + TOL {
            return Err(Error::usage(format!("proportions {:?} are not in the simplex S_K", self.0)));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ClassProportions {
    fn from(v: Vec<f64>) -> Self {
        ClassProportions(v)
    }
}

/// Samples `n` agents i.i.d. from `spec`. Agent `i` only ever reads its own
/// substream of `seed`, so populations of different sizes built from the
/// same seed agree on their common prefix.
pub fn sample_population(spec: &PopulationSpec, n: usize, seed: u64) -> Result<Population> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::config("n_agents", "population must contain at least one agent"));
    }
    let key = SeedKey::new(seed).label("features");
    let k = spec.classes();
    let m0 = spec.influencers;
    let mut pop = Population {
        xi: Vec::with_capacity(n),
        kappa: Vec::with_capacity(n),
        c0: Vec::with_capacity(n * m0),
        threshold: Vec::with_capacity(n),
        class_counts: vec![0; k],
        spec: spec.clone(),
    };
    for i in 0..n {
        let mut rng = key.stream(i as u64);
        let kappa = pick(spec.mu.iter().copied(), rng.uniform()).unwrap_or(k - 1);
        let comps = &spec.mixture[kappa].components;
        let comp = pick(comps.iter().map(|c| c.weight), rng.uniform()).unwrap_or(comps.len() - 1);
        let threshold = spec.threshold.sample(rng.uniform());
        let xi = rng.uniform() < spec.initial[kappa];
        pop.xi.push(xi);
        pop.kappa.push(kappa);
        pop.c0.extend_from_slice(&comps[comp].c0);
        pop.threshold.push(threshold);
        pop.class_counts[kappa] += 1;
    }
    Ok(pop)
}

/// `p_k = (1/N) sum_i opinions_i 1{kappa_i = k}`.
pub fn class_proportions(opinions: &[bool], population: &Population) -> Result<ClassProportions> {
    if opinions.len() != population.len() {
        return Err(Error::usage(format!(
            "opinion vector has length {}, population has {} agents",
            opinions.len(),
            population.len()
        )));
    }
    Ok(proportions_from_counts(&class_counts_of(opinions.iter().copied().enumerate(), population), population.len()))
}

/// Opinion-1 counts per class over the given `(agent, opinion)` pairs.
pub(crate) fn class_counts_of(items: impl Iterator<Item = (usize, bool)>, population: &Population) -> Vec<u64> {
    let mut counts = vec![0u64; population.classes()];
    for (i, x) in items {
        if x {
            counts[population.kappa[i]] += 1;
        }
    }
    counts
}

/// Integer counts divided by the sample size. Keeping the counts integral
/// makes a census survey produce exactly the same floats as `class_proportions`.
pub(crate) fn proportions_from_counts(counts: &[u64], size: usize) -> ClassProportions {
    ClassProportions(counts.iter().map(|&c| c as f64 / size as f64).collect())
}
