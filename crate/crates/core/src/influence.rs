//! The mean influence function `phi` and its finite-population counterpart
//! `Phi^N`.
//!
//! `phi_k(p, x0)` is the probability that a randomly drawn agent belongs to
//! class `k` and scores above its threshold when the public opinion is `p`
//! and the influencers hold `x0`. With uniform thresholds on `[0, 1]` and a
//! finite coefficient mixture per class it has the closed form
//!
//! ```text
//! phi_k(p, x0) = mu_k * sum_j w_kj * clamp01(c_k . p + c0_kj . x0)
//! ```
//!
//! where `clamp01(v) = P[s < v]` for `s ~ U[0, 1]`.

use crate::error::{Error, Result};
use crate::population::{ClassMixture, ClassProportions, Population, PopulationSpec};

#[inline]
pub fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Parameters of the closed-form influence function.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMacro {
    pub mu: Vec<f64>,
    pub inter_class: Vec<Vec<f64>>,
    pub mixture: Vec<ClassMixture>,
    pub influencers: usize,
}

#[derive(Debug, Clone)]
pub enum MacroFunction<'a> {
    Analytic(AnalyticMacro),
    Empirical(&'a Population),
}

impl<'a> MacroFunction<'a> {
    /// Closed form; only defined for uniform thresholds.
    pub fn analytic(spec: &PopulationSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.threshold.is_uniform() {
            return Err(Error::Unsupported("the analytic influence function requires uniform[0,1] thresholds".into()));
        }
        Ok(MacroFunction::Analytic(AnalyticMacro {
            mu: spec.mu.clone(),
            inter_class: spec.inter_class.clone(),
            mixture: spec.mixture.clone(),
            influencers: spec.influencers,
        }))
    }

    pub fn empirical(population: &'a Population) -> Self {
        MacroFunction::Empirical(population)
    }

    /// Analytic when the thresholds allow it, empirical otherwise.
    pub fn for_population(population: &'a Population) -> Self {
        Self::analytic(population.spec()).unwrap_or(MacroFunction::Empirical(population))
    }

    pub fn classes(&self) -> usize {
        match self {
            MacroFunction::Analytic(a) => a.mu.len(),
            MacroFunction::Empirical(p) => p.classes(),
        }
    }

    fn influencers(&self) -> usize {
        match self {
            MacroFunction::Analytic(a) => a.influencers,
            MacroFunction::Empirical(p) => p.spec().influencers,
        }
    }

    fn check_inputs(&self, p: &ClassProportions, x0: &[u8]) -> Result<()> {
        if p.len() != self.classes() {
            return Err(Error::usage(format!("expected {} class proportions, got {}", self.classes(), p.len())));
        }
        p.check_simplex()?;
        check_influencer_state(x0, self.influencers())
    }

    /// Evaluates whichever form this is.
    pub fn eval(&self, p: &ClassProportions, x0: &[u8]) -> Result<Vec<f64>> {
        match self {
            MacroFunction::Analytic(_) => phi_analytic(self, p, x0),
            MacroFunction::Empirical(pop) => phi_empirical(pop, p, x0),
        }
    }

    /// `max_{k,l} |c_{k,l}|`. Clamping is 1-Lipschitz, so a coefficient
    /// mixture does not change the constant; for nonnegative matrices this is
    /// `max_{k,l} c_{k,l}`.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        match self {
            MacroFunction::Analytic(a) => Ok(lipschitz_of(&a.inter_class)),
            MacroFunction::Empirical(_) => {
                Err(Error::Unsupported("no Lipschitz constant for the empirical influence function".into()))
            }
        }
    }
}

pub(crate) fn lipschitz_of(inter_class: &[Vec<f64>]) -> f64 {
    inter_class.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn check_influencer_state(x0: &[u8], m0: usize) -> Result<()> {
    if x0.len() != m0 {
        return Err(Error::usage(format!("influencer state has {} entries, expected {m0}", x0.len())));
    }
    if x0.iter().any(|&x| x > 1) {
        return Err(Error::usage(format!("influencer state {x0:?} is not binary")));
    }
    Ok(())
}

#[inline]
fn dot_x0(c0: &[f64], x0: &[u8]) -> f64 {
    c0.iter().zip(x0).map(|(c, &x)| if x == 1 { *c } else { 0.0 }).sum()
}

/// Closed-form `phi(p, x0)`.
pub fn phi_analytic(macro_fn: &MacroFunction<'_>, p: &ClassProportions, x0: &[u8]) -> Result<Vec<f64>> {
    let MacroFunction::Analytic(a) = macro_fn else {
        return Err(Error::Unsupported("phi_analytic needs the analytic influence function".into()));
    };
    macro_fn.check_inputs(p, x0)?;
    Ok(analytic_unchecked(a, p.as_slice(), x0))
}

pub(crate) fn analytic_unchecked(a: &AnalyticMacro, p: &[f64], x0: &[u8]) -> Vec<f64> {
    a.inter_class
        .iter()
        .zip(&a.mixture)
        .zip(&a.mu)
        .map(|((row, mix), mu)| {
            let social: f64 = row.iter().zip(p).map(|(c, q)| c * q).sum();
            mu * mix.components.iter().map(|comp| comp.weight * clamp01(social + dot_x0(&comp.c0, x0))).sum::<f64>()
        })
        .collect()
}

/// `Phi^N_k(p, x0) = (1/N) sum_n 1{c_k . p + c0_n . x0 > s_n} 1{kappa_n = k}`,
/// with a strict inequality.
pub fn phi_empirical(population: &Population, p: &ClassProportions, x0: &[u8]) -> Result<Vec<f64>> {
    MacroFunction::Empirical(population).check_inputs(p, x0)?;
    Ok(empirical_unchecked(population, p.as_slice(), x0))
}

pub(crate) fn empirical_unchecked(population: &Population, p: &[f64], x0: &[u8]) -> Vec<f64> {
    let class_scores = population.class_scores(p);
    let mut counts = vec![0u64; population.classes()];
    for n in 0..population.len() {
        let k = population.kappa(n);
        if class_scores[k] + dot_x0(population.c0_row(n), x0) > population.threshold(n) {
            counts[k] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / population.len() as f64).collect()
}

/// `max_{k,l} c_{k,l}` of the inter-class matrix (see
/// [`MacroFunction::lipschitz_constant`]).
pub fn lipschitz_constant(macro_fn: &MacroFunction<'_>) -> Result<f64> {
    macro_fn.lipschitz_constant()
}
