//! The McKean-Vlasov recursion and the closed-form theory of the linear model.
//!
//! With uniform thresholds and a single deterministic coefficient vector per
//! class, and as long as no score leaves `[0, 1]`, the mean influence function
//! is linear: `phi(p, x0) = C p + C0 x0` with `C = diag(mu) c` and
//! `C0 = diag(mu) c0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{mkv_advance, Mechanism, Replication};
use crate::error::{Error, Result};
use crate::influence::MacroFunction;
use crate::influencer::InfluencerPath;
use crate::linalg::{from_rows, mat_pow, solve, to_rows};
use crate::population::{ClassProportions, PopulationSpec};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    c: DMatrix<f64>,
    c0: DMatrix<f64>,
    h: f64,
    /// All entries of `C` and `C0` are nonnegative.
    pub nonnegative: bool,
    /// Every row of `[C | C0]` sums to at most 1.
    pub substochastic: bool,
}

impl LinearModel {
    /// `c` is `K x K`, `c0` is `K x M0`; both already weighted by the class masses.
    pub fn new(c: DMatrix<f64>, c0: DMatrix<f64>, h: f64) -> Result<Self> {
        let k = c.nrows();
        if k == 0 || c.ncols() != k || c0.nrows() != k {
            return Err(Error::domain("C must be K x K and C0 must have K rows"));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::domain(format!("h = {h} must lie in (0, 1]")));
        }
        let norm = c.norm();
        if !(norm < 1.0) {
            return Err(Error::domain(format!("Frobenius norm of C is {norm}, must be below 1")));
        }
        if norm > 0.999 {
            log::warn!("I - C is badly conditioned: |C|_F = {norm}");
        }
        let nonnegative = c.iter().chain(c0.iter()).all(|&v| v >= 0.0);
        let substochastic = (0..k).all(|i| c.row(i).sum() + c0.row(i).sum() <= 1.0 + 1e-12);
        Ok(LinearModel { c, c0, h, nonnegative, substochastic })
    }

    pub fn from_rows(c: &[Vec<f64>], c0: &[Vec<f64>], h: f64) -> Result<Self> {
        Self::new(from_rows(c), from_rows(c0), h)
    }

    /// One class, one influencer, `h = 1`.
    pub fn single_class(c: f64, c0: f64) -> Result<Self> {
        Self::from_rows(&[vec![c]], &[vec![c0]], 1.0)
    }

    /// Linearization of a population spec: `C = diag(mu) c`, `C0 = diag(mu) E[c0 | kappa]`.
    /// Exact when every class has one coefficient vector and scores stay in `[0, 1]`.
    pub fn from_spec(spec: &PopulationSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.threshold.is_uniform() {
            return Err(Error::Unsupported("the linear model needs uniform thresholds".into()));
        }
        let k = spec.classes();
        let m0 = spec.influencers;
        let c = DMatrix::from_fn(k, k, |i, j| spec.mu[i] * spec.inter_class[i][j]);
        let c0 = DMatrix::from_fn(k, m0, |i, m| {
            spec.mu[i] * spec.mixture[i].components.iter().map(|comp| comp.weight * comp.c0[m]).sum::<f64>()
        });
        Self::new(c, c0, spec.h)
    }

    pub fn with_h(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::domain(format!("h = {h} must lie in (0, 1]")));
        }
        self.h = h;
        Ok(self)
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn c0(&self) -> &DMatrix<f64> {
        &self.c0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn classes(&self) -> usize {
        self.c.nrows()
    }

    pub fn influencers(&self) -> usize {
        self.c0.ncols()
    }

    fn x0_vector(&self, x0: &[f64]) -> Result<DVector<f64>> {
        if x0.len() != self.influencers() {
            return Err(Error::usage(format!("expected {} influencer values, got {}", self.influencers(), x0.len())));
        }
        Ok(DVector::from_column_slice(x0))
    }

    /// `(1 - h) p + h (C p + C0 x0)`.
    pub fn step(&self, p: &[f64], x0: &[u8]) -> Vec<f64> {
        let k = self.classes();
        (0..k)
            .map(|i| {
                let social: f64 = (0..k).map(|j| self.c[(i, j)] * p[j]).sum();
                let infl: f64 = x0.iter().enumerate().map(|(m, &x)| if x == 1 { self.c0[(i, m)] } else { 0.0 }).sum();
                (1.0 - self.h) * p[i] + self.h * (social + infl)
            })
            .collect()
    }

    pub fn power(&self, t: u64) -> DMatrix<f64> {
        mat_pow(&self.c, t)
    }

    /// `(I - C)^{-1} C0 x0`.
    pub fn attractor(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let k = self.classes();
        let rhs = &self.c0 * self.x0_vector(x0)?;
        let a = DMatrix::identity(k, k) - &self.c;
        Ok(solve(&a, &rhs)?.iter().copied().collect())
    }

    pub fn c_rows(&self) -> Vec<Vec<f64>> {
        to_rows(&self.c)
    }
}

/// Iterates the linear recursion along a realized influencer path. Returns
/// `P(0..=len)`.
pub fn mkv_iterate_path(model: &LinearModel, p0: &ClassProportions, path: &[Vec<u8>]) -> Vec<ClassProportions> {
    let mut out = Vec::with_capacity(path.len() + 1);
    let mut p = p0.0.clone();
    out.push(p0.clone());
    for x0 in path {
        p = model.step(&p, x0);
        out.push(ClassProportions(p.clone()));
    }
    out
}

/// `P(0..=steps)` of the linear recursion driven by `path` (realized with `seed`).
pub fn mkv_iterate(
    model: &LinearModel,
    p0: &ClassProportions,
    path: &InfluencerPath,
    steps: usize,
    seed: u64,
) -> Result<Vec<ClassProportions>> {
    if p0.len() != model.classes() {
        return Err(Error::usage("p0 has the wrong number of classes"));
    }
    p0.check_simplex()?;
    let realized = path.realize(steps, seed, model.influencers())?;
    Ok(mkv_iterate_path(model, p0, &realized))
}

/// The recursion `P' = (1 - h) P + h phi(P, x0)` for a general (clamped or
/// empirical) macro function. Returns `P(0..=len)`.
pub fn mkv_trajectory(
    macro_fn: &MacroFunction<'_>,
    p0: &ClassProportions,
    path: &[Vec<u8>],
    h: f64,
) -> Result<Vec<ClassProportions>> {
    // validates shapes once
    macro_fn.eval(p0, path.first().map_or(&[][..], |x| x))?;
    let mut out = Vec::with_capacity(path.len() + 1);
    out.push(p0.clone());
    let mut p = p0.clone();
    for x0 in path {
        p = mkv_advance(macro_fn, &p, x0, h);
        out.push(p.clone());
    }
    Ok(out)
}

/// `C^dt p + (I - C^dt)(I - C)^{-1} C0 x0` for a constant influencer state.
pub fn between_switch_closed_form(
    model: &LinearModel,
    p_at_switch: &ClassProportions,
    x0_const: &[u8],
    dt: u64,
) -> Result<ClassProportions> {
    if model.h() != 1.0 {
        return Err(Error::usage("the between-switch closed form needs h = 1"));
    }
    let k = model.classes();
    if p_at_switch.len() != k {
        return Err(Error::usage("p has the wrong number of classes"));
    }
    let x: Vec<f64> = x0_const.iter().map(|&v| f64::from(v)).collect();
    let limit = DVector::from_vec(model.attractor(&x)?);
    let ct = model.power(dt);
    let p = DVector::from_column_slice(p_at_switch.as_slice());
    let out = &ct * p + (DMatrix::identity(k, k) - ct) * limit;
    Ok(ClassProportions(out.iter().copied().collect()))
}

/// `E[P_inf] = (I - C)^{-1} C0 E[X0]`.
pub fn stationary_mean(model: &LinearModel, x0_stationary_mean: &[f64]) -> Result<Vec<f64>> {
    model.attractor(x0_stationary_mean)
}

/// Two-state influencer chain with `P[1 -> 0] = alpha` and `P[0 -> 1] = beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoStateChain {
    pub alpha: f64,
    pub beta: f64,
}

impl TwoStateChain {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("alpha = {alpha} and beta = {beta} must lie in (0, 1)")));
        }
        Ok(TwoStateChain { alpha, beta })
    }

    /// Stationary probability of state 1.
    pub fn pi1(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }

    /// Second eigenvalue `1 - alpha - beta`.
    pub fn lambda(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    pub fn path(&self) -> InfluencerPath {
        InfluencerPath::two_state(self.alpha, self.beta)
    }
}

/// Stationary variance of the single-class recursion driven by a two-state
/// chain, via `Var = [Var0 + 2c/(1-c) Cov(P0(0), P0(G))] / (1 - c^2)` where
/// `G` is geometric on `{1, 2, ...}` with `P[G = k] = c^(k-1) (1 - c)`.
pub fn stationary_variance_single_class(c: f64, chain: TwoStateChain, c0: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::domain(format!("c = {c} must lie in [0, 1)")));
    }
    let chain = TwoStateChain::new(chain.alpha, chain.beta)?;
    let pi1 = chain.pi1();
    let lambda = chain.lambda();
    let var0 = c0 * c0 * pi1 * (1.0 - pi1);
    // E[lambda^G] = (1 - c) lambda / (1 - lambda c)
    let cov = var0 * lambda * (1.0 - c) / (1.0 - lambda * c);
    let cov_term = if c == 0.0 { 0.0 } else { 2.0 * c / (1.0 - c) * cov };
    Ok((var0 + cov_term) / (1.0 - c * c))
}

/// First three cumulants of `c0 * Bernoulli(q)`.
pub fn scaled_bernoulli_cumulants(c0: f64, q: f64) -> [f64; 3] {
    [c0 * q, c0 * c0 * q * (1.0 - q), c0.powi(3) * q * (1.0 - q) * (1.0 - 2.0 * q)]
}

/// `phi_n = phi0_n / (1 - c^n)` for `n = 1, 2, 3`, with i.i.d. influencer states.
pub fn cumulants_iid_single_class(c: f64, cumulants0: [f64; 3]) -> Result<[f64; 3]> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::domain(format!("c = {c} must lie in [0, 1)")));
    }
    Ok([1, 2, 3].map(|n| cumulants0[n - 1] / (1.0 - c.powi(n as i32))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryMoments {
    pub mean: Vec<f64>,
    pub variance: Option<f64>,
    pub cumulants: Option<[f64; 3]>,
}

/// Stationary moments of the single-class recursion driven by a two-state
/// chain. Cumulants are reported only when the chain is i.i.d. (`alpha + beta = 1`).
pub fn single_class_moments(c: f64, c0: f64, chain: TwoStateChain) -> Result<StationaryMoments> {
    let model = LinearModel::single_class(c, c0)?;
    let mean = stationary_mean(&model, &[chain.pi1()])?;
    let variance = stationary_variance_single_class(c, chain, c0)?;
    let cumulants = if chain.lambda().abs() < 1e-12 {
        Some(cumulants_iid_single_class(c, scaled_bernoulli_cumulants(c0, chain.pi1()))?)
    } else {
        None
    };
    Ok(StationaryMoments { mean, variance: Some(variance), cumulants })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationLimits {
    pub p_min_inf: f64,
    pub p_max_inf: f64,
}

fn check_c(c: f64) -> Result<()> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::domain(format!("c = {c} must lie in [0, 1)")));
    }
    Ok(())
}

/// Asymptotic trough and peak under a square-wave influencer of half-period `T`.
pub fn fluctuation_limits(c: f64, c0: f64, half_period: u32) -> Result<FluctuationLimits> {
    check_c(c)?;
    if !(c0 > 0.0) {
        return Err(Error::domain(format!("c0 = {c0} must be positive")));
    }
    if half_period == 0 {
        return Err(Error::domain("T must be at least 1"));
    }
    let ct = c.powi(half_period as i32);
    let level = c0 / (1.0 - c);
    Ok(FluctuationLimits { p_min_inf: ct / (1.0 + ct) * level, p_max_inf: level / (1.0 + ct) })
}

/// Long-run average absolute change per step under a square wave of half-period `T`.
pub fn cycle_value(c: f64, c0: f64, half_period: u32) -> f64 {
    let ct = c.powi(half_period as i32);
    (1.0 - ct) / (1.0 + ct) * c0 / (1.0 - c) / f64::from(half_period)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalCycle {
    pub argmax_t: u32,
    /// `V(T)` for `T = 1 ..= T_max`.
    pub values: Vec<f64>,
    pub v_star: f64,
}

pub fn optimal_cycle(c: f64, c0: f64, t_max: u32) -> Result<OptimalCycle> {
    check_c(c)?;
    if !(c0 > 0.0) || t_max == 0 {
        return Err(Error::domain("need c0 > 0 and T_max >= 1"));
    }
    let values: Vec<f64> = (1..=t_max).map(|t| cycle_value(c, c0, t)).collect();
    let argmax = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
    let argmax_t = argmax as u32 + 1;
    if argmax_t != 1 {
        return Err(Error::Numeric(format!("V(T) peaks at T = {argmax_t}, expected 1")));
    }
    Ok(OptimalCycle { argmax_t, values, v_star: c0 / (1.0 + c) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionDecision {
    Beta0,
    Beta1,
    Indifferent,
}

impl DiffusionDecision {
    pub fn label(&self) -> &'static str {
        match self {
            DiffusionDecision::Beta0 => "beta=0",
            DiffusionDecision::Beta1 => "beta=1",
            DiffusionDecision::Indifferent => "indifferent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionOutcome {
    pub decision: DiffusionDecision,
    pub threshold: f64,
}

fn check_diffusion(alpha: f64, rho: f64, c: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!("rho = {rho} must lie in (0, 1)")));
    }
    check_c(c)
}

/// `theta* = rho (1 - rho) / ((1 - rho c)(1 + alpha rho))`.
pub fn diffusion_threshold(alpha: f64, rho: f64, c: f64) -> Result<f64> {
    check_diffusion(alpha, rho, c)?;
    Ok(rho * (1.0 - rho) / ((1.0 - rho * c) * (1.0 + alpha * rho)))
}

/// Discounted benefit of switching rate `beta`, before the advertising cost.
pub fn diffusion_g(beta: f64, alpha: f64, rho: f64, c: f64) -> f64 {
    -(beta / (1.0 - rho * c)) * (rho / (1.0 - rho * (1.0 - alpha - beta)))
}

pub fn diffusion_f(beta: f64, alpha: f64, rho: f64, c: f64, theta: f64) -> f64 {
    diffusion_g(beta, alpha, rho, c) + beta * theta / (1.0 - rho)
}

pub fn optimal_diffusion_decision(alpha: f64, rho: f64, c: f64, theta: f64) -> Result<DiffusionOutcome> {
    if !(theta >= 0.0) {
        return Err(Error::domain(format!("theta = {theta} must be nonnegative")));
    }
    let threshold = diffusion_threshold(alpha, rho, c)?;
    let decision = if (theta - threshold).abs() <= 1e-12 {
        DiffusionDecision::Indifferent
    } else if theta < threshold {
        DiffusionDecision::Beta0
    } else {
        DiffusionDecision::Beta1
    };
    Ok(DiffusionOutcome { decision, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EchoChamberLimits {
    /// Long-run mean of the opinion-1 share within class 1.
    pub class1_mean: f64,
    /// Stationary variance of that share from the two-state variance formula
    /// (`c = c0 = 1/2`, `alpha = eps`, `beta = 1 - eps`), i.e. `eps (1 - eps) / 3`.
    pub class1_variance: f64,
    /// The value `3 eps (1 - eps) / 4` quoted alongside the model; it differs
    /// from the formula above.
    pub class1_variance_stated: f64,
    pub class2_limit: f64,
}

pub fn echo_chamber_limits(epsilon: f64, nu: f64) -> Result<EchoChamberLimits> {
    if !(epsilon > 0.0 && epsilon < 1.0 && nu > 0.0 && nu <= 1.0) {
        return Err(Error::domain("need eps in (0, 1) and nu in (0, 1]"));
    }
    let chain = TwoStateChain::new(epsilon, 1.0 - epsilon)?;
    Ok(EchoChamberLimits {
        class1_mean: 1.0 - epsilon,
        class1_variance: stationary_variance_single_class(0.5, chain, 0.5)?,
        class1_variance_stated: 3.0 * epsilon * (1.0 - epsilon) / 4.0,
        class2_limit: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoChamberCheck {
    /// Class-2 mean-field mass after `mkv_steps` steps.
    pub class2_mkv_final: f64,
    /// First step at which the class-2 mean-field mass is below `tolerance`.
    pub class2_mkv_hits_tolerance: Option<usize>,
    /// Agent simulation: class proportions at the horizon.
    pub agents_final: Vec<f64>,
    /// Agent simulation: time average of the class-1 proportion over the second half of the horizon.
    pub agents_class1_average: f64,
}

/// Iterates the two-class mean field and simulates `n_agents` agents of the
/// echo-chamber population with class masses (1/2, 1/2).
pub fn echo_chamber_check(
    epsilon: f64,
    nu: f64,
    mkv_steps: usize,
    tolerance: f64,
    n_agents: usize,
    horizon: usize,
    seed: u64,
) -> Result<EchoChamberCheck> {
    echo_chamber_limits(epsilon, nu)?;
    let spec = PopulationSpec::echo_chamber(epsilon, nu, 0.5);
    let influencer = InfluencerPath::two_state(epsilon, 1.0 - epsilon);
    let macro_fn = MacroFunction::analytic(&spec)?;
    let path = influencer.realize(mkv_steps, seed, 1)?;
    let traj = mkv_trajectory(&macro_fn, &spec.initial_proportions(), &path, 1.0)?;
    let class2_mkv_hits_tolerance = traj.iter().position(|p| p.0[1] < tolerance);

    let mut scenario = ScenarioConfig::toy("echo_chamber_check", 0.0, n_agents, horizon, 1, vec![Mechanism::Full]);
    scenario.population = spec;
    scenario.influencer = influencer;
    scenario.master_seed = seed;
    let rep = Replication::prepare(&scenario, 0, horizon)?;
    let (mut sum, mut count) = (0.0, 0usize);
    let last = rep.simulate(Mechanism::Full, horizon, |s| {
        if s.t >= horizon / 2 {
            sum += s.proportions(&rep.population)?.0[0];
            count += 1;
        }
        Ok(())
    })?;
    Ok(EchoChamberCheck {
        class2_mkv_final: traj.last().map_or(0.0, |p| p.0[1]),
        class2_mkv_hits_tolerance,
        agents_final: last.proportions(&rep.population)?.0,
        agents_class1_average: sum / count.max(1) as f64,
    })
}

/// JSON export of one closed-form evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticsRecord {
    pub name: String,
    pub inputs: serde_json::Value,
    pub outputs: serde_json::Value,
}

impl AnalyticsRecord {
    pub fn new(name: &str, inputs: serde_json::Value, outputs: impl Serialize) -> Result<Self> {
        let outputs = serde_json::to_value(outputs).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(AnalyticsRecord { name: name.to_string(), inputs, outputs })
    }
}
