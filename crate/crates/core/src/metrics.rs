//! Coupled Monte Carlo estimates of the local and global approximation errors.
//!
//! The local error looks at a single agent's view of the public opinion: by
//! exchangeability of the features and of the noise layout, agent 0 stands
//! for all of them. The global error compares, agent by agent, an
//! approximate dynamic with the full-information one when both share
//! features, influence events and the influencer path.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{check_budget, survey_estimate, Mechanism, Replication, SimState};
use crate::error::{Error, Result};
use crate::influence::{analytic_unchecked, empirical_unchecked, lipschitz_of, MacroFunction};
use crate::influencer::decode_state;
use crate::population::{class_counts_of, class_proportions, proportions_from_counts, ClassProportions, Population};
use crate::rng::SeedKey;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Local,
    Global,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Local => "local",
            Metric::Global => "global",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Metric::Local),
            "global" => Ok(Metric::Global),
            other => Err(Error::usage(format!("unknown metric `{other}` (local or global)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub metric: Metric,
    pub mechanism: Mechanism,
    pub n_agents: usize,
    /// Survey size; `N` for mechanisms without surveys.
    pub survey_size: usize,
    pub horizon: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// The bound is a growth shape with unit constant, not a guaranteed ceiling.
    pub order_only: bool,
    pub replications: usize,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn survey_size(mechanism: Mechanism, n: usize) -> usize {
    mechanism.survey_size().unwrap_or(n)
}

/// `sqrt(K) / (2 sqrt(M))` for surveys, `sqrt(K) / (2 sqrt(N))` for the mean field.
pub fn local_bound(mechanism: Mechanism, classes: usize, n_agents: usize) -> f64 {
    (classes as f64).sqrt() / (2.0 * (survey_size(mechanism, n_agents) as f64).sqrt())
}

/// `(K^T - 1) / (K - 1)`, or `T` when `K = 1`.
pub fn growth_factor(k_phi: f64, horizon: usize) -> f64 {
    if (k_phi - 1.0).abs() < 1e-12 {
        horizon as f64
    } else {
        (k_phi.powi(horizon as i32) - 1.0) / (k_phi - 1.0)
    }
}

/// Order-only global bound: growth factor times `1 / sqrt(M)` (or `1 / sqrt(N)`),
/// plus the macro-function gap when supplied.
pub fn global_bound(mechanism: Mechanism, k_phi: f64, n_agents: usize, horizon: usize, macro_gap: Option<f64>) -> f64 {
    if mechanism == Mechanism::Full {
        return 0.0;
    }
    let scale = 1.0 / (survey_size(mechanism, n_agents) as f64).sqrt();
    growth_factor(k_phi, horizon) * (scale + macro_gap.unwrap_or(0.0))
}

fn require_local(mechanism: Mechanism) -> Result<()> {
    if mechanism == Mechanism::Full {
        return Err(Error::usage("the local error is defined for survey and mean-field mechanisms, not `full`"));
    }
    Ok(())
}

/// `|estimate_n(T) - P^N(T)|_1` as seen by `agent` at the final state.
fn local_gap(rep: &Replication, state: &SimState, agent: usize) -> Result<f64> {
    let pop = &rep.population;
    let n = pop.len();
    let exact = class_proportions(&state.opinions, pop)?;
    let t = state.t;
    let est = match state.mechanism {
        Mechanism::Common(m) => survey_estimate(&state.opinions, pop, &rep.noise.common_survey(t, n, m)),
        Mechanism::Independent(m) => {
            let ones = class_counts_of(state.opinions.iter().copied().enumerate(), pop);
            proportions_from_counts(&rep.noise.independent_counts(t, agent, n, &ones, m), m)
        }
        Mechanism::MeanField => state.mkv_p.clone().ok_or_else(|| Error::usage("missing mean-field estimate"))?,
        Mechanism::Full => exact.clone(),
    };
    Ok(est.l1_distance(&exact))
}

fn per_replication<T: Send>(replications: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..replications).into_par_iter().map(f).collect()
}

fn scenario_for(scenario: &ScenarioConfig, mechanism: Mechanism) -> Result<()> {
    scenario.validate()?;
    mechanism.validate(scenario.n_agents)
}

/// Local error of agent 0 at time `T`, averaged over replications.
pub fn local_error(scenario: &ScenarioConfig, mechanism: Mechanism, horizon: usize, replications: usize) -> Result<ErrorReport> {
    require_local(mechanism)?;
    scenario_for(scenario, mechanism)?;
    check_budget(scenario, (scenario.n_agents * horizon.max(1) * replications) as f64)?;
    let gaps = per_replication(replications, |r| {
        let rep = Replication::prepare(scenario, r, horizon)?;
        let last = rep.simulate(mechanism, horizon, |_| Ok(()))?;
        local_gap(&rep, &last, 0)
    })?;
    Ok(local_report(scenario, mechanism, horizon, &gaps))
}

fn local_report(scenario: &ScenarioConfig, mechanism: Mechanism, horizon: usize, gaps: &[f64]) -> ErrorReport {
    let (estimate, std_error) = mean_and_se(gaps);
    ErrorReport {
        metric: Metric::Local,
        mechanism,
        n_agents: scenario.n_agents,
        survey_size: survey_size(mechanism, scenario.n_agents),
        horizon,
        estimate,
        std_error,
        bound: local_bound(mechanism, scenario.population.classes(), scenario.n_agents),
        order_only: false,
        replications: gaps.len(),
    }
}

/// Debug variant of [`local_error`]: the same estimate computed for agent 0
/// and averaged over `agents` randomly chosen agents.
pub fn local_error_debug(
    scenario: &ScenarioConfig,
    mechanism: Mechanism,
    horizon: usize,
    replications: usize,
    agents: usize,
) -> Result<(ErrorReport, ErrorReport)> {
    require_local(mechanism)?;
    scenario_for(scenario, mechanism)?;
    let mut pick = SeedKey::new(scenario.master_seed).label("debug-agents").stream(0);
    let chosen: Vec<usize> =
        crate::rng::sample_without_replacement(&mut pick, scenario.n_agents, agents.min(scenario.n_agents));
    let pairs = per_replication(replications, |r| {
        let rep = Replication::prepare(scenario, r, horizon)?;
        let last = rep.simulate(mechanism, horizon, |_| Ok(()))?;
        let first = local_gap(&rep, &last, 0)?;
        let mut sum = 0.0;
        for &a in &chosen {
            sum += local_gap(&rep, &last, a)?;
        }
        Ok((first, sum / chosen.len() as f64))
    })?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((local_report(scenario, mechanism, horizon, &a), local_report(scenario, mechanism, horizon, &b)))
}

/// Lipschitz constant used in the global bound.
pub fn k_phi(scenario: &ScenarioConfig) -> f64 {
    lipschitz_of(&scenario.population.inter_class)
}

/// `sup_p |Phi^N(p, x0) - phi(p, x0)|_1` over `p = lambda mu`, `lambda` on a
/// 21-point grid, and every influencer state. `None` unless thresholds are uniform.
pub fn macro_gap(population: &Population) -> Option<f64> {
    let MacroFunction::Analytic(a) = MacroFunction::analytic(population.spec()).ok()? else {
        return None;
    };
    let m0 = population.spec().influencers;
    let mut worst = 0.0f64;
    for s in 0..(1usize << m0) {
        let x0 = decode_state(s, m0);
        for i in 0..=20 {
            let p: Vec<f64> = population.spec().mu.iter().map(|m| m * i as f64 / 20.0).collect();
            let exact = analytic_unchecked(&a, &p, &x0);
            let emp = empirical_unchecked(population, &p, &x0);
            worst = worst.max(exact.iter().zip(&emp).map(|(u, v)| (u - v).abs()).sum());
        }
    }
    Some(worst)
}

/// Coupled global error `E[(1/N) sum_n |X~_n(T) - X_n(T)|]` at every horizon
/// in `horizons`, from one pair of simulations per replication.
pub fn global_error_horizons(
    scenario: &ScenarioConfig,
    mechanism: Mechanism,
    horizons: &[usize],
    replications: usize,
    with_macro_gap: bool,
) -> Result<Vec<ErrorReport>> {
    scenario_for(scenario, mechanism)?;
    let t_max = horizons.iter().copied().max().ok_or_else(|| Error::usage("empty horizon list"))?;
    check_budget(scenario, 2.0 * (scenario.n_agents * t_max.max(1) * replications) as f64)?;
    let per_rep = per_replication(replications, |r| {
        let rep = Replication::prepare(scenario, r, t_max)?;
        let n = rep.population.len() as f64;
        let mut reference: Vec<Option<Vec<bool>>> = vec![None; t_max + 1];
        rep.simulate(Mechanism::Full, t_max, |s| {
            if horizons.contains(&s.t) {
                reference[s.t] = Some(s.opinions.clone());
            }
            Ok(())
        })?;
        let mut errors = vec![0.0; t_max + 1];
        if mechanism != Mechanism::Full {
            rep.simulate(mechanism, t_max, |s| {
                if let Some(x) = &reference[s.t] {
                    errors[s.t] = x.iter().zip(&s.opinions).filter(|(a, b)| a != b).count() as f64 / n;
                }
                Ok(())
            })?;
        }
        let gap = if with_macro_gap { macro_gap(&rep.population) } else { None };
        Ok((horizons.iter().map(|&t| errors[t]).collect::<Vec<_>>(), gap))
    })?;
    let gaps: Vec<f64> = per_rep.iter().filter_map(|(_, g)| *g).collect();
    let gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    let k = k_phi(scenario);
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let xs: Vec<f64> = per_rep.iter().map(|(e, _)| e[i]).collect();
            let (estimate, std_error) = mean_and_se(&xs);
            ErrorReport {
                metric: Metric::Global,
                mechanism,
                n_agents: scenario.n_agents,
                survey_size: survey_size(mechanism, scenario.n_agents),
                horizon: t,
                estimate,
                std_error,
                bound: global_bound(mechanism, k, scenario.n_agents, t, gap),
                order_only: true,
                replications,
            }
        })
        .collect())
}

pub fn global_error(scenario: &ScenarioConfig, mechanism: Mechanism, horizon: usize, replications: usize) -> Result<ErrorReport> {
    Ok(global_error_horizons(scenario, mechanism, &[horizon], replications, false)?.remove(0))
}

/// What an error sweep varies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepGrid {
    Agents(Vec<usize>),
    SurveySize(Vec<usize>),
    Horizon(Vec<usize>),
}

impl std::str::FromStr for SweepGrid {
    type Err = Error;

    /// `N=100,1000`, `M=10,100` or `T=10,20`.
    fn from_str(s: &str) -> Result<Self> {
        let (axis, values) = s.split_once('=').ok_or_else(|| Error::usage(format!("grid `{s}` is not AXIS=v1,v2,...")))?;
        let values: Vec<usize> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| *x >= 0.0 && x.fract() == 0.0).map(|x| x as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::usage(format!("grid `{s}` has a non-integer value")))?;
        if values.is_empty() {
            return Err(Error::usage("empty grid"));
        }
        match axis.trim() {
            "N" | "n" => Ok(SweepGrid::Agents(values)),
            "M" | "m" => Ok(SweepGrid::SurveySize(values)),
            "T" | "t" => Ok(SweepGrid::Horizon(values)),
            other => Err(Error::usage(format!("unknown grid axis `{other}` (N, M or T)"))),
        }
    }
}

/// Repeats the local or global estimate across a grid, in grid order.
pub fn error_sweep(
    scenario: &ScenarioConfig,
    mechanism: Mechanism,
    metric: Metric,
    horizon: usize,
    grid: &SweepGrid,
    replications: usize,
) -> Result<Vec<ErrorReport>> {
    let factor = if metric == Metric::Global { 2.0 } else { 1.0 };
    let total: f64 = match grid {
        SweepGrid::Agents(ns) => ns.iter().map(|&n| (n * horizon.max(1)) as f64).sum(),
        SweepGrid::SurveySize(ms) => (ms.len() * scenario.n_agents * horizon.max(1)) as f64,
        SweepGrid::Horizon(ts) => match metric {
            Metric::Local => ts.iter().map(|&t| (scenario.n_agents * t.max(1)) as f64).sum(),
            Metric::Global => (scenario.n_agents * ts.iter().copied().max().unwrap_or(0).max(1)) as f64,
        },
    };
    check_budget(scenario, factor * total * replications as f64)?;
    let one = |s: &ScenarioConfig, m: Mechanism, t: usize| match metric {
        Metric::Local => local_error(s, m, t, replications),
        Metric::Global => global_error(s, m, t, replications),
    };
    match grid {
        SweepGrid::Agents(ns) => ns
            .iter()
            .map(|&n| {
                let mut s = scenario.clone();
                s.n_agents = n;
                one(&s, mechanism, horizon)
            })
            .collect(),
        SweepGrid::SurveySize(ms) => {
            if mechanism.survey_size().is_none() {
                return Err(Error::usage(format!("an M grid needs a survey mechanism, got {mechanism}")));
            }
            ms.iter().map(|&m| one(scenario, mechanism.with_survey_size(m), horizon)).collect()
        }
        SweepGrid::Horizon(ts) => match metric {
            Metric::Global => global_error_horizons(scenario, mechanism, ts, replications, false),
            Metric::Local => ts.iter().map(|&t| one(scenario, mechanism, t)).collect(),
        },
    }
}

/// Agents never touched by an influence event keep their initial opinion in
/// every mechanism; returns how many of them disagree between the
/// full-information and the approximate dynamic at `T` (always 0).
pub fn untouched_disagreements(rep: &Replication, mechanism: Mechanism, horizon: usize) -> Result<usize> {
    let n = rep.population.len();
    let mut touched = vec![false; n];
    for t in 0..horizon {
        for (flag, b) in touched.iter_mut().zip(rep.noise.influence_events(t, n)) {
            *flag |= b;
        }
    }
    let full = rep.simulate(Mechanism::Full, horizon, |_| Ok(()))?;
    let approx = rep.simulate(mechanism, horizon, |_| Ok(()))?;
    let xi = rep.population.initial_opinions();
    Ok((0..n)
        .filter(|&i| !touched[i] && (full.opinions[i] != approx.opinions[i] || full.opinions[i] != xi[i]))
        .count())
}

/// Class proportions at `T` of one replication, for quick checks.
pub fn terminal_proportions(scenario: &ScenarioConfig, mechanism: Mechanism, replication: usize) -> Result<ClassProportions> {
    let rep = Replication::prepare(scenario, replication, scenario.horizon)?;
    let last = rep.simulate(mechanism, scenario.horizon, |_| Ok(()))?;
    last.proportions(&rep.population)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, c: f64) -> ScenarioConfig {
        ScenarioConfig::toy("toy", c, n, 10, 1, vec![Mechanism::Full])
    }

    #[test]
    fn census_survey_has_zero_local_error() {
        let s = toy(300, 0.9);
        for m in [Mechanism::Common(300), Mechanism::Independent(300)] {
            let r = local_error(&s, m, 5, 8).unwrap();
            assert_eq!(r.estimate, 0.0);
            assert_eq!(r.std_error, 0.0);
        }
    }

    #[test]
    fn local_error_rejects_full() {
        assert!(matches!(local_error(&toy(10, 0.5), Mechanism::Full, 1, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn global_error_at_zero_and_self() {
        let s = toy(500, 0.9);
        for m in [Mechanism::MeanField, Mechanism::Common(10), Mechanism::Independent(5)] {
            assert_eq!(global_error(&s, m, 0, 4).unwrap().estimate, 0.0);
        }
        let reports = global_error_horizons(&s, Mechanism::Full, &[0, 3, 10], 4, false).unwrap();
        assert!(reports.iter().all(|r| r.estimate == 0.0 && r.bound == 0.0));
    }

    #[test]
    fn bounds() {
        assert_eq!(local_bound(Mechanism::MeanField, 1, 10_000), 0.005);
        assert_eq!(local_bound(Mechanism::Common(100), 1, 10_000), 0.05);
        assert_eq!(local_bound(Mechanism::Independent(100), 4, 10_000), 0.1);
        assert_eq!(growth_factor(1.0, 7), 7.0);
        assert!((growth_factor(0.5, 3) - 1.75).abs() < 1e-15);
        assert!((global_bound(Mechanism::MeanField, 0.5, 100, 3, None) - 0.175).abs() < 1e-15);
    }

    #[test]
    fn estimates_stay_in_range() {
        let s = toy(200, 0.9);
        let l = local_error(&s, Mechanism::Common(3), 4, 20).unwrap();
        assert!(l.estimate >= 0.0 && l.estimate <= 1.0 && l.std_error >= 0.0);
        let g = global_error(&s, Mechanism::Independent(3), 4, 20).unwrap();
        assert!(g.estimate >= 0.0 && g.estimate <= 1.0);
    }

    #[test]
    fn untouched_agents_agree() {
        let mut s = toy(400, 0.9);
        s.population.h = 0.2;
        let rep = Replication::prepare(&s, 0, 5).unwrap();
        for m in [Mechanism::MeanField, Mechanism::Common(7), Mechanism::Independent(7)] {
            assert_eq!(untouched_disagreements(&rep, m, 5).unwrap(), 0);
        }
    }

    #[test]
    fn debug_mode_agrees_with_agent_zero() {
        let s = toy(400, 0.9);
        let (first, many) = local_error_debug(&s, Mechanism::Independent(20), 5, 200, 10).unwrap();
        let tol = 3.0 * (first.std_error.powi(2) + many.std_error.powi(2)).sqrt();
        assert!((first.estimate - many.estimate).abs() < tol, "{} vs {}", first.estimate, many.estimate);
        let (a, b) = local_error_debug(&s, Mechanism::MeanField, 5, 20, 10).unwrap();
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn sweep_shapes() {
        let s = toy(400, 0.9);
        let one = error_sweep(&s, Mechanism::Common(10), Metric::Local, 5, &SweepGrid::SurveySize(vec![20]), 10).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], local_error(&s, Mechanism::Common(20), 5, 10).unwrap());
        let grid: SweepGrid = "M=10,100,400".parse().unwrap();
        let rows = error_sweep(&s, Mechanism::Common(10), Metric::Global, 3, &grid, 2).unwrap();
        assert_eq!(rows.iter().map(|r| r.survey_size).collect::<Vec<_>>(), vec![10, 100, 400]);
        assert!(error_sweep(&s, Mechanism::MeanField, Metric::Local, 3, &grid, 2).is_err());
        assert!("Q=1".parse::<SweepGrid>().is_err());
        let horizons = error_sweep(&s, Mechanism::MeanField, Metric::Global, 0, &"T=2,4".parse().unwrap(), 3).unwrap();
        assert_eq!(horizons[1], global_error(&s, Mechanism::MeanField, 4, 3).unwrap());
    }

    #[test]
    fn macro_gap_shrinks() {
        let spec = crate::population::PopulationSpec::single_class(0.5, 0.25, 0.5);
        let small = macro_gap(&crate::population::sample_population(&spec, 100, 1).unwrap()).unwrap();
        let big = macro_gap(&crate::population::sample_population(&spec, 100_000, 1).unwrap()).unwrap();
        assert!(big < small && big < 0.01);
    }
}
