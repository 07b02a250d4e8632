//! One-step opinion updates under each information regime, and the coupled
//! multi-replication runner.
//!
//! All mechanisms of one replication share the sampled features, the
//! influence events `B_n(t)` and the influencer path. Noise layout:
//!
//! | stream | key | substream | position |
//! |---|---|---|---|
//! | features | `(population seed, "features")` | agent | draw |
//! | influence events | `(master, "influence", rep)` | agent | t |
//! | common surveys | `(master, "common", rep)` | t | draw |
//! | independent survey counts | `(master, "independent", rep)` | `t << 32 \| agent` | draw |
//! | influencer path | `(influencer seed, "influencer")` | 0 | draw |

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{analytic_unchecked, check_influencer_state, empirical_unchecked, MacroFunction};
use crate::population::{
    class_counts_of, class_proportions, proportions_from_counts, sample_population, ClassProportions, Population,
};
use crate::rng::{sample_without_replacement, subset_counts, SeedKey};
use crate::scenario::ScenarioConfig;

/// How updating agents estimate the public opinion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Mechanism {
    /// Exact class proportions.
    Full,
    /// One survey of `M` agents per step, shared by everybody.
    Common(usize),
    /// A fresh survey of `M` agents per updating agent.
    Independent(usize),
    /// The deterministic-given-influencers mean-field recursion.
    MeanField,
}

impl Mechanism {
    pub fn survey_size(&self) -> Option<usize> {
        match self {
            Mechanism::Common(m) | Mechanism::Independent(m) => Some(*m),
            _ => None,
        }
    }

    pub fn with_survey_size(self, m: usize) -> Self {
        match self {
            Mechanism::Common(_) => Mechanism::Common(m),
            Mechanism::Independent(_) => Mechanism::Independent(m),
            other => other,
        }
    }

    pub(crate) fn validate(&self, n_agents: usize) -> Result<()> {
        if let Some(m) = self.survey_size() {
            if m == 0 || m > n_agents {
                return Err(Error::config("mechanisms", format!("survey size {m} must lie in 1..={n_agents}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Full => write!(f, "full"),
            Mechanism::Common(m) => write!(f, "common:{m}"),
            Mechanism::Independent(m) => write!(f, "independent:{m}"),
            Mechanism::MeanField => write!(f, "meanfield"),
        }
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once([':', '(', '=']) {
            Some((n, a)) => (n.trim(), Some(a.trim_end_matches(')').trim())),
            None => (s.as_str(), None),
        };
        let size = |a: Option<&str>| -> Result<usize> {
            let a = a.ok_or_else(|| Error::config("mechanisms", format!("`{name}` needs a survey size, e.g. {name}:100")))?;
            let a = a.trim_start_matches("m=").trim_start_matches("m:");
            a.parse().map_err(|_| Error::config("mechanisms", format!("bad survey size `{a}`")))
        };
        match name {
            "full" => Ok(Mechanism::Full),
            "meanfield" | "mean-field" | "mkv" => Ok(Mechanism::MeanField),
            "common" => Ok(Mechanism::Common(size(arg)?)),
            "independent" => Ok(Mechanism::Independent(size(arg)?)),
            other => Err(Error::config("mechanisms", format!("unknown mechanism `{other}`"))),
        }
    }
}

impl TryFrom<String> for Mechanism {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Mechanism> for String {
    fn from(m: Mechanism) -> String {
        m.to_string()
    }
}

/// State of one N-agent process.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: usize,
    pub opinions: Vec<bool>,
    pub mechanism: Mechanism,
    /// Shared mean-field estimate; present only for [`Mechanism::MeanField`].
    pub mkv_p: Option<ClassProportions>,
}

impl SimState {
    /// Opinions start at the sampled `xi`; the mean-field estimate starts at
    /// `P[xi = 1, kappa = k]`.
    pub fn initial(population: &Population, mechanism: Mechanism) -> Self {
        SimState {
            t: 0,
            opinions: population.initial_opinions(),
            mechanism,
            mkv_p: (mechanism == Mechanism::MeanField).then(|| population.spec().initial_proportions()),
        }
    }

    pub fn proportions(&self, population: &Population) -> Result<ClassProportions> {
        class_proportions(&self.opinions, population)
    }

    fn expect(&self, what: &str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!("{what} called on a state with mechanism {}", self.mechanism)))
        }
    }
}

fn check_dims(state: &SimState, population: &Population, x0: &[u8], events: &[bool]) -> Result<()> {
    if state.opinions.len() != population.len() || events.len() != population.len() {
        return Err(Error::usage(format!(
            "population has {} agents but got {} opinions and {} influence events",
            population.len(),
            state.opinions.len(),
            events.len()
        )));
    }
    check_influencer_state(x0, population.spec().influencers)
}

#[inline]
fn adopts(population: &Population, n: usize, social: f64, x0: &[u8]) -> bool {
    let infl: f64 = population.c0_row(n).iter().zip(x0).map(|(c, &x)| if x == 1 { *c } else { 0.0 }).sum();
    social + infl > population.threshold(n)
}

/// Updates, in place, every agent with an influence event using the same
/// class proportions `p`.
fn update_shared(state: &mut SimState, population: &Population, x0: &[u8], events: &[bool], p: &[f64]) {
    let scores = population.class_scores(p);
    for (n, (x, &b)) in state.opinions.iter_mut().zip(events).enumerate() {
        if b {
            *x = adopts(population, n, scores[population.kappa(n)], x0);
        }
    }
    state.t += 1;
}

/// Full information: every updating agent sees the exact class proportions.
pub fn step_full(mut state: SimState, population: &Population, x0_t: &[u8], influence_events: &[bool]) -> Result<SimState> {
    state.expect("step_full", state.mechanism == Mechanism::Full)?;
    check_dims(&state, population, x0_t, influence_events)?;
    let p = class_proportions(&state.opinions, population)?;
    update_shared(&mut state, population, x0_t, influence_events, p.as_slice());
    Ok(state)
}

/// Class proportions of opinion 1 estimated from a survey.
pub fn survey_estimate(opinions: &[bool], population: &Population, survey: &[usize]) -> ClassProportions {
    let counts = class_counts_of(survey.iter().map(|&i| (i, opinions[i])), population);
    proportions_from_counts(&counts, survey.len())
}

/// Common survey: one sample of `M` distinct agents, shared by all updating agents.
pub fn step_survey_common(
    mut state: SimState,
    population: &Population,
    x0_t: &[u8],
    influence_events: &[bool],
    survey_indices: &[usize],
) -> Result<SimState> {
    let Mechanism::Common(m) = state.mechanism else {
        return Err(Error::usage(format!("step_survey_common called on a state with mechanism {}", state.mechanism)));
    };
    check_dims(&state, population, x0_t, influence_events)?;
    if survey_indices.len() != m {
        return Err(Error::usage(format!("survey has {} agents, mechanism expects {m}", survey_indices.len())));
    }
    let mut seen = vec![false; population.len()];
    for &i in survey_indices {
        if i >= population.len() {
            return Err(Error::usage(format!("survey index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::usage(format!("survey index {i} appears twice")));
        }
    }
    let p = survey_estimate(&state.opinions, population, survey_indices);
    update_shared(&mut state, population, x0_t, influence_events, p.as_slice());
    Ok(state)
}

/// Independent surveys: each updating agent draws its own `M` distinct agents
/// from `noise` and reacts to its own estimate. Agents without an influence
/// event draw nothing. Only the number of opinion-1 agents per class in the
/// survey enters the estimate, so that count is drawn directly.
pub fn step_survey_independent(
    mut state: SimState,
    population: &Population,
    x0_t: &[u8],
    influence_events: &[bool],
    noise: &ReplicationNoise,
) -> Result<SimState> {
    let Mechanism::Independent(m) = state.mechanism else {
        return Err(Error::usage(format!("step_survey_independent called on a state with mechanism {}", state.mechanism)));
    };
    check_dims(&state, population, x0_t, influence_events)?;
    let n_agents = population.len();
    if m == 0 || m > n_agents {
        return Err(Error::usage(format!("survey size {m} must lie in 1..={n_agents}")));
    }
    let t = state.t;
    let old = &state.opinions;
    let ones = class_counts_of(old.iter().copied().enumerate(), population);
    let new: Vec<bool> = (0..n_agents)
        .into_par_iter()
        .with_min_len(256)
        .map(|n| {
            if !influence_events[n] {
                return old[n];
            }
            let k = population.kappa(n);
            let p = proportions_from_counts(&noise.independent_counts(t, n, n_agents, &ones, m), m);
            let social: f64 = population.spec().inter_class[k].iter().zip(p.as_slice()).map(|(c, q)| c * q).sum();
            adopts(population, n, social, x0_t)
        })
        .collect();
    state.opinions = new;
    state.t += 1;
    Ok(state)
}

/// Mean field: updating agents use the shared estimate `mkv_p`, which then
/// advances by `mkv_p' = (1 - h) mkv_p + h phi(mkv_p, x0_t)`.
pub fn step_meanfield(
    mut state: SimState,
    population: &Population,
    x0_t: &[u8],
    influence_events: &[bool],
    macro_fn: &MacroFunction<'_>,
) -> Result<SimState> {
    state.expect("step_meanfield", state.mechanism == Mechanism::MeanField)?;
    check_dims(&state, population, x0_t, influence_events)?;
    let p = state.mkv_p.take().ok_or_else(|| Error::usage("mean-field state carries no mkv_p"))?;
    if p.len() != population.classes() || macro_fn.classes() != population.classes() {
        return Err(Error::usage("mean-field estimate and population disagree on the number of classes"));
    }
    update_shared(&mut state, population, x0_t, influence_events, p.as_slice());
    state.mkv_p = Some(mkv_advance(macro_fn, &p, x0_t, population.spec().h));
    Ok(state)
}

pub(crate) fn mkv_advance(macro_fn: &MacroFunction<'_>, p: &ClassProportions, x0: &[u8], h: f64) -> ClassProportions {
    let phi = match macro_fn {
        MacroFunction::Analytic(a) => analytic_unchecked(a, p.as_slice(), x0),
        MacroFunction::Empirical(pop) => empirical_unchecked(pop, p.as_slice(), x0),
    };
    if h == 1.0 {
        return ClassProportions(phi);
    }
    ClassProportions(p.0.iter().zip(phi).map(|(q, f)| (1.0 - h) * q + h * f).collect())
}

/// Counter-based noise of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationNoise {
    pub replication: usize,
    pub population_seed: u64,
    pub influencer_seed: u64,
    influence: SeedKey,
    common: SeedKey,
    independent: SeedKey,
    h: f64,
}

impl ReplicationNoise {
    pub fn new(master_seed: u64, replication: usize, h: f64) -> Self {
        let root = SeedKey::new(master_seed);
        let r = replication as u64;
        ReplicationNoise {
            replication,
            population_seed: root.label("population").index(r).value(),
            influencer_seed: root.label("influencer").index(r).value(),
            influence: root.label("influence").index(r),
            common: root.label("common").index(r),
            independent: root.label("independent").index(r),
            h,
        }
    }

    /// `B_n(t)` for all agents. With `h = 1` every agent updates and no draws are made.
    pub fn influence_events(&self, t: usize, n_agents: usize) -> Vec<bool> {
        if self.h >= 1.0 {
            return vec![true; n_agents];
        }
        (0..n_agents).map(|n| self.influence.uniform_at(n as u64, t as u64) < self.h).collect()
    }

    pub fn common_survey(&self, t: usize, n_agents: usize, m: usize) -> Vec<usize> {
        sample_without_replacement(&mut self.common.stream(t as u64), n_agents, m)
    }

    /// Opinion-1 counts per class in the survey of `agent` at step `t`, given
    /// the opinion-1 counts `ones` of the whole population.
    pub fn independent_counts(&self, t: usize, agent: usize, n_agents: usize, ones: &[u64], m: usize) -> Vec<u64> {
        let sub = ((t as u64) << 32) | agent as u64;
        subset_counts(&mut self.independent.stream(sub), n_agents as u64, ones, m as u64)
    }
}

/// Everything one replication's mechanisms have in common.
#[derive(Debug, Clone)]
pub struct Replication {
    pub population: Population,
    pub path: Vec<Vec<u8>>,
    pub noise: ReplicationNoise,
}

impl Replication {
    /// Samples the population and realizes the influencer path for `horizon` steps.
    pub fn prepare(scenario: &ScenarioConfig, index: usize, horizon: usize) -> Result<Self> {
        let noise = ReplicationNoise::new(scenario.master_seed, index, scenario.population.h);
        let population = sample_population(&scenario.population, scenario.n_agents, noise.population_seed)?;
        let path = scenario.influencer.realize(horizon, noise.influencer_seed, scenario.population.influencers)?;
        Ok(Replication { population, path, noise })
    }

    /// Runs `mechanism` for `horizon` steps, calling `observe` on the initial
    /// state and after every step.
    pub fn simulate(
        &self,
        mechanism: Mechanism,
        horizon: usize,
        mut observe: impl FnMut(&SimState) -> Result<()>,
    ) -> Result<SimState> {
        if horizon > self.path.len() {
            return Err(Error::usage(format!("influencer path covers {} steps, {horizon} requested", self.path.len())));
        }
        mechanism.validate(self.population.len())?;
        let macro_fn = MacroFunction::for_population(&self.population);
        let n = self.population.len();
        let mut state = SimState::initial(&self.population, mechanism);
        observe(&state)?;
        for t in 0..horizon {
            let x0 = &self.path[t];
            let events = self.noise.influence_events(t, n);
            state = match mechanism {
                Mechanism::Full => step_full(state, &self.population, x0, &events)?,
                Mechanism::Common(m) => {
                    let survey = self.noise.common_survey(t, n, m);
                    step_survey_common(state, &self.population, x0, &events, &survey)?
                }
                Mechanism::Independent(_) => step_survey_independent(state, &self.population, x0, &events, &self.noise)?,
                Mechanism::MeanField => step_meanfield(state, &self.population, x0, &events, &macro_fn)?,
            };
            observe(&state)?;
        }
        Ok(state)
    }
}

/// Class proportions over time of one mechanism in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub mechanism: Mechanism,
    pub replication: usize,
    pub points: Vec<ClassProportions>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub n_agents: usize,
    pub horizon: usize,
    /// `P^N(t)` per (mechanism, replication), ordered by replication then mechanism.
    pub trajectories: Vec<Trajectory>,
    /// The shared mean-field estimate per replication, when the mean-field mechanism ran.
    pub mkv: Vec<Trajectory>,
}

impl RunResult {
    pub fn trajectory(&self, mechanism: Mechanism, replication: usize) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.mechanism == mechanism && t.replication == replication)
    }
}

/// Refuses runs above the scenario's agent-step budget unless it is lifted.
pub fn check_budget(scenario: &ScenarioConfig, agent_steps: f64) -> Result<()> {
    let cap = scenario.budget.max_agent_steps;
    if !scenario.budget.allow_large && agent_steps > cap {
        return Err(Error::Budget { requested: agent_steps, cap });
    }
    Ok(())
}

/// Runs every mechanism of the scenario for `horizon` steps in every replication.
pub fn run(scenario: &ScenarioConfig) -> Result<RunResult> {
    scenario.validate()?;
    check_budget(scenario, scenario.n_agents as f64 * scenario.horizon as f64 * scenario.replications as f64)?;
    let horizon = scenario.horizon;
    let per_rep: Vec<(Vec<Trajectory>, Option<Trajectory>)> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| {
            let rep = Replication::prepare(scenario, r, horizon)?;
            let mut trajectories = Vec::new();
            let mut mkv = None;
            for &mech in &scenario.mechanisms {
                let mut points = Vec::with_capacity(horizon + 1);
                let mut mkv_points = Vec::new();
                rep.simulate(mech, horizon, |s| {
                    points.push(s.proportions(&rep.population)?);
                    if let Some(p) = &s.mkv_p {
                        mkv_points.push(p.clone());
                    }
                    Ok(())
                })?;
                if mech == Mechanism::MeanField {
                    mkv = Some(Trajectory { mechanism: mech, replication: r, points: mkv_points });
                }
                trajectories.push(Trajectory { mechanism: mech, replication: r, points });
            }
            Ok((trajectories, mkv))
        })
        .collect::<Result<_>>()?;
    let mut result = RunResult {
        scenario: scenario.name.clone(),
        n_agents: scenario.n_agents,
        horizon,
        trajectories: Vec::new(),
        mkv: Vec::new(),
    };
    for (trajs, mkv) in per_rep {
        result.trajectories.extend(trajs);
        result.mkv.extend(mkv);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influencer::InfluencerPath;
    use crate::population::{FeatureVector, PopulationSpec};

    fn toy(c: f64, n: usize, seed: u64) -> Population {
        sample_population(&PopulationSpec::single_class(c, (1.0 - c) / 2.0, 0.5), n, seed).unwrap()
    }

    #[test]
    fn mechanism_labels_round_trip() {
        for m in [Mechanism::Full, Mechanism::Common(10), Mechanism::Independent(3), Mechanism::MeanField] {
            assert_eq!(m.to_string().parse::<Mechanism>().unwrap(), m);
        }
        assert_eq!("common(100)".parse::<Mechanism>().unwrap(), Mechanism::Common(100));
        assert!("common".parse::<Mechanism>().is_err());
        assert!("survey:3".parse::<Mechanism>().is_err());
    }

    #[test]
    fn no_events_no_change() {
        let pop = toy(0.9, 50, 1);
        let s = SimState::initial(&pop, Mechanism::Full);
        let next = step_full(s.clone(), &pop, &[1], &vec![false; 50]).unwrap();
        assert_eq!(next.opinions, s.opinions);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn full_step_by_hand() {
        let spec = PopulationSpec::single_class(0.0, 1.0, 0.0);
        let agent = |s| FeatureVector { xi: false, kappa: 0, c0_row: vec![1.0], threshold: s };
        let pop = Population::from_features(spec, &[agent(0.3), agent(0.9)]).unwrap();
        // scores are exactly 1.0: 1 > 0.3 and 1 > 0.9
        let next = step_full(SimState::initial(&pop, Mechanism::Full), &pop, &[1], &[true, true]).unwrap();
        assert_eq!(next.opinions, vec![true, true]);
        let spec = PopulationSpec::single_class(0.0, 0.5, 0.0);
        let agent = |s| FeatureVector { xi: false, kappa: 0, c0_row: vec![0.5], threshold: s };
        let pop = Population::from_features(spec, &[agent(0.3), agent(0.9)]).unwrap();
        let next = step_full(SimState::initial(&pop, Mechanism::Full), &pop, &[1], &[true, true]).unwrap();
        assert_eq!(next.opinions, vec![true, false]);
    }

    #[test]
    fn census_survey_matches_full() {
        let pop = toy(0.9, 40, 2);
        let full = step_full(SimState::initial(&pop, Mechanism::Full), &pop, &[1], &vec![true; 40]).unwrap();
        let survey: Vec<usize> = (0..40).rev().collect();
        let common =
            step_survey_common(SimState::initial(&pop, Mechanism::Common(40)), &pop, &[1], &vec![true; 40], &survey).unwrap();
        assert_eq!(full.opinions, common.opinions);
    }

    #[test]
    fn single_sample_estimate() {
        let spec = PopulationSpec {
            mu: vec![0.5, 0.5],
            inter_class: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            influencers: 1,
            mixture: vec![
                crate::population::ClassMixture::point(vec![0.0]),
                crate::population::ClassMixture::point(vec![0.0]),
            ],
            threshold: Default::default(),
            initial: vec![0.5, 0.5],
            h: 1.0,
            enforce_normalization: false,
        };
        let agents = vec![
            FeatureVector { xi: true, kappa: 0, c0_row: vec![0.0], threshold: 0.5 },
            FeatureVector { xi: false, kappa: 1, c0_row: vec![0.0], threshold: 0.5 },
        ];
        let pop = Population::from_features(spec, &agents).unwrap();
        assert_eq!(survey_estimate(&[true, false], &pop, &[0]).0, vec![1.0, 0.0]);
    }

    #[test]
    fn common_survey_rejects_duplicates() {
        let pop = toy(0.5, 10, 3);
        let s = SimState::initial(&pop, Mechanism::Common(2));
        assert!(matches!(step_survey_common(s, &pop, &[1], &[true; 10], &[3, 3]), Err(Error::Usage(_))));
    }

    #[test]
    fn survey_estimate_is_unbiased() {
        let pop = toy(0.5, 200, 4);
        let opinions = pop.initial_opinions();
        let exact = class_proportions(&opinions, &pop).unwrap().0[0];
        let noise = ReplicationNoise::new(9, 0, 1.0);
        let (m, draws) = (20, 10_000);
        let est: Vec<f64> = (0..draws).map(|t| survey_estimate(&opinions, &pop, &noise.common_survey(t, 200, m)).0[0]).collect();
        let mean = est.iter().sum::<f64>() / draws as f64;
        // hypergeometric variance of the sample mean
        let var = exact * (1.0 - exact) / m as f64 * (200.0 - m as f64) / 199.0;
        assert!((mean - exact).abs() < 3.0 * (var / draws as f64).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn independent_surveys_differ_between_agents() {
        let noise = ReplicationNoise::new(1, 0, 1.0);
        let ones = [50u64];
        let differ = (0..100)
            .filter(|&t| noise.independent_counts(t, 0, 100, &ones, 5) != noise.independent_counts(t, 1, 100, &ones, 5))
            .count();
        assert!(differ > 0);
    }

    #[test]
    fn independent_census_matches_full() {
        let pop = toy(0.9, 60, 5);
        let noise = ReplicationNoise::new(2, 0, 1.0);
        let full = step_full(SimState::initial(&pop, Mechanism::Full), &pop, &[1], &[true; 60]).unwrap();
        let ind = step_survey_independent(SimState::initial(&pop, Mechanism::Independent(60)), &pop, &[1], &[true; 60], &noise)
            .unwrap();
        assert_eq!(full.opinions, ind.opinions);
    }

    #[test]
    fn meanfield_affine_contraction() {
        // phi constant q: c = 0 and c0 = q
        let q = 0.3;
        let mut spec = PopulationSpec::single_class(0.0, q, 0.9);
        spec.h = 0.5;
        let pop = sample_population(&spec, 10, 1).unwrap();
        let f = MacroFunction::analytic(&spec).unwrap();
        let mut s = SimState::initial(&pop, Mechanism::MeanField);
        for _ in 0..20 {
            let before = s.mkv_p.clone().unwrap().0[0];
            s = step_meanfield(s, &pop, &[1], &vec![true; 10], &f).unwrap();
            let after = s.mkv_p.clone().unwrap().0[0];
            assert!(((after - q) - 0.5 * (before - q)).abs() < 1e-15);
        }
    }

    #[test]
    fn meanfield_requires_estimate() {
        let pop = toy(0.5, 5, 1);
        let f = MacroFunction::for_population(&pop);
        let mut s = SimState::initial(&pop, Mechanism::MeanField);
        s.mkv_p = None;
        assert!(matches!(step_meanfield(s, &pop, &[1], &[true; 5], &f), Err(Error::Usage(_))));
    }

    #[test]
    fn influence_events_rate() {
        let noise = ReplicationNoise::new(3, 0, 0.3);
        let (n, t_max) = (1000, 100);
        let hits: usize = (0..t_max).map(|t| noise.influence_events(t, n).iter().filter(|&&b| b).count()).sum();
        let total = (n * t_max) as f64;
        let sd = (0.3 * 0.7 / total).sqrt();
        assert!((hits as f64 / total - 0.3).abs() < 3.0 * sd);
    }

    #[test]
    fn asynchronous_with_h_one_is_synchronous() {
        // h = 1: X(t+1) = 1{S(t) > s} for every agent, every step
        let scenario = ScenarioConfig::toy("sync", 0.8, 300, 30, 1, vec![Mechanism::Full]);
        let rep = Replication::prepare(&scenario, 0, 30).unwrap();
        let pop = &rep.population;
        let mut manual = pop.initial_opinions();
        let mut states = Vec::new();
        rep.simulate(Mechanism::Full, 30, |s| {
            states.push(s.opinions.clone());
            Ok(())
        })
        .unwrap();
        for t in 0..30 {
            assert_eq!(states[t], manual);
            let p = class_proportions(&manual, pop).unwrap().0[0];
            manual = (0..pop.len()).map(|n| 0.8 * p + 0.1 > pop.threshold(n)).collect();
        }
    }

    #[test]
    fn run_with_zero_horizon_has_only_initial_points() {
        let mut scenario = ScenarioConfig::toy("t0", 0.9, 100, 0, 3, vec![Mechanism::Full, Mechanism::MeanField]);
        scenario.influencer = InfluencerPath::constant(1);
        let res = run(&scenario).unwrap();
        for r in 0..3 {
            let a = res.trajectory(Mechanism::Full, r).unwrap();
            let b = res.trajectory(Mechanism::MeanField, r).unwrap();
            assert_eq!(a.points.len(), 1);
            assert_eq!(a.points, b.points);
        }
    }

    #[test]
    fn budget_guard() {
        let mut scenario = ScenarioConfig::toy("big", 0.9, 1000, 100, 10, vec![Mechanism::Full]);
        scenario.budget.max_agent_steps = 1e5;
        assert!(matches!(run(&scenario), Err(Error::Budget { .. })));
    }
}
