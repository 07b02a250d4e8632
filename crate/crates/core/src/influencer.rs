//! Exogenous opinion paths of the major influencers.
//!
//! States of `M0` influencers are vectors in `{0,1}^M0`. The Markov variant
//! indexes its transition matrix by the integer whose bit `m` is the opinion
//! of influencer `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InfluencerPath {
    Fixed {
        state: Vec<u8>,
    },
    /// `start` on `[2kT, (2k+1)T)`, its complement otherwise.
    Periodic {
        half_period: usize,
        start: Vec<u8>,
    },
    Markov {
        transition: Vec<Vec<f64>>,
        /// Law of the state at t = 0; the stationary law when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Vec<f64>>,
    },
    Explicit {
        sequence: Vec<Vec<u8>>,
    },
}

pub fn encode_state(x0: &[u8]) -> usize {
    x0.iter().enumerate().map(|(m, &x)| usize::from(x) << m).sum()
}

pub fn decode_state(index: usize, m0: usize) -> Vec<u8> {
    (0..m0).map(|m| ((index >> m) & 1) as u8).collect()
}

fn check_binary(field: &str, x: &[u8], m0: usize) -> Result<()> {
    if x.len() != m0 {
        return Err(Error::config(field, format!("expected {m0} influencer opinions, got {}", x.len())));
    }
    if x.iter().any(|&v| v > 1) {
        return Err(Error::config(field, "influencer opinions must be 0 or 1"));
    }
    Ok(())
}

impl InfluencerPath {
    /// A single influencer that always holds opinion `x`.
    pub fn constant(x: u8) -> Self {
        InfluencerPath::Fixed { state: vec![x] }
    }

    /// A single influencer alternating 1 and 0 every `half_period` steps, starting at 1.
    pub fn square_wave(half_period: usize) -> Self {
        InfluencerPath::Periodic { half_period, start: vec![1] }
    }

    /// A single influencer following the two-state chain with
    /// `P[1 -> 0] = alpha` and `P[0 -> 1] = beta`, started from its stationary law.
    pub fn two_state(alpha: f64, beta: f64) -> Self {
        InfluencerPath::Markov { transition: vec![vec![1.0 - beta, beta], vec![alpha, 1.0 - alpha]], initial: None }
    }

    pub fn validate(&self, m0: usize) -> Result<()> {
        match self {
            InfluencerPath::Fixed { state } => check_binary("influencer.state", state, m0),
            InfluencerPath::Periodic { half_period, start } => {
                if *half_period == 0 {
                    return Err(Error::config("influencer.half_period", "must be at least 1"));
                }
                check_binary("influencer.start", start, m0)
            }
            InfluencerPath::Markov { transition, initial } => {
                let states = 1usize << m0;
                if transition.len() != states || transition.iter().any(|r| r.len() != states) {
                    return Err(Error::config("influencer.transition", format!("expected a {states}x{states} matrix")));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.iter().any(|&q| !(q >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                        return Err(Error::config("influencer.transition", format!("row {i} is not a probability vector")));
                    }
                }
                if let Some(init) = initial {
                    if init.len() != states
                        || init.iter().any(|&q| !(q >= 0.0))
                        || (init.iter().sum::<f64>() - 1.0).abs() > 1e-12
                    {
                        return Err(Error::config("influencer.initial", "not a probability vector over the states"));
                    }
                } else {
                    stationary_distribution(transition)?;
                }
                Ok(())
            }
            InfluencerPath::Explicit { sequence } => {
                if sequence.is_empty() {
                    return Err(Error::config("influencer.sequence", "empty sequence"));
                }
                sequence.iter().try_for_each(|x| check_binary("influencer.sequence", x, m0))
            }
        }
    }

    /// Whether the realized path depends on the seed.
    pub fn is_random(&self) -> bool {
        matches!(self, InfluencerPath::Markov { .. })
    }

    /// Influencer states for `t = 0 .. len`. Explicit paths hold their last
    /// state once the sequence runs out.
    pub fn realize(&self, len: usize, seed: u64, m0: usize) -> Result<Vec<Vec<u8>>> {
        self.validate(m0)?;
        Ok(match self {
            InfluencerPath::Fixed { state } => vec![state.clone(); len],
            InfluencerPath::Periodic { half_period, start } => {
                let flipped: Vec<u8> = start.iter().map(|&x| 1 - x).collect();
                (0..len).map(|t| if (t / half_period) % 2 == 0 { start.clone() } else { flipped.clone() }).collect()
            }
            InfluencerPath::Markov { transition, initial } => {
                let init = match initial {
                    Some(v) => v.clone(),
                    None => stationary_distribution(transition)?,
                };
                let mut rng = SeedKey::new(seed).label("influencer").stream(0);
                let mut out = Vec::with_capacity(len);
                if len > 0 {
                    let mut s = pick_index(&init, rng.uniform());
                    out.push(decode_state(s, m0));
                    for _ in 1..len {
                        s = pick_index(&transition[s], rng.uniform());
                        out.push(decode_state(s, m0));
                    }
                }
                out
            }
            InfluencerPath::Explicit { sequence } => {
                (0..len).map(|t| sequence[t.min(sequence.len() - 1)].clone()).collect()
            }
        })
    }

    /// Stationary mean of each influencer's opinion, when the path has one.
    pub fn stationary_mean(&self, m0: usize) -> Result<Vec<f64>> {
        match self {
            InfluencerPath::Fixed { state } => Ok(state.iter().map(|&x| f64::from(x)).collect()),
            InfluencerPath::Periodic { start, .. } => Ok(start.iter().map(|_| 0.5).collect()),
            InfluencerPath::Markov { transition, .. } => {
                let pi = stationary_distribution(transition)?;
                Ok((0..m0)
                    .map(|m| pi.iter().enumerate().filter(|(s, _)| (s >> m) & 1 == 1).map(|(_, p)| p).sum())
                    .collect())
            }
            InfluencerPath::Explicit { .. } => {
                Err(Error::Unsupported("an explicit influencer sequence has no stationary mean".into()))
            }
        }
    }
}

fn pick_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Solves `pi Q = pi`, `sum pi = 1`.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = transition.len();
    // (Q^T - I) with the last equation replaced by the normalization.
    let mut a = nalgebra::DMatrix::from_fn(n, n, |i, j| transition[j][i] - if i == j { 1.0 } else { 0.0 });
    let mut b = nalgebra::DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::config("influencer.transition", "chain has no unique stationary distribution"))?;
    Ok(pi.iter().map(|v| v.max(0.0)).collect())
}
