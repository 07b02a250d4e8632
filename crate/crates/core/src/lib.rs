//! Binary opinion dynamics in a population split into communities and exposed
//! to a handful of major influencers.
//!
//! The crate simulates the full-information threshold dynamic next to three
//! incomplete-information approximations (common survey, independent survey
//! and the McKean-Vlasov mean-field recursion), measures how far the
//! approximations drift from the exact process, and evaluates the closed-form
//! results available for the linear mean-field model.
//!
//! Module map:
//!
//! - [`population`]: feature vectors, population laws, sampling, class proportions.
//! - [`influence`]: the mean influence function, its empirical counterpart and Lipschitz constant.
//! - [`influencer`]: exogenous influencer paths (fixed, periodic, Markov, explicit).
//! - [`dynamics`]: one-step updates for each information regime and the coupled runner.
//! - [`meanfield`]: the mean-field recursion and linear-model analytics.
//! - [`metrics`]: local and global error estimation by coupled Monte Carlo.
//! - [`scenario`] / [`catalog`]: declarative experiment configs and the shipped scenario set.

pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod influence;
pub mod influencer;
pub mod linalg;
pub mod meanfield;
pub mod metrics;
pub mod output;
pub mod population;
pub mod rng;
pub mod scenario;

pub use dynamics::{run, Mechanism, RunResult, SimState};
pub use error::{Error, Result};
pub use influence::MacroFunction;
pub use influencer::InfluencerPath;
pub use population::{class_proportions, sample_population, ClassProportions, FeatureVector, Population, PopulationSpec};
pub use scenario::ScenarioConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
