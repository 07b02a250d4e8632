//! Declarative experiment description, loaded from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Mechanism;
use crate::error::{Error, Result};
use crate::influencer::InfluencerPath;
use crate::population::{ClassMixture, PopulationSpec};

pub const SPEC_VERSION: &str = "1";
pub const DEFAULT_MAX_AGENT_STEPS: f64 = 5e9;

fn default_version() -> String {
    SPEC_VERSION.to_string()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// Cap on `N * T * replications`.
    #[serde(default = "default_cap")]
    pub max_agent_steps: f64,
    #[serde(default)]
    pub allow_large: bool,
}

fn default_cap() -> f64 {
    DEFAULT_MAX_AGENT_STEPS
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_agent_steps: DEFAULT_MAX_AGENT_STEPS, allow_large: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_version")]
    pub spec_version: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub n_agents: usize,
    pub horizon: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub mechanisms: Vec<Mechanism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub population: PopulationSpec,
    pub influencer: InfluencerPath,
    #[serde(default)]
    pub budget: Budget,
}

impl ScenarioConfig {
    /// Single class, uniform thresholds, `c0 = (1 - c) / 2`, `xi ~ Bernoulli(1/2)`
    /// and one influencer fixed at 1.
    pub fn toy(name: &str, c: f64, n_agents: usize, horizon: usize, replications: usize, mechanisms: Vec<Mechanism>) -> Self {
        ScenarioConfig {
            spec_version: default_version(),
            name: name.to_string(),
            description: String::new(),
            n_agents,
            horizon,
            replications,
            master_seed: 0,
            mechanisms,
            output_dir: None,
            population: PopulationSpec::single_class(c, (1.0 - c) / 2.0, 0.5),
            influencer: InfluencerPath::constant(1),
            budget: Budget::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| locate(text, s.start)).unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("scenario", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("scenario", e.to_string()))
    }

    /// SHA-256 of the canonical TOML serialization, as lowercase hex.
    pub fn config_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::config("spec_version", format!("unsupported version `{}`", self.spec_version)));
        }
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.n_agents == 0 {
            return Err(Error::config("n_agents", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::config("mechanisms", "list at least one mechanism"));
        }
        for m in &self.mechanisms {
            m.validate(self.n_agents)?;
        }
        if !(self.budget.max_agent_steps > 0.0) {
            return Err(Error::config("budget.max_agent_steps", "must be positive"));
        }
        self.population.validate()?;
        if self.population.enforce_normalization {
            self.population.check_normalization()?;
        }
        self.influencer.validate(self.population.influencers)
    }

    /// Applies `key=value` overrides. Besides dotted paths into the TOML
    /// document (`population.h=0.5`), the short keys `N`, `T`, `reps`,
    /// `seed`, `h`, `c`, `c0` are understood; `c` and `c0` need a single
    /// class and a single influencer.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml_string()?).map_err(|e| Error::config("scenario", e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config("--set", format!("`{item}` is not key=value")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let value = parse_value(raw);
            let number = || {
                value.as_float().or_else(|| value.as_integer().map(|i| i as f64)).ok_or_else(|| {
                    Error::config(key, format!("`{raw}` is not a number"))
                })
            };
            match key {
                "N" | "n" => set_path(&mut doc, "n_agents", value.clone())?,
                "T" => set_path(&mut doc, "horizon", value.clone())?,
                "reps" => set_path(&mut doc, "replications", value.clone())?,
                "seed" => set_path(&mut doc, "master_seed", value.clone())?,
                "h" => set_path(&mut doc, "population.h", toml::Value::Float(number()?))?,
                "c" => {
                    self.require_scalar_model(key)?;
                    let v = number()?;
                    set_path(&mut doc, "population.inter_class", toml::Value::try_from(vec![vec![v]]).expect("matrix"))?
                }
                "c0" => {
                    self.require_scalar_model(key)?;
                    let mix = vec![ClassMixture::point(vec![number()?])];
                    set_path(&mut doc, "population.mixture", toml::Value::try_from(mix).expect("mixture"))?
                }
                path => set_path(&mut doc, path, value)?,
            }
        }
        let text = toml::to_string(&doc).map_err(|e| Error::config("scenario", e.to_string()))?;
        Self::from_toml_str(&text)
    }

    fn require_scalar_model(&self, key: &str) -> Result<()> {
        if self.population.classes() != 1 || self.population.influencers != 1 {
            return Err(Error::config(key, "shorthand needs one class and one influencer; use a dotted path"));
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config(path, "empty key"))?;
    let mut table = doc;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Best-effort name of the key whose value starts at byte `offset`.
fn locate(text: &str, offset: usize) -> String {
    let mut section = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.lines() {
        let t = line.trim();
        if pos > offset {
            break;
        }
        if t.starts_with('[') {
            section = t.trim_matches(|c| c == '[' || c == ']').to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        pos += line.len() + 1;
    }
    match (section.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "sample"
n_agents = 100
horizon = 10
replications = 2
master_seed = 5
mechanisms = ["full", "common:10", "meanfield"]

[population]
mu = [1.0]
inter_class = [[0.8]]
influencers = 1
initial = [0.5]
mixture = [{ components = [{ weight = 1.0, c0 = [0.1] }] }]

[influencer]
kind = "fixed"
state = [1]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ScenarioConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.mechanisms[1], Mechanism::Common(10));
        assert_eq!(cfg.budget.max_agent_steps, DEFAULT_MAX_AGENT_STEPS);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.config_hash().unwrap(), cfg.config_hash().unwrap());
    }

    #[test]
    fn overrides() {
        let cfg = ScenarioConfig::from_toml_str(SAMPLE).unwrap();
        let o = cfg.with_overrides(&["c=0.5", "c0=0.2", "N=50", "seed=9", "population.h=0.5"]).unwrap();
        assert_eq!(o.population.inter_class, vec![vec![0.5]]);
        assert_eq!(o.population.mixture[0].components[0].c0, vec![0.2]);
        assert_eq!((o.n_agents, o.master_seed, o.population.h), (50, 9, 0.5));
        assert_ne!(o.config_hash().unwrap(), cfg.config_hash().unwrap());
        assert!(cfg.with_overrides(&["nonsense"]).is_err());
        assert!(matches!(cfg.with_overrides(&["h=2"]), Err(Error::Config { field, .. }) if field == "population.h"));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SAMPLE.replace("replications = 2", "replications = 0");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { field, .. }) if field == "replications"));
        let bad = SAMPLE.replace("mu = [1.0]", "mu = [0.7]");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { field, .. }) if field == "population.mu"));
        let bad = SAMPLE.replace("\"common:10\"", "\"common:1000\"");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { field, .. }) if field == "mechanisms"));
        let bad = SAMPLE.replace("horizon = 10", "horizon = 10\nbogus = 1");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }
}
