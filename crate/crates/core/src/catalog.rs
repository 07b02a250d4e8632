//! Built-in scenarios, embedded at compile time.

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

const ENTRIES: &[(&str, &str)] = &[
    ("echo_chamber", include_str!("../catalog/echo_chamber.toml")),
    ("fads", include_str!("../catalog/fads.toml")),
    ("fig1_left", include_str!("../catalog/fig1_left.toml")),
    ("fig1_middle", include_str!("../catalog/fig1_middle.toml")),
    ("fig1_right", include_str!("../catalog/fig1_right.toml")),
    ("fig1_right_1m", include_str!("../catalog/fig1_right_1m.toml")),
    ("fig2_left", include_str!("../catalog/fig2_left.toml")),
    ("fig2_middle", include_str!("../catalog/fig2_middle.toml")),
    ("fig2_right", include_str!("../catalog/fig2_right.toml")),
    ("fig3", include_str!("../catalog/fig3.toml")),
    ("fig4", include_str!("../catalog/fig4.toml")),
    ("fig5_left", include_str!("../catalog/fig5_left.toml")),
    ("fig5_middle", include_str!("../catalog/fig5_middle.toml")),
    ("fig5_right", include_str!("../catalog/fig5_right.toml")),
    ("fig6_left", include_str!("../catalog/fig6_left.toml")),
    ("fig6_middle", include_str!("../catalog/fig6_middle.toml")),
    ("fig6_right", include_str!("../catalog/fig6_right.toml")),
    ("fig7_left", include_str!("../catalog/fig7_left.toml")),
    ("fig7_middle", include_str!("../catalog/fig7_middle.toml")),
    ("fig7_right", include_str!("../catalog/fig7_right.toml")),
    ("fig8_left", include_str!("../catalog/fig8_left.toml")),
    ("fig8_middle", include_str!("../catalog/fig8_middle.toml")),
    ("fig8_right", include_str!("../catalog/fig8_right.toml")),
    ("snowball", include_str!("../catalog/snowball.toml")),
    ("toy_half", include_str!("../catalog/toy_half.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    let name = name.strip_prefix("catalog/").unwrap_or(name);
    let name = name.strip_suffix(".toml").unwrap_or(name);
    ENTRIES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Loads a built-in scenario by name; `catalog/` and `.toml` affixes are accepted.
pub fn get(name: &str) -> Result<ScenarioConfig> {
    let text = source(name).ok_or_else(|| Error::config("scenario", format!("no built-in scenario `{name}`")))?;
    ScenarioConfig::from_toml_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Mechanism;
    use crate::meanfield::fluctuation_limits;

    #[test]
    fn every_entry_parses_and_is_named_after_its_file() {
        for name in names() {
            let cfg = get(name).unwrap();
            assert_eq!(cfg.name, name);
        }
        assert!(get("catalog/fig1_left.toml").is_ok());
        assert!(get("fig9").is_err());
    }

    #[test]
    fn budgets() {
        for name in names() {
            let cfg = get(name).unwrap();
            let steps = (cfg.n_agents * cfg.horizon * cfg.replications) as f64;
            assert_eq!(steps > cfg.budget.max_agent_steps, name == "fig1_right_1m", "{name}");
        }
    }

    #[test]
    fn inertia_panels_keep_their_targets() {
        for tag in ["left", "middle", "right"] {
            let cfg = get(&format!("fig7_{tag}")).unwrap();
            let (c, c0) = (cfg.population.inter_class[0][0], cfg.population.mixture[0].components[0].c0[0]);
            let l = fluctuation_limits(c, c0, 20).unwrap();
            assert!((l.p_max_inf - l.p_min_inf - 0.9).abs() < 1e-12);
            let cfg = get(&format!("fig8_{tag}")).unwrap();
            let (c, c0) = (cfg.population.inter_class[0][0], cfg.population.mixture[0].components[0].c0[0]);
            assert!((fluctuation_limits(c, c0, 20).unwrap().p_max_inf - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn survey_scenarios() {
        let m: Vec<_> = get("fig3").unwrap().mechanisms;
        assert_eq!(&m[..3], &[Mechanism::Common(10), Mechanism::Common(100), Mechanism::Common(1000)]);
        let m: Vec<_> = get("fig4").unwrap().mechanisms;
        assert_eq!(&m[..3], &[Mechanism::Independent(1), Mechanism::Independent(10), Mechanism::Independent(100)]);
    }
}
