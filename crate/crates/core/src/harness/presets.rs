//! Configurations shipped with the crate.

use super::config::SimulationConfig;
use crate::error::{Error, Result};

const PRESETS: &[(&str, &str)] = &[
    ("baseline", include_str!("../../presets/baseline.json")),
    ("diffuse", include_str!("../../presets/diffuse.json")),
    (
        "diffuse_bgt",
        include_str!("../../presets/diffuse_bgt.json"),
    ),
    (
        "ros_generous",
        include_str!("../../presets/ros_generous.json"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<SimulationConfig> {
    let text = source(name).ok_or_else(|| {
        let known: Vec<&str> = names().collect();
        Error::Config(vec![format!(
            "unknown preset `{name}`; known: {}",
            known.join(", ")
        )])
    })?;
    SimulationConfig::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for n in names() {
            let c = preset(n).unwrap();
            assert!(c.replications >= 20, "{n}");
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn ros_preset_is_generous_with_median_inside_the_bid_range() {
        let c = preset("ros_generous").unwrap();
        let spec = &c.environment;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        assert!(spec.slater_margin(1024, 10, &mut rng) >= 0.1);
        assert!(spec.true_win_prob(&[1.0], 0.0) < 0.3);
        assert!(spec.true_win_prob(&[1.0], 1.0) > 0.7);
    }
}
