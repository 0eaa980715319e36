//! Shipped run configurations, one per acceptance property.

use crate::config::RunConfig;
use crate::error::{Error, Result};

macro_rules! preset {
    ($name:literal) => {
        ($name, include_str!(concat!("../presets/", $name, ".toml")))
    };
}

/// `(name, TOML text)` for every shipped preset.
pub const PRESETS: &[(&str, &str)] = &[
    preset!("operator"),
    preset!("kernel"),
    preset!("crossval"),
    preset!("geometry"),
    preset!("excess"),
    preset!("monotone"),
    preset!("stability"),
    preset!("annulus"),
    preset!("energy"),
    preset!("synthetic"),
    preset!("coupled"),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}`; available: {}", names.join(", ")))
        })
}

pub fn preset(name: &str) -> Result<RunConfig> {
    RunConfig::from_toml(preset_text(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates() {
        for (name, _) in PRESETS {
            let c = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
