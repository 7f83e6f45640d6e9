//! Flat dotted-key run configuration. Every experiment declares its keys
//! with defaults; `--set key=value` overrides one of them, and naming a key
//! the experiment does not know is a usage error, not a silent no-op.

use std::collections::BTreeMap;

use anyhow::{bail, Result};

#[derive(Clone, Debug)]
pub struct Config {
    experiment: String,
    values: BTreeMap<String, String>,
}

fn default_entries(experiment: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let entries: Vec<(&'static str, &'static str)> = match experiment {
        "identity-suite" => vec![
            ("identity.n", "16"),
            ("identity.mode", "1"),
            ("identity.dtau", "1e-4"),
            ("identity.steps", "500"),
            ("identity.ibp_flat_n", "64"),
            ("identity.ibp_pair", "32,64"),
            ("identity.decay", "0.5"),
        ],
        "sandwich-suite" => vec![("sandwich.preset", "all")],
        "gronwall" | "backward-uniqueness" => vec![
            ("gronwall.preset", "heat-two-mode"),
            ("gronwall.sweep", "false"),
            ("gronwall.epsilons", "1e-2,1e-4,1e-6"),
        ],
        // "auto" defers to the ladder the data family declares, so switching
        // cutoff.data does not silently keep the other family's radii
        "cutoff-limit" => vec![
            ("cutoff.data", "tight-gaussian"),
            ("cutoff.radii", "auto"),
            ("cutoff.omega", "auto"),
            ("cutoff.steps", "auto"),
        ],
        "prolong-ricci" => vec![
            ("prolong.n", "16"),
            ("prolong.amplitude", "0.1"),
            ("prolong.epsilons", "1e-3,1e-4"),
            ("prolong.t", "0.2"),
            ("prolong.steps", "100"),
            ("prolong.stride", "2"),
        ],
        "fourth-order" => vec![
            ("fourth.n", "16"),
            ("fourth.k", "1"),
            ("fourth.steps", "500"),
        ],
        "kcf" => vec![
            ("kcf.n", "16"),
            ("kcf.kmax", "3"),
            ("kcf.steps", "400"),
        ],
        _ => return None,
    };
    Some(entries)
}

/// Experiment ids, in the order `list` prints them.
pub const EXPERIMENTS: [&str; 7] = [
    "identity-suite",
    "sandwich-suite",
    "gronwall",
    "cutoff-limit",
    "prolong-ricci",
    "fourth-order",
    "kcf",
];

/// backward-uniqueness is gronwall with the scaling sweep forced on.
pub const ALIASES: [(&str, &str); 1] = [("backward-uniqueness", "gronwall")];

impl Config {
    pub fn for_experiment(experiment: &str) -> Result<Config> {
        let Some(entries) = default_entries(experiment) else {
            bail!(
                "unknown experiment '{experiment}'; valid: {}",
                EXPERIMENTS.join(", ")
            );
        };
        let mut values = BTreeMap::new();
        for (k, v) in entries {
            values.insert(k.to_string(), v.to_string());
        }
        let mut cfg = Config {
            experiment: experiment.to_string(),
            values,
        };
        if experiment == "backward-uniqueness" {
            cfg.values.insert("gronwall.sweep".into(), "true".into());
        }
        Ok(cfg)
    }

    pub fn experiment(&self) -> &str {
        &self.experiment
    }

    /// Experiment id with aliases resolved; drivers dispatch on this.
    pub fn canonical(&self) -> &str {
        for (alias, target) in ALIASES {
            if self.experiment == alias {
                return target;
            }
        }
        &self.experiment
    }

    /// Apply one `key=value` override; the key must already exist.
    pub fn apply_set(&mut self, kv: &str) -> Result<()> {
        let Some((key, value)) = kv.split_once('=') else {
            bail!("malformed --set '{kv}': expected key=value");
        };
        let key = key.trim();
        if !self.values.contains_key(key) {
            let known: Vec<&str> = self.values.keys().map(|s| s.as_str()).collect();
            bail!(
                "unknown config key '{key}' for experiment '{}'; known keys: {}",
                self.experiment,
                known.join(", ")
            );
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        match self.values.get(key) {
            Some(v) => Ok(v),
            None => bail!("internal: config key '{key}' was never declared"),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self.get_str(key)?;
        raw.parse::<f64>()
            .map_err(|_| anyhow::anyhow!("config key '{key}': '{raw}' is not a number"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let raw = self.get_str(key)?;
        raw.parse::<usize>()
            .map_err(|_| anyhow::anyhow!("config key '{key}': '{raw}' is not a nonnegative integer"))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        let raw = self.get_str(key)?;
        match raw {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => bail!("config key '{key}': '{raw}' is not a boolean"),
        }
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get_str(key)?;
        raw.split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    anyhow::anyhow!("config key '{key}': '{tok}' is not a number")
                })
            })
            .collect()
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.get_str(key)?;
        raw.split(',')
            .map(|tok| {
                tok.trim().parse::<usize>().map_err(|_| {
                    anyhow::anyhow!("config key '{key}': '{tok}' is not an integer")
                })
            })
            .collect()
    }

    /// Sorted key-value view for the run manifest.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Validate every declared value parses under its consumer's type.
    pub fn validate(&self) -> Result<()> {
        match self.experiment.as_str() {
            "identity-suite" => {
                self.get_usize("identity.n")?;
                self.get_usize("identity.mode")?;
                let dtau = self.get_f64("identity.dtau")?;
                if !(dtau > 0.0) {
                    bail!("config key 'identity.dtau': must be positive");
                }
                self.get_usize("identity.steps")?;
                self.get_usize("identity.ibp_flat_n")?;
                let pair = self.get_usize_list("identity.ibp_pair")?;
                if pair.len() != 2 || pair[1] <= pair[0] {
                    bail!("config key 'identity.ibp_pair': need two increasing grid sizes");
                }
                self.get_f64("identity.decay")?;
            }
            "sandwich-suite" => {
                let p = self.get_str("sandwich.preset")?;
                if p != "all" {
                    logcvx_core::TrajectoryPreset::by_name(p)
                        .map_err(|e| anyhow::anyhow!("config key 'sandwich.preset': {e}"))?;
                }
            }
            "gronwall" | "backward-uniqueness" => {
                logcvx_core::TrajectoryPreset::by_name(self.get_str("gronwall.preset")?)
                    .map_err(|e| anyhow::anyhow!("config key 'gronwall.preset': {e}"))?;
                self.get_bool("gronwall.sweep")?;
                let eps = self.get_f64_list("gronwall.epsilons")?;
                if eps.is_empty() {
                    bail!("config key 'gronwall.epsilons': need at least one value");
                }
            }
            "cutoff-limit" => {
                logcvx_core::LocalizationData::by_name(self.get_str("cutoff.data")?)
                    .map_err(|e| anyhow::anyhow!("config key 'cutoff.data': {e}"))?;
                if self.get_str("cutoff.radii")? != "auto" {
                    let radii = self.get_f64_list("cutoff.radii")?;
                    if radii.len() < 2 {
                        bail!("config key 'cutoff.radii': need at least two radii");
                    }
                }
                if self.get_str("cutoff.omega")? != "auto" {
                    self.get_f64("cutoff.omega")?;
                }
                if self.get_str("cutoff.steps")? != "auto" {
                    self.get_usize("cutoff.steps")?;
                }
            }
            "prolong-ricci" => {
                self.get_usize("prolong.n")?;
                self.get_f64("prolong.amplitude")?;
                let eps = self.get_f64_list("prolong.epsilons")?;
                if eps.len() < 2 {
                    bail!("config key 'prolong.epsilons': need at least two separations");
                }
                self.get_f64("prolong.t")?;
                self.get_usize("prolong.steps")?;
                self.get_usize("prolong.stride")?;
            }
            "fourth-order" => {
                self.get_usize("fourth.n")?;
                let k = self.get_usize("fourth.k")?;
                if k == 0 || k > 3 {
                    bail!("config key 'fourth.k': must lie in 1..=3");
                }
                self.get_usize("fourth.steps")?;
            }
            "kcf" => {
                self.get_usize("kcf.n")?;
                let k = self.get_usize("kcf.kmax")?;
                if k == 0 || k > 3 {
                    bail!("config key 'kcf.kmax': must lie in 1..=3");
                }
                self.get_usize("kcf.steps")?;
            }
            other => bail!("unknown experiment '{other}'"),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_and_unknown_keys_fail() {
        let mut cfg = Config::for_experiment("gronwall").unwrap();
        cfg.apply_set("gronwall.preset=heat-single-mode").unwrap();
        assert_eq!(cfg.get_str("gronwall.preset").unwrap(), "heat-single-mode");
        let err = cfg.apply_set("gronwall.nope=1").unwrap_err();
        assert!(err.to_string().contains("gronwall.nope"));
        assert!(cfg.apply_set("no-equals-sign").is_err());
    }

    #[test]
    fn alias_forces_the_sweep() {
        let cfg = Config::for_experiment("backward-uniqueness").unwrap();
        assert!(cfg.get_bool("gronwall.sweep").unwrap());
        let base = Config::for_experiment("gronwall").unwrap();
        assert!(!base.get_bool("gronwall.sweep").unwrap());
    }

    #[test]
    fn validation_names_the_offending_key() {
        let mut cfg = Config::for_experiment("fourth-order").unwrap();
        cfg.apply_set("fourth.k=7").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("fourth.k"));
    }
}
