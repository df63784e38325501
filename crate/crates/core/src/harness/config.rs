//! TOML experiment configuration. Every section and key is optional; absent
//! values take the defaults, unknown keys are rejected.
//!
//! ```toml
//! [network]
//! num_links = 4
//! packet_bits = 3000
//! max_power_dbm = 10.0
//!
//! [arrival]
//! arrival_prob = 0.8
//!
//! [train]
//! episodes = 500
//!
//! [experiment]
//! policy = "mappo"
//! seeds = [0, 1, 2]
//! sweep_axis = "packet_bits"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{ItlinqConfig, WmmseConfig};
use crate::env::Scenario;
use crate::error::ConfigError;
use crate::mappo::TrainConfig;
use crate::queue::ArrivalProcess;
use crate::topology::NetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Mappo,
    Wmmse,
    Itlinq,
    Random,
    Threshold,
}

impl PolicyName {
    pub const ALL: [PolicyName; 5] = [Self::Mappo, Self::Wmmse, Self::Itlinq, Self::Random, Self::Threshold];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mappo => "mappo",
            Self::Wmmse => "wmmse",
            Self::Itlinq => "itlinq",
            Self::Random => "random",
            Self::Threshold => "threshold",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PacketBits,
    ArrivalProb,
    NumLinks,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PacketBits => "packet_bits",
            Self::ArrivalProb => "arrival_prob",
            Self::NumLinks => "num_links",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Self::PacketBits => vec![1500.0, 2000.0, 2500.0, 3000.0, 3500.0, 4000.0],
            Self::ArrivalProb => vec![0.2, 0.4, 0.6, 0.8, 1.0],
            Self::NumLinks => vec![4.0, 5.0, 6.0, 7.0, 8.0],
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Scenario {
        let mut s = base.clone();
        match self {
            Self::PacketBits => s.network.packet_bits = value as u32,
            Self::ArrivalProb => s.arrival.arrival_prob = value,
            Self::NumLinks => s.network.num_links = value as usize,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub policy: PolicyName,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    /// Greedy drop decision and mean power instead of sampling.
    pub deterministic_eval: bool,
    pub sweep_axis: SweepAxis,
    /// Empty means the axis defaults.
    pub sweep_values: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            policy: PolicyName::Mappo,
            seeds: vec![0],
            eval_episodes: 20,
            deterministic_eval: false,
            sweep_axis: SweepAxis::PacketBits,
            sweep_values: Vec::new(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentSection {
    pub fn sweep_values(&self) -> Vec<f64> {
        if self.sweep_values.is_empty() { self.sweep_axis.default_values() } else { self.sweep_values.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub arrival: ArrivalProcess,
    pub train: TrainConfig,
    pub wmmse: WmmseConfig,
    pub itlinq: ItlinqConfig,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario { network: self.network.clone(), arrival: self.arrival }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network.validate()?;
        self.arrival.validate()?;
        self.train.validate()?;
        self.wmmse.validate()?;
        self.itlinq.validate()?;
        let ex = &self.experiment;
        if ex.seeds.is_empty() {
            return Err(ConfigError::Schema("experiment.seeds must not be empty".into()));
        }
        if ex.eval_episodes == 0 {
            return Err(ConfigError::Schema("experiment.eval_episodes must be at least 1".into()));
        }
        for &v in &ex.sweep_values() {
            let ok = match ex.sweep_axis {
                SweepAxis::PacketBits => v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX),
                SweepAxis::ArrivalProb => (0.0..=1.0).contains(&v),
                SweepAxis::NumLinks => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(ConfigError::Schema(format!("experiment.sweep_values: {v} is not a valid {}", ex.sweep_axis.as_str())));
            }
        }
        let mut seen = ex.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ex.seeds.len() {
            return Err(ConfigError::Invariant("experiment.seeds contains duplicates".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Schema(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => ConfigError::Missing(path.to_path_buf()),
        _ => ConfigError::Io { path: path.to_path_buf(), source },
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let n = &cfg.network;
        assert_eq!((n.num_links, n.bandwidth_hz, n.slot_duration_s, n.episode_slots, n.packet_bits), (4, 1e6, 1e-3, 100, 3000));
        assert!((n.max_power_mw() - 10.0).abs() < 1e-12);
        assert_eq!((cfg.arrival.batch_size, cfg.arrival.arrival_prob), (3, 0.8));
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.network.packet_bits = 2500;
        cfg.experiment.seeds = vec![3, 1];
        cfg.experiment.sweep_axis = SweepAxis::ArrivalProb;
        cfg.train.shared_actor = true;
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
        let d = ExperimentConfig::default();
        assert_eq!(parse_config(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn errors_are_classified() {
        assert!(matches!(parse_config("[arrival]\narrival_prob = 1.5"), Err(ConfigError::Schema(_))));
        assert!(matches!(parse_config("[network]\nbogus = 1"), Err(ConfigError::Schema(_))));
        assert!(matches!(parse_config("[network]\nnum_links = \"four\""), Err(ConfigError::Schema(_))));
        assert!(matches!(parse_config("[network]\npair_distance_range_m = [60.0, 10.0]"), Err(ConfigError::Invariant(_))));
        assert!(matches!(parse_config("[experiment]\nseeds = [1, 1]"), Err(ConfigError::Invariant(_))));
        assert!(matches!(load_config(Path::new("/nonexistent/x.toml")), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn sweep_axes_apply() {
        let base = Scenario::default();
        assert_eq!(SweepAxis::PacketBits.apply(&base, 1500.0).network.packet_bits, 1500);
        assert_eq!(SweepAxis::ArrivalProb.apply(&base, 0.2).arrival.arrival_prob, 0.2);
        assert_eq!(SweepAxis::NumLinks.apply(&base, 6.0).network.num_links, 6);
        assert_eq!(PolicyName::parse("itlinq"), Some(PolicyName::Itlinq));
        assert_eq!(PolicyName::parse("nope"), None);
    }
}
