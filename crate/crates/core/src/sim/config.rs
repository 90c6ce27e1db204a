//! Simulation settings, loadable from a TOML file.

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    /// Per-group search with conditional detection of orthogonal symbols.
    #[default]
    Group,
    /// Joint search over the full codebook.
    Ml,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Code name or path to a code file.
    pub code: String,
    pub receive_antennas: usize,
    /// Plan text such as `pam4:4; qam8@0.0735:1,5; qam8:2,3`; the code's
    /// reference plan when absent.
    pub plan: Option<String>,
    pub snr_db: Vec<f64>,
    pub target_bit_errors: u64,
    pub max_trials: u64,
    pub seed: u64,
    pub workers: usize,
    /// Trials simulated per parallel round.
    pub batch: u64,
    /// Zero the noise (diagnostics).
    pub noiseless: bool,
    pub decoder: DecoderKind,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            code: "un2_reduced".into(),
            receive_antennas: 2,
            plan: None,
            snr_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
            target_bit_errors: 200,
            max_trials: 1_000_000,
            seed: 1,
            workers: 1,
            batch: 2000,
            noiseless: false,
            decoder: DecoderKind::Group,
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.snr_db.is_empty() {
            return Err(SimError::Config("snr_db must not be empty".into()));
        }
        if self.target_bit_errors == 0 {
            return Err(SimError::Config("target_bit_errors must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(SimError::Config("workers must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(SimError::Config("batch must be at least 1".into()));
        }
        if self.receive_antennas == 0 {
            return Err(SimError::Config("receive_antennas must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = SimulationConfig {
            plan: Some("qam16:1,2; qam16:3,4".into()),
            code: "alamouti".into(),
            decoder: DecoderKind::Ml,
            ..Default::default()
        };
        assert_eq!(SimulationConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = SimulationConfig::from_toml("code = \"b4\"\nsnr_db = [10.0]\n").unwrap();
        assert_eq!(cfg.code, "b4");
        assert_eq!(cfg.target_bit_errors, 200);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(SimulationConfig::from_toml("bogus = 1").is_err());
        let cfg = SimulationConfig {
            snr_db: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SimulationConfig {
            target_bit_errors: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
