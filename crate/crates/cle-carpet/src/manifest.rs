//! Machine-readable run manifest, emitted for every experiment run.

use crate::config::ExperimentConfig;
use crate::params::KappaParams;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ManifestParams {
    pub kappa: f64,
    pub central_charge: f64,
    pub four_arm_exponent: f64,
    pub carpet_dimension: f64,
    pub theta_predicted: f64,
    pub theta_upper: f64,
}

impl From<&KappaParams> for ManifestParams {
    fn from(p: &KappaParams) -> Self {
        ManifestParams {
            kappa: p.kappa,
            central_charge: p.central_charge,
            four_arm_exponent: p.four_arm_exponent,
            carpet_dimension: p.carpet_dimension,
            theta_predicted: p.theta_predicted,
            theta_upper: p.theta_upper,
        }
    }
}

/// Everything needed to audit a run. Timings are wall-clock and therefore
/// the one part of a run's output that is not byte-reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub workers: usize,
    pub params: ManifestParams,
    /// Expected number of loops lost to the length truncation.
    pub truncated_mass_bound: f64,
    pub discarded_boundary_clusters: usize,
    pub stage_seconds: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig, params: &KappaParams, subcommand: &str) -> Self {
        RunManifest {
            config_hash: format!("{:016x}", config.hash()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            seed: config.seed,
            workers: config.workers,
            params: params.into(),
            truncated_mass_bound: 0.0,
            discarded_boundary_clusters: 0,
            stage_seconds: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn manifest_serializes_with_derived_params() {
        let cfg = parse_config("kappa = 3\ngrid = 64x64\n").unwrap();
        let params = KappaParams::new(cfg.kappa).unwrap();
        let mut m = RunManifest::new(&cfg, &params, "sample");
        m.stage_seconds.push(("soup".into(), 0.25));
        let json = m.to_json();
        assert!(json.contains("\"config_hash\""));
        assert!(json.contains("\"four_arm_exponent\""));
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["subcommand"], "sample");
    }
}
