//! Machine-readable run reports.
//!
//! Everything here is deterministic: maps are ordered, floats keep their
//! shortest round-trip encoding, and no timestamps or host details enter the
//! output, so identical (config, seed) runs serialize to identical bytes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use vbnet_core::fleet::ExperimentConfig;
use vbnet_model::{EvalReport, TrainReport};

/// SHA-256 hex digest of the canonical config encoding; ties a report back
/// to the exact configuration that produced it.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut h = Sha256::new();
    h.update(cfg.canonical_json().as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Test-set quality of one trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub parameters: usize,
    pub rmse: f64,
    pub per_unit_rmse: BTreeMap<usize, f64>,
    pub per_unit_r2: BTreeMap<usize, f64>,
    pub train: TrainReport,
}

impl ModelMetrics {
    pub fn new(
        parameters: usize,
        eval: &EvalReport,
        per_unit_r2: BTreeMap<usize, f64>,
        train: TrainReport,
    ) -> Self {
        let m = Self {
            parameters,
            rmse: eval.rmse,
            per_unit_rmse: eval.per_unit.clone(),
            per_unit_r2,
            train,
        };
        m.assert_valid();
        m
    }

    fn assert_valid(&self) {
        assert!(self.rmse >= 0.0, "negative RMSE");
        assert!(self.per_unit_rmse.values().all(|&v| v >= 0.0));
        assert!(self.per_unit_r2.values().all(|&v| v <= 1.0), "R² above 1");
    }
}

/// Identified physics of one unit next to its analytic values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicsFit {
    pub c_f_hat_j: f64,
    pub c_f_oracle_j: f64,
    pub gamma: f64,
    /// Least-squares slope of predicted loss power against the
    /// indoor-outdoor temperature difference, kW/°C.
    pub p_loss_slope: f64,
    /// Analytic slope 1/R, kW/°C.
    pub p_loss_slope_oracle: f64,
}

/// Full Case A report: model comparison plus physics identification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseAReport {
    pub case: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub models: BTreeMap<String, ModelMetrics>,
    pub physics: BTreeMap<usize, PhysicsFit>,
}

/// One cold-start grid row: both methods at one availability ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseBRow {
    pub alpha: f64,
    pub stl_rmse: f64,
    pub mtl_rmse: f64,
    pub stl_train_windows: usize,
    pub mtl_train_windows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseBReport {
    pub case: String,
    pub n_mature: usize,
    pub new_unit: usize,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rows: Vec<CaseBRow>,
}

/// Writes any report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, P: AsRef<Path>>(path: P, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(config_hash(&a), config_hash(&a));
        assert_eq!(config_hash(&a).len(), 64);
        b.seed = 8;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn report_json_is_byte_deterministic() {
        let cfg = ExperimentConfig::default();
        let report = CaseBReport {
            case: "case-b".into(),
            n_mature: 3,
            new_unit: 3,
            seed: cfg.seed,
            config_hash: config_hash(&cfg),
            config: cfg,
            rows: vec![CaseBRow {
                alpha: 0.02,
                stl_rmse: 0.07,
                mtl_rmse: 0.003,
                stl_train_windows: 2,
                mtl_train_windows: 221,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        write_json(&p1, &report).unwrap();
        write_json(&p2, &report).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    #[should_panic(expected = "R² above 1")]
    fn invalid_r2_is_rejected() {
        let eval = EvalReport {
            rmse: 0.1,
            per_unit: BTreeMap::new(),
            n_samples: 1,
        };
        let mut r2 = BTreeMap::new();
        r2.insert(0usize, 1.5);
        let train = TrainReport {
            epochs_run: 1,
            best_epoch: 0,
            best_val_rmse: None,
            final_train_loss: 0.0,
            stopped_early: false,
        };
        ModelMetrics::new(10, &eval, r2, train);
    }
}
