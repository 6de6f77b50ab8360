//! AC unit and fleet specifications plus experiment configuration.
//!
//! The reference fleet (`default_fleet`) is the canonical set of eight
//! heterogeneous AC units used throughout the experiments. Thermal
//! capacitance and COP are uniform across the fleet; resistance, rated
//! power, and comfort bands vary per unit.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unsupported fleet size {0}: expected 4 or 8")]
    UnsupportedFleetSize(usize),
    #[error("invalid unit {id}: {msg}")]
    InvalidUnit { id: usize, msg: String },
    #[error("invalid config: {key} {constraint} (got {got})")]
    Invariant {
        key: &'static str,
        constraint: &'static str,
        got: f64,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Physical and user parameters of one air-conditioning unit.
///
/// Units follow the fleet tables: `r_c_per_kw` in °C/kW, `c_th_j_per_c` in
/// J/°C, `p_max_kw` in kW, comfort band in °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcUnitSpec {
    pub id: usize,
    pub r_c_per_kw: f64,
    pub c_th_j_per_c: f64,
    pub eta: f64,
    pub p_max_kw: f64,
    pub t_min_c: f64,
    pub t_max_c: f64,
}

impl AcUnitSpec {
    pub fn new(
        id: usize,
        r_c_per_kw: f64,
        c_th_j_per_c: f64,
        eta: f64,
        p_max_kw: f64,
        t_min_c: f64,
        t_max_c: f64,
    ) -> Result<Self, ConfigError> {
        let unit = Self {
            id,
            r_c_per_kw,
            c_th_j_per_c,
            eta,
            p_max_kw,
            t_min_c,
            t_max_c,
        };
        unit.validate()?;
        Ok(unit)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| {
            Err(ConfigError::InvalidUnit {
                id: self.id,
                msg: msg.to_string(),
            })
        };
        if !(self.r_c_per_kw > 0.0) {
            return fail("R must be > 0");
        }
        if !(self.c_th_j_per_c > 0.0) {
            return fail("C_th must be > 0");
        }
        if !(self.eta > 0.0 && self.eta <= 10.0) {
            return fail("eta must be in (0, 10]");
        }
        if !(self.p_max_kw > 0.0) {
            return fail("P_max must be > 0");
        }
        if !(self.t_min_c < self.t_max_c) {
            return fail("T_min must be < T_max");
        }
        Ok(())
    }

    /// Comfort deadband width T_max − T_min in °C.
    pub fn deadband_c(&self) -> f64 {
        self.t_max_c - self.t_min_c
    }

    /// First-order time constant R·C_th in seconds (after kW→W conversion).
    pub fn time_constant_s(&self) -> f64 {
        self.r_c_per_kw * self.c_th_j_per_c / crate::KILO
    }
}

/// An ordered collection of AC units sharing one simulation clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetSpec {
    pub units: Vec<AcUnitSpec>,
    /// Simulation span in hours.
    pub horizon_h: usize,
    /// Integration step in seconds; hourly data uses 3600.
    pub dt_s: f64,
}

impl FleetSpec {
    pub fn new(units: Vec<AcUnitSpec>, horizon_h: usize, dt_s: f64) -> Result<Self, ConfigError> {
        if !(dt_s > 0.0) {
            return Err(ConfigError::Invariant {
                key: "dt_s",
                constraint: "must be > 0",
                got: dt_s,
            });
        }
        for (i, u) in units.iter().enumerate() {
            u.validate()?;
            if u.id != i {
                return Err(ConfigError::InvalidUnit {
                    id: u.id,
                    msg: format!("unit ids must be contiguous from 0, found {} at index {}", u.id, i),
                });
            }
        }
        Ok(Self {
            units,
            horizon_h,
            dt_s,
        })
    }

    pub fn unit(&self, id: usize) -> Option<&AcUnitSpec> {
        self.units.get(id)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Thermal capacitance shared by every reference unit, J/°C.
pub const FLEET_C_TH: f64 = 1.8e7;
/// Coefficient of performance shared by every reference unit.
pub const FLEET_ETA: f64 = 0.97;

/// Reference fleet rows: (R °C/kW, P̄ kW, T_min °C, T_max °C) for AC1–AC8.
const FLEET_TABLE: [(f64, f64, f64, f64); 8] = [
    (3.0, 12.0, 21.0, 24.0),
    (3.5, 12.0, 22.0, 24.0),
    (5.0, 13.0, 21.0, 24.0),
    (6.0, 10.0, 20.0, 23.0),
    (5.0, 12.0, 21.0, 24.0),
    (5.5, 11.0, 22.0, 25.0),
    (6.5, 10.0, 20.0, 22.0),
    (6.0, 12.0, 20.0, 23.0),
];

/// Builds the reference fleet of `n_units` (4 or 8) heterogeneous AC units.
pub fn default_fleet(n_units: usize) -> Result<FleetSpec, ConfigError> {
    if n_units != 4 && n_units != 8 {
        return Err(ConfigError::UnsupportedFleetSize(n_units));
    }
    let units = FLEET_TABLE[..n_units]
        .iter()
        .enumerate()
        .map(|(id, &(r, p_max, t_min, t_max))| {
            AcUnitSpec::new(id, r, FLEET_C_TH, FLEET_ETA, p_max, t_min, t_max)
        })
        .collect::<Result<Vec<_>, _>>()?;
    FleetSpec::new(units, 0, crate::HOUR_S)
}

/// Experiment configuration: windowing, network dimensions, and training
/// hyperparameters. Every field has a default so a config file only needs
/// the keys it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Context window length in steps.
    pub seq_len: usize,
    /// Prediction horizon length in steps.
    pub rollout_len: usize,
    pub hidden_dim: usize,
    pub id_embed_dim: usize,
    /// Capacity search bounds [C_min, C_max] in joules.
    pub cap_bounds: [f64; 2],
    /// Weight of the first-difference term in the composite loss.
    pub lambda: f64,
    pub gamma_init: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    /// Cold-start data availability ratio for the new unit.
    pub alpha: f64,
    pub seed: u64,
    /// Simulated span in days.
    pub days: usize,
    pub train_frac: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seq_len: 24,
            rollout_len: 24,
            hidden_dim: 64,
            id_embed_dim: 8,
            cap_bounds: [1e7, 2e8],
            lambda: 1.0,
            gamma_init: 0.5,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            patience: 20,
            alpha: 1.0,
            seed: 7,
            days: 92,
            train_frac: 0.8,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &'static str, constraint: &'static str, got: f64| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invariant {
                    key,
                    constraint,
                    got,
                })
            }
        };
        check(
            self.alpha > 0.0 && self.alpha <= 1.0,
            "alpha",
            "must satisfy 0 < alpha ≤ 1",
            self.alpha,
        )?;
        check(
            self.cap_bounds[0] < self.cap_bounds[1],
            "cap_bounds",
            "must satisfy C_min < C_max",
            self.cap_bounds[0],
        )?;
        check(self.lambda >= 0.0, "lambda", "must satisfy lambda ≥ 0", self.lambda)?;
        check(
            self.learning_rate > 0.0,
            "learning_rate",
            "must be > 0",
            self.learning_rate,
        )?;
        check(
            self.train_frac > 0.0 && self.train_frac <= 1.0,
            "train_frac",
            "must be in (0, 1]",
            self.train_frac,
        )?;
        check(self.seq_len >= 1, "seq_len", "must be ≥ 1", self.seq_len as f64)?;
        check(self.rollout_len >= 2, "rollout_len", "must be ≥ 2", self.rollout_len as f64)?;
        check(self.batch_size >= 1, "batch_size", "must be ≥ 1", self.batch_size as f64)?;
        Ok(())
    }

    /// Stable hex digest of the canonical JSON encoding; embedded in reports
    /// so runs can be tied back to their exact configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Loads a JSON config file, filling defaults for absent keys and
/// validating invariants. An empty file yields the full default config.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<ExperimentConfig, ConfigError> {
    let path_str = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| ConfigError::Io {
        path: path_str.clone(),
        source,
    })?;
    let cfg: ExperimentConfig = if text.trim().is_empty() {
        ExperimentConfig::default()
    } else {
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path_str,
            source,
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}
