//! Fleet dataset assembly: simulate every unit at one site, window the
//! trajectories, split chronologically, and compute train-only statistics.
//! The same builder backs both the in-memory experiment harnesses and the
//! on-disk `gen-data` artifacts.

use crate::CliError;
use std::path::Path;
use vbnet_core::data::{
    make_samples, split_index, synth_env, DatasetManifest, NormStats, Sample,
};
use vbnet_core::fleet::{default_fleet, ExperimentConfig, FleetSpec};
use vbnet_core::thermo::{simulate_unit, Trajectory};

/// Window stride in steps: consecutive prediction horizons tile the
/// trajectory without overlap.
pub const STRIDE: usize = 24;

/// One site's worth of simulated units, windowed and split. Train and test
/// lists are unit-major; within a unit, samples are chronological.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub fleet: FleetSpec,
    pub trajectories: Vec<Trajectory>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub stats: NormStats,
    /// Per-unit sample count at which the chronological split cuts.
    pub split_index: usize,
}

impl Dataset {
    pub fn train_of(&self, unit: usize) -> Vec<Sample> {
        self.train.iter().filter(|s| s.unit_id == unit).cloned().collect()
    }

    pub fn test_of(&self, unit: usize) -> Vec<Sample> {
        self.test.iter().filter(|s| s.unit_id == unit).cloned().collect()
    }

    pub fn manifest(&self, cfg: &ExperimentConfig) -> DatasetManifest {
        DatasetManifest {
            units: self.fleet.units.iter().map(|u| u.id).collect(),
            seq_len: cfg.seq_len,
            rollout_len: cfg.rollout_len,
            split_index: self.split_index,
            norm_stats: self.stats.clone(),
        }
    }
}

/// Simulates the reference fleet of `n_units` under one shared weather and
/// price series, then windows and splits each unit identically.
pub fn build_dataset(cfg: &ExperimentConfig, n_units: usize) -> Result<Dataset, CliError> {
    cfg.validate()?;
    let fleet = default_fleet(n_units)?;
    let env = synth_env(cfg.days, cfg.seed)?;
    let mut trajectories = Vec::with_capacity(fleet.len());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut cut = 0;
    for unit in &fleet.units {
        let t_init = 0.5 * (unit.t_min_c + unit.t_max_c);
        let traj = simulate_unit(unit, &env, t_init)?;
        let samples = make_samples(&traj, unit.deadband_c(), cfg.seq_len, cfg.rollout_len, STRIDE);
        cut = split_index(samples.len(), cfg.train_frac);
        train.extend_from_slice(&samples[..cut]);
        test.extend_from_slice(&samples[cut..]);
        trajectories.push(traj);
    }
    if train.is_empty() {
        return Err(CliError::EmptyDataset {
            days: cfg.days,
            window: cfg.seq_len + cfg.rollout_len,
        });
    }
    let stats = NormStats::from_train(&train);
    Ok(Dataset {
        fleet,
        trajectories,
        train,
        test,
        stats,
        split_index: cut,
    })
}

fn unit_csv(dir: &Path, id: usize) -> std::path::PathBuf {
    dir.join(format!("unit_{id}.csv"))
}

/// Persists the dataset as one trajectory CSV per unit plus a manifest.
pub fn save_dataset(ds: &Dataset, cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for traj in &ds.trajectories {
        traj.write_csv(unit_csv(dir, traj.unit_id))?;
    }
    ds.manifest(cfg).write(dir.join("manifest.json"))?;
    Ok(())
}

/// Rebuilds a dataset from `gen-data` artifacts. Windowing parameters and
/// normalization statistics come from the manifest, never recomputed, so a
/// loaded dataset evaluates exactly like the generating run.
pub fn load_dataset(dir: &Path, train_frac: f64) -> Result<Dataset, CliError> {
    let manifest = DatasetManifest::read(dir.join("manifest.json"))?;
    let fleet = default_fleet(manifest.units.len())?;
    let mut trajectories = Vec::with_capacity(fleet.len());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for unit in &fleet.units {
        let traj = Trajectory::read_csv(unit_csv(dir, unit.id), unit.id)?;
        let samples = make_samples(
            &traj,
            unit.deadband_c(),
            manifest.seq_len,
            manifest.rollout_len,
            STRIDE,
        );
        let cut = split_index(samples.len(), train_frac);
        if cut != manifest.split_index {
            return Err(CliError::SplitMismatch {
                expected: manifest.split_index,
                got: cut,
            });
        }
        train.extend_from_slice(&samples[..cut]);
        test.extend_from_slice(&samples[cut..]);
        trajectories.push(traj);
    }
    Ok(Dataset {
        fleet,
        trajectories,
        train,
        test,
        stats: manifest.norm_stats,
        split_index: manifest.split_index,
    })
}
