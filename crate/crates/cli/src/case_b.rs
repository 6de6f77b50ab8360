//! Cold-start study: a unit joins a fleet of mature units with only a
//! fraction of its own history logged. Single-task training sees that
//! fraction alone; joint training mixes it with the mature units' full
//! records and shares the encoder across the fleet.

use crate::dataset::build_dataset;
use crate::report::{config_hash, write_json, CaseBReport, CaseBRow};
use crate::CliError;
use std::path::Path;
use vbnet_core::data::{cold_start_subset, NormStats, Sample};
use vbnet_core::fleet::{ExperimentConfig, FleetSpec};
use vbnet_model::{eval_rmse, train, TrainConfig, VbNet};

/// Availability ratios of the reference grid.
pub const DEFAULT_ALPHAS: [f64; 8] = [0.02, 0.04, 0.06, 0.08, 0.10, 0.25, 0.50, 1.00];

fn reindexed(samples: &[Sample], unit_id: usize) -> Vec<Sample> {
    samples
        .iter()
        .cloned()
        .map(|mut s| {
            s.unit_id = unit_id;
            s
        })
        .collect()
}

/// Runs the (method × alpha) grid for a fleet of `n_mature` mature units
/// plus one newcomer (the highest unit id). Every cell trains from scratch;
/// normalization statistics are computed from exactly the data the cell's
/// method is allowed to see.
pub fn run_case_b(
    cfg: &ExperimentConfig,
    n_mature: usize,
    alphas: &[f64],
    out_dir: Option<&Path>,
) -> Result<CaseBReport, CliError> {
    if n_mature != 3 && n_mature != 7 {
        return Err(CliError::BadMatureCount(n_mature));
    }
    if alphas.is_empty() {
        return Err(CliError::NoAlphas);
    }
    for &a in alphas {
        if !(a > 0.0 && a <= 1.0) {
            return Err(CliError::BadAlpha(a));
        }
    }
    let ds = build_dataset(cfg, n_mature + 1)?;
    let new_unit = n_mature;
    let new_train = ds.train_of(new_unit);
    let new_test = ds.test_of(new_unit);
    let mature_train: Vec<Sample> = ds
        .train
        .iter()
        .filter(|s| s.unit_id != new_unit)
        .cloned()
        .collect();

    // the newcomer in isolation, reindexed to a one-unit fleet
    let mut solo_spec = ds.fleet.units[new_unit].clone();
    solo_spec.id = 0;
    let solo_fleet = FleetSpec::new(vec![solo_spec], ds.fleet.horizon_h, ds.fleet.dt_s)?;
    let solo_test = reindexed(&new_test, 0);

    let tc = TrainConfig::from(cfg);
    let mut rows = Vec::new();
    for &alpha in alphas {
        let subset = cold_start_subset(&new_train, alpha)?;

        let solo_train = reindexed(&subset, 0);
        let stl_stats = NormStats::from_train(&solo_train);
        let mut stl = VbNet::new(&solo_fleet, cfg);
        train(&mut stl, &solo_train, &stl_stats, &tc)?;
        let stl_rmse = eval_rmse(&stl, &solo_test, &stl_stats);

        let mut joint_train = mature_train.clone();
        joint_train.extend_from_slice(&subset);
        let mtl_stats = NormStats::from_train(&joint_train);
        let mut mtl = VbNet::new(&ds.fleet, cfg);
        train(&mut mtl, &joint_train, &mtl_stats, &tc)?;
        let mtl_rmse = eval_rmse(&mtl, &new_test, &mtl_stats);

        log::info!(
            "case B ({n_mature}+1): alpha {alpha:.2} → STL {stl_rmse:.5} ({} windows), MTL {mtl_rmse:.5} ({} windows)",
            subset.len(),
            joint_train.len()
        );
        rows.push(CaseBRow {
            alpha,
            stl_rmse,
            mtl_rmse,
            stl_train_windows: subset.len(),
            mtl_train_windows: joint_train.len(),
        });
    }

    let report = CaseBReport {
        case: "case-b".into(),
        n_mature,
        new_unit,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        rows,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(dir.join(format!("case_b_{n_mature}p1.json")), &report)?;
        let mut w = csv::Writer::from_path(dir.join(format!("case_b_{n_mature}p1.csv")))?;
        w.write_record(["alpha", "stl_rmse", "mtl_rmse", "stl_train_windows", "mtl_train_windows"])?;
        for r in &report.rows {
            w.write_record(&[
                r.alpha.to_string(),
                r.stl_rmse.to_string(),
                r.mtl_rmse.to_string(),
                r.stl_train_windows.to_string(),
                r.mtl_train_windows.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grid_parameters() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(
            run_case_b(&cfg, 5, &[0.5], None),
            Err(CliError::BadMatureCount(5))
        ));
        assert!(matches!(
            run_case_b(&cfg, 3, &[], None),
            Err(CliError::NoAlphas)
        ));
        assert!(matches!(
            run_case_b(&cfg, 3, &[1.5], None),
            Err(CliError::BadAlpha(_))
        ));
    }

    #[test]
    fn tiny_grid_writes_table() {
        let cfg = ExperimentConfig {
            days: 12,
            epochs: 2,
            batch_size: 32,
            ..ExperimentConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = run_case_b(&cfg, 3, &[0.25, 1.0], Some(dir.path())).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.new_unit, 3);
        // 12 days → 11 windows per unit, 9 train; alpha 0.25 keeps ⌈2.25⌉
        assert_eq!(report.rows[0].stl_train_windows, 3);
        assert_eq!(report.rows[0].mtl_train_windows, 3 * 9 + 3);
        assert!(dir.path().join("case_b_3p1.json").exists());
        let text = std::fs::read_to_string(dir.path().join("case_b_3p1.csv")).unwrap();
        assert!(text.starts_with("alpha,stl_rmse,mtl_rmse"));
        assert_eq!(text.lines().count(), 3);
    }
}
