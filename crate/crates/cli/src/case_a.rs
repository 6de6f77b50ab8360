//! Four-unit comparison run: the physics-constrained network against three
//! black-box baselines on one shared dataset, plus extraction of the
//! identified physics (capacity, loss-power slope, sensitivity scalars).

use crate::dataset::{build_dataset, Dataset};
use crate::metrics::{lsq_slope, r2};
use crate::report::{config_hash, write_json, CaseAReport, ModelMetrics, PhysicsFit};
use crate::CliError;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};
use vbnet_autodiff::checkpoint;
use vbnet_core::battery::temp_from_soc;
use vbnet_core::fleet::ExperimentConfig;
use vbnet_model::{evaluate, train, Baseline, BaselineKind, SocModel, TrainConfig, VbNet};

/// Everything a Case A run produces, with the trained models kept alive so
/// callers can probe them further without retraining.
pub struct CaseAOutcome {
    pub report: CaseAReport,
    pub vbnet: VbNet,
    pub baselines: Vec<Baseline>,
    pub dataset: Dataset,
    pub wall: Duration,
}

/// The scatter behind the loss-power consistency check: one point per
/// horizon step of every test window of one unit.
struct LossScatter {
    dt_phy_c: Vec<f64>,
    p_loss_hat_kw: Vec<f64>,
    p_loss_oracle_kw: Vec<f64>,
}

fn loss_scatter(net: &VbNet, ds: &Dataset, unit: usize) -> Result<LossScatter, CliError> {
    let spec = &ds.fleet.units[unit];
    let traj = &ds.trajectories[unit];
    let mut out = LossScatter {
        dt_phy_c: Vec::new(),
        p_loss_hat_kw: Vec::new(),
        p_loss_oracle_kw: Vec::new(),
    };
    for s in ds.test.iter().filter(|s| s.unit_id == unit) {
        let pred = net.predict(s, &ds.stats)?;
        let mut state = s.s0;
        for k in 0..pred.p_loss_hat.len() {
            let t_hat = temp_from_soc(state, spec.t_min_c, spec.t_max_c)?;
            let idx = s.start + net.seq_len - 1 + k;
            out.dt_phy_c.push(s.hor_t_out[k] - t_hat);
            out.p_loss_hat_kw.push(pred.p_loss_hat[k]);
            out.p_loss_oracle_kw
                .push((traj.env.t_out[idx] - traj.t_in[idx]) / spec.r_c_per_kw);
            state = pred.s_hat[k];
        }
    }
    Ok(out)
}

fn per_unit_r2<M: SocModel + ?Sized>(
    model: &M,
    ds: &Dataset,
) -> Result<BTreeMap<usize, f64>, CliError> {
    let mut out = BTreeMap::new();
    for unit in ds.fleet.units.iter().map(|u| u.id) {
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for s in ds.test.iter().filter(|s| s.unit_id == unit) {
            pred.extend(model.predict_soc(s, &ds.stats));
            truth.extend_from_slice(&s.s_true);
        }
        out.insert(unit, r2(&pred, &truth)?);
    }
    Ok(out)
}

/// Trains the gray-box model and all baselines on the reference 4-unit
/// fleet, evaluates the held-out windows, and extracts the physics the
/// gray-box model identified. Writing artifacts is optional so callers can
/// run entirely in memory.
pub fn run_case_a(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<CaseAOutcome, CliError> {
    let started = Instant::now();
    let ds = build_dataset(cfg, 4)?;
    let tc = TrainConfig::from(cfg);
    let mut models: BTreeMap<String, ModelMetrics> = BTreeMap::new();

    let mut vbnet = VbNet::new(&ds.fleet, cfg);
    let vb_train = train(&mut vbnet, &ds.train, &ds.stats, &tc)?;
    let vb_eval = evaluate(&vbnet, &ds.test, &ds.stats);
    log::info!(
        "case A: vbnet test RMSE {:.5} after {} epochs",
        vb_eval.rmse,
        vb_train.epochs_run
    );
    models.insert(
        "vbnet".into(),
        ModelMetrics::new(
            vbnet.store().n_scalars(),
            &vb_eval,
            per_unit_r2(&vbnet, &ds)?,
            vb_train,
        ),
    );

    let mut baselines = Vec::new();
    for kind in BaselineKind::ALL {
        let mut model = Baseline::new(kind, cfg);
        let t = train(&mut model, &ds.train, &ds.stats, &tc)?;
        let e = evaluate(&model, &ds.test, &ds.stats);
        log::info!(
            "case A: {} test RMSE {:.5} after {} epochs",
            kind.name(),
            e.rmse,
            t.epochs_run
        );
        models.insert(
            kind.name().into(),
            ModelMetrics::new(model.store().n_scalars(), &e, per_unit_r2(&model, &ds)?, t),
        );
        baselines.push(model);
    }

    let mut physics = BTreeMap::new();
    let mut scatters = Vec::new();
    for unit in &ds.fleet.units {
        let sc = loss_scatter(&vbnet, &ds, unit.id)?;
        physics.insert(
            unit.id,
            PhysicsFit {
                c_f_hat_j: vbnet.capacity_of(unit.id, unit.deadband_c()),
                c_f_oracle_j: unit.c_th_j_per_c * unit.deadband_c(),
                gamma: vbnet.gamma_of(unit.id),
                p_loss_slope: lsq_slope(&sc.dt_phy_c, &sc.p_loss_hat_kw)?,
                p_loss_slope_oracle: 1.0 / unit.r_c_per_kw,
            },
        );
        scatters.push(sc);
    }

    let report = CaseAReport {
        case: "case-a".into(),
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        models,
        physics,
    };

    let outcome = CaseAOutcome {
        report,
        vbnet,
        baselines,
        dataset: ds,
        wall: started.elapsed(),
    };
    if let Some(dir) = out_dir {
        write_artifacts(&outcome, &scatters, dir)?;
    }
    Ok(outcome)
}

fn write_artifacts(
    outcome: &CaseAOutcome,
    scatters: &[LossScatter],
    dir: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    write_json(dir.join("report.json"), &outcome.report)?;
    checkpoint::save(outcome.vbnet.store(), dir.join("vbnet.ckpt.json"))?;
    for model in &outcome.baselines {
        checkpoint::save(
            model.store(),
            dir.join(format!("{}.ckpt.json", model.kind.name())),
        )?;
    }
    let ds = &outcome.dataset;

    // SOC tracking over every test window: truth next to each model.
    let mut w = csv::Writer::from_path(dir.join("soc_tracking.csv"))?;
    w.write_record(["unit", "window_start", "step", "s_true", "vbnet", "dense", "conv", "recurrent"])?;
    for s in &ds.test {
        let vb = outcome.vbnet.predict_soc(s, &ds.stats);
        let base: Vec<Vec<f64>> = outcome
            .baselines
            .iter()
            .map(|m| m.predict_soc(s, &ds.stats))
            .collect();
        for k in 0..s.s_true.len() {
            w.write_record(&[
                s.unit_id.to_string(),
                s.start.to_string(),
                k.to_string(),
                s.s_true[k].to_string(),
                vb[k].to_string(),
                base[0][k].to_string(),
                base[1][k].to_string(),
                base[2][k].to_string(),
            ])?;
        }
    }
    w.flush()?;

    // Predicted loss power against the reconstructed temperature difference,
    // with the analytic loss at the same trajectory step for reference.
    let mut w = csv::Writer::from_path(dir.join("ploss_scatter.csv"))?;
    w.write_record(["unit", "dt_phy_c", "p_loss_hat_kw", "p_loss_oracle_kw"])?;
    for (unit, sc) in scatters.iter().enumerate() {
        for i in 0..sc.dt_phy_c.len() {
            w.write_record(&[
                unit.to_string(),
                sc.dt_phy_c[i].to_string(),
                sc.p_loss_hat_kw[i].to_string(),
                sc.p_loss_oracle_kw[i].to_string(),
            ])?;
        }
    }
    w.flush()?;

    // Identified capacity and sensitivity per unit.
    let mut w = csv::Writer::from_path(dir.join("cf_bars.csv"))?;
    w.write_record(["unit", "c_f_hat_j", "c_f_oracle_j"])?;
    for (u, fit) in &outcome.report.physics {
        w.write_record(&[u.to_string(), fit.c_f_hat_j.to_string(), fit.c_f_oracle_j.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("gamma_bars.csv"))?;
    w.write_record(["unit", "gamma", "r_c_per_kw"])?;
    for (u, fit) in &outcome.report.physics {
        w.write_record(&[
            u.to_string(),
            fit.gamma.to_string(),
            ds.fleet.units[*u].r_c_per_kw.to_string(),
        ])?;
    }
    w.flush()?;

    // Identified parameters across one held-out day per unit: the capacity
    // stays flat while the loss power moves with the weather.
    let mut w = csv::Writer::from_path(dir.join("time_varying.csv"))?;
    w.write_record(["unit", "window_start", "step", "c_f_hat_j", "p_loss_hat_kw"])?;
    for unit in ds.fleet.units.iter().map(|u| u.id) {
        let Some(s) = ds.test.iter().find(|s| s.unit_id == unit) else {
            continue;
        };
        let pred = outcome.vbnet.predict(s, &ds.stats)?;
        for (k, p) in pred.p_loss_hat.iter().enumerate() {
            w.write_record(&[
                unit.to_string(),
                s.start.to_string(),
                k.to_string(),
                pred.c_f_hat.to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut summary = std::fs::File::create(dir.join("summary.txt"))?;
    for (name, m) in &outcome.report.models {
        writeln!(summary, "{name}: test RMSE {:.6}", m.rmse)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A deliberately tiny run: the point is plumbing, not accuracy.
    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            days: 12,
            epochs: 2,
            batch_size: 32,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn tiny_run_produces_complete_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_case_a(&tiny_cfg(), Some(dir.path())).unwrap();
        assert_eq!(outcome.report.models.len(), 4);
        assert_eq!(outcome.report.physics.len(), 4);
        for file in [
            "report.json",
            "vbnet.ckpt.json",
            "dense.ckpt.json",
            "conv.ckpt.json",
            "recurrent.ckpt.json",
            "soc_tracking.csv",
            "ploss_scatter.csv",
            "cf_bars.csv",
            "gamma_bars.csv",
            "time_varying.csv",
            "summary.txt",
        ] {
            assert!(dir.path().join(file).exists(), "missing {file}");
        }
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let back: CaseAReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config_hash, outcome.report.config_hash);
    }

    #[test]
    fn capacities_stay_inside_bounds() {
        let cfg = tiny_cfg();
        let outcome = run_case_a(&cfg, None).unwrap();
        for fit in outcome.report.physics.values() {
            assert!(fit.c_f_hat_j > cfg.cap_bounds[0] && fit.c_f_hat_j < cfg.cap_bounds[1]);
        }
    }
}
