//! Cold-start cell diagnostics: runs single (method, alpha) cells and
//! prints the trainer's stopping report plus the newcomer's identified
//! physics, to localize instability that the grid table alone hides.

use vbnet_cli::dataset::build_dataset;
use vbnet_cli::metrics::lsq_slope;
use vbnet_core::battery::temp_from_soc;
use vbnet_core::data::{cold_start_subset, NormStats, Sample};
use vbnet_core::fleet::{ExperimentConfig, FleetSpec};
use vbnet_model::{eval_rmse, train, TrainConfig, VbNet};

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

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_mature: usize = args.first().map(|s| s.parse().unwrap()).unwrap_or(3);
    let alphas: Vec<f64> = if args.len() > 1 {
        args[1].split(',').map(|s| s.parse().unwrap()).collect()
    } else {
        vec![0.02, 0.04, 0.06, 0.08, 0.10, 1.00]
    };
    let cfg = ExperimentConfig::default();
    let ds = build_dataset(&cfg, n_mature + 1).unwrap();
    let new_unit = n_mature;
    let spec = ds.fleet.units[new_unit].clone();
    let traj = &ds.trajectories[new_unit];
    let oracle_slope = 1.0 / spec.r_c_per_kw;
    let oracle_cap = spec.c_th_j_per_c * spec.deadband_c();
    println!(
        "newcomer unit {new_unit}: R {} C_f {:.2e} band [{}, {}]",
        spec.r_c_per_kw, oracle_cap, spec.t_min_c, spec.t_max_c
    );

    let new_train = ds.train_of(new_unit);
    let new_test = ds.test_of(new_unit);
    let mature_train: Vec<Sample> = ds
        .train
        .iter()
        .filter(|s| s.unit_id != new_unit)
        .cloned()
        .collect();

    let mut solo_spec = spec.clone();
    solo_spec.id = 0;
    let solo_fleet = FleetSpec::new(vec![solo_spec], ds.fleet.horizon_h, ds.fleet.dt_s).unwrap();
    let solo_test = reindexed(&new_test, 0);
    let tc = TrainConfig::from(&cfg);

    for &alpha in &alphas {
        let subset = cold_start_subset(&new_train, alpha).unwrap();

        for method in ["stl", "mtl"] {
            let (mut net, train_set, stats, test_set, uid) = if method == "stl" {
                let t = reindexed(&subset, 0);
                let st = NormStats::from_train(&t);
                (VbNet::new(&solo_fleet, &cfg), t, st, solo_test.clone(), 0)
            } else {
                let mut t = mature_train.clone();
                t.extend_from_slice(&subset);
                let st = NormStats::from_train(&t);
                (VbNet::new(&ds.fleet, &cfg), t, st, new_test.clone(), new_unit)
            };
            let rep = train(&mut net, &train_set, &stats, &tc).unwrap();
            let rmse = eval_rmse(&net, &test_set, &stats);

            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for s in &test_set {
                let pred = net.predict(s, &stats).unwrap();
                let mut state = s.s0;
                for k in 0..pred.p_loss_hat.len() {
                    let t_hat = temp_from_soc(state, spec.t_min_c, spec.t_max_c).unwrap();
                    xs.push(s.hor_t_out[k] - t_hat);
                    ys.push(pred.p_loss_hat[k]);
                    state = pred.s_hat[k];
                }
            }
            let slope = lsq_slope(&xs, &ys).unwrap();
            let cap = net.capacity_of(uid, spec.deadband_c());
            let gammas: Vec<f64> = (0..if method == "stl" { 1 } else { n_mature + 1 })
                .map(|u| net.gamma_of(u))
                .collect();
            println!(
                "alpha {alpha:.2} {method}: rmse {rmse:.5} | epochs {} best {} val {} | cap {:+.1}% slope {:+.1}% | gamma {:?}",
                rep.epochs_run,
                rep.best_epoch,
                rep.best_val_rmse
                    .map(|v| format!("{v:.5}"))
                    .unwrap_or_else(|| "-".into()),
                (cap / oracle_cap - 1.0) * 100.0,
                (slope / oracle_slope - 1.0) * 100.0,
                gammas.iter().map(|g| (g * 1e3).round() / 1e3).collect::<Vec<_>>(),
            );
        }
    }
    let _ = traj;
}
