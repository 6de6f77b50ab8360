//! `vbnet`: datasets, training, identification, and the paper-style studies
//! from one binary. Every subcommand reads one shared JSON config (all keys
//! optional), applies flag overrides, and writes artifacts under the output
//! directory (`--out`, `$VBNET_OUT_DIR`, or `./out`).

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use vbnet_autodiff::checkpoint;
use vbnet_cli::case_a::run_case_a;
use vbnet_cli::case_b::{run_case_b, DEFAULT_ALPHAS};
use vbnet_cli::dataset::{build_dataset, load_dataset, save_dataset};
use vbnet_cli::gradcheck;
use vbnet_cli::report::{write_json, CaseAReport, CaseBReport};
use vbnet_cli::{resolve_out_dir, CliError};
use vbnet_core::battery::VbParams;
use vbnet_core::fleet::{load_config, ExperimentConfig};
use vbnet_model::{evaluate, train, Baseline, BaselineKind, SocModel, TrainConfig, VbNet};

#[derive(Parser)]
#[command(name = "vbnet", version, about = "Virtual-battery modeling toolkit")]
struct Cli {
    /// JSON config file; missing keys fall back to built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (overrides $VBNET_OUT_DIR; default ./out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated span in days.
    #[arg(long, global = true)]
    days: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Weight of the first-difference loss term.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Cold-start availability ratio.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    train_frac: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the fleet and write per-unit trajectory CSVs plus a manifest.
    GenData {
        /// Fleet size (4 or 8).
        #[arg(long, default_value_t = 4)]
        units: usize,
    },
    /// Train one model on a generated dataset and checkpoint it.
    Train {
        /// Directory produced by gen-data.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// vbnet, dense, conv, or recurrent.
        #[arg(long, default_value = "vbnet")]
        model: String,
    },
    /// Evaluate a checkpoint on the dataset's held-out windows.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, default_value = "vbnet")]
        model: String,
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
    },
    /// Emit identified per-unit battery parameters over the test horizon.
    Identify {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
    },
    /// Four-unit study: gray-box model vs black-box baselines, with physics
    /// extraction and plot data.
    CaseA,
    /// Cold-start grid: single-task vs joint training across data fractions.
    CaseB {
        /// Mature units in the fleet (3 or 7); the newcomer is one more.
        #[arg(long, default_value_t = 3)]
        mature: usize,
        /// Comma-separated availability ratios.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Verify reverse-mode gradients against central finite differences.
    GradCheck {
        /// Smooth full-model probe points to test.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
    /// Summarize the reports found in the output directory.
    Report,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = cli.$field { cfg.$field = v; })*
        };
    }
    apply!(seed, days, epochs, patience, learning_rate, batch_size, lambda, alpha, train_frac);
    cfg.validate()?;
    Ok(cfg)
}

enum AnyModel {
    Gray(VbNet),
    Black(Baseline),
}

impl AnyModel {
    fn build(name: &str, fleet: &vbnet_core::fleet::FleetSpec, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        match name {
            "vbnet" => Ok(AnyModel::Gray(VbNet::new(fleet, cfg))),
            "dense" => Ok(AnyModel::Black(Baseline::new(BaselineKind::Dense, cfg))),
            "conv" => Ok(AnyModel::Black(Baseline::new(BaselineKind::Conv, cfg))),
            "recurrent" => Ok(AnyModel::Black(Baseline::new(BaselineKind::Recurrent, cfg))),
            other => Err(CliError::UnknownModel(other.to_string())),
        }
    }

    fn as_soc(&mut self) -> &mut dyn SocModel {
        match self {
            AnyModel::Gray(m) => m,
            AnyModel::Black(m) => m,
        }
    }
}

fn cmd_gen_data(cfg: &ExperimentConfig, units: usize, out: &Path) -> Result<(), CliError> {
    let ds = build_dataset(cfg, units)?;
    save_dataset(&ds, cfg, out)?;
    println!(
        "gen-data: {} units, {} train / {} test windows → {}",
        units,
        ds.train.len(),
        ds.test.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, data: &Path, name: &str, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data, cfg.train_frac)?;
    let mut model = AnyModel::build(name, &ds.fleet, cfg)?;
    let report = train(model.as_soc(), &ds.train, &ds.stats, &TrainConfig::from(cfg))?;
    std::fs::create_dir_all(out)?;
    let ckpt = out.join(format!("{name}.ckpt.json"));
    checkpoint::save(model.as_soc().store(), &ckpt)?;
    write_json(out.join(format!("train_{name}.json")), &report)?;
    println!(
        "train: {name} ran {} epochs (best val RMSE {}) → {}",
        report.epochs_run,
        report
            .best_val_rmse
            .map_or("n/a".into(), |v| format!("{v:.5}")),
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, data: &Path, name: &str, ckpt: &Path, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data, cfg.train_frac)?;
    let mut model = AnyModel::build(name, &ds.fleet, cfg)?;
    checkpoint::load_into(model.as_soc().store_mut(), ckpt)?;
    let report = evaluate(model.as_soc(), &ds.test, &ds.stats);
    std::fs::create_dir_all(out)?;
    write_json(out.join(format!("eval_{name}.json")), &report)?;
    println!(
        "eval: {name} test RMSE {:.5} over {} windows",
        report.rmse, report.n_samples
    );
    Ok(())
}

fn cmd_identify(cfg: &ExperimentConfig, data: &Path, ckpt: &Path, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(data, cfg.train_frac)?;
    let mut net = VbNet::new(&ds.fleet, cfg);
    checkpoint::load_into(net.store_mut(), ckpt)?;
    let mut params = Vec::new();
    for unit in &ds.fleet.units {
        let mut p_loss_kw = Vec::new();
        for s in ds.test.iter().filter(|s| s.unit_id == unit.id) {
            p_loss_kw.extend(net.predict(s, &ds.stats)?.p_loss_hat);
        }
        params.push(VbParams {
            unit_id: unit.id,
            c_f_j: net.capacity_of(unit.id, unit.deadband_c()),
            gamma: Some(net.gamma_of(unit.id)),
            p_loss_kw,
        });
    }
    std::fs::create_dir_all(out)?;
    let path = out.join("vb_params.json");
    write_json(&path, &params)?;
    println!("identify: {} units → {}", params.len(), path.display());
    Ok(())
}

fn cmd_report(out: &Path) -> Result<(), CliError> {
    let mut seen = false;
    let case_a = out.join("report.json");
    if case_a.exists() {
        let report: CaseAReport = serde_json::from_str(&std::fs::read_to_string(&case_a)?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        for (name, m) in &report.models {
            println!(
                "case-a[{}]: {name} test RMSE {:.5}",
                &report.config_hash[..8],
                m.rmse
            );
        }
        for (unit, fit) in &report.physics {
            println!(
                "case-a[{}]: unit {unit} C_f {:.3e} J (oracle {:.3e}), slope {:.4} (oracle {:.4}), gamma {:.4}",
                &report.config_hash[..8],
                fit.c_f_hat_j,
                fit.c_f_oracle_j,
                fit.p_loss_slope,
                fit.p_loss_slope_oracle,
                fit.gamma
            );
        }
        seen = true;
    }
    for mature in [3usize, 7] {
        let path = out.join(format!("case_b_{mature}p1.json"));
        if !path.exists() {
            continue;
        }
        let report: CaseBReport = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        for row in &report.rows {
            println!(
                "case-b[{mature}+1]: alpha {:.2} STL {:.5} MTL {:.5}",
                row.alpha, row.stl_rmse, row.mtl_rmse
            );
        }
        seen = true;
    }
    if !seen {
        return Err(CliError::NoReports(out.to_path_buf()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    let out = resolve_out_dir(cli.out.clone());
    match &cli.cmd {
        Cmd::GenData { units } => cmd_gen_data(&cfg, *units, &out),
        Cmd::Train { data, model } => cmd_train(&cfg, data, model, &out),
        Cmd::Eval { data, model, ckpt } => cmd_eval(&cfg, data, model, ckpt, &out),
        Cmd::Identify { data, ckpt } => cmd_identify(&cfg, data, ckpt, &out),
        Cmd::CaseA => {
            let outcome = run_case_a(&cfg, Some(&out))?;
            let vb = &outcome.report.models["vbnet"];
            println!(
                "case-a: vbnet test RMSE {:.5} in {:.1}s → {}",
                vb.rmse,
                outcome.wall.as_secs_f64(),
                out.display()
            );
            Ok(())
        }
        Cmd::CaseB { mature, alphas } => {
            let alphas = if alphas.is_empty() { DEFAULT_ALPHAS.to_vec() } else { alphas.clone() };
            let report = run_case_b(&cfg, *mature, &alphas, Some(&out))?;
            println!(
                "case-b: {}+1 grid over {} ratios → {}",
                mature,
                report.rows.len(),
                out.display()
            );
            Ok(())
        }
        Cmd::GradCheck { points } => {
            let summary = gradcheck::run(*points)?;
            for c in &summary.primitives {
                println!("grad-check[{}]: max rel err {:.3e}", c.name, c.report.max_rel_err);
            }
            for p in &summary.model_points {
                println!(
                    "grad-check[model seed {} window {}]: max rel err {:.3e}, margin {:.2e}",
                    p.init_seed, p.window, p.report.max_rel_err, p.report.kink_margin
                );
            }
            println!("grad-check: worst {:.3e}", summary.worst());
            summary.enforce()
        }
        Cmd::Report => cmd_report(&out),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(1);
    }
}
