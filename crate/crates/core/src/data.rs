//! Dataset construction: synthetic weather/price generation, CSV ingestion,
//! windowing into context+horizon samples, normalization statistics, and
//! chronological / cold-start splits.
//!
//! A sample exposes 24 context steps of (T_out, T_in, P_ac) and 24 horizon
//! steps of exogenous (T_out, P_ac) only. Horizon indoor temperature never
//! appears in any input; targets are the horizon SOC values. Horizon driver
//! k spans the interval from prediction k's predecessor to prediction k, so
//! the first driver is the last context step's.

use crate::thermo::{EnvSeries, Trajectory};
use crate::HOUR_S;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Series start 2020-07-01T00:00:00Z; an arbitrary but fixed summer anchor.
pub const EPOCH_START: u64 = 1_593_561_600;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("synth_env needs days ≥ 2, got {0}")]
    TooFewDays(usize),
    #[error("csv {path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("csv {path} row {row}: {msg}")]
    BadRow { path: String, row: usize, msg: String },
    #[error("csv {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("cold-start subset is empty (alpha={alpha}, n={n})")]
    EmptySubset { alpha: f64, n: usize },
}

/// Synthetic summer environment: diurnal sinusoid plus AR(1) noise for
/// outdoor temperature, three-level time-of-use price with small jitter.
/// Deterministic per seed.
pub fn synth_env(days: usize, seed: u64) -> Result<EnvSeries, DataError> {
    if days < 2 {
        return Err(DataError::TooFewDays(days));
    }
    let n = days * 24;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(n);
    let mut t_out = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);
    let mut ar = 0.0_f64;
    for h in 0..n {
        t.push(EPOCH_START + h as u64 * HOUR_S as u64);
        let base = 29.0 + 4.0 * (2.0 * std::f64::consts::PI * (h as f64 - 15.0) / 24.0).sin();
        ar = 0.7 * ar + gauss(&mut rng) * 0.8;
        t_out.push(base + ar);
        let level = match h % 24 {
            0..=7 | 23 => 0.3,
            8..=17 => 0.6,
            _ => 1.0,
        };
        price.push(level + gauss(&mut rng) * 0.02);
    }
    Ok(EnvSeries { t, t_out, price })
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout simple and reproducible.
fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn write_env_csv<P: AsRef<Path>>(path: P, env: &EnvSeries) -> Result<(), DataError> {
    let path_str = path.as_ref().display().to_string();
    let to_io = |e: csv::Error| DataError::Io {
        path: path_str.clone(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(to_io)?;
    w.write_record(["timestamp", "T_out", "price"]).map_err(to_io)?;
    for i in 0..env.len() {
        w.write_record(&[
            env.t[i].to_string(),
            env.t_out[i].to_string(),
            env.price[i].to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: path_str,
        msg: e.to_string(),
    })
}

/// Reads `timestamp,T_out,price` rows, rejecting missing columns, non-hourly
/// gaps, and non-finite values with the offending row index.
pub fn import_env_csv<P: AsRef<Path>>(path: P) -> Result<EnvSeries, DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut r = csv::Reader::from_path(path.as_ref()).map_err(|e| DataError::Io {
        path: path_str.clone(),
        msg: e.to_string(),
    })?;
    let headers = r
        .headers()
        .map_err(|e| DataError::Io {
            path: path_str.clone(),
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn {
                path: path_str.clone(),
                column: name.to_string(),
            })
    };
    let (it, io, ip) = (col("timestamp")?, col("T_out")?, col("price")?);
    let (mut t, mut t_out, mut price) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let bad = |msg: String| DataError::BadRow {
            path: path_str.clone(),
            row,
            msg,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let ts: u64 = rec[it].parse().map_err(|e| bad(format!("timestamp: {e}")))?;
        if let Some(&prev) = t.last() {
            if ts != prev + HOUR_S as u64 {
                return Err(bad(format!(
                    "non-hourly gap: {prev} → {ts} (expected +{})",
                    HOUR_S as u64
                )));
            }
        }
        let f = |i: usize, name: &str| -> Result<f64, DataError> {
            let v: f64 = rec[i].parse().map_err(|e| bad(format!("{name}: {e}")))?;
            if !v.is_finite() {
                return Err(bad(format!("{name}: non-finite value")));
            }
            Ok(v)
        };
        let (o, p) = (f(io, "T_out")?, f(ip, "price")?);
        t.push(ts);
        t_out.push(o);
        price.push(p);
    }
    Ok(EnvSeries { t, t_out, price })
}

/// One training/evaluation window. Context arrays have `seq_len` entries,
/// horizon arrays `rollout_len`. `hor_t_out[k]`/`hor_p_ac[k]` drive the step
/// that produces `s_true[k]`; `s0` is the state at the last context step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub unit_id: usize,
    /// Trajectory index of the first context step; orders samples in time.
    pub start: usize,
    pub ctx_t_out: Vec<f64>,
    pub ctx_t_in: Vec<f64>,
    pub ctx_p_ac: Vec<f64>,
    pub hor_t_out: Vec<f64>,
    pub hor_p_ac: Vec<f64>,
    pub s0: f64,
    pub s_true: Vec<f64>,
    pub mu_tin: f64,
    pub sigma_tin: f64,
    pub dt_range: f64,
}

/// Slices a trajectory into windows at the given stride. Returns an empty
/// list (with a warning) when the trajectory is shorter than one window.
pub fn make_samples(
    traj: &Trajectory,
    dt_range: f64,
    seq_len: usize,
    rollout_len: usize,
    stride: usize,
) -> Vec<Sample> {
    assert!(seq_len >= 1 && rollout_len >= 1 && stride >= 1);
    let n = traj.env.len();
    let window = seq_len + rollout_len;
    if n < window {
        log::warn!(
            "trajectory of unit {} has {} steps, shorter than one {}-step window",
            traj.unit_id,
            n,
            window
        );
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut s = 0;
    while s + window <= n {
        let ctx = s..s + seq_len;
        let last = s + seq_len - 1;
        let hor = last..last + rollout_len;
        let tgt = s + seq_len..s + seq_len + rollout_len;
        let ctx_t_in = traj.t_in[ctx.clone()].to_vec();
        let mu = mean(&ctx_t_in);
        let sigma = std_dev(&ctx_t_in, mu);
        out.push(Sample {
            unit_id: traj.unit_id,
            start: s,
            ctx_t_out: traj.env.t_out[ctx.clone()].to_vec(),
            ctx_t_in,
            ctx_p_ac: traj.p_ac[ctx].to_vec(),
            hor_t_out: traj.env.t_out[hor.clone()].to_vec(),
            hor_p_ac: traj.p_ac[hor].to_vec(),
            s0: traj.soc[last],
            s_true: traj.soc[tgt].to_vec(),
            mu_tin: mu,
            sigma_tin: sigma,
            dt_range,
        });
        s += stride;
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64], mu: f64) -> f64 {
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Splits time-ordered samples: first ⌈train_frac·n⌉ train, rest test.
pub fn chrono_split(samples: Vec<Sample>, train_frac: f64) -> (Vec<Sample>, Vec<Sample>) {
    assert!(train_frac > 0.0 && train_frac <= 1.0);
    let n = samples.len();
    let k = ((train_frac * n as f64).ceil() as usize).min(n);
    let mut train = samples;
    let test = train.split_off(k);
    (train, test)
}

/// Index at which `chrono_split` cuts a list of `n` samples.
pub fn split_index(n: usize, train_frac: f64) -> usize {
    ((train_frac * n as f64).ceil() as usize).min(n)
}

/// Keeps only the chronologically last ⌈alpha·n⌉ samples, modeling a unit
/// that has just started logging.
pub fn cold_start_subset(samples: &[Sample], alpha: f64) -> Result<Vec<Sample>, DataError> {
    assert!(alpha > 0.0 && alpha <= 1.0);
    let n = samples.len();
    let k = (alpha * n as f64).ceil() as usize;
    if k == 0 {
        return Err(DataError::EmptySubset { alpha, n });
    }
    Ok(samples[n - k..].to_vec())
}

/// Mean/std pairs for each standardized feature, computed on the training
/// split only. Stds are floored at 1e-6 so scaling never divides by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub t_out: (f64, f64),
    pub t_in: (f64, f64),
    pub p_ac: (f64, f64),
    pub mu_tin: (f64, f64),
    pub sigma_tin: (f64, f64),
}

impl NormStats {
    pub fn from_train(samples: &[Sample]) -> Self {
        let collect = |f: &dyn Fn(&Sample) -> Vec<f64>| -> Vec<f64> {
            samples.iter().flat_map(|s| f(s)).collect()
        };
        let t_out = collect(&|s| {
            let mut v = s.ctx_t_out.clone();
            v.extend_from_slice(&s.hor_t_out);
            v
        });
        let t_in = collect(&|s| s.ctx_t_in.clone());
        let p_ac = collect(&|s| {
            let mut v = s.ctx_p_ac.clone();
            v.extend_from_slice(&s.hor_p_ac);
            v
        });
        let mus: Vec<f64> = samples.iter().map(|s| s.mu_tin).collect();
        let sigmas: Vec<f64> = samples.iter().map(|s| s.sigma_tin).collect();
        let stat = |xs: &[f64]| -> (f64, f64) {
            let mu = mean(xs);
            (mu, std_dev(xs, mu).max(1e-6))
        };
        Self {
            t_out: stat(&t_out),
            t_in: stat(&t_in),
            p_ac: stat(&p_ac),
            mu_tin: stat(&mus),
            sigma_tin: stat(&sigmas),
        }
    }

    pub fn z(x: f64, (mu, sd): (f64, f64)) -> f64 {
        (x - mu) / sd
    }
}

/// Dataset description persisted next to the per-unit trajectory CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub units: Vec<usize>,
    pub seq_len: usize,
    pub rollout_len: usize,
    /// Per-unit sample count at which chrono_split cuts train from test.
    pub split_index: usize,
    pub norm_stats: NormStats,
}

impl DatasetManifest {
    pub fn write<P: AsRef<Path>>(&self, path: P) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn read<P: AsRef<Path>>(path: P) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::default_fleet;
    use crate::thermo::simulate_unit;
    use proptest::prelude::*;

    #[test]
    fn synth_env_deterministic_and_sized() {
        let a = synth_env(92, 7).unwrap();
        let b = synth_env(92, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2208);
        let c = synth_env(92, 8).unwrap();
        assert_ne!(a.t_out, c.t_out);
        assert!(synth_env(1, 7).is_err());
    }

    #[test]
    fn synth_env_base_sinusoid_range_and_peak() {
        // strip the noise by reproducing the deterministic part
        let base: Vec<f64> = (0..48)
            .map(|h| 29.0 + 4.0 * (2.0 * std::f64::consts::PI * (h as f64 - 15.0) / 24.0).sin())
            .collect();
        let max = base.iter().cloned().fold(f64::MIN, f64::max);
        let min = base.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 33.0).abs() < 1e-9 && (min - 25.0).abs() < 1e-9);
        let env = synth_env(30, 3).unwrap();
        for (h, &x) in env.t_out.iter().enumerate() {
            let b = 29.0 + 4.0 * (2.0 * std::f64::consts::PI * (h as f64 - 15.0) / 24.0).sin();
            assert!((x - b).abs() < 6.0, "noise component out of plausible range");
        }
    }

    #[test]
    fn synth_env_price_levels() {
        let env = synth_env(10, 5).unwrap();
        for (h, &p) in env.price.iter().enumerate() {
            let level = match h % 24 {
                0..=7 | 23 => 0.3,
                8..=17 => 0.6,
                _ => 1.0,
            };
            assert!((p - level).abs() < 0.2, "hour {h}: price {p} far from {level}");
        }
    }

    #[test]
    fn env_csv_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let env = synth_env(3, 11).unwrap();
        let p = dir.path().join("env.csv");
        write_env_csv(&p, &env).unwrap();
        let back = import_env_csv(&p).unwrap();
        assert_eq!(env, back);

        let p2 = dir.path().join("missing.csv");
        std::fs::write(&p2, "timestamp,T_out\n1593561600,30.0\n").unwrap();
        match import_env_csv(&p2) {
            Err(DataError::MissingColumn { column, .. }) => assert_eq!(column, "price"),
            other => panic!("expected missing column, got {other:?}"),
        }

        let p3 = dir.path().join("gap.csv");
        std::fs::write(
            &p3,
            "timestamp,T_out,price\n1593561600,30.0,0.5\n1593568800,30.0,0.5\n",
        )
        .unwrap();
        match import_env_csv(&p3) {
            Err(DataError::BadRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected gap error, got {other:?}"),
        }

        let p4 = dir.path().join("nan.csv");
        std::fs::write(&p4, "timestamp,T_out,price\n1593561600,NaN,0.5\n").unwrap();
        match import_env_csv(&p4) {
            Err(DataError::BadRow { row, msg, .. }) => {
                assert_eq!(row, 0);
                assert!(msg.contains("T_out"));
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    fn small_traj(days: usize) -> Trajectory {
        let fleet = default_fleet(4).unwrap();
        let env = synth_env(days, 13).unwrap();
        simulate_unit(&fleet.units[0], &env, 22.5).unwrap()
    }

    #[test]
    fn make_samples_counts_and_alignment() {
        let traj = small_traj(92);
        let samples = make_samples(&traj, 3.0, 24, 24, 24);
        assert_eq!(samples.len(), 91);
        let s = &samples[0];
        assert_eq!(s.start, 0);
        assert_eq!(s.ctx_t_out.len(), 24);
        assert_eq!(s.hor_t_out.len(), 24);
        assert_eq!(s.s_true.len(), 24);
        // S0 is the state at the last context step
        assert_eq!(s.s0, traj.soc[23]);
        // first prediction target is step 24
        assert_eq!(s.s_true[0], traj.soc[24]);
        // the first horizon driver is the last context step's, so the drive
        // interval ends exactly at the first prediction
        assert_eq!(s.hor_p_ac[0], traj.p_ac[23]);
        assert_eq!(s.hor_t_out[0], traj.env.t_out[23]);
        // stride
        assert_eq!(samples[1].start, 24);
        assert_eq!(samples[1].s_true[0], traj.soc[48]);
    }

    #[test]
    fn make_samples_short_trajectory_is_empty() {
        let traj = small_traj(2); // 48 steps exactly fits one window
        assert_eq!(make_samples(&traj, 3.0, 24, 24, 24).len(), 1);
        let mut shorter = traj;
        shorter.env.t.truncate(40);
        shorter.env.t_out.truncate(40);
        shorter.env.price.truncate(40);
        shorter.t_in.truncate(40);
        shorter.p_ac.truncate(40);
        shorter.soc.truncate(40);
        assert!(make_samples(&shorter, 3.0, 24, 24, 24).is_empty());
    }

    #[test]
    fn context_reassembly_reproduces_trajectory() {
        let traj = small_traj(10);
        let samples = make_samples(&traj, 3.0, 24, 24, 24);
        for s in &samples {
            assert_eq!(&traj.t_in[s.start..s.start + 24], s.ctx_t_in.as_slice());
            assert_eq!(&traj.env.t_out[s.start..s.start + 24], s.ctx_t_out.as_slice());
            assert_eq!(&traj.p_ac[s.start..s.start + 24], s.ctx_p_ac.as_slice());
        }
    }

    #[test]
    fn chrono_split_counts_and_order() {
        let traj = small_traj(92);
        let samples = make_samples(&traj, 3.0, 24, 24, 24);
        let (train, test) = chrono_split(samples, 0.8);
        assert_eq!((train.len(), test.len()), (73, 18));
        let max_train = train.iter().map(|s| s.start).max().unwrap();
        let min_test = test.iter().map(|s| s.start).min().unwrap();
        assert!(min_test > max_train);
        let all = make_samples(&traj, 3.0, 24, 24, 24);
        let (tr, te) = chrono_split(all, 1.0);
        assert_eq!(tr.len(), 91);
        assert!(te.is_empty());
    }

    #[test]
    fn cold_start_is_suffix() {
        let traj = small_traj(92);
        let samples = make_samples(&traj, 3.0, 24, 24, 24);
        let (train, _) = chrono_split(samples, 0.8);
        let sub = cold_start_subset(&train, 0.02).unwrap();
        assert_eq!(sub.len(), 2); // ceil(0.02·73)
        assert_eq!(sub[1].start, train.last().unwrap().start);
        assert_eq!(sub[0].start, train[train.len() - 2].start);
        let all = cold_start_subset(&train, 1.0).unwrap();
        assert_eq!(all.len(), train.len());
        assert!(cold_start_subset(&[], 0.5).is_err());
    }

    #[test]
    fn norm_stats_use_train_only() {
        let traj = small_traj(92);
        let samples = make_samples(&traj, 3.0, 24, 24, 24);
        let (train, test) = chrono_split(samples, 0.8);
        let stats = NormStats::from_train(&train);
        let mut shifted_test = test;
        for s in &mut shifted_test {
            for x in &mut s.ctx_t_out {
                *x += 100.0;
            }
        }
        // recomputing on train after mutating test proves independence
        let stats2 = NormStats::from_train(&train);
        assert_eq!(stats, stats2);
        assert!(stats.t_out.1 > 0.0 && stats.p_ac.1 > 0.0);
    }

    #[test]
    fn norm_stats_floor_degenerate_std() {
        let s = Sample {
            unit_id: 0,
            start: 0,
            ctx_t_out: vec![30.0; 24],
            ctx_t_in: vec![22.0; 24],
            ctx_p_ac: vec![1.0; 24],
            hor_t_out: vec![30.0; 24],
            hor_p_ac: vec![1.0; 24],
            s0: 0.5,
            s_true: vec![0.5; 24],
            mu_tin: 22.0,
            sigma_tin: 0.0,
            dt_range: 3.0,
        };
        let stats = NormStats::from_train(&[s]);
        assert_eq!(stats.t_out.1, 1e-6);
        assert_eq!(NormStats::z(30.0, stats.t_out), 0.0);
    }

    #[test]
    fn manifest_roundtrip() {
        let traj = small_traj(10);
        let samples = make_samples(&traj, 3.0, 24, 24, 24);
        let (train, _) = chrono_split(samples, 0.8);
        let m = DatasetManifest {
            units: vec![0, 1, 2, 3],
            seq_len: 24,
            rollout_len: 24,
            split_index: split_index(9, 0.8),
            norm_stats: NormStats::from_train(&train),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        m.write(&p).unwrap();
        assert_eq!(DatasetManifest::read(&p).unwrap(), m);
    }

    proptest! {
        #[test]
        fn split_boundary_property(n in 1usize..200, frac in 0.01f64..1.0) {
            let k = split_index(n, frac);
            prop_assert!(k >= 1 && k <= n);
            prop_assert!(k as f64 >= frac * n as f64);
            prop_assert!(((k - 1) as f64) < frac * n as f64);
        }

        #[test]
        fn cold_start_suffix_property(n in 1usize..120, alpha in 0.01f64..1.0) {
            let traj = small_traj(6);
            let base = make_samples(&traj, 3.0, 24, 24, 24);
            let mut samples = Vec::new();
            for i in 0..n {
                let mut s = base[i % base.len()].clone();
                s.start = i;
                samples.push(s);
            }
            let sub = cold_start_subset(&samples, alpha).unwrap();
            let k = (alpha * n as f64).ceil() as usize;
            prop_assert_eq!(sub.len(), k);
            for (a, b) in sub.iter().zip(&samples[n - k..]) {
                prop_assert_eq!(a.start, b.start);
            }
        }
    }
}
