//! First-order thermal simulation of air-conditioned spaces and the
//! price-responsive controller that generates their power profiles.
//!
//! One unit is a single thermal mass `C_th` coupled to outdoors through a
//! resistance `R`. Cooling power `P` removes heat at rate `η·P`. Exact and
//! explicit-Euler one-step integrators are provided; ground-truth
//! trajectories use the exact integrator with substeps, while learned
//! components mirror the Euler form.

use crate::battery::soc_from_temp;
use crate::fleet::AcUnitSpec;
use crate::{HOUR_S, KILO};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("environment series invalid: {0}")]
    BadEnv(String),
    #[error("initial temperature {t_init} outside comfort band [{t_min}, {t_max}]")]
    BadInit { t_init: f64, t_min: f64, t_max: f64 },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("trajectory io {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Aligned hourly exogenous series: outdoor temperature and electricity
/// price. Invariants: equal lengths, strictly increasing hourly timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSeries {
    /// Unix seconds, hourly spacing.
    pub t: Vec<u64>,
    pub t_out: Vec<f64>,
    pub price: Vec<f64>,
}

impl EnvSeries {
    pub fn new(t: Vec<u64>, t_out: Vec<f64>, price: Vec<f64>) -> Result<Self, SimError> {
        if t.len() != t_out.len() || t.len() != price.len() {
            return Err(SimError::BadEnv(format!(
                "length mismatch: t={}, T_out={}, price={}",
                t.len(),
                t_out.len(),
                price.len()
            )));
        }
        for i in 1..t.len() {
            if t[i] != t[i - 1] + HOUR_S as u64 {
                return Err(SimError::BadEnv(format!(
                    "non-hourly gap between rows {} and {}",
                    i - 1,
                    i
                )));
            }
        }
        Ok(Self { t, t_out, price })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// One unit's simulated history together with the environment that drove it.
/// `p_ac[i]` is the power held over the interval starting at `t[i]`;
/// `t_in[i]` and `soc[i]` are the state at `t[i]`, with
/// `soc = Φ(band-clamped t_in)` elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub unit_id: usize,
    pub env: EnvSeries,
    pub t_in: Vec<f64>,
    pub p_ac: Vec<f64>,
    pub soc: Vec<f64>,
}

/// Heat flowing indoors through the envelope, kW. Positive when outdoors is
/// warmer.
pub fn heat_gain_1r1c(t_out: f64, t_in: f64, r_c_per_kw: f64) -> f64 {
    debug_assert!(r_c_per_kw > 0.0);
    (t_out - t_in) / r_c_per_kw
}

/// Advances indoor temperature by `dt_s` seconds under constant `t_out` and
/// cooling power `p_kw`, using the closed-form solution of the linear ODE.
pub fn step_exact(t_in: f64, t_out: f64, p_kw: f64, unit: &AcUnitSpec, dt_s: f64) -> f64 {
    debug_assert!(dt_s > 0.0);
    let t_inf = t_out - unit.eta * p_kw * unit.r_c_per_kw;
    let tau = unit.time_constant_s();
    t_inf + (t_in - t_inf) * (-dt_s / tau).exp()
}

/// Same advance with one explicit Euler step. This is the discretization the
/// learned physics layer uses.
pub fn step_euler(t_in: f64, t_out: f64, p_kw: f64, unit: &AcUnitSpec, dt_s: f64) -> f64 {
    debug_assert!(dt_s > 0.0);
    let slope_c_per_s =
        (heat_gain_1r1c(t_out, t_in, unit.r_c_per_kw) - unit.eta * p_kw) * KILO / unit.c_th_j_per_c;
    t_in + dt_s * slope_c_per_s
}

/// Price over the trailing 24 samples (inclusive) min-max normalized to
/// [0,1]; 0.5 when the window is constant.
pub fn normalized_price(price: &[f64], i: usize) -> f64 {
    let lo = i.saturating_sub(23);
    let window = &price[lo..=i];
    let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        (price[i] - min) / (max - min)
    } else {
        0.5
    }
}

/// Power command issued by the price-responsive controller for one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCommand {
    pub t_set_c: f64,
    pub p_kw: f64,
}

/// Price-responsive demand: the setpoint slides linearly across the comfort
/// band with the normalized trailing price (expensive → warm), and power is a
/// proportional command around the setpoint-holding feedforward term,
/// clamped to the unit's rating.
pub fn price_responsive_power(
    env: &EnvSeries,
    unit: &AcUnitSpec,
    step: usize,
    t_now: f64,
) -> PowerCommand {
    let p_norm = normalized_price(&env.price, step);
    let t_set = unit.t_min_c + unit.deadband_c() * p_norm;
    let p_eq = ((env.t_out[step] - t_set) / (unit.eta * unit.r_c_per_kw)).max(0.0);
    let gain = unit.p_max_kw / unit.deadband_c();
    let p_kw = (gain * (t_now - t_set) + p_eq).clamp(0.0, unit.p_max_kw);
    PowerCommand { t_set_c: t_set, p_kw }
}

/// One-step temperature integrator choice. Ground truth uses `Exact` with
/// substeps; `Euler` exists for components that must match the learned
/// physics layer's discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    Exact { substeps: usize },
    Euler,
}

fn advance(t_in: f64, t_out: f64, p_kw: f64, unit: &AcUnitSpec, dt_s: f64, how: Integrator) -> f64 {
    match how {
        Integrator::Exact { substeps } => {
            let n = substeps.max(1);
            let h = dt_s / n as f64;
            let mut t = t_in;
            for _ in 0..n {
                t = step_exact(t, t_out, p_kw, unit, h);
            }
            t
        }
        Integrator::Euler => step_euler(t_in, t_out, p_kw, unit, dt_s),
    }
}

/// Simulates one unit over `env` under the price-responsive controller,
/// starting from `t_init` (must lie inside the comfort band).
pub fn simulate_unit_with(
    unit: &AcUnitSpec,
    env: &EnvSeries,
    t_init: f64,
    integrator: Integrator,
) -> Result<Trajectory, SimError> {
    if !(t_init >= unit.t_min_c && t_init <= unit.t_max_c) {
        return Err(SimError::BadInit {
            t_init,
            t_min: unit.t_min_c,
            t_max: unit.t_max_c,
        });
    }
    let n = env.len();
    let mut t_in = Vec::with_capacity(n);
    let mut p_ac = Vec::with_capacity(n);
    let mut soc = Vec::with_capacity(n);
    let mut t = t_init;
    for i in 0..n {
        let cmd = price_responsive_power(env, unit, i, t);
        t_in.push(t);
        p_ac.push(cmd.p_kw);
        soc.push(soc_from_temp(t, unit.t_min_c, unit.t_max_c).expect("valid band"));
        if i + 1 < n {
            let dt = (env.t[i + 1] - env.t[i]) as f64;
            t = advance(t, env.t_out[i], cmd.p_kw, unit, dt, integrator);
            if !t.is_finite() {
                return Err(SimError::NonFinite { step: i + 1 });
            }
        }
    }
    Ok(Trajectory {
        unit_id: unit.id,
        env: env.clone(),
        t_in,
        p_ac,
        soc,
    })
}

/// Ground-truth simulation: exact integrator, 6 substeps per hour.
pub fn simulate_unit(
    unit: &AcUnitSpec,
    env: &EnvSeries,
    t_init: f64,
) -> Result<Trajectory, SimError> {
    simulate_unit_with(unit, env, t_init, Integrator::Exact { substeps: 6 })
}

impl Trajectory {
    /// Writes `timestamp,T_out,price,T_in,P_ac,soc` rows. Floats are written
    /// in shortest-roundtrip form so a reimport reproduces them exactly.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), SimError> {
        let to_io = |e: csv::Error| SimError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(to_io)?;
        w.write_record(["timestamp", "T_out", "price", "T_in", "P_ac", "soc"])
            .map_err(to_io)?;
        for i in 0..self.env.len() {
            w.write_record(&[
                self.env.t[i].to_string(),
                self.env.t_out[i].to_string(),
                self.env.price[i].to_string(),
                self.t_in[i].to_string(),
                self.p_ac[i].to_string(),
                self.soc[i].to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush().map_err(|e| SimError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn read_csv<P: AsRef<Path>>(path: P, unit_id: usize) -> Result<Self, SimError> {
        let path_str = path.as_ref().display().to_string();
        let io_err = |msg: String| SimError::Io {
            path: path_str.clone(),
            msg,
        };
        let mut r = csv::Reader::from_path(path.as_ref()).map_err(|e| io_err(e.to_string()))?;
        let headers = r.headers().map_err(|e| io_err(e.to_string()))?.clone();
        let expect = ["timestamp", "T_out", "price", "T_in", "P_ac", "soc"];
        for col in expect {
            if !headers.iter().any(|h| h == col) {
                return Err(io_err(format!("missing column `{col}`")));
            }
        }
        let idx = |col: &str| headers.iter().position(|h| h == col).unwrap();
        let (it, io, ip, iti, ipa, is) = (
            idx("timestamp"),
            idx("T_out"),
            idx("price"),
            idx("T_in"),
            idx("P_ac"),
            idx("soc"),
        );
        let (mut t, mut t_out, mut price) = (Vec::new(), Vec::new(), Vec::new());
        let (mut t_in, mut p_ac, mut soc) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| io_err(format!("row {row}: {e}")))?;
            let f = |i: usize| -> Result<f64, SimError> {
                let v: f64 = rec[i]
                    .parse()
                    .map_err(|e| io_err(format!("row {row}: {e}")))?;
                if !v.is_finite() {
                    return Err(io_err(format!("row {row}: non-finite value")));
                }
                Ok(v)
            };
            t.push(
                rec[it]
                    .parse::<u64>()
                    .map_err(|e| io_err(format!("row {row}: {e}")))?,
            );
            t_out.push(f(io)?);
            price.push(f(ip)?);
            t_in.push(f(iti)?);
            p_ac.push(f(ipa)?);
            soc.push(f(is)?);
        }
        let env = EnvSeries::new(t, t_out, price)?;
        Ok(Self {
            unit_id,
            env,
            t_in,
            p_ac,
            soc,
        })
    }
}
