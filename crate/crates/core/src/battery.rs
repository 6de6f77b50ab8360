//! Virtual-battery view of an air-conditioned space.
//!
//! Indoor temperature maps linearly onto a state of charge: the cool end of
//! the comfort band is "full", the warm end "empty". Under the 1R-1C model
//! this view is exact: a fixed capacity `C_f = C_th·(T_max − T_min)` and a
//! time-varying loss `P_loss(t) = (T_out − T_in)/R` make the battery
//! recursion reproduce the thermal one step for step.

use crate::fleet::AcUnitSpec;
use crate::KILO;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("degenerate comfort band: T_min {t_min} must be < T_max {t_max}")]
    DegenerateBand { t_min: f64, t_max: f64 },
    #[error("state of charge {soc} outside [0, 1]")]
    SocOutOfRange { soc: f64 },
}

/// Identified battery parameters for one unit. `c_f_j` is time-invariant;
/// `p_loss_kw` is a per-step series and may go negative when heat flows
/// outward. `gamma` is the learned sensitivity scalar; the analytic oracle
/// leaves it unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbParams {
    pub unit_id: usize,
    #[serde(rename = "C_f_J")]
    pub c_f_j: f64,
    pub gamma: Option<f64>,
    pub p_loss_kw: Vec<f64>,
}

/// Maps indoor temperature to state of charge in [0,1]. The temperature is
/// clamped to the band first, so saturation outside the band is total.
pub fn soc_from_temp(t_in: f64, t_min: f64, t_max: f64) -> Result<f64, BatteryError> {
    if !(t_min < t_max) {
        return Err(BatteryError::DegenerateBand { t_min, t_max });
    }
    let t = t_in.clamp(t_min, t_max);
    Ok((t_max - t) / (t_max - t_min))
}

/// Inverse mapping: state of charge back to indoor temperature.
pub fn temp_from_soc(soc: f64, t_min: f64, t_max: f64) -> Result<f64, BatteryError> {
    if !(t_min < t_max) {
        return Err(BatteryError::DegenerateBand { t_min, t_max });
    }
    if !(0.0..=1.0).contains(&soc) {
        return Err(BatteryError::SocOutOfRange { soc });
    }
    Ok(t_max - soc * (t_max - t_min))
}

/// Analytic battery parameters implied by a unit's thermal constants and an
/// observed trajectory. The capacity depends only on the constants; the loss
/// series is the instantaneous envelope heat gain.
pub fn oracle_params(unit: &AcUnitSpec, t_out: &[f64], t_in: &[f64]) -> VbParams {
    assert_eq!(t_out.len(), t_in.len());
    let p_loss_kw = t_out
        .iter()
        .zip(t_in)
        .map(|(o, i)| (o - i) / unit.r_c_per_kw)
        .collect();
    VbParams {
        unit_id: unit.id,
        c_f_j: unit.c_th_j_per_c * unit.deadband_c(),
        gamma: None,
        p_loss_kw,
    }
}

/// One battery step: charge with cooling power, drain with loss, clamp to
/// the physical range. Powers in kW, capacity in J.
pub fn vb_step(soc: f64, p_ac_kw: f64, p_loss_kw: f64, c_f_j: f64, eta: f64, dt_s: f64) -> f64 {
    debug_assert!(c_f_j > 0.0 && dt_s > 0.0);
    (soc + dt_s * (eta * p_ac_kw - p_loss_kw) * KILO / c_f_j).clamp(0.0, 1.0)
}

/// Rolls `vb_step` over aligned power and loss series. `p_ac[i]` and
/// `p_loss[i]` drive the step from state i to state i+1; returns the states
/// after each step (same length as the inputs).
pub fn vb_rollout(
    s0: f64,
    p_ac_kw: &[f64],
    p_loss_kw: &[f64],
    c_f_j: f64,
    eta: f64,
    dt_s: f64,
) -> Vec<f64> {
    assert_eq!(p_ac_kw.len(), p_loss_kw.len());
    let mut s = s0;
    p_ac_kw
        .iter()
        .zip(p_loss_kw)
        .map(|(&p, &l)| {
            s = vb_step(s, p, l, c_f_j, eta, dt_s);
            s
        })
        .collect()
}
