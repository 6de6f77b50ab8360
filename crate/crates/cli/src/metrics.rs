//! Scalar evaluation metrics: RMSE, coefficient of determination, and the
//! least-squares slope used for the power-loss consistency analysis.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {pred} predictions vs {truth} truths")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty series")]
    Empty,
    #[error("R² undefined: truth series is constant")]
    ConstantTruth,
    #[error("slope undefined: abscissa is constant")]
    ConstantAbscissa,
}

fn paired(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            pred: a.len(),
            truth: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Root-mean-square error between paired series.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    paired(pred, truth)?;
    let sq: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// Coefficient of determination, 1 − SSE/SST. Can be arbitrarily negative
/// for bad predictors; a constant truth series has no variance to explain.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    paired(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(MetricError::ConstantTruth);
    }
    let sse: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Slope of the least-squares line y = a + b·x, i.e. cov(x,y)/var(x).
pub fn lsq_slope(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    paired(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if var == 0.0 {
        return Err(MetricError::ConstantAbscissa);
    }
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let t = [0.1, 0.4, 0.9, 0.3];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let t = [1.0, 2.0, 3.0, 6.0];
        let m = t.iter().sum::<f64>() / 4.0;
        let p = [m; 4];
        assert!(r2(&p, &t).unwrap().abs() < 1e-15);
    }

    #[test]
    fn constant_offset_rmse() {
        let t = [0.2, 0.5, 0.8];
        let p: Vec<f64> = t.iter().map(|x| x + 0.1).collect();
        assert!((rmse(&p, &t).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(MetricError::LengthMismatch { pred: 1, truth: 2 })
        );
        assert_eq!(rmse(&[], &[]), Err(MetricError::Empty));
        assert_eq!(r2(&[1.0, 1.0], &[2.0, 2.0]), Err(MetricError::ConstantTruth));
        assert_eq!(
            lsq_slope(&[3.0, 3.0], &[1.0, 2.0]),
            Err(MetricError::ConstantAbscissa)
        );
    }

    #[test]
    fn slope_recovers_exact_line() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.25 * v).collect();
        assert!((lsq_slope(&x, &y).unwrap() + 0.25).abs() < 1e-14);
    }

    #[test]
    fn slope_of_symmetric_noise_is_damped() {
        // equal and opposite residuals cancel in the covariance
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0 + 0.1, 0.5 - 0.1, 1.0 + 0.1, 1.5 - 0.1];
        let b = lsq_slope(&x, &y).unwrap();
        assert!((b - 0.46).abs() < 1e-12, "slope {b}");
    }

    #[test]
    fn r2_is_negative_for_worse_than_mean() {
        let t = [0.0, 1.0];
        let p = [2.0, -1.0];
        assert!(r2(&p, &t).unwrap() < 0.0);
    }
}
