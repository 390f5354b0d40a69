use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line through `(ndpu, qps)` measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ScalingFit {
    pub fn predict(&self, ndpu: f64) -> f64 {
        self.slope * ndpu + self.intercept
    }
}

pub fn project_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 measurements, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("measurements must be finite".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all measurements share one DPU count".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = [64.0, 128.0, 256.0, 512.0].iter().map(|&x| (x, 3.0 * x + 7.0)).collect();
        let f = project_scaling(&pts).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept - 7.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.predict(2560.0) - 7687.0).abs() < 1e-6);
    }

    #[test]
    fn constant_and_errors() {
        let f = project_scaling(&[(1.0, 5.0), (2.0, 5.0), (3.0, 5.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(project_scaling(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn matches_closed_form() {
        let pts = [(1.0, 2.0), (2.0, 2.9), (4.0, 6.1), (8.0, 11.8)];
        let f = project_scaling(&pts).unwrap();
        // normal equations solved by hand
        let (n, sx, sy, sxx, sxy) = pts.iter().fold((0.0, 0.0, 0.0, 0.0, 0.0), |a, p| {
            (a.0 + 1.0, a.1 + p.0, a.2 + p.1, a.3 + p.0 * p.0, a.4 + p.0 * p.1)
        });
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        assert!((f.slope - slope).abs() < 1e-12);
        assert!((f.intercept - intercept).abs() < 1e-12);
        assert!(f.r_squared > 0.99 && f.r_squared <= 1.0);
    }
}
