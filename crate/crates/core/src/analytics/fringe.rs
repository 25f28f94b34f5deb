//! Least-squares fit of `N1 [1 + cos(φA - φB - δ)] + N2`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub n1: f64,
    pub n2: f64,
    /// Phase offset δ of the fringe maximum relative to `φA = φB`.
    pub offset: f64,
    pub visibility: f64,
    pub visibility_sigma: f64,
    /// Covariance of the linear coefficients `(cos, sin, constant)`.
    pub covariance: [[f64; 3]; 3],
    pub residual_rms: f64,
}

/// Fits `points` of `(φA, count)` at fixed `phi_b`. The model is linear in
/// `a cos x + b sin x + c` with `x = φA - φB`, so `N1 = hypot(a, b)` and
/// `N2 = c - N1`; `V = N1 / c`.
pub fn fit_fringe(points: &[(f64, f64)], phi_b: f64) -> Result<FringeFit> {
    if points.len() < 5 {
        return Err(Error::DegenerateFit(format!(
            "{} points, need at least 5",
            points.len()
        )));
    }
    let mut phases: Vec<f64> = points
        .iter()
        .map(|(p, _)| (p - phi_b).rem_euclid(2.0 * PI))
        .collect();
    phases.sort_by(|a, b| a.total_cmp(b));
    let widest = phases
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(2.0 * PI - (phases[phases.len() - 1] - phases[0]), f64::max);
    if !(widest < PI) {
        return Err(Error::DegenerateFit("phases do not span a period".into()));
    }

    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for &(pa, n) in points {
        if !n.is_finite() {
            return Err(Error::DegenerateFit("non-finite count".into()));
        }
        let x = pa - phi_b;
        let row = Vector3::new(x.cos(), x.sin(), 1.0);
        xtx += row * row.transpose();
        xty += row * n;
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let beta = inv * xty;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if !(c > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "mean level {c} is not positive"
        )));
    }
    let rss: f64 = points
        .iter()
        .map(|&(pa, n)| {
            let x = pa - phi_b;
            (n - (a * x.cos() + b * x.sin() + c)).powi(2)
        })
        .sum();
    let dof = points.len() as f64 - 3.0;
    let cov = inv * (rss / dof);

    let n1 = a.hypot(b);
    let v = n1 / c;
    let grad = if n1 > 0.0 {
        Vector3::new(a / (n1 * c), b / (n1 * c), -n1 / (c * c))
    } else {
        // amplitude gradient is undefined at zero; use the isotropic bound
        let s = ((cov[(0, 0)] + cov[(1, 1)]) / 2.0).sqrt() / c;
        return Ok(FringeFit {
            n1,
            n2: c,
            offset: 0.0,
            visibility: 0.0,
            visibility_sigma: s,
            covariance: cov.into(),
            residual_rms: (rss / points.len() as f64).sqrt(),
        });
    };
    let var_v = (grad.transpose() * cov * grad)[(0, 0)];
    Ok(FringeFit {
        n1,
        n2: c - n1,
        offset: b.atan2(a),
        visibility: v,
        visibility_sigma: var_v.max(0.0).sqrt(),
        covariance: cov.into(),
        residual_rms: (rss / points.len() as f64).sqrt(),
    })
}
