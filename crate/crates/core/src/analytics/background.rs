//! S parameter and source g²(0) versus laser background fraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::f64::consts::PI;

use super::chsh::{analytic_counts, chsh, ChshSettings};
use super::{fit_fringe, pair_click_probabilities, DetectorPair, RateModel};
use crate::error::{Error, Result};
use crate::source::photon_mode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundRow {
    pub beta: f64,
    pub g2_zero: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSweep {
    pub q: f64,
    pub rows: Vec<BackgroundRow>,
    /// Background fraction where S crosses 2, by linear interpolation.
    pub crossover_beta: Option<f64>,
    pub crossover_g2_zero: Option<f64>,
}

impl BackgroundSweep {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].s < w[0].s)
    }
}

/// Equal-time `<n(n-1)> / <n>²` of one emission bin including background.
pub fn background_g2_zero(model: &RateModel) -> Result<f64> {
    let mode = photon_mode(0);
    let ens = model.bin_ensemble(0, 0.0)?;
    let mut n = 0.0;
    let mut nn = 0.0;
    for (w, s) in &ens {
        n += w * s.mean_photons(&mode)?;
        nn += w * s.normally_ordered_moment(&[mode, mode])?;
    }
    if n <= 0.0 {
        return Err(Error::InvalidParameter("bin holds no light".into()));
    }
    Ok(nn / (n * n))
}

pub fn s_vs_background(
    model: &RateModel,
    betas: &[f64],
    settings: ChshSettings,
) -> Result<BackgroundSweep> {
    if let Some(b) = betas.iter().find(|b| !(0.0..1.0).contains(*b)) {
        return Err(Error::InvalidParameter(format!(
            "beta = {b} outside [0, 1)"
        )));
    }
    let rows: Vec<BackgroundRow> = betas
        .par_iter()
        .map(|&beta| {
            let m = model.with_beta(beta);
            let s = chsh(&analytic_counts(&m, settings)?)?.s;
            let g2_zero = if model.source.q == 0.0 && beta == 0.0 {
                f64::NAN
            } else {
                background_g2_zero(&m)?
            };
            Ok(BackgroundRow { beta, g2_zero, s })
        })
        .collect::<Result<_>>()?;
    let mut crossover_beta = None;
    let mut crossover_g2_zero = None;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.s - 2.0) * (b.s - 2.0) <= 0.0 && a.s != b.s {
            let f = (a.s - 2.0) / (a.s - b.s);
            crossover_beta = Some(a.beta + f * (b.beta - a.beta));
            crossover_g2_zero = Some(a.g2_zero + f * (b.g2_zero - a.g2_zero));
            break;
        }
    }
    Ok(BackgroundSweep {
        q: model.source.q,
        rows,
        crossover_beta,
        crossover_g2_zero,
    })
}

/// Visibility of the exact lag-0 click fringe of `pair` over φA at fixed
/// `phi_b`.
pub fn fringe_visibility(model: &RateModel, phi_b: f64, pair: DetectorPair) -> Result<f64> {
    Ok(pair_fringe_visibilities(model, phi_b)?[pair.index()])
}

fn pair_fringe_visibilities(model: &RateModel, phi_b: f64) -> Result<[f64; 4]> {
    let points = (0..12)
        .map(|k| {
            let pa = phi_b + 2.0 * PI * k as f64 / 12.0;
            Ok((pa, pair_click_probabilities(model, pa, phi_b, 0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut v = [0.0; 4];
    for p in DetectorPair::ALL {
        let pts: Vec<(f64, f64)> = points.iter().map(|(x, c)| (*x, c[p.index()])).collect();
        v[p.index()] = fit_fringe(&pts, phi_b)?.visibility;
    }
    Ok(v)
}

/// Mean click-fringe visibility of the four detector pairs at fixed `phi_b`.
pub fn mean_fringe_visibility(model: &RateModel, phi_b: f64) -> Result<f64> {
    Ok(pair_fringe_visibilities(model, phi_b)?.iter().sum::<f64>() / 4.0)
}

/// Background fraction at which the mean four-pair fringe visibility falls
/// to `target`, by bisection. Visibility decreases with background.
pub fn beta_for_visibility(model: &RateModel, phi_b: f64, target: f64) -> Result<f64> {
    let v = |beta: f64| mean_fringe_visibility(&model.with_beta(beta), phi_b);
    let (mut lo, mut hi) = (0.0, 0.8);
    let (v_lo, v_hi) = (v(lo)?, v(hi)?);
    if !(v_hi..=v_lo).contains(&target) {
        return Err(Error::InvalidParameter(format!(
            "visibility {target} outside the reachable range [{v_hi:.4}, {v_lo:.4}]"
        )));
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if v(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
