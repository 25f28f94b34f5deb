//! Exact correlation observables of the Franson setup.
//!
//! Rates are normally ordered intensity moments of the detector modes, the
//! low-efficiency limit of click statistics: singles `<n>` and coincidences
//! `<:n_A n_B:>` per bin. Click probabilities from the same window states are
//! available for comparison with sampled data.
//!
//! A coincidence between detector bins `t` and `t + k` only involves source
//! bins `t - 1`, `t`, `t + k - 1` and `t + k`, so every lag is evaluated on a
//! window of at most four bins. All lags with `|k| >= 2` share the same
//! disjoint-window value.

mod background;
mod chsh;
mod fringe;
mod map;

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Click, FockState};
use crate::interferometer::{detector, franson_inputs, franson_network, FransonConfig};
use crate::source::{bin_state_truncated, displace, photon_mode, BackgroundModel, SourceParams};

pub use background::{
    background_g2_zero, beta_for_visibility, fringe_visibility, mean_fringe_visibility,
    s_vs_background, BackgroundRow, BackgroundSweep,
};
pub use chsh::{
    analytic_counts, chsh, chsh_from_visibility, counts_for_visibility, ChshCounts, ChshResult,
    ChshSettings, TSIRELSON,
};
pub use fringe::{fit_fringe, FringeFit};
pub use map::{g2_map, CorrelationMap, Normalization};

/// Detector pair `A{a} B{b}` with ports 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorPair {
    pub a: u8,
    pub b: u8,
}

impl DetectorPair {
    pub const A1B1: DetectorPair = DetectorPair { a: 1, b: 1 };
    pub const A1B2: DetectorPair = DetectorPair { a: 1, b: 2 };
    pub const A2B1: DetectorPair = DetectorPair { a: 2, b: 1 };
    pub const A2B2: DetectorPair = DetectorPair { a: 2, b: 2 };
    /// Order used by every four-pair array in this module.
    pub const ALL: [DetectorPair; 4] = [Self::A1B1, Self::A1B2, Self::A2B1, Self::A2B2];

    pub fn index(&self) -> usize {
        ((self.a - 1) * 2 + (self.b - 1)) as usize
    }

    /// +1 for equal ports, -1 otherwise.
    pub fn sign(&self) -> f64 {
        if self.a == self.b {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for DetectorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}B{}", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub source: SourceParams,
    pub background: BackgroundModel,
    /// Per-bin photon truncation when background is present.
    pub bin_n_max: u32,
    /// Photon truncation of a whole window when background is present.
    pub window_n_max: u32,
    pub splitter_transmission: f64,
    pub amzi_transmission: f64,
}

impl RateModel {
    pub fn new(source: SourceParams) -> Self {
        RateModel {
            source,
            background: BackgroundModel::Coherent,
            bin_n_max: 3,
            window_n_max: 4,
            splitter_transmission: 0.5,
            amzi_transmission: 0.5,
        }
    }

    pub fn ideal(q: f64) -> Self {
        Self::new(SourceParams {
            q,
            ..SourceParams::default()
        })
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.source.beta = beta;
        self
    }

    pub fn with_background(mut self, model: BackgroundModel) -> Self {
        self.background = model;
        self
    }

    fn has_background(&self) -> bool {
        self.source.beta > 0.0
    }

    fn config(&self, phi_a: f64, phi_b: f64) -> FransonConfig {
        FransonConfig {
            phi_a,
            phi_b,
            n_bins: 2,
            splitter_transmission: self.splitter_transmission,
            amzi_transmission: self.amzi_transmission,
        }
    }

    /// Ensemble of `(weight, bin state)` for one emission bin.
    pub fn bin_ensemble(&self, bin: i32, theta: f64) -> Result<Vec<(f64, FockState)>> {
        if !self.has_background() {
            return Ok(vec![(
                1.0,
                bin_state_truncated(&self.source, bin, theta, 1)?,
            )]);
        }
        let rf = bin_state_truncated(&self.source, bin, theta, self.bin_n_max)?;
        let mode = photon_mode(bin);
        let n_rf = rf.mean_photons(&mode)?;
        let amp = crate::source::background_amplitude(n_rf, self.source.beta, 0.0)?.re;
        match self.background {
            BackgroundModel::Coherent => {
                let (s, _) = displace(&rf, &mode, Complex64::from_polar(amp, theta))?;
                Ok(vec![(1.0, s)])
            }
            BackgroundModel::Incoherent => {
                // k equally spaced phases remove every coherence between photon
                // numbers that differ by less than k
                let k = self.bin_n_max as usize + 1;
                (0..k)
                    .map(|j| {
                        let phase = theta + 2.0 * PI * j as f64 / k as f64;
                        let (s, _) = displace(&rf, &mode, Complex64::from_polar(amp, phase))?;
                        Ok((1.0 / k as f64, s))
                    })
                    .collect()
            }
        }
    }

    /// Output ensemble of the Franson network for source `bins` (other bins
    /// in the range are vacuum), at constant laser phase.
    pub fn window(&self, phi_a: f64, phi_b: f64, bins: &[i32]) -> Result<Vec<(f64, FockState)>> {
        let lo = *bins
            .iter()
            .min()
            .ok_or(Error::InvalidParameter("empty window".into()))?;
        let hi = *bins.iter().max().unwrap();
        let range = lo..hi + 1;
        let net = franson_network(&self.config(phi_a, phi_b), range.clone())?;
        let inputs = franson_inputs(range);
        let mut joint: Vec<(f64, FockState)> = vec![];
        for &b in bins {
            let ens = self.bin_ensemble(b, 0.0)?;
            joint = if joint.is_empty() {
                ens
            } else {
                let mut next = Vec::with_capacity(joint.len() * ens.len());
                for (w, s) in &joint {
                    for (v, e) in &ens {
                        next.push((w * v, s.tensor(e)?));
                    }
                }
                next
            };
        }
        joint
            .into_iter()
            .map(|(w, s)| {
                let s = if self.has_background() && s.basis().n_max() > self.window_n_max {
                    s.truncate(self.window_n_max)?.0
                } else {
                    s
                };
                Ok((w, net.apply(&s.with_modes(&inputs)?)?))
            })
            .collect()
    }
}

/// Detector bins and source window for a lag; `|lag| >= 2` is evaluated at 2.
pub fn lag_window(lag: i32) -> (i32, i32, Vec<i32>) {
    let k = lag.clamp(-2, 2);
    let (ta, tb) = if k >= 0 { (1, 1 + k) } else { (1 - k, 1) };
    let mut bins = vec![ta - 1, ta, tb - 1, tb];
    bins.sort_unstable();
    bins.dedup();
    (ta, tb, bins)
}

fn ensemble_mean<F>(ens: &[(f64, FockState)], f: F) -> Result<f64>
where
    F: Fn(&FockState) -> Result<f64>,
{
    ens.iter().map(|(w, s)| Ok(w * f(s)?)).sum()
}

/// `<:n_A n_B:>` for all four detector pairs at `lag` (B later than A for
/// positive lag), in [`DetectorPair::ALL`] order.
pub fn pair_rates(model: &RateModel, phi_a: f64, phi_b: f64, lag: i32) -> Result<[f64; 4]> {
    let (ta, tb, bins) = lag_window(lag);
    let ens = model.window(phi_a, phi_b, &bins)?;
    let mut out = [0.0; 4];
    for p in DetectorPair::ALL {
        out[p.index()] = ensemble_mean(&ens, |s| {
            s.normally_ordered_moment(&[detector(0, p.a, ta), detector(1, p.b, tb)])
        })?;
    }
    Ok(out)
}

/// Coincidence rate per bin of one detector pair at an integer lag.
pub fn coincidence_rate(
    model: &RateModel,
    phi_a: f64,
    phi_b: f64,
    lag: i32,
    pair: DetectorPair,
) -> Result<f64> {
    check_pair(pair)?;
    Ok(pair_rates(model, phi_a, phi_b, lag)?[pair.index()])
}

/// Joint click probability per bin for all four pairs at `lag`.
pub fn pair_click_probabilities(
    model: &RateModel,
    phi_a: f64,
    phi_b: f64,
    lag: i32,
) -> Result<[f64; 4]> {
    let (ta, tb, bins) = lag_window(lag);
    let ens = model.window(phi_a, phi_b, &bins)?;
    let mut out = [0.0; 4];
    for p in DetectorPair::ALL {
        out[p.index()] = ensemble_mean(&ens, |s| {
            s.detection_probability(&[
                (detector(0, p.a, ta), Click::Click),
                (detector(1, p.b, tb), Click::Click),
            ])
        })?;
    }
    Ok(out)
}

fn check_pair(pair: DetectorPair) -> Result<()> {
    if matches!(pair.a, 1 | 2) && matches!(pair.b, 1 | 2) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("no detector pair {pair}")))
    }
}

/// Mean photon number per bin at detector `port` of `side` (0 = A, 1 = B).
pub fn singles_rate(model: &RateModel, side: u8, port: u8, phi: f64) -> Result<f64> {
    if side > 1 || !matches!(port, 1 | 2) {
        return Err(Error::InvalidParameter(format!(
            "no detector {side}/{port}"
        )));
    }
    let (pa, pb) = if side == 0 { (phi, 0.0) } else { (0.0, phi) };
    let ens = model.window(pa, pb, &[0, 1])?;
    ensemble_mean(&ens, |s| s.mean_photons(&detector(side, port, 1)))
}

/// Click probability per bin at detector `port` of `side`.
pub fn singles_click_probability(model: &RateModel, side: u8, port: u8, phi: f64) -> Result<f64> {
    if side > 1 || !matches!(port, 1 | 2) {
        return Err(Error::InvalidParameter(format!(
            "no detector {side}/{port}"
        )));
    }
    let (pa, pb) = if side == 0 { (phi, 0.0) } else { (0.0, phi) };
    let ens = model.window(pa, pb, &[0, 1])?;
    ensemble_mean(&ens, |s| {
        s.detection_probability(&[(detector(side, port, 1), Click::Click)])
    })
}

/// Closed-form lag-0 coincidence rate without background.
pub fn lag0_closed_form(q: f64, phi_a: f64, phi_b: f64, pair: DetectorPair) -> f64 {
    q * q / 128.0 * (1.0 + pair.sign() * (phi_a - phi_b).cos())
}

/// Closed-form singles rate without background, visibility `1 - q`.
pub fn singles_closed_form(q: f64, port: u8, phi: f64) -> f64 {
    let s = if port == 1 { 1.0 } else { -1.0 };
    q / 8.0 * (1.0 + s * (1.0 - q) * phi.cos())
}

/// Closed-form baseline (`|lag| >= 2`) coincidence rate without background.
pub fn baseline_closed_form(q: f64, phi_a: f64, phi_b: f64, pair: DetectorPair) -> f64 {
    singles_closed_form(q, pair.a, phi_a) * singles_closed_form(q, pair.b, phi_b)
}
