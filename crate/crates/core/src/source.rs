//! Emission model of a resonantly driven two-level emitter.
//!
//! Each time bin holds one photonic mode and one emitter ancilla in the pure
//! state
//!
//! ```text
//! sqrt(1 - q) |0>|g> + sqrt(q) e^{iθ} (|0>|e> + |1>|g>) / sqrt(2)
//! ```
//!
//! so the photon probability per bin is `q / 2` and the reduced photonic
//! coherence is `sqrt(q (1 - q) / 2)`. The laser phase `θ` is a number phase
//! on the emitted branch. Laser leakage is modeled as a phase-locked coherent
//! displacement of the same mode.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{make_basis, FockBasis, FockState, ModeLabel, Port, DEFAULT_N_MAX};

/// Planck constant, exact SI value (J s).
pub const PLANCK: f64 = 6.62607015e-34;

/// Largest probability weight a displacement may push beyond the truncation
/// before it is reported as an overflow instead of renormalized away.
pub const TRUNCATION_TOLERANCE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceConfig", into = "SourceConfig")]
pub struct SourceParams {
    /// One-photon branch weight per bin (the emitted branch amplitude squared).
    pub q: f64,
    /// Mean photon number per lifetime; labels the drive strength.
    pub nbar: f64,
    /// Exciton lifetime (s).
    pub t1: f64,
    /// Laser frequency (Hz).
    pub nu: f64,
    /// Laser coherence time (s).
    pub tl: f64,
    /// Laser background fraction of the total mean photon number.
    pub beta: f64,
}

/// On-disk form of [`SourceParams`] with lab units.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub q: f64,
    pub nbar: f64,
    pub t1_ps: f64,
    pub nu_thz: f64,
    pub tl_us: f64,
    pub beta: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceParams::default().into()
    }
}

impl From<SourceParams> for SourceConfig {
    fn from(p: SourceParams) -> Self {
        SourceConfig {
            q: p.q,
            nbar: p.nbar,
            t1_ps: p.t1 * 1e12,
            nu_thz: p.nu / 1e12,
            tl_us: p.tl * 1e6,
            beta: p.beta,
        }
    }
}

impl TryFrom<SourceConfig> for SourceParams {
    type Error = Error;

    fn try_from(c: SourceConfig) -> Result<Self> {
        let p = SourceParams {
            q: c.q,
            nbar: c.nbar,
            t1: c.t1_ps / 1e12,
            nu: c.nu_thz * 1e12,
            tl: c.tl_us / 1e6,
            beta: c.beta,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            q: 0.1,
            nbar: 0.01,
            t1: 67.2e-12,
            nu: 329.14e12,
            tl: 10e-6,
            beta: 0.0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidParameter(format!(
                "q = {} outside [0, 1]",
                self.q
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "beta = {} outside [0, 1)",
                self.beta
            )));
        }
        for (name, v) in [("t1", self.t1), ("nu", self.nu), ("tl", self.tl)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        if !(self.nbar >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nbar = {} is negative",
                self.nbar
            )));
        }
        Ok(())
    }

    /// Checks `T1 < tau < TL`, the regime where bins are independent modes
    /// and the laser phase is constant across one delay.
    pub fn check_delay(&self, tau: f64) -> Result<()> {
        if self.t1 < tau && tau < self.tl {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "need T1 < tau < TL, got T1 = {:e}, tau = {:e}, TL = {:e}",
                self.t1, tau, self.tl
            )))
        }
    }

    /// Photon probability of one RF bin without background.
    pub fn photon_probability(&self) -> f64 {
        self.q / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundModel {
    /// Displacement phase-locked to the drive.
    #[default]
    Coherent,
    /// Displacement with a uniformly random phase (incoherent admixture).
    Incoherent,
}

pub fn photon_mode(bin: i32) -> ModeLabel {
    ModeLabel::photonic(Port::Source, bin)
}

pub fn bin_basis(bin: i32, n_max: u32) -> Result<Arc<FockBasis>> {
    Ok(Arc::new(make_basis(
        vec![photon_mode(bin), ModeLabel::ancilla(bin)],
        n_max,
    )?))
}

/// Pure emission state of one bin with the default truncation.
pub fn bin_state(params: &SourceParams, bin: i32, theta: f64) -> Result<FockState> {
    bin_state_truncated(params, bin, theta, DEFAULT_N_MAX)
}

pub fn bin_state_truncated(
    params: &SourceParams,
    bin: i32,
    theta: f64,
    n_max: u32,
) -> Result<FockState> {
    let q = params.q;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("q = {q} outside [0, 1]")));
    }
    let emitted = Complex64::from_polar((q / 2.0).sqrt(), theta);
    // counts are [photon, ancilla] in basis order
    FockState::from_terms(
        bin_basis(bin, n_max)?,
        [
            (vec![0, 0], Complex64::new((1.0 - q).sqrt(), 0.0)),
            (vec![0, 1], emitted),
            (vec![1, 0], emitted),
        ],
    )
}

/// `<m| D(alpha) |n>` for `m < rows`, `n < cols`, from the normally ordered
/// form `D = e^{-|α|²/2} e^{α a†} e^{-α* a}`.
pub fn displacement_matrix(alpha: Complex64, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let f = |k: usize| crate::fock::factorial(k);
    let pre = (-alpha.norm_sqr() / 2.0).exp();
    DMatrix::from_fn(rows, cols, |m, n| {
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..=m.min(n) {
            let up = alpha.powu((m - k) as u32) / f(m - k) * (f(m) / f(k)).sqrt();
            let down = (-alpha.conj()).powu((n - k) as u32) / f(n - k) * (f(n) / f(k)).sqrt();
            s += up * down;
        }
        s * pre
    })
}

/// Displaces `label` by `alpha`, truncates at the basis `n_max` and
/// renormalizes. Errors when more than [`TRUNCATION_TOLERANCE`] of the weight
/// falls outside the truncation.
pub fn displace(
    state: &FockState,
    label: &ModeLabel,
    alpha: Complex64,
) -> Result<(FockState, f64)> {
    if alpha.norm() == 0.0 {
        return Ok((state.clone(), 0.0));
    }
    let dim = state.basis().n_max() as usize + 1;
    // rows extend past the truncation so the lost weight is measured, not guessed
    let op = displacement_matrix(alpha, dim + 24, dim);
    let (out, _) = state.apply_single_mode(label, &op)?;
    let kept = out.norm_sqr();
    let lost = state.norm_sqr() - kept;
    if lost > TRUNCATION_TOLERANCE {
        return Err(Error::TruncationOverflow {
            photons: state.basis().n_max() + 1,
            n_max: state.basis().n_max(),
        });
    }
    Ok((out.normalized()?, lost.max(0.0)))
}

/// Background amplitude `|α|² = beta / (1 - beta) * <n_RF>` for a bin state.
pub fn background_amplitude(mean_rf_photons: f64, beta: f64, theta: f64) -> Result<Complex64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} outside [0, 1)"
        )));
    }
    Ok(Complex64::from_polar(
        (beta / (1.0 - beta) * mean_rf_photons).sqrt(),
        theta,
    ))
}

/// Adds phase-locked laser leakage to the photonic mode of a bin state.
pub fn add_laser_background(
    state: &FockState,
    bin: i32,
    beta: f64,
    theta: f64,
) -> Result<FockState> {
    if beta == 0.0 {
        return Ok(state.clone());
    }
    let mode = photon_mode(bin);
    let n_rf = state.mean_photons(&mode)?;
    let alpha = background_amplitude(n_rf, beta, theta)?;
    Ok(displace(state, &mode, alpha)?.0)
}

/// Incident power for a mean photon number per lifetime: `P = nbar h nu / T1`.
pub fn power_calibration(nbar: f64, t1: f64, nu: f64) -> Result<f64> {
    for (name, v) in [("nbar", nbar), ("t1", t1), ("nu", nu)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} must be positive"
            )));
        }
    }
    Ok(nbar * PLANCK * nu / t1)
}

/// Weak-drive two-level autocorrelation `(1 - e^{-t/2T1})²`, mixed with a
/// background intensity fraction `beta` of unit-g² light:
/// `g² = 1 - (1 - beta)² (1 - g²_RF)`.
pub fn g2_source(params: &SourceParams, t: f64) -> f64 {
    let rf = (1.0 - (-t.abs() / (2.0 * params.t1)).exp()).powi(2);
    1.0 - (1.0 - params.beta).powi(2) * (1.0 - rf)
}

/// Background fraction giving `g2_zero` at zero delay under [`g2_source`].
pub fn beta_for_g2_zero(g2_zero: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&g2_zero) {
        return Err(Error::InvalidParameter(format!(
            "g2(0) = {g2_zero} outside [0, 1)"
        )));
    }
    Ok(1.0 - (1.0 - g2_zero).sqrt())
}

/// Exact equal-time `<a†² a²> / <a† a>²` of one mode.
pub fn g2_zero(state: &FockState, label: &ModeLabel) -> Result<f64> {
    let n = state.mean_photons(label)?;
    if n <= 0.0 {
        return Err(Error::InvalidParameter(format!("mode {label} is empty")));
    }
    Ok(state.normally_ordered_moment(&[*label, *label])? / (n * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Click;

    fn params(q: f64) -> SourceParams {
        SourceParams {
            q,
            ..SourceParams::default()
        }
    }

    #[test]
    fn limits() {
        let vac = bin_state(&params(0.0), 0, 0.3).unwrap();
        assert_eq!(vac.len(), 1);
        assert_eq!(vac.amplitude(&[0, 0]), Complex64::new(1.0, 0.0));

        let full = bin_state(&params(1.0), 0, 0.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((full.amplitude(&[1, 0]) - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!(full.amplitude(&[0, 0]).norm() < 1e-15);
        let p = full
            .detection_probability(&[(photon_mode(0), Click::Click)])
            .unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(bin_state(&params(1.2), 0, 0.0).is_err());
    }

    #[test]
    fn norm_and_mean_photon_number() {
        for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let s = bin_state(&params(q), 3, 1.1).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            let n = s.mean_photons(&photon_mode(3)).unwrap();
            assert!((n - q / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_coherence_two_ways() {
        let q = 0.02;
        let s = bin_state(&params(q), 0, 0.0).unwrap();
        let rho = s.reduced_density(&photon_mode(0)).unwrap();
        // ancilla trace done by hand on the three amplitudes: only |0g> and
        // |1g> share an ancilla state
        let by_hand = (1.0 - q).sqrt() * (q / 2.0).sqrt();
        let analytic = (q * (1.0 - q) * 0.5).sqrt();
        assert!((rho[(0, 1)].norm() - analytic).abs() < 1e-12);
        assert!((by_hand - analytic).abs() < 1e-15);
    }

    #[test]
    fn zero_background_is_identity() {
        let s = bin_state(&params(0.3), 2, 0.4).unwrap();
        let t = add_laser_background(&s, 2, 0.0, 0.4).unwrap();
        let a: Vec<_> = s.terms().map(|(o, a)| (o.counts().to_vec(), *a)).collect();
        let b: Vec<_> = t.terms().map(|(o, a)| (o.counts().to_vec(), *a)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_coherent_state_moments() {
        // vacuum RF with |α|² = 0.05: truncated coherent state, g2(0) close to 1
        let s = bin_state(&params(0.0), 0, 0.0).unwrap();
        let (c, lost) = displace(&s, &photon_mode(0), Complex64::new(0.05f64.sqrt(), 0.0)).unwrap();
        assert!(lost < 1e-6);
        let n = c.mean_photons(&photon_mode(0)).unwrap();
        assert!((n - 0.05).abs() < 1e-5);
        let g2 = g2_zero(&c, &photon_mode(0)).unwrap();
        assert!((0.9..=1.0).contains(&g2), "g2 = {g2}");
        // larger truncation converges to 1
        let big = bin_state_truncated(&params(0.0), 0, 0.0, 8).unwrap();
        let (c8, _) = displace(&big, &photon_mode(0), Complex64::new(0.05f64.sqrt(), 0.0)).unwrap();
        assert!((g2_zero(&c8, &photon_mode(0)).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn displacement_is_unitary_in_the_limit() {
        let d = displacement_matrix(Complex64::new(0.3, -0.2), 40, 40);
        let p = d.adjoint() * &d;
        for k in 0..10 {
            assert!((p[(k, k)].re - 1.0).abs() < 1e-12);
        }
        assert!(p[(1, 3)].norm() < 1e-12);
    }

    #[test]
    fn background_overflow_is_reported() {
        let s = bin_state(&params(0.2), 0, 0.0).unwrap();
        assert!(matches!(
            add_laser_background(&s, 0, 0.99, 0.0),
            Err(Error::TruncationOverflow { .. })
        ));
    }

    #[test]
    fn calibration() {
        let p = power_calibration(0.01, 67.2e-12, 329.14e12).unwrap();
        assert!((p - 3.2454e-11).abs() < 1e-14, "{p}");
        let p100 = power_calibration(1.0, 67.2e-12, 329.14e12).unwrap();
        assert!((p100 / p - 100.0).abs() < 1e-12);
        let strong = power_calibration(9.81, 67.2e-12, 329.14e12).unwrap();
        assert!((strong - 3.184e-8).abs() < 0.001e-8);
        assert!(power_calibration(0.0, 67.2e-12, 329.14e12).is_err());
        assert!(power_calibration(0.01, -1.0, 329.14e12).is_err());
    }

    #[test]
    fn g2_curve() {
        let p = params(0.1);
        assert_eq!(g2_source(&p, 0.0), 0.0);
        assert!((g2_source(&p, 1e-6) - 1.0).abs() < 1e-12);
        let mut last = -1.0;
        for k in 0..200 {
            let g = g2_source(&p, k as f64 * 5e-12);
            assert!(g >= last && g <= 1.0);
            last = g;
        }
        let beta = beta_for_g2_zero(0.037).unwrap();
        let weak = SourceParams { beta, ..p };
        assert!((g2_source(&weak, 0.0) - 0.037).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip_uses_lab_units() {
        let json = r#"{"q":0.1,"nbar":0.01,"t1_ps":67.2,"nu_thz":329.14,"tl_us":10.0,"beta":0.0}"#;
        let p: SourceParams = serde_json::from_str(json).unwrap();
        assert!((p.t1 - 67.2e-12).abs() < 1e-24);
        assert!(serde_json::from_str::<SourceParams>(r#"{"q":0.1,"bogus":1}"#).is_err());
        assert!(serde_json::from_str::<SourceParams>(r#"{"q":2.0}"#).is_err());
        assert!(p.check_delay(1.07e-9).is_ok());
        assert!(p.check_delay(20e-6).is_err());
    }
}
