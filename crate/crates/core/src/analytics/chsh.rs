//! CHSH correlation functions and the S parameter.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

use serde::{Deserialize, Serialize};

use super::{pair_rates, DetectorPair, RateModel};
use crate::error::{Error, Result};

pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// Analyzer phases `a, a'` for Alice and `b, b'` for Bob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        ChshSettings {
            a: 0.0,
            a_prime: FRAC_PI_2,
            b: FRAC_PI_4,
            b_prime: 3.0 * FRAC_PI_4,
        }
    }
}

impl ChshSettings {
    /// Phase pairs in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    pub fn shifted(&self, c: f64) -> Self {
        ChshSettings {
            a: self.a + c,
            a_prime: self.a_prime + c,
            b: self.b + c,
            b_prime: self.b_prime + c,
        }
    }
}

/// Sixteen coincidence counts: `counts[setting][pair]` with settings in
/// [`ChshSettings::pairs`] order and pairs in [`DetectorPair::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshCounts {
    pub settings: ChshSettings,
    pub counts: [[f64; 4]; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub e: [f64; 4],
    pub e_variance: [f64; 4],
    pub s: f64,
    pub sigma_s: f64,
    pub counts: [[f64; 4]; 4],
}

impl ChshResult {
    /// Standard deviations by which S exceeds the local bound 2.
    pub fn violation_sigmas(&self) -> f64 {
        (self.s - 2.0) / self.sigma_s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("CHSH result is always serializable")
    }
}

const SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
const TERM: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

pub fn chsh(input: &ChshCounts) -> Result<ChshResult> {
    let mut e = [0.0; 4];
    let mut var = [0.0; 4];
    for (k, n) in input.counts.iter().enumerate() {
        if n.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "negative or non-finite count in setting {k}"
            )));
        }
        let total: f64 = n.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "no coincidences in setting {k}"
            )));
        }
        e[k] = n.iter().zip(SIGNS).map(|(c, s)| c * s).sum::<f64>() / total;
        var[k] = n
            .iter()
            .zip(SIGNS)
            .map(|(c, s)| c * (s - e[k]).powi(2))
            .sum::<f64>()
            / (total * total);
    }
    let signed: f64 = e.iter().zip(TERM).map(|(e, t)| e * t).sum();
    Ok(ChshResult {
        settings: input.settings,
        e,
        e_variance: var,
        s: signed.abs(),
        sigma_s: var.iter().sum::<f64>().sqrt(),
        counts: input.counts,
    })
}

/// Expected counts `total/4 · (1 ± V cos(φA - φB))` per pair.
pub fn counts_for_visibility(settings: ChshSettings, visibility: f64, total: f64) -> ChshCounts {
    let mut counts = [[0.0; 4]; 4];
    for (k, (pa, pb)) in settings.pairs().into_iter().enumerate() {
        for p in DetectorPair::ALL {
            counts[k][p.index()] = total / 4.0 * (1.0 + p.sign() * visibility * (pa - pb).cos());
        }
    }
    ChshCounts { settings, counts }
}

/// S for fringes of visibility `visibility` at the given settings.
pub fn chsh_from_visibility(settings: ChshSettings, visibility: f64) -> Result<f64> {
    Ok(chsh(&counts_for_visibility(settings, visibility, 1.0))?.s)
}

/// Exact lag-0 rates of `model` at each setting, as CHSH input.
pub fn analytic_counts(model: &RateModel, settings: ChshSettings) -> Result<ChshCounts> {
    let mut counts = [[0.0; 4]; 4];
    for (k, (pa, pb)) in settings.pairs().into_iter().enumerate() {
        counts[k] = pair_rates(model, pa, pb, 0)?;
    }
    Ok(ChshCounts { settings, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_counts_reach_tsirelson() {
        let s = chsh_from_visibility(ChshSettings::default(), 1.0).unwrap();
        assert!((s - TSIRELSON).abs() < 1e-12);
    }

    #[test]
    fn visibility_scales_s() {
        let s = chsh_from_visibility(ChshSettings::default(), 0.928).unwrap();
        assert!((s - 2.0 * SQRT_2 * 0.928).abs() < 1e-12);
    }

    #[test]
    fn uniform_counts_give_zero() {
        let c = ChshCounts {
            settings: ChshSettings::default(),
            counts: [[10.0; 4]; 4],
        };
        assert_eq!(chsh(&c).unwrap().s, 0.0);
    }

    #[test]
    fn equal_and_opposite_phases() {
        let st = ChshSettings {
            a: 0.4,
            a_prime: 0.4,
            b: 0.4,
            b_prime: 0.4 + std::f64::consts::PI,
        };
        let r = chsh(&counts_for_visibility(st, 1.0, 100.0)).unwrap();
        assert!((r.e[0] - 1.0).abs() < 1e-9);
        assert!((r.e[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn variance_matches_finite_difference() {
        let c = counts_for_visibility(ChshSettings::default(), 0.9, 4000.0);
        let r = chsh(&c).unwrap();
        // Var E = Σ N_i (dE/dN_i)², derivative by central differences
        for k in 0..4 {
            let mut var = 0.0;
            for i in 0..4 {
                let h = 1e-3;
                let mut up = c.clone();
                let mut dn = c.clone();
                up.counts[k][i] += h;
                dn.counts[k][i] -= h;
                let d = (chsh(&up).unwrap().e[k] - chsh(&dn).unwrap().e[k]) / (2.0 * h);
                var += c.counts[k][i] * d * d;
            }
            assert!((var - r.e_variance[k]).abs() < 1e-9 * var.max(1e-12));
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let mut c = counts_for_visibility(ChshSettings::default(), 0.5, 10.0);
        c.counts[2] = [0.0; 4];
        assert!(chsh(&c).is_err());
        c.counts[2] = [-1.0, 1.0, 1.0, 1.0];
        assert!(chsh(&c).is_err());
    }
}
