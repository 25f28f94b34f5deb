//! g²(Δt) maps over the analyzer phase of one side.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pair_rates, DetectorPair, RateModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divided by the largest value in the map.
    Maximum,
    /// Divided by the uncorrelated (`|lag| >= 2`) rate at the same phases.
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub phi_a: Vec<f64>,
    pub lags: Vec<i32>,
    /// `values[lag index][phase index]`.
    pub values: Vec<Vec<f64>>,
    pub phi_b: f64,
    pub q: f64,
    pub beta: f64,
    pub pair: DetectorPair,
    pub normalization: Normalization,
}

/// Map of the `pair` coincidence rate over `phi_a` and integer `lags`.
pub fn g2_map(
    model: &RateModel,
    phi_a: &[f64],
    phi_b: f64,
    lags: &[i32],
    pair: DetectorPair,
    normalization: Normalization,
) -> Result<CorrelationMap> {
    if phi_a.is_empty() || lags.is_empty() {
        return Err(Error::InvalidParameter("empty map grid".into()));
    }
    let raw: Vec<Vec<f64>> = lags
        .par_iter()
        .map(|&lag| {
            phi_a
                .iter()
                .map(|&pa| Ok(pair_rates(model, pa, phi_b, lag)?[pair.index()]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let values = match normalization {
        Normalization::Maximum => {
            let max = raw.iter().flatten().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::InvalidParameter("map has no coincidences".into()));
            }
            raw.iter()
                .map(|r| r.iter().map(|v| v / max).collect())
                .collect()
        }
        Normalization::Baseline => {
            let base: Vec<f64> = phi_a
                .iter()
                .map(|&pa| Ok(pair_rates(model, pa, phi_b, 2)?[pair.index()]))
                .collect::<Result<_>>()?;
            if base.iter().any(|&b| b <= 0.0) {
                return Err(Error::InvalidParameter(
                    "baseline vanishes on the grid".into(),
                ));
            }
            raw.iter()
                .map(|r| r.iter().zip(&base).map(|(v, b)| v / b).collect())
                .collect()
        }
    };
    Ok(CorrelationMap {
        phi_a: phi_a.to_vec(),
        lags: lags.to_vec(),
        values,
        phi_b,
        q: model.source.q,
        beta: model.source.beta,
        pair,
        normalization,
    })
}

impl CorrelationMap {
    pub fn row(&self, lag: i32) -> Option<&[f64]> {
        self.lags
            .iter()
            .position(|&l| l == lag)
            .map(|i| self.values[i].as_slice())
    }

    /// Display profile along Δt for one phase column: each integer-lag
    /// weight spread by the two-sided envelope `exp(-|t| / T1)`, with `t`
    /// in units of the delay. Returns `(dt, value)` on `samples_per_bin`
    /// points per delay.
    pub fn fine_profile(
        &self,
        phase_index: usize,
        t1_over_tau: f64,
        samples_per_bin: usize,
    ) -> Result<Vec<(f64, f64)>> {
        if phase_index >= self.phi_a.len() || samples_per_bin == 0 || !(t1_over_tau > 0.0) {
            return Err(Error::InvalidParameter("bad fine-profile request".into()));
        }
        let lo = *self.lags.iter().min().unwrap() as f64 - 0.5;
        let hi = *self.lags.iter().max().unwrap() as f64 + 0.5;
        let n = ((hi - lo) * samples_per_bin as f64).round() as usize;
        Ok((0..=n)
            .map(|k| {
                let dt = lo + k as f64 / samples_per_bin as f64;
                let v = self
                    .lags
                    .iter()
                    .zip(&self.values)
                    .map(|(&l, row)| {
                        row[phase_index] * (-(dt - l as f64).abs() / t1_over_tau).exp()
                    })
                    .sum();
                (dt, v)
            })
            .collect())
    }

    /// Long-format CSV `phi_a,dt,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phi_a", "dt", "value"])?;
        for (lag, row) in self.lags.iter().zip(&self.values) {
            for (pa, v) in self.phi_a.iter().zip(row) {
                w.write_record([pa.to_string(), lag.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("map is always serializable")
    }
}
