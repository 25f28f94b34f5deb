//! Detector non-idealities applied to ideal click tags.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::{first_unsorted, TimeTagStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Standard deviation of the Gaussian timing jitter.
    pub jitter_ps: f64,
    pub dark_rate_hz: f64,
    pub dead_time_ps: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 1.0,
            jitter_ps: 0.0,
            dark_rate_hz: 0.0,
            dead_time_ps: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter(format!(
                "efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        if !(self.jitter_ps >= 0.0) || !self.jitter_ps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "jitter {} ps",
                self.jitter_ps
            )));
        }
        if !(self.dark_rate_hz >= 0.0) || !self.dark_rate_hz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dark rate {} Hz",
                self.dark_rate_hz
            )));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        *self == DetectorConfig::default()
    }
}

/// Efficiency thinning, Gaussian jitter with re-sort, Poisson dark counts
/// uniform over `[0, duration_ps)`, then dead-time pruning that keeps the
/// first tag of every burst. The result is strictly increasing.
pub fn apply_detector_model(
    tags: &[u64],
    cfg: &DetectorConfig,
    duration_ps: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TimeTagStream> {
    cfg.validate()?;
    if let Some(index) = first_unsorted(tags) {
        return Err(Error::Unsorted { index });
    }
    if cfg.is_ideal() {
        return Ok(TimeTagStream::new_unchecked(tags.to_vec()));
    }
    let mut out: Vec<u64> = if cfg.efficiency < 1.0 {
        tags.iter()
            .copied()
            .filter(|_| rng.random::<f64>() < cfg.efficiency)
            .collect()
    } else {
        tags.to_vec()
    };
    if cfg.jitter_ps > 0.0 {
        let normal = Normal::new(0.0, cfg.jitter_ps).expect("validated jitter");
        for t in out.iter_mut() {
            let shifted = *t as f64 + normal.sample(rng);
            *t = shifted.round().max(0.0) as u64;
        }
        out.sort_unstable();
    }
    if cfg.dark_rate_hz > 0.0 && duration_ps > 0 {
        let mean = cfg.dark_rate_hz * duration_ps as f64 * 1e-12;
        let n = Poisson::new(mean)
            .map_err(|e| Error::InvalidParameter(format!("dark count mean {mean}: {e}")))?
            .sample(rng) as usize;
        let mut dark: Vec<u64> = (0..n).map(|_| rng.random_range(0..duration_ps)).collect();
        dark.sort_unstable();
        out = merge(&out, &dark);
    }
    let mut kept = Vec::with_capacity(out.len());
    for t in out {
        match kept.last() {
            Some(&last) if t <= last || t - last < cfg.dead_time_ps => {}
            _ => kept.push(t),
        }
    }
    Ok(TimeTagStream::new_unchecked(kept))
}

fn merge(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
