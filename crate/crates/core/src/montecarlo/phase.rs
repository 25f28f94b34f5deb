//! Laser phase diffusion across bins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Per-bin increment standard deviation: variance `2 tau / TL`, so that
/// `<e^{i(θ_{t+1} - θ_t)}> = e^{-tau/TL}`.
pub fn increment_sigma(tl: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !(tl > tau) {
        return Err(Error::InvalidParameter(format!(
            "phase walk needs TL > tau > 0, got TL = {tl:e}, tau = {tau:e}"
        )));
    }
    Ok((2.0 * tau / tl).sqrt())
}

/// Streaming random walk `θ_{t+1} = θ_t + N(0, σ²)` starting at 0.
#[derive(Clone, Debug)]
pub struct PhaseWalk {
    rng: ChaCha8Rng,
    step: Option<Normal<f64>>,
    theta: f64,
}

impl PhaseWalk {
    pub fn new(tl: f64, tau: f64, rng: ChaCha8Rng) -> Result<Self> {
        let sigma = if tl.is_infinite() {
            0.0
        } else {
            increment_sigma(tl, tau)?
        };
        Ok(PhaseWalk {
            rng,
            step: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma")),
            theta: 0.0,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Continues from `theta` with a fresh random stream.
    pub fn reseed(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }
}

impl Iterator for PhaseWalk {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let out = self.theta;
        if let Some(step) = &self.step {
            self.theta += step.sample(&mut self.rng);
        }
        Some(out)
    }
}

/// Phase of each of `n` bins.
pub fn phase_walk(tl: f64, tau: f64, seed: u64, n: usize) -> Result<Vec<f64>> {
    Ok(PhaseWalk::new(tl, tau, ChaCha8Rng::seed_from_u64(seed))?
        .take(n)
        .collect())
}
