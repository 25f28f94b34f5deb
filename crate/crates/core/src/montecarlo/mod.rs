//! Time-tag generation by exact sequential sampling of the bin chain.
//!
//! Each bin is sampled from its exact conditional distribution given every
//! earlier outcome. The emitter ancilla never meets the optics, so it is
//! measured at emission: with probability `q / 2` the bin is in the excited
//! branch (photonic vacuum), otherwise the photonic mode holds
//! `sqrt(1 - q)|0> + sqrt(q/2) e^{iθ}|1>` up to normalization. The only
//! quantum memory between bins is the light still in the long arms, which
//! is carried as a pure conditional state.
//!
//! Runs are split into windows of `window_bins` bins. Windows share the
//! carried state and phase, and only select independent random streams, so
//! generation is reproducible from the seed.

mod detector;
mod kernel;
mod phase;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ModeLabel, Port};
use crate::interferometer::{detector, franson_network, splitter_network, FransonConfig};
use crate::source::{background_amplitude, displacement_matrix, BackgroundModel, SourceParams};
use crate::tags::{TagSet, TimeTagStream};

pub use detector::{apply_detector_model, DetectorConfig};
pub use kernel::StepKernel;
pub use phase::{increment_sigma, phase_walk, PhaseWalk};

const SAMPLER_STREAM: u64 = 0x5a4d_0001;
const PHASE_STREAM: u64 = 0x5a4d_0002;
const DETECTOR_STREAM: u64 = 0x5a4d_0003;

/// Seed-derived independent stream: `purpose` selects the key, `stream`
/// the ChaCha stream.
pub fn stream_rng(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Beam splitter into two analyzers, four detectors.
    #[default]
    Franson,
    /// Beam splitter straight onto detectors A1 and A2.
    Hbt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub duration_s: f64,
    pub tau_ps: u64,
    pub source: SourceParams,
    pub background: BackgroundModel,
    /// Analyzer phases and coupler ratios; `n_bins` is unused here.
    pub franson: FransonConfig,
    pub mode: SimMode,
    /// Channels A1, A2, B1, B2.
    pub detectors: [DetectorConfig; 4],
    pub seed: u64,
    pub window_bins: u32,
    /// Photon truncation of one bin step when background is present.
    pub max_photons: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            duration_s: 1.07e-3,
            tau_ps: 1070,
            source: SourceParams::default(),
            background: BackgroundModel::Coherent,
            franson: FransonConfig::default(),
            mode: SimMode::Franson,
            detectors: [DetectorConfig::default(); 4],
            seed: 0,
            window_bins: 8,
            max_photons: 3,
        }
    }
}

impl RunConfig {
    pub fn n_bins(&self) -> u64 {
        (self.duration_s * 1e12 / self.tau_ps as f64).floor() as u64
    }

    /// Sets the duration to exactly `bins` bins.
    pub fn with_bins(mut self, bins: u64) -> Self {
        self.duration_s = bins as f64 * self.tau_ps as f64 * 1e-12;
        // guard against the floor landing one bin short
        while self.n_bins() < bins {
            self.duration_s = f64::from_bits(self.duration_s.to_bits() + 1);
        }
        self
    }

    pub fn duration_ps(&self) -> u64 {
        self.n_bins() * self.tau_ps
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.source.check_delay(self.tau_ps as f64 * 1e-12)?;
        if self.tau_ps == 0 {
            return Err(Error::InvalidParameter("tau_ps must be positive".into()));
        }
        if self.window_bins < 4 {
            return Err(Error::InvalidParameter(format!(
                "window_bins = {} (need at least 4)",
                self.window_bins
            )));
        }
        if !(self.duration_s > 0.0) || self.n_bins() < self.window_bins as u64 {
            return Err(Error::InvalidParameter(format!(
                "duration {} s holds {} bins, fewer than one window",
                self.duration_s,
                self.n_bins()
            )));
        }
        if self.max_photons < 2 {
            return Err(Error::InvalidParameter(
                "max_photons must be at least 2".into(),
            ));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        Ok(())
    }
}

/// Bookkeeping of the ideal (pre-detector) simulation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bins: u64,
    pub duration_ps: u64,
    pub seed: u64,
    /// Bins in the excited-emitter branch.
    pub excited_bins: u64,
    /// Photon numbers summed per channel.
    pub photons: [u64; 4],
    /// Threshold clicks per channel before detector effects.
    pub clicks: [u64; 4],
    /// Same-bin click coincidences A1B1, A1B2, A2B1, A2B2.
    pub lag0_coincidences: [u64; 4],
    /// Tags per channel after detector effects.
    pub detected: [u64; 4],
    /// Smallest probability weight kept by the step truncation.
    pub min_retained_weight: f64,
}

impl GroundTruth {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ground truth is always serializable")
    }
}

#[derive(Clone, Debug)]
pub struct MonteCarloRun {
    pub tags: TagSet,
    pub truth: GroundTruth,
}

/// Per-bin photonic amplitudes after the ancilla has been measured.
struct SourceSampler {
    p_excited: f64,
    excited: Vec<Complex64>,
    ground: Vec<Complex64>,
    /// Displacement for per-bin random background phase.
    incoherent: Option<DMatrix<Complex64>>,
    retained: f64,
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    let s = 1.0 / n.sqrt();
    for a in v.iter_mut() {
        *a *= s;
    }
    n
}

impl SourceSampler {
    fn new(p: &SourceParams, model: BackgroundModel, dim: usize) -> Result<Self> {
        let q = p.q;
        let mut excited = vec![Complex64::new(0.0, 0.0); dim];
        excited[0] = Complex64::new(1.0, 0.0);
        let mut ground = vec![Complex64::new(0.0, 0.0); dim];
        let pg = 1.0 - q / 2.0;
        ground[0] = Complex64::new(((1.0 - q) / pg).sqrt(), 0.0);
        ground[1] = Complex64::new((q / 2.0 / pg).sqrt(), 0.0);
        let mut s = SourceSampler {
            p_excited: q / 2.0,
            excited,
            ground,
            incoherent: None,
            retained: 1.0,
        };
        if p.beta > 0.0 {
            let alpha = background_amplitude(q / 2.0, p.beta, 0.0)?;
            let d = displacement_matrix(alpha, dim, dim);
            match model {
                BackgroundModel::Coherent => {
                    for branch in [&mut s.excited, &mut s.ground] {
                        let v = &d * nalgebra::DVector::from_column_slice(branch);
                        branch.copy_from_slice(v.as_slice());
                        s.retained = s.retained.min(normalize(branch));
                    }
                }
                BackgroundModel::Incoherent => s.incoherent = Some(d),
            }
        }
        Ok(s)
    }

    fn sample<R: Rng>(&mut self, theta: f64, rng: &mut R, out: &mut [Complex64]) {
        let branch = if rng.random::<f64>() < self.p_excited {
            &self.excited
        } else {
            &self.ground
        };
        match &self.incoherent {
            None => {
                let step = Complex64::from_polar(1.0, theta);
                let mut ph = Complex64::new(1.0, 0.0);
                for (o, b) in out.iter_mut().zip(branch) {
                    *o = b * ph;
                    ph *= step;
                }
            }
            Some(d) => {
                let phi = rng.random::<f64>() * 2.0 * PI;
                let v = nalgebra::DVector::from_iterator(
                    branch.len(),
                    branch
                        .iter()
                        .enumerate()
                        .map(|(n, b)| b * Complex64::from_polar(1.0, (theta - phi) * n as f64)),
                );
                let w = d * v;
                for (n, o) in out.iter_mut().enumerate() {
                    *o = w[n] * Complex64::from_polar(1.0, phi * n as f64);
                }
                self.retained = self.retained.min(normalize(out));
            }
        }
    }

    fn is_excited(&self, out: &[Complex64]) -> bool {
        // only used for bookkeeping without background
        out[1].norm_sqr() == 0.0
    }
}

/// Kernel of one bin step for `cfg.mode`.
pub fn step_kernel(cfg: &RunConfig) -> Result<StepKernel> {
    let src = ModeLabel::photonic(Port::Source, 0);
    let bg = cfg.source.beta > 0.0;
    let src_n_max = if bg { cfg.max_photons } else { 1 };
    match cfg.mode {
        SimMode::Franson => {
            let net = franson_network(&cfg.franson, 0..1)?;
            StepKernel::new(
                &net,
                src,
                &[
                    ModeLabel::photonic(Port::Long(0), 0),
                    ModeLabel::photonic(Port::Long(1), 0),
                ],
                &[
                    ModeLabel::photonic(Port::Long(0), 1),
                    ModeLabel::photonic(Port::Long(1), 1),
                ],
                [
                    Some(detector(0, 1, 0)),
                    Some(detector(0, 2, 0)),
                    Some(detector(1, 1, 0)),
                    Some(detector(1, 2, 0)),
                ],
                src_n_max,
                if bg { cfg.max_photons } else { 2 },
            )
        }
        SimMode::Hbt => {
            let net = splitter_network(cfg.franson.splitter_transmission, 0..1)?;
            StepKernel::new(
                &net,
                src,
                &[],
                &[],
                [
                    Some(ModeLabel::photonic(Port::Side(0), 0)),
                    Some(ModeLabel::photonic(Port::Side(1), 0)),
                    None,
                    None,
                ],
                src_n_max,
                src_n_max,
            )
        }
    }
}

const PAIR_CHANNELS: [(usize, usize); 4] = [(0, 2), (0, 3), (1, 2), (1, 3)];

pub fn generate(cfg: &RunConfig) -> Result<MonteCarloRun> {
    cfg.validate()?;
    let kernel = step_kernel(cfg)?;
    let n_bins = cfg.n_bins();
    let w = cfg.window_bins as u64;
    let mut sampler = SourceSampler::new(&cfg.source, cfg.background, kernel.src_dim())?;
    let mut walk = PhaseWalk::new(
        cfg.source.tl,
        cfg.tau_ps as f64 * 1e-12,
        stream_rng(cfg.seed, PHASE_STREAM, 0),
    )?;
    let mut carry = kernel.vacuum_carry();
    let mut amp = kernel.scratch();
    let mut src = vec![Complex64::new(0.0, 0.0); kernel.src_dim()];
    let patterns = kernel.patterns().to_vec();
    let vacuum_pattern = patterns.iter().position(|p| *p == [0; 4]);
    let mut raw: [Vec<u64>; 4] = Default::default();
    let mut truth = GroundTruth {
        bins: n_bins,
        duration_ps: cfg.duration_ps(),
        seed: cfg.seed,
        min_retained_weight: 1.0,
        ..Default::default()
    };
    let track_excited = cfg.source.beta == 0.0;

    let mut rng = stream_rng(cfg.seed, SAMPLER_STREAM, 0);
    for t in 0..n_bins {
        if t % w == 0 {
            let window = t / w;
            rng = stream_rng(cfg.seed, SAMPLER_STREAM, window);
            walk.reseed(stream_rng(cfg.seed, PHASE_STREAM, window));
        }
        let theta = walk.next().expect("phase walk is endless");
        sampler.sample(theta, &mut rng, &mut src);
        if track_excited && sampler.is_excited(&src) {
            truth.excited_bins += 1;
        }
        let (p, retained) = kernel.step(&mut carry, &src, &mut amp, &mut rng);
        if retained < truth.min_retained_weight {
            truth.min_retained_weight = retained;
        }
        if Some(p) == vacuum_pattern {
            continue;
        }
        let pat = patterns[p];
        let stamp = t * cfg.tau_ps;
        for ch in 0..4 {
            if pat[ch] > 0 {
                truth.photons[ch] += pat[ch] as u64;
                truth.clicks[ch] += 1;
                raw[ch].push(stamp);
            }
        }
        for (k, &(a, b)) in PAIR_CHANNELS.iter().enumerate() {
            if pat[a] > 0 && pat[b] > 0 {
                truth.lag0_coincidences[k] += 1;
            }
        }
    }
    truth.min_retained_weight = truth.min_retained_weight.min(sampler.retained);

    let duration = cfg.duration_ps();
    let streams: Vec<TimeTagStream> = raw
        .par_iter()
        .enumerate()
        .map(|(ch, ts)| {
            let mut rng = stream_rng(cfg.seed, DETECTOR_STREAM, ch as u64);
            apply_detector_model(ts, &cfg.detectors[ch], duration, &mut rng)
        })
        .collect::<Result<_>>()?;
    let streams: [TimeTagStream; 4] = streams.try_into().expect("four channels");
    for (ch, s) in streams.iter().enumerate() {
        truth.detected[ch] = s.len() as u64;
    }
    Ok(MonteCarloRun {
        tags: TagSet { streams },
        truth,
    })
}

/// Independent runs in parallel, results in input order.
pub fn generate_many(cfgs: &[RunConfig]) -> Result<Vec<MonteCarloRun>> {
    cfgs.par_iter().map(generate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(q: f64, bins: u64) -> RunConfig {
        RunConfig {
            source: SourceParams {
                q,
                ..SourceParams::default()
            },
            ..RunConfig::default()
        }
        .with_bins(bins)
    }

    #[test]
    fn vacuum_source_gives_no_tags() {
        let run = generate(&cfg(0.0, 10_000)).unwrap();
        assert_eq!(run.tags.total(), 0);
        assert_eq!(run.truth.bins, 10_000);
    }

    #[test]
    fn deterministic() {
        let c = RunConfig {
            seed: 77,
            ..cfg(0.2, 20_000)
        };
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a.tags, b.tags);
        assert_eq!(a.truth, b.truth);
        let d = generate(&RunConfig { seed: 78, ..c }).unwrap();
        assert_ne!(a.tags, d.tags);
    }

    #[test]
    fn with_bins_is_exact() {
        for n in [4u64, 1000, 10_000_000, 12_345_677] {
            assert_eq!(cfg(0.1, n).n_bins(), n);
        }
    }

    #[test]
    fn config_validation() {
        assert!(generate(&RunConfig {
            window_bins: 3,
            ..cfg(0.1, 100)
        })
        .is_err());
        assert!(generate(&cfg(0.1, 2)).is_err());
        let mut c = cfg(0.1, 100);
        c.tau_ps = 10;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn excited_branch_rate() {
        let n = 200_000u64;
        let run = generate(&cfg(0.4, n)).unwrap();
        let p = 0.2;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((run.truth.excited_bins as f64 - n as f64 * p).abs() < 4.0 * sigma);
    }

    #[test]
    fn hbt_has_no_same_bin_pairs_without_background() {
        let c = RunConfig {
            mode: SimMode::Hbt,
            ..cfg(0.5, 50_000)
        };
        let run = generate(&c).unwrap();
        let a = run.tags.get(crate::tags::Channel::A1).as_slice();
        let b = run.tags.get(crate::tags::Channel::A2).as_slice();
        assert!(!a.is_empty() && !b.is_empty());
        assert!(a.iter().all(|t| b.binary_search(t).is_err()));
    }
}
