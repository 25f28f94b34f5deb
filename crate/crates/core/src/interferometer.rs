//! Franson and multiport analyzer networks over time-binned modes.
//!
//! Time is measured in units of the analyzer delay, so an AMZI long arm
//! relabels bin `t` to `t + 1`. A network over bins `start..end` takes the
//! long-arm modes `Long(side)@start` as extra inputs (light still in flight
//! from earlier bins) and returns `Long(side)@end` as extra outputs. This lets
//! a bin chain be evolved one bin at a time with the same builder.
//!
//! Port convention: every coupler is [`coupler`], transmitted real and
//! reflected `i`. Detector 1 of an analyzer is the port where the short and
//! long paths of one photon add in phase at zero arm phase; detector 2 is its
//! complement.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{coupler, make_basis, FockState, ModeLabel, ModeNetwork, NetworkBuilder, Port};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FransonConfig {
    pub phi_a: f64,
    pub phi_b: f64,
    /// Source bins `0..n_bins`; detector bins run to `n_bins` inclusive.
    pub n_bins: u32,
    /// Power transmission of the fiber beam splitter.
    pub splitter_transmission: f64,
    /// Power transmission of both couplers of each AMZI.
    pub amzi_transmission: f64,
}

impl Default for FransonConfig {
    fn default() -> Self {
        FransonConfig {
            phi_a: 0.0,
            phi_b: 0.0,
            n_bins: 2,
            splitter_transmission: 0.5,
            amzi_transmission: 0.5,
        }
    }
}

impl FransonConfig {
    pub fn with_phases(phi_a: f64, phi_b: f64, n_bins: u32) -> Self {
        FransonConfig {
            phi_a,
            phi_b,
            n_bins,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_bins = {} (need at least an early and a late bin)",
                self.n_bins
            )));
        }
        check_transmission(self.splitter_transmission)?;
        check_transmission(self.amzi_transmission)
    }
}

fn check_transmission(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "transmission {t} outside [0, 1]"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiportConfig {
    /// Number of spatial output modes (3 for a tritter).
    pub n: u8,
    pub n_bins: u32,
    /// One AMZI phase per output; `None` sends outputs straight to detectors.
    pub phases: Option<Vec<f64>>,
}

impl MultiportConfig {
    pub fn bare(n: u8, n_bins: u32) -> Self {
        MultiportConfig {
            n,
            n_bins,
            phases: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "multiport needs n >= 2, got {}",
                self.n
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::InvalidParameter(
                "multiport needs at least one bin".into(),
            ));
        }
        if let Some(p) = &self.phases {
            if p.len() != self.n as usize {
                return Err(Error::InvalidParameter(format!(
                    "{} phases for {} outputs",
                    p.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }
}

pub fn detector(side: u8, port: u8, bin: i32) -> ModeLabel {
    ModeLabel::detector(side, port, bin)
}

fn label(port: Port, bin: i32) -> ModeLabel {
    ModeLabel::photonic(port, bin)
}

/// Discrete Fourier matrix `U[j][k] = e^{2πi jk/n} / sqrt(n)`.
pub fn dft(n: usize) -> DMatrix<Complex64> {
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |j, k| {
        Complex64::from_polar(s, 2.0 * PI * (j * k % n) as f64 / n as f64)
    })
}

/// First coupler, long-arm phase and delay of one AMZI over `bins`.
///
/// Expects `Side(side)@t` and `AmziVacuum(side)@t` among the builder
/// outputs for every `t` in `bins`. Leaves `Short(side)@t` and
/// `Long(side)@(t + 1)`.
pub fn amzi_arms(
    b: &mut NetworkBuilder,
    side: u8,
    phi: f64,
    transmission: f64,
    bins: Range<i32>,
) -> Result<()> {
    let m = coupler(transmission);
    // late bins first, so Long@(t+1) is never an existing row
    for t in bins.rev() {
        b.mix(
            label(Port::Side(side), t),
            label(Port::AmziVacuum(side), t),
            m,
            label(Port::Short(side), t),
            label(Port::Long(side), t + 1),
        )?;
        b.phase(label(Port::Long(side), t + 1), phi)?;
    }
    Ok(())
}

/// Second coupler: recombines `Short@t` with `Long@t` into detectors 2 and 1.
pub fn amzi_recombine(
    b: &mut NetworkBuilder,
    side: u8,
    transmission: f64,
    bins: Range<i32>,
) -> Result<()> {
    let m = coupler(transmission);
    for t in bins {
        b.mix(
            label(Port::Short(side), t),
            label(Port::Long(side), t),
            m,
            detector(side, 2, t),
            detector(side, 1, t),
        )?;
    }
    Ok(())
}

/// Inputs of a single AMZI over `bins`.
pub fn amzi_inputs(side: u8, bins: Range<i32>) -> Vec<ModeLabel> {
    let mut v = vec![label(Port::Long(side), bins.start)];
    for t in bins {
        v.push(label(Port::Side(side), t));
        v.push(label(Port::AmziVacuum(side), t));
    }
    v
}

/// One balanced AMZI over `bins` fed at `Side(side)`.
pub fn build_amzi(phi: f64, side: u8, bins: Range<i32>) -> Result<ModeNetwork> {
    if bins.is_empty() {
        return Err(Error::InvalidParameter(
            "AMZI needs at least one bin".into(),
        ));
    }
    let mut b = NetworkBuilder::new(amzi_inputs(side, bins.clone()));
    amzi_arms(&mut b, side, phi, 0.5, bins.clone())?;
    amzi_recombine(&mut b, side, 0.5, bins)?;
    b.build()
}

/// Inputs of the Franson network over `bins`, in a fixed order.
pub fn franson_inputs(bins: Range<i32>) -> Vec<ModeLabel> {
    let mut v = vec![
        label(Port::Long(0), bins.start),
        label(Port::Long(1), bins.start),
    ];
    for t in bins {
        v.push(label(Port::Source, t));
        v.push(label(Port::SplitterVacuum(1), t));
        v.push(label(Port::AmziVacuum(0), t));
        v.push(label(Port::AmziVacuum(1), t));
    }
    v
}

/// Franson network over an arbitrary bin range, with in-flight long-arm
/// modes as edge inputs and outputs.
pub fn franson_network(cfg: &FransonConfig, bins: Range<i32>) -> Result<ModeNetwork> {
    check_transmission(cfg.splitter_transmission)?;
    check_transmission(cfg.amzi_transmission)?;
    if bins.is_empty() {
        return Err(Error::InvalidParameter("empty bin range".into()));
    }
    let mut b = NetworkBuilder::new(franson_inputs(bins.clone()));
    let fbs = coupler(cfg.splitter_transmission);
    for t in bins.clone() {
        b.mix(
            label(Port::Source, t),
            label(Port::SplitterVacuum(1), t),
            fbs,
            label(Port::Side(0), t),
            label(Port::Side(1), t),
        )?;
    }
    for (side, phi) in [(0u8, cfg.phi_a), (1u8, cfg.phi_b)] {
        amzi_arms(&mut b, side, phi, cfg.amzi_transmission, bins.clone())?;
        amzi_recombine(&mut b, side, cfg.amzi_transmission, bins.clone())?;
    }
    b.build()
}

/// Full Franson network for source bins `0..n_bins`. One trailing bin of
/// vacuum inputs is included so the last long arm reaches its detectors.
pub fn build_franson(cfg: &FransonConfig) -> Result<ModeNetwork> {
    cfg.validate()?;
    franson_network(cfg, 0..cfg.n_bins as i32 + 1)
}

/// Fiber beam splitter alone over `bins` (no analyzers).
pub fn splitter_network(transmission: f64, bins: Range<i32>) -> Result<ModeNetwork> {
    check_transmission(transmission)?;
    let mut inputs = Vec::new();
    for t in bins.clone() {
        inputs.push(label(Port::Source, t));
        inputs.push(label(Port::SplitterVacuum(1), t));
    }
    let mut b = NetworkBuilder::new(inputs);
    for t in bins {
        b.mix(
            label(Port::Source, t),
            label(Port::SplitterVacuum(1), t),
            coupler(transmission),
            label(Port::Side(0), t),
            label(Port::Side(1), t),
        )?;
    }
    b.build()
}

/// Discrete-Fourier splitter feeding `n` AMZIs, or bare detectors (port 1 of
/// each side) when no phases are given.
pub fn build_multiport(cfg: &MultiportConfig) -> Result<ModeNetwork> {
    cfg.validate()?;
    let n = cfg.n;
    let bins = match cfg.phases {
        Some(_) => 0..cfg.n_bins as i32 + 1,
        None => 0..cfg.n_bins as i32,
    };
    let mut inputs = Vec::new();
    if cfg.phases.is_some() {
        inputs.extend((0..n).map(|s| label(Port::Long(s), bins.start)));
    }
    for t in bins.clone() {
        inputs.push(label(Port::Source, t));
        inputs.extend((1..n).map(|k| label(Port::SplitterVacuum(k), t)));
        if cfg.phases.is_some() {
            inputs.extend((0..n).map(|s| label(Port::AmziVacuum(s), t)));
        }
    }
    let mut b = NetworkBuilder::new(inputs);
    let u = dft(n as usize);
    for t in bins.clone() {
        let ins: Vec<ModeLabel> = std::iter::once(label(Port::Source, t))
            .chain((1..n).map(|k| label(Port::SplitterVacuum(k), t)))
            .collect();
        let outs: Vec<ModeLabel> = (0..n).map(|s| label(Port::Side(s), t)).collect();
        b.multimode(&ins, &u, &outs)?;
    }
    match &cfg.phases {
        Some(phases) => {
            for (s, &phi) in phases.iter().enumerate() {
                amzi_arms(&mut b, s as u8, phi, 0.5, bins.clone())?;
                amzi_recombine(&mut b, s as u8, 0.5, bins.clone())?;
            }
        }
        None => {
            for t in bins {
                for s in 0..n {
                    b.relabel(label(Port::Side(s), t), detector(s, 1, t))?;
                }
            }
        }
    }
    b.build()
}

/// Probability that `state` holds exactly one photon per listed group of
/// modes (bins of one output summed) and nothing elsewhere.
pub fn one_per_group_probability(state: &FockState, groups: &[Vec<ModeLabel>]) -> Result<f64> {
    let idx: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| g.iter().map(|l| state.index_of(l)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let total = state.norm_sqr();
    let p: f64 = state
        .terms()
        .filter(|(occ, _)| {
            let per: Vec<u32> = idx
                .iter()
                .map(|g| g.iter().map(|&i| occ.get(i) as u32).sum())
                .collect();
            per.iter().all(|&c| c == 1) && occ.total() == groups.len() as u32
        })
        .map(|(_, a)| a.norm_sqr())
        .sum();
    Ok(p / total)
}

/// Probability that `n` photons, one per emission bin, leave the bare
/// `n`-port with exactly one photon per output.
pub fn multiport_postselection(n: u8) -> Result<f64> {
    let net = build_multiport(&MultiportConfig::bare(n, n as u32))?;
    let bins: Vec<i32> = (0..n as i32).collect();
    let modes: Vec<ModeLabel> = bins.iter().map(|&t| label(Port::Source, t)).collect();
    let basis = Arc::new(make_basis(modes, n as u32)?);
    let input = FockState::from_terms(basis, [(vec![1; n as usize], Complex64::new(1.0, 0.0))])?;
    let out = net.apply(&input.with_modes(net.inputs())?)?;
    let groups: Vec<Vec<ModeLabel>> = (0..n)
        .map(|s| bins.iter().map(|&t| detector(s, 1, t)).collect())
        .collect();
    one_per_group_probability(&out, &groups)
}

/// Conditions the beam-splitter output of two emission bins `early` and
/// `late` on one photon per side in opposite bins. Returns the conditional
/// state and the selection probability.
pub fn postselect_bell_pair(state: &FockState, early: i32, late: i32) -> Result<(FockState, f64)> {
    let ae = state.index_of(&label(Port::Side(0), early))?;
    let al = state.index_of(&label(Port::Side(0), late))?;
    let be = state.index_of(&label(Port::Side(1), early))?;
    let bl = state.index_of(&label(Port::Side(1), late))?;
    state.postselect(|occ| {
        occ.total() == 2
            && ((occ.get(ae) == 1 && occ.get(bl) == 1) || (occ.get(al) == 1 && occ.get(be) == 1))
    })
}

/// `|<Ψ+|ψ>|²` with `Ψ+ = (|1_A^e 1_B^l> + |1_A^l 1_B^e>) / sqrt(2)`, summing
/// over ancilla configurations of the conditional state.
pub fn bell_fidelity(state: &FockState, early: i32, late: i32) -> Result<f64> {
    let (ae, al, be, bl) = (
        state.index_of(&label(Port::Side(0), early))?,
        state.index_of(&label(Port::Side(0), late))?,
        state.index_of(&label(Port::Side(1), early))?,
        state.index_of(&label(Port::Side(1), late))?,
    );
    let photonic: Vec<usize> = state
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_ancilla())
        .map(|(i, _)| i)
        .collect();
    let ancillas: Vec<usize> = state
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_ancilla())
        .map(|(i, _)| i)
        .collect();
    // overlap for each ancilla configuration, then sum the squared moduli
    let mut overlaps: std::collections::BTreeMap<Vec<u8>, Complex64> = Default::default();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (occ, a) in state.terms() {
        let ones = |i: usize, j: usize| {
            photonic
                .iter()
                .all(|&k| occ.get(k) == u8::from(k == i || k == j))
        };
        if ones(ae, bl) || ones(al, be) {
            let key: Vec<u8> = ancillas.iter().map(|&k| occ.get(k)).collect();
            *overlaps.entry(key).or_default() += a * h;
        }
    }
    Ok(overlaps.values().map(|c| c.norm_sqr()).sum::<f64>() / state.norm_sqr())
}
