//! Truncated Fock-space states over labeled optical modes.
//!
//! A [`FockState`] is a sparse map from occupation vectors to complex
//! amplitudes. Modes are either photonic (they can enter a linear-optical
//! [`ModeNetwork`]) or two-level emitter ancillas that purify the source and
//! are only traced out at detection. The truncation `n_max` bounds the photon
//! number of every term; ancilla excitations do not count toward it.

mod network;
mod permanent;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use network::factorial;
pub use network::{coupler, ModeNetwork, NetworkBuilder, UNITARITY_TOLERANCE};
pub use permanent::{amplitude_oracle, permanent};

/// Amplitudes below this magnitude are dropped after every two-mode rotation.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Default photon-number truncation of a window basis.
pub const DEFAULT_N_MAX: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    Photonic,
    EmitterAncilla,
}

/// Spatial port of a mode. Analyzer sides are numbered from 0 (A, B, C, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Port {
    /// Emitter output, one mode per emission bin.
    Source,
    /// Unused input `k` (k >= 1) of the source splitter.
    SplitterVacuum(u8),
    /// Splitter output feeding analyzer `side`.
    Side(u8),
    /// Unused input of an analyzer's first coupler.
    AmziVacuum(u8),
    Short(u8),
    /// Long arm; a label at bin t holds light that left the first coupler at t - 1.
    Long(u8),
    /// Detector `port` (1 or 2) of analyzer `side`.
    Detector {
        side: u8,
        port: u8,
    },
}

pub(crate) fn side_letter(side: u8) -> char {
    (b'A' + side) as char
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Port::Source => write!(f, "src"),
            Port::SplitterVacuum(k) => write!(f, "vac{k}"),
            Port::Side(s) => write!(f, "{}", side_letter(s)),
            Port::AmziVacuum(s) => write!(f, "{}vac", side_letter(s)),
            Port::Short(s) => write!(f, "{}short", side_letter(s)),
            Port::Long(s) => write!(f, "{}long", side_letter(s)),
            Port::Detector { side, port } => write!(f, "{}{}", side_letter(side), port),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeLabel {
    pub kind: ModeKind,
    pub port: Port,
    /// Time bin in units of the interferometer delay.
    pub bin: i32,
}

impl ModeLabel {
    pub const fn photonic(port: Port, bin: i32) -> Self {
        ModeLabel {
            kind: ModeKind::Photonic,
            port,
            bin,
        }
    }

    /// Emitter ancilla paired with the source mode of `bin`.
    pub const fn ancilla(bin: i32) -> Self {
        ModeLabel {
            kind: ModeKind::EmitterAncilla,
            port: Port::Source,
            bin,
        }
    }

    pub const fn detector(side: u8, port: u8, bin: i32) -> Self {
        Self::photonic(Port::Detector { side, port }, bin)
    }

    pub fn is_ancilla(&self) -> bool {
        self.kind == ModeKind::EmitterAncilla
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModeKind::Photonic => write!(f, "{}@{}", self.port, self.bin),
            ModeKind::EmitterAncilla => write!(f, "anc:{}@{}", self.port, self.bin),
        }
    }
}

/// Occupation numbers in basis mode order. `total` is the photon number;
/// ancilla excitations are excluded.
///
/// Ordering is graded: by photon number first, then reverse-lexicographic
/// over the counts, so `{00, 10, 01}` enumerates in that order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OccupationVector {
    counts: Vec<u8>,
    total: u32,
}

impl OccupationVector {
    pub fn counts(&self) -> &[u8] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn get(&self, index: usize) -> u8 {
        self.counts[index]
    }
}

impl Ord for OccupationVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total
            .cmp(&other.total)
            .then_with(|| other.counts.cmp(&self.counts))
    }
}

impl PartialOrd for OccupationVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ordered mode list plus photon-number truncation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    modes: Vec<ModeLabel>,
    n_max: u32,
}

/// Builds a basis over `modes` (kept in the given order) admitting every
/// occupation with at most `n_max` photons.
pub fn make_basis(modes: Vec<ModeLabel>, n_max: u32) -> Result<FockBasis> {
    if n_max == 0 {
        return Err(Error::ZeroTruncation);
    }
    if modes.is_empty() {
        return Err(Error::InvalidParameter(
            "basis needs at least one mode".into(),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for m in &modes {
        if !seen.insert(*m) {
            return Err(Error::DuplicateMode(*m));
        }
    }
    Ok(FockBasis { modes, n_max })
}

impl FockBasis {
    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn index_of(&self, label: &ModeLabel) -> Option<usize> {
        self.modes.iter().position(|m| m == label)
    }

    pub fn require_index(&self, label: &ModeLabel) -> Result<usize> {
        self.index_of(label).ok_or(Error::UnknownMode(*label))
    }

    /// Validates raw counts against this basis.
    pub fn occupation(&self, counts: Vec<u8>) -> Result<OccupationVector> {
        if counts.len() != self.modes.len() {
            return Err(Error::ShapeMismatch(format!(
                "occupation has {} entries, basis has {} modes",
                counts.len(),
                self.modes.len()
            )));
        }
        let mut total = 0u32;
        for (c, m) in counts.iter().zip(&self.modes) {
            if m.is_ancilla() {
                if *c > 1 {
                    return Err(Error::InvalidParameter(format!(
                        "ancilla {m} holds {c} excitations"
                    )));
                }
            } else {
                total += *c as u32;
            }
        }
        if total > self.n_max {
            return Err(Error::TruncationOverflow {
                photons: total,
                n_max: self.n_max,
            });
        }
        Ok(OccupationVector { counts, total })
    }

    fn occupation_unchecked(&self, counts: Vec<u8>) -> OccupationVector {
        let total = counts
            .iter()
            .zip(&self.modes)
            .filter(|(_, m)| !m.is_ancilla())
            .map(|(c, _)| *c as u32)
            .sum();
        OccupationVector { counts, total }
    }

    /// Every admissible occupation vector, in basis order.
    pub fn enumerate(&self) -> Vec<OccupationVector> {
        let mut out = Vec::new();
        let mut counts = vec![0u8; self.modes.len()];
        self.enumerate_rec(0, self.n_max, &mut counts, &mut out);
        out.sort();
        out
    }

    fn enumerate_rec(
        &self,
        idx: usize,
        budget: u32,
        counts: &mut Vec<u8>,
        out: &mut Vec<OccupationVector>,
    ) {
        if idx == self.modes.len() {
            out.push(self.occupation_unchecked(counts.clone()));
            return;
        }
        let cap = if self.modes[idx].is_ancilla() {
            1
        } else {
            budget
        };
        for c in 0..=cap {
            counts[idx] = c as u8;
            let left = if self.modes[idx].is_ancilla() {
                budget
            } else {
                budget - c
            };
            self.enumerate_rec(idx + 1, left, counts, out);
        }
        counts[idx] = 0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Click {
    Click,
    NoClick,
}

/// Sparse superposition over a basis.
#[derive(Clone, Debug)]
pub struct FockState {
    basis: Arc<FockBasis>,
    terms: BTreeMap<OccupationVector, Complex64>,
    subnormalized: bool,
}

#[derive(Serialize)]
struct TermDump<'a> {
    occupation: &'a [u8],
    re: f64,
    im: f64,
}

impl FockState {
    pub fn vacuum(basis: Arc<FockBasis>) -> Self {
        let zero = basis.occupation_unchecked(vec![0; basis.len()]);
        let mut terms = BTreeMap::new();
        terms.insert(zero, Complex64::new(1.0, 0.0));
        FockState {
            basis,
            terms,
            subnormalized: false,
        }
    }

    /// Builds a state from raw `(counts, amplitude)` pairs. Repeated
    /// occupations are summed. The result is not renormalized.
    pub fn from_terms<I>(basis: Arc<FockBasis>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u8>, Complex64)>,
    {
        let mut map = BTreeMap::new();
        for (counts, amp) in terms {
            let occ = basis.occupation(counts)?;
            *map.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        map.retain(|_, a: &mut Complex64| a.norm() >= PRUNE_THRESHOLD);
        Ok(FockState {
            basis,
            terms: map,
            subnormalized: false,
        })
    }

    pub(crate) fn from_map(
        basis: Arc<FockBasis>,
        terms: BTreeMap<OccupationVector, Complex64>,
        subnormalized: bool,
    ) -> Self {
        FockState {
            basis,
            terms,
            subnormalized,
        }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.basis.modes
    }

    pub fn terms(&self) -> impl Iterator<Item = (&OccupationVector, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_subnormalized(&self) -> bool {
        self.subnormalized
    }

    pub fn amplitude(&self, counts: &[u8]) -> Complex64 {
        let occ = self.basis.occupation_unchecked(counts.to_vec());
        self.terms
            .get(&occ)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::EmptyOutcome);
        }
        let s = 1.0 / n.sqrt();
        for a in self.terms.values_mut() {
            *a *= s;
        }
        self.subnormalized = false;
        Ok(self)
    }

    /// Inner product `<self|other>`; both states must share a mode list.
    pub fn inner(&self, other: &FockState) -> Result<Complex64> {
        if self.basis.modes != other.basis.modes {
            return Err(Error::ModeMismatch(
                "inner product over different mode lists".into(),
            ));
        }
        Ok(self
            .terms
            .iter()
            .filter_map(|(occ, a)| other.terms.get(occ).map(|b| a.conj() * b))
            .sum())
    }

    /// Mode index lookup that reports unknown labels as errors.
    pub fn index_of(&self, label: &ModeLabel) -> Result<usize> {
        self.basis.require_index(label)
    }

    /// Tensor product over disjoint mode sets. The photon truncation of the
    /// result is the sum of both truncations, so no term is lost.
    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        let mut labels: Vec<ModeLabel> = self.basis.modes.clone();
        for m in &other.basis.modes {
            if labels.contains(m) {
                return Err(Error::DuplicateMode(*m));
            }
            labels.push(*m);
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| labels[i]);
        let sorted: Vec<ModeLabel> = order.iter().map(|&i| labels[i]).collect();
        let basis = Arc::new(make_basis(sorted, self.basis.n_max + other.basis.n_max)?);
        let mut terms = BTreeMap::new();
        for (oa, aa) in &self.terms {
            for (ob, ab) in &other.terms {
                let joined: Vec<u8> = oa.counts.iter().chain(&ob.counts).copied().collect();
                let counts = order.iter().map(|&i| joined[i]).collect();
                terms.insert(basis.occupation_unchecked(counts), aa * ab);
            }
        }
        Ok(FockState {
            basis,
            terms,
            subnormalized: self.subnormalized || other.subnormalized,
        })
    }

    /// Explicit truncation to `n_max` photons with renormalization. Returns
    /// the state and the discarded probability weight.
    pub fn truncate(&self, n_max: u32) -> Result<(FockState, f64)> {
        let basis = Arc::new(make_basis(self.basis.modes.clone(), n_max)?);
        let mut dropped = 0.0;
        let mut terms = BTreeMap::new();
        for (occ, a) in &self.terms {
            if occ.total > n_max {
                dropped += a.norm_sqr();
            } else {
                terms.insert(occ.clone(), *a);
            }
        }
        let state = FockState {
            basis,
            terms,
            subnormalized: self.subnormalized,
        };
        let state = if dropped > 0.0 {
            state.normalized()?
        } else {
            state
        };
        Ok((state, dropped))
    }

    /// Adds vacuum modes. Labels already present are left alone.
    pub fn with_modes(&self, extra: &[ModeLabel]) -> Result<FockState> {
        let mut labels = self.basis.modes.clone();
        for m in extra {
            if !labels.contains(m) {
                labels.push(*m);
            }
        }
        if labels.len() == self.basis.modes.len() {
            return Ok(self.clone());
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| labels[i]);
        let basis = Arc::new(make_basis(
            order.iter().map(|&i| labels[i]).collect(),
            self.basis.n_max,
        )?);
        let old = self.basis.len();
        let terms = self
            .terms
            .iter()
            .map(|(occ, a)| {
                let counts = order
                    .iter()
                    .map(|&i| if i < old { occ.counts[i] } else { 0 })
                    .collect();
                (basis.occupation_unchecked(counts), *a)
            })
            .collect();
        Ok(FockState {
            basis,
            terms,
            subnormalized: self.subnormalized,
        })
    }

    /// Multiplies each term by `exp(i * phase * n_mode)`.
    pub fn number_phase(&self, label: &ModeLabel, phase: f64) -> Result<FockState> {
        let idx = self.index_of(label)?;
        let mut out = self.clone();
        for (occ, a) in out.terms.iter_mut() {
            *a *= Complex64::from_polar(1.0, phase * occ.counts[idx] as f64);
        }
        Ok(out)
    }

    /// Applies a single-mode operator given as a matrix `op[(m, n)] = <m|O|n>`
    /// over photon numbers `0..op.nrows()`. Terms whose photon number would
    /// exceed the basis truncation are discarded and returned as weight; the
    /// caller decides whether to renormalize.
    pub fn apply_single_mode(
        &self,
        label: &ModeLabel,
        op: &nalgebra::DMatrix<Complex64>,
    ) -> Result<(FockState, f64)> {
        let idx = self.index_of(label)?;
        if label.is_ancilla() {
            return Err(Error::AncillaInNetwork(*label));
        }
        let dim = op.nrows();
        let mut terms: BTreeMap<OccupationVector, Complex64> = BTreeMap::new();
        let mut dropped = BTreeMap::new();
        for (occ, a) in &self.terms {
            let n = occ.counts[idx] as usize;
            if n >= op.ncols() {
                return Err(Error::TruncationOverflow {
                    photons: n as u32,
                    n_max: op.ncols() as u32 - 1,
                });
            }
            let rest = occ.total - n as u32;
            for m in 0..dim {
                let amp = op[(m, n)] * a;
                if amp.norm() < PRUNE_THRESHOLD {
                    continue;
                }
                let mut counts = occ.counts.clone();
                counts[idx] = m as u8;
                let key = OccupationVector {
                    counts,
                    total: rest + m as u32,
                };
                let target = if key.total > self.basis.n_max {
                    &mut dropped
                } else {
                    &mut terms
                };
                *target.entry(key).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        let lost = dropped.values().map(|a: &Complex64| a.norm_sqr()).sum();
        terms.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
        Ok((
            FockState {
                basis: self.basis.clone(),
                terms,
                subnormalized: self.subnormalized,
            },
            lost,
        ))
    }

    /// Conditions on `predicate`. Returns the renormalized conditional state
    /// and the selection probability.
    pub fn postselect<F>(&self, predicate: F) -> Result<(FockState, f64)>
    where
        F: Fn(&OccupationVector) -> bool,
    {
        let total = self.norm_sqr();
        let terms: BTreeMap<_, _> = self
            .terms
            .iter()
            .filter(|(occ, _)| predicate(occ))
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        let p: f64 = terms.values().map(|a: &Complex64| a.norm_sqr()).sum();
        if p <= 0.0 || terms.is_empty() {
            return Err(Error::EmptyOutcome);
        }
        let state = FockState {
            basis: self.basis.clone(),
            terms,
            subnormalized: false,
        }
        .normalized()?;
        Ok((state, p / total))
    }

    /// Threshold-detector probability of `pattern`: every `Click` mode holds at
    /// least one photon and every `NoClick` mode holds none. Unlisted modes and
    /// ancillas are traced over.
    pub fn detection_probability(&self, pattern: &[(ModeLabel, Click)]) -> Result<f64> {
        let idx: Vec<(usize, Click)> = pattern
            .iter()
            .map(|(m, c)| self.index_of(m).map(|i| (i, *c)))
            .collect::<Result<_>>()?;
        Ok(self
            .terms
            .iter()
            .filter(|(occ, _)| {
                idx.iter().all(|&(i, c)| match c {
                    Click::Click => occ.counts[i] > 0,
                    Click::NoClick => occ.counts[i] == 0,
                })
            })
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    pub fn mean_photons(&self, label: &ModeLabel) -> Result<f64> {
        self.normally_ordered_moment(std::slice::from_ref(label))
    }

    /// Normally ordered intensity moment `<:n_1 n_2 ... :>`. A label repeated
    /// k times contributes the falling factorial `n (n-1) ... (n-k+1)`.
    pub fn normally_ordered_moment(&self, labels: &[ModeLabel]) -> Result<f64> {
        let mut mult: BTreeMap<usize, u32> = BTreeMap::new();
        for l in labels {
            *mult.entry(self.index_of(l)?).or_insert(0) += 1;
        }
        Ok(self
            .terms
            .iter()
            .map(|(occ, a)| {
                let w: f64 = mult
                    .iter()
                    .map(|(&i, &k)| {
                        let n = occ.counts[i] as i64;
                        (0..k as i64)
                            .map(|j| (n - j).max(0) as f64)
                            .product::<f64>()
                    })
                    .product();
                w * a.norm_sqr()
            })
            .sum())
    }

    /// Reduced density matrix of one mode over photon numbers `0..=dim-1`,
    /// tracing every other mode (including ancillas).
    pub fn reduced_density(&self, label: &ModeLabel) -> Result<nalgebra::DMatrix<Complex64>> {
        let idx = self.index_of(label)?;
        let dim = self.basis.n_max as usize + 1;
        let mut rho = nalgebra::DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        // group terms by the occupation of all other modes
        let mut groups: BTreeMap<Vec<u8>, Vec<(usize, Complex64)>> = BTreeMap::new();
        for (occ, a) in &self.terms {
            let mut rest = occ.counts.clone();
            let n = rest[idx] as usize;
            rest[idx] = 0;
            groups.entry(rest).or_default().push((n, *a));
        }
        for g in groups.values() {
            for &(m, am) in g {
                for &(n, an) in g {
                    rho[(m, n)] += am * an.conj();
                }
            }
        }
        Ok(rho)
    }

    /// JSON dump: a list of `{occupation, re, im}` in basis order.
    pub fn to_json(&self) -> serde_json::Value {
        let dump: Vec<TermDump<'_>> = self
            .terms
            .iter()
            .map(|(o, a)| TermDump {
                occupation: &o.counts,
                re: a.re,
                im: a.im,
            })
            .collect();
        serde_json::to_value(dump).expect("term dump is always serializable")
    }
}
