//! One-bin transfer kernel for sequential exact sampling.
//!
//! A bin step maps (in-flight long-arm modes, source mode) to (detector
//! modes of this bin, long-arm modes of the next bin). Because the network
//! is linear, the output state is a fixed linear map of the input amplitudes.
//! The kernel stores that map as a dense matrix over the input basis
//! `(carried occupation, source photon number)` and the output basis
//! `(detector pattern, carried occupation)`, computed once through the Fock
//! lift of the network.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{make_basis, FockState, ModeLabel, ModeNetwork};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sparse matrix column: `(row, amplitude)` pairs.
type Column = Vec<(usize, Complex64)>;

#[derive(Clone, Debug)]
pub struct StepKernel {
    carry: Vec<Vec<u8>>,
    src_dim: usize,
    /// `(carry index, source photon number)` of each column.
    cols: Vec<(usize, usize)>,
    rows: usize,
    row_carry: Vec<usize>,
    pattern_start: Vec<usize>,
    patterns: Vec<[u8; 4]>,
    /// Column-major `rows x cols`.
    t: Vec<Complex64>,
}

fn occupations(modes: usize, max: u32) -> Vec<Vec<u8>> {
    fn rec(i: usize, left: u32, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[i] = k as u8;
            rec(i + 1, left - k, cur, out);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    rec(0, max, &mut vec![0; modes], &mut out);
    out.sort_by_key(|o| (o.iter().map(|&c| c as u32).sum::<u32>(), o.clone()));
    out
}

impl StepKernel {
    /// `channels[k]` is the detector mode reported as channel `k`, if any.
    /// Input combinations with more than `max_photons` photons are dropped.
    pub fn new(
        net: &ModeNetwork,
        source: ModeLabel,
        carry_in: &[ModeLabel],
        carry_out: &[ModeLabel],
        channels: [Option<ModeLabel>; 4],
        src_n_max: u32,
        max_photons: u32,
    ) -> Result<Self> {
        if carry_in.len() != carry_out.len() {
            return Err(Error::ShapeMismatch(
                "carried modes in and out differ".into(),
            ));
        }
        let mut expected: Vec<ModeLabel> = channels.iter().flatten().copied().collect();
        expected.extend_from_slice(carry_out);
        let mut outs = net.outputs().to_vec();
        expected.sort();
        outs.sort();
        if expected != outs {
            return Err(Error::ModeMismatch(
                "kernel channels and carried modes must be exactly the network outputs".into(),
            ));
        }
        let carry = occupations(carry_in.len(), max_photons);
        let carry_index: HashMap<Vec<u8>, usize> = carry
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let inputs = net.inputs().to_vec();
        let src_pos = inputs
            .iter()
            .position(|m| *m == source)
            .ok_or(Error::UnknownMode(source))?;
        let carry_pos: Vec<usize> = carry_in
            .iter()
            .map(|m| {
                inputs
                    .iter()
                    .position(|x| x == m)
                    .ok_or(Error::UnknownMode(*m))
            })
            .collect::<Result<_>>()?;

        let mut cols = Vec::new();
        let mut entries: BTreeMap<([u8; 4], usize), Column> = BTreeMap::new();
        for (ci, c) in carry.iter().enumerate() {
            let carried: u32 = c.iter().map(|&x| x as u32).sum();
            for n in 0..=src_n_max {
                if carried + n > max_photons {
                    continue;
                }
                let col = cols.len();
                cols.push((ci, n as usize));
                let mut counts = vec![0u8; inputs.len()];
                counts[src_pos] = n as u8;
                for (k, &p) in carry_pos.iter().enumerate() {
                    counts[p] = c[k];
                }
                let basis = Arc::new(make_basis(inputs.clone(), (carried + n).max(1))?);
                let input = FockState::from_terms(basis, [(counts, Complex64::new(1.0, 0.0))])?;
                let out = net.apply(&input)?;
                let chan_idx: Vec<Option<usize>> = channels
                    .iter()
                    .map(|m| m.map(|m| out.index_of(&m)).transpose())
                    .collect::<Result<_>>()?;
                let carry_idx: Vec<usize> = carry_out
                    .iter()
                    .map(|m| out.index_of(m))
                    .collect::<Result<_>>()?;
                for (occ, amp) in out.terms() {
                    let mut pattern = [0u8; 4];
                    for (k, i) in chan_idx.iter().enumerate() {
                        if let Some(i) = i {
                            pattern[k] = occ.get(*i);
                        }
                    }
                    let co: Vec<u8> = carry_idx.iter().map(|&i| occ.get(i)).collect();
                    let row_carry = carry_index[&co];
                    entries
                        .entry((pattern, row_carry))
                        .or_default()
                        .push((col, *amp));
                }
            }
        }
        let rows = entries.len();
        let mut t = vec![ZERO; rows * cols.len()];
        let mut row_carry = Vec::with_capacity(rows);
        let mut patterns: Vec<[u8; 4]> = Vec::new();
        let mut pattern_start = Vec::new();
        for (r, ((pattern, rc), list)) in entries.into_iter().enumerate() {
            if patterns.last() != Some(&pattern) {
                patterns.push(pattern);
                pattern_start.push(r);
            }
            row_carry.push(rc);
            for (col, a) in list {
                t[col * rows + r] += a;
            }
        }
        pattern_start.push(rows);
        Ok(StepKernel {
            carry,
            src_dim: src_n_max as usize + 1,
            cols,
            rows,
            row_carry,
            pattern_start,
            patterns,
            t,
        })
    }

    pub fn carry_len(&self) -> usize {
        self.carry.len()
    }

    pub fn src_dim(&self) -> usize {
        self.src_dim
    }

    pub fn patterns(&self) -> &[[u8; 4]] {
        &self.patterns
    }

    /// Carried state with nothing in flight.
    pub fn vacuum_carry(&self) -> Vec<Complex64> {
        let mut d = vec![ZERO; self.carry.len()];
        d[0] = Complex64::new(1.0, 0.0);
        d
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![ZERO; self.rows]
    }

    /// Evolves one bin: carried amplitudes `carry` and source amplitudes
    /// `src`. Samples a detector pattern, replaces `carry` with the
    /// conditional in-flight state and returns the pattern index and the
    /// probability weight retained by the truncation.
    pub fn step<R: Rng + ?Sized>(
        &self,
        carry: &mut [Complex64],
        src: &[Complex64],
        amp: &mut [Complex64],
        rng: &mut R,
    ) -> (usize, f64) {
        amp.fill(ZERO);
        for (k, &(ci, n)) in self.cols.iter().enumerate() {
            let coef = carry[ci] * src[n];
            if coef.re == 0.0 && coef.im == 0.0 {
                continue;
            }
            let col = &self.t[k * self.rows..(k + 1) * self.rows];
            for (a, c) in amp.iter_mut().zip(col) {
                *a += coef * c;
            }
        }
        let total: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        let mut u = rng.random::<f64>() * total;
        // rounding can leave u past the last bin; fall back to the last
        // pattern with weight
        let (mut chosen, mut weight) = (0, 0.0);
        for p in 0..self.patterns.len() {
            let w: f64 = amp[self.pattern_start[p]..self.pattern_start[p + 1]]
                .iter()
                .map(|a| a.norm_sqr())
                .sum();
            if w > 0.0 {
                (chosen, weight) = (p, w);
                if u < w {
                    break;
                }
            }
            u -= w;
        }
        carry.fill(ZERO);
        let s = 1.0 / weight.sqrt();
        for r in self.pattern_start[chosen]..self.pattern_start[chosen + 1] {
            carry[self.row_carry[r]] = amp[r] * s;
        }
        (chosen, total)
    }

    /// Exact pattern distribution for given input amplitudes.
    pub fn distribution(&self, carry: &[Complex64], src: &[Complex64]) -> Vec<([u8; 4], f64)> {
        let mut amp = self.scratch();
        for (k, &(ci, n)) in self.cols.iter().enumerate() {
            let coef = carry[ci] * src[n];
            for (r, a) in amp.iter_mut().enumerate() {
                *a += coef * self.t[k * self.rows + r];
            }
        }
        self.patterns
            .iter()
            .enumerate()
            .map(|(p, pat)| {
                let w = amp[self.pattern_start[p]..self.pattern_start[p + 1]]
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum();
                (*pat, w)
            })
            .collect()
    }
}
