//! Linear-optical mode networks and their lift to Fock space.
//!
//! A network is a unitary `U` from an ordered list of input labels to an
//! ordered list of output labels, acting on creation operators as
//! `a_in^† -> Σ_out U[out, in] a_out^†`. Output labels may differ from input
//! labels (a delay line relabels bin t to t + 1).
//!
//! Fock-space evolution factors `U` into two-mode Givens rotations and a
//! diagonal phase layer and applies each factor to the sparse state. The
//! permanent oracle in `permanent.rs` is the independent check on this path.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{make_basis, FockState, ModeLabel, OccupationVector, PRUNE_THRESHOLD};
use crate::error::{Error, Result};

pub const UNITARITY_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const CAUSALITY_EPS: f64 = 1e-14;

/// Two-port coupler with power transmission `t`: the transmitted amplitude is
/// real and reflection carries a factor `i`. Entry `[out][in]`.
///
/// This is the only place the port-phase convention is fixed; the π shift
/// between the two detectors of an analyzer follows from it.
pub fn coupler(transmission: f64) -> [[Complex64; 2]; 2] {
    let t = Complex64::new(transmission.sqrt(), 0.0);
    let r = Complex64::new(0.0, (1.0 - transmission).sqrt());
    [[t, r], [r, t]]
}

#[derive(Clone, Copy, Debug)]
struct Rotation {
    i: usize,
    j: usize,
    /// `m[out][in]` over positions (i, j).
    m: [[Complex64; 2]; 2],
}

#[derive(Clone, Debug)]
struct Decomposition {
    /// Applied in order after the diagonal layer.
    rotations: Vec<Rotation>,
    diagonal: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct ModeNetwork {
    inputs: Vec<ModeLabel>,
    outputs: Vec<ModeLabel>,
    matrix: DMatrix<Complex64>,
    decomposition: OnceLock<Arc<Decomposition>>,
}

fn check_unique(labels: &[ModeLabel]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if l.is_ancilla() {
            return Err(Error::AncillaInNetwork(*l));
        }
        if !seen.insert(*l) {
            return Err(Error::DuplicateMode(*l));
        }
    }
    Ok(())
}

impl ModeNetwork {
    /// Validates shape, label uniqueness, unitarity and causality.
    pub fn new(
        inputs: Vec<ModeLabel>,
        outputs: Vec<ModeLabel>,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self> {
        let n = inputs.len();
        if outputs.len() != n || matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs, {} outputs, {}x{} matrix",
                n,
                outputs.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_unique(&inputs)?;
        check_unique(&outputs)?;
        let net = ModeNetwork {
            inputs,
            outputs,
            matrix,
            decomposition: OnceLock::new(),
        };
        let dev = net.unitarity_deviation();
        if !(dev < UNITARITY_TOLERANCE) {
            return Err(Error::NonUnitary { deviation: dev });
        }
        for o in 0..n {
            for i in 0..n {
                if net.matrix[(o, i)].norm() > CAUSALITY_EPS
                    && net.outputs[o].bin < net.inputs[i].bin
                {
                    return Err(Error::Acausal {
                        input: net.inputs[i],
                        output: net.outputs[o],
                    });
                }
            }
        }
        Ok(net)
    }

    pub fn identity(labels: Vec<ModeLabel>) -> Result<Self> {
        let n = labels.len();
        Self::new(labels.clone(), labels, DMatrix::identity(n, n))
    }

    pub fn inputs(&self) -> &[ModeLabel] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[ModeLabel] {
        &self.outputs
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `max |U^† U - I|` over all entries.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.matrix.nrows();
        let p = self.matrix.adjoint() * &self.matrix;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((p[(r, c)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Transfer amplitude from `input` to `output` (zero when unconnected).
    pub fn element(&self, output: &ModeLabel, input: &ModeLabel) -> Result<Complex64> {
        let o = self
            .outputs
            .iter()
            .position(|l| l == output)
            .ok_or(Error::UnknownMode(*output))?;
        let i = self
            .inputs
            .iter()
            .position(|l| l == input)
            .ok_or(Error::UnknownMode(*input))?;
        Ok(self.matrix[(o, i)])
    }

    /// Composition: `self` first, then `next`. Outputs of `self` that `next`
    /// does not consume pass through unchanged.
    pub fn then(&self, next: &ModeNetwork) -> Result<ModeNetwork> {
        let mut builder = NetworkBuilder::from_network(self);
        builder.apply_network(next)?;
        builder.build()
    }

    fn decomposition(&self) -> Arc<Decomposition> {
        self.decomposition
            .get_or_init(|| Arc::new(decompose(&self.matrix)))
            .clone()
    }

    /// Evolves `state` through the multi-photon lift of this network.
    ///
    /// Every photonic mode of the state must be a network input; input modes
    /// absent from the state are vacuum. Ancilla modes pass through untouched.
    pub fn apply(&self, state: &FockState) -> Result<FockState> {
        if !state.is_subnormalized() && (state.norm_sqr() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "state norm {} is neither 1 nor flagged sub-normalized",
                state.norm_sqr()
            )));
        }
        let n = self.inputs.len();
        let in_pos: HashMap<ModeLabel, usize> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, l)| (*l, i))
            .collect();
        let mut passthrough = Vec::new();
        // column in the working vector for each state mode
        let mut column = Vec::with_capacity(state.modes().len());
        for m in state.modes() {
            if let Some(&p) = in_pos.get(m) {
                column.push(p);
            } else if m.is_ancilla() {
                if self.outputs.contains(m) {
                    return Err(Error::ModeMismatch(format!(
                        "{m} is both ancilla and output"
                    )));
                }
                column.push(n + passthrough.len());
                passthrough.push(*m);
            } else {
                return Err(Error::ModeMismatch(format!(
                    "state mode {m} is not a network input"
                )));
            }
        }
        let width = n + passthrough.len();
        let mut work: HashMap<Vec<u8>, Complex64> = HashMap::with_capacity(state.len());
        for (occ, a) in state.terms() {
            let mut v = vec![0u8; width];
            for (k, &c) in occ.counts().iter().enumerate() {
                v[column[k]] = c;
            }
            work.insert(v, *a);
        }

        let dec = self.decomposition();
        for (v, a) in work.iter_mut() {
            for (k, d) in dec.diagonal.iter().enumerate() {
                if v[k] > 0 {
                    *a *= d.powu(v[k] as u32);
                }
            }
        }
        for rot in &dec.rotations {
            work = apply_rotation(work, rot);
        }

        let mut labels: Vec<ModeLabel> = self.outputs.clone();
        labels.extend(passthrough.iter().copied());
        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by_key(|&i| labels[i]);
        let basis = Arc::new(make_basis(
            order.iter().map(|&i| labels[i]).collect(),
            state.basis().n_max(),
        )?);
        let mut terms: BTreeMap<OccupationVector, Complex64> = BTreeMap::new();
        for (v, a) in work {
            if a.norm() < PRUNE_THRESHOLD {
                continue;
            }
            let counts: Vec<u8> = order.iter().map(|&i| v[i]).collect();
            terms.insert(basis.occupation(counts)?, a);
        }
        Ok(FockState::from_map(basis, terms, state.is_subnormalized()))
    }
}

fn factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![1.0f64; 171];
        for k in 1..t.len() {
            t[k] = t[k - 1] * k as f64;
        }
        t
    })
}

pub(crate) fn factorial(n: usize) -> f64 {
    factorial_table()[n]
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Lifts a two-mode unitary to Fock space by expanding
/// `(m00 a_i^† + m10 a_j^†)^{n_i} (m01 a_i^† + m11 a_j^†)^{n_j}`.
fn apply_rotation(
    work: HashMap<Vec<u8>, Complex64>,
    rot: &Rotation,
) -> HashMap<Vec<u8>, Complex64> {
    let mut out: HashMap<Vec<u8>, Complex64> = HashMap::with_capacity(work.len() * 2);
    let [[m00, m01], [m10, m11]] = rot.m;
    for (v, a) in work {
        let ni = v[rot.i] as usize;
        let nj = v[rot.j] as usize;
        if ni == 0 && nj == 0 {
            *out.entry(v).or_insert(ZERO) += a;
            continue;
        }
        let total = ni + nj;
        let norm_in = (factorial(ni) * factorial(nj)).sqrt();
        let mut coeffs = vec![ZERO; total + 1];
        for k in 0..=ni {
            let ck = m00.powu(k as u32) * m10.powu((ni - k) as u32) * binomial(ni, k);
            if ck == ZERO {
                continue;
            }
            for l in 0..=nj {
                let cl = m01.powu(l as u32) * m11.powu((nj - l) as u32) * binomial(nj, l);
                coeffs[k + l] += ck * cl;
            }
        }
        for (oi, c) in coeffs.into_iter().enumerate() {
            let amp = a * c * ((factorial(oi) * factorial(total - oi)).sqrt() / norm_in);
            if amp.norm() < PRUNE_THRESHOLD {
                continue;
            }
            let mut w = v.clone();
            w[rot.i] = oi as u8;
            w[rot.j] = (total - oi) as u8;
            *out.entry(w).or_insert(ZERO) += amp;
        }
    }
    out.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
    out
}

/// Factors `U = G_1^† ... G_K^† D` by Givens eliminations on rows, so
/// `L(U) = L(G_1^†) ... L(G_K^†) L(D)`; rotations are returned in application
/// order.
fn decompose(u: &DMatrix<Complex64>) -> Decomposition {
    let n = u.nrows();
    let mut t = u.clone();
    let mut eliminations = Vec::new();
    for c in 0..n {
        for r in (c + 1)..n {
            let b = t[(r, c)];
            if b.norm() < PRUNE_THRESHOLD {
                continue;
            }
            let a = t[(c, c)];
            let rho = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let g = [[a.conj() / rho, b.conj() / rho], [-b / rho, a / rho]];
            for k in 0..n {
                let x = t[(c, k)];
                let y = t[(r, k)];
                t[(c, k)] = g[0][0] * x + g[0][1] * y;
                t[(r, k)] = g[1][0] * x + g[1][1] * y;
            }
            eliminations.push((c, r, g));
        }
    }
    let diagonal = (0..n).map(|k| t[(k, k)]).collect();
    let rotations = eliminations
        .into_iter()
        .rev()
        .map(|(i, j, g)| Rotation {
            i,
            j,
            // G^† over positions (i, j)
            m: [
                [g[0][0].conj(), g[1][0].conj()],
                [g[0][1].conj(), g[1][1].conj()],
            ],
        })
        .collect();
    Decomposition {
        rotations,
        diagonal,
    }
}

/// Incremental construction of a network by left-multiplying mode
/// operations onto an identity over the input labels.
#[derive(Clone, Debug)]
pub struct NetworkBuilder {
    inputs: Vec<ModeLabel>,
    rows: Vec<ModeLabel>,
    matrix: DMatrix<Complex64>,
}

impl NetworkBuilder {
    pub fn new(inputs: Vec<ModeLabel>) -> Self {
        let n = inputs.len();
        NetworkBuilder {
            rows: inputs.clone(),
            inputs,
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn from_network(net: &ModeNetwork) -> Self {
        NetworkBuilder {
            inputs: net.inputs.clone(),
            rows: net.outputs.clone(),
            matrix: net.matrix.clone(),
        }
    }

    /// Current output labels.
    pub fn outputs(&self) -> &[ModeLabel] {
        &self.rows
    }

    fn row(&self, label: &ModeLabel) -> Result<usize> {
        self.rows
            .iter()
            .position(|l| l == label)
            .ok_or(Error::UnknownMode(*label))
    }

    fn check_fresh(&self, label: &ModeLabel, replacing: &[usize]) -> Result<()> {
        match self.rows.iter().position(|l| l == label) {
            Some(p) if !replacing.contains(&p) => Err(Error::DuplicateMode(*label)),
            _ => Ok(()),
        }
    }

    /// Two-mode operation `m[out][in]` on modes `a`, `b`, renaming them to
    /// `out_a`, `out_b`.
    pub fn mix(
        &mut self,
        a: ModeLabel,
        b: ModeLabel,
        m: [[Complex64; 2]; 2],
        out_a: ModeLabel,
        out_b: ModeLabel,
    ) -> Result<&mut Self> {
        let ra = self.row(&a)?;
        let rb = self.row(&b)?;
        self.check_fresh(&out_a, &[ra, rb])?;
        self.check_fresh(&out_b, &[ra, rb])?;
        if out_a == out_b {
            return Err(Error::DuplicateMode(out_a));
        }
        for k in 0..self.matrix.ncols() {
            let x = self.matrix[(ra, k)];
            let y = self.matrix[(rb, k)];
            self.matrix[(ra, k)] = m[0][0] * x + m[0][1] * y;
            self.matrix[(rb, k)] = m[1][0] * x + m[1][1] * y;
        }
        self.rows[ra] = out_a;
        self.rows[rb] = out_b;
        Ok(self)
    }

    pub fn phase(&mut self, label: ModeLabel, phi: f64) -> Result<&mut Self> {
        let r = self.row(&label)?;
        let f = Complex64::from_polar(1.0, phi);
        for k in 0..self.matrix.ncols() {
            self.matrix[(r, k)] *= f;
        }
        Ok(self)
    }

    /// Renames an output (a delay line is a relabel to a later bin).
    pub fn relabel(&mut self, from: ModeLabel, to: ModeLabel) -> Result<&mut Self> {
        let r = self.row(&from)?;
        self.check_fresh(&to, &[r])?;
        self.rows[r] = to;
        Ok(self)
    }

    /// General k-mode operation `m[(out, in)]` over `labels`, renamed to `outs`.
    pub fn multimode(
        &mut self,
        labels: &[ModeLabel],
        m: &DMatrix<Complex64>,
        outs: &[ModeLabel],
    ) -> Result<&mut Self> {
        let k = labels.len();
        if m.nrows() != k || m.ncols() != k || outs.len() != k {
            return Err(Error::ShapeMismatch("multimode operator size".into()));
        }
        let rows: Vec<usize> = labels.iter().map(|l| self.row(l)).collect::<Result<_>>()?;
        for o in outs {
            self.check_fresh(o, &rows)?;
        }
        check_unique(outs)?;
        let old: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|&r| {
                (0..self.matrix.ncols())
                    .map(|c| self.matrix[(r, c)])
                    .collect()
            })
            .collect();
        for (p, &r) in rows.iter().enumerate() {
            for c in 0..self.matrix.ncols() {
                self.matrix[(r, c)] = (0..k).map(|q| m[(p, q)] * old[q][c]).sum();
            }
            self.rows[r] = outs[p];
        }
        Ok(self)
    }

    /// Appends a whole network acting on a subset of the current outputs.
    pub fn apply_network(&mut self, next: &ModeNetwork) -> Result<&mut Self> {
        self.multimode(&next.inputs, &next.matrix, &next.outputs)
    }

    pub fn build(self) -> Result<ModeNetwork> {
        ModeNetwork::new(self.inputs, self.rows, self.matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{Click, Port};

    fn lbl(p: Port) -> ModeLabel {
        ModeLabel::photonic(p, 0)
    }

    fn splitter() -> ModeNetwork {
        let mut b = NetworkBuilder::new(vec![lbl(Port::Source), lbl(Port::SplitterVacuum(1))]);
        b.mix(
            lbl(Port::Source),
            lbl(Port::SplitterVacuum(1)),
            coupler(0.5),
            lbl(Port::Side(0)),
            lbl(Port::Side(1)),
        )
        .unwrap();
        b.build().unwrap()
    }

    #[test]
    fn single_photon_splits_evenly() {
        let net = splitter();
        let basis = Arc::new(make_basis(vec![lbl(Port::Source)], 1).unwrap());
        let s = FockState::from_terms(basis, [(vec![1], Complex64::new(1.0, 0.0))]).unwrap();
        let out = net.apply(&s).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // modes sorted: Side(0) then Side(1)
        assert!((out.amplitude(&[1, 0]) - Complex64::new(h, 0.0)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 1]) - Complex64::new(0.0, h)).norm() < 1e-15);
        for side in 0..2 {
            let p = out
                .detection_probability(&[(lbl(Port::Side(side)), Click::Click)])
                .unwrap();
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn hong_ou_mandel() {
        let net = splitter();
        let basis =
            Arc::new(make_basis(vec![lbl(Port::Source), lbl(Port::SplitterVacuum(1))], 2).unwrap());
        let s = FockState::from_terms(basis, [(vec![1, 1], Complex64::new(1.0, 0.0))]).unwrap();
        let out = net.apply(&s).unwrap();
        assert!(out.amplitude(&[1, 1]).norm() < 1e-15);
        assert!((out.amplitude(&[2, 0]).norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_unitary_and_acausal() {
        let a = lbl(Port::Source);
        let b = lbl(Port::Side(0));
        let m = DMatrix::from_element(1, 1, Complex64::new(0.9, 0.0));
        assert!(matches!(
            ModeNetwork::new(vec![a], vec![b], m),
            Err(Error::NonUnitary { .. })
        ));
        let later = ModeLabel::photonic(Port::Long(0), 3);
        let earlier = ModeLabel::photonic(Port::Long(0), 2);
        assert!(matches!(
            ModeNetwork::new(vec![later], vec![earlier], DMatrix::identity(1, 1)),
            Err(Error::Acausal { .. })
        ));
        assert!(matches!(
            ModeNetwork::identity(vec![ModeLabel::ancilla(0)]),
            Err(Error::AncillaInNetwork(_))
        ));
    }

    #[test]
    fn mode_mismatch_is_an_error() {
        let net = splitter();
        let basis = Arc::new(make_basis(vec![lbl(Port::Short(0))], 1).unwrap());
        let s = FockState::vacuum(basis);
        assert!(matches!(net.apply(&s), Err(Error::ModeMismatch(_))));
    }

    #[test]
    fn composition_matches_sequential_application() {
        let net = splitter();
        let mut b = NetworkBuilder::new(vec![lbl(Port::Side(0)), lbl(Port::Side(1))]);
        b.phase(lbl(Port::Side(0)), 0.7).unwrap();
        b.mix(
            lbl(Port::Side(0)),
            lbl(Port::Side(1)),
            coupler(0.3),
            lbl(Port::Short(0)),
            lbl(Port::Long(0)),
        )
        .unwrap();
        let second = b.build().unwrap();
        let both = net.then(&second).unwrap();
        let basis =
            Arc::new(make_basis(vec![lbl(Port::Source), lbl(Port::SplitterVacuum(1))], 2).unwrap());
        let s = FockState::from_terms(
            basis,
            [
                (vec![1, 1], Complex64::new(0.6, 0.0)),
                (vec![2, 0], Complex64::new(0.0, 0.8)),
            ],
        )
        .unwrap();
        let one = both.apply(&s).unwrap();
        let two = second.apply(&net.apply(&s).unwrap()).unwrap();
        assert_eq!(one.modes(), two.modes());
        assert!((one.inner(&two).unwrap().norm() - 1.0).abs() < 1e-13);
    }
}
