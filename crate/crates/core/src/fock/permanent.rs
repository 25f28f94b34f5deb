//! Independent amplitude oracle: transition amplitudes between Fock states
//! as permanents of row/column-repeated submatrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::network::factorial;
use super::ModeNetwork;
use crate::error::{Error, Result};

/// Ryser's formula with Gray-code subset enumeration, O(2^n n).
pub fn permanent(a: &DMatrix<Complex64>) -> Complex64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "permanent of a non-square matrix");
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let adding = next & (1 << flipped) != 0;
        for (i, s) in row_sums.iter_mut().enumerate() {
            if adding {
                *s += a[(i, flipped)];
            } else {
                *s -= a[(i, flipped)];
            }
        }
        gray = next;
        let prod: Complex64 = row_sums.iter().product();
        if next.count_ones() % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}

/// `<out| L(U) |in>` for occupation counts given in the network's input and
/// output label order.
pub fn amplitude_oracle(net: &ModeNetwork, input: &[u8], output: &[u8]) -> Result<Complex64> {
    let n = net.len();
    if input.len() != n || output.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "oracle needs {n} counts per side, got {} and {}",
            input.len(),
            output.len()
        )));
    }
    let nin: u32 = input.iter().map(|&c| c as u32).sum();
    let nout: u32 = output.iter().map(|&c| c as u32).sum();
    if nin != nout {
        return Err(Error::PhotonNumberMismatch {
            input: nin,
            output: nout,
        });
    }
    let cols: Vec<usize> = input
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect();
    let rows: Vec<usize> = output
        .iter()
        .enumerate()
        .flat_map(|(o, &c)| std::iter::repeat_n(o, c as usize))
        .collect();
    let u = net.matrix();
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, c| u[(rows[r], cols[c])]);
    let norm: f64 = input
        .iter()
        .chain(output)
        .map(|&c| factorial(c as usize))
        .product();
    Ok(permanent(&sub) / norm.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{ModeLabel, Port};

    /// Permanent by explicit sum over permutations.
    fn brute_permanent(a: &DMatrix<Complex64>) -> Complex64 {
        fn rec(a: &DMatrix<Complex64>, row: usize, used: &mut Vec<bool>) -> Complex64 {
            if row == a.nrows() {
                return Complex64::new(1.0, 0.0);
            }
            let mut s = Complex64::new(0.0, 0.0);
            for c in 0..a.ncols() {
                if !used[c] {
                    used[c] = true;
                    s += a[(row, c)] * rec(a, row + 1, used);
                    used[c] = false;
                }
            }
            s
        }
        rec(a, 0, &mut vec![false; a.ncols()])
    }

    #[test]
    fn ryser_matches_permutation_sum() {
        for n in 1..=6 {
            let a = DMatrix::from_fn(n, n, |r, c| {
                Complex64::new(
                    (r * 7 + c * 3) as f64 * 0.1 - 0.4,
                    (r as f64 - c as f64) * 0.2,
                )
            });
            let b = brute_permanent(&a);
            assert!((permanent(&a) - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }

    fn fourier(n: usize) -> ModeNetwork {
        let labels: Vec<ModeLabel> = (0..n)
            .map(|k| ModeLabel::photonic(Port::SplitterVacuum(k as u8), 0))
            .collect();
        let outs: Vec<ModeLabel> = (0..n)
            .map(|k| ModeLabel::photonic(Port::Side(k as u8), 0))
            .collect();
        let m = DMatrix::from_fn(n, n, |j, k| {
            Complex64::from_polar(
                1.0 / (n as f64).sqrt(),
                2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64,
            )
        });
        ModeNetwork::new(labels, outs, m).unwrap()
    }

    #[test]
    fn identity_and_bunching() {
        let labels = vec![
            ModeLabel::photonic(Port::Source, 0),
            ModeLabel::photonic(Port::Source, 1),
        ];
        let id = ModeNetwork::identity(labels).unwrap();
        assert_eq!(
            amplitude_oracle(&id, &[1, 1], &[1, 1]).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        assert_eq!(amplitude_oracle(&id, &[1, 1], &[2, 0]).unwrap().norm(), 0.0);
        let bs = fourier(2);
        let a = amplitude_oracle(&bs, &[1, 1], &[2, 0]).unwrap();
        assert!((a.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            amplitude_oracle(&bs, &[1, 0], &[1, 1]),
            Err(Error::PhotonNumberMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_tritter_coincidence() {
        // brute-force permutation sum of the unnormalized 3x3 Fourier matrix
        let f = DMatrix::from_fn(3, 3, |j, k| {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (j * k) as f64 / 3.0)
        });
        let expected = brute_permanent(&f).norm_sqr() / 27.0;
        assert!((expected - 1.0 / 3.0).abs() < 1e-12);
        let a = amplitude_oracle(&fourier(3), &[1, 1, 1], &[1, 1, 1]).unwrap();
        assert!((a.norm_sqr() - expected).abs() < 1e-12);
    }
}
