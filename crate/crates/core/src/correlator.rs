//! Coincidence counting on sorted time-tag streams.
//!
//! Histograms are exact pair counts from a two-pointer sweep. Bin `k` holds
//! pairs whose delay `Δ = t_y - t_x` rounds (half away from zero) to
//! `k * bin_width`, for `|k| <= max_lag / bin_width`. The rounding rule makes
//! the histogram exactly mirror-symmetric under swapping the streams.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::first_unsorted;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub max_lag_ps: u64,
    /// `counts[i]` is lag bin `i - half_bins()`.
    pub counts: Vec<u64>,
    pub n_x: u64,
    pub n_y: u64,
    pub duration_ps: u64,
    /// Zero-lag self pairs were excluded.
    pub autocorrelation: bool,
}

impl CorrelationHistogram {
    pub fn half_bins(&self) -> i64 {
        (self.max_lag_ps / self.bin_width_ps) as i64
    }

    pub fn lag_ps(&self, index: usize) -> i64 {
        (index as i64 - self.half_bins()) * self.bin_width_ps as i64
    }

    pub fn count_at(&self, lag_bin: i64) -> Option<u64> {
        let i = lag_bin + self.half_bins();
        (0..self.counts.len() as i64)
            .contains(&i)
            .then(|| self.counts[i as usize])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Same data with the stream roles exchanged.
    pub fn mirrored(&self) -> Self {
        let mut h = self.clone();
        h.counts.reverse();
        std::mem::swap(&mut h.n_x, &mut h.n_y);
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lag_ps", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.lag_ps(i).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_sorted(ts: &[u64]) -> Result<()> {
    match first_unsorted(ts) {
        Some(index) => Err(Error::Unsorted { index }),
        None => Ok(()),
    }
}

fn check_grid(bin_width: u64, max_lag: u64) -> Result<()> {
    if bin_width == 0 {
        return Err(Error::InvalidParameter(
            "bin width must be at least 1 ps".into(),
        ));
    }
    if !max_lag.is_multiple_of(bin_width) {
        return Err(Error::InvalidParameter(format!(
            "max lag {max_lag} ps is not a multiple of the bin width {bin_width} ps"
        )));
    }
    if max_lag / bin_width > (1 << 28) {
        return Err(Error::InvalidParameter(
            "histogram has too many bins".into(),
        ));
    }
    Ok(())
}

/// Span of both streams, used as acquisition time when none is given.
fn span(x: &[u64], y: &[u64]) -> u64 {
    let first = x.first().into_iter().chain(y.first()).min().copied();
    let last = x.last().into_iter().chain(y.last()).max().copied();
    match (first, last) {
        (Some(a), Some(b)) => b - a + 1,
        _ => 0,
    }
}

/// Lag bin of `d` rounded half away from zero.
#[inline]
fn lag_bin(d: i128, w: i128) -> i128 {
    let k = (2 * d.abs() + w) / (2 * w);
    if d < 0 {
        -k
    } else {
        k
    }
}

/// Pairs with x drawn from `x[range]`; `y` is searched from a lower bound.
fn sweep(
    x: &[u64],
    y: &[u64],
    bin_width: u64,
    max_lag: u64,
    skip_self: bool,
    x_offset: usize,
    counts: &mut [u64],
) {
    let half = (max_lag / bin_width) as i128;
    let w = bin_width as i128;
    // widest |Δ| that still rounds into bin ±half
    let reach = (half * w + (w - 1) / 2) as u64;
    let mut start = match x.first() {
        Some(&x0) => y.partition_point(|&t| t < x0.saturating_sub(reach)),
        None => return,
    };
    for (i, &tx) in x.iter().enumerate() {
        let lo = tx.saturating_sub(reach);
        while start < y.len() && y[start] < lo {
            start += 1;
        }
        let hi = tx.saturating_add(reach);
        let mut j = start;
        while j < y.len() && y[j] <= hi {
            if !(skip_self && j == i + x_offset) {
                let k = lag_bin(y[j] as i128 - tx as i128, w);
                if k.abs() <= half {
                    counts[(k + half) as usize] += 1;
                }
            }
            j += 1;
        }
    }
}

fn histogram(
    x: &[u64],
    y: &[u64],
    bin_width: u64,
    max_lag: u64,
    auto: bool,
    chunks: usize,
) -> Result<CorrelationHistogram> {
    check_grid(bin_width, max_lag)?;
    check_sorted(x)?;
    check_sorted(y)?;
    let nbins = 2 * (max_lag / bin_width) as usize + 1;
    let chunks = chunks.max(1);
    let size = x.len().div_ceil(chunks).max(1);
    let counts = x
        .par_chunks(size)
        .enumerate()
        .map(|(c, xs)| {
            let mut local = vec![0u64; nbins];
            sweep(xs, y, bin_width, max_lag, auto, c * size, &mut local);
            local
        })
        .reduce(
            || vec![0u64; nbins],
            |mut a, b| {
                for (p, q) in a.iter_mut().zip(b) {
                    *p += q;
                }
                a
            },
        );
    Ok(CorrelationHistogram {
        bin_width_ps: bin_width,
        max_lag_ps: max_lag,
        counts,
        n_x: x.len() as u64,
        n_y: y.len() as u64,
        duration_ps: span(x, y),
        autocorrelation: auto,
    })
}

/// Exact cross-correlation histogram of two sorted streams.
pub fn cross_correlate(
    x: &[u64],
    y: &[u64],
    bin_width: u64,
    max_lag: u64,
) -> Result<CorrelationHistogram> {
    histogram(x, y, bin_width, max_lag, false, 1)
}

/// Same result as [`cross_correlate`], computed over `chunks` disjoint
/// slices of `x` in parallel.
pub fn cross_correlate_chunked(
    x: &[u64],
    y: &[u64],
    bin_width: u64,
    max_lag: u64,
    chunks: usize,
) -> Result<CorrelationHistogram> {
    histogram(x, y, bin_width, max_lag, false, chunks)
}

/// Autocorrelation excluding each tag's pairing with itself.
pub fn autocorrelate(x: &[u64], bin_width: u64, max_lag: u64) -> Result<CorrelationHistogram> {
    histogram(x, x, bin_width, max_lag, true, 1)
}

/// Pairs with `|(t_y - t_x) - lag| <= window / 2`.
pub fn coincidences_at(x: &[u64], y: &[u64], lag: i64, window: u64) -> Result<u64> {
    check_sorted(x)?;
    check_sorted(y)?;
    let lag = lag as i128;
    let win = window as i128;
    let mut start = 0usize;
    let mut n = 0u64;
    for &tx in x {
        let centre = tx as i128 + lag;
        // 2 |t_y - centre| <= window
        let lo = centre - win / 2;
        while start < y.len() && (y[start] as i128) < lo {
            start += 1;
        }
        let mut j = start;
        while j < y.len() && 2 * (y[j] as i128 - centre) <= win {
            if 2 * (y[j] as i128 - centre).abs() <= win {
                n += 1;
            }
            j += 1;
        }
    }
    Ok(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    pub bin_width_ps: u64,
    pub lags: Vec<i64>,
    pub g2: Vec<f64>,
    /// Count rates of x and y in Hz.
    pub rates: [f64; 2],
    pub duration_ps: u64,
}

/// `g²(Δt) = counts / (r_x r_y T bin_width)`; `duration_ps` overrides the
/// tag span stored in the histogram.
pub fn normalize_g2(h: &CorrelationHistogram, duration_ps: Option<u64>) -> Result<G2Curve> {
    let t = duration_ps.unwrap_or(h.duration_ps);
    if t == 0 {
        return Err(Error::InvalidParameter("zero acquisition time".into()));
    }
    if h.n_x == 0 || h.n_y == 0 {
        return Err(Error::InvalidParameter("a stream has no tags".into()));
    }
    let t_s = t as f64 * 1e-12;
    let rates = [h.n_x as f64 / t_s, h.n_y as f64 / t_s];
    // expected accidental pairs per bin = n_x n_y w / T
    let accidental = h.n_x as f64 * h.n_y as f64 * h.bin_width_ps as f64 / t as f64;
    Ok(G2Curve {
        bin_width_ps: h.bin_width_ps,
        lags: (0..h.counts.len()).map(|i| h.lag_ps(i)).collect(),
        g2: h.counts.iter().map(|&c| c as f64 / accidental).collect(),
        rates,
        duration_ps: t,
    })
}

impl G2Curve {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("g2 curve is always serializable")
    }
}
