//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one pass/fail line each.
//!
//! Criteria listed in `KNOWN_RED` are expected to fail under the model; the
//! target exits non-zero if any other criterion fails, or if a known-red one
//! starts passing so the list cannot go stale silently.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use franson_core::analytics::{
    analytic_counts, baseline_closed_form, chsh, chsh_from_visibility, pair_rates, ChshSettings,
    DetectorPair, RateModel, TSIRELSON,
};
use franson_core::correlator::{cross_correlate, normalize_g2};
use franson_core::fock::{amplitude_oracle, make_basis, FockState, ModeLabel, ModeNetwork, Port};
use franson_core::interferometer::multiport_postselection;
use franson_core::pipeline::{
    compare_to_anchor, montecarlo_chsh_counts, run, AnchorStatus, Experiment, ExperimentKind, Mode,
    PipelineConfig,
};
use franson_core::source::power_calibration;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

const KNOWN_RED: &[u32] = &[3];
const Q: f64 = 0.1;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Criterion = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "fock evolution vs permanent oracle", oracle_equivalence),
        (2, "lag-0 fringe shape", lag0_shape),
        (3, "side-peak phase independence", side_peaks),
        (4, "baseline factorization and super-bunching", baseline_law),
        (5, "ideal CHSH and Tsirelson bound", ideal_chsh),
        (6, "visibility to S and background sweep", visibility_to_s),
        (7, "Monte-Carlo CHSH end to end", montecarlo_chsh),
        (8, "correlator exactness, flatness, throughput", correlator),
        (9, "multiport post-selection", multiport),
        (10, "power calibration", calibration),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|s| name.contains(s.as_str()) || *s == id.to_string())
        {
            continue;
        }
        let t0 = Instant::now();
        let v = f();
        let known = KNOWN_RED.contains(&id);
        let tag = match (v.pass, known) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known red)",
            (true, true) => "PASS (expected red)",
        };
        println!(
            "criterion {id:>2} {tag:<16} {name} [{:.1?}]: {}",
            t0.elapsed(),
            v.detail
        );
        if v.pass == known {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}

fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    DMatrix::from_fn(n, n, |i, j| q[(i, j)] * (r[(j, j)] / r[(j, j)].norm()))
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut amplitudes = 0usize;
    let trials = 120;
    for _ in 0..trials {
        let m = rng.random_range(1..=6usize);
        let photons = rng.random_range(1..=3u32);
        let labels: Vec<ModeLabel> = (0..m)
            .map(|k| ModeLabel::photonic(Port::Side(k as u8), 0))
            .collect();
        let net = ModeNetwork::new(labels.clone(), labels.clone(), haar_unitary(m, &mut rng))
            .expect("Haar matrix is unitary");
        let mut input = vec![0u8; m];
        for _ in 0..photons {
            input[rng.random_range(0..m)] += 1;
        }
        let basis = Arc::new(make_basis(labels, photons).unwrap());
        let state =
            FockState::from_terms(basis, [(input.clone(), Complex64::new(1.0, 0.0))]).unwrap();
        let out = net.apply(&state).unwrap();
        let pos: Vec<usize> = net
            .outputs()
            .iter()
            .map(|l| out.modes().iter().position(|x| x == l).unwrap())
            .collect();
        let outputs = make_basis(net.outputs().to_vec(), photons).unwrap();
        for occ in outputs
            .enumerate()
            .into_iter()
            .filter(|o| o.total() == photons)
        {
            let mut counts = vec![0u8; out.modes().len()];
            for (k, &c) in occ.counts().iter().enumerate() {
                counts[pos[k]] = c;
            }
            let exact = amplitude_oracle(&net, &input, occ.counts()).unwrap();
            worst = worst.max((out.amplitude(&counts) - exact).norm());
            amplitudes += 1;
        }
    }
    let elapsed = t0.elapsed();
    verdict(
        worst < 1e-10 && elapsed < Duration::from_secs(30),
        format!(
            "{trials} unitaries, {amplitudes} amplitudes, max error {worst:.2e}, {elapsed:.2?}"
        ),
    )
}

fn lag0_shape() -> Verdict {
    let m = RateModel::ideal(Q);
    let phi_b = 0.3;
    let mut detail = String::new();
    let mut pass = true;
    for pair in [DetectorPair::A1B1, DetectorPair::A2B2] {
        let pts: Vec<(f64, f64)> = (0..24)
            .map(|k| {
                let d = 2.0 * PI * k as f64 / 24.0;
                (
                    d,
                    pair_rates(&m, phi_b + d, phi_b, 0).unwrap()[pair.index()],
                )
            })
            .collect();
        let f = |d: f64| 1.0 + d.cos();
        let k = pts.iter().map(|(d, r)| r * f(*d)).sum::<f64>()
            / pts.iter().map(|(d, _)| f(*d) * f(*d)).sum::<f64>();
        let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
        let resid = pts
            .iter()
            .map(|(d, r)| (r - k * f(*d)).abs())
            .fold(0.0, f64::max)
            / peak;
        let at_pi = pts[12].1 / peak;
        pass &= resid < 1e-10 && at_pi.abs() < 1e-12;
        let _ = write!(
            detail,
            "{pair}: K = {k:.6e} (q²/128 = {:.6e}, report-only), residual {resid:.1e}, zero {at_pi:.1e}; ",
            Q * Q / 128.0
        );
    }
    verdict(pass, detail.trim_end_matches("; ").into())
}

/// Largest relative spread of the lag ±1 rates over a 12×12 scan.
fn side_peak_spread(m: &RateModel) -> f64 {
    let grid: Vec<(f64, f64)> = (0..12)
        .flat_map(|i| (0..12).map(move |j| (i as f64 * PI / 6.0, j as f64 * PI / 6.0)))
        .collect();
    let mut worst = 0.0f64;
    for lag in [-1, 1] {
        let rates: Vec<[f64; 4]> = grid
            .par_iter()
            .map(|&(pa, pb)| pair_rates(m, pa, pb, lag).unwrap())
            .collect();
        for p in 0..4 {
            let hi = rates.iter().map(|r| r[p]).fold(f64::MIN, f64::max);
            let lo = rates.iter().map(|r| r[p]).fold(f64::MAX, f64::min);
            worst = worst.max((hi - lo) / hi);
        }
    }
    worst
}

fn side_peaks() -> Verdict {
    let spread = side_peak_spread(&RateModel::ideal(Q));
    let control = side_peak_spread(&RateModel::ideal(1.0));
    verdict(
        spread < 1e-12,
        format!("q = {Q}: relative spread {spread:.3e}; q = 1 control {control:.1e}"),
    )
}

fn baseline_law() -> Verdict {
    let m = RateModel::ideal(Q);
    let v = 1.0 - Q;
    let mut ratios = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            let (pa, pb) = (i as f64 * PI / 4.0, j as f64 * PI / 4.0);
            let r = pair_rates(&m, pa, pb, 2).unwrap();
            for p in DetectorPair::ALL {
                let sa = if p.a == 1 { 1.0 } else { -1.0 };
                let sb = if p.b == 1 { 1.0 } else { -1.0 };
                let shape = (1.0 + sa * v * pa.cos()) * (1.0 + sb * v * pb.cos());
                ratios.push(r[p.index()] / shape);
            }
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios
        .iter()
        .map(|r| (r / mean - 1.0).abs())
        .fold(0.0, f64::max);
    let lag0 = pair_rates(&m, PI, PI, 0).unwrap()[0];
    let base = pair_rates(&m, PI, PI, 2).unwrap()[0];
    let g2 = lag0 / base;
    let closed = baseline_closed_form(Q, PI, PI, DetectorPair::A1B1);
    verdict(
        spread < 1e-9 && g2 > 1.0 && ((base - closed) / closed).abs() < 1e-9,
        format!(
            "K' = {mean:.6e}, factorization spread {spread:.1e}; g²(π,π) = {g2:.3} (1/q² = {:.1})",
            1.0 / (Q * Q)
        ),
    )
}

fn ideal_chsh() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        output_dir: dir.path().to_path_buf(),
        ..PipelineConfig::default()
    };
    let r = run(
        &cfg,
        Experiment::new(ExperimentKind::ChshTable, Mode::Analytic),
    )
    .unwrap();
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(r.dir.join("chsh.json")).unwrap()).unwrap();
    let s = doc["analytic"]["s"].as_f64().unwrap();

    let m = cfg.rate_model();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let quads: Vec<ChshSettings> = (0..1000)
        .map(|_| ChshSettings {
            a: rng.random_range(0.0..2.0 * PI),
            a_prime: rng.random_range(0.0..2.0 * PI),
            b: rng.random_range(0.0..2.0 * PI),
            b_prime: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let max_s = quads
        .par_iter()
        .map(|&set| chsh(&analytic_counts(&m, set).unwrap()).unwrap().s)
        .reduce(|| 0.0, f64::max);
    verdict(
        (s - TSIRELSON).abs() < 1e-6 && max_s <= TSIRELSON + 1e-12,
        format!("S = {s:.9} (2√2 = {TSIRELSON:.9}); max over 1000 random settings {max_s:.9}"),
    )
}

fn visibility_to_s() -> Verdict {
    let s = chsh_from_visibility(ChshSettings::default(), 0.928).unwrap();
    let s_ok = (s - 2.624).abs() <= 0.001;
    let s_anchor = compare_to_anchor(s, 0.0, "chsh_s").unwrap();
    let v_anchor = compare_to_anchor(s / (2.0 * SQRT_2), 0.0, "visibility").unwrap();

    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let cfg = PipelineConfig {
        output_dir: out,
        ..PipelineConfig::default()
    };
    let r = run(
        &cfg,
        Experiment::new(ExperimentKind::BackgroundSweep, Mode::Analytic),
    )
    .unwrap();
    let rows = r.results["rows"].as_array().unwrap();
    let col = |k: &str| -> Vec<f64> {
        rows.iter()
            .map(|x| x[k].as_f64().unwrap_or(f64::NAN))
            .collect()
    };
    let (beta, g2, sv) = (col("beta"), col("g2_zero"), col("s"));
    let decreasing = sv.windows(2).all(|w| w[1] < w[0]);
    let s0 = (sv[0] - TSIRELSON).abs() < 1e-9;
    println!("    beta    g2(0)     S");
    for k in 0..beta.len() {
        println!("    {:.2}  {:>7.4}  {:.4}", beta[k], g2[k], sv[k]);
    }
    for a in &r.anchors {
        println!(
            "    anchor {} = {:.4} vs {} ({})",
            a.id, a.value, a.anchor, a.status
        );
    }
    println!("    table written to {}", r.dir.display());
    verdict(
        s_ok && s_anchor == AnchorStatus::Match
            && v_anchor == AnchorStatus::Match
            && decreasing
            && s0,
        format!(
            "S(V = 0.928) = {s:.4} (anchor 2.675(50): {s_anchor}); S(beta) decreasing {decreasing}, S(0) = 2√2 {s0}"
        ),
    )
}

fn montecarlo_chsh() -> Verdict {
    let mut cfg = PipelineConfig::default();
    cfg.apply_overrides(&[
        "source.q=0.1",
        "montecarlo.bins=10000000",
        "montecarlo.seed=20240517",
    ])
    .unwrap();
    let ideal = cfg.montecarlo.detectors.iter().all(|d| d.is_ideal());
    let t0 = Instant::now();
    let sim = chsh(&montecarlo_chsh_counts(&cfg).unwrap()).unwrap();
    let elapsed = t0.elapsed();
    let exact = chsh(&analytic_counts(&cfg.rate_model(), cfg.analysis.chsh).unwrap())
        .unwrap()
        .s;
    let dev = (sim.s - exact).abs() / sim.sigma_s;
    let pairs: f64 = sim.counts.iter().flatten().sum();
    verdict(
        ideal && dev <= 3.0 && elapsed < Duration::from_secs(600),
        format!(
            "4 settings × 1e7 bins, {pairs} coincidences: S = {:.4} ± {:.4} vs {exact:.6} ({dev:.2}σ), {elapsed:.1?}",
            sim.s, sim.sigma_s
        ),
    )
}

fn naive(x: &[u64], y: &[u64], w: u64, max_lag: u64) -> Vec<u64> {
    let half = (max_lag / w) as i128;
    let mut c = vec![0u64; 2 * half as usize + 1];
    for &a in x {
        for &b in y {
            let d = b as i128 - a as i128;
            let k = d.signum() * ((2 * d.abs() + w as i128) / (2 * w as i128));
            if k.abs() <= half {
                c[(k + half) as usize] += 1;
            }
        }
    }
    c
}

fn poisson(rate_hz: f64, duration_ps: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let gap = Exp::new(rate_hz * 1e-12).unwrap();
    let mut t = 0.0f64;
    let mut out = Vec::new();
    loop {
        t += gap.sample(rng);
        if t >= duration_ps as f64 {
            return out;
        }
        let tag = t as u64;
        if out.last().is_none_or(|&l| tag > l) {
            out.push(tag);
        }
    }
}

fn correlator() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = poisson(1e7, 1_000_000_000, &mut rng);
    let y = poisson(1e7, 1_000_000_000, &mut rng);
    let (x, y) = (&x[..x.len().min(10_000)], &y[..y.len().min(10_000)]);
    let identical =
        cross_correlate(x, y, 100, 100_000).unwrap().counts == naive(x, y, 100, 100_000);

    let t = 1_000_000_000_000u64;
    let x = poisson(1e6, t, &mut rng);
    let y = poisson(1e6, t, &mut rng);
    let h = cross_correlate(&x, &y, 1000, 50_000).unwrap();
    let g = normalize_g2(&h, Some(t)).unwrap();
    let sigma = 1.0 / (x.len() as f64 * y.len() as f64 * 1000.0 / t as f64).sqrt();
    let worst =
        g.g2.iter()
            .map(|v| (v - 1.0).abs() / sigma)
            .fold(0.0, f64::max);

    // throughput on one core: 100 ps bins, ±100 ns
    let t = 500_000_000_000u64;
    let x = poisson(1e7, t, &mut rng);
    let y = poisson(1e7, t, &mut rng);
    let t0 = Instant::now();
    let h = cross_correlate(&x, &y, 100, 100_000).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let rate = (x.len() + y.len()) as f64 / secs;
    let soft = if rate >= 1e7 { "met" } else { "missed (soft)" };
    verdict(
        identical && worst < 4.0,
        format!(
            "bit-identical {identical} on 1e4 tags; flat g² max |dev| {worst:.2}σ; throughput {:.2e} tags/s/core ({} pairs, target 1e7 {soft})",
            rate,
            h.total()
        ),
    )
}

fn multiport() -> Verdict {
    let p3 = multiport_postselection(3).unwrap();
    let p4 = multiport_postselection(4).unwrap();
    let e3 = (p3 - 6.0 / 27.0).abs();
    let e4 = (p4 - 24.0 / 256.0).abs();
    verdict(
        e3 < 1e-9 && e4 < 1e-9,
        format!("n = 3: {p3:.12} (6/27, error {e3:.1e}); n = 4: {p4:.12} (24/256, error {e4:.1e})"),
    )
}

fn calibration() -> Verdict {
    let p = power_calibration(0.01, 67.2e-12, 329.14e12).unwrap() * 1e12;
    verdict(
        (p - 32.46).abs() <= 0.01,
        format!("nbar = 0.01: {p:.4} pW (expected 32.46 ± 0.01)"),
    )
}
