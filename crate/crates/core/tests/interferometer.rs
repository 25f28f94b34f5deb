use std::f64::consts::PI;
use std::sync::Arc;

use franson_core::fock::{amplitude_oracle, make_basis, Click, FockState, ModeLabel, Port};
use franson_core::interferometer::{
    bell_fidelity, build_franson, build_multiport, detector, one_per_group_probability,
    postselect_bell_pair, splitter_network, FransonConfig, MultiportConfig,
};
use franson_core::source::{bin_state, SourceParams};
use num_complex::Complex64;

fn fock_input(bins: &[i32]) -> FockState {
    let modes: Vec<ModeLabel> = bins
        .iter()
        .map(|&b| ModeLabel::photonic(Port::Source, b))
        .collect();
    let n = modes.len();
    let basis = Arc::new(make_basis(modes, n as u32).unwrap());
    FockState::from_terms(basis, [(vec![1; n], Complex64::new(1.0, 0.0))]).unwrap()
}

fn joint(state: &FockState, a: ModeLabel, b: ModeLabel) -> f64 {
    state
        .detection_probability(&[(a, Click::Click), (b, Click::Click)])
        .unwrap()
}

#[test]
fn photon_pair_same_bin_fringe_depends_on_difference() {
    let input = fock_input(&[0, 1]);
    let p = |pa: f64, pb: f64| {
        let net = build_franson(&FransonConfig::with_phases(pa, pb, 2)).unwrap();
        joint(
            &net.apply(&input).unwrap(),
            detector(0, 1, 1),
            detector(1, 1, 1),
        )
    };
    let peak = p(0.0, 0.0);
    assert!(peak > 0.0);
    for d in [0.3, 1.0, 2.0, PI] {
        let expect = peak * (1.0 + d.cos()) / 2.0;
        assert!((p(d, 0.0) - expect).abs() < 1e-12);
        assert!((p(d + 0.9, 0.9) - expect).abs() < 1e-12);
    }
}

#[test]
fn photon_pair_side_peaks_are_phase_independent() {
    let input = fock_input(&[0, 1]);
    let mut values = Vec::new();
    for k in 0..12 {
        for j in 0..12 {
            let (pa, pb) = (k as f64 * PI / 6.0, j as f64 * PI / 6.0);
            let net = build_franson(&FransonConfig::with_phases(pa, pb, 2)).unwrap();
            let out = net.apply(&input).unwrap();
            values.push((
                joint(&out, detector(0, 1, 1), detector(1, 1, 2)),
                joint(&out, detector(0, 1, 2), detector(1, 1, 1)),
            ));
        }
    }
    for v in &values {
        assert!((v.0 - values[0].0).abs() < 1e-12 * values[0].0);
        assert!((v.1 - values[0].1).abs() < 1e-12 * values[0].1);
    }
}

#[test]
fn franson_is_unitary_and_matches_oracle() {
    let net = build_franson(&FransonConfig::with_phases(0.7, 2.1, 3)).unwrap();
    assert!(net.unitarity_deviation() < 1e-12);
    let input = fock_input(&[0, 2]);
    let out = net.apply(&input.with_modes(net.inputs()).unwrap()).unwrap();
    let in_counts: Vec<u8> = net
        .inputs()
        .iter()
        .map(|m| {
            u8::from(
                *m == ModeLabel::photonic(Port::Source, 0)
                    || *m == ModeLabel::photonic(Port::Source, 2),
            )
        })
        .collect();
    let mut checked = 0;
    for (occ, amp) in out.terms() {
        let counts: Vec<u8> = net
            .outputs()
            .iter()
            .map(|m| occ.get(out.index_of(m).unwrap()))
            .collect();
        let oracle = amplitude_oracle(&net, &in_counts, &counts).unwrap();
        assert!((oracle - amp).norm() < 1e-12);
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn multiport_one_photon_per_port() {
    for n in [2u8, 3, 4, 5] {
        let bins: Vec<i32> = (0..n as i32).collect();
        let net = build_multiport(&MultiportConfig::bare(n, n as u32)).unwrap();
        let out = net
            .apply(&fock_input(&bins).with_modes(net.inputs()).unwrap())
            .unwrap();
        let groups: Vec<Vec<ModeLabel>> = (0..n)
            .map(|s| bins.iter().map(|&t| detector(s, 1, t)).collect())
            .collect();
        let p = one_per_group_probability(&out, &groups).unwrap();
        let n_f = n as f64;
        let expect = (1..=n as u32).map(f64::from).product::<f64>() / n_f.powi(n as i32);
        assert!((p - expect).abs() < 1e-9, "n = {n}: {p} vs {expect}");
    }
}

#[test]
fn dft_two_is_the_splitter_up_to_phases() {
    let net = build_multiport(&MultiportConfig::bare(2, 1)).unwrap();
    let fbs = splitter_network(0.5, 0..1).unwrap();
    for (i, o) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
        let a = net.matrix()[(o, i)].norm();
        let b = fbs.matrix()[(o, i)].norm();
        assert!((a - b).abs() < 1e-12);
    }
}

fn bell_input(q: f64, theta_e: f64, theta_l: f64) -> FockState {
    let p = SourceParams {
        q,
        ..SourceParams::default()
    };
    let s = bin_state(&p, 0, theta_e)
        .unwrap()
        .tensor(&bin_state(&p, 1, theta_l).unwrap())
        .unwrap();
    let net = splitter_network(0.5, 0..2).unwrap();
    net.apply(&s.with_modes(net.inputs()).unwrap()).unwrap()
}

#[test]
fn bell_pair_ideal() {
    let (state, prob) = postselect_bell_pair(&bell_input(1.0, 0.0, 0.0), 0, 1).unwrap();
    assert!((bell_fidelity(&state, 0, 1).unwrap() - 1.0).abs() < 1e-12);
    assert!((prob - 1.0 / 8.0).abs() < 1e-12);
}

#[test]
fn bell_pair_weak_source() {
    let q = 0.1;
    let (state, prob) = postselect_bell_pair(&bell_input(q, 0.3, 0.3), 0, 1).unwrap();
    assert!((prob - q * q / 8.0).abs() < 1e-12);
    assert!((bell_fidelity(&state, 0, 1).unwrap() - 1.0).abs() < 1e-12);
    let amps: Vec<f64> = state.terms().map(|(_, a)| a.norm()).collect();
    assert_eq!(amps.len(), 2);
    assert!((amps[0] - amps[1]).abs() < 1e-12);
}

#[test]
fn bell_pair_laser_phase_is_global() {
    // both terms take one photon from each bin, so only θe + θl appears
    let (state, _) = postselect_bell_pair(&bell_input(0.5, 0.0, PI), 0, 1).unwrap();
    assert!((bell_fidelity(&state, 0, 1).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn bell_pair_needs_photons() {
    assert!(postselect_bell_pair(&bell_input(0.0, 0.0, 0.0), 0, 1).is_err());
}
