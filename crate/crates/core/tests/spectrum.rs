// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use vshape::eigen::lowest_eigenpairs_with;
use vshape::grid::assemble_with_potential;
use vshape::levels::{classify_levels, transition_table, Label};
use vshape::sweep::{flux_sweep, SweepOptions};
use vshape::{
    converged_spectrum, harmonic_mode_frequencies, solve_grid, CircuitParams, EigenOptions, Grid, GridSpec,
    PotentialMode, Stencil,
};

#[test]
fn free_ring_matches_stencil_spectrum() {
    let n = 32;
    let e_c = 1.95;
    let spec = GridSpec {
        n_plus: n,
        n_minus: 32,
        lambda_minus: 2.0,
        stencil: Stencil::Sixth,
    };
    // a single φ₋ node with negligible coupling leaves only the ring
    let ring = Grid {
        spec,
        mode: PotentialMode::Full,
        n_plus: n,
        n_minus: 1,
        h_plus: 2.0 * PI / n as f64,
        h_minus: 1e9,
        plus_half_width: PI,
        minus_center: 0.0,
    };
    let h = assemble_with_potential(&ring, e_c, &vec![0.0; n]);
    let mut expect: Vec<f64> = (0..n)
        .map(|k| 0.5 * e_c / ring.h_plus.powi(2) * Stencil::Sixth.symbol(2.0 * PI * k as f64 / n as f64))
        .collect();
    expect.sort_by(f64::total_cmp);
    let got = lowest_eigenpairs_with(&h, 7, &EigenOptions::default()).unwrap();
    for (a, b) in got.eigenvalues.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn quadratic_levels_are_oscillator_ladders() {
    let p = CircuitParams::reference_device();
    let (f_qb, f_a) = harmonic_mode_frequencies(&p).unwrap();
    let spec = GridSpec::default_for(&p).unwrap().with_resolution(128, 128);
    let s = solve_grid(&p, &spec, PotentialMode::Quadratic, 8, &EigenOptions::default()).unwrap();
    assert!((s.eigenvalues[1] - s.eigenvalues[0] - f_qb).abs() < 1e-3);
    let t = classify_levels(&s, &p, None).unwrap();
    let gg = t.energy(Label::GG).unwrap();
    assert!((t.energy(Label::GE).unwrap() - gg - f_a).abs() < 1e-3);
    for level in &t.levels {
        if let Some(l) = level.label {
            let expect = l.qubit as f64 * f_qb + l.ancilla as f64 * f_a;
            assert!((level.energy - gg - expect).abs() < 1e-3, "{l}: {}", level.energy - gg);
        }
    }
}

#[test]
fn refinement_converges_by_the_second_doubling() {
    let p = CircuitParams::reference_device();
    let start = GridSpec::default_for(&p).unwrap();
    let s = converged_spectrum(&p, &start, PotentialMode::Full, 6, 1e-3, &EigenOptions::default()).unwrap();
    let last = s.refinement.last().unwrap().grid;
    assert!(last.n_plus <= 128 && last.n_minus <= 512);

    let loose = converged_spectrum(&p, &start, PotentialMode::Full, 6, 1.0, &EigenOptions::default()).unwrap();
    assert_eq!(loose.refinement.len(), 2);
    assert_eq!(loose.certified_grid(), Some(start));
}

#[test]
fn reference_levels_are_ordered_and_have_definite_parity() {
    let p = CircuitParams::reference_device();
    let spec = GridSpec::default_for(&p).unwrap();
    let s = solve_grid(&p, &spec, PotentialMode::Full, 12, &EigenOptions::default()).unwrap();
    let t = classify_levels(&s, &p, None).unwrap();
    let e = |l| t.energy(l).unwrap();
    assert!(e(Label::GG) < e(Label::EG));
    assert!(e(Label::EG) < e(Label::FG));
    assert!(e(Label::FG) < e(Label::GE));
    assert!(e(Label::GE) < e(Label::EE));
    assert!((t.get(Label::EG).unwrap().parity_plus + 1.0).abs() < 1e-6);
    assert!((t.get(Label::GE).unwrap().parity_plus - 1.0).abs() < 1e-6);

    let lines = transition_table(&t).unwrap();
    let detuning = (e(Label::EG) - e(Label::GG)) - (e(Label::EE) - e(Label::GE));
    assert!((detuning + lines.chi).abs() < 1e-12);
    assert!(lines.chi < 0.0);
}

#[test]
fn sweep_labels_survive_flux_refinement() {
    let p = CircuitParams::reference_device();
    let opts = SweepOptions {
        grid: Some(GridSpec::default_for(&p).unwrap().with_resolution(32, 128)),
        ..SweepOptions::default()
    };
    let coarse: Vec<f64> = (0..=5).map(|i| i as f64 * 0.1).collect();
    let fine: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
    let a = flux_sweep(&p, &coarse, 12, &opts).unwrap();
    let b = flux_sweep(&p, &fine, 12, &opts).unwrap();
    for (i, pa) in a.points.iter().enumerate() {
        let pb = &b.points[2 * i];
        assert_eq!(pa.flux, pb.flux);
        assert_eq!(pa.transitions.is_some(), pb.transitions.is_some(), "flux {}", pa.flux);
        for (x, y) in [(pa.qubit_line, pb.qubit_line), (pa.ancilla_line, pb.ancilla_line)] {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-9, "flux {}", pa.flux);
        }
    }
}
