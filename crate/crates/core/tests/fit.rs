// SPDX-License-Identifier: Apache-2.0

use vshape::fit::{fit, load_line_data, objective, FitOptions, FreeParams, Line, LineData, LinePoint};
use vshape::sweep::{flux_sweep, SweepOptions, SweepResult};
use vshape::{CircuitParams, GridSpec};

const FLUXES: [f64; 3] = [0.0, 0.1, 0.2];

fn sweep(p: &CircuitParams) -> SweepResult {
    flux_sweep(p, &FLUXES, 12, &SweepOptions::default()).unwrap()
}

fn lines(r: &SweepResult, which: &[Line]) -> LineData {
    let mut rows = Vec::new();
    for pt in &r.points {
        for &line in which {
            let f = match line {
                Line::Qubit => pt.qubit_line,
                Line::Ancilla => pt.ancilla_line,
            };
            rows.push(LinePoint {
                flux: pt.flux,
                frequency_ghz: f.unwrap(),
                line,
                weight: 1.0,
            });
        }
    }
    LineData { rows }
}

fn ic_only() -> FreeParams {
    FreeParams {
        ic: true,
        c: false,
        l: false,
        d: false,
    }
}

#[test]
fn objective_vanishes_at_the_generating_point() {
    let p = CircuitParams::reference_device();
    let data = lines(&sweep(&p), &[Line::Qubit, Line::Ancilla]);
    let opts = FitOptions::default();
    let at_truth = objective(&p, &data, &opts).unwrap();
    assert!(at_truth <= 1e-8, "{at_truth}");
    let bumped = CircuitParams { ic: p.ic * 1.01, ..p };
    assert!(objective(&bumped, &data, &opts).unwrap() > at_truth);
}

#[test]
fn single_parameter_round_trip_and_weight_invariance() {
    let truth = CircuitParams::reference_device();
    let data = lines(&sweep(&truth), &[Line::Qubit]);
    let init = CircuitParams {
        ic: truth.ic * 1.15,
        ..truth
    };
    let opts = FitOptions::default();
    let r = fit(&data, &init, ic_only(), &opts).unwrap();
    assert!(r.converged);
    assert!((r.params.ic / truth.ic - 1.0).abs() < 1e-3, "{}", r.params.ic);
    assert_eq!((r.params.c, r.params.l), (truth.c, truth.l));

    let mut heavy = data.clone();
    for row in &mut heavy.rows {
        row.weight *= 4.0;
    }
    let h = fit(&heavy, &init, ic_only(), &opts).unwrap();
    assert!((h.params.ic / r.params.ic - 1.0).abs() < 1e-12);
    assert!((h.objective / r.objective - 4.0).abs() < 1e-6 || r.objective < 1e-20);
}

#[test]
fn starting_at_the_truth_stays_there() {
    let truth = CircuitParams::reference_device();
    let data = lines(&sweep(&truth), &[Line::Qubit, Line::Ancilla]);
    let r = fit(&data, &truth, FreeParams::default(), &FitOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.objective < 1e-8, "{}", r.objective);
    for (a, b) in [(r.params.ic, truth.ic), (r.params.c, truth.c), (r.params.l, truth.l)] {
        assert!((a / b - 1.0).abs() < 1e-3);
    }
}

#[test]
fn sweep_export_reimports_to_identical_lines() {
    let p = CircuitParams::reference_device();
    let opts = SweepOptions {
        grid: Some(GridSpec::default_for(&p).unwrap().with_resolution(32, 128)),
        ..SweepOptions::default()
    };
    let r = flux_sweep(&p, &[-0.3, 0.0, 0.25], 12, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    r.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_line_data(&path).unwrap();
    assert_eq!(back, lines(&r, &[Line::Qubit, Line::Ancilla]));
}

#[test]
fn non_positive_robust_scale_is_rejected() {
    let data =
        vshape::fit::parse_line_data("flux,frequency_ghz,line\n0.0,3.65,qubit\n0.1,3.56,qubit\n0.0,13.37,ancilla\n")
            .unwrap();
    let opts = FitOptions {
        robust_scale_ghz: Some(0.0),
        ..FitOptions::default()
    };
    let err = fit(&data, &CircuitParams::reference_device(), FreeParams::default(), &opts).unwrap_err();
    assert!(err.is_input_error());
    assert!(err.to_string().contains("robust_scale_ghz"));
}
