// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; pass criterion numbers as arguments to run a
//! subset.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use vshape::dynamics::{
    conditional_spectroscopy, evolve, max_time_step, rabi_trace, DensityMatrix, DissipationParams, Pulse,
    PulseSequence, PulseTarget, SpectroscopyOptions,
};
use vshape::eigen::lowest_eigenpairs_with;
use vshape::fit::{fit, FitOptions, FreeParams, Line, LineData, LinePoint};
use vshape::grid::assemble_with_potential;
use vshape::levels::{classify_levels, selection_rules, transition_table, Dipole, Label, LevelTable, TransitionSet};
use vshape::sweep::{flux_sweep, SweepOptions};
use vshape::{
    basis_index, converged_spectrum, derived_energies, gzz_perturbative, harmonic_mode_frequencies, observable,
    potential_energy, solve_grid, CircuitParams, EigenOptions, Grid, GridSpec, Method, ObservableKind, PotentialMode,
    ReducedModel,
};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Reference {
    params: CircuitParams,
    table: LevelTable,
    lines: TransitionSet,
}

fn reference() -> &'static Reference {
    static CELL: OnceLock<Reference> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = CircuitParams::reference_device();
        let start = GridSpec::default_for(&params).unwrap();
        let spectrum =
            converged_spectrum(&params, &start, PotentialMode::Full, 12, 1e-3, &EigenOptions::default()).unwrap();
        let table = classify_levels(&spectrum, &params, None).unwrap();
        let lines = transition_table(&table).unwrap();
        Reference { params, table, lines }
    })
}

fn gzz_reproduction() -> Check {
    let g = gzz_perturbative(&CircuitParams::reference_device()).map_err(fail)?;
    let mhz = 2.0 * g * 1e3;
    ensure(
        (mhz - 144.0).abs() <= 2.0,
        format!("g_zz/pi = {mhz:.3} MHz (144 +/- 2)"),
    )
}

fn harmonic_limit() -> Check {
    let p = CircuitParams::reference_device();
    let (f_qb, f_a) = harmonic_mode_frequencies(&p).map_err(fail)?;
    let start = GridSpec::default_for(&p).map_err(fail)?;
    let s =
        converged_spectrum(&p, &start, PotentialMode::Quadratic, 6, 1e-3, &EigenOptions::default()).map_err(fail)?;
    let floor = potential_energy(&p, 0.0, 0.0).map_err(fail)?;
    let mut analytic: Vec<f64> = (0..6)
        .flat_map(|n| (0..6).map(move |m| (n, m)))
        .map(|(n, m)| floor + f_qb * (n as f64 + 0.5) + f_a * (m as f64 + 0.5))
        .collect();
    analytic.sort_by(f64::total_cmp);
    let worst = s
        .eigenvalues
        .iter()
        .zip(&analytic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let grid = s.refinement.last().unwrap().grid;
    ensure(
        worst <= 1e-3,
        format!(
            "f_qb = {f_qb:.4}, f_a = {f_a:.4} GHz; max deviation of 6 levels {:.3} kHz on {}x{}",
            worst * 1e6,
            grid.n_plus,
            grid.n_minus
        ),
    )
}

fn zero_flux_lines() -> Check {
    let t = &reference().lines;
    ensure(
        (t.f_qubit_line - 3.67).abs() <= 0.20 && (t.alpha + 0.30).abs() <= 0.10,
        format!(
            "qubit line {:.4} GHz (3.67 +/- 0.20), alpha {:.4} GHz (-0.30 +/- 0.10)",
            t.f_qubit_line, t.alpha
        ),
    )
}

fn cross_anharmonicity() -> Check {
    let r = reference();
    let g = gzz_perturbative(&r.params).map_err(fail)?;
    let chi = r.lines.chi;
    ensure(
        chi < 0.0 && (-chi / 2.0 - g).abs() <= 0.3 * g,
        format!(
            "chi = {:.2} MHz, -chi/2 = {:.2} MHz, g_zz = {:.2} MHz",
            chi * 1e3,
            -chi * 5e2,
            g * 1e3
        ),
    )
}

fn flux_sweep_properties() -> Check {
    let p = CircuitParams::reference_device();
    let fluxes: Vec<f64> = (0..51).map(|i| (i as f64 - 25.0) / 50.0).collect();
    let r = flux_sweep(&p, &fluxes, 12, &SweepOptions::default()).map_err(fail)?;
    let pts = &r.points;

    let mut problems = Vec::new();
    let positive: Vec<_> = pts.iter().filter(|pt| pt.flux >= 0.0).collect();
    let qubit: Vec<f64> = positive.iter().filter_map(|pt| pt.qubit_line).collect();
    if qubit.len() != positive.len() {
        problems.push("qubit line missing on [0, 0.5]".to_string());
    }
    if !qubit.windows(2).all(|w| w[1] < w[0]) {
        problems.push("qubit line not strictly decreasing on [0, 0.5]".to_string());
    }

    let mut even = 0.0f64;
    for (a, b) in pts.iter().zip(pts.iter().rev()) {
        let pairs = [(a.qubit_line, b.qubit_line), (a.ancilla_line, b.ancilla_line)];
        for (x, y) in pairs {
            match (x, y) {
                (Some(x), Some(y)) => even = even.max((x - y).abs()),
                (None, None) => {}
                _ => problems.push(format!("line present at {} but not at {}", a.flux, b.flux)),
            }
        }
        if let (Some(x), Some(y)) = (a.transitions, b.transitions) {
            even = even.max((x.f_qubit_12 - y.f_qubit_12).abs()).max((x.chi - y.chi).abs());
        }
    }
    if even > 2e-3 {
        problems.push(format!("evenness violated by {:.3} MHz", even * 1e3));
    }

    let mut period = 0.0f64;
    for x in [0.1, 0.25, 0.4] {
        let a = solve_grid(
            &p.with_flux(x),
            &r.grid,
            PotentialMode::Full,
            12,
            &EigenOptions::default(),
        )
        .map_err(fail)?;
        let b = solve_grid(
            &p.with_flux(x - 1.0),
            &r.grid,
            PotentialMode::Full,
            12,
            &EigenOptions::default(),
        )
        .map_err(fail)?;
        for (u, v) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            period = period.max((u - v).abs());
        }
    }
    if period > 2e-3 {
        problems.push(format!("periodicity violated by {:.3} MHz", period * 1e3));
    }

    let window: Vec<_> = pts
        .iter()
        .filter(|pt| (0.0..=0.45 + 1e-12).contains(&pt.flux))
        .collect();
    let relative = |v: Vec<f64>| {
        let hi = v.iter().copied().fold(f64::MIN, f64::max);
        let lo = v.iter().copied().fold(f64::MAX, f64::min);
        (hi - lo) / hi
    };
    let rel_q = relative(window.iter().filter_map(|pt| pt.qubit_line).collect());
    let rel_a = relative(window.iter().filter_map(|pt| pt.ancilla_line).collect());
    if !(rel_a < rel_q) {
        problems.push("ancilla varies more than the qubit".to_string());
    }

    let detail = format!(
        "51 points on {}x{}; evenness {:.2e} MHz, periodicity {:.2e} MHz, relative variation qubit {:.3} ancilla {:.4}",
        r.grid.n_plus,
        r.grid.n_minus,
        even * 1e3,
        period * 1e3,
        rel_q,
        rel_a
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn dipole_selection_rules() -> Check {
    let r = reference();
    let grid = r.table.grid.ok_or("level table has no grid")?;
    let d = observable(ObservableKind::ChargePlus, &r.params, &grid.spec, grid.mode).map_err(fail)?;
    let i = observable(ObservableKind::LoopCurrent, &r.params, &grid.spec, grid.mode).map_err(fail)?;
    let rules = selection_rules(&r.table, &d, &i).map_err(fail)?;
    let get = |op, a, b| rules.get(op, a, b).unwrap_or(f64::NAN);
    let q_allowed = get(Dipole::ChargePlus, Label::GG, Label::EG);
    let q_cross = get(Dipole::ChargePlus, Label::GG, Label::GE);
    let a_allowed = get(Dipole::LoopCurrent, Label::GG, Label::GE);
    let a_cross = get(Dipole::LoopCurrent, Label::GG, Label::EG);
    let diag = get(Dipole::LoopCurrent, Label::GG, Label::GG);
    let charge_ratio = q_allowed / q_cross;
    let current_ratio = a_allowed / a_cross;
    ensure(
        q_allowed > 0.0 && a_allowed > 0.0 && charge_ratio >= 1e6 && current_ratio >= 1e6 && diag <= 1e-6 * a_allowed,
        format!(
            "charge gg-eg/gg-ge = {charge_ratio:.2e}, current gg-ge/gg-eg = {current_ratio:.2e}, <gg|I|gg> = {diag:.1e}"
        ),
    )
}

const FIT_FLUXES: [f64; 9] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];

/// (Ic nA, C fF, L nH) and the initial-guess factors applied to each.
const FIT_CASES: [([f64; 3], [f64; 3]); 5] = [
    ([8.19, 39.7, 7.715], [1.2, 0.8, 1.2]),
    ([9.5, 35.0, 6.5], [0.8, 1.2, 0.8]),
    ([7.0, 45.0, 9.0], [1.2, 1.2, 0.8]),
    ([8.8, 31.0, 9.8], [0.8, 0.8, 1.2]),
    ([6.2, 50.0, 6.0], [1.2, 0.8, 0.8]),
];

fn synthetic_lines(p: &CircuitParams) -> Result<LineData, String> {
    let r = flux_sweep(p, &FIT_FLUXES, 12, &SweepOptions::default()).map_err(fail)?;
    let mut rows = Vec::new();
    for pt in &r.points {
        for (line, f) in [(Line::Qubit, pt.qubit_line), (Line::Ancilla, pt.ancilla_line)] {
            rows.push(LinePoint {
                flux: pt.flux,
                frequency_ghz: f.ok_or_else(|| format!("no {line:?} line at {}", pt.flux))?,
                line,
                weight: 1.0,
            });
        }
    }
    Ok(LineData { rows })
}

fn fit_round_trip() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, ([ic, c, l], factors)) in FIT_CASES.iter().enumerate() {
        let t = Instant::now();
        let truth = CircuitParams {
            ic: ic * 1e-9,
            c: c * 1e-15,
            l: l * 1e-9,
            d: 0.0,
            phi_b: 0.0,
        };
        let data = synthetic_lines(&truth)?;
        let init = CircuitParams {
            ic: truth.ic * factors[0],
            c: truth.c * factors[1],
            l: truth.l * factors[2],
            ..truth
        };
        let r = fit(&data, &init, FreeParams::default(), &FitOptions::default()).map_err(fail)?;
        let errs = [
            r.params.ic / truth.ic - 1.0,
            r.params.c / truth.c - 1.0,
            r.params.l / truth.l - 1.0,
        ];
        let worst = errs.iter().map(|e| e.abs()).fold(0.0, f64::max);
        ok &= worst < 0.01;
        parts.push(format!(
            "#{} max error {:.3}% ({} evals, {:.0}s)",
            k + 1,
            worst * 100.0,
            r.evaluations,
            t.elapsed().as_secs_f64()
        ));
    }
    ensure(ok, parts.join(", "))
}

fn dynamics() -> Check {
    let r = reference();
    let m: ReducedModel = r.lines.reduced_model().map_err(fail)?;
    let diss = DissipationParams::reference();
    let opts = SpectroscopyOptions::default();
    let mut problems = Vec::new();

    // (a) conditioning, spectroscopy and readout pulses
    let pulses = [
        (
            PulseTarget::Ancilla,
            m.ancilla_line(),
            opts.saturating_amplitude(),
            0.0,
            opts.conditioning_ns,
        ),
        (
            PulseTarget::Qubit,
            m.conditional_qubit_line(),
            opts.spectroscopy_amp_ghz,
            opts.conditioning_ns,
            opts.spectroscopy_ns,
        ),
        (
            PulseTarget::Readout,
            7.0,
            0.0,
            opts.conditioning_ns + opts.spectroscopy_ns,
            250.0,
        ),
    ]
    .map(|(target, f, a, s, d)| Pulse {
        target,
        frequency_ghz: f,
        amplitude_ghz: a,
        start_ns: s,
        duration_ns: d,
    });
    let seq = PulseSequence::new(pulses.to_vec(), None).map_err(fail)?;
    let tr = evolve(&m, &diss, &seq, &DensityMatrix::ground(), max_time_step(&m, &seq)).map_err(fail)?;
    let mut worst = 0.0f64;
    for s in &tr.samples {
        let t = s.rho.trace();
        worst = worst
            .max((t.re - 1.0).abs())
            .max(t.im.abs())
            .max(s.rho.max_asymmetry())
            .max(-s.rho.min_eigenvalue());
    }
    if worst > 1e-9 {
        problems.push(format!("(a) invariant violated by {worst:.1e}"));
    }

    // (b) free decay of the excited qubit
    let horizon = 1200.0;
    let idle = PulseSequence::new(Vec::new(), Some(horizon)).map_err(fail)?;
    let eg = basis_index(true, false);
    let decay = evolve(
        &m,
        &diss,
        &idle,
        &DensityMatrix::pure(eg).map_err(fail)?,
        max_time_step(&m, &idle),
    )
    .map_err(fail)?;
    let mut decay_err = 0.0f64;
    for s in decay.samples.iter().filter(|s| s.time_ns > 0.0) {
        let expect = (-s.time_ns * 1e-9 / diss.t1_qubit).exp();
        decay_err = decay_err.max((s.rho.populations()[eg] / expect - 1.0).abs());
    }
    if decay_err > 1e-6 {
        problems.push(format!("(b) decay relative error {decay_err:.1e}"));
    }

    // (c) conditional spectroscopy
    let lo = m.conditional_qubit_line() - 0.06;
    let hi = m.qubit_line() + 0.06;
    let n = ((hi - lo) / 0.0025).round() as usize;
    let fs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let spec = conditional_spectroscopy(&m, &diss, &fs, &[0.0, opts.saturating_amplitude()], &opts).map_err(fail)?;
    let summary = spec.summary();
    let separation = summary[1].separation_ghz;
    let single = summary[0].peaks.len() == 1;
    let split = separation.is_some_and(|s| (s - 2.0 * m.g).abs() <= 5e-3);
    if !(single && split) {
        problems.push(format!(
            "(c) {} peak(s) unconditioned, separation {separation:?} GHz vs 2g = {:.4} GHz",
            summary[0].peaks.len(),
            2.0 * m.g
        ));
    }

    // (d) Rabi decay
    let durations: Vec<f64> = (0..=375).map(|i| i as f64 * 4.0).collect();
    let rabi = rabi_trace(&m, &diss, 0.01, &durations, None).map_err(fail)?;
    let configured = diss.qubit_rabi_decay() * 1e9;
    let fitted = rabi.fit.map(|f| f.decay_ns);
    if !fitted.is_some_and(|d| (d / configured - 1.0).abs() <= 0.05) {
        problems.push(format!("(d) Rabi decay {fitted:?} ns vs {configured:.1} ns"));
    }

    let detail = format!(
        "(a) invariants {worst:.1e}; (b) decay error {decay_err:.1e}; (c) separation {:.2} MHz vs 2g = {:.2} MHz; (d) decay {:.1} ns vs {configured:.1} ns",
        separation.unwrap_or(f64::NAN) * 1e3,
        2e3 * m.g,
        fitted.unwrap_or(f64::NAN)
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn dense_lowest(h: &vshape::SparseOperator, k: usize) -> Vec<f64> {
    let n = h.dim();
    let d = h.to_dense();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| d[i][j]);
    let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e.truncate(k);
    e
}

fn eigensolver_certification() -> Check {
    let p = CircuitParams::reference_device();
    let spec = GridSpec::default_for(&p).map_err(fail)?;
    let s = derived_energies(&p).map_err(fail)?;

    let n = 24;
    let small = Grid {
        spec,
        mode: PotentialMode::Full,
        n_plus: n,
        n_minus: n,
        h_plus: 2.0 * PI / n as f64,
        h_minus: 2.0 * spec.lambda_minus / (n - 1) as f64,
        plus_half_width: PI,
        minus_center: 0.0,
    };
    let h = assemble_with_potential(&small, s.e_c, &small.sample_potential(&p).map_err(fail)?);
    let exact = dense_lowest(&h, 12);
    let mut dense_err = 0.0f64;
    for method in [Method::ShiftInvert, Method::Direct] {
        let opts = EigenOptions {
            method,
            ..EigenOptions::default()
        };
        let got = lowest_eigenpairs_with(&h, 12, &opts).map_err(fail)?;
        for (a, b) in got.eigenvalues.iter().zip(&exact) {
            dense_err = dense_err.max((a - b).abs());
        }
    }

    let eig = EigenOptions::default();
    let coarse = solve_grid(&p, &spec, PotentialMode::Full, 6, &eig).map_err(fail)?;
    let fine = solve_grid(&p, &spec.refined(), PotentialMode::Full, 6, &eig).map_err(fail)?;
    let doubling = coarse
        .eigenvalues
        .iter()
        .zip(&fine.eigenvalues)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut seed_spread = 0.0f64;
    for seed in [1, 42, 2024] {
        let other = solve_grid(&p, &spec, PotentialMode::Full, 6, &EigenOptions { seed, ..eig }).map_err(fail)?;
        for (a, b) in other.eigenvalues.iter().zip(&coarse.eigenvalues) {
            seed_spread = seed_spread.max((a - b).abs());
        }
    }

    ensure(
        dense_err <= 1e-9 && doubling <= 1e-3 && seed_spread <= eig.tol,
        format!(
            "24x24 dense deviation {dense_err:.1e} GHz; doubling {}x{} changes 6 levels by {:.3} MHz; seed spread {seed_spread:.1e} GHz",
            spec.n_plus,
            spec.n_minus,
            doubling * 1e3
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("coupling formula", gzz_reproduction),
        ("harmonic limit", harmonic_limit),
        ("zero-flux lines", zero_flux_lines),
        ("cross-anharmonicity", cross_anharmonicity),
        ("flux sweep", flux_sweep_properties),
        ("selection rules", dipole_selection_rules),
        ("fit round trip", fit_round_trip),
        ("dynamics", dynamics),
        ("eigensolver certification", eigensolver_certification),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();

    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !wanted.is_empty() && !wanted.contains(&number) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {number} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {number} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
