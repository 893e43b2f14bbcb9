// SPDX-License-Identifier: Apache-2.0

//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string, so the page needs no generated TypeScript types.

use serde_json::json;
use vshape::dynamics::{conditional_spectroscopy, DissipationParams, SpectroscopyOptions};
use vshape::sweep::{flux_sweep, SweepOptions};
use vshape::{circuit::josephson_inductance, derived_energies, gzz_perturbative, harmonic_mode_frequencies};
use vshape::{CircuitParams, GridSpec, ReducedModel};
use wasm_bindgen::prelude::*;

/// Levels solved per point in the sweep.
const SWEEP_LEVELS: usize = 8;

fn circuit(ic_na: f64, c_ff: f64, l_over_lj: f64) -> Result<CircuitParams, String> {
    let ic = ic_na * 1e-9;
    CircuitParams::new(ic, c_ff * 1e-15, l_over_lj * josephson_inductance(ic)).map_err(|e| e.to_string())
}

/// Energy scales, harmonic mode frequencies and the perturbative coupling.
#[wasm_bindgen]
pub fn energies(ic_na: f64, c_ff: f64, l_over_lj: f64) -> Result<String, String> {
    let p = circuit(ic_na, c_ff, l_over_lj)?;
    let s = derived_energies(&p).map_err(|e| e.to_string())?;
    let (f_qb, f_a) = harmonic_mode_frequencies(&p).map_err(|e| e.to_string())?;
    let g = gzz_perturbative(&p).map_err(|e| e.to_string())?;
    Ok(json!({
        "e_j_ghz": s.e_j,
        "e_c_ghz": s.e_c,
        "e_l_ghz": s.e_l,
        "l_j_nh": s.l_j * 1e9,
        "f_qb_ghz": f_qb,
        "f_a_ghz": f_a,
        "gzz_over_pi_mhz": 2e3 * g,
    })
    .to_string())
}

/// Qubit and ancilla lines at `points` fluxes evenly spread over [0, 0.5],
/// on a fixed n_plus × n_minus grid.
#[wasm_bindgen]
pub fn sweep(
    ic_na: f64,
    c_ff: f64,
    l_over_lj: f64,
    d: f64,
    points: usize,
    n_plus: usize,
    n_minus: usize,
) -> Result<String, String> {
    let p = circuit(ic_na, c_ff, l_over_lj)?.with_asymmetry(d);
    p.validate().map_err(|e| e.to_string())?;
    if !(2..=101).contains(&points) {
        return Err(format!("points must be in 2..=101, got {points}"));
    }
    let grid = GridSpec::default_for(&p)
        .map_err(|e| e.to_string())?
        .with_resolution(n_plus, n_minus);
    let fluxes: Vec<f64> = (0..points).map(|i| 0.5 * i as f64 / (points - 1) as f64).collect();
    let opts = SweepOptions {
        grid: Some(grid),
        ..SweepOptions::default()
    };
    let r = flux_sweep(&p, &fluxes, SWEEP_LEVELS, &opts).map_err(|e| e.to_string())?;
    let rows: Vec<_> = r
        .points
        .iter()
        .map(|pt| {
            json!({
                "flux": pt.flux,
                "qubit_ghz": pt.qubit_line,
                "ancilla_ghz": pt.ancilla_line,
                "flagged": !pt.flags.is_empty(),
            })
        })
        .collect();
    Ok(json!({ "points": rows }).to_string())
}

/// Qubit excited population after a conditioning pulse of amplitude
/// `cond_amp_mhz` on the ancilla line and an 80 ns probe at each of
/// `points` frequencies spanning both conditional lines.
#[wasm_bindgen]
pub fn spectroscopy(f_qb: f64, f_a: f64, g: f64, cond_amp_mhz: f64, points: usize) -> Result<String, String> {
    let m = ReducedModel::new(f_qb, f_a, g).map_err(|e| e.to_string())?;
    if !(5..=401).contains(&points) {
        return Err(format!("points must be in 5..=401, got {points}"));
    }
    let lo = m.conditional_qubit_line() - 0.05;
    let hi = m.qubit_line() + 0.05;
    let fs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let r = conditional_spectroscopy(
        &m,
        &DissipationParams::reference(),
        &fs,
        &[cond_amp_mhz * 1e-3],
        &SpectroscopyOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let t = &r.traces[0];
    Ok(json!({
        "fs_ghz": t.fs_ghz,
        "p_excited": t.p_excited,
        "peaks_ghz": t.peaks.iter().map(|p| p.center_ghz).collect::<Vec<_>>(),
        "expected_ghz": r.expected_lines_ghz,
    })
    .to_string())
}
