// SPDX-License-Identifier: Apache-2.0

//! Least-squares extraction of (I_c, C, L) from measured transition lines.
//!
//! The search runs in log-parameter space (asymmetry d, when free, in linear
//! space) on a fixed coarse grid certified against its refinement. A first
//! pass minimizes a Cauchy loss, so a single line pushed around by an avoided
//! crossing cannot hold the simplex in a false basin; plain least squares
//! then starts from that point. The best point is re-evaluated on the grid
//! certified at the final accuracy, and the reported objective and residuals
//! come from that evaluation.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{derived_energies, josephson_inductance, CircuitParams, EnergyScales};
use crate::constants::{E_CHARGE, GHZ, PLANCK, REDUCED_FLUX_QUANTUM};
use crate::eigen::{solve_grid, EigenOptions};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialMode};
use crate::nelder_mead::{minimize, NelderMeadOptions, TracePoint};
use crate::sweep::{flux_sweep, sweep_grid, SweepOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Line {
    Qubit,
    Ancilla,
}

impl std::str::FromStr for Line {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qubit" => Ok(Line::Qubit),
            "ancilla" => Ok(Line::Ancilla),
            other => Err(format!("unknown line tag {other:?} (expected qubit or ancilla)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePoint {
    /// Φ0 units.
    pub flux: f64,
    /// GHz.
    pub frequency_ghz: f64,
    pub line: Line,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LineData {
    pub rows: Vec<LinePoint>,
}

impl LineData {
    pub fn distinct_fluxes(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.rows.iter().map(|r| r.flux).collect();
        f.sort_by(f64::total_cmp);
        f.dedup();
        f
    }

    /// CSV in the `flux,frequency_ghz,line,weight` layout.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["flux", "frequency_ghz", "line", "weight"])?;
        for r in &self.rows {
            let tag = match r.line {
                Line::Qubit => "qubit",
                Line::Ancilla => "ancilla",
            };
            out.write_record([
                format!("{:?}", r.flux),
                format!("{:?}", r.frequency_ghz),
                tag.into(),
                format!("{:?}", r.weight),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn load_line_data(path: impl AsRef<Path>) -> Result<LineData> {
    parse_line_data(&std::fs::read_to_string(path)?)
}

/// Parse measured lines. Two layouts are accepted:
/// `flux,frequency_ghz,line[,weight]` and the sweep export
/// `flux,f_qubit_line,f_ancilla_line,...`, whose rows yield one point per
/// non-empty line column. Lines starting with `#` are comments.
pub fn parse_line_data(text: &str) -> Result<LineData> {
    // source_lines[0] is the header; record i came from source_lines[i + 1]
    let (source_lines, kept): (Vec<usize>, Vec<&str>) = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .unzip();
    let body = kept.join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let header_line = source_lines.first().copied().unwrap_or(1);
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    enum Layout {
        Rows {
            freq: usize,
            line: usize,
            weight: Option<usize>,
        },
        Sweep {
            qubit: usize,
            ancilla: usize,
        },
    }
    let flux_col = col("flux").ok_or_else(|| parse_err(header_line, "missing column \"flux\"".into()))?;
    let layout = match (
        col("frequency_ghz"),
        col("line"),
        col("f_qubit_line"),
        col("f_ancilla_line"),
    ) {
        (Some(freq), Some(line), _, _) => Layout::Rows {
            freq,
            line,
            weight: col("weight"),
        },
        (_, _, Some(qubit), Some(ancilla)) => Layout::Sweep { qubit, ancilla },
        _ => {
            return Err(parse_err(
                header_line,
                "expected columns flux,frequency_ghz,line[,weight] or a sweep export".into(),
            ))
        }
    };

    let mut rows = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let record = record?;
        let line_no = source_lines[index + 1];
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize, what: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("{what} {:?} is not a number", field(i))))
        };
        let flux = number(flux_col, "flux")?;
        if !flux.is_finite() {
            return Err(parse_err(line_no, format!("flux {flux} is not finite")));
        }
        let mut push = |frequency_ghz: f64, line: Line, weight: f64| -> Result<()> {
            if !(frequency_ghz.is_finite() && frequency_ghz > 0.0) {
                return Err(parse_err(
                    line_no,
                    format!("frequency must be positive, got {frequency_ghz}"),
                ));
            }
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(parse_err(line_no, format!("weight must be non-negative, got {weight}")));
            }
            rows.push(LinePoint {
                flux,
                frequency_ghz,
                line,
                weight,
            });
            Ok(())
        };
        match layout {
            Layout::Rows { freq, line, weight } => {
                let f = number(freq, "frequency")?;
                let tag: Line = field(line).parse().map_err(|m| parse_err(line_no, m))?;
                let w = match weight {
                    Some(i) if !field(i).is_empty() => number(i, "weight")?,
                    _ => 1.0,
                };
                push(f, tag, w)?;
            }
            Layout::Sweep { qubit, ancilla } => {
                for (i, tag) in [(qubit, Line::Qubit), (ancilla, Line::Ancilla)] {
                    if !field(i).is_empty() {
                        push(number(i, "frequency")?, tag, 1.0)?;
                    }
                }
            }
        }
    }
    Ok(LineData { rows })
}

/// Which circuit parameters the fit may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeParams {
    pub ic: bool,
    pub c: bool,
    pub l: bool,
    pub d: bool,
}

impl Default for FreeParams {
    fn default() -> Self {
        FreeParams {
            ic: true,
            c: true,
            l: true,
            d: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Levels solved per flux point.
    pub k: usize,
    /// Grid used inside the search; certified automatically when absent.
    pub loop_grid: Option<GridSpec>,
    /// Accuracy the search grid must reach, GHz.
    pub loop_target: f64,
    /// Accuracy of the final verification, GHz.
    pub final_target: f64,
    /// Flux step between tracked points inside the search.
    pub loop_max_step: f64,
    /// Each free parameter is confined to [init/bound_factor, init·bound_factor].
    pub bound_factor: f64,
    /// Scale (GHz) of the Cauchy loss s²·ln(1 + r²/s²) minimized before the
    /// least-squares search; `None` skips that stage.
    pub robust_scale_ghz: Option<f64>,
    /// Shared by both stages.
    pub simplex: NelderMeadOptions,
    pub eigen: EigenOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            k: 12,
            loop_grid: None,
            loop_target: 2e-3,
            final_target: 1e-3,
            loop_max_step: 0.05,
            bound_factor: 4.0,
            robust_scale_ghz: Some(1e-3),
            simplex: NelderMeadOptions::default(),
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub flux: f64,
    pub line: Line,
    pub weight: f64,
    pub data_ghz: f64,
    pub model_ghz: f64,
    /// model − data, GHz.
    pub residual_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: CircuitParams,
    pub energies: EnergyScales,
    /// Σ w·r² in GHz² at `params` on the verification grid.
    pub objective: f64,
    pub residuals: Vec<Residual>,
    pub converged: bool,
    pub evaluations: usize,
    /// Best Cauchy loss per iteration of the robust stage.
    pub robust_trace: Vec<TracePoint>,
    /// Best Σ w·r² per iteration of the least-squares stage.
    pub trace: Vec<TracePoint>,
    /// Relative extent of the final simplex for each free parameter.
    pub final_steps: BTreeMap<String, f64>,
    pub loop_grid: GridSpec,
    pub verify_grid: GridSpec,
}

/// Model lines at the distinct fluxes of `data`, keyed by flux bits.
fn model_lines(
    p: &CircuitParams,
    data: &LineData,
    opts: &SweepOptions,
    k: usize,
) -> Result<BTreeMap<u64, (Option<f64>, Option<f64>)>> {
    let fluxes = data.distinct_fluxes();
    let sweep = flux_sweep(p, &fluxes, k, opts)?;
    Ok(sweep
        .points
        .iter()
        .map(|pt| (pt.flux.to_bits(), (pt.qubit_line, pt.ancilla_line)))
        .collect())
}

fn residuals_from(data: &LineData, lines: &BTreeMap<u64, (Option<f64>, Option<f64>)>) -> Result<Vec<Residual>> {
    data.rows
        .iter()
        .map(|r| {
            let (q, a) = lines[&r.flux.to_bits()];
            let model = match r.line {
                Line::Qubit => q,
                Line::Ancilla => a,
            }
            .ok_or_else(|| Error::AtFlux {
                flux: r.flux,
                source: Box::new(Error::MissingLabel(
                    match r.line {
                        Line::Qubit => "eg",
                        Line::Ancilla => "ge",
                    }
                    .into(),
                )),
            })?;
            Ok(Residual {
                flux: r.flux,
                line: r.line,
                weight: r.weight,
                data_ghz: r.frequency_ghz,
                model_ghz: model,
                residual_ghz: model - r.frequency_ghz,
            })
        })
        .collect()
}

fn sum_sq(res: &[Residual]) -> f64 {
    res.iter().map(|r| r.weight * r.residual_ghz * r.residual_ghz).sum()
}

fn cauchy_loss(res: &[Residual], scale: f64) -> f64 {
    let s2 = scale * scale;
    res.iter()
        .map(|r| r.weight * s2 * (r.residual_ghz * r.residual_ghz / s2).ln_1p())
        .sum()
}

/// Σ w·(f_model − f_data)² in GHz², with the model on a grid converged to
/// `opts.final_target`.
pub fn objective(p: &CircuitParams, data: &LineData, opts: &FitOptions) -> Result<f64> {
    if data.rows.is_empty() {
        return Ok(0.0);
    }
    let sweep_opts = SweepOptions {
        target: opts.final_target,
        eigen: opts.eigen,
        ..SweepOptions::default()
    };
    Ok(sum_sq(&residuals_from(
        data,
        &model_lines(p, data, &sweep_opts, opts.k)?,
    )?))
}

/// Coarsest grid, starting from 32×128, whose lowest six excitation energies
/// at zero flux agree with the doubled grid within `target`.
pub fn certify_loop_grid(p: &CircuitParams, target: f64, eigen: &EigenOptions) -> Result<GridSpec> {
    let p0 = p.with_flux(0.0);
    let mut spec = GridSpec::default_for(&p0)?.with_resolution(32, 128);
    let excitations = |spec: &GridSpec| -> Result<Vec<f64>> {
        let s = solve_grid(&p0, spec, PotentialMode::Full, 6, eigen)?;
        Ok(s.eigenvalues.iter().map(|e| e - s.eigenvalues[0]).collect())
    };
    let mut coarse = excitations(&spec)?;
    for _ in 0..4 {
        let fine = excitations(&spec.refined())?;
        let change = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change <= target {
            return Ok(spec);
        }
        spec = spec.refined();
        coarse = fine;
    }
    Err(Error::Config {
        message: format!("no grid up to {}x{} reaches {target} GHz", spec.n_plus, spec.n_minus),
        suggested_lambda: None,
    })
}

/// Starting point from zero-flux qubit and ancilla lines by inverting the
/// harmonic formulas f_qb = √(2E_J E_C), f_a = f_qb √(1 + 2L_J/L), with
/// E_C/E_J fixed at `ec_over_ej`.
pub fn initial_guess(qubit_line: f64, ancilla_line: f64, ec_over_ej: f64) -> Result<CircuitParams> {
    if !(qubit_line > 0.0 && ancilla_line > qubit_line && ec_over_ej > 0.0) {
        return Err(Error::domain(
            "initial guess needs 0 < qubit line < ancilla line and a positive E_C/E_J",
        ));
    }
    let e_c = qubit_line * (0.5 * ec_over_ej).sqrt();
    let e_j = qubit_line / (2.0 * ec_over_ej).sqrt();
    let lj_over_l = 0.5 * ((ancilla_line / qubit_line).powi(2) - 1.0);
    let ic = e_j * GHZ * PLANCK / REDUCED_FLUX_QUANTUM;
    let c = (2.0 * E_CHARGE).powi(2) / (2.0 * e_c * GHZ * PLANCK);
    let l = josephson_inductance(ic) / lj_over_l;
    CircuitParams::new(ic, c, l)
}

/// Design E_C/E_J of the reference device, used to seed [`initial_guess`].
pub fn reference_ec_over_ej() -> f64 {
    let s = derived_energies(&CircuitParams::reference_device()).expect("reference device is valid");
    s.e_c / s.e_j
}

/// Initial simplex of the least-squares stage relative to the robust one.
const POLISH_STEP: f64 = 0.01;

struct Coords {
    free: FreeParams,
}

impl Coords {
    fn pack(&self, p: &CircuitParams) -> Vec<f64> {
        let mut x = Vec::new();
        if self.free.ic {
            x.push(p.ic.ln());
        }
        if self.free.c {
            x.push(p.c.ln());
        }
        if self.free.l {
            x.push(p.l.ln());
        }
        if self.free.d {
            x.push(p.d);
        }
        x
    }

    fn unpack(&self, base: &CircuitParams, x: &[f64]) -> CircuitParams {
        let mut p = *base;
        let mut it = x.iter();
        if self.free.ic {
            p.ic = it.next().unwrap().exp();
        }
        if self.free.c {
            p.c = it.next().unwrap().exp();
        }
        if self.free.l {
            p.l = it.next().unwrap().exp();
        }
        if self.free.d {
            p.d = *it.next().unwrap();
        }
        p
    }

    fn names(&self) -> Vec<&'static str> {
        [
            ("ic", self.free.ic),
            ("c", self.free.c),
            ("l", self.free.l),
            ("d", self.free.d),
        ]
        .into_iter()
        .filter(|x| x.1)
        .map(|x| x.0)
        .collect()
    }
}

/// Fit the free parameters of `init` to `data`.
pub fn fit(data: &LineData, init: &CircuitParams, free: FreeParams, opts: &FitOptions) -> Result<FitResult> {
    init.validate()?;
    let coords = Coords { free };
    let n_free = coords.names().len();
    if n_free == 0 {
        return Err(Error::domain("no free parameters"));
    }
    if data.rows.len() < n_free.max(1) {
        return Err(Error::domain(format!(
            "{} data rows cannot constrain {n_free} free parameters",
            data.rows.len()
        )));
    }
    if !(opts.bound_factor > 1.0) {
        return Err(Error::domain("bound_factor must exceed 1"));
    }
    if opts.robust_scale_ghz.is_some_and(|r| !(r > 0.0)) {
        return Err(Error::domain("robust_scale_ghz must be > 0"));
    }

    let loop_grid = match opts.loop_grid {
        Some(g) => g,
        None => certify_loop_grid(init, opts.loop_target, &opts.eigen)?,
    };
    let loop_opts = SweepOptions {
        grid: Some(loop_grid),
        max_step: opts.loop_max_step,
        eigen: opts.eigen,
        ..SweepOptions::default()
    };
    let first_error: RefCell<Option<Error>> = RefCell::new(None);
    let residuals_at = |x: &[f64]| {
        let p = coords.unpack(init, x);
        match model_lines(&p, data, &loop_opts, opts.k).and_then(|m| residuals_from(data, &m)) {
            Ok(res) => Some(res),
            Err(e) => {
                first_error.borrow_mut().get_or_insert(e);
                None
            }
        }
    };

    let mut x0 = coords.pack(init);
    let span = opts.bound_factor.ln();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut step = Vec::new();
    for (name, &x) in coords.names().iter().zip(&x0) {
        if *name == "d" {
            lower.push(-0.95);
            upper.push(0.95);
            step.push(0.05);
        } else {
            lower.push(x - span);
            upper.push(x + span);
            step.push(0.1);
        }
    }
    let mut evaluations = 0;
    let mut robust_trace = Vec::new();
    if let Some(scale) = opts.robust_scale_ghz {
        let single = NelderMeadOptions {
            restarts: 0,
            ..opts.simplex
        };
        let f = |x: &[f64]| residuals_at(x).map_or(f64::INFINITY, |r| cauchy_loss(&r, scale));
        let m = minimize(f, &x0, &step, &lower, &upper, &single);
        evaluations = m.evaluations;
        robust_trace = m.trace;
        if m.value.is_finite() {
            x0 = m.x;
            for s in &mut step {
                *s *= POLISH_STEP;
            }
        }
    }
    let remaining = NelderMeadOptions {
        max_evals: opts.simplex.max_evals.saturating_sub(evaluations),
        ..opts.simplex
    };
    let f = |x: &[f64]| residuals_at(x).map_or(f64::INFINITY, |r| sum_sq(&r));
    let mut m = minimize(f, &x0, &step, &lower, &upper, &remaining);
    for t in &mut m.trace {
        t.evaluation += evaluations;
    }
    evaluations += m.evaluations;
    if !m.value.is_finite() {
        return Err(first_error
            .into_inner()
            .unwrap_or_else(|| Error::domain("objective is not finite anywhere")));
    }
    let params = coords.unpack(init, &m.x);

    let verify_opts = SweepOptions {
        target: opts.final_target,
        eigen: opts.eigen,
        ..SweepOptions::default()
    };
    let verify_grid = sweep_grid(&params, opts.k, &verify_opts)?;
    let residuals = residuals_from(
        data,
        &model_lines(
            &params,
            data,
            &SweepOptions {
                grid: Some(verify_grid),
                ..verify_opts
            },
            opts.k,
        )?,
    )?;
    let final_steps = coords
        .names()
        .into_iter()
        .zip(&m.extent)
        .map(|(n, &e)| (n.to_string(), e))
        .collect();
    Ok(FitResult {
        params,
        energies: derived_energies(&params)?,
        objective: sum_sq(&residuals),
        residuals,
        converged: m.converged && evaluations <= opts.simplex.max_evals,
        evaluations,
        robust_trace,
        trace: m.trace,
        final_steps,
        loop_grid,
        verify_grid,
    })
}
