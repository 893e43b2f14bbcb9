// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use vshape::dynamics::{conditional_spectroscopy, rabi_trace, PulseTarget};
use vshape::eigen::Spectrum;
use vshape::fit::{fit, load_line_data};
use vshape::levels::{classify_levels, selection_rules, transition_table, LevelTable};
use vshape::sweep::{flux_sweep, labelled_levels, SweepOptions};
use vshape::{
    assemble_hamiltonian, converged_spectrum, derived_energies, gzz_perturbative, harmonic_mode_frequencies,
    observable, CircuitParams, GridSpec, ObservableKind, PotentialMode, ReducedModel,
};

use crate::config::RunConfig;

/// Exit status and message of a failed command.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<vshape::Error> for Failure {
    fn from(e: vshape::Error) -> Self {
        Failure {
            code: if e.is_input_error() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    files: Vec<String>,
}

#[derive(Serialize)]
pub struct Report {
    pub command: &'static str,
    pub config: RunConfig,
    pub result: Value,
    pub files: Vec<String>,
}

impl Context {
    pub fn new(config: RunConfig, out_dir: PathBuf) -> Self {
        Context {
            config,
            out_dir,
            files: Vec::new(),
        }
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Failure::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        let f = File::create(&path).map_err(|e| Failure::io(&path, e))?;
        self.files.push(path.display().to_string());
        Ok(BufWriter::new(f))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(w))
            .and_then(|_| w.flush())
            .map_err(|e| Failure {
                code: 1,
                message: format!("{name}: {e}"),
            })
    }

    fn finish(self, command: &'static str, result: Value) -> Report {
        Report {
            command,
            config: self.config,
            result,
            files: self.files,
        }
    }

    fn params(&self) -> Result<CircuitParams, Failure> {
        self.config.circuit_params().map_err(Failure::usage)
    }

    fn mode(&self) -> PotentialMode {
        if self.config.solver.quadratic {
            PotentialMode::Quadratic
        } else {
            PotentialMode::Full
        }
    }

    fn sweep_options(&self, grid: GridSpec) -> SweepOptions {
        let c = &self.config;
        SweepOptions {
            grid: Some(grid),
            mode: self.mode(),
            target: c.solver.target_ghz,
            max_step: c.sweep.max_step,
            max_asymmetry_step: c.sweep.max_asymmetry_step,
            eigen: c.solver.eigen,
        }
    }
}

pub fn energies(ctx: Context) -> Result<Report, Failure> {
    let p = ctx.params()?;
    let s = derived_energies(&p)?;
    let sweet = p.phi_b == 0.0 && p.d == 0.0;
    let (harmonic, gzz) = if sweet {
        let (f_qb, f_a) = harmonic_mode_frequencies(&p)?;
        let g = gzz_perturbative(&p)?;
        (Some(json!({"f_qb_ghz": f_qb, "f_a_ghz": f_a})), Some(g))
    } else {
        (None, None)
    };
    let result = json!({
        "energy_scales": s,
        "l_over_lj": p.l / s.l_j,
        "harmonic": harmonic,
        "g_ghz": gzz,
        "gzz_over_pi_mhz": gzz.map(|g| 2.0 * g * 1e3),
    });
    Ok(ctx.finish("energies", result))
}

/// Converged spectrum and labelled levels at the configured flux bias.
fn exact_levels(ctx: &Context, p: &CircuitParams) -> Result<(Spectrum, LevelTable), Failure> {
    let c = &ctx.config;
    let start = c.grid_spec();
    let mode = ctx.mode();
    let s = converged_spectrum(p, &start, mode, c.solver.k, c.solver.target_ghz, &c.solver.eigen)?;
    let table = if p.phi_b == 0.0 && p.d == 0.0 {
        classify_levels(&s, p, None)?
    } else {
        let grid = s.certified_grid().unwrap_or(start);
        labelled_levels(p, &grid, c.solver.k, &ctx.sweep_options(grid))?
    };
    Ok((s, table))
}

pub fn spectrum(mut ctx: Context, dump_operator: bool) -> Result<Report, Failure> {
    let p = ctx.params()?;
    let mode = ctx.mode();
    if dump_operator {
        let spec = ctx.config.grid_spec();
        let h = assemble_hamiltonian(&p, &spec, mode)?;
        let header = vec![
            format!(
                "grid n_plus={} n_minus={} lambda_minus={:?} stencil={:?} mode={:?}",
                spec.n_plus, spec.n_minus, spec.lambda_minus, spec.stencil, mode
            ),
            format!(
                "circuit ic={:?} c={:?} l={:?} d={:?} phi_b={:?}",
                p.ic, p.c, p.l, p.d, p.phi_b
            ),
            "entries: row col value (GHz)".to_string(),
        ];
        let w = ctx.create("operator.txt")?;
        h.write_dump(w, &header)?;
    }
    let (s, table) = exact_levels(&ctx, &p)?;
    let transitions = transition_table(&table)?;
    let model = transitions.reduced_model().ok();
    let grid = table.grid.expect("classified tables carry their grid");
    let rules = {
        let d = observable(ObservableKind::ChargePlus, &p, &grid.spec, grid.mode)?;
        let i = observable(ObservableKind::LoopCurrent, &p, &grid.spec, grid.mode)?;
        selection_rules(&table, &d, &i)?
    };
    let harmonic = if p.phi_b == 0.0 && p.d == 0.0 {
        let (f_qb, f_a) = harmonic_mode_frequencies(&p)?;
        Some(json!({"f_qb_ghz": f_qb, "f_a_ghz": f_a, "gzz_perturbative_ghz": gzz_perturbative(&p)?}))
    } else {
        None
    };
    let result = json!({
        "eigenvalues_ghz": s.eigenvalues,
        "residuals_ghz": s.residuals,
        "solver": s.info,
        "refinement": s.refinement,
        "certified_grid": s.certified_grid(),
        "levels": table,
        "transitions": transitions,
        "reduced_model": model,
        "selection_rules": rules,
        "harmonic": harmonic,
    });
    ctx.write_json("spectrum.json", &result)?;
    Ok(ctx.finish("spectrum", result))
}

pub fn sweep(mut ctx: Context) -> Result<Report, Failure> {
    let p = ctx.params()?;
    let c = &ctx.config;
    let start = c.grid_spec();
    let grid = if c.sweep.fixed_grid {
        start
    } else {
        let p0 = p.with_flux(0.0);
        let s = converged_spectrum(
            &p0,
            &start,
            ctx.mode(),
            c.solver.k,
            c.solver.target_ghz,
            &c.solver.eigen,
        )?;
        s.certified_grid().unwrap_or(start)
    };
    let fluxes = c.sweep.fluxes.clone().unwrap_or_default();
    let r = flux_sweep(&p, &fluxes, c.solver.k, &ctx.sweep_options(grid))?;
    r.write_csv(ctx.create("sweep.csv")?)?;
    let flagged: Vec<f64> = r
        .points
        .iter()
        .filter(|pt| !pt.flags.is_empty())
        .map(|pt| pt.flux)
        .collect();
    let result = json!({
        "grid": r.grid,
        "points": r.points,
        "flagged_fluxes": flagged,
    });
    ctx.write_json("sweep.json", &result)?;
    Ok(ctx.finish("sweep", result))
}

pub fn fit_data(mut ctx: Context, data: Option<PathBuf>) -> Result<Report, Failure> {
    let p = ctx.params()?;
    let path = data
        .or_else(|| ctx.config.fit.data.clone())
        .ok_or_else(|| Failure::usage("fit needs a data file (--data PATH or fit.data)"))?;
    ctx.config.fit.data = Some(path.clone());
    let lines = load_line_data(&path)?;
    let r = fit(&lines, &p, ctx.config.fit.free, &ctx.config.fit.options)?;
    let s = &r.energies;
    let result = json!({
        "converged": r.converged,
        "params": r.params,
        "l_over_lj": r.params.l / s.l_j,
        "energies": r.energies,
        "objective_ghz2": r.objective,
        "evaluations": r.evaluations,
        "residuals": r.residuals,
        "final_steps": r.final_steps,
        "loop_grid": r.loop_grid,
        "verify_grid": r.verify_grid,
        "robust_trace": r.robust_trace,
        "trace": r.trace,
    });
    ctx.write_json("fit.json", &result)?;
    Ok(ctx.finish("fit", result))
}

fn reduced_model(ctx: &mut Context) -> Result<ReducedModel, Failure> {
    if let Some(m) = ctx.config.pulse.model {
        return Ok(m);
    }
    let p = ctx.params()?;
    let (_, table) = exact_levels(ctx, &p)?;
    let m = transition_table(&table)?.reduced_model()?;
    ctx.config.pulse.model = Some(m);
    Ok(m)
}

pub fn pulse(mut ctx: Context) -> Result<Report, Failure> {
    let m = reduced_model(&mut ctx)?;
    let pc = &mut ctx.config.pulse;
    if pc.fs_ghz.is_none() {
        let lo = m.conditional_qubit_line() - pc.fs_margin_ghz;
        let hi = m.qubit_line() + pc.fs_margin_ghz;
        let n = ((hi - lo) / pc.fs_step_ghz).round().max(2.0) as usize;
        pc.fs_ghz = Some((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect());
    }
    let pc = ctx.config.pulse.clone();
    let fs = pc.fs_ghz.unwrap_or_default();
    let amps = pc.conditioning_amps_ghz.unwrap_or_default();
    let r = conditional_spectroscopy(&m, &pc.dissipation, &fs, &amps, &pc.spectroscopy)?;
    r.write_csv(ctx.create("pulse_trace.csv")?)?;
    let sp = &pc.spectroscopy;
    let sequence = [
        (
            PulseTarget::Ancilla,
            r.conditioning_freq_ghz,
            f64::NAN,
            0.0,
            sp.conditioning_ns,
        ),
        (
            PulseTarget::Qubit,
            f64::NAN,
            sp.spectroscopy_amp_ghz,
            sp.conditioning_ns,
            sp.spectroscopy_ns,
        ),
        (
            PulseTarget::Readout,
            pc.readout.frequency_ghz,
            0.0,
            sp.conditioning_ns + sp.spectroscopy_ns,
            pc.readout.duration_ns,
        ),
    ]
    .map(|(target, f, a, start, d)| {
        json!({
            "target": target,
            "frequency_ghz": f.is_finite().then_some(f),
            "amplitude_ghz": a.is_finite().then_some(a),
            "start_ns": start,
            "duration_ns": d,
        })
    });
    let summary = json!({
        "model": m,
        "expected_lines_ghz": r.expected_lines_ghz,
        "expected_separation_ghz": 2.0 * m.g,
        "sequence": sequence,
        "dips": r.summary(),
    });
    ctx.write_json("pulse_dips.json", &summary)?;
    Ok(ctx.finish("pulse", summary))
}

pub fn rabi(mut ctx: Context) -> Result<Report, Failure> {
    let m = reduced_model(&mut ctx)?;
    let rc = ctx.config.rabi.clone();
    let durations = rc.durations_ns.unwrap_or_default();
    let r = rabi_trace(
        &m,
        &ctx.config.pulse.dissipation,
        rc.amplitude_ghz,
        &durations,
        rc.dt_ns,
    )?;
    {
        let mut w = ctx.create("rabi.csv")?;
        let io = |e: std::io::Error| Failure {
            code: 1,
            message: e.to_string(),
        };
        writeln!(w, "duration_ns,p_excited").map_err(io)?;
        for (d, p) in r.durations_ns.iter().zip(&r.p_excited) {
            writeln!(w, "{d},{p}").map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    let result = json!({
        "model": m,
        "drive_ghz": r.drive_ghz,
        "amplitude_ghz": r.amplitude_ghz,
        "fit": r.fit,
        "flags": r.flags,
        "configured_decay_ns": ctx.config.pulse.dissipation.qubit_rabi_decay() * 1e9,
    });
    ctx.write_json("rabi.json", &result)?;
    Ok(ctx.finish("rabi", result))
}
