// SPDX-License-Identifier: Apache-2.0

//! Run configuration. Every optional section is filled with its defaults
//! before a command runs, and the resolved document is echoed in each report.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vshape::dynamics::{DissipationParams, SpectroscopyOptions};
use vshape::fit::{FitOptions, FreeParams};
use vshape::{circuit::josephson_inductance, CircuitParams, EigenOptions, GridSpec, ReducedModel, Stencil};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub circuit: CircuitConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub rabi: RabiConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Circuit in SI units. The loop inductance is given either directly (`l`,
/// henry) or relative to the Josephson inductance (`l_over_lj`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub ic: f64,
    pub c: f64,
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub l_over_lj: Option<f64>,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub phi_b: f64,
}

/// Starting grid; unset entries come from the circuit-dependent default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_plus: Option<usize>,
    pub n_minus: Option<usize>,
    pub lambda_minus: Option<f64>,
    pub stencil: Option<Stencil>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Levels computed per grid solve.
    pub k: usize,
    /// Grid refinement stops once the k levels move by less than this (GHz).
    pub target_ghz: f64,
    pub quadratic: bool,
    pub eigen: EigenOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: 12,
            target_ghz: 1e-3,
            quadratic: false,
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit flux list; generated from start/stop/points when unset.
    pub fluxes: Option<Vec<f64>>,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub max_step: f64,
    pub max_asymmetry_step: f64,
    /// Run on the starting grid instead of the refinement-certified one.
    pub fixed_grid: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fluxes: None,
            start: -0.5,
            stop: 0.5,
            points: 51,
            max_step: 0.02,
            max_asymmetry_step: 0.05,
            fixed_grid: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub free: FreeParams,
    pub options: FitOptions,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub frequency_ghz: f64,
    pub duration_ns: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            frequency_ghz: 7.0,
            duration_ns: 250.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    /// Four-level model; derived from the exact spectrum at the circuit's
    /// flux bias when unset.
    pub model: Option<ReducedModel>,
    pub dissipation: DissipationParams,
    pub spectroscopy: SpectroscopyOptions,
    /// Probe frequencies; a grid around both conditional lines when unset.
    pub fs_ghz: Option<Vec<f64>>,
    pub fs_step_ghz: f64,
    pub fs_margin_ghz: f64,
    /// Defaults to zero, half-saturating and π amplitudes.
    pub conditioning_amps_ghz: Option<Vec<f64>>,
    /// Recorded in the sequence description only.
    pub readout: ReadoutConfig,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            model: None,
            dissipation: DissipationParams::reference(),
            spectroscopy: SpectroscopyOptions::default(),
            fs_ghz: None,
            fs_step_ghz: 0.0025,
            fs_margin_ghz: 0.06,
            conditioning_amps_ghz: None,
            readout: ReadoutConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiConfig {
    pub amplitude_ghz: f64,
    /// Sample durations; 0..=max_duration_ns in steps of step_ns when unset.
    pub durations_ns: Option<Vec<f64>>,
    pub max_duration_ns: f64,
    pub step_ns: f64,
    pub dt_ns: Option<f64>,
}

impl Default for RabiConfig {
    fn default() -> Self {
        RabiConfig {
            amplitude_ghz: 0.01,
            durations_ns: None,
            max_duration_ns: 1500.0,
            step_ns: 4.0,
            dt_ns: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn circuit_params(&self) -> Result<CircuitParams, String> {
        let c = &self.circuit;
        let l = match (c.l, c.l_over_lj) {
            (Some(l), None) => l,
            (None, Some(r)) => r * josephson_inductance(c.ic),
            (Some(_), Some(_)) => return Err("circuit: give either `l` or `l_over_lj`, not both".into()),
            (None, None) => return Err("circuit: missing field `l` (or `l_over_lj`)".into()),
        };
        let p = CircuitParams {
            ic: c.ic,
            c: c.c,
            l,
            d: c.d,
            phi_b: c.phi_b,
        };
        p.validate().map_err(|e| format!("circuit: {e}"))?;
        Ok(p)
    }

    /// Fill every default that depends on the circuit and check ranges.
    pub fn resolve(&mut self) -> Result<(), String> {
        let p = self.circuit_params()?;
        self.circuit.l = Some(p.l);
        self.circuit.l_over_lj = None;

        let base = GridSpec::default_for(&p.with_flux(0.0)).map_err(|e| e.to_string())?;
        let g = &mut self.grid;
        let spec = GridSpec {
            n_plus: g.n_plus.unwrap_or(base.n_plus),
            n_minus: g.n_minus.unwrap_or(base.n_minus),
            lambda_minus: g.lambda_minus.unwrap_or(base.lambda_minus),
            stencil: g.stencil.unwrap_or(base.stencil),
        };
        spec.validate().map_err(|e| format!("grid: {e}"))?;
        *g = GridConfig {
            n_plus: Some(spec.n_plus),
            n_minus: Some(spec.n_minus),
            lambda_minus: Some(spec.lambda_minus),
            stencil: Some(spec.stencil),
        };

        if self.solver.k < vshape::levels::MIN_LEVELS || self.solver.k > vshape::eigen::MAX_LEVELS {
            return Err(format!(
                "solver.k must be in {}..={} (level classification needs at least {} levels), got {}",
                vshape::levels::MIN_LEVELS,
                vshape::eigen::MAX_LEVELS,
                vshape::levels::MIN_LEVELS,
                self.solver.k
            ));
        }
        if !(self.solver.target_ghz >= 1e-4) {
            return Err(format!(
                "solver.target_ghz must be >= 1e-4, got {}",
                self.solver.target_ghz
            ));
        }

        let s = &mut self.sweep;
        if s.fluxes.is_none() {
            if s.points == 0 {
                return Err("sweep.points must be > 0".into());
            }
            let n = s.points;
            let list = (0..n)
                .map(|i| {
                    if n == 1 {
                        s.start
                    } else {
                        (s.start * (n - 1 - i) as f64 + s.stop * i as f64) / (n - 1) as f64
                    }
                })
                .collect();
            s.fluxes = Some(list);
        }
        if s.fluxes.as_ref().is_some_and(Vec::is_empty) {
            return Err("sweep.fluxes is empty".into());
        }

        self.pulse
            .dissipation
            .validate()
            .map_err(|e| format!("pulse.dissipation: {e}"))?;
        if let Some(m) = &self.pulse.model {
            m.validate().map_err(|e| format!("pulse.model: {e}"))?;
        }
        if !(self.pulse.fs_step_ghz > 0.0 && self.pulse.fs_margin_ghz >= 0.0) {
            return Err("pulse.fs_step_ghz must be > 0 and pulse.fs_margin_ghz >= 0".into());
        }
        if self.pulse.conditioning_amps_ghz.is_none() {
            let sp = &self.pulse.spectroscopy;
            self.pulse.conditioning_amps_ghz = Some(vec![0.0, sp.saturating_amplitude(), sp.pi_amplitude()]);
        }

        let r = &mut self.rabi;
        if r.durations_ns.is_none() {
            if !(r.step_ns > 0.0 && r.max_duration_ns > 0.0) {
                return Err("rabi.step_ns and rabi.max_duration_ns must be > 0".into());
            }
            let n = (r.max_duration_ns / r.step_ns).floor() as usize;
            r.durations_ns = Some((0..=n).map(|i| i as f64 * r.step_ns).collect());
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            n_plus: g.n_plus.expect("resolved"),
            n_minus: g.n_minus.expect("resolved"),
            lambda_minus: g.lambda_minus.expect("resolved"),
            stencil: g.stencil.expect("resolved"),
        }
    }
}
