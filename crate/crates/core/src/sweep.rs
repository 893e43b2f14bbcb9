// SPDX-License-Identifier: Apache-2.0

//! Flux sweeps with labels continued outward from the symmetric point.
//!
//! Every flux point is solved independently on one fixed grid (so that
//! eigenvectors at different fluxes live in the same node space, whose φ₋
//! box moves with the flux), then labels are propagated along the flux axis
//! by maximal overlap. Gaps wider than `max_step` get hidden intermediate
//! points that are solved and tracked but not reported.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::eigen::{converged_spectrum, solve_grid, EigenOptions};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PotentialMode};
use crate::levels::{
    classify_levels, track_levels, transition_table, Label, LevelTable, TransitionSet, MIN_LEVELS, OVERLAP_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    /// Fixed grid; when absent the grid certified by refinement at zero flux
    /// is used.
    pub grid: Option<GridSpec>,
    pub mode: PotentialMode,
    /// Refinement target for choosing the grid, GHz.
    pub target: f64,
    /// Largest flux step between tracked points.
    pub max_step: f64,
    /// Step in d when ramping the asymmetry up from d = 0.
    pub max_asymmetry_step: f64,
    pub eigen: EigenOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid: None,
            mode: PotentialMode::Full,
            target: 1e-3,
            max_step: 0.02,
            max_asymmetry_step: 0.05,
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub flux: f64,
    /// E_eg − E_gg, available even when higher levels are missing.
    pub qubit_line: Option<f64>,
    /// E_ge − E_gg
    pub ancilla_line: Option<f64>,
    pub transitions: Option<TransitionSet>,
    /// Smallest overlap used to carry a label to this point.
    pub min_overlap: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub params: CircuitParams,
    pub grid: GridSpec,
    pub points: Vec<SweepPoint>,
}

/// One CSV row of a sweep export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub flux: f64,
    pub f_qubit_line: Option<f64>,
    pub f_ancilla_line: Option<f64>,
    pub f_qubit_12: Option<f64>,
    pub chi: Option<f64>,
    pub flags: String,
}

impl SweepResult {
    pub fn is_flagged(&self) -> bool {
        self.points.iter().any(|p| !p.flags.is_empty())
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.points
            .iter()
            .map(|p| SweepRow {
                flux: p.flux,
                f_qubit_line: p.transitions.map(|t| t.f_qubit_line),
                f_ancilla_line: p.transitions.map(|t| t.f_ancilla_line),
                f_qubit_12: p.transitions.map(|t| t.f_qubit_12),
                chi: p.transitions.map(|t| t.chi),
                flags: p.flags.join(";"),
            })
            .collect()
    }

    /// CSV with header `flux,f_qubit_line,f_ancilla_line,f_qubit_12,chi,flags`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.rows() {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// The grid a sweep of `p` runs on: the coarser grid of the first refinement
/// pair that agrees within `target` at zero flux.
pub fn sweep_grid(p: &CircuitParams, k: usize, opts: &SweepOptions) -> Result<GridSpec> {
    if let Some(g) = opts.grid {
        return Ok(g);
    }
    let p0 = p.with_flux(0.0);
    let start = GridSpec::default_for(&p0)?;
    let s = converged_spectrum(&p0, &start, opts.mode, k, opts.target, &opts.eigen)?;
    Ok(s.certified_grid().unwrap_or(start))
}

fn solve_levels(p: &CircuitParams, spec: &GridSpec, k: usize, opts: &SweepOptions) -> Result<crate::eigen::Spectrum> {
    solve_grid(p, spec, opts.mode, k, &opts.eigen).map_err(|e| Error::AtFlux {
        flux: p.phi_b,
        source: Box::new(e),
    })
}

/// Labelled levels at zero flux for asymmetry `p.d`, ramping d up from the
/// symmetric point when needed.
fn zero_flux_reference(p: &CircuitParams, spec: &GridSpec, k: usize, opts: &SweepOptions) -> Result<LevelTable> {
    let sym = p.with_flux(0.0).with_asymmetry(0.0);
    let mut table = classify_levels(&solve_levels(&sym, spec, k, opts)?, &sym, None)?;
    if p.d != 0.0 {
        let steps = (p.d.abs() / opts.max_asymmetry_step).ceil().max(1.0) as usize;
        for i in 1..=steps {
            let q = p.with_flux(0.0).with_asymmetry(p.d * i as f64 / steps as f64);
            table = track_levels(&solve_levels(&q, spec, k, opts)?, &q, &table)?;
        }
    }
    Ok(table)
}

fn chain(targets: &[f64], max_step: f64) -> Vec<(f64, bool)> {
    // targets sorted by |flux| on one side of zero; returns (flux, visible)
    let mut out = Vec::new();
    let mut last = 0.0;
    for &t in targets {
        let n = ((t - last).abs() / max_step).ceil().max(1.0) as usize;
        for i in 1..n {
            out.push((last + (t - last) * i as f64 / n as f64, false));
        }
        out.push((t, true));
        last = t;
    }
    out
}

fn point_from(table: &LevelTable, flux: f64, hidden_min: Option<f64>) -> SweepPoint {
    let mut flags = Vec::new();
    let min_overlap = match (table.min_overlap(), hidden_min) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    if table.is_flagged() || min_overlap.is_some_and(|m| m < OVERLAP_THRESHOLD) {
        flags.push("low_overlap".to_string());
    }
    let transitions = match transition_table(table) {
        Ok(t) => Some(t),
        Err(e) => {
            flags.push(format!("missing_level: {e}"));
            None
        }
    };
    let line = |l: Label| Some(table.energy(l).ok()? - table.energy(Label::GG).ok()?);
    SweepPoint {
        flux,
        qubit_line: line(Label::EG),
        ancilla_line: line(Label::GE),
        transitions,
        min_overlap,
        flags,
    }
}

/// Labelled transitions at each flux in `fluxes` (reported in input order).
pub fn flux_sweep(p: &CircuitParams, fluxes: &[f64], k: usize, opts: &SweepOptions) -> Result<SweepResult> {
    p.validate()?;
    if fluxes.is_empty() {
        return Err(Error::domain("flux list is empty"));
    }
    if let Some(f) = fluxes.iter().find(|f| !(f.is_finite() && f.abs() <= 1.0)) {
        return Err(Error::domain(format!("flux {f} is outside [-1, 1]")));
    }
    if k < MIN_LEVELS {
        return Err(Error::domain(format!(
            "a sweep needs at least {MIN_LEVELS} levels, got {k}"
        )));
    }
    if !(opts.max_step > 0.0) {
        return Err(Error::domain("max_step must be positive"));
    }
    let spec = sweep_grid(p, k, opts)?;
    let reference = zero_flux_reference(p, &spec, k, opts)?;

    let mut pos: Vec<f64> = fluxes.iter().copied().filter(|&f| f > 0.0).collect();
    let mut neg: Vec<f64> = fluxes.iter().copied().filter(|&f| f < 0.0).collect();
    pos.sort_by(f64::total_cmp);
    pos.dedup();
    neg.sort_by(|a, b| b.total_cmp(a));
    neg.dedup();
    let chains = [chain(&pos, opts.max_step), chain(&neg, opts.max_step)];

    let all: Vec<f64> = chains.iter().flatten().map(|&(f, _)| f).collect();
    let solved = par_map(&all, |&f| solve_levels(&p.with_flux(f), &spec, k, opts));
    let mut solved = solved.into_iter();

    let mut visible_points: Vec<SweepPoint> = vec![point_from(&reference, 0.0, None)];
    for ch in &chains {
        let mut prev = reference.clone();
        // worst overlap over hidden points since the last reported one
        let mut hidden_min: Option<f64> = None;
        for &(f, visible) in ch {
            let s = solved.next().expect("one solve per chain point")?;
            let table = track_levels(&s, &p.with_flux(f), &prev)?;
            let m = table.min_overlap();
            if visible {
                visible_points.push(point_from(&table, f, hidden_min));
                hidden_min = None;
            } else {
                hidden_min = match (hidden_min, m) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            prev = table;
        }
    }

    let points = fluxes
        .iter()
        .map(|&f| {
            let mut pt = visible_points
                .iter()
                .find(|pt| pt.flux == f)
                .expect("every flux was solved")
                .clone();
            pt.flux = f;
            pt
        })
        .collect();
    Ok(SweepResult {
        params: *p,
        grid: spec,
        points,
    })
}

/// Labelled levels of `p` on `spec`, continued from the symmetric point when
/// `p` is not itself symmetric.
pub fn labelled_levels(p: &CircuitParams, spec: &GridSpec, k: usize, opts: &SweepOptions) -> Result<LevelTable> {
    let mut table = zero_flux_reference(p, spec, k, opts)?;
    if p.phi_b == 0.0 {
        return Ok(table);
    }
    for (f, _) in chain(&[p.phi_b], opts.max_step) {
        let q = p.with_flux(f);
        table = track_levels(&solve_levels(&q, spec, k, opts)?, &q, &table)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_inserts_hidden_points() {
        let c = chain(&[0.05, 0.1], 0.02);
        let visible: Vec<f64> = c.iter().filter(|x| x.1).map(|x| x.0).collect();
        assert_eq!(visible, vec![0.05, 0.1]);
        assert_eq!(c.len(), 6);
        for w in c.windows(2) {
            assert!((w[1].0 - w[0].0) <= 0.02 + 1e-12);
        }
        let n = chain(&[-0.03], 0.02);
        assert_eq!(n.len(), 2);
        assert!(n[0].0 < 0.0 && !n[0].1);
    }

    #[test]
    fn sweep_input_validation() {
        let p = CircuitParams::reference_device();
        let opts = SweepOptions::default();
        assert!(matches!(flux_sweep(&p, &[], 8, &opts), Err(Error::Domain(_))));
        assert!(matches!(flux_sweep(&p, &[1.5], 8, &opts), Err(Error::Domain(_))));
        assert!(matches!(flux_sweep(&p, &[0.1], 4, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_header_and_flags() {
        let r = SweepResult {
            params: CircuitParams::reference_device(),
            grid: GridSpec::default_for(&CircuitParams::reference_device()).unwrap(),
            points: vec![SweepPoint {
                flux: 0.1,
                qubit_line: None,
                ancilla_line: None,
                transitions: None,
                min_overlap: Some(0.5),
                flags: vec!["low_overlap".into(), "x".into()],
            }],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("flux,f_qubit_line,f_ancilla_line,f_qubit_12,chi,flags")
        );
        assert_eq!(lines.next(), Some("0.1,,,,,low_overlap;x"));
    }
}
