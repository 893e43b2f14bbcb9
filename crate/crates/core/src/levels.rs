// SPDX-License-Identifier: Apache-2.0

//! Labelling eigenlevels as |i, j⟩ (qubit excitation i, ancilla excitation j),
//! transition lines and dipole selection rules.
//!
//! At the symmetric point (Φ_b = 0, d = 0) both reflections φ₊ → −φ₊ and
//! φ₋ → −φ₋ are symmetries, and |i, j⟩ has parities ((−1)ⁱ, (−1)ʲ). Levels
//! are split into the four parity classes and matched, in energy order, to
//! the candidate labels of that class ranked by an anharmonic ladder
//! estimate. Elsewhere labels are carried over from a reference table by
//! maximal overlap of the eigenvectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, ReducedModel};
use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lanczos::dot;
use crate::sparse::SparseOperator;
use crate::symmetry::permutation_expectation;

pub const PARITY_THRESHOLD: f64 = 0.999;
pub const OVERLAP_THRESHOLD: f64 = 0.8;
pub const MIN_LEVELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub qubit: u8,
    pub ancilla: u8,
}

impl Label {
    pub const GG: Label = Label::new(0, 0);
    pub const EG: Label = Label::new(1, 0);
    pub const GE: Label = Label::new(0, 1);
    pub const EE: Label = Label::new(1, 1);
    /// Second qubit excitation.
    pub const FG: Label = Label::new(2, 0);

    pub const fn new(qubit: u8, ancilla: u8) -> Self {
        Label { qubit, ancilla }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [char; 4] = ['g', 'e', 'f', 'h'];
        match (NAMES.get(self.qubit as usize), NAMES.get(self.ancilla as usize)) {
            (Some(q), Some(a)) => write!(f, "{q}{a}"),
            _ => write!(f, "{},{}", self.qubit, self.ancilla),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Parity,
    Tracked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// GHz.
    pub energy: f64,
    pub label: Option<Label>,
    /// ⟨P₊⟩ for the φ₊ reflection.
    pub parity_plus: f64,
    /// ⟨P₋⟩ for the reflection about the centre of the φ₋ box.
    pub parity_minus: f64,
    pub provenance: Provenance,
    /// Overlap with the reference level the label came from.
    pub overlap: Option<f64>,
    /// Set when the label could not be assigned with confidence.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelTable {
    pub phi_b: f64,
    pub d: f64,
    pub levels: Vec<Level>,
    pub grid: Option<Grid>,
    #[serde(skip)]
    vectors: Vec<Vec<f64>>,
}

impl LevelTable {
    pub fn get(&self, label: Label) -> Option<&Level> {
        self.levels.iter().find(|l| l.label == Some(label))
    }

    pub fn energy(&self, label: Label) -> Result<f64> {
        self.get(label)
            .map(|l| l.energy)
            .ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    pub fn vector(&self, label: Label) -> Option<&[f64]> {
        let i = self.levels.iter().position(|l| l.label == Some(label))?;
        self.vectors.get(i).map(Vec::as_slice)
    }

    pub fn is_flagged(&self) -> bool {
        self.levels.iter().any(|l| l.flagged)
    }

    /// Smallest tracking overlap over the labelled levels, if tracked.
    pub fn min_overlap(&self) -> Option<f64> {
        self.levels
            .iter()
            .filter(|l| l.label.is_some())
            .filter_map(|l| l.overlap)
            .reduce(f64::min)
    }
}

fn spectrum_grid(s: &Spectrum) -> Result<Grid> {
    s.grid
        .ok_or_else(|| Error::domain("classification needs a spectrum computed on a grid"))
}

fn parities(s: &Spectrum, grid: &Grid) -> Vec<(f64, f64)> {
    let pp = grid.plus_reflection();
    let pm = grid.minus_reflection();
    s.eigenvectors
        .iter()
        .map(|v| (permutation_expectation(v, &pp), permutation_expectation(v, &pm)))
        .collect()
}

/// Label the levels of `s`.
///
/// Uses parity at the symmetric point; otherwise, or when a parity is not
/// sharp, labels are tracked from `reference`, which must have been computed
/// on a grid of the same size.
pub fn classify_levels(s: &Spectrum, p: &CircuitParams, reference: Option<&LevelTable>) -> Result<LevelTable> {
    if s.eigenvalues.len() < MIN_LEVELS {
        return Err(Error::domain(format!(
            "classification needs at least {MIN_LEVELS} levels, got {}",
            s.eigenvalues.len()
        )));
    }
    let grid = spectrum_grid(s)?;
    let par = parities(s, &grid);
    let sharp = par
        .iter()
        .all(|&(a, b)| a.abs() >= PARITY_THRESHOLD && b.abs() >= PARITY_THRESHOLD);
    if p.phi_b == 0.0 && p.d == 0.0 && sharp {
        return Ok(classify_by_parity(s, p, grid, &par));
    }
    match reference {
        Some(r) => track_levels(s, p, r),
        None => Err(Error::Classification {
            message: if p.phi_b == 0.0 && p.d == 0.0 {
                "parities are not sharp and no reference table was given".into()
            } else {
                format!(
                    "phi_b = {}, d = {} is not the symmetric point and no reference table was given",
                    p.phi_b, p.d
                )
            },
            parities: par,
        }),
    }
}

fn class_of(l: Label) -> usize {
    (l.qubit % 2) as usize + 2 * (l.ancilla % 2) as usize
}

fn class_of_parity((pp, pm): (f64, f64)) -> usize {
    usize::from(pp < 0.0) + 2 * usize::from(pm < 0.0)
}

#[derive(Debug, Clone, Copy)]
struct Ladder {
    f_q: f64,
    f_a: f64,
    alpha_q: f64,
    alpha_a: f64,
    chi: f64,
}

impl Ladder {
    /// Ladder energy with spacings f + α·m, never below f/4 so the estimate
    /// stays increasing in each quantum number.
    fn estimate(&self, l: Label) -> f64 {
        let rung = |f: f64, alpha: f64, n: u8| (0..n).map(|m| (f + alpha * m as f64).max(0.25 * f)).sum::<f64>();
        rung(self.f_q, self.alpha_q, l.qubit)
            + rung(self.f_a, self.alpha_a, l.ancilla)
            + self.chi * (l.qubit as f64) * (l.ancilla as f64)
    }
}

fn assign(classes: &[Vec<usize>; 4], energies: &[f64], ladder: &Ladder, max_q: u8, max_a: u8) -> Vec<Option<Label>> {
    let mut labels = vec![None; energies.len()];
    for (c, members) in classes.iter().enumerate() {
        let mut candidates: Vec<Label> = (0..=max_q)
            .flat_map(|i| (0..=max_a).map(move |j| Label::new(i, j)))
            .filter(|&l| class_of(l) == c)
            .collect();
        candidates.sort_by(|a, b| ladder.estimate(*a).total_cmp(&ladder.estimate(*b)));
        for (&lvl, cand) in members.iter().zip(candidates) {
            labels[lvl] = Some(cand);
        }
    }
    labels
}

fn classify_by_parity(s: &Spectrum, p: &CircuitParams, grid: Grid, par: &[(f64, f64)]) -> LevelTable {
    let e = &s.eigenvalues;
    let mut classes: [Vec<usize>; 4] = Default::default();
    for (i, &pp) in par.iter().enumerate() {
        classes[class_of_parity(pp)].push(i);
    }
    let e0 = classes[0].first().map(|&i| e[i]).unwrap_or(e[0]);
    let lowest = |c: usize| classes[c].first().map(|&i| e[i] - e0);
    let f_q = lowest(1).unwrap_or(f64::INFINITY);
    let f_a = lowest(2).unwrap_or(f64::INFINITY);
    let chi = match lowest(3) {
        Some(x) if f_q.is_finite() && f_a.is_finite() => x - f_q - f_a,
        _ => 0.0,
    };
    let mut ladder = Ladder {
        f_q,
        f_a,
        alpha_q: 0.0,
        alpha_a: 0.0,
        chi,
    };
    let n = e.len() as u8;
    if !(f_q.is_finite() && f_a.is_finite()) {
        // without both fundamentals only one ladder can be populated
        ladder.f_q = ladder.f_q.min(1e6);
        ladder.f_a = ladder.f_a.min(1e6);
    }
    let mut labels = assign(&classes, e, &ladder, 2 * n, n);
    // one refinement of the anharmonicities from the first assignment
    for (i, l) in labels.iter().enumerate() {
        match *l {
            Some(Label { qubit: 2, ancilla: 0 }) => ladder.alpha_q = e[i] - e0 - 2.0 * f_q,
            Some(Label { qubit: 0, ancilla: 2 }) => ladder.alpha_a = e[i] - e0 - 2.0 * f_a,
            _ => {}
        }
    }
    labels = assign(&classes, e, &ladder, 2 * n, n);

    let levels = e
        .iter()
        .zip(par)
        .zip(labels)
        .map(|((&energy, &(pp, pm)), label)| Level {
            energy,
            label,
            parity_plus: pp,
            parity_minus: pm,
            provenance: Provenance::Parity,
            overlap: None,
            flagged: false,
        })
        .collect();
    LevelTable {
        phi_b: p.phi_b,
        d: p.d,
        levels,
        grid: Some(grid),
        vectors: s.eigenvectors.clone(),
    }
}

/// Carry labels from `reference` to `s` by a greedy maximal-overlap
/// assignment. Levels matched with overlap below the threshold are flagged.
pub fn track_levels(s: &Spectrum, p: &CircuitParams, reference: &LevelTable) -> Result<LevelTable> {
    let grid = spectrum_grid(s)?;
    let par = parities(s, &grid);
    let same_shape = reference
        .grid
        .is_some_and(|g| g.n_plus == grid.n_plus && g.n_minus == grid.n_minus);
    if !same_shape || reference.vectors.len() != reference.levels.len() {
        return Err(Error::Config {
            message: "reference table was computed on a different grid".into(),
            suggested_lambda: None,
        });
    }
    let refs: Vec<(usize, Label)> = reference
        .levels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.label.map(|lab| (i, lab)))
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (b, v) in s.eigenvectors.iter().enumerate() {
        for (a, &(ri, _)) in refs.iter().enumerate() {
            pairs.push((dot(&reference.vectors[ri], v).abs(), a, b));
        }
    }
    // ties broken by energy order of the new level
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.2.cmp(&y.2)));
    let mut ref_used = vec![false; refs.len()];
    let mut assigned: Vec<Option<(Label, f64)>> = vec![None; s.eigenvectors.len()];
    for (ov, a, b) in pairs {
        if ref_used[a] || assigned[b].is_some() {
            continue;
        }
        ref_used[a] = true;
        assigned[b] = Some((refs[a].1, ov));
    }
    let levels = s
        .eigenvalues
        .iter()
        .zip(&par)
        .zip(assigned)
        .map(|((&energy, &(pp, pm)), a)| Level {
            energy,
            label: a.map(|x| x.0),
            parity_plus: pp,
            parity_minus: pm,
            provenance: Provenance::Tracked,
            overlap: a.map(|x| x.1),
            flagged: a.is_some_and(|x| x.1 < OVERLAP_THRESHOLD),
        })
        .collect();
    Ok(LevelTable {
        phi_b: p.phi_b,
        d: p.d,
        levels,
        grid: Some(grid),
        vectors: s.eigenvectors.clone(),
    })
}

/// Transition frequencies in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSet {
    /// E_eg − E_gg
    pub f_qubit_line: f64,
    /// E_ge − E_gg
    pub f_ancilla_line: f64,
    /// E_fg − E_eg
    pub f_qubit_12: f64,
    /// E_ee − E_ge − E_eg + E_gg
    pub chi: f64,
    /// f_qubit_12 − f_qubit_line
    pub alpha: f64,
}

impl TransitionSet {
    /// The four-level model reproducing these lines: g = −χ/2,
    /// f_qb = f_qubit_line − g, f_a = f_ancilla_line − g.
    pub fn reduced_model(&self) -> Result<ReducedModel> {
        let g = -0.5 * self.chi;
        ReducedModel::new(self.f_qubit_line - g, self.f_ancilla_line - g, g)
    }
}

pub fn transition_table(t: &LevelTable) -> Result<TransitionSet> {
    let gg = t.energy(Label::GG)?;
    let eg = t.energy(Label::EG)?;
    let ge = t.energy(Label::GE)?;
    let ee = t.energy(Label::EE)?;
    let fg = t.energy(Label::FG)?;
    let f_qubit_line = eg - gg;
    let f_qubit_12 = fg - eg;
    Ok(TransitionSet {
        f_qubit_line,
        f_ancilla_line: ge - gg,
        f_qubit_12,
        chi: ee - ge - eg + gg,
        alpha: f_qubit_12 - f_qubit_line,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dipole {
    ChargePlus,
    LoopCurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixElement {
    pub operator: Dipole,
    pub from: Label,
    pub to: Label,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRules {
    pub elements: Vec<MatrixElement>,
}

impl SelectionRules {
    pub fn get(&self, operator: Dipole, from: Label, to: Label) -> Option<f64> {
        self.elements
            .iter()
            .find(|e| e.operator == operator && ((e.from, e.to) == (from, to) || (e.from, e.to) == (to, from)))
            .map(|e| e.magnitude)
    }
}

/// |⟨a|O|b⟩| for both dipole operators over the levels gg, eg and ge.
pub fn selection_rules(
    t: &LevelTable,
    charge_plus: &SparseOperator,
    loop_current: &SparseOperator,
) -> Result<SelectionRules> {
    let labels = [Label::GG, Label::EG, Label::GE];
    let mut vectors = Vec::new();
    for l in labels {
        vectors.push(t.vector(l).ok_or_else(|| Error::MissingLabel(l.to_string()))?);
    }
    let mut elements = Vec::new();
    for (op, kind) in [(charge_plus, Dipole::ChargePlus), (loop_current, Dipole::LoopCurrent)] {
        if op.dim() != vectors[0].len() {
            return Err(Error::domain("observable and level table use different grids"));
        }
        for a in 0..labels.len() {
            for b in a..labels.len() {
                elements.push(MatrixElement {
                    operator: kind,
                    from: labels[a],
                    to: labels[b],
                    magnitude: op.matrix_element(vectors[a], vectors[b]).abs(),
                });
            }
        }
    }
    Ok(SelectionRules { elements })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(energies: &[(Label, f64)]) -> LevelTable {
        LevelTable {
            phi_b: 0.0,
            d: 0.0,
            levels: energies
                .iter()
                .map(|&(l, e)| Level {
                    energy: e,
                    label: Some(l),
                    parity_plus: 1.0,
                    parity_minus: 1.0,
                    provenance: Provenance::Parity,
                    overlap: None,
                    flagged: false,
                })
                .collect(),
            grid: None,
            vectors: Vec::new(),
        }
    }

    #[test]
    fn label_names() {
        assert_eq!(Label::GG.to_string(), "gg");
        assert_eq!(Label::EG.to_string(), "eg");
        assert_eq!(Label::GE.to_string(), "ge");
        assert_eq!(Label::FG.to_string(), "fg");
        assert_eq!(Label::new(7, 0).to_string(), "7,0");
    }

    #[test]
    fn transitions_from_reduced_model_levels() {
        let m = ReducedModel::new(3.67, 13.0, 0.0722).unwrap();
        let e = m.energies();
        let t = synthetic(&[
            (Label::GG, e[0]),
            (Label::EG, e[1]),
            (Label::GE, e[2]),
            (Label::EE, e[3]),
            (Label::FG, e[1] + 3.37),
        ]);
        let ts = transition_table(&t).unwrap();
        assert!((ts.chi + 0.1444).abs() < 1e-12);
        assert!((ts.f_qubit_line - 3.7422).abs() < 1e-12);
        assert!((ts.alpha - (3.37 - 3.7422)).abs() < 1e-12);
        let back = ts.reduced_model().unwrap();
        assert!((back.f_qb - 3.67).abs() < 1e-12);
        assert!((back.f_a - 13.0).abs() < 1e-12);
        assert!((back.g - 0.0722).abs() < 1e-12);
    }

    #[test]
    fn missing_label_is_reported() {
        let t = synthetic(&[(Label::GG, 0.0), (Label::EG, 1.0)]);
        match transition_table(&t) {
            Err(Error::MissingLabel(l)) => assert_eq!(l, "ge"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ladder_assignment_respects_classes() {
        let ladder = Ladder {
            f_q: 3.7,
            f_a: 13.4,
            alpha_q: -0.3,
            alpha_a: 0.0,
            chi: -0.14,
        };
        // levels: gg, eg, fg, (3,0), ge
        let energies = [0.0, 3.7, 7.1, 10.2, 13.4];
        let classes = [vec![0, 2], vec![1, 3], vec![4], vec![]];
        let labels = assign(&classes, &energies, &ladder, 8, 4);
        assert_eq!(
            labels,
            vec![
                Some(Label::GG),
                Some(Label::EG),
                Some(Label::FG),
                Some(Label::new(3, 0)),
                Some(Label::GE)
            ]
        );
    }
}
