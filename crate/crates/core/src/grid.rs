// SPDX-License-Identifier: Apache-2.0

//! Finite-difference discretization of H = (E_C/2)(n₊² + n₋²) + U(φ₊, φ₋).
//!
//! φ₊ is periodic; φ₋ lives in a hard-wall box of half width Λ centred on the
//! minimum of the inductive term, π·Φ_b. Nodes are stored with φ₊ as the fast
//! index, `idx = j * n_plus + i`, which keeps the operator banded with half
//! bandwidth `reach * n_plus`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{derived_energies, inductive_potential, josephson_potential, CircuitParams, EnergyScales};
use crate::constants::REDUCED_FLUX_QUANTUM;
use crate::error::{Error, Result};
use crate::sparse::{OperatorKind, SparseOperator, TripletBuilder};

/// Central-difference approximation used for the second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// 3-point (5-point in 2D), second order.
    Second,
    /// 5-point, fourth order.
    Fourth,
    /// 7-point, sixth order.
    #[default]
    Sixth,
}

impl Stencil {
    /// Coefficients c_0, c_1, ... of d²/dx² ≈ (c_0 f_0 + Σ c_k (f_k + f_-k)) / h².
    pub fn coefficients(self) -> &'static [f64] {
        const SECOND: [f64; 2] = [-2.0, 1.0];
        const FOURTH: [f64; 3] = [-30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        const SIXTH: [f64; 4] = [-490.0 / 180.0, 270.0 / 180.0, -27.0 / 180.0, 2.0 / 180.0];
        match self {
            Stencil::Second => &SECOND,
            Stencil::Fourth => &FOURTH,
            Stencil::Sixth => &SIXTH,
        }
    }

    pub fn reach(self) -> usize {
        self.coefficients().len() - 1
    }

    /// Eigenvalue of −d²/dx² on a periodic lattice for a plane wave of phase
    /// advance θ = k·h per node, in units of 1/h².
    pub fn symbol(self, theta: f64) -> f64 {
        let c = self.coefficients();
        -c[0]
            - 2.0
                * c[1..]
                    .iter()
                    .enumerate()
                    .map(|(k, ck)| ck * ((k + 1) as f64 * theta).cos())
                    .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Points along φ₊ (periodic).
    pub n_plus: usize,
    /// Points along φ₋ (hard walls).
    pub n_minus: usize,
    /// Half width of the φ₋ box in radians.
    pub lambda_minus: f64,
    #[serde(default)]
    pub stencil: Stencil,
}

impl GridSpec {
    pub const DEFAULT_N_PLUS: usize = 64;
    pub const DEFAULT_N_MINUS: usize = 256;

    /// Default resolution with Λ = max(1.5, 8·(2E_C/(2E_J + 4E_L))^¼), at
    /// least eight oscillator lengths of the antisymmetric mode.
    pub fn default_for(p: &CircuitParams) -> Result<Self> {
        let s = derived_energies(p)?;
        Ok(GridSpec {
            n_plus: Self::DEFAULT_N_PLUS,
            n_minus: Self::DEFAULT_N_MINUS,
            lambda_minus: default_lambda(&s),
            stencil: Stencil::default(),
        })
    }

    pub fn with_resolution(mut self, n_plus: usize, n_minus: usize) -> Self {
        self.n_plus = n_plus;
        self.n_minus = n_minus;
        self
    }

    /// Both resolutions doubled, box unchanged.
    pub fn refined(&self) -> Self {
        GridSpec {
            n_plus: 2 * self.n_plus,
            n_minus: 2 * self.n_minus,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_plus < 16 || self.n_plus % 2 != 0 {
            return Err(config(format!("n_plus must be even and >= 16, got {}", self.n_plus)));
        }
        if self.n_minus < 32 {
            return Err(config(format!("n_minus must be >= 32, got {}", self.n_minus)));
        }
        if !(self.lambda_minus.is_finite() && self.lambda_minus > 0.0) {
            return Err(config(format!("lambda_minus must be > 0, got {}", self.lambda_minus)));
        }
        Ok(())
    }
}

fn config(message: String) -> Error {
    Error::Config {
        message,
        suggested_lambda: None,
    }
}

pub(crate) fn default_lambda(s: &EnergyScales) -> f64 {
    (8.0 * (2.0 * s.e_c / (2.0 * s.e_j + 4.0 * s.e_l)).powf(0.25)).max(1.5)
}

/// Which potential is placed on the grid diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    #[default]
    Full,
    /// Both cosines replaced by their second-order Taylor expansion about
    /// (0, φ₋ᵐⁱⁿ). The φ₊ window is widened (at fixed step) so the parabola is
    /// not cut off by the periodic wrap.
    Quadratic,
}

/// Resolved node geometry for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub spec: GridSpec,
    pub mode: PotentialMode,
    /// Number of φ₊ nodes actually used (equals `spec.n_plus` in full mode).
    pub n_plus: usize,
    pub n_minus: usize,
    pub h_plus: f64,
    pub h_minus: f64,
    /// Half period of the φ₊ window.
    pub plus_half_width: f64,
    /// Centre of the φ₋ box.
    pub minus_center: f64,
}

impl Grid {
    pub fn new(p: &CircuitParams, spec: &GridSpec, mode: PotentialMode) -> Result<Self> {
        spec.validate()?;
        let s = derived_energies(p)?;
        let h_plus = 2.0 * PI / spec.n_plus as f64;
        let (n_plus, half_width, center) = match mode {
            PotentialMode::Full => (spec.n_plus, PI, PI * p.phi_b),
            PotentialMode::Quadratic => {
                let q = QuadraticExpansion::new(&s, p);
                if q.hess[0][0] <= 0.0 {
                    return Err(config(format!(
                        "quadratic expansion is unbound along phi_plus at phi_b = {}",
                        p.phi_b
                    )));
                }
                let width = (8.0 * (2.0 * s.e_c / q.hess[0][0]).powf(0.25)).max(PI);
                let mut n = (spec.n_plus as f64 * width / PI).ceil() as usize;
                n += n % 2;
                (n, 0.5 * n as f64 * h_plus, q.center)
            }
        };
        Ok(Grid {
            spec: *spec,
            mode,
            n_plus,
            n_minus: spec.n_minus,
            h_plus,
            h_minus: 2.0 * spec.lambda_minus / (spec.n_minus - 1) as f64,
            plus_half_width: half_width,
            minus_center: center,
        })
    }

    pub fn dim(&self) -> usize {
        self.n_plus * self.n_minus
    }

    #[inline]
    pub fn index(&self, i_plus: usize, i_minus: usize) -> usize {
        i_minus * self.n_plus + i_plus
    }

    #[inline]
    pub fn phi_plus(&self, i: usize) -> f64 {
        -self.plus_half_width + i as f64 * self.h_plus
    }

    #[inline]
    pub fn phi_minus(&self, j: usize) -> f64 {
        self.minus_center - self.spec.lambda_minus + j as f64 * self.h_minus
    }

    /// Node permutation implementing φ₊ → −φ₊.
    pub fn plus_reflection(&self) -> Vec<usize> {
        let n = self.n_plus;
        (0..self.dim())
            .map(|idx| {
                let (i, j) = (idx % n, idx / n);
                self.index((n - i) % n, j)
            })
            .collect()
    }

    /// Node permutation implementing φ₋ − c → −(φ₋ − c) about the box centre.
    pub fn minus_reflection(&self) -> Vec<usize> {
        let n = self.n_plus;
        (0..self.dim())
            .map(|idx| {
                let (i, j) = (idx % n, idx / n);
                self.index(i, self.n_minus - 1 - j)
            })
            .collect()
    }

    /// Potential sampled at every node, in GHz.
    pub fn sample_potential(&self, p: &CircuitParams) -> Result<Vec<f64>> {
        let s = derived_energies(p)?;
        let quad = match self.mode {
            PotentialMode::Full => None,
            PotentialMode::Quadratic => Some(QuadraticExpansion::new(&s, p)),
        };
        let mut u = Vec::with_capacity(self.dim());
        for j in 0..self.n_minus {
            let pm = self.phi_minus(j);
            let ind = inductive_potential(&s, p.phi_b, pm);
            for i in 0..self.n_plus {
                let pp = self.phi_plus(i);
                let jos = match &quad {
                    None => josephson_potential(&s, p.d, pp, pm),
                    Some(q) => q.eval(pp, pm),
                };
                u.push(jos + ind);
            }
        }
        Ok(u)
    }
}

/// Second-order Taylor expansion of the Josephson term about (0, center).
#[derive(Debug, Clone, Copy)]
struct QuadraticExpansion {
    center: f64,
    value: f64,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
}

impl QuadraticExpansion {
    fn new(s: &EnergyScales, p: &CircuitParams) -> Self {
        let center = minus_well_center(s, p.phi_b);
        let (sm, cm) = center.sin_cos();
        let ej2 = 2.0 * s.e_j;
        QuadraticExpansion {
            center,
            value: -ej2 * cm,
            grad: [ej2 * p.d * sm, ej2 * sm],
            hess: [[ej2 * cm, ej2 * p.d * cm], [ej2 * p.d * cm, ej2 * cm]],
        }
    }

    fn eval(&self, phi_plus: f64, phi_minus: f64) -> f64 {
        let (x, y) = (phi_plus, phi_minus - self.center);
        self.value
            + self.grad[0] * x
            + self.grad[1] * y
            + 0.5 * (self.hess[0][0] * x * x + 2.0 * self.hess[0][1] * x * y + self.hess[1][1] * y * y)
    }
}

/// Minimum of U(0, φ₋) = −2E_J cos φ₋ + (E_L/2)(2φ₋ − 2πΦ_b)², by Newton.
fn minus_well_center(s: &EnergyScales, phi_b: f64) -> f64 {
    let target = PI * phi_b;
    let mut x = target;
    for _ in 0..100 {
        let d1 = 2.0 * s.e_j * x.sin() + 4.0 * s.e_l * (x - target);
        let d2 = (2.0 * s.e_j * x.cos() + 4.0 * s.e_l).max(1e-3 * s.e_l);
        let step = d1 / d2;
        x -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    x
}

/// Assemble −(e_c/2)(∂₊² + ∂₋²) + diag(potential) on `grid`.
pub fn assemble_with_potential(grid: &Grid, e_c: f64, potential: &[f64]) -> SparseOperator {
    assert_eq!(potential.len(), grid.dim());
    let coef = grid.spec.stencil.coefficients();
    let (np, nm) = (grid.n_plus, grid.n_minus);
    let kp = 0.5 * e_c / (grid.h_plus * grid.h_plus);
    let km = 0.5 * e_c / (grid.h_minus * grid.h_minus);
    let diag_kin = -coef[0] * (kp + km);
    let mut b = TripletBuilder::new(grid.dim());
    for j in 0..nm {
        for i in 0..np {
            let row = grid.index(i, j);
            b.add(row, row, diag_kin + potential[row]);
            for (k, &ck) in coef.iter().enumerate().skip(1) {
                b.add(row, grid.index((i + k) % np, j), -kp * ck);
                b.add(row, grid.index((i + np - k) % np, j), -kp * ck);
                if j + k < nm {
                    b.add(row, grid.index(i, j + k), -km * ck);
                }
                if j >= k {
                    b.add(row, grid.index(i, j - k), -km * ck);
                }
            }
        }
    }
    let mut op = b.build(OperatorKind::Symmetric);
    // The difference stencils are positive semidefinite, so the minimum of the
    // potential bounds the spectrum from below.
    op.set_spectral_floor(potential.iter().copied().reduce(f64::min));
    op
}

/// Assemble the grid Hamiltonian (GHz) for `p`.
///
/// Fails with a configuration error when the φ₋ box is too narrow: the
/// potential on the walls must rise at least 20·f_a above its minimum.
pub fn assemble_hamiltonian(p: &CircuitParams, spec: &GridSpec, mode: PotentialMode) -> Result<SparseOperator> {
    let grid = Grid::new(p, spec, mode)?;
    let s = derived_energies(p)?;
    let u = grid.sample_potential(p)?;
    check_box(&grid, &s, &u)?;
    Ok(assemble_with_potential(&grid, s.e_c, &u))
}

fn check_box(grid: &Grid, s: &EnergyScales, u: &[f64]) -> Result<()> {
    let f_a = (2.0 * s.e_j * s.e_c).sqrt() * (1.0 + 2.0 * s.e_l / s.e_j).sqrt();
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let np = grid.n_plus;
    let last = grid.n_minus - 1;
    let wall = (0..np)
        .flat_map(|i| [u[grid.index(i, 0)], u[grid.index(i, last)]])
        .fold(f64::INFINITY, f64::min);
    let rise = wall - u_min;
    let needed = 20.0 * f_a;
    if rise < needed {
        let lambda = grid.spec.lambda_minus;
        let suggested = lambda * (needed / rise.max(1e-12)).sqrt() * 1.1;
        return Err(Error::Config {
            message: format!(
                "phi_minus box too narrow: potential rises {rise:.3} GHz at the walls, needs {needed:.3} GHz; try lambda_minus = {suggested:.3}"
            ),
            suggested_lambda: Some(suggested),
        });
    }
    Ok(())
}

/// Observables used for dipole selection rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// Real generator D of n₊ = −i ∂/∂φ₊ (antisymmetric central difference).
    ChargePlus,
    /// Loop current (Φ0/2π)(2φ₋ − 2πΦ_b)/L in nA, diagonal.
    LoopCurrent,
}

pub fn observable(
    kind: ObservableKind,
    p: &CircuitParams,
    spec: &GridSpec,
    mode: PotentialMode,
) -> Result<SparseOperator> {
    let grid = Grid::new(p, spec, mode)?;
    Ok(match kind {
        ObservableKind::LoopCurrent => {
            let scale = REDUCED_FLUX_QUANTUM / p.l * 1e9;
            let diag: Vec<f64> = (0..grid.dim())
                .map(|idx| {
                    let pm = grid.phi_minus(idx / grid.n_plus);
                    scale * (2.0 * pm - 2.0 * PI * p.phi_b)
                })
                .collect();
            SparseOperator::diagonal(&diag)
        }
        ObservableKind::ChargePlus => {
            let np = grid.n_plus;
            let c = 0.5 / grid.h_plus;
            let mut b = TripletBuilder::new(grid.dim());
            for j in 0..grid.n_minus {
                for i in 0..np {
                    let row = grid.index(i, j);
                    b.add(row, grid.index((i + 1) % np, j), c);
                    b.add(row, grid.index((i + np - 1) % np, j), -c);
                }
            }
            b.build(OperatorKind::Antisymmetric)
        }
    })
}
