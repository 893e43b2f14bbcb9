// SPDX-License-Identifier: Apache-2.0

//! Circuit parameters of the two-transmon loop, its energy scales, the
//! closed-form mode estimates and the reduced four-level model.
//!
//! Energies are frequencies in GHz (energy / h) throughout the crate, phases
//! are radians and the flux bias is measured in units of Φ0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{E_CHARGE, FLUX_QUANTUM, GHZ, PLANCK, REDUCED_FLUX_QUANTUM};
use crate::error::{Error, Result};

/// Physical description of the circuit: two small junctions of critical
/// current `ic(1 ± d)`, each shunted by `c`, closed into a loop by `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    /// Critical current of each small junction (A).
    pub ic: f64,
    /// Shunt capacitance of each junction (F).
    pub c: f64,
    /// Loop inductance (H).
    pub l: f64,
    /// Junction asymmetry: E_J1 = E_J (1 + d), E_J2 = E_J (1 - d).
    #[serde(default)]
    pub d: f64,
    /// Flux bias in units of Φ0.
    #[serde(default)]
    pub phi_b: f64,
}

impl CircuitParams {
    pub fn new(ic: f64, c: f64, l: f64) -> Result<Self> {
        let p = CircuitParams {
            ic,
            c,
            l,
            d: 0.0,
            phi_b: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// The fitted device: Ic = 8.19 nA, C = 39.7 fF, L = 0.192 L_J.
    pub fn reference_device() -> Self {
        let ic = 8.19e-9;
        CircuitParams {
            ic,
            c: 39.7e-15,
            l: 0.192 * josephson_inductance(ic),
            d: 0.0,
            phi_b: 0.0,
        }
    }

    pub fn with_flux(mut self, phi_b: f64) -> Self {
        self.phi_b = phi_b;
        self
    }

    pub fn with_asymmetry(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive(self.ic, "ic")?;
        positive(self.c, "c")?;
        positive(self.l, "l")?;
        if !(self.d.is_finite() && self.d.abs() < 1.0) {
            return Err(Error::domain(format!("|d| must be < 1, got {}", self.d)));
        }
        if !self.phi_b.is_finite() {
            return Err(Error::domain("phi_b must be finite"));
        }
        Ok(())
    }

    /// L_J / L.
    pub fn lj_over_l(&self) -> f64 {
        josephson_inductance(self.ic) / self.l
    }

    fn require_sweet_spot(&self, what: &str) -> Result<()> {
        if self.phi_b != 0.0 {
            return Err(Error::domain(format!(
                "{what} is only defined at phi_b = 0 (got {}); use the grid solver off the sweet spot",
                self.phi_b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyScales {
    /// Josephson energy of one junction (GHz).
    pub e_j: f64,
    /// Charging energy (2e)²/2C (GHz).
    pub e_c: f64,
    /// Inductive energy (Φ0/2π)²/L (GHz).
    pub e_l: f64,
    /// Josephson inductance Φ0/(2π Ic) (H).
    pub l_j: f64,
}

pub fn josephson_inductance(ic: f64) -> f64 {
    REDUCED_FLUX_QUANTUM / ic
}

pub fn derived_energies(p: &CircuitParams) -> Result<EnergyScales> {
    p.validate()?;
    Ok(EnergyScales {
        e_j: REDUCED_FLUX_QUANTUM * p.ic / PLANCK / GHZ,
        e_c: (2.0 * E_CHARGE).powi(2) / (2.0 * p.c) / PLANCK / GHZ,
        e_l: REDUCED_FLUX_QUANTUM.powi(2) / p.l / PLANCK / GHZ,
        l_j: josephson_inductance(p.ic),
    })
}

/// Linear inductance of a chain of `n` identical large junctions.
pub fn chain_inductance(ic_chain: f64, n: u32) -> Result<f64> {
    if !(ic_chain.is_finite() && ic_chain > 0.0) {
        return Err(Error::domain(format!(
            "chain critical current must be > 0, got {ic_chain}"
        )));
    }
    if n == 0 {
        return Err(Error::domain("chain needs at least one junction"));
    }
    Ok(n as f64 * FLUX_QUANTUM / (2.0 * PI * ic_chain))
}

/// Josephson part of the potential, in GHz, with φ± = (φ1 ± φ2)/2.
#[inline]
pub(crate) fn josephson_potential(s: &EnergyScales, d: f64, phi_plus: f64, phi_minus: f64) -> f64 {
    -2.0 * s.e_j * phi_plus.cos() * phi_minus.cos() + 2.0 * s.e_j * d * phi_plus.sin() * phi_minus.sin()
}

#[inline]
pub(crate) fn inductive_potential(s: &EnergyScales, phi_b: f64, phi_minus: f64) -> f64 {
    let x = 2.0 * phi_minus - 2.0 * PI * phi_b;
    0.5 * s.e_l * x * x
}

/// Potential energy U(φ₊, φ₋)/h in GHz.
pub fn potential_energy(p: &CircuitParams, phi_plus: f64, phi_minus: f64) -> Result<f64> {
    if !(phi_plus.is_finite() && phi_minus.is_finite()) {
        return Err(Error::domain("phases must be finite"));
    }
    let s = derived_energies(p)?;
    Ok(josephson_potential(&s, p.d, phi_plus, phi_minus) + inductive_potential(&s, p.phi_b, phi_minus))
}

/// Harmonic (small-oscillation) frequencies of the symmetric and
/// antisymmetric modes at the sweet spot, in GHz.
pub fn harmonic_mode_frequencies(p: &CircuitParams) -> Result<(f64, f64)> {
    p.require_sweet_spot("harmonic_mode_frequencies")?;
    let s = derived_energies(p)?;
    let f_qb = (2.0 * s.e_j * s.e_c).sqrt();
    let f_a = f_qb * (1.0 + 2.0 * s.l_j / p.l).sqrt();
    Ok((f_qb, f_a))
}

/// Cross-anharmonicity g = g_zz/2π in GHz from second-order perturbation
/// theory. The dip separation seen in conditional spectroscopy is 2g.
pub fn gzz_perturbative(p: &CircuitParams) -> Result<f64> {
    p.require_sweet_spot("gzz_perturbative")?;
    let s = derived_energies(p)?;
    Ok(s.e_c / (8.0 * (1.0 + 2.0 * s.l_j / p.l).sqrt()))
}

/// Four-level model H/h = f_qb σz⊗1/2 + f_a 1⊗σz/2 − g σz⊗σz/2 on the basis
/// |g,g⟩, |e,g⟩, |g,e⟩, |e,e⟩ (qubit label first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedModel {
    pub f_qb: f64,
    pub f_a: f64,
    pub g: f64,
}

/// Index of |i,j⟩ in the reduced basis.
pub const fn basis_index(qubit_excited: bool, ancilla_excited: bool) -> usize {
    qubit_excited as usize + 2 * ancilla_excited as usize
}

pub const BASIS_LABELS: [&str; 4] = ["gg", "eg", "ge", "ee"];

impl ReducedModel {
    pub fn new(f_qb: f64, f_a: f64, g: f64) -> Result<Self> {
        let m = ReducedModel { f_qb, f_a, g };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_qb > 0.0 && self.f_a > self.f_qb && self.f_a.is_finite()) {
            return Err(Error::domain(format!(
                "reduced model needs f_a > f_qb > 0 (f_qb = {}, f_a = {})",
                self.f_qb, self.f_a
            )));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::domain(format!("g must be >= 0, got {}", self.g)));
        }
        Ok(())
    }

    /// Diagonal of the Hamiltonian (GHz), ordered like [`BASIS_LABELS`].
    pub fn energies(&self) -> [f64; 4] {
        let mut e = [0.0; 4];
        for (idx, slot) in e.iter_mut().enumerate() {
            let s_q = if idx & 1 == 1 { 1.0 } else { -1.0 };
            let s_a = if idx & 2 == 2 { 1.0 } else { -1.0 };
            *slot = 0.5 * (self.f_qb * s_q + self.f_a * s_a - self.g * s_q * s_a);
        }
        e
    }

    /// |g,g⟩ → |e,g⟩ line, f_qb + g.
    pub fn qubit_line(&self) -> f64 {
        let e = self.energies();
        e[1] - e[0]
    }

    /// |g,g⟩ → |g,e⟩ line, f_a + g.
    pub fn ancilla_line(&self) -> f64 {
        let e = self.energies();
        e[2] - e[0]
    }

    /// |g,e⟩ → |e,e⟩ line, f_qb − g.
    pub fn conditional_qubit_line(&self) -> f64 {
        let e = self.energies();
        e[3] - e[2]
    }
}

/// The 4×4 energy matrix of the reduced model (diagonal in its basis).
pub fn reduced_hamiltonian(m: &ReducedModel) -> [[f64; 4]; 4] {
    let e = m.energies();
    let mut h = [[0.0; 4]; 4];
    for i in 0..4 {
        h[i][i] = e[i];
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_energy_scales() {
        let p = CircuitParams::reference_device();
        let s = derived_energies(&p).unwrap();
        assert_relative_eq!(s.e_j, 4.069, max_relative = 1e-3);
        assert_relative_eq!(s.e_c, 1.951, max_relative = 1e-3);
        assert_relative_eq!(s.l_j, 40.18e-9, max_relative = 1e-3);
        assert_relative_eq!(p.l, 7.715e-9, max_relative = 1e-3);
        assert_relative_eq!(s.e_l, 21.19, max_relative = 1e-3);
        // E_L / E_J = L_J / L
        assert_relative_eq!(s.e_l / s.e_j, 1.0 / 0.192, max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(CircuitParams::new(0.0, 1e-15, 1e-9).is_err());
        assert!(CircuitParams::new(1e-9, -1e-15, 1e-9).is_err());
        assert!(CircuitParams::new(1e-9, 1e-15, f64::NAN).is_err());
        let bad = CircuitParams::reference_device().with_asymmetry(1.0);
        assert!(derived_energies(&bad).is_err());
    }

    #[test]
    fn chain_inductance_examples() {
        let ic = 3.3e-9;
        assert_relative_eq!(
            chain_inductance(ic, 1).unwrap(),
            josephson_inductance(ic),
            max_relative = 1e-15
        );
        assert_relative_eq!(chain_inductance(512e-9, 12).unwrap(), 7.72e-9, max_relative = 1e-3);
        assert_eq!(
            chain_inductance(512e-9, 24).unwrap(),
            2.0 * chain_inductance(512e-9, 12).unwrap()
        );
        assert!(chain_inductance(0.0, 12).is_err());
        assert!(chain_inductance(1e-6, 0).is_err());
    }

    #[test]
    fn potential_examples() {
        let p = CircuitParams::reference_device();
        let s = derived_energies(&p).unwrap();
        assert_relative_eq!(
            potential_energy(&p, 0.0, 0.0).unwrap(),
            -2.0 * s.e_j,
            max_relative = 1e-15
        );
        let shifted = p.with_flux(0.25);
        let u = potential_energy(&shifted, 0.0, 0.0).unwrap();
        assert_relative_eq!(u, -2.0 * s.e_j + 0.5 * s.e_l * (PI / 2.0).powi(2), max_relative = 1e-14);
        assert!((u - 18.0).abs() < 0.02, "{u}");
    }

    #[test]
    fn potential_matches_per_junction_form() {
        let p = CircuitParams::reference_device().with_asymmetry(0.35).with_flux(0.13);
        let s = derived_energies(&p).unwrap();
        for &(a, b) in &[(0.3f64, -0.2f64), (1.7, 0.4), (-2.9, 1.1)] {
            let (p1, p2) = (a + b, a - b);
            let direct = -s.e_j * (1.0 + p.d) * p1.cos() - s.e_j * (1.0 - p.d) * p2.cos()
                + 0.5 * s.e_l * (p1 - p2 - 2.0 * PI * p.phi_b).powi(2);
            assert_relative_eq!(potential_energy(&p, a, b).unwrap(), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn potential_parity_in_minus_only_at_zero_flux() {
        let p = CircuitParams::reference_device();
        let (a, b) = (0.4, 0.3);
        let u = |q: &CircuitParams, x, y| potential_energy(q, x, y).unwrap();
        assert_relative_eq!(u(&p, a, b), u(&p, a, -b), max_relative = 1e-14);
        for flux in [0.5, 1.0] {
            let q = p.with_flux(flux);
            assert!((u(&q, a, b) - u(&q, a, -b)).abs() > 1.0);
            // flux reversal mirrors φ₋
            assert_relative_eq!(u(&q, a, b), u(&p.with_flux(-flux), a, -b), max_relative = 1e-13);
        }
    }

    #[test]
    fn harmonic_modes_at_reference() {
        let p = CircuitParams::reference_device();
        let (f_qb, f_a) = harmonic_mode_frequencies(&p).unwrap();
        assert!((f_qb - 3.985).abs() < 1e-3, "{f_qb}");
        assert!((f_a - 13.46).abs() < 5e-3, "{f_a}");
        assert_relative_eq!(f_a / f_qb, (1.0f64 + 2.0 / 0.192).sqrt(), max_relative = 1e-12);
        assert!(harmonic_mode_frequencies(&p.with_flux(0.1)).is_err());

        let huge_l = CircuitParams { l: 1e3, ..p };
        let (q, a) = harmonic_mode_frequencies(&huge_l).unwrap();
        assert_relative_eq!(q, a, max_relative = 1e-9);
    }

    #[test]
    fn gzz_reference_value() {
        let p = CircuitParams::reference_device();
        let g = gzz_perturbative(&p).unwrap();
        assert!((g - 0.0722).abs() < 1e-4, "{g}");
        assert!((2e3 * g - 144.0).abs() < 1.0);
        assert!(gzz_perturbative(&p.with_flux(0.2)).is_err());
    }

    #[test]
    fn gzz_limits_and_scaling() {
        let p = CircuitParams::reference_device();
        let s = derived_energies(&p).unwrap();
        let big_l = CircuitParams { l: 1e3, ..p };
        assert_relative_eq!(gzz_perturbative(&big_l).unwrap(), s.e_c / 8.0, max_relative = 1e-9);
        let double_c = CircuitParams { c: 2.0 * p.c, ..p };
        assert_relative_eq!(
            gzz_perturbative(&double_c).unwrap(),
            0.5 * gzz_perturbative(&p).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn reduced_model_algebra() {
        let m = ReducedModel::new(3.67, 13.0, 0.0722).unwrap();
        let e = m.energies();
        assert_relative_eq!(e[1] - e[0], 3.7422, max_relative = 1e-12);
        assert_relative_eq!((e[3] - e[2]) - (e[1] - e[0]), -0.1444, max_relative = 1e-12);
        assert_relative_eq!(m.ancilla_line(), 13.0722, max_relative = 1e-12);
        assert!(e.iter().sum::<f64>().abs() < 1e-14);

        let h = reduced_hamiltonian(&m);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(h[i][j], 0.0);
                }
            }
        }

        let free = ReducedModel::new(3.67, 13.0, 0.0).unwrap().energies();
        assert_relative_eq!(
            free[3] - free[0],
            (free[1] - free[0]) + (free[2] - free[0]),
            max_relative = 1e-14
        );
        assert!(ReducedModel::new(13.0, 3.67, 0.07).is_err());
    }

    proptest! {
        #[test]
        fn potential_is_periodic_in_phi_plus(
            a in -4.0f64..4.0, b in -3.0f64..3.0, d in -0.9f64..0.9, flux in -1.0f64..1.0
        ) {
            let p = CircuitParams::reference_device().with_asymmetry(d).with_flux(flux);
            let u0 = potential_energy(&p, a, b).unwrap();
            let u1 = potential_energy(&p, a + 2.0 * PI, b).unwrap();
            prop_assert!((u0 - u1).abs() <= 1e-9 * (1.0 + u0.abs()));
        }

        #[test]
        fn symmetric_potential_is_even_in_phi_plus(
            a in -4.0f64..4.0, b in -3.0f64..3.0, flux in -1.0f64..1.0
        ) {
            let p = CircuitParams::reference_device().with_flux(flux);
            let u0 = potential_energy(&p, a, b).unwrap();
            let u1 = potential_energy(&p, -a, b).unwrap();
            prop_assert!((u0 - u1).abs() <= 1e-12 * (1.0 + u0.abs()));
        }

        #[test]
        fn gzz_increases_with_l(scale in 0.05f64..20.0) {
            let p = CircuitParams::reference_device();
            let lo = CircuitParams { l: p.l * scale, ..p };
            let hi = CircuitParams { l: p.l * scale * 1.1, ..p };
            let s = derived_energies(&p).unwrap();
            let (g_lo, g_hi) = (gzz_perturbative(&lo).unwrap(), gzz_perturbative(&hi).unwrap());
            prop_assert!(g_hi > g_lo);
            prop_assert!(g_hi < s.e_c / 8.0);
        }
    }
}
