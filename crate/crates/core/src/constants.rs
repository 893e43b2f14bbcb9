// SPDX-License-Identifier: Apache-2.0

//! CODATA-2018 constants. Both `e` and `h` are exact in the revised SI.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge (C).
    pub e_charge: f64,
    /// Planck constant (J s).
    pub h: f64,
    /// Magnetic flux quantum h/2e (Wb).
    pub phi0: f64,
}

pub const E_CHARGE: f64 = 1.602_176_634e-19;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * E_CHARGE);

/// Reduced flux quantum Φ0/2π (Wb).
pub const REDUCED_FLUX_QUANTUM: f64 = FLUX_QUANTUM / (2.0 * PI);

pub const GHZ: f64 = 1e9;

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        e_charge: E_CHARGE,
        h: PLANCK,
        phi0: FLUX_QUANTUM,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}
