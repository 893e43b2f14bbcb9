// SPDX-License-Identifier: Apache-2.0

//! Block reduction of a symmetric operator by an involutive node permutation
//! P that commutes with it.
//!
//! The even sector is spanned by fixed nodes and normalized pairs
//! (e_i + e_P(i))/√2; the odd sector by (e_i − e_P(i))/√2. Orbits are ordered
//! by their smallest node index, which preserves the band structure of grid
//! operators.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::sparse::{OperatorKind, SparseOperator, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// One symmetry sector: the reduced operator and the map back to nodes.
#[derive(Debug, Clone)]
pub struct Sector {
    pub parity: Parity,
    pub operator: SparseOperator,
    /// For each reduced basis vector, its nodes with coefficients.
    basis: Vec<[(usize, f64); 2]>,
    full_dim: usize,
}

impl Sector {
    pub fn reduce(op: &SparseOperator, perm: &[usize], parity: Parity) -> Sector {
        let n = op.dim();
        assert_eq!(perm.len(), n);
        let sign = parity.sign();
        // orbit index and coefficient for every node (None: node not in sector)
        let mut slot: Vec<Option<(usize, f64)>> = vec![None; n];
        let mut basis = Vec::new();
        for i in 0..n {
            let j = perm[i];
            debug_assert_eq!(perm[j], i, "permutation must be an involution");
            if j == i {
                if parity == Parity::Even {
                    slot[i] = Some((basis.len(), 1.0));
                    basis.push([(i, 1.0), (i, 0.0)]);
                }
            } else if i < j {
                let a = basis.len();
                slot[i] = Some((a, FRAC_1_SQRT_2));
                slot[j] = Some((a, sign * FRAC_1_SQRT_2));
                basis.push([(i, FRAC_1_SQRT_2), (j, sign * FRAC_1_SQRT_2)]);
            }
        }
        // With [H, P] = 0, H b_b = Σ_a H_ab b_a, so H_ab = (H b_b)_r / c_r for
        // the representative node r of orbit a.
        let mut b = TripletBuilder::new(basis.len());
        for (a, nodes) in basis.iter().enumerate() {
            let (rep, c_rep) = nodes[0];
            for (col, v) in op.row(rep) {
                if let Some((orbit, c)) = slot[col] {
                    b.add(a, orbit, v * c / c_rep);
                }
            }
        }
        let mut reduced = b.build(OperatorKind::Symmetric);
        reduced.set_spectral_floor(op.spectral_floor());
        Sector {
            parity,
            operator: reduced,
            basis,
            full_dim: n,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Embed a sector vector into the full node space.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.basis.len());
        let mut out = vec![0.0; self.full_dim];
        for (coef, nodes) in v.iter().zip(&self.basis) {
            for &(node, c) in nodes {
                out[node] += coef * c;
            }
        }
        out
    }
}

/// ⟨v|P|v⟩ for a node permutation.
pub fn permutation_expectation(v: &[f64], perm: &[usize]) -> f64 {
    v.iter().enumerate().map(|(i, x)| x * v[perm[i]]).sum()
}
