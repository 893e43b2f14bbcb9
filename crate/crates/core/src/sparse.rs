// SPDX-License-Identifier: Apache-2.0

//! Real sparse operators in compressed sparse row layout.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the stored real matrix is symmetric (Hamiltonians, diagonal
/// observables) or antisymmetric (real generators of Hermitian operators such
/// as −i∂/∂φ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    kind: OperatorKind,
    /// A value known to lie at or below the lowest eigenvalue, if the
    /// assembler can certify one.
    spectral_floor: Option<f64>,
}

/// Accumulates (row, col, value) entries; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        TripletBuilder {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.rows[row].push((col, value));
    }

    pub fn build(self, kind: OperatorKind) -> SparseOperator {
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in self.rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            dim: self.dim,
            row_ptr,
            col_idx,
            values,
            kind,
            spectral_floor: None,
        }
    }
}

impl SparseOperator {
    pub fn diagonal(values: &[f64]) -> Self {
        let mut b = TripletBuilder::new(values.len());
        for (i, &v) in values.iter().enumerate() {
            b.add(i, i, v);
        }
        b.build(OperatorKind::Symmetric)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn spectral_floor(&self) -> Option<f64> {
        self.spectral_floor
    }

    pub(crate) fn set_spectral_floor(&mut self, floor: Option<f64>) {
        self.spectral_floor = floor;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// ⟨a|A|b⟩ for real vectors.
    pub fn matrix_element(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut tmp = vec![0.0; self.dim];
        self.apply(b, &mut tmp);
        a.iter().zip(&tmp).map(|(x, y)| x * y).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute row sum; an upper bound on the spectral radius.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// max |A − Aᵀ| for symmetric operators, max |A + Aᵀ| for antisymmetric.
    pub fn symmetry_defect(&self) -> f64 {
        let sign = match self.kind {
            OperatorKind::Symmetric => -1.0,
            OperatorKind::Antisymmetric => 1.0,
        };
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v + sign * self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let defect = self.symmetry_defect();
        if self.kind != OperatorKind::Symmetric || defect > 1e-12 * self.max_abs() {
            return Err(Error::NotSymmetric { max_asymmetry: defect });
        }
        Ok(())
    }

    /// Maximum |i − j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Largest number of stored off-diagonal entries in any row.
    pub fn max_offdiag_per_row(&self) -> usize {
        (0..self.dim)
            .map(|i| self.row(i).filter(|&(j, _)| j != i).count())
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }

    /// Text dump: `#` header lines, then one `row col value` line per stored
    /// entry in row-major order. Values use shortest round-trip formatting.
    pub fn write_dump<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        writeln!(w, "# dimension {}", self.dim)?;
        writeln!(w, "# nnz {}", self.nnz())?;
        writeln!(
            w,
            "# kind {}",
            match self.kind {
                OperatorKind::Symmetric => "symmetric",
                OperatorKind::Antisymmetric => "antisymmetric",
            }
        )?;
        for line in header {
            writeln!(w, "# {line}")?;
        }
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:?}")?;
            }
        }
        Ok(())
    }
}
