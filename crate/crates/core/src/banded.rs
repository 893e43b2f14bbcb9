// SPDX-License-Identifier: Apache-2.0

//! Cholesky factorization of symmetric positive definite band matrices.
//!
//! Used for shift-invert spectral transforms: the grid Hamiltonians have a
//! half bandwidth of a few φ₊ rows, so `(H − σ)` factors in O(n·b²).

use crate::sparse::SparseOperator;

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row i holds L[i][i-bw ..= i] at `data[i*(bw+1) ..]`, left-padded.
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

impl BandedCholesky {
    /// Bytes needed to factor `a`.
    pub fn memory_estimate(a: &SparseOperator) -> usize {
        a.dim() * (a.bandwidth() + 1) * std::mem::size_of::<f64>()
    }

    /// Factor `a − shift·I = L Lᵀ`.
    pub fn factor(a: &SparseOperator, shift: f64) -> Result<Self, NotPositiveDefinite> {
        let n = a.dim();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    let val = if j == i { v - shift } else { v };
                    data[i * w + j + bw - i] = val;
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let (row_i, row_j) = if j < i {
                    let (head, tail) = data.split_at_mut(i * w);
                    (&tail[..w], &head[j * w..(j + 1) * w])
                } else {
                    let r = &data[i * w..(i + 1) * w];
                    (r, r)
                };
                let ri = &row_i[lo + bw - i..j + bw - i];
                let rj = &row_j[lo + bw - j..j + bw - j];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let s = row_i[j + bw - i] - dot;
                if j == i {
                    if !(s > 0.0) {
                        return Err(NotPositiveDefinite { row: i, pivot: s });
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    let djj = data[j * w + bw];
                    data[i * w + j + bw - i] = s / djj;
                }
            }
        }
        Ok(BandedCholesky { n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrite `x` with (L Lᵀ)⁻¹ x.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        assert_eq!(x.len(), n);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w..(i + 1) * w];
            let dot: f64 = row[lo + bw - i..bw].iter().zip(&x[lo..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / row[bw];
        }
        for i in (0..n).rev() {
            x[i] /= self.data[i * w + bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w..(i + 1) * w];
            for (xk, l) in x[lo..i].iter_mut().zip(&row[lo + bw - i..bw]) {
                *xk -= l * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{OperatorKind, TripletBuilder};

    fn pentadiag(n: usize) -> SparseOperator {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 6.0 + i as f64 * 0.1);
            for (off, v) in [(1, -1.5), (3, 0.7)] {
                if i + off < n {
                    b.add(i, i + off, v);
                    b.add(i + off, i, v);
                }
            }
        }
        b.build(OperatorKind::Symmetric)
    }

    #[test]
    fn solves_shifted_system() {
        let a = pentadiag(40);
        let shift = 0.5;
        let f = BandedCholesky::factor(&a, shift).unwrap();
        let x_true: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 40];
        a.apply(&x_true, &mut b);
        for (bi, xi) in b.iter_mut().zip(&x_true) {
            *bi -= shift * xi;
        }
        f.solve_in_place(&mut b);
        for (x, y) in b.iter().zip(&x_true) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_indefinite_shift() {
        let a = pentadiag(10);
        assert!(BandedCholesky::factor(&a, 100.0).is_err());
    }
}
