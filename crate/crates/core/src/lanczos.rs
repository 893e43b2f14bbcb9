// SPDX-License-Identifier: Apache-2.0

//! Thick-restart Lanczos for a few extremal eigenpairs of a symmetric linear
//! map.
//!
//! Every new Krylov vector is orthogonalized twice against the whole basis
//! (classical Gram-Schmidt, two passes), and the projected matrix is built
//! from those coefficients directly. After a restart the kept Ritz vectors
//! couple to the continuation vector through an arrow row, which the same
//! Gram-Schmidt coefficients supply without special handling.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Largest,
    Smallest,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig {
    pub nev: usize,
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Converged when the Ritz residual estimate |β s_m| is below this.
    pub tol: f64,
    pub seed: u64,
    pub which: Which,
}

#[derive(Debug, Clone)]
pub struct LanczosOutput {
    /// Ritz values ordered by `which` (best first).
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residual_estimates: Vec<f64>,
    pub restarts: usize,
    pub matvecs: usize,
    pub converged: bool,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn random_unit_orthogonal(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for b in basis {
                let h = dot(b, &v);
                axpy(-h, b, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Run thick-restart Lanczos on the map `apply(x, y): y = A x` of size `n`.
pub fn thick_restart_lanczos<F>(n: usize, mut apply: F, cfg: &LanczosConfig) -> LanczosOutput
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert!(cfg.nev >= 1 && cfg.nev <= n);
    let m = cfg.max_basis.max(cfg.nev + 2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    basis.push(random_unit_orthogonal(&mut rng, n, &[]));
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut w = vec![0.0; n];
    let mut coeff = vec![0.0; m];
    let mut matvecs = 0;
    let mut restarts = 0;

    loop {
        // Expand the basis to m vectors; `residual` ends up as β·v_{m+1}.
        let mut j = basis.len() - 1;
        let (beta, residual) = loop {
            apply(&basis[j], &mut w);
            matvecs += 1;
            coeff[..=j].iter_mut().for_each(|c| *c = 0.0);
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate().take(j + 1) {
                    let h = dot(b, &w);
                    axpy(-h, b, &mut w);
                    coeff[i] += h;
                }
            }
            for i in 0..=j {
                t[(i, j)] = coeff[i];
                t[(j, i)] = coeff[i];
            }
            let beta = norm(&w);
            let scale = t[(j, j)]
                .abs()
                .max(coeff[..=j].iter().fold(0.0f64, |a, c| a.max(c.abs())));
            let breakdown = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE);
            if j + 1 == m {
                break (if breakdown { 0.0 } else { beta }, w.clone());
            }
            if breakdown {
                // Invariant subspace: continue with a fresh orthogonal direction.
                let v = random_unit_orthogonal(&mut rng, n, &basis);
                basis.push(v);
            } else {
                basis.push(w.iter().map(|x| x / beta).collect());
            }
            j += 1;
        };

        let eig = SymmetricEigen::new(t.clone());
        let mut order: Vec<usize> = (0..m).collect();
        match cfg.which {
            Which::Largest => order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a])),
            Which::Smallest => order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])),
        }
        let estimates: Vec<f64> = order
            .iter()
            .map(|&k| (beta * eig.eigenvectors[(m - 1, k)]).abs())
            .collect();
        let converged = estimates[..cfg.nev].iter().all(|&e| e <= cfg.tol) || m == n;

        let ritz = |k: usize| -> Vec<f64> {
            let mut v = vec![0.0; n];
            for (i, b) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, k)], b, &mut v);
            }
            v
        };

        if converged || restarts >= cfg.max_restarts {
            return LanczosOutput {
                values: order[..cfg.nev].iter().map(|&k| eig.eigenvalues[k]).collect(),
                vectors: order[..cfg.nev].iter().map(|&k| ritz(k)).collect(),
                residual_estimates: estimates[..cfg.nev].to_vec(),
                restarts,
                matvecs,
                converged,
            };
        }

        let keep = (cfg.nev + (m - cfg.nev) / 2).min(m - 2).max(cfg.nev);
        let mut next: Vec<Vec<f64>> = order[..keep].iter().map(|&k| ritz(k)).collect();
        let cont = if beta > 0.0 {
            let mut r: Vec<f64> = residual.iter().map(|x| x / beta).collect();
            // re-orthogonalize against the new Ritz basis to contain drift
            for b in &next {
                let h = dot(b, &r);
                axpy(-h, b, &mut r);
            }
            let nr = norm(&r);
            if nr > 1e-8 {
                r.iter_mut().for_each(|x| *x /= nr);
                r
            } else {
                random_unit_orthogonal(&mut rng, n, &next)
            }
        } else {
            random_unit_orthogonal(&mut rng, n, &next)
        };
        next.push(cont);
        basis = next;
        t.fill(0.0);
        for (i, &k) in order[..keep].iter().enumerate() {
            t[(i, i)] = eig.eigenvalues[k];
        }
        restarts += 1;
    }
}
