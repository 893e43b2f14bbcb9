// SPDX-License-Identifier: Apache-2.0

//! Lowest eigenpairs of grid Hamiltonians.
//!
//! The default path is shift-invert Lanczos: `(H − σ)` is factored once with a
//! banded Cholesky (σ just below a certified lower bound of the spectrum, so
//! the factorization always exists) and thick-restart Lanczos extracts the
//! largest eigenvalues of `(H − σ)⁻¹`. When the factor would not fit the
//! memory budget, Lanczos runs on `H` directly. Reported eigenvalues are
//! Rayleigh quotients and residuals are recomputed from `H`.

use serde::{Deserialize, Serialize};

use crate::banded::BandedCholesky;
use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::grid::{assemble_hamiltonian, Grid, GridSpec, PotentialMode};
use crate::lanczos::{norm, thick_restart_lanczos, LanczosConfig, Which};
use crate::sparse::SparseOperator;
use crate::symmetry::{Parity, Sector};

/// 1 kHz.
pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_LEVELS: usize = 32;
/// Doublings beyond the starting grid tried by [`converged_spectrum`].
pub const MAX_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Shift-invert when the factor fits in memory, otherwise direct.
    #[default]
    Auto,
    ShiftInvert,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenOptions {
    pub tol: f64,
    pub seed: u64,
    pub method: Method,
    pub memory_limit_bytes: usize,
    /// Split the problem by the φ₊ reflection when it is a symmetry.
    pub use_symmetry: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: DEFAULT_TOL,
            seed: 0,
            method: Method::Auto,
            memory_limit_bytes: 1_200_000_000,
            use_symmetry: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub method: Option<Method>,
    pub shift: Option<f64>,
    pub restarts: usize,
    pub matvecs: usize,
    /// Number of independent symmetry blocks solved (1 without symmetry).
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub grid: GridSpec,
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue shift relative to the previous (coarser) step.
    pub max_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    /// GHz, ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit vectors in grid node order.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    /// ‖Hv − λv‖₂ in GHz.
    pub residuals: Vec<f64>,
    pub info: SolveInfo,
    pub grid: Option<Grid>,
    #[serde(default)]
    pub refinement: Vec<RefinementStep>,
}

impl Spectrum {
    /// The coarsest grid whose spectrum agreed with its refinement, if this
    /// spectrum came from [`converged_spectrum`].
    pub fn certified_grid(&self) -> Option<GridSpec> {
        let n = self.refinement.len();
        (n >= 2).then(|| self.refinement[n - 2].grid)
    }
}

fn check_k(k: usize, dim: usize) -> Result<()> {
    if k == 0 || k > MAX_LEVELS {
        return Err(Error::domain(format!("k must be in 1..={MAX_LEVELS}, got {k}")));
    }
    if k >= dim {
        return Err(Error::domain(format!(
            "k = {k} must be smaller than the dimension {dim}"
        )));
    }
    Ok(())
}

/// The k lowest eigenpairs of a symmetric operator.
pub fn lowest_eigenpairs(h: &SparseOperator, k: usize, tol: f64, seed: u64) -> Result<Spectrum> {
    let opts = EigenOptions {
        tol,
        seed,
        ..EigenOptions::default()
    };
    lowest_eigenpairs_with(h, k, &opts)
}

pub fn lowest_eigenpairs_with(h: &SparseOperator, k: usize, opts: &EigenOptions) -> Result<Spectrum> {
    h.check_symmetric()?;
    check_k(k, h.dim())?;
    if !(opts.tol > 0.0) {
        return Err(Error::domain(format!("tol must be > 0, got {}", opts.tol)));
    }
    let r = solve_block(h, k, opts, opts.seed)?;
    Ok(Spectrum {
        eigenvalues: r.values,
        eigenvectors: r.vectors,
        residuals: r.residuals,
        info: r.info,
        grid: None,
        refinement: Vec::new(),
    })
}

struct BlockResult {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    info: SolveInfo,
}

/// Rayleigh quotients and true residuals, sorted ascending.
fn finalize(h: &SparseOperator, mut vectors: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let mut hv = vec![0.0; h.dim()];
    let mut items: Vec<(f64, Vec<f64>, f64)> = vectors
        .drain(..)
        .map(|mut v| {
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            h.apply(&v, &mut hv);
            let lambda: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
            let res = hv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            (lambda, v, res)
        })
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut values = Vec::with_capacity(items.len());
    let mut residuals = Vec::with_capacity(items.len());
    for (l, v, r) in items {
        values.push(l);
        vectors.push(v);
        residuals.push(r);
    }
    (values, vectors, residuals)
}

fn gershgorin_floor(h: &SparseOperator) -> f64 {
    (0..h.dim())
        .map(|i| {
            let mut d = 0.0;
            let mut off = 0.0;
            for (j, v) in h.row(i) {
                if j == i {
                    d = v;
                } else {
                    off += v.abs();
                }
            }
            d - off
        })
        .fold(f64::INFINITY, f64::min)
}

fn basis_size(k: usize, n: usize) -> usize {
    (2 * k + 16).max(32).min(n)
}

fn solve_block(h: &SparseOperator, k: usize, opts: &EigenOptions, seed: u64) -> Result<BlockResult> {
    let n = h.dim();
    let max_restarts = 10 * k;
    let use_shift_invert = match opts.method {
        Method::Direct => false,
        Method::ShiftInvert => true,
        Method::Auto => BandedCholesky::memory_estimate(h) <= opts.memory_limit_bytes,
    };

    if use_shift_invert {
        let floor = h.spectral_floor().unwrap_or_else(|| gershgorin_floor(h));
        let mut margin = 1.0f64.max(1e-6 * floor.abs());
        let mut factor = None;
        for _ in 0..6 {
            match BandedCholesky::factor(h, floor - margin) {
                Ok(f) => {
                    factor = Some((f, floor - margin));
                    break;
                }
                Err(_) => margin *= 10.0,
            }
        }
        if let Some((chol, sigma)) = factor {
            return solve_shift_invert(h, k, opts.tol, seed, max_restarts, &chol, sigma);
        }
        if opts.method == Method::ShiftInvert {
            return Err(Error::Config {
                message: "could not factor the shifted operator".into(),
                suggested_lambda: None,
            });
        }
    }

    let cfg = LanczosConfig {
        nev: k,
        max_basis: (4 * k + 40).min(n),
        max_restarts,
        tol: 0.5 * opts.tol,
        seed,
        which: Which::Smallest,
    };
    let out = thick_restart_lanczos(n, |x, y| h.apply(x, y), &cfg);
    let (values, vectors, residuals) = finalize(h, out.vectors);
    let info = SolveInfo {
        method: Some(Method::Direct),
        shift: None,
        restarts: out.restarts,
        matvecs: out.matvecs,
        blocks: 1,
    };
    if residuals.iter().any(|&r| r > opts.tol) {
        return Err(Error::NoConvergence {
            restarts: out.restarts,
            best_residuals: residuals,
        });
    }
    Ok(BlockResult {
        values,
        vectors,
        residuals,
        info,
    })
}

fn solve_shift_invert(
    h: &SparseOperator,
    k: usize,
    tol: f64,
    seed: u64,
    max_restarts: usize,
    chol: &BandedCholesky,
    sigma: f64,
) -> Result<BlockResult> {
    let n = h.dim();
    // An A-space residual r maps to roughly r/θ² in H for smooth vectors.
    let mut inner_tol = 0.1 * tol;
    let mut total_restarts = 0;
    let mut total_matvecs = 0;
    let mut last = Vec::new();
    for _ in 0..4 {
        let cfg = LanczosConfig {
            nev: k,
            max_basis: basis_size(k, n),
            max_restarts,
            tol: inner_tol,
            seed,
            which: Which::Largest,
        };
        let out = thick_restart_lanczos(
            n,
            |x, y| {
                y.copy_from_slice(x);
                chol.solve_in_place(y);
            },
            &cfg,
        );
        total_restarts += out.restarts;
        total_matvecs += out.matvecs;
        let theta_min = out.values.iter().copied().fold(f64::INFINITY, f64::min).abs();
        let (values, vectors, residuals) = finalize(h, out.vectors);
        if residuals.iter().all(|&r| r <= tol) {
            return Ok(BlockResult {
                values,
                vectors,
                residuals,
                info: SolveInfo {
                    method: Some(Method::ShiftInvert),
                    shift: Some(sigma),
                    restarts: total_restarts,
                    matvecs: total_matvecs,
                    blocks: 1,
                },
            });
        }
        last = residuals;
        if !out.converged {
            break;
        }
        inner_tol = (inner_tol * 1e-2)
            .min(0.1 * tol * theta_min * theta_min)
            .max(1e-15 * theta_min);
    }
    Err(Error::NoConvergence {
        restarts: total_restarts,
        best_residuals: last,
    })
}

/// True when `h` is invariant under the node permutation.
pub(crate) fn commutes(h: &SparseOperator, perm: &[usize]) -> bool {
    let tol = 1e-12 * h.max_abs();
    (0..h.dim()).all(|i| h.row(i).all(|(j, v)| (v - h.get(perm[i], perm[j])).abs() <= tol))
}

/// The k lowest eigenpairs of an operator that commutes with the involution
/// `perm`, solved block by block. Each block is asked for about half the
/// levels and extended until the merged list provably holds the k lowest.
pub(crate) fn lowest_by_symmetry(
    h: &SparseOperator,
    perm: &[usize],
    k: usize,
    opts: &EigenOptions,
) -> Result<Spectrum> {
    check_k(k, h.dim())?;
    let sectors = [
        Sector::reduce(h, perm, Parity::Even),
        Sector::reduce(h, perm, Parity::Odd),
    ];
    let cap: Vec<usize> = sectors.iter().map(|s| k.min(s.dim().saturating_sub(1))).collect();
    let mut want: Vec<usize> = cap.iter().map(|&c| (k.div_ceil(2) + 2).min(c)).collect();
    let mut results: Vec<Option<BlockResult>> = vec![None, None];
    loop {
        for s in 0..2 {
            let stale = results[s].as_ref().is_none_or(|r| r.values.len() != want[s]);
            if stale && want[s] > 0 {
                let seed = opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s as u64);
                results[s] = Some(solve_block(&sectors[s].operator, want[s], opts, seed)?);
            }
        }
        let mut merged: Vec<f64> = results
            .iter()
            .flatten()
            .flat_map(|r| r.values.iter().copied())
            .collect();
        merged.sort_by(f64::total_cmp);
        if merged.len() < k {
            return Err(Error::domain(format!("k = {k} exceeds the available levels")));
        }
        let e_k = merged[k - 1];
        let mut done = true;
        for s in 0..2 {
            let top = results[s].as_ref().and_then(|r| r.values.last().copied());
            let complete = want[s] == cap[s] || top.is_some_and(|t| t >= e_k);
            if !complete {
                want[s] = (want[s] + (k / 2).max(2)).min(cap[s]);
                done = false;
            }
        }
        if done {
            break;
        }
    }

    let mut levels: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let mut info = SolveInfo {
        blocks: 2,
        ..SolveInfo::default()
    };
    for (sector, r) in sectors.iter().zip(results.into_iter()) {
        let Some(r) = r else { continue };
        info.method = r.info.method;
        info.shift = match (info.shift, r.info.shift) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        info.restarts += r.info.restarts;
        info.matvecs += r.info.matvecs;
        for ((l, v), res) in r.values.into_iter().zip(r.vectors).zip(r.residuals) {
            levels.push((l, sector.lift(&v), res));
        }
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    levels.truncate(k);
    // residuals are re-measured on the full operator
    let (eigenvalues, eigenvectors, residuals) = finalize(h, levels.into_iter().map(|l| l.1).collect());
    if residuals.iter().any(|&r| r > opts.tol) {
        return Err(Error::NoConvergence {
            restarts: info.restarts,
            best_residuals: residuals,
        });
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        residuals,
        info,
        grid: None,
        refinement: Vec::new(),
    })
}

/// Assemble and solve on one grid.
pub fn solve_grid(
    p: &CircuitParams,
    spec: &GridSpec,
    mode: PotentialMode,
    k: usize,
    opts: &EigenOptions,
) -> Result<Spectrum> {
    let grid = Grid::new(p, spec, mode)?;
    let h = assemble_hamiltonian(p, spec, mode)?;
    let mut spectrum = if opts.use_symmetry && p.d == 0.0 {
        let perm = grid.plus_reflection();
        debug_assert!(commutes(&h, &perm));
        lowest_by_symmetry(&h, &perm, k, opts)?
    } else {
        lowest_eigenpairs_with(&h, k, opts)?
    };
    spectrum.grid = Some(grid);
    Ok(spectrum)
}

/// Solve on successively doubled grids until the k lowest eigenvalues move by
/// at most `target` GHz; returns the finest spectrum with the full history.
pub fn converged_spectrum(
    p: &CircuitParams,
    start: &GridSpec,
    mode: PotentialMode,
    k: usize,
    target: f64,
    opts: &EigenOptions,
) -> Result<Spectrum> {
    if !(target >= 1e-4) {
        return Err(Error::domain(format!("target must be >= 1e-4 GHz, got {target}")));
    }
    let mut spec = *start;
    let mut prev = solve_grid(p, &spec, mode, k, opts)?;
    let mut history = vec![RefinementStep {
        grid: spec,
        eigenvalues: prev.eigenvalues.clone(),
        max_change: None,
    }];
    for _ in 0..MAX_DOUBLINGS {
        spec = spec.refined();
        let cur = solve_grid(p, &spec, mode, k, opts)?;
        let change = cur
            .eigenvalues
            .iter()
            .zip(&prev.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(RefinementStep {
            grid: spec,
            eigenvalues: cur.eigenvalues.clone(),
            max_change: Some(change),
        });
        if change <= target {
            return Ok(Spectrum {
                refinement: history,
                ..cur
            });
        }
        prev = cur;
    }
    Err(Error::RefinementCap {
        target_ghz: target,
        trace: history,
    })
}
