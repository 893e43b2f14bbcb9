// SPDX-License-Identifier: Apache-2.0

//! Box-constrained Nelder–Mead simplex minimization.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when every vertex is within this distance of the best one in
    /// every coordinate.
    pub x_tol: f64,
    /// Fresh simplices started from the best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 500,
            x_tol: 1e-4,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluation: usize,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<TracePoint>,
    /// Per-coordinate extent of the final simplex.
    pub extent: Vec<f64>,
}

struct Counted<F> {
    f: F,
    evals: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &mut [f64]) -> f64 {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn extent(simplex: &[(Vec<f64>, f64)]) -> Vec<f64> {
    let best = &simplex[0].0;
    (0..best.len())
        .map(|j| simplex.iter().map(|(x, _)| (x[j] - best[j]).abs()).fold(0.0, f64::max))
        .collect()
}

/// Minimize `f` inside the box [lower, upper] starting from `x0` with initial
/// simplex edge `step` per coordinate.
pub fn minimize<F>(f: F, x0: &[f64], step: &[f64], lower: &[f64], upper: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n >= 1 && step.len() == n && lower.len() == n && upper.len() == n);
    let mut c = Counted {
        f,
        evals: 0,
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    };
    let mut trace = Vec::new();
    let mut best_x = x0.to_vec();
    let mut best_v = c.eval(&mut best_x);
    let mut converged = false;
    let mut final_extent = step.to_vec();

    for round in 0..=opts.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_v)];
        for j in 0..n {
            let mut x = best_x.clone();
            // step inward if the vertex would leave the box
            x[j] = if x[j] + step[j] <= upper[j] {
                x[j] + step[j]
            } else {
                x[j] - step[j]
            };
            let v = c.eval(&mut x);
            simplex.push((x, v));
        }
        let start_best = best_v;
        converged = false;
        while c.evals < opts.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            trace.push(TracePoint {
                evaluation: c.evals,
                best: simplex[0].1,
            });
            final_extent = extent(&simplex);
            if final_extent.iter().all(|&e| e < opts.x_tol) {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (worst.0[j] - centroid[j])).collect() };

            let mut xr = along(-1.0);
            let vr = c.eval(&mut xr);
            if vr < simplex[0].1 {
                let mut xe = along(-2.0);
                let ve = c.eval(&mut xe);
                simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
            } else if vr < simplex[n - 1].1 {
                simplex[n] = (xr, vr);
            } else {
                let (mut xc, t) = if vr < worst.1 {
                    (along(-0.5), vr)
                } else {
                    (along(0.5), worst.1)
                };
                let vc = c.eval(&mut xc);
                if vc < t {
                    simplex[n] = (xc, vc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        let mut x: Vec<f64> = (0..n).map(|j| x_best[j] + 0.5 * (vertex.0[j] - x_best[j])).collect();
                        let v = c.eval(&mut x);
                        *vertex = (x, v);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= best_v {
            best_x = simplex[0].0.clone();
            best_v = simplex[0].1;
        }
        let improved = start_best - best_v > 1e-12 * best_v.abs().max(f64::MIN_POSITIVE);
        if !converged || (round > 0 && !improved) {
            break;
        }
    }
    Minimum {
        x: best_x,
        value: best_v,
        evaluations: c.evals,
        converged,
        trace,
        extent: final_extent,
    }
}
