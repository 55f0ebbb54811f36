//! Minimizers used by the estimation code: an adaptive Nelder–Mead simplex
//! and a BFGS refinement driven by central-difference gradients.
//!
//! Objectives are minimized; NaN is treated as `+inf`.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Central differences with per-component step `h * (1 + |x_i|)`.
///
/// Exact (up to rounding) for quadratics. Fails with the offending index if
/// the objective is not finite anywhere on the stencil.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFiniteGradient { index: i });
        }
        grad.push((hi - lo) / (2.0 * step));
    }
    Ok(grad)
}

/// Finite-difference Hessian, step `h * (1 + |x_i|)` per component.
pub fn hessian<F>(mut f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|v| h * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut out = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    let mut eval = |p: &[f64], i: usize| -> Result<f64> {
        let v = f(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteGradient { index: i })
        }
    };
    for i in 0..n {
        p[i] = x[i] + steps[i];
        let up = eval(&p, i)?;
        p[i] = x[i] - steps[i];
        let dn = eval(&p, i)?;
        p[i] = x[i];
        out[(i, i)] = (up - 2.0 * f0 + dn) / (steps[i] * steps[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                p[i] = x[i] + si * steps[i];
                p[j] = x[j] + sj * steps[j];
                let v = eval(&p, i);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * steps[i] * steps[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub iterations: usize,
    /// Largest infinity-norm distance from the best vertex to any other.
    pub diameter: f64,
    pub converged: bool,
    /// `(iteration, best value)` each time the best vertex improves.
    pub trace: Vec<(usize, f64)>,
}

/// Nelder–Mead with dimension-adaptive coefficients (Gao & Han).
///
/// Stops once the simplex diameter drops below `diameter_tol` or `max_evals`
/// objective evaluations have been spent.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], diameter_tol: f64, max_evals: usize) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, shrink) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut evals = 0usize;
    let mut eval = |p: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(p))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    values.push(eval(x0, &mut evals));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        values.push(eval(&v, &mut evals));
        simplex.push(v);
    }

    let mut trace = Vec::new();
    let mut best_seen = f64::INFINITY;
    let mut iterations = 0;
    let mut order: Vec<usize> = (0..=n).collect();

    let diameter_of = |simplex: &[Vec<f64>], best: usize| {
        simplex
            .iter()
            .map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    };

    loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n.saturating_sub(1)]);
        if values[best] < best_seen {
            best_seen = values[best];
            trace.push((iterations, best_seen));
        }
        let diameter = diameter_of(&simplex, best);
        if diameter < diameter_tol || evals >= max_evals {
            return SimplexOutcome {
                x: simplex[best].clone(),
                value: values[best],
                evals,
                iterations,
                diameter,
                converged: diameter < diameter_tol,
                trace,
            };
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for &k in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[k]) {
                *c += v / nf;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[best] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let anchor = simplex[best].clone();
        for k in 0..=n {
            if k == best {
                continue;
            }
            for (v, a) in simplex[k].iter_mut().zip(&anchor) {
                *v = a + shrink * (*v - a);
            }
            values[k] = eval(&simplex[k], &mut evals);
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuasiNewtonOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<(usize, f64)>,
}

/// BFGS on a finite-difference gradient with Armijo backtracking.
///
/// Converged when the gradient infinity-norm is at most `grad_tol`.
/// `inverse_hessian` seeds the curvature model; without it the first step is
/// a steepest-descent step capped at 0.1 in every coordinate.
pub fn bfgs<F>(
    mut f: F,
    x0: &[f64],
    h: f64,
    grad_tol: f64,
    max_evals: usize,
    inverse_hessian: Option<DMatrix<f64>>,
) -> Result<QuasiNewtonOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let evals = Cell::new(0usize);
    let mut counted = |p: &[f64]| {
        evals.set(evals.get() + 1);
        sanitize(f(p))
    };

    let mut x = DVector::from_column_slice(x0);
    let mut fx = counted(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Optimization("objective not finite at the BFGS start point".into()));
    }
    let mut g = DVector::from_vec(central_difference(&mut counted, x.as_slice(), h)?);
    let seeded = inverse_hessian.is_some();
    let mut hinv = inverse_hessian.unwrap_or_else(|| DMatrix::identity(n, n));
    let mut trace = vec![(0, fx)];
    let mut iterations = 0;
    let mut fresh = !seeded;
    let mut stalls = 0;

    loop {
        let gnorm = g.amax();
        if gnorm <= grad_tol || evals.get() >= max_evals || stalls >= 3 {
            return Ok(QuasiNewtonOutcome {
                x: x.as_slice().to_vec(),
                value: fx,
                gradient: g.as_slice().to_vec(),
                evals: evals.get(),
                iterations,
                converged: gnorm <= grad_tol,
                trace,
            });
        }
        iterations += 1;

        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            // curvature model lost positive definiteness
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
            fresh = true;
        }
        let mut step = if fresh { (0.1 / dir.amax()).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + step * &dir;
            let ft = counted(trial.as_slice());
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                // no descent along the steepest direction either: at the noise floor
                return Ok(QuasiNewtonOutcome {
                    x: x.as_slice().to_vec(),
                    value: fx,
                    gradient: g.as_slice().to_vec(),
                    evals: evals.get(),
                    iterations,
                    converged: false,
                    trace,
                });
            }
            hinv = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        // progress at rounding level only: the gradient is finite-difference noise
        if fx - f_new <= 1e-13 * (1.0 + fx.abs()) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        let g_new = DVector::from_vec(central_difference(&mut counted, x_new.as_slice(), h)?);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
            fresh = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push((iterations, fx));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let out = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], 1e-8, 10_000);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn simplex_trace_is_monotone() {
        let out = nelder_mead(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[3.0; 6], &[1.0; 6], 1e-7, 50_000);
        assert!(out.converged);
        assert!(out.trace.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn simplex_budget_exhaustion_is_reported() {
        let out = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], 1e-12, 20);
        assert!(!out.converged);
        assert!(out.evals >= 20);
    }

    #[test]
    fn bfgs_quadratic() {
        let f = |x: &[f64]| 5.0 * (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) + 0.5 * x[0] * x[1] + 0.1 * x[2].powi(2);
        let out = bfgs(f, &[0.0, 0.0, 3.0], 1e-5, 1e-8, 10_000, None).unwrap();
        assert!(out.converged);
        let g = central_difference(f, &out.x, 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] - x[1] * x[1];
        let h = hessian(f, &[0.3, -0.7], 1e-3).unwrap();
        assert!((h[(0, 0)] - 4.0).abs() < 1e-6);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-6);
        assert!((h[(1, 1)] + 2.0).abs() < 1e-6);
    }
}
