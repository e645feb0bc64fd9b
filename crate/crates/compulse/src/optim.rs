// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Small dense optimizers shared across the crate.
//!
//! The problems here are tiny (a dozen parameters, a few dozen residuals),
//! so a plain Levenberg-Marquardt with a central-difference Jacobian and a
//! Cholesky solve of the damped normal equations is the right size. The
//! damping uses Marquardt scaling so amplitude-like and phase-like
//! parameters can live on different scales.

/// Options for [`levenberg_marquardt`].
pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the sum of squared residuals drops below this.
    pub ssq_tol: f64,
    /// Stop when an accepted step improves ssq by less than this relative
    /// amount.
    pub rel_tol: f64,
    /// Central-difference step scale.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            ssq_tol: 1e-28,
            rel_tol: 1e-14,
            fd_step: 1e-6,
        }
    }
}

pub(crate) struct LmFit {
    pub params: Vec<f64>,
    pub ssq: f64,
    pub iterations: usize,
    /// Jacobian at the solution, row-major m x n. Kept for covariance
    /// estimates.
    pub jacobian: Vec<f64>,
    pub n_residuals: usize,
}

impl LmFit {
    /// Parameter covariance (J^T J)^-1 * ssq / (m - n), the usual
    /// linearized estimate. None when m <= n or the normal matrix is
    /// singular.
    pub fn covariance(&self) -> Option<Vec<f64>> {
        let n = self.params.len();
        let m = self.n_residuals;
        if m <= n {
            return None;
        }
        let mut jtj = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for r in 0..m {
                    s += self.jacobian[r * n + i] * self.jacobian[r * n + j];
                }
                jtj[i * n + j] = s;
            }
        }
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for col in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[col] = 1.0;
            let mut a = jtj.clone();
            let mut b = e.clone();
            if !cholesky_solve(&mut a, &mut b, n) {
                return None;
            }
            for row in 0..n {
                inv[row * n + col] = b[row];
            }
        }
        let scale = self.ssq / (m - n) as f64;
        inv.iter_mut().for_each(|x| *x *= scale);
        Some(inv)
    }
}

/// Minimize the sum of squared residuals of `f` starting from `init`.
///
/// `f(params, out)` must fill `out` with `n_residuals` values. The Jacobian
/// is taken by central differences, which is plenty for these problem
/// sizes; the true residuals are always what decides acceptance, so an
/// approximate Jacobian cannot fake convergence.
pub(crate) fn levenberg_marquardt(
    f: &mut dyn FnMut(&[f64], &mut [f64]),
    n_residuals: usize,
    init: &[f64],
    opts: &LmOptions,
) -> LmFit {
    let n = init.len();
    let m = n_residuals;
    let mut params = init.to_vec();
    let mut r = vec![0.0; m];
    let mut r_trial = vec![0.0; m];
    f(&params, &mut r);
    let mut ssq: f64 = r.iter().map(|v| v * v).sum();

    let mut jac = vec![0.0; m * n];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut flat = false;

    for _ in 0..opts.max_iterations {
        if ssq < opts.ssq_tol || flat {
            break;
        }
        iterations += 1;

        // Central-difference Jacobian.
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        for j in 0..n {
            let h = opts.fd_step * (1.0 + params[j].abs());
            let saved = params[j];
            params[j] = saved + h;
            f(&params, &mut plus);
            params[j] = saved - h;
            f(&params, &mut minus);
            params[j] = saved;
            let inv = 1.0 / (2.0 * h);
            for i in 0..m {
                jac[i * n + j] = (plus[i] - minus[i]) * inv;
            }
        }

        // Normal equations with Marquardt scaling.
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for row in 0..m {
                    s += jac[row * n + i] * jac[row * n + j];
                }
                jtj[i * n + j] = s;
                jtj[j * n + i] = s;
            }
            let mut s = 0.0;
            for row in 0..m {
                s += jac[row * n + i] * r[row];
            }
            jtr[i] = -s;
        }

        let grad_norm = jtr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if grad_norm < 1e-16 {
            break;
        }

        let mut improved = false;
        for _ in 0..25 {
            let mut a = jtj.clone();
            for i in 0..n {
                // Floor keeps the system solvable along flat directions.
                a[i * n + i] += lambda * jtj[i * n + i].max(1e-12);
            }
            let mut step = jtr.clone();
            if !cholesky_solve(&mut a, &mut step, n) {
                lambda *= 10.0;
                continue;
            }
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            f(&trial, &mut r_trial);
            let ssq_trial: f64 = r_trial.iter().map(|v| v * v).sum();
            if ssq_trial < ssq {
                let rel = (ssq - ssq_trial) / ssq.max(1e-300);
                params = trial;
                r.copy_from_slice(&r_trial);
                ssq = ssq_trial;
                lambda = (lambda * 0.33).max(1e-12);
                improved = true;
                flat = rel < opts.rel_tol;
                break;
            }
            lambda *= 3.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !improved {
            break;
        }
    }

    LmFit {
        params,
        ssq,
        iterations,
        jacobian: jac,
        n_residuals: m,
    }
}

/// Solve A x = b in place for symmetric positive definite A (row-major).
/// Returns false if a pivot collapses.
pub(crate) fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    // Factor A = L L^T, L stored in the lower triangle.
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

/// Golden-section minimization of a unimodal function on [a, b], followed by
/// one parabolic refinement. Returns (argmin, min).
pub(crate) fn golden_min(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let (mut xm, mut fm) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    // Parabolic polish through (lo, xm, hi).
    let h = (hi - lo) / 2.0;
    if h > 0.0 {
        let fl = f(xm - h);
        let fr = f(xm + h);
        let denom = fl - 2.0 * fm + fr;
        if denom > 0.0 {
            let x_par = xm + h * 0.5 * (fl - fr) / denom;
            let f_par = f(x_par);
            if f_par < fm {
                xm = x_par;
                fm = f_par;
            }
        }
    }
    (xm, fm)
}

/// Coarse grid scan followed by golden-section refinement around the best
/// grid point. For response curves with side lobes (repeated pulses), the
/// scan picks the right basin and golden section finishes the job.
pub(crate) fn scan_then_golden(
    f: &mut dyn FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    n_scan: usize,
    xtol: f64,
) -> (f64, f64) {
    assert!(n_scan >= 3 && hi > lo);
    let mut best_i = 0;
    let mut best_f = f64::INFINITY;
    let step = (hi - lo) / (n_scan - 1) as f64;
    for i in 0..n_scan {
        let v = f(lo + step * i as f64);
        if v < best_f {
            best_f = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = lo + step * (best_i + 1).min(n_scan - 1) as f64;
    golden_min(f, a, b, xtol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lm_solves_rosenbrock_least_squares() {
        // Rosenbrock as residuals (1 - x, 10*(y - x^2)); minimum (1, 1).
        let mut f = |p: &[f64], out: &mut [f64]| {
            out[0] = 1.0 - p[0];
            out[1] = 10.0 * (p[1] - p[0] * p[0]);
        };
        let fit = levenberg_marquardt(&mut f, 2, &[-1.2, 1.0], &LmOptions::default());
        assert!((fit.params[0] - 1.0).abs() < 1e-8, "{:?}", fit.params);
        assert!((fit.params[1] - 1.0).abs() < 1e-8);
        assert!(fit.ssq < 1e-16);
    }

    #[test]
    fn lm_handles_rank_deficient_problems() {
        // Residual depends only on p0 + p1; the solution manifold is a
        // line and damping must keep the normal equations solvable.
        let mut f = |p: &[f64], out: &mut [f64]| {
            out[0] = p[0] + p[1] - 3.0;
        };
        let fit = levenberg_marquardt(&mut f, 1, &[10.0, -2.0], &LmOptions::default());
        assert!((fit.params[0] + fit.params[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn lm_covariance_matches_linear_regression() {
        // Linear model y = a + b t with known per-point deviations; the
        // covariance of (a, b) has a textbook closed form.
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 + 0.5 * t + 0.01 * (t * 7.3).sin()).collect();
        let mut f = |p: &[f64], out: &mut [f64]| {
            for (i, (t, y)) in ts.iter().zip(&ys).enumerate() {
                out[i] = p[0] + p[1] * t - y;
            }
        };
        let fit = levenberg_marquardt(&mut f, 10, &[0.0, 0.0], &LmOptions::default());
        let cov = fit.covariance().unwrap();
        let n = ts.len() as f64;
        let st: f64 = ts.iter().sum();
        let stt: f64 = ts.iter().map(|t| t * t).sum();
        let det = n * stt - st * st;
        let sigma2 = fit.ssq / (10.0 - 2.0);
        let expect_var_b = sigma2 * n / det;
        // The jacobian comes from finite differences, so allow a little
        // rounding noise on top of the closed form.
        assert!(
            (cov[3] - expect_var_b).abs() < 1e-6 * expect_var_b + 1e-18,
            "var(b) {} vs {expect_var_b}",
            cov[3]
        );
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![4.0, 1.0, 1.0, 3.0];
        let mut b = vec![1.0, 2.0];
        assert!(cholesky_solve(&mut a, &mut b, 2));
        // Solution of [[4,1],[1,3]] x = [1,2] is [1/11, 7/11].
        assert!((b[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((b[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn golden_finds_quadratic_minimum() {
        let mut f = |x: f64| (x - 1.7).powi(2) + 0.3;
        let (x, v) = golden_min(&mut f, -10.0, 10.0, 1e-10);
        assert!((x - 1.7).abs() < 1e-8);
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn scan_then_golden_escapes_side_lobes() {
        // cos(5x) + (x/4)^2 has many local minima; the global one near 0.6.
        let mut f = |x: f64| (5.0 * x).cos() + (x / 4.0).powi(2);
        let (x, _) = scan_then_golden(&mut f, -10.0, 10.0, 101, 1e-10);
        assert!((x - 0.625).abs() < 0.05, "x = {x}");
    }
}
