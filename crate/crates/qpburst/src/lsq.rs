//! Box-constrained Levenberg–Marquardt with forward-difference Jacobians.
//!
//! Steps are projected onto the bounds; variables pinned at a bound whose
//! gradient points outward are frozen for that iteration so the damped
//! normal equations act only on the free subspace. Parameters should be of
//! order one; callers rescale physical units before fitting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LsqOptions {
    pub max_iter: usize,
    /// Relative reduction of the cost below which the fit stops.
    pub ftol: f64,
    /// Relative step size below which the fit stops.
    pub xtol: f64,
    /// Infinity norm of the projected gradient below which the fit stops.
    pub gtol: f64,
    /// Relative finite-difference step.
    pub diff_step: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            gtol: 1e-12,
            diff_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsqResult {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LsqResult {
    /// (JᵀJ)⁻¹ at the solution; the covariance when residuals are already
    /// weighted by their standard deviations.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        jtj.try_inverse()
    }

    /// Covariance scaled by the reduced χ², for unweighted residuals.
    pub fn scaled_covariance(&self) -> Option<DMatrix<f64>> {
        let m = self.residuals.len();
        let n = self.x.len();
        if m <= n {
            return None;
        }
        let s2 = self.cost / (m - n) as f64;
        self.covariance().map(|c| c * s2)
    }

    pub fn std_errors(&self, scaled: bool) -> Option<Vec<f64>> {
        let c = if scaled { self.scaled_covariance()? } else { self.covariance()? };
        Some((0..self.x.len()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimize Σ r_i(x)² subject to `lower ≤ x ≤ upper`. `f` writes the `m`
/// residuals for a parameter vector.
pub fn least_squares<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], m: usize, opts: &LsqOptions) -> Result<LsqResult>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Size(format!("bounds have length {}/{}, parameters {n}", lower.len(), upper.len())));
    }
    if (0..n).any(|i| !(lower[i] <= upper[i])) {
        return Err(Error::Invalid("lower bound exceeds upper bound".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut r = vec![0.0; m];
    f(&x, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Convergence("residuals not finite at the initial point".into()));
    }
    let mut cost = sum_sq(&r);
    let mut jac = DMatrix::zeros(m, n);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut rp = vec![0.0; m];

    let jacobian = |f: &mut F, x: &[f64], r: &[f64], jac: &mut DMatrix<f64>, rp: &mut [f64]| {
        let mut xp = x.to_vec();
        for c in 0..n {
            let mut h = opts.diff_step * x[c].abs().max(1e-3);
            if x[c] + h > upper[c] {
                h = -h;
            }
            xp[c] = x[c] + h;
            f(&xp, rp);
            for k in 0..m {
                jac[(k, c)] = (rp[k] - r[k]) / h;
            }
            xp[c] = x[c];
        }
    };

    while iterations < opts.max_iter {
        iterations += 1;
        jacobian(&mut f, &x, &r, &mut jac, &mut rp);
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let gmax = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if gmax <= opts.gtol * cost.max(1e-300).sqrt() || cost == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            let mut b = -g.clone();
            for i in 0..n {
                if free[i] {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
                } else {
                    for k in 0..n {
                        a[(i, k)] = 0.0;
                        a[(k, i)] = 0.0;
                    }
                    a[(i, i)] = 1.0;
                    b[i] = 0.0;
                }
            }
            let Some(step) = a.lu().solve(&b) else {
                lambda *= 10.0;
                continue;
            };
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + step[i]).collect();
            project(&mut xn, lower, upper);
            f(&xn, &mut rp);
            let cn = sum_sq(&rp);
            if cn.is_finite() && cn < cost {
                let dx = (0..n).map(|i| (xn[i] - x[i]).abs() / (x[i].abs() + opts.xtol)).fold(0.0, f64::max);
                let rel = (cost - cn) / cost;
                x = xn;
                r.copy_from_slice(&rp);
                cost = cn;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel <= opts.ftol || dx <= opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // No descent possible: a local minimum to working precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    jacobian(&mut f, &x, &r, &mut jac, &mut rp);
    Ok(LsqResult {
        x,
        residuals: r,
        cost,
        jacobian: jac,
        iterations,
        converged,
    })
}
