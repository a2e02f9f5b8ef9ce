//! L-stable singly diagonally implicit Runge–Kutta method of order 4
//! (five stages, γ = 1/4, stiffly accurate) with an embedded order-3
//! estimate, simplified Newton stages, and Hermite dense output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const GAMMA: f64 = 0.25;

pub const A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
pub const C: [f64; 5] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
pub const B: [f64; 5] = A[4];
pub const B_HAT: [f64; 5] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: Vec<f64>,
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    /// Components that must stay nonnegative.
    pub nonnegative: Vec<usize>,
}

impl OdeOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            rtol: 1e-8,
            atol: vec![1e-12; dim],
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            nonnegative: Vec::new(),
        }
    }
}

/// Accepted steps with derivatives for cubic Hermite interpolation.
#[derive(Debug, Clone, Default)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub rhs_evals: usize,
    pub rejected: usize,
}

impl Solution {
    pub fn last(&self) -> (f64, &[f64]) {
        let i = self.t.len() - 1;
        (self.t[i], &self.y[i])
    }

    /// Dense output at `t` (clamped to the integrated span).
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.y[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.y[n - 1].clone();
        }
        let i = match self.t.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return self.y[i].clone(),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.y[i].len())
            .map(|k| h00 * self.y[i][k] + h10 * h * self.f[i][k] + h01 * self.y[i + 1][k] + h11 * h * self.f[i + 1][k])
            .collect()
    }

    fn push(&mut self, t: f64, y: Vec<f64>, f: Vec<f64>) {
        self.t.push(t);
        self.y.push(y);
        self.f.push(f);
    }
}

fn err_norm(e: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = e.len() as f64;
    (e.iter()
        .enumerate()
        .map(|(i, &ei)| {
            let sc = opts.atol[i] + opts.rtol * y0[i].abs().max(y1[i].abs());
            (ei / sc).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

fn jacobian<F: FnMut(f64, &[f64], &mut [f64])>(
    f: &mut F,
    t: f64,
    y: &[f64],
    fy: &[f64],
    atol: &[f64],
    evals: &mut usize,
) -> DMatrix<f64> {
    let n = y.len();
    let mut j = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    for c in 0..n {
        let d = f64::EPSILON.sqrt() * y[c].abs().max(atol[c] * 1e3).max(1e-300);
        yp[c] = y[c] + d;
        f(t, &yp, &mut fp);
        *evals += 1;
        for r in 0..n {
            j[(r, c)] = (fp[r] - fy[r]) / d;
        }
        yp[c] = y[c];
    }
    j
}

/// Integrate y' = f(t, y) from `t0` to `t1`.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], opts: &OdeOptions) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    assert_eq!(opts.atol.len(), n, "atol length");
    let mut sol = Solution::default();
    let mut y = y0.to_vec();
    let mut fy = vec![0.0; n];
    f(t0, &y, &mut fy);
    sol.rhs_evals += 1;
    sol.push(t0, y.clone(), fy.clone());
    if t1 <= t0 {
        return Ok(sol);
    }
    let span = t1 - t0;
    let mut h = opts.h0.unwrap_or_else(|| {
        let d0 = err_norm(&y, &y, &y, opts).max(1e-5);
        let d1 = err_norm(&fy, &y, &y, opts).max(1e-5);
        (0.01 * d0 / d1).min(span).min(opts.h_max)
    });
    let h_min = 1e-14 * span.max(t0.abs());
    let mut t = t0;
    let mut jac: Option<DMatrix<f64>> = None;
    let mut stage_f = vec![vec![0.0; n]; 5];
    let mut z = vec![vec![0.0; n]; 5];
    let mut ytmp = vec![0.0; n];
    let mut ftmp = vec![0.0; n];

    for _ in 0..opts.max_steps {
        if t >= t1 {
            return Ok(sol);
        }
        h = h.min(t1 - t).min(opts.h_max);
        if h < h_min {
            return Err(Error::Stiffness { t, h, last_good: y });
        }
        let j = match &jac {
            Some(j) => j.clone(),
            None => {
                let j = jacobian(&mut f, t, &y, &fy, &opts.atol, &mut sol.rhs_evals);
                jac = Some(j.clone());
                j
            }
        };
        let m = DMatrix::identity(n, n) - &j * (h * GAMMA);
        let lu = m.lu();

        let mut ok = true;
        for s in 0..5 {
            // Z_s = h Σ_{j<s} a_sj F_j + h γ f(y + Z_s)
            let mut base = vec![0.0; n];
            for jj in 0..s {
                for k in 0..n {
                    base[k] += h * A[s][jj] * stage_f[jj][k];
                }
            }
            let mut zs: Vec<f64> = if s == 0 { vec![0.0; n] } else { z[s - 1].clone() };
            let mut converged = false;
            let mut prev_norm = f64::INFINITY;
            for _ in 0..12 {
                for k in 0..n {
                    ytmp[k] = y[k] + zs[k];
                }
                f(t + C[s] * h, &ytmp, &mut ftmp);
                sol.rhs_evals += 1;
                let resid = DVector::from_iterator(n, (0..n).map(|k| base[k] + h * GAMMA * ftmp[k] - zs[k]));
                let Some(dz) = lu.solve(&resid) else {
                    break;
                };
                for k in 0..n {
                    zs[k] += dz[k];
                }
                let nrm = err_norm(dz.as_slice(), &y, &y, opts);
                if !nrm.is_finite() {
                    break;
                }
                if nrm < 1e-3 {
                    converged = true;
                    break;
                }
                if nrm > 2.0 * prev_norm {
                    break;
                }
                prev_norm = nrm;
            }
            if !converged {
                ok = false;
                break;
            }
            for k in 0..n {
                ytmp[k] = y[k] + zs[k];
            }
            // F_s from the converged stage value, recovered from the stage relation
            // to avoid an extra evaluation: F_s = (Z_s − base)/(hγ).
            for k in 0..n {
                stage_f[s][k] = (zs[k] - base[k]) / (h * GAMMA);
            }
            z[s] = zs;
        }
        if !ok {
            h *= 0.25;
            jac = None;
            sol.rejected += 1;
            continue;
        }
        let y_new: Vec<f64> = (0..n).map(|k| y[k] + z[4][k]).collect();
        let raw_err: Vec<f64> = (0..n)
            .map(|k| h * (0..5).map(|s| (B[s] - B_HAT[s]) * stage_f[s][k]).sum::<f64>())
            .collect();
        let filtered = lu
            .solve(&DVector::from_vec(raw_err.clone()))
            .map(|v| v.as_slice().to_vec())
            .unwrap_or(raw_err);
        let mut err = err_norm(&filtered, &y, &y_new, opts);
        let negative = opts.nonnegative.iter().any(|&i| y_new[i] < -opts.atol[i]);
        if negative {
            err = err.max(10.0);
        }
        if err <= 1.0 && y_new.iter().all(|v| v.is_finite()) {
            t += h;
            y = y_new;
            for &i in &opts.nonnegative {
                if y[i] < 0.0 {
                    y[i] = 0.0;
                }
            }
            f(t, &y, &mut fy);
            sol.rhs_evals += 1;
            sol.push(t, y.clone(), fy.clone());
            jac = None;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.25)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            sol.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.25)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
        }
    }
    Err(Error::Convergence(format!("ODE exceeded {} steps at t = {t:e}", opts.max_steps)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_conditions() {
        let c = C;
        let b = B;
        let s1: f64 = b.iter().sum();
        let s2: f64 = (0..5).map(|i| b[i] * c[i]).sum();
        let s3: f64 = (0..5).map(|i| b[i] * c[i] * c[i]).sum();
        let s4: f64 = (0..5).map(|i| b[i] * c[i].powi(3)).sum();
        let ac: Vec<f64> = (0..5).map(|i| (0..5).map(|j| A[i][j] * c[j]).sum()).collect();
        let s5: f64 = (0..5).map(|i| b[i] * ac[i]).sum();
        let s6: f64 = (0..5).map(|i| b[i] * c[i] * ac[i]).sum();
        let s7: f64 = (0..5).map(|i| b[i] * (0..5).map(|j| A[i][j] * c[j] * c[j]).sum::<f64>()).sum();
        let aac: Vec<f64> = (0..5).map(|i| (0..5).map(|j| A[i][j] * ac[j]).sum()).collect();
        let s8: f64 = (0..5).map(|i| b[i] * aac[i]).sum();
        for (v, e) in [(s1, 1.0), (s2, 0.5), (s3, 1.0 / 3.0), (s4, 0.25), (s5, 1.0 / 6.0), (s6, 1.0 / 8.0), (s7, 1.0 / 12.0), (s8, 1.0 / 24.0)] {
            assert!((v - e).abs() < 1e-13, "{v} vs {e}");
        }
        for i in 0..5 {
            let row: f64 = A[i].iter().sum();
            assert!((row - C[i]).abs() < 1e-14);
        }
        let bh: f64 = B_HAT.iter().sum();
        assert!((bh - 1.0).abs() < 1e-14);
        let bh2: f64 = (0..5).map(|i| B_HAT[i] * c[i]).sum();
        let bh3: f64 = (0..5).map(|i| B_HAT[i] * c[i] * c[i]).sum();
        let bh4: f64 = (0..5).map(|i| B_HAT[i] * ac[i]).sum();
        assert!((bh2 - 0.5).abs() < 1e-13 && (bh3 - 1.0 / 3.0).abs() < 1e-13 && (bh4 - 1.0 / 6.0).abs() < 1e-13);
    }

    #[test]
    fn exponential_decay() {
        let sol = integrate(|_, y, dy| dy[0] = -y[0], 0.0, 5.0, &[1.0], &OdeOptions::new(1)).unwrap();
        let (_, y) = sol.last();
        assert!((y[0] - (-5f64).exp()).abs() < 1e-8);
        let mid = sol.sample(2.345)[0];
        assert!((mid - (-2.345f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn stiff_robertson() {
        let mut opts = OdeOptions::new(3);
        opts.rtol = 1e-6;
        opts.atol = vec![1e-10; 3];
        let sol = integrate(
            |_, y, dy| {
                dy[0] = -0.04 * y[0] + 1e4 * y[1] * y[2];
                dy[1] = 0.04 * y[0] - 1e4 * y[1] * y[2] - 3e7 * y[1] * y[1];
                dy[2] = 3e7 * y[1] * y[1];
            },
            0.0,
            40.0,
            &[1.0, 0.0, 0.0],
            &opts,
        )
        .unwrap();
        let (_, y) = sol.last();
        // reference values at t = 40
        assert!((y[0] - 0.715_827_1).abs() < 1e-5, "{}", y[0]);
        assert!((y[2] - 0.284_155_0).abs() < 1e-5, "{}", y[2]);
        assert!(sol.t.len() < 2000);
    }
}
