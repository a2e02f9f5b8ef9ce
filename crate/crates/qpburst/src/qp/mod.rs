//! Coupled quasiparticle/qubit dynamics.

pub mod drive;
pub mod kernels;
pub mod model;
pub mod tau;

use nalgebra::{DMatrix, DVector};

pub use drive::{temperature, TemperatureDrive};
pub use kernels::{CachedKernels, ConstantKernels, KernelValues, RateKernels, TauTable, ThermalKernels};
pub use model::{generation, generation_split, QpModel, QpState};
pub use tau::{tau_x_inv, KernelGaps, Lead, TauOptions};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions, Solution};

/// One sample of an integrated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub temperature: f64,
    pub state: QpState,
    pub gamma_up: f64,
    pub gamma_down: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub solution: Solution,
}

impl Trajectory {
    pub fn gamma_down(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gamma_down).collect()
    }
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }
}

pub fn default_ode_options() -> OdeOptions {
    let mut o = OdeOptions::new(QpState::DIM);
    o.rtol = 1e-8;
    o.atol = vec![1e-12; QpState::DIM];
    o.nonnegative = vec![0, 1, 2, 3, 4];
    o
}

impl QpModel {
    fn solve_span(&self, t0: f64, t1: f64, init: &[f64], opts: &OdeOptions) -> Result<Solution> {
        ode::integrate(
            |t, y, dy| {
                let d = self.rhs(t, &QpState::from_slice(y)).to_array();
                dy.copy_from_slice(&d);
            },
            t0,
            t1,
            init,
            opts,
        )
    }

    /// Integrate over [t0, t1] and sample at `times` (dense output). The drive
    /// onset is treated as a breakpoint.
    pub fn integrate(&self, t0: f64, t1: f64, init: QpState, times: &[f64]) -> Result<Trajectory> {
        self.integrate_with(t0, t1, init, times, &default_ode_options())
    }

    pub fn integrate_with(&self, t0: f64, t1: f64, init: QpState, times: &[f64], opts: &OdeOptions) -> Result<Trajectory> {
        if !init.is_valid() {
            return Err(Error::Invalid(format!("initial state {init:?} violates invariants")));
        }
        if !(t1.is_finite() && t0.is_finite() && t1 >= t0) {
            return Err(Error::Invalid("integration span must be finite and ordered".into()));
        }
        let onset = self.drive.shape.t0;
        // The drive is flat at onset, so an automatic first step sized from
        // the span can step straight over the rise.
        let mut post = opts.clone();
        if post.h0.is_none() {
            post.h0 = Some(0.01 * self.drive.shape.tau_rise.min(self.drive.shape.tau_fall1));
        }
        let sol = if onset > t0 && onset < t1 {
            let mut a = self.solve_span(t0, onset, &init.to_array(), opts)?;
            let (_, y_mid) = a.last();
            let b = self.solve_span(onset, t1, y_mid, &post)?;
            a.t.extend_from_slice(&b.t[1..]);
            a.y.extend_from_slice(&b.y[1..]);
            a.f.extend_from_slice(&b.f[1..]);
            a.rhs_evals += b.rhs_evals;
            a.rejected += b.rejected;
            a
        } else if onset == t0 {
            self.solve_span(t0, t1, &init.to_array(), &post)?
        } else {
            self.solve_span(t0, t1, &init.to_array(), opts)?
        };
        let points = times
            .iter()
            .map(|&t| {
                let state = QpState::from_slice(&sol.sample(t));
                let temp = self.temperature(t);
                let (gamma_up, gamma_down) = self.transition_rates(&state, temp);
                TrajectoryPoint {
                    t,
                    temperature: temp,
                    state,
                    gamma_up,
                    gamma_down,
                }
            })
            .collect();
        Ok(Trajectory { points, solution: sol })
    }

    /// Steady state at the base temperature: relax from `seed` and polish with
    /// damped Newton on the right-hand side.
    pub fn equilibrium(&self, seed: QpState) -> Result<QpState> {
        let t_b = self.drive.t_base;
        let f = |y: &[f64]| self.rhs_at_temperature(t_b, &QpState::from_slice(y)).to_array();
        let opts = default_ode_options();
        let relaxed = ode::integrate(
            |_, y, dy| dy.copy_from_slice(&f(y)),
            0.0,
            1.0,
            &seed.to_array(),
            &opts,
        )?;
        let mut y = relaxed.last().1.to_vec();
        newton_polish(&f, &mut y)?;
        let s = QpState::from_slice(&y);
        if !s.is_valid() {
            return Err(Error::Convergence(format!("equilibrium left the physical domain: {s:?}")));
        }
        Ok(s)
    }
}

/// Newton iteration on f(y) = 0 with per-component scaling and backtracking.
pub fn newton_polish<F: Fn(&[f64]) -> [f64; 6]>(f: &F, y: &mut Vec<f64>) -> Result<()> {
    let n = y.len();
    let scale: Vec<f64> = y.iter().map(|v| v.abs().max(1e-30)).collect();
    for _ in 0..60 {
        let fy = f(y);
        let mut j = DMatrix::zeros(n, n);
        for c in 0..n {
            let d = 1e-7 * scale[c];
            let mut yp = y.clone();
            yp[c] += d;
            let fp = f(&yp);
            for r in 0..n {
                j[(r, c)] = (fp[r] - fy[r]) / d;
            }
        }
        let rhs = DVector::from_iterator(n, fy.iter().map(|v| -v));
        let Some(dy) = j.clone().lu().solve(&rhs) else {
            return Err(Error::Convergence("singular Jacobian in steady-state Newton".into()));
        };
        let row_scale: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|c| (j[(r, c)] * scale[c]).abs()).fold(0.0, f64::max).max(1e-300))
            .collect();
        let merit = |v: &[f64; 6]| -> f64 { (0..n).map(|r| (v[r] / row_scale[r]).powi(2)).sum::<f64>() };
        let m0 = merit(&fy);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..n).map(|k| y[k] + lambda * dy[k]).collect();
            if trial[..5].iter().all(|&x| x >= 0.0) && (0.0..=1.0).contains(&trial[5]) {
                let mt = merit(&f(&trial));
                if mt <= m0 || mt < 1e-40 {
                    *y = trial;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        let step = (0..n).map(|k| (lambda * dy[k] / scale[k]).abs()).fold(0.0, f64::max);
        if !accepted || step < 1e-13 {
            return Ok(());
        }
    }
    Ok(())
}
