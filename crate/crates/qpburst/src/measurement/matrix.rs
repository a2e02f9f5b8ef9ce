//! Two-level transition and readout matrices. Columns index the initial
//! (true) state, rows the final (or measured) state; vectors are (p0, p1).

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Free evolution over Δt under constant (Γ_up, Γ_down).
pub fn transition_matrix(dt: f64, gamma_up: f64, gamma_down: f64) -> Mat2 {
    let total = gamma_up + gamma_down;
    if total <= 0.0 || dt <= 0.0 {
        return Mat2::identity();
    }
    // T1·Γ·(1 − e^{−Δt/T1}), written with expm1 for small arguments.
    let e = -(-total * dt).exp_m1();
    let p01 = gamma_up * e / total;
    let p10 = gamma_down * e / total;
    Mat2::new(1.0 - p01, p10, p01, 1.0 - p10)
}

/// Rates and interval of one free-evolution segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrixParams {
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub dt: f64,
}

impl TransitionMatrixParams {
    pub fn t1(&self) -> f64 {
        1.0 / (self.gamma_up + self.gamma_down)
    }

    pub fn matrix(&self) -> Mat2 {
        transition_matrix(self.dt, self.gamma_up, self.gamma_down)
    }
}

pub fn x_pi() -> Mat2 {
    Mat2::new(0.0, 1.0, 1.0, 0.0)
}

/// X_π that fails (acts as identity) with probability `error`.
pub fn x_pi_imperfect(error: f64) -> Mat2 {
    x_pi() * (1.0 - error) + Mat2::identity() * error
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub p00: f64,
    pub p11: f64,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::perfect()
    }
}

impl ConfusionMatrix {
    pub fn new(p00: f64, p11: f64) -> Result<Self> {
        for (name, v) in [("p00", p00), ("p11", p11)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::range(name, format!("{v} is not a probability")));
            }
        }
        Ok(Self { p00, p11 })
    }

    pub fn perfect() -> Self {
        Self { p00: 1.0, p11: 1.0 }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.p00, 1.0 - self.p11, 1.0 - self.p00, self.p11)
    }

    /// Inverse, when the readout is informative (p00 + p11 ≠ 1).
    pub fn inverse(&self) -> Option<Mat2> {
        self.matrix().try_inverse()
    }

    /// Probability of reading 1 given the true state.
    pub fn p_read_one(&self, true_state: u8) -> f64 {
        if true_state == 0 {
            1.0 - self.p00
        } else {
            self.p11
        }
    }
}

/// Columns sum to one and all entries lie in [0, 1] (to `tol`).
pub fn is_stochastic(m: &Mat2, tol: f64) -> bool {
    (0..2).all(|c| ((m[(0, c)] + m[(1, c)]) - 1.0).abs() <= tol)
        && m.iter().all(|&v| v >= -tol && v <= 1.0 + tol)
}
