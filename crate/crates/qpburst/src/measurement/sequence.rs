//! Measurement sequences and their one-cycle propagators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::matrix::{transition_matrix, x_pi_imperfect, ConfusionMatrix, Mat2, Vec2};

/// Time between the end of X_π and the start of the next free interval
/// not covered by t1 and t2 (the pulse slot).
pub const PULSE_SLOT: f64 = 0.5e-6;

pub const CADENCE_AM: f64 = 6.95e-6;
pub const CADENCE_CLIQUE_AB: f64 = 6.55e-6;
pub const CADENCE_CLIQUE_D: f64 = 7.43e-6;
pub const T1_DEFAULT: f64 = 3e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SequenceKind {
    A,
    B,
    C,
    D0,
    D1,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 5] = [Self::A, Self::B, Self::C, Self::D0, Self::D1];

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D0 => "D0",
            Self::D1 => "D1",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Self::A => 0,
            Self::B => 1,
            Self::C => 2,
            Self::D0 => 3,
            Self::D1 => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Whether this cycle's propagator is conditioned on the previous readout.
    pub fn is_active_reset(self) -> bool {
        matches!(self, Self::D0 | Self::D1)
    }

    /// Whether X_π is applied unconditionally in `cycle` (A, and C on its A
    /// cycles). `phase` shifts C's alternation.
    pub fn applies_x(self, cycle: u64, phase: u8) -> Option<bool> {
        match self {
            Self::A => Some(true),
            Self::B => Some(false),
            Self::C => Some((cycle + phase as u64) % 2 == 0),
            Self::D0 | Self::D1 => None,
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SequenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D0" | "D|0>" => Ok(Self::D0),
            "D1" | "D|1>" => Ok(Self::D1),
            _ => Err(Error::Invalid(format!("unknown sequence `{s}`"))),
        }
    }
}

/// t1: end of X_π to mid-readout; t2: mid-readout to the next X_π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTiming {
    pub t1: f64,
    pub t2: f64,
}

impl SequenceTiming {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 >= 0.0 && t2 >= 0.0 && (t1 + t2) > 0.0) {
            return Err(Error::range("timing", format!("t1 = {t1}, t2 = {t2} must be nonnegative")));
        }
        Ok(Self { t1, t2 })
    }

    /// Timing with the given cadence and t1; t2 takes the remainder.
    pub fn from_cadence(cadence: f64, t1: f64) -> Result<Self> {
        Self::new(t1, cadence - t1 - PULSE_SLOT)
    }

    pub fn t3(&self) -> f64 {
        self.t1 + self.t2 + PULSE_SLOT
    }

    pub fn cadence(&self) -> f64 {
        self.t3()
    }

    pub fn am() -> Self {
        Self::from_cadence(CADENCE_AM, T1_DEFAULT).expect("valid preset")
    }

    pub fn clique_ab() -> Self {
        Self::from_cadence(CADENCE_CLIQUE_AB, T1_DEFAULT).expect("valid preset")
    }

    pub fn clique_d() -> Self {
        Self::from_cadence(CADENCE_CLIQUE_D, T1_DEFAULT).expect("valid preset")
    }

    /// CLIQUE timing for a sequence kind.
    pub fn clique_for(kind: SequenceKind) -> Self {
        if kind.is_active_reset() {
            Self::clique_d()
        } else {
            Self::clique_ab()
        }
    }
}

/// The two free-evolution building blocks of one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagators {
    /// D̂(t1)·X_π·D̂(t2)
    pub dxd: Mat2,
    /// D̂(t3)
    pub d3: Mat2,
}

impl Propagators {
    /// Constant rates over the whole cycle.
    pub fn new(gamma_up: f64, gamma_down: f64, timing: &SequenceTiming, x_error: f64) -> Self {
        Self::segmented((gamma_up, gamma_down), (gamma_up, gamma_down), (gamma_up, gamma_down), timing, x_error)
    }

    /// Rates evaluated separately for the t2 segment, the t1 segment and the
    /// full cycle (used for D̂(t3)).
    pub fn segmented(
        r_t2: (f64, f64),
        r_t1: (f64, f64),
        r_cycle: (f64, f64),
        timing: &SequenceTiming,
        x_error: f64,
    ) -> Self {
        let d1 = transition_matrix(timing.t1, r_t1.0, r_t1.1);
        let d2 = transition_matrix(timing.t2, r_t2.0, r_t2.1);
        Self {
            dxd: d1 * x_pi_imperfect(x_error) * d2,
            d3: transition_matrix(timing.t3(), r_cycle.0, r_cycle.1),
        }
    }
}

/// Propagator of the true state over one cycle. For D sequences this is the
/// readout-averaged mixture; `cycle` and `phase` matter only for C.
pub fn sequence_matrix(kind: SequenceKind, props: &Propagators, confusion: &ConfusionMatrix, cycle: u64, phase: u8) -> Mat2 {
    let (dxd, d3) = (props.dxd, props.d3);
    let ConfusionMatrix { p00, p11 } = *confusion;
    let mix = |c0: (f64, f64), c1: (f64, f64)| -> Mat2 {
        // Column j: c_j.0·D̂(t3) + c_j.1·D̂XD̂ applied to |j⟩.
        let col0 = d3.column(0) * c0.0 + dxd.column(0) * c0.1;
        let col1 = d3.column(1) * c1.0 + dxd.column(1) * c1.1;
        Mat2::from_columns(&[col0, col1])
    };
    match kind {
        SequenceKind::A => dxd,
        SequenceKind::B => d3,
        SequenceKind::C => {
            if kind.applies_x(cycle, phase) == Some(true) {
                dxd
            } else {
                d3
            }
        }
        // Reset to |0⟩: X_π only after reading 1.
        SequenceKind::D0 => mix((p00, 1.0 - p00), (1.0 - p11, p11)),
        // Reset to |1⟩: X_π only after reading 0.
        SequenceKind::D1 => mix((1.0 - p00, p00), (p11, 1.0 - p11)),
    }
}

/// True-state probabilities at the next readout.
pub fn step_sequence(
    kind: SequenceKind,
    p_true: Vec2,
    rates: (f64, f64),
    timing: &SequenceTiming,
    confusion: &ConfusionMatrix,
    cycle: u64,
    phase: u8,
) -> Vec2 {
    let props = Propagators::new(rates.0, rates.1, timing, 0.0);
    sequence_matrix(kind, &props, confusion, cycle, phase) * p_true
}

/// Stationary vector of a 2×2 column-stochastic matrix.
pub fn stationary(m: &Mat2) -> Vec2 {
    let a = m[(1, 0)];
    let b = m[(0, 1)];
    if a + b <= 0.0 {
        return Vec2::new(1.0, 0.0);
    }
    Vec2::new(b / (a + b), a / (a + b))
}

/// Long-run mean measured excited fraction under constant rates (for C, the
/// average over the two alternating cycles).
pub fn steady_measured_excited(kind: SequenceKind, rates: (f64, f64), timing: &SequenceTiming, confusion: &ConfusionMatrix) -> f64 {
    let props = Propagators::new(rates.0, rates.1, timing, 0.0);
    let c = confusion.matrix();
    match kind {
        SequenceKind::C => {
            let ma = sequence_matrix(kind, &props, confusion, 0, 0);
            let mb = sequence_matrix(kind, &props, confusion, 1, 0);
            // Readouts taken before an A cycle and before a B cycle.
            let before_a = stationary(&(mb * ma));
            let before_b = ma * before_a;
            0.5 * ((c * before_a)[1] + (c * before_b)[1])
        }
        _ => {
            let m = sequence_matrix(kind, &props, confusion, 0, 0);
            (c * stationary(&m))[1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::matrix::is_stochastic;

    #[test]
    fn timing_identity() {
        let t = SequenceTiming::clique_ab();
        assert!((t.t3() - 6.55e-6).abs() < 1e-18);
        assert!((t.t3() - (t.t1 + t.t2 + 0.5e-6)).abs() < 1e-18);
    }

    #[test]
    fn d1_perfect_readout_excited_column_is_free_decay() {
        let t = SequenceTiming::clique_d();
        let props = Propagators::new(2e3, 4e4, &t, 0.0);
        let m = sequence_matrix(SequenceKind::D1, &props, &ConfusionMatrix::perfect(), 0, 0);
        assert_eq!(m.column(1), props.d3.column(1));
        assert_eq!(m.column(0), props.dxd.column(0));
    }

    #[test]
    fn all_kinds_stochastic() {
        let t = SequenceTiming::am();
        let c = ConfusionMatrix::new(0.93, 0.88).unwrap();
        for kind in SequenceKind::ALL {
            for cycle in 0..2 {
                let m = sequence_matrix(kind, &Propagators::new(5e3, 7e4, &t, 0.0), &c, cycle, 0);
                assert!(is_stochastic(&m, 1e-14), "{kind:?}");
            }
        }
    }

    #[test]
    fn parse_labels() {
        for k in SequenceKind::ALL {
            assert_eq!(k.label().parse::<SequenceKind>().unwrap(), k);
            assert_eq!(SequenceKind::from_code(k.code()), Some(k));
        }
    }
}
