//! Ramsey group assembly and damped-sinusoid fits.
//!
//! p0(Δt) = a·e^{−Δt/τ}·sin(2π·f·Δt + φ) + b over the ten delays of a group.
//! Groups before the trigger fit all five parameters; later groups fix φ to
//! the circular mean of the pre-trigger phases.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{least_squares, LsqOptions};
use crate::measurement::{RecordKind, ShotRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyGroup {
    /// Time of the group's first readout relative to the trigger, s.
    pub time: f64,
    pub delays: Vec<f64>,
    /// Ground-state fraction per delay, averaged over triggers.
    pub p0: Vec<f64>,
    pub n_triggers: usize,
}

/// Split each trigger window of `qubit` into groups of `n_delays` readouts
/// and average over triggers.
pub fn assemble_groups(record: &ShotRecord, qubit: usize) -> Result<Vec<RamseyGroup>> {
    if record.header.kind != RecordKind::Ramsey {
        return Err(Error::Invalid("record is not a Ramsey record".into()));
    }
    let meta = record.header.ramsey.ok_or_else(|| Error::Format("Ramsey record without Ramsey metadata".into()))?;
    let n = meta.n_delays;
    if n == 0 {
        return Err(Error::Invalid("Ramsey groups need at least one delay".into()));
    }
    if record.header.pre_cycles % n != 0 || record.cycles() % n != 0 {
        return Err(Error::Invalid(format!(
            "alignment: window of {} readouts with {} before the trigger does not split into groups of {n}",
            record.cycles(),
            record.header.pre_cycles
        )));
    }
    if qubit >= record.n_qubits() {
        return Err(Error::Invalid(format!("qubit {qubit} not in record")));
    }
    let nt = record.n_triggers();
    if nt == 0 {
        return Err(Error::Empty("record has no triggers".into()));
    }
    let mut zeros = vec![0u64; record.cycles()];
    for t in 0..nt {
        let row = record.row_words(t, qubit);
        for (c, z) in zeros.iter_mut().enumerate() {
            *z += 1 - ((row[c / 64] >> (c % 64)) & 1);
        }
    }
    let offset = record.header.triggers.iter().map(|t| t.offset).sum::<f64>() / nt as f64;
    let h = &record.header;
    Ok((0..record.cycles() / n)
        .map(|g| RamseyGroup {
            time: (g as f64 * n as f64 - h.pre_cycles as f64) * h.cadence + offset,
            delays: (0..n).map(|j| j as f64 * meta.delay_step).collect(),
            p0: zeros[g * n..(g + 1) * n].iter().map(|&z| z as f64 / nt as f64).collect(),
            n_triggers: nt,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningFitResult {
    pub a: f64,
    pub b: f64,
    /// Decay time, s.
    pub tau: f64,
    pub f_hz: f64,
    pub phi: f64,
    pub phi_fixed: bool,
    /// Sum of squared residuals.
    pub cost: f64,
    /// Standard errors of (a, b, τ, f, φ); NaN where unavailable or fixed.
    pub std_err: [f64; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub f_init: f64,
    /// Fix φ (post-trigger groups).
    pub phase: Option<f64>,
    /// Fix τ (e.g. to a large value for decay-free data).
    pub tau: Option<f64>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            f_init: 250e3,
            phase: None,
            tau: None,
        }
    }
}

pub fn ramsey_model(delay: f64, a: f64, b: f64, tau: f64, f_hz: f64, phi: f64) -> f64 {
    a * (-delay / tau).exp() * (TAU * f_hz * delay + phi).sin() + b
}

// Fitted units: τ in µs, f in MHz.
const TAU_LO: f64 = 1.0;
const TAU_HI: f64 = 1000.0;

/// Bounded least-squares fit of one group; `Err` when the fit fails.
pub fn fit_detuning(group: &RamseyGroup, settings: &FitSettings) -> Result<DetuningFitResult> {
    let n = group.delays.len();
    if n != group.p0.len() || n < 5 {
        return Err(Error::Size(format!("group has {n} delays and {} values; need ≥ 5", group.p0.len())));
    }
    if group.delays.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid("delays must increase strictly".into()));
    }
    // Full parameter vector (a, b, τ[µs], f[MHz], φ); `free` maps fit slots.
    let full0 = [
        0.5,
        0.5,
        settings.tau.map_or(50.0, |t| t * 1e6),
        settings.f_init * 1e-6,
        settings.phase.unwrap_or(PI / 2.0),
    ];
    let lo_all = [0.0, 0.0, TAU_LO, 0.0, -TAU];
    let hi_all = [0.6, 1.0, TAU_HI, 1.0, TAU];
    let free: Vec<usize> = (0..5)
        .filter(|&i| !(i == 2 && settings.tau.is_some() || i == 4 && settings.phase.is_some()))
        .collect();
    let expand = |x: &[f64]| {
        let mut p = full0;
        for (k, &i) in free.iter().enumerate() {
            p[i] = x[k];
        }
        p
    };
    let x0: Vec<f64> = free.iter().map(|&i| full0[i]).collect();
    let lo: Vec<f64> = free.iter().map(|&i| lo_all[i]).collect();
    let hi: Vec<f64> = free.iter().map(|&i| if i == 2 { hi_all[i].max(full0[2]) } else { hi_all[i] }).collect();
    let res = least_squares(
        |x, r| {
            let p = expand(x);
            for j in 0..n {
                r[j] = ramsey_model(group.delays[j], p[0], p[1], p[2] * 1e-6, p[3] * 1e6, p[4]) - group.p0[j];
            }
        },
        &x0,
        &lo,
        &hi,
        n,
        &LsqOptions::default(),
    )?;
    if !res.converged {
        return Err(Error::Convergence("Ramsey fit did not converge".into()));
    }
    let p = expand(&res.x);
    let scale = [1.0, 1.0, 1e-6, 1e6, 1.0];
    let mut std_err = [f64::NAN; 5];
    if n > free.len() {
        if let Some(se) = res.std_errors(true) {
            for (k, &i) in free.iter().enumerate() {
                std_err[i] = se[k] * scale[i];
            }
        }
    }
    Ok(DetuningFitResult {
        a: p[0],
        b: p[1],
        tau: p[2] * 1e-6,
        f_hz: p[3] * 1e6,
        phi: p[4],
        phi_fixed: settings.phase.is_some(),
        cost: res.cost,
        std_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutReason {
    FitFailed,
    ShortT2,
}

impl CutReason {
    pub fn label(self) -> &'static str {
        match self {
            CutReason::FitFailed => "fit-failed",
            CutReason::ShortT2 => "short-t2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub time: f64,
    pub n_triggers: usize,
    pub fit: Option<DetuningFitResult>,
    pub removed: Option<CutReason>,
    /// Fitted frequency above `anomalous_factor` × design detuning.
    pub anomalous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamseyAnalysisConfig {
    /// Groups with τ strictly below this are removed, s.
    pub t2_cut: f64,
    pub design_detuning_hz: f64,
    pub anomalous_factor: f64,
}

impl Default for RamseyAnalysisConfig {
    fn default() -> Self {
        Self {
            t2_cut: 5.4e-6,
            design_detuning_hz: 250e3,
            anomalous_factor: 2.0,
        }
    }
}

/// Remove failed fits and τ < `t2_cut` (τ equal to the cut is kept); flag
/// anomalous frequencies. Returns all groups with reasons attached.
pub fn quality_cuts(fits: &[GroupFit], cfg: &RamseyAnalysisConfig) -> Vec<GroupFit> {
    fits.iter()
        .map(|g| {
            let mut g = g.clone();
            g.removed = match &g.fit {
                None => Some(CutReason::FitFailed),
                Some(f) if f.tau < cfg.t2_cut => Some(CutReason::ShortT2),
                _ => None,
            };
            g.anomalous = g.fit.is_some_and(|f| f.f_hz > cfg.anomalous_factor * cfg.design_detuning_hz);
            g
        })
        .collect()
}

/// Circular mean of phases.
pub fn circular_mean(phis: &[f64]) -> Option<f64> {
    if phis.is_empty() {
        return None;
    }
    let (s, c) = phis.iter().fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    Some(s.atan2(c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyTrace {
    pub groups: Vec<GroupFit>,
    /// Phase fixed for post-trigger fits.
    pub phase: f64,
    /// Mean pre-trigger frequency of retained groups, Hz.
    pub f_ref: f64,
}

impl RamseyTrace {
    /// Retained post-trigger groups as (time, Δf, τ).
    pub fn shifts(&self) -> Vec<(f64, f64, f64)> {
        self.groups
            .iter()
            .filter(|g| g.time >= 0.0 && g.removed.is_none())
            .filter_map(|g| g.fit.map(|f| (g.time, f.f_hz - self.f_ref, f.tau)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "f_hz", "delta_f_hz", "tau", "valid", "reason", "anomalous"])?;
        for g in &self.groups {
            let (f, df, tau) = g.fit.map_or((String::new(), String::new(), String::new()), |r| {
                (format!("{:.6e}", r.f_hz), format!("{:.6e}", r.f_hz - self.f_ref), format!("{:.6e}", r.tau))
            });
            out.write_record([
                format!("{:e}", g.time),
                f,
                df,
                tau,
                u8::from(g.removed.is_none()).to_string(),
                g.removed.map_or("", |r| r.label()).to_string(),
                u8::from(g.anomalous).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fit all groups: pre-trigger free, post-trigger with φ fixed.
pub fn analyze_groups(groups: &[RamseyGroup], cfg: &RamseyAnalysisConfig) -> Result<RamseyTrace> {
    if groups.is_empty() {
        return Err(Error::Empty("no Ramsey groups".into()));
    }
    let free = FitSettings { f_init: cfg.design_detuning_hz, ..Default::default() };
    let pre: Vec<GroupFit> = groups
        .par_iter()
        .filter(|g| g.time < 0.0)
        .map(|g| GroupFit { time: g.time, n_triggers: g.n_triggers, fit: fit_detuning(g, &free).ok(), removed: None, anomalous: false })
        .collect();
    let pre = quality_cuts(&pre, cfg);
    let kept: Vec<DetuningFitResult> = pre.iter().filter(|g| g.removed.is_none() && !g.anomalous).filter_map(|g| g.fit).collect();
    let phase = circular_mean(&kept.iter().map(|f| f.phi).collect::<Vec<_>>()).unwrap_or(PI / 2.0);
    let f_ref = if kept.is_empty() {
        cfg.design_detuning_hz
    } else {
        kept.iter().map(|f| f.f_hz).sum::<f64>() / kept.len() as f64
    };
    let fixed = FitSettings { f_init: f_ref, phase: Some(phase), tau: None };
    let post: Vec<GroupFit> = groups
        .par_iter()
        .filter(|g| g.time >= 0.0)
        .map(|g| GroupFit { time: g.time, n_triggers: g.n_triggers, fit: fit_detuning(g, &fixed).ok(), removed: None, anomalous: false })
        .collect();
    let mut all = pre;
    all.extend(quality_cuts(&post, cfg));
    Ok(RamseyTrace { groups: all, phase, f_ref })
}

pub fn analyze_record(record: &ShotRecord, qubit: usize, cfg: &RamseyAnalysisConfig) -> Result<RamseyTrace> {
    analyze_groups(&assemble_groups(record, qubit)?, cfg)
}
