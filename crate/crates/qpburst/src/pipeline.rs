//! Energy-normalized averaging of per-run traces and recovery fits.

use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{KEV_PER_ELECTRON, REFERENCE_ENERGY_KEV};
use crate::error::{Error, Result};
use crate::lsq::{least_squares, LsqOptions};
use crate::measurement::ShotRecord;
use crate::rng::substream;

/// Trigger-averaged ground-state probability of one qubit over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub label: String,
    /// Time since trigger, s.
    pub time: Vec<f64>,
    pub p: Vec<f64>,
    pub n_triggers: usize,
    pub energy_kev: f64,
    pub energy_err_kev: f64,
}

impl RunTrace {
    /// Mean ground-state fraction per readout. Energy and its uncertainty
    /// are taken from the trigger energies (mean and standard error).
    pub fn from_record(record: &ShotRecord, qubit: usize, label: impl Into<String>) -> Result<Self> {
        if qubit >= record.n_qubits() {
            return Err(Error::Invalid(format!("qubit {qubit} not in record")));
        }
        let nt = record.n_triggers();
        if nt == 0 {
            return Err(Error::Empty("record has no triggers".into()));
        }
        let energies: Vec<f64> = record.header.triggers.iter().filter_map(|t| t.energy_kev).collect();
        if energies.len() != nt {
            return Err(Error::Invalid(format!(
                "{} of {nt} triggers have no energy; set one at simulation time or add a .triggers.csv sidecar",
                nt - energies.len()
            )));
        }
        let mean = energies.iter().sum::<f64>() / nt as f64;
        let var = if nt > 1 { energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nt - 1) as f64 } else { 0.0 };
        let mut zeros = vec![0u64; record.cycles()];
        for t in 0..nt {
            let row = record.row_words(t, qubit);
            for (c, z) in zeros.iter_mut().enumerate() {
                *z += 1 - ((row[c / 64] >> (c % 64)) & 1);
            }
        }
        let h = &record.header;
        let offset = h.triggers.iter().map(|t| t.offset).sum::<f64>() / nt as f64;
        Ok(Self {
            label: label.into(),
            time: (0..record.cycles()).map(|c| (c as f64 - h.pre_cycles as f64) * h.cadence + offset).collect(),
            p: zeros.iter().map(|&z| z as f64 / nt as f64).collect(),
            n_triggers: nt,
            energy_kev: mean,
            energy_err_kev: (var / nt as f64).sqrt().max(1e-9 * mean.abs()),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.time.len() != self.p.len() || self.time.is_empty() {
            return Err(Error::Size(format!("run `{}`: time and p differ in length or are empty", self.label)));
        }
        if self.n_triggers == 0 {
            return Err(Error::range("n_triggers", format!("run `{}` has no triggers", self.label)));
        }
        if !(self.energy_kev > 0.0 && self.energy_err_kev > 0.0) {
            return Err(Error::range("energy", format!("run `{}` needs positive energy and uncertainty", self.label)));
        }
        Ok(())
    }
}

/// Per-trigger deposited energies, Gaussian with relative spread `rel_sd`
/// around `mean_kev` (clamped at zero), from substream "energy".
pub fn assign_energies(record: &mut ShotRecord, mean_kev: f64, rel_sd: f64, seed: u64) -> Result<()> {
    if !(mean_kev > 0.0 && rel_sd >= 0.0) {
        return Err(Error::range("energy", "mean must be positive and spread nonnegative"));
    }
    let normal = Normal::new(mean_kev, rel_sd * mean_kev).map_err(|e| Error::Invalid(e.to_string()))?;
    for (i, t) in record.header.triggers.iter_mut().enumerate() {
        let mut rng = substream(seed, "energy", i as u64);
        t.energy_kev = Some(normal.sample(&mut rng).max(0.0));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub quality_samples: usize,
    pub quality_sigma: f64,
    pub baseline_points: usize,
    pub min_energy_kev: f64,
    pub max_energy_kev: f64,
    pub target_energy_kev: f64,
    pub fit_start: f64,
    pub fit_end: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            quality_samples: 5000,
            quality_sigma: 2.0,
            baseline_points: 40,
            min_energy_kev: KEV_PER_ELECTRON,
            max_energy_kev: 6.0 * KEV_PER_ELECTRON,
            target_energy_kev: REFERENCE_ENERGY_KEV,
            fit_start: 19e-6,
            fit_end: 203e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityCut {
    pub pass: bool,
    /// |mean(first) − mean(last)| in units of its standard error.
    pub z: f64,
}

/// Compare the means of the first and last `samples` points; the standard
/// error of each mean is binomial with `n_triggers` shots per point.
pub fn run_quality_cut(trace: &RunTrace, samples: usize, n_sigma: f64) -> Result<QualityCut> {
    trace.validate()?;
    if samples == 0 || trace.p.len() < 2 * samples {
        return Err(Error::Size(format!("run `{}` has {} samples; the cut needs {}", trace.label, trace.p.len(), 2 * samples)));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let a = mean(&trace.p[..samples]);
    let b = mean(&trace.p[trace.p.len() - samples..]);
    let shots = (trace.n_triggers * samples) as f64;
    let floor = 0.5 / shots;
    let var = |p: f64| {
        let q = p.clamp(floor, 1.0 - floor);
        q * (1.0 - q) / shots
    };
    let sigma = (var(a) + var(b)).sqrt();
    let z = (a - b).abs() / sigma;
    Ok(QualityCut { pass: z <= n_sigma, z })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace {
    pub time: Vec<f64>,
    /// Δp per target energy.
    pub dp: Vec<f64>,
    /// Trigger-weighted mean baseline.
    pub baseline: f64,
    pub mean_energy_kev: f64,
    pub n_runs: usize,
    pub n_triggers: usize,
}

impl NormalizedTrace {
    /// Absolute probability, dp + baseline.
    pub fn p(&self) -> Vec<f64> {
        self.dp.iter().map(|d| d + self.baseline).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "p", "dp"])?;
        for (i, &t) in self.time.iter().enumerate() {
            out.write_record([format!("{t:e}"), format!("{:.9e}", self.dp[i] + self.baseline), format!("{:.9e}", self.dp[i])])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut rdr = csv::Reader::from_reader(r);
        let h = rdr.headers()?.clone();
        if h.iter().map(str::trim).collect::<Vec<_>>() != ["t", "p", "dp"] {
            return Err(Error::Format("trace CSV needs columns t,p,dp".into()));
        }
        let (mut t, mut p, mut dp) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> { rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Format(format!("trace CSV: bad field {i}"))) };
            t.push(f(0)?);
            p.push(f(1)?);
            dp.push(f(2)?);
        }
        if t.is_empty() {
            return Err(Error::Empty("trace CSV has no rows".into()));
        }
        Ok((t, p, dp))
    }
}

/// Outcome of each run in [`normalize_and_average`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSelection {
    pub label: String,
    pub accepted: bool,
    pub reason: Option<&'static str>,
}

/// Quality and energy selection followed by the averaging steps. Runs are
/// processed in a canonical order so the result does not depend on input
/// order.
pub fn normalize_and_average(traces: &[RunTrace], cfg: &PipelineConfig) -> Result<(NormalizedTrace, Vec<RunSelection>)> {
    if traces.is_empty() {
        return Err(Error::Empty("no run traces".into()));
    }
    let mut selection = Vec::with_capacity(traces.len());
    let mut kept: Vec<&RunTrace> = Vec::new();
    for tr in traces {
        tr.validate()?;
        let reason = if tr.energy_kev < cfg.min_energy_kev || tr.energy_kev > cfg.max_energy_kev {
            Some("energy-window")
        } else if !run_quality_cut(tr, cfg.quality_samples, cfg.quality_sigma)?.pass {
            Some("quality")
        } else {
            None
        };
        selection.push(RunSelection { label: tr.label.clone(), accepted: reason.is_none(), reason });
        if reason.is_none() {
            kept.push(tr);
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("no runs pass the quality and energy selection".into()));
    }
    let n = kept[0].p.len();
    if kept.iter().any(|t| t.p.len() != n) {
        return Err(Error::Size("accepted runs differ in length".into()));
    }
    if cfg.baseline_points == 0 || cfg.baseline_points > n {
        return Err(Error::range("baseline_points", "must be within the trace length"));
    }
    kept.sort_by(|a, b| {
        a.energy_kev
            .total_cmp(&b.energy_kev)
            .then(a.n_triggers.cmp(&b.n_triggers))
            .then(a.energy_err_kev.total_cmp(&b.energy_err_kev))
            .then_with(|| a.p.iter().zip(&b.p).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.label.cmp(&b.label))
    });
    let total: f64 = kept.iter().map(|t| t.n_triggers as f64).sum();
    let base = |t: &RunTrace| t.p[..cfg.baseline_points].iter().sum::<f64>() / cfg.baseline_points as f64;
    let baseline = kept.iter().map(|t| t.n_triggers as f64 * base(t)).sum::<f64>() / total;
    let mut dp = vec![0.0; n];
    for t in &kept {
        let (w, b) = (t.n_triggers as f64 / total, base(t));
        for (d, &p) in dp.iter_mut().zip(&t.p) {
            *d += w * (p - b);
        }
    }
    let (ws, wes) = kept.iter().fold((0.0, 0.0), |(ws, wes), t| {
        let w = t.n_triggers as f64 / (t.energy_err_kev * t.energy_err_kev);
        (ws + w, wes + w * t.energy_kev)
    });
    let mean_energy = wes / ws;
    let scale = cfg.target_energy_kev / mean_energy;
    dp.iter_mut().for_each(|d| *d *= scale);
    Ok((
        NormalizedTrace {
            time: kept[0].time.clone(),
            dp,
            baseline,
            mean_energy_kev: mean_energy,
            n_runs: kept.len(),
            n_triggers: total as usize,
        },
        selection,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryFit {
    pub amplitude: f64,
    /// Time constant, s.
    pub tau: f64,
    pub offset: f64,
    pub window: (f64, f64),
    /// Standard errors of (amplitude, τ, offset).
    pub std_err: [f64; 3],
    pub converged: bool,
    /// Unidentifiable decay (amplitude within 2σ of zero, τ pinned at a
    /// bound or τ error larger than τ).
    pub flagged: bool,
}

const FIT_TAU_LO_US: f64 = 0.1;
const FIT_TAU_HI_US: f64 = 1e5;

/// Least-squares A·e^{−(t − t_start)/τ} + c over `window`.
pub fn fit_recovery(time: &[f64], y: &[f64], window: (f64, f64)) -> Result<RecoveryFit> {
    if time.len() != y.len() {
        return Err(Error::Size("time and values differ in length".into()));
    }
    let (t0, t1) = window;
    if time.is_empty() || !(t1 > t0) || t0 < time[0] || t1 > time[time.len() - 1] {
        return Err(Error::Coverage(format!("fit window [{t0:e}, {t1:e}] s is not inside the trace")));
    }
    let idx: Vec<usize> = (0..time.len()).filter(|&i| time[i] >= t0 && time[i] <= t1 && y[i].is_finite()).collect();
    if idx.len() < 4 {
        return Err(Error::Size(format!("{} points in the fit window; need ≥ 4", idx.len())));
    }
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let scale = ys.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let tail = ys[ys.len() * 3 / 4..].iter().sum::<f64>() / (ys.len() - ys.len() * 3 / 4) as f64;
    let x0 = [(ys[0] - tail) / scale, 60.0, tail / scale];
    let res = least_squares(
        |x, r| {
            for (k, &i) in idx.iter().enumerate() {
                let dt = (time[i] - t0) * 1e6;
                r[k] = x[0] * (-dt / x[1]).exp() + x[2] - y[i] / scale;
            }
        },
        &x0,
        &[-1e3, FIT_TAU_LO_US, -1e3],
        &[1e3, FIT_TAU_HI_US, 1e3],
        idx.len(),
        &LsqOptions::default(),
    )?;
    let se = res.std_errors(true).unwrap_or_else(|| vec![f64::INFINITY; 3]);
    let (a, tau_us, c) = (res.x[0], res.x[1], res.x[2]);
    let pinned = tau_us <= FIT_TAU_LO_US * 1.0001 || tau_us >= FIT_TAU_HI_US * 0.9999;
    let flagged = !res.converged || pinned || !(a.abs() > 2.0 * se[0]) || !(se[1] < tau_us);
    Ok(RecoveryFit {
        amplitude: a * scale,
        tau: tau_us * 1e-6,
        offset: c * scale,
        window,
        std_err: [se[0] * scale, se[1] * 1e-6, se[2] * scale],
        converged: res.converged,
        flagged,
    })
}

/// Signed extremum of a baseline-subtracted trace and its time, over
/// samples at or after the trigger (all samples if none).
pub fn peak_change(time: &[f64], dp: &[f64]) -> Result<(f64, f64)> {
    if time.is_empty() || time.len() != dp.len() {
        return Err(Error::Empty("peak_change needs a nonempty trace".into()));
    }
    let post = time.iter().any(|&t| t >= 0.0);
    let best = (0..time.len())
        .filter(|&i| (!post || time[i] >= 0.0) && dp[i].is_finite())
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if dp[b].abs() >= dp[i].abs() => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| Error::Empty("no finite samples".into()))?;
    Ok((dp[best], time[best]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub peak: f64,
    pub peak_time: f64,
    pub tau: f64,
    pub tau_err: f64,
    pub flagged: bool,
    pub mean_energy_kev: f64,
    pub n_runs: usize,
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "peak", "peak_time", "tau", "tau_err", "flagged", "mean_energy_kev", "n_runs"])?;
    for r in rows {
        out.write_record([
            r.label.clone(),
            format!("{:.6e}", r.peak),
            format!("{:e}", r.peak_time),
            format!("{:.6e}", r.tau),
            format!("{:.6e}", r.tau_err),
            u8::from(r.flagged).to_string(),
            format!("{:.6}", r.mean_energy_kev),
            r.n_runs.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(energy: f64, amp_per_kev: f64, n: usize) -> RunTrace {
        let time: Vec<f64> = (0..12000).map(|k| (k as f64 - 50.0) * 6.55e-6).collect();
        let p = time.iter().map(|&t| 0.9 - if t >= 0.0 { amp_per_kev * energy * (-t / 60e-6).exp() } else { 0.0 }).collect();
        RunTrace { label: format!("{energy}"), time, p, n_triggers: n, energy_kev: energy, energy_err_kev: 5.0 }
    }

    #[test]
    fn unit_scale_at_reference_energy() {
        let r = run(508.0, 1e-4, 100);
        let (out, _) = normalize_and_average(std::slice::from_ref(&r), &PipelineConfig::default()).unwrap();
        let b = r.p[..40].iter().sum::<f64>() / 40.0;
        for i in 0..r.p.len() {
            assert!((out.dp[i] - (r.p[i] - b)).abs() < 1e-15);
        }
        assert_eq!(out.baseline, b);
    }

    #[test]
    fn linear_response_fixed_point() {
        let cfg = PipelineConfig::default();
        let (a, _) = normalize_and_average(&[run(254.0, 1e-4, 100)], &cfg).unwrap();
        let (b, _) = normalize_and_average(&[run(762.0, 1e-4, 100)], &cfg).unwrap();
        let (both, _) = normalize_and_average(&[run(254.0, 1e-4, 100), run(762.0, 1e-4, 100)], &cfg).unwrap();
        for i in 0..a.dp.len() {
            assert!((a.dp[i] - b.dp[i]).abs() < 1e-12 && (both.dp[i] - a.dp[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_window_and_empty() {
        let cfg = PipelineConfig::default();
        assert!(matches!(normalize_and_average(&[], &cfg), Err(Error::Empty(_))));
        let (_, sel) = normalize_and_average(&[run(1000.0, 1e-4, 10), run(300.0, 1e-4, 10)], &cfg).unwrap();
        assert_eq!(sel[0].reason, Some("energy-window"));
        assert!(sel[1].accepted);
    }

    #[test]
    fn quality_cut_detects_jump() {
        let mut r = run(300.0, 0.0, 1000);
        assert!(run_quality_cut(&r, 5000, 2.0).unwrap().pass);
        // σ of the difference with p = 0.9, 1000 triggers × 5000 samples.
        let sigma = (2.0 * 0.9 * 0.1 / 5e6f64).sqrt();
        let n = r.p.len();
        r.p[n / 2..].iter_mut().for_each(|p| *p += 5.0 * sigma);
        assert!(!run_quality_cut(&r, 5000, 2.0).unwrap().pass);
        assert!(matches!(run_quality_cut(&run(300.0, 0.0, 1), 7000, 2.0), Err(Error::Size(_))));
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 3e-6).collect();
        let y: Vec<f64> = t.iter().map(|&t| 0.02 * (-(t - 19e-6) / 60e-6).exp() + 0.003).collect();
        let f = fit_recovery(&t, &y, (19e-6, 203e-6)).unwrap();
        assert!((f.tau - 60e-6).abs() < 60e-9 && !f.flagged, "{f:?}");
    }

    #[test]
    fn flat_trace_flagged() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 3e-6).collect();
        let y: Vec<f64> = (0..100).map(|k| 0.01 + 1e-4 * ((k * 7919 % 13) as f64 - 6.0)).collect();
        assert!(fit_recovery(&t, &y, (19e-6, 203e-6)).unwrap().flagged);
    }

    #[test]
    fn peak_of_decay_is_first_post_sample() {
        let t = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let d = [0.0, 0.0, -0.3, -0.2, -0.1];
        assert_eq!(peak_change(&t, &d).unwrap(), (-0.3, 0.0));
    }
}
