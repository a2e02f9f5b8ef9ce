//! Transition-rate extraction from measured state-probability traces.
//!
//! Two routes: the closed-form two-interval solution used with heralded
//! (A/B/C) data, and the per-bin least-squares inversion of the four CLIQUE
//! sequences, where each sequence maps the measured excited fraction at one
//! readout to the next through Ĉ·M̂·Ĉ⁻¹.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::constants::KB_OVER_H_GHZ;
use crate::error::{Error, Result};
use crate::lsq::{least_squares, LsqOptions};
use crate::measurement::{sequence_matrix, ConfusionMatrix, HeraldSeries, Propagators, SequenceKind, SequenceTiming, ShotRecord};

/// Transition probabilities (1→0 after `dt_relax`, 0→1 after `dt_excite`)
/// under constant rates.
pub fn am_forward(gamma_up: f64, gamma_down: f64, dt_relax: f64, dt_excite: f64) -> (f64, f64) {
    let g = gamma_up + gamma_down;
    if g <= 0.0 {
        return (0.0, 0.0);
    }
    let er = -(-g * dt_relax).exp_m1();
    let ee = -(-g * dt_excite).exp_m1();
    (gamma_down / g * er, gamma_up / g * ee)
}

/// Invert [`am_forward`]. With Γ = Γ_up + Γ_down the pair reduces to
/// h(Γ) = p_r/(1 − e^{−Γ·dt_r}) + p_e/(1 − e^{−Γ·dt_e}) = 1, which falls
/// monotonically from +∞ to p_r + p_e, so a root exists iff p_r + p_e < 1.
pub fn am_rates(p_relax: f64, p_excite: f64, dt_relax: f64, dt_excite: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&p_relax) || !(0.0..1.0).contains(&p_excite) {
        return Err(Error::range("probability", format!("p_relax = {p_relax}, p_excite = {p_excite} must lie in [0, 1)")));
    }
    if !(dt_relax > 0.0 && dt_excite > 0.0) {
        return Err(Error::range("dt", "intervals must be positive"));
    }
    if p_relax == 0.0 && p_excite == 0.0 {
        return Ok((0.0, 0.0));
    }
    if p_relax + p_excite >= 1.0 {
        return Err(Error::Convergence(format!("no rates reproduce p_relax + p_excite = {} ≥ 1", p_relax + p_excite)));
    }
    // Work in u = ln Γ; h is decreasing in u.
    let h = |u: f64| -> (f64, f64) {
        let g = u.exp();
        let mut v = -1.0;
        let mut dv = 0.0;
        for (p, dt) in [(p_relax, dt_relax), (p_excite, dt_excite)] {
            if p == 0.0 {
                continue;
            }
            let x = g * dt;
            let d = -(-x).exp_m1();
            v += p / d;
            // d/du [p/(1 − e^{−x})] = −p·x·e^{−x}/(1 − e^{−x})².
            dv -= p * x * (-x).exp() / (d * d);
        }
        (v, dv)
    };
    let dt_min = dt_relax.min(dt_excite);
    let (mut lo, mut hi) = ((1e-6 / dt_min).ln(), (1.0 / dt_min).ln());
    while h(lo).0 <= 0.0 {
        lo -= 5.0;
        if lo < -700.0 {
            return Err(Error::Convergence("am_rates: lower bracket not found".into()));
        }
    }
    while h(hi).0 >= 0.0 {
        hi += 2.0;
        if hi > 700.0 {
            return Err(Error::Convergence("am_rates: upper bracket not found".into()));
        }
    }
    // Safeguarded Newton.
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (v, dv) = h(u);
        if v > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = if dv < 0.0 { u - v / dv } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - u).abs() < 1e-13 || hi - lo < 1e-14;
        u = next;
        if done {
            break;
        }
    }
    let g = u.exp();
    let down = p_relax * g / -(-g * dt_relax).exp_m1();
    let up = p_excite * g / -(-g * dt_excite).exp_m1();
    Ok((up, down))
}

/// Effective qubit temperature, or `Undefined` when Γ_down ≤ Γ_up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Kelvin(f64),
    Undefined,
}

impl Temperature {
    pub fn kelvin(self) -> Option<f64> {
        match self {
            Temperature::Kelvin(t) => Some(t),
            Temperature::Undefined => None,
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Kelvin(t) => write!(f, "{t:.9e}"),
            Temperature::Undefined => f.write_str("undefined"),
        }
    }
}

/// T = h·f / (k_B·ln(Γ_down/Γ_up)), with `f_qb` in GHz.
pub fn qubit_temperature(gamma_up: f64, gamma_down: f64, f_qb: f64) -> Temperature {
    if !(gamma_up.is_finite() && gamma_down.is_finite() && gamma_up >= 0.0 && gamma_down > gamma_up) {
        return Temperature::Undefined;
    }
    if gamma_up == 0.0 {
        return Temperature::Kelvin(0.0);
    }
    Temperature::Kelvin(f_qb / (KB_OVER_H_GHZ * (gamma_down / gamma_up).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBin {
    /// Time since trigger, s.
    pub t: f64,
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub chi2: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateTrace {
    pub bins: Vec<RateBin>,
}

fn opt_num(s: Option<&str>) -> Result<Option<f64>> {
    match s.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| Error::Format(format!("bad number `{v}`"))),
    }
}

impl RateTrace {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "gamma_up", "gamma_down", "chi2", "pass", "p00", "p11"])?;
        for b in &self.bins {
            let (p00, p11) = b.confusion.map_or((String::new(), String::new()), |c| (format!("{:.9e}", c.p00), format!("{:.9e}", c.p11)));
            out.write_record([
                format!("{:e}", b.t),
                format!("{:.9e}", b.gamma_up),
                format!("{:.9e}", b.gamma_down),
                format!("{:.9e}", b.chi2),
                u8::from(b.pass).to_string(),
                p00,
                p11,
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let want = ["t", "gamma_up", "gamma_down", "chi2", "pass"];
        if headers.len() < want.len() || want.iter().zip(headers.iter()).any(|(a, b)| *a != b.trim()) {
            return Err(Error::Format(format!("rate trace CSV needs columns {want:?}")));
        }
        let mut bins = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { opt_num(rec.get(i))?.ok_or_else(|| Error::Format(format!("rate trace: missing column {i}"))) };
            let confusion = match (opt_num(rec.get(5))?, opt_num(rec.get(6))?) {
                (Some(p00), Some(p11)) => Some(ConfusionMatrix { p00, p11 }),
                _ => None,
            };
            bins.push(RateBin {
                t: num(0)?,
                gamma_up: num(1)?,
                gamma_down: num(2)?,
                chi2: num(3)?,
                pass: num(4)? != 0.0,
                confusion,
            });
        }
        if bins.is_empty() {
            return Err(Error::Empty("rate trace CSV has no rows".into()));
        }
        Ok(Self { bins })
    }

    pub fn temperatures(&self, f_qb: f64) -> Vec<(f64, Temperature)> {
        self.bins
            .iter()
            .map(|b| (b.t, if b.pass { qubit_temperature(b.gamma_up, b.gamma_down, f_qb) } else { Temperature::Undefined }))
            .collect()
    }

    /// The passing bin with the largest Γ_down.
    pub fn peak_down(&self) -> Option<&RateBin> {
        self.bins.iter().filter(|b| b.pass).max_by(|a, b| a.gamma_down.total_cmp(&b.gamma_down))
    }
}

pub fn write_temperature_csv<W: Write>(temps: &[(f64, Temperature)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "temperature_k"])?;
    for (t, temp) in temps {
        out.write_record([format!("{t:e}"), temp.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Closed-form rates for each bin of paired relaxation/excitation
/// probabilities. Bins without a solution carry NaN rates and fail.
pub fn am_rate_trace(t: &[f64], p_relax: &[f64], p_excite: &[f64], dt_relax: f64, dt_excite: f64) -> Result<RateTrace> {
    if t.len() != p_relax.len() || t.len() != p_excite.len() {
        return Err(Error::Size("time and probability columns differ in length".into()));
    }
    let bins = (0..t.len())
        .map(|i| match am_rates(p_relax[i], p_excite[i], dt_relax, dt_excite) {
            Ok((up, down)) => RateBin { t: t[i], gamma_up: up, gamma_down: down, chi2: 0.0, pass: true, confusion: None },
            Err(_) => RateBin { t: t[i], gamma_up: f64::NAN, gamma_down: f64::NAN, chi2: f64::NAN, pass: false, confusion: None },
        })
        .collect();
    Ok(RateTrace { bins })
}

/// Pair each relaxation readout of a sequence-C series (X_π in the cycle
/// before it) with the excitation readout that follows. Times are those of
/// the relaxation readout, `(start_cycle + k − pre_cycles)·cadence`.
pub fn am_pairs_from_c(series: &HeraldSeries, c_phase: u8, cadence: f64, pre_cycles: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let relax = series.relax_probability();
    let exc = series.excite_probability();
    let (mut t, mut pr, mut pe) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..series.len().saturating_sub(1) {
        let cycle = series.start_cycle + k as u64;
        let x_before = SequenceKind::C.applies_x(cycle.checked_sub(1).unwrap_or(1), c_phase) == Some(true);
        if x_before && relax[k].is_finite() && exc[k + 1].is_finite() {
            t.push((cycle as f64 - pre_cycles as f64) * cadence);
            pr.push(relax[k]);
            pe.push(exc[k + 1]);
        }
    }
    (t, pr, pe)
}

/// Trigger-averaged measured excited fraction of one qubit under one
/// sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrace {
    pub kind: SequenceKind,
    pub timing: SequenceTiming,
    /// Readout times relative to the trigger, s.
    pub time: Vec<f64>,
    pub p1: Vec<f64>,
    /// Triggers contributing to each readout.
    pub n: Vec<f64>,
}

impl MeasuredTrace {
    pub fn from_record(record: &ShotRecord, qubit: usize) -> Result<Self> {
        let kind = record.header.kind.sequence().ok_or_else(|| Error::Invalid("inversion needs a sequence record".into()))?;
        if qubit >= record.n_qubits() {
            return Err(Error::Invalid(format!("qubit {qubit} not in record")));
        }
        let nt = record.n_triggers();
        if nt == 0 {
            return Err(Error::Empty("record has no triggers".into()));
        }
        let cycles = record.cycles();
        let mut ones = vec![0u64; cycles];
        for trig in 0..nt {
            let row = record.row_words(trig, qubit);
            for (c, o) in ones.iter_mut().enumerate() {
                *o += (row[c / 64] >> (c % 64)) & 1;
            }
        }
        let offset = record.header.triggers.iter().map(|t| t.offset).sum::<f64>() / nt as f64;
        let h = &record.header;
        Ok(Self {
            kind,
            timing: SequenceTiming::new(h.t1, h.t2)?,
            time: (0..cycles).map(|c| (c as f64 - h.pre_cycles as f64) * h.cadence + offset).collect(),
            p1: ones.iter().map(|&o| o as f64 / nt as f64).collect(),
            n: vec![nt as f64; cycles],
        })
    }

    /// Linear interpolation of the pair (sample at `t`, sample one readout
    /// later) with the same weight, so the affine one-cycle map carries over.
    fn pair_at(&self, t: f64) -> Option<[(f64, f64); 2]> {
        let n = self.time.len();
        if n < 3 || t < self.time[0] {
            return None;
        }
        let k = self.time.partition_point(|&x| x <= t).saturating_sub(1);
        if k + 2 >= n {
            return None;
        }
        let w = (t - self.time[k]) / (self.time[k + 1] - self.time[k]);
        let at = |i: usize| {
            let p = self.p1[i] * (1.0 - w) + self.p1[i + 1] * w;
            let v = binomial_var(self.p1[i], self.n[i]) * (1.0 - w).powi(2) + binomial_var(self.p1[i + 1], self.n[i + 1]) * w * w;
            (p, v)
        };
        Some([at(k), at(k + 1)])
    }
}

fn binomial_var(p: f64, n: f64) -> f64 {
    let floor = 0.5 / n;
    let q = p.clamp(floor, 1.0 - floor);
    q * (1.0 - q) / n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InversionMode {
    /// Confusion frozen at its late-time value; two rates per bin.
    Constrained,
    /// Rates and confusion free in every bin.
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Binomial,
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub mode: InversionMode,
    pub weighting: Weighting,
    /// Centre of the window used to fix the confusion matrix, s.
    pub freeze_time: f64,
    pub freeze_window: f64,
    /// Use this confusion instead of fitting it late.
    pub confusion: Option<ConfusionMatrix>,
    pub chi2_cut: f64,
    pub gamma_max: f64,
    pub p_min: f64,
    /// Only bins in [t_min, t_max] are fitted.
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            mode: InversionMode::Constrained,
            weighting: Weighting::Binomial,
            freeze_time: 99.6e-3,
            freeze_window: 2e-3,
            confusion: None,
            chi2_cut: 5.991,
            gamma_max: 1e7,
            p_min: 0.5,
            t_min: f64::NEG_INFINITY,
            t_max: f64::INFINITY,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi2_cut > 0.0) {
            return Err(Error::range("chi2_cut", "must be positive"));
        }
        if !(self.freeze_window > 0.0 && self.gamma_max > 0.0 && (0.0..1.0).contains(&self.p_min)) {
            return Err(Error::range("inversion", "window and gamma_max positive, p_min in [0, 1)"));
        }
        Ok(())
    }
}

/// Fitted rates are carried in units of 10⁴/s.
const RATE_UNIT: f64 = 1e4;

struct BinData {
    t: f64,
    /// (kind, timing, current p1, next p1, current var, next var) per trace.
    rows: Vec<(SequenceKind, SequenceTiming, f64, f64, f64, f64)>,
}

fn one_cycle(kind: SequenceKind, timing: &SequenceTiming, up: f64, down: f64, conf: &ConfusionMatrix) -> Option<(f64, f64)> {
    let props = Propagators::new(up, down, timing, 0.0);
    let m = sequence_matrix(kind, &props, conf, 0, 0);
    let c = conf.matrix();
    let cinv = conf.inverse()?;
    let a = c * m * cinv;
    // Affine map on the measured excited fraction: next = a10 + (a11 − a10)·cur.
    Some((a[(1, 0)], a[(1, 1)] - a[(1, 0)]))
}

fn predict(kind: SequenceKind, timing: &SequenceTiming, up: f64, down: f64, conf: &ConfusionMatrix, cur: f64) -> f64 {
    match one_cycle(kind, timing, up, down, conf) {
        Some((a, lam)) => a + lam * cur,
        None => f64::NAN,
    }
}

fn sigmas(bin: &BinData, up: f64, down: f64, conf: &ConfusionMatrix, weighting: Weighting) -> Vec<f64> {
    bin.rows
        .iter()
        .map(|&(kind, timing, _, _, vc, vn)| match weighting {
            Weighting::Unweighted => 1.0,
            Weighting::Binomial => {
                let lam = one_cycle(kind, &timing, up, down, conf).map_or(1.0, |x| x.1);
                (vn + lam * lam * vc).sqrt()
            }
        })
        .collect()
}

fn bins_for(traces: &[MeasuredTrace], lo: f64, hi: f64) -> Vec<BinData> {
    let grid = &traces[0].time;
    grid.iter()
        .filter(|&&t| t >= lo && t <= hi)
        .filter_map(|&t| {
            let rows = traces
                .iter()
                .map(|tr| tr.pair_at(t).map(|[(c, vc), (n, vn)]| (tr.kind, tr.timing, c, n, vc, vn)))
                .collect::<Option<Vec<_>>>()?;
            Some(BinData { t, rows })
        })
        .collect()
}

/// Pooled fit of rates and confusion over bins assumed stationary.
pub fn fit_confusion(traces: &[MeasuredTrace], t_lo: f64, t_hi: f64, weighting: Weighting, p_min: f64) -> Result<(ConfusionMatrix, (f64, f64))> {
    check_traces(traces)?;
    let bins = bins_for(traces, t_lo, t_hi);
    if bins.is_empty() {
        return Err(Error::Coverage(format!("no bins in the confusion window [{t_lo:e}, {t_hi:e}] s")));
    }
    let start = ConfusionMatrix { p00: 0.95, p11: 0.95 };
    let sig: Vec<Vec<f64>> = bins.iter().map(|b| sigmas(b, 1e3, 3e4, &start, weighting)).collect();
    let m: usize = bins.iter().map(|b| b.rows.len()).sum();
    let res = least_squares(
        |x, r| {
            let conf = ConfusionMatrix { p00: x[2], p11: x[3] };
            let mut i = 0;
            for (b, s) in bins.iter().zip(&sig) {
                for (row, sd) in b.rows.iter().zip(s) {
                    r[i] = (predict(row.0, &row.1, x[0] * RATE_UNIT, x[1] * RATE_UNIT, &conf, row.2) - row.3) / sd;
                    i += 1;
                }
            }
        },
        &[0.1, 3.0, start.p00, start.p11],
        &[0.0, 0.0, p_min, p_min],
        &[1e3, 1e3, 1.0, 1.0],
        m,
        &LsqOptions::default(),
    )?;
    if !res.converged {
        return Err(Error::Convergence("confusion fit did not converge".into()));
    }
    Ok((ConfusionMatrix { p00: res.x[2], p11: res.x[3] }, (res.x[0] * RATE_UNIT, res.x[1] * RATE_UNIT)))
}

fn check_traces(traces: &[MeasuredTrace]) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::Empty("no measured traces".into()));
    }
    if let Some(t) = traces.iter().find(|t| t.kind == SequenceKind::C) {
        return Err(Error::Invalid(format!("sequence {} has no fixed one-cycle map; use A, B, D0 and D1", t.kind)));
    }
    for t in traces {
        if t.time.len() != t.p1.len() || t.time.len() != t.n.len() {
            return Err(Error::Size("trace columns differ in length".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub trace: RateTrace,
    /// Frozen confusion (constrained mode).
    pub confusion: Option<ConfusionMatrix>,
    /// Rates fitted jointly with the frozen confusion.
    pub late_rates: Option<(f64, f64)>,
}

/// Per-bin least-squares inversion over the bin grid of `traces[0]`.
pub fn clique_invert(traces: &[MeasuredTrace], cfg: &InversionConfig) -> Result<InversionResult> {
    check_traces(traces)?;
    cfg.validate()?;
    let (frozen, late) = match (cfg.mode, cfg.confusion) {
        (_, Some(c)) => (Some(c), None),
        (InversionMode::Constrained, None) => {
            let half = 0.5 * cfg.freeze_window;
            let (c, r) = fit_confusion(traces, cfg.freeze_time - half, cfg.freeze_time + half, cfg.weighting, cfg.p_min)?;
            (Some(c), Some(r))
        }
        (InversionMode::Unconstrained, None) => (None, None),
    };
    let bins = bins_for(traces, cfg.t_min, cfg.t_max);
    if bins.is_empty() {
        return Err(Error::Coverage("traces share no bins in the requested range".into()));
    }
    let gmax = cfg.gamma_max / RATE_UNIT;
    let mut warm = match late {
        Some((u, d)) => [u / RATE_UNIT, d / RATE_UNIT],
        None => [0.1, 3.0],
    };
    let mut warm_conf = frozen.unwrap_or(ConfusionMatrix { p00: 0.95, p11: 0.95 });
    let mut out = Vec::with_capacity(bins.len());
    for b in &bins {
        let conf0 = frozen.unwrap_or(warm_conf);
        let sig = sigmas(b, warm[0] * RATE_UNIT, warm[1] * RATE_UNIT, &conf0, cfg.weighting);
        let m = b.rows.len();
        let fit = match frozen {
            Some(conf) => least_squares(
                |x, r| {
                    for (i, row) in b.rows.iter().enumerate() {
                        r[i] = (predict(row.0, &row.1, x[0] * RATE_UNIT, x[1] * RATE_UNIT, &conf, row.2) - row.3) / sig[i];
                    }
                },
                &warm,
                &[0.0, 0.0],
                &[gmax, gmax],
                m,
                &LsqOptions::default(),
            )
            .map(|r| (r.x[0], r.x[1], conf, r.cost, r.converged)),
            None => least_squares(
                |x, r| {
                    let conf = ConfusionMatrix { p00: x[2], p11: x[3] };
                    for (i, row) in b.rows.iter().enumerate() {
                        r[i] = (predict(row.0, &row.1, x[0] * RATE_UNIT, x[1] * RATE_UNIT, &conf, row.2) - row.3) / sig[i];
                    }
                },
                &[warm[0], warm[1], warm_conf.p00, warm_conf.p11],
                &[0.0, 0.0, cfg.p_min, cfg.p_min],
                &[gmax, gmax, 1.0, 1.0],
                m,
                &LsqOptions::default(),
            )
            .map(|r| (r.x[0], r.x[1], ConfusionMatrix { p00: r.x[2], p11: r.x[3] }, r.cost, r.converged)),
        };
        match fit {
            Ok((u, d, conf, chi2, converged)) if chi2.is_finite() => {
                let pass = converged && chi2 <= cfg.chi2_cut;
                if converged {
                    warm = [u, d];
                    warm_conf = conf;
                }
                out.push(RateBin {
                    t: b.t,
                    gamma_up: u * RATE_UNIT,
                    gamma_down: d * RATE_UNIT,
                    chi2,
                    pass,
                    confusion: Some(conf),
                });
            }
            _ => out.push(RateBin {
                t: b.t,
                gamma_up: f64::NAN,
                gamma_down: f64::NAN,
                chi2: f64::NAN,
                pass: false,
                confusion: None,
            }),
        }
    }
    Ok(InversionResult {
        trace: RateTrace { bins: out },
        confusion: frozen,
        late_rates: late,
    })
}

/// Noiseless measured traces for constant or time-varying rates, by
/// propagating the measured fraction with the same one-cycle maps.
pub fn model_traces(
    kinds: &[SequenceKind],
    rates: impl Fn(f64) -> (f64, f64),
    confusion: &ConfusionMatrix,
    t0: f64,
    n_readouts: usize,
    n_triggers: f64,
) -> Vec<MeasuredTrace> {
    kinds
        .iter()
        .map(|&kind| {
            let timing = SequenceTiming::clique_for(kind);
            let cad = timing.cadence();
            let time: Vec<f64> = (0..n_readouts).map(|k| t0 + k as f64 * cad).collect();
            let (u0, d0) = rates(t0);
            let props = Propagators::new(u0, d0, &timing, 0.0);
            let mut p = crate::measurement::sequence::stationary(&sequence_matrix(kind, &props, confusion, 0, 0));
            let mut p1 = Vec::with_capacity(n_readouts);
            for &t in &time {
                p1.push((confusion.matrix() * p)[1]);
                let (u, d) = rates(t + 0.5 * cad);
                let props = Propagators::new(u, d, &timing, 0.0);
                p = sequence_matrix(kind, &props, confusion, 0, 0) * p;
            }
            MeasuredTrace {
                kind,
                timing,
                time,
                p1,
                n: vec![n_triggers; n_readouts],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn am_single_channel() {
        let (up, down) = am_rates(0.1131, 0.0, 3e-6, 6.95e-6).unwrap();
        assert_eq!(up, 0.0);
        // Oracle: −ln(1 − p)/Δt.
        assert!((down - -(1.0f64 - 0.1131).ln() / 3e-6).abs() < 1e-6 * down);
        assert!((down - 4e4).abs() < 40.0);
    }

    #[test]
    fn am_zero() {
        assert_eq!(am_rates(0.0, 0.0, 3e-6, 6.95e-6).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn am_no_solution() {
        assert!(matches!(am_rates(0.6, 0.5, 3e-6, 6.95e-6), Err(Error::Convergence(_))));
        assert!(am_rates(1.0, 0.0, 3e-6, 6.95e-6).is_err());
    }

    #[test]
    fn temperature_examples() {
        let t = qubit_temperature(1.0, std::f64::consts::E, 5.207).kelvin().unwrap();
        // h·f/k_B with f = 5.207 GHz.
        assert!((t - 5.207e9 * 6.626_070_15e-34 / 1.380_649e-23).abs() < 1e-12);
        assert!((t - 0.2499).abs() < 1e-4);
        assert_eq!(qubit_temperature(2.0, 2.0, 5.0), Temperature::Undefined);
        assert_eq!(qubit_temperature(3.0, 2.0, 5.0), Temperature::Undefined);
        assert_eq!(qubit_temperature(0.0, 2.0, 5.0), Temperature::Kelvin(0.0));
    }

    #[test]
    fn rate_trace_csv_round_trip() {
        let tr = RateTrace {
            bins: vec![
                RateBin { t: 1e-6, gamma_up: 1e3, gamma_down: 4e4, chi2: 0.5, pass: true, confusion: Some(ConfusionMatrix { p00: 0.97, p11: 0.96 }) },
                RateBin { t: 2e-6, gamma_up: 2e3, gamma_down: 5e4, chi2: 9.0, pass: false, confusion: None },
            ],
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(RateTrace::read_csv(&buf[..]).unwrap(), tr);
    }

    #[test]
    fn stationary_exact_round_trip() {
        let conf = ConfusionMatrix { p00: 0.97, p11: 0.97 };
        let kinds = [SequenceKind::A, SequenceKind::B, SequenceKind::D0, SequenceKind::D1];
        let traces = model_traces(&kinds, |_| (2e3, 4e4), &conf, 0.0, 40, 5000.0);
        let cfg = InversionConfig { confusion: Some(conf), ..Default::default() };
        let res = clique_invert(&traces, &cfg).unwrap();
        assert!(!res.trace.is_empty());
        for b in &res.trace.bins {
            assert!((b.gamma_up - 2e3).abs() < 1e-4 * 2e3, "{b:?}");
            assert!((b.gamma_down - 4e4).abs() < 1e-6 * 4e4, "{b:?}");
            assert!(b.chi2 < 1e-12 && b.pass);
        }
    }

    #[test]
    fn pooled_confusion_recovered() {
        let conf = ConfusionMatrix { p00: 0.97, p11: 0.94 };
        let kinds = [SequenceKind::A, SequenceKind::B, SequenceKind::D0, SequenceKind::D1];
        let traces = model_traces(&kinds, |_| (1.5e3, 3e4), &conf, 0.0, 60, 5000.0);
        let (c, (u, d)) = fit_confusion(&traces, 0.0, 1e-3, Weighting::Binomial, 0.5).unwrap();
        assert!((c.p00 - 0.97).abs() < 1e-6 && (c.p11 - 0.94).abs() < 1e-6, "{c:?}");
        assert!((u - 1.5e3).abs() < 1e-3 * 1.5e3 && (d - 3e4).abs() < 1e-5 * 3e4);
    }

    #[test]
    fn c_traces_rejected() {
        let tr = MeasuredTrace { kind: SequenceKind::C, timing: SequenceTiming::am(), time: vec![0.0; 4], p1: vec![0.0; 4], n: vec![1.0; 4] };
        assert!(clique_invert(&[tr], &InversionConfig::default()).is_err());
    }
}
