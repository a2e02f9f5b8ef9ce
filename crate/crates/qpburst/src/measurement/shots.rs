//! Per-shot Monte Carlo of the measurement sequences.
//!
//! Each cycle draws one 32-bit uniform that selects the joint outcome (true
//! state at the next readout, readout value) from the cycle's propagator
//! column and the readout confusion. Per-cycle outcome thresholds are
//! precomputed from the rate trajectory.

use std::io::{Read, Write};

use rand::RngCore;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::herald::{herald_bits, HeraldSeries};
use crate::measurement::matrix::{ConfusionMatrix, Mat2};
use crate::measurement::record::{RecordHeader, RecordKind, ShotRecord, Trigger, FORMAT_VERSION};
use crate::measurement::sequence::{sequence_matrix, Propagators, SequenceKind, SequenceTiming, PULSE_SLOT};
use crate::rng::{substream, u32_threshold, Stream};

/// (Γ_up, Γ_down) sampled against time since trigger, optionally with a
/// time-dependent readout confusion.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTrajectory {
    pub t: Vec<f64>,
    pub gamma_up: Vec<f64>,
    pub gamma_down: Vec<f64>,
    pub p00: Option<Vec<f64>>,
    pub p11: Option<Vec<f64>>,
}

impl RateTrajectory {
    pub fn new(t: Vec<f64>, gamma_up: Vec<f64>, gamma_down: Vec<f64>) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::Empty("rate trajectory".into()));
        }
        if gamma_up.len() != t.len() || gamma_down.len() != t.len() {
            return Err(Error::Size("rate trajectory columns differ in length".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("rate trajectory times must increase strictly".into()));
        }
        if gamma_up.iter().chain(&gamma_down).any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::Invalid("rates must be finite and nonnegative".into()));
        }
        Ok(Self {
            t,
            gamma_up,
            gamma_down,
            p00: None,
            p11: None,
        })
    }

    pub fn with_confusion(mut self, p00: Vec<f64>, p11: Vec<f64>) -> Result<Self> {
        if p00.len() != self.t.len() || p11.len() != self.t.len() {
            return Err(Error::Size("confusion columns differ in length".into()));
        }
        if p00.iter().chain(&p11).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid("confusion entries must be probabilities".into()));
        }
        self.p00 = Some(p00);
        self.p11 = Some(p11);
        Ok(self)
    }

    pub fn constant(gamma_up: f64, gamma_down: f64, t0: f64, t1: f64) -> Result<Self> {
        Self::new(vec![t0, t1], vec![gamma_up; 2], vec![gamma_down; 2])
    }

    /// Sample `f(t) -> (Γ_up, Γ_down)` on [t0, t1] with spacing `dt`.
    pub fn from_fn(t0: f64, t1: f64, dt: f64, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let n = ((t1 - t0) / dt).ceil() as usize + 1;
        let t: Vec<f64> = (0..n).map(|i| (t0 + i as f64 * dt).min(t1)).collect();
        let mut t = t;
        t.dedup();
        let (up, down): (Vec<f64>, Vec<f64>) = t.iter().map(|&x| f(x)).unzip();
        Self::new(t, up, down)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t[0], self.t[self.t.len() - 1])
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (a, b) = self.span();
        let tol = 1e-12 * (b - a).abs().max(1e-9);
        if !(t >= a - tol && t <= b + tol) {
            return Err(Error::Coverage(format!("t = {t:e} s outside trajectory span [{a:e}, {b:e}]")));
        }
        let t = t.clamp(a, b);
        let i = self.t.partition_point(|&x| x <= t).saturating_sub(1).min(self.t.len().saturating_sub(2));
        if self.t.len() == 1 {
            return Ok((0, 0.0));
        }
        let w = (t - self.t[i]) / (self.t[i + 1] - self.t[i]);
        Ok((i, w.clamp(0.0, 1.0)))
    }

    fn lerp(v: &[f64], i: usize, w: f64) -> f64 {
        if w == 0.0 || i + 1 >= v.len() {
            v[i]
        } else {
            v[i] + (v[i + 1] - v[i]) * w
        }
    }

    pub fn rates_at(&self, t: f64) -> Result<(f64, f64)> {
        let (i, w) = self.locate(t)?;
        Ok((Self::lerp(&self.gamma_up, i, w), Self::lerp(&self.gamma_down, i, w)))
    }

    pub fn confusion_at(&self, t: f64, default: ConfusionMatrix) -> Result<ConfusionMatrix> {
        match (&self.p00, &self.p11) {
            (Some(a), Some(b)) => {
                let (i, w) = self.locate(t)?;
                Ok(ConfusionMatrix {
                    p00: Self::lerp(a, i, w),
                    p11: Self::lerp(b, i, w),
                })
            }
            _ => Ok(default),
        }
    }

    /// Columns `t,gamma_up,gamma_down` and optionally `p00,p11`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let conf = self.p00.is_some() && self.p11.is_some();
        if conf {
            out.write_record(["t", "gamma_up", "gamma_down", "p00", "p11"])?;
        } else {
            out.write_record(["t", "gamma_up", "gamma_down"])?;
        }
        for i in 0..self.t.len() {
            let mut row = vec![format!("{:e}", self.t[i]), format!("{:e}", self.gamma_up[i]), format!("{:e}", self.gamma_down[i])];
            if conf {
                row.push(format!("{:e}", self.p00.as_ref().unwrap()[i]));
                row.push(format!("{:e}", self.p11.as_ref().unwrap()[i]));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV layout of [`write_csv`](Self::write_csv); extra columns
    /// are ignored, so model trajectory files are accepted directly.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(it), Some(iu), Some(id)) = (col("t"), col("gamma_up"), col("gamma_down")) else {
            return Err(Error::Format("rate CSV needs columns t, gamma_up, gamma_down".into()));
        };
        let (i00, i11) = (col("p00"), col("p11"));
        let (mut t, mut up, mut down, mut p00, mut p11) = (vec![], vec![], vec![], vec![], vec![]);
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad number in column {i}: {:?}", rec.get(i))))
            };
            t.push(num(it)?);
            up.push(num(iu)?);
            down.push(num(id)?);
            if let (Some(a), Some(b)) = (i00, i11) {
                p00.push(num(a)?);
                p11.push(num(b)?);
            }
        }
        let traj = Self::new(t, up, down)?;
        if i00.is_some() && i11.is_some() {
            traj.with_confusion(p00, p11)
        } else {
            Ok(traj)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TriggerMode {
    Fixed { rate_hz: f64 },
    Poisson { rate_hz: f64 },
}

impl Default for TriggerMode {
    fn default() -> Self {
        TriggerMode::Fixed { rate_hz: 10.0 }
    }
}

/// Trigger timestamps drawn from `substream(seed, "triggers", 0)`.
pub fn trigger_times(mode: TriggerMode, n: usize, seed: u64) -> Result<Vec<f64>> {
    match mode {
        TriggerMode::Fixed { rate_hz } if rate_hz > 0.0 => Ok((0..n).map(|i| i as f64 / rate_hz).collect()),
        TriggerMode::Poisson { rate_hz } if rate_hz > 0.0 => {
            let mut rng = substream(seed, "triggers", 0);
            let exp = Exp::new(rate_hz).map_err(|e| Error::Invalid(e.to_string()))?;
            let mut t = 0.0;
            Ok((0..n)
                .map(|_| {
                    t += exp.sample(&mut rng);
                    t
                })
                .collect())
        }
        _ => Err(Error::range("triggers.rate_hz", "must be positive")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub kind: SequenceKind,
    pub timing: SequenceTiming,
    pub confusion: ConfusionMatrix,
    pub n_triggers: usize,
    /// Readouts recorded before the one closest to each trigger.
    pub pre_cycles: usize,
    /// Readouts recorded from the closest one onward.
    pub post_cycles: usize,
    pub burn_in: usize,
    pub triggers: TriggerMode,
    /// Draw the trigger position within the readout grid uniformly.
    pub random_phase: bool,
    /// Gaussian trigger jitter σ, s.
    pub jitter: f64,
    /// Probability that X_π acts as the identity.
    pub x_error: f64,
    pub c_phase: u8,
}

impl ShotConfig {
    pub fn new(kind: SequenceKind, timing: SequenceTiming, confusion: ConfusionMatrix, n_triggers: usize, pre_cycles: usize, post_cycles: usize) -> Self {
        Self {
            kind,
            timing,
            confusion,
            n_triggers,
            pre_cycles,
            post_cycles,
            burn_in: 50,
            triggers: TriggerMode::default(),
            random_phase: false,
            jitter: 0.0,
            x_error: 0.0,
            c_phase: 0,
        }
    }

    pub fn cycles(&self) -> usize {
        self.pre_cycles + self.post_cycles
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles() == 0 {
            return Err(Error::range("cycles", "window must contain at least one readout"));
        }
        if !(0.0..=1.0).contains(&self.x_error) {
            return Err(Error::range("x_error", "must be a probability"));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::range("jitter", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Cumulative u32 thresholds for the joint outcome given the true state:
/// (0,read 0), (0,read 1), (1,read 0); the remainder is (1,read 1).
type Column = [u64; 3];

#[derive(Debug, Clone, Copy)]
struct CycleTable {
    /// [propagator][true state]; propagator 1 is used only by D sequences.
    cols: [[Column; 2]; 2],
}

fn column(m: &Mat2, s: usize, next: &ConfusionMatrix) -> Column {
    let p1 = m[(1, s)].clamp(0.0, 1.0);
    let p0 = 1.0 - p1;
    let c0 = p0 * next.p00;
    let c2 = p0 + p1 * (1.0 - next.p11);
    [u32_threshold(c0), u32_threshold(p0), u32_threshold(c2)]
}

fn table(m0: &Mat2, m1: &Mat2, next: &ConfusionMatrix) -> CycleTable {
    CycleTable {
        cols: [[column(m0, 0, next), column(m0, 1, next)], [column(m1, 0, next), column(m1, 1, next)]],
    }
}

#[inline]
fn draw(rng: &mut Stream, col: &Column) -> (u8, u8) {
    let u = rng.next_u32() as u64;
    if u < col[0] {
        (0, 0)
    } else if u < col[1] {
        (0, 1)
    } else if u < col[2] {
        (1, 0)
    } else {
        (1, 1)
    }
}

/// Which propagator an active-reset sequence uses after reading `m`.
#[inline]
fn reset_choice(kind: SequenceKind, m: u8) -> usize {
    match (kind, m) {
        // D̂XD̂ is propagator 0, D̂(t3) propagator 1.
        (SequenceKind::D0, 1) | (SequenceKind::D1, 0) => 0,
        (SequenceKind::D0, _) | (SequenceKind::D1, _) => 1,
        _ => 0,
    }
}

/// Propagators for the cycle starting at readout time `tau` (relative to the
/// trigger) with the segment rates from `traj`.
fn cycle_props(traj: &RateTrajectory, tau: f64, timing: &SequenceTiming, x_error: f64) -> Result<Propagators> {
    let cad = timing.cadence();
    let r2 = traj.rates_at(tau + 0.5 * timing.t2)?;
    let r1 = traj.rates_at(tau + timing.t2 + PULSE_SLOT + 0.5 * timing.t1)?;
    let rc = traj.rates_at(tau + 0.5 * cad)?;
    Ok(Propagators::segmented(r2, r1, rc, timing, x_error))
}

fn build_tables(cfg: &ShotConfig, traj: &RateTrajectory, offset: f64) -> Result<(Vec<CycleTable>, [CycleTable; 2])> {
    let cad = cfg.timing.cadence();
    let tau = |k: i64| (k - cfg.pre_cycles as i64) as f64 * cad + offset;
    let mk = |k: i64, props: &Propagators| -> Result<CycleTable> {
        let next = traj.confusion_at(tau(k + 1), cfg.confusion)?;
        let here = traj.confusion_at(tau(k), cfg.confusion)?;
        if cfg.kind.is_active_reset() {
            Ok(table(&props.dxd, &props.d3, &next))
        } else {
            let parity = k.rem_euclid(2) as u64;
            let m = sequence_matrix(cfg.kind, props, &here, parity, cfg.c_phase);
            Ok(table(&m, &m, &next))
        }
    };
    let n = cfg.cycles();
    let mut tables = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) as i64 {
        let props = cycle_props(traj, tau(k), &cfg.timing, cfg.x_error)?;
        tables.push(mk(k, &props)?);
    }
    // Burn-in holds the rates of the first readout.
    let first = cycle_props(traj, tau(0), &cfg.timing, cfg.x_error)?;
    let burn = [mk(-2, &first)?, mk(-1, &first)?];
    Ok((tables, burn))
}

fn run_window(cfg: &ShotConfig, tables: &[CycleTable], burn: &[CycleTable; 2], rng: &mut Stream, words: &mut [u64]) {
    let kind = cfg.kind;
    let reset = kind.is_active_reset();
    let (mut s, mut m) = (0u8, 0u8);
    for j in 0..cfg.burn_in {
        // Burn-in cycle j has index j − burn_in; match the parity of `burn`.
        let idx = (cfg.burn_in - j) % 2;
        let t = &burn[if idx == 0 { 0 } else { 1 }];
        let p = if reset { reset_choice(kind, m) } else { 0 };
        (s, m) = draw(rng, &t.cols[p][s as usize]);
    }
    words.iter_mut().for_each(|w| *w = 0);
    words[0] |= m as u64;
    for (k, t) in tables.iter().enumerate() {
        let p = if reset { reset_choice(kind, m) } else { 0 };
        (s, m) = draw(rng, &t.cols[p][s as usize]);
        let c = k + 1;
        words[c / 64] |= (m as u64) << (c % 64);
    }
}

/// Simulate `cfg.n_triggers` windows for each qubit trajectory.
pub fn simulate_shots(trajectories: &[RateTrajectory], labels: &[String], cfg: &ShotConfig, seed: u64) -> Result<ShotRecord> {
    cfg.validate()?;
    if trajectories.is_empty() {
        return Err(Error::Empty("no qubit trajectories".into()));
    }
    let cad = cfg.timing.cadence();
    let times = trigger_times(cfg.triggers, cfg.n_triggers, seed)?;
    let normal = Normal::new(0.0, cfg.jitter.max(0.0)).map_err(|e| Error::Invalid(e.to_string()))?;
    let triggers: Vec<Trigger> = times
        .iter()
        .enumerate()
        .map(|(i, &time)| {
            let mut rng = substream(seed, "trigger-phase", i as u64);
            let mut offset = 0.0;
            if cfg.random_phase {
                offset = ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * cad;
            }
            if cfg.jitter > 0.0 {
                offset += normal.sample(&mut rng);
            }
            Trigger { time, offset, energy_kev: None }
        })
        .collect();
    let header = RecordHeader {
        format_version: FORMAT_VERSION,
        kind: RecordKind::Sequence(cfg.kind),
        n_qubits: trajectories.len(),
        qubit_labels: labels.to_vec(),
        cycles_per_trigger: cfg.cycles(),
        pre_cycles: cfg.pre_cycles,
        cadence: cad,
        t1: cfg.timing.t1,
        t2: cfg.timing.t2,
        c_phase: cfg.c_phase,
        seed,
        ramsey: None,
        triggers,
    };
    let nq = trajectories.len();
    let shared_offsets = !cfg.random_phase && cfg.jitter == 0.0;
    let shared: Vec<(Vec<CycleTable>, [CycleTable; 2])> = if shared_offsets {
        trajectories.iter().map(|tr| build_tables(cfg, tr, 0.0)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let wpr = header.words_per_row();
    let rows: Vec<Vec<u64>> = (0..cfg.n_triggers)
        .into_par_iter()
        .map(|i| -> Result<Vec<u64>> {
            let mut out = vec![0u64; nq * wpr];
            for (q, tr) in trajectories.iter().enumerate() {
                let own;
                let (tabs, burn) = if shared_offsets {
                    (&shared[q].0, &shared[q].1)
                } else {
                    own = build_tables(cfg, tr, header.triggers[i].offset)?;
                    (&own.0, &own.1)
                };
                let mut rng = substream(seed, "shots", (i * nq + q) as u64);
                run_window(cfg, tabs, burn, &mut rng, &mut out[q * wpr..(q + 1) * wpr]);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rec = ShotRecord::new(header);
    for (i, row) in rows.iter().enumerate() {
        for q in 0..nq {
            rec.set_row_words(i, q, &row[q * wpr..(q + 1) * wpr])?;
        }
    }
    Ok(rec)
}

/// Continuous record with Poisson bursts of excess Γ_down shared by all
/// qubits, as in the source-exposure datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstStreamConfig {
    pub kind: SequenceKind,
    pub timing: SequenceTiming,
    pub confusion: ConfusionMatrix,
    pub n_cycles: u64,
    /// Per-qubit baseline (Γ_up, Γ_down).
    pub baseline: Vec<(f64, f64)>,
    /// Bursts per second.
    pub burst_rate: f64,
    /// Peak-scale excess Γ_down, 1/s.
    pub amplitude: f64,
    pub tau_decay: f64,
    pub tau_rise: f64,
    /// Excess Γ_up as a fraction of the excess Γ_down.
    pub up_fraction: f64,
    pub chunk: usize,
    pub c_phase: u8,
}

impl BurstStreamConfig {
    /// 250e6 cycles of sequence A at 6.95 µs on nine qubits.
    pub fn am_default() -> Self {
        Self {
            kind: SequenceKind::A,
            timing: SequenceTiming::am(),
            confusion: ConfusionMatrix { p00: 0.98, p11: 0.95 },
            n_cycles: 250_000_000,
            baseline: vec![(1.0e3, 3.0e4); 9],
            burst_rate: 0.077,
            amplitude: 5.0e5,
            tau_decay: 100e-6,
            tau_rise: 5e-6,
            up_fraction: 0.05,
            chunk: 1 << 20,
            c_phase: 0,
        }
    }

    pub fn live_time(&self) -> f64 {
        self.n_cycles as f64 * self.timing.cadence()
    }

    pub fn excess(&self, dt: f64) -> f64 {
        if dt < 0.0 {
            return 0.0;
        }
        self.amplitude * (-dt / self.tau_decay).exp() * -(-dt / self.tau_rise).exp_m1()
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline.is_empty() {
            return Err(Error::Empty("burst stream needs at least one qubit".into()));
        }
        if self.kind.is_active_reset() {
            return Err(Error::Invalid("burst streams use heralded sequences A, B or C".into()));
        }
        if !(self.burst_rate >= 0.0 && self.amplitude >= 0.0 && self.tau_decay > 0.0 && self.tau_rise > 0.0) {
            return Err(Error::range("burst", "rate/amplitude nonnegative, time constants positive"));
        }
        if self.chunk == 0 {
            return Err(Error::range("chunk", "must be positive"));
        }
        Ok(())
    }
}

/// Burst onset times over the stream's live time.
pub fn burst_times(cfg: &BurstStreamConfig, seed: u64) -> Vec<f64> {
    if cfg.burst_rate <= 0.0 {
        return Vec::new();
    }
    let mut rng = substream(seed, "bursts", 0);
    let exp = Exp::new(cfg.burst_rate).expect("positive rate");
    let live = cfg.live_time();
    let mut out = Vec::new();
    let mut t = exp.sample(&mut rng);
    while t < live {
        out.push(t);
        t += exp.sample(&mut rng);
    }
    out
}

struct QubitStream {
    rng: Stream,
    s: u8,
    m: u8,
    base: [CycleTable; 2],
}

/// Stream the record chunk by chunk; `sink` receives each chunk's heralded
/// series. Returns the injected burst times.
pub fn simulate_burst_stream<F>(cfg: &BurstStreamConfig, seed: u64, mut sink: F) -> Result<Vec<f64>>
where
    F: FnMut(&HeraldSeries) -> Result<()>,
{
    cfg.validate()?;
    let bursts = burst_times(cfg, seed);
    let cad = cfg.timing.cadence();
    let window = 40.0 * cfg.tau_decay.max(cfg.tau_rise);
    let conf = cfg.confusion;
    let make_table = |props: &Propagators, parity: u64| {
        let m = sequence_matrix(cfg.kind, props, &conf, parity, cfg.c_phase);
        table(&m, &m, &conf)
    };
    let mut qubits: Vec<QubitStream> = cfg
        .baseline
        .iter()
        .enumerate()
        .map(|(q, &(up, down))| {
            let props = Propagators::new(up, down, &cfg.timing, 0.0);
            let base = [make_table(&props, 0), make_table(&props, 1)];
            let mut rng = substream(seed, "stream", q as u64);
            let (mut s, mut m) = (0u8, 0u8);
            for j in 0..50u64 {
                (s, m) = draw(&mut rng, &base[(j % 2) as usize].cols[0][s as usize]);
            }
            QubitStream { rng, s, m, base }
        })
        .collect();
    let mut start = 0u64;
    while start < cfg.n_cycles {
        let len = (cfg.n_cycles - start).min(cfg.chunk as u64) as usize;
        // Cycles of this chunk that fall inside a burst window.
        let t_lo = start as f64 * cad;
        let t_hi = (start + len as u64) as f64 * cad;
        let first = bursts.partition_point(|&b| b + window < t_lo);
        let active: Vec<f64> = bursts[first..].iter().copied().take_while(|&b| b < t_hi).collect();
        let excess = |t: f64| -> f64 { active.iter().map(|&b| cfg.excess(t - b)).sum() };
        let mut burst_cycles: Vec<(usize, f64)> = Vec::new();
        for &b in &active {
            let k0 = ((b / cad).floor() as i64 - 1 - start as i64).max(0) as usize;
            let k1 = ((((b + window) / cad).ceil() as i64) - start as i64).clamp(0, len as i64) as usize;
            for k in k0..k1 {
                burst_cycles.push((k, 0.0));
            }
        }
        burst_cycles.sort_by_key(|p| p.0);
        burst_cycles.dedup_by_key(|p| p.0);
        for p in burst_cycles.iter_mut() {
            // Midpoint of the cycle ending at readout start + k.
            p.1 = excess((start + p.0 as u64) as f64 * cad - 0.5 * cad);
        }
        let prev: Vec<Option<u8>> = qubits.iter().map(|q| Some(q.m)).collect();
        let rows: Vec<Vec<u8>> = qubits
            .par_iter_mut()
            .enumerate()
            .map(|(qi, q)| {
                let (bu, bd) = cfg.baseline[qi];
                let mut row = vec![0u8; len];
                let mut bi = 0;
                for (k, slot) in row.iter_mut().enumerate() {
                    let cycle = start + k as u64;
                    // The cycle ending at readout `cycle` has index cycle − 1.
                    let parity = cycle.wrapping_sub(1) % 2;
                    let col = if bi < burst_cycles.len() && burst_cycles[bi].0 == k {
                        let ex = burst_cycles[bi].1;
                        bi += 1;
                        let props = Propagators::new(bu + cfg.up_fraction * ex, bd + ex, &cfg.timing, 0.0);
                        make_table(&props, parity).cols[0][q.s as usize]
                    } else {
                        q.base[parity as usize].cols[0][q.s as usize]
                    };
                    let (s, m) = draw(&mut q.rng, &col);
                    q.s = s;
                    q.m = m;
                    *slot = m;
                }
                row
            })
            .collect();
        let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
        sink(&herald_bits(cfg.kind, cfg.c_phase, start, &prev, &refs)?)?;
        start += len as u64;
    }
    Ok(bursts)
}
