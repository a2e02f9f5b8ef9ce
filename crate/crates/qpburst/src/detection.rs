//! Matched-filter burst detection on heralded error series.
//!
//! Series are standardized per chunk (sigma-clipped mean and deviation) and
//! correlated with a unit-energy decaying exponential, so scores are in SNR
//! units. The detector is streaming: chunks are appended and events are
//! emitted once their look-ahead is available.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::HeraldSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTemplate {
    pub tau: f64,
    pub dt: f64,
    /// Unit-energy taps h_j ∝ e^{−j·dt/τ}.
    pub taps: Vec<f64>,
}

impl FilterTemplate {
    /// Exponential template spanning `n_tau` time constants (at least 3).
    pub fn exponential(tau: f64, dt: f64, n_tau: f64) -> Result<Self> {
        if !(tau > 0.0 && dt > 0.0) {
            return Err(Error::range("template", "tau and dt must be positive"));
        }
        if !(n_tau >= 3.0) {
            return Err(Error::range("template.n_tau", "template must span at least 3 time constants"));
        }
        let len = ((n_tau * tau / dt).ceil() as usize).max(3);
        let raw: Vec<f64> = (0..len).map(|j| (-(j as f64) * dt / tau).exp()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            tau,
            dt,
            taps: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Per-sample decay factor.
    pub fn ratio(&self) -> f64 {
        (-self.dt / self.tau).exp()
    }
}

/// score[k] = Σ_j h_j·x[k+j], with x taken as zero past the end.
pub fn matched_filter(series: &[f64], template: &FilterTemplate) -> Result<Vec<f64>> {
    let l = template.len();
    if series.len() < l {
        return Err(Error::Size(format!("series of {} samples is shorter than the {l}-tap template", series.len())));
    }
    Ok(correlate(series, template))
}

fn correlate(series: &[f64], template: &FilterTemplate) -> Vec<f64> {
    let l = template.len();
    let n = series.len();
    let h0 = template.taps[0];
    let a = template.ratio();
    let a_l = a.powi(l as i32);
    let mut out = vec![0.0; n];
    // Truncated exponential by backward recursion:
    // y[k] = h0·x[k] + a·y[k+1] − h0·a^L·x[k+L].
    let mut y = 0.0;
    for k in (0..n).rev() {
        let tail = if k + l < n { series[k + l] } else { 0.0 };
        y = h0 * series[k] + a * y - h0 * a_l * tail;
        out[k] = y;
    }
    out
}

/// Mean and standard deviation after iterative clipping at `clip`·σ.
/// NaN entries are ignored.
pub fn clipped_stats(x: &[f64], clip: f64) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let (mut mu, mut sd) = (0.0, 0.0);
    for _ in 0..8 {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for &v in x {
            if v.is_finite() && v >= lo && v <= hi {
                n += 1;
                s += v;
                s2 += v * v;
            }
        }
        if n < 2 {
            break;
        }
        let m = s / n as f64;
        let var = (s2 / n as f64 - m * m).max(0.0) * n as f64 / (n - 1) as f64;
        let d = var.sqrt();
        let done = (m - mu).abs() <= 1e-12 * m.abs().max(1e-300) && (d - sd).abs() <= 1e-12 * d.max(1e-300);
        mu = m;
        sd = d;
        if done || d == 0.0 {
            break;
        }
        lo = m - clip * d;
        hi = m + clip * d;
    }
    (mu, sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub tau: f64,
    pub template_taus: f64,
    pub threshold: f64,
    pub dead_time: f64,
    pub integral_points: usize,
    pub min_integral: f64,
    pub clip_sigma: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            tau: 100e-6,
            template_taus: 5.0,
            threshold: 6.0,
            dead_time: 2e-3,
            integral_points: 15,
            min_integral: 7.4,
            clip_sigma: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Sample index of the score peak.
    pub index: u64,
    pub time: f64,
    pub score: f64,
    /// Per-valid-qubit relaxation probability summed over the first
    /// `integral_points` samples from the peak.
    pub integral: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventCatalog {
    pub events: Vec<Event>,
    pub live_time: f64,
}

impl EventCatalog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn passing(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.passes)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "time", "score", "integral", "passes"])?;
        for e in &self.events {
            out.write_record([
                e.index.to_string(),
                format!("{:e}", e.time),
                format!("{:.9e}", e.score),
                format!("{:.9e}", e.integral),
                u8::from(e.passes).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, live_time: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut events = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("event CSV: bad field {i}")))
            };
            events.push(Event {
                index: f(0)? as u64,
                time: f(1)?,
                score: f(2)?,
                integral: f(3)?,
                passes: f(4)? != 0.0,
            });
        }
        Ok(Self { events, live_time })
    }
}

/// Local maxima above `threshold`: the first crossing opens a window of
/// `dead` samples whose maximum is the event; the next event may start only
/// `dead` samples after that peak.
pub fn find_events(scores: &[f64], threshold: f64, dead: usize) -> Vec<(usize, f64)> {
    let mut m = EventMachine::new(threshold, dead as u64);
    let mut out = Vec::new();
    for (k, &s) in scores.iter().enumerate() {
        if let Some((i, v, _)) = m.push(k as u64, s, 0.0) {
            out.push((i as usize, v));
        }
    }
    if let Some((i, v, _)) = m.finish() {
        out.push((i as usize, v));
    }
    out
}

/// Streaming state of the event finder. The payload travels with the peak.
#[derive(Debug, Clone)]
struct EventMachine {
    threshold: f64,
    dead: u64,
    next_allowed: u64,
    open: Option<(u64, f64, f64, u64)>,
}

impl EventMachine {
    fn new(threshold: f64, dead: u64) -> Self {
        Self {
            threshold,
            dead: dead.max(1),
            next_allowed: 0,
            open: None,
        }
    }

    fn push(&mut self, k: u64, score: f64, payload: f64) -> Option<(u64, f64, f64)> {
        let mut emitted = None;
        if let Some((pi, ps, pp, start)) = self.open {
            if k < start + self.dead {
                if score > ps {
                    self.open = Some((k, score, payload, start));
                }
                return None;
            }
            self.open = None;
            self.next_allowed = pi + self.dead;
            emitted = Some((pi, ps, pp));
        }
        if k >= self.next_allowed && score > self.threshold {
            self.open = Some((k, score, payload, k));
        }
        emitted
    }

    fn finish(&mut self) -> Option<(u64, f64, f64)> {
        self.open.take().map(|(i, s, p, _)| (i, s, p))
    }
}

/// Sum of `x` over `points` samples from `peak`, with NaN read as `fill`.
pub fn event_integral(series: &[f64], fill: f64, peak: usize, points: usize) -> f64 {
    series[peak.min(series.len())..(peak + points).min(series.len())]
        .iter()
        .map(|&x| if x.is_finite() { x } else { fill })
        .sum()
}

/// Keep events whose integral is at least `min_integral` (strictly smaller
/// integrals are removed).
pub fn shape_cut(catalog: &EventCatalog, min_integral: f64) -> EventCatalog {
    EventCatalog {
        events: catalog.events.iter().filter(|e| e.integral >= min_integral).map(|e| Event { passes: true, ..*e }).collect(),
        live_time: catalog.live_time,
    }
}

/// Events per second with peak score at or above each threshold.
pub fn rate_above_threshold(scores: &[f64], live_time: f64, thresholds: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&t| {
            let above = sorted.len() - sorted.partition_point(|&s| s < t);
            (t, above as f64 / live_time)
        })
        .collect()
}

/// Upper edge of the highest populated bin of a background score histogram
/// with bins `[k·w, (k+1)·w)`. Zero when there are no scores.
pub fn largest_background_bin(scores: &[f64], bin_width: f64) -> f64 {
    scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))))
        .map_or(0.0, |m| ((m / bin_width).floor() + 1.0) * bin_width)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedAverage {
    /// Sample offset relative to each event peak.
    pub offset: Vec<i64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: Vec<usize>,
}

/// Mean of `series` around each event index over [−pre, post).
pub fn average_aligned(events: &[usize], series: &[f64], pre: usize, post: usize) -> Result<AlignedAverage> {
    if events.is_empty() {
        return Err(Error::Empty("no events to average".into()));
    }
    let w = pre + post;
    let mut sum = vec![0.0; w];
    let mut sum2 = vec![0.0; w];
    let mut count = vec![0usize; w];
    for &e in events {
        for j in 0..w {
            let idx = e as i64 + j as i64 - pre as i64;
            if idx < 0 || idx as usize >= series.len() {
                continue;
            }
            let v = series[idx as usize];
            if v.is_finite() {
                sum[j] += v;
                sum2[j] += v * v;
                count[j] += 1;
            }
        }
    }
    let mean: Vec<f64> = (0..w).map(|j| if count[j] > 0 { sum[j] / count[j] as f64 } else { f64::NAN }).collect();
    let variance = (0..w)
        .map(|j| {
            if count[j] > 1 {
                ((sum2[j] - sum[j] * mean[j]) / (count[j] - 1) as f64).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(AlignedAverage {
        offset: (0..w).map(|j| j as i64 - pre as i64).collect(),
        mean,
        variance,
        count,
    })
}

/// Chunked detector over a heralded relaxation series.
pub struct StreamingDetector {
    params: DetectionParams,
    template: FilterTemplate,
    dt: f64,
    dead: u64,
    /// Global index of `z[0]`.
    base: u64,
    z: Vec<f64>,
    raw: Vec<f64>,
    machine: EventMachine,
    catalog: EventCatalog,
    samples: u64,
}

impl StreamingDetector {
    pub fn new(params: DetectionParams, dt: f64) -> Result<Self> {
        let template = FilterTemplate::exponential(params.tau, dt, params.template_taus)?;
        if !(params.threshold > 0.0) {
            return Err(Error::range("threshold", "must be positive"));
        }
        let dead = (params.dead_time / dt).round().max(1.0) as u64;
        Ok(Self {
            params,
            template,
            dt,
            dead,
            base: 0,
            z: Vec::new(),
            raw: Vec::new(),
            machine: EventMachine::new(params.threshold, dead),
            catalog: EventCatalog::default(),
            samples: 0,
        })
    }

    pub fn template(&self) -> &FilterTemplate {
        &self.template
    }

    /// Append one chunk of per-qubit-normalized error probabilities.
    pub fn push(&mut self, x: &[f64]) {
        let (mu, sd) = clipped_stats(x, self.params.clip_sigma);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for &v in x {
            if v.is_finite() {
                self.z.push((v - mu) / sd);
                self.raw.push(v);
            } else {
                self.z.push(0.0);
                self.raw.push(mu);
            }
        }
        self.samples += x.len() as u64;
        let look = self.template.len().max(self.params.integral_points);
        if self.z.len() > look {
            let ready = self.z.len() - look;
            self.scan(ready);
        }
    }

    pub fn push_series(&mut self, s: &HeraldSeries) {
        self.push(&s.relax_probability());
    }

    fn scan(&mut self, ready: usize) {
        let scores = correlate(&self.z, &self.template);
        for k in 0..ready {
            let integral: f64 = self.raw[k..(k + self.params.integral_points).min(self.raw.len())].iter().sum();
            let g = self.base + k as u64;
            if let Some((i, s, p)) = self.machine.push(g, scores[k], integral) {
                self.emit(i, s, p);
            }
        }
        self.z.drain(..ready);
        self.raw.drain(..ready);
        self.base += ready as u64;
    }

    fn emit(&mut self, index: u64, score: f64, integral: f64) {
        self.catalog.events.push(Event {
            index,
            time: index as f64 * self.dt,
            score,
            integral,
            passes: integral >= self.params.min_integral,
        });
    }

    pub fn finish(mut self) -> EventCatalog {
        let n = self.z.len();
        self.scan(n);
        if let Some((i, s, p)) = self.machine.finish() {
            self.emit(i, s, p);
        }
        self.catalog.live_time = self.samples as f64 * self.dt;
        self.catalog
    }

    pub fn dead_samples(&self) -> u64 {
        self.dead
    }
}

/// One-shot detection over a full series.
pub fn detect(series: &[f64], dt: f64, params: DetectionParams) -> Result<EventCatalog> {
    let mut d = StreamingDetector::new(params, dt)?;
    if series.len() < d.template().len() {
        return Err(Error::Size(format!("series of {} samples is shorter than the template", series.len())));
    }
    d.push(series);
    Ok(d.finish())
}
