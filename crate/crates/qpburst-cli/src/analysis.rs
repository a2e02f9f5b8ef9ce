use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qpburst::detection::{
    average_aligned, rate_above_threshold, DetectionParams, StreamingDetector,
};
use qpburst::inversion::{
    am_pairs_from_c, am_rate_trace, clique_invert, write_temperature_csv, InversionConfig,
    MeasuredTrace,
};
use qpburst::io::HeraldStreamReader;
use qpburst::measurement::{herald_all, read_triggers_csv, SequenceKind, ShotRecord};
use qpburst::pipeline::{
    fit_recovery, normalize_and_average, peak_change, write_summary_csv, PipelineConfig, RunTrace,
    SummaryRow,
};
use qpburst::ramsey::{analyze_record, RamseyAnalysisConfig};
use qpburst::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::settings::{resolve, write_effective};
use crate::{ensure_out, require_inputs, Common};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(
        File::create(&p)
            .map_err(Error::Io)
            .with_context(|| p.display().to_string())?,
    ))
}

fn load_record(p: &Path) -> Result<ShotRecord> {
    require_inputs(&[p.to_path_buf()])?;
    ShotRecord::load(p).with_context(|| p.display().to_string())
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for r in rows {
        w.serialize(r).map_err(Error::Csv)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    pub detection: DetectionParams,
    /// Score above which passing events count toward the reported rate.
    pub report_threshold: f64,
    pub rate_thresholds: Vec<f64>,
    /// Readouts kept before and after each passing event in the average.
    pub align_pre: usize,
    pub align_post: usize,
    pub chunk: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            detection: DetectionParams::default(),
            report_threshold: 8.5,
            rate_thresholds: (0..=20).map(|k| 5.0 + 0.5 * k as f64).collect(),
            align_pre: 20,
            align_post: 100,
            chunk: 1 << 20,
        }
    }
}

#[derive(Serialize)]
struct DetectSummary {
    live_time: f64,
    n_events: usize,
    n_passing: usize,
    report_threshold: f64,
    n_above: usize,
    rate: f64,
    rate_err: f64,
}

#[derive(Serialize)]
struct AlignedRow {
    offset: i64,
    t: f64,
    mean: f64,
    variance: f64,
    count: usize,
}

pub fn detect(common: &Common, input: &Path) -> Result<()> {
    let cfg: DetectConfig = resolve(
        &DetectConfig::default(),
        common.config.as_deref(),
        &common.sets,
    )?;
    if cfg.chunk == 0 {
        return Err(Error::range("chunk", "must be positive").into());
    }
    require_inputs(&[input.to_path_buf()])?;
    ensure_out(&common.out)?;
    write_effective(&common.out, &cfg)?;
    let open = || -> Result<HeraldStreamReader<BufReader<File>>> {
        Ok(HeraldStreamReader::new(BufReader::new(
            File::open(input).map_err(Error::Io)?,
        ))?)
    };
    let mut reader = open()?;
    let dt = reader.cadence;
    let mut det = StreamingDetector::new(cfg.detection, dt)?;
    while let Some(s) = reader.next_chunk(cfg.chunk)? {
        det.push_series(&s);
    }
    let catalog = det.finish();
    catalog.write_csv(create(&common.out, "events.csv")?)?;
    let passing: Vec<_> = catalog.passing().cloned().collect();
    let above: Vec<_> = passing
        .iter()
        .filter(|e| e.score >= cfg.report_threshold)
        .cloned()
        .collect();
    let above_cat = qpburst::detection::EventCatalog {
        events: above.clone(),
        live_time: catalog.live_time,
    };
    above_cat.write_csv(create(&common.out, "events_above.csv")?)?;
    let scores: Vec<f64> = passing.iter().map(|e| e.score).collect();
    let curve = rate_above_threshold(&scores, catalog.live_time, &cfg.rate_thresholds);
    let mut w = csv::Writer::from_writer(create(&common.out, "rate_curve.csv")?);
    w.write_record(["threshold", "rate"]).map_err(Error::Csv)?;
    for (t, r) in curve {
        w.write_record([format!("{t}"), format!("{r:.6e}")])
            .map_err(Error::Csv)?;
    }
    w.flush().map_err(Error::Io)?;
    let live = catalog.live_time;
    write_rows(
        &common.out,
        "detect_summary.csv",
        &[DetectSummary {
            live_time: live,
            n_events: catalog.len(),
            n_passing: passing.len(),
            report_threshold: cfg.report_threshold,
            n_above: above.len(),
            rate: above.len() as f64 / live,
            rate_err: (above.len() as f64).sqrt() / live,
        }],
    )?;
    if passing.is_empty() {
        return Ok(());
    }
    // Second pass: copy each passing event's window into a strip of
    // back-to-back windows and average over the strip.
    let (pre, post) = (cfg.align_pre, cfg.align_post);
    let w = pre + post;
    let mut strip = vec![f64::NAN; passing.len() * w];
    let mut reader = open()?;
    while let Some(s) = reader.next_chunk(cfg.chunk)? {
        let p = s.relax_probability();
        let (lo, hi) = (s.start_cycle as i64, s.start_cycle as i64 + p.len() as i64);
        for (k, e) in passing.iter().enumerate() {
            let a = (e.index as i64 - pre as i64).max(lo);
            let b = (e.index as i64 + post as i64).min(hi);
            for g in a..b {
                strip[k * w + (g - (e.index as i64 - pre as i64)) as usize] = p[(g - lo) as usize];
            }
        }
    }
    let centers: Vec<usize> = (0..passing.len()).map(|k| k * w + pre).collect();
    let avg = average_aligned(&centers, &strip, pre, post)?;
    let rows: Vec<AlignedRow> = (0..avg.offset.len())
        .map(|j| AlignedRow {
            offset: avg.offset[j],
            t: avg.offset[j] as f64 * dt,
            mean: avg.mean[j],
            variance: avg.variance[j],
            count: avg.count[j],
        })
        .collect();
    write_rows(&common.out, "aligned.csv", &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertConfig {
    /// Qubit index within the records (sequence records only; a C record
    /// pools all qubits).
    pub qubit: usize,
    /// Qubit frequency for the temperature column, GHz.
    pub f_qb_ghz: f64,
    pub inversion: InversionConfig,
}

impl Default for InvertConfig {
    fn default() -> Self {
        Self {
            qubit: 0,
            f_qb_ghz: 5.0,
            inversion: InversionConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct InvertSummary {
    mode: &'static str,
    bins: usize,
    pass_fraction: f64,
    peak_gamma_down: f64,
    t_peak: f64,
    p00: f64,
    p11: f64,
    late_gamma_up: f64,
    late_gamma_down: f64,
}

pub fn invert(common: &Common, inputs: &[PathBuf]) -> Result<()> {
    let cfg: InvertConfig = resolve(
        &InvertConfig::default(),
        common.config.as_deref(),
        &common.sets,
    )?;
    require_inputs(inputs)?;
    let records = inputs
        .iter()
        .map(|p| load_record(p))
        .collect::<Result<Vec<_>>>()?;
    ensure_out(&common.out)?;
    write_effective(&common.out, &cfg)?;
    let is_c = records
        .iter()
        .map(|r| r.header.kind.sequence() == Some(SequenceKind::C))
        .collect::<Vec<_>>();
    let (trace, summary) = if is_c.iter().any(|&c| c) {
        if records.len() != 1 {
            return Err(Error::Invalid(
                "closed-form inversion takes exactly one sequence-C record".into(),
            )
            .into());
        }
        let r = &records[0];
        let h = &r.header;
        let series = herald_all(r)?;
        let (t, pr, pe) = am_pairs_from_c(&series, h.c_phase, h.cadence, h.pre_cycles);
        let trace = am_rate_trace(&t, &pr, &pe, h.t1, h.cadence)?;
        let s = summarize("closed-form", &trace, None, None);
        (trace, s)
    } else {
        let traces = records
            .iter()
            .map(|r| MeasuredTrace::from_record(r, cfg.qubit))
            .collect::<qpburst::Result<Vec<_>>>()?;
        let res = clique_invert(&traces, &cfg.inversion)?;
        let s = summarize("least-squares", &res.trace, res.confusion, res.late_rates);
        (res.trace, s)
    };
    trace.write_csv(create(&common.out, "rates.csv")?)?;
    write_temperature_csv(
        &trace.temperatures(cfg.f_qb_ghz),
        create(&common.out, "temperature.csv")?,
    )?;
    write_rows(&common.out, "invert_summary.csv", &[summary])
}

fn summarize(
    mode: &'static str,
    trace: &qpburst::inversion::RateTrace,
    conf: Option<qpburst::measurement::ConfusionMatrix>,
    late: Option<(f64, f64)>,
) -> InvertSummary {
    let post: Vec<_> = trace.bins.iter().filter(|b| b.t > 0.0).collect();
    let pass = post.iter().filter(|b| b.pass).count() as f64 / post.len().max(1) as f64;
    let peak = trace.peak_down();
    InvertSummary {
        mode,
        bins: trace.bins.len(),
        pass_fraction: pass,
        peak_gamma_down: peak.map_or(f64::NAN, |b| b.gamma_down),
        t_peak: peak.map_or(f64::NAN, |b| b.t),
        p00: conf.map_or(f64::NAN, |c| c.p00),
        p11: conf.map_or(f64::NAN, |c| c.p11),
        late_gamma_up: late.map_or(f64::NAN, |l| l.0),
        late_gamma_down: late.map_or(f64::NAN, |l| l.1),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyCmdConfig {
    pub qubit: usize,
    pub analysis: RamseyAnalysisConfig,
}

#[derive(Serialize)]
struct RamseySummary {
    groups: usize,
    removed: usize,
    phase: f64,
    f_ref_hz: f64,
    mean_shift_hz: f64,
}

pub fn ramsey(common: &Common, input: &Path) -> Result<()> {
    let cfg: RamseyCmdConfig = resolve(
        &RamseyCmdConfig::default(),
        common.config.as_deref(),
        &common.sets,
    )?;
    let rec = load_record(input)?;
    ensure_out(&common.out)?;
    write_effective(&common.out, &cfg)?;
    let res = analyze_record(&rec, cfg.qubit, &cfg.analysis)?;
    res.write_csv(create(&common.out, "ramsey.csv")?)?;
    let shifts = res.shifts();
    let mean = if shifts.is_empty() {
        f64::NAN
    } else {
        shifts.iter().map(|s| s.1).sum::<f64>() / shifts.len() as f64
    };
    write_rows(
        &common.out,
        "ramsey_summary.csv",
        &[RamseySummary {
            groups: res.groups.len(),
            removed: res.groups.iter().filter(|g| g.removed.is_some()).count(),
            phase: res.phase,
            f_ref_hz: res.f_ref,
            mean_shift_hz: mean,
        }],
    )
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineCmdConfig {
    /// Qubit indices; empty means every qubit of the first record.
    pub qubits: Vec<usize>,
    pub pipeline: PipelineConfig,
}

#[derive(Serialize)]
struct SelectionRow {
    label: String,
    run: String,
    accepted: bool,
    reason: &'static str,
}

/// Record energies, filled from a `<stem>.triggers.csv` sidecar when the
/// record itself has none.
fn load_run(p: &Path) -> Result<ShotRecord> {
    let mut rec = load_record(p)?;
    if rec.header.triggers.iter().any(|t| t.energy_kev.is_none()) {
        let side = p.with_extension("triggers.csv");
        if side.exists() {
            let trig = read_triggers_csv(BufReader::new(File::open(&side).map_err(Error::Io)?))?;
            if trig.len() != rec.n_triggers() {
                return Err(Error::Size(format!(
                    "{} has {} triggers, record {}",
                    side.display(),
                    trig.len(),
                    rec.n_triggers()
                ))
                .into());
            }
            for (t, s) in rec.header.triggers.iter_mut().zip(trig) {
                t.energy_kev = s.energy_kev;
            }
        }
    }
    Ok(rec)
}

pub fn pipeline(common: &Common, inputs: &[PathBuf]) -> Result<()> {
    let cfg: PipelineCmdConfig = resolve(
        &PipelineCmdConfig::default(),
        common.config.as_deref(),
        &common.sets,
    )?;
    require_inputs(inputs)?;
    let records = inputs
        .iter()
        .map(|p| load_run(p))
        .collect::<Result<Vec<_>>>()?;
    ensure_out(&common.out)?;
    write_effective(&common.out, &cfg)?;
    let nq = records[0].n_qubits();
    let qubits: Vec<usize> = if cfg.qubits.is_empty() {
        (0..nq).collect()
    } else {
        cfg.qubits.clone()
    };
    let run_names: Vec<String> = inputs
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let pc = cfg.pipeline;
    let results = qubits
        .par_iter()
        .map(
            |&q| -> Result<(SummaryRow, Vec<SelectionRow>, String, Vec<u8>)> {
                let label = records[0]
                    .header
                    .qubit_labels
                    .get(q)
                    .cloned()
                    .unwrap_or_else(|| format!("q{q}"));
                let runs = records
                    .iter()
                    .zip(&run_names)
                    .map(|(r, name)| RunTrace::from_record(r, q, name.clone()))
                    .collect::<qpburst::Result<Vec<_>>>()?;
                let (avg, sel) = normalize_and_average(&runs, &pc)?;
                let fit = fit_recovery(&avg.time, &avg.dp, (pc.fit_start, pc.fit_end))?;
                let (peak, peak_time) = peak_change(&avg.time, &avg.dp)?;
                let mut csv_bytes = Vec::new();
                avg.write_csv(&mut csv_bytes)?;
                let selection = sel
                    .into_iter()
                    .map(|s| SelectionRow {
                        label: label.clone(),
                        run: s.label,
                        accepted: s.accepted,
                        reason: s.reason.unwrap_or(""),
                    })
                    .collect();
                let row = SummaryRow {
                    label: label.clone(),
                    peak,
                    peak_time,
                    tau: fit.tau,
                    tau_err: fit.std_err[1],
                    flagged: fit.flagged,
                    mean_energy_kev: avg.mean_energy_kev,
                    n_runs: avg.n_runs,
                };
                Ok((row, selection, label, csv_bytes))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut selection = Vec::new();
    for (row, sel, label, bytes) in results {
        let safe: String = label
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        std::fs::write(common.out.join(format!("trace_{safe}.csv")), bytes).map_err(Error::Io)?;
        rows.push(row);
        selection.extend(sel);
    }
    write_summary_csv(&rows, create(&common.out, "summary.csv")?)?;
    write_rows(&common.out, "selection.csv", &selection)
}
