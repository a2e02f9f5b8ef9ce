use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use qpburst::config::{load_array_config, ArrayConfig, Orientation};
use qpburst::io::{dump_kernel_cache, load_kernel_cache, write_trajectory_csv};
use qpburst::measurement::RateTrajectory;
use qpburst::qp::{QpModel, QpState, TauTable};
use qpburst::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::settings::{apply_sets, decode, merge, read_toml, write_effective};
use crate::{ensure_out, Common};

/// The `[simulation]` table of a model config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    pub t_start: f64,
    /// Fine sampling from `t_start` up to this time, coarse afterwards.
    pub t_fine_end: f64,
    pub dt_fine: f64,
    pub t_end: f64,
    pub dt_coarse: f64,
    /// Qubit indices into `qubits`; empty means all.
    pub qubits: Vec<usize>,
    /// Kernel cache file: loaded when present, written after the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_cache: Option<String>,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            t_start: -1e-3,
            t_fine_end: 5e-3,
            dt_fine: 1e-6,
            t_end: 0.11,
            dt_coarse: 1e-4,
            qubits: Vec::new(),
            kernel_cache: None,
        }
    }
}

impl Simulation {
    fn validate(&self) -> qpburst::Result<()> {
        if !(self.t_start < 0.0 && self.t_fine_end > 0.0 && self.t_end >= self.t_fine_end) {
            return Err(Error::range(
                "simulation",
                "need t_start < 0 < t_fine_end <= t_end",
            ));
        }
        if !(self.dt_fine > 0.0 && self.dt_coarse > 0.0) {
            return Err(Error::range(
                "simulation.dt",
                "sampling steps must be positive",
            ));
        }
        Ok(())
    }

    fn times(&self) -> Vec<f64> {
        let mut t = Vec::new();
        let n = ((self.t_fine_end - self.t_start) / self.dt_fine).round() as usize;
        t.extend((0..=n).map(|k| self.t_start + k as f64 * self.dt_fine));
        let last = *t.last().expect("nonempty");
        let m = ((self.t_end - last) / self.dt_coarse).floor() as usize;
        t.extend((1..=m).map(|k| last + k as f64 * self.dt_coarse));
        t
    }
}

#[derive(Serialize)]
struct Effective<'a> {
    #[serde(flatten)]
    array: &'a ArrayConfig,
    simulation: &'a Simulation,
}

fn orientation_label(o: Orientation) -> &'static str {
    match o {
        Orientation::Slow => "slow",
        Orientation::Fast => "fast",
    }
}

fn load(common: &Common) -> Result<(ArrayConfig, Simulation)> {
    let path = common.config.as_deref().ok_or_else(|| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "simulate-model needs --config <array.toml>",
        ))
    })?;
    let mut root = read_toml(path)?;
    let sim_file = match &mut root {
        toml::Value::Table(t) => t.remove("simulation"),
        _ => None,
    };
    let mut sim_v = toml::Value::try_from(Simulation::default())?;
    if let Some(v) = sim_file {
        merge(&mut sim_v, v);
    }
    let (sim_sets, array_sets): (Vec<String>, Vec<String>) = common
        .sets
        .iter()
        .cloned()
        .partition(|s| s.trim_start().starts_with("simulation."));
    let sim_sets: Vec<String> = sim_sets
        .iter()
        .map(|s| s.trim_start()["simulation.".len()..].to_string())
        .collect();
    apply_sets(&mut sim_v, &sim_sets)?;
    apply_sets(&mut root, &array_sets)?;
    let sim: Simulation = decode(sim_v)?;
    sim.validate()?;
    let text = toml::to_string(&root).map_err(|e| Error::Parse(e.to_string()))?;
    let cfg = load_array_config(&text, &[])
        .with_context(|| format!("array config {}", path.display()))?;
    Ok((cfg, sim))
}

#[derive(Serialize)]
struct SummaryRow {
    label: String,
    f_qb_ghz: f64,
    orientation: &'static str,
    gamma_down_base: f64,
    peak_excess: f64,
    t_peak: f64,
    /// Time after the peak for the excess to fall below 10% of the peak.
    recovery_10: f64,
}

pub fn simulate_model(common: &Common) -> Result<()> {
    let (cfg, sim) = load(common)?;
    ensure_out(&common.out)?;
    write_effective(
        &common.out,
        &Effective {
            array: &cfg,
            simulation: &sim,
        },
    )?;
    let tau = Arc::new(TauTable::new(&cfg));
    if let Some(p) = sim
        .kernel_cache
        .as_deref()
        .map(Path::new)
        .filter(|p| p.exists())
    {
        let f = std::fs::File::open(p).map_err(Error::Io)?;
        load_kernel_cache(&tau, std::io::BufReader::new(f))?;
    }
    let indices: Vec<usize> = if sim.qubits.is_empty() {
        (0..cfg.qubits.len()).collect()
    } else {
        sim.qubits.clone()
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= cfg.qubits.len()) {
        return Err(Error::range(
            "simulation.qubits",
            format!("index {bad} but the config has {} qubits", cfg.qubits.len()),
        )
        .into());
    }
    let times = sim.times();
    let rows = indices
        .par_iter()
        .map(|&i| -> Result<SummaryRow> {
            let q = &cfg.qubits[i];
            let label = format!(
                "q{}_{}",
                q.resonator_index,
                orientation_label(q.orientation)
            );
            let m = QpModel::for_qubit(&cfg, q, tau.clone());
            let eq = m.equilibrium(QpState::uniform(cfg.model.x_eq, 0.99))?;
            let tr = m.integrate(sim.t_start, sim.t_end, eq, &times)?;
            let f = std::fs::File::create(common.out.join(format!("trajectory_{label}.csv")))
                .map_err(Error::Io)?;
            write_trajectory_csv(&tr.points, std::io::BufWriter::new(f))?;
            let up: Vec<f64> = tr.points.iter().map(|p| p.gamma_up).collect();
            let down = tr.gamma_down();
            let rates = RateTrajectory::new(times.clone(), up, down.clone())?;
            let f = std::fs::File::create(common.out.join(format!("rates_{label}.csv")))
                .map_err(Error::Io)?;
            rates.write_csv(std::io::BufWriter::new(f))?;
            let base = m.transition_rates(&eq, m.drive.t_base).1;
            let (ip, peak) = down
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (k, &v)| {
                    if v - base > a.1 {
                        (k, v - base)
                    } else {
                        a
                    }
                });
            let recovery = down[ip..]
                .iter()
                .position(|&v| v - base < 0.1 * peak)
                .map_or(f64::NAN, |k| times[ip + k] - times[ip]);
            Ok(SummaryRow {
                label,
                f_qb_ghz: q.f_qb,
                orientation: orientation_label(q.orientation),
                gamma_down_base: base,
                peak_excess: peak,
                t_peak: times[ip],
                recovery_10: recovery,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(common.out.join("model_summary.csv")).map_err(Error::Csv)?;
    for r in &rows {
        w.serialize(r).map_err(Error::Csv)?;
    }
    w.flush().map_err(Error::Io)?;
    if let Some(p) = sim.kernel_cache.as_deref() {
        let f = std::fs::File::create(p).map_err(Error::Io)?;
        dump_kernel_cache(&tau, std::io::BufWriter::new(f))?;
    }
    Ok(())
}
