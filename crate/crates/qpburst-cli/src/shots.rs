use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qpburst::io::HeraldStreamWriter;
use qpburst::measurement::{
    simulate_burst_stream, simulate_ramsey, simulate_shots as run_shots, write_triggers_csv,
    BurstStreamConfig, ConfusionMatrix, FrequencyTrajectory, RamseyConfig, RateTrajectory,
    SequenceKind, SequenceTiming, ShotConfig, TriggerMode,
};
use qpburst::pipeline::assign_energies;
use qpburst::rng::derive_seed;
use qpburst::Error;
use serde::{Deserialize, Serialize};

use crate::settings::{resolve, write_effective};
use crate::{ensure_out, require_inputs, Common, ShotMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliqueShots {
    pub sequences: Vec<SequenceKind>,
    pub n_triggers: usize,
    pub pre_cycles: usize,
    /// Recorded time after the trigger, s.
    pub post_time: f64,
    pub burn_in: usize,
    pub confusion: ConfusionMatrix,
    pub triggers: TriggerMode,
    pub random_phase: bool,
    pub jitter: f64,
    pub x_error: f64,
    pub c_phase: u8,
    /// Mean deposited energy per trigger; omitted means no energies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_kev: Option<f64>,
    /// Relative Gaussian spread of the per-trigger energy.
    pub energy_spread: f64,
}

impl Default for CliqueShots {
    fn default() -> Self {
        Self {
            sequences: vec![
                SequenceKind::A,
                SequenceKind::B,
                SequenceKind::D0,
                SequenceKind::D1,
            ],
            n_triggers: 5000,
            pre_cycles: 20,
            post_time: 0.1016,
            burn_in: 50,
            confusion: ConfusionMatrix {
                p00: 0.97,
                p11: 0.97,
            },
            triggers: TriggerMode::default(),
            random_phase: false,
            jitter: 0.0,
            x_error: 0.0,
            c_phase: 0,
            energy_kev: None,
            energy_spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyShots {
    pub sequence: RamseyConfig,
    pub before_shift_hz: f64,
    pub before_t2: f64,
    pub after_shift_hz: f64,
    pub after_t2: f64,
}

impl Default for RamseyShots {
    fn default() -> Self {
        Self {
            sequence: RamseyConfig {
                n_triggers: 5000,
                confusion: ConfusionMatrix {
                    p00: 0.98,
                    p11: 0.95,
                },
                ..Default::default()
            },
            before_shift_hz: 0.0,
            before_t2: 40e-6,
            after_shift_hz: 50e3,
            after_t2: 40e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub clique: CliqueShots,
    pub am: BurstStreamConfig,
    pub ramsey: RamseyShots,
}

impl Default for ShotsConfig {
    fn default() -> Self {
        Self {
            seed: None,
            clique: CliqueShots::default(),
            am: BurstStreamConfig::am_default(),
            ramsey: RamseyShots::default(),
        }
    }
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(&path)
            .map_err(Error::Io)
            .with_context(|| path.display().to_string())?,
    ))
}

fn label_of(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_prefix("rates_")
        .map(str::to_string)
        .unwrap_or(stem)
}

pub fn simulate_shots(common: &Common, mode: ShotMode, inputs: &[PathBuf]) -> Result<()> {
    let mut cfg: ShotsConfig = resolve(
        &ShotsConfig::default(),
        common.config.as_deref(),
        &common.sets,
    )?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    let seed = cfg.seed.ok_or_else(|| {
        Error::MissingField("seed (pass --seed or set `seed` in the config)".into())
    })?;
    ensure_out(&common.out)?;
    write_effective(&common.out, &cfg)?;
    match mode {
        ShotMode::Clique => clique(common, &cfg.clique, inputs, seed),
        ShotMode::Am => am(common, &cfg.am, seed),
        ShotMode::Ramsey => ramsey(common, &cfg.ramsey, seed),
    }
}

fn clique(common: &Common, c: &CliqueShots, inputs: &[PathBuf], seed: u64) -> Result<()> {
    require_inputs(inputs)?;
    let mut trajs = Vec::with_capacity(inputs.len());
    for p in inputs {
        let f = File::open(p).map_err(Error::Io)?;
        trajs.push(
            RateTrajectory::read_csv(std::io::BufReader::new(f))
                .with_context(|| p.display().to_string())?,
        );
    }
    let labels: Vec<String> = inputs.iter().map(|p| label_of(p)).collect();
    for &kind in &c.sequences {
        let timing = SequenceTiming::clique_for(kind);
        let post = (c.post_time / timing.cadence()).ceil() as usize;
        let mut sc = ShotConfig::new(kind, timing, c.confusion, c.n_triggers, c.pre_cycles, post);
        sc.burn_in = c.burn_in;
        sc.triggers = c.triggers;
        sc.random_phase = c.random_phase;
        sc.jitter = c.jitter;
        sc.x_error = c.x_error;
        sc.c_phase = c.c_phase;
        let child = derive_seed(seed, "sequence", kind.code() as u64);
        let mut rec = run_shots(&trajs, &labels, &sc, child)?;
        if let Some(e) = c.energy_kev {
            assign_energies(&mut rec, e, c.energy_spread, child)?;
        }
        rec.save(&common.out.join(format!("shots_{}.qpr", kind.label())))?;
        rec.write_triggers_csv(create(
            common
                .out
                .join(format!("shots_{}.triggers.csv", kind.label())),
        )?)?;
    }
    Ok(())
}

fn am(common: &Common, c: &BurstStreamConfig, seed: u64) -> Result<()> {
    let mut w = HeraldStreamWriter::new(
        create(common.out.join("stream.qph"))?,
        c.baseline.len(),
        c.timing.cadence(),
    )?;
    let bursts = simulate_burst_stream(c, seed, |s| w.push(s))?;
    w.finish()?;
    let mut out = csv::Writer::from_writer(create(common.out.join("bursts.csv"))?);
    out.write_record(["time"]).map_err(Error::Csv)?;
    for b in bursts {
        out.write_record([format!("{b:e}")]).map_err(Error::Csv)?;
    }
    out.flush().map_err(Error::Io)?;
    Ok(())
}

fn ramsey(common: &Common, r: &RamseyShots, seed: u64) -> Result<()> {
    let s = &r.sequence;
    let t0 = -((s.pre_groups + 2) as f64) * s.group_period;
    let t1 = (s.post_groups + 2) as f64 * s.group_period;
    let traj = FrequencyTrajectory::step_at_zero(
        (r.before_shift_hz, r.before_t2),
        (r.after_shift_hz, r.after_t2),
        t0,
        t1,
    )?;
    let rec = simulate_ramsey(&[traj], &["q0".to_string()], s, seed)?;
    rec.save(&common.out.join("ramsey.qpr"))?;
    write_triggers_csv(
        &rec.header.triggers,
        create(common.out.join("ramsey.triggers.csv"))?,
    )?;
    Ok(())
}
