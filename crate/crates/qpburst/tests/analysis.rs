use qpburst::detection::{detect, DetectionParams};
use qpburst::inversion::{clique_invert, InversionConfig, MeasuredTrace};
use qpburst::measurement::{
    simulate_ramsey, simulate_shots, ConfusionMatrix, FrequencyTrajectory, RamseyConfig, RateTrajectory, SequenceKind, SequenceTiming,
    ShotConfig,
};
use qpburst::pipeline::{assign_energies, fit_recovery, normalize_and_average, PipelineConfig, RunTrace};
use qpburst::ramsey::{analyze_record, RamseyAnalysisConfig};
use qpburst::rng::substream;
use rand_distr::{Distribution, Normal};

fn noisy_series(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, "test-noise", 0);
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn matched_filter_finds_an_injected_burst() {
    let dt = 6.95e-6;
    let mut x = noisy_series(400_000, 0.5, 0.05, 1);
    let at = 200_000;
    for k in 0..200 {
        let t = k as f64 * dt;
        x[at + k] += 0.3 * (-t / 100e-6).exp();
    }
    let cat = detect(&x, dt, DetectionParams::default()).unwrap();
    assert_eq!(cat.len(), 1, "{:?}", cat.events);
    let e = &cat.events[0];
    assert!((e.index as i64 - at as i64).abs() < 10, "{}", e.index);
    // Optimal SNR here is about 16.
    assert!(e.passes && e.score > 10.0, "{e:?}");
}

#[test]
fn gaussian_background_stays_below_threshold() {
    let x = noisy_series(1_000_000, 0.5, 0.05, 2);
    let cat = detect(&x, 6.95e-6, DetectionParams::default()).unwrap();
    assert!(cat.is_empty(), "{:?}", cat.events);
}

#[test]
fn constant_rates_invert_from_shots() {
    let conf = ConfusionMatrix { p00: 0.97, p11: 0.97 };
    let traj = RateTrajectory::constant(2e3, 4e4, -1e-3, 4e-3).unwrap();
    let mut traces = Vec::new();
    for kind in [SequenceKind::A, SequenceKind::B, SequenceKind::D0, SequenceKind::D1] {
        let cfg = ShotConfig::new(kind, SequenceTiming::clique_for(kind), conf, 3000, 10, 300);
        let rec = simulate_shots(std::slice::from_ref(&traj), &[], &cfg, 5).unwrap();
        traces.push(MeasuredTrace::from_record(&rec, 0).unwrap());
    }
    let cfg = InversionConfig { confusion: Some(conf), t_max: 1.5e-3, ..Default::default() };
    let res = clique_invert(&traces, &cfg).unwrap();
    let mut down: Vec<f64> = res.trace.bins.iter().filter(|b| b.pass).map(|b| b.gamma_down).collect();
    assert!(down.len() > 100);
    down.sort_by(f64::total_cmp);
    let median = down[down.len() / 2];
    assert!((median / 4e4 - 1.0).abs() < 0.05, "median Γ_down {median}");
}

#[test]
fn ramsey_step_recovered() {
    let cfg = RamseyConfig { n_triggers: 2000, confusion: ConfusionMatrix { p00: 0.98, p11: 0.95 }, ..Default::default() };
    let tr = FrequencyTrajectory::step_at_zero((0.0, 40e-6), (30e3, 40e-6), -1e-3, 3e-3).unwrap();
    let rec = simulate_ramsey(&[tr], &[], &cfg, 8).unwrap();
    let res = analyze_record(&rec, 0, &RamseyAnalysisConfig::default()).unwrap();
    assert!((res.f_ref / 250e3 - 1.0).abs() < 0.02, "{}", res.f_ref);
    let s = res.shifts();
    assert!(s.len() >= 15);
    let mean = s.iter().map(|x| x.1).sum::<f64>() / s.len() as f64;
    assert!((mean / 30e3 - 1.0).abs() < 0.1, "{mean}");
}

#[test]
fn pipeline_runs_on_simulated_records() {
    let shape = |t: f64| if t < 0.0 { 0.0 } else { (-t / 300e-6).exp() };
    let mut runs = Vec::new();
    for (i, e) in [200.0, 400.0, 600.0].into_iter().enumerate() {
        let k = e / 508.0;
        let traj = RateTrajectory::from_fn(-1e-3, 3e-3, 1e-6, |t| (1e3, 3e4 + k * 1.5e5 * shape(t))).unwrap();
        let kind = SequenceKind::A;
        let cfg = ShotConfig::new(kind, SequenceTiming::clique_for(kind), ConfusionMatrix { p00: 0.97, p11: 0.97 }, 2000, 60, 300);
        let mut rec = simulate_shots(&[traj], &[], &cfg, 30 + i as u64).unwrap();
        assign_energies(&mut rec, e, 0.05, i as u64).unwrap();
        runs.push(RunTrace::from_record(&rec, 0, format!("run{i}")).unwrap());
    }
    let cfg = PipelineConfig { quality_samples: 25, baseline_points: 40, fit_start: 10e-6, fit_end: 1.8e-3, ..Default::default() };
    let (avg, sel) = normalize_and_average(&runs, &cfg).unwrap();
    assert!(sel.iter().all(|s| s.accepted), "{sel:?}");
    assert_eq!(avg.n_runs, 3);
    let fit = fit_recovery(&avg.time, &avg.dp, (cfg.fit_start, cfg.fit_end)).unwrap();
    assert!(!fit.flagged, "{fit:?}");
    assert!(fit.amplitude.abs() > 0.0);
    assert!(fit.tau > 100e-6 && fit.tau < 1e-3, "{}", fit.tau);
}
