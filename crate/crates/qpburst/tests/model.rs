use std::path::PathBuf;
use std::sync::Arc;

use qpburst::config::{load_array_config_file, ArrayConfig, Orientation};
use qpburst::constants::kt_ghz;
use qpburst::qp::{generation, QpModel, QpState, TauTable, TemperatureDrive};

fn fixture(name: &str, sets: &[(&str, &str)]) -> ArrayConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    let sets: Vec<(String, String)> = sets.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    load_array_config_file(&path, &sets).unwrap()
}

fn model(cfg: &ArrayConfig, qubit: usize) -> QpModel {
    QpModel::for_qubit(cfg, &cfg.qubits[qubit], Arc::new(TauTable::new(cfg)))
}

fn seed() -> QpState {
    QpState::uniform(1e-8, 0.99)
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let cfg = fixture("jj_m1.toml", &[("drive.t0", "1.0")]);
    let m = model(&cfg, 2);
    let eq = m.equilibrium(seed()).unwrap();
    let tr = m.integrate(0.0, 10e-3, eq, &[10e-3]).unwrap();
    let end = tr.points[0].state;
    for (a, b) in eq.to_array().iter().zip(end.to_array()) {
        assert!((a - b).abs() <= 1e-2 * a.abs(), "{a} drifted to {b}");
    }
    let d = m.rhs(10e-3, &end);
    assert!(d.p_0.abs() < 1e-6, "dp0/dt = {}", d.p_0);
}

#[test]
fn decoupled_leads_follow_rothwarf_taylor() {
    let cfg = fixture(
        "jj_m1.toml",
        &[("model.s_bar_tilde", "0"), ("geometry.nu_s", "0"), ("model.eta_0", "0"), ("model.eta_3", "0")],
    );
    let m = model(&cfg, 0);
    let s = QpState { x_2lt: 3e-7, x_2gt: 2e-8, x_3: 5e-7, x_l: 1e-8, x_r: 4e-8, p_0: 0.7 };
    for temp in [0.08, 0.2, 0.3] {
        let d = m.rhs_at_temperature(temp, &s);
        let r = cfg.model.r;
        let g3 = generation(temp, r, m.d3) - r * s.x_3 * s.x_3;
        assert!((d.x_3 - g3).abs() <= 1e-12 * g3.abs().max(1e-30), "{} vs {g3}", d.x_3);
        // The 2< / 2> exchange only moves density within M2.
        let x2 = s.x_2lt + s.x_2gt;
        let g2 = generation(temp, r, m.d2) - r * x2 * x2;
        let sum = d.x_2lt + d.x_2gt;
        assert!((sum - g2).abs() <= 1e-9 * g2.abs().max(1e-30), "{sum} vs {g2}");
    }
}

#[test]
fn orientation_swap_exchanges_side_films() {
    let cfg = fixture("jj_only.toml", &[]);
    let mut slow = model(&cfg, 0);
    slow.set_orientation(Orientation::Slow, &cfg);
    let mut fast = model(&cfg, 0);
    fast.set_orientation(Orientation::Fast, &cfg);
    let s = QpState { x_2lt: 1e-7, x_2gt: 1e-8, x_3: 2e-7, x_l: 3e-8, x_r: 7e-7, p_0: 0.9 };
    let swapped = QpState { x_l: s.x_r, x_r: s.x_l, ..s };
    let a = slow.rhs_at_temperature(0.2, &s);
    let b = fast.rhs_at_temperature(0.2, &swapped);
    assert_eq!(a.x_l, b.x_r);
    assert_eq!(a.x_r, b.x_l);
}

#[test]
fn empty_leads_leave_only_non_parity_rates() {
    let cfg = fixture("jj_m1.toml", &[]);
    let m = model(&cfg, 3);
    let empty = QpState::uniform(0.0, 0.5);
    for temp in [0.06, 0.15, 0.33] {
        let (up, down) = m.transition_rates(&empty, temp);
        assert_eq!((up, down), m.non_parity_rates(temp));
        let ratio = (-m.f_qb / kt_ghz(temp)).exp();
        assert!((up / down - ratio).abs() <= 1e-12 * ratio);
    }
}

#[test]
fn baseline_relaxation_close_to_t1() {
    for name in ["jj_m1.toml", "jj_only.toml"] {
        let cfg = fixture(name, &[]);
        for q in [0, 4, 8] {
            let m = model(&cfg, q);
            let eq = m.equilibrium(seed()).unwrap();
            let down = m.transition_rates(&eq, m.drive.t_base).1;
            let t1_rate = cfg.qubits[q].gamma_10_ee;
            assert!((down / t1_rate - 1.0).abs() < 0.2, "{name} q{q}: {down} vs {t1_rate}");
        }
    }
}

#[test]
fn zero_amplitude_drive_stays_at_equilibrium() {
    let cfg = fixture("jj_m1.toml", &[("qubits.1.t_scale", "0")]);
    let m = model(&cfg, 1);
    let eq = m.equilibrium(seed()).unwrap();
    let times: Vec<f64> = (0..50).map(|k| k as f64 * 20e-6).collect();
    let tr = m.integrate(-1e-4, 1e-3, eq, &times).unwrap();
    for p in &tr.points {
        assert_eq!(p.temperature, m.drive.t_base);
        assert!((p.state.x_3 / eq.x_3 - 1.0).abs() < 1e-6);
    }
}

fn peak_excess(m: &QpModel, t_end: f64) -> f64 {
    let eq = m.equilibrium(seed()).unwrap();
    let base = m.transition_rates(&eq, m.drive.t_base).1;
    let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.5e-6).collect();
    let tr = m.integrate(-1e-3, t_end, eq, &times).unwrap();
    tr.gamma_down().iter().map(|g| g - base).fold(f64::MIN, f64::max)
}

#[test]
fn long_span_resolves_the_onset() {
    let cfg = fixture("jj_m1.toml", &[("qubits.2.t_scale", "1.0")]);
    let m = model(&cfg, 2);
    let short = peak_excess(&m, 3e-3);
    let long = peak_excess(&m, 0.11);
    assert!(short > 100.0);
    assert!((long / short - 1.0).abs() < 1e-3, "{long} vs {short}");
}

#[test]
fn relaxation_decays_after_the_peak() {
    let cfg = fixture("jj_m1.toml", &[("qubits.2.t_scale", "1.0")]);
    let m = model(&cfg, 2);
    let eq = m.equilibrium(seed()).unwrap();
    let times: Vec<f64> = (0..=3000).map(|k| k as f64 * 1e-6).collect();
    let g = m.integrate(0.0, 3e-3, eq, &times).unwrap().gamma_down();
    let ip = (0..g.len()).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
    assert!(ip > 0 && ip < g.len() - 1);
    for w in g[ip..].windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn drive_peak_temperatures() {
    let cfg = fixture("jj_m1.toml", &[]);
    let full = TemperatureDrive::new(0.06, 1.0, cfg.drive.clone());
    assert!((full.peak_temperature() - 0.33).abs() < 1e-12);
    let scaled = TemperatureDrive::new(0.06, 0.426, cfg.drive.clone());
    assert!((scaled.peak_temperature() - 0.175).abs() < 1e-4);
    let before = full.temperature(cfg.drive.t0 - 1e-9);
    assert_eq!(before, 0.06);
}
