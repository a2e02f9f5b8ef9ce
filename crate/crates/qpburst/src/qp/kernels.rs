//! Tunneling-rate kernels. The functional forms of Γ̃, ξ and τ_Rlx are not
//! fixed by the model equations, so they sit behind [`RateKernels`]; the
//! default [`ThermalKernels`] derives them from thermal quasiparticle
//! populations above the energy each transition requires.

use std::sync::{Arc, OnceLock};

use crate::config::{ArrayConfig, KernelParams};
use crate::constants::kt_ghz;
use crate::error::Result;
use crate::qp::tau::{partition, tau_x_inv, KernelGaps, Lead, TauOptions};
use crate::quadrature::{integrate, Tolerance};

/// Kernel values at one temperature. Γ̃ arrays are indexed [00, 01, 10, 11].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelValues {
    pub g3: [f64; 4],
    pub g2gt: [f64; 4],
    pub g2lt_10: f64,
    pub xi: f64,
    pub tau3: f64,
    pub tau2gt: f64,
    pub tau2lt: f64,
    pub tau_rlx: f64,
    pub tau_exc: f64,
}

impl KernelValues {
    fn lerp(a: &Self, b: &Self, w: f64) -> Self {
        let l = |x: f64, y: f64| x + (y - x) * w;
        let l4 = |x: [f64; 4], y: [f64; 4]| [l(x[0], y[0]), l(x[1], y[1]), l(x[2], y[2]), l(x[3], y[3])];
        Self {
            g3: l4(a.g3, b.g3),
            g2gt: l4(a.g2gt, b.g2gt),
            g2lt_10: l(a.g2lt_10, b.g2lt_10),
            xi: l(a.xi, b.xi),
            tau3: l(a.tau3, b.tau3),
            tau2gt: l(a.tau2gt, b.tau2gt),
            tau2lt: l(a.tau2lt, b.tau2lt),
            tau_rlx: l(a.tau_rlx, b.tau_rlx),
            tau_exc: l(a.tau_exc, b.tau_exc),
        }
    }
}

pub trait RateKernels: Send + Sync {
    fn eval(&self, t_kelvin: f64) -> KernelValues;
    /// Cooper-pair count converting Γ̃ into the per-density rate Γ̄.
    fn n_ref(&self) -> f64;
}

/// τ kernels of one gap profile on a lazily filled temperature grid.
pub struct TauTable {
    gaps: KernelGaps,
    d_delta_jj: f64,
    r: f64,
    tau_scale: f64,
    opts: TauOptions,
    step: f64,
    nodes: Vec<OnceLock<[f64; 4]>>,
}

impl TauTable {
    pub fn new(cfg: &ArrayConfig) -> Self {
        let k = &cfg.kernel;
        let gaps = KernelGaps {
            d1: k.delta_1_override.unwrap_or(cfg.gap.delta1()),
            d2: cfg.gap.delta2(),
            d3: cfg.gap.delta3(),
        };
        let n = (1.0 / k.grid_step).ceil() as usize + 1;
        Self {
            gaps,
            d_delta_jj: cfg.gap.d_delta_jj,
            r: cfg.model.r,
            tau_scale: k.tau_scale,
            opts: TauOptions {
                panels_lead3: k.panels_lead3,
                ..Default::default()
            },
            step: k.grid_step,
            nodes: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn gaps(&self) -> KernelGaps {
        self.gaps
    }

    /// [τ3⁻¹, τ2>⁻¹, τ2<⁻¹, τ_Rlx⁻¹] without grid interpolation.
    pub fn compute(&self, t: f64) -> Result<[f64; 4]> {
        let s = self.tau_scale;
        let t3 = tau_x_inv(t, Lead::L3, self.gaps, self.r, self.opts)?;
        let t2g = tau_x_inv(t, Lead::L2Gt, self.gaps, self.r, self.opts)?;
        let t2l = tau_x_inv(t, Lead::L2Lt, self.gaps, self.r, self.opts)?;
        // Relaxation of the upper M2 population into states below Δ3.
        let rlx_gaps = KernelGaps { d1: self.gaps.d2, ..self.gaps };
        let rlx = tau_x_inv(t, Lead::L2Gt, rlx_gaps, self.r, self.opts)?;
        Ok([s * t3, s * t2g, s * t2l, s * rlx])
    }

    fn node(&self, i: usize) -> [f64; 4] {
        *self.nodes[i].get_or_init(|| {
            let t = (i as f64 * self.step).max(0.25 * self.step);
            self.compute(t).unwrap_or_else(|e| panic!("tau kernel at {t} K: {e}"))
        })
    }

    pub fn eval(&self, t: f64) -> [f64; 4] {
        let x = t / self.step;
        let i = x.floor();
        if i < 0.0 || (i as usize) + 1 >= self.nodes.len() {
            return self.compute(t).unwrap_or_else(|e| panic!("tau kernel at {t} K: {e}"));
        }
        let i = i as usize;
        let w = x - i as f64;
        let a = self.node(i);
        if w == 0.0 {
            return a;
        }
        let b = self.node(i + 1);
        std::array::from_fn(|k| a[k] + (b[k] - a[k]) * w)
    }

    pub fn detailed_balance_exc(&self, t: f64, rlx: f64) -> f64 {
        let (hi, lo) = partition(t, self.d_delta_jj);
        if lo > 0.0 {
            rlx * hi / lo
        } else {
            0.0
        }
    }

    /// Temperatures whose nodes have been evaluated.
    pub fn filled(&self) -> Vec<(f64, [f64; 4])> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.get().map(|v| (i as f64 * self.step, *v)))
            .collect()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Seed grid nodes from a previously dumped table.
    pub fn preload(&self, entries: &[(f64, [f64; 4])]) {
        for (t, v) in entries {
            let i = (t / self.step).round() as usize;
            if i < self.nodes.len() {
                let _ = self.nodes[i].set(*v);
            }
        }
    }
}

/// Fraction of the thermal population of a film with gap `dsrc` lying in
/// [lo, hi] that sits at or above `thr`.
pub fn thermal_fraction(t_kelvin: f64, dsrc: f64, lo: f64, hi: f64, thr: f64) -> f64 {
    if thr <= lo {
        return 1.0;
    }
    if thr >= hi {
        return 0.0;
    }
    let kt = kt_ghz(t_kelvin);
    let t_lo = (lo - dsrc).max(0.0).sqrt();
    let span = |a: f64, b: f64| -> f64 {
        let ta = (a - dsrc).max(0.0).sqrt();
        let tb = (b.min(lo + 60.0 * kt) - dsrc).max(0.0).sqrt();
        if tb <= ta {
            return 0.0;
        }
        let f = |t: f64| {
            let e = dsrc + t * t;
            2.0 * e / (e + dsrc).sqrt() * (-(t * t - t_lo * t_lo) / kt).exp()
        };
        integrate(f, ta, tb, Tolerance { rel: 1e-10, ..Default::default() })
            .map(|e| e.value)
            .unwrap_or(0.0)
    };
    let den = span(lo, hi);
    if den <= 0.0 {
        return 0.0;
    }
    (span(thr, hi) / den).clamp(0.0, 1.0)
}

/// Default kernels for one qubit (transition thresholds depend on f_qb).
pub struct ThermalKernels {
    tau: Arc<TauTable>,
    params: KernelParams,
    f_qb: f64,
}

impl ThermalKernels {
    pub fn new(tau: Arc<TauTable>, params: KernelParams, f_qb: f64) -> Self {
        Self { tau, params, f_qb }
    }

    pub fn compute(&self, t: f64) -> KernelValues {
        let KernelGaps { d2, d3, .. } = self.tau.gaps();
        let hf = self.f_qb;
        let g = self.params.g_qp;
        let inf = f64::INFINITY;
        let f3_01 = thermal_fraction(t, d3, d3, inf, d2 + hf);
        let f3_hi = thermal_fraction(t, d3, d3, inf, d3 + hf);
        let xi = if f3_01 > 0.0 { (f3_hi / f3_01).clamp(0.0, 1.0) } else { 0.0 };
        let f2g_01 = thermal_fraction(t, d2, d3, inf, d3 + hf);
        let f2l_10 = thermal_fraction(t, d2, d2, d3, d3 - hf);
        let [tau3, tau2gt, tau2lt, tau_rlx] = self.tau.eval(t);
        KernelValues {
            g3: [g, g * f3_01, g, g],
            g2gt: [g, g * f2g_01, g, g],
            g2lt_10: g * f2l_10,
            xi,
            tau3,
            tau2gt,
            tau2lt,
            tau_rlx,
            tau_exc: self.tau.detailed_balance_exc(t, tau_rlx),
        }
    }
}

impl RateKernels for ThermalKernels {
    fn eval(&self, t_kelvin: f64) -> KernelValues {
        self.compute(t_kelvin)
    }
    fn n_ref(&self) -> f64 {
        self.params.n_ref
    }
}

/// Memoizes any kernel on a uniform temperature grid with linear interpolation.
pub struct CachedKernels<K> {
    inner: K,
    step: f64,
    nodes: Vec<OnceLock<KernelValues>>,
}

impl<K: RateKernels> CachedKernels<K> {
    pub fn new(inner: K, step: f64, t_max: f64) -> Self {
        let n = (t_max / step).ceil() as usize + 2;
        Self {
            inner,
            step,
            nodes: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    fn node(&self, i: usize) -> KernelValues {
        *self.nodes[i].get_or_init(|| self.inner.eval((i as f64 * self.step).max(0.25 * self.step)))
    }
}

impl<K: RateKernels> RateKernels for CachedKernels<K> {
    fn eval(&self, t: f64) -> KernelValues {
        let x = t / self.step;
        let i = x.floor();
        if i < 0.0 || (i as usize) + 1 >= self.nodes.len() {
            return self.inner.eval(t);
        }
        let i = i as usize;
        let w = x - i as f64;
        let a = self.node(i);
        if w == 0.0 {
            return a;
        }
        KernelValues::lerp(&a, &self.node(i + 1), w)
    }
    fn n_ref(&self) -> f64 {
        self.inner.n_ref()
    }
}

/// Kernels returning fixed values, for tests and decoupling studies.
#[derive(Debug, Clone, Copy)]
pub struct ConstantKernels {
    pub values: KernelValues,
    pub n_ref: f64,
}

impl RateKernels for ConstantKernels {
    fn eval(&self, _t: f64) -> KernelValues {
        self.values
    }
    fn n_ref(&self) -> f64 {
        self.n_ref
    }
}
