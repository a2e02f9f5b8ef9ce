use std::sync::Arc;

use crate::config::{ArrayConfig, ModelParams, Orientation, QubitConfig};
use crate::constants::{erfc, kt_ghz};
use crate::qp::drive::TemperatureDrive;
use crate::qp::kernels::{CachedKernels, KernelValues, RateKernels, TauTable, ThermalKernels};
use crate::qp::tau::partition;

/// Reduced densities and ground-state probability.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QpState {
    pub x_2lt: f64,
    pub x_2gt: f64,
    pub x_3: f64,
    pub x_l: f64,
    pub x_r: f64,
    pub p_0: f64,
}

impl QpState {
    pub const DIM: usize = 6;

    pub fn uniform(x: f64, p_0: f64) -> Self {
        Self {
            x_2lt: x,
            x_2gt: x,
            x_3: x,
            x_l: x,
            x_r: x,
            p_0,
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.x_2lt, self.x_2gt, self.x_3, self.x_l, self.x_r, self.p_0]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            x_2lt: y[0],
            x_2gt: y[1],
            x_3: y[2],
            x_l: y[3],
            x_r: y[4],
            p_0: y[5],
        }
    }

    pub fn p_1(&self) -> f64 {
        1.0 - self.p_0
    }

    pub fn is_valid(&self) -> bool {
        let a = self.to_array();
        a[..5].iter().all(|&x| x >= 0.0 && x.is_finite()) && (0.0..=1.0).contains(&self.p_0)
    }
}

/// Thermal generation g(T, r, Δ) = (1/Δ)·2π·r·kT·e^{−2Δ/kT}.
pub fn generation(t_kelvin: f64, r: f64, delta: f64) -> f64 {
    if t_kelvin <= 0.0 {
        return 0.0;
    }
    let kt = kt_ghz(t_kelvin);
    (1.0 / delta) * 2.0 * std::f64::consts::PI * r * kt * (-2.0 * delta / kt).exp()
}

/// Generation split into the M2 populations above and below Δ3: (g_>, g_<).
pub fn generation_split(t_kelvin: f64, r: f64, delta: f64, d_delta_jj: f64) -> (f64, f64) {
    let g = generation(t_kelvin, r, delta);
    if t_kelvin <= 0.0 {
        return (0.0, 0.0);
    }
    let (hi, lo) = partition(t_kelvin, d_delta_jj);
    (g * hi, g * lo)
}

/// Everything the right-hand side needs for one qubit.
pub struct QpModel {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d_delta_jj: f64,
    pub delta: f64,
    pub nu: f64,
    pub nu_s: f64,
    pub nu_th: f64,
    pub nu_tk: f64,
    pub params: ModelParams,
    pub s_l: f64,
    pub s_r: f64,
    pub f_qb: f64,
    pub gamma_10_ee: f64,
    pub drive: TemperatureDrive,
    pub kernels: Arc<dyn RateKernels>,
}

impl QpModel {
    /// Builds the model for `qubit` with the default cached kernels sharing `tau`.
    pub fn for_qubit(cfg: &ArrayConfig, qubit: &QubitConfig, tau: Arc<TauTable>) -> Self {
        let step = cfg.kernel.grid_step;
        let kernels = CachedKernels::new(ThermalKernels::new(tau, cfg.kernel.clone(), qubit.f_qb), step, 1.0);
        Self::with_kernels(cfg, qubit, Arc::new(kernels))
    }

    pub fn with_kernels(cfg: &ArrayConfig, qubit: &QubitConfig, kernels: Arc<dyn RateKernels>) -> Self {
        let ratios = cfg.ratios();
        let (s_l, s_r) = cfg.trapping(qubit.orientation);
        Self {
            d1: cfg.gap.delta1(),
            d2: cfg.gap.delta2(),
            d3: cfg.gap.delta3(),
            d_delta_jj: cfg.gap.d_delta_jj,
            delta: ratios.delta,
            nu: ratios.nu,
            nu_s: ratios.nu_s,
            nu_th: ratios.nu_th,
            nu_tk: ratios.nu_tk,
            params: cfg.model.clone(),
            s_l,
            s_r,
            f_qb: qubit.f_qb,
            gamma_10_ee: qubit.gamma_10_ee,
            drive: TemperatureDrive::new(qubit.t_base, qubit.t_scale, cfg.drive.clone()),
            kernels,
        }
    }

    /// Same model with the trapping constants bound for `o`.
    pub fn set_orientation(&mut self, o: Orientation, cfg: &ArrayConfig) {
        let (l, r) = cfg.trapping(o);
        self.s_l = l;
        self.s_r = r;
    }

    pub fn temperature(&self, t: f64) -> f64 {
        self.drive.temperature(t)
    }

    /// Non-parity rates (Γ_01^ee, Γ_10^ee); the excitation follows detailed balance.
    pub fn non_parity_rates(&self, t_kelvin: f64) -> (f64, f64) {
        let up = self.gamma_10_ee * (-self.f_qb / kt_ghz(t_kelvin)).exp();
        (up, self.gamma_10_ee)
    }

    /// (Γ_up, Γ_down) at a state and temperature.
    pub fn transition_rates(&self, s: &QpState, t_kelvin: f64) -> (f64, f64) {
        let k = self.kernels.eval(t_kelvin);
        self.rates_with(s, t_kelvin, &k)
    }

    fn parity_rates(&self, s: &QpState, k: &KernelValues) -> (f64, f64) {
        let st = self.params.s_bar_tilde;
        if st == 0.0 {
            return (0.0, 0.0);
        }
        let up = (k.g3[1] * s.x_3 + k.g2gt[1] * s.x_2gt) / st;
        let down = (k.g3[2] * s.x_3 + k.g2gt[2] * s.x_2gt + k.g2lt_10 * s.x_2lt) / st;
        (up, down)
    }

    fn rates_with(&self, s: &QpState, t_kelvin: f64, k: &KernelValues) -> (f64, f64) {
        let (eo_up, eo_down) = self.parity_rates(s, k);
        let (ee_up, ee_down) = self.non_parity_rates(t_kelvin);
        (eo_up + ee_up, eo_down + ee_down)
    }

    /// Right-hand side at time `t` (temperature from the drive).
    pub fn rhs(&self, t: f64, s: &QpState) -> QpState {
        self.rhs_at_temperature(self.temperature(t), s)
    }

    pub fn rhs_at_temperature(&self, temp: f64, s: &QpState) -> QpState {
        let k = self.kernels.eval(temp);
        let p = &self.params;
        let kt = kt_ghz(temp);
        let n = self.kernels.n_ref();
        let b = |g: f64| g / n;
        let (p0, p1) = (s.p_0, 1.0 - s.p_0);
        let (x2l, x2g, x3, xl, xr) = (s.x_2lt, s.x_2gt, s.x_3, s.x_l, s.x_r);
        let (r, st, nu, d) = (p.r, p.s_bar_tilde, self.nu, self.delta);
        let [b3_00, b3_01, b3_10, b3_11] = k.g3.map(b);
        let [b2_00, b2_01, b2_10, b2_11] = k.g2gt.map(b);
        let b2l_10 = b(k.g2lt_10);
        // x_j^{>Δi}: share of an M1 film population above Δi.
        let above = |x: f64, gap: f64| x * erfc(((gap - self.d1).max(0.0) / kt).sqrt());
        let feed = p.feed_rate * self.nu_s;
        let (g_gt, g_lt) = generation_split(temp, r, self.d2, self.d_delta_jj);
        let out3 = (b3_00 + b3_01) * p0 + (b3_11 + b3_10) * p1;
        let out2g = (b2_00 + b2_01) * p0 + (b2_11 + b2_10) * p1;

        let dx3 = generation(temp, r, self.d3) - r * x3 * x3 - d * out3 * x3 * st
            + d * b2l_10 * p1 * x2l * st * nu
            + d * out2g * x2g * st * nu
            + self.nu_th * feed * above(xl, self.d3)
            - p.eta_3 * x3 * k.tau3;
        let dx2g = g_gt - r * x2g * x2g - r * x2g * x2l - out2g * x2g * st
            + (b3_00 * p0 + (b3_11 + b3_10) * p1) * x3 * st / nu
            + k.xi * b3_01 * p0 * x3 * st / nu
            - k.tau_rlx * x2g
            + k.tau_exc * x2l
            + self.nu_tk * feed * above(xr, self.d3)
            - p.eta_0 * x2g * k.tau2gt;
        let dx2l = g_lt - r * x2l * x2l - r * x2g * x2l - b2l_10 * p1 * x2l * st
            + (1.0 - k.xi) * b3_01 * p0 * x3 * st / nu
            + k.tau_rlx * x2g
            - k.tau_exc * x2l
            + self.nu_tk * feed * (above(xr, self.d2) - above(xr, self.d3))
            - p.eta_0 * x2l * k.tau2lt;
        let gm = generation(temp, r, self.d1);
        let dxl = gm - self.s_l * (xl - p.x_eq) - r * xl * xl;
        let dxr = gm - self.s_r * (xr - p.x_eq) - r * xr * xr;
        let (up, down) = self.rates_with(s, temp, &k);
        let dp0 = -up * p0 + down * p1;
        QpState {
            x_2lt: dx2l,
            x_2gt: dx2g,
            x_3: dx3,
            x_l: dxl,
            x_r: dxr,
            p_0: dp0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_vanishes_at_zero() {
        assert_eq!(generation(0.0, 7e6, 44.0), 0.0);
        assert!(generation(1e-3, 7e6, 44.0) >= 0.0);
    }

    #[test]
    fn split_sums_to_total() {
        for t in [0.05, 0.1, 0.2, 0.33] {
            let (a, b) = generation_split(t, 7e6, 44.0, 7.0);
            let g = generation(t, 7e6, 44.0);
            assert!((a + b - g).abs() <= 1e-14 * g);
        }
    }
}
