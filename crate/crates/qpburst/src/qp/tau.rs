//! Phonon-mediated relaxation kernel τ_x⁻¹(T) of the three lead populations.
//!
//! Energies inside the double integral are measured in units of the lead gap
//! Δ_i. The density of states is the BCS form ε/√(ε²−Δ²); both square-root
//! edges are removed by substitution (ε = Δ_i + t², ε − ω = Δ_1 + q²).

use serde::{Deserialize, Serialize};

use crate::constants::{erf, erfc, erfcx, kt_ghz};
use crate::error::Result;
use crate::quadrature::{integrate, integrate_panels, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lead {
    /// Thin, high-gap lead M3.
    L3,
    /// M2 population above Δ3.
    L2Gt,
    /// M2 population below Δ3.
    L2Lt,
}

impl Lead {
    pub const ALL: [Lead; 3] = [Lead::L3, Lead::L2Gt, Lead::L2Lt];

    pub fn label(self) -> &'static str {
        match self {
            Lead::L3 => "3",
            Lead::L2Gt => "2>",
            Lead::L2Lt => "2<",
        }
    }
}

/// Gaps in GHz entering the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGaps {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Integration domain of one lead case, already scaled by Δ_i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauDomain {
    /// Δ_i in GHz.
    pub gap: f64,
    pub kt: f64,
    pub d1: f64,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub u_hi: f64,
    /// e^{−(ε_lo − Δ_i)/kT}/ρ_qp, combined so it stays finite as T → 0.
    pub edge_over_rho: f64,
}

impl TauDomain {
    pub fn new(t_kelvin: f64, lead: Lead, gaps: KernelGaps) -> Self {
        let kt_abs = kt_ghz(t_kelvin);
        let (gap, eps_lo, eps_hi, u_hi) = match lead {
            Lead::L3 => (gaps.d3, gaps.d3, 2.0 * gaps.d3, gaps.d3),
            Lead::L2Gt => (gaps.d2, gaps.d3, 4.0 * gaps.d3, gaps.d3),
            Lead::L2Lt => (gaps.d2, gaps.d2, gaps.d3, gaps.d2),
        };
        let x = ((gaps.d3 - gaps.d2).max(0.0) / kt_abs).sqrt();
        let edge_over_rho = match lead {
            Lead::L3 => 1.0,
            // e^{−x²}/erfc(x) = 1/erfcx(x)
            Lead::L2Gt => 1.0 / erfcx(x),
            Lead::L2Lt => 1.0 / erf(x),
        };
        Self {
            gap,
            kt: kt_abs / gap,
            d1: gaps.d1 / gap,
            eps_lo: eps_lo / gap,
            eps_hi: eps_hi / gap,
            u_hi: u_hi / gap,
            edge_over_rho,
        }
    }

    /// A(Δ_i,T) = 2√(2π)/√(Δ_i kT) · r/(8πΔ_i), in gap units.
    pub fn prefactor(&self, r: f64) -> f64 {
        2.0 * (2.0 * std::f64::consts::PI).sqrt() / self.kt.sqrt() * r / (8.0 * std::f64::consts::PI)
    }

    /// ω²(1+n(ω)) with ω ≥ 0.
    #[inline]
    pub fn bose(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let z = w / self.kt;
        w * self.kt * z / -(-z).exp_m1()
    }

    /// Inner integrand in q for fixed ε (includes the Jacobian 2q).
    #[inline]
    pub fn inner_integrand(&self, eps: f64, q: f64) -> f64 {
        let u = self.d1 + q * q;
        let w = eps - u;
        self.bose(w) * 2.0 * (eps * u - self.d1 * self.d1) / (eps * (u + self.d1).sqrt())
    }

    /// Outer weight in t for ε = 1 + t² (includes the Jacobian and the
    /// Boltzmann factor relative to the lower ε edge).
    #[inline]
    pub fn outer_weight(&self, t: f64) -> f64 {
        let eps = 1.0 + t * t;
        2.0 * eps / (eps + 1.0).sqrt() * (-(eps - self.eps_lo) / self.kt).exp()
    }

    pub fn q_max(&self) -> f64 {
        (self.u_hi - self.d1).max(0.0).sqrt()
    }

    pub fn t_of_eps(&self, eps: f64) -> f64 {
        (eps - 1.0).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TauOptions {
    pub panels_lead3: usize,
    pub rel_tol: f64,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self {
            panels_lead3: 2000,
            rel_tol: 1e-9,
        }
    }
}

/// τ_x⁻¹ for one lead, in units of `r` (1/s).
pub fn tau_x_inv(t_kelvin: f64, lead: Lead, gaps: KernelGaps, r: f64, opts: TauOptions) -> Result<f64> {
    let dom = TauDomain::new(t_kelvin, lead, gaps);
    let integral = thermal_integral(&dom, lead, opts)?;
    Ok(dom.prefactor(r) * integral * dom.edge_over_rho)
}

/// ∫dε∫dω N e^{−(ε−ε_lo)/kT} ω²(1+n) coherence, without A or ρ.
pub fn thermal_integral(dom: &TauDomain, lead: Lead, opts: TauOptions) -> Result<f64> {
    let qmax = dom.q_max();
    let inner_tol = Tolerance {
        abs: 0.0,
        rel: opts.rel_tol,
        max_subdivisions: 100,
    };
    let inner = |eps: f64| -> Result<f64> {
        Ok(integrate(|q| dom.inner_integrand(eps, q), 0.0, qmax, inner_tol)?.value)
    };
    // Boltzmann cutoff: beyond ~745 kT the weight underflows to zero anyway.
    let eps_cut = (dom.eps_lo + 745.0 * dom.kt).min(dom.eps_hi);
    let mut failure = None;
    let mut outer = |t: f64| -> f64 {
        let w = dom.outer_weight(t);
        if w == 0.0 {
            return 0.0;
        }
        match inner(1.0 + t * t) {
            Ok(v) => w * v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let outer_tol = Tolerance {
        abs: 0.0,
        rel: opts.rel_tol,
        max_subdivisions: 200,
    };
    let est = match lead {
        Lead::L3 => {
            // Panels are laid out evenly in ε over the full case range, then
            // mapped to t; panels past the Boltzmann cutoff contribute nothing.
            let n = opts.panels_lead3.max(1);
            let w = (dom.eps_hi - dom.eps_lo) / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                let lo = dom.eps_lo + w * i as f64;
                if lo >= eps_cut {
                    break;
                }
                let hi = if i + 1 == n { dom.eps_hi } else { dom.eps_lo + w * (i + 1) as f64 };
                total += integrate(&mut outer, dom.t_of_eps(lo), dom.t_of_eps(hi), outer_tol)?.value;
            }
            total
        }
        _ => integrate_panels(&mut outer, dom.t_of_eps(dom.eps_lo), dom.t_of_eps(eps_cut), 8, outer_tol)?.value,
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est)
}

/// Partition of M2 quasiparticles above/below Δ3: (erfc, erf) of √(δΔ_JJ/kT).
pub fn partition(t_kelvin: f64, d_delta_jj: f64) -> (f64, f64) {
    let x = (d_delta_jj / kt_ghz(t_kelvin)).sqrt();
    (erfc(x), erf(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaps() -> KernelGaps {
        KernelGaps { d1: 43.9, d2: 44.0, d3: 54.0 }
    }

    #[test]
    fn bose_limit_at_small_omega() {
        let d = TauDomain::new(0.1, Lead::L3, gaps());
        let w = 1e-9;
        assert!((d.bose(w) / (w * d.kt) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn positive_and_finite_across_range() {
        for lead in Lead::ALL {
            for t in [0.03, 0.06, 0.2, 0.33] {
                let v = tau_x_inv(t, lead, gaps(), 7e6, TauOptions { panels_lead3: 50, ..Default::default() }).unwrap();
                assert!(v.is_finite() && v > 0.0, "{lead:?} {t} {v}");
            }
        }
    }
}
