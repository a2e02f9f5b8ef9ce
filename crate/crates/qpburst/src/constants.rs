//! Physical constants (CODATA 2018 exact values) and unit helpers.
//!
//! Energies are carried as frequencies E/h in GHz throughout the crate.

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// k_B/h in GHz per kelvin.
pub const KB_OVER_H_GHZ: f64 = BOLTZMANN / PLANCK * 1e-9;

/// Energy of 1 GHz·h in eV.
pub const EV_PER_GHZ: f64 = PLANCK * 1e9 / ELEMENTARY_CHARGE;

/// Peak temperature reached by the drive when its scale is 1.
pub const T_PEAK_REF: f64 = 0.33;

/// Deposited energy per linac electron crossing the substrate (keV).
pub const KEV_PER_ELECTRON: f64 = 145.0;

/// Reference energy the linac traces are normalized to (keV).
pub const REFERENCE_ENERGY_KEV: f64 = 508.0;

/// Thermal energy k_B T in GHz.
#[inline]
pub fn kt_ghz(t_kelvin: f64) -> f64 {
    KB_OVER_H_GHZ * t_kelvin
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// e^{x²}·erfc(x), stable for large positive x.
pub fn erfcx(x: f64) -> f64 {
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Lentz continued fraction for erfc.
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 * 0.5;
        d = x + a * d;
        c = x + a / c;
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (f * std::f64::consts::PI.sqrt())
}
