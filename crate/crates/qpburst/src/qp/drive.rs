use crate::config::DriveShape;
use crate::constants::T_PEAK_REF;

/// Transient substrate temperature seen by a qubit after an impact.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureDrive {
    pub t_base: f64,
    pub t_scale: f64,
    pub shape: DriveShape,
    delta_t: f64,
    t_peak: f64,
}

impl TemperatureDrive {
    pub fn new(t_base: f64, t_scale: f64, shape: DriveShape) -> Self {
        let (t_peak, delta_t) = shape_maximum(&shape);
        Self {
            t_base,
            t_scale,
            shape,
            delta_t,
            t_peak,
        }
    }

    /// Maximum of the unnormalized shape.
    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// A = (0.33 K − T_b)/ΔT.
    pub fn amplitude(&self) -> f64 {
        (T_PEAK_REF - self.t_base) / self.delta_t
    }

    /// Delay of the temperature maximum after t0.
    pub fn peak_delay(&self) -> f64 {
        self.t_peak
    }

    pub fn peak_temperature(&self) -> f64 {
        self.t_base + self.t_scale * (T_PEAK_REF - self.t_base)
    }

    pub fn temperature(&self, t: f64) -> f64 {
        let tau = t - self.shape.t0;
        if tau < 0.0 {
            return self.t_base;
        }
        self.t_base + self.t_scale * self.amplitude() * shape_value(&self.shape, tau)
    }
}

pub fn temperature(t: f64, drive: &TemperatureDrive) -> f64 {
    drive.temperature(t)
}

fn shape_value(s: &DriveShape, tau: f64) -> f64 {
    (s.fall1 * (-tau / s.tau_fall1).exp() + s.fall2 * (-tau / s.tau_fall2).exp()) * -(-tau / s.tau_rise).exp_m1()
}

/// (argmax, max) of the shape, by a log-spaced scan refined with golden sections.
fn shape_maximum(s: &DriveShape) -> (f64, f64) {
    let lo = 1e-4 * s.tau_rise.min(s.tau_fall1).min(s.tau_fall2);
    let hi = 50.0 * s.tau_rise.max(s.tau_fall1).max(s.tau_fall2);
    let n = 4000;
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let mut best = (lo, shape_value(s, lo));
    let mut grid = Vec::with_capacity(n + 1);
    let mut x = lo;
    for _ in 0..=n {
        grid.push(x);
        let v = shape_value(s, x);
        if v > best.1 {
            best = (x, v);
        }
        x *= ratio;
    }
    let i = grid.iter().position(|&g| g == best.0).unwrap_or(0);
    let mut a = if i == 0 { 0.0 } else { grid[i - 1] };
    let mut b = grid[(i + 1).min(n)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = shape_value(s, c);
    let mut fd = shape_value(s, d);
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = shape_value(s, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = shape_value(s, d);
        }
    }
    let t = 0.5 * (a + b);
    (t, shape_value(s, t).max(best.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_before_t0() {
        let d = TemperatureDrive::new(0.06, 1.0, DriveShape { t0: 1e-3, ..Default::default() });
        assert_eq!(d.temperature(0.0), 0.06);
        assert_eq!(d.temperature(1e-3 - 1e-12), 0.06);
    }

    #[test]
    fn decays_back_to_base() {
        let d = TemperatureDrive::new(0.06, 1.0, DriveShape::default());
        assert!((d.temperature(0.5) - 0.06).abs() < 1e-12);
    }

    #[test]
    fn dense_scan_never_exceeds_located_peak() {
        let d = TemperatureDrive::new(0.02, 1.0, DriveShape { fall2: 0.25, ..Default::default() });
        let peak = d.peak_temperature();
        for i in 0..200_000 {
            let t = i as f64 * 5e-9;
            assert!(d.temperature(t) <= peak + 1e-15);
        }
    }
}
