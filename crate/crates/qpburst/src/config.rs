//! Array configuration: gap profile, geometry, material, model parameters and
//! per-qubit settings. Documents are TOML; see `docs/FORMATS.md`.

use serde::{Deserialize, Serialize};

use crate::constants::EV_PER_GHZ;
use crate::error::{Error, Result};

/// Superconducting gaps in GHz (E/h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapProfile {
    #[serde(default)]
    pub name: String,
    /// Gap of the thick junction lead M2.
    #[serde(default = "default_delta_m2")]
    pub delta_m2: f64,
    /// Δ_M3 − Δ_M2.
    pub d_delta_jj: f64,
    /// Δ_M2 − Δ_M1.
    pub d_delta_m1: f64,
}

fn default_delta_m2() -> f64 {
    44.0
}

impl GapProfile {
    pub fn delta2(&self) -> f64 {
        self.delta_m2
    }

    pub fn delta3(&self) -> f64 {
        self.delta_m2 + self.d_delta_jj
    }

    pub fn delta1(&self) -> f64 {
        self.delta_m2 - self.d_delta_m1
    }

    /// δ = Δ/(Δ+δΔ_JJ).
    pub fn delta_ratio(&self) -> f64 {
        derive_delta_ratio(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_m2 > 0.0) {
            return Err(Error::range("gap.delta_m2", "must be positive"));
        }
        if !(self.d_delta_jj >= 0.0) {
            return Err(Error::range("gap.d_delta_jj", "must be nonnegative"));
        }
        if !(self.d_delta_m1 >= 0.0) {
            return Err(Error::range("gap.d_delta_m1", "must be nonnegative"));
        }
        if self.d_delta_m1 >= self.delta_m2 {
            return Err(Error::range(
                "gap.d_delta_m1",
                format!("{} must be below delta_m2 = {}", self.d_delta_m1, self.delta_m2),
            ));
        }
        Ok(())
    }
}

pub fn derive_delta_ratio(profile: &GapProfile) -> f64 {
    profile.delta_m2 / (profile.delta_m2 + profile.d_delta_jj)
}

/// Film thicknesses in nm, lead footprint in µm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub h2: f64,
    pub h3: f64,
    #[serde(default = "default_h_m1")]
    pub h_m1: f64,
    /// Effective M2 thickness entering ν_tk; defaults to `h2`.
    #[serde(default)]
    pub h2_eff: Option<f64>,
    #[serde(default = "default_lead_area")]
    pub lead_area: f64,
    #[serde(default = "default_m1_area")]
    pub m1_area_l: f64,
    #[serde(default = "default_m1_area")]
    pub m1_area_r: f64,
    #[serde(default = "default_nu_s")]
    pub nu_s: f64,
}

fn default_h_m1() -> f64 {
    250.0
}
fn default_lead_area() -> f64 {
    1000.0
}
fn default_m1_area() -> f64 {
    1.0e5
}
fn default_nu_s() -> f64 {
    750.0
}

impl Geometry {
    pub fn h2_effective(&self) -> f64 {
        self.h2_eff.unwrap_or(self.h2)
    }
    /// Volumes in µm³.
    pub fn v2(&self) -> f64 {
        self.lead_area * self.h2 * 1e-3
    }
    pub fn v3(&self) -> f64 {
        self.lead_area * self.h3 * 1e-3
    }
    pub fn v_l(&self) -> f64 {
        self.m1_area_l * self.h_m1 * 1e-3
    }
    pub fn v_r(&self) -> f64 {
        self.m1_area_r * self.h_m1 * 1e-3
    }
    /// Thick-to-thin lead volume ratio.
    pub fn nu(&self) -> f64 {
        self.v2() / self.v3()
    }
    pub fn nu_th(&self) -> f64 {
        self.h_m1 / self.h3
    }
    pub fn nu_tk(&self) -> f64 {
        self.h_m1 / self.h2_effective()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("geometry.h2", self.h2),
            ("geometry.h3", self.h3),
            ("geometry.h_m1", self.h_m1),
            ("geometry.h2_eff", self.h2_effective()),
            ("geometry.lead_area", self.lead_area),
            ("geometry.m1_area_l", self.m1_area_l),
            ("geometry.m1_area_r", self.m1_area_r),
        ] {
            if !(v > 0.0) {
                return Err(Error::range(name, "must be positive"));
            }
        }
        if !(self.nu_s >= 0.0) {
            return Err(Error::range("geometry.nu_s", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Single-spin density of states of aluminium films, states/eV/µm³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConstants {
    #[serde(default = "default_dos")]
    pub dos: f64,
}

fn default_dos() -> f64 {
    1.72e10
}

impl Default for MaterialConstants {
    fn default() -> Self {
        Self { dos: default_dos() }
    }
}

impl MaterialConstants {
    /// Cooper-pair density n_cp = 2·ν·Δ in µm⁻³ for a gap given in GHz.
    pub fn n_cp(&self, gap_ghz: f64) -> f64 {
        2.0 * self.dos * gap_ghz * EV_PER_GHZ
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Slow,
    Fast,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Slow => Orientation::Fast,
            Orientation::Fast => Orientation::Slow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub r: f64,
    pub s_cap: f64,
    pub s_gnd: f64,
    pub s_bar_tilde: f64,
    pub eta_0: f64,
    pub eta_3: f64,
    pub x_eq: f64,
    /// Rate attached to the dimensionless M1 feed terms, 1/s.
    pub feed_rate: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            r: 7e6,
            s_cap: 500.0,
            s_gnd: 50e3,
            s_bar_tilde: 3e3,
            eta_0: 115.0,
            eta_3: 4000.0,
            x_eq: 1e-8,
            feed_rate: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("model.r", self.r),
            ("model.s_cap", self.s_cap),
            ("model.s_gnd", self.s_gnd),
            ("model.s_bar_tilde", self.s_bar_tilde),
            ("model.eta_0", self.eta_0),
            ("model.eta_3", self.eta_3),
            ("model.feed_rate", self.feed_rate),
        ] {
            if !(v >= 0.0) {
                return Err(Error::range(name, "must be nonnegative"));
            }
        }
        if !(self.x_eq > 0.0) {
            return Err(Error::range("model.x_eq", "must be positive"));
        }
        Ok(())
    }
}

/// Shape constants of the transient temperature drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveShape {
    pub fall1: f64,
    pub fall2: f64,
    pub tau_fall1: f64,
    pub tau_fall2: f64,
    pub tau_rise: f64,
    pub t0: f64,
}

impl Default for DriveShape {
    fn default() -> Self {
        Self {
            fall1: 1.0,
            fall2: 0.1,
            tau_fall1: 20e-6,
            tau_fall2: 350e-6,
            tau_rise: 5e-6,
            t0: 0.0,
        }
    }
}

impl DriveShape {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drive.tau_fall1", self.tau_fall1),
            ("drive.tau_fall2", self.tau_fall2),
            ("drive.tau_rise", self.tau_rise),
        ] {
            if !(v > 0.0) {
                return Err(Error::range(name, "must be positive"));
            }
        }
        if !(self.fall1 >= 0.0 && self.fall2 >= 0.0 && self.fall1 + self.fall2 > 0.0) {
            return Err(Error::range("drive.fall1/fall2", "must be nonnegative, not both zero"));
        }
        Ok(())
    }
}

/// Parameters of the default tunneling-rate kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    /// Γ̃ scale, 1/s.
    pub g_qp: f64,
    /// Cooper-pair count converting Γ̃ to Γ̄.
    pub n_ref: f64,
    /// Multiplier applied to τ_x⁻¹ (energies in units of the lead gap).
    pub tau_scale: f64,
    pub panels_lead3: usize,
    /// Temperature grid spacing of the kernel cache, K.
    pub grid_step: f64,
    /// Replaces the M1 gap as the target gap Δ_1 of the τ integrand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_1_override: Option<f64>,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            g_qp: 3e11,
            n_ref: 2.13e10,
            tau_scale: 0.1,
            panels_lead3: 2000,
            grid_step: 1e-3,
            delta_1_override: None,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_qp >= 0.0) {
            return Err(Error::range("kernel.g_qp", "must be nonnegative"));
        }
        if !(self.n_ref > 0.0) {
            return Err(Error::range("kernel.n_ref", "must be positive"));
        }
        if !(self.tau_scale >= 0.0) {
            return Err(Error::range("kernel.tau_scale", "must be nonnegative"));
        }
        if self.panels_lead3 == 0 {
            return Err(Error::range("kernel.panels_lead3", "must be at least 1"));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::range("kernel.grid_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitConfig {
    pub resonator_index: u32,
    /// GHz.
    pub f_qb: f64,
    pub orientation: Orientation,
    /// Non-parity relaxation rate, 1/s.
    pub gamma_10_ee: f64,
    /// Base temperature, K.
    #[serde(default = "default_t_base")]
    pub t_base: f64,
    #[serde(default = "default_t_scale")]
    pub t_scale: f64,
}

fn default_t_base() -> f64 {
    0.06
}
fn default_t_scale() -> f64 {
    0.426
}

impl QubitConfig {
    pub fn validate(&self, i: usize) -> Result<()> {
        if !(self.f_qb > 0.0) {
            return Err(Error::range(format!("qubits[{i}].f_qb"), "must be positive"));
        }
        if !(self.gamma_10_ee >= 0.0) {
            return Err(Error::range(format!("qubits[{i}].gamma_10_ee"), "must be nonnegative"));
        }
        if !(self.t_base > 0.0) {
            return Err(Error::range(format!("qubits[{i}].t_base"), "must be positive"));
        }
        if !(self.t_scale >= 0.0) {
            return Err(Error::range(format!("qubits[{i}].t_scale"), "must be nonnegative"));
        }
        if self.t_base >= crate::constants::T_PEAK_REF {
            return Err(Error::range(
                format!("qubits[{i}].t_base"),
                "must be below the 0.33 K drive reference",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub name: String,
    pub gap: GapProfile,
    pub geometry: Geometry,
    #[serde(default)]
    pub material: MaterialConstants,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub drive: DriveShape,
    #[serde(default)]
    pub kernel: KernelParams,
    pub qubits: Vec<QubitConfig>,
}

/// Dimensionless ratios consumed by the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedRatios {
    pub delta: f64,
    pub nu: f64,
    pub nu_th: f64,
    pub nu_tk: f64,
    pub nu_s: f64,
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        self.gap.validate()?;
        self.geometry.validate()?;
        if !(self.material.dos > 0.0) {
            return Err(Error::range("material.dos", "must be positive"));
        }
        self.model.validate()?;
        self.drive.validate()?;
        self.kernel.validate()?;
        if self.qubits.is_empty() {
            return Err(Error::MissingField("qubits".into()));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            q.validate(i)?;
        }
        Ok(())
    }

    pub fn ratios(&self) -> DerivedRatios {
        DerivedRatios {
            delta: self.gap.delta_ratio(),
            nu: self.geometry.nu(),
            nu_th: self.geometry.nu_th(),
            nu_tk: self.geometry.nu_tk(),
            nu_s: self.geometry.nu_s,
        }
    }

    /// (s_L, s_R) for a qubit orientation. Slow binds the capacitor-side
    /// trapping constant to the film feeding M2.
    pub fn trapping(&self, orientation: Orientation) -> (f64, f64) {
        match orientation {
            Orientation::Slow => (self.model.s_gnd, self.model.s_cap),
            Orientation::Fast => (self.model.s_cap, self.model.s_gnd),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parse and validate a TOML document, applying dotted-key overrides first.
pub fn load_array_config(source: &str, overrides: &[(String, String)]) -> Result<ArrayConfig> {
    let mut value: toml::Value = toml::from_str(source).map_err(|e| Error::Parse(e.to_string()))?;
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let cfg: ArrayConfig = value.try_into().map_err(map_de_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_array_config_file(path: &std::path::Path, overrides: &[(String, String)]) -> Result<ArrayConfig> {
    let text = std::fs::read_to_string(path)?;
    load_array_config(&text, overrides)
}

fn map_de_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(name) = rest.split('`').next() {
            return Error::MissingField(name.to_string());
        }
    }
    Error::Parse(e.to_string())
}

/// Set `a.b.0.c = value` inside a TOML tree. The value is parsed as a TOML
/// scalar when possible and kept as a string otherwise.
pub fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parsed = parse_scalar(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Invalid(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert((*part).to_string(), parsed);
                    return Ok(());
                }
                t.entry((*part).to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Invalid(format!("override `{key}`: `{part}` is not an index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::Invalid(format!("override `{key}`: index {idx} >= {len}")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Invalid(format!("override `{key}`: `{part}` is not a table"))),
        };
    }
    unreachable!()
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Invalid(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
