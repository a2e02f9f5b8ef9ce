use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qpburst::plot::LinePlot;
use qpburst::Error;
use serde::{Deserialize, Serialize};

use crate::settings::{resolve, write_effective};
use crate::{ensure_out, require_inputs, Common};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    pub width: u32,
    pub height: u32,
    /// Columns to draw; empty picks them from the CSV schema.
    pub y: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_y: Option<bool>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            width: 800,
            height: 500,
            y: Vec::new(),
            x: None,
            log_y: None,
        }
    }
}

/// (x, ys, log_y) for the known output schemas.
fn schema(headers: &[String]) -> Option<(&'static str, Vec<&'static str>, bool)> {
    let has = |c: &str| headers.iter().any(|h| h == c);
    if has("gamma_up") && has("gamma_down") && has("t") {
        Some(("t", vec!["gamma_up", "gamma_down"], true))
    } else if has("dp") && has("t") {
        Some(("t", vec!["dp"], false))
    } else if has("delta_f_hz") && has("time") {
        Some(("time", vec!["delta_f_hz"], false))
    } else if has("temperature_k") && has("t") {
        Some(("t", vec!["temperature_k"], false))
    } else if has("threshold") && has("rate") {
        Some(("threshold", vec!["rate"], true))
    } else if has("offset") && has("mean") && has("t") {
        Some(("t", vec!["mean"], false))
    } else {
        None
    }
}

#[derive(Serialize)]
struct PanelRow {
    file: String,
    x: String,
    y: String,
    log_y: bool,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

fn panel(path: &Path, cfg: &PlotConfig, out: &Path) -> Result<PanelRow> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(Error::Csv)
        .with_context(|| path.display().to_string())?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(Error::Csv)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Format(format!("{}: empty CSV", path.display())).into());
    }
    let auto = schema(&headers);
    let (x, ys, log_y) = match (&cfg.x, cfg.y.is_empty(), auto) {
        (Some(x), false, a) => (
            x.clone(),
            cfg.y.clone(),
            cfg.log_y.unwrap_or(a.is_some_and(|a| a.2)),
        ),
        (None, false, Some(a)) => (a.0.to_string(), cfg.y.clone(), cfg.log_y.unwrap_or(a.2)),
        (xo, true, Some(a)) => (
            xo.clone().unwrap_or_else(|| a.0.to_string()),
            a.1.iter().map(|s| s.to_string()).collect(),
            cfg.log_y.unwrap_or(a.2),
        ),
        _ => {
            return Err(Error::Format(format!(
                "{}: unrecognized columns {:?}; set `x` and `y`",
                path.display(),
                headers
            ))
            .into())
        }
    };
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: no column `{name}`", path.display())).into())
    };
    let ix = col(&x)?;
    let iys = ys.iter().map(|y| col(y)).collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut cols = vec![Vec::new(); iys.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(Error::Csv)?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            // Gaps in a series (failed bins, undefined temperatures) are not drawn.
            if s.is_empty() || s == "undefined" {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| {
                Error::Format(format!("{}: `{s}` is not a number", path.display())).into()
            })
        };
        xs.push(num(ix)?);
        for (c, &i) in cols.iter_mut().zip(&iys) {
            c.push(num(i)?);
        }
    }
    if xs.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())).into());
    }
    let mut plot = LinePlot::new(cfg.width, cfg.height);
    plot.log_y = log_y;
    for c in &cols {
        plot.add(&xs, c)?;
    }
    let b = plot.bounds()?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".into());
    plot.save(&out.join(format!("{stem}.png")))?;
    Ok(PanelRow {
        file: format!("{stem}.png"),
        x,
        y: ys.join(";"),
        log_y,
        x_min: b.x.0,
        x_max: b.x.1,
        y_min: b.y.0,
        y_max: b.y.1,
    })
}

pub fn plot(common: &Common, inputs: &[PathBuf]) -> Result<()> {
    let cfg: PlotConfig = resolve(
        &PlotConfig::default(),
        common.config.as_deref(),
        &common.sets,
    )?;
    require_inputs(inputs)?;
    ensure_out(&common.out)?;
    write_effective(&common.out, &cfg)?;
    let rows = inputs
        .iter()
        .map(|p| panel(p, &cfg, &common.out))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(common.out.join("plots.csv")).map_err(Error::Csv)?;
    for r in &rows {
        w.serialize(r).map_err(Error::Csv)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}
