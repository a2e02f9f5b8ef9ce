//! Command configs: defaults, then the `--config` file, then `--set`
//! overrides. The merged result is written back as `effective_config.toml`.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use qpburst::config::{apply_override, parse_override};
use qpburst::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

pub fn read_toml(path: &Path) -> Result<toml::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(toml::Value::Table(table))
}

/// Recursively overlay `top` onto `base`; arrays and scalars replace.
pub fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn keys(v: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    if let toml::Value::Table(t) = v {
        for (k, v) in t {
            let p = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            keys(v, &p, out);
            out.insert(p);
        }
    }
}

pub fn apply_sets(root: &mut toml::Value, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = parse_override(s)?;
        apply_override(root, &k, &v)?;
    }
    Ok(())
}

/// Deserialize `merged` as `T`, rejecting keys that `T` does not keep.
pub fn decode<T: Serialize + DeserializeOwned>(merged: toml::Value) -> Result<T> {
    let out: T = merged
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let back = toml::Value::try_from(&out).map_err(|e| Error::Parse(e.to_string()))?;
    let (mut given, mut kept) = (BTreeSet::new(), BTreeSet::new());
    keys(&merged, "", &mut given);
    keys(&back, "", &mut kept);
    if let Some(k) = given.difference(&kept).next() {
        return Err(Error::Parse(format!("unknown config key `{k}`")).into());
    }
    Ok(out)
}

pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    sets: &[String],
) -> Result<T> {
    let mut v = toml::Value::try_from(defaults).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(p) = file {
        merge(&mut v, read_toml(p)?);
    }
    apply_sets(&mut v, sets)?;
    decode(v)
}

pub fn write_effective<T: Serialize>(out_dir: &Path, cfg: &T) -> Result<()> {
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(out_dir.join(EFFECTIVE_CONFIG), text).map_err(Error::Io)?;
    Ok(())
}
