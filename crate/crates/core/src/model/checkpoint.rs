//! Parameter checkpoints: a CNDT file with the flat Θ vector and a sidecar
//! `key = value` text header describing the layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{load_tensor, save_tensor, TensorData};

use super::unet::{build_unet, ModelParams, PoolKind, UnetConfig};

/// Sidecar header for `params`.
pub fn layout_header(params: &ModelParams) -> String {
    let c = &params.config;
    let mut s = String::new();
    let _ = writeln!(s, "depth = {}", c.depth);
    let _ = writeln!(s, "base_features = {}", c.base_features);
    let _ = writeln!(s, "in_channels = {}", c.in_channels);
    let _ = writeln!(s, "pool = {}", c.pool.label());
    let _ = writeln!(s, "param_count = {}", params.theta.len());
    let _ = writeln!(s, "layers = {}", params.layout.len());
    for (i, l) in params.layout.iter().enumerate() {
        let _ = writeln!(
            s,
            "layer.{i} = {} {} {} {} {}",
            l.name, l.cout, l.cin, l.kernel, l.offset
        );
    }
    s
}

/// Parses `key = value` lines, ignoring blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", no + 1)));
        }
    }
    Ok(map)
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Config(format!("checkpoint header lacks {key:?}")))
}

fn get_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    get(map, key)?
        .parse()
        .map_err(|e| Error::Config(format!("checkpoint header {key}: {e}")))
}

/// Rebuilds the architecture described by a sidecar header and verifies the
/// recorded layout matches it.
pub fn params_from_header(map: &BTreeMap<String, String>) -> Result<ModelParams> {
    let config = UnetConfig {
        depth: get_usize(map, "depth")?,
        base_features: get_usize(map, "base_features")?,
        in_channels: get_usize(map, "in_channels")?,
        pool: PoolKind::parse(get(map, "pool")?)?,
    };
    let params = build_unet(config)?;
    if get_usize(map, "param_count")? != params.theta.len() {
        return Err(Error::Config("checkpoint param_count disagrees with architecture".into()));
    }
    for (i, l) in params.layout.iter().enumerate() {
        let expected = format!("{} {} {} {} {}", l.name, l.cout, l.cin, l.kernel, l.offset);
        if get(map, &format!("layer.{i}"))? != expected {
            return Err(Error::Config(format!("checkpoint layer {i} does not match {expected:?}")));
        }
    }
    Ok(params)
}

/// Writes `<stem>.cndt` and `<stem>.txt`.
pub fn save_params(dir: &Path, stem: &str, params: &ModelParams) -> Result<()> {
    save_tensor(
        dir.join(format!("{stem}.cndt")),
        &[params.theta.len()],
        &TensorData::F64(params.theta.clone()),
    )?;
    let path = dir.join(format!("{stem}.txt"));
    fs::write(&path, layout_header(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(dir: &Path, stem: &str) -> Result<ModelParams> {
    let path = dir.join(format!("{stem}.txt"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut params = params_from_header(&parse_key_values(&text)?)?;
    let file = load_tensor(dir.join(format!("{stem}.cndt")))?;
    if file.dims != [params.theta.len()] {
        return Err(Error::Malformed {
            path: dir.join(format!("{stem}.cndt")),
            reason: format!("dims {:?}, expected [{}]", file.dims, params.theta.len()),
        });
    }
    params.theta = file.data.into_f64()?;
    Ok(params)
}
