//! Flat `key = value` run configuration files.
//!
//! Keys mirror [`RunConfig`] field names. Penalties use dotted keys
//! (`penalty_x.kind`, `penalty_x.gamma`, `penalty_x.t`, `penalty_x.b`,
//! `penalty_x.a`); `gamma_x` / `gamma_y` are accepted as shorthands for the
//! penalty strengths. Blank lines and `#` comments are ignored.

use std::path::Path;

use llfmc_core::{PenaltyKind, PenaltySpec, RunConfig};

use crate::error::{Error, Result};

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn set_penalty(p: &mut PenaltySpec, field: &str, key: &str, value: &str) -> Result<()> {
    match field {
        "kind" => p.kind = value.parse::<PenaltyKind>()?,
        "gamma" => p.gamma = number(key, value)?,
        "t" => p.t = number(key, value)?,
        "b" => p.b = number(key, value)?,
        "a" => p.a = number(key, value)?,
        _ => return Err(Error::Config(format!("unknown key '{key}'"))),
    }
    Ok(())
}

/// Applies one `key = value` assignment.
pub fn apply(config: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let (key, value) = (key.trim(), value.trim());
    match key {
        "rank" | "d" => config.rank = number(key, value)?,
        "alpha" => config.alpha = number(key, value)?,
        "eta" => config.eta = number(key, value)?,
        "gamma_x" => config.set_gamma_x(number(key, value)?),
        "gamma_y" => config.set_gamma_y(number(key, value)?),
        "max_iter" => config.max_iter = number(key, value)?,
        "tol1" => config.tol1 = number(key, value)?,
        "tol2" => config.tol2 = number(key, value)?,
        "cg_residual_scale" => config.cg_residual_scale = number(key, value)?,
        "cg_residual_exponent" => config.cg_residual_exponent = number(key, value)?,
        "cg_max_inner" => config.cg_max_inner = number(key, value)?,
        "init_scale" => config.init_scale = number(key, value)?,
        "descent_sigma_x" => config.descent_sigma_x = number(key, value)?,
        "descent_sigma_y" => config.descent_sigma_y = number(key, value)?,
        "divergence_bound" => config.divergence_bound = number(key, value)?,
        "seed" => config.seed = number(key, value)?,
        _ => {
            if let Some(field) = key.strip_prefix("penalty_x.") {
                set_penalty(&mut config.penalty_x, field, key, value)?;
            } else if let Some(field) = key.strip_prefix("penalty_y.") {
                set_penalty(&mut config.penalty_y, field, key, value)?;
            } else {
                return Err(Error::Config(format!("unknown key '{key}'")));
            }
        }
    }
    Ok(())
}

/// Parses a whole file's text on top of `base`.
pub fn parse_into(base: RunConfig, text: &str) -> Result<RunConfig> {
    let mut config = base;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", k + 1)))?;
        apply(&mut config, key, value).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("line {}: {msg}", k + 1)),
            other => other,
        })?;
    }
    Ok(config)
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_into(RunConfig::default(), &text)
}

fn penalty_lines(out: &mut String, side: &str, p: &PenaltySpec) {
    out.push_str(&format!("penalty_{side}.kind = {}\n", p.kind));
    out.push_str(&format!("penalty_{side}.gamma = {:?}\n", p.gamma));
    match p.kind {
        PenaltyKind::Mcp => out.push_str(&format!("penalty_{side}.t = {:?}\n", p.t)),
        PenaltyKind::MType => out.push_str(&format!("penalty_{side}.b = {:?}\n", p.b)),
        PenaltyKind::Scad => out.push_str(&format!("penalty_{side}.a = {:?}\n", p.a)),
        _ => {}
    }
}

/// The configuration in file form; [`parse_into`] of the result on the
/// defaults reproduces `config`.
pub fn echo(config: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("rank = {}\n", config.rank));
    out.push_str(&format!("alpha = {:?}\n", config.alpha));
    out.push_str(&format!("eta = {:?}\n", config.eta));
    penalty_lines(&mut out, "x", &config.penalty_x);
    penalty_lines(&mut out, "y", &config.penalty_y);
    out.push_str(&format!("max_iter = {}\n", config.max_iter));
    out.push_str(&format!("tol1 = {:?}\n", config.tol1));
    out.push_str(&format!("tol2 = {:?}\n", config.tol2));
    out.push_str(&format!("cg_residual_scale = {:?}\n", config.cg_residual_scale));
    out.push_str(&format!("cg_residual_exponent = {:?}\n", config.cg_residual_exponent));
    out.push_str(&format!("cg_max_inner = {}\n", config.cg_max_inner));
    out.push_str(&format!("init_scale = {:?}\n", config.init_scale));
    out.push_str(&format!("descent_sigma_x = {:?}\n", config.descent_sigma_x));
    out.push_str(&format!("descent_sigma_y = {:?}\n", config.descent_sigma_y));
    out.push_str(&format!("divergence_bound = {:?}\n", config.divergence_bound));
    out.push_str(&format!("seed = {}\n", config.seed));
    out
}
