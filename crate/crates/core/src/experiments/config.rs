//! `key = value` experiment configuration files.
//!
//! One assignment per line, lists separated by commas, `#` starts a comment.
//! Keys left out keep the value of the named experiment's preset.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{ExperimentName, ExperimentSpec};
use crate::error::{Error, Result};

const KEYS: [&str; 13] = [
    "name",
    "lambda_h",
    "lambda_e",
    "p_h",
    "p_e",
    "d",
    "arrivals",
    "seed",
    "replicas",
    "warmup_fraction",
    "out",
    "base_lambda_h",
    "base_lambda_e",
];

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        line,
        msg: msg.into(),
    })
}

fn list<T>(
    line: usize,
    key: &str,
    value: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        match parse(item) {
            Some(x) => out.push(x),
            None => return err(line, format!("{key}: cannot parse `{item}`")),
        }
    }
    if out.is_empty() {
        return err(line, format!("{key}: empty list"));
    }
    Ok(out)
}

fn real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Integers may be written as `2000000` or `2e6`.
fn integer(s: &str) -> Option<u64> {
    s.parse::<u64>().ok().or_else(|| {
        let x = real(s)?;
        (x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64).then_some(x as u64)
    })
}

fn single<T: Copy>(line: usize, key: &str, v: Vec<T>) -> Result<T> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => err(line, format!("{key}: expected a single value")),
    }
}

fn check_all(
    line: usize,
    key: &str,
    v: &[f64],
    ok: impl Fn(f64) -> bool,
    range: &str,
) -> Result<()> {
    match v.iter().find(|&&x| !ok(x)) {
        Some(x) => err(line, format!("{key} = {x} is out of range {range}")),
        None => Ok(()),
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return err(line, format!("expected `key = value`, found `{content}`"));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
            return err(line, format!("unknown key `{key}`"));
        };
        if value.is_empty() {
            return err(line, format!("{key}: missing value"));
        }
        if let Some((first, _)) = entries.insert(key, (line, value)) {
            return err(line, format!("{key}: already set on line {first}"));
        }
    }
    let Some(&(name_line, name)) = entries.get("name") else {
        return err(0, "missing required key `name`");
    };
    let name: ExperimentName = match name.parse() {
        Ok(n) => n,
        Err(_) => return err(name_line, format!("unknown experiment name `{name}`")),
    };
    let mut spec = ExperimentSpec::preset(name);
    // Second-market rates of the merging grid may be zero.
    let lambda_h_min_ok = |x: f64| {
        if name == ExperimentName::Merging {
            x >= 0.0
        } else {
            x > 0.0
        }
    };

    for (&key, &(line, value)) in &entries {
        match key {
            "name" => {}
            "lambda_h" => {
                let v = list(line, key, value, real)?;
                check_all(
                    line,
                    key,
                    &v,
                    lambda_h_min_ok,
                    if name == ExperimentName::Merging {
                        "[0, inf)"
                    } else {
                        "(0, inf)"
                    },
                )?;
                spec.grid.lambda_h = v;
            }
            "lambda_e" => {
                let v = list(line, key, value, real)?;
                check_all(line, key, &v, |x| x >= 0.0, "[0, inf)")?;
                spec.grid.lambda_e = v;
            }
            "p_h" => {
                let v = list(line, key, value, real)?;
                check_all(line, key, &v, |x| x > 0.0 && x < 1.0, "(0, 1)")?;
                spec.grid.p_h = v;
            }
            "p_e" => {
                let v = list(line, key, value, real)?;
                check_all(line, key, &v, |x| x > 0.0 && x <= 1.0, "(0, 1]")?;
                spec.grid.p_e = v;
            }
            "d" => {
                let v = list(line, key, value, |s| {
                    integer(s).and_then(|x| u32::try_from(x).ok())
                })?;
                if v.contains(&0) {
                    return err(line, "d = 0 is out of range [1, inf)");
                }
                spec.grid.d = v;
            }
            "arrivals" => {
                let v = single(line, key, list(line, key, value, integer)?)?;
                if v < 2 {
                    return err(line, format!("arrivals = {v} is out of range [2, inf)"));
                }
                spec.rc.arrivals = v;
            }
            "seed" => spec.rc.seed = single(line, key, list(line, key, value, integer)?)?,
            "replicas" => {
                let v = single(line, key, list(line, key, value, integer)?)?;
                if v == 0 {
                    return err(line, "replicas = 0 is out of range [1, inf)");
                }
                spec.rc.replicas = v as usize;
            }
            "warmup_fraction" => {
                let v = single(line, key, list(line, key, value, real)?)?;
                check_all(line, key, &[v], |x| (0.0..1.0).contains(&x), "[0, 1)")?;
                spec.rc.warmup_fraction = v;
            }
            "out" => spec.out = Some(PathBuf::from(value)),
            "base_lambda_h" => {
                let v = single(line, key, list(line, key, value, real)?)?;
                check_all(line, key, &[v], |x| x > 0.0, "(0, inf)")?;
                spec.base_lambda_h = v;
            }
            "base_lambda_e" => {
                let v = single(line, key, list(line, key, value, real)?)?;
                check_all(line, key, &[v], |x| x >= 0.0, "[0, inf)")?;
                spec.base_lambda_e = v;
            }
            _ => unreachable!("key list checked above"),
        }
    }
    let max_ph = spec.grid.p_h.iter().copied().fold(f64::MIN, f64::max);
    let min_pe = spec.grid.p_e.iter().copied().fold(f64::MAX, f64::min);
    if max_ph > min_pe {
        let line = entries.get("p_h").or(entries.get("p_e")).map_or(0, |e| e.0);
        return err(line, format!("p_h = {max_ph} exceeds p_e = {min_pe}"));
    }
    Ok(spec)
}
