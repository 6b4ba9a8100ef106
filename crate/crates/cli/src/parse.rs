//! Parsers for the compact argument formats.

use std::path::Path;

use sbm_core::kernel::Atom;
use sbm_core::InitialCondition;

use crate::CliError;

/// `const:K`, `dirac:W` or `atoms:FILE` (JSON list of `{"weight", "location"}`).
pub fn initial_condition(spec: &str) -> Result<InitialCondition, CliError> {
    let (kind, value) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("initial condition '{spec}' is not of the form kind:value")))?;
    match kind {
        "const" => Ok(InitialCondition::constant(number(value)?)?),
        "dirac" => Ok(InitialCondition::dirac(number(value)?)),
        "atoms" => {
            let text = std::fs::read_to_string(Path::new(value))
                .map_err(|e| CliError::Usage(format!("cannot read atoms file '{value}': {e}")))?;
            let atoms: Vec<Atom> =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad atoms file '{value}': {e}")))?;
            Ok(InitialCondition::atomic(atoms)?)
        }
        _ => Err(CliError::Usage(format!("unknown initial condition kind '{kind}'"))),
    }
}

pub fn number(s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Usage(format!("'{s}' is not a number")))
}

/// Comma-separated reals.
pub fn reals(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(number).collect()
}

/// Comma-separated integers and inclusive ranges `a..b`.
pub fn orders(s: &str) -> Result<Vec<usize>, CliError> {
    let int = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("'{p}' is not an integer")))
    };
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => out.extend(int(a)?..=int(b)?),
            None => out.push(int(part)?),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub orders: Vec<usize>,
    pub times: Vec<f64>,
}

/// `n=1..5;t=0.1,1,10`; either part may be omitted to keep the default.
pub fn grid(s: &str, default: Grid) -> Result<Grid, CliError> {
    let mut g = default;
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("grid part '{part}' needs key=value")))?;
        match key.trim() {
            "n" => g.orders = orders(value)?,
            "t" => g.times = reals(value)?,
            other => return Err(CliError::Usage(format!("unknown grid key '{other}'"))),
        }
    }
    if g.orders.is_empty() || g.times.is_empty() {
        return Err(CliError::Usage("grid needs at least one order and one time".into()));
    }
    Ok(g)
}
