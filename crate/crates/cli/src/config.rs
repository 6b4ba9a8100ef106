//! Flat `key = value` configuration files.
//!
//! Keys are long flag names without the leading dashes. Values from the file
//! are spliced into the argument list only for flags not given on the command
//! line, so flags always win.

use std::collections::BTreeMap;
use std::ffi::OsString;

use crate::CliError;

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Expands `--config FILE` (after the subcommand) into explicit flags.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    let mut kept = Vec::with_capacity(args.len());
    let mut i = 0;
    while i < strs.len() {
        if strs[i] == "--config" {
            path = Some(
                strs.get(i + 1)
                    .cloned()
                    .ok_or_else(|| CliError::Usage("--config needs a file".into()))?,
            );
            i += 2;
            continue;
        }
        if let Some(p) = strs[i].strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            kept.push(args[i].clone());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(kept);
    };
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config '{path}': {e}")))?;
    let given = |key: &str| {
        let flag = format!("--{key}");
        strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    for (key, value) in parse(&text)? {
        if given(&key) {
            continue;
        }
        match value.as_str() {
            "true" => kept.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                kept.push(format!("--{key}").into());
                kept.push(value.into());
            }
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_flat_files() {
        let m = parse("# comment\nseed = 4\nquad_budget=100 # trailing\n\n--t = 2").unwrap();
        assert_eq!(m["seed"], "4");
        assert_eq!(m["quad-budget"], "100");
        assert_eq!(m["t"], "2");
        assert!(parse("novalue").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "seed = 4\nt = 2\nweighted = true\nquiet = false\n").unwrap();
        let p = path.to_str().unwrap();
        let out = expand(os(&["sbm", "moment", "--config", p, "--seed", "9"])).unwrap();
        assert_eq!(out, os(&["sbm", "moment", "--seed", "9", "--t", "2", "--weighted"]));
        let out = expand(os(&["sbm", "moment", &format!("--config={p}"), "--t=3"])).unwrap();
        assert_eq!(out, os(&["sbm", "moment", "--t=3", "--seed", "4", "--weighted"]));
        assert_eq!(expand(os(&["sbm", "x"])).unwrap(), os(&["sbm", "x"]));
    }
}
