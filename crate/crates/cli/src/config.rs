//! Simulation config files.
//!
//! One `key = value` pair per line. Blank lines and lines starting with `#`
//! are ignored. Keys:
//!
//! | key           | value                                          | default        |
//! |---------------|------------------------------------------------|----------------|
//! | `family`      | `count` or `binary`                            | required       |
//! | `scenario`    | `s1`, `s2`, `s3` or `highdim`                  | required       |
//! | `n`           | training sample size                           | required       |
//! | `p`           | number of covariates                           | required       |
//! | `n_reps`      | replicates                                     | 100            |
//! | `test_size`   | rows per test set                              | 10000          |
//! | `seed`        | base RNG seed (overridden by `ITR_SEED`)       | 1              |
//! | `estimators`  | comma-separated method names                   | UE, PDR1, PDR2 |
//! | `tuning`      | `qic`, `cv[:k]`, `ipw_value`, `fixed:λ`, `rate:e` | qic         |
//! | `ridge_lambda`| fixed ridge strength for PDR_ridge             | CV             |
//! | `threads`     | worker threads                                 | all cores      |
//! | `out`         | output directory                               | `.`            |

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use itr_core::{Family, Method, Scenario, SimConfig, Tuning};

use crate::{CliError, CliResult};

pub const SEED_ENV: &str = "ITR_SEED";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub out: Option<PathBuf>,
}

const KEYS: [&str; 12] = [
    "family",
    "scenario",
    "n",
    "p",
    "n_reps",
    "test_size",
    "seed",
    "estimators",
    "tuning",
    "ridge_lambda",
    "threads",
    "out",
];

fn at(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::input(format!("config line {line}: {msg}"))
}

fn value<T: FromStr>(entries: &HashMap<String, (usize, String)>, key: &str, what: &str) -> CliResult<Option<T>> {
    match entries.get(key) {
        None => Ok(None),
        Some((line, raw)) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| at(*line, format!("{key}: expected {what}, got '{raw}'"))),
    }
}

fn required<T: FromStr>(entries: &HashMap<String, (usize, String)>, key: &str, what: &str) -> CliResult<T> {
    value(entries, key, what)?.ok_or_else(|| CliError::input(format!("config: missing required key '{key}'")))
}

/// Parses config text. `seed_override` replaces the `seed` key when present.
pub fn parse(text: &str, seed_override: Option<&str>) -> CliResult<RunConfig> {
    let mut entries: HashMap<String, (usize, String)> = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, val) = t
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{t}'")))?;
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(at(line, format!("unknown key '{key}'")));
        }
        if let Some((first, _)) = entries.get(&key) {
            return Err(at(line, format!("'{key}' already set on line {first}")));
        }
        entries.insert(key, (line, val.trim().to_string()));
    }

    let family: Family = required(&entries, "family", "count or binary")?;
    let scenario: Scenario = required(&entries, "scenario", "s1, s2, s3 or highdim")?;
    let n: usize = required(&entries, "n", "a positive integer")?;
    let p: usize = required(&entries, "p", "a positive integer")?;
    let mut sim = SimConfig::new(family, scenario, n, p);
    if let Some(v) = value(&entries, "n_reps", "a positive integer")? {
        sim.n_reps = v;
    }
    if let Some(v) = value(&entries, "test_size", "a positive integer")? {
        sim.test_size = v;
    }
    if let Some(v) = value(&entries, "seed", "an unsigned integer")? {
        sim.seed = v;
    }
    if let Some(v) = value::<Tuning>(&entries, "tuning", "qic, cv[:k], ipw_value, fixed:<λ> or rate:<e>")? {
        sim.tuning = v;
    }
    if let Some(v) = value::<f64>(&entries, "ridge_lambda", "a positive number")? {
        sim.ridge.lambda = Some(v);
    }
    if let Some(v) = value(&entries, "threads", "a positive integer")? {
        sim.threads = Some(v);
    }
    if let Some((line, raw)) = entries.get("estimators") {
        sim.estimators = raw
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Method>().map_err(|e| at(*line, e)))
            .collect::<CliResult<_>>()?;
    }
    if let Some(s) = seed_override {
        sim.seed = s
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("{SEED_ENV}: expected an unsigned integer, got '{s}'")))?;
    }
    sim.validate().map_err(|e| {
        let msg = e.to_string();
        let msg = msg.strip_prefix("configuration error: ").unwrap_or(&msg);
        let key = ["n_reps", "test_size", "threads", "estimators", "n", "p"].into_iter().find(|k| {
            msg.starts_with(&format!("{k} ")) || msg.contains(&format!(" {k} ")) || msg.contains(&format!("{k} = "))
        });
        match key.and_then(|k| entries.get(k)) {
            Some((line, _)) => at(*line, e),
            None => CliError::input(format!("config: {e}")),
        }
    })?;
    let out = entries.get("out").map(|(_, v)| PathBuf::from(v));
    Ok(RunConfig { sim, out })
}

/// Reads a config file, applying `ITR_SEED` from the environment.
pub fn load(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    let env = std::env::var(SEED_ENV).ok();
    parse(&text, env.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "family = count\nscenario = s2\nn = 200\np = 6\n";

    #[test]
    fn defaults_and_overrides() {
        let c = parse(BASE, None).unwrap();
        assert_eq!(c.sim.n_reps, 100);
        assert_eq!(c.sim.seed, 1);
        assert!(c.out.is_none());
        let text = format!("# comment\n{BASE}\nestimators = UE, PDR_ridge\ntuning = cv:3\nseed = 9\nout = here\n");
        let c = parse(&text, Some("42")).unwrap();
        assert_eq!(c.sim.estimators, vec![Method::Ue, Method::PdrRidge]);
        assert_eq!(c.sim.tuning, Tuning::Cv { folds: 3 });
        assert_eq!(c.sim.seed, 42);
        assert_eq!(c.out, Some(PathBuf::from("here")));
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse(&format!("{BASE}n_reps = 0\n"), None).unwrap_err();
        assert!(e.message.starts_with("config line 5:"), "{}", e.message);
        let e = parse(&format!("{BASE}colour = red\n"), None).unwrap_err();
        assert!(e.message.contains("line 5") && e.message.contains("colour"));
        let e = parse("family = count\nscenario = s1\nn = ten\np = 5\n", None).unwrap_err();
        assert!(e.message.contains("line 3"));
        let e = parse(&format!("{BASE}n = 3\n"), None).unwrap_err();
        assert!(e.message.contains("already set on line 3"));
        let e = parse("family count\n", None).unwrap_err();
        assert!(e.message.contains("line 1"));
        assert!(parse("family = count\n", None).unwrap_err().message.contains("scenario"));
        assert!(parse(BASE, Some("x")).is_err());
    }
}
