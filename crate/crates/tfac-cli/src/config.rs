//! Run configuration: flags merged over an optional flat
//! `key = value` file, then resolved against the documented defaults.
//!
//! Schema, one `key = value` per line (`#` starts a comment line;
//! a repeated key overwrites the earlier value):
//!
//! | key       | meaning                                      | default                  |
//! |-----------|----------------------------------------------|--------------------------|
//! | `command` | solve, study, kernels, gronwall, mesh-info   | required                 |
//! | `example` | benchmark problem name                       | required for solve/study |
//! | `alpha`   | fractional order, in (0, 1)                  | required (mesh-info: 0.5, unused) |
//! | `gamma`   | grading exponent, >= 1                       | 2/alpha + 0.1            |
//! | `nu`      | evaluation offset, in [0, 1/2)               | alpha/2                  |
//! | `kappa`   | interaction length, in (0, 1]                | the example's value      |
//! | `t-final` | end time, > 0                                | the example's value, else 1 |
//! | `n-steps` | time steps, >= 1                             | 32                       |
//! | `n-list`  | comma-separated step counts for studies      | 8,16,32,64               |
//! | `nx`, `ny`| spatial subdivisions per axis                | the h = 1/(2N) coupling; ny = nx |
//! | `k`       | element order, 0 or 1                        | 1                        |
//! | `delta`   | step-restriction safety factor, > 1          | 2                        |
//! | `seeds`   | random instances to draw, >= 1               | 100                      |
//! | `seed`    | base random seed                             | 1                        |
//! | `output`  | output base path (extension replaced)        | the command name         |
//!
//! Unknown keys are rejected.  Keys irrelevant to a command are
//! accepted and ignored, so one file can drive several commands.
//! Flags take precedence over file values, which take precedence
//! over defaults.  A resolved configuration echoed with
//! [`RunConfig::to_file_string`] and re-parsed resolves to an
//! identical configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tfac_core::verification::{ManufacturedCase, CASES};
use tfac_core::error::Result;
use tfac_core::Error;

/// Which front-end action to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Solve,
    Study,
    Kernels,
    Gronwall,
    MeshInfo,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Solve => "solve",
            CommandKind::Study => "study",
            CommandKind::Kernels => "kernels",
            CommandKind::Gronwall => "gronwall",
            CommandKind::MeshInfo => "mesh-info",
        }
    }

    fn parse(s: &str) -> Result<CommandKind> {
        match s {
            "solve" => Ok(CommandKind::Solve),
            "study" => Ok(CommandKind::Study),
            "kernels" => Ok(CommandKind::Kernels),
            "gronwall" => Ok(CommandKind::Gronwall),
            "mesh-info" => Ok(CommandKind::MeshInfo),
            _ => Err(Error::Config(format!(
                "unknown command `{s}`; expected solve, study, kernels, gronwall, or mesh-info"
            ))),
        }
    }
}

/// Partial configuration before merging: every field optional.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub command: Option<String>,
    pub example: Option<String>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub kappa: Option<f64>,
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub k: Option<usize>,
    pub delta: Option<f64>,
    pub seeds: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<String>,
}

impl RawConfig {
    /// Field-wise merge; `self` (the flags) wins over `fallback` (the file).
    pub fn or(self, fallback: RawConfig) -> RawConfig {
        RawConfig {
            command: self.command.or(fallback.command),
            example: self.example.or(fallback.example),
            alpha: self.alpha.or(fallback.alpha),
            gamma: self.gamma.or(fallback.gamma),
            nu: self.nu.or(fallback.nu),
            kappa: self.kappa.or(fallback.kappa),
            t_final: self.t_final.or(fallback.t_final),
            n_steps: self.n_steps.or(fallback.n_steps),
            n_list: self.n_list.or(fallback.n_list),
            nx: self.nx.or(fallback.nx),
            ny: self.ny.or(fallback.ny),
            k: self.k.or(fallback.k),
            delta: self.delta.or(fallback.delta),
            seeds: self.seeds.or(fallback.seeds),
            seed: self.seed.or(fallback.seed),
            output: self.output.or(fallback.output),
        }
    }
}

fn parse_value<T: core::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|part| parse_value(key, part.trim())).collect()
}

/// Parses the flat `key = value` format; rejects unknown keys.
pub fn parse_file_str(text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig::default();
    for (idx, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let at = |e: Error| Error::Config(format!("line {}: {e}", idx + 1));
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| at(Error::Config(format!("expected `key = value`, got `{s}`"))))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "command" => raw.command = Some(value.to_string()),
            "example" => raw.example = Some(value.to_string()),
            "alpha" => raw.alpha = Some(parse_value(key, value).map_err(at)?),
            "gamma" => raw.gamma = Some(parse_value(key, value).map_err(at)?),
            "nu" => raw.nu = Some(parse_value(key, value).map_err(at)?),
            "kappa" => raw.kappa = Some(parse_value(key, value).map_err(at)?),
            "t-final" => raw.t_final = Some(parse_value(key, value).map_err(at)?),
            "n-steps" => raw.n_steps = Some(parse_value(key, value).map_err(at)?),
            "n-list" => raw.n_list = Some(parse_list(key, value).map_err(at)?),
            "nx" => raw.nx = Some(parse_value(key, value).map_err(at)?),
            "ny" => raw.ny = Some(parse_value(key, value).map_err(at)?),
            "k" => raw.k = Some(parse_value(key, value).map_err(at)?),
            "delta" => raw.delta = Some(parse_value(key, value).map_err(at)?),
            "seeds" => raw.seeds = Some(parse_value(key, value).map_err(at)?),
            "seed" => raw.seed = Some(parse_value(key, value).map_err(at)?),
            "output" => raw.output = Some(value.to_string()),
            _ => return Err(at(Error::Config(format!("unknown configuration key `{key}`")))),
        }
    }
    Ok(raw)
}

/// Reads and parses a configuration file.
pub fn parse_file(path: &Path) -> Result<RawConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_file_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// A fully resolved run: every default applied, every domain checked.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub example: Option<String>,
    pub alpha: f64,
    pub gamma: f64,
    pub nu: f64,
    pub kappa: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub n_list: Vec<usize>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub k: usize,
    pub delta: f64,
    pub seeds: usize,
    pub seed: u64,
    pub output: Option<String>,
}

fn case_names() -> String {
    let names: Vec<&str> = CASES.iter().map(|c| c.name).collect();
    names.join(", ")
}

fn check(key: &str, value: f64, ok: bool, constraint: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("key {key} = {value} violates {constraint}")))
    }
}

/// Applies defaults and validates domains; errors name the offending key.
pub fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let command = match raw.command.as_deref() {
        Some(s) => CommandKind::parse(s)?,
        None => {
            return Err(Error::Config(String::from(
                "no command given (pass a subcommand or set `command =` in the config file)",
            )))
        }
    };
    let case = match (&raw.example, command) {
        (Some(name), _) => match ManufacturedCase::by_name(name) {
            Some(c) => Some(c),
            None => {
                return Err(Error::Config(format!(
                    "unknown example `{name}`; available: {}",
                    case_names()
                )))
            }
        },
        (None, CommandKind::Solve | CommandKind::Study) => {
            return Err(Error::Config(format!(
                "key example is required for {}; available: {}",
                command.as_str(),
                case_names()
            )))
        }
        (None, _) => None,
    };
    let alpha = match raw.alpha {
        Some(a) => a,
        None if command == CommandKind::MeshInfo => 0.5,
        None => return Err(Error::Config(String::from("key alpha is required"))),
    };
    check("alpha", alpha, alpha > 0.0 && alpha < 1.0, "0 < alpha < 1")?;
    let gamma = raw.gamma.unwrap_or(2.0 / alpha + 0.1);
    check("gamma", gamma, gamma >= 1.0, "gamma >= 1")?;
    let nu = raw.nu.unwrap_or(0.5 * alpha);
    check("nu", nu, (0.0..0.5).contains(&nu), "nu in [0, 1/2)")?;
    let kappa = raw.kappa.unwrap_or_else(|| case.map_or(1.0, |c| c.kappa));
    check("kappa", kappa, kappa > 0.0 && kappa <= 1.0, "0 < kappa <= 1")?;
    let t_final = raw.t_final.unwrap_or_else(|| case.map_or(1.0, |c| c.t_final));
    check("t-final", t_final, t_final > 0.0, "t-final > 0")?;
    let n_steps = raw.n_steps.unwrap_or(32);
    check("n-steps", n_steps as f64, n_steps >= 1, "n-steps >= 1")?;
    let n_list = raw.n_list.unwrap_or_else(|| vec![8, 16, 32, 64]);
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::Config(String::from(
            "key n-list must be a nonempty list of positive step counts",
        )));
    }
    let nx = raw.nx;
    if command == CommandKind::MeshInfo && nx.is_none() {
        return Err(Error::Config(String::from("key nx is required for mesh-info")));
    }
    if let Some(m) = nx {
        check("nx", m as f64, m >= 1, "nx >= 1")?;
    }
    let ny = raw.ny.or(nx);
    if let Some(m) = ny {
        check("ny", m as f64, m >= 1, "ny >= 1")?;
    }
    let k = raw.k.unwrap_or(1);
    check("k", k as f64, k <= 1, "k in {0, 1}")?;
    let delta = raw.delta.unwrap_or(2.0);
    check("delta", delta, delta > 1.0, "delta > 1")?;
    let seeds = raw.seeds.unwrap_or(100);
    check("seeds", seeds as f64, seeds >= 1, "seeds >= 1")?;
    let seed = raw.seed.unwrap_or(1);
    Ok(RunConfig {
        command,
        example: raw.example,
        alpha,
        gamma,
        nu,
        kappa,
        t_final,
        n_steps,
        n_list,
        nx,
        ny,
        k,
        delta,
        seeds,
        seed,
        output: raw.output,
    })
}

impl RunConfig {
    /// Echoes the resolved configuration in the file format.  The
    /// `{}` float formatting round-trips exactly, so re-parsing and
    /// re-resolving the result reproduces this configuration.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "command = {}", self.command.as_str()).unwrap();
        if let Some(e) = &self.example {
            writeln!(out, "example = {e}").unwrap();
        }
        writeln!(out, "alpha = {}", self.alpha).unwrap();
        writeln!(out, "gamma = {}", self.gamma).unwrap();
        writeln!(out, "nu = {}", self.nu).unwrap();
        writeln!(out, "kappa = {}", self.kappa).unwrap();
        writeln!(out, "t-final = {}", self.t_final).unwrap();
        writeln!(out, "n-steps = {}", self.n_steps).unwrap();
        let list: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        writeln!(out, "n-list = {}", list.join(",")).unwrap();
        if let Some(m) = self.nx {
            writeln!(out, "nx = {m}").unwrap();
        }
        if let Some(m) = self.ny {
            writeln!(out, "ny = {m}").unwrap();
        }
        writeln!(out, "k = {}", self.k).unwrap();
        writeln!(out, "delta = {}", self.delta).unwrap();
        writeln!(out, "seeds = {}", self.seeds).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        if let Some(o) = &self.output {
            writeln!(out, "output = {o}").unwrap();
        }
        out
    }
}
