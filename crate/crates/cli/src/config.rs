//! Flat `key = value` configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment            (also allowed after a value)
//! key = value
//! ```
//!
//! Keys are lowercase with underscores. Later entries override earlier ones
//! and command-line `--key value` pairs override the file. `n3sq` accepts a
//! fraction token such as `1/3`.

use dipolar_core::{PhysicalParams, TrapSpec};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: expected `key = value`, got `{line}`")]
    Syntax { origin: String, line: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`epsilon` is not a parameter: the confinement width is fixed by the model (ε² = 1/(2π))")]
    FixedEpsilon,
    #[error("key `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("keys `{0}` and `{1}` are mutually exclusive")]
    Conflict(String, String),
    #[error("flag `{0}` has no value")]
    DanglingFlag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GnConstant,
    Stability,
    GroundState,
    CollapseScan,
    SymbolDump,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GnConstant => "gn-constant",
            Command::Stability => "stability",
            Command::GroundState => "ground-state",
            Command::CollapseScan => "collapse-scan",
            Command::SymbolDump => "symbol-dump",
        }
    }
}

/// Polarization component squared, remembering the token it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct N3Squared {
    pub value: f64,
    pub token: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolChoice {
    HighFreq,
    Fab,
    Quasi2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub box_len: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub l_max: f64,
    pub l_min: f64,
    pub l_count: usize,
    pub trap_column: bool,
    pub tune: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub tol_rel: f64,
    pub tol_grad: f64,
    pub tol_energy: f64,
    pub max_iter: usize,
    pub borderline_analysis: bool,
    pub exact_borderline: bool,
    pub seed: u64,
    pub perturb: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub n3sq: Option<N3Squared>,
    pub trap: TrapSpec,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub grid: GridConfig,
    pub scan: ScanConfig,
    pub solver: SolverConfig,
    pub symbol: SymbolChoice,
    pub out: PathBuf,
    pub stamp: bool,
    /// Every accepted entry with its final raw value, sorted by key.
    pub entries: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "a",
    "b",
    "beta",
    "borderline_analysis",
    "box",
    "exact_borderline",
    "l_count",
    "l_max",
    "l_min",
    "lambda",
    "max_iter",
    "n",
    "n3",
    "n3sq",
    "omega1",
    "omega2",
    "out",
    "perturb",
    "quartic_c",
    "seed",
    "symbol",
    "tol",
    "tol_energy",
    "tol_grad",
    "tol_rel",
    "trap",
    "trap_column",
    "tune",
];

/// Parses the text of a config file into raw entries.
pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin: format!("{origin}:{}", i + 1),
                line: raw.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax {
                origin: format!("{origin}:{}", i + 1),
                line: raw.to_string(),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Turns `--key value` pairs into raw entries; `--key-name` maps to `key_name`.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(name) = flag.strip_prefix("--") else {
            return Err(ConfigError::Syntax {
                origin: "command line".into(),
                line: flag.clone(),
            });
        };
        let (key, value) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => match it.next() {
                Some(v) => (name.to_string(), v.clone()),
                None => return Err(ConfigError::DanglingFlag(flag.clone())),
            },
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Builds a validated configuration from an optional file and overrides.
pub fn parse_config(
    command: Command,
    path: Option<&Path>,
    overrides: &[String],
) -> Result<RunConfig, ConfigError> {
    let mut entries = Vec::new();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
            path: p.to_path_buf(),
            source,
        })?;
        entries.extend(parse_entries(&text, &p.display().to_string())?);
    }
    entries.extend(parse_flags(overrides)?);
    build(command, entries)
}

pub fn build(command: Command, entries: Vec<(String, String)>) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (k, v) in entries {
        if k == "epsilon" || k == "eps" {
            return Err(ConfigError::FixedEpsilon);
        }
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k));
        }
        map.insert(k, v);
    }
    let r = Reader { map: &map };

    if map.contains_key("n3") && map.contains_key("n3sq") {
        return Err(ConfigError::Conflict("n3".into(), "n3sq".into()));
    }
    let n3sq = match (r.get("n3"), r.get("n3sq")) {
        (Some(t), None) => {
            let n3 = parse_real("n3", t)?;
            if n3.abs() > 1.0 {
                return Err(invalid("n3", "must satisfy |n3| ≤ 1"));
            }
            Some(N3Squared {
                value: n3 * n3,
                token: t.to_string(),
            })
        }
        (None, Some(t)) => {
            let v = parse_fraction("n3sq", t)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid("n3sq", "must lie in [0, 1]"));
            }
            Some(N3Squared {
                value: v,
                token: t.to_string(),
            })
        }
        _ => None,
    };

    let trap = match r.get("trap").unwrap_or("harmonic") {
        "harmonic" => TrapSpec::Harmonic {
            omega1: r.real("omega1")?.unwrap_or(1.0),
            omega2: r.real("omega2")?.unwrap_or(1.0),
        },
        "quartic" => TrapSpec::Quartic {
            c: r.real("quartic_c")?.unwrap_or(1.0),
        },
        "free" => TrapSpec::Free,
        other => {
            return Err(invalid(
                "trap",
                &format!("`{other}` is not one of harmonic, quartic, free"),
            ))
        }
    };
    trap.validate().map_err(|e| invalid("trap", &e.to_string()))?;

    let symbol = match r.get("symbol").unwrap_or("high_freq") {
        "high_freq" => SymbolChoice::HighFreq,
        "fab" => SymbolChoice::Fab,
        "quasi2d" => SymbolChoice::Quasi2D,
        other => {
            return Err(invalid(
                "symbol",
                &format!("`{other}` is not one of high_freq, fab, quasi2d"),
            ))
        }
    };

    let default_n = match command {
        Command::SymbolDump => 8,
        _ => 128,
    };
    let grid = GridConfig {
        n: r.count("n")?.unwrap_or(default_n),
        box_len: r.positive("box")?,
    };
    let min_n = if command == Command::SymbolDump { 2 } else { 16 };
    if grid.n % 2 == 1 || grid.n < min_n {
        return Err(invalid("n", &format!("must be even and at least {min_n}")));
    }

    let scan = ScanConfig {
        l_max: r.positive("l_max")?.unwrap_or(0.4),
        l_min: r.positive("l_min")?.unwrap_or(0.04),
        l_count: r.count("l_count")?.unwrap_or(8),
        trap_column: r.flag("trap_column")?.unwrap_or(false),
        tune: r.flag("tune")?.unwrap_or(false),
    };
    if scan.l_min >= scan.l_max {
        return Err(invalid("l_min", "must be smaller than l_max"));
    }
    if scan.l_count < 4 + scan.trap_column as usize {
        return Err(invalid("l_count", "the scaling fit needs at least 4 points (5 with trap_column)"));
    }

    let solver = SolverConfig {
        tol: r.positive("tol")?.unwrap_or(1e-2),
        tol_rel: r.positive("tol_rel")?.unwrap_or(1e-9),
        tol_grad: r.positive("tol_grad")?.unwrap_or(1e-6),
        tol_energy: r.positive("tol_energy")?.unwrap_or(1e-10),
        max_iter: r.count("max_iter")?.unwrap_or(20_000),
        borderline_analysis: r.flag("borderline_analysis")?.unwrap_or(false),
        exact_borderline: r.flag("exact_borderline")?.unwrap_or(false),
        seed: match r.get("seed") {
            Some(t) => t
                .parse()
                .map_err(|_| invalid("seed", "must be a nonnegative integer"))?,
            None => 0,
        },
        perturb: r.real("perturb")?.unwrap_or(0.0),
    };
    if solver.max_iter == 0 {
        return Err(invalid("max_iter", "must be positive"));
    }
    if !(0.0..1.0).contains(&solver.perturb) {
        return Err(invalid("perturb", "must lie in [0, 1)"));
    }

    let cfg = RunConfig {
        command,
        beta: r.real("beta")?,
        lambda: r.real("lambda")?,
        n3sq,
        trap,
        a: r.real("a")?,
        b: r.real("b")?,
        grid,
        scan,
        solver,
        symbol,
        out: PathBuf::from(r.get("out").unwrap_or(command.name())),
        stamp: false,
        entries: map.clone(),
    };
    check_command(&cfg)?;
    Ok(cfg)
}

fn check_command(cfg: &RunConfig) -> Result<(), ConfigError> {
    let physical = |cfg: &RunConfig, need_beta: bool| -> Result<(), ConfigError> {
        if need_beta && cfg.beta.is_none() {
            return Err(ConfigError::Missing("beta".into()));
        }
        if cfg.lambda.is_none() {
            return Err(ConfigError::Missing("lambda".into()));
        }
        if cfg.n3sq.is_none() {
            return Err(ConfigError::Missing("n3sq".into()));
        }
        Ok(())
    };
    match cfg.command {
        Command::GnConstant => match (cfg.a, cfg.b) {
            (Some(_), Some(_)) => {
                if cfg.beta.is_some() || cfg.lambda.is_some() {
                    return Err(ConfigError::Conflict("a".into(), "lambda".into()));
                }
            }
            (None, None) => physical(cfg, true)?,
            (Some(_), None) => return Err(ConfigError::Missing("b".into())),
            (None, Some(_)) => return Err(ConfigError::Missing("a".into())),
        },
        Command::Stability => physical(cfg, !cfg.scan.tune)?,
        Command::GroundState => physical(cfg, true)?,
        Command::CollapseScan => physical(cfg, !cfg.scan.tune)?,
        Command::SymbolDump => match cfg.symbol {
            SymbolChoice::Fab if cfg.a.is_none() || cfg.b.is_none() => {
                return Err(ConfigError::Missing(if cfg.a.is_none() { "a" } else { "b" }.into()))
            }
            SymbolChoice::Quasi2D if cfg.n3sq.is_none() => {
                return Err(ConfigError::Missing("n3sq".into()))
            }
            _ => {}
        },
    }
    if let (Some(beta), Some(lambda), Some(n)) = (cfg.beta, cfg.lambda, &cfg.n3sq) {
        PhysicalParams::with_n3_squared(beta, lambda, n.value, cfg.trap.clone())
            .map_err(|e| invalid("beta", &e.to_string()))?;
    }
    Ok(())
}

impl RunConfig {
    /// Physical parameters with `beta` replaced when the caller tuned it.
    pub fn physical(&self, beta: Option<f64>) -> Option<PhysicalParams> {
        let beta = beta.or(self.beta)?;
        PhysicalParams::with_n3_squared(beta, self.lambda?, self.n3sq.as_ref()?.value, self.trap.clone()).ok()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.command.name())?;
        for (k, v) in &self.entries {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn get(&self, k: &str) -> Option<&str> {
        self.map.get(k).map(String::as_str)
    }
    fn real(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        self.get(k).map(|t| parse_real(k, t)).transpose()
    }
    fn positive(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.real(k)? {
            Some(v) if v <= 0.0 => Err(invalid(k, "must be positive")),
            other => Ok(other),
        }
    }
    fn count(&self, k: &str) -> Result<Option<usize>, ConfigError> {
        self.get(k)
            .map(|t| t.parse().map_err(|_| invalid(k, "must be a nonnegative integer")))
            .transpose()
    }
    fn flag(&self, k: &str) -> Result<Option<bool>, ConfigError> {
        self.get(k)
            .map(|t| match t {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(invalid(k, "must be true or false")),
            })
            .transpose()
    }
}

fn invalid(key: &str, msg: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

fn parse_real(key: &str, t: &str) -> Result<f64, ConfigError> {
    let v: f64 = t
        .parse()
        .map_err(|_| invalid(key, &format!("`{t}` is not a number")))?;
    if !v.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(v)
}

/// Decimal or `p/q` with integer `p`, `q > 0`.
pub fn parse_fraction(key: &str, t: &str) -> Result<f64, ConfigError> {
    match t.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p
                .trim()
                .parse()
                .map_err(|_| invalid(key, &format!("`{t}`: numerator must be an integer")))?;
            let q: i64 = q
                .trim()
                .parse()
                .map_err(|_| invalid(key, &format!("`{t}`: denominator must be an integer")))?;
            if q <= 0 {
                return Err(invalid(key, "denominator must be positive"));
            }
            Ok(p as f64 / q as f64)
        }
        None => parse_real(key, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn stability_flags() {
        let c = parse_config(Command::Stability, None, &flags("--beta 0 --lambda 7 --n3sq 1")).unwrap();
        assert_eq!(c.n3sq.unwrap().value, 1.0);
        assert_eq!(c.beta, Some(0.0));
    }

    #[test]
    fn third_token_gives_zero_sign_factor() {
        let c = parse_config(Command::Stability, None, &flags("--beta 0 --lambda 7 --n3sq 1/3")).unwrap();
        let n = c.n3sq.unwrap();
        assert_eq!(n.token, "1/3");
        assert_eq!(1.0 - 3.0 * n.value, 0.0);
    }

    #[test]
    fn epsilon_is_rejected_with_reason() {
        let e = build(Command::Stability, parse_entries("epsilon = 0.4\n", "cfg").unwrap()).unwrap_err();
        assert!(matches!(e, ConfigError::FixedEpsilon));
        assert!(e.to_string().contains("fixed by the model"));
    }

    #[test]
    fn unknown_key_named_in_error() {
        let e = build(Command::Stability, vec![("gamma".into(), "1".into())]).unwrap_err();
        assert_eq!(e.to_string(), "unknown key `gamma`");
    }

    #[test]
    fn file_grammar_and_override_order() {
        let text = "# header\nbeta = 1  # inline\n\nlambda=2\nn3 = 0.5\n";
        let mut e = parse_entries(text, "cfg").unwrap();
        e.extend(parse_flags(&flags("--beta=3")).unwrap());
        let c = build(Command::GroundState, e).unwrap();
        assert_eq!(c.beta, Some(3.0));
        assert_eq!(c.n3sq.unwrap().value, 0.25);
        assert!(parse_entries("beta 1\n", "cfg").is_err());
    }

    #[test]
    fn validation_errors_name_keys() {
        let bad = [
            "--a 1",
            "--a 1 --b 0 --n 15",
            "--a 1 --b 0 --tol -1",
            "--a 1 --b 0 --trap square",
            "--beta 0 --lambda 1 --n3 2",
        ];
        for s in bad {
            let e = parse_config(Command::GnConstant, None, &flags(s)).unwrap_err();
            assert!(!e.to_string().is_empty(), "{s}");
        }
        assert!(parse_fraction("n3sq", "1/0").is_err());
        assert!(parse_config(Command::GnConstant, None, &flags("--a")).is_err());
    }
}
