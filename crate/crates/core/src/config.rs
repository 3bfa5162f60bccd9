//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once; unknown keys are rejected with the offending line number.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 1024;
pub const MAX_SCHEDULE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Factorize,
    Diagonal,
    Stability,
    Counterexample,
    Channels,
    PosdefCheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Factorize,
        Command::Diagonal,
        Command::Stability,
        Command::Counterexample,
        Command::Channels,
        Command::PosdefCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Factorize => "factorize",
            Command::Diagonal => "diagonal",
            Command::Stability => "stability",
            Command::Counterexample => "counterexample",
            Command::Channels => "channels",
            Command::PosdefCheck => "posdef-check",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Source of the operator under study.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorSpec {
    Identity,
    /// `(I + L_κ)ᵀ(I + L_κ)` with the smooth Volterra kernel `κ e^{τ−t}`.
    Volterra,
    /// `diag(1 + k/n)`, `k = 0..n`.
    Diagonal,
    /// Seeded random symmetric positive definite matrix.
    RandomSpd,
    /// Oscillating Volterra family; only meaningful for `stability`.
    Roughening,
    /// Matrix read from a CSV file.
    Matrix(PathBuf),
}

impl OperatorSpec {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(OperatorSpec::Identity),
            "volterra" => Ok(OperatorSpec::Volterra),
            "diagonal" => Ok(OperatorSpec::Diagonal),
            "random-spd" => Ok(OperatorSpec::RandomSpd),
            "roughening" => Ok(OperatorSpec::Roughening),
            _ => match s.strip_prefix("matrix:") {
                Some(path) if !path.is_empty() => Ok(OperatorSpec::Matrix(PathBuf::from(path))),
                _ => Err(format!(
                    "unknown operator `{s}` (expected identity, volterra, diagonal, random-spd, roughening or matrix:<path>)"
                )),
            },
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSpec::Identity => f.write_str("identity"),
            OperatorSpec::Volterra => f.write_str("volterra"),
            OperatorSpec::Diagonal => f.write_str("diagonal"),
            OperatorSpec::RandomSpd => f.write_str("random-spd"),
            OperatorSpec::Roughening => f.write_str("roughening"),
            OperatorSpec::Matrix(p) => write!(f, "matrix:{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NestSpec {
    Standard,
    /// Nest descriptor file.
    File(PathBuf),
}

impl fmt::Display for NestSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NestSpec::Standard => f.write_str("standard"),
            NestSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub operator: OperatorSpec,
    pub nest: NestSpec,
    /// Dimension of built-in operators, `2..=1024`.
    pub n: usize,
    pub kappa: f64,
    /// Number of refinements after the coarsest partition, `0..=12`.
    pub schedule: usize,
    pub alphas: Vec<f64>,
    /// Cauchy threshold; `None` means `1e-8·(1 + ‖W‖)`.
    pub eps: Option<f64>,
    pub tol: f64,
    pub rank_tol: f64,
    pub channels: usize,
    pub channel_dim: usize,
    pub n_max: usize,
    pub truncation: usize,
    pub cases: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        ExperimentConfig {
            command,
            operator: OperatorSpec::Volterra,
            nest: NestSpec::Standard,
            n: 128,
            kappa: 0.3,
            schedule: 5,
            alphas: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            eps: None,
            tol: 1e-2,
            rank_tol: 1e-10,
            channels: 8,
            channel_dim: 16,
            n_max: 32,
            truncation: 64,
            cases: 200,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }

    /// Applies one `key = value` pair. The error message does not carry a
    /// line number; callers attach it.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "command" => self.command = value.parse()?,
            "operator" => self.operator = OperatorSpec::parse(value)?,
            "nest" => {
                self.nest = match value {
                    "standard" => NestSpec::Standard,
                    "" => return Err("nest must be `standard` or a descriptor path".into()),
                    path => NestSpec::File(PathBuf::from(path)),
                }
            }
            "n" => self.n = int_in(key, value, 2, MAX_DIM)?,
            "kappa" => {
                let k = real(key, value)?;
                if k.abs() >= 1.0 {
                    return Err(format!("kappa must satisfy |kappa| < 1, got {value}"));
                }
                self.kappa = k;
            }
            "schedule" => self.schedule = int_in(key, value, 0, MAX_SCHEDULE)?,
            "alphas" => {
                let alphas = value
                    .split(',')
                    .map(|a| real(key, a.trim()))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if alphas.is_empty() || alphas.iter().any(|&a| a < 1.0) {
                    return Err("alphas must be a non-empty list of values >= 1".into());
                }
                if alphas.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("alphas must be strictly increasing".into());
                }
                self.alphas = alphas;
            }
            "eps" => {
                self.eps = match value {
                    "auto" => None,
                    v => Some(positive(key, v)?),
                }
            }
            "tol" => self.tol = positive(key, value)?,
            "rank_tol" => self.rank_tol = positive(key, value)?,
            "channels" => self.channels = int_in(key, value, 1, 64)?,
            "channel_dim" => self.channel_dim = int_in(key, value, 1, MAX_DIM)?,
            "n_max" => self.n_max = int_in(key, value, 2, MAX_DIM)?,
            "truncation" => self.truncation = int_in(key, value, 3, MAX_DIM)?,
            "cases" => self.cases = int_in(key, value, 1, 100_000)?,
            "out" => {
                if value.is_empty() {
                    return Err("out must not be empty".into());
                }
                self.out = PathBuf::from(value);
            }
            "seed" => self.seed = value.parse().map_err(|_| format!("seed must be a non-negative integer, got `{value}`"))?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Cross-field checks that no single key can enforce.
    pub fn validate(&self) -> Result<()> {
        if self.channels * self.channel_dim > MAX_DIM {
            return Err(Error::Parameter(format!(
                "channels × channel_dim = {} exceeds {MAX_DIM}",
                self.channels * self.channel_dim
            )));
        }
        if self.truncation < self.n_max + 1 {
            return Err(Error::Parameter(format!(
                "truncation ({}) must exceed n_max ({})",
                self.truncation, self.n_max
            )));
        }
        Ok(())
    }

    /// Every key, in a form [`parse_config`] reads back unchanged.
    pub fn serialize(&self) -> String {
        let alphas: Vec<String> = self.alphas.iter().map(f64::to_string).collect();
        let eps = self.eps.map_or("auto".to_string(), |e| e.to_string());
        [
            format!("command = {}", self.command),
            format!("operator = {}", self.operator),
            format!("nest = {}", self.nest),
            format!("n = {}", self.n),
            format!("kappa = {}", self.kappa),
            format!("schedule = {}", self.schedule),
            format!("alphas = {}", alphas.join(",")),
            format!("eps = {eps}"),
            format!("tol = {}", self.tol),
            format!("rank_tol = {}", self.rank_tol),
            format!("channels = {}", self.channels),
            format!("channel_dim = {}", self.channel_dim),
            format!("n_max = {}", self.n_max),
            format!("truncation = {}", self.truncation),
            format!("cases = {}", self.cases),
            format!("out = {}", self.out.display()),
            format!("seed = {}", self.seed),
        ]
        .iter()
        .map(|l| format!("{l}\n"))
        .collect()
    }
}

/// One `key = value` entry with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits config text into entries, rejecting malformed and duplicate lines.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, found `{trimmed}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line,
                message: "missing key before `=`".into(),
            });
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

/// Builds a config from entries. `command` supplies the command when the
/// entries do not name one and overrides it when they do.
pub fn from_entries(entries: &[Entry], command: Option<Command>) -> Result<ExperimentConfig> {
    let named = entries.iter().find(|e| e.key == "command");
    let base = match (command, named) {
        (Some(c), _) => c,
        (None, Some(e)) => e.value.parse().map_err(|message| Error::Parse { line: e.line, message })?,
        (None, None) => {
            return Err(Error::Parse {
                line: 0,
                message: "missing required key `command`".into(),
            })
        }
    };
    let mut cfg = ExperimentConfig::new(base);
    for e in entries {
        if e.key == "command" && command.is_some() {
            continue;
        }
        cfg.set(&e.key, &e.value).map_err(|message| Error::Parse { line: e.line, message })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    from_entries(&parse_entries(text)?, None)
}

fn real(key: &str, value: &str) -> std::result::Result<f64, String> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{key} must be a finite number, got `{value}`")),
    }
}

fn positive(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v = real(key, value)?;
    if v <= 0.0 {
        return Err(format!("{key} must be positive, got {value}"));
    }
    Ok(v)
}

fn int_in(key: &str, value: &str, lo: usize, hi: usize) -> std::result::Result<usize, String> {
    match value.parse::<usize>() {
        Ok(v) if (lo..=hi).contains(&v) => Ok(v),
        _ => Err(format!("{key} must be an integer in {lo}..={hi}, got `{value}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_needs_command() {
        match parse_config("") {
            Err(Error::Parse { message, .. }) => assert!(message.contains("command")),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = from_entries(&parse_entries("").unwrap(), Some(Command::Diagonal)).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(Command::Diagonal));
    }

    #[test]
    fn negative_dimension_is_a_range_error() {
        match parse_config("command = factorize\n\nn = -1\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("2..=1024"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_config("command = factorize\nn = 1025").is_err());
        assert!(parse_config("command = factorize\nschedule = 13").is_err());
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        match parse_config("command = diagonal\nsize = 3") {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("size")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_config("command = diagonal\nn = 3\nn = 4"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_config("command = diagonal\njunk"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::new(Command::Channels);
        cfg.operator = OperatorSpec::Matrix(PathBuf::from("data/c.csv"));
        cfg.nest = NestSpec::File(PathBuf::from("nests/a.txt"));
        cfg.alphas = vec![1.5, 3.0, 1e3];
        cfg.eps = Some(1e-9);
        cfg.kappa = -0.25;
        cfg.seed = u64::MAX;
        assert_eq!(parse_config(&cfg.serialize()).unwrap(), cfg);
    }

    #[test]
    fn subcommand_overrides_file() {
        let e = parse_entries("# comment\ncommand = stability\nseed = 9").unwrap();
        let cfg = from_entries(&e, Some(Command::Factorize)).unwrap();
        assert_eq!(cfg.command, Command::Factorize);
        assert_eq!(cfg.seed, 9);
    }
}
