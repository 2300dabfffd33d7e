//! Scenario configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment            (also after a value)
//! [section]            optional; keys may appear before any section
//! key = value
//! ```
//!
//! Keys and the section each belongs to:
//!
//! | section     | keys                                   |
//! |-------------|----------------------------------------|
//! | `domain`    | `lx`, `ly`                             |
//! | `mesh`      | `nx`, `ny`                             |
//! | `model`     | `nu`, `zeta`, `forcing`                |
//! | `actuators` | `m`, `r`, `norm`                       |
//! | `feedback`  | `lambda`, `cu`                         |
//! | `initial`   | `yhat0`, `y0`                          |
//! | `time`      | `k`, `T_inf`, `stride`                 |
//! | `run`       | `controller`, `beta`, `mu`, `seed`     |
//! | `rhc`       | `T`, `delta`, `tol`, `j_max`, `warm_start` |
//!
//! `cu` takes a number, `inf`, or `e^x`. Initial states take a number,
//! `zeta1`/`zeta2`/`zeta3`, `bilinear` (`10 - 20 x₁x₂`) or `linear`
//! (`-10 x₁ + x₂`). `controller = rhc` needs an `[rhc]` section, even an
//! empty one.

use std::collections::HashMap;
use std::fmt;

use schloegl_core::actuators::ControlNorm;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    pub(crate) fn general(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forcing {
    Zero,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Constant(f64),
    /// One of the reaction roots, 1-based.
    Root(usize),
    Bilinear,
    Linear,
}

impl InitialState {
    pub fn eval(&self, zeta: [f64; 3], x: [f64; 2]) -> f64 {
        match *self {
            InitialState::Constant(c) => c,
            InitialState::Root(i) => zeta[i - 1],
            InitialState::Bilinear => 10.0 - 20.0 * x[0] * x[1],
            InitialState::Linear => -10.0 * x[0] + x[1],
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Constant(c) => write!(f, "{c}"),
            InitialState::Root(i) => write!(f, "zeta{i}"),
            InitialState::Bilinear => f.write_str("bilinear"),
            InitialState::Linear => f.write_str("linear"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    None,
    Saturated,
    Rhc,
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Controller::None => "none",
            Controller::Saturated => "saturated",
            Controller::Rhc => "rhc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhcBlock {
    pub horizon: f64,
    pub delta: f64,
    pub tol: f64,
    pub j_max: usize,
    /// Seed windows after the first with the shifted previous solution.
    pub warm_start: bool,
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Default,
    Line(usize),
    /// Set after parsing (command-line override, preset adjustment, sweep).
    Override,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub nu: f64,
    pub zeta: [f64; 3],
    pub forcing: Forcing,
    pub m: usize,
    pub r: f64,
    pub norm: ControlNorm,
    pub lambda: f64,
    pub cu: f64,
    pub yhat0: InitialState,
    pub y0: InitialState,
    pub k: f64,
    pub t_inf: f64,
    pub stride: usize,
    pub controller: Controller,
    pub beta: f64,
    pub mu: f64,
    pub seed: u64,
    pub rhc: RhcBlock,
    /// Whether an `[rhc]` section was present.
    pub has_rhc_block: bool,
    source: String,
    provenance: HashMap<&'static str, Provenance>,
}

const KEYS: &[(&str, &str)] = &[
    ("lx", "domain"),
    ("ly", "domain"),
    ("nx", "mesh"),
    ("ny", "mesh"),
    ("nu", "model"),
    ("zeta", "model"),
    ("forcing", "model"),
    ("m", "actuators"),
    ("r", "actuators"),
    ("norm", "actuators"),
    ("lambda", "feedback"),
    ("cu", "feedback"),
    ("yhat0", "initial"),
    ("y0", "initial"),
    ("k", "time"),
    ("T_inf", "time"),
    ("stride", "time"),
    ("controller", "run"),
    ("beta", "run"),
    ("mu", "run"),
    ("seed", "run"),
    ("T", "rhc"),
    ("delta", "rhc"),
    ("tol", "rhc"),
    ("j_max", "rhc"),
    ("warm_start", "rhc"),
];

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            lx: 1.0,
            ly: 1.0,
            nx: 57,
            ny: 57,
            nu: 0.1,
            zeta: [-1.0, 0.0, 2.0],
            forcing: Forcing::Zero,
            m: 3,
            r: 0.3,
            norm: ControlNorm::Max,
            lambda: 175.0,
            cu: f64::INFINITY,
            yhat0: InitialState::Root(2),
            y0: InitialState::Root(3),
            k: 1e-3,
            t_inf: 10.0,
            stride: 10,
            controller: Controller::None,
            beta: 1e-3,
            mu: 0.1,
            seed: 0,
            rhc: RhcBlock {
                horizon: 1.25,
                delta: 0.5,
                tol: 1e-4,
                j_max: 500,
                warm_start: false,
            },
            has_rhc_block: false,
            source: String::new(),
            provenance: KEYS.iter().map(|(k, _)| (*k, Provenance::Default)).collect(),
        }
    }
}

fn parse_f64(v: &str, line: usize) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| ConfigError::at(line, format!("expected a number, found `{v}`")))?;
    if !x.is_finite() {
        return Err(ConfigError::at(line, format!("expected a finite number, found `{v}`")));
    }
    Ok(x)
}

fn parse_usize(v: &str, line: usize) -> Result<usize, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, format!("expected a nonnegative integer, found `{v}`")))
}

/// `inf`, `e^x` or a plain number.
pub fn parse_bound(v: &str) -> Result<f64, String> {
    let v = v.trim();
    if v.eq_ignore_ascii_case("inf") || v.eq_ignore_ascii_case("e^inf") {
        return Ok(f64::INFINITY);
    }
    let x = if let Some(e) = v.strip_prefix("e^") {
        let e: f64 = e.parse().map_err(|_| format!("bad exponent in `{v}`"))?;
        e.exp()
    } else {
        v.parse::<f64>().map_err(|_| format!("expected a number, `inf` or `e^x`, found `{v}`"))?
    };
    if !(x >= 0.0) || x.is_nan() {
        return Err(format!("bound must be nonnegative, found `{v}`"));
    }
    Ok(x)
}

fn parse_initial(v: &str, line: usize) -> Result<InitialState, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "zeta1" => Ok(InitialState::Root(1)),
        "zeta2" => Ok(InitialState::Root(2)),
        "zeta3" => Ok(InitialState::Root(3)),
        "bilinear" => Ok(InitialState::Bilinear),
        "linear" => Ok(InitialState::Linear),
        other => {
            let c = other.strip_prefix("const:").unwrap_or(other);
            parse_f64(c, line)
                .map(InitialState::Constant)
                .map_err(|_| ConfigError::at(line, format!("unknown initial state `{v}`")))
        }
    }
}

fn require(cond: bool, line: usize, msg: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::at(line, msg))
    }
}

fn is_multiple(a: f64, b: f64) -> bool {
    let q = a / b;
    (q - q.round()).abs() <= 1e-9 * q.abs().max(1.0) && q.round() >= 1.0
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig {
            source: text.to_string(),
            ..Default::default()
        };
        let mut section: Option<String> = None;
        let mut seen: HashMap<&'static str, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                    .trim();
                if !KEYS.iter().any(|(_, s)| *s == name) {
                    return Err(ConfigError::at(line, format!("unknown section `{name}`")));
                }
                if name == "rhc" {
                    cfg.has_rhc_block = true;
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let &(key, home) = KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| ConfigError::at(line, format!("unknown key `{key}`")))?;
            if let Some(s) = &section {
                if s != home {
                    return Err(ConfigError::at(
                        line,
                        format!("key `{key}` belongs in section [{home}], not [{s}]"),
                    ));
                }
            }
            if let Some(first) = seen.insert(key, line) {
                return Err(ConfigError::at(line, format!("key `{key}` already set on line {first}")));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("missing value for `{key}`")));
            }
            cfg.set(key, value, line)?;
            cfg.provenance.insert(key, Provenance::Line(line));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<(), ConfigError> {
        match key {
            "lx" => self.lx = parse_f64(v, line)?,
            "ly" => self.ly = parse_f64(v, line)?,
            "nx" => self.nx = parse_usize(v, line)?,
            "ny" => self.ny = parse_usize(v, line)?,
            "nu" => self.nu = parse_f64(v, line)?,
            "zeta" => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(ConfigError::at(line, "zeta takes three comma-separated numbers"));
                }
                for (z, p) in self.zeta.iter_mut().zip(parts) {
                    *z = parse_f64(p, line)?;
                }
            }
            "forcing" => {
                self.forcing = match v.to_ascii_lowercase().as_str() {
                    "zero" | "none" => Forcing::Zero,
                    "periodic" => Forcing::Periodic,
                    _ => return Err(ConfigError::at(line, format!("unknown forcing `{v}`"))),
                }
            }
            "m" => self.m = parse_usize(v, line)?,
            "r" => self.r = parse_f64(v, line)?,
            "norm" => {
                self.norm = match v.to_ascii_lowercase().as_str() {
                    "euclidean" => ControlNorm::Euclidean,
                    "max" => ControlNorm::Max,
                    _ => return Err(ConfigError::at(line, format!("unknown norm `{v}`"))),
                }
            }
            "lambda" => self.lambda = parse_f64(v, line)?,
            "cu" => self.cu = parse_bound(v).map_err(|e| ConfigError::at(line, e))?,
            "yhat0" => self.yhat0 = parse_initial(v, line)?,
            "y0" => self.y0 = parse_initial(v, line)?,
            "k" => self.k = parse_f64(v, line)?,
            "T_inf" => self.t_inf = parse_f64(v, line)?,
            "stride" => self.stride = parse_usize(v, line)?,
            "controller" => {
                self.controller = match v.to_ascii_lowercase().as_str() {
                    "none" => Controller::None,
                    "saturated" => Controller::Saturated,
                    "rhc" => Controller::Rhc,
                    _ => return Err(ConfigError::at(line, format!("unknown controller `{v}`"))),
                }
            }
            "beta" => self.beta = parse_f64(v, line)?,
            "mu" => self.mu = parse_f64(v, line)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| ConfigError::at(line, format!("expected an integer seed, found `{v}`")))?
            }
            "T" => self.rhc.horizon = parse_f64(v, line)?,
            "delta" => self.rhc.delta = parse_f64(v, line)?,
            "tol" => self.rhc.tol = parse_f64(v, line)?,
            "j_max" => self.rhc.j_max = parse_usize(v, line)?,
            "warm_start" => {
                self.rhc.warm_start = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(ConfigError::at(line, format!("expected true or false, found `{v}`"))),
                }
            }
            _ => unreachable!("key table and setter disagree on `{key}`"),
        }
        Ok(())
    }

    fn line_of(&self, key: &str) -> usize {
        match self.provenance.get(key) {
            Some(Provenance::Line(l)) => *l,
            _ => 0,
        }
    }

    /// Range and consistency checks. Errors point at the offending line,
    /// or line 0 when the value is a default.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = |k| self.line_of(k);
        require(self.lx > 0.0, l("lx"), "lx must be positive")?;
        require(self.ly > 0.0, l("ly"), "ly must be positive")?;
        require(self.nx >= 1, l("nx"), "nx must be at least 1")?;
        require(self.ny >= 1, l("ny"), "ny must be at least 1")?;
        require(self.nu > 0.0, l("nu"), "nu must be positive")?;
        require(self.m >= 1, l("m"), "m must be at least 1")?;
        require(self.r > 0.0 && self.r < 1.0, l("r"), "r must lie in (0, 1)")?;
        require(self.lambda >= 0.0, l("lambda"), "lambda must be nonnegative")?;
        require(self.k > 0.0, l("k"), "k must be positive")?;
        require(self.t_inf > 0.0, l("T_inf"), "T_inf must be positive")?;
        require(is_multiple(self.t_inf, self.k), l("T_inf"), "T_inf must be a multiple of k")?;
        require(self.stride >= 1, l("stride"), "stride must be at least 1")?;
        require(self.beta >= 0.0, l("beta"), "beta must be nonnegative")?;
        require(self.mu > 0.0, l("mu"), "mu must be positive")?;
        let rhc = &self.rhc;
        require(rhc.delta > 0.0, l("delta"), "delta must be positive")?;
        require(rhc.horizon > rhc.delta, l("T"), "T must exceed delta")?;
        require(rhc.tol > 0.0, l("tol"), "tol must be positive")?;
        require(rhc.j_max >= 1, l("j_max"), "j_max must be at least 1")?;
        if self.controller == Controller::Rhc {
            require(self.has_rhc_block, l("controller"), "controller = rhc needs an [rhc] section")?;
            require(is_multiple(rhc.delta, self.k), l("delta"), "delta must be a multiple of k")?;
            require(is_multiple(rhc.horizon, self.k), l("T"), "T must be a multiple of k")?;
            require(
                is_multiple(self.t_inf, rhc.delta),
                l("T_inf"),
                "T_inf must be a multiple of delta",
            )?;
        }
        Ok(())
    }

    pub fn provenance(&self, key: &str) -> Option<Provenance> {
        self.provenance.get(key).copied()
    }

    /// Marks `key` as set after parsing; used together with direct field edits.
    pub fn mark_override(&mut self, key: &str) {
        if let Some(&(k, _)) = KEYS.iter().find(|(k, _)| *k == key) {
            self.provenance.insert(k, Provenance::Override);
        }
    }

    /// Coarse mesh for quick runs.
    pub fn coarsen_for_ci(&mut self) {
        self.nx = 16;
        self.ny = 16;
        self.mark_override("nx");
        self.mark_override("ny");
    }

    fn value_of(&self, key: &str) -> String {
        let bound = |c: f64| if c.is_infinite() { "inf".to_string() } else { format!("{c}") };
        match key {
            "lx" => format!("{}", self.lx),
            "ly" => format!("{}", self.ly),
            "nx" => self.nx.to_string(),
            "ny" => self.ny.to_string(),
            "nu" => format!("{}", self.nu),
            "zeta" => format!("{}, {}, {}", self.zeta[0], self.zeta[1], self.zeta[2]),
            "forcing" => match self.forcing {
                Forcing::Zero => "zero".into(),
                Forcing::Periodic => "periodic".into(),
            },
            "m" => self.m.to_string(),
            "r" => format!("{}", self.r),
            "norm" => match self.norm {
                ControlNorm::Euclidean => "euclidean".into(),
                ControlNorm::Max => "max".into(),
            },
            "lambda" => format!("{}", self.lambda),
            "cu" => bound(self.cu),
            "yhat0" => self.yhat0.to_string(),
            "y0" => self.y0.to_string(),
            "k" => format!("{}", self.k),
            "T_inf" => format!("{}", self.t_inf),
            "stride" => self.stride.to_string(),
            "controller" => self.controller.to_string(),
            "beta" => format!("{}", self.beta),
            "mu" => format!("{}", self.mu),
            "seed" => self.seed.to_string(),
            "T" => format!("{}", self.rhc.horizon),
            "delta" => format!("{}", self.rhc.delta),
            "tol" => format!("{}", self.rhc.tol),
            "j_max" => self.rhc.j_max.to_string(),
            "warm_start" => self.rhc.warm_start.to_string(),
            _ => unreachable!(),
        }
    }

    /// The input text unchanged, followed by a commented block listing every
    /// resolved value and where it came from. Parsing the snapshot gives
    /// back the same configuration.
    pub fn snapshot(&self) -> String {
        let mut out = self.source.clone();
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("\n# ---- resolved configuration ----\n");
        for (key, _) in KEYS {
            let origin = match self.provenance[key] {
                Provenance::Default => "default".to_string(),
                Provenance::Line(l) => format!("line {l}"),
                Provenance::Override => "override".to_string(),
            };
            out.push_str(&format!("# {key} = {}    ({origin})\n", self.value_of(key)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ScenarioConfig::parse("nx = 8\nny = 8\ncontroller = none\n").unwrap();
        assert_eq!(cfg.nu, 0.1);
        assert_eq!(cfg.zeta, [-1.0, 0.0, 2.0]);
        assert_eq!(cfg.k, 1e-3);
        assert_eq!(cfg.provenance("nu"), Some(Provenance::Default));
        assert_eq!(cfg.provenance("nx"), Some(Provenance::Line(1)));
    }

    #[test]
    fn bounds_in_exponent_notation() {
        assert!((parse_bound("e^3.5").unwrap() - 33.11545195869231).abs() < 1e-12);
        assert_eq!(parse_bound("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_bound("2.5").unwrap(), 2.5);
        assert!(parse_bound("-1").is_err());
        assert!(parse_bound("e^x").is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ScenarioConfig::parse("nx = 8\n\nfoo = 1\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = ScenarioConfig::parse("[mesh]\nlambda = 3\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = ScenarioConfig::parse("nx = 8\nnx = 9\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = ScenarioConfig::parse("r = 1.5\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = ScenarioConfig::parse("nu = abc\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        let e = ScenarioConfig::parse("controller = rhc\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(ScenarioConfig::parse("controller = rhc\n[rhc]\n").is_ok());
        let e = ScenarioConfig::parse("[oops]\n").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn snapshot_round_trips() {
        let text = "# demo\n[mesh]\nnx = 12\nny = 12\n[feedback]\ncu = e^2 # bound\n[initial]\ny0 = bilinear\nyhat0 = 1.5";
        let cfg = ScenarioConfig::parse(text).unwrap();
        let snap = cfg.snapshot();
        assert!(snap.starts_with(text));
        assert!(snap.contains("# cu = 7.38905609893065    (line 6)"));
        assert!(snap.contains("# nu = 0.1    (default)"));
        let again = ScenarioConfig::parse(&snap).unwrap();
        assert_eq!(again.cu, cfg.cu);
        assert_eq!(again.y0, InitialState::Bilinear);
        assert_eq!(again.yhat0, InitialState::Constant(1.5));
    }

    #[test]
    fn initial_state_tags() {
        let z = [-1.0, 0.0, 2.0];
        assert_eq!(InitialState::Root(3).eval(z, [0.3, 0.4]), 2.0);
        assert_eq!(InitialState::Bilinear.eval(z, [0.5, 0.5]), 5.0);
        assert_eq!(InitialState::Linear.eval(z, [0.5, 0.25]), -4.75);
    }
}
