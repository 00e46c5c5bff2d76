//! Line-oriented experiment configuration: `key = value`, `#` comments,
//! unknown keys rejected, every error carries the offending line number.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const SCENARIOS: &[&str] = &[
    "groundstate",
    "dichotomy",
    "soliton_far",
    "virial_monitor",
    "linear_decay",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Radial,
    Cartesian,
}

impl GridKind {
    pub fn tag(&self) -> &'static str {
        match self {
            GridKind::Radial => "radial",
            GridKind::Cartesian => "cartesian",
        }
    }
}

/// A fully resolved experiment. Field defaults are chosen so that the
/// common radial runs only need a handful of keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub grid: GridKind,
    pub a: f64,
    pub r_max: f64,
    pub n: usize,
    pub box_half_width: f64,
    pub nx: usize,
    pub x_obs: [f64; 3],
    pub dt: f64,
    pub t_final: f64,
    pub cadence: usize,
    pub absorber: bool,
    pub absorber_strength: f64,
    pub absorber_start: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub lambda: f64,
    pub c: f64,
    pub c_list: Vec<f64>,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub width: f64,
    pub distance: f64,
    pub cutoff_inner: f64,
    pub virial_r: f64,
    pub gs_tol: f64,
    pub gs_rcut: f64,
    pub gs_h: f64,
    pub probes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "groundstate".into(),
            grid: GridKind::Radial,
            a: 0.0,
            r_max: 50.0,
            n: 4999,
            box_half_width: 12.0,
            nx: 64,
            x_obs: [0.0; 3],
            dt: 1e-3,
            t_final: 10.0,
            cadence: 50,
            absorber: false,
            absorber_strength: 5.0,
            absorber_start: 0.8,
            cg_tol: 1e-10,
            cg_max_iter: 500,
            lambda: 0.5,
            c: 0.9,
            c_list: Vec::new(),
            eps: 0.1,
            eps_list: Vec::new(),
            width: 2.0,
            distance: 12.0,
            cutoff_inner: 0.0,
            virial_r: 150.0,
            gs_tol: 1e-10,
            gs_rcut: 25.0,
            gs_h: 1e-4,
            probes: 4,
        }
    }
}

fn err(line: usize, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError::Parse(format!("{msg} (line {line})"))
}

fn parse_f64(v: &str, key: &str, line: usize) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .map_err(|_| err(line, format!("{key} must be a number, got '{v}'")))
}

fn parse_usize(v: &str, key: &str, line: usize) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .map_err(|_| err(line, format!("{key} must be a nonnegative integer, got '{v}'")))
}

fn parse_bool(v: &str, key: &str, line: usize) -> Result<bool, ConfigError> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(err(line, format!("{key} must be true or false, got '{v}'"))),
    }
}

fn parse_list(v: &str, key: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| parse_f64(s.trim(), key, line))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{body}'")))?;
            cfg.apply(key.trim(), value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        match key {
            "scenario" => {
                if !SCENARIOS.contains(&value) {
                    return Err(err(
                        line,
                        format!(
                            "unknown scenario '{value}'; valid scenarios: {}",
                            SCENARIOS.join(", ")
                        ),
                    ));
                }
                self.scenario = value.to_string();
            }
            "grid" => {
                self.grid = match value {
                    "radial" => GridKind::Radial,
                    "cartesian" => GridKind::Cartesian,
                    _ => {
                        return Err(err(
                            line,
                            format!("grid must be 'radial' or 'cartesian', got '{value}'"),
                        ))
                    }
                };
            }
            "a" => self.a = parse_f64(value, key, line)?,
            "r_max" => self.r_max = parse_f64(value, key, line)?,
            "n" => self.n = parse_usize(value, key, line)?,
            "box_half_width" => self.box_half_width = parse_f64(value, key, line)?,
            "nx" => self.nx = parse_usize(value, key, line)?,
            "x_obs" => {
                let v = parse_list(value, key, line)?;
                if v.len() != 3 {
                    return Err(err(line, "x_obs needs three comma-separated components"));
                }
                self.x_obs = [v[0], v[1], v[2]];
            }
            "dt" => self.dt = parse_f64(value, key, line)?,
            "t_final" => self.t_final = parse_f64(value, key, line)?,
            "cadence" => self.cadence = parse_usize(value, key, line)?,
            "absorber" => self.absorber = parse_bool(value, key, line)?,
            "absorber_strength" => self.absorber_strength = parse_f64(value, key, line)?,
            "absorber_start" => self.absorber_start = parse_f64(value, key, line)?,
            "cg_tol" => self.cg_tol = parse_f64(value, key, line)?,
            "cg_max_iter" => self.cg_max_iter = parse_usize(value, key, line)?,
            "lambda" => self.lambda = parse_f64(value, key, line)?,
            "c" => self.c = parse_f64(value, key, line)?,
            "c_list" => self.c_list = parse_list(value, key, line)?,
            "eps" => self.eps = parse_f64(value, key, line)?,
            "eps_list" => self.eps_list = parse_list(value, key, line)?,
            "width" => self.width = parse_f64(value, key, line)?,
            "distance" => self.distance = parse_f64(value, key, line)?,
            "cutoff_inner" => self.cutoff_inner = parse_f64(value, key, line)?,
            "virial_r" => self.virial_r = parse_f64(value, key, line)?,
            "gs_tol" => self.gs_tol = parse_f64(value, key, line)?,
            "gs_rcut" => self.gs_rcut = parse_f64(value, key, line)?,
            "gs_h" => self.gs_h = parse_f64(value, key, line)?,
            "probes" => self.probes = parse_usize(value, key, line)?,
            _ => return Err(err(line, format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Parse(msg);
        if !(self.dt > 0.0) {
            return Err(bad(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0) {
            return Err(bad(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.cadence == 0 {
            return Err(bad("cadence must be at least 1".into()));
        }
        if !(self.a >= 0.0) {
            return Err(bad(format!("a must be nonnegative, got {}", self.a)));
        }
        if self.grid == GridKind::Radial && !(self.r_max > self.a) {
            return Err(bad(format!(
                "r_max = {} must exceed a = {}",
                self.r_max, self.a
            )));
        }
        if self.probes < 2 {
            return Err(bad("probes must be at least 2".into()));
        }
        Ok(())
    }

    /// Canonical text form: fixed key order, one key per line. Parsing the
    /// output reproduces the struct exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        kv("scenario", self.scenario.clone());
        kv("grid", self.grid.tag().into());
        kv("a", self.a.to_string());
        kv("r_max", self.r_max.to_string());
        kv("n", self.n.to_string());
        kv("box_half_width", self.box_half_width.to_string());
        kv("nx", self.nx.to_string());
        kv(
            "x_obs",
            format!("{},{},{}", self.x_obs[0], self.x_obs[1], self.x_obs[2]),
        );
        kv("dt", self.dt.to_string());
        kv("t_final", self.t_final.to_string());
        kv("cadence", self.cadence.to_string());
        kv("absorber", self.absorber.to_string());
        kv("absorber_strength", self.absorber_strength.to_string());
        kv("absorber_start", self.absorber_start.to_string());
        kv("cg_tol", self.cg_tol.to_string());
        kv("cg_max_iter", self.cg_max_iter.to_string());
        kv("lambda", self.lambda.to_string());
        kv("c", self.c.to_string());
        if !self.c_list.is_empty() {
            kv("c_list", list(&self.c_list));
        }
        kv("eps", self.eps.to_string());
        if !self.eps_list.is_empty() {
            kv("eps_list", list(&self.eps_list));
        }
        kv("width", self.width.to_string());
        kv("distance", self.distance.to_string());
        kv("cutoff_inner", self.cutoff_inner.to_string());
        kv("virial_r", self.virial_r.to_string());
        kv("gs_tol", self.gs_tol.to_string());
        kv("gs_rcut", self.gs_rcut.to_string());
        kv("gs_h", self.gs_h.to_string());
        kv("probes", self.probes.to_string());
        s
    }

    pub fn from_file(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::parse(&text)
    }
}
