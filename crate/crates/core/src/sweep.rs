//! Flat `key = value` configuration and parameter sweeps.

use crate::capacity::{effective_capacity, CapacityError, CapacityResult, PolicyFamily};
use crate::delay::DelayConstraint;
use crate::fading::{db_to_linear, FadingSpec, LinkFading, RelayPolicy, Scenario};
use crate::mgf::{Engine, Evaluator};
use crate::policies::{mcg_policy, nobuffer_capacity, MdeFamily};
use crate::queuesim::{simulate, validate_capacity, SimConfig, VALIDATION_FACTORS};
use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Quad,
    Mc,
    Enum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    Mcg,
    Mde,
    NoBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SnrRDb,
    Epsilon,
    D,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Linear,
    Log,
}

macro_rules! names {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                $(if s.eq_ignore_ascii_case($s) { return Ok(Self::$v); })*
                Err(format!("`{s}` is not one of {}", [$($s),*].join(", ")))
            }
        }
    };
}

names!(EngineKind { Quad => "quad", Mc => "mc", Enum => "enum" });
names!(PolicyName { Mcg => "MCG", Mde => "MDE", NoBuffer => "NoBuffer" });
names!(SweepParam { SnrRDb => "snr_r_db", Epsilon => "epsilon", D => "d", Lambda => "lambda" });
names!(GridScale { Linear => "linear", Log => "log" });

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    return self.max;
                }
                let t = i as f64 / (n - 1) as f64;
                match self.scale {
                    GridScale::Linear => self.min + (self.max - self.min) * t,
                    GridScale::Log => self.min * (self.max / self.min).powf(t),
                }
            })
            .collect()
    }
}

/// Small-scale fading shapes; link means follow the path loss.
#[derive(Debug, Clone, PartialEq)]
pub enum FadingModel {
    Rayleigh,
    /// Unit-scale atoms `(gain, probability)` per link, multiplied by the
    /// link's mean gain.
    Discrete {
        sd: Vec<(f64, f64)>,
        sr: Vec<(f64, f64)>,
        rd: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub d: f64,
    pub alpha: f64,
    pub snr_s_db: f64,
    pub snr_r_db: f64,
    pub gamma: f64,
    pub t_block: f64,
    pub bandwidth: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// Delay bound in seconds.
    pub d_max: f64,
    pub fading: FadingModel,
    pub engine: EngineKind,
    pub tol: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub policies: Vec<PolicyName>,
    pub sweep: Option<(SweepParam, Grid)>,
    /// Write wall-clock time in the `runtime_ms` column.
    pub timing: bool,
    /// Simulation: arrival rate in bits/s (defaults to the analytic capacity).
    pub rate: Option<f64>,
    pub horizon: usize,
    pub warmup: Option<usize>,
    pub tag_period: usize,
    pub slack: f64,
}

impl Default for Config {
    /// The evaluation preset at `snr_r = 10 dB`.
    fn default() -> Self {
        Self {
            d: 0.5,
            alpha: 4.0,
            snr_s_db: 0.0,
            snr_r_db: 10.0,
            gamma: 1.0,
            t_block: 1e-3,
            bandwidth: 180e3,
            lambda: 1.0,
            epsilon: 0.05,
            d_max: 1.0,
            fading: FadingModel::Rayleigh,
            engine: EngineKind::Quad,
            tol: 1e-6,
            mc_samples: 100_000,
            seed: 1,
            policies: vec![PolicyName::Mcg, PolicyName::Mde, PolicyName::NoBuffer],
            sweep: None,
            timing: true,
            rate: None,
            horizon: 1_000_000,
            warmup: None,
            tag_period: 1,
            slack: 0.5,
        }
    }
}

fn parse_atoms(v: &str) -> Result<Vec<(f64, f64)>, String> {
    v.split(',')
        .map(|t| {
            let (g, p) = t
                .split_once(':')
                .ok_or_else(|| format!("atom `{t}` is not gain:prob"))?;
            let g: f64 = g.trim().parse().map_err(|e| format!("{e}"))?;
            let p: f64 = p.trim().parse().map_err(|e| format!("{e}"))?;
            Ok((g, p))
        })
        .collect()
}

fn print_atoms(a: &[(f64, f64)]) -> String {
    a.iter()
        .map(|(g, p)| format!("{g:?}:{p:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        let mut sweep: Option<SweepParam> = None;
        let mut grid = Grid {
            min: f64::NAN,
            max: f64::NAN,
            points: 0,
            scale: GridScale::Linear,
        };
        let mut fading = "rayleigh".to_string();
        let mut atoms: [Option<Vec<(f64, f64)>>; 3] = [None, None, None];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |msg: String| ConfigError::Value {
                key: k.to_string(),
                msg,
            };
            let f = || v.parse::<f64>().map_err(|e| bad(e.to_string()));
            let u = || v.parse::<usize>().map_err(|e| bad(e.to_string()));
            match k {
                "d" => c.d = f()?,
                "alpha" => c.alpha = f()?,
                "snr_s_db" => c.snr_s_db = f()?,
                "snr_r_db" => c.snr_r_db = f()?,
                "gamma" => c.gamma = f()?,
                "t_block" => c.t_block = f()?,
                "bandwidth" => c.bandwidth = f()?,
                "lambda" => c.lambda = f()?,
                "epsilon" => c.epsilon = f()?,
                "d_max" => c.d_max = f()?,
                "fading" => fading = v.to_ascii_lowercase(),
                "sd_atoms" => atoms[0] = Some(parse_atoms(v).map_err(bad)?),
                "sr_atoms" => atoms[1] = Some(parse_atoms(v).map_err(bad)?),
                "rd_atoms" => atoms[2] = Some(parse_atoms(v).map_err(bad)?),
                "engine" => c.engine = v.parse().map_err(bad)?,
                "tol" => c.tol = f()?,
                "mc_samples" => c.mc_samples = u()?,
                "seed" => {
                    c.seed = v
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "policies" => {
                    c.policies = v
                        .split(',')
                        .map(|p| p.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(bad)?
                }
                "sweep" => sweep = Some(v.parse().map_err(bad)?),
                "grid_min" => grid.min = f()?,
                "grid_max" => grid.max = f()?,
                "grid_points" => grid.points = u()?,
                "grid_scale" => grid.scale = v.parse().map_err(bad)?,
                "timing" => {
                    c.timing = v
                        .parse()
                        .map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?
                }
                "rate" => c.rate = Some(f()?),
                "horizon" => c.horizon = u()?,
                "warmup" => c.warmup = Some(u()?),
                "tag_period" => c.tag_period = u()?,
                "slack" => c.slack = f()?,
                _ => return Err(ConfigError::UnknownKey(k.to_string())),
            }
        }
        c.fading = match fading.as_str() {
            "rayleigh" => FadingModel::Rayleigh,
            "discrete" => match atoms {
                [Some(sd), Some(sr), Some(rd)] => FadingModel::Discrete { sd, sr, rd },
                _ => {
                    return Err(ConfigError::Invalid(
                        "discrete fading needs sd_atoms, sr_atoms and rd_atoms".into(),
                    ))
                }
            },
            other => {
                return Err(ConfigError::Value {
                    key: "fading".into(),
                    msg: format!("`{other}` is not rayleigh or discrete"),
                })
            }
        };
        c.sweep = sweep.map(|p| (p, grid));
        c.validate()?;
        Ok(c)
    }

    /// Text form accepted by [`Config::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("d", format!("{:?}", self.d));
        kv("alpha", format!("{:?}", self.alpha));
        kv("snr_s_db", format!("{:?}", self.snr_s_db));
        kv("snr_r_db", format!("{:?}", self.snr_r_db));
        kv("gamma", format!("{:?}", self.gamma));
        kv("t_block", format!("{:?}", self.t_block));
        kv("bandwidth", format!("{:?}", self.bandwidth));
        kv("lambda", format!("{:?}", self.lambda));
        kv("epsilon", format!("{:?}", self.epsilon));
        kv("d_max", format!("{:?}", self.d_max));
        match &self.fading {
            FadingModel::Rayleigh => kv("fading", "rayleigh".into()),
            FadingModel::Discrete { sd, sr, rd } => {
                kv("fading", "discrete".into());
                kv("sd_atoms", print_atoms(sd));
                kv("sr_atoms", print_atoms(sr));
                kv("rd_atoms", print_atoms(rd));
            }
        }
        kv("engine", self.engine.to_string());
        kv("tol", format!("{:?}", self.tol));
        kv("mc_samples", self.mc_samples.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "policies",
            self.policies
                .iter()
                .map(|p| p.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        if let Some((p, g)) = &self.sweep {
            kv("sweep", p.to_string());
            kv("grid_min", format!("{:?}", g.min));
            kv("grid_max", format!("{:?}", g.max));
            kv("grid_points", g.points.to_string());
            kv("grid_scale", g.scale.to_string());
        }
        kv("timing", self.timing.to_string());
        if let Some(r) = self.rate {
            kv("rate", format!("{r:?}"));
        }
        kv("horizon", self.horizon.to_string());
        if let Some(w) = self.warmup {
            kv("warmup", w.to_string());
        }
        kv("tag_period", self.tag_period.to_string());
        kv("slack", format!("{:?}", self.slack));
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: String| Err(ConfigError::Invalid(m));
        if !(self.d > 0.0 && self.d < 1.0) {
            return inv(format!("d = {} must lie in (0, 1)", self.d));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return inv(format!("epsilon = {} must lie in (0, 1]", self.epsilon));
        }
        if !(self.d_max > 0.0) {
            return inv(format!("d_max = {} must be positive", self.d_max));
        }
        if !(self.lambda >= 0.0) {
            return inv(format!("lambda = {} must be non-negative", self.lambda));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return inv(format!("tol = {} must lie in (0, 1)", self.tol));
        }
        if self.policies.is_empty() {
            return inv("no policies selected".into());
        }
        if let Some((p, g)) = &self.sweep {
            if g.points < 2 {
                return inv(format!("grid_points = {} must be at least 2", g.points));
            }
            if !(g.min.is_finite() && g.max.is_finite()) {
                return inv("grid_min and grid_max are required for a sweep".into());
            }
            if g.scale == GridScale::Log && !(g.min > 0.0 && g.max > 0.0) {
                return inv("log grids need positive bounds".into());
            }
            for v in [g.min, g.max] {
                let mut c = self.clone();
                c.sweep = None;
                c.set(*p, v);
                c.validate()?;
            }
        }
        self.scenario()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Sets the swept parameter.
    pub fn set(&mut self, p: SweepParam, v: f64) {
        match p {
            SweepParam::SnrRDb => self.snr_r_db = v,
            SweepParam::Epsilon => self.epsilon = v,
            SweepParam::D => self.d = v,
            SweepParam::Lambda => self.lambda = v,
        }
    }

    pub fn scenario(&self) -> Result<Scenario, crate::fading::FadingError> {
        let mut s = Scenario::rayleigh(
            self.d,
            self.alpha,
            db_to_linear(self.snr_s_db),
            db_to_linear(self.snr_r_db),
        )?;
        s.gamma = self.gamma;
        s.t_block = self.t_block;
        s.bandwidth = self.bandwidth;
        if let FadingModel::Discrete { sd, sr, rd } = &self.fading {
            let link = |atoms: &[(f64, f64)], m: &LinkFading| {
                LinkFading::Discrete(atoms.to_vec()).scaled(m.mean())
            };
            let f = FadingSpec {
                sd: link(sd, &s.fading.sd),
                sr: link(sr, &s.fading.sr),
                rd: link(rd, &s.fading.rd),
            };
            return s.with_fading(f);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn engine(&self) -> Engine {
        match self.engine {
            EngineKind::Quad => Engine::quadrature(self.tol),
            EngineKind::Mc => Engine::monte_carlo(self.mc_samples, self.seed),
            EngineKind::Enum => Engine::exact(),
        }
    }

    pub fn constraint(&self) -> Result<DelayConstraint, crate::delay::DelayError> {
        DelayConstraint::new(self.epsilon, self.d_max)
    }
}

/// One output row; rates in bits/s, exponents per second.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub param: f64,
    pub policy: PolicyName,
    pub case_label: String,
    pub rate_bps: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub j1: f64,
    pub j2: f64,
    pub prob_z: f64,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

pub const CSV_HEADER: [&str; 10] = [
    "param",
    "policy",
    "case_label",
    "R_eps_bits_per_s",
    "theta1",
    "theta2",
    "J1",
    "J2",
    "prZ",
    "runtime_ms",
];

/// Buffered capacity and the relay policy in force at its operating point.
fn solve(
    cfg: &Config,
    policy: PolicyName,
    ev: &Evaluator,
) -> Result<(CapacityResult, RelayPolicy), String> {
    let c = cfg.constraint().map_err(|e| format!("E_DOMAIN: {e}"))?;
    let code = |e: CapacityError| format!("{}: {e}", e.code());
    match policy {
        PolicyName::Mcg => {
            let p = mcg_policy(cfg.lambda);
            Ok((effective_capacity(&p, &c, ev).map_err(code)?, p))
        }
        PolicyName::Mde => {
            let fam = MdeFamily::new(cfg.lambda, ev);
            let r = effective_capacity(&fam, &c, ev).map_err(code)?;
            let theta1 = if r.point.theta1.is_finite() {
                r.point.theta1
            } else {
                0.0
            };
            let p = fam.policy_at(theta1).map_err(code)?;
            Ok((r, p))
        }
        PolicyName::NoBuffer => Err("E_UNSUPPORTED: no relay queue to simulate".into()),
    }
}

fn evaluator(cfg: &Config) -> Result<Evaluator, String> {
    let s = cfg.scenario().map_err(|e| format!("E_CONFIG: {e}"))?;
    Evaluator::new(&s, cfg.engine()).map_err(|e| format!("E_ENGINE: {e}"))
}

fn blank_row(policy: PolicyName) -> Row {
    Row {
        param: f64::NAN,
        policy,
        case_label: String::new(),
        rate_bps: f64::NAN,
        theta1: f64::NAN,
        theta2: f64::NAN,
        j1: f64::NAN,
        j2: f64::NAN,
        prob_z: f64::NAN,
        runtime_ms: 0.0,
        error: None,
    }
}

fn evaluate(cfg: &Config, policy: PolicyName) -> Result<Row, String> {
    let ev = evaluator(cfg)?;
    let t = ev.scenario().t_block;
    let mut row = blank_row(policy);
    if policy == PolicyName::NoBuffer {
        let c = cfg.constraint().map_err(|e| format!("E_DOMAIN: {e}"))?;
        row.case_label = "nobuffer".into();
        row.rate_bps = nobuffer_capacity(&c, &ev).map_err(|e| format!("{}: {e}", e.code()))? / t;
        return Ok(row);
    }
    let (r, _) = solve(cfg, policy, &ev)?;
    row.case_label = r.case.to_string();
    row.rate_bps = r.rate / t;
    row.theta1 = r.point.theta1;
    row.theta2 = r.point.theta2;
    row.j1 = r.point.j1_per_second(t);
    row.j2 = r.point.j2_per_second(t);
    row.prob_z = r.prob_z;
    Ok(row)
}

/// Capacity of one policy at the configured point.
pub fn run_point(cfg: &Config, policy: PolicyName, param: f64) -> Row {
    let start = Instant::now();
    let mut row = evaluate(cfg, policy).unwrap_or_else(|e| Row {
        case_label: error_label(&e),
        error: Some(e),
        ..blank_row(policy)
    });
    row.param = param;
    row.runtime_ms = if cfg.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    row
}

fn error_label(e: &str) -> String {
    format!("error:{}", e.split(':').next().unwrap_or("E"))
}

/// Rows in grid order, policies in configured order within each point.
/// Without a sweep, a single point at the configured parameters.
pub fn run_sweep(cfg: &Config) -> Vec<Row> {
    points(cfg)
        .into_iter()
        .flat_map(|(v, c)| {
            cfg.policies
                .iter()
                .map(|&pol| run_point(&c, pol, v))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Configurations along the sweep grid, or the single configured point.
fn points(cfg: &Config) -> Vec<(f64, Config)> {
    match &cfg.sweep {
        Some((p, g)) => g
            .values()
            .into_iter()
            .map(|v| {
                let mut c = cfg.clone();
                c.set(*p, v);
                (v, c)
            })
            .collect(),
        None => vec![(f64::NAN, cfg.clone())],
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            num(r.param),
            r.policy.to_string(),
            r.case_label.clone(),
            num(r.rate_bps),
            num(r.theta1),
            num(r.theta2),
            num(r.j1),
            num(r.j2),
            num(r.prob_z),
            format!("{:.3}", r.runtime_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl Config {
    /// Simulation settings at `rate` bits/block.
    pub fn sim_config(&self, rate: f64) -> SimConfig {
        let mut c = SimConfig::new(rate, self.horizon, self.seed);
        if let Some(w) = self.warmup {
            c.warmup = w;
        }
        c.tag_period = self.tag_period;
        c
    }
}

/// Analytic capacity against simulated violation probabilities at
/// [`VALIDATION_FACTORS`] times the capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub param: f64,
    pub policy: PolicyName,
    pub case_label: String,
    pub rate_bps: f64,
    pub violations: Vec<f64>,
    pub min_samples: usize,
    pub passed: bool,
    pub low_confidence: bool,
    pub error: Option<String>,
}

pub const VALIDATION_HEADER: [&str; 11] = [
    "param",
    "policy",
    "case_label",
    "R_eps_bits_per_s",
    "viol_0.85",
    "viol_0.95",
    "viol_1.05",
    "viol_1.15",
    "min_samples",
    "low_confidence",
    "pass",
];

fn validate_point(cfg: &Config, policy: PolicyName, param: f64) -> ValidationRow {
    let mut row = ValidationRow {
        param,
        policy,
        case_label: String::new(),
        rate_bps: f64::NAN,
        violations: Vec::new(),
        min_samples: 0,
        passed: false,
        low_confidence: false,
        error: None,
    };
    let run = |row: &mut ValidationRow| -> Result<(), String> {
        let ev = evaluator(cfg)?;
        let s = ev.scenario();
        let (r, pol) = solve(cfg, policy, &ev)?;
        row.case_label = r.case.to_string();
        row.rate_bps = r.rate / s.t_block;
        if r.rate <= 0.0 {
            return Ok(());
        }
        let c = cfg.constraint().map_err(|e| format!("E_DOMAIN: {e}"))?;
        let rep = validate_capacity(s, &pol, &c, r.rate, &cfg.sim_config(r.rate), cfg.slack)
            .map_err(|e| format!("E_SIM: {e}"))?;
        row.violations = rep.violations.clone();
        row.min_samples = rep.samples.iter().copied().min().unwrap_or(0);
        row.passed = rep.passed();
        row.low_confidence = rep.low_confidence;
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.case_label = error_label(&e);
        row.error = Some(e);
    }
    row
}

/// Validation rows in grid order. The no-buffer baseline has no relay
/// queue to simulate and is skipped.
pub fn run_validate(cfg: &Config) -> Vec<ValidationRow> {
    points(cfg)
        .into_iter()
        .flat_map(|(v, c)| {
            cfg.policies
                .iter()
                .filter(|&&p| p != PolicyName::NoBuffer)
                .map(|&pol| validate_point(&c, pol, v))
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn write_validation_csv<W: Write>(rows: &[ValidationRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VALIDATION_HEADER)?;
    for r in rows {
        let mut rec = vec![
            num(r.param),
            r.policy.to_string(),
            r.case_label.clone(),
            num(r.rate_bps),
        ];
        for i in 0..VALIDATION_FACTORS.len() {
            rec.push(r.violations.get(i).map_or(String::new(), |&v| num(v)));
        }
        rec.push(r.min_samples.to_string());
        rec.push(r.low_confidence.to_string());
        rec.push(r.passed.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub policy: PolicyName,
    pub rate_bps: f64,
    pub violation: f64,
    pub samples: usize,
    pub mean_delay_s: f64,
    pub routing_fraction: f64,
}

/// Simulates the first configured policy at `rate` (bits/s), or at its
/// analytic capacity when no rate is set. With `trace`, per-block rows are
/// written there.
pub fn run_simulation(cfg: &Config, trace: Option<&mut dyn Write>) -> Result<SimSummary, String> {
    let policy = cfg.policies[0];
    let ev = evaluator(cfg)?;
    let s = ev.scenario();
    let (r, pol) = solve(cfg, policy, &ev)?;
    let rate = match cfg.rate {
        Some(bps) => bps * s.t_block,
        None => r.rate,
    };
    let st = simulate(s, &pol, &cfg.sim_config(rate), trace).map_err(|e| format!("E_SIM: {e}"))?;
    let delays = st.delays();
    Ok(SimSummary {
        policy,
        rate_bps: rate / s.t_block,
        violation: st.violation(cfg.d_max),
        samples: st.samples(cfg.d_max),
        mean_delay_s: delays.iter().sum::<f64>() / delays.len().max(1) as f64,
        routing_fraction: st.routing_fraction(),
    })
}

pub fn write_simulation_csv<W: Write>(r: &SimSummary, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "rate_bits_per_s",
        "violation",
        "samples",
        "mean_delay_s",
        "routing_fraction",
    ])?;
    w.write_record([
        r.policy.to_string(),
        num(r.rate_bps),
        num(r.violation),
        r.samples.to_string(),
        num(r.mean_delay_s),
        num(r.routing_fraction),
    ])?;
    w.flush()?;
    Ok(())
}
