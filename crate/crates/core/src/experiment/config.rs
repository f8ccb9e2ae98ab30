use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expfam::{LikelihoodModel, NaturalParam, Objective};
use crate::graph::{Topology, TopologyKind};
use crate::protocol::{ProtocolConfig, StepSchedule, UpdatePath};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologySpec {
    Kind(TopologyKind),
    File(PathBuf),
}

impl FromStr for TopologySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("file:") {
            Some(path) if !path.is_empty() => Ok(TopologySpec::File(PathBuf::from(path))),
            Some(_) => Err(Error::Config("file: topology needs a path".into())),
            None => s.parse().map(TopologySpec::Kind),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Kind(k) => write!(f, "{k}"),
            TopologySpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Everything one experiment needs. Parsed from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: LikelihoodModel,
    /// Defaults to conjugate for beta-bernoulli, nonconjugate otherwise.
    pub path: Option<UpdatePath>,
    pub topology: TopologySpec,
    pub agents: usize,
    pub points_per_agent: usize,
    pub prior_a: f64,
    pub prior_b: f64,
    /// Data-generating parameter; defaults to 0.7 (Bernoulli) or 0.5 (Exponential).
    pub theta_star: Option<f64>,
    pub alpha: f64,
    pub normalize_local_loss: bool,
    pub rho: f64,
    pub local_iters: usize,
    pub samples: usize,
    pub baseline: f64,
    /// Slots per learning run; defaults to 100 (conjugate) or 2000 (nonconjugate).
    pub max_slots: Option<usize>,
    pub runs: usize,
    pub base_seed: u64,
    pub unlearn_target: Option<usize>,
    /// Training slots before the unlearning request; defaults to 5× the
    /// expected cover time.
    pub train_slots: Option<usize>,
    /// Slots traced per unlearning arm; defaults to `train_slots`.
    pub unlearn_slots: Option<usize>,
    pub sweep_l: Vec<usize>,
    /// Total local-iteration budget L × i for `sweep-l`.
    pub total_iters: usize,
    pub grid_points: usize,
    pub cover_trials: usize,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: LikelihoodModel::Bernoulli,
            path: None,
            topology: TopologySpec::Kind(TopologyKind::Complete),
            agents: 10,
            points_per_agent: 100,
            prior_a: 2.0,
            prior_b: 2.0,
            theta_star: None,
            alpha: 1.0,
            normalize_local_loss: false,
            rho: 5e-3,
            local_iters: 1,
            samples: 30,
            baseline: 0.0,
            max_slots: None,
            runs: 50,
            base_seed: 0,
            unlearn_target: None,
            train_slots: None,
            unlearn_slots: None,
            sweep_l: vec![1, 2, 5, 10],
            total_iters: 2000,
            grid_points: crate::oracle::DEFAULT_GRID_POINTS,
            cover_trials: 100_000,
            jobs: 0,
            output: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean '{value}' for '{key}'"))),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

impl ExperimentConfig {
    /// Applies the entries of a `key = value` file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => {
                self.model = match value {
                    "beta-bernoulli" => LikelihoodModel::Bernoulli,
                    "beta-exponential" => LikelihoodModel::Exponential,
                    _ => return Err(Error::Config(format!("unknown model '{value}'"))),
                }
            }
            "path" => {
                self.path = match value {
                    "conjugate" => Some(UpdatePath::Conjugate),
                    "nonconjugate" => Some(UpdatePath::NonConjugate),
                    "auto" => None,
                    _ => return Err(Error::Config(format!("unknown path '{value}'"))),
                }
            }
            "topology" => self.topology = value.parse()?,
            "agents" | "k" => self.agents = parse_value(key, value)?,
            "points_per_agent" | "n_k" => self.points_per_agent = parse_value(key, value)?,
            "prior_a" => self.prior_a = parse_value(key, value)?,
            "prior_b" => self.prior_b = parse_value(key, value)?,
            "theta_star" => self.theta_star = parse_optional(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "normalize_local_loss" => self.normalize_local_loss = parse_bool(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "local_iters" | "l" => self.local_iters = parse_value(key, value)?,
            "samples" | "s" => self.samples = parse_value(key, value)?,
            "baseline" | "c" => self.baseline = parse_value(key, value)?,
            "max_slots" => self.max_slots = parse_optional(key, value)?,
            "runs" => self.runs = parse_value(key, value)?,
            "base_seed" | "seed" => self.base_seed = parse_value(key, value)?,
            "unlearn_target" => self.unlearn_target = parse_optional(key, value)?,
            "train_slots" => self.train_slots = parse_optional(key, value)?,
            "unlearn_slots" => self.unlearn_slots = parse_optional(key, value)?,
            "sweep_l" => {
                self.sweep_l = value
                    .split(',')
                    .map(|v| parse_value(key, v.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "total_iters" => self.total_iters = parse_value(key, value)?,
            "grid_points" => self.grid_points = parse_value(key, value)?,
            "cover_trials" => self.cover_trials = parse_value(key, value)?,
            "jobs" => self.jobs = parse_value(key, value)?,
            "output" => self.output = parse_optional(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn effective_path(&self) -> UpdatePath {
        self.path.unwrap_or(if self.model.is_conjugate() {
            UpdatePath::Conjugate
        } else {
            UpdatePath::NonConjugate
        })
    }

    pub fn effective_theta_star(&self) -> f64 {
        self.theta_star.unwrap_or(match self.model {
            LikelihoodModel::Bernoulli => 0.7,
            LikelihoodModel::Exponential => 0.5,
        })
    }

    pub fn effective_max_slots(&self) -> usize {
        self.max_slots.unwrap_or(match self.effective_path() {
            UpdatePath::Conjugate => 100,
            UpdatePath::NonConjugate => 2000,
        })
    }

    pub fn prior(&self) -> NaturalParam {
        NaturalParam::from_shape(self.prior_a, self.prior_b)
    }

    pub fn objective(&self) -> Objective {
        Objective {
            model: self.model,
            alpha: self.alpha,
            normalize_local_loss: self.normalize_local_loss,
        }
    }

    /// Protocol settings for a fixed-length traced run.
    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            objective: self.objective(),
            path: self.effective_path(),
            rho: self.rho,
            schedule: StepSchedule::Constant,
            local_iters: self.local_iters,
            samples: self.samples,
            baseline: self.baseline,
            max_slots: self.effective_max_slots(),
            stop_on_cover: false,
        }
    }

    pub fn build_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Kind(kind) => Topology::build(*kind, self.agents),
            TopologySpec::File(path) => Topology::from_edge_list_file(path),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if matches!(self.topology, TopologySpec::Kind(_)) && self.agents == 0 {
            return bad("agents must be at least 1".into());
        }
        if !(self.prior_a > 0.0 && self.prior_b > 0.0) {
            return bad(format!("prior shapes must be positive, got ({}, {})", self.prior_a, self.prior_b));
        }
        let theta = self.effective_theta_star();
        let theta_ok = match self.model {
            LikelihoodModel::Bernoulli => (0.0..=1.0).contains(&theta),
            LikelihoodModel::Exponential => theta > 0.0 && theta.is_finite(),
        };
        if !theta_ok {
            return bad(format!("theta_star {theta} is invalid for {}", self.model.name()));
        }
        if self.sweep_l.is_empty() || self.sweep_l.contains(&0) {
            return bad("sweep_l needs positive entries".into());
        }
        if self.total_iters == 0 || self.cover_trials == 0 {
            return bad("total_iters and cover_trials must be positive".into());
        }
        if self.grid_points < crate::oracle::MIN_GRID_POINTS {
            return bad(format!("grid_points must be at least {}", crate::oracle::MIN_GRID_POINTS));
        }
        self.protocol().validate()
    }
}
