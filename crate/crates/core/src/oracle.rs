//! Reference posteriors for checking the protocol.
//!
//! Conjugate models get the closed-form posterior. Any model gets the
//! tempered generalized posterior p₀(θ) exp(−(1/α) Σ_k L_k(θ)) tabulated on a
//! midpoint grid over (0, 1) and normalized with the trapezoid rule.

use crate::error::{Error, Result};
use crate::expfam::{self, NaturalParam, Objective};
use crate::graph::NodeId;

pub const DEFAULT_GRID_POINTS: usize = 10_001;
pub const MIN_GRID_POINTS: usize = 1001;

/// Closed-form tempered posterior prior + Σ_{k ≠ exclude} factor(D_k).
pub fn exact_conjugate_posterior(
    prior_nat: NaturalParam,
    datasets: &[Vec<f64>],
    objective: &Objective,
    exclude: Option<NodeId>,
) -> Result<NaturalParam> {
    let mut total = prior_nat;
    for (k, data) in datasets.iter().enumerate() {
        if Some(k) == exclude {
            continue;
        }
        for &z in data {
            objective.model.validate_point(z)?;
        }
        total += objective.conjugate_factor(data).ok_or_else(|| {
            Error::Config(format!("{} is not conjugate", objective.model.name()))
        })?;
    }
    Ok(total)
}

/// Normalized log-density tabulated at θ_m = (m + ½)/M.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    /// ln Z of the unnormalized density under the trapezoid rule.
    pub normalizer: f64,
    log_theta: Vec<f64>,
    log_one_minus: Vec<f64>,
}

impl GridDensity {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Trapezoid weights over the grid points.
    fn weight(&self, m: usize) -> f64 {
        trapezoid_weight(m, self.grid.len())
    }

    /// ∫ p(θ) dθ under the trapezoid rule; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.log_density
            .iter()
            .enumerate()
            .map(|(m, &l)| self.weight(m) * l.exp())
            .sum()
    }

    /// Trapezoid mean of θ.
    pub fn mean(&self) -> f64 {
        self.log_density
            .iter()
            .enumerate()
            .map(|(m, &l)| self.weight(m) * self.grid[m] * l.exp())
            .sum()
    }
}

fn trapezoid_weight(m: usize, len: usize) -> f64 {
    let h = 1.0 / len as f64;
    if len > 1 && (m == 0 || m == len - 1) {
        0.5 * h
    } else {
        h
    }
}

fn log_sum_exp_weighted(values: &[f64]) -> f64 {
    let len = values.len();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(m, &v)| trapezoid_weight(m, len) * (v - max).exp())
        .sum();
    max + sum.ln()
}

/// Tabulates the tempered generalized posterior on `points` grid points,
/// leaving out agent `exclude`.
pub fn grid_generalized_posterior(
    prior_nat: NaturalParam,
    datasets: &[Vec<f64>],
    objective: &Objective,
    points: usize,
    exclude: Option<NodeId>,
) -> Result<GridDensity> {
    if points < MIN_GRID_POINTS {
        return Err(Error::Config(format!("grid needs at least {MIN_GRID_POINTS} points, got {points}")));
    }
    objective.validate()?;
    let prior_log_z = expfam::log_partition(prior_nat)?;
    let summaries = datasets
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != exclude)
        .map(|(_, d)| objective.model.summarize(d))
        .collect::<Result<Vec<_>>>()?;

    let grid: Vec<f64> = (0..points).map(|m| (m as f64 + 0.5) / points as f64).collect();
    let log_theta: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let log_one_minus: Vec<f64> = grid.iter().map(|t| (-t).ln_1p()).collect();
    let inv_alpha = 1.0 / objective.alpha;

    let mut unnormalized = Vec::with_capacity(points);
    for m in 0..points {
        let theta = grid[m];
        let log_prior = prior_nat.0[0] * log_theta[m] + prior_nat.0[1] * log_one_minus[m] - prior_log_z;
        let loss: f64 = summaries.iter().map(|s| objective.local_loss(s, theta)).sum();
        let v = log_prior - inv_alpha * loss;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("log-density at θ = {theta}")));
        }
        unnormalized.push(v);
    }
    let normalizer = log_sum_exp_weighted(&unnormalized);
    let log_density = unnormalized.into_iter().map(|v| v - normalizer).collect();
    Ok(GridDensity {
        grid,
        log_density,
        normalizer,
        log_theta,
        log_one_minus,
    })
}

/// What the variational posterior is compared against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Closed(NaturalParam),
    Grid(&'a GridDensity),
}

impl From<NaturalParam> for Reference<'_> {
    fn from(p: NaturalParam) -> Self {
        Reference::Closed(p)
    }
}

impl<'a> From<&'a GridDensity> for Reference<'a> {
    fn from(g: &'a GridDensity) -> Self {
        Reference::Grid(g)
    }
}

/// KL(q ‖ reference): closed form against a Beta, trapezoid quadrature
/// against a grid density. For the grid case q is renormalized on the same
/// grid, which keeps the discrete divergence non-negative.
pub fn kl_variational_to_oracle<'a>(q_nat: NaturalParam, reference: impl Into<Reference<'a>>) -> Result<f64> {
    q_nat.shape_checked()?;
    match reference.into() {
        Reference::Closed(p) => expfam::kl(q_nat, p),
        Reference::Grid(g) => Ok(kl_on_grid(q_nat, g)),
    }
}

fn kl_on_grid(q_nat: NaturalParam, g: &GridDensity) -> f64 {
    let len = g.len();
    let log_q: Vec<f64> = (0..len)
        .map(|m| q_nat.0[0] * g.log_theta[m] + q_nat.0[1] * g.log_one_minus[m])
        .collect();
    let log_zq = log_sum_exp_weighted(&log_q);
    let value: f64 = (0..len)
        .map(|m| {
            let lq = log_q[m] - log_zq;
            let w = trapezoid_weight(m, len) * lq.exp();
            if w == 0.0 {
                0.0
            } else {
                w * (lq - g.log_density[m])
            }
        })
        .sum();
    value.max(0.0)
}
