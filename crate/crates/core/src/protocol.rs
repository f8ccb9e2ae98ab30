//! Gossip-based federated variational learning and unlearning.
//!
//! One token carrying the global natural parameter walks the graph under the
//! Metropolis-Hastings schedule. The scheduled agent minimizes its local free
//! energy against the cavity (global minus its own factor), then records the
//! change to the global parameter in its own local factor. With a conjugate
//! model the minimizer is exact; otherwise a few natural-gradient steps are
//! taken with a REINFORCE estimate of the expected-loss gradient.
//!
//! Unlearning removes an agent's local factor from the global parameter by
//! subtraction the first time that agent holds the token after the request.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expfam::{self, DataSummary, NaturalParam, Objective};
use crate::graph::{NodeId, Topology};

/// Global shape parameters are kept at or above this floor in the
/// non-conjugate path.
pub const SHAPE_FLOOR: f64 = 1e-3;
/// Step halvings tried before a non-conjugate step is declared invalid.
pub const MAX_HALVINGS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdatePath {
    Conjugate,
    NonConjugate,
}

impl fmt::Display for UpdatePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdatePath::Conjugate => "conjugate",
            UpdatePath::NonConjugate => "nonconjugate",
        })
    }
}

/// Learning-rate schedule over slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant,
    /// ρ / (1 + i / half_life)
    Harmonic { half_life: f64 },
}

impl StepSchedule {
    pub fn rate(&self, rho: f64, iteration: usize) -> f64 {
        match *self {
            StepSchedule::Constant => rho,
            StepSchedule::Harmonic { half_life } => rho / (1.0 + iteration as f64 / half_life),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub objective: Objective,
    pub path: UpdatePath,
    /// Natural-gradient learning rate ρ.
    pub rho: f64,
    pub schedule: StepSchedule,
    /// Local iterations L per slot.
    pub local_iters: usize,
    /// Samples S per REINFORCE estimate.
    pub samples: usize,
    /// REINFORCE baseline c.
    pub baseline: f64,
    pub max_slots: usize,
    /// Conjugate path only: stop as soon as every live agent has been visited.
    pub stop_on_cover: bool,
}

impl ProtocolConfig {
    pub fn conjugate(objective: Objective, max_slots: usize) -> Self {
        ProtocolConfig {
            objective,
            path: UpdatePath::Conjugate,
            rho: 5e-3,
            schedule: StepSchedule::Constant,
            local_iters: 1,
            samples: 30,
            baseline: 0.0,
            max_slots,
            stop_on_cover: true,
        }
    }

    pub fn nonconjugate(objective: Objective, max_slots: usize) -> Self {
        ProtocolConfig {
            path: UpdatePath::NonConjugate,
            stop_on_cover: false,
            ..Self::conjugate(objective, max_slots)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.local_iters == 0 {
            return Err(Error::Config("local iterations must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples per estimate must be at least 1".into()));
        }
        if self.max_slots == 0 {
            return Err(Error::Config("max_slots must be at least 1".into()));
        }
        if !self.baseline.is_finite() {
            return Err(Error::Config("baseline must be finite".into()));
        }
        if let StepSchedule::Harmonic { half_life } = self.schedule {
            if !(half_life > 0.0) {
                return Err(Error::Config("schedule half-life must be positive".into()));
            }
        }
        if self.path == UpdatePath::Conjugate && !self.objective.model.is_conjugate() {
            return Err(Error::Config(format!(
                "{} has no conjugate update; use the nonconjugate path",
                self.objective.model.name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: NodeId,
    pub dataset: Vec<f64>,
    /// Natural parameter of the approximate local likelihood t_k.
    pub local_nat: NaturalParam,
    pub visited: bool,
    /// Data forgotten; the agent only relays the token.
    pub deleted: bool,
}

impl AgentState {
    pub fn new(id: NodeId, dataset: Vec<f64>) -> Self {
        AgentState {
            id,
            dataset,
            local_nat: NaturalParam::ZERO,
            visited: false,
            deleted: false,
        }
    }
}

/// Builds agents 0..K from per-agent datasets.
pub fn agents_from_datasets(datasets: &[Vec<f64>]) -> Vec<AgentState> {
    datasets.iter().enumerate().map(|(k, d)| AgentState::new(k, d.clone())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub global_nat: NaturalParam,
    /// Slots executed so far.
    pub iteration: usize,
    /// Node holding the token after the last slot.
    pub current: Option<NodeId>,
    pub prior_nat: NaturalParam,
}

impl GlobalState {
    pub fn new(prior_nat: NaturalParam) -> Self {
        GlobalState {
            global_nat: prior_nat,
            iteration: 0,
            current: None,
            prior_nat,
        }
    }

    /// Max coordinate gap between the global parameter and prior + Σ local.
    pub fn factorization_residual(&self, agents: &[AgentState]) -> f64 {
        let total = self.prior_nat + agents.iter().map(|a| a.local_nat).sum();
        self.global_nat.max_abs_diff(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnlearnRequest {
    pub target: NodeId,
    /// Global iteration count at which the request was issued.
    pub issued_at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotEvent {
    Learn,
    UnlearnForward,
    UnlearnDelete,
}

impl SlotEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotEvent::Learn => "learn",
            SlotEvent::UnlearnForward => "unlearn-forward",
            SlotEvent::UnlearnDelete => "unlearn-delete",
        }
    }
}

impl fmt::Display for SlotEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// 1-based index within the run that produced this record.
    pub slot: usize,
    /// Global iteration counter after the slot.
    pub iteration: usize,
    pub agent: NodeId,
    pub event: SlotEvent,
    pub global_nat: NaturalParam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub slots: Vec<SlotRecord>,
    pub global: GlobalState,
    pub agents: Vec<AgentState>,
    /// (agent, slot) of each deletion carried out in this run.
    pub deletions: Vec<(NodeId, usize)>,
}

impl RunRecord {
    pub fn terminal(&self) -> NaturalParam {
        self.global.global_nat
    }

    /// Slot at which `agent` was deleted, if it was.
    pub fn deletion_slot(&self, agent: NodeId) -> Option<usize> {
        self.deletions.iter().find(|(a, _)| *a == agent).map(|&(_, s)| s)
    }
}

/// Exact conjugate slot update.
///
/// The first visit replaces the agent's factor with its tempered data
/// contribution; later visits leave everything unchanged.
pub fn slot_update_conjugate(
    g: &GlobalState,
    a: &AgentState,
    objective: &Objective,
) -> Result<(GlobalState, AgentState)> {
    let mut g_next = g.clone();
    let mut a_next = a.clone();
    g_next.current = Some(a.id);
    if a.visited || a.deleted {
        return Ok((g_next, a_next));
    }
    let contribution = objective.conjugate_factor(&a.dataset).ok_or_else(|| {
        Error::Config(format!("{} has no conjugate update", objective.model.name()))
    })?;
    for &z in &a.dataset {
        objective.model.validate_point(z)?;
    }
    let global = g.global_nat - a.local_nat + contribution;
    if !global.is_normalizable() {
        let (x, y) = global.to_shape();
        return Err(Error::InvalidPosterior(format!("conjugate update gave Beta({x}, {y})")));
    }
    a_next.local_nat = global - g.global_nat + a.local_nat;
    a_next.visited = true;
    g_next.global_nat = global;
    Ok((g_next, a_next))
}

/// Score-function estimate of ∇_μ E_q[L_k(θ)] at q = Beta(η):
/// (1/S) Σ (L_k(θ_s) − c) FIM(η)⁻¹ (s(θ_s) − μ(η)).
pub fn reinforce_gradient<R: Rng + ?Sized>(
    eta: NaturalParam,
    objective: &Objective,
    summary: &DataSummary,
    samples: usize,
    baseline: f64,
    rng: &mut R,
) -> Result<[f64; 2]> {
    let sampler = expfam::beta_sampler(eta)?;
    let mu = expfam::moment_map(eta)?;
    let f = expfam::fim(eta)?;
    let inv = f.inverse()?;
    let mut acc = [0.0f64; 2];
    for _ in 0..samples {
        let theta = expfam::draw(&sampler, rng);
        let weight = objective.local_loss(summary, theta) - baseline;
        if weight == 0.0 {
            continue;
        }
        let s = expfam::sufficient_stats(theta);
        let d = [s[0] - mu.0[0], s[1] - mu.0[1]];
        acc[0] += weight * (inv[0][0] * d[0] + inv[0][1] * d[1]);
        acc[1] += weight * (inv[1][0] * d[0] + inv[1][1] * d[1]);
    }
    let scale = 1.0 / samples as f64;
    let grad = [acc[0] * scale, acc[1] * scale];
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("REINFORCE gradient".into()));
    }
    Ok(grad)
}

/// Non-conjugate slot update with REINFORCE gradients.
pub fn slot_update_nonconjugate<R: Rng + ?Sized>(
    g: &GlobalState,
    a: &AgentState,
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<(GlobalState, AgentState)> {
    let objective = cfg.objective;
    let (samples, baseline) = (cfg.samples, cfg.baseline);
    slot_update_nonconjugate_with(g, a, cfg, &mut |eta, summary| {
        reinforce_gradient(eta, &objective, summary, samples, baseline, rng)
    })
}

/// Non-conjugate slot update with a caller-supplied gradient of the expected
/// local loss in moment coordinates.
///
/// Runs `L` steps η ← η − ρ(η_k + ĝ/α). Inside the loop the local factor
/// tracks η_k⁽ˡ⁾ = η⁽ˡ⁾ − η⁽⁰⁾ + η_k⁽⁰⁾, so the cavity stays fixed.
pub fn slot_update_nonconjugate_with(
    g: &GlobalState,
    a: &AgentState,
    cfg: &ProtocolConfig,
    gradient: &mut dyn FnMut(NaturalParam, &DataSummary) -> Result<[f64; 2]>,
) -> Result<(GlobalState, AgentState)> {
    let mut g_next = g.clone();
    let mut a_next = a.clone();
    g_next.current = Some(a.id);
    if a.deleted {
        return Ok((g_next, a_next));
    }
    let start = g.global_nat;
    if !start.is_normalizable() {
        return Err(Error::InvalidPosterior("global parameter is not normalizable".into()));
    }
    let summary = cfg.objective.model.summarize(&a.dataset)?;
    let rho = cfg.schedule.rate(cfg.rho, g.iteration);
    let inv_alpha = 1.0 / cfg.objective.alpha;

    let mut eta = start;
    for _ in 0..cfg.local_iters {
        let local = eta - start + a.local_nat;
        let grad = gradient(eta, &summary)?;
        let direction = local + NaturalParam(grad) * inv_alpha;
        eta = safeguarded_step(eta, direction, rho)?;
    }
    a_next.local_nat = eta - start + a.local_nat;
    a_next.visited = true;
    g_next.global_nat = eta;
    Ok((g_next, a_next))
}

fn above_floor(eta: NaturalParam) -> bool {
    let (a, b) = eta.to_shape();
    a.is_finite() && b.is_finite() && a >= SHAPE_FLOOR && b >= SHAPE_FLOOR
}

fn safeguarded_step(eta: NaturalParam, direction: NaturalParam, rho: f64) -> Result<NaturalParam> {
    let mut rate = rho;
    for _ in 0..=MAX_HALVINGS {
        let next = eta - direction * rate;
        if above_floor(next) {
            return Ok(next);
        }
        rate *= 0.5;
    }
    let (a, b) = (eta - direction * rate * 2.0).to_shape();
    Err(Error::InvalidPosterior(format!(
        "natural-gradient step left the feasible region after {MAX_HALVINGS} halvings (Beta({a}, {b}))"
    )))
}

/// Deterministic state machine for one random walk.
#[derive(Debug, Clone)]
pub struct Engine<R> {
    topology: Topology,
    cfg: ProtocolConfig,
    global: GlobalState,
    agents: Vec<AgentState>,
    pending: BTreeSet<NodeId>,
    slot: usize,
    improper_cavities: usize,
    rng: R,
}

impl<R: Rng> Engine<R> {
    pub fn new(
        topology: Topology,
        agents: Vec<AgentState>,
        cfg: ProtocolConfig,
        prior_nat: NaturalParam,
        rng: R,
    ) -> Result<Self> {
        if !prior_nat.is_normalizable() {
            return Err(Error::Config("prior must be a proper Beta".into()));
        }
        Self::resume(topology, GlobalState::new(prior_nat), agents, cfg, rng)
    }

    /// Continues from an existing state (e.g. the end of a learning run).
    pub fn resume(
        topology: Topology,
        global: GlobalState,
        agents: Vec<AgentState>,
        cfg: ProtocolConfig,
        rng: R,
    ) -> Result<Self> {
        cfg.validate()?;
        if agents.is_empty() {
            return Err(Error::Config("need at least one agent".into()));
        }
        if agents.len() != topology.node_count() {
            return Err(Error::Config(format!(
                "{} agents on a {}-node topology",
                agents.len(),
                topology.node_count()
            )));
        }
        for (k, a) in agents.iter().enumerate() {
            if a.id != k {
                return Err(Error::Config(format!("agent at position {k} has id {}", a.id)));
            }
            cfg.objective.model.summarize(&a.dataset)?;
        }
        Ok(Engine {
            topology,
            cfg,
            global,
            agents,
            pending: BTreeSet::new(),
            slot: 0,
            improper_cavities: 0,
            rng,
        })
    }

    pub fn global(&self) -> &GlobalState {
        &self.global
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Slots executed by this engine.
    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Non-conjugate slots whose cavity was not a proper Beta.
    pub fn improper_cavities(&self) -> usize {
        self.improper_cavities
    }

    pub fn pending_deletions(&self) -> &BTreeSet<NodeId> {
        &self.pending
    }

    /// Marks an agent's data as deleted without touching the global
    /// parameter; used to retrain from scratch without it.
    pub fn exclude(&mut self, agent: NodeId) -> Result<()> {
        let a = self
            .agents
            .get_mut(agent)
            .ok_or_else(|| Error::Config(format!("no agent {agent}")))?;
        if a.local_nat != NaturalParam::ZERO {
            return Err(Error::Config(format!("agent {agent} already contributed; unlearn it instead")));
        }
        a.deleted = true;
        a.dataset.clear();
        Ok(())
    }

    pub fn request_unlearning(&mut self, target: NodeId) -> Result<UnlearnRequest> {
        if target >= self.agents.len() {
            return Err(Error::Config(format!("no agent {target}")));
        }
        if !self.agents[target].deleted {
            self.pending.insert(target);
        }
        Ok(UnlearnRequest {
            target,
            issued_at: self.global.iteration,
        })
    }

    /// Every live agent has been visited at least once.
    pub fn all_covered(&self) -> bool {
        self.agents.iter().all(|a| a.visited || a.deleted)
    }

    fn next_node(&mut self) -> NodeId {
        match self.global.current {
            None => self.topology.initial_node(&mut self.rng),
            Some(cur) => self.topology.mh_step(cur, &mut self.rng),
        }
    }

    /// Runs one scheduling slot.
    pub fn step(&mut self) -> Result<SlotRecord> {
        let k = self.next_node();
        self.slot += 1;
        let event = if self.pending.contains(&k) {
            self.delete(k)?;
            SlotEvent::UnlearnDelete
        } else if !self.pending.is_empty() || self.agents[k].deleted {
            SlotEvent::UnlearnForward
        } else {
            self.learn(k)?;
            SlotEvent::Learn
        };
        self.global.current = Some(k);
        self.global.iteration += 1;
        Ok(SlotRecord {
            slot: self.slot,
            iteration: self.global.iteration,
            agent: k,
            event,
            global_nat: self.global.global_nat,
        })
    }

    fn learn(&mut self, k: NodeId) -> Result<()> {
        let (g, a) = match self.cfg.path {
            UpdatePath::Conjugate => slot_update_conjugate(&self.global, &self.agents[k], &self.cfg.objective)?,
            UpdatePath::NonConjugate => {
                let cavity = self.global.global_nat - self.agents[k].local_nat;
                if !cavity.is_normalizable() {
                    self.improper_cavities += 1;
                }
                slot_update_nonconjugate(&self.global, &self.agents[k], &self.cfg, &mut self.rng)?
            }
        };
        self.global = g;
        self.agents[k] = a;
        Ok(())
    }

    fn delete(&mut self, k: NodeId) -> Result<()> {
        let remaining = self.global.global_nat - self.agents[k].local_nat;
        if !remaining.is_normalizable() {
            let (a, b) = remaining.to_shape();
            return Err(Error::InvalidPosterior(format!(
                "removing agent {k} leaves Beta({a}, {b})"
            )));
        }
        self.global.global_nat = remaining;
        let agent = &mut self.agents[k];
        agent.local_nat = NaturalParam::ZERO;
        agent.deleted = true;
        agent.dataset.clear();
        self.pending.remove(&k);
        Ok(())
    }

    pub fn into_record(self, slots: Vec<SlotRecord>) -> RunRecord {
        let deletions = slots
            .iter()
            .filter(|s| s.event == SlotEvent::UnlearnDelete)
            .map(|s| (s.agent, s.slot))
            .collect();
        RunRecord {
            slots,
            global: self.global,
            agents: self.agents,
            deletions,
        }
    }
}

/// Runs the protocol from the prior until `max_slots`, or (conjugate path
/// with `stop_on_cover`) until every agent has been visited.
pub fn run_learning<R: Rng>(
    topology: &Topology,
    agents: Vec<AgentState>,
    cfg: &ProtocolConfig,
    prior_nat: NaturalParam,
    rng: R,
) -> Result<RunRecord> {
    let mut engine = Engine::new(topology.clone(), agents, cfg.clone(), prior_nat, rng)?;
    let mut slots = Vec::new();
    let stop_on_cover = cfg.stop_on_cover && cfg.path == UpdatePath::Conjugate;
    while slots.len() < cfg.max_slots {
        slots.push(engine.step()?);
        if stop_on_cover && engine.all_covered() {
            break;
        }
    }
    Ok(engine.into_record(slots))
}

/// Continues the walk from `state` and deletes `request.target` the first
/// time it is scheduled. Stops at the deletion or after `cfg.max_slots`.
pub fn run_unlearning<R: Rng>(
    state: &RunRecord,
    topology: &Topology,
    cfg: &ProtocolConfig,
    request: UnlearnRequest,
    rng: R,
) -> Result<RunRecord> {
    multi_unlearn(state, topology, cfg, &[request.target], rng)
}

/// Deletes several agents, each at its first scheduling after the request.
pub fn multi_unlearn<R: Rng>(
    state: &RunRecord,
    topology: &Topology,
    cfg: &ProtocolConfig,
    targets: &[NodeId],
    rng: R,
) -> Result<RunRecord> {
    let distinct: BTreeSet<NodeId> = targets.iter().copied().collect();
    if distinct.is_empty() || distinct.len() != targets.len() {
        return Err(Error::Config("unlearning targets must be nonempty and distinct".into()));
    }
    let mut engine = Engine::resume(topology.clone(), state.global.clone(), state.agents.clone(), cfg.clone(), rng)?;
    for &t in &distinct {
        engine.request_unlearning(t)?;
    }
    let mut slots = Vec::new();
    while !engine.pending_deletions().is_empty() && slots.len() < cfg.max_slots {
        slots.push(engine.step()?);
    }
    Ok(engine.into_record(slots))
}
