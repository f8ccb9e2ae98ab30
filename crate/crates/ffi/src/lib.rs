//! C ABI over the `gfvl` core.
//!
//! Every entry point returns a [`GfvlStatus`]; results are written through out
//! pointers. Objects are opaque handles created by `*_new` and released by
//! `*_free`. On failure a human-readable message is stored per thread and can
//! be copied out with [`gfvl_last_error_message`]. Panics never cross the
//! boundary; they surface as `GFVL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use gfvl::expfam::{self, LikelihoodModel, NaturalParam, Objective};
use gfvl::graph::{Topology, TopologyKind};
use gfvl::oracle;
use gfvl::protocol::{AgentState, Engine, ProtocolConfig, SlotEvent, StepSchedule, UpdatePath};
use gfvl::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfvlStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid configuration or argument.
    Config = 2,
    /// Disconnected graph, bad edge or unknown topology.
    Topology = 3,
    /// Data outside the support of the likelihood.
    Data = 4,
    /// Singular FIM, invalid posterior or non-finite value.
    Numerical = 5,
    /// The session has already started or is in the wrong state.
    State = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfvlTopologyKind {
    Star = 0,
    Ring = 1,
    Complete = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfvlModel {
    BetaBernoulli = 0,
    BetaExponential = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfvlUpdatePath {
    Conjugate = 0,
    NonConjugate = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfvlEvent {
    Learn = 0,
    UnlearnForward = 1,
    UnlearnDelete = 2,
}

/// Session parameters. Obtain defaults from [`gfvl_session_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfvlSessionConfig {
    pub model: GfvlModel,
    pub path: GfvlUpdatePath,
    pub alpha: f64,
    /// Nonzero divides each agent's summed loss by its dataset size.
    pub normalize_local_loss: u8,
    pub rho: f64,
    pub local_iters: usize,
    pub samples: usize,
    pub baseline: f64,
    pub prior_a: f64,
    pub prior_b: f64,
    pub seed: u64,
}

/// One executed slot.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfvlSlot {
    pub slot: usize,
    pub iteration: usize,
    pub agent: usize,
    pub event: GfvlEvent,
    /// Global natural parameter after the slot.
    pub eta: [f64; 2],
}

/// Opaque communication graph.
pub struct GfvlTopology {
    inner: Topology,
}

/// Opaque protocol session: a topology, per-agent data and one random walk.
pub struct GfvlSession {
    topology: Topology,
    cfg: ProtocolConfig,
    prior: NaturalParam,
    seed: u64,
    datasets: Vec<Vec<f64>>,
    engine: Option<Engine<ChaCha8Rng>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GfvlStatus {
    match e {
        Error::Config(_) => GfvlStatus::Config,
        Error::DisconnectedGraph | Error::InvalidEdge(..) | Error::InvalidTopology(_) => GfvlStatus::Topology,
        Error::InvalidData(_) => GfvlStatus::Data,
        Error::Domain(_) | Error::SingularFim { .. } | Error::InvalidPosterior(_) | Error::NonFinite(_) => {
            GfvlStatus::Numerical
        }
        Error::InRun { source, .. } => status_of(source),
        Error::Io(_) => GfvlStatus::Io,
    }
}

struct Failure(GfvlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GfvlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GfvlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfvlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            GfvlStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null("out"));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn shape(a: f64, b: f64) -> Result<NaturalParam, Failure> {
    let eta = NaturalParam::from_shape(a, b);
    eta.shape_checked()?;
    Ok(eta)
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length excluding
/// the terminator. Returns 0 when no error has been recorded. `buf` may be
/// null to query the length.
#[no_mangle]
pub unsafe extern "C" fn gfvl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a star (node 0 is the hub), ring or complete graph on `k` nodes.
#[no_mangle]
pub unsafe extern "C" fn gfvl_topology_new(
    kind: GfvlTopologyKind,
    k: usize,
    out: *mut *mut GfvlTopology,
) -> GfvlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let kind = match kind {
            GfvlTopologyKind::Star => TopologyKind::Star,
            GfvlTopologyKind::Ring => TopologyKind::Ring,
            GfvlTopologyKind::Complete => TopologyKind::Complete,
        };
        let inner = Topology::build(kind, k)?;
        *out = Box::into_raw(Box::new(GfvlTopology { inner }));
        Ok(())
    })
}

/// Builds a graph on `k` nodes from `n_edges` undirected edges stored as
/// consecutive `(u, v)` pairs in `edges` (length `2 * n_edges`).
#[no_mangle]
pub unsafe extern "C" fn gfvl_topology_from_edges(
    k: usize,
    edges: *const usize,
    n_edges: usize,
    out: *mut *mut GfvlTopology,
) -> GfvlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let flat = if n_edges == 0 {
            &[][..]
        } else {
            if edges.is_null() {
                return Err(null("edges"));
            }
            slice::from_raw_parts(edges, 2 * n_edges)
        };
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let inner = Topology::from_edges(k, &pairs)?;
        *out = Box::into_raw(Box::new(GfvlTopology { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gfvl_topology_node_count(t: *const GfvlTopology, out: *mut usize) -> GfvlStatus {
    guard(|| {
        *out_ref(out, "out")? = in_ref(t, "topology")?.inner.node_count();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gfvl_topology_degree(t: *const GfvlTopology, node: usize, out: *mut usize) -> GfvlStatus {
    guard(|| {
        let t = &in_ref(t, "topology")?.inner;
        if node >= t.node_count() {
            return Err(Failure(GfvlStatus::Config, format!("node {node} out of range")));
        }
        *out_ref(out, "out")? = t.degree(node);
        Ok(())
    })
}

/// Releases a topology. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gfvl_topology_free(t: *mut GfvlTopology) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// KL(Beta(a1, b1) ‖ Beta(a2, b2)).
#[no_mangle]
pub unsafe extern "C" fn gfvl_beta_kl(a1: f64, b1: f64, a2: f64, b2: f64, out: *mut f64) -> GfvlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = expfam::kl(shape(a1, b1)?, shape(a2, b2)?)?;
        Ok(())
    })
}

/// Expected sufficient statistics (E ln θ, E ln(1 − θ)) of Beta(a, b),
/// written to `out[0..2]`.
#[no_mangle]
pub unsafe extern "C" fn gfvl_beta_moment(a: f64, b: f64, out: *mut f64) -> GfvlStatus {
    guard(|| {
        let out = out_slice(out, 2)?;
        out.copy_from_slice(&expfam::moment_map(shape(a, b)?)?.0);
        Ok(())
    })
}

/// Fisher information of Beta(a, b) in natural coordinates, written
/// row-major to `out[0..4]`.
#[no_mangle]
pub unsafe extern "C" fn gfvl_beta_fim(a: f64, b: f64, out: *mut f64) -> GfvlStatus {
    guard(|| {
        let m = expfam::fim(shape(a, b)?)?.0;
        out_slice(out, 4)?.copy_from_slice(&[m[0][0], m[0][1], m[1][0], m[1][1]]);
        Ok(())
    })
}

/// Defaults for `model`: conjugate path for Beta-Bernoulli, non-conjugate
/// otherwise; α = 1, ρ = 5e-3, L = 1, S = 30, c = 0, Beta(2, 2) prior, seed 0.
#[no_mangle]
pub extern "C" fn gfvl_session_config_default(model: GfvlModel) -> GfvlSessionConfig {
    GfvlSessionConfig {
        model,
        path: match model {
            GfvlModel::BetaBernoulli => GfvlUpdatePath::Conjugate,
            GfvlModel::BetaExponential => GfvlUpdatePath::NonConjugate,
        },
        alpha: 1.0,
        normalize_local_loss: 0,
        rho: 5e-3,
        local_iters: 1,
        samples: 30,
        baseline: 0.0,
        prior_a: 2.0,
        prior_b: 2.0,
        seed: 0,
    }
}

fn protocol_config(c: &GfvlSessionConfig) -> Result<(ProtocolConfig, NaturalParam), Failure> {
    let model = match c.model {
        GfvlModel::BetaBernoulli => LikelihoodModel::Bernoulli,
        GfvlModel::BetaExponential => LikelihoodModel::Exponential,
    };
    let objective = Objective {
        model,
        alpha: c.alpha,
        normalize_local_loss: c.normalize_local_loss != 0,
    };
    let cfg = ProtocolConfig {
        objective,
        path: match c.path {
            GfvlUpdatePath::Conjugate => UpdatePath::Conjugate,
            GfvlUpdatePath::NonConjugate => UpdatePath::NonConjugate,
        },
        rho: c.rho,
        schedule: StepSchedule::Constant,
        local_iters: c.local_iters,
        samples: c.samples,
        baseline: c.baseline,
        max_slots: usize::MAX,
        stop_on_cover: false,
    };
    cfg.validate()?;
    let prior = NaturalParam::from_shape(c.prior_a, c.prior_b);
    if !prior.is_normalizable() {
        return Err(Failure(GfvlStatus::Config, "prior must be a proper Beta".into()));
    }
    Ok((cfg, prior))
}

/// Creates a session on a copy of `topology` with one empty dataset per node.
/// The topology handle may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_new(
    topology: *const GfvlTopology,
    config: *const GfvlSessionConfig,
    out: *mut *mut GfvlSession,
) -> GfvlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let topology = in_ref(topology, "topology")?.inner.clone();
        let config = in_ref(config, "config")?;
        let (cfg, prior) = protocol_config(config)?;
        let k = topology.node_count();
        *out = Box::into_raw(Box::new(GfvlSession {
            topology,
            cfg,
            prior,
            seed: config.seed,
            datasets: vec![Vec::new(); k],
            engine: None,
        }));
        Ok(())
    })
}

/// Replaces agent `agent`'s dataset. Only allowed before the first step.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_set_agent_data(
    s: *mut GfvlSession,
    agent: usize,
    data: *const f64,
    n: usize,
) -> GfvlStatus {
    guard(|| {
        let s = out_ref(s, "session")?;
        if s.engine.is_some() {
            return Err(Failure(GfvlStatus::State, "session has already started".into()));
        }
        if agent >= s.datasets.len() {
            return Err(Failure(GfvlStatus::Config, format!("agent {agent} out of range")));
        }
        let values = if n == 0 {
            Vec::new()
        } else {
            if data.is_null() {
                return Err(null("data"));
            }
            slice::from_raw_parts(data, n).to_vec()
        };
        s.cfg.objective.model.summarize(&values)?;
        s.datasets[agent] = values;
        Ok(())
    })
}

fn engine(s: &mut GfvlSession) -> Result<&mut Engine<ChaCha8Rng>, Failure> {
    if s.engine.is_none() {
        let agents = s
            .datasets
            .iter()
            .enumerate()
            .map(|(k, d)| AgentState::new(k, d.clone()))
            .collect();
        let e = Engine::new(
            s.topology.clone(),
            agents,
            s.cfg.clone(),
            s.prior,
            ChaCha8Rng::seed_from_u64(s.seed),
        )?;
        s.engine = Some(e);
    }
    Ok(s.engine.as_mut().unwrap())
}

fn slot_of(r: &gfvl::protocol::SlotRecord) -> GfvlSlot {
    GfvlSlot {
        slot: r.slot,
        iteration: r.iteration,
        agent: r.agent,
        event: match r.event {
            SlotEvent::Learn => GfvlEvent::Learn,
            SlotEvent::UnlearnForward => GfvlEvent::UnlearnForward,
            SlotEvent::UnlearnDelete => GfvlEvent::UnlearnDelete,
        },
        eta: r.global_nat.0,
    }
}

/// Executes one slot. `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_step(s: *mut GfvlSession, out: *mut GfvlSlot) -> GfvlStatus {
    guard(|| {
        let rec = engine(out_ref(s, "session")?)?.step()?;
        if let Some(o) = out.as_mut() {
            *o = slot_of(&rec);
        }
        Ok(())
    })
}

/// Executes up to `n_slots` slots. With `stop_on_cover` nonzero, stops early
/// once every live agent has been visited. `executed` (nullable) receives the
/// number of slots run.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_run(
    s: *mut GfvlSession,
    n_slots: usize,
    stop_on_cover: u8,
    executed: *mut usize,
) -> GfvlStatus {
    guard(|| {
        let e = engine(out_ref(s, "session")?)?;
        let mut done = 0;
        let result = (|| {
            while done < n_slots {
                if stop_on_cover != 0 && e.all_covered() {
                    break;
                }
                e.step()?;
                done += 1;
            }
            Ok::<(), Error>(())
        })();
        if let Some(x) = executed.as_mut() {
            *x = done;
        }
        result.map_err(Failure::from)
    })
}

/// Current global natural parameter (a − 1, b − 1), written to `out[0..2]`.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_global(s: *const GfvlSession, out: *mut f64) -> GfvlStatus {
    guard(|| {
        let s = in_ref(s, "session")?;
        let eta = match &s.engine {
            Some(e) => e.global().global_nat.0,
            None => s.prior.0,
        };
        out_slice(out, 2)?.copy_from_slice(&eta);
        Ok(())
    })
}

/// Slots executed so far.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_slot(s: *const GfvlSession, out: *mut usize) -> GfvlStatus {
    guard(|| {
        let s = in_ref(s, "session")?;
        *out_ref(out, "out")? = s.engine.as_ref().map_or(0, |e| e.slot());
        Ok(())
    })
}

/// Queues deletion of `agent`'s data; it happens the next time the walk
/// schedules that agent.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_request_unlearning(s: *mut GfvlSession, agent: usize) -> GfvlStatus {
    guard(|| {
        engine(out_ref(s, "session")?)?.request_unlearning(agent)?;
        Ok(())
    })
}

/// Number of deletions requested but not yet carried out.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_pending_deletions(s: *const GfvlSession, out: *mut usize) -> GfvlStatus {
    guard(|| {
        let s = in_ref(s, "session")?;
        *out_ref(out, "out")? = s.engine.as_ref().map_or(0, |e| e.pending_deletions().len());
        Ok(())
    })
}

/// KL(global ‖ exact tempered posterior over the non-deleted agents' data).
/// Conjugate model only.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_kl_to_exact(s: *const GfvlSession, out: *mut f64) -> GfvlStatus {
    guard(|| {
        let s = in_ref(s, "session")?;
        let out = out_ref(out, "out")?;
        let objective = s.cfg.objective;
        let (global, live): (NaturalParam, Vec<Vec<f64>>) = match &s.engine {
            Some(e) => (
                e.global().global_nat,
                e.agents()
                    .iter()
                    .map(|a| if a.deleted { Vec::new() } else { a.dataset.clone() })
                    .collect(),
            ),
            None => (s.prior, s.datasets.clone()),
        };
        let exact = oracle::exact_conjugate_posterior(s.prior, &live, &objective, None)?;
        *out = oracle::kl_variational_to_oracle(global, exact)?;
        Ok(())
    })
}

/// Releases a session. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gfvl_session_free(s: *mut GfvlSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}
