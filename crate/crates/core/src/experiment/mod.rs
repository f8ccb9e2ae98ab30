//! Multi-seed experiment harness behind the `gfvl` command-line tool.
//!
//! Datasets are drawn once per experiment from `base_seed`; run `r` drives its
//! walk (and REINFORCE sampling) from its own ChaCha stream, so results do not
//! depend on how runs are spread across worker threads.

mod config;
mod csv;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ExperimentConfig, TopologySpec};
pub use csv::{format_float, write_cover_csv, write_summary_csv, write_trace_csv};

use crate::error::{Error, Result};
use crate::expfam::NaturalParam;
use crate::graph::{self, McEstimate, NodeId, Topology, TopologyKind};
use crate::oracle::{self, GridDensity, Reference};
use crate::protocol::{agents_from_datasets, Engine, ProtocolConfig, SlotEvent};

const DATA_STREAM: u64 = 0;
const COVER_STREAM: u64 = u64::MAX;

/// Deterministic RNG for one seeded stream.
pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    rng
}

/// One CSV row of a per-run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run_id: u64,
    /// Slot index, or total local iterations for `sweep-l`.
    pub slot: usize,
    pub scheduled_agent: NodeId,
    pub event: SlotEvent,
    pub kl: f64,
    pub arm: String,
}

/// Median and 75% band (nearest-rank 12.5% / 87.5% quantiles) across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub slot: usize,
    pub median: f64,
    pub q_low: f64,
    pub q_high: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnOutput {
    pub rows: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
    /// Slot of the deletion per run, if it happened within the traced window.
    pub deletion_slots: Vec<Option<usize>>,
    /// Terminal parameters of the unlearning and retraining arms per run.
    pub terminals: Vec<(NaturalParam, NaturalParam)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverRow {
    pub quantity: String,
    pub topology: String,
    pub k: usize,
    pub estimate: McEstimate,
    pub formula: Option<f64>,
}

/// Nearest-rank quantile of already sorted values.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// N_k i.i.d. draws per agent from the model at θ*.
pub fn generate_data(cfg: &ExperimentConfig, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let theta = cfg.effective_theta_star();
    (0..k)
        .map(|_| {
            (0..cfg.points_per_agent)
                .map(|_| cfg.model.sample_point(theta, rng))
                .collect()
        })
        .collect()
}

enum OracleTarget {
    Closed(NaturalParam),
    Grid(Box<GridDensity>),
}

impl OracleTarget {
    fn build(cfg: &ExperimentConfig, datasets: &[Vec<f64>], exclude: Option<NodeId>) -> Result<Self> {
        let objective = cfg.objective();
        if cfg.model.is_conjugate() {
            oracle::exact_conjugate_posterior(cfg.prior(), datasets, &objective, exclude).map(OracleTarget::Closed)
        } else {
            oracle::grid_generalized_posterior(cfg.prior(), datasets, &objective, cfg.grid_points, exclude)
                .map(|g| OracleTarget::Grid(Box::new(g)))
        }
    }

    fn kl(&self, q: NaturalParam) -> Result<f64> {
        let reference = match self {
            OracleTarget::Closed(p) => Reference::Closed(*p),
            OracleTarget::Grid(g) => Reference::Grid(g),
        };
        let value = oracle::kl_variational_to_oracle(q, reference)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("KL divergence".into()));
        }
        Ok(value)
    }
}

struct Prepared {
    topology: Topology,
    datasets: Vec<Vec<f64>>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let topology = cfg.build_topology()?;
    let datasets = generate_data(cfg, topology.node_count(), &mut stream_rng(cfg.base_seed, DATA_STREAM))?;
    Ok(Prepared { topology, datasets })
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn with_context<T>(run: u64, slot: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InRun {
        run,
        slot,
        source: Box::new(e),
    })
}

/// Runs one traced walk of `slots` slots and scores every slot against the
/// oracle. `slot_scale` multiplies the reported slot index.
fn traced_run(
    engine: &mut Engine<ChaCha8Rng>,
    slots: usize,
    oracle: &OracleTarget,
    run_id: u64,
    arm: &str,
    slot_scale: usize,
) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::with_capacity(slots);
    for i in 1..=slots {
        let rec = with_context(run_id, i, engine.step())?;
        let kl = with_context(run_id, i, oracle.kl(rec.global_nat))?;
        rows.push(TraceRow {
            run_id,
            slot: i * slot_scale,
            scheduled_agent: rec.agent,
            event: rec.event,
            kl,
            arm: arm.to_string(),
        });
    }
    Ok(rows)
}

/// Per-(arm, slot) median and 75% band. Arms keep their first-seen order.
pub fn summarize(rows: &[TraceRow]) -> Vec<SummaryRow> {
    let mut arms: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let arm = match arms.iter().position(|a| *a == r.arm) {
            Some(i) => i,
            None => {
                arms.push(&r.arm);
                arms.len() - 1
            }
        };
        groups.entry((arm, r.slot)).or_default().push(r.kl);
    }
    groups
        .into_iter()
        .map(|((arm, slot), mut values)| {
            values.sort_by(f64::total_cmp);
            SummaryRow {
                arm: arms[arm].to_string(),
                slot,
                median: nearest_rank(&values, 0.5),
                q_low: nearest_rank(&values, 0.125),
                q_high: nearest_rank(&values, 0.875),
                runs: values.len(),
            }
        })
        .collect()
}

/// `learn`: independent seeded runs traced as KL to the full-data oracle.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = prepare(cfg)?;
    let oracle = OracleTarget::build(cfg, &prepared.datasets, None)?;
    let protocol = cfg.protocol();
    let slots = protocol.max_slots;
    let per_run: Vec<Vec<TraceRow>> = in_pool(cfg.jobs, || {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|run_id| {
                let mut engine = Engine::new(
                    prepared.topology.clone(),
                    agents_from_datasets(&prepared.datasets),
                    protocol.clone(),
                    cfg.prior(),
                    stream_rng(cfg.base_seed, run_id + 1),
                )?;
                traced_run(&mut engine, slots, &oracle, run_id, "", 1)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let rows: Vec<TraceRow> = per_run.into_iter().flatten().collect();
    let summary = summarize(&rows);
    Ok(ExperimentOutput { rows, summary })
}

/// `sweep-l`: for each L, a fixed budget of `total_iters` local iterations
/// (`total_iters / L` slots). The slot column holds L × i.
pub fn run_sweep_l(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = prepare(cfg)?;
    let oracle = OracleTarget::build(cfg, &prepared.datasets, None)?;
    let mut rows = Vec::new();
    for &l in &cfg.sweep_l {
        let mut protocol = cfg.protocol();
        protocol.local_iters = l;
        let slots = (cfg.total_iters / l).max(1);
        let arm = format!("L={l}");
        let per_run: Vec<Vec<TraceRow>> = in_pool(cfg.jobs, || {
            (0..cfg.runs as u64)
                .into_par_iter()
                .map(|run_id| {
                    let mut engine = Engine::new(
                        prepared.topology.clone(),
                        agents_from_datasets(&prepared.datasets),
                        protocol.clone(),
                        cfg.prior(),
                        stream_rng(cfg.base_seed, run_id + 1),
                    )?;
                    traced_run(&mut engine, slots, &oracle, run_id, &arm, l)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        rows.extend(per_run.into_iter().flatten());
    }
    let summary = summarize(&rows);
    Ok(ExperimentOutput { rows, summary })
}

/// Expected slots to visit every node: exact for complete graphs, otherwise
/// a Monte-Carlo estimate on a dedicated stream.
pub fn expected_cover_slots(cfg: &ExperimentConfig, topology: &Topology) -> f64 {
    if cfg.topology == TopologySpec::Kind(TopologyKind::Complete) {
        1.0 + graph::complete_cover_steps(topology.node_count())
    } else {
        let mut rng = stream_rng(cfg.base_seed, COVER_STREAM);
        graph::cover_time_mc(topology, 2000, &mut rng).mean
    }
}

/// `unlearn`: per seed, train for a fixed budget, then trace (a) the
/// unlearning continuation and (b) retraining from scratch without the
/// target, both against the leave-one-out oracle.
pub fn run_unlearn_experiment(cfg: &ExperimentConfig) -> Result<UnlearnOutput> {
    let target = cfg
        .unlearn_target
        .ok_or_else(|| Error::Config("unlearn needs unlearn_target".into()))?;
    let prepared = prepare(cfg)?;
    if target >= prepared.topology.node_count() {
        return Err(Error::Config(format!("unlearn_target {target} is not an agent")));
    }
    let oracle = OracleTarget::build(cfg, &prepared.datasets, Some(target))?;
    let train_slots = cfg
        .train_slots
        .unwrap_or_else(|| (5.0 * expected_cover_slots(cfg, &prepared.topology)).ceil() as usize);
    let trace_slots = cfg.unlearn_slots.unwrap_or(train_slots);
    let protocol = ProtocolConfig {
        max_slots: train_slots.max(1),
        ..cfg.protocol()
    };

    type PerRun = (Vec<TraceRow>, Option<usize>, (NaturalParam, NaturalParam));
    let per_run: Vec<PerRun> = in_pool(cfg.jobs, || {
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|run_id| {
                let base = 3 * run_id;
                let mut trainer = Engine::new(
                    prepared.topology.clone(),
                    agents_from_datasets(&prepared.datasets),
                    protocol.clone(),
                    cfg.prior(),
                    stream_rng(cfg.base_seed, base + 1),
                )?;
                for i in 1..=train_slots {
                    with_context(run_id, i, trainer.step())?;
                }

                let mut unlearner = Engine::resume(
                    prepared.topology.clone(),
                    trainer.global().clone(),
                    trainer.agents().to_vec(),
                    protocol.clone(),
                    stream_rng(cfg.base_seed, base + 2),
                )?;
                unlearner.request_unlearning(target)?;
                let mut rows = traced_run(&mut unlearner, trace_slots, &oracle, run_id, "unlearn", 1)?;
                let deletion = rows.iter().find(|r| r.event == SlotEvent::UnlearnDelete).map(|r| r.slot);

                let mut retrainer = Engine::new(
                    prepared.topology.clone(),
                    agents_from_datasets(&prepared.datasets),
                    protocol.clone(),
                    cfg.prior(),
                    stream_rng(cfg.base_seed, base + 3),
                )?;
                retrainer.exclude(target)?;
                rows.extend(traced_run(&mut retrainer, trace_slots, &oracle, run_id, "retrain", 1)?);
                let terminals = (unlearner.global().global_nat, retrainer.global().global_nat);
                Ok((rows, deletion, terminals))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut rows = Vec::new();
    let mut deletion_slots = Vec::new();
    let mut terminals = Vec::new();
    for (r, d, t) in per_run {
        rows.extend(r);
        deletion_slots.push(d);
        terminals.push(t);
    }
    let summary = summarize(&rows);
    Ok(UnlearnOutput {
        rows,
        summary,
        deletion_slots,
        terminals,
    })
}

/// `cover-time`: Monte-Carlo cover, hitting and retrain-cover times next to
/// the complete-graph closed forms.
pub fn run_covertime(cfg: &ExperimentConfig) -> Result<Vec<CoverRow>> {
    cfg.validate()?;
    let topology = cfg.build_topology()?;
    let k = topology.node_count();
    let target = cfg.unlearn_target.unwrap_or(k - 1);
    if target >= k {
        return Err(Error::Config(format!("unlearn_target {target} is not a node")));
    }
    let complete = cfg.topology == TopologySpec::Kind(TopologyKind::Complete);
    let trials = cfg.cover_trials;
    let name = cfg.topology.to_string();

    let mut rng = stream_rng(cfg.base_seed, 1);
    let cover = graph::cover_time_mc(&topology, trials, &mut rng).offset(-1.0);
    let mut rng = stream_rng(cfg.base_seed, 2);
    let hitting = graph::hitting_time_mc(&topology, target, trials, &mut rng);
    let rest: BTreeSet<NodeId> = (0..k).filter(|&n| n != target).collect();
    let mut rng = stream_rng(cfg.base_seed, 3);
    let samples: Vec<f64> = (0..trials)
        .map(|_| graph::cover_subset_slots(&topology, &rest, &mut rng) as f64)
        .collect();
    let retrain = McEstimate::from_samples(&samples);

    let retrain_formula = (k >= 2).then(|| {
        (1..k - 1)
            .map(|i| (k - 2) as f64 / (k - 1 - i) as f64)
            .sum::<f64>()
    });
    Ok(vec![
        CoverRow {
            quantity: "cover_additional_steps".into(),
            topology: name.clone(),
            k,
            estimate: cover,
            formula: complete.then(|| graph::complete_cover_steps(k)),
        },
        CoverRow {
            quantity: "hitting_slots".into(),
            topology: name.clone(),
            k,
            estimate: hitting,
            formula: complete.then(|| graph::complete_hitting_slots(k)),
        },
        CoverRow {
            quantity: "retrain_cover_slots".into(),
            topology: name,
            k,
            estimate: retrain,
            formula: if complete { retrain_formula } else { None },
        },
    ])
}
