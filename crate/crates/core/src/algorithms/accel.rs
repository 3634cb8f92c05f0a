//! Accelerated mini-batch SGD, its Moreau-smoothed variant, and the
//! wait-and-collect layout for delay graphs.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{round_count, round_nodes, GraphLabel, NodeId, OracleGraph};
use crate::instances::{project_ball, LipschitzSmoothClass};
use crate::oracle::{NodeRecord, OracleKind, OracleMode, Query};

use super::{NodeProgram, OutputCtx, QueryCtx};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// alpha_t = 2 / (t + 1); alpha_1 = 1 keeps the first momentum point at
    /// the initial iterate.
    Classic,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum EtaRule {
    /// eta_t = (t + 1) / (4 beta); the smooth optimization step.
    Deterministic,
    /// min((t + 1) / (4 beta), B (t + 1) sqrt(b) / (2 L T^1.5)); the first
    /// term is dropped when beta is infinite.
    StochasticCapped,
    Constant(f64),
}

/// Momentum mixing weights, step sizes and the smoothing constant used by the
/// accelerated recursion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AcceleratedSchedule {
    pub beta: f64,
    pub alpha: AlphaRule,
    pub eta: EtaRule,
}

impl AcceleratedSchedule {
    /// Stochastic default: beta = H with the statistical step cap.
    pub fn default_for(class: &LipschitzSmoothClass) -> Self {
        AcceleratedSchedule {
            beta: class.smoothness,
            alpha: AlphaRule::Classic,
            eta: EtaRule::StochasticCapped,
        }
    }

    /// Pure optimization schedule for noiseless runs.
    pub fn deterministic(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "deterministic schedule needs finite beta > 0, got {beta}"
            )));
        }
        Ok(AcceleratedSchedule {
            beta,
            alpha: AlphaRule::Classic,
            eta: EtaRule::Deterministic,
        })
    }

    pub fn alpha(&self, t: usize) -> f64 {
        match self.alpha {
            AlphaRule::Classic => 2.0 / (t as f64 + 1.0),
            AlphaRule::Constant(v) => v,
        }
    }

    pub fn eta(
        &self,
        class: &LipschitzSmoothClass,
        rounds: usize,
        batch: usize,
        t: usize,
    ) -> Result<f64> {
        let tf = t as f64;
        let smooth_term = if self.beta.is_finite() {
            Some((tf + 1.0) / (4.0 * self.beta))
        } else {
            None
        };
        let value = match self.eta {
            EtaRule::Constant(v) => v,
            EtaRule::Deterministic => smooth_term.ok_or_else(|| {
                Error::InvalidParameter("deterministic eta rule needs a finite beta".to_string())
            })?,
            EtaRule::StochasticCapped => {
                let stochastic = class.radius * (tf + 1.0) * (batch as f64).sqrt()
                    / (2.0 * class.lipschitz * (rounds as f64).powf(1.5));
                match smooth_term {
                    Some(s) => s.min(stochastic),
                    None => stochastic,
                }
            }
        };
        if !(value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "accelerated step eta_{t} = {value} must be positive"
            )));
        }
        Ok(value)
    }
}

/// The three-sequence accelerated recursion as a pure fold:
///   w_t = alpha_t y_t + (1 - alpha_t) x_t
///   y_{t+1} = Pi_B(y_t - eta_t g_t)
///   x_{t+1} = alpha_t y_{t+1} + (1 - alpha_t) x_t
/// where g_t is the batch-mean gradient measured at w_t. The long dual step
/// accumulates from y_t; combined with alpha_t eta_t = 1/(2 beta) this is the
/// accelerated stochastic-approximation scheme and attains the 1/T^2
/// optimization rate on smooth objectives.
#[derive(Debug, Clone)]
pub struct AccelState {
    x: Array1<f64>,
    y: Array1<f64>,
    round: usize,
}

impl AccelState {
    pub fn new(dim: usize) -> Self {
        AccelState {
            x: Array1::zeros(dim),
            y: Array1::zeros(dim),
            round: 1,
        }
    }

    /// The point the next batch of gradients is queried at.
    pub fn momentum_point(&self, schedule: &AcceleratedSchedule) -> Array1<f64> {
        let alpha = schedule.alpha(self.round);
        let mut w = self.y.mapv(|v| alpha * v);
        w.scaled_add(1.0 - alpha, &self.x);
        w
    }

    /// Consumes the batch-mean gradient measured at the current momentum point.
    pub fn apply(
        &mut self,
        schedule: &AcceleratedSchedule,
        class: &LipschitzSmoothClass,
        rounds: usize,
        batch: usize,
        mean_grad: &Array1<f64>,
    ) -> Result<()> {
        let alpha = schedule.alpha(self.round);
        let eta = schedule.eta(class, rounds, batch, self.round)?;
        let mut y_next = self.y.clone();
        y_next.scaled_add(-eta, mean_grad);
        project_ball(&mut y_next, class.radius);
        let mut x_next = y_next.mapv(|v| alpha * v);
        x_next.scaled_add(1.0 - alpha, &self.x);
        self.x = x_next;
        self.y = y_next;
        self.round += 1;
        Ok(())
    }

    /// Final averaged iterate.
    pub fn estimate(&self) -> &Array1<f64> {
        &self.x
    }
}

fn mean_of(dim: usize, grads: impl Iterator<Item = Array1<f64>>) -> Array1<f64> {
    let mut sum = Array1::zeros(dim);
    let mut count = 0usize;
    for g in grads {
        sum += &g;
        count += 1;
    }
    if count > 0 {
        sum.mapv_inplace(|v| v / count as f64);
    }
    sum
}

/// Accelerated mini-batch SGD on a round-structured graph: all nodes of a
/// round query the stochastic gradient at the same momentum point. Output is
/// the final averaged iterate x_T.
pub struct AmbSgd {
    class: LipschitzSmoothClass,
    schedule: AcceleratedSchedule,
    rounds: usize,
    batch: usize,
    round_ids: Vec<Vec<NodeId>>,
    node_round: Vec<usize>,
    node_slot: Vec<usize>,
    z_table: Option<Vec<Vec<u32>>>,
}

pub fn amb_sgd(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    batch: Option<usize>,
    schedule: Option<AcceleratedSchedule>,
) -> Result<AmbSgd> {
    let rounds = round_count(graph)?;
    let mut round_ids = Vec::with_capacity(rounds);
    let mut node_round = vec![0usize; graph.size()];
    let mut node_slot = vec![0usize; graph.size()];
    let mut width = 0usize;
    for r in 0..rounds {
        let ids = round_nodes(graph, r)?;
        for (slot, &id) in ids.iter().enumerate() {
            node_round[id] = r;
            node_slot[id] = slot;
        }
        width = ids.len();
        round_ids.push(ids);
    }
    let batch = batch.unwrap_or(width);
    if batch != width {
        return Err(Error::Scheduling(format!(
            "batch {batch} does not match the graph's round width {width}"
        )));
    }
    let schedule = schedule.unwrap_or_else(|| AcceleratedSchedule::default_for(&class));
    Ok(AmbSgd {
        class,
        schedule,
        rounds,
        batch,
        round_ids,
        node_round,
        node_slot,
        z_table: None,
    })
}

impl AmbSgd {
    /// Pins the z drawn at (round, slot); switches the program to active
    /// queries. Used to pair randomness across graph layouts.
    pub fn with_z_table(mut self, table: Vec<Vec<u32>>) -> Result<Self> {
        validate_z_table(&table, self.rounds, self.batch)?;
        self.z_table = Some(table);
        Ok(self)
    }

    pub fn schedule(&self) -> &AcceleratedSchedule {
        &self.schedule
    }

    fn momentum_at_round<F>(&self, dim: usize, round: usize, lookup: &mut F) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let mut state = AccelState::new(dim);
        for r in 0..round {
            let mut grads = Vec::with_capacity(self.batch);
            for &id in &self.round_ids[r] {
                grads.push(lookup(id)?);
            }
            let mean = mean_of(dim, grads.into_iter());
            state.apply(&self.schedule, &self.class, self.rounds, self.batch, &mean)?;
        }
        Ok(state.momentum_point(&self.schedule))
    }

    fn final_estimate<F>(&self, dim: usize, lookup: &mut F) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let mut state = AccelState::new(dim);
        for r in 0..self.rounds {
            let mut grads = Vec::with_capacity(self.batch);
            for &id in &self.round_ids[r] {
                grads.push(lookup(id)?);
            }
            let mean = mean_of(dim, grads.into_iter());
            state.apply(&self.schedule, &self.class, self.rounds, self.batch, &mean)?;
        }
        Ok(state.estimate().clone())
    }
}

impl NodeProgram for AmbSgd {
    fn name(&self) -> &'static str {
        "amb_sgd"
    }

    fn oracle_mode(&self) -> OracleMode {
        if self.z_table.is_some() {
            OracleMode::ActiveQuery
        } else {
            OracleMode::FullyStochastic
        }
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        let round = self.node_round[ctx.node];
        let mut lookup = |id: NodeId| Ok(ctx.visible.get(id)?.answer.gradient.clone());
        let w = self.momentum_at_round(ctx.dimension(), round, &mut lookup)?;
        Ok(match &self.z_table {
            Some(table) => Query::GradientAt {
                x: w,
                z: table[round][self.node_slot[ctx.node]],
            },
            None => Query::Gradient { x: w },
        })
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        let mut lookup = |id: NodeId| Ok(ctx.records[id].answer.gradient.clone());
        self.final_estimate(ctx.dimension(), &mut lookup)
    }
}

/// A-MB-SGD driven by Moreau-envelope gradients: each node queries the prox
/// oracle at the momentum point with beta = min(L T, H) and the update uses
/// beta (w - prox). Optimal for non-smooth classes when a prox oracle exists.
pub struct SmoothedAmbSgd {
    inner: AmbSgd,
    envelope_beta: f64,
}

pub fn smoothed_amb_sgd(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    batch: Option<usize>,
    schedule: Option<AcceleratedSchedule>,
) -> Result<SmoothedAmbSgd> {
    let rounds = round_count(graph)?;
    let envelope_beta = if class.smoothness.is_finite() {
        class.smoothness.min(class.lipschitz * rounds as f64)
    } else {
        class.lipschitz * rounds as f64
    };
    // The smoothed objective is envelope_beta-smooth; the default schedule
    // accelerates against that constant.
    let schedule = schedule.unwrap_or(AcceleratedSchedule {
        beta: envelope_beta,
        alpha: AlphaRule::Classic,
        eta: EtaRule::StochasticCapped,
    });
    let inner = amb_sgd(class, graph, batch, Some(schedule))?;
    Ok(SmoothedAmbSgd {
        inner,
        envelope_beta,
    })
}

impl SmoothedAmbSgd {
    pub fn envelope_beta(&self) -> f64 {
        self.envelope_beta
    }

    fn envelope_gradient(&self, record: &NodeRecord) -> Result<Array1<f64>> {
        let prox_point = record.answer.prox_point.as_ref().ok_or_else(|| {
            Error::UnsupportedOracle(format!("node {} answer carries no prox point", record.node))
        })?;
        let mut g = record.query.point().clone();
        g.scaled_add(-1.0, prox_point);
        g.mapv_inplace(|v| v * self.envelope_beta);
        Ok(g)
    }
}

impl NodeProgram for SmoothedAmbSgd {
    fn name(&self) -> &'static str {
        "smoothed_amb_sgd"
    }

    fn required_oracle(&self) -> OracleKind {
        OracleKind::Prox
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        if !ctx.instance.supports_prox() {
            return Err(Error::UnsupportedOracle(format!(
                "{} provides no prox oracle",
                ctx.instance.name()
            )));
        }
        let round = self.inner.node_round[ctx.node];
        let mut lookup = |id: NodeId| self.envelope_gradient(ctx.visible.get(id)?);
        let w = self
            .inner
            .momentum_at_round(ctx.dimension(), round, &mut lookup)?;
        Ok(Query::Prox {
            x: w,
            beta: self.envelope_beta,
        })
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        let mut lookup = |id: NodeId| self.envelope_gradient(&ctx.records[id]);
        self.inner.final_estimate(ctx.dimension(), &mut lookup)
    }
}

/// Stage layout: `Standard` spends 2 tau nodes per stage; `Extended` adds a
/// dedicated update node, spending 2 tau + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaitAndCollectVariant {
    #[default]
    Standard,
    Extended,
}

/// Wait-and-collect on a constant-delay graph: each stage spends tau nodes
/// querying gradients at one point and the remaining nodes idling while
/// those responses travel, then performs one accelerated mini-batch update
/// of batch tau. Trajectories match `amb_sgd(batch = tau, rounds = stages)`
/// under paired gradient draws.
pub struct WaitAndCollect {
    class: LipschitzSmoothClass,
    schedule: AcceleratedSchedule,
    tau: usize,
    stride: usize,
    stages: usize,
    total: usize,
    z_table: Option<Vec<Vec<u32>>>,
}

pub fn wait_and_collect(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    schedule: Option<AcceleratedSchedule>,
) -> Result<WaitAndCollect> {
    wait_and_collect_variant(class, graph, schedule, WaitAndCollectVariant::Standard)
}

pub fn wait_and_collect_variant(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    schedule: Option<AcceleratedSchedule>,
    variant: WaitAndCollectVariant,
) -> Result<WaitAndCollect> {
    let (total, tau) = match graph.label() {
        GraphLabel::Delay { t, tau } => {
            let first = tau[0];
            if tau.iter().any(|&d| d != first) {
                return Err(Error::Scheduling(
                    "wait-and-collect needs a constant delay schedule".to_string(),
                ));
            }
            (*t, first)
        }
        other => {
            return Err(Error::Scheduling(format!(
                "wait-and-collect needs a delay graph, got {other:?}"
            )))
        }
    };
    let stride = match variant {
        WaitAndCollectVariant::Standard => 2 * tau,
        WaitAndCollectVariant::Extended => 2 * tau + 1,
    };
    let stages = total / stride;
    if stages == 0 {
        log::warn!(
            "wait-and-collect on T = {total} with tau = {tau} has zero stages; \
             the output stays at the initial point"
        );
    }
    let schedule = schedule.unwrap_or_else(|| AcceleratedSchedule::default_for(&class));
    Ok(WaitAndCollect {
        class,
        schedule,
        tau,
        stride,
        stages,
        total,
        z_table: None,
    })
}

impl WaitAndCollect {
    pub fn with_z_table(mut self, table: Vec<Vec<u32>>) -> Result<Self> {
        validate_z_table(&table, self.stages, self.tau)?;
        self.z_table = Some(table);
        Ok(self)
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Gradient-phase node ids of one stage.
    fn stage_nodes(&self, stage: usize) -> std::ops::Range<NodeId> {
        let base = stage * self.stride;
        base..base + self.tau
    }

    fn momentum_at_stage<F>(&self, dim: usize, stage: usize, lookup: &mut F) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let mut state = AccelState::new(dim);
        for s in 0..stage {
            let mut grads = Vec::with_capacity(self.tau);
            for id in self.stage_nodes(s) {
                grads.push(lookup(id)?);
            }
            let mean = mean_of(dim, grads.into_iter());
            state.apply(&self.schedule, &self.class, self.stages, self.tau, &mean)?;
        }
        Ok(state.momentum_point(&self.schedule))
    }
}

impl NodeProgram for WaitAndCollect {
    fn name(&self) -> &'static str {
        "wait_and_collect"
    }

    fn oracle_mode(&self) -> OracleMode {
        if self.z_table.is_some() {
            OracleMode::ActiveQuery
        } else {
            OracleMode::FullyStochastic
        }
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        let stage = ctx.node / self.stride;
        let pos = ctx.node % self.stride;
        if stage >= self.stages || pos >= self.tau {
            // Waiting (or leftover) node: a discarded query at the origin.
            return Ok(Query::Gradient {
                x: Array1::zeros(ctx.dimension()),
            });
        }
        let mut lookup = |id: NodeId| Ok(ctx.visible.get(id)?.answer.gradient.clone());
        let w = self.momentum_at_stage(ctx.dimension(), stage, &mut lookup)?;
        Ok(match &self.z_table {
            Some(table) => Query::GradientAt {
                x: w,
                z: table[stage][pos],
            },
            None => Query::Gradient { x: w },
        })
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        debug_assert_eq!(ctx.records.len(), self.total);
        let mut state = AccelState::new(ctx.dimension());
        for s in 0..self.stages {
            let grads = self
                .stage_nodes(s)
                .map(|id| ctx.records[id].answer.gradient.clone());
            let mean = mean_of(ctx.dimension(), grads);
            state.apply(&self.schedule, &self.class, self.stages, self.tau, &mean)?;
        }
        Ok(state.estimate().clone())
    }
}

fn validate_z_table(table: &[Vec<u32>], rounds: usize, width: usize) -> Result<()> {
    if table.len() < rounds || table.iter().take(rounds).any(|row| row.len() < width) {
        return Err(Error::InvalidParameter(format!(
            "z table must cover {rounds} rounds of width {width}"
        )));
    }
    Ok(())
}
