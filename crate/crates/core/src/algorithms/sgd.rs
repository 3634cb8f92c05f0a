//! Plain stochastic gradient methods: sequential, delayed, and locally
//! parallel SGD.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{GraphLabel, NodeId, OracleGraph};
use crate::instances::{project_ball, LipschitzSmoothClass};
use crate::oracle::Query;

use super::{lipschitz_step, NodeProgram, OutputCtx, QueryCtx};

/// Step-size rule; all shipped rules are constant over the run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// Fixed step size.
    Constant(f64),
    /// scale * B / (L sqrt(T)).
    Lipschitz { scale: f64 },
    /// scale * min(1 / (2H), B / (L sqrt(T))); reduces to `Lipschitz` when
    /// H is infinite.
    SmoothCapped { scale: f64 },
}

impl StepSchedule {
    pub fn step(&self, class: &LipschitzSmoothClass, total: usize) -> f64 {
        match *self {
            StepSchedule::Constant(v) => v,
            StepSchedule::Lipschitz { scale } => scale * lipschitz_step(class, total),
            StepSchedule::SmoothCapped { scale } => {
                let base = lipschitz_step(class, total);
                if class.smoothness.is_finite() {
                    scale * base.min(0.5 / class.smoothness)
                } else {
                    scale * base
                }
            }
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Lipschitz { scale: 1.0 }
    }
}

/// Projected SGD along one directed chain of the graph; every node off the
/// chain issues a discarded query at the origin (the budget model charges it
/// either way). Output is the uniform average of the chain's query points.
pub struct SequentialSgd {
    class: LipschitzSmoothClass,
    steps: usize,
    schedule: StepSchedule,
    chain: Vec<NodeId>,
    position: Vec<Option<usize>>,
}

pub fn sequential_sgd(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    steps: usize,
    schedule: StepSchedule,
) -> Result<SequentialSgd> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".to_string()));
    }
    let mut chain = graph.longest_path();
    if chain.len() < steps {
        return Err(Error::Scheduling(format!(
            "graph provides a chain of {} nodes, {steps} required",
            chain.len()
        )));
    }
    chain.truncate(steps);
    let mut position = vec![None; graph.size()];
    for (p, &id) in chain.iter().enumerate() {
        position[id] = Some(p);
    }
    Ok(SequentialSgd {
        class,
        steps,
        schedule,
        chain,
        position,
    })
}

impl SequentialSgd {
    fn iterate_before(&self, ctx: &QueryCtx<'_>, pos: usize) -> Result<Array1<f64>> {
        let eta = self.schedule.step(&self.class, self.steps);
        let mut x = Array1::zeros(ctx.dimension());
        for &id in &self.chain[..pos] {
            let rec = ctx.visible.get(id)?;
            x.scaled_add(-eta, &rec.answer.gradient);
            project_ball(&mut x, self.class.radius);
        }
        Ok(x)
    }
}

impl NodeProgram for SequentialSgd {
    fn name(&self) -> &'static str {
        "sequential_sgd"
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        match self.position[ctx.node] {
            Some(pos) => Ok(Query::Gradient {
                x: self.iterate_before(ctx, pos)?,
            }),
            None => Ok(Query::Gradient {
                x: Array1::zeros(ctx.dimension()),
            }),
        }
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        let mut mean = Array1::zeros(ctx.dimension());
        for &id in &self.chain {
            mean += ctx.records[id].query.point();
        }
        mean.mapv_inplace(|v| v / self.steps as f64);
        Ok(mean)
    }
}

/// SGD on the delay graph. The response queried at node s arrives at node
/// s + tau_s; each node queries the freshest iterate (its visible responses
/// folded in arrival order, steps indexed by the source node). Output is the
/// tail average over the last ceil(T/2) iterates of the full arrival fold.
pub struct DelayedSgd {
    class: LipschitzSmoothClass,
    total: usize,
    schedule: StepSchedule,
    /// (arrival time, source node), sorted.
    arrivals: Vec<(usize, NodeId)>,
}

pub fn delayed_sgd(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    schedule: StepSchedule,
) -> Result<DelayedSgd> {
    let tau = match graph.label() {
        GraphLabel::Delay { tau, .. } => tau.clone(),
        other => {
            return Err(Error::Scheduling(format!(
                "delayed SGD needs a delay graph, got {other:?}"
            )))
        }
    };
    let total = tau.len();
    let mut arrivals: Vec<(usize, NodeId)> = (0..total).map(|s| (s + tau[s], s)).collect();
    arrivals.sort_unstable();
    Ok(DelayedSgd {
        class,
        total,
        schedule,
        arrivals,
    })
}

impl DelayedSgd {
    fn fold<F>(&self, dim: usize, limit: Option<usize>, mut lookup: F) -> Result<Vec<Array1<f64>>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let eta = self.schedule.step(&self.class, self.total);
        let mut x = Array1::zeros(dim);
        let mut iterates = Vec::new();
        for &(arrival, source) in &self.arrivals {
            if let Some(cap) = limit {
                if arrival > cap {
                    break;
                }
            }
            let grad = lookup(source)?;
            x.scaled_add(-eta, &grad);
            project_ball(&mut x, self.class.radius);
            iterates.push(x.clone());
        }
        Ok(iterates)
    }
}

impl NodeProgram for DelayedSgd {
    fn name(&self) -> &'static str {
        "delayed_sgd"
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        let iterates = self.fold(ctx.dimension(), Some(ctx.node), |source| {
            Ok(ctx.visible.get(source)?.answer.gradient.clone())
        })?;
        let x = iterates
            .into_iter()
            .next_back()
            .unwrap_or_else(|| Array1::zeros(ctx.dimension()));
        Ok(Query::Gradient { x })
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        let iterates = self.fold(ctx.dimension(), None, |source| {
            Ok(ctx.records[source].answer.gradient.clone())
        })?;
        let tail = self.total.div_ceil(2);
        let start = iterates.len().saturating_sub(tail);
        let mut mean = Array1::zeros(ctx.dimension());
        for x in &iterates[start..] {
            mean += x;
        }
        let count = (iterates.len() - start).max(1);
        mean.mapv_inplace(|v| v / count as f64);
        Ok(mean)
    }
}

/// Local SGD on the intermittent graph: each machine runs K projected steps
/// per round from the machine average, averaging at round boundaries.
/// Output is the average of the final iterates.
pub struct ParallelSgd {
    class: LipschitzSmoothClass,
    rounds: usize,
    local_steps: usize,
    machines: usize,
    schedule: StepSchedule,
}

pub fn parallel_sgd(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    schedule: StepSchedule,
) -> Result<ParallelSgd> {
    let (t, k, m) = match *graph.label() {
        GraphLabel::Intermittent { t, k, m } => (t, k, m),
        ref other => {
            return Err(Error::Scheduling(format!(
                "parallel SGD needs an intermittent graph, got {other:?}"
            )))
        }
    };
    Ok(ParallelSgd {
        class,
        rounds: t,
        local_steps: k,
        machines: m,
        schedule,
    })
}

impl ParallelSgd {
    fn node_id(&self, round: usize, machine: usize, step: usize) -> NodeId {
        (round * self.local_steps + step) * self.machines + machine
    }

    /// Machine average entering `round`, folded from complete earlier rounds.
    fn round_start<F>(&self, dim: usize, round: usize, lookup: &mut F) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let eta = self
            .schedule
            .step(&self.class, self.rounds * self.local_steps);
        let mut shared = Array1::zeros(dim);
        for r in 0..round {
            let mut sum = Array1::zeros(dim);
            for machine in 0..self.machines {
                let mut x = shared.clone();
                for step in 0..self.local_steps {
                    let grad = lookup(self.node_id(r, machine, step))?;
                    x.scaled_add(-eta, &grad);
                    project_ball(&mut x, self.class.radius);
                }
                sum += &x;
            }
            sum.mapv_inplace(|v| v / self.machines as f64);
            shared = sum;
        }
        Ok(shared)
    }
}

impl NodeProgram for ParallelSgd {
    fn name(&self) -> &'static str {
        "parallel_sgd"
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        let km = self.local_steps * self.machines;
        let round = ctx.node / km;
        let within = ctx.node % km;
        let step = within / self.machines;
        let machine = within % self.machines;
        let eta = self
            .schedule
            .step(&self.class, self.rounds * self.local_steps);
        let mut lookup = |id: NodeId| Ok(ctx.visible.get(id)?.answer.gradient.clone());
        let mut x = self.round_start(ctx.dimension(), round, &mut lookup)?;
        for s in 0..step {
            let grad = lookup(self.node_id(round, machine, s))?;
            x.scaled_add(-eta, &grad);
            project_ball(&mut x, self.class.radius);
        }
        Ok(Query::Gradient { x })
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        let mut lookup = |id: NodeId| Ok(ctx.records[id].answer.gradient.clone());
        self.round_start(ctx.dimension(), self.rounds, &mut lookup)
    }
}
