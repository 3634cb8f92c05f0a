//! SVRG on the intermittent-communication graph, applied to the regularized
//! empirical objective over an actively re-queried sample.
//!
//! Each stage spends ceil(n / KM) rounds computing the full gradient of
//!   F_hat(x) = (1/n) sum_i f(x; z_i) + (lambda/2) |x|^2
//! at the reference point (parallelized over all K*M nodes of a round), then
//! ceil(I / K) rounds of variance-reduced inner steps on machine 0's chain.

use ndarray::Array1;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graphs::{GraphLabel, NodeId, OracleGraph};
use crate::instances::{project_ball, Instance, LipschitzSmoothClass};
use crate::oracle::{OracleMode, Query};
use crate::rng;

use super::{NodeProgram, OutputCtx, QueryCtx};

const Z_LIST_SLOT: u64 = 0xE501;
const PICK_SLOT_BASE: u64 = 0xE600;

/// Resolved SVRG parameters (every `auto` already substituted).
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgParams {
    /// Sample size n of the empirical objective.
    pub sample_size: usize,
    pub lambda: f64,
    /// Inner iterations per stage.
    pub inner_iters: usize,
    pub step: f64,
}

/// Round accounting of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvrgPlan {
    pub full_rounds: usize,
    pub inner_rounds: usize,
    pub rounds_per_stage: usize,
    pub stages: usize,
}

impl SvrgPlan {
    pub fn new(sample_size: usize, inner_iters: usize, k: usize, m: usize, t: usize) -> SvrgPlan {
        let full_rounds = sample_size.div_ceil(k * m);
        let inner_rounds = inner_iters.div_ceil(k);
        let rounds_per_stage = full_rounds + inner_rounds;
        SvrgPlan {
            full_rounds,
            inner_rounds,
            rounds_per_stage,
            stages: t / rounds_per_stage,
        }
    }
}

/// ln clamped below at 1, keeping the parameter formulas finite for small
/// arguments.
fn ln_clamped(x: f64) -> f64 {
    x.ln().max(1.0)
}

impl SvrgParams {
    /// Fills unspecified parameters from the class and graph shape:
    /// n = min(K^2 T^2 L^2 / (H^2 ln^2(MKT/L)), MKT / ln(MKT/L)) clamped to 1,
    /// lambda = L / (sqrt(n) B), I = ceil((H + lambda) / lambda),
    /// step = 1 / (10 (H + lambda)).
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        class: &LipschitzSmoothClass,
        t: usize,
        k: usize,
        m: usize,
        sample_size: Option<usize>,
        lambda: Option<f64>,
        inner_iters: Option<usize>,
        step: Option<f64>,
    ) -> Result<SvrgParams> {
        let h = class.smoothness;
        let l = class.lipschitz;
        let needs_h = inner_iters.is_none() || step.is_none();
        if needs_h && !h.is_finite() {
            return Err(Error::InvalidParameter(
                "SVRG parameter formulas need finite smoothness H; pass I and step explicitly"
                    .to_string(),
            ));
        }
        let n = sample_size.unwrap_or_else(|| {
            let budget = (m * k * t) as f64;
            let lg = ln_clamped(budget / l);
            let term1 = if h.is_finite() {
                (k * t) as f64 * (k * t) as f64 * l * l / (h * h * lg * lg)
            } else {
                0.0
            };
            let term2 = budget / lg;
            (term1.min(term2).floor() as usize).max(1)
        });
        let lambda = lambda.unwrap_or(l / ((n as f64).sqrt() * class.radius));
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let inner_iters = inner_iters.unwrap_or(((h + lambda) / lambda).ceil() as usize);
        if inner_iters == 0 {
            return Err(Error::InvalidParameter("I must be >= 1".to_string()));
        }
        let step = step.unwrap_or(1.0 / (10.0 * (h + lambda)));
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step must be positive, got {step}"
            )));
        }
        Ok(SvrgParams {
            sample_size: n,
            lambda,
            inner_iters,
            step,
        })
    }
}

pub struct Svrg {
    class: LipschitzSmoothClass,
    params: SvrgParams,
    plan: SvrgPlan,
    local_steps: usize,
    machines: usize,
}

pub fn svrg_intermittent(
    class: LipschitzSmoothClass,
    graph: &OracleGraph,
    params: SvrgParams,
) -> Result<Svrg> {
    let (t, k, m) = match *graph.label() {
        GraphLabel::Intermittent { t, k, m } => (t, k, m),
        ref other => {
            return Err(Error::Scheduling(format!(
                "SVRG needs an intermittent graph, got {other:?}"
            )))
        }
    };
    let plan = SvrgPlan::new(params.sample_size, params.inner_iters, k, m, t);
    if plan.stages == 0 {
        return Err(Error::Budget(format!(
            "SVRG stage needs ceil({n}/{km}) + ceil({i}/{k}) = {full} + {inner} = {per} rounds, \
             but the graph has only T = {t} rounds",
            n = params.sample_size,
            km = k * m,
            i = params.inner_iters,
            full = plan.full_rounds,
            inner = plan.inner_rounds,
            per = plan.rounds_per_stage,
        )));
    }
    Ok(Svrg {
        class,
        params,
        plan,
        local_steps: k,
        machines: m,
    })
}

impl Svrg {
    pub fn params(&self) -> &SvrgParams {
        &self.params
    }

    pub fn plan(&self) -> &SvrgPlan {
        &self.plan
    }

    fn node_id(&self, round: usize, machine: usize, step: usize) -> NodeId {
        (round * self.local_steps + step) * self.machines + machine
    }

    /// Node handling sample `idx` of stage `stage`'s full-gradient phase.
    fn full_node_id(&self, stage: usize, idx: usize) -> NodeId {
        let km = self.local_steps * self.machines;
        let round = stage * self.plan.rounds_per_stage + idx / km;
        let within = idx % km;
        self.node_id(round, within % self.machines, within / self.machines)
    }

    /// Node performing 0-based inner update `c` of stage `stage`.
    fn inner_node_id(&self, stage: usize, c: usize) -> NodeId {
        let round =
            stage * self.plan.rounds_per_stage + self.plan.full_rounds + c / self.local_steps;
        self.node_id(round, 0, c % self.local_steps)
    }

    /// The shared sample z_1..z_n, identical at every node of a run.
    pub fn sample_list(&self, instance: &dyn Instance, seed: u64) -> Vec<u32> {
        let mut gen = rng::shared_rng(seed, Z_LIST_SLOT);
        (0..self.params.sample_size)
            .map(|_| instance.sample_z(&mut gen))
            .collect()
    }

    /// The uniformly random inner index the stage reports as its result.
    fn stage_pick(&self, seed: u64, stage: usize) -> usize {
        let mut gen = rng::shared_rng(seed, PICK_SLOT_BASE + stage as u64);
        gen.random_range(1..=self.params.inner_iters)
    }

    /// The sample index j used by one inner node.
    fn inner_sample(&self, seed: u64, node: NodeId) -> usize {
        let mut gen = rng::program_rng(seed, node);
        gen.random_range(0..self.params.sample_size)
    }

    /// Full regularized gradient at the stage's reference point.
    fn stage_full_gradient<F>(
        &self,
        dim: usize,
        stage: usize,
        x_ref: &Array1<f64>,
        lookup: &mut F,
    ) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let n = self.params.sample_size;
        let mut sum = Array1::zeros(dim);
        for idx in 0..n {
            sum += &lookup(self.full_node_id(stage, idx))?;
        }
        sum.mapv_inplace(|v| v / n as f64);
        sum.scaled_add(self.params.lambda, x_ref);
        Ok(sum)
    }

    /// Inner iterate x_s^count (count updates applied from the reference).
    #[allow(clippy::too_many_arguments)]
    fn inner_iterate<F>(
        &self,
        stage: usize,
        x_ref: &Array1<f64>,
        full_grad: &Array1<f64>,
        count: usize,
        seed: u64,
        lookup: &mut F,
    ) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let lambda = self.params.lambda;
        let step = self.params.step;
        let mut x = x_ref.clone();
        for c in 0..count {
            let node = self.inner_node_id(stage, c);
            let j = self.inner_sample(seed, node);
            let grad_here = lookup(node)?;
            let grad_ref = lookup(self.full_node_id(stage, j))?;
            // (grad f(x; z_j) + lambda x) - (grad f(x_ref; z_j) + lambda x_ref) + g~
            let mut dir = grad_here;
            dir.scaled_add(lambda, &x);
            dir.scaled_add(-1.0, &grad_ref);
            dir.scaled_add(-lambda, x_ref);
            dir += full_grad;
            x.scaled_add(-step, &dir);
            project_ball(&mut x, self.class.radius);
        }
        Ok(x)
    }

    /// Reference point entering `stage` (stage 0 starts at the origin).
    fn stage_start<F>(
        &self,
        dim: usize,
        stage: usize,
        seed: u64,
        lookup: &mut F,
    ) -> Result<Array1<f64>>
    where
        F: FnMut(NodeId) -> Result<Array1<f64>>,
    {
        let mut x_ref = Array1::zeros(dim);
        for s in 0..stage {
            let full_grad = self.stage_full_gradient(dim, s, &x_ref, lookup)?;
            let pick = self.stage_pick(seed, s);
            x_ref = self.inner_iterate(s, &x_ref, &full_grad, pick, seed, lookup)?;
        }
        Ok(x_ref)
    }

    fn noop_query(&self, dim: usize, z_list: &[u32]) -> Query {
        Query::GradientAt {
            x: Array1::zeros(dim),
            z: z_list[0],
        }
    }
}

impl NodeProgram for Svrg {
    fn name(&self) -> &'static str {
        "svrg"
    }

    fn oracle_mode(&self) -> OracleMode {
        OracleMode::ActiveQuery
    }

    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
        let dim = ctx.dimension();
        let z_list = self.sample_list(ctx.instance, ctx.seed);
        let km = self.local_steps * self.machines;
        let round = ctx.node / km;
        let within = ctx.node % km;
        let step_pos = within / self.machines;
        let machine = within % self.machines;
        let stage = round / self.plan.rounds_per_stage;
        if stage >= self.plan.stages {
            return Ok(self.noop_query(dim, &z_list));
        }
        let round_local = round % self.plan.rounds_per_stage;
        let mut lookup = |id: NodeId| Ok(ctx.visible.get(id)?.answer.gradient.clone());
        if round_local < self.plan.full_rounds {
            let idx = round_local * km + step_pos * self.machines + machine;
            if idx >= self.params.sample_size {
                return Ok(self.noop_query(dim, &z_list));
            }
            let x_ref = self.stage_start(dim, stage, ctx.seed, &mut lookup)?;
            return Ok(Query::GradientAt {
                x: x_ref,
                z: z_list[idx],
            });
        }
        if machine != 0 {
            return Ok(self.noop_query(dim, &z_list));
        }
        let c = (round_local - self.plan.full_rounds) * self.local_steps + step_pos;
        if c >= self.params.inner_iters {
            return Ok(self.noop_query(dim, &z_list));
        }
        let x_ref = self.stage_start(dim, stage, ctx.seed, &mut lookup)?;
        let full_grad = self.stage_full_gradient(dim, stage, &x_ref, &mut lookup)?;
        let x = self.inner_iterate(stage, &x_ref, &full_grad, c, ctx.seed, &mut lookup)?;
        let j = self.inner_sample(ctx.seed, ctx.node);
        Ok(Query::GradientAt { x, z: z_list[j] })
    }

    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
        let mut lookup = |id: NodeId| Ok(ctx.records[id].answer.gradient.clone());
        self.stage_start(ctx.dimension(), self.plan.stages, ctx.seed, &mut lookup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_accounting_example() {
        let plan = SvrgPlan::new(40, 12, 4, 5, 30);
        assert_eq!(plan.full_rounds, 2);
        assert_eq!(plan.inner_rounds, 3);
        assert_eq!(plan.rounds_per_stage, 5);
        assert_eq!(plan.stages, 6);
    }

    #[test]
    fn ln_clamp() {
        assert_eq!(ln_clamped(0.5), 1.0);
        assert_eq!(ln_clamped(1.0), 1.0);
        assert!(ln_clamped(100.0) > 4.0);
    }

    #[test]
    fn resolve_defaults() {
        let class = LipschitzSmoothClass::new(1.0, 2.0, 1.0).unwrap();
        let p = SvrgParams::resolve(&class, 32, 4, 4, None, None, None, None).unwrap();
        assert!(p.sample_size >= 1);
        let expected_lambda = 1.0 / (p.sample_size as f64).sqrt();
        assert!((p.lambda - expected_lambda).abs() < 1e-12);
        assert_eq!(
            p.inner_iters,
            ((class.smoothness + p.lambda) / p.lambda).ceil() as usize
        );
        assert!((p.step - 1.0 / (10.0 * (2.0 + p.lambda))).abs() < 1e-15);
    }

    #[test]
    fn nonsmooth_needs_explicit_inner_params() {
        let class = LipschitzSmoothClass::new(1.0, f64::INFINITY, 1.0).unwrap();
        assert!(SvrgParams::resolve(&class, 32, 4, 4, None, None, None, None).is_err());
        assert!(SvrgParams::resolve(&class, 32, 4, 4, Some(8), None, Some(5), Some(0.01)).is_ok());
    }
}
