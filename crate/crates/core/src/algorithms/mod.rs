//! Algorithms expressed as per-node query rules plus an output rule.
//!
//! A program never holds iterate state across nodes: every query is a pure
//! function of (node id, ancestor-visible records, derived randomness), which
//! is what makes the visibility model enforceable by construction. Sequential
//! algorithms therefore refold their trajectory from the visible records at
//! each node; all the graphs here are small enough that the quadratic refold
//! cost is irrelevant next to oracle evaluation.

use ndarray::Array1;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graphs::{NodeId, OracleGraph};
use crate::instances::{Instance, LipschitzSmoothClass};
use crate::oracle::{OracleKind, OracleMode, Query, Visible};
use crate::rng;

mod accel;
mod sgd;
mod svrg;

pub use accel::{
    amb_sgd, smoothed_amb_sgd, wait_and_collect, wait_and_collect_variant, AccelState,
    AcceleratedSchedule, AlphaRule, AmbSgd, EtaRule, SmoothedAmbSgd, WaitAndCollect,
    WaitAndCollectVariant,
};
pub use sgd::{
    delayed_sgd, parallel_sgd, sequential_sgd, DelayedSgd, ParallelSgd, SequentialSgd, StepSchedule,
};
pub use svrg::{svrg_intermittent, Svrg, SvrgParams, SvrgPlan};

/// Everything a query rule may look at.
pub struct QueryCtx<'a> {
    pub node: NodeId,
    pub graph: &'a OracleGraph,
    pub instance: &'a dyn Instance,
    pub visible: Visible<'a>,
    pub seed: u64,
}

impl QueryCtx<'_> {
    /// Node-local randomness, keyed by (run seed, node id).
    pub fn program_rng(&self) -> ChaCha8Rng {
        rng::program_rng(self.seed, self.node)
    }

    /// Shared randomness; `slot` distinguishes independent shared draws.
    pub fn shared_rng(&self, slot: u64) -> ChaCha8Rng {
        rng::shared_rng(self.seed, slot)
    }

    pub fn dimension(&self) -> usize {
        self.instance.dimension()
    }
}

/// Everything the output rule may look at: the full history.
pub struct OutputCtx<'a> {
    pub graph: &'a OracleGraph,
    pub instance: &'a dyn Instance,
    pub records: &'a [crate::oracle::NodeRecord],
    pub seed: u64,
}

impl OutputCtx<'_> {
    pub fn shared_rng(&self, slot: u64) -> ChaCha8Rng {
        rng::shared_rng(self.seed, slot)
    }

    pub fn output_rng(&self) -> ChaCha8Rng {
        rng::output_rng(self.seed)
    }

    pub fn dimension(&self) -> usize {
        self.instance.dimension()
    }
}

/// A parallel optimization algorithm: query rules R_1..R_N plus the output
/// rule, all pure functions of their declared inputs.
pub trait NodeProgram: Send + Sync {
    fn name(&self) -> &'static str;

    fn oracle_mode(&self) -> OracleMode {
        OracleMode::FullyStochastic
    }

    fn required_oracle(&self) -> OracleKind {
        OracleKind::Gradient
    }

    /// Selects the query to issue at `ctx.node`.
    fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query>;

    /// Maps the full history to the final estimate.
    fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>>;
}

/// Default lower-bound-free choice for problems where only L matters.
pub(crate) fn lipschitz_step(class: &LipschitzSmoothClass, total: usize) -> f64 {
    class.radius / (class.lipschitz * (total as f64).sqrt())
}
