//! Oracle protocol types: queries, answers, per-node records, and the
//! ancestor-restricted view a query rule receives.

use fixedbitset::FixedBitSet;
use ndarray::Array1;

use crate::error::{Error, Result};
use crate::graphs::NodeId;

/// What an algorithm may ask the oracle at one node.
#[derive(Debug, Clone)]
pub enum Query {
    /// Gradient oracle; z is drawn by the oracle.
    Gradient { x: Array1<f64> },
    /// Gradient oracle with a chosen z (active querying).
    GradientAt { x: Array1<f64>, z: u32 },
    /// Prox oracle; z drawn by the oracle.
    Prox { x: Array1<f64>, beta: f64 },
    /// Prox oracle with a chosen z.
    ProxAt { x: Array1<f64>, beta: f64, z: u32 },
}

impl Query {
    pub fn point(&self) -> &Array1<f64> {
        match self {
            Query::Gradient { x }
            | Query::GradientAt { x, .. }
            | Query::Prox { x, .. }
            | Query::ProxAt { x, .. } => x,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Query::Prox { beta, .. } | Query::ProxAt { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn chosen_z(&self) -> Option<u32> {
        match self {
            Query::GradientAt { z, .. } | Query::ProxAt { z, .. } => Some(*z),
            _ => None,
        }
    }

    pub fn wants_prox(&self) -> bool {
        matches!(self, Query::Prox { .. } | Query::ProxAt { .. })
    }

    /// Bit-exact equality, the comparison the compliance harness relies on.
    pub fn bits_equal(&self, other: &Query) -> bool {
        if self.beta().map(f64::to_bits) != other.beta().map(f64::to_bits) {
            return false;
        }
        if self.chosen_z() != other.chosen_z() {
            return false;
        }
        let a = self.point();
        let b = other.point();
        a.len() == b.len()
            && a.iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

/// The oracle's reply: realized z, value, gradient, and the prox point when a
/// prox was requested.
#[derive(Debug, Clone)]
pub struct OracleAnswer {
    pub z: u32,
    pub value: f64,
    pub gradient: Array1<f64>,
    pub prox_point: Option<Array1<f64>>,
}

/// One evaluated node.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub node: NodeId,
    /// 1-based depth of the node in the graph.
    pub depth: usize,
    pub query: Query,
    pub answer: OracleAnswer,
    /// Hash of the ancestor set that was exposed to the query rule.
    pub visible_hash: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    FullyStochastic,
    ActiveQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Gradient,
    Prox,
}

/// Ancestor-restricted window onto the run's records. Requesting anything
/// outside the ancestor set is a hard error, so a query rule physically
/// cannot read non-ancestor state through this view.
pub struct Visible<'a> {
    records: &'a [Option<NodeRecord>],
    allowed: &'a FixedBitSet,
    requester: NodeId,
}

impl<'a> Visible<'a> {
    pub(crate) fn new(
        records: &'a [Option<NodeRecord>],
        allowed: &'a FixedBitSet,
        requester: NodeId,
    ) -> Self {
        Visible {
            records,
            allowed,
            requester,
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.allowed.contains(node)
    }

    pub fn get(&self, node: NodeId) -> Result<&'a NodeRecord> {
        if !self.allowed.contains(node) {
            return Err(Error::VisibilityViolation {
                node: self.requester,
                requested: node,
            });
        }
        Ok(self.records[node]
            .as_ref()
            .expect("ancestors are evaluated before their descendants"))
    }

    /// Visible records in ascending node order.
    pub fn iter(&self) -> impl Iterator<Item = &'a NodeRecord> + '_ {
        self.allowed.ones().map(move |id| {
            self.records[id]
                .as_ref()
                .expect("ancestors are evaluated before their descendants")
        })
    }

    pub fn len(&self) -> usize {
        self.allowed.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
