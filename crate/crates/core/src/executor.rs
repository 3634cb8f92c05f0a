//! Runs a program against a graph and an instance while enforcing the
//! visibility model: each query rule physically receives only its ancestors'
//! records, plus a probe-based compliance check as defense in depth for
//! programs that smuggle state by other means.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use serde_json::json;

use crate::algorithms::{NodeProgram, OutputCtx, QueryCtx};
use crate::error::{Error, Result};
use crate::graphs::{NodeId, OracleGraph};
use crate::instances::Instance;
use crate::oracle::{NodeRecord, OracleAnswer, OracleMode, Query, Visible};
use crate::rng;

/// Complete record of one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<NodeRecord>,
    pub estimate: Array1<f64>,
    pub seed: u64,
    pub wall: Duration,
}

impl RunTrace {
    /// FNV-1a digest over every query, answer and the estimate; byte-level
    /// determinism checks compare these.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for rec in &self.records {
            eat(&rec.node.to_le_bytes());
            eat(&rec.answer.z.to_le_bytes());
            eat(&rec.answer.value.to_bits().to_le_bytes());
            if let Some(beta) = rec.query.beta() {
                eat(&beta.to_bits().to_le_bytes());
            }
            for v in rec.query.point() {
                eat(&v.to_bits().to_le_bytes());
            }
            for v in &rec.answer.gradient {
                eat(&v.to_bits().to_le_bytes());
            }
            if let Some(p) = &rec.answer.prox_point {
                for v in p {
                    eat(&v.to_bits().to_le_bytes());
                }
            }
        }
        for v in &self.estimate {
            eat(&v.to_bits().to_le_bytes());
        }
        h
    }

    /// One JSON object per node, newline-delimited.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.records {
            let grad_norm = rec.answer.gradient.dot(&rec.answer.gradient).sqrt();
            let mut obj = json!({
                "node": rec.node,
                "depth": rec.depth,
                "query": rec.query.point().to_vec(),
                "z": rec.answer.z,
                "value": rec.answer.value,
                "grad_norm": grad_norm,
            });
            if let Some(beta) = rec.query.beta() {
                obj["beta"] = json!(beta);
            }
            serde_json::to_writer(&mut out, &obj)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn answer_query(
    program_mode: OracleMode,
    instance: &dyn Instance,
    node: NodeId,
    seed: u64,
    query: &Query,
) -> Result<OracleAnswer> {
    let x = query.point();
    if x.len() != instance.dimension() {
        return Err(Error::InvalidQuery {
            node,
            message: format!(
                "query dimension {} does not match instance dimension {}",
                x.len(),
                instance.dimension()
            ),
        });
    }
    let norm = x.dot(x).sqrt();
    let bound = instance.class().radius;
    if norm > bound * (1.0 + 1e-9) {
        return Err(Error::DomainViolation { node, norm, bound });
    }
    if let Some(beta) = query.beta() {
        if !(beta > 0.0) {
            return Err(Error::InvalidQuery {
                node,
                message: format!("prox query with beta = {beta} <= 0"),
            });
        }
    }
    if query.chosen_z().is_some() && program_mode == OracleMode::FullyStochastic {
        return Err(Error::InvalidQuery {
            node,
            message: "fully stochastic programs cannot choose z".to_string(),
        });
    }
    let z = match query.chosen_z() {
        Some(z) => z,
        None => instance.sample_z(&mut rng::oracle_rng(seed, node)),
    };
    let value = instance.value(&x.view(), z);
    let gradient = instance.gradient(&x.view(), z);
    let prox_point = if query.wants_prox() {
        Some(instance.prox(&x.view(), query.beta().unwrap(), z)?.point)
    } else {
        None
    };
    Ok(OracleAnswer {
        z,
        value,
        gradient,
        prox_point,
    })
}

/// Evaluates every node in topological order and applies the output rule.
pub fn execute(
    graph: &OracleGraph,
    program: &dyn NodeProgram,
    instance: &dyn Instance,
    seed: u64,
) -> Result<RunTrace> {
    execute_in_order(graph, program, instance, seed, graph.topo_order(), None)
}

/// `execute` with an explicit evaluation order (any valid topological order
/// yields the identical trace) and an optional answer override used by the
/// compliance harness.
pub fn execute_in_order(
    graph: &OracleGraph,
    program: &dyn NodeProgram,
    instance: &dyn Instance,
    seed: u64,
    order: &[NodeId],
    override_answer: Option<(NodeId, &OracleAnswer)>,
) -> Result<RunTrace> {
    let n = graph.size();
    if order.len() != n {
        return Err(Error::InvalidArgument(format!(
            "evaluation order covers {} of {n} nodes",
            order.len()
        )));
    }
    let start = Instant::now();
    let mut slots: Vec<Option<NodeRecord>> = (0..n).map(|_| None).collect();
    for &node in order {
        let query = {
            let visible = Visible::new(&slots, graph.ancestors(node)?, node);
            let ctx = QueryCtx {
                node,
                graph,
                instance,
                visible,
                seed,
            };
            program.query(&ctx)?
        };
        let mut answer = answer_query(program.oracle_mode(), instance, node, seed, &query)?;
        if let Some((target, forced)) = override_answer {
            if target == node {
                answer = forced.clone();
            }
        }
        slots[node] = Some(NodeRecord {
            node,
            depth: graph.node_depth(node)?,
            query,
            answer,
            visible_hash: graph.ancestor_hash(node),
        });
    }
    let records: Vec<NodeRecord> = slots
        .into_iter()
        .map(|r| r.expect("every node evaluated"))
        .collect();
    let estimate = program.output(&OutputCtx {
        graph,
        instance,
        records: &records,
        seed,
    })?;
    Ok(RunTrace {
        records,
        estimate,
        seed,
        wall: start.elapsed(),
    })
}

/// One detected dependence on a non-ancestor record.
#[derive(Debug, Clone)]
pub struct ComplianceFinding {
    pub probe: usize,
    pub perturbed: NodeId,
    pub node: NodeId,
}

#[derive(Debug, Clone)]
pub struct ComplianceReport {
    pub probes: usize,
    pub findings: Vec<ComplianceFinding>,
}

impl ComplianceReport {
    pub fn clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Falsification test for the visibility constraint: re-runs the program
/// `probes` times, each time perturbing one oracle answer, and reports every
/// node whose emitted query changed although the perturbed node is not among
/// its ancestors.
pub fn check_compliance(
    graph: &OracleGraph,
    program: &dyn NodeProgram,
    instance: &dyn Instance,
    seed: u64,
    probes: usize,
) -> Result<ComplianceReport> {
    if probes == 0 {
        return Err(Error::InvalidParameter("probes must be >= 1".to_string()));
    }
    let baseline = execute(graph, program, instance, seed)?;
    let mut findings = Vec::new();
    let mut gen = rng::derive(seed, rng::StreamKind::Shared, 0xC0DE);
    use rand::Rng;
    for probe in 0..probes {
        let target = gen.random_range(0..graph.size());
        let shift = gen.random_range(0.5..1.5);
        let base = &baseline.records[target].answer;
        let forced = OracleAnswer {
            z: base.z,
            value: base.value + shift,
            gradient: base.gradient.mapv(|v| v + shift),
            prox_point: base.prox_point.as_ref().map(|p| p.mapv(|v| v + shift)),
        };
        let perturbed = execute_in_order(
            graph,
            program,
            instance,
            seed,
            graph.topo_order(),
            Some((target, &forced)),
        )?;
        for node in 0..graph.size() {
            if node == target || graph.is_ancestor(target, node) {
                continue;
            }
            if !baseline.records[node]
                .query
                .bits_equal(&perturbed.records[node].query)
            {
                findings.push(ComplianceFinding {
                    probe,
                    perturbed: target,
                    node,
                });
            }
        }
    }
    Ok(ComplianceReport { probes, findings })
}

/// Per-depth-layer progress against a frame: max |<query, v_j>| per
/// (layer, frame vector) cell.
#[derive(Debug, Clone)]
pub struct ProgressTrace {
    /// depth x frame-size matrix of maxima.
    pub max_abs_inner: Array2<f64>,
    pub threshold: f64,
    /// 0-based (layer, frame index) cells with j >= layer exceeding the
    /// threshold; the empirical "one new vector per depth" violations.
    pub flags: Vec<(usize, usize)>,
}

impl ProgressTrace {
    pub fn violation_count(&self) -> usize {
        self.flags.len()
    }
}

pub fn measure_progress(
    trace: &RunTrace,
    frame: &ArrayView2<f64>,
    threshold: f64,
) -> Result<ProgressTrace> {
    let k = frame.nrows();
    let depth = trace.records.iter().map(|r| r.depth).max().unwrap_or(0);
    let mut max_abs = Array2::zeros((depth, k));
    for rec in &trace.records {
        let x = rec.query.point();
        if x.len() != frame.ncols() {
            return Err(Error::InvalidArgument(format!(
                "query dimension {} does not match frame dimension {}",
                x.len(),
                frame.ncols()
            )));
        }
        let layer = rec.depth - 1;
        for j in 0..k {
            let ip = frame.row(j).dot(x).abs();
            if ip > max_abs[(layer, j)] {
                max_abs[(layer, j)] = ip;
            }
        }
    }
    let mut flags = Vec::new();
    for layer in 0..depth {
        for j in layer..k {
            if max_abs[(layer, j)] > threshold {
                flags.push((layer, j));
            }
        }
    }
    Ok(ProgressTrace {
        max_abs_inner: max_abs,
        threshold,
        flags,
    })
}

/// Deliberately non-compliant programs used as negative controls.
pub mod cheating {
    use std::sync::Mutex;

    use ndarray::Array1;

    use crate::algorithms::{NodeProgram, OutputCtx, QueryCtx};
    use crate::error::Result;
    use crate::oracle::Query;

    /// Indexes a record one past its own node; the visibility view raises a
    /// hard error on the first query.
    pub struct PeekingProgram;

    impl NodeProgram for PeekingProgram {
        fn name(&self) -> &'static str {
            "cheat_peek"
        }

        fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
            let next = (ctx.node + 1) % ctx.graph.size();
            let _ = ctx.visible.get(next)?;
            Ok(Query::Gradient {
                x: Array1::zeros(ctx.dimension()),
            })
        }

        fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
            Ok(Array1::zeros(ctx.dimension()))
        }
    }

    /// Smuggles oracle values across nodes through interior mutability: a
    /// running mix of every answer it has ever been shown feeds back into the
    /// query point, so on graphs with parallel branches some queries depend
    /// continuously on non-ancestor records. Only the probe harness can catch
    /// this. The state resets at node 0 to keep each run self-contained.
    #[derive(Default)]
    pub struct SmugglerProgram {
        running: Mutex<f64>,
    }

    impl NodeProgram for SmugglerProgram {
        fn name(&self) -> &'static str {
            "cheat_smuggle"
        }

        fn query(&self, ctx: &QueryCtx<'_>) -> Result<Query> {
            let mut running = self.running.lock().unwrap();
            if ctx.node == 0 {
                *running = 0.0;
            }
            for rec in ctx.visible.iter() {
                *running = *running * 0.5 + rec.answer.value;
            }
            let mut x = Array1::zeros(ctx.dimension());
            let radius = ctx.instance.class().radius;
            x[0] = 0.01 * radius * running.tanh();
            Ok(Query::Gradient { x })
        }

        fn output(&self, ctx: &OutputCtx<'_>) -> Result<Array1<f64>> {
            Ok(Array1::zeros(ctx.dimension()))
        }
    }
}
