//! Config-driven experiment driver: seeded runs, parameter sweeps with
//! rate-slope fits, and regime comparison tables. Emits fixed-schema CSV.

use std::io::Write;

use rayon::prelude::*;

mod config;
mod rate;

pub use config::{
    AlgorithmSpec, AutoOr, AutoTag, ExperimentConfig, GraphSpec, InstanceSpec, Smoothness,
    SweepSpec, TauSpec,
};
pub use rate::{RatePoint, RateSeries};

use crate::error::{Error, Result};
use crate::executor::{execute, RunTrace};
use crate::graphs::GraphLabel;
use crate::instances::true_suboptimality;

/// One CSV row. `wall_ms` is pinned to zero so output stays byte-identical
/// across invocations; measured wall time goes to the log instead.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub graph: String,
    pub t: Option<usize>,
    pub m_machines: Option<usize>,
    pub k: Option<usize>,
    pub tau: Option<String>,
    pub algorithm: String,
    pub instance: String,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub radius: f64,
    pub dimension: usize,
    pub seed: u64,
    pub reps: usize,
    pub subopt_mean: f64,
    pub subopt_se: f64,
    pub slope_tag: String,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str =
    "graph,T,M,K,tau,algorithm,instance,L,H,B,m,seed,reps,subopt_mean,subopt_se,slope_tag,wall_ms";

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{v}")
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

impl RunRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.graph,
            fmt_opt(&self.t),
            fmt_opt(&self.m_machines),
            fmt_opt(&self.k),
            fmt_opt(&self.tau),
            self.algorithm,
            self.instance,
            fmt_f64(self.lipschitz),
            fmt_f64(self.smoothness),
            fmt_f64(self.radius),
            self.dimension,
            self.seed,
            self.reps,
            fmt_f64(self.subopt_mean),
            fmt_f64(self.subopt_se),
            self.slope_tag,
            self.wall_ms,
        )
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[RunRow]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv_line())?;
    }
    Ok(())
}

/// Builds the rayon pool honoring POGRAPH_THREADS; call once at startup.
pub fn init_threads() {
    if let Ok(text) = std::env::var("POGRAPH_THREADS") {
        if let Ok(n) = text.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn graph_columns(
    label: &GraphLabel,
) -> (
    String,
    Option<usize>,
    Option<usize>,
    Option<usize>,
    Option<String>,
) {
    match label {
        GraphLabel::Path { t } => ("path".to_string(), Some(*t), None, None, None),
        GraphLabel::Layer { t, m } => ("layer".to_string(), Some(*t), Some(*m), None, None),
        GraphLabel::Delay { t, tau } => {
            let first = tau[0];
            let tag = if tau.iter().all(|&d| d == first) {
                format!("{first}")
            } else {
                "var".to_string()
            };
            ("delay".to_string(), Some(*t), None, None, Some(tag))
        }
        GraphLabel::Intermittent { t, k, m } => (
            "intermittent".to_string(),
            Some(*t),
            Some(*m),
            Some(*k),
            None,
        ),
        GraphLabel::Custom => ("custom".to_string(), None, None, None, None),
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn run_one(config: &ExperimentConfig, seed: u64, slope_tag: &str) -> Result<RunRow> {
    let graph = config.graph.build()?;
    let instance = config.instance.build(&graph, splitmix(seed))?;
    let program = config.algorithm.build(instance.class(), &graph)?;
    let trace = execute(&graph, program.as_ref(), instance.as_ref(), seed)?;
    let sub = true_suboptimality(
        instance.as_ref(),
        &trace.estimate.view(),
        config.reps,
        seed ^ 0x5eed,
    )?;
    log::info!(
        "run seed={seed} algorithm={} subopt={} wall={:?}",
        program.name(),
        sub.value,
        trace.wall
    );
    let (graph_tag, t, m, k, tau) = graph_columns(graph.label());
    let class = instance.class();
    Ok(RunRow {
        graph: graph_tag,
        t,
        m_machines: m,
        k,
        tau,
        algorithm: config.algorithm.tag().to_string(),
        instance: config.instance.tag().to_string(),
        lipschitz: class.lipschitz,
        smoothness: class.smoothness,
        radius: class.radius,
        dimension: instance.dimension(),
        seed,
        reps: config.reps,
        subopt_mean: sub.value,
        subopt_se: sub.stderr,
        slope_tag: slope_tag.to_string(),
        wall_ms: 0,
    })
}

/// Executes the config once per seed; rows come back sorted by seed.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRow>> {
    config.validate()?;
    let mut rows = config
        .seeds
        .par_iter()
        .map(|&seed| run_one(config, seed, "-"))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.seed);
    Ok(rows)
}

/// Runs the sweep axis and fits the log-log rate slope over seeds.
pub fn sweep(config: &ExperimentConfig) -> Result<(Vec<RunRow>, RateSeries)> {
    config.validate()?;
    let sweep_spec = config
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep: missing sweep axis".to_string()))?;
    sweep_with_axis(config, &sweep_spec.parameter, &sweep_spec.values)
}

pub fn sweep_with_axis(
    config: &ExperimentConfig,
    parameter: &str,
    values: &[f64],
) -> Result<(Vec<RunRow>, RateSeries)> {
    if values.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "sweep needs >= 3 values, got {}",
            values.len()
        )));
    }
    // Validate the axis applies before spending any compute.
    {
        let mut probe = config.clone();
        probe.apply_axis(parameter, values[0])?;
    }
    let tag = format!("axis={parameter}");
    let cells: Vec<(usize, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(vi, _)| config.seeds.iter().map(move |&s| (vi, s)))
        .collect();
    let mut rows = cells
        .par_iter()
        .map(|&(vi, seed)| {
            let mut cell_config = config.clone();
            cell_config.apply_axis(parameter, values[vi])?;
            run_one(&cell_config, seed, &tag).map(|row| (vi, row))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|(vi, row)| (*vi, row.seed));

    let per_seed: Vec<Vec<f64>> = values
        .iter()
        .enumerate()
        .map(|(vi, _)| {
            rows.iter()
                .filter(|(i, _)| *i == vi)
                .map(|(_, r)| r.subopt_mean)
                .collect()
        })
        .collect();
    let series = RateSeries::fit(values, &per_seed)?;
    Ok((rows.into_iter().map(|(_, r)| r).collect(), series))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegimeCell {
    pub graph: GraphSpec,
    pub instance: InstanceSpec,
}

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub cells: Vec<RegimeCell>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_reps_regime")]
    pub reps: usize,
}

fn default_reps_regime() -> usize {
    1
}

impl RegimeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RegimeConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.cells.is_empty() {
            return Err(Error::Config(
                "cells: must list at least one cell".to_string(),
            ));
        }
        if config.seeds.is_empty() {
            return Err(Error::Config(
                "seeds: must list at least one seed".to_string(),
            ));
        }
        Ok(config)
    }
}

#[derive(Debug, Clone)]
pub struct RegimeRow {
    pub t: usize,
    pub k: usize,
    pub m: usize,
    pub instance: String,
    pub single_chain: f64,
    pub amb: f64,
    pub svrg: f64,
    pub winner: String,
    /// Runner-up mean divided by winner mean.
    pub margin: f64,
}

impl RegimeRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.k,
            self.m,
            self.instance,
            fmt_f64(self.single_chain),
            fmt_f64(self.amb),
            fmt_f64(self.svrg),
            self.winner,
            fmt_f64(self.margin),
        )
    }
}

pub const REGIME_CSV_HEADER: &str = "T,K,M,instance,single_chain,amb,svrg,winner,margin";

/// For each intermittent cell, compares single-chain SGD, A-MB-SGD over the
/// full KM batch, and SVRG, reporting the winner and its margin.
pub fn regime_table(config: &RegimeConfig) -> Result<Vec<RegimeRow>> {
    let mut rows = Vec::with_capacity(config.cells.len());
    for cell in &config.cells {
        let (t, k, m) = match cell.graph {
            GraphSpec::Intermittent { t, k, m } => (t, k, m),
            _ => {
                return Err(Error::Config(
                    "cells.graph: regime table needs intermittent graphs".to_string(),
                ))
            }
        };
        let algorithms = [
            AlgorithmSpec::SequentialSgd {
                steps: None,
                step: None,
            },
            AlgorithmSpec::AmbSgd {
                batch: None,
                schedule: None,
            },
            AlgorithmSpec::Svrg {
                n: AutoOr::default(),
                lambda: AutoOr::default(),
                inner: AutoOr::default(),
                step: AutoOr::default(),
            },
        ];
        let mut means = [0.0f64; 3];
        for (slot, algorithm) in algorithms.iter().enumerate() {
            let cell_config = ExperimentConfig {
                graph: cell.graph.clone(),
                instance: cell.instance.clone(),
                algorithm: algorithm.clone(),
                seeds: config.seeds.clone(),
                reps: config.reps,
                sweep: None,
            };
            means[slot] = match run(&cell_config) {
                Ok(rows) => rows.iter().map(|r| r.subopt_mean).sum::<f64>() / rows.len() as f64,
                // An algorithm whose round accounting does not fit the cell
                // simply cannot compete there.
                Err(Error::Budget(msg)) => {
                    log::info!("regime cell T={t} K={k} M={m}: {msg}");
                    f64::INFINITY
                }
                Err(e) => return Err(e),
            };
        }
        let names = ["single_chain", "amb", "svrg"];
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap());
        let winner = order[0];
        let runner_up = order[1];
        let margin = if means[winner] > 0.0 {
            means[runner_up] / means[winner]
        } else {
            f64::INFINITY
        };
        rows.push(RegimeRow {
            t,
            k,
            m,
            instance: cell.instance.tag().to_string(),
            single_chain: means[0],
            amb: means[1],
            svrg: means[2],
            winner: names[winner].to_string(),
            margin,
        });
    }
    Ok(rows)
}

/// Runs the config once (first seed) and returns the trace for export along
/// with the instance it ran against (whose frame the progress diagnostics
/// need).
pub fn trace_run(
    config: &ExperimentConfig,
) -> Result<(RunTrace, Box<dyn crate::instances::Instance>)> {
    config.validate()?;
    let seed = config.seeds[0];
    let graph = config.graph.build()?;
    let instance = config.instance.build(&graph, splitmix(seed))?;
    let program = config.algorithm.build(instance.class(), &graph)?;
    let trace = execute(&graph, program.as_ref(), instance.as_ref(), seed)?;
    Ok((trace, instance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "graph": {"topology": "path", "T": 32},
                "instance": {"instance": "coinflip", "L": 1.0, "B": 1.0},
                "algorithm": {"algorithm": "sequential_sgd"},
                "seeds": [1, 2, 3, 4],
                "reps": 1
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn run_emits_one_row_per_seed() {
        let rows = run(&coin_config()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.windows(2).all(|w| w[0].seed < w[1].seed));
        assert_eq!(rows[0].graph, "path");
        assert_eq!(rows[0].t, Some(32));
        assert_eq!(rows[0].wall_ms, 0);
    }

    #[test]
    fn csv_is_deterministic() {
        let rows1 = run(&coin_config()).unwrap();
        let rows2 = run(&coin_config()).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&mut a, &rows1).unwrap();
        write_csv(&mut b, &rows2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_instance_has_zero_stderr() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "graph": {"topology": "path", "T": 8},
                "instance": {"instance": "quadratic_chain", "H": 1.0, "D": 2, "m": 12},
                "algorithm": {"algorithm": "sequential_sgd"},
                "seeds": [5],
                "reps": 1
            }"#,
        )
        .unwrap();
        let rows = run(&cfg).unwrap();
        assert_eq!(rows[0].subopt_se, 0.0);
    }

    #[test]
    fn sweep_requires_three_values() {
        let config = coin_config();
        assert!(sweep_with_axis(&config, "T", &[8.0, 16.0]).is_err());
    }
}
