//! JSON experiment configuration and its resolution into graphs, instances
//! and programs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algorithms::{self, AcceleratedSchedule, NodeProgram, StepSchedule, SvrgParams};
use crate::error::{Error, Result};
use crate::graphs::{self, GraphLabel, OracleGraph};
use crate::instances::{self, Instance, LipschitzSmoothClass};

/// Smoothness constant that serializes as a number or the string "inf".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness(pub f64);

impl Serialize for Smoothness {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Smoothness {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Smoothness(v)),
            Raw::Text(s) if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") => {
                Ok(Smoothness(f64::INFINITY))
            }
            Raw::Text(s) => Err(D::Error::custom(format!(
                "H must be a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// A value or the literal string "auto".
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Value(T),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl<T> Default for AutoOr<T> {
    fn default() -> Self {
        AutoOr::Auto(AutoTag::Auto)
    }
}

impl<T> AutoOr<T> {
    pub fn into_option(self) -> Option<T> {
        match self {
            AutoOr::Value(v) => Some(v),
            AutoOr::Auto(_) => None,
        }
    }
}

/// Constant delay or a full per-node schedule.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TauSpec {
    Constant(usize),
    Schedule(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "topology", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path {
        #[serde(rename = "T")]
        t: usize,
    },
    Layer {
        #[serde(rename = "T")]
        t: usize,
        #[serde(rename = "M")]
        m: usize,
    },
    Delay {
        #[serde(rename = "T")]
        t: usize,
        tau: TauSpec,
    },
    Intermittent {
        #[serde(rename = "T")]
        t: usize,
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "M")]
        m: usize,
    },
    Custom {
        edges: Vec<(usize, usize)>,
        #[serde(default)]
        nodes: Option<usize>,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<OracleGraph> {
        match self {
            GraphSpec::Path { t } => graphs::build_path(*t),
            GraphSpec::Layer { t, m } => graphs::build_layer(*t, *m),
            GraphSpec::Delay { t, tau } => match tau {
                TauSpec::Constant(d) => graphs::build_delay_const(*t, *d),
                TauSpec::Schedule(s) => graphs::build_delay(*t, s),
            },
            GraphSpec::Intermittent { t, k, m } => graphs::build_intermittent(*t, *k, *m),
            GraphSpec::Custom { edges, nodes } => {
                let n = nodes
                    .unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(1));
                graphs::build_custom(n, edges)
            }
        }
    }
}

fn default_b() -> f64 {
    1.0
}

fn default_smoothness() -> Smoothness {
    Smoothness(f64::INFINITY)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "instance", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Chain {
        #[serde(rename = "L")]
        l: f64,
        #[serde(rename = "H", default = "default_smoothness")]
        h: Smoothness,
        #[serde(rename = "B", default = "default_b")]
        b: f64,
        #[serde(rename = "D")]
        d: usize,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    Moreau {
        #[serde(rename = "L")]
        l: f64,
        #[serde(rename = "H", default = "default_smoothness")]
        h: Smoothness,
        #[serde(rename = "B", default = "default_b")]
        b: f64,
        #[serde(rename = "D")]
        d: usize,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    Coinflip {
        #[serde(rename = "L")]
        l: f64,
        #[serde(rename = "B", default = "default_b")]
        b: f64,
        /// Oracle budget; defaults to the graph size.
        #[serde(rename = "N", default)]
        n: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    QuadraticChain {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "B", default = "default_b")]
        b: f64,
        #[serde(rename = "D")]
        d: usize,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        sigma: f64,
    },
}

impl InstanceSpec {
    /// Desk-scale default dimension: frame size + query budget + margin.
    fn default_dim(frame: usize, graph: &OracleGraph) -> usize {
        frame + graph.size() + 16
    }

    /// Builds the instance. `seed_salt` folds the run seed into the
    /// instance's own randomness (frames, coin draws) so that independent
    /// runs see independent draws from the instance distribution.
    pub fn build(&self, graph: &OracleGraph, seed_salt: u64) -> Result<Box<dyn Instance>> {
        match self {
            InstanceSpec::Chain {
                l,
                h,
                b,
                d,
                m,
                seed,
            } => {
                let class = LipschitzSmoothClass::new(*l, h.0, *b)?;
                let dim = m.unwrap_or_else(|| Self::default_dim(2 * d, graph));
                Ok(Box::new(instances::chain_instance(
                    class,
                    *d,
                    dim,
                    seed ^ seed_salt,
                )?))
            }
            InstanceSpec::Moreau {
                l,
                h,
                b,
                d,
                m,
                seed,
            } => {
                let class = LipschitzSmoothClass::new(*l, h.0, *b)?;
                let dim = m.unwrap_or_else(|| Self::default_dim(d + 1, graph));
                Ok(Box::new(instances::moreau_instance(
                    class,
                    *d,
                    dim,
                    seed ^ seed_salt,
                )?))
            }
            InstanceSpec::Coinflip { l, b, n, seed } => {
                let budget = n.unwrap_or_else(|| graph.size());
                Ok(Box::new(instances::coinflip_instance(
                    *l,
                    *b,
                    budget,
                    seed ^ seed_salt,
                )?))
            }
            InstanceSpec::QuadraticChain {
                h,
                b,
                d,
                m,
                seed,
                sigma,
            } => {
                let dim = m.unwrap_or_else(|| Self::default_dim(*d, graph));
                Ok(Box::new(instances::quadratic_chain_instance(
                    *h,
                    *b,
                    *d,
                    dim,
                    seed ^ seed_salt,
                    *sigma,
                )?))
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            InstanceSpec::Chain { .. } => "chain",
            InstanceSpec::Moreau { .. } => "moreau",
            InstanceSpec::Coinflip { .. } => "coinflip",
            InstanceSpec::QuadraticChain { .. } => "quadratic_chain",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "algorithm", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    SequentialSgd {
        /// Chain length; defaults to the graph depth.
        #[serde(default)]
        steps: Option<usize>,
        #[serde(default)]
        step: Option<StepSchedule>,
    },
    AmbSgd {
        #[serde(default)]
        batch: Option<usize>,
        #[serde(default)]
        schedule: Option<AcceleratedSchedule>,
    },
    SmoothedAmbSgd {
        #[serde(default)]
        batch: Option<usize>,
        #[serde(default)]
        schedule: Option<AcceleratedSchedule>,
    },
    DelayedSgd {
        #[serde(default)]
        step: Option<StepSchedule>,
    },
    WaitAndCollect {
        #[serde(default)]
        schedule: Option<AcceleratedSchedule>,
        /// "standard" stages of 2 tau nodes or "extended" stages of 2 tau + 1.
        #[serde(default)]
        variant: algorithms::WaitAndCollectVariant,
    },
    ParallelSgd {
        #[serde(default)]
        step: Option<StepSchedule>,
    },
    Svrg {
        #[serde(default)]
        n: AutoOr<usize>,
        #[serde(default)]
        lambda: AutoOr<f64>,
        #[serde(rename = "I", default)]
        inner: AutoOr<usize>,
        #[serde(default)]
        step: AutoOr<f64>,
    },
}

impl AlgorithmSpec {
    pub fn build(
        &self,
        class: &LipschitzSmoothClass,
        graph: &OracleGraph,
    ) -> Result<Box<dyn NodeProgram>> {
        match self {
            AlgorithmSpec::SequentialSgd { steps, step } => {
                let steps = steps.unwrap_or_else(|| graph.depth());
                Ok(Box::new(algorithms::sequential_sgd(
                    class.clone(),
                    graph,
                    steps,
                    step.unwrap_or_default(),
                )?))
            }
            AlgorithmSpec::AmbSgd { batch, schedule } => Ok(Box::new(algorithms::amb_sgd(
                class.clone(),
                graph,
                *batch,
                *schedule,
            )?)),
            AlgorithmSpec::SmoothedAmbSgd { batch, schedule } => Ok(Box::new(
                algorithms::smoothed_amb_sgd(class.clone(), graph, *batch, *schedule)?,
            )),
            AlgorithmSpec::DelayedSgd { step } => Ok(Box::new(algorithms::delayed_sgd(
                class.clone(),
                graph,
                step.unwrap_or_default(),
            )?)),
            AlgorithmSpec::WaitAndCollect { schedule, variant } => Ok(Box::new(
                algorithms::wait_and_collect_variant(class.clone(), graph, *schedule, *variant)?,
            )),
            AlgorithmSpec::ParallelSgd { step } => Ok(Box::new(algorithms::parallel_sgd(
                class.clone(),
                graph,
                step.unwrap_or_default(),
            )?)),
            AlgorithmSpec::Svrg {
                n,
                lambda,
                inner,
                step,
            } => {
                let (t, k, m) = match *graph.label() {
                    GraphLabel::Intermittent { t, k, m } => (t, k, m),
                    ref other => {
                        return Err(Error::Scheduling(format!(
                            "SVRG needs an intermittent graph, got {other:?}"
                        )))
                    }
                };
                let params = SvrgParams::resolve(
                    class,
                    t,
                    k,
                    m,
                    n.clone().into_option(),
                    lambda.clone().into_option(),
                    inner.clone().into_option(),
                    step.clone().into_option(),
                )?;
                Ok(Box::new(algorithms::svrg_intermittent(
                    class.clone(),
                    graph,
                    params,
                )?))
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            AlgorithmSpec::SequentialSgd { .. } => "sequential_sgd",
            AlgorithmSpec::AmbSgd { .. } => "amb_sgd",
            AlgorithmSpec::SmoothedAmbSgd { .. } => "smoothed_amb_sgd",
            AlgorithmSpec::DelayedSgd { .. } => "delayed_sgd",
            AlgorithmSpec::WaitAndCollect { .. } => "wait_and_collect",
            AlgorithmSpec::ParallelSgd { .. } => "parallel_sgd",
            AlgorithmSpec::Svrg { .. } => "svrg",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

fn default_reps() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub instance: InstanceSpec,
    pub algorithm: AlgorithmSpec,
    pub seeds: Vec<u64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config(
                "seeds: must list at least one seed".to_string(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps: must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Applies one sweep-axis assignment. The axis name is matched against
    /// graph, instance and algorithm fields; wherever it exists it is set.
    pub fn apply_axis(&mut self, name: &str, value: f64) -> Result<()> {
        let as_usize = || -> Result<usize> {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "sweep.values: axis {name} needs positive integers, got {value}"
                )));
            }
            Ok(value as usize)
        };
        let mut applied = false;
        match name {
            "T" => {
                match &mut self.graph {
                    GraphSpec::Path { t }
                    | GraphSpec::Layer { t, .. }
                    | GraphSpec::Intermittent { t, .. } => *t = as_usize()?,
                    GraphSpec::Delay { t, tau } => {
                        *t = as_usize()?;
                        if let TauSpec::Schedule(_) = tau {
                            return Err(Error::Config(
                                "sweep.parameter: cannot sweep T under an explicit tau schedule"
                                    .to_string(),
                            ));
                        }
                    }
                    GraphSpec::Custom { .. } => {
                        return Err(Error::Config(
                            "sweep.parameter: custom graphs have no T".to_string(),
                        ))
                    }
                }
                applied = true;
            }
            "M" => match &mut self.graph {
                GraphSpec::Layer { m, .. } | GraphSpec::Intermittent { m, .. } => {
                    *m = as_usize()?;
                    applied = true;
                }
                _ => {}
            },
            "K" => {
                if let GraphSpec::Intermittent { k, .. } = &mut self.graph {
                    *k = as_usize()?;
                    applied = true;
                }
            }
            "tau" => {
                if let GraphSpec::Delay { tau, .. } = &mut self.graph {
                    *tau = TauSpec::Constant(as_usize()?);
                    applied = true;
                }
            }
            "D" => match &mut self.instance {
                InstanceSpec::Chain { d, .. }
                | InstanceSpec::Moreau { d, .. }
                | InstanceSpec::QuadraticChain { d, .. } => {
                    *d = as_usize()?;
                    applied = true;
                }
                _ => {}
            },
            "m" => match &mut self.instance {
                InstanceSpec::Chain { m, .. }
                | InstanceSpec::Moreau { m, .. }
                | InstanceSpec::QuadraticChain { m, .. } => {
                    *m = Some(as_usize()?);
                    applied = true;
                }
                _ => {}
            },
            "sigma" => {
                if let InstanceSpec::QuadraticChain { sigma, .. } = &mut self.instance {
                    *sigma = value;
                    applied = true;
                }
            }
            "L" => match &mut self.instance {
                InstanceSpec::Chain { l, .. }
                | InstanceSpec::Moreau { l, .. }
                | InstanceSpec::Coinflip { l, .. } => {
                    *l = value;
                    applied = true;
                }
                _ => {}
            },
            "batch" => match &mut self.algorithm {
                AlgorithmSpec::AmbSgd { batch, .. }
                | AlgorithmSpec::SmoothedAmbSgd { batch, .. } => {
                    *batch = Some(as_usize()?);
                    applied = true;
                }
                _ => {}
            },
            "steps" => {
                if let AlgorithmSpec::SequentialSgd { steps, .. } = &mut self.algorithm {
                    *steps = Some(as_usize()?);
                    applied = true;
                }
            }
            "n" => {
                if let AlgorithmSpec::Svrg { n, .. } = &mut self.algorithm {
                    *n = AutoOr::Value(as_usize()?);
                    applied = true;
                }
            }
            _ => {}
        }
        if !applied {
            return Err(Error::Config(format!(
                "sweep.parameter: {name} does not apply to this configuration"
            )));
        }
        Ok(())
    }
}
