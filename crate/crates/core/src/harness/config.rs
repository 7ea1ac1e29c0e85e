use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::digraph::{
    build_column_stochastic, build_laplacian_column, build_laplacian_mixing, build_row_stochastic,
    make_topology, perron_pair, validate_assumptions, MixingPair, TopologyKind, ValidationReport,
};
use crate::engine::Schedule;
use crate::oracle::nonneg_equality_qp;
use crate::problems::{
    data, gaussian_kernel, make_blur_instance, make_least_norm_ls, make_linear_constrained,
    make_svm_instance, BlurMode, ProblemInstance, SvmData,
};

use super::HarnessError;

/// One experiment, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub iterations: usize,
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub graph: GraphSpec,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSpec>,
    #[serde(default)]
    pub metrics: MetricsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Sensor-network least squares with least-norm outer objective.
    Sensor {
        agents: usize,
        dim: usize,
        rows: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise: Option<f64>,
    },
    /// Least-norm least squares from inline blocks.
    LeastNorm { blocks: Vec<Block> },
    /// Least-norm least squares from CSV files, rows split contiguously.
    LeastNormCsv {
        matrix: PathBuf,
        rhs: PathBuf,
        agents: usize,
    },
    /// Random feasible QP under `Ax = b`, `x ≥ 0`.
    ConstrainedQp { agents: usize, dim: usize },
    /// Gaussian deblurring of the synthetic test image.
    Deblur {
        width: usize,
        sigma: f64,
        radius: usize,
        agents: usize,
        #[serde(default)]
        mode: BlurMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise: Option<f64>,
    },
    /// Penalized primal SVM on two Gaussian classes or a CSV dataset.
    Svm {
        agents: usize,
        eta: f64,
        eps_sc: f64,
        samples: usize,
        train: usize,
        separation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MixingRule {
    /// Uniform weights over parents plus a self weight.
    #[default]
    Rule,
    /// `I − L/(2 d_max)`.
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PushGraph {
    /// `C` on the same digraph as `R`.
    #[default]
    Same,
    /// `C` on the reversed digraph (needed for line and star).
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub kind: TopologyKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_probability: Option<f64>,
    #[serde(default = "one")]
    pub self_weight: f64,
    #[serde(default)]
    pub mixing: MixingRule,
    #[serde(default)]
    pub push: PushGraph,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub gamma0: f64,
    pub lambda0: f64,
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    /// Slack used to derive `b` from `a`; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    /// `x*_{λ_k}` at every observation.
    #[serde(default)]
    pub tikhonov: Toggle,
}

/// Instance, SVM dataset and ground truth, when the generator has one.
type BuiltProblem = (ProblemInstance, Option<SvmData>, Option<Array1<f64>>);

/// Everything a run needs, built from a config.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: ProblemInstance,
    pub mix: MixingPair,
    pub schedule: Schedule,
    pub x0: Array2<f64>,
    pub svm: Option<SvmData>,
    pub truth: Option<Array1<f64>>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a config; relative data and output paths are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(out) = &mut self.output {
            fix(out);
        }
        match &mut self.problem {
            ProblemSpec::LeastNormCsv { matrix, rhs, .. } => {
                fix(matrix);
                fix(rhs);
            }
            ProblemSpec::Svm { data: Some(d), .. } => fix(d),
            _ => {}
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build_schedule(&self) -> Result<Schedule, HarnessError> {
        let s = &self.schedule;
        let mut sched = Schedule::diminishing(s.gamma0, s.lambda0, s.a, s.b)?;
        if let Some(t) = s.theta {
            sched = sched.with_theta(t)?;
        }
        if let Some(sc) = &s.scales {
            sched = sched.with_scales(sc.clone())?;
        }
        Ok(sched)
    }

    pub fn build_baseline(&self) -> Result<Option<Schedule>, HarnessError> {
        self.baseline
            .as_ref()
            .map(|b| Schedule::constant(b.gamma, b.lambda).map_err(HarnessError::from))
            .transpose()
    }

    fn mixing_matrices(&self, m: usize) -> Result<(Array2<f64>, Array2<f64>), HarnessError> {
        let g = &self.graph;
        let topo = make_topology(g.kind, m, g.seed, g.edge_probability)?;
        let push = match g.push {
            PushGraph::Same => topo.clone(),
            PushGraph::Reversed => topo.reversed(),
        };
        let w = vec![g.self_weight; m];
        Ok(match g.mixing {
            MixingRule::Rule => (build_row_stochastic(&topo, &w)?, build_column_stochastic(&push, &w)?),
            MixingRule::Laplacian => (build_laplacian_mixing(&topo)?, build_laplacian_column(&push)?),
        })
    }

    /// Assumption checks on the configured mixing matrices.
    pub fn validate_graph(&self) -> Result<(ValidationReport, Option<MixingPair>), HarnessError> {
        let m = self.agents()?;
        let (r, c) = self.mixing_matrices(m)?;
        let report = validate_assumptions(&r, &c);
        let pair = if report.all_passed() { Some(perron_pair(&r, &c)?) } else { None };
        Ok((report, pair))
    }

    pub fn agents(&self) -> Result<usize, HarnessError> {
        let m = match &self.problem {
            ProblemSpec::Sensor { agents, .. }
            | ProblemSpec::LeastNormCsv { agents, .. }
            | ProblemSpec::ConstrainedQp { agents, .. }
            | ProblemSpec::Deblur { agents, .. }
            | ProblemSpec::Svm { agents, .. } => *agents,
            ProblemSpec::LeastNorm { blocks } => blocks.len(),
        };
        if m == 0 {
            return Err(HarnessError::Config("at least one agent is required".into()));
        }
        Ok(m)
    }

    /// Builds the instance, network and schedule.
    pub fn build(&self) -> Result<Experiment, HarnessError> {
        if self.iterations == 0 {
            return Err(HarnessError::Config("iterations must be positive".into()));
        }
        if self.stride == 0 {
            return Err(HarnessError::Config("stride must be positive".into()));
        }
        let m = self.agents()?;
        let (problem, svm, truth) = self.build_problem(m)?;
        let (r, c) = self.mixing_matrices(m)?;
        let report = validate_assumptions(&r, &c);
        if !report.all_passed() {
            return Err(HarnessError::Validation(report));
        }
        let mix = perron_pair(&r, &c)?;
        let schedule = self.build_schedule()?;
        schedule.check_against(&mix)?;
        if let Some(b) = self.build_baseline()? {
            b.check_against(&mix)?;
        }
        let x0 = Array2::zeros((m, problem.dim()));
        Ok(Experiment {
            config: self.clone(),
            problem,
            mix,
            schedule,
            x0,
            svm,
            truth,
        })
    }

    fn build_problem(&self, m: usize) -> Result<BuiltProblem, HarnessError> {
        Ok(match &self.problem {
            ProblemSpec::Sensor { dim, rows, noise, .. } => {
                let (blocks, x_true) = data::sensor_blocks(m, *dim, *rows, *noise, self.seed);
                (make_least_norm_ls(blocks)?, None, Some(x_true))
            }
            ProblemSpec::LeastNorm { blocks } => {
                let mut out = Vec::with_capacity(blocks.len());
                for (i, blk) in blocks.iter().enumerate() {
                    let n = blk.a.first().map_or(0, Vec::len);
                    let flat: Vec<f64> = blk.a.iter().flatten().copied().collect();
                    let a = Array2::from_shape_vec((blk.a.len(), n), flat)
                        .map_err(|_| HarnessError::Config(format!("block {i}: ragged matrix rows")))?;
                    let a = if blk.a.is_empty() {
                        let width = blocks.iter().find_map(|b| b.a.first().map(Vec::len)).unwrap_or(0);
                        Array2::zeros((0, width))
                    } else {
                        a
                    };
                    out.push((a, Array1::from(blk.b.clone())));
                }
                (make_least_norm_ls(out)?, None, None)
            }
            ProblemSpec::LeastNormCsv { matrix, rhs, .. } => {
                let a = data::load_matrix_csv(matrix)?;
                let b = data::load_matrix_csv(rhs)?;
                if b.ncols() != 1 || b.nrows() != a.nrows() {
                    return Err(HarnessError::Config(format!(
                        "rhs must be a single column with {} rows",
                        a.nrows()
                    )));
                }
                let b = b.column(0).to_owned();
                let blocks = data::contiguous_partition(a.nrows(), m)
                    .into_iter()
                    .map(|rows| (a.select(ndarray::Axis(0), &rows), b.select(ndarray::Axis(0), &rows)))
                    .collect();
                (make_least_norm_ls(blocks)?, None, None)
            }
            ProblemSpec::ConstrainedQp { dim, .. } => {
                let qp = data::constrained_qp(m, *dim, self.seed);
                let n = *dim;
                let h = qp.quad.iter().fold(Array2::zeros((n, n)), |acc, (q, _)| acc + q);
                let c = qp.quad.iter().fold(Array1::zeros(n), |acc, (_, l)| acc + l);
                let rows: Vec<_> = qp.blocks.iter().map(|(a, _)| a.view()).collect();
                let a = ndarray::concatenate(ndarray::Axis(0), &rows).map_err(|e| HarnessError::Config(e.to_string()))?;
                let b = Array1::from_iter(qp.blocks.iter().flat_map(|(_, b)| b.iter().copied()));
                let exact = nonneg_equality_qp(h.view(), c.view(), a.view(), b.view(), &qp.nonneg)?;
                let p = make_linear_constrained(qp.quad, qp.blocks, qp.nonneg)?.with_known_solution(exact.point());
                (p, None, None)
            }
            ProblemSpec::Deblur {
                width,
                sigma,
                radius,
                mode,
                noise,
                ..
            } => {
                let image = data::synthetic_image(*width);
                let kernel = gaussian_kernel(*sigma, *radius);
                let p = make_blur_instance(&image, &kernel, m, *mode, noise.map(|s| (s, self.seed)))?;
                (p, None, Some(image))
            }
            ProblemSpec::Svm {
                eta,
                eps_sc,
                samples,
                train,
                separation,
                data: path,
                ..
            } => {
                let ds = match path {
                    Some(p) => data::load_labeled_csv(p)?,
                    None => data::two_gaussians(*samples, *train, *separation, self.seed),
                };
                let partition = data::contiguous_partition(ds.train.len(), m);
                let p = make_svm_instance(ds.train_features(), ds.train_labels(), partition, *eta, *eps_sc)?;
                (p, Some(ds), None)
            }
        })
    }
}

impl Experiment {
    /// Whether the metrics observer should solve for `x*_{λ_k}`.
    pub fn tikhonov_enabled(&self) -> bool {
        match self.config.metrics.tikhonov {
            Toggle::On => true,
            Toggle::Off => false,
            Toggle::Auto => crate::metrics::MetricsObserver::tikhonov_affordable(&self.problem),
        }
    }
}
