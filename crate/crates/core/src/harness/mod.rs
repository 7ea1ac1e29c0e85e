//! Experiment configs, presets, run plumbing and the `irpp` command line.

use std::path::Path;

use ndarray::{s, Array1};
use thiserror::Error;

use crate::digraph::{GraphError, ValidationReport};
use crate::engine::{BracketStats, EngineError, EngineOptions, PushPull, RunSummary, Schedule};
use crate::metrics::{self, MetricRow, MetricsError, MetricsObserver};
use crate::oracle::{quadratic_bilevel_solution, OracleError};
use crate::problems::ProblemError;
use crate::rng::DataRng;

mod cli;
mod config;
mod presets;

pub use cli::run_cli;
pub use config::{
    BaselineSpec, Block, Experiment, ExperimentConfig, GraphSpec, MetricsSpec, MixingRule, ProblemSpec, PushGraph,
    ScheduleSpec, Toggle,
};
pub use presets::{preset, PRESET_NAMES};

/// Library version recorded in CSV headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown preset `{0}` (known: {known})", known = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("assumption checks failed: {}", failures(.0))]
    Validation(ValidationReport),
    #[error("problem: {0}")]
    Problem(#[from] ProblemError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn failures(report: &ValidationReport) -> String {
    report
        .failures()
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Which update a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Diminishing `γ̂_k`, `λ_k`.
    Regularized,
    /// Constant `γ`, `λ` from the baseline section.
    Fixed,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Regularized => "iteratively-regularized",
            Variant::Fixed => "fixed-regularization",
        }
    }
}

/// Results of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub variant: Variant,
    pub rows: Vec<MetricRow>,
    pub comments: Vec<String>,
    pub summary: RunSummary,
    /// `x̄_K = (1/m) uᵀ X_K`.
    pub xbar: Array1<f64>,
    pub max_tracking_ratio: f64,
    /// Test-set accuracy of the final iterate (SVM only).
    pub test_accuracy: Option<f64>,
}

impl RunOutput {
    pub fn final_row(&self) -> &MetricRow {
        self.rows.last().expect("runs observe at least two iterations")
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut buf = Vec::new();
        metrics::write_csv(&mut buf, &self.comments, &self.rows)?;
        Ok(buf)
    }
}

impl Experiment {
    /// Reference bilevel solution: the instance's known answer, else the
    /// exact null-space solve for linear-gradient instances.
    pub fn reference_solution(&self) -> Result<Option<Array1<f64>>, HarnessError> {
        if let Some(x) = self.problem.known_solution() {
            return Ok(Some(x.clone()));
        }
        match self.problem.quadratic_model() {
            Some(q) => Ok(Some(quadratic_bilevel_solution(&q)?.point())),
            None => Ok(None),
        }
    }

    fn schedule_for(&self, variant: Variant) -> Result<Schedule, HarnessError> {
        match variant {
            Variant::Regularized => Ok(self.schedule.clone()),
            Variant::Fixed => self
                .config
                .build_baseline()?
                .ok_or_else(|| HarnessError::Config("no [baseline] section for the fixed-regularization run".into())),
        }
    }

    /// Runs the engine with a metrics observer and assembles the CSV header.
    pub fn run(&self, variant: Variant, parallel: bool) -> Result<RunOutput, HarnessError> {
        let xstar = self.reference_solution()?;
        let schedule = self.schedule_for(variant)?;
        let engine = PushPull::new(&self.problem, &self.mix, schedule)?.with_options(EngineOptions {
            parallel,
            check_invariants: true,
        });
        let mut obs = MetricsObserver::new(&self.problem, xstar, self.tikhonov_enabled());
        let summary = engine.run(self.x0.clone(), self.config.iterations, self.config.stride, &mut [&mut obs])?;
        let xbar = summary.state.weighted_average(&self.mix.u);
        let test_accuracy = self.svm.as_ref().map(|d| {
            let n = d.features.ncols();
            d.accuracy(xbar.slice(s![..n]), xbar[n], &d.test)
        });
        let max_tracking_ratio = obs.max_tracking_ratio();
        let mut out = RunOutput {
            variant,
            rows: obs.into_rows(),
            comments: Vec::new(),
            summary,
            xbar,
            max_tracking_ratio,
            test_accuracy,
        };
        out.comments = self.header(&out);
        Ok(out)
    }

    fn header(&self, out: &RunOutput) -> Vec<String> {
        let mut c = vec![
            format!("irpp {VERSION}"),
            format!("variant: {}", out.variant.label()),
            format!("rng: {}", DataRng::ALGORITHM),
        ];
        if let Some(eps) = self.config.schedule.epsilon {
            c.push(format!("epsilon: {eps}"));
        }
        c.push("norms: consensus and distance columns use Euclidean/Frobenius norms".into());
        c.push(format!("instance: {} fingerprint={}", self.problem.name(), self.problem.fingerprint()));
        for note in self.problem.notes() {
            c.push(format!("note: {note}"));
        }
        c.push(bracket_line(&out.summary.bracket));
        c.push(format!("max tracking_residual/(1+|Y|): {:e}", out.max_tracking_ratio));
        if let Some(acc) = out.test_accuracy {
            c.push(format!("test accuracy: {acc}"));
        }
        c.push("config:".into());
        c.extend(self.config.to_toml().lines().filter(|l| !l.is_empty()).map(|l| format!("  {l}")));
        c
    }
}

fn bracket_line(b: &BracketStats) -> String {
    format!(
        "bracket: theta={:e} upper={:e} alpha/gamma_hat in [{:e}, {:e}] min slack lower={:e} upper={:e} over {} rounds",
        b.theta, b.upper, b.min_ratio, b.max_ratio, b.min_lower_slack, b.min_upper_slack, b.rounds
    )
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}
