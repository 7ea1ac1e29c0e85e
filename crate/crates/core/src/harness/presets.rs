use crate::digraph::TopologyKind;
use crate::problems::BlurMode;

use super::config::{
    BaselineSpec, Block, ExperimentConfig, GraphSpec, MetricsSpec, MixingRule, ProblemSpec, PushGraph, ScheduleSpec,
    Toggle,
};
use super::HarnessError;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 7] = [
    "sensor",
    "sensor-laplacian",
    "deblur",
    "svm",
    "svm-star",
    "constrained-qp",
    "least-norm",
];

/// Default slack in the rate-optimal exponents.
const EPSILON: f64 = 0.05;

fn graph(kind: TopologyKind, seed: u64, p: Option<f64>, mixing: MixingRule, push: PushGraph) -> GraphSpec {
    GraphSpec {
        kind,
        seed,
        edge_probability: p,
        self_weight: 1.0,
        mixing,
        push,
    }
}

fn schedule(gamma0: f64, lambda0: f64, a: f64, b: f64) -> ScheduleSpec {
    ScheduleSpec {
        gamma0,
        lambda0,
        a,
        b,
        theta: None,
        scales: None,
        epsilon: Some(EPSILON),
    }
}

fn sensor(mixing: MixingRule) -> ExperimentConfig {
    ExperimentConfig {
        name: match mixing {
            MixingRule::Rule => "sensor".into(),
            MixingRule::Laplacian => "sensor-laplacian".into(),
        },
        seed: 1,
        iterations: 100_000,
        stride: 100,
        output: None,
        problem: ProblemSpec::Sensor {
            agents: 10,
            dim: 20,
            rows: 1,
            noise: None,
        },
        graph: graph(TopologyKind::Random, 1, Some(0.3), mixing, PushGraph::Same),
        schedule: schedule(0.05, 0.1, 0.4, 0.4 - EPSILON),
        baseline: Some(BaselineSpec {
            lambda: 0.1,
            gamma: 0.05,
        }),
        metrics: MetricsSpec::default(),
    }
}

fn svm(kind: TopologyKind) -> ExperimentConfig {
    ExperimentConfig {
        name: match kind {
            TopologyKind::Star => "svm-star".into(),
            _ => "svm".into(),
        },
        seed: 7,
        iterations: 20_000,
        stride: 100,
        output: None,
        problem: ProblemSpec::Svm {
            agents: 10,
            eta: 0.05,
            eps_sc: 1e-3,
            samples: 800,
            train: 300,
            separation: 1.0,
            data: None,
        },
        graph: graph(kind, 0, None, MixingRule::Rule, PushGraph::Reversed),
        schedule: schedule(0.5, 0.1, 0.4, 0.4 - EPSILON),
        baseline: Some(BaselineSpec {
            lambda: 0.1,
            gamma: 0.05,
        }),
        metrics: MetricsSpec { tikhonov: Toggle::Off },
    }
}

/// Shipped experiment configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    Ok(match name {
        "sensor" => sensor(MixingRule::Rule),
        "sensor-laplacian" => sensor(MixingRule::Laplacian),
        "deblur" => ExperimentConfig {
            name: "deblur".into(),
            seed: 0,
            iterations: 10_000,
            stride: 100,
            output: None,
            problem: ProblemSpec::Deblur {
                width: 18,
                sigma: 1.0,
                radius: 3,
                agents: 9,
                mode: BlurMode::Separable,
                noise: None,
            },
            graph: graph(TopologyKind::Ring, 0, None, MixingRule::Rule, PushGraph::Same),
            schedule: schedule(1.0, 0.1, 0.4, 0.4 - EPSILON),
            baseline: None,
            metrics: MetricsSpec::default(),
        },
        "svm" => svm(TopologyKind::Line),
        "svm-star" => svm(TopologyKind::Star),
        "constrained-qp" => ExperimentConfig {
            name: "constrained-qp".into(),
            seed: 3,
            iterations: 100_000,
            stride: 100,
            output: None,
            problem: ProblemSpec::ConstrainedQp { agents: 5, dim: 6 },
            graph: graph(TopologyKind::Random, 3, Some(0.4), MixingRule::Rule, PushGraph::Same),
            schedule: schedule(1.0, 5e-4, 0.2, 0.2 - EPSILON / 3.0),
            baseline: None,
            metrics: MetricsSpec::default(),
        },
        "least-norm" => ExperimentConfig {
            name: "least-norm".into(),
            seed: 0,
            iterations: 2_000,
            stride: 10,
            output: None,
            problem: ProblemSpec::LeastNorm {
                blocks: vec![
                    Block {
                        a: vec![vec![1.0, 1.0]],
                        b: vec![2.0],
                    },
                    Block {
                        a: vec![vec![2.0, 2.0]],
                        b: vec![4.0],
                    },
                    Block { a: vec![], b: vec![] },
                ],
            },
            graph: graph(TopologyKind::Ring, 0, None, MixingRule::Rule, PushGraph::Same),
            schedule: schedule(0.05, 0.1, 0.4, 0.4 - EPSILON),
            baseline: None,
            metrics: MetricsSpec::default(),
        },
        other => return Err(HarnessError::UnknownPreset(other.into())),
    })
}
