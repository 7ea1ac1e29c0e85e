//! The synchronous push-pull round with iterative regularization:
//!
//! ```text
//! X_{k+1} = R (X_k − Γ_k Y_k)
//! Y_{k+1} = C Y_k + 𝐆_{k+1}(X_{k+1}) − 𝐆_k(X_k),   Y_0 = 𝐆_0(X_0)
//! ```
//!
//! where row `i` of `𝐆_k(X)` is `∇g_i(x_i) + λ_k ∇f_i(x_i)` and
//! `Γ_k = diag(γ_{i,k})`.

mod schedule;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::digraph::MixingPair;
use crate::problems::{ProblemError, ProblemInstance};

pub use schedule::{Schedule, StepParams, StepRule};

/// Entries above this magnitude abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e100;
/// Relative tolerance of the runtime invariant checks.
pub const INVARIANT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("step-size bracket violated at k={k}: alpha={alpha:e} not in [{lo:e}, {hi:e}]")]
    Bracket { k: usize, alpha: f64, lo: f64, hi: f64 },
    #[error("diverged at iteration {iteration}: max |entry| = {max_abs:e}")]
    Divergence { iteration: usize, max_abs: f64 },
    #[error("{which} invariant violated at k={k}: {value:e} > {bound:e}")]
    Invariant {
        k: usize,
        which: &'static str,
        value: f64,
        bound: f64,
    },
    #[error("at least one iteration is required")]
    NoIterations,
    #[error("observer stride must be positive")]
    ZeroStride,
    #[error("mixing pair has {mix} agents, problem has {problem}")]
    AgentMismatch { mix: usize, problem: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("observer failed: {0}")]
    Observer(String),
}

/// Iterates `X_k`, trackers `Y_k` and the cached `𝐆_k(X_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub k: usize,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub grad: Array2<f64>,
}

impl NetworkState {
    /// `x̄ = (1/m) uᵀX`.
    pub fn weighted_average(&self, u: &Array1<f64>) -> Array1<f64> {
        weighted_average(self.x.view(), u)
    }
}

pub(crate) fn weighted_average(x: ArrayView2<'_, f64>, u: &Array1<f64>) -> Array1<f64> {
    let m = x.nrows();
    let mut acc = Array1::zeros(x.ncols());
    for i in 0..m {
        acc.scaled_add(u[i], &x.row(i));
    }
    acc / m as f64
}

fn column_mean(a: &Array2<f64>) -> Array1<f64> {
    let mut acc = Array1::zeros(a.ncols());
    for row in a.axis_iter(Axis(0)) {
        acc += &row;
    }
    acc / a.nrows() as f64
}

/// What an observer sees at an observed iteration.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub state: &'a NetworkState,
    pub gamma_hat: f64,
    pub lambda: f64,
    pub problem: &'a ProblemInstance,
    pub mix: &'a MixingPair,
}

pub trait Observer {
    fn observe(&mut self, snap: &Snapshot<'_>) -> Result<(), EngineError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    /// Evaluate gradient rows on the rayon pool.
    pub parallel: bool,
    /// Check the tracking and weighted-average identities every round.
    pub check_invariants: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            parallel: false,
            check_invariants: true,
        }
    }
}

/// Extremes of `α_k/γ̂_k` seen during a run, with the bracket ends and the
/// smallest slacks `α_k − θγ̂_k` and `(uᵀv/m)γ̂_k − α_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketStats {
    pub theta: f64,
    pub upper: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub min_lower_slack: f64,
    pub min_upper_slack: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub state: NetworkState,
    pub bracket: BracketStats,
    pub observations: usize,
}

pub struct PushPull<'a> {
    problem: &'a ProblemInstance,
    mix: &'a MixingPair,
    schedule: Schedule,
    options: EngineOptions,
}

impl<'a> PushPull<'a> {
    pub fn new(problem: &'a ProblemInstance, mix: &'a MixingPair, schedule: Schedule) -> Result<Self, EngineError> {
        if mix.agents() != problem.agents() {
            return Err(EngineError::AgentMismatch {
                mix: mix.agents(),
                problem: problem.agents(),
            });
        }
        schedule.check_against(mix)?;
        Ok(Self {
            problem,
            mix,
            schedule,
            options: EngineOptions::default(),
        })
    }

    /// Fixed-regularization push-pull: `λ_k ≡ λ`, `γ̂_k ≡ γ`.
    pub fn fixed(problem: &'a ProblemInstance, mix: &'a MixingPair, lambda: f64, gamma: f64) -> Result<Self, EngineError> {
        Self::new(problem, mix, Schedule::constant(gamma, lambda)?)
    }

    pub fn with_options(mut self, options: EngineOptions) -> Self {
        self.options = options;
        self
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn gradient(&self, x: &Array2<f64>, lambda: f64) -> Result<Array2<f64>, EngineError> {
        let mut out = Array2::zeros(x.raw_dim());
        self.problem
            .eval_regularized_gradient_into(x.view(), lambda, &mut out, self.options.parallel)?;
        Ok(out)
    }

    /// `Y_0 = 𝐆_0(X_0)`, `k = 0`.
    pub fn init_state(&self, x0: Array2<f64>) -> Result<NetworkState, EngineError> {
        let grad = self.gradient(&x0, self.schedule.lambda(0))?;
        check_finite(0, &x0, &grad)?;
        Ok(NetworkState {
            k: 0,
            x: x0,
            y: grad.clone(),
            grad,
        })
    }

    /// One synchronous round.
    pub fn step(&self, state: &NetworkState) -> Result<NetworkState, EngineError> {
        let params = self.schedule.at(state.k, self.mix)?;
        self.step_with(state, &params)
    }

    fn step_with(&self, state: &NetworkState, params: &StepParams) -> Result<NetworkState, EngineError> {
        let k = state.k;
        let mut z = state.x.clone();
        for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(-params.gammas[i], &state.y.row(i));
        }
        let x = self.mix.r.dot(&z);
        let grad = self.gradient(&x, self.schedule.lambda(k + 1))?;
        let mut y = self.mix.c.dot(&state.y);
        y += &grad;
        y -= &state.grad;
        check_finite(k + 1, &x, &y)?;
        let next = NetworkState { k: k + 1, x, y, grad };
        if self.options.check_invariants {
            self.check_invariants(state, &next, params)?;
        }
        Ok(next)
    }

    fn check_invariants(&self, prev: &NetworkState, next: &NetworkState, params: &StepParams) -> Result<(), EngineError> {
        let y_norm = crate::linalg::frobenius(next.y.view());
        let track = column_mean(&next.y) - column_mean(&next.grad);
        let value = crate::linalg::norm2(track.view());
        let bound = INVARIANT_TOL * (1.0 + y_norm);
        if value > bound {
            return Err(EngineError::Invariant {
                k: next.k,
                which: "gradient tracking",
                value,
                bound,
            });
        }
        // x̄_{k+1} = x̄_k − uᵀΓ_k Y_k / m.
        let u = &self.mix.u;
        let m = prev.x.nrows();
        let mut predicted = prev.weighted_average(u);
        for i in 0..m {
            predicted.scaled_add(-u[i] * params.gammas[i] / m as f64, &prev.y.row(i));
        }
        let diff = next.weighted_average(u) - predicted;
        let value = crate::linalg::norm2(diff.view());
        let scale = crate::linalg::frobenius(prev.x.view()) + params.gamma_hat * crate::linalg::frobenius(prev.y.view());
        let bound = INVARIANT_TOL * (1.0 + scale);
        if value > bound {
            return Err(EngineError::Invariant {
                k: next.k,
                which: "weighted average",
                value,
                bound,
            });
        }
        Ok(())
    }

    /// Runs `iterations` rounds from `x0`, calling every observer at
    /// `k = 0, stride, 2·stride, …` and at the final iteration.
    pub fn run(
        &self,
        x0: Array2<f64>,
        iterations: usize,
        stride: usize,
        observers: &mut [&mut dyn Observer],
    ) -> Result<RunSummary, EngineError> {
        if iterations == 0 {
            return Err(EngineError::NoIterations);
        }
        if stride == 0 {
            return Err(EngineError::ZeroStride);
        }
        let theta = self.schedule.effective_theta(self.mix);
        let upper = Schedule::upper_ratio(self.mix);
        let mut bracket = BracketStats {
            theta,
            upper,
            min_ratio: f64::INFINITY,
            max_ratio: f64::NEG_INFINITY,
            min_lower_slack: f64::INFINITY,
            min_upper_slack: f64::INFINITY,
            rounds: 0,
        };
        let mut state = self.init_state(x0)?;
        let mut observations = 0;
        for k in 0..=iterations {
            if k % stride == 0 || k == iterations {
                let snap = Snapshot {
                    state: &state,
                    gamma_hat: self.schedule.gamma_hat(k),
                    lambda: self.schedule.lambda(k),
                    problem: self.problem,
                    mix: self.mix,
                };
                for obs in observers.iter_mut() {
                    obs.observe(&snap)?;
                }
                observations += 1;
            }
            if k == iterations {
                break;
            }
            let params = self.schedule.at(k, self.mix)?;
            let ratio = params.alpha / params.gamma_hat;
            bracket.min_ratio = bracket.min_ratio.min(ratio);
            bracket.max_ratio = bracket.max_ratio.max(ratio);
            bracket.min_lower_slack = bracket.min_lower_slack.min(params.alpha - params.lower);
            bracket.min_upper_slack = bracket.min_upper_slack.min(params.upper - params.alpha);
            bracket.rounds += 1;
            state = self.step_with(&state, &params)?;
        }
        Ok(RunSummary {
            state,
            bracket,
            observations,
        })
    }
}

fn check_finite(iteration: usize, x: &Array2<f64>, y: &Array2<f64>) -> Result<(), EngineError> {
    let max_abs = x.iter().chain(y.iter()).fold(0.0f64, |acc, v| {
        if v.is_finite() {
            acc.max(v.abs())
        } else {
            f64::INFINITY
        }
    });
    if max_abs > DIVERGENCE_THRESHOLD {
        return Err(EngineError::Divergence { iteration, max_abs });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digraph::{build_column_stochastic, build_row_stochastic, make_topology, perron_pair, TopologyKind};
    use crate::problems::make_least_norm_ls;
    use ndarray::array;

    /// Single agent with `g = ½(x−1)²`, `f = x²`.
    fn scalar_problem() -> ProblemInstance {
        make_least_norm_ls(vec![(array![[1.0]], array![1.0])]).unwrap()
    }

    struct Recorder(Vec<(usize, f64)>);

    impl Observer for Recorder {
        fn observe(&mut self, snap: &Snapshot<'_>) -> Result<(), EngineError> {
            self.0.push((snap.state.k, snap.lambda));
            Ok(())
        }
    }

    #[test]
    fn init_state_examples() {
        let p = scalar_problem();
        let mix = MixingPair::single_agent();
        let s = Schedule::diminishing(0.5, 0.1, 0.4, 0.2).unwrap();
        let engine = PushPull::new(&p, &mix, s).unwrap();
        let st = engine.init_state(array![[0.0]]).unwrap();
        assert_eq!(st.y, array![[-1.0]]);
        assert_eq!(st.k, 0);
        let at_min = engine.init_state(array![[1.0]]).unwrap();
        assert_eq!(at_min.y, array![[0.2]]);
        assert!(engine.init_state(array![[0.0, 1.0]]).is_err());
    }

    #[test]
    fn one_hand_step() {
        let p = scalar_problem();
        let mix = MixingPair::single_agent();
        let s = Schedule::diminishing(0.5, 0.1, 0.4, 0.2).unwrap();
        let engine = PushPull::new(&p, &mix, s).unwrap();
        let st = engine.step(&engine.init_state(array![[0.0]]).unwrap()).unwrap();
        assert_eq!(st.k, 1);
        assert_eq!(st.x, array![[0.5]]);
        let lambda1 = engine.schedule().lambda(1);
        assert!((lambda1 - 0.08706).abs() < 5e-6);
        assert!((st.y[[0, 0]] - (-0.41294)).abs() < 5e-6);
    }

    #[test]
    fn zero_gradients_keep_x_fixed() {
        let p = make_least_norm_ls(vec![(array![[1.0, 1.0]], array![0.0]), (array![[1.0, -1.0]], array![0.0])]).unwrap();
        let g = make_topology(TopologyKind::Ring, 2, 0, None).unwrap();
        let mix = perron_pair(
            &build_row_stochastic(&g, &[1.0, 1.0]).unwrap(),
            &build_column_stochastic(&g, &[1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let engine = PushPull::new(&p, &mix, Schedule::constant(5.0, 0.3).unwrap()).unwrap();
        let st = engine.init_state(Array2::zeros((2, 2))).unwrap();
        let next = engine.step(&st).unwrap();
        assert_eq!(next.x, st.x);
        assert_eq!(next.y, Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn observation_schedule() {
        let p = scalar_problem();
        let mix = MixingPair::single_agent();
        let engine = PushPull::new(&p, &mix, Schedule::diminishing(0.5, 0.1, 0.4, 0.2).unwrap()).unwrap();
        let mut rec = Recorder(Vec::new());
        let out = engine.run(array![[0.0]], 100, 10, &mut [&mut rec]).unwrap();
        assert_eq!(rec.0.len(), 11);
        assert_eq!(rec.0.last().unwrap().0, 100);
        assert_eq!(out.observations, 11);
        let mut rec = Recorder(Vec::new());
        engine.run(array![[0.0]], 25, 10, &mut [&mut rec]).unwrap();
        assert_eq!(rec.0.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 10, 20, 25]);
        assert!(matches!(engine.run(array![[0.0]], 0, 10, &mut []), Err(EngineError::NoIterations)));
        assert!(matches!(engine.run(array![[0.0]], 10, 0, &mut []), Err(EngineError::ZeroStride)));
    }

    #[test]
    fn large_constant_step_diverges() {
        // g = ½(x−1)², so L = 1 and γ = 2.5 gives |1 − γL| = 1.5.
        let p = scalar_problem();
        let mix = MixingPair::single_agent();
        let engine = PushPull::fixed(&p, &mix, 0.0, 2.5).unwrap();
        let err = engine.run(array![[0.0]], 5000, 1000, &mut []).unwrap_err();
        match err {
            EngineError::Divergence { iteration, .. } => assert!(iteration > 100 && iteration < 5000),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn agent_mismatch_rejected() {
        let p = scalar_problem();
        let g = make_topology(TopologyKind::Ring, 3, 0, None).unwrap();
        let mix = perron_pair(
            &build_row_stochastic(&g, &[1.0; 3]).unwrap(),
            &build_column_stochastic(&g, &[1.0; 3]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            PushPull::new(&p, &mix, Schedule::constant(0.1, 0.1).unwrap()),
            Err(EngineError::AgentMismatch { .. })
        ));
    }

    #[test]
    fn invariants_hold_on_random_network() {
        let g = make_topology(TopologyKind::Random, 6, 3, None).unwrap();
        let mix = perron_pair(
            &build_row_stochastic(&g, &[1.0; 6]).unwrap(),
            &build_column_stochastic(&g, &[1.0; 6]).unwrap(),
        )
        .unwrap();
        let (blocks, _) = crate::problems::data::sensor_blocks(6, 4, 1, None, 1);
        let p = make_least_norm_ls(blocks).unwrap();
        let engine = PushPull::new(&p, &mix, Schedule::diminishing(0.1, 0.1, 0.4, 0.35).unwrap())
            .unwrap()
            .with_options(EngineOptions {
                parallel: true,
                check_invariants: true,
            });
        let out = engine.run(Array2::ones((6, 4)), 1000, 100, &mut []).unwrap();
        assert_eq!(out.bracket.rounds, 1000);
        assert!(out.bracket.min_lower_slack >= 0.0);
        assert!(out.bracket.min_upper_slack >= 0.0);
    }
}
