use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::digraph::MixingPair;

/// Step-size and regularization sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StepRule {
    /// `γ̂_k = γ̂_0/(k+1)^a`, `λ_k = λ_0/(k+1)^b` with `0 < b < a < 1`, `a + b < 1`.
    Diminishing { gamma0: f64, lambda0: f64, a: f64, b: f64 },
    /// `γ̂_k ≡ γ`, `λ_k ≡ λ` (fixed-regularization push-pull).
    Constant { gamma: f64, lambda: f64 },
}

/// Schedule values at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub k: usize,
    pub gamma_hat: f64,
    pub lambda: f64,
    /// `γ_{i,k} = s_i γ̂_k`.
    pub gammas: Vec<f64>,
    /// `α_k = (1/m) Σ u_i v_i γ_{i,k}`.
    pub alpha: f64,
    /// `θγ̂_k` and `(uᵀv/m)γ̂_k`.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    rule: StepRule,
    theta: Option<f64>,
    scales: Option<Vec<f64>>,
}

impl Schedule {
    pub fn diminishing(gamma0: f64, lambda0: f64, a: f64, b: f64) -> Result<Self, EngineError> {
        Self::new(StepRule::Diminishing { gamma0, lambda0, a, b })
    }

    pub fn constant(gamma: f64, lambda: f64) -> Result<Self, EngineError> {
        Self::new(StepRule::Constant { gamma, lambda })
    }

    pub fn new(rule: StepRule) -> Result<Self, EngineError> {
        let bad = |msg: String| Err(EngineError::Schedule(msg));
        match rule {
            StepRule::Diminishing { gamma0, lambda0, a, b } => {
                if !(gamma0 > 0.0 && gamma0.is_finite()) {
                    return bad(format!("gamma0 must be positive, got {gamma0}"));
                }
                if !(lambda0 > 0.0 && lambda0.is_finite()) {
                    return bad(format!("lambda0 must be positive, got {lambda0}"));
                }
                if !(0.0 < b && b < a && a < 1.0 && a + b < 1.0) {
                    return bad(format!("exponents need 0 < b < a < 1 and a + b < 1, got a={a}, b={b}"));
                }
            }
            StepRule::Constant { gamma, lambda } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return bad(format!("gamma must be positive, got {gamma}"));
                }
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("lambda must be nonnegative, got {lambda}"));
                }
            }
        }
        Ok(Self {
            rule,
            theta: None,
            scales: None,
        })
    }

    /// Lower bracket constant; defaults to half of `(1/m) Σ u_i v_i s_i`.
    pub fn with_theta(mut self, theta: f64) -> Result<Self, EngineError> {
        if !(theta > 0.0) {
            return Err(EngineError::Schedule(format!("theta must be positive, got {theta}")));
        }
        self.theta = Some(theta);
        Ok(self)
    }

    /// Per-agent factors `s_i ∈ (0, 1]`; defaults to all ones.
    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self, EngineError> {
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(EngineError::Schedule(format!("scale factors must lie in (0, 1], got {s}")));
        }
        self.scales = Some(scales);
        Ok(self)
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn scales(&self) -> Option<&[f64]> {
        self.scales.as_deref()
    }

    pub fn gamma_hat(&self, k: usize) -> f64 {
        match self.rule {
            StepRule::Diminishing { gamma0, a, .. } => gamma0 / ((k + 1) as f64).powf(a),
            StepRule::Constant { gamma, .. } => gamma,
        }
    }

    pub fn lambda(&self, k: usize) -> f64 {
        match self.rule {
            StepRule::Diminishing { lambda0, b, .. } => lambda0 / ((k + 1) as f64).powf(b),
            StepRule::Constant { lambda, .. } => lambda,
        }
    }

    /// `Λ_k = |1 − λ_{k+1}/λ_k| = 1 − (1 − 1/(k+2))^b`, evaluated without
    /// cancellation.
    pub fn lambda_drift(&self, k: usize) -> f64 {
        match self.rule {
            StepRule::Diminishing { b, .. } => -(b * (-1.0 / (k + 2) as f64).ln_1p()).exp_m1(),
            StepRule::Constant { .. } => 0.0,
        }
    }

    fn scale(&self, i: usize) -> f64 {
        self.scales.as_ref().map_or(1.0, |s| s[i])
    }

    /// `(1/m) Σ u_i v_i s_i`, summed in agent order.
    fn weighted_scale(&self, mix: &MixingPair) -> f64 {
        let m = mix.agents();
        (0..m).map(|i| mix.u[i] * mix.v[i] * self.scale(i)).sum::<f64>() / m as f64
    }

    /// `(1/m) uᵀv`, summed in agent order.
    pub fn upper_ratio(mix: &MixingPair) -> f64 {
        let m = mix.agents();
        (0..m).map(|i| mix.u[i] * mix.v[i]).sum::<f64>() / m as f64
    }

    /// `(uᵀv/m)γ̂`, summed exactly like `α_k` with every `s_i = 1`.
    pub fn upper_bracket(gamma_hat: f64, mix: &MixingPair) -> f64 {
        let m = mix.agents();
        (0..m).map(|i| mix.u[i] * mix.v[i] * gamma_hat).sum::<f64>() / m as f64
    }

    pub fn effective_theta(&self, mix: &MixingPair) -> f64 {
        self.theta.unwrap_or_else(|| 0.5 * self.weighted_scale(mix))
    }

    /// Checks the per-agent factors against the network: one per agent and
    /// `s_i = 1` wherever `u_i v_i > 0`.
    pub fn check_against(&self, mix: &MixingPair) -> Result<(), EngineError> {
        if let Some(s) = &self.scales {
            if s.len() != mix.agents() {
                return Err(EngineError::Schedule(format!(
                    "{} scale factors for {} agents",
                    s.len(),
                    mix.agents()
                )));
            }
            for (i, &si) in s.iter().enumerate() {
                if mix.u[i] * mix.v[i] > 0.0 && si != 1.0 {
                    return Err(EngineError::Schedule(format!(
                        "agent {i} is a common root and needs scale 1, got {si}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Schedule values at `k`, with `θγ̂_k ≤ α_k ≤ (uᵀv/m)γ̂_k` enforced.
    pub fn at(&self, k: usize, mix: &MixingPair) -> Result<StepParams, EngineError> {
        let m = mix.agents();
        let gamma_hat = self.gamma_hat(k);
        let gammas: Vec<f64> = (0..m).map(|i| self.scale(i) * gamma_hat).collect();
        let alpha = (0..m).map(|i| mix.u[i] * mix.v[i] * gammas[i]).sum::<f64>() / m as f64;
        let lo = self.effective_theta(mix) * gamma_hat;
        let hi = Self::upper_bracket(gamma_hat, mix);
        if !(lo <= alpha && alpha <= hi) {
            return Err(EngineError::Bracket { k, alpha, lo, hi });
        }
        Ok(StepParams {
            k,
            gamma_hat,
            lambda: self.lambda(k),
            gammas,
            alpha,
            lower: lo,
            upper: hi,
        })
    }
}
