//! Monte Carlo evaluation of day-ahead wind policies and the μ sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::{
    solve_centralized, ClearingConfig, ClearingError, DispatchSolution, Mode, WindTreatment,
};
use crate::grid::NetworkCase;
use crate::risk::{transaction_cost, PriceSchedule, RiskError};
use crate::scenarios::ScenarioSet;
use crate::SlotMatrix;

pub const DEFAULT_EVAL_SAMPLES: usize = 10_000;
pub const CDF_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Commitment chosen under the CVaR penalty.
    #[value(name = "cvar")]
    CvarRiskLimiting,
    /// Commitment pinned to the forecast mean.
    ExpectedWind,
    /// No wind participation at all.
    NoWind,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [Self::CvarRiskLimiting, Self::ExpectedWind, Self::NoWind];

    pub fn name(self) -> &'static str {
        match self {
            Self::CvarRiskLimiting => "cvar",
            Self::ExpectedWind => "expected_wind",
            Self::NoWind => "no_wind",
        }
    }
}

/// A policy plus the clearing settings it is solved with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub config: ClearingConfig,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, config: ClearingConfig) -> Self {
        Self { kind, config }
    }

    /// Clearing settings with the wind treatment this policy implies.
    pub fn clearing_config(&self, forecast: &SlotMatrix) -> ClearingConfig {
        let wind = match self.kind {
            PolicyKind::CvarRiskLimiting => WindTreatment::Stochastic,
            PolicyKind::ExpectedWind => WindTreatment::Fixed(forecast.clone()),
            PolicyKind::NoWind => {
                WindTreatment::Fixed(forecast.iter().map(|r| vec![0.0; r.len()]).collect())
            }
        };
        ClearingConfig {
            wind,
            ..self.config.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// `(cost, F(cost))` on an even grid from the smallest to the largest sample.
    pub cdf: Vec<(f64, f64)>,
}

impl CostDistribution {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        // Shifted by the first sample so a constant sequence has exactly zero spread.
        let c0 = samples[0];
        let dm = samples.iter().map(|c| c - c0).sum::<f64>() / n;
        let mean = c0 + dm;
        let var = samples.iter().map(|c| (c - c0 - dm).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let cdf = (0..CDF_POINTS)
            .map(|i| {
                let x = if i + 1 == CDF_POINTS {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (CDF_POINTS - 1) as f64
                };
                let count = sorted.partition_point(|&c| c <= x);
                (x, count as f64 / n)
            })
            .collect();
        Self {
            samples,
            mean,
            std: var.sqrt(),
            cdf,
        }
    }

    /// Smallest sample whose empirical CDF reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (q * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
        sorted[k.min(sorted.len()) - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub kind: PolicyKind,
    pub generation_cost: f64,
    pub utility: f64,
    pub total_wind: f64,
    pub distribution: CostDistribution,
}

/// Realized cost per evaluation sample: the fixed generation cost plus the
/// transaction cost of the commitment against that sample. End-user utility
/// is reported separately and not netted. `no_wind` has no transaction cost.
pub fn evaluate_dispatch(
    kind: PolicyKind,
    solution: &DispatchSolution,
    prices: &PriceSchedule,
    eval: &ScenarioSet,
) -> Result<CostDistribution, RiskError> {
    if eval.samples.is_empty() {
        return Err(RiskError::Empty);
    }
    let base = solution.generation_cost;
    let samples: Vec<f64> = match kind {
        PolicyKind::NoWind => vec![base; eval.samples.len()],
        _ => eval
            .samples
            .par_iter()
            .map(|w| transaction_cost(&solution.p_w, w, prices).map(|c| base + c))
            .collect::<Result<_, _>>()?,
    };
    Ok(CostDistribution::from_samples(samples))
}

/// Solves the policy's day-ahead dispatch on the training scenarios, then
/// evaluates it on `eval`.
pub fn evaluate_policy(
    policy: &PolicySpec,
    case: &NetworkCase,
    prices: &PriceSchedule,
    training: &ScenarioSet,
    eval: &ScenarioSet,
) -> Result<(DispatchSolution, PolicyEvaluation), ClearingError> {
    let config = policy.clearing_config(&training.forecast);
    let solution = match config.mode {
        Mode::Central => solve_centralized(case, prices, training, &config)?,
        Mode::Admm => crate::clearing::admm_solve(case, prices, training, &config)?,
    };
    let distribution = evaluate_dispatch(policy.kind, &solution, prices, eval)?;
    let summary = PolicyEvaluation {
        kind: policy.kind,
        generation_cost: solution.generation_cost,
        utility: solution.utility,
        total_wind: solution.total_wind(),
        distribution,
    };
    Ok((solution, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub generation_cost: f64,
    /// CVaR transaction term, not weighted by μ.
    pub cvar_term: f64,
    pub total_wind: f64,
    pub objective: f64,
    pub error: Option<String>,
}

/// One clearing per μ; a failed point keeps its row with `error` set.
pub fn mu_sweep(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: &ScenarioSet,
    mu_grid: &[f64],
    config: &ClearingConfig,
) -> Result<Vec<SweepRow>, ClearingError> {
    if mu_grid.is_empty() || mu_grid.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(ClearingError::Config("μ grid must be non-empty and positive".into()));
    }
    if mu_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(ClearingError::Config("μ grid must be ascending".into()));
    }
    Ok(mu_grid
        .iter()
        .map(|&mu| {
            let mut cfg = config.clone();
            cfg.risk.mu = mu;
            match crate::clearing::clear(case, prices, scenarios, &cfg) {
                Ok(s) => SweepRow {
                    mu,
                    generation_cost: s.generation_cost,
                    cvar_term: s.cvar_term,
                    total_wind: s.total_wind(),
                    objective: s.objective,
                    error: None,
                },
                Err(e) => SweepRow {
                    mu,
                    generation_cost: f64::NAN,
                    cvar_term: f64::NAN,
                    total_wind: f64::NAN,
                    objective: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
