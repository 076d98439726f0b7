//! Wind imbalance cost, CVaR, and its sample-average estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Violation;
use crate::scenarios::ScenarioSet;
use crate::SlotMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum RiskError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty sample set")]
    Empty,
    #[error("beta must lie in (0, 1), got {0}")]
    Beta(f64),
    #[error("mu must be positive, got {0}")]
    Mu(f64),
}

/// Real-time purchase (`buy`, b) and sell (`sell`, s) prices per slot and wind farm, $/MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub buy: SlotMatrix,
    pub sell: SlotMatrix,
}

impl PriceSchedule {
    pub fn horizon(&self) -> usize {
        self.buy.len()
    }

    pub fn n_farms(&self) -> usize {
        self.buy.first().map_or(0, Vec::len)
    }

    /// ϖ = (b − s)/2, the weight on |p_W − w|.
    pub fn half_spread(&self, t: usize, m: usize) -> f64 {
        0.5 * (self.buy[t][m] - self.sell[t][m])
    }

    /// ϑ = (b + s)/2, the weight on (p_W − w).
    pub fn midpoint(&self, t: usize, m: usize) -> f64 {
        0.5 * (self.buy[t][m] + self.sell[t][m])
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let s = |m: &SlotMatrix| {
            m.iter()
                .map(|r| r.iter().map(|v| v * alpha).collect())
                .collect()
        };
        Self {
            buy: s(&self.buy),
            sell: s(&self.sell),
        }
    }

    /// Every `(farm, slot)` where the sell price exceeds the purchase price.
    pub fn convexity_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, (b, s)) in self.buy.iter().zip(&self.sell).enumerate() {
            for (m, (bv, sv)) in b.iter().zip(s).enumerate() {
                if sv > bv {
                    out.push((m, t));
                }
            }
        }
        out
    }

    pub fn validate(&self, horizon: usize, n_farms: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, mat) in [("buy", &self.buy), ("sell", &self.sell)] {
            if mat.len() != horizon {
                out.push(Violation {
                    path: name.into(),
                    message: format!("expected {horizon} slots, got {}", mat.len()),
                });
                continue;
            }
            for (t, row) in mat.iter().enumerate() {
                if row.len() != n_farms {
                    out.push(Violation {
                        path: format!("{name}[{t}]"),
                        message: format!("expected {n_farms} farms, got {}", row.len()),
                    });
                }
                for (m, &v) in row.iter().enumerate() {
                    if !(v >= 0.0 && v.is_finite()) {
                        out.push(Violation {
                            path: format!("{name}[{t}][{m}]"),
                            message: format!("price must be non-negative, got {v}"),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub beta: f64,
    pub mu: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self { beta: 0.95, mu: 1.0 }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(RiskError::Beta(self.beta));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(RiskError::Mu(self.mu));
        }
        Ok(())
    }
}

fn check_dims(p_w: &SlotMatrix, w: &SlotMatrix, prices: &PriceSchedule) -> Result<(), RiskError> {
    let t = prices.horizon();
    let ok = p_w.len() == t
        && w.len() == t
        && prices.sell.len() == t
        && (0..t).all(|k| {
            let m = prices.buy[k].len();
            p_w[k].len() == m && w[k].len() == m && prices.sell[k].len() == m
        });
    if ok {
        Ok(())
    } else {
        Err(RiskError::Dimension(
            "committed wind, realized wind, and prices must share T×N_w".into(),
        ))
    }
}

/// Σ_t Σ_m ϖ|p_W − w| + ϑ(p_W − w).
pub fn transaction_cost(
    p_w: &SlotMatrix,
    w: &SlotMatrix,
    prices: &PriceSchedule,
) -> Result<f64, RiskError> {
    check_dims(p_w, w, prices)?;
    Ok(transaction_cost_unchecked(p_w, w, prices))
}

pub(crate) fn transaction_cost_unchecked(p_w: &SlotMatrix, w: &SlotMatrix, prices: &PriceSchedule) -> f64 {
    let mut total = 0.0;
    for t in 0..prices.horizon() {
        for m in 0..prices.buy[t].len() {
            let d = p_w[t][m] - w[t][m];
            total += prices.half_spread(t, m) * d.abs() + prices.midpoint(t, m) * d;
        }
    }
    total
}

/// Σ_t Σ_m b[p_W − w]⁺ − s[w − p_W]⁺, the same quantity written with hinges.
pub fn transaction_cost_hinge(
    p_w: &SlotMatrix,
    w: &SlotMatrix,
    prices: &PriceSchedule,
) -> Result<f64, RiskError> {
    check_dims(p_w, w, prices)?;
    let mut total = 0.0;
    for t in 0..prices.horizon() {
        for m in 0..prices.buy[t].len() {
            let d = p_w[t][m] - w[t][m];
            total += prices.buy[t][m] * d.max(0.0) - prices.sell[t][m] * (-d).max(0.0);
        }
    }
    Ok(total)
}

/// η + Σ_s [c_s − η]⁺ / (N(1−β)) over scenario losses `costs`.
pub fn cvar_objective(costs: &[f64], eta: f64, beta: f64) -> f64 {
    let n = costs.len() as f64;
    let tail: f64 = costs.iter().map(|c| (c - eta).max(0.0)).sum();
    eta + tail / (n * (1.0 - beta))
}

/// Sample-average CVaR surrogate of the transaction cost at commitment `p_w`.
pub fn saa_cvar_value(
    p_w: &SlotMatrix,
    eta: f64,
    scenarios: &ScenarioSet,
    prices: &PriceSchedule,
    beta: f64,
) -> Result<f64, RiskError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(RiskError::Beta(beta));
    }
    if scenarios.samples.is_empty() {
        return Err(RiskError::Empty);
    }
    let costs = scenario_costs(p_w, scenarios, prices)?;
    Ok(cvar_objective(&costs, eta, beta))
}

/// Transaction cost of `p_w` under each scenario, in scenario order.
pub fn scenario_costs(
    p_w: &SlotMatrix,
    scenarios: &ScenarioSet,
    prices: &PriceSchedule,
) -> Result<Vec<f64>, RiskError> {
    scenarios
        .samples
        .iter()
        .map(|w| transaction_cost(p_w, w, prices))
        .collect()
}

/// Empirical (VaR, CVaR) at level `beta`.
///
/// VaR is the smallest sample whose empirical CDF reaches `beta`; CVaR is the
/// CVaR objective evaluated there, which is its minimum over η.
pub fn empirical_var_cvar(samples: &[f64], beta: f64) -> Result<(f64, f64), RiskError> {
    if samples.is_empty() {
        return Err(RiskError::Empty);
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(RiskError::Beta(beta));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Smallest k (1-based) with k/n ≥ β; the slack absorbs β·n landing a hair above an integer.
    let k = ((beta * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let var = sorted[k.min(n) - 1];
    Ok((var, cvar_objective(&sorted, var, beta)))
}

/// True iff `s ≤ b` in every slot and farm.
pub fn check_convexity_condition(prices: &PriceSchedule) -> bool {
    prices.convexity_violations().is_empty()
}
