//! LMP extraction and two-settlement payments.
//!
//! Sign conventions: `tau` is the multiplier of the nodal balance written as
//! demand minus supply, so it is the cost of serving one more MW at that bus
//! and slot. Generator and wind amounts are revenues, aggregator amounts are
//! payments; all are in $.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clearing::DispatchSolution;
use crate::grid::NetworkCase;
use crate::risk::PriceSchedule;
use crate::SlotMatrix;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("solution carries no nodal duals")]
    MissingDuals,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub fn extract_lmps(solution: &DispatchSolution) -> Result<SlotMatrix, PricingError> {
    let tau = &solution.tau;
    if tau.is_empty() || tau.iter().any(|r| r.is_empty() || r.iter().any(|v| !v.is_finite())) {
        return Err(PricingError::MissingDuals);
    }
    Ok(tau.clone())
}

/// Real-time data. Any field left out falls back to the day-ahead value:
/// prices to τ̄, quantities to the DA schedule, realized wind to the DA
/// commitment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RealTimeInputs {
    #[serde(default)]
    pub prices: Option<SlotMatrix>,
    #[serde(default)]
    pub p_g: Option<SlotMatrix>,
    #[serde(default)]
    pub p_dra: Option<SlotMatrix>,
    #[serde(default)]
    pub realized_wind: Option<SlotMatrix>,
}

/// Everything the payments depend on, with defaults already resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementInputs {
    /// 1-based bus of each generator, aggregator and wind farm.
    pub generator_bus: Vec<usize>,
    pub aggregator_bus: Vec<usize>,
    pub wind_bus: Vec<usize>,
    pub da_p_g: SlotMatrix,
    pub da_p_dra: SlotMatrix,
    pub da_p_w: SlotMatrix,
    pub da_prices: SlotMatrix,
    pub rt_prices: SlotMatrix,
    pub rt_p_g: SlotMatrix,
    pub rt_p_dra: SlotMatrix,
    pub realized_wind: SlotMatrix,
    pub buy: SlotMatrix,
    pub sell: SlotMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payments {
    pub generators: Vec<f64>,
    pub aggregators: Vec<f64>,
    pub wind_farms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub inputs: SettlementInputs,
    pub payments: Payments,
}

impl SettlementReport {
    /// One row per participant: `kind,index,bus,amount`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,bus,amount\n");
        let groups = [
            ("generator", &self.inputs.generator_bus, &self.payments.generators),
            ("aggregator", &self.inputs.aggregator_bus, &self.payments.aggregators),
            ("wind_farm", &self.inputs.wind_bus, &self.payments.wind_farms),
        ];
        for (kind, buses, amounts) in groups {
            for (i, (bus, v)) in buses.iter().zip(amounts.iter()).enumerate() {
                let _ = writeln!(out, "{kind},{},{bus},{v}", i + 1);
            }
        }
        out
    }
}

fn check(m: &SlotMatrix, rows: usize, cols: usize, what: &str) -> Result<(), PricingError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(PricingError::Dimension(format!("{what} must be {rows}×{cols}")));
    }
    Ok(())
}

impl SettlementInputs {
    pub fn validate(&self) -> Result<(), PricingError> {
        let t = self.da_prices.len();
        let nb = self.da_prices.first().map_or(0, Vec::len);
        let (ng, na, nw) = (self.generator_bus.len(), self.aggregator_bus.len(), self.wind_bus.len());
        check(&self.da_prices, t, nb, "DA prices")?;
        check(&self.rt_prices, t, nb, "RT prices")?;
        check(&self.da_p_g, t, ng, "DA generation")?;
        check(&self.rt_p_g, t, ng, "RT generation")?;
        check(&self.da_p_dra, t, na, "DA aggregator schedule")?;
        check(&self.rt_p_dra, t, na, "RT aggregator schedule")?;
        check(&self.da_p_w, t, nw, "DA wind")?;
        check(&self.realized_wind, t, nw, "realized wind")?;
        check(&self.buy, t, nw, "purchase prices")?;
        check(&self.sell, t, nw, "sell prices")?;
        let buses = self
            .generator_bus
            .iter()
            .chain(&self.aggregator_bus)
            .chain(&self.wind_bus);
        if let Some(b) = buses.into_iter().find(|&&b| b == 0 || b > nb) {
            return Err(PricingError::Dimension(format!("bus {b} outside 1..={nb}")));
        }
        Ok(())
    }
}

/// Π_G = Σ τ̄P̄ + τ̃(P̃ − P̄); Π_DRA likewise as a payment;
/// Π_W = Σ τ̄p̄ + s[w − p̄]⁺ − b[p̄ − w]⁺.
pub fn payments(inputs: &SettlementInputs) -> Result<Payments, PricingError> {
    inputs.validate()?;
    let two_settle = |buses: &[usize], da: &SlotMatrix, rt: &SlotMatrix| -> Vec<f64> {
        buses
            .iter()
            .enumerate()
            .map(|(i, &bus)| {
                (0..da.len())
                    .map(|t| {
                        let (dp, rp) = (inputs.da_prices[t][bus - 1], inputs.rt_prices[t][bus - 1]);
                        dp * da[t][i] + rp * (rt[t][i] - da[t][i])
                    })
                    .sum()
            })
            .collect()
    };
    let wind = inputs
        .wind_bus
        .iter()
        .enumerate()
        .map(|(m, &bus)| {
            (0..inputs.da_p_w.len())
                .map(|t| {
                    let (p, w) = (inputs.da_p_w[t][m], inputs.realized_wind[t][m]);
                    inputs.da_prices[t][bus - 1] * p + inputs.sell[t][m] * (w - p).max(0.0)
                        - inputs.buy[t][m] * (p - w).max(0.0)
                })
                .sum()
        })
        .collect();
    Ok(Payments {
        generators: two_settle(&inputs.generator_bus, &inputs.da_p_g, &inputs.rt_p_g),
        aggregators: two_settle(&inputs.aggregator_bus, &inputs.da_p_dra, &inputs.rt_p_dra),
        wind_farms: wind,
    })
}

pub fn settle(
    case: &NetworkCase,
    solution: &DispatchSolution,
    rt: &RealTimeInputs,
    prices: &PriceSchedule,
) -> Result<SettlementReport, PricingError> {
    let tau = extract_lmps(solution)?;
    let inputs = SettlementInputs {
        generator_bus: case.generators.iter().map(|g| g.bus).collect(),
        aggregator_bus: case.aggregators.iter().map(|a| a.bus).collect(),
        wind_bus: case.wind_farms.iter().map(|w| w.bus).collect(),
        da_p_g: solution.p_g.clone(),
        da_p_dra: solution.p_dra.clone(),
        da_p_w: solution.p_w.clone(),
        rt_prices: rt.prices.clone().unwrap_or_else(|| tau.clone()),
        da_prices: tau,
        rt_p_g: rt.p_g.clone().unwrap_or_else(|| solution.p_g.clone()),
        rt_p_dra: rt.p_dra.clone().unwrap_or_else(|| solution.p_dra.clone()),
        realized_wind: rt.realized_wind.clone().unwrap_or_else(|| solution.p_w.clone()),
        buy: prices.buy.clone(),
        sell: prices.sell.clone(),
    };
    let payments = payments(&inputs)?;
    Ok(SettlementReport { inputs, payments })
}
