//! Stochastic market clearing: the centralized program and its ADMM
//! decomposition between the ISO and the demand-response aggregators.
//!
//! Price orientation: `tau` is the multiplier of the nodal balance and is the
//! LMP ($/MWh, positive when serving load is costly). `lambda` is reported in
//! the same orientation, i.e. the negated multiplier of
//! `P_DRA − Σ p = 0`, so at an interior aggregator target it equals the LMP of
//! the aggregator's bus. The ADMM recursion itself runs on the raw multiplier.

mod admm;
mod assemble;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admm::{
    admm_solve, admm_solve_with, aggregator_subproblem, dual_update, iso_subproblem, primal_residual,
    AdmmMessage, AggregatorIterate, IsoIterate, IsoProblem, LocalAggregators, Transport,
};
pub use assemble::centralized_variable_count;

use crate::grid::{build_flow_matrices, GridError, NetworkCase};
use crate::qp::{solve_qp, QpError, QpSettings, QpStatus, QuadraticProgram, QpBuilder};
use crate::risk::{check_convexity_condition, PriceSchedule, RiskConfig, RiskError};
use crate::scenarios::{ScenarioError, ScenarioSet};
use crate::SlotMatrix;

use assemble::{add_appliances, add_iso_block, ApplianceVars, IsoLayout, RiskInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Central,
    Admm,
}

/// How the day-ahead wind commitment is determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindTreatment {
    /// Chosen by the optimizer under the CVaR penalty.
    #[default]
    Stochastic,
    /// Pinned to the given `[slot][farm]` schedule; no risk term is emitted.
    Fixed(SlotMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingConfig {
    pub risk: RiskConfig,
    pub rho: f64,
    pub eps_pri: f64,
    pub max_admm_iter: usize,
    pub mode: Mode,
    #[serde(default)]
    pub wind: WindTreatment,
    pub qp: QpSettings,
}

impl Default for ClearingConfig {
    fn default() -> Self {
        Self {
            risk: RiskConfig::default(),
            rho: 35.0,
            eps_pri: 1e-4,
            max_admm_iter: 500,
            mode: Mode::Central,
            wind: WindTreatment::Stochastic,
            qp: QpSettings::default(),
        }
    }
}

impl ClearingConfig {
    pub fn validate(&self) -> Result<(), ClearingError> {
        self.risk.validate()?;
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(ClearingError::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.eps_pri > 0.0) {
            return Err(ClearingError::Config(format!(
                "eps_pri must be positive, got {}",
                self.eps_pri
            )));
        }
        if self.max_admm_iter == 0 {
            return Err(ClearingError::Config("max_admm_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ClearingError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(
        "sell price exceeds purchase price at farm {farm}, slot {slot}; the imbalance cost is \
         then non-convex and the problem is not assembled"
    )]
    Convexity { farm: usize, slot: usize },
    #[error("{context}: solver returned {status:?}")]
    Solver { context: String, status: QpStatus },
    #[error("ADMM iteration {iteration}: {source}")]
    Subproblem {
        iteration: usize,
        #[source]
        source: Box<ClearingError>,
    },
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// ADMM stopped at the iteration cap; the reported point is the iterate
    /// with the smallest primal residual.
    MaxIter,
    /// A QP finished with KKT residuals above tolerance.
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSchedule {
    pub aggregator: usize,
    pub user: usize,
    pub appliance: usize,
    pub schedule: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub qp_solves: usize,
    pub max_kkt_residual: f64,
    pub n_variables: usize,
    pub n_epigraph: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub mode: Mode,
    pub status: SolveStatus,
    /// `[slot][generator]`, MW.
    pub p_g: SlotMatrix,
    /// `[slot][farm]`, MW.
    pub p_w: SlotMatrix,
    /// `[slot][aggregator]`, MW.
    pub p_dra: SlotMatrix,
    /// `[slot][bus]`, rad.
    pub theta: SlotMatrix,
    pub appliances: Vec<ApplianceSchedule>,
    /// VaR-level auxiliary; zero when wind is pinned.
    pub eta: f64,
    pub u: Vec<f64>,
    /// `[slot][aggregator]`, $/MWh, price orientation.
    pub lambda: SlotMatrix,
    /// `[slot][bus]`, $/MWh.
    pub tau: SlotMatrix,
    /// Generation cost − utility + μ·CVaR term.
    pub objective: f64,
    pub generation_cost: f64,
    pub utility: f64,
    /// `η + Σu/(N_s(1−β))`, not weighted by μ.
    pub cvar_term: f64,
    pub risk: RiskConfig,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub diagnostics: Diagnostics,
}

impl DispatchSolution {
    pub fn total_wind(&self) -> f64 {
        self.p_w.iter().flatten().sum()
    }
}

/// Assembled centralized program with the index maps needed to read it back.
pub struct CentralProgram {
    pub qp: QuadraticProgram,
    pub(crate) iso: IsoLayout,
    pub(crate) appliances: Vec<Vec<ApplianceVars>>,
    pub(crate) agg_rows: Vec<Vec<usize>>,
}

impl CentralProgram {
    pub fn n_epigraph(&self) -> usize {
        self.iso.n_epigraph
    }
}

pub(crate) fn check_inputs(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: Option<&ScenarioSet>,
) -> Result<(), ClearingError> {
    let v = crate::grid::validate_case(case);
    if !v.is_empty() {
        return Err(GridError::InvalidCase(v).into());
    }
    let pv = prices.validate(case.horizon, case.wind_farms.len());
    if let Some(first) = pv.first() {
        return Err(ClearingError::Dimension(format!("prices: {first}")));
    }
    if let Some(&(farm, slot)) = prices.convexity_violations().first() {
        return Err(ClearingError::Convexity { farm, slot });
    }
    debug_assert!(check_convexity_condition(prices));
    if let Some(s) = scenarios {
        s.check_against(case)?;
        s.validate()?;
        if s.n_samples() == 0 {
            return Err(RiskError::Empty.into());
        }
    }
    Ok(())
}

/// Builds the smooth SAA program: generation cost − utility + μ(η + Σu_s/(N_s(1−β)))
/// subject to network, generator, aggregator and appliance constraints plus one
/// epigraph row per scenario.
pub fn assemble_centralized(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: &ScenarioSet,
    risk: RiskConfig,
) -> Result<CentralProgram, ClearingError> {
    risk.validate()?;
    assemble_with(case, prices, Some(scenarios), risk, &WindTreatment::Stochastic)
}

fn assemble_with(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: Option<&ScenarioSet>,
    risk: RiskConfig,
    wind: &WindTreatment,
) -> Result<CentralProgram, ClearingError> {
    check_inputs(case, prices, scenarios)?;
    let flows = build_flow_matrices(case)?;
    let mut b = QpBuilder::new();
    let risk_inputs = match (wind, scenarios) {
        (WindTreatment::Stochastic, Some(s)) => Some(RiskInputs {
            prices,
            scenarios: s,
            risk,
        }),
        (WindTreatment::Stochastic, None) => {
            return Err(ClearingError::Config("stochastic wind needs a scenario set".into()))
        }
        (WindTreatment::Fixed(_), _) => None,
    };
    let iso = add_iso_block(&mut b, case, &flows, wind, risk_inputs)?;
    let mut appliances = Vec::new();
    let mut agg_rows = vec![Vec::new(); case.horizon];
    for (j, agg) in case.aggregators.iter().enumerate() {
        let (vars, per_slot) = add_appliances(&mut b, j, agg, case.horizon)?;
        for (t, terms) in per_slot.into_iter().enumerate() {
            let mut row = vec![(iso.p_dra[t][j], 1.0)];
            row.extend(terms.into_iter().map(|(k, a)| (k, -a)));
            agg_rows[t].push(b.eq(row, 0.0));
        }
        appliances.push(vars);
    }
    Ok(CentralProgram {
        qp: b.build(),
        iso,
        appliances,
        agg_rows,
    })
}

pub(crate) fn read(x: &[f64], idx: &[Vec<usize>]) -> SlotMatrix {
    idx.iter().map(|r| r.iter().map(|&k| x[k]).collect()).collect()
}

pub(crate) fn generation_cost(case: &NetworkCase, p_g: &SlotMatrix) -> f64 {
    p_g.iter()
        .map(|row| {
            row.iter()
                .zip(&case.generators)
                .map(|(&p, g)| g.cost(p))
                .sum::<f64>()
        })
        .sum()
}

pub(crate) fn cvar_term(eta: f64, u: &[f64], beta: f64) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    eta + u.iter().sum::<f64>() / (u.len() as f64 * (1.0 - beta))
}

pub fn solve_centralized(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: &ScenarioSet,
    config: &ClearingConfig,
) -> Result<DispatchSolution, ClearingError> {
    config.validate()?;
    let scen = match config.wind {
        WindTreatment::Stochastic => Some(scenarios),
        WindTreatment::Fixed(_) => None,
    };
    let prog = assemble_with(case, prices, scen, config.risk, &config.wind)?;
    let sol = solve_qp(&prog.qp, &config.qp)?;
    let status = match sol.status {
        QpStatus::Optimal => SolveStatus::Optimal,
        QpStatus::Inaccurate => {
            log::warn!("centralized solve inaccurate: KKT residual {:.3e}", sol.kkt.max());
            SolveStatus::Inaccurate
        }
        other => {
            return Err(ClearingError::Solver {
                context: "centralized clearing".into(),
                status: other,
            })
        }
    };
    let x = &sol.x;
    let lay = &prog.iso;
    let p_g = read(x, &lay.p_g);
    let eta = lay.eta.map_or(0.0, |k| x[k]);
    let u: Vec<f64> = lay.u.iter().map(|&k| x[k]).collect();
    let mut appliances = Vec::new();
    let mut utility = 0.0;
    for (j, agg) in case.aggregators.iter().enumerate() {
        let mut flat = prog.appliances[j].iter();
        for (r, user) in agg.users.iter().enumerate() {
            for (s, app) in user.appliances.iter().enumerate() {
                let vars = flat.next().expect("one var block per appliance");
                let schedule: Vec<f64> = vars.slots.iter().map(|k| k.map_or(0.0, |k| x[k])).collect();
                utility += app.utility.value(&schedule);
                appliances.push(ApplianceSchedule {
                    aggregator: j,
                    user: r,
                    appliance: s,
                    schedule,
                });
            }
        }
    }
    let generation_cost = generation_cost(case, &p_g);
    let cvar = cvar_term(eta, &u, config.risk.beta);
    let tau = read(&sol.duals_eq, &lay.nodal_rows);
    let lambda = prog
        .agg_rows
        .iter()
        .map(|r| r.iter().map(|&k| -sol.duals_eq[k]).collect())
        .collect();
    let objective = generation_cost - utility
        + if lay.eta.is_some() {
            config.risk.mu * cvar
        } else {
            0.0
        };
    Ok(DispatchSolution {
        mode: Mode::Central,
        status,
        p_w: read(x, &lay.p_w),
        p_dra: read(x, &lay.p_dra),
        theta: read(x, &lay.theta),
        p_g,
        appliances,
        eta,
        u,
        lambda,
        tau,
        objective,
        generation_cost,
        utility,
        cvar_term: cvar,
        risk: config.risk,
        iterations: sol.iterations as usize,
        trace: Vec::new(),
        diagnostics: Diagnostics {
            qp_solves: 1,
            max_kkt_residual: sol.kkt.max(),
            n_variables: prog.qp.n(),
            n_epigraph: lay.n_epigraph,
        },
    })
}

/// Dispatches to the centralized or ADMM solver according to `config.mode`.
pub fn clear(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: &ScenarioSet,
    config: &ClearingConfig,
) -> Result<DispatchSolution, ClearingError> {
    match config.mode {
        Mode::Central => solve_centralized(case, prices, scenarios, config),
        Mode::Admm => admm_solve(case, prices, scenarios, config),
    }
}

#[cfg(test)]
mod tests;
