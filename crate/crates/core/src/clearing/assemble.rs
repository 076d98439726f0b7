//! QP assembly shared by the centralized problem and the ISO subproblem.

use crate::grid::{appliance_constraints, Aggregator, FlowMatrices, NetworkCase};
use crate::qp::QpBuilder;
use crate::risk::{PriceSchedule, RiskConfig};
use crate::scenarios::ScenarioSet;
use crate::SlotMatrix;

use super::{ClearingError, WindTreatment};

/// Risk inputs for the CVaR block; absent when wind is pinned.
#[derive(Clone, Copy)]
pub(crate) struct RiskInputs<'a> {
    pub prices: &'a PriceSchedule,
    pub scenarios: &'a ScenarioSet,
    pub risk: RiskConfig,
}

/// Variable and row indices of the ISO-side block.
#[derive(Debug, Clone, Default)]
pub(crate) struct IsoLayout {
    pub p_g: Vec<Vec<usize>>,
    pub p_w: Vec<Vec<usize>>,
    pub p_dra: Vec<Vec<usize>>,
    pub theta: Vec<Vec<usize>>,
    pub eta: Option<usize>,
    pub u: Vec<usize>,
    pub n_epigraph: usize,
    /// Equality rows of the nodal balance, `[slot][bus]`.
    pub nodal_rows: Vec<Vec<usize>>,
}

/// Per-appliance variable indices, `None` outside the charging window.
#[derive(Debug, Clone)]
pub(crate) struct ApplianceVars {
    pub slots: Vec<Option<usize>>,
}

/// Emits generation, wind, aggregator-target, angle and risk variables with
/// constraints for nodal balance, generator limits and ramps, reference
/// angle, line limits, and the scenario epigraph rows. Reads only the public
/// fields of each aggregator (bus and `p_dra_max`).
pub(crate) fn add_iso_block(
    b: &mut QpBuilder,
    case: &NetworkCase,
    flows: &FlowMatrices,
    wind: &WindTreatment,
    risk: Option<RiskInputs<'_>>,
) -> Result<IsoLayout, ClearingError> {
    let horizon = case.horizon;
    let nb = case.buses.len();
    let mva = case.mva_base;
    let mut lay = IsoLayout::default();

    for t in 0..horizon {
        lay.p_g.push(
            case.generators
                .iter()
                .enumerate()
                .map(|(i, g)| b.var(format!("p_g[{t},{i}]"), g.p_min, g.p_max))
                .collect(),
        );
    }
    for t in 0..horizon {
        let row = case
            .wind_farms
            .iter()
            .enumerate()
            .map(|(m, w)| match wind {
                WindTreatment::Stochastic => b.var(format!("p_w[{t},{m}]"), 0.0, w.p_commit_max[t]),
                WindTreatment::Fixed(_) => b.free_var(format!("p_w[{t},{m}]")),
            })
            .collect();
        lay.p_w.push(row);
    }
    if let WindTreatment::Fixed(values) = wind {
        check_shape(values, horizon, case.wind_farms.len(), "pinned wind schedule")?;
        for t in 0..horizon {
            for m in 0..case.wind_farms.len() {
                b.eq(vec![(lay.p_w[t][m], 1.0)], values[t][m]);
            }
        }
    }
    for t in 0..horizon {
        lay.p_dra.push(
            case.aggregators
                .iter()
                .enumerate()
                .map(|(j, a)| b.var(format!("p_dra[{t},{j}]"), 0.0, a.p_dra_max))
                .collect(),
        );
    }
    for t in 0..horizon {
        lay.theta
            .push((0..nb).map(|n| b.free_var(format!("theta[{t},{}]", n + 1))).collect());
    }

    for t in 0..horizon {
        let mut rows = Vec::with_capacity(nb);
        for n in 0..nb {
            let mut terms = Vec::new();
            for (i, g) in case.generators.iter().enumerate() {
                if g.bus == n + 1 {
                    terms.push((lay.p_g[t][i], -1.0));
                }
            }
            for (m, w) in case.wind_farms.iter().enumerate() {
                if w.bus == n + 1 {
                    terms.push((lay.p_w[t][m], -1.0));
                }
            }
            for (j, a) in case.aggregators.iter().enumerate() {
                if a.bus == n + 1 {
                    terms.push((lay.p_dra[t][j], 1.0));
                }
            }
            for k in 0..nb {
                let v = flows.b_n[(n, k)];
                if v != 0.0 {
                    terms.push((lay.theta[t][k], mva * v));
                }
            }
            // Written as demand minus supply so the multiplier is the LMP itself.
            rows.push(b.eq(terms, -case.buses[n].base_load[t]));
        }
        lay.nodal_rows.push(rows);
        b.eq(vec![(lay.theta[t][0], 1.0)], 0.0);
    }

    for (i, g) in case.generators.iter().enumerate() {
        for t in 0..horizon {
            b.square(lay.p_g[t][i], g.cost_a);
            b.linear(lay.p_g[t][i], g.cost_b);
            let cur = lay.p_g[t][i];
            if t == 0 {
                let p0 = g.initial_output();
                b.le(vec![(cur, 1.0)], g.ramp_up + p0);
                b.le(vec![(cur, -1.0)], g.ramp_down - p0);
            } else {
                let prev = lay.p_g[t - 1][i];
                b.le(vec![(cur, 1.0), (prev, -1.0)], g.ramp_up);
                b.le(vec![(prev, 1.0), (cur, -1.0)], g.ramp_down);
            }
        }
    }

    for (l, line) in case.lines.iter().enumerate() {
        if line.flow_min.is_none() && line.flow_max.is_none() {
            continue;
        }
        for t in 0..horizon {
            let terms: Vec<(usize, f64)> = (0..nb)
                .filter(|&k| flows.b_f[(l, k)] != 0.0)
                .map(|k| (lay.theta[t][k], mva * flows.b_f[(l, k)]))
                .collect();
            if let Some(hi) = line.flow_max {
                b.le(terms.clone(), hi);
            }
            if let Some(lo) = line.flow_min {
                b.ge(terms, lo);
            }
        }
    }

    if let Some(r) = risk {
        add_risk_block(b, case, &mut lay, r)?;
    }
    Ok(lay)
}

fn add_risk_block(
    b: &mut QpBuilder,
    case: &NetworkCase,
    lay: &mut IsoLayout,
    r: RiskInputs<'_>,
) -> Result<(), ClearingError> {
    let horizon = case.horizon;
    let nw = case.wind_farms.len();
    let ns = r.scenarios.n_samples();
    let eta = b.free_var("eta");
    lay.eta = Some(eta);
    b.linear(eta, r.risk.mu);
    let weight = r.risk.mu / (ns as f64 * (1.0 - r.risk.beta));
    for s in 0..ns {
        let u = b.var(format!("u[{s}]"), 0.0, f64::INFINITY);
        b.linear(u, weight);
        lay.u.push(u);
    }
    for (s, w) in r.scenarios.samples.iter().enumerate() {
        let mut terms = Vec::with_capacity(2 * horizon * nw + 2);
        let mut rhs = 0.0;
        for t in 0..horizon {
            for m in 0..nw {
                let pw = lay.p_w[t][m];
                let spread = r.prices.half_spread(t, m);
                let mid = r.prices.midpoint(t, m);
                if spread != 0.0 {
                    let e = b.free_var(format!("e[{s},{t},{m}]"));
                    lay.n_epigraph += 1;
                    b.le(vec![(pw, 1.0), (e, -1.0)], w[t][m]);
                    b.le(vec![(pw, -1.0), (e, -1.0)], -w[t][m]);
                    terms.push((e, spread));
                }
                if mid != 0.0 {
                    terms.push((pw, mid));
                }
                rhs += mid * w[t][m];
            }
        }
        terms.push((lay.u[s], -1.0));
        terms.push((eta, -1.0));
        b.le(terms, rhs);
    }
    Ok(())
}

/// Adds one aggregator's appliance variables with energy rows and utility
/// terms; returns the variables and, per slot, the terms of their sum.
pub(crate) fn add_appliances(
    b: &mut QpBuilder,
    j: usize,
    agg: &Aggregator,
    horizon: usize,
) -> Result<(Vec<ApplianceVars>, Vec<Vec<(usize, f64)>>), ClearingError> {
    let mut vars = Vec::new();
    let mut per_slot: Vec<Vec<(usize, f64)>> = vec![Vec::new(); horizon];
    for (r, user) in agg.users.iter().enumerate() {
        for (s, app) in user.appliances.iter().enumerate() {
            let block = appliance_constraints(app, horizon)?;
            let mut slots = vec![None; horizon];
            let mut energy = Vec::new();
            for t in block.window.clone() {
                let k = b.var(format!("p_app[{j},{r},{s},{t}]"), block.lower[t], block.upper[t]);
                // Objective carries −U = ½γp² − δp.
                b.square(k, 0.5 * app.utility.gamma);
                b.linear(k, -app.utility.delta);
                slots[t] = Some(k);
                energy.push((k, 1.0));
                per_slot[t].push((k, 1.0));
            }
            b.eq(energy, block.energy);
            vars.push(ApplianceVars { slots });
        }
    }
    Ok((vars, per_slot))
}

pub(crate) fn check_shape(m: &SlotMatrix, rows: usize, cols: usize, what: &str) -> Result<(), ClearingError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(ClearingError::Dimension(format!("{what} must be {rows}×{cols}")));
    }
    Ok(())
}

/// Closed-form variable count of the centralized program.
pub fn centralized_variable_count(case: &NetworkCase, n_samples: usize, n_epigraph_cells: usize) -> usize {
    let t = case.horizon;
    let window_slots: usize = case
        .aggregators
        .iter()
        .flat_map(|a| a.appliances())
        .map(|a| a.span())
        .sum();
    t * (case.generators.len() + case.wind_farms.len() + case.aggregators.len() + case.buses.len())
        + window_slots
        + 1
        + n_samples
        + n_samples * n_epigraph_cells
}
