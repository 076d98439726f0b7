//! Network instance, validation, and DC power-flow matrices.
//!
//! Buses are numbered `1..=N_b` and bus 1 is the angle reference. Slots are
//! numbered `0..horizon`; slot `t` covers the hour ending at `t + 1`.
//! Powers are in MW, energies in MWh, reactances in p.u. on `mva_base`.

use std::fmt;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Fixed demand per slot, MW.
    pub base_load: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub reactance_pu: f64,
    /// Flow limits in MW, positive in the from→to direction.
    #[serde(default)]
    pub flow_min: Option<f64>,
    #[serde(default)]
    pub flow_max: Option<f64>,
}

/// Conventional unit with cost `cost_a·p² + cost_b·p` per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub cost_a: f64,
    pub cost_b: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Output in the slot before the horizon; `p_min` when absent.
    #[serde(default)]
    pub p_initial: Option<f64>,
}

impl Generator {
    pub fn initial_output(&self) -> f64 {
        self.p_initial.unwrap_or(self.p_min)
    }

    pub fn cost(&self, p: f64) -> f64 {
        self.cost_a * p * p + self.cost_b * p
    }

    pub fn marginal_cost(&self, p: f64) -> f64 {
        2.0 * self.cost_a * p + self.cost_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFarm {
    pub bus: usize,
    /// Upper bound on the day-ahead commitment per slot, MW.
    pub p_commit_max: Vec<f64>,
}

/// Concave per-slot utility `−½·gamma·p² + delta·p`, summed over the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
}

impl Utility {
    pub fn is_zero(&self) -> bool {
        self.gamma == 0.0 && self.delta == 0.0
    }

    pub fn value(&self, schedule: &[f64]) -> f64 {
        schedule
            .iter()
            .map(|p| -0.5 * self.gamma * p * p + self.delta * p)
            .sum()
    }
}

/// A deferrable load that must draw `energy_total` inside `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub id: usize,
    pub energy_total: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub t_start: usize,
    pub t_end: usize,
    #[serde(default)]
    pub utility: Utility,
}

impl Appliance {
    pub fn window(&self) -> RangeInclusive<usize> {
        self.t_start..=self.t_end
    }

    pub fn span(&self) -> usize {
        self.t_end + 1 - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub appliances: Vec<Appliance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregator {
    pub bus: usize,
    pub p_dra_max: f64,
    #[serde(default)]
    pub users: Vec<User>,
}

impl Aggregator {
    pub fn appliances(&self) -> impl Iterator<Item = &Appliance> {
        self.users.iter().flat_map(|u| u.appliances.iter())
    }

    pub fn appliance_count(&self) -> usize {
        self.users.iter().map(|u| u.appliances.len()).sum()
    }

    /// Total energy the aggregator must deliver over the horizon, MWh.
    pub fn energy_total(&self) -> f64 {
        self.appliances().map(|a| a.energy_total).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub horizon: usize,
    pub mva_base: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub wind_farms: Vec<WindFarm>,
    pub aggregators: Vec<Aggregator>,
}

impl NetworkCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Base load of every bus in slot `t`, indexed by `bus id − 1`.
    pub fn base_load_at(&self, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.buses.len()];
        for b in &self.buses {
            out[b.id - 1] = b.base_load[t];
        }
        out
    }

    pub fn total_base_load(&self, t: usize) -> f64 {
        self.buses.iter().map(|b| b.base_load[t]).sum()
    }

    pub fn appliance_count(&self) -> usize {
        self.aggregators.iter().map(Aggregator::appliance_count).sum()
    }
}

/// One violated invariant, with a path into the case document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("line {index} has non-positive reactance {reactance}")]
    NonPositiveReactance { index: usize, reactance: f64 },
    #[error("{path}: infeasible appliance window: energy {energy} outside [{lo}, {hi}]")]
    InfeasibleAppliance {
        path: String,
        energy: f64,
        lo: f64,
        hi: f64,
    },
    #[error("appliance window {t_start}..={t_end} does not fit horizon {horizon}")]
    WindowOutOfHorizon {
        t_start: usize,
        t_end: usize,
        horizon: usize,
    },
    #[error("case is invalid ({} violations), first: {}", .0.len(), .0[0])]
    InvalidCase(Vec<Violation>),
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, path: impl FnOnce() -> String, msg: impl FnOnce() -> String) {
        if !ok {
            self.out.push(Violation {
                path: path(),
                message: msg(),
            });
        }
    }
}

/// Every violated invariant of `case`; an empty list means the case is valid.
pub fn validate_case(case: &NetworkCase) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };
    let nb = case.buses.len();
    let horizon = case.horizon;
    let bus_ok = |id: usize| id >= 1 && id <= nb;

    c.check(horizon >= 1, || "horizon".into(), || "must be at least 1".into());
    c.check(
        case.mva_base > 0.0,
        || "mva_base".into(),
        || format!("must be positive, got {}", case.mva_base),
    );
    c.check(nb >= 1, || "buses".into(), || "at least one bus required".into());
    c.check(
        !case.generators.is_empty(),
        || "generators".into(),
        || "at least one generator required".into(),
    );

    for (k, b) in case.buses.iter().enumerate() {
        c.check(
            b.id == k + 1,
            || format!("buses[{k}].id"),
            || format!("ids must be contiguous 1..{nb}, got {}", b.id),
        );
        c.check(
            b.base_load.len() == horizon,
            || format!("buses[{k}].base_load"),
            || format!("expected {horizon} entries, got {}", b.base_load.len()),
        );
        for (t, &v) in b.base_load.iter().enumerate() {
            c.check(
                v >= 0.0 && v.is_finite(),
                || format!("buses[{k}].base_load[{t}]"),
                || format!("must be non-negative, got {v}"),
            );
        }
    }

    for (k, l) in case.lines.iter().enumerate() {
        c.check(
            bus_ok(l.from_bus),
            || format!("lines[{k}].from_bus"),
            || format!("unknown bus {}", l.from_bus),
        );
        c.check(
            bus_ok(l.to_bus),
            || format!("lines[{k}].to_bus"),
            || format!("unknown bus {}", l.to_bus),
        );
        c.check(
            l.from_bus != l.to_bus,
            || format!("lines[{k}]"),
            || "from_bus and to_bus must differ".into(),
        );
        c.check(
            l.reactance_pu > 0.0,
            || format!("lines[{k}].reactance_pu"),
            || format!("must be positive, got {}", l.reactance_pu),
        );
        if let (Some(lo), Some(hi)) = (l.flow_min, l.flow_max) {
            c.check(
                lo <= hi,
                || format!("lines[{k}]"),
                || format!("flow_min {lo} exceeds flow_max {hi}"),
            );
        }
    }
    if nb >= 1 && case.lines.iter().all(|l| bus_ok(l.from_bus) && bus_ok(l.to_bus)) {
        c.check(
            is_connected(nb, &case.lines),
            || "lines".into(),
            || "network is not connected".into(),
        );
    }

    for (k, g) in case.generators.iter().enumerate() {
        let p = || format!("generators[{k}]");
        c.check(bus_ok(g.bus), || format!("generators[{k}].bus"), || format!("unknown bus {}", g.bus));
        c.check(g.cost_a >= 0.0, || format!("generators[{k}].cost_a"), || "must be non-negative".into());
        c.check(g.p_min >= 0.0, || format!("generators[{k}].p_min"), || "must be non-negative".into());
        c.check(g.p_min <= g.p_max, p, || format!("p_min {} exceeds p_max {}", g.p_min, g.p_max));
        c.check(
            g.ramp_up >= 0.0 && g.ramp_down >= 0.0,
            || format!("generators[{k}]"),
            || "ramp limits must be non-negative".into(),
        );
        let p0 = g.initial_output();
        c.check(
            g.p_min <= p0 && p0 <= g.p_max,
            || format!("generators[{k}].p_initial"),
            || format!("{p0} outside [{}, {}]", g.p_min, g.p_max),
        );
    }

    for (k, w) in case.wind_farms.iter().enumerate() {
        c.check(bus_ok(w.bus), || format!("wind_farms[{k}].bus"), || format!("unknown bus {}", w.bus));
        c.check(
            w.p_commit_max.len() == horizon,
            || format!("wind_farms[{k}].p_commit_max"),
            || format!("expected {horizon} entries, got {}", w.p_commit_max.len()),
        );
        for (t, &v) in w.p_commit_max.iter().enumerate() {
            c.check(
                v >= 0.0,
                || format!("wind_farms[{k}].p_commit_max[{t}]"),
                || format!("must be non-negative, got {v}"),
            );
        }
    }

    for (j, a) in case.aggregators.iter().enumerate() {
        c.check(bus_ok(a.bus), || format!("aggregators[{j}].bus"), || format!("unknown bus {}", a.bus));
        c.check(
            a.p_dra_max >= 0.0,
            || format!("aggregators[{j}].p_dra_max"),
            || "must be non-negative".into(),
        );
        for (r, u) in a.users.iter().enumerate() {
            for (s, app) in u.appliances.iter().enumerate() {
                let path = format!("aggregators[{j}].users[{r}].appliances[{s}]");
                check_appliance(&mut c, &path, app, horizon);
            }
        }
    }
    c.out
}

fn check_appliance(c: &mut Checker, path: &str, a: &Appliance, horizon: usize) {
    c.check(a.p_min >= 0.0, || format!("{path}.p_min"), || "must be non-negative".into());
    c.check(
        a.p_min <= a.p_max,
        || path.to_string(),
        || format!("p_min {} exceeds p_max {}", a.p_min, a.p_max),
    );
    c.check(
        a.utility.gamma >= 0.0,
        || format!("{path}.utility.gamma"),
        || "must be non-negative for a concave utility".into(),
    );
    if a.t_start > a.t_end {
        c.check(false, || path.to_string(), || format!("t_start {} after t_end {}", a.t_start, a.t_end));
        return;
    }
    c.check(
        a.t_end < horizon,
        || format!("{path}.t_end"),
        || format!("{} outside horizon {horizon}", a.t_end),
    );
    let span = a.span() as f64;
    let (lo, hi) = (span * a.p_min, span * a.p_max);
    let slack = 1e-12 * (1.0 + a.energy_total.abs());
    c.check(
        a.energy_total >= lo - slack && a.energy_total <= hi + slack,
        || path.to_string(),
        || format!("energy_total {} outside feasible range [{lo}, {hi}]", a.energy_total),
    );
}

fn is_connected(nb: usize, lines: &[Line]) -> bool {
    let mut adj = vec![Vec::new(); nb];
    for l in lines {
        adj[l.from_bus - 1].push(l.to_bus - 1);
        adj[l.to_bus - 1].push(l.from_bus - 1);
    }
    let mut seen = vec![false; nb];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// DC power-flow and device-placement matrices.
///
/// Susceptances follow `b_ℓ = −1/x_ℓ`, so `b_n = −A_nᵀ B_s A_n` is the
/// `1/x`-weighted graph Laplacian and `B_f θ` gives `(θ_from − θ_to)/x` in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrices {
    /// Branch-node incidence, `N_l × N_b`.
    pub a_n: DMatrix<f64>,
    /// Branch susceptances (diagonal of `B_s`), p.u.
    pub b_s: DVector<f64>,
    /// Nodal susceptance matrix, `N_b × N_b`.
    pub b_n: DMatrix<f64>,
    /// Angle-to-flow matrix, `N_l × N_b`.
    pub b_f: DMatrix<f64>,
    /// Generator placement, `N_b × N_g`.
    pub a_g: DMatrix<f64>,
    /// Wind farm placement, `N_b × N_w`.
    pub a_w: DMatrix<f64>,
    /// Aggregator placement, `N_b × N_a`.
    pub a_a: DMatrix<f64>,
}

pub fn build_flow_matrices(case: &NetworkCase) -> Result<FlowMatrices, GridError> {
    let violations = validate_case(case);
    if !violations.is_empty() {
        return Err(GridError::InvalidCase(violations));
    }
    let nb = case.buses.len();
    let nl = case.lines.len();
    let mut a_n = DMatrix::zeros(nl, nb);
    let mut b_s = DVector::zeros(nl);
    for (k, l) in case.lines.iter().enumerate() {
        if !(l.reactance_pu > 0.0) {
            return Err(GridError::NonPositiveReactance {
                index: k,
                reactance: l.reactance_pu,
            });
        }
        a_n[(k, l.from_bus - 1)] = 1.0;
        a_n[(k, l.to_bus - 1)] = -1.0;
        b_s[k] = -1.0 / l.reactance_pu;
    }
    let bs = DMatrix::from_diagonal(&b_s);
    let b_n = -(a_n.transpose() * &bs * &a_n);
    let b_f = -(&bs * &a_n);

    let placement = |buses: Vec<usize>| {
        let mut m = DMatrix::zeros(nb, buses.len());
        for (col, bus) in buses.into_iter().enumerate() {
            m[(bus - 1, col)] = 1.0;
        }
        m
    };
    Ok(FlowMatrices {
        a_g: placement(case.generators.iter().map(|g| g.bus).collect()),
        a_w: placement(case.wind_farms.iter().map(|w| w.bus).collect()),
        a_a: placement(case.aggregators.iter().map(|a| a.bus).collect()),
        a_n,
        b_s,
        b_n,
        b_f,
    })
}

/// Linear description of one appliance's feasible set over the full horizon:
/// `Σ_t p_t = energy`, `lower_t ≤ p_t ≤ upper_t`, with both bounds zero
/// outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceBlock {
    pub horizon: usize,
    pub window: RangeInclusive<usize>,
    pub energy: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleRejection {
    #[error("schedule has {got} slots, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("slot {slot}: {value} outside [{lo}, {hi}]")]
    OutOfBox { slot: usize, value: f64, lo: f64, hi: f64 },
    #[error("delivered energy {got} differs from required {required}")]
    Energy { got: f64, required: f64 },
}

impl ApplianceBlock {
    /// Checks `p` against every row of the block with absolute tolerance `tol`.
    pub fn check(&self, p: &[f64], tol: f64) -> Result<(), ScheduleRejection> {
        if p.len() != self.horizon {
            return Err(ScheduleRejection::Length {
                got: p.len(),
                expected: self.horizon,
            });
        }
        for (t, &v) in p.iter().enumerate() {
            if v < self.lower[t] - tol || v > self.upper[t] + tol {
                return Err(ScheduleRejection::OutOfBox {
                    slot: t,
                    value: v,
                    lo: self.lower[t],
                    hi: self.upper[t],
                });
            }
        }
        let got: f64 = p.iter().sum();
        if (got - self.energy).abs() > tol * (1.0 + self.energy.abs()) {
            return Err(ScheduleRejection::Energy {
                got,
                required: self.energy,
            });
        }
        Ok(())
    }
}

pub fn appliance_constraints(a: &Appliance, horizon: usize) -> Result<ApplianceBlock, GridError> {
    if a.t_start > a.t_end || a.t_end >= horizon {
        return Err(GridError::WindowOutOfHorizon {
            t_start: a.t_start,
            t_end: a.t_end,
            horizon,
        });
    }
    let span = a.span() as f64;
    let (lo, hi) = (span * a.p_min, span * a.p_max);
    let slack = 1e-12 * (1.0 + a.energy_total.abs());
    if a.p_min > a.p_max || a.energy_total < lo - slack || a.energy_total > hi + slack {
        return Err(GridError::InfeasibleAppliance {
            path: format!("appliance {}", a.id),
            energy: a.energy_total,
            lo,
            hi,
        });
    }
    let mut lower = vec![0.0; horizon];
    let mut upper = vec![0.0; horizon];
    for t in a.window() {
        lower[t] = a.p_min;
        upper[t] = a.p_max;
    }
    Ok(ApplianceBlock {
        horizon,
        window: a.window(),
        energy: a.energy_total,
        lower,
        upper,
    })
}
