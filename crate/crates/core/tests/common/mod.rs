#![allow(dead_code)]

use wind_clearing::grid::{Aggregator, Appliance, Bus, Generator, Line, NetworkCase, User, Utility, WindFarm};
use wind_clearing::risk::PriceSchedule;
use wind_clearing::SlotMatrix;

/// Merit-order dispatch of one uncongested slot.
pub struct SlotDispatch {
    pub price: f64,
    pub p_g: Vec<f64>,
    pub p_w: Vec<f64>,
    pub cost: f64,
}

fn gen_output(g: &Generator, price: f64) -> f64 {
    if g.cost_a > 0.0 {
        ((price - g.cost_b) / (2.0 * g.cost_a)).clamp(g.p_min, g.p_max)
    } else if price > g.cost_b {
        g.p_max
    } else {
        g.p_min
    }
}

/// Copper-plate economic dispatch with wind as a step supplier.
///
/// Wind farm `m` offers up to `caps[m]` at the constant marginal cost
/// `wind_cost[m]`. The price is found by bisection, then whatever load the
/// generators leave at that price goes to the wind farms priced at it.
pub fn copper_plate_slot(gens: &[Generator], caps: &[f64], wind_cost: &[f64], load: f64) -> SlotDispatch {
    let supply = |price: f64, strict: bool| -> f64 {
        let g: f64 = gens.iter().map(|g| gen_output(g, price)).sum();
        let w: f64 = caps
            .iter()
            .zip(wind_cost)
            .filter(|(_, &c)| if strict { c < price } else { c <= price })
            .map(|(cap, _)| cap)
            .sum();
        g + w
    };
    let (mut lo, mut hi) = (-1e4, 1e5);
    assert!(supply(hi, false) >= load, "load exceeds capacity");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if supply(mid, false) < load {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let price = hi;
    let mut p_g: Vec<f64> = gens.iter().map(|g| gen_output(g, price)).collect();
    let mut p_w: Vec<f64> = caps
        .iter()
        .zip(wind_cost)
        .map(|(&cap, &c)| if c < price - 1e-9 { cap } else { 0.0 })
        .collect();
    let mut residual = load - p_g.iter().sum::<f64>() - p_w.iter().sum::<f64>();
    for m in 0..caps.len() {
        if (wind_cost[m] - price).abs() <= 1e-9 && residual > 0.0 {
            let take = residual.min(caps[m]);
            p_w[m] = take;
            residual -= take;
        }
    }
    // Interior generators absorb what the bisection left, in proportion to
    // their inverse curvature.
    let slack: Vec<usize> = (0..gens.len())
        .filter(|&k| gens[k].cost_a > 0.0 && p_g[k] > gens[k].p_min && p_g[k] < gens[k].p_max)
        .collect();
    let weight: f64 = slack.iter().map(|&k| 0.5 / gens[k].cost_a).sum();
    for &k in &slack {
        p_g[k] += residual * (0.5 / gens[k].cost_a) / weight;
    }
    let cost = gens.iter().zip(&p_g).map(|(g, &p)| g.cost(p)).sum::<f64>()
        + p_w.iter().zip(wind_cost).map(|(p, c)| p * c).sum::<f64>();
    SlotDispatch { price, p_g, p_w, cost }
}

/// Deterministic dispatch of a case without aggregators when every wind
/// deviation is charged at `b` and realized wind equals `forecast`.
///
/// Returns `(objective, slots)` where the objective is generation cost plus
/// `μ·Σ b(p_W − w̄)`.
pub fn deterministic_oracle(
    case: &NetworkCase,
    buy: &SlotMatrix,
    forecast: &SlotMatrix,
    mu: f64,
) -> (f64, Vec<SlotDispatch>) {
    let mut total = 0.0;
    let mut slots = Vec::new();
    for t in 0..case.horizon {
        let caps: Vec<f64> = case.wind_farms.iter().map(|w| w.p_commit_max[t]).collect();
        let costs: Vec<f64> = buy[t].iter().map(|b| mu * b).collect();
        let d = copper_plate_slot(&case.generators, &caps, &costs, case.total_base_load(t));
        total += d.cost - costs.iter().zip(&forecast[t]).map(|(c, w)| c * w).sum::<f64>();
        slots.push(d);
    }
    (total, slots)
}

/// True when consecutive oracle outputs, starting from each unit's initial
/// output, respect every ramp limit.
pub fn ramps_slack(case: &NetworkCase, slots: &[SlotDispatch]) -> bool {
    case.generators.iter().enumerate().all(|(k, g)| {
        let mut prev = g.initial_output();
        slots.iter().all(|s| {
            let p = s.p_g[k];
            let ok = p - prev <= g.ramp_up + 1e-9 && prev - p <= g.ramp_down + 1e-9;
            prev = p;
            ok
        })
    })
}

/// Two buses, one generator, one wind farm and one aggregator whose users can
/// draw in every slot and value energy steeply, so the aggregator total sits
/// strictly inside its bounds everywhere.
pub fn interior_toy() -> (NetworkCase, PriceSchedule, SlotMatrix) {
    const T: usize = 4;
    let users = (1..=3)
        .map(|id| User {
            id,
            appliances: vec![Appliance {
                id: 1,
                energy_total: 2.0 + id as f64,
                p_min: 0.0,
                p_max: 4.0,
                t_start: 0,
                t_end: T - 1,
                utility: Utility {
                    gamma: 1.0 + 0.5 * id as f64,
                    delta: 60.0,
                },
            }],
        })
        .collect();
    let case = NetworkCase {
        horizon: T,
        mva_base: 100.0,
        buses: vec![
            Bus {
                id: 1,
                base_load: vec![0.0; T],
            },
            Bus {
                id: 2,
                base_load: vec![10.0, 14.0, 12.0, 8.0],
            },
        ],
        lines: vec![Line {
            from_bus: 1,
            to_bus: 2,
            reactance_pu: 0.2,
            flow_min: None,
            flow_max: None,
        }],
        generators: vec![Generator {
            bus: 1,
            cost_a: 0.2,
            cost_b: 20.0,
            p_min: 0.0,
            p_max: 100.0,
            ramp_up: 100.0,
            ramp_down: 100.0,
            p_initial: Some(20.0),
        }],
        wind_farms: vec![WindFarm {
            bus: 2,
            p_commit_max: vec![6.0; T],
        }],
        aggregators: vec![Aggregator {
            bus: 2,
            p_dra_max: 50.0,
            users,
        }],
    };
    let prices = PriceSchedule {
        buy: vec![vec![40.0]; T],
        sell: vec![vec![30.0]; T],
    };
    let forecast = vec![vec![3.0]; T];
    (case, prices, forecast)
}

/// `|a − b| ≤ tol·(1 + |b|)`.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
