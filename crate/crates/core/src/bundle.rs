//! The shipped WECC-6 analog: six buses, three generators, three 20 MW wind
//! farms, and four PHEV aggregators with 200 users each.
//!
//! Load, price and forecast profiles are synthetic diurnal shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Aggregator, Appliance, Bus, Generator, Line, NetworkCase, User, Utility, WindFarm};
use crate::risk::PriceSchedule;
use crate::SlotMatrix;

pub const DEFAULT_SEED: u64 = 2014;
pub const HORIZON: usize = 24;
pub const USERS_PER_AGGREGATOR: usize = 200;
pub const WIND_RATED_MW: f64 = 20.0;
pub const P_DRA_MAX_MW: f64 = 50.0;
/// Sell price as a fraction of the purchase price.
pub const SELL_RATIO: f64 = 0.9;

/// System base load by slot, MW; slot `t` is the hour ending at `t + 1`.
const BASE_LOAD: [f64; HORIZON] = [
    78.0, 74.0, 71.0, 70.0, 71.0, 75.0, 84.0, 96.0, 108.0, 116.0, 121.0, 123.0, 120.0, 116.0,
    113.0, 112.0, 115.0, 122.0, 131.0, 135.0, 132.0, 121.0, 104.0, 89.0,
];
const LOAD_BUSES: [usize; 4] = [3, 4, 5, 6];
const LOAD_SHARES: [f64; 4] = [0.3, 0.25, 0.25, 0.2];

/// Purchase price at each wind bus, $/MWh: morning peak 7am–12pm, evening peak 6pm–9pm.
const BUY_PRICE: [f64; HORIZON] = [
    28.0, 26.0, 25.0, 25.0, 26.0, 29.0, 48.0, 72.0, 80.0, 82.0, 80.0, 74.0, 52.0, 44.0, 41.0,
    40.0, 46.0, 70.0, 84.0, 86.0, 78.0, 48.0, 36.0, 31.0,
];
const PRICE_BUS_FACTOR: [f64; 3] = [1.0, 0.97, 1.04];

/// Forecast wind output, MW, per farm.
const FORECAST: [[f64; 3]; HORIZON] = [
    [12.5, 9.0, 7.5],
    [13.0, 9.6, 7.0],
    [13.4, 10.1, 6.6],
    [13.6, 10.5, 6.2],
    [13.5, 10.8, 5.9],
    [13.0, 11.0, 5.6],
    [12.2, 10.9, 5.5],
    [11.1, 10.5, 5.7],
    [9.9, 9.9, 6.2],
    [8.7, 9.1, 7.0],
    [7.6, 8.2, 8.0],
    [6.7, 7.4, 9.1],
    [6.1, 6.6, 10.2],
    [5.8, 6.0, 11.2],
    [5.9, 5.6, 12.0],
    [6.4, 5.5, 12.6],
    [7.2, 5.7, 12.9],
    [8.2, 6.1, 12.8],
    [9.3, 6.7, 12.3],
    [10.3, 7.4, 11.5],
    [11.1, 8.0, 10.5],
    [11.7, 8.5, 9.5],
    [12.0, 8.8, 8.6],
    [12.3, 8.9, 8.0],
];

fn generators() -> Vec<Generator> {
    let g = |bus, a, b, pmax, pmin, up, down| Generator {
        bus,
        cost_a: a,
        cost_b: b,
        p_min: pmin,
        p_max: pmax,
        ramp_up: up,
        ramp_down: down,
        p_initial: None,
    };
    vec![
        g(1, 0.3, 50.0, 90.0, 10.0, 50.0, 50.0),
        g(2, 0.15, 30.0, 50.0, 5.0, 35.0, 40.0),
        g(3, 0.2, 40.0, 60.0, 8.0, 40.0, 40.0),
    ]
}

fn lines() -> Vec<Line> {
    [(1, 6, 0.2), (6, 2, 0.3), (2, 5, 0.25), (5, 3, 0.1), (3, 4, 0.3), (4, 1, 0.4)]
        .into_iter()
        .map(|(from_bus, to_bus, x)| Line {
            from_bus,
            to_bus,
            reactance_pu: x,
            flow_min: None,
            flow_max: None,
        })
        .collect()
}

/// One PHEV per user: energy uniform on {10, 11, 12} kWh, rate limit uniform on
/// {2.1, 2.3, 2.5} kW, charging from the hour ending 1am until the hour ending
/// 6am (probability 0.7) or 7am. Converted to MWh and MW.
pub fn draw_phev(rng: &mut impl Rng, id: usize) -> Appliance {
    const ENERGY_KWH: [f64; 3] = [10.0, 11.0, 12.0];
    const RATE_KW: [f64; 3] = [2.1, 2.3, 2.5];
    let energy = ENERGY_KWH[rng.random_range(0..3)];
    let rate = RATE_KW[rng.random_range(0..3)];
    let t_end = if rng.random_bool(0.7) { 5 } else { 6 };
    Appliance {
        id,
        energy_total: energy / 1000.0,
        p_min: 0.0,
        p_max: rate / 1000.0,
        t_start: 0,
        t_end,
        utility: Utility::default(),
    }
}

pub fn draw_users(seed: u64, stream: u64, n_users: usize) -> Vec<User> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n_users)
        .map(|r| User {
            id: r + 1,
            appliances: vec![draw_phev(&mut rng, 1)],
        })
        .collect()
}

pub fn wecc6_case(seed: u64) -> NetworkCase {
    let buses = (1..=6)
        .map(|id| {
            let share = LOAD_BUSES
                .iter()
                .position(|&b| b == id)
                .map_or(0.0, |k| LOAD_SHARES[k]);
            Bus {
                id,
                base_load: BASE_LOAD.iter().map(|l| round6(l * share)).collect(),
            }
        })
        .collect();
    let wind_farms = [1, 2, 5]
        .into_iter()
        .map(|bus| WindFarm {
            bus,
            p_commit_max: vec![WIND_RATED_MW; HORIZON],
        })
        .collect();
    let aggregators = [4, 4, 5, 6]
        .into_iter()
        .enumerate()
        .map(|(j, bus)| Aggregator {
            bus,
            p_dra_max: P_DRA_MAX_MW,
            users: draw_users(seed, j as u64, USERS_PER_AGGREGATOR),
        })
        .collect();
    NetworkCase {
        horizon: HORIZON,
        mva_base: 100.0,
        buses,
        lines: lines(),
        generators: generators(),
        wind_farms,
        aggregators,
    }
}

pub fn wecc6_prices() -> PriceSchedule {
    let buy: SlotMatrix = BUY_PRICE
        .iter()
        .map(|b| PRICE_BUS_FACTOR.iter().map(|f| round6(b * f)).collect())
        .collect();
    let sell = buy
        .iter()
        .map(|r| r.iter().map(|b| round6(SELL_RATIO * b)).collect())
        .collect();
    PriceSchedule { buy, sell }
}

pub fn wecc6_forecast() -> SlotMatrix {
    FORECAST.iter().map(|r| r.to_vec()).collect()
}

/// A small random instance for equivalence testing: 2–6 buses on a ring,
/// quadratic costs everywhere, strictly concave utilities, six slots.
pub fn random_small_case(seed: u64) -> (NetworkCase, PriceSchedule, SlotMatrix) {
    const T: usize = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.random_range(2..=6usize);
    let mut lines = Vec::new();
    for n in 1..nb {
        lines.push(Line {
            from_bus: n,
            to_bus: n + 1,
            reactance_pu: rng.random_range(0.1..0.5),
            flow_min: None,
            flow_max: None,
        });
    }
    if nb > 2 {
        lines.push(Line {
            from_bus: nb,
            to_bus: 1,
            reactance_pu: rng.random_range(0.1..0.5),
            flow_min: None,
            flow_max: None,
        });
    }
    let buses = (1..=nb)
        .map(|id| {
            let level = rng.random_range(3.0..10.0);
            Bus {
                id,
                base_load: (0..T).map(|t| round6(level * (1.0 + 0.2 * (t as f64).sin()))).collect(),
            }
        })
        .collect();
    let n_gen = rng.random_range(1..=3usize);
    let generators = (0..n_gen)
        .map(|_| Generator {
            bus: rng.random_range(1..=nb),
            cost_a: rng.random_range(0.05..0.4),
            cost_b: rng.random_range(15.0..45.0),
            p_min: 0.0,
            p_max: 120.0,
            ramp_up: 120.0,
            ramp_down: 120.0,
            p_initial: Some(30.0),
        })
        .collect();
    let n_wind = rng.random_range(1..=2usize);
    let wind_farms: Vec<WindFarm> = (0..n_wind)
        .map(|_| WindFarm {
            bus: rng.random_range(1..=nb),
            p_commit_max: vec![10.0; T],
        })
        .collect();
    let n_agg = rng.random_range(1..=3usize);
    let aggregators = (0..n_agg)
        .map(|_| {
            let n_users = rng.random_range(2..=5usize);
            let users = (0..n_users)
                .map(|r| {
                    let t_start = rng.random_range(0..3usize);
                    let t_end = rng.random_range(t_start + 2..T);
                    let p_max = rng.random_range(0.5..1.5);
                    let span = (t_end + 1 - t_start) as f64;
                    User {
                        id: r + 1,
                        appliances: vec![Appliance {
                            id: 1,
                            energy_total: round6(rng.random_range(0.2..0.8) * p_max * span),
                            p_min: 0.0,
                            p_max,
                            t_start,
                            t_end,
                            utility: Utility {
                                gamma: rng.random_range(0.5..2.0),
                                delta: rng.random_range(0.0..20.0),
                            },
                        }],
                    }
                })
                .collect();
            Aggregator {
                bus: rng.random_range(1..=nb),
                p_dra_max: 20.0,
                users,
            }
        })
        .collect();
    let buy: SlotMatrix = (0..T)
        .map(|_| (0..n_wind).map(|_| round6(rng.random_range(20.0..60.0))).collect())
        .collect();
    let sell = buy
        .iter()
        .map(|r| r.iter().map(|b| round6(SELL_RATIO * b)).collect())
        .collect();
    let forecast = (0..T)
        .map(|_| (0..n_wind).map(|_| round6(rng.random_range(2.0..8.0))).collect())
        .collect();
    let case = NetworkCase {
        horizon: T,
        mva_base: 100.0,
        buses,
        lines,
        generators,
        wind_farms,
        aggregators,
    };
    (case, PriceSchedule { buy, sell }, forecast)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}
