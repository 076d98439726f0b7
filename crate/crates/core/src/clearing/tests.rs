use super::*;
use crate::bundle::random_small_case;
use crate::grid::{Aggregator, Appliance, Bus, Generator, Line, User, Utility, WindFarm};
use crate::scenarios::{default_sigma, generate_scenarios};

fn one_bus(load: f64) -> NetworkCase {
    NetworkCase {
        horizon: 1,
        mva_base: 100.0,
        buses: vec![Bus {
            id: 1,
            base_load: vec![load],
        }],
        lines: vec![],
        generators: vec![Generator {
            bus: 1,
            cost_a: 1.0,
            cost_b: 0.0,
            p_min: 0.0,
            p_max: 100.0,
            ramp_up: 100.0,
            ramp_down: 100.0,
            p_initial: None,
        }],
        wind_farms: vec![],
        aggregators: vec![],
    }
}

fn empty_prices(t: usize) -> PriceSchedule {
    PriceSchedule {
        buy: vec![vec![]; t],
        sell: vec![vec![]; t],
    }
}

fn empty_scenarios(t: usize) -> ScenarioSet {
    ScenarioSet {
        forecast: vec![vec![]; t],
        sigma: vec![vec![]; t],
        seed: 0,
        samples: vec![vec![vec![]; t]],
    }
}

fn phev(energy: f64, p_max: f64, t_start: usize, t_end: usize) -> Appliance {
    Appliance {
        id: 1,
        energy_total: energy,
        p_min: 0.0,
        p_max,
        t_start,
        t_end,
        utility: Utility::default(),
    }
}

#[test]
fn one_bus_toy_prices_at_marginal_cost() {
    let case = one_bus(4.0);
    let sol = solve_centralized(&case, &empty_prices(1), &empty_scenarios(1), &ClearingConfig::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.p_g[0][0] - 4.0).abs() < 1e-7);
    // Sole scenario with no farms: η absorbs nothing, so the CVaR term is zero.
    assert!((sol.generation_cost - 16.0).abs() < 1e-6);
    assert!((sol.objective - 16.0).abs() < 1e-6, "{}", sol.objective);
    assert!((sol.tau[0][0] - 8.0).abs() < 1e-6, "{}", sol.tau[0][0]);
    assert_eq!(sol.theta[0][0], 0.0);
}

fn small_wind_case() -> (NetworkCase, PriceSchedule, ScenarioSet) {
    let mut case = one_bus(10.0);
    case.wind_farms.push(WindFarm {
        bus: 1,
        p_commit_max: vec![5.0],
    });
    let prices = PriceSchedule {
        buy: vec![vec![20.0]],
        sell: vec![vec![20.0]],
    };
    let forecast = vec![vec![3.0]];
    let scen = generate_scenarios(&forecast, &vec![vec![1.0]], 8, 3).unwrap();
    (case, prices, scen)
}

#[test]
fn single_pricing_emits_no_epigraph_variables() {
    let (case, prices, scen) = small_wind_case();
    let prog = assemble_centralized(&case, &prices, &scen, RiskConfig::default()).unwrap();
    assert_eq!(prog.n_epigraph(), 0);
    assert_eq!(prog.qp.n(), centralized_variable_count(&case, 8, 0));
    assert!(prog.qp.names.iter().all(|n| !n.starts_with("e[")));

    let mut spread = prices.clone();
    spread.sell[0][0] = 15.0;
    let prog = assemble_centralized(&case, &spread, &scen, RiskConfig::default()).unwrap();
    assert_eq!(prog.n_epigraph(), 8);
    assert_eq!(prog.qp.n(), centralized_variable_count(&case, 8, 1));
}

#[test]
fn refuses_sell_above_buy() {
    let (case, mut prices, scen) = small_wind_case();
    prices.sell[0][0] = 25.0;
    let err = assemble_centralized(&case, &prices, &scen, RiskConfig::default()).err().unwrap();
    assert!(matches!(err, ClearingError::Convexity { farm: 0, slot: 0 }));
}

#[test]
fn wecc6_variable_count_matches_formula() {
    let case = crate::bundle::wecc6_case(crate::bundle::DEFAULT_SEED);
    let prices = crate::bundle::wecc6_prices();
    let forecast = crate::bundle::wecc6_forecast();
    let sigma = default_sigma(&forecast, 0.2, 0.5);
    let scen = generate_scenarios(&forecast, &sigma, 200, 1).unwrap();
    let prog = assemble_centralized(&case, &prices, &scen, RiskConfig::default()).unwrap();
    let cells = case.horizon * case.wind_farms.len();
    assert_eq!(prog.n_epigraph(), 200 * cells);
    assert_eq!(prog.qp.n(), centralized_variable_count(&case, 200, cells));
}

#[test]
fn wind_commitment_nonincreasing_in_mu() {
    let (case, mut prices, scen) = small_wind_case();
    prices.sell[0][0] = 12.0;
    let mut last = f64::INFINITY;
    for mu in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let mut cfg = ClearingConfig::default();
        cfg.risk.mu = mu;
        let sol = solve_centralized(&case, &prices, &scen, &cfg).unwrap();
        assert!(sol.total_wind() <= last + 1e-6, "mu {mu}: {} > {last}", sol.total_wind());
        last = sol.total_wind();
    }
}

#[test]
fn generators_respect_limits_and_ramps() {
    let case = crate::bundle::wecc6_case(crate::bundle::DEFAULT_SEED);
    let prices = crate::bundle::wecc6_prices();
    let forecast = crate::bundle::wecc6_forecast();
    let scen = generate_scenarios(&forecast, &default_sigma(&forecast, 0.2, 0.5), 30, 5).unwrap();
    let sol = solve_centralized(&case, &prices, &scen, &ClearingConfig::default()).unwrap();
    let tol = 1e-6;
    for (i, g) in case.generators.iter().enumerate() {
        let mut prev = g.initial_output();
        for t in 0..case.horizon {
            let p = sol.p_g[t][i];
            assert!(p >= g.p_min - tol && p <= g.p_max + tol);
            assert!(p - prev <= g.ramp_up + tol && prev - p <= g.ramp_down + tol);
            prev = p;
        }
    }
    assert!(sol.u.iter().all(|&u| u >= -1e-7));
    assert!(sol.theta.iter().all(|r| r[0].abs() < 1e-9));
}

fn iso_only(case: &NetworkCase) -> IsoProblem {
    IsoProblem::new(case, &empty_prices(case.horizon), &empty_scenarios(case.horizon), &ClearingConfig {
        rho: 1e6,
        ..ClearingConfig::default()
    })
    .unwrap()
}

#[test]
fn large_rho_clips_targets_into_box() {
    let mut case = one_bus(10.0);
    case.horizon = 3;
    case.buses[0].base_load = vec![10.0; 3];
    case.aggregators.push(Aggregator {
        bus: 1,
        p_dra_max: 5.0,
        users: vec![],
    });
    let iso = iso_only(&case);
    let p_hat = vec![vec![-2.0], vec![3.0], vec![9.0]];
    let x = iso_subproblem(&iso, &vec![vec![0.0]; 3], &p_hat).unwrap();
    for (got, want) in x.p_dra.iter().zip([0.0, 3.0, 5.0]) {
        assert!((got[0] - want).abs() < 1e-3, "{} vs {want}", got[0]);
    }
}

#[test]
fn iso_without_coupling_matches_plain_dispatch() {
    let mut case = one_bus(4.0);
    case.aggregators.push(Aggregator {
        bus: 1,
        p_dra_max: 5.0,
        users: vec![],
    });
    let iso = IsoProblem::new(&case, &empty_prices(1), &empty_scenarios(1), &ClearingConfig::default()).unwrap();
    let x = iso_subproblem(&iso, &vec![vec![0.0]], &vec![vec![0.0]]).unwrap();
    assert!(x.p_dra[0][0].abs() < 1e-6);
    assert!((x.generation_cost - 16.0).abs() < 1e-6);
    assert!((x.tau[0][0] - 8.0).abs() < 1e-6);
}

fn agg(apps: Vec<Appliance>) -> Aggregator {
    Aggregator {
        bus: 1,
        p_dra_max: 10.0,
        users: apps
            .into_iter()
            .enumerate()
            .map(|(r, a)| User {
                id: r + 1,
                appliances: vec![a],
            })
            .collect(),
    }
}

#[test]
fn tight_window_pins_schedule() {
    let a = agg(vec![phev(3.0, 1.0, 1, 3)]);
    for lam in [-50.0, 0.0, 80.0] {
        let it = aggregator_subproblem(&a, 5, &[lam; 5], &[0.0; 5], 35.0, &QpSettings::default()).unwrap();
        for (t, want) in [0.0, 1.0, 1.0, 1.0, 0.0].into_iter().enumerate() {
            assert!((it.schedules[0][t] - want).abs() < 1e-7);
        }
    }
}

#[test]
fn zero_price_zero_target_spreads_evenly() {
    let a = agg(vec![phev(2.0, 1.0, 0, 3)]);
    let it = aggregator_subproblem(&a, 6, &[0.0; 6], &[0.0; 6], 35.0, &QpSettings::default()).unwrap();
    for t in 0..4 {
        assert!((it.schedules[0][t] - 0.5).abs() < 1e-7);
    }
    assert_eq!(&it.schedules[0][4..], &[0.0, 0.0]);
    assert!((it.totals.iter().sum::<f64>() - 2.0).abs() < 1e-7);
}

#[test]
fn zero_appliances_give_zero_totals() {
    let a = agg(vec![]);
    let it = aggregator_subproblem(&a, 4, &[1.0; 4], &[2.0; 4], 35.0, &QpSettings::default()).unwrap();
    assert!(it.schedules.is_empty());
    assert_eq!(it.totals, vec![0.0; 4]);
    assert_eq!(it.utility, 0.0);
}

#[test]
fn dual_update_examples() {
    let l = vec![vec![1.0]];
    assert_eq!(dual_update(&l, &vec![vec![2.0]], &vec![vec![2.0]], 35.0), l);
    let up = dual_update(&l, &vec![vec![2.1]], &vec![vec![2.0]], 35.0);
    assert!((up[0][0] - 4.5).abs() < 1e-12);
    assert!(up[0][0] > l[0][0]);
}

#[test]
fn residual_examples() {
    let p = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
    assert_eq!(primal_residual(&p, &p), 0.0);
    assert_eq!(primal_residual(&vec![vec![3.0]], &vec![vec![0.0]]), 3.0);
    assert_eq!(primal_residual(&vec![vec![3.0, 0.0], vec![0.0, 4.0]], &vec![vec![0.0; 2]; 2]), 5.0);
}

#[test]
fn zero_appliance_admm_converges_in_one_iteration() {
    let mut case = one_bus(4.0);
    case.aggregators.push(Aggregator {
        bus: 1,
        p_dra_max: 5.0,
        users: vec![],
    });
    let cfg = ClearingConfig {
        mode: Mode::Admm,
        ..ClearingConfig::default()
    };
    let sol = admm_solve(&case, &empty_prices(1), &empty_scenarios(1), &cfg).unwrap();
    assert_eq!(sol.iterations, 1);
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 16.0).abs() < 1e-6);
}

#[test]
fn admm_reports_best_iterate_at_cap() {
    let (case, prices, forecast) = random_small_case(1);
    let scen = generate_scenarios(&forecast, &default_sigma(&forecast, 0.2, 0.5), 5, 1).unwrap();
    let cfg = ClearingConfig {
        max_admm_iter: 2,
        eps_pri: 1e-12,
        ..ClearingConfig::default()
    };
    let sol = admm_solve(&case, &prices, &scen, &cfg).unwrap();
    assert_eq!(sol.status, SolveStatus::MaxIter);
    assert_eq!(sol.trace.len(), 2);
    let best = sol.trace.iter().map(|r| r.primal_residual).fold(f64::INFINITY, f64::min);
    let sums: SlotMatrix = (0..case.horizon)
        .map(|t| {
            (0..case.aggregators.len())
                .map(|j| {
                    sol.appliances
                        .iter()
                        .filter(|a| a.aggregator == j)
                        .map(|a| a.schedule[t])
                        .sum()
                })
                .collect()
        })
        .collect();
    assert!((primal_residual(&sol.p_dra, &sums) - best).abs() < 1e-9);
}

#[test]
fn admm_matches_central_on_random_cases() {
    for seed in 0..5 {
        let (case, prices, forecast) = random_small_case(seed);
        let scen = generate_scenarios(&forecast, &default_sigma(&forecast, 0.2, 0.5), 10, seed).unwrap();
        let cfg = ClearingConfig {
            max_admm_iter: 2000,
            ..ClearingConfig::default()
        };
        let central = solve_centralized(&case, &prices, &scen, &cfg).unwrap();
        let admm = admm_solve(&case, &prices, &scen, &cfg).unwrap();
        assert_eq!(admm.status, SolveStatus::Optimal, "seed {seed}");
        let tol = 1e-3 * (1.0 + central.objective.abs());
        assert!(
            (admm.objective - central.objective).abs() <= tol,
            "seed {seed}: {} vs {}",
            admm.objective,
            central.objective
        );
        // Stopping on the primal residual alone leaves the dispatch loose at
        // 1e-4; tighten it before comparing primal values.
        let tight = ClearingConfig {
            eps_pri: 1e-8,
            ..cfg
        };
        let admm = admm_solve(&case, &prices, &scen, &tight).unwrap();
        let pairs = admm
            .p_g
            .iter()
            .flatten()
            .zip(central.p_g.iter().flatten())
            .chain(admm.p_dra.iter().flatten().zip(central.p_dra.iter().flatten()));
        for (a, c) in pairs {
            assert!((a - c).abs() < 1e-3, "seed {seed}: {a} vs {c}");
        }
    }
}

#[test]
fn line_limit_enforced() {
    let case = NetworkCase {
        horizon: 1,
        mva_base: 100.0,
        buses: vec![
            Bus {
                id: 1,
                base_load: vec![0.0],
            },
            Bus {
                id: 2,
                base_load: vec![10.0],
            },
        ],
        lines: vec![Line {
            from_bus: 1,
            to_bus: 2,
            reactance_pu: 0.2,
            flow_min: Some(-6.0),
            flow_max: Some(6.0),
        }],
        generators: vec![
            Generator {
                bus: 1,
                cost_a: 0.0,
                cost_b: 10.0,
                p_min: 0.0,
                p_max: 50.0,
                ramp_up: 50.0,
                ramp_down: 50.0,
                p_initial: None,
            },
            Generator {
                bus: 2,
                cost_a: 0.0,
                cost_b: 30.0,
                p_min: 0.0,
                p_max: 50.0,
                ramp_up: 50.0,
                ramp_down: 50.0,
                p_initial: None,
            },
        ],
        wind_farms: vec![],
        aggregators: vec![],
    };
    let sol = solve_centralized(&case, &empty_prices(1), &empty_scenarios(1), &ClearingConfig::default()).unwrap();
    assert!((sol.p_g[0][0] - 6.0).abs() < 1e-6);
    assert!((sol.p_g[0][1] - 4.0).abs() < 1e-6);
    assert!((sol.tau[0][0] - 10.0).abs() < 1e-5);
    assert!((sol.tau[0][1] - 30.0).abs() < 1e-5);
}
