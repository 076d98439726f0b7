//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{close_rel, deterministic_oracle, interior_toy, ramps_slack};
use wind_clearing::bundle::{random_small_case, wecc6_case, wecc6_forecast, wecc6_prices, DEFAULT_SEED};
use wind_clearing::clearing::{admm_solve, solve_centralized, ClearingConfig, DispatchSolution, Mode, SolveStatus};
use wind_clearing::evaluation::{evaluate_dispatch, evaluate_policy, mu_sweep, PolicyKind, PolicySpec};
use wind_clearing::grid::NetworkCase;
use wind_clearing::qp::{solve_qp, QpBuilder, QpSettings, QpStatus, QuadraticProgram};
use wind_clearing::risk::{
    empirical_var_cvar, saa_cvar_value, transaction_cost, transaction_cost_hinge, PriceSchedule, RiskConfig,
};
use wind_clearing::scenarios::{default_sigma, generate_scenarios, ScenarioSet, DEFAULT_SIGMA_FLOOR, DEFAULT_SIGMA_FRACTION};
use wind_clearing::SlotMatrix;

const ANALOG_SAMPLES: usize = 200;
const EVAL_SAMPLES: usize = 10_000;
const EQUIV_TOL: f64 = 1e-3;
const ADMM_ITER_BOUND: usize = 50;
const RUNTIME_BUDGET_S: f64 = 600.0;
const MU_GRID: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];
const MONOTONE_TOL: f64 = 1e-6;
const CVAR_EXACT_REL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-6;
const LMP_TOL: f64 = 1e-4;
const ORACLE_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;

struct Analog {
    case: NetworkCase,
    prices: PriceSchedule,
    scenarios: ScenarioSet,
    central: DispatchSolution,
    admm: DispatchSolution,
    central_s: f64,
    admm_s: f64,
}

fn analog_scenarios(n: usize, seed: u64) -> ScenarioSet {
    let f = wecc6_forecast();
    let sigma = default_sigma(&f, DEFAULT_SIGMA_FRACTION, DEFAULT_SIGMA_FLOOR);
    generate_scenarios(&f, &sigma, n, seed).unwrap()
}

fn admm_config() -> ClearingConfig {
    ClearingConfig {
        mode: Mode::Admm,
        ..ClearingConfig::default()
    }
}

fn analog() -> Analog {
    let case = wecc6_case(DEFAULT_SEED);
    let prices = wecc6_prices();
    let scenarios = analog_scenarios(ANALOG_SAMPLES, DEFAULT_SEED);
    let t = Instant::now();
    let central = solve_centralized(&case, &prices, &scenarios, &ClearingConfig::default()).unwrap();
    let central_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let admm = admm_solve(&case, &prices, &scenarios, &admm_config()).unwrap();
    let admm_s = t.elapsed().as_secs_f64();
    Analog {
        case,
        prices,
        scenarios,
        central,
        admm,
        central_s,
        admm_s,
    }
}

fn equivalence(a: &Analog, solves: &mut Vec<DispatchSolution>) -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    let mut check = |label: String, admm: &DispatchSolution, central: &DispatchSolution| {
        let gap = (admm.objective - central.objective).abs() / (1.0 + central.objective.abs());
        worst = worst.max(gap);
        if !(gap <= EQUIV_TOL) || admm.status != SolveStatus::Optimal {
            fails.push(format!("{label}: gap {gap:.2e}, admm {:?}", admm.status));
        }
    };
    check("analog".into(), &a.admm, &a.central);
    for seed in 0..5 {
        let (case, prices, forecast) = random_small_case(seed);
        let sigma = default_sigma(&forecast, DEFAULT_SIGMA_FRACTION, DEFAULT_SIGMA_FLOOR);
        let scen = generate_scenarios(&forecast, &sigma, 20, 100 + seed).unwrap();
        let central = solve_centralized(&case, &prices, &scen, &ClearingConfig::default()).unwrap();
        let admm = admm_solve(&case, &prices, &scen, &admm_config()).unwrap();
        check(format!("random case {seed}"), &admm, &central);
        solves.push(central);
    }
    let runtime = a.central_s + a.admm_s + t.elapsed().as_secs_f64();
    if runtime > RUNTIME_BUDGET_S {
        fails.push(format!("runtime {runtime:.1} s over {RUNTIME_BUDGET_S} s"));
    }
    let detail = format!(
        "analog central {:.4} admm {:.4}; worst relative gap {worst:.2e} over analog + 5 random cases; {runtime:.1} s",
        a.central.objective, a.admm.objective
    );
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn convergence(a: &Analog) -> Outcome {
    let eps = ClearingConfig::default().eps_pri;
    let last = a.admm.trace.last().ok_or("empty trace")?;
    let tol = EQUIV_TOL * (1.0 + a.central.objective.abs());
    let above: Vec<usize> = a
        .admm
        .trace
        .iter()
        .filter(|r| r.primal_residual <= eps && r.objective > a.central.objective + tol)
        .map(|r| r.iteration)
        .collect();
    let first = a.admm.trace.iter().find(|r| r.primal_residual <= eps).map(|r| r.iteration);
    let detail = format!(
        "{} iterations, final residual {:.2e}, first iterate below {eps:e} at {first:?}, first objective {:.2} vs optimum {:.2}",
        a.admm.iterations, last.primal_residual, a.admm.trace[0].objective, a.central.objective
    );
    if a.admm.iterations <= ADMM_ITER_BOUND && last.primal_residual <= eps && above.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; converged iterates above optimum: {above:?}"))
    }
}

fn cost_ordering(a: &Analog) -> Outcome {
    let eval = analog_scenarios(EVAL_SAMPLES, DEFAULT_SEED + 1);
    let cvar = evaluate_dispatch(PolicyKind::CvarRiskLimiting, &a.central, &a.prices, &eval).map_err(|e| e.to_string())?;
    let mean = |kind| {
        evaluate_policy(&PolicySpec::new(kind, ClearingConfig::default()), &a.case, &a.prices, &a.scenarios, &eval)
            .map(|(_, ev)| ev.distribution.mean)
            .map_err(|e| e.to_string())
    };
    let expected = mean(PolicyKind::ExpectedWind)?;
    let none = mean(PolicyKind::NoWind)?;
    let margin = (expected - cvar.mean) / expected.abs();
    let detail = format!(
        "means over {EVAL_SAMPLES} samples: cvar {:.2}, expected_wind {expected:.2}, no_wind {none:.2}; cvar below expected_wind by {:.2}%",
        cvar.mean,
        100.0 * margin
    );
    if cvar.mean <= expected && expected <= none && margin >= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mu_monotone(a: &Analog, solves: &mut Vec<DispatchSolution>) -> Outcome {
    let rows = mu_sweep(&a.case, &a.prices, &a.scenarios, &MU_GRID, &ClearingConfig::default()).map_err(|e| e.to_string())?;
    if let Some(r) = rows.iter().find(|r| r.error.is_some()) {
        return Err(format!("mu {} failed: {:?}", r.mu, r.error));
    }
    let cvar_ok = rows.windows(2).all(|w| w[1].cvar_term <= w[0].cvar_term + MONOTONE_TOL);
    let gen_ok = rows.windows(2).all(|w| w[1].generation_cost >= w[0].generation_cost - MONOTONE_TOL);
    let detail = rows
        .iter()
        .map(|r| format!("mu {}: gen {:.2} cvar {:.2}", r.mu, r.generation_cost, r.cvar_term))
        .collect::<Vec<_>>()
        .join(", ");
    // The sweep's own solves are certified through the cleared status.
    for &mu in &MU_GRID[..1] {
        let cfg = ClearingConfig {
            risk: RiskConfig { beta: 0.95, mu },
            ..ClearingConfig::default()
        };
        solves.push(solve_centralized(&a.case, &a.prices, &a.scenarios, &cfg).map_err(|e| e.to_string())?);
    }
    if cvar_ok && gen_ok {
        Ok(detail)
    } else {
        Err(format!("cvar nonincreasing {cvar_ok}, generation nondecreasing {gen_ok}: {detail}"))
    }
}

/// `min over η in the sample points of η + Σ[c − η]⁺/(N(1−β))`, written out afresh.
fn direct_cvar(samples: &[f64], beta: f64) -> f64 {
    let n = samples.len() as f64;
    samples
        .iter()
        .map(|&eta| eta + samples.iter().map(|&c| if c > eta { c - eta } else { 0.0 }).sum::<f64>() / (n * (1.0 - beta)))
        .fold(f64::INFINITY, f64::min)
}

fn random_prices(rng: &mut ChaCha8Rng, t: usize, m: usize, convex: bool) -> PriceSchedule {
    let buy: SlotMatrix = (0..t).map(|_| (0..m).map(|_| rng.random_range(1.0..100.0)).collect()).collect();
    let sell = buy
        .iter()
        .map(|r| {
            r.iter()
                .map(|&b| if convex { rng.random_range(0.0..=b) } else { rng.random_range(0.0..1.5 * b) })
                .collect()
        })
        .collect();
    PriceSchedule { buy, sell }
}

fn random_matrix(rng: &mut ChaCha8Rng, t: usize, m: usize, hi: f64) -> SlotMatrix {
    (0..t).map(|_| (0..m).map(|_| rng.random_range(0.0..hi)).collect()).collect()
}

fn cvar_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    for k in 0..100 {
        let n = rng.random_range(1..=200usize);
        let samples: Vec<f64> = (0..n).map(|_| rng.random_range(0..25u32) as f64).collect();
        let beta = rng.random_range(0.05..0.99);
        let (var, cvar) = empirical_var_cvar(&samples, beta).unwrap();
        let direct = direct_cvar(&samples, beta);
        let gap = (cvar - direct).abs() / (1.0 + direct.abs());
        worst = worst.max(gap);
        if gap > CVAR_EXACT_REL {
            fails.push(format!("set {k}: {cvar} vs {direct}"));
        }
        if cvar < var {
            fails.push(format!("set {k}: CVaR {cvar} < VaR {var}"));
        }
    }
    for k in 0..1000 {
        let n = rng.random_range(1..=50usize);
        let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let (var, cvar) = empirical_var_cvar(&samples, rng.random_range(0.01..0.999)).unwrap();
        if cvar < var {
            fails.push(format!("continuous set {k}: CVaR {cvar} < VaR {var}"));
        }
    }
    let mut convex_fails = 0;
    for _ in 0..1000 {
        let (t, m, n) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=30));
        let prices = random_prices(&mut rng, t, m, true);
        let forecast = random_matrix(&mut rng, t, m, 20.0);
        let scen = ScenarioSet {
            sigma: vec![vec![0.0; m]; t],
            seed: 0,
            samples: (0..n).map(|_| random_matrix(&mut rng, t, m, 25.0)).collect(),
            forecast,
        };
        let beta = rng.random_range(0.05..0.99);
        let (p1, p2) = (random_matrix(&mut rng, t, m, 25.0), random_matrix(&mut rng, t, m, 25.0));
        let (e1, e2) = (rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
        let mid: SlotMatrix = p1
            .iter()
            .zip(&p2)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
            .collect();
        let f = |p: &SlotMatrix, e: f64| saa_cvar_value(p, e, &scen, &prices, beta).unwrap();
        let avg = 0.5 * (f(&p1, e1) + f(&p2, e2));
        if f(&mid, 0.5 * (e1 + e2)) > avg + 1e-9 * (1.0 + avg.abs()) {
            convex_fails += 1;
        }
    }
    if convex_fails > 0 {
        fails.push(format!("{convex_fails} midpoint-convexity violations"));
    }
    let detail = format!("100 discrete sets agree to {worst:.1e} relative; CVaR ≥ VaR on 1100 sets; 1000 midpoint trials");
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn hinge_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (t, m) = (rng.random_range(1..=24), rng.random_range(1..=4));
        let convex = rng.random_bool(0.8);
        let prices = random_prices(&mut rng, t, m, convex);
        let p = random_matrix(&mut rng, t, m, 30.0);
        let w = random_matrix(&mut rng, t, m, 30.0);
        let a = transaction_cost(&p, &w, &prices).unwrap();
        let b = transaction_cost_hinge(&p, &w, &prices).unwrap();
        worst = worst.max((a - b).abs());
    }
    let detail = format!("max |abs form − hinge form| {worst:.2e} over 1000 inputs");
    if worst <= IDENTITY_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Four KKT residuals recomputed densely, independent of the solver module.
fn dense_kkt(qp: &QuadraticProgram, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let n = qp.n();
    let dense = |rows: &[Vec<f64>], ncols| DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    let q = dense(&qp.q.to_dense(), n);
    let ae = dense(&qp.a_eq.to_dense(), n);
    let ai = dense(&qp.a_in.to_dense(), n);
    let (x, y, z) = (DVector::from_column_slice(x), DVector::from_column_slice(y), DVector::from_column_slice(z));
    let c = DVector::from_column_slice(&qp.c);
    let grad = &q * &x + &c + ae.transpose() * &y + ai.transpose() * &z;
    let stat = grad.amax() / (1.0 + c.amax());
    let peq = (&ae * &x - DVector::from_column_slice(&qp.b_eq)).amax();
    let gx = &ai * &x;
    let (mut pin, mut comp): (f64, f64) = (0.0, 0.0);
    for i in 0..qp.h_in.len() {
        pin = pin.max(gx[i] - qp.h_in[i]);
        comp = comp.max((z[i] * (qp.h_in[i] - gx[i])).abs());
    }
    let zneg = z.iter().fold(0.0_f64, |m, v| m.max(-v));
    stat.max(peq).max(pin).max(comp).max(zneg)
}

fn random_inequality_qp(rng: &mut ChaCha8Rng) -> QuadraticProgram {
    let n = rng.random_range(2..=30usize);
    let mut b = QpBuilder::new();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let vars: Vec<usize> = (0..n)
        .map(|k| {
            if rng.random_bool(0.5) {
                b.var(format!("x{k}"), x0[k] - rng.random_range(0.0..1.0), x0[k] + rng.random_range(0.0..1.0))
            } else {
                b.free_var(format!("x{k}"))
            }
        })
        .collect();
    for &v in &vars {
        b.square(v, rng.random_range(0.1..3.0));
        b.linear(v, rng.random_range(-5.0..5.0));
    }
    for _ in 0..rng.random_range(0..n) {
        let terms: Vec<(usize, f64)> = vars.iter().map(|&v| (v, rng.random_range(-1.0..1.0))).collect();
        let at_x0: f64 = terms.iter().map(|&(v, a)| a * x0[v]).sum();
        b.le(terms, at_x0 + rng.random_range(0.0..0.5));
    }
    for _ in 0..rng.random_range(0..n / 2 + 1) {
        let terms: Vec<(usize, f64)> = vars.iter().map(|&v| (v, rng.random_range(-1.0..1.0))).collect();
        let at_x0: f64 = terms.iter().map(|&(v, a)| a * x0[v]).sum();
        b.eq(terms, at_x0);
    }
    b.build()
}

fn kkt_certification(solves: &[DispatchSolution]) -> Outcome {
    let mut fails = Vec::new();
    let optimal: Vec<&DispatchSolution> = solves.iter().filter(|s| s.status == SolveStatus::Optimal).collect();
    if optimal.len() != solves.len() {
        fails.push(format!("{} of {} clearing solves not optimal", solves.len() - optimal.len(), solves.len()));
    }
    let worst_clear = optimal.iter().map(|s| s.diagnostics.max_kkt_residual).fold(0.0, f64::max);
    if worst_clear > KKT_TOL {
        fails.push(format!("clearing KKT {worst_clear:.2e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = QpSettings::default();
    let mut worst_random: f64 = 0.0;
    for k in 0..200 {
        let qp = random_inequality_qp(&mut rng);
        let s = solve_qp(&qp, &settings).unwrap();
        if s.status != QpStatus::Optimal {
            fails.push(format!("random QP {k}: {:?}", s.status));
            continue;
        }
        worst_random = worst_random.max(dense_kkt(&qp, &s.x, &s.duals_eq, &s.duals_in));
    }
    if worst_random > KKT_TOL {
        fails.push(format!("random QP KKT recomputed {worst_random:.2e}"));
    }

    let mut worst_closed: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=30usize);
        let m = rng.random_range(0..n);
        let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let bvec = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&q);
        kkt.view_mut((n, 0), (m, n)).copy_from(&a);
        kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-&c));
        rhs.rows_mut(n, m).copy_from(&bvec);
        let exact = kkt.lu().solve(&rhs).ok_or("singular oracle system")?;

        let mut b = QpBuilder::new();
        let vars: Vec<usize> = (0..n).map(|k| b.free_var(format!("x{k}"))).collect();
        let mut qp = b.build();
        for i in 0..n {
            for j in 0..n {
                qp.q.push(i, j, q[(i, j)]);
            }
        }
        qp.c = c.iter().copied().collect();
        let mut b2 = QpBuilder::new();
        for k in 0..n {
            b2.free_var(format!("x{k}"));
        }
        for r in 0..m {
            b2.eq(vars.iter().map(|&v| (v, a[(r, v)])).collect(), bvec[r]);
        }
        let eqs = b2.build();
        qp.a_eq = eqs.a_eq;
        qp.b_eq = eqs.b_eq;
        let s = solve_qp(&qp, &settings).unwrap();
        if s.status != QpStatus::Optimal {
            fails.push(format!("equality QP n={n}: {:?}", s.status));
            continue;
        }
        for i in 0..n {
            worst_closed = worst_closed.max((s.x[i] - exact[i]).abs());
        }
    }
    if worst_closed > CLOSED_FORM_TOL {
        fails.push(format!("closed-form gap {worst_closed:.2e}"));
    }
    let detail = format!(
        "{} clearing solves max KKT {worst_clear:.2e}; 200 random QPs recomputed KKT {worst_random:.2e}; 100 equality QPs within {worst_closed:.2e} of the closed form",
        solves.len()
    );
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", fails.join("; ")))
    }
}

fn interior_lambda_gap(case: &NetworkCase, admm: &DispatchSolution, central: &DispatchSolution) -> (usize, f64) {
    let (mut count, mut worst) = (0, 0.0_f64);
    for t in 0..case.horizon {
        for (j, agg) in case.aggregators.iter().enumerate() {
            let p = central.p_dra[t][j];
            if p > 1e-6 && p < agg.p_dra_max - 1e-6 {
                count += 1;
                let tau = central.tau[t][agg.bus - 1];
                worst = worst.max((admm.lambda[t][j] - tau).abs()).max((central.lambda[t][j] - tau).abs());
            }
        }
    }
    (count, worst)
}

fn lmp_consistency(a: &Analog) -> Outcome {
    let (n_analog, gap_analog) = interior_lambda_gap(&a.case, &a.admm, &a.central);
    let (case, prices, forecast) = interior_toy();
    let scen = generate_scenarios(&forecast, &vec![vec![0.8]; forecast.len()], 20, 4).unwrap();
    let central = solve_centralized(&case, &prices, &scen, &ClearingConfig::default()).map_err(|e| e.to_string())?;
    // Termination is primal-only, so the toy's prices are read off a run that
    // has actually converged; the default-tolerance gap is reported alongside.
    let loose = admm_solve(&case, &prices, &scen, &admm_config()).map_err(|e| e.to_string())?;
    let tight = ClearingConfig {
        eps_pri: 1e-8,
        ..admm_config()
    };
    let admm = admm_solve(&case, &prices, &scen, &tight).map_err(|e| e.to_string())?;
    let (n_toy, gap_toy) = interior_lambda_gap(&case, &admm, &central);
    let (_, gap_loose) = interior_lambda_gap(&case, &loose, &central);
    let detail = format!(
        "analog: {n_analog} interior entries, max |λ − τ| {gap_analog:.2e}; toy: {n_toy} of {} entries interior, max {gap_toy:.2e} at eps 1e-8 ({gap_loose:.2e} at eps 1e-4)",
        case.horizon
    );
    if n_analog > 0 && n_toy == case.horizon && gap_analog <= LMP_TOL && gap_toy <= LMP_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Every artifact in `dir` except wall-clock timings.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/wecc6");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let market: Vec<String> = ["case", "prices", "forecast"]
        .iter()
        .flat_map(|k| [format!("--{k}"), data.join(format!("{k}.json")).display().to_string()])
        .collect();
    let mut compared = Vec::new();
    for (cmd, extra) in [
        ("clear", vec!["--mode", "admm", "--samples", "50"]),
        ("evaluate", vec!["--samples", "50", "--eval-samples", "10000"]),
    ] {
        let mut dirs: Vec<PathBuf> = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("{cmd}-{threads}"));
            let o = Command::new(env!("CARGO_BIN_EXE_wind-clearing"))
                .env_remove("WIND_CLEARING_OUT")
                .args(["--threads", threads, cmd])
                .args(&market)
                .args(&extra)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("{cmd} --threads {threads}: {}", String::from_utf8_lossy(&o.stderr)));
            }
            dirs.push(out);
        }
        let (x, y) = (artifacts(&dirs[0]), artifacts(&dirs[1]));
        if x != y {
            let differing: Vec<_> = x.iter().zip(&y).filter(|(a, b)| a != b).map(|(a, _)| a.0.clone()).collect();
            return Err(format!("{cmd}: artifacts differ between 1 and 4 threads: {differing:?}"));
        }
        compared.push(format!("{cmd} ({} files)", x.len()));
    }
    Ok(format!("byte-identical with 1 and 4 threads: {}", compared.join(", ")))
}

fn degenerate_limit() -> Outcome {
    let mut case = wecc6_case(DEFAULT_SEED);
    case.aggregators.clear();
    for g in &mut case.generators {
        g.ramp_up = g.p_max;
        g.ramp_down = g.p_max;
    }
    let mut prices = wecc6_prices();
    prices.sell = prices.buy.clone();
    let forecast = wecc6_forecast();
    let scen = generate_scenarios(&forecast, &vec![vec![0.0; 3]; forecast.len()], 1, DEFAULT_SEED).unwrap();
    let (oracle, slots) = deterministic_oracle(&case, &prices.buy, &forecast, 1.0);
    if !ramps_slack(&case, &slots) {
        return Err("oracle dispatch violates ramps".into());
    }
    let sol = solve_centralized(&case, &prices, &scen, &ClearingConfig::default()).map_err(|e| e.to_string())?;
    let gap = (sol.objective - oracle).abs();
    let detail = format!(
        "solver {:.9} oracle {oracle:.9}, |gap| {gap:.2e} ({:.2e} relative), status {:?}",
        sol.objective,
        gap / (1.0 + oracle.abs()),
        sol.status
    );
    if gap <= ORACLE_TOL && sol.status == SolveStatus::Optimal && close_rel(sol.objective, oracle, ORACLE_TOL) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn report(n: usize, name: &str, outcome: std::thread::Result<Outcome>) -> bool {
    let (pass, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (
            false,
            format!(
                "panicked: {}",
                p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        ),
    };
    println!("criterion {n:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let started = Instant::now();
    let shared = catch_unwind(analog);
    let mut solves = Vec::new();
    let mut ok = true;
    match &shared {
        Ok(a) => {
            solves.push(a.central.clone());
            ok &= report(1, "ADMM/central equivalence", catch_unwind(AssertUnwindSafe(|| equivalence(a, &mut solves))));
            ok &= report(2, "ADMM convergence", catch_unwind(|| convergence(a)));
            ok &= report(3, "evaluated cost ordering", catch_unwind(|| cost_ordering(a)));
            ok &= report(4, "mu monotonicity", catch_unwind(AssertUnwindSafe(|| mu_monotone(a, &mut solves))));
        }
        Err(_) => {
            for (n, name) in [(1, "ADMM/central equivalence"), (2, "ADMM convergence"), (3, "evaluated cost ordering"), (4, "mu monotonicity")] {
                ok &= report(n, name, Ok(Err("analog clearing failed".into())));
            }
        }
    }
    ok &= report(5, "CVaR oracle suite", catch_unwind(cvar_suite));
    ok &= report(6, "hinge/absolute identity", catch_unwind(hinge_identity));
    ok &= report(7, "KKT certification", catch_unwind(AssertUnwindSafe(|| kkt_certification(&solves))));
    match &shared {
        Ok(a) => ok &= report(8, "LMP consistency", catch_unwind(|| lmp_consistency(a))),
        Err(_) => ok &= report(8, "LMP consistency", Ok(Err("analog clearing failed".into()))),
    }
    ok &= report(9, "determinism", catch_unwind(determinism));
    ok &= report(10, "degenerate limit", catch_unwind(degenerate_limit));
    println!("acceptance finished in {:.1} s", started.elapsed().as_secs_f64());
    if !ok {
        std::process::exit(1);
    }
}
