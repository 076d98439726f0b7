use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wind_clearing::bundle::{self, DEFAULT_SEED};
use wind_clearing::clearing::{clear, ClearingConfig, ClearingError, DispatchSolution, Mode, SolveStatus};
use wind_clearing::evaluation::{
    evaluate_dispatch, evaluate_policy, mu_sweep, PolicyKind, PolicySpec, DEFAULT_EVAL_SAMPLES,
};
use wind_clearing::grid::{validate_case, NetworkCase};
use wind_clearing::io::{self, ArtifactDir, ForecastFile, IoError, RunManifest, SolutionArtifact};
use wind_clearing::pricing::{settle, PricingError, RealTimeInputs};
use wind_clearing::risk::{PriceSchedule, RiskConfig, RiskError};
use wind_clearing::scenarios::{
    default_sigma, generate_scenarios, load_scenarios, save_scenarios, ScenarioError, ScenarioSet,
    DEFAULT_SIGMA_FLOOR, DEFAULT_SIGMA_FRACTION,
};

#[derive(Parser)]
#[command(name = "wind-clearing", version, about = "Stochastic day-ahead market clearing with wind risk")]
struct Cli {
    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a case file and list every violation.
    Validate { case: PathBuf },
    /// Clear the day-ahead market.
    Clear(ClearArgs),
    /// Monte Carlo cost comparison of wind policies.
    Evaluate(EvaluateArgs),
    /// Clear over a grid of risk weights.
    SweepMu(SweepArgs),
    /// Two-settlement payments for a cleared solution.
    Settle(SettleArgs),
    /// Write the WECC-6 analog case, prices and forecast.
    Bundle {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, env = "WIND_CLEARING_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Draw wind scenarios and save them.
    Scenarios {
        #[command(flatten)]
        wind: WindArgs,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone)]
struct MarketArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    prices: PathBuf,
}

#[derive(Args, Clone)]
struct WindArgs {
    /// Forecast file (`forecast`, optional `sigma`).
    #[arg(long)]
    forecast: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "central")]
    mode: ModeArg,
    #[arg(long, default_value_t = 35.0, value_parser = positive)]
    rho: f64,
    #[arg(long, default_value_t = 0.95, value_parser = unit_open)]
    beta: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    mu: f64,
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    eps_pri: f64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Central,
    Admm,
}

#[derive(Args)]
struct ClearArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[command(flatten)]
    wind: WindArgs,
    /// Use a saved scenario file instead of drawing from the forecast.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, env = "WIND_CLEARING_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[command(flatten)]
    wind: WindArgs,
    /// Cleared cvar solution to evaluate instead of solving it again.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "cvar,expected-wind,no-wind")]
    policies: Vec<PolicyKind>,
    #[arg(long, default_value_t = DEFAULT_EVAL_SAMPLES as u64, value_parser = clap::value_parser!(u64).range(1..))]
    eval_samples: u64,
    #[arg(long, default_value_t = DEFAULT_SEED + 1)]
    eval_seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, env = "WIND_CLEARING_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[command(flatten)]
    wind: WindArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4,8", value_parser = positive)]
    mu_grid: Vec<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, env = "WIND_CLEARING_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SettleArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long)]
    solution: PathBuf,
    /// Real-time prices, quantities and realized wind; omitted fields default
    /// to the day-ahead values.
    #[arg(long)]
    real_time: Option<PathBuf>,
    #[arg(long, env = "WIND_CLEARING_OUT", default_value = "out")]
    out: PathBuf,
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

/// 0 success, 1 domain or validation failure, 2 I/O failure, 3 solver failure.
enum Failure {
    Domain(String),
    Io(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Io(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Domain(m) | Failure::Io(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::DigestMismatch { .. } => Failure::Domain(e.to_string()),
            _ => Failure::Io(e.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } | ScenarioError::Parse { .. } => Failure::Io(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<ClearingError> for Failure {
    fn from(e: ClearingError) -> Self {
        match e {
            ClearingError::Solver { .. } | ClearingError::Subproblem { .. } | ClearingError::Qp(_) => {
                Failure::Solver(e.to_string())
            }
            ClearingError::Scenario(s) => s.into(),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<PricingError> for Failure {
    fn from(e: PricingError) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<RiskError> for Failure {
    fn from(e: RiskError) -> Self {
        Failure::Domain(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate { case } => cmd_validate(&case),
        Command::Clear(a) => cmd_clear(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SweepMu(a) => cmd_sweep(a),
        Command::Settle(a) => cmd_settle(a),
        Command::Bundle { seed, out } => cmd_bundle(seed, &out),
        Command::Scenarios { wind, output } => {
            let set = draw_scenarios(&wind)?;
            save_scenarios(&set, &output)?;
            println!("wrote {} scenarios to {}", set.n_samples(), output.display());
            Ok(0)
        }
    }
}

fn cmd_validate(path: &Path) -> Result<u8, Failure> {
    let case = io::load_case(path)?;
    let violations = validate_case(&case);
    if violations.is_empty() {
        println!(
            "{}: ok ({} buses, {} generators, {} wind farms, {} aggregators, {} appliances)",
            path.display(),
            case.buses.len(),
            case.generators.len(),
            case.wind_farms.len(),
            case.aggregators.len(),
            case.appliance_count()
        );
        return Ok(0);
    }
    for v in &violations {
        println!("{v}");
    }
    println!("{}: {} violation(s)", path.display(), violations.len());
    Ok(1)
}

fn load_market(m: &MarketArgs) -> Result<(NetworkCase, PriceSchedule), Failure> {
    Ok((io::load_case(&m.case)?, io::load_prices(&m.prices)?))
}

fn forecast_sigma(f: &ForecastFile) -> wind_clearing::SlotMatrix {
    f.sigma
        .clone()
        .unwrap_or_else(|| default_sigma(&f.forecast, DEFAULT_SIGMA_FRACTION, DEFAULT_SIGMA_FLOOR))
}

fn draw_scenarios(w: &WindArgs) -> Result<ScenarioSet, Failure> {
    let f = io::load_forecast(&w.forecast)?;
    Ok(generate_scenarios(&f.forecast, &forecast_sigma(&f), w.samples as usize, w.seed)?)
}

fn config(s: &SolverArgs) -> ClearingConfig {
    ClearingConfig {
        risk: RiskConfig {
            beta: s.beta,
            mu: s.mu,
        },
        rho: s.rho,
        eps_pri: s.eps_pri,
        max_admm_iter: s.max_iter as usize,
        mode: match s.mode {
            ModeArg::Central => Mode::Central,
            ModeArg::Admm => Mode::Admm,
        },
        ..ClearingConfig::default()
    }
}

fn record_solver(m: &mut RunManifest, cfg: &ClearingConfig) {
    m.param("mode", cfg.mode)
        .param("rho", cfg.rho)
        .param("beta", cfg.risk.beta)
        .param("mu", cfg.risk.mu)
        .param("eps_pri", cfg.eps_pri)
        .param("max_admm_iter", cfg.max_admm_iter)
        .param("qp", cfg.qp);
}

fn record_wind(m: &mut RunManifest, w: &WindArgs, market: &MarketArgs) -> Result<(), Failure> {
    m.param("samples", w.samples).seed("scenarios", w.seed);
    m.input(&market.case)?.input(&market.prices)?.input(&w.forecast)?;
    Ok(())
}

fn write_solution(dir: &mut ArtifactDir, case: &NetworkCase, sol: &DispatchSolution) -> Result<(), Failure> {
    dir.json("solution.json", &SolutionArtifact::new(case, sol.clone()))?;
    dir.text("p_g.csv", &io::matrix_csv("gen", &sol.p_g))?;
    dir.text("p_w.csv", &io::matrix_csv("farm", &sol.p_w))?;
    dir.text("p_dra.csv", &io::matrix_csv("agg", &sol.p_dra))?;
    dir.text("theta.csv", &io::matrix_csv("bus", &sol.theta))?;
    dir.text("lmp.csv", &io::matrix_csv("bus", &sol.tau))?;
    dir.text("lambda.csv", &io::matrix_csv("agg", &sol.lambda))?;
    dir.text("appliances.csv", &io::appliance_csv(sol))?;
    if !sol.trace.is_empty() {
        dir.text("trace.csv", &io::trace_csv(&sol.trace))?;
        dir.timing("trace_wall_ms", sol.trace.iter().map(|r| r.wall_ms).collect::<Vec<_>>());
    }
    Ok(())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn cmd_clear(a: ClearArgs) -> Result<u8, Failure> {
    let (case, prices) = load_market(&a.market)?;
    let cfg = config(&a.solver);
    let mut manifest = RunManifest::new("clear");
    record_solver(&mut manifest, &cfg);
    let scen = match &a.scenarios {
        Some(p) => {
            manifest.input(p)?;
            load_scenarios(p)?
        }
        None => {
            record_wind(&mut manifest, &a.wind, &a.market)?;
            draw_scenarios(&a.wind)?
        }
    };
    if a.scenarios.is_some() {
        manifest.input(&a.market.case)?.input(&a.market.prices)?;
    }
    let mut dir = ArtifactDir::create(&a.out)?;
    let t = Instant::now();
    let sol = clear(&case, &prices, &scen, &cfg)?;
    dir.timing("clear_ms", ms(t));
    write_solution(&mut dir, &case, &sol)?;
    let path = dir.finish(manifest)?;
    println!(
        "{:?} {:?}: objective {:.6}, generation {:.6}, utility {:.6}, cvar term {:.6}, wind {:.4} MWh, {} iteration(s)",
        sol.mode,
        sol.status,
        sol.objective,
        sol.generation_cost,
        sol.utility,
        sol.cvar_term,
        sol.total_wind(),
        sol.iterations
    );
    println!("manifest: {}", path.display());
    Ok(if sol.status == SolveStatus::MaxIter { 3 } else { 0 })
}

#[derive(Serialize)]
struct PolicySummary {
    policy: &'static str,
    mean: f64,
    std: f64,
    q25: f64,
    q50: f64,
    q75: f64,
    generation_cost: f64,
    total_wind: f64,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<u8, Failure> {
    let (case, prices) = load_market(&a.market)?;
    let cfg = config(&a.solver);
    let f = io::load_forecast(&a.wind.forecast)?;
    let training = draw_scenarios(&a.wind)?;
    let eval = generate_scenarios(&f.forecast, &forecast_sigma(&f), a.eval_samples as usize, a.eval_seed)?;
    let mut manifest = RunManifest::new("evaluate");
    record_solver(&mut manifest, &cfg);
    record_wind(&mut manifest, &a.wind, &a.market)?;
    manifest
        .param("eval_samples", a.eval_samples)
        .param("policies", a.policies.iter().map(|p| p.name()).collect::<Vec<_>>())
        .seed("evaluation", a.eval_seed);
    let artifact = match &a.solution {
        Some(p) => {
            manifest.input(p)?;
            let art: SolutionArtifact = io::read_json(p)?;
            art.check_case(&case)?;
            Some(art)
        }
        None => None,
    };
    let mut dir = ArtifactDir::create(&a.out)?;
    let mut summaries = Vec::new();
    let mut dists = Vec::new();
    for &kind in &a.policies {
        let t = Instant::now();
        let dist = match (&artifact, kind) {
            (Some(art), PolicyKind::CvarRiskLimiting) => {
                let d = evaluate_dispatch(kind, &art.solution, &prices, &eval)?;
                (d, art.solution.generation_cost, art.solution.total_wind())
            }
            _ => {
                let (_, ev) = evaluate_policy(&PolicySpec::new(kind, cfg.clone()), &case, &prices, &training, &eval)?;
                (ev.distribution, ev.generation_cost, ev.total_wind)
            }
        };
        dir.timing(&format!("{}_ms", kind.name()), ms(t));
        let (d, generation_cost, total_wind) = dist;
        summaries.push(PolicySummary {
            policy: kind.name(),
            mean: d.mean,
            std: d.std,
            q25: d.quantile(0.25),
            q50: d.quantile(0.5),
            q75: d.quantile(0.75),
            generation_cost,
            total_wind,
        });
        dists.push((kind.name(), d));
    }
    let mut csv = String::from("policy,mean,std,q25,q50,q75,generation_cost,total_wind\n");
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.policy, s.mean, s.std, s.q25, s.q50, s.q75, s.generation_cost, s.total_wind
        ));
        println!("{:<14} mean {:>14.4}  std {:>10.4}", s.policy, s.mean, s.std);
    }
    dir.json("summary.json", &summaries)?;
    dir.text("summary.csv", &csv)?;
    let refs: Vec<_> = dists.iter().map(|(n, d)| (*n, d)).collect();
    dir.text("cdf.csv", &io::cdf_csv(&refs))?;
    let path = dir.finish(manifest)?;
    println!("manifest: {}", path.display());
    Ok(0)
}

fn cmd_sweep(a: SweepArgs) -> Result<u8, Failure> {
    let (case, prices) = load_market(&a.market)?;
    let cfg = config(&a.solver);
    let scen = draw_scenarios(&a.wind)?;
    let mut manifest = RunManifest::new("sweep-mu");
    record_solver(&mut manifest, &cfg);
    record_wind(&mut manifest, &a.wind, &a.market)?;
    manifest.param("mu_grid", &a.mu_grid);
    let mut dir = ArtifactDir::create(&a.out)?;
    let t = Instant::now();
    let rows = mu_sweep(&case, &prices, &scen, &a.mu_grid, &cfg)?;
    dir.timing("sweep_ms", ms(t));
    dir.text("sweep.csv", &io::sweep_csv(&rows))?;
    dir.json("sweep.json", &rows)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    for r in &rows {
        match &r.error {
            None => println!(
                "mu {:>6}: generation {:>14.4}  cvar term {:>12.4}  wind {:>10.4}",
                r.mu, r.generation_cost, r.cvar_term, r.total_wind
            ),
            Some(e) => println!("mu {:>6}: failed: {e}", r.mu),
        }
    }
    let path = dir.finish(manifest)?;
    println!("manifest: {}", path.display());
    Ok(if failed > 0 { 3 } else { 0 })
}

fn cmd_settle(a: SettleArgs) -> Result<u8, Failure> {
    let (case, prices) = load_market(&a.market)?;
    let art: SolutionArtifact = io::read_json(&a.solution)?;
    art.check_case(&case)?;
    let mut manifest = RunManifest::new("settle");
    manifest.input(&a.market.case)?.input(&a.market.prices)?.input(&a.solution)?;
    let rt = match &a.real_time {
        Some(p) => {
            manifest.input(p)?;
            io::read_json(p)?
        }
        None => RealTimeInputs::default(),
    };
    let report = settle(&case, &art.solution, &rt, &prices)?;
    let mut dir = ArtifactDir::create(&a.out)?;
    dir.json("settlement.json", &report)?;
    dir.text("settlement.csv", &report.to_csv())?;
    print!("{}", report.to_csv());
    let path = dir.finish(manifest)?;
    println!("manifest: {}", path.display());
    Ok(0)
}

fn cmd_bundle(seed: u64, out: &Path) -> Result<u8, Failure> {
    let case = bundle::wecc6_case(seed);
    io::write_json(&out.join("case.json"), &case)?;
    io::write_json(&out.join("prices.json"), &bundle::wecc6_prices())?;
    io::write_json(
        &out.join("forecast.json"),
        &ForecastFile {
            forecast: bundle::wecc6_forecast(),
            sigma: None,
        },
    )?;
    println!("wrote case.json, prices.json, forecast.json to {}", out.display());
    Ok(0)
}
