//! ADMM between the ISO (generation, wind, network, risk) and the
//! aggregators (appliance schedules), coupled through `P_DRA = Σ p`.
//!
//! Messages carry the raw multiplier of `P_DRA − Σ p = 0`; the solution
//! reports its negation, see the module-level note in `clearing`.

use std::time::Instant;

use rayon::prelude::*;

use crate::grid::{build_flow_matrices, Aggregator, NetworkCase};
use crate::qp::{solve_qp, QpBuilder, QpSettings, QpStatus, QuadraticProgram};
use crate::risk::{PriceSchedule, RiskConfig};
use crate::scenarios::ScenarioSet;
use crate::SlotMatrix;

use super::assemble::{add_appliances, add_iso_block, IsoLayout, RiskInputs};
use super::{
    check_inputs, cvar_term, generation_cost, read, ApplianceSchedule, ClearingConfig, ClearingError,
    Diagnostics, DispatchSolution, Mode, SolveStatus, TraceRow, WindTreatment,
};

/// The only payloads that cross the ISO/aggregator boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum AdmmMessage {
    /// ISO → aggregator: multipliers λ_j and targets P_DRA,j over the horizon.
    Dispatch {
        aggregator: usize,
        multipliers: Vec<f64>,
        targets: Vec<f64>,
    },
    /// Aggregator → ISO: per-slot schedule totals and the aggregate utility.
    Schedule {
        aggregator: usize,
        totals: Vec<f64>,
        utility: f64,
    },
}

/// Delivers one round of dispatch messages and returns the replies in
/// aggregator order.
pub trait Transport {
    fn exchange(&mut self, dispatch: Vec<AdmmMessage>) -> Result<Vec<AdmmMessage>, ClearingError>;
}

/// ISO-side data: the case without any user or appliance records.
pub struct IsoProblem {
    case: NetworkCase,
    qp: QuadraticProgram,
    layout: IsoLayout,
    risk: RiskConfig,
    rho: f64,
    settings: QpSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsoIterate {
    pub p_g: SlotMatrix,
    pub p_w: SlotMatrix,
    pub p_dra: SlotMatrix,
    pub theta: SlotMatrix,
    pub eta: f64,
    pub u: Vec<f64>,
    pub tau: SlotMatrix,
    pub generation_cost: f64,
    pub cvar_term: f64,
    pub kkt: f64,
    pub status: QpStatus,
}

impl IsoProblem {
    pub fn new(
        case: &NetworkCase,
        prices: &PriceSchedule,
        scenarios: &ScenarioSet,
        config: &ClearingConfig,
    ) -> Result<Self, ClearingError> {
        config.validate()?;
        let mut public = case.clone();
        for a in &mut public.aggregators {
            a.users.clear();
        }
        let scen = matches!(config.wind, WindTreatment::Stochastic).then_some(scenarios);
        check_inputs(&public, prices, scen)?;
        let flows = build_flow_matrices(&public)?;
        let mut b = QpBuilder::new();
        let risk = scen.map(|s| RiskInputs {
            prices,
            scenarios: s,
            risk: config.risk,
        });
        let layout = add_iso_block(&mut b, &public, &flows, &config.wind, risk)?;
        Ok(Self {
            case: public,
            qp: b.build(),
            layout,
            risk: config.risk,
            rho: config.rho,
            settings: config.qp,
        })
    }

    pub fn horizon(&self) -> usize {
        self.case.horizon
    }

    pub fn n_aggregators(&self) -> usize {
        self.case.aggregators.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n_variables(&self) -> usize {
        self.qp.n()
    }
}

/// Minimizes generation cost + μ·CVaR surrogate + Σλ P_DRA + (ρ/2)Σ(P_DRA − p̂)²
/// over the ISO block. `lambda` is the raw multiplier, `p_hat` the latest
/// aggregator totals, both `[slot][aggregator]`.
pub fn iso_subproblem(
    iso: &IsoProblem,
    lambda: &SlotMatrix,
    p_hat: &SlotMatrix,
) -> Result<IsoIterate, ClearingError> {
    let (t_len, na) = (iso.horizon(), iso.n_aggregators());
    super::assemble::check_shape(lambda, t_len, na, "multipliers")?;
    super::assemble::check_shape(p_hat, t_len, na, "aggregator totals")?;
    let mut qp = iso.qp.clone();
    for t in 0..t_len {
        for j in 0..na {
            let k = iso.layout.p_dra[t][j];
            qp.c[k] += lambda[t][j] - iso.rho * p_hat[t][j];
            qp.q.push(k, k, iso.rho);
            qp.offset += 0.5 * iso.rho * p_hat[t][j] * p_hat[t][j];
        }
    }
    let sol = solve_qp(&qp, &iso.settings)?;
    if !matches!(sol.status, QpStatus::Optimal | QpStatus::Inaccurate) {
        return Err(ClearingError::Solver {
            context: "ISO subproblem".into(),
            status: sol.status,
        });
    }
    let lay = &iso.layout;
    let x = &sol.x;
    let p_g = read(x, &lay.p_g);
    let eta = lay.eta.map_or(0.0, |k| x[k]);
    let u: Vec<f64> = lay.u.iter().map(|&k| x[k]).collect();
    Ok(IsoIterate {
        generation_cost: generation_cost(&iso.case, &p_g),
        cvar_term: cvar_term(eta, &u, iso.risk.beta),
        p_g,
        p_w: read(x, &lay.p_w),
        p_dra: read(x, &lay.p_dra),
        theta: read(x, &lay.theta),
        tau: read(&sol.duals_eq, &lay.nodal_rows),
        eta,
        u,
        kkt: sol.kkt.max(),
        status: sol.status,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorIterate {
    /// Per appliance, in user/appliance order, over the full horizon.
    pub schedules: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    pub utility: f64,
    pub kkt: f64,
    pub status: QpStatus,
}

/// Minimizes −Σλ_t q_t − ΣU + (ρ/2)Σ(q_t − P_t)² with `q_t = Σ p_t` over the
/// aggregator's appliance sets. `lambda` is the raw multiplier.
pub fn aggregator_subproblem(
    agg: &Aggregator,
    horizon: usize,
    lambda: &[f64],
    target: &[f64],
    rho: f64,
    settings: &QpSettings,
) -> Result<AggregatorIterate, ClearingError> {
    if lambda.len() != horizon || target.len() != horizon {
        return Err(ClearingError::Dimension(format!(
            "aggregator inputs must have {horizon} slots"
        )));
    }
    if agg.appliance_count() == 0 {
        return Ok(AggregatorIterate {
            schedules: Vec::new(),
            totals: vec![0.0; horizon],
            utility: 0.0,
            kkt: 0.0,
            status: QpStatus::Optimal,
        });
    }
    let mut b = QpBuilder::new();
    let q: Vec<usize> = (0..horizon).map(|t| b.free_var(format!("q[{t}]"))).collect();
    let (vars, per_slot) = add_appliances(&mut b, 0, agg, horizon)?;
    for (t, terms) in per_slot.into_iter().enumerate() {
        let mut row = vec![(q[t], 1.0)];
        row.extend(terms.into_iter().map(|(k, a)| (k, -a)));
        b.eq(row, 0.0);
        b.linear(q[t], -lambda[t]);
        b.square_of_sum(&[(q[t], 1.0)], -target[t], 0.5 * rho);
    }
    let sol = solve_qp(&b.build(), settings)?;
    if !matches!(sol.status, QpStatus::Optimal | QpStatus::Inaccurate) {
        return Err(ClearingError::Solver {
            context: "aggregator subproblem".into(),
            status: sol.status,
        });
    }
    let schedules: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| v.slots.iter().map(|k| k.map_or(0.0, |k| sol.x[k])).collect())
        .collect();
    let utility = agg
        .appliances()
        .zip(&schedules)
        .map(|(a, s)| a.utility.value(s))
        .sum();
    let totals = (0..horizon)
        .map(|t| schedules.iter().map(|s| s[t]).sum())
        .collect();
    Ok(AggregatorIterate {
        schedules,
        totals,
        utility,
        kkt: sol.kkt.max(),
        status: sol.status,
    })
}

/// λ(k+1) = λ(k) + ρ(P_DRA − Σp), elementwise over `[slot][aggregator]`.
pub fn dual_update(lambda: &SlotMatrix, p_dra: &SlotMatrix, sums: &SlotMatrix, rho: f64) -> SlotMatrix {
    lambda
        .iter()
        .zip(p_dra)
        .zip(sums)
        .map(|((l, p), s)| {
            l.iter()
                .zip(p)
                .zip(s)
                .map(|((l, p), s)| l + rho * (p - s))
                .collect()
        })
        .collect()
}

/// ξ = ‖P_DRA − Σp‖₂ over all slots and aggregators.
pub fn primal_residual(p_dra: &SlotMatrix, sums: &SlotMatrix) -> f64 {
    p_dra
        .iter()
        .zip(sums)
        .flat_map(|(p, s)| p.iter().zip(s).map(|(a, b)| (a - b) * (a - b)))
        .sum::<f64>()
        .sqrt()
}

/// In-process aggregators, each holding its own users' private data and
/// solving its subproblem on the rayon pool.
pub struct LocalAggregators {
    horizon: usize,
    rho: f64,
    settings: QpSettings,
    aggregators: Vec<Aggregator>,
    last: Vec<Option<AggregatorIterate>>,
    solves: usize,
    max_kkt: f64,
    inaccurate: bool,
}

impl LocalAggregators {
    pub fn new(case: &NetworkCase, rho: f64, settings: QpSettings) -> Self {
        Self {
            horizon: case.horizon,
            rho,
            settings,
            aggregators: case.aggregators.clone(),
            last: vec![None; case.aggregators.len()],
            solves: 0,
            max_kkt: 0.0,
            inaccurate: false,
        }
    }

    /// Appliance schedules from the most recent exchange.
    pub fn schedules(&self) -> Vec<ApplianceSchedule> {
        let mut out = Vec::new();
        for (j, agg) in self.aggregators.iter().enumerate() {
            let Some(it) = &self.last[j] else { continue };
            let mut flat = it.schedules.iter();
            for (r, user) in agg.users.iter().enumerate() {
                for s in 0..user.appliances.len() {
                    out.push(ApplianceSchedule {
                        aggregator: j,
                        user: r,
                        appliance: s,
                        schedule: flat.next().cloned().unwrap_or_default(),
                    });
                }
            }
        }
        out
    }
}

impl Transport for LocalAggregators {
    fn exchange(&mut self, dispatch: Vec<AdmmMessage>) -> Result<Vec<AdmmMessage>, ClearingError> {
        let jobs: Vec<(usize, Vec<f64>, Vec<f64>)> = dispatch
            .into_iter()
            .map(|m| match m {
                AdmmMessage::Dispatch {
                    aggregator,
                    multipliers,
                    targets,
                } if aggregator < self.aggregators.len() => Ok((aggregator, multipliers, targets)),
                other => Err(ClearingError::Transport(format!("unexpected message {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
        let (horizon, rho, settings) = (self.horizon, self.rho, self.settings);
        let aggs = &self.aggregators;
        let results: Vec<(usize, Result<AggregatorIterate, ClearingError>)> = jobs
            .par_iter()
            .map(|(j, lam, tgt)| {
                (*j, aggregator_subproblem(&aggs[*j], horizon, lam, tgt, rho, &settings))
            })
            .collect();
        let mut replies = Vec::with_capacity(results.len());
        for (j, res) in results {
            let it = res?;
            self.solves += usize::from(aggs[j].appliance_count() > 0);
            self.max_kkt = self.max_kkt.max(it.kkt);
            self.inaccurate |= it.status == QpStatus::Inaccurate;
            replies.push(AdmmMessage::Schedule {
                aggregator: j,
                totals: it.totals.clone(),
                utility: it.utility,
            });
            self.last[j] = Some(it);
        }
        Ok(replies)
    }
}

/// Result of the coordinator loop, before appliance schedules are attached.
struct Best {
    iso: IsoIterate,
    dispatch: Vec<AdmmMessage>,
    lambda: SlotMatrix,
    utility: f64,
    xi: f64,
    iteration: usize,
}

/// Runs the coordinator loop over any transport. The returned solution has no
/// appliance schedules, since those never reach the ISO; the final round of
/// dispatch messages is replayed so the transport holds the reported iterate.
pub fn admm_solve_with(
    iso: &IsoProblem,
    transport: &mut dyn Transport,
    config: &ClearingConfig,
) -> Result<DispatchSolution, ClearingError> {
    config.validate()?;
    let (t_len, na) = (iso.horizon(), iso.n_aggregators());
    let rho = iso.rho;
    let mut lambda = vec![vec![0.0; na]; t_len];
    let mut p_hat = vec![vec![0.0; na]; t_len];
    let mut trace = Vec::new();
    let mut best: Option<Best> = None;
    let mut converged = false;
    let mut qp_solves = 0;
    let mut max_kkt: f64 = 0.0;
    let start = Instant::now();
    let has_risk = iso.layout.eta.is_some();

    for k in 0..config.max_admm_iter {
        let wrap = |e: ClearingError| ClearingError::Subproblem {
            iteration: k,
            source: Box::new(e),
        };
        let x = iso_subproblem(iso, &lambda, &p_hat).map_err(wrap)?;
        qp_solves += 1;
        max_kkt = max_kkt.max(x.kkt);
        let dispatch: Vec<AdmmMessage> = (0..na)
            .map(|j| AdmmMessage::Dispatch {
                aggregator: j,
                multipliers: (0..t_len).map(|t| lambda[t][j]).collect(),
                targets: (0..t_len).map(|t| x.p_dra[t][j]).collect(),
            })
            .collect();
        let replies = transport.exchange(dispatch.clone()).map_err(wrap)?;
        let mut sums = vec![vec![0.0; na]; t_len];
        let mut utility = 0.0;
        for msg in replies {
            match msg {
                AdmmMessage::Schedule {
                    aggregator,
                    totals,
                    utility: u,
                } if aggregator < na && totals.len() == t_len => {
                    for t in 0..t_len {
                        sums[t][aggregator] = totals[t];
                    }
                    utility += u;
                }
                other => {
                    return Err(wrap(ClearingError::Transport(format!(
                        "unexpected reply {other:?}"
                    ))))
                }
            }
        }
        let xi = primal_residual(&x.p_dra, &sums);
        let dual_res = rho * primal_residual(&sums, &p_hat);
        let next_lambda = dual_update(&lambda, &x.p_dra, &sums, rho);
        let objective =
            x.generation_cost - utility + if has_risk { iso.risk.mu * x.cvar_term } else { 0.0 };
        trace.push(TraceRow {
            iteration: k + 1,
            objective,
            primal_residual: xi,
            dual_residual: dual_res,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("admm k={} obj={objective:.6} xi={xi:.3e} s={dual_res:.3e}", k + 1);
        let better = best.as_ref().is_none_or(|b| xi < b.xi);
        converged = xi <= config.eps_pri;
        if better || converged {
            best = Some(Best {
                iso: x,
                dispatch,
                lambda: next_lambda.clone(),
                utility,
                xi,
                iteration: k + 1,
            });
        }
        lambda = next_lambda;
        p_hat = sums;
        if converged {
            break;
        }
    }

    let best = best.expect("at least one iteration");
    if !converged {
        // Put the transport back on the reported iterate.
        transport.exchange(best.dispatch.clone())?;
        log::warn!(
            "ADMM hit the iteration cap ({}); best primal residual {:.3e} at iteration {}",
            config.max_admm_iter,
            best.xi,
            best.iteration
        );
    }
    let x = best.iso;
    let status = if !converged {
        SolveStatus::MaxIter
    } else if x.status == QpStatus::Inaccurate {
        SolveStatus::Inaccurate
    } else {
        SolveStatus::Optimal
    };
    let objective =
        x.generation_cost - best.utility + if has_risk { iso.risk.mu * x.cvar_term } else { 0.0 };
    Ok(DispatchSolution {
        mode: Mode::Admm,
        status,
        p_g: x.p_g,
        p_w: x.p_w,
        p_dra: x.p_dra,
        theta: x.theta,
        appliances: Vec::new(),
        eta: x.eta,
        u: x.u,
        lambda: best
            .lambda
            .iter()
            .map(|r| r.iter().map(|v| -v).collect())
            .collect(),
        tau: x.tau,
        objective,
        generation_cost: x.generation_cost,
        utility: best.utility,
        cvar_term: x.cvar_term,
        risk: iso.risk,
        iterations: trace.len(),
        trace,
        diagnostics: Diagnostics {
            qp_solves,
            max_kkt_residual: max_kkt,
            n_variables: iso.n_variables(),
            n_epigraph: iso.layout.n_epigraph,
        },
    })
}

/// Algorithm: λ(0) = 0 and p(0) = 0; alternate the ISO update, the parallel
/// aggregator updates and the dual step until ξ ≤ `eps_pri`.
pub fn admm_solve(
    case: &NetworkCase,
    prices: &PriceSchedule,
    scenarios: &ScenarioSet,
    config: &ClearingConfig,
) -> Result<DispatchSolution, ClearingError> {
    check_inputs(case, prices, None)?;
    let iso = IsoProblem::new(case, prices, scenarios, config)?;
    let mut local = LocalAggregators::new(case, config.rho, config.qp);
    let mut sol = admm_solve_with(&iso, &mut local, config)?;
    sol.appliances = local.schedules();
    sol.diagnostics.qp_solves += local.solves;
    sol.diagnostics.max_kkt_residual = sol.diagnostics.max_kkt_residual.max(local.max_kkt);
    if local.inaccurate && sol.status == SolveStatus::Optimal {
        sol.status = SolveStatus::Inaccurate;
    }
    Ok(sol)
}
