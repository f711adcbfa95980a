//! Receding-horizon auction campaign: schedules the auctions over the
//! horizon, assembles per-auction participant pools (new arrivals plus
//! rebased vehicles), grants air credits, runs the chosen mechanism against
//! the remaining capacity, settles payments with budget carryover, and
//! accumulates the campaign metrics.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentProblem, VehicleRequest};
use crate::clock::{run_clock_auction, BidMode, DEFAULT_ROUND_CAP};
use crate::error::CampaignError;
use crate::market::{run_algorithm1, ConvergenceReport, SolverConfig};
use crate::rounding::{
    metric_mce_after_integral, rank_vehicles, run_algorithm2, AgentOutcome, AllocationStatus,
};
use crate::scenario::{build_menu, LoadedScenario, RequestSpec};
use crate::verify::check_integral_safety;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Fisher,
    ClockBudget,
    ClockProfit,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mechanism::Fisher => "fisher",
            Mechanism::ClockBudget => "clock-budget",
            Mechanism::ClockProfit => "clock-profit",
        };
        f.write_str(s)
    }
}

/// Decision time steps: auction `i` (1-based) is decided at
/// `(i - 1) * floor(T / I) + 1`.
pub fn auction_times(horizon: u32, auctions: u32) -> Result<Vec<u32>, CampaignError> {
    if auctions > horizon || auctions == 0 {
        return Err(CampaignError::TooManyAuctions { auctions, horizon });
    }
    let stride = horizon / auctions;
    Ok((1..=auctions).map(|i| (i - 1) * stride + 1).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub index: u32,
    pub time_step: u32,
    pub pool_size: usize,
    pub preferred: usize,
    pub delayed: usize,
    pub dropped: usize,
    pub pool_rebased_once: usize,
    pub pool_rebased_twice: usize,
    pub mce: f64,
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub max_price: f64,
}

/// Table-style campaign summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub scenario: String,
    pub mechanism: Mechanism,
    pub capacity_fraction: f64,
    pub auctions: u32,
    pub seed: u64,
    pub num_agents: usize,
    pub num_times_rebased: usize,
    pub num_delayed: usize,
    pub avg_delay_steps: f64,
    pub num_rebased_agents: usize,
    pub avg_times_rebased: f64,
    pub num_never_allocated: usize,
    pub num_preferred: usize,
    pub total_inner_iterations: usize,
    pub max_mce: f64,
    pub all_converged: bool,
}

/// Per-auction artifact with everything needed to re-verify the outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuctionArtifact {
    pub index: u32,
    pub time_step: u32,
    pub requests: Vec<StoredRequest>,
    /// Fractional demands from the equilibrium step (fisher mode only).
    pub fractional: Option<Vec<crate::agent::RouteSpaceDemand>>,
    /// Sparse nonzero prices over constrained edges at settlement.
    pub prices: Vec<(u32, f64)>,
    pub removed: Vec<u32>,
    pub outcomes: Vec<AgentOutcome>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredRequest {
    pub id: String,
    pub budget: f64,
    pub drop_value: f64,
    pub outside_value: f64,
    pub preferred: usize,
    pub rebase_count: u8,
    pub routes: Vec<StoredRoute>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredRoute {
    pub value: f64,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub summary: CampaignSummary,
    pub records: Vec<AuctionRecord>,
    pub artifacts: Vec<AuctionArtifact>,
    pub traces: Vec<Option<ConvergenceReport>>,
    pub final_budgets: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AgentPhase {
    Waiting,
    Allocated { delay: u32 },
    NeverAllocated,
}

struct AgentState<'a> {
    spec: &'a RequestSpec,
    budget: f64,
    rebases: u8,
    /// Accumulated departure shift from rebasing into later windows.
    rebase_shift: u32,
    baseline_departure: Option<u32>,
    phase: AgentPhase,
}

pub struct RunOptions {
    pub mechanism: Mechanism,
    pub auctions: Option<u32>,
    pub seed: Option<u64>,
    pub solver: Option<SolverConfig>,
    pub round_cap: usize,
    /// Emit per-iteration traces (fisher only).
    pub keep_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mechanism: Mechanism::Fisher,
            auctions: None,
            seed: None,
            solver: None,
            round_cap: DEFAULT_ROUND_CAP,
            keep_traces: true,
        }
    }
}

/// Default tolerances as fractions of their analytic maxima. The
/// complementarity maximum assumes every constrained edge priced at the
/// largest budget spread over the shortest route and congested by its full
/// capacity; the individual-constraint and expected-allocation maxima are
/// one.
pub fn default_tolerances(
    budgets: &[f64],
    min_route_len: usize,
    caps: &[f64],
    active: Option<&[bool]>,
) -> (f64, f64, f64) {
    let max_budget = budgets.iter().cloned().fold(0.0, f64::max).max(1.0);
    let p_cap = max_budget / min_route_len.max(1) as f64;
    let sq: Vec<f64> = caps
        .iter()
        .enumerate()
        .filter(|(e, _)| active.map_or(true, |a| a[*e]))
        .map(|(_, &l)| (p_cap * l) * (p_cap * l))
        .collect();
    let ce_max = crate::util::pairwise_sum(&sq).sqrt().max(1e-9);
    (1e-3 * ce_max, 1e-4, 1e-3)
}

pub fn run_campaign(
    scenario: &LoadedScenario,
    opts: &RunOptions,
) -> Result<CampaignResult, CampaignError> {
    let graph = &scenario.graph;
    let horizon = graph.horizon;
    let auctions = opts.auctions.unwrap_or(scenario.file.campaign.auctions);
    let times = auction_times(horizon, auctions)?;
    let seed = opts.seed.unwrap_or(scenario.file.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_solver = opts.solver.clone().unwrap_or_else(|| scenario.solver_config());
    let p_o = base_solver.outside_price;

    let mut caps_rem = graph.capacities.clone();
    let mut states: Vec<AgentState> = scenario
        .file
        .requests
        .iter()
        .map(|spec| AgentState {
            spec,
            budget: spec.initial_credits.unwrap_or(0.0),
            rebases: 0,
            rebase_shift: 0,
            baseline_departure: None,
            phase: AgentPhase::Waiting,
        })
        .collect();

    // Arrival windows: auction i takes arrivals in (t_{i-1}, t_i]; the last
    // auction also absorbs the tail of the stream.
    let mut pool_of: Vec<Vec<usize>> = vec![Vec::new(); auctions as usize];
    {
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by_key(|&i| (states[i].spec.arrival_step, states[i].spec.id.clone()));
        for i in order {
            let a = states[i].spec.arrival_step;
            // arrivals after the last decision fall to the final auction
            let slot = times.iter().position(|&t| a <= t).unwrap_or(times.len() - 1);
            pool_of[slot].push(i);
        }
    }

    let mut records = Vec::new();
    let mut artifacts = Vec::new();
    let mut traces: Vec<Option<ConvergenceReport>> = Vec::new();
    let mut rebased_carryover: Vec<usize> = Vec::new();
    let grant_min = scenario.file.campaign.grant_min;
    let grant_max = scenario.file.campaign.grant_max;

    for (ai, &t_i) in times.iter().enumerate() {
        let mut pool: Vec<usize> = Vec::new();
        pool.extend(pool_of[ai].iter().copied());
        pool.extend(rebased_carryover.drain(..));
        pool.sort_by_key(|&i| (states[i].spec.arrival_step, states[i].spec.id.clone()));

        // Credit grants in pool order.
        for &i in &pool {
            let is_rebased = states[i].rebases > 0;
            if grant_max > 0 && (!is_rebased || scenario.file.campaign.grant_to_rebased) {
                let grant = if grant_min == grant_max {
                    grant_min as f64
                } else {
                    rng.gen_range(grant_min..=grant_max) as f64
                };
                states[i].budget += grant;
            }
        }

        // Build the auction's agent problems; menus shift to start at or
        // after the decision step.
        let mut problems: Vec<AgentProblem> = Vec::new();
        let mut members: Vec<usize> = Vec::new();
        for &i in &pool {
            let st = &mut states[i];
            let stride = if ai > 0 { t_i - times[ai - 1] } else { 0 };
            let menu =
                build_menu(scenario, st.spec, t_i, stride, st.rebases, st.rebase_shift, horizon);
            let Some((menu, preferred)) = menu else {
                st.phase = AgentPhase::NeverAllocated;
                continue;
            };
            let req = VehicleRequest {
                id: st.spec.id.clone(),
                menu,
                preferred,
                drop_value: st.spec.drop_value,
                outside_value: st.spec.outside_value,
                budget: st.budget,
                rebase_count: st.rebases,
            };
            req.validate().map_err(|e| CampaignError::Agent { agent: req.id.clone(), source: e })?;
            let problem = AgentProblem::new(graph, req)
                .map_err(|e| CampaignError::Menu { agent: st.spec.id.clone(), source: e })?;
            if st.baseline_departure.is_none() {
                let info = crate::graph::validate_route(graph, &problem.req.menu[preferred].route)
                    .expect("menu routes are validated during construction");
                st.baseline_departure = Some(info.departure_step);
            }
            members.push(i);
            problems.push(problem);
        }

        // Edges strictly before the decision step leave the priced set.
        let active: Vec<bool> = (0..graph.n_constrained)
            .map(|c| graph.constrained_steps[c] >= t_i)
            .collect();

        let caps_at_start = caps_rem.clone();
        let (outcome, prices, fractional, report, converged) = match opts.mechanism {
            Mechanism::Fisher => {
                let mut solver = base_solver.clone();
                if scenario.file.solver.tolerances.is_none() && opts.solver.is_none() {
                    let budgets: Vec<f64> = problems.iter().map(|p| p.req.budget).collect();
                    let min_len = problems
                        .iter()
                        .flat_map(|p| p.route_cidx.iter().map(|r| r.len()))
                        .min()
                        .unwrap_or(1);
                    let (ce, ice, eae) =
                        default_tolerances(&budgets, min_len, &caps_rem, Some(&active));
                    solver.tol_ce = ce;
                    solver.tol_ice = ice;
                    solver.tol_eae = eae;
                }
                let market = run_algorithm1(&problems, &caps_rem, Some(&active), &solver)
                    .map_err(|e| CampaignError::Agent { agent: "market".into(), source: e })?;
                let rank = rank_vehicles(&problems, &market.demands);
                let integral = run_algorithm2(&problems, &market.prices, &caps_rem, p_o, &rank)
                    .map_err(|e| CampaignError::Agent { agent: "rounding".into(), source: e })?;
                let mut prices = market.prices.clone();
                for &c in &integral.removed {
                    prices[c as usize] = f64::INFINITY;
                }
                let conv = market.report.converged;
                (integral, prices, Some(market.demands), Some(market.report), conv)
            }
            Mechanism::ClockBudget | Mechanism::ClockProfit => {
                let mode = if opts.mechanism == Mechanism::ClockBudget {
                    BidMode::Budget
                } else {
                    BidMode::Profit
                };
                let clock = run_clock_auction(
                    &problems,
                    &caps_rem,
                    Some(&active),
                    base_solver.beta,
                    p_o,
                    mode,
                    opts.round_cap,
                )
                .map_err(|e| CampaignError::Agent { agent: "clock".into(), source: e })?;
                let conv = clock.converged;
                (clock.outcome, clock.prices, None, None, conv)
            }
        };

        // Independent safety gate: capacity, menu membership, budgets.
        let violations = check_integral_safety(&problems, &caps_at_start, &outcome, p_o);
        if !violations.is_empty() {
            return Err(CampaignError::Scenario(crate::error::ScenarioError::Invalid(format!(
                "safety violations in auction {}: {}",
                ai + 1,
                violations.join("; ")
            ))));
        }

        // Settlement: payments, capacity depletion, rebasing.
        let mut preferred_n = 0;
        let mut delayed_n = 0;
        let mut dropped_n = 0;
        for (slot, &i) in members.iter().enumerate() {
            let out = &outcome.agents[slot];
            let problem = &problems[slot];
            let st = &mut states[i];
            match out.route {
                Some(s) => {
                    st.budget -= out.route_payment;
                    if st.budget < -1e-6 {
                        return Err(CampaignError::NegativeBudget(st.spec.id.clone(), st.budget));
                    }
                    st.budget = st.budget.max(0.0);
                    for &c in &problem.route_cidx[s] {
                        caps_rem[c as usize] -= 1.0;
                    }
                    let info = crate::graph::validate_route(graph, &problem.req.menu[s].route)
                        .expect("allocated route came from a validated menu");
                    let delay = info.departure_step.saturating_sub(st.baseline_departure.unwrap());
                    st.phase = AgentPhase::Allocated { delay };
                    if out.status == AllocationStatus::Preferred && delay == 0 {
                        preferred_n += 1;
                    } else {
                        delayed_n += 1;
                    }
                }
                None => {
                    dropped_n += 1;
                    // outside-option holdings convert back to credits 1:1
                    if st.rebases < 2 && (ai + 1) < times.len() {
                        st.rebases += 1;
                        st.rebase_shift += times[ai + 1] - t_i;
                        rebased_carryover.push(i);
                    } else {
                        st.phase = AgentPhase::NeverAllocated;
                    }
                }
            }
        }

        // denominator is the whole constrained edge set; edges outside the
        // auction window carry no price and never count as stranded
        let mce = metric_mce_after_integral(&outcome.demand, &prices, &caps_at_start, None);
        let (inner, outer) = report
            .as_ref()
            .map(|r| (r.inner_iterations, r.outer_iterations))
            .unwrap_or((outcome.passes, 0));
        let max_price = prices
            .iter()
            .filter(|p| p.is_finite())
            .cloned()
            .fold(0.0, f64::max);
        records.push(AuctionRecord {
            index: (ai + 1) as u32,
            time_step: t_i,
            pool_size: members.len(),
            preferred: preferred_n,
            delayed: delayed_n,
            dropped: dropped_n,
            pool_rebased_once: members.iter().filter(|&&i| states[i].rebases == 1).count(),
            pool_rebased_twice: members.iter().filter(|&&i| states[i].rebases == 2).count(),
            mce,
            converged,
            inner_iterations: inner,
            outer_iterations: outer,
            max_price,
        });
        artifacts.push(AuctionArtifact {
            index: (ai + 1) as u32,
            time_step: t_i,
            requests: members
                .iter()
                .zip(&problems)
                .map(|(_, p)| StoredRequest {
                    id: p.req.id.clone(),
                    budget: p.req.budget,
                    drop_value: p.req.drop_value,
                    outside_value: p.req.outside_value,
                    preferred: p.req.preferred,
                    rebase_count: p.req.rebase_count,
                    routes: p
                        .req
                        .menu
                        .iter()
                        .map(|m| StoredRoute { value: m.value, edges: m.route.edges.clone() })
                        .collect(),
                })
                .collect(),
            fractional,
            prices: prices
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(c, &p)| (c as u32, p))
                .collect(),
            removed: outcome.removed.clone(),
            outcomes: outcome.agents.clone(),
            converged,
        });
        traces.push(if opts.keep_traces { report } else { None });
    }

    // Campaign metrics over final agent phases.
    let mut num_times_rebased = 0usize;
    let mut num_rebased_agents = 0usize;
    let mut num_delayed = 0usize;
    let mut delay_sum = 0u64;
    let mut num_never = 0usize;
    let mut num_preferred = 0usize;
    for st in &states {
        num_times_rebased += st.rebases as usize;
        if st.rebases > 0 {
            num_rebased_agents += 1;
        }
        match st.phase {
            AgentPhase::Allocated { delay } => {
                if delay > 0 {
                    num_delayed += 1;
                    delay_sum += delay as u64;
                } else {
                    num_preferred += 1;
                }
            }
            AgentPhase::NeverAllocated => num_never += 1,
            AgentPhase::Waiting => num_never += 1,
        }
    }
    let summary = CampaignSummary {
        scenario: scenario.file.name.clone(),
        mechanism: opts.mechanism,
        capacity_fraction: scenario.capacity_fraction,
        auctions,
        seed,
        num_agents: states.len(),
        num_times_rebased,
        num_delayed,
        avg_delay_steps: if num_delayed > 0 { delay_sum as f64 / num_delayed as f64 } else { 0.0 },
        num_rebased_agents,
        avg_times_rebased: if num_rebased_agents > 0 {
            num_times_rebased as f64 / num_rebased_agents as f64
        } else {
            0.0
        },
        num_never_allocated: num_never,
        num_preferred,
        total_inner_iterations: records.iter().map(|r| r.inner_iterations).sum(),
        max_mce: records.iter().map(|r| r.mce).fold(0.0, f64::max),
        all_converged: records.iter().all(|r| r.converged),
    };
    let final_budgets = states
        .iter()
        .map(|s| (s.spec.id.clone(), s.budget))
        .collect();
    Ok(CampaignResult { summary, records, artifacts, traces, final_budgets })
}
