//! Simultaneous ascending clock auction baselines. All agents bid every
//! round, prices rise by the increment on every over-demanded edge, and the
//! auction ends when no edge is contested.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{solve_integral_iop, AgentProblem, ChosenOption, RouteSpaceDemand, BUDGET_SLACK};
use crate::error::AgentError;
use crate::rounding::{AgentOutcome, AllocationStatus, IntegralOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidMode {
    /// Bids come from the budget-constrained integral best response.
    Budget,
    /// Bids maximize value minus price, ignoring the budget.
    Profit,
}

pub const DEFAULT_ROUND_CAP: usize = 1_000_000;

/// Budget-based bid: the integral best response at the clock prices.
pub fn bid_budget_based(
    problem: &AgentProblem,
    prices: &[f64],
    p_o: f64,
) -> Result<(ChosenOption, RouteSpaceDemand), AgentError> {
    solve_integral_iop(problem, prices, p_o)
}

/// Profit-based bid: picks the menu option with the largest value minus
/// price. The outside option enters quasi-linearly and is never bought while
/// its value does not exceed its price; there is no budget constraint.
pub fn bid_profit_based(
    problem: &AgentProblem,
    prices: &[f64],
    p_o: f64,
) -> Result<(ChosenOption, RouteSpaceDemand), AgentError> {
    let req = &problem.req;
    if req.outside_value > p_o {
        return Err(AgentError::UnboundedProfitBid(req.outside_value, p_o));
    }
    let mut best = (req.drop_value, req.drop_value, req.menu.len(), ChosenOption::DropOut);
    for (s, m) in req.menu.iter().enumerate() {
        let cost = problem.route_cost(s, prices);
        if !cost.is_finite() {
            continue;
        }
        let profit = m.value - cost;
        let candidate = (profit, m.value, s, ChosenOption::Route(s));
        let better = profit > best.0
            || (profit == best.0 && (candidate.1 > best.1 || (candidate.1 == best.1 && candidate.2 < best.2)));
        if better {
            best = candidate;
        }
    }
    let mut demand = RouteSpaceDemand::zeros(req.menu.len());
    match best.3 {
        ChosenOption::Route(s) => demand.theta[s] = 1.0,
        ChosenOption::DropOut => demand.drop = 1.0,
    }
    Ok((best.3, demand))
}

#[derive(Debug, Clone)]
pub struct ClockOutcome {
    pub outcome: IntegralOutcome,
    pub prices: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Runs the ascending clock auction until no edge is over-demanded.
///
/// Settlement mirrors the main mechanism: leftover budget converts into the
/// outside option. A profit-mode bundle whose price ended up above the
/// agent's budget cannot be paid for and settles as a drop-out.
pub fn run_clock_auction(
    problems: &[AgentProblem],
    caps: &[f64],
    active: Option<&[bool]>,
    beta: f64,
    p_o: f64,
    mode: BidMode,
    round_cap: usize,
) -> Result<ClockOutcome, AgentError> {
    let n_edges = caps.len();
    let mut prices = vec![0.0; n_edges];
    let is_active = |e: usize| active.map_or(true, |a| a[e]);
    let mut rounds = 0usize;
    let mut bids: Vec<(ChosenOption, RouteSpaceDemand)> = Vec::new();
    let mut converged = false;

    while rounds < round_cap {
        rounds += 1;
        let collected: Result<Vec<_>, AgentError> = problems
            .par_iter()
            .map(|p| match mode {
                BidMode::Budget => bid_budget_based(p, &prices, p_o),
                BidMode::Profit => bid_profit_based(p, &prices, p_o),
            })
            .collect();
        bids = collected?;

        let mut demand = vec![0.0; n_edges];
        for (p, (choice, _)) in problems.iter().zip(&bids) {
            if let ChosenOption::Route(s) = choice {
                for &c in &p.route_cidx[*s] {
                    demand[c as usize] += 1.0;
                }
            }
        }
        let mut contested = false;
        for e in 0..n_edges {
            if is_active(e) && demand[e] > caps[e] {
                prices[e] += beta;
                contested = true;
            }
        }
        if !contested {
            converged = true;
            break;
        }
    }

    // Settlement at the final clock prices.
    let mut remaining = caps.to_vec();
    let mut demand = vec![0.0; n_edges];
    let mut agents = Vec::with_capacity(problems.len());
    for (p, (choice, bid)) in problems.iter().zip(&bids) {
        let w = p.req.budget;
        match choice {
            ChosenOption::Route(s) => {
                let cost = p.route_cost(*s, &prices);
                if mode == BidMode::Profit && cost > w + BUDGET_SLACK {
                    // unaffordable winning bundle: void it
                    agents.push(AgentOutcome {
                        agent: p.req.id.clone(),
                        status: AllocationStatus::Dropped,
                        route: None,
                        payment: w,
                        route_payment: 0.0,
                        outside: w / p_o,
                    });
                    continue;
                }
                for &c in &p.route_cidx[*s] {
                    remaining[c as usize] -= 1.0;
                    demand[c as usize] += 1.0;
                }
                let leftover = (w - cost).max(0.0);
                agents.push(AgentOutcome {
                    agent: p.req.id.clone(),
                    status: if *s == p.req.preferred {
                        AllocationStatus::Preferred
                    } else {
                        AllocationStatus::Delayed
                    },
                    route: Some(*s),
                    payment: cost + leftover,
                    route_payment: cost,
                    outside: leftover / p_o,
                });
            }
            ChosenOption::DropOut => {
                let outside = if mode == BidMode::Budget { bid.outside } else { w / p_o };
                agents.push(AgentOutcome {
                    agent: p.req.id.clone(),
                    status: AllocationStatus::Dropped,
                    route: None,
                    payment: p_o * outside,
                    route_payment: 0.0,
                    outside,
                });
            }
        }
    }

    Ok(ClockOutcome {
        outcome: IntegralOutcome { agents, removed: Vec::new(), remaining, demand, passes: rounds },
        prices,
        rounds,
        converged,
    })
}
