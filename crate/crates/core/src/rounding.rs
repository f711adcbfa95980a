//! Integral allocation from a fractional equilibrium: rank agents by the
//! fractional weight on their preferred route's departing edge, then let
//! each report its exact integral best response at the frozen prices,
//! removing over-demanded edges from further consideration.

use serde::{Deserialize, Serialize};

use crate::agent::{solve_integral_iop, AgentProblem, ChosenOption, RouteSpaceDemand};
use crate::error::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationStatus {
    /// Received the preferred route.
    Preferred,
    /// Received another route from the menu.
    Delayed,
    /// Left with the drop-out option.
    Dropped,
}

#[derive(Debug, Clone)]
pub struct RankedList {
    /// Agent indices in allocation order.
    pub order: Vec<usize>,
    /// Ranking keys, non-increasing along `order`.
    pub keys: Vec<f64>,
}

/// Ranks agents by decreasing fractional allocation on the departing edge of
/// their preferred route. Ties break toward the larger budget, then the
/// lexicographically smaller agent id.
pub fn rank_vehicles(problems: &[AgentProblem], demands: &[RouteSpaceDemand]) -> RankedList {
    let mut order: Vec<usize> = (0..problems.len()).collect();
    let key = |u: usize| {
        let p = &problems[u];
        let x = p.cs.expand(&demands[u].theta);
        x[p.cs.departing_col[p.req.preferred]]
    };
    let keys: Vec<f64> = order.iter().map(|&u| key(u)).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap()
            .then(problems[b].req.budget.partial_cmp(&problems[a].req.budget).unwrap())
            .then(problems[a].req.id.cmp(&problems[b].req.id))
    });
    let keys = order.iter().map(|&u| keys[u]).collect();
    RankedList { order, keys }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: String,
    pub status: AllocationStatus,
    /// Menu index of the allocated route, when not dropped.
    pub route: Option<usize>,
    /// Total spend: route price plus outside-option purchase.
    pub payment: f64,
    /// Route price alone.
    pub route_payment: f64,
    /// Units of the outside option bought with the leftover budget.
    pub outside: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegralOutcome {
    /// Outcomes in the input agent order (not rank order).
    pub agents: Vec<AgentOutcome>,
    /// Constrained-edge indices whose price was pushed to infinity.
    pub removed: Vec<u32>,
    /// Remaining capacity after all allocations.
    pub remaining: Vec<f64>,
    /// Total integral demand per constrained edge.
    pub demand: Vec<f64>,
    /// Passes of the acceptance loop (bounded by agents + removed edges).
    pub passes: usize,
}

/// Sequential integral allocation at frozen prices.
///
/// Iterates agents in rank order; every agent re-solves its integral best
/// response until the reported bundle fits the remaining capacity. Edges the
/// bundle over-demands are priced at infinity for everyone still waiting.
/// Drop-out always fits, so the loop terminates.
pub fn run_algorithm2(
    problems: &[AgentProblem],
    prices: &[f64],
    caps: &[f64],
    p_o: f64,
    rank: &RankedList,
) -> Result<IntegralOutcome, AgentError> {
    let mut prices = prices.to_vec();
    let mut remaining = caps.to_vec();
    let mut removed: Vec<u32> = Vec::new();
    let mut demand = vec![0.0; caps.len()];
    let mut outcomes: Vec<Option<AgentOutcome>> = vec![None; problems.len()];
    let mut passes = 0usize;

    for &u in &rank.order {
        let p = &problems[u];
        loop {
            passes += 1;
            let (choice, d) = solve_integral_iop(p, &prices, p_o)?;
            match choice {
                ChosenOption::Route(s) => {
                    let fits = p.route_cidx[s]
                        .iter()
                        .all(|&c| 1.0 <= remaining[c as usize]);
                    if fits {
                        for &c in &p.route_cidx[s] {
                            remaining[c as usize] -= 1.0;
                            demand[c as usize] += 1.0;
                        }
                        let route_payment = p.route_cost(s, &prices);
                        outcomes[u] = Some(AgentOutcome {
                            agent: p.req.id.clone(),
                            status: if s == p.req.preferred {
                                AllocationStatus::Preferred
                            } else {
                                AllocationStatus::Delayed
                            },
                            route: Some(s),
                            payment: route_payment + p_o * d.outside,
                            route_payment,
                            outside: d.outside,
                        });
                        break;
                    }
                    for &c in &p.route_cidx[s] {
                        if 1.0 > remaining[c as usize] && prices[c as usize].is_finite() {
                            prices[c as usize] = f64::INFINITY;
                            removed.push(c);
                        }
                    }
                }
                ChosenOption::DropOut => {
                    outcomes[u] = Some(AgentOutcome {
                        agent: p.req.id.clone(),
                        status: AllocationStatus::Dropped,
                        route: None,
                        payment: p_o * d.outside,
                        route_payment: 0.0,
                        outside: d.outside,
                    });
                    break;
                }
            }
        }
    }

    Ok(IntegralOutcome {
        agents: outcomes.into_iter().map(Option::unwrap).collect(),
        removed,
        remaining,
        demand,
        passes,
    })
}

/// Fraction of constrained edges with a strictly positive finite price left
/// below capacity by the integral allocation.
pub fn metric_mce_after_integral(
    demand: &[f64],
    prices: &[f64],
    caps: &[f64],
    active: Option<&[bool]>,
) -> f64 {
    let mut stranded = 0usize;
    let mut total = 0usize;
    for e in 0..caps.len() {
        if let Some(a) = active {
            if !a[e] {
                continue;
            }
        }
        total += 1;
        if prices[e].is_finite() && prices[e] > 0.0 && demand[e] < caps[e] {
            stranded += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        stranded as f64 / total as f64
    }
}
