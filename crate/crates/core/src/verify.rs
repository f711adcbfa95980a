//! Equilibrium verification. Checks a fractional allocation-price pair
//! against the competitive-equilibrium conditions: capacity feasibility,
//! complementary slackness, budget equality, and per-agent optimality of the
//! relaxed best response, certified both by recovered multipliers with
//! first-order-condition residuals and by an exact small linear program.
//! Also hosts the independent post-hoc safety checker for integral outcomes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentProblem, RouteSpaceDemand};
use crate::graph::TimeExtendedGraph;
use crate::rounding::{AllocationStatus, IntegralOutcome};

/// Multipliers and residuals recovered for one agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCertificate {
    pub agent: String,
    /// Budget multiplier of the relaxed best response.
    pub budget_dual: f64,
    /// Selection-constraint multiplier.
    pub selection_dual: f64,
    /// Multipliers of the stacked flow rows, recovered by least squares.
    pub kappa: Vec<f64>,
    /// Positivity multipliers per support edge, clamped at zero.
    pub mu: Vec<f64>,
    /// Worst first-order-condition violation across goods.
    pub stationarity_residual: f64,
    /// Worst complementary-slackness violation across goods.
    pub slackness_residual: f64,
    /// |spend - budget|.
    pub budget_residual: f64,
    /// Gap between the achieved utility and the exact relaxed optimum.
    pub optimality_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktCertificate {
    pub agents: Vec<AgentCertificate>,
    /// Worst capacity violation over constrained edges.
    pub capacity_residual: f64,
    /// Worst |price * excess demand| over constrained edges.
    pub complementarity_residual: f64,
    pub max_residual: f64,
    pub pass: bool,
}

/// Exact optimum of the relaxed best response at posted prices: maximize
/// utility over route weights, the outside option and drop-out, subject to
/// the selection constraint and the budget. Solved by enumerating basic
/// feasible solutions of the two-constraint linear program.
pub fn relaxed_iop_optimum(
    problem: &AgentProblem,
    prices: &[f64],
    p_o: f64,
) -> (f64, RouteSpaceDemand) {
    let req = &problem.req;
    let n = problem.n_routes();
    // variables: theta_0..theta_{n-1}, x_o, x_nil, budget slack
    let nv = n + 3;
    let mut value = vec![0.0; nv];
    let mut cost = vec![0.0; nv];
    let mut sel = vec![0.0; nv];
    for s in 0..n {
        value[s] = req.menu[s].value;
        cost[s] = problem.route_cost(s, prices);
        sel[s] = 1.0;
    }
    value[n] = req.outside_value;
    cost[n] = p_o;
    value[n + 1] = req.drop_value;
    sel[n + 1] = 1.0;
    cost[n + 2] = 1.0;

    let w = req.budget;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |x: Vec<f64>| {
        if x.iter().any(|&v| v < -1e-9 || !v.is_finite()) {
            return;
        }
        let f: f64 = x.iter().zip(&value).map(|(a, b)| a * b).sum();
        if best.as_ref().map_or(true, |(bf, _)| f > *bf) {
            best = Some((f, x));
        }
    };
    for i in 0..nv {
        for j in (i + 1)..nv {
            if !cost[i].is_finite() || !cost[j].is_finite() {
                continue;
            }
            // solve sel.x = 1, cost.x = w on the pair (i, j)
            let det = sel[i] * cost[j] - sel[j] * cost[i];
            if det.abs() < 1e-12 {
                continue;
            }
            let xi = (cost[j] - w * sel[j]) / det;
            let xj = (sel[i] * w - cost[i]) / det;
            let mut x = vec![0.0; nv];
            x[i] = xi;
            x[j] = xj;
            consider(x);
        }
    }
    let (f, x) = best.expect("drop-out plus slack is always feasible");
    (
        f,
        RouteSpaceDemand { theta: x[..n].to_vec(), outside: x[n], drop: x[n + 1] },
    )
}

// Active-set threshold for multiplier recovery; aligned with the solver's
// practical accuracy, not machine precision.
const ACTIVE_TOL: f64 = 1e-3;

fn certify_agent(
    graph: &TimeExtendedGraph,
    problem: &AgentProblem,
    demand: &RouteSpaceDemand,
    prices: &[f64],
    p_o: f64,
) -> AgentCertificate {
    let req = &problem.req;
    let n = problem.n_routes();
    let costs: Vec<f64> = (0..n).map(|s| problem.route_cost(s, prices)).collect();

    // Budget and selection duals from least squares over the stationarity
    // equalities of the active options.
    let mut rows: Vec<[f64; 2]> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for s in 0..n {
        if demand.theta[s] > ACTIVE_TOL {
            rows.push([costs[s], 1.0]);
            rhs.push(req.menu[s].value);
        }
    }
    if demand.outside > ACTIVE_TOL {
        rows.push([p_o, 0.0]);
        rhs.push(req.outside_value);
    }
    if demand.drop > ACTIVE_TOL {
        rows.push([0.0, 1.0]);
        rhs.push(req.drop_value);
    }
    let fallback_budget_dual = req.outside_value / p_o;
    // Worst positive reduced value across all options at candidate duals.
    let violation = |bd: f64, sd: f64| -> f64 {
        let mut v: f64 = req.outside_value - bd * p_o;
        v = v.max(req.drop_value - sd);
        for s in 0..n {
            v = v.max(req.menu[s].value - bd * costs[s] - sd);
        }
        v.max(0.0)
    };
    let (budget_dual, selection_dual) = if demand.outside > ACTIVE_TOL {
        // holding the outside option pins the budget dual exactly
        let bd = req.outside_value / p_o;
        let mut num = 0.0;
        let mut den = 0.0;
        for s in 0..n {
            if demand.theta[s] > ACTIVE_TOL {
                num += req.menu[s].value - bd * costs[s];
                den += 1.0;
            }
        }
        if demand.drop > ACTIVE_TOL {
            num += req.drop_value;
            den += 1.0;
        }
        let sd = if den > 0.0 { num / den } else { req.drop_value };
        (bd, sd)
    } else {
        match rows.len() {
        0 => (fallback_budget_dual, req.drop_value),
        1 => {
            // one equality pins a line of duals; walk it for the point with
            // the least infeasibility over the inactive inequalities
            let [a, b] = rows[0];
            let pick = |bd: f64| -> f64 {
                if b != 0.0 {
                    (rhs[0] - a * bd) / b
                } else {
                    req.drop_value
                }
            };
            if b == 0.0 {
                (rhs[0] / a, req.drop_value)
            } else {
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                while violation(hi, pick(hi)) > violation(2.0 * hi, pick(2.0 * hi)) && hi < 1e9 {
                    hi *= 2.0;
                }
                hi *= 2.0;
                for _ in 0..200 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if violation(m1, pick(m1)) <= violation(m2, pick(m2)) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let bd = 0.5 * (lo + hi);
                (bd, pick(bd))
            }
        }
        _ => {
            let a = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r][c]);
            let b = DVector::from_vec(rhs.clone());
            match a.clone().svd(true, true).solve(&b, 1e-12) {
                Ok(sol) => (sol[0], sol[1]),
                Err(_) => (fallback_budget_dual, req.drop_value),
            }
        }
        }
    };

    // Option-space first-order residuals: each reduced value must be <= 0,
    // with equality wherever the option is held.
    let mut stationarity: f64 = 0.0;
    let mut slackness: f64 = 0.0;
    {
        let mut check = |reduced: f64, amount: f64| {
            stationarity = stationarity.max(reduced);
            slackness = slackness.max((reduced * amount).abs());
        };
        for s in 0..n {
            check(req.menu[s].value - budget_dual * costs[s] - selection_dual, demand.theta[s]);
        }
        check(req.outside_value - budget_dual * p_o, demand.outside);
        check(req.drop_value - selection_dual, demand.drop);
    }

    // Edge-space recovery of the stacked-row multipliers: on edges with
    // positive flow the positivity multiplier vanishes, so
    // (A^T kappa)_e = v_e - budget_dual * p_e - selection_dual * a_e there.
    let cs = &problem.cs;
    let x = cs.expand(&demand.theta);
    let ncols = cs.support.len();
    let nrows = cs.rows.len();
    let mut at = DMatrix::zeros(ncols, nrows);
    for (r, row) in cs.rows.iter().enumerate() {
        for &(c, a) in row {
            at[(c, r)] = a;
        }
    }
    let mut target = DVector::zeros(ncols);
    for c in 0..ncols {
        let edge = cs.support[c];
        let mut v_e = 0.0;
        let mut a_e = 0.0;
        for s in 0..n {
            if cs.departing_col[s] == c {
                v_e += req.menu[s].value;
                a_e += 1.0;
            }
        }
        let p_e = match graph.edges[edge].cidx {
            Some(ci) => prices[ci as usize],
            None => 0.0,
        };
        target[c] = v_e - budget_dual * p_e - selection_dual * a_e;
    }
    // Recover the stacked-row multipliers: equalities on edges with flow,
    // one-sided constraints (positivity multipliers must stay nonnegative)
    // on the rest. Solved as a smooth penalized least-squares problem.
    let active: Vec<bool> = (0..ncols).map(|c| x[c] > ACTIVE_TOL).collect();
    let kappa: Vec<f64> = if nrows == 0 {
        Vec::new()
    } else {
        let act_idx: Vec<usize> = (0..ncols).filter(|&c| active[*&c]).collect();
        let mut k = if act_idx.is_empty() {
            vec![0.0; nrows]
        } else {
            let a_act = DMatrix::from_fn(act_idx.len(), nrows, |r, c| at[(act_idx[r], c)]);
            let b_act = DVector::from_fn(act_idx.len(), |r, _| target[act_idx[r]]);
            a_act
                .svd(true, true)
                .solve(&b_act, 1e-12)
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|_| vec![0.0; nrows])
        };
        // descend on  sum_active (A^T k - t)^2 + sum_inactive max(0, t - A^T k)^2
        let mut grad = vec![0.0; nrows];
        let lip: f64 = 2.0 * (0..ncols)
            .map(|c| (0..nrows).map(|r| at[(c, r)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1.0)
            * nrows as f64;
        let step = 1.0 / lip;
        for _ in 0..4000 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut worst = 0.0f64;
            for c in 0..ncols {
                let atk: f64 = (0..nrows).map(|r| at[(c, r)] * k[r]).sum();
                let resid = target[c] - atk;
                let force = if active[c] { resid } else { resid.max(0.0) };
                worst = worst.max(force.abs());
                if force != 0.0 {
                    for r in 0..nrows {
                        grad[r] -= at[(c, r)] * force;
                    }
                }
            }
            if worst < 1e-10 {
                break;
            }
            for r in 0..nrows {
                k[r] -= step * grad[r];
            }
        }
        k
    };
    let mut mu = vec![0.0; ncols];
    for c in 0..ncols {
        let atk: f64 = (0..nrows).map(|r| at[(c, r)] * kappa[r]).sum();
        let resid = target[c] - atk;
        if active[c] {
            stationarity = stationarity.max(resid.abs());
        } else {
            mu[c] = (-resid).max(0.0);
            stationarity = stationarity.max(resid.max(0.0));
        }
        slackness = slackness.max((mu[c] * x[c]).abs());
    }

    let spend: f64 =
        (0..n).map(|s| costs[s] * demand.theta[s]).sum::<f64>() + p_o * demand.outside;
    let budget_residual = (spend - req.budget).abs();
    let achieved: f64 = (0..n)
        .map(|s| req.menu[s].value * demand.theta[s])
        .sum::<f64>()
        + req.outside_value * demand.outside
        + req.drop_value * demand.drop;
    let (opt, _) = relaxed_iop_optimum(problem, prices, p_o);
    let optimality_gap = (opt - achieved).max(0.0);

    AgentCertificate {
        agent: req.id.clone(),
        budget_dual,
        selection_dual,
        kappa,
        mu,
        stationarity_residual: stationarity,
        slackness_residual: slackness,
        budget_residual,
        optimality_gap,
    }
}

/// Checks a fractional allocation-price pair against the relaxed
/// competitive-equilibrium conditions at tolerance `tol`.
pub fn verify_fractional_ce(
    graph: &TimeExtendedGraph,
    problems: &[AgentProblem],
    demands: &[RouteSpaceDemand],
    prices: &[f64],
    caps: &[f64],
    active: Option<&[bool]>,
    p_o: f64,
    tol: f64,
) -> KktCertificate {
    let n_edges = caps.len();
    let mut total = vec![0.0; n_edges];
    for (p, d) in problems.iter().zip(demands) {
        let mut buf = vec![0.0; p.csupport.len()];
        p.expand_constrained(&d.theta, &mut buf);
        for (pos, &c) in p.csupport.iter().enumerate() {
            total[c as usize] += buf[pos];
        }
    }
    let mut capacity_residual: f64 = 0.0;
    let mut complementarity_residual: f64 = 0.0;
    for e in 0..n_edges {
        if let Some(a) = active {
            if !a[e] {
                continue;
            }
        }
        capacity_residual = capacity_residual.max(total[e] - caps[e]);
        complementarity_residual =
            complementarity_residual.max((prices[e] * (total[e] - caps[e])).abs());
    }
    capacity_residual = capacity_residual.max(0.0);

    let agents: Vec<AgentCertificate> = problems
        .iter()
        .zip(demands)
        .map(|(p, d)| certify_agent(graph, p, d, prices, p_o))
        .collect();
    let worst_agent = agents
        .iter()
        .map(|a| {
            a.stationarity_residual
                .max(a.slackness_residual)
                .max(a.budget_residual)
                .max(a.optimality_gap)
        })
        .fold(0.0f64, f64::max);
    let max_residual = capacity_residual
        .max(complementarity_residual)
        .max(worst_agent);
    KktCertificate {
        agents,
        capacity_residual,
        complementarity_residual,
        max_residual,
        pass: max_residual <= tol,
    }
}

/// Independent post-hoc safety checks on an integral outcome: no capacity
/// violation, every allocated bundle is one menu route, every payment within
/// budget. Returns the list of violations, empty when safe.
pub fn check_integral_safety(
    problems: &[AgentProblem],
    caps_at_start: &[f64],
    outcome: &IntegralOutcome,
    p_o: f64,
) -> Vec<String> {
    let mut violations = Vec::new();
    let mut usage = vec![0.0; caps_at_start.len()];
    for (p, a) in problems.iter().zip(&outcome.agents) {
        match a.route {
            Some(s) => {
                if s >= p.req.menu.len() {
                    violations
                        .push(format!("{}: allocated route {} is not on the menu", a.agent, s));
                    continue;
                }
                for &c in &p.route_cidx[s] {
                    usage[c as usize] += 1.0;
                }
                let expected = if s == p.req.preferred {
                    AllocationStatus::Preferred
                } else {
                    AllocationStatus::Delayed
                };
                if expected != a.status {
                    violations.push(format!(
                        "{}: status {:?} does not match allocated route {}",
                        a.agent, a.status, s
                    ));
                }
            }
            None => {
                if a.status != AllocationStatus::Dropped {
                    violations.push(format!("{}: no route but status is not dropped", a.agent));
                }
            }
        }
        let payment = a.route_payment + p_o * a.outside;
        if a.route_payment < -1e-9 || a.outside < -1e-9 {
            violations.push(format!("{}: negative payment components", a.agent));
        }
        if payment > p.req.budget + 1e-6 {
            violations.push(format!(
                "{}: payment {:.6} exceeds budget {:.6}",
                a.agent, payment, p.req.budget
            ));
        }
        if (payment - a.payment).abs() > 1e-6 {
            violations.push(format!("{}: reported payment is inconsistent", a.agent));
        }
    }
    for e in 0..caps_at_start.len() {
        if usage[e] > caps_at_start[e] + 1e-9 {
            violations.push(format!(
                "edge {}: integral usage {} exceeds capacity {}",
                e, usage[e], caps_at_start[e]
            ));
        }
    }
    violations
}
