//! One vehicle's private data and its two optimization problems: the
//! integral best-response at posted prices (solved exactly by enumeration
//! over the menu) and the smoothed fractional demand update used inside the
//! equilibrium iteration (solved over route weights by projected gradient
//! ascent).

use serde::{Deserialize, Serialize};

use crate::constraints::{build_constraints, ConstraintSystem};
use crate::error::{AgentError, MenuError};
use crate::graph::{EdgeId, Route, TimeExtendedGraph};

pub const LOG_GUARD: f64 = 1e-12;
pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MenuRoute {
    pub route: Route,
    pub value: f64,
}

/// A vehicle's request for one auction: its route menu with the preferred
/// route marked, private valuations, and its air-credit budget.
#[derive(Debug, Clone)]
pub struct VehicleRequest {
    pub id: String,
    pub menu: Vec<MenuRoute>,
    pub preferred: usize,
    /// Value of sitting the auction out.
    pub drop_value: f64,
    /// Value per unit of the outside option.
    pub outside_value: f64,
    pub budget: f64,
    pub rebase_count: u8,
}

impl VehicleRequest {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.menu.is_empty() || self.preferred >= self.menu.len() {
            return Err(AgentError::PreferredRouteMissing);
        }
        let vmax = self.menu.iter().map(|m| m.value).fold(f64::NEG_INFINITY, f64::max);
        if self.menu[self.preferred].value < vmax {
            return Err(AgentError::PreferredRouteMissing);
        }
        let finite = self.budget >= 0.0
            && self.drop_value > 0.0
            && self.outside_value > 0.0
            && self.menu.iter().all(|m| m.value >= 0.0 && m.value.is_finite());
        if !finite {
            return Err(AgentError::NonFiniteInput);
        }
        Ok(())
    }
}

/// An agent's bundle: per-edge amounts on its menu support plus the outside
/// option and drop-out coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationVector {
    pub support: Vec<EdgeId>,
    pub amounts: Vec<f64>,
    pub outside: f64,
    pub drop: f64,
    pub integral: bool,
}

impl AllocationVector {
    pub fn zero(support: Vec<EdgeId>) -> Self {
        let n = support.len();
        AllocationVector { support, amounts: vec![0.0; n], outside: 0.0, drop: 0.0, integral: false }
    }

    pub fn edge_amount(&self, edge: EdgeId) -> f64 {
        match self.support.binary_search(&edge) {
            Ok(i) => self.amounts[i],
            Err(_) => 0.0,
        }
    }
}

/// Demand expressed as nonnegative weights over the menu routes; expanding
/// through the constraint system reproduces a feasible edge allocation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RouteSpaceDemand {
    pub theta: Vec<f64>,
    pub outside: f64,
    pub drop: f64,
}

impl RouteSpaceDemand {
    pub fn zeros(n_routes: usize) -> Self {
        RouteSpaceDemand { theta: vec![0.0; n_routes], outside: 0.0, drop: 0.0 }
    }

    pub fn selection_sum(&self) -> f64 {
        self.theta.iter().sum::<f64>() + self.drop
    }
}

/// A request bound to its constraint system and the graph's constrained-edge
/// index, ready for the market loops.
#[derive(Debug, Clone)]
pub struct AgentProblem {
    pub req: VehicleRequest,
    pub cs: ConstraintSystem,
    /// Constrained-edge indices touched by the menu, sorted.
    pub csupport: Vec<u32>,
    /// Per route, positions into `csupport` of its constrained edges.
    pub route_cpos: Vec<Vec<u32>>,
    /// Per route, constrained-edge indices of its edges (for costing).
    pub route_cidx: Vec<Vec<u32>>,
}

impl AgentProblem {
    pub fn new(graph: &TimeExtendedGraph, req: VehicleRequest) -> Result<Self, MenuError> {
        let routes: Vec<Route> = req.menu.iter().map(|m| m.route.clone()).collect();
        let cs = build_constraints(graph, &routes)?;
        let mut csupport: Vec<u32> = cs
            .support
            .iter()
            .filter_map(|&e| graph.edges[e].cidx)
            .collect();
        csupport.sort_unstable();
        csupport.dedup();
        let pos_of = |c: u32| csupport.binary_search(&c).unwrap() as u32;
        let mut route_cpos = Vec::with_capacity(routes.len());
        let mut route_cidx = Vec::with_capacity(routes.len());
        for r in &routes {
            let mut cids: Vec<u32> = r
                .edges
                .iter()
                .filter_map(|&e| graph.edges[e].cidx)
                .collect();
            cids.sort_unstable();
            route_cpos.push(cids.iter().map(|&c| pos_of(c)).collect());
            route_cidx.push(cids);
        }
        Ok(AgentProblem { req, cs, csupport, route_cpos, route_cidx })
    }

    pub fn n_routes(&self) -> usize {
        self.req.menu.len()
    }

    /// Expands route weights to amounts over `csupport`.
    pub fn expand_constrained(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (s, poss) in self.route_cpos.iter().enumerate() {
            for &p in poss {
                out[p as usize] += theta[s];
            }
        }
    }

    /// Price of a route at the given constrained-edge prices; infinite if the
    /// route crosses a removed edge.
    pub fn route_cost(&self, s: usize, prices: &[f64]) -> f64 {
        self.route_cidx[s].iter().map(|&c| prices[c as usize]).sum()
    }

    pub fn demand_to_allocation(&self, d: &RouteSpaceDemand, integral: bool) -> AllocationVector {
        let x = self.cs.expand(&d.theta);
        AllocationVector {
            support: self.cs.support.clone(),
            amounts: x,
            outside: d.outside,
            drop: d.drop,
            integral,
        }
    }
}

/// Total utility of a bundle: route valuations weighted by the flow on each
/// route's departing edge, plus outside-option and drop-out terms.
pub fn utility(problem: &AgentProblem, alloc: &AllocationVector) -> Result<f64, AgentError> {
    if alloc.support.len() != problem.cs.support.len() {
        return Err(AgentError::DimensionMismatch);
    }
    let mut total = 0.0;
    for (s, m) in problem.req.menu.iter().enumerate() {
        total += m.value * alloc.amounts[problem.cs.departing_col[s]];
    }
    total += problem.req.outside_value * alloc.outside;
    total += problem.req.drop_value * alloc.drop;
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChosenOption {
    Route(usize),
    DropOut,
}

/// Exact integral best response at posted prices.
///
/// Enumerates every affordable menu route (a removed edge prices a route at
/// infinity) and the drop-out option, scoring each by its valuation plus the
/// leftover budget converted into the outside option. Ties go to the higher
/// valuation, then the earlier menu position, with drop-out last.
pub fn solve_integral_iop(
    problem: &AgentProblem,
    prices: &[f64],
    p_o: f64,
) -> Result<(ChosenOption, RouteSpaceDemand), AgentError> {
    if !(p_o > 0.0) {
        return Err(AgentError::NonPositiveOutsidePrice(p_o));
    }
    let req = &problem.req;
    let w = req.budget;
    let drop_score = req.drop_value + req.outside_value * w / p_o;
    let mut best = (drop_score, req.drop_value, req.menu.len(), ChosenOption::DropOut, w);
    for (s, m) in req.menu.iter().enumerate() {
        let cost = problem.route_cost(s, prices);
        if !cost.is_finite() || cost > w + BUDGET_SLACK {
            continue;
        }
        let leftover = (w - cost).max(0.0);
        let score = m.value + req.outside_value * leftover / p_o;
        let candidate = (score, m.value, s, ChosenOption::Route(s), leftover);
        let better = score > best.0
            || (score == best.0 && (candidate.1 > best.1 || (candidate.1 == best.1 && candidate.2 < best.2)));
        if better {
            best = candidate;
        }
    }
    let mut demand = RouteSpaceDemand::zeros(req.menu.len());
    match best.3 {
        ChosenOption::Route(s) => {
            demand.theta[s] = 1.0;
            demand.outside = best.4 / p_o;
        }
        ChosenOption::DropOut => {
            demand.drop = 1.0;
            demand.outside = w / p_o;
        }
    }
    Ok((best.3, demand))
}

/// Inputs of the smoothed demand update: current market signals for this agent.
#[derive(Debug, Clone)]
pub struct XUpdateInput<'a> {
    pub omega: f64,
    pub lambda: f64,
    /// Expected allocation over the agent's constrained support.
    pub y: &'a [f64],
    /// Dense prices over all constrained edges.
    pub prices: &'a [f64],
    pub p_o: f64,
    pub beta: f64,
}

pub struct XUpdateOutput {
    pub demand: RouteSpaceDemand,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

const MAX_PG_STEPS: usize = 500;
const GRAD_TOL: f64 = 1e-8;
const ARMIJO_SIGMA: f64 = 1e-4;

/// The full demand-update objective over (route weights, outside option,
/// drop-out). Public so external oracles can difference it directly.
pub fn x_update_objective(problem: &AgentProblem, input: &XUpdateInput, z: &[f64]) -> f64 {
    let mut eval = Eval::new(problem, input);
    let n = problem.n_routes();
    eval.value_full(&z[..n], z[n], z[n + 1])
}

/// Analytic gradient of the full demand-update objective.
pub fn x_update_gradient(problem: &AgentProblem, input: &XUpdateInput, z: &[f64], out: &mut [f64]) {
    let mut eval = Eval::new(problem, input);
    let n = problem.n_routes();
    eval.grad_full(&z[..n], z[n], z[n + 1], out);
}

struct Eval<'a> {
    problem: &'a AgentProblem,
    input: &'a XUpdateInput<'a>,
    weight: f64,
    costs: Vec<f64>,
    xbuf: Vec<f64>,
}

impl<'a> Eval<'a> {
    fn new(problem: &'a AgentProblem, input: &'a XUpdateInput<'a>) -> Self {
        let costs = (0..problem.n_routes())
            .map(|s| problem.route_cost(s, input.prices))
            .collect();
        let weight = problem.req.budget + input.omega;
        let xbuf = vec![0.0; problem.csupport.len()];
        Eval { problem, input, weight, costs, xbuf }
    }

    /// Shared penalty terms: spending, selection penalty, proximity penalty.
    fn penalties(&mut self, theta: &[f64], xn: f64) -> f64 {
        let g = theta.iter().sum::<f64>() + xn - 1.0;
        self.problem.expand_constrained(theta, &mut self.xbuf);
        let beta = self.input.beta;
        let mut v = 0.0;
        v -= theta.iter().zip(&self.costs).map(|(t, c)| t * c).sum::<f64>();
        v -= self.input.lambda * g;
        v -= 0.5 * beta * g * g;
        v -= 0.5
            * beta
            * self
                .xbuf
                .iter()
                .zip(self.input.y)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        v
    }

    fn value_full(&mut self, theta: &[f64], xo: f64, xn: f64) -> f64 {
        let req = &self.problem.req;
        let f: f64 = theta.iter().zip(&req.menu).map(|(t, m)| t * m.value).sum::<f64>()
            + req.outside_value * xo
            + req.drop_value * xn;
        let mut v = self.penalties(theta, xn);
        if self.weight > 0.0 {
            v += self.weight * f.max(LOG_GUARD).ln();
        }
        v -= self.input.p_o * xo;
        v
    }

    fn grad_full(&mut self, theta: &[f64], xo: f64, xn: f64, out: &mut [f64]) {
        let req = &self.problem.req;
        let f: f64 = theta.iter().zip(&req.menu).map(|(t, m)| t * m.value).sum::<f64>()
            + req.outside_value * xo
            + req.drop_value * xn;
        let fh = f.max(LOG_GUARD);
        let wf = if self.weight > 0.0 { self.weight / fh } else { 0.0 };
        let g = theta.iter().sum::<f64>() + xn - 1.0;
        self.problem.expand_constrained(theta, &mut self.xbuf);
        let beta = self.input.beta;
        let n = self.problem.n_routes();
        for s in 0..n {
            let mut prox = 0.0;
            for &p in &self.problem.route_cpos[s] {
                prox += self.xbuf[p as usize] - self.input.y[p as usize];
            }
            out[s] =
                wf * req.menu[s].value - self.costs[s] - self.input.lambda - beta * g - beta * prox;
        }
        out[n] = wf * req.outside_value - self.input.p_o;
        out[n + 1] = wf * req.drop_value - self.input.lambda - beta * g;
    }

    /// Utility-with-optimal-outside-option term: the outside purchase has a
    /// closed-form partial maximizer, and substituting it leaves a smooth
    /// concave function of the remaining utility `a` that is linear below
    /// the purchase threshold (so the log never sees zero).
    fn phi(&self, a: f64) -> f64 {
        let w = self.weight;
        if w <= 0.0 {
            return 0.0;
        }
        let (vo, po) = (self.problem.req.outside_value, self.input.p_o);
        let threshold = w * vo / po;
        if a < threshold {
            w * threshold.max(LOG_GUARD).ln() - w + (po / vo) * a
        } else {
            w * a.max(LOG_GUARD).ln()
        }
    }

    fn phi_prime(&self, a: f64) -> f64 {
        let w = self.weight;
        if w <= 0.0 {
            return 0.0;
        }
        let (vo, po) = (self.problem.req.outside_value, self.input.p_o);
        let threshold = w * vo / po;
        if a < threshold {
            po / vo
        } else {
            w / a.max(LOG_GUARD)
        }
    }

    fn best_outside(&self, a: f64) -> f64 {
        let w = self.weight;
        if w <= 0.0 {
            return 0.0;
        }
        let (vo, po) = (self.problem.req.outside_value, self.input.p_o);
        ((w / po) - a / vo).max(0.0)
    }

    /// Reduced objective over (theta, x_nil) with the outside option at its
    /// partial optimum.
    fn value_reduced(&mut self, z: &[f64]) -> f64 {
        let n = self.problem.n_routes();
        let (theta, xn) = (&z[..n], z[n]);
        let req = &self.problem.req;
        let a: f64 = theta.iter().zip(&req.menu).map(|(t, m)| t * m.value).sum::<f64>()
            + req.drop_value * xn;
        self.phi(a) + self.penalties(theta, xn)
    }

    fn grad_reduced(&mut self, z: &[f64], out: &mut [f64]) {
        let n = self.problem.n_routes();
        let (theta, xn) = (&z[..n], z[n]);
        let req = &self.problem.req;
        let a: f64 = theta.iter().zip(&req.menu).map(|(t, m)| t * m.value).sum::<f64>()
            + req.drop_value * xn;
        let da = self.phi_prime(a);
        let g = theta.iter().sum::<f64>() + xn - 1.0;
        self.problem.expand_constrained(theta, &mut self.xbuf);
        let beta = self.input.beta;
        for s in 0..n {
            let mut prox = 0.0;
            for &p in &self.problem.route_cpos[s] {
                prox += self.xbuf[p as usize] - self.input.y[p as usize];
            }
            out[s] =
                da * req.menu[s].value - self.costs[s] - self.input.lambda - beta * g - beta * prox;
        }
        out[n] = da * req.drop_value - self.input.lambda - beta * g;
    }
}

fn projected_grad_norm(z: &[f64], grad: &[f64]) -> f64 {
    z.iter()
        .zip(grad)
        .map(|(&zi, &gi)| if zi > 0.0 { gi } else { gi.max(0.0) })
        .map(|p| p * p)
        .sum::<f64>()
        .sqrt()
}

/// Smoothed demand update: maximizes the budget-weighted log utility minus
/// spending, the selection-constraint penalty, and the proximity penalty to
/// the expected allocation, over nonnegative route weights.
///
/// Projected gradient ascent on (route weights, drop-out) with a spectral
/// initial step and Armijo backtracking, warm-started from the previous
/// iterate; the outside-option coordinate is maximized in closed form.
pub fn solve_x_update(
    problem: &AgentProblem,
    input: &XUpdateInput,
    warm: Option<&RouteSpaceDemand>,
) -> Result<XUpdateOutput, AgentError> {
    let n = problem.n_routes();
    if input.y.len() != problem.csupport.len() {
        return Err(AgentError::DimensionMismatch);
    }
    let finite = input.omega.is_finite()
        && input.lambda.is_finite()
        && input.beta > 0.0
        && input.p_o > 0.0
        && input.y.iter().all(|v| v.is_finite())
        && problem
            .route_cidx
            .iter()
            .flatten()
            .all(|&c| !input.prices[c as usize].is_nan());
    if !finite {
        return Err(AgentError::NonFiniteInput);
    }
    if problem.req.budget + input.omega < 0.0 {
        return Err(AgentError::NonFiniteInput);
    }

    let mut eval = Eval::new(problem, input);
    let mut z = vec![0.0; n + 1];
    if let Some(w) = warm {
        z[..n].copy_from_slice(&w.theta);
        z[n] = w.drop;
    }
    let mut grad = vec![0.0; n + 1];
    let mut fz = eval.value_reduced(&z);
    eval.grad_reduced(&z, &mut grad);
    let mut step = 1.0 / input.beta.max(1.0);
    let mut prev_z: Option<Vec<f64>> = None;
    let mut prev_grad: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut fp_limited = false;

    for iter in 0..MAX_PG_STEPS {
        iterations = iter;
        let pg = projected_grad_norm(&z, &grad);
        if pg <= GRAD_TOL {
            break;
        }
        // Spectral (Barzilai-Borwein) step from the last displacement.
        if let (Some(pz), Some(pgd)) = (&prev_z, &prev_grad) {
            let mut sty = 0.0;
            let mut sts = 0.0;
            for i in 0..z.len() {
                let si = z[i] - pz[i];
                let yi = pgd[i] - grad[i];
                sty += si * yi;
                sts += si * si;
            }
            if sty > 0.0 && sts > 0.0 {
                step = (sts / sty).clamp(1e-10, 1e8);
            }
        }
        prev_z = Some(z.clone());
        prev_grad = Some(grad.clone());

        let mut t = step;
        let mut accepted = false;
        let mut resolution_limited = false;
        for _ in 0..80 {
            let trial: Vec<f64> = z
                .iter()
                .zip(&grad)
                .map(|(&zi, &gi)| (zi + t * gi).max(0.0))
                .collect();
            let dir: f64 = trial
                .iter()
                .zip(&z)
                .zip(&grad)
                .map(|((ti, zi), gi)| (ti - zi) * gi)
                .sum();
            if dir <= 1e-14 * (1.0 + fz.abs()) {
                // No direction with measurable ascent remains at this scale.
                resolution_limited = true;
                break;
            }
            let ft = eval.value_reduced(&trial);
            if ft >= fz + ARMIJO_SIGMA * dir {
                z = trial;
                fz = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if resolution_limited || !accepted {
            fp_limited = true;
            break;
        }
        eval.grad_reduced(&z, &mut grad);
    }

    let pg = projected_grad_norm(&z, &grad);
    let req = &problem.req;
    let a: f64 = z[..n].iter().zip(&req.menu).map(|(t, m)| t * m.value).sum::<f64>()
        + req.drop_value * z[n];
    let outside = eval.best_outside(a);
    let demand = RouteSpaceDemand { theta: z[..n].to_vec(), outside, drop: z[n] };
    let objective = x_update_objective(problem, input, &{
        let mut full = z[..n].to_vec();
        full.push(outside);
        full.push(z[n]);
        full
    });
    if pg > GRAD_TOL && !fp_limited && pg > 1e-6 {
        return Err(AgentError::SolverStalled {
            iters: MAX_PG_STEPS,
            grad_norm: pg,
            last: demand,
        });
    }
    Ok(XUpdateOutput { demand, objective, grad_norm: pg, iterations })
}
