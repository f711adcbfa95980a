//! Service-provider side of the distributed equilibrium computation: the
//! inner ADMM loop over demands, expected allocations, surplus and prices,
//! the outer fixed-point loop on the budget adjustments, the three
//! termination metrics, and the per-iteration convergence trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{solve_x_update, AgentProblem, RouteSpaceDemand, XUpdateInput};
use crate::error::AgentError;
use crate::util::pairwise_sum;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// ADMM step size.
    pub beta: f64,
    /// Inner iterations per outer step.
    pub inner_iters: usize,
    /// Maximum outer steps.
    pub outer_iters: usize,
    pub tol_ce: f64,
    pub tol_ice: f64,
    pub tol_eae: f64,
    /// Price of one unit of the outside option.
    pub outside_price: f64,
    /// When set, the per-agent duals restart at zero after each outer step
    /// instead of carrying over.
    #[serde(default)]
    pub reset_lambda_each_outer: bool,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.beta > 0.0
            && self.inner_iters >= 1
            && self.outer_iters >= 1
            && self.tol_ce > 0.0
            && self.tol_ice > 0.0
            && self.tol_eae > 0.0
            && self.outside_price > 0.0;
        if ok {
            Ok(())
        } else {
            Err("solver configuration values must be positive".into())
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta: 50.0,
            inner_iters: 30,
            outer_iters: 100,
            tol_ce: 1e-3,
            tol_ice: 1e-4,
            tol_eae: 1e-3,
            outside_price: 1.0,
            reset_lambda_each_outer: false,
        }
    }
}

/// Closed-form joint update of the expected allocation and surplus for one
/// edge, given every agent's demand on it.
///
/// With `m` agents and total demand `X`: the surplus is
/// `z = max(0, cap - X - (m+1) p / beta)` and every agent's expected
/// allocation shifts by the common deficit `d = (X + z - cap) / (m+1)`,
/// `y_u = x_u - d`.
pub fn sp_update_y_z(
    demands: &[f64],
    price: f64,
    _surplus_prev: f64,
    beta: f64,
    cap: f64,
) -> (Vec<f64>, f64) {
    let m = demands.len() as f64;
    let total: f64 = pairwise_sum(demands);
    let z = (cap - total - (m + 1.0) * price / beta).max(0.0);
    let d = (total + z - cap) / (m + 1.0);
    (demands.iter().map(|x| x - d).collect(), z)
}

/// Price ascent step: `p' = p + beta (sum_u y_u + z - cap)`, unprojected.
pub fn sp_update_prices(price: f64, expected: &[f64], surplus: f64, beta: f64, cap: f64) -> f64 {
    price + beta * (pairwise_sum(expected) + surplus - cap)
}

/// Dual step on one agent's selection constraint.
pub fn sp_update_lambda(lambda: f64, selection_sum: f64, beta: f64) -> f64 {
    lambda + beta * (selection_sum - 1.0)
}

/// Outer fixed-point step: budget adjustments take the clamped duals.
pub fn outer_update_omega(lambda: &[f64]) -> Vec<f64> {
    lambda.iter().map(|l| l.max(0.0)).collect()
}

/// Complementarity error: rms of price times excess demand over the
/// constrained edges.
pub fn metric_ce(prices: &[f64], excess: &[f64]) -> f64 {
    let sq: Vec<f64> = prices
        .iter()
        .zip(excess)
        .map(|(p, z)| (p * z) * (p * z))
        .collect();
    pairwise_sum(&sq).sqrt()
}

/// Individual constraint error: worst deviation of any agent's selection sum
/// from one.
pub fn metric_ice(selection_sums: &[f64]) -> f64 {
    selection_sums
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Expected allocation error: worst gap between expected and demanded
/// allocation over agents and edges.
pub fn metric_eae(expected: &[Vec<f64>], demands: &[Vec<f64>]) -> f64 {
    expected
        .iter()
        .zip(demands)
        .flat_map(|(ys, xs)| ys.iter().zip(xs).map(|(y, x)| (y - x).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub ce: f64,
    pub ice: f64,
    pub eae: f64,
    pub max_price: f64,
    pub omega_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct MarketOutcome {
    /// Per-agent fractional demand at the final iterate.
    pub demands: Vec<RouteSpaceDemand>,
    /// Final prices clamped to be nonnegative, dense over constrained edges.
    pub prices: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub report: ConvergenceReport,
}

/// Market state owned by the service-provider loop. Agents only ever see
/// read-only snapshots of their own signals.
struct LoopState {
    prices: Vec<f64>,
    total_demand: Vec<f64>,
    surplus: Vec<f64>,
    deficit: Vec<f64>,
    lambda: Vec<f64>,
    omega: Vec<f64>,
    demands: Vec<RouteSpaceDemand>,
    /// Per agent, amounts over its constrained support.
    x_support: Vec<Vec<f64>>,
    y_support: Vec<Vec<f64>>,
}

/// Runs the two-loop scheme on a set of agent problems sharing the
/// constrained-edge capacities `caps`. Inactive edges (e.g. in the past of
/// the current auction window) are skipped entirely.
///
/// Exhausting both loops is not an error: the final iterate is returned
/// tagged as non-converged.
pub fn run_algorithm1(
    problems: &[AgentProblem],
    caps: &[f64],
    active: Option<&[bool]>,
    config: &SolverConfig,
) -> Result<MarketOutcome, AgentError> {
    let n_edges = caps.len();
    let m = problems.len();
    let beta = config.beta;
    let mut st = LoopState {
        prices: vec![0.0; n_edges],
        total_demand: vec![0.0; n_edges],
        surplus: vec![0.0; n_edges],
        deficit: vec![0.0; n_edges],
        lambda: vec![0.0; m],
        omega: vec![0.0; m],
        demands: problems.iter().map(|p| RouteSpaceDemand::zeros(p.n_routes())).collect(),
        x_support: problems.iter().map(|p| vec![0.0; p.csupport.len()]).collect(),
        y_support: problems.iter().map(|p| vec![0.0; p.csupport.len()]).collect(),
    };
    let is_active = |e: usize| active.map_or(true, |a| a[e]);

    // Only edges some menu touches ever see nonzero demand, deficit or
    // price; everything else stays at its initial state for the whole run.
    let touched: Vec<usize> = {
        let mut seen = vec![false; n_edges];
        for p in problems {
            for &c in &p.csupport {
                seen[c as usize] = true;
            }
        }
        (0..n_edges).filter(|&e| seen[e] && is_active(e)).collect()
    };

    let mut rows = Vec::new();
    let mut ce_buf = vec![0.0; touched.len()];
    let mut inner_total = 0usize;
    for k in 0..config.outer_iters {
        for _n in 0..config.inner_iters {
            // Distributed demand updates; each agent sees only its own signals.
            let updated: Result<Vec<_>, AgentError> = problems
                .par_iter()
                .enumerate()
                .map(|(u, p)| {
                    let input = XUpdateInput {
                        omega: st.omega[u],
                        lambda: st.lambda[u],
                        y: &st.y_support[u],
                        prices: &st.prices,
                        p_o: config.outside_price,
                        beta,
                    };
                    solve_x_update(p, &input, Some(&st.demands[u])).map(|o| o.demand)
                })
                .collect();
            let updated = updated?;
            st.demands = updated;
            for (u, p) in problems.iter().enumerate() {
                let x = &mut st.x_support[u];
                p.expand_constrained(&st.demands[u].theta, x);
            }

            // Aggregate demand in fixed agent order, then the per-edge closed
            // form for surplus and the common deficit.
            for p in problems {
                for &c in &p.csupport {
                    st.total_demand[c as usize] = 0.0;
                }
            }
            for (u, p) in problems.iter().enumerate() {
                for (pos, &c) in p.csupport.iter().enumerate() {
                    st.total_demand[c as usize] += st.x_support[u][pos];
                }
            }
            for &e in &touched {
                let total = st.total_demand[e];
                let z = (caps[e] - total - (m as f64 + 1.0) * st.prices[e] / beta).max(0.0);
                st.surplus[e] = z;
                st.deficit[e] = (total + z - caps[e]) / (m as f64 + 1.0);
            }
            for (u, p) in problems.iter().enumerate() {
                for (pos, &c) in p.csupport.iter().enumerate() {
                    st.y_support[u][pos] = st.x_support[u][pos] - st.deficit[c as usize];
                }
            }
            for &e in &touched {
                // sum_u y_u + z - cap, written through the aggregates
                let residual =
                    (st.total_demand[e] - m as f64 * st.deficit[e]) + st.surplus[e] - caps[e];
                st.prices[e] += beta * residual;
            }
            for (u, d) in st.demands.iter().enumerate() {
                st.lambda[u] = sp_update_lambda(st.lambda[u], d.selection_sum(), beta);
            }
            inner_total += 1;

            // Termination metrics on the updated iterates. Untouched edges
            // carry zero price and deficit and cannot contribute.
            let ce = {
                for (i, &e) in touched.iter().enumerate() {
                    let z = st.total_demand[e] - caps[e];
                    ce_buf[i] = (st.prices[e] * z) * (st.prices[e] * z);
                }
                pairwise_sum(&ce_buf).sqrt()
            };
            let ice = metric_ice(
                &st.demands.iter().map(|d| d.selection_sum()).collect::<Vec<_>>(),
            );
            let eae = touched
                .iter()
                .map(|&e| st.deficit[e].abs())
                .fold(0.0, f64::max);
            let max_price = touched
                .iter()
                .map(|&e| st.prices[e])
                .fold(0.0, f64::max);
            let omega_norm = pairwise_sum(&st.omega.iter().map(|o| o * o).collect::<Vec<_>>()).sqrt();
            rows.push(TraceRow { iteration: inner_total, ce, ice, eae, max_price, omega_norm });

            if ce <= config.tol_ce && ice <= config.tol_ice && eae <= config.tol_eae {
                return Ok(finish(st, rows, inner_total, k + 1, true));
            }
        }
        st.omega = outer_update_omega(&st.lambda);
        if config.reset_lambda_each_outer {
            st.lambda.fill(0.0);
        }
    }
    let outer = config.outer_iters;
    Ok(finish(st, rows, inner_total, outer, false))
}

fn finish(
    st: LoopState,
    rows: Vec<TraceRow>,
    inner: usize,
    outer: usize,
    converged: bool,
) -> MarketOutcome {
    MarketOutcome {
        demands: st.demands,
        prices: st.prices.iter().map(|p| p.max(0.0)).collect(),
        lambda: st.lambda,
        omega: st.omega,
        report: ConvergenceReport {
            converged,
            inner_iterations: inner,
            outer_iterations: outer,
            rows,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{MenuRoute, VehicleRequest};
    use crate::graph::{
        build_time_extended, CapacityProfile, RegionCaps, Route, SpatialGraph, TimeExtendedGraph,
    };

    #[test]
    fn yz_closed_form_examples() {
        // demand equals supply at zero price: stationary
        let (y, z) = sp_update_y_z(&[1.0], 0.0, 0.0, 50.0, 1.0);
        assert_eq!(z, 0.0);
        assert!((y[0] - 1.0).abs() < 1e-12);
        // over-demand splits the deficit between agent and surplus
        let (y, z) = sp_update_y_z(&[2.0], 0.0, 0.0, 50.0, 1.0);
        assert_eq!(z, 0.0);
        assert!((y[0] - 1.5).abs() < 1e-12);
        // idle capacity becomes surplus
        let (y, z) = sp_update_y_z(&[0.0], 0.0, 0.0, 50.0, 1.0);
        assert!((z - 1.0).abs() < 1e-12);
        assert!(y[0].abs() < 1e-12);
    }

    #[test]
    fn price_update_examples() {
        assert_eq!(sp_update_prices(3.0, &[0.5, 0.5], 0.0, 50.0, 1.0), 3.0);
        assert!((sp_update_prices(0.0, &[1.1], 0.0, 50.0, 1.0) - 5.0).abs() < 1e-12);
        // transient negativity is allowed
        assert!((sp_update_prices(5.0, &[0.8], 0.0, 50.0, 1.0) - -5.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_update_examples() {
        assert_eq!(sp_update_lambda(2.0, 1.0, 50.0), 2.0);
        assert!((sp_update_lambda(0.0, 1.1, 50.0) - 5.0).abs() < 1e-9);
        assert!((sp_update_lambda(2.0, 0.9, 50.0) - -3.0).abs() < 1e-9);
    }

    #[test]
    fn omega_clamps_at_zero() {
        assert_eq!(outer_update_omega(&[3.0, 0.5]), vec![3.0, 0.5]);
        assert_eq!(outer_update_omega(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(outer_update_omega(&[0.0]), vec![0.0]);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(metric_ce(&[2.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!((metric_ce(&[3.0, 4.0], &[1.0, 1.0]) - 5.0).abs() < 1e-12);
        assert_eq!(metric_eae(&[vec![0.3, 0.7]], &[vec![0.3, 0.7]]), 0.0);
        assert!((metric_ice(&[1.05, 0.9]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stationary_state_leaves_price_and_lambda_unchanged() {
        // With y = x, z = 0, total demand exactly at capacity and selection
        // sums at one, a full service-provider pass is a no-op on (p, lambda).
        let (y, z) = sp_update_y_z(&[0.4, 0.6], 2.0, 0.0, 50.0, 1.0);
        assert_eq!(z, 0.0);
        assert!((y[0] - 0.4).abs() < 1e-12 && (y[1] - 0.6).abs() < 1e-12);
        let p2 = sp_update_prices(2.0, &y, z, 50.0, 1.0);
        assert!((p2 - 2.0).abs() < 1e-12);
        assert_eq!(sp_update_lambda(7.0, 1.0, 50.0), 7.0);
    }

    pub(crate) fn tiny_graph() -> TimeExtendedGraph {
        let caps = RegionCaps {
            arrive: CapacityProfile::Constant(4),
            depart: CapacityProfile::Constant(4),
            park: CapacityProfile::Constant(4),
        };
        let spatial = SpatialGraph::new(
            vec!["A".into(), "B".into(), "C".into(), "D".into()],
            &[
                ("A".into(), "B".into()),
                ("A".into(), "C".into()),
                ("A".into(), "D".into()),
            ],
            vec![caps.clone(), caps.clone(), caps.clone(), caps],
        )
        .unwrap();
        build_time_extended(&spatial, 4, 10.0).unwrap()
    }

    fn hop(g: &TimeExtendedGraph, from: u32, to: u32, t: u32) -> Route {
        Route {
            edges: vec![
                g.depart_edge(from, t).unwrap(),
                g.transit_edge(from, t, to).unwrap(),
                g.arrive_edge(to, t + 1).unwrap(),
            ],
        }
    }

    #[test]
    fn single_agent_ample_capacity_converges_to_zero_prices() {
        let g = tiny_graph();
        let req = VehicleRequest {
            id: "a0".into(),
            menu: vec![
                MenuRoute { route: hop(&g, 0, 1, 1), value: 200.0 },
                MenuRoute { route: hop(&g, 0, 1, 2), value: 190.0 },
            ],
            preferred: 0,
            drop_value: 40.0,
            outside_value: 1.0,
            budget: 200.0,
            rebase_count: 0,
        };
        let problems = vec![AgentProblem::new(&g, req).unwrap()];
        let cfg = SolverConfig { outer_iters: 200, ..SolverConfig::default() };
        let out = run_algorithm1(&problems, &g.capacities, None, &cfg).unwrap();
        assert!(out.report.converged, "expected convergence, trace: {:?}", out.report.rows.last());
        assert!((out.demands[0].theta[0] - 1.0).abs() < 5e-3, "theta = {:?}", out.demands[0].theta);
        assert!(out.prices.iter().all(|&p| p <= 1e-6), "max price {}", out.prices.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn shared_unit_edge_gets_positive_price() {
        let g = tiny_graph();
        // both agents prefer the same A->B hop; each has a private alternative
        let mk = |alt_to: u32, budget: f64| VehicleRequest {
            id: format!("a{alt_to}"),
            menu: vec![
                MenuRoute { route: hop(&g, 0, 1, 1), value: 200.0 },
                MenuRoute { route: hop(&g, 0, alt_to, 2), value: 190.0 },
            ],
            preferred: 0,
            drop_value: 40.0,
            outside_value: 1.0,
            budget,
            rebase_count: 0,
        };
        let problems = vec![
            AgentProblem::new(&g, mk(2, 200.0)).unwrap(),
            AgentProblem::new(&g, mk(3, 150.0)).unwrap(),
        ];
        let mut caps = g.capacities.clone();
        // the contested resource: B's arrival at t=2 has one slot
        let shared = g.arrive_edge(1, 2).unwrap();
        caps[g.edges[shared].cidx.unwrap() as usize] = 1.0;
        let cfg = SolverConfig { outer_iters: 400, ..SolverConfig::default() };
        let out = run_algorithm1(&problems, &caps, None, &cfg).unwrap();
        assert!(out.report.converged, "not converged: {:?}", out.report.rows.last());
        let c = g.edges[shared].cidx.unwrap() as usize;
        assert!(out.prices[c] > 0.0, "expected positive price on the contested edge");
        let demand: f64 = out.demands.iter().map(|d| d.theta[0]).sum();
        assert!(demand <= 1.0 + 10.0 * cfg.tol_ce, "total demand {demand}");
    }

    #[test]
    fn traces_are_bitwise_reproducible() {
        let g = tiny_graph();
        let mk = |alt_to: u32, budget: f64| VehicleRequest {
            id: format!("a{alt_to}"),
            menu: vec![
                MenuRoute { route: hop(&g, 0, 1, 1), value: 210.0 },
                MenuRoute { route: hop(&g, 0, alt_to, 2), value: 180.0 },
            ],
            preferred: 0,
            drop_value: 40.0,
            outside_value: 1.0,
            budget,
            rebase_count: 0,
        };
        let problems = vec![
            AgentProblem::new(&g, mk(2, 170.0)).unwrap(),
            AgentProblem::new(&g, mk(3, 230.0)).unwrap(),
        ];
        let mut caps = g.capacities.clone();
        let shared = g.arrive_edge(1, 2).unwrap();
        caps[g.edges[shared].cidx.unwrap() as usize] = 1.0;
        let cfg = SolverConfig { outer_iters: 50, ..SolverConfig::default() };
        let a = run_algorithm1(&problems, &caps, None, &cfg).unwrap();
        let b = run_algorithm1(&problems, &caps, None, &cfg).unwrap();
        assert_eq!(a.report.rows.len(), b.report.rows.len());
        for (ra, rb) in a.report.rows.iter().zip(&b.report.rows) {
            assert_eq!(ra.ce.to_bits(), rb.ce.to_bits());
            assert_eq!(ra.ice.to_bits(), rb.ice.to_bits());
            assert_eq!(ra.eae.to_bits(), rb.eae.to_bits());
            assert_eq!(ra.max_price.to_bits(), rb.max_price.to_bits());
        }
        for (pa, pb) in a.prices.iter().zip(&b.prices) {
            assert_eq!(pa.to_bits(), pb.to_bits());
        }
    }

    #[test]
    fn omega_trace_stays_nonnegative_and_finite() {
        let g = tiny_graph();
        let req = VehicleRequest {
            id: "solo".into(),
            menu: vec![MenuRoute { route: hop(&g, 0, 1, 1), value: 160.0 }],
            preferred: 0,
            drop_value: 40.0,
            outside_value: 1.0,
            budget: 100.0,
            rebase_count: 0,
        };
        let problems = vec![AgentProblem::new(&g, req).unwrap()];
        let cfg = SolverConfig { outer_iters: 30, ..SolverConfig::default() };
        let out = run_algorithm1(&problems, &g.capacities, None, &cfg).unwrap();
        assert!(out.omega.iter().all(|&o| o >= 0.0));
        for row in &out.report.rows {
            assert!(row.ce.is_finite() && row.ice.is_finite() && row.eae.is_finite());
            assert!(row.omega_norm >= 0.0);
        }
    }
}
