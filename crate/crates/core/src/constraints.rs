//! Per-agent constraint systems over a route menu.
//!
//! For a menu of validated routes the system consists of the departing-edge
//! indicator (one unit entry per route) and a stacked matrix with
//! flow-balance rows at every node the menu touches that is not a route
//! endpoint, plus route-matching rows tying each transit edge of a route to
//! that route's departing edge. Columns cover only edges some menu route
//! uses, so the per-agent subproblem stays small.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::MenuError;
use crate::graph::{EdgeId, EdgeKind, Route, TimeExtendedGraph};
use crate::graph::validate_route;

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    /// Sorted global edge ids forming the column space.
    pub support: Vec<EdgeId>,
    /// Sparse rows of the stacked matrix, as (column, coefficient) pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Column of each route's departing edge (the indicator entries).
    pub departing_col: Vec<usize>,
    /// Per route, the columns of all its edges.
    pub route_cols: Vec<Vec<usize>>,
    col_of: HashMap<EdgeId, usize>,
}

impl ConstraintSystem {
    pub fn n_routes(&self) -> usize {
        self.departing_col.len()
    }

    pub fn col(&self, edge: EdgeId) -> Option<usize> {
        self.col_of.get(&edge).copied()
    }

    /// Expands route weights into per-edge amounts over the support.
    pub fn expand(&self, theta: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.support.len()];
        for (s, cols) in self.route_cols.iter().enumerate() {
            for &c in cols {
                x[c] += theta[s];
            }
        }
        x
    }

    /// Indicator product: sum of x over departing-edge columns.
    pub fn indicator_dot(&self, x: &[f64]) -> f64 {
        self.departing_col.iter().map(|&c| x[c]).sum()
    }

    /// Residual of every stacked row at x; all-zero iff x lies in the
    /// route cone's linear span.
    pub fn row_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, a)| a * x[c]).sum())
            .collect()
    }
}

/// Builds the constraint system for a menu of routes.
///
/// Rejects menus whose route flows could not be told apart: duplicate or
/// shared departing edges, and transit edges shared between routes.
pub fn build_constraints(
    graph: &TimeExtendedGraph,
    menu: &[Route],
) -> Result<ConstraintSystem, MenuError> {
    if menu.is_empty() {
        return Err(MenuError::EmptyMenu);
    }
    let mut infos = Vec::with_capacity(menu.len());
    for (i, route) in menu.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for &e in &route.edges {
            if !seen.insert(e) {
                return Err(MenuError::RepeatedEdge(i, e));
            }
        }
        infos.push(validate_route(graph, route).map_err(|e| MenuError::BadRoute(i, e))?);
    }
    for i in 0..menu.len() {
        for j in (i + 1)..menu.len() {
            if infos[i].departing_edge == infos[j].departing_edge {
                return Err(MenuError::DuplicateDepartingEdge(i, j));
            }
        }
    }
    for (i, info) in infos.iter().enumerate() {
        for (j, route) in menu.iter().enumerate() {
            if i != j && route.edges.contains(&info.departing_edge) {
                return Err(MenuError::DepartingEdgeShared(i, j));
            }
        }
    }
    // A transit edge on two routes would tie their weights together through
    // the route-matching rows.
    {
        let mut owner: BTreeMap<EdgeId, usize> = BTreeMap::new();
        for (i, route) in menu.iter().enumerate() {
            for &e in &route.edges {
                if graph.edges[e].kind == EdgeKind::Transit {
                    if let Some(&j) = owner.get(&e) {
                        return Err(MenuError::SharedTransitEdge(j, i, e));
                    }
                    owner.insert(e, i);
                }
            }
        }
    }

    let mut support: Vec<EdgeId> = menu
        .iter()
        .flat_map(|r| r.edges.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    support.sort_unstable();
    let col_of: HashMap<EdgeId, usize> =
        support.iter().enumerate().map(|(c, &e)| (e, c)).collect();

    // Route endpoints carry unbalanced unit flow and get no balance row.
    let mut endpoints = BTreeSet::new();
    for (route, _info) in menu.iter().zip(&infos) {
        endpoints.insert(graph.edges[route.edges[0]].source());
        endpoints.insert(graph.edges[*route.edges.last().unwrap()].target());
    }

    let mut in_out: BTreeMap<_, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for &e in &support {
        let edge = &graph.edges[e];
        let c = col_of[&e];
        in_out.entry(edge.target()).or_default().0.push(c);
        in_out.entry(edge.source()).or_default().1.push(c);
    }

    let mut rows = Vec::new();
    for (node, (inc, outg)) in &in_out {
        if endpoints.contains(node) {
            continue;
        }
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(inc.len() + outg.len());
        for &c in inc {
            row.push((c, 1.0));
        }
        for &c in outg {
            row.push((c, -1.0));
        }
        row.sort_unstable_by_key(|&(c, _)| c);
        rows.push(row);
    }
    for (route, info) in menu.iter().zip(&infos) {
        let dep_col = col_of[&info.departing_edge];
        for &e in &route.edges {
            if graph.edges[e].kind == EdgeKind::Transit {
                rows.push(vec![(col_of[&e], 1.0), (dep_col, -1.0)]);
            }
        }
    }

    let departing_col = infos.iter().map(|i| col_of[&i.departing_edge]).collect();
    let route_cols = menu
        .iter()
        .map(|r| r.edges.iter().map(|e| col_of[e]).collect())
        .collect();

    Ok(ConstraintSystem { support, rows, departing_col, route_cols, col_of })
}
