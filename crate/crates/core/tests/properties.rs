//! Property tests for the constraint systems: route-cone membership under
//! arbitrary nonnegative weights, and weight recovery from expanded
//! allocations on randomly generated small menus.

use proptest::prelude::*;

use airmarket::constraints::build_constraints;
use airmarket::graph::{
    build_time_extended, CapacityProfile, RegionCaps, Route, SpatialGraph, TimeExtendedGraph,
};

fn small_graph(horizon: u32) -> TimeExtendedGraph {
    let caps = RegionCaps {
        arrive: CapacityProfile::Constant(3),
        depart: CapacityProfile::Constant(3),
        park: CapacityProfile::Constant(3),
    };
    let spatial = SpatialGraph::new(
        vec!["A".into(), "B".into(), "C".into(), "D".into()],
        &[
            ("A".into(), "B".into()),
            ("B".into(), "C".into()),
            ("B".into(), "D".into()),
            ("C".into(), "D".into()),
        ],
        vec![caps.clone(), caps.clone(), caps.clone(), caps],
    )
    .unwrap();
    build_time_extended(&spatial, horizon, 10.0).unwrap()
}

/// Out-and-dwell route along a region chain, departing at `depart`.
fn chain_route(g: &TimeExtendedGraph, chain: &[u32], dwell_at: usize, depart: u32) -> Option<Route> {
    let mut edges = Vec::new();
    let mut t = depart;
    for i in 0..chain.len() - 1 {
        edges.push(g.depart_edge(chain[i], t)?);
        edges.push(g.transit_edge(chain[i], t, chain[i + 1])?);
        t += 1;
        edges.push(g.arrive_edge(chain[i + 1], t)?);
        if i + 1 == dwell_at && i + 1 < chain.len() - 1 {
            edges.push(g.park_edge(chain[i + 1], t)?);
            t += 1;
        }
    }
    Some(Route { edges })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn route_cone_membership(
        n_routes in 1usize..=4,
        depart in 1u32..=2,
        theta in proptest::collection::vec(0.0f64..3.0, 4),
    ) {
        let g = small_graph(10);
        // menu of departure-time variants along A -> B -> C with a dwell at B
        let chain = [0u32, 1, 2];
        let mut menu = Vec::new();
        for j in 0..n_routes {
            if let Some(r) = chain_route(&g, &chain, 1, depart + j as u32) {
                menu.push(r);
            }
        }
        prop_assume!(menu.len() == n_routes);
        let cs = build_constraints(&g, &menu).unwrap();
        let theta = &theta[..n_routes];
        let x = cs.expand(theta);
        for r in cs.row_residuals(&x) {
            prop_assert!(r.abs() < 1e-9, "stacked row violated: {r}");
        }
        let want: f64 = theta.iter().sum();
        prop_assert!((cs.indicator_dot(&x) - want).abs() < 1e-9);
    }

    #[test]
    fn weights_recoverable_from_expansion(
        n_routes in 1usize..=4,
        theta in proptest::collection::vec(0.0f64..2.0, 4),
    ) {
        let g = small_graph(12);
        let chain = [0u32, 1, 3];
        let mut menu = Vec::new();
        for j in 0..n_routes {
            if let Some(r) = chain_route(&g, &chain, 1, 1 + j as u32) {
                menu.push(r);
            }
        }
        prop_assume!(menu.len() == n_routes);
        let cs = build_constraints(&g, &menu).unwrap();
        let theta = &theta[..n_routes];
        let x = cs.expand(theta);
        // weights sit on the departing-edge coordinates; re-expanding them
        // must reproduce x exactly
        let recovered: Vec<f64> = cs.departing_col.iter().map(|&c| x[c]).collect();
        for (a, b) in recovered.iter().zip(theta) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let back = cs.expand(&recovered);
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_endpoint_menus_still_satisfy_cone(
        theta in proptest::collection::vec(0.0f64..2.0, 3),
    ) {
        // a parking-only option next to timed departures, like the worked
        // three-region example
        let g = small_graph(8);
        let park_only = Route {
            edges: (1..5).map(|t| g.park_edge(0, t).unwrap()).collect(),
        };
        let direct = chain_route(&g, &[0, 1, 2], 1, 1).unwrap();
        let delayed = chain_route(&g, &[0, 1, 2], 1, 2).unwrap();
        let menu = vec![park_only, direct, delayed];
        let cs = build_constraints(&g, &menu).unwrap();
        let x = cs.expand(&theta);
        for r in cs.row_residuals(&x) {
            prop_assert!(r.abs() < 1e-9);
        }
        let want: f64 = theta.iter().sum();
        prop_assert!((cs.indicator_dot(&x) - want).abs() < 1e-9);
    }
}
