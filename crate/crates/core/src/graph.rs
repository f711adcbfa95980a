//! Time-extended graph over a spatial region graph.
//!
//! Every region is replicated three times per step (arrival, main, departure)
//! and connected by four edge families: arrival edges into the main copy,
//! departure edges out of it, parking edges between consecutive steps, and
//! transit edges between the departure copy of one region and the arrival
//! copy of an adjacent region one step later. Arrival, departure and parking
//! edges carry finite capacities; transit edges are unconstrained and are
//! excluded from the priced edge set.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{GraphError, RouteError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Arrival-copy to main-copy edge, capacity `C_arr(r, t)`.
    Arrive,
    /// Main-copy to departure-copy edge, capacity `C_dep(r, t)`.
    Depart,
    /// Main-copy to main-copy edge across one step, capacity `C_park(r, t)`.
    Park,
    /// Departure-copy to arrival-copy edge between adjacent regions; unconstrained.
    Transit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Arr,
    Main,
    Dep,
}

/// A node of the time-extended graph, identified structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub region: u32,
    pub step: u32,
}

pub type EdgeId = usize;

#[derive(Debug, Clone)]
pub struct Edge {
    pub kind: EdgeKind,
    pub region: u32,
    /// Time step of the edge. Parking and transit edges span `step -> step + 1`.
    pub step: u32,
    /// Target region; differs from `region` only for transit edges.
    pub to_region: u32,
    /// Capacity; `f64::INFINITY` for transit edges.
    pub capacity: f64,
    /// Index into the constrained (priced) edge set, if any.
    pub cidx: Option<u32>,
}

impl Edge {
    pub fn source(&self) -> NodeRef {
        match self.kind {
            EdgeKind::Arrive => NodeRef { kind: NodeKind::Arr, region: self.region, step: self.step },
            EdgeKind::Depart => NodeRef { kind: NodeKind::Main, region: self.region, step: self.step },
            EdgeKind::Park => NodeRef { kind: NodeKind::Main, region: self.region, step: self.step },
            EdgeKind::Transit => NodeRef { kind: NodeKind::Dep, region: self.region, step: self.step },
        }
    }

    pub fn target(&self) -> NodeRef {
        match self.kind {
            EdgeKind::Arrive => NodeRef { kind: NodeKind::Main, region: self.region, step: self.step },
            EdgeKind::Depart => NodeRef { kind: NodeKind::Dep, region: self.region, step: self.step },
            EdgeKind::Park => NodeRef { kind: NodeKind::Main, region: self.region, step: self.step + 1 },
            EdgeKind::Transit => NodeRef { kind: NodeKind::Arr, region: self.to_region, step: self.step + 1 },
        }
    }
}

/// Per-region capacity profile over the horizon.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CapacityProfile {
    Constant(u32),
    PerStep(Vec<u32>),
}

impl CapacityProfile {
    pub fn at(&self, step: u32) -> u32 {
        match self {
            CapacityProfile::Constant(c) => *c,
            CapacityProfile::PerStep(v) => v[(step - 1) as usize],
        }
    }

    fn len_ok(&self, horizon: u32) -> bool {
        match self {
            CapacityProfile::Constant(_) => true,
            CapacityProfile::PerStep(v) => v.len() >= horizon as usize,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegionCaps {
    pub arrive: CapacityProfile,
    pub depart: CapacityProfile,
    pub park: CapacityProfile,
}

/// The spatial airspace graph: regions plus directed adjacency.
#[derive(Debug, Clone)]
pub struct SpatialGraph {
    pub regions: Vec<String>,
    /// Directed pairs of region indices.
    pub adjacency: Vec<(u32, u32)>,
    pub caps: Vec<RegionCaps>,
}

impl SpatialGraph {
    pub fn new(
        regions: Vec<String>,
        adjacency_names: &[(String, String)],
        caps: Vec<RegionCaps>,
    ) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        for (i, r) in regions.iter().enumerate() {
            if index.insert(r.clone(), i as u32).is_some() {
                return Err(GraphError::DuplicateRegion(r.clone()));
            }
        }
        let mut adjacency = Vec::with_capacity(adjacency_names.len());
        for (a, b) in adjacency_names {
            let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) else {
                return Err(GraphError::UnknownRegionInAdjacency(a.clone(), b.clone()));
            };
            if ia == ib {
                return Err(GraphError::SelfLoop(a.clone()));
            }
            adjacency.push((ia, ib));
        }
        adjacency.sort_unstable();
        adjacency.dedup();
        Ok(SpatialGraph { regions, adjacency, caps })
    }

    pub fn region_index(&self, name: &str) -> Option<u32> {
        self.regions.iter().position(|r| r == name).map(|i| i as u32)
    }
}

/// The time-extended graph with dense edge ids and a constrained-edge index.
#[derive(Debug, Clone)]
pub struct TimeExtendedGraph {
    pub horizon: u32,
    pub step_seconds: f64,
    pub regions: Vec<String>,
    pub adjacency: Vec<(u32, u32)>,
    pub edges: Vec<Edge>,
    pub n_constrained: usize,
    /// Capacity of each constrained edge, indexed by `cidx`.
    pub capacities: Vec<f64>,
    /// Time step of each constrained edge, indexed by `cidx`.
    pub constrained_steps: Vec<u32>,
    lookup: HashMap<(EdgeKind, u32, u32, u32), EdgeId>,
}

/// Builds the time-extended graph for `horizon` steps of `step_seconds` each.
///
/// Edge ids are assigned lexicographically over (kind, region, step, target
/// region), so identical inputs produce identical graphs.
pub fn build_time_extended(
    spatial: &SpatialGraph,
    horizon: u32,
    step_seconds: f64,
) -> Result<TimeExtendedGraph, GraphError> {
    if horizon < 1 {
        return Err(GraphError::ZeroHorizon(horizon));
    }
    if !(step_seconds > 0.0) {
        return Err(GraphError::NonPositiveStep(step_seconds));
    }
    let nr = spatial.regions.len() as u32;
    for (r, caps) in spatial.caps.iter().enumerate() {
        for (profile, need) in [
            (&caps.arrive, horizon),
            (&caps.depart, horizon),
            (&caps.park, horizon.saturating_sub(1)),
        ] {
            if !profile.len_ok(need) {
                return Err(GraphError::ProfileTooShort {
                    region: spatial.regions[r].clone(),
                    have: match profile {
                        CapacityProfile::PerStep(v) => v.len(),
                        CapacityProfile::Constant(_) => unreachable!(),
                    },
                    need: need as usize,
                });
            }
        }
    }

    // Outgoing adjacency sorted by target region, for deterministic transit ids.
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); nr as usize];
    for &(a, b) in &spatial.adjacency {
        out[a as usize].push(b);
    }
    for v in &mut out {
        v.sort_unstable();
    }

    let mut edges = Vec::new();
    let mut lookup = HashMap::new();
    let mut capacities = Vec::new();
    let mut constrained_steps = Vec::new();
    let mut push = |edges: &mut Vec<Edge>,
                    capacities: &mut Vec<f64>,
                    constrained_steps: &mut Vec<u32>,
                    lookup: &mut HashMap<(EdgeKind, u32, u32, u32), EdgeId>,
                    kind: EdgeKind,
                    region: u32,
                    step: u32,
                    to_region: u32,
                    capacity: f64| {
        let id = edges.len();
        let cidx = if capacity.is_finite() {
            capacities.push(capacity);
            constrained_steps.push(step);
            Some((capacities.len() - 1) as u32)
        } else {
            None
        };
        edges.push(Edge { kind, region, step, to_region, capacity, cidx });
        lookup.insert((kind, region, step, to_region), id);
    };

    for r in 0..nr {
        for t in 1..=horizon {
            let c = spatial.caps[r as usize].arrive.at(t) as f64;
            push(&mut edges, &mut capacities, &mut constrained_steps, &mut lookup, EdgeKind::Arrive, r, t, r, c);
        }
    }
    for r in 0..nr {
        for t in 1..=horizon {
            let c = spatial.caps[r as usize].depart.at(t) as f64;
            push(&mut edges, &mut capacities, &mut constrained_steps, &mut lookup, EdgeKind::Depart, r, t, r, c);
        }
    }
    for r in 0..nr {
        for t in 1..horizon {
            let c = spatial.caps[r as usize].park.at(t) as f64;
            push(&mut edges, &mut capacities, &mut constrained_steps, &mut lookup, EdgeKind::Park, r, t, r, c);
        }
    }
    for r in 0..nr {
        for t in 1..horizon {
            for &r2 in &out[r as usize] {
                push(&mut edges, &mut capacities, &mut constrained_steps, &mut lookup, EdgeKind::Transit, r, t, r2, f64::INFINITY);
            }
        }
    }

    let n_constrained = capacities.len();
    Ok(TimeExtendedGraph {
        horizon,
        step_seconds,
        regions: spatial.regions.clone(),
        adjacency: spatial.adjacency.clone(),
        edges,
        n_constrained,
        capacities,
        constrained_steps,
        lookup,
    })
}

impl TimeExtendedGraph {
    pub fn node_count(&self) -> usize {
        3 * self.regions.len() * self.horizon as usize
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn find_edge(&self, kind: EdgeKind, region: u32, step: u32, to_region: u32) -> Option<EdgeId> {
        self.lookup.get(&(kind, region, step, to_region)).copied()
    }

    pub fn arrive_edge(&self, region: u32, step: u32) -> Option<EdgeId> {
        self.find_edge(EdgeKind::Arrive, region, step, region)
    }

    pub fn depart_edge(&self, region: u32, step: u32) -> Option<EdgeId> {
        self.find_edge(EdgeKind::Depart, region, step, region)
    }

    pub fn park_edge(&self, region: u32, step: u32) -> Option<EdgeId> {
        self.find_edge(EdgeKind::Park, region, step, region)
    }

    pub fn transit_edge(&self, from: u32, step: u32, to: u32) -> Option<EdgeId> {
        self.find_edge(EdgeKind::Transit, from, step, to)
    }

    pub fn count_kind(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Earliest time step at which an edge consumes capacity.
    pub fn edge_step(&self, id: EdgeId) -> u32 {
        self.edges[id].step
    }
}

/// A path on the time-extended graph, stored as its ordered edge ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<EdgeId>,
}

/// Validity report for a route, including the detected departing edge.
#[derive(Debug, Clone)]
pub struct RouteInfo {
    /// First departure edge along the route, or the first edge of an
    /// all-parking route. Carries the route's whole valuation.
    pub departing_edge: EdgeId,
    /// True when the departing edge is a parking edge (the route never
    /// leaves its origin region).
    pub departs_via_parking: bool,
    pub origin: u32,
    pub destination: u32,
    pub departure_step: u32,
    pub end_step: u32,
}

/// Checks that a route is a connected path with legal edge-kind transitions
/// and advancing time, and locates its departing edge.
pub fn validate_route(graph: &TimeExtendedGraph, route: &Route) -> Result<RouteInfo, RouteError> {
    if route.edges.is_empty() {
        return Err(RouteError::Empty);
    }
    for &id in &route.edges {
        if id >= graph.edges.len() {
            return Err(RouteError::UnknownEdge(id));
        }
    }
    let first = &graph.edges[route.edges[0]];
    if !matches!(first.kind, EdgeKind::Depart | EdgeKind::Park) {
        return Err(RouteError::Invalid {
            index: 0,
            reason: "route must start at a main node with a departure or parking edge".into(),
        });
    }
    let mut prev = first;
    for (i, &id) in route.edges.iter().enumerate().skip(1) {
        let edge = &graph.edges[id];
        if prev.target() != edge.source() {
            return Err(RouteError::Invalid {
                index: i,
                reason: format!(
                    "edge does not continue the path: expected source {:?}, got {:?}",
                    prev.target(),
                    edge.source()
                ),
            });
        }
        let legal = matches!(
            (prev.kind, edge.kind),
            (EdgeKind::Arrive, EdgeKind::Park)
                | (EdgeKind::Arrive, EdgeKind::Depart)
                | (EdgeKind::Depart, EdgeKind::Transit)
                | (EdgeKind::Transit, EdgeKind::Arrive)
                | (EdgeKind::Park, EdgeKind::Park)
                | (EdgeKind::Park, EdgeKind::Depart)
        );
        if !legal {
            return Err(RouteError::Invalid {
                index: i,
                reason: format!("illegal transition {:?} -> {:?}", prev.kind, edge.kind),
            });
        }
        prev = edge;
    }
    let last = &graph.edges[*route.edges.last().unwrap()];
    if last.kind == EdgeKind::Depart {
        return Err(RouteError::Invalid {
            index: route.edges.len() - 1,
            reason: "route ends on a dangling departure edge".into(),
        });
    }

    // Departing edge: the first departure out of the origin region, or the
    // first parking edge when the route never departs.
    let departing = route
        .edges
        .iter()
        .position(|&id| graph.edges[id].kind == EdgeKind::Depart)
        .unwrap_or(0);
    let dep_edge = &graph.edges[route.edges[departing]];
    Ok(RouteInfo {
        departing_edge: route.edges[departing],
        departs_via_parking: dep_edge.kind == EdgeKind::Park,
        origin: first.region,
        destination: last.target().region,
        departure_step: dep_edge.step,
        end_step: last.target().step,
    })
}
