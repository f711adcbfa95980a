//! Scenario files: the self-describing JSON document a campaign runs from,
//! the synthetic delivery-scenario generator, and the hardcoded vertiport
//! reservation fixture. All randomness resolves at generation time, so a
//! saved scenario replays without the generator.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::MenuRoute;
use crate::campaign::Mechanism;
use crate::error::ScenarioError;
use crate::graph::{
    build_time_extended, CapacityProfile, EdgeKind, RegionCaps, Route, SpatialGraph,
    TimeExtendedGraph,
};
use crate::market::SolverConfig;
use crate::util::{scale_capacity, RoundingMode};

pub const SCHEMA: &str = "airmarket-scenario-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Sector,
    Vertiport,
    Corridor,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegionSpec {
    pub name: String,
    pub kind: RegionKind,
    /// Capacities at the 100% level; the run scales them by the fraction.
    pub arrive: CapacityProfile,
    pub depart: CapacityProfile,
    pub park: CapacityProfile,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeSpec {
    pub kind: EdgeKind,
    pub region: String,
    pub step: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub to: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExplicitRoute {
    pub value: f64,
    pub departure: u32,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum MenuSpec {
    /// Preferred route along a spatial path plus one-step-delay variants.
    Rule {
        spatial_path: Vec<String>,
        /// Parking steps at each path region (same length as the path).
        dwell_steps: Vec<u32>,
        preferred_departure: u32,
        delay_alternatives: u32,
    },
    /// Fully enumerated routes; the first entry is the preferred one.
    Explicit { routes: Vec<ExplicitRoute> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RequestSpec {
    pub id: String,
    pub arrival_step: u32,
    pub origin: String,
    pub destination: String,
    pub base_value: f64,
    pub drop_value: f64,
    pub outside_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub initial_credits: Option<f64>,
    pub menu: MenuSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverSpec {
    pub beta: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub outside_price: f64,
    /// Absolute tolerances (ce, ice, eae); when absent the run derives them
    /// from the documented fraction-of-maximum formulas.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tolerances: Option<(f64, f64, f64)>,
    #[serde(default)]
    pub reset_lambda_each_outer: bool,
}

fn default_grant_to_rebased() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CampaignSpec {
    pub auctions: u32,
    pub grant_min: u32,
    pub grant_max: u32,
    #[serde(default = "default_grant_to_rebased")]
    pub grant_to_rebased: bool,
    pub mechanism: Mechanism,
    /// Valuation multiplier per rebase.
    pub rebase_factor: f64,
    /// Valuation multiplier per step of departure delay within a menu.
    pub delay_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioFile {
    pub schema: String,
    pub name: String,
    pub seed: u64,
    pub horizon_steps: u32,
    pub step_seconds: f64,
    pub capacity_fraction: f64,
    #[serde(default)]
    pub capacity_rounding: RoundingMode,
    pub regions: Vec<RegionSpec>,
    pub adjacency: Vec<(String, String)>,
    pub requests: Vec<RequestSpec>,
    pub solver: SolverSpec,
    pub campaign: CampaignSpec,
}

/// A scenario bound to its time-extended graph at a concrete capacity
/// fraction.
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub spatial: SpatialGraph,
    pub graph: TimeExtendedGraph,
    pub capacity_fraction: f64,
    region_index: std::collections::HashMap<String, u32>,
}

impl LoadedScenario {
    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.file.solver;
        let (ce, ice, eae) = s.tolerances.unwrap_or((1e-3, 1e-4, 1e-3));
        SolverConfig {
            beta: s.beta,
            inner_iters: s.inner_iters,
            outer_iters: s.outer_iters,
            tol_ce: ce,
            tol_ice: ice,
            tol_eae: eae,
            outside_price: s.outside_price,
            reset_lambda_each_outer: s.reset_lambda_each_outer,
        }
    }

    pub fn region(&self, name: &str) -> Option<u32> {
        self.region_index.get(name).copied()
    }
}

fn scaled_profile(p: &CapacityProfile, fraction: f64, mode: RoundingMode) -> CapacityProfile {
    match p {
        CapacityProfile::Constant(c) => CapacityProfile::Constant(scale_capacity(*c, fraction, mode)),
        CapacityProfile::PerStep(v) => {
            CapacityProfile::PerStep(v.iter().map(|&c| scale_capacity(c, fraction, mode)).collect())
        }
    }
}

/// Binds a scenario file to a graph, optionally overriding the capacity
/// fraction it was saved with.
pub fn load_scenario(
    file: ScenarioFile,
    fraction_override: Option<f64>,
) -> Result<LoadedScenario, ScenarioError> {
    if file.schema != SCHEMA {
        return Err(ScenarioError::Invalid(format!(
            "unsupported schema {:?}, expected {:?}",
            file.schema, SCHEMA
        )));
    }
    let fraction = fraction_override.unwrap_or(file.capacity_fraction);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ScenarioError::Invalid(format!(
            "capacity fraction must be in (0, 1], got {fraction}"
        )));
    }
    let names: Vec<String> = file.regions.iter().map(|r| r.name.clone()).collect();
    let caps: Vec<RegionCaps> = file
        .regions
        .iter()
        .map(|r| RegionCaps {
            arrive: scaled_profile(&r.arrive, fraction, file.capacity_rounding),
            depart: scaled_profile(&r.depart, fraction, file.capacity_rounding),
            park: scaled_profile(&r.park, fraction, file.capacity_rounding),
        })
        .collect();
    let spatial = SpatialGraph::new(names, &file.adjacency, caps)?;
    let graph = build_time_extended(&spatial, file.horizon_steps, file.step_seconds)?;
    let region_index = spatial
        .regions
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i as u32))
        .collect();
    let loaded = LoadedScenario { file, spatial, graph, capacity_fraction: fraction, region_index };

    for req in &loaded.file.requests {
        if loaded.region(&req.origin).is_none() {
            return Err(ScenarioError::UnknownRegion(req.origin.clone(), req.id.clone()));
        }
        if loaded.region(&req.destination).is_none() {
            return Err(ScenarioError::UnknownRegion(req.destination.clone(), req.id.clone()));
        }
        if req.arrival_step < 1 || req.arrival_step > loaded.file.horizon_steps {
            return Err(ScenarioError::BadRequest(
                req.id.clone(),
                format!("arrival step {} outside the horizon", req.arrival_step),
            ));
        }
        // the menu must at least build at its own requested departure
        let probe = build_menu(&loaded, req, 1, 0, 0, 0, loaded.file.horizon_steps);
        if probe.is_none() {
            return Err(ScenarioError::BadRequest(
                req.id.clone(),
                "preferred route does not fit the horizon".into(),
            ));
        }
    }
    Ok(loaded)
}

pub fn read_scenario(path: &std::path::Path) -> Result<ScenarioFile, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_scenario(path: &std::path::Path, file: &ScenarioFile) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Builds a route that departs `depart_step` and follows the spatial path
/// with the given dwell times. Returns None when any edge falls outside the
/// graph. Delay variants simply depart later; the waiting vehicle sits on
/// the ground outside the priced airspace.
fn build_rule_route(
    graph: &TimeExtendedGraph,
    regions: &[u32],
    dwells: &[u32],
    depart_step: u32,
) -> Option<Route> {
    let mut edges = Vec::new();
    let mut t = depart_step;
    for i in 0..regions.len() - 1 {
        edges.push(graph.depart_edge(regions[i], t)?);
        edges.push(graph.transit_edge(regions[i], t, regions[i + 1])?);
        t += 1;
        edges.push(graph.arrive_edge(regions[i + 1], t)?);
        let dwell = dwells[i + 1];
        if i + 1 < regions.len() - 1 {
            for _ in 0..dwell {
                edges.push(graph.park_edge(regions[i + 1], t)?);
                t += 1;
            }
        }
    }
    Some(Route { edges })
}

/// Materializes an agent's menu for an auction decided at `t_i`: the
/// departure shifts to the decision step when stale, and rebased menus are
/// time-shifted into the new window (preserving their position in it) with
/// their valuations cut per rebase.
pub fn build_menu(
    scenario: &LoadedScenario,
    spec: &RequestSpec,
    t_i: u32,
    window_stride: u32,
    rebases: u8,
    rebase_shift: u32,
    horizon: u32,
) -> Option<(Vec<MenuRoute>, usize)> {
    let graph = &scenario.graph;
    let rebase_scale = scenario.file.campaign.rebase_factor.powi(rebases as i32);
    // A plan whose departure predates the decision step moves one whole
    // window later instead of collapsing onto the decision step, so batched
    // requests keep their temporal spread.
    let retime = |dep: u32| -> u32 {
        let base = dep + rebase_shift;
        if base >= t_i {
            base
        } else {
            (base + window_stride).max(t_i)
        }
    };
    match &spec.menu {
        MenuSpec::Rule { spatial_path, dwell_steps, preferred_departure, delay_alternatives } => {
            let regions: Option<Vec<u32>> =
                spatial_path.iter().map(|n| scenario.region(n)).collect();
            let regions = regions?;
            let d_eff = retime(*preferred_departure);
            if d_eff > horizon {
                return None;
            }
            let mut menu = Vec::new();
            for j in 0..=*delay_alternatives {
                let depart = d_eff + j;
                if let Some(route) = build_rule_route(graph, &regions, dwell_steps, depart) {
                    let value = spec.base_value
                        * rebase_scale
                        * scenario.file.campaign.delay_factor.powi(j as i32);
                    menu.push(MenuRoute { route, value });
                } else if j == 0 {
                    return None;
                }
            }
            Some((menu, 0))
        }
        MenuSpec::Explicit { routes } => {
            if routes.is_empty() {
                return None;
            }
            let shift = retime(routes[0].departure) - routes[0].departure;
            let mut menu = Vec::new();
            let mut preferred = None;
            for (j, r) in routes.iter().enumerate() {
                let mut edges = Vec::with_capacity(r.edges.len());
                let mut ok = true;
                for e in &r.edges {
                    let region = match scenario.region(&e.region) {
                        Some(x) => x,
                        None => return None,
                    };
                    let to = match &e.to {
                        Some(name) => match scenario.region(name) {
                            Some(x) => x,
                            None => return None,
                        },
                        None => region,
                    };
                    match graph.find_edge(e.kind, region, e.step + shift, to) {
                        Some(id) => edges.push(id),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    if j == 0 {
                        preferred = Some(menu.len());
                    }
                    menu.push(MenuRoute { route: Route { edges }, value: r.value * rebase_scale });
                } else if j == 0 {
                    return None;
                }
            }
            preferred.map(|p| (menu, p))
        }
    }
}

/// Knobs of the synthetic drone-delivery scenario generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub name: String,
    pub sectors_x: u32,
    pub sectors_y: u32,
    pub vertiports: u32,
    pub flights: u32,
    pub horizon_steps: u32,
    pub step_seconds: f64,
    pub value_min: f64,
    pub value_max: f64,
    pub delay_factor: f64,
    pub rebase_factor: f64,
    pub drop_value: f64,
    pub outside_value: f64,
    pub outside_price: f64,
    pub delay_alternatives: u32,
    /// Steps spent inside each en-route sector before moving on.
    pub sector_dwell: u32,
    /// Steps spent at the delivery point.
    pub destination_dwell: u32,
    /// Fraction of the admissible window the arrival process is packed
    /// into; smaller values concentrate traffic.
    pub arrival_span: f64,
    /// Sampling weight of interior sectors as delivery destinations
    /// relative to border sectors; deliveries cluster downtown.
    pub interior_weight: u32,
    pub capacity_fraction: f64,
    pub grant_min: u32,
    pub grant_max: u32,
    pub auctions: u32,
    pub beta: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            name: "toulouse-like".into(),
            sectors_x: 4,
            sectors_y: 3,
            vertiports: 4,
            flights: 177,
            horizon_steps: 400,
            step_seconds: 15.0,
            value_min: 150.0,
            value_max: 250.0,
            delay_factor: 0.95,
            rebase_factor: 0.5,
            drop_value: 40.0,
            outside_value: 1.0,
            outside_price: 10.0,
            delay_alternatives: 4,
            sector_dwell: 0,
            destination_dwell: 2,
            arrival_span: 0.5,
            interior_weight: 6,
            capacity_fraction: 0.5,
            grant_min: 150,
            grant_max: 250,
            auctions: 13,
            beta: 50.0,
            inner_iters: 30,
            outer_iters: 400,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let ok = self.sectors_x >= 1
            && self.sectors_y >= 1
            && self.vertiports >= 1
            && self.flights >= 1
            && self.horizon_steps >= 4
            && self.value_min > 0.0
            && self.value_max >= self.value_min
            && self.delay_factor > 0.0
            && self.delay_factor <= 1.0
            && self.rebase_factor > 0.0
            && self.rebase_factor <= 1.0
            && self.drop_value > 0.0
            && self.outside_value > 0.0
            && self.outside_price > 0.0
            && self.capacity_fraction > 0.0
            && self.capacity_fraction <= 1.0
            && self.grant_min <= self.grant_max
            && self.arrival_span > 0.0
            && self.arrival_span <= 1.0
            && self.interior_weight >= 1
            && self.auctions >= 1
            && self.auctions <= self.horizon_steps;
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invalid("generator parameters out of range".into()))
        }
    }
}

/// Generates a drone-delivery scenario: a sector grid with vertiports on its
/// corners, Poisson flight arrivals, out-and-back shortest-path routes, and
/// per-region capacities set to the computed minimum that accommodates every
/// preferred route (the run scales them by the capacity fraction).
pub fn generate_scenario(params: &GeneratorParams, seed: u64) -> Result<ScenarioFile, ScenarioError> {
    params.validate()?;
    let nx = params.sectors_x as usize;
    let ny = params.sectors_y as usize;
    let n_sectors = nx * ny;
    let mut regions: Vec<RegionSpec> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for i in 0..n_sectors {
        let name = format!("S{:02}", i + 1);
        names.push(name.clone());
        regions.push(RegionSpec {
            name,
            kind: RegionKind::Sector,
            arrive: CapacityProfile::Constant(0),
            depart: CapacityProfile::Constant(0),
            park: CapacityProfile::Constant(0),
        });
    }
    let sector_at = |x: usize, y: usize| y * nx + x;
    let mut adjacency: Vec<(String, String)> = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            let here = sector_at(x, y);
            if x + 1 < nx {
                let right = sector_at(x + 1, y);
                adjacency.push((names[here].clone(), names[right].clone()));
                adjacency.push((names[right].clone(), names[here].clone()));
            }
            if y + 1 < ny {
                let down = sector_at(x, y + 1);
                adjacency.push((names[here].clone(), names[down].clone()));
                adjacency.push((names[down].clone(), names[here].clone()));
            }
        }
    }
    // vertiports attach to corner sectors, then spread over remaining cells
    let mut anchor_cells: Vec<usize> = vec![
        sector_at(0, 0),
        sector_at(nx - 1, ny - 1),
        sector_at(nx - 1, 0),
        sector_at(0, ny.saturating_sub(1)),
    ];
    anchor_cells.dedup();
    let mut anchors = Vec::new();
    for v in 0..params.vertiports as usize {
        anchors.push(anchor_cells[v % anchor_cells.len()]);
    }
    let mut vert_names = Vec::new();
    for (v, &cell) in anchors.iter().enumerate() {
        let name = format!("V{:02}", v + 1);
        vert_names.push(name.clone());
        adjacency.push((name.clone(), names[cell].clone()));
        adjacency.push((names[cell].clone(), name.clone()));
        regions.push(RegionSpec {
            name,
            kind: RegionKind::Vertiport,
            arrive: CapacityProfile::Constant(0),
            depart: CapacityProfile::Constant(0),
            park: CapacityProfile::Constant(0),
        });
    }
    let all_names: Vec<String> = regions.iter().map(|r| r.name.clone()).collect();
    let index_of = |n: &str| all_names.iter().position(|x| x == n).unwrap() as u32;

    // Spatial shortest paths by breadth-first search with sorted neighbors.
    let n_regions = all_names.len();
    let mut out_adj: Vec<Vec<u32>> = vec![Vec::new(); n_regions];
    for (a, b) in &adjacency {
        out_adj[index_of(a) as usize].push(index_of(b));
    }
    for v in &mut out_adj {
        v.sort_unstable();
    }
    let bfs_path = |from: u32, to: u32| -> Vec<u32> {
        let mut prev: Vec<Option<u32>> = vec![None; n_regions];
        let mut seen = vec![false; n_regions];
        let mut queue = std::collections::VecDeque::new();
        seen[from as usize] = true;
        queue.push_back(from);
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                break;
            }
            for &nxt in &out_adj[cur as usize] {
                if !seen[nxt as usize] {
                    seen[nxt as usize] = true;
                    prev[nxt as usize] = Some(cur);
                    queue.push_back(nxt);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = prev[cur as usize] {
            path.push(p);
            cur = p;
            if cur == from {
                break;
            }
        }
        path.reverse();
        path
    };

    // Longest possible route span bounds the admissible arrival window.
    let max_path_hops = (nx + ny) as u32;
    let span_max = 2 * max_path_hops * (1 + params.sector_dwell)
        + params.destination_dwell
        + 1
        + params.delay_alternatives;
    let stride = params.horizon_steps / params.auctions;
    let last_decision = (params.auctions - 1) * stride + 1;
    if last_decision + span_max + 2 > params.horizon_steps {
        return Err(ScenarioError::Invalid(format!(
            "horizon {} too short for {} auctions with routes spanning up to {} steps",
            params.horizon_steps, params.auctions, span_max
        )));
    }
    let mut arrival_max =
        (((params.horizon_steps - span_max - 3) as f64) * params.arrival_span).floor() as u32;
    if params.auctions >= 3 {
        // leave the final window to rebased vehicles so every arrival has at
        // least one retry before the horizon closes
        arrival_max = arrival_max.min((params.auctions - 2) * stride + 1);
    }
    let arrival_max = arrival_max.max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = params.flights as f64 / arrival_max as f64;
    let mut clock = 0.0_f64;
    let mut requests = Vec::new();
    for f in 0..params.flights {
        // Poisson arrivals: exponential inter-arrival times
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        clock += -u.ln() / rate;
        let arrival = (clock.ceil() as u32).clamp(1, arrival_max);
        let origin_v = rng.gen_range(0..params.vertiports) as usize;
        let dest_sector = {
            let weight = |i: usize| -> u32 {
                let (x, y) = (i % nx, i / nx);
                let border = x == 0 || y == 0 || x + 1 == nx || y + 1 == ny;
                if border { 1 } else { params.interior_weight }
            };
            let total: u32 = (0..n_sectors).map(weight).sum();
            let mut pick = rng.gen_range(0..total);
            let mut chosen = 0u32;
            for i in 0..n_sectors {
                let w = weight(i);
                if pick < w {
                    chosen = i as u32;
                    break;
                }
                pick -= w;
            }
            chosen
        };
        let origin = index_of(&vert_names[origin_v]);
        let out_path = bfs_path(origin, dest_sector);
        let mut full: Vec<u32> = out_path.clone();
        full.extend(out_path.iter().rev().skip(1));
        let mut dwells = vec![0u32; full.len()];
        for (i, d) in dwells.iter_mut().enumerate() {
            if i > 0 && i + 1 < full.len() {
                *d = params.sector_dwell;
            }
        }
        dwells[out_path.len() - 1] = params.destination_dwell; // hover at the delivery point
        let base_value = rng.gen_range(params.value_min..=params.value_max);
        requests.push(RequestSpec {
            id: format!("UAV{:03}", f + 1),
            arrival_step: arrival,
            origin: all_names[origin as usize].clone(),
            destination: all_names[dest_sector as usize].clone(),
            base_value,
            drop_value: params.drop_value,
            outside_value: params.outside_value,
            initial_credits: None,
            menu: MenuSpec::Rule {
                spatial_path: full.iter().map(|&r| all_names[r as usize].clone()).collect(),
                dwell_steps: dwells,
                preferred_departure: arrival + 2,
                delay_alternatives: params.delay_alternatives,
            },
        });
    }

    // Minimum capacities: usage of every preferred route, unconstrained.
    let probe_caps = RegionCaps {
        arrive: CapacityProfile::Constant(u32::MAX / 4),
        depart: CapacityProfile::Constant(u32::MAX / 4),
        park: CapacityProfile::Constant(u32::MAX / 4),
    };
    let probe_spatial =
        SpatialGraph::new(all_names.clone(), &adjacency, vec![probe_caps; n_regions])?;
    let probe = build_time_extended(&probe_spatial, params.horizon_steps, params.step_seconds)?;
    let mut usage = vec![0u32; probe.n_constrained];
    for req in &requests {
        let MenuSpec::Rule { spatial_path, dwell_steps, preferred_departure, .. } = &req.menu
        else {
            unreachable!()
        };
        let regions_idx: Vec<u32> =
            spatial_path.iter().map(|n| index_of(n)).collect();
        let route = build_rule_route(&probe, &regions_idx, dwell_steps, *preferred_departure)
            .ok_or_else(|| {
                ScenarioError::BadRequest(req.id.clone(), "preferred route out of horizon".into())
            })?;
        for e in route.edges {
            if let Some(c) = probe.edges[e].cidx {
                usage[c as usize] += 1;
            }
        }
    }
    let mut cruise_min = 0u32;
    let mut vert_min = 0u32;
    for (c, &u) in usage.iter().enumerate() {
        if u == 0 {
            continue;
        }
        let edge_id = c; // constrained edges precede transit edges in id order
        let edge = &probe.edges[edge_id];
        debug_assert_eq!(edge.cidx, Some(c as u32));
        let is_vert = (edge.region as usize) >= n_sectors;
        if is_vert {
            vert_min = vert_min.max(u);
        } else {
            cruise_min = cruise_min.max(u);
        }
    }
    let cruise_min = cruise_min.max(1);
    let vert_min = vert_min.max(1);
    for (i, region) in regions.iter_mut().enumerate() {
        if i < n_sectors {
            region.arrive = CapacityProfile::Constant(cruise_min);
            region.depart = CapacityProfile::Constant(cruise_min);
            region.park = CapacityProfile::Constant(cruise_min);
        } else {
            region.arrive = CapacityProfile::Constant(vert_min);
            region.depart = CapacityProfile::Constant(vert_min);
            // ground holding at the warehouse is not an airspace resource
            region.park = CapacityProfile::Constant(params.flights);
        }
    }

    Ok(ScenarioFile {
        schema: SCHEMA.into(),
        name: params.name.clone(),
        seed,
        horizon_steps: params.horizon_steps,
        step_seconds: params.step_seconds,
        capacity_fraction: params.capacity_fraction,
        capacity_rounding: RoundingMode::HalfUp,
        regions,
        adjacency,
        requests,
        solver: SolverSpec {
            beta: params.beta,
            inner_iters: params.inner_iters,
            outer_iters: params.outer_iters,
            outside_price: params.outside_price,
            tolerances: None,
            reset_lambda_each_outer: false,
        },
        campaign: CampaignSpec {
            auctions: params.auctions,
            grant_min: params.grant_min,
            grant_max: params.grant_max,
            grant_to_rebased: true,
            mechanism: Mechanism::Fisher,
            rebase_factor: params.rebase_factor,
            delay_factor: params.delay_factor,
        },
    })
}

/// The seven-vertiport air-taxi reservation fixture: twenty aircraft request
/// departure, corridor and landing clearances; contested departure, corridor
/// and arrival slots force a handful of one-step delays.
pub fn vertiport_fixture() -> ScenarioFile {
    // (id, origin, dest, depart, arrive, dep cap, route cap, arr cap, credits, value)
    let rows: [(&str, &str, &str, u32, u32, u32, u32, u32, f64, f64); 20] = [
        ("AC001", "V007", "V002", 16, 54, 2, 4, 1, 125.0, 118.0),
        ("AC002", "V005", "V004", 19, 47, 4, 5, 1, 90.0, 171.0),
        ("AC003", "V002", "V001", 16, 21, 1, 1, 2, 135.0, 172.0),
        ("AC004", "V002", "V001", 16, 21, 1, 1, 2, 154.0, 133.0),
        ("AC005", "V003", "V002", 11, 19, 1, 5, 1, 83.0, 177.0),
        ("AC006", "V005", "V007", 18, 68, 4, 3, 3, 199.0, 148.0),
        ("AC007", "V003", "V002", 15, 23, 1, 5, 1, 100.0, 183.0),
        ("AC008", "V007", "V001", 12, 54, 2, 3, 2, 104.0, 155.0),
        ("AC009", "V001", "V005", 13, 34, 5, 1, 2, 67.0, 189.0),
        ("AC010", "V001", "V005", 13, 34, 5, 1, 2, 114.0, 163.0),
        ("AC011", "V006", "V004", 19, 47, 1, 2, 1, 78.0, 135.0),
        ("AC012", "V005", "V001", 16, 37, 4, 3, 2, 90.0, 124.0),
        ("AC013", "V002", "V006", 17, 41, 1, 4, 3, 55.0, 147.0),
        ("AC014", "V001", "V002", 11, 24, 5, 2, 1, 64.0, 174.0),
        ("AC015", "V002", "V001", 16, 21, 1, 1, 2, 65.0, 194.0),
        ("AC016", "V007", "V005", 17, 67, 2, 5, 2, 109.0, 189.0),
        ("AC017", "V004", "V006", 16, 44, 5, 3, 3, 155.0, 149.0),
        ("AC018", "V002", "V007", 18, 56, 1, 2, 3, 103.0, 165.0),
        ("AC019", "V004", "V002", 16, 35, 5, 5, 2, 104.0, 147.0),
        ("AC020", "V003", "V006", 16, 38, 1, 2, 3, 96.0, 146.0),
    ];
    let big = 20u32;
    let mut dep_caps = std::collections::BTreeMap::new();
    let mut arr_caps = std::collections::BTreeMap::new();
    let mut corridors: Vec<(String, String, u32)> = Vec::new();
    for r in rows.iter() {
        let dep = dep_caps.entry(r.1.to_string()).or_insert(r.5);
        *dep = (*dep).min(r.5);
        let arr = arr_caps.entry(r.2.to_string()).or_insert(r.7);
        *arr = (*arr).min(r.7);
        if !corridors.iter().any(|(a, b, _)| a == r.1 && b == r.2) {
            corridors.push((r.1.to_string(), r.2.to_string(), r.6));
        }
    }
    let mut regions = Vec::new();
    for v in 1..=7 {
        let name = format!("V{:03}", v);
        regions.push(RegionSpec {
            name: name.clone(),
            kind: RegionKind::Vertiport,
            arrive: CapacityProfile::Constant(*arr_caps.get(&name).unwrap_or(&big)),
            depart: CapacityProfile::Constant(*dep_caps.get(&name).unwrap_or(&big)),
            park: CapacityProfile::Constant(big),
        });
    }
    let mut adjacency = Vec::new();
    for (a, b, cap) in &corridors {
        let cname = format!("R-{a}-{b}");
        regions.push(RegionSpec {
            name: cname.clone(),
            kind: RegionKind::Corridor,
            // corridor entry is the constrained clearance
            arrive: CapacityProfile::Constant(*cap),
            depart: CapacityProfile::Constant(big),
            park: CapacityProfile::Constant(big),
        });
        adjacency.push((a.clone(), cname.clone()));
        adjacency.push((cname, b.clone()));
    }
    let requests = rows
        .iter()
        .map(|r| {
            let corridor = format!("R-{}-{}", r.1, r.2);
            RequestSpec {
                id: r.0.into(),
                arrival_step: 1,
                origin: r.1.into(),
                destination: r.2.into(),
                base_value: r.9,
                drop_value: 1.0,
                outside_value: 1.0,
                initial_credits: Some(r.8),
                menu: MenuSpec::Rule {
                    spatial_path: vec![r.1.into(), corridor, r.2.into()],
                    dwell_steps: vec![0, r.4 - r.3 - 2, 0],
                    preferred_departure: r.3,
                    delay_alternatives: 4,
                },
            }
        })
        .collect();
    ScenarioFile {
        schema: SCHEMA.into(),
        name: "vertiport-reservation".into(),
        seed: 0,
        horizon_steps: 80,
        step_seconds: 30.0,
        capacity_fraction: 1.0,
        capacity_rounding: RoundingMode::HalfUp,
        regions,
        adjacency,
        requests,
        solver: SolverSpec {
            beta: 50.0,
            inner_iters: 2,
            outer_iters: 3000,
            outside_price: 10.0,
            tolerances: Some((1e-4, 1e-4, 1e-4)),
            reset_lambda_each_outer: false,
        },
        campaign: CampaignSpec {
            auctions: 1,
            grant_min: 0,
            grant_max: 0,
            grant_to_rebased: true,
            mechanism: Mechanism::Fisher,
            rebase_factor: 0.5,
            delay_factor: 0.95,
        },
    }
}
