//! Market-based allocation of capacity-constrained airspace.
//!
//! The library models airspace as a time-extended graph over spatial
//! regions, computes fractional competitive equilibria for vehicle route
//! menus with a distributed two-loop scheme, rounds them to integral
//! allocations at frozen prices, and runs receding-horizon auction campaigns
//! with ascending-clock baselines for comparison.

pub mod agent;
pub mod campaign;
pub mod clock;
pub mod constraints;
pub mod error;
pub mod graph;
pub mod market;
pub mod report;
pub mod rounding;
pub mod scenario;
pub mod util;
pub mod verify;

pub use agent::{AgentProblem, AllocationVector, RouteSpaceDemand, VehicleRequest};
pub use campaign::{run_campaign, CampaignResult, Mechanism, RunOptions};
pub use graph::{build_time_extended, Route, SpatialGraph, TimeExtendedGraph};
pub use market::{run_algorithm1, MarketOutcome, SolverConfig};
pub use rounding::{rank_vehicles, run_algorithm2, IntegralOutcome};
pub use scenario::{generate_scenario, load_scenario, GeneratorParams, ScenarioFile};
pub use verify::{check_integral_safety, verify_fractional_ce, KktCertificate};
