use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("horizon must be at least 1 time step (got {0})")]
    ZeroHorizon(u32),
    #[error("step length must be positive (got {0})")]
    NonPositiveStep(f64),
    #[error("adjacency pair ({0}, {1}) references an unknown region")]
    UnknownRegionInAdjacency(String, String),
    #[error("capacity profile for region {region} covers {have} steps, horizon needs {need}")]
    ProfileTooShort {
        region: String,
        have: usize,
        need: usize,
    },
    #[error("duplicate region name {0}")]
    DuplicateRegion(String),
    #[error("adjacency pair ({0}, {0}) is a self-loop")]
    SelfLoop(String),
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("edge id {0} does not exist in the graph")]
    UnknownEdge(usize),
    #[error("route is empty")]
    Empty,
    #[error("route invalid at edge index {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum MenuError {
    #[error("route {0}: {1}")]
    BadRoute(usize, RouteError),
    #[error("routes {0} and {1} share the same departing edge")]
    DuplicateDepartingEdge(usize, usize),
    #[error("departing edge of route {0} also appears on route {1}")]
    DepartingEdgeShared(usize, usize),
    #[error("routes {0} and {1} share transit edge {2}; their flows could not be told apart")]
    SharedTransitEdge(usize, usize, usize),
    #[error("route {0} repeats edge {1}")]
    RepeatedEdge(usize, usize),
    #[error("menu is empty")]
    EmptyMenu,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("outside-option price must be positive (got {0})")]
    NonPositiveOutsidePrice(f64),
    #[error("allocation vector does not match the agent's constraint system")]
    DimensionMismatch,
    #[error("non-finite input to the demand update")]
    NonFiniteInput,
    #[error("demand update did not converge after {iters} steps (grad norm {grad_norm:.3e})")]
    SolverStalled {
        iters: usize,
        grad_norm: f64,
        last: crate::agent::RouteSpaceDemand,
    },
    #[error("exactly one preferred route required")]
    PreferredRouteMissing,
    #[error("profit bid is unbounded: outside value {0} exceeds outside price {1}")]
    UnboundedProfitBid(f64, f64),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("unknown region {0} referenced by request {1}")]
    UnknownRegion(String, String),
    #[error("request {0}: {1}")]
    BadRequest(String, String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("auction count {auctions} exceeds horizon {horizon}")]
    TooManyAuctions { auctions: u32, horizon: u32 },
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("agent {agent}: {source}")]
    Agent {
        agent: String,
        #[source]
        source: AgentError,
    },
    #[error("menu of agent {agent}: {source}")]
    Menu {
        agent: String,
        #[source]
        source: MenuError,
    },
    #[error("settlement would leave agent {0} with negative budget {1}")]
    NegativeBudget(String, f64),
}
