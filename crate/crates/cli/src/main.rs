//! Command-line driver: generate scenarios, run auction campaigns, verify
//! saved outputs, and emit comparison tables.
//!
//! Exit codes: 0 success, 1 input or verification error, 2 non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use airmarket::campaign::{run_campaign, Mechanism, RunOptions};
use airmarket::market::SolverConfig;
use airmarket::report;
use airmarket::scenario::{
    self, generate_scenario, load_scenario, GeneratorParams, ScenarioFile,
};

#[derive(Parser)]
#[command(name = "airmarket", version, about = "Market-based airspace allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic delivery scenario file.
    Generate(GenerateArgs),
    /// Write the built-in vertiport reservation fixture.
    Fixture(FixtureArgs),
    /// Run an auction campaign on a scenario.
    Run(RunArgs),
    /// Re-verify a finished run: equilibrium certificate and safety checks.
    Verify(VerifyArgs),
    /// Collect run summaries into a comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output scenario path (JSON).
    #[arg(long, default_value = "scenario.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 177)]
    flights: u32,
    #[arg(long, default_value_t = 400)]
    horizon: u32,
    #[arg(long, default_value_t = 13)]
    auctions: u32,
    #[arg(long, default_value_t = 0.5)]
    capacity_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario name recorded in reports.
    #[arg(long, default_value = "toulouse-like")]
    name: String,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value = "fixture.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "fisher")]
    mechanism: MechanismArg,
    /// Override the scenario's capacity fraction.
    #[arg(long)]
    capacity_fraction: Option<f64>,
    /// Override the number of auctions.
    #[arg(long)]
    auctions: Option<u32>,
    /// Override the ADMM step size.
    #[arg(long)]
    beta: Option<f64>,
    /// Override inner iterations per outer step.
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    tol_ce: Option<f64>,
    #[arg(long)]
    tol_ice: Option<f64>,
    #[arg(long)]
    tol_eae: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (falls back to $AIRMARKET_OUT, then "out").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Run directory produced by `run`.
    #[arg(long)]
    run: PathBuf,
    /// Override the scenario's capacity fraction (must match the run).
    #[arg(long)]
    capacity_fraction: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to tabulate.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "table.csv")]
    out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum MechanismArg {
    Fisher,
    ClockBudget,
    ClockProfit,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Fisher => Mechanism::Fisher,
            MechanismArg::ClockBudget => Mechanism::ClockBudget,
            MechanismArg::ClockProfit => Mechanism::ClockProfit,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(a) => {
            let params = GeneratorParams {
                name: a.name,
                flights: a.flights,
                horizon_steps: a.horizon,
                auctions: a.auctions,
                capacity_fraction: a.capacity_fraction,
                ..GeneratorParams::default()
            };
            let file = generate_scenario(&params, a.seed)?;
            scenario::write_scenario(&a.out, &file)?;
            println!("wrote {}", a.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixture(a) => {
            let file = scenario::vertiport_fixture();
            scenario::write_scenario(&a.out, &file)?;
            println!("wrote {}", a.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(a) => run_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Report(a) => {
            let mut docs = Vec::new();
            for dir in &a.runs {
                docs.push(report::read_summary(dir).with_context(|| format!("reading {}", dir.display()))?);
            }
            report::write_comparison_table(&a.out, &docs)?;
            println!("wrote {}", a.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_cmd(a: RunArgs) -> Result<ExitCode> {
    let file: ScenarioFile = scenario::read_scenario(&a.scenario)?;
    let loaded = load_scenario(file, a.capacity_fraction)?;
    let mut solver: Option<SolverConfig> = None;
    if a.beta.is_some()
        || a.inner_iters.is_some()
        || a.tol_ce.is_some()
        || a.tol_ice.is_some()
        || a.tol_eae.is_some()
    {
        let mut s = loaded.solver_config();
        if let Some(b) = a.beta {
            s.beta = b;
        }
        if let Some(n) = a.inner_iters {
            s.inner_iters = n;
        }
        if let Some(t) = a.tol_ce {
            s.tol_ce = t;
        }
        if let Some(t) = a.tol_ice {
            s.tol_ice = t;
        }
        if let Some(t) = a.tol_eae {
            s.tol_eae = t;
        }
        s.validate().map_err(|e| anyhow::anyhow!(e))?;
        solver = Some(s);
    }
    let opts = RunOptions {
        mechanism: a.mechanism.into(),
        auctions: a.auctions,
        seed: a.seed,
        solver,
        ..RunOptions::default()
    };
    let result = run_campaign(&loaded, &opts)?;
    let out = a
        .out
        .or_else(|| std::env::var_os("AIRMARKET_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    report::write_run_artifacts(&out, &result)?;
    println!(
        "{}: {} agents, never allocated {}, delayed {}, max mce {:.4}%",
        result.summary.mechanism,
        result.summary.num_agents,
        result.summary.num_never_allocated,
        result.summary.num_delayed,
        100.0 * result.summary.max_mce
    );
    println!("artifacts in {}", out.display());
    if result.summary.all_converged {
        Ok(ExitCode::SUCCESS)
    } else {
        println!("warning: at least one auction did not meet its tolerances");
        Ok(ExitCode::from(2))
    }
}

fn verify_cmd(a: VerifyArgs) -> Result<ExitCode> {
    use airmarket::agent::{AgentProblem, MenuRoute, VehicleRequest};
    use airmarket::campaign::AuctionArtifact;
    use airmarket::graph::Route;
    use airmarket::verify::{check_integral_safety, verify_fractional_ce};

    let file: ScenarioFile = scenario::read_scenario(&a.scenario)?;
    let loaded = load_scenario(file, a.capacity_fraction)?;
    let graph = &loaded.graph;
    let solver = loaded.solver_config();
    let tol = 10.0 * solver.tol_ce.max(solver.tol_ice).max(solver.tol_eae);

    let mut indices = Vec::new();
    for entry in std::fs::read_dir(&a.run)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(idx) = name.strip_prefix("auction_").and_then(|s| s.strip_suffix(".json")) {
            indices.push((idx.parse::<u32>()?, path));
        }
    }
    indices.sort();
    if indices.is_empty() {
        bail!("no auction artifacts found in {}", a.run.display());
    }

    let mut caps_rem = graph.capacities.clone();
    let mut failures = Vec::new();
    for (idx, path) in indices {
        let art: AuctionArtifact = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let problems: Vec<AgentProblem> = art
            .requests
            .iter()
            .map(|r| {
                let req = VehicleRequest {
                    id: r.id.clone(),
                    menu: r
                        .routes
                        .iter()
                        .map(|sr| MenuRoute { route: Route { edges: sr.edges.clone() }, value: sr.value })
                        .collect(),
                    preferred: r.preferred,
                    drop_value: r.drop_value,
                    outside_value: r.outside_value,
                    budget: r.budget,
                    rebase_count: r.rebase_count,
                };
                AgentProblem::new(graph, req)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| anyhow::anyhow!("artifact menu rejected: {e}"))?;
        let mut prices = vec![0.0; graph.n_constrained];
        for &(c, p) in &art.prices {
            prices[c as usize] = p;
        }
        let active: Vec<bool> = (0..graph.n_constrained)
            .map(|c| graph.constrained_steps[c] >= art.time_step)
            .collect();

        let outcome = airmarket::rounding::IntegralOutcome {
            agents: art.outcomes.clone(),
            removed: art.removed.clone(),
            remaining: vec![],
            demand: vec![],
            passes: 0,
        };
        let violations = check_integral_safety(&problems, &caps_rem, &outcome, solver.outside_price);
        for v in violations {
            failures.push(format!("auction {idx}: safety: {v}"));
        }
        if let Some(fractional) = &art.fractional {
            if art.converged {
                let finite_prices: Vec<f64> =
                    prices.iter().map(|p| if p.is_finite() { *p } else { 0.0 }).collect();
                let cert = verify_fractional_ce(
                    graph,
                    &problems,
                    fractional,
                    &finite_prices,
                    &caps_rem,
                    Some(&active),
                    solver.outside_price,
                    tol,
                );
                if !cert.pass {
                    failures.push(format!(
                        "auction {idx}: equilibrium residual {:.3e} above tolerance {:.3e}",
                        cert.max_residual, tol
                    ));
                }
            }
        }
        // replay capacity consumption for the next auction's baseline
        for (p, o) in problems.iter().zip(&art.outcomes) {
            if let Some(s) = o.route {
                for &c in &p.route_cidx[s] {
                    caps_rem[c as usize] -= 1.0;
                }
            }
        }
    }

    if failures.is_empty() {
        println!("verify: all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &failures {
            println!("verify: FAIL {f}");
        }
        Ok(ExitCode::from(1))
    }
}
