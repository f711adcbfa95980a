//! Acceptance suite: one test per acceptance criterion, each printing a
//! single pass/fail line with the measured quantities. Tolerances and
//! thresholds are pinned here, not configured externally.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use airmarket::agent::{
    solve_x_update, x_update_gradient, x_update_objective, AgentProblem, MenuRoute,
    VehicleRequest, XUpdateInput,
};
use airmarket::campaign::{run_campaign, Mechanism, RunOptions};
use airmarket::graph::{
    build_time_extended, CapacityProfile, RegionCaps, Route, SpatialGraph, TimeExtendedGraph,
};
use airmarket::market::{run_algorithm1, sp_update_y_z, SolverConfig};
use airmarket::rounding::AllocationStatus;
use airmarket::scenario::{
    generate_scenario, load_scenario, vertiport_fixture, GeneratorParams, LoadedScenario,
};
use airmarket::verify::{check_integral_safety, verify_fractional_ce};

fn println_flush(line: &str) {
    println!("{line}");
}

fn load_generated(params: &GeneratorParams, seed: u64, fraction: f64) -> LoadedScenario {
    let file = generate_scenario(params, seed).expect("generator accepts its own defaults");
    load_scenario(file, Some(fraction)).expect("generated scenarios load")
}

/// Criterion 1: at full capacity the equilibrium loop terminates within 15
/// inner iterations regardless of the agent count, everyone is allocated
/// after rounding, and the run takes under a minute.
#[test]
fn criterion_1_uncontested_convergence() {
    let started = Instant::now();
    let mut worst_inner = 0usize;
    let mut unallocated = 0usize;
    for (flights, seed) in [(10u32, 21u64), (100, 22)] {
        let scenario = load_generated(
            &GeneratorParams { flights, ..GeneratorParams::default() },
            seed,
            1.0,
        );
        let opts = RunOptions { mechanism: Mechanism::Fisher, auctions: Some(1), ..RunOptions::default() };
        let result = run_campaign(&scenario, &opts).expect("campaign runs");
        worst_inner = worst_inner.max(result.summary.total_inner_iterations);
        unallocated += result.summary.num_never_allocated + result.summary.num_delayed;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_inner <= 15 && unallocated == 0 && elapsed < 60.0;
    println_flush(&format!(
        "criterion 1 {}: inner iterations {} (bound 15), unallocated {} (bound 0), runtime {:.1}s (bound 60s)",
        if pass { "PASS" } else { "FAIL" },
        worst_inner,
        unallocated,
        elapsed
    ));
    assert_eq!(unallocated, 0, "every vehicle receives its preferred route at full capacity");
    assert!(elapsed < 60.0);
    assert!(
        worst_inner <= 15,
        "uncontested run took {worst_inner} inner iterations, bound is 15"
    );
}

/// Random small instance for the equilibrium verifier: a region chain with
/// tight caps and two to five agents holding departure-time-variant menus.
fn random_small_instance(
    rng: &mut ChaCha8Rng,
) -> (TimeExtendedGraph, Vec<AgentProblem>, SolverConfig) {
    let n_regions = rng.gen_range(3..=4usize);
    let horizon = rng.gen_range(6..=8u32);
    let caps = RegionCaps {
        arrive: CapacityProfile::Constant(rng.gen_range(1..=2)),
        depart: CapacityProfile::Constant(rng.gen_range(1..=2)),
        park: CapacityProfile::Constant(2),
    };
    let names: Vec<String> = (0..n_regions).map(|i| format!("R{i}")).collect();
    let mut adj = Vec::new();
    for i in 0..n_regions - 1 {
        adj.push((names[i].clone(), names[i + 1].clone()));
        adj.push((names[i + 1].clone(), names[i].clone()));
    }
    let spatial =
        SpatialGraph::new(names.clone(), &adj, vec![caps.clone(); n_regions]).unwrap();
    let g = build_time_extended(&spatial, horizon, 10.0).unwrap();

    let n_agents = rng.gen_range(2..=5usize);
    let mut problems = Vec::new();
    for u in 0..n_agents {
        let from = rng.gen_range(0..n_regions - 2) as u32;
        let mid = from + 1;
        let to = from + 2;
        let dep0 = rng.gen_range(1..=2u32);
        let n_routes = rng.gen_range(1..=3usize);
        let base: f64 = rng.gen_range(120.0..250.0);
        let mut menu = Vec::new();
        for j in 0..n_routes {
            let dep = dep0 + j as u32;
            if dep + 2 > horizon {
                break;
            }
            let route = Route {
                edges: vec![
                    g.depart_edge(from, dep).unwrap(),
                    g.transit_edge(from, dep, mid).unwrap(),
                    g.arrive_edge(mid, dep + 1).unwrap(),
                    g.depart_edge(mid, dep + 1).unwrap(),
                    g.transit_edge(mid, dep + 1, to).unwrap(),
                    g.arrive_edge(to, dep + 2).unwrap(),
                ],
            };
            menu.push(MenuRoute { route, value: base * 0.95f64.powi(j as i32) });
        }
        let req = VehicleRequest {
            id: format!("a{u}"),
            menu,
            preferred: 0,
            drop_value: 40.0,
            outside_value: 1.0,
            budget: rng.gen_range(80.0..300.0),
            rebase_count: 0,
        };
        problems.push(AgentProblem::new(&g, req).unwrap());
    }
    let caps_vec = g.capacities.clone();
    let budgets: Vec<f64> = problems.iter().map(|p| p.req.budget).collect();
    let min_len = problems
        .iter()
        .flat_map(|p| p.route_cidx.iter().map(|r| r.len()))
        .min()
        .unwrap_or(1);
    let (tol_ce, _, _) =
        airmarket::campaign::default_tolerances(&budgets, min_len, &caps_vec, None);
    // tighter selection / consensus tolerances hold the loop until the
    // budget-adjustment fixed point settles; the verification bound below is
    // driven by the complementarity tolerance
    let config = SolverConfig {
        beta: 50.0,
        inner_iters: 30,
        outer_iters: 800,
        tol_ce: tol_ce.min(1.0),
        tol_ice: 1e-7,
        tol_eae: 1e-6,
        outside_price: 2.0,
        reset_lambda_each_outer: false,
    };
    (g, problems, config)
}

/// Criterion 2: equilibrium outputs on random small instances pass the
/// certificate checks at ten times the configured tolerances.
#[test]
fn criterion_2_fractional_ce_verification() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for case in 0..50 {
        let (g, problems, config) = random_small_instance(&mut rng);
        let out = run_algorithm1(&problems, &g.capacities, None, &config).unwrap();
        let tol = 10.0 * config.tol_ce.max(config.tol_ice).max(config.tol_eae);
        let cert = verify_fractional_ce(
            &g,
            &problems,
            &out.demands,
            &out.prices,
            &g.capacities,
            None,
            config.outside_price,
            tol,
        );
        worst = worst.max(cert.max_residual / tol);
        if !cert.pass {
            failures += 1;
            let worst_agent = cert
                .agents
                .iter()
                .max_by(|a, b| {
                    let ka = a.stationarity_residual.max(a.slackness_residual).max(a.budget_residual).max(a.optimality_gap);
                    let kb = b.stationarity_residual.max(b.slackness_residual).max(b.budget_residual).max(b.optimality_gap);
                    ka.partial_cmp(&kb).unwrap()
                })
                .unwrap();
            eprintln!(
                "case {case}: residual {:.4} vs tol {:.4} (conv {}): cap {:.3} comp {:.3} agent {} stat {:.3} slack {:.3} budget {:.3} gap {:.3}",
                cert.max_residual,
                tol,
                out.report.converged,
                cert.capacity_residual,
                cert.complementarity_residual,
                worst_agent.agent,
                worst_agent.stationarity_residual,
                worst_agent.slackness_residual,
                worst_agent.budget_residual,
                worst_agent.optimality_gap,
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = failures == 0 && elapsed < 300.0;
    println_flush(&format!(
        "criterion 2 {}: {} of 50 instances verified, worst residual ratio {:.3}, runtime {:.1}s (bound 300s)",
        if pass { "PASS" } else { "FAIL" },
        50 - failures,
        worst,
        elapsed
    ));
    assert_eq!(failures, 0);
    assert!(elapsed < 300.0);
}

/// Criterion 3: the closed-form expected-allocation/surplus update matches a
/// numerical minimizer of its defining objective on a thousand random
/// per-edge instances.
#[test]
fn criterion_3_yz_closed_form_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=6usize);
        let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let price: f64 = rng.gen_range(-5.0..50.0);
        let cap: f64 = rng.gen_range(0.5..5.0);
        let beta: f64 = rng.gen_range(5.0..80.0);
        let (y_cf, z_cf) = sp_update_y_z(&xs, price, 0.0, beta, cap);

        // independent numerical minimizer: projected gradient descent on
        //   beta/2 sum (y - x)^2 + beta/2 (sum y + z - cap)^2 + price * z
        let mut y = vec![0.0; m];
        let mut z = 0.0f64;
        let lip = beta * (m as f64 + 2.0);
        let step = 1.0 / lip;
        for _ in 0..60_000 {
            let s: f64 = y.iter().sum::<f64>() + z - cap;
            for u in 0..m {
                let gy = beta * (y[u] - xs[u]) + beta * s;
                y[u] -= step * gy;
            }
            let gz = beta * s + price;
            z = (z - step * gz).max(0.0);
        }
        let err = y
            .iter()
            .zip(&y_cf)
            .map(|(a, b)| (a - b).abs())
            .fold((z - z_cf).abs(), f64::max);
        worst = worst.max(err);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst <= 1e-6;
    println_flush(&format!(
        "criterion 3 {}: worst closed-form vs numerical gap {:.2e} (bound 1e-6) over 1000 instances, runtime {:.1}s",
        if pass { "PASS" } else { "FAIL" },
        worst,
        elapsed
    ));
    assert!(pass, "gap {worst}");
}

/// Criterion 4: the demand-update solver reaches the brute-force grid
/// optimum within 1e-3 and its analytic gradient matches central finite
/// differences to 1e-5 relative error.
#[test]
fn criterion_4_x_update_solver_correctness() {
    let started = Instant::now();
    let caps = RegionCaps {
        arrive: CapacityProfile::Constant(5),
        depart: CapacityProfile::Constant(5),
        park: CapacityProfile::Constant(5),
    };
    let spatial = SpatialGraph::new(
        vec!["A".into(), "B".into()],
        &[("A".into(), "B".into())],
        vec![caps.clone(), caps],
    )
    .unwrap();
    let g = build_time_extended(&spatial, 8, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = 0.0f64;
    let mut worst_grad = 0.0f64;
    for _ in 0..100 {
        let n_routes = rng.gen_range(1..=3usize);
        let base: f64 = rng.gen_range(100.0..250.0);
        let mut menu = Vec::new();
        for j in 0..n_routes {
            let dep = 1 + j as u32;
            let route = Route {
                edges: vec![
                    g.depart_edge(0, dep).unwrap(),
                    g.transit_edge(0, dep, 1).unwrap(),
                    g.arrive_edge(1, dep + 1).unwrap(),
                ],
            };
            menu.push(MenuRoute { route, value: base * 0.95f64.powi(j as i32) });
        }
        let req = VehicleRequest {
            id: "x".into(),
            menu,
            preferred: 0,
            drop_value: 40.0,
            outside_value: 1.0,
            budget: rng.gen_range(0.0..250.0),
            rebase_count: 0,
        };
        let problem = AgentProblem::new(&g, req).unwrap();
        let prices: Vec<f64> =
            (0..g.n_constrained).map(|_| rng.gen_range(0.0..20.0)).collect();
        let y: Vec<f64> = (0..problem.csupport.len()).map(|_| rng.gen_range(-0.3..1.3)).collect();
        let input = XUpdateInput {
            omega: rng.gen_range(0.0..200.0),
            lambda: rng.gen_range(-60.0..60.0),
            y: &y,
            prices: &prices,
            p_o: rng.gen_range(1.0..10.0),
            beta: 50.0,
        };
        let out = solve_x_update(&problem, &input, None).unwrap();

        // coarse-to-fine grid over [0, 3]^(n+2)
        let d = n_routes + 2;
        let mut lo = vec![0.0; d];
        let mut hi = vec![3.0; d];
        let steps = 10usize;
        let mut best = (vec![0.0; d], f64::NEG_INFINITY);
        for _pass in 0..4 {
            let mut idx = vec![0usize; d];
            loop {
                let z: Vec<f64> = (0..d)
                    .map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / steps as f64)
                    .collect();
                let v = x_update_objective(&problem, &input, &z);
                if v > best.1 {
                    best = (z, v);
                }
                let mut i = 0;
                loop {
                    if i == d {
                        break;
                    }
                    idx[i] += 1;
                    if idx[i] <= steps {
                        break;
                    }
                    idx[i] = 0;
                    i += 1;
                }
                if i == d {
                    break;
                }
            }
            let width: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / steps as f64).collect();
            for i in 0..d {
                lo[i] = (best.0[i] - 2.0 * width[i]).max(0.0);
                hi[i] = best.0[i] + 2.0 * width[i];
            }
        }
        worst_gap = worst_gap.max(best.1 - out.objective);

        // gradient versus central differences at a random interior point
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..1.2)).collect();
        let mut grad = vec![0.0; d];
        x_update_gradient(&problem, &input, &z, &mut grad);
        for i in 0..d {
            let h = 1e-6 * z[i].max(1.0);
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd = (x_update_objective(&problem, &input, &zp)
                - x_update_objective(&problem, &input, &zm))
                / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1.0);
            worst_grad = worst_grad.max((grad[i] - fd).abs() / denom);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_gap <= 1e-3 && worst_grad <= 1e-5 && elapsed < 300.0;
    println_flush(&format!(
        "criterion 4 {}: worst objective gap {:.2e} (bound 1e-3), worst gradient error {:.2e} (bound 1e-5), runtime {:.1}s (bound 300s)",
        if pass { "PASS" } else { "FAIL" },
        worst_gap,
        worst_grad,
        elapsed
    ));
    assert!(worst_gap <= 1e-3, "objective gap {worst_gap}");
    assert!(worst_grad <= 1e-5, "gradient error {worst_grad}");
    assert!(elapsed < 300.0);
}

/// Criterion 5: the half-capacity delivery campaign keeps the post-rounding
/// market-clearing error within one percent in every auction.
#[test]
fn criterion_5_market_clearing_error() {
    let started = Instant::now();
    let scenario = load_generated(&GeneratorParams::default(), 1, 0.5);
    let opts = RunOptions { mechanism: Mechanism::Fisher, keep_traces: false, ..RunOptions::default() };
    let result = run_campaign(&scenario, &opts).expect("campaign runs");
    let worst_mce = result.records.iter().map(|r| r.mce).fold(0.0, f64::max);
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_mce <= 0.01 && elapsed < 900.0;
    println_flush(&format!(
        "criterion 5 {}: worst per-auction market-clearing error {:.4}% (bound 1%), runtime {:.1}s (bound 900s)",
        if pass { "PASS" } else { "FAIL" },
        100.0 * worst_mce,
        elapsed
    ));
    assert!(worst_mce <= 0.01, "market clearing error {worst_mce}");
    assert!(elapsed < 900.0);
}

/// Criterion 6: majority vote over three seeds. At 60% capacity the
/// equilibrium mechanism leaves nobody unallocated; at 50% the baselines
/// strand at least as many vehicles as it does, in order.
#[test]
fn criterion_6_baseline_ordering() {
    let mut votes_60 = 0usize;
    let mut votes_order = 0usize;
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let file = generate_scenario(&GeneratorParams::default(), seed).unwrap();
        let run = |fraction: f64, mechanism: Mechanism| {
            let loaded = load_scenario(file.clone(), Some(fraction)).unwrap();
            let opts = RunOptions { mechanism, keep_traces: false, ..RunOptions::default() };
            run_campaign(&loaded, &opts).unwrap().summary
        };
        let fisher60 = run(0.6, Mechanism::Fisher);
        let fisher50 = run(0.5, Mechanism::Fisher);
        let budget50 = run(0.5, Mechanism::ClockBudget);
        let profit50 = run(0.5, Mechanism::ClockProfit);
        if fisher60.num_never_allocated == 0 {
            votes_60 += 1;
        }
        if fisher50.num_never_allocated <= budget50.num_never_allocated
            && budget50.num_never_allocated <= profit50.num_never_allocated
        {
            votes_order += 1;
        }
        println_flush(&format!(
            "  seed {seed}: never allocated fisher60={} fisher50={} budget50={} profit50={}",
            fisher60.num_never_allocated,
            fisher50.num_never_allocated,
            budget50.num_never_allocated,
            profit50.num_never_allocated
        ));
    }
    let majority = seeds.len() / 2 + 1;
    let pass = votes_60 >= majority && votes_order >= majority;
    println_flush(&format!(
        "criterion 6 {}: 60%-full-allocation votes {}/{}, ordering votes {}/{} (majority {})",
        if pass { "PASS" } else { "FAIL" },
        votes_60,
        seeds.len(),
        votes_order,
        seeds.len(),
        majority
    ));
    assert!(votes_60 >= majority, "60% full allocation in {votes_60} of {} seeds", seeds.len());
    assert!(votes_order >= majority, "ordering held in {votes_order} of {} seeds", seeds.len());
}

/// Criterion 7: independent post-hoc safety checks on every mechanism's
/// integral outputs: capacities, menu membership, budgets.
#[test]
fn criterion_7_hard_safety() {
    let file = generate_scenario(
        &GeneratorParams { flights: 90, ..GeneratorParams::default() },
        7,
    )
    .unwrap();
    let mut violations = 0usize;
    for mechanism in [Mechanism::Fisher, Mechanism::ClockBudget, Mechanism::ClockProfit] {
        let loaded = load_scenario(file.clone(), Some(0.5)).unwrap();
        let opts = RunOptions { mechanism, keep_traces: false, ..RunOptions::default() };
        let result = run_campaign(&loaded, &opts).unwrap();
        // replay the campaign's artifacts through the checker
        let mut caps = loaded.graph.capacities.clone();
        for art in &result.artifacts {
            let problems: Vec<AgentProblem> = art
                .requests
                .iter()
                .map(|r| {
                    let req = VehicleRequest {
                        id: r.id.clone(),
                        menu: r
                            .routes
                            .iter()
                            .map(|sr| MenuRoute {
                                route: Route { edges: sr.edges.clone() },
                                value: sr.value,
                            })
                            .collect(),
                        preferred: r.preferred,
                        drop_value: r.drop_value,
                        outside_value: r.outside_value,
                        budget: r.budget,
                        rebase_count: r.rebase_count,
                    };
                    AgentProblem::new(&loaded.graph, req).unwrap()
                })
                .collect();
            let outcome = airmarket::rounding::IntegralOutcome {
                agents: art.outcomes.clone(),
                removed: art.removed.clone(),
                remaining: vec![],
                demand: vec![],
                passes: 0,
            };
            let v = check_integral_safety(
                &problems,
                &caps,
                &outcome,
                loaded.solver_config().outside_price,
            );
            if !v.is_empty() {
                eprintln!("{mechanism} auction {}: {:?}", art.index, v);
            }
            violations += v.len();
            for (p, o) in problems.iter().zip(&art.outcomes) {
                if let Some(s) = o.route {
                    for &c in &p.route_cidx[s] {
                        caps[c as usize] -= 1.0;
                    }
                }
            }
        }
    }
    let pass = violations == 0;
    println_flush(&format!(
        "criterion 7 {}: {} safety violations across three mechanisms (bound 0)",
        if pass { "PASS" } else { "FAIL" },
        violations
    ));
    assert_eq!(violations, 0);
}

/// Criterion 8: identical scenario, seed and configuration give bit-identical
/// campaign summaries, with agent solves running in parallel.
#[test]
fn criterion_8_determinism() {
    let file = generate_scenario(
        &GeneratorParams { flights: 60, ..GeneratorParams::default() },
        8,
    )
    .unwrap();
    let mut docs = Vec::new();
    for _ in 0..2 {
        let loaded = load_scenario(file.clone(), Some(0.5)).unwrap();
        let opts = RunOptions { mechanism: Mechanism::Fisher, ..RunOptions::default() };
        let result = run_campaign(&loaded, &opts).unwrap();
        let doc = serde_json::to_string(&airmarket::report::SummaryDocument {
            summary: result.summary.clone(),
            auctions: result.records.clone(),
        })
        .unwrap();
        // include the full artifacts in the comparison
        let arts = serde_json::to_string(&result.artifacts).unwrap();
        docs.push((doc, arts));
    }
    let pass = docs[0] == docs[1];
    println_flush(&format!(
        "criterion 8 {}: serialized summaries and artifacts byte-identical across two runs",
        if pass { "PASS" } else { "FAIL" }
    ));
    assert_eq!(docs[0].0, docs[1].0);
    assert_eq!(docs[0].1, docs[1].1);
}

/// Criterion 9 (non-blocking): the vertiport reservation fixture should
/// delay at least three of the four aircraft the reference outcome delays.
#[test]
fn criterion_9_vertiport_fixture() {
    let file = vertiport_fixture();
    let loaded = load_scenario(file, None).unwrap();
    let opts = RunOptions { mechanism: Mechanism::Fisher, keep_traces: false, ..RunOptions::default() };
    let result = run_campaign(&loaded, &opts).expect("fixture campaign runs");
    let expected = ["AC003", "AC009", "AC011", "AC015"];
    let mut delayed = Vec::new();
    for art in &result.artifacts {
        for o in &art.outcomes {
            if o.status == AllocationStatus::Delayed || o.status == AllocationStatus::Dropped {
                delayed.push(o.agent.clone());
            }
        }
    }
    let hits = expected.iter().filter(|e| delayed.iter().any(|d| d == *e)).count();
    let pass = hits >= 3;
    // non-blocking regression indicator: reported, not asserted
    println_flush(&format!(
        "criterion 9 {} (non-blocking): fixture delayed {:?}; {} of 4 reference delays reproduced",
        if pass { "PASS" } else { "FAIL" },
        delayed,
        hits
    ));
}

/// Criterion 10: iteration counts at full capacity stay flat in the agent
/// count, and mean iterations per auction do not increase as the stream is
/// split across more auctions (one inversion allowed).
#[test]
fn criterion_10_sensitivity_trends() {
    // (a) constancy in the agent count at full capacity
    let mut counts = Vec::new();
    for (flights, seed) in [(10u32, 31u64), (50, 32), (100, 33)] {
        let scenario = load_generated(
            &GeneratorParams { flights, ..GeneratorParams::default() },
            seed,
            1.0,
        );
        let opts = RunOptions { mechanism: Mechanism::Fisher, auctions: Some(1), keep_traces: false, ..RunOptions::default() };
        let result = run_campaign(&scenario, &opts).unwrap();
        counts.push(result.summary.total_inner_iterations);
    }
    let flat = *counts.iter().max().unwrap() as f64 <= 2.0 * *counts.iter().min().unwrap() as f64;

    // (b) splitting one contested stream over more auctions cannot slow the
    // per-auction solve: mean inner iterations non-increasing in the auction
    // count, with one allowed inversion
    let params = GeneratorParams {
        flights: 40,
        arrival_span: 0.25,
        ..GeneratorParams::default()
    };
    let file = generate_scenario(&params, 10).unwrap();
    let mut means = Vec::new();
    for auctions in [1u32, 4, 7, 13] {
        let loaded = load_scenario(file.clone(), Some(0.5)).unwrap();
        let opts = RunOptions {
            mechanism: Mechanism::Fisher,
            auctions: Some(auctions),
            keep_traces: false,
            ..RunOptions::default()
        };
        let result = run_campaign(&loaded, &opts).unwrap();
        let busy: Vec<_> = result.records.iter().filter(|r| r.pool_size > 0).collect();
        let mean =
            busy.iter().map(|r| r.inner_iterations).sum::<usize>() as f64 / busy.len().max(1) as f64;
        means.push(mean);
    }
    let inversions = means.windows(2).filter(|w| w[1] > w[0] * 1.05).count();
    let trend_ok = inversions <= 1;

    let pass = flat && trend_ok;
    println_flush(&format!(
        "criterion 10 {}: full-capacity iterations {:?} (flat within 2x: {}), per-auction means {:?} with {} inversion(s) (allowed 1)",
        if pass { "PASS" } else { "FAIL" },
        counts,
        flat,
        means.iter().map(|m| m.round() as usize).collect::<Vec<_>>(),
        inversions
    ));
    assert!(flat, "iteration counts vary more than 2x: {counts:?}");
    assert!(trend_ok, "iteration means increased more than once: {means:?}");
}
