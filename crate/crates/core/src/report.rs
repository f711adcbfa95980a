//! Output artifacts: campaign summary JSON, per-auction and per-allocation
//! CSV tables, and per-iteration convergence traces.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::{AuctionRecord, CampaignResult, CampaignSummary};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub summary: CampaignSummary,
    pub auctions: Vec<AuctionRecord>,
}

pub fn write_run_artifacts(dir: &Path, result: &CampaignResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let doc = SummaryDocument {
        summary: result.summary.clone(),
        auctions: result.records.clone(),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&doc)?)?;

    let mut w = csv::Writer::from_path(dir.join("auctions.csv"))?;
    w.write_record([
        "auction",
        "time_step",
        "pool",
        "on_time",
        "delayed",
        "dropped",
        "rebased_once",
        "rebased_twice",
        "mce",
        "converged",
        "inner_iterations",
        "max_price",
    ])?;
    for r in &result.records {
        w.write_record([
            r.index.to_string(),
            r.time_step.to_string(),
            r.pool_size.to_string(),
            r.preferred.to_string(),
            r.delayed.to_string(),
            r.dropped.to_string(),
            r.pool_rebased_once.to_string(),
            r.pool_rebased_twice.to_string(),
            format!("{:.6}", r.mce),
            r.converged.to_string(),
            r.inner_iterations.to_string(),
            format!("{:.6}", r.max_price),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("allocations.csv"))?;
    w.write_record(["auction", "agent", "status", "route_index", "payment", "route_payment", "outside_units"])?;
    for art in &result.artifacts {
        for o in &art.outcomes {
            w.write_record([
                art.index.to_string(),
                o.agent.clone(),
                format!("{:?}", o.status).to_lowercase(),
                o.route.map(|r| r.to_string()).unwrap_or_default(),
                format!("{:.6}", o.payment),
                format!("{:.6}", o.route_payment),
                format!("{:.6}", o.outside),
            ])?;
        }
    }
    w.flush()?;

    for (art, trace) in result.artifacts.iter().zip(&result.traces) {
        fs::write(
            dir.join(format!("auction_{:02}.json", art.index)),
            serde_json::to_string(art)?,
        )?;
        if let Some(report) = trace {
            let mut w =
                csv::Writer::from_path(dir.join(format!("trace_auction_{:02}.csv", art.index)))?;
            w.write_record(["iteration", "ce", "ice", "eae", "max_price", "omega_norm"])?;
            for row in &report.rows {
                w.write_record([
                    row.iteration.to_string(),
                    format!("{:.9e}", row.ce),
                    format!("{:.9e}", row.ice),
                    format!("{:.9e}", row.eae),
                    format!("{:.9e}", row.max_price),
                    format!("{:.9e}", row.omega_norm),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_summary(dir: &Path) -> io::Result<SummaryDocument> {
    let text = fs::read_to_string(dir.join("summary.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Appends comparison-table rows (one per run directory) to a CSV.
pub fn write_comparison_table(path: &Path, summaries: &[SummaryDocument]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "mechanism",
        "capacity",
        "num_times_rebased",
        "num_delayed",
        "avg_delay_steps",
        "num_rebased",
        "avg_times_rebased",
        "num_never_allocated",
    ])?;
    for s in summaries {
        let s = &s.summary;
        w.write_record([
            s.scenario.clone(),
            s.mechanism.to_string(),
            format!("{:.2}", s.capacity_fraction),
            s.num_times_rebased.to_string(),
            s.num_delayed.to_string(),
            format!("{:.3}", s.avg_delay_steps),
            s.num_rebased_agents.to_string(),
            format!("{:.3}", s.avg_times_rebased),
            s.num_never_allocated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
