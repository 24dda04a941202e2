//! Runs the whole pipeline over a few synthetic days and prints where the
//! per-day and aggregate outputs went.
//!
//! ```text
//! cargo run --release --example daily_pipeline -- [out_dir] [days]
//! ```

use std::path::PathBuf;

use lobsurv::pipeline::{run_all, RunConfig};

pub fn run_with(out: PathBuf, days: usize, events: usize) -> lobsurv::Result<()> {
    let mut cfg = RunConfig::synthetic(days, 7, &out);
    if let Some(plan) = cfg.synthetic.as_mut() {
        plan.base.event_count = events;
    }
    cfg.jobs = 2;
    let (summary, reports) = run_all(&cfg)?;
    println!("threshold {} ticks", summary.threshold);
    for r in &reports {
        let best = r.selection.as_ref().and_then(|s| s.best());
        println!(
            "{}: {} episodes ({} censored), full adj R^2 {:?}, best model size {:?}, spreads {:?}, prevexceed {:?}",
            r.date,
            r.episodes,
            r.censored,
            r.full_fit.as_ref().and_then(|f| f.adj_r2),
            best.map(|b| b.size),
            r.coefficient("spreads"),
            r.coefficient("prevexceed"),
        );
    }
    println!("outputs under {}", out.display());
    Ok(())
}

pub fn run() -> lobsurv::Result<()> {
    let dir = std::env::temp_dir().join(format!("lobsurv-example-{}", std::process::id()));
    run_with(dir.clone(), 2, 30_000)?;
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> lobsurv::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| PathBuf::from("lobsurv-out"), PathBuf::from);
    let days = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    run_with(out, days, 200_000)
}
