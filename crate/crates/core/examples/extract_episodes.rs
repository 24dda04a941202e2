//! Finds the spread threshold of a synthetic day, extracts the deviation
//! episodes and builds the covariate design.
//!
//! ```text
//! cargo run --release --example extract_episodes
//! ```

use lobsurv::covariates::{build_design_matrix, CovariateParams, COVARIATE_NAMES};
use lobsurv::deviation::{compute_threshold, count_recent_episodes, extract_episodes, spread_samples, Window};
use lobsurv::synth::{generate_synthetic_day, SyntheticConfig};

pub fn run_with(events: usize) -> lobsurv::Result<()> {
    let day = generate_synthetic_day(&SyntheticConfig {
        event_count: events,
        ..SyntheticConfig::with_seed(11)
    })?;
    let c = compute_threshold(&spread_samples(&day)?)?;
    println!("median spread {} ticks", c.c);

    let episodes = extract_episodes(&day, c, Window::for_day(&day))?;
    let censored = episodes.iter().filter(|e| e.censored).count();
    let mut durations: Vec<i64> = episodes.iter().filter_map(|e| e.duration()).collect();
    durations.sort_unstable();
    println!("{} episodes, {censored} censored", episodes.len());
    if !durations.is_empty() {
        println!(
            "durations (ms): median {:.1}, 90th percentile {:.1}, max {:.1}",
            durations[durations.len() / 2] as f64 / 1e3,
            durations[durations.len() * 9 / 10] as f64 / 1e3,
            *durations.last().unwrap() as f64 / 1e3
        );
    }
    let busiest = episodes
        .iter()
        .map(|e| count_recent_episodes(&episodes, e.start_time, 1_000_000))
        .max()
        .unwrap_or(0);
    println!("most episodes opened in the second before an exceedance: {busiest}");

    let design = build_design_matrix(&day, &episodes, CovariateParams::default())?;
    println!("design: {} rows ({} dropped)", design.rows(), design.dropped_rows);
    if design.rows() > 0 {
        for (j, name) in COVARIATE_NAMES.iter().enumerate().take(9) {
            let col = design.column(j);
            println!("  {name:<14} mean {:>10.2}", col.iter().sum::<f64>() / col.len() as f64);
        }
    }
    Ok(())
}

pub fn run() -> lobsurv::Result<()> {
    run_with(30_000)
}

#[allow(dead_code)]
fn main() -> lobsurv::Result<()> {
    run_with(200_000)
}
