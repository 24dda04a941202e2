//! Generates a synthetic day, writes it in the event-file format, parses it
//! back and prints the validation summary.
//!
//! ```text
//! cargo run --release --example synth_and_validate -- [seed] [events]
//! ```

use lobsurv::ingest::{parse_event_log, write_event_log};
use lobsurv::synth::{generate_synthetic_day, SyntheticConfig};

pub fn run_with(seed: u64, events: usize) -> lobsurv::Result<()> {
    let cfg = SyntheticConfig {
        event_count: events,
        ..SyntheticConfig::with_seed(seed)
    };
    let day = generate_synthetic_day(&cfg)?;

    let mut bytes = Vec::new();
    write_event_log(&day, &mut bytes)?;
    println!("{}: {} events, {} bytes", day.date, day.events.len(), bytes.len());
    for line in String::from_utf8_lossy(&bytes).lines().take(4) {
        println!("  {line}");
    }

    let (parsed, report) = parse_event_log(bytes.as_slice(), &day.date, day.session_start, day.session_end)?;
    assert_eq!(parsed, day);
    println!(
        "submits {} executes {} cancels {} (execution share {:.2}%)",
        report.submits,
        report.executes,
        report.cancels,
        100.0 * report.execution_share()
    );
    println!(
        "unknown ids {}, crossings {}, malformed lines {}",
        report.unknown_ids, report.crossed_incidents, report.malformed_lines
    );
    Ok(())
}

pub fn run() -> lobsurv::Result<()> {
    run_with(7, 20_000)
}

#[allow(dead_code)]
fn main() -> lobsurv::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let events = args.next().and_then(|s| s.parse().ok()).unwrap_or(200_000);
    run_with(seed, events)
}
