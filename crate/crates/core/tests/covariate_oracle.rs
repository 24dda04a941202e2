mod common;

use common::{arb_events, uncrossed, NaiveBook};
use lobsurv::covariates::{build_design_matrix, standardize, CovariateParams, EwlParams, COVARIATE_COUNT};
use lobsurv::deviation::{extract_episodes, DeviationEpisode, Threshold, Window};
use lobsurv::ingest::DayLog;
use lobsurv::synth::{generate_synthetic_day, SyntheticConfig};
use proptest::prelude::*;

const START: i64 = 28_800_000_000;

/// Rows computed from naive snapshots taken after every event.
fn oracle_rows(day: &DayLog, episodes: &[DeviationEpisode], p: CovariateParams) -> (Vec<[f64; COVARIATE_COUNT]>, usize) {
    let mut book = NaiveBook::default();
    let snaps: Vec<([f64; 9], bool)> = day
        .events
        .iter()
        .map(|e| {
            book.apply(e);
            (book.snapshot(p.levels), book.spread().is_some())
        })
        .collect();
    let state_at = |q: i64| -> Option<[f64; 9]> {
        if q < day.session_start {
            return None;
        }
        let k = day.events.partition_point(|e| e.timestamp <= q);
        Some(if k == 0 { [0.0; 9] } else { snaps[k - 1].0 })
    };
    let mut rows = Vec::new();
    let mut dropped = 0;
    for ep in episodes {
        let (inst, two_sided) = snaps[ep.open_index];
        if !two_sided {
            dropped += 1;
            continue;
        }
        let mut row = [0.0; COVARIATE_COUNT];
        row[..9].copy_from_slice(&inst);
        for n in 1..=p.ewl.lags {
            let w = p.ewl.weight.powi(n as i32);
            if let Some(x) = state_at(ep.start_time - i64::from(n) * p.ewl.spacing_us) {
                for j in 0..9 {
                    row[9 + j] += w * x[j];
                }
            }
        }
        row[18] = episodes
            .iter()
            .filter(|o| o.start_time >= ep.start_time - p.prev_window_us && o.start_time < ep.start_time)
            .count() as f64;
        rows.push(row);
    }
    (rows, dropped)
}

fn check(day: &DayLog, c: i64, w: Window, p: CovariateParams) -> Result<(), TestCaseError> {
    let eps = extract_episodes(day, Threshold::explicit(c).unwrap(), w).unwrap();
    let m = build_design_matrix(day, &eps, p).unwrap();
    let (rows, dropped) = oracle_rows(day, &eps, p);
    prop_assert_eq!(m.dropped_rows, dropped);
    prop_assert_eq!(m.rows(), rows.len());
    for (i, row) in rows.iter().enumerate() {
        for j in 0..COVARIATE_COUNT {
            let (got, want) = (m.x[(i, j)], row[j]);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "row {} col {}: {} vs {}", i, j, got, want);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn design_rows_match_naive_snapshots(
        events in arb_events(START, 250),
        c in 1i64..8,
        levels in 1usize..6,
        weight in 0.1f64..1.0,
        lags in 0u32..6,
        spacing in 1i64..20_000,
        prev in 1i64..50_000,
    ) {
        let day = DayLog {
            date: "d".into(),
            events: uncrossed(events),
            session_start: START,
            session_end: START + 3_600_000_000,
        };
        let p = CovariateParams {
            levels,
            ewl: EwlParams { weight, lags, spacing_us: spacing },
            prev_window_us: prev,
        };
        check(&day, c, Window { t0: START + 20_000, td: START + 400_000 }, p)?;
    }
}

#[test]
fn synthetic_design_matches_naive_snapshots() {
    let day = generate_synthetic_day(&SyntheticConfig {
        event_count: 12_000,
        session_end: START + 1_800_000_000,
        ..SyntheticConfig::with_seed(2)
    })
    .unwrap();
    check(&day, 1, Window::for_day(&day), CovariateParams::default()).unwrap();
}

#[test]
fn standardized_columns_have_unit_scale() {
    let day = generate_synthetic_day(&SyntheticConfig {
        event_count: 12_000,
        session_end: START + 1_800_000_000,
        ..SyntheticConfig::with_seed(5)
    })
    .unwrap();
    let eps = extract_episodes(&day, Threshold::explicit(1).unwrap(), Window::for_day(&day)).unwrap();
    let m = standardize(&build_design_matrix(&day, &eps, CovariateParams::default()).unwrap()).unwrap();
    let n = m.rows() as f64;
    for j in m.active_columns() {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12, "column {j}: mean {mean} var {var}");
    }
}
