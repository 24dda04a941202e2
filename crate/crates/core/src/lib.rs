//! # lobsurv
//!
//! Tick-by-tick limit order book replay, extraction of bid-ask spread
//! deviation episodes, and a censored log-normal accelerated failure time
//! (AFT) regression that explains how long those deviations last.
//!
//! The pipeline for one trading day is:
//!
//! 1. [`ingest`] parses an event CSV (or [`synth`] generates a day) into a
//!    [`ingest::DayLog`].
//! 2. [`book`] replays the events into an exact price-time priority book.
//! 3. [`deviation`] finds the episodes during which the spread sits above a
//!    threshold, with end-of-window censoring.
//! 4. [`covariates`] samples the book around each episode into a design
//!    matrix of 19 covariates.
//! 5. [`aft`] fits the censored log-normal AFT model by maximum likelihood.
//! 6. [`select`] runs an exact branch-and-bound best-subset search and refits
//!    each per-size winner with the censored likelihood.
//! 7. [`pipeline`] ties it together per day and aggregates across days.
//!
//! Each stage has a runnable program under `examples/`:
//!
//! ```bash
//! cargo run --release --example book_mechanics
//! cargo run --release --example daily_pipeline
//! ```

pub mod aft;
pub mod book;
pub mod covariates;
pub mod deviation;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
