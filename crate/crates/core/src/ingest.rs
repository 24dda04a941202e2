//! Event log files: parsing, serialization, replay and validation.
//!
//! One event per line, UTF-8, LF line endings, with a mandatory header:
//!
//! ```text
//! timestamp_ms,order_id,side,action,price_ticks,size
//! 34200000,O1,b,S,2700,100
//! ```
//!
//! `side` is `b` or `a`, `action` is `S` (submit), `E` (execute) or `C`
//! (cancel). Timestamps are milliseconds since midnight; a fractional part
//! of up to three digits carries sub-millisecond resolution and is only
//! written when non-zero, so integer-millisecond feeds round-trip unchanged.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::book::{Action, BookState, LobEvent, Micros, OrderId, Side};
use crate::error::{Error, Result};

pub const HEADER: &str = "timestamp_ms,order_id,side,action,price_ticks,size";

/// 08:00 local.
pub const DEFAULT_SESSION_START: Micros = 8 * 3_600_000_000;
/// 16:30 local.
pub const DEFAULT_SESSION_END: Micros = 16 * 3_600_000_000 + 30 * 60_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DayLog {
    pub date: String,
    pub events: Vec<LobEvent>,
    pub session_start: Micros,
    pub session_end: Micros,
}

impl DayLog {
    pub fn empty(date: impl Into<String>, session_start: Micros, session_end: Micros) -> Self {
        DayLog {
            date: date.into(),
            events: Vec::new(),
            session_start,
            session_end,
        }
    }

    /// Replays the day through a fresh book, calling `on_event` after every
    /// event with the book as it stands once that event has been processed.
    ///
    /// Events referencing unknown ids are skipped and counted. Crossing
    /// submits are skipped and counted under [`CrossPolicy::Count`], and
    /// abort the replay under [`CrossPolicy::Fail`].
    pub fn replay<F>(&self, policy: CrossPolicy, mut on_event: F) -> Result<ReplayStats>
    where
        F: FnMut(usize, &LobEvent, &BookState),
    {
        let mut book = BookState::new();
        let mut stats = ReplayStats::default();
        for (i, e) in self.events.iter().enumerate() {
            match e.action {
                Action::Submit => stats.submits += 1,
                Action::Execute => stats.executes += 1,
                Action::Cancel => stats.cancels += 1,
            }
            match book.apply_event(e) {
                Ok(()) => {}
                Err(Error::UnknownOrderId(id)) => {
                    stats.unknown_ids += 1;
                    if stats.unknown_id_samples.len() < 16 {
                        stats.unknown_id_samples.push(id);
                    }
                }
                Err(err @ Error::CrossedBookAfterEvent { .. }) => match policy {
                    CrossPolicy::Fail => return Err(err),
                    CrossPolicy::Count => stats.crossed_incidents += 1,
                },
                Err(other) => return Err(other),
            }
            on_event(i, e, &book);
        }
        Ok(stats)
    }

    /// Book state after the first `n` events.
    pub fn book_after(&self, n: usize) -> BookState {
        let mut book = BookState::new();
        for e in &self.events[..n.min(self.events.len())] {
            let _ = book.apply_event(e);
        }
        book
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossPolicy {
    Fail,
    Count,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub submits: u64,
    pub executes: u64,
    pub cancels: u64,
    pub unknown_ids: u64,
    pub crossed_incidents: u64,
    pub unknown_id_samples: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub events_total: u64,
    pub submits: u64,
    pub executes: u64,
    pub cancels: u64,
    pub unknown_ids: u64,
    pub crossed_incidents: u64,
    pub malformed_lines: u64,
    /// `(line number, reason)` for each skipped line.
    #[serde(skip)]
    pub malformed: Vec<(usize, String)>,
}

impl ValidationReport {
    pub fn has_findings(&self) -> bool {
        self.unknown_ids > 0 || self.crossed_incidents > 0 || self.malformed_lines > 0
    }

    pub fn execution_share(&self) -> f64 {
        if self.events_total == 0 {
            0.0
        } else {
            self.executes as f64 / self.events_total as f64
        }
    }
}

/// Replays a day and reports event counts and integrity findings.
pub fn validate_log(day: &DayLog) -> ValidationReport {
    let stats = day
        .replay(CrossPolicy::Count, |_, _, _| {})
        .expect("count policy does not fail on crossing");
    ValidationReport {
        events_total: day.events.len() as u64,
        submits: stats.submits,
        executes: stats.executes,
        cancels: stats.cancels,
        unknown_ids: stats.unknown_ids,
        crossed_incidents: stats.crossed_incidents,
        malformed_lines: 0,
        malformed: Vec::new(),
    }
}

/// Parses an event log. Malformed lines (and lines outside the session) are
/// skipped and reported; a header mismatch or a timestamp going backwards
/// is a hard error.
pub fn parse_event_log<R: BufRead>(
    mut reader: R,
    date: &str,
    session_start: Micros,
    session_end: Micros,
) -> Result<(DayLog, ValidationReport)> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HEADER => {}
        _ => return Err(Error::MissingHeader { expected: HEADER }),
    }

    let mut day = DayLog::empty(date, session_start, session_end);
    let mut malformed = Vec::new();
    let mut prev: Option<Micros> = None;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut e = match parse_line(line) {
            Ok(e) => e,
            Err(reason) => {
                malformed.push((line_no, reason));
                continue;
            }
        };
        if e.timestamp < session_start || e.timestamp > session_end {
            malformed.push((line_no, "timestamp outside session".to_string()));
            continue;
        }
        if let Some(p) = prev {
            if e.timestamp < p {
                return Err(Error::NonMonotoneTimestamp {
                    line: line_no,
                    previous: p,
                    found: e.timestamp,
                });
            }
        }
        prev = Some(e.timestamp);
        e.seq = day.events.len() as u64;
        day.events.push(e);
    }

    let mut report = validate_log(&day);
    report.malformed_lines = malformed.len() as u64;
    report.malformed = malformed;
    Ok((day, report))
}

fn parse_line(line: &str) -> std::result::Result<LobEvent, String> {
    let mut fields = line.split(',');
    let mut next = |name: &str| fields.next().ok_or_else(|| format!("missing field {name}"));
    let ts = next("timestamp_ms")?;
    let id = next("order_id")?;
    let side = next("side")?;
    let action = next("action")?;
    let price = next("price_ticks")?;
    let size = next("size")?;
    if fields.next().is_some() {
        return Err("too many fields".to_string());
    }
    let timestamp = parse_ms(ts)?;
    if id.is_empty() {
        return Err("empty order id".to_string());
    }
    let side = match side {
        "b" => Side::Bid,
        "a" => Side::Ask,
        other => return Err(format!("bad side {other:?}")),
    };
    let action = match action {
        "S" => Action::Submit,
        "E" => Action::Execute,
        "C" => Action::Cancel,
        other => return Err(format!("bad action {other:?}")),
    };
    let price: i64 = price.parse().map_err(|_| format!("bad price {price:?}"))?;
    let size: u64 = size.parse().map_err(|_| format!("bad size {size:?}"))?;
    if action == Action::Submit && (price <= 0 || size == 0) {
        return Err("submit needs positive price and size".to_string());
    }
    Ok(LobEvent {
        timestamp,
        seq: 0,
        order_id: OrderId::new(id),
        side,
        action,
        price,
        size,
    })
}

fn parse_ms(s: &str) -> std::result::Result<Micros, String> {
    let bad = || format!("bad timestamp {s:?}");
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    if frac.len() > 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let ms: i64 = whole.parse().map_err(|_| bad())?;
    let mut us = 0i64;
    for (i, b) in frac.bytes().enumerate() {
        us += i64::from(b - b'0') * [100, 10, 1][i];
    }
    ms.checked_mul(1000)
        .and_then(|v| v.checked_add(us))
        .ok_or_else(bad)
}

fn format_ms(us: Micros) -> String {
    let (ms, rem) = (us.div_euclid(1000), us.rem_euclid(1000));
    if rem == 0 {
        ms.to_string()
    } else {
        format!("{ms}.{rem:03}")
    }
}

pub fn write_event_log<W: Write>(day: &DayLog, mut w: W) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    for e in &day.events {
        let side = match e.side {
            Side::Bid => 'b',
            Side::Ask => 'a',
        };
        let action = match e.action {
            Action::Submit => 'S',
            Action::Execute => 'E',
            Action::Cancel => 'C',
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            format_ms(e.timestamp),
            e.order_id,
            side,
            action,
            e.price,
            e.size
        )?;
    }
    Ok(())
}

pub fn read_event_file(path: &std::path::Path, session_start: Micros, session_end: Micros) -> Result<(DayLog, ValidationReport)> {
    let date = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path)?;
    parse_event_log(std::io::BufReader::new(file), &date, session_start, session_end)
}
