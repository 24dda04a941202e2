//! Spread deviation episodes.
//!
//! The spread is evaluated after every event. An episode opens at the first
//! event time in `[t0, td)` where the spread is strictly above the threshold
//! and closes at the next event time where it is at most the threshold. A
//! one-sided book counts as an infinite spread. Zero-length episodes are
//! floored to [`DURATION_FLOOR_US`]. Episodes still open at `td` are censored
//! at `td - start`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::book::{Action, Micros, Ticks};
use crate::error::{Error, Result};
use crate::ingest::{CrossPolicy, DayLog};

/// 0.1 ms, roughly the smallest exchange round trip.
pub const DURATION_FLOOR_US: Micros = 100;
pub const EPISODE_HEADER: &str = "T_i_us,observed_us,censored,trigger";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSource {
    ReferenceDayMedian,
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    pub c: Ticks,
    pub source: ThresholdSource,
}

impl Threshold {
    pub fn explicit(c: Ticks) -> Result<Self> {
        if c < 1 {
            return Err(Error::InvalidConfig(format!("threshold must be >= 1 tick, got {c}")));
        }
        Ok(Threshold {
            c,
            source: ThresholdSource::Explicit,
        })
    }
}

/// Median of the sample. For an even count the two central order
/// statistics are averaged and rounded half up.
pub fn compute_threshold(samples: &[Ticks]) -> Result<Threshold> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut v = samples.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, &mut hi, _) = v.select_nth_unstable(mid);
    let c = if n % 2 == 1 {
        hi
    } else {
        let lo = *v[..mid].iter().max().expect("non-empty lower half");
        // floor((lo + hi + 1) / 2) rounds .5 up
        (lo + hi + 1).div_euclid(2)
    };
    Ok(Threshold {
        c: c.max(1),
        source: ThresholdSource::ReferenceDayMedian,
    })
}

/// The spread after every event of the day, skipping one-sided moments.
pub fn spread_samples(day: &DayLog) -> Result<Vec<Ticks>> {
    let mut out = Vec::with_capacity(day.events.len());
    day.replay(CrossPolicy::Fail, |_, _, book| {
        if let Some(s) = book.spread() {
            out.push(s);
        }
    })?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    MarketOrder,
    Cancellation,
    Other,
}

impl Trigger {
    pub fn from_action(a: Action) -> Self {
        match a {
            Action::Execute => Trigger::MarketOrder,
            Action::Cancel => Trigger::Cancellation,
            Action::Submit => Trigger::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::MarketOrder => "market_order",
            Trigger::Cancellation => "cancellation",
            Trigger::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "market_order" => Trigger::MarketOrder,
            "cancellation" => Trigger::Cancellation,
            "other" => Trigger::Other,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationEpisode {
    pub start_time: Micros,
    /// Duration if uncensored, `td - start_time` if censored.
    pub observed_time: Micros,
    pub censored: bool,
    pub trigger: Trigger,
    /// Index of the opening event in the day's stream.
    pub open_index: usize,
}

impl DeviationEpisode {
    pub fn duration(&self) -> Option<Micros> {
        (!self.censored).then_some(self.observed_time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub t0: Micros,
    pub td: Micros,
}

impl Window {
    /// One minute in from each end of the session.
    pub fn for_day(day: &DayLog) -> Self {
        Self::with_offsets(day, 60_000_000, 60_000_000)
    }

    pub fn with_offsets(day: &DayLog, start_offset: Micros, end_offset: Micros) -> Self {
        Window {
            t0: day.session_start + start_offset,
            td: day.session_end - end_offset,
        }
    }
}

pub fn extract_episodes(day: &DayLog, c: Threshold, window: Window) -> Result<Vec<DeviationEpisode>> {
    if window.t0 >= window.td {
        return Err(Error::InvalidConfig(format!(
            "empty observation window [{}, {})",
            window.t0, window.td
        )));
    }
    let mut episodes = Vec::new();
    let mut open: Option<(Micros, usize, Trigger)> = None;
    day.replay(CrossPolicy::Fail, |i, e, book| {
        let t = e.timestamp;
        if t > window.td {
            return;
        }
        let above = book.spread().is_none_or(|s| s > c.c);
        match open {
            None if above && t >= window.t0 && t < window.td => {
                open = Some((t, i, Trigger::from_action(e.action)));
            }
            Some((start, idx, trigger)) if !above => {
                episodes.push(DeviationEpisode {
                    start_time: start,
                    observed_time: (t - start).max(DURATION_FLOOR_US),
                    censored: false,
                    trigger,
                    open_index: idx,
                });
                open = None;
            }
            _ => {}
        }
    })?;
    if let Some((start, idx, trigger)) = open {
        episodes.push(DeviationEpisode {
            start_time: start,
            observed_time: window.td - start,
            censored: true,
            trigger,
            open_index: idx,
        });
    }
    Ok(episodes)
}

/// Number of episodes starting in `[t - delta, t)`. `episodes` must be
/// ordered by start time.
pub fn count_recent_episodes(episodes: &[DeviationEpisode], t: Micros, delta: Micros) -> usize {
    let lo = episodes.partition_point(|e| e.start_time < t - delta);
    let hi = episodes.partition_point(|e| e.start_time < t);
    hi.saturating_sub(lo)
}

pub fn write_episodes<W: Write>(episodes: &[DeviationEpisode], mut w: W) -> Result<()> {
    writeln!(w, "{EPISODE_HEADER}")?;
    for e in episodes {
        writeln!(
            w,
            "{},{},{},{}",
            e.start_time,
            e.observed_time,
            u8::from(e.censored),
            e.trigger.as_str()
        )?;
    }
    Ok(())
}

/// Reads an episode export. `open_index` is not part of the file and comes
/// back as zero.
pub fn read_episodes<R: BufRead>(r: R) -> Result<Vec<DeviationEpisode>> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == EPISODE_HEADER => {}
        _ => return Err(Error::MissingHeader { expected: EPISODE_HEADER }),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::MalformedLine {
            line: i,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        out.push(DeviationEpisode {
            start_time: f[0].parse().map_err(|_| bad("start"))?,
            observed_time: f[1].parse().map_err(|_| bad("observed"))?,
            censored: match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("censored flag")),
            },
            trigger: Trigger::parse(f[3]).ok_or_else(|| bad("trigger"))?,
            open_index: 0,
        });
    }
    Ok(out)
}
