//! Order book covariates for each deviation episode.
//!
//! Nine instantaneous quantities are read from the book right after the
//! episode's opening event, nine exponentially weighted lags of the same
//! quantities are read from earlier snapshots, and `prevexceed` counts the
//! episodes that started in the preceding window.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::book::{BookState, Micros, Side};
use crate::deviation::{count_recent_episodes, DeviationEpisode};
use crate::error::{Error, Result};
use crate::ingest::{CrossPolicy, DayLog};
use crate::linalg::pearson;

pub const INSTANT_COUNT: usize = 9;
pub const COVARIATE_COUNT: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Covariate {
    Ask,
    Bid,
    AskVolume,
    BidVolume,
    BidModified,
    AskModified,
    BidAge,
    AskAge,
    Spreads,
    LAsk,
    LBid,
    LAskVolume,
    LBidVolume,
    LBidModified,
    LAskModified,
    LBidAge,
    LAskAge,
    LSpreads,
    PrevExceed,
}

pub const ALL_COVARIATES: [Covariate; COVARIATE_COUNT] = [
    Covariate::Ask,
    Covariate::Bid,
    Covariate::AskVolume,
    Covariate::BidVolume,
    Covariate::BidModified,
    Covariate::AskModified,
    Covariate::BidAge,
    Covariate::AskAge,
    Covariate::Spreads,
    Covariate::LAsk,
    Covariate::LBid,
    Covariate::LAskVolume,
    Covariate::LBidVolume,
    Covariate::LBidModified,
    Covariate::LAskModified,
    Covariate::LBidAge,
    Covariate::LAskAge,
    Covariate::LSpreads,
    Covariate::PrevExceed,
];

pub const COVARIATE_NAMES: [&str; COVARIATE_COUNT] = [
    "ask",
    "bid",
    "askVolume",
    "bidVolume",
    "bidModified",
    "askModified",
    "bidAge",
    "askAge",
    "spreads",
    "lask",
    "lbid",
    "laskVolume",
    "lbidVolume",
    "lbidModified",
    "laskModified",
    "lbidAge",
    "laskAge",
    "lspreads",
    "prevexceed",
];

impl Covariate {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        COVARIATE_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        COVARIATE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| ALL_COVARIATES[i])
    }
}

/// The nine instantaneous quantities in covariate order.
pub type Snapshot = [f64; INSTANT_COUNT];

/// Book quantities over the top `levels` levels. A one-sided book
/// contributes zeros for the missing side and for the spread term.
pub fn snapshot(book: &BookState, levels: usize) -> Snapshot {
    let a = book.depth_stats(Side::Ask, levels);
    let b = book.depth_stats(Side::Bid, levels);
    let spread_term = book.spread().map_or(0.0, |s| (s - 1) as f64);
    [
        a.order_count as f64,
        b.order_count as f64,
        a.total_volume as f64,
        b.total_volume as f64,
        b.modified_count as f64,
        a.modified_count as f64,
        b.mean_age_ms,
        a.mean_age_ms,
        spread_term,
    ]
}

/// Covariates at an exceedance. `None` when a side of the book is empty,
/// in which case the row is excluded.
pub fn instantaneous_covariates(book: &BookState, levels: usize) -> Option<Snapshot> {
    book.spread()?;
    Some(snapshot(book, levels))
}

/// Time-indexed access to past snapshots.
pub trait CovariateHistory {
    /// The snapshot in force at `t`, or `None` if `t` predates the history.
    fn at(&self, t: Micros) -> Option<Snapshot>;
}

/// A right-continuous step function of snapshots.
#[derive(Clone, Debug, Default)]
pub struct StepHistory {
    /// Nothing is known before this time.
    pub origin: Micros,
    points: Vec<(Micros, Snapshot)>,
}

impl StepHistory {
    pub fn new(origin: Micros) -> Self {
        StepHistory {
            origin,
            points: Vec::new(),
        }
    }

    /// Appends a value taking effect at `t`. Times must not decrease.
    pub fn push(&mut self, t: Micros, value: Snapshot) {
        debug_assert!(self.points.last().is_none_or(|(p, _)| *p <= t));
        self.points.push((t, value));
    }
}

impl CovariateHistory for StepHistory {
    fn at(&self, t: Micros) -> Option<Snapshot> {
        if t < self.origin {
            return None;
        }
        let idx = self.points.partition_point(|(p, _)| *p <= t);
        Some(if idx == 0 {
            [0.0; INSTANT_COUNT]
        } else {
            self.points[idx - 1].1
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwlParams {
    pub weight: f64,
    pub lags: u32,
    pub spacing_us: Micros,
}

impl Default for EwlParams {
    fn default() -> Self {
        EwlParams {
            weight: 0.75,
            lags: 5,
            spacing_us: 1_000_000,
        }
    }
}

/// `sum_{n=1..lags} weight^n * x(t - n * spacing)`, with unavailable lags
/// contributing zero.
pub fn ewl_covariates<H: CovariateHistory + ?Sized>(history: &H, t: Micros, p: EwlParams) -> Snapshot {
    let mut out = [0.0; INSTANT_COUNT];
    let mut w = 1.0;
    for n in 1..=p.lags {
        w *= p.weight;
        if let Some(x) = history.at(t - Micros::from(n) * p.spacing_us) {
            for (o, v) in out.iter_mut().zip(x) {
                *o += w * v;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateParams {
    /// Book levels summed per side.
    pub levels: usize,
    pub ewl: EwlParams,
    /// Look-back for `prevexceed`.
    pub prev_window_us: Micros,
}

impl Default for CovariateParams {
    fn default() -> Self {
        CovariateParams {
            levels: 5,
            ewl: EwlParams::default(),
            prev_window_us: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    /// One row per episode, one column per covariate.
    pub x: DMatrix<f64>,
    /// Log observed duration in milliseconds.
    pub response: Vec<f64>,
    pub censored: Vec<bool>,
    /// Column means and population standard deviations before standardizing.
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Columns with zero variance, left at zero after standardizing.
    pub degenerate: Vec<bool>,
    pub standardized: bool,
    /// Episodes dropped because a book side was empty at the exceedance.
    pub dropped_rows: usize,
}

impl DesignMatrix {
    pub fn empty() -> Self {
        Self::from_rows(Vec::new(), Vec::new(), Vec::new())
    }

    pub fn from_rows(rows: Vec<[f64; COVARIATE_COUNT]>, response: Vec<f64>, censored: Vec<bool>) -> Self {
        let n = rows.len();
        let x = DMatrix::from_fn(n, COVARIATE_COUNT, |i, j| rows[i][j]);
        DesignMatrix {
            names: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
            x,
            response,
            censored,
            means: vec![0.0; COVARIATE_COUNT],
            sds: vec![1.0; COVARIATE_COUNT],
            degenerate: vec![false; COVARIATE_COUNT],
            standardized: false,
            dropped_rows: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    pub fn uncensored_count(&self) -> usize {
        self.censored.iter().filter(|c| !**c).count()
    }

    /// Indices of columns that carry variation.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.x.ncols()).filter(|&j| !self.degenerate[j]).collect()
    }

    /// Maps coefficients fitted on the standardized columns `cols` (intercept
    /// first) back to the original covariate scale.
    pub fn unstandardize(&self, cols: &[usize], beta: &[f64]) -> Vec<f64> {
        let mut out = beta.to_vec();
        for (k, &j) in cols.iter().enumerate() {
            if self.degenerate[j] {
                out[k + 1] = 0.0;
                continue;
            }
            out[k + 1] = beta[k + 1] / self.sds[j];
            out[0] -= beta[k + 1] * self.means[j] / self.sds[j];
        }
        out
    }
}

/// Builds one row per episode from a replay of the day. Rows whose book has
/// an empty side at the exceedance are dropped and counted.
pub fn build_design_matrix(
    day: &DayLog,
    episodes: &[DeviationEpisode],
    params: CovariateParams,
) -> Result<DesignMatrix> {
    if episodes.is_empty() {
        return Ok(DesignMatrix::empty());
    }
    let lags = params.ewl.lags as i64;
    let mut queries: Vec<Micros> = episodes
        .iter()
        .flat_map(|e| (1..=lags).map(move |n| e.start_time - n * params.ewl.spacing_us))
        .filter(|&q| q >= day.session_start)
        .collect();
    queries.sort_unstable();
    queries.dedup();

    let mut history = StepHistory::new(day.session_start);
    let mut q = 0;
    let first_ts = day.events.first().map_or(Micros::MAX, |e| e.timestamp);
    while q < queries.len() && queries[q] < first_ts {
        history.push(queries[q], [0.0; INSTANT_COUNT]);
        q += 1;
    }

    let mut instant: Vec<Option<Snapshot>> = vec![None; episodes.len()];
    let mut next_episode = 0;
    day.replay(CrossPolicy::Fail, |i, e, book| {
        while next_episode < episodes.len() && episodes[next_episode].open_index == i {
            instant[next_episode] = instantaneous_covariates(book, params.levels);
            next_episode += 1;
        }
        let next_ts = day.events.get(i + 1).map_or(Micros::MAX, |n| n.timestamp);
        if q < queries.len() && queries[q] >= e.timestamp && queries[q] < next_ts {
            let snap = snapshot(book, params.levels);
            while q < queries.len() && queries[q] < next_ts {
                history.push(queries[q], snap);
                q += 1;
            }
        }
    })?;

    let mut rows = Vec::with_capacity(episodes.len());
    let mut response = Vec::with_capacity(episodes.len());
    let mut censored = Vec::with_capacity(episodes.len());
    let mut dropped = 0;
    for (ep, inst) in episodes.iter().zip(instant) {
        let Some(inst) = inst else {
            dropped += 1;
            continue;
        };
        let lagged = ewl_covariates(&history, ep.start_time, params.ewl);
        let mut row = [0.0; COVARIATE_COUNT];
        row[..INSTANT_COUNT].copy_from_slice(&inst);
        row[INSTANT_COUNT..2 * INSTANT_COUNT].copy_from_slice(&lagged);
        row[COVARIATE_COUNT - 1] = count_recent_episodes(episodes, ep.start_time, params.prev_window_us) as f64;
        rows.push(row);
        response.push((ep.observed_time as f64 / 1000.0).ln());
        censored.push(ep.censored);
    }
    let mut m = DesignMatrix::from_rows(rows, response, censored);
    m.dropped_rows = dropped;
    Ok(m)
}

/// Rescales every column to mean 0 and population standard deviation 1.
pub fn standardize(m: &DesignMatrix) -> Result<DesignMatrix> {
    let n = m.rows();
    if n < 2 {
        return Err(Error::TooFewRows { rows: n, required: 2 });
    }
    let mut out = m.clone();
    for j in 0..m.x.ncols() {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let degenerate = !(sd > 1e-12 * (1.0 + mean.abs()));
        for (i, v) in col.iter().enumerate() {
            out.x[(i, j)] = if degenerate { 0.0 } else { (v - mean) / sd };
        }
        out.means[j] = mean;
        out.sds[j] = if degenerate { 1.0 } else { sd };
        out.degenerate[j] = degenerate;
    }
    out.standardized = true;
    Ok(out)
}

/// Pearson correlation matrix of the covariate columns. Zero-variance
/// columns get zero off-diagonal entries.
pub fn pairwise_correlations(m: &DesignMatrix) -> Result<DMatrix<f64>> {
    let n = m.rows();
    if n < 2 {
        return Err(Error::TooFewRows { rows: n, required: 2 });
    }
    let p = m.x.ncols();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| m.column(j)).collect();
    let mut r = DMatrix::identity(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            let v = pearson(&cols[a], &cols[b]).unwrap_or(0.0);
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    Ok(r)
}

pub fn write_design_csv<W: Write>(m: &DesignMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{},response,censored", m.names.join(","))?;
    for i in 0..m.rows() {
        for j in 0..m.x.ncols() {
            write!(w, "{},", m.x[(i, j)])?;
        }
        writeln!(w, "{},{}", m.response[i], u8::from(m.censored[i]))?;
    }
    Ok(())
}

pub fn read_design_csv<R: BufRead>(r: R) -> Result<DesignMatrix> {
    const EXPECTED: &str = "19 covariate names, response, censored";
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or(Error::MissingHeader { expected: EXPECTED })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() != COVARIATE_COUNT + 2
        || cols[..COVARIATE_COUNT] != COVARIATE_NAMES
        || cols[COVARIATE_COUNT..] != ["response", "censored"]
    {
        return Err(Error::MissingHeader { expected: EXPECTED });
    }
    let mut rows = Vec::new();
    let mut response = Vec::new();
    let mut censored = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::MalformedLine {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != COVARIATE_COUNT + 2 {
            return Err(bad("wrong field count"));
        }
        let mut row = [0.0; COVARIATE_COUNT];
        for (slot, s) in row.iter_mut().zip(&f) {
            *slot = s.parse().map_err(|_| bad("covariate value"))?;
        }
        rows.push(row);
        response.push(f[COVARIATE_COUNT].parse().map_err(|_| bad("response"))?);
        censored.push(match f[COVARIATE_COUNT + 1] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("censored flag")),
        });
    }
    Ok(DesignMatrix::from_rows(rows, response, censored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::LobEvent;

    #[test]
    fn names_line_up_with_enum() {
        for c in ALL_COVARIATES {
            assert_eq!(Covariate::from_name(c.name()), Some(c));
        }
        assert_eq!(Covariate::Spreads.index(), 8);
        assert_eq!(Covariate::PrevExceed.name(), "prevexceed");
    }

    #[test]
    fn instantaneous_sums_available_levels() {
        let mut b = BookState::new();
        for e in [
            LobEvent::submit(0, 0, "b", Side::Bid, 2700, 10),
            LobEvent::submit(0, 1, "a1", Side::Ask, 2705, 70),
            LobEvent::submit(0, 2, "a2", Side::Ask, 2705, 100),
            LobEvent::submit(0, 3, "a3", Side::Ask, 2706, 200),
        ] {
            b.apply_event(&e).unwrap();
        }
        let x = instantaneous_covariates(&b, 5).unwrap();
        assert_eq!(x[Covariate::Ask.index()], 3.0);
        assert_eq!(x[Covariate::AskVolume.index()], 370.0);
        assert_eq!(x[Covariate::Spreads.index()], 4.0);
        // everything submitted at the current time
        assert_eq!(x[Covariate::BidAge.index()], 0.0);
        assert_eq!(x[Covariate::AskAge.index()], 0.0);
    }

    #[test]
    fn empty_side_excludes_row() {
        let mut b = BookState::new();
        b.apply_event(&LobEvent::submit(0, 0, "b", Side::Bid, 2700, 10)).unwrap();
        assert!(instantaneous_covariates(&b, 5).is_none());
    }

    fn constant_history(v: f64) -> StepHistory {
        let mut h = StepHistory::new(0);
        h.push(0, [v; INSTANT_COUNT]);
        h
    }

    #[test]
    fn ewl_constant_history_is_geometric_sum() {
        let h = constant_history(1.0);
        let out = ewl_covariates(&h, 10_000_000, EwlParams::default());
        // w (1 - w^5) / (1 - w) at w = 0.75
        let expected = 2.2880859375;
        for v in out {
            assert!((v - expected).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn ewl_zero_weight_and_single_lag() {
        let h = constant_history(3.0);
        let p = EwlParams {
            weight: 0.0,
            ..EwlParams::default()
        };
        assert_eq!(ewl_covariates(&h, 10_000_000, p), [0.0; INSTANT_COUNT]);

        let mut h = StepHistory::new(0);
        h.push(0, [0.0; INSTANT_COUNT]);
        h.push(9_000_000, [4.0; INSTANT_COUNT]);
        h.push(9_000_001, [0.0; INSTANT_COUNT]);
        let out = ewl_covariates(&h, 10_000_000, EwlParams::default());
        assert_eq!(out, [3.0; INSTANT_COUNT]);
    }

    #[test]
    fn ewl_lags_before_origin_count_zero() {
        let mut h = constant_history(1.0);
        h.origin = 7_000_000;
        let out = ewl_covariates(&h, 10_000_000, EwlParams::default());
        // only lags 1..=3 are available
        let expected = 0.75 + 0.5625 + 0.421875;
        assert!((out[0] - expected).abs() < 1e-15);
    }

    fn design(cols: &[&[f64]]) -> DesignMatrix {
        let n = cols[0].len();
        let rows = (0..n)
            .map(|i| {
                let mut r = [0.0; COVARIATE_COUNT];
                for (j, c) in cols.iter().enumerate() {
                    r[j] = c[i];
                }
                r
            })
            .collect();
        DesignMatrix::from_rows(rows, vec![0.0; n], vec![false; n])
    }

    #[test]
    fn standardize_examples() {
        let m = standardize(&design(&[&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]])).unwrap();
        assert_eq!(m.column(0), vec![-1.224744871391589, 0.0, 1.224744871391589]);
        assert!(m.degenerate[1] && m.column(1) == vec![0.0; 3]);
        // columns 2.. are all zero as well
        assert!(m.degenerate[COVARIATE_COUNT - 1]);

        let twice = standardize(&m).unwrap();
        for (a, b) in twice.x.iter().zip(m.x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            standardize(&design(&[&[1.0]])),
            Err(Error::TooFewRows { rows: 1, required: 2 })
        ));
    }

    #[test]
    fn unstandardize_inverts_the_scaling() {
        let raw = design(&[&[1.0, 2.0, 4.0, 7.0], &[0.5, 0.1, 0.3, 0.2]]);
        let s = standardize(&raw).unwrap();
        let beta = [0.3, 1.2, -0.7];
        let back = s.unstandardize(&[0, 1], &beta);
        for i in 0..4 {
            let std_pred = beta[0] + beta[1] * s.x[(i, 0)] + beta[2] * s.x[(i, 1)];
            let raw_pred = back[0] + back[1] * raw.x[(i, 0)] + back[2] * raw.x[(i, 1)];
            assert!((std_pred - raw_pred).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_examples() {
        let m = design(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0], &[-1.0, -2.0, -3.0]]);
        let r = pairwise_correlations(&m).unwrap();
        assert_eq!(r[(0, 0)], 1.0);
        assert!((r[(0, 2)] + 1.0).abs() < 1e-15);
        // hand computation: 3 / sqrt(2 * 4.6667) = 0.98198050606...
        assert!((r[(0, 1)] - 0.9819805060619657).abs() < 1e-12);
        assert_eq!(r[(0, 5)], 0.0);
        assert_eq!(r[(5, 5)], 1.0);
    }

    #[test]
    fn design_csv_round_trip() {
        let mut m = design(&[&[1.5, -2.25e-7], &[3.0, 0.1 + 0.2]]);
        m.response = vec![(0.1f64).ln(), 2.0];
        m.censored = vec![false, true];
        let mut buf = Vec::new();
        write_design_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ask,bid,askVolume,bidVolume,bidModified,askModified,bidAge,askAge,spreads,lask,lbid,laskVolume,lbidVolume,lbidModified,laskModified,lbidAge,laskAge,lspreads,prevexceed,response,censored\n"));
        let back = read_design_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
