//! Reference implementations used as oracles by the integration tests.
//! They favour obviousness over speed.

#![allow(dead_code)]

use std::collections::HashMap;

use lobsurv::aft::SurvivalData;
use lobsurv::book::{Action, LobEvent, Micros, Side, Ticks};
use lobsurv::ingest::DayLog;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct NaiveOrder {
    pub id: String,
    pub side: Side,
    pub price: Ticks,
    pub size: u64,
    pub first_seen: Micros,
    pub revised: bool,
}

/// Orders kept in one flat list in arrival order; every query scans it.
#[derive(Clone, Debug, Default)]
pub struct NaiveBook {
    pub orders: Vec<NaiveOrder>,
    pub seen: HashMap<String, Micros>,
    pub now: Micros,
}

impl NaiveBook {
    pub fn best(&self, side: Side) -> Option<Ticks> {
        let prices = self.orders.iter().filter(|o| o.side == side).map(|o| o.price);
        match side {
            Side::Bid => prices.max(),
            Side::Ask => prices.min(),
        }
    }

    pub fn spread(&self) -> Option<Ticks> {
        Some(self.best(Side::Ask)? - self.best(Side::Bid)?)
    }

    /// Returns false when the event was rejected (unknown id or crossing).
    pub fn apply(&mut self, e: &LobEvent) -> bool {
        self.now = e.timestamp;
        let id = e.order_id.as_str();
        let pos = self.orders.iter().position(|o| o.id == id);
        match e.action {
            Action::Submit => {
                let crosses = match e.side {
                    Side::Bid => self.best(Side::Ask).is_some_and(|a| e.price >= a),
                    Side::Ask => self.best(Side::Bid).is_some_and(|b| e.price <= b),
                };
                if crosses || e.size == 0 || e.price <= 0 {
                    return false;
                }
                let first_seen = self.seen.get(id).copied();
                if let Some(p) = pos {
                    self.orders.remove(p);
                }
                if first_seen.is_none() {
                    self.seen.insert(id.to_string(), e.timestamp);
                }
                self.orders.push(NaiveOrder {
                    id: id.to_string(),
                    side: e.side,
                    price: e.price,
                    size: e.size,
                    first_seen: first_seen.unwrap_or(e.timestamp),
                    revised: first_seen.is_some(),
                });
                true
            }
            Action::Execute => match pos {
                None => false,
                Some(p) => {
                    let o = &mut self.orders[p];
                    o.size = o.size.saturating_sub(e.size);
                    if o.size == 0 {
                        self.orders.remove(p);
                    }
                    true
                }
            },
            Action::Cancel => match pos {
                None => false,
                Some(p) => {
                    self.orders.remove(p);
                    true
                }
            },
        }
    }

    /// Distinct prices of a side, best first.
    pub fn prices(&self, side: Side) -> Vec<Ticks> {
        let mut p: Vec<Ticks> = self.orders.iter().filter(|o| o.side == side).map(|o| o.price).collect();
        p.sort_unstable();
        p.dedup();
        if side == Side::Bid {
            p.reverse();
        }
        p
    }

    /// (count, volume, revised count, mean age ms) over the top `k` levels.
    pub fn depth(&self, side: Side, k: usize) -> (u64, u64, u64, f64) {
        let top: Vec<Ticks> = self.prices(side).into_iter().take(k).collect();
        let chosen: Vec<&NaiveOrder> = self
            .orders
            .iter()
            .filter(|o| o.side == side && top.contains(&o.price))
            .collect();
        let n = chosen.len() as u64;
        let vol = chosen.iter().map(|o| o.size).sum();
        let rev = chosen.iter().filter(|o| o.revised).count() as u64;
        let age = if n == 0 {
            0.0
        } else {
            chosen.iter().map(|o| (self.now - o.first_seen) as f64).sum::<f64>() / n as f64 / 1000.0
        };
        (n, vol, rev, age)
    }

    /// The nine instantaneous covariates.
    pub fn snapshot(&self, levels: usize) -> [f64; 9] {
        let (ac, av, am, aa) = self.depth(Side::Ask, levels);
        let (bc, bv, bm, ba) = self.depth(Side::Bid, levels);
        let s = self.spread().map_or(0.0, |s| (s - 1) as f64);
        [ac as f64, bc as f64, av as f64, bv as f64, bm as f64, am as f64, ba, aa, s]
    }
}

/// Spread after every event (`None` while a side is empty), computed with
/// the naive book.
pub fn spread_path(day: &DayLog) -> Vec<(Micros, Option<Ticks>)> {
    let mut book = NaiveBook::default();
    day.events
        .iter()
        .map(|e| {
            book.apply(e);
            (e.timestamp, book.spread())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Episode {
    pub start: Micros,
    pub observed: Micros,
    pub censored: bool,
}

/// Scans the spread path for up-crossings above `c` and the following
/// down-crossings.
pub fn brute_force_episodes(day: &DayLog, c: Ticks, t0: Micros, td: Micros) -> Vec<Episode> {
    let path = spread_path(day);
    let above: Vec<bool> = path.iter().map(|(_, s)| s.is_none_or(|s| s > c)).collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < path.len() {
        let (t, _) = path[k];
        if t > td {
            break;
        }
        if !(above[k] && t >= t0 && t < td) {
            k += 1;
            continue;
        }
        let close = (k + 1..path.len()).find(|&j| path[j].0 > td || !above[j]);
        match close {
            Some(j) if path[j].0 <= td => {
                out.push(Episode {
                    start: t,
                    observed: (path[j].0 - t).max(100),
                    censored: false,
                });
                k = j + 1;
            }
            _ => {
                out.push(Episode {
                    start: t,
                    observed: td - t,
                    censored: true,
                });
                break;
            }
        }
    }
    out
}

/// Solves the normal equations by Gaussian elimination with partial pivoting.
pub fn ols_normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..x.nrows()).map(|r| x[(r, i)] * x[(r, j)]).sum();
        }
        a[i][p] = (0..x.nrows()).map(|r| x[(r, i)] * y[r]).sum();
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..p {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=p {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

pub struct Simulated {
    pub data: SurvivalData,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// Draws `log T = x'beta + sigma * e` with standard normal covariates and
/// independent log-normal censoring times tuned to `censor_share`.
pub fn simulate_aft(seed: u64, n: usize, beta: &[f64], sigma: f64, censor_share: f64) -> Simulated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
    let sigma_c = sigma;
    // P(log C < log T) = Phi(-shift / sqrt(sigma^2 + sigma_c^2))
    let shift = if censor_share > 0.0 {
        use statrs::distribution::{ContinuousCDF, Normal};
        -Normal::standard().inverse_cdf(censor_share) * (sigma * sigma + sigma_c * sigma_c).sqrt()
    } else {
        f64::INFINITY
    };
    let mut y = Vec::with_capacity(n);
    let mut censored = Vec::with_capacity(n);
    for i in 0..n {
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        let t = eta + sigma * rng.sample::<f64, _>(StandardNormal);
        let c = eta + shift + sigma_c * rng.sample::<f64, _>(StandardNormal);
        if c < t {
            y.push(c);
            censored.push(true);
        } else {
            y.push(t);
            censored.push(false);
        }
    }
    Simulated {
        data: SurvivalData::new(x, y, censored).expect("valid simulated data"),
        beta: beta.to_vec(),
        sigma,
    }
}

/// Random event streams over a handful of ids and a narrow price band, so
/// that revisions, crossings and unknown ids all occur. Timestamps start at
/// `origin` and never decrease.
pub fn arb_events(origin: Micros, max_len: usize) -> impl proptest::strategy::Strategy<Value = Vec<LobEvent>> {
    use proptest::prelude::*;
    let op = (0u8..10, 0usize..12, any::<bool>(), 95i64..106, 1u64..60, 0i64..2500);
    proptest::collection::vec(op, 1..max_len).prop_map(move |ops| {
        let mut t = origin;
        ops.into_iter()
            .enumerate()
            .map(|(i, (kind, id, bid, price, size, gap))| {
                t += gap;
                let action = match kind {
                    0..=5 => Action::Submit,
                    6..=7 => Action::Execute,
                    _ => Action::Cancel,
                };
                let side = if bid { Side::Bid } else { Side::Ask };
                // bids sit low and asks high unless the draw says otherwise
                let price = match (side, price % 3) {
                    (_, 0) => price,
                    (Side::Bid, _) => price - 5,
                    (Side::Ask, _) => price + 5,
                };
                LobEvent::new(t, i as u64, &format!("o{id}"), side, action, price, size)
            })
            .collect()
    })
}

/// Drops the submits the naive book rejects for crossing, keeping unknown-id
/// events (replays skip those) so the stream can be replayed strictly.
pub fn uncrossed(events: Vec<LobEvent>) -> Vec<LobEvent> {
    let mut book = NaiveBook::default();
    let mut out = Vec::with_capacity(events.len());
    for mut e in events {
        let known = book.orders.iter().any(|o| o.id == e.order_id.as_str());
        if book.apply(&e) || (e.action != Action::Submit && !known) {
            e.seq = out.len() as u64;
            out.push(e);
        }
    }
    out
}
