//! Exact price-time priority limit order book rebuilt from a normalized
//! submit / execute / cancel event stream.
//!
//! Prices are integer ticks and times are integer microseconds. Each side is
//! a `BTreeMap` of price levels; each level holds its resting orders in
//! arrival order. A level exists only while it holds at least one order.
//!
//! A submit whose order id has been seen before is a revision: the order is
//! re-queued at the back of its (possibly new) price level, its revision
//! counter is bumped, and its original submission time is kept so that age
//! measures survive revisions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microseconds since midnight.
pub type Micros = i64;
/// Integer price in ticks.
pub type Ticks = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Submit,
    Execute,
    Cancel,
}

/// Opaque order identifier. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderId(Arc<str>);

impl OrderId {
    pub fn new(id: &str) -> Self {
        OrderId(Arc::from(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for OrderId {
    fn from(s: &str) -> Self {
        OrderId::new(s)
    }
}

/// One time-stamped book event. `(timestamp, seq)` orders a day's stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LobEvent {
    pub timestamp: Micros,
    pub seq: u64,
    pub order_id: OrderId,
    pub side: Side,
    pub action: Action,
    pub price: Ticks,
    pub size: u64,
}

impl LobEvent {
    pub fn submit(timestamp: Micros, seq: u64, id: &str, side: Side, price: Ticks, size: u64) -> Self {
        Self::new(timestamp, seq, id, side, Action::Submit, price, size)
    }

    pub fn execute(timestamp: Micros, seq: u64, id: &str, side: Side, price: Ticks, size: u64) -> Self {
        Self::new(timestamp, seq, id, side, Action::Execute, price, size)
    }

    pub fn cancel(timestamp: Micros, seq: u64, id: &str, side: Side, price: Ticks, size: u64) -> Self {
        Self::new(timestamp, seq, id, side, Action::Cancel, price, size)
    }

    pub fn new(
        timestamp: Micros,
        seq: u64,
        id: &str,
        side: Side,
        action: Action,
        price: Ticks,
        size: u64,
    ) -> Self {
        LobEvent {
            timestamp,
            seq,
            order_id: OrderId::new(id),
            side,
            action,
            price,
            size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestingOrder {
    pub order_id: OrderId,
    pub price: Ticks,
    pub remaining_size: u64,
    pub submit_time: Micros,
    pub last_revision_time: Micros,
    pub revision_count: u32,
}

/// Aggregates over the top levels of one side.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthStats {
    pub order_count: u64,
    pub total_volume: u64,
    pub modified_count: u64,
    pub mean_age_ms: f64,
}

/// Mid price in half ticks, so that it is always exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct HalfTicks(pub i64);

impl HalfTicks {
    pub fn as_ticks(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

/// A fill a marketable order would receive against the resting book.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fill {
    pub order_id: OrderId,
    pub side: Side,
    pub price: Ticks,
    pub size: u64,
}

#[derive(Clone, Debug)]
struct Known {
    submit_time: Micros,
    revision_count: u32,
    resting: Option<(Side, Ticks)>,
}

#[derive(Clone, Debug, Default)]
pub struct BookState {
    bids: BTreeMap<Ticks, Vec<RestingOrder>>,
    asks: BTreeMap<Ticks, Vec<RestingOrder>>,
    known: HashMap<OrderId, Known>,
    current_time: Micros,
}

impl BookState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current_time(&self) -> Micros {
        self.current_time
    }

    fn levels(&self, side: Side) -> &BTreeMap<Ticks, Vec<RestingOrder>> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn levels_mut(&mut self, side: Side) -> &mut BTreeMap<Ticks, Vec<RestingOrder>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Occupied levels of `side` from the top of the book outwards.
    pub fn iter_levels(&self, side: Side) -> Box<dyn Iterator<Item = (Ticks, &[RestingOrder])> + '_> {
        match side {
            Side::Bid => Box::new(self.bids.iter().rev().map(|(p, q)| (*p, q.as_slice()))),
            Side::Ask => Box::new(self.asks.iter().map(|(p, q)| (*p, q.as_slice()))),
        }
    }

    pub fn level_count(&self, side: Side) -> usize {
        self.levels(side).len()
    }

    pub fn best(&self, side: Side) -> Option<Ticks> {
        match side {
            Side::Bid => self.bids.keys().next_back().copied(),
            Side::Ask => self.asks.keys().next().copied(),
        }
    }

    /// Price of the `i`-th occupied level counted from the top (1-based).
    pub fn level_price(&self, side: Side, i: usize) -> Option<Ticks> {
        if i == 0 {
            return None;
        }
        self.iter_levels(side).nth(i - 1).map(|(p, _)| p)
    }

    pub fn spread(&self) -> Option<Ticks> {
        Some(self.best(Side::Ask)? - self.best(Side::Bid)?)
    }

    pub fn mid_price(&self) -> Option<HalfTicks> {
        Some(HalfTicks(self.best(Side::Ask)? + self.best(Side::Bid)?))
    }

    pub fn order(&self, id: &OrderId) -> Option<&RestingOrder> {
        let (side, price) = self.known.get(id)?.resting?;
        self.levels(side).get(&price)?.iter().find(|o| &o.order_id == id)
    }

    /// Side and price of a resting order.
    pub fn locate(&self, id: &OrderId) -> Option<(Side, Ticks)> {
        self.known.get(id)?.resting
    }

    pub fn resting_count(&self) -> usize {
        self.bids.values().chain(self.asks.values()).map(Vec::len).sum()
    }

    /// Order count, share volume, revised-order count and mean age over the
    /// top `k` occupied levels of `side`.
    pub fn depth_stats(&self, side: Side, k: usize) -> DepthStats {
        let mut stats = DepthStats::default();
        let mut age_sum: i64 = 0;
        for (_, orders) in self.iter_levels(side).take(k) {
            for o in orders {
                stats.order_count += 1;
                stats.total_volume += o.remaining_size;
                if o.revision_count > 0 {
                    stats.modified_count += 1;
                }
                age_sum += self.current_time - o.submit_time;
            }
        }
        if stats.order_count > 0 {
            stats.mean_age_ms = age_sum as f64 / stats.order_count as f64 / 1000.0;
        }
        stats
    }

    /// Fills a marketable order of `size` shares on the `aggressor` side would
    /// receive, walking the opposite side in price-time priority. The book is
    /// not modified.
    pub fn sweep(&self, aggressor: Side, size: u64) -> Vec<Fill> {
        let mut left = size;
        let mut fills = Vec::new();
        let passive = aggressor.opposite();
        'outer: for (price, orders) in self.iter_levels(passive) {
            for o in orders {
                if left == 0 {
                    break 'outer;
                }
                let take = left.min(o.remaining_size);
                fills.push(Fill {
                    order_id: o.order_id.clone(),
                    side: passive,
                    price,
                    size: take,
                });
                left -= take;
            }
        }
        fills
    }

    /// Applies one event.
    ///
    /// On `Err` the book is unchanged apart from its clock. `UnknownOrderId`
    /// is expected on real feeds (orders born before the window) and callers
    /// usually count and skip it. `CrossedBookAfterEvent` means the stream is
    /// corrupt.
    pub fn apply_event(&mut self, e: &LobEvent) -> Result<()> {
        self.current_time = e.timestamp;
        match e.action {
            Action::Submit => self.submit(e),
            Action::Execute => self.reduce(e, e.size),
            Action::Cancel => self.reduce(e, u64::MAX),
        }
    }

    fn submit(&mut self, e: &LobEvent) -> Result<()> {
        if e.size == 0 || e.price <= 0 {
            return Err(Error::InvalidData(format!(
                "submit {} with price {} size {}",
                e.order_id, e.price, e.size
            )));
        }
        let crossing = match e.side {
            Side::Bid => self.best(Side::Ask).filter(|&a| e.price >= a),
            Side::Ask => self.best(Side::Bid).filter(|&b| e.price <= b),
        };
        if let Some(other) = crossing {
            let (bid, ask) = match e.side {
                Side::Bid => (e.price, other),
                Side::Ask => (other, e.price),
            };
            return Err(Error::CrossedBookAfterEvent {
                timestamp: e.timestamp,
                seq: e.seq,
                bid,
                ask,
            });
        }

        let (submit_time, revision_count, last_revision_time) = match self.known.get(&e.order_id) {
            Some(k) => (k.submit_time, k.revision_count + 1, e.timestamp),
            None => (e.timestamp, 0, e.timestamp),
        };
        if let Some((side, price)) = self.known.get(&e.order_id).and_then(|k| k.resting) {
            self.remove_resting(side, price, &e.order_id);
        }
        self.known.insert(
            e.order_id.clone(),
            Known {
                submit_time,
                revision_count,
                resting: Some((e.side, e.price)),
            },
        );
        self.levels_mut(e.side)
            .entry(e.price)
            .or_default()
            .push(RestingOrder {
                order_id: e.order_id.clone(),
                price: e.price,
                remaining_size: e.size,
                submit_time,
                last_revision_time,
                revision_count,
            });
        Ok(())
    }

    fn reduce(&mut self, e: &LobEvent, amount: u64) -> Result<()> {
        let Some((side, price)) = self.known.get(&e.order_id).and_then(|k| k.resting) else {
            return Err(Error::UnknownOrderId(e.order_id.to_string()));
        };
        let level = self
            .levels_mut(side)
            .get_mut(&price)
            .expect("indexed order has a level");
        let pos = level
            .iter()
            .position(|o| o.order_id == e.order_id)
            .expect("indexed order is queued");
        let order = &mut level[pos];
        if amount < order.remaining_size {
            order.remaining_size -= amount;
        } else {
            level.remove(pos);
            if level.is_empty() {
                self.levels_mut(side).remove(&price);
            }
            if let Some(k) = self.known.get_mut(&e.order_id) {
                k.resting = None;
            }
        }
        Ok(())
    }

    fn remove_resting(&mut self, side: Side, price: Ticks, id: &OrderId) {
        let levels = self.levels_mut(side);
        if let Some(level) = levels.get_mut(&price) {
            level.retain(|o| &o.order_id != id);
            if level.is_empty() {
                levels.remove(&price);
            }
        }
    }

    /// Checks the structural invariants: uncrossed, no empty levels, positive
    /// sizes, and every order indexed where it rests.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if let (Some(b), Some(a)) = (self.best(Side::Bid), self.best(Side::Ask)) {
            if b >= a {
                return Err(format!("crossed: bid {b} ask {a}"));
            }
        }
        for side in [Side::Bid, Side::Ask] {
            for (price, orders) in self.iter_levels(side) {
                if orders.is_empty() {
                    return Err(format!("empty level at {price}"));
                }
                for o in orders {
                    if o.remaining_size == 0 {
                        return Err(format!("zero size order {}", o.order_id));
                    }
                    if o.last_revision_time < o.submit_time {
                        return Err(format!("revision before submit for {}", o.order_id));
                    }
                    if self.locate(&o.order_id) != Some((side, price)) {
                        return Err(format!("index mismatch for {}", o.order_id));
                    }
                }
            }
        }
        Ok(())
    }
}

impl PartialEq for BookState {
    /// Two books are equal when their visible state matches.
    fn eq(&self, other: &Self) -> bool {
        self.bids == other.bids && self.asks == other.asks && self.current_time == other.current_time
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The example book: asks 70 and 100 at 2702, 150 at 2704, 120 at 2705;
    /// bids at 2700 and below.
    fn example_book() -> BookState {
        let mut b = BookState::new();
        let evs = [
            LobEvent::submit(0, 0, "b1", Side::Bid, 2700, 200),
            LobEvent::submit(0, 1, "b2", Side::Bid, 2699, 300),
            LobEvent::submit(0, 2, "a1", Side::Ask, 2702, 70),
            LobEvent::submit(0, 3, "a2", Side::Ask, 2702, 100),
            LobEvent::submit(0, 4, "a3", Side::Ask, 2704, 150),
            LobEvent::submit(0, 5, "a4", Side::Ask, 2705, 120),
        ];
        for e in &evs {
            b.apply_event(e).unwrap();
        }
        b
    }

    #[test]
    fn market_buy_walks_the_ask_side() {
        let mut book = example_book();
        let fills = book.sweep(Side::Bid, 200);
        let got: Vec<_> = fills.iter().map(|f| (f.size, f.price)).collect();
        assert_eq!(got, vec![(70, 2702), (100, 2702), (30, 2704)]);
        for (i, f) in fills.iter().enumerate() {
            book.apply_event(&LobEvent::execute(1, 10 + i as u64, f.order_id.as_str(), f.side, f.price, f.size))
                .unwrap();
        }
        assert_eq!(book.best(Side::Ask), Some(2704));
        assert_eq!(book.order(&"a3".into()).unwrap().remaining_size, 120);
        book.check_invariants().unwrap();
    }

    #[test]
    fn sell_limit_queues_behind_resting_order() {
        let mut book = example_book();
        book.apply_event(&LobEvent::submit(2, 20, "new", Side::Ask, 2705, 300))
            .unwrap();
        let (_, queue) = book.iter_levels(Side::Ask).find(|(p, _)| *p == 2705).unwrap();
        let ids: Vec<_> = queue.iter().map(|o| o.order_id.as_str()).collect();
        assert_eq!(ids, vec!["a4", "new"]);
    }

    #[test]
    fn cancelling_sole_order_removes_level() {
        let mut book = example_book();
        book.apply_event(&LobEvent::cancel(3, 30, "b1", Side::Bid, 2700, 200))
            .unwrap();
        assert_eq!(book.best(Side::Bid), Some(2699));
        assert_eq!(book.level_count(Side::Bid), 1);
    }

    #[test]
    fn level_queries() {
        let book = example_book();
        assert_eq!(book.level_price(Side::Ask, 1), Some(2702));
        assert_eq!(book.level_price(Side::Ask, 3), Some(2705));
        assert_eq!(book.level_price(Side::Ask, 5), None);
        assert_eq!(BookState::new().level_price(Side::Bid, 1), None);
        assert_eq!(book.spread(), Some(2));
        assert_eq!(book.mid_price().unwrap().as_ticks(), 2701.0);
    }

    #[test]
    fn one_sided_and_tight_books() {
        let mut b = BookState::new();
        assert_eq!(b.spread(), None);
        assert_eq!(b.mid_price(), None);
        b.apply_event(&LobEvent::submit(0, 0, "x", Side::Bid, 100, 1)).unwrap();
        assert_eq!(b.spread(), None);
        b.apply_event(&LobEvent::submit(0, 1, "y", Side::Ask, 101, 1)).unwrap();
        assert_eq!(b.spread(), Some(1));
        assert_eq!(b.mid_price().unwrap().as_ticks(), 100.5);
    }

    #[test]
    fn crossing_submit_is_rejected_without_mutation() {
        let mut book = example_book();
        let before = book.clone();
        let err = book
            .apply_event(&LobEvent::submit(0, 9, "x", Side::Bid, 2702, 10))
            .unwrap_err();
        assert!(matches!(err, Error::CrossedBookAfterEvent { bid: 2702, ask: 2702, .. }));
        assert_eq!(book.bids, before.bids);
        assert_eq!(book.asks, before.asks);
    }

    #[test]
    fn unknown_ids_are_reported() {
        let mut book = example_book();
        let err = book
            .apply_event(&LobEvent::execute(0, 9, "ghost", Side::Ask, 2702, 10))
            .unwrap_err();
        assert!(matches!(err, Error::UnknownOrderId(id) if id == "ghost"));
    }

    #[test]
    fn resubmission_is_a_revision_that_keeps_age() {
        let mut b = BookState::new();
        b.apply_event(&LobEvent::submit(1_000, 0, "o", Side::Bid, 50, 10)).unwrap();
        b.apply_event(&LobEvent::submit(1_500, 1, "p", Side::Bid, 50, 10)).unwrap();
        b.apply_event(&LobEvent::submit(2_000, 2, "o", Side::Bid, 50, 5)).unwrap();
        let o = b.order(&"o".into()).unwrap();
        assert_eq!((o.submit_time, o.last_revision_time, o.revision_count), (1_000, 2_000, 1));
        assert_eq!(o.remaining_size, 5);
        // lost priority to p
        let ids: Vec<_> = b.iter_levels(Side::Bid).next().unwrap().1.iter().map(|o| o.order_id.as_str()).collect();
        assert_eq!(ids, vec!["p", "o"]);
        // cancel then resubmit also counts
        b.apply_event(&LobEvent::cancel(3_000, 3, "o", Side::Bid, 50, 5)).unwrap();
        b.apply_event(&LobEvent::submit(3_000, 4, "o", Side::Bid, 49, 5)).unwrap();
        let o = b.order(&"o".into()).unwrap();
        assert_eq!((o.submit_time, o.revision_count, o.price), (1_000, 2, 49));
        assert_eq!(b.depth_stats(Side::Bid, 5).modified_count, 1);
        b.check_invariants().unwrap();
    }

    #[test]
    fn depth_stats_examples() {
        let mut b = BookState::new();
        b.apply_event(&LobEvent::submit(0, 0, "a", Side::Ask, 10, 100)).unwrap();
        b.apply_event(&LobEvent::submit(2_000, 1, "b", Side::Ask, 10, 250)).unwrap();
        for (i, p) in [11, 11, 11].iter().enumerate() {
            b.apply_event(&LobEvent::submit(3_000, 2 + i as u64, &format!("c{i}"), Side::Ask, *p, 1))
                .unwrap();
        }
        let s = b.depth_stats(Side::Ask, 5);
        assert_eq!(s.order_count, 5);
        let s1 = b.depth_stats(Side::Ask, 1);
        assert_eq!(s1.total_volume, 350);
        // ages 3000us and 1000us at t=3000
        assert_eq!(s1.mean_age_ms, 2.0);
        assert_eq!(b.depth_stats(Side::Bid, 5), DepthStats::default());
    }
}
