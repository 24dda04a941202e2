//! Synthetic trading days for tests, examples and desk-scale experiments.
//!
//! Background flow is a marked Poisson process: submissions at geometric
//! price offsets behind the best quote (occasionally improving inside the
//! spread), per-order exponential cancellation clocks, a few small market
//! orders, and in-place revisions. Background flow never widens the spread
//! past `equilibrium_band`.
//!
//! Liquidity shocks arrive at `shock_rate` per second and self-cluster. A
//! shock is either a market-order sweep or a cancellation burst that clears
//! the top levels of one side. While the spread sits above the band,
//! replenishing limit orders arrive inside the spread at a rate that grows
//! with the number of shocks seen in the last second, each closing a random
//! number of ticks. Wider gaps therefore take longer to close, and clustered
//! shocks close faster.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};

use crate::book::{Action, BookState, LobEvent, Micros, OrderId, Side, Ticks};
use crate::error::{Error, Result};
use crate::ingest::{DayLog, DEFAULT_SESSION_END, DEFAULT_SESSION_START};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub date: String,
    /// Approximate number of events in the day.
    pub event_count: usize,
    pub session_start: Micros,
    pub session_end: Micros,
    /// Relative weight of background submissions.
    pub submit_intensity: f64,
    /// Relative weight of background cancellations.
    pub cancel_intensity: f64,
    /// Target share of execution events in the day.
    pub execution_fraction: f64,
    /// Chance a background submit improves the quote when the spread allows.
    pub improve_prob: f64,
    /// Chance a background submit re-uses a resting order id.
    pub revision_prob: f64,
    /// Success probability of the geometric offset behind the best quote.
    pub depth_decay: f64,
    /// Stationary number of resting orders per side.
    pub target_depth: usize,
    /// Widest spread reachable by background flow, in ticks.
    pub equilibrium_band: Ticks,
    /// Shocks per second. Zero disables shocks.
    pub shock_rate: f64,
    /// Chance that a shock triggers a follow-up shock.
    pub shock_cluster_prob: f64,
    pub shock_cluster_delay_ms: f64,
    /// Success probability of the geometric number of extra levels a shock clears.
    pub shock_level_decay: f64,
    /// Replenishing arrivals per second while the spread is above the band.
    pub recovery_rate: f64,
    /// Multiplier per shock seen in the last second.
    pub recovery_clustering: f64,
    /// Success probability of the geometric number of extra ticks a
    /// replenishing order closes.
    pub recovery_step_decay: f64,
    pub initial_bid: Ticks,
    /// Currency per tick. Informational only; prices stay in ticks.
    pub tick_size: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            date: "synthetic".to_string(),
            event_count: 200_000,
            session_start: DEFAULT_SESSION_START,
            session_end: DEFAULT_SESSION_END,
            submit_intensity: 1.0,
            cancel_intensity: 1.0,
            execution_fraction: 0.03,
            improve_prob: 0.05,
            revision_prob: 0.1,
            depth_decay: 0.25,
            target_depth: 40,
            equilibrium_band: 1,
            shock_rate: 0.025,
            shock_cluster_prob: 0.35,
            shock_cluster_delay_ms: 250.0,
            shock_level_decay: 0.55,
            recovery_rate: 12.0,
            recovery_clustering: 1.5,
            recovery_step_decay: 0.6,
            initial_bid: 2700,
            tick_size: 0.01,
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(seed: u64) -> Self {
        SyntheticConfig {
            seed,
            date: format!("synth-{seed:04}"),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleConfig(m.to_string()));
        if !(self.execution_fraction > 0.0 && self.execution_fraction < 1.0) {
            return bad("execution fraction must lie in (0, 1)");
        }
        if self.session_end <= self.session_start {
            return bad("empty session");
        }
        for (name, v) in [
            ("submit_intensity", self.submit_intensity),
            ("cancel_intensity", self.cancel_intensity),
            ("recovery_rate", self.recovery_rate),
            ("tick_size", self.tick_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InfeasibleConfig(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("depth_decay", self.depth_decay),
            ("shock_level_decay", self.shock_level_decay),
            ("recovery_step_decay", self.recovery_step_decay),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InfeasibleConfig(format!("{name} must lie in (0, 1]")));
            }
        }
        for (name, v) in [
            ("improve_prob", self.improve_prob),
            ("revision_prob", self.revision_prob),
            ("shock_cluster_prob", self.shock_cluster_prob),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InfeasibleConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.shock_rate >= 0.0) || !(self.recovery_clustering >= 0.0) {
            return bad("shock rate and recovery clustering must be non-negative");
        }
        if self.shock_cluster_delay_ms <= 0.0 {
            return bad("cluster delay must be positive");
        }
        if self.equilibrium_band < 1 || self.target_depth < 2 || self.event_count == 0 {
            return bad("band, depth and event count must be positive");
        }
        if self.initial_bid <= 64 {
            return bad("initial bid too close to zero");
        }
        Ok(())
    }
}

/// Generates one trading day. A pure function of the config.
pub fn generate_synthetic_day(cfg: &SyntheticConfig) -> Result<DayLog> {
    cfg.validate()?;
    Generator::new(cfg).run()
}

const SHOCK_WINDOW_US: Micros = 1_000_000;
/// Orders removed by one shock, measured at the default depth profile.
const EVENTS_PER_SHOCK: f64 = 12.0;

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    rng: ChaCha8Rng,
    book: BookState,
    events: Vec<LobEvent>,
    live: Vec<OrderId>,
    live_pos: HashMap<OrderId, usize>,
    next_id: u64,
    recent_shocks: VecDeque<Micros>,
    pending_shocks: Vec<f64>,
    offset: Geometric,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a SyntheticConfig) -> Self {
        Generator {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            book: BookState::new(),
            events: Vec::with_capacity(cfg.event_count + cfg.event_count / 8),
            live: Vec::new(),
            live_pos: HashMap::new(),
            next_id: 0,
            recent_shocks: VecDeque::new(),
            pending_shocks: Vec::new(),
            offset: Geometric::new(cfg.depth_decay).expect("validated"),
        }
    }

    fn run(mut self) -> Result<DayLog> {
        let cfg = self.cfg;
        let start = cfg.session_start as f64;
        let end = cfg.session_end as f64;
        let secs = (end - start) / 1e6;

        let expected_shocks = cfg.shock_rate * secs / (1.0 - cfg.shock_cluster_prob);
        let shock_events = expected_shocks * EVENTS_PER_SHOCK;
        let background = (cfg.event_count as f64 - shock_events).max(cfg.event_count as f64 * 0.5) / secs;
        // half the shocks are sweeps, and every swept order is one execution
        let sweep_fills = 0.5 * shock_events;
        let exec_rate = ((cfg.execution_fraction * cfg.event_count as f64 - sweep_fills) / secs)
            .max(0.1 * cfg.execution_fraction * background);
        let shock_removals = shock_events / secs;
        // stationary balance: new orders = cancels + full fills + shock removals
        let submit_rate = (background + shock_removals - 0.5 * exec_rate) / (2.0 - cfg.revision_prob);
        let cancels = (submit_rate * (1.0 - cfg.revision_prob) - shock_removals - 0.5 * exec_rate)
            .max(0.1 * submit_rate);
        let cancel_hazard = cancels / (2.0 * cfg.target_depth as f64);
        let cancel_scale = cfg.cancel_intensity / cfg.submit_intensity;

        self.seed_book(cfg.session_start);

        let mut t = start;
        let mut next_shock = self.draw_shock_gap(t);
        loop {
            let spread_open = self.spread_above_band();
            let recovery = if spread_open {
                let now = t as Micros;
                while self.recent_shocks.front().is_some_and(|&s| s < now - SHOCK_WINDOW_US) {
                    self.recent_shocks.pop_front();
                }
                cfg.recovery_rate * (1.0 + cfg.recovery_clustering * self.recent_shocks.len() as f64)
            } else {
                0.0
            };
            let cancel_rate = cancel_hazard * cancel_scale.min(4.0).max(0.25) * self.live.len() as f64;
            let total = submit_rate + cancel_rate + exec_rate + recovery;
            let dt = Exp::new(total).expect("positive rate").sample(&mut self.rng) * 1e6;

            let follow_up = self
                .pending_shocks
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let shock_at = next_shock.min(follow_up);
            if shock_at <= t + dt {
                if shock_at >= end {
                    break;
                }
                t = shock_at;
                if shock_at == next_shock {
                    next_shock = self.draw_shock_gap(t);
                } else {
                    self.pending_shocks.retain(|&s| s != shock_at);
                }
                self.shock(t);
                continue;
            }
            t += dt;
            if t >= end {
                break;
            }
            let ts = t as Micros / 1000 * 1000;
            let u = self.rng.random::<f64>() * total;
            if u < recovery {
                self.replenish(ts);
            } else if u < recovery + submit_rate {
                self.background_submit(ts);
            } else if u < recovery + submit_rate + cancel_rate {
                self.background_cancel(ts);
            } else {
                self.background_execute(ts);
            }
        }

        Ok(DayLog {
            date: cfg.date.clone(),
            events: self.events,
            session_start: cfg.session_start,
            session_end: cfg.session_end,
        })
    }

    fn draw_shock_gap(&mut self, t: f64) -> f64 {
        if self.cfg.shock_rate > 0.0 {
            t + Exp::new(self.cfg.shock_rate).expect("positive").sample(&mut self.rng) * 1e6
        } else {
            f64::INFINITY
        }
    }

    fn fresh_id(&mut self) -> OrderId {
        self.next_id += 1;
        OrderId::new(&format!("O{}", self.next_id))
    }

    fn order_size(&mut self) -> u64 {
        let g = Geometric::new(0.3).expect("valid");
        50 * (1 + g.sample(&mut self.rng))
    }

    fn push(&mut self, ts: Micros, id: OrderId, side: Side, action: Action, price: Ticks, size: u64) {
        let e = LobEvent {
            timestamp: ts,
            seq: self.events.len() as u64,
            order_id: id.clone(),
            side,
            action,
            price,
            size,
        };
        self.book
            .apply_event(&e)
            .expect("generator only emits valid events");
        match action {
            Action::Submit => {
                if !self.live_pos.contains_key(&id) {
                    self.live_pos.insert(id.clone(), self.live.len());
                    self.live.push(id);
                }
            }
            Action::Execute | Action::Cancel => {
                if self.book.locate(&id).is_none() {
                    self.forget(&id);
                }
            }
        }
        self.events.push(e);
    }

    fn forget(&mut self, id: &OrderId) {
        if let Some(pos) = self.live_pos.remove(id) {
            self.live.swap_remove(pos);
            if let Some(moved) = self.live.get(pos) {
                self.live_pos.insert(moved.clone(), pos);
            }
        }
    }

    fn seed_book(&mut self, ts: Micros) {
        let bid = self.cfg.initial_bid;
        let ask = bid + self.cfg.equilibrium_band.min(2);
        for i in 0..self.cfg.target_depth {
            for side in [Side::Bid, Side::Ask] {
                let off = if i < 2 { 0 } else { self.offset.sample(&mut self.rng) as Ticks + 1 };
                let price = match side {
                    Side::Bid => bid - off.min(bid - 1),
                    Side::Ask => ask + off,
                };
                let id = self.fresh_id();
                let size = self.order_size();
                self.push(ts, id, side, Action::Submit, price, size);
            }
        }
    }

    fn spread_above_band(&self) -> bool {
        self.book.spread().is_none_or(|s| s > self.cfg.equilibrium_band)
    }

    /// Spread after the best level of `side` disappears, if the book stays two-sided.
    fn spread_without_best(&self, side: Side) -> Option<Ticks> {
        let other = self.book.best(side.opposite())?;
        let next = self.book.level_price(side, 2)?;
        Some((other - next).abs())
    }

    /// Whether removing this order keeps background flow inside the band.
    fn removable(&self, id: &OrderId) -> bool {
        let Some((side, price)) = self.book.locate(id) else {
            return false;
        };
        if Some(price) != self.book.best(side) {
            return true;
        }
        let level_len = self.book.iter_levels(side).next().map_or(0, |(_, q)| q.len());
        if level_len > 1 {
            return true;
        }
        if self.spread_above_band() {
            return false;
        }
        self.spread_without_best(side)
            .is_some_and(|s| s <= self.cfg.equilibrium_band)
    }

    fn passive_price(&mut self, side: Side) -> Ticks {
        let band = self.cfg.equilibrium_band;
        let improve = self.rng.random::<f64>() < self.cfg.improve_prob;
        match (self.book.best(side), self.book.best(side.opposite()), self.book.spread()) {
            (Some(best), Some(_), Some(s)) if improve && s > 1 && s <= band => match side {
                Side::Bid => best + 1,
                Side::Ask => best - 1,
            },
            (Some(best), _, _) => {
                let off = self.offset.sample(&mut self.rng) as Ticks;
                match side {
                    Side::Bid => (best - off).max(1),
                    Side::Ask => best + off,
                }
            }
            (None, Some(other), _) => {
                let off = band + self.offset.sample(&mut self.rng) as Ticks;
                match side {
                    Side::Bid => (other - off).max(1),
                    Side::Ask => other + off,
                }
            }
            (None, None, _) => self.cfg.initial_bid,
        }
    }

    fn random_side(&mut self) -> Side {
        if self.rng.random::<bool>() {
            Side::Bid
        } else {
            Side::Ask
        }
    }

    fn background_submit(&mut self, ts: Micros) {
        let side = self.random_side();
        let revise = !self.live.is_empty() && self.rng.random::<f64>() < self.cfg.revision_prob;
        if revise {
            let id = self.live[self.rng.random_range(0..self.live.len())].clone();
            let (side, old_price) = self.book.locate(&id).expect("live order rests");
            let mut price = self.passive_price(side);
            if price != old_price && !self.removable(&id) {
                price = old_price;
            }
            let size = self.order_size();
            self.push(ts, id, side, Action::Submit, price, size);
            return;
        }
        let price = self.passive_price(side);
        let id = self.fresh_id();
        let size = self.order_size();
        self.push(ts, id, side, Action::Submit, price, size);
    }

    fn background_cancel(&mut self, ts: Micros) {
        for _ in 0..4 {
            if self.live.is_empty() {
                break;
            }
            let id = self.live[self.rng.random_range(0..self.live.len())].clone();
            if self.removable(&id) {
                let (side, price) = self.book.locate(&id).expect("live");
                let size = self.book.order(&id).expect("live").remaining_size;
                self.push(ts, id, side, Action::Cancel, price, size);
                return;
            }
        }
        self.background_submit(ts);
    }

    fn background_execute(&mut self, ts: Micros) {
        let aggressor = self.random_side();
        let passive = aggressor.opposite();
        let Some((price, front)) = self
            .book
            .iter_levels(passive)
            .next()
            .map(|(p, q)| (p, q[0].clone()))
        else {
            return self.background_submit(ts);
        };
        let want = self.order_size();
        let mut size = want.min(front.remaining_size);
        if size == front.remaining_size && !self.removable(&front.order_id) {
            if front.remaining_size == 1 {
                return self.background_submit(ts);
            }
            size = front.remaining_size - 1;
        }
        self.push(ts, front.order_id, passive, Action::Execute, price, size);
    }

    fn shock(&mut self, t: f64) {
        let ts = t as Micros / 1000 * 1000;
        if self.rng.random::<f64>() < self.cfg.shock_cluster_prob {
            let delay = Exp::new(1.0 / self.cfg.shock_cluster_delay_ms)
                .expect("positive")
                .sample(&mut self.rng);
            self.pending_shocks.push(t + delay * 1000.0);
        }
        let side = self.random_side();
        let available = self.book.level_count(side);
        if available < 2 || self.book.spread().is_none() {
            return;
        }
        let extra = Geometric::new(self.cfg.shock_level_decay)
            .expect("validated")
            .sample(&mut self.rng) as usize;
        let levels = (1 + extra).min(available - 1);
        self.recent_shocks.push_back(ts);

        let cleared: Vec<(Ticks, Vec<(OrderId, u64)>)> = self
            .book
            .iter_levels(side)
            .take(levels)
            .map(|(p, q)| (p, q.iter().map(|o| (o.order_id.clone(), o.remaining_size)).collect()))
            .collect();
        if self.rng.random::<bool>() {
            // market order sweep, consumed in price-time priority
            for (price, orders) in cleared {
                for (id, size) in orders {
                    self.push(ts, id, side, Action::Execute, price, size);
                }
            }
        } else {
            // cancellation burst, deepest cleared level first
            for (price, orders) in cleared.into_iter().rev() {
                for (id, size) in orders {
                    self.push(ts, id, side, Action::Cancel, price, size);
                }
            }
        }
    }

    fn replenish(&mut self, ts: Micros) {
        let side = self.random_side();
        let step = 1 + Geometric::new(self.cfg.recovery_step_decay)
            .expect("validated")
            .sample(&mut self.rng) as Ticks;
        let band = self.cfg.equilibrium_band;
        let price = match (self.book.best(side), self.book.best(side.opposite())) {
            (Some(best), Some(other)) => {
                let gap = (other - best).abs();
                let step = step.min(gap - 1);
                if step <= 0 {
                    return self.background_submit(ts);
                }
                match side {
                    Side::Bid => best + step,
                    Side::Ask => best - step,
                }
            }
            (None, Some(other)) => match side {
                Side::Bid => (other - band - step).max(1),
                Side::Ask => other + band + step,
            },
            _ => return self.background_submit(ts),
        };
        let id = self.fresh_id();
        let size = self.order_size();
        self.push(ts, id, side, Action::Submit, price, size);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_log;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            event_count: 20_000,
            session_end: DEFAULT_SESSION_START + 3_600_000_000,
            ..SyntheticConfig::with_seed(seed)
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_day(&small(3)).unwrap();
        let b = generate_synthetic_day(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_day(&small(4)).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn generated_days_validate_cleanly() {
        let day = generate_synthetic_day(&small(11)).unwrap();
        let rep = validate_log(&day);
        assert_eq!(rep.unknown_ids, 0);
        assert_eq!(rep.crossed_incidents, 0);
        assert!(day.events.windows(2).all(|w| (w[0].timestamp, w[0].seq) < (w[1].timestamp, w[1].seq)));
        assert!(day.events.iter().all(|e| e.timestamp % 1000 == 0));
    }

    #[test]
    fn rejects_infeasible_configs() {
        let mut cfg = small(0);
        cfg.execution_fraction = 1.0;
        assert!(matches!(generate_synthetic_day(&cfg), Err(Error::InfeasibleConfig(_))));
        cfg.execution_fraction = 0.03;
        cfg.recovery_rate = 0.0;
        assert!(matches!(generate_synthetic_day(&cfg), Err(Error::InfeasibleConfig(_))));
    }

    #[test]
    fn no_shocks_keeps_spread_in_band() {
        let mut cfg = small(5);
        cfg.shock_rate = 0.0;
        let day = generate_synthetic_day(&cfg).unwrap();
        let mut worst = 0;
        // the opening book is built at the session start
        day.replay(crate::ingest::CrossPolicy::Fail, |_, e, b| {
            if e.timestamp > cfg.session_start {
                worst = worst.max(b.spread().unwrap_or(i64::MAX));
            }
        })
        .unwrap();
        assert!(worst <= cfg.equilibrium_band, "spread reached {worst}");
    }
}
