//! The three decision points over the body buffer: which lane an entering
//! car goes to, which head leaves next, and which order the leaving car
//! realizes (substitution).

mod catalog;
mod pool;
mod strategy;

use std::collections::VecDeque;
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{CompiledCatalog, OrderIdx};
pub use pool::{OrderPool, Reservations};
pub use strategy::SubstitutionStrategy;

use crate::buffer::{BufferError, BufferGeometry, LaneBuffer};
use crate::constraints::{EmissionHistory, EmissionRecord, ViolationCounter, Weight};
use crate::domain::{CarBody, Day, Timestamp};
use crate::exec::Exec;
use crate::metrics::{lds_unchecked, run_lengths};
use pool::first_available;

/// Inter-departure time assumed for virtual sequences until two real emissions exist.
pub const DEFAULT_DEPARTURE_SECS: i64 = 60;
const RATE_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControllerError {
    #[error("no unassigned order is compatible with body type {body_type}")]
    NoCompatibleOrder { body_type: String },
    #[error("no eligible head in the buffer")]
    NoEligibleHead,
    #[error("no lane accepts an enqueue")]
    NoAvailableLane,
    #[error("decision computed at version {decided} but state is at {current}")]
    StaleDecision { decided: u64, current: u64 },
    #[error("car {0} is not in the buffer")]
    UnknownCar(String),
    #[error("order {0} is not in the catalog")]
    UnknownOrder(String),
    #[error("order {0} was already consumed")]
    OrderUnavailable(String),
    #[error("car {0} is not at the head of its lane")]
    CarNotAtHead(String),
    #[error("car {0} is already in the buffer")]
    DuplicateCar(String),
    #[error("body type {0} is not in the catalog")]
    UnknownBodyType(String),
    #[error("order {order} does not fit body type {body_type}")]
    BodyMismatch { order: String, body_type: String },
    #[error(transparent)]
    Buffer(#[from] BufferError),
}

impl ControllerError {
    /// Stable name of the variant, for clients that branch on it.
    pub fn code(&self) -> &'static str {
        match self {
            ControllerError::NoCompatibleOrder { .. } => "NoCompatibleOrder",
            ControllerError::NoEligibleHead => "NoEligibleHead",
            ControllerError::NoAvailableLane => "NoAvailableLane",
            ControllerError::StaleDecision { .. } => "StaleDecision",
            ControllerError::UnknownCar(_) => "UnknownCar",
            ControllerError::UnknownOrder(_) => "UnknownOrder",
            ControllerError::OrderUnavailable(_) => "OrderUnavailable",
            ControllerError::CarNotAtHead(_) => "CarNotAtHead",
            ControllerError::DuplicateCar(_) => "DuplicateCar",
            ControllerError::UnknownBodyType(_) => "UnknownBodyType",
            ControllerError::BodyMismatch { .. } => "BodyMismatch",
            ControllerError::Buffer(_) => "BufferError",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub strategy: SubstitutionStrategy,
    /// When off, each car keeps its planned order while that order is
    /// available; the filter chain only ranks heads and fills gaps.
    pub substitution: bool,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            strategy: SubstitutionStrategy::default(),
            substitution: true,
            exec: Exec::default(),
        }
    }
}

impl ControllerConfig {
    /// The k-sweep setting: `k = 0` disables substitution, otherwise `LastKEqual(k)`.
    pub fn last_k(k: usize) -> ControllerConfig {
        ControllerConfig {
            strategy: if k == 0 {
                SubstitutionStrategy::None
            } else {
                SubstitutionStrategy::LastKEqual(k)
            },
            substitution: k > 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BufferedCar {
    pub car: CarBody,
    body: u16,
    planned: Option<OrderIdx>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DequeueDecision {
    pub lane: usize,
    pub car_id: String,
    pub order_id: String,
    pub violation: Weight,
    pub version: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneEvaluation {
    pub lane: usize,
    pub violation: Weight,
    pub lds: u64,
    pub batches: u64,
    pub cars: u64,
}

impl LaneEvaluation {
    /// `LDS / ABS` of the virtual sequence, `0` when it is empty.
    pub fn lds_abs(&self) -> Ratio<u64> {
        if self.cars == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(self.lds * self.batches, self.cars)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnqueueDecision {
    pub lane: usize,
    pub evaluations: Vec<LaneEvaluation>,
    pub version: u64,
}

/// A car that left the buffer together with the order it realizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub car_id: String,
    pub order_id: String,
    pub lane: usize,
    pub left_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub version: u64,
    pub occupancy: usize,
    pub pool_size: usize,
    pub emitted: u64,
    pub clock: Timestamp,
    pub lanes: Vec<Vec<String>>,
    pub locked_lanes: Vec<usize>,
    pub recent_colors: Vec<String>,
    pub strategy: SubstitutionStrategy,
}

/// Read-only view the filter chain runs against: the real state or a
/// lookahead branch (cloned counter and recency, reservation overlay).
struct View<'a> {
    cat: &'a CompiledCatalog,
    pool: &'a OrderPool,
    res: &'a Reservations,
    counter: &'a ViolationCounter,
    recent: &'a [u16],
    config: &'a ControllerConfig,
    t: Timestamp,
}

struct Pick {
    lane: usize,
    order: OrderIdx,
    violation: Weight,
}

impl View<'_> {
    fn available(&self, idx: OrderIdx) -> bool {
        self.pool.contains(idx) && !self.res.contains(idx)
    }

    fn popularity(&self, body: u16, color: u16) -> usize {
        self.pool.color_count(body, color) - self.res.color_count(body, color)
    }

    fn violation(&self, idx: OrderIdx) -> Weight {
        self.counter.weight(self.cat.matched(idx), self.t)
    }

    /// The filter chain over every available order of one body type.
    fn best_for_body(&self, body: u16) -> Option<OrderIdx> {
        let bp = &self.pool.bodies[body as usize];
        let mut front: Vec<(Weight, Day, &pool::DueBucket)> = Vec::new();
        for (&sig, group) in &bp.groups {
            let Some((&due, bucket)) = group
                .by_due
                .iter()
                .find(|(_, b)| first_available(&b.all, self.res).is_some())
            else {
                continue;
            };
            let v = self.counter.weight(self.cat.sig(sig), self.t);
            front.push((v, due, bucket));
        }
        let v_min = front.iter().map(|f| f.0).min()?;
        front.retain(|f| f.0 == v_min);
        let due_min = front.iter().map(|f| f.1).min()?;
        front.retain(|f| f.1 == due_min);

        let has = |c: u16| {
            front
                .iter()
                .any(|f| first_available(&f.2.by_color[c as usize], self.res).is_some())
        };
        let kept: Option<Vec<u16>> = match self.config.strategy {
            SubstitutionStrategy::None => None,
            // only the recent colors can narrow these two; no full color scan
            SubstitutionStrategy::LastKEqual(k) => {
                let hit: Vec<u16> = self
                    .recent
                    .iter()
                    .take(k)
                    .copied()
                    .filter(|&c| has(c))
                    .collect();
                (!hit.is_empty()).then_some(hit)
            }
            SubstitutionStrategy::LastKRanked(k) => self
                .recent
                .iter()
                .take(k)
                .copied()
                .find(|&c| has(c))
                .map(|c| vec![c]),
            _ => {
                let present: Vec<u16> = (0..self.cat.color_count() as u16)
                    .filter(|&c| has(c))
                    .collect();
                Some(
                    self.config
                        .strategy
                        .retain_colors(&present, self.recent, |c| self.popularity(body, c)),
                )
            }
        };
        let best = match kept {
            None => front
                .iter()
                .filter_map(|f| first_available(&f.2.all, self.res))
                .min(),
            Some(colors) => front
                .iter()
                .flat_map(|f| {
                    colors
                        .iter()
                        .filter_map(|&c| first_available(&f.2.by_color[c as usize], self.res))
                })
                .min(),
        };
        best.map(|(_, idx)| idx)
    }

    /// The filter chain over an explicit candidate list.
    fn select_among(&self, cands: &[OrderIdx]) -> Option<OrderIdx> {
        let mut keyed: Vec<(Weight, Day, OrderIdx)> = cands
            .iter()
            .map(|&i| (self.violation(i), self.cat.meta(i).due, i))
            .collect();
        let v_min = keyed.iter().map(|k| k.0).min()?;
        keyed.retain(|k| k.0 == v_min);
        let due_min = keyed.iter().map(|k| k.1).min()?;
        keyed.retain(|k| k.1 == due_min);
        if self.config.strategy != SubstitutionStrategy::None {
            let mut present: Vec<u16> = keyed.iter().map(|k| self.cat.meta(k.2).color).collect();
            present.sort_unstable();
            present.dedup();
            let mut bodies: Vec<u16> = keyed.iter().map(|k| self.cat.meta(k.2).body).collect();
            bodies.sort_unstable();
            bodies.dedup();
            let kept = self
                .config
                .strategy
                .retain_colors(&present, self.recent, |c| {
                    bodies.iter().map(|&b| self.popularity(b, c)).sum()
                });
            keyed.retain(|k| kept.contains(&self.cat.meta(k.2).color));
        }
        keyed
            .into_iter()
            .min_by_key(|k| self.cat.meta(k.2).blend)
            .map(|k| k.2)
    }

    fn would_be(
        &self,
        car: &BufferedCar,
        cache: &mut [Option<Option<OrderIdx>>],
    ) -> Option<OrderIdx> {
        if !self.config.substitution {
            if let Some(p) = car.planned.filter(|&p| self.available(p)) {
                return Some(p);
            }
        }
        *cache[car.body as usize].get_or_insert_with(|| self.best_for_body(car.body))
    }

    /// Per-head would-be orders, the best of them by the same chain, and the
    /// longest-waiting head that can take it.
    fn choose<'c>(
        &self,
        heads: impl Iterator<Item = (usize, &'c Arc<BufferedCar>)>,
    ) -> Result<Pick, ControllerError> {
        let mut cache = vec![None; self.cat.body_count()];
        let mut winners: Vec<(usize, &BufferedCar, OrderIdx)> = Vec::new();
        let mut missing: Option<&BufferedCar> = None;
        for (lane, car) in heads {
            match self.would_be(car, &mut cache) {
                Some(o) => winners.push((lane, car, o)),
                None => {
                    missing.get_or_insert(car);
                }
            }
        }
        if winners.is_empty() {
            return Err(match missing {
                Some(car) => ControllerError::NoCompatibleOrder {
                    body_type: car.car.body_type.to_string(),
                },
                None => ControllerError::NoEligibleHead,
            });
        }
        let mut distinct: Vec<OrderIdx> = winners.iter().map(|w| w.2).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let best = if distinct.len() == 1 {
            distinct[0]
        } else {
            self.select_among(&distinct).expect("non-empty candidates")
        };
        let (lane, _, order) = winners
            .into_iter()
            .filter(|w| w.2 == best)
            .min_by_key(|w| (w.1.car.entered_at, w.0))
            .expect("best comes from a winner");
        Ok(Pick {
            lane,
            order,
            violation: self.violation(order),
        })
    }
}

fn move_to_front(recent: &mut Vec<u16>, color: u16) {
    if let Some(pos) = recent.iter().position(|&c| c == color) {
        recent.remove(pos);
    }
    recent.insert(0, color);
}

/// Controller state: body buffer, unassigned orders, emission history.
#[derive(Clone, Debug)]
pub struct ControllerState {
    catalog: Arc<CompiledCatalog>,
    config: ControllerConfig,
    buffer: LaneBuffer<Arc<BufferedCar>>,
    pool: OrderPool,
    history: EmissionHistory,
    recent: Vec<u16>,
    clock: Timestamp,
    departures: VecDeque<Timestamp>,
    version: u64,
}

impl ControllerState {
    pub fn new(
        catalog: Arc<CompiledCatalog>,
        geometry: BufferGeometry,
        config: ControllerConfig,
    ) -> Result<ControllerState, ControllerError> {
        Ok(ControllerState {
            buffer: geometry.build()?,
            pool: OrderPool::full(&catalog),
            history: EmissionHistory::new(Arc::clone(catalog.table())),
            recent: Vec::new(),
            clock: Timestamp(i64::MIN),
            departures: VecDeque::with_capacity(RATE_WINDOW + 1),
            version: 0,
            catalog,
            config,
        })
    }

    pub fn catalog(&self) -> &Arc<CompiledCatalog> {
        &self.catalog
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.config.exec = exec;
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn pool(&self) -> &OrderPool {
        &self.pool
    }

    pub fn history(&self) -> &EmissionHistory {
        &self.history
    }

    pub fn buffer(&self) -> &LaneBuffer<Arc<BufferedCar>> {
        &self.buffer
    }

    /// Distinct emitted colors, most recent first.
    pub fn recent_colors(&self) -> impl Iterator<Item = &crate::domain::ColorId> + '_ {
        self.recent.iter().map(|&c| self.catalog.color(c))
    }

    pub fn status(&self) -> StatusSnapshot {
        StatusSnapshot {
            version: self.version,
            occupancy: self.buffer.occupancy(),
            pool_size: self.pool.len(),
            emitted: self.history.emitted(),
            clock: if self.clock.0 == i64::MIN {
                Timestamp(0)
            } else {
                self.clock
            },
            lanes: self
                .buffer
                .lanes()
                .map(|l| l.iter().map(|c| c.car.car_id.clone()).collect())
                .collect(),
            locked_lanes: (0..self.buffer.lane_count())
                .filter(|&l| self.buffer.is_locked(l))
                .collect(),
            recent_colors: self.recent_colors().map(|c| c.to_string()).collect(),
            strategy: self.config.strategy,
        }
    }

    fn advance(&mut self, t: Timestamp) {
        if t > self.clock {
            self.clock = t;
        }
    }

    fn now(&self, t: Timestamp) -> Timestamp {
        t.max(self.clock)
    }

    fn view<'a>(&'a self, res: &'a Reservations, t: Timestamp) -> View<'a> {
        View {
            cat: &self.catalog,
            pool: &self.pool,
            res,
            counter: self.history.counter(),
            recent: &self.recent,
            config: &self.config,
            t,
        }
    }

    /// Mean inter-departure time over the last real emissions.
    pub fn departure_rate(&self) -> i64 {
        match (self.departures.front(), self.departures.back()) {
            (Some(first), Some(last)) if self.departures.len() >= 2 => {
                ((last.0 - first.0) / (self.departures.len() as i64 - 1)).max(1)
            }
            _ => DEFAULT_DEPARTURE_SECS,
        }
    }

    /// The order the filter chain would hand a car of `body_type` at `t`, without committing.
    pub fn propose_order(
        &self,
        body_type: &crate::domain::BodyType,
        t: Timestamp,
    ) -> Result<OrderIdx, ControllerError> {
        let body = self
            .catalog
            .body_index(body_type)
            .ok_or_else(|| ControllerError::UnknownBodyType(body_type.to_string()))?;
        let res = Reservations::none();
        self.view(&res, self.now(t))
            .best_for_body(body)
            .ok_or_else(|| ControllerError::NoCompatibleOrder {
                body_type: body_type.to_string(),
            })
    }

    /// Reference filter chain over an explicit candidate set (same rules as the indexed path).
    pub fn select_among(&self, candidates: &[OrderIdx], t: Timestamp) -> Option<OrderIdx> {
        let res = Reservations::none();
        self.view(&res, self.now(t)).select_among(candidates)
    }

    /// `v_o` of a catalog order at `t` against the current history.
    pub fn violation_of(&self, idx: OrderIdx, t: Timestamp) -> Weight {
        self.history
            .counter()
            .weight(self.catalog.matched(idx), self.now(t))
    }

    /// Picks the next car to leave and its order. `eligible` restricts the
    /// heads considered for this decision only.
    pub fn choose_dequeue(
        &self,
        t: Timestamp,
        eligible: Option<&[usize]>,
    ) -> Result<DequeueDecision, ControllerError> {
        let res = Reservations::none();
        let heads = self
            .buffer
            .head_iter()
            .filter(|(l, _)| eligible.is_none_or(|e| e.contains(l)));
        let pick = self.view(&res, self.now(t)).choose(heads)?;
        Ok(DequeueDecision {
            lane: pick.lane,
            car_id: self.buffer.lane(pick.lane)[0].car.car_id.clone(),
            order_id: self.catalog.order(pick.order).order_id.clone(),
            violation: pick.violation,
            version: self.version,
        })
    }

    /// Applies a decision returned by [`choose_dequeue`](Self::choose_dequeue).
    pub fn commit_emission(
        &mut self,
        decision: &DequeueDecision,
        t: Timestamp,
    ) -> Result<Emission, ControllerError> {
        if decision.version != self.version {
            return Err(ControllerError::StaleDecision {
                decided: decision.version,
                current: self.version,
            });
        }
        self.emit(&decision.car_id, &decision.order_id, t, true)
    }

    /// `choose_dequeue` followed by `commit_emission`.
    pub fn dequeue(
        &mut self,
        t: Timestamp,
        eligible: Option<&[usize]>,
    ) -> Result<(DequeueDecision, Emission), ControllerError> {
        let d = self.choose_dequeue(t, eligible)?;
        let e = self.commit_emission(&d, t)?;
        Ok((d, e))
    }

    /// Substitution for a car about to leave: the filter chain picks its order
    /// and the emission is committed.
    pub fn assign_order(
        &mut self,
        car_id: &str,
        t: Timestamp,
    ) -> Result<(DequeueDecision, Emission), ControllerError> {
        let (lane, car) = self.head_car(car_id)?;
        let order = if !self.config.substitution {
            car.planned.filter(|&p| self.pool.contains(p))
        } else {
            None
        };
        let order = match order {
            Some(o) => o,
            None => self.propose_order(&car.car.body_type, t)?,
        };
        let d = DequeueDecision {
            lane,
            car_id: car_id.to_string(),
            order_id: self.catalog.order(order).order_id.clone(),
            violation: self.violation_of(order, t),
            version: self.version,
        };
        let e = self.commit_emission(&d, t)?;
        Ok((d, e))
    }

    /// An emission reported by the plant, taken as-is.
    pub fn observe_emission(
        &mut self,
        car_id: &str,
        order_id: &str,
        t: Timestamp,
    ) -> Result<Emission, ControllerError> {
        self.emit(car_id, order_id, t, false)
    }

    fn head_car(&self, car_id: &str) -> Result<(usize, Arc<BufferedCar>), ControllerError> {
        let (lane, depth) = self
            .buffer
            .position(|c| c.car.car_id == car_id)
            .ok_or_else(|| ControllerError::UnknownCar(car_id.to_string()))?;
        if depth != 0 {
            return Err(ControllerError::CarNotAtHead(car_id.to_string()));
        }
        Ok((lane, Arc::clone(&self.buffer.lane(lane)[0])))
    }

    fn emit(
        &mut self,
        car_id: &str,
        order_id: &str,
        t: Timestamp,
        respect_block: bool,
    ) -> Result<Emission, ControllerError> {
        let (lane, car) = self.head_car(car_id)?;
        let idx = self
            .catalog
            .order_index(order_id)
            .ok_or_else(|| ControllerError::UnknownOrder(order_id.to_string()))?;
        if !self.pool.contains(idx) {
            return Err(ControllerError::OrderUnavailable(order_id.to_string()));
        }
        let meta = *self.catalog.meta(idx);
        if meta.body != car.body {
            return Err(ControllerError::BodyMismatch {
                order: order_id.to_string(),
                body_type: car.car.body_type.to_string(),
            });
        }
        if respect_block && self.buffer.is_blocked(lane) {
            return Err(BufferError::HeadBlocked { lane }.into());
        }
        let t = self.now(t);
        let was_blocked = self.buffer.is_blocked(lane);
        self.buffer.set_blocked(lane, false)?;
        self.buffer.dequeue(lane)?;
        self.buffer.set_blocked(lane, was_blocked)?;
        self.pool.remove(&self.catalog, idx);
        self.history.push(EmissionRecord {
            order_id: Arc::clone(self.catalog.order_id_arc(idx)),
            color: self.catalog.color(meta.color).clone(),
            blend_number: meta.blend,
            matched: Arc::clone(self.catalog.matched(idx)),
            left_at: t,
        });
        move_to_front(&mut self.recent, meta.color);
        self.departures.push_back(t);
        if self.departures.len() > RATE_WINDOW {
            self.departures.pop_front();
        }
        self.advance(t);
        self.version += 1;
        Ok(Emission {
            car_id: car_id.to_string(),
            order_id: order_id.to_string(),
            lane,
            left_at: t,
        })
    }

    fn buffered(
        &self,
        car: CarBody,
        planned: Option<&str>,
    ) -> Result<Arc<BufferedCar>, ControllerError> {
        let body = self
            .catalog
            .body_index(&car.body_type)
            .ok_or_else(|| ControllerError::UnknownBodyType(car.body_type.to_string()))?;
        let planned = match planned {
            Some(id) => Some(
                self.catalog
                    .order_index(id)
                    .ok_or_else(|| ControllerError::UnknownOrder(id.to_string()))?,
            ),
            None => None,
        };
        Ok(Arc::new(BufferedCar { car, body, planned }))
    }

    /// Lookahead: for each available lane, virtually enqueue the car and
    /// drain the whole buffer through the dequeue rule; keep the lane with
    /// the fewest violations, then the lowest `LDS/ABS`, then the lowest index.
    pub fn choose_enqueue_lane(
        &self,
        car: &CarBody,
        planned: Option<&str>,
        available: Option<&[usize]>,
    ) -> Result<EnqueueDecision, ControllerError> {
        if self
            .buffer
            .position(|c| c.car.car_id == car.car_id)
            .is_some()
        {
            return Err(ControllerError::DuplicateCar(car.car_id.clone()));
        }
        let entry = self.buffered(car.clone(), planned)?;
        let lanes: Vec<usize> = self
            .buffer
            .available_lanes()
            .filter(|l| available.is_none_or(|a| a.contains(l)))
            .collect();
        if lanes.is_empty() {
            return Err(ControllerError::NoAvailableLane);
        }
        let t0 = self.now(car.entered_at);
        let rate = self.departure_rate();
        let evaluations = self
            .config
            .exec
            .map(&lanes, |&lane| self.simulate_lane(&entry, lane, t0, rate));
        let best = evaluations
            .iter()
            .min_by(|a, b| {
                (a.violation, a.lds_abs(), a.lane).cmp(&(b.violation, b.lds_abs(), b.lane))
            })
            .expect("at least one lane");
        Ok(EnqueueDecision {
            lane: best.lane,
            version: self.version,
            evaluations: evaluations.clone(),
        })
    }

    fn simulate_lane(
        &self,
        entry: &Arc<BufferedCar>,
        lane: usize,
        t0: Timestamp,
        rate: i64,
    ) -> LaneEvaluation {
        let mut buf = self.buffer.snapshot();
        for l in 0..buf.lane_count() {
            buf.set_blocked(l, false).expect("lane exists");
        }
        buf.enqueue(Arc::clone(entry), lane)
            .expect("lane was available");
        let mut counter = self.history.counter().clone();
        let mut recent = self.recent.clone();
        let mut res = Reservations::none();
        let mut colors = Vec::with_capacity(buf.occupancy());
        let mut blends = Vec::with_capacity(buf.occupancy());
        let mut violation = Weight::ZERO;
        let mut j = 0i64;
        while !buf.is_empty() {
            j += 1;
            let t = t0.plus_seconds(j * rate);
            let view = View {
                cat: &self.catalog,
                pool: &self.pool,
                res: &res,
                counter: &counter,
                recent: &recent,
                config: &self.config,
                t,
            };
            let Ok(pick) = view.choose(buf.head_iter()) else {
                break;
            };
            let meta = *self.catalog.meta(pick.order);
            violation += pick.violation;
            counter.push(self.catalog.sig(meta.sig), t);
            move_to_front(&mut recent, meta.color);
            res.reserve(&self.catalog, pick.order);
            buf.dequeue(pick.lane).expect("picked a head");
            colors.push(meta.color);
            blends.push(meta.blend);
        }
        LaneEvaluation {
            lane,
            violation,
            lds: lds_unchecked(&blends) as u64,
            batches: run_lengths(&colors).len() as u64,
            cars: blends.len() as u64,
        }
    }

    /// Puts a car into a specific lane. `planned` is the order it was built for.
    pub fn enqueue_car(
        &mut self,
        car: CarBody,
        planned: Option<&str>,
        lane: usize,
    ) -> Result<(), ControllerError> {
        if self
            .buffer
            .position(|c| c.car.car_id == car.car_id)
            .is_some()
        {
            return Err(ControllerError::DuplicateCar(car.car_id.clone()));
        }
        let t = car.entered_at;
        let entry = self.buffered(car, planned)?;
        self.buffer.enqueue(entry, lane)?;
        self.advance(t);
        self.version += 1;
        Ok(())
    }

    /// `choose_enqueue_lane` followed by `enqueue_car`.
    pub fn enqueue(
        &mut self,
        car: CarBody,
        planned: Option<&str>,
        available: Option<&[usize]>,
    ) -> Result<EnqueueDecision, ControllerError> {
        let d = self.choose_enqueue_lane(&car, planned, available)?;
        self.enqueue_car(car, planned, d.lane)?;
        Ok(d)
    }

    pub fn set_lane_locked(&mut self, lane: usize, locked: bool) -> Result<(), ControllerError> {
        self.buffer.set_locked(lane, locked)?;
        self.version += 1;
        Ok(())
    }

    pub fn set_head_blocked(&mut self, lane: usize, blocked: bool) -> Result<(), ControllerError> {
        self.buffer.set_blocked(lane, blocked)?;
        self.version += 1;
        Ok(())
    }
}
