//! Applies events to a controller and records every request with its
//! response. Shared by replay and the service.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::events::{EventRecord, LogEntry, Response};
use super::HarnessError;
use crate::buffer::BufferGeometry;
use crate::controller::{
    CompiledCatalog, ControllerConfig, ControllerError, ControllerState, Emission,
};
use crate::domain::{CarBody, Order, Timestamp};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnteredCar {
    pub car_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_id: Option<String>,
    pub entered_at: Timestamp,
    pub lane: usize,
}

#[derive(Clone, Debug)]
pub struct Session {
    state: ControllerState,
    entering: Vec<EnteredCar>,
    leaving: Vec<Emission>,
    log: Vec<LogEntry>,
    inconsistent: usize,
}

impl Session {
    pub fn new(
        catalog: Arc<CompiledCatalog>,
        geometry: BufferGeometry,
        config: ControllerConfig,
    ) -> Result<Session, HarnessError> {
        let state = ControllerState::new(catalog, geometry, config)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(Session {
            state,
            entering: Vec::new(),
            leaving: Vec::new(),
            log: Vec::new(),
            inconsistent: 0,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn leaving(&self) -> &[Emission] {
        &self.leaving
    }

    pub fn entering(&self) -> &[EnteredCar] {
        &self.entering
    }

    /// Applies one event. Inconsistent events are answered with
    /// [`Response::Rejected`] and leave the state unchanged.
    pub fn apply(&mut self, event: EventRecord) -> Response {
        let response = match self.dispatch(&event) {
            Ok(r) => r,
            Err(e) => {
                self.inconsistent += 1;
                tracing::warn!(?event, error = %e, "skipping inconsistent event");
                Response::Rejected {
                    code: e.code().into(),
                    error: e.to_string(),
                    version: self.state.version(),
                }
            }
        };
        self.log.push(LogEntry {
            event,
            response: response.clone(),
        });
        response
    }

    fn dispatch(&mut self, event: &EventRecord) -> Result<Response, ControllerError> {
        match event {
            EventRecord::EnqueueRequest {
                car_id,
                body_type,
                timestamp,
                available_lanes,
                order_id,
            } => {
                let car = CarBody {
                    car_id: car_id.clone(),
                    body_type: body_type.clone(),
                    entered_at: *timestamp,
                    assigned_order: order_id.clone(),
                };
                let d = self
                    .state
                    .enqueue(car, order_id.as_deref(), available_lanes.as_deref())?;
                let best = d
                    .evaluations
                    .iter()
                    .find(|e| e.lane == d.lane)
                    .expect("chosen lane evaluated");
                self.entering.push(EnteredCar {
                    car_id: car_id.clone(),
                    order_id: order_id.clone(),
                    entered_at: *timestamp,
                    lane: d.lane,
                });
                Ok(Response::Enqueued {
                    lane: d.lane,
                    rationale: format!(
                        "lane {} of {} evaluated: {} violation weight, LDS/ABS {} over {} virtual departures",
                        d.lane,
                        d.evaluations.len(),
                        best.violation,
                        best.lds_abs(),
                        best.cars
                    ),
                    evaluations: d.evaluations,
                    version: self.state.version(),
                })
            }
            EventRecord::DequeueRequest {
                timestamp,
                eligible_heads,
            } => {
                let (d, e) = self.state.dequeue(*timestamp, eligible_heads.as_deref())?;
                self.leaving.push(e);
                Ok(self.dequeued(d.lane, d.car_id, d.order_id, d.violation))
            }
            EventRecord::SubstitutionRequest { car_id, timestamp } => {
                let (d, e) = self.state.assign_order(car_id, *timestamp)?;
                self.leaving.push(e);
                Ok(self.dequeued(d.lane, d.car_id, d.order_id, d.violation))
            }
            EventRecord::EmissionObserved {
                car_id,
                order_id,
                timestamp,
            } => {
                let e = self.state.observe_emission(car_id, order_id, *timestamp)?;
                self.leaving.push(e);
                Ok(Response::Applied {
                    version: self.state.version(),
                })
            }
            EventRecord::LaneLockChanged { lane, locked, .. } => {
                self.state.set_lane_locked(*lane, *locked)?;
                Ok(Response::Applied {
                    version: self.state.version(),
                })
            }
        }
    }

    fn dequeued(
        &self,
        lane: usize,
        car_id: String,
        order_id: String,
        violation: crate::constraints::Weight,
    ) -> Response {
        Response::Dequeued {
            rationale: format!("car {car_id} leaves lane {lane} as order {order_id} (violation weight {violation})"),
            lane,
            car_id,
            order_id,
            violation,
            version: self.state.version(),
        }
    }

    pub fn into_outcome(self) -> ReplayOutcome {
        ReplayOutcome {
            catalog: Arc::clone(self.state.catalog()),
            entering: self.entering,
            leaving: self.leaving,
            log: self.log,
            inconsistent: self.inconsistent,
            remaining: self.state.buffer().occupancy(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub catalog: Arc<CompiledCatalog>,
    pub entering: Vec<EnteredCar>,
    pub leaving: Vec<Emission>,
    pub log: Vec<LogEntry>,
    /// Events answered with a rejection.
    pub inconsistent: usize,
    /// Cars still in the buffer after the last event.
    pub remaining: usize,
}

impl ReplayOutcome {
    pub fn leaving_orders(&self) -> Vec<&Order> {
        self.leaving
            .iter()
            .map(|e| {
                self.catalog.order(
                    self.catalog
                        .order_index(&e.order_id)
                        .expect("emitted orders exist"),
                )
            })
            .collect()
    }

    /// Planned orders of entering cars, for cars that named one.
    pub fn entering_orders(&self) -> Vec<&Order> {
        self.entering
            .iter()
            .filter_map(|c| c.order_id.as_deref())
            .filter_map(|id| self.catalog.order_index(id))
            .map(|i| self.catalog.order(i))
            .collect()
    }
}

/// Replays an event log through a fresh controller.
pub fn replay(
    events: &[EventRecord],
    catalog: Arc<CompiledCatalog>,
    geometry: BufferGeometry,
    config: ControllerConfig,
) -> Result<ReplayOutcome, HarnessError> {
    let mut session = Session::new(catalog, geometry, config)?;
    for e in events {
        session.apply(e.clone());
    }
    Ok(session.into_outcome())
}
