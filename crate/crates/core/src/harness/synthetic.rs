//! Seeded synthetic scenarios: a planned order stream, cars arriving in a
//! slightly perturbed planned order, and the matching event log.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::events::EventRecord;
use super::scenario::{Scenario, ScenarioConfig};
use crate::buffer::BufferGeometry;
use crate::constraints::{Constraint, ConstraintKind, Literal, Weight};
use crate::domain::{BodyType, ColorId, ColorInfo, Day, Order, ScenarioCatalog, Timestamp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorDistribution {
    /// Frequency proportional to `1 / rank`.
    InverseRank,
    Uniform,
    Weights(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_cars: usize,
    pub n_colors: usize,
    pub color_distribution: ColorDistribution,
    /// Adjacent swaps applied to the arrival order, as a fraction of `n_cars`.
    pub blend_shuffle_strength: f64,
    pub seed: u64,
    pub cars_per_day: usize,
    /// Buffer fill level at which every arrival is matched by a departure.
    pub target_occupancy: usize,
    pub start: Day,
    pub geometry: BufferGeometry,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_cars: 5000,
            n_colors: 20,
            color_distribution: ColorDistribution::InverseRank,
            blend_shuffle_strength: 0.5,
            seed: 42,
            cars_per_day: 480,
            target_occupancy: 60,
            start: Day::from_ymd(2023, 5, 1).expect("valid date"),
            geometry: BufferGeometry::BODY_BUFFER,
        }
    }
}

const BODIES: [(&str, f64); 2] = [("limousine", 0.65), ("wagon", 0.35)];
const FEATURES: [(&str, f64); 3] = [("sunroof", 0.15), ("two_tone", 0.05), ("towbar", 0.10)];

fn constraints(start: Timestamp) -> Vec<Constraint> {
    let rule = |id: &str, feature: &str, weight: u64, kind| Constraint {
        id: id.into(),
        weight: Weight::from_units(weight),
        cnf: vec![vec![Literal::pos(feature)]],
        kind,
    };
    vec![
        rule(
            "sunroof_spacing",
            "sunroof",
            1,
            ConstraintKind::Window { m: 1, n: 3 },
        ),
        rule(
            "two_tone_spacing",
            "two_tone",
            3,
            ConstraintKind::Window { m: 1, n: 8 },
        ),
        rule(
            "towbar_hourly",
            "towbar",
            1,
            ConstraintKind::Time {
                m: 4,
                t_seconds: 3600,
                s: start,
            },
        ),
    ]
}

/// Builds the scenario and its event log. Deterministic in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> (Scenario, Vec<EventRecord>) {
    assert!(spec.n_colors >= 2, "need at least two colors");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = match &spec.color_distribution {
        ColorDistribution::InverseRank => (1..=spec.n_colors).map(|r| 1.0 / r as f64).collect(),
        ColorDistribution::Uniform => vec![1.0; spec.n_colors],
        ColorDistribution::Weights(w) => w.clone(),
    };
    let color_dist = WeightedIndex::new(&weights).expect("positive color weights");
    let body_dist = WeightedIndex::new(BODIES.iter().map(|b| b.1)).expect("positive weights");
    let colors: Vec<ColorInfo> = (0..spec.n_colors)
        .map(|i| ColorInfo {
            id: ColorId::new(format!("C{:02}", i + 1)),
            name: format!("color {}", i + 1),
        })
        .collect();
    let per_day = spec.cars_per_day.max(1);
    let orders: Vec<Order> = (0..spec.n_cars)
        .map(|i| {
            let day = Day(spec.start.0 + (i / per_day) as i32);
            Order {
                order_id: format!("V{:06}", i + 1),
                body_type: BodyType::new(BODIES[body_dist.sample(&mut rng)].0),
                color: colors[color_dist.sample(&mut rng)].id.clone(),
                blend_number: i as u64 + 1,
                due_date: day,
                planned_date: day,
                features: FEATURES
                    .iter()
                    .filter(|f| rng.gen_bool(f.1))
                    .map(|f| f.0.to_string())
                    .collect(),
            }
        })
        .collect();

    let mut arrival: Vec<usize> = (0..spec.n_cars).collect();
    if spec.n_cars > 1 {
        let swaps = (spec.blend_shuffle_strength * spec.n_cars as f64).round() as usize;
        for _ in 0..swaps {
            let i = rng.gen_range(0..spec.n_cars - 1);
            arrival.swap(i, i + 1);
        }
    }

    let start = spec.start.start();
    let gap = 86_400 / per_day as i64;
    let mut events = Vec::with_capacity(spec.n_cars * 2);
    let mut occupancy = 0;
    let target = spec.target_occupancy.clamp(1, spec.geometry.total_capacity);
    let mut t = start;
    for (j, &o) in arrival.iter().enumerate() {
        t = start.plus_seconds(j as i64 * gap);
        events.push(EventRecord::EnqueueRequest {
            car_id: format!("B{:06}", j + 1),
            body_type: orders[o].body_type.clone(),
            timestamp: t,
            available_lanes: None,
            order_id: Some(orders[o].order_id.clone()),
        });
        occupancy += 1;
        if occupancy >= target {
            events.push(EventRecord::DequeueRequest {
                timestamp: t.plus_seconds(gap / 2),
                eligible_heads: None,
            });
            occupancy -= 1;
        }
    }
    for i in 0..occupancy {
        events.push(EventRecord::DequeueRequest {
            timestamp: t.plus_seconds(gap / 2 + (i as i64 + 1) * gap),
            eligible_heads: None,
        });
    }

    let mut catalog = ScenarioCatalog::from_orders(orders, constraints(start));
    catalog.colors = colors;
    let config = ScenarioConfig {
        scenario_id: format!("synthetic-{}-seed{}", spec.n_cars, spec.seed),
        buffer: spec.geometry,
        ..ScenarioConfig::default()
    };
    (Scenario { catalog, config }, events)
}

/// Rewrites a log as if a simple legacy controller had run the buffer: cars
/// go to the lane with most free space, the head with the lowest planned
/// blend number leaves first, and every car keeps its planned order. Lane
/// choices become single-lane `available_lanes`, departures become observed
/// emissions.
pub fn legacy_log(
    events: &[EventRecord],
    catalog: &ScenarioCatalog,
    geometry: BufferGeometry,
) -> Vec<EventRecord> {
    let blend = |id: &str| {
        catalog
            .orders
            .iter()
            .find(|o| o.order_id == id)
            .map_or(u64::MAX, |o| o.blend_number)
    };
    let cap = geometry.lane_capacity();
    let mut lanes: Vec<VecDeque<(String, String, u64)>> = vec![VecDeque::new(); geometry.lanes];
    let mut locked = vec![false; geometry.lanes];
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        match e {
            EventRecord::EnqueueRequest {
                car_id,
                body_type,
                timestamp,
                available_lanes,
                order_id: Some(order_id),
            } => {
                let occupancy: usize = lanes.iter().map(VecDeque::len).sum();
                let lane = (0..lanes.len())
                    .filter(|&l| {
                        !locked[l] && lanes[l].len() < cap && occupancy < geometry.total_capacity
                    })
                    .filter(|l| available_lanes.as_ref().is_none_or(|a| a.contains(l)))
                    .max_by_key(|&l| (cap - lanes[l].len(), std::cmp::Reverse(l)));
                let Some(lane) = lane else { continue };
                lanes[lane].push_back((car_id.clone(), order_id.clone(), blend(order_id)));
                out.push(EventRecord::EnqueueRequest {
                    car_id: car_id.clone(),
                    body_type: body_type.clone(),
                    timestamp: *timestamp,
                    available_lanes: Some(vec![lane]),
                    order_id: Some(order_id.clone()),
                });
            }
            EventRecord::DequeueRequest {
                timestamp,
                eligible_heads,
            } => {
                let lane = (0..lanes.len())
                    .filter(|l| eligible_heads.as_ref().is_none_or(|h| h.contains(l)))
                    .filter_map(|l| lanes[l].front().map(|h| (h.2, l)))
                    .min()
                    .map(|(_, l)| l);
                let Some(lane) = lane else { continue };
                let (car_id, order_id, _) = lanes[lane].pop_front().expect("non-empty");
                out.push(EventRecord::EmissionObserved {
                    car_id,
                    order_id,
                    timestamp: *timestamp,
                });
            }
            EventRecord::LaneLockChanged {
                lane, locked: l, ..
            } => {
                if let Some(slot) = locked.get_mut(*lane) {
                    *slot = *l;
                }
                out.push(e.clone());
            }
            other => out.push(other.clone()),
        }
    }
    out
}
