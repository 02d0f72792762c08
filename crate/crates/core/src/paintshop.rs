//! Paint shop stand-in: sealer (pass-through), a multi-lane primer buffer and
//! parallel paint lanes, with an optional one-time repaint loop.
//!
//! The plant's own laning logic is undocumented; the policy here is a
//! declared substitute:
//!
//! * primer enqueue: a non-full lane whose tail has the car's color, else the
//!   non-full lane with most free space (lowest index on ties);
//! * the primer buffer is filled whenever it has room; otherwise the next
//!   paint lane in round-robin order pulls one car;
//! * a pulling lane takes a head of its own color; failing that, a head whose
//!   color no other paint lane is painting; if every head's color is being
//!   painted elsewhere, the turn passes to the lane already painting the best
//!   head's color. Among eligible heads the longest same-color prefix wins,
//!   then the lowest lane index;
//! * at the end of the input, everything drains under the same rule.

use std::collections::VecDeque;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::LaneBuffer;
use crate::metrics::run_lengths;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PaintShopError {
    #[error("invalid paint shop config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaintShopConfig {
    pub primer_lanes: usize,
    pub primer_per_lane_capacity: usize,
    /// Kept for completeness; the sealer buffer preserves sequence.
    pub sealer_buffer_lanes: usize,
    pub paint_lane_count: usize,
    pub repaint_rate: f64,
    pub rng_seed: u64,
}

impl Default for PaintShopConfig {
    fn default() -> Self {
        PaintShopConfig {
            primer_lanes: 6,
            primer_per_lane_capacity: 8,
            sealer_buffer_lanes: 4,
            paint_lane_count: 2,
            repaint_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl PaintShopConfig {
    pub fn check(&self) -> Result<(), PaintShopError> {
        let bad = |m: &str| Err(PaintShopError::InvalidConfig(m.into()));
        if self.primer_lanes == 0 || self.primer_per_lane_capacity == 0 {
            return bad("primer buffer needs at least one lane and one slot per lane");
        }
        if self.paint_lane_count == 0 {
            return bad("paint_lane_count must be at least 1");
        }
        if !(0.0..1.0).contains(&self.repaint_rate) {
            return bad("repaint_rate must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaintOutcome<T> {
    /// Painting order per paint lane.
    pub per_lane_sequences: Vec<Vec<T>>,
    /// Painted cars over same-color runs summed across lanes; zero if nothing was painted.
    pub aabs: Ratio<u64>,
    pub batch_count: usize,
    pub repaints: usize,
}

impl<T> PaintOutcome<T> {
    pub fn painted(&self) -> usize {
        self.per_lane_sequences.iter().map(Vec::len).sum()
    }

    pub fn aabs_f64(&self) -> f64 {
        *self.aabs.numer() as f64 / *self.aabs.denom() as f64
    }
}

#[derive(Clone)]
struct Body<T> {
    item: T,
    repainted: bool,
}

fn primer_lane<T, K: PartialEq>(
    primer: &LaneBuffer<Body<T>>,
    color: &K,
    key: &impl Fn(&T) -> K,
) -> Option<usize> {
    let open = || (0..primer.lane_count()).filter(|&l| primer.free_space(l) > 0);
    open()
        .find(|&l| {
            primer
                .lane(l)
                .back()
                .is_some_and(|b| &key(&b.item) == color)
        })
        .or_else(|| open().max_by_key(|&l| (primer.free_space(l), std::cmp::Reverse(l))))
}

fn prefix_len<T, K: PartialEq>(
    primer: &LaneBuffer<Body<T>>,
    lane: usize,
    key: &impl Fn(&T) -> K,
) -> usize {
    let q = primer.lane(lane);
    match q.front() {
        Some(h) => {
            let c = key(&h.item);
            q.iter().take_while(|b| key(&b.item) == c).count()
        }
        None => 0,
    }
}

/// `(paint lane, primer lane)` for the turn of paint lane `turn`.
fn pull_target<T, K: PartialEq>(
    primer: &LaneBuffer<Body<T>>,
    painting: &[Option<K>],
    turn: usize,
    key: &impl Fn(&T) -> K,
) -> Option<(usize, usize)> {
    let heads: Vec<(usize, K, usize)> = primer
        .head_iter()
        .map(|(l, b)| (l, key(&b.item), prefix_len(primer, l, key)))
        .collect();
    let best = |pred: &dyn Fn(&K) -> bool| {
        heads
            .iter()
            .filter(|h| pred(&h.1))
            .max_by_key(|h| (h.2, std::cmp::Reverse(h.0)))
    };
    let own = painting[turn].as_ref();
    if let Some(h) = best(&|c| own == Some(c)) {
        return Some((turn, h.0));
    }
    let elsewhere = |c: &K| {
        painting
            .iter()
            .enumerate()
            .any(|(i, p)| i != turn && p.as_ref() == Some(c))
    };
    if let Some(h) = best(&|c| !elsewhere(c)) {
        return Some((turn, h.0));
    }
    let h = best(&|_| true)?;
    let owner = painting
        .iter()
        .position(|p| p.as_ref() == Some(&h.1))
        .unwrap_or(turn);
    Some((owner, h.0))
}

/// Runs a color sequence (earliest first) through the paint shop.
pub fn simulate<T: Clone + PartialEq>(
    seq: &[T],
    config: &PaintShopConfig,
) -> Result<PaintOutcome<T>, PaintShopError> {
    simulate_by(seq, config, T::clone)
}

/// Like [`simulate`] for arbitrary cars, batching on `color(car)`.
pub fn simulate_by<T: Clone, K: PartialEq>(
    seq: &[T],
    config: &PaintShopConfig,
    color: impl Fn(&T) -> K,
) -> Result<PaintOutcome<T>, PaintShopError> {
    config.check()?;
    let mut primer: LaneBuffer<Body<T>> = LaneBuffer::new(
        config.primer_lanes,
        config.primer_per_lane_capacity,
        config.primer_lanes * config.primer_per_lane_capacity,
    )
    .expect("checked geometry");
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut lanes: Vec<Vec<T>> = vec![Vec::new(); config.paint_lane_count];
    let mut painting: Vec<Option<K>> = (0..config.paint_lane_count).map(|_| None).collect();
    let mut rework: VecDeque<Body<T>> = VecDeque::new();
    let mut input = seq.iter();
    let mut next: Option<Body<T>> = None;
    let mut turn = 0;
    let mut repaints = 0;
    loop {
        if next.is_none() {
            next = rework.pop_front().or_else(|| {
                input.next().map(|c| Body {
                    item: c.clone(),
                    repainted: false,
                })
            });
        }
        if let Some(body) = next.take() {
            if let Some(l) = primer_lane(&primer, &color(&body.item), &color) {
                primer.enqueue(body, l).expect("lane has room");
                continue;
            }
            next = Some(body);
        }
        let Some((painter, l)) = pull_target(&primer, &painting, turn, &color) else {
            debug_assert!(next.is_none() && rework.is_empty());
            break;
        };
        let body = primer.dequeue(l).expect("head exists");
        painting[painter] = Some(color(&body.item));
        lanes[painter].push(body.item.clone());
        if !body.repainted && config.repaint_rate > 0.0 && rng.gen_bool(config.repaint_rate) {
            repaints += 1;
            rework.push_back(Body {
                item: body.item,
                repainted: true,
            });
        }
        turn = (turn + 1) % config.paint_lane_count;
    }
    let batch_count: usize = lanes
        .iter()
        .map(|l| run_lengths(&l.iter().map(&color).collect::<Vec<K>>()).len())
        .sum();
    let painted: usize = lanes.iter().map(Vec::len).sum();
    Ok(PaintOutcome {
        aabs: if batch_count == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(painted as u64, batch_count as u64)
        },
        per_lane_sequences: lanes,
        batch_count,
        repaints,
    })
}

/// aABS of a sequence; see [`simulate`].
pub fn aabs<T: Clone + PartialEq>(
    seq: &[T],
    config: &PaintShopConfig,
) -> Result<Ratio<u64>, PaintShopError> {
    simulate(seq, config).map(|o| o.aabs)
}
