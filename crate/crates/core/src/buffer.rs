//! Bank of parallel FIFO lanes with per-lane and total capacities, lane locks
//! and blocked heads. Models both the body buffer and the primer buffer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("invalid buffer geometry: {0}")]
    InvalidGeometry(String),
    #[error("lane {lane} does not exist")]
    NoSuchLane { lane: usize },
    #[error("lane {lane} is full")]
    LaneFull { lane: usize },
    #[error("lane {lane} is locked")]
    LaneLocked { lane: usize },
    #[error("buffer is at total capacity (enqueue into lane {lane})")]
    BufferFull { lane: usize },
    #[error("lane {lane} is empty")]
    LaneEmpty { lane: usize },
    #[error("head of lane {lane} is blocked")]
    HeadBlocked { lane: usize },
}

/// Geometry block of a scenario config (`lanes`, `per_lane_capacity`, `total_capacity`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferGeometry {
    pub lanes: usize,
    /// Defaults to `ceil(total_capacity / lanes) + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_lane_capacity: Option<usize>,
    pub total_capacity: usize,
}

impl BufferGeometry {
    /// The plant's body buffer: 13 lanes, 148 cars.
    pub const BODY_BUFFER: BufferGeometry = BufferGeometry {
        lanes: 13,
        per_lane_capacity: Some(12),
        total_capacity: 148,
    };

    pub fn lane_capacity(&self) -> usize {
        self.per_lane_capacity
            .unwrap_or_else(|| default_lane_capacity(self.lanes, self.total_capacity))
    }

    pub fn build<T>(&self) -> Result<LaneBuffer<T>, BufferError> {
        LaneBuffer::new(self.lanes, self.lane_capacity(), self.total_capacity)
    }
}

impl Default for BufferGeometry {
    fn default() -> Self {
        Self::BODY_BUFFER
    }
}

pub fn default_lane_capacity(lanes: usize, total_capacity: usize) -> usize {
    if lanes == 0 {
        return 0;
    }
    total_capacity.div_ceil(lanes) + 1
}

/// Parallel FIFO lanes. Cloning yields an independent snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaneBuffer<T> {
    lanes: Vec<VecDeque<T>>,
    lane_capacity: Vec<usize>,
    total_capacity: usize,
    occupancy: usize,
    locked: Vec<bool>,
    blocked: Vec<bool>,
}

impl<T> LaneBuffer<T> {
    pub fn new(
        lane_count: usize,
        per_lane_capacity: usize,
        total_capacity: usize,
    ) -> Result<Self, BufferError> {
        Self::with_lane_capacities(vec![per_lane_capacity; lane_count], total_capacity)
    }

    pub fn with_lane_capacities(
        lane_capacity: Vec<usize>,
        total_capacity: usize,
    ) -> Result<Self, BufferError> {
        if lane_capacity.is_empty() {
            return Err(BufferError::InvalidGeometry(
                "lane count must be at least 1".into(),
            ));
        }
        if lane_capacity.contains(&0) {
            return Err(BufferError::InvalidGeometry(
                "per-lane capacity must be at least 1".into(),
            ));
        }
        if total_capacity == 0 {
            return Err(BufferError::InvalidGeometry(
                "total capacity must be at least 1".into(),
            ));
        }
        let n = lane_capacity.len();
        Ok(LaneBuffer {
            lanes: (0..n).map(|_| VecDeque::new()).collect(),
            lane_capacity,
            total_capacity,
            occupancy: 0,
            locked: vec![false; n],
            blocked: vec![false; n],
        })
    }

    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy == 0
    }

    pub fn total_capacity(&self) -> usize {
        self.total_capacity
    }

    pub fn lane_capacity(&self, lane: usize) -> usize {
        self.lane_capacity[lane]
    }

    pub fn lane(&self, lane: usize) -> &VecDeque<T> {
        &self.lanes[lane]
    }

    pub fn lanes(&self) -> impl Iterator<Item = &VecDeque<T>> {
        self.lanes.iter()
    }

    pub fn free_space(&self, lane: usize) -> usize {
        self.lane_capacity[lane] - self.lanes[lane].len()
    }

    pub fn is_locked(&self, lane: usize) -> bool {
        self.locked[lane]
    }

    pub fn is_blocked(&self, lane: usize) -> bool {
        self.blocked[lane]
    }

    pub fn set_locked(&mut self, lane: usize, locked: bool) -> Result<(), BufferError> {
        self.check_lane(lane)?;
        self.locked[lane] = locked;
        Ok(())
    }

    pub fn set_blocked(&mut self, lane: usize, blocked: bool) -> Result<(), BufferError> {
        self.check_lane(lane)?;
        self.blocked[lane] = blocked;
        Ok(())
    }

    /// Lanes that would accept an enqueue right now.
    pub fn available_lanes(&self) -> impl Iterator<Item = usize> + '_ {
        let room = self.occupancy < self.total_capacity;
        (0..self.lanes.len()).filter(move |&i| room && !self.locked[i] && self.free_space(i) > 0)
    }

    pub fn can_enqueue(&self, lane: usize) -> Result<(), BufferError> {
        self.check_lane(lane)?;
        if self.locked[lane] {
            return Err(BufferError::LaneLocked { lane });
        }
        if self.lanes[lane].len() >= self.lane_capacity[lane] {
            return Err(BufferError::LaneFull { lane });
        }
        if self.occupancy >= self.total_capacity {
            return Err(BufferError::BufferFull { lane });
        }
        Ok(())
    }

    pub fn enqueue(&mut self, item: T, lane: usize) -> Result<(), BufferError> {
        self.can_enqueue(lane)?;
        self.lanes[lane].push_back(item);
        self.occupancy += 1;
        Ok(())
    }

    pub fn dequeue(&mut self, lane: usize) -> Result<T, BufferError> {
        self.check_lane(lane)?;
        if self.lanes[lane].is_empty() {
            return Err(BufferError::LaneEmpty { lane });
        }
        if self.blocked[lane] {
            return Err(BufferError::HeadBlocked { lane });
        }
        self.occupancy -= 1;
        Ok(self.lanes[lane].pop_front().expect("checked non-empty"))
    }

    /// `(lane, head)` for every non-empty lane whose head is not blocked, ascending by lane.
    pub fn heads(&self) -> Vec<(usize, &T)> {
        self.head_iter().collect()
    }

    pub fn head_iter(&self) -> impl Iterator<Item = (usize, &T)> + '_ {
        self.lanes
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.blocked[*i])
            .filter_map(|(i, lane)| lane.front().map(|h| (i, h)))
    }

    /// Position of the first item matching `pred`, as `(lane, depth)`.
    pub fn position(&self, mut pred: impl FnMut(&T) -> bool) -> Option<(usize, usize)> {
        self.lanes
            .iter()
            .enumerate()
            .find_map(|(i, lane)| lane.iter().position(&mut pred).map(|d| (i, d)))
    }

    fn check_lane(&self, lane: usize) -> Result<(), BufferError> {
        if lane < self.lanes.len() {
            Ok(())
        } else {
            Err(BufferError::NoSuchLane { lane })
        }
    }
}

impl<T: Clone> LaneBuffer<T> {
    /// Independent copy for virtual simulation.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn geometries() {
        let b: LaneBuffer<u32> = LaneBuffer::new(13, 12, 148).unwrap();
        assert_eq!(b.lane_count(), 13);
        assert!(b.is_empty());
        assert_eq!(BufferGeometry::BODY_BUFFER.lane_capacity(), 12);
        assert_eq!(default_lane_capacity(13, 148), 13);
        let p: LaneBuffer<u32> = LaneBuffer::new(6, 8, 48).unwrap();
        assert_eq!(p.available_lanes().count(), 6);
        let one: LaneBuffer<u32> = LaneBuffer::new(1, 1, 1).unwrap();
        assert_eq!(one.total_capacity(), 1);
    }

    #[test]
    fn zero_geometry_is_rejected() {
        assert!(LaneBuffer::<u32>::new(0, 1, 1).is_err());
        assert!(LaneBuffer::<u32>::new(1, 0, 1).is_err());
        assert!(LaneBuffer::<u32>::new(1, 1, 0).is_err());
    }

    #[test]
    fn enqueue_errors_name_the_lane() {
        let mut b = LaneBuffer::new(3, 1, 2).unwrap();
        b.enqueue("a", 0).unwrap();
        assert_eq!(b.enqueue("b", 0), Err(BufferError::LaneFull { lane: 0 }));
        b.set_locked(1, true).unwrap();
        assert_eq!(b.enqueue("b", 1), Err(BufferError::LaneLocked { lane: 1 }));
        b.enqueue("b", 2).unwrap();
        b.set_locked(1, false).unwrap();
        assert_eq!(b.enqueue("c", 1), Err(BufferError::BufferFull { lane: 1 }));
        assert_eq!(b.available_lanes().count(), 0);
    }

    #[test]
    fn dequeue_errors() {
        let mut b = LaneBuffer::new(2, 2, 4).unwrap();
        assert_eq!(b.dequeue(0), Err(BufferError::LaneEmpty { lane: 0 }));
        b.enqueue(1, 0).unwrap();
        b.set_blocked(0, true).unwrap();
        assert_eq!(b.dequeue(0), Err(BufferError::HeadBlocked { lane: 0 }));
        assert_eq!(b.dequeue(5), Err(BufferError::NoSuchLane { lane: 5 }));
    }

    #[test]
    fn heads_skip_empty_and_blocked_lanes() {
        let mut b: LaneBuffer<char> = LaneBuffer::new(2, 4, 8).unwrap();
        assert!(b.heads().is_empty());
        b.enqueue('A', 0).unwrap();
        b.enqueue('B', 0).unwrap();
        b.enqueue('C', 1).unwrap();
        b.set_blocked(1, true).unwrap();
        assert_eq!(b.heads(), vec![(0, &'A')]);

        let mut c: LaneBuffer<char> = LaneBuffer::new(3, 4, 8).unwrap();
        for (i, x) in ['A', 'B', 'C'].into_iter().enumerate() {
            c.enqueue(x, i).unwrap();
        }
        assert_eq!(c.heads(), vec![(0, &'A'), (1, &'B'), (2, &'C')]);
    }

    #[test]
    fn snapshot_is_independent() {
        let mut b = LaneBuffer::new(2, 2, 4).unwrap();
        b.enqueue(1, 0).unwrap();
        let mut s = b.snapshot();
        s.enqueue(2, 1).unwrap();
        s.dequeue(0).unwrap();
        assert_eq!(b.occupancy(), 1);
        assert_eq!(b.heads(), vec![(0, &1)]);
    }

    fn lds(seq: &[u32]) -> usize {
        let mut best = vec![1usize; seq.len()];
        for i in 0..seq.len() {
            for j in 0..i {
                if seq[j] > seq[i] {
                    best[i] = best[i].max(best[j] + 1);
                }
            }
        }
        best.into_iter().max().unwrap_or(0)
    }

    /// Every output order reachable by routing `input` through the buffer.
    fn reachable_outputs(input: &[u32], lanes: usize) -> Vec<Vec<u32>> {
        fn go(
            rest: &[u32],
            buf: &mut LaneBuffer<u32>,
            out: &mut Vec<u32>,
            acc: &mut Vec<Vec<u32>>,
        ) {
            if rest.is_empty() && buf.is_empty() {
                acc.push(out.clone());
                return;
            }
            if let Some((&next, tail)) = rest.split_first() {
                for lane in 0..buf.lane_count() {
                    let saved = buf.snapshot();
                    buf.enqueue(next, lane).unwrap();
                    go(tail, buf, out, acc);
                    *buf = saved;
                }
            }
            let head_lanes: Vec<usize> = buf.heads().into_iter().map(|(i, _)| i).collect();
            for lane in head_lanes {
                let saved = buf.snapshot();
                let x = buf.dequeue(lane).unwrap();
                out.push(x);
                go(rest, buf, out, acc);
                out.pop();
                *buf = saved;
            }
        }
        let mut buf = LaneBuffer::new(lanes, 64, 64 * lanes).unwrap();
        let mut acc = Vec::new();
        go(input, &mut buf, &mut Vec::new(), &mut acc);
        acc
    }

    #[test]
    fn three_lanes_cannot_sort_four_decreasing() {
        let outputs = reachable_outputs(&[4, 3, 2, 1], 3);
        assert!(!outputs.is_empty());
        let best = outputs.iter().map(|o| lds(o)).min().unwrap();
        assert_eq!(best, 2);
        assert!(outputs.contains(&vec![2, 1, 3, 4]));
        assert!(!outputs.contains(&vec![1, 2, 3, 4]));
        // with four lanes it becomes sortable
        assert!(reachable_outputs(&[4, 3, 2, 1], 4).contains(&vec![1, 2, 3, 4]));
    }

    #[derive(Clone, Debug)]
    enum Op {
        Enq(usize),
        Deq(usize),
        Lock(usize, bool),
        Block(usize, bool),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (0usize..4).prop_map(Op::Enq),
            3 => (0usize..4).prop_map(Op::Deq),
            1 => (0usize..4, any::<bool>()).prop_map(|(l, b)| Op::Lock(l, b)),
            1 => (0usize..4, any::<bool>()).prop_map(|(l, b)| Op::Block(l, b)),
        ]
    }

    proptest! {
        #[test]
        fn conservation_and_lane_order(ops in proptest::collection::vec(op(), 0..200)) {
            let mut b: LaneBuffer<u32> = LaneBuffer::new(4, 3, 10).unwrap();
            let mut next = 0u32;
            let mut entered: Vec<(u32, usize)> = Vec::new();
            let mut left: Vec<u32> = Vec::new();
            for op in ops {
                match op {
                    Op::Enq(l) => {
                        if b.enqueue(next, l).is_ok() {
                            entered.push((next, l));
                            next += 1;
                        }
                    }
                    Op::Deq(l) => {
                        if let Ok(x) = b.dequeue(l) {
                            left.push(x);
                        }
                    }
                    Op::Lock(l, v) => b.set_locked(l, v).unwrap(),
                    Op::Block(l, v) => b.set_blocked(l, v).unwrap(),
                }
                prop_assert!(b.occupancy() <= b.total_capacity());
                for i in 0..b.lane_count() {
                    prop_assert!(b.lane(i).len() <= b.lane_capacity(i));
                }
            }
            prop_assert_eq!(entered.len(), left.len() + b.occupancy());
            // per-lane order: cars of one lane leave in entry order
            for lane in 0..4 {
                let lane_cars: Vec<u32> = entered.iter().filter(|(_, l)| *l == lane).map(|(c, _)| *c).collect();
                let order_out: Vec<u32> = left.iter().copied().filter(|c| lane_cars.contains(c)).collect();
                prop_assert_eq!(&lane_cars[..order_out.len()], &order_out[..]);
            }
        }
    }
}
