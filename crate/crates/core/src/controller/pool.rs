//! Unassigned orders indexed for the substitution filter chain:
//! body type -> constraint signature -> due date -> (all | per color) -> blend.
//!
//! [`Reservations`] overlays virtual consumption on a shared pool so the
//! enqueue lookahead never mutates (or clones) the index.

use std::collections::{BTreeMap, BTreeSet};

use super::catalog::{CompiledCatalog, OrderIdx, SigIdx};
use crate::domain::Day;

type Key = (u64, OrderIdx);

#[derive(Clone, Debug)]
pub(crate) struct DueBucket {
    pub all: BTreeSet<Key>,
    pub by_color: Vec<BTreeSet<Key>>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct SigGroup {
    pub by_due: BTreeMap<Day, DueBucket>,
}

#[derive(Clone, Debug)]
pub(crate) struct BodyPool {
    pub groups: BTreeMap<SigIdx, SigGroup>,
    pub color_counts: Vec<usize>,
    pub len: usize,
}

#[derive(Clone, Debug)]
pub struct OrderPool {
    available: Vec<bool>,
    len: usize,
    pub(crate) bodies: Vec<BodyPool>,
    n_colors: usize,
}

impl OrderPool {
    pub fn empty(catalog: &CompiledCatalog) -> OrderPool {
        OrderPool {
            available: vec![false; catalog.order_count()],
            len: 0,
            bodies: (0..catalog.body_count())
                .map(|_| BodyPool {
                    groups: BTreeMap::new(),
                    color_counts: vec![0; catalog.color_count()],
                    len: 0,
                })
                .collect(),
            n_colors: catalog.color_count(),
        }
    }

    /// Every catalog order, unassigned.
    pub fn full(catalog: &CompiledCatalog) -> OrderPool {
        let mut pool = OrderPool::empty(catalog);
        for i in 0..catalog.order_count() {
            pool.insert(catalog, i as OrderIdx);
        }
        pool
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, idx: OrderIdx) -> bool {
        self.available[idx as usize]
    }

    pub fn body_len(&self, body: u16) -> usize {
        self.bodies[body as usize].len
    }

    pub fn color_count(&self, body: u16, color: u16) -> usize {
        self.bodies[body as usize].color_counts[color as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = OrderIdx> + '_ {
        self.available
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i as OrderIdx)
    }

    pub fn insert(&mut self, catalog: &CompiledCatalog, idx: OrderIdx) -> bool {
        if self.available[idx as usize] {
            return false;
        }
        let m = *catalog.meta(idx);
        let n_colors = self.n_colors;
        let body = &mut self.bodies[m.body as usize];
        let bucket = body
            .groups
            .entry(m.sig)
            .or_default()
            .by_due
            .entry(m.due)
            .or_insert_with(|| DueBucket {
                all: BTreeSet::new(),
                by_color: vec![BTreeSet::new(); n_colors],
            });
        bucket.all.insert((m.blend, idx));
        bucket.by_color[m.color as usize].insert((m.blend, idx));
        body.color_counts[m.color as usize] += 1;
        body.len += 1;
        self.available[idx as usize] = true;
        self.len += 1;
        true
    }

    pub fn remove(&mut self, catalog: &CompiledCatalog, idx: OrderIdx) -> bool {
        if !self.available[idx as usize] {
            return false;
        }
        let m = *catalog.meta(idx);
        let body = &mut self.bodies[m.body as usize];
        let group = body.groups.get_mut(&m.sig).expect("indexed");
        let bucket = group.by_due.get_mut(&m.due).expect("indexed");
        bucket.all.remove(&(m.blend, idx));
        bucket.by_color[m.color as usize].remove(&(m.blend, idx));
        if bucket.all.is_empty() {
            group.by_due.remove(&m.due);
            if group.by_due.is_empty() {
                body.groups.remove(&m.sig);
            }
        }
        body.color_counts[m.color as usize] -= 1;
        body.len -= 1;
        self.available[idx as usize] = false;
        self.len -= 1;
        true
    }
}

/// Orders virtually consumed during a lookahead.
#[derive(Clone, Debug, Default)]
pub struct Reservations {
    bits: Vec<u64>,
    count: usize,
    /// Reserved orders per (body, color), flattened.
    colors: Vec<u32>,
    n_colors: usize,
}

impl Reservations {
    pub fn new(catalog: &CompiledCatalog) -> Reservations {
        Reservations {
            bits: vec![0; catalog.order_count().div_ceil(64)],
            count: 0,
            colors: vec![0; catalog.body_count() * catalog.color_count()],
            n_colors: catalog.color_count(),
        }
    }

    pub fn none() -> Reservations {
        Reservations::default()
    }

    #[inline]
    pub fn contains(&self, idx: OrderIdx) -> bool {
        self.count > 0 && self.bits[idx as usize / 64] & (1 << (idx % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn reserve(&mut self, catalog: &CompiledCatalog, idx: OrderIdx) {
        if self.bits.is_empty() {
            *self = Reservations::new(catalog);
        }
        let word = &mut self.bits[idx as usize / 64];
        let bit = 1 << (idx % 64);
        if *word & bit == 0 {
            *word |= bit;
            self.count += 1;
            let m = catalog.meta(idx);
            self.colors[m.body as usize * self.n_colors + m.color as usize] += 1;
        }
    }

    pub(crate) fn color_count(&self, body: u16, color: u16) -> usize {
        if self.count == 0 {
            0
        } else {
            self.colors[body as usize * self.n_colors + color as usize] as usize
        }
    }
}

/// Lowest-blend key of `set` that is not reserved.
#[inline]
pub(crate) fn first_available(set: &BTreeSet<Key>, res: &Reservations) -> Option<Key> {
    if res.is_empty() {
        set.first().copied()
    } else {
        set.iter().find(|(_, i)| !res.contains(*i)).copied()
    }
}
