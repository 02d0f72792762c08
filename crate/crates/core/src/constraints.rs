//! Weighted sequencing rules guarded by CNF formulas over order features.
//!
//! Two rule kinds exist. A window rule `m:n` is violated by an order when the
//! `n - 1` most recently emitted orders already contain at least `m` orders
//! matching the rule. A time rule `m:t:s` partitions time into windows
//! `[s + l*t, s + (l+1)*t)` and is violated when the window containing the
//! decision time already holds at least `m` matching emissions.
//!
//! [`EmissionHistory`] keeps incremental per-rule counters so a violation
//! query costs `O(|C_o|)` instead of a history rescan.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{ColorId, Order, ScenarioCatalog, Timestamp};

/// Non-negative rule weight with six decimal digits of exact precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(u64);

impl Weight {
    pub const ZERO: Weight = Weight(0);
    const SCALE: u64 = 1_000_000;

    pub fn from_units(units: u64) -> Weight {
        Weight(units * Self::SCALE)
    }

    pub fn from_micros(micros: u64) -> Weight {
        Weight(micros)
    }

    pub fn from_f64(v: f64) -> Option<Weight> {
        if !v.is_finite() || v < 0.0 {
            return None;
        }
        let scaled = (v * Self::SCALE as f64).round();
        (scaled <= u64::MAX as f64).then_some(Weight(scaled as u64))
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, rhs: Weight) {
        self.0 += rhs.0;
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::ZERO, Add::add)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / Self::SCALE;
        let frac = self.0 % Self::SCALE;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let s = format!("{frac:06}");
            write!(f, "{whole}.{}", s.trim_end_matches('0'))
        }
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_multiple_of(Self::SCALE) {
            s.serialize_u64(self.0 / Self::SCALE)
        } else {
            s.serialize_f64(self.to_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Weight::from_f64(v).ok_or_else(|| {
            serde::de::Error::custom(format!("weight must be a non-negative number, got {v}"))
        })
    }
}

/// A feature literal; `neg` selects absence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Literal {
    pub feature: String,
    #[serde(default)]
    pub neg: bool,
}

impl Literal {
    pub fn pos(feature: &str) -> Literal {
        Literal {
            feature: feature.into(),
            neg: false,
        }
    }

    pub fn neg(feature: &str) -> Literal {
        Literal {
            feature: feature.into(),
            neg: true,
        }
    }

    fn holds(&self, features: &BTreeSet<String>) -> bool {
        features.contains(&self.feature) != self.neg
    }
}

/// Conjunction of clauses, each clause a disjunction of literals.
pub type Cnf = Vec<Vec<Literal>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintKind {
    Window {
        m: u32,
        n: u32,
    },
    Time {
        m: u32,
        t_seconds: i64,
        #[serde(with = "crate::domain::rfc3339")]
        s: Timestamp,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub id: String,
    pub weight: Weight,
    #[serde(default)]
    pub cnf: Cnf,
    pub kind: ConstraintKind,
}

impl Constraint {
    /// Structural validity: `1 <= m <= n` for windows, `t > 0` for time rules,
    /// no empty clauses.
    pub fn check(&self) -> Result<(), String> {
        if self.cnf.iter().any(Vec::is_empty) {
            return Err("formula contains an empty clause".into());
        }
        match self.kind {
            ConstraintKind::Window { m, n } => {
                if m == 0 || n == 0 {
                    return Err(format!("window rule {m}:{n} needs positive m and n"));
                }
                if m > n {
                    return Err(format!("window rule {m}:{n} has m > n"));
                }
            }
            ConstraintKind::Time { m, t_seconds, .. } => {
                if m == 0 {
                    return Err("time rule needs positive m".into());
                }
                if t_seconds <= 0 {
                    return Err(format!(
                        "time rule period must be positive, got {t_seconds}s"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn matches(&self, features: &BTreeSet<String>) -> bool {
        matches(features, &self.cnf)
    }
}

/// True iff every clause has a literal satisfied by `features`. The empty formula matches everything.
pub fn matches(features: &BTreeSet<String>, formula: &[Vec<Literal>]) -> bool {
    formula
        .iter()
        .all(|clause| clause.iter().any(|lit| lit.holds(features)))
}

/// Ids of the catalog constraints whose formula the order satisfies.
pub fn constraints_of(order: &Order, catalog: &ScenarioCatalog) -> BTreeSet<String> {
    catalog
        .constraints
        .iter()
        .filter(|c| c.matches(&order.features))
        .map(|c| c.id.clone())
        .collect()
}

/// Set of constraint indices into a [`ConstraintTable`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintSet {
    words: Box<[u64]>,
}

impl ConstraintSet {
    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> ConstraintSet {
        let mut words = vec![0u64; len.div_ceil(64)];
        for i in indices {
            words[i / 64] |= 1 << (i % 64);
        }
        ConstraintSet {
            words: words.into_boxed_slice(),
        }
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.words
            .get(idx / 64)
            .is_some_and(|w| w & (1 << (idx % 64)) != 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    wi * 64 + b
                })
            })
        })
    }
}

/// Catalog constraints compiled for fast matching and counting.
#[derive(Clone, Debug, Default)]
pub struct ConstraintTable {
    constraints: Vec<Constraint>,
    window: Vec<usize>,
    time: Vec<usize>,
    /// `max(n)` over window rules, 0 without window rules.
    max_window: usize,
}

impl ConstraintTable {
    pub fn new(constraints: Vec<Constraint>) -> ConstraintTable {
        let mut window = Vec::new();
        let mut time = Vec::new();
        let mut max_window = 0;
        for (i, c) in constraints.iter().enumerate() {
            match c.kind {
                ConstraintKind::Window { n, .. } => {
                    window.push(i);
                    max_window = max_window.max(n as usize);
                }
                ConstraintKind::Time { .. } => time.push(i),
            }
        }
        ConstraintTable {
            constraints,
            window,
            time,
            max_window,
        }
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Constraint {
        &self.constraints[idx]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// The order's `C_o` as an index set.
    pub fn matching(&self, features: &BTreeSet<String>) -> ConstraintSet {
        ConstraintSet::from_indices(
            self.constraints.len(),
            self.constraints
                .iter()
                .enumerate()
                .filter(|(_, c)| c.matches(features))
                .map(|(i, _)| i),
        )
    }

    pub fn ids<'a>(&'a self, set: &'a ConstraintSet) -> impl Iterator<Item = &'a str> + 'a {
        set.iter().map(|i| self.constraints[i].id.as_str())
    }
}

fn time_window(t: Timestamp, period: i64, start: Timestamp) -> i64 {
    (t.0 - start.0).div_euclid(period)
}

/// Incremental per-rule counters over an emission stream (most recent first).
///
/// Cloning is cheap relative to the history: only the last `max(n)` matched
/// sets and one count per rule are carried.
#[derive(Clone, Debug)]
pub struct ViolationCounter {
    table: Arc<ConstraintTable>,
    recent: VecDeque<Arc<ConstraintSet>>,
    /// Window rules: matches among the first `n - 1` emissions.
    window_counts: Vec<u32>,
    /// Time rules: matches per time-window index, windows before the latest pruned.
    time_counts: Vec<BTreeMap<i64, u32>>,
}

impl ViolationCounter {
    pub fn new(table: Arc<ConstraintTable>) -> ViolationCounter {
        let n = table.len();
        ViolationCounter {
            recent: VecDeque::with_capacity(table.max_window + 1),
            window_counts: vec![0; n],
            time_counts: vec![BTreeMap::new(); n],
            table,
        }
    }

    pub fn table(&self) -> &Arc<ConstraintTable> {
        &self.table
    }

    /// Records an emission at `left_at`. Emission times must be non-decreasing.
    pub fn push(&mut self, matched: &Arc<ConstraintSet>, left_at: Timestamp) {
        let table = &*self.table;
        if !table.window.is_empty() {
            self.recent.push_front(Arc::clone(matched));
            for &c in &table.window {
                let ConstraintKind::Window { n, .. } = table.constraints[c].kind else {
                    unreachable!()
                };
                if matched.contains(c) {
                    self.window_counts[c] += 1;
                }
                // the entry now at depth n-1 has left the n-1 window
                if let Some(out) = self.recent.get(n as usize - 1) {
                    if out.contains(c) {
                        self.window_counts[c] -= 1;
                    }
                }
            }
            self.recent.truncate(table.max_window.saturating_sub(1));
        }
        for &c in &table.time {
            let ConstraintKind::Time { t_seconds, s, .. } = table.constraints[c].kind else {
                unreachable!()
            };
            let l = time_window(left_at, t_seconds, s);
            let counts = &mut self.time_counts[c];
            if matched.contains(c) {
                *counts.entry(l).or_insert(0) += 1;
            }
            while let Some((&first, _)) = counts.first_key_value() {
                if first < l {
                    counts.pop_first();
                } else {
                    break;
                }
            }
        }
    }

    /// `v_o` for an order with constraint set `c_o` decided at `t_prime`.
    ///
    /// `t_prime` must not precede the last pushed emission's time window.
    pub fn weight(&self, c_o: &ConstraintSet, t_prime: Timestamp) -> Weight {
        let mut v = Weight::ZERO;
        for c in c_o.iter() {
            let rule = &self.table.constraints[c];
            let violated = match rule.kind {
                ConstraintKind::Window { m, .. } => self.window_counts[c] >= m,
                ConstraintKind::Time { m, t_seconds, s } => {
                    let l = time_window(t_prime, t_seconds, s);
                    self.time_counts[c].get(&l).copied().unwrap_or(0) >= m
                }
            };
            if violated {
                v += rule.weight;
            }
        }
        v
    }
}

/// One order that left the buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmissionRecord {
    pub order_id: Arc<str>,
    pub color: ColorId,
    pub blend_number: u64,
    pub matched: Arc<ConstraintSet>,
    pub left_at: Timestamp,
}

/// Emitted orders, most recent first, pruned to what rule evaluation needs:
/// the last `max(n) - 1` records plus everything in the current window of
/// each time rule.
#[derive(Clone, Debug)]
pub struct EmissionHistory {
    records: VecDeque<EmissionRecord>,
    counter: ViolationCounter,
    emitted: u64,
}

impl EmissionHistory {
    pub fn new(table: Arc<ConstraintTable>) -> EmissionHistory {
        EmissionHistory {
            records: VecDeque::new(),
            counter: ViolationCounter::new(table),
            emitted: 0,
        }
    }

    pub fn counter(&self) -> &ViolationCounter {
        &self.counter
    }

    pub fn records(&self) -> impl Iterator<Item = &EmissionRecord> {
        self.records.iter()
    }

    pub fn latest(&self) -> Option<&EmissionRecord> {
        self.records.front()
    }

    /// Total emissions ever pushed, including pruned ones.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn push(&mut self, record: EmissionRecord) {
        debug_assert!(
            self.records
                .front()
                .is_none_or(|r| r.left_at <= record.left_at),
            "emission times must be non-decreasing"
        );
        self.counter.push(&record.matched, record.left_at);
        let now = record.left_at;
        self.records.push_front(record);
        self.emitted += 1;
        self.prune(now);
    }

    fn prune(&mut self, now: Timestamp) {
        let table = &self.counter.table;
        let keep_recent = table.max_window.saturating_sub(1);
        let oldest_window_start = table
            .time
            .iter()
            .map(|&c| match table.constraints[c].kind {
                ConstraintKind::Time { t_seconds, s, .. } => {
                    s.0 + time_window(now, t_seconds, s) * t_seconds
                }
                ConstraintKind::Window { .. } => unreachable!(),
            })
            .min();
        while self.records.len() > keep_recent {
            let back = self.records.back().expect("non-empty");
            match oldest_window_start {
                Some(start) if back.left_at.0 >= start => break,
                _ => {
                    self.records.pop_back();
                }
            }
        }
    }

    pub fn violation_weight(&self, c_o: &ConstraintSet, t_prime: Timestamp) -> Weight {
        self.counter.weight(c_o, t_prime)
    }
}

/// `v_o` of `order` decided at `t_prime` against `history`.
pub fn violation_weight(order: &Order, t_prime: Timestamp, history: &EmissionHistory) -> Weight {
    let c_o = history.counter.table.matching(&order.features);
    history.violation_weight(&c_o, t_prime)
}

/// Sum of per-element violation weights, each element judged against its predecessors.
pub fn sequence_violation_total(
    table: &Arc<ConstraintTable>,
    sequence: &[(&Order, Timestamp)],
) -> Weight {
    let mut counter = ViolationCounter::new(Arc::clone(table));
    let mut total = Weight::ZERO;
    for (order, t) in sequence {
        let c_o = Arc::new(table.matching(&order.features));
        total += counter.weight(&c_o, *t);
        counter.push(&c_o, *t);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BodyType, Day};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feats(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn order(id: &str, features: &[&str]) -> Order {
        Order {
            order_id: id.into(),
            body_type: BodyType::new("wagon"),
            color: "R".into(),
            blend_number: 1,
            due_date: Day(0),
            planned_date: Day(0),
            features: feats(features),
        }
    }

    #[test]
    fn cnf_matching() {
        assert!(matches(
            &feats(&["A", "B"]),
            &[vec![Literal::pos("A")], vec![Literal::pos("B")]]
        ));
        assert!(matches(
            &feats(&["A"]),
            &[
                vec![Literal::pos("B"), Literal::pos("A")],
                vec![Literal::neg("C")]
            ]
        ));
        assert!(!matches(&feats(&["C"]), &[vec![Literal::pos("A")]]));
        assert!(matches(&feats(&[]), &[]));
    }

    #[test]
    fn weight_parsing_and_display() {
        let w: Weight = serde_json::from_str("2.5").unwrap();
        assert_eq!(w.to_string(), "2.5");
        assert_eq!(serde_json::to_string(&Weight::from_units(3)).unwrap(), "3");
        assert!(serde_json::from_str::<Weight>("-1").is_err());
        assert_eq!(
            Weight::from_f64(0.1).unwrap() + Weight::from_f64(0.2).unwrap(),
            Weight::from_f64(0.3).unwrap()
        );
    }

    #[test]
    fn constraint_json_schema() {
        let json = r#"[
            {"id":"tt","weight":2,"cnf":[[{"feature":"A","neg":false}]],"kind":{"window":{"m":1,"n":10}}},
            {"id":"day","weight":1.5,"cnf":[],"kind":{"time":{"m":5,"t_seconds":86400,"s":"2023-05-06T06:00:00Z"}}}
        ]"#;
        let cs: Vec<Constraint> = serde_json::from_str(json).unwrap();
        assert_eq!(cs[0].kind, ConstraintKind::Window { m: 1, n: 10 });
        let back = serde_json::to_string(&cs).unwrap();
        let again: Vec<Constraint> = serde_json::from_str(&back).unwrap();
        assert_eq!(cs, again);
        assert!(back.contains("2023-05-06T06:00:00Z"));
        let bad = r#"{"id":"x","weight":1,"cnf":[],"kind":{"window":{"m":1,"n":2}},"color":"R"}"#;
        assert!(serde_json::from_str::<Constraint>(bad).is_err());
    }

    fn window(id: &str, m: u32, n: u32, w: u64, feature: &str) -> Constraint {
        Constraint {
            id: id.into(),
            weight: Weight::from_units(w),
            cnf: vec![vec![Literal::pos(feature)]],
            kind: ConstraintKind::Window { m, n },
        }
    }

    fn time_rule(id: &str, m: u32, t: i64, s: Timestamp, feature: &str) -> Constraint {
        Constraint {
            id: id.into(),
            weight: Weight::from_units(1),
            cnf: vec![vec![Literal::pos(feature)]],
            kind: ConstraintKind::Time { m, t_seconds: t, s },
        }
    }

    fn record(table: &ConstraintTable, features: &[&str], t: i64) -> EmissionRecord {
        EmissionRecord {
            order_id: Arc::from("x"),
            color: "R".into(),
            blend_number: 0,
            matched: Arc::new(table.matching(&feats(features))),
            left_at: Timestamp(t),
        }
    }

    #[test]
    fn window_rule_counts_first_n_minus_one() {
        let table = Arc::new(ConstraintTable::new(vec![window("c", 1, 3, 2, "X")]));
        let mut h = EmissionHistory::new(Arc::clone(&table));
        // chronological pushes; most recent first afterwards: pos1 match, pos2..4 no, pos5 match
        for f in [&["X"][..], &[], &[], &[], &["X"]] {
            h.push(record(&table, f, 0));
        }
        let o = order("o", &["X"]);
        assert_eq!(
            violation_weight(&o, Timestamp(0), &h),
            Weight::from_units(2)
        );
        assert_eq!(
            violation_weight(&order("p", &[]), Timestamp(0), &h),
            Weight::ZERO
        );
    }

    #[test]
    fn time_rule_window_semantics() {
        // 5:24h starting 6 May 06:00
        let s = Timestamp::parse_rfc3339("2023-05-06T06:00:00Z").unwrap();
        let day = 86_400;
        let table = Arc::new(ConstraintTable::new(vec![time_rule("t", 5, day, s, "X")]));
        let o = order("o", &["X"]);

        let mut h = EmissionHistory::new(Arc::clone(&table));
        for i in 0..6 {
            h.push(record(&table, &["X"], s.0 + 3600 * (i + 1)));
        }
        assert_eq!(
            violation_weight(&o, Timestamp(s.0 + 20 * 3600), &h),
            Weight::from_units(1)
        );

        // three late in window W, three early in W+1
        let mut h = EmissionHistory::new(Arc::clone(&table));
        for i in 0..3 {
            h.push(record(&table, &["X"], s.0 + day - 3600 * (3 - i)));
        }
        for i in 0..3 {
            h.push(record(&table, &["X"], s.0 + day + 600 * i));
        }
        assert_eq!(
            violation_weight(&o, Timestamp(s.0 + day + 7200), &h),
            Weight::ZERO
        );
    }

    #[test]
    fn sequence_totals() {
        let table = Arc::new(ConstraintTable::new(vec![window("c", 1, 2, 1, "X")]));
        assert_eq!(sequence_violation_total(&table, &[]), Weight::ZERO);
        let a = order("a", &["X"]);
        assert_eq!(
            sequence_violation_total(&table, &[(&a, Timestamp(0))]),
            Weight::ZERO
        );
        let seq = [(&a, Timestamp(0)), (&a, Timestamp(1)), (&a, Timestamp(2))];
        assert_eq!(
            sequence_violation_total(&table, &seq),
            brute_force_total(&table, &seq)
        );
        assert_eq!(
            sequence_violation_total(&table, &seq),
            Weight::from_units(2)
        );
    }

    fn brute_force_total(table: &ConstraintTable, seq: &[(&Order, Timestamp)]) -> Weight {
        let mut total = Weight::ZERO;
        for i in 0..seq.len() {
            let history: Vec<(BTreeSet<String>, Timestamp)> = seq[..i]
                .iter()
                .rev()
                .map(|(o, t)| (o.features.clone(), *t))
                .collect();
            total += naive_weight(table.constraints(), &seq[i].0.features, seq[i].1, &history);
        }
        total
    }

    /// Direct rescan: `history` is most recent first.
    fn naive_weight(
        constraints: &[Constraint],
        features: &BTreeSet<String>,
        t_prime: Timestamp,
        history: &[(BTreeSet<String>, Timestamp)],
    ) -> Weight {
        let mut v = Weight::ZERO;
        for c in constraints {
            if !matches(features, &c.cnf) {
                continue;
            }
            let hit = match c.kind {
                ConstraintKind::Window { m, n } => {
                    let k = history
                        .iter()
                        .take(n as usize - 1)
                        .filter(|(f, _)| matches(f, &c.cnf))
                        .count();
                    k >= m as usize
                }
                ConstraintKind::Time { m, t_seconds, s } => {
                    let mut l = 0i64;
                    // find l by stepping, independent of div_euclid
                    while s.0 + l * t_seconds > t_prime.0 {
                        l -= 1;
                    }
                    while s.0 + (l + 1) * t_seconds <= t_prime.0 {
                        l += 1;
                    }
                    let lo = s.0 + l * t_seconds;
                    let hi = lo + t_seconds;
                    let k = history
                        .iter()
                        .filter(|(f, t)| t.0 >= lo && t.0 < hi && matches(f, &c.cnf))
                        .count();
                    k >= m as usize
                }
            };
            if hit {
                v += c.weight;
            }
        }
        v
    }

    const FEATURES: [&str; 4] = ["A", "B", "C", "D"];

    fn random_constraint(rng: &mut ChaCha8Rng, i: usize) -> Constraint {
        let clauses = rng.gen_range(0..3);
        let cnf = (0..clauses)
            .map(|_| {
                (0..rng.gen_range(1..3))
                    .map(|_| Literal {
                        feature: FEATURES[rng.gen_range(0..4)].into(),
                        neg: rng.gen_bool(0.2),
                    })
                    .collect()
            })
            .collect();
        let kind = if rng.gen_bool(0.5) {
            let n = rng.gen_range(1..8);
            ConstraintKind::Window {
                m: rng.gen_range(1..=n),
                n,
            }
        } else {
            ConstraintKind::Time {
                m: rng.gen_range(1..5),
                t_seconds: rng.gen_range(30..600),
                s: Timestamp(rng.gen_range(-1000..1000)),
            }
        };
        Constraint {
            id: format!("c{i}"),
            weight: Weight::from_units(rng.gen_range(0..5)),
            cnf,
            kind,
        }
    }

    fn random_features(rng: &mut ChaCha8Rng) -> BTreeSet<String> {
        FEATURES
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .map(|s| s.to_string())
            .collect()
    }

    /// Returns the number of compared queries.
    fn oracle_scenario(seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let constraints: Vec<Constraint> = (0..rng.gen_range(1..=5))
            .map(|i| random_constraint(&mut rng, i))
            .collect();
        let table = Arc::new(ConstraintTable::new(constraints.clone()));
        let mut h = EmissionHistory::new(Arc::clone(&table));
        let mut full: Vec<(BTreeSet<String>, Timestamp)> = Vec::new();
        let mut t = 0i64;
        let mut compared = 0;
        for _ in 0..rng.gen_range(1..=50) {
            let f = random_features(&mut rng);
            let t_prime = Timestamp(t + rng.gen_range(0..200));
            let expect = naive_weight(&constraints, &f, t_prime, &full);
            let got = h.violation_weight(&table.matching(&f), t_prime);
            assert_eq!(got, expect, "seed {seed}");
            compared += 1;
            t = t_prime.0;
            h.push(EmissionRecord {
                order_id: Arc::from("o"),
                color: "R".into(),
                blend_number: 0,
                matched: Arc::new(table.matching(&f)),
                left_at: Timestamp(t),
            });
            full.insert(0, (f, Timestamp(t)));
        }
        compared
    }

    #[test]
    fn incremental_counters_match_rescan() {
        let compared: usize = (0..200).map(oracle_scenario).sum();
        assert!(compared > 200);
    }

    proptest! {
        #[test]
        fn non_matching_emission_never_changes_weight(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_constraint(&mut rng, 0);
            let table = Arc::new(ConstraintTable::new(vec![c]));
            let mut h = EmissionHistory::new(Arc::clone(&table));
            for i in 0..rng.gen_range(0..10) {
                let f = random_features(&mut rng);
                h.push(EmissionRecord {
                    order_id: Arc::from("o"), color: "R".into(), blend_number: 0,
                    matched: Arc::new(table.matching(&f)), left_at: Timestamp(i),
                });
            }
            let probe = random_features(&mut rng);
            let c_o = table.matching(&probe);
            let t = Timestamp(20);
            let before = h.violation_weight(&c_o, t);
            // an emission matching nothing
            h.push(EmissionRecord {
                order_id: Arc::from("n"), color: "R".into(), blend_number: 0,
                matched: Arc::new(ConstraintSet::from_indices(1, [])), left_at: Timestamp(15),
            });
            let after = h.violation_weight(&c_o, t);
            if let ConstraintKind::Time { .. } = table.get(0).kind {
                prop_assert_eq!(before, after);
            } else {
                // a non-matching entry can push a matching one out of the window
                prop_assert!(after <= before);
            }
        }
    }

    #[test]
    fn history_retention_is_bounded() {
        let table = Arc::new(ConstraintTable::new(vec![window("c", 1, 4, 1, "X")]));
        let mut h = EmissionHistory::new(Arc::clone(&table));
        for i in 0..100 {
            h.push(record(&table, &["X"], i));
        }
        assert_eq!(h.records().count(), 3);
        assert_eq!(h.emitted(), 100);
    }
}
