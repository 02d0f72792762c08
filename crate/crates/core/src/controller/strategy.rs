use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Color-priority rule applied as the third substitution filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "strategy", content = "k", rename_all = "snake_case")]
pub enum SubstitutionStrategy {
    /// Skip the color filter.
    None,
    /// Keep the most frequent color in the compatible pool.
    Popularity,
    /// Most recent of the last `k` colors present; otherwise popularity.
    LastKRecency(usize),
    /// Most recent of the last `k` colors present; otherwise all colors tie.
    LastKRanked(usize),
    /// All of the last `k` colors tie; skipped when none is present.
    LastKEqual(usize),
}

impl Default for SubstitutionStrategy {
    fn default() -> Self {
        SubstitutionStrategy::LastKEqual(3)
    }
}

impl SubstitutionStrategy {
    /// Builds a strategy from its config name and `k`. `last_k_*` with `k = 0` degrades to `None`.
    pub fn from_name(name: &str, k: usize) -> Result<SubstitutionStrategy, String> {
        let s = match name {
            "none" => SubstitutionStrategy::None,
            "popularity" => SubstitutionStrategy::Popularity,
            "last_k_recency" => SubstitutionStrategy::LastKRecency(k),
            "last_k_ranked" => SubstitutionStrategy::LastKRanked(k),
            "last_k_equal" => SubstitutionStrategy::LastKEqual(k),
            other => return Err(format!("unknown strategy {other:?}")),
        };
        Ok(s.normalized())
    }

    pub fn name(&self) -> &'static str {
        match self {
            SubstitutionStrategy::None => "none",
            SubstitutionStrategy::Popularity => "popularity",
            SubstitutionStrategy::LastKRecency(_) => "last_k_recency",
            SubstitutionStrategy::LastKRanked(_) => "last_k_ranked",
            SubstitutionStrategy::LastKEqual(_) => "last_k_equal",
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            SubstitutionStrategy::LastKRecency(k)
            | SubstitutionStrategy::LastKRanked(k)
            | SubstitutionStrategy::LastKEqual(k) => k,
            _ => 0,
        }
    }

    fn normalized(self) -> SubstitutionStrategy {
        match self {
            SubstitutionStrategy::LastKEqual(0) | SubstitutionStrategy::LastKRanked(0) => {
                SubstitutionStrategy::None
            }
            SubstitutionStrategy::LastKRecency(0) => SubstitutionStrategy::Popularity,
            s => s,
        }
    }

    /// Colors kept by the filter, given the colors present among the
    /// candidates, the recency list (most recent first) and a popularity count.
    pub fn retain_colors(
        &self,
        present: &[u16],
        recent: &[u16],
        popularity: impl Fn(u16) -> usize,
    ) -> Vec<u16> {
        let last_k = |k: usize| &recent[..k.min(recent.len())];
        let most_recent_present =
            |k: usize| last_k(k).iter().copied().find(|c| present.contains(c));
        match *self {
            SubstitutionStrategy::None => present.to_vec(),
            SubstitutionStrategy::Popularity => most_popular(present, popularity),
            SubstitutionStrategy::LastKEqual(k) => {
                let kept: Vec<u16> = present
                    .iter()
                    .copied()
                    .filter(|c| last_k(k).contains(c))
                    .collect();
                if kept.is_empty() {
                    present.to_vec()
                } else {
                    kept
                }
            }
            SubstitutionStrategy::LastKRanked(k) => match most_recent_present(k) {
                Some(c) => vec![c],
                None => present.to_vec(),
            },
            SubstitutionStrategy::LastKRecency(k) => match most_recent_present(k) {
                Some(c) => vec![c],
                None => most_popular(present, popularity),
            },
        }
    }
}

pub(crate) fn most_popular(present: &[u16], popularity: impl Fn(u16) -> usize) -> Vec<u16> {
    let counts: Vec<(u16, usize)> = present.iter().map(|&c| (c, popularity(c))).collect();
    let best = counts.iter().map(|&(_, n)| n).max().unwrap_or(0);
    counts
        .into_iter()
        .filter(|&(_, n)| n == best)
        .map(|(c, _)| c)
        .collect()
}

impl fmt::Display for SubstitutionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubstitutionStrategy::None | SubstitutionStrategy::Popularity => {
                f.write_str(self.name())
            }
            s => write!(f, "{}(k={})", s.name(), s.k()),
        }
    }
}

impl FromStr for SubstitutionStrategy {
    type Err = String;

    /// Accepts `name` or `name:k`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((name, k)) => {
                let k = k.parse().map_err(|_| format!("bad k in {s:?}"))?;
                SubstitutionStrategy::from_name(name, k)
            }
            None => SubstitutionStrategy::from_name(s, 3),
        }
    }
}
