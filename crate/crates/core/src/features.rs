//! Candidate features, state vectors, and feature/reward correlation.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enumerate::PartitionerCandidate;

pub const FEATURE_COUNT: usize = 8;
pub const ENV_FEATURE_COUNT: usize = 5;
pub const DEFAULT_TOP_K: usize = 3;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "frequency",
    "distance",
    "recency",
    "complexity",
    "selectivity",
    "key_distribution",
    "num_copartitioned",
    "size_copartitioned",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples, got {0}")]
    TooShort(usize),
    #[error("series has zero variance")]
    DegenerateVariance,
    #[error("shared candidate has no contributing queries")]
    NoQueries,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub frequency: f64,
    pub distance: f64,
    pub recency: f64,
    pub complexity: f64,
    pub selectivity: f64,
    pub key_distribution: f64,
    pub num_copartitioned: f64,
    pub size_copartitioned: f64,
}

impl CandidateFeatures {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.frequency,
            self.distance,
            self.recency,
            self.complexity,
            self.selectivity,
            self.key_distribution,
            self.num_copartitioned,
            self.size_copartitioned,
        ]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        CandidateFeatures {
            frequency: a[0],
            distance: a[1],
            recency: a[2],
            complexity: a[3],
            selectivity: a[4],
            key_distribution: a[5],
            num_copartitioned: a[6],
            size_copartitioned: a[7],
        }
    }

    /// Negative values raise to 0; selectivity is capped at 1.
    pub fn clamped(self) -> Self {
        let mut a = self.to_array().map(|v| if v.is_nan() { 0.0 } else { v.max(0.0) });
        a[4] = a[4].min(1.0);
        CandidateFeatures::from_array(a)
    }

    pub fn get(&self, name: &str) -> Result<f64, FeatureError> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.to_array()[i])
            .ok_or_else(|| FeatureError::UnknownFeature(name.to_string()))
    }
}

/// Node count of the longest root-to-leaf path of the candidate's subgraph.
pub fn complexity(candidate: &PartitionerCandidate) -> usize {
    let g = candidate.subgraph.as_graph();
    let (order, _) = g.topological_order();
    let mut longest = std::collections::BTreeMap::new();
    for id in order {
        let best_parent = g
            .parents(id)
            .iter()
            .filter_map(|(p, _)| longest.get(p).copied())
            .max();
        let len = match best_parent {
            Some(l) => l + 1,
            None if id == candidate.subgraph.root() => 1,
            None => continue,
        };
        longest.insert(id, len);
    }
    longest
        .get(&candidate.subgraph.leaf())
        .copied()
        .unwrap_or(0)
}

/// Per-query statistics of one candidate, before combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub distance: f64,
    pub frequency: f64,
    pub recency: f64,
    pub selectivity: f64,
    pub key_distribution: f64,
}

/// Combines the statistics of a candidate shared by several queries: mean of
/// distance, frequency and recency; largest selectivity; smallest distinct-key
/// count. Co-partitioning features are supplied by the caller.
pub fn combine_shared(
    per_query: &[QueryStats],
    complexity: f64,
    num_copartitioned: f64,
    size_copartitioned: f64,
) -> Result<CandidateFeatures, FeatureError> {
    if per_query.is_empty() {
        return Err(FeatureError::NoQueries);
    }
    let n = per_query.len() as f64;
    let mean = |f: fn(&QueryStats) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    Ok(CandidateFeatures {
        distance: mean(|q| q.distance),
        frequency: mean(|q| q.frequency),
        recency: mean(|q| q.recency),
        complexity,
        selectivity: per_query
            .iter()
            .map(|q| q.selectivity)
            .fold(f64::NEG_INFINITY, f64::max),
        key_distribution: per_query
            .iter()
            .map(|q| q.key_distribution)
            .fold(f64::INFINITY, f64::min),
        num_copartitioned,
        size_copartitioned,
    }
    .clamped())
}

/// Cluster-side part of the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvFeatures {
    pub dataset_bytes: f64,
    pub workers: f64,
    pub cores: f64,
    pub memory: f64,
    pub disk: f64,
}

impl EnvFeatures {
    pub fn to_array(&self) -> [f64; ENV_FEATURE_COUNT] {
        [
            self.dataset_bytes,
            self.workers,
            self.cores,
            self.memory,
            self.disk,
        ]
    }
}

/// Min-max bounds for every state entry. Values outside clamp to [0, 1];
/// a feature whose bounds coincide maps to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub lo: [f64; FEATURE_COUNT],
    pub hi: [f64; FEATURE_COUNT],
    pub env_lo: [f64; ENV_FEATURE_COUNT],
    pub env_hi: [f64; ENV_FEATURE_COUNT],
}

pub fn min_max(value: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.5;
    }
    ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
}

impl FeatureWindow {
    /// Bounds from zero up to the given maxima.
    pub fn from_maxima(hi: [f64; FEATURE_COUNT], env_hi: [f64; ENV_FEATURE_COUNT]) -> Self {
        FeatureWindow {
            lo: [0.0; FEATURE_COUNT],
            hi,
            env_lo: [0.0; ENV_FEATURE_COUNT],
            env_hi,
        }
    }

    /// Tightest bounds covering the observations.
    pub fn from_observations<'a>(
        features: impl IntoIterator<Item = &'a CandidateFeatures>,
        envs: impl IntoIterator<Item = &'a EnvFeatures>,
    ) -> Self {
        let mut w = FeatureWindow {
            lo: [f64::INFINITY; FEATURE_COUNT],
            hi: [f64::NEG_INFINITY; FEATURE_COUNT],
            env_lo: [f64::INFINITY; ENV_FEATURE_COUNT],
            env_hi: [f64::NEG_INFINITY; ENV_FEATURE_COUNT],
        };
        for f in features {
            for (i, v) in f.to_array().into_iter().enumerate() {
                w.lo[i] = w.lo[i].min(v);
                w.hi[i] = w.hi[i].max(v);
            }
        }
        for e in envs {
            for (i, v) in e.to_array().into_iter().enumerate() {
                w.env_lo[i] = w.env_lo[i].min(v);
                w.env_hi[i] = w.env_hi[i].max(v);
            }
        }
        for (lo, hi) in w
            .lo
            .iter_mut()
            .zip(w.hi.iter_mut())
            .chain(w.env_lo.iter_mut().zip(w.env_hi.iter_mut()))
        {
            if lo > hi {
                *lo = 0.0;
                *hi = 0.0;
            }
        }
        w
    }

    pub fn normalize(&self, f: &CandidateFeatures) -> [f64; FEATURE_COUNT] {
        let a = f.to_array();
        std::array::from_fn(|i| min_max(a[i], self.lo[i], self.hi[i]))
    }

    pub fn normalize_env(&self, e: &EnvFeatures) -> [f64; ENV_FEATURE_COUNT] {
        let a = e.to_array();
        std::array::from_fn(|i| min_max(a[i], self.env_lo[i], self.env_hi[i]))
    }
}

/// One rankable candidate: a stable key (its signature and strategy) plus features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlateEntry {
    pub key: String,
    pub features: CandidateFeatures,
}

/// Ranking: frequency desc, num_copartitioned desc, recency asc, key asc.
pub fn rank_order(a: &SlateEntry, b: &SlateEntry) -> Ordering {
    let fa = &a.features;
    let fb = &b.features;
    fb.frequency
        .total_cmp(&fa.frequency)
        .then(fb.num_copartitioned.total_cmp(&fa.num_copartitioned))
        .then(fa.recency.total_cmp(&fb.recency))
        .then_with(|| a.key.cmp(&b.key))
}

/// Indices of the top `k` entries under [`rank_order`].
pub fn top_k(entries: &[SlateEntry], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&i, &j| rank_order(&entries[i], &entries[j]));
    idx.truncate(k);
    idx
}

/// Fixed-length policy input: `k` normalized candidate blocks then the
/// normalized environment block. `slots[i]` is the entry index in slot `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub slots: Vec<Option<usize>>,
}

impl StateVector {
    pub fn len_for(k: usize) -> usize {
        k * FEATURE_COUNT + ENV_FEATURE_COUNT
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    /// Actions are the `k` slots plus round-robin, which is always last.
    pub fn action_count(&self) -> usize {
        self.k() + 1
    }

    pub fn round_robin_action(&self) -> usize {
        self.k()
    }
}

pub fn build_state(
    entries: &[SlateEntry],
    env: &EnvFeatures,
    k: usize,
    window: &FeatureWindow,
) -> StateVector {
    let chosen = top_k(entries, k);
    let mut values = vec![0.0; StateVector::len_for(k)];
    let mut slots = vec![None; k];
    for (slot, &i) in chosen.iter().enumerate() {
        let block = window.normalize(&entries[i].features);
        values[slot * FEATURE_COUNT..(slot + 1) * FEATURE_COUNT].copy_from_slice(&block);
        slots[slot] = Some(i);
    }
    values[k * FEATURE_COUNT..].copy_from_slice(&window.normalize_env(env));
    StateVector { values, slots }
}

/// Sample Pearson correlation, computed in one pass over co-moments.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, FeatureError> {
    if xs.len() != ys.len() {
        return Err(FeatureError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(FeatureError::TooShort(xs.len()));
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(FeatureError::DegenerateVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    // Perfectly linear data lands a few ulps short of ±1 after rounding.
    if 1.0 - r.abs() <= 8.0 * f64::EPSILON {
        return Ok(r.signum());
    }
    Ok(r.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{candidates_in, PartitionerCandidate, Strategy, TwoTerminalDag};
    use crate::fixtures;
    use crate::ir::{IrEdge, IrNode, NodeKind};

    fn feat(freq: f64, copart: f64, rec: f64) -> CandidateFeatures {
        CandidateFeatures {
            frequency: freq,
            num_copartitioned: copart,
            recency: rec,
            selectivity: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn complexity_cases() {
        let g = fixtures::comments_author_join_ir();
        let c = candidates_in(&g, "authors").unwrap().remove(0);
        assert_eq!(c.subgraph.nodes().len(), 3);
        assert_eq!(complexity(&c), 3);

        let reddit = fixtures::reddit_features_ir();
        let comments = candidates_in(&reddit, "comments").unwrap().remove(0);
        assert_eq!(complexity(&comments), 4);

        // Arms of 3 and 4 nodes between root and leaf.
        let nodes = (0..6)
            .map(|i| {
                let kind = if i == 0 { NodeKind::Scan } else { NodeKind::Apply };
                IrNode::new(i, kind, format!("n{i}"), "T", "T")
            })
            .collect();
        let edges = vec![
            IrEdge::data(0, 1),
            IrEdge::data(1, 5),
            IrEdge::data(0, 2),
            IrEdge::data(2, 3),
            IrEdge::data(3, 4),
            IrEdge::data(4, 5),
        ];
        let dag = TwoTerminalDag::new(nodes, edges, 0, 5);
        let c = PartitionerCandidate::new(dag, "D", "x", Strategy::Hash).unwrap();
        assert_eq!(complexity(&c), 5);
    }

    #[test]
    fn shared_candidate_rule() {
        let qa = QueryStats {
            distance: 10.0,
            frequency: 2.0,
            recency: 5.0,
            selectivity: 0.3,
            key_distribution: 100.0,
        };
        let qb = QueryStats {
            distance: 20.0,
            frequency: 4.0,
            recency: 7.0,
            selectivity: 0.5,
            key_distribution: 50.0,
        };
        let f = combine_shared(&[qa, qb], 4.0, 1.0, 10.0).unwrap();
        assert_eq!(
            (f.distance, f.frequency, f.recency, f.selectivity, f.key_distribution),
            (15.0, 3.0, 6.0, 0.5, 50.0)
        );
        assert_eq!((f.complexity, f.num_copartitioned, f.size_copartitioned), (4.0, 1.0, 10.0));

        let solo = combine_shared(&[qa], 2.0, 0.0, 0.0).unwrap();
        assert_eq!(
            (solo.distance, solo.frequency, solo.recency, solo.selectivity, solo.key_distribution),
            (10.0, 2.0, 5.0, 0.3, 100.0)
        );
        assert_eq!(combine_shared(&[], 0.0, 0.0, 0.0), Err(FeatureError::NoQueries));
    }

    #[test]
    fn three_query_combination() {
        let mk = |d, f, r, s, k| QueryStats {
            distance: d,
            frequency: f,
            recency: r,
            selectivity: s,
            key_distribution: k,
        };
        let f = combine_shared(
            &[mk(3.0, 1.0, 9.0, 0.2, 7.0), mk(6.0, 2.0, 3.0, 0.9, 4.0), mk(9.0, 6.0, 6.0, 0.4, 12.0)],
            1.0,
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!((f.distance, f.frequency, f.recency), (6.0, 3.0, 6.0));
        assert_eq!((f.selectivity, f.key_distribution), (0.9, 4.0));
    }

    #[test]
    fn selectivity_is_clamped() {
        let f = CandidateFeatures {
            selectivity: 3.0,
            frequency: -1.0,
            ..Default::default()
        }
        .clamped();
        assert_eq!((f.selectivity, f.frequency), (1.0, 0.0));
    }

    fn env() -> EnvFeatures {
        EnvFeatures {
            dataset_bytes: 10.0,
            workers: 4.0,
            cores: 8.0,
            memory: 64.0,
            disk: 512.0,
        }
    }

    fn window() -> FeatureWindow {
        FeatureWindow::from_maxima([10.0; 8], [100.0, 8.0, 16.0, 128.0, 1024.0])
    }

    #[test]
    fn zero_candidates_state() {
        let s = build_state(&[], &env(), 3, &window());
        assert_eq!(s.values.len(), 29);
        assert!(s.values[..24].iter().all(|&v| v == 0.0));
        assert_eq!(&s.values[24..], &[0.1, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(s.slots, vec![None, None, None]);
        assert_eq!(s.action_count(), 4);
    }

    #[test]
    fn top_three_of_five() {
        let entries: Vec<SlateEntry> = [1.0, 5.0, 3.0, 4.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &f)| SlateEntry {
                key: format!("c{i}"),
                features: feat(f, 0.0, 0.0),
            })
            .collect();
        let s = build_state(&entries, &env(), 3, &window());
        assert_eq!(s.slots, vec![Some(1), Some(3), Some(2)]);
        assert_eq!(s.values[0], 0.5);
        assert_eq!(s.values[8], 0.4);
        assert_eq!(s.values[16], 0.3);
    }

    #[test]
    fn ranking_tie_breaks() {
        let e = |k: &str, f: CandidateFeatures| SlateEntry { key: k.into(), features: f };
        let entries = vec![
            e("b", feat(2.0, 1.0, 5.0)),
            e("a", feat(2.0, 1.0, 5.0)),
            e("c", feat(2.0, 1.0, 1.0)),
            e("d", feat(2.0, 3.0, 9.0)),
        ];
        assert_eq!(top_k(&entries, 4), vec![3, 2, 1, 0]);
    }

    #[test]
    fn degenerate_window_is_half() {
        let w = FeatureWindow::from_observations(&[feat(2.0, 0.0, 0.0), feat(2.0, 0.0, 0.0)], &[env()]);
        let n = w.normalize(&feat(2.0, 0.0, 0.0));
        assert_eq!(n[0], 0.5);
        assert_eq!(min_max(3.0, 1.0, 1.0), 0.5);
        assert_eq!(min_max(5.0, 0.0, 2.0), 1.0);
    }

    #[test]
    fn pearson_exact_lines() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let up: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &up).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &down).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&xs, &[1.0; 10]), Err(FeatureError::DegenerateVariance));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(FeatureError::TooShort(1)));
        assert_eq!(pearson(&xs, &xs[..3]), Err(FeatureError::LengthMismatch(10, 3)));
    }
}
