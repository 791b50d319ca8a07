//! Partitioning creation, reorganization and runtime match consultation.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enumerate::{enumerate_with_sources, PartitionerCandidate, SourcedCandidate, Strategy};
use crate::features::{
    build_state, combine_shared, complexity, CandidateFeatures, EnvFeatures, QueryStats, SlateEntry,
    StateVector,
};
use crate::history::{HistoryError, HistorySnapshot};
use crate::ir::{IrError, IrGraph, NodeId};
use crate::rl::{PolicyModel, RlError};
use crate::signature::match_candidate;
use crate::sim::{PartitionScheme, SimEnvironment};

#[derive(Debug, Error)]
pub enum AdvisorError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error("reorganization needs at least one consumer")]
    NoConsumers,
    #[error("model takes {model_input} inputs and {model_actions} actions; environment uses k = {k}")]
    ModelShape {
        model_input: usize,
        model_actions: usize,
        k: usize,
    },
    #[error("applied scheme {0} needs the candidate it was built from")]
    MissingCandidate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Argmax,
    Sample { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlateItem {
    pub slot: usize,
    pub signature: String,
    pub strategy: Strategy,
    pub sources: Vec<String>,
    pub features: CandidateFeatures,
    pub candidate: PartitionerCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub dataset: String,
    pub action: Option<usize>,
    pub chosen: PartitionScheme,
    pub candidate: Option<PartitionerCandidate>,
    pub distribution: Vec<f64>,
    pub slate: Vec<SlateItem>,
}

impl Recommendation {
    pub fn applied(&self) -> AppliedPartitioning {
        AppliedPartitioning {
            dataset: self.dataset.clone(),
            scheme: self.chosen.clone(),
            candidate: self.candidate.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recommendation serializes")
    }
}

/// A dataset's partitioning as stored: the scheme plus, for keyed schemes,
/// the candidate subgraph defining its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedPartitioning {
    pub dataset: String,
    pub scheme: PartitionScheme,
    #[serde(default)]
    pub candidate: Option<PartitionerCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Local,
    Shuffle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JoinVerdict {
    pub scan: NodeId,
    pub anchor: NodeId,
    pub verdict: Verdict,
}

/// Where per-query statistics come from.
enum StatsSource<'a> {
    History(&'a HistorySnapshot, i64),
    Uniform,
}

fn query_stats(
    source: &StatsSource<'_>,
    ir_id: &str,
    dataset: &str,
    default_keys: f64,
) -> QueryStats {
    match source {
        StatsSource::History(snap, now) => {
            let g = snap.group_stats(ir_id, *now);
            let input = snap.input_stats(ir_id, dataset);
            QueryStats {
                distance: g.distance,
                frequency: g.frequency,
                recency: g.recency,
                selectivity: input.selectivity.unwrap_or(1.0),
                key_distribution: input.distinct_keys.unwrap_or(default_keys),
            }
        }
        StatsSource::Uniform => QueryStats {
            distance: 0.0,
            frequency: 1.0,
            recency: 0.0,
            selectivity: 1.0,
            key_distribution: default_keys,
        },
    }
}

fn dataset_bytes(source: &StatsSource<'_>, env: &SimEnvironment, ir_ids: &[&str], dataset: &str) -> f64 {
    if let StatsSource::History(snap, _) = source {
        let seen: Vec<f64> = ir_ids
            .iter()
            .map(|ir| snap.input_stats(ir, dataset).mean_bytes)
            .filter(|&b| b > 0.0)
            .collect();
        if !seen.is_empty() {
            return seen.iter().sum::<f64>() / seen.len() as f64;
        }
    }
    env.datasets().get(dataset).map_or(0.0, |d| d.bytes())
}

fn candidate_features(
    source: &StatsSource<'_>,
    sourced: &SourcedCandidate,
    graphs: &BTreeMap<&str, &IrGraph>,
    dataset: &str,
    env: &SimEnvironment,
) -> CandidateFeatures {
    let default_keys = env
        .datasets()
        .get(dataset)
        .map_or(env.window().hi[5], |d| d.n as f64);
    let stats: Vec<QueryStats> = sourced
        .sources
        .iter()
        .map(|ir| query_stats(source, ir, dataset, default_keys))
        .collect();
    let mut others: BTreeSet<String> = BTreeSet::new();
    for ir in &sourced.sources {
        if let Some(g) = graphs.get(ir.as_str()) {
            others.extend(g.datasets().into_iter().filter(|d| *d != dataset).map(str::to_string));
        }
    }
    let sources: Vec<&str> = sourced.sources.iter().map(String::as_str).collect();
    let size: f64 = others
        .iter()
        .map(|d| dataset_bytes(source, env, &sources, d))
        .sum();
    combine_shared(
        &stats,
        complexity(&sourced.candidate) as f64,
        others.len() as f64,
        size,
    )
    .expect("every candidate has a source")
}

fn check_model(model: &PolicyModel, env: &SimEnvironment) -> Result<(), AdvisorError> {
    let k = env.spec.k;
    if model.input_len() != StateVector::len_for(k) || model.action_count() != k + 1 {
        return Err(AdvisorError::ModelShape {
            model_input: model.input_len(),
            model_actions: model.action_count(),
            k,
        });
    }
    Ok(())
}

fn decide(
    source: StatsSource<'_>,
    consumers: &[IrGraph],
    dataset: &str,
    env: &SimEnvironment,
    model: &PolicyModel,
    mode: Mode,
) -> Result<Recommendation, AdvisorError> {
    check_model(model, env)?;
    let sourced = enumerate_with_sources(consumers, dataset)?;
    if sourced.is_empty() {
        return Ok(Recommendation {
            dataset: dataset.to_string(),
            action: None,
            chosen: PartitionScheme::RoundRobin,
            candidate: None,
            distribution: Vec::new(),
            slate: Vec::new(),
        });
    }
    let graphs: BTreeMap<&str, &IrGraph> = consumers.iter().map(|g| (g.ir_id(), g)).collect();
    let entries: Vec<SlateEntry> = sourced
        .iter()
        .map(|s| SlateEntry {
            key: format!("{}#{}", s.candidate.signature().text(), s.candidate.strategy),
            features: candidate_features(&source, s, &graphs, dataset, env),
        })
        .collect();
    let reader_ids: Vec<&str> = consumers
        .iter()
        .filter(|g| g.datasets().contains(&dataset))
        .map(|g| g.ir_id())
        .collect();
    let env_features: EnvFeatures = env.env_features(dataset_bytes(&source, env, &reader_ids, dataset));
    let state = build_state(&entries, &env_features, env.spec.k, env.window());
    let (action, distribution) = match mode {
        Mode::Argmax => model.argmax(&state.values)?,
        Mode::Sample { seed } => model.act(&state.values, &mut ChaCha8Rng::seed_from_u64(seed))?,
    };
    let slate: Vec<SlateItem> = state
        .slots
        .iter()
        .enumerate()
        .filter_map(|(slot, e)| e.map(|i| (slot, i)))
        .map(|(slot, i)| SlateItem {
            slot,
            signature: sourced[i].candidate.signature().text().to_string(),
            strategy: sourced[i].candidate.strategy,
            sources: sourced[i].sources.clone(),
            features: entries[i].features,
            candidate: sourced[i].candidate.clone(),
        })
        .collect();
    let picked = state.slots.get(action).copied().flatten().map(|i| &sourced[i].candidate);
    Ok(Recommendation {
        dataset: dataset.to_string(),
        action: Some(action),
        chosen: picked.map_or(PartitionScheme::RoundRobin, |c| {
            PartitionScheme::keyed(c.strategy, c.signature().text())
        }),
        candidate: picked.cloned(),
        distribution,
        slate,
    })
}

/// Picks a partitioning for `dataset` as written by `producer`, from the
/// candidates of the producer's historical consumers.
pub fn recommend(
    history: &HistorySnapshot,
    producer: &IrGraph,
    dataset: &str,
    env: &SimEnvironment,
    model: &PolicyModel,
    mode: Mode,
) -> Result<Recommendation, AdvisorError> {
    let consumers: Vec<IrGraph> = history
        .predict_consumers(producer)?
        .into_iter()
        .filter_map(|c| history.ir(&c.ir_id).cloned())
        .collect();
    decide(
        StatsSource::History(history, history.latest_timestamp()),
        &consumers,
        dataset,
        env,
        model,
        mode,
    )
}

/// Like [`recommend`], for an existing dataset and an explicit consumer set.
/// Consumers unknown to `history` (or all, without history) count as one run each.
pub fn reorganize(
    history: Option<&HistorySnapshot>,
    dataset: &str,
    consumers: &[IrGraph],
    env: &SimEnvironment,
    model: &PolicyModel,
    mode: Mode,
) -> Result<Recommendation, AdvisorError> {
    if consumers.is_empty() {
        return Err(AdvisorError::NoConsumers);
    }
    let source = match history {
        Some(h) if consumers.iter().all(|g| h.group_of_ir(g.ir_id()).is_some()) => {
            StatsSource::History(h, h.latest_timestamp())
        }
        _ => StatsSource::Uniform,
    };
    decide(source, consumers, dataset, env, model, mode)
}

/// Per join anchor over the dataset's scan: local if the applied partitioning
/// matches the consumer's key subgraph there, shuffle otherwise.
pub fn consult(applied: &AppliedPartitioning, consumer: &IrGraph) -> Result<Vec<JoinVerdict>, AdvisorError> {
    let scan = consumer
        .find_scanner(&applied.dataset)?
        .ok_or_else(|| IrError::AbsentScan(applied.dataset.clone()))?;
    let anchors = consumer.reachable_anchors(scan);
    let matched: BTreeSet<NodeId> = match applied.scheme.desired() {
        None => BTreeSet::new(),
        Some(want) => {
            let c = applied
                .candidate
                .as_ref()
                .ok_or_else(|| AdvisorError::MissingCandidate(applied.scheme.label()))?;
            let c = if c.strategy == want.strategy {
                c.clone()
            } else {
                c.with_strategy(want.strategy)
            };
            match_candidate(&c, consumer)?
                .into_iter()
                .map(|m| m.anchor)
                .collect()
        }
    };
    Ok(anchors
        .into_iter()
        .map(|anchor| JoinVerdict {
            scan,
            anchor,
            verdict: if matched.contains(&anchor) {
                Verdict::Local
            } else {
                Verdict::Shuffle
            },
        })
        .collect())
}
