//! Feature/reward samples mined from an execution log, for correlation checks.
//!
//! Each run contributes one sample. Its features describe the run's workload
//! as seen at that moment; its reward is the run's throughput relative to the
//! mean throughput of its workload.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::enumerate::candidates_in;
use crate::features::{pearson, CandidateFeatures, FeatureError, FEATURE_NAMES};
use crate::history::{ExecutionRecord, DEFAULT_HISTORY_WINDOW};
use crate::ir::IrGraph;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSample {
    pub app_id: String,
    pub timestamp: i64,
    pub ir_id: String,
    pub features: CandidateFeatures,
    pub reward: f64,
}

fn throughput(r: &ExecutionRecord) -> f64 {
    if r.latency > 0.0 {
        r.input_bytes() as f64 / r.latency
    } else {
        0.0
    }
}

/// One sample per run with positive latency, ordered by time. `irs` supplies
/// candidate complexity where known.
pub fn feature_reward_samples(
    records: &[ExecutionRecord],
    irs: &BTreeMap<String, IrGraph>,
) -> Vec<FeatureSample> {
    let mut runs: Vec<&ExecutionRecord> = records.iter().filter(|r| r.latency > 0.0).collect();
    runs.sort_by(|a, b| (a.timestamp, &a.app_id).cmp(&(b.timestamp, &b.app_id)));
    let last = runs.iter().map(|r| r.timestamp).max().unwrap_or(0);
    let mut mean_tp: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in &runs {
        let e = mean_tp.entry(r.ir_id.as_str()).or_default();
        e.0 += throughput(r);
        e.1 += 1;
    }
    let window = DEFAULT_HISTORY_WINDOW as i64;
    let mut seen: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(runs.len());
    for r in runs {
        let past = seen.entry(r.ir_id.as_str()).or_default();
        let distance = past.last().map_or(0.0, |&p| (r.timestamp - p) as f64);
        past.push(r.timestamp);
        let frequency = past.iter().filter(|&&t| r.timestamp - t <= window).count() as f64;
        let complexity = irs.get(&r.ir_id).map_or(0.0, |g| {
            g.datasets()
                .into_iter()
                .filter_map(|d| candidates_in(g, d).ok())
                .flatten()
                .map(|c| crate::features::complexity(&c) as f64)
                .fold(0.0, f64::max)
        });
        let sel: Vec<f64> = r.inputs.iter().filter_map(|i| i.selectivity).collect();
        let keys = r
            .inputs
            .iter()
            .filter_map(|i| i.distinct_keys)
            .min()
            .map_or(0.0, |k| k as f64);
        let bytes: Vec<f64> = r.inputs.iter().map(|i| i.bytes as f64).collect();
        let largest = bytes.iter().copied().fold(0.0, f64::max);
        let (sum, n) = mean_tp[r.ir_id.as_str()];
        let mean = sum / n as f64;
        out.push(FeatureSample {
            app_id: r.app_id.clone(),
            timestamp: r.timestamp,
            ir_id: r.ir_id.clone(),
            features: CandidateFeatures {
                frequency,
                distance,
                recency: (last - r.timestamp) as f64,
                complexity,
                selectivity: if sel.is_empty() {
                    1.0
                } else {
                    sel.iter().sum::<f64>() / sel.len() as f64
                },
                key_distribution: keys,
                num_copartitioned: r.inputs.len().saturating_sub(1) as f64,
                size_copartitioned: bytes.iter().sum::<f64>() - largest,
            }
            .clamped(),
            reward: if mean > 0.0 { throughput(r) / mean } else { 0.0 },
        });
    }
    out
}

/// Correlation of `feature` with reward over the samples.
pub fn feature_pcc(samples: &[FeatureSample], feature: &str) -> Result<f64, FeatureError> {
    if !FEATURE_NAMES.contains(&feature) {
        return Err(FeatureError::UnknownFeature(feature.to_string()));
    }
    let xs = samples
        .iter()
        .map(|s| s.features.get(feature))
        .collect::<Result<Vec<_>, _>>()?;
    let ys: Vec<f64> = samples.iter().map(|s| s.reward).collect();
    pearson(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::DatasetIo;

    fn run(t: i64, latency: f64) -> ExecutionRecord {
        ExecutionRecord {
            app_id: "a".into(),
            timestamp: t,
            ir_id: "q".into(),
            inputs: vec![DatasetIo::new("d", 100), DatasetIo::new("e", 40)],
            outputs: vec![],
            latency,
        }
    }

    #[test]
    fn samples_follow_time() {
        let s = feature_reward_samples(&[run(20, 2.0), run(10, 1.0), run(40, 4.0)], &BTreeMap::new());
        assert_eq!(s.iter().map(|x| x.timestamp).collect::<Vec<_>>(), vec![10, 20, 40]);
        assert_eq!(s[2].features.frequency, 3.0);
        assert_eq!(s[2].features.distance, 20.0);
        assert_eq!(s[0].features.recency, 30.0);
        assert_eq!(s[0].features.num_copartitioned, 1.0);
        assert_eq!(s[0].features.size_copartitioned, 40.0);
        // Throughputs 140, 70, 35; mean 245/3.
        assert!((s[0].reward - 140.0 / (245.0 / 3.0)).abs() < 1e-12);
        // Later runs are slower here: frequency rises as reward falls.
        assert!(feature_pcc(&s, "frequency").unwrap() < 0.0);
        assert!(matches!(feature_pcc(&s, "nope"), Err(FeatureError::UnknownFeature(_))));
    }
}
