//! Shuffle-cost cluster simulator and latency-table replay used for training.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enumerate::Strategy;
use crate::features::{
    build_state, combine_shared, EnvFeatures, FeatureWindow, QueryStats, SlateEntry, StateVector,
    DEFAULT_TOP_K, FEATURE_COUNT,
};
use crate::rl::{self, Environment, RlError, WorkloadRun};
use crate::signature::fnv1a64;

/// Objects beyond this many are not materialized for load accounting.
pub const LOAD_SAMPLE: usize = 20_000;
/// Range boundaries come from at most this many sorted keys.
pub const RANGE_SAMPLE: usize = 10_000;
pub const DEFAULT_HISTORY_RUNS: f64 = 20.0;
pub const DEFAULT_INCLUSION: f64 = 0.6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cluster needs at least one worker")]
    NoWorkers,
    #[error("cluster field `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("dataset `{0}` has no orderable keys for range partitioning")]
    Unorderable(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("no scheme given for input `{0}`")]
    MissingScheme(String),
    #[error("workload `{query}` has no latency entry for `{key}`")]
    MissingEntry { query: String, key: String },
    #[error("no workloads to sample from")]
    NoWorkloads,
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Reward(#[from] RlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub m: u32,
    pub cores: f64,
    pub memory: f64,
    pub disk: f64,
    pub bandwidth: f64,
    pub base_cpu_rate: f64,
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.m == 0 {
            return Err(SimError::NoWorkers);
        }
        for (name, v) in [
            ("cores", self.cores),
            ("memory", self.memory),
            ("disk", self.disk),
            ("bandwidth", self.bandwidth),
            ("base_cpu_rate", self.base_cpu_rate),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(SimError::NonPositive(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KeyModel {
    /// One key per object.
    Explicit { keys: Vec<String> },
    /// Integer keys `1..=distinct` drawn Zipf-distributed.
    Zipf { distinct: u64, skew: f64 },
    /// Hashable but unordered keys, spread uniformly over `distinct` values.
    Opaque { distinct: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Int(u64),
    Str(String),
}

impl Key {
    fn hash(&self) -> u64 {
        match self {
            Key::Int(v) => fnv1a64(v.to_string().as_bytes()),
            Key::Str(s) => fnv1a64(s.as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionScheme {
    Hash { signature: String },
    Range { signature: String },
    RoundRobin,
    Random { seed: u64 },
}

impl PartitionScheme {
    pub fn keyed(strategy: Strategy, signature: impl Into<String>) -> Self {
        let signature = signature.into();
        match strategy {
            Strategy::Hash => PartitionScheme::Hash { signature },
            Strategy::Range => PartitionScheme::Range { signature },
        }
    }

    pub fn desired(&self) -> Option<DesiredCandidate> {
        match self {
            PartitionScheme::Hash { signature } => Some(DesiredCandidate {
                signature: signature.clone(),
                strategy: Strategy::Hash,
            }),
            PartitionScheme::Range { signature } => Some(DesiredCandidate {
                signature: signature.clone(),
                strategy: Strategy::Range,
            }),
            _ => None,
        }
    }

    /// Name used in latency-table keys. Random costs the same as round-robin
    /// and shares its entries.
    pub fn label(&self) -> String {
        match self {
            PartitionScheme::Hash { signature } => format!("hash:{signature}"),
            PartitionScheme::Range { signature } => format!("range:{signature}"),
            PartitionScheme::RoundRobin | PartitionScheme::Random { .. } => "roundrobin".into(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            PartitionScheme::Hash { signature } | PartitionScheme::Range { signature }
                if signature.is_empty() =>
            {
                Err(SimError::Invalid("keyed scheme with empty signature".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesiredCandidate {
    pub signature: String,
    pub strategy: Strategy,
}

impl DesiredCandidate {
    pub fn scheme(&self) -> PartitionScheme {
        PartitionScheme::keyed(self.strategy, self.signature.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub id: String,
    pub n: u64,
    pub object_bytes: f64,
    #[serde(default)]
    pub key_model: Option<KeyModel>,
    #[serde(default = "round_robin")]
    pub applied: PartitionScheme,
}

fn round_robin() -> PartitionScheme {
    PartitionScheme::RoundRobin
}

impl SimDataset {
    pub fn bytes(&self) -> f64 {
        self.n as f64 * self.object_bytes
    }

    fn key_model(&self) -> KeyModel {
        self.key_model.clone().unwrap_or(KeyModel::Opaque {
            distinct: self.n.max(1),
        })
    }

    /// Number of distinct key values the model allows.
    pub fn distinct_keys(&self) -> f64 {
        match self.key_model() {
            KeyModel::Explicit { keys } => keys.iter().collect::<BTreeSet<_>>().len() as f64,
            KeyModel::Zipf { distinct, .. } | KeyModel::Opaque { distinct } => distinct as f64,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.applied.validate()?;
        if self.object_bytes.is_nan() || self.object_bytes < 0.0 {
            return Err(SimError::Invalid(format!("{}: negative object size", self.id)));
        }
        match self.key_model() {
            KeyModel::Explicit { keys } if keys.len() as u64 != self.n => Err(SimError::Invalid(
                format!("{}: {} keys for {} objects", self.id, keys.len(), self.n),
            )),
            KeyModel::Zipf { distinct, skew } if distinct == 0 || distinct > self.n.max(1) || skew.is_nan() || skew <= 0.0 => {
                Err(SimError::Invalid(format!("{}: bad zipf model", self.id)))
            }
            KeyModel::Opaque { distinct } if distinct == 0 || distinct > self.n.max(1) => {
                Err(SimError::Invalid(format!("{}: bad key count", self.id)))
            }
            _ => Ok(()),
        }
    }

    /// Keys of the first `min(n, LOAD_SAMPLE)` objects; deterministic per id.
    fn keys(&self) -> (Vec<Key>, bool) {
        let count = (self.n as usize).min(LOAD_SAMPLE);
        match self.key_model() {
            KeyModel::Explicit { keys } => (
                keys.iter().take(count).cloned().map(Key::Str).collect(),
                true,
            ),
            KeyModel::Zipf { distinct, skew } => {
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(self.id.as_bytes()));
                let z = Zipf::new(distinct as f64, skew).expect("validated zipf parameters");
                (
                    (0..count).map(|_| Key::Int(z.sample(&mut rng) as u64)).collect(),
                    true,
                )
            }
            KeyModel::Opaque { distinct } => (
                (0..count as u64)
                    .map(|i| Key::Str(format!("{}#{}", self.id, i % distinct)))
                    .collect(),
                false,
            ),
        }
    }
}

/// Ascending boundaries splitting `keys` into `m` equi-depth buckets.
fn range_boundaries(keys: &[Key], m: u32) -> Vec<Key> {
    let mut sorted: Vec<&Key> = if keys.len() > RANGE_SAMPLE {
        let step = keys.len() as f64 / RANGE_SAMPLE as f64;
        (0..RANGE_SAMPLE).map(|i| &keys[(i as f64 * step) as usize]).collect()
    } else {
        keys.iter().collect()
    };
    sorted.sort();
    if sorted.is_empty() {
        return Vec::new();
    }
    (1..m as usize)
        .map(|j| sorted[(j * sorted.len() / m as usize).min(sorted.len() - 1)].clone())
        .collect()
}

/// Bucket of `key`: the count of boundaries at or below it, so a key equal
/// to a boundary opens the upper bucket.
fn bucket(boundaries: &[Key], key: &Key) -> usize {
    boundaries.partition_point(|b| b <= key)
}

/// Range buckets before the modulus fold, for property checks.
pub fn range_buckets(dataset: &SimDataset, m: u32) -> Result<Vec<usize>, SimError> {
    let (keys, orderable) = dataset.keys();
    if !orderable {
        return Err(SimError::Unorderable(dataset.id.clone()));
    }
    let bounds = range_boundaries(&keys, m);
    Ok(keys.iter().map(|k| bucket(&bounds, k)).collect())
}

/// Node of each (sampled) object under `scheme`.
pub fn assign(
    dataset: &SimDataset,
    scheme: &PartitionScheme,
    cluster: &ClusterConfig,
) -> Result<Vec<u32>, SimError> {
    let m = cluster.m;
    if m == 0 {
        return Err(SimError::NoWorkers);
    }
    let count = (dataset.n as usize).min(LOAD_SAMPLE);
    Ok(match scheme {
        PartitionScheme::RoundRobin => (0..count).map(|i| (i % m as usize) as u32).collect(),
        PartitionScheme::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..count).map(|_| rng.random_range(0..m)).collect()
        }
        PartitionScheme::Hash { .. } => {
            let (keys, _) = dataset.keys();
            keys.iter().map(|k| (k.hash() % u64::from(m)) as u32).collect()
        }
        PartitionScheme::Range { .. } => range_buckets(dataset, m)?
            .into_iter()
            .map(|b| (b % m as usize) as u32)
            .collect(),
    })
}

/// Max node load over mean node load; 1 for an empty dataset.
pub fn skew_factor(assignment: &[u32], m: u32) -> f64 {
    if assignment.is_empty() {
        return 1.0;
    }
    let mut loads = vec![0usize; m as usize];
    for &a in assignment {
        loads[a as usize] += 1;
    }
    let max = *loads.iter().max().unwrap() as f64;
    max / (assignment.len() as f64 / f64::from(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub query_id: String,
    pub ir_id: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub desired: BTreeMap<String, DesiredCandidate>,
    #[serde(default)]
    pub latency_table: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub frequency: f64,
    /// Seconds between the last two runs.
    #[serde(default = "day")]
    pub distance: f64,
    /// Seconds since the last run.
    #[serde(default)]
    pub recency: f64,
    /// Complexity of each desired candidate, by dataset.
    #[serde(default)]
    pub complexity: BTreeMap<String, f64>,
    /// Key-to-object size ratio of each desired candidate, by dataset.
    #[serde(default)]
    pub selectivity: BTreeMap<String, f64>,
}

fn one() -> f64 {
    1.0
}

fn day() -> f64 {
    86_400.0
}

/// Canonical latency-table key: sorted `dataset=scheme` pairs joined by `;`.
pub fn table_key(schemes: &BTreeMap<String, PartitionScheme>, inputs: &[String]) -> Result<String, SimError> {
    let mut pairs = Vec::with_capacity(inputs.len());
    for d in inputs.iter().collect::<BTreeSet<_>>() {
        let s = schemes.get(d).ok_or_else(|| SimError::MissingScheme(d.clone()))?;
        pairs.push(format!("{d}={}", s.label()));
    }
    Ok(pairs.join(";"))
}

fn matches_desired(workload: &WorkloadSpec, dataset: &str, scheme: &PartitionScheme) -> bool {
    match (workload.desired.get(dataset), scheme.desired()) {
        (Some(want), Some(have)) => *want == have,
        _ => false,
    }
}

fn dataset<'a>(datasets: &'a BTreeMap<String, SimDataset>, id: &str) -> Result<&'a SimDataset, SimError> {
    datasets.get(id).ok_or_else(|| SimError::UnknownDataset(id.to_string()))
}

/// Bytes each input moves over the network, in input order.
pub fn shuffle_bytes(
    workload: &WorkloadSpec,
    schemes: &BTreeMap<String, PartitionScheme>,
    datasets: &BTreeMap<String, SimDataset>,
    cluster: &ClusterConfig,
) -> Result<Vec<f64>, SimError> {
    workload
        .inputs
        .iter()
        .map(|d| {
            let scheme = schemes.get(d).ok_or_else(|| SimError::MissingScheme(d.clone()))?;
            let ds = dataset(datasets, d)?;
            Ok(if matches_desired(workload, d, scheme) {
                0.0
            } else {
                ds.bytes() * (1.0 - 1.0 / f64::from(cluster.m))
            })
        })
        .collect()
}

/// `(Σ bytes / cpu rate + Σ shuffled / bandwidth) × skew`, where the skew is
/// the worst input's load imbalance after the join-side placement: the applied
/// scheme where it matches, otherwise hash placement on the input's keys.
pub fn simulate_latency(
    workload: &WorkloadSpec,
    schemes: &BTreeMap<String, PartitionScheme>,
    datasets: &BTreeMap<String, SimDataset>,
    cluster: &ClusterConfig,
) -> Result<f64, SimError> {
    cluster.validate()?;
    let shuffled = shuffle_bytes(workload, schemes, datasets, cluster)?;
    let mut cpu = 0.0;
    let mut skew: f64 = 1.0;
    for (d, moved) in workload.inputs.iter().zip(&shuffled) {
        let ds = dataset(datasets, d)?;
        cpu += ds.bytes() / cluster.base_cpu_rate;
        let placement = if *moved == 0.0 {
            schemes[d].clone()
        } else {
            PartitionScheme::Hash {
                signature: "shuffle".into(),
            }
        };
        skew = skew.max(skew_factor(&assign(ds, &placement, cluster)?, cluster.m));
    }
    let net: f64 = shuffled.iter().sum::<f64>() / cluster.bandwidth;
    Ok((cpu + net) * skew)
}

/// Cost of partitioning a dataset on write; uncalibrated.
pub fn producer_latency(dataset: &SimDataset, cluster: &ClusterConfig) -> f64 {
    dataset.bytes() / cluster.base_cpu_rate
}

/// A sampled synthetic workload: spec indices with normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mixture {
    pub entries: Vec<(usize, f64)>,
}

/// Per-draw inclusion probability `q` such that, conditioned on a nonempty
/// draw, each of `n` specs is included with probability `p`.
pub fn per_draw_probability(p: f64, n: usize) -> f64 {
    let n_f = n as f64;
    let p = p.clamp(1.0 / n_f, 1.0);
    let marginal = |q: f64| q / (1.0 - (1.0 - q).powf(n_f));
    let (mut lo, mut hi) = (1e-12, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if marginal(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random nonempty subset of `specs`, each included with probability
/// `inclusion`, weighted by spec frequency times a random factor in [0.5, 1.5).
pub fn sample_workload(
    specs: &[WorkloadSpec],
    inclusion: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Mixture, SimError> {
    if specs.is_empty() {
        return Err(SimError::NoWorkloads);
    }
    if specs.len() == 1 {
        return Ok(Mixture {
            entries: vec![(0, 1.0)],
        });
    }
    let q = per_draw_probability(inclusion, specs.len());
    loop {
        let chosen: Vec<usize> = (0..specs.len()).filter(|_| rng.random::<f64>() < q).collect();
        if chosen.is_empty() {
            continue;
        }
        let weights: Vec<f64> = chosen
            .iter()
            .map(|&i| specs[i].frequency * rng.random_range(0.5..1.5))
            .collect();
        let total: f64 = weights.iter().sum();
        return Ok(Mixture {
            entries: chosen
                .into_iter()
                .zip(weights)
                .map(|(i, w)| (i, w / total))
                .collect(),
        });
    }
}

fn table_latency(w: &WorkloadSpec, schemes: &BTreeMap<String, PartitionScheme>) -> Result<f64, SimError> {
    let key = table_key(schemes, &w.inputs)?;
    w.latency_table
        .get(&key)
        .copied()
        .ok_or(SimError::MissingEntry {
            query: w.query_id.clone(),
            key,
        })
}

/// Throughput of the mixture under `chosen` relative to all-round-robin,
/// from table lookups weighted by mixture frequency.
pub fn replay_reward(
    specs: &[WorkloadSpec],
    mixture: &Mixture,
    chosen: &BTreeMap<String, PartitionScheme>,
    datasets: &BTreeMap<String, SimDataset>,
) -> Result<f64, SimError> {
    let mut window = Vec::new();
    let mut baseline = Vec::new();
    for &(i, f) in &mixture.entries {
        let w = &specs[i];
        let mut bytes = 0.0;
        for d in &w.inputs {
            bytes += dataset(datasets, d)?.bytes();
        }
        let rr: BTreeMap<String, PartitionScheme> = w
            .inputs
            .iter()
            .map(|d| (d.clone(), PartitionScheme::RoundRobin))
            .collect();
        window.push(WorkloadRun {
            bytes: f * bytes,
            latency: f * table_latency(w, chosen)?,
        });
        baseline.push(WorkloadRun {
            bytes: f * bytes,
            latency: f * table_latency(w, &rr)?,
        });
    }
    Ok(rl::reward(&window, &baseline)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub cluster: ClusterConfig,
    pub datasets: Vec<SimDataset>,
    pub workloads: Vec<WorkloadSpec>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_runs")]
    pub history_runs: f64,
    #[serde(default = "default_inclusion")]
    pub inclusion: f64,
    #[serde(default)]
    pub window: Option<FeatureWindow>,
}

fn default_k() -> usize {
    DEFAULT_TOP_K
}

fn default_runs() -> f64 {
    DEFAULT_HISTORY_RUNS
}

fn default_inclusion() -> f64 {
    DEFAULT_INCLUSION
}

impl EnvSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Invalid(e.to_string()))
    }
}

/// Per-slot scheme of one observation.
#[derive(Debug, Clone)]
pub struct Decision {
    pub mixture: Mixture,
    pub target: String,
    pub slot_schemes: Vec<Option<PartitionScheme>>,
    pub state: StateVector,
}

/// Training environment: every observation creates one dataset read by a
/// sampled workload mixture; the action picks its partitioning and the reward
/// replays the latency tables.
#[derive(Debug, Clone)]
pub struct SimEnvironment {
    pub spec: EnvSpec,
    datasets: BTreeMap<String, SimDataset>,
    window: FeatureWindow,
}

impl SimEnvironment {
    pub fn new(mut spec: EnvSpec) -> Result<Self, SimError> {
        spec.cluster.validate()?;
        if spec.workloads.is_empty() {
            return Err(SimError::NoWorkloads);
        }
        if spec.k == 0 {
            return Err(SimError::Invalid("k must be at least 1".into()));
        }
        let mut datasets = BTreeMap::new();
        for d in &spec.datasets {
            d.validate()?;
            if datasets.insert(d.id.clone(), d.clone()).is_some() {
                return Err(SimError::Invalid(format!("duplicate dataset `{}`", d.id)));
            }
        }
        for w in &spec.workloads {
            for d in w.inputs.iter().chain(w.desired.keys()) {
                dataset(&datasets, d)?;
            }
            for (d, c) in &w.desired {
                if c.signature.is_empty() {
                    return Err(SimError::Invalid(format!("{}: empty signature for {d}", w.query_id)));
                }
            }
        }
        let options = options_by_dataset(&spec.workloads, &datasets);
        for w in spec.workloads.iter_mut() {
            if w.latency_table.is_empty() {
                w.latency_table = generate_table(w, &options, &datasets, &spec.cluster)?;
            }
        }
        let window = match spec.window.clone() {
            Some(w) => w,
            None => default_window(&spec, &datasets),
        };
        Ok(SimEnvironment {
            spec,
            datasets,
            window,
        })
    }

    pub fn window(&self) -> &FeatureWindow {
        &self.window
    }

    pub fn datasets(&self) -> &BTreeMap<String, SimDataset> {
        &self.datasets
    }

    pub fn env_features(&self, dataset_bytes: f64) -> EnvFeatures {
        let c = &self.spec.cluster;
        EnvFeatures {
            dataset_bytes,
            workers: f64::from(c.m),
            cores: c.cores,
            memory: c.memory,
            disk: c.disk,
        }
    }

    /// Slate of distinct desired candidates for `target` among the mixture.
    pub fn slate(&self, mixture: &Mixture, target: &str) -> Vec<(SlateEntry, PartitionScheme)> {
        let mut per: BTreeMap<DesiredCandidate, Vec<(QueryStats, f64, &WorkloadSpec)>> = BTreeMap::new();
        let ds = &self.datasets[target];
        for &(i, f) in &mixture.entries {
            let w = &self.spec.workloads[i];
            let Some(want) = w.desired.get(target) else {
                continue;
            };
            let q = QueryStats {
                distance: w.distance,
                frequency: f * self.spec.history_runs,
                recency: w.recency,
                selectivity: w.selectivity.get(target).copied().unwrap_or(1.0),
                key_distribution: ds.distinct_keys(),
            };
            let cx = w.complexity.get(target).copied().unwrap_or(1.0);
            per.entry(want.clone()).or_default().push((q, cx, w));
        }
        per.into_iter()
            .map(|(cand, qs)| {
                let others: BTreeSet<&String> = qs
                    .iter()
                    .flat_map(|(_, _, w)| w.inputs.iter())
                    .filter(|d| d.as_str() != target)
                    .collect();
                let size: f64 = others.iter().map(|d| self.datasets[d.as_str()].bytes()).sum();
                let complexity = qs.iter().map(|(_, c, _)| *c).fold(0.0, f64::max);
                let stats: Vec<QueryStats> = qs.iter().map(|(q, _, _)| *q).collect();
                let features = combine_shared(&stats, complexity, others.len() as f64, size)
                    .expect("slate entries have at least one query");
                (
                    SlateEntry {
                        key: format!("{}#{}", cand.signature, cand.strategy),
                        features,
                    },
                    cand.scheme(),
                )
            })
            .collect()
    }

    pub fn decide(&self, rng: &mut ChaCha8Rng) -> Result<Decision, SimError> {
        let mixture = sample_workload(&self.spec.workloads, self.spec.inclusion, rng)?;
        let mut targets: BTreeSet<&String> = BTreeSet::new();
        for &(i, _) in &mixture.entries {
            targets.extend(self.spec.workloads[i].desired.keys());
        }
        if targets.is_empty() {
            for &(i, _) in &mixture.entries {
                targets.extend(self.spec.workloads[i].inputs.iter());
            }
        }
        let targets: Vec<&String> = targets.into_iter().collect();
        let target = targets[rng.random_range(0..targets.len())].clone();
        let slate = self.slate(&mixture, &target);
        let entries: Vec<SlateEntry> = slate.iter().map(|(e, _)| e.clone()).collect();
        let env = self.env_features(self.datasets[&target].bytes());
        let state = build_state(&entries, &env, self.spec.k, &self.window);
        let slot_schemes = state
            .slots
            .iter()
            .map(|s| s.map(|i| slate[i].1.clone()))
            .collect();
        Ok(Decision {
            mixture,
            target,
            slot_schemes,
            state,
        })
    }

    /// Scheme for `action`; empty slots and the last action are round-robin.
    pub fn decode(&self, decision: &Decision, action: usize) -> PartitionScheme {
        decision
            .slot_schemes
            .get(action)
            .cloned()
            .flatten()
            .unwrap_or(PartitionScheme::RoundRobin)
    }

    pub fn reward_for(&self, decision: &Decision, action: usize) -> Result<f64, SimError> {
        let mut schemes: BTreeMap<String, PartitionScheme> = self
            .datasets
            .iter()
            .map(|(id, d)| (id.clone(), d.applied.clone()))
            .collect();
        schemes.insert(decision.target.clone(), self.decode(decision, action));
        replay_reward(&self.spec.workloads, &decision.mixture, &schemes, &self.datasets)
    }
}

impl Environment for SimEnvironment {
    type Context = Decision;

    fn state_len(&self) -> usize {
        StateVector::len_for(self.spec.k)
    }

    fn action_count(&self) -> usize {
        self.spec.k + 1
    }

    fn observe(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Decision), RlError> {
        let d = self.decide(rng).map_err(|e| RlError::Env(e.to_string()))?;
        Ok((d.state.values.clone(), d))
    }

    fn reward(&self, context: &Decision, action: usize) -> Result<f64, RlError> {
        self.reward_for(context, action)
            .map_err(|e| RlError::Env(e.to_string()))
    }
}

/// Schemes each dataset can take: round-robin, its applied scheme, and every
/// candidate some workload desires for it.
fn options_by_dataset(
    workloads: &[WorkloadSpec],
    datasets: &BTreeMap<String, SimDataset>,
) -> BTreeMap<String, BTreeSet<PartitionScheme>> {
    let mut out: BTreeMap<String, BTreeSet<PartitionScheme>> = datasets
        .iter()
        .map(|(id, d)| {
            let applied = match &d.applied {
                PartitionScheme::Random { .. } => PartitionScheme::RoundRobin,
                other => other.clone(),
            };
            (id.clone(), BTreeSet::from([PartitionScheme::RoundRobin, applied]))
        })
        .collect();
    for w in workloads {
        for (d, c) in &w.desired {
            out.entry(d.clone()).or_default().insert(c.scheme());
        }
    }
    out
}

/// Simulated latency of `w` for every combination of its inputs' options.
fn generate_table(
    w: &WorkloadSpec,
    options: &BTreeMap<String, BTreeSet<PartitionScheme>>,
    datasets: &BTreeMap<String, SimDataset>,
    cluster: &ClusterConfig,
) -> Result<BTreeMap<String, f64>, SimError> {
    let inputs: Vec<&String> = w.inputs.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut combos: Vec<BTreeMap<String, PartitionScheme>> = vec![BTreeMap::new()];
    for d in inputs {
        let opts = options.get(d).ok_or_else(|| SimError::UnknownDataset(d.clone()))?;
        combos = combos
            .into_iter()
            .flat_map(|c| {
                opts.iter().map(move |o| {
                    let mut c = c.clone();
                    c.insert(d.clone(), o.clone());
                    c
                })
            })
            .collect();
    }
    let mut table = BTreeMap::new();
    for c in combos {
        table.insert(table_key(&c, &w.inputs)?, simulate_latency(w, &c, datasets, cluster)?);
    }
    Ok(table)
}

/// Bounds from zero to the largest value each feature can take in `spec`.
fn default_window(spec: &EnvSpec, datasets: &BTreeMap<String, SimDataset>) -> FeatureWindow {
    let max_of = |f: &dyn Fn(&WorkloadSpec) -> f64| spec.workloads.iter().map(f).fold(0.0, f64::max);
    let total_bytes: f64 = datasets.values().map(SimDataset::bytes).sum();
    let max_bytes = datasets.values().map(SimDataset::bytes).fold(0.0, f64::max);
    let max_keys = datasets.values().map(SimDataset::distinct_keys).fold(0.0, f64::max);
    let hi: [f64; FEATURE_COUNT] = [
        spec.history_runs,
        max_of(&|w| w.distance),
        max_of(&|w| w.recency),
        max_of(&|w| w.complexity.values().copied().fold(1.0, f64::max)),
        1.0,
        max_keys,
        datasets.len().saturating_sub(1) as f64,
        total_bytes,
    ];
    let c = &spec.cluster;
    FeatureWindow::from_maxima(hi, [max_bytes, f64::from(c.m), c.cores, c.memory, c.disk])
}
