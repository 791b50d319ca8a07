//! Execution history: the durable run log, the low-level producer/consumer
//! graph between executions, and its skeleton condensation by workload
//! signature.
//!
//! Dataset ids in the log name dataset *instances*. An id of the form
//! `name@version` is an instance of the logical dataset `name`, which is what
//! IR scan and write labels refer to.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enumerate::PartitionerCandidate;
use crate::ir::{IrError, IrGraph, Violation};
use crate::signature::{workload_signature, WorkloadSignature};

/// 30 days, in seconds.
pub const DEFAULT_HISTORY_WINDOW: f64 = 30.0 * 86_400.0;

const LOG_FILE: &str = "log.jsonl";
const IR_DIR: &str = "ir";

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("execution references unregistered IR `{0}`")]
    UnknownIr(String),
    #[error("IR `{ir_id}` is invalid: {violations:?}")]
    InvalidIr {
        ir_id: String,
        violations: Vec<Violation>,
    },
    #[error("IR `{ir_id}` is already registered with different content")]
    ConflictingIr { ir_id: String },
    #[error("invalid execution record: {0}")]
    InvalidRecord(String),
    #[error("execution ({app_id}, {timestamp}) already ingested")]
    DuplicateExecution { app_id: String, timestamp: i64 },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The logical dataset an instance id belongs to.
pub fn logical_dataset(id: &str) -> &str {
    id.split_once('@').map_or(id, |(name, _)| name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIo {
    pub dataset: String,
    pub bytes: u64,
    /// Average partition-key size over average object size, when measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selectivity: Option<f64>,
    /// Distinct key count observed for this input, when measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct_keys: Option<u64>,
}

impl DatasetIo {
    pub fn new(dataset: impl Into<String>, bytes: u64) -> Self {
        DatasetIo {
            dataset: dataset.into(),
            bytes,
            selectivity: None,
            distinct_keys: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub app_id: String,
    pub timestamp: i64,
    pub ir_id: String,
    pub inputs: Vec<DatasetIo>,
    pub outputs: Vec<DatasetIo>,
    pub latency: f64,
}

impl ExecutionRecord {
    pub fn id(&self) -> ExecutionId {
        ExecutionId {
            app_id: self.app_id.clone(),
            timestamp: self.timestamp,
        }
    }

    pub fn input_bytes(&self) -> u64 {
        self.inputs.iter().map(|d| d.bytes).sum()
    }

    fn check(&self) -> Result<(), HistoryError> {
        if !(self.latency > 0.0 && self.latency.is_finite()) {
            return Err(HistoryError::InvalidRecord(format!(
                "latency must be positive, got {}",
                self.latency
            )));
        }
        if let Some(s) = self
            .inputs
            .iter()
            .filter_map(|d| d.selectivity)
            .find(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(HistoryError::InvalidRecord(format!("bad selectivity {s}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExecutionId {
    pub app_id: String,
    pub timestamp: i64,
}

/// One low-level edge folded into a skeleton edge: the consumer run
/// `(app_id, timestamp)` read `input_data_id`, produced by `producer`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRun {
    pub app_id: String,
    pub timestamp: i64,
    pub input_data_id: String,
    /// First (smallest) dataset the consumer run wrote, if any.
    pub output_data_id: Option<String>,
    pub producer: ExecutionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkeletonGroup {
    /// Smallest member IR id.
    pub representative: String,
    pub ir_ids: BTreeSet<String>,
    pub executions: BTreeSet<ExecutionId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkeletonGraph {
    pub groups: BTreeMap<WorkloadSignature, SkeletonGroup>,
    pub edges: BTreeMap<(WorkloadSignature, WorkloadSignature), BTreeSet<EdgeRun>>,
}

#[derive(Serialize)]
struct SkeletonEdgeRepr<'a> {
    producer: WorkloadSignature,
    consumer: WorkloadSignature,
    runs: &'a BTreeSet<EdgeRun>,
}

#[derive(Serialize)]
struct SkeletonRepr<'a> {
    groups: BTreeMap<String, &'a SkeletonGroup>,
    edges: Vec<SkeletonEdgeRepr<'a>>,
}

impl Serialize for SkeletonGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SkeletonRepr {
            groups: self.groups.iter().map(|(k, v)| (k.to_hex(), v)).collect(),
            edges: self
                .edges
                .iter()
                .map(|(&(producer, consumer), runs)| SkeletonEdgeRepr {
                    producer,
                    consumer,
                    runs,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl SkeletonGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("skeleton always serializes")
    }

    pub fn successors(&self, group: WorkloadSignature) -> Vec<WorkloadSignature> {
        self.edges
            .range((group, WorkloadSignature(0))..=(group, WorkloadSignature(u64::MAX)))
            .map(|(&(_, c), _)| c)
            .collect()
    }
}

/// Consumers predicted for a producer: one entry per downstream skeleton group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedConsumer {
    pub group: WorkloadSignature,
    pub ir_id: String,
    pub executions: Vec<ExecutionRecord>,
}

/// Features 1-3 of a candidate, from its origin group's run history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateStats {
    pub frequency: f64,
    pub distance: f64,
    pub recency: f64,
}

/// Measured per-input statistics aggregated over a group's runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InputStats {
    pub selectivity: Option<f64>,
    pub distinct_keys: Option<f64>,
    pub mean_bytes: f64,
}

/// An immutable view of the history. Queries never block ingestion.
#[derive(Debug, Clone, Default)]
pub struct HistorySnapshot {
    irs: BTreeMap<String, IrGraph>,
    ir_sigs: BTreeMap<String, WorkloadSignature>,
    records: BTreeMap<ExecutionId, ExecutionRecord>,
    producers: BTreeMap<String, BTreeSet<ExecutionId>>,
    consumers: BTreeMap<String, BTreeSet<ExecutionId>>,
    skeleton: SkeletonGraph,
    window: f64,
}

impl HistorySnapshot {
    pub fn new(window: f64) -> Self {
        HistorySnapshot {
            window,
            ..Default::default()
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn skeleton(&self) -> &SkeletonGraph {
        &self.skeleton
    }

    pub fn ir(&self, ir_id: &str) -> Option<&IrGraph> {
        self.irs.get(ir_id)
    }

    pub fn irs(&self) -> impl Iterator<Item = &IrGraph> {
        self.irs.values()
    }

    pub fn records(&self) -> impl Iterator<Item = &ExecutionRecord> {
        self.records.values()
    }

    pub fn record(&self, id: &ExecutionId) -> Option<&ExecutionRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn group_of_ir(&self, ir_id: &str) -> Option<WorkloadSignature> {
        self.ir_sigs.get(ir_id).copied()
    }

    /// Low-level producer -> consumer edges between executions, with the dataset.
    pub fn low_level_edges(&self) -> Vec<(ExecutionId, ExecutionId, String)> {
        let mut out = Vec::new();
        for (dataset, prods) in &self.producers {
            if let Some(cons) = self.consumers.get(dataset) {
                for p in prods {
                    for c in cons {
                        out.push((p.clone(), c.clone(), dataset.clone()));
                    }
                }
            }
        }
        out.sort();
        out
    }

    pub fn register_ir(&mut self, graph: IrGraph) -> Result<WorkloadSignature, HistoryError> {
        graph.validate().map_err(|violations| HistoryError::InvalidIr {
            ir_id: graph.ir_id().to_string(),
            violations,
        })?;
        if let Some(existing) = self.irs.get(graph.ir_id()) {
            if existing != &graph {
                return Err(HistoryError::ConflictingIr {
                    ir_id: graph.ir_id().to_string(),
                });
            }
            return Ok(self.ir_sigs[graph.ir_id()]);
        }
        let sig = workload_signature(&graph)?;
        self.ir_sigs.insert(graph.ir_id().to_string(), sig);
        self.irs.insert(graph.ir_id().to_string(), graph);
        Ok(sig)
    }

    pub fn ingest(&mut self, record: ExecutionRecord) -> Result<(), HistoryError> {
        record.check()?;
        let sig = *self
            .ir_sigs
            .get(&record.ir_id)
            .ok_or_else(|| HistoryError::UnknownIr(record.ir_id.clone()))?;
        let id = record.id();
        if self.records.contains_key(&id) {
            return Err(HistoryError::DuplicateExecution {
                app_id: id.app_id,
                timestamp: id.timestamp,
            });
        }

        let group = self.skeleton.groups.entry(sig).or_insert_with(|| SkeletonGroup {
            representative: record.ir_id.clone(),
            ir_ids: BTreeSet::new(),
            executions: BTreeSet::new(),
        });
        group.ir_ids.insert(record.ir_id.clone());
        group.representative = group.ir_ids.first().cloned().unwrap_or_default();
        group.executions.insert(id.clone());

        let first_output = record.outputs.iter().map(|d| d.dataset.clone()).min();
        for input in &record.inputs {
            for p in self.producers.get(&input.dataset).into_iter().flatten() {
                let psig = self.ir_sigs[&self.records[p].ir_id];
                self.skeleton
                    .edges
                    .entry((psig, sig))
                    .or_default()
                    .insert(EdgeRun {
                        app_id: id.app_id.clone(),
                        timestamp: id.timestamp,
                        input_data_id: input.dataset.clone(),
                        output_data_id: first_output.clone(),
                        producer: p.clone(),
                    });
            }
            self.consumers
                .entry(input.dataset.clone())
                .or_default()
                .insert(id.clone());
        }
        for output in &record.outputs {
            for c in self.consumers.get(&output.dataset).into_iter().flatten() {
                let crec = &self.records.get(c);
                // `c` may be this record when a run reads its own output.
                let (csig, capp, cts, cout) = match crec {
                    Some(r) => (
                        self.ir_sigs[&r.ir_id],
                        r.app_id.clone(),
                        r.timestamp,
                        r.outputs.iter().map(|d| d.dataset.clone()).min(),
                    ),
                    None => (sig, id.app_id.clone(), id.timestamp, first_output.clone()),
                };
                self.skeleton
                    .edges
                    .entry((sig, csig))
                    .or_default()
                    .insert(EdgeRun {
                        app_id: capp,
                        timestamp: cts,
                        input_data_id: output.dataset.clone(),
                        output_data_id: cout,
                        producer: id.clone(),
                    });
            }
            self.producers
                .entry(output.dataset.clone())
                .or_default()
                .insert(id.clone());
        }
        self.records.insert(id, record);
        Ok(())
    }

    fn group_runs(&self, sig: WorkloadSignature) -> Vec<&ExecutionRecord> {
        self.skeleton
            .groups
            .get(&sig)
            .map(|g| {
                g.executions
                    .iter()
                    .filter_map(|id| self.records.get(id))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Groups reachable by one skeleton edge from the producer's group.
    pub fn predict_consumers(
        &self,
        producer: &IrGraph,
    ) -> Result<Vec<PredictedConsumer>, IrError> {
        let sig = workload_signature(producer)?;
        if !self.skeleton.groups.contains_key(&sig) {
            return Ok(Vec::new());
        }
        Ok(self
            .skeleton
            .successors(sig)
            .into_iter()
            .filter_map(|c| {
                let group = self.skeleton.groups.get(&c)?;
                Some(PredictedConsumer {
                    group: c,
                    ir_id: group.representative.clone(),
                    executions: self.group_runs(c).into_iter().cloned().collect(),
                })
            })
            .collect())
    }

    /// Frequency, distance and recency for the group `ir_id` belongs to.
    pub fn group_stats(&self, ir_id: &str, now: i64) -> CandidateStats {
        let mut ts: Vec<i64> = self
            .group_of_ir(ir_id)
            .map(|sig| self.group_runs(sig).iter().map(|r| r.timestamp).collect())
            .unwrap_or_default();
        ts.sort_unstable();
        match ts.as_slice() {
            [] => CandidateStats {
                frequency: 0.0,
                distance: 0.0,
                recency: self.window,
            },
            [.., last] => CandidateStats {
                frequency: ts.len() as f64,
                distance: if ts.len() >= 2 {
                    (ts[ts.len() - 1] - ts[ts.len() - 2]) as f64
                } else {
                    0.0
                },
                recency: (now - last) as f64,
            },
        }
    }

    pub fn candidate_stats(&self, candidate: &PartitionerCandidate, now: i64) -> CandidateStats {
        self.group_stats(&candidate.origin_ir, now)
    }

    /// Mean measured statistics for inputs of logical dataset `dataset`
    /// across runs of the group `ir_id` belongs to.
    pub fn input_stats(&self, ir_id: &str, dataset: &str) -> InputStats {
        let runs = self
            .group_of_ir(ir_id)
            .map(|sig| self.group_runs(sig))
            .unwrap_or_default();
        let inputs: Vec<&DatasetIo> = runs
            .iter()
            .flat_map(|r| r.inputs.iter())
            .filter(|d| logical_dataset(&d.dataset) == dataset)
            .collect();
        let mean = |xs: Vec<f64>| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<f64>() / xs.len() as f64)
            }
        };
        InputStats {
            selectivity: mean(inputs.iter().filter_map(|d| d.selectivity).collect()),
            distinct_keys: mean(
                inputs
                    .iter()
                    .filter_map(|d| d.distinct_keys.map(|k| k as f64))
                    .collect(),
            ),
            mean_bytes: mean(inputs.iter().map(|d| d.bytes as f64).collect()).unwrap_or(0.0),
        }
    }

    /// Latest timestamp in the log, or 0 when empty.
    pub fn latest_timestamp(&self) -> i64 {
        self.records.values().map(|r| r.timestamp).max().unwrap_or(0)
    }
}

/// Single-writer store. Readers take [`HistoryStore::snapshot`] and keep
/// working on it while ingestion swaps in a new one.
#[derive(Debug)]
pub struct HistoryStore {
    dir: Option<PathBuf>,
    writer: Mutex<()>,
    snapshot: RwLock<Arc<HistorySnapshot>>,
}

impl HistoryStore {
    pub fn in_memory(window: f64) -> Self {
        HistoryStore {
            dir: None,
            writer: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(HistorySnapshot::new(window))),
        }
    }

    /// Opens (creating if needed) a store directory holding `ir/*.json` and
    /// `log.jsonl`, replaying the log.
    pub fn open(dir: impl AsRef<Path>, window: f64) -> Result<Self, HistoryError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(IR_DIR))?;
        let mut snap = HistorySnapshot::new(window);
        let mut ir_files: Vec<PathBuf> = fs::read_dir(dir.join(IR_DIR))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        ir_files.sort();
        for p in ir_files {
            snap.register_ir(load_ir(&p)?)?;
        }
        let log = dir.join(LOG_FILE);
        if log.exists() {
            for r in read_log(&log)? {
                snap.ingest(r)?;
            }
        }
        Ok(HistoryStore {
            dir: Some(dir),
            writer: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(snap)),
        })
    }

    /// A store over a log file and IR set, held in memory only.
    pub fn from_parts(
        irs: impl IntoIterator<Item = IrGraph>,
        records: impl IntoIterator<Item = ExecutionRecord>,
        window: f64,
    ) -> Result<Self, HistoryError> {
        let mut snap = HistorySnapshot::new(window);
        for g in irs {
            snap.register_ir(g)?;
        }
        for r in records {
            snap.ingest(r)?;
        }
        Ok(HistoryStore {
            dir: None,
            writer: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(snap)),
        })
    }

    pub fn snapshot(&self) -> Arc<HistorySnapshot> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock poisoned"))
    }

    fn update<T>(
        &self,
        f: impl FnOnce(&mut HistorySnapshot) -> Result<T, HistoryError>,
    ) -> Result<T, HistoryError> {
        let _w = self.writer.lock().expect("writer lock poisoned");
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
        Ok(out)
    }

    pub fn register_ir(&self, graph: IrGraph) -> Result<WorkloadSignature, HistoryError> {
        let dir = self.dir.clone();
        self.update(move |snap| {
            let json = graph.to_json();
            let path = dir.map(|d| d.join(IR_DIR).join(format!("{}.json", file_stem(graph.ir_id()))));
            let sig = snap.register_ir(graph)?;
            if let Some(path) = path {
                fs::write(path, json)?;
            }
            Ok(sig)
        })
    }

    pub fn ingest(&self, record: ExecutionRecord) -> Result<(), HistoryError> {
        let dir = self.dir.clone();
        self.update(move |snap| {
            let line = serde_json::to_string(&record).expect("records always serialize");
            snap.ingest(record)?;
            if let Some(dir) = dir {
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(LOG_FILE))?;
                writeln!(f, "{line}")?;
            }
            Ok(())
        })
    }
}

fn file_stem(ir_id: &str) -> String {
    ir_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn load_ir(path: &Path) -> Result<IrGraph, HistoryError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| HistoryError::Parse {
        path: path.display().to_string(),
        line: source.line(),
        source,
    })
}

/// Reads a JSON-lines execution log, skipping blank lines.
pub fn read_log(path: &Path) -> Result<Vec<ExecutionRecord>, HistoryError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| HistoryError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn rec(app: &str, ts: i64, ir: &str, ins: &[&str], outs: &[&str]) -> ExecutionRecord {
        ExecutionRecord {
            app_id: app.into(),
            timestamp: ts,
            ir_id: ir.into(),
            inputs: ins.iter().map(|d| DatasetIo::new(*d, 100)).collect(),
            outputs: outs.iter().map(|d| DatasetIo::new(*d, 50)).collect(),
            latency: 1.0,
        }
    }

    fn store() -> HistorySnapshot {
        let mut s = HistorySnapshot::new(DEFAULT_HISTORY_WINDOW);
        for g in fixtures::workflow_irs() {
            s.register_ir(g).unwrap();
        }
        s
    }

    #[test]
    fn first_record_one_group_no_edges() {
        let mut s = store();
        s.ingest(rec("loader", 1, "comment-loader", &["raw@1"], &["comments@1"]))
            .unwrap();
        assert_eq!(s.skeleton().groups.len(), 1);
        assert!(s.skeleton().edges.is_empty());
    }

    #[test]
    fn consumer_creates_edge_and_reexecution_joins_group() {
        let mut s = store();
        s.ingest(rec("loader", 1, "comment-loader", &["raw@1"], &["comments@1"]))
            .unwrap();
        s.ingest(rec("join", 5, "comments-by-author", &["comments@1", "authors"], &["x@5"]))
            .unwrap();
        assert_eq!(s.skeleton().edges.len(), 1);
        let runs = s.skeleton().edges.values().next().unwrap();
        let run = runs.iter().next().unwrap();
        assert_eq!(run.app_id, "join");
        assert_eq!(run.input_data_id, "comments@1");
        assert_eq!(run.output_data_id.as_deref(), Some("x@5"));
        assert_eq!(run.producer.timestamp, 1);

        s.ingest(rec("loader", 9, "comment-loader", &["raw@9"], &["comments@9"]))
            .unwrap();
        let sig = s.group_of_ir("comment-loader").unwrap();
        assert_eq!(s.skeleton().groups[&sig].executions.len(), 2);
    }

    #[test]
    fn out_of_order_consumer_first() {
        let mut s = store();
        s.ingest(rec("join", 5, "comments-by-author", &["comments@1"], &[]))
            .unwrap();
        s.ingest(rec("loader", 1, "comment-loader", &[], &["comments@1"]))
            .unwrap();
        assert_eq!(s.skeleton().edges.len(), 1);
    }

    #[test]
    fn rejects_unknown_ir_and_bad_latency() {
        let mut s = store();
        assert!(matches!(
            s.ingest(rec("a", 1, "nope", &[], &[])),
            Err(HistoryError::UnknownIr(_))
        ));
        let mut r = rec("a", 1, "comment-loader", &[], &[]);
        r.latency = 0.0;
        assert!(matches!(s.ingest(r), Err(HistoryError::InvalidRecord(_))));
        s.ingest(rec("a", 1, "comment-loader", &[], &[])).unwrap();
        assert!(matches!(
            s.ingest(rec("a", 1, "comment-loader", &[], &[])),
            Err(HistoryError::DuplicateExecution { .. })
        ));
    }

    #[test]
    fn stats_arithmetic() {
        let mut s = store();
        for t in [100, 200, 260] {
            s.ingest(rec("a", t, "features-report", &[], &[])).unwrap();
        }
        let st = s.group_stats("features-report", 300);
        assert_eq!(
            st,
            CandidateStats {
                frequency: 3.0,
                distance: 60.0,
                recency: 40.0
            }
        );
        s.ingest(rec("b", 50, "author-loader", &[], &[])).unwrap();
        assert_eq!(s.group_stats("author-loader", 300).distance, 0.0);
        let empty = s.group_stats("comment-loader", 300);
        assert_eq!(empty.frequency, 0.0);
        assert_eq!(empty.recency, DEFAULT_HISTORY_WINDOW);
    }

    #[test]
    fn predict_consumers_cases() {
        let mut s = store();
        let loader = fixtures::comment_loader_ir();
        assert!(s.predict_consumers(&loader).unwrap().is_empty());
        s.ingest(rec("loader", 1, "comment-loader", &[], &["comments@1"]))
            .unwrap();
        assert!(s.predict_consumers(&loader).unwrap().is_empty());
        s.ingest(rec("j", 2, "comments-by-author", &["comments@1"], &[]))
            .unwrap();
        let p = s.predict_consumers(&loader).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].ir_id, "comments-by-author");
        assert_eq!(p[0].executions.len(), 1);
    }

    #[test]
    fn input_stats_means() {
        let mut s = store();
        let mut r = rec("j", 2, "comments-by-author", &["comments@1"], &[]);
        r.inputs[0].selectivity = Some(0.2);
        r.inputs[0].distinct_keys = Some(10);
        s.ingest(r).unwrap();
        let mut r = rec("j", 3, "comments-by-author", &["comments@2"], &[]);
        r.inputs[0].selectivity = Some(0.4);
        s.ingest(r).unwrap();
        let st = s.input_stats("comments-by-author", "comments");
        assert!((st.selectivity.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(st.distinct_keys, Some(10.0));
        assert_eq!(st.mean_bytes, 100.0);
    }

    #[test]
    fn durable_store_reopens() {
        let dir = tempfile::tempdir().unwrap();
        {
            let st = HistoryStore::open(dir.path(), DEFAULT_HISTORY_WINDOW).unwrap();
            for g in fixtures::workflow_irs() {
                st.register_ir(g).unwrap();
            }
            for r in fixtures::workflow_history(2) {
                st.ingest(r).unwrap();
            }
        }
        let reopened = HistoryStore::open(dir.path(), DEFAULT_HISTORY_WINDOW).unwrap();
        let fresh = HistoryStore::from_parts(
            fixtures::workflow_irs(),
            fixtures::workflow_history(2),
            DEFAULT_HISTORY_WINDOW,
        )
        .unwrap();
        assert_eq!(
            reopened.snapshot().skeleton().to_json(),
            fresh.snapshot().skeleton().to_json()
        );
        assert_eq!(reopened.snapshot().len(), 10);
    }

    #[test]
    fn snapshot_is_isolated_from_later_ingest() {
        let st = HistoryStore::from_parts(fixtures::workflow_irs(), [], DEFAULT_HISTORY_WINDOW)
            .unwrap();
        let before = st.snapshot();
        st.ingest(rec("a", 1, "comment-loader", &[], &[])).unwrap();
        assert_eq!(before.len(), 0);
        assert_eq!(st.snapshot().len(), 1);
    }

    #[test]
    fn logical_names() {
        assert_eq!(logical_dataset("comments@17"), "comments");
        assert_eq!(logical_dataset("subreddits"), "subreddits");
    }
}
