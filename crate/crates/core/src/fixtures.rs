//! Reddit-style workflow fixtures used by the demo, the docs, and the tests.
//!
//! Three loaders write `comments`, `authors` and `subreddits`; the
//! feature extractor joins all three through a join-selection UDF whose
//! comment side branches on an opaque `classify` call.

use std::collections::BTreeMap;

use crate::enumerate::candidates_in;
use crate::history::{DatasetIo, ExecutionRecord};
use crate::ir::{IrEdge, IrGraph, IrNode, NodeKind};
use crate::sim::{ClusterConfig, DesiredCandidate, EnvSpec, PartitionScheme, SimDataset, WorkloadSpec};

fn n(id: u32, kind: NodeKind, label: &str, in_type: &str, out_type: &str) -> IrNode {
    IrNode::new(id, kind, label, in_type, out_type)
}

/// Three-way join over comments, authors and subreddits.
pub fn reddit_features_ir() -> IrGraph {
    use NodeKind::*;
    IrGraph::new(
        "reddit-features",
        vec![
            n(0, Scan, "comments", "", "CommentLine"),
            n(1, OpaqueFunc, "parse", "CommentLine", "json"),
            n(2, OpaqueFunc, "classify", "json", "bool"),
            n(3, Member, "author", "json", "string"),
            n(4, Member, "subreddit", "json", "string"),
            n(5, Conditional, "", "json", "string"),
            n(6, Scan, "authors", "", "AuthorLine"),
            n(7, OpaqueFunc, "csv_parse", "AuthorLine", "vector<string>"),
            n(8, Member, "name", "vector<string>", "string"),
            n(9, Scan, "subreddits", "", "SubredditLine"),
            n(10, OpaqueFunc, "json_parse", "SubredditLine", "json"),
            n(11, Member, "name", "json", "string"),
            n(12, Pair, "", "string", "pair<string,string>"),
            n(13, Pair, "", "string", "pair<string,string>"),
            n(14, Join, "", "pair<string,string>", "FeatureRow"),
            n(15, Write, "features", "FeatureRow", ""),
        ],
        vec![
            IrEdge::data(0, 1),
            IrEdge::data(1, 2),
            IrEdge::data(1, 3),
            IrEdge::data(1, 4),
            IrEdge::control(2, 5),
            IrEdge::data(3, 5),
            IrEdge::data(4, 5),
            IrEdge::data(6, 7),
            IrEdge::data(7, 8),
            IrEdge::data(9, 10),
            IrEdge::data(10, 11),
            IrEdge::data(5, 12),
            IrEdge::data(8, 12),
            IrEdge::data(5, 13),
            IrEdge::data(11, 13),
            IrEdge::data(12, 14),
            IrEdge::data(13, 14),
            IrEdge::data(14, 15),
        ],
    )
}

fn two_way_join(ir_id: &str, comment_member: &str, other: &str, other_parse: &str, out: &str) -> IrGraph {
    use NodeKind::*;
    IrGraph::new(
        ir_id,
        vec![
            n(0, Scan, "comments", "", "CommentLine"),
            n(1, OpaqueFunc, "parse", "CommentLine", "json"),
            n(2, Member, comment_member, "json", "string"),
            n(3, Scan, other, "", "Line"),
            n(4, OpaqueFunc, other_parse, "Line", "json"),
            n(5, Member, "name", "json", "string"),
            n(6, Pair, "", "string", "pair<string,string>"),
            n(7, Join, "", "pair<string,string>", "Row"),
            n(8, Write, out, "Row", ""),
        ],
        vec![
            IrEdge::data(0, 1),
            IrEdge::data(1, 2),
            IrEdge::data(3, 4),
            IrEdge::data(4, 5),
            IrEdge::data(2, 6),
            IrEdge::data(5, 6),
            IrEdge::data(6, 7),
            IrEdge::data(7, 8),
        ],
    )
}

/// Comments joined with authors on the comment's `author` member.
pub fn comments_author_join_ir() -> IrGraph {
    two_way_join("comments-by-author", "author", "authors", "csv_parse", "author_activity")
}

/// Comments joined with subreddits on the comment's `subreddit` member.
pub fn comments_subreddit_join_ir() -> IrGraph {
    two_way_join("comments-by-subreddit", "subreddit", "subreddits", "json_parse", "subreddit_activity")
}

fn loader(ir_id: &str, raw: &str, func: &str, out: &str) -> IrGraph {
    use NodeKind::*;
    IrGraph::new(
        ir_id,
        vec![
            n(0, Scan, raw, "", "RawLine"),
            n(1, OpaqueFunc, func, "RawLine", "Line"),
            n(2, Write, out, "Line", ""),
        ],
        vec![IrEdge::data(0, 1), IrEdge::data(1, 2)],
    )
}

pub fn comment_loader_ir() -> IrGraph {
    loader("comment-loader", "raw_comments", "schema_resolve", "comments")
}

pub fn author_loader_ir() -> IrGraph {
    loader("author-loader", "raw_authors", "dedup", "authors")
}

/// Summarises the feature extractor's output; a pure downstream consumer.
pub fn features_report_ir() -> IrGraph {
    use NodeKind::*;
    IrGraph::new(
        "features-report",
        vec![
            n(0, Scan, "features", "", "FeatureRow"),
            n(1, Member, "score", "FeatureRow", "double"),
            n(2, Aggregate, "", "double", "Summary"),
            n(3, Write, "report", "Summary", ""),
        ],
        vec![IrEdge::data(0, 1), IrEdge::data(1, 2), IrEdge::data(2, 3)],
    )
}

/// Every IR in the five-group workflow.
pub fn workflow_irs() -> Vec<IrGraph> {
    vec![
        comment_loader_ir(),
        reddit_features_ir(),
        author_loader_ir(),
        comments_author_join_ir(),
        features_report_ir(),
    ]
}

fn io(dataset: String, bytes: u64) -> DatasetIo {
    DatasetIo::new(dataset, bytes)
}

/// Execution log of the five-group workflow: comment loader (group 1)
/// feeding the feature extractor (group 2) and the author join (group 4);
/// the author loader (group 3) feeding both; the report (group 5) reading
/// the extractor's output. Each day repeats the whole chain.
pub fn workflow_history(days: u32) -> Vec<ExecutionRecord> {
    let mut out = Vec::new();
    for day in 0..days {
        let t = 1_000_000 + i64::from(day) * 86_400;
        let comments = format!("comments@{t}");
        let authors = format!("authors@{t}");
        let features = format!("features@{t}");
        out.push(ExecutionRecord {
            app_id: "comment-loader".into(),
            timestamp: t,
            ir_id: "comment-loader".into(),
            inputs: vec![io(format!("raw_comments@{t}"), 4 << 30)],
            outputs: vec![io(comments.clone(), 4 << 30)],
            latency: 120.0,
        });
        out.push(ExecutionRecord {
            app_id: "author-loader".into(),
            timestamp: t + 60,
            ir_id: "author-loader".into(),
            inputs: vec![io(format!("raw_authors@{t}"), 1 << 30)],
            outputs: vec![io(authors.clone(), 1 << 30)],
            latency: 40.0,
        });
        out.push(ExecutionRecord {
            app_id: "reddit-features".into(),
            timestamp: t + 600,
            ir_id: "reddit-features".into(),
            inputs: vec![
                io(comments.clone(), 4 << 30),
                io(authors.clone(), 1 << 30),
                io("subreddits".into(), 1 << 28),
            ],
            outputs: vec![io(features.clone(), 1 << 29)],
            latency: 900.0 + f64::from(day),
        });
        out.push(ExecutionRecord {
            app_id: "comments-by-author".into(),
            timestamp: t + 1200,
            ir_id: "comments-by-author".into(),
            inputs: vec![io(comments, 4 << 30), io(authors, 1 << 30)],
            outputs: vec![io(format!("author_activity@{t}"), 1 << 27)],
            latency: 600.0,
        });
        out.push(ExecutionRecord {
            app_id: "features-report".into(),
            timestamp: t + 3600,
            ir_id: "features-report".into(),
            inputs: vec![io(features, 1 << 29)],
            outputs: vec![io(format!("report@{t}"), 1 << 20)],
            latency: 30.0,
        });
    }
    out
}

fn desired(graph: &IrGraph) -> BTreeMap<String, DesiredCandidate> {
    graph
        .datasets()
        .into_iter()
        .filter_map(|d| {
            let c = candidates_in(graph, d).ok()?.into_iter().next()?;
            Some((
                d.to_string(),
                DesiredCandidate {
                    signature: c.signature().text().to_string(),
                    strategy: c.strategy,
                },
            ))
        })
        .collect()
}

fn workload(graph: &IrGraph, frequency: f64, recency: f64, complexity: &[(&str, f64)]) -> WorkloadSpec {
    WorkloadSpec {
        query_id: graph.ir_id().to_string(),
        ir_id: graph.ir_id().to_string(),
        inputs: graph.datasets().into_iter().map(str::to_string).collect(),
        desired: desired(graph),
        latency_table: BTreeMap::new(),
        frequency,
        distance: 86_400.0,
        recency,
        complexity: complexity.iter().map(|(d, c)| (d.to_string(), *c)).collect(),
        selectivity: BTreeMap::new(),
    }
}

/// Simulator environment mirroring [`workflow_history`]: an 8-node cluster and
/// the three joins over comments, authors and subreddits, each desiring the
/// candidates its IR enumerates.
pub fn workflow_env_spec() -> EnvSpec {
    let dataset = |id: &str, n: u64, object_bytes: f64| SimDataset {
        id: id.into(),
        n,
        object_bytes,
        key_model: None,
        applied: PartitionScheme::RoundRobin,
    };
    EnvSpec {
        cluster: ClusterConfig {
            m: 8,
            cores: 4.0,
            memory: 32e9,
            disk: 1e12,
            bandwidth: 1.25e9,
            base_cpu_rate: 4e9,
        },
        datasets: vec![
            dataset("comments", 4 << 20, 1024.0),
            dataset("authors", 4 << 20, 256.0),
            dataset("subreddits", 1 << 19, 512.0),
        ],
        workloads: vec![
            workload(
                &reddit_features_ir(),
                1.0,
                3000.0,
                &[("comments", 4.0), ("authors", 3.0), ("subreddits", 3.0)],
            ),
            workload(
                &comments_author_join_ir(),
                1.0,
                2400.0,
                &[("comments", 3.0), ("authors", 3.0)],
            ),
            workload(
                &comments_subreddit_join_ir(),
                0.5,
                2400.0,
                &[("comments", 3.0), ("subreddits", 3.0)],
            ),
        ],
        k: crate::features::DEFAULT_TOP_K,
        history_runs: 20.0,
        inclusion: 0.6,
        window: None,
    }
}
