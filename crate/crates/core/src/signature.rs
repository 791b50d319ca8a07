//! Canonical signatures and signature-based partitioning matching.
//!
//! A path signature concatenates `kind:label:out_type` tokens with `-d>` /
//! `-c>` edge markers. Candidate and workload signatures are the sorted,
//! deduplicated set of their path signatures joined by `|`; node ids never
//! enter any signature.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::enumerate::{induced_candidate, PartitionerCandidate, TwoTerminalDag};
use crate::ir::{Flow, IrError, IrGraph, IrNode, NodeId};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathSignature(String);

impl PathSignature {
    pub fn text(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PathSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSignature(String);

impl CandidateSignature {
    pub fn from_paths(paths: &BTreeSet<PathSignature>) -> Self {
        CandidateSignature(join_sorted(paths))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CandidateSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// FNV-1a hash of a workload's sorted scan-to-write path signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WorkloadSignature(pub u64);

impl WorkloadSignature {
    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 16 {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(WorkloadSignature)
    }
}

impl fmt::Display for WorkloadSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for WorkloadSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for WorkloadSignature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        WorkloadSignature::from_hex(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad workload signature `{s}`")))
    }
}

fn join_sorted(paths: &BTreeSet<PathSignature>) -> String {
    let parts: Vec<&str> = paths.iter().map(PathSignature::text).collect();
    parts.join("|")
}

pub fn node_token(node: &IrNode) -> String {
    format!("{}:{}:{}", node.kind, node.label, node.out_type)
}

fn flow_marker(flow: Flow) -> &'static str {
    match flow {
        Flow::Data => "-d>",
        Flow::Control => "-c>",
    }
}

/// Signature of `path` in `graph`. Consecutive ids must be joined by an edge;
/// a missing edge is rendered as a data edge.
pub fn path_signature(graph: &IrGraph, path: &[NodeId]) -> PathSignature {
    let mut out = String::new();
    for (i, &id) in path.iter().enumerate() {
        if i > 0 {
            let flow = graph.edge_flow(path[i - 1], id).unwrap_or(Flow::Data);
            out.push_str(flow_marker(flow));
        }
        match graph.node(id) {
            Some(n) => out.push_str(&node_token(n)),
            None => out.push('?'),
        }
    }
    PathSignature(out)
}

/// Distinct root-to-leaf path signatures of a two-terminal DAG.
pub fn path_signature_set(dag: &TwoTerminalDag) -> Result<BTreeSet<PathSignature>, IrError> {
    let g = dag.as_graph();
    Ok(g.find_all_paths(dag.root(), dag.leaf())?
        .iter()
        .map(|p| path_signature(&g, p))
        .collect())
}

pub fn candidate_signature(dag: &TwoTerminalDag) -> Result<CandidateSignature, IrError> {
    Ok(CandidateSignature::from_paths(&path_signature_set(dag)?))
}

/// Sorted, `|`-joined distinct scan-to-write path signatures (pre-hash text).
pub fn workload_signature_text(graph: &IrGraph) -> Result<String, IrError> {
    let mut sigs = BTreeSet::new();
    for &s in graph.scans() {
        for &w in graph.writes() {
            for p in graph.find_all_paths(s, w)? {
                sigs.insert(path_signature(graph, &p));
            }
        }
    }
    Ok(join_sorted(&sigs))
}

pub fn workload_signature(graph: &IrGraph) -> Result<WorkloadSignature, IrError> {
    Ok(WorkloadSignature(fnv1a64(
        workload_signature_text(graph)?.as_bytes(),
    )))
}

/// A consumer subgraph found equivalent to an applied partitioning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchedSubgraph {
    pub scan: NodeId,
    pub anchor: NodeId,
}

/// For each anchor, compares the sorted path-signature set of the consumer's
/// induced `(scan, anchor)` candidate against `applied_sigs`; strategies must
/// also agree. Results are sorted by anchor id.
pub fn partitioning_match(
    applied: &PartitionerCandidate,
    applied_sigs: &BTreeSet<PathSignature>,
    graph: &IrGraph,
    anchors: &BTreeSet<NodeId>,
) -> Result<Vec<MatchedSubgraph>, IrError> {
    let scan = graph
        .find_scanner(&applied.dataset)?
        .ok_or_else(|| IrError::AbsentScan(applied.dataset.clone()))?;
    let mut out = Vec::new();
    for &anchor in anchors {
        let Some(local) = induced_candidate(graph, scan, anchor)? else {
            continue;
        };
        if local.strategy != applied.strategy {
            continue;
        }
        if &path_signature_set(&local.subgraph)? == applied_sigs {
            out.push(MatchedSubgraph { scan, anchor });
        }
    }
    Ok(out)
}

/// Convenience wrapper: matches `applied` against every join anchor reachable
/// from the dataset's scan in `graph`.
pub fn match_candidate(
    applied: &PartitionerCandidate,
    graph: &IrGraph,
) -> Result<Vec<MatchedSubgraph>, IrError> {
    let scan = graph
        .find_scanner(&applied.dataset)?
        .ok_or_else(|| IrError::AbsentScan(applied.dataset.clone()))?;
    let anchors: BTreeSet<NodeId> = graph.reachable_anchors(scan).into_iter().collect();
    let sigs = path_signature_set(&applied.subgraph)?;
    partitioning_match(applied, &sigs, graph, &anchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::{candidates_in, search};
    use crate::fixtures;
    use crate::ir::{IrEdge, NodeKind};

    fn two_node(ids: (NodeId, NodeId)) -> IrGraph {
        IrGraph::new(
            "p",
            vec![
                IrNode::new(ids.0, NodeKind::Scan, "D1", "", "string"),
                IrNode::new(ids.1, NodeKind::Member, "author", "string", "string"),
            ],
            vec![IrEdge::data(ids.0, ids.1)],
        )
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn path_signature_token_scheme() {
        let g = two_node((0, 1));
        assert_eq!(
            path_signature(&g, &[0, 1]).text(),
            "Scan:D1:string-d>Member:author:string"
        );
        assert_eq!(path_signature(&g, &[1]).text(), "Member:author:string");
        let renumbered = two_node((41, 7));
        assert_eq!(path_signature(&renumbered, &[41, 7]), path_signature(&g, &[0, 1]));
    }

    #[test]
    fn control_edges_are_marked() {
        let g = IrGraph::new(
            "c",
            vec![
                IrNode::new(0, NodeKind::Scan, "D", "", "T"),
                IrNode::new(1, NodeKind::OpaqueFunc, "classify", "T", "bool"),
            ],
            vec![IrEdge::control(0, 1)],
        );
        assert_eq!(
            path_signature(&g, &[0, 1]).text(),
            "Scan:D:T-c>OpaqueFunc:classify:bool"
        );
    }

    #[test]
    fn diamond_candidate_signature() {
        let dag = TwoTerminalDag::new(
            vec![
                IrNode::new(0, NodeKind::Scan, "D", "", "T"),
                IrNode::new(1, NodeKind::Member, "b", "T", "K"),
                IrNode::new(2, NodeKind::Member, "a", "T", "K"),
                IrNode::new(3, NodeKind::Equal, "", "K", "bool"),
            ],
            vec![
                IrEdge::data(0, 1),
                IrEdge::data(0, 2),
                IrEdge::data(1, 3),
                IrEdge::data(2, 3),
            ],
            0,
            3,
        );
        assert_eq!(
            candidate_signature(&dag).unwrap().text(),
            "Scan:D:T-d>Member:a:K-d>Equal::bool|Scan:D:T-d>Member:b:K-d>Equal::bool"
        );
    }

    #[test]
    fn single_path_candidate_equals_path_signature() {
        let g = two_node((0, 1));
        let dag = TwoTerminalDag::from_path(&g, &[0, 1]).unwrap();
        assert_eq!(
            candidate_signature(&dag).unwrap().text(),
            path_signature(&g, &[0, 1]).text()
        );
    }

    #[test]
    fn merged_comments_signature_is_sorted_join_of_partials() {
        let g = fixtures::reddit_features_ir();
        let scan = g.find_scanner("comments").unwrap().unwrap();
        let mut partial_sigs: Vec<String> = search(&g, scan)
            .unwrap()
            .iter()
            .map(|p| candidate_signature(&p.path).unwrap().text().to_string())
            .collect();
        partial_sigs.sort();
        let merged = candidates_in(&g, "comments").unwrap().remove(0);
        assert_eq!(merged.signature().text(), partial_sigs.join("|"));
    }

    #[test]
    fn workload_signature_properties() {
        let g = fixtures::reddit_features_ir();
        let h = workload_signature(&g).unwrap();
        let back = IrGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(workload_signature(&back).unwrap(), h);

        // Shift every id by 100.
        let shifted = IrGraph::new(
            "shifted",
            g.nodes()
                .iter()
                .map(|n| IrNode { id: n.id + 100, ..n.clone() })
                .collect(),
            g.edges()
                .iter()
                .map(|e| IrEdge { src: e.src + 100, dst: e.dst + 100, flow: e.flow })
                .collect(),
        );
        assert_eq!(workload_signature(&shifted).unwrap(), h);

        let relabeled = IrGraph::from_json(&g.to_json().replace("\"author\"", "\"poster\"")).unwrap();
        assert_ne!(workload_signature(&relabeled).unwrap(), h);

        assert_eq!(h.to_hex().len(), 16);
        assert_eq!(WorkloadSignature::from_hex(&h.to_hex()), Some(h));
        assert_eq!(serde_json::to_string(&h).unwrap(), format!("\"{}\"", h.to_hex()));
    }

    #[test]
    fn same_workload_matches_its_own_candidate() {
        let g = fixtures::reddit_features_ir();
        let c = candidates_in(&g, "comments").unwrap().remove(0);
        let m = match_candidate(&c, &g).unwrap();
        assert_eq!(m, vec![MatchedSubgraph { scan: c.origin_root, anchor: c.origin_leaf }]);
    }

    #[test]
    fn author_key_does_not_match_subreddit_join() {
        let by_author = fixtures::comments_author_join_ir();
        let by_subreddit = fixtures::comments_subreddit_join_ir();
        let applied = candidates_in(&by_author, "comments").unwrap().remove(0);
        assert!(match_candidate(&applied, &by_subreddit).unwrap().is_empty());
        assert!(!match_candidate(&applied, &by_author).unwrap().is_empty());
    }

    #[test]
    fn strategy_must_agree() {
        let g = fixtures::reddit_features_ir();
        let c = candidates_in(&g, "comments").unwrap().remove(0);
        let ranged = c.with_strategy(crate::enumerate::Strategy::Range);
        assert!(match_candidate(&ranged, &g).unwrap().is_empty());
    }

    #[test]
    fn absent_scan_is_an_error() {
        let g = fixtures::reddit_features_ir();
        let mut c = candidates_in(&g, "comments").unwrap().remove(0);
        c.dataset = "ghost".into();
        assert!(matches!(match_candidate(&c, &g), Err(IrError::AbsentScan(_))));
    }
}
