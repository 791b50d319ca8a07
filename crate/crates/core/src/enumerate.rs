//! Partitioner candidate enumeration.
//!
//! A candidate for dataset `D` is a two-terminal subgraph of a consumer's IR
//! rooted at the scan of `D` and ending at a join anchor. [`search`] lists the
//! anchor-free scan-to-anchor paths; [`merge`] unions paths sharing the same
//! terminals into one candidate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{Flow, IrEdge, IrError, IrGraph, IrNode, NodeId, NodeKind, DEFAULT_PATH_CAP};
use crate::signature::{candidate_signature, CandidateSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Hash,
    Range,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Hash => f.write_str("hash"),
            Strategy::Range => f.write_str("range"),
        }
    }
}

/// A DAG with one source (`root`) and one sink (`leaf`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoTerminalDag {
    nodes: Vec<IrNode>,
    edges: Vec<IrEdge>,
    root: NodeId,
    leaf: NodeId,
}

impl TwoTerminalDag {
    /// Nodes and edges are sorted by id so equal subgraphs compare equal.
    pub fn new(mut nodes: Vec<IrNode>, mut edges: Vec<IrEdge>, root: NodeId, leaf: NodeId) -> Self {
        nodes.sort_by_key(|n| n.id);
        nodes.dedup_by_key(|n| n.id);
        edges.sort();
        edges.dedup();
        TwoTerminalDag {
            nodes,
            edges,
            root,
            leaf,
        }
    }

    /// The single path `path` of `graph` as a two-terminal DAG.
    pub fn from_path(graph: &IrGraph, path: &[NodeId]) -> Result<Self, IrError> {
        let nodes = path
            .iter()
            .map(|&id| graph.node(id).cloned().ok_or(IrError::UnknownNode(id)))
            .collect::<Result<Vec<_>, _>>()?;
        let edges = path
            .windows(2)
            .map(|w| IrEdge {
                src: w[0],
                dst: w[1],
                flow: graph.edge_flow(w[0], w[1]).unwrap_or(Flow::Data),
            })
            .collect();
        Ok(TwoTerminalDag::new(
            nodes,
            edges,
            path[0],
            *path.last().expect("non-empty path"),
        ))
    }

    pub fn nodes(&self) -> &[IrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[IrEdge] {
        &self.edges
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn leaf(&self) -> NodeId {
        self.leaf
    }

    pub fn node_ids(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    /// The subgraph as a standalone [`IrGraph`] for traversal.
    pub fn as_graph(&self) -> IrGraph {
        IrGraph::new("", self.nodes.clone(), self.edges.clone())
    }

    /// All root-to-leaf paths within the subgraph.
    pub fn paths(&self) -> Result<Vec<Vec<NodeId>>, IrError> {
        self.as_graph().find_all_paths(self.root, self.leaf)
    }

    /// Invariant check: unique Scan source at `root`, unique sink at `leaf`,
    /// acyclic, every node on a root-to-leaf path.
    pub fn check(&self) -> Result<(), String> {
        let g = self.as_graph();
        if !g.contains(self.root) || !g.contains(self.leaf) {
            return Err("terminal missing from node set".into());
        }
        if g.node(self.root).map(|n| n.kind) != Some(NodeKind::Scan) {
            return Err(format!("root {} is not a Scan", self.root));
        }
        for e in &self.edges {
            if !g.contains(e.src) || !g.contains(e.dst) || e.src == e.dst {
                return Err(format!("bad edge {}->{}", e.src, e.dst));
            }
        }
        let (_, cyclic) = g.topological_order();
        if !cyclic.is_empty() {
            return Err(format!("cycle through {cyclic:?}"));
        }
        let sources: Vec<NodeId> = self
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|&id| g.parents(id).is_empty())
            .collect();
        let sinks: Vec<NodeId> = self
            .nodes
            .iter()
            .map(|n| n.id)
            .filter(|&id| g.children(id).is_empty())
            .collect();
        if sources != [self.root] {
            return Err(format!("sources {sources:?}, expected [{}]", self.root));
        }
        if sinks != [self.leaf] {
            return Err(format!("sinks {sinks:?}, expected [{}]", self.leaf));
        }
        let covered: BTreeSet<NodeId> = self
            .paths()
            .map_err(|e| e.to_string())?
            .into_iter()
            .flatten()
            .collect();
        if covered != self.node_ids() {
            return Err("node not on a root-to-leaf path".into());
        }
        Ok(())
    }
}

/// One anchor-free path from a dataset's scan to a join anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialCandidate {
    pub dataset: String,
    pub origin_ir: String,
    pub strategy: Strategy,
    pub path: TwoTerminalDag,
}

/// A two-terminal key-projection subgraph paired with a partition strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CandidateRepr", into = "CandidateRepr")]
pub struct PartitionerCandidate {
    pub subgraph: TwoTerminalDag,
    pub dataset: String,
    pub origin_ir: String,
    pub origin_root: NodeId,
    pub origin_leaf: NodeId,
    pub strategy: Strategy,
    signature: CandidateSignature,
}

impl PartitionerCandidate {
    pub fn new(
        subgraph: TwoTerminalDag,
        dataset: impl Into<String>,
        origin_ir: impl Into<String>,
        strategy: Strategy,
    ) -> Result<Self, IrError> {
        let signature = candidate_signature(&subgraph)?;
        Ok(PartitionerCandidate {
            origin_root: subgraph.root(),
            origin_leaf: subgraph.leaf(),
            subgraph,
            dataset: dataset.into(),
            origin_ir: origin_ir.into(),
            strategy,
            signature,
        })
    }

    pub fn signature(&self) -> &CandidateSignature {
        &self.signature
    }

    /// The same key projection under another strategy.
    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        PartitionerCandidate {
            strategy,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("candidates always serialize")
    }
}

#[derive(Serialize, Deserialize)]
struct CandidateRepr {
    dataset: String,
    origin_ir: String,
    origin_root: NodeId,
    origin_leaf: NodeId,
    strategy: Strategy,
    nodes: Vec<IrNode>,
    edges: Vec<IrEdge>,
    signature: String,
}

impl From<PartitionerCandidate> for CandidateRepr {
    fn from(c: PartitionerCandidate) -> Self {
        CandidateRepr {
            dataset: c.dataset,
            origin_ir: c.origin_ir,
            origin_root: c.origin_root,
            origin_leaf: c.origin_leaf,
            strategy: c.strategy,
            signature: c.signature.text().to_string(),
            nodes: c.subgraph.nodes,
            edges: c.subgraph.edges,
        }
    }
}

impl TryFrom<CandidateRepr> for PartitionerCandidate {
    type Error = String;

    fn try_from(r: CandidateRepr) -> Result<Self, String> {
        let dag = TwoTerminalDag::new(r.nodes, r.edges, r.origin_root, r.origin_leaf);
        dag.check()?;
        let c = PartitionerCandidate::new(dag, r.dataset, r.origin_ir, r.strategy)
            .map_err(|e| e.to_string())?;
        if c.signature.text() != r.signature {
            return Err(format!(
                "stored signature `{}` does not match subgraph signature `{}`",
                r.signature,
                c.signature.text()
            ));
        }
        Ok(c)
    }
}

/// Strategy implied by what the anchor feeds: sort keys need an ordering,
/// join and aggregate keys only need hashing.
pub fn strategy_for_anchor(graph: &IrGraph, anchor: NodeId) -> Strategy {
    let feeds_sort = graph.children(anchor).iter().any(|&(p, _)| {
        graph
            .children(p)
            .iter()
            .any(|&(c, _)| graph.node(c).map(|n| n.kind) == Some(NodeKind::Sort))
    });
    if feeds_sort {
        Strategy::Range
    } else {
        Strategy::Hash
    }
}

/// All anchor-free simple paths from `scan` to a join anchor, one partial per path.
pub fn search(graph: &IrGraph, scan: NodeId) -> Result<Vec<PartialCandidate>, IrError> {
    let scan_node = graph.node(scan).ok_or(IrError::UnknownNode(scan))?;
    let mut raw = Vec::new();
    let mut path = vec![scan];
    let mut on_path = BTreeSet::from([scan]);
    search_from(graph, &mut path, &mut on_path, &mut raw)
        .map_err(|()| IrError::PathExplosion {
            src: scan,
            dst: scan,
            cap: DEFAULT_PATH_CAP,
        })?;
    raw.sort();
    raw.into_iter()
        .map(|p| {
            let leaf = *p.last().expect("paths have two or more nodes");
            Ok(PartialCandidate {
                dataset: scan_node.label.clone(),
                origin_ir: graph.ir_id().to_string(),
                strategy: strategy_for_anchor(graph, leaf),
                path: TwoTerminalDag::from_path(graph, &p)?,
            })
        })
        .collect()
}

fn search_from(
    graph: &IrGraph,
    path: &mut Vec<NodeId>,
    on_path: &mut BTreeSet<NodeId>,
    out: &mut Vec<Vec<NodeId>>,
) -> Result<(), ()> {
    let here = *path.last().expect("path never empty");
    let mut last = None;
    for &(child, _) in graph.children(here) {
        if last == Some(child) || on_path.contains(&child) {
            continue;
        }
        last = Some(child);
        path.push(child);
        if graph.is_join_anchor(child) {
            if out.len() == DEFAULT_PATH_CAP {
                return Err(());
            }
            out.push(path.clone());
        } else {
            on_path.insert(child);
            let r = search_from(graph, path, on_path, out);
            on_path.remove(&child);
            if r.is_err() {
                path.pop();
                return r;
            }
        }
        path.pop();
    }
    Ok(())
}

/// Unions partials sharing `(root, leaf)` into one candidate each, sorted by
/// `(origin_ir, root, leaf)`.
pub fn merge(partials: &[PartialCandidate]) -> Result<Vec<PartitionerCandidate>, IrError> {
    type Group<'a> = (&'a PartialCandidate, BTreeMap<NodeId, IrNode>, BTreeSet<IrEdge>);
    let mut groups: BTreeMap<(&str, NodeId, NodeId), Group> = BTreeMap::new();
    for p in partials {
        let key = (p.origin_ir.as_str(), p.path.root(), p.path.leaf());
        let entry = groups
            .entry(key)
            .or_insert_with(|| (p, BTreeMap::new(), BTreeSet::new()));
        for n in p.path.nodes() {
            entry.1.entry(n.id).or_insert_with(|| n.clone());
        }
        entry.2.extend(p.path.edges().iter().copied());
    }
    groups
        .into_iter()
        .map(|((_, root, leaf), (first, nodes, edges))| {
            let dag = TwoTerminalDag::new(
                nodes.into_values().collect(),
                edges.into_iter().collect(),
                root,
                leaf,
            );
            PartitionerCandidate::new(dag, first.dataset.clone(), first.origin_ir.clone(), first.strategy)
        })
        .collect()
}

/// Candidates of `dataset` from one graph: `merge(search(graph, find_scanner(dataset)))`.
pub fn candidates_in(graph: &IrGraph, dataset: &str) -> Result<Vec<PartitionerCandidate>, IrError> {
    match graph.find_scanner(dataset)? {
        Some(scan) => merge(&search(graph, scan)?),
        None => Ok(Vec::new()),
    }
}

/// A deduplicated candidate plus every consumer IR it was found in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcedCandidate {
    pub candidate: PartitionerCandidate,
    pub sources: Vec<String>,
}

/// Union of candidates across consumers, deduplicated by (signature, strategy)
/// keeping the earliest origin.
pub fn enumerate_candidates(
    consumers: &[IrGraph],
    dataset: &str,
) -> Result<Vec<PartitionerCandidate>, IrError> {
    Ok(enumerate_with_sources(consumers, dataset)?
        .into_iter()
        .map(|s| s.candidate)
        .collect())
}

pub fn enumerate_with_sources(
    consumers: &[IrGraph],
    dataset: &str,
) -> Result<Vec<SourcedCandidate>, IrError> {
    let mut out: Vec<SourcedCandidate> = Vec::new();
    let mut seen: BTreeMap<(String, Strategy), usize> = BTreeMap::new();
    for graph in consumers {
        for c in candidates_in(graph, dataset)? {
            let key = (c.signature().text().to_string(), c.strategy);
            match seen.get(&key) {
                Some(&i) => {
                    let src = c.origin_ir.clone();
                    if !out[i].sources.contains(&src) {
                        out[i].sources.push(src);
                    }
                }
                None => {
                    seen.insert(key, out.len());
                    out.push(SourcedCandidate {
                        sources: vec![c.origin_ir.clone()],
                        candidate: c,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// The candidate a consumer would enumerate for `(scan, anchor)`: the union of
/// anchor-free paths between them. `None` if no such path exists.
pub fn induced_candidate(
    graph: &IrGraph,
    scan: NodeId,
    anchor: NodeId,
) -> Result<Option<PartitionerCandidate>, IrError> {
    let partials: Vec<PartialCandidate> = search(graph, scan)?
        .into_iter()
        .filter(|p| p.path.leaf() == anchor)
        .collect();
    Ok(merge(&partials)?.into_iter().next())
}
