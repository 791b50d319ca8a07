//! IR graphs: DAGs of atomic computations with scan and write terminals.
//!
//! Graphs are built once through [`IrGraph::new`] (or deserialized from JSON)
//! and are immutable afterwards. Adjacency lists are sorted by node id so
//! every traversal below is deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default limit on the number of distinct paths a single `(src, dst)` query may return.
pub const DEFAULT_PATH_CAP: usize = 10_000;

/// Graph-local node identifier. Carries no meaning across graphs.
pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("dataset `{dataset}` is read by more than one scan node ({first} and {second})")]
    DuplicateScan {
        dataset: String,
        first: NodeId,
        second: NodeId,
    },
    #[error("more than {cap} distinct paths from node {src} to node {dst}")]
    PathExplosion { src: NodeId, dst: NodeId, cap: usize },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("dataset `{0}` is not read by the graph")]
    AbsentScan(String),
}

/// The closed vocabulary of IR node kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    // lambda abstractions
    Member,
    Method,
    Literal,
    SelfId,
    OpaqueFunc,
    // higher-order composers
    Equal,
    NotEqual,
    LessThan,
    GreaterThan,
    And,
    Or,
    Not,
    Add,
    Subtract,
    Multiply,
    Construct,
    Conditional,
    Index,
    // collection operators
    Scan,
    Write,
    Apply,
    Hash,
    Filter,
    Flatten,
    Join,
    Aggregate,
    Partition,
    Pair,
    Sort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindCategory {
    LambdaAbstraction,
    Composer,
    CollectionOperator,
}

impl NodeKind {
    pub const ALL: [NodeKind; 29] = [
        NodeKind::Member,
        NodeKind::Method,
        NodeKind::Literal,
        NodeKind::SelfId,
        NodeKind::OpaqueFunc,
        NodeKind::Equal,
        NodeKind::NotEqual,
        NodeKind::LessThan,
        NodeKind::GreaterThan,
        NodeKind::And,
        NodeKind::Or,
        NodeKind::Not,
        NodeKind::Add,
        NodeKind::Subtract,
        NodeKind::Multiply,
        NodeKind::Construct,
        NodeKind::Conditional,
        NodeKind::Index,
        NodeKind::Scan,
        NodeKind::Write,
        NodeKind::Apply,
        NodeKind::Hash,
        NodeKind::Filter,
        NodeKind::Flatten,
        NodeKind::Join,
        NodeKind::Aggregate,
        NodeKind::Partition,
        NodeKind::Pair,
        NodeKind::Sort,
    ];

    pub fn category(self) -> KindCategory {
        use NodeKind::*;
        match self {
            Member | Method | Literal | SelfId | OpaqueFunc => KindCategory::LambdaAbstraction,
            Equal | NotEqual | LessThan | GreaterThan | And | Or | Not | Add | Subtract
            | Multiply | Construct | Conditional | Index => KindCategory::Composer,
            Scan | Write | Apply | Hash | Filter | Flatten | Join | Aggregate | Partition
            | Pair | Sort => KindCategory::CollectionOperator,
        }
    }

    /// Kinds whose label is mandatory.
    pub fn requires_label(self) -> bool {
        matches!(
            self,
            NodeKind::Member
                | NodeKind::Method
                | NodeKind::OpaqueFunc
                | NodeKind::Literal
                | NodeKind::Scan
                | NodeKind::Write
        )
    }

    pub fn as_str(self) -> &'static str {
        use NodeKind::*;
        match self {
            Member => "Member",
            Method => "Method",
            Literal => "Literal",
            SelfId => "SelfId",
            OpaqueFunc => "OpaqueFunc",
            Equal => "Equal",
            NotEqual => "NotEqual",
            LessThan => "LessThan",
            GreaterThan => "GreaterThan",
            And => "And",
            Or => "Or",
            Not => "Not",
            Add => "Add",
            Subtract => "Subtract",
            Multiply => "Multiply",
            Construct => "Construct",
            Conditional => "Conditional",
            Index => "Index",
            Scan => "Scan",
            Write => "Write",
            Apply => "Apply",
            Hash => "Hash",
            Filter => "Filter",
            Flatten => "Flatten",
            Join => "Join",
            Aggregate => "Aggregate",
            Partition => "Partition",
            Pair => "Pair",
            Sort => "Sort",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrNode {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub in_type: String,
    #[serde(default)]
    pub out_type: String,
}

impl IrNode {
    pub fn new(
        id: NodeId,
        kind: NodeKind,
        label: impl Into<String>,
        in_type: impl Into<String>,
        out_type: impl Into<String>,
    ) -> Self {
        IrNode {
            id,
            kind,
            label: label.into(),
            in_type: in_type.into(),
            out_type: out_type.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Flow {
    Data,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IrEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub flow: Flow,
}

impl IrEdge {
    pub fn data(src: NodeId, dst: NodeId) -> Self {
        IrEdge {
            src,
            dst,
            flow: Flow::Data,
        }
    }

    pub fn control(src: NodeId, dst: NodeId) -> Self {
        IrEdge {
            src,
            dst,
            flow: Flow::Control,
        }
    }
}

/// One violated graph invariant, with the offending ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Violation {
    /// S empty.
    NoScans,
    /// O empty.
    NoWrites,
    DuplicateNodeId(NodeId),
    DanglingEdge { src: NodeId, dst: NodeId },
    SelfLoop(NodeId),
    DuplicateEdge { src: NodeId, dst: NodeId },
    /// Nodes that cannot be topologically ordered.
    Cycle(Vec<NodeId>),
    ScanWithParents(NodeId),
    WriteWithChildren(NodeId),
    MissingLabel(NodeId),
    DuplicateScan { dataset: String, nodes: Vec<NodeId> },
    /// Node not on any scan-to-write path.
    Unanchored(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoScans => write!(f, "S empty"),
            Violation::NoWrites => write!(f, "O empty"),
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            Violation::DanglingEdge { src, dst } => write!(f, "edge {src}->{dst} names a missing node"),
            Violation::SelfLoop(id) => write!(f, "self loop on {id}"),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge {src}->{dst}"),
            Violation::Cycle(ids) => write!(f, "cycle through {ids:?}"),
            Violation::ScanWithParents(id) => write!(f, "scan {id} has incoming edges"),
            Violation::WriteWithChildren(id) => write!(f, "write {id} has outgoing edges"),
            Violation::MissingLabel(id) => write!(f, "node {id} requires a label"),
            Violation::DuplicateScan { dataset, nodes } => {
                write!(f, "dataset `{dataset}` scanned by {nodes:?}")
            }
            Violation::Unanchored(id) => write!(f, "node {id} is not on any scan->write path"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IrGraphRepr {
    ir_id: String,
    nodes: Vec<IrNode>,
    edges: Vec<IrEdge>,
}

/// A workload's IR graph `(V, E, S, O)`.
///
/// `S` and `O` are derived: every `Scan` node is a scan, every `Write` node a write.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "IrGraphRepr", into = "IrGraphRepr")]
pub struct IrGraph {
    ir_id: String,
    nodes: Vec<IrNode>,
    edges: Vec<IrEdge>,
    index: BTreeMap<NodeId, usize>,
    children: BTreeMap<NodeId, Vec<(NodeId, Flow)>>,
    parents: BTreeMap<NodeId, Vec<(NodeId, Flow)>>,
    scans: BTreeSet<NodeId>,
    writes: BTreeSet<NodeId>,
}

impl From<IrGraphRepr> for IrGraph {
    fn from(r: IrGraphRepr) -> Self {
        IrGraph::new(r.ir_id, r.nodes, r.edges)
    }
}

impl From<IrGraph> for IrGraphRepr {
    fn from(g: IrGraph) -> Self {
        IrGraphRepr {
            ir_id: g.ir_id,
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl PartialEq for IrGraph {
    fn eq(&self, other: &Self) -> bool {
        self.ir_id == other.ir_id && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl IrGraph {
    /// Builds the graph and its adjacency index. Never fails; call [`IrGraph::validate`]
    /// to check the structural invariants.
    pub fn new(ir_id: impl Into<String>, nodes: Vec<IrNode>, edges: Vec<IrEdge>) -> Self {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            index.entry(n.id).or_insert(i);
        }
        let mut children: BTreeMap<NodeId, Vec<(NodeId, Flow)>> = BTreeMap::new();
        let mut parents: BTreeMap<NodeId, Vec<(NodeId, Flow)>> = BTreeMap::new();
        for e in &edges {
            children.entry(e.src).or_default().push((e.dst, e.flow));
            parents.entry(e.dst).or_default().push((e.src, e.flow));
        }
        for list in children.values_mut().chain(parents.values_mut()) {
            list.sort();
            list.dedup();
        }
        let scans = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Scan)
            .map(|n| n.id)
            .collect();
        let writes = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Write)
            .map(|n| n.id)
            .collect();
        IrGraph {
            ir_id: ir_id.into(),
            nodes,
            edges,
            index,
            children,
            parents,
            scans,
            writes,
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("IR graphs always serialize")
    }

    pub fn ir_id(&self) -> &str {
        &self.ir_id
    }

    pub fn nodes(&self) -> &[IrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[IrEdge] {
        &self.edges
    }

    pub fn scans(&self) -> &BTreeSet<NodeId> {
        &self.scans
    }

    pub fn writes(&self) -> &BTreeSet<NodeId> {
        &self.writes
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<&IrNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    /// Children sorted by id, each with the flow kind of the connecting edge.
    pub fn children(&self, id: NodeId) -> &[(NodeId, Flow)] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn parents(&self, id: NodeId) -> &[(NodeId, Flow)] {
        self.parents.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Flow of the edge `src -> dst`, if present. Data wins if both exist.
    pub fn edge_flow(&self, src: NodeId, dst: NodeId) -> Option<Flow> {
        self.children(src)
            .iter()
            .find(|(c, _)| *c == dst)
            .map(|(_, f)| *f)
    }

    fn kind_of(&self, id: NodeId) -> Option<NodeKind> {
        self.node(id).map(|n| n.kind)
    }

    /// Kahn's algorithm, smallest ready id first. Returns the order and the
    /// ids left over when the graph has a cycle.
    pub fn topological_order(&self) -> (Vec<NodeId>, Vec<NodeId>) {
        // Count distinct known parents: a data and a control edge between the
        // same pair must not be counted twice.
        let mut indeg: BTreeMap<NodeId, usize> = self
            .index
            .keys()
            .map(|&id| {
                let ps: BTreeSet<NodeId> = self
                    .parents(id)
                    .iter()
                    .map(|(p, _)| *p)
                    .filter(|p| self.contains(*p))
                    .collect();
                (id, ps.len())
            })
            .collect();
        let mut ready: BTreeSet<NodeId> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(indeg.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            let mut seen = BTreeSet::new();
            for &(c, _) in self.children(id) {
                if !seen.insert(c) {
                    continue;
                }
                if let Some(d) = indeg.get_mut(&c) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        let placed: BTreeSet<NodeId> = order.iter().copied().collect();
        let rest = self
            .index
            .keys()
            .copied()
            .filter(|id| !placed.contains(id))
            .collect();
        (order, rest)
    }

    /// Checks every graph invariant and reports each violation found.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        if self.scans.is_empty() {
            out.push(Violation::NoScans);
        }
        if self.writes.is_empty() {
            out.push(Violation::NoWrites);
        }
        let mut seen_ids = BTreeSet::new();
        for n in &self.nodes {
            if !seen_ids.insert(n.id) {
                out.push(Violation::DuplicateNodeId(n.id));
            }
            if n.kind.requires_label() && n.label.is_empty() {
                out.push(Violation::MissingLabel(n.id));
            }
        }
        let mut seen_edges = BTreeSet::new();
        for e in &self.edges {
            if !self.contains(e.src) || !self.contains(e.dst) {
                out.push(Violation::DanglingEdge {
                    src: e.src,
                    dst: e.dst,
                });
            }
            if e.src == e.dst {
                out.push(Violation::SelfLoop(e.src));
            }
            if !seen_edges.insert((e.src, e.dst)) {
                out.push(Violation::DuplicateEdge {
                    src: e.src,
                    dst: e.dst,
                });
            }
        }
        let (_, cyclic) = self.topological_order();
        if !cyclic.is_empty() {
            out.push(Violation::Cycle(cyclic));
        }
        for &s in &self.scans {
            if !self.parents(s).is_empty() {
                out.push(Violation::ScanWithParents(s));
            }
        }
        for &w in &self.writes {
            if !self.children(w).is_empty() {
                out.push(Violation::WriteWithChildren(w));
            }
        }
        let mut by_dataset: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
        for &s in &self.scans {
            if let Some(n) = self.node(s) {
                by_dataset.entry(n.label.as_str()).or_default().push(s);
            }
        }
        for (dataset, nodes) in by_dataset {
            if nodes.len() > 1 {
                out.push(Violation::DuplicateScan {
                    dataset: dataset.to_string(),
                    nodes,
                });
            }
        }
        let from_scan = self.reach(self.scans.iter().copied(), |g, id| g.children(id));
        let to_write = self.reach(self.writes.iter().copied(), |g, id| g.parents(id));
        for id in self.index.keys() {
            if !(from_scan.contains(id) && to_write.contains(id)) {
                out.push(Violation::Unanchored(*id));
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    fn reach<'a>(
        &'a self,
        start: impl Iterator<Item = NodeId>,
        next: impl Fn(&'a IrGraph, NodeId) -> &'a [(NodeId, Flow)],
    ) -> BTreeSet<NodeId> {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut queue: VecDeque<NodeId> = start.collect();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            for &(n, _) in next(self, id) {
                if !seen.contains(&n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// The unique scan node reading `dataset`, if any.
    pub fn find_scanner(&self, dataset: &str) -> Result<Option<NodeId>, IrError> {
        let mut found: Option<NodeId> = None;
        for &s in &self.scans {
            if self.node(s).is_some_and(|n| n.label == dataset) {
                if let Some(first) = found {
                    return Err(IrError::DuplicateScan {
                        dataset: dataset.to_string(),
                        first,
                        second: s,
                    });
                }
                found = Some(s);
            }
        }
        Ok(found)
    }

    /// Datasets read by this graph, in scan-id order.
    pub fn datasets(&self) -> Vec<&str> {
        self.scans
            .iter()
            .filter_map(|&s| self.node(s).map(|n| n.label.as_str()))
            .collect()
    }

    /// All simple directed paths `src -> dst` in lexicographic order, capped at
    /// [`DEFAULT_PATH_CAP`].
    pub fn find_all_paths(&self, src: NodeId, dst: NodeId) -> Result<Vec<Vec<NodeId>>, IrError> {
        self.find_all_paths_capped(src, dst, DEFAULT_PATH_CAP)
    }

    pub fn find_all_paths_capped(
        &self,
        src: NodeId,
        dst: NodeId,
        cap: usize,
    ) -> Result<Vec<Vec<NodeId>>, IrError> {
        for id in [src, dst] {
            if !self.contains(id) {
                return Err(IrError::UnknownNode(id));
            }
        }
        let mut out = Vec::new();
        let mut path = vec![src];
        let mut on_path = BTreeSet::from([src]);
        self.paths_dfs(dst, cap, &mut path, &mut on_path, &mut out)
            .map_err(|()| IrError::PathExplosion { src, dst, cap })?;
        out.sort();
        Ok(out)
    }

    fn paths_dfs(
        &self,
        dst: NodeId,
        cap: usize,
        path: &mut Vec<NodeId>,
        on_path: &mut BTreeSet<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) -> Result<(), ()> {
        let here = *path.last().expect("path never empty");
        if here == dst {
            if out.len() == cap {
                return Err(());
            }
            out.push(path.clone());
            return Ok(());
        }
        let mut last = None;
        for &(c, _) in self.children(here) {
            if last == Some(c) || on_path.contains(&c) {
                continue;
            }
            last = Some(c);
            path.push(c);
            on_path.insert(c);
            let r = self.paths_dfs(dst, cap, path, on_path, out);
            on_path.remove(&c);
            path.pop();
            r?;
        }
        Ok(())
    }

    /// True iff `v` has a `Pair` child which itself has a `Join` child.
    pub fn is_join_anchor(&self, v: NodeId) -> bool {
        self.children(v).iter().any(|&(p, _)| {
            self.kind_of(p) == Some(NodeKind::Pair)
                && self
                    .children(p)
                    .iter()
                    .any(|&(j, _)| self.kind_of(j) == Some(NodeKind::Join))
        })
    }

    /// Join anchors reachable from `from` (excluding `from` itself), sorted by id.
    pub fn reachable_anchors(&self, from: NodeId) -> Vec<NodeId> {
        let reach = self.reach(std::iter::once(from), |g, id| g.children(id));
        reach
            .into_iter()
            .filter(|&v| v != from && self.is_join_anchor(v))
            .collect()
    }
}
