//! Random IR families and brute-force oracles. The oracles deliberately
//! avoid the library's traversal code so they can check it.

use std::collections::{BTreeMap, BTreeSet};

use partadvise::enumerate::{Strategy, TwoTerminalDag};
use partadvise::ir::{Flow, IrEdge, IrGraph, IrNode, NodeId, NodeKind};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const BODY_KINDS: [NodeKind; 7] = [
    NodeKind::Member,
    NodeKind::Method,
    NodeKind::OpaqueFunc,
    NodeKind::Apply,
    NodeKind::Conditional,
    NodeKind::Equal,
    NodeKind::And,
];
const TYPES: [&str; 2] = ["T", "K"];

#[derive(Debug, Clone, Copy)]
pub struct DagParams {
    pub max_nodes: usize,
    pub max_anchors: usize,
    /// Size of the body label alphabet.
    pub labels: usize,
    /// No two nodes of one graph share a `kind:label:out_type` token.
    pub unique_tokens: bool,
    pub control_prob: f64,
    pub extra_edge_prob: f64,
    pub sort_prob: f64,
}

impl Default for DagParams {
    fn default() -> Self {
        DagParams {
            max_nodes: 12,
            max_anchors: 3,
            labels: 8,
            unique_tokens: true,
            control_prob: 0.2,
            extra_edge_prob: 0.15,
            sort_prob: 0.25,
        }
    }
}

type Token = (NodeKind, String, String);

fn token(n: &IrNode) -> Token {
    (n.kind, n.label.clone(), n.out_type.clone())
}

fn body_node(
    rng: &mut ChaCha8Rng,
    id: NodeId,
    p: &DagParams,
    used: &mut BTreeSet<Token>,
) -> IrNode {
    for _ in 0..1000 {
        let kind = *BODY_KINDS.choose(rng).unwrap();
        let label = format!("l{}", rng.random_range(0..p.labels.max(1)));
        let out = *TYPES.choose(rng).unwrap();
        let n = IrNode::new(id, kind, label, "T", out);
        if !p.unique_tokens || used.insert(token(&n)) {
            return n;
        }
    }
    panic!("token alphabet exhausted");
}

/// Body nodes first in topological id order (scans lowest), then pairs, the
/// join, an optional sort and the write.
pub fn random_ir(rng: &mut ChaCha8Rng, ir_id: &str, p: &DagParams) -> IrGraph {
    let scans = rng.random_range(1..=2usize);
    let anchors = if rng.random_bool(0.1) {
        0
    } else {
        rng.random_range(1..=p.max_anchors.max(1))
    };
    let pairs = match anchors {
        0 => 0,
        1 => 1,
        _ => rng.random_range(1..=2usize),
    };
    let sort = pairs > 0 && rng.random_bool(p.sort_prob);
    let tail = pairs + usize::from(pairs > 0) + usize::from(sort) + 1;
    let max_body = p.max_nodes.saturating_sub(tail).max(scans + 1);
    let body = rng.random_range(scans + 1..=max_body);

    let mut used = BTreeSet::new();
    let mut nodes = Vec::new();
    let mut edges: BTreeMap<(NodeId, NodeId), Flow> = BTreeMap::new();
    for s in 0..scans {
        nodes.push(IrNode::new(s as NodeId, NodeKind::Scan, format!("D{s}"), "", "Row"));
    }
    for j in scans..body {
        nodes.push(body_node(rng, j as NodeId, p, &mut used));
        let k = rng.random_range(1..=2usize.min(j));
        let mut parents: Vec<usize> = (0..j).collect();
        parents.shuffle(rng);
        for &i in parents.iter().take(k) {
            let flow = if rng.random_bool(p.control_prob) {
                Flow::Control
            } else {
                Flow::Data
            };
            edges.insert((i as NodeId, j as NodeId), flow);
        }
    }
    for j in scans..body {
        for i in 0..j {
            if rng.random_bool(p.extra_edge_prob) {
                edges.entry((i as NodeId, j as NodeId)).or_insert(Flow::Data);
            }
        }
    }
    let mut next = body as NodeId;
    if pairs > 0 {
        let pair_ids: Vec<NodeId> = (0..pairs as NodeId).map(|i| next + i).collect();
        next += pairs as NodeId;
        let join = next;
        next += 1;
        for &pid in &pair_ids {
            nodes.push(IrNode::new(pid, NodeKind::Pair, "", "T", "pair"));
            edges.insert((pid, join), Flow::Data);
        }
        nodes.push(IrNode::new(join, NodeKind::Join, "", "pair", "Row"));
        let mut candidates: Vec<usize> = (scans..body).collect();
        candidates.shuffle(rng);
        for (i, &a) in candidates.iter().take(anchors).enumerate() {
            edges.insert((a as NodeId, pair_ids[i % pairs]), Flow::Data);
        }
        if sort {
            let sid = next;
            next += 1;
            nodes.push(IrNode::new(sid, NodeKind::Sort, "", "pair", "pair"));
            edges.insert((*pair_ids.choose(rng).unwrap(), sid), Flow::Data);
        }
        nodes.push(IrNode::new(next, NodeKind::Write, "out", "Row", ""));
        edges.insert((join, next), Flow::Data);
    } else {
        nodes.push(IrNode::new(next, NodeKind::Write, "out", "T", ""));
        edges.insert(((body - 1) as NodeId, next), Flow::Data);
    }
    IrGraph::new(
        ir_id,
        nodes,
        edges
            .into_iter()
            .map(|((s, d), flow)| IrEdge { src: s, dst: d, flow })
            .collect(),
    )
}

fn is_body(kind: NodeKind) -> bool {
    BODY_KINDS.contains(&kind)
}

/// One random structural change among body nodes: a token change, a dropped
/// or added body edge, or a flipped edge flow. Node ids keep their order.
pub fn mutate(rng: &mut ChaCha8Rng, g: &IrGraph, p: &DagParams) -> IrGraph {
    let mut nodes: Vec<IrNode> = g.nodes().to_vec();
    let mut edges: Vec<IrEdge> = g.edges().to_vec();
    let body: Vec<NodeId> = nodes.iter().filter(|n| is_body(n.kind)).map(|n| n.id).collect();
    let body_set: BTreeSet<NodeId> = body.iter().copied().collect();
    let body_edges: Vec<usize> = (0..edges.len())
        .filter(|&i| body_set.contains(&edges[i].dst))
        .collect();
    match rng.random_range(0..4) {
        0 if !body.is_empty() => {
            let mut used: BTreeSet<Token> = nodes.iter().map(token).collect();
            let target = *body.choose(rng).unwrap();
            let idx = nodes.iter().position(|n| n.id == target).unwrap();
            used.remove(&token(&nodes[idx]));
            let old = token(&nodes[idx]);
            for _ in 0..100 {
                let n = body_node(rng, target, p, &mut used.clone());
                if token(&n) != old {
                    nodes[idx] = n;
                    break;
                }
            }
        }
        1 if !body_edges.is_empty() => {
            edges.remove(*body_edges.choose(rng).unwrap());
        }
        2 if body.len() >= 2 => {
            let mut from: Vec<NodeId> = nodes
                .iter()
                .filter(|n| n.kind == NodeKind::Scan || is_body(n.kind))
                .map(|n| n.id)
                .collect();
            from.sort();
            let dst = *body.choose(rng).unwrap();
            let src_options: Vec<NodeId> = from.into_iter().filter(|&s| s < dst).collect();
            if let Some(&src) = src_options.choose(rng) {
                if !edges.iter().any(|e| e.src == src && e.dst == dst) {
                    edges.push(IrEdge::data(src, dst));
                }
            }
        }
        _ if !body_edges.is_empty() => {
            let i = *body_edges.choose(rng).unwrap();
            edges[i].flow = match edges[i].flow {
                Flow::Data => Flow::Control,
                Flow::Control => Flow::Data,
            };
        }
        _ => {}
    }
    IrGraph::new(g.ir_id(), nodes, edges)
}

/// Random bijection of node ids into `0..4096`, with nodes and edges
/// listed in shuffled order.
pub fn permute_ids(rng: &mut ChaCha8Rng, g: &IrGraph) -> (IrGraph, BTreeMap<NodeId, NodeId>) {
    let mut pool: Vec<NodeId> = (0..4096).collect();
    pool.shuffle(rng);
    let map: BTreeMap<NodeId, NodeId> = g.nodes().iter().map(|n| n.id).zip(pool).collect();
    let mut nodes: Vec<IrNode> = g
        .nodes()
        .iter()
        .map(|n| IrNode {
            id: map[&n.id],
            ..n.clone()
        })
        .collect();
    let mut edges: Vec<IrEdge> = g
        .edges()
        .iter()
        .map(|e| IrEdge {
            src: map[&e.src],
            dst: map[&e.dst],
            flow: e.flow,
        })
        .collect();
    nodes.shuffle(rng);
    edges.shuffle(rng);
    (IrGraph::new(g.ir_id(), nodes, edges), map)
}

pub fn permute_dag(rng: &mut ChaCha8Rng, d: &TwoTerminalDag) -> TwoTerminalDag {
    let (g, map) = permute_ids(rng, &d.as_graph());
    TwoTerminalDag::new(
        g.nodes().to_vec(),
        g.edges().to_vec(),
        map[&d.root()],
        map[&d.leaf()],
    )
}

/// Plain adjacency built straight from the edge list.
struct Adj {
    children: BTreeMap<NodeId, Vec<(NodeId, Flow)>>,
    kinds: BTreeMap<NodeId, NodeKind>,
}

impl Adj {
    fn of(g: &IrGraph) -> Self {
        let mut children: BTreeMap<NodeId, Vec<(NodeId, Flow)>> = BTreeMap::new();
        for e in g.edges() {
            children.entry(e.src).or_default().push((e.dst, e.flow));
        }
        Adj {
            children,
            kinds: g.nodes().iter().map(|n| (n.id, n.kind)).collect(),
        }
    }

    fn kids(&self, v: NodeId) -> &[(NodeId, Flow)] {
        self.children.get(&v).map_or(&[], Vec::as_slice)
    }

    fn anchor(&self, v: NodeId) -> bool {
        self.kids(v).iter().any(|&(p, _)| {
            self.kinds.get(&p) == Some(&NodeKind::Pair)
                && self
                    .kids(p)
                    .iter()
                    .any(|&(j, _)| self.kinds.get(&j) == Some(&NodeKind::Join))
        })
    }
}

pub fn oracle_anchors(g: &IrGraph) -> BTreeSet<NodeId> {
    let adj = Adj::of(g);
    g.nodes().iter().map(|n| n.id).filter(|&v| adj.anchor(v)).collect()
}

/// Every simple path `from → to`, by exhaustive breadth-first extension.
pub fn all_simple_paths(g: &IrGraph, from: NodeId, to: NodeId) -> Vec<Vec<NodeId>> {
    let adj = Adj::of(g);
    let mut done = Vec::new();
    let mut frontier = vec![vec![from]];
    while let Some(path) = frontier.pop() {
        let last = *path.last().unwrap();
        if last == to && path.len() > 1 {
            done.push(path);
            continue;
        }
        for &(c, _) in adj.kids(last) {
            if !path.contains(&c) {
                let mut p = path.clone();
                p.push(c);
                frontier.push(p);
            }
        }
    }
    done.sort();
    done.dedup();
    done
}

/// A two-terminal subgraph as plain sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sub {
    pub root: NodeId,
    pub leaf: NodeId,
    pub nodes: BTreeMap<NodeId, Token>,
    pub edges: BTreeSet<(NodeId, NodeId, Flow)>,
}

impl Sub {
    pub fn of_dag(d: &TwoTerminalDag) -> Self {
        Sub {
            root: d.root(),
            leaf: d.leaf(),
            nodes: d.nodes().iter().map(|n| (n.id, token(n))).collect(),
            edges: d.edges().iter().map(|e| (e.src, e.dst, e.flow)).collect(),
        }
    }
}

/// Union of the simple `scan → anchor` paths whose interior avoids anchors.
pub fn oracle_union(g: &IrGraph, scan: NodeId, anchor: NodeId) -> Option<Sub> {
    if scan == anchor {
        return None;
    }
    let anchors = oracle_anchors(g);
    let flows: BTreeMap<(NodeId, NodeId), Flow> =
        g.edges().iter().map(|e| ((e.src, e.dst), e.flow)).collect();
    let paths: Vec<Vec<NodeId>> = all_simple_paths(g, scan, anchor)
        .into_iter()
        .filter(|p| p[1..p.len() - 1].iter().all(|v| !anchors.contains(v)))
        .collect();
    if paths.is_empty() {
        return None;
    }
    let mut sub = Sub {
        root: scan,
        leaf: anchor,
        nodes: BTreeMap::new(),
        edges: BTreeSet::new(),
    };
    for p in &paths {
        for &v in p {
            sub.nodes.insert(v, token(g.node(v).unwrap()));
        }
        for w in p.windows(2) {
            sub.edges.insert((w[0], w[1], flows[&(w[0], w[1])]));
        }
    }
    Some(sub)
}

/// Oracle candidates of one scan, keyed by `(root, leaf)`.
pub fn oracle_candidates(g: &IrGraph, scan: NodeId) -> BTreeMap<(NodeId, NodeId), Sub> {
    oracle_anchors(g)
        .into_iter()
        .filter_map(|a| oracle_union(g, scan, a).map(|s| ((scan, a), s)))
        .collect()
}

pub fn oracle_strategy(g: &IrGraph, anchor: NodeId) -> Strategy {
    let adj = Adj::of(g);
    let sorted = adj.kids(anchor).iter().any(|&(p, _)| {
        adj.kids(p)
            .iter()
            .any(|&(c, _)| adj.kinds.get(&c) == Some(&NodeKind::Sort))
    });
    if sorted {
        Strategy::Range
    } else {
        Strategy::Hash
    }
}

/// Backtracking search for a bijection preserving tokens, edges with their
/// flows, and the terminals.
pub fn isomorphic(a: &Sub, b: &Sub) -> bool {
    if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    if a.nodes[&a.root] != b.nodes[&b.root] || a.nodes[&a.leaf] != b.nodes[&b.leaf] {
        return false;
    }
    let order: Vec<NodeId> = a.nodes.keys().copied().collect();
    let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::from([(a.root, b.root), (a.leaf, b.leaf)]);
    if a.root == a.leaf || b.root == b.leaf {
        return false;
    }
    let mut used: BTreeSet<NodeId> = BTreeSet::from([b.root, b.leaf]);
    extend(a, b, &order, 0, &mut map, &mut used)
}

fn consistent(a: &Sub, b: &Sub, map: &BTreeMap<NodeId, NodeId>) -> bool {
    a.edges.iter().all(|&(s, d, f)| match (map.get(&s), map.get(&d)) {
        (Some(&x), Some(&y)) => b.edges.contains(&(x, y, f)),
        _ => true,
    })
}

fn extend(
    a: &Sub,
    b: &Sub,
    order: &[NodeId],
    i: usize,
    map: &mut BTreeMap<NodeId, NodeId>,
    used: &mut BTreeSet<NodeId>,
) -> bool {
    if i == order.len() {
        return consistent(a, b, map);
    }
    let v = order[i];
    if map.contains_key(&v) {
        return consistent(a, b, map) && extend(a, b, order, i + 1, map, used);
    }
    for (&w, t) in &b.nodes {
        if used.contains(&w) || *t != a.nodes[&v] {
            continue;
        }
        map.insert(v, w);
        used.insert(w);
        if consistent(a, b, map) && extend(a, b, order, i + 1, map, used) {
            return true;
        }
        map.remove(&v);
        used.remove(&w);
    }
    false
}

/// Longest root-to-leaf path, in nodes, by listing every path.
pub fn brute_longest_path(d: &TwoTerminalDag) -> usize {
    all_simple_paths(&d.as_graph(), d.root(), d.leaf())
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0)
}

/// Sample Pearson correlation from the covariance definition, two passes.
pub fn two_pass_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}
