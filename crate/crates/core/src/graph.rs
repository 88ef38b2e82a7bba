//! Directed acyclic graphs over named variables.
//!
//! Nodes are addressed by their position in the declared node order; all
//! set-valued results come back in that order. Node sets are bitmasks, which
//! caps a graph at 64 nodes.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of nodes a [`Dag`] can hold.
pub const MAX_NODES: usize = 64;

/// Default cap for operations that enumerate graphs or separation statements.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 7;

/// A subset of the nodes of a graph, stored as a bitmask over node indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct NodeSet(u64);

impl NodeSet {
    pub const fn empty() -> Self {
        NodeSet(0)
    }

    pub fn singleton(i: usize) -> Self {
        debug_assert!(i < MAX_NODES);
        NodeSet(1u64 << i)
    }

    /// All of `0..n`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            NodeSet(u64::MAX)
        } else {
            NodeSet((1u64 << n) - 1)
        }
    }

    pub fn from_bits(bits: u64) -> Self {
        NodeSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_NODES && self.0 & (1u64 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u64 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1u64 << i);
    }

    pub fn with(mut self, i: usize) -> Self {
        self.insert(i);
        self
    }

    pub fn union(self, other: NodeSet) -> Self {
        NodeSet(self.0 | other.0)
    }

    pub fn intersection(self, other: NodeSet) -> Self {
        NodeSet(self.0 & other.0)
    }

    pub fn difference(self, other: NodeSet) -> Self {
        NodeSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: NodeSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset(self, other: NodeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Indices in ascending (node) order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut s = NodeSet::empty();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Serialized form: `{"nodes": [...], "edges": [["a", "b"], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

/// A directed acyclic graph over named variables.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<NodeSet>,
    children: Vec<NodeSet>,
    topo: Vec<usize>,
}

impl Dag {
    /// Builds a graph, rejecting unknown endpoints, self-loops, duplicate
    /// edges, duplicate names and cycles.
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Dag> {
        let names: Vec<String> = nodes.iter().map(|s| s.as_ref().to_string()).collect();
        if names.len() > MAX_NODES {
            return Err(Error::InvalidGraph(format!(
                "{} nodes exceed the maximum of {MAX_NODES}",
                names.len()
            )));
        }
        let mut index = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidGraph("empty node name".into()));
            }
            if index.insert(name.as_str(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node `{name}`")));
            }
        }
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::InvalidGraph(format!("edge endpoint `{a}` is not a node")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::InvalidGraph(format!("edge endpoint `{b}` is not a node")))?;
            idx_edges.push((ia, ib));
        }
        Self::from_indices(names, &idx_edges)
    }

    /// Builds a graph from index pairs `(parent, child)`.
    pub fn from_indices(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Dag> {
        let n = names.len();
        let mut parents = vec![NodeSet::empty(); n];
        let mut children = vec![NodeSet::empty(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on `{}`", names[a])));
            }
            if parents[b].contains(a) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge `{}` -> `{}`",
                    names[a], names[b]
                )));
            }
            parents[b].insert(a);
            children[a].insert(b);
        }
        let topo = topological_order(&parents, &children).map_err(|i| Error::Cycle(names[i].clone()))?;
        Ok(Dag {
            names,
            parents,
            children,
            topo,
        })
    }

    /// Builds a graph from parent sets, one per node.
    pub fn from_parent_sets(names: Vec<String>, parents: &[NodeSet]) -> Result<Dag> {
        let edges: Vec<(usize, usize)> = parents
            .iter()
            .enumerate()
            .flat_map(|(child, ps)| ps.iter().map(move |p| (p, child)))
            .collect();
        Self::from_indices(names, &edges)
    }

    /// The graph with the given nodes and no edges.
    pub fn empty<S: AsRef<str>>(nodes: &[S]) -> Result<Dag> {
        Self::new::<S>(nodes, &[])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Resolves names into a node set.
    pub fn node_set<S: AsRef<str>>(&self, names: &[S]) -> Result<NodeSet> {
        names.iter().map(|n| self.index(n.as_ref())).collect()
    }

    pub fn set_names(&self, set: NodeSet) -> Vec<String> {
        set.iter().map(|i| self.names[i].clone()).collect()
    }

    pub fn all_nodes(&self) -> NodeSet {
        NodeSet::full(self.len())
    }

    pub fn parents(&self, i: usize) -> NodeSet {
        self.parents[i]
    }

    pub fn children(&self, i: usize) -> NodeSet {
        self.children[i]
    }

    pub fn parent_sets(&self) -> &[NodeSet] {
        &self.parents
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].contains(from)
    }

    /// Edges as `(parent, child)` index pairs, sorted by child then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (child, ps) in self.parents.iter().enumerate() {
            for p in ps.iter() {
                out.push((p, child));
            }
        }
        out.sort_by_key(|&(p, c)| (p, c));
        out
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(|p| p.len()).sum()
    }

    pub fn edge_names(&self) -> Vec<(String, String)> {
        self.edges()
            .into_iter()
            .map(|(a, b)| (self.names[a].clone(), self.names[b].clone()))
            .collect()
    }

    /// A topological order, stable with respect to the declared node order.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Ancestors of `set`, including the members of `set`.
    pub fn ancestors(&self, set: NodeSet) -> NodeSet {
        let mut seen = set;
        let mut stack: Vec<usize> = set.to_vec();
        while let Some(v) = stack.pop() {
            for p in self.parents[v].iter() {
                if !seen.contains(p) {
                    seen.insert(p);
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Strict descendants of `i`.
    pub fn descendants(&self, i: usize) -> NodeSet {
        let mut seen = NodeSet::empty();
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            for c in self.children[v].iter() {
                if !seen.contains(c) {
                    seen.insert(c);
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Members of `s` reachable from `start` by a directed path of length at
    /// least one whose intermediate nodes all lie outside `s`.
    pub fn reach_avoiding(&self, start: usize, s: NodeSet) -> NodeSet {
        let mut seen = NodeSet::empty();
        let mut hit = NodeSet::empty();
        let mut stack: Vec<usize> = self.children[start].to_vec();
        while let Some(v) = stack.pop() {
            if seen.contains(v) {
                continue;
            }
            seen.insert(v);
            if s.contains(v) {
                hit.insert(v);
                continue;
            }
            stack.extend(self.children[v].iter());
        }
        hit
    }

    fn check_disjoint(&self, sets: &[NodeSet]) -> Result<()> {
        let all = self.all_nodes();
        for (k, s) in sets.iter().enumerate() {
            if !s.is_subset(all) {
                return Err(Error::InvalidArgument("node set contains unknown nodes".into()));
            }
            for t in &sets[k + 1..] {
                if !s.is_disjoint(*t) {
                    return Err(Error::InvalidArgument(format!(
                        "node sets {:?} and {:?} overlap",
                        self.set_names(*s),
                        self.set_names(*t)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether `a` and `b` are d-separated given `c`.
    ///
    /// Reachability formulation: a trail is followed node by node, tracking
    /// whether it arrives from a child (moving up) or from a parent (moving
    /// down). Colliders pass only when they are ancestors of `c`.
    pub fn d_separated(&self, a: NodeSet, b: NodeSet, c: NodeSet) -> Result<bool> {
        self.check_disjoint(&[a, b, c])?;
        Ok(self.reachable(a, c).is_disjoint(b))
    }

    /// Nodes d-connected to some member of `a` given `c`.
    fn reachable(&self, a: NodeSet, c: NodeSet) -> NodeSet {
        let anc_c = self.ancestors(c);
        // visited[v][0]: arrived moving up, visited[v][1]: arrived moving down
        let mut visited = vec![[false; 2]; self.len()];
        let mut reached = NodeSet::empty();
        let mut queue: VecDeque<(usize, bool)> = a.iter().map(|v| (v, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            let slot = &mut visited[v][usize::from(!up)];
            if *slot {
                continue;
            }
            *slot = true;
            if !c.contains(v) {
                reached.insert(v);
            }
            if up {
                if !c.contains(v) {
                    queue.extend(self.parents[v].iter().map(|p| (p, true)));
                    queue.extend(self.children[v].iter().map(|ch| (ch, false)));
                }
            } else {
                if !c.contains(v) {
                    queue.extend(self.children[v].iter().map(|ch| (ch, false)));
                }
                if anc_c.contains(v) {
                    queue.extend(self.parents[v].iter().map(|p| (p, true)));
                }
            }
        }
        reached
    }

    /// A node outside `s` with directed paths to two or more members of `s`
    /// that avoid `s` internally, together with the members it reaches.
    pub fn hidden_common_cause(&self, s: NodeSet) -> Option<(usize, NodeSet)> {
        (0..self.len())
            .filter(|&v| !s.contains(v))
            .map(|v| (v, self.reach_avoiding(v, s)))
            .find(|(_, hit)| hit.len() >= 2)
    }

    pub fn is_graphically_causally_sufficient(&self, s: NodeSet) -> bool {
        self.hidden_common_cause(s).is_none()
    }

    /// Collapses directed paths through nodes outside `s` into single edges,
    /// without checking sufficiency.
    pub fn collapse_onto(&self, s: NodeSet) -> Dag {
        let keep = s.intersection(self.all_nodes()).to_vec();
        let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let names: Vec<String> = keep.iter().map(|&v| self.names[v].clone()).collect();
        let mut edges = Vec::new();
        for &v in &keep {
            for w in self.reach_avoiding(v, s).iter() {
                edges.push((pos[&v], pos[&w]));
            }
        }
        Dag::from_indices(names, &edges).expect("collapsing paths of a DAG yields a DAG")
    }

    /// The marginal DAG on a graphically causally sufficient node set: an edge
    /// `i -> j` for every directed path from `i` to `j` with no other member
    /// of `s` on it.
    pub fn marginal_dag(&self, s: NodeSet) -> Result<Dag> {
        if !s.is_subset(self.all_nodes()) {
            return Err(Error::InvalidArgument("node set contains unknown nodes".into()));
        }
        if let Some((cause, reached)) = self.hidden_common_cause(s) {
            return Err(Error::SufficiencyViolation {
                subset: self.set_names(s),
                cause: self.names[cause].clone(),
                reached: self.set_names(reached),
            });
        }
        Ok(self.collapse_onto(s))
    }

    /// Backdoor criterion for the ordered pair `(x, y)`: `z` holds no
    /// descendant of `x` and blocks every path that enters `x` through an
    /// incoming edge.
    pub fn backdoor_admissible(&self, x: usize, y: usize, z: NodeSet) -> Result<bool> {
        if x == y {
            return Err(Error::InvalidArgument("x and y must differ".into()));
        }
        if z.contains(x) || z.contains(y) {
            return Err(Error::InvalidArgument("adjustment set must exclude x and y".into()));
        }
        if !self.descendants(x).is_disjoint(z) {
            return Ok(false);
        }
        let mut pruned = self.clone();
        for ch in self.children[x].iter() {
            pruned.parents[ch].remove(x);
        }
        pruned.children[x] = NodeSet::empty();
        pruned.d_separated(NodeSet::singleton(x), NodeSet::singleton(y), z)
    }

    /// Same nodes, relabelled and reordered: node `k` of the result is node
    /// `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Dag> {
        if perm.len() != self.len() {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let inv: HashMap<usize, usize> = perm.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let names = perm.iter().map(|&v| self.names[v].clone()).collect();
        let edges: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .map(|(a, b)| (inv[&a], inv[&b]))
            .collect();
        Dag::from_indices(names, &edges)
    }

    /// Whether `other` has the same node names (in any order) and the same
    /// named edges.
    pub fn same_structure(&self, other: &Dag) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut a = self.edge_names();
        let mut b = other.edge_names();
        a.sort();
        b.sort();
        let mut na = self.names.clone();
        let mut nb = other.names.clone();
        na.sort();
        nb.sort();
        a == b && na == nb
    }

    /// Edge-list text: one `a -> b` per line; isolated nodes on their own line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            if self.parents[i].is_empty() && self.children[i].is_empty() {
                out.push_str(&self.names[i]);
                out.push('\n');
            }
        }
        for (a, b) in self.edge_names() {
            out.push_str(&format!("{a} -> {b}\n"));
        }
        out
    }

    /// Parses the edge-list text format. Blank lines and `#` comments are
    /// skipped; nodes are ordered by first appearance.
    pub fn parse_edge_list(text: &str) -> Result<Dag> {
        let mut nodes: Vec<String> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        let add = |name: &str, nodes: &mut Vec<String>| {
            if !nodes.iter().any(|n| n == name) {
                nodes.push(name.to_string());
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once("->") {
                Some((a, b)) => {
                    let (a, b) = (a.trim(), b.trim());
                    if a.is_empty() || b.is_empty() || b.contains("->") {
                        return Err(Error::InvalidGraph(format!("malformed edge on line {}", lineno + 1)));
                    }
                    add(a, &mut nodes);
                    add(b, &mut nodes);
                    edges.push((a.to_string(), b.to_string()));
                }
                None => {
                    if line.split_whitespace().count() != 1 {
                        return Err(Error::InvalidGraph(format!("malformed line {}", lineno + 1)));
                    }
                    add(line, &mut nodes);
                }
            }
        }
        Dag::new(&nodes, &edges)
    }

    /// Parses either JSON or the edge-list format.
    pub fn parse(text: &str) -> Result<Dag> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            Self::parse_edge_list(text)
        }
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self
            .edge_names()
            .into_iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        write!(f, "Dag{{{:?}; {}}}", self.names, edges.join(", "))
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self
            .edge_names()
            .into_iter()
            .map(|(a, b)| format!("{a}->{b}"))
            .collect();
        if edges.is_empty() {
            write!(f, "(no edges over {})", self.names.join(","))
        } else {
            write!(f, "{}", edges.join(", "))
        }
    }
}

impl TryFrom<GraphJson> for Dag {
    type Error = Error;

    fn try_from(g: GraphJson) -> Result<Dag> {
        Dag::new(&g.nodes, &g.edges)
    }
}

impl From<Dag> for GraphJson {
    fn from(d: Dag) -> GraphJson {
        GraphJson {
            edges: d.edge_names(),
            nodes: d.names,
        }
    }
}

/// Kahn's algorithm, picking the smallest available index first. On a cycle
/// returns a node on it.
fn topological_order(parents: &[NodeSet], children: &[NodeSet]) -> std::result::Result<Vec<usize>, usize> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for c in children[v].iter() {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&i| indeg[i] > 0).unwrap_or(0))
    }
}

/// Every DAG over `names`, in a fixed enumeration order.
///
/// Each unordered pair is absent, forward or backward; cyclic combinations
/// are dropped. There are 3, 25, 543 and 29281 DAGs on 2..=5 nodes.
pub fn all_dags<S: AsRef<str>>(names: &[S], cap: usize) -> Result<Vec<Dag>> {
    let n = names.len();
    if n > cap {
        return Err(Error::TooManyNodes { nodes: n, cap });
    }
    let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    let mut out = Vec::new();
    let mut edges = Vec::with_capacity(pairs.len());
    for mut code in 0..total {
        edges.clear();
        for &(i, j) in &pairs {
            match code % 3 {
                1 => edges.push((i, j)),
                2 => edges.push((j, i)),
                _ => {}
            }
            code /= 3;
        }
        if let Ok(g) = Dag::from_indices(names.clone(), &edges) {
            out.push(g);
        }
    }
    Ok(out)
}

/// A random DAG: nodes are shuffled into a causal order and each forward pair
/// gets an edge with probability `edge_prob`. Node names are `X1..Xn`.
pub fn random_dag<R: Rng + ?Sized>(n: usize, edge_prob: f64, rng: &mut R) -> Dag {
    let names: Vec<String> = (1..=n).map(|i| format!("X{i}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(edge_prob) {
                edges.push((order[a], order[b]));
            }
        }
    }
    Dag::from_indices(names, &edges).expect("forward edges of a permutation are acyclic")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(nodes: &[&str], edges: &[(&str, &str)]) -> Dag {
        Dag::new(nodes, edges).unwrap()
    }

    /// Complete DAG with K_i -> K_j for every i > j.
    fn double_chain(n: usize) -> Dag {
        let names: Vec<String> = (1..=n).rev().map(|j| format!("K{j}")).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                edges.push((names[a].clone(), names[b].clone()));
            }
        }
        Dag::new(&names, &edges).unwrap()
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(matches!(
            Dag::new(&["A", "B"], &[("A", "B"), ("B", "A")]),
            Err(Error::Cycle(_))
        ));
        assert!(Dag::new(&["A"], &[("A", "A")]).is_err());
        assert!(Dag::new(&["A", "B"], &[("A", "B"), ("A", "B")]).is_err());
        assert!(Dag::new(&["A", "B"], &[("A", "C")]).is_err());
        assert!(Dag::new(&["A", "A"], &[]).is_err());
    }

    #[test]
    fn chain_and_collider_separation() {
        let chain = dag(&["X", "Y", "Z"], &[("X", "Y"), ("Y", "Z")]);
        let s = |n: &[&str]| chain.node_set(n).unwrap();
        assert!(chain.d_separated(s(&["X"]), s(&["Z"]), s(&["Y"])).unwrap());
        assert!(!chain.d_separated(s(&["X"]), s(&["Z"]), s(&[])).unwrap());

        let col = dag(&["X", "Y", "Z"], &[("X", "Z"), ("Y", "Z")]);
        let s = |n: &[&str]| col.node_set(n).unwrap();
        assert!(!col.d_separated(s(&["X"]), s(&["Y"]), s(&["Z"])).unwrap());
        assert!(col.d_separated(s(&["X"]), s(&["Y"]), s(&[])).unwrap());
    }

    #[test]
    fn collider_opened_by_descendant() {
        let g = dag(&["X", "Y", "Z", "W"], &[("X", "Z"), ("Y", "Z"), ("Z", "W")]);
        let s = |n: &[&str]| g.node_set(n).unwrap();
        assert!(!g.d_separated(s(&["X"]), s(&["Y"]), s(&["W"])).unwrap());
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let g = dag(&["X", "Y"], &[("X", "Y")]);
        let x = g.node_set(&["X"]).unwrap();
        assert!(matches!(g.d_separated(x, x, NodeSet::empty()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn double_chain_direct_edge_not_separated() {
        let g = double_chain(5);
        let s = |n: &[&str]| g.node_set(n).unwrap();
        assert!(!g.d_separated(s(&["K5"]), s(&["K3"]), s(&["K4"])).unwrap());
    }

    #[test]
    fn marginal_of_action_node_moves_to_child() {
        let g = dag(&["X1", "X2", "X3", "I"], &[("X1", "X2"), ("X2", "X3"), ("I", "X2")]);
        let s = g.node_set(&["X1", "X3", "I"]).unwrap();
        let m = g.marginal_dag(s).unwrap();
        assert_eq!(m.names(), &["X1", "X3", "I"]);
        let mut e = m.edge_names();
        e.sort();
        assert_eq!(
            e,
            vec![("I".to_string(), "X3".to_string()), ("X1".to_string(), "X3".to_string())]
        );
    }

    #[test]
    fn marginal_on_all_nodes_is_identity() {
        let g = double_chain(4);
        assert_eq!(g.marginal_dag(g.all_nodes()).unwrap(), g);
    }

    #[test]
    fn double_chain_without_k4_is_not_sufficient() {
        // K4 has directed paths into K3, K2 and K1, so dropping it leaves a
        // hidden common cause; the collapsed graph keeps every edge among the
        // remaining nodes because the chain is complete.
        let g = double_chain(5);
        let s = g.node_set(&["K5", "K3", "K2", "K1"]).unwrap();
        match g.marginal_dag(s) {
            Err(Error::SufficiencyViolation { cause, reached, .. }) => {
                assert_eq!(cause, "K4");
                assert_eq!(reached, vec!["K3", "K2", "K1"]);
            }
            other => panic!("expected sufficiency violation, got {other:?}"),
        }
        let collapsed = g.collapse_onto(s);
        assert_eq!(collapsed.edge_count(), 6);
        assert!(collapsed.has_edge(collapsed.index("K5").unwrap(), collapsed.index("K3").unwrap()));
    }

    #[test]
    fn sufficiency_examples() {
        let fork = dag(&["X", "C", "Y"], &[("C", "X"), ("C", "Y")]);
        assert!(!fork.is_graphically_causally_sufficient(fork.node_set(&["X", "Y"]).unwrap()));
        assert!(fork.is_graphically_causally_sufficient(fork.all_nodes()));
        let chain = dag(&["X1", "X2", "X3"], &[("X1", "X2"), ("X2", "X3")]);
        assert!(chain.is_graphically_causally_sufficient(chain.node_set(&["X1", "X3"]).unwrap()));
    }

    #[test]
    fn backdoor_examples() {
        let g = dag(&["X", "C", "Y"], &[("C", "X"), ("C", "Y"), ("X", "Y")]);
        let (x, y) = (g.index("X").unwrap(), g.index("Y").unwrap());
        assert!(g.backdoor_admissible(x, y, g.node_set(&["C"]).unwrap()).unwrap());
        assert!(!g.backdoor_admissible(x, y, NodeSet::empty()).unwrap());
        assert!(g.backdoor_admissible(x, x, NodeSet::empty()).is_err());
    }

    #[test]
    fn descendant_in_adjustment_set_is_rejected() {
        let g = dag(&["X", "M", "Y"], &[("X", "M"), ("M", "Y")]);
        let (x, y) = (g.index("X").unwrap(), g.index("Y").unwrap());
        assert!(!g.backdoor_admissible(x, y, g.node_set(&["M"]).unwrap()).unwrap());
        assert!(g.backdoor_admissible(x, y, NodeSet::empty()).unwrap());
    }

    #[test]
    fn dag_counts() {
        let counts: Vec<usize> = (1..=4)
            .map(|n| {
                let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
                all_dags(&names, 7).unwrap().len()
            })
            .collect();
        assert_eq!(counts, vec![1, 3, 25, 543]);
        assert!(matches!(
            all_dags(&["a", "b", "c"], 2),
            Err(Error::TooManyNodes { nodes: 3, cap: 2 })
        ));
    }

    #[test]
    fn edge_list_and_json_roundtrip() {
        let g = dag(&["A", "B", "C", "D"], &[("A", "B"), ("B", "C")]);
        let text = g.to_edge_list();
        assert_eq!(text, "D\nA -> B\nB -> C\n");
        let back = Dag::parse(&text).unwrap();
        assert!(back.same_structure(&g));

        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"nodes":["A","B","C","D"],"edges":[["A","B"],["B","C"]]}"#);
        assert_eq!(Dag::parse(&json).unwrap(), g);
        assert!(serde_json::from_str::<Dag>(r#"{"nodes":["A"],"edges":[["A","A"]]}"#).is_err());
    }

    #[test]
    fn edge_list_comments_and_errors() {
        let g = Dag::parse_edge_list("# header\nX -> Y  # trailing\n\nZ\n").unwrap();
        assert_eq!(g.names(), &["X", "Y", "Z"]);
        assert!(Dag::parse_edge_list("X -> \n").is_err());
        assert!(Dag::parse_edge_list("X Y\n").is_err());
    }

    #[test]
    fn topological_order_is_stable() {
        let g = dag(&["C", "B", "A"], &[("A", "B"), ("B", "C")]);
        assert_eq!(g.topological_order(), &[2, 1, 0]);
        let h = dag(&["P", "Q", "R"], &[]);
        assert_eq!(h.topological_order(), &[0, 1, 2]);
    }
}
