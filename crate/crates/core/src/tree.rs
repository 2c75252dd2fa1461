//! Hierarchy data structures shared by every clusterer and metric.
//!
//! A [`ClusterTree`] is an arena of clusters rooted at node 0. Each cluster
//! stores its sorted member ids, so laminarity and partition checks are
//! direct set operations. Leaves may hold several objects.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub type ObjectId = usize;
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    members: Vec<ObjectId>,
    children: Vec<NodeId>,
    parent: Option<NodeId>,
    depth: usize,
}

impl Cluster {
    pub fn members(&self) -> &[ObjectId] {
        &self.members
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Rooted hierarchy over object ids. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTree {
    nodes: Vec<Cluster>,
}

fn sorted(members: impl IntoIterator<Item = ObjectId>) -> Vec<ObjectId> {
    let mut v: Vec<ObjectId> = members.into_iter().collect();
    v.sort_unstable();
    v
}

impl ClusterTree {
    /// A tree consisting of a single (root) cluster.
    pub fn leaf(members: impl IntoIterator<Item = ObjectId>) -> Self {
        ClusterTree {
            nodes: vec![Cluster {
                members: sorted(members),
                children: Vec::new(),
                parent: None,
                depth: 0,
            }],
        }
    }

    /// Balanced binary tree over `0..n` with `depth` levels of splits.
    /// Each split sends the first `ceil(len/2)` ids left.
    pub fn balanced(n: usize, depth: usize) -> Self {
        let mut tree = ClusterTree::leaf(0..n);
        let mut frontier = vec![0];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for node in frontier {
                let members = tree.nodes[node].members.clone();
                if members.len() < 2 {
                    continue;
                }
                let mid = members.len().div_ceil(2);
                next.push(tree.add_child(node, members[..mid].iter().copied()));
                next.push(tree.add_child(node, members[mid..].iter().copied()));
            }
            frontier = next;
        }
        tree
    }

    pub fn add_child(&mut self, parent: NodeId, members: impl IntoIterator<Item = ObjectId>) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(Cluster {
            members: sorted(members),
            children: Vec::new(),
            parent: Some(parent),
            depth,
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Attach `sub` (all of it, root included) as a new child of `parent`.
    pub fn graft(&mut self, parent: NodeId, sub: ClusterTree) -> NodeId {
        let offset = self.nodes.len();
        let base_depth = self.nodes[parent].depth + 1;
        for (i, mut c) in sub.nodes.into_iter().enumerate() {
            c.parent = if i == 0 {
                Some(parent)
            } else {
                c.parent.map(|p| p + offset)
            };
            c.depth += base_depth;
            for ch in &mut c.children {
                *ch += offset;
            }
            self.nodes.push(c);
        }
        self.nodes[parent].children.push(offset);
        offset
    }

    /// Copy of the subtree rooted at `id`, renumbered so `id` becomes the root.
    pub fn subtree(&self, id: NodeId) -> ClusterTree {
        let base = self.nodes[id].depth;
        let mut out = ClusterTree::leaf(self.nodes[id].members.iter().copied());
        out.nodes[0].depth = 0;
        let mut stack = vec![(id, 0)];
        while let Some((src, dst)) = stack.pop() {
            for &ch in &self.nodes[src].children {
                let new = out.add_child(dst, self.nodes[ch].members.iter().copied());
                debug_assert_eq!(out.nodes[new].depth, self.nodes[ch].depth - base);
                stack.push((ch, new));
            }
        }
        out
    }

    pub const ROOT: NodeId = 0;

    pub fn root(&self) -> &Cluster {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &Cluster {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Cluster] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of objects in the root cluster.
    pub fn num_objects(&self) -> usize {
        self.nodes[0].members.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn height(&self) -> usize {
        self.nodes.iter().map(|c| c.depth).max().unwrap_or(0)
    }

    /// Node ids in pre-order with children visited by smallest member.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            out.push(id);
            let mut ch = self.nodes[id].children.clone();
            ch.sort_by_key(|&c| self.nodes[c].members.first().copied().unwrap_or(usize::MAX));
            stack.extend(ch.into_iter().rev());
        }
        out
    }

    /// The laminar family as a set of member lists.
    pub fn family(&self) -> HashSet<Vec<ObjectId>> {
        self.nodes.iter().map(|c| c.members.clone()).collect()
    }

    /// True if some cluster has exactly these members (order-insensitive).
    pub fn contains_cluster(&self, members: &[ObjectId]) -> bool {
        let want = sorted(members.iter().copied());
        self.nodes.iter().any(|c| c.members == want)
    }

    /// Same laminar family, ignoring child order and node numbering.
    pub fn same_family(&self, other: &ClusterTree) -> bool {
        self.family() == other.family()
    }

    /// The partition of the root's members induced by its children, indexed
    /// by position in the (sorted) root member list. `None` for a leaf root.
    pub fn first_split(&self) -> Option<FlatPartition> {
        let root = &self.nodes[0];
        if root.is_leaf() {
            return None;
        }
        let pos = |obj: ObjectId| root.members.binary_search(&obj).ok();
        let mut labels = vec![usize::MAX; root.members.len()];
        for (label, &ch) in root.children.iter().enumerate() {
            for &obj in &self.nodes[ch].members {
                if let Some(p) = pos(obj) {
                    labels[p] = label;
                }
            }
        }
        if labels.contains(&usize::MAX) {
            return None;
        }
        FlatPartition::new(labels, root.children.len()).ok()
    }

    /// Map from object id to the leaf node holding it; `None` for ids that
    /// appear in no leaf.
    fn leaf_index(&self) -> Vec<Option<NodeId>> {
        let n = self.nodes[0].members.iter().max().map_or(0, |m| m + 1);
        let mut idx = vec![None; n];
        for leaf in self.leaves() {
            for &m in &self.nodes[leaf].members {
                if m < n {
                    idx[m] = Some(leaf);
                }
            }
        }
        idx
    }

    fn ancestors(&self, mut node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        while let Some(p) = self.nodes[node].parent {
            path.push(p);
            node = p;
        }
        path.reverse();
        path
    }

    /// Which pair of the triplet first separates from the third, i.e. whose
    /// lowest common ancestor lies strictly below the triplet's.
    pub fn deepest_pair(&self, i: ObjectId, j: ObjectId, l: ObjectId) -> Result<Triplet> {
        let n = self.num_objects();
        for id in [i, j, l] {
            if id >= n || self.nodes[0].members.binary_search(&id).is_err() {
                return Err(Error::OutOfRange { id, n });
            }
        }
        if i == j || j == l || i == l {
            return Err(Error::NonDistinctTriplet(i, j, l));
        }
        let idx = self.leaf_index();
        let path = |o: ObjectId| {
            idx[o]
                .map(|leaf| self.ancestors(leaf))
                .ok_or(Error::OutOfRange { id: o, n })
        };
        let (pi, pj, pl) = (path(i)?, path(j)?, path(l)?);
        let common = |a: &[NodeId], b: &[NodeId]| a.iter().zip(b).take_while(|(x, y)| x == y).count();
        Ok(Triplet::from_depths(
            i,
            j,
            l,
            common(&pi, &pj),
            common(&pi, &pl),
            common(&pj, &pl),
        ))
    }

    /// Depth of the lowest common ancestor for every pair of objects in
    /// `0..n`. Requires the root to hold exactly `0..n`.
    pub fn lca_depths(&self) -> LcaTable {
        let n = self.num_objects();
        let mut depth = vec![0u32; n * n];
        for c in &self.nodes {
            let d = c.depth as u32;
            if c.is_leaf() {
                for &a in &c.members {
                    for &b in &c.members {
                        depth[a * n + b] = d;
                    }
                }
            } else {
                for (x, &ca) in c.children.iter().enumerate() {
                    for &cb in &c.children[x + 1..] {
                        for &a in &self.nodes[ca].members {
                            for &b in &self.nodes[cb].members {
                                depth[a * n + b] = d;
                                depth[b * n + a] = d;
                            }
                        }
                    }
                }
            }
        }
        LcaTable { n, depth }
    }

    /// Serialize as `depth<TAB>comma-separated members`, one cluster per line,
    /// pre-order with children ordered by smallest member.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for id in self.preorder() {
            let c = &self.nodes[id];
            let members: Vec<String> = c.members.iter().map(|m| m.to_string()).collect();
            writeln!(w, "{}\t{}", c.depth, members.join(","))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tree text is ASCII")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut tree: Option<ClusterTree> = None;
        // stack[d] = node id of the most recent cluster at depth d
        let mut stack: Vec<NodeId> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let (d, rest) = line.split_once('\t').ok_or_else(|| err("missing tab separator"))?;
            let depth: usize = d.trim().parse().map_err(|_| err("bad depth"))?;
            let members = if rest.trim().is_empty() {
                Vec::new()
            } else {
                rest.split(',')
                    .map(|t| t.trim().parse::<ObjectId>().map_err(|_| err("bad member id")))
                    .collect::<Result<Vec<_>>>()?
            };
            match tree.as_mut() {
                None => {
                    if depth != 0 {
                        return Err(err("first cluster must have depth 0"));
                    }
                    tree = Some(ClusterTree::leaf(members));
                    stack.push(0);
                }
                Some(t) => {
                    if depth == 0 || depth > stack.len() {
                        return Err(err("depth does not continue the pre-order"));
                    }
                    stack.truncate(depth);
                    let id = t.add_child(stack[depth - 1], members);
                    stack.push(id);
                }
            }
        }
        tree.ok_or_else(|| Error::Parse {
            line: 0,
            msg: "empty tree file".into(),
        })
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_text(s.as_bytes())
    }
}

/// Outcome of comparing the three pairwise LCAs of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Triplet {
    /// The pair (sorted ascending) grouped deeper than the third object.
    Pair(ObjectId, ObjectId),
    /// All three first co-occur in the same cluster.
    Unresolved,
}

impl Triplet {
    pub(crate) fn from_depths(i: ObjectId, j: ObjectId, l: ObjectId, dij: usize, dil: usize, djl: usize) -> Self {
        let pair = |a: ObjectId, b: ObjectId| Triplet::Pair(a.min(b), a.max(b));
        if dij > dil && dij > djl {
            pair(i, j)
        } else if dil > dij && dil > djl {
            pair(i, l)
        } else if djl > dij && djl > dil {
            pair(j, l)
        } else {
            Triplet::Unresolved
        }
    }
}

/// Dense table of pairwise LCA depths.
#[derive(Debug, Clone)]
pub struct LcaTable {
    n: usize,
    depth: Vec<u32>,
}

impl LcaTable {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: ObjectId, b: ObjectId) -> u32 {
        self.depth[a * self.n + b]
    }

    #[inline]
    pub fn triplet(&self, i: ObjectId, j: ObjectId, l: ObjectId) -> Triplet {
        Triplet::from_depths(
            i,
            j,
            l,
            self.get(i, j) as usize,
            self.get(i, l) as usize,
            self.get(j, l) as usize,
        )
    }
}

/// The first invariant a tree fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RootMismatch { expected: usize, found: usize },
    MemberOutOfRange { node: NodeId, id: ObjectId },
    DuplicateMember { node: NodeId, id: ObjectId },
    EmptyCluster { node: NodeId },
    ChildNotSubset { node: NodeId, child: NodeId },
    ChildrenOverlap { node: NodeId, a: NodeId, b: NodeId },
    ChildrenDoNotCover { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootMismatch { expected, found } => {
                write!(f, "root must contain all {expected} objects, has {found}")
            }
            Violation::MemberOutOfRange { node, id } => write!(f, "cluster {node} contains out-of-range id {id}"),
            Violation::DuplicateMember { node, id } => write!(f, "cluster {node} lists id {id} twice"),
            Violation::EmptyCluster { node } => write!(f, "cluster {node} is empty"),
            Violation::ChildNotSubset { node, child } => {
                write!(f, "child {child} is not a subset of cluster {node}")
            }
            Violation::ChildrenOverlap { node, a, b } => {
                write!(f, "children {a} and {b} of cluster {node} overlap")
            }
            Violation::ChildrenDoNotCover { node } => {
                write!(f, "children of cluster {node} do not cover it")
            }
        }
    }
}

/// Check every hierarchy invariant for a tree over objects `0..n`.
pub fn validate_tree(tree: &ClusterTree, n: usize) -> std::result::Result<(), Violation> {
    let root = tree.root();
    if root.members.len() != n || root.members.iter().enumerate().any(|(i, &m)| i != m) {
        // distinguish "wrong ids" from "wrong count" where possible
        if let Some(&id) = root.members.iter().find(|&&m| m >= n) {
            return Err(Violation::MemberOutOfRange { node: 0, id });
        }
        if let Some(w) = root.members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Violation::DuplicateMember { node: 0, id: w[0] });
        }
        return Err(Violation::RootMismatch {
            expected: n,
            found: root.members.len(),
        });
    }
    for (id, c) in tree.nodes.iter().enumerate() {
        if c.members.is_empty() {
            return Err(Violation::EmptyCluster { node: id });
        }
        if let Some(&bad) = c.members.iter().find(|&&m| m >= n) {
            return Err(Violation::MemberOutOfRange { node: id, id: bad });
        }
        if let Some(w) = c.members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Violation::DuplicateMember { node: id, id: w[0] });
        }
        if c.is_leaf() {
            continue;
        }
        let mut seen: Vec<Option<NodeId>> = vec![None; n];
        let mut covered = 0usize;
        for &ch in &c.children {
            for &m in &tree.nodes[ch].members {
                if c.members.binary_search(&m).is_err() {
                    return Err(Violation::ChildNotSubset { node: id, child: ch });
                }
                if let Some(prev) = seen[m] {
                    return Err(Violation::ChildrenOverlap {
                        node: id,
                        a: prev,
                        b: ch,
                    });
                }
                seen[m] = Some(ch);
                covered += 1;
            }
        }
        if covered != c.members.len() {
            return Err(Violation::ChildrenDoNotCover { node: id });
        }
    }
    Ok(())
}

/// Largest over all splits of (largest child size / smallest child size).
pub fn balance_factor(tree: &ClusterTree) -> Result<f64> {
    tree.nodes
        .iter()
        .filter(|c| !c.is_leaf())
        .map(|c| {
            let sizes = c.children.iter().map(|&ch| tree.nodes[ch].len());
            let max = sizes.clone().max().unwrap_or(0);
            let min = sizes.min().unwrap_or(0);
            max as f64 / min as f64
        })
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
        .ok_or(Error::NoSplits)
}

/// All clusters (root included) with at least `t` members, in node order.
pub fn clusters_of_min_size(tree: &ClusterTree, t: usize) -> Vec<NodeId> {
    (0..tree.nodes.len()).filter(|&i| tree.nodes[i].len() >= t).collect()
}

/// A flat k-way partition of `m` local indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatPartition {
    labels: Vec<usize>,
    k: usize,
}

impl FlatPartition {
    /// Labels must lie in `0..k` and every label must be used.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        let p = FlatPartition::new_degenerate(labels, k)?;
        if let Some(empty) = p.sizes().iter().position(|&s| s == 0) {
            return Err(Error::EmptySeedCluster(empty));
        }
        Ok(p)
    }

    /// Like [`FlatPartition::new`] but tolerates unused labels.
    pub fn new_degenerate(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidParameter(format!("label {bad} not below k={k}")));
        }
        Ok(FlatPartition { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Member indices per label.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            g[l].push(i);
        }
        g
    }

    /// Relabel so clusters are numbered by their smallest member.
    pub fn canonical(&self) -> FlatPartition {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        FlatPartition { labels, k: next }
    }
}
