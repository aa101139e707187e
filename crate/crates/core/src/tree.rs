//! Dimension partition trees.
//!
//! A tree over the mode set `D = {1, …, d}` has `D` as its root, every node
//! with at least two modes is split disjointly into at least two children,
//! and the leaves are exactly the singletons `{j}`.
//!
//! Modes are stored 0-based; [`ModeSet`]'s `Display` and the text format use
//! 1-based indices. Children of a node are kept in canonical order (by their
//! smallest mode) and node ids are assigned in pre-order, so a tree built
//! from any ordering of the same description is identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Non-empty, strictly increasing set of 0-based mode indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeSet(Vec<usize>);

impl ModeSet {
    /// Builds a mode set from 0-based indices. Duplicates and empty input are rejected.
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut v: Vec<usize> = indices.into_iter().collect();
        if v.is_empty() {
            return Err(Error::InvalidArgument("empty mode set".into()));
        }
        v.sort_unstable();
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate mode in {:?}",
                v.iter().map(|i| i + 1).collect::<Vec<_>>()
            )));
        }
        Ok(ModeSet(v))
    }

    /// Builds a mode set from 1-based indices, as written by users.
    pub fn from_one_based(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut zero = Vec::new();
        for i in indices {
            if i == 0 {
                return Err(Error::InvalidArgument("mode index 0 (indices are 1-based)".into()));
            }
            zero.push(i - 1);
        }
        Self::new(zero)
    }

    pub fn singleton(j: usize) -> Self {
        ModeSet(vec![j])
    }

    /// `{0, …, d-1}`.
    pub fn full(d: usize) -> Self {
        ModeSet((0..d).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn smallest(&self) -> usize {
        self.0[0]
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset(&self, other: &ModeSet) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }

    pub fn is_singleton(&self) -> bool {
        self.0.len() == 1
    }

    /// Modes of `within` that are not in `self`, in increasing order.
    pub fn complement_in(&self, within: &ModeSet) -> Vec<usize> {
        within.0.iter().copied().filter(|&j| !self.contains(j)).collect()
    }

    /// Position of each of `self`'s modes inside `within` (which must contain them).
    pub fn positions_in(&self, within: &ModeSet) -> Option<Vec<usize>> {
        self.0
            .iter()
            .map(|j| within.0.binary_search(j).ok())
            .collect()
    }
}

impl fmt::Display for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        f.write_str("}")
    }
}

impl FromStr for ModeSet {
    type Err = Error;

    /// Parses 1-based indices such as `1,2,3`, `{1,2,3}` or the range `2-4`.
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('{').trim_end_matches('}');
        if let Some((a, b)) = trimmed.split_once('-') {
            let bound = |t: &str| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad mode range '{s}'")))
            };
            let (a, b) = (bound(a)?, bound(b)?);
            return ModeSet::from_one_based(a.min(b)..=a.max(b));
        }
        let mut out = Vec::new();
        for tok in trimmed.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            let v: usize = tok
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad mode index '{tok}' in '{s}'")))?;
            out.push(v);
        }
        ModeSet::from_one_based(out)
    }
}

pub type NodeId = usize;

/// Which clause of the tree definition a candidate violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    /// Mode index outside `1..=d`.
    ModeOutOfRange { node: ModeSet, d: usize },
    /// Root is not the full mode set.
    RootMismatch { root: ModeSet, d: usize },
    /// Children overlap, do not cover their parent, or are not subsets of it.
    NonPartitionChildren { node: ModeSet, detail: String },
    /// Internal node with exactly one child.
    SingleChild { node: ModeSet },
    /// Node with two or more modes but no children.
    NonSingletonLeaf { node: ModeSet },
    /// Singleton node that lists children.
    SingletonWithChildren { node: ModeSet },
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::ModeOutOfRange { node, d } => {
                write!(f, "node {node} has a mode outside 1..={d}")
            }
            TreeViolation::RootMismatch { root, d } => {
                write!(f, "root {root} is not the full mode set of size {d} (clause b)")
            }
            TreeViolation::NonPartitionChildren { node, detail } => {
                write!(f, "children of {node} do not partition it: {detail} (clause c)")
            }
            TreeViolation::SingleChild { node } => {
                write!(f, "node {node} has a single child (clause c)")
            }
            TreeViolation::NonSingletonLeaf { node } => {
                write!(f, "node {node} has several modes but no children (clause c)")
            }
            TreeViolation::SingletonWithChildren { node } => {
                write!(f, "singleton {node} has children (clause d)")
            }
        }
    }
}

/// Unvalidated tree description: a root and a children relation.
#[derive(Debug, Clone, Default)]
pub struct RawTree {
    pub d: usize,
    pub root: Option<ModeSet>,
    pub children: BTreeMap<ModeSet, Vec<ModeSet>>,
}

impl RawTree {
    pub fn new(d: usize, root: ModeSet) -> Self {
        RawTree {
            d,
            root: Some(root),
            children: BTreeMap::new(),
        }
    }

    pub fn with_children(mut self, node: ModeSet, children: Vec<ModeSet>) -> Self {
        self.children.insert(node, children);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub modes: ModeSet,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// A validated dimension partition tree. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionTree {
    d: usize,
    nodes: Vec<TreeNode>,
    index: BTreeMap<ModeSet, NodeId>,
    leaves: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    Tucker,
    TensorTrain,
    Balanced,
}

impl FromStr for TreeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tucker" => Ok(TreeKind::Tucker),
            "tt" | "tensor-train" => Ok(TreeKind::TensorTrain),
            "balanced" => Ok(TreeKind::Balanced),
            other => Err(Error::InvalidArgument(format!("unknown tree kind '{other}'"))),
        }
    }
}

/// Checks a raw description against the tree definition and builds the
/// canonical tree. All violations found are reported together.
pub fn validate_tree(raw: &RawTree) -> Result<DimensionTree> {
    let d = raw.d;
    let mut violations = Vec::new();
    let root = match &raw.root {
        Some(r) => r.clone(),
        None => {
            return Err(Error::InvalidArgument("tree description has no root".into()));
        }
    };
    if d == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    if root != ModeSet::full(d) {
        violations.push(TreeViolation::RootMismatch {
            root: root.clone(),
            d,
        });
    }

    let mut seen = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(node) = stack.pop() {
        if !seen.insert(node.clone()) {
            continue;
        }
        if node.indices().iter().any(|&j| j >= d) {
            violations.push(TreeViolation::ModeOutOfRange {
                node: node.clone(),
                d,
            });
        }
        let kids = raw.children.get(&node).map(Vec::as_slice).unwrap_or(&[]);
        if node.is_singleton() {
            if !kids.is_empty() {
                violations.push(TreeViolation::SingletonWithChildren { node: node.clone() });
            }
            continue;
        }
        if kids.is_empty() {
            violations.push(TreeViolation::NonSingletonLeaf { node: node.clone() });
            continue;
        }
        if kids.len() == 1 {
            violations.push(TreeViolation::SingleChild { node: node.clone() });
        }
        if let Some(detail) = partition_defect(&node, kids) {
            violations.push(TreeViolation::NonPartitionChildren {
                node: node.clone(),
                detail,
            });
        }
        for k in kids {
            // only strict subsets are followed, so malformed input cannot loop
            if k.is_subset(&node) && k.len() < node.len() {
                stack.push(k.clone());
            }
        }
    }

    if !violations.is_empty() {
        return Err(Error::InvalidTree(violations));
    }
    Ok(DimensionTree::build(d, &root, &raw.children))
}

fn partition_defect(node: &ModeSet, kids: &[ModeSet]) -> Option<String> {
    let mut covered = BTreeSet::new();
    for k in kids {
        if !k.is_subset(node) {
            return Some(format!("child {k} is not a subset"));
        }
        for &j in k.indices() {
            if !covered.insert(j) {
                return Some(format!("mode {} appears in more than one child", j + 1));
            }
        }
    }
    let missing: Vec<String> = node
        .indices()
        .iter()
        .filter(|j| !covered.contains(j))
        .map(|j| (j + 1).to_string())
        .collect();
    if !missing.is_empty() {
        return Some(format!("modes {} not covered", missing.join(",")));
    }
    None
}

impl DimensionTree {
    // Assumes a validated description.
    fn build(d: usize, root: &ModeSet, children: &BTreeMap<ModeSet, Vec<ModeSet>>) -> Self {
        let mut nodes: Vec<TreeNode> = Vec::new();
        let mut index = BTreeMap::new();
        fn visit(
            modes: &ModeSet,
            parent: Option<NodeId>,
            children: &BTreeMap<ModeSet, Vec<ModeSet>>,
            nodes: &mut Vec<TreeNode>,
            index: &mut BTreeMap<ModeSet, NodeId>,
        ) -> NodeId {
            let id = nodes.len();
            nodes.push(TreeNode {
                modes: modes.clone(),
                parent,
                children: Vec::new(),
            });
            index.insert(modes.clone(), id);
            if !modes.is_singleton() {
                let mut kids = children.get(modes).cloned().unwrap_or_default();
                kids.sort_by_key(ModeSet::smallest);
                for k in &kids {
                    let cid = visit(k, Some(id), children, nodes, index);
                    nodes[id].children.push(cid);
                }
            }
            id
        }
        visit(root, None, children, &mut nodes, &mut index);
        let mut leaves = vec![0; d];
        for (id, n) in nodes.iter().enumerate() {
            if n.modes.is_singleton() {
                leaves[n.modes.smallest()] = id;
            }
        }
        DimensionTree {
            d,
            nodes,
            index,
            leaves,
        }
    }

    /// One of the standard trees: Tucker (star), tensor train (chain) or
    /// balanced binary (recursive halving).
    pub fn standard(kind: TreeKind, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "standard trees need at least 2 modes, got {d}"
            )));
        }
        let full = ModeSet::full(d);
        let mut raw = RawTree::new(d, full.clone());
        match kind {
            TreeKind::Tucker => {
                raw.children
                    .insert(full, (0..d).map(ModeSet::singleton).collect());
            }
            TreeKind::TensorTrain => {
                for j in 0..d - 1 {
                    let node = ModeSet((j..d).collect());
                    let rest = ModeSet((j + 1..d).collect());
                    raw.children.insert(node, vec![ModeSet::singleton(j), rest]);
                }
            }
            TreeKind::Balanced => {
                fn split(modes: &[usize], raw: &mut RawTree) {
                    if modes.len() < 2 {
                        return;
                    }
                    let mid = modes.len() / 2;
                    let (l, r) = modes.split_at(mid);
                    raw.children.insert(
                        ModeSet(modes.to_vec()),
                        vec![ModeSet(l.to_vec()), ModeSet(r.to_vec())],
                    );
                    split(l, raw);
                    split(r, raw);
                }
                let all: Vec<usize> = (0..d).collect();
                split(&all, &mut raw);
            }
        }
        validate_tree(&raw)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn modes(&self, id: NodeId) -> &ModeSet {
        &self.nodes[id].modes
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Node id of the leaf `{j}` (0-based mode).
    pub fn leaf(&self, j: usize) -> NodeId {
        self.leaves[j]
    }

    pub fn find(&self, modes: &ModeSet) -> Option<NodeId> {
        self.index.get(modes).copied()
    }

    /// Internal (non-leaf) nodes in pre-order.
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&id| !self.is_leaf(id))
    }

    /// All nodes with every child listed before its parent.
    pub fn postorder(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).rev()
    }

    /// True when every child of the root is a leaf.
    pub fn is_tucker(&self) -> bool {
        self.children(0).iter().all(|&c| self.is_leaf(c))
    }

    /// Raw description equivalent to this tree.
    pub fn to_raw(&self) -> RawTree {
        let mut raw = RawTree::new(self.d, ModeSet::full(self.d));
        for n in &self.nodes {
            if !n.children.is_empty() {
                raw.children.insert(
                    n.modes.clone(),
                    n.children.iter().map(|&c| self.nodes[c].modes.clone()).collect(),
                );
            }
        }
        raw
    }

    /// Text form: one `NODE <indices> CHILDREN <k>` line per node in
    /// pre-order, children indented two spaces below their parent.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.write_node(0, 0, &mut out);
        out
    }

    fn write_node(&self, id: NodeId, depth: usize, out: &mut String) {
        let n = &self.nodes[id];
        let idx: Vec<String> = n.modes.indices().iter().map(|j| (j + 1).to_string()).collect();
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("NODE {} CHILDREN {}\n", idx.join(","), n.children.len()));
        for &c in &n.children {
            self.write_node(c, depth + 1, out);
        }
    }

    /// Parses the text form produced by [`serialize`](Self::serialize).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = TreeLines::new(text.lines().enumerate().map(|(i, l)| (i + 1, l)));
        let tree = parse_tree_lines(&mut lines)?;
        if let Some((line, rest)) = lines.next_content() {
            return Err(Error::parse(line, format!("unexpected trailing content '{}'", rest.trim())));
        }
        Ok(tree)
    }
}

/// Line source shared with the TBF reader, which embeds a tree.
pub(crate) struct TreeLines<'a, I: Iterator<Item = (usize, &'a str)>> {
    inner: std::iter::Peekable<I>,
    pub(crate) last_line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> TreeLines<'a, I> {
    pub(crate) fn new(inner: I) -> Self {
        TreeLines {
            inner: inner.peekable(),
            last_line: 0,
        }
    }

    /// Next non-blank, non-comment line.
    pub(crate) fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (n, l) in self.inner.by_ref() {
            self.last_line = n;
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((n, l));
        }
        None
    }
}

pub(crate) fn parse_tree_lines<'a, I: Iterator<Item = (usize, &'a str)>>(
    lines: &mut TreeLines<'a, I>,
) -> Result<DimensionTree> {
    let mut children: BTreeMap<ModeSet, Vec<ModeSet>> = BTreeMap::new();
    let root = parse_node(lines, None, &mut children)?;
    let d = root.indices().last().map_or(0, |m| m + 1);
    let raw = RawTree {
        d,
        root: Some(root),
        children,
    };
    validate_tree(&raw)
}

fn parse_node<'a, I: Iterator<Item = (usize, &'a str)>>(
    lines: &mut TreeLines<'a, I>,
    parent: Option<&ModeSet>,
    children: &mut BTreeMap<ModeSet, Vec<ModeSet>>,
) -> Result<ModeSet> {
    let (line, text) = lines
        .next_content()
        .ok_or_else(|| Error::parse(lines.last_line + 1, "expected a NODE line, found end of input"))?;
    let (modes, k) = parse_node_line(line, text)?;
    if let Some(p) = parent {
        if !modes.is_subset(p) || modes.len() >= p.len() {
            return Err(Error::parse(
                line,
                format!("child {modes} is not a proper subset of its parent {p}"),
            ));
        }
    }
    let mut kids = Vec::with_capacity(k);
    for _ in 0..k {
        kids.push(parse_node(lines, Some(&modes), children)?);
    }
    if k > 0 && children.insert(modes.clone(), kids).is_some() {
        return Err(Error::parse(line, format!("node {modes} listed twice")));
    }
    Ok(modes)
}

fn parse_node_line(line: usize, text: &str) -> Result<(ModeSet, usize)> {
    let t = text.trim();
    let rest = t
        .strip_prefix("NODE")
        .ok_or_else(|| Error::parse(line, format!("expected 'NODE', found '{t}'")))?;
    let (idx, count) = rest
        .split_once("CHILDREN")
        .ok_or_else(|| Error::parse(line, "missing 'CHILDREN'"))?;
    let mut modes = Vec::new();
    for tok in idx.split(',') {
        let tok: String = tok.chars().filter(|c| !c.is_whitespace()).collect();
        if tok.is_empty() {
            return Err(Error::parse(line, "empty mode index"));
        }
        let v: usize = tok
            .parse()
            .map_err(|_| Error::parse(line, format!("bad mode index '{tok}'")))?;
        modes.push(v);
    }
    let modes = ModeSet::from_one_based(modes).map_err(|e| Error::parse(line, e.to_string()))?;
    let k: usize = count
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad child count '{}'", count.trim())))?;
    Ok((modes, k))
}
