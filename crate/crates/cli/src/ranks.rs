//! `--ranks` argument: comma-separated `node=r` assignments.
//!
//! A node is written as its 1-based modes: `3`, `{1,2}`, `1,2` or the range
//! `2-4`. Since node lists contain commas themselves, the text is split at
//! `=` first; each right-hand side is the integer up to the next comma.
//! `*=r` caps every non-root node not listed explicitly.

use std::str::FromStr;

use tbf_core::tbf::TbRank;
use tbf_core::{DimensionTree, Error, ModeSet, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankSpec {
    pub nodes: Vec<(ModeSet, usize)>,
    pub default: Option<usize>,
}

impl FromStr for RankSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("--ranks '{s}': {msg}"));
        let parts: Vec<&str> = s.split('=').collect();
        if parts.len() < 2 {
            return Err(bad("expected node=rank pairs".into()));
        }
        let mut spec = RankSpec::default();
        let mut lhs = parts[0].trim();
        for (k, part) in parts[1..].iter().enumerate() {
            let last = k + 2 == parts.len();
            let (rhs, next) = if last {
                (part.trim(), "")
            } else {
                let (r, n) = part
                    .split_once(',')
                    .ok_or_else(|| bad(format!("missing ',' after rank '{part}'")))?;
                (r.trim(), n.trim())
            };
            let r: usize = rhs.parse().map_err(|_| bad(format!("bad rank '{rhs}'")))?;
            if lhs == "*" {
                if spec.default.replace(r).is_some() {
                    return Err(bad("'*' given twice".into()));
                }
            } else {
                let node: ModeSet = lhs.parse().map_err(|e: Error| bad(e.to_string()))?;
                if spec.nodes.iter().any(|(m, _)| m == &node) {
                    return Err(bad(format!("node {node} given twice")));
                }
                spec.nodes.push((node, r));
            }
            lhs = next;
        }
        Ok(spec)
    }
}

impl RankSpec {
    /// Target ranks for truncating a tensor whose exact ranks are `current`.
    ///
    /// Listed nodes take the given rank. Every other node starts at its
    /// current rank (capped by `*`) and is lowered until the tuple satisfies
    /// the admissibility conditions; listed values are never changed.
    pub fn resolve(&self, tree: &DimensionTree, current: &TbRank) -> Result<TbRank> {
        let mut r = current.clone();
        let mut fixed = vec![false; tree.len()];
        if let Some(cap) = self.default {
            for id in 0..tree.len() {
                if id != tree.root() {
                    r.set(id, r.get(id).min(cap));
                }
            }
        }
        for (modes, rank) in &self.nodes {
            let id = tree
                .find(modes)
                .ok_or_else(|| Error::InvalidArgument(format!("--ranks: {modes} is not a node of the tree")))?;
            r.set(id, *rank);
            fixed[id] = true;
        }
        loop {
            let mut changed = false;
            for id in tree.internal_nodes() {
                let kids = tree.children(id);
                let prod: usize = kids.iter().map(|&c| r.get(c)).product();
                if !fixed[id] && r.get(id) > prod {
                    r.set(id, prod);
                    changed = true;
                }
                for &c in kids {
                    let bound = r.get(id) * kids.iter().filter(|&&o| o != c).map(|&o| r.get(o)).product::<usize>();
                    if !fixed[c] && r.get(c) > bound {
                        r.set(c, bound);
                        changed = true;
                    }
                }
            }
            if !changed {
                return Ok(r);
            }
        }
    }
}
