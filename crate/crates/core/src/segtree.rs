//! Discrete segment trees over `[1, ρ]`.
//!
//! The tree is laid over the padded range `[1, 2^h]` with `h = ⌈log₂ ρ⌉`.
//! Nodes whose points all exceed `ρ` are pruned, and a node left with a
//! single child is replaced by that child, so every internal node has two
//! children and there are exactly `ρ - 1` internal nodes. Node identities
//! are `(level, index)` positions in the padded tree; a collapsed chain keeps
//! the identity of its lowest node. The shape therefore only depends on `ρ`.
//!
//! A point is represented by the nodes on its root-to-leaf path; an interval
//! by its canonical cover, the maximal nodes contained in it. The two sets
//! intersect iff the point lies in the interval.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegTreeError {
    #[error("segment tree range must contain at least one point")]
    EmptyRange,
    #[error("point {point} outside [1, {range_max}]")]
    PointOutOfRange { point: u32, range_max: u32 },
    #[error("interval [{lo}, {hi}] is empty")]
    EmptyInterval { lo: u32, hi: u32 },
    #[error("interval [{lo}, {hi}] outside [1, {range_max}]")]
    IntervalOutOfRange { lo: u32, hi: u32, range_max: u32 },
}

/// Closed integer interval `[lo, hi]` with `lo ≤ hi`. Serialized as a
/// `[lo, hi]` pair, checked on the way in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(u32, u32)", into = "(u32, u32)")]
pub struct Interval {
    lo: u32,
    hi: u32,
}

impl TryFrom<(u32, u32)> for Interval {
    type Error = SegTreeError;

    fn try_from((lo, hi): (u32, u32)) -> Result<Self, Self::Error> {
        Interval::new(lo, hi)
    }
}

impl From<Interval> for (u32, u32) {
    fn from(iv: Interval) -> Self {
        (iv.lo, iv.hi)
    }
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Result<Self, SegTreeError> {
        if lo > hi {
            return Err(SegTreeError::EmptyInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(p: u32) -> Self {
        Interval { lo: p, hi: p }
    }

    pub fn lo(&self) -> u32 {
        self.lo
    }

    pub fn hi(&self) -> u32 {
        self.hi
    }

    pub fn len(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: u32) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// Position of a node in the padded tree. Level 0 is the root level; leaves
/// sit on level `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub level: u32,
    pub index: u32,
}

#[derive(Debug, Clone)]
struct Node {
    id: NodeId,
    lo: u32,
    hi: u32,
    parent: Option<usize>,
    children: Option<(usize, usize)>,
}

/// Set of tree nodes, ordered by `(level, index)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeSet(BTreeSet<NodeId>);

impl NodeSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.0.contains(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeId> {
        self.0.iter()
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        NodeSet(iter.into_iter().collect())
    }
}

impl IntoIterator for NodeSet {
    type Item = NodeId;
    type IntoIter = std::collections::btree_set::IntoIter<NodeId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = &'a NodeId;
    type IntoIter = std::collections::btree_set::Iter<'a, NodeId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone)]
pub struct SegmentTree {
    range_max: u32,
    height: u32,
    /// Level-order: sorted by depth in the pruned tree, then left to right.
    nodes: Vec<Node>,
    leaf_of: Vec<usize>,
    by_id: HashMap<NodeId, usize>,
}

impl SegmentTree {
    pub fn new(range_max: u32) -> Result<Self, SegTreeError> {
        if range_max == 0 {
            return Err(SegTreeError::EmptyRange);
        }
        let height = ceil_log2(range_max);
        let mut scratch = Vec::new();
        let root = grow(&mut scratch, range_max, height, 0, 0, None);

        // Renumber in breadth-first order so indices are level-ordered.
        let mut order = Vec::with_capacity(scratch.len());
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            if let Some((l, r)) = scratch[i].children {
                queue.push_back(l);
                queue.push_back(r);
            }
        }
        let mut remap = vec![0usize; scratch.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let nodes: Vec<Node> = order
            .iter()
            .map(|&old| {
                let n = &scratch[old];
                Node {
                    id: n.id,
                    lo: n.lo,
                    hi: n.hi,
                    parent: n.parent.map(|p| remap[p]),
                    children: n.children.map(|(l, r)| (remap[l], remap[r])),
                }
            })
            .collect();

        let mut leaf_of = vec![usize::MAX; range_max as usize];
        let mut by_id = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.children.is_none() {
                leaf_of[(n.lo - 1) as usize] = i;
            }
            by_id.insert(n.id, i);
        }
        Ok(SegmentTree {
            range_max,
            height,
            nodes,
            leaf_of,
            by_id,
        })
    }

    pub fn range_max(&self) -> u32 {
        self.range_max
    }

    /// Levels of the padded tree, `⌈log₂ ρ⌉`.
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.range_max as usize
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> u32 {
        (0..self.range_max)
            .map(|p| self.path_len(self.leaf_of[p as usize]) as u32 - 1)
            .max()
            .unwrap_or(0)
    }

    fn path_len(&self, mut i: usize) -> usize {
        let mut n = 1;
        while let Some(p) = self.nodes[i].parent {
            i = p;
            n += 1;
        }
        n
    }

    pub fn root(&self) -> NodeId {
        self.nodes[0].id
    }

    /// Node ids in level order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn leaf(&self, point: u32) -> Result<NodeId, SegTreeError> {
        self.check_point(point)?;
        Ok(self.nodes[self.leaf_of[(point - 1) as usize]].id)
    }

    pub fn is_leaf(&self, id: &NodeId) -> bool {
        self.by_id
            .get(id)
            .is_some_and(|&i| self.nodes[i].children.is_none())
    }

    /// Points covered by a node.
    pub fn coverage(&self, id: &NodeId) -> Option<Interval> {
        self.by_id.get(id).map(|&i| Interval {
            lo: self.nodes[i].lo,
            hi: self.nodes[i].hi,
        })
    }

    pub fn children(&self, id: &NodeId) -> Option<(NodeId, NodeId)> {
        let i = *self.by_id.get(id)?;
        self.nodes[i]
            .children
            .map(|(l, r)| (self.nodes[l].id, self.nodes[r].id))
    }

    pub fn parent(&self, id: &NodeId) -> Option<NodeId> {
        let i = *self.by_id.get(id)?;
        self.nodes[i].parent.map(|p| self.nodes[p].id)
    }

    /// Stable textual name of a node: `l{point}` for leaves, `n{level}_{index}`
    /// otherwise.
    pub fn node_name(&self, id: &NodeId) -> String {
        if id.level == self.height {
            format!("l{}", id.index + 1)
        } else {
            format!("n{}_{}", id.level, id.index)
        }
    }

    fn check_point(&self, point: u32) -> Result<(), SegTreeError> {
        if point == 0 || point > self.range_max {
            return Err(SegTreeError::PointOutOfRange {
                point,
                range_max: self.range_max,
            });
        }
        Ok(())
    }

    /// Root-to-leaf path of `point`.
    pub fn point_rep(&self, point: u32) -> Result<NodeSet, SegTreeError> {
        self.check_point(point)?;
        let mut out = BTreeSet::new();
        let mut i = self.leaf_of[(point - 1) as usize];
        loop {
            out.insert(self.nodes[i].id);
            match self.nodes[i].parent {
                Some(p) => i = p,
                None => break,
            }
        }
        Ok(NodeSet(out))
    }

    /// Canonical minimal cover of `interval`.
    pub fn interval_rep(&self, interval: Interval) -> Result<NodeSet, SegTreeError> {
        if interval.lo == 0 || interval.hi > self.range_max {
            return Err(SegTreeError::IntervalOutOfRange {
                lo: interval.lo,
                hi: interval.hi,
                range_max: self.range_max,
            });
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            if n.hi < interval.lo || n.lo > interval.hi {
                continue;
            }
            if interval.lo <= n.lo && n.hi <= interval.hi {
                out.insert(n.id);
                continue;
            }
            if let Some((l, r)) = n.children {
                stack.push(l);
                stack.push(r);
            }
        }
        Ok(NodeSet(out))
    }
}

fn ceil_log2(n: u32) -> u32 {
    if n <= 1 {
        0
    } else {
        32 - (n - 1).leading_zeros()
    }
}

/// Builds the pruned subtree rooted at padded position `(level, index)`;
/// returns its scratch index. The caller guarantees the node covers at
/// least one point `≤ range_max`.
fn grow(
    scratch: &mut Vec<Node>,
    range_max: u32,
    height: u32,
    level: u32,
    index: u32,
    parent: Option<usize>,
) -> usize {
    let span = 1u32 << (height - level);
    let lo = index * span + 1;
    let hi = (lo + span - 1).min(range_max);
    if level == height {
        scratch.push(Node {
            id: NodeId { level, index },
            lo,
            hi,
            parent,
            children: None,
        });
        return scratch.len() - 1;
    }
    let right_lo = lo + span / 2;
    if right_lo > range_max {
        return grow(scratch, range_max, height, level + 1, 2 * index, parent);
    }
    scratch.push(Node {
        id: NodeId { level, index },
        lo,
        hi,
        parent,
        children: None,
    });
    let me = scratch.len() - 1;
    let l = grow(scratch, range_max, height, level + 1, 2 * index, Some(me));
    let r = grow(scratch, range_max, height, level + 1, 2 * index + 1, Some(me));
    scratch[me].children = Some((l, r));
    me
}
