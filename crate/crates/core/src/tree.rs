//! Label arithmetic on the complete binary tree.
//!
//! Cells are labelled in level order starting from the root `1`; the two
//! daughters of cell `k` are `2k` (even) and `2k + 1` (odd). Generation `g`
//! is the label range `[2^g, 2^{g+1})`, so every index set used by the
//! estimators is a contiguous range of labels.

use std::iter::FusedIterator;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest generation index a tree may reach. Keeps `2^{n+1} - 1` well inside
/// `u64` and storage sizes sane.
pub const MAX_GENERATION: u32 = 40;

/// A 1-based cell label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeIndex(u64);

impl NodeIndex {
    pub const ROOT: NodeIndex = NodeIndex(1);

    pub fn new(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidNode(k));
        }
        Ok(NodeIndex(k))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    /// `floor(log2 k)`.
    #[inline]
    pub fn generation(self) -> u32 {
        63 - self.0.leading_zeros()
    }

    pub fn mother(self) -> Result<NodeIndex> {
        if self.0 == 1 {
            return Err(Error::NoMother(1));
        }
        Ok(NodeIndex(self.0 / 2))
    }

    /// Even and odd daughters.
    #[inline]
    pub fn daughters(self) -> (NodeIndex, NodeIndex) {
        (NodeIndex(2 * self.0), NodeIndex(2 * self.0 + 1))
    }

    /// `[k/2, k/4, ..., k/2^depth]`.
    pub fn ancestor_chain(self, depth: u32) -> Result<Vec<NodeIndex>> {
        let generation = self.generation();
        if depth > generation {
            return Err(Error::AncestorDepth { node: self.0, depth, generation });
        }
        Ok((1..=depth).map(|i| NodeIndex(self.0 >> i)).collect())
    }
}

impl std::fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

pub fn generation_of(k: u64) -> Result<u32> {
    Ok(NodeIndex::new(k)?.generation())
}

pub fn mother(k: u64) -> Result<u64> {
    Ok(NodeIndex::new(k)?.mother()?.get())
}

pub fn ancestor_chain(k: u64, depth: u32) -> Result<Vec<u64>> {
    Ok(NodeIndex::new(k)?.ancestor_chain(depth)?.into_iter().map(NodeIndex::get).collect())
}

/// `|G_n| = 2^n`.
#[inline]
pub fn generation_size(n: u32) -> u64 {
    1u64 << n
}

/// `|T_n| = 2^{n+1} - 1`.
#[inline]
pub fn subtree_size(n: u32) -> u64 {
    (1u64 << (n + 1)) - 1
}

/// `|T_{n,p}| = 2^{n+1} - 2^p`, zero when `n < p`.
#[inline]
pub fn shifted_subtree_size(n: u32, p: u32) -> u64 {
    let hi = 1u64 << (n + 1);
    let lo = 1u64 << p;
    hi.saturating_sub(lo)
}

/// Which of the three label sets to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSetKind {
    /// `G_n`
    Generation,
    /// `T_n`
    FullSubtree,
    /// `T_{n,p} = { k in T_n : k >= 2^p }`
    ShiftedSubtree,
}

/// Generation count `n` and model order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    n: u32,
    p: u32,
}

impl TreeShape {
    pub fn new(n: u32, p: u32) -> Result<Self> {
        if n > MAX_GENERATION {
            return Err(Error::TreeTooLarge(n));
        }
        if p == 0 {
            return Err(Error::InvalidShape("model order p must be at least 1".into()));
        }
        if p > MAX_GENERATION {
            return Err(Error::InvalidShape(format!("model order {p} is too large")));
        }
        Ok(TreeShape { n, p })
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn p(&self) -> u32 {
        self.p
    }

    /// Number of stored cells, `|T_n|`.
    #[inline]
    pub fn len(&self) -> u64 {
        subtree_size(self.n)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_set(&self, kind: IndexSetKind) -> Result<NodeRange> {
        let n = self.n;
        match kind {
            IndexSetKind::Generation => Ok(NodeRange::new(1 << n, 1 << (n + 1))),
            IndexSetKind::FullSubtree => Ok(NodeRange::new(1, 1 << (n + 1))),
            IndexSetKind::ShiftedSubtree => {
                if n + 1 < self.p {
                    return Err(Error::InvalidShape(format!(
                        "shifted subtree T_(n,p) needs n >= p - 1, got n = {n}, p = {}",
                        self.p
                    )));
                }
                Ok(NodeRange::new(1 << self.p, 1 << (n + 1)))
            }
        }
    }
}

/// Label range `[start, end)` in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRange {
    next: u64,
    end: u64,
}

impl NodeRange {
    /// `[start, end)`; `start` is clamped to at least 1.
    pub fn new(start: u64, end: u64) -> Self {
        let start = start.max(1);
        NodeRange { next: start, end: end.max(start) }
    }

    /// Cells `k` of `T_{n,shift}`: `2^shift <= k < 2^{n+1}`. Empty when `n + 1 <= shift`.
    pub fn shifted(n: u32, shift: u32) -> Self {
        NodeRange::new(1u64 << shift, 1u64 << (n + 1))
    }

    pub fn start(&self) -> u64 {
        self.next
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn labels(&self) -> std::ops::Range<u64> {
        self.next..self.end
    }
}

impl Iterator for NodeRange {
    type Item = NodeIndex;

    #[inline]
    fn next(&mut self) -> Option<NodeIndex> {
        if self.next < self.end {
            let k = self.next;
            self.next += 1;
            Some(NodeIndex(k))
        } else {
            None
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for NodeRange {}
impl FusedIterator for NodeRange {}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn halving_generation(mut k: u64) -> u32 {
        let mut g = 0;
        while k > 1 {
            k /= 2;
            g += 1;
        }
        g
    }

    #[test]
    fn generation_examples() {
        assert_eq!(generation_of(1).unwrap(), 0);
        assert_eq!(generation_of(5).unwrap(), 2);
        assert_eq!(generation_of(1023).unwrap(), halving_generation(1023));
        assert_eq!(generation_of(1023).unwrap(), 9);
        assert_eq!(generation_of(0), Err(Error::InvalidNode(0)));
    }

    #[test]
    fn mother_examples() {
        assert_eq!(mother(7).unwrap(), 3);
        assert_eq!(mother(2).unwrap(), 1);
        assert_eq!(mother(11).unwrap(), 5);
        assert_eq!(mother(1), Err(Error::NoMother(1)));
        assert!(mother(0).is_err());
    }

    #[test]
    fn ancestor_examples() {
        assert_eq!(ancestor_chain(11, 3).unwrap(), vec![5, 2, 1]);
        assert_eq!(ancestor_chain(11, 0).unwrap(), Vec::<u64>::new());
        assert_eq!(ancestor_chain(12, 2).unwrap(), vec![6, 3]);
        assert!(matches!(ancestor_chain(11, 4), Err(Error::AncestorDepth { .. })));
    }

    #[test]
    fn index_set_examples() {
        let s = TreeShape::new(3, 1).unwrap();
        let v: Vec<u64> = s.index_set(IndexSetKind::ShiftedSubtree).unwrap().map(NodeIndex::get).collect();
        assert_eq!(v, (2..=15).collect::<Vec<_>>());
        assert_eq!(v.len(), 14);

        let s = TreeShape::new(2, 1).unwrap();
        let v: Vec<u64> = s.index_set(IndexSetKind::FullSubtree).unwrap().map(NodeIndex::get).collect();
        assert_eq!(v, (1..=7).collect::<Vec<_>>());

        // enumerate-and-count oracle
        let s = TreeShape::new(3, 2).unwrap();
        let oracle = (1u64..=15).filter(|&k| k >= 4).count();
        let set = s.index_set(IndexSetKind::ShiftedSubtree).unwrap();
        assert_eq!(set.len(), oracle);
        assert_eq!(set.len(), 12);
        assert_eq!(s.index_set(IndexSetKind::ShiftedSubtree).unwrap().next().unwrap().get(), 4);

        let g = TreeShape::new(2, 1).unwrap().index_set(IndexSetKind::Generation).unwrap();
        assert_eq!(g.map(NodeIndex::get).collect::<Vec<_>>(), vec![4, 5, 6, 7]);
    }

    #[test]
    fn shifted_subtree_precondition() {
        // n = p - 1 is allowed and yields the empty set
        let s = TreeShape::new(1, 2).unwrap();
        assert_eq!(s.index_set(IndexSetKind::ShiftedSubtree).unwrap().len(), 0);
        let s = TreeShape::new(0, 2).unwrap();
        assert!(s.index_set(IndexSetKind::ShiftedSubtree).is_err());
        // T_{p,p} = G_p
        let s = TreeShape::new(3, 3).unwrap();
        assert_eq!(
            s.index_set(IndexSetKind::ShiftedSubtree).unwrap().collect::<Vec<_>>(),
            s.index_set(IndexSetKind::Generation).unwrap().collect::<Vec<_>>()
        );
    }

    #[test]
    fn size_cap() {
        assert!(TreeShape::new(MAX_GENERATION, 1).is_ok());
        assert_eq!(TreeShape::new(MAX_GENERATION + 1, 1), Err(Error::TreeTooLarge(41)));
        assert!(TreeShape::new(3, 0).is_err());
    }

    #[test]
    fn shifted_cardinality_by_enumeration() {
        for p in 1..=4u32 {
            for n in (p - 1)..=12 {
                let shape = TreeShape::new(n, p).unwrap();
                let counted = shape.index_set(IndexSetKind::ShiftedSubtree).unwrap().count() as u64;
                let full = shape.index_set(IndexSetKind::FullSubtree).unwrap().count() as u64;
                // |T_{n,p}| = |T_n| - |T_{p-1}|
                assert_eq!(counted, full - subtree_size(p - 1));
                assert_eq!(counted, shifted_subtree_size(n, p));
            }
        }
    }

    proptest! {
        #[test]
        fn daughters_point_back(k in 1u64..(1 << 30)) {
            let node = NodeIndex::new(k).unwrap();
            let (e, o) = node.daughters();
            prop_assert_eq!(e.mother().unwrap(), node);
            prop_assert_eq!(o.mother().unwrap(), node);
            prop_assert_eq!(e.generation(), node.generation() + 1);
            prop_assert_eq!(o.generation(), node.generation() + 1);
        }

        #[test]
        fn full_chain_ends_at_root(k in 2u64..(1 << 40)) {
            let node = NodeIndex::new(k).unwrap();
            let chain = node.ancestor_chain(node.generation()).unwrap();
            prop_assert_eq!(*chain.last().unwrap(), NodeIndex::ROOT);
        }

        #[test]
        fn index_sets_strictly_increasing(n in 0u32..14, p in 1u32..6, kind in 0u8..3) {
            let kind = match kind {
                0 => IndexSetKind::Generation,
                1 => IndexSetKind::FullSubtree,
                _ => IndexSetKind::ShiftedSubtree,
            };
            let shape = TreeShape::new(n, p).unwrap();
            if let Ok(set) = shape.index_set(kind) {
                let labels: Vec<u64> = set.map(NodeIndex::get).collect();
                prop_assert!(labels.windows(2).all(|w| w[0] < w[1]));
                let expected = match kind {
                    IndexSetKind::Generation => generation_size(n),
                    IndexSetKind::FullSubtree => subtree_size(n),
                    IndexSetKind::ShiftedSubtree => (1u64 << (n + 1)) - (1u64 << p),
                };
                prop_assert_eq!(labels.len() as u64, expected);
            } else {
                prop_assert!(kind == IndexSetKind::ShiftedSubtree && n + 1 < p);
            }
        }
    }
}
