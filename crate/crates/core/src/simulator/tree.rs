//! Implicit addressing on the tree where even-depth vertices have three
//! children and odd-depth vertices have two.
//!
//! A vertex is stored as its depth plus a mixed-radix index: the child
//! digits read as a number whose radix alternates 3, 2, 3, 2, ... from the
//! root. Ordering is by depth, then index, which doubles as frog id order.

use std::fmt;

use serde::{Serialize, Serializer};

/// Deepest addressable vertex; `6^48` still fits in a `u128`.
pub const MAX_DEPTH: u16 = 96;

/// Number of children of a vertex at `depth`.
pub fn branching(depth: u16) -> u8 {
    if depth.is_multiple_of(2) {
        3
    } else {
        2
    }
}

/// Number of vertices at `depth`.
pub fn level_size(depth: u16) -> u128 {
    (0..depth).map(|d| branching(d) as u128).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeAddress {
    depth: u16,
    index: u128,
}

impl NodeAddress {
    pub const ROOT: NodeAddress = NodeAddress { depth: 0, index: 0 };

    /// Build an address from child digits, root first.
    pub fn from_digits(digits: &[u8]) -> Option<Self> {
        if digits.len() > MAX_DEPTH as usize {
            return None;
        }
        let mut addr = NodeAddress::ROOT;
        for &d in digits {
            addr = addr.child(d)?;
        }
        Some(addr)
    }

    pub fn from_parts(depth: u16, index: u128) -> Option<Self> {
        (depth <= MAX_DEPTH && index < level_size(depth)).then_some(NodeAddress { depth, index })
    }

    pub fn depth(&self) -> u16 {
        self.depth
    }

    pub fn index(&self) -> u128 {
        self.index
    }

    pub fn is_root(&self) -> bool {
        self.depth == 0
    }

    pub fn num_children(&self) -> u8 {
        branching(self.depth)
    }

    pub fn degree(&self) -> u8 {
        self.num_children() + u8::from(!self.is_root())
    }

    pub fn child(&self, k: u8) -> Option<Self> {
        if k >= self.num_children() || self.depth >= MAX_DEPTH {
            return None;
        }
        Some(NodeAddress {
            depth: self.depth + 1,
            index: self.index * self.num_children() as u128 + k as u128,
        })
    }

    pub fn parent(&self) -> Option<Self> {
        if self.is_root() {
            return None;
        }
        let radix = branching(self.depth - 1) as u128;
        Some(NodeAddress {
            depth: self.depth - 1,
            index: self.index / radix,
        })
    }

    /// Position of this vertex among its parent's children.
    pub fn child_rank(&self) -> Option<u8> {
        if self.is_root() {
            return None;
        }
        Some((self.index % branching(self.depth - 1) as u128) as u8)
    }

    /// Child digits from the root down.
    pub fn digits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.depth as usize);
        let mut cur = *self;
        while let Some(rank) = cur.child_rank() {
            out.push(rank);
            cur = cur.parent().expect("non-root has a parent");
        }
        out.reverse();
        out
    }

    /// Neighbors with the parent first, then children in rank order.
    pub fn neighbors(&self) -> Vec<NodeAddress> {
        let mut out = Vec::with_capacity(self.degree() as usize);
        out.extend(self.parent());
        out.extend((0..self.num_children()).filter_map(|k| self.child(k)));
        out
    }

    /// The `k`-th neighbor in [`neighbors`](Self::neighbors) order, without
    /// allocating.
    pub fn neighbor(&self, k: u8) -> Option<NodeAddress> {
        if self.is_root() {
            self.child(k)
        } else if k == 0 {
            self.parent()
        } else {
            self.child(k - 1)
        }
    }

    pub fn is_adjacent(&self, other: &NodeAddress) -> bool {
        self.parent() == Some(*other) || other.parent() == Some(*self)
    }

    /// Ancestor at `depth`, or `None` when `depth` is deeper than `self`.
    pub fn ancestor_at(&self, depth: u16) -> Option<NodeAddress> {
        if depth > self.depth {
            return None;
        }
        let mut cur = *self;
        while cur.depth > depth {
            cur = cur.parent()?;
        }
        Some(cur)
    }

    pub fn is_ancestor_of(&self, other: &NodeAddress) -> bool {
        other.ancestor_at(self.depth) == Some(*self)
    }

    /// Other children of this vertex's parent.
    pub fn siblings(&self) -> Vec<NodeAddress> {
        match self.parent() {
            None => Vec::new(),
            Some(p) => p
                .neighbors()
                .into_iter()
                .filter(|v| v.parent() == Some(p) && v != self)
                .collect(),
        }
    }

    /// Deepest common ancestor.
    pub fn meet(&self, other: &NodeAddress) -> NodeAddress {
        let d = self.depth.min(other.depth);
        let mut a = self.ancestor_at(d).expect("depth within range");
        let mut b = other.ancestor_at(d).expect("depth within range");
        while a != b {
            a = a.parent().expect("distinct vertices below the root");
            b = b.parent().expect("distinct vertices below the root");
        }
        a
    }

    /// Vertices of the unique path from `self` to `other`, both included.
    pub fn geodesic(&self, other: &NodeAddress) -> Vec<NodeAddress> {
        let m = self.meet(other);
        let mut up = Vec::new();
        let mut cur = *self;
        while cur != m {
            up.push(cur);
            cur = cur.parent().expect("meet is an ancestor");
        }
        up.push(m);
        let mut down = Vec::new();
        let mut cur = *other;
        while cur != m {
            down.push(cur);
            cur = cur.parent().expect("meet is an ancestor");
        }
        up.extend(down.into_iter().rev());
        up
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            return write!(f, "root");
        }
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl Serialize for NodeAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degrees() {
        let root = NodeAddress::ROOT;
        assert_eq!(root.neighbors().len(), 3);
        let a = root.child(1).unwrap();
        assert_eq!(a.neighbors().len(), 3);
        let b = a.child(0).unwrap();
        assert_eq!(b.neighbors().len(), 4);
        assert_eq!(b.neighbors()[0], a);
    }

    #[test]
    fn digits_round_trip() {
        let digits = [2, 1, 0, 1, 2, 0];
        let v = NodeAddress::from_digits(&digits).unwrap();
        assert_eq!(v.depth(), 6);
        assert_eq!(v.digits(), digits);
        assert_eq!(v.to_string(), "210120");
        assert!(NodeAddress::from_digits(&[0, 2]).is_none());
    }

    #[test]
    fn level_sizes() {
        assert_eq!(level_size(0), 1);
        assert_eq!(level_size(1), 3);
        assert_eq!(level_size(2), 6);
        assert_eq!(level_size(40), 6u128.pow(20));
    }

    #[test]
    fn geodesic_through_root() {
        let a = NodeAddress::from_digits(&[0, 1]).unwrap();
        let b = NodeAddress::from_digits(&[2]).unwrap();
        let path = a.geodesic(&b);
        assert_eq!(path.len(), 4);
        assert_eq!(path[2], NodeAddress::ROOT);
        assert!(path.windows(2).all(|w| w[0].is_adjacent(&w[1])));
    }

    #[test]
    fn neighbor_indexing_matches_list() {
        for v in [
            NodeAddress::ROOT,
            NodeAddress::from_digits(&[1]).unwrap(),
            NodeAddress::from_digits(&[1, 1]).unwrap(),
        ] {
            let list = v.neighbors();
            for (k, n) in list.iter().enumerate() {
                assert_eq!(v.neighbor(k as u8), Some(*n));
            }
            assert_eq!(v.neighbor(list.len() as u8), None);
        }
    }

    #[test]
    fn siblings_count() {
        assert_eq!(NodeAddress::from_digits(&[0]).unwrap().siblings().len(), 2);
        assert_eq!(NodeAddress::from_digits(&[0, 0]).unwrap().siblings().len(), 1);
        assert!(NodeAddress::ROOT.siblings().is_empty());
    }
}
