//! Hash-consed canonical sets of positive integers.
//!
//! Members are keyed by their binary decomposition, as in [`crate::ptrie`],
//! but every node is interned in an arena: semantic equality, structural
//! equality and handle equality all coincide. That makes `set_equal` a
//! single integer comparison, including the negative answer, and lets
//! union/intersection/subset cut recursion whenever two child handles are
//! equal. Binary operations are memoized per arena.
//!
//! The arena is private to [`HSetArena`]: set nodes cannot be constructed
//! any other way, which is what justifies trusting handle disequality.

use crate::intern::{Arena, ArenaStats, Handle, NodeShape};
use crate::ptrie::ShareStats;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
enum SetShape {
    Empty,
    Node { left: Handle, here: bool, right: Handle },
}

impl NodeShape for SetShape {
    fn for_each_child(&self, f: &mut dyn FnMut(Handle)) {
        if let SetShape::Node { left, right, .. } = self {
            f(*left);
            f(*right);
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Memo {
    Set(Handle),
    Flag(bool),
}

/// A canonical set of positive integers; a copyable handle into its arena.
///
/// Equality of `HSet` values is handle equality and is only meaningful for
/// sets from the same arena.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct HSet(Handle);

impl HSet {
    pub fn handle(self) -> Handle {
        self.0
    }
}

const TAG_UNION: u8 = 0;
const TAG_INTER: u8 = 1;
const TAG_DIFF: u8 = 2;
const TAG_SUBSET: u8 = 3;

/// Arena and operations for [`HSet`] values.
pub struct HSetArena {
    arena: Arena<SetShape, Memo>,
    empty: Handle,
    /// Traversal counters; reset between measurements.
    pub stats: ShareStats,
}

fn check_member(k: u32) {
    assert!(k >= 1, "set members are positive integers, got 0");
}

impl HSetArena {
    pub fn new() -> Self {
        let mut arena = Arena::new();
        let empty = arena.intern(SetShape::Empty);
        HSetArena {
            arena,
            empty,
            stats: ShareStats::default(),
        }
    }

    pub fn empty(&self) -> HSet {
        HSet(self.empty)
    }

    /// Distinct nodes interned so far (including the empty node).
    pub fn node_count(&self) -> usize {
        self.arena.len()
    }

    pub fn arena_stats(&self) -> &ArenaStats {
        &self.arena.stats()
    }

    /// Smart constructor: the no-member all-empty node collapses to Empty,
    /// keeping representations canonical.
    fn node(&mut self, left: Handle, here: bool, right: Handle) -> Handle {
        if !here && left == self.empty && right == self.empty {
            return self.empty;
        }
        self.stats.nodes_allocated += 1;
        self.arena.intern(SetShape::Node { left, here, right })
    }

    fn parts(&self, s: Handle) -> (Handle, bool, Handle) {
        match self.arena.get(s) {
            SetShape::Empty => (self.empty, false, self.empty),
            SetShape::Node { left, here, right } => (*left, *here, *right),
        }
    }

    pub fn singleton(&mut self, k: u32) -> HSet {
        let e = self.empty();
        self.add(e, k)
    }

    pub fn add(&mut self, s: HSet, k: u32) -> HSet {
        check_member(k);
        HSet(self.add_rec(s.0, k))
    }

    fn add_rec(&mut self, s: Handle, k: u32) -> Handle {
        let (l, here, r) = self.parts(s);
        if k == 1 {
            if here {
                return s;
            }
            return self.node(l, true, r);
        }
        if k & 1 == 0 {
            let nl = self.add_rec(l, k >> 1);
            if nl == l {
                return s;
            }
            self.node(nl, here, r)
        } else {
            let nr = self.add_rec(r, k >> 1);
            if nr == r {
                return s;
            }
            self.node(l, here, nr)
        }
    }

    pub fn remove(&mut self, s: HSet, k: u32) -> HSet {
        check_member(k);
        HSet(self.remove_rec(s.0, k))
    }

    fn remove_rec(&mut self, s: Handle, k: u32) -> Handle {
        if s == self.empty {
            return s;
        }
        let (l, here, r) = self.parts(s);
        if k == 1 {
            if !here {
                return s;
            }
            return self.node(l, false, r);
        }
        if k & 1 == 0 {
            let nl = self.remove_rec(l, k >> 1);
            if nl == l {
                return s;
            }
            self.node(nl, here, r)
        } else {
            let nr = self.remove_rec(r, k >> 1);
            if nr == r {
                return s;
            }
            self.node(l, here, nr)
        }
    }

    pub fn mem(&self, s: HSet, k: u32) -> bool {
        check_member(k);
        let mut cur = s.0;
        let mut k = k;
        loop {
            match self.arena.get(cur) {
                SetShape::Empty => return false,
                SetShape::Node { left, here, right } => {
                    if k == 1 {
                        return *here;
                    }
                    cur = if k & 1 == 0 { *left } else { *right };
                    k >>= 1;
                }
            }
        }
    }

    pub fn union(&mut self, a: HSet, b: HSet) -> HSet {
        HSet(self.union_rec(a.0, b.0))
    }

    fn union_rec(&mut self, a: Handle, b: Handle) -> Handle {
        if a == b {
            self.stats.shortcut_hits += 1;
            return a;
        }
        if a == self.empty {
            return b;
        }
        if b == self.empty {
            return a;
        }
        // union is commutative: canonicalize the memo key
        let (ka, kb) = (a.min(b), a.max(b));
        if let Some(Memo::Set(h)) = self.arena.memo_lookup(TAG_UNION, ka, kb) {
            return *h;
        }
        self.stats.nodes_visited += 1;
        let (al, ah, ar) = self.parts(a);
        let (bl, bh, br) = self.parts(b);
        let l = self.union_rec(al, bl);
        let r = self.union_rec(ar, br);
        let res = self.node(l, ah || bh, r);
        self.arena.memo_store(TAG_UNION, ka, kb, Memo::Set(res));
        res
    }

    pub fn inter(&mut self, a: HSet, b: HSet) -> HSet {
        HSet(self.inter_rec(a.0, b.0))
    }

    fn inter_rec(&mut self, a: Handle, b: Handle) -> Handle {
        if a == b {
            self.stats.shortcut_hits += 1;
            return a;
        }
        if a == self.empty || b == self.empty {
            return self.empty;
        }
        let (ka, kb) = (a.min(b), a.max(b));
        if let Some(Memo::Set(h)) = self.arena.memo_lookup(TAG_INTER, ka, kb) {
            return *h;
        }
        self.stats.nodes_visited += 1;
        let (al, ah, ar) = self.parts(a);
        let (bl, bh, br) = self.parts(b);
        let l = self.inter_rec(al, bl);
        let r = self.inter_rec(ar, br);
        let res = self.node(l, ah && bh, r);
        self.arena.memo_store(TAG_INTER, ka, kb, Memo::Set(res));
        res
    }

    /// Set difference `a \ b`.
    pub fn diff(&mut self, a: HSet, b: HSet) -> HSet {
        HSet(self.diff_rec(a.0, b.0))
    }

    fn diff_rec(&mut self, a: Handle, b: Handle) -> Handle {
        if a == b {
            self.stats.shortcut_hits += 1;
            return self.empty;
        }
        if a == self.empty || b == self.empty {
            return a;
        }
        if let Some(Memo::Set(h)) = self.arena.memo_lookup(TAG_DIFF, a, b) {
            return *h;
        }
        self.stats.nodes_visited += 1;
        let (al, ah, ar) = self.parts(a);
        let (bl, bh, br) = self.parts(b);
        let l = self.diff_rec(al, bl);
        let r = self.diff_rec(ar, br);
        let res = self.node(l, ah && !bh, r);
        self.arena.memo_store(TAG_DIFF, a, b, Memo::Set(res));
        res
    }

    /// Inclusion test with handle-equality shortcuts at every level; bails
    /// out on the first differing path.
    pub fn subset(&mut self, a: HSet, b: HSet) -> bool {
        self.subset_rec(a.0, b.0)
    }

    fn subset_rec(&mut self, a: Handle, b: Handle) -> bool {
        if a == b {
            self.stats.shortcut_hits += 1;
            return true;
        }
        if a == self.empty {
            return true;
        }
        if b == self.empty {
            return false; // a is non-empty here
        }
        if let Some(Memo::Flag(r)) = self.arena.memo_lookup(TAG_SUBSET, a, b) {
            return *r;
        }
        self.stats.nodes_visited += 1;
        let (al, ah, ar) = self.parts(a);
        let (bl, bh, br) = self.parts(b);
        let res = (!ah || bh) && self.subset_rec(al, bl) && self.subset_rec(ar, br);
        self.arena.memo_store(TAG_SUBSET, a, b, Memo::Flag(res));
        res
    }

    /// Handle comparison; O(1) in both directions.
    pub fn set_equal(&self, a: HSet, b: HSet) -> bool {
        a == b
    }

    /// Members in ascending order.
    pub fn elements(&self, s: HSet) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect(s.0, 0, 0, &mut out);
        out.sort_unstable();
        out
    }

    fn collect(&self, s: Handle, depth: u32, acc: u64, out: &mut Vec<u32>) {
        match self.arena.get(s) {
            SetShape::Empty => {}
            SetShape::Node { left, here, right } => {
                if *here {
                    out.push(((1u64 << depth) | acc) as u32);
                }
                self.collect(*left, depth + 1, acc, out);
                self.collect(*right, depth + 1, acc | (1u64 << depth), out);
            }
        }
    }

    /// Structural fold over the members; visit order is unspecified.
    pub fn fold<T>(&self, s: HSet, init: T, mut f: impl FnMut(T, u32) -> T) -> T {
        self.fold_rec(s.0, 0, 0, init, &mut f)
    }

    fn fold_rec<T>(
        &self,
        s: Handle,
        depth: u32,
        acc_bits: u64,
        acc: T,
        f: &mut impl FnMut(T, u32) -> T,
    ) -> T {
        match self.arena.get(s) {
            SetShape::Empty => acc,
            SetShape::Node { left, here, right } => {
                let mut acc = acc;
                if *here {
                    acc = f(acc, ((1u64 << depth) | acc_bits) as u32);
                }
                let acc = self.fold_rec(*left, depth + 1, acc_bits, acc, f);
                self.fold_rec(*right, depth + 1, acc_bits | (1u64 << depth), acc, f)
            }
        }
    }

    pub fn is_canonical(&self, s: HSet) -> bool {
        self.canon_rec(s.0)
    }

    fn canon_rec(&self, s: Handle) -> bool {
        match self.arena.get(s) {
            SetShape::Empty => true,
            SetShape::Node { left, here, right } => {
                if !here && *left == self.empty && *right == self.empty {
                    return false;
                }
                self.canon_rec(*left) && self.canon_rec(*right)
            }
        }
    }

    /// Full-store invariant scan (uniqueness + acyclicity).
    pub fn validate(&self) -> Result<(), String> {
        self.arena.validate()
    }
}

impl Default for HSetArena {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_members(a: &mut HSetArena, ms: &[u32]) -> HSet {
        let mut s = a.empty();
        for &m in ms {
            s = a.add(s, m);
        }
        s
    }

    #[test]
    fn membership() {
        let mut a = HSetArena::new();
        let s = a.singleton(5);
        assert!(a.mem(s, 5));
        assert!(!a.mem(s, 4));
    }

    #[test]
    fn remove_collapses_to_empty() {
        let mut a = HSetArena::new();
        let s = a.singleton(5);
        let e = a.remove(s, 5);
        assert_eq!(e, a.empty());
    }

    #[test]
    fn insertion_order_gives_equal_handles() {
        let mut a = HSetArena::new();
        let s1 = from_members(&mut a, &[1, 9, 4, 200, 3]);
        let s2 = from_members(&mut a, &[200, 3, 9, 1, 4]);
        assert_eq!(s1, s2);
        assert!(a.set_equal(s1, s2));
    }

    #[test]
    fn union_inter_basics() {
        let mut a = HSetArena::new();
        let s1 = from_members(&mut a, &[1, 2, 3]);
        let s2 = from_members(&mut a, &[2, 3, 4]);
        let u = a.union(s1, s2);
        let i = a.inter(s1, s2);
        assert_eq!(a.elements(u), vec![1, 2, 3, 4]);
        assert_eq!(a.elements(i), vec![2, 3]);
        let d = a.diff(s1, s2);
        assert_eq!(a.elements(d), vec![1]);
    }

    #[test]
    fn union_on_same_handle_is_free() {
        let mut a = HSetArena::new();
        let s = from_members(&mut a, &[7, 8, 9]);
        a.stats.reset();
        let u = a.union(s, s);
        assert_eq!(u, s);
        assert_eq!(a.stats.nodes_visited, 0);
        assert_eq!(a.stats.shortcut_hits, 1);
    }

    #[test]
    fn second_union_is_a_single_memo_hit() {
        let mut a = HSetArena::new();
        let s1 = from_members(&mut a, &(1..=1000).collect::<Vec<_>>());
        let s2 = from_members(&mut a, &(500..=1500).collect::<Vec<_>>());
        let u1 = a.union(s1, s2);
        a.stats.reset();
        let hits = a.arena_stats().memo_hits;
        let u2 = a.union(s1, s2);
        assert_eq!(u1, u2);
        assert_eq!(a.stats.nodes_visited, 0);
        assert_eq!(a.arena_stats().memo_hits, hits + 1);
    }

    #[test]
    fn union_of_nearly_shared_big_sets_is_cheap() {
        let mut a = HSetArena::new();
        let base = from_members(&mut a, &(1..=100_000).collect::<Vec<_>>());
        // flip 10 leaves: remove 5, add 5 fresh
        let mut other = base;
        for k in [3, 77, 1234, 55_555, 99_999] {
            other = a.remove(other, k);
        }
        for k in [100_001, 100_002, 100_003, 100_004, 100_005] {
            other = a.add(other, k);
        }
        a.stats.reset();
        let u = a.union(base, other);
        assert!(a.mem(u, 3) && a.mem(u, 100_001));
        assert!(
            a.stats.nodes_visited <= 10 * 2 * 17 + 64,
            "visited {}",
            a.stats.nodes_visited
        );
        // naive reference: walk both element lists
        let naive_visits = a.elements(base).len() + a.elements(other).len();
        assert!(naive_visits >= 100_000);
    }

    #[test]
    fn subset_examples() {
        let mut a = HSetArena::new();
        let s1 = from_members(&mut a, &[2, 3]);
        let s2 = from_members(&mut a, &[1, 2, 3]);
        assert!(a.subset(s1, s2));
        assert!(!a.subset(s2, s1));
        a.stats.reset();
        assert!(a.subset(s2, s2));
        assert_eq!(a.stats.nodes_visited, 0);
    }

    #[test]
    fn elements_sorted_and_fold() {
        let mut a = HSetArena::new();
        let s = from_members(&mut a, &[3, 1, 2]);
        assert_eq!(a.elements(s), vec![1, 2, 3]);
        assert_eq!(a.fold(s, 0u32, |n, _| n + 1), 3);
        assert_eq!(a.elements(a.empty()), Vec::<u32>::new());
    }

    proptest! {
        #[test]
        fn ops_agree_with_btreeset(
            xs in proptest::collection::btree_set(1u32..4000, 0..50),
            ys in proptest::collection::btree_set(1u32..4000, 0..50),
        ) {
            let mut a = HSetArena::new();
            let sx = from_members(&mut a, &xs.iter().copied().collect::<Vec<_>>());
            let sy = from_members(&mut a, &ys.iter().copied().collect::<Vec<_>>());
            let u = a.union(sx, sy);
            let i = a.inter(sx, sy);
            let d = a.diff(sx, sy);
            prop_assert_eq!(a.elements(u), xs.union(&ys).copied().collect::<Vec<_>>());
            prop_assert_eq!(a.elements(i), xs.intersection(&ys).copied().collect::<Vec<_>>());
            prop_assert_eq!(a.elements(d), xs.difference(&ys).copied().collect::<Vec<_>>());
            prop_assert_eq!(a.subset(sx, sy), xs.is_subset(&ys));
            prop_assert_eq!(a.set_equal(sx, sy), xs == ys);
            // negative handle equality is trustworthy
            if sx != sy {
                prop_assert_ne!(&xs, &ys);
            }
            prop_assert!(a.is_canonical(u) && a.is_canonical(i) && a.is_canonical(d));
            a.validate().unwrap();
        }

        #[test]
        fn intersection_join_laws(
            xs in proptest::collection::btree_set(1u32..512, 0..30),
            ys in proptest::collection::btree_set(1u32..512, 0..30),
            zs in proptest::collection::btree_set(1u32..512, 0..30),
        ) {
            let mut a = HSetArena::new();
            let (x, y, z) = (
                from_members(&mut a, &xs.iter().copied().collect::<Vec<_>>()),
                from_members(&mut a, &ys.iter().copied().collect::<Vec<_>>()),
                from_members(&mut a, &zs.iter().copied().collect::<Vec<_>>()),
            );
            // commutative, associative, idempotent — by handle equality
            let xy = a.inter(x, y);
            let yx = a.inter(y, x);
            prop_assert_eq!(xy, yx);
            let xy_z = { let t = a.inter(x, y); a.inter(t, z) };
            let x_yz = { let t = a.inter(y, z); a.inter(x, t) };
            prop_assert_eq!(xy_z, x_yz);
            prop_assert_eq!(a.inter(x, x), x);
            // subset-compatibility
            prop_assert!(a.subset(xy, x) && a.subset(xy, y));
        }
    }
}
