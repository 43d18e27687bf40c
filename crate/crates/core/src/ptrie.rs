//! Canonical persistent radix-2 tries mapping positive integers to values.
//!
//! Keys are decomposed from low-order to high-order bits: key 1 terminates
//! at the current node's value slot, otherwise bit 0 selects the left (0)
//! or right (1) child and the key is shifted right. The representation is
//! canonical: a node with no value and two empty children is never built,
//! so two tries mapping every key to equal values are structurally equal
//! (and extensional equality can be decided structurally).
//!
//! All operations are persistent. Results share untouched subtrees with
//! their inputs, and the global operations (`combine`, `leq_by`,
//! `equal_by`) take a pointer-identity fast path when both sides are the
//! same node. Identity is only ever used in the sound direction: same node
//! implies equal contents; distinct nodes say nothing.

use std::sync::Arc;

/// Counters for sharing and shortcut behavior.
///
/// Counters are per operation context: callers create one, pass it to the
/// operations they want to measure, and reset it between measurements.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShareStats {
    /// Fresh nodes built (one per `Arc` allocation).
    pub nodes_allocated: u64,
    /// Node (pairs) examined by a traversal.
    pub nodes_visited: u64,
    /// Times an identity probe cut a traversal short.
    pub shortcut_hits: u64,
}

impl ShareStats {
    pub fn reset(&mut self) {
        *self = ShareStats::default();
    }
}

struct Node<V> {
    left: PTrie<V>,
    value: Option<V>,
    right: PTrie<V>,
}

/// A persistent map from positive `u32` keys to `V`.
pub struct PTrie<V>(Option<Arc<Node<V>>>);

impl<V> Clone for PTrie<V> {
    fn clone(&self) -> Self {
        PTrie(self.0.clone())
    }
}

fn check_key(key: u32) {
    assert!(key >= 1, "ptrie keys are positive integers, got 0");
}

/// Smart constructor: collapses the all-empty node, keeping the trie
/// canonical.
fn node<V>(left: PTrie<V>, value: Option<V>, right: PTrie<V>, stats: &mut ShareStats) -> PTrie<V> {
    if value.is_none() && left.is_empty() && right.is_empty() {
        return PTrie::empty();
    }
    stats.nodes_allocated += 1;
    PTrie(Some(Arc::new(Node { left, value, right })))
}

impl<V> PTrie<V> {
    pub fn empty() -> Self {
        PTrie(None)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    /// Sound identity probe: `true` implies the two tries are structurally
    /// equal. A `false` answer carries no information, and the result for
    /// distinct-but-equal tries is unspecified.
    pub fn same_node(a: &Self, b: &Self) -> bool {
        match (&a.0, &b.0) {
            (None, None) => true,
            (Some(x), Some(y)) => Arc::ptr_eq(x, y),
            _ => false,
        }
    }

    pub fn get(&self, key: u32) -> Option<&V> {
        check_key(key);
        let mut t = self;
        let mut k = key;
        loop {
            let n = t.0.as_deref()?;
            if k == 1 {
                return n.value.as_ref();
            }
            t = if k & 1 == 0 { &n.left } else { &n.right };
            k >>= 1;
        }
    }

    pub fn contains_key(&self, key: u32) -> bool {
        self.get(key).is_some()
    }

    /// Full traversal checking that no all-empty node exists anywhere.
    pub fn is_canonical(&self) -> bool {
        match &self.0 {
            None => true,
            Some(n) => {
                if n.value.is_none() && n.left.is_empty() && n.right.is_empty() {
                    return false;
                }
                n.left.is_canonical() && n.right.is_canonical()
            }
        }
    }

    /// Number of bindings (full traversal).
    pub fn len(&self) -> usize {
        match &self.0 {
            None => 0,
            Some(n) => usize::from(n.value.is_some()) + n.left.len() + n.right.len(),
        }
    }

    /// All bindings in ascending key order.
    pub fn bindings(&self) -> Vec<(u32, &V)> {
        let mut out = Vec::new();
        self.collect(0, 0, &mut out);
        out.sort_by_key(|&(k, _)| k);
        out
    }

    fn collect<'a>(&'a self, depth: u32, acc: u64, out: &mut Vec<(u32, &'a V)>) {
        if let Some(n) = &self.0 {
            if let Some(v) = &n.value {
                // Reconstruct the key: a leading 1 bit above the path bits.
                out.push((((1u64 << depth) | acc) as u32, v));
            }
            n.left.collect(depth + 1, acc, out);
            n.right.collect(depth + 1, acc | (1u64 << depth), out);
        }
    }

    /// Pointwise comparison. `cmp` is called once per key present in
    /// either trie, with `None` standing for an absent binding on that
    /// side; it is never called with both sides absent. The identity probe
    /// short-circuits identical subtrees to `true`, so `cmp` must hold on
    /// equal values.
    pub fn leq_by<F>(&self, other: &Self, mut cmp: F, stats: &mut ShareStats) -> bool
    where
        F: FnMut(Option<&V>, Option<&V>) -> bool,
    {
        self.leq_rec(other, &mut cmp, stats)
    }

    fn leq_rec<F>(&self, other: &Self, cmp: &mut F, stats: &mut ShareStats) -> bool
    where
        F: FnMut(Option<&V>, Option<&V>) -> bool,
    {
        stats.nodes_visited += 1;
        if Self::same_node(self, other) {
            stats.shortcut_hits += 1;
            return true;
        }
        match (&self.0, &other.0) {
            (None, None) => true,
            (Some(n), None) => n.one_sided(true, cmp, stats),
            (None, Some(n)) => n.one_sided(false, cmp, stats),
            (Some(a), Some(b)) => {
                let here = match (&a.value, &b.value) {
                    (None, None) => true,
                    (x, y) => cmp(x.as_ref(), y.as_ref()),
                };
                here && a.left.leq_rec(&b.left, cmp, stats) && a.right.leq_rec(&b.right, cmp, stats)
            }
        }
    }

    /// Extensional equality under `eq`. With structural value equality this
    /// coincides with structural equality of the tries (canonicity).
    pub fn equal_by<F>(&self, other: &Self, mut eq: F, stats: &mut ShareStats) -> bool
    where
        F: FnMut(&V, &V) -> bool,
    {
        self.leq_by(
            other,
            |a, b| match (a, b) {
                (Some(x), Some(y)) => eq(x, y),
                _ => false,
            },
            stats,
        )
    }
}

impl<V> Node<V> {
    /// Checks `cmp` against every binding of a subtree present on only one
    /// side. `present_left` tells which side this subtree belongs to.
    fn one_sided<F>(&self, present_left: bool, cmp: &mut F, stats: &mut ShareStats) -> bool
    where
        F: FnMut(Option<&V>, Option<&V>) -> bool,
    {
        let here = match &self.value {
            None => true,
            Some(v) => {
                if present_left {
                    cmp(Some(v), None)
                } else {
                    cmp(None, Some(v))
                }
            }
        };
        if !here {
            return false;
        }
        for child in [&self.left, &self.right] {
            stats.nodes_visited += 1;
            if let Some(n) = &child.0 {
                if !n.one_sided(present_left, cmp, stats) {
                    return false;
                }
            }
        }
        true
    }
}

impl<V: Clone> PTrie<V> {
    pub fn set(&self, key: u32, value: V) -> Self {
        self.set_tracked(key, value, &mut ShareStats::default())
    }

    /// Like [`set`](Self::set), counting allocations. At most
    /// bit-length(key) nodes are built; everything else is shared.
    pub fn set_tracked(&self, key: u32, value: V, stats: &mut ShareStats) -> Self {
        check_key(key);
        self.set_rec(key, value, stats)
    }

    fn set_rec(&self, key: u32, value: V, stats: &mut ShareStats) -> Self {
        let (left, old, right) = match &self.0 {
            Some(n) => (n.left.clone(), n.value.clone(), n.right.clone()),
            None => (PTrie::empty(), None, PTrie::empty()),
        };
        if key == 1 {
            node(left, Some(value), right, stats)
        } else if key & 1 == 0 {
            node(left.set_rec(key >> 1, value, stats), old, right, stats)
        } else {
            node(left, old, right.set_rec(key >> 1, value, stats), stats)
        }
    }

    pub fn remove(&self, key: u32) -> Self {
        self.remove_tracked(key, &mut ShareStats::default())
    }

    /// Removes a binding, collapsing empty branches. Removing an absent
    /// key returns the input trie unchanged (same node).
    pub fn remove_tracked(&self, key: u32, stats: &mut ShareStats) -> Self {
        check_key(key);
        self.remove_rec(key, stats)
    }

    fn remove_rec(&self, key: u32, stats: &mut ShareStats) -> Self {
        let Some(n) = &self.0 else {
            return self.clone();
        };
        if key == 1 {
            if n.value.is_none() {
                return self.clone();
            }
            return node(n.left.clone(), None, n.right.clone(), stats);
        }
        if key & 1 == 0 {
            let nl = n.left.remove_rec(key >> 1, stats);
            if Self::same_node(&nl, &n.left) {
                return self.clone();
            }
            node(nl, n.value.clone(), n.right.clone(), stats)
        } else {
            let nr = n.right.remove_rec(key >> 1, stats);
            if Self::same_node(&nr, &n.right) {
                return self.clone();
            }
            node(n.left.clone(), n.value.clone(), nr, stats)
        }
    }
}

impl<V: Clone + PartialEq> PTrie<V> {
    /// Pointwise combination of two tries. `f` is applied once per key
    /// present in either trie and must satisfy `f(None, None) = None`
    /// (absent keys are never visited). Whenever a produced subtree would
    /// equal an input subtree, that input subtree is returned instead of
    /// a fresh allocation.
    pub fn combine<F>(&self, other: &Self, f: F, stats: &mut ShareStats) -> Self
    where
        F: FnMut(Option<&V>, Option<&V>) -> Option<V>,
    {
        let mut f = f;
        self.combine_rec(other, &mut f, false, stats)
    }

    /// [`combine`](Self::combine) for an `f` that is idempotent on equal
    /// inputs (`f(x, x) = x` pointwise): subtrees reported identical by
    /// the identity probe are returned without traversal.
    pub fn combine_idem<F>(&self, other: &Self, f: F, stats: &mut ShareStats) -> Self
    where
        F: FnMut(Option<&V>, Option<&V>) -> Option<V>,
    {
        let mut f = f;
        self.combine_rec(other, &mut f, true, stats)
    }

    fn combine_rec<F>(&self, other: &Self, f: &mut F, idem: bool, stats: &mut ShareStats) -> Self
    where
        F: FnMut(Option<&V>, Option<&V>) -> Option<V>,
    {
        stats.nodes_visited += 1;
        if idem && Self::same_node(self, other) {
            stats.shortcut_hits += 1;
            return self.clone();
        }
        match (&self.0, &other.0) {
            (None, None) => PTrie::empty(),
            (Some(_), None) => self.map_side(true, f, stats),
            (None, Some(_)) => other.map_side(false, f, stats),
            (Some(a), Some(b)) => {
                let left = a.left.combine_rec(&b.left, f, idem, stats);
                let right = a.right.combine_rec(&b.right, f, idem, stats);
                let value = match (&a.value, &b.value) {
                    (None, None) => None,
                    (x, y) => f(x.as_ref(), y.as_ref()),
                };
                if Self::same_node(&left, &a.left)
                    && Self::same_node(&right, &a.right)
                    && value == a.value
                {
                    return self.clone();
                }
                if Self::same_node(&left, &b.left)
                    && Self::same_node(&right, &b.right)
                    && value == b.value
                {
                    return other.clone();
                }
                node(left, value, right, stats)
            }
        }
    }

    /// One-sided tail of a combine: the other trie is empty from here on.
    fn map_side<F>(&self, present_left: bool, f: &mut F, stats: &mut ShareStats) -> Self
    where
        F: FnMut(Option<&V>, Option<&V>) -> Option<V>,
    {
        let Some(n) = &self.0 else {
            return PTrie::empty();
        };
        let mut rec = |t: &PTrie<V>, stats: &mut ShareStats| {
            stats.nodes_visited += 1;
            t.map_side(present_left, f, stats)
        };
        let left = rec(&n.left, stats);
        let right = rec(&n.right, stats);
        let value = match &n.value {
            None => None,
            Some(v) => {
                if present_left {
                    f(Some(v), None)
                } else {
                    f(None, Some(v))
                }
            }
        };
        if Self::same_node(&left, &n.left) && Self::same_node(&right, &n.right) && value == n.value
        {
            return self.clone();
        }
        node(left, value, right, stats)
    }

    /// Reference combine without identity probes or result sharing: visits
    /// every node of both inputs and reallocates the whole result. Produces
    /// a trie structurally equal to [`combine`](Self::combine)'s.
    pub fn combine_naive<F>(&self, other: &Self, f: F, stats: &mut ShareStats) -> Self
    where
        F: FnMut(Option<&V>, Option<&V>) -> Option<V>,
    {
        let mut f = f;
        self.naive_rec(other, &mut f, stats)
    }

    fn naive_rec<F>(&self, other: &Self, f: &mut F, stats: &mut ShareStats) -> Self
    where
        F: FnMut(Option<&V>, Option<&V>) -> Option<V>,
    {
        stats.nodes_visited += 1;
        if self.is_empty() && other.is_empty() {
            return PTrie::empty();
        }
        let empty = PTrie::empty();
        let (al, av, ar) = match &self.0 {
            Some(n) => (&n.left, n.value.as_ref(), &n.right),
            None => (&empty, None, &empty),
        };
        let (bl, bv, br) = match &other.0 {
            Some(n) => (&n.left, n.value.as_ref(), &n.right),
            None => (&empty, None, &empty),
        };
        let left = al.naive_rec(bl, f, stats);
        let right = ar.naive_rec(br, f, stats);
        let value = match (av, bv) {
            (None, None) => None,
            (x, y) => f(x, y),
        };
        node(left, value, right, stats)
    }
}

impl<V: PartialEq> PartialEq for PTrie<V> {
    fn eq(&self, other: &Self) -> bool {
        if Self::same_node(self, other) {
            return true;
        }
        match (&self.0, &other.0) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.value == b.value && a.left == b.left && a.right == b.right
            }
            _ => false,
        }
    }
}

impl<V: Eq> Eq for PTrie<V> {}

impl<V: std::fmt::Debug> std::fmt::Debug for PTrie<V> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.bindings()).finish()
    }
}

impl<V: Clone> FromIterator<(u32, V)> for PTrie<V> {
    fn from_iter<I: IntoIterator<Item = (u32, V)>>(iter: I) -> Self {
        let mut t = PTrie::empty();
        for (k, v) in iter {
            t = t.set(k, v);
        }
        t
    }
}
