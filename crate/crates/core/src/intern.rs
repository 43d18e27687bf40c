//! Hash-consing arena.
//!
//! An [`Arena`] is the single factory for nodes of an interned type: every
//! construction goes through [`Arena::intern`], which returns the existing
//! handle when an equal shape was interned before. Within one arena, handle
//! equality therefore coincides with structural equality of the denoted
//! values, in both directions — the O(1) negative answer is justified by
//! the trusted-constructor discipline, not by an axiom. Wrapper types
//! ([`crate::hset`], [`crate::symexec`]) keep their arena private so no
//! node of theirs can be built any other way.
//!
//! Arenas are phase-local: one per analysis phase, discarded at the end,
//! which also discards the memo tables. There is no weak table and no
//! reclamation of individual nodes.
//!
//! Shapes are hashed with a fixed mixing function (FNV-1a with a final
//! splitmix64-style avalanche); collisions land in a bucket and are
//! resolved by full shape comparison, so correctness never depends on hash
//! quality.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hash, Hasher};

/// Index of an interned node, valid only within its issuing arena.
///
/// Handles are dense and issued in creation order; the children of a node
/// always carry strictly smaller handles (the store is acyclic).
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Handle(u32);

impl Handle {
    pub fn id(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_index(i: usize) -> Handle {
        Handle(u32::try_from(i).expect("arena overflow"))
    }
}

impl std::fmt::Debug for Handle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Node shapes that can be interned: hashable, comparable, and able to
/// enumerate their child handles for validation.
pub trait NodeShape: Clone + Eq + Hash {
    fn for_each_child(&self, f: &mut dyn FnMut(Handle));
}

/// Hit/miss counters for the intern table and the memo table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArenaStats {
    pub hits: u64,
    pub misses: u64,
    pub memo_hits: u64,
    pub memo_misses: u64,
}

/// FNV-1a over the input bytes, avalanched on finish. Deterministic across
/// runs and platforms.
pub struct FixedHasher(u64);

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Default for FixedHasher {
    fn default() -> Self {
        FixedHasher(FNV_OFFSET)
    }
}

impl Hasher for FixedHasher {
    fn write(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.0 = h;
    }

    fn finish(&self) -> u64 {
        // splitmix64 finalizer
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

type FixedState = BuildHasherDefault<FixedHasher>;

/// Interning arena for shapes `S`, with a memo table from
/// `(op tag, handle, handle)` to `M`.
pub struct Arena<S, M = ()> {
    shapes: Vec<S>,
    buckets: HashMap<u64, Vec<Handle>, FixedState>,
    memo: HashMap<(u8, Handle, Handle), M, FixedState>,
    stats: ArenaStats,
}

impl<S: NodeShape, M> Arena<S, M> {
    pub fn new() -> Self {
        Arena {
            shapes: Vec::new(),
            buckets: HashMap::default(),
            memo: HashMap::default(),
            stats: ArenaStats::default(),
        }
    }

    /// Number of distinct nodes interned so far.
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// Drops all nodes and memo entries; handle ids start over from 0.
    pub fn reset(&mut self) {
        self.shapes.clear();
        self.buckets.clear();
        self.memo.clear();
        self.stats = ArenaStats::default();
    }

    fn hash_shape(shape: &S) -> u64 {
        let mut h = FixedHasher::default();
        shape.hash(&mut h);
        h.finish()
    }

    /// Returns the handle for `shape`, interning it if new. Idempotent:
    /// equal shapes always yield the same handle. Child handles must have
    /// been issued by this arena.
    pub fn intern(&mut self, shape: S) -> Handle {
        let len = self.shapes.len();
        shape.for_each_child(&mut |c: Handle| {
            assert!(
                c.index() < len,
                "child handle {:?} was not issued by this arena",
                c
            );
        });
        let hash = Self::hash_shape(&shape);
        let bucket = self.buckets.entry(hash).or_default();
        for &h in bucket.iter() {
            if self.shapes[h.index()] == shape {
                self.stats.hits += 1;
                return h;
            }
        }
        let h = Handle(u32::try_from(len).expect("arena overflow"));
        bucket.push(h);
        self.shapes.push(shape);
        self.stats.misses += 1;
        h
    }

    /// The shape denoted by `h`.
    pub fn get(&self, h: Handle) -> &S {
        assert!(h.index() < self.shapes.len(), "foreign handle {:?}", h);
        &self.shapes[h.index()]
    }

    pub fn contains(&self, h: Handle) -> bool {
        h.index() < self.shapes.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Handle, &S)> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (Handle(i as u32), s))
    }

    pub fn memo_lookup(&mut self, tag: u8, a: Handle, b: Handle) -> Option<&M> {
        let r = self.memo.get(&(tag, a, b));
        if r.is_some() {
            self.stats.memo_hits += 1;
        } else {
            self.stats.memo_misses += 1;
        }
        r
    }

    pub fn memo_store(&mut self, tag: u8, a: Handle, b: Handle, value: M) {
        self.memo.insert((tag, a, b), value);
    }

    pub fn stats(&self) -> &ArenaStats {
        &self.stats
    }

    /// Full-store scan of the arena invariants: all shapes pairwise
    /// distinct and every child id smaller than its parent's.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen: HashMap<&S, Handle, FixedState> = HashMap::default();
        for (i, s) in self.shapes.iter().enumerate() {
            if let Some(prev) = seen.insert(s, Handle(i as u32)) {
                return Err(format!("shapes {:?} and #{} are equal", prev, i));
            }
            let mut bad = None;
            s.for_each_child(&mut |c: Handle| {
                if c.index() >= i && bad.is_none() {
                    bad = Some(c);
                }
            });
            if let Some(c) = bad {
                return Err(format!("node #{} has non-prior child {:?}", i, c));
            }
        }
        Ok(())
    }
}

impl<S: NodeShape, M> Default for Arena<S, M> {
    fn default() -> Self {
        Self::new()
    }
}
