//! Symbolic-execution translation validation for straight-line blocks.
//!
//! Executing a block over symbolic inputs expresses every register as a
//! term over the initial register values. Terms are hash-consed into a
//! [`TermArena`], so they form a DAG — a chain like `a1 := op(a0, a0);
//! ...; an := op(a(n-1), a(n-1))` stays linear in memory even though its
//! tree expansion is exponential — and term equality is handle equality.
//!
//! The smart constructor [`TermArena::mk`] normalizes at the root with a
//! fixed rewrite set: constant folding for add/sub/mul (never div, whose
//! divisor could be zero), neutral elements (`x+0`, `x*1`), absorption
//! (`x*0`), `x-x`, reassociation of constant addends `(x+c1)+c2`, and
//! commutative operand ordering for add/mul by ascending handle id with
//! constants last. Since every term is built through `mk`, interned terms
//! are always in normal form.
//!
//! [`validate`] accepts a source/target pair only if every live-out
//! register maps to the same handle in both and the target's potential
//! traps are included in the source's. The guarantee is one-sided:
//! acceptance implies equivalence on live registers, while a rejection may
//! be conservative.

use crate::intern::{Arena, ArenaStats, Handle, NodeShape};
use crate::ir::text::{parse_block_file, ParseError};
use crate::ir::{BinOp, Instr, Loc, Reg};
use crate::ptrie::PTrie;
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use std::collections::BTreeSet;
use std::fmt;

/// Shape of a symbolic term.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum TermShape {
    /// The initial value of a register.
    Input(Reg),
    Const(BigInt),
    App(BinOp, Handle, Handle),
}

impl NodeShape for TermShape {
    fn for_each_child(&self, f: &mut dyn FnMut(Handle)) {
        if let TermShape::App(_, a, b) = self {
            f(*a);
            f(*b);
        }
    }
}

/// Arena for symbolic terms. The underlying store is private: terms can
/// only be built through the normalizing constructors, which is what keeps
/// every interned term in rewrite normal form.
pub struct TermArena {
    arena: Arena<TermShape>,
}

impl TermArena {
    pub fn new() -> Self {
        TermArena { arena: Arena::new() }
    }

    pub fn len(&self) -> usize {
        self.arena.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arena.is_empty()
    }

    pub fn stats(&self) -> &ArenaStats {
        self.arena.stats()
    }

    pub fn shape(&self, h: Handle) -> &TermShape {
        self.arena.get(h)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Handle, &TermShape)> {
        self.arena.iter()
    }

    pub fn mk_input(&mut self, r: Reg) -> Handle {
        self.arena.intern(TermShape::Input(r))
    }

    pub fn mk_const(&mut self, c: BigInt) -> Handle {
        self.arena.intern(TermShape::Const(c))
    }

    fn const_of(&self, h: Handle) -> Option<&BigInt> {
        match self.arena.get(h) {
            TermShape::Const(c) => Some(c),
            _ => None,
        }
    }

    fn is_const(&self, h: Handle, v: i64) -> bool {
        self.const_of(h).is_some_and(|c| *c == BigInt::from(v))
    }

    /// Commutative operand order: constants last, otherwise ascending id.
    fn order_comm(&self, a: Handle, b: Handle) -> (Handle, Handle) {
        let key = |h: Handle| (self.const_of(h).is_some(), h.id());
        if key(a) <= key(b) {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Normalizing constructor: returns the interned normal form of
    /// `op(a, b)` under the fixed rewrite set, applied at the root to
    /// completion (children are already normal).
    pub fn mk(&mut self, op: BinOp, a: Handle, b: Handle) -> Handle {
        match op {
            BinOp::Add => self.mk_add(a, b),
            BinOp::Sub => self.mk_sub(a, b),
            BinOp::Mul => self.mk_mul(a, b),
            // no rules for div: folding or dropping it could hide a trap
            BinOp::Div => self.arena.intern(TermShape::App(BinOp::Div, a, b)),
        }
    }

    fn mk_add(&mut self, a: Handle, b: Handle) -> Handle {
        if let (Some(x), Some(y)) = (self.const_of(a), self.const_of(b)) {
            let sum = x + y;
            return self.mk_const(sum);
        }
        if self.is_const(a, 0) {
            return b;
        }
        if self.is_const(b, 0) {
            return a;
        }
        let (x, y) = self.order_comm(a, b);
        // (u + c1) + c2 -> u + (c1 + c2); u never ends in a constant
        // addend itself, so this fires at most once
        if let Some(c2) = self.const_of(y) {
            if let TermShape::App(BinOp::Add, u, v) = *self.arena.get(x) {
                if let Some(c1) = self.const_of(v) {
                    let folded = c1 + c2;
                    let c = self.mk_const(folded);
                    return self.mk_add(u, c);
                }
            }
        }
        self.arena.intern(TermShape::App(BinOp::Add, x, y))
    }

    fn mk_sub(&mut self, a: Handle, b: Handle) -> Handle {
        if let (Some(x), Some(y)) = (self.const_of(a), self.const_of(b)) {
            let d = x - y;
            return self.mk_const(d);
        }
        if self.is_const(b, 0) {
            return a;
        }
        if a == b {
            return self.mk_const(BigInt::zero());
        }
        self.arena.intern(TermShape::App(BinOp::Sub, a, b))
    }

    fn mk_mul(&mut self, a: Handle, b: Handle) -> Handle {
        if let (Some(x), Some(y)) = (self.const_of(a), self.const_of(b)) {
            let p = x * y;
            return self.mk_const(p);
        }
        // x * 0 -> 0 is sound here because traps are recorded before
        // rewriting can erase them
        if self.is_const(a, 0) || self.is_const(b, 0) {
            return self.mk_const(BigInt::zero());
        }
        if self.is_const(a, 1) {
            return b;
        }
        if self.is_const(b, 1) {
            return a;
        }
        let (x, y) = self.order_comm(a, b);
        self.arena.intern(TermShape::App(BinOp::Mul, x, y))
    }

    /// Evaluates a term under a valuation of the inputs. `Err(())` is a
    /// division by zero.
    pub fn eval(&self, h: Handle, env: &dyn Fn(Reg) -> BigInt) -> Result<BigInt, ()> {
        match self.arena.get(h) {
            TermShape::Input(r) => Ok(env(*r)),
            TermShape::Const(c) => Ok(c.clone()),
            TermShape::App(op, a, b) => {
                let x = self.eval(*a, env)?;
                let y = self.eval(*b, env)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y.is_zero() {
                            Err(())
                        } else {
                            Ok(x / y)
                        }
                    }
                }
            }
        }
    }

    /// Size of the tree a term would expand to, computed arithmetically
    /// per handle — the tree itself is never materialized.
    pub fn tree_size(&self, h: Handle) -> BigUint {
        let mut sizes: Vec<BigUint> = Vec::with_capacity(h.index() + 1);
        for i in 0..=h.index() {
            let s = match self.arena.get(Handle::from_index(i)) {
                TermShape::Input(_) | TermShape::Const(_) => BigUint::one(),
                TermShape::App(_, a, b) => {
                    BigUint::one() + &sizes[a.index()] + &sizes[b.index()]
                }
            };
            sizes.push(s);
        }
        sizes.pop().expect("at least one size computed")
    }

    /// Human-readable rendering.
    pub fn render(&self, h: Handle) -> String {
        match self.arena.get(h) {
            TermShape::Input(r) => format!("{}@in", r),
            TermShape::Const(c) => c.to_string(),
            TermShape::App(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                format!("({} {} {})", self.render(*a), sym, self.render(*b))
            }
        }
    }
}

impl Default for TermArena {
    fn default() -> Self {
        Self::new()
    }
}

/// Arena size and the largest tree expansion among interned terms.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DagStats {
    pub nodes: usize,
    pub would_be_tree_size: BigUint,
}

pub fn dag_stats(arena: &TermArena) -> DagStats {
    let mut max = BigUint::zero();
    if !arena.is_empty() {
        // sizes in one pass; children always precede parents
        let mut sizes: Vec<BigUint> = Vec::with_capacity(arena.len());
        for (_, shape) in arena.iter() {
            let s = match shape {
                TermShape::Input(_) | TermShape::Const(_) => BigUint::one(),
                TermShape::App(_, a, b) => BigUint::one() + &sizes[a.index()] + &sizes[b.index()],
            };
            if s > max {
                max = s.clone();
            }
            sizes.push(s);
        }
    }
    DagStats { nodes: arena.len(), would_be_tree_size: max }
}

/// Final symbolic state of a block: a term per register, plus the handles
/// of every potentially-trapping application, recorded at execution time
/// (before any rewrite could erase them).
#[derive(Clone, Debug)]
pub struct SymState {
    pub regs: PTrie<Handle>,
    pub traps: BTreeSet<Handle>,
}

impl SymState {
    pub fn term_of(&self, r: Reg) -> Option<Handle> {
        self.regs.get(r.key()).copied()
    }
}

/// Contract violations of the symbolic executor.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SymError {
    ReadBeforeWrite { reg: Reg, index: usize },
    NotStraightLine { index: usize },
}

impl fmt::Display for SymError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymError::ReadBeforeWrite { reg, index } => {
                write!(f, "instruction {} reads {} before any write", index, reg)
            }
            SymError::NotStraightLine { index } => {
                write!(f, "instruction {} is a branch or return; blocks are straight-line", index)
            }
        }
    }
}

impl std::error::Error for SymError {}

/// Runs a straight-line block over symbolic inputs.
pub fn sym_exec(
    instrs: &[Instr],
    inputs: &[Reg],
    arena: &mut TermArena,
) -> Result<SymState, SymError> {
    let mut regs: PTrie<Handle> = PTrie::empty();
    for &r in inputs {
        let h = arena.mk_input(r);
        regs = regs.set(r.key(), h);
    }
    let mut traps: BTreeSet<Handle> = BTreeSet::new();
    for (index, instr) in instrs.iter().enumerate() {
        let cur = |regs: &PTrie<Handle>, r: Reg| -> Result<Handle, SymError> {
            regs.get(r.key())
                .copied()
                .ok_or(SymError::ReadBeforeWrite { reg: r, index })
        };
        match instr {
            Instr::Nop { .. } => {}
            Instr::Const { dst, value, .. } => {
                let h = arena.mk_const(value.clone());
                regs = regs.set(dst.key(), h);
            }
            Instr::Move { dst, src, .. } => {
                let h = cur(&regs, *src)?;
                regs = regs.set(dst.key(), h);
            }
            Instr::Op { dst, op, src1, src2, .. } => {
                let a = cur(&regs, *src1)?;
                let b = cur(&regs, *src2)?;
                let h = arena.mk(*op, a, b);
                if *op == BinOp::Div {
                    // div has no root rewrites, so h is the application
                    // itself; record it while it is still visible
                    traps.insert(h);
                }
                regs = regs.set(dst.key(), h);
            }
            Instr::Branch { .. } | Instr::Return { .. } => {
                return Err(SymError::NotStraightLine { index });
            }
        }
    }
    Ok(SymState { regs, traps })
}

/// A straight-line block: declared inputs and instructions in execution
/// order.
#[derive(Clone, PartialEq, Debug)]
pub struct Block {
    pub name: String,
    pub inputs: Vec<Reg>,
    pub instrs: Vec<Instr>,
}

/// Parses a block file: a function whose locations form a single chain of
/// non-branching instructions (the last successor is the block exit),
/// followed by a `live:` line naming the live-out registers.
pub fn parse_block(src: &str) -> Result<(Block, BTreeSet<Reg>), ParseError> {
    let (name, params, entry, raw, live) = parse_block_file(src)?;
    let err = |line: u32, col: u32, msg: String| ParseError { line, col, msg };
    let mut items = raw;
    items.sort_by_key(|(at, _, _, _)| *at);
    for w in items.windows(2) {
        if w[0].0 == w[1].0 {
            let (at, _, line, col) = w[1];
            return Err(err(line, col, format!("duplicate location {}", at)));
        }
    }
    let Some(&(first, _, _, _)) = items.first() else {
        return Err(err(1, 1, "a block needs at least one instruction".into()));
    };
    if entry != first {
        return Err(err(1, 1, format!("entry {} is not the first location {}", entry, first)));
    }
    let locations: BTreeSet<Loc> = items.iter().map(|&(at, _, _, _)| at).collect();
    let mut instrs = Vec::with_capacity(items.len());
    for (i, (at, instr, line, col)) in items.iter().enumerate() {
        match instr {
            Instr::Branch { .. } | Instr::Return { .. } => {
                return Err(err(*line, *col, "blocks are straight-line: no branches or returns".into()));
            }
            _ => {}
        }
        let succ = instr.successors()[0];
        match items.get(i + 1) {
            Some(&(next, _, _, _)) => {
                if succ != next {
                    return Err(err(
                        *line,
                        *col,
                        format!("location {} must fall through to {}, not {}", at, next, succ),
                    ));
                }
            }
            None => {
                // the final successor is the block exit and must leave the block
                if locations.contains(&succ) {
                    return Err(err(
                        *line,
                        *col,
                        format!("final successor {} re-enters the block", succ),
                    ));
                }
            }
        }
        instrs.push(instr.clone());
    }
    Ok((Block { name, inputs: params, instrs }, live.into_iter().collect()))
}

/// Validation verdict. `Equivalent` is claimed only through handle
/// equality of every live-out term plus trap-set inclusion.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Verdict {
    Equivalent,
    Rejected(RejectReason),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RejectReason {
    /// The two blocks declare different input registers.
    InputMismatch,
    /// A live-out register maps to different terms (or is undefined on one
    /// side).
    LiveRegMismatch { reg: Reg, src: Option<Handle>, tgt: Option<Handle> },
    /// The target may trap where the source cannot.
    TrapNotCovered { term: Handle },
}

/// Outcome of a validation run, with the arena and both final states for
/// reporting.
pub struct Validation {
    pub verdict: Verdict,
    pub arena: TermArena,
    pub src: SymState,
    pub tgt: SymState,
}

/// Compares two blocks on the live-out registers. Both are executed in one
/// arena so that handle equality spans them.
pub fn validate(
    src: &Block,
    tgt: &Block,
    live_out: &BTreeSet<Reg>,
) -> Result<Validation, SymError> {
    let mut arena = TermArena::new();
    let src_state = sym_exec(&src.instrs, &src.inputs, &mut arena)?;
    let tgt_state = sym_exec(&tgt.instrs, &tgt.inputs, &mut arena)?;
    let verdict = (|| {
        if src.inputs != tgt.inputs {
            return Verdict::Rejected(RejectReason::InputMismatch);
        }
        for &r in live_out {
            let s = src_state.term_of(r);
            let t = tgt_state.term_of(r);
            if s.is_none() || s != t {
                return Verdict::Rejected(RejectReason::LiveRegMismatch { reg: r, src: s, tgt: t });
            }
        }
        for &h in &tgt_state.traps {
            if !src_state.traps.contains(&h) {
                return Verdict::Rejected(RejectReason::TrapNotCovered { term: h });
            }
        }
        Verdict::Equivalent
    })();
    Ok(Validation { verdict, arena, src: src_state, tgt: tgt_state })
}
