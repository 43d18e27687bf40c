//! Dataflow-facts engine: dynamic fact interning, kill tables,
//! intersection join, inductiveness re-checking and CSE application.
//!
//! A fact `i` states that register `dst` currently holds `op(src1, src2)`
//! of the current values of its sources. Facts are interned on first use —
//! the universe grows during solving — and the kill table maps each
//! register to the set of fact indices invalidated by writing it.
//!
//! The checker never trusts tables it did not build: [`fact_check`]
//! rebuilds the kill table from the plain fact list before re-running the
//! inductiveness check, so a tampered auxiliary table in an input file
//! cannot influence the result.

use super::{check_inductive, kildall, Domain, Invariant, SolveFailure, Violation};
use crate::hset::{HSet, HSetArena};
use crate::ir::{widening_points, BinOp, Function, Instr, Loc, Reg};
use crate::ptrie::PTrie;
use std::collections::HashMap;
use std::fmt;

/// An elementary dataflow fact: `dst = op(src1, src2)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Fact {
    pub dst: Reg,
    pub op: BinOp,
    pub src1: Reg,
    pub src2: Reg,
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} {} {}", self.dst, self.op.name(), self.src1, self.src2)
    }
}

/// Fact indices are dense and start at 1 (so they double as set members).
pub type FactIdx = u32;

/// The fact universe: index <-> fact, plus the kill sets.
#[derive(Debug)]
pub struct FactTable {
    facts: Vec<Fact>,
    index_of: HashMap<Fact, FactIdx>,
    kill: HashMap<Reg, HSet>,
}

impl FactTable {
    pub fn new() -> Self {
        FactTable { facts: Vec::new(), index_of: HashMap::new(), kill: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// The facts in index order (index `i` is `facts()[i - 1]`).
    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, idx: FactIdx) -> Fact {
        self.facts[idx as usize - 1]
    }

    pub fn index_of(&self, fact: &Fact) -> Option<FactIdx> {
        self.index_of.get(fact).copied()
    }

    /// Stable index for a fact, interning it on first use and extending
    /// the kill sets of every register it mentions.
    pub fn intern(&mut self, sets: &mut HSetArena, fact: Fact) -> FactIdx {
        if let Some(&i) = self.index_of.get(&fact) {
            return i;
        }
        self.facts.push(fact);
        let idx = self.facts.len() as FactIdx;
        self.index_of.insert(fact, idx);
        for r in [fact.dst, fact.src1, fact.src2] {
            let cur = self.kill_set(sets, r);
            let next = sets.add(cur, idx);
            self.kill.insert(r, next);
        }
        idx
    }

    /// Facts invalidated by writing `r`.
    pub fn kill_set(&self, sets: &HSetArena, r: Reg) -> HSet {
        self.kill.get(&r).copied().unwrap_or_else(|| sets.empty())
    }

    /// Rebuilds a table from a plain fact list, assigning indices in list
    /// order. Fails on duplicates (the index map would not be invertible).
    pub fn rebuild(facts: &[Fact], sets: &mut HSetArena) -> Result<FactTable, String> {
        let mut t = FactTable::new();
        for (i, &f) in facts.iter().enumerate() {
            let idx = t.intern(sets, f);
            if idx as usize != i + 1 {
                return Err(format!("fact {} (index {}) duplicates index {}", f, i + 1, idx));
            }
        }
        Ok(t)
    }
}

impl Default for FactTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-location state of the facts analysis.
///
/// `Unreached` is the neutral element of the join; reached locations carry
/// the set of facts that hold on every path, and the join of two reached
/// states is the intersection of their fact sets.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum FactState {
    Unreached,
    Known(HSet),
}

impl FactState {
    pub fn known(self) -> Option<HSet> {
        match self {
            FactState::Unreached => None,
            FactState::Known(s) => Some(s),
        }
    }
}

/// Domain hooks for the facts analysis. Transfers intern facts on the fly,
/// so the table and arena are mutated during solving.
pub struct FactsDomain<'a> {
    pub sets: &'a mut HSetArena,
    pub table: &'a mut FactTable,
}

impl Domain for FactsDomain<'_> {
    type State = FactState;

    fn bottom(&self) -> FactState {
        FactState::Unreached
    }

    fn is_bottom(&self, s: &FactState) -> bool {
        matches!(s, FactState::Unreached)
    }

    fn join(&mut self, a: &FactState, b: &FactState) -> FactState {
        match (a, b) {
            (FactState::Unreached, s) | (s, FactState::Unreached) => *s,
            (FactState::Known(x), FactState::Known(y)) => {
                FactState::Known(self.sets.inter(*x, *y))
            }
        }
    }

    // The fact lattice has no infinite ascending chains (sets only shrink
    // under intersection), so widening is just the join.
    fn widen(&mut self, old: &FactState, new: &FactState) -> FactState {
        self.join(old, new)
    }

    fn leq(&mut self, a: &FactState, b: &FactState) -> bool {
        match (a, b) {
            (FactState::Unreached, _) => true,
            (FactState::Known(_), FactState::Unreached) => false,
            // join is intersection: higher means fewer facts
            (FactState::Known(x), FactState::Known(y)) => self.sets.subset(*y, *x),
        }
    }

    fn transfer(&mut self, instr: &Instr, s: &FactState) -> Vec<(Loc, FactState)> {
        let facts = match s {
            FactState::Unreached => return vec![],
            FactState::Known(f) => *f,
        };
        match instr {
            Instr::Nop { succ } => vec![(*succ, FactState::Known(facts))],
            Instr::Const { dst, succ, .. } | Instr::Move { dst, succ, .. } => {
                let kill = self.table.kill_set(self.sets, *dst);
                let survives = self.sets.diff(facts, kill);
                vec![(*succ, FactState::Known(survives))]
            }
            Instr::Op { dst, op, src1, src2, succ } => {
                let kill = self.table.kill_set(self.sets, *dst);
                let survives = self.sets.diff(facts, kill);
                let out = if dst != src1 && dst != src2 {
                    let idx = self.table.intern(
                        self.sets,
                        Fact { dst: *dst, op: *op, src1: *src1, src2: *src2 },
                    );
                    self.sets.add(survives, idx)
                } else {
                    // the instruction overwrites one of its own sources;
                    // the fact would be stale the moment it is created
                    survives
                };
                vec![(*succ, FactState::Known(out))]
            }
            Instr::Branch { if_true, if_false, .. } => {
                vec![(*if_true, FactState::Known(facts)), (*if_false, FactState::Known(facts))]
            }
            Instr::Return { .. } => vec![],
        }
    }
}

/// Result of a facts solve: invariant, fact universe and the arena the
/// fact sets live in.
pub struct FactSolve {
    pub invariant: Invariant<FactState>,
    pub table: FactTable,
    pub sets: HSetArena,
    pub picks: Vec<Loc>,
}

/// Runs the facts analysis. Entry carries the empty fact set; everything
/// else starts unreached.
pub fn fact_kildall(f: &Function, fuel: u64) -> Result<FactSolve, SolveFailure> {
    let mut sets = HSetArena::new();
    let mut table = FactTable::new();
    let wp = widening_points(f);
    let entry = FactState::Known(sets.empty());
    let result = {
        let mut dom = FactsDomain { sets: &mut sets, table: &mut table };
        kildall(f, &mut dom, entry, &wp, fuel)?
    };
    Ok(FactSolve { invariant: result.invariant, table, sets, picks: result.picks })
}

/// Why a fact invariant was rejected.
#[derive(Debug)]
pub enum FactCheckError {
    /// The fact list itself is malformed (duplicates, bad indices).
    BadTable(String),
    /// The invariant is not inductive.
    NotInductive(Violation<FactState>),
}

impl fmt::Display for FactCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactCheckError::BadTable(msg) => write!(f, "malformed fact table: {}", msg),
            FactCheckError::NotInductive(v) => {
                let (from, to) = v.edge();
                write!(f, "not inductive on edge {} -> {}", from, to)
            }
        }
    }
}

/// Checks an untrusted fact invariant: validates the fact list, rebuilds
/// the kill table from it, and re-runs the inductiveness check with the
/// facts transfer. Returns the rebuilt table on success.
pub fn fact_check(
    f: &Function,
    inv: &Invariant<FactState>,
    entry: FactState,
    facts: &[Fact],
    sets: &mut HSetArena,
) -> Result<FactTable, FactCheckError> {
    let mut table = FactTable::rebuild(facts, sets).map_err(FactCheckError::BadTable)?;
    // the invariant may only mention facts of the declared universe
    let n = facts.len() as u32;
    for (at, s) in inv.entries() {
        if let FactState::Known(set) = s {
            for idx in sets.elements(*set) {
                if idx == 0 || idx > n {
                    return Err(FactCheckError::BadTable(format!(
                        "state at {} mentions unknown fact index {}",
                        at, idx
                    )));
                }
            }
        }
    }
    let mut dom = FactsDomain { sets, table: &mut table };
    check_inductive(f, &mut dom, &entry, inv).map_err(FactCheckError::NotInductive)?;
    Ok(table)
}

/// Replaces each operation whose value is already held by another register
/// (per a checked fact invariant) with a move from that register. Re-runs
/// [`fact_check`] first and refuses on failure; the output interprets
/// identically to the input.
pub fn apply_cse(
    f: &Function,
    inv: &Invariant<FactState>,
    facts: &[Fact],
    sets: &mut HSetArena,
) -> Result<Function, FactCheckError> {
    let entry = FactState::Known(sets.empty());
    let table = fact_check(f, inv, entry, facts, sets)?;
    let mut code = PTrie::empty();
    for (k, instr) in f.code.bindings() {
        let at = Loc::new(k);
        let replaced = match instr {
            Instr::Op { dst, op, src1, src2, succ } => {
                let available = match inv.state(at) {
                    Some(FactState::Known(s)) => Some(*s),
                    _ => None,
                };
                let mut replacement = None;
                if let Some(set) = available {
                    for idx in sets.elements(set) {
                        let fact = table.fact(idx);
                        if fact.op == *op
                            && fact.src1 == *src1
                            && fact.src2 == *src2
                            && fact.dst != *dst
                        {
                            replacement = Some(Instr::Move { dst: *dst, src: fact.dst, succ: *succ });
                            break;
                        }
                    }
                }
                replacement
            }
            _ => None,
        };
        code = code.set(k, replaced.unwrap_or_else(|| instr.clone()));
    }
    Ok(Function { name: f.name.clone(), params: f.params.clone(), entry: f.entry, code })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{interpret, parse, renumber, Outcome};
    use crate::solver::default_fuel;
    use num_bigint::BigInt;

    fn reg(k: u32) -> Reg {
        Reg::new(k)
    }

    fn fact(dst: u32, op: BinOp, a: u32, b: u32) -> Fact {
        Fact { dst: reg(dst), op, src1: reg(a), src2: reg(b) }
    }

    #[test]
    fn interning_is_stable_and_dense() {
        let mut sets = HSetArena::new();
        let mut t = FactTable::new();
        let i1 = t.intern(&mut sets, fact(3, BinOp::Add, 1, 2));
        let i2 = t.intern(&mut sets, fact(3, BinOp::Add, 1, 2));
        let i3 = t.intern(&mut sets, fact(4, BinOp::Sub, 1, 2));
        assert_eq!(i1, 1);
        assert_eq!(i2, 1);
        assert_eq!(i3, 2);
    }

    #[test]
    fn kill_sets_cover_every_mention() {
        let mut sets = HSetArena::new();
        let mut t = FactTable::new();
        t.intern(&mut sets, fact(3, BinOp::Add, 1, 2));
        t.intern(&mut sets, fact(4, BinOp::Mul, 1, 1));
        t.intern(&mut sets, fact(5, BinOp::Sub, 4, 2));
        // every fact mentioning r1 is killed by writing r1
        let k1 = t.kill_set(&sets, reg(1));
        assert_eq!(sets.elements(k1), vec![1, 2]);
        // rebuild from the fact list and compare kill sets
        let mut sets2 = HSetArena::new();
        let t2 = FactTable::rebuild(t.facts(), &mut sets2).unwrap();
        for r in 1..=5 {
            assert_eq!(
                sets.elements(t.kill_set(&sets, reg(r))),
                sets2.elements(t2.kill_set(&sets2, reg(r)))
            );
        }
    }

    #[test]
    fn rebuild_rejects_duplicates() {
        let mut sets = HSetArena::new();
        let fs = [fact(3, BinOp::Add, 1, 2), fact(3, BinOp::Add, 1, 2)];
        assert!(FactTable::rebuild(&fs, &mut sets).is_err());
    }

    fn solve(src: &str) -> (Function, FactSolve) {
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let s = fact_kildall(&f, default_fuel(&f)).unwrap();
        (f, s)
    }

    #[test]
    fn straight_line_facts_accumulate_and_die() {
        let (f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: r3 := add r1 r2 -> 2
                2: r1 := 0 -> 3
                3: return r3
            }",
        );
        // after the add (renumbered 3 -> 2): the fact holds
        let at2 = s.invariant.state(Loc::new(2)).unwrap().known().unwrap();
        assert_eq!(s.sets.elements(at2), vec![1]);
        assert_eq!(s.table.fact(1), fact(3, BinOp::Add, 1, 2));
        // writing r1 kills it at the return
        let at1 = s.invariant.state(Loc::new(1)).unwrap().known().unwrap();
        assert_eq!(s.sets.elements(at1), Vec::<u32>::new());
        // the engine's own output passes the independent re-check
        let mut sets = HSetArena::new();
        let reinterned = reintern(&f, &s, &mut sets);
        let entry = FactState::Known(sets.empty());
        assert!(fact_check(&f, &reinterned, entry, s.table.facts(), &mut sets).is_ok());
    }

    /// Re-expresses an invariant's sets in a fresh arena, as a file load
    /// would.
    fn reintern(f: &Function, s: &FactSolve, sets: &mut HSetArena) -> Invariant<FactState> {
        let mut inv = Invariant::new(PTrie::empty());
        for l in f.locations() {
            let st = match s.invariant.state(l).unwrap() {
                FactState::Unreached => FactState::Unreached,
                FactState::Known(set) => {
                    let mut fresh = sets.empty();
                    for m in s.sets.elements(*set) {
                        fresh = sets.add(fresh, m);
                    }
                    FactState::Known(fresh)
                }
            };
            inv = inv.set(l, st);
        }
        inv
    }

    #[test]
    fn diamond_keeps_common_facts_only() {
        let (_f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: if lt r1 r2 -> 2, 3
                2: r3 := add r1 r2 -> 4
                3: r3 := add r1 r2 -> 4
                4: r4 := mul r2 r2 -> 5
                5: return r3
            }",
        );
        // both branches establish r3 = add r1 r2; the merge keeps it
        let add_idx = s.table.index_of(&fact(3, BinOp::Add, 1, 2)).unwrap();
        let merge = Loc::new(2); // renumbered: 4 -> 2
        let at_merge = s.invariant.state(merge).unwrap().known().unwrap();
        assert!(s.sets.elements(at_merge).contains(&add_idx));
    }

    #[test]
    fn loop_invariant_fact_survives_the_head_killed_facts_do_not() {
        let (f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: r3 := 0 -> 2
                2: r4 := add r1 r2 -> 3
                3: if lt r3 r1 -> 4, 6
                4: r5 := add r3 r2 -> 5
                5: r3 := add r3 r3 -> 3
                6: return r4
            }",
        );
        let head = crate::ir::widening_points(&f).into_iter().next().unwrap();
        let at_head = s.invariant.state(head).unwrap().known().unwrap();
        // r4 = add r1 r2 with r1, r2 loop-constant: alive at the head
        let idx = s.table.index_of(&fact(4, BinOp::Add, 1, 2)).unwrap();
        assert!(s.sets.elements(at_head).contains(&idx));
        // r5 = add r3 r2 is established in the body but killed by the
        // write to r3 before the back edge
        let idx5 = s.table.index_of(&fact(5, BinOp::Add, 3, 2)).unwrap();
        assert!(!s.sets.elements(at_head).contains(&idx5));
    }

    #[test]
    fn tampered_invariant_is_rejected() {
        let (f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: if lt r1 r2 -> 2, 3
                2: r3 := add r1 r2 -> 4
                3: nop -> 4
                4: return r3
            }",
        );
        // claim the add fact at the merge even though one branch lacks it
        let idx = s.table.index_of(&fact(3, BinOp::Add, 1, 2)).unwrap();
        let merge = Loc::new(2);
        let mut sets = HSetArena::new();
        let mut inv = reintern(&f, &s, &mut sets);
        let spurious = {
            let cur = inv.state(merge).unwrap().known().unwrap();
            FactState::Known(sets.add(cur, idx))
        };
        inv = inv.set(merge, spurious);
        let entry = FactState::Known(sets.empty());
        let err = fact_check(&f, &inv, entry, s.table.facts(), &mut sets).unwrap_err();
        assert!(matches!(err, FactCheckError::NotInductive(_)), "{}", err);
    }

    #[test]
    fn cse_rewrites_the_second_add_into_a_move() {
        let (f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: r3 := add r1 r2 -> 2
                2: r4 := add r1 r2 -> 3
                3: return r4
            }",
        );
        let mut sets = HSetArena::new();
        let inv = reintern(&f, &s, &mut sets);
        let g = apply_cse(&f, &inv, s.table.facts(), &mut sets).unwrap();
        // the later add becomes a move from r3 (renumbered: 2 -> 2)
        let rewritten = g.instr(Loc::new(2)).unwrap();
        assert_eq!(
            rewritten,
            &Instr::Move { dst: reg(4), src: reg(3), succ: Loc::new(1) }
        );
        // and both versions interpret identically
        for (a, b) in [(3i64, 4i64), (0, 0), (-7, 9)] {
            let inputs = [BigInt::from(a), BigInt::from(b)];
            assert_eq!(
                interpret(&f, &inputs, 1000).unwrap(),
                interpret(&g, &inputs, 1000).unwrap()
            );
        }
    }

    #[test]
    fn cse_leaves_programs_without_facts_alone() {
        let (f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: r3 := add r1 r2 -> 2
                2: return r3
            }",
        );
        let mut sets = HSetArena::new();
        let inv = reintern(&f, &s, &mut sets);
        let g = apply_cse(&f, &inv, s.table.facts(), &mut sets).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn cse_across_a_diamond() {
        let (f, s) = solve(
            "func f(r1, r2) entry 1 {
                1: if lt r1 r2 -> 2, 3
                2: r3 := mul r1 r2 -> 4
                3: r3 := mul r1 r2 -> 4
                4: r4 := mul r1 r2 -> 5
                5: return r4
            }",
        );
        let mut sets = HSetArena::new();
        let inv = reintern(&f, &s, &mut sets);
        let g = apply_cse(&f, &inv, s.table.facts(), &mut sets).unwrap();
        // the post-merge mul is replaced
        let merge_op = Loc::new(2);
        assert!(matches!(g.instr(merge_op).unwrap(), Instr::Move { .. }));
        for (a, b) in [(3i64, 4i64), (5, -2), (0, 0)] {
            let inputs = [BigInt::from(a), BigInt::from(b)];
            let fa = interpret(&f, &inputs, 1000).unwrap();
            let ga = interpret(&g, &inputs, 1000).unwrap();
            assert_eq!(fa, ga);
            assert!(matches!(fa, Outcome::Returned(_)));
        }
    }
}
