//! Interval abstract domain over unbounded integers.
//!
//! An abstract state is either `Bottom` (unreachable) or an environment
//! mapping registers to intervals through a [`PTrie`]. A register absent
//! from the environment means "any value": the full interval is never
//! stored explicitly, which keeps environments small and canonical, and
//! makes function entry (arbitrary values everywhere) the empty trie.
//!
//! Transfer functions produce one abstract state per successor; branch
//! conditions refine the operand intervals on each outgoing edge, and an
//! edge whose refinement is empty is dropped as infeasible.

use crate::ir::{BinOp, Cmp, Instr, Loc, Reg};
use crate::ptrie::{PTrie, ShareStats};
use crate::solver::Domain;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// An interval endpoint.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Bound {
    NegInf,
    Int(BigInt),
    PosInf,
}

impl Bound {
    pub fn int(n: i64) -> Bound {
        Bound::Int(BigInt::from(n))
    }

    fn add(&self, other: &Bound) -> Bound {
        use Bound::*;
        match (self, other) {
            (Int(a), Int(b)) => Int(a + b),
            (NegInf, PosInf) | (PosInf, NegInf) => {
                unreachable!("adding opposite infinities")
            }
            (NegInf, _) | (_, NegInf) => NegInf,
            (PosInf, _) | (_, PosInf) => PosInf,
        }
    }

    fn neg(&self) -> Bound {
        match self {
            Bound::NegInf => Bound::PosInf,
            Bound::PosInf => Bound::NegInf,
            Bound::Int(a) => Bound::Int(-a),
        }
    }

    fn sub(&self, other: &Bound) -> Bound {
        self.add(&other.neg())
    }

    /// Corner product with the 0 * inf = 0 convention, which is sound for
    /// corner products of valid intervals.
    fn mul(&self, other: &Bound) -> Bound {
        use Bound::*;
        match (self, other) {
            (Int(a), Int(b)) => Int(a * b),
            (Int(a), inf) | (inf, Int(a)) => {
                if a.is_zero() {
                    Int(BigInt::zero())
                } else if a.is_positive() == (*inf == PosInf) {
                    PosInf
                } else {
                    NegInf
                }
            }
            (NegInf, NegInf) | (PosInf, PosInf) => PosInf,
            (NegInf, PosInf) | (PosInf, NegInf) => NegInf,
        }
    }

    fn pred(&self) -> Bound {
        match self {
            Bound::Int(a) => Bound::Int(a - 1),
            inf => inf.clone(),
        }
    }

    fn succ(&self) -> Bound {
        match self {
            Bound::Int(a) => Bound::Int(a + 1),
            inf => inf.clone(),
        }
    }
}

/// A nonempty integer interval. Emptiness is represented by
/// [`AbsState::Bottom`], never by a crossed pair of bounds.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Interval {
    lo: Bound,
    hi: Bound,
}

impl Interval {
    pub fn new(lo: Bound, hi: Bound) -> Interval {
        assert!(lo != Bound::PosInf && hi != Bound::NegInf && lo <= hi, "empty interval");
        Interval { lo, hi }
    }

    pub fn full() -> Interval {
        Interval { lo: Bound::NegInf, hi: Bound::PosInf }
    }

    pub fn singleton(n: BigInt) -> Interval {
        Interval { lo: Bound::Int(n.clone()), hi: Bound::Int(n) }
    }

    pub fn of_i64(lo: i64, hi: i64) -> Interval {
        Interval::new(Bound::int(lo), Bound::int(hi))
    }

    pub fn lo(&self) -> &Bound {
        &self.lo
    }

    pub fn hi(&self) -> &Bound {
        &self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == Bound::NegInf && self.hi == Bound::PosInf
    }

    pub fn contains(&self, v: &BigInt) -> bool {
        let vb = Bound::Int(v.clone());
        self.lo <= vb && vb <= self.hi
    }

    pub fn as_singleton(&self) -> Option<&BigInt> {
        match (&self.lo, &self.hi) {
            (Bound::Int(a), Bound::Int(b)) if a == b => Some(a),
            _ => None,
        }
    }

    /// Least upper bound.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.clone().min(other.lo.clone()),
            hi: self.hi.clone().max(other.hi.clone()),
        }
    }

    /// Intersection; `None` when empty.
    pub fn meet(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.clone().max(other.lo.clone());
        let hi = self.hi.clone().min(other.hi.clone());
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    /// Keeps stable bounds, drops unstable ones to infinity.
    pub fn widen(&self, newer: &Interval) -> Interval {
        Interval {
            lo: if newer.lo < self.lo { Bound::NegInf } else { self.lo.clone() },
            hi: if newer.hi > self.hi { Bound::PosInf } else { self.hi.clone() },
        }
    }

    /// Containment order.
    pub fn leq(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.lo {
            Bound::NegInf => write!(f, "[-inf, ")?,
            Bound::Int(a) => write!(f, "[{}, ", a)?,
            Bound::PosInf => unreachable!(),
        }
        match &self.hi {
            Bound::PosInf => write!(f, "+inf]"),
            Bound::Int(b) => write!(f, "{}]", b),
            Bound::NegInf => unreachable!(),
        }
    }
}

/// Sound forward transfer for a binary operation: every concrete result of
/// `op` on points of the operand intervals lies in the result. Add and sub
/// are exact; mul is the hull of the corner products; div falls back to
/// the full interval unless the divisor excludes zero and all bounds are
/// finite, in which case it is the hull of the truncated corner quotients.
pub fn fwd_op(op: BinOp, a: &Interval, b: &Interval) -> Interval {
    match op {
        BinOp::Add => Interval::new(a.lo.add(&b.lo), a.hi.add(&b.hi)),
        BinOp::Sub => Interval::new(a.lo.sub(&b.hi), a.hi.sub(&b.lo)),
        BinOp::Mul => {
            let corners = [
                a.lo.mul(&b.lo),
                a.lo.mul(&b.hi),
                a.hi.mul(&b.lo),
                a.hi.mul(&b.hi),
            ];
            let lo = corners.iter().min().expect("nonempty").clone();
            let hi = corners.iter().max().expect("nonempty").clone();
            Interval::new(lo, hi)
        }
        BinOp::Div => {
            let zero = Bound::Int(BigInt::zero());
            let excludes_zero = b.lo > zero || b.hi < zero;
            match (&a.lo, &a.hi, &b.lo, &b.hi) {
                (Bound::Int(al), Bound::Int(ah), Bound::Int(bl), Bound::Int(bh))
                    if excludes_zero =>
                {
                    let corners = [al / bl, al / bh, ah / bl, ah / bh];
                    let lo = corners.iter().min().expect("nonempty").clone();
                    let hi = corners.iter().max().expect("nonempty").clone();
                    Interval::new(Bound::Int(lo), Bound::Int(hi))
                }
                _ => Interval::full(),
            }
        }
    }
}

fn negate(cmp: Cmp) -> Cmp {
    match cmp {
        Cmp::Eq => Cmp::Ne,
        Cmp::Ne => Cmp::Eq,
        Cmp::Lt => Cmp::Ge,
        Cmp::Le => Cmp::Gt,
        Cmp::Gt => Cmp::Le,
        Cmp::Ge => Cmp::Lt,
    }
}

/// Drops `c` from `i` when `c` sits on an endpoint; `None` when `i` was
/// exactly `{c}`.
fn exclude(i: &Interval, c: &BigInt) -> Option<Interval> {
    if i.as_singleton() == Some(c) {
        return None;
    }
    let cb = Bound::Int(c.clone());
    if i.lo == cb {
        Some(Interval::new(i.lo.succ(), i.hi.clone()))
    } else if i.hi == cb {
        Some(Interval::new(i.lo.clone(), i.hi.pred()))
    } else {
        Some(i.clone())
    }
}

/// Refines both operand intervals under the assumption that `cmp` holds
/// (`taken`) or fails (`!taken`). Sound: every concrete pair satisfying the
/// assumption survives. `None` means the branch is infeasible.
pub fn refine(cmp: Cmp, taken: bool, a: &Interval, b: &Interval) -> Option<(Interval, Interval)> {
    let cmp = if taken { cmp } else { negate(cmp) };
    match cmp {
        Cmp::Eq => {
            let m = a.meet(b)?;
            Some((m.clone(), m))
        }
        Cmp::Ne => {
            if let (Some(x), Some(y)) = (a.as_singleton(), b.as_singleton()) {
                if x == y {
                    return None;
                }
            }
            let a2 = match b.as_singleton() {
                Some(c) => exclude(a, c)?,
                None => a.clone(),
            };
            let b2 = match a.as_singleton() {
                Some(c) => exclude(b, c)?,
                None => b.clone(),
            };
            Some((a2, b2))
        }
        Cmp::Lt => {
            let a2 = a.meet(&Interval::new(Bound::NegInf, b.hi.pred()))?;
            let b2 = b.meet(&Interval::new(a.lo.succ(), Bound::PosInf))?;
            Some((a2, b2))
        }
        Cmp::Le => {
            let a2 = a.meet(&Interval::new(Bound::NegInf, b.hi.clone()))?;
            let b2 = b.meet(&Interval::new(a.lo.clone(), Bound::PosInf))?;
            Some((a2, b2))
        }
        Cmp::Gt => {
            let a2 = a.meet(&Interval::new(b.lo.succ(), Bound::PosInf))?;
            let b2 = b.meet(&Interval::new(Bound::NegInf, a.hi.pred()))?;
            Some((a2, b2))
        }
        Cmp::Ge => {
            let a2 = a.meet(&Interval::new(b.lo.clone(), Bound::PosInf))?;
            let b2 = b.meet(&Interval::new(Bound::NegInf, a.hi.clone()))?;
            Some((a2, b2))
        }
    }
}

/// Abstract state: unreachable, or one interval per register with absence
/// meaning the full interval.
#[derive(Clone, PartialEq, Debug)]
pub enum AbsState {
    Bottom,
    Env(PTrie<Interval>),
}

impl AbsState {
    /// The entry state: every register may hold anything.
    pub fn top() -> AbsState {
        AbsState::Env(PTrie::empty())
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, AbsState::Bottom)
    }

    /// The interval of `r` in an environment (full when unbound). Must not
    /// be asked of `Bottom`.
    pub fn get_reg(&self, r: Reg) -> Interval {
        match self {
            AbsState::Bottom => panic!("no register values in bottom"),
            AbsState::Env(env) => env.get(r.key()).cloned().unwrap_or_else(Interval::full),
        }
    }

    /// Binds `r`, erasing the binding when the interval carries no
    /// information.
    fn set_reg(env: &PTrie<Interval>, r: Reg, i: Interval) -> PTrie<Interval> {
        if i.is_full() {
            env.remove(r.key())
        } else {
            env.set(r.key(), i)
        }
    }

    fn join_by(&self, other: &AbsState, naive: bool, stats: &mut ShareStats) -> AbsState {
        let f = |x: Option<&Interval>, y: Option<&Interval>| match (x, y) {
            (Some(i), Some(j)) => {
                let h = i.hull(j);
                if h.is_full() {
                    None
                } else {
                    Some(h)
                }
            }
            // a register unbound on either side joins to "any"
            _ => None,
        };
        match (self, other) {
            (AbsState::Bottom, s) | (s, AbsState::Bottom) => s.clone(),
            (AbsState::Env(a), AbsState::Env(b)) => AbsState::Env(if naive {
                a.combine_naive(b, f, stats)
            } else {
                a.combine_idem(b, f, stats)
            }),
        }
    }

    pub fn join(&self, other: &AbsState, stats: &mut ShareStats) -> AbsState {
        self.join_by(other, false, stats)
    }

    /// Join through the unshared baseline combine; the measurement
    /// reference for the join-cost comparison.
    pub fn join_naive(&self, other: &AbsState, stats: &mut ShareStats) -> AbsState {
        self.join_by(other, true, stats)
    }

    pub fn widen(&self, newer: &AbsState, stats: &mut ShareStats) -> AbsState {
        match (self, newer) {
            (AbsState::Bottom, s) | (s, AbsState::Bottom) => s.clone(),
            (AbsState::Env(old), AbsState::Env(new)) => {
                let widened = old.combine_idem(
                    new,
                    |x, y| match (x, y) {
                        (Some(o), Some(n)) => {
                            let w = o.widen(n);
                            if w.is_full() {
                                None
                            } else {
                                Some(w)
                            }
                        }
                        // either side unconstrained: so is the result
                        _ => None,
                    },
                    stats,
                );
                AbsState::Env(widened)
            }
        }
    }

    pub fn leq(&self, other: &AbsState, stats: &mut ShareStats) -> bool {
        match (self, other) {
            (AbsState::Bottom, _) => true,
            (_, AbsState::Bottom) => false,
            (AbsState::Env(a), AbsState::Env(b)) => a.leq_by(
                b,
                |x, y| match (x, y) {
                    (Some(i), Some(j)) => i.leq(j),
                    // bound on the left only: below "any"
                    (Some(_), None) => true,
                    // unbound on the left, bound (hence not full) on the right
                    (None, Some(_)) => false,
                    (None, None) => true,
                },
                stats,
            ),
        }
    }
}

/// Per-successor abstract transfer. `Bottom` transfers to nothing;
/// infeasible branch edges are dropped. Division records nothing about
/// traps.
pub fn transfer(instr: &Instr, s: &AbsState) -> Vec<(Loc, AbsState)> {
    let env = match s {
        AbsState::Bottom => return vec![],
        AbsState::Env(env) => env,
    };
    match instr {
        Instr::Nop { succ } => vec![(*succ, s.clone())],
        Instr::Const { dst, value, succ } => {
            let env = AbsState::set_reg(env, *dst, Interval::singleton(value.clone()));
            vec![(*succ, AbsState::Env(env))]
        }
        Instr::Move { dst, src, succ } => {
            let env = AbsState::set_reg(env, *dst, s.get_reg(*src));
            vec![(*succ, AbsState::Env(env))]
        }
        Instr::Op { dst, op, src1, src2, succ } => {
            let r = fwd_op(*op, &s.get_reg(*src1), &s.get_reg(*src2));
            let env = AbsState::set_reg(env, *dst, r);
            vec![(*succ, AbsState::Env(env))]
        }
        Instr::Branch { cmp, src1, src2, if_true, if_false } => {
            let a = s.get_reg(*src1);
            let b = s.get_reg(*src2);
            let mut out = Vec::new();
            for (target, taken) in [(*if_true, true), (*if_false, false)] {
                if let Some((ra, rb)) = refine(*cmp, taken, &a, &b) {
                    let env = AbsState::set_reg(env, *src1, ra);
                    let env = AbsState::set_reg(&env, *src2, rb);
                    out.push((target, AbsState::Env(env)));
                }
            }
            out
        }
        Instr::Return { .. } => vec![],
    }
}

/// [`Domain`] instance for the interval analysis. Holds the sharing
/// counters for all trie traversals it performs; `naive_join` switches the
/// join to the unshared baseline for measurements.
pub struct IntervalDomain {
    pub stats: ShareStats,
    pub naive_join: bool,
}

impl IntervalDomain {
    pub fn new() -> Self {
        IntervalDomain { stats: ShareStats::default(), naive_join: false }
    }

    pub fn naive() -> Self {
        IntervalDomain { stats: ShareStats::default(), naive_join: true }
    }
}

impl Default for IntervalDomain {
    fn default() -> Self {
        Self::new()
    }
}

impl Domain for IntervalDomain {
    type State = AbsState;

    fn bottom(&self) -> AbsState {
        AbsState::Bottom
    }

    fn is_bottom(&self, s: &AbsState) -> bool {
        s.is_bottom()
    }

    fn join(&mut self, a: &AbsState, b: &AbsState) -> AbsState {
        if self.naive_join {
            a.join_naive(b, &mut self.stats)
        } else {
            a.join(b, &mut self.stats)
        }
    }

    fn widen(&mut self, old: &AbsState, new: &AbsState) -> AbsState {
        old.widen(new, &mut self.stats)
    }

    fn leq(&mut self, a: &AbsState, b: &AbsState) -> bool {
        a.leq(b, &mut self.stats)
    }

    fn transfer(&mut self, instr: &Instr, s: &AbsState) -> Vec<(Loc, AbsState)> {
        transfer(instr, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: i64, hi: i64) -> Interval {
        Interval::of_i64(lo, hi)
    }

    fn big(n: i64) -> BigInt {
        BigInt::from(n)
    }

    /// Concrete points of an interval clipped to a window, for brute force.
    fn points(i: &Interval, lo: i64, hi: i64) -> Vec<i64> {
        (lo..=hi).filter(|&x| i.contains(&big(x))).collect()
    }

    #[test]
    fn join_and_widen_basics() {
        assert_eq!(iv(3, 3).hull(&iv(5, 5)), iv(3, 5));
        assert_eq!(iv(0, 1).widen(&iv(0, 2)), Interval::new(Bound::int(0), Bound::PosInf));
        assert_eq!(iv(0, 2).widen(&iv(0, 2)), iv(0, 2));
        assert_eq!(iv(0, 2).widen(&iv(-1, 2)), Interval::new(Bound::NegInf, Bound::int(2)));
    }

    #[test]
    fn sub_of_equal_ranges_is_symmetric() {
        // x in [0,1], y in [0,1]: x - y in [-1,1]
        assert_eq!(fwd_op(BinOp::Sub, &iv(0, 1), &iv(0, 1)), iv(-1, 1));
    }

    #[test]
    fn mul_matches_brute_force_on_example() {
        let a = iv(-1, 2);
        let b = iv(3, 3);
        let got = fwd_op(BinOp::Mul, &a, &b);
        let mut products: Vec<i64> = vec![];
        for x in points(&a, -10, 10) {
            for y in points(&b, -10, 10) {
                products.push(x * y);
            }
        }
        let lo = *products.iter().min().unwrap();
        let hi = *products.iter().max().unwrap();
        assert_eq!(got, iv(lo, hi));
        assert_eq!(got, iv(-3, 6));
    }

    #[test]
    fn add_absorbs_infinity() {
        let a = Interval::new(Bound::int(0), Bound::PosInf);
        let b = iv(1, 1);
        assert_eq!(fwd_op(BinOp::Add, &a, &b), Interval::new(Bound::int(1), Bound::PosInf));
    }

    #[test]
    fn div_is_top_unless_divisor_excludes_zero() {
        assert!(fwd_op(BinOp::Div, &iv(1, 4), &iv(-1, 1)).is_full());
        assert_eq!(fwd_op(BinOp::Div, &iv(1, 4), &iv(2, 2)), iv(0, 2));
        assert_eq!(fwd_op(BinOp::Div, &iv(-7, 7), &iv(2, 3)), iv(-3, 3));
        assert!(fwd_op(BinOp::Div, &Interval::new(Bound::int(1), Bound::PosInf), &iv(2, 2)).is_full());
    }

    #[test]
    fn refine_eq_against_constant() {
        let (a, b) = refine(Cmp::Eq, true, &Interval::full(), &iv(42, 42)).unwrap();
        assert_eq!(a, iv(42, 42));
        assert_eq!(b, iv(42, 42));
    }

    #[test]
    fn refine_lt_tightens_and_detects_infeasible() {
        let (a, b) = refine(Cmp::Lt, true, &iv(0, 10), &iv(5, 5)).unwrap();
        assert_eq!(a, iv(0, 4));
        assert_eq!(b, iv(5, 5));
        assert!(refine(Cmp::Lt, true, &iv(7, 9), &iv(5, 5)).is_none());
    }

    #[test]
    fn refine_is_sound_by_brute_force() {
        // all comparisons, both polarities, intervals over a small grid
        let intervals: Vec<Interval> = {
            let mut v = vec![Interval::full()];
            for lo in -3..=3 {
                for hi in lo..=3 {
                    v.push(iv(lo, hi));
                }
            }
            v
        };
        for cmp in [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge] {
            for taken in [true, false] {
                for a in &intervals {
                    for b in &intervals {
                        let refined = refine(cmp, taken, a, b);
                        for x in points(a, -4, 4) {
                            for y in points(b, -4, 4) {
                                if cmp.eval(&big(x), &big(y)) == taken {
                                    let (ra, rb) = refined
                                        .as_ref()
                                        .unwrap_or_else(|| panic!("feasible pair ({x},{y}) but refine said infeasible"));
                                    assert!(ra.contains(&big(x)), "{cmp:?} {taken} {a} {b} lost x={x}");
                                    assert!(rb.contains(&big(y)), "{cmp:?} {taken} {a} {b} lost y={y}");
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn transfer_move_copies_the_interval() {
        let s = AbsState::Env(PTrie::empty().set(1, iv(0, 1)));
        let instr = Instr::Move { dst: Reg::new(2), src: Reg::new(1), succ: Loc::new(5) };
        let out = transfer(&instr, &s);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, Loc::new(5));
        assert_eq!(out[0].1.get_reg(Reg::new(1)), iv(0, 1));
        assert_eq!(out[0].1.get_reg(Reg::new(2)), iv(0, 1));
    }

    #[test]
    fn branch_on_same_register_emits_both_successors() {
        let instr = Instr::Branch {
            cmp: Cmp::Eq,
            src1: Reg::new(1),
            src2: Reg::new(1),
            if_true: Loc::new(2),
            if_false: Loc::new(3),
        };
        let out = transfer(&instr, &AbsState::top());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn bottom_transfers_to_nothing() {
        let instr = Instr::Nop { succ: Loc::new(2) };
        assert!(transfer(&instr, &AbsState::Bottom).is_empty());
    }

    #[test]
    fn join_laws_on_random_states() {
        let mut stats = ShareStats::default();
        let states = [
            AbsState::top(),
            AbsState::Bottom,
            AbsState::Env(PTrie::empty().set(1, iv(0, 5))),
            AbsState::Env(PTrie::empty().set(1, iv(3, 9)).set(2, iv(-1, 1))),
            AbsState::Env(PTrie::empty().set(2, iv(7, 7))),
        ];
        for s1 in &states {
            for s2 in &states {
                let j = s1.join(s2, &mut stats);
                assert!(s1.leq(&j, &mut stats), "{s1:?} not below join with {s2:?}");
                assert!(s2.leq(&j, &mut stats));
                if !s2.leq(s1, &mut stats) {
                    assert!(!j.leq(s1, &mut stats) || s1.leq(s2, &mut stats));
                }
            }
        }
    }

    #[test]
    fn widen_stabilizes_increasing_chains() {
        let mut stats = ShareStats::default();
        // an leq-increasing sequence of states over a small bound set
        let chain = [
            AbsState::Env(PTrie::empty().set(1, iv(0, 0))),
            AbsState::Env(PTrie::empty().set(1, iv(0, 1))),
            AbsState::Env(PTrie::empty().set(1, iv(-1, 2))),
            AbsState::Env(PTrie::empty().set(1, iv(-5, 9))),
        ];
        let mut cur = AbsState::Bottom;
        let mut changes = 0;
        for next in &chain {
            let joined = cur.join(next, &mut stats);
            let widened = cur.widen(&joined, &mut stats);
            if !widened.leq(&cur, &mut stats) {
                changes += 1;
            }
            cur = widened;
        }
        assert!(changes <= 3, "widening took {} changes", changes);
        // one more pass is stable
        for next in &chain {
            let joined = cur.join(next, &mut stats);
            let widened = cur.widen(&joined, &mut stats);
            assert!(widened.leq(&cur, &mut stats) && cur.leq(&widened, &mut stats));
        }
    }
}
