//! Fixpoint engine and inductiveness checker.
//!
//! [`kildall`] runs the classic workset algorithm over a [`Domain`]:
//! locations are picked from a max-priority workset (on renumbered
//! functions the maximal location is the RPO-least one), transfer results
//! are joined into the successors' states, with widening at the given
//! widening points, and an explicit fuel budget replaces a termination
//! proof — exhausting it returns a failure value, never an exception.
//!
//! [`check_inductive`] is the other half of the oracle/checker split: it
//! takes any invariant, trusted or not, and verifies edge by edge that it
//! covers the entry state and is closed under transfer. The solver's
//! output always passes it; hand-written or third-party invariants can be
//! checked against the same procedure.

pub mod facts;
pub mod file;

pub use facts::{
    apply_cse, fact_check, fact_kildall, Fact, FactCheckError, FactSolve, FactState, FactTable,
};

use crate::ir::{reverse_postorder, Function, Instr, Loc};
use crate::ptrie::PTrie;
use std::collections::BinaryHeap;
use std::collections::BTreeSet;
use std::fmt;

/// Abstract-domain hooks for the engine and the checker. All hooks take
/// `&mut self` so domains can intern, memoize and count as they go.
pub trait Domain {
    type State: Clone;

    /// The initial state of not-yet-reached locations; transfers to nothing.
    fn bottom(&self) -> Self::State;
    fn is_bottom(&self, s: &Self::State) -> bool;
    /// Upper bound of both arguments (need not be least).
    fn join(&mut self, a: &Self::State, b: &Self::State) -> Self::State;
    /// Convergence accelerator; `new` is always above `old` when called.
    fn widen(&mut self, old: &Self::State, new: &Self::State) -> Self::State;
    fn leq(&mut self, a: &Self::State, b: &Self::State) -> bool;
    /// Successor states of executing `instr` from `s`.
    fn transfer(&mut self, instr: &Instr, s: &Self::State) -> Vec<(Loc, Self::State)>;
}

/// A per-location map of abstract states covering every location of the
/// function it was computed for.
#[derive(Clone, Debug)]
pub struct Invariant<S> {
    states: PTrie<S>,
}

impl<S: Clone> Invariant<S> {
    pub fn new(states: PTrie<S>) -> Self {
        Invariant { states }
    }

    pub fn state(&self, at: Loc) -> Option<&S> {
        self.states.get(at.key())
    }

    pub fn set(&self, at: Loc, s: S) -> Self {
        Invariant { states: self.states.set(at.key(), s) }
    }

    /// All entries in ascending location order.
    pub fn entries(&self) -> Vec<(Loc, &S)> {
        self.states
            .bindings()
            .into_iter()
            .map(|(k, s)| (Loc::new(k), s))
            .collect()
    }
}

/// The engine gave up.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SolveFailure {
    OutOfFuel,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveFailure::OutOfFuel => write!(f, "out of fuel"),
        }
    }
}

impl std::error::Error for SolveFailure {}

/// A successful solve: the invariant plus the pick trace (the order in
/// which locations were taken from the workset).
#[derive(Clone, Debug)]
pub struct SolveResult<S> {
    pub invariant: Invariant<S>,
    pub picks: Vec<Loc>,
}

/// Default fuel: comfortably above anything a converging analysis of `f`
/// needs.
pub fn default_fuel(f: &Function) -> u64 {
    50 * f.code.len() as u64
}

/// Workset fixpoint. Requires `f` renumbered (entry maximal), so that the
/// max-priority pick is the RPO-least pending location.
pub fn kildall<D: Domain>(
    f: &Function,
    dom: &mut D,
    entry_state: D::State,
    widening_points: &BTreeSet<Loc>,
    fuel: u64,
) -> Result<SolveResult<D::State>, SolveFailure> {
    let locs = f.locations();
    let max_loc = locs.last().copied().expect("nonempty function");
    assert!(
        f.entry == max_loc,
        "kildall requires a renumbered function (entry must be the maximal location)"
    );

    let bottom = dom.bottom();
    let mut inv: PTrie<D::State> = PTrie::empty();
    for &l in &locs {
        inv = inv.set(l.key(), bottom.clone());
    }
    inv = inv.set(f.entry.key(), entry_state);

    let mut workset: BinaryHeap<Loc> = BinaryHeap::new();
    let mut pending = vec![false; max_loc.key() as usize + 1];
    workset.push(f.entry);
    pending[f.entry.key() as usize] = true;

    let mut picks: Vec<Loc> = Vec::new();
    while let Some(p) = workset.pop() {
        if picks.len() as u64 >= fuel {
            return Err(SolveFailure::OutOfFuel);
        }
        pending[p.key() as usize] = false;
        picks.push(p);
        let instr = f.instr(p).expect("locations come from the code trie");
        let state = inv.get(p.key()).expect("all locations initialized").clone();
        for (succ, propagated) in dom.transfer(instr, &state) {
            let cur = inv
                .get(succ.key())
                .unwrap_or_else(|| panic!("transfer produced unknown location {}", succ));
            if dom.leq(&propagated, cur) {
                continue;
            }
            let joined = dom.join(cur, &propagated);
            let next = if widening_points.contains(&succ) {
                dom.widen(cur, &joined)
            } else {
                joined
            };
            inv = inv.set(succ.key(), next);
            if !pending[succ.key() as usize] {
                pending[succ.key() as usize] = true;
                workset.push(succ);
            }
        }
    }
    Ok(SolveResult { invariant: Invariant::new(inv), picks })
}

/// Why an invariant was rejected. Carries the offending edge and both
/// states so callers can render them.
#[derive(Clone, Debug)]
pub enum Violation<S> {
    /// The invariant has no entry for a reachable location.
    MissingLocation { at: Loc },
    /// The claimed entry state does not cover the required one.
    EntryNotCovered { entry: Loc, required: S, claimed: S },
    /// A transfer result is not below the invariant at the target.
    EdgeNotCovered { from: Loc, to: Loc, propagated: S, at_target: S },
}

impl<S> Violation<S> {
    /// The edge this violation names, entry violations pointing at the
    /// entry itself.
    pub fn edge(&self) -> (Loc, Loc) {
        match self {
            Violation::MissingLocation { at } => (*at, *at),
            Violation::EntryNotCovered { entry, .. } => (*entry, *entry),
            Violation::EdgeNotCovered { from, to, .. } => (*from, *to),
        }
    }
}

/// Checks that `inv` contains `entry_state` at the entry and is closed
/// under transfer on every edge, reporting the first violation in RPO
/// order. Makes no assumption about where `inv` came from.
pub fn check_inductive<D: Domain>(
    f: &Function,
    dom: &mut D,
    entry_state: &D::State,
    inv: &Invariant<D::State>,
) -> Result<(), Violation<D::State>> {
    let rpo = reverse_postorder(f);
    for &p in &rpo {
        if inv.state(p).is_none() {
            return Err(Violation::MissingLocation { at: p });
        }
    }
    let at_entry = inv.state(f.entry).expect("checked above");
    if !dom.leq(entry_state, at_entry) {
        return Err(Violation::EntryNotCovered {
            entry: f.entry,
            required: entry_state.clone(),
            claimed: at_entry.clone(),
        });
    }
    for &p in &rpo {
        let s = inv.state(p).expect("checked above");
        if dom.is_bottom(s) {
            continue;
        }
        let instr = f.instr(p).expect("reachable location");
        for (succ, propagated) in dom.transfer(instr, s) {
            let target = match inv.state(succ) {
                Some(t) => t,
                None => return Err(Violation::MissingLocation { at: succ }),
            };
            if !dom.leq(&propagated, target) {
                return Err(Violation::EdgeNotCovered {
                    from: p,
                    to: succ,
                    propagated,
                    at_target: target.clone(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{AbsState, Interval, IntervalDomain};
    use crate::ir::{parse, renumber, widening_points, Reg};
    use crate::ptrie::PTrie;

    fn solve_renumbered(src: &str, entry: AbsState) -> (Function, SolveResult<AbsState>) {
        let f = parse(src).unwrap();
        let (f, dropped) = renumber(&f);
        assert!(dropped.is_empty());
        let wp = widening_points(&f);
        let mut dom = IntervalDomain::new();
        let r = kildall(&f, &mut dom, entry, &wp, default_fuel(&f)).unwrap();
        (f, r)
    }

    #[test]
    fn straight_line_constant_propagation() {
        let (f, r) = solve_renumbered(
            "func f(r1) entry 1 { 1: r1 := 0 -> 2  2: return r1 }",
            AbsState::top(),
        );
        // renumbered: entry is 2, return site is 1
        let ret = r.invariant.state(Loc::new(1)).unwrap();
        assert_eq!(ret.get_reg(Reg::new(1)), Interval::of_i64(0, 0));
        let mut dom = IntervalDomain::new();
        assert!(check_inductive(&f, &mut dom, &AbsState::top(), &r.invariant).is_ok());
    }

    #[test]
    fn copy_then_subtract_loses_the_relation() {
        // y := x; z := x - y with x in [0,1] gives z in [-1,1]
        let src = "func f(r1) entry 1 {
            1: r2 := move r1 -> 2
            2: r3 := sub r1 r2 -> 3
            3: return r3
        }";
        let entry = AbsState::Env(PTrie::empty().set(1, Interval::of_i64(0, 1)));
        let (f, r) = solve_renumbered(src, entry.clone());
        // renumbered: 3 -> 1, so the return site is location 1
        let at_ret = r.invariant.state(Loc::new(1)).unwrap();
        assert_eq!(at_ret.get_reg(Reg::new(3)), Interval::of_i64(-1, 1));
        let mut dom = IntervalDomain::new();
        assert!(check_inductive(&f, &mut dom, &entry, &r.invariant).is_ok());
    }

    #[test]
    fn counted_loop_widens_at_the_head_and_refines_the_exit() {
        // i := 0; while (i < 10) i := i + 1; return i
        let src = "func f(r9) entry 1 {
            1: r1 := 0 -> 2
            2: r2 := 10 -> 3
            3: r3 := 1 -> 4
            4: if lt r1 r2 -> 5, 6
            5: r1 := add r1 r3 -> 4
            6: return r1
        }";
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let wp = widening_points(&f);
        assert_eq!(wp.len(), 1);
        let head = *wp.iter().next().unwrap();
        let mut dom = IntervalDomain::new();
        let r = kildall(&f, &mut dom, AbsState::top(), &wp, default_fuel(&f)).unwrap();
        // plain widening, no narrowing: the head knows i in [0, +inf)
        let at_head = r.invariant.state(head).unwrap();
        assert_eq!(
            at_head.get_reg(Reg::new(1)),
            Interval::new(crate::interval::Bound::int(0), crate::interval::Bound::PosInf)
        );
        // the exit edge refines i to [10, +inf)
        let exit = Loc::new(1); // return is RPO-last, renumbered to 1
        let at_exit = r.invariant.state(exit).unwrap();
        assert_eq!(
            at_exit.get_reg(Reg::new(1)),
            Interval::new(crate::interval::Bound::int(10), crate::interval::Bound::PosInf)
        );
        assert!(check_inductive(&f, &mut dom, &AbsState::top(), &r.invariant).is_ok());
    }

    #[test]
    fn two_successive_loops_are_solved_in_order() {
        let src = "func f(r1, r2) entry 1 {
            1: r3 := 0 -> 2
            2: if lt r3 r1 -> 3, 4
            3: r3 := add r3 r2 -> 2
            4: r4 := 0 -> 5
            5: if lt r4 r1 -> 6, 7
            6: r4 := add r4 r2 -> 5
            7: return r4
        }";
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let rpo = reverse_postorder(&f);
        let index: std::collections::BTreeMap<Loc, usize> =
            rpo.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let wp = widening_points(&f);
        let mut dom = IntervalDomain::new();
        let r = kildall(&f, &mut dom, AbsState::top(), &wp, default_fuel(&f)).unwrap();
        // the second loop's body (RPO indices 5..) is first picked only
        // after the first loop (RPO indices 1..=3) has stabilized
        let body2_first = r.picks.iter().position(|l| index[l] >= 5).unwrap();
        let loop1_last = r
            .picks
            .iter()
            .rposition(|l| (1..=3).contains(&index[l]))
            .unwrap();
        assert!(
            loop1_last < body2_first,
            "picks interleave loops: {:?}",
            r.picks
        );
    }

    #[test]
    fn fuel_exhaustion_is_a_value() {
        let src = "func f(r1) entry 1 {
            1: if lt r1 r1 -> 1, 2
            2: return r1
        }";
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let wp = widening_points(&f);
        let mut dom = IntervalDomain::new();
        let err = kildall(&f, &mut dom, AbsState::top(), &wp, 1).unwrap_err();
        assert_eq!(err, SolveFailure::OutOfFuel);
        assert_eq!(err.to_string(), "out of fuel");
    }

    #[test]
    fn fuel_is_monotone() {
        let src = "func f(r1) entry 1 {
            1: r2 := 0 -> 2
            2: if lt r2 r1 -> 3, 4
            3: r2 := add r2 r1 -> 2
            4: return r2
        }";
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let wp = widening_points(&f);
        let mut dom = IntervalDomain::new();
        let r1 = kildall(&f, &mut dom, AbsState::top(), &wp, default_fuel(&f)).unwrap();
        let needed = r1.picks.len() as u64;
        for extra in [0, 1, 17, 1000] {
            let mut dom = IntervalDomain::new();
            let r2 = kildall(&f, &mut dom, AbsState::top(), &wp, needed + extra).unwrap();
            assert_eq!(r2.picks, r1.picks);
            for (l, s) in r1.invariant.entries() {
                assert_eq!(Some(s), r2.invariant.state(l));
            }
        }
    }

    #[test]
    fn widening_a_single_return_site_stays_inductive_but_shrinking_a_head_does_not() {
        let src = "func f(r9) entry 1 {
            1: r1 := 0 -> 2
            2: if lt r1 r9 -> 3, 4
            3: r1 := add r1 r1 -> 2
            4: return r1
        }";
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let wp = widening_points(&f);
        let mut dom = IntervalDomain::new();
        let r = kildall(&f, &mut dom, AbsState::top(), &wp, default_fuel(&f)).unwrap();
        // widening the return site (no outgoing edges) keeps inductiveness
        let weakened = r.invariant.set(Loc::new(1), AbsState::top());
        assert!(check_inductive(&f, &mut dom, &AbsState::top(), &weakened).is_ok());
        // shrinking the loop head below the fixpoint is caught on an edge
        let head = *wp.iter().next().unwrap();
        let shrunk = r.invariant.set(head, AbsState::Bottom);
        let err = check_inductive(&f, &mut dom, &AbsState::top(), &shrunk).unwrap_err();
        assert!(matches!(err, Violation::EdgeNotCovered { to, .. } if to == head));
    }

    #[test]
    fn missing_location_is_reported() {
        let (f, r) = solve_renumbered(
            "func f(r1) entry 1 { 1: nop -> 2  2: return r1 }",
            AbsState::top(),
        );
        // rebuild an invariant missing the non-entry location
        let mut partial = Invariant::new(PTrie::empty());
        partial = partial.set(f.entry, r.invariant.state(f.entry).unwrap().clone());
        let mut dom = IntervalDomain::new();
        let err = check_inductive(&f, &mut dom, &AbsState::top(), &partial).unwrap_err();
        assert!(matches!(err, Violation::MissingLocation { .. }));
    }

    #[test]
    fn independent_solvers_run_concurrently() {
        let src = "func f(r1) entry 1 {
            1: r2 := 0 -> 2
            2: if lt r2 r1 -> 3, 4
            3: r2 := add r2 r1 -> 2
            4: return r2
        }";
        let f = parse(src).unwrap();
        let (f, _) = renumber(&f);
        let wp = widening_points(&f);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    let f = &f;
                    let wp = &wp;
                    s.spawn(move || {
                        let mut dom = IntervalDomain::new();
                        kildall(f, &mut dom, AbsState::top(), wp, default_fuel(f))
                            .unwrap()
                            .picks
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in &results[1..] {
            assert_eq!(r, &results[0]);
        }
    }
}
