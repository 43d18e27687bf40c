//! CFG utilities: reverse postorder, renumbering, back edges and widening
//! points.

use super::{Function, Instr, Loc};
use crate::ptrie::PTrie;
use std::collections::{BTreeMap, BTreeSet};

/// Reachable locations in reverse postorder, entry first.
///
/// The DFS child order is fixed (true successor listed before the false
/// one in the resulting order), so the result is deterministic.
pub fn reverse_postorder(f: &Function) -> Vec<Loc> {
    let mut post: Vec<Loc> = Vec::new();
    let mut visited: BTreeSet<Loc> = BTreeSet::new();
    // Explicit stack of (location, successors not yet explored). The DFS
    // takes the false successor first (popping from the back), which makes
    // the true successor finish later and thus come first in RPO.
    let mut stack: Vec<(Loc, Vec<Loc>)> = Vec::new();
    let succs = |at: Loc| f.instr(at).map(|i| i.successors()).unwrap_or_default();
    visited.insert(f.entry);
    stack.push((f.entry, succs(f.entry)));
    while let Some((at, pending)) = stack.last_mut() {
        if let Some(next) = pending.pop() {
            if visited.insert(next) {
                stack.push((next, succs(next)));
            }
        } else {
            post.push(*at);
            stack.pop();
        }
    }
    post.reverse();
    post
}

/// Relabels locations so that the i-th location in reverse postorder gets
/// number `n - i`: the entry becomes the maximal location and picking the
/// maximum equals picking the RPO-least. Unreachable locations are dropped
/// and returned alongside the renumbered function.
pub fn renumber(f: &Function) -> (Function, Vec<Loc>) {
    let rpo = reverse_postorder(f);
    let n = rpo.len() as u32;
    let map: BTreeMap<Loc, Loc> = rpo
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, Loc::new(n - i as u32)))
        .collect();
    let relabel = |l: Loc| map[&l];
    let mut code = PTrie::empty();
    let mut dropped = Vec::new();
    for (k, instr) in f.code.bindings() {
        let old = Loc::new(k);
        let Some(&new) = map.get(&old) else {
            dropped.push(old);
            continue;
        };
        let instr = match instr.clone() {
            Instr::Nop { succ } => Instr::Nop { succ: relabel(succ) },
            Instr::Const { dst, value, succ } => Instr::Const { dst, value, succ: relabel(succ) },
            Instr::Move { dst, src, succ } => Instr::Move { dst, src, succ: relabel(succ) },
            Instr::Op { dst, op, src1, src2, succ } => {
                Instr::Op { dst, op, src1, src2, succ: relabel(succ) }
            }
            Instr::Branch { cmp, src1, src2, if_true, if_false } => Instr::Branch {
                cmp,
                src1,
                src2,
                if_true: relabel(if_true),
                if_false: relabel(if_false),
            },
            Instr::Return { src } => Instr::Return { src },
        };
        code = code.set(new.key(), instr);
    }
    (
        Function {
            name: f.name.clone(),
            params: f.params.clone(),
            entry: relabel(f.entry),
            code,
        },
        dropped,
    )
}

/// DFS back edges: edges whose target is an ancestor on the DFS stack.
pub fn back_edges(f: &Function) -> Vec<(Loc, Loc)> {
    #[derive(PartialEq)]
    enum Color {
        OnStack,
        Done,
    }
    let mut color: BTreeMap<Loc, Color> = BTreeMap::new();
    let mut out = Vec::new();
    let mut stack: Vec<(Loc, Vec<Loc>)> = Vec::new();
    let succs = |at: Loc| f.instr(at).map(|i| i.successors()).unwrap_or_default();
    color.insert(f.entry, Color::OnStack);
    stack.push((f.entry, succs(f.entry)));
    while let Some((at, pending)) = stack.last_mut() {
        if pending.is_empty() {
            color.insert(*at, Color::Done);
            stack.pop();
            continue;
        }
        let at = *at;
        let next = pending.remove(0);
        match color.get(&next) {
            Some(Color::OnStack) => out.push((at, next)),
            Some(Color::Done) => {}
            _ => {
                color.insert(next, Color::OnStack);
                stack.push((next, succs(next)));
            }
        }
    }
    out.sort();
    out
}

/// Targets of back edges; removing their incoming edges breaks all cycles.
pub fn widening_points(f: &Function) -> BTreeSet<Loc> {
    back_edges(f).into_iter().map(|(_, dst)| dst).collect()
}

/// True when the CFG with every edge into `targets` removed is acyclic.
pub fn residual_is_acyclic(f: &Function, targets: &BTreeSet<Loc>) -> bool {
    // Kahn-style: count in-degrees, ignoring edges into `targets`.
    let locs = f.locations();
    let mut indeg: BTreeMap<Loc, usize> = locs.iter().map(|&l| (l, 0)).collect();
    for &l in &locs {
        if let Some(i) = f.instr(l) {
            i.for_each_succ(|s| {
                if !targets.contains(&s) {
                    *indeg.get_mut(&s).expect("successor defined") += 1;
                }
            });
        }
    }
    let mut ready: Vec<Loc> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&l, _)| l)
        .collect();
    let mut seen = 0;
    while let Some(l) = ready.pop() {
        seen += 1;
        if let Some(i) = f.instr(l) {
            i.for_each_succ(|s| {
                if !targets.contains(&s) {
                    let d = indeg.get_mut(&s).expect("successor defined");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(s);
                    }
                }
            });
        }
    }
    seen == locs.len()
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn loc(k: u32) -> Loc {
        Loc::new(k)
    }

    #[test]
    fn diamond_rpo_lists_true_branch_first() {
        let f = parse(
            "func f(r1) entry 1 {
              1: if eq r1 r1 -> 2, 3
              2: nop -> 4
              3: nop -> 4
              4: return r1
            }",
        )
        .unwrap();
        assert_eq!(reverse_postorder(&f), vec![loc(1), loc(2), loc(3), loc(4)]);
    }

    #[test]
    fn straight_line_rpo_is_program_order() {
        let f = parse("func f(r1) entry 1 { 1: nop -> 2 2: nop -> 3 3: return r1 }").unwrap();
        assert_eq!(reverse_postorder(&f), vec![loc(1), loc(2), loc(3)]);
    }

    #[test]
    fn renumbered_diamond_entry_is_maximal() {
        let f = parse(
            "func f(r1) entry 1 {
              1: if eq r1 r1 -> 2, 3
              2: nop -> 4
              3: nop -> 4
              4: return r1
            }",
        )
        .unwrap();
        let (g, dropped) = renumber(&f);
        assert!(dropped.is_empty());
        assert_eq!(g.entry, loc(4));
        assert_eq!(g.locations().len(), 4);
        // RPO of the renumbered function counts down from the entry
        assert_eq!(reverse_postorder(&g), vec![loc(4), loc(3), loc(2), loc(1)]);
    }

    #[test]
    fn renumber_drops_unreachable_code() {
        let f = parse(
            "func f(r1) entry 1 {
              1: return r1
              2: nop -> 1
            }",
        )
        .unwrap();
        let (g, dropped) = renumber(&f);
        assert_eq!(dropped, vec![loc(2)]);
        assert_eq!(g.locations().len(), 1);
    }

    #[test]
    fn simple_loop_back_edge_and_widening_point() {
        let f = parse(
            "func f(r1) entry 1 {
              1: nop -> 2
              2: if lt r1 r1 -> 3, 4
              3: nop -> 2
              4: return r1
            }",
        )
        .unwrap();
        assert_eq!(back_edges(&f), vec![(loc(3), loc(2))]);
        let wp = widening_points(&f);
        assert_eq!(wp, BTreeSet::from([loc(2)]));
        assert!(residual_is_acyclic(&f, &wp));
        assert!(!residual_is_acyclic(&f, &BTreeSet::new()));
    }

    #[test]
    fn acyclic_cfg_has_no_widening_points() {
        let f = parse("func f(r1) entry 1 { 1: nop -> 2 2: return r1 }").unwrap();
        assert!(back_edges(&f).is_empty());
        assert!(widening_points(&f).is_empty());
        assert!(residual_is_acyclic(&f, &BTreeSet::new()));
    }

    #[test]
    fn two_successive_loops_give_two_widening_points() {
        let f = parse(
            "func f(r1) entry 1 {
              1: nop -> 2
              2: if lt r1 r1 -> 3, 4
              3: nop -> 2
              4: nop -> 5
              5: if lt r1 r1 -> 6, 7
              6: nop -> 5
              7: return r1
            }",
        )
        .unwrap();
        let wp = widening_points(&f);
        assert_eq!(wp, BTreeSet::from([loc(2), loc(5)]));
        assert!(residual_is_acyclic(&f, &wp));
    }

    #[test]
    fn rpo_index_increases_along_non_back_edges() {
        let f = parse(
            "func f(r1) entry 1 {
              1: nop -> 2
              2: if lt r1 r1 -> 3, 5
              3: nop -> 4
              4: if le r1 r1 -> 2, 5
              5: return r1
            }",
        )
        .unwrap();
        let rpo = reverse_postorder(&f);
        let index: BTreeMap<Loc, usize> = rpo.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let back: BTreeSet<(Loc, Loc)> = back_edges(&f).into_iter().collect();
        for &u in &rpo {
            for v in f.instr(u).unwrap().successors() {
                if !back.contains(&(u, v)) {
                    assert!(index[&u] < index[&v], "edge {} -> {}", u, v);
                }
            }
        }
    }
}
