//! The register-transfer IR: CFG functions over pseudo-registers.
//!
//! A [`Function`] is a map from control locations to instructions plus an
//! entry location. Values are unbounded integers; `div` is the only
//! trapping operator (zero divisor). The textual format is defined in
//! [`text`], the concrete interpreter in [`interp`] and CFG utilities
//! (reverse postorder, renumbering, back edges) in [`cfg`].

mod cfg;
mod interp;
pub(crate) mod text;

pub use cfg::{back_edges, renumber, residual_is_acyclic, reverse_postorder, widening_points};
pub use interp::{interpret, interpret_observed, ExecError, Outcome};
pub use text::{parse, print, ParseError};

use crate::ptrie::PTrie;
use num_bigint::BigInt;

/// A pseudo-register, printed `r<k>` with `k >= 1`.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Reg(u32);

impl Reg {
    pub fn new(k: u32) -> Reg {
        assert!(k >= 1, "registers are positive");
        Reg(k)
    }

    /// The raw index; also the trie key for register-indexed maps.
    pub fn key(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for Reg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A control location, positive.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Loc(u32);

impl Loc {
    pub fn new(k: u32) -> Loc {
        assert!(k >= 1, "locations are positive");
        Loc(k)
    }

    pub fn key(self) -> u32 {
        self.0
    }
}

impl std::fmt::Display for Loc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Binary arithmetic operators. Only `Div` can trap.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    pub fn from_name(s: &str) -> Option<BinOp> {
        Some(match s {
            "add" => BinOp::Add,
            "sub" => BinOp::Sub,
            "mul" => BinOp::Mul,
            "div" => BinOp::Div,
            _ => return None,
        })
    }
}

/// Comparison operators for branches.
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn name(self) -> &'static str {
        match self {
            Cmp::Eq => "eq",
            Cmp::Ne => "ne",
            Cmp::Lt => "lt",
            Cmp::Le => "le",
            Cmp::Gt => "gt",
            Cmp::Ge => "ge",
        }
    }

    pub fn from_name(s: &str) -> Option<Cmp> {
        Some(match s {
            "eq" => Cmp::Eq,
            "ne" => Cmp::Ne,
            "lt" => Cmp::Lt,
            "le" => Cmp::Le,
            "gt" => Cmp::Gt,
            "ge" => Cmp::Ge,
            _ => return None,
        })
    }

    pub fn eval(self, a: &BigInt, b: &BigInt) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
        }
    }
}

/// One instruction. Branches have exactly two successors, `Return` none,
/// everything else one.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Instr {
    Nop { succ: Loc },
    Const { dst: Reg, value: BigInt, succ: Loc },
    Move { dst: Reg, src: Reg, succ: Loc },
    Op { dst: Reg, op: BinOp, src1: Reg, src2: Reg, succ: Loc },
    Branch { cmp: Cmp, src1: Reg, src2: Reg, if_true: Loc, if_false: Loc },
    Return { src: Reg },
}

impl Instr {
    pub fn successors(&self) -> Vec<Loc> {
        match self {
            Instr::Nop { succ }
            | Instr::Const { succ, .. }
            | Instr::Move { succ, .. }
            | Instr::Op { succ, .. } => vec![*succ],
            Instr::Branch { if_true, if_false, .. } => vec![*if_true, *if_false],
            Instr::Return { .. } => vec![],
        }
    }

    pub fn for_each_succ(&self, mut f: impl FnMut(Loc)) {
        match self {
            Instr::Nop { succ }
            | Instr::Const { succ, .. }
            | Instr::Move { succ, .. }
            | Instr::Op { succ, .. } => f(*succ),
            Instr::Branch { if_true, if_false, .. } => {
                f(*if_true);
                f(*if_false);
            }
            Instr::Return { .. } => {}
        }
    }

    /// The register written by this instruction, if any.
    pub fn dst(&self) -> Option<Reg> {
        match self {
            Instr::Const { dst, .. } | Instr::Move { dst, .. } | Instr::Op { dst, .. } => {
                Some(*dst)
            }
            _ => None,
        }
    }
}

/// A CFG function: parameters, entry location, and a canonical trie from
/// locations to instructions.
#[derive(Clone, PartialEq, Debug)]
pub struct Function {
    pub name: String,
    pub params: Vec<Reg>,
    pub entry: Loc,
    pub code: PTrie<Instr>,
}

impl Function {
    pub fn instr(&self, at: Loc) -> Option<&Instr> {
        self.code.get(at.key())
    }

    /// All locations in ascending order.
    pub fn locations(&self) -> Vec<Loc> {
        self.code.bindings().iter().map(|&(k, _)| Loc(k)).collect()
    }

    /// The largest register index mentioned anywhere (0 if none).
    pub fn max_reg(&self) -> u32 {
        let mut m = self.params.iter().map(|r| r.0).max().unwrap_or(0);
        for (_, i) in self.code.bindings() {
            let mut touch = |r: Reg| m = m.max(r.0);
            match i {
                Instr::Nop { .. } => {}
                Instr::Const { dst, .. } => touch(*dst),
                Instr::Move { dst, src, .. } => {
                    touch(*dst);
                    touch(*src);
                }
                Instr::Op { dst, src1, src2, .. } => {
                    touch(*dst);
                    touch(*src1);
                    touch(*src2);
                }
                Instr::Branch { src1, src2, .. } => {
                    touch(*src1);
                    touch(*src2);
                }
                Instr::Return { src } => touch(*src),
            }
        }
        m
    }
}

impl std::fmt::Display for Function {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&print(self))
    }
}
