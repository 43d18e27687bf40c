//! Concrete small-step interpreter over unbounded integers.
//!
//! This is the differential-testing oracle: deterministic in
//! `(function, inputs, fuel)`. Division truncates toward zero and traps on
//! a zero divisor; there is no overflow.

use super::{BinOp, Function, Instr, Loc};
use num_bigint::BigInt;
use num_traits::Zero;
use std::fmt;

/// Result of a bounded run.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Outcome {
    Returned(BigInt),
    Trapped(Loc),
    OutOfFuel,
}

/// Contract violations; distinct from in-language outcomes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ExecError {
    ArityMismatch { params: usize, inputs: usize },
    UnwrittenRegister { reg: super::Reg, at: Loc },
    UndefinedLocation(Loc),
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecError::ArityMismatch { params, inputs } => {
                write!(f, "function takes {} parameters, got {} inputs", params, inputs)
            }
            ExecError::UnwrittenRegister { reg, at } => {
                write!(f, "read of unwritten register {} at location {}", reg, at)
            }
            ExecError::UndefinedLocation(at) => write!(f, "undefined location {}", at),
        }
    }
}

impl std::error::Error for ExecError {}

pub fn interpret(f: &Function, inputs: &[BigInt], fuel: u64) -> Result<Outcome, ExecError> {
    interpret_observed(f, inputs, fuel, |_, _| {})
}

/// Like [`interpret`], calling `observe(loc, regs)` before executing each
/// instruction; `regs[k]` is the value of `r<k>`, `None` if unwritten.
pub fn interpret_observed(
    f: &Function,
    inputs: &[BigInt],
    fuel: u64,
    mut observe: impl FnMut(Loc, &[Option<BigInt>]),
) -> Result<Outcome, ExecError> {
    if inputs.len() != f.params.len() {
        return Err(ExecError::ArityMismatch { params: f.params.len(), inputs: inputs.len() });
    }
    let mut regs: Vec<Option<BigInt>> = vec![None; f.max_reg() as usize + 1];
    for (r, v) in f.params.iter().zip(inputs) {
        regs[r.key() as usize] = Some(v.clone());
    }
    let mut at = f.entry;
    let mut steps = 0u64;
    loop {
        if steps == fuel {
            return Ok(Outcome::OutOfFuel);
        }
        steps += 1;
        let instr = f.instr(at).ok_or(ExecError::UndefinedLocation(at))?;
        observe(at, &regs);
        let read = |regs: &[Option<BigInt>], r: super::Reg| -> Result<BigInt, ExecError> {
            regs[r.key() as usize]
                .clone()
                .ok_or(ExecError::UnwrittenRegister { reg: r, at })
        };
        match instr {
            Instr::Nop { succ } => at = *succ,
            Instr::Const { dst, value, succ } => {
                regs[dst.key() as usize] = Some(value.clone());
                at = *succ;
            }
            Instr::Move { dst, src, succ } => {
                let v = read(&regs, *src)?;
                regs[dst.key() as usize] = Some(v);
                at = *succ;
            }
            Instr::Op { dst, op, src1, src2, succ } => {
                let a = read(&regs, *src1)?;
                let b = read(&regs, *src2)?;
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.is_zero() {
                            return Ok(Outcome::Trapped(at));
                        }
                        a / b // BigInt division truncates toward zero
                    }
                };
                regs[dst.key() as usize] = Some(v);
                at = *succ;
            }
            Instr::Branch { cmp, src1, src2, if_true, if_false } => {
                let a = read(&regs, *src1)?;
                let b = read(&regs, *src2)?;
                at = if cmp.eval(&a, &b) { *if_true } else { *if_false };
            }
            Instr::Return { src } => {
                return Ok(Outcome::Returned(read(&regs, *src)?));
            }
        }
    }
}
