//! Textual format: parser and printer.
//!
//! ```text
//! function := "func" name "(" reg ("," reg)* ")" "entry" int "{" (int ":" instr)* "}"
//! instr    := "nop" "->" int
//!           | reg ":=" int-literal "->" int
//!           | reg ":=" "move" reg "->" int
//!           | reg ":=" op reg reg "->" int
//!           | "if" cmp reg reg "->" int "," int
//!           | "return" reg
//! op  := add|sub|mul|div      cmp := eq|ne|lt|le|gt|ge      reg := "r" int
//! ```
//!
//! `#` starts a comment running to end of line. `print` emits one
//! instruction per line in ascending location order; `parse(print(f)) == f`
//! and printing a parsed canonical text reproduces it byte for byte.

use super::{BinOp, Cmp, Function, Instr, Loc, Reg};
use crate::ptrie::PTrie;
use num_bigint::BigInt;
use std::collections::BTreeMap;
use std::fmt;

/// Syntax or consistency error, with a 1-based source position.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, PartialEq, Debug)]
pub(crate) enum Tok {
    Ident(String),
    Int(BigInt),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Assign,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{}`", s),
            Tok::Int(n) => write!(f, "`{}`", n),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Assign => write!(f, "`:=`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

pub(crate) struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err<T>(&self, line: u32, col: u32, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.bump();
            } else if b == b'#' {
                while let Some(c) = self.bump() {
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Next token plus its start position.
    pub(crate) fn next(&mut self) -> Result<(Tok, u32, u32), ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(b) = self.peek() else {
            return Ok((Tok::Eof, line, col));
        };
        let tok = match b {
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b'{' => {
                self.bump();
                Tok::LBrace
            }
            b'}' => {
                self.bump();
                Tok::RBrace
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b':' => {
                self.bump();
                if self.peek() == Some(b'=') {
                    self.bump();
                    Tok::Assign
                } else {
                    Tok::Colon
                }
            }
            b'-' => {
                self.bump();
                match self.peek() {
                    Some(b'>') => {
                        self.bump();
                        Tok::Arrow
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let n = self.lex_digits();
                        Tok::Int(-n)
                    }
                    _ => return self.err(line, col, "expected `->` or a number after `-`"),
                }
            }
            d if d.is_ascii_digit() => Tok::Int(self.lex_digits()),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == b'_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            other => {
                return self.err(line, col, format!("unexpected character `{}`", other as char))
            }
        };
        Ok((tok, line, col))
    }

    fn lex_digits(&mut self) -> BigInt {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                self.bump();
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("digits are ascii")
            .parse()
            .expect("digit run parses as an integer")
    }
}

pub(crate) struct Parser<'a> {
    lexer: Lexer<'a>,
    ahead: Option<(Tok, u32, u32)>,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Parser { lexer: Lexer::new(src), ahead: None }
    }

    fn next(&mut self) -> Result<(Tok, u32, u32), ParseError> {
        match self.ahead.take() {
            Some(t) => Ok(t),
            None => self.lexer.next(),
        }
    }

    fn err<T>(&self, line: u32, col: u32, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let (tok, line, col) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            self.err(line, col, format!("expected {}, found {}", want, tok))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, u32, u32), ParseError> {
        let (tok, line, col) = self.next()?;
        match tok {
            Tok::Ident(s) => Ok((s, line, col)),
            other => self.err(line, col, format!("expected {}, found {}", what, other)),
        }
    }

    fn int(&mut self, what: &str) -> Result<(BigInt, u32, u32), ParseError> {
        let (tok, line, col) = self.next()?;
        match tok {
            Tok::Int(n) => Ok((n, line, col)),
            other => self.err(line, col, format!("expected {}, found {}", what, other)),
        }
    }

    fn positive(&mut self, what: &str) -> Result<(u32, u32, u32), ParseError> {
        let (n, line, col) = self.int(what)?;
        match u32::try_from(&n) {
            Ok(k) if k >= 1 => Ok((k, line, col)),
            _ => self.err(line, col, format!("{} must be a positive integer, got {}", what, n)),
        }
    }

    fn reg(&mut self) -> Result<(Reg, u32, u32), ParseError> {
        let (s, line, col) = self.ident("a register")?;
        match parse_reg_name(&s) {
            Some(r) => Ok((r, line, col)),
            None => self.err(line, col, format!("expected a register `r<k>`, found `{}`", s)),
        }
    }

    fn loc(&mut self) -> Result<(Loc, u32, u32), ParseError> {
        let (k, line, col) = self.positive("a location")?;
        Ok((Loc::new(k), line, col))
    }

    /// Parses the `func ... { ... }` body, leaving trailing tokens for the
    /// caller. Performs no CFG validation.
    pub(crate) fn function_raw(
        &mut self,
    ) -> Result<(String, Vec<Reg>, Loc, Vec<(Loc, Instr, u32, u32)>), ParseError> {
        let (kw, line, col) = self.ident("`func`")?;
        if kw != "func" {
            return self.err(line, col, format!("expected `func`, found `{}`", kw));
        }
        let (name, _, _) = self.ident("a function name")?;
        self.expect(Tok::LParen)?;
        let mut params = vec![self.reg()?.0];
        loop {
            let (tok, line, col) = self.next()?;
            match tok {
                Tok::Comma => params.push(self.reg()?.0),
                Tok::RParen => break,
                other => return self.err(line, col, format!("expected `,` or `)`, found {}", other)),
            }
        }
        let (kw, line, col) = self.ident("`entry`")?;
        if kw != "entry" {
            return self.err(line, col, format!("expected `entry`, found `{}`", kw));
        }
        let (entry, _, _) = self.loc()?;
        self.expect(Tok::LBrace)?;
        let mut instrs = Vec::new();
        loop {
            let (tok, line, col) = self.next()?;
            match tok {
                Tok::RBrace => break,
                Tok::Int(n) => {
                    let at = match u32::try_from(&n) {
                        Ok(k) if k >= 1 => Loc::new(k),
                        _ => {
                            return self.err(
                                line,
                                col,
                                format!("locations must be positive integers, got {}", n),
                            )
                        }
                    };
                    self.expect(Tok::Colon)?;
                    let instr = self.instr()?;
                    instrs.push((at, instr, line, col));
                }
                other => {
                    return self.err(line, col, format!("expected a location or `}}`, found {}", other))
                }
            }
        }
        Ok((name, params, entry, instrs))
    }

    fn instr(&mut self) -> Result<Instr, ParseError> {
        let (tok, line, col) = self.next()?;
        let Tok::Ident(head) = tok else {
            return self.err(line, col, format!("expected an instruction, found {}", tok));
        };
        match head.as_str() {
            "nop" => {
                self.expect(Tok::Arrow)?;
                Ok(Instr::Nop { succ: self.loc()?.0 })
            }
            "if" => {
                let (cname, cl, cc) = self.ident("a comparison")?;
                let Some(cmp) = Cmp::from_name(&cname) else {
                    return self.err(cl, cc, format!("unknown comparison `{}`", cname));
                };
                let src1 = self.reg()?.0;
                let src2 = self.reg()?.0;
                self.expect(Tok::Arrow)?;
                let if_true = self.loc()?.0;
                self.expect(Tok::Comma)?;
                let if_false = self.loc()?.0;
                Ok(Instr::Branch { cmp, src1, src2, if_true, if_false })
            }
            "return" => Ok(Instr::Return { src: self.reg()?.0 }),
            other => {
                let Some(dst) = parse_reg_name(other) else {
                    return self.err(line, col, format!("unknown instruction `{}`", other));
                };
                self.expect(Tok::Assign)?;
                let (tok, line, col) = self.next()?;
                match tok {
                    Tok::Int(value) => {
                        self.expect(Tok::Arrow)?;
                        Ok(Instr::Const { dst, value, succ: self.loc()?.0 })
                    }
                    Tok::Ident(word) => {
                        if word == "move" {
                            let src = self.reg()?.0;
                            self.expect(Tok::Arrow)?;
                            Ok(Instr::Move { dst, src, succ: self.loc()?.0 })
                        } else if let Some(op) = BinOp::from_name(&word) {
                            let src1 = self.reg()?.0;
                            let src2 = self.reg()?.0;
                            self.expect(Tok::Arrow)?;
                            Ok(Instr::Op { dst, op, src1, src2, succ: self.loc()?.0 })
                        } else {
                            self.err(line, col, format!("unknown operation `{}`", word))
                        }
                    }
                    other => self.err(line, col, format!("expected a value or operation, found {}", other)),
                }
            }
        }
    }

    pub(crate) fn expect_eof(&mut self) -> Result<(), ParseError> {
        let (tok, line, col) = self.next()?;
        if tok == Tok::Eof {
            Ok(())
        } else {
            self.err(line, col, format!("expected end of input, found {}", tok))
        }
    }
}

/// Raw parse of a block file: a function body followed by a `live:`
/// trailer listing registers. No CFG validation; the block rules live in
/// the symbolic-execution layer.
#[allow(clippy::type_complexity)]
pub(crate) fn parse_block_file(
    src: &str,
) -> Result<(String, Vec<Reg>, Loc, Vec<(Loc, Instr, u32, u32)>, Vec<Reg>), ParseError> {
    let mut p = Parser::new(src);
    let (name, params, entry, instrs) = p.function_raw()?;
    let (kw, line, col) = p.ident("`live`")?;
    if kw != "live" {
        return Err(ParseError { line, col, msg: format!("expected `live`, found `{}`", kw) });
    }
    p.expect(Tok::Colon)?;
    let mut live = Vec::new();
    loop {
        let (tok, line, col) = p.next()?;
        match tok {
            Tok::Eof => break,
            Tok::Ident(s) => match parse_reg_name(&s) {
                Some(r) => live.push(r),
                None => {
                    return Err(ParseError {
                        line,
                        col,
                        msg: format!("expected a register in the live list, found `{}`", s),
                    })
                }
            },
            Tok::Comma => continue,
            other => {
                return Err(ParseError {
                    line,
                    col,
                    msg: format!("expected a register or `,`, found {}", other),
                })
            }
        }
    }
    Ok((name, params, entry, instrs, live))
}

pub(crate) fn parse_reg_name(s: &str) -> Option<Reg> {
    let digits = s.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: u32 = digits.parse().ok()?;
    if k >= 1 {
        Some(Reg::new(k))
    } else {
        None
    }
}

/// Parses a complete function and validates the CFG: no duplicate
/// locations, every successor and the entry defined.
pub fn parse(src: &str) -> Result<Function, ParseError> {
    let mut p = Parser::new(src);
    let (name, params, entry, instrs) = p.function_raw()?;
    p.expect_eof()?;

    let mut seen: BTreeMap<Loc, (u32, u32)> = BTreeMap::new();
    let mut code = PTrie::empty();
    for (at, instr, line, col) in &instrs {
        if seen.insert(*at, (*line, *col)).is_some() {
            return Err(ParseError {
                line: *line,
                col: *col,
                msg: format!("duplicate location {}", at),
            });
        }
        code = code.set(at.key(), instr.clone());
    }
    for (at, instr, line, col) in &instrs {
        let mut missing = None;
        instr.for_each_succ(|s| {
            if code.get(s.key()).is_none() && missing.is_none() {
                missing = Some(s);
            }
        });
        if let Some(s) = missing {
            return Err(ParseError {
                line: *line,
                col: *col,
                msg: format!("undefined location {} (successor of {})", s, at),
            });
        }
    }
    if code.get(entry.key()).is_none() {
        return Err(ParseError {
            line: 1,
            col: 1,
            msg: format!("undefined location {} (entry)", entry),
        });
    }
    Ok(Function { name, params, entry, code })
}

fn print_instr(i: &Instr) -> String {
    match i {
        Instr::Nop { succ } => format!("nop -> {}", succ),
        Instr::Const { dst, value, succ } => format!("{} := {} -> {}", dst, value, succ),
        Instr::Move { dst, src, succ } => format!("{} := move {} -> {}", dst, src, succ),
        Instr::Op { dst, op, src1, src2, succ } => {
            format!("{} := {} {} {} -> {}", dst, op.name(), src1, src2, succ)
        }
        Instr::Branch { cmp, src1, src2, if_true, if_false } => {
            format!("if {} {} {} -> {}, {}", cmp.name(), src1, src2, if_true, if_false)
        }
        Instr::Return { src } => format!("return {}", src),
    }
}

/// Canonical text: one instruction per line, ascending locations.
pub fn print(f: &Function) -> String {
    let params: Vec<String> = f.params.iter().map(|r| r.to_string()).collect();
    let mut out = format!("func {}({}) entry {} {{\n", f.name, params.join(", "), f.entry);
    for (k, instr) in f.code.bindings() {
        out.push_str(&format!("  {}: {}\n", k, print_instr(instr)));
    }
    out.push_str("}\n");
    out
}
