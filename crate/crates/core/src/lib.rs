//! Static-analysis and translation-validation toolkit for a small
//! register-transfer IR.
//!
//! The crate is organized around a few data structures that make global
//! operations on analysis state cheap:
//!
//! * [`ptrie`]: canonical persistent tries mapping positive integers to
//!   values, with opportunistic sharing and sound pointer-identity fast
//!   paths. Used as the environment structure of non-relational analyses.
//! * [`intern`]: a hash-consing arena issuing one handle per distinct node
//!   shape, plus memoization tables for binary operations.
//! * [`hset`]: hash-consed canonical sets of positive integers built on the
//!   arena; set equality is handle equality.
//! * [`ir`]: the register-transfer IR itself, with a textual format, a
//!   concrete interpreter and CFG utilities.
//! * [`interval`]: the interval abstract domain over unbounded integers.
//! * [`solver`]: a workset fixpoint engine with widening and fuel, a
//!   standalone inductiveness checker, and the dataflow-facts engine used
//!   for common-subexpression elimination.
//! * [`symexec`]: symbolic-execution equivalence checking of straight-line
//!   blocks over hash-consed term DAGs.
//! * [`poly`]: constraint-only convex polyhedra with Farkas-certificate
//!   checking and a certificate-emitting Fourier-Motzkin projection.
//! * [`scaling`]: deterministic counter-based scaling measurements.

pub mod hset;
pub mod intern;
pub mod interval;
pub mod ir;
pub mod poly;
pub mod ptrie;
pub mod scaling;
pub mod solver;
pub mod symexec;
