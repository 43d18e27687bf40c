//! Invariant files: the JSON boundary between the oracle and the checker.
//!
//! ```json
//! {
//!   "function": "f",
//!   "kind": "interval",
//!   "entry_state": {"r1": [0, 1]},
//!   "states": {"1": {"r1": [0, 1], "r3": [-1, 1]}, "2": null},
//!   "fact_table": {"1": {"dst": "r3", "op": "add", "src1": "r1", "src2": "r2"}}
//! }
//! ```
//!
//! `kind` is `"interval"` or `"facts"`; `entry_state` and the per-location
//! states follow the same shape (`{"facts": [i, ...]}` for facts), with
//! `null` for an unreached location. Interval bounds are JSON numbers when
//! they fit in 64 bits, decimal strings otherwise, and the strings
//! `"-inf"`/`"+inf"` for missing bounds. `fact_table` appears only for
//! facts invariants and maps dense indices (from 1) to facts. Any other
//! section — in particular a `kill` table — is ignored: the checker
//! rebuilds what it needs.

use super::facts::{Fact, FactState};
use super::Invariant;
use crate::hset::HSetArena;
use crate::interval::{AbsState, Bound, Interval};
use crate::ir::{text::parse_reg_name, BinOp, Function, Loc, Reg};
use crate::ptrie::PTrie;
use num_bigint::BigInt;
use serde_json::{json, Map, Value};

fn bound_to_json(b: &Bound) -> Value {
    match b {
        Bound::NegInf => Value::String("-inf".into()),
        Bound::PosInf => Value::String("+inf".into()),
        Bound::Int(n) => match i64::try_from(n) {
            Ok(v) => json!(v),
            Err(_) => Value::String(n.to_string()),
        },
    }
}

fn bound_from_json(v: &Value) -> Result<Bound, String> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Bound::Int(BigInt::from(i)))
            } else if let Some(u) = n.as_u64() {
                Ok(Bound::Int(BigInt::from(u)))
            } else {
                Err(format!("interval bound {} is not an integer", n))
            }
        }
        Value::String(s) => match s.as_str() {
            "-inf" => Ok(Bound::NegInf),
            "+inf" => Ok(Bound::PosInf),
            d => d
                .parse::<BigInt>()
                .map(Bound::Int)
                .map_err(|_| format!("bad interval bound {:?}", d)),
        },
        other => Err(format!("bad interval bound {}", other)),
    }
}

fn interval_to_json(i: &Interval) -> Value {
    Value::Array(vec![bound_to_json(i.lo()), bound_to_json(i.hi())])
}

fn interval_from_json(v: &Value) -> Result<Interval, String> {
    let Value::Array(parts) = v else {
        return Err(format!("expected [lo, hi], got {}", v));
    };
    if parts.len() != 2 {
        return Err(format!("expected [lo, hi], got {}", v));
    }
    let lo = bound_from_json(&parts[0])?;
    let hi = bound_from_json(&parts[1])?;
    if lo == Bound::PosInf || hi == Bound::NegInf || lo > hi {
        return Err(format!("empty interval {}", v));
    }
    Ok(Interval::new(lo, hi))
}

fn reg_from_key(key: &str) -> Result<Reg, String> {
    parse_reg_name(key).ok_or_else(|| format!("bad register key {:?}", key))
}

/// `{"r<k>": [lo, hi], ...}`
pub fn env_to_json(s: &AbsState) -> Value {
    match s {
        AbsState::Bottom => Value::Null,
        AbsState::Env(env) => {
            let mut map = Map::new();
            for (k, iv) in env.bindings() {
                map.insert(format!("r{}", k), interval_to_json(iv));
            }
            Value::Object(map)
        }
    }
}

pub fn env_from_json(v: &Value) -> Result<AbsState, String> {
    match v {
        Value::Null => Ok(AbsState::Bottom),
        Value::Object(map) => {
            let mut env = PTrie::empty();
            for (key, val) in map {
                let r = reg_from_key(key)?;
                let iv = interval_from_json(val)?;
                if !iv.is_full() {
                    env = env.set(r.key(), iv);
                }
            }
            Ok(AbsState::Env(env))
        }
        other => Err(format!("expected a register environment, got {}", other)),
    }
}

fn fact_state_to_json(s: &FactState, sets: &HSetArena) -> Value {
    match s {
        FactState::Unreached => Value::Null,
        FactState::Known(set) => json!({ "facts": sets.elements(*set) }),
    }
}

fn fact_state_from_json(v: &Value, sets: &mut HSetArena) -> Result<FactState, String> {
    match v {
        Value::Null => Ok(FactState::Unreached),
        Value::Object(map) => {
            let Some(Value::Array(items)) = map.get("facts") else {
                return Err(format!("expected {{\"facts\": [...]}}, got {}", v));
            };
            let mut set = sets.empty();
            for item in items {
                let idx = item
                    .as_u64()
                    .and_then(|u| u32::try_from(u).ok())
                    .filter(|&u| u >= 1)
                    .ok_or_else(|| format!("bad fact index {}", item))?;
                set = sets.add(set, idx);
            }
            Ok(FactState::Known(set))
        }
        other => Err(format!("expected a fact state, got {}", other)),
    }
}

fn fact_to_json(f: &Fact) -> Value {
    json!({
        "dst": f.dst.to_string(),
        "op": f.op.name(),
        "src1": f.src1.to_string(),
        "src2": f.src2.to_string(),
    })
}

fn fact_from_json(v: &Value) -> Result<Fact, String> {
    let get = |field: &str| -> Result<&str, String> {
        v.get(field)
            .and_then(Value::as_str)
            .ok_or_else(|| format!("fact entry missing {:?}: {}", field, v))
    };
    let dst = reg_from_key(get("dst")?)?;
    let op = BinOp::from_name(get("op")?).ok_or_else(|| format!("bad op in fact {}", v))?;
    let src1 = reg_from_key(get("src1")?)?;
    let src2 = reg_from_key(get("src2")?)?;
    Ok(Fact { dst, op, src1, src2 })
}

/// Serializes an interval invariant.
pub fn interval_invariant_to_json(
    function: &str,
    entry_state: &AbsState,
    inv: &Invariant<AbsState>,
) -> Value {
    let mut states = Map::new();
    for (at, s) in inv.entries() {
        states.insert(at.to_string(), env_to_json(s));
    }
    json!({
        "function": function,
        "kind": "interval",
        "entry_state": env_to_json(entry_state),
        "states": Value::Object(states),
    })
}

/// Serializes a facts invariant together with its fact table.
pub fn facts_invariant_to_json(
    function: &str,
    entry_state: &FactState,
    inv: &Invariant<FactState>,
    facts: &[Fact],
    sets: &HSetArena,
) -> Value {
    let mut states = Map::new();
    for (at, s) in inv.entries() {
        states.insert(at.to_string(), fact_state_to_json(s, sets));
    }
    let mut table = Map::new();
    for (i, f) in facts.iter().enumerate() {
        table.insert((i + 1).to_string(), fact_to_json(f));
    }
    json!({
        "function": function,
        "kind": "facts",
        "entry_state": fact_state_to_json(entry_state, sets),
        "states": Value::Object(states),
        "fact_table": Value::Object(table),
    })
}

/// The `kind` field of an invariant file.
pub fn invariant_kind(v: &Value) -> Result<&str, String> {
    v.get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| "invariant file has no \"kind\"".to_string())
}

fn states_map(v: &Value) -> Result<&Map<String, Value>, String> {
    v.get("states")
        .and_then(Value::as_object)
        .ok_or_else(|| "invariant file has no \"states\" object".to_string())
}

fn parse_loc_key(key: &str) -> Result<Loc, String> {
    key.parse::<u32>()
        .ok()
        .filter(|&k| k >= 1)
        .map(Loc::new)
        .ok_or_else(|| format!("bad location key {:?}", key))
}

/// Loaded interval invariant: function name, claimed entry state, states.
#[derive(Debug)]
pub struct IntervalInvariantFile {
    pub function: String,
    pub entry_state: AbsState,
    pub invariant: Invariant<AbsState>,
}

pub fn interval_invariant_from_json(v: &Value) -> Result<IntervalInvariantFile, String> {
    if invariant_kind(v)? != "interval" {
        return Err("not an interval invariant".into());
    }
    let function = v
        .get("function")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let entry_state = env_from_json(
        v.get("entry_state")
            .ok_or_else(|| "invariant file has no \"entry_state\"".to_string())?,
    )?;
    let mut states = PTrie::empty();
    for (key, val) in states_map(v)? {
        let at = parse_loc_key(key)?;
        states = states.set(at.key(), env_from_json(val)?);
    }
    Ok(IntervalInvariantFile { function, entry_state, invariant: Invariant::new(states) })
}

/// Loaded facts invariant; the states are interned into `sets`.
#[derive(Debug)]
pub struct FactsInvariantFile {
    pub function: String,
    pub entry_state: FactState,
    pub invariant: Invariant<FactState>,
    pub facts: Vec<Fact>,
}

pub fn facts_invariant_from_json(
    v: &Value,
    sets: &mut HSetArena,
) -> Result<FactsInvariantFile, String> {
    if invariant_kind(v)? != "facts" {
        return Err("not a facts invariant".into());
    }
    let function = v
        .get("function")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let entry_state = fact_state_from_json(
        v.get("entry_state")
            .ok_or_else(|| "invariant file has no \"entry_state\"".to_string())?,
        sets,
    )?;
    let mut states = PTrie::empty();
    for (key, val) in states_map(v)? {
        let at = parse_loc_key(key)?;
        states = states.set(at.key(), fact_state_from_json(val, sets)?);
    }
    // the fact table must be dense from 1
    let table = v
        .get("fact_table")
        .and_then(Value::as_object)
        .ok_or_else(|| "facts invariant has no \"fact_table\"".to_string())?;
    let mut facts = vec![None; table.len()];
    for (key, val) in table {
        let idx: usize = key
            .parse()
            .map_err(|_| format!("bad fact index {:?}", key))?;
        if idx < 1 || idx > table.len() {
            return Err(format!(
                "fact indices must be dense from 1; {} is out of range for {} facts",
                idx,
                table.len()
            ));
        }
        facts[idx - 1] = Some(fact_from_json(val)?);
    }
    let facts = facts
        .into_iter()
        .collect::<Option<Vec<Fact>>>()
        .expect("dense by the range check");
    Ok(FactsInvariantFile { function, entry_state, invariant: Invariant::new(states), facts })
}

/// Checks that an invariant covers every location of `f` (the checkers
/// report this too, but a file-level message is friendlier).
pub fn covers_function<S: Clone>(inv: &Invariant<S>, f: &Function) -> Result<(), String> {
    for l in f.locations() {
        if inv.state(l).is_none() {
            return Err(format!("invariant has no state for location {}", l));
        }
    }
    Ok(())
}
