// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use crate::dsl::{AggFn, BinOp, Func};
use crate::graph::{NodeId, Store, Value, WorldId};
use crate::schema::{CExpr, MemberId};

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 86_400_000;

/// Evaluates a compiled expression for node `n` at time `t`. Inputs are
/// read with latest-at-or-before semantics; any missing input fails.
pub fn eval(store: &Store, w: WorldId, n: NodeId, e: &CExpr, t: i64) -> Result<Value, String> {
    let v = match e {
        CExpr::Double(x) => Value::Double(*x),
        CExpr::Long(x) => Value::Long(*x),
        CExpr::Bool(x) => Value::Bool(*x),
        CExpr::Str(s) => Value::Str(s.clone()),
        CExpr::Timestamp => Value::Long(t),
        CExpr::Local(m) => read(store, w, n, *m, t)?,
        CExpr::Path(rel, attr) => {
            let targets = store.links(w, n, *rel, t, u64::MAX);
            let Some(&target) = targets.first() else {
                return Err(format!("no target linked through {} at {t}", store.schema().qualified(*rel)));
            };
            read(store, w, target, *attr, t)?
        }
        CExpr::Agg(f, rel, attr) => {
            let mut vals = Vec::new();
            for target in store.links(w, n, *rel, t, u64::MAX) {
                vals.push(read(store, w, target, *attr, t)?);
            }
            aggregate(*f, &vals)?
        }
        CExpr::Neg(x) => match eval(store, w, n, x, t)? {
            Value::Long(a) => Value::Long(a.checked_neg().ok_or("integer overflow")?),
            Value::Double(a) => Value::Double(-a),
            other => return Err(format!("cannot negate {other}")),
        },
        CExpr::Binary(op, a, b) => {
            let a = eval(store, w, n, a, t)?;
            let b = eval(store, w, n, b, t)?;
            binary(*op, &a, &b)?
        }
        CExpr::Call(f, x) => {
            let v = eval(store, w, n, x, t)?;
            match (f, v) {
                (Func::Hours, Value::Long(ms)) => Value::Long(ms.div_euclid(HOUR_MS)),
                (Func::Days, Value::Long(ms)) => Value::Long(ms.div_euclid(DAY_MS)),
                (Func::Abs, Value::Long(a)) => Value::Long(a.checked_abs().ok_or("integer overflow")?),
                (Func::Abs, Value::Double(a)) => Value::Double(a.abs()),
                (f, v) => return Err(format!("{} cannot take {v}", f.name())),
            }
        }
    };
    match v {
        Value::Double(x) if !x.is_finite() => Err("non-finite result".to_string()),
        v => Ok(v),
    }
}

fn read(store: &Store, w: WorldId, n: NodeId, m: MemberId, t: i64) -> Result<Value, String> {
    store
        .read_value(w, n, m, t)
        .ok_or_else(|| format!("no value for {} of {} at {t}", store.schema().qualified(m), store.node_label(n)))
}

fn aggregate(f: AggFn, vals: &[Value]) -> Result<Value, String> {
    let all_long = vals.iter().all(|v| matches!(v, Value::Long(_)));
    let nums: Vec<f64> = vals
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| format!("{} of non-numeric value {v}", f.name())))
        .collect::<Result<_, _>>()?;
    match f {
        AggFn::Sum if all_long => {
            let mut s: i64 = 0;
            for v in vals {
                if let Value::Long(x) = v {
                    s = s.checked_add(*x).ok_or("integer overflow")?;
                }
            }
            Ok(Value::Long(s))
        }
        AggFn::Sum => Ok(Value::Double(nums.iter().sum())),
        _ if vals.is_empty() => Err(format!("{} over no targets", f.name())),
        AggFn::Avg => Ok(Value::Double(nums.iter().sum::<f64>() / nums.len() as f64)),
        AggFn::Max if all_long => Ok(Value::Long(
            vals.iter()
                .filter_map(|v| if let Value::Long(x) = v { Some(*x) } else { None })
                .max()
                .expect("non-empty"),
        )),
        AggFn::Max => Ok(Value::Double(nums.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
    }
}

fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, String> {
    if let (Value::Long(x), Value::Long(y)) = (a, b) {
        let r = match op {
            BinOp::Add => x.checked_add(*y),
            BinOp::Sub => x.checked_sub(*y),
            BinOp::Mul => x.checked_mul(*y),
            BinOp::Div if *y == 0 => return Err("division by zero".to_string()),
            BinOp::Div => x.checked_div(*y),
        };
        return r.map(Value::Long).ok_or_else(|| "integer overflow".to_string());
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Err(format!("operator {} needs numbers, got {a} and {b}", op.symbol()));
    };
    Ok(Value::Double(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div if y == 0.0 => return Err("division by zero".to_string()),
        BinOp::Div => x / y,
    }))
}
