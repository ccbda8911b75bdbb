// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Serialize, Serializer};

use crate::dsl::PrimType;

/// A scalar attribute value.
#[derive(Debug, Clone)]
pub enum Value {
    Double(f64),
    Long(i64),
    Bool(bool),
    Str(String),
}

impl Value {
    pub fn prim_type(&self) -> PrimType {
        match self {
            Value::Double(_) => PrimType::Double,
            Value::Long(_) => PrimType::Long,
            Value::Bool(_) => PrimType::Bool,
            Value::Str(_) => PrimType::String,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Double(v) => Some(*v),
            Value::Long(v) => Some(*v as f64),
            _ => None,
        }
    }

    /// Converts to a member's declared type; Long widens to Double.
    pub fn coerce(self, ty: PrimType) -> Option<Value> {
        match (self, ty) {
            (Value::Long(v), PrimType::Double) => Some(Value::Double(v as f64)),
            (v, t) if v.prim_type() == t => Some(v),
            _ => None,
        }
    }

    /// Parses text as a value of type `ty`.
    pub fn parse(text: &str, ty: PrimType) -> Option<Value> {
        let s = text.trim();
        match ty {
            PrimType::Double => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Double),
            PrimType::Long => s.parse().ok().map(Value::Long),
            PrimType::Bool => s.parse().ok().map(Value::Bool),
            PrimType::String => Some(Value::Str(text.to_string())),
        }
    }
}

/// Doubles compare by bit pattern, so stored states can be checked for
/// exact equality.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Double(a), Value::Double(b)) => a.to_bits() == b.to_bits(),
            (Value::Long(a), Value::Long(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Double(v) => write!(f, "{v}"),
            Value::Long(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => f.write_str(v),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Double(v) => s.serialize_f64(*v),
            Value::Long(v) => s.serialize_i64(*v),
            Value::Bool(v) => s.serialize_bool(*v),
            Value::Str(v) => s.serialize_str(v),
        }
    }
}
