use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// A runtime value of the cell language.
///
/// Equality is structural and total: floats compare by bit pattern, so
/// `NaN == NaN` and `0.0 != -0.0` at this level. The language's own `==`
/// operator uses numeric semantics instead (see the interpreter).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(#[serde(with = "float_bits")] f64),
    Str(String),
    List(Vec<Value>),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::None, Value::None) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::List(a), Value::List(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
        }
    }

    /// Canonical text form. For every value built from literals this is
    /// itself a valid expression that evaluates back to the value.
    pub fn repr(&self) -> String {
        let mut out = String::new();
        self.write_repr(&mut out);
        out
    }

    /// The text `print` writes: strings unquoted, everything else as `repr`.
    pub fn display(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.repr(),
        }
    }

    fn write_repr(&self, out: &mut String) {
        match self {
            Value::None => out.push_str("none"),
            Value::Bool(true) => out.push_str("true"),
            Value::Bool(false) => out.push_str("false"),
            Value::Int(i) => out.push_str(&i.to_string()),
            Value::Float(f) => out.push_str(&format_float(*f)),
            Value::Str(s) => write_quoted(s, out),
            Value::List(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    item.write_repr(out);
                }
                out.push(']');
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.repr())
    }
}

/// Shortest round-trip decimal; always carries a `.` or exponent so the text
/// lexes back as a float.
pub fn format_float(f: f64) -> String {
    // Debug formatting is the shortest representation that round-trips.
    format!("{f:?}")
}

fn write_quoted(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => out.push_str(&format!("\\u{{{:x}}}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

mod float_bits {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", value.to_bits()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16)
            .map(f64::from_bits)
            .map_err(|e| D::Error::custom(format!("bad float bits {text:?}: {e}")))
    }
}

/// Variable bindings of a kernel, in insertion order.
///
/// Equality compares bindings as a map; order is only observable through
/// iteration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Environment {
    bindings: IndexMap<String, Value>,
}

impl PartialEq for Environment {
    fn eq(&self, other: &Self) -> bool {
        self.bindings.len() == other.bindings.len()
            && self
                .bindings
                .iter()
                .all(|(k, v)| other.bindings.get(k) == Some(v))
    }
}

impl Eq for Environment {}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    /// Binds `name`; an existing binding keeps its position.
    pub fn set(&mut self, name: impl Into<String>, value: Value) {
        self.bindings.insert(name.into(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.bindings.shift_remove(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }
}

impl FromIterator<(String, Value)> for Environment {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Environment {
            bindings: iter.into_iter().collect(),
        }
    }
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_repr_is_shortest_round_trip() {
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(2.5e300), "2.5e300");
        assert_eq!(format_float(f64::INFINITY), "inf");
        for f in [0.1 + 0.2, 1.0 / 3.0, 123456.789e-20] {
            assert_eq!(format_float(f).parse::<f64>().unwrap(), f);
        }
    }

    #[test]
    fn structural_equality_is_total() {
        let nan = Value::Float(f64::NAN);
        assert_eq!(nan, nan.clone());
        assert_ne!(Value::Float(0.0), Value::Float(-0.0));
        assert_ne!(Value::Int(1), Value::Float(1.0));
    }

    #[test]
    fn repr_quotes_and_escapes_strings() {
        let v = Value::List(vec![Value::Str("a\"b\n".into()), Value::None, Value::Bool(true)]);
        assert_eq!(v.repr(), r#"["a\"b\n", none, true]"#);
        assert_eq!(Value::Str("hi".into()).display(), "hi");
    }

    #[test]
    fn value_serde_keeps_float_bits() {
        let v = Value::List(vec![Value::Float(-0.0), Value::Float(f64::NAN), Value::Int(-3)]);
        let text = serde_json::to_string(&v).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v, back);
        assert_eq!(
            serde_json::to_string(&Value::Float(1.0)).unwrap(),
            r#"{"float":"3ff0000000000000"}"#
        );
    }

    #[test]
    fn environment_keeps_insertion_order_and_compares_as_map() {
        let mut a = Environment::new();
        a.set("b", Value::Int(1));
        a.set("a", Value::Int(2));
        a.set("b", Value::Int(3));
        assert_eq!(a.names().collect::<Vec<_>>(), ["b", "a"]);
        let b: Environment = [("a".to_string(), Value::Int(2)), ("b".to_string(), Value::Int(3))]
            .into_iter()
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn identifier_grammar() {
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }
}
