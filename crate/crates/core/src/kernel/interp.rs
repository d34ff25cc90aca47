use std::cmp::Ordering;

use super::ast::{BinaryOp, Builtin, Expr, Literal, Program, Stmt, UnaryOp};
use super::error::{KernelError, RuntimeError, RuntimeErrorKind as K};
use super::parser::parse;
use super::value::{Environment, Value};

/// Largest list or string a cell may build.
pub const MAX_SEQUENCE_LEN: usize = 1_000_000;

/// What a single cell execution displays.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct CellOutput {
    pub text: String,
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecResult {
    pub env: Environment,
    pub output: CellOutput,
    pub failure: Option<KernelError>,
}

/// Runs one cell against `env`.
///
/// Statements run in order; a runtime error stops the cell but bindings made
/// before it stay. The output holds every `print` line, then the repr of the
/// last statement's value when that statement is a bare expression (unless it
/// is `none`), then the error text if any.
pub fn exec_one(mut env: Environment, source: &str) -> ExecResult {
    let program = match parse(source) {
        Ok(p) => p,
        Err(e) => {
            return ExecResult {
                env,
                output: CellOutput {
                    text: e.to_string(),
                    error: true,
                },
                failure: Some(e.into()),
            }
        }
    };
    let mut lines = Vec::new();
    let failure = run_program(&program, &mut env, &mut lines).err();
    if let Some(e) = &failure {
        lines.push(e.to_string());
    }
    ExecResult {
        env,
        output: CellOutput {
            text: lines.join("\n"),
            error: failure.is_some(),
        },
        failure: failure.map(KernelError::Runtime),
    }
}

/// Replays `history` from an empty environment. `outputs[n]` is the output of
/// the `n+1`-th cell.
pub fn exec_history<S: AsRef<str>>(history: &[S]) -> (Environment, Vec<CellOutput>) {
    let mut env = Environment::new();
    let mut outputs = Vec::with_capacity(history.len());
    for source in history {
        let r = exec_one(env, source.as_ref());
        env = r.env;
        outputs.push(r.output);
    }
    (env, outputs)
}

fn run_program(
    program: &Program,
    env: &mut Environment,
    lines: &mut Vec<String>,
) -> Result<(), RuntimeError> {
    let last = program.statements.len().saturating_sub(1);
    for (i, stmt) in program.statements.iter().enumerate() {
        match stmt {
            Stmt::Assign(name, e) => {
                let v = eval(e, env)?;
                env.set(name.clone(), v);
            }
            Stmt::Delete(name) => {
                if env.remove(name).is_none() {
                    return Err(name_error(name));
                }
            }
            Stmt::Print(e) => lines.push(eval(e, env)?.display()),
            Stmt::Expr(e) => {
                let v = eval(e, env)?;
                if i == last && v != Value::None {
                    lines.push(v.repr());
                }
            }
        }
    }
    Ok(())
}

fn name_error(name: &str) -> RuntimeError {
    RuntimeError::new(K::NameError, name)
}

fn type_error(message: impl Into<String>) -> RuntimeError {
    RuntimeError::new(K::TypeError, message)
}

fn overflow() -> RuntimeError {
    RuntimeError::new(K::OverflowError, "integer overflow")
}

fn eval(e: &Expr, env: &Environment) -> Result<Value, RuntimeError> {
    match e {
        Expr::Literal(lit) => Ok(match lit {
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(f) => Value::Float(*f),
            Literal::Str(s) => Value::Str(s.clone()),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::None => Value::None,
        }),
        Expr::Name(name) => env.get(name).cloned().ok_or_else(|| name_error(name)),
        Expr::List(items) => Ok(Value::List(
            items.iter().map(|i| eval(i, env)).collect::<Result<_, _>>()?,
        )),
        Expr::Unary(UnaryOp::Neg, inner) => match eval(inner, env)? {
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
            Value::Float(f) => Ok(Value::Float(-f)),
            v => Err(type_error(format!("bad operand type for unary -: '{}'", v.type_name()))),
        },
        Expr::Unary(UnaryOp::Not, inner) => match eval(inner, env)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            v => Err(type_error(format!("'not' requires bool, got '{}'", v.type_name()))),
        },
        Expr::Binary(op @ (BinaryOp::And | BinaryOp::Or), lhs, rhs) => {
            let short_circuit_on = *op == BinaryOp::Or;
            let l = expect_bool(eval(lhs, env)?, op.symbol())?;
            if l == short_circuit_on {
                return Ok(Value::Bool(l));
            }
            Ok(Value::Bool(expect_bool(eval(rhs, env)?, op.symbol())?))
        }
        Expr::Binary(op, lhs, rhs) => {
            let l = eval(lhs, env)?;
            let r = eval(rhs, env)?;
            binary(*op, l, r)
        }
        Expr::Index(target, index) => {
            let t = eval(target, env)?;
            let i = eval(index, env)?;
            index_value(t, i)
        }
        Expr::Call(builtin, args) => {
            let args = args.iter().map(|a| eval(a, env)).collect::<Result<Vec<_>, _>>()?;
            call(*builtin, args)
        }
    }
}

fn expect_bool(v: Value, op: &str) -> Result<bool, RuntimeError> {
    match v {
        Value::Bool(b) => Ok(b),
        v => Err(type_error(format!("'{op}' requires bool operands, got '{}'", v.type_name()))),
    }
}

fn unsupported(op: BinaryOp, l: &Value, r: &Value) -> RuntimeError {
    type_error(format!(
        "unsupported operand types for {}: '{}' and '{}'",
        op.symbol(),
        l.type_name(),
        r.type_name()
    ))
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn check_len(len: usize) -> Result<(), RuntimeError> {
    if len > MAX_SEQUENCE_LEN {
        Err(RuntimeError::new(K::ValueError, "sequence too large"))
    } else {
        Ok(())
    }
}

fn binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, RuntimeError> {
    use BinaryOp::*;
    match op {
        Eq => return Ok(Value::Bool(loose_eq(&l, &r))),
        Ne => return Ok(Value::Bool(!loose_eq(&l, &r))),
        Lt | Le | Gt | Ge => {
            let ord = compare(&l, &r).ok_or_else(|| unsupported(op, &l, &r))?;
            let result = match ord {
                // NaN on either side: every ordering test is false.
                None => false,
                Some(o) => match op {
                    Lt => o == Ordering::Less,
                    Le => o != Ordering::Greater,
                    Gt => o == Ordering::Greater,
                    _ => o != Ordering::Less,
                },
            };
            return Ok(Value::Bool(result));
        }
        _ => {}
    }
    match (&l, &r) {
        (Value::Int(a), Value::Int(b)) => {
            let (a, b) = (*a, *b);
            match op {
                Add => a.checked_add(b).map(Value::Int).ok_or_else(overflow),
                Sub => a.checked_sub(b).map(Value::Int).ok_or_else(overflow),
                Mul => a.checked_mul(b).map(Value::Int).ok_or_else(overflow),
                Div if b == 0 => Err(RuntimeError::new(K::ZeroDivisionError, "division by zero")),
                Div => Ok(Value::Float(a as f64 / b as f64)),
                Mod if b == 0 => Err(RuntimeError::new(K::ZeroDivisionError, "modulo by zero")),
                Mod if b == -1 => Ok(Value::Int(0)),
                Mod => {
                    let r = a % b;
                    Ok(Value::Int(if r != 0 && (r < 0) != (b < 0) { r + b } else { r }))
                }
                _ => unreachable!(),
            }
        }
        (Value::Str(a), Value::Str(b)) if op == Add => {
            check_len(a.len() + b.len())?;
            Ok(Value::Str(format!("{a}{b}")))
        }
        (Value::List(a), Value::List(b)) if op == Add => {
            check_len(a.len() + b.len())?;
            Ok(Value::List(a.iter().chain(b).cloned().collect()))
        }
        _ => {
            let (Some(a), Some(b)) = (as_f64(&l), as_f64(&r)) else {
                return Err(unsupported(op, &l, &r));
            };
            let v = match op {
                Add => a + b,
                Sub => a - b,
                Mul => a * b,
                Div if b == 0.0 => {
                    return Err(RuntimeError::new(K::ZeroDivisionError, "division by zero"))
                }
                Div => a / b,
                Mod if b == 0.0 => {
                    return Err(RuntimeError::new(K::ZeroDivisionError, "modulo by zero"))
                }
                Mod => {
                    let r = a % b;
                    if r != 0.0 && (r < 0.0) != (b < 0.0) {
                        r + b
                    } else {
                        r
                    }
                }
                _ => unreachable!(),
            };
            Ok(Value::Float(v))
        }
    }
}

/// `==` semantics: ints and floats compare numerically, containers
/// element-wise, mismatched types are unequal.
fn loose_eq(l: &Value, r: &Value) -> bool {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => a == b,
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
            compare(l, r) == Some(Some(Ordering::Equal))
        }
        (Value::List(a), Value::List(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| loose_eq(x, y))
        }
        _ => l == r,
    }
}

/// `None` if the types are not orderable; `Some(None)` if a NaN is involved.
fn compare(l: &Value, r: &Value) -> Option<Option<Ordering>> {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => Some(Some(a.cmp(b))),
        (Value::Int(a), Value::Float(b)) => Some(cmp_int_float(*a, *b)),
        (Value::Float(a), Value::Int(b)) => Some(cmp_int_float(*b, *a).map(Ordering::reverse)),
        (Value::Float(a), Value::Float(b)) => Some(a.partial_cmp(b)),
        (Value::Str(a), Value::Str(b)) => Some(Some(a.cmp(b))),
        _ => None,
    }
}

fn cmp_int_float(i: i64, f: f64) -> Option<Ordering> {
    if f.is_nan() {
        return None;
    }
    // Exact comparison: compare against the float's integer part first.
    let t = f.trunc();
    if t < -9.223_372_036_854_776e18 {
        return Some(Ordering::Greater);
    }
    if t >= 9.223_372_036_854_776e18 {
        return Some(Ordering::Less);
    }
    match i.cmp(&(t as i64)) {
        Ordering::Equal => 0.0.partial_cmp(&(f - t)),
        o => Some(o),
    }
}

fn normalize_index(i: i64, len: usize) -> Result<usize, RuntimeError> {
    let len = len as i64;
    let idx = if i < 0 { i + len } else { i };
    if (0..len).contains(&idx) {
        Ok(idx as usize)
    } else {
        Err(RuntimeError::new(K::IndexError, "index out of range"))
    }
}

fn index_value(target: Value, index: Value) -> Result<Value, RuntimeError> {
    let Value::Int(i) = index else {
        return Err(type_error(format!("indices must be int, not '{}'", index.type_name())));
    };
    match target {
        Value::List(mut items) => {
            let idx = normalize_index(i, items.len())?;
            Ok(items.swap_remove(idx))
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            let idx = normalize_index(i, chars.len())?;
            Ok(Value::Str(chars[idx].to_string()))
        }
        v => Err(type_error(format!("'{}' is not indexable", v.type_name()))),
    }
}

fn arity(b: Builtin, args: &[Value], allowed: std::ops::RangeInclusive<usize>) -> Result<(), RuntimeError> {
    if allowed.contains(&args.len()) {
        return Ok(());
    }
    let expected = if allowed.start() == allowed.end() {
        format!("{}", allowed.start())
    } else if *allowed.end() == usize::MAX {
        format!("at least {}", allowed.start())
    } else {
        format!("{} to {}", allowed.start(), allowed.end())
    };
    Err(type_error(format!(
        "{}() takes {expected} argument(s) ({} given)",
        b.name(),
        args.len()
    )))
}

fn call(b: Builtin, mut args: Vec<Value>) -> Result<Value, RuntimeError> {
    match b {
        Builtin::Len => {
            arity(b, &args, 1..=1)?;
            match &args[0] {
                Value::List(items) => Ok(Value::Int(items.len() as i64)),
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                v => Err(type_error(format!("object of type '{}' has no len()", v.type_name()))),
            }
        }
        Builtin::Sum => {
            arity(b, &args, 1..=1)?;
            let Value::List(items) = args.pop().unwrap() else {
                return Err(type_error("sum() requires a list"));
            };
            items
                .into_iter()
                .try_fold(Value::Int(0), |acc, v| match v {
                    Value::Int(_) | Value::Float(_) => binary(BinaryOp::Add, acc, v),
                    v => Err(type_error(format!("sum() cannot add '{}'", v.type_name()))),
                })
        }
        Builtin::Min | Builtin::Max => {
            arity(b, &args, 1..=usize::MAX)?;
            let items = if args.len() == 1 {
                match args.pop().unwrap() {
                    Value::List(items) => items,
                    v => return Err(type_error(format!("'{}' is not iterable", v.type_name()))),
                }
            } else {
                args
            };
            let mut iter = items.into_iter();
            let Some(mut best) = iter.next() else {
                return Err(RuntimeError::new(
                    K::ValueError,
                    format!("{}() arg is an empty sequence", b.name()),
                ));
            };
            let want = if b == Builtin::Min { Ordering::Less } else { Ordering::Greater };
            for v in iter {
                let ord = compare(&v, &best)
                    .ok_or_else(|| type_error(format!(
                        "'{}' and '{}' cannot be ordered",
                        v.type_name(),
                        best.type_name()
                    )))?;
                if ord == Some(want) {
                    best = v;
                }
            }
            Ok(best)
        }
        Builtin::Range => {
            arity(b, &args, 1..=3)?;
            let ints = args
                .iter()
                .map(|v| match v {
                    Value::Int(i) => Ok(*i),
                    v => Err(type_error(format!("range() requires int, not '{}'", v.type_name()))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (start, stop, step) = match ints[..] {
                [stop] => (0, stop, 1),
                [start, stop] => (start, stop, 1),
                [start, stop, step] => (start, stop, step),
                _ => unreachable!(),
            };
            if step == 0 {
                return Err(RuntimeError::new(K::ValueError, "range() step must not be zero"));
            }
            let span = if step > 0 {
                (stop as i128 - start as i128).max(0)
            } else {
                (start as i128 - stop as i128).max(0)
            };
            let step_abs = (step as i128).abs();
            let count = (span + step_abs - 1) / step_abs;
            check_len(count as usize)?;
            Ok(Value::List(
                (0..count)
                    .map(|k| Value::Int((start as i128 + k * step as i128) as i64))
                    .collect(),
            ))
        }
        Builtin::Str => {
            arity(b, &args, 1..=1)?;
            Ok(Value::Str(args[0].display()))
        }
        Builtin::Abs => {
            arity(b, &args, 1..=1)?;
            match &args[0] {
                Value::Int(i) => i.checked_abs().map(Value::Int).ok_or_else(overflow),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                v => Err(type_error(format!("bad operand type for abs(): '{}'", v.type_name()))),
            }
        }
        Builtin::Concat => {
            arity(b, &args, 1..=usize::MAX)?;
            let mut iter = args.into_iter();
            let mut acc = iter.next().unwrap();
            if !matches!(acc, Value::List(_) | Value::Str(_)) {
                return Err(type_error(format!("concat() cannot join '{}'", acc.type_name())));
            }
            for v in iter {
                if std::mem::discriminant(&v) != std::mem::discriminant(&acc) {
                    return Err(type_error(format!(
                        "concat() cannot join '{}' and '{}'",
                        acc.type_name(),
                        v.type_name()
                    )));
                }
                acc = binary(BinaryOp::Add, acc, v)?;
            }
            Ok(acc)
        }
    }
}
