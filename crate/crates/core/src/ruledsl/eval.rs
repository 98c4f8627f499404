use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::ast::{BinOp, Expr, Value};
use crate::glob::glob_match;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable ${0}")]
    UnboundVariable(String),
    #[error("type mismatch: `{op}` cannot take {left} and {right}")]
    TypeMismatch { op: &'static str, left: &'static str, right: &'static str },
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow in `{0}`")]
    Overflow(&'static str),
}

/// Variable lookup for expression evaluation.
pub trait Scope {
    fn lookup(&self, name: &str) -> Option<Value>;
}

impl Scope for BTreeMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

impl Scope for HashMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

fn mismatch(op: BinOp, l: &Value, r: &Value) -> EvalError {
    EvalError::TypeMismatch { op: op.symbol(), left: l.type_name(), right: r.type_name() }
}

fn expect_bool(op: &'static str, v: Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::TypeMismatch { op, left: other.type_name(), right: "bool" }),
    }
}

/// Strict left-to-right evaluation; `&&` and `||` short-circuit.
pub fn eval_expr(expr: &Expr, scope: &dyn Scope) -> Result<Value, EvalError> {
    match expr {
        Expr::Str(s) => Ok(Value::Str(s.clone())),
        Expr::Int(i) => Ok(Value::Int(*i)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Var(name) => scope.lookup(name).ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Expr::Not(inner) => Ok(Value::Bool(!expect_bool("!", eval_expr(inner, scope)?)?)),
        Expr::Binary { op: BinOp::And, lhs, rhs } => {
            if !expect_bool("&&", eval_expr(lhs, scope)?)? {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(expect_bool("&&", eval_expr(rhs, scope)?)?))
        }
        Expr::Binary { op: BinOp::Or, lhs, rhs } => {
            if expect_bool("||", eval_expr(lhs, scope)?)? {
                return Ok(Value::Bool(true));
            }
            Ok(Value::Bool(expect_bool("||", eval_expr(rhs, scope)?)?))
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = eval_expr(lhs, scope)?;
            let r = eval_expr(rhs, scope)?;
            apply_binary(*op, l, r)
        }
    }
}

fn apply_binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    use Value::*;
    match (op, &l, &r) {
        (BinOp::Eq, _, _) | (BinOp::Ne, _, _) => {
            if std::mem::discriminant(&l) != std::mem::discriminant(&r) {
                return Err(mismatch(op, &l, &r));
            }
            Ok(Bool((l == r) == (op == BinOp::Eq)))
        }
        (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge, Int(a), Int(b)) => Ok(Bool(compare(op, a, b))),
        (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge, Str(a), Str(b)) => Ok(Bool(compare(op, a, b))),
        (BinOp::Matches, Str(text), Str(pattern)) => Ok(Bool(glob_match(pattern, text))),
        (BinOp::Add, Int(a), Int(b)) => a.checked_add(*b).map(Int).ok_or(EvalError::Overflow("+")),
        (BinOp::Add, Str(a), Str(b)) => Ok(Str(format!("{a}{b}"))),
        (BinOp::Sub, Int(a), Int(b)) => a.checked_sub(*b).map(Int).ok_or(EvalError::Overflow("-")),
        (BinOp::Mul, Int(a), Int(b)) => a.checked_mul(*b).map(Int).ok_or(EvalError::Overflow("*")),
        (BinOp::Div, Int(_), Int(0)) => Err(EvalError::DivisionByZero),
        (BinOp::Div, Int(a), Int(b)) => a.checked_div(*b).map(Int).ok_or(EvalError::Overflow("/")),
        _ => Err(mismatch(op, &l, &r)),
    }
}

fn compare<T: Ord>(op: BinOp, a: &T, b: &T) -> bool {
    match op {
        BinOp::Lt => a < b,
        BinOp::Le => a <= b,
        BinOp::Gt => a > b,
        _ => a >= b,
    }
}
