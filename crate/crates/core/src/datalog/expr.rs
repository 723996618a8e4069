use crate::facts::Value;

use super::{ArithOp, BuiltinFn, CmpOp, Expr, Term};

/// Evaluates `expr` with `lookup` resolving variables.
///
/// Integer division truncates toward zero; division by zero and overflow
/// are errors rather than silently dropped tuples.
pub fn eval_expr<'a>(expr: &'a Expr, lookup: &dyn Fn(&str) -> Option<&'a Value>) -> Result<Value, String> {
    match expr {
        Expr::Term(Term::Const(c)) => Ok(c.clone()),
        Expr::Term(Term::Var(v)) => lookup(v).cloned().ok_or_else(|| format!("variable `{v}` is unbound")),
        Expr::Binary(op, l, r) => {
            let l = eval_expr(l, lookup)?;
            let r = eval_expr(r, lookup)?;
            arith(*op, &l, &r)
        }
        Expr::Call(f, args) => {
            let args = args.iter().map(|a| eval_expr(a, lookup)).collect::<Result<Vec<_>, _>>()?;
            builtin(*f, &args)
        }
    }
}

pub(crate) fn arith(op: ArithOp, l: &Value, r: &Value) -> Result<Value, String> {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => {
            let out = match op {
                ArithOp::Add => a.checked_add(*b),
                ArithOp::Sub => a.checked_sub(*b),
                ArithOp::Mul => a.checked_mul(*b),
                ArithOp::Div => {
                    if *b == 0 {
                        return Err(format!("division by zero ({a} / 0)"));
                    }
                    a.checked_div(*b)
                }
            };
            out.map(Value::Int).ok_or_else(|| format!("integer overflow in {a} {op:?} {b}"))
        }
        (Value::Str(a), Value::Str(b)) if op == ArithOp::Add => Ok(Value::str(format!("{a}{b}"))),
        _ => Err(format!("cannot apply {op:?} to {l} and {r}")),
    }
}

pub(crate) fn builtin(f: BuiltinFn, args: &[Value]) -> Result<Value, String> {
    match (f, args) {
        (BuiltinFn::StrLen, [Value::Str(s)]) => Ok(Value::Int(s.chars().count() as i64)),
        (BuiltinFn::AfterLast, [Value::Str(s), Value::Str(sep)]) => {
            let tail = match s.rfind(&**sep) {
                Some(i) if !sep.is_empty() => &s[i + sep.len()..],
                _ => s,
            };
            Ok(Value::str(tail))
        }
        (BuiltinFn::ToStr, [Value::Int(i)]) => Ok(Value::str(i.to_string())),
        (BuiltinFn::ToStr, [Value::Str(s)]) => Ok(Value::Str(s.clone())),
        _ => Err(format!("bad arguments for {f:?}")),
    }
}

pub(crate) fn compare(op: CmpOp, l: &Value, r: &Value) -> Result<bool, String> {
    use CmpOp::*;
    let strs = || match (l, r) {
        (Value::Str(a), Value::Str(b)) => Ok((a.clone(), b.clone())),
        _ => Err(format!("string test {op:?} applied to {l} and {r}")),
    };
    Ok(match op {
        Eq => l == r,
        Ne => l != r,
        Lt => l < r,
        Le => l <= r,
        Gt => l > r,
        Ge => l >= r,
        StartsWith | NotStartsWith => {
            let (a, b) = strs()?;
            a.starts_with(&*b) == (op == StartsWith)
        }
        EndsWith | NotEndsWith => {
            let (a, b) = strs()?;
            a.ends_with(&*b) == (op == EndsWith)
        }
        Contains | NotContains => {
            let (a, b) = strs()?;
            a.contains(&*b) == (op == Contains)
        }
    })
}
