use super::ast::{BinOp, CastType, Expr, Literal};
use super::DslError;
use crate::model::{Column, RawTable};

/// Result of evaluating an expression over a table: one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValue {
    Str(Vec<String>),
    Float(Vec<f64>),
    Bool(Vec<bool>),
}

impl ColumnValue {
    pub fn len(&self) -> usize {
        match self {
            ColumnValue::Str(v) => v.len(),
            ColumnValue::Float(v) => v.len(),
            ColumnValue::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ColumnValue::Str(_) => "str",
            ColumnValue::Float(_) => "float",
            ColumnValue::Bool(_) => "bool",
        }
    }
}

/// Intermediate value: a column or a not-yet-broadcast scalar.
#[derive(Debug, Clone)]
enum Value {
    Col(ColumnValue),
    Scalar(Literal),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Col(c) => c.type_name(),
            Value::Scalar(Literal::Str(_)) => "str",
            Value::Scalar(Literal::Num(_)) => "float",
            Value::Scalar(Literal::Bool(_)) => "bool",
        }
    }

    fn broadcast(self, n: usize) -> ColumnValue {
        match self {
            Value::Col(c) => c,
            Value::Scalar(Literal::Str(s)) => ColumnValue::Str(vec![s; n]),
            Value::Scalar(Literal::Num(v)) => ColumnValue::Float(vec![v; n]),
            Value::Scalar(Literal::Bool(b)) => ColumnValue::Bool(vec![b; n]),
        }
    }
}

/// Evaluates `expr` against the obs columns of `table`.
///
/// Pure and total over well-typed trees: returns a column of length
/// `n_cells` or a [`DslError`]. `and`/`or` evaluate both sides.
pub fn evaluate(expr: &Expr, table: &RawTable) -> Result<ColumnValue, DslError> {
    let n = table.n_cells();
    Ok(eval(expr, table)?.broadcast(n))
}

fn eval(expr: &Expr, table: &RawTable) -> Result<Value, DslError> {
    match expr {
        Expr::Paren(inner) => eval(inner, table),
        Expr::Lit(lit) => Ok(Value::Scalar(lit.clone())),
        Expr::Column(name) => {
            let col = table.column(name).ok_or_else(|| DslError::MissingColumn {
                name: name.clone(),
                available: table.obs().keys().cloned().collect(),
            })?;
            Ok(Value::Col(match col {
                Column::Str(v) => ColumnValue::Str(v.clone()),
                Column::Float(v) => ColumnValue::Float(v.clone()),
                Column::Bool(v) => ColumnValue::Bool(v.clone()),
                Column::Categorical { codes, levels } => {
                    ColumnValue::Str(codes.iter().map(|&c| levels[c as usize].clone()).collect())
                }
            }))
        }
        Expr::Cast { target, operand } => cast(*target, eval(operand, table)?),
        Expr::IsIn { operand, set } => isin(eval(operand, table)?, set, table.n_cells()),
        Expr::BinOp { op, lhs, rhs } => {
            let l = eval(lhs, table)?;
            let r = eval(rhs, table)?;
            binop(*op, l, r, table.n_cells())
        }
    }
}

/// Python's `str(float)`: integral values keep a trailing `.0`.
fn python_float_str(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.fract() == 0.0 && v.abs() < 1e16 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn parse_float(s: &str, row: usize) -> Result<f64, DslError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| DslError::TypeMismatch(format!("cannot convert '{s}' at row {row} to float")))
}

fn cast(target: CastType, v: Value) -> Result<Value, DslError> {
    Ok(match (target, v) {
        (CastType::Float, Value::Scalar(Literal::Str(s))) => Value::Scalar(Literal::Num(parse_float(&s, 0)?)),
        (CastType::Float, Value::Scalar(Literal::Bool(b))) => Value::Scalar(Literal::Num(if b { 1.0 } else { 0.0 })),
        (CastType::Float, s @ Value::Scalar(Literal::Num(_))) => s,
        (CastType::Str, Value::Scalar(Literal::Num(x))) => Value::Scalar(Literal::Str(python_float_str(x))),
        (CastType::Str, Value::Scalar(Literal::Bool(b))) => {
            Value::Scalar(Literal::Str(if b { "True" } else { "False" }.into()))
        }
        (CastType::Str, s @ Value::Scalar(Literal::Str(_))) => s,
        (CastType::Float, Value::Col(ColumnValue::Str(v))) => Value::Col(ColumnValue::Float(
            v.iter().enumerate().map(|(i, s)| parse_float(s, i)).collect::<Result<_, _>>()?,
        )),
        (CastType::Float, Value::Col(ColumnValue::Bool(v))) => {
            Value::Col(ColumnValue::Float(v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()))
        }
        (CastType::Float, c @ Value::Col(ColumnValue::Float(_))) => c,
        (CastType::Str, Value::Col(ColumnValue::Float(v))) => {
            Value::Col(ColumnValue::Str(v.iter().map(|&x| python_float_str(x)).collect()))
        }
        (CastType::Str, Value::Col(ColumnValue::Bool(v))) => Value::Col(ColumnValue::Str(
            v.iter().map(|&b| if b { "True" } else { "False" }.to_string()).collect(),
        )),
        (CastType::Str, c @ Value::Col(ColumnValue::Str(_))) => c,
    })
}

fn isin(v: Value, set: &[Literal], n: usize) -> Result<Value, DslError> {
    let col = v.broadcast(n);
    let mismatch = |what: &str| DslError::TypeMismatch(format!("isin over a {what} column with a list of another type"));
    let out: Vec<bool> = match &col {
        ColumnValue::Str(values) => {
            let items: Vec<&str> = set
                .iter()
                .map(|l| match l {
                    Literal::Str(s) => Ok(s.as_str()),
                    _ => Err(mismatch("str")),
                })
                .collect::<Result<_, _>>()?;
            values.iter().map(|v| items.contains(&v.as_str())).collect()
        }
        ColumnValue::Float(values) => {
            let items: Vec<f64> = set
                .iter()
                .map(|l| match l {
                    Literal::Num(x) => Ok(*x),
                    _ => Err(mismatch("float")),
                })
                .collect::<Result<_, _>>()?;
            values.iter().map(|v| items.contains(v)).collect()
        }
        ColumnValue::Bool(values) => {
            let items: Vec<bool> = set
                .iter()
                .map(|l| match l {
                    Literal::Bool(b) => Ok(*b),
                    _ => Err(mismatch("bool")),
                })
                .collect::<Result<_, _>>()?;
            values.iter().map(|v| items.contains(v)).collect()
        }
    };
    Ok(Value::Col(ColumnValue::Bool(out)))
}

/// Elementwise access over a column or a broadcast scalar.
enum Lane<'a, T> {
    Col(&'a [T]),
    Scalar(T),
}

impl<T: Clone> Lane<'_, T> {
    fn get(&self, i: usize) -> T {
        match self {
            Lane::Col(v) => v[i].clone(),
            Lane::Scalar(s) => s.clone(),
        }
    }
}

fn float_lane(v: &Value) -> Option<Lane<'_, f64>> {
    match v {
        Value::Col(ColumnValue::Float(c)) => Some(Lane::Col(c)),
        Value::Scalar(Literal::Num(x)) => Some(Lane::Scalar(*x)),
        _ => None,
    }
}

fn bool_lane(v: &Value) -> Option<Lane<'_, bool>> {
    match v {
        Value::Col(ColumnValue::Bool(c)) => Some(Lane::Col(c)),
        Value::Scalar(Literal::Bool(b)) => Some(Lane::Scalar(*b)),
        _ => None,
    }
}

fn str_lane(v: &Value) -> Option<Lane<'_, String>> {
    match v {
        Value::Col(ColumnValue::Str(c)) => Some(Lane::Col(c)),
        Value::Scalar(Literal::Str(s)) => Some(Lane::Scalar(s.clone())),
        _ => None,
    }
}

fn bools_as_floats(v: Value) -> Value {
    match v {
        Value::Col(ColumnValue::Bool(c)) => {
            Value::Col(ColumnValue::Float(c.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()))
        }
        Value::Scalar(Literal::Bool(b)) => Value::Scalar(Literal::Num(if b { 1.0 } else { 0.0 })),
        other => other,
    }
}

fn is_scalar(l: &Value, r: &Value) -> bool {
    matches!((l, r), (Value::Scalar(_), Value::Scalar(_)))
}

fn collapse<T>(out: Vec<T>, scalar: bool, wrap_col: fn(Vec<T>) -> ColumnValue, wrap_lit: fn(T) -> Literal) -> Value {
    if scalar {
        Value::Scalar(wrap_lit(out.into_iter().next().expect("scalar lane has one element")))
    } else {
        Value::Col(wrap_col(out))
    }
}

fn binop(op: BinOp, l: Value, r: Value, n: usize) -> Result<Value, DslError> {
    let scalar = is_scalar(&l, &r);
    let len = if scalar { 1 } else { n };
    let mismatch = || {
        DslError::TypeMismatch(format!("operator '{}' is not defined for {} and {}", op.symbol(), l.type_name(), r.type_name()))
    };
    match op {
        BinOp::Eq | BinOp::Ne => {
            let want = op == BinOp::Eq;
            let out: Vec<bool> = if let (Some(a), Some(b)) = (str_lane(&l), str_lane(&r)) {
                (0..len).map(|i| (a.get(i) == b.get(i)) == want).collect()
            } else if let (Some(a), Some(b)) = (bool_lane(&l), bool_lane(&r)) {
                (0..len).map(|i| (a.get(i) == b.get(i)) == want).collect()
            } else {
                let (lf, rf) = (bools_as_floats(l.clone()), bools_as_floats(r.clone()));
                match (float_lane(&lf), float_lane(&rf)) {
                    (Some(a), Some(b)) => (0..len).map(|i| (a.get(i) == b.get(i)) == want).collect(),
                    _ => return Err(mismatch()),
                }
            };
            Ok(collapse(out, scalar, ColumnValue::Bool, Literal::Bool))
        }
        BinOp::And | BinOp::Or => {
            let (Some(a), Some(b)) = (bool_lane(&l), bool_lane(&r)) else {
                return Err(mismatch());
            };
            let out: Vec<bool> = (0..len)
                .map(|i| if op == BinOp::And { a.get(i) & b.get(i) } else { a.get(i) | b.get(i) })
                .collect();
            Ok(collapse(out, scalar, ColumnValue::Bool, Literal::Bool))
        }
        BinOp::Add => {
            if let (Some(a), Some(b)) = (str_lane(&l), str_lane(&r)) {
                let out: Vec<String> = (0..len).map(|i| a.get(i) + &b.get(i)).collect();
                return Ok(collapse(out, scalar, ColumnValue::Str, Literal::Str));
            }
            arith(op, &l, &r, len, scalar).ok_or_else(mismatch)?
        }
        BinOp::Sub | BinOp::Mul | BinOp::Div => arith(op, &l, &r, len, scalar).ok_or_else(mismatch)?,
    }
}

fn arith(op: BinOp, l: &Value, r: &Value, len: usize, scalar: bool) -> Option<Result<Value, DslError>> {
    let a = float_lane(l)?;
    let b = float_lane(r)?;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let (x, y) = (a.get(i), b.get(i));
        out.push(match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => {
                if y == 0.0 {
                    return Some(Err(DslError::DivisionByZero { row: i }));
                }
                x / y
            }
            _ => unreachable!("arith called with non-arithmetic operator"),
        });
    }
    Some(Ok(collapse(out, scalar, ColumnValue::Float, Literal::Num)))
}
