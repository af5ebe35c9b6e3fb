use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
    Bool(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CastType {
    Float,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Eq,
    Ne,
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(String),
    Lit(Literal),
    Cast { target: CastType, operand: Box<Expr> },
    IsIn { operand: Box<Expr>, set: Vec<Literal> },
    BinOp { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Source-level grouping. Transparent for evaluation and structural equality.
    Paren(Box<Expr>),
}

impl Expr {
    pub fn column(name: impl Into<String>) -> Expr {
        Expr::Column(name.into())
    }

    pub fn str(s: impl Into<String>) -> Expr {
        Expr::Lit(Literal::Str(s.into()))
    }

    pub fn num(v: f64) -> Expr {
        Expr::Lit(Literal::Num(v))
    }

    pub fn binop(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn cast(target: CastType, operand: Expr) -> Expr {
        Expr::Cast { target, operand: Box::new(operand) }
    }

    /// The same tree with every `Paren` node removed.
    pub fn without_parens(&self) -> Expr {
        match self {
            Expr::Paren(inner) => inner.without_parens(),
            Expr::Column(_) | Expr::Lit(_) => self.clone(),
            Expr::Cast { target, operand } => Expr::cast(*target, operand.without_parens()),
            Expr::IsIn { operand, set } => {
                Expr::IsIn { operand: Box::new(operand.without_parens()), set: set.clone() }
            }
            Expr::BinOp { op, lhs, rhs } => Expr::binop(*op, lhs.without_parens(), rhs.without_parens()),
        }
    }

    /// Equality ignoring source parentheses.
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        self.without_parens() == other.without_parens()
    }

    /// Column names referenced anywhere in the tree, in first-seen order.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Lit(_) => {}
            Expr::Paren(e) | Expr::Cast { operand: e, .. } | Expr::IsIn { operand: e, .. } => e.collect_columns(out),
            Expr::BinOp { lhs, rhs, .. } => {
                lhs.collect_columns(out);
                rhs.collect_columns(out);
            }
        }
    }

    fn unparen(&self) -> &Expr {
        match self {
            Expr::Paren(inner) => inner.unparen(),
            e => e,
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("'")?;
    for c in s.chars() {
        match c {
            '\\' => f.write_str("\\\\")?,
            '\'' => f.write_str("\\'")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("'")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write_quoted(f, s),
            Literal::Num(v) => write!(f, "{v}"),
            Literal::Bool(true) => f.write_str("True"),
            Literal::Bool(false) => f.write_str("False"),
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical rendering: `df['col']` column spelling, single-quoted
    /// strings, and parentheses around every nested binary operation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unparen() {
            Expr::Column(name) => {
                f.write_str("df[")?;
                write_quoted(f, name)?;
                f.write_str("]")
            }
            Expr::Lit(lit) => write!(f, "{lit}"),
            Expr::Cast { target, operand } => {
                write_operand(f, operand)?;
                let ty = match target {
                    CastType::Float => "float",
                    CastType::Str => "str",
                };
                write!(f, ".astype({ty})")
            }
            Expr::IsIn { operand, set } => {
                write_operand(f, operand)?;
                f.write_str(".isin([")?;
                for (i, lit) in set.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{lit}")?;
                }
                f.write_str("])")
            }
            Expr::BinOp { op, lhs, rhs } => {
                write_operand(f, lhs)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, rhs)
            }
            Expr::Paren(_) => unreachable!("unparen strips parens"),
        }
    }
}

/// Operands of postfix and binary nodes: binary operations get parentheses.
fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e.unparen() {
        inner @ Expr::BinOp { .. } => write!(f, "({inner})"),
        inner => write!(f, "{inner}"),
    }
}
