//! The mapping expression language.
//!
//! A sandboxed, typed subset of the pandas-style expressions that mapping
//! specifications carry as strings. Grammar:
//!
//! ```text
//! expression → or_expr
//! or_expr    → and_expr ( "or" and_expr )*
//! and_expr   → cmp ( "and" cmp )*
//! cmp        → sum ( ( "==" | "!=" ) sum )?
//! sum        → term ( ( "+" | "-" ) term )*
//! term       → postfix ( ( "*" | "/" ) postfix )*
//! postfix    → atom ( ".astype(" type ")" | ".isin(" list ")" )*
//! atom       → column | literal | "(" expression ")"
//! column     → "df[" string "]" | "adata.obs[" string "]"
//! literal    → string | number | "-" number | "True" | "False"
//! type       → "float" | "str" (optionally quoted)
//! list       → "[" literal ( "," literal )* ","? "]"
//! ```
//!
//! `&` and `|` are accepted as spellings of `and` and `or`. Anything else
//! (function calls, other methods, indexing, lambdas, ordering comparisons,
//! chained comparisons, unary operators) is rejected with an
//! "unsupported construct" error.

mod ast;
mod eval;
mod lexer;
mod parser;

pub use ast::{BinOp, CastType, Expr, Literal};
pub use eval::{evaluate, ColumnValue};
pub use parser::parse;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at byte {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax { offset: usize, expected: Vec<String>, found: String },
    #[error("unsupported construct at byte {offset}: {construct}")]
    Unsupported { offset: usize, construct: String },
    #[error("missing column '{name}'; available columns: [{}]", available.join(", "))]
    MissingColumn { name: String, available: Vec<String> },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("division by zero at row {row}")]
    DivisionByZero { row: usize },
}

/// Canonical text rendering; `parse(&format(e))` is structurally equal to `e`.
pub fn format(expr: &Expr) -> String {
    expr.to_string()
}
