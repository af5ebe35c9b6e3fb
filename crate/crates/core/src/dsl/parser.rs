use super::ast::{BinOp, CastType, Expr, Literal};
use super::lexer::{tokenize, Tok, Token};
use super::DslError;

/// Parses mapping-expression text into an [`Expr`].
pub fn parse(text: &str) -> Result<Expr, DslError> {
    if text.trim().is_empty() {
        return Err(DslError::Syntax { offset: 0, expected: vec!["expression".into()], found: "end of input".into() });
    }
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.expression()?;
    match p.peek() {
        Tok::Eof => Ok(expr),
        _ => Err(p.unexpected(&["end of input", "operator"])),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn expect_sym(&mut self, s: &'static str) -> Result<(), DslError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[s]))
        }
    }

    fn unexpected(&self, expected: &[&str]) -> DslError {
        if let Some(e) = self.unsupported_here() {
            return e;
        }
        DslError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn unsupported(&self, construct: impl Into<String>) -> DslError {
        DslError::Unsupported { offset: self.offset(), construct: construct.into() }
    }

    /// Recognizes tokens that belong to constructs outside the grammar.
    fn unsupported_here(&self) -> Option<DslError> {
        let what = match self.peek() {
            Tok::Sym(s @ ("<" | ">" | "<=" | ">=")) => format!("ordering comparison '{s}'"),
            Tok::Sym(s @ ("%" | "**" | "//")) => format!("arithmetic operator '{s}'"),
            Tok::Sym(s @ ("~" | "!")) => format!("unary operator '{s}'"),
            Tok::Sym("=") => "assignment".to_string(),
            Tok::Sym(s @ (":" | ";" | "{" | "}" | "@" | "^" | "`")) => format!("token '{s}'"),
            Tok::Ident(s) if s == "lambda" => "lambda".to_string(),
            Tok::Ident(s) if s == "not" => "unary operator 'not'".to_string(),
            Tok::Ident(s) if s == "None" => "None literal".to_string(),
            Tok::Ident(s) if matches!(s.as_str(), "if" | "else" | "for" | "in" | "is" | "import") => {
                format!("keyword '{s}'")
            }
            _ => return None,
        };
        Some(self.unsupported(what))
    }

    fn expression(&mut self) -> Result<Expr, DslError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.and_expr()?;
        while self.is_ident("or") || self.is_sym("|") || self.is_sym("||") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::binop(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.cmp()?;
        while self.is_ident("and") || self.is_sym("&") || self.is_sym("&&") {
            self.bump();
            let rhs = self.cmp()?;
            lhs = Expr::binop(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn cmp(&mut self) -> Result<Expr, DslError> {
        let lhs = self.sum()?;
        let op = if self.is_sym("==") {
            BinOp::Eq
        } else if self.is_sym("!=") {
            BinOp::Ne
        } else {
            if let Some(e) = self.unsupported_here() {
                return Err(e);
            }
            return Ok(lhs);
        };
        self.bump();
        let rhs = self.sum()?;
        if self.is_sym("==") || self.is_sym("!=") {
            return Err(self.unsupported("chained comparison"));
        }
        Ok(Expr::binop(op, lhs, rhs))
    }

    fn sum(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym("+") {
                BinOp::Add
            } else if self.is_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binop(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.postfix()?;
        loop {
            let op = if self.is_sym("*") {
                BinOp::Mul
            } else if self.is_sym("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.postfix()?;
            lhs = Expr::binop(op, lhs, rhs);
        }
    }

    fn postfix(&mut self) -> Result<Expr, DslError> {
        let mut e = self.atom()?;
        loop {
            if self.is_sym("[") {
                return Err(self.unsupported("indexing"));
            }
            if self.is_sym("(") {
                return Err(self.unsupported("call of a non-function"));
            }
            if !self.is_sym(".") {
                return Ok(e);
            }
            self.bump();
            let name = match self.bump().tok {
                Tok::Ident(name) => name,
                other => {
                    self.pos -= 1;
                    return Err(DslError::Syntax {
                        offset: self.offset(),
                        expected: vec!["astype".into(), "isin".into()],
                        found: other.describe(),
                    });
                }
            };
            match name.as_str() {
                "astype" => {
                    self.expect_sym("(")?;
                    let target = self.cast_type()?;
                    self.expect_sym(")")?;
                    e = Expr::Cast { target, operand: Box::new(e) };
                }
                "isin" => {
                    self.expect_sym("(")?;
                    let set = self.list()?;
                    self.expect_sym(")")?;
                    e = Expr::IsIn { operand: Box::new(e), set };
                }
                "str" => return Err(self.unsupported("string accessor .str")),
                other if self.is_sym("(") => return Err(self.unsupported(format!("method call .{other}()"))),
                other => return Err(self.unsupported(format!("attribute access .{other}"))),
            }
        }
    }

    fn cast_type(&mut self) -> Result<CastType, DslError> {
        let name = match self.peek() {
            Tok::Ident(s) | Tok::Str(s) => s.clone(),
            _ => return Err(self.unexpected(&["float", "str"])),
        };
        let t = match name.as_str() {
            "float" => CastType::Float,
            "str" => CastType::Str,
            other => return Err(self.unsupported(format!("cast to {other}"))),
        };
        self.bump();
        Ok(t)
    }

    fn list(&mut self) -> Result<Vec<Literal>, DslError> {
        let start = self.offset();
        self.expect_sym("[")?;
        let mut items = Vec::new();
        while !self.is_sym("]") {
            items.push(self.literal()?);
            if self.is_sym(",") {
                self.bump();
            } else if !self.is_sym("]") {
                return Err(self.unexpected(&[",", "]"]));
            }
        }
        self.bump();
        if let Some(first) = items.first() {
            let same = items.iter().all(|l| std::mem::discriminant(l) == std::mem::discriminant(first));
            if !same {
                return Err(DslError::Unsupported { offset: start, construct: "isin list with mixed literal types".into() });
            }
        }
        Ok(items)
    }

    fn literal(&mut self) -> Result<Literal, DslError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Literal::Str(s))
            }
            Tok::Num(v) => {
                self.bump();
                Ok(Literal::Num(v))
            }
            Tok::Sym("-") if matches!(self.peek_at(1), Tok::Num(_)) => {
                self.bump();
                match self.bump().tok {
                    Tok::Num(v) => Ok(Literal::Num(-v)),
                    _ => unreachable!(),
                }
            }
            Tok::Ident(s) if s == "True" || s == "true" => {
                self.bump();
                Ok(Literal::Bool(true))
            }
            Tok::Ident(s) if s == "False" || s == "false" => {
                self.bump();
                Ok(Literal::Bool(false))
            }
            _ => Err(self.unexpected(&["string", "number", "True", "False"])),
        }
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        match self.peek().clone() {
            Tok::Sym("(") => {
                self.bump();
                let inner = self.expression()?;
                self.expect_sym(")")?;
                Ok(Expr::Paren(Box::new(inner)))
            }
            Tok::Sym("[") => Err(self.unsupported("list literal outside .isin()")),
            Tok::Sym("-") if !matches!(self.peek_at(1), Tok::Num(_)) => Err(self.unsupported("unary minus")),
            Tok::Ident(name) if name == "df" => {
                self.bump();
                self.column_index()
            }
            Tok::Ident(name) if name == "adata" => {
                self.bump();
                if !self.is_sym(".") {
                    return Err(self.unsupported("bare reference to adata"));
                }
                self.bump();
                match self.peek().clone() {
                    Tok::Ident(attr) if attr == "obs" => {
                        self.bump();
                        self.column_index()
                    }
                    Tok::Ident(attr) => Err(self.unsupported(format!("attribute access adata.{attr}"))),
                    _ => Err(self.unexpected(&["obs"])),
                }
            }
            Tok::Ident(name)
                if !matches!(name.as_str(), "True" | "False" | "true" | "false" | "and" | "or")
                    && self.unsupported_here().is_none() =>
            {
                if matches!(self.peek_at(1), Tok::Sym("(")) {
                    Err(self.unsupported(format!("function call {name}()")))
                } else {
                    Err(self.unsupported(format!("free variable '{name}'")))
                }
            }
            _ => self.literal().map(Expr::Lit),
        }
    }

    /// `[ 'name' ]` after `df` or `adata.obs`.
    fn column_index(&mut self) -> Result<Expr, DslError> {
        if self.is_sym(".") {
            if let Tok::Ident(attr) = self.peek_at(1).clone() {
                return Err(self.unsupported(format!("attribute access .{attr}")));
            }
        }
        self.expect_sym("[")?;
        let name = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                s
            }
            _ => return Err(self.unsupported("non-string column index")),
        };
        self.expect_sym("]")?;
        Ok(Expr::Column(name))
    }
}
