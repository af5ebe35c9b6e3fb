use super::DslError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    /// Punctuation and operators, including ones the grammar rejects.
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Num(v) => format!("number {v}"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

// Longest first so that "==" wins over "=".
const SYMBOLS: [&str; 27] = [
    "**", "==", "!=", "<=", ">=", "//", "&&", "||", "(", ")", "[", "]", ".", ",", "+", "-", "*", "/", "&", "|",
    "<", ">", "=", "%", "~", "!", ":",
];

const OTHER_SYMBOLS: [&str; 6] = ["{", "}", ";", "@", "^", "`"];

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, DslError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == b'\'' || c == b'"' {
            let (s, next) = lex_string(text, i)?;
            out.push(Token { tok: Tok::Str(s), offset: start });
            i = next;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let (v, next) = lex_number(text, i)?;
            out.push(Token { tok: Tok::Num(v), offset: start });
            i = next;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(text[start..i].to_string()), offset: start });
        } else if let Some(sym) = SYMBOLS.iter().chain(OTHER_SYMBOLS.iter()).find(|s| text[i..].starts_with(**s)) {
            out.push(Token { tok: Tok::Sym(sym), offset: start });
            i += sym.len();
        } else {
            let ch = text[i..].chars().next().unwrap();
            return Err(DslError::Syntax {
                offset: i,
                expected: vec!["expression".into()],
                found: format!("character '{ch}'"),
            });
        }
    }
    out.push(Token { tok: Tok::Eof, offset: text.len() });
    Ok(out)
}

fn lex_string(text: &str, start: usize) -> Result<(String, usize), DslError> {
    let quote = text.as_bytes()[start] as char;
    let mut out = String::new();
    let mut chars = text[start + 1..].char_indices();
    while let Some((k, c)) = chars.next() {
        match c {
            c if c == quote => return Ok((out, start + 1 + k + 1)),
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, 'r')) => out.push('\r'),
                Some((_, e @ ('\\' | '\'' | '"'))) => out.push(e),
                Some((j, e)) => {
                    return Err(DslError::Syntax {
                        offset: start + 1 + j,
                        expected: vec!["escape sequence".into()],
                        found: format!("'\\{e}'"),
                    })
                }
                None => break,
            },
            c => out.push(c),
        }
    }
    Err(DslError::Syntax { offset: text.len(), expected: vec![format!("closing {quote}")], found: "end of input".into() })
}

fn lex_number(text: &str, start: usize) -> Result<(f64, usize), DslError> {
    let b = text.as_bytes();
    let mut i = start;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i < b.len() && b[i] == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        if j < b.len() && b[j].is_ascii_digit() {
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    let v = text[start..i].parse::<f64>().map_err(|_| DslError::Syntax {
        offset: start,
        expected: vec!["number".into()],
        found: format!("'{}'", &text[start..i]),
    })?;
    Ok((v, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_column_ref() {
        let toks: Vec<Tok> = tokenize("df['a b'] == 1.5e3").unwrap().into_iter().map(|t| t.tok).collect();
        assert_eq!(
            toks,
            vec![
                Tok::Ident("df".into()),
                Tok::Sym("["),
                Tok::Str("a b".into()),
                Tok::Sym("]"),
                Tok::Sym("=="),
                Tok::Num(1500.0),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn number_then_method() {
        let toks: Vec<Tok> = tokenize("5.astype").unwrap().into_iter().map(|t| t.tok).collect();
        assert_eq!(toks[0], Tok::Num(5.0));
        assert_eq!(toks[1], Tok::Sym("."));
    }

    #[test]
    fn escapes_and_offsets() {
        let toks = tokenize(r#"  "it\'s""#).unwrap();
        assert_eq!(toks[0], Token { tok: Tok::Str("it's".into()), offset: 2 });
        assert!(matches!(tokenize("'open"), Err(DslError::Syntax { .. })));
    }
}
