//! Tokenizer for `.tm` files. `#` starts a comment running to end of line;
//! whitespace (including newlines) only separates tokens.

use crate::diag::{DiagCode, Diagnostic, Span};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Dot,
    Arrow,      // ->
    Squiggle,   // ~>
    Assign,     // :=
    Plus,
    Minus,
    Eq,         // =
    Ne,         // !=
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{}`", s),
            Tok::Int(n) => write!(f, "`{}`", n),
            Tok::Str(_) => write!(f, "string"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Squiggle => write!(f, "`~>`"),
            Tok::Assign => write!(f, "`:=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;

    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'{' => { out.push(Token { tok: Tok::LBrace, span: Span::new(i, i + 1) }); i += 1; }
            b'}' => { out.push(Token { tok: Tok::RBrace, span: Span::new(i, i + 1) }); i += 1; }
            b'[' => { out.push(Token { tok: Tok::LBracket, span: Span::new(i, i + 1) }); i += 1; }
            b']' => { out.push(Token { tok: Tok::RBracket, span: Span::new(i, i + 1) }); i += 1; }
            b'(' => { out.push(Token { tok: Tok::LParen, span: Span::new(i, i + 1) }); i += 1; }
            b')' => { out.push(Token { tok: Tok::RParen, span: Span::new(i, i + 1) }); i += 1; }
            b';' => { out.push(Token { tok: Tok::Semi, span: Span::new(i, i + 1) }); i += 1; }
            b',' => { out.push(Token { tok: Tok::Comma, span: Span::new(i, i + 1) }); i += 1; }
            b'.' => { out.push(Token { tok: Tok::Dot, span: Span::new(i, i + 1) }); i += 1; }
            b'+' => { out.push(Token { tok: Tok::Plus, span: Span::new(i, i + 1) }); i += 1; }
            b':' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Token { tok: Tok::Assign, span: Span::new(i, i + 2) });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Colon, span: Span::new(i, i + 1) });
                    i += 1;
                }
            }
            b'-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push(Token { tok: Tok::Arrow, span: Span::new(i, i + 2) });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Minus, span: Span::new(i, i + 1) });
                    i += 1;
                }
            }
            b'~' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push(Token { tok: Tok::Squiggle, span: Span::new(i, i + 2) });
                    i += 2;
                } else {
                    return Err(Diagnostic::with_span(
                        DiagCode::LexError,
                        "stray `~` (triggers are written `~>`)",
                        Span::new(i, i + 1),
                    ));
                }
            }
            b'=' => { out.push(Token { tok: Tok::Eq, span: Span::new(i, i + 1) }); i += 1; }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Token { tok: Tok::Ne, span: Span::new(i, i + 2) });
                    i += 2;
                } else {
                    return Err(Diagnostic::with_span(
                        DiagCode::LexError,
                        "stray `!` (did you mean `!=`?)",
                        Span::new(i, i + 1),
                    ));
                }
            }
            b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Token { tok: Tok::Le, span: Span::new(i, i + 2) });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Lt, span: Span::new(i, i + 1) });
                    i += 1;
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Token { tok: Tok::Ge, span: Span::new(i, i + 2) });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Gt, span: Span::new(i, i + 1) });
                    i += 1;
                }
            }
            b'"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None | Some(b'\n') => {
                            return Err(Diagnostic::with_span(
                                DiagCode::LexError,
                                "unterminated string",
                                Span::new(start, i),
                            ));
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') => match bytes.get(i + 1) {
                            Some(b'"') => { s.push('"'); i += 2; }
                            Some(b'\\') => { s.push('\\'); i += 2; }
                            _ => {
                                return Err(Diagnostic::with_span(
                                    DiagCode::LexError,
                                    "unknown escape in string",
                                    Span::new(i, i + 2),
                                ));
                            }
                        },
                        Some(&c) => {
                            s.push(c as char);
                            i += 1;
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), span: Span::new(start, i) });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let lit = &text[start..i];
                let n: u64 = lit.parse().map_err(|_| {
                    Diagnostic::with_span(
                        DiagCode::LexError,
                        format!("integer literal `{}` out of range", lit),
                        Span::new(start, i),
                    )
                })?;
                out.push(Token { tok: Tok::Int(n), span: Span::new(start, i) });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    span: Span::new(start, i),
                });
            }
            _ => {
                return Err(Diagnostic::with_span(
                    DiagCode::LexError,
                    format!("unexpected character `{}`", b as char),
                    Span::new(i, i + 1),
                ));
            }
        }
    }

    out.push(Token { tok: Tok::Eof, span: Span::new(text.len(), text.len()) });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_arrows_and_assign() {
        let toks = lex("a -> b ~> c := 3 - 1").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Arrow,
                Tok::Ident("b".into()),
                Tok::Squiggle,
                Tok::Ident("c".into()),
                Tok::Assign,
                Tok::Int(3),
                Tok::Minus,
                Tok::Int(1),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn comments_run_to_end_of_line() {
        let toks = lex("a # comment -> ignored\nb").unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[0].tok, Tok::Ident("a".into()));
        assert_eq!(toks[1].tok, Tok::Ident("b".into()));
    }

    #[test]
    fn string_escapes() {
        let toks = lex(r#""say \"hi\" \\ twice""#).unwrap();
        assert_eq!(toks[0].tok, Tok::Str(r#"say "hi" \ twice"#.into()));
    }

    #[test]
    fn unterminated_string_is_a_lex_error() {
        let err = lex("\"oops").unwrap_err();
        assert_eq!(err.code, DiagCode::LexError);
    }
}
