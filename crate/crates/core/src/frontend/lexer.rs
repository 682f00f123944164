use super::{Diagnostic, DiagCode, Loc, Severity, SourceUnit};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Char(u8),
    Str(Vec<u8>),
    Keyword(Keyword),
    /// Punctuation and operators, spelled as in source.
    Punct(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Package,
    Class,
    External,
    Group,
    Public,
    Private,
    Static,
    Message,
    Iterator,
    Copy,
    Enum,
    If,
    Else,
    While,
    For,
    Return,
    New,
    Create,
    True,
    False,
    Null,
    This,
    ThisHost,
    Hosts,
    Void,
    Int,
    Bool,
    Char,
    Host,
    Queue,
}

const KEYWORDS: &[(&str, Keyword)] = &[
    ("package", Keyword::Package),
    ("class", Keyword::Class),
    ("external", Keyword::External),
    ("group", Keyword::Group),
    ("public", Keyword::Public),
    ("private", Keyword::Private),
    ("static", Keyword::Static),
    ("message", Keyword::Message),
    ("iterator", Keyword::Iterator),
    ("copy", Keyword::Copy),
    ("enum", Keyword::Enum),
    ("if", Keyword::If),
    ("else", Keyword::Else),
    ("while", Keyword::While),
    ("for", Keyword::For),
    ("return", Keyword::Return),
    ("new", Keyword::New),
    ("create", Keyword::Create),
    ("true", Keyword::True),
    ("false", Keyword::False),
    ("null", Keyword::Null),
    ("this", Keyword::This),
    ("this_host", Keyword::ThisHost),
    ("hosts", Keyword::Hosts),
    ("void", Keyword::Void),
    ("int", Keyword::Int),
    ("bool", Keyword::Bool),
    ("char", Keyword::Char),
    ("host", Keyword::Host),
    ("queue", Keyword::Queue),
];

// Longest first so that `<=>` wins over `<=` and `.+` over `.`.
const PUNCT: &[&str] = &[
    "<=>", "#>", ".+", "+=", "-=", "++", "--", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]",
    ";", ",", ".", "?", ":", "=", "<", ">", "+", "-", "*", "/", "%", "!",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: Loc,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.kind, TokenKind::Punct(q) if q == p)
    }

    pub fn is_keyword(&self, k: Keyword) -> bool {
        matches!(self.kind, TokenKind::Keyword(q) if q == k)
    }
}

pub fn keyword_name(k: Keyword) -> &'static str {
    KEYWORDS.iter().find(|(_, kw)| *kw == k).map(|(s, _)| *s).unwrap_or("?")
}

/// Splits a source unit into tokens. `unit_index` is recorded in every location.
pub fn tokenize(unit: &SourceUnit, unit_index: u32) -> Result<Vec<Token>, Diagnostic> {
    let text = unit.text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset: usize, msg: String| {
        let (line, col) = unit.position(offset);
        Diagnostic {
            path: unit.path.clone(),
            line,
            col,
            severity: Severity::Error,
            code: DiagCode::LexError,
            message: msg,
        }
    };
    while i < text.len() {
        let c = text[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && text.get(i + 1) == Some(&b'/') {
            while i < text.len() && text[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let (line, col) = unit.position(start);
        let loc = Loc { unit: unit_index, line, col };
        let kind = if c.is_ascii_alphabetic() || c == b'_' {
            while i < text.len() && (text[i].is_ascii_alphanumeric() || text[i] == b'_') {
                i += 1;
            }
            let word = &unit.text[start..i];
            match KEYWORDS.iter().find(|(s, _)| *s == word) {
                Some((_, k)) => TokenKind::Keyword(*k),
                None => TokenKind::Ident(word.to_string()),
            }
        } else if c.is_ascii_digit() {
            while i < text.len() && text[i].is_ascii_digit() {
                i += 1;
            }
            let digits = &unit.text[start..i];
            match digits.parse::<i64>() {
                Ok(v) => TokenKind::Int(v),
                Err(_) => return Err(err(start, format!("integer literal out of range: {digits}"))),
            }
        } else if c == b'"' {
            i += 1;
            let mut s = Vec::new();
            loop {
                match text.get(i) {
                    None | Some(b'\n') => return Err(err(start, "unterminated string literal".into())),
                    Some(b'"') => {
                        i += 1;
                        break;
                    }
                    Some(b'\\') => {
                        let e = text.get(i + 1).copied();
                        s.push(unescape(e).ok_or_else(|| err(i, "bad escape sequence".into()))?);
                        i += 2;
                    }
                    Some(&b) => {
                        s.push(b);
                        i += 1;
                    }
                }
            }
            TokenKind::Str(s)
        } else if c == b'\'' {
            let (value, len) = match text.get(i + 1) {
                Some(b'\\') => (unescape(text.get(i + 2).copied()), 3),
                Some(b'\'') | Some(b'\n') | None => (None, 2),
                Some(&b) => (Some(b), 2),
            };
            match (value, text.get(i + len)) {
                (Some(v), Some(b'\'')) => {
                    i += len + 1;
                    TokenKind::Char(v)
                }
                _ => return Err(err(start, "malformed character literal".into())),
            }
        } else {
            let rest = &unit.text[i..];
            match PUNCT.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    i += p.len();
                    TokenKind::Punct(p)
                }
                None => {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(err(start, format!("illegal character '{ch}'")));
                }
            }
        };
        out.push(Token { kind, loc });
    }
    Ok(out)
}

fn unescape(c: Option<u8>) -> Option<u8> {
    Some(match c? {
        b'n' => b'\n',
        b't' => b'\t',
        b'r' => b'\r',
        b'0' => 0,
        b'\\' => b'\\',
        b'"' => b'"',
        b'\'' => b'\'',
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(&SourceUnit::new("t.hlo", src), 0).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn group_iteration_tokens() {
        assert_eq!(
            kinds(r#"hosts.+print("x");"#),
            vec![
                TokenKind::Keyword(Keyword::Hosts),
                TokenKind::Punct(".+"),
                TokenKind::Ident("print".into()),
                TokenKind::Punct("("),
                TokenKind::Str(b"x".to_vec()),
                TokenKind::Punct(")"),
                TokenKind::Punct(";"),
            ]
        );
    }

    #[test]
    fn queued_eval_tokens() {
        assert_eq!(
            kinds("rtq <=> 1;"),
            vec![
                TokenKind::Ident("rtq".into()),
                TokenKind::Punct("<=>"),
                TokenKind::Int(1),
                TokenKind::Punct(";"),
            ]
        );
    }

    #[test]
    fn empty_and_comments() {
        assert!(kinds("").is_empty());
        assert!(kinds("// only a comment\n   \n").is_empty());
    }

    #[test]
    fn message_post_and_compound_ops() {
        assert_eq!(
            kinds("q #> (a, b); x += 1; x <= y"),
            vec![
                TokenKind::Ident("q".into()),
                TokenKind::Punct("#>"),
                TokenKind::Punct("("),
                TokenKind::Ident("a".into()),
                TokenKind::Punct(","),
                TokenKind::Ident("b".into()),
                TokenKind::Punct(")"),
                TokenKind::Punct(";"),
                TokenKind::Ident("x".into()),
                TokenKind::Punct("+="),
                TokenKind::Int(1),
                TokenKind::Punct(";"),
                TokenKind::Ident("x".into()),
                TokenKind::Punct("<="),
                TokenKind::Ident("y".into()),
            ]
        );
    }

    #[test]
    fn lex_errors_carry_position() {
        let e = tokenize(&SourceUnit::new("a.hlo", "int x;\n  #C { }"), 0).unwrap_err();
        assert_eq!((e.line, e.col, e.code), (2, 3, DiagCode::LexError));
        let e = tokenize(&SourceUnit::new("a.hlo", "\"abc"), 0).unwrap_err();
        assert!(e.message.contains("unterminated"));
        assert_eq!((e.line, e.col), (1, 1));
    }

    #[test]
    fn escapes_and_chars() {
        assert_eq!(kinds(r#""a\n" '\t' 'z'"#), vec![
            TokenKind::Str(b"a\n".to_vec()),
            TokenKind::Char(b'\t'),
            TokenKind::Char(b'z'),
        ]);
    }
}
