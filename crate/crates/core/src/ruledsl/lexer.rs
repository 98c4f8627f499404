use std::fmt;

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    /// Identifier or keyword; may contain interior dots (`pep.data.put.pre`).
    Ident(String),
    /// `$name` or `$a.b`; stored without the `$`.
    Var(String),
    Str(String),
    /// Unsigned digits; sign is handled by the parser.
    Int(u64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
    Comma,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Var(s) => write!(f, "`${s}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Assign => f.write_str("`=`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::NotEq => f.write_str("`!=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::AndAnd => f.write_str("`&&`"),
            Tok::OrOr => f.write_str("`||`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, expected: &[&str], found: String) -> SyntaxError {
        SyntaxError { line, column, expected: expected.iter().map(|s| s.to_string()).collect(), found }
    }

    /// Dotted word: `ident ('.' ident)*`.
    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if is_ident_continue(c) || (c == '.' && !s.is_empty() && !s.ends_with('.')) {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Spanned>, SyntaxError> {
    let mut cur = Cursor { chars: src.chars().peekable(), line: 1, column: 1 };
    let mut out = Vec::new();
    loop {
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '#' {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
            } else {
                break;
            }
        }
        let (line, column) = (cur.line, cur.column);
        let Some(c) = cur.peek() else {
            out.push(Spanned { tok: Tok::Eof, line, column });
            return Ok(out);
        };
        let tok = if is_ident_start(c) {
            let w = cur.word();
            if w.ends_with('.') {
                return Err(cur.error(line, column, &["identifier"], format!("`{w}`")));
            }
            Tok::Ident(w)
        } else if c == '$' {
            cur.bump();
            match cur.peek() {
                Some(c) if is_ident_start(c) => {}
                other => {
                    return Err(cur.error(
                        line,
                        column,
                        &["variable name"],
                        other.map_or("end of input".into(), |c| format!("`{c}`")),
                    ))
                }
            }
            let w = cur.word();
            if w.ends_with('.') {
                return Err(cur.error(line, column, &["variable name"], format!("`${w}`")));
            }
            Tok::Var(w)
        } else if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(d) = cur.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(d);
                cur.bump();
            }
            match digits.parse::<u64>() {
                Ok(v) => Tok::Int(v),
                Err(_) => return Err(cur.error(line, column, &["64-bit integer"], digits)),
            }
        } else if c == '"' {
            cur.bump();
            let mut s = String::new();
            loop {
                match cur.bump() {
                    None => return Err(cur.error(cur.line, cur.column, &["`\"`"], "end of input".into())),
                    Some('"') => break,
                    Some('\\') => match cur.bump() {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('n') => s.push('\n'),
                        other => {
                            return Err(cur.error(
                                cur.line,
                                cur.column,
                                &["`\\\"`", "`\\\\`", "`\\n`"],
                                other.map_or("end of input".into(), |c| format!("`\\{c}`")),
                            ))
                        }
                    },
                    Some(ch) => s.push(ch),
                }
            }
            Tok::Str(s)
        } else {
            cur.bump();
            let next = cur.peek();
            let two = |cur: &mut Cursor, t: Tok| {
                cur.bump();
                t
            };
            match (c, next) {
                ('(', _) => Tok::LParen,
                (')', _) => Tok::RParen,
                ('{', _) => Tok::LBrace,
                ('}', _) => Tok::RBrace,
                (';', _) => Tok::Semi,
                (',', _) => Tok::Comma,
                ('=', Some('=')) => two(&mut cur, Tok::EqEq),
                ('=', _) => Tok::Assign,
                ('!', Some('=')) => two(&mut cur, Tok::NotEq),
                ('!', _) => Tok::Bang,
                ('<', Some('=')) => two(&mut cur, Tok::Le),
                ('<', _) => Tok::Lt,
                ('>', Some('=')) => two(&mut cur, Tok::Ge),
                ('>', _) => Tok::Gt,
                ('+', _) => Tok::Plus,
                ('-', _) => Tok::Minus,
                ('*', _) => Tok::Star,
                ('/', _) => Tok::Slash,
                ('&', Some('&')) => two(&mut cur, Tok::AndAnd),
                ('|', Some('|')) => two(&mut cur, Tok::OrOr),
                _ => return Err(cur.error(line, column, &["token"], format!("`{c}`"))),
            }
        };
        out.push(Spanned { tok, line, column });
    }
}
