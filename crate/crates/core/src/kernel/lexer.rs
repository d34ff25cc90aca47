use super::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    // keywords
    Del,
    Print,
    And,
    Or,
    Not,
    True,
    False,
    None,
    // punctuation
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Assign,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Int(i) => format!("integer {i}"),
            Tok::Float(f) => format!("float {f:?}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Ident(name) => format!("name '{name}'"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Del => "del",
            Tok::Print => "print",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::True => "true",
            Tok::False => "false",
            Tok::None => "none",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Assign => "=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Lexer<'_> {
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

    fn eat(&mut self, expected: char) -> bool {
        if self.peek() == Some(expected) {
            self.bump();
            true
        } else {
            false
        }
    }
}

/// Splits cell source into tokens. Line and column are 1-based; columns count
/// Unicode scalar values.
pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut lx = Lexer {
        chars: source.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        let (line, column) = (lx.line, lx.column);
        let err = |message: String| SyntaxError {
            line,
            column,
            message,
        };
        let Some(c) = lx.peek() else {
            out.push(Token {
                tok: Tok::Eof,
                line,
                column,
            });
            return Ok(out);
        };
        let tok = match c {
            ' ' | '\t' | '\r' => {
                lx.bump();
                continue;
            }
            '#' => {
                while !matches!(lx.peek(), None | Some('\n')) {
                    lx.bump();
                }
                continue;
            }
            '\n' => {
                lx.bump();
                Tok::Newline
            }
            '0'..='9' => lex_number(&mut lx).map_err(err)?,
            '"' | '\'' => lex_string(&mut lx).map_err(err)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(c) = lx.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    word.push(c);
                    lx.bump();
                }
                keyword(&word).unwrap_or(Tok::Ident(word))
            }
            _ => {
                lx.bump();
                match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '%' => Tok::Percent,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '=' if lx.eat('=') => Tok::EqEq,
                    '=' => Tok::Assign,
                    '!' if lx.eat('=') => Tok::NotEq,
                    '<' if lx.eat('=') => Tok::Le,
                    '<' => Tok::Lt,
                    '>' if lx.eat('=') => Tok::Ge,
                    '>' => Tok::Gt,
                    other => return Err(err(format!("unexpected character {other:?}"))),
                }
            }
        };
        out.push(Token { tok, line, column });
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "del" => Tok::Del,
        "print" => Tok::Print,
        "and" => Tok::And,
        "or" => Tok::Or,
        "not" => Tok::Not,
        "true" => Tok::True,
        "false" => Tok::False,
        "none" => Tok::None,
        _ => return None,
    })
}

pub fn is_keyword(word: &str) -> bool {
    keyword(word).is_some()
}

fn lex_number(lx: &mut Lexer<'_>) -> Result<Tok, String> {
    let mut text = String::new();
    let mut is_float = false;
    while let Some(c) = lx.peek().filter(char::is_ascii_digit) {
        text.push(c);
        lx.bump();
    }
    if lx.peek() == Some('.') {
        is_float = true;
        text.push('.');
        lx.bump();
        let mut frac = 0;
        while let Some(c) = lx.peek().filter(char::is_ascii_digit) {
            text.push(c);
            lx.bump();
            frac += 1;
        }
        if frac == 0 {
            return Err("expected digits after decimal point".into());
        }
    }
    if matches!(lx.peek(), Some('e' | 'E')) {
        is_float = true;
        text.push('e');
        lx.bump();
        if let Some(sign) = lx.peek().filter(|c| *c == '+' || *c == '-') {
            text.push(sign);
            lx.bump();
        }
        let mut exp = 0;
        while let Some(c) = lx.peek().filter(char::is_ascii_digit) {
            text.push(c);
            lx.bump();
            exp += 1;
        }
        if exp == 0 {
            return Err("expected digits in exponent".into());
        }
    }
    if lx.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
        return Err(format!("invalid number literal '{text}'"));
    }
    if is_float {
        text.parse::<f64>()
            .map(Tok::Float)
            .map_err(|e| format!("invalid float literal '{text}': {e}"))
    } else {
        text.parse::<i64>()
            .map(Tok::Int)
            .map_err(|_| format!("integer literal too large '{text}'"))
    }
}

fn lex_string(lx: &mut Lexer<'_>) -> Result<Tok, String> {
    let quote = lx.bump().expect("caller peeked a quote");
    let mut s = String::new();
    loop {
        match lx.bump() {
            None | Some('\n') => return Err("unterminated string literal".into()),
            Some(c) if c == quote => return Ok(Tok::Str(s)),
            Some('\\') => match lx.bump() {
                Some('n') => s.push('\n'),
                Some('t') => s.push('\t'),
                Some('r') => s.push('\r'),
                Some('\\') => s.push('\\'),
                Some('"') => s.push('"'),
                Some('\'') => s.push('\''),
                Some('u') => s.push(lex_unicode_escape(lx)?),
                Some(other) => return Err(format!("unknown escape '\\{other}'")),
                None => return Err("unterminated string literal".into()),
            },
            Some(c) => s.push(c),
        }
    }
}

fn lex_unicode_escape(lx: &mut Lexer<'_>) -> Result<char, String> {
    if !lx.eat('{') {
        return Err("expected '{' after \\u".into());
    }
    let mut hex = String::new();
    loop {
        match lx.bump() {
            Some('}') => break,
            Some(c) if c.is_ascii_hexdigit() && hex.len() < 6 => hex.push(c),
            _ => return Err("malformed \\u{...} escape".into()),
        }
    }
    u32::from_str_radix(&hex, 16)
        .ok()
        .and_then(char::from_u32)
        .ok_or_else(|| format!("invalid code point \\u{{{hex}}}"))
}
