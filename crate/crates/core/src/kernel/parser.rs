use super::ast::{BinaryOp, Builtin, Expr, Literal, Program, Stmt, UnaryOp};
use super::error::SyntaxError;
use super::lexer::{tokenize, Tok, Token};

/// Parses cell source into a [`Program`].
pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> SyntaxError {
        let t = &self.tokens[self.pos];
        SyntaxError {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {what}, found {}", self.peek().describe())))
        }
    }

    fn program(&mut self) -> Result<Program, SyntaxError> {
        let mut statements = Vec::new();
        loop {
            while matches!(self.peek(), Tok::Newline | Tok::Semi) {
                self.next();
            }
            if *self.peek() == Tok::Eof {
                return Ok(Program { statements });
            }
            statements.push(self.statement()?);
            match self.peek() {
                Tok::Newline | Tok::Semi | Tok::Eof => {}
                other => {
                    return Err(self.error_here(format!(
                        "expected end of statement, found {}",
                        other.describe()
                    )))
                }
            }
        }
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        match self.peek().clone() {
            Tok::Del => {
                self.next();
                match self.next().tok {
                    Tok::Ident(name) => Ok(Stmt::Delete(name)),
                    other => {
                        self.pos -= 1;
                        Err(self.error_here(format!(
                            "expected name after 'del', found {}",
                            other.describe()
                        )))
                    }
                }
            }
            Tok::Print => {
                self.next();
                self.expect(Tok::LParen, "'(' after print")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Stmt::Print(e))
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::Assign => {
                self.next();
                self.next();
                Ok(Stmt::Assign(name, self.expr()?))
            }
            _ => Ok(Stmt::Expr(self.expr()?)),
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.next();
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinaryOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while *self.peek() == Tok::And {
            self.next();
            let rhs = self.not_expr()?;
            lhs = Expr::Binary(BinaryOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Tok::Not {
            self.next();
            let inner = self.not_expr()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let Some(op) = cmp_op(self.peek()) else {
            return Ok(lhs);
        };
        self.next();
        let rhs = self.additive()?;
        if cmp_op(self.peek()).is_some() {
            return Err(self.error_here("comparisons cannot be chained"));
        }
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                Tok::Percent => BinaryOp::Mod,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Tok::Minus {
            self.next();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LBracket {
            self.next();
            let index = self.expr()?;
            self.expect(Tok::RBracket, "']'")?;
            e = Expr::Index(Box::new(e), Box::new(index));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let start = self.pos;
        let tok = self.next().tok;
        Ok(match tok {
            Tok::Int(i) => Expr::Literal(Literal::Int(i)),
            Tok::Float(f) => Expr::Literal(Literal::Float(f)),
            Tok::Str(s) => Expr::Literal(Literal::Str(s)),
            Tok::True => Expr::Literal(Literal::Bool(true)),
            Tok::False => Expr::Literal(Literal::Bool(false)),
            Tok::None => Expr::Literal(Literal::None),
            Tok::Ident(name) if *self.peek() == Tok::LParen => {
                let Some(builtin) = Builtin::from_name(&name) else {
                    self.pos = start;
                    return Err(self.error_here(format!("unknown function '{name}'")));
                };
                self.next();
                let args = self.sequence(Tok::RParen, "')'")?;
                Expr::Call(builtin, args)
            }
            Tok::Ident(name) => Expr::Name(name),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                e
            }
            Tok::LBracket => Expr::List(self.sequence(Tok::RBracket, "']'")?),
            other => {
                self.pos = start;
                return Err(self.error_here(format!("expected expression, found {}", other.describe())));
            }
        })
    }

    /// Comma-separated expressions up to `close`, which is consumed.
    fn sequence(&mut self, close: Tok, what: &str) -> Result<Vec<Expr>, SyntaxError> {
        let mut items = Vec::new();
        if *self.peek() == close {
            self.next();
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if *self.peek() == Tok::Comma {
                self.next();
                continue;
            }
            self.expect(close.clone(), what)?;
            return Ok(items);
        }
    }
}

fn cmp_op(tok: &Tok) -> Option<BinaryOp> {
    Some(match tok {
        Tok::EqEq => BinaryOp::Eq,
        Tok::NotEq => BinaryOp::Ne,
        Tok::Lt => BinaryOp::Lt,
        Tok::Le => BinaryOp::Le,
        Tok::Gt => BinaryOp::Gt,
        Tok::Ge => BinaryOp::Ge,
        _ => return None,
    })
}
