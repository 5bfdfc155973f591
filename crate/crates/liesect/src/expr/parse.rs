use thiserror::Error;

use super::ast::{BinaryOp, ExprAst, ExprKind, Func, Span, UnaryOp, Var, VarKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset} (variables are g1..gn, h1..hn, x1..xn)")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unknown function `{name}` at byte {offset} (supported: exp, log, sin, cos, sqrt)")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    /// Byte offset the error points at.
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::UnknownFunction { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Number(n) => format!("number `{n}`"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_whitespace(&mut self) {
        while matches!(self.peek_byte(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn next_token(&mut self) -> Result<(Token, Span), ParseError> {
        self.skip_whitespace();
        let start = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok((Token::Eof, Span::new(start, start)));
        };
        let simple = match b {
            b'+' => Some(Token::Plus),
            b'-' => Some(Token::Minus),
            b'*' => Some(Token::Star),
            b'/' => Some(Token::Slash),
            b'^' => Some(Token::Caret),
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            self.pos += 1;
            return Ok((tok, Span::new(start, self.pos)));
        }
        if b.is_ascii_digit() {
            return self.lex_number(start);
        }
        if b.is_ascii_alphabetic() || b == b'_' {
            while matches!(self.peek_byte(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                self.pos += 1;
            }
            let name = self.src[start..self.pos].to_string();
            return Ok((Token::Ident(name), Span::new(start, self.pos)));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ParseError::Syntax {
            offset: start,
            message: format!("unexpected character `{ch}`"),
        })
    }

    fn lex_number(&mut self, start: usize) -> Result<(Token, Span), ParseError> {
        while matches!(self.peek_byte(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek_byte() == Some(b'.') {
            self.pos += 1;
            while matches!(self.peek_byte(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek_byte(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek_byte(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek_byte(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `2e` followed by a non-digit: the `e` was not an exponent.
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("invalid number literal `{text}`"),
        })?;
        Ok((Token::Number(value), Span::new(start, self.pos)))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Token,
    span: Span,
}

/// Parse an expression string into an AST.
///
/// Precedence, tightest first: unary minus, `^` (right-associative),
/// `*` `/`, `+` `-`.
pub fn parse(text: &str) -> Result<ExprAst, ParseError> {
    let mut lexer = Lexer::new(text);
    let (current, span) = lexer.next_token()?;
    let mut parser = Parser {
        lexer,
        current,
        span,
    };
    let ast = parser.parse_expr()?;
    if parser.current != Token::Eof {
        return Err(ParseError::Syntax {
            offset: parser.span.start,
            message: format!("unexpected {}", parser.current.describe()),
        });
    }
    Ok(ast)
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ParseError> {
        let (tok, span) = self.lexer.next_token()?;
        self.current = tok;
        self.span = span;
        Ok(())
    }

    fn parse_expr(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.current {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.advance()?;
            let rhs = self.parse_term()?;
            let span = Span::new(lhs.span.start, rhs.span.end);
            lhs = ExprAst::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<ExprAst, ParseError> {
        let mut lhs = self.parse_power()?;
        loop {
            let op = match self.current {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => break,
            };
            self.advance()?;
            let rhs = self.parse_power()?;
            let span = Span::new(lhs.span.start, rhs.span.end);
            lhs = ExprAst::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn parse_power(&mut self) -> Result<ExprAst, ParseError> {
        let base = self.parse_unary()?;
        if self.current == Token::Caret {
            self.advance()?;
            let exponent = self.parse_power()?;
            let span = Span::new(base.span.start, exponent.span.end);
            return Ok(ExprAst::new(
                ExprKind::Binary {
                    op: BinaryOp::Pow,
                    lhs: Box::new(base),
                    rhs: Box::new(exponent),
                },
                span,
            ));
        }
        Ok(base)
    }

    fn parse_unary(&mut self) -> Result<ExprAst, ParseError> {
        if self.current == Token::Minus {
            let start = self.span.start;
            self.advance()?;
            let operand = self.parse_unary()?;
            let span = Span::new(start, operand.span.end);
            return Ok(ExprAst::new(
                ExprKind::Unary {
                    op: UnaryOp::Neg,
                    operand: Box::new(operand),
                },
                span,
            ));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<ExprAst, ParseError> {
        let span = self.span;
        match self.current.clone() {
            Token::Number(value) => {
                self.advance()?;
                Ok(ExprAst::new(ExprKind::Constant(value), span))
            }
            Token::LParen => {
                self.advance()?;
                let inner = self.parse_expr()?;
                if self.current != Token::RParen {
                    return Err(ParseError::Syntax {
                        offset: self.span.start,
                        message: format!("expected `)`, found {}", self.current.describe()),
                    });
                }
                let end = self.span.end;
                self.advance()?;
                Ok(ExprAst::new(inner.kind, Span::new(span.start, end)))
            }
            Token::Ident(name) => {
                self.advance()?;
                if self.current == Token::LParen {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownFunction {
                            name,
                            offset: span.start,
                        });
                    };
                    self.advance()?;
                    let arg = self.parse_expr()?;
                    if self.current != Token::RParen {
                        return Err(ParseError::Syntax {
                            offset: self.span.start,
                            message: format!("expected `)`, found {}", self.current.describe()),
                        });
                    }
                    let end = self.span.end;
                    self.advance()?;
                    return Ok(ExprAst::new(
                        ExprKind::Call {
                            func,
                            arg: Box::new(arg),
                        },
                        Span::new(span.start, end),
                    ));
                }
                let var = parse_var_name(&name).ok_or(ParseError::UnknownIdentifier {
                    name,
                    offset: span.start,
                })?;
                Ok(ExprAst::new(ExprKind::Var(var), span))
            }
            tok => Err(ParseError::Syntax {
                offset: span.start,
                message: format!("expected expression, found {}", tok.describe()),
            }),
        }
    }
}

/// `g<k>`, `h<k>`, `x<k>` with 1-based index `k`; anything else is rejected.
fn parse_var_name(name: &str) -> Option<Var> {
    let mut chars = name.chars();
    let kind = match chars.next()? {
        'g' => VarKind::G,
        'h' => VarKind::H,
        'x' => VarKind::X,
        _ => return None,
    };
    let digits = chars.as_str();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    if index == 0 {
        return None;
    }
    Some(Var {
        kind,
        index: index - 1,
    })
}
