//! Expression language for problem files.
//!
//! Deliberately small: arithmetic (+ - * / ^), the functions exp, sin, cos,
//! sinh, cosh, the variables t and x1..xN, and the constants pi and e.
//! Anything else is rejected at parse time.

use std::fmt;

#[derive(Debug, Clone)]
pub struct ParseError {
    pub message: String,
    pub position: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at byte {})", self.message, self.position)
    }
}

impl std::error::Error for ParseError {}

fn err<T>(message: impl Into<String>, position: usize) -> Result<T, ParseError> {
    Err(ParseError {
        message: message.into(),
        position,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Sin,
    Cos,
    Sinh,
    Cosh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Self::Exp),
            "sin" => Some(Self::Sin),
            "cos" => Some(Self::Cos),
            "sinh" => Some(Self::Sinh),
            "cosh" => Some(Self::Cosh),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Exp => v.exp(),
            Self::Sin => v.sin(),
            Self::Cos => v.cos(),
            Self::Sinh => v.sinh(),
            Self::Cosh => v.cosh(),
        }
    }
}

#[derive(Debug, Clone)]
enum Ast {
    Number(f64),
    Time,
    /// Zero-based state component (x1 is 0).
    State(usize),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

impl Ast {
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Ast::Number(v) => *v,
            Ast::Time => t,
            Ast::State(k) => x[*k],
            Ast::Neg(a) => -a.eval(t, x),
            Ast::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Ast::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Ast::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Ast::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Ast::Pow(a, b) => a.eval(t, x).powf(b.eval(t, x)),
            Ast::Call(f, a) => f.apply(a.eval(t, x)),
        }
    }

    fn uses_state(&self) -> bool {
        match self {
            Ast::Number(_) | Ast::Time => false,
            Ast::State(_) => true,
            Ast::Neg(a) | Ast::Call(_, a) => a.uses_state(),
            Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b)
            | Ast::Pow(a, b) => a.uses_state() || b.uses_state(),
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
    Open,
    Close,
}

fn tokenize(source: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                tokens.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                tokens.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                tokens.push((Token::Slash, i));
                i += 1;
            }
            '^' => {
                tokens.push((Token::Caret, i));
                i += 1;
            }
            '(' => {
                tokens.push((Token::Open, i));
                i += 1;
            }
            ')' => {
                tokens.push((Token::Close, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent suffix: e or E followed by an optionally signed integer
                if i < bytes.len()
                    && matches!(bytes[i] as char, 'e' | 'E')
                    && i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_digit()
                        || (matches!(bytes[i + 1] as char, '+' | '-')
                            && i + 2 < bytes.len()
                            && bytes[i + 2].is_ascii_digit()))
                {
                    i += 2;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &source[start..i];
                match text.parse::<f64>() {
                    Ok(v) => tokens.push((Token::Number(v), start)),
                    Err(_) => return err(format!("bad number `{text}`"), start),
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                tokens.push((Token::Ident(source[start..i].to_string()), start));
            }
            other => return err(format!("unexpected character `{other}`"), i),
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(Token, usize)],
    cursor: usize,
    dim: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.cursor)
            .map_or(self.end, |(_, p)| *p)
    }

    fn advance(&mut self) -> Option<Token> {
        let token = self.tokens.get(self.cursor).map(|(t, _)| t.clone());
        self.cursor += 1;
        token
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.advance() {
            Some(Token::Close) => Ok(()),
            _ => err("expected `)`", self.position()),
        }
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Ast, ParseError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (lbp, rbp, op) = match self.peek() {
                Some(Token::Plus) => (1, 2, Token::Plus),
                Some(Token::Minus) => (1, 2, Token::Minus),
                Some(Token::Star) => (3, 4, Token::Star),
                Some(Token::Slash) => (3, 4, Token::Slash),
                Some(Token::Caret) => (6, 5, Token::Caret), // right-assoc
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.advance();
            let rhs = self.parse_expr(rbp)?;
            lhs = match op {
                Token::Plus => Ast::Add(Box::new(lhs), Box::new(rhs)),
                Token::Minus => Ast::Sub(Box::new(lhs), Box::new(rhs)),
                Token::Star => Ast::Mul(Box::new(lhs), Box::new(rhs)),
                Token::Slash => Ast::Div(Box::new(lhs), Box::new(rhs)),
                Token::Caret => Ast::Pow(Box::new(lhs), Box::new(rhs)),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Ast, ParseError> {
        let position = self.position();
        match self.advance() {
            Some(Token::Number(v)) => Ok(Ast::Number(v)),
            Some(Token::Minus) => {
                // binds tighter than +- and */ but looser than ^,
                // so -x^2 reads as -(x^2)
                let inner = self.parse_expr(3)?;
                Ok(Ast::Neg(Box::new(inner)))
            }
            Some(Token::Open) => {
                let inner = self.parse_expr(0)?;
                self.expect_close()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => self.parse_ident(&name, position),
            _ => err("expected a value", position),
        }
    }

    fn parse_ident(&mut self, name: &str, position: usize) -> Result<Ast, ParseError> {
        if let Some(func) = Func::from_name(name) {
            return match self.advance() {
                Some(Token::Open) => {
                    let argument = self.parse_expr(0)?;
                    self.expect_close()?;
                    Ok(Ast::Call(func, Box::new(argument)))
                }
                _ => err(format!("`{name}` needs parenthesized argument"), position),
            };
        }
        match name {
            "t" => Ok(Ast::Time),
            "pi" => Ok(Ast::Number(std::f64::consts::PI)),
            "e" => Ok(Ast::Number(std::f64::consts::E)),
            _ if name.starts_with('x') && name[1..].chars().all(|c| c.is_ascii_digit()) => {
                let index: usize = name[1..]
                    .parse()
                    .map_err(|_| ParseError {
                        message: format!("bad state variable `{name}`"),
                        position,
                    })?;
                if index == 0 || index > self.dim {
                    return err(
                        format!("state variable `{name}` outside x1..x{}", self.dim),
                        position,
                    );
                }
                Ok(Ast::State(index - 1))
            }
            _ => err(format!("unknown identifier `{name}`"), position),
        }
    }
}

/// A parsed expression over (t, x1..xN).
#[derive(Debug, Clone)]
pub struct Expression {
    ast: Ast,
}

impl Expression {
    pub fn parse(source: &str, dim: usize) -> Result<Self, ParseError> {
        let tokens = tokenize(source)?;
        if tokens.is_empty() {
            return err("empty expression", 0);
        }
        let mut parser = Parser {
            tokens: &tokens,
            cursor: 0,
            dim,
            end: source.len(),
        };
        let ast = parser.parse_expr(0)?;
        if parser.cursor != tokens.len() {
            return err("trailing input", parser.position());
        }
        Ok(Self { ast })
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.ast.eval(t, x)
    }

    pub fn eval_time(&self, t: f64) -> f64 {
        self.ast.eval(t, &[])
    }

    /// True when the expression only depends on t.
    pub fn is_time_only(&self) -> bool {
        !self.ast.uses_state()
    }

    /// True when the expression is the literal constant `value`.
    pub fn is_literal(&self, value: f64) -> bool {
        matches!(self.ast, Ast::Number(v) if v == value)
    }
}
