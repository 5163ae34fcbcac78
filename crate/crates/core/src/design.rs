//! Covariate expansions for the working models.
//!
//! A [`DesignSpec`] is an ordered list of terms, each a pure function of one
//! covariate row. The intercept is implicit and always comes first. Terms can
//! be built directly or parsed from strings such as `x1 + x2^2 + x3*x5`, where
//! top-level `+` separates terms. Inside a term the grammar allows `+ - * ^int`,
//! numeric literals, parentheses, and the functions `exp` and `log`.

use std::fmt;

use nalgebra::DMatrix;

use crate::data::Covariates;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Column(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    pub fn col(j: usize) -> Self {
        Expr::Column(j)
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Column(j) => row[*j],
            Expr::Add(a, b) => a.eval(row) + b.eval(row),
            Expr::Sub(a, b) => a.eval(row) - b.eval(row),
            Expr::Mul(a, b) => a.eval(row) * b.eval(row),
            Expr::Neg(a) => -a.eval(row),
            Expr::Pow(a, k) => a.eval(row).powi(*k),
            Expr::Exp(a) => a.eval(row).exp(),
            Expr::Log(a) => a.eval(row).ln(),
        }
    }

    /// Number of covariate columns the expression needs (largest index + 1).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Column(j) => j + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.arity().max(b.arity()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Log(a) => a.arity(),
        }
    }

    /// Parses a single expression, resolving identifiers against `names`.
    pub fn parse(src: &str, names: &[String]) -> Result<Self> {
        let mut p = Parser::new(src, names)?;
        let e = p.sum()?;
        p.finish()?;
        Ok(e)
    }

    pub fn render(&self, names: &[String]) -> String {
        let mut s = String::new();
        self.render_into(names, 0, &mut s);
        s
    }

    fn render_into(&self, names: &[String], parent: u8, out: &mut String) {
        // precedence: 1 = sum, 2 = product, 3 = unary/power, 4 = atom
        let (prec, body) = match self {
            Expr::Const(c) => (4, format!("{c}")),
            Expr::Column(j) => (4, names.get(*j).cloned().unwrap_or_else(|| format!("x{}", j + 1))),
            Expr::Add(a, b) => (1, format!("{} + {}", a.render_prec(names, 1), b.render_prec(names, 1))),
            Expr::Sub(a, b) => (1, format!("{} - {}", a.render_prec(names, 1), b.render_prec(names, 2))),
            Expr::Mul(a, b) => (2, format!("{}*{}", a.render_prec(names, 2), b.render_prec(names, 2))),
            Expr::Neg(a) => (3, format!("-{}", a.render_prec(names, 3))),
            Expr::Pow(a, k) => (3, format!("{}^{k}", a.render_prec(names, 4))),
            Expr::Exp(a) => (4, format!("exp({})", a.render(names))),
            Expr::Log(a) => (4, format!("log({})", a.render(names))),
        };
        if prec < parent {
            out.push('(');
            out.push_str(&body);
            out.push(')');
        } else {
            out.push_str(&body);
        }
    }

    fn render_prec(&self, names: &[String], parent: u8) -> String {
        let mut s = String::new();
        self.render_into(names, parent, &mut s);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' | '-' | '*' | '^' | '(' | ')' => {
                out.push(match c {
                    '+' => Token::Plus,
                    '-' => Token::Minus,
                    '*' => Token::Star,
                    '^' => Token::Caret,
                    '(' => Token::LParen,
                    _ => Token::RParen,
                });
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // scientific notation
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::Expression(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    names: &'a [String],
}

impl<'a> Parser<'a> {
    fn new(src: &str, names: &'a [String]) -> Result<Self> {
        Ok(Self {
            tokens: tokenize(src)?,
            pos: 0,
            names,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(Error::Expression(format!("unexpected token {t:?}"))),
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Star) = self.peek() {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            let negative = matches!(self.peek(), Some(Token::Minus));
            if negative {
                self.pos += 1;
            }
            match self.next() {
                Some(Token::Num(k)) if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 => {
                    let k = k as i32;
                    return Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }));
                }
                other => return Err(Error::Expression(format!("exponent must be an integer, got {other:?}"))),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return match name.as_str() {
                        "exp" => Ok(Expr::Exp(Box::new(arg))),
                        "log" => Ok(Expr::Log(Box::new(arg))),
                        _ => Err(Error::Expression(format!("unknown function `{name}`"))),
                    };
                }
                self.names
                    .iter()
                    .position(|n| *n == name)
                    .map(Expr::Column)
                    .ok_or_else(|| Error::Expression(format!("unknown column `{name}`")))
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next() {
            Some(Token::RParen) => Ok(()),
            other => Err(Error::Expression(format!("expected `)`, got {other:?}"))),
        }
    }
}

/// One design column.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub label: String,
    pub expr: Expr,
}

impl Term {
    pub fn new(label: impl Into<String>, expr: Expr) -> Self {
        Self {
            label: label.into(),
            expr,
        }
    }

    pub fn identity(j: usize) -> Self {
        Self::new(format!("x{}", j + 1), Expr::col(j))
    }

    pub fn square(j: usize) -> Self {
        Self::new(format!("x{}^2", j + 1), Expr::Pow(Box::new(Expr::col(j)), 2))
    }

    pub fn product(j: usize, k: usize) -> Self {
        Self::new(
            format!("x{}*x{}", j + 1, k + 1),
            Expr::Mul(Box::new(Expr::col(j)), Box::new(Expr::col(k))),
        )
    }
}

/// Ordered covariate expansion; the implicit intercept is column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    input_dim: usize,
    terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(input_dim: usize, terms: Vec<Term>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.expr.arity() > input_dim) {
            return Err(Error::Expression(format!(
                "term `{}` references a column beyond the {input_dim} inputs",
                t.label
            )));
        }
        Ok(Self { input_dim, terms })
    }

    pub fn intercept_only(input_dim: usize) -> Self {
        Self {
            input_dim,
            terms: Vec::new(),
        }
    }

    pub fn main_effects(input_dim: usize) -> Self {
        Self {
            input_dim,
            terms: (0..input_dim).map(Term::identity).collect(),
        }
    }

    /// Parses a term list against covariate names. An empty string or `1`
    /// gives the intercept-only design.
    pub fn parse(src: &str, names: &[String]) -> Result<Self> {
        let src = src.trim();
        if src.is_empty() {
            return Ok(Self::intercept_only(names.len()));
        }
        let expr = Expr::parse(src, names)?;
        let mut parts = Vec::new();
        flatten_sum(expr, &mut parts);
        let mut terms = Vec::new();
        for e in parts {
            match e {
                Expr::Const(1.0) => {}
                Expr::Const(c) => {
                    return Err(Error::Expression(format!(
                        "constant term {c} is collinear with the intercept"
                    )))
                }
                e => terms.push(Term::new(e.render(names), e)),
            }
        }
        Self::new(names.len(), terms)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of design columns including the intercept.
    pub fn ncols(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn check_dim(&self, x: &Covariates) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Writes the term values (without the intercept) for one row.
    pub fn eval_terms(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.terms.iter().map(|t| t.expr.eval(row)));
    }

    /// `n × (1 + terms)` design matrix.
    pub fn matrix(&self, x: &Covariates) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut m = DMatrix::zeros(x.nrows(), self.ncols());
        for (i, row) in x.rows().enumerate() {
            m[(i, 0)] = 1.0;
            for (j, t) in self.terms.iter().enumerate() {
                m[(i, j + 1)] = t.expr.eval(row);
            }
        }
        Ok(m)
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1")?;
        for t in &self.terms {
            write!(f, " + {}", t.label)?;
        }
        Ok(())
    }
}

fn flatten_sum(e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Add(a, b) => {
            flatten_sum(*a, out);
            flatten_sum(*b, out);
        }
        other => out.push(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_names;

    fn names() -> Vec<String> {
        default_names(5)
    }

    #[test]
    fn parses_simulation_designs() {
        let d = DesignSpec::parse("x1 + x2^2 + x3*x5", &names()).unwrap();
        assert_eq!(d.ncols(), 4);
        let row = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut v = Vec::new();
        d.eval_terms(&row, &mut v);
        assert_eq!(v, [1.0, 4.0, 15.0]);
        assert_eq!(d.to_string(), "1 + x1 + x2^2 + x3*x5");
    }

    #[test]
    fn function_argument_is_one_term() {
        let d = DesignSpec::parse("x2^2 + x3 + exp(x1 + 0.5*x3*x5)", &names()).unwrap();
        assert_eq!(d.terms().len(), 3);
        let row = [0.2, 0.0, 1.0, 0.0, 2.0];
        let mut v = Vec::new();
        d.eval_terms(&row, &mut v);
        assert!((v[2] - (0.2f64 + 1.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn intercept_handling() {
        assert_eq!(DesignSpec::parse("", &names()).unwrap().ncols(), 1);
        assert_eq!(DesignSpec::parse("1", &names()).unwrap().ncols(), 1);
        assert_eq!(DesignSpec::parse("1 + x1", &names()).unwrap().ncols(), 2);
        assert!(DesignSpec::parse("2 + x1", &names()).is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(DesignSpec::parse("x9", &names()).is_err());
        assert!(DesignSpec::parse("x1^1.5", &names()).is_err());
        assert!(DesignSpec::parse("x1 +", &names()).is_err());
        assert!(DesignSpec::parse("sin(x1)", &names()).is_err());
        assert!(DesignSpec::parse("(x1", &names()).is_err());
    }

    #[test]
    fn precedence_and_unary_minus() {
        let n = names();
        let e = Expr::parse("-x1^2 + 2*x2 - (x3 - x4)", &n).unwrap();
        let row = [3.0, 1.0, 5.0, 2.0, 0.0];
        assert_eq!(e.eval(&row), -9.0 + 2.0 - 3.0);
        let e2 = Expr::parse(&e.render(&n), &n).unwrap();
        assert_eq!(e2.eval(&row), e.eval(&row));
    }

    #[test]
    fn design_matrix_checks_dimension() {
        let d = DesignSpec::main_effects(2);
        let x = Covariates::unnamed(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(d.matrix(&x), Err(Error::DimensionMismatch { expected: 2, got: 3 })));
    }
}
