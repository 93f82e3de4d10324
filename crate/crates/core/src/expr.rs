//! Arithmetic expressions for user-supplied Hamiltonians.
//!
//! The language covers variables `x1..xn`, the operators `+ - * / ^`,
//! parentheses, decimal literals and the functions `exp`, `log`, `cosh`,
//! `abs`. Expressions carry exact symbolic first and second partials, which
//! the condition checkers use to evaluate mixed partials of V on grids.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    /// 0-based coordinate index.
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Func(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Cosh,
    Abs,
    // Derivative-only nodes; not part of the surface syntax.
    Sinh,
    Sign,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Cosh => x.cosh(),
            Func::Abs => x.abs(),
            Func::Sinh => x.sinh(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A parsed Hamiltonian over `n` coordinates.
#[derive(Debug, Clone)]
pub struct HamiltonianExpr {
    dim: usize,
    root: Node,
}

impl HamiltonianExpr {
    /// Parses `text` as an expression in the variables `x1..x{n}`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            dim: n,
        };
        p.skip_ws();
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::ExprSyntax {
                pos: p.pos,
                msg: "trailing input".into(),
            });
        }
        Ok(Self { dim: n, root })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates the expression at `x` (length `n`).
    pub fn eval(&self, x: &[f64]) -> f64 {
        eval(&self.root, x)
    }

    /// Exact symbolic partial with respect to coordinate `i` (1-based).
    pub fn partial(&self, i: usize) -> Result<Self> {
        if i == 0 || i > self.dim {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim,
            });
        }
        Ok(Self {
            dim: self.dim,
            root: simplify(diff(&self.root, i - 1)),
        })
    }

    /// Exact symbolic mixed partial d_i d_j V (1-based indices).
    pub fn second_partial(&self, i: usize, j: usize) -> Result<Self> {
        self.partial(i)?.partial(j)
    }
}

fn eval(node: &Node, x: &[f64]) -> f64 {
    match node {
        Node::Const(c) => *c,
        Node::Var(k) => x[*k],
        Node::Add(a, b) => eval(a, x) + eval(b, x),
        Node::Sub(a, b) => eval(a, x) - eval(b, x),
        Node::Mul(a, b) => eval(a, x) * eval(b, x),
        Node::Div(a, b) => eval(a, x) / eval(b, x),
        Node::Pow(a, b) => eval(a, x).powf(eval(b, x)),
        Node::Neg(a) => -eval(a, x),
        Node::Func(f, a) => f.apply(eval(a, x)),
    }
}

fn diff(node: &Node, k: usize) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(v) => Node::Const(if *v == k { 1.0 } else { 0.0 }),
        Node::Add(a, b) => Node::Add(Box::new(diff(a, k)), Box::new(diff(b, k))),
        Node::Sub(a, b) => Node::Sub(Box::new(diff(a, k)), Box::new(diff(b, k))),
        Node::Mul(a, b) => Node::Add(
            Box::new(Node::Mul(Box::new(diff(a, k)), b.clone())),
            Box::new(Node::Mul(a.clone(), Box::new(diff(b, k)))),
        ),
        Node::Div(a, b) => {
            // (a'b - ab') / b^2
            let num = Node::Sub(
                Box::new(Node::Mul(Box::new(diff(a, k)), b.clone())),
                Box::new(Node::Mul(a.clone(), Box::new(diff(b, k)))),
            );
            Node::Div(
                Box::new(num),
                Box::new(Node::Pow(b.clone(), Box::new(Node::Const(2.0)))),
            )
        }
        Node::Pow(a, b) => match **b {
            Node::Const(c) => {
                // c * a^(c-1) * a'
                Node::Mul(
                    Box::new(Node::Mul(
                        Box::new(Node::Const(c)),
                        Box::new(Node::Pow(a.clone(), Box::new(Node::Const(c - 1.0)))),
                    )),
                    Box::new(diff(a, k)),
                )
            }
            _ => {
                // a^b * (b' log a + b a'/a)
                let inner = Node::Add(
                    Box::new(Node::Mul(
                        Box::new(diff(b, k)),
                        Box::new(Node::Func(Func::Log, a.clone())),
                    )),
                    Box::new(Node::Div(
                        Box::new(Node::Mul(b.clone(), Box::new(diff(a, k)))),
                        a.clone(),
                    )),
                );
                Node::Mul(Box::new(node.clone()), Box::new(inner))
            }
        },
        Node::Neg(a) => Node::Neg(Box::new(diff(a, k))),
        Node::Func(f, a) => {
            let da = diff(a, k);
            let outer = match f {
                Func::Exp => Node::Func(Func::Exp, a.clone()),
                Func::Log => Node::Div(Box::new(Node::Const(1.0)), a.clone()),
                Func::Cosh => Node::Func(Func::Sinh, a.clone()),
                Func::Sinh => Node::Func(Func::Cosh, a.clone()),
                Func::Abs => Node::Func(Func::Sign, a.clone()),
                Func::Sign => Node::Const(0.0),
            };
            Node::Mul(Box::new(outer), Box::new(da))
        }
    }
}

fn simplify(node: Node) -> Node {
    match node {
        Node::Add(a, b) => {
            let (a, b) = (simplify(*a), simplify(*b));
            match (&a, &b) {
                (Node::Const(x), Node::Const(y)) => Node::Const(x + y),
                (Node::Const(c), _) if *c == 0.0 => b,
                (_, Node::Const(c)) if *c == 0.0 => a,
                _ => Node::Add(Box::new(a), Box::new(b)),
            }
        }
        Node::Sub(a, b) => {
            let (a, b) = (simplify(*a), simplify(*b));
            match (&a, &b) {
                (Node::Const(x), Node::Const(y)) => Node::Const(x - y),
                (_, Node::Const(c)) if *c == 0.0 => a,
                (Node::Const(c), _) if *c == 0.0 => Node::Neg(Box::new(b)),
                _ => Node::Sub(Box::new(a), Box::new(b)),
            }
        }
        Node::Mul(a, b) => {
            let (a, b) = (simplify(*a), simplify(*b));
            match (&a, &b) {
                (Node::Const(x), Node::Const(y)) => Node::Const(x * y),
                (Node::Const(c), _) | (_, Node::Const(c)) if *c == 0.0 => Node::Const(0.0),
                (Node::Const(c), _) if *c == 1.0 => b,
                (_, Node::Const(c)) if *c == 1.0 => a,
                _ => Node::Mul(Box::new(a), Box::new(b)),
            }
        }
        Node::Div(a, b) => {
            let (a, b) = (simplify(*a), simplify(*b));
            match (&a, &b) {
                (Node::Const(c), _) if *c == 0.0 => Node::Const(0.0),
                (_, Node::Const(c)) if *c == 1.0 => a,
                (Node::Const(x), Node::Const(y)) if *y != 0.0 => Node::Const(x / y),
                _ => Node::Div(Box::new(a), Box::new(b)),
            }
        }
        Node::Pow(a, b) => {
            let (a, b) = (simplify(*a), simplify(*b));
            match (&a, &b) {
                (_, Node::Const(c)) if *c == 0.0 => Node::Const(1.0),
                (_, Node::Const(c)) if *c == 1.0 => a,
                (Node::Const(x), Node::Const(y)) => Node::Const(x.powf(*y)),
                _ => Node::Pow(Box::new(a), Box::new(b)),
            }
        }
        Node::Neg(a) => {
            let a = simplify(*a);
            match a {
                Node::Const(c) => Node::Const(-c),
                Node::Neg(inner) => *inner,
                _ => Node::Neg(Box::new(a)),
            }
        }
        Node::Func(f, a) => {
            let a = simplify(*a);
            if let Node::Const(c) = a {
                Node::Const(f.apply(c))
            } else {
                Node::Func(f, Box::new(a))
            }
        }
        other => other,
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Node::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Right-associative; unary minus binds looser than `^`.
            let exp = self.power_rhs()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn power_rhs(&mut self) -> Result<Node> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.power_rhs()?)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(Error::ExprSyntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    });
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(Error::ExprSyntax {
                pos: self.pos,
                msg: "expected number, variable, function or `(`".into(),
            }),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| Error::ExprSyntax {
                pos: start,
                msg: format!("bad numeric literal `{text}`"),
            })
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let f = match name {
                "exp" => Func::Exp,
                "log" => Func::Log,
                "cosh" => Func::Cosh,
                "abs" => Func::Abs,
                _ => return Err(Error::UnknownFunction(name.into())),
            };
            self.pos += 1;
            let arg = self.expr()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return Err(Error::ExprSyntax {
                    pos: self.pos,
                    msg: "expected `)` after function argument".into(),
                });
            }
            self.pos += 1;
            return Ok(Node::Func(f, Box::new(arg)));
        }
        if let Some(num) = name.strip_prefix('x') {
            if let Ok(k) = num.parse::<usize>() {
                if k >= 1 && k <= self.dim {
                    return Ok(Node::Var(k - 1));
                }
                return Err(Error::UnknownVariable(name.into()));
            }
        }
        Err(Error::UnknownVariable(name.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_evaluates() {
        let e = HamiltonianExpr::parse("x1^2/2", 1).unwrap();
        assert_abs_diff_eq!(e.eval(&[2.0]), 2.0);
    }

    #[test]
    fn mixed_partial_of_bilinear_is_constant() {
        let e = HamiltonianExpr::parse("0.25*x1*x2", 2).unwrap();
        let d12 = e.second_partial(1, 2).unwrap();
        assert_abs_diff_eq!(d12.eval(&[3.7, -1.2]), 0.25);
        assert_abs_diff_eq!(d12.eval(&[0.0, 5.0]), 0.25);
    }

    #[test]
    fn unknown_variable_rejected() {
        assert!(matches!(
            HamiltonianExpr::parse("exp(x3)", 2),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn unknown_function_rejected() {
        assert!(matches!(
            HamiltonianExpr::parse("tan(x1)", 1),
            Err(Error::UnknownFunction(_))
        ));
    }

    #[test]
    fn syntax_error_located() {
        assert!(matches!(
            HamiltonianExpr::parse("x1 + ", 1),
            Err(Error::ExprSyntax { .. })
        ));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = HamiltonianExpr::parse("-x1^2 + 2*3", 1).unwrap();
        // -(x1^2) + 6
        assert_abs_diff_eq!(e.eval(&[2.0]), 2.0);
    }

    // Symbolic partials vs central finite differences on random points.
    #[test]
    fn partials_match_finite_differences() {
        let exprs = [
            ("0.25*x1*x2 + 0.5*(x1^2+x2^2)", 2),
            ("exp(0.3*x1) + log(2 + cosh(x2))", 2),
            ("x1^3/6 - x1*x2/4", 2),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (text, n) in exprs {
            let e = HamiltonianExpr::parse(text, n).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
                for i in 1..=n {
                    let h = 1e-5;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i - 1] += h;
                    xm[i - 1] -= h;
                    let fd = (e.eval(&xp) - e.eval(&xm)) / (2.0 * h);
                    let sym = e.partial(i).unwrap().eval(&x);
                    assert_abs_diff_eq!(sym, fd, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn second_partials_match_finite_differences() {
        let e = HamiltonianExpr::parse("exp(0.2*x1*x2) + x1^2", 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-4;
            let ev = |a: f64, b: f64| e.eval(&[a, b]);
            let fd = (ev(x[0] + h, x[1] + h) - ev(x[0] + h, x[1] - h) - ev(x[0] - h, x[1] + h)
                + ev(x[0] - h, x[1] - h))
                / (4.0 * h * h);
            let sym = e.second_partial(1, 2).unwrap().eval(&x);
            assert_abs_diff_eq!(sym, fd, epsilon = 1e-6);
        }
    }
}
