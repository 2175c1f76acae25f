//! Closed-form scalar expressions for gate-matrix entries.
//!
//! The grammar covers rationals, square roots of rationals, and phase
//! exponentials `cis(p/q) = e^(i*pi*p/q)`, composed with `+ - * /`. Every
//! expression evaluates to any requested precision.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom
//! atom   := INT | 'rat' '(' INT '/' INT ')' | 'sqrt' '(' ratio ')'
//!         | 'cis' '(' ratio ')' | '(' expr ')'
//! ratio  := INT ('/' INT)?
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::fixed::{sincos_pi_ratio, Fixed, FixedComplex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("square root of negative rational {0}")]
    NegativeSqrt(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// Parsed expression tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Rat(BigRational),
    Sqrt(BigRational),
    Cis(BigRational),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { text: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.text.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    pub fn int(n: i64) -> Expr {
        Expr::Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(p: i64, q: i64) -> Expr {
        Expr::Rat(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    /// Evaluate with per-component error at most `2^-k`.
    pub fn eval(&self, k: u32) -> Result<FixedComplex, ExprError> {
        // Guard bits absorb the rounding of every interior operation; the
        // expressions that occur in gate tables are tiny, so 32 is ample.
        let v = self.eval_at(k + 32)?;
        Ok(v.rescale(k))
    }

    fn eval_at(&self, bits: u32) -> Result<FixedComplex, ExprError> {
        Ok(match self {
            Expr::Rat(r) => FixedComplex::new(
                Fixed::from_ratio(r.numer(), r.denom(), bits),
                Fixed::zero(bits),
            ),
            Expr::Sqrt(r) => {
                if r.is_negative() {
                    return Err(ExprError::NegativeSqrt(r.to_string()));
                }
                let v = Fixed::from_ratio(r.numer(), r.denom(), 2 * bits);
                FixedComplex::new(v.sqrt(bits), Fixed::zero(bits))
            }
            Expr::Cis(r) => {
                let (s, c) = sincos_pi_ratio(r.numer(), r.denom(), bits);
                FixedComplex::new(c, s)
            }
            Expr::Neg(e) => e.eval_at(bits)?.neg(),
            Expr::Add(a, b) => a.eval_at(bits)?.add(&b.eval_at(bits)?),
            Expr::Sub(a, b) => a.eval_at(bits)?.sub(&b.eval_at(bits)?),
            Expr::Mul(a, b) => a.eval_at(bits)?.mul(&b.eval_at(bits)?, bits),
            Expr::Div(a, b) => {
                let num = a.eval_at(bits)?;
                let den = b.eval_at(bits)?;
                if den.is_zero() {
                    return Err(ExprError::DivisionByZero);
                }
                // num / den = num * conj(den) / |den|^2
                let nsq = den.norm_sqr();
                let scaled = num.mul_exact(&den.conj());
                FixedComplex::new(scaled.re.div(&nsq, bits), scaled.im.div(&nsq, bits))
            }
        })
    }

    /// Render in the literal grammar.
    pub fn to_text(&self) -> String {
        fn rat(r: &BigRational) -> String {
            if r.denom() == &BigInt::from(1) {
                format!("{}", r.numer())
            } else {
                format!("rat({}/{})", r.numer(), r.denom())
            }
        }
        match self {
            Expr::Rat(r) => rat(r),
            Expr::Sqrt(r) => format!("sqrt({}/{})", r.numer(), r.denom()),
            Expr::Cis(r) => format!("cis({}/{})", r.numer(), r.denom()),
            Expr::Neg(e) => format!("-({})", e.to_text()),
            Expr::Add(a, b) => format!("({}+{})", a.to_text(), b.to_text()),
            Expr::Sub(a, b) => format!("({}-{})", a.to_text(), b.to_text()),
            Expr::Mul(a, b) => format!("({}*{})", a.to_text(), b.to_text()),
            Expr::Div(a, b) => format!("({}/{})", a.to_text(), b.to_text()),
        }
    }
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.eat(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => Ok(Expr::Rat(BigRational::from_integer(self.int()?))),
            Some(c) if c.is_ascii_alphabetic() => self.call(),
            _ => Err(self.err("expected a literal")),
        }
    }

    fn call(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.text[start..self.pos]).unwrap().to_string();
        self.eat(b'(')?;
        let r = self.ratio()?;
        self.eat(b')')?;
        match name.as_str() {
            "rat" => Ok(Expr::Rat(r)),
            "sqrt" => Ok(Expr::Sqrt(r)),
            "cis" => Ok(Expr::Cis(r)),
            _ => {
                self.pos = start;
                Err(self.err(&format!("unknown function '{name}'")))
            }
        }
    }

    fn ratio(&mut self) -> Result<BigRational, ExprError> {
        let p = self.int()?;
        if self.peek() == Some(b'/') {
            self.pos += 1;
            let q = self.int()?;
            if q.is_zero() {
                return Err(ExprError::DivisionByZero);
            }
            Ok(BigRational::new(p, q))
        } else {
            Ok(BigRational::from_integer(p))
        }
    }

    fn int(&mut self) -> Result<BigInt, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(self.err("expected an integer"));
        }
        let s = std::str::from_utf8(&self.text[start..self.pos]).unwrap();
        s.parse::<BigInt>().map_err(|_| self.err("bad integer"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_f64(text: &str) -> (f64, f64) {
        Expr::parse(text).unwrap().eval(96).unwrap().to_f64_pair()
    }

    #[test]
    fn rational_literals() {
        assert_eq!(eval_f64("rat(3/5)"), (0.6, 0.0));
        assert_eq!(eval_f64("1"), (1.0, 0.0));
        assert_eq!(eval_f64("-1"), (-1.0, 0.0));
        assert_eq!(eval_f64("rat(-3/5)"), (-0.6, 0.0));
    }

    #[test]
    fn sqrt_and_cis() {
        let (re, im) = eval_f64("sqrt(1/2)");
        assert!((re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(im, 0.0);
        let (re, im) = eval_f64("cis(1/2)");
        assert!(re.abs() < 1e-15 && (im - 1.0).abs() < 1e-15);
        let (re, im) = eval_f64("cis(1/4)");
        assert!((re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((im - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn composed_f_entry() {
        let (re, im) = eval_f64("rat(3/5)+rat(4/5)*cis(1/2)");
        assert!((re - 0.6).abs() < 1e-15);
        assert!((im - 0.8).abs() < 1e-15);
    }

    #[test]
    fn division_composes() {
        let (re, im) = eval_f64("1/sqrt(2)");
        assert!((re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(im, 0.0);
        // complex division: i / i = 1
        let (re, im) = eval_f64("cis(1/2)/cis(1/2)");
        assert!((re - 1.0).abs() < 1e-15 && im.abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("rat(1/0)").is_err());
        assert!(Expr::parse("foo(1/2)").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("sqrt(1/2) junk").is_err());
    }

    #[test]
    fn negative_sqrt_rejected_at_eval() {
        let e = Expr::parse("sqrt(-1/2)").unwrap();
        assert!(matches!(e.eval(64), Err(ExprError::NegativeSqrt(_))));
    }

    #[test]
    fn roundtrip_text() {
        for t in ["rat(3/5)+rat(4/5)*cis(1/2)", "sqrt(1/2)", "-(sqrt(1/2))"] {
            let e = Expr::parse(t).unwrap();
            let e2 = Expr::parse(&e.to_text()).unwrap();
            let (a, b) = e.eval(96).unwrap().to_f64_pair();
            let (c, d) = e2.eval(96).unwrap().to_f64_pair();
            assert_eq!((a, b), (c, d));
        }
    }
}
