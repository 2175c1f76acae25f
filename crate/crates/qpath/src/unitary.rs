//! Gate matrices with entries evaluable to any precision.
//!
//! Entries are either closed-form expressions ([`Expr`]) or exact dyadic
//! values (the case for matrices that arrive as `f64` data). Either way an
//! entry can be produced at any requested precision, which is what makes
//! the unitarity check sound: the evaluation error budget is accounted for
//! explicitly instead of trusting floating point.

use num_complex::Complex64;
use thiserror::Error;

use crate::exact::ComplexApprox;
use crate::expr::{Expr, ExprError};
use crate::fixed::{Fixed, FixedComplex};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("index ({row}, {col}) out of range for dim {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("entry count {got} does not match dim {dim} squared")]
    WrongEntryCount { got: usize, dim: usize },
    #[error("precision must be at least 1 bit")]
    ZeroPrecision,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// One matrix entry.
#[derive(Clone, Debug)]
pub enum Entry {
    /// Closed-form expression in the literal grammar.
    Closed(Expr),
    /// Exact dyadic value (e.g. converted from `f64` data).
    Dyadic(FixedComplex),
}

impl Entry {
    fn eval(&self, k: u32) -> Result<FixedComplex, ExprError> {
        match self {
            Entry::Closed(e) => e.eval(k),
            Entry::Dyadic(v) => Ok(v.rescale(k)),
        }
    }
}

/// Square matrix of power-of-two dimension with precision-on-demand entries.
#[derive(Clone, Debug)]
pub struct UnitaryMatrix {
    dim: usize,
    entries: Vec<Entry>,
}

impl UnitaryMatrix {
    pub fn new(dim: usize, entries: Vec<Entry>) -> Result<Self, MatrixError> {
        if dim == 0 || !dim.is_power_of_two() {
            return Err(MatrixError::NotPowerOfTwo(dim));
        }
        if entries.len() != dim * dim {
            return Err(MatrixError::WrongEntryCount { got: entries.len(), dim });
        }
        Ok(UnitaryMatrix { dim, entries })
    }

    pub fn from_exprs(dim: usize, exprs: Vec<Expr>) -> Result<Self, MatrixError> {
        Self::new(dim, exprs.into_iter().map(Entry::Closed).collect())
    }

    /// Parses `dim * dim` whitespace-separated literals, row major.
    pub fn parse_entries(dim: usize, literals: &[&str]) -> Result<Self, MatrixError> {
        let exprs = literals
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_exprs(dim, exprs)
    }

    /// Exact conversion from `f64` data (every `f64` is dyadic).
    pub fn from_complex64(dim: usize, data: &[Complex64]) -> Result<Self, MatrixError> {
        let entries = data
            .iter()
            .map(|z| Entry::Dyadic(FixedComplex::from_f64_exact(z.re, z.im, 64)))
            .collect();
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Result<Self, MatrixError> {
        let mut exprs = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                exprs.push(Expr::int(if r == c { 1 } else { 0 }));
            }
        }
        Self::from_exprs(dim, exprs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn entry(&self, row: usize, col: usize) -> &Entry {
        &self.entries[row * self.dim + col]
    }

    /// Entry value with absolute error at most `2^-k` per component.
    pub fn entry_bits(&self, row: usize, col: usize, k: u32) -> Result<ComplexApprox, MatrixError> {
        if row >= self.dim || col >= self.dim {
            return Err(MatrixError::IndexOutOfRange { row, col, dim: self.dim });
        }
        if k == 0 {
            return Err(MatrixError::ZeroPrecision);
        }
        Ok(ComplexApprox::new(self.entry(row, col).eval(k)?, k))
    }

    /// All entries at `k` bits, row major.
    pub fn eval_all(&self, k: u32) -> Result<Vec<FixedComplex>, MatrixError> {
        self.entries
            .iter()
            .map(|e| e.eval(k).map_err(MatrixError::from))
            .collect()
    }

    /// `f64` snapshot for numeric pipelines that verify separately.
    pub fn to_complex64(&self) -> Result<Vec<Complex64>, MatrixError> {
        Ok(self
            .eval_all(64)?
            .into_iter()
            .map(|v| {
                let (re, im) = v.to_f64_pair();
                Complex64::new(re, im)
            })
            .collect())
    }

    /// True iff the max-entry deviation of `U * U^dagger` from the identity
    /// is at most `tol`, evaluated at a precision whose contribution to each
    /// deviation entry is below `tol / 4`.
    pub fn unitarity_check(&self, tol: f64) -> Result<bool, MatrixError> {
        assert!(tol > 0.0, "tolerance must be positive");
        // First pass: bound entry magnitudes so the error budget is valid
        // even for non-unitary inputs.
        let coarse = self.eval_all(64)?;
        let mut max_mag = 1.0f64;
        for v in &coarse {
            let (re, im) = v.to_f64_pair();
            max_mag = max_mag.max(re.abs() + im.abs() + 1.0);
        }
        // Each product of two entries known to +-2^-k errs by at most
        // (2B + 1) * 2^-k; a row-dot sums dim of those. Demand
        // dim * 2 * (2B + 1) * 2^-k < tol / 4 with slack.
        let budget = (self.dim as f64) * 2.0 * (2.0 * max_mag + 1.0);
        let k = ((budget * 4.0 / tol).log2().ceil() as u32).max(32) + 8;
        let vals = self.eval_all(k)?;
        let tol_fx = Fixed::from_f64_exact(tol, 64);
        let one = Fixed::one(0);
        for r in 0..self.dim {
            for c in 0..self.dim {
                // (U U^dagger)[r][c] = sum_j U[r][j] * conj(U[c][j])
                let mut acc = FixedComplex::zero(2 * k);
                for j in 0..self.dim {
                    let a = &vals[r * self.dim + j];
                    let b = &vals[c * self.dim + j];
                    acc = acc.add(&a.mul_exact(&b.conj()));
                }
                if r == c {
                    acc.re = acc.re.sub(&one);
                }
                if acc.re.abs() > tol_fx || acc.im.abs() > tol_fx {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// The adjoint (conjugate transpose). Closed forms stay closed forms.
    pub fn adjoint(&self) -> UnitaryMatrix {
        let mut entries = Vec::with_capacity(self.dim * self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                entries.push(conj_entry(self.entry(c, r)));
            }
        }
        UnitaryMatrix { dim: self.dim, entries }
    }
}

fn conj_entry(e: &Entry) -> Entry {
    match e {
        Entry::Dyadic(v) => Entry::Dyadic(v.conj()),
        Entry::Closed(expr) => Entry::Closed(conj_expr(expr)),
    }
}

fn conj_expr(e: &Expr) -> Expr {
    match e {
        Expr::Rat(r) => Expr::Rat(r.clone()),
        Expr::Sqrt(r) => Expr::Sqrt(r.clone()),
        Expr::Cis(r) => Expr::Cis(-r.clone()),
        Expr::Neg(a) => Expr::Neg(Box::new(conj_expr(a))),
        Expr::Add(a, b) => Expr::Add(Box::new(conj_expr(a)), Box::new(conj_expr(b))),
        Expr::Sub(a, b) => Expr::Sub(Box::new(conj_expr(a)), Box::new(conj_expr(b))),
        Expr::Mul(a, b) => Expr::Mul(Box::new(conj_expr(a)), Box::new(conj_expr(b))),
        Expr::Div(a, b) => Expr::Div(Box::new(conj_expr(a)), Box::new(conj_expr(b))),
    }
}

/// `|a - b|` componentwise max over all entries, at 64-bit evaluation.
/// Handy for tests; not part of the soundness-critical path.
pub fn max_entry_distance(a: &UnitaryMatrix, b: &UnitaryMatrix) -> Result<f64, MatrixError> {
    assert_eq!(a.dim, b.dim);
    let av = a.eval_all(96)?;
    let bv = b.eval_all(96)?;
    let mut worst = 0f64;
    for (x, y) in av.iter().zip(bv.iter()) {
        let d = x.sub(y);
        let (re, im) = d.to_f64_pair();
        worst = worst.max(re.abs()).max(im.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{library_matrix, LibGate};

    #[test]
    fn library_gates_are_unitary() {
        for g in [LibGate::Cnot, LibGate::F, LibGate::Fdg, LibGate::H, LibGate::I] {
            let m = library_matrix(g);
            assert!(m.unitarity_check(1e-12).unwrap(), "{g:?} failed unitarity");
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let m = UnitaryMatrix::parse_entries(2, &["1", "0", "0", "2"]).unwrap();
        assert!(!m.unitarity_check(1e-10).unwrap());
    }

    #[test]
    fn f_entry_is_exact_three_four_fifths() {
        let f = library_matrix(LibGate::F);
        let v = f.entry_bits(1, 1, 64).unwrap();
        let (re, im) = v.to_f64_pair();
        assert!((re - 0.6).abs() < 1e-15);
        assert!((im - 0.8).abs() < 1e-15);
    }

    #[test]
    fn h_entry_value() {
        let h = library_matrix(LibGate::H);
        let v = h.entry_bits(0, 0, 16).unwrap();
        let (re, _) = v.to_f64_pair();
        assert!((re - std::f64::consts::FRAC_1_SQRT_2).abs() < 2f64.powi(-16));
    }

    #[test]
    fn identity_off_diagonal_is_zero() {
        let i = library_matrix(LibGate::I);
        let v = i.entry_bits(0, 1, 40).unwrap();
        assert!(v.re.is_zero() && v.im.is_zero());
    }

    #[test]
    fn fdg_times_f_is_identity() {
        // evaluate F+ * F at high precision and compare against I
        let f = library_matrix(LibGate::F);
        let fdg = library_matrix(LibGate::Fdg);
        let fv = f.eval_all(96).unwrap();
        let gv = fdg.eval_all(96).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let mut acc = FixedComplex::zero(0);
                for j in 0..2 {
                    acc = acc.add(&gv[r * 2 + j].mul_exact(&fv[j * 2 + c]));
                }
                let expect = if r == c { 1.0 } else { 0.0 };
                let (re, im) = acc.to_f64_pair();
                assert!((re - expect).abs() < 1e-12 && im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn entry_bits_rejects_bad_index() {
        let h = library_matrix(LibGate::H);
        assert!(h.entry_bits(2, 0, 16).is_err());
    }
}
