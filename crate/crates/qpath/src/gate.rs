//! The distinguished gate library `{CNOT, F, F+, H, I}` and the gate-step
//! vocabulary shared by the interpreter backends.
//!
//! `F = diag(1, 3/5 + 4/5 i)` is the phase gate whose angle is an irrational
//! multiple of 2*pi; together with `H` (and closure under adjoint via `F+`)
//! it generates a dense subgroup of the single-qubit unitaries.

use crate::expr::Expr;
use crate::unitary::UnitaryMatrix;

/// Universal-library gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LibGate {
    Cnot,
    F,
    Fdg,
    H,
    I,
}

impl LibGate {
    pub fn name(&self) -> &'static str {
        match self {
            LibGate::Cnot => "CNOT",
            LibGate::F => "F",
            LibGate::Fdg => "Fdg",
            LibGate::H => "H",
            LibGate::I => "I",
        }
    }

    pub fn from_name(s: &str) -> Option<LibGate> {
        match s {
            "CNOT" => Some(LibGate::Cnot),
            "F" => Some(LibGate::F),
            "Fdg" => Some(LibGate::Fdg),
            "H" => Some(LibGate::H),
            "I" => Some(LibGate::I),
            _ => None,
        }
    }

    pub fn num_qubits(&self) -> usize {
        match self {
            LibGate::Cnot => 2,
            _ => 1,
        }
    }
}

/// Matrix of a library gate in the computational basis.
pub fn library_matrix(g: LibGate) -> UnitaryMatrix {
    let e = |s: &str| Expr::parse(s).expect("library literal");
    let entries = match g {
        LibGate::I => vec![e("1"), e("0"), e("0"), e("1")],
        LibGate::H => vec![e("sqrt(1/2)"), e("sqrt(1/2)"), e("sqrt(1/2)"), e("-sqrt(1/2)")],
        LibGate::F => vec![e("1"), e("0"), e("0"), e("rat(3/5)+rat(4/5)*cis(1/2)")],
        LibGate::Fdg => vec![e("1"), e("0"), e("0"), e("rat(3/5)-rat(4/5)*cis(1/2)")],
        LibGate::Cnot => {
            // basis order |control target>: 00, 01, 10, 11
            let mut v = Vec::with_capacity(16);
            let rows = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]];
            for row in rows {
                for x in row {
                    v.push(Expr::int(x));
                }
            }
            v
        }
    };
    UnitaryMatrix::from_exprs(if g == LibGate::Cnot { 4 } else { 2 }, entries)
        .expect("library matrix shape")
}

/// One element of the gate sequence a program applies along a branch.
///
/// This is the "three types of gates" vocabulary: unitaries from the
/// program's library, input-query gates, and single-qubit measurements.
#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    /// Library unitary applied to the listed qubits. The first listed qubit
    /// is the most significant bit of the matrix's basis index.
    Unitary { gate: GateRef, targets: Vec<usize> },
    /// `|i>|b> -> |i>|b ^ x_i>` with the address read from `addrs`
    /// (first listed qubit is the most significant address bit).
    Query { addrs: Vec<usize>, target: usize },
    /// Single-qubit measurement in the computational basis.
    Measure { qubit: usize },
}

/// Reference to a gate: builtin library member or an entry in the enclosing
/// program's custom gate table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateRef {
    Lib(LibGate),
    Custom(usize),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for g in [LibGate::Cnot, LibGate::F, LibGate::Fdg, LibGate::H, LibGate::I] {
            assert_eq!(LibGate::from_name(g.name()), Some(g));
        }
        assert_eq!(LibGate::from_name("T"), None);
    }

    #[test]
    fn cnot_is_permutation() {
        let m = library_matrix(LibGate::Cnot);
        let v = m.to_complex64().unwrap();
        // |10> -> |11> and |11> -> |10>
        assert_eq!(v[2 * 4 + 3].re, 1.0);
        assert_eq!(v[3 * 4 + 2].re, 1.0);
        assert_eq!(v[2 * 4 + 2].re, 0.0);
    }
}
