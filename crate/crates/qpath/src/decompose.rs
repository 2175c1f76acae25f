//! Decomposition of arbitrary unitaries to CNOT plus single-qubit gates.
//!
//! Pipeline: unitary -> two-level gates (Givens-style column elimination)
//! -> Gray-code relabeling plus one multi-controlled single-qubit gate per
//! two-level factor -> Toffoli/ancilla lowering -> CNOT + single-qubit ops.
//! Ancillas used for control-ANDing are uncomputed back to `|0>`.
//!
//! Internals run in `f64`; every stage is cross-checked against the matrix
//! it is supposed to implement, with operator-norm distances computed by
//! power iteration (see [`op_norm`]).
//!
//! Qubit convention inside fragments: qubit `j` is bit `j` (LSB) of the
//! basis index. Callers mapping a fragment onto program qubits should send
//! local qubit `j` (for `j < k`) to `targets[k - 1 - j]`.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::unitary::{MatrixError, UnitaryMatrix};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("input matrix is not unitary (deviation above {0})")]
    NotUnitary(f64),
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Dense complex matrix; just enough linear algebra for the pipeline.
#[derive(Clone, Debug)]
pub struct CMat {
    pub dim: usize,
    pub a: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat { dim, a: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_unitary(u: &UnitaryMatrix) -> Result<Self, MatrixError> {
        Ok(CMat { dim: u.dim(), a: u.to_complex64()? })
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let v = self[(i, k)];
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += v * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMat {
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    pub fn sub(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (x, y) in out.a.iter_mut().zip(rhs.a.iter()) {
            *x -= y;
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += self[(i, j)] * v[j];
            }
            *slot = acc;
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.a[r * self.dim + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.a[r * self.dim + c]
    }
}

/// Operator (spectral) norm by power iteration on `M^dagger M`.
pub fn op_norm(m: &CMat) -> f64 {
    let n = m.dim;
    if n == 0 {
        return 0.0;
    }
    let mtm = m.adjoint().mul(m);
    let mut best = 0.0f64;
    // a few deterministic starts guard against an unlucky orthogonal seed
    for start in 0..3u64 {
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| {
                let x = ((i as u64 + 1) * (start * 7 + 3)) as f64;
                Complex64::new((x * 0.7391).sin(), (x * 1.177).cos())
            })
            .collect();
        normalize(&mut v);
        let mut lambda = 0.0f64;
        for _ in 0..500 {
            let w = mtm.apply(&v);
            let nw = norm(&w);
            if nw == 0.0 {
                lambda = 0.0;
                break;
            }
            v = w;
            normalize(&mut v);
            if (nw - lambda).abs() <= 1e-12 * nw.max(1.0) {
                lambda = nw;
                break;
            }
            lambda = nw;
        }
        best = best.max(lambda);
    }
    best.sqrt()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let n = norm(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}

/// Haar-ish random unitary: orthonormalized random Gaussian matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMat {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut col: Vec<Complex64> =
            (0..dim).map(|_| Complex64::new(gauss(rng), gauss(rng))).collect();
        for prev in &cols {
            let inner: Complex64 =
                prev.iter().zip(col.iter()).map(|(p, c)| p.conj() * c).sum();
            for (c, p) in col.iter_mut().zip(prev.iter()) {
                *c -= inner * p;
            }
        }
        normalize(&mut col);
        cols.push(col);
    }
    let mut m = CMat::zeros(dim);
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            m[(i, j)] = *z;
        }
    }
    m
}

fn gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A unitary acting nontrivially on exactly two computational basis states.
#[derive(Clone, Debug)]
pub struct TwoLevelGate {
    pub dim: usize,
    /// Affected basis pair, `a < b`.
    pub a: usize,
    pub b: usize,
    /// Row-major 2x2 block on `span{|a>, |b>}`.
    pub block: [Complex64; 4],
}

impl TwoLevelGate {
    /// Full `dim x dim` matrix.
    pub fn matrix(&self) -> CMat {
        let mut m = CMat::identity(self.dim);
        m[(self.a, self.a)] = self.block[0];
        m[(self.a, self.b)] = self.block[1];
        m[(self.b, self.a)] = self.block[2];
        m[(self.b, self.b)] = self.block[3];
        m
    }
}

const ELIM_CUTOFF: f64 = 1e-14;

/// Factors `u` into two-level gates, listed in application order: applying
/// the gates first-to-last effects `u`. At most `dim (dim - 1) / 2` gates.
pub fn two_level_decompose(u: &UnitaryMatrix) -> Result<Vec<TwoLevelGate>, DecomposeError> {
    if !u.unitarity_check(1e-10)? {
        return Err(DecomposeError::NotUnitary(1e-10));
    }
    let m = CMat::from_unitary(u)?;
    Ok(two_level_decompose_cmat(&m))
}

fn two_level_decompose_cmat(u: &CMat) -> Vec<TwoLevelGate> {
    let dim = u.dim;
    let mut m = u.clone();
    // `applied` holds left-multiplied eliminators: applied[k-1] .. applied[0] u = I.
    // Reversing and taking adjoints turns them into u in application order.
    let mut applied: Vec<TwoLevelGate> = Vec::new();
    for c in 0..dim.saturating_sub(2) {
        for r in (c + 1)..dim {
            let b = m[(r, c)];
            if b.norm() <= ELIM_CUTOFF {
                continue;
            }
            let a = m[(c, c)];
            let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let block = [a.conj() / n, b.conj() / n, b / n, -a / n];
            let g = TwoLevelGate { dim, a: c, b: r, block };
            m = g.matrix().mul(&m);
            applied.push(g);
        }
        // skipped eliminations can leave a residual phase on the diagonal
        let d = m[(c, c)];
        if (d - Complex64::new(1.0, 0.0)).norm() > 1e-13 {
            let phase = d / d.norm();
            let g = TwoLevelGate {
                dim,
                a: c,
                b: c + 1,
                block: [phase.conj(), 0.0.into(), 0.0.into(), 1.0.into()],
            };
            m = g.matrix().mul(&m);
            applied.push(g);
        }
    }
    // the trailing 2x2 block is itself one two-level gate
    let (pa, pb) = (dim - 2, dim - 1);
    let inv = [
        m[(pa, pa)].conj(),
        m[(pb, pa)].conj(),
        m[(pa, pb)].conj(),
        m[(pb, pb)].conj(),
    ];
    applied.push(TwoLevelGate { dim, a: pa, b: pb, block: inv });

    applied
        .into_iter()
        .rev()
        .map(|g| TwoLevelGate {
            dim: g.dim,
            a: g.a,
            b: g.b,
            block: [
                g.block[0].conj(),
                g.block[2].conj(),
                g.block[1].conj(),
                g.block[3].conj(),
            ],
        })
        .collect()
}

/// One gate in a circuit fragment. Qubit `j` is bit `j` of the basis index.
#[derive(Clone, Debug)]
pub enum FragOp {
    Cnot { control: usize, target: usize },
    Single { qubit: usize, matrix: [Complex64; 4] },
    /// Multi-controlled X; controls carry their required value.
    Mcx { controls: Vec<(usize, bool)>, target: usize },
    /// Multi-controlled single-qubit gate.
    Mcu { controls: Vec<(usize, bool)>, target: usize, matrix: [Complex64; 4] },
    Toffoli { c0: usize, c1: usize, target: usize },
}

/// Ordered gate list over some register; `ancilla_count` trailing qubits
/// start and end in `|0>`.
#[derive(Clone, Debug, Default)]
pub struct CircuitFragment {
    pub width: usize,
    pub ancilla_count: usize,
    pub ops: Vec<FragOp>,
}

impl CircuitFragment {
    pub fn new(width: usize) -> Self {
        CircuitFragment { width, ancilla_count: 0, ops: Vec::new() }
    }

    /// True when only CNOT and single-qubit gates remain.
    pub fn is_lowered(&self) -> bool {
        self.ops
            .iter()
            .all(|op| matches!(op, FragOp::Cnot { .. } | FragOp::Single { .. }))
    }

    /// Applies the fragment to a state vector of `2^width` amplitudes.
    pub fn apply_to_state(&self, state: &mut [Complex64]) {
        assert_eq!(state.len(), 1 << self.width);
        for op in &self.ops {
            apply_op(op, state);
        }
    }

    /// Induced matrix on the full register (columns = images of basis states).
    pub fn induced_matrix(&self) -> CMat {
        let dim = 1usize << self.width;
        let mut out = CMat::zeros(dim);
        for col in 0..dim {
            let mut state = vec![Complex64::new(0.0, 0.0); dim];
            state[col] = Complex64::new(1.0, 0.0);
            self.apply_to_state(&mut state);
            for (row, z) in state.iter().enumerate() {
                out[(row, col)] = *z;
            }
        }
        out
    }

    /// Induced matrix restricted to the non-ancilla qubits (ancillas in and
    /// out `|0>`), plus the worst leaked amplitude mass on any ancilla.
    pub fn induced_matrix_main(&self) -> (CMat, f64) {
        let main = self.width - self.ancilla_count;
        let dim = 1usize << main;
        let full = 1usize << self.width;
        let mut out = CMat::zeros(dim);
        let mut leak = 0.0f64;
        for col in 0..dim {
            let mut state = vec![Complex64::new(0.0, 0.0); full];
            state[col] = Complex64::new(1.0, 0.0);
            self.apply_to_state(&mut state);
            for (idx, z) in state.iter().enumerate() {
                if idx >> main == 0 {
                    out[(idx, col)] = *z;
                } else {
                    leak += z.norm_sqr();
                }
            }
        }
        (out, leak.sqrt())
    }
}

fn apply_single(state: &mut [Complex64], qubit: usize, m: &[Complex64; 4]) {
    let bit = 1usize << qubit;
    for i in 0..state.len() {
        if i & bit == 0 {
            let lo = state[i];
            let hi = state[i | bit];
            state[i] = m[0] * lo + m[1] * hi;
            state[i | bit] = m[2] * lo + m[3] * hi;
        }
    }
}

fn apply_op(op: &FragOp, state: &mut [Complex64]) {
    match op {
        FragOp::Single { qubit, matrix } => apply_single(state, *qubit, matrix),
        FragOp::Cnot { control, target } => {
            let c = 1usize << control;
            let t = 1usize << target;
            for i in 0..state.len() {
                if i & c != 0 && i & t != 0 {
                    state.swap(i, i & !t);
                }
            }
        }
        FragOp::Toffoli { c0, c1, target } => {
            let c0 = 1usize << c0;
            let c1 = 1usize << c1;
            let t = 1usize << target;
            for i in 0..state.len() {
                if i & c0 != 0 && i & c1 != 0 && i & t != 0 {
                    state.swap(i, i & !t);
                }
            }
        }
        FragOp::Mcx { controls, target } => {
            let t = 1usize << target;
            for i in 0..state.len() {
                if i & t != 0 && controls_match(controls, i) {
                    state.swap(i, i & !t);
                }
            }
        }
        FragOp::Mcu { controls, target, matrix } => {
            let bit = 1usize << target;
            for i in 0..state.len() {
                if i & bit == 0 && controls_match(controls, i) {
                    let lo = state[i];
                    let hi = state[i | bit];
                    state[i] = matrix[0] * lo + matrix[1] * hi;
                    state[i | bit] = matrix[2] * lo + matrix[3] * hi;
                }
            }
        }
    }
}

fn controls_match(controls: &[(usize, bool)], index: usize) -> bool {
    controls.iter().all(|&(q, v)| ((index >> q) & 1 == 1) == v)
}

/// Expands a two-level gate over `n` qubits into Gray-code relabelings plus
/// one multi-controlled single-qubit gate.
pub fn two_level_to_controlled(
    g: &TwoLevelGate,
    n: usize,
) -> Result<CircuitFragment, DecomposeError> {
    if g.dim != 1usize << n {
        return Err(DecomposeError::NotPowerOfTwo(g.dim));
    }
    let mut frag = CircuitFragment::new(n);
    if g.a == g.b {
        return Ok(frag);
    }
    if n == 1 {
        frag.ops.push(FragOp::Single { qubit: 0, matrix: g.block });
        return Ok(frag);
    }

    // walk a -> b flipping one differing bit at a time
    let diff = g.a ^ g.b;
    let flips: Vec<usize> = (0..n).filter(|j| diff >> j & 1 == 1).collect();
    let mut path = vec![g.a];
    let mut cur = g.a;
    for &j in &flips {
        cur ^= 1 << j;
        path.push(cur);
    }
    debug_assert_eq!(cur, g.b);

    let mut relabel: Vec<FragOp> = Vec::new();
    for w in path.windows(2).take(path.len() - 2) {
        let (from, to) = (w[0], w[1]);
        let j = (from ^ to).trailing_zeros() as usize;
        let controls: Vec<(usize, bool)> =
            (0..n).filter(|&q| q != j).map(|q| (q, from >> q & 1 == 1)).collect();
        relabel.push(FragOp::Mcx { controls, target: j });
    }

    let prev = path[path.len() - 2];
    let j = (prev ^ g.b).trailing_zeros() as usize;
    let controls: Vec<(usize, bool)> =
        (0..n).filter(|&q| q != j).map(|q| (q, g.b >> q & 1 == 1)).collect();
    // the a-slot sits where `prev` has bit j; orient the block accordingly
    let matrix = if prev >> j & 1 == 0 {
        g.block
    } else {
        [g.block[3], g.block[2], g.block[1], g.block[0]]
    };

    frag.ops.extend(relabel.iter().cloned());
    frag.ops.push(FragOp::Mcu { controls, target: j, matrix });
    frag.ops.extend(relabel.into_iter().rev());
    Ok(frag)
}

const X_MAT: [Complex64; 4] = [
    Complex64::new(0.0, 0.0),
    Complex64::new(1.0, 0.0),
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 0.0),
];

/// Lowers every multi-controlled gate to CNOT and single-qubit gates,
/// ANDing controls into ancillas with Toffoli chains (uncomputed afterward)
/// and expanding Toffolis and controlled-U's into their standard networks.
pub fn controlled_to_cnot_single(frag: &CircuitFragment) -> CircuitFragment {
    // ancilla pool shared across ops: each op uncomputes what it uses
    let mut pool_needed = 0usize;
    for op in &frag.ops {
        let k = match op {
            FragOp::Mcx { controls, .. } => controls.len(),
            FragOp::Mcu { controls, .. } => controls.len(),
            FragOp::Toffoli { .. } => 0,
            _ => 0,
        };
        pool_needed = pool_needed.max(k.saturating_sub(1));
    }
    let base = frag.width;
    let mut out = CircuitFragment {
        width: frag.width + pool_needed,
        ancilla_count: frag.ancilla_count + pool_needed,
        ops: Vec::new(),
    };
    for op in &frag.ops {
        match op {
            FragOp::Cnot { .. } | FragOp::Single { .. } => out.ops.push(op.clone()),
            FragOp::Toffoli { c0, c1, target } => {
                push_toffoli(&mut out.ops, *c0, *c1, *target);
            }
            FragOp::Mcx { controls, target } => {
                lower_controlled(&mut out.ops, controls, *target, &X_MAT, base);
            }
            FragOp::Mcu { controls, target, matrix } => {
                lower_controlled(&mut out.ops, controls, *target, matrix, base);
            }
        }
    }
    out
}

fn lower_controlled(
    ops: &mut Vec<FragOp>,
    controls: &[(usize, bool)],
    target: usize,
    matrix: &[Complex64; 4],
    pool_base: usize,
) {
    // negative-polarity controls become X conjugation
    let negs: Vec<usize> = controls.iter().filter(|&&(_, v)| !v).map(|&(q, _)| q).collect();
    for &q in &negs {
        ops.push(FragOp::Single { qubit: q, matrix: X_MAT });
    }
    let qs: Vec<usize> = controls.iter().map(|&(q, _)| q).collect();
    match qs.len() {
        0 => ops.push(FragOp::Single { qubit: target, matrix: *matrix }),
        1 => push_controlled_u(ops, qs[0], target, matrix),
        _ => {
            // AND-chain into ancillas
            let mut chain: Vec<(usize, usize, usize)> = Vec::new();
            let mut anc = pool_base;
            let mut head = qs[0];
            for &q in &qs[1..] {
                chain.push((head, q, anc));
                head = anc;
                anc += 1;
            }
            for &(a, b, t) in &chain {
                push_toffoli(ops, a, b, t);
            }
            push_controlled_u(ops, head, target, matrix);
            for &(a, b, t) in chain.iter().rev() {
                push_toffoli(ops, a, b, t);
            }
        }
    }
    for &q in negs.iter().rev() {
        ops.push(FragOp::Single { qubit: q, matrix: X_MAT });
    }
}

fn rz(theta: f64) -> [Complex64; 4] {
    let e = Complex64::from_polar(1.0, -theta / 2.0);
    [e, 0.0.into(), 0.0.into(), e.conj()]
}

fn ry(theta: f64) -> [Complex64; 4] {
    let (s, c) = (theta / 2.0).sin_cos();
    [c.into(), (-s).into(), s.into(), c.into()]
}

fn mat2_mul(a: &[Complex64; 4], b: &[Complex64; 4]) -> [Complex64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// Controlled-U as the standard A/B/C network: with `A B C = I` and
/// `A X B X C = U` up to phase, emit C, CNOT, B, CNOT, A and a phase gate
/// on the control.
fn push_controlled_u(ops: &mut Vec<FragOp>, control: usize, target: usize, u: &[Complex64; 4]) {
    if u.iter().zip(X_MAT.iter()).all(|(a, b)| (a - b).norm() < 1e-15) {
        ops.push(FragOp::Cnot { control, target });
        return;
    }
    let det = u[0] * u[3] - u[1] * u[2];
    let alpha = det.arg() / 2.0;
    let phase = Complex64::from_polar(1.0, -alpha);
    let v = [u[0] * phase, u[1] * phase, u[2] * phase, u[3] * phase];
    // v = Rz(beta) Ry(gamma) Rz(delta)
    let (beta, gamma, delta);
    if v[2].norm() < 1e-12 {
        gamma = 0.0;
        beta = 2.0 * v[3].arg();
        delta = 0.0;
    } else if v[0].norm() < 1e-12 {
        gamma = std::f64::consts::PI;
        beta = 2.0 * v[2].arg();
        delta = 0.0;
    } else {
        gamma = 2.0 * v[2].norm().atan2(v[0].norm());
        beta = v[3].arg() + v[2].arg();
        delta = v[3].arg() - v[2].arg();
    }
    let a = mat2_mul(&rz(beta), &ry(gamma / 2.0));
    let b = mat2_mul(&ry(-gamma / 2.0), &rz(-(delta + beta) / 2.0));
    let c = rz((delta - beta) / 2.0);
    ops.push(FragOp::Single { qubit: target, matrix: c });
    ops.push(FragOp::Cnot { control, target });
    ops.push(FragOp::Single { qubit: target, matrix: b });
    ops.push(FragOp::Cnot { control, target });
    ops.push(FragOp::Single { qubit: target, matrix: a });
    if alpha.abs() > 1e-15 {
        let ph = [
            Complex64::new(1.0, 0.0),
            0.0.into(),
            0.0.into(),
            Complex64::from_polar(1.0, alpha),
        ];
        ops.push(FragOp::Single { qubit: control, matrix: ph });
    }
}

/// The standard 6-CNOT Toffoli network over H, T, T+.
fn push_toffoli(ops: &mut Vec<FragOp>, c0: usize, c1: usize, target: usize) {
    let rt = std::f64::consts::FRAC_1_SQRT_2;
    let h: [Complex64; 4] = [rt.into(), rt.into(), rt.into(), (-rt).into()];
    let t: [Complex64; 4] = [
        Complex64::new(1.0, 0.0),
        0.0.into(),
        0.0.into(),
        Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
    ];
    let tdg: [Complex64; 4] = [t[0], t[1], t[2], t[3].conj()];
    let single = |q: usize, m: [Complex64; 4]| FragOp::Single { qubit: q, matrix: m };
    let cnot = |c: usize, t: usize| FragOp::Cnot { control: c, target: t };
    ops.extend([
        single(target, h),
        cnot(c1, target),
        single(target, tdg),
        cnot(c0, target),
        single(target, t),
        cnot(c1, target),
        single(target, tdg),
        cnot(c0, target),
        single(c1, t),
        single(target, t),
        single(target, h),
        cnot(c0, c1),
        single(c0, t),
        single(c1, tdg),
        cnot(c0, c1),
    ]);
}

/// Full pipeline: arbitrary unitary to a CNOT + single-qubit fragment.
/// The fragment's first `log2(dim)` qubits are the gate's own (qubit `j` =
/// basis bit `j`); any extra qubits are ancillas restored to `|0>`.
pub fn decompose_gate(u: &UnitaryMatrix) -> Result<CircuitFragment, DecomposeError> {
    let dim = u.dim();
    let n = dim.trailing_zeros() as usize;
    if dim < 2 || !dim.is_power_of_two() {
        return Err(DecomposeError::NotPowerOfTwo(dim));
    }
    if !u.unitarity_check(1e-10)? {
        return Err(DecomposeError::NotUnitary(1e-10));
    }
    let m = CMat::from_unitary(u)?;
    // single-qubit gates and exact CNOTs pass through unchanged
    if n == 1 {
        let mut frag = CircuitFragment::new(1);
        frag.ops.push(FragOp::Single {
            qubit: 0,
            matrix: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
        });
        return Ok(frag);
    }
    if n == 2 {
        for (control, target) in [(1usize, 0usize), (0, 1)] {
            let mut frag = CircuitFragment::new(2);
            frag.ops.push(FragOp::Cnot { control, target });
            if op_norm(&frag.induced_matrix().sub(&m)) <= 1e-12 {
                return Ok(frag);
            }
        }
    }
    let mut combined = CircuitFragment::new(n);
    for g in two_level_decompose(u)? {
        let staged = two_level_to_controlled(&g, n)?;
        combined.ops.extend(staged.ops);
    }
    Ok(controlled_to_cnot_single(&combined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(m: &CMat, target: &CMat, tol: f64, what: &str) {
        let d = op_norm(&m.sub(target));
        assert!(d <= tol, "{what}: distance {d}");
    }

    fn unitary_from_cmat(m: &CMat) -> UnitaryMatrix {
        UnitaryMatrix::from_complex64(m.dim, &m.a).unwrap()
    }

    fn product_in_application_order(gates: &[TwoLevelGate], dim: usize) -> CMat {
        let mut acc = CMat::identity(dim);
        for g in gates {
            acc = g.matrix().mul(&acc);
        }
        acc
    }

    #[test]
    fn op_norm_known_values() {
        let mut m = CMat::zeros(2);
        m[(0, 0)] = Complex64::new(3.0, 0.0);
        m[(1, 1)] = Complex64::new(-4.0, 0.0);
        assert!((op_norm(&m) - 4.0).abs() < 1e-10);
        let id = CMat::identity(8);
        assert!((op_norm(&id) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_is_single_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_unitary(2, &mut rng);
        let gates = two_level_decompose(&unitary_from_cmat(&m)).unwrap();
        assert_eq!(gates.len(), 1);
        assert_close(&gates[0].matrix(), &m, 1e-10, "2x2 passthrough");
    }

    #[test]
    fn diagonal_phase_is_one_gate() {
        let mut m = CMat::identity(4);
        m[(3, 3)] = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
        let gates = two_level_decompose(&unitary_from_cmat(&m)).unwrap();
        assert_eq!(gates.len(), 1);
        assert_close(&product_in_application_order(&gates, 4), &m, 1e-10, "diag");
    }

    #[test]
    fn random_unitaries_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2usize, 4, 8] {
            for _ in 0..10 {
                let m = random_unitary(dim, &mut rng);
                let gates = two_level_decompose(&unitary_from_cmat(&m)).unwrap();
                assert!(gates.len() <= dim * (dim - 1) / 2, "count bound");
                assert_close(
                    &product_in_application_order(&gates, dim),
                    &m,
                    1e-10,
                    "two-level product",
                );
            }
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let m = UnitaryMatrix::parse_entries(2, &["1", "0", "0", "2"]).unwrap();
        assert!(matches!(two_level_decompose(&m), Err(DecomposeError::NotUnitary(_))));
    }

    #[test]
    fn controlled_stage_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // adjacent pair: no relabeling needed
        let m = random_unitary(2, &mut rng);
        let g = TwoLevelGate {
            dim: 4,
            a: 0,
            b: 1,
            block: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
        };
        let frag = two_level_to_controlled(&g, 2).unwrap();
        assert_eq!(frag.ops.len(), 1, "single controlled-U, no relabeling");
        assert_close(&frag.induced_matrix(), &g.matrix(), 1e-10, "pair (0,1)");

        // antipodal pair: n-1 relabeling steps each way
        for n in [2usize, 3] {
            let dim = 1 << n;
            let m = random_unitary(2, &mut rng);
            let g = TwoLevelGate {
                dim,
                a: 0,
                b: dim - 1,
                block: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
            };
            let frag = two_level_to_controlled(&g, n).unwrap();
            assert_eq!(frag.ops.len(), 2 * (n - 1) + 1);
            assert_close(&frag.induced_matrix(), &g.matrix(), 1e-10, "antipodal");
        }
    }

    #[test]
    fn identity_block_gives_identity_product() {
        let g = TwoLevelGate {
            dim: 4,
            a: 1,
            b: 2,
            block: [1.0.into(), 0.0.into(), 0.0.into(), 1.0.into()],
        };
        let frag = two_level_to_controlled(&g, 2).unwrap();
        assert_close(&frag.induced_matrix(), &CMat::identity(4), 1e-10, "identity block");
    }

    #[test]
    fn toffoli_network_is_exact() {
        let mut ops = Vec::new();
        push_toffoli(&mut ops, 2, 1, 0);
        let frag = CircuitFragment { width: 3, ancilla_count: 0, ops };
        let mut expect = CMat::identity(8);
        // |110> <-> |111> (bits 2 and 1 set control bit 0)
        expect[(6, 6)] = 0.0.into();
        expect[(7, 7)] = 0.0.into();
        expect[(6, 7)] = 1.0.into();
        expect[(7, 6)] = 1.0.into();
        assert_close(&frag.induced_matrix(), &expect, 1e-10, "toffoli");
    }

    #[test]
    fn controlled_u_network_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let m = random_unitary(2, &mut rng);
            let mat = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
            let mut ops = Vec::new();
            push_controlled_u(&mut ops, 1, 0, &mat);
            let frag = CircuitFragment { width: 2, ancilla_count: 0, ops };
            let mut expect = CMat::identity(4);
            expect[(2, 2)] = mat[0];
            expect[(2, 3)] = mat[1];
            expect[(3, 2)] = mat[2];
            expect[(3, 3)] = mat[3];
            assert_close(&frag.induced_matrix(), &expect, 1e-10, "controlled-U");
        }
    }

    #[test]
    fn lowering_preserves_semantics_with_ancillas() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = random_unitary(2, &mut rng);
        let g = TwoLevelGate {
            dim: 8,
            a: 1,
            b: 6,
            block: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
        };
        let staged = two_level_to_controlled(&g, 3).unwrap();
        let lowered = controlled_to_cnot_single(&staged);
        assert!(lowered.is_lowered());
        let (main, leak) = lowered.induced_matrix_main();
        assert!(leak <= 1e-10, "ancilla leak {leak}");
        assert_close(&main, &g.matrix(), 1e-9, "lowered two-level");
    }

    #[test]
    fn already_lowered_fragment_unchanged() {
        let frag = CircuitFragment {
            width: 2,
            ancilla_count: 0,
            ops: vec![
                FragOp::Cnot { control: 1, target: 0 },
                FragOp::Single { qubit: 0, matrix: X_MAT },
            ],
        };
        let out = controlled_to_cnot_single(&frag);
        assert_eq!(out.ops.len(), 2);
        assert_eq!(out.width, 2);
    }

    #[test]
    fn decompose_gate_cnot_passthrough() {
        let m = crate::gate::library_matrix(crate::gate::LibGate::Cnot);
        let frag = decompose_gate(&m).unwrap();
        assert_eq!(frag.ops.len(), 1);
        assert!(matches!(frag.ops[0], FragOp::Cnot { .. }));
    }

    #[test]
    fn decompose_gate_single_qubit_passthrough() {
        let m = crate::gate::library_matrix(crate::gate::LibGate::H);
        let frag = decompose_gate(&m).unwrap();
        assert_eq!(frag.ops.len(), 1);
        assert!(matches!(frag.ops[0], FragOp::Single { .. }));
    }

    #[test]
    fn decompose_gate_full_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for dim in [4usize, 8] {
            let m = random_unitary(dim, &mut rng);
            let frag = decompose_gate(&unitary_from_cmat(&m)).unwrap();
            assert!(frag.is_lowered());
            let (main, leak) = frag.induced_matrix_main();
            assert!(leak <= 1e-9, "ancilla leak {leak}");
            assert_close(&main, &m, 1e-9, "full pipeline");
        }
    }
}
