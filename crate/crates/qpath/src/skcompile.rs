//! Solovay-Kitaev approximation of single-qubit unitaries by words over
//! `{F, F+, H}`, and whole-program compilation to the universal library.
//!
//! Words have exactly representable products: a word with `a` F-type
//! letters and `b` H letters is a 2x2 Gaussian-integer matrix divided by
//! `5^a * sqrt(2)^b`. Search internals run in `f64`, but every distance
//! the module reports is verified from the exact word product evaluated in
//! high-precision fixed point, so a claimed `eps` is trustworthy
//! independent of the search path.
//!
//! Distances are projective: `dist(u, v) = min_phase ||u - e^(i phase) v||`,
//! which for 2x2 unitaries equals `sqrt(2 - |tr(u^+ v)|)`.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decompose::{decompose_gate, DecomposeError, FragOp};
use crate::exact::{ExactAmplitude, GaussianInt};
use crate::fixed::{Fixed, FixedComplex};
use crate::gate::{GateRef, LibGate};
use crate::program::{Block, BranchingProgram, CustomGate, GateApp, Instr, ProgramError};
use crate::unitary::UnitaryMatrix;

#[derive(Debug, Error)]
pub enum SkError {
    #[error("matrix is not unitary within {0}")]
    NotUnitary(f64),
    #[error("commutator decomposition needs dist(delta, I) <= {max}; got {got}")]
    DeltaTooFar { got: f64, max: f64 },
    #[error("epsilon {requested} is below the floor reachable with this net; achieved {achieved}")]
    FloorUnreachable { requested: f64, achieved: f64 },
    #[error("net entry cap {0} exceeded")]
    NetCapExceeded(usize),
    #[error("net cache file is malformed: {0}")]
    BadCache(String),
    #[error("net cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Matrix(#[from] crate::unitary::MatrixError),
}

// ---------------------------------------------------------------------------
// Words and their exact products
// ---------------------------------------------------------------------------

/// One letter of the single-qubit alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SkLetter {
    F,
    Fdg,
    H,
}

impl SkLetter {
    pub fn adjoint(self) -> SkLetter {
        match self {
            SkLetter::F => SkLetter::Fdg,
            SkLetter::Fdg => SkLetter::F,
            SkLetter::H => SkLetter::H,
        }
    }

    fn cancels(self, next: SkLetter) -> bool {
        matches!(
            (self, next),
            (SkLetter::F, SkLetter::Fdg) | (SkLetter::Fdg, SkLetter::F) | (SkLetter::H, SkLetter::H)
        )
    }

    pub fn lib_gate(self) -> LibGate {
        match self {
            SkLetter::F => LibGate::F,
            SkLetter::Fdg => LibGate::Fdg,
            SkLetter::H => LibGate::H,
        }
    }
}

/// A word over `{F, F+, H}`, applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GateWord(pub Vec<SkLetter>);

impl GateWord {
    pub fn empty() -> Self {
        GateWord(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Word effecting the adjoint: reverse order, letterwise adjoint.
    pub fn adjoint(&self) -> GateWord {
        GateWord(self.0.iter().rev().map(|l| l.adjoint()).collect())
    }

    /// Cancels adjacent inverse pairs until none remain.
    pub fn simplified(&self) -> GateWord {
        let mut out: Vec<SkLetter> = Vec::with_capacity(self.0.len());
        for &l in &self.0 {
            if let Some(&top) = out.last() {
                if top.cancels(l) {
                    out.pop();
                    continue;
                }
            }
            out.push(l);
        }
        GateWord(out)
    }

    pub fn concat(words: &[&GateWord]) -> GateWord {
        let mut v = Vec::new();
        for w in words {
            v.extend_from_slice(&w.0);
        }
        GateWord(v).simplified()
    }

    /// Exact matrix effected by the word: letters are in application
    /// order, so the product is `L_n ... L_2 L_1`.
    pub fn product(&self) -> WordMatrix {
        let mut acc = WordMatrix::identity();
        for &l in &self.0 {
            acc = WordMatrix::letter(l).mul(&acc);
        }
        acc
    }
}

impl fmt::Display for GateWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            f.write_str(match l {
                SkLetter::F => "F",
                SkLetter::Fdg => "D",
                SkLetter::H => "H",
            })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for GateWord {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut v = Vec::with_capacity(s.len());
        for c in s.chars() {
            v.push(match c {
                'F' => SkLetter::F,
                'D' => SkLetter::Fdg,
                'H' => SkLetter::H,
                other => return Err(format!("bad word letter '{other}'")),
            });
        }
        Ok(GateWord(v))
    }
}

/// Exact 2x2 matrix `m / (5^f * sqrt(2)^h)`, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordMatrix {
    pub m: [GaussianInt; 4],
    pub f: u32,
    pub h: u32,
}

impl WordMatrix {
    pub fn identity() -> Self {
        WordMatrix {
            m: [GaussianInt::one(), GaussianInt::zero(), GaussianInt::zero(), GaussianInt::one()],
            f: 0,
            h: 0,
        }
    }

    pub fn letter(l: SkLetter) -> Self {
        match l {
            SkLetter::F => WordMatrix {
                m: [
                    GaussianInt::new(5, 0),
                    GaussianInt::zero(),
                    GaussianInt::zero(),
                    GaussianInt::new(3, 4),
                ],
                f: 1,
                h: 0,
            },
            SkLetter::Fdg => WordMatrix {
                m: [
                    GaussianInt::new(5, 0),
                    GaussianInt::zero(),
                    GaussianInt::zero(),
                    GaussianInt::new(3, -4),
                ],
                f: 1,
                h: 0,
            },
            SkLetter::H => WordMatrix {
                m: [
                    GaussianInt::one(),
                    GaussianInt::one(),
                    GaussianInt::one(),
                    GaussianInt::new(-1, 0),
                ],
                f: 0,
                h: 1,
            },
        }
    }

    pub fn mul(&self, rhs: &WordMatrix) -> WordMatrix {
        let a = &self.m;
        let b = &rhs.m;
        WordMatrix {
            m: [
                &(&a[0] * &b[0]) + &(&a[1] * &b[2]),
                &(&a[0] * &b[1]) + &(&a[1] * &b[3]),
                &(&a[2] * &b[0]) + &(&a[3] * &b[2]),
                &(&a[2] * &b[1]) + &(&a[3] * &b[3]),
            ],
            f: self.f + rhs.f,
            h: self.h + rhs.h,
        }
    }

    pub fn adjoint(&self) -> WordMatrix {
        WordMatrix {
            m: [self.m[0].conj(), self.m[2].conj(), self.m[1].conj(), self.m[3].conj()],
            f: self.f,
            h: self.h,
        }
    }

    /// Entries at `bits` fractional bits (error under `2^-bits` each).
    pub fn to_fixed(&self, bits: u32) -> [FixedComplex; 4] {
        std::array::from_fn(|i| {
            let amp = ExactAmplitude::new(self.m[i].clone(), self.f, self.h);
            amp.value(bits).to_fixed_complex()
        })
    }

    pub fn to_c64(&self) -> [Complex64; 4] {
        let fx = self.to_fixed(60);
        std::array::from_fn(|i| {
            let (re, im) = fx[i].to_f64_pair();
            Complex64::new(re, im)
        })
    }
}

// ---------------------------------------------------------------------------
// Projective distance
// ---------------------------------------------------------------------------

const DIST_BITS: u32 = 128;

fn mat_to_fixed(u: &[Complex64; 4], bits: u32) -> [FixedComplex; 4] {
    std::array::from_fn(|i| FixedComplex::from_f64_exact(u[i].re, u[i].im, bits))
}

/// `sqrt(2 - |tr(u^+ v)|)` over fixed-point inputs; sound to well below
/// `1e-12` when inputs carry at least ~100 accurate bits.
pub fn proj_distance_fixed(u: &[FixedComplex; 4], v: &[FixedComplex; 4], bits: u32) -> Fixed {
    // tr(u^+ v) = sum_e conj(u_e) * v_e
    let mut t = FixedComplex::zero(0);
    for i in 0..4 {
        t = t.add(&u[i].conj().mul_exact(&v[i]));
    }
    let abs_t = t.abs(bits);
    let two = Fixed::from_int(2, 0);
    let gap = two.sub(&abs_t);
    let gap = if gap.is_negative() { Fixed::zero(bits) } else { gap };
    gap.sqrt(bits)
}

fn unitary_deviation_f64(u: &[Complex64; 4]) -> f64 {
    // max entry of u u^+ - I
    let mut worst = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                acc += u[r * 2 + k] * u[c * 2 + k].conj();
            }
            if r == c {
                acc -= Complex64::new(1.0, 0.0);
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// Phase-minimized operator-norm distance between two single-qubit
/// unitaries; zero iff they agree up to global phase.
pub fn proj_distance(u: &[Complex64; 4], v: &[Complex64; 4]) -> Result<f64, SkError> {
    for m in [u, v] {
        let dev = unitary_deviation_f64(m);
        if dev > 1e-6 {
            return Err(SkError::NotUnitary(1e-6));
        }
    }
    Ok(proj_distance_fixed(&mat_to_fixed(u, 64), &mat_to_fixed(v, 64), DIST_BITS).to_f64())
}

/// Distance from a word's exact product to an `f64` target, via
/// high-precision evaluation of the exact product.
pub fn word_distance(word: &GateWord, target: &[Complex64; 4]) -> f64 {
    let wm = word.product().to_fixed(160);
    proj_distance_fixed(&wm, &mat_to_fixed(target, 64), DIST_BITS).to_f64()
}

// ---------------------------------------------------------------------------
// f64 2x2 helpers and the balanced group commutator
// ---------------------------------------------------------------------------

pub(crate) fn mat2_mul(a: &[Complex64; 4], b: &[Complex64; 4]) -> [Complex64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub(crate) fn mat2_adjoint(a: &[Complex64; 4]) -> [Complex64; 4] {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

pub(crate) const MAT2_ID: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 0.0),
    Complex64::new(0.0, 0.0),
    Complex64::new(1.0, 0.0),
];

/// Unit quaternion `(w, x, y, z)` of an SU(2) matrix
/// `w I - i (x sx + y sy + z sz)`, normalized to `w >= 0`.
fn quat_of(u: &[Complex64; 4]) -> [f64; 4] {
    let det = u[0] * u[3] - u[1] * u[2];
    let s = det.sqrt();
    // pick the square-root branch that makes the trace real-positive
    let tr = (u[0] + u[3]) / s;
    let s = if tr.re < 0.0 { -s } else { s };
    let v: Vec<Complex64> = u.iter().map(|z| z / s).collect();
    let w = (v[0].re + v[3].re) / 2.0;
    let z = (v[3].im - v[0].im) / 2.0;
    let x = -(v[1].im + v[2].im) / 2.0;
    let y = (v[2].re - v[1].re) / 2.0;
    if w < 0.0 {
        [-w, -x, -y, -z]
    } else {
        [w, x, y, z]
    }
}

fn su2_of_quat(q: &[f64; 4]) -> [Complex64; 4] {
    let [w, x, y, z] = *q;
    [
        Complex64::new(w, -z),
        Complex64::new(-y, -x),
        Complex64::new(y, -x),
        Complex64::new(w, z),
    ]
}

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Quaternion of the rotation taking unit vector `from` to unit vector `to`.
fn rotation_between(from: [f64; 3], to: [f64; 3]) -> [f64; 4] {
    let c = dot(from, to).clamp(-1.0, 1.0);
    let axis = cross(from, to);
    let s = norm3(axis);
    if s < 1e-12 {
        if c > 0.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        // antiparallel: rotate by pi about any axis orthogonal to `from`
        let pick = if from[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut axis = cross(from, pick);
        let n = norm3(axis);
        axis = [axis[0] / n, axis[1] / n, axis[2] / n];
        return [0.0, axis[0], axis[1], axis[2]];
    }
    let angle = s.atan2(c);
    let (sh, ch) = ((angle / 2.0).sin(), (angle / 2.0).cos());
    [ch, sh * axis[0] / s, sh * axis[1] / s, sh * axis[2] / s]
}

/// Maximum `dist(delta, I)` accepted by the commutator decomposition.
pub const DELTA_MAX: f64 = 0.5;

/// Balanced group-commutator factorization: returns `(v, w)` with
/// `v w v^+ w^+ = delta` up to global phase, where each factor is within
/// `O(sqrt(dist(delta, I)))` of the identity.
///
/// Construction: take the rotation angle `theta` of `delta`, solve
/// `sin(theta/2) = 2 sin^2(phi/2) sqrt(1 - sin^4(phi/2))` for `phi`, form
/// the commutator of `Rx(phi)` and `Ry(phi)` (a rotation by `theta` about
/// some axis), and conjugate both factors so that axis lands on delta's.
pub fn group_commutator_decompose(
    delta: &[Complex64; 4],
) -> Result<([Complex64; 4], [Complex64; 4]), SkError> {
    if unitary_deviation_f64(delta) > 1e-6 {
        return Err(SkError::NotUnitary(1e-6));
    }
    let d = proj_distance(delta, &MAT2_ID)?;
    if d > DELTA_MAX {
        return Err(SkError::DeltaTooFar { got: d, max: DELTA_MAX });
    }
    let q = quat_of(delta);
    let sin_half = norm3([q[1], q[2], q[3]]).min(1.0);
    // below ~1e-7 the phi-solve collapses in f64 (1 - sin^2 rounds to 1)
    // and the commutator axis becomes numerically undefined; the identity
    // factorization is within f64 resolution of correct there anyway
    if sin_half < 1e-7 {
        return Ok((MAT2_ID, MAT2_ID));
    }
    let axis = {
        let n = norm3([q[1], q[2], q[3]]);
        [q[1] / n, q[2] / n, q[3] / n]
    };
    // solve for phi: with y = sin^4(phi/2), 4 y (1 - y) = sin^2(theta/2)
    let y = (1.0 - (1.0 - sin_half * sin_half).sqrt()) / 2.0;
    let s = y.sqrt().sqrt();
    let phi = 2.0 * s.asin();
    let (sp, cp) = ((phi / 2.0).sin(), (phi / 2.0).cos());
    let qv = [cp, sp, 0.0, 0.0]; // Rx(phi)
    let qw = [cp, 0.0, sp, 0.0]; // Ry(phi)

    // commutator axis, then conjugate both factors onto delta's axis
    let qv_inv = [qv[0], -qv[1], -qv[2], -qv[3]];
    let qw_inv = [qw[0], -qw[1], -qw[2], -qw[3]];
    let qc = quat_mul(&quat_mul(&qv, &qw), &quat_mul(&qv_inv, &qw_inv));
    let qc = if qc[0] < 0.0 { [-qc[0], -qc[1], -qc[2], -qc[3]] } else { qc };
    let cn = norm3([qc[1], qc[2], qc[3]]).max(1e-300);
    let caxis = [qc[1] / cn, qc[2] / cn, qc[3] / cn];
    let qs = rotation_between(caxis, axis);
    let qs_inv = [qs[0], -qs[1], -qs[2], -qs[3]];
    let v = quat_mul(&quat_mul(&qs, &qv), &qs_inv);
    let w = quat_mul(&quat_mul(&qs, &qw), &qs_inv);
    Ok((su2_of_quat(&v), su2_of_quat(&w)))
}

// ---------------------------------------------------------------------------
// Epsilon net
// ---------------------------------------------------------------------------

/// SO(3) image of a single-qubit unitary: phase-free nine-vector used as
/// the nearest-neighbor key.
fn so3_key(u: &[Complex64; 4]) -> [f64; 9] {
    let sx: [Complex64; 4] = [0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()];
    let sy: [Complex64; 4] = [
        0.0.into(),
        Complex64::new(0.0, -1.0),
        Complex64::new(0.0, 1.0),
        0.0.into(),
    ];
    let sz: [Complex64; 4] = [1.0.into(), 0.0.into(), 0.0.into(), Complex64::new(-1.0, 0.0)];
    let paulis = [sx, sy, sz];
    let ud = mat2_adjoint(u);
    let mut key = [0.0f64; 9];
    for (i, si) in paulis.iter().enumerate() {
        let left = mat2_mul(si, u);
        for (j, sj) in paulis.iter().enumerate() {
            let m = mat2_mul(&left, &mat2_mul(sj, &ud));
            key[i * 3 + j] = 0.5 * (m[0] + m[3]).re;
        }
    }
    key
}

fn key_dist_sqr(a: &[f64; 9], b: &[f64; 9]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One net entry: a word, its product snapshot, and its spatial key.
#[derive(Clone, Debug)]
pub struct NetEntry {
    pub word: GateWord,
    pub mat: [Complex64; 4],
    key: [f64; 9],
}

/// Deduplicated table of short words covering the single-qubit unitaries
/// (mod phase) to the base accuracy the word-length budget affords.
pub struct EpsilonNet {
    pub max_word_len: usize,
    pub entries: Vec<NetEntry>,
    tree: KdTree,
    digest: String,
}

/// Default cap on net entries after deduplication.
pub const NET_ENTRY_CAP: usize = 1 << 22;

/// Grid cell for merging words whose products coincide mod phase.
const DEDUP_CELL: f64 = 1e-6;

impl EpsilonNet {
    /// Enumerates reduced words up to `max_word_len`, merging products that
    /// coincide mod phase (shortest word kept), and indexes them for
    /// nearest-entry queries.
    pub fn build(max_word_len: usize, cap: usize) -> Result<EpsilonNet, SkError> {
        let mut words: Vec<GateWord> = vec![GateWord::empty()];
        let mut frontier: Vec<GateWord> = vec![GateWord::empty()];
        for _ in 0..max_word_len {
            let mut next = Vec::new();
            for w in &frontier {
                for l in [SkLetter::F, SkLetter::Fdg, SkLetter::H] {
                    if let Some(&last) = w.0.last() {
                        if last.cancels(l) {
                            continue;
                        }
                    }
                    let mut v = w.0.clone();
                    v.push(l);
                    next.push(GateWord(v));
                }
            }
            words.extend(next.iter().cloned());
            if words.len() > cap {
                return Err(SkError::NetCapExceeded(cap));
            }
            frontier = next;
        }
        Self::from_words(max_word_len, words, cap)
    }

    fn from_words(
        max_word_len: usize,
        words: Vec<GateWord>,
        cap: usize,
    ) -> Result<EpsilonNet, SkError> {
        if words.len() > cap {
            return Err(SkError::NetCapExceeded(cap));
        }
        let mut seen: HashMap<[i64; 9], usize> = HashMap::new();
        let mut entries: Vec<NetEntry> = Vec::new();
        for word in words {
            let mat = word.product().to_c64();
            let key = so3_key(&mat);
            let cell: [i64; 9] = std::array::from_fn(|i| (key[i] / DEDUP_CELL).round() as i64);
            if seen.contains_key(&cell) {
                continue;
            }
            seen.insert(cell, entries.len());
            entries.push(NetEntry { word, mat, key });
        }
        let tree = KdTree::build(entries.iter().map(|e| e.key).collect());
        let mut hasher = Sha256::new();
        for e in &entries {
            hasher.update(e.word.to_string().as_bytes());
            hasher.update(b"\n");
        }
        let digest = hex_digest(&hasher.finalize());
        Ok(EpsilonNet { max_word_len, entries, tree, digest })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Content hash of the word table.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Nearest entry by verified projective distance (candidates retrieved
    /// through the SO(3) index, then re-ranked).
    pub fn nearest(&self, u: &[Complex64; 4]) -> &NetEntry {
        let key = so3_key(u);
        let candidates = self.tree.nearest_k(&key, 24);
        let mut best = candidates[0].1;
        let mut best_d = f64::INFINITY;
        for &(_, idx) in &candidates {
            let e = &self.entries[idx];
            let d = proj_distance_fixed(
                &mat_to_fixed(&e.mat, 64),
                &mat_to_fixed(u, 64),
                DIST_BITS,
            )
            .to_f64();
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        &self.entries[best]
    }

    /// Max distance from `samples` seeded random unitaries to the net.
    pub fn measured_covering_radius(&self, samples: usize, seed: u64) -> f64 {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let m = crate::decompose::random_unitary(2, &mut rng);
            let u = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
            let e = self.nearest(&u);
            worst = worst.max(word_distance(&e.word, &u));
        }
        worst
    }

    /// Serializes the word table (products are recomputed exactly on load).
    pub fn to_cache_text(&self) -> String {
        let mut out = format!("qpathnet 1 {}\n", self.max_word_len);
        for e in &self.entries {
            out.push_str(&e.word.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_cache_text(text: &str) -> Result<EpsilonNet, SkError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| SkError::BadCache("empty file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "qpathnet" || parts[1] != "1" {
            return Err(SkError::BadCache(format!("bad header '{header}'")));
        }
        let max_len: usize = parts[2]
            .parse()
            .map_err(|_| SkError::BadCache("bad word length".into()))?;
        let mut words = vec![GateWord::empty()];
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            words.push(line.parse::<GateWord>().map_err(SkError::BadCache)?);
        }
        Self::from_words(max_len, words, NET_ENTRY_CAP)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Net cache directory: `$QPATH_NET_CACHE` or a subdirectory of the system
/// temp dir.
pub fn net_cache_dir() -> PathBuf {
    match std::env::var_os("QPATH_NET_CACHE") {
        Some(dir) => PathBuf::from(dir),
        None => std::env::temp_dir().join("qpath-net-cache"),
    }
}

/// Loads the net for `max_word_len` from the cache, building and saving it
/// on a miss.
pub fn build_or_load_net(max_word_len: usize, cap: usize) -> Result<EpsilonNet, SkError> {
    let dir = net_cache_dir();
    let path = dir.join(format!("net-v1-len{max_word_len}.txt"));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(net) = EpsilonNet::from_cache_text(&text) {
            if net.max_word_len == max_word_len {
                return Ok(net);
            }
        }
    }
    let net = EpsilonNet::build(max_word_len, cap)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(&path, net.to_cache_text())?;
    Ok(net)
}

// ---------------------------------------------------------------------------
// KD-tree over the 9-dimensional keys
// ---------------------------------------------------------------------------

struct KdNode {
    point: [f64; 9],
    index: usize,
    axis: usize,
    left: Option<Box<KdNode>>,
    right: Option<Box<KdNode>>,
}

struct KdTree {
    root: Option<Box<KdNode>>,
}

impl KdTree {
    fn build(points: Vec<[f64; 9]>) -> KdTree {
        let mut items: Vec<([f64; 9], usize)> =
            points.into_iter().enumerate().map(|(i, p)| (p, i)).collect();
        KdTree { root: Self::build_rec(&mut items, 0) }
    }

    fn build_rec(items: &mut [([f64; 9], usize)], depth: usize) -> Option<Box<KdNode>> {
        if items.is_empty() {
            return None;
        }
        let axis = depth % 9;
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
        let (point, index) = items[mid];
        let (left, rest) = items.split_at_mut(mid);
        let right = &mut rest[1..];
        Some(Box::new(KdNode {
            point,
            index,
            axis,
            left: Self::build_rec(left, depth + 1),
            right: Self::build_rec(right, depth + 1),
        }))
    }

    /// `k` nearest points by squared Euclidean key distance.
    fn nearest_k(&self, query: &[f64; 9], k: usize) -> Vec<(f64, usize)> {
        fn push(heap: &mut Vec<(f64, usize)>, k: usize, d: f64, i: usize) {
            heap.push((d, i));
            heap.sort_by(|a, b| a.0.total_cmp(&b.0));
            heap.truncate(k);
        }
        fn visit(
            node: &Option<Box<KdNode>>,
            query: &[f64; 9],
            k: usize,
            heap: &mut Vec<(f64, usize)>,
        ) {
            let Some(n) = node else { return };
            push(heap, k, key_dist_sqr(&n.point, query), n.index);
            let delta = query[n.axis] - n.point[n.axis];
            let (near, far) = if delta <= 0.0 { (&n.left, &n.right) } else { (&n.right, &n.left) };
            visit(near, query, k, heap);
            let worst = heap.last().map(|e| e.0).unwrap_or(f64::INFINITY);
            if heap.len() < k || delta * delta < worst {
                visit(far, query, k, heap);
            }
        }
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        visit(&self.root, query, k, &mut heap);
        heap
    }
}

// ---------------------------------------------------------------------------
// The Solovay-Kitaev recursion
// ---------------------------------------------------------------------------

/// Hard cap on recursion depth tried by [`sk_approx`].
pub const SK_MAX_DEPTH: u32 = 8;

/// Deterministic approximation of a single-qubit unitary by a word over
/// `{F, F+, H}` with verified projective distance at most `eps`.
///
/// Depth 0 is a nearest-net lookup; depth `k` refines the depth-`k-1` word
/// with a balanced group-commutator correction, keeping whichever of the
/// refined and previous words verifies closer. Fails with the achieved
/// floor if the cap depth cannot reach `eps`.
pub fn sk_approx(u: &[Complex64; 4], eps: f64, net: &EpsilonNet) -> Result<GateWord, SkError> {
    assert!(eps > 0.0, "eps must be positive");
    if unitary_deviation_f64(u) > 1e-6 {
        return Err(SkError::NotUnitary(1e-6));
    }
    let mut best: Option<(GateWord, f64)> = None;
    for depth in 0..=SK_MAX_DEPTH {
        let word = sk_rec(u, depth, net)?;
        let d = word_distance(&word, u);
        if best.as_ref().map_or(true, |(_, bd)| d < *bd) {
            best = Some((word, d));
        }
        if best.as_ref().unwrap().1 <= eps {
            return Ok(best.unwrap().0);
        }
    }
    let (_, achieved) = best.unwrap();
    Err(SkError::FloorUnreachable { requested: eps, achieved })
}

/// The raw recursion at one fixed depth; exposed for diagnostics.
pub fn sk_approx_at_depth(
    u: &[Complex64; 4],
    depth: u32,
    net: &EpsilonNet,
) -> Result<GateWord, SkError> {
    sk_rec(u, depth, net)
}

fn sk_rec(u: &[Complex64; 4], depth: u32, net: &EpsilonNet) -> Result<GateWord, SkError> {
    if depth == 0 {
        return Ok(net.nearest(u).word.clone());
    }
    let prev = sk_rec(u, depth - 1, net)?;
    let prev_mat = prev.product().to_c64();
    let d_prev = word_distance(&prev, u);
    if d_prev < 1e-13 || d_prev > DELTA_MAX {
        return Ok(prev);
    }
    let delta = mat2_mul(u, &mat2_adjoint(&prev_mat));
    let (v, w) = group_commutator_decompose(&delta)?;
    let vw = sk_rec(&v, depth - 1, net)?;
    let ww = sk_rec(&w, depth - 1, net)?;
    // application order: prev first, then the commutator V W V^+ W^+
    let candidate = GateWord::concat(&[&prev, &ww.adjoint(), &vw.adjoint(), &ww, &vw]);
    // keep the refinement only if it verifies as an improvement
    let d_cand = word_distance(&candidate, u);
    Ok(if d_cand < d_prev { candidate } else { prev })
}

// ---------------------------------------------------------------------------
// Whole-program compilation
// ---------------------------------------------------------------------------

/// Per-gate record in a compile report.
#[derive(Clone, Debug)]
pub struct GateCompileRecord {
    pub name: String,
    /// CNOT + single-qubit ops after decomposition.
    pub fragment_ops: usize,
    pub ancillas: usize,
    /// `(length, verified distance)` of words chosen for the fragment's
    /// non-library single-qubit gates.
    pub words: Vec<(usize, f64)>,
}

/// Result summary of [`compile_program`].
#[derive(Clone, Debug)]
pub struct CompileReport {
    /// Post-decomposition gate count (max over branches) that set the
    /// approximation budget.
    pub t_prime: usize,
    /// Per-gate-application approximation budget actually used.
    pub eps: f64,
    pub gates: Vec<GateCompileRecord>,
    pub net_digest: String,
    pub net_word_len: usize,
}

fn single_matrix_key(m: &[Complex64; 4]) -> [u64; 8] {
    let mut k = [0u64; 8];
    for (i, z) in m.iter().enumerate() {
        k[2 * i] = z.re.to_bits();
        k[2 * i + 1] = z.im.to_bits();
    }
    k
}

/// Recognize library single-qubit gates; returns None for the identity.
fn recognize_lib_single(m: &[Complex64; 4]) -> Option<Option<LibGate>> {
    for lib in [LibGate::I, LibGate::H, LibGate::F, LibGate::Fdg] {
        let lm = crate::gate::library_matrix(lib).to_complex64().expect("library eval");
        let lm: [Complex64; 4] = [lm[0], lm[1], lm[2], lm[3]];
        if proj_distance_fixed(&mat_to_fixed(m, 64), &mat_to_fixed(&lm, 64), 96).to_f64() < 1e-14 {
            return Some(if lib == LibGate::I { None } else { Some(lib) });
        }
    }
    None
}

struct Rewriter<'a> {
    fragments: &'a [crate::decompose::CircuitFragment],
    anc_base: usize,
    mid_gates: Vec<CustomGate>,
    interned: HashMap<[u64; 8], usize>,
    interned_mats: Vec<[Complex64; 4]>,
}

impl<'a> Rewriter<'a> {
    fn intern_single(&mut self, m: &[Complex64; 4]) -> usize {
        let key = single_matrix_key(m);
        if let Some(&i) = self.interned.get(&key) {
            return i;
        }
        let idx = self.mid_gates.len();
        let matrix = UnitaryMatrix::from_complex64(2, m).expect("2x2 shape");
        self.mid_gates.push(CustomGate { name: format!("sq{idx}"), matrix });
        self.interned.insert(key, idx);
        self.interned_mats.push(*m);
        idx
    }

    fn rewrite_block(&mut self, block: &[Instr]) -> Block {
        let mut out = Vec::new();
        for ins in block {
            match ins {
                Instr::Gate(GateApp::Unitary { gate: GateRef::Custom(ci), targets }) => {
                    let frag = &self.fragments[*ci];
                    let k = targets.len();
                    let anc_base = self.anc_base;
                    let map = |q: usize| -> usize {
                        if q < k {
                            targets[k - 1 - q]
                        } else {
                            anc_base + (q - k)
                        }
                    };
                    for op in &frag.ops {
                        match op {
                            FragOp::Cnot { control, target } => {
                                out.push(Instr::Gate(GateApp::Unitary {
                                    gate: GateRef::Lib(LibGate::Cnot),
                                    targets: vec![map(*control), map(*target)],
                                }));
                            }
                            FragOp::Single { qubit, matrix } => match recognize_lib_single(matrix)
                            {
                                Some(None) => {}
                                Some(Some(lib)) => out.push(Instr::Gate(GateApp::Unitary {
                                    gate: GateRef::Lib(lib),
                                    targets: vec![map(*qubit)],
                                })),
                                None => {
                                    let idx = self.intern_single(matrix);
                                    out.push(Instr::Gate(GateApp::Unitary {
                                        gate: GateRef::Custom(idx),
                                        targets: vec![map(*qubit)],
                                    }));
                                }
                            },
                            _ => unreachable!("decompose_gate yields lowered fragments"),
                        }
                    }
                }
                Instr::Gate(app) => out.push(Instr::Gate(app.clone())),
                Instr::Measure { qubit, arm0, arm1 } => {
                    out.push(Instr::Measure {
                        qubit: *qubit,
                        arm0: self.rewrite_block(arm0),
                        arm1: self.rewrite_block(arm1),
                    });
                    break;
                }
                Instr::IfInput { index, arm0, arm1 } => {
                    out.push(Instr::IfInput {
                        index: *index,
                        arm0: self.rewrite_block(arm0),
                        arm1: self.rewrite_block(arm1),
                    });
                    break;
                }
                Instr::End(v) => out.push(Instr::End(*v)),
            }
        }
        out
    }
}

fn splice_block(block: &[Instr], words: &[(GateWord, f64)]) -> Block {
    let mut out = Vec::new();
    for ins in block {
        match ins {
            Instr::Gate(GateApp::Unitary { gate: GateRef::Custom(ci), targets }) => {
                let (word, _) = &words[*ci];
                if word.is_empty() {
                    out.push(Instr::Gate(GateApp::Unitary {
                        gate: GateRef::Lib(LibGate::I),
                        targets: vec![targets[0]],
                    }));
                } else {
                    for &l in &word.0 {
                        out.push(Instr::Gate(GateApp::Unitary {
                            gate: GateRef::Lib(l.lib_gate()),
                            targets: vec![targets[0]],
                        }));
                    }
                }
            }
            Instr::Gate(app) => out.push(Instr::Gate(app.clone())),
            Instr::Measure { qubit, arm0, arm1 } => {
                out.push(Instr::Measure {
                    qubit: *qubit,
                    arm0: splice_block(arm0, words),
                    arm1: splice_block(arm1, words),
                });
                break;
            }
            Instr::IfInput { index, arm0, arm1 } => {
                out.push(Instr::IfInput {
                    index: *index,
                    arm0: splice_block(arm0, words),
                    arm1: splice_block(arm1, words),
                });
                break;
            }
            Instr::End(v) => out.push(Instr::End(*v)),
        }
    }
    out
}

/// Compiles a program to the universal library `{CNOT, F, F+, H, I}`:
/// every custom gate is decomposed to CNOT + single-qubit gates, every
/// non-library single-qubit gate is replaced by a Solovay-Kitaev word at
/// budget `eps = 1 / (20 t')` (`t'` = post-decomposition gate count, max
/// over branches), and the result is normalized. The acceptance
/// probability moves by at most `2 t' eps = 1/10`.
pub fn compile_program(
    prog: &BranchingProgram,
    net: &EpsilonNet,
    eps_override: Option<f64>,
) -> Result<(BranchingProgram, CompileReport), SkError> {
    // pass A: decompose custom gates to CNOT + single-qubit fragments
    let mut fragments: Vec<crate::decompose::CircuitFragment> = Vec::new();
    let mut max_anc = 0usize;
    for g in &prog.gates {
        let frag = decompose_gate(&g.matrix)?;
        max_anc = max_anc.max(frag.ancilla_count);
        fragments.push(frag);
    }

    let mut rewriter = Rewriter {
        fragments: &fragments,
        anc_base: prog.num_qubits,
        mid_gates: Vec::new(),
        interned: HashMap::new(),
        interned_mats: Vec::new(),
    };
    let mid_body = rewriter.rewrite_block(&prog.body);
    let mid = BranchingProgram {
        num_qubits: prog.num_qubits + max_anc,
        input_len: prog.input_len,
        gates: rewriter.mid_gates,
        body: mid_body,
    };

    // budget from the post-decomposition gate count
    let t_prime = mid.leaf_tallies().iter().map(|t| t.t).max().unwrap_or(0);
    let eps = eps_override.unwrap_or_else(|| 1.0 / (20.0 * t_prime.max(1) as f64));

    // pass B: SK every remaining custom (single-qubit) gate, one word per
    // distinct matrix
    let mut words: Vec<(GateWord, f64)> = Vec::with_capacity(mid.gates.len());
    for u in &rewriter.interned_mats {
        let word = sk_approx(u, eps, net)?;
        let d = word_distance(&word, u);
        words.push((word, d));
    }

    let spliced = BranchingProgram {
        num_qubits: mid.num_qubits,
        input_len: mid.input_len,
        gates: Vec::new(),
        body: splice_block(&mid.body, &words),
    };
    let compiled = spliced.normalize()?;

    // report: per original gate, fragment size and the words its singles used
    let mut gates = Vec::new();
    for (gi, g) in prog.gates.iter().enumerate() {
        let frag = &fragments[gi];
        let mut gate_words = Vec::new();
        for op in &frag.ops {
            if let FragOp::Single { matrix, .. } = op {
                if recognize_lib_single(matrix).is_none() {
                    let key = single_matrix_key(matrix);
                    if let Some(&mi) = rewriter.interned.get(&key) {
                        let (w, d) = &words[mi];
                        gate_words.push((w.len(), *d));
                    }
                }
            }
        }
        gates.push(GateCompileRecord {
            name: g.name.clone(),
            fragment_ops: frag.ops.len(),
            ancillas: frag.ancilla_count,
            words: gate_words,
        });
    }
    let report = CompileReport {
        t_prime,
        eps,
        gates,
        net_digest: net.digest().to_string(),
        net_word_len: net.max_word_len,
    };
    Ok((compiled, report))
}
