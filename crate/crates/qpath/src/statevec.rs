//! Reference simulator: unnormalized per-branch state vectors.
//!
//! Measurements are never renormalized. At each measurement the state splits
//! into its two projections; a completed branch's probability is the squared
//! 2-norm of its vector. Over the universal library the vector is kept
//! exactly, as Gaussian-integer numerators over a shared denominator
//! `5^f * sqrt(2)^h`; programs with arbitrary gates run in a fixed-point
//! mode with a tracked error bound.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::exact::GaussianInt;
use crate::fixed::FixedComplex;
use crate::gate::{Gate, GateRef, LibGate};
use crate::program::{
    input_bit, BranchingProgram, GateApp, Instr, OutcomeHistory, Verdict,
};
use crate::unitary::MatrixError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("exact mode requires the universal library; found gate '{0}'")]
    NonUniversal(String),
    #[error("measure gates are handled by branch enumeration, not apply_gate")]
    MeasureInApply,
    #[error("branch count exceeds cap {0}")]
    BranchCapExceeded(usize),
    #[error("register too wide: {0} qubits")]
    TooWide(usize),
}

/// Exact unnormalized state: `nums[sigma] / (5^f * sqrt(2)^h)`.
#[derive(Clone, Debug)]
pub struct ExactState {
    pub width: usize,
    pub nums: Vec<GaussianInt>,
    pub f: u32,
    pub h: u32,
}

impl ExactState {
    pub fn zero_state(width: usize) -> Result<Self, SimError> {
        if width > 24 {
            return Err(SimError::TooWide(width));
        }
        let mut nums = vec![GaussianInt::zero(); 1 << width];
        nums[0] = GaussianInt::one();
        Ok(ExactState { width, nums, f: 0, h: 0 })
    }

    pub fn apply_lib(&mut self, g: LibGate, targets: &[usize]) {
        match g {
            LibGate::I => {}
            LibGate::H => {
                let bit = 1usize << targets[0];
                for sigma in 0..self.nums.len() {
                    if sigma & bit == 0 {
                        let a = self.nums[sigma].clone();
                        let b = self.nums[sigma | bit].clone();
                        self.nums[sigma] = &a + &b;
                        self.nums[sigma | bit] = &a - &b;
                    }
                }
                self.h += 1;
            }
            LibGate::F | LibGate::Fdg => {
                let bit = 1usize << targets[0];
                let phase = if g == LibGate::F {
                    GaussianInt::new(3, 4)
                } else {
                    GaussianInt::new(3, -4)
                };
                let five = BigInt::from(5);
                for sigma in 0..self.nums.len() {
                    if sigma & bit != 0 {
                        self.nums[sigma] = &self.nums[sigma] * &phase;
                    } else {
                        self.nums[sigma] = self.nums[sigma].scale(&five);
                    }
                }
                self.f += 1;
            }
            LibGate::Cnot => {
                let c = 1usize << targets[0];
                let t = 1usize << targets[1];
                for sigma in 0..self.nums.len() {
                    if sigma & c != 0 && sigma & t != 0 {
                        self.nums.swap(sigma, sigma & !t);
                    }
                }
            }
        }
    }

    pub fn apply_query(&mut self, addrs: &[usize], target: usize, x: &[bool]) {
        let t = 1usize << target;
        for sigma in 0..self.nums.len() {
            if sigma & t != 0 {
                let mut addr = 0usize;
                for &a in addrs {
                    addr = (addr << 1) | ((sigma >> a) & 1);
                }
                if input_bit(x, addr) {
                    self.nums.swap(sigma, sigma & !t);
                }
            }
        }
    }

    /// Projects onto measurement outcome `bit` of `qubit`, unnormalized.
    pub fn project(&self, qubit: usize, bit: bool) -> ExactState {
        let mask = 1usize << qubit;
        let nums = self
            .nums
            .iter()
            .enumerate()
            .map(|(sigma, a)| {
                if (sigma & mask != 0) == bit {
                    a.clone()
                } else {
                    GaussianInt::zero()
                }
            })
            .collect();
        ExactState { width: self.width, nums, f: self.f, h: self.h }
    }

    /// Exact squared 2-norm `sum |num|^2 / (25^f * 2^h)`.
    pub fn norm_sqr(&self) -> BigRational {
        let mut total = BigUint::zero();
        for a in &self.nums {
            total += a.norm_sqr();
        }
        let den = BigInt::from(25u32).pow(self.f) << self.h as usize;
        BigRational::new(BigInt::from(total), den)
    }
}

/// Fixed-point unnormalized state with a running ledger of the worst-case
/// 2-norm error introduced by entry evaluation and rounding.
#[derive(Clone, Debug)]
pub struct ApproxState {
    pub width: usize,
    pub amps: Vec<FixedComplex>,
    pub bits: u32,
    pub err: f64,
}

impl ApproxState {
    pub fn zero_state(width: usize, bits: u32) -> Result<Self, SimError> {
        if width > 24 {
            return Err(SimError::TooWide(width));
        }
        let mut amps = vec![FixedComplex::zero(bits); 1 << width];
        amps[0] = FixedComplex::one(bits);
        Ok(ApproxState { width, amps, bits, err: 0.0 })
    }

    /// Applies a dense `2^k`-dimensional unitary to the listed targets
    /// (first target = most significant matrix bit). Entries must be given
    /// at least at `self.bits` precision.
    pub fn apply_dense(&mut self, matrix: &[FixedComplex], targets: &[usize]) {
        let k = targets.len();
        let dim = 1usize << k;
        debug_assert_eq!(matrix.len(), dim * dim);
        let mask: usize = targets.iter().map(|&t| 1usize << t).sum();
        let mut scratch = vec![FixedComplex::zero(self.bits); dim];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            // gather: local index i has bit (k-1-pos) from targets[pos]
            for i in 0..dim {
                let mut sigma = base;
                for (pos, &t) in targets.iter().enumerate() {
                    if (i >> (k - 1 - pos)) & 1 == 1 {
                        sigma |= 1 << t;
                    }
                }
                scratch[i] = self.amps[sigma].clone();
            }
            for i in 0..dim {
                let mut acc = FixedComplex::zero(2 * self.bits);
                for (j, s) in scratch.iter().enumerate() {
                    acc = acc.add(&matrix[i * dim + j].mul_exact(s));
                }
                let mut sigma = base;
                for (pos, &t) in targets.iter().enumerate() {
                    if (i >> (k - 1 - pos)) & 1 == 1 {
                        sigma |= 1 << t;
                    }
                }
                self.amps[sigma] = acc.rescale(self.bits);
            }
        }
        // entry error (<= 2^-bits per component) plus rescale rounding,
        // summed across the dim-term dot product, bounded in 2-norm
        self.err += (2 * dim + 2) as f64 * 2f64.powi(-(self.bits as i32));
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let c = 1usize << control;
        let t = 1usize << target;
        for sigma in 0..self.amps.len() {
            if sigma & c != 0 && sigma & t != 0 {
                self.amps.swap(sigma, sigma & !t);
            }
        }
    }

    pub fn apply_query(&mut self, addrs: &[usize], target: usize, x: &[bool]) {
        let t = 1usize << target;
        for sigma in 0..self.amps.len() {
            if sigma & t != 0 {
                let mut addr = 0usize;
                for &a in addrs {
                    addr = (addr << 1) | ((sigma >> a) & 1);
                }
                if input_bit(x, addr) {
                    self.amps.swap(sigma, sigma & !t);
                }
            }
        }
    }

    pub fn project(&self, qubit: usize, bit: bool) -> ApproxState {
        let mask = 1usize << qubit;
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(sigma, a)| {
                if (sigma & mask != 0) == bit {
                    a.clone()
                } else {
                    FixedComplex::zero(self.bits)
                }
            })
            .collect();
        ApproxState { width: self.width, amps, bits: self.bits, err: self.err }
    }

    /// Squared 2-norm with its error bound.
    pub fn norm_sqr(&self) -> (f64, f64) {
        let mut total = crate::fixed::Fixed::zero(0);
        for a in &self.amps {
            total = total.add(&a.norm_sqr());
        }
        let p = total.to_f64();
        // |p - p_true| <= 2 * ||psi|| * err + err^2, and ||psi|| <= 1 + err
        let e = 2.0 * (1.0 + self.err) * self.err + self.err * self.err;
        (p, e)
    }
}

/// A per-branch vector in either representation.
#[derive(Clone, Debug)]
pub enum StateVector {
    Exact(ExactState),
    Approx(ApproxState),
}

/// Outcome of one complete measurement branch.
#[derive(Clone, Debug)]
pub struct BranchOutcome {
    pub mu: OutcomeHistory,
    pub p: BranchProb,
    pub verdict: Verdict,
}

#[derive(Clone, Debug)]
pub enum BranchProb {
    Exact(BigRational),
    Approx { p: f64, err: f64 },
}

impl BranchProb {
    pub fn to_f64(&self) -> f64 {
        match self {
            BranchProb::Exact(r) => rational_to_f64(r),
            BranchProb::Approx { p, .. } => *p,
        }
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // scale down huge operands together to stay in f64 range
    let shift = (num.bits().max(den.bits()) as i64 - 900).max(0) as u64;
    let n = (num >> shift)
        .to_string()
        .parse::<f64>()
        .unwrap_or(f64::NAN);
    let d = (den >> shift)
        .to_string()
        .parse::<f64>()
        .unwrap_or(f64::NAN);
    n / d
}

/// Simulation mode for [`enumerate_branches`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Gaussian-integer amplitudes; universal-library programs only.
    Exact,
    /// Fixed-point amplitudes at the given precision.
    Approx { bits: u32 },
}

/// Applies one (non-measurement) gate to a state. Measurements belong to
/// branch enumeration and are rejected here.
pub fn apply_gate(
    state: &StateVector,
    gate: &Gate,
    x: &[bool],
    prog: &BranchingProgram,
) -> Result<StateVector, SimError> {
    match gate {
        Gate::Measure { .. } => Err(SimError::MeasureInApply),
        Gate::Unitary { gate: gr, targets } => match state {
            StateVector::Exact(s) => {
                let GateRef::Lib(lib) = gr else {
                    return Err(SimError::NonUniversal(prog.gate_name(*gr)));
                };
                let mut s = s.clone();
                s.apply_lib(*lib, targets);
                Ok(StateVector::Exact(s))
            }
            StateVector::Approx(s) => {
                let mut s = s.clone();
                match gr {
                    GateRef::Lib(LibGate::Cnot) => s.apply_cnot(targets[0], targets[1]),
                    _ => {
                        let m = resolve_matrix(prog, *gr, s.bits)?;
                        s.apply_dense(&m, targets);
                    }
                }
                Ok(StateVector::Approx(s))
            }
        },
        Gate::Query { addrs, target } => match state {
            StateVector::Exact(s) => {
                let mut s = s.clone();
                s.apply_query(addrs, *target, x);
                Ok(StateVector::Exact(s))
            }
            StateVector::Approx(s) => {
                let mut s = s.clone();
                s.apply_query(addrs, *target, x);
                Ok(StateVector::Approx(s))
            }
        },
    }
}

fn resolve_matrix(
    prog: &BranchingProgram,
    gate: GateRef,
    bits: u32,
) -> Result<Vec<FixedComplex>, SimError> {
    let m = match gate {
        GateRef::Lib(g) => crate::gate::library_matrix(g),
        GateRef::Custom(i) => prog.gates[i].matrix.clone(),
    };
    Ok(m.eval_all(bits)?)
}

/// Depth-first enumeration of all measurement branches with unnormalized
/// projected states; branches with probability 0 are still enumerated.
pub fn enumerate_branches(
    prog: &BranchingProgram,
    x: &[bool],
    mode: Mode,
    cap: usize,
) -> Result<Vec<BranchOutcome>, SimError> {
    struct Walker<'p> {
        prog: &'p BranchingProgram,
        x: &'p [bool],
        cap: usize,
        out: Vec<BranchOutcome>,
        matrices: std::collections::HashMap<GateRef, Vec<FixedComplex>>,
    }

    impl<'p> Walker<'p> {
        fn matrix(&mut self, gate: GateRef, bits: u32) -> Result<&Vec<FixedComplex>, SimError> {
            if !self.matrices.contains_key(&gate) {
                let m = resolve_matrix(self.prog, gate, bits)?;
                self.matrices.insert(gate, m);
            }
            Ok(&self.matrices[&gate])
        }

        fn run(
            &mut self,
            block: &[Instr],
            mut state: StateVector,
            mu: OutcomeHistory,
        ) -> Result<(), SimError> {
            for (i, ins) in block.iter().enumerate() {
                match ins {
                    Instr::Gate(GateApp::Unitary { gate, targets }) => match &mut state {
                        StateVector::Exact(s) => {
                            let GateRef::Lib(lib) = gate else {
                                return Err(SimError::NonUniversal(self.prog.gate_name(*gate)));
                            };
                            s.apply_lib(*lib, targets);
                        }
                        StateVector::Approx(s) => {
                            if *gate == GateRef::Lib(LibGate::Cnot) {
                                s.apply_cnot(targets[0], targets[1]);
                            } else {
                                let bits = s.bits;
                                let m = self.matrix(*gate, bits)?.clone();
                                s.apply_dense(&m, targets);
                            }
                        }
                    },
                    Instr::Gate(GateApp::Query { addrs, target }) => match &mut state {
                        StateVector::Exact(s) => s.apply_query(addrs, *target, self.x),
                        StateVector::Approx(s) => s.apply_query(addrs, *target, self.x),
                    },
                    Instr::Measure { qubit, arm0, arm1 } => {
                        let (s0, s1) = match &state {
                            StateVector::Exact(s) => (
                                StateVector::Exact(s.project(*qubit, false)),
                                StateVector::Exact(s.project(*qubit, true)),
                            ),
                            StateVector::Approx(s) => (
                                StateVector::Approx(s.project(*qubit, false)),
                                StateVector::Approx(s.project(*qubit, true)),
                            ),
                        };
                        let mut mu0 = mu.clone();
                        mu0.push(false);
                        let mut mu1 = mu;
                        mu1.push(true);
                        self.run(arm0, s0, mu0)?;
                        self.run(arm1, s1, mu1)?;
                        debug_assert_eq!(i + 1, block.len());
                        return Ok(());
                    }
                    Instr::IfInput { index, arm0, arm1 } => {
                        let arm = if input_bit(self.x, *index) { arm1 } else { arm0 };
                        return self.run(arm, state, mu);
                    }
                    Instr::End(v) => {
                        if self.out.len() >= self.cap {
                            return Err(SimError::BranchCapExceeded(self.cap));
                        }
                        let p = match &state {
                            StateVector::Exact(s) => BranchProb::Exact(s.norm_sqr()),
                            StateVector::Approx(s) => {
                                let (p, err) = s.norm_sqr();
                                BranchProb::Approx { p, err }
                            }
                        };
                        self.out.push(BranchOutcome { mu, p, verdict: *v });
                        return Ok(());
                    }
                }
            }
            Ok(())
        }
    }

    if mode == Mode::Exact && !prog.is_universal() {
        // find the offending name for the diagnostic
        let name = prog
            .gates
            .first()
            .map(|g| g.name.clone())
            .unwrap_or_else(|| "?".into());
        return Err(SimError::NonUniversal(name));
    }
    let init = match mode {
        Mode::Exact => StateVector::Exact(ExactState::zero_state(prog.num_qubits)?),
        Mode::Approx { bits } => {
            StateVector::Approx(ApproxState::zero_state(prog.num_qubits, bits)?)
        }
    };
    let mut w = Walker {
        prog,
        x,
        cap,
        out: Vec::new(),
        matrices: std::collections::HashMap::new(),
    };
    w.run(&prog.body, init, OutcomeHistory::empty())?;
    Ok(w.out)
}

/// Sum of branch probabilities over accepting branches.
pub fn accept_probability(
    prog: &BranchingProgram,
    x: &[bool],
    mode: Mode,
    cap: usize,
) -> Result<BranchProb, SimError> {
    let branches = enumerate_branches(prog, x, mode, cap)?;
    match mode {
        Mode::Exact => {
            let mut total = BigRational::zero();
            for b in branches {
                if b.verdict == Verdict::Accept {
                    match b.p {
                        BranchProb::Exact(p) => total += p,
                        BranchProb::Approx { .. } => unreachable!(),
                    }
                }
            }
            Ok(BranchProb::Exact(total))
        }
        Mode::Approx { .. } => {
            let mut total = 0.0;
            let mut err = 0.0;
            for b in branches {
                if b.verdict == Verdict::Accept {
                    match b.p {
                        BranchProb::Approx { p, err: e } => {
                            total += p;
                            err += e;
                        }
                        BranchProb::Exact(_) => unreachable!(),
                    }
                }
            }
            Ok(BranchProb::Approx { p: total, err })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::BranchingProgram;
    use num_traits::One;

    fn parse(text: &str) -> BranchingProgram {
        BranchingProgram::parse(text).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn hadamard_splits_evenly() {
        let p = parse("qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}");
        let out = enumerate_branches(&p, &[], Mode::Exact, 1024).unwrap();
        assert_eq!(out.len(), 2);
        for b in &out {
            match &b.p {
                BranchProb::Exact(p) => assert_eq!(*p, rat(1, 2)),
                _ => panic!(),
            }
        }
        assert_eq!(out[0].verdict, Verdict::Accept);
        assert_eq!(out[1].verdict, Verdict::Reject);
    }

    #[test]
    fn hfh_probabilities() {
        let p = parse("qubits 1; U H 0; U F 0; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}");
        let out = enumerate_branches(&p, &[], Mode::Exact, 1024).unwrap();
        let ps: Vec<_> = out
            .iter()
            .map(|b| match &b.p {
                BranchProb::Exact(p) => p.clone(),
                _ => panic!(),
            })
            .collect();
        assert_eq!(ps, vec![rat(4, 5), rat(1, 5)]);
    }

    #[test]
    fn f_on_h_state_numerators() {
        let mut s = ExactState::zero_state(1).unwrap();
        s.apply_lib(LibGate::H, &[0]);
        s.apply_lib(LibGate::F, &[0]);
        assert_eq!(s.f, 1);
        assert_eq!(s.h, 1);
        assert_eq!(s.nums[0], GaussianInt::new(5, 0));
        assert_eq!(s.nums[1], GaussianInt::new(3, 4));
    }

    #[test]
    fn query_flips_by_input_bit() {
        // address qubit 1 holds |1> -> address value 1 -> reads x_1
        let p = parse(
            "qubits 2\ninput 1\nU H 1\nQUERY 1 -> 0\nMEASURE 0 {0: ACCEPT 1: REJECT}",
        );
        // x = "1": x_1 = 1, so the target flips on the addr=1 half
        let out = enumerate_branches(&p, &[true], Mode::Exact, 1024).unwrap();
        match (&out[0].p, &out[1].p) {
            (BranchProb::Exact(p0), BranchProb::Exact(p1)) => {
                assert_eq!(*p0, rat(1, 2));
                assert_eq!(*p1, rat(1, 2));
            }
            _ => panic!(),
        }
        // x = "0": no flip anywhere, target stays |0>
        let out = enumerate_branches(&p, &[false], Mode::Exact, 1024).unwrap();
        match &out[0].p {
            BranchProb::Exact(p0) => assert_eq!(*p0, rat(1, 1)),
            _ => panic!(),
        }
    }

    #[test]
    fn no_measurement_program() {
        let p = parse("qubits 1; ACCEPT");
        let out = enumerate_branches(&p, &[], Mode::Exact, 16).unwrap();
        assert_eq!(out.len(), 1);
        match &out[0].p {
            BranchProb::Exact(p) => assert_eq!(*p, rat(1, 1)),
            _ => panic!(),
        }
    }

    #[test]
    fn branch_probabilities_sum_to_one() {
        let text = "qubits 2; U H 0; MEASURE 0 {0: U H 1 MEASURE 1 {0: ACCEPT 1: REJECT} 1: U F 1 MEASURE 1 {0: REJECT 1: ACCEPT}}";
        let p = parse(text);
        let out = enumerate_branches(&p, &[], Mode::Exact, 1024).unwrap();
        let mut total = BigRational::zero();
        for b in &out {
            match &b.p {
                BranchProb::Exact(p) => total += p,
                _ => panic!(),
            }
        }
        assert_eq!(total, BigRational::one());
    }

    #[test]
    fn unitaries_preserve_norm_exactly() {
        let mut s = ExactState::zero_state(2).unwrap();
        let before = s.norm_sqr();
        for (g, ts) in [
            (LibGate::H, vec![0usize]),
            (LibGate::F, vec![1]),
            (LibGate::Cnot, vec![0, 1]),
            (LibGate::Fdg, vec![0]),
            (LibGate::H, vec![1]),
            (LibGate::I, vec![0]),
        ] {
            s.apply_lib(g, &ts);
            assert_eq!(s.norm_sqr(), before, "after {g:?}");
        }
    }

    #[test]
    fn gate_algebra_involutions() {
        let mut s = ExactState::zero_state(1).unwrap();
        s.apply_lib(LibGate::H, &[0]);
        s.apply_lib(LibGate::F, &[0]);
        let reference = s.clone();
        // H H = I as an amplitude transformation (h rises by 2, nums double)
        s.apply_lib(LibGate::H, &[0]);
        s.apply_lib(LibGate::H, &[0]);
        assert_eq!(s.norm_sqr(), reference.norm_sqr());
        for (a, b) in s.nums.iter().zip(reference.nums.iter()) {
            assert_eq!(a, &b.scale(&BigInt::from(2)));
        }
        // F Fdg = I up to the common factor 25
        let mut s = reference.clone();
        s.apply_lib(LibGate::F, &[0]);
        s.apply_lib(LibGate::Fdg, &[0]);
        assert_eq!(s.norm_sqr(), reference.norm_sqr());
        for (a, b) in s.nums.iter().zip(reference.nums.iter()) {
            assert_eq!(a, &b.scale(&BigInt::from(25)));
        }
    }

    #[test]
    fn exact_and_approx_agree() {
        let text = "qubits 2; U H 0; U F 0; CNOT 0 1; U H 1; MEASURE 0 {0: MEASURE 1 {0: ACCEPT 1: REJECT} 1: REJECT}";
        let p = parse(text);
        let exact = enumerate_branches(&p, &[], Mode::Exact, 1024).unwrap();
        let approx = enumerate_branches(&p, &[], Mode::Approx { bits: 96 }, 1024).unwrap();
        assert_eq!(exact.len(), approx.len());
        for (e, a) in exact.iter().zip(approx.iter()) {
            assert_eq!(e.mu, a.mu);
            assert_eq!(e.verdict, a.verdict);
            let pe = e.p.to_f64();
            let (pa, err) = match a.p {
                BranchProb::Approx { p, err } => (p, err),
                _ => panic!(),
            };
            assert!((pe - pa).abs() <= err.max(1e-9), "{pe} vs {pa}");
        }
    }

    #[test]
    fn exact_mode_rejects_custom_gates() {
        let p = parse("qubits 1; GATE T 2 1 0 0 cis(1/4); U T 0; ACCEPT");
        assert!(matches!(
            enumerate_branches(&p, &[], Mode::Exact, 16),
            Err(SimError::NonUniversal(_))
        ));
        // but approx mode runs it
        let out = enumerate_branches(&p, &[], Mode::Approx { bits: 96 }, 16).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn branch_cap_is_enforced() {
        let text = "qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}";
        let p = parse(text);
        assert!(matches!(
            enumerate_branches(&p, &[], Mode::Exact, 1),
            Err(SimError::BranchCapExceeded(1))
        ));
    }
}
