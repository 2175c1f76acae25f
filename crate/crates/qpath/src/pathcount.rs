//! Exact path counting over the computation tree.
//!
//! Every root-to-leaf path of a universal-library program carries a
//! numerator in `{1, -1, i, -i}`; a branch probability is reconstructed
//! from the four per-basis-state path counts as
//!
//! ```text
//! p_mu = sum_sigma |(c1 - c_neg1) + i (c_i - c_negi)|^2 / (25^f * 2^h)
//! ```
//!
//! The counts are aggregated level by level: because the gate at each step
//! depends only on the outcome history, the number of paths reaching
//! `(sigma, alpha)` is all the tree remembers, so a dynamic program over
//! `(sigma, alpha)` tallies is exact. The naive node-by-node walk survives
//! in [`oracle`] as an independent cross-check.
//!
//! The same counts drive the unbounded-error decision: accept exactly when
//! `#N+ - #N- > 25^f * 2^(h-1)`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::exact::GaussianInt;
use crate::gate::{GateRef, LibGate};
use crate::program::{
    input_bit, BranchingProgram, GateApp, Instr, OutcomeHistory, Verdict,
};

#[derive(Debug, Error)]
pub enum CountError {
    #[error(transparent)]
    Program(#[from] crate::program::ProgramError),
    #[error("path counting requires the universal library; found gate '{0}'")]
    NonUniversal(String),
    #[error("outcome history length {got} does not match the branch's measurement count {want}")]
    HistoryLength { got: usize, want: usize },
    #[error("branch count exceeds cap {0}")]
    BranchCapExceeded(usize),
    #[error("program is not normalized: {0}")]
    NotNormalized(String),
    #[error("dummy gadget layout needs g >= h - 1 + 6f and h >= 1; got f={f}, h={h}, g={g}")]
    GadgetLayout { f: u32, h: u32, g: u32 },
    #[error("register too wide for path counting: {0} qubits")]
    TooWide(usize),
}

/// Numerator values, in the index order used by [`CountVector`].
pub const ALPHAS: [GaussianIntRepr; 4] = [
    GaussianIntRepr { re: 1, im: 0 },
    GaussianIntRepr { re: -1, im: 0 },
    GaussianIntRepr { re: 0, im: 1 },
    GaussianIntRepr { re: 0, im: -1 },
];

/// Small literal form of the four numerators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianIntRepr {
    pub re: i8,
    pub im: i8,
}

/// Path counts per numerator: `c[0]` paths with `alpha = 1`, `c[1]` with
/// `-1`, `c[2]` with `i`, `c[3]` with `-i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountVector {
    pub c: [BigUint; 4],
}

impl CountVector {
    pub fn zero() -> Self {
        CountVector::default()
    }

    pub fn unit() -> Self {
        let mut v = CountVector::default();
        v.c[0] = BigUint::one();
        v
    }

    pub fn from_u64(c1: u64, c_neg1: u64, c_i: u64, c_negi: u64) -> Self {
        CountVector {
            c: [BigUint::from(c1), BigUint::from(c_neg1), BigUint::from(c_i), BigUint::from(c_negi)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    /// Relabels counts under `alpha -> -alpha`.
    pub fn negated(&self) -> Self {
        CountVector {
            c: [self.c[1].clone(), self.c[0].clone(), self.c[3].clone(), self.c[2].clone()],
        }
    }

    /// Relabels counts under `alpha -> i * alpha`.
    pub fn times_i(&self) -> Self {
        CountVector {
            c: [self.c[3].clone(), self.c[2].clone(), self.c[0].clone(), self.c[1].clone()],
        }
    }

    /// Relabels counts under `alpha -> -i * alpha`.
    pub fn times_neg_i(&self) -> Self {
        CountVector {
            c: [self.c[2].clone(), self.c[3].clone(), self.c[1].clone(), self.c[0].clone()],
        }
    }

    pub fn scaled(&self, k: u32) -> Self {
        CountVector {
            c: [
                &self.c[0] * k,
                &self.c[1] * k,
                &self.c[2] * k,
                &self.c[3] * k,
            ],
        }
    }

    pub fn add_assign(&mut self, other: &CountVector) {
        for (a, b) in self.c.iter_mut().zip(other.c.iter()) {
            *a += b;
        }
    }

    /// `(c1 - c_neg1) + i (c_i - c_negi)`, the net numerator sum.
    pub fn net_sum(&self) -> GaussianInt {
        GaussianInt {
            re: BigInt::from(self.c[0].clone()) - BigInt::from(self.c[1].clone()),
            im: BigInt::from(self.c[2].clone()) - BigInt::from(self.c[3].clone()),
        }
    }
}

/// Aggregated level counts: basis state -> per-numerator path counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountMap(pub BTreeMap<u64, CountVector>);

impl CountMap {
    pub fn initial() -> Self {
        let mut m = BTreeMap::new();
        m.insert(0u64, CountVector::unit());
        CountMap(m)
    }

    fn add_into(&mut self, sigma: u64, v: CountVector) {
        match self.0.get_mut(&sigma) {
            Some(cur) => cur.add_assign(&v),
            None => {
                self.0.insert(sigma, v);
            }
        }
    }

    fn apply_h(&self, qubit: usize) -> CountMap {
        let bit = 1u64 << qubit;
        let mut out = CountMap::default();
        for (&sigma, cv) in &self.0 {
            if sigma & bit == 0 {
                out.add_into(sigma, cv.clone());
                out.add_into(sigma | bit, cv.clone());
            } else {
                out.add_into(sigma & !bit, cv.clone());
                out.add_into(sigma, cv.negated());
            }
        }
        out
    }

    fn apply_f(&self, qubit: usize, dagger: bool) -> CountMap {
        let bit = 1u64 << qubit;
        let mut out = CountMap::default();
        for (&sigma, cv) in &self.0 {
            if sigma & bit != 0 {
                // seven children: three keep alpha, four rotate by +-i
                let rotated = if dagger { cv.times_neg_i() } else { cv.times_i() };
                let mut v = cv.scaled(3);
                v.add_assign(&rotated.scaled(4));
                out.add_into(sigma, v);
            } else {
                out.add_into(sigma, cv.scaled(5));
            }
        }
        out
    }

    fn apply_cnot(&self, control: usize, target: usize) -> CountMap {
        let c = 1u64 << control;
        let t = 1u64 << target;
        let mut out = CountMap::default();
        for (&sigma, cv) in &self.0 {
            let dst = if sigma & c != 0 { sigma ^ t } else { sigma };
            out.add_into(dst, cv.clone());
        }
        out
    }

    fn apply_query(&self, addrs: &[usize], target: usize, x: &[bool]) -> CountMap {
        let t = 1u64 << target;
        let mut out = CountMap::default();
        for (&sigma, cv) in &self.0 {
            let mut addr = 0usize;
            for &a in addrs {
                addr = (addr << 1) | (((sigma >> a) & 1) as usize);
            }
            let dst = if input_bit(x, addr) { sigma ^ t } else { sigma };
            out.add_into(dst, cv.clone());
        }
        out
    }

    fn filter_measure(&self, qubit: usize, bit: bool) -> CountMap {
        let mask = 1u64 << qubit;
        CountMap(
            self.0
                .iter()
                .filter(|(&sigma, _)| (sigma & mask != 0) == bit)
                .map(|(&sigma, cv)| (sigma, cv.clone()))
                .collect(),
        )
    }

    fn apply_gate(&self, app: &GateApp, x: &[bool]) -> Result<CountMap, CountError> {
        Ok(match app {
            GateApp::Unitary { gate: GateRef::Lib(g), targets } => match g {
                LibGate::I => self.clone(),
                LibGate::H => self.apply_h(targets[0]),
                LibGate::F => self.apply_f(targets[0], false),
                LibGate::Fdg => self.apply_f(targets[0], true),
                LibGate::Cnot => self.apply_cnot(targets[0], targets[1]),
            },
            GateApp::Unitary { gate: GateRef::Custom(_), .. } => {
                return Err(CountError::NonUniversal("custom".into()));
            }
            GateApp::Query { addrs, target } => self.apply_query(addrs, *target, x),
        })
    }

    /// Total path count over all basis states and numerators.
    pub fn total(&self) -> BigUint {
        let mut t = BigUint::zero();
        for cv in self.0.values() {
            for c in &cv.c {
                t += c;
            }
        }
        t
    }
}

/// Level-by-level path counts for one complete outcome sequence `mu`.
pub fn count_paths(
    prog: &BranchingProgram,
    x: &[bool],
    mu: &OutcomeHistory,
) -> Result<CountMap, CountError> {
    if !prog.is_universal() {
        let name = prog.gates.first().map(|g| g.name.clone()).unwrap_or_else(|| "?".into());
        return Err(CountError::NonUniversal(name));
    }
    if prog.num_qubits > 24 {
        return Err(CountError::TooWide(prog.num_qubits));
    }
    let mut counts = CountMap::initial();
    let mut used = 0usize;
    let mut block: &[Instr] = &prog.body;
    let mut idx = 0usize;
    loop {
        let Some(ins) = block.get(idx) else {
            unreachable!("validated programs end every path with a verdict");
        };
        match ins {
            Instr::Gate(app) => {
                counts = counts.apply_gate(app, x)?;
                idx += 1;
            }
            Instr::Measure { qubit, arm0, arm1 } => {
                let Some(&bit) = mu.0.get(used) else {
                    return Err(CountError::HistoryLength { got: mu.len(), want: used + 1 });
                };
                used += 1;
                counts = counts.filter_measure(*qubit, bit);
                block = if bit { arm1 } else { arm0 };
                idx = 0;
            }
            Instr::IfInput { index, arm0, arm1 } => {
                block = if input_bit(x, *index) { arm1 } else { arm0 };
                idx = 0;
            }
            Instr::End(_) => {
                if used != mu.len() {
                    return Err(CountError::HistoryLength { got: mu.len(), want: used });
                }
                return Ok(counts);
            }
        }
    }
}

/// Claim-style probability reconstruction from final counts.
pub fn branch_probability(counts: &CountMap, f: u32, h: u32) -> BigRational {
    let mut num = BigUint::zero();
    for cv in counts.0.values() {
        num += cv.net_sum().norm_sqr();
    }
    let den = BigInt::from(25u32).pow(f) << h as usize;
    BigRational::new(BigInt::from(num), den)
}

/// `#M+ = sum_alpha c_alpha^2` and `#M- = sum_alpha c_alpha * c_(-alpha)`.
pub fn m_plus_minus(cv: &CountVector) -> (BigUint, BigUint) {
    let m_plus: BigUint = cv.c.iter().map(|c| c * c).sum();
    let m_minus = (&cv.c[0] * &cv.c[1] + &cv.c[2] * &cv.c[3]) * 2u32;
    (m_plus, m_minus)
}

/// Sums of `#M+` and `#M-` over all accepting outcome sequences and all
/// basis states.
pub fn n_totals(
    prog: &BranchingProgram,
    x: &[bool],
    cap: usize,
) -> Result<(BigUint, BigUint), CountError> {
    if !prog.is_universal() {
        let name = prog.gates.first().map(|g| g.name.clone()).unwrap_or_else(|| "?".into());
        return Err(CountError::NonUniversal(name));
    }
    if prog.num_qubits > 24 {
        return Err(CountError::TooWide(prog.num_qubits));
    }
    struct Walker<'p> {
        x: &'p [bool],
        cap: usize,
        leaves: usize,
        n_plus: BigUint,
        n_minus: BigUint,
    }
    impl<'p> Walker<'p> {
        fn run(&mut self, block: &[Instr], mut counts: CountMap) -> Result<(), CountError> {
            for ins in block {
                match ins {
                    Instr::Gate(app) => counts = counts.apply_gate(app, self.x)?,
                    Instr::Measure { qubit, arm0, arm1 } => {
                        let c0 = counts.filter_measure(*qubit, false);
                        let c1 = counts.filter_measure(*qubit, true);
                        self.run(arm0, c0)?;
                        self.run(arm1, c1)?;
                        return Ok(());
                    }
                    Instr::IfInput { index, arm0, arm1 } => {
                        let arm = if input_bit(self.x, *index) { arm1 } else { arm0 };
                        return self.run(arm, counts);
                    }
                    Instr::End(v) => {
                        self.leaves += 1;
                        if self.leaves > self.cap {
                            return Err(CountError::BranchCapExceeded(self.cap));
                        }
                        if *v == Verdict::Accept {
                            for cv in counts.0.values() {
                                let (p, m) = m_plus_minus(cv);
                                self.n_plus += p;
                                self.n_minus += m;
                            }
                        }
                        return Ok(());
                    }
                }
            }
            Ok(())
        }
    }
    let mut w = Walker { x, cap, leaves: 0, n_plus: BigUint::zero(), n_minus: BigUint::zero() };
    w.run(&prog.body, CountMap::initial())?;
    Ok((w.n_plus, w.n_minus))
}

/// Smallest `g >= 1` with `2^g >= max(n_plus, n_minus)`.
pub fn guess_budget(n_plus: &BigUint, n_minus: &BigUint) -> u32 {
    let m = n_plus.max(n_minus);
    if m <= &BigUint::one() {
        return 1;
    }
    ((m - 1u32).bits() as u32).max(1)
}

/// The threshold decision and its certificate.
#[derive(Clone, Debug)]
pub struct ThresholdReport {
    pub n_plus: BigUint,
    pub n_minus: BigUint,
    pub f: u32,
    pub h: u32,
    pub g: u32,
    /// `25^f * 2^(h-1)`.
    pub threshold: BigUint,
    /// `(n_plus - n_minus + 2^(g+1) - threshold) / 2^(g+2)`; above one half
    /// exactly when the verdict is accept.
    pub accept_fraction: BigRational,
    pub verdict: Verdict,
    /// Set when `n_plus - n_minus` lands exactly on the threshold
    /// (acceptance probability exactly one half); the verdict is then the
    /// reject side by convention.
    pub tie: bool,
}

/// Unbounded-error acceptance: accept iff `#N+ - #N- > 25^f * 2^(h-1)`.
pub fn threshold_decide(
    prog: &BranchingProgram,
    x: &[bool],
    cap: usize,
) -> Result<ThresholdReport, CountError> {
    let tally = prog.uniform_tally(x)?;
    if tally.h < 1 {
        return Err(CountError::NotNormalized("h must be at least 1 (run normalize)".into()));
    }
    let (n_plus, n_minus) = n_totals(prog, x, cap)?;
    let g = guess_budget(&n_plus, &n_minus);
    let threshold =
        BigUint::from(25u32).pow(tally.f as u32) << (tally.h as u32 - 1) as usize;
    let diff = BigInt::from(n_plus.clone()) - BigInt::from(n_minus.clone());
    let thr = BigInt::from(threshold.clone());
    let verdict = if diff > thr { Verdict::Accept } else { Verdict::Reject };
    let tie = diff == thr;
    let numer = &diff + (BigInt::one() << (g + 1) as usize) - &thr;
    let denom = BigInt::one() << (g + 2) as usize;
    let accept_fraction = BigRational::new(numer, denom);
    Ok(ThresholdReport {
        n_plus,
        n_minus,
        f: tally.f as u32,
        h: tally.h as u32,
        g,
        threshold,
        accept_fraction,
        verdict,
        tie,
    })
}

/// Count of `(accepting, rejecting)` paths of the dummy gadget over all
/// `2^(g+1)` guess strings.
///
/// Gadget: if the first guess bit is 0, reject; otherwise ignore the next
/// `h - 1` bits, read the next `6f` bits as `f` six-bit groups (values in
/// `{0, ..., 63}`), accept if any group is at least 25, and otherwise
/// reject iff the remaining bits are all zero. The rejecting total is
/// exactly `2^g + 25^f * 2^(h-1)`.
pub fn dummy_path_counts(f: u32, h: u32, g: u32) -> Result<(BigUint, BigUint), CountError> {
    if h < 1 || g < (h - 1) + 6 * f {
        return Err(CountError::GadgetLayout { f, h, g });
    }
    // field-by-field product over the guess-string layout
    let first_zero = BigUint::one() << g as usize;
    let ignored = BigUint::one() << (h - 1) as usize;
    let groups_low = BigUint::from(25u32).pow(f);
    let rejecting = first_zero + ignored * groups_low;
    let total = BigUint::one() << (g + 1) as usize;
    let accepting = &total - &rejecting;
    Ok((accepting, rejecting))
}

/// Literal enumeration of the gadget, one guess string at a time. Kept as
/// the independent cross-check for [`dummy_path_counts`]; needs `g <= 24`.
pub fn dummy_path_enumerate(f: u32, h: u32, g: u32) -> Result<(BigUint, BigUint), CountError> {
    if h < 1 || g < (h - 1) + 6 * f {
        return Err(CountError::GadgetLayout { f, h, g });
    }
    assert!(g <= 24, "literal enumeration is for small g");
    let mut rejecting = 0u64;
    let total = 1u64 << (g + 1);
    for guess in 0..total {
        if guess & 1 == 0 {
            rejecting += 1;
            continue;
        }
        let mut accepted = false;
        for k in 0..f {
            let shift = 1 + (h - 1) + 6 * k;
            let group = (guess >> shift) & 63;
            if group >= 25 {
                accepted = true;
                break;
            }
        }
        if accepted {
            continue;
        }
        let rest = guess >> (1 + (h - 1) + 6 * f);
        if rest == 0 {
            rejecting += 1;
        }
    }
    Ok((BigUint::from(total - rejecting), BigUint::from(rejecting)))
}

pub mod oracle {
    //! Naive node-by-node walk of the computation tree.
    //!
    //! Spawns every child of every node literally (seven children per F
    //! gate on a set qubit), so it is exponential in the gate count and
    //! only fit for tiny programs. It exists as an implementation-independent
    //! cross-check of the aggregated dynamic program in the parent module.

    use super::*;

    /// Numerator index arithmetic: 0 -> 1, 1 -> -1, 2 -> i, 3 -> -i.
    fn alpha_neg(a: usize) -> usize {
        [1, 0, 3, 2][a]
    }

    fn alpha_times_i(a: usize) -> usize {
        [2, 3, 1, 0][a]
    }

    fn alpha_times_neg_i(a: usize) -> usize {
        [3, 2, 0, 1][a]
    }

    /// Tree-walk equivalent of [`count_paths`].
    pub fn count_paths_tree(
        prog: &BranchingProgram,
        x: &[bool],
        mu: &OutcomeHistory,
    ) -> Result<CountMap, CountError> {
        if !prog.is_universal() {
            return Err(CountError::NonUniversal("custom".into()));
        }
        let mut tally = CountMap::default();
        walk(prog, x, mu, &prog.body, 0, 0u64, 0usize, 0, &mut tally)?;
        Ok(tally)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        prog: &BranchingProgram,
        x: &[bool],
        mu: &OutcomeHistory,
        block: &[Instr],
        idx: usize,
        sigma: u64,
        alpha: usize,
        used: usize,
        tally: &mut CountMap,
    ) -> Result<(), CountError> {
        let Some(ins) = block.get(idx) else {
            unreachable!("validated programs end every path with a verdict");
        };
        match ins {
            Instr::Gate(GateApp::Unitary { gate: GateRef::Lib(g), targets }) => {
                let bit = 1u64 << targets[0];
                match g {
                    LibGate::I => walk(prog, x, mu, block, idx + 1, sigma, alpha, used, tally)?,
                    LibGate::H => {
                        if sigma & bit == 0 {
                            walk(prog, x, mu, block, idx + 1, sigma, alpha, used, tally)?;
                            walk(prog, x, mu, block, idx + 1, sigma | bit, alpha, used, tally)?;
                        } else {
                            walk(prog, x, mu, block, idx + 1, sigma & !bit, alpha, used, tally)?;
                            walk(
                                prog,
                                x,
                                mu,
                                block,
                                idx + 1,
                                sigma,
                                alpha_neg(alpha),
                                used,
                                tally,
                            )?;
                        }
                    }
                    LibGate::F | LibGate::Fdg => {
                        if sigma & bit != 0 {
                            let rot = if *g == LibGate::F {
                                alpha_times_i(alpha)
                            } else {
                                alpha_times_neg_i(alpha)
                            };
                            for _ in 0..3 {
                                walk(prog, x, mu, block, idx + 1, sigma, alpha, used, tally)?;
                            }
                            for _ in 0..4 {
                                walk(prog, x, mu, block, idx + 1, sigma, rot, used, tally)?;
                            }
                        } else {
                            for _ in 0..5 {
                                walk(prog, x, mu, block, idx + 1, sigma, alpha, used, tally)?;
                            }
                        }
                    }
                    LibGate::Cnot => {
                        let c = 1u64 << targets[0];
                        let t = 1u64 << targets[1];
                        let dst = if sigma & c != 0 { sigma ^ t } else { sigma };
                        walk(prog, x, mu, block, idx + 1, dst, alpha, used, tally)?;
                    }
                }
            }
            Instr::Gate(GateApp::Unitary { gate: GateRef::Custom(_), .. }) => {
                return Err(CountError::NonUniversal("custom".into()));
            }
            Instr::Gate(GateApp::Query { addrs, target }) => {
                let mut addr = 0usize;
                for &a in addrs {
                    addr = (addr << 1) | (((sigma >> a) & 1) as usize);
                }
                let dst = if input_bit(x, addr) { sigma ^ (1u64 << target) } else { sigma };
                walk(prog, x, mu, block, idx + 1, dst, alpha, used, tally)?;
            }
            Instr::Measure { qubit, arm0, arm1 } => {
                // the node's single child follows the outcome sigma_j;
                // paths whose accumulated outcome leaves the target mu are
                // abandoned (they belong to a different branch)
                let outcome = sigma & (1u64 << qubit) != 0;
                match mu.0.get(used) {
                    Some(&want) if want == outcome => {
                        let arm = if outcome { arm1 } else { arm0 };
                        walk(prog, x, mu, arm, 0, sigma, alpha, used + 1, tally)?;
                    }
                    Some(_) => {}
                    None => {
                        return Err(CountError::HistoryLength { got: mu.len(), want: used + 1 })
                    }
                }
            }
            Instr::IfInput { index, arm0, arm1 } => {
                let arm = if input_bit(x, *index) { arm1 } else { arm0 };
                walk(prog, x, mu, arm, 0, sigma, alpha, used, tally)?;
            }
            Instr::End(_) => {
                if used != mu.len() {
                    return Err(CountError::HistoryLength { got: mu.len(), want: used });
                }
                let mut unit = CountVector::zero();
                unit.c[alpha] = BigUint::one();
                tally.add_into(sigma, unit);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::BranchingProgram;

    fn parse(text: &str) -> BranchingProgram {
        BranchingProgram::parse(text).unwrap()
    }

    fn hfh(accept_on_zero: bool) -> BranchingProgram {
        let (a, r) = if accept_on_zero { ("ACCEPT", "REJECT") } else { ("REJECT", "ACCEPT") };
        parse(&format!(
            "qubits 1; U H 0; U F 0; U H 0; MEASURE 0 {{0: {a} 1: {r}}}"
        ))
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn single_path_program() {
        let p = parse("qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}");
        let counts = count_paths(&p, &[], &OutcomeHistory::from_bits("0")).unwrap();
        assert_eq!(counts.0.len(), 1);
        assert_eq!(counts.0[&0], CountVector::from_u64(1, 0, 0, 0));
    }

    #[test]
    fn hfh_count_vectors() {
        let p = hfh(true);
        let c0 = count_paths(&p, &[], &OutcomeHistory::from_bits("0")).unwrap();
        assert_eq!(c0.0.len(), 1);
        assert_eq!(c0.0[&0], CountVector::from_u64(8, 0, 4, 0));
        let c1 = count_paths(&p, &[], &OutcomeHistory::from_bits("1")).unwrap();
        assert_eq!(c1.0[&1], CountVector::from_u64(5, 3, 0, 4));
        // net sum 2 - 4i with norm 20
        assert_eq!(c1.0[&1].net_sum().norm_sqr(), BigUint::from(20u32));
    }

    #[test]
    fn hfh_branch_probabilities() {
        let p = hfh(true);
        let c0 = count_paths(&p, &[], &OutcomeHistory::from_bits("0")).unwrap();
        assert_eq!(branch_probability(&c0, 1, 2), rat(4, 5));
        let c1 = count_paths(&p, &[], &OutcomeHistory::from_bits("1")).unwrap();
        assert_eq!(branch_probability(&c1, 1, 2), rat(1, 5));
    }

    #[test]
    fn branch_probability_edge_cases() {
        assert_eq!(branch_probability(&CountMap::default(), 3, 5), rat(0, 1));
        assert_eq!(branch_probability(&CountMap::initial(), 0, 0), rat(1, 1));
    }

    #[test]
    fn m_plus_minus_examples() {
        let (p, m) = m_plus_minus(&CountVector::from_u64(8, 0, 4, 0));
        assert_eq!((p, m), (BigUint::from(80u32), BigUint::from(0u32)));
        let (p, m) = m_plus_minus(&CountVector::from_u64(1, 1, 0, 0));
        assert_eq!((p, m), (BigUint::from(2u32), BigUint::from(2u32)));
        let (p, m) = m_plus_minus(&CountVector::zero());
        assert_eq!((p, m), (BigUint::from(0u32), BigUint::from(0u32)));
    }

    #[test]
    fn n_totals_hfh() {
        let (np, nm) = n_totals(&hfh(true), &[], 1 << 10).unwrap();
        assert_eq!(BigInt::from(np) - BigInt::from(nm), BigInt::from(80));
        let (np, nm) = n_totals(&hfh(false), &[], 1 << 10).unwrap();
        assert_eq!(BigInt::from(np) - BigInt::from(nm), BigInt::from(20));
    }

    #[test]
    fn n_totals_always_reject() {
        let p = parse("qubits 1; U H 0; MEASURE 0 {0: REJECT 1: REJECT}");
        let (np, nm) = n_totals(&p, &[], 16).unwrap();
        assert!(np.is_zero() && nm.is_zero());
    }

    #[test]
    fn threshold_hfh() {
        let r = threshold_decide(&hfh(true), &[], 1 << 10).unwrap();
        assert_eq!(r.threshold, BigUint::from(50u32));
        assert_eq!(r.verdict, Verdict::Accept);
        assert!(!r.tie);
        assert!(r.accept_fraction > rat(1, 2));

        let r = threshold_decide(&hfh(false), &[], 1 << 10).unwrap();
        assert_eq!(r.verdict, Verdict::Reject);
        assert!(r.accept_fraction < rat(1, 2));
    }

    #[test]
    fn threshold_tie_on_half() {
        let p = parse("qubits 1; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}");
        let r = threshold_decide(&p, &[], 16).unwrap();
        assert_eq!(r.threshold, BigUint::one());
        assert_eq!(r.verdict, Verdict::Reject);
        assert!(r.tie);
        assert_eq!(r.accept_fraction, rat(1, 2));
    }

    #[test]
    fn threshold_requires_h() {
        let p = parse("qubits 2; CNOT 0 1; ACCEPT");
        assert!(matches!(
            threshold_decide(&p, &[], 16),
            Err(CountError::NotNormalized(_))
        ));
        let n = p.normalize().unwrap();
        let r = threshold_decide(&n, &[], 16).unwrap();
        assert_eq!(r.verdict, Verdict::Accept);
    }

    #[test]
    fn dummy_counts_small_cases() {
        let (acc, rej) = dummy_path_counts(0, 1, 1).unwrap();
        assert_eq!((acc, rej), (BigUint::from(1u32), BigUint::from(3u32)));
        let (acc, rej) = dummy_path_counts(1, 1, 6).unwrap();
        assert_eq!((acc, rej), (BigUint::from(39u32), BigUint::from(89u32)));
        let (_, rej) = dummy_path_counts(2, 3, 15).unwrap();
        assert_eq!(rej, BigUint::from(32768u32 + 625 * 4));
    }

    #[test]
    fn dummy_counts_match_enumeration() {
        for (f, h, g) in [(0, 1, 1), (1, 1, 6), (1, 2, 8), (2, 3, 15), (0, 4, 3)] {
            let closed = dummy_path_counts(f, h, g).unwrap();
            let listed = dummy_path_enumerate(f, h, g).unwrap();
            assert_eq!(closed, listed, "f={f} h={h} g={g}");
        }
    }

    #[test]
    fn dummy_layout_validated() {
        assert!(matches!(
            dummy_path_counts(1, 1, 5),
            Err(CountError::GadgetLayout { .. })
        ));
        assert!(matches!(
            dummy_path_counts(0, 0, 4),
            Err(CountError::GadgetLayout { .. })
        ));
    }

    #[test]
    fn dp_matches_tree_oracle() {
        let texts = [
            "qubits 1; U H 0; U F 0; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}",
            "qubits 2; U H 0; CNOT 0 1; U Fdg 1; MEASURE 1 {0: U H 0 MEASURE 0 {0: ACCEPT 1: REJECT} 1: REJECT}",
            "qubits 2; U F 0; U H 0; U H 1; U F 1; MEASURE 0 {0: ACCEPT 1: ACCEPT}",
        ];
        for text in texts {
            let p = parse(text);
            let branches =
                crate::statevec::enumerate_branches(&p, &[], crate::statevec::Mode::Exact, 1 << 10)
                    .unwrap();
            for b in branches {
                let dp = count_paths(&p, &[], &b.mu).unwrap();
                let tree = oracle::count_paths_tree(&p, &[], &b.mu).unwrap();
                assert_eq!(dp, tree, "{text} mu={}", b.mu);
            }
        }
    }

    #[test]
    fn f_multiplies_totals_by_five_or_seven() {
        // on sigma_j = 0 the total count multiplies by 5; on sigma_j = 1 by 7
        let p0 = parse("qubits 1; U F 0; ACCEPT");
        let c = count_paths(&p0, &[], &OutcomeHistory::empty()).unwrap();
        assert_eq!(c.total(), BigUint::from(5u32));
        let tree = oracle::count_paths_tree(&p0, &[], &OutcomeHistory::empty()).unwrap();
        assert_eq!(tree.total(), BigUint::from(5u32));

        let p1 = parse("qubits 1; U H 0; U F 0; ACCEPT");
        let c = count_paths(&p1, &[], &OutcomeHistory::empty()).unwrap();
        // H gives two paths; F turns the sigma=1 path into 7 and sigma=0 into 5
        assert_eq!(c.total(), BigUint::from(12u32));
    }

    #[test]
    fn guess_budget_bounds() {
        assert_eq!(guess_budget(&BigUint::from(0u32), &BigUint::from(0u32)), 1);
        assert_eq!(guess_budget(&BigUint::from(1u32), &BigUint::from(0u32)), 1);
        assert_eq!(guess_budget(&BigUint::from(80u32), &BigUint::from(0u32)), 7);
        assert_eq!(guess_budget(&BigUint::from(128u32), &BigUint::from(128u32)), 7);
        assert_eq!(guess_budget(&BigUint::from(129u32), &BigUint::from(0u32)), 8);
    }
}
