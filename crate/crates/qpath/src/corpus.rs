//! Seeded random universal-library programs and the two-backend
//! cross-validation driver.
//!
//! Every generated program is over `{CNOT, F, Fdg, H, I}` plus queries
//! (and occasional input branches when an input length is configured), so
//! both the exact statevector backend and the path-counting backend apply.
//! A trial passes only if every complete outcome branch's probability
//! matches between the backends as an exact rational.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gate::{GateRef, LibGate};
use crate::pathcount::{branch_probability, count_paths, threshold_decide, CountError};
use crate::program::{Block, BranchingProgram, GateApp, Instr, Verdict};
use crate::statevec::{enumerate_branches, BranchProb, Mode, SimError};

/// Size bounds for generated programs.
#[derive(Clone, Copy, Debug)]
pub struct CorpusParams {
    pub max_qubits: usize,
    /// Upper bound on gates per path, measurements included.
    pub max_gates: usize,
    pub max_measures: usize,
    pub input_len: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams { max_qubits: 4, max_gates: 12, max_measures: 3, input_len: 2 }
    }
}

/// One seeded random program together with a random input assignment.
pub fn random_program(rng: &mut ChaCha8Rng, params: &CorpusParams) -> (BranchingProgram, Vec<bool>) {
    let s = rng.gen_range(1..=params.max_qubits.max(1));
    let n = if params.input_len == 0 { 0 } else { rng.gen_range(0..=params.input_len) };
    let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    let gates = rng.gen_range(0..=params.max_gates);
    let body = gen_block(rng, s, n, gates, params.max_measures);
    (BranchingProgram { num_qubits: s, input_len: n, gates: Vec::new(), body }, x)
}

fn gen_block(
    rng: &mut ChaCha8Rng,
    s: usize,
    n: usize,
    gate_budget: usize,
    measure_budget: usize,
) -> Block {
    let mut block = Vec::new();
    let mut remaining = gate_budget;
    loop {
        if remaining == 0 {
            block.push(Instr::End(random_verdict(rng)));
            return block;
        }
        // occasionally branch on a classical input bit
        if n > 0 && rng.gen_ratio(1, 12) {
            let index = rng.gen_range(1..=n + 1); // may exceed n: reads 0
            let arm0 = gen_block(rng, s, n, remaining - 1, measure_budget);
            let arm1 = gen_block(rng, s, n, remaining - 1, measure_budget);
            block.push(Instr::IfInput { index, arm0, arm1 });
            return block;
        }
        if measure_budget > 0 && rng.gen_ratio(1, 4) {
            let qubit = rng.gen_range(0..s);
            let arm0 = gen_block(rng, s, n, remaining - 1, measure_budget - 1);
            let arm1 = gen_block(rng, s, n, remaining - 1, measure_budget - 1);
            block.push(Instr::Measure { qubit, arm0, arm1 });
            return block;
        }
        block.push(Instr::Gate(random_gate(rng, s, n)));
        remaining -= 1;
    }
}

fn random_verdict(rng: &mut ChaCha8Rng) -> Verdict {
    if rng.gen() {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

fn random_gate(rng: &mut ChaCha8Rng, s: usize, n: usize) -> GateApp {
    loop {
        match rng.gen_range(0..6) {
            0 if s >= 2 => {
                let c = rng.gen_range(0..s);
                let t = loop {
                    let t = rng.gen_range(0..s);
                    if t != c {
                        break t;
                    }
                };
                return GateApp::Unitary { gate: GateRef::Lib(LibGate::Cnot), targets: vec![c, t] };
            }
            1 => return single(rng, s, LibGate::F),
            2 => return single(rng, s, LibGate::Fdg),
            3 => return single(rng, s, LibGate::H),
            4 => return single(rng, s, LibGate::I),
            5 if n > 0 && s >= 2 => {
                let addr_count = rng.gen_range(1..=2usize.min(s - 1));
                let mut qubits: Vec<usize> = (0..s).collect();
                for i in (1..qubits.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    qubits.swap(i, j);
                }
                let addrs = qubits[..addr_count].to_vec();
                let target = qubits[addr_count];
                return GateApp::Query { addrs, target };
            }
            _ => continue,
        }
    }
}

fn single(rng: &mut ChaCha8Rng, s: usize, g: LibGate) -> GateApp {
    GateApp::Unitary { gate: GateRef::Lib(g), targets: vec![rng.gen_range(0..s)] }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Program(#[from] crate::program::ProgramError),
}

/// Outcome of cross-validating one program.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub index: usize,
    pub exact_match: bool,
    pub branches: usize,
    /// Path-counting verdict agrees with sign(p_accept - 1/2); ties are
    /// excluded and counted separately.
    pub threshold_coherent: bool,
    pub tie: bool,
    /// Program text and mismatch description for failures.
    pub counterexample: Option<String>,
}

/// Aggregate of a corpus run.
#[derive(Clone, Debug, Default)]
pub struct CompareReport {
    pub trials: usize,
    pub matched: usize,
    pub threshold_agreements: usize,
    pub ties: usize,
    pub failures: Vec<TrialOutcome>,
}

impl CompareReport {
    pub fn all_matched(&self) -> bool {
        self.matched == self.trials && self.failures.is_empty()
    }
}

/// Cross-validates one normalized program on one input: per-branch exact
/// probabilities from both backends must be identical rationals, the
/// branch probabilities must sum to one, and the threshold verdict must
/// match the sign of `p_accept - 1/2`.
///
/// `inject_fault` flips one path count before comparison; it exists so
/// harnesses can prove the comparison actually bites.
pub fn compare_once(
    index: usize,
    prog: &BranchingProgram,
    x: &[bool],
    cap: usize,
    inject_fault: bool,
) -> Result<TrialOutcome, CorpusError> {
    let branches = enumerate_branches(prog, x, Mode::Exact, cap)?;
    let tally = prog.uniform_tally(x)?;
    let mut mismatch: Option<String> = None;
    let mut total = BigRational::zero();
    let mut p_accept = BigRational::zero();
    for (bi, b) in branches.iter().enumerate() {
        let sv_p = match &b.p {
            BranchProb::Exact(p) => p.clone(),
            BranchProb::Approx { .. } => unreachable!("exact mode"),
        };
        total += &sv_p;
        if b.verdict == Verdict::Accept {
            p_accept += &sv_p;
        }
        let mut counts = count_paths(prog, x, &b.mu)?;
        if inject_fault && bi == 0 {
            // test hook: corrupt one count
            if let Some(cv) = counts.0.values_mut().next() {
                cv.c[0] += 1u32;
            } else {
                counts.0.insert(0, crate::pathcount::CountVector::unit());
            }
        }
        let pc_p = branch_probability(&counts, tally.f as u32, tally.h as u32);
        if pc_p != sv_p {
            mismatch = Some(format!(
                "branch mu={}: statevec {} vs pathcount {}\n{}",
                b.mu,
                sv_p,
                pc_p,
                prog.to_text()
            ));
            break;
        }
    }
    if mismatch.is_none() && total != BigRational::one() {
        mismatch = Some(format!("branch probabilities sum to {total}, not 1\n{}", prog.to_text()));
    }

    let report = threshold_decide(prog, x, cap)?;
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let coherent = if report.tie {
        p_accept == half
    } else {
        match report.verdict {
            Verdict::Accept => p_accept > half,
            Verdict::Reject => p_accept < half,
        }
    };
    let fraction_side = report.accept_fraction > half;
    let verdict_side = report.verdict == Verdict::Accept;
    if fraction_side != verdict_side {
        mismatch.get_or_insert_with(|| {
            format!(
                "accept fraction {} does not straddle with verdict {:?}\n{}",
                report.accept_fraction,
                report.verdict,
                prog.to_text()
            )
        });
    }

    Ok(TrialOutcome {
        index,
        exact_match: mismatch.is_none(),
        branches: branches.len(),
        threshold_coherent: coherent,
        tie: report.tie,
        counterexample: mismatch,
    })
}

/// Runs `trials` seeded random programs through [`compare_once`].
pub fn compare_corpus(
    params: &CorpusParams,
    trials: usize,
    seed: u64,
    cap: usize,
    inject_fault: Option<usize>,
) -> Result<CompareReport, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CompareReport::default();
    for index in 0..trials {
        let (raw, x) = random_program(&mut rng, params);
        let prog = raw.normalize()?;
        let outcome = compare_once(index, &prog, &x, cap, inject_fault == Some(index))?;
        report.trials += 1;
        if outcome.exact_match {
            report.matched += 1;
        }
        if outcome.tie {
            report.ties += 1;
        } else if outcome.threshold_coherent {
            report.threshold_agreements += 1;
        }
        if !outcome.exact_match || !outcome.threshold_coherent {
            report.failures.push(outcome);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_programs_parse_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = CorpusParams::default();
        for _ in 0..50 {
            let (p, _) = random_program(&mut rng, &params);
            let text = p.to_text();
            let back = BranchingProgram::parse(&text).expect("generated program reparses");
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn small_corpus_matches_exactly() {
        let report = compare_corpus(&CorpusParams::default(), 40, 7, 1 << 16, None).unwrap();
        assert!(report.all_matched(), "failures: {:?}", report.failures);
        assert_eq!(report.ties + report.threshold_agreements, report.trials);
    }

    #[test]
    fn injected_fault_is_caught() {
        let report = compare_corpus(&CorpusParams::default(), 5, 3, 1 << 16, Some(2)).unwrap();
        assert!(!report.all_matched(), "fault injection must produce a counterexample");
        assert!(report.failures.iter().any(|f| f.index == 2));
        assert!(report.failures[0].counterexample.is_some());
    }

    #[test]
    fn empty_program_trivially_matches() {
        let p = BranchingProgram {
            num_qubits: 1,
            input_len: 0,
            gates: Vec::new(),
            body: vec![Instr::End(Verdict::Accept)],
        }
        .normalize()
        .unwrap();
        let out = compare_once(0, &p, &[], 16, false).unwrap();
        assert!(out.exact_match);
    }
}
