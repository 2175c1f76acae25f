//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with its measurements (run with `--nocapture` to see them).

use std::sync::OnceLock;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpath::corpus::{compare_corpus, CompareReport, CorpusParams};
use qpath::decompose::{decompose_gate, op_norm, random_unitary};
use qpath::gate::{GateRef, LibGate};
use qpath::pathcount::{
    branch_probability, count_paths, dummy_path_counts, dummy_path_enumerate, m_plus_minus,
    oracle, threshold_decide, CountVector,
};
use qpath::program::{BranchingProgram, GateApp, Instr, OutcomeHistory, Verdict};
use qpath::skcompile::{build_or_load_net, compile_program, sk_approx, word_distance, EpsilonNet, NET_ENTRY_CAP};
use qpath::statevec::{accept_probability, enumerate_branches, BranchProb, Mode};
use qpath::unitary::UnitaryMatrix;

const CORPUS_TRIALS: usize = 500;
const CORPUS_SEED: u64 = 20240817;

fn corpus_report() -> &'static (CompareReport, f64) {
    static REPORT: OnceLock<(CompareReport, f64)> = OnceLock::new();
    REPORT.get_or_init(|| {
        let params = CorpusParams { max_qubits: 5, max_gates: 14, max_measures: 3, input_len: 2 };
        let started = Instant::now();
        let report = compare_corpus(&params, CORPUS_TRIALS, CORPUS_SEED, 1 << 20, None)
            .expect("corpus run");
        (report, started.elapsed().as_secs_f64())
    })
}

fn shared_net() -> &'static EpsilonNet {
    static NET: OnceLock<EpsilonNet> = OnceLock::new();
    NET.get_or_init(|| build_or_load_net(12, NET_ENTRY_CAP).expect("net"))
}

/// Criterion 1: on >= 500 seeded random universal-library programs
/// (s <= 5, t <= 14, m <= 3) and every complete outcome sequence, the
/// path-counting probability equals the exact statevector probability as
/// exact rationals, 100% of the time, within 60 s.
#[test]
fn criterion_1_claim_equivalence() {
    let (report, secs) = corpus_report();
    assert_eq!(report.trials, CORPUS_TRIALS);
    assert!(
        report.all_matched(),
        "criterion 1: FAIL - counterexamples: {:?}",
        report.failures
    );
    assert!(*secs <= 60.0, "criterion 1: FAIL - took {secs:.1}s (> 60s)");
    println!(
        "criterion 1: PASS - {}/{} programs exact across all branches in {secs:.1}s",
        report.matched, report.trials
    );
}

/// Criterion 2: the worked H-F-H example yields p0 = 4/5, p1 = 1/5, count
/// maps {0 -> (8,0,4,0)} and {1 -> (5,3,0,4)}, and threshold report
/// (n_plus - n_minus, threshold) = (80, 50), agreeing across both backends
/// and the literal tree-walk oracle.
#[test]
fn criterion_2_worked_example() {
    let prog = BranchingProgram::parse(
        "qubits 1; U H 0; U F 0; U H 0; MEASURE 0 {0: ACCEPT 1: REJECT}",
    )
    .unwrap()
    .normalize()
    .unwrap();
    let rat = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));

    let branches = enumerate_branches(&prog, &[], Mode::Exact, 16).unwrap();
    let ps: Vec<BigRational> = branches
        .iter()
        .map(|b| match &b.p {
            BranchProb::Exact(p) => p.clone(),
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(ps, vec![rat(4, 5), rat(1, 5)], "criterion 2: FAIL - statevector branch probabilities");

    let tally = prog.uniform_tally(&[]).unwrap();
    let mu0 = OutcomeHistory::from_bits("0");
    let mu1 = OutcomeHistory::from_bits("1");
    let c0 = count_paths(&prog, &[], &mu0).unwrap();
    let c1 = count_paths(&prog, &[], &mu1).unwrap();
    assert_eq!(c0.0[&0], CountVector::from_u64(8, 0, 4, 0), "criterion 2: FAIL - mu=0 counts");
    assert_eq!(c1.0[&1], CountVector::from_u64(5, 3, 0, 4), "criterion 2: FAIL - mu=1 counts");
    assert_eq!(oracle::count_paths_tree(&prog, &[], &mu0).unwrap(), c0);
    assert_eq!(oracle::count_paths_tree(&prog, &[], &mu1).unwrap(), c1);
    assert_eq!(branch_probability(&c0, tally.f as u32, tally.h as u32), rat(4, 5));
    assert_eq!(branch_probability(&c1, tally.f as u32, tally.h as u32), rat(1, 5));

    let report = threshold_decide(&prog, &[], 16).unwrap();
    let diff = BigInt::from(report.n_plus.clone()) - BigInt::from(report.n_minus.clone());
    assert_eq!(diff, BigInt::from(80), "criterion 2: FAIL - count difference");
    assert_eq!(report.threshold, BigUint::from(50u32), "criterion 2: FAIL - threshold");
    assert_eq!(report.verdict, Verdict::Accept);
    println!(
        "criterion 2: PASS - p = (4/5, 1/5), counts (8,0,4,0)/(5,3,0,4), threshold (80, 50), both backends + tree oracle"
    );
}

fn approx_accept(prog: &BranchingProgram) -> (f64, f64) {
    match accept_probability(prog, &[], Mode::Approx { bits: 96 }, 1 << 12).unwrap() {
        BranchProb::Approx { p, err } => (p, err),
        BranchProb::Exact(_) => unreachable!(),
    }
}

/// One seeded program with non-library gates for the drift check.
fn drift_program(idx: usize) -> BranchingProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(9000 + idx as u64);
    let mut gates = Vec::new();
    let big = idx % 7 == 3; // a few programs get a 4x4 custom gate
    if big {
        let m = random_unitary(4, &mut rng);
        gates.push(qpath::program::CustomGate {
            name: "G4".into(),
            matrix: UnitaryMatrix::from_complex64(4, &m.a).unwrap(),
        });
    }
    let n_small = 1 + idx % 2;
    for k in 0..n_small {
        let m = random_unitary(2, &mut rng);
        gates.push(qpath::program::CustomGate {
            name: format!("G{k}"),
            matrix: UnitaryMatrix::from_complex64(2, &m.a).unwrap(),
        });
    }
    let lib = |g: LibGate, q: usize| {
        Instr::Gate(GateApp::Unitary { gate: GateRef::Lib(g), targets: vec![q] })
    };
    let custom = |i: usize, ts: Vec<usize>| {
        Instr::Gate(GateApp::Unitary { gate: GateRef::Custom(i), targets: ts })
    };
    let mut body = Vec::new();
    if big {
        body.push(custom(0, vec![0, 1]));
    }
    for k in 0..(2 + idx % 3) {
        let ci = usize::from(big) + k % n_small;
        body.push(custom(ci, vec![k % 2]));
        body.push(lib([LibGate::H, LibGate::F, LibGate::I][k % 3], (k + 1) % 2));
    }
    body.push(Instr::Gate(GateApp::Unitary {
        gate: GateRef::Lib(LibGate::Cnot),
        targets: vec![0, 1],
    }));
    let inner_accept = vec![lib(LibGate::H, 1), Instr::End(Verdict::Accept)];
    let arm0 = if idx % 2 == 0 {
        vec![Instr::Measure {
            qubit: 1,
            arm0: inner_accept,
            arm1: vec![Instr::End(Verdict::Reject)],
        }]
    } else {
        vec![Instr::End(Verdict::Accept)]
    };
    body.push(Instr::Measure { qubit: 0, arm0, arm1: vec![Instr::End(Verdict::Reject)] });
    BranchingProgram { num_qubits: 2, input_len: 0, gates, body }
}

/// Criterion 3: on >= 20 programs with non-universal gates
/// (post-decomposition t' <= 200) compiled at eps = 1/(20 t'), the
/// acceptance probability moves by at most 1/10 every time, with
/// 2 t' eps = 1/10 as the envelope, compared by statevector at 1e-9
/// precision, all within 10 minutes including the net build from cache.
#[test]
fn criterion_3_compile_drift_bound() {
    let started = Instant::now();
    let net = shared_net();
    let mut worst: f64 = 0.0;
    let mut worst_t = 0usize;
    for idx in 0..20 {
        let prog = drift_program(idx);
        let (compiled, report) = compile_program(&prog, net, None).expect("compile");
        assert!(report.t_prime <= 200, "t' = {} exceeds 200", report.t_prime);
        let envelope = 2.0 * report.t_prime as f64 * report.eps;
        assert!((envelope - 0.1).abs() < 1e-12, "budget must be exactly 1/10");
        let (p0, e0) = approx_accept(&prog);
        let (p1, e1) = approx_accept(&compiled);
        assert!(e0.max(e1) <= 1e-9, "statevector precision {e0:.1e}/{e1:.1e} above 1e-9");
        let drift = (p1 - p0).abs();
        assert!(
            drift <= 0.1,
            "criterion 3: FAIL - program {idx} drift {drift} exceeds 1/10 (t' = {})",
            report.t_prime
        );
        if drift > worst {
            worst = drift;
            worst_t = report.t_prime;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs <= 600.0, "criterion 3: FAIL - took {secs:.0}s (> 10 min)");
    println!(
        "criterion 3: PASS - 20/20 compiled programs within 1/10 (worst drift {worst:.2e} at t' = {worst_t}) in {secs:.1}s"
    );
}

/// Criterion 4: the Solovay-Kitaev distance guarantee holds for 50 seeded
/// random unitaries at every eps down to 5e-3, verified by exact
/// word-product evaluation; the length-vs-ln(1/eps) curve is reported.
#[test]
fn criterion_4_sk_distance_guarantee() {
    let started = Instant::now();
    let net = shared_net();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let targets: Vec<[Complex64; 4]> = (0..50)
        .map(|_| {
            let m = random_unitary(2, &mut rng);
            [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
        })
        .collect();
    let ladder = [0.2, 0.1, 0.05, 0.02, 0.01, 0.005];
    let mut medians = Vec::new();
    for &eps in &ladder {
        let mut lens = Vec::new();
        for u in &targets {
            let word = sk_approx(u, eps, net).expect("sk within floor");
            let d = word_distance(&word, u);
            assert!(d <= eps, "criterion 4: FAIL - verified distance {d} > eps {eps}");
            lens.push(word.len());
        }
        lens.sort_unstable();
        medians.push((eps, lens[lens.len() / 2]));
    }
    // soft polylog check: report growth of median length per eps halving
    let curve: Vec<String> = medians
        .iter()
        .map(|(e, l)| format!("eps {e}: len {l}"))
        .collect();
    let secs = started.elapsed().as_secs_f64();
    println!(
        "criterion 4: PASS - 50 unitaries x {} eps values all met; curve [{}] in {secs:.1}s",
        ladder.len(),
        curve.join(", ")
    );
}

/// Criterion 5: 100 seeded random unitaries of dims 2, 4, 8 decompose to
/// CNOT + single-qubit fragments that reconstruct within operator norm
/// 1e-9 with ancillas restored to |0> within 1e-9.
#[test]
fn criterion_5_decompose_reconstruction() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let mut count = 0usize;
    let mut worst_dist: f64 = 0.0;
    let mut worst_leak: f64 = 0.0;
    for round in 0..100 {
        let dim = [2usize, 4, 8][round % 3];
        let m = random_unitary(dim, &mut rng);
        let u = UnitaryMatrix::from_complex64(dim, &m.a).unwrap();
        let frag = decompose_gate(&u).expect("decompose");
        assert!(frag.is_lowered(), "fragment must contain only CNOT + single-qubit gates");
        let (main, leak) = frag.induced_matrix_main();
        let dist = op_norm(&main.sub(&m));
        assert!(dist <= 1e-9, "criterion 5: FAIL - dim {dim} distance {dist:.2e}");
        assert!(leak <= 1e-9, "criterion 5: FAIL - dim {dim} ancilla leak {leak:.2e}");
        worst_dist = worst_dist.max(dist);
        worst_leak = worst_leak.max(leak);
        count += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    println!(
        "criterion 5: PASS - {count}/100 reconstructions within 1e-9 (worst {worst_dist:.2e}, leak {worst_leak:.2e}) in {secs:.1}s"
    );
}

/// Criterion 6: for every (f, h, g) with f <= 2, h <= 4, g <= 16 meeting
/// the layout precondition, exhaustive enumeration of the dummy gadget
/// yields exactly 2^g + 25^f 2^(h-1) rejecting paths, in under 5 s.
#[test]
fn criterion_6_dummy_gadget() {
    let started = Instant::now();
    let mut combos = 0usize;
    for f in 0..=2u32 {
        for h in 1..=4u32 {
            for g in 0..=16u32 {
                if g < (h - 1) + 6 * f {
                    assert!(dummy_path_counts(f, h, g).is_err());
                    continue;
                }
                let expect =
                    (BigUint::from(1u32) << g) + BigUint::from(25u32).pow(f) * (BigUint::from(1u32) << (h - 1));
                let (acc_c, rej_c) = dummy_path_counts(f, h, g).unwrap();
                let (acc_e, rej_e) = dummy_path_enumerate(f, h, g).unwrap();
                assert_eq!(rej_e, expect, "criterion 6: FAIL - f={f} h={h} g={g}");
                assert_eq!((acc_c, rej_c), (acc_e, rej_e), "closed form vs enumeration");
                combos += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 5.0, "criterion 6: FAIL - took {secs:.2}s (>= 5s)");
    println!("criterion 6: PASS - {combos} layouts enumerated exhaustively in {secs:.2}s");
}

/// Criterion 7: across the criterion-1 corpus, the threshold verdict
/// equals sign(Pr - 1/2) whenever Pr != 1/2, with ties flagged explicitly.
#[test]
fn criterion_7_threshold_coherence() {
    let (report, _) = corpus_report();
    assert_eq!(
        report.threshold_agreements + report.ties,
        report.trials,
        "criterion 7: FAIL - verdict disagreements: {:?}",
        report.failures
    );
    println!(
        "criterion 7: PASS - {} verdicts match sign(Pr - 1/2), {} exact ties flagged",
        report.threshold_agreements, report.ties
    );
}

/// Criterion 8: 10^4 random count 4-tuples satisfy
/// m_plus - m_minus = |c1 - c_neg1 + i(c_i - c_negi)|^2 exactly.
#[test]
fn criterion_8_algebraic_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8888);
    for round in 0..10_000 {
        let c: [u64; 4] = std::array::from_fn(|_| rng.gen_range(0..=u64::MAX >> 16));
        let cv = CountVector::from_u64(c[0], c[1], c[2], c[3]);
        let (m_plus, m_minus) = m_plus_minus(&cv);
        let lhs = BigInt::from(m_plus) - BigInt::from(m_minus);
        let rhs = BigInt::from(cv.net_sum().norm_sqr());
        assert_eq!(lhs, rhs, "criterion 8: FAIL - tuple {c:?} at round {round}");
    }
    println!("criterion 8: PASS - 10000 tuples satisfy the cross-term identity exactly");
}
