//! Parsing, normalization, and profiles: padding makes every outcome
//! branch apply the same number of gates of each kind without touching
//! any branch probability.

use qpath::program::BranchingProgram;
use qpath::statevec::{enumerate_branches, BranchProb, Mode};

const PROGRAM: &str = "
qubits 2
U H 0
MEASURE 0 {
  0: U H 1 U F 1 U H 1 MEASURE 1 { 0: ACCEPT 1: REJECT }
  1: REJECT
}
";

fn main() {
    let prog = BranchingProgram::parse(PROGRAM).expect("parse");
    println!("before normalization, per-leaf (t, m, f, h):");
    for t in prog.leaf_tallies() {
        println!("  t={} m={} f={} h={}", t.t, t.m, t.f, t.h);
    }

    let norm = prog.normalize().expect("normalize");
    println!("\nafter normalization ({} qubits, was {}):", norm.num_qubits, prog.num_qubits);
    for t in norm.leaf_tallies() {
        println!("  t={} m={} f={} h={}", t.t, t.m, t.f, t.h);
    }
    let profile = norm.profile(&[]).expect("profile");
    println!("profile: t={} s={} m={} f={} h={} g={}", profile.t, profile.s, profile.m, profile.f, profile.h, profile.g);

    // padding preserves the original acceptance probability exactly
    let p = |prog: &BranchingProgram| {
        let mut total = num_rational::BigRational::from_integer(0.into());
        for b in enumerate_branches(prog, &[], Mode::Exact, 1 << 10).unwrap() {
            if let (BranchProb::Exact(p), qpath::program::Verdict::Accept) = (&b.p, b.verdict) {
                total += p;
            }
        }
        total
    };
    let before = p(&prog);
    let after = p(&norm);
    println!("\nPr[accept] before = {before}, after = {after}");
    assert_eq!(before, after);

    println!("\nnormalized text:\n{}", norm.to_text());
}
