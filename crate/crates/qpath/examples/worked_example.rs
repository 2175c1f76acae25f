//! End-to-end walkthrough on the H-F-H interference program: exact branch
//! probabilities from both backends, the per-numerator path counts, and
//! the unbounded-error threshold decision.

use qpath::pathcount::{branch_probability, count_paths, threshold_decide};
use qpath::program::BranchingProgram;
use qpath::statevec::{enumerate_branches, BranchProb, Mode};

const PROGRAM: &str = "
qubits 1
U H 0
U F 0
U H 0
MEASURE 0 { 0: ACCEPT 1: REJECT }
";

fn main() {
    let prog = BranchingProgram::parse(PROGRAM).expect("parse");
    let prog = prog.normalize().expect("normalize");
    let profile = prog.profile(&[]).expect("profile");
    println!("profile: t={} s={} m={} f={} h={} g={}", profile.t, profile.s, profile.m, profile.f, profile.h, profile.g);

    println!("\nstatevector branches (unnormalized projections):");
    let branches = enumerate_branches(&prog, &[], Mode::Exact, 1 << 10).expect("simulate");
    for b in &branches {
        if let BranchProb::Exact(p) = &b.p {
            println!("  mu={}  p={}  {:?}", b.mu, p, b.verdict);
        }
    }

    println!("\npath counts per basis state (c1, c-1, ci, c-i):");
    for b in &branches {
        let counts = count_paths(&prog, &[], &b.mu).expect("count");
        for (sigma, cv) in &counts.0 {
            println!(
                "  mu={}  sigma={sigma:0width$b}  counts=({}, {}, {}, {})",
                b.mu,
                cv.c[0],
                cv.c[1],
                cv.c[2],
                cv.c[3],
                width = profile.s,
            );
        }
        let p = branch_probability(&counts, profile.f as u32, profile.h as u32);
        println!("    reconstructed p = {p}");
    }

    let report = threshold_decide(&prog, &[], 1 << 10).expect("threshold");
    println!("\nthreshold decision:");
    println!("  #N+ = {}  #N- = {}", report.n_plus, report.n_minus);
    println!("  threshold 25^f 2^(h-1) = {}", report.threshold);
    println!("  accept fraction = {}", report.accept_fraction);
    println!("  verdict: {:?}{}", report.verdict, if report.tie { " (tie)" } else { "" });
}
