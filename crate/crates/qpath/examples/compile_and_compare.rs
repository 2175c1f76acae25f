//! Compiling a program with non-library gates down to {CNOT, F, F+, H, I}
//! and checking that the acceptance probability moved by less than the
//! 1/10 budget (2 t' eps with eps = 1/(20 t')).

use qpath::program::BranchingProgram;
use qpath::skcompile::{build_or_load_net, compile_program, NET_ENTRY_CAP};
use qpath::statevec::{accept_probability, BranchProb, Mode};

const PROGRAM: &str = "
qubits 2
GATE T 2  1 0 0 cis(1/4)
GATE RX 2  sqrt(1/2) -1*cis(-1/4)*sqrt(1/2) cis(1/4)*sqrt(1/2) sqrt(1/2)
U T 0
U RX 1
CNOT 0 1
U H 0
MEASURE 0 { 0: MEASURE 1 { 0: ACCEPT 1: REJECT } 1: REJECT }
";

fn main() {
    let prog = BranchingProgram::parse(PROGRAM).expect("parse");
    let net = build_or_load_net(12, NET_ENTRY_CAP).expect("net");
    let (compiled, report) = compile_program(&prog, &net, None).expect("compile");
    println!("t' = {}, eps = {:.5}, drift budget 2 t' eps = {:.3}", report.t_prime, report.eps, 2.0 * report.t_prime as f64 * report.eps);
    for g in &report.gates {
        println!(
            "gate {}: {} fragment ops, words {:?}",
            g.name,
            g.fragment_ops,
            g.words.iter().map(|(l, d)| format!("len {l} dist {d:.1e}")).collect::<Vec<_>>(),
        );
    }

    let p_before = match accept_probability(&prog, &[], Mode::Approx { bits: 96 }, 1 << 12).unwrap() {
        BranchProb::Approx { p, .. } => p,
        BranchProb::Exact(p) => qpath::statevec::rational_to_f64(&p),
    };
    let p_after = match accept_probability(&compiled, &[], Mode::Approx { bits: 96 }, 1 << 12).unwrap() {
        BranchProb::Approx { p, .. } => p,
        BranchProb::Exact(p) => qpath::statevec::rational_to_f64(&p),
    };
    println!("\nPr[accept] before = {p_before:.6}");
    println!("Pr[accept] after  = {p_after:.6}");
    println!("|drift| = {:.2e} (budget 0.1)", (p_after - p_before).abs());
    assert!((p_after - p_before).abs() <= 0.1);
}
