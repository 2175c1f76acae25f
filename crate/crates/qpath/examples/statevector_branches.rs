//! Exact branch enumeration for a program with two measurements and an
//! input query: states are projected without renormalization, so each
//! complete outcome history carries its probability as the squared norm.

use qpath::program::BranchingProgram;
use qpath::statevec::{accept_probability, enumerate_branches, BranchProb, Mode};

const PROGRAM: &str = "
qubits 2
input 2
U H 1
QUERY 1 -> 0          # flips qubit 0 when x_(addr) = 1
MEASURE 0 {
  0: U H 0
     MEASURE 1 { 0: ACCEPT 1: REJECT }
  1: MEASURE 1 { 0: REJECT 1: ACCEPT }
}
";

fn main() {
    let prog = BranchingProgram::parse(PROGRAM).expect("parse");
    for x in [[false, false], [true, false], [false, true], [true, true]] {
        let bits: String = x.iter().map(|b| if *b { '1' } else { '0' }).collect();
        println!("input x = {bits}");
        let branches = enumerate_branches(&prog, &x, Mode::Exact, 1 << 10).expect("simulate");
        for b in &branches {
            if let BranchProb::Exact(p) = &b.p {
                println!("  mu={}  p={}  {:?}", b.mu, p, b.verdict);
            }
        }
        if let BranchProb::Exact(p) =
            accept_probability(&prog, &x, Mode::Exact, 1 << 10).expect("accept")
        {
            println!("  Pr[accept] = {p}");
        }
    }
}
