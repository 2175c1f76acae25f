//! The computation-tree view: every gate application spawns child paths
//! with numerators in {1, -1, i, -i}; counting paths per (basis state,
//! numerator) reconstructs each branch probability exactly.

use qpath::pathcount::{branch_probability, count_paths, m_plus_minus, n_totals, oracle};
use qpath::program::{BranchingProgram, OutcomeHistory};

const PROGRAM: &str = "
qubits 2
U H 0
U F 0
CNOT 0 1
U Fdg 1
U H 1
MEASURE 1 { 0: ACCEPT 1: REJECT }
";

fn main() {
    let prog = BranchingProgram::parse(PROGRAM).expect("parse").normalize().expect("normalize");
    let tally = prog.uniform_tally(&[]).expect("uniform");
    println!("t={} m={} f={} h={}", tally.t, tally.m, tally.f, tally.h);

    for mu_text in ["0", "1"] {
        let mu = OutcomeHistory::from_bits(mu_text);
        let counts = count_paths(&prog, &[], &mu).expect("count");
        let tree = oracle::count_paths_tree(&prog, &[], &mu).expect("tree oracle");
        assert_eq!(counts, tree, "dynamic program must equal the literal tree walk");
        println!("\nmu = {mu_text} (dynamic program == literal tree walk)");
        let mut m_plus_total = num_bigint::BigUint::from(0u32);
        let mut m_minus_total = num_bigint::BigUint::from(0u32);
        for (sigma, cv) in &counts.0 {
            let (mp, mm) = m_plus_minus(cv);
            println!(
                "  sigma={sigma:02b}: counts=({}, {}, {}, {})  #M+={mp} #M-={mm}",
                cv.c[0], cv.c[1], cv.c[2], cv.c[3]
            );
            m_plus_total += mp;
            m_minus_total += mm;
        }
        let p = branch_probability(&counts, tally.f as u32, tally.h as u32);
        println!("  p_mu = {p}   (#M+ - #M- = {})", m_plus_total - m_minus_total);
    }

    let (n_plus, n_minus) = n_totals(&prog, &[], 1 << 10).expect("totals");
    println!("\n#N+ = {n_plus}, #N- = {n_minus} over accepting branches");
}
