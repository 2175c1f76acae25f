//! The unbounded-error acceptance rule: accept exactly when
//! #N+ - #N- > 25^f 2^(h-1), and the dummy-path gadget that centers the
//! count at exactly half of all guess strings.

use qpath::pathcount::{dummy_path_counts, dummy_path_enumerate, threshold_decide};
use qpath::program::BranchingProgram;

fn main() {
    // a clear accept, a clear reject, and an exact tie
    let cases = [
        ("accept", "qubits 1 U H 0 U F 0 U H 0 MEASURE 0 { 0: ACCEPT 1: REJECT }"),
        ("reject", "qubits 1 U H 0 U F 0 U H 0 MEASURE 0 { 0: REJECT 1: ACCEPT }"),
        ("tie", "qubits 1 U H 0 MEASURE 0 { 0: ACCEPT 1: REJECT }"),
    ];
    for (label, text) in cases {
        let prog = BranchingProgram::parse(text).unwrap().normalize().unwrap();
        let r = threshold_decide(&prog, &[], 1 << 10).unwrap();
        println!(
            "{label:>7}: #N+ - #N- = {}, threshold = {}, fraction = {}, verdict {:?}{}",
            num_bigint::BigInt::from(r.n_plus.clone()) - num_bigint::BigInt::from(r.n_minus.clone()),
            r.threshold,
            r.accept_fraction,
            r.verdict,
            if r.tie { " (tie)" } else { "" },
        );
    }

    println!("\ndummy gadget (rejecting = 2^g + 25^f 2^(h-1)):");
    for (f, h, g) in [(0, 1, 1), (1, 1, 6), (1, 2, 8), (2, 3, 15)] {
        let (acc, rej) = dummy_path_counts(f, h, g).unwrap();
        let (acc2, rej2) = dummy_path_enumerate(f, h, g).unwrap();
        assert_eq!((acc.clone(), rej.clone()), (acc2, rej2));
        println!("  f={f} h={h} g={g}: accepting {acc}, rejecting {rej} of 2^{}", g + 1);
    }
}
