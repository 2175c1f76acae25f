//! Random-corpus cross-validation: the path-counting backend must agree
//! with the exact statevector backend on every branch of every program,
//! as exact rationals.

use qpath::corpus::{compare_corpus, CorpusParams};

fn main() {
    let params = CorpusParams { max_qubits: 4, max_gates: 12, max_measures: 3, input_len: 2 };
    let report = compare_corpus(&params, 100, 7, 1 << 16, None).expect("corpus");
    println!(
        "{}/{} programs matched exactly; threshold verdicts coherent on {} (+{} exact ties)",
        report.matched, report.trials, report.threshold_agreements, report.ties
    );
    for f in &report.failures {
        println!("FAILURE at trial {}:\n{}", f.index, f.counterexample.as_deref().unwrap_or("?"));
    }
    assert!(report.all_matched());
}
