//! Decomposing random unitaries to CNOT + single-qubit gates, checking the
//! reconstruction distance and that ancillas come back clean.

use qpath::decompose::{decompose_gate, op_norm, random_unitary, two_level_decompose};
use qpath::unitary::UnitaryMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for dim in [2usize, 4, 8] {
        let m = random_unitary(dim, &mut rng);
        let u = UnitaryMatrix::from_complex64(dim, &m.a).expect("dyadic matrix");

        let two_level = two_level_decompose(&u).expect("two-level stage");
        let frag = decompose_gate(&u).expect("full pipeline");
        let (main, leak) = frag.induced_matrix_main();
        let dist = op_norm(&main.sub(&m));
        println!(
            "dim {dim}: {} two-level gates (bound {}), {} CNOT+single ops, {} ancillas",
            two_level.len(),
            dim * (dim - 1) / 2,
            frag.ops.len(),
            frag.ancilla_count,
        );
        println!("         reconstruction distance {dist:.2e}, ancilla leak {leak:.2e}");
        assert!(dist <= 1e-9 && leak <= 1e-9);
    }
}
