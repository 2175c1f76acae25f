//! Approximating single-qubit unitaries by words over {F, F+, H}: net
//! quality, the accuracy ladder, and word-length growth against ln(1/eps).

use num_complex::Complex64;
use qpath::decompose::random_unitary;
use qpath::skcompile::{build_or_load_net, sk_approx, word_distance, NET_ENTRY_CAP};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let net = build_or_load_net(12, NET_ENTRY_CAP).expect("net");
    println!("net: word length <= 12, {} entries, digest {}...", net.len(), &net.digest()[..12]);
    println!(
        "measured covering radius on 200 samples: {:.4}",
        net.measured_covering_radius(200, 42)
    );

    // the T gate: diag(1, e^{i pi/4})
    let t_gate: [Complex64; 4] = [
        1.0.into(),
        0.0.into(),
        0.0.into(),
        Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
    ];
    println!("\nT gate at shrinking eps:");
    for eps in [0.1, 0.05, 0.02, 0.01, 0.005] {
        let word = sk_approx(&t_gate, eps, &net).expect("sk");
        let d = word_distance(&word, &t_gate);
        println!("  eps {eps:>6}: word length {:>5}, verified distance {d:.3e}", word.len());
    }

    println!("\nmedian word length vs ln(1/eps) over 10 random unitaries:");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let targets: Vec<[Complex64; 4]> = (0..10)
        .map(|_| {
            let m = random_unitary(2, &mut rng);
            [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
        })
        .collect();
    for eps in [0.2, 0.1, 0.05, 0.02, 0.01, 0.005] {
        let mut lens: Vec<usize> = targets
            .iter()
            .map(|u| sk_approx(u, eps, &net).expect("sk").len())
            .collect();
        lens.sort_unstable();
        println!(
            "  eps {eps:>6}: ln(1/eps) = {:>5.2}, median length {:>5}",
            (1.0 / eps).ln(),
            lens[lens.len() / 2]
        );
    }
}
