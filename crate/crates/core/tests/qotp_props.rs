mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use qfl_core::qotp::{keygen, qotp_decrypt, qotp_encrypt, PauliKey};
use qfl_core::qsim::{fidelity, Gate, StateVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn all_keys(n: usize) -> Vec<PauliKey> {
    (0..1u32 << (2 * n))
        .map(|bits| {
            let z = (0..n).map(|q| bits >> q & 1 == 1).collect();
            let x = (0..n).map(|q| bits >> (n + q) & 1 == 1).collect();
            PauliKey::from_bits(z, x).unwrap()
        })
        .collect()
}

#[test]
fn keygen_is_seeded() {
    let a = keygen(2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = keygen(2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    let differs = (0..100u64).any(|s| {
        keygen(8, &mut ChaCha8Rng::seed_from_u64(2 * s)).unwrap()
            != keygen(8, &mut ChaCha8Rng::seed_from_u64(2 * s + 1)).unwrap()
    });
    assert!(differs);
}

#[test]
fn keygen_bits_are_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 4;
    let draws = 10_000;
    let mut z_ones = vec![0usize; n];
    let mut x_ones = vec![0usize; n];
    for _ in 0..draws {
        let k = keygen(n, &mut rng).unwrap();
        for q in 0..n {
            z_ones[q] += usize::from(k.z(q));
            x_ones[q] += usize::from(k.x(q));
        }
    }
    for c in z_ones.iter().chain(&x_ones) {
        let mean = *c as f64 / draws as f64;
        assert!((0.47..=0.53).contains(&mean), "{mean}");
    }
}

#[test]
fn single_qubit_examples() {
    let x_only = PauliKey::from_bits(vec![false], vec![true]).unwrap();
    let out = qotp_encrypt(StateVector::zero(1).unwrap(), &x_only).unwrap();
    assert!((out.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    let back = qotp_decrypt(StateVector::basis(1, 1).unwrap(), &x_only).unwrap();
    assert!((back.amplitudes()[0].norm() - 1.0).abs() < 1e-15);

    let z_only = PauliKey::from_bits(vec![true], vec![false]).unwrap();
    let mut plus = StateVector::zero(1).unwrap();
    plus.apply(&Gate::h(0)).unwrap();
    let minus = qotp_encrypt(plus, &z_only).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((minus.amplitudes()[0] - Complex64::new(h, 0.0)).norm() < 1e-15);
    assert!((minus.amplitudes()[1] - Complex64::new(-h, 0.0)).norm() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let psi = StateVector::random(3, &mut rng).unwrap();
    assert_eq!(qotp_encrypt(psi.clone(), &PauliKey::zeros(3)).unwrap(), psi);
}

#[test]
fn decrypt_inverts_encrypt() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let n = 1 + i % 4;
        let psi = StateVector::random(n, &mut rng).unwrap();
        let k = keygen(n, &mut rng).unwrap();
        let back = qotp_decrypt(qotp_encrypt(psi.clone(), &k).unwrap(), &k).unwrap();
        assert!(fidelity(&back, &psi) >= 1.0 - 1e-12);
    }
}

#[test]
fn mismatched_key_flips_by_xor_of_x_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = 4;
        let input = rand::Rng::gen_range(&mut rng, 0..16usize);
        let k1 = keygen(n, &mut rng).unwrap();
        let k2 = keygen(n, &mut rng).unwrap();
        let ct = qotp_encrypt(StateVector::basis(n, input).unwrap(), &k1).unwrap();
        let out = qotp_decrypt(ct, &k2).unwrap();
        let flip: usize = (0..n).filter(|&q| k1.x(q) != k2.x(q)).map(|q| 1 << q).sum();
        assert!((out.amplitudes()[input ^ flip].norm() - 1.0).abs() < 1e-12);
    }
}

pub fn mixed_over_all_keys(psi: &StateVector) -> f64 {
    let n = psi.n_qubits();
    let d = 1usize << n;
    let keys = all_keys(n);
    let mut avg = vec![Complex64::new(0.0, 0.0); d * d];
    for k in &keys {
        let rho = qotp_encrypt(psi.clone(), k).unwrap().density_matrix();
        for (a, r) in avg.iter_mut().zip(rho) {
            *a += r / keys.len() as f64;
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 / d as f64 } else { 0.0 };
            worst = worst.max((avg[i * d + j] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

#[test]
fn perfect_hiding() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for n in [1, 2] {
        for _ in 0..20 {
            let psi = StateVector::random(n, &mut rng).unwrap();
            assert!(mixed_over_all_keys(&psi) <= 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn pads_compose_by_xor(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = StateVector::random(n, &mut rng).unwrap();
        let k1 = keygen(n, &mut rng).unwrap();
        let k2 = keygen(n, &mut rng).unwrap();
        let twice = qotp_encrypt(qotp_encrypt(psi.clone(), &k1).unwrap(), &k2).unwrap();
        let once = qotp_encrypt(psi, &k1.xor(&k2).unwrap()).unwrap();
        prop_assert!(twice.approx_eq_up_to_phase(&once, 1e-12));
    }

    #[test]
    fn hex_round_trips(seed in any::<u64>(), n in 1usize..40) {
        let k = keygen(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (z, x) = k.to_hex();
        prop_assert_eq!(PauliKey::from_hex(&z, &x, n).unwrap(), k);
    }
}
