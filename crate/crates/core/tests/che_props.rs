use proptest::prelude::*;
use qfl_core::che::{che_keygen, CheCostModel};
use qfl_core::qhe::{update_key_clifford, CheKeyView, EncryptedKey, EncryptedKeyView, Rule};
use qfl_core::qotp::keygen;
use qfl_core::qsim::Gate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn xor_is_associative_over_all_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = che_keygen(&mut rng);
    let ev = k.evaluator();
    for bits in 0..8u8 {
        let [a, b, c] = [bits & 1 == 1, bits & 2 == 2, bits & 4 == 4];
        let ab = ev.xor(&k.encrypt(a), &k.encrypt(b)).unwrap();
        let abc = ev.xor(&ab, &k.encrypt(c)).unwrap();
        assert_eq!(k.decrypt(&abc).unwrap(), a ^ b ^ c);
    }
}

#[test]
fn encrypted_hadamard_rule_matches_plaintext() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kp = che_keygen(&mut rng);
    for _ in 0..100 {
        let key = keygen(3, &mut rng).unwrap();
        let q = rand::Rng::gen_range(&mut rng, 0..3);
        let mut view = CheKeyView::new(EncryptedKey::encrypt(&key, &kp), kp.evaluator());
        view.apply_rule(&Rule::Swap(q)).unwrap();
        let got = view.into_encrypted_key().decrypt(&kp).unwrap();
        assert_eq!(got, update_key_clifford(&Gate::h(q), &key).unwrap());
    }
}

#[derive(Debug, Clone)]
enum Op {
    Xor(usize, usize),
    And(usize, usize),
}

fn op_strategy(n: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..n, 0..n).prop_map(|(a, b)| Op::Xor(a, b)),
        (0..n, 0..n).prop_map(|(a, b)| Op::And(a, b)),
    ]
}

fn program() -> impl Strategy<Value = (Vec<bool>, Vec<Op>)> {
    (1usize..=16).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(op_strategy(n), 0..=100),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homomorphic_soundness((bits, ops) in program(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kp = che_keygen(&mut rng);
        let ev = kp.evaluator();
        let mut plain = bits.clone();
        let mut enc: Vec<_> = bits.iter().map(|&b| kp.encrypt(b)).collect();
        for op in &ops {
            match *op {
                Op::Xor(a, b) => {
                    enc[a] = ev.xor(&enc[a], &enc[b]).unwrap();
                    plain[a] ^= plain[b];
                }
                Op::And(a, b) => {
                    enc[a] = ev.and(&enc[a], &enc[b]).unwrap();
                    plain[a] &= plain[b];
                }
            }
        }
        for (c, p) in enc.iter().zip(&plain) {
            prop_assert_eq!(kp.decrypt(c).unwrap(), *p);
        }
        let model = CheCostModel::default();
        let xors = ops.iter().filter(|o| matches!(o, Op::Xor(..))).count() as u64;
        let ands = ops.len() as u64 - xors;
        prop_assert_eq!(model.charge(&ev.counts()), xors * model.cost_xor + ands * model.cost_and);
    }
}
