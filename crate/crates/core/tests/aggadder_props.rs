use qfl_core::aggadder::{
    aggregate_encrypted, aggregation_schedule, build_adder, classical_add_oracle, decode_bits,
    operand_bits, report_comparison, verify_exhaustive, GateCostModel, GateCounts,
};
use qfl_core::che::che_keygen;
use qfl_core::qhe::{
    decrypt_register, encrypt_register, CheGadget, CheKeyView, EncryptedKey, KeyId,
    ScheduleGadget, ScheduledKeyView,
};
use qfl_core::qotp::{keygen, PauliKey};
use qfl_core::qsim::{Circuit, QState, StateVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exhaustive_correctness_small_widths() {
    for w in 2..=4 {
        for cin in [false, true] {
            let adder = build_adder(w, cin).unwrap();
            let check = verify_exhaustive(&adder).unwrap();
            let expected_cases = (1usize << (2 * w)) * if cin { 2 } else { 1 };
            assert_eq!(check.cases, expected_cases);
            assert!(check.passed(), "w={w} cin={cin}: {:?}", check.failures);
        }
    }
}

#[test]
fn dense_simulation_agrees_with_fast_path() {
    let adder = build_adder(3, true).unwrap();
    for a in -4..4i64 {
        for b in -4..4i64 {
            let idx = adder.input_index(a, b, true).unwrap();
            let s = StateVector::basis(adder.n_qubits(), idx as usize).unwrap();
            let out = qfl_core::qsim::run_circuit(&adder.circuit, s).unwrap();
            let hit = out
                .amplitudes()
                .iter()
                .position(|x| (x.norm() - 1.0).abs() < 1e-12)
                .unwrap() as u64;
            assert_eq!(decode_bits(hit, 3), classical_add_oracle(a, b, true, 3));
        }
    }
}

#[test]
fn adding_zero_is_identity() {
    let adder = build_adder(4, false).unwrap();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    for b in -8..8 {
        let mut s = QState::basis(adder.n_qubits(), adder.input_index(0, b, false).unwrap()).unwrap();
        for g in adder.circuit.gates() {
            s.apply(g, &mut rng).unwrap();
        }
        assert_eq!(s.basis_index(), Some(adder.input_index(0, b, false).unwrap()));
    }
}

#[test]
fn counts_match_recount_and_gate_set() {
    for w in 2..=8 {
        for cin in [false, true] {
            let adder = build_adder(w, cin).unwrap();
            assert_eq!(adder.counts, GateCounts::recount(&adder.circuit));
            assert!(adder
                .circuit
                .gates()
                .iter()
                .all(|g| matches!(g.kind(), qfl_core::qsim::GateKind::CX | qfl_core::qsim::GateKind::CCX)));
        }
    }
}

#[test]
fn text_export_round_trips() {
    let adder = build_adder(4, true).unwrap();
    assert_eq!(Circuit::parse(&adder.circuit.to_text()).unwrap(), adder.circuit);
}

#[test]
fn reference_rows_costed_by_model() {
    let adder = build_adder(4, true).unwrap();
    let report = report_comparison(&GateCostModel::default(), &adder);
    let qa2 = report.rows.iter().find(|r| r.scheme == "QA2").unwrap();
    assert_eq!(qa2.cost, 50.0);
    let qa1 = report.rows.iter().find(|r| r.scheme == "QA1").unwrap();
    assert_eq!(qa1.cost, 50.0);
    assert!(report.notes.iter().any(|n| n.starts_with("QA1")));
    assert!(report.to_csv().starts_with("scheme,qubits,cx,ccx,cost,latency\n"));
}

fn plain_register(t: i64, w: usize) -> QState {
    QState::basis(w, operand_bits(t, w).unwrap()).unwrap()
}

/// Encrypted sum through the CHE workflow, every operand under its own key.
fn che_sum(values: &[i64], w: usize, seed: u64) -> i64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adder = build_adder(w, true).unwrap();
    let kp = che_keygen(&mut rng);
    let acc_key = keygen(w, &mut rng).unwrap();
    let acc = encrypt_register(plain_register(0, w), &acc_key, KeyId(0)).unwrap();
    let acc_view = CheKeyView::new(EncryptedKey::encrypt(&acc_key, &kp), kp.evaluator());
    let operands = values
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let k = keygen(w, &mut rng).unwrap();
            let ct = encrypt_register(plain_register(t, w), &k, KeyId(j as u64 + 1)).unwrap();
            (ct, CheKeyView::new(EncryptedKey::encrypt(&k, &kp), kp.evaluator()))
        })
        .collect();
    let gadget = CheGadget::new(kp.evaluator(), 25);
    let out = aggregate_encrypted(&adder, acc, acc_view, operands, &gadget, &mut rng).unwrap();
    let final_key = out.view.into_encrypted_key().decrypt(&kp).unwrap();
    let plain = decrypt_register(out.acc, &final_key).unwrap();
    decode_bits(plain.basis_index().unwrap(), w)
}

/// Encrypted sum through the shared-key workflow.
fn scheduled_sum(values: &[i64], w: usize, seed: u64) -> i64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adder = build_adder(w, true).unwrap();
    let shared = keygen(w, &mut rng).unwrap();
    let acc_key = PauliKey::zeros(w);
    let keys = vec![shared.clone(); values.len()];
    let (bits, final_key) = aggregation_schedule(&adder, &acc_key, &keys).unwrap();
    let gadget = ScheduleGadget::new(bits, 25);
    let acc = encrypt_register(plain_register(0, w), &acc_key, KeyId(0)).unwrap();
    let operands = values
        .iter()
        .map(|&t| {
            let ct = encrypt_register(plain_register(t, w), &shared, KeyId(1)).unwrap();
            (ct, ScheduledKeyView::new(w))
        })
        .collect();
    let out = aggregate_encrypted(
        &adder,
        acc,
        ScheduledKeyView::new(w),
        operands,
        &gadget,
        &mut rng,
    )
    .unwrap();
    gadget.finish().unwrap();
    let plain = decrypt_register(out.acc, &final_key).unwrap();
    decode_bits(plain.basis_index().unwrap(), w)
}

#[test]
fn five_plus_ones() {
    assert_eq!(che_sum(&[1; 5], 4, 1), 5);
    assert_eq!(scheduled_sum(&[1; 5], 4, 1), 5);
}

#[test]
fn cancellation_in_any_order() {
    let mut vals = vec![1, -1, 0];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s in 0..6 {
        vals.shuffle(&mut rng);
        assert_eq!(che_sum(&vals, 4, s), 0);
        assert_eq!(scheduled_sum(&vals, 4, s), 0);
    }
}

#[test]
fn random_ternary_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let vals: Vec<i64> = (0..8).map(|_| rng.gen_range(-1..=1)).collect();
        let expected: i64 = vals.iter().sum();
        assert_eq!(scheduled_sum(&vals, 5, trial), expected);
        if trial % 4 == 0 {
            assert_eq!(che_sum(&vals, 5, trial), expected);
        }
    }
}

#[test]
fn encrypted_equals_plaintext_and_order_insensitive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let w = 5;
        let n = rng.gen_range(1..=6);
        let vals: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..=3)).collect();
        let expected = vals
            .iter()
            .fold(0, |acc, &v| classical_add_oracle(acc, v, false, w));
        assert_eq!(che_sum(&vals, w, trial), expected);
        let mut rev = vals.clone();
        rev.reverse();
        assert_eq!(scheduled_sum(&rev, w, trial), expected);
    }
}

#[test]
fn scratch_qubits_clean_after_every_pass() {
    // Aggregation extracts the accumulator only if every other qubit is |0⟩
    // exactly, so a successful run is the no-garbage check. Run dense too.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = 3;
    let adder = build_adder(w, true).unwrap();
    let shared = keygen(w, &mut rng).unwrap();
    let (bits, final_key) =
        aggregation_schedule(&adder, &PauliKey::zeros(w), &[shared.clone(), shared.clone()]).unwrap();
    let gadget = ScheduleGadget::new(bits, 25);
    let acc = encrypt_register(
        QState::Dense(plain_register(2, w).to_dense().unwrap()),
        &PauliKey::zeros(w),
        KeyId(0),
    )
    .unwrap();
    let ops = [1, -3]
        .iter()
        .map(|&t| {
            let ct = encrypt_register(
                QState::Dense(plain_register(t, w).to_dense().unwrap()),
                &shared,
                KeyId(1),
            )
            .unwrap();
            (ct, ScheduledKeyView::new(w))
        })
        .collect();
    let out = aggregate_encrypted(&adder, acc, ScheduledKeyView::new(w), ops, &gadget, &mut rng)
        .unwrap();
    let plain = decrypt_register(out.acc, &final_key).unwrap();
    assert!(matches!(plain, QState::Dense(_)));
    assert_eq!(decode_bits(plain.basis_index().unwrap(), w), 0);
}
