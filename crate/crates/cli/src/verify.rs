//! Standalone verification suites.

use anyhow::Result;
use num_complex::Complex64;
use qfl_core::che::che_keygen;
use qfl_core::qhe::{
    decrypt_register, encrypt_register, homomorphic_run, CheGadget, CheKeyView, EncryptedKey,
    KeyId, DEFAULT_GADGET_LATENCY,
};
use qfl_core::qotp::{keygen, qotp_encrypt, PauliKey};
use qfl_core::qsim::{fidelity, run_circuit, Circuit, Gate, GateKind, QState, StateVector};
use qfl_core::terngrad::{deserialize, serialize, ternarize, wire_size};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Qhe,
    Qotp,
    Terngrad,
    All,
}

pub struct SuiteReport {
    pub suite: &'static str,
    pub trials: usize,
    pub failures: Vec<String>,
    pub summary: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "suite": self.suite,
            "trials": self.trials,
            "passed": self.trials - self.failures.len().min(self.trials),
            "ok": self.passed(),
            "failures": self.failures,
        })
    }
}

const QHE_TRIALS: usize = 1000;
const QHE_MAX_QUBITS: usize = 4;
const QHE_MAX_DEPTH: usize = 20;
const FIDELITY_TOL: f64 = 1e-9;

const QHE_KINDS: [GateKind; 7] = [
    GateKind::X,
    GateKind::Z,
    GateKind::H,
    GateKind::P,
    GateKind::CX,
    GateKind::CZ,
    GateKind::CCX,
];

fn random_circuit<R: Rng>(n: usize, depth: usize, rng: &mut R) -> Result<Circuit> {
    let kinds: Vec<GateKind> = QHE_KINDS.into_iter().filter(|k| k.arity() <= n).collect();
    let mut c = Circuit::new(n)?;
    for _ in 0..depth {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let mut qs: Vec<usize> = (0..n).collect();
        for i in 0..kind.arity() {
            let j = rng.gen_range(i..n);
            qs.swap(i, j);
        }
        qs.truncate(kind.arity());
        c.push(Gate::new(kind, qs, None)?)?;
    }
    Ok(c)
}

/// Dec(Eval(Enc(ψ))) against plain simulation on random Clifford+CCX
/// circuits, with key updates under CHE.
pub fn qhe_round_trips(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for trial in 0..QHE_TRIALS {
        let n = rng.gen_range(1..=QHE_MAX_QUBITS);
        let depth = rng.gen_range(1..=QHE_MAX_DEPTH);
        let circuit = random_circuit(n, depth, &mut rng)?;
        let psi = StateVector::random(n, &mut rng)?;
        let key = keygen(n, &mut rng)?;
        let kp = che_keygen(&mut rng);
        let ev = kp.evaluator();
        let ct = encrypt_register(QState::from(psi.clone()), &key, KeyId(trial as u64))?;
        let mut view = CheKeyView::new(EncryptedKey::encrypt(&key, &kp), ev.clone());
        let gadget = CheGadget::new(ev, DEFAULT_GADGET_LATENCY);
        let (out, _) = homomorphic_run(&circuit, ct, &mut view, &gadget)?;
        let final_key = view.into_encrypted_key().decrypt(&kp)?;
        let got = decrypt_register(out, &final_key)?.to_dense()?;
        let want = run_circuit(&circuit, psi)?;
        let f = fidelity(&got, &want);
        if f < 1.0 - FIDELITY_TOL {
            failures.push(format!("trial {trial}: n={n} depth={depth} fidelity={f}"));
        }
    }
    let passed = QHE_TRIALS - failures.len();
    Ok(SuiteReport {
        suite: "qhe",
        trials: QHE_TRIALS,
        summary: format!("qhe: {passed}/{QHE_TRIALS} round-trips passed (fidelity >= 1 - {FIDELITY_TOL:e})"),
        failures,
    })
}

const MIXING_STATES: usize = 20;
const MIXING_TOL: f64 = 1e-12;

/// Largest deviation of the key-averaged ciphertext density matrix from
/// I/2^n.
pub fn mixing_deviation(psi: &StateVector) -> Result<f64> {
    let n = psi.n_qubits();
    let d = 1usize << n;
    let keys = 1usize << (2 * n);
    let mut avg = vec![Complex64::new(0.0, 0.0); d * d];
    for k in 0..keys {
        let z = (0..n).map(|q| k >> q & 1 == 1).collect();
        let x = (0..n).map(|q| k >> (n + q) & 1 == 1).collect();
        let key = PauliKey::from_bits(z, x)?;
        let rho = qotp_encrypt(psi.clone(), &key)?.density_matrix();
        for (a, r) in avg.iter_mut().zip(rho) {
            *a += r / keys as f64;
        }
    }
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 / d as f64 } else { 0.0 };
            worst = worst.max((avg[i * d + j] - target).norm());
        }
    }
    Ok(worst)
}

/// Average over all keys is maximally mixed for n = 1 and n = 2.
pub fn qotp_mixing(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut trials = 0;
    for n in [1, 2] {
        for s in 0..MIXING_STATES {
            let psi = StateVector::random(n, &mut rng)?;
            let dev = mixing_deviation(&psi)?;
            worst = worst.max(dev);
            trials += 1;
            if dev > MIXING_TOL {
                failures.push(format!("n={n} state {s}: deviation {dev:e}"));
            }
        }
    }
    Ok(SuiteReport {
        suite: "qotp",
        trials,
        summary: format!(
            "qotp: {}/{trials} states maximally mixed over all keys (worst deviation {worst:e}, tolerance {MIXING_TOL:e})",
            trials - failures.len()
        ),
        failures,
    })
}

const DRAWS: usize = 100_000;

/// Per-coordinate |mean(s·t) − g| against 4σ/√M, and the wire size of every
/// draw.
pub fn ternary_unbiasedness(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<f64>> = vec![
        vec![0.9, -0.3, 0.0, 0.05, -0.9, 0.45, -0.01, 0.6],
        (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        vec![1e-3, -2e-3, 5e-4, 0.0],
    ];
    let mut failures = Vec::new();
    let mut trials = 0;
    let mut worst = 0.0f64;
    for (v, g) in vectors.iter().enumerate() {
        let mut sums = vec![0.0f64; g.len()];
        let mut scale = 0.0;
        for draw in 0..DRAWS {
            let u = ternarize(g, &mut rng)?;
            let bytes = serialize(&u);
            if bytes.len() != wire_size(u.nonzero_count()) || deserialize(&bytes)? != u {
                failures.push(format!("vector {v} draw {draw}: wire size or round trip"));
            }
            scale = f64::from(u.scale);
            for (s, x) in sums.iter_mut().zip(u.dequantize()) {
                *s += x;
            }
        }
        for (i, (&gi, &si)) in g.iter().zip(&sums).enumerate() {
            trials += 1;
            let mean = si / DRAWS as f64;
            let p = gi.abs() / scale;
            let sigma = scale * (p * (1.0 - p)).max(0.0).sqrt();
            let bound = 4.0 * sigma / (DRAWS as f64).sqrt();
            let err = (mean - gi).abs();
            // Deterministic coordinates must match to rounding.
            let ok = if sigma == 0.0 { err <= 1e-6 * scale } else { err <= bound };
            worst = worst.max(if bound > 0.0 { err / bound } else { 0.0 });
            if !ok {
                failures.push(format!("vector {v} coordinate {i}: |mean - g| = {err:e}, bound {bound:e}"));
            }
        }
    }
    Ok(SuiteReport {
        suite: "terngrad",
        trials,
        summary: format!(
            "terngrad: {}/{trials} coordinates within 4 sigma/sqrt(M) at M = {DRAWS} (worst ratio {worst:.3}); wire size 17 + 4*count on every draw",
            trials - failures.len()
        ),
        failures,
    })
}

pub fn run(suite: Suite, seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(match suite {
        Suite::Qhe => vec![qhe_round_trips(seed)?],
        Suite::Qotp => vec![qotp_mixing(seed)?],
        Suite::Terngrad => vec![ternary_unbiasedness(seed)?],
        Suite::All => vec![
            qhe_round_trips(seed)?,
            qotp_mixing(seed)?,
            ternary_unbiasedness(seed)?,
        ],
    })
}
