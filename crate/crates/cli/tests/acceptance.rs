//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qfl_core::aggadder::{build_adder, AdderCircuit};
use qfl_core::che::che_keygen;
use qfl_core::config::{FedConfig, Quantization, Workflow};
use qfl_core::fedsim::{run_experiment, ExperimentResult, Federation, Step};
use qfl_core::qhe::{
    decrypt_register, encrypt_register, homomorphic_run, CheGadget, CheKeyView, EncryptedKey, KeyId,
    DEFAULT_GADGET_LATENCY,
};
use qfl_core::qnn::TaskKind;
use qfl_core::qotp::{keygen, qotp_encrypt, PauliKey};
use qfl_core::qsim::{QState, StateVector};
use qfl_core::terngrad::{deserialize, serialize, ternarize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

fn qfl(args: &[&str]) -> (Option<i32>, String, String, Duration) {
    let started = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_qfl"))
        .args(args)
        .output()
        .expect("qfl runs");
    let elapsed = started.elapsed();
    (
        o.status.code(),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
        elapsed,
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn run(cfg: &FedConfig) -> ExperimentResult {
    run_experiment(cfg).unwrap_or_else(|e| panic!("{} / {}: {e}", cfg.task, cfg.workflow))
}

fn adder_counts() -> Verdict {
    let (code, stdout, stderr, elapsed) = qfl(&["bench-adder", "--w", "4"]);
    let row: Vec<String> = stdout
        .lines()
        .find(|l| l.starts_with("Ours,"))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .unwrap_or_default();
    if row.len() != 6 {
        return Verdict::new(false, format!("no Ours row (exit {code:?}): {stderr}"));
    }
    let num = |i: usize| row[i].parse::<f64>().unwrap_or(f64::NAN);
    let (qubits, cx, ccx, cost, latency) = (num(1), num(2), num(3), num(4), num(5));
    let pass = qubits == 11.0
        && cx == 10.0
        && ccx == 4.0
        && cost == 30.0
        && (latency - 28.0).abs() <= 0.15 * 28.0
        && elapsed < Duration::from_secs(1);
    let discrepancies: Vec<&str> = stderr.lines().filter(|l| l.starts_with("discrepancy")).collect();
    Verdict::new(
        pass,
        format!(
            "qubits={qubits} cx={cx} ccx={ccx} cost={cost} latency={latency} (want 11/10/4, 30, 28±15%), \
             exit {code:?}, {elapsed:.2?}; {}",
            discrepancies.join("; ")
        ),
    )
}

/// Two's-complement value of the low `w` bits.
fn signed(v: i64, w: usize) -> i64 {
    let m = 1i64 << w;
    let r = v.rem_euclid(m);
    if r >= m / 2 {
        r - m
    } else {
        r
    }
}

fn bits_of(v: i64, w: usize) -> u64 {
    (v.rem_euclid(1 << w)) as u64
}

/// Expected output basis index: accumulator replaced by the wrapped sum,
/// every other qubit unchanged.
fn expected_output(adder: &AdderCircuit, a: i64, b: i64, cin: bool) -> u64 {
    let w = adder.width;
    let mut idx = 0u64;
    let sum = bits_of(signed(a + b + cin as i64, w), w);
    for (i, &q) in adder.registers.accumulator.iter().enumerate() {
        idx |= (sum >> i & 1) << q;
    }
    for (i, &q) in adder.registers.operand.iter().enumerate() {
        idx |= (bits_of(a, w) >> i & 1) << q;
    }
    if let (true, Some(q)) = (cin, adder.registers.carry_in) {
        idx |= 1 << q;
    }
    idx
}

fn adder_correctness() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = 0;
    let mut failures = Vec::new();
    for w in 2..=4usize {
        let half = 1i64 << (w - 1);
        for with_cin in [false, true] {
            let adder = build_adder(w, with_cin).unwrap();
            for a in -half..half {
                for b in -half..half {
                    for cin in [false, true] {
                        if cin && !with_cin {
                            continue;
                        }
                        cases += 1;
                        let mut s = QState::basis(adder.n_qubits(), adder.input_index(a, b, cin).unwrap()).unwrap();
                        for g in adder.circuit.gates() {
                            s.apply(g, &mut rng).unwrap();
                        }
                        if s.basis_index() != Some(expected_output(&adder, a, b, cin)) {
                            failures.push(format!("w={w} a={a} b={b} cin={cin}"));
                        }
                    }
                }
            }
        }
    }
    let mut encrypted_failures = 0;
    for draw in 0..100u64 {
        let w = rng.gen_range(2..=4usize);
        let with_cin = rng.gen_bool(0.5);
        let cin = with_cin && rng.gen_bool(0.5);
        let half = 1i64 << (w - 1);
        let (a, b) = (rng.gen_range(-half..half), rng.gen_range(-half..half));
        let adder = build_adder(w, with_cin).unwrap();
        let n = adder.n_qubits();
        let key = keygen(n, &mut rng).unwrap();
        let kp = che_keygen(&mut rng);
        let ev = kp.evaluator();
        let plain = QState::basis(n, adder.input_index(a, b, cin).unwrap()).unwrap();
        let ct = encrypt_register(plain, &key, KeyId(draw)).unwrap();
        let mut view = CheKeyView::new(EncryptedKey::encrypt(&key, &kp), ev.clone());
        let gadget = CheGadget::new(ev, DEFAULT_GADGET_LATENCY);
        let (out, _) = homomorphic_run(&adder.circuit, ct, &mut view, &gadget).unwrap();
        let final_key = view.into_encrypted_key().decrypt(&kp).unwrap();
        let got = decrypt_register(out, &final_key).unwrap();
        if got.basis_index() != Some(expected_output(&adder, a, b, cin)) {
            encrypted_failures += 1;
            failures.push(format!("encrypted draw {draw}: w={w} a={a} b={b} cin={cin}"));
        }
    }
    let elapsed = started.elapsed();
    Verdict::new(
        failures.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "{} exhaustive cases over W=2,3,4, {encrypted_failures}/100 encrypted draws wrong, {} failures total, {elapsed:.2?}{}",
            cases,
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn qhe_round_trip() -> Verdict {
    let (code, stdout, stderr, elapsed) = qfl(&["verify", "--suite", "qhe", "--seed", "7"]);
    let pass = code == Some(0) && stdout.contains("1000/1000") && elapsed < Duration::from_secs(120);
    Verdict::new(pass, format!("{} (exit {code:?}, {elapsed:.2?}) {}", stdout.trim(), stderr.trim()))
}

/// Z^z X^x applied amplitude by amplitude.
fn pauli_pad(psi: &[Complex64], zmask: usize, xmask: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    for (i, &amp) in psi.iter().enumerate() {
        let j = i ^ xmask;
        let sign = if (j & zmask).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        out[j] = amp * sign;
    }
    out
}

fn qotp_hiding() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    let mut states = 0;
    for n in [1usize, 2] {
        let d = 1 << n;
        for _ in 0..20 {
            states += 1;
            let psi = StateVector::random(n, &mut rng).unwrap();
            let mut avg = vec![Complex64::new(0.0, 0.0); d * d];
            let n_keys = d * d;
            for zmask in 0..d {
                for xmask in 0..d {
                    let key = PauliKey::from_bits(
                        (0..n).map(|q| zmask >> q & 1 == 1).collect(),
                        (0..n).map(|q| xmask >> q & 1 == 1).collect(),
                    )
                    .unwrap();
                    let want = pauli_pad(psi.amplitudes(), zmask, xmask);
                    let got = qotp_encrypt(psi.clone(), &key).unwrap();
                    let reference = StateVector::from_amplitudes(want.clone()).unwrap();
                    if !got.approx_eq_up_to_phase(&reference, 1e-12) {
                        mismatches += 1;
                    }
                    for i in 0..d {
                        for j in 0..d {
                            avg[i * d + j] += want[i] * want[j].conj() / n_keys as f64;
                        }
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 / d as f64 } else { 0.0 };
                    worst = worst.max((avg[i * d + j] - target).norm());
                }
            }
        }
    }
    Verdict::new(
        worst <= 1e-12 && mismatches == 0,
        format!("{states} states, worst deviation from I/d {worst:e} (tol 1e-12), {mismatches} pad mismatches"),
    )
}

fn ternary_unbiasedness() -> Verdict {
    const M: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vectors = [
        vec![0.7, -0.2, 0.0, 0.35, -0.7, 0.01],
        (0..12).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>(),
    ];
    let mut coords = 0;
    let mut outside = 0;
    let mut worst = 0.0f64;
    let mut bad_wire = 0;
    for g in &vectors {
        let mut sums = vec![0.0f64; g.len()];
        let mut scale = 0.0f64;
        for _ in 0..M {
            let u = ternarize(g, &mut rng).unwrap();
            let count = u.digits().iter().filter(|&&t| t != 0).count();
            let bytes = serialize(&u);
            if bytes.len() != 17 + 4 * count || deserialize(&bytes).unwrap() != u {
                bad_wire += 1;
            }
            scale = f64::from(u.scale);
            for (s, t) in sums.iter_mut().zip(u.digits()) {
                *s += scale * f64::from(t);
            }
        }
        for (&gi, &si) in g.iter().zip(&sums) {
            coords += 1;
            let p = gi.abs() / scale;
            let sigma = scale * (p * (1.0 - p)).sqrt();
            let bound = 4.0 * sigma / (M as f64).sqrt();
            let err = (si / M as f64 - gi).abs();
            let ok = if sigma == 0.0 { err <= 1e-6 * scale } else { err <= bound };
            if !ok {
                outside += 1;
            }
            if bound > 0.0 {
                worst = worst.max(err / bound);
            }
        }
    }
    Verdict::new(
        outside == 0 && bad_wire == 0,
        format!(
            "{coords} coordinates at M={M}: {outside} outside 4σ/√M (worst err/bound {worst:.3}); \
             {bad_wire} draws with wire size != 17+4·count or bad round trip"
        ),
    )
}

fn quantized_vs_float() -> Verdict {
    let started = Instant::now();
    let mut gaps = Vec::new();
    let mut lines = Vec::new();
    for seed in 1..=3 {
        let tern = run(&FedConfig { seed, ..FedConfig::default() });
        let dense = run(&FedConfig {
            seed,
            workflow: Workflow::Baseline,
            quantization: Quantization::Dense,
            ..FedConfig::default()
        });
        let gap = (tern.final_accuracy() - dense.final_accuracy()).abs();
        gaps.push(gap);
        lines.push(format!(
            "seed {seed}: ternary {:.3} dense {:.3}",
            tern.final_accuracy(),
            dense.final_accuracy()
        ));
    }
    let elapsed = started.elapsed();
    let gap = mean(&gaps);
    Verdict::new(
        gap <= 0.03 && elapsed < Duration::from_secs(600),
        format!("mean |gap| {gap:.4} (max 0.03); {}; {elapsed:.2?}", lines.join(", ")),
    )
}

fn workflow_semantics() -> Verdict {
    let mut rounds = 0;
    let mut aggregate_mismatches = 0;
    let mut not_reduced = 0;
    let mut empty_uploads = 0;
    let mut client_uploads = 0;
    let mut server_che_crypto = 0.0f64;
    let mut server_che_base = f64::INFINITY;
    let mut che_share_base = Vec::new();
    for seed in 1..=3 {
        let cfg = FedConfig { seed, rounds: 5, ..FedConfig::default() };
        let mut base = Federation::new(&FedConfig { workflow: Workflow::Baseline, ..cfg.clone() }).unwrap();
        let mut crypto = Federation::new(&cfg).unwrap();
        for _ in 0..cfg.rounds {
            rounds += 1;
            let ob = base.step().unwrap();
            let oc = crypto.step().unwrap();
            if ob.aggregate != oc.aggregate || base.params() != crypto.params() {
                aggregate_mismatches += 1;
            }
            for (j, contribution) in oc.contributions.iter().enumerate() {
                client_uploads += 1;
                let carried = contribution.iter().any(|&d| d != 0);
                if !carried {
                    empty_uploads += 1;
                }
                let reduced = oc.metrics.bytes_up[j] < ob.metrics.bytes_up[j];
                let equal_and_empty = !carried && oc.metrics.bytes_up[j] == ob.metrics.bytes_up[j];
                if !(reduced || equal_and_empty) {
                    not_reduced += 1;
                }
            }
            server_che_crypto = server_che_crypto.max(oc.metrics.server_che);
            server_che_base = server_che_base.min(ob.metrics.server_che);
            che_share_base.push(ob.metrics.latency_of(Step::CheCompute) / ob.metrics.total_latency());
        }
    }
    let pass = aggregate_mismatches == 0 && not_reduced == 0 && server_che_crypto == 0.0 && server_che_base > 0.0;
    Verdict::new(
        pass,
        format!(
            "{rounds} rounds: {aggregate_mismatches} aggregate mismatches; {not_reduced}/{client_uploads} client uploads \
             not smaller ({empty_uploads} carried no registers); server CHE latency CryptoQFL max {server_che_crypto}, \
             baseline min {server_che_base}; baseline CHE share of latency {:.2}",
            mean(&che_share_base)
        ),
    )
}

fn ternary_compression() -> Verdict {
    let cfg = FedConfig::default();
    let mut fed = Federation::new(&cfg).unwrap();
    let p = fed.ansatz().param_count();
    let dense_bytes = 4 * p;
    let mut eligible = 0;
    let mut below = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..cfg.rounds {
        let out = fed.step().unwrap();
        for c in &out.contributions {
            let count = c.iter().filter(|&&d| d != 0).count();
            if count * 2 > p {
                continue;
            }
            eligible += 1;
            let ratio = dense_bytes as f64 / (17 + 4 * count) as f64;
            worst = worst.min(ratio);
            if ratio < 8.0 {
                below += 1;
            }
        }
    }
    // Best case at 50% sparsity for any parameter count.
    let ceiling = (1..=1_000_000usize)
        .step_by(997)
        .map(|p| 4.0 * p as f64 / (17 + 4 * (p / 2)) as f64)
        .fold(0.0, f64::max);
    Verdict::new(
        eligible > 0 && below == 0,
        format!(
            "P={p}, dense f32 {dense_bytes} B: {below}/{eligible} uploads with sparsity >= 50% below 8x \
             (worst {worst:.2}x, best possible {:.2}x at zero entries); ratio at 50% sparsity never exceeds {ceiling:.2}x for any P",
            dense_bytes as f64 / 17.0
        ),
    )
}

/// Moving average over every full window.
fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    xs.windows(window).map(mean).collect()
}

fn convergence() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for task in [TaskKind::Classify, TaskKind::StatePrep, TaskKind::Qco] {
        let cfg = FedConfig { task, ..FedConfig::default() };
        let fed = run(&cfg);
        let central = run(&FedConfig { workflow: Workflow::Centralized, ..cfg.clone() });
        let s = smooth(&fed.loss_curve(), 5);
        let rises = s.windows(2).filter(|w| w[1] > w[0]).count();
        let rel = (fed.final_loss() - central.final_loss()).abs() / central.final_loss();
        pass &= rises == 0;
        if task == TaskKind::Classify {
            pass &= rel <= 0.10;
            parts.push(format!(
                "{task}: {rises} rises, final {:.4} vs centralized {:.4} ({:.1}%, max 10%), centralized accuracy {:.3}",
                fed.final_loss(),
                central.final_loss(),
                100.0 * rel,
                central.final_accuracy()
            ));
        } else {
            parts.push(format!(
                "{task}: {rises} rises, final {:.4} vs centralized {:.4} (info)",
                fed.final_loss(),
                central.final_loss()
            ));
        }
    }
    Verdict::new(pass, parts.join("; "))
}

fn scalability() -> Verdict {
    let acc = |n_clients: usize| -> Vec<f64> {
        (1..=3)
            .map(|seed| run(&FedConfig { seed, n_clients, ..FedConfig::default() }).final_accuracy())
            .collect()
    };
    let (a5, a20) = (acc(5), acc(20));
    let (m5, m20) = (mean(&a5), mean(&a20));
    Verdict::new(
        m20 >= m5 - 0.01,
        format!("25 samples per client: mean accuracy 5 clients {m5:.4} {a5:?}, 20 clients {m20:.4} {a20:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("1 adder counts", adder_counts),
        ("2 adder correctness", adder_correctness),
        ("3 qhe round trip", qhe_round_trip),
        ("4 qotp hiding", qotp_hiding),
        ("5 ternary unbiasedness", ternary_unbiasedness),
        ("6 quantized vs float", quantized_vs_float),
        ("7a workflow semantics", workflow_semantics),
        ("7b ternary vs f32 >= 8x", ternary_compression),
        ("8 convergence", convergence),
        ("9 scalability", scalability),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let started = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {name}: {} ({:.2?})", verdict.detail, started.elapsed());
        if !verdict.pass {
            failed.push(name);
        }
    }
    println!("acceptance: {} passed, {} failed {:?}", criteria.len() - failed.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
