//! Homomorphic evaluation on QOTP-encrypted registers.
//!
//! Clifford gates act directly on the ciphertext and transform the key by
//! the linear rules in [`Rule`]. A Toffoli is applied directly too and then
//! followed by a key-conditioned Clifford correction
//! `CX(c2→t)^{x_c1} · CX(c1→t)^{x_c2} · CZ(c1,c2)^{z_t}`, which the evaluator
//! cannot perform itself because it never sees key bits. It delegates each
//! conditioned gate to a [`GadgetOracle`].
//!
//! Nothing on the evaluation path takes a [`PauliKey`]: the server works
//! with an [`EncryptedKeyView`] and a gadget, and clients replay the rule
//! trace in plaintext.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::che::{CheBit, CheError, CheEvaluator, CheKeypair};
use crate::qotp::{decrypt_qstate, encrypt_qstate, PauliKey, QotpError};
use crate::qsim::{Circuit, Gate, GateKind, QState, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QheError {
    #[error("{0} is not supported by homomorphic evaluation")]
    Unsupported(GateKind),
    #[error("key view covers {view} qubits, ciphertext has {state}")]
    DimensionMismatch { view: usize, state: usize },
    #[error("gadget was given a condition it cannot resolve")]
    ForeignCondition,
    #[error("correction schedule exhausted at request {0}")]
    ScheduleExhausted(usize),
    #[error("correction schedule has {unused} unused entries")]
    ScheduleUnused { unused: usize },
    #[error("key views come from different CHE backends")]
    MixedBackends,
    #[error(transparent)]
    Che(#[from] CheError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Qotp(#[from] QotpError),
}

/// Opaque label for the key a ciphertext is encrypted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub u64);

/// A register known to be QOTP-encrypted. It carries a key label, never a key.
#[derive(Debug, Clone, PartialEq)]
pub struct QCiphertext {
    pub state: QState,
    pub key_id: KeyId,
}

impl QCiphertext {
    pub fn n_qubits(&self) -> usize {
        self.state.n_qubits()
    }
}

/// Client side: pad a register and label it.
pub fn encrypt_register(
    mut state: QState,
    key: &PauliKey,
    key_id: KeyId,
) -> Result<QCiphertext, QheError> {
    encrypt_qstate(&mut state, key)?;
    Ok(QCiphertext { state, key_id })
}

/// Client side: strip the pad with the (updated) key.
pub fn decrypt_register(ct: QCiphertext, key: &PauliKey) -> Result<QState, QheError> {
    let mut state = ct.state;
    decrypt_qstate(&mut state, key)?;
    Ok(state)
}

/// Names a single key bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyBit {
    Z(usize),
    X(usize),
}

/// Key transformation attached to one gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// X and Z leave the key unchanged.
    Identity,
    /// H: swap z and x.
    Swap(usize),
    /// P: z ^= x.
    PhaseXor(usize),
    /// CX: x_t ^= x_c, z_c ^= z_t.
    Cnot { c: usize, t: usize },
    /// CZ: z_a ^= x_b, z_b ^= x_a.
    Cz { a: usize, b: usize },
    /// CCX: x_t ^= x_c1·x_c2, z_c1 ^= z_t·x_c2, z_c2 ^= z_t·x_c1.
    Toffoli { c1: usize, c2: usize, t: usize },
    /// RESET: the qubit leaves in |0⟩ under the zero key.
    Reset(usize),
}

impl Rule {
    pub fn for_gate(gate: &Gate) -> Result<Rule, QheError> {
        let t = gate.targets();
        Ok(match gate.kind() {
            GateKind::X | GateKind::Z => Rule::Identity,
            GateKind::H => Rule::Swap(t[0]),
            GateKind::P => Rule::PhaseXor(t[0]),
            GateKind::CX => Rule::Cnot { c: t[0], t: t[1] },
            GateKind::CZ => Rule::Cz { a: t[0], b: t[1] },
            GateKind::CCX => Rule::Toffoli {
                c1: t[0],
                c2: t[1],
                t: t[2],
            },
            GateKind::Reset => Rule::Reset(t[0]),
            other => return Err(QheError::Unsupported(other)),
        })
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Rule::Identity => vec![],
            Rule::Swap(q) | Rule::PhaseXor(q) | Rule::Reset(q) => vec![q],
            Rule::Cnot { c, t } => vec![c, t],
            Rule::Cz { a, b } => vec![a, b],
            Rule::Toffoli { c1, c2, t } => vec![c1, c2, t],
        }
    }

    pub fn is_clifford(&self) -> bool {
        !matches!(self, Rule::Toffoli { .. } | Rule::Reset(_))
    }

    /// Plaintext application.
    pub fn apply(&self, key: &mut PauliKey) {
        match *self {
            Rule::Identity => {}
            Rule::Swap(q) => {
                let (z, x) = (key.z(q), key.x(q));
                key.set(q, x, z);
            }
            Rule::PhaseXor(q) => key.set_z(q, key.z(q) ^ key.x(q)),
            Rule::Cnot { c, t } => {
                key.set_x(t, key.x(t) ^ key.x(c));
                key.set_z(c, key.z(c) ^ key.z(t));
            }
            Rule::Cz { a, b } => {
                let (xa, xb) = (key.x(a), key.x(b));
                key.set_z(a, key.z(a) ^ xb);
                key.set_z(b, key.z(b) ^ xa);
            }
            Rule::Toffoli { c1, c2, t } => {
                let (x1, x2, zt) = (key.x(c1), key.x(c2), key.z(t));
                key.set_x(t, key.x(t) ^ (x1 & x2));
                key.set_z(c1, key.z(c1) ^ (zt & x2));
                key.set_z(c2, key.z(c2) ^ (zt & x1));
            }
            Rule::Reset(q) => key.set(q, false, false),
        }
    }
}

fn check_key_width(gate: &Gate, key: &PauliKey) -> Result<(), QheError> {
    gate.check_width(key.n_qubits())?;
    Ok(())
}

/// Key update for a Clifford gate. T and rotations are rejected, as are the
/// non-Clifford kinds handled by [`update_key`].
pub fn update_key_clifford(gate: &Gate, key: &PauliKey) -> Result<PauliKey, QheError> {
    if !gate.kind().is_clifford() {
        return Err(QheError::Unsupported(gate.kind()));
    }
    update_key(gate, key)
}

/// Key update for any gate the evaluator supports, including CCX and RESET.
pub fn update_key(gate: &Gate, key: &PauliKey) -> Result<PauliKey, QheError> {
    check_key_width(gate, key)?;
    let rule = Rule::for_gate(gate)?;
    let mut out = key.clone();
    rule.apply(&mut out);
    Ok(out)
}

/// Gates applied and rules triggered by a homomorphic run, in order. Holds no
/// key material.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleTrace {
    pub steps: Vec<(Gate, Rule)>,
}

impl RuleTrace {
    pub fn push(&mut self, gate: Gate, rule: Rule) {
        self.steps.push((gate, rule));
    }

    pub fn extend(&mut self, other: RuleTrace) {
        self.steps.extend(other.steps);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// A plaintext key history: start key, each gate with its rule, final key.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyTrace {
    pub initial: PauliKey,
    pub updates: Vec<(Gate, Rule)>,
    pub final_key: PauliKey,
}

impl KeyTrace {
    /// Client side: replay a rule trace from a known starting key.
    pub fn replay(initial: PauliKey, rules: &RuleTrace) -> Result<KeyTrace, QheError> {
        let mut key = initial.clone();
        for (gate, rule) in &rules.steps {
            check_key_width(gate, &key)?;
            rule.apply(&mut key);
        }
        Ok(KeyTrace {
            initial,
            updates: rules.steps.clone(),
            final_key: key,
        })
    }

    /// Client side: derive the trace of a circuit without running it.
    pub fn for_circuit(initial: PauliKey, circuit: &Circuit) -> Result<KeyTrace, QheError> {
        let mut rules = RuleTrace::default();
        for g in circuit.gates() {
            rules.push(g.clone(), Rule::for_gate(g)?);
        }
        KeyTrace::replay(initial, &rules)
    }

    /// Recomputes the final key from the initial key.
    pub fn recompute(&self) -> PauliKey {
        let mut key = self.initial.clone();
        for (_, rule) in &self.updates {
            rule.apply(&mut key);
        }
        key
    }

    pub fn is_consistent(&self) -> bool {
        self.recompute() == self.final_key
    }

    /// One line per gate, `GATE targets | z:hex x:hex`, showing the key after
    /// that gate.
    pub fn dump(&self) -> String {
        let mut key = self.initial.clone();
        let mut out = String::new();
        for (gate, rule) in &self.updates {
            rule.apply(&mut key);
            let (z, x) = key.to_hex();
            let targets: Vec<String> = gate.targets().iter().map(|q| q.to_string()).collect();
            let _ = writeln!(out, "{} {} | z:{z} x:{x}", gate.kind(), targets.join(","));
        }
        out
    }
}

/// What a gadget is asked to branch on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    /// A CHE-encrypted key bit.
    Encrypted(CheBit),
    /// The n-th entry of a schedule the clients computed in advance.
    Scheduled(usize),
}

/// Server-side handle on the current key of a ciphertext.
pub trait EncryptedKeyView {
    fn n_qubits(&self) -> usize;
    /// Condition for a key bit in its current (pre-update) value.
    fn condition(&mut self, bit: KeyBit) -> Result<Condition, QheError>;
    /// Advance the view past one gate.
    fn apply_rule(&mut self, rule: &Rule) -> Result<(), QheError>;
}

/// Uploaded key material: every z and x bit under CHE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedKey {
    pub z: Vec<CheBit>,
    pub x: Vec<CheBit>,
}

impl EncryptedKey {
    /// Client side.
    pub fn encrypt(key: &PauliKey, keypair: &CheKeypair) -> EncryptedKey {
        EncryptedKey {
            z: key.z_bits().iter().map(|&b| keypair.encrypt(b)).collect(),
            x: key.x_bits().iter().map(|&b| keypair.encrypt(b)).collect(),
        }
    }

    /// Client side.
    pub fn decrypt(&self, keypair: &CheKeypair) -> Result<PauliKey, QheError> {
        let z = self
            .z
            .iter()
            .map(|c| keypair.decrypt(c))
            .collect::<Result<Vec<_>, _>>()?;
        let x = self
            .x
            .iter()
            .map(|c| keypair.decrypt(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PauliKey::from_bits(z, x)?)
    }

    pub fn n_qubits(&self) -> usize {
        self.z.len()
    }

    pub fn wire_bytes(&self) -> usize {
        (self.z.len() + self.x.len()) * CheBit::WIRE_BYTES
    }
}

/// Key view for the CHE workflow: bits stay encrypted and every rule is
/// evaluated homomorphically.
#[derive(Debug, Clone)]
pub struct CheKeyView {
    key: EncryptedKey,
    ev: CheEvaluator,
}

impl CheKeyView {
    pub fn new(key: EncryptedKey, ev: CheEvaluator) -> Self {
        CheKeyView { key, ev }
    }

    /// Fresh qubits prepared by the server in |0⟩ carry the zero key.
    pub fn zeros(n: usize, ev: CheEvaluator) -> Self {
        let key = EncryptedKey {
            z: (0..n).map(|_| ev.encrypt_const(false)).collect(),
            x: (0..n).map(|_| ev.encrypt_const(false)).collect(),
        };
        CheKeyView { key, ev }
    }

    pub fn append(&mut self, high: CheKeyView) -> Result<(), QheError> {
        if high.ev.backend_id() != self.ev.backend_id() {
            return Err(QheError::MixedBackends);
        }
        self.key.z.extend(high.key.z);
        self.key.x.extend(high.key.x);
        Ok(())
    }

    pub fn truncate(&mut self, n: usize) {
        self.key.z.truncate(n);
        self.key.x.truncate(n);
    }

    pub fn into_encrypted_key(self) -> EncryptedKey {
        self.key
    }

    pub fn evaluator(&self) -> &CheEvaluator {
        &self.ev
    }

    fn check(&self, q: usize) -> Result<(), QheError> {
        if q >= self.key.z.len() {
            return Err(SimError::QubitOutOfRange {
                qubit: q,
                n_qubits: self.key.z.len(),
            }
            .into());
        }
        Ok(())
    }
}

impl EncryptedKeyView for CheKeyView {
    fn n_qubits(&self) -> usize {
        self.key.z.len()
    }

    fn condition(&mut self, bit: KeyBit) -> Result<Condition, QheError> {
        let ct = match bit {
            KeyBit::Z(q) => {
                self.check(q)?;
                self.key.z[q].clone()
            }
            KeyBit::X(q) => {
                self.check(q)?;
                self.key.x[q].clone()
            }
        };
        Ok(Condition::Encrypted(ct))
    }

    fn apply_rule(&mut self, rule: &Rule) -> Result<(), QheError> {
        for q in rule.qubits() {
            self.check(q)?;
        }
        let ev = &self.ev;
        let k = &mut self.key;
        match *rule {
            Rule::Identity => {}
            Rule::Swap(q) => {
                let (z, x) = (k.z[q].clone(), k.x[q].clone());
                k.z[q] = x;
                k.x[q] = z;
            }
            Rule::PhaseXor(q) => k.z[q] = ev.xor(&k.z[q], &k.x[q])?,
            Rule::Cnot { c, t } => {
                k.x[t] = ev.xor(&k.x[t], &k.x[c])?;
                k.z[c] = ev.xor(&k.z[c], &k.z[t])?;
            }
            Rule::Cz { a, b } => {
                let za = ev.xor(&k.z[a], &k.x[b])?;
                let zb = ev.xor(&k.z[b], &k.x[a])?;
                k.z[a] = za;
                k.z[b] = zb;
            }
            Rule::Toffoli { c1, c2, t } => {
                let xt = ev.and(&k.x[c1], &k.x[c2])?;
                let z1 = ev.and(&k.z[t], &k.x[c2])?;
                let z2 = ev.and(&k.z[t], &k.x[c1])?;
                k.x[t] = ev.xor(&k.x[t], &xt)?;
                k.z[c1] = ev.xor(&k.z[c1], &z1)?;
                k.z[c2] = ev.xor(&k.z[c2], &z2)?;
            }
            Rule::Reset(q) => {
                k.z[q] = ev.xor(&k.z[q], &k.z[q])?;
                k.x[q] = ev.xor(&k.x[q], &k.x[q])?;
            }
        }
        Ok(())
    }
}

/// Key view for the shared-key workflow. The server tracks nothing about
/// key values; it only numbers the conditions it requests, and the clients
/// supply the matching schedule to the gadget.
#[derive(Debug, Clone)]
pub struct ScheduledKeyView {
    n_qubits: usize,
    cursor: usize,
}

impl ScheduledKeyView {
    pub fn new(n_qubits: usize) -> Self {
        ScheduledKeyView {
            n_qubits,
            cursor: 0,
        }
    }

    /// Continues numbering from an earlier view over a resized register.
    pub fn resized(&self, n_qubits: usize) -> Self {
        ScheduledKeyView {
            n_qubits,
            cursor: self.cursor,
        }
    }

    pub fn requests(&self) -> usize {
        self.cursor
    }
}

impl EncryptedKeyView for ScheduledKeyView {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn condition(&mut self, _bit: KeyBit) -> Result<Condition, QheError> {
        let c = Condition::Scheduled(self.cursor);
        self.cursor += 1;
        Ok(c)
    }

    fn apply_rule(&mut self, _rule: &Rule) -> Result<(), QheError> {
        Ok(())
    }
}

/// Calls and latency charged by a gadget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GadgetStats {
    pub calls: u64,
    pub latency_units: u64,
}

/// Default latency per conditioned gate.
pub const DEFAULT_GADGET_LATENCY: u64 = 25;

/// Sealed capability that applies a Clifford gate to a ciphertext iff a
/// hidden key bit is 1. Latency is charged per call regardless of the bit.
pub trait GadgetOracle: Send + Sync {
    fn apply_conditioned(
        &self,
        state: &mut QState,
        gate: &Gate,
        cond: &Condition,
    ) -> Result<(), QheError>;

    fn stats(&self) -> GadgetStats;
}

#[derive(Debug, Default)]
struct GadgetCounters {
    calls: AtomicU64,
    latency: AtomicU64,
}

impl GadgetCounters {
    fn charge(&self, units: u64) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.latency.fetch_add(units, Ordering::Relaxed);
    }

    fn stats(&self) -> GadgetStats {
        GadgetStats {
            calls: self.calls.load(Ordering::Relaxed),
            latency_units: self.latency.load(Ordering::Relaxed),
        }
    }
}

fn apply_clifford(state: &mut QState, gate: &Gate) -> Result<(), QheError> {
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    state.apply(gate, &mut no_rng)?;
    Ok(())
}

fn check_conditioned_gate(gate: &Gate) -> Result<(), QheError> {
    if gate.kind().is_clifford() {
        Ok(())
    } else {
        Err(QheError::Unsupported(gate.kind()))
    }
}

/// Gadget that resolves CHE-encrypted conditions. Stands in for an
/// encrypted-CNOT construction; the decryption happens behind this type.
#[derive(Debug)]
pub struct CheGadget {
    ev: CheEvaluator,
    latency: u64,
    counters: GadgetCounters,
}

impl CheGadget {
    pub fn new(ev: CheEvaluator, latency_per_gate: u64) -> Self {
        CheGadget {
            ev,
            latency: latency_per_gate,
            counters: GadgetCounters::default(),
        }
    }
}

impl GadgetOracle for CheGadget {
    fn apply_conditioned(
        &self,
        state: &mut QState,
        gate: &Gate,
        cond: &Condition,
    ) -> Result<(), QheError> {
        check_conditioned_gate(gate)?;
        let Condition::Encrypted(ct) = cond else {
            return Err(QheError::ForeignCondition);
        };
        let bit = self.ev.reveal_for_gadget(ct)?;
        self.counters.charge(self.latency);
        if bit {
            apply_clifford(state, gate)?;
        }
        Ok(())
    }

    fn stats(&self) -> GadgetStats {
        self.counters.stats()
    }
}

/// Gadget provisioned by the clients with the condition bits for one
/// aggregation, in request order.
#[derive(Debug)]
pub struct ScheduleGadget {
    bits: Vec<bool>,
    latency: u64,
    counters: GadgetCounters,
}

impl ScheduleGadget {
    pub fn new(bits: Vec<bool>, latency_per_gate: u64) -> Self {
        ScheduleGadget {
            bits,
            latency: latency_per_gate,
            counters: GadgetCounters::default(),
        }
    }

    /// Errors if some provisioned bits were never requested.
    pub fn finish(&self) -> Result<(), QheError> {
        let used = self.counters.calls.load(Ordering::Relaxed) as usize;
        if used < self.bits.len() {
            return Err(QheError::ScheduleUnused {
                unused: self.bits.len() - used,
            });
        }
        Ok(())
    }
}

impl GadgetOracle for ScheduleGadget {
    fn apply_conditioned(
        &self,
        state: &mut QState,
        gate: &Gate,
        cond: &Condition,
    ) -> Result<(), QheError> {
        check_conditioned_gate(gate)?;
        let Condition::Scheduled(i) = *cond else {
            return Err(QheError::ForeignCondition);
        };
        let bit = *self.bits.get(i).ok_or(QheError::ScheduleExhausted(i))?;
        self.counters.charge(self.latency);
        if bit {
            apply_clifford(state, gate)?;
        }
        Ok(())
    }

    fn stats(&self) -> GadgetStats {
        self.counters.stats()
    }
}

/// Evaluates one gate on a ciphertext and advances the key view.
pub fn homomorphic_apply(
    gate: &Gate,
    mut ct: QCiphertext,
    view: &mut dyn EncryptedKeyView,
    gadget: &dyn GadgetOracle,
) -> Result<QCiphertext, QheError> {
    if view.n_qubits() != ct.n_qubits() {
        return Err(QheError::DimensionMismatch {
            view: view.n_qubits(),
            state: ct.n_qubits(),
        });
    }
    gate.check_width(ct.n_qubits())?;
    let rule = match gate.kind() {
        GateKind::Reset | GateKind::T | GateKind::RX | GateKind::RY | GateKind::RZ => {
            return Err(QheError::Unsupported(gate.kind()))
        }
        _ => Rule::for_gate(gate)?,
    };
    apply_clifford(&mut ct.state, gate)?;
    if let Rule::Toffoli { c1, c2, t } = rule {
        // Conditions are read from the key before this gate's update.
        let on_x1 = view.condition(KeyBit::X(c1))?;
        let on_x2 = view.condition(KeyBit::X(c2))?;
        let on_zt = view.condition(KeyBit::Z(t))?;
        gadget.apply_conditioned(&mut ct.state, &Gate::cx(c2, t), &on_x1)?;
        gadget.apply_conditioned(&mut ct.state, &Gate::cx(c1, t), &on_x2)?;
        gadget.apply_conditioned(&mut ct.state, &Gate::cz(c1, c2), &on_zt)?;
    }
    view.apply_rule(&rule)?;
    Ok(ct)
}

/// Resets one qubit of a ciphertext. The qubit ends in |0⟩ under the zero key.
pub fn homomorphic_reset<R: rand::Rng + ?Sized>(
    q: usize,
    mut ct: QCiphertext,
    view: &mut dyn EncryptedKeyView,
    rng: &mut R,
) -> Result<QCiphertext, QheError> {
    let gate = Gate::reset(q);
    gate.check_width(ct.n_qubits())?;
    ct.state.apply(&gate, rng)?;
    view.apply_rule(&Rule::Reset(q))?;
    Ok(ct)
}

/// Evaluates a whole circuit, returning the rules the clients need to
/// replay the key.
pub fn homomorphic_run(
    circuit: &Circuit,
    mut ct: QCiphertext,
    view: &mut dyn EncryptedKeyView,
    gadget: &dyn GadgetOracle,
) -> Result<(QCiphertext, RuleTrace), QheError> {
    if circuit.n_qubits() != ct.n_qubits() {
        return Err(SimError::DimensionMismatch {
            circuit: circuit.n_qubits(),
            state: ct.n_qubits(),
        }
        .into());
    }
    let mut trace = RuleTrace::default();
    for g in circuit.gates() {
        ct = homomorphic_apply(g, ct, view, gadget)?;
        trace.push(g.clone(), Rule::for_gate(g)?);
    }
    Ok((ct, trace))
}

/// Client side: the condition bits a [`ScheduleGadget`] needs to evaluate
/// `circuit` on a register encrypted under `key`, in request order, plus
/// the resulting key.
pub fn correction_schedule(
    circuit: &Circuit,
    key: &PauliKey,
) -> Result<(Vec<bool>, PauliKey), QheError> {
    let mut key = key.clone();
    let mut bits = Vec::new();
    append_schedule(circuit, &mut key, &mut bits)?;
    Ok((bits, key))
}

/// Like [`correction_schedule`] but continues an existing key and schedule.
pub fn append_schedule(
    circuit: &Circuit,
    key: &mut PauliKey,
    bits: &mut Vec<bool>,
) -> Result<(), QheError> {
    for g in circuit.gates() {
        check_key_width(g, key)?;
        let rule = Rule::for_gate(g)?;
        if let Rule::Toffoli { c1, c2, t } = rule {
            bits.extend([key.x(c1), key.x(c2), key.z(t)]);
        }
        rule.apply(key);
    }
    Ok(())
}
