//! Federated training rounds over encrypted, quantized gradient registers.
//!
//! Each round: clients compute local gradients, agree on a common scale,
//! quantize to integers, encode each carried parameter in a W-qubit
//! two's-complement register, pad it with a QOTP key and upload. The server
//! adds the registers with the quantum adder, correcting CCX key effects
//! through a gadget, and broadcasts one register per parameter. Clients
//! recover the final keys, decrypt the integer sums and apply the same SGD
//! step, so the model stays identical across clients.
//!
//! Latency is in cost-model units. Steps run by every client in parallel
//! count the slowest client; server steps are summed.

pub mod server;

pub use server::{Broadcast, Layout, ServerCost, ServerState, Upload, QUBIT_WIRE_BYTES};

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::aggadder::{
    aggregation_schedule, build_adder, decode_bits, operand_bits, AdderError,
};
use crate::che::{CheError, CheKeypair};
use crate::config::{ConfigError, FedConfig, Quantization, Workflow};
use crate::qhe::{
    decrypt_register, encrypt_register, EncryptedKey, KeyId, KeyTrace, QCiphertext, QheError,
    ScheduleGadget,
};
use crate::qnn::{
    batch_metrics, embed, gaussian_blobs, parameter_shift_grad, qubo_problem, sgd_step,
    stateprep_target, Ansatz, Example, QnnError, TaskKind,
};
use crate::qotp::{keygen, PauliKey, QotpError};
use crate::qsim::{Circuit, QState, SimError};
use crate::terngrad::{self, TernError};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("{0} clients; federated rounds need at least 2")]
    TooFewClients(usize),
    #[error("adder width {width} cannot hold the sum of {clients} contributions")]
    WidthOverflow { width: usize, clients: usize },
    #[error("client {0} sent no update; dropout is not supported")]
    Dropout(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Qnn(#[from] QnnError),
    #[error(transparent)]
    Adder(#[from] AdderError),
    #[error(transparent)]
    Qhe(#[from] QheError),
    #[error(transparent)]
    Qotp(#[from] QotpError),
    #[error(transparent)]
    Che(#[from] CheError),
    #[error(transparent)]
    Tern(#[from] TernError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Step {
    LocalTrain,
    QotpEncrypt,
    CheCompute,
    Upload,
    Aggregate,
    Download,
    Decrypt,
    ModelUpdate,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::LocalTrain,
        Step::QotpEncrypt,
        Step::CheCompute,
        Step::Upload,
        Step::Aggregate,
        Step::Download,
        Step::Decrypt,
        Step::ModelUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::LocalTrain => "local_train",
            Step::QotpEncrypt => "qotp_encrypt",
            Step::CheCompute => "che_compute",
            Step::Upload => "upload",
            Step::Aggregate => "aggregate",
            Step::Download => "download",
            Step::Decrypt => "decrypt",
            Step::ModelUpdate => "model_update",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Indexed like [`Step::ALL`].
    pub latency: [f64; 8],
    /// Server-side share of the che_compute step.
    pub server_che: f64,
    pub bytes_up: Vec<u64>,
    pub bytes_down: Vec<u64>,
    pub loss: f64,
    pub accuracy: f64,
}

impl RoundMetrics {
    fn new(round: usize, n_clients: usize) -> Self {
        RoundMetrics {
            round,
            latency: [0.0; 8],
            server_che: 0.0,
            bytes_up: vec![0; n_clients],
            bytes_down: vec![0; n_clients],
            loss: 0.0,
            accuracy: 0.0,
        }
    }

    pub fn latency_of(&self, step: Step) -> f64 {
        self.latency[step as usize]
    }

    fn add(&mut self, step: Step, units: f64) {
        self.latency[step as usize] += units;
    }

    pub fn total_latency(&self) -> f64 {
        self.latency.iter().sum()
    }

    /// Each step's share of this round's latency.
    pub fn normalized(&self) -> [f64; 8] {
        let total = self.total_latency();
        let mut out = [0.0; 8];
        if total > 0.0 {
            for (o, l) in out.iter_mut().zip(&self.latency) {
                *o = l / total;
            }
        }
        out
    }

    pub fn total_bytes_up(&self) -> u64 {
        self.bytes_up.iter().sum()
    }

    pub fn total_bytes_down(&self) -> u64 {
        self.bytes_down.iter().sum()
    }
}

/// Integer quantization shared by all clients in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub mode: Quantization,
    pub width: usize,
    /// Largest digit magnitude a client may send.
    pub levels: i64,
    pub scale: f64,
}

impl Quantizer {
    /// The largest per-client digit range whose N-fold sum still fits a
    /// signed `width`-bit register.
    pub fn new(mode: Quantization, width: usize, n_clients: usize, scale: f64) -> Result<Self, FedError> {
        let capacity = (1i64 << (width - 1)) - 1;
        let levels = match mode {
            Quantization::Ternary => 1,
            Quantization::Dense => capacity / n_clients as i64,
        };
        if levels < 1 || levels * n_clients as i64 > capacity {
            return Err(FedError::WidthOverflow {
                width,
                clients: n_clients,
            });
        }
        Ok(Quantizer {
            mode,
            width,
            levels,
            scale,
        })
    }

    /// Real value of one digit.
    pub fn step(&self) -> f64 {
        self.scale / self.levels as f64
    }
}

/// The smallest f32 at or above the largest gradient magnitude, so every
/// client's entries are within the scale. All-zero gradients get scale 1.
pub fn common_scale(grads: &[Vec<f64>]) -> f64 {
    let m = grads.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
    if m == 0.0 {
        return 1.0;
    }
    f64::from(terngrad::scale_at_least(m))
}

/// A client's quantized update.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub digits: Vec<i64>,
    /// Parameters that go on the wire.
    pub indices: Vec<usize>,
    pub layout: Layout,
}

pub fn quantize<R: Rng + ?Sized>(
    grad: &[f64],
    q: &Quantizer,
    rng: &mut R,
) -> Result<Quantized, FedError> {
    match q.mode {
        Quantization::Ternary => {
            let update = terngrad::ternarize_with_scale(grad, q.scale as f32, rng)?;
            let digits = update.digits().iter().map(|&d| i64::from(d)).collect();
            let indices = update.entries.iter().map(|&(i, _)| i as usize).collect();
            let redacted = terngrad::TernaryUpdate {
                entries: update.entries.iter().map(|&(i, _)| (i, false)).collect(),
                ..update
            };
            Ok(Quantized {
                digits,
                indices,
                layout: Layout::Sparse(terngrad::serialize(&redacted)),
            })
        }
        Quantization::Dense => {
            let step = q.step();
            let digits = grad
                .iter()
                .map(|g| {
                    let u: f64 = rng.gen();
                    ((g / step + u).floor() as i64).clamp(-q.levels, q.levels)
                })
                .collect();
            Ok(Quantized {
                digits,
                indices: (0..grad.len()).collect(),
                layout: Layout::Dense,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub params: Vec<f64>,
    shard: Vec<Example>,
    data_rng: ChaCha8Rng,
    key_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_DATA: u64 = 0;
const STREAM_TEST: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHARED_KEYS: u64 = 3;
const STREAM_CHE: u64 = 4;
const STREAM_SERVER: u64 = 5;
const STREAM_CLIENT_DATA: u64 = 1 << 20;
const STREAM_CLIENT_KEYS: u64 = 2 << 20;

impl ClientState {
    pub fn new(id: usize, params: Vec<f64>, shard: Vec<Example>, seed: u64) -> Self {
        ClientState {
            id,
            params,
            shard,
            data_rng: stream(seed, STREAM_CLIENT_DATA + id as u64),
            key_rng: stream(seed, STREAM_CLIENT_KEYS + id as u64),
        }
    }

    pub fn shard(&self) -> &[Example] {
        &self.shard
    }

    /// Mini-batch drawn without replacement from the shard.
    pub fn sample_batch(&mut self, size: usize) -> Vec<Example> {
        let n = self.shard.len();
        let k = size.min(n);
        let mut idx = sample(&mut self.data_rng, n, k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.shard[i].clone()).collect()
    }

    /// Gradient on a fresh mini-batch and the batch size used.
    pub fn local_gradient(&mut self, ansatz: &Ansatz, batch_size: usize) -> Result<(Vec<f64>, usize), FedError> {
        let batch = self.sample_batch(batch_size);
        let g = parameter_shift_grad(ansatz, &self.params, &batch)?;
        Ok((g, batch.len()))
    }

    pub fn quantize(&mut self, grad: &[f64], q: &Quantizer) -> Result<Quantized, FedError> {
        quantize(grad, q, &mut self.data_rng)
    }

    fn apply_update(&mut self, ansatz: &Ansatz, update: &[f64], lr: f64) -> Result<(), FedError> {
        self.params = sgd_step(ansatz, &self.params, update, lr)?;
        Ok(())
    }
}

/// What one round produced, beyond its metrics.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub metrics: RoundMetrics,
    /// Each client's digits, for checking the aggregate.
    pub contributions: Vec<Vec<i64>>,
    /// Decrypted per-parameter digit sums.
    pub aggregate: Vec<i64>,
    /// The gradient estimate every client applied.
    pub update: Vec<f64>,
    pub quantizer: Option<Quantizer>,
    /// Key trace of the first adder pass, when tracing.
    pub trace: Option<String>,
}

/// A running experiment: clients, server and held-out data.
#[derive(Debug)]
pub struct Federation {
    cfg: FedConfig,
    ansatz: Ansatz,
    clients: Vec<ClientState>,
    server: Option<ServerState>,
    che: Option<CheKeypair>,
    shared_key_rng: ChaCha8Rng,
    server_rng: ChaCha8Rng,
    test_set: Vec<Example>,
    round: usize,
    eval_latency: f64,
}

fn build_data(cfg: &FedConfig, ansatz: &Ansatz) -> Result<(Vec<Vec<Example>>, Vec<Example>), FedError> {
    let mut rng = stream(cfg.seed, STREAM_DATA);
    let n = cfg.n_clients;
    Ok(match cfg.task {
        TaskKind::Classify => {
            let all = gaussian_blobs(n * cfg.samples_per_client, &mut rng);
            let shards = all.chunks(cfg.samples_per_client).map(<[_]>::to_vec).collect();
            let test = gaussian_blobs(cfg.test_samples, &mut stream(cfg.seed, STREAM_TEST));
            (shards, test)
        }
        TaskKind::StatePrep => {
            let target = stateprep_target(ansatz, &mut rng)?;
            (vec![vec![target.clone()]; n], vec![target])
        }
        TaskKind::Qco => {
            let problem = qubo_problem(ansatz.n_qubits, &mut rng);
            (vec![vec![problem.clone()]; n], vec![problem])
        }
    })
}

impl Federation {
    pub fn new(cfg: &FedConfig) -> Result<Self, FedError> {
        cfg.validate()?;
        let ansatz = Ansatz::new(cfg.task.n_qubits(), cfg.n_layers)?;
        let (shards, test_set) = build_data(cfg, &ansatz)?;
        let init = ansatz.init_params(cfg.init_scale, &mut stream(cfg.seed, STREAM_INIT));
        let federated = cfg.workflow != Workflow::Centralized;
        let clients = if federated {
            shards
                .into_iter()
                .enumerate()
                .map(|(id, shard)| ClientState::new(id, init.clone(), shard, cfg.seed))
                .collect()
        } else {
            let pooled = match cfg.task {
                TaskKind::Classify => shards.concat(),
                _ => shards[0].clone(),
            };
            vec![ClientState::new(0, init, pooled, cfg.seed)]
        };
        let mut server = None;
        let mut che = None;
        if federated {
            let width = match cfg.quantization {
                Quantization::Ternary => cfg.adder_width,
                Quantization::Dense => cfg.dense_width,
            };
            Quantizer::new(cfg.quantization, width, cfg.n_clients, 1.0)?;
            let adder = build_adder(width, false)?;
            let evaluator = if cfg.workflow == Workflow::Baseline {
                let kp = CheKeypair::generate(&mut stream(cfg.seed, STREAM_CHE));
                let ev = kp.evaluator();
                che = Some(kp);
                Some(ev)
            } else {
                None
            };
            server = Some(ServerState::new(
                adder,
                ansatz.param_count(),
                cfg.gate_costs.clone(),
                cfg.che_costs,
                evaluator,
                cfg.gadget_latency,
            ));
        }
        // One gradient evaluation simulates the embedding and the ansatz.
        let mut eval_circuit = match cfg.task {
            TaskKind::Classify => embed(&vec![0.0; ansatz.n_qubits], ansatz.n_qubits)?,
            _ => Circuit::new(ansatz.n_qubits)?,
        };
        let zero = vec![0.0; ansatz.param_count()];
        eval_circuit.extend(&ansatz.circuit(&zero)?)?;
        let eval_latency = cfg.gate_costs.latency(&eval_circuit);
        Ok(Federation {
            cfg: cfg.clone(),
            ansatz,
            clients,
            server,
            che,
            shared_key_rng: stream(cfg.seed, STREAM_SHARED_KEYS),
            server_rng: stream(cfg.seed, STREAM_SERVER),
            test_set,
            round: 0,
            eval_latency,
        })
    }

    pub fn config(&self) -> &FedConfig {
        &self.cfg
    }

    pub fn ansatz(&self) -> &Ansatz {
        &self.ansatz
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn server(&self) -> Option<&ServerState> {
        self.server.as_ref()
    }

    pub fn test_set(&self) -> &[Example] {
        &self.test_set
    }

    /// The shared model.
    pub fn params(&self) -> &[f64] {
        &self.clients[0].params
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Held-out loss and task metric of the shared model.
    pub fn evaluate(&self) -> Result<(f64, f64), FedError> {
        Ok(batch_metrics(&self.ansatz, self.params(), &self.test_set)?)
    }

    fn batch_size(&self) -> usize {
        match self.cfg.workflow {
            Workflow::Centralized => self.cfg.batch_size * self.cfg.n_clients,
            _ => self.cfg.batch_size,
        }
    }

    /// Local gradients of every client and their batch sizes.
    pub fn local_gradients(&mut self) -> Result<(Vec<Vec<f64>>, Vec<usize>), FedError> {
        let b = self.batch_size();
        let ansatz = self.ansatz;
        let mut grads = Vec::with_capacity(self.clients.len());
        let mut sizes = Vec::with_capacity(self.clients.len());
        for c in &mut self.clients {
            let (g, n) = c.local_gradient(&ansatz, b)?;
            grads.push(g);
            sizes.push(n);
        }
        Ok((grads, sizes))
    }

    /// One full round of the configured workflow.
    pub fn step(&mut self) -> Result<RoundOutcome, FedError> {
        let (grads, sizes) = self.local_gradients()?;
        self.run_round(grads, &sizes)
    }

    /// A round driven by the given client gradients.
    pub fn run_round(&mut self, grads: Vec<Vec<f64>>, batch_sizes: &[usize]) -> Result<RoundOutcome, FedError> {
        match self.cfg.workflow {
            Workflow::Baseline => self.run_round_baseline(grads, batch_sizes),
            Workflow::CryptoQfl => self.run_round_cryptoqfl(grads, batch_sizes),
            Workflow::Centralized => self.run_round_centralized(grads, batch_sizes),
        }
    }

    fn check_gradients(&self, grads: &[Vec<f64>], batch_sizes: &[usize]) -> Result<(), FedError> {
        if grads.len() != self.clients.len() || batch_sizes.len() != self.clients.len() {
            let missing = grads.len().min(batch_sizes.len());
            return Err(FedError::Dropout(missing));
        }
        let p = self.ansatz.param_count();
        if let Some(j) = grads.iter().position(|g| g.len() != p) {
            return Err(FedError::Protocol(format!("client {j} gradient has wrong length")));
        }
        Ok(())
    }

    fn train_latency(&self, batch_sizes: &[usize]) -> f64 {
        let evals = 2 * self.ansatz.param_count() + 1;
        let b = batch_sizes.iter().copied().max().unwrap_or(0);
        (b * evals) as f64 * self.eval_latency
    }

    fn finish(
        &mut self,
        mut metrics: RoundMetrics,
        update: Vec<f64>,
    ) -> Result<RoundMetrics, FedError> {
        let ansatz = self.ansatz;
        for c in &mut self.clients {
            c.apply_update(&ansatz, &update, self.cfg.lr)?;
        }
        metrics.add(
            Step::ModelUpdate,
            self.ansatz.param_count() as f64 * self.cfg.update_cost,
        );
        let (loss, acc) = self.evaluate()?;
        metrics.loss = loss;
        metrics.accuracy = acc;
        self.round += 1;
        Ok(metrics)
    }

    pub fn run_round_centralized(
        &mut self,
        grads: Vec<Vec<f64>>,
        batch_sizes: &[usize],
    ) -> Result<RoundOutcome, FedError> {
        self.check_gradients(&grads, batch_sizes)?;
        let mut metrics = RoundMetrics::new(self.round, 1);
        metrics.add(Step::LocalTrain, self.train_latency(batch_sizes));
        let update = grads[0].clone();
        let metrics = self.finish(metrics, update.clone())?;
        Ok(RoundOutcome {
            metrics,
            contributions: vec![],
            aggregate: vec![],
            update,
            quantizer: None,
            trace: None,
        })
    }

    fn federated_setup(&self, grads: &[Vec<f64>], batch_sizes: &[usize]) -> Result<Quantizer, FedError> {
        if self.clients.len() < 2 {
            return Err(FedError::TooFewClients(self.clients.len()));
        }
        self.check_gradients(grads, batch_sizes)?;
        let width = self.server().expect("federated").adder().width;
        Quantizer::new(self.cfg.quantization, width, self.clients.len(), common_scale(grads))
    }

    fn register(&self, digit: i64, width: usize) -> Result<QState, FedError> {
        Ok(QState::basis(width, operand_bits(digit, width)?)?)
    }

    fn trace_for(&self, key: &PauliKey) -> Option<String> {
        if !self.cfg.trace || self.round != 0 {
            return None;
        }
        let adder = self.server()?.adder();
        let full = PauliKey::zeros(adder.width)
            .concat(key)
            .concat(&PauliKey::zeros(adder.extra_qubits()));
        KeyTrace::for_circuit(full, &adder.circuit).ok().map(|t| t.dump())
    }

    fn decode(&self, reg: QCiphertext, key: &PauliKey) -> Result<i64, FedError> {
        let width = reg.n_qubits();
        let plain = decrypt_register(reg, key)?;
        let idx = plain
            .basis_index()
            .ok_or_else(|| FedError::Protocol("aggregate is not a basis state".into()))?;
        Ok(decode_bits(idx, width))
    }

    /// Latency shared by both federated workflows, per client.
    fn pad_latency(&self, registers: usize, width: usize) -> f64 {
        (registers * 2 * width) as f64 * self.cfg.gate_costs.cost_single
    }

    /// Per-client keys, key material uploaded under CHE, key updates under
    /// CHE at the server.
    pub fn run_round_baseline(
        &mut self,
        grads: Vec<Vec<f64>>,
        batch_sizes: &[usize],
    ) -> Result<RoundOutcome, FedError> {
        let q = self.federated_setup(&grads, batch_sizes)?;
        let che = self
            .che
            .clone()
            .ok_or_else(|| FedError::Protocol("clients hold no CHE keypair".into()))?;
        let n = self.clients.len();
        let w = q.width;
        let costs = self.cfg.che_costs;
        let mut metrics = RoundMetrics::new(self.round, n);
        metrics.add(Step::LocalTrain, self.train_latency(batch_sizes));

        let mut uploads = Vec::with_capacity(n);
        let mut contributions = Vec::with_capacity(n);
        let mut trace = None;
        let (mut pad, mut che_client) = (0.0f64, 0.0f64);
        for j in 0..n {
            let quant = self.clients[j].quantize(&grads[j], &q)?;
            let mut registers = Vec::with_capacity(quant.indices.len());
            let mut keys = Vec::with_capacity(quant.indices.len());
            for &i in &quant.indices {
                let key = keygen(w, &mut self.clients[j].key_rng)?;
                if trace.is_none() {
                    trace = self.trace_for(&key);
                }
                let state = self.register(quant.digits[i], w)?;
                registers.push(encrypt_register(state, &key, KeyId(i as u64))?);
                keys.push(EncryptedKey::encrypt(&key, &che));
            }
            pad = pad.max(self.pad_latency(registers.len(), w));
            che_client = che_client.max((registers.len() * 2 * w) as f64 * costs.cost_encrypt as f64);
            let up = Upload {
                client_id: j,
                layout: quant.layout,
                registers,
                keys: Some(keys),
            };
            metrics.bytes_up[j] = up.wire_bytes() + 4;
            uploads.push(up);
            contributions.push(quant.digits);
        }

        let server = self.server.as_ref().expect("federated");
        let (broadcast, cost) = server.aggregate_che(uploads, &mut self.server_rng)?;
        let down = broadcast.wire_bytes() + 4;
        metrics.bytes_down.iter_mut().for_each(|b| *b = down);

        let keys = broadcast.keys.clone().unwrap_or_default();
        let mut aggregate = Vec::with_capacity(keys.len());
        for (reg, enc) in broadcast.registers.into_iter().zip(&keys) {
            let key = enc.decrypt(&che)?;
            aggregate.push(self.decode(reg, &key)?);
        }
        let p = aggregate.len();
        let decrypt = (p * 2 * w) as f64 * (costs.cost_decrypt as f64 + self.cfg.gate_costs.cost_single);

        metrics.add(Step::QotpEncrypt, pad);
        metrics.add(Step::CheCompute, che_client + cost.che_compute);
        metrics.server_che = cost.che_compute;
        self.add_transfer(&mut metrics);
        metrics.add(Step::Aggregate, cost.aggregate);
        metrics.add(Step::Decrypt, decrypt);
        self.conclude(metrics, q, contributions, aggregate, trace)
    }

    /// One shared key per parameter register; clients replay the key
    /// updates in plaintext and provision the correction schedule.
    pub fn run_round_cryptoqfl(
        &mut self,
        grads: Vec<Vec<f64>>,
        batch_sizes: &[usize],
    ) -> Result<RoundOutcome, FedError> {
        let q = self.federated_setup(&grads, batch_sizes)?;
        if q.mode == Quantization::Dense {
            return Err(FedError::Protocol(
                "the shared-key workflow uploads sparse ternary updates only".into(),
            ));
        }
        let n = self.clients.len();
        let w = q.width;
        let p = self.ansatz.param_count();
        let mut metrics = RoundMetrics::new(self.round, n);
        metrics.add(Step::LocalTrain, self.train_latency(batch_sizes));

        let round_keys = (0..p)
            .map(|_| keygen(w, &mut self.shared_key_rng))
            .collect::<Result<Vec<_>, _>>()?;
        let trace = self.trace_for(&round_keys[0]);
        let mut uploads = Vec::with_capacity(n);
        let mut contributions = Vec::with_capacity(n);
        let mut pad = 0.0f64;
        for j in 0..n {
            let quant = self.clients[j].quantize(&grads[j], &q)?;
            let mut registers = Vec::with_capacity(quant.indices.len());
            for &i in &quant.indices {
                let state = self.register(quant.digits[i], w)?;
                registers.push(encrypt_register(state, &round_keys[i], KeyId(i as u64))?);
            }
            pad = pad.max(self.pad_latency(registers.len(), w));
            let up = Upload {
                client_id: j,
                layout: quant.layout,
                registers,
                keys: None,
            };
            metrics.bytes_up[j] = up.wire_bytes() + 4;
            uploads.push(up);
            contributions.push(quant.digits);
        }

        let server = self.server.as_ref().expect("federated");
        let adder = server.adder();
        let counts = server.participation(&uploads)?;
        let mut gadgets = Vec::with_capacity(p);
        let mut final_keys = Vec::with_capacity(p);
        let mut key_ops = 0usize;
        let rules_per_pass = adder.circuit.len() + adder.n_qubits() - adder.width;
        for (i, &c) in counts.iter().enumerate() {
            let operands = vec![round_keys[i].clone(); c];
            let (bits, key) = aggregation_schedule(adder, &PauliKey::zeros(w), &operands)?;
            gadgets.push(ScheduleGadget::new(bits, server.gadget_latency()));
            final_keys.push(key);
            key_ops += c * rules_per_pass;
        }
        let (broadcast, cost) = server.aggregate_scheduled(uploads, &gadgets, &mut self.server_rng)?;
        // Participation counts go out before the aggregate.
        let down = broadcast.wire_bytes() + 4 * p as u64 + 4;
        metrics.bytes_down.iter_mut().for_each(|b| *b = down);

        let mut aggregate = Vec::with_capacity(p);
        for (reg, key) in broadcast.registers.into_iter().zip(&final_keys) {
            aggregate.push(self.decode(reg, key)?);
        }

        metrics.add(Step::QotpEncrypt, pad);
        metrics.add(Step::CheCompute, key_ops as f64 * self.cfg.key_op_cost + cost.che_compute);
        metrics.server_che = cost.che_compute;
        self.add_transfer(&mut metrics);
        metrics.add(Step::Aggregate, cost.aggregate);
        metrics.add(Step::Decrypt, self.pad_latency(p, w));
        self.conclude(metrics, q, contributions, aggregate, trace)
    }

    fn add_transfer(&self, metrics: &mut RoundMetrics) {
        let up = metrics.bytes_up.iter().copied().max().unwrap_or(0);
        let down = metrics.bytes_down.iter().copied().max().unwrap_or(0);
        metrics.add(Step::Upload, up as f64 * self.cfg.link_cost);
        metrics.add(Step::Download, down as f64 * self.cfg.link_cost);
    }

    fn conclude(
        &mut self,
        metrics: RoundMetrics,
        q: Quantizer,
        contributions: Vec<Vec<i64>>,
        aggregate: Vec<i64>,
        trace: Option<String>,
    ) -> Result<RoundOutcome, FedError> {
        let update = terngrad::dequantize(&aggregate, q.step(), self.clients.len())?;
        let metrics = self.finish(metrics, update.clone())?;
        Ok(RoundOutcome {
            metrics,
            contributions,
            aggregate,
            update,
            quantizer: Some(q),
            trace,
        })
    }
}

/// Experiment-level summary document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub rounds: usize,
    pub final_accuracy: f64,
    pub latency_breakdown: BTreeMap<String, f64>,
    pub bytes_total: BytesTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BytesTotal {
    pub up: u64,
    pub down: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub initial_loss: f64,
    pub initial_accuracy: f64,
    pub metrics: Vec<RoundMetrics>,
    pub trace: Option<String>,
}

impl ExperimentResult {
    pub fn final_loss(&self) -> f64 {
        self.metrics.last().map_or(self.initial_loss, |m| m.loss)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(self.initial_accuracy, |m| m.accuracy)
    }

    /// Held-out loss before training and after each round.
    pub fn loss_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_loss)
            .chain(self.metrics.iter().map(|m| m.loss))
            .collect()
    }

    /// `round,step,latency_units,bytes_up,bytes_down,loss,accuracy`, one
    /// row per step per round. Byte columns are client totals and appear on
    /// the transfer rows.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("round,step,latency_units,bytes_up,bytes_down,loss,accuracy\n");
        for m in &self.metrics {
            for s in Step::ALL {
                let up = if s == Step::Upload { m.total_bytes_up() } else { 0 };
                let down = if s == Step::Download { m.total_bytes_down() } else { 0 };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    m.round,
                    s,
                    m.latency_of(s),
                    up,
                    down,
                    m.loss,
                    m.accuracy
                ));
            }
        }
        out
    }

    pub fn summary(&self) -> ExperimentSummary {
        let mut breakdown = BTreeMap::new();
        for s in Step::ALL {
            let total: f64 = self.metrics.iter().map(|m| m.latency_of(s)).sum();
            breakdown.insert(s.name().to_string(), total);
        }
        ExperimentSummary {
            config_hash: self.config_hash.clone(),
            rounds: self.metrics.len(),
            final_accuracy: self.final_accuracy(),
            latency_breakdown: breakdown,
            bytes_total: BytesTotal {
                up: self.metrics.iter().map(RoundMetrics::total_bytes_up).sum(),
                down: self.metrics.iter().map(RoundMetrics::total_bytes_down).sum(),
            },
        }
    }
}

/// Runs `cfg.rounds` rounds with a held-out evaluation after each.
pub fn run_experiment(cfg: &FedConfig) -> Result<ExperimentResult, FedError> {
    let mut fed = Federation::new(cfg)?;
    let (initial_loss, initial_accuracy) = fed.evaluate()?;
    let mut metrics = Vec::with_capacity(cfg.rounds);
    let mut trace = None;
    for _ in 0..cfg.rounds {
        let out = fed.step()?;
        trace = trace.or(out.trace);
        metrics.push(out.metrics);
    }
    Ok(ExperimentResult {
        config_hash: cfg.hash(),
        initial_loss,
        initial_accuracy,
        metrics,
        trace,
    })
}
