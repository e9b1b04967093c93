//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, unknown
//! keys and repeated keys are errors, and [`FedConfig::set`] applies
//! command-line overrides with the same syntax.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggadder::{GateCostModel, MAX_WIDTH, MIN_WIDTH};
use crate::che::CheCostModel;
use crate::qhe::DEFAULT_GADGET_LATENCY;
use crate::qnn::TaskKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {0:?} given twice")]
    Duplicate(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workflow {
    /// Per-client keys, CHE-encrypted key material, CHE key updates at the
    /// server.
    Baseline,
    /// One shared round key; clients replay the key updates themselves.
    CryptoQfl,
    /// A single client holding all data, no encryption or quantization.
    Centralized,
}

impl Workflow {
    pub fn name(self) -> &'static str {
        match self {
            Workflow::Baseline => "baseline",
            Workflow::CryptoQfl => "cryptoqfl",
            Workflow::Centralized => "centralized",
        }
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workflow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Workflow::Baseline),
            "cryptoqfl" => Ok(Workflow::CryptoQfl),
            "centralized" => Ok(Workflow::Centralized),
            other => Err(format!("unknown workflow {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantization {
    /// Stochastic ternary digits, sparse upload.
    Ternary,
    /// Stochastically rounded fixed point on `dense_width` registers, every
    /// parameter uploaded.
    Dense,
}

impl Quantization {
    pub fn name(self) -> &'static str {
        match self {
            Quantization::Ternary => "ternary",
            Quantization::Dense => "dense",
        }
    }
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ternary" => Ok(Quantization::Ternary),
            "dense" => Ok(Quantization::Dense),
            other => Err(format!("unknown quantization {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub task: TaskKind,
    pub workflow: Workflow,
    pub quantization: Quantization,
    pub n_clients: usize,
    pub rounds: usize,
    pub adder_width: usize,
    pub dense_width: usize,
    pub lr: f64,
    pub seed: u64,
    pub samples_per_client: usize,
    pub test_samples: usize,
    pub batch_size: usize,
    pub n_layers: usize,
    pub init_scale: f64,
    pub gate_costs: GateCostModel,
    pub che_costs: CheCostModel,
    pub gadget_latency: u64,
    /// Latency units per byte on the client-server link.
    pub link_cost: f64,
    /// Latency units per plaintext key-bit update done by a client.
    pub key_op_cost: f64,
    /// Latency units per parameter for applying the update.
    pub update_cost: f64,
    pub trace: bool,
    pub out_dir: String,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            task: TaskKind::Classify,
            workflow: Workflow::CryptoQfl,
            quantization: Quantization::Ternary,
            n_clients: 8,
            rounds: 60,
            adder_width: 6,
            dense_width: 16,
            lr: 0.5,
            seed: 1,
            samples_per_client: 25,
            test_samples: 200,
            batch_size: 8,
            n_layers: 2,
            init_scale: 1.0,
            gate_costs: GateCostModel::default(),
            che_costs: CheCostModel::default(),
            gadget_latency: DEFAULT_GADGET_LATENCY,
            link_cost: 0.01,
            key_op_cost: 0.01,
            update_cost: 0.01,
            trace: false,
            out_dir: "out".into(),
        }
    }
}

const KEYS: &[&str] = &[
    "task",
    "workflow",
    "quantization",
    "n_clients",
    "rounds",
    "adder_width",
    "dense_width",
    "lr",
    "seed",
    "samples_per_client",
    "test_samples",
    "batch_size",
    "n_layers",
    "init_scale",
    "gate_cost_cx",
    "gate_cost_ccx",
    "gate_cost_cz",
    "gate_cost_reset",
    "gate_cost_single",
    "gate_latency_cx",
    "gate_latency_ccx",
    "gate_latency_cz",
    "gate_latency_reset",
    "gate_latency_single",
    "che_cost_encrypt",
    "che_cost_xor",
    "che_cost_and",
    "che_cost_decrypt",
    "gadget_latency",
    "link_cost",
    "key_op_cost",
    "update_cost",
    "trace",
    "out_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl FedConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    /// Defaults overridden by the keys present in `text`. Not validated.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = FedConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate(k.into()));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let g = &mut self.gate_costs;
        let c = &mut self.che_costs;
        match key {
            "task" => self.task = parse(key, value)?,
            "workflow" => self.workflow = parse(key, value)?,
            "quantization" => self.quantization = parse(key, value)?,
            "n_clients" => self.n_clients = parse(key, value)?,
            "rounds" => self.rounds = parse(key, value)?,
            "adder_width" => self.adder_width = parse(key, value)?,
            "dense_width" => self.dense_width = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "samples_per_client" => self.samples_per_client = parse(key, value)?,
            "test_samples" => self.test_samples = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "n_layers" => self.n_layers = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "gate_cost_cx" => g.cost_cx = parse(key, value)?,
            "gate_cost_ccx" => g.cost_ccx = parse(key, value)?,
            "gate_cost_cz" => g.cost_cz = parse(key, value)?,
            "gate_cost_reset" => g.cost_reset = parse(key, value)?,
            "gate_cost_single" => g.cost_single = parse(key, value)?,
            "gate_latency_cx" => g.latency_cx = parse(key, value)?,
            "gate_latency_ccx" => g.latency_ccx = parse(key, value)?,
            "gate_latency_cz" => g.latency_cz = parse(key, value)?,
            "gate_latency_reset" => g.latency_reset = parse(key, value)?,
            "gate_latency_single" => g.latency_single = parse(key, value)?,
            "che_cost_encrypt" => c.cost_encrypt = parse(key, value)?,
            "che_cost_xor" => c.cost_xor = parse(key, value)?,
            "che_cost_and" => c.cost_and = parse(key, value)?,
            "che_cost_decrypt" => c.cost_decrypt = parse(key, value)?,
            "gadget_latency" => self.gadget_latency = parse(key, value)?,
            "link_cost" => self.link_cost = parse(key, value)?,
            "key_op_cost" => self.key_op_cost = parse(key, value)?,
            "update_cost" => self.update_cost = parse(key, value)?,
            "trace" => self.trace = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let g = &self.gate_costs;
        let c = &self.che_costs;
        match key {
            "task" => self.task.to_string(),
            "workflow" => self.workflow.to_string(),
            "quantization" => self.quantization.to_string(),
            "n_clients" => self.n_clients.to_string(),
            "rounds" => self.rounds.to_string(),
            "adder_width" => self.adder_width.to_string(),
            "dense_width" => self.dense_width.to_string(),
            "lr" => format!("{:?}", self.lr),
            "seed" => self.seed.to_string(),
            "samples_per_client" => self.samples_per_client.to_string(),
            "test_samples" => self.test_samples.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "n_layers" => self.n_layers.to_string(),
            "init_scale" => format!("{:?}", self.init_scale),
            "gate_cost_cx" => format!("{:?}", g.cost_cx),
            "gate_cost_ccx" => format!("{:?}", g.cost_ccx),
            "gate_cost_cz" => format!("{:?}", g.cost_cz),
            "gate_cost_reset" => format!("{:?}", g.cost_reset),
            "gate_cost_single" => format!("{:?}", g.cost_single),
            "gate_latency_cx" => format!("{:?}", g.latency_cx),
            "gate_latency_ccx" => format!("{:?}", g.latency_ccx),
            "gate_latency_cz" => format!("{:?}", g.latency_cz),
            "gate_latency_reset" => format!("{:?}", g.latency_reset),
            "gate_latency_single" => format!("{:?}", g.latency_single),
            "che_cost_encrypt" => c.cost_encrypt.to_string(),
            "che_cost_xor" => c.cost_xor.to_string(),
            "che_cost_and" => c.cost_and.to_string(),
            "che_cost_decrypt" => c.cost_decrypt.to_string(),
            "gadget_latency" => self.gadget_latency.to_string(),
            "link_cost" => format!("{:?}", self.link_cost),
            "key_op_cost" => format!("{:?}", self.key_op_cost),
            "update_cost" => format!("{:?}", self.update_cost),
            "trace" => self.trace.to_string(),
            "out_dir" => self.out_dir.clone(),
            _ => unreachable!("key table and accessor disagree on {key}"),
        }
    }

    /// Every key in table order, one `key = value` per line. Parsing the
    /// output gives back an equal config.
    pub fn canonical(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k)))
            .collect()
    }

    /// SHA-256 of the canonical text without `out_dir` and `trace`, which
    /// do not affect results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| !matches!(**k, "out_dir" | "trace")) {
            h.update(format!("{k} = {}\n", self.get(k)).as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n_clients == 0 {
            return bad("n_clients must be at least 1".into());
        }
        if self.workflow != Workflow::Centralized && self.n_clients < 2 {
            return bad(format!("{} needs at least 2 clients", self.workflow));
        }
        if self.rounds == 0 || self.batch_size == 0 || self.samples_per_client == 0 {
            return bad("rounds, batch_size and samples_per_client must be positive".into());
        }
        if self.n_layers == 0 {
            return bad("n_layers must be positive".into());
        }
        if self.task == TaskKind::Classify && self.test_samples == 0 {
            return bad("classification needs test samples".into());
        }
        for (name, w) in [("adder_width", self.adder_width), ("dense_width", self.dense_width)] {
            if !(MIN_WIDTH..=MAX_WIDTH).contains(&w) {
                return bad(format!("{name} {w} outside {MIN_WIDTH}..={MAX_WIDTH}"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        let g = &self.gate_costs;
        let reals = [
            ("init_scale", self.init_scale),
            ("link_cost", self.link_cost),
            ("key_op_cost", self.key_op_cost),
            ("update_cost", self.update_cost),
            ("gate_cost_cx", g.cost_cx),
            ("gate_cost_ccx", g.cost_ccx),
            ("gate_cost_cz", g.cost_cz),
            ("gate_cost_reset", g.cost_reset),
            ("gate_cost_single", g.cost_single),
            ("gate_latency_cx", g.latency_cx),
            ("gate_latency_ccx", g.latency_ccx),
            ("gate_latency_cz", g.latency_cz),
            ("gate_latency_reset", g.latency_reset),
            ("gate_latency_single", g.latency_single),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        self.che_costs
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
