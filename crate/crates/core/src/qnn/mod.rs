//! Variational quantum circuit: angle embedding, a hardware-efficient
//! RY/RZ + ring-CX ansatz, softmax cross-entropy over ⟨Z⟩ logits and exact
//! parameter-shift gradients.

mod io;
mod tasks;

pub use io::{
    load_checkpoint, read_dataset_csv, save_checkpoint, write_dataset_csv, Dataset, CHECKPOINT_MAGIC,
};
pub use tasks::{gaussian_blobs, qubo_problem, stateprep_target, Example, TaskKind};

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use thiserror::Error;

use crate::qsim::{run_circuit, Circuit, Gate, GateKind, SimError, StateVector};
use crate::terngrad::wrap_scalar;

/// Every ansatz parameter is an RY or RZ angle, so all periods are 2π.
pub const PARAM_PERIOD: f64 = 2.0 * PI;

#[derive(Debug, Error)]
pub enum QnnError {
    #[error("ansatz needs at least one qubit and one layer")]
    EmptyAnsatz,
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("{features} features exceed {qubits} qubits")]
    TooManyFeatures { features: usize, qubits: usize },
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("{classes} classes need that many qubits, ansatz has {qubits}")]
    TooManyClasses { classes: usize, qubits: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("example does not match the ansatz: {0}")]
    BadExample(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Layered ansatz. Layer l applies RY then RZ on every qubit, then CX from
/// each qubit to the next around a ring. Parameter 2·(l·n + q) is the RY
/// angle of qubit q in layer l and the following index is its RZ angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ansatz {
    pub n_qubits: usize,
    pub n_layers: usize,
}

impl Ansatz {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self, QnnError> {
        if n_qubits == 0 || n_layers == 0 {
            return Err(QnnError::EmptyAnsatz);
        }
        if n_qubits > crate::qsim::MAX_QUBITS {
            return Err(SimError::TooManyQubits(n_qubits).into());
        }
        Ok(Ansatz { n_qubits, n_layers })
    }

    pub fn param_count(&self) -> usize {
        2 * self.n_qubits * self.n_layers
    }

    /// (gate kind, qubit, layer) of parameter `k`.
    pub fn slot(&self, k: usize) -> (GateKind, usize, usize) {
        let kind = if k % 2 == 0 { GateKind::RY } else { GateKind::RZ };
        let site = k / 2;
        (kind, site % self.n_qubits, site / self.n_qubits)
    }

    pub fn periods(&self) -> Vec<f64> {
        vec![PARAM_PERIOD; self.param_count()]
    }

    fn check(&self, params: &[f64]) -> Result<(), QnnError> {
        if params.len() != self.param_count() {
            return Err(QnnError::ParamCount {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    pub fn circuit(&self, params: &[f64]) -> Result<Circuit, QnnError> {
        self.check(params)?;
        let n = self.n_qubits;
        let mut c = Circuit::new(n)?;
        for l in 0..self.n_layers {
            for q in 0..n {
                let base = 2 * (l * n + q);
                c.push(Gate::ry(q, params[base]))?;
                c.push(Gate::rz(q, params[base + 1]))?;
            }
            if n == 2 {
                c.push(Gate::cx(0, 1))?;
            } else if n > 2 {
                for q in 0..n {
                    c.push(Gate::cx(q, (q + 1) % n))?;
                }
            }
        }
        Ok(c)
    }

    /// Random initial parameters, uniform in [−scale, scale).
    pub fn init_params<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Vec<f64> {
        (0..self.param_count())
            .map(|_| {
                if scale > 0.0 {
                    rng.gen_range(-scale..scale)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Angle embedding: RY(x_j) on qubit j.
pub fn embed(x: &[f64], n_qubits: usize) -> Result<Circuit, QnnError> {
    if x.len() > n_qubits {
        return Err(QnnError::TooManyFeatures {
            features: x.len(),
            qubits: n_qubits,
        });
    }
    let mut c = Circuit::new(n_qubits)?;
    for (j, &v) in x.iter().enumerate() {
        c.push(Gate::ry(j, v))?;
    }
    Ok(c)
}

/// Embeds `x` (if any) and runs the ansatz from |0…0⟩.
pub fn prepare_state(ansatz: &Ansatz, params: &[f64], x: &[f64]) -> Result<StateVector, QnnError> {
    let input = run_circuit(&embed(x, ansatz.n_qubits)?, StateVector::zero(ansatz.n_qubits)?)?;
    Ok(run_circuit(&ansatz.circuit(params)?, input)?)
}

/// Logits ⟨Z_c⟩ on the first `n_classes` qubits.
pub fn forward(
    ansatz: &Ansatz,
    params: &[f64],
    x: &[f64],
    n_classes: usize,
) -> Result<Vec<f64>, QnnError> {
    if n_classes > ansatz.n_qubits {
        return Err(QnnError::TooManyClasses {
            classes: n_classes,
            qubits: ansatz.n_qubits,
        });
    }
    let psi = prepare_state(ansatz, params, x)?;
    (0..n_classes)
        .map(|c| psi.expectation_z(c).map_err(QnnError::from))
        .collect()
}

/// Logits estimated from `shots` measurements of the whole register.
pub fn forward_sampled<R: Rng + ?Sized>(
    ansatz: &Ansatz,
    params: &[f64],
    x: &[f64],
    n_classes: usize,
    shots: usize,
    rng: &mut R,
) -> Result<Vec<f64>, QnnError> {
    if shots == 0 {
        return forward(ansatz, params, x, n_classes);
    }
    let psi = prepare_state(ansatz, params, x)?;
    let mut ones = vec![0usize; n_classes];
    for _ in 0..shots {
        let idx = psi.measure(rng)?;
        for (c, o) in ones.iter_mut().enumerate() {
            *o += idx >> c & 1;
        }
    }
    Ok(ones
        .iter()
        .map(|&o| 1.0 - 2.0 * o as f64 / shots as f64)
        .collect())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Softmax cross-entropy.
pub fn loss(logits: &[f64], label: usize) -> Result<f64, QnnError> {
    if label >= logits.len() {
        return Err(QnnError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// ∂loss/∂logits = softmax − onehot.
pub fn loss_grad_logits(logits: &[f64], label: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[label] -= 1.0;
    p
}

/// Observable values an example's loss is a function of.
fn expectations(example: &Example, psi: &StateVector) -> Result<Vec<f64>, QnnError> {
    match example {
        Example::Labeled { label, n_classes, .. } => {
            if label >= n_classes {
                return Err(QnnError::BadLabel {
                    label: *label,
                    classes: *n_classes,
                });
            }
            (0..*n_classes)
                .map(|c| psi.expectation_z(c).map_err(QnnError::from))
                .collect()
        }
        Example::Target(t) => {
            if t.n_qubits() != psi.n_qubits() {
                return Err(QnnError::BadExample("target width".into()));
            }
            Ok(vec![crate::qsim::fidelity(t, psi)])
        }
        Example::Cost(diag) => {
            if diag.len() != psi.amplitudes().len() {
                return Err(QnnError::BadExample("cost diagonal length".into()));
            }
            Ok(vec![psi
                .amplitudes()
                .iter()
                .zip(diag)
                .map(|(a, c)| a.norm_sqr() * c)
                .sum()])
        }
    }
}

fn loss_of(example: &Example, e: &[f64]) -> Result<f64, QnnError> {
    match example {
        Example::Labeled { label, .. } => loss(e, *label),
        Example::Target(_) => Ok(1.0 - e[0]),
        Example::Cost(_) => Ok(e[0]),
    }
}

fn dloss(example: &Example, e: &[f64]) -> Vec<f64> {
    match example {
        Example::Labeled { label, .. } => loss_grad_logits(e, *label),
        Example::Target(_) => vec![-1.0],
        Example::Cost(_) => vec![1.0],
    }
}

fn input_state(ansatz: &Ansatz, example: &Example) -> Result<StateVector, QnnError> {
    let x = match example {
        Example::Labeled { features, .. } => features.as_slice(),
        _ => &[],
    };
    Ok(run_circuit(
        &embed(x, ansatz.n_qubits)?,
        StateVector::zero(ansatz.n_qubits)?,
    )?)
}

fn evaluate(ansatz: &Ansatz, params: &[f64], example: &Example) -> Result<Vec<f64>, QnnError> {
    let psi = run_circuit(&ansatz.circuit(params)?, input_state(ansatz, example)?)?;
    expectations(example, &psi)
}

/// Loss of one example.
pub fn example_loss(ansatz: &Ansatz, params: &[f64], example: &Example) -> Result<f64, QnnError> {
    loss_of(example, &evaluate(ansatz, params, example)?)
}

/// Mean loss over a batch.
pub fn batch_loss(ansatz: &Ansatz, params: &[f64], batch: &[Example]) -> Result<f64, QnnError> {
    if batch.is_empty() {
        return Err(QnnError::EmptyBatch);
    }
    let mut total = 0.0;
    for ex in batch {
        total += example_loss(ansatz, params, ex)?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss and task metric: accuracy for classification, fidelity for
/// state preparation, normalized quality for cost minimization.
pub fn batch_metrics(
    ansatz: &Ansatz,
    params: &[f64],
    batch: &[Example],
) -> Result<(f64, f64), QnnError> {
    if batch.is_empty() {
        return Err(QnnError::EmptyBatch);
    }
    let mut total_loss = 0.0;
    let mut total_metric = 0.0;
    for ex in batch {
        let e = evaluate(ansatz, params, ex)?;
        total_loss += loss_of(ex, &e)?;
        total_metric += match ex {
            Example::Labeled { label, .. } => {
                let best = e
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0;
                f64::from(u8::from(best == *label))
            }
            Example::Target(_) => e[0],
            Example::Cost(_) => 1.0 - e[0],
        };
    }
    let n = batch.len() as f64;
    Ok((total_loss / n, total_metric / n))
}

/// Batch-averaged ∂L/∂θ by the ±π/2 shift rule on each expectation,
/// chained through ∂L/∂expectation.
pub fn parameter_shift_grad(
    ansatz: &Ansatz,
    params: &[f64],
    batch: &[Example],
) -> Result<Vec<f64>, QnnError> {
    if batch.is_empty() {
        return Err(QnnError::EmptyBatch);
    }
    ansatz.check(params)?;
    let p = params.len();
    let mut grad = vec![0.0; p];
    let mut shifted = params.to_vec();
    for ex in batch {
        let input = input_state(ansatz, ex)?;
        let run = |theta: &[f64]| -> Result<Vec<f64>, QnnError> {
            let psi = run_circuit(&ansatz.circuit(theta)?, input.clone())?;
            expectations(ex, &psi)
        };
        let upstream = dloss(ex, &run(params)?);
        for k in 0..p {
            shifted[k] = params[k] + FRAC_PI_2;
            let plus = run(&shifted)?;
            shifted[k] = params[k] - FRAC_PI_2;
            let minus = run(&shifted)?;
            shifted[k] = params[k];
            let d: f64 = upstream
                .iter()
                .zip(plus.iter().zip(&minus))
                .map(|(u, (a, b))| u * (a - b) / 2.0)
                .sum();
            grad[k] += d;
        }
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok(grad)
}

/// θ ← wrap(θ − lr·G) per slot period.
pub fn sgd_step(ansatz: &Ansatz, params: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>, QnnError> {
    ansatz.check(params)?;
    ansatz.check(grad)?;
    Ok(params
        .iter()
        .zip(grad)
        .zip(ansatz.periods())
        .map(|((t, g), period)| wrap_scalar(t - lr * g, period))
        .collect())
}
