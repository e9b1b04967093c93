//! Toy training tasks.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Ansatz, QnnError};
use crate::qsim::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// 4-qubit, 2-class Gaussian blobs.
    Classify,
    /// 2-qubit state preparation, loss 1 − fidelity.
    StatePrep,
    /// 4-variable quadratic binary optimization.
    Qco,
}

impl TaskKind {
    pub fn n_qubits(self) -> usize {
        match self {
            TaskKind::StatePrep => 2,
            TaskKind::Classify | TaskKind::Qco => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Classify => "classify",
            TaskKind::StatePrep => "stateprep",
            TaskKind::Qco => "qco",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "classify" => Ok(TaskKind::Classify),
            "stateprep" => Ok(TaskKind::StatePrep),
            "qco" => Ok(TaskKind::Qco),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// One training item. The loss is a function of a few expectation values
/// of the prepared state.
#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    /// Angle-embedded features with a class label; logits are ⟨Z_c⟩.
    Labeled {
        features: Vec<f64>,
        label: usize,
        n_classes: usize,
    },
    /// Target state for preparation from |0…0⟩.
    Target(StateVector),
    /// Diagonal of a cost observable, rescaled to [0, 1].
    Cost(Vec<f64>),
}

impl Example {
    pub fn labeled(features: Vec<f64>, label: usize, n_classes: usize) -> Result<Self, QnnError> {
        if label >= n_classes {
            return Err(QnnError::BadLabel {
                label,
                classes: n_classes,
            });
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=PI).contains(*v)) {
            return Err(QnnError::Dataset(format!("feature {v} outside [0, pi]")));
        }
        Ok(Example::Labeled {
            features,
            label,
            n_classes,
        })
    }
}

const BLOB_SIGMA: f64 = 0.35;

fn blob_center(label: usize) -> [f64; 4] {
    let (lo, hi) = (PI / 4.0, 3.0 * PI / 4.0);
    if label == 0 {
        [lo, hi, hi, lo]
    } else {
        [hi, lo, lo, hi]
    }
}

/// `n` samples from two isotropic Gaussian blobs in [0, π]^4, labels
/// alternating 0, 1, 0, …
pub fn gaussian_blobs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Example> {
    let noise = Normal::new(0.0, BLOB_SIGMA).expect("valid sigma");
    (0..n)
        .map(|i| {
            let label = i % 2;
            let features = blob_center(label)
                .iter()
                .map(|c| (c + noise.sample(rng)).clamp(0.0, PI))
                .collect();
            Example::Labeled {
                features,
                label,
                n_classes: 2,
            }
        })
        .collect()
}

/// A target reachable by the ansatz: U(θ*)|00⟩ for random θ*.
pub fn stateprep_target<R: Rng + ?Sized>(ansatz: &Ansatz, rng: &mut R) -> Result<Example, QnnError> {
    let theta: Vec<f64> = (0..ansatz.param_count())
        .map(|_| rng.gen_range(-PI..PI))
        .collect();
    Ok(Example::Target(super::prepare_state(ansatz, &theta, &[])?))
}

/// Random QUBO C(z) = Σ_{i≤j} Q_ij z_i z_j over `n_vars` bits, returned as
/// the rescaled diagonal (C − min)/(max − min) indexed by basis state.
pub fn qubo_problem<R: Rng + ?Sized>(n_vars: usize, rng: &mut R) -> Example {
    let mut q = vec![vec![0.0; n_vars]; n_vars];
    for (i, row) in q.iter_mut().enumerate() {
        for v in row.iter_mut().skip(i) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let raw: Vec<f64> = (0..1usize << n_vars)
        .map(|z| {
            let mut c = 0.0;
            for i in 0..n_vars {
                for j in i..n_vars {
                    if z >> i & 1 == 1 && z >> j & 1 == 1 {
                        c += q[i][j];
                    }
                }
            }
            c
        })
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Example::Cost(raw.iter().map(|c| (c - lo) / span).collect())
}
