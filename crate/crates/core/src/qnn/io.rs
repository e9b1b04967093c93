//! Dataset CSV and parameter checkpoints.
//!
//! Checkpoint layout, little-endian: u32 magic, u32 version, u32
//! param_count, u16 n_qubits, u16 n_layers, then param_count f64 values.

use std::f64::consts::PI;
use std::io::{Read, Write};

use super::{Ansatz, Example, QnnError};

pub const CHECKPOINT_MAGIC: u32 = 0x504E_4E51;
const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_HEADER: usize = 16;

/// Labeled samples with features in [0, π].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    n_classes: usize,
    samples: Vec<(Vec<f64>, usize)>,
}

impl Dataset {
    pub fn new(
        n_features: usize,
        n_classes: usize,
        samples: Vec<(Vec<f64>, usize)>,
    ) -> Result<Self, QnnError> {
        if n_classes == 0 {
            return Err(QnnError::Dataset("no classes".into()));
        }
        for (i, (x, label)) in samples.iter().enumerate() {
            if x.len() != n_features {
                return Err(QnnError::Dataset(format!(
                    "row {i} has {} features, expected {n_features}",
                    x.len()
                )));
            }
            if *label >= n_classes {
                return Err(QnnError::BadLabel {
                    label: *label,
                    classes: n_classes,
                });
            }
            if let Some(v) = x.iter().find(|v| !(0.0..=PI).contains(*v)) {
                return Err(QnnError::Dataset(format!("row {i}: feature {v} outside [0, pi]")));
            }
        }
        Ok(Dataset {
            n_features,
            n_classes,
            samples,
        })
    }

    /// Collects the labeled examples; other kinds are rejected.
    pub fn from_examples(examples: &[Example]) -> Result<Self, QnnError> {
        let mut samples = Vec::with_capacity(examples.len());
        let mut shape = None;
        for ex in examples {
            let Example::Labeled {
                features,
                label,
                n_classes,
            } = ex
            else {
                return Err(QnnError::Dataset("only labeled examples form a dataset".into()));
            };
            let s = (features.len(), *n_classes);
            if *shape.get_or_insert(s) != s {
                return Err(QnnError::Dataset("inconsistent example shapes".into()));
            }
            samples.push((features.clone(), *label));
        }
        let (d, c) = shape.ok_or_else(|| QnnError::Dataset("no examples".into()))?;
        Dataset::new(d, c, samples)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn samples(&self) -> &[(Vec<f64>, usize)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks d ≤ n_qubits and C ≤ n_qubits.
    pub fn fits(&self, ansatz: &Ansatz) -> Result<(), QnnError> {
        if self.n_features > ansatz.n_qubits {
            return Err(QnnError::TooManyFeatures {
                features: self.n_features,
                qubits: ansatz.n_qubits,
            });
        }
        if self.n_classes > ansatz.n_qubits {
            return Err(QnnError::TooManyClasses {
                classes: self.n_classes,
                qubits: ansatz.n_qubits,
            });
        }
        Ok(())
    }

    pub fn to_examples(&self) -> Vec<Example> {
        self.samples
            .iter()
            .map(|(x, label)| Example::Labeled {
                features: x.clone(),
                label: *label,
                n_classes: self.n_classes,
            })
            .collect()
    }
}

/// Header `f0,…,f{d−1},label`. The class count is taken as max label + 1
/// unless given.
pub fn read_dataset_csv<R: Read>(reader: R, n_classes: Option<usize>) -> Result<Dataset, QnnError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| QnnError::Dataset("missing label column".into()))?;
    let d = headers.len() - 1;
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut x = Vec::with_capacity(d);
        let mut label = 0;
        for (j, field) in rec.iter().enumerate() {
            let bad = || QnnError::Dataset(format!("row {i}, column {j}: {field:?}"));
            if j == label_col {
                label = field.trim().parse().map_err(|_| bad())?;
            } else {
                x.push(field.trim().parse().map_err(|_| bad())?);
            }
        }
        samples.push((x, label));
    }
    let classes = n_classes.unwrap_or_else(|| samples.iter().map(|s| s.1 + 1).max().unwrap_or(1));
    Dataset::new(d, classes, samples)
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, writer: W) -> Result<(), QnnError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..data.n_features).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (x, label) in &data.samples {
        let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        row.push(label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint<W: Write>(ansatz: &Ansatz, params: &[f64], mut w: W) -> Result<(), QnnError> {
    ansatz.check(params)?;
    let mut buf = Vec::with_capacity(CHECKPOINT_HEADER + 8 * params.len());
    buf.extend_from_slice(&CHECKPOINT_MAGIC.to_le_bytes());
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(ansatz.n_qubits as u16).to_le_bytes());
    buf.extend_from_slice(&(ansatz.n_layers as u16).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<(Ansatz, Vec<f64>), QnnError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < CHECKPOINT_HEADER {
        return Err(QnnError::Checkpoint(format!("{} bytes", buf.len())));
    }
    let word = |at: usize| u32::from_le_bytes(buf[at..at + 4].try_into().unwrap());
    if word(0) != CHECKPOINT_MAGIC {
        return Err(QnnError::Checkpoint("bad magic".into()));
    }
    if word(4) != CHECKPOINT_VERSION {
        return Err(QnnError::Checkpoint(format!("version {}", word(4))));
    }
    let count = word(8) as usize;
    let n_qubits = u16::from_le_bytes([buf[12], buf[13]]) as usize;
    let n_layers = u16::from_le_bytes([buf[14], buf[15]]) as usize;
    let ansatz = Ansatz::new(n_qubits, n_layers)?;
    if count != ansatz.param_count() || buf.len() != CHECKPOINT_HEADER + 8 * count {
        return Err(QnnError::Checkpoint("length does not match header".into()));
    }
    let params = buf[CHECKPOINT_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((ansatz, params))
}
