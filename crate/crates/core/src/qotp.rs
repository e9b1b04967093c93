//! Quantum one-time pad: per-qubit Pauli masks Z^z X^x.
//!
//! Encryption applies X^{x_i} and then Z^{z_i} to every qubit i. Decryption
//! applies the adjoint, Z first and X second.

use rand::Rng;
use thiserror::Error;

use crate::qsim::{Gate, QState, SimError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QotpError {
    #[error("key must cover at least one qubit")]
    EmptyKey,
    #[error("key covers {key} qubits but the state has {state}")]
    DimensionMismatch { key: usize, state: usize },
    #[error("bad hex key: {0}")]
    Hex(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Per-qubit (z, x) key bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliKey {
    z: Vec<bool>,
    x: Vec<bool>,
}

impl PauliKey {
    pub fn zeros(n: usize) -> Self {
        PauliKey {
            z: vec![false; n],
            x: vec![false; n],
        }
    }

    pub fn from_bits(z: Vec<bool>, x: Vec<bool>) -> Result<Self, QotpError> {
        if z.is_empty() {
            return Err(QotpError::EmptyKey);
        }
        if z.len() != x.len() {
            return Err(QotpError::DimensionMismatch {
                key: z.len(),
                state: x.len(),
            });
        }
        Ok(PauliKey { z, x })
    }

    pub fn n_qubits(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self, q: usize) -> bool {
        self.z[q]
    }

    pub fn x(&self, q: usize) -> bool {
        self.x[q]
    }

    pub fn z_bits(&self) -> &[bool] {
        &self.z
    }

    pub fn x_bits(&self) -> &[bool] {
        &self.x
    }

    pub fn set(&mut self, q: usize, z: bool, x: bool) {
        self.z[q] = z;
        self.x[q] = x;
    }

    pub fn set_z(&mut self, q: usize, v: bool) {
        self.z[q] = v;
    }

    pub fn set_x(&mut self, q: usize, v: bool) {
        self.x[q] = v;
    }

    pub fn is_zero(&self) -> bool {
        !self.z.iter().chain(&self.x).any(|&b| b)
    }

    /// Bitwise XOR of two keys, the key of composing the two pads.
    pub fn xor(&self, other: &PauliKey) -> Result<PauliKey, QotpError> {
        if self.n_qubits() != other.n_qubits() {
            return Err(QotpError::DimensionMismatch {
                key: other.n_qubits(),
                state: self.n_qubits(),
            });
        }
        Ok(PauliKey {
            z: self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect(),
            x: self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect(),
        })
    }

    /// Key over the qubits of `self` followed by those of `high`.
    pub fn concat(&self, high: &PauliKey) -> PauliKey {
        let mut out = self.clone();
        out.z.extend_from_slice(&high.z);
        out.x.extend_from_slice(&high.x);
        out
    }

    /// Qubits `range` of the key.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PauliKey {
        PauliKey {
            z: self.z[range.clone()].to_vec(),
            x: self.x[range].to_vec(),
        }
    }

    /// (z, x) as hex strings. Bit q lives in byte q/8 at position q%8 and
    /// byte 0 is printed first, so qubit 0 is the low bit of the first byte.
    pub fn to_hex(&self) -> (String, String) {
        (bits_to_hex(&self.z), bits_to_hex(&self.x))
    }

    pub fn from_hex(z: &str, x: &str, n_qubits: usize) -> Result<Self, QotpError> {
        PauliKey::from_bits(hex_to_bits(z, n_qubits)?, hex_to_bits(x, n_qubits)?)
    }
}

fn bits_to_hex(bits: &[bool]) -> String {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    hex::encode(bytes)
}

fn hex_to_bits(s: &str, n: usize) -> Result<Vec<bool>, QotpError> {
    let bytes = hex::decode(s).map_err(|e| QotpError::Hex(e.to_string()))?;
    if bytes.len() != n.div_ceil(8) {
        return Err(QotpError::Hex(format!(
            "{} bytes for {n} qubits",
            bytes.len()
        )));
    }
    let bits: Vec<bool> = (0..bytes.len() * 8)
        .map(|i| bytes[i / 8] >> (i % 8) & 1 == 1)
        .collect();
    if bits[n..].iter().any(|&b| b) {
        return Err(QotpError::Hex("padding bits set".into()));
    }
    Ok(bits[..n].to_vec())
}

/// Uniformly random key on `n` qubits.
pub fn keygen<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PauliKey, QotpError> {
    if n == 0 {
        return Err(QotpError::EmptyKey);
    }
    let z = (0..n).map(|_| rng.gen::<bool>()).collect();
    let x = (0..n).map(|_| rng.gen::<bool>()).collect();
    Ok(PauliKey { z, x })
}

fn check(key: &PauliKey, n: usize) -> Result<(), QotpError> {
    if key.n_qubits() != n {
        return Err(QotpError::DimensionMismatch {
            key: key.n_qubits(),
            state: n,
        });
    }
    Ok(())
}

/// The pad as a gate sequence: X layer, then Z layer.
pub fn pad_gates(key: &PauliKey) -> Vec<Gate> {
    let xs = (0..key.n_qubits()).filter(|&q| key.x(q)).map(Gate::x);
    let zs = (0..key.n_qubits()).filter(|&q| key.z(q)).map(Gate::z);
    xs.chain(zs).collect()
}

/// Inverse pad: Z layer, then X layer.
pub fn unpad_gates(key: &PauliKey) -> Vec<Gate> {
    let mut gates = pad_gates(key);
    gates.reverse();
    gates
}

pub fn qotp_encrypt(mut state: StateVector, key: &PauliKey) -> Result<StateVector, QotpError> {
    check(key, state.n_qubits())?;
    for g in pad_gates(key) {
        state.apply(&g)?;
    }
    Ok(state)
}

pub fn qotp_decrypt(mut state: StateVector, key: &PauliKey) -> Result<StateVector, QotpError> {
    check(key, state.n_qubits())?;
    for g in unpad_gates(key) {
        state.apply(&g)?;
    }
    Ok(state)
}

/// Encrypts a register that may still be on the basis fast path.
pub fn encrypt_qstate(state: &mut QState, key: &PauliKey) -> Result<(), QotpError> {
    check(key, state.n_qubits())?;
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    for g in pad_gates(key) {
        state.apply(&g, &mut no_rng)?;
    }
    Ok(())
}

pub fn decrypt_qstate(state: &mut QState, key: &PauliKey) -> Result<(), QotpError> {
    check(key, state.n_qubits())?;
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    for g in unpad_gates(key) {
        state.apply(&g, &mut no_rng)?;
    }
    Ok(())
}
