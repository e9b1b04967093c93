use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use rand::Rng;

use super::{Gate, GateKind, SimError, StateVector, MAX_BASIS_QUBITS};

/// A computational basis state with a global phase that is a multiple of π/4.
///
/// Closed under X, Z, P, T, CX, CZ, CCX and RESET, which is all the adder and
/// the QOTP need. Registers up to 64 qubits are tracked without allocating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisState {
    n_qubits: usize,
    bits: u64,
    /// Phase in units of π/4, modulo 8.
    phase: u8,
}

impl BasisState {
    pub fn new(n_qubits: usize, bits: u64) -> Result<Self, SimError> {
        if n_qubits == 0 {
            return Err(SimError::EmptyRegister);
        }
        if n_qubits > MAX_BASIS_QUBITS {
            return Err(SimError::TooManyQubits(n_qubits));
        }
        if n_qubits < 64 && bits >> n_qubits != 0 {
            return Err(SimError::QubitOutOfRange {
                qubit: 63 - bits.leading_zeros() as usize,
                n_qubits,
            });
        }
        Ok(BasisState {
            n_qubits,
            bits,
            phase: 0,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn bit(&self, q: usize) -> bool {
        self.bits >> q & 1 == 1
    }

    /// Global phase in units of π/4.
    pub fn phase_eighths(&self) -> u8 {
        self.phase
    }

    pub fn phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, FRAC_PI_4 * f64::from(self.phase))
    }

    fn add_phase(&mut self, eighths: u8) {
        self.phase = (self.phase + eighths) % 8;
    }

    /// Applies the gate if it keeps the state in the basis. Returns `false`
    /// (leaving the state untouched) for H and rotations.
    pub fn try_apply(&mut self, gate: &Gate) -> Result<bool, SimError> {
        gate.check_width(self.n_qubits)?;
        let t = gate.targets();
        match gate.kind() {
            GateKind::X => self.bits ^= 1 << t[0],
            GateKind::Z => {
                if self.bit(t[0]) {
                    self.add_phase(4);
                }
            }
            GateKind::P => {
                if self.bit(t[0]) {
                    self.add_phase(2);
                }
            }
            GateKind::T => {
                if self.bit(t[0]) {
                    self.add_phase(1);
                }
            }
            GateKind::CX => {
                if self.bit(t[0]) {
                    self.bits ^= 1 << t[1];
                }
            }
            GateKind::CCX => {
                if self.bit(t[0]) && self.bit(t[1]) {
                    self.bits ^= 1 << t[2];
                }
            }
            GateKind::CZ => {
                if self.bit(t[0]) && self.bit(t[1]) {
                    self.add_phase(4);
                }
            }
            GateKind::Reset => self.bits &= !(1u64 << t[0]),
            GateKind::H | GateKind::RX | GateKind::RY | GateKind::RZ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_dense(&self) -> Result<StateVector, SimError> {
        let sv = StateVector::basis(self.n_qubits, 0)?;
        let mut amps = sv.into_amplitudes();
        amps[0] = Complex64::new(0.0, 0.0);
        amps[self.bits as usize] = self.phase();
        StateVector::from_amplitudes(amps)
    }

    /// Low `n_low` qubits, requiring the rest to be 0.
    pub fn extract_low(&self, n_low: usize) -> Result<BasisState, SimError> {
        if n_low == 0 || n_low > self.n_qubits {
            return Err(SimError::QubitOutOfRange {
                qubit: n_low,
                n_qubits: self.n_qubits,
            });
        }
        if n_low < 64 && self.bits >> n_low != 0 {
            return Err(SimError::NotProduct((n_low..self.n_qubits).collect()));
        }
        Ok(BasisState {
            n_qubits: n_low,
            bits: self.bits,
            phase: self.phase,
        })
    }

    /// `self` on the low qubits, `high` above.
    pub fn tensor(&self, high: &BasisState) -> Result<BasisState, SimError> {
        let n = self.n_qubits + high.n_qubits;
        if n > MAX_BASIS_QUBITS {
            return Err(SimError::TooManyQubits(n));
        }
        Ok(BasisState {
            n_qubits: n,
            bits: self.bits | high.bits << self.n_qubits,
            phase: (self.phase + high.phase) % 8,
        })
    }
}

/// A register that stays on the basis fast path until a gate forces a dense
/// representation.
#[derive(Debug, Clone, PartialEq)]
pub enum QState {
    Basis(BasisState),
    Dense(StateVector),
}

impl QState {
    pub fn basis(n_qubits: usize, bits: u64) -> Result<Self, SimError> {
        Ok(QState::Basis(BasisState::new(n_qubits, bits)?))
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            QState::Basis(b) => b.n_qubits(),
            QState::Dense(s) => s.n_qubits(),
        }
    }

    pub fn as_basis(&self) -> Option<&BasisState> {
        match self {
            QState::Basis(b) => Some(b),
            QState::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> Result<StateVector, SimError> {
        match self {
            QState::Basis(b) => b.to_dense(),
            QState::Dense(s) => Ok(s.clone()),
        }
    }

    /// The basis index if the state is a basis state (up to phase).
    pub fn basis_index(&self) -> Option<u64> {
        match self {
            QState::Basis(b) => Some(b.bits()),
            QState::Dense(s) => s
                .amplitudes()
                .iter()
                .position(|a| a.norm_sqr() > 1.0 - 1e-9)
                .map(|i| i as u64),
        }
    }

    pub fn apply<R: Rng + ?Sized>(&mut self, gate: &Gate, rng: &mut R) -> Result<(), SimError> {
        if let QState::Basis(b) = self {
            if b.try_apply(gate)? {
                return Ok(());
            }
            *self = QState::Dense(b.to_dense()?);
        }
        match self {
            QState::Dense(s) => s.apply_with_rng(gate, rng),
            QState::Basis(_) => unreachable!(),
        }
    }

    pub fn probability_one(&self, q: usize) -> Result<f64, SimError> {
        match self {
            QState::Basis(b) => {
                if q >= b.n_qubits() {
                    return Err(SimError::QubitOutOfRange {
                        qubit: q,
                        n_qubits: b.n_qubits(),
                    });
                }
                Ok(if b.bit(q) { 1.0 } else { 0.0 })
            }
            QState::Dense(s) => s.probability_one(q),
        }
    }

    pub fn tensor(&self, high: &QState) -> Result<QState, SimError> {
        match (self, high) {
            (QState::Basis(a), QState::Basis(b)) => Ok(QState::Basis(a.tensor(b)?)),
            _ => Ok(QState::Dense(self.to_dense()?.tensor(&high.to_dense()?)?)),
        }
    }

    pub fn extract_low(&self, n_low: usize) -> Result<QState, SimError> {
        match self {
            QState::Basis(b) => Ok(QState::Basis(b.extract_low(n_low)?)),
            QState::Dense(s) => Ok(QState::Dense(s.extract_low(n_low)?)),
        }
    }
}

impl From<StateVector> for QState {
    fn from(s: StateVector) -> Self {
        QState::Dense(s)
    }
}

impl From<BasisState> for QState {
    fn from(b: BasisState) -> Self {
        QState::Basis(b)
    }
}
