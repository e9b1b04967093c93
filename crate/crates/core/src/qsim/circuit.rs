use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::{Gate, SimError, StateVector, MAX_BASIS_QUBITS};

const QUBITS_DIRECTIVE: &str = "# qubits:";

/// Ordered gate list over a fixed register width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self, SimError> {
        if n_qubits == 0 {
            return Err(SimError::EmptyRegister);
        }
        if n_qubits > MAX_BASIS_QUBITS {
            return Err(SimError::TooManyQubits(n_qubits));
        }
        Ok(Circuit {
            n_qubits,
            gates: Vec::new(),
        })
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self, SimError> {
        let mut c = Circuit::new(n_qubits)?;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), SimError> {
        gate.check_width(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<(), SimError> {
        for g in &other.gates {
            self.push(g.clone())?;
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Gate-by-gate inverse in reverse order.
    pub fn inverse(&self) -> Result<Circuit, SimError> {
        let mut gates = Vec::with_capacity(self.gates.len());
        for g in self.gates.iter().rev() {
            gates.extend(g.inverse()?);
        }
        Ok(Circuit {
            n_qubits: self.n_qubits,
            gates,
        })
    }

    /// Renders the text format, with the width recorded as a comment line.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    /// Parses the text format. The register width comes from a
    /// `# qubits: N` line when present, otherwise from the largest index.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut declared = None;
        let mut gates = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix(QUBITS_DIRECTIVE) {
                let n = rest.trim().parse::<usize>().map_err(|e| {
                    SimError::Parse(format!("line {}: bad qubit count: {e}", lineno + 1))
                })?;
                declared = Some(n);
                continue;
            }
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let gate = Gate::from_str(body).map_err(|e| match e {
                SimError::Parse(msg) => SimError::Parse(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
            gates.push(gate);
        }
        let inferred = gates.iter().map(|g| g.max_qubit() + 1).max().unwrap_or(1);
        Circuit::from_gates(declared.unwrap_or(inferred), gates)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{QUBITS_DIRECTIVE} {}", self.n_qubits)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Circuit::parse(s)
    }
}

fn check_dims(circuit: &Circuit, state: &StateVector) -> Result<(), SimError> {
    if circuit.n_qubits != state.n_qubits() {
        return Err(SimError::DimensionMismatch {
            circuit: circuit.n_qubits,
            state: state.n_qubits(),
        });
    }
    Ok(())
}

/// Applies every gate in order. Circuits containing RESET are rejected.
pub fn run_circuit(circuit: &Circuit, mut state: StateVector) -> Result<StateVector, SimError> {
    check_dims(circuit, &state)?;
    for g in &circuit.gates {
        state.apply(g)?;
    }
    Ok(state)
}

/// Applies every gate in order, drawing RESET outcomes from `rng`.
pub fn run_circuit_with_rng<R: Rng + ?Sized>(
    circuit: &Circuit,
    mut state: StateVector,
    rng: &mut R,
) -> Result<StateVector, SimError> {
    check_dims(circuit, &state)?;
    for g in &circuit.gates {
        state.apply_with_rng(g, rng)?;
    }
    Ok(state)
}
