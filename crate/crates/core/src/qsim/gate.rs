use std::fmt;
use std::str::FromStr;

use super::SimError;

/// Gate kinds understood by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    X,
    Z,
    H,
    /// Phase gate diag(1, i).
    P,
    /// diag(1, e^{iπ/4}).
    T,
    RX,
    RY,
    RZ,
    CX,
    CZ,
    CCX,
    Reset,
}

impl GateKind {
    pub const ALL: [GateKind; 12] = [
        GateKind::X,
        GateKind::Z,
        GateKind::H,
        GateKind::P,
        GateKind::T,
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::CX,
        GateKind::CZ,
        GateKind::CCX,
        GateKind::Reset,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::CX | GateKind::CZ => 2,
            GateKind::CCX => 3,
            _ => 1,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::RX | GateKind::RY | GateKind::RZ)
    }

    /// Clifford kinds for which QOTP keys update by linear bit rules.
    pub fn is_clifford(self) -> bool {
        matches!(
            self,
            GateKind::X | GateKind::Z | GateKind::H | GateKind::P | GateKind::CX | GateKind::CZ
        )
    }

    /// Kinds that map computational basis states to basis states (up to phase).
    pub fn preserves_basis(self) -> bool {
        matches!(
            self,
            GateKind::X
                | GateKind::Z
                | GateKind::P
                | GateKind::T
                | GateKind::RZ
                | GateKind::CX
                | GateKind::CZ
                | GateKind::CCX
                | GateKind::Reset
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::P => "P",
            GateKind::T => "T",
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::CX => "CX",
            GateKind::CZ => "CZ",
            GateKind::CCX => "CCX",
            GateKind::Reset => "RESET",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        GateKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == upper)
            .ok_or_else(|| SimError::UnknownGate(s.to_string()))
    }
}

/// A single gate: kind, ordered target qubits and (for rotations) an angle.
///
/// For controlled kinds the controls come first and the target last:
/// `CX c,t`, `CCX c1,c2,t`. `CZ` is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    kind: GateKind,
    targets: Vec<usize>,
    angle: Option<f64>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>, angle: Option<f64>) -> Result<Self, SimError> {
        if targets.len() != kind.arity() {
            return Err(SimError::Arity {
                kind,
                expected: kind.arity(),
                got: targets.len(),
            });
        }
        for (i, q) in targets.iter().enumerate() {
            if targets[..i].contains(q) {
                return Err(SimError::DuplicateTarget(*q));
            }
        }
        match (kind.is_rotation(), angle) {
            (true, None) => return Err(SimError::MissingAngle(kind)),
            (false, Some(_)) => return Err(SimError::UnexpectedAngle(kind)),
            (true, Some(a)) if !a.is_finite() => return Err(SimError::NonFiniteAngle),
            _ => {}
        }
        Ok(Gate {
            kind,
            targets,
            angle,
        })
    }

    pub fn x(q: usize) -> Self {
        Gate::fixed(GateKind::X, vec![q])
    }
    pub fn z(q: usize) -> Self {
        Gate::fixed(GateKind::Z, vec![q])
    }
    pub fn h(q: usize) -> Self {
        Gate::fixed(GateKind::H, vec![q])
    }
    pub fn p(q: usize) -> Self {
        Gate::fixed(GateKind::P, vec![q])
    }
    pub fn t(q: usize) -> Self {
        Gate::fixed(GateKind::T, vec![q])
    }
    pub fn reset(q: usize) -> Self {
        Gate::fixed(GateKind::Reset, vec![q])
    }
    pub fn rx(q: usize, angle: f64) -> Self {
        Gate::rotation(GateKind::RX, q, angle)
    }
    pub fn ry(q: usize, angle: f64) -> Self {
        Gate::rotation(GateKind::RY, q, angle)
    }
    pub fn rz(q: usize, angle: f64) -> Self {
        Gate::rotation(GateKind::RZ, q, angle)
    }

    /// # Panics
    /// If `control == target`.
    pub fn cx(control: usize, target: usize) -> Self {
        Gate::new(GateKind::CX, vec![control, target], None).expect("distinct CX qubits")
    }

    /// # Panics
    /// If `a == b`.
    pub fn cz(a: usize, b: usize) -> Self {
        Gate::new(GateKind::CZ, vec![a, b], None).expect("distinct CZ qubits")
    }

    /// # Panics
    /// If the three qubits are not distinct.
    pub fn ccx(c1: usize, c2: usize, target: usize) -> Self {
        Gate::new(GateKind::CCX, vec![c1, c2, target], None).expect("distinct CCX qubits")
    }

    fn fixed(kind: GateKind, targets: Vec<usize>) -> Self {
        Gate {
            kind,
            targets,
            angle: None,
        }
    }

    fn rotation(kind: GateKind, q: usize, angle: f64) -> Self {
        Gate {
            kind,
            targets: vec![q],
            angle: Some(angle),
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn angle(&self) -> Option<f64> {
        self.angle
    }

    pub fn max_qubit(&self) -> usize {
        self.targets.iter().copied().max().unwrap_or(0)
    }

    pub fn check_width(&self, n_qubits: usize) -> Result<(), SimError> {
        match self.targets.iter().find(|&&q| q >= n_qubits) {
            Some(&qubit) => Err(SimError::QubitOutOfRange { qubit, n_qubits }),
            None => Ok(()),
        }
    }

    /// Inverse gate. P⁻¹ and T⁻¹ have no kind of their own and are returned
    /// as P³ and T⁷ respectively. RESET has no inverse.
    pub fn inverse(&self) -> Result<Vec<Gate>, SimError> {
        Ok(match self.kind {
            GateKind::P => vec![self.clone(); 3],
            GateKind::T => vec![self.clone(); 7],
            GateKind::RX | GateKind::RY | GateKind::RZ => vec![Gate {
                angle: self.angle.map(|a| -a),
                ..self.clone()
            }],
            GateKind::Reset => return Err(SimError::NotInvertible(GateKind::Reset)),
            _ => vec![self.clone()],
        })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.kind)?;
        for (i, q) in self.targets.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{q}")?;
        }
        if let Some(a) = self.angle {
            write!(f, " {a:?}")?;
        }
        Ok(())
    }
}

impl FromStr for Gate {
    type Err = SimError;

    /// Parses `GATE q0[,q1[,q2]][ angle]`.
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut fields = line.split_whitespace();
        let kind: GateKind = fields
            .next()
            .ok_or_else(|| SimError::Parse("empty gate line".into()))?
            .parse()?;
        let targets = fields
            .next()
            .ok_or_else(|| SimError::Parse(format!("{kind}: missing qubit list")))?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| SimError::Parse(format!("bad qubit index {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let angle = fields
            .next()
            .map(|a| {
                a.parse::<f64>()
                    .map_err(|e| SimError::Parse(format!("bad angle {a:?}: {e}")))
            })
            .transpose()?;
        if let Some(extra) = fields.next() {
            return Err(SimError::Parse(format!("trailing field {extra:?}")));
        }
        Gate::new(kind, targets, angle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_checked() {
        assert!(matches!(
            Gate::new(GateKind::CX, vec![0], None),
            Err(SimError::Arity { .. })
        ));
        assert!(matches!(
            Gate::new(GateKind::CCX, vec![0, 1, 1], None),
            Err(SimError::DuplicateTarget(1))
        ));
    }

    #[test]
    fn angle_only_on_rotations() {
        assert!(matches!(
            Gate::new(GateKind::H, vec![0], Some(0.3)),
            Err(SimError::UnexpectedAngle(GateKind::H))
        ));
        assert!(matches!(
            Gate::new(GateKind::RY, vec![0], None),
            Err(SimError::MissingAngle(GateKind::RY))
        ));
    }

    #[test]
    fn text_round_trip() {
        for line in ["CCX 0,1,2", "RY 3 1.5707963", "RESET 4", "CZ 1,0"] {
            let g: Gate = line.parse().unwrap();
            let again: Gate = g.to_string().parse().unwrap();
            assert_eq!(g, again);
        }
        let g: Gate = "ry 3 1.5707963".parse().unwrap();
        assert_eq!(g.kind(), GateKind::RY);
        assert_eq!(g.angle(), Some(1.5707963));
    }

    #[test]
    fn bad_lines_rejected() {
        assert!("FOO 1".parse::<Gate>().is_err());
        assert!("CX 0".parse::<Gate>().is_err());
        assert!("X a".parse::<Gate>().is_err());
        assert!("X 0 1.0".parse::<Gate>().is_err());
        assert!("RZ 0 1.0 2".parse::<Gate>().is_err());
    }
}
