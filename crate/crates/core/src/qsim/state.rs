use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Gate, GateKind, SimError, MAX_QUBITS, NORM_TOL};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Normalized amplitude vector of an n-qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_size(n: usize) -> Result<(), SimError> {
    if n == 0 {
        Err(SimError::EmptyRegister)
    } else if n > MAX_QUBITS {
        Err(SimError::TooManyQubits(n))
    } else {
        Ok(())
    }
}

impl StateVector {
    /// |0…0⟩ on `n` qubits.
    pub fn zero(n: usize) -> Result<Self, SimError> {
        Self::basis(n, 0)
    }

    /// Computational basis state |index⟩.
    pub fn basis(n: usize, index: usize) -> Result<Self, SimError> {
        check_size(n)?;
        let dim = 1usize << n;
        if index >= dim {
            return Err(SimError::QubitOutOfRange {
                qubit: usize::BITS as usize - index.leading_zeros() as usize - 1,
                n_qubits: n,
            });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(StateVector { n_qubits: n, amps })
    }

    /// Wraps an amplitude vector, checking its length and norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amps.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(SimError::BadLength(len));
        }
        let n = len.trailing_zeros() as usize;
        check_size(n)?;
        let state = StateVector { n_qubits: n, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Haar-like random state from normalized complex Gaussians.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, SimError> {
        check_size(n)?;
        let mut amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        Ok(StateVector { n_qubits: n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, q: usize) -> Result<(), SimError> {
        if q >= self.n_qubits {
            Err(SimError::QubitOutOfRange {
                qubit: q,
                n_qubits: self.n_qubits,
            })
        } else {
            Ok(())
        }
    }

    fn check_normalized(&self) -> Result<(), SimError> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            Err(SimError::NotNormalized(norm))
        } else {
            Ok(())
        }
    }

    /// Applies a unitary gate in place. RESET is rejected here because it
    /// needs a random source; see [`StateVector::apply_with_rng`].
    pub fn apply(&mut self, gate: &Gate) -> Result<(), SimError> {
        gate.check_width(self.n_qubits)?;
        let t = gate.targets();
        match gate.kind() {
            GateKind::X => self.apply_x(t[0]),
            GateKind::Z => self.apply_phase(t[0], -ONE),
            GateKind::P => self.apply_phase(t[0], I),
            GateKind::T => self.apply_phase(t[0], Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)),
            GateKind::H => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_1q(t[0], [[h, h], [h, -h]]);
            }
            GateKind::RX => {
                let (c, s) = half_angle(gate);
                let m = Complex64::new(0.0, -s);
                self.apply_1q(t[0], [[c.into(), m], [m, c.into()]]);
            }
            GateKind::RY => {
                let (c, s) = half_angle(gate);
                self.apply_1q(t[0], [[c.into(), (-s).into()], [s.into(), c.into()]]);
            }
            GateKind::RZ => {
                let (c, s) = half_angle(gate);
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                self.apply_1q(t[0], [[lo, ZERO], [ZERO, hi]]);
            }
            GateKind::CX => self.apply_controlled_x(&t[..1], t[1]),
            GateKind::CCX => self.apply_controlled_x(&t[..2], t[2]),
            GateKind::CZ => {
                let mask = (1usize << t[0]) | (1usize << t[1]);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
            GateKind::Reset => return Err(SimError::ResetNeedsRng),
        }
        Ok(())
    }

    /// Like [`StateVector::apply`] but also handles RESET.
    pub fn apply_with_rng<R: Rng + ?Sized>(
        &mut self,
        gate: &Gate,
        rng: &mut R,
    ) -> Result<(), SimError> {
        if gate.kind() == GateKind::Reset {
            gate.check_width(self.n_qubits)?;
            self.reset(gate.targets()[0], rng)
        } else {
            self.apply(gate)
        }
    }

    fn apply_x(&mut self, q: usize) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                self.amps.swap(i, i | bit);
            }
        }
    }

    fn apply_phase(&mut self, q: usize, phase: Complex64) {
        let bit = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *a *= phase;
            }
        }
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_controlled_x(&mut self, controls: &[usize], target: usize) {
        let cmask = controls.iter().fold(0usize, |m, &c| m | (1 << c));
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cmask == cmask && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
    }

    /// Probability of measuring qubit `q` as 1.
    pub fn probability_one(&self, q: usize) -> Result<f64, SimError> {
        self.check_qubit(q)?;
        let bit = 1usize << q;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projectively measures qubit `q`, then flips it to |0⟩ if needed.
    pub fn reset<R: Rng + ?Sized>(&mut self, q: usize, rng: &mut R) -> Result<(), SimError> {
        let p1 = self.probability_one(q)?;
        let outcome_one = if p1 <= NORM_TOL {
            false
        } else if p1 >= 1.0 - NORM_TOL {
            true
        } else {
            rng.gen::<f64>() < p1
        };
        let bit = 1usize << q;
        let keep_norm = if outcome_one { p1 } else { 1.0 - p1 };
        let scale = 1.0 / keep_norm.sqrt();
        for i in 0..self.amps.len() {
            if i & bit != 0 {
                continue;
            }
            let kept = if outcome_one {
                self.amps[i | bit]
            } else {
                self.amps[i]
            };
            self.amps[i] = kept * scale;
            self.amps[i | bit] = ZERO;
        }
        Ok(())
    }

    /// Exact ⟨Z⟩ on qubit `q`.
    pub fn expectation_z(&self, q: usize) -> Result<f64, SimError> {
        Ok(1.0 - 2.0 * self.probability_one(q)?)
    }

    /// Samples a basis index with Born-rule probabilities.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, SimError> {
        self.check_normalized()?;
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                last_nonzero = i;
            }
            acc += p;
            if r < acc {
                return Ok(i);
            }
        }
        Ok(last_nonzero)
    }

    /// ⟨self|other⟩.
    ///
    /// # Panics
    /// If the registers differ in size.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.n_qubits, other.n_qubits, "register size mismatch");
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// True if the states agree up to global phase: |⟨a|b⟩| ≥ 1 − tol.
    pub fn approx_eq_up_to_phase(&self, other: &StateVector, tol: f64) -> bool {
        self.n_qubits == other.n_qubits && self.inner(other).norm() >= 1.0 - tol
    }

    /// Product state with `self` on the low qubits and `high` above them.
    pub fn tensor(&self, high: &StateVector) -> Result<StateVector, SimError> {
        let n = self.n_qubits + high.n_qubits;
        check_size(n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for h in &high.amps {
            for l in &self.amps {
                amps.push(l * h);
            }
        }
        Ok(StateVector { n_qubits: n, amps })
    }

    /// Returns the low `n_low` qubits, requiring every higher qubit to be |0⟩.
    pub fn extract_low(&self, n_low: usize) -> Result<StateVector, SimError> {
        check_size(n_low)?;
        if n_low > self.n_qubits {
            return Err(SimError::QubitOutOfRange {
                qubit: n_low - 1,
                n_qubits: self.n_qubits,
            });
        }
        let dim = 1usize << n_low;
        let leaked: f64 = self.amps[dim..].iter().map(|a| a.norm_sqr()).sum();
        if leaked > NORM_TOL {
            return Err(SimError::NotProduct((n_low..self.n_qubits).collect()));
        }
        Ok(StateVector {
            n_qubits: n_low,
            amps: self.amps[..dim].to_vec(),
        })
    }

    /// Dense 2^n × 2^n density matrix |ψ⟩⟨ψ|, row-major.
    pub fn density_matrix(&self) -> Vec<Complex64> {
        let d = self.amps.len();
        let mut rho = Vec::with_capacity(d * d);
        for a in &self.amps {
            for b in &self.amps {
                rho.push(a * b.conj());
            }
        }
        rho
    }
}

fn half_angle(gate: &Gate) -> (f64, f64) {
    let theta = gate.angle().unwrap_or(0.0) / 2.0;
    (theta.cos(), theta.sin())
}

/// Returns U|φ⟩ for the gate's unitary.
pub fn apply_gate(mut state: StateVector, gate: &Gate) -> Result<StateVector, SimError> {
    state.apply(gate)?;
    Ok(state)
}

/// Samples a basis index. Bit q of the result is the outcome of qubit q.
pub fn measure_all<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> Result<usize, SimError> {
    state.measure(rng)
}

/// Resets `qubit` to |0⟩ by measurement and conditional flip.
pub fn reset_qubit<R: Rng + ?Sized>(
    mut state: StateVector,
    qubit: usize,
    rng: &mut R,
) -> Result<StateVector, SimError> {
    state.reset(qubit, rng)?;
    Ok(state)
}

pub fn expectation_z(state: &StateVector, qubit: usize) -> Result<f64, SimError> {
    state.expectation_z(qubit)
}

/// |⟨a|b⟩|².
///
/// # Panics
/// If the registers differ in size.
pub fn fidelity(a: &StateVector, b: &StateVector) -> f64 {
    a.inner(b).norm_sqr()
}
