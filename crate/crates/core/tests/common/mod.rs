#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;
use qfl_core::qsim::{Gate, GateKind, StateVector};

pub type Matrix = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2×2 matrix acting on the target of a gate (the X block for controlled-X).
fn local_matrix(gate: &Gate) -> [[Complex64; 2]; 2] {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let half = gate.angle().unwrap_or(0.0) / 2.0;
    match gate.kind() {
        GateKind::X | GateKind::CX | GateKind::CCX => [[z, o], [o, z]],
        GateKind::Z | GateKind::CZ => [[o, z], [z, -o]],
        GateKind::H => {
            let h = c(FRAC_1_SQRT_2, 0.0);
            [[h, h], [h, -h]]
        }
        GateKind::P => [[o, z], [z, c(0.0, 1.0)]],
        GateKind::T => [[o, z], [z, Complex64::from_polar(1.0, FRAC_PI_4)]],
        GateKind::RX => [
            [c(half.cos(), 0.0), c(0.0, -half.sin())],
            [c(0.0, -half.sin()), c(half.cos(), 0.0)],
        ],
        GateKind::RY => [
            [c(half.cos(), 0.0), c(-half.sin(), 0.0)],
            [c(half.sin(), 0.0), c(half.cos(), 0.0)],
        ],
        GateKind::RZ => [
            [Complex64::from_polar(1.0, -half), z],
            [z, Complex64::from_polar(1.0, half)],
        ],
        GateKind::Reset => panic!("RESET is not unitary"),
    }
}

/// Full 2^n × 2^n unitary, built entry by entry from the index definition
/// of a (multi-)controlled single-qubit operator.
pub fn gate_matrix(gate: &Gate, n: usize) -> Matrix {
    let dim = 1usize << n;
    let t = gate.targets();
    let (controls, target) = t.split_at(t.len() - 1);
    let target = target[0];
    let m = local_matrix(gate);
    let mut out = vec![vec![c(0.0, 0.0); dim]; dim];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            let rest_equal = (i | 1 << target) == (j | 1 << target);
            if !rest_equal {
                continue;
            }
            let active = controls.iter().all(|&q| j >> q & 1 == 1);
            *entry = if active {
                m[i >> target & 1][j >> target & 1]
            } else if i == j {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            };
        }
    }
    out
}

pub fn identity(n: usize) -> Matrix {
    let dim = 1usize << n;
    (0..dim)
        .map(|i| (0..dim).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let d = a.len();
    let mut out = vec![vec![c(0.0, 0.0); d]; d];
    for i in 0..d {
        for k in 0..d {
            if a[i][k] == c(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Product of gate matrices, last gate leftmost.
pub fn circuit_matrix(gates: &[Gate], n: usize) -> Matrix {
    gates
        .iter()
        .fold(identity(n), |acc, g| matmul(&gate_matrix(g, n), &acc))
}

pub fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        .norm()
}

pub fn state_from(v: Vec<Complex64>) -> StateVector {
    StateVector::from_amplitudes(v).unwrap()
}
