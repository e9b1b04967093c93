//! Aggregation server. It sees ciphertext registers, the public sparse
//! index pattern, CHE-encrypted key material and sealed gadgets. Nothing in
//! this file can reach a plaintext pad key or an unencrypted update.

use rand::Rng;

use crate::aggadder::{aggregate_encrypted, AdderCircuit, GateCostModel};
use crate::che::{CheBit, CheCostModel, CheEvaluator};
use crate::qhe::{
    CheKeyView, EncryptedKey, GadgetOracle, KeyId, QCiphertext, ScheduleGadget, ScheduledKeyView,
};
use crate::qsim::QState;
use crate::terngrad;

use super::FedError;

/// Bytes charged per transmitted qubit.
pub const QUBIT_WIRE_BYTES: u64 = 1;

/// Which parameters an upload carries.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// Ternary wire message with the signs cleared: the server learns the
    /// non-zero positions, the digits travel only in the registers.
    Sparse(Vec<u8>),
    /// Every parameter, in order.
    Dense,
}

#[derive(Debug, Clone)]
pub struct Upload {
    pub client_id: usize,
    pub layout: Layout,
    /// One register per carried parameter, in index order.
    pub registers: Vec<QCiphertext>,
    /// Baseline only: each register's key under CHE.
    pub keys: Option<Vec<EncryptedKey>>,
}

impl Upload {
    pub fn wire_bytes(&self) -> u64 {
        let layout = match &self.layout {
            Layout::Sparse(b) => b.len() as u64,
            Layout::Dense => 0,
        };
        let regs: u64 = self
            .registers
            .iter()
            .map(|r| r.n_qubits() as u64 * QUBIT_WIRE_BYTES)
            .sum();
        let keys: u64 = self
            .keys
            .iter()
            .flatten()
            .map(|k| k.wire_bytes() as u64)
            .sum();
        layout + regs + keys
    }
}

/// Result broadcast to every client.
#[derive(Debug, Clone)]
pub struct Broadcast {
    pub registers: Vec<QCiphertext>,
    /// Baseline only: the updated accumulator keys under CHE.
    pub keys: Option<Vec<EncryptedKey>>,
}

impl Broadcast {
    pub fn wire_bytes(&self) -> u64 {
        let regs: u64 = self
            .registers
            .iter()
            .map(|r| r.n_qubits() as u64 * QUBIT_WIRE_BYTES)
            .sum();
        let keys: u64 = self
            .keys
            .iter()
            .flatten()
            .map(|k| k.wire_bytes() as u64)
            .sum();
        regs + keys
    }
}

/// Server-side latency of one aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ServerCost {
    /// Adder passes, scratch resets and gadget corrections.
    pub aggregate: f64,
    /// Homomorphic key updates.
    pub che_compute: f64,
    pub gadget_calls: u64,
    pub adder_passes: u64,
}

#[derive(Debug)]
pub struct ServerState {
    adder: AdderCircuit,
    n_params: usize,
    gate_costs: GateCostModel,
    che_costs: CheCostModel,
    evaluator: Option<CheEvaluator>,
    gadget_latency: u64,
    pass_latency: f64,
}

impl ServerState {
    /// `evaluator` is present in the baseline workflow only.
    pub fn new(
        adder: AdderCircuit,
        n_params: usize,
        gate_costs: GateCostModel,
        che_costs: CheCostModel,
        evaluator: Option<CheEvaluator>,
        gadget_latency: u64,
    ) -> Self {
        let resets = adder.extra_qubits() + adder.width;
        let pass_latency = gate_costs.latency(&adder.circuit) + gate_costs.latency_reset * resets as f64;
        ServerState {
            adder,
            n_params,
            gate_costs,
            che_costs,
            evaluator,
            gadget_latency,
            pass_latency,
        }
    }

    pub fn adder(&self) -> &AdderCircuit {
        &self.adder
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gadget_latency(&self) -> u64 {
        self.gadget_latency
    }

    pub fn gate_costs(&self) -> &GateCostModel {
        &self.gate_costs
    }

    /// Parameter indices each upload carries.
    fn indices(&self, up: &Upload) -> Result<Vec<usize>, FedError> {
        let idx: Vec<usize> = match &up.layout {
            Layout::Dense => (0..self.n_params).collect(),
            Layout::Sparse(bytes) => {
                let msg = terngrad::deserialize(bytes)?;
                if msg.param_count as usize != self.n_params {
                    return Err(FedError::Protocol(format!(
                        "client {} sent {} parameters, expected {}",
                        up.client_id, msg.param_count, self.n_params
                    )));
                }
                msg.entries.iter().map(|&(i, _)| i as usize).collect()
            }
        };
        if idx.len() != up.registers.len() {
            return Err(FedError::Protocol(format!(
                "client {} sent {} registers for {} indices",
                up.client_id,
                up.registers.len(),
                idx.len()
            )));
        }
        if let Some(keys) = &up.keys {
            if keys.len() != idx.len() {
                return Err(FedError::Protocol(format!(
                    "client {} sent {} keys for {} registers",
                    up.client_id,
                    keys.len(),
                    idx.len()
                )));
            }
        }
        Ok(idx)
    }

    /// Number of contributions per parameter. Public: the clients need it
    /// to provision the correction schedule.
    pub fn participation(&self, uploads: &[Upload]) -> Result<Vec<usize>, FedError> {
        let mut counts = vec![0; self.n_params];
        for up in uploads {
            for i in self.indices(up)? {
                counts[i] += 1;
            }
        }
        Ok(counts)
    }

    fn check_order(uploads: &[Upload]) -> Result<(), FedError> {
        if uploads.windows(2).any(|w| w[0].client_id >= w[1].client_id) {
            return Err(FedError::Protocol("uploads not in ascending client order".into()));
        }
        Ok(())
    }

    /// Groups registers (and keys) by parameter, clients in upload order.
    #[allow(clippy::type_complexity)]
    fn collate(
        &self,
        uploads: Vec<Upload>,
    ) -> Result<Vec<Vec<(QCiphertext, Option<EncryptedKey>)>>, FedError> {
        Self::check_order(&uploads)?;
        let mut per_param: Vec<Vec<_>> = vec![Vec::new(); self.n_params];
        for up in uploads {
            let idx = self.indices(&up)?;
            let mut keys = up.keys.map(|k| k.into_iter());
            for (i, reg) in idx.into_iter().zip(up.registers) {
                if reg.n_qubits() != self.adder.width {
                    return Err(FedError::Protocol(format!(
                        "client {} register has {} qubits, adder width is {}",
                        up.client_id,
                        reg.n_qubits(),
                        self.adder.width
                    )));
                }
                let key = keys.as_mut().and_then(|k| k.next());
                per_param[i].push((reg, key));
            }
        }
        Ok(per_param)
    }

    fn fresh_accumulator(&self, i: usize) -> Result<QCiphertext, FedError> {
        Ok(QCiphertext {
            state: QState::basis(self.adder.width, 0)?,
            key_id: KeyId(i as u64),
        })
    }

    /// Baseline: key updates run under CHE on the uploaded key material.
    pub fn aggregate_che<R: Rng + ?Sized>(
        &self,
        uploads: Vec<Upload>,
        rng: &mut R,
    ) -> Result<(Broadcast, ServerCost), FedError> {
        let ev = self
            .evaluator
            .clone()
            .ok_or_else(|| FedError::Protocol("server has no CHE evaluator".into()))?;
        let before = ev.counts();
        let gadget = crate::qhe::CheGadget::new(ev.clone(), self.gadget_latency);
        let mut registers = Vec::with_capacity(self.n_params);
        let mut keys = Vec::with_capacity(self.n_params);
        let mut passes = 0;
        for (i, ops) in self.collate(uploads)?.into_iter().enumerate() {
            let mut operands = Vec::with_capacity(ops.len());
            for (ct, key) in ops {
                let key = key.ok_or_else(|| FedError::Protocol("missing key material".into()))?;
                check_backend(&key, &ev)?;
                operands.push((ct, CheKeyView::new(key, ev.clone())));
            }
            passes += operands.len() as u64;
            let acc_view = CheKeyView::zeros(self.adder.width, ev.clone());
            let out = aggregate_encrypted(
                &self.adder,
                self.fresh_accumulator(i)?,
                acc_view,
                operands,
                &gadget,
                rng,
            )?;
            registers.push(out.acc);
            keys.push(out.view.into_encrypted_key());
        }
        let stats = gadget.stats();
        let spent = ev.counts() - before;
        let cost = ServerCost {
            aggregate: passes as f64 * self.pass_latency + stats.latency_units as f64,
            che_compute: self.che_costs.charge(&spent) as f64,
            gadget_calls: stats.calls,
            adder_passes: passes,
        };
        Ok((
            Broadcast {
                registers,
                keys: Some(keys),
            },
            cost,
        ))
    }

    /// Optimized workflow: one provisioned gadget per parameter, no key
    /// material at the server.
    pub fn aggregate_scheduled<R: Rng + ?Sized>(
        &self,
        uploads: Vec<Upload>,
        gadgets: &[ScheduleGadget],
        rng: &mut R,
    ) -> Result<(Broadcast, ServerCost), FedError> {
        if gadgets.len() != self.n_params {
            return Err(FedError::Protocol(format!(
                "{} gadgets for {} parameters",
                gadgets.len(),
                self.n_params
            )));
        }
        let w = self.adder.width;
        let mut registers = Vec::with_capacity(self.n_params);
        let mut passes = 0;
        let mut latency = 0;
        let mut calls = 0;
        for (i, ops) in self.collate(uploads)?.into_iter().enumerate() {
            if ops.iter().any(|(_, k)| k.is_some()) {
                return Err(FedError::Protocol("unexpected key material".into()));
            }
            let operands: Vec<_> = ops
                .into_iter()
                .map(|(ct, _)| (ct, ScheduledKeyView::new(w)))
                .collect();
            passes += operands.len() as u64;
            let out = aggregate_encrypted(
                &self.adder,
                self.fresh_accumulator(i)?,
                ScheduledKeyView::new(w),
                operands,
                &gadgets[i],
                rng,
            )?;
            gadgets[i].finish()?;
            let s = gadgets[i].stats();
            latency += s.latency_units;
            calls += s.calls;
            registers.push(out.acc);
        }
        let cost = ServerCost {
            aggregate: passes as f64 * self.pass_latency + latency as f64,
            che_compute: 0.0,
            gadget_calls: calls,
            adder_passes: passes,
        };
        Ok((
            Broadcast {
                registers,
                keys: None,
            },
            cost,
        ))
    }
}

fn check_backend(key: &EncryptedKey, ev: &CheEvaluator) -> Result<(), FedError> {
    let foreign = key
        .z
        .iter()
        .chain(&key.x)
        .any(|b: &CheBit| b.backend_id() != ev.backend_id());
    if foreign {
        return Err(FedError::Protocol("key material under a foreign CHE key".into()));
    }
    Ok(())
}
