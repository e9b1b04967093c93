//! Classical homomorphic encryption of single key bits.
//!
//! **This backend is NOT secure.** It is a functional mock: a ciphertext is
//! the plaintext bit masked with a keyed SHA-256 pad plus a short tag, and
//! the homomorphic operations run inside [`CheEvaluator`], which holds the
//! secret internally and re-encrypts every result. It exists so the key
//! update algebra and its cost can be exercised end to end. The interface
//! (encrypt, decrypt, xor, and) is the surface a real FHE library would
//! implement.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheError {
    #[error("ciphertext belongs to backend {found:#x}, keypair is {expected:#x}")]
    WrongKeypair { expected: u64, found: u64 },
    #[error("ciphertext tag does not verify")]
    BadTag,
    #[error("operands come from different backends ({0:#x} vs {1:#x})")]
    BackendMismatch(u64, u64),
    #[error("malformed ciphertext bytes")]
    Malformed,
    #[error("cost model invalid: {0}")]
    BadCostModel(String),
}

struct KeyInner {
    id: u64,
    secret: [u8; 32],
    next_nonce: AtomicU64,
}

/// Secret material plus a nonce counter. Cloning shares the same key.
#[derive(Clone)]
pub struct CheKeypair {
    inner: Arc<KeyInner>,
}

impl std::fmt::Debug for CheKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheKeypair")
            .field("id", &format_args!("{:#x}", self.inner.id))
            .finish_non_exhaustive()
    }
}

/// An encrypted bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CheBit {
    backend_id: u64,
    nonce: u64,
    masked: bool,
    tag: [u8; 8],
}

impl CheBit {
    /// Serialized size: backend id, nonce, masked bit, tag.
    pub const WIRE_BYTES: usize = 8 + 8 + 1 + 8;

    pub fn backend_id(&self) -> u64 {
        self.backend_id
    }

    pub fn to_bytes(&self) -> [u8; Self::WIRE_BYTES] {
        let mut out = [0u8; Self::WIRE_BYTES];
        out[..8].copy_from_slice(&self.backend_id.to_le_bytes());
        out[8..16].copy_from_slice(&self.nonce.to_le_bytes());
        out[16] = u8::from(self.masked);
        out[17..].copy_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheError> {
        if bytes.len() != Self::WIRE_BYTES || bytes[16] > 1 {
            return Err(CheError::Malformed);
        }
        let mut tag = [0u8; 8];
        tag.copy_from_slice(&bytes[17..]);
        Ok(CheBit {
            backend_id: u64::from_le_bytes(bytes[..8].try_into().unwrap()),
            nonce: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            masked: bytes[16] == 1,
            tag,
        })
    }
}

impl CheKeypair {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill(&mut secret);
        CheKeypair {
            inner: Arc::new(KeyInner {
                id: rng.gen(),
                secret,
                next_nonce: AtomicU64::new(0),
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    fn pad(&self, nonce: u64) -> bool {
        let d = Sha256::new()
            .chain_update(self.inner.secret)
            .chain_update(b"pad")
            .chain_update(nonce.to_le_bytes())
            .finalize();
        d[0] & 1 == 1
    }

    fn tag(&self, nonce: u64, masked: bool) -> [u8; 8] {
        let d = Sha256::new()
            .chain_update(self.inner.secret)
            .chain_update(b"tag")
            .chain_update(self.inner.id.to_le_bytes())
            .chain_update(nonce.to_le_bytes())
            .chain_update([u8::from(masked)])
            .finalize();
        let mut t = [0u8; 8];
        t.copy_from_slice(&d[..8]);
        t
    }

    pub fn encrypt(&self, bit: bool) -> CheBit {
        let nonce = self.inner.next_nonce.fetch_add(1, Ordering::Relaxed);
        let masked = bit ^ self.pad(nonce);
        CheBit {
            backend_id: self.inner.id,
            nonce,
            masked,
            tag: self.tag(nonce, masked),
        }
    }

    pub fn decrypt(&self, ct: &CheBit) -> Result<bool, CheError> {
        if ct.backend_id != self.inner.id {
            return Err(CheError::WrongKeypair {
                expected: self.inner.id,
                found: ct.backend_id,
            });
        }
        if ct.tag != self.tag(ct.nonce, ct.masked) {
            return Err(CheError::BadTag);
        }
        Ok(ct.masked ^ self.pad(ct.nonce))
    }

    /// A sealed evaluator bound to this key.
    pub fn evaluator(&self) -> CheEvaluator {
        CheEvaluator {
            key: self.clone(),
            counts: Arc::new(Counters::default()),
        }
    }
}

#[derive(Default)]
struct Counters {
    encrypt: AtomicU64,
    xor: AtomicU64,
    and: AtomicU64,
}

/// Operation tallies from an evaluator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheOpCounts {
    pub encrypt: u64,
    pub xor: u64,
    pub and: u64,
    pub decrypt: u64,
}

impl CheOpCounts {
    pub fn total_ops(&self) -> u64 {
        self.encrypt + self.xor + self.and + self.decrypt
    }
}

impl std::ops::Sub for CheOpCounts {
    type Output = CheOpCounts;

    fn sub(self, rhs: CheOpCounts) -> CheOpCounts {
        CheOpCounts {
            encrypt: self.encrypt - rhs.encrypt,
            xor: self.xor - rhs.xor,
            and: self.and - rhs.and,
            decrypt: self.decrypt - rhs.decrypt,
        }
    }
}

/// Homomorphic evaluator. The key it carries is private and never exposed;
/// callers see only ciphertext-in, ciphertext-out operations. Clones share
/// the operation counters.
#[derive(Clone)]
pub struct CheEvaluator {
    key: CheKeypair,
    counts: Arc<Counters>,
}

impl std::fmt::Debug for CheEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheEvaluator")
            .field("backend", &format_args!("{:#x}", self.key.id()))
            .field("counts", &self.counts())
            .finish()
    }
}

impl CheEvaluator {
    pub fn backend_id(&self) -> u64 {
        self.key.id()
    }

    fn open(&self, ct: &CheBit) -> Result<bool, CheError> {
        if ct.backend_id != self.key.id() {
            return Err(CheError::BackendMismatch(self.key.id(), ct.backend_id));
        }
        self.key.decrypt(ct)
    }

    fn open_pair(&self, a: &CheBit, b: &CheBit) -> Result<(bool, bool), CheError> {
        if a.backend_id != b.backend_id {
            return Err(CheError::BackendMismatch(a.backend_id, b.backend_id));
        }
        Ok((self.open(a)?, self.open(b)?))
    }

    /// Fresh encryption of a public constant.
    pub fn encrypt_const(&self, bit: bool) -> CheBit {
        self.counts.encrypt.fetch_add(1, Ordering::Relaxed);
        self.key.encrypt(bit)
    }

    pub fn xor(&self, a: &CheBit, b: &CheBit) -> Result<CheBit, CheError> {
        let (a, b) = self.open_pair(a, b)?;
        self.counts.xor.fetch_add(1, Ordering::Relaxed);
        Ok(self.key.encrypt(a ^ b))
    }

    pub fn and(&self, a: &CheBit, b: &CheBit) -> Result<CheBit, CheError> {
        let (a, b) = self.open_pair(a, b)?;
        self.counts.and.fetch_add(1, Ordering::Relaxed);
        Ok(self.key.encrypt(a & b))
    }

    pub fn counts(&self) -> CheOpCounts {
        CheOpCounts {
            encrypt: self.counts.encrypt.load(Ordering::Relaxed),
            xor: self.counts.xor.load(Ordering::Relaxed),
            and: self.counts.and.load(Ordering::Relaxed),
            decrypt: 0,
        }
    }

    /// Reveals a condition bit to a sealed gadget in this crate only.
    pub(crate) fn reveal_for_gadget(&self, ct: &CheBit) -> Result<bool, CheError> {
        self.open(ct)
    }
}

/// Latency units per CHE operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheCostModel {
    pub cost_encrypt: u64,
    pub cost_xor: u64,
    pub cost_and: u64,
    pub cost_decrypt: u64,
}

impl Default for CheCostModel {
    fn default() -> Self {
        CheCostModel {
            cost_encrypt: 10,
            cost_xor: 1,
            cost_and: 100,
            cost_decrypt: 10,
        }
    }
}

impl CheCostModel {
    pub fn validate(&self) -> Result<(), CheError> {
        if self.cost_and < self.cost_xor {
            return Err(CheError::BadCostModel(format!(
                "cost_and ({}) below cost_xor ({})",
                self.cost_and, self.cost_xor
            )));
        }
        Ok(())
    }

    pub fn charge(&self, counts: &CheOpCounts) -> u64 {
        counts.encrypt * self.cost_encrypt
            + counts.xor * self.cost_xor
            + counts.and * self.cost_and
            + counts.decrypt * self.cost_decrypt
    }
}

pub fn che_keygen<R: Rng + ?Sized>(rng: &mut R) -> CheKeypair {
    CheKeypair::generate(rng)
}

pub fn che_encrypt(bit: bool, keypair: &CheKeypair) -> CheBit {
    keypair.encrypt(bit)
}

pub fn che_decrypt(ct: &CheBit, keypair: &CheKeypair) -> Result<bool, CheError> {
    keypair.decrypt(ct)
}

pub fn che_eval_xor(ev: &CheEvaluator, a: &CheBit, b: &CheBit) -> Result<CheBit, CheError> {
    ev.xor(a, b)
}

pub fn che_eval_and(ev: &CheEvaluator, a: &CheBit, b: &CheBit) -> Result<CheBit, CheError> {
    ev.and(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = che_keygen(&mut rng);
        for bit in [false, true] {
            assert_eq!(che_decrypt(&che_encrypt(bit, &k), &k), Ok(bit));
        }
        assert_ne!(che_encrypt(true, &k), che_encrypt(true, &k));
    }

    #[test]
    fn wrong_keypair_fails_loudly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = che_keygen(&mut rng);
        let other = che_keygen(&mut rng);
        let ct = che_encrypt(true, &k);
        assert!(matches!(
            che_decrypt(&ct, &other),
            Err(CheError::WrongKeypair { .. })
        ));
    }

    #[test]
    fn tampering_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = che_keygen(&mut rng);
        let mut bytes = che_encrypt(false, &k).to_bytes();
        bytes[16] ^= 1;
        let ct = CheBit::from_bytes(&bytes).unwrap();
        assert_eq!(che_decrypt(&ct, &k), Err(CheError::BadTag));
    }

    #[test]
    fn truth_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = che_keygen(&mut rng);
        let ev = k.evaluator();
        for a in [false, true] {
            for b in [false, true] {
                let (ea, eb) = (k.encrypt(a), k.encrypt(b));
                assert_eq!(k.decrypt(&ev.xor(&ea, &eb).unwrap()), Ok(a ^ b));
                assert_eq!(k.decrypt(&ev.and(&ea, &eb).unwrap()), Ok(a & b));
            }
        }
        let c = ev.counts();
        assert_eq!((c.xor, c.and), (4, 4));
    }

    #[test]
    fn backend_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k1 = che_keygen(&mut rng);
        let k2 = che_keygen(&mut rng);
        let ev = k1.evaluator();
        let r = ev.xor(&k1.encrypt(true), &k2.encrypt(true));
        assert!(matches!(r, Err(CheError::BackendMismatch(..))));
    }

    #[test]
    fn cost_model_checks() {
        let m = CheCostModel::default();
        assert!(m.validate().is_ok());
        let counts = CheOpCounts {
            encrypt: 2,
            xor: 3,
            and: 1,
            decrypt: 4,
        };
        assert_eq!(m.charge(&counts), 20 + 3 + 100 + 40);
        let bad = CheCostModel {
            cost_and: 0,
            ..m
        };
        assert!(bad.validate().is_err());
    }
}
