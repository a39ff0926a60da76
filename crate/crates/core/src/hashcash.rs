//! Hashcash mining, reputation computation and the reputation-cost model.

use std::fmt;

use num_rational::Ratio;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::Writer;
use crate::identity::{MarketId, PublicKey};

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest256(pub [u8; 32]);

impl Digest256 {
    pub const ZERO: Digest256 = Digest256([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256({})", self.to_hex())
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<[u8; 32]> for Digest256 {
    fn from(b: [u8; 32]) -> Self {
        Digest256(b)
    }
}

pub fn sha256(data: &[u8]) -> Digest256 {
    Digest256(Sha256::digest(data).into())
}

/// The hashcash nonce a server grinds to raise its reputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HashcashNonce(pub u64);

impl HashcashNonce {
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

/// Reputation in bits: the leading-zero count of the identity hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Reputation(u16);

impl Reputation {
    pub const MAX: Reputation = Reputation(256);

    pub fn new(bits: u32) -> Option<Self> {
        (bits <= 256).then_some(Reputation(bits as u16))
    }

    pub fn bits(self) -> u32 {
        self.0 as u32
    }
}

impl fmt::Display for Reputation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of consecutive zero bits from the most significant bit of byte 0.
pub fn leading_zero_bits(d: &Digest256) -> Reputation {
    let mut bits = 0u16;
    for byte in d.0 {
        if byte == 0 {
            bits += 8;
        } else {
            bits += byte.leading_zeros() as u16;
            break;
        }
    }
    Reputation(bits)
}

/// Bytes hashed for a reputation, excluding the nonce.
fn reputation_prefix(server_id: &PublicKey, market_id: &MarketId) -> Writer {
    let mut w = Writer::new();
    w.put_fixed(server_id.as_bytes());
    w.put_bytes(market_id.as_bytes());
    w
}

/// The digest `H(server ID || market ID || hashcash)` under canonical encoding.
pub fn reputation_digest(
    server_id: &PublicKey,
    market_id: &MarketId,
    nonce: HashcashNonce,
) -> Digest256 {
    let mut w = reputation_prefix(server_id, market_id);
    w.put_u64(nonce.0);
    sha256(w.as_slice())
}

pub fn compute_reputation(
    server_id: &PublicKey,
    market_id: &MarketId,
    nonce: HashcashNonce,
) -> Reputation {
    leading_zero_bits(&reputation_digest(server_id, market_id, nonce))
}

/// Highest target accepted by [`mine`].
pub const MAX_MINING_TARGET: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MineError {
    #[error("no nonce reached the target after {attempts} attempts")]
    Exhausted { attempts: u64 },
    #[error("target of {0} bits exceeds the mining bound of {MAX_MINING_TARGET}")]
    TargetTooHigh(u32),
}

/// Successful mining outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mined {
    pub nonce: HashcashNonce,
    pub reputation: Reputation,
    /// Hashes computed, including the successful one.
    pub attempts: u64,
}

/// Searches nonces sequentially from `start_nonce` (wrapping) for one whose
/// reputation reaches `target_bits`. Disjoint ranges may be mined in parallel.
pub fn mine(
    server_id: &PublicKey,
    market_id: &MarketId,
    target_bits: u32,
    start_nonce: u64,
    max_attempts: u64,
) -> Result<Mined, MineError> {
    if target_bits > MAX_MINING_TARGET {
        return Err(MineError::TargetTooHigh(target_bits));
    }
    let mut base = Sha256::new();
    base.update(reputation_prefix(server_id, market_id).as_slice());

    let mut nonce = start_nonce;
    for attempt in 1..=max_attempts {
        let mut h = base.clone();
        h.update(nonce.to_be_bytes());
        let rep = leading_zero_bits(&Digest256(h.finalize().into()));
        if rep.bits() >= target_bits {
            return Ok(Mined {
                nonce: HashcashNonce(nonce),
                reputation: rep,
                attempts: attempt,
            });
        }
        nonce = nonce.wrapping_add(1);
    }
    Err(MineError::Exhausted {
        attempts: max_attempts,
    })
}

/// Monetary amount expressed as an exact non-negative rational.
pub type Cost = Ratio<u128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("reputation cost for {bits} bits overflows the amount range")]
pub struct CostOverflow {
    pub bits: u32,
}

/// Prices a reputation as expected hash count times a unit price per hash.
/// The price is only valid at `timestamp`; energy prices move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReputationCostModel {
    pub hash_price: Cost,
    pub timestamp: u64,
}

impl ReputationCostModel {
    pub fn new(hash_price: Cost, timestamp: u64) -> Self {
        ReputationCostModel {
            hash_price,
            timestamp,
        }
    }

    /// Integer price per hash.
    pub fn per_hash(units: u128) -> Self {
        Self::new(Cost::from_integer(units), 0)
    }

    pub fn cost(&self, r: Reputation) -> Result<Cost, CostOverflow> {
        reputation_cost(r, self)
    }
}

/// `hash_price * 2^r`, exact.
pub fn reputation_cost(r: Reputation, model: &ReputationCostModel) -> Result<Cost, CostOverflow> {
    let overflow = CostOverflow { bits: r.bits() };
    let expected_hashes = 2u128.checked_pow(r.bits()).ok_or(overflow)?;
    let numer = model
        .hash_price
        .numer()
        .checked_mul(expected_hashes)
        .ok_or(overflow)?;
    Ok(Cost::new(numer, *model.hash_price.denom()))
}
