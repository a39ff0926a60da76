//! Server identities, signing keys and hash locks.

use std::fmt;

use ed25519_dalek::{Signer, Verifier};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hashcash::{compute_reputation, sha256, Digest256, HashcashNonce, Reputation};

pub const MAX_MARKET_ID_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("market id must be 1 to {MAX_MARKET_ID_LEN} bytes, got {0}")]
    MarketIdLength(usize),
}

/// Identifier of a market; reputations are bound to it.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MarketId(Vec<u8>);

impl MarketId {
    pub fn new(id: Vec<u8>) -> Result<Self, IdentityError> {
        if id.is_empty() || id.len() > MAX_MARKET_ID_LEN {
            return Err(IdentityError::MarketIdLength(id.len()));
        }
        Ok(MarketId(id))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_bytes(&self.0);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        MarketId::new(r.bytes()?).map_err(|e| DecodeError::invalid("market_id", e.to_string()))
    }
}

impl fmt::Debug for MarketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) => write!(f, "MarketId({s:?})"),
            Err(_) => write!(f, "MarketId(0x{})", hex::encode(&self.0)),
        }
    }
}

/// 32-byte Ed25519 verification key. Doubles as the server ID.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// True when the bytes decode to a curve point.
    pub fn is_well_formed(&self) -> bool {
        ed25519_dalek::VerifyingKey::from_bytes(&self.0).is_ok()
    }

    pub fn verify(&self, message: &[u8], signature: &[u8; 64]) -> bool {
        let Ok(key) = ed25519_dalek::VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(signature);
        key.verify(message, &sig).is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.0))
    }
}

/// Ed25519 signing key.
#[derive(Clone)]
pub struct SigningKey(ed25519_dalek::SigningKey);

impl SigningKey {
    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> [u8; 64] {
        self.0.sign(message).to_bytes()
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SigningKey").field(&self.public_key()).finish()
    }
}

/// Deterministic keypair from a 32-byte seed.
pub fn keygen(seed: [u8; 32]) -> (SigningKey, PublicKey) {
    let sk = SigningKey(ed25519_dalek::SigningKey::from_bytes(&seed));
    let pk = sk.public_key();
    (sk, pk)
}

/// A server's self-issued identity: key, market and hashcash nonce.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServerIdentity {
    pub public_key: PublicKey,
    pub market_id: MarketId,
    pub nonce: HashcashNonce,
}

impl ServerIdentity {
    pub fn new(public_key: PublicKey, market_id: MarketId, nonce: HashcashNonce) -> Self {
        ServerIdentity {
            public_key,
            market_id,
            nonce,
        }
    }

    pub fn reputation(&self) -> Reputation {
        compute_reputation(&self.public_key, &self.market_id, self.nonce)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_fixed(self.public_key.as_bytes());
        self.market_id.encode(w);
        w.put_u64(self.nonce.0);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let public_key = PublicKey(r.array()?);
        let market_id = MarketId::decode(r)?;
        let nonce = HashcashNonce(r.u64()?);
        Ok(ServerIdentity {
            public_key,
            market_id,
            nonce,
        })
    }
}

/// A 32-byte secret whose hash is published as a lock.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Preimage(pub [u8; 32]);

impl Preimage {
    pub fn lock(&self) -> HashLock {
        HashLock {
            image: sha256(&self.0),
        }
    }
}

impl fmt::Debug for Preimage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Only the lock is printed; the secret stays out of logs.
        write!(f, "Preimage(lock={})", self.lock().image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashLock {
    pub image: Digest256,
}

impl HashLock {
    pub fn opens_with(&self, preimage: &Preimage) -> bool {
        sha256(&preimage.0) == self.image
    }
}
