//! Signed documents: watchtower contracts and server advertisements.
//!
//! A contract carries two hash locks. Revealing the server preimage
//! activates it; revealing the client preimage terminates it. Both
//! transitions are checked here and nowhere else.

use std::fmt::Write as _;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer, TAG_CONTRACT, TAG_SERVER_AD};
use crate::hashcash::{sha256, Digest256};
use crate::identity::{HashLock, MarketId, Preimage, ServerIdentity, SigningKey};
use crate::Amount;

/// Dispute window used when a caller does not pick one.
pub const DEFAULT_DISPUTE_PERIOD: u64 = 144;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocError {
    #[error("signing key does not match the server identity")]
    KeyMismatch,
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("preimage does not open the hash lock")]
    PreimageMismatch,
    #[error("operation not allowed in state {0:?}")]
    WrongState(ContractStatus),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Everything a contract says, minus the signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractTerms {
    pub market_id: MarketId,
    pub server: ServerIdentity,
    pub txid_prefixes: Vec<[u8; 16]>,
    pub encrypted_jtxs: Vec<Vec<u8>>,
    /// Inclusive block-height range the server must watch.
    pub monitor_range: (u64, u64),
    pub dispute_period: u64,
    pub server_hash_image: HashLock,
    pub client_hash_image: HashLock,
    /// Maximum value of the contract to the client.
    pub value: Amount,
    pub fee: Amount,
}

impl ContractTerms {
    pub fn validate(&self) -> Result<(), DocError> {
        if self.market_id != self.server.market_id {
            return Err(DocError::Malformed(
                "server identity belongs to another market".into(),
            ));
        }
        if self.txid_prefixes.len() != self.encrypted_jtxs.len() {
            return Err(DocError::Malformed(format!(
                "{} prefixes but {} encrypted justice transactions",
                self.txid_prefixes.len(),
                self.encrypted_jtxs.len()
            )));
        }
        if self.monitor_range.0 > self.monitor_range.1 {
            return Err(DocError::Malformed(format!(
                "monitor range {}..={} is empty",
                self.monitor_range.0, self.monitor_range.1
            )));
        }
        Ok(())
    }

    /// The signed bytes: tag followed by every field in declaration order.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_CONTRACT);
        self.encode_fields(&mut w);
        w.into_bytes()
    }

    fn encode_fields(&self, w: &mut Writer) {
        self.market_id.encode(w);
        self.server.encode(w);
        w.put_len(self.txid_prefixes.len());
        for p in &self.txid_prefixes {
            w.put_fixed(p);
        }
        w.put_len(self.encrypted_jtxs.len());
        for blob in &self.encrypted_jtxs {
            w.put_bytes(blob);
        }
        w.put_u64(self.monitor_range.0);
        w.put_u64(self.monitor_range.1);
        w.put_u64(self.dispute_period);
        w.put_fixed(self.server_hash_image.image.as_bytes());
        w.put_fixed(self.client_hash_image.image.as_bytes());
        w.put_u64(self.value);
        w.put_u64(self.fee);
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let market_id = MarketId::decode(r)?;
        let server = ServerIdentity::decode(r)?;
        let n = r.len()?;
        let txid_prefixes = (0..n).map(|_| r.array()).collect::<Result<_, _>>()?;
        let n = r.len()?;
        let encrypted_jtxs = (0..n).map(|_| r.bytes()).collect::<Result<_, _>>()?;
        let monitor_range = (r.u64()?, r.u64()?);
        let dispute_period = r.u64()?;
        let server_hash_image = HashLock {
            image: Digest256(r.array()?),
        };
        let client_hash_image = HashLock {
            image: Digest256(r.array()?),
        };
        let value = r.u64()?;
        let fee = r.u64()?;
        Ok(ContractTerms {
            market_id,
            server,
            txid_prefixes,
            encrypted_jtxs,
            monitor_range,
            dispute_period,
            server_hash_image,
            client_hash_image,
            value,
            fee,
        })
    }

    /// Index of the entry whose prefix matches `txid`.
    pub fn entry_for(&self, txid: &Digest256) -> Option<usize> {
        self.txid_prefixes
            .iter()
            .position(|p| p[..] == txid.as_bytes()[..16])
    }
}

/// A signed watchtower contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    pub terms: ContractTerms,
    pub signature: [u8; 64],
}

pub fn sign_contract(terms: ContractTerms, key: &SigningKey) -> Result<Contract, DocError> {
    if key.public_key() != terms.server.public_key {
        return Err(DocError::KeyMismatch);
    }
    terms.validate()?;
    let signature = key.sign(&terms.signing_bytes());
    Ok(Contract { terms, signature })
}

/// True iff the signature covers the canonical body under the server's key.
pub fn verify_contract_signature(c: &Contract) -> bool {
    c.terms.validate().is_ok()
        && c
            .terms
            .server
            .public_key
            .verify(&c.terms.signing_bytes(), &c.signature)
}

impl Contract {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_CONTRACT);
        self.encode_body(&mut w);
        w.into_bytes()
    }

    /// Untagged encoding, used when a contract is nested in another document.
    pub fn encode_body(&self, w: &mut Writer) {
        self.terms.encode_fields(w);
        w.put_fixed(&self.signature);
    }

    pub fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let terms = ContractTerms::decode_fields(r)?;
        terms
            .validate()
            .map_err(|e| DecodeError::invalid("contract", e.to_string()))?;
        let signature = r.array()?;
        Ok(Contract { terms, signature })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.expect_tag(TAG_CONTRACT)?;
        let c = Self::decode_body(&mut r)?;
        r.finish()?;
        Ok(c)
    }

    pub fn digest(&self) -> Digest256 {
        sha256(&self.to_bytes())
    }

    /// Human-readable `key: value` rendering. Not part of the signed bytes.
    pub fn render(&self) -> String {
        let t = &self.terms;
        let mut out = String::new();
        let _ = writeln!(out, "market_id: {}", hex::encode(t.market_id.as_bytes()));
        let _ = writeln!(out, "server_id: {}", hex::encode(t.server.public_key.as_bytes()));
        let _ = writeln!(out, "hashcash: {}", t.server.nonce.0);
        let _ = writeln!(out, "reputation: {}", t.server.reputation());
        for (i, (p, blob)) in t.txid_prefixes.iter().zip(&t.encrypted_jtxs).enumerate() {
            let _ = writeln!(out, "txid_prefix[{i}]: {}", hex::encode(p));
            let _ = writeln!(out, "encrypted_jtx[{i}]: {}", hex::encode(blob));
        }
        let _ = writeln!(out, "monitor_range: {}..={}", t.monitor_range.0, t.monitor_range.1);
        let _ = writeln!(out, "dispute_period: {}", t.dispute_period);
        let _ = writeln!(out, "server_hash_image: {}", t.server_hash_image.image);
        let _ = writeln!(out, "client_hash_image: {}", t.client_hash_image.image);
        let _ = writeln!(out, "value: {}", t.value);
        let _ = writeln!(out, "fee: {}", t.fee);
        let _ = writeln!(out, "signature: {}", hex::encode(self.signature));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractStatus {
    Unsigned,
    Signed,
    Active,
    Terminated,
}

/// Lifecycle of one contract as seen by its holder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractState {
    pub status: ContractStatus,
    pub server_preimage: Option<Preimage>,
    pub client_preimage: Option<Preimage>,
}

impl ContractState {
    pub fn unsigned() -> Self {
        ContractState {
            status: ContractStatus::Unsigned,
            server_preimage: None,
            client_preimage: None,
        }
    }

    pub fn signed() -> Self {
        ContractState {
            status: ContractStatus::Signed,
            ..Self::unsigned()
        }
    }
}

pub fn activate(
    c: &Contract,
    state: &ContractState,
    server_preimage: Preimage,
) -> Result<ContractState, DocError> {
    if state.status != ContractStatus::Signed {
        return Err(DocError::WrongState(state.status));
    }
    if !c.terms.server_hash_image.opens_with(&server_preimage) {
        return Err(DocError::PreimageMismatch);
    }
    Ok(ContractState {
        status: ContractStatus::Active,
        server_preimage: Some(server_preimage),
        client_preimage: state.client_preimage,
    })
}

/// Terminating an already terminated contract with the right preimage is a no-op.
pub fn terminate(
    c: &Contract,
    state: &ContractState,
    client_preimage: Preimage,
) -> Result<ContractState, DocError> {
    if state.status == ContractStatus::Unsigned {
        return Err(DocError::WrongState(state.status));
    }
    if !c.terms.client_hash_image.opens_with(&client_preimage) {
        return Err(DocError::PreimageMismatch);
    }
    Ok(ContractState {
        status: ContractStatus::Terminated,
        server_preimage: state.server_preimage,
        client_preimage: Some(client_preimage),
    })
}

/// A fixed service plan: contracts worth up to `max_value` cost `fee`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeeQuote {
    pub max_value: Amount,
    pub fee: Amount,
}

/// A server advertising itself in a market, signed by its own key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerAd {
    pub identity: ServerIdentity,
    pub endpoint: Vec<u8>,
    pub quotes: Vec<FeeQuote>,
    pub signature: [u8; 64],
}

impl ServerAd {
    pub fn sign(
        identity: ServerIdentity,
        endpoint: Vec<u8>,
        mut quotes: Vec<FeeQuote>,
        key: &SigningKey,
    ) -> Result<Self, DocError> {
        if key.public_key() != identity.public_key {
            return Err(DocError::KeyMismatch);
        }
        quotes.sort_by_key(|q| (q.max_value, q.fee));
        let mut ad = ServerAd {
            identity,
            endpoint,
            quotes,
            signature: [0; 64],
        };
        ad.signature = key.sign(&ad.signing_bytes());
        Ok(ad)
    }

    fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_SERVER_AD);
        self.encode_fields(&mut w);
        w.into_bytes()
    }

    fn encode_fields(&self, w: &mut Writer) {
        self.identity.encode(w);
        w.put_bytes(&self.endpoint);
        w.put_len(self.quotes.len());
        for q in &self.quotes {
            w.put_u64(q.max_value);
            w.put_u64(q.fee);
        }
    }

    pub fn verify(&self) -> bool {
        self.identity
            .public_key
            .verify(&self.signing_bytes(), &self.signature)
    }

    /// Fee of the cheapest plan covering `value`.
    pub fn fee_for(&self, value: Amount) -> Option<Amount> {
        self.quotes
            .iter()
            .filter(|q| q.max_value >= value)
            .map(|q| q.fee)
            .min()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_SERVER_AD);
        self.encode_fields(&mut w);
        w.put_fixed(&self.signature);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.expect_tag(TAG_SERVER_AD)?;
        let identity = ServerIdentity::decode(&mut r)?;
        let endpoint = r.bytes()?;
        let n = r.len()?;
        let quotes = (0..n)
            .map(|_| {
                Ok(FeeQuote {
                    max_value: r.u64()?,
                    fee: r.u64()?,
                })
            })
            .collect::<Result<_, DecodeError>>()?;
        let signature = r.array()?;
        r.finish()?;
        Ok(ServerAd {
            identity,
            endpoint,
            quotes,
            signature,
        })
    }
}
