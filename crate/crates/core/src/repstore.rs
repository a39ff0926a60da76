//! Storage node for server ads, proofs-of-breach and revocations.
//!
//! Each record kind lives in its own pool of `capacity` records ordered by
//! the reputation of the server it concerns. A full pool admits a record
//! only if it outranks the current minimum, which it then replaces; equal
//! priority keeps the incumbent. Every submission carries a small hashcash
//! ticket checked before any signature or proof verification.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigUint;
use thiserror::Error;

use crate::breach::ProofOfBreach;
use crate::codec::{DecodeError, Reader, Writer, TAG_STORAGE_SUBMISSION};
use crate::docs::ServerAd;
use crate::hashcash::{leading_zero_bits, sha256, Digest256, HashcashNonce, Reputation};
use crate::identity::{Preimage, PublicKey, ServerIdentity};

pub const DEFAULT_SPAM_TICKET_BITS: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordKind {
    ServerAd,
    Breach,
    Revocation,
}

impl RecordKind {
    pub const ALL: [RecordKind; 3] = [RecordKind::ServerAd, RecordKind::Breach, RecordKind::Revocation];

    fn to_u8(self) -> u8 {
        match self {
            RecordKind::ServerAd => 1,
            RecordKind::Breach => 2,
            RecordKind::Revocation => 3,
        }
    }

    fn from_u8(b: u8) -> Result<Self, DecodeError> {
        match b {
            1 => Ok(RecordKind::ServerAd),
            2 => Ok(RecordKind::Breach),
            3 => Ok(RecordKind::Revocation),
            other => Err(DecodeError::invalid("record kind", format!("{other}"))),
        }
    }
}

/// Body of a revocation: the proof it neutralizes and the client preimage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevocationBody {
    pub proof: ProofOfBreach,
    pub client_preimage: Preimage,
}

impl RevocationBody {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_bytes(&self.proof.to_bytes());
        w.put_fixed(&self.client_preimage.0);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let proof = ProofOfBreach::from_bytes(&r.bytes()?)?;
        let client_preimage = Preimage(r.array()?);
        r.finish()?;
        Ok(RevocationBody {
            proof,
            client_preimage,
        })
    }
}

/// A record as sent to a storage node, before the ticket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub kind: RecordKind,
    pub body: Vec<u8>,
}

impl Submission {
    pub fn ad(ad: &ServerAd) -> Self {
        Submission {
            kind: RecordKind::ServerAd,
            body: ad.to_bytes(),
        }
    }

    pub fn breach(proof: &ProofOfBreach) -> Self {
        Submission {
            kind: RecordKind::Breach,
            body: proof.to_bytes(),
        }
    }

    pub fn revocation(proof: &ProofOfBreach, client_preimage: Preimage) -> Self {
        Submission {
            kind: RecordKind::Revocation,
            body: RevocationBody {
                proof: proof.clone(),
                client_preimage,
            }
            .to_bytes(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_STORAGE_SUBMISSION);
        w.put_u8(self.kind.to_u8());
        w.put_bytes(&self.body);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.expect_tag(TAG_STORAGE_SUBMISSION)?;
        let kind = RecordKind::from_u8(r.u8()?)?;
        let body = r.bytes()?;
        r.finish()?;
        Ok(Submission { kind, body })
    }

    /// The server this record is about. Cheap: decoding only.
    pub fn subject(&self) -> Result<ServerIdentity, DecodeError> {
        Ok(match self.kind {
            RecordKind::ServerAd => ServerAd::from_bytes(&self.body)?.identity,
            RecordKind::Breach => ProofOfBreach::from_bytes(&self.body)?.contract.terms.server,
            RecordKind::Revocation => RevocationBody::from_bytes(&self.body)?.proof.contract.terms.server,
        })
    }

    /// Digest the ticket hashcash is computed over, `SHA-256(record || ticket)`.
    pub fn ticket_digest(&self, ticket: HashcashNonce) -> Digest256 {
        let mut bytes = self.to_bytes();
        bytes.extend_from_slice(&ticket.to_be_bytes());
        sha256(&bytes)
    }

    pub fn ticket_bits(&self, ticket: HashcashNonce) -> Reputation {
        leading_zero_bits(&self.ticket_digest(ticket))
    }

    /// Finds the first ticket from `start` meeting `bits`.
    pub fn mine_ticket(&self, bits: u32, start: u64) -> HashcashNonce {
        let mut n = start;
        loop {
            if self.ticket_bits(HashcashNonce(n)).bits() >= bits {
                return HashcashNonce(n);
            }
            n = n.wrapping_add(1);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRecord {
    pub kind: RecordKind,
    pub subject: ServerIdentity,
    pub body: Vec<u8>,
    pub priority: Reputation,
    pub received_at: u64,
}

impl StoredRecord {
    fn submission(&self) -> Submission {
        Submission {
            kind: self.kind,
            body: self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    /// Records per pool.
    pub capacity: usize,
    pub spam_ticket_bits: u32,
}

impl StoreConfig {
    pub fn new(capacity: usize, spam_ticket_bits: u32) -> Result<Self, StoreError> {
        if capacity == 0 {
            return Err(StoreError::ZeroCapacity);
        }
        Ok(StoreConfig {
            capacity,
            spam_ticket_bits,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("capacity must be at least one record")]
    ZeroCapacity,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("ticket below {required} bits")]
    BadTicket { required: u32 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("store full and priority {priority} does not exceed minimum {minimum}")]
    StoreFullLowPriority {
        priority: Reputation,
        minimum: Reputation,
    },
    #[error("record already stored")]
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accepted {
    pub evicted: Option<StoredRecord>,
}

/// Checks record contents. Storage nodes plug in their view of the chain.
pub trait RecordVerifier {
    fn verify_ad(&self, ad: &ServerAd) -> bool {
        ad.verify()
    }

    fn verify_breach(&self, proof: &ProofOfBreach) -> bool;
}

#[derive(Debug, Default, Clone)]
struct Pool {
    records: BTreeMap<(Reputation, u64), StoredRecord>,
    digests: HashSet<Digest256>,
}

impl Pool {
    fn min_priority(&self) -> Option<Reputation> {
        self.records.keys().next().map(|(p, _)| *p)
    }

    fn max_priority(&self) -> Option<Reputation> {
        self.records.keys().next_back().map(|(p, _)| *p)
    }

    fn insert(&mut self, rec: StoredRecord, digest: Digest256) {
        self.digests.insert(digest);
        self.records.insert((rec.priority, rec.received_at), rec);
    }

    /// Drops the lowest-priority record, oldest first among equals.
    fn evict_min(&mut self) -> Option<StoredRecord> {
        let (_, rec) = self.records.pop_first()?;
        self.digests.remove(&sha256(&rec.body));
        Some(rec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub accepted: u64,
    pub rejected: u64,
    pub evicted: u64,
    pub verifications: u64,
}

#[derive(Debug, Clone)]
pub struct StorageNode {
    config: StoreConfig,
    pools: HashMap<RecordKind, Pool>,
    clock: u64,
    stats: NodeStats,
}

impl StorageNode {
    pub fn new(config: StoreConfig) -> Self {
        StorageNode {
            config,
            pools: RecordKind::ALL.iter().map(|k| (*k, Pool::default())).collect(),
            clock: 0,
            stats: NodeStats::default(),
        }
    }

    pub fn config(&self) -> StoreConfig {
        self.config
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    fn pool(&self, kind: RecordKind) -> &Pool {
        &self.pools[&kind]
    }

    pub fn len(&self, kind: RecordKind) -> usize {
        self.pool(kind).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.values().all(|p| p.records.is_empty())
    }

    pub fn records(&self, kind: RecordKind) -> impl Iterator<Item = &StoredRecord> {
        self.pool(kind).records.values()
    }

    pub fn submit(
        &mut self,
        submission: &Submission,
        ticket: HashcashNonce,
        verifier: &dyn RecordVerifier,
    ) -> Result<Accepted, Rejection> {
        let res = self.try_submit(submission, ticket, verifier);
        match &res {
            Ok(a) => {
                self.stats.accepted += 1;
                self.stats.evicted += a.evicted.is_some() as u64;
            }
            Err(_) => self.stats.rejected += 1,
        }
        res
    }

    fn try_submit(
        &mut self,
        submission: &Submission,
        ticket: HashcashNonce,
        verifier: &dyn RecordVerifier,
    ) -> Result<Accepted, Rejection> {
        let required = self.config.spam_ticket_bits;
        if submission.ticket_bits(ticket).bits() < required {
            return Err(Rejection::BadTicket { required });
        }
        let subject = submission
            .subject()
            .map_err(|e| Rejection::InvalidRecord(e.to_string()))?;
        let priority = subject.reputation();
        let digest = sha256(&submission.body);

        let pool = self.pool(submission.kind);
        if pool.digests.contains(&digest) {
            return Err(Rejection::Duplicate);
        }
        if pool.records.len() >= self.config.capacity {
            let minimum = pool.min_priority().expect("full pool has a minimum");
            if priority <= minimum {
                return Err(Rejection::StoreFullLowPriority { priority, minimum });
            }
        }

        self.stats.verifications += 1;
        self.verify(submission, verifier)?;

        let pool = self.pools.get_mut(&submission.kind).expect("all pools exist");
        let evicted = if pool.records.len() >= self.config.capacity {
            pool.evict_min()
        } else {
            None
        };
        self.clock += 1;
        pool.insert(
            StoredRecord {
                kind: submission.kind,
                subject,
                body: submission.body.clone(),
                priority,
                received_at: self.clock,
            },
            digest,
        );
        Ok(Accepted { evicted })
    }

    fn verify(&self, submission: &Submission, verifier: &dyn RecordVerifier) -> Result<(), Rejection> {
        let invalid = |why: &str| Rejection::InvalidRecord(why.to_string());
        match submission.kind {
            RecordKind::ServerAd => {
                let ad = ServerAd::from_bytes(&submission.body).map_err(|e| invalid(&e.to_string()))?;
                if !verifier.verify_ad(&ad) {
                    return Err(invalid("ad signature does not verify"));
                }
            }
            RecordKind::Breach => {
                let p = ProofOfBreach::from_bytes(&submission.body).map_err(|e| invalid(&e.to_string()))?;
                if !verifier.verify_breach(&p) {
                    return Err(invalid("proof-of-breach does not verify"));
                }
            }
            RecordKind::Revocation => {
                let r = RevocationBody::from_bytes(&submission.body).map_err(|e| invalid(&e.to_string()))?;
                if !crate::breach::is_revoked(&r.proof, &r.client_preimage) {
                    return Err(invalid("client preimage does not revoke the proof"));
                }
            }
        }
        Ok(())
    }

    pub fn query_ads(&self) -> Vec<ServerAd> {
        self.records(RecordKind::ServerAd)
            .filter_map(|r| ServerAd::from_bytes(&r.body).ok())
            .collect()
    }

    /// Stored proofs against `server`, each paired with a stored revocation if any.
    pub fn query_breaches(&self, server: &PublicKey) -> Vec<(ProofOfBreach, Option<Preimage>)> {
        self.breaches_where(|p| &p.contract.terms.server.public_key == server)
    }

    pub fn all_breaches(&self) -> Vec<(ProofOfBreach, Option<Preimage>)> {
        self.breaches_where(|_| true)
    }

    fn breaches_where(&self, pred: impl Fn(&ProofOfBreach) -> bool) -> Vec<(ProofOfBreach, Option<Preimage>)> {
        let revocations: HashMap<Digest256, Preimage> = self
            .records(RecordKind::Revocation)
            .filter_map(|r| RevocationBody::from_bytes(&r.body).ok())
            .map(|r| (r.proof.digest(), r.client_preimage))
            .collect();
        self.records(RecordKind::Breach)
            .filter_map(|r| ProofOfBreach::from_bytes(&r.body).ok())
            .filter(|p| pred(p))
            .map(|p| {
                let rev = revocations.get(&p.digest()).copied();
                (p, rev)
            })
            .collect()
    }

    /// Expected hashes to push every record out of the pool for `kind`.
    pub fn flush_cost(&self, kind: RecordKind) -> BigUint {
        let r_max = self.pool(kind).max_priority().unwrap_or_default();
        flush_cost(self.config.capacity as u64, r_max)
    }

    /// Every record as a tagged submission preceded by its arrival counter.
    pub fn export(&self) -> Vec<u8> {
        let mut all: Vec<&StoredRecord> = self.pools.values().flat_map(|p| p.records.values()).collect();
        all.sort_by_key(|r| r.received_at);
        let mut w = Writer::new();
        w.put_len(all.len());
        for r in all {
            w.put_u64(r.received_at);
            w.put_bytes(&r.submission().to_bytes());
        }
        w.into_bytes()
    }

    /// Restores exported contents without re-verifying them.
    pub fn import(config: StoreConfig, bytes: &[u8]) -> Result<Self, StoreError> {
        let mut node = StorageNode::new(config);
        let mut r = Reader::new(bytes);
        let n = r.len()?;
        for _ in 0..n {
            let received_at = r.u64()?;
            let sub = Submission::from_bytes(&r.bytes()?)?;
            let subject = sub.subject()?;
            let priority = subject.reputation();
            let digest = sha256(&sub.body);
            let pool = node.pools.get_mut(&sub.kind).expect("all pools exist");
            if pool.records.len() >= config.capacity {
                pool.evict_min();
            }
            pool.insert(
                StoredRecord {
                    kind: sub.kind,
                    subject,
                    body: sub.body,
                    priority,
                    received_at,
                },
                digest,
            );
            node.clock = node.clock.max(received_at);
        }
        r.finish()?;
        Ok(node)
    }
}

/// `capacity * 2^r_max`.
pub fn flush_cost(capacity: u64, r_max: Reputation) -> BigUint {
    BigUint::from(capacity) << r_max.bits()
}

pub const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;

/// Wall-clock years to compute `hashes` at `hashes_per_second`.
pub fn flush_years(hashes: &BigUint, hashes_per_second: f64) -> f64 {
    let h: f64 = hashes.to_string().parse().expect("decimal digits parse as f64");
    h / hashes_per_second / SECONDS_PER_YEAR
}
