//! Proof-of-breach construction and verification.
//!
//! A proof is valid iff, in order:
//!
//! 1. the document is well formed;
//! 2. the contract signature verifies under the server ID;
//! 3. the supplied preimage opens the server hash image;
//! 4. a commitment named by the contract was mined inside the monitor range;
//! 5. the justice transaction is the contract's decrypted entry and spends it;
//! 6. no justice transaction spent it within the dispute window.
//!
//! Verification short-circuits at the first failing condition. Full-node
//! mode reads the chain directly; light mode needs only headers plus the
//! Merkle evidence carried by the proof. When nobody ever spent the
//! commitment, light mode falls back to scanning block bodies for the
//! dispute window, attached to the [`HeaderChain`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::chain::{
    merkle_root, verify_merkle_proof, BlockHeader, CommitmentTerms, MerkleProof, OutPoint,
    SimChain, SimTransaction, TxKind, Txid,
};
use crate::codec::{DecodeError, Reader, Writer, TAG_PROOF_OF_BREACH};
use crate::docs::{verify_contract_signature, Contract};
use crate::hashcash::{sha256, Digest256};
use crate::identity::Preimage;
use crate::watchtower::decrypt_jtx;

/// A later spender of the commitment output, proving no justice spend exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsenceEvidence {
    pub spender: Vec<u8>,
    pub inclusion: MerkleProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofOfBreach {
    pub contract: Contract,
    pub server_preimage: Preimage,
    pub ctx_bytes: Vec<u8>,
    pub ctx_inclusion: MerkleProof,
    pub absence: Option<AbsenceEvidence>,
    pub jtx_bytes: Vec<u8>,
}

impl ProofOfBreach {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(TAG_PROOF_OF_BREACH);
        self.contract.encode_body(&mut w);
        w.put_fixed(&self.server_preimage.0);
        w.put_bytes(&self.ctx_bytes);
        self.ctx_inclusion.encode(&mut w);
        w.put_option(self.absence.as_ref(), |w, a| {
            w.put_bytes(&a.spender);
            a.inclusion.encode(w);
        });
        w.put_bytes(&self.jtx_bytes);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.expect_tag(TAG_PROOF_OF_BREACH)?;
        let contract = Contract::decode_body(&mut r)?;
        let server_preimage = Preimage(r.array()?);
        let ctx_bytes = r.bytes()?;
        let ctx_inclusion = MerkleProof::decode(&mut r)?;
        let absence = r.option(|r| {
            Ok(AbsenceEvidence {
                spender: r.bytes()?,
                inclusion: MerkleProof::decode(r)?,
            })
        })?;
        let jtx_bytes = r.bytes()?;
        r.finish()?;
        Ok(ProofOfBreach {
            contract,
            server_preimage,
            ctx_bytes,
            ctx_inclusion,
            absence,
            jtx_bytes,
        })
    }

    /// Cache key for verification results.
    pub fn digest(&self) -> Digest256 {
        sha256(&self.to_bytes())
    }
}

/// True iff the client preimage opens the contract's client lock, which
/// neutralizes the proof.
pub fn is_revoked(p: &ProofOfBreach, client_preimage: &Preimage) -> bool {
    p.contract.terms.client_hash_image.opens_with(client_preimage)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeaderChainError {
    #[error("header at position {index} has height {found}")]
    NonConsecutive { index: usize, found: u64 },
    #[error("header {height} does not link to its predecessor")]
    BrokenLink { height: u64 },
    #[error("no header at height {0}")]
    UnknownHeight(u64),
    #[error("body for height {0} does not match the header merkle root")]
    BodyMismatch(u64),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Block headers, optionally with a few bodies, as held by a light client.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeaderChain {
    headers: Vec<BlockHeader>,
    bodies: BTreeMap<u64, Vec<SimTransaction>>,
}

impl HeaderChain {
    pub fn new(headers: Vec<BlockHeader>) -> Result<Self, HeaderChainError> {
        let mut prev: Option<Digest256> = None;
        for (i, h) in headers.iter().enumerate() {
            if h.height != i as u64 {
                return Err(HeaderChainError::NonConsecutive {
                    index: i,
                    found: h.height,
                });
            }
            if prev.unwrap_or(Digest256::ZERO) != h.prev_hash {
                return Err(HeaderChainError::BrokenLink { height: h.height });
            }
            prev = Some(h.hash());
        }
        Ok(HeaderChain {
            headers,
            bodies: BTreeMap::new(),
        })
    }

    pub fn from_chain(chain: &SimChain) -> Self {
        HeaderChain {
            headers: chain.headers(),
            bodies: BTreeMap::new(),
        }
    }

    pub fn headers(&self) -> &[BlockHeader] {
        &self.headers
    }

    pub fn header(&self, height: u64) -> Option<&BlockHeader> {
        self.headers.get(usize::try_from(height).ok()?)
    }

    pub fn tip_height(&self) -> Option<u64> {
        self.headers.last().map(|h| h.height)
    }

    /// Attaches a block body after checking it against the header's root.
    pub fn attach_body(
        &mut self,
        height: u64,
        transactions: Vec<SimTransaction>,
    ) -> Result<(), HeaderChainError> {
        let header = self
            .header(height)
            .ok_or(HeaderChainError::UnknownHeight(height))?;
        let txids: Vec<Txid> = transactions.iter().map(SimTransaction::txid).collect();
        if merkle_root(&txids) != header.merkle_root {
            return Err(HeaderChainError::BodyMismatch(height));
        }
        self.bodies.insert(height, transactions);
        Ok(())
    }

    /// Attaches every body a light client needs to check the dispute window
    /// of `proof` when it carries no absence evidence.
    pub fn attach_window(&mut self, chain: &SimChain, proof: &ProofOfBreach) -> Result<(), HeaderChainError> {
        let Ok(ctx) = SimTransaction::from_bytes(&proof.ctx_bytes) else {
            return Ok(());
        };
        let Ok(terms) = CommitmentTerms::from_bytes(&ctx.payload) else {
            return Ok(());
        };
        let start = proof.ctx_inclusion.height;
        let end = start.saturating_add(terms.dispute_period);
        for h in start..=end {
            if let Some(b) = chain.block(h) {
                self.attach_body(h, b.transactions.clone())?;
            }
        }
        Ok(())
    }

    pub fn body(&self, height: u64) -> Option<&[SimTransaction]> {
        self.bodies.get(&height).map(Vec::as_slice)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_len(self.headers.len());
        for h in &self.headers {
            w.put_u64(h.height);
            w.put_fixed(h.prev_hash.as_bytes());
            w.put_fixed(h.merkle_root.as_bytes());
        }
        w.put_len(self.bodies.len());
        for (height, txs) in &self.bodies {
            w.put_u64(*height);
            w.put_len(txs.len());
            for tx in txs {
                w.put_bytes(&tx.to_bytes());
            }
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HeaderChainError> {
        let mut r = Reader::new(bytes);
        let n = r.len()?;
        let headers = (0..n)
            .map(|_| {
                Ok(BlockHeader {
                    height: r.u64()?,
                    prev_hash: Digest256(r.array()?),
                    merkle_root: Digest256(r.array()?),
                })
            })
            .collect::<Result<Vec<_>, DecodeError>>()?;
        let mut hc = HeaderChain::new(headers)?;
        let n = r.len()?;
        for _ in 0..n {
            let height = r.u64()?;
            let count = r.len()?;
            let txs = (0..count)
                .map(|_| SimTransaction::from_bytes(&r.bytes()?))
                .collect::<Result<Vec<_>, _>>()?;
            hc.attach_body(height, txs)?;
        }
        r.finish()?;
        Ok(hc)
    }
}

/// Where verification reads public chain data from.
#[derive(Debug, Clone, Copy)]
pub enum ChainSource<'a> {
    Full(&'a SimChain),
    Light(&'a HeaderChain),
}

impl ChainSource<'_> {
    fn merkle_root_at(&self, height: u64) -> Option<Digest256> {
        match self {
            ChainSource::Full(c) => c.block(height).map(|b| b.merkle_root),
            ChainSource::Light(h) => h.header(height).map(|h| h.merkle_root),
        }
    }

    fn tip_height(&self) -> Option<u64> {
        match self {
            ChainSource::Full(c) => c.tip_height(),
            ChainSource::Light(h) => h.tip_height(),
        }
    }
}

/// The checklist item a proof failed, numbered as in the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Format = 1,
    Signature = 2,
    ServerPreimage = 3,
    CommitmentInRange = 4,
    JusticeSpendsCommitment = 5,
    NoJusticeInWindow = 6,
}

impl Condition {
    pub fn index(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid { condition: Condition, reason: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn failed_condition(&self) -> Option<Condition> {
        match self {
            Verdict::Valid => None,
            Verdict::Invalid { condition, .. } => Some(*condition),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid => f.write_str("valid"),
            Verdict::Invalid { condition, reason } => {
                write!(f, "invalid({}): {reason}", condition.index())
            }
        }
    }
}

fn fail(condition: Condition, reason: impl Into<String>) -> Verdict {
    Verdict::Invalid {
        condition,
        reason: reason.into(),
    }
}

macro_rules! check {
    ($cond:expr, $which:expr, $($msg:tt)+) => {
        if !$cond {
            return fail($which, format!($($msg)+));
        }
    };
}

/// Decoded pieces of a proof that passed the format check.
struct Parsed {
    ctx: SimTransaction,
    ctx_txid: Txid,
    terms: CommitmentTerms,
    jtx: SimTransaction,
    spender: Option<SimTransaction>,
}

fn parse(p: &ProofOfBreach) -> Result<Parsed, String> {
    p.contract.terms.validate().map_err(|e| e.to_string())?;
    let ctx = SimTransaction::from_bytes(&p.ctx_bytes).map_err(|e| format!("ctx: {e}"))?;
    if ctx.kind != TxKind::Commitment || ctx.outputs.len() != 1 {
        return Err("ctx is not a commitment transaction".into());
    }
    let terms = CommitmentTerms::from_bytes(&ctx.payload).map_err(|e| format!("ctx terms: {e}"))?;
    let ctx_txid = ctx.txid();
    if p.ctx_inclusion.leaf != ctx_txid {
        return Err("ctx inclusion proof is for another transaction".into());
    }
    let jtx = SimTransaction::from_bytes(&p.jtx_bytes).map_err(|e| format!("jtx: {e}"))?;
    let spender = match &p.absence {
        None => None,
        Some(a) => {
            let s = SimTransaction::from_bytes(&a.spender).map_err(|e| format!("spender: {e}"))?;
            if a.inclusion.leaf != s.txid() {
                return Err("spender inclusion proof is for another transaction".into());
            }
            Some(s)
        }
    };
    Ok(Parsed {
        ctx,
        ctx_txid,
        terms,
        jtx,
        spender,
    })
}

/// Runs the six-condition checklist against public data only.
pub fn verify_proof(p: &ProofOfBreach, source: ChainSource<'_>) -> Verdict {
    let parsed = match parse(p) {
        Ok(parsed) => parsed,
        Err(reason) => return fail(Condition::Format, reason),
    };
    let terms = &p.contract.terms;

    check!(
        verify_contract_signature(&p.contract),
        Condition::Signature,
        "signature does not verify under server id"
    );
    check!(
        terms.server_hash_image.opens_with(&p.server_preimage),
        Condition::ServerPreimage,
        "preimage does not match the server hash image"
    );

    let ctx_height = p.ctx_inclusion.height;
    check!(
        terms.entry_for(&parsed.ctx_txid).is_some(),
        Condition::CommitmentInRange,
        "contract does not cover ctx {}",
        parsed.ctx_txid
    );
    check!(
        (terms.monitor_range.0..=terms.monitor_range.1).contains(&ctx_height),
        Condition::CommitmentInRange,
        "ctx height {ctx_height} outside monitor range {}..={}",
        terms.monitor_range.0,
        terms.monitor_range.1
    );
    let root = source.merkle_root_at(ctx_height);
    check!(
        root.is_some_and(|root| verify_merkle_proof(&root, &p.ctx_inclusion)),
        Condition::CommitmentInRange,
        "ctx not included in block {ctx_height}"
    );

    let ctx_out = OutPoint::new(parsed.ctx_txid, 0);
    let decrypts_to_jtx = terms
        .txid_prefixes
        .iter()
        .zip(&terms.encrypted_jtxs)
        .filter(|(prefix, _)| prefix[..] == parsed.ctx_txid.as_bytes()[..16])
        .any(|(_, blob)| decrypt_jtx(blob, &parsed.ctx_txid).is_ok_and(|plain| plain == p.jtx_bytes));
    check!(
        decrypts_to_jtx,
        Condition::JusticeSpendsCommitment,
        "jtx is not the contract's encrypted justice transaction"
    );
    check!(
        parsed.jtx.kind == TxKind::Justice
            && parsed.jtx.inputs == [ctx_out]
            && parsed.jtx.outputs.iter().map(|o| o.amount).sum::<u64>() == parsed.ctx.outputs[0].amount,
        Condition::JusticeSpendsCommitment,
        "jtx does not spend the ctx output"
    );

    let closes = ctx_height.saturating_add(parsed.terms.dispute_period);
    check!(
        source.tip_height().is_some_and(|tip| tip >= closes),
        Condition::NoJusticeInWindow,
        "dispute window closing at {closes} is still open"
    );

    if let (Some(spender), Some(evidence)) = (&parsed.spender, &p.absence) {
        check!(
            spender.spends(&ctx_out) && spender.kind != TxKind::Justice,
            Condition::NoJusticeInWindow,
            "absence evidence is not a non-justice spend of the ctx"
        );
        check!(
            evidence.inclusion.height > closes,
            Condition::NoJusticeInWindow,
            "spender at {} lies inside the dispute window",
            evidence.inclusion.height
        );
        let root = source.merkle_root_at(evidence.inclusion.height);
        check!(
            root.is_some_and(|root| verify_merkle_proof(&root, &evidence.inclusion)),
            Condition::NoJusticeInWindow,
            "spender not included in block {}",
            evidence.inclusion.height
        );
    }

    match source {
        ChainSource::Full(chain) => {
            if let Some((spender, height)) = chain.spent_by(&parsed.ctx_txid, 0) {
                let justice = chain
                    .transaction(&spender)
                    .is_some_and(|tx| tx.kind == TxKind::Justice);
                check!(
                    !justice,
                    Condition::NoJusticeInWindow,
                    "justice transaction published at height {height}"
                );
            }
        }
        ChainSource::Light(headers) => {
            if p.absence.is_none() {
                for h in ctx_height..=closes {
                    let Some(body) = headers.body(h) else {
                        return fail(
                            Condition::NoJusticeInWindow,
                            format!("no absence evidence and no block body for height {h}"),
                        );
                    };
                    check!(
                        !body.iter().any(|tx| tx.kind == TxKind::Justice && tx.spends(&ctx_out)),
                        Condition::NoJusticeInWindow,
                        "justice transaction published at height {h}"
                    );
                }
            }
        }
    }
    Verdict::Valid
}

/// Decodes and verifies; undecodable input fails the format condition.
pub fn verify_proof_bytes(bytes: &[u8], source: ChainSource<'_>) -> Verdict {
    match ProofOfBreach::from_bytes(bytes) {
        Ok(p) => verify_proof(&p, source),
        Err(e) => fail(Condition::Format, e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NoBreach {
    #[error("contract has no entry {0}")]
    NoSuchEntry(usize),
    #[error("the covered commitment was never mined")]
    NotPublished,
    #[error("commitment mined at {height}, outside the monitor range")]
    OutsideRange { height: u64 },
    #[error("dispute window closing at {closes} is still open")]
    WindowOpen { closes: u64 },
    #[error("justice transaction published at height {height}")]
    Remedied { height: u64 },
    #[error("server preimage does not open the contract")]
    BadPreimage,
}

/// Builds a proof for the commitment named by entry `breach_index`.
pub fn build_proof(
    contract: &Contract,
    server_preimage: Preimage,
    chain: &SimChain,
    breach_index: usize,
) -> Result<ProofOfBreach, NoBreach> {
    let terms = &contract.terms;
    if !terms.server_hash_image.opens_with(&server_preimage) {
        return Err(NoBreach::BadPreimage);
    }
    let prefix = terms
        .txid_prefixes
        .get(breach_index)
        .ok_or(NoBreach::NoSuchEntry(breach_index))?;
    let blob = &terms.encrypted_jtxs[breach_index];

    let (ctx, ctx_txid, jtx_bytes, height) = chain
        .blocks()
        .iter()
        .flat_map(|b| b.transactions.iter().map(move |tx| (b.height, tx)))
        .filter(|(_, tx)| tx.kind == TxKind::Commitment)
        .find_map(|(height, tx)| {
            let txid = tx.txid();
            if txid.as_bytes()[..16] != prefix[..] {
                return None;
            }
            let plain = decrypt_jtx(blob, &txid).ok()?;
            Some((tx, txid, plain, height))
        })
        .ok_or(NoBreach::NotPublished)?;

    if !(terms.monitor_range.0..=terms.monitor_range.1).contains(&height) {
        return Err(NoBreach::OutsideRange { height });
    }
    let committed = CommitmentTerms::from_bytes(&ctx.payload).map_err(|_| NoBreach::NotPublished)?;
    let closes = height.saturating_add(committed.dispute_period);
    if chain.tip_height().is_none_or(|tip| tip < closes) {
        return Err(NoBreach::WindowOpen { closes });
    }

    let absence = match chain.spent_by(&ctx_txid, 0) {
        None => None,
        Some((spender, spend_height)) => {
            let tx = chain
                .transaction(&spender)
                .expect("spend index points at a mined transaction");
            if tx.kind == TxKind::Justice {
                return Err(NoBreach::Remedied {
                    height: spend_height,
                });
            }
            Some(AbsenceEvidence {
                spender: tx.to_bytes(),
                inclusion: chain
                    .merkle_proof(&spender)
                    .expect("mined transaction has a merkle proof"),
            })
        }
    };

    Ok(ProofOfBreach {
        contract: contract.clone(),
        server_preimage,
        ctx_bytes: ctx.to_bytes(),
        ctx_inclusion: chain
            .merkle_proof(&ctx_txid)
            .expect("mined transaction has a merkle proof"),
        absence,
        jtx_bytes,
    })
}
