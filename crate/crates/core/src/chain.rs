//! A deterministic single-writer ledger with payment-channel semantics.
//!
//! Ownership is modeled with byte tags; there is no script language.
//! Commitment outputs are the only timelocked outputs: within the dispute
//! window only a justice transaction may spend them, after it only a sweep
//! paying the committed balances.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hashcash::{sha256, Digest256};
use crate::Amount;

pub type Txid = Digest256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutPoint {
    pub txid: Txid,
    pub index: u32,
}

impl OutPoint {
    pub fn new(txid: Txid, index: u32) -> Self {
        OutPoint { txid, index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TxOut {
    pub owner: Vec<u8>,
    pub amount: Amount,
}

impl TxOut {
    pub fn new(owner: impl Into<Vec<u8>>, amount: Amount) -> Self {
        TxOut {
            owner: owner.into(),
            amount,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxKind {
    Open,
    Commitment,
    Justice,
    Sweep,
    Plain,
}

impl TxKind {
    fn to_u8(self) -> u8 {
        match self {
            TxKind::Open => 0,
            TxKind::Commitment => 1,
            TxKind::Justice => 2,
            TxKind::Sweep => 3,
            TxKind::Plain => 4,
        }
    }

    fn from_u8(b: u8) -> Result<Self, DecodeError> {
        Ok(match b {
            0 => TxKind::Open,
            1 => TxKind::Commitment,
            2 => TxKind::Justice,
            3 => TxKind::Sweep,
            4 => TxKind::Plain,
            other => return Err(DecodeError::invalid("tx kind", format!("{other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimTransaction {
    pub inputs: Vec<OutPoint>,
    pub outputs: Vec<TxOut>,
    pub kind: TxKind,
    pub payload: Vec<u8>,
}

impl SimTransaction {
    pub fn encode(&self, w: &mut Writer) {
        w.put_u8(self.kind.to_u8());
        w.put_len(self.inputs.len());
        for i in &self.inputs {
            w.put_fixed(i.txid.as_bytes());
            w.put_u32(i.index);
        }
        w.put_len(self.outputs.len());
        for o in &self.outputs {
            w.put_bytes(&o.owner);
            w.put_u64(o.amount);
        }
        w.put_bytes(&self.payload);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let kind = TxKind::from_u8(r.u8()?)?;
        let n = r.len()?;
        let inputs = (0..n)
            .map(|_| Ok(OutPoint::new(Digest256(r.array()?), r.u32()?)))
            .collect::<Result<_, DecodeError>>()?;
        let n = r.len()?;
        let outputs = (0..n)
            .map(|_| {
                Ok(TxOut {
                    owner: r.bytes()?,
                    amount: r.u64()?,
                })
            })
            .collect::<Result<_, DecodeError>>()?;
        let payload = r.bytes()?;
        Ok(SimTransaction {
            inputs,
            outputs,
            kind,
            payload,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    pub fn txid(&self) -> Txid {
        sha256(&self.to_bytes())
    }

    pub fn spends(&self, outpoint: &OutPoint) -> bool {
        self.inputs.contains(outpoint)
    }

    fn output_total(&self) -> Option<Amount> {
        self.outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.amount))
    }
}

/// What a commitment transaction commits to; lives in its payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentTerms {
    pub dispute_period: u64,
    pub state: u64,
    pub broadcaster: Vec<u8>,
    pub balances: Vec<TxOut>,
}

impl CommitmentTerms {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_u64(self.dispute_period);
        w.put_u64(self.state);
        w.put_bytes(&self.broadcaster);
        w.put_len(self.balances.len());
        for b in &self.balances {
            w.put_bytes(&b.owner);
            w.put_u64(b.amount);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let dispute_period = r.u64()?;
        let state = r.u64()?;
        let broadcaster = r.bytes()?;
        let n = r.len()?;
        let balances = (0..n)
            .map(|_| {
                Ok(TxOut {
                    owner: r.bytes()?,
                    amount: r.u64()?,
                })
            })
            .collect::<Result<_, DecodeError>>()?;
        r.finish()?;
        Ok(CommitmentTerms {
            dispute_period,
            state,
            broadcaster,
            balances,
        })
    }

    /// Outputs a sweep must pay once the dispute window has passed.
    pub fn sweep_outputs(&self) -> Vec<TxOut> {
        self.balances.iter().filter(|b| b.amount > 0).cloned().collect()
    }
}

/// Side on which a Merkle sibling sits relative to the running hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MerkleProof {
    pub leaf: Txid,
    pub path: Vec<(Digest256, Side)>,
    pub height: u64,
}

impl MerkleProof {
    pub fn encode(&self, w: &mut Writer) {
        w.put_fixed(self.leaf.as_bytes());
        w.put_len(self.path.len());
        for (d, side) in &self.path {
            w.put_fixed(d.as_bytes());
            w.put_u8(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
        }
        w.put_u64(self.height);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let leaf = Digest256(r.array()?);
        let n = r.len()?;
        let path = (0..n)
            .map(|_| {
                let d = Digest256(r.array()?);
                let side = match r.u8()? {
                    0 => Side::Left,
                    1 => Side::Right,
                    other => return Err(DecodeError::invalid("merkle side", format!("{other}"))),
                };
                Ok((d, side))
            })
            .collect::<Result<_, DecodeError>>()?;
        let height = r.u64()?;
        Ok(MerkleProof { leaf, path, height })
    }
}

fn merkle_parent(left: &Digest256, right: &Digest256) -> Digest256 {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(left.as_bytes());
    buf[32..].copy_from_slice(right.as_bytes());
    sha256(&buf)
}

/// Root over `leaves`; odd levels duplicate their last node, and the empty
/// tree hashes to `SHA-256("")`.
pub fn merkle_root(leaves: &[Txid]) -> Digest256 {
    if leaves.is_empty() {
        return sha256(b"");
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| merkle_parent(&pair[0], pair.get(1).unwrap_or(&pair[0])))
            .collect();
    }
    level[0]
}

/// Authentication path for the leaf at `index`.
pub fn merkle_path(leaves: &[Txid], mut index: usize) -> Vec<(Digest256, Side)> {
    let mut path = Vec::new();
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        let sibling = if index.is_multiple_of(2) {
            (*level.get(index + 1).unwrap_or(&level[index]), Side::Right)
        } else {
            (level[index - 1], Side::Left)
        };
        path.push(sibling);
        level = level
            .chunks(2)
            .map(|pair| merkle_parent(&pair[0], pair.get(1).unwrap_or(&pair[0])))
            .collect();
        index /= 2;
    }
    path
}

pub fn verify_merkle_proof(root: &Digest256, proof: &MerkleProof) -> bool {
    let folded = proof.path.iter().fold(proof.leaf, |acc, (sib, side)| match side {
        Side::Left => merkle_parent(sib, &acc),
        Side::Right => merkle_parent(&acc, sib),
    });
    &folded == root
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest256,
    pub merkle_root: Digest256,
}

impl BlockHeader {
    pub fn hash(&self) -> Digest256 {
        let mut w = Writer::new();
        w.put_u64(self.height);
        w.put_fixed(self.prev_hash.as_bytes());
        w.put_fixed(self.merkle_root.as_bytes());
        sha256(w.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimBlock {
    pub height: u64,
    pub prev_hash: Digest256,
    pub merkle_root: Digest256,
    pub transactions: Vec<SimTransaction>,
}

impl SimBlock {
    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            height: self.height,
            prev_hash: self.prev_hash,
            merkle_root: self.merkle_root,
        }
    }

    pub fn hash(&self) -> Digest256 {
        self.header().hash()
    }

    pub fn txids(&self) -> Vec<Txid> {
        self.transactions.iter().map(SimTransaction::txid).collect()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.put_u64(self.height);
        w.put_fixed(self.prev_hash.as_bytes());
        w.put_fixed(self.merkle_root.as_bytes());
        w.put_len(self.transactions.len());
        for tx in &self.transactions {
            w.put_bytes(&tx.to_bytes());
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let height = r.u64()?;
        let prev_hash = Digest256(r.array()?);
        let merkle_root = Digest256(r.array()?);
        let n = r.len()?;
        let transactions = (0..n)
            .map(|_| SimTransaction::from_bytes(&r.bytes()?))
            .collect::<Result<_, _>>()?;
        Ok(SimBlock {
            height,
            prev_hash,
            merkle_root,
            transactions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxRejection {
    #[error("output {0:?} already spent")]
    DoubleSpend(OutPoint),
    #[error("output {0:?} does not exist")]
    UnknownOutput(OutPoint),
    #[error("transaction {0} already on chain")]
    DuplicateTxid(Txid),
    #[error("outputs do not balance inputs")]
    ValueMismatch,
    #[error("justice spend at height {height} after dispute window closed at {closes}")]
    DisputeWindowClosed { height: u64, closes: u64 },
    #[error("commitment output spent at height {height} before dispute window closes at {closes}")]
    DisputeWindowOpen { height: u64, closes: u64 },
    #[error("justice transaction must spend a single commitment output")]
    InvalidJustice,
    #[error("sweep outputs differ from committed balances")]
    SweepMismatch,
    #[error("malformed transaction: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("transaction {0} not found on chain")]
    NotFound(Txid),
    #[error("no block at height {0}")]
    NoSuchBlock(u64),
    #[error(transparent)]
    Rejected(#[from] TxRejection),
    #[error("snapshot decode failed: {0}")]
    Decode(#[from] DecodeError),
    #[error("snapshot block {height} does not replay to the recorded header")]
    SnapshotMismatch { height: u64 },
}

#[derive(Debug, Clone)]
struct Utxo {
    amount: Amount,
    height: u64,
    /// Set for commitment outputs.
    commitment: Option<CommitmentTerms>,
}

/// Result of appending a block: the block and the transactions left out.
#[derive(Debug, Clone)]
pub struct AppendOutcome {
    pub height: u64,
    pub rejected: Vec<(usize, TxRejection)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxLocation {
    pub height: u64,
    pub position: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SimChain {
    blocks: Vec<SimBlock>,
    utxos: HashMap<OutPoint, Utxo>,
    spends: HashMap<OutPoint, (Txid, u64)>,
    index: HashMap<Txid, TxLocation>,
    mempool: Vec<SimTransaction>,
}

impl SimChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blocks(&self) -> &[SimBlock] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&SimBlock> {
        self.blocks.get(usize::try_from(height).ok()?)
    }

    /// Height of the last block, `None` while the chain is empty.
    pub fn tip_height(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.height)
    }

    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn locate(&self, txid: &Txid) -> Option<TxLocation> {
        self.index.get(txid).copied()
    }

    pub fn transaction(&self, txid: &Txid) -> Option<&SimTransaction> {
        let loc = self.locate(txid)?;
        self.block(loc.height)?.transactions.get(loc.position)
    }

    /// The unique spender of an output, with its block height.
    pub fn spent_by(&self, txid: &Txid, output_index: u32) -> Option<(Txid, u64)> {
        self.spends.get(&OutPoint::new(*txid, output_index)).copied()
    }

    fn check_tx(
        &self,
        tx: &SimTransaction,
        height: u64,
        txid: &Txid,
        pending: &HashSet<OutPoint>,
    ) -> Result<(), TxRejection> {
        if self.index.contains_key(txid) {
            return Err(TxRejection::DuplicateTxid(*txid));
        }
        let mut seen = HashSet::new();
        let mut input_total: Amount = 0;
        for input in &tx.inputs {
            if !seen.insert(*input) || self.spends.contains_key(input) || pending.contains(input) {
                return Err(TxRejection::DoubleSpend(*input));
            }
            let utxo = self
                .utxos
                .get(input)
                .ok_or(TxRejection::UnknownOutput(*input))?;
            input_total = input_total
                .checked_add(utxo.amount)
                .ok_or(TxRejection::ValueMismatch)?;

            if let Some(terms) = &utxo.commitment {
                let closes = utxo.height.saturating_add(terms.dispute_period);
                if tx.kind == TxKind::Justice {
                    if height > closes {
                        return Err(TxRejection::DisputeWindowClosed { height, closes });
                    }
                } else if height <= closes {
                    return Err(TxRejection::DisputeWindowOpen { height, closes });
                } else if tx.kind == TxKind::Sweep && tx.outputs != terms.sweep_outputs() {
                    return Err(TxRejection::SweepMismatch);
                }
            } else if tx.kind == TxKind::Justice {
                return Err(TxRejection::InvalidJustice);
            }
        }
        if tx.kind == TxKind::Justice && tx.inputs.len() != 1 {
            return Err(TxRejection::InvalidJustice);
        }
        if tx.kind == TxKind::Commitment {
            CommitmentTerms::from_bytes(&tx.payload)
                .map_err(|e| TxRejection::Malformed(e.to_string()))?;
            if tx.outputs.len() != 1 {
                return Err(TxRejection::Malformed(
                    "commitment must have exactly one output".into(),
                ));
            }
        }
        let output_total = tx.output_total().ok_or(TxRejection::ValueMismatch)?;
        if !tx.inputs.is_empty() && output_total != input_total {
            return Err(TxRejection::ValueMismatch);
        }
        Ok(())
    }

    fn apply_tx(&mut self, tx: &SimTransaction, txid: Txid, height: u64, position: usize) {
        for input in &tx.inputs {
            self.utxos.remove(input);
            self.spends.insert(*input, (txid, height));
        }
        let commitment = match tx.kind {
            TxKind::Commitment => CommitmentTerms::from_bytes(&tx.payload).ok(),
            _ => None,
        };
        for (i, out) in tx.outputs.iter().enumerate() {
            self.utxos.insert(
                OutPoint::new(txid, i as u32),
                Utxo {
                    amount: out.amount,
                    height,
                    commitment: commitment.clone(),
                },
            );
        }
        self.index.insert(txid, TxLocation { height, position });
    }

    /// Appends a block built from `txs`. Invalid transactions are dropped
    /// individually; the rest are processed in order.
    pub fn append_block(&mut self, txs: Vec<SimTransaction>) -> AppendOutcome {
        let height = self.next_height();
        let mut accepted = Vec::with_capacity(txs.len());
        let mut rejected = Vec::new();
        for (i, tx) in txs.into_iter().enumerate() {
            let txid = tx.txid();
            match self.check_tx(&tx, height, &txid, &HashSet::new()) {
                Ok(()) => {
                    self.apply_tx(&tx, txid, height, accepted.len());
                    accepted.push(tx);
                }
                Err(e) => rejected.push((i, e)),
            }
        }
        let leaves: Vec<Txid> = accepted.iter().map(SimTransaction::txid).collect();
        let prev_hash = self.blocks.last().map(SimBlock::hash).unwrap_or(Digest256::ZERO);
        self.blocks.push(SimBlock {
            height,
            prev_hash,
            merkle_root: merkle_root(&leaves),
            transactions: accepted,
        });
        AppendOutcome { height, rejected }
    }

    /// Queues a transaction for the next block after checking it would be
    /// accepted there.
    pub fn broadcast(&mut self, tx: SimTransaction) -> Result<Txid, TxRejection> {
        let txid = tx.txid();
        if self.mempool.iter().any(|p| p.txid() == txid) {
            return Err(TxRejection::DuplicateTxid(txid));
        }
        let pending: HashSet<OutPoint> = self
            .mempool
            .iter()
            .flat_map(|p| p.inputs.iter().copied())
            .collect();
        self.check_tx(&tx, self.next_height(), &txid, &pending)?;
        self.mempool.push(tx);
        Ok(txid)
    }

    pub fn mempool(&self) -> &[SimTransaction] {
        &self.mempool
    }

    /// Mines the mempool into the next block.
    pub fn mine_block(&mut self) -> AppendOutcome {
        let txs = std::mem::take(&mut self.mempool);
        self.append_block(txs)
    }

    pub fn merkle_proof(&self, txid: &Txid) -> Result<MerkleProof, ChainError> {
        let loc = self.locate(txid).ok_or(ChainError::NotFound(*txid))?;
        let block = self.block(loc.height).ok_or(ChainError::NoSuchBlock(loc.height))?;
        Ok(MerkleProof {
            leaf: *txid,
            path: merkle_path(&block.txids(), loc.position),
            height: loc.height,
        })
    }

    pub fn headers(&self) -> Vec<BlockHeader> {
        self.blocks.iter().map(SimBlock::header).collect()
    }

    /// Every block as a 4-byte length followed by its canonical bytes.
    pub fn export_snapshot(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for b in &self.blocks {
            let mut inner = Writer::new();
            b.encode(&mut inner);
            w.put_bytes(inner.as_slice());
        }
        w.into_bytes()
    }

    /// Rebuilds a chain by replaying a snapshot through the acceptance rules.
    pub fn import_snapshot(bytes: &[u8]) -> Result<Self, ChainError> {
        let mut r = Reader::new(bytes);
        let mut chain = SimChain::new();
        while r.remaining() > 0 {
            let raw = r.bytes()?;
            let mut br = Reader::new(&raw);
            let block = SimBlock::decode(&mut br)?;
            br.finish()?;
            let height = block.height;
            let expected = block.hash();
            let outcome = chain.append_block(block.transactions);
            if outcome.height != height
                || !outcome.rejected.is_empty()
                || chain.blocks.last().map(SimBlock::hash) != Some(expected)
            {
                return Err(ChainError::SnapshotMismatch { height });
            }
        }
        Ok(chain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("unknown party")]
    UnknownParty,
    #[error("payer balance {balance} below payment {amount}")]
    InsufficientBalance { balance: Amount, amount: Amount },
    #[error("directional channel only pays from its opener")]
    DirectionalViolation,
    #[error("channel fund overflow")]
    Overflow,
}

/// Justice transaction handed to `holder` when a state is revoked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Revocation {
    pub state: usize,
    pub holder: Vec<u8>,
    pub ctx: SimTransaction,
    pub jtx: SimTransaction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelUpdate {
    pub new_state: usize,
    pub revoked: Vec<Revocation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelState {
    pub balances: (Amount, Amount),
    /// Commitment broadcastable by the first party.
    pub ctx_a: SimTransaction,
    /// Commitment broadcastable by the second party.
    pub ctx_b: SimTransaction,
}

/// A two-party channel. A directional channel only pays from `parties.0`
/// to `parties.1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub parties: (Vec<u8>, Vec<u8>),
    pub fund: Amount,
    pub directional: bool,
    pub dispute_period: u64,
    pub topen: SimTransaction,
    pub states: Vec<ChannelState>,
}

impl Channel {
    /// Builds the opening transaction and the first commitment pair.
    /// `label` keeps opening txids distinct between channels of the same parties.
    pub fn open(
        label: &[u8],
        a: (&[u8], Amount),
        b: (&[u8], Amount),
        dispute_period: u64,
        directional: bool,
    ) -> Result<Self, ChannelError> {
        let fund = a.1.checked_add(b.1).ok_or(ChannelError::Overflow)?;
        let mut owner = b"2of2:".to_vec();
        owner.extend_from_slice(a.0);
        owner.push(b':');
        owner.extend_from_slice(b.0);
        let topen = SimTransaction {
            inputs: vec![],
            outputs: vec![TxOut::new(owner, fund)],
            kind: TxKind::Open,
            payload: label.to_vec(),
        };
        let mut ch = Channel {
            parties: (a.0.to_vec(), b.0.to_vec()),
            fund,
            directional,
            dispute_period,
            topen,
            states: Vec::new(),
        };
        ch.push_state((a.1, b.1));
        Ok(ch)
    }

    fn commitment(&self, state: u64, broadcaster: &[u8], balances: (Amount, Amount)) -> SimTransaction {
        let terms = CommitmentTerms {
            dispute_period: self.dispute_period,
            state,
            broadcaster: broadcaster.to_vec(),
            balances: vec![
                TxOut::new(self.parties.0.clone(), balances.0),
                TxOut::new(self.parties.1.clone(), balances.1),
            ],
        };
        SimTransaction {
            inputs: vec![OutPoint::new(self.topen.txid(), 0)],
            outputs: vec![TxOut::new(b"dispute".to_vec(), self.fund)],
            kind: TxKind::Commitment,
            payload: terms.to_bytes(),
        }
    }

    fn push_state(&mut self, balances: (Amount, Amount)) {
        let idx = self.states.len() as u64;
        let ctx_a = self.commitment(idx, &self.parties.0.clone(), balances);
        let ctx_b = self.commitment(idx, &self.parties.1.clone(), balances);
        self.states.push(ChannelState {
            balances,
            ctx_a,
            ctx_b,
        });
    }

    pub fn latest(&self) -> usize {
        self.states.len() - 1
    }

    pub fn balances(&self) -> (Amount, Amount) {
        self.states[self.latest()].balances
    }

    /// Justice transaction against `ctx`, paying the whole fund to `victim`.
    pub fn justice_for(&self, ctx: &SimTransaction, victim: &[u8]) -> SimTransaction {
        SimTransaction {
            inputs: vec![OutPoint::new(ctx.txid(), 0)],
            outputs: vec![TxOut::new(victim.to_vec(), self.fund)],
            kind: TxKind::Justice,
            payload: Vec::new(),
        }
    }

    /// Moves `amount` from `payer` to the other party and revokes the previous state.
    pub fn update(&mut self, payer: &[u8], amount: Amount) -> Result<ChannelUpdate, ChannelError> {
        let (bal_a, bal_b) = self.balances();
        let payer_is_a = if payer == self.parties.0.as_slice() {
            true
        } else if payer == self.parties.1.as_slice() {
            false
        } else {
            return Err(ChannelError::UnknownParty);
        };
        if self.directional && !payer_is_a {
            return Err(ChannelError::DirectionalViolation);
        }
        let balance = if payer_is_a { bal_a } else { bal_b };
        if balance < amount {
            return Err(ChannelError::InsufficientBalance { balance, amount });
        }
        let next = if payer_is_a {
            (bal_a - amount, bal_b + amount)
        } else {
            (bal_a + amount, bal_b - amount)
        };
        let old = self.latest();
        let old_state = self.states[old].clone();
        self.push_state(next);

        let mut revoked = vec![Revocation {
            state: old,
            holder: self.parties.1.clone(),
            jtx: self.justice_for(&old_state.ctx_a, &self.parties.1),
            ctx: old_state.ctx_a.clone(),
        }];
        if !self.directional {
            revoked.push(Revocation {
                state: old,
                holder: self.parties.0.clone(),
                jtx: self.justice_for(&old_state.ctx_b, &self.parties.0),
                ctx: old_state.ctx_b,
            });
        }
        Ok(ChannelUpdate {
            new_state: self.latest(),
            revoked,
        })
    }
}

/// Sweep of a commitment output once its dispute window is over.
pub fn sweep_tx(ctx: &SimTransaction) -> Result<SimTransaction, DecodeError> {
    let terms = CommitmentTerms::from_bytes(&ctx.payload)?;
    Ok(SimTransaction {
        inputs: vec![OutPoint::new(ctx.txid(), 0)],
        outputs: terms.sweep_outputs(),
        kind: TxKind::Sweep,
        payload: Vec::new(),
    })
}
