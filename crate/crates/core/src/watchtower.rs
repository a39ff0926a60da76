//! Watchtower monitoring: prefix matching, justice decryption and response.
//!
//! The tower stores the first 16 bytes of each revoked commitment txid and
//! the justice transaction encrypted under the other 16 bytes. It learns
//! nothing about a channel until one of those commitments is mined.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use thiserror::Error;

use crate::chain::{SimBlock, SimChain, SimTransaction, TxRejection, Txid};
use crate::codec::{DecodeError, Reader, Writer};
use crate::docs::Contract;
use crate::hashcash::{sha256, Digest256};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("ciphertext failed authentication")]
    AuthFailure,
}

fn cipher_for(ctx_txid: &Txid) -> ChaCha20Poly1305 {
    // The 16-byte key half is stretched to a full ChaCha20 key.
    let key = sha256(&ctx_txid.as_bytes()[16..]);
    ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()))
}

/// Each key encrypts exactly one justice transaction, so a fixed nonce is safe.
const ZERO_NONCE: [u8; 12] = [0u8; 12];

pub fn encrypt_jtx(jtx: &[u8], ctx_txid: &Txid) -> Vec<u8> {
    cipher_for(ctx_txid)
        .encrypt(Nonce::from_slice(&ZERO_NONCE), jtx)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers")
}

pub fn decrypt_jtx(blob: &[u8], ctx_txid: &Txid) -> Result<Vec<u8>, CryptoError> {
    cipher_for(ctx_txid)
        .decrypt(Nonce::from_slice(&ZERO_NONCE), blob)
        .map_err(|_| CryptoError::AuthFailure)
}

pub fn txid_prefix(txid: &Txid) -> [u8; 16] {
    let mut p = [0u8; 16];
    p.copy_from_slice(&txid.as_bytes()[..16]);
    p
}

/// A decrypted justice transaction ready for broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreachHit {
    pub ctx_txid: Txid,
    pub height: u64,
    pub jtx: SimTransaction,
}

/// What the tower holds for one contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchSession {
    pub contract: Digest256,
    pub entries: Vec<([u8; 16], Vec<u8>)>,
    pub monitor_range: (u64, u64),
    pub active: bool,
}

impl WatchSession {
    pub fn from_contract(c: &Contract) -> Self {
        WatchSession {
            contract: c.digest(),
            entries: c
                .terms
                .txid_prefixes
                .iter()
                .copied()
                .zip(c.terms.encrypted_jtxs.iter().cloned())
                .collect(),
            monitor_range: c.terms.monitor_range,
            active: true,
        }
    }

    pub fn covers(&self, height: u64) -> bool {
        self.active && (self.monitor_range.0..=self.monitor_range.1).contains(&height)
    }

    /// Hits for every transaction whose txid prefix matches a stored entry and
    /// whose blob decrypts under the txid's second half. Blocks outside the
    /// monitor range, or an inactive session, yield nothing.
    pub fn scan_block(&self, block: &SimBlock) -> Vec<BreachHit> {
        if !self.covers(block.height) {
            return Vec::new();
        }
        let mut hits = Vec::new();
        for tx in &block.transactions {
            let txid = tx.txid();
            let prefix = txid_prefix(&txid);
            for (p, blob) in &self.entries {
                if *p != prefix {
                    continue;
                }
                let Ok(plain) = decrypt_jtx(blob, &txid) else {
                    continue;
                };
                let Ok(jtx) = SimTransaction::from_bytes(&plain) else {
                    continue;
                };
                hits.push(BreachHit {
                    ctx_txid: txid,
                    height: block.height,
                    jtx,
                });
            }
        }
        hits
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_fixed(self.contract.as_bytes());
        w.put_u64(self.monitor_range.0);
        w.put_u64(self.monitor_range.1);
        w.put_bool(self.active);
        w.put_len(self.entries.len());
        for (p, blob) in &self.entries {
            w.put_fixed(p);
            w.put_bytes(blob);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let contract = Digest256(r.array()?);
        let monitor_range = (r.u64()?, r.u64()?);
        let active = r.bool()?;
        let n = r.len()?;
        let entries = (0..n)
            .map(|_| Ok((r.array()?, r.bytes()?)))
            .collect::<Result<_, DecodeError>>()?;
        r.finish()?;
        Ok(WatchSession {
            contract,
            entries,
            monitor_range,
            active,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub ctx_txid: Txid,
    pub jtx_txid: Txid,
    /// Height of the block the justice transaction is queued for.
    pub target_height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("justice for {ctx_txid} rejected: {rejection}")]
pub struct RespondError {
    pub ctx_txid: Txid,
    pub rejection: TxRejection,
}

/// Broadcasts each hit's justice transaction for the next block. A justice
/// transaction already waiting in the mempool counts as published.
pub fn respond(hits: &[BreachHit], chain: &mut SimChain) -> Result<Vec<Receipt>, RespondError> {
    let mut receipts = Vec::with_capacity(hits.len());
    for hit in hits {
        let jtx_txid = hit.jtx.txid();
        let queued = chain.mempool().iter().any(|t| t.txid() == jtx_txid);
        if !queued {
            chain.broadcast(hit.jtx.clone()).map_err(|rejection| RespondError {
                ctx_txid: hit.ctx_txid,
                rejection,
            })?;
        }
        receipts.push(Receipt {
            ctx_txid: hit.ctx_txid,
            jtx_txid,
            target_height: chain.next_height(),
        });
    }
    Ok(receipts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Channel;

    #[test]
    fn round_trip() {
        let txid = sha256(b"ctx");
        let blob = encrypt_jtx(b"justice", &txid);
        assert_eq!(decrypt_jtx(&blob, &txid).unwrap(), b"justice");
        let empty = encrypt_jtx(b"", &txid);
        assert_eq!(decrypt_jtx(&empty, &txid).unwrap(), b"");
    }

    #[test]
    fn wrong_keys_fail() {
        let txid = sha256(b"ctx");
        let blob = encrypt_jtx(b"justice", &txid);
        for i in 0u32..100 {
            let wrong = sha256(&i.to_be_bytes());
            assert_eq!(decrypt_jtx(&blob, &wrong), Err(CryptoError::AuthFailure));
        }
    }

    #[test]
    fn key_is_second_half_only() {
        let txid = sha256(b"ctx");
        let blob = encrypt_jtx(b"j", &txid);
        let mut other_prefix = txid;
        other_prefix.0[0] ^= 0xFF;
        assert_eq!(decrypt_jtx(&blob, &other_prefix).unwrap(), b"j");
    }

    fn session_for(ctxs: &[&SimTransaction], jtxs: &[&SimTransaction], range: (u64, u64)) -> WatchSession {
        WatchSession {
            contract: Digest256::ZERO,
            entries: ctxs
                .iter()
                .zip(jtxs)
                .map(|(c, j)| (txid_prefix(&c.txid()), encrypt_jtx(&j.to_bytes(), &c.txid())))
                .collect(),
            monitor_range: range,
            active: true,
        }
    }

    #[test]
    fn scan_and_respond() {
        let mut ch = Channel::open(b"c", (b"alice", 5), (b"bob", 5), 10, false).unwrap();
        let r1 = ch.update(b"bob", 1).unwrap().revoked;
        let r2 = ch.update(b"bob", 1).unwrap().revoked;
        let a1 = r1.iter().find(|r| r.holder == b"alice").unwrap();
        let a2 = r2.iter().find(|r| r.holder == b"alice").unwrap();
        let session = session_for(&[&a1.ctx, &a2.ctx], &[&a1.jtx, &a2.jtx], (0, 100));

        let mut chain = SimChain::new();
        chain.append_block(vec![ch.topen.clone()]);
        assert!(session.scan_block(chain.block(0).unwrap()).is_empty());

        chain.append_block(vec![a1.ctx.clone()]);
        let hits = session.scan_block(chain.block(1).unwrap());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].jtx, a1.jtx);

        let receipts = respond(&hits, &mut chain).unwrap();
        assert_eq!(receipts[0].target_height, 2);
        // A second tower with the same hit is a no-op.
        respond(&hits, &mut chain).unwrap();
        chain.mine_block();
        assert_eq!(chain.spent_by(&a1.ctx.txid(), 0), Some((a1.jtx.txid(), 2)));
    }

    #[test]
    fn two_stale_states_in_one_block() {
        // Commitments of two different channels revoked against the same client.
        let mut c1 = Channel::open(b"c1", (b"alice", 5), (b"bob", 5), 10, false).unwrap();
        let mut c2 = Channel::open(b"c2", (b"alice", 5), (b"bob", 5), 10, false).unwrap();
        let r1 = c1.update(b"bob", 1).unwrap().revoked;
        let r2 = c2.update(b"bob", 2).unwrap().revoked;
        let a1 = r1.iter().find(|r| r.holder == b"alice").unwrap();
        let a2 = r2.iter().find(|r| r.holder == b"alice").unwrap();
        let session = session_for(&[&a1.ctx, &a2.ctx], &[&a1.jtx, &a2.jtx], (0, 100));
        let mut chain = SimChain::new();
        chain.append_block(vec![c1.topen.clone(), c2.topen.clone()]);
        chain.append_block(vec![a1.ctx.clone(), a2.ctx.clone()]);
        assert_eq!(session.scan_block(chain.block(1).unwrap()).len(), 2);
    }

    #[test]
    fn out_of_range_or_inactive() {
        let mut ch = Channel::open(b"c", (b"alice", 5), (b"bob", 5), 10, false).unwrap();
        let r = ch.update(b"bob", 1).unwrap().revoked;
        let a = r.iter().find(|r| r.holder == b"alice").unwrap();
        let mut session = session_for(&[&a.ctx], &[&a.jtx], (5, 9));
        let mut chain = SimChain::new();
        chain.append_block(vec![ch.topen.clone()]);
        chain.append_block(vec![a.ctx.clone()]);
        assert!(session.scan_block(chain.block(1).unwrap()).is_empty());
        session.monitor_range = (0, 9);
        session.active = false;
        assert!(session.scan_block(chain.block(1).unwrap()).is_empty());
    }

    #[test]
    fn latest_state_has_no_hit() {
        let mut ch = Channel::open(b"c", (b"alice", 5), (b"bob", 5), 10, false).unwrap();
        let r = ch.update(b"bob", 1).unwrap().revoked;
        let a = r.iter().find(|r| r.holder == b"alice").unwrap();
        let session = session_for(&[&a.ctx], &[&a.jtx], (0, 10));
        let mut chain = SimChain::new();
        chain.append_block(vec![ch.topen.clone()]);
        chain.append_block(vec![ch.states[ch.latest()].ctx_b.clone()]);
        assert!(session.scan_block(chain.block(1).unwrap()).is_empty());
    }

    #[test]
    fn session_serialization() {
        let s = WatchSession {
            contract: sha256(b"c"),
            entries: vec![([3; 16], vec![1, 2, 3]), ([4; 16], vec![])],
            monitor_range: (7, 70),
            active: false,
        };
        assert_eq!(WatchSession::from_bytes(&s.to_bytes()).unwrap(), s);
    }
}
