//! Encoder written from the canonical rules alone, used to cross-check the
//! library's serializers.
#![allow(dead_code)]

use hashrep_core::breach::ProofOfBreach;
use hashrep_core::chain::{MerkleProof, Side, SimTransaction};
use hashrep_core::docs::{Contract, ServerAd};
use hashrep_core::identity::ServerIdentity;

/// Test-side encoder: fixed-width big-endian integers, 4-byte length prefixes
/// on byte strings and lists, fixed arrays raw.
#[derive(Default)]
pub struct Enc(pub Vec<u8>);

impl Enc {
    pub fn tag(t: u8) -> Self {
        Enc(vec![t])
    }
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    pub fn raw(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    pub fn var(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.raw(b);
    }
    pub fn identity(&mut self, id: &ServerIdentity) {
        self.raw(id.public_key.as_bytes());
        self.var(id.market_id.as_bytes());
        self.u64(id.nonce.0);
    }
    pub fn contract_body(&mut self, c: &Contract) {
        let t = &c.terms;
        self.var(t.market_id.as_bytes());
        self.identity(&t.server);
        self.u32(t.txid_prefixes.len() as u32);
        t.txid_prefixes.iter().for_each(|p| self.raw(p));
        self.u32(t.encrypted_jtxs.len() as u32);
        t.encrypted_jtxs.iter().for_each(|b| self.var(b));
        self.u64(t.monitor_range.0);
        self.u64(t.monitor_range.1);
        self.u64(t.dispute_period);
        self.raw(t.server_hash_image.image.as_bytes());
        self.raw(t.client_hash_image.image.as_bytes());
        self.u64(t.value);
        self.u64(t.fee);
        self.raw(&c.signature);
    }
    pub fn merkle(&mut self, m: &MerkleProof) {
        self.raw(m.leaf.as_bytes());
        self.u32(m.path.len() as u32);
        for (d, side) in &m.path {
            self.raw(d.as_bytes());
            self.u8(matches!(side, Side::Right) as u8);
        }
        self.u64(m.height);
    }
    pub fn tx(&mut self, tx: &SimTransaction) {
        self.u8(tx.kind as u8);
        self.u32(tx.inputs.len() as u32);
        for i in &tx.inputs {
            self.raw(i.txid.as_bytes());
            self.u32(i.index);
        }
        self.u32(tx.outputs.len() as u32);
        for o in &tx.outputs {
            self.var(&o.owner);
            self.u64(o.amount);
        }
        self.var(&tx.payload);
    }
}

pub fn encode_contract(c: &Contract) -> Vec<u8> {
    let mut e = Enc::tag(0x02);
    e.contract_body(c);
    e.0
}

pub fn encode_ad(ad: &ServerAd) -> Vec<u8> {
    let mut e = Enc::tag(0x01);
    e.identity(&ad.identity);
    e.var(&ad.endpoint);
    e.u32(ad.quotes.len() as u32);
    for q in &ad.quotes {
        e.u64(q.max_value);
        e.u64(q.fee);
    }
    e.raw(&ad.signature);
    e.0
}

pub fn encode_proof(p: &ProofOfBreach) -> Vec<u8> {
    let mut e = Enc::tag(0x03);
    e.contract_body(&p.contract);
    e.raw(&p.server_preimage.0);
    e.var(&p.ctx_bytes);
    e.merkle(&p.ctx_inclusion);
    match &p.absence {
        None => e.u8(0),
        Some(a) => {
            e.u8(1);
            e.var(&a.spender);
            e.merkle(&a.inclusion);
        }
    }
    e.var(&p.jtx_bytes);
    e.0
}
