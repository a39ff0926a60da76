#![allow(dead_code)]

pub mod indep;

use hashrep_core::breach::{AbsenceEvidence, ProofOfBreach};
use hashrep_core::chain::{sweep_tx, Channel, Revocation, SimChain, SimTransaction};
use hashrep_core::docs::{sign_contract, Contract, ContractTerms};
use hashrep_core::hashcash::mine;
use hashrep_core::identity::{keygen, MarketId, Preimage, ServerIdentity, SigningKey};
use hashrep_core::watchtower::{encrypt_jtx, respond, txid_prefix, WatchSession};

pub const DISPUTE: u64 = 4;

pub fn market() -> MarketId {
    MarketId::new(b"watchtowers".to_vec()).unwrap()
}

pub fn server(seed: u8) -> (SigningKey, ServerIdentity) {
    let (sk, pk) = keygen([seed; 32]);
    let m = mine(&pk, &market(), 4, 0, u64::MAX).unwrap();
    (sk, ServerIdentity::new(pk, market(), m.nonce))
}

/// Alice and bob with two updates; alice holds justice for bob's states 0 and 1.
pub fn channel() -> (Channel, Vec<Revocation>) {
    let mut ch = Channel::open(b"fixture", (b"alice", 50), (b"bob", 50), DISPUTE, false).unwrap();
    let mut held = Vec::new();
    for amount in [10, 5] {
        held.extend(ch.update(b"bob", amount).unwrap().revoked.into_iter().filter(|r| r.holder == b"alice"));
    }
    (ch, held)
}

pub fn contract_for(
    key: &SigningKey,
    id: &ServerIdentity,
    revs: &[Revocation],
    range: (u64, u64),
    server_pre: Preimage,
    client_pre: Preimage,
) -> Contract {
    let terms = ContractTerms {
        market_id: market(),
        server: id.clone(),
        txid_prefixes: revs.iter().map(|r| txid_prefix(&r.ctx.txid())).collect(),
        encrypted_jtxs: revs.iter().map(|r| encrypt_jtx(&r.jtx.to_bytes(), &r.ctx.txid())).collect(),
        monitor_range: range,
        dispute_period: DISPUTE,
        server_hash_image: server_pre.lock(),
        client_hash_image: client_pre.lock(),
        value: 100,
        fee: 3,
    };
    sign_contract(terms, key).unwrap()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Tower {
    Honest,
    Lazy,
}

pub struct Fixture {
    pub chain: SimChain,
    pub channel: Channel,
    pub revs: Vec<Revocation>,
    pub key: SigningKey,
    pub identity: ServerIdentity,
    pub contract: Contract,
    pub server_pre: Preimage,
    pub client_pre: Preimage,
    pub ctx: SimTransaction,
    pub ctx_height: u64,
}

impl Fixture {
    pub fn closes(&self) -> u64 {
        self.ctx_height + DISPUTE
    }
}

/// Publishes bob's revoked state 0 at height 2 and mines `after` more blocks.
/// With `sweep`, bob sweeps as soon as the window allows.
pub fn scenario(tower: Tower, range: (u64, u64), after: u64, sweep: bool) -> Fixture {
    let (channel, revs) = channel();
    let (key, identity) = server(7);
    let server_pre = Preimage([0x11; 32]);
    let client_pre = Preimage([0x22; 32]);
    let contract = contract_for(&key, &identity, &revs, range, server_pre, client_pre);
    let session = WatchSession::from_contract(&contract);

    let mut chain = SimChain::new();
    chain.append_block(vec![channel.topen.clone()]);
    chain.append_block(vec![]);
    let ctx = revs[0].ctx.clone();
    chain.broadcast(ctx.clone()).unwrap();
    for _ in 0..after + 1 {
        let h = chain.mine_block().height;
        let hits = session.scan_block(chain.block(h).unwrap());
        if tower == Tower::Honest {
            respond(&hits, &mut chain).unwrap();
        }
        if sweep && h == 2 + DISPUTE && chain.spent_by(&ctx.txid(), 0).is_none() {
            chain.broadcast(sweep_tx(&ctx).unwrap()).unwrap();
        }
    }
    Fixture {
        chain,
        channel,
        revs,
        key,
        identity,
        contract,
        server_pre,
        client_pre,
        ctx,
        ctx_height: 2,
    }
}

/// A proof assembled from chain data with none of `build_proof`'s checks.
pub fn forge(f: &Fixture, entry: usize, with_absence: bool) -> ProofOfBreach {
    let ctx = &f.revs[entry].ctx;
    let absence = if with_absence {
        f.chain.spent_by(&ctx.txid(), 0).map(|(spender, _)| AbsenceEvidence {
            spender: f.chain.transaction(&spender).unwrap().to_bytes(),
            inclusion: f.chain.merkle_proof(&spender).unwrap(),
        })
    } else {
        None
    };
    ProofOfBreach {
        contract: f.contract.clone(),
        server_preimage: f.server_pre,
        ctx_bytes: ctx.to_bytes(),
        ctx_inclusion: f.chain.merkle_proof(&ctx.txid()).unwrap(),
        absence,
        jtx_bytes: f.revs[entry].jtx.to_bytes(),
    }
}
