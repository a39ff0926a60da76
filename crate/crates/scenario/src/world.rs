//! The simulated market: one client (alice), one counterparty (bob), any
//! number of towers and storage nodes, all driven by scenario events.

use std::collections::{BTreeMap, HashSet};

use hashrep_core::breach::{
    build_proof, verify_proof, AbsenceEvidence, ChainSource, HeaderChain, NoBreach, ProofOfBreach, Verdict,
};
use hashrep_core::chain::{sweep_tx, Channel, Revocation, SimChain, TxKind, Txid};
use hashrep_core::docs::{sign_contract, terminate, verify_contract_signature, Contract, ContractState, ContractTerms};
use hashrep_core::hashcash::{Cost, ReputationCostModel};
use hashrep_core::identity::{MarketId, Preimage, ServerIdentity, SigningKey};
use hashrep_core::market::{
    accepts_bribes, bribe_safe, purchase, select_many, settle, AtomicExchange, BribeScenario, BribedContract,
    DirectionalChannel, ModelClause, Screener, SelectionParams, DEFAULT_K,
};
use hashrep_core::repstore::{RecordKind, StorageNode, StoreConfig, Submission};
use hashrep_core::watchtower::{decrypt_jtx, encrypt_jtx, respond, txid_prefix, WatchSession};
use hashrep_core::Amount;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::records::{low_priority_ad, mint_server, parse_quotes, ChainVerifier};
use crate::report::{ExpectationResult, LogEntry, RunReport};
use crate::script::{Event, Scenario, ScriptError};

pub const ALICE: &[u8] = b"alice";
pub const BOB: &[u8] = b"bob";

/// Market parameters read from the scenario's `key = value` header.
#[derive(Debug, Clone)]
pub struct MarketConfig {
    pub market: MarketId,
    pub model: ReputationCostModel,
    pub k: u64,
    pub dispute_period: u64,
    pub capacity: usize,
    pub ticket_bits: u32,
    pub nodes: usize,
}

impl MarketConfig {
    pub fn from_scenario(s: &Scenario) -> Result<Self, ScriptError> {
        let bad = |message: String| ScriptError::Parse { line: 0, message };
        let market: String = s.setting("market", "watchtowers".to_string())?;
        let hash_price: Cost = s.setting("hash_price", Cost::from_integer(1))?;
        let nodes = s.setting("nodes", 2usize)?;
        if nodes == 0 {
            return Err(bad("nodes must be at least 1".into()));
        }
        Ok(MarketConfig {
            market: MarketId::new(market.into_bytes()).map_err(|e| bad(e.to_string()))?,
            model: ReputationCostModel::new(hash_price, 0),
            k: s.setting("k", DEFAULT_K)?,
            dispute_period: s.setting("dispute_period", 6)?,
            capacity: s.setting("capacity", 64)?,
            ticket_bits: s.setting("ticket_bits", 4)?,
            nodes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    Lazy,
}

#[derive(Debug)]
pub struct Tower {
    pub name: String,
    pub key: SigningKey,
    pub identity: ServerIdentity,
    pub behavior: Behavior,
    pub sessions: Vec<WatchSession>,
}

/// A purchased contract and everything the client keeps about it.
#[derive(Debug, Clone)]
pub struct Hire {
    pub tower: usize,
    pub contract: Contract,
    pub state: ContractState,
    /// Channel state behind each contract entry.
    pub states: Vec<usize>,
    pub server_preimage: Preimage,
    pub client_preimage: Preimage,
    pub proofs: Vec<ProofOfBreach>,
}

/// Ground truth about one published revoked commitment.
#[derive(Debug, Clone)]
pub struct CheatRecord {
    pub state: usize,
    pub ctx_txid: Txid,
    pub mined_at: Option<u64>,
    pub responses: Vec<Txid>,
    pub remedied_at: Option<u64>,
    pub sweep: Option<Txid>,
    pub swept_at: Option<u64>,
}

/// Outcome of checking one contract entry against the ground-truth log.
#[derive(Debug, Clone)]
pub struct AuditRow {
    pub tower: String,
    pub entry: usize,
    pub state: usize,
    pub truth: bool,
    pub built: Result<(), NoBreach>,
    /// Full and light verdicts for the honestly built proof.
    pub verdicts: Option<(Verdict, Verdict)>,
    /// Verdicts for proofs assembled from the chain without any checks.
    pub forged: Vec<(Verdict, Verdict)>,
}

pub struct World {
    pub config: MarketConfig,
    rng: ChaCha8Rng,
    pub chain: SimChain,
    pub channel: Option<Channel>,
    pub towers: Vec<Tower>,
    pub hires: Vec<Hire>,
    pub cheats: Vec<CheatRecord>,
    pub nodes: Vec<StorageNode>,
    /// Justice transactions alice holds, oldest state first.
    pub revocations: Vec<Revocation>,
    pub log: Vec<LogEntry>,
    pub metrics: BTreeMap<String, String>,
    pub hashes: u64,
    pub breaches_proven: u64,
    pub detections: u64,
}

fn name_of(towers: &[Tower], pk: &hashrep_core::identity::PublicKey) -> String {
    towers
        .iter()
        .find(|t| &t.identity.public_key == pk)
        .map(|t| t.name.clone())
        .unwrap_or_else(|| format!("anon-{}", hex::encode(&pk.as_bytes()[..4])))
}

fn verdict_str(v: &Verdict) -> String {
    match v.failed_condition() {
        None => "valid".to_string(),
        Some(c) => format!("invalid({})", c.index()),
    }
}

fn no_breach_str(n: &NoBreach) -> &'static str {
    match n {
        NoBreach::NoSuchEntry(_) => "no-such-entry",
        NoBreach::NotPublished => "not-published",
        NoBreach::OutsideRange { .. } => "outside-range",
        NoBreach::WindowOpen { .. } => "window-open",
        NoBreach::Remedied { .. } => "remedied",
        NoBreach::BadPreimage => "bad-preimage",
    }
}

/// Verifies `p` against the chain as a full node and as a light client
/// holding headers plus, when needed, the dispute-window bodies.
pub fn verify_both(p: &ProofOfBreach, chain: &SimChain) -> (Verdict, Verdict) {
    let full = verify_proof(p, ChainSource::Full(chain));
    let mut headers = HeaderChain::from_chain(chain);
    if p.absence.is_none() {
        // Bodies that do not match a header are simply not attached.
        let _ = headers.attach_window(chain, p);
    }
    let light = verify_proof(p, ChainSource::Light(&headers));
    (full, light)
}

impl World {
    pub fn new(config: MarketConfig, seed: u64) -> Self {
        let store = StoreConfig::new(config.capacity.max(1), config.ticket_bits)
            .expect("capacity is at least one");
        World {
            nodes: (0..config.nodes).map(|_| StorageNode::new(store)).collect(),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            chain: SimChain::new(),
            channel: None,
            towers: Vec::new(),
            hires: Vec::new(),
            cheats: Vec::new(),
            revocations: Vec::new(),
            log: Vec::new(),
            metrics: BTreeMap::new(),
            hashes: 0,
            breaches_proven: 0,
            detections: 0,
        }
    }

    fn note(&mut self, index: usize, op: &str, fields: Vec<(&str, String)>) {
        self.log.push(LogEntry {
            index,
            op: op.to_string(),
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
    }

    fn metric(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metrics.insert(key.into(), value.to_string());
    }

    fn tower_index(&self, ev: &Event, index: usize) -> Result<usize, ScriptError> {
        let name: String = ev.require(index, "tower")?;
        self.towers
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| ev.fail(index, format!("unknown tower {name}")))
    }

    /// Submits to every node; returns (accepted, rejected, evicted).
    fn publish(&mut self, sub: &Submission) -> (u64, u64, u64) {
        let ticket = sub.mine_ticket(self.config.ticket_bits, 0);
        self.hashes += ticket.0 + 1;
        let verifier = ChainVerifier(&self.chain);
        let mut tally = (0, 0, 0);
        for node in &mut self.nodes {
            match node.submit(sub, ticket, &verifier) {
                Ok(a) => {
                    tally.0 += 1;
                    tally.2 += a.evicted.is_some() as u64;
                }
                Err(_) => tally.1 += 1,
            }
        }
        tally
    }

    pub fn apply(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        match ev.op.as_str() {
            "tower" => self.op_tower(index, ev),
            "channel" => self.op_channel(index, ev),
            "pay" => self.op_pay(index, ev),
            "hire" => self.op_hire(index, ev),
            "offline" => {
                self.note(index, "offline", vec![("party", "alice".into())]);
                Ok(())
            }
            "online" => self.op_online(index),
            "cheat" => self.op_cheat(index, ev),
            "mine" => self.op_mine(index, ev),
            "sweep" => self.op_sweep(index),
            "settle" => self.op_settle(index, ev),
            "screen" => self.op_screen(index, ev),
            "flood" => self.op_flood(index, ev),
            "spam" => self.op_spam(index, ev),
            "bribe" => self.op_bribe(index, ev),
            other => Err(ev.fail(index, format!("unknown operation {other}"))),
        }
    }

    fn op_tower(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let name: String = ev.require(index, "name")?;
        if self.towers.iter().any(|t| t.name == name) {
            return Err(ev.fail(index, format!("tower {name} already exists")));
        }
        let bits: u32 = ev.require(index, "bits")?;
        let quotes: String = ev.or(index, "quote", format!("{}:1", u64::MAX))?;
        let quotes = parse_quotes(&quotes).ok_or_else(|| ev.fail(index, "quote must be max:fee[,max:fee]"))?;
        let behavior = match ev.or(index, "behavior", "honest".to_string())?.as_str() {
            "honest" => Behavior::Honest,
            "lazy" => Behavior::Lazy,
            b => return Err(ev.fail(index, format!("unknown behavior {b}"))),
        };
        let minted = mint_server(&mut self.rng, &self.config.market, bits, &name, quotes)
            .map_err(|e| ev.fail(index, e.to_string()))?;
        self.hashes += minted.attempts;
        let (accepted, rejected, evicted) = self.publish(&Submission::ad(&minted.ad));
        self.note(
            index,
            "tower",
            vec![
                ("name", name.clone()),
                ("reputation", minted.identity.reputation().bits().to_string()),
                ("attempts", minted.attempts.to_string()),
                ("stored", accepted.to_string()),
                ("refused", rejected.to_string()),
                ("evicted", evicted.to_string()),
            ],
        );
        self.towers.push(Tower {
            name,
            key: minted.key,
            identity: minted.identity,
            behavior,
            sessions: Vec::new(),
        });
        Ok(())
    }

    fn op_channel(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        if self.channel.is_some() {
            return Err(ev.fail(index, "channel already open"));
        }
        let a: Amount = ev.require(index, "alice")?;
        let b: Amount = ev.require(index, "bob")?;
        let ch = Channel::open(b"alice-bob", (ALICE, a), (BOB, b), self.config.dispute_period, false)
            .map_err(|e| ev.fail(index, e.to_string()))?;
        let out = self.chain.append_block(vec![ch.topen.clone()]);
        if !out.rejected.is_empty() {
            return Err(ev.fail(index, "opening transaction rejected"));
        }
        self.note(
            index,
            "channel",
            vec![
                ("fund", ch.fund.to_string()),
                ("height", out.height.to_string()),
                ("topen", ch.topen.txid().to_hex()),
            ],
        );
        self.channel = Some(ch);
        Ok(())
    }

    fn op_pay(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let from: String = ev.require(index, "from")?;
        let amount: Amount = ev.require(index, "amount")?;
        let ch = self.channel.as_mut().ok_or_else(|| ev.fail(index, "no channel"))?;
        let update = ch
            .update(from.as_bytes(), amount)
            .map_err(|e| ev.fail(index, e.to_string()))?;
        let balances = ch.balances();
        self.revocations
            .extend(update.revoked.into_iter().filter(|r| r.holder == ALICE));
        self.note(
            index,
            "pay",
            vec![
                ("from", from),
                ("amount", amount.to_string()),
                ("state", update.new_state.to_string()),
                ("alice", balances.0.to_string()),
                ("bob", balances.1.to_string()),
            ],
        );
        Ok(())
    }

    fn all_ads_and_breaches(&self) -> (Vec<hashrep_core::docs::ServerAd>, Vec<(ProofOfBreach, Option<Preimage>)>) {
        let mut ads = Vec::new();
        let mut breaches = Vec::new();
        for n in &self.nodes {
            ads.extend(n.query_ads());
            breaches.extend(n.all_breaches());
        }
        (ads, breaches)
    }

    fn default_value(&self) -> Amount {
        self.channel.as_ref().map_or(0, |c| c.fund)
    }

    fn op_hire(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let value: Amount = ev.or(index, "value", self.default_value())?;
        let count: usize = ev.or(index, "count", 1)?;
        let monitor: u64 = ev.or(index, "monitor", 100)?;
        let start: u64 = ev.or(index, "start", self.chain.next_height())?;

        let (ads, breaches) = self.all_ads_and_breaches();
        let candidates = Screener::new(self.config.model.clone()).screen(&ads, &breaches, value, ChainSource::Full(&self.chain));
        let threshold = SelectionParams { k: self.config.k, value }.threshold();
        let chosen = select_many(&threshold, &candidates, count);
        if chosen.is_empty() {
            self.note(index, "hire", vec![("hired", "none".into())]);
            return Ok(());
        }


        let states: Vec<usize> = self.revocations.iter().map(|r| r.state).collect();
        let prefixes: Vec<[u8; 16]> = self.revocations.iter().map(|r| txid_prefix(&r.ctx.txid())).collect();
        let blobs: Vec<Vec<u8>> = self
            .revocations
            .iter()
            .map(|r| encrypt_jtx(&r.jtx.to_bytes(), &r.ctx.txid()))
            .collect();

        for cand in chosen {
            let ti = self
                .towers
                .iter()
                .position(|t| t.identity.public_key == cand.identity.public_key)
                .ok_or_else(|| ev.fail(index, "selected server is not a scripted tower"))?;
            let server_preimage = Preimage(self.rng.gen());
            let client_preimage = Preimage(self.rng.gen());
            let terms = ContractTerms {
                market_id: self.config.market.clone(),
                server: self.towers[ti].identity.clone(),
                txid_prefixes: prefixes.clone(),
                encrypted_jtxs: blobs.clone(),
                monitor_range: (start, start.saturating_add(monitor)),
                dispute_period: self.config.dispute_period,
                server_hash_image: server_preimage.lock(),
                client_hash_image: client_preimage.lock(),
                value,
                fee: cand.fee,
            };
            let contract = sign_contract(terms, &self.towers[ti].key).map_err(|e| ev.fail(index, e.to_string()))?;
            if !verify_contract_signature(&contract) {
                return Err(ev.fail(index, "contract signature does not verify"));
            }

            let mut pay = DirectionalChannel::new(ALICE, self.towers[ti].name.as_bytes(), cand.fee);
            let mut ex = AtomicExchange::offer(&mut pay, contract.terms.server_hash_image, cand.fee)
                .map_err(|e| ev.fail(index, e.to_string()))?;
            ex.redeem(&mut pay, server_preimage)
                .map_err(|e| ev.fail(index, e.to_string()))?;
            let state =
                purchase(&contract, &ContractState::signed(), &ex).map_err(|e| ev.fail(index, e.to_string()))?;

            self.towers[ti].sessions.push(WatchSession::from_contract(&contract));
            let name = self.towers[ti].name.clone();
            self.metric(format!("fee_paid.{name}"), pay.payee_balance);
            self.note(
                index,
                "hire",
                vec![
                    ("tower", name),
                    ("fee", cand.fee.to_string()),
                    ("value", value.to_string()),
                    ("entries", prefixes.len().to_string()),
                    (
                        "range",
                        format!("{}..{}", contract.terms.monitor_range.0, contract.terms.monitor_range.1),
                    ),
                    ("contract", contract.digest().to_hex()),
                ],
            );
            self.hires.push(Hire {
                tower: ti,
                contract,
                state,
                states: states.clone(),
                server_preimage,
                client_preimage,
                proofs: Vec::new(),
            });
        }
        Ok(())
    }

    fn op_cheat(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let state: usize = ev.require(index, "state")?;
        let ch = self.channel.as_ref().ok_or_else(|| ev.fail(index, "no channel"))?;
        let ctx = ch
            .states
            .get(state)
            .ok_or_else(|| ev.fail(index, format!("no channel state {state}")))?
            .ctx_b
            .clone();
        let revoked = state < ch.latest();
        let txid = ctx.txid();
        match self.chain.broadcast(ctx) {
            Ok(_) => {
                self.note(
                    index,
                    "cheat",
                    vec![
                        ("state", state.to_string()),
                        ("revoked", revoked.to_string()),
                        ("ctx", txid.to_hex()),
                    ],
                );
                if revoked {
                    self.cheats.push(CheatRecord {
                        state,
                        ctx_txid: txid,
                        mined_at: None,
                        responses: Vec::new(),
                        remedied_at: None,
                        sweep: None,
                        swept_at: None,
                    });
                }
            }
            Err(r) => self.note(
                index,
                "cheat",
                vec![("state", state.to_string()), ("rejected", r.to_string())],
            ),
        }
        Ok(())
    }

    fn op_mine(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let blocks: u64 = ev.or(index, "blocks", 1)?;
        for _ in 0..blocks {
            let out = self.chain.mine_block();
            let block = self.chain.block(out.height).expect("just mined").clone();
            let ids: HashSet<Txid> = block.txids().into_iter().collect();
            for c in &mut self.cheats {
                if c.mined_at.is_none() && ids.contains(&c.ctx_txid) {
                    c.mined_at = Some(out.height);
                }
                if c.remedied_at.is_none() && c.responses.iter().any(|j| ids.contains(j)) {
                    c.remedied_at = Some(out.height);
                }
                if c.swept_at.is_none() && c.sweep.is_some_and(|s| ids.contains(&s)) {
                    c.swept_at = Some(out.height);
                }
            }
            let mut notes = Vec::new();
            for t in &self.towers {
                for s in &t.sessions {
                    let hits = s.scan_block(&block);
                    if hits.is_empty() {
                        continue;
                    }
                    self.detections += hits.len() as u64;
                    if t.behavior == Behavior::Lazy {
                        notes.push((t.name.clone(), "ignored".to_string(), hits.len()));
                        continue;
                    }
                    match respond(&hits, &mut self.chain) {
                        Ok(receipts) => {
                            for r in receipts {
                                if let Some(c) = self.cheats.iter_mut().find(|c| c.ctx_txid == r.ctx_txid) {
                                    if !c.responses.contains(&r.jtx_txid) {
                                        c.responses.push(r.jtx_txid);
                                    }
                                }
                            }
                            notes.push((t.name.clone(), "responded".to_string(), hits.len()));
                        }
                        Err(e) => notes.push((t.name.clone(), format!("failed: {e}"), hits.len())),
                    }
                }
            }
            self.note(
                index,
                "block",
                vec![
                    ("height", out.height.to_string()),
                    ("txs", block.transactions.len().to_string()),
                    ("hash", block.hash().to_hex()),
                ],
            );
            for (tower, action, hits) in notes {
                self.note(
                    index,
                    "tower-action",
                    vec![("tower", tower), ("hits", hits.to_string()), ("action", action)],
                );
            }
        }
        Ok(())
    }

    fn op_sweep(&mut self, index: usize) -> Result<(), ScriptError> {
        let pending: Vec<usize> = (0..self.cheats.len())
            .filter(|&i| self.cheats[i].mined_at.is_some() && self.cheats[i].sweep.is_none())
            .collect();
        for i in pending {
            let ctx = self
                .chain
                .transaction(&self.cheats[i].ctx_txid)
                .expect("mined cheat is on chain")
                .clone();
            let tx = sweep_tx(&ctx).expect("commitments carry their terms");
            let txid = tx.txid();
            match self.chain.broadcast(tx) {
                Ok(_) => {
                    self.cheats[i].sweep = Some(txid);
                    self.note(index, "sweep", vec![("ctx", ctx.txid().to_hex()), ("sweep", txid.to_hex())]);
                }
                Err(r) => self.note(index, "sweep", vec![("ctx", ctx.txid().to_hex()), ("rejected", r.to_string())]),
            }
        }
        Ok(())
    }

    fn op_online(&mut self, index: usize) -> Result<(), ScriptError> {
        let mut submissions = Vec::new();
        for hi in 0..self.hires.len() {
            let hire = &self.hires[hi];
            let name = self.towers[hire.tower].name.clone();
            let mut outcome: Option<&'static str> = None;
            let mut found = Vec::new();
            for entry in 0..hire.contract.terms.txid_prefixes.len() {
                match build_proof(&hire.contract, hire.server_preimage, &self.chain, entry) {
                    Ok(p) => {
                        let (full, light) = verify_both(&p, &self.chain);
                        self.metrics.insert(format!("proof.{name}.full"), verdict_str(&full));
                        self.metrics.insert(format!("proof.{name}.light"), verdict_str(&light));
                        self.metrics.insert(format!("proof.{name}.agree"), (full == light).to_string());
                        if full.is_valid() {
                            outcome = Some("proven");
                            found.push(p);
                        }
                    }
                    Err(nb) => {
                        // Keep the most informative reason across entries.
                        let rank = |s: &str| ["not-published", "outside-range", "window-open", "remedied"]
                            .iter()
                            .position(|x| *x == s);
                        let s = no_breach_str(&nb);
                        if outcome != Some("proven") && rank(s) >= outcome.and_then(rank) {
                            outcome = Some(s);
                        }
                    }
                }
            }
            let outcome = outcome.unwrap_or("no-entries");
            self.metrics.insert(format!("breach.{name}"), outcome.to_string());
            self.log.push(LogEntry {
                index,
                op: "online-check".into(),
                fields: vec![("tower".into(), name), ("outcome".into(), outcome.into())],
            });
            for p in found {
                if !self.hires[hi].proofs.iter().any(|q| q.digest() == p.digest()) {
                    self.breaches_proven += 1;
                    submissions.push(Submission::breach(&p));
                    self.hires[hi].proofs.push(p);
                }
            }
        }
        for sub in submissions {
            let (accepted, rejected, _) = self.publish(&sub);
            self.note(
                index,
                "store-proof",
                vec![("stored", accepted.to_string()), ("refused", rejected.to_string())],
            );
        }
        Ok(())
    }

    fn op_settle(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let ti = self.tower_index(ev, index)?;
        let hi = self
            .hires
            .iter()
            .position(|h| h.tower == ti && !h.proofs.is_empty())
            .ok_or_else(|| ev.fail(index, "no proven breach against this tower"))?;
        let hire = self.hires[hi].clone();
        let proof = &hire.proofs[0];
        let amount: Amount = ev.or(index, "amount", hire.contract.terms.value)?;
        let name = self.towers[ti].name.clone();

        let mut pay = DirectionalChannel::new(name.as_bytes(), ALICE, amount);
        let mut ex = AtomicExchange::offer(&mut pay, hire.contract.terms.client_hash_image, amount)
            .map_err(|e| ev.fail(index, e.to_string()))?;
        ex.redeem(&mut pay, hire.client_preimage)
            .map_err(|e| ev.fail(index, e.to_string()))?;
        let sub = settle(proof, &ex).map_err(|e| ev.fail(index, e.to_string()))?;
        let state = terminate(&hire.contract, &hire.state, hire.client_preimage)
            .map_err(|e| ev.fail(index, e.to_string()))?;
        self.hires[hi].state = state;
        let digest = hire.contract.digest();
        for s in &mut self.towers[ti].sessions {
            if s.contract == digest {
                s.active = false;
            }
        }
        let (accepted, rejected, _) = self.publish(&sub);
        self.metric(format!("settled.{name}"), pay.payee_balance);
        self.note(
            index,
            "settle",
            vec![
                ("tower", name),
                ("amount", pay.payee_balance.to_string()),
                ("stored", accepted.to_string()),
                ("refused", rejected.to_string()),
            ],
        );
        Ok(())
    }

    fn op_screen(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let value: Amount = ev.or(index, "value", self.default_value())?;
        let (ads, breaches) = self.all_ads_and_breaches();
        let kept = Screener::new(self.config.model.clone()).screen(&ads, &breaches, value, ChainSource::Full(&self.chain));
        let mut candidates: Vec<String> = kept.iter().map(|c| name_of(&self.towers, &c.identity.public_key)).collect();
        candidates.sort();
        let mut discarded: Vec<String> = self
            .towers
            .iter()
            .filter(|t| ads.iter().any(|a| a.identity.public_key == t.identity.public_key))
            .filter(|t| !kept.iter().any(|c| c.identity.public_key == t.identity.public_key))
            .map(|t| t.name.clone())
            .collect();
        discarded.sort();
        let threshold = SelectionParams { k: self.config.k, value }.threshold();
        let eligible = select_many(&threshold, &kept, usize::MAX);
        let mut eligible: Vec<String> = eligible.iter().map(|c| name_of(&self.towers, &c.identity.public_key)).collect();
        eligible.sort();
        let join = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join(",") };
        self.metric("candidates", join(&candidates));
        self.metric("discarded", join(&discarded));
        self.metric("eligible", join(&eligible));
        self.note(
            index,
            "screen",
            vec![
                ("value", value.to_string()),
                ("candidates", join(&candidates)),
                ("discarded", join(&discarded)),
            ],
        );
        Ok(())
    }

    fn honest_ads_missing(&self, node: usize) -> usize {
        let stored: HashSet<_> = self.nodes[node]
            .query_ads()
            .into_iter()
            .map(|a| a.identity.public_key)
            .collect();
        self.towers
            .iter()
            .filter(|t| !stored.contains(&t.identity.public_key))
            .count()
    }

    fn op_flood(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let count: u64 = ev.require(index, "count")?;
        let max_priority: u32 = ev.require(index, "max_priority")?;
        let node: usize = ev.or(index, "node", 0)?;
        if node >= self.nodes.len() {
            return Err(ev.fail(index, format!("no storage node {node}")));
        }
        let before = self.honest_ads_missing(node);
        let (mut accepted, mut rejected, mut evicted) = (0u64, 0u64, 0u64);
        let verifier = ChainVerifier(&self.chain);
        for _ in 0..count {
            let ad = low_priority_ad(&mut self.rng, &self.config.market, max_priority);
            let sub = Submission::ad(&ad);
            let ticket = sub.mine_ticket(self.config.ticket_bits, 0);
            self.hashes += ticket.0 + 1;
            match self.nodes[node].submit(&sub, ticket, &verifier) {
                Ok(a) => {
                    accepted += 1;
                    evicted += a.evicted.is_some() as u64;
                }
                Err(_) => rejected += 1,
            }
        }
        let honest_evicted = self.honest_ads_missing(node).saturating_sub(before);
        self.metric("flood_accepted", accepted);
        self.metric("flood_rejected", rejected);
        self.metric("honest_evicted", honest_evicted);
        self.note(
            index,
            "flood",
            vec![
                ("node", node.to_string()),
                ("count", count.to_string()),
                ("accepted", accepted.to_string()),
                ("rejected", rejected.to_string()),
                ("evicted", evicted.to_string()),
                ("honest_evicted", honest_evicted.to_string()),
            ],
        );
        Ok(())
    }

    /// Submissions carrying unworked tickets.
    fn op_spam(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let count: u64 = ev.require(index, "count")?;
        let node: usize = ev.or(index, "node", 0)?;
        if node >= self.nodes.len() {
            return Err(ev.fail(index, format!("no storage node {node}")));
        }
        let verifier = ChainVerifier(&self.chain);
        let mut rejected = 0u64;
        for _ in 0..count {
            let ad = low_priority_ad(&mut self.rng, &self.config.market, 256);
            let ticket = hashrep_core::hashcash::HashcashNonce(self.rng.gen());
            if self.nodes[node].submit(&Submission::ad(&ad), ticket, &verifier).is_err() {
                rejected += 1;
            }
        }
        self.metric("spam_rejected", rejected);
        self.note(
            index,
            "spam",
            vec![("count", count.to_string()), ("rejected", rejected.to_string())],
        );
        Ok(())
    }

    fn op_bribe(&mut self, index: usize, ev: &Event) -> Result<(), ScriptError> {
        let ti = self.tower_index(ev, index)?;
        let k: u64 = ev.or(index, "k", self.config.k)?;
        let cost = self
            .config
            .model
            .cost(self.towers[ti].identity.reputation())
            .map_err(|e| ev.fail(index, e.to_string()))?;
        let list = |key: &str| -> Result<Option<Vec<Amount>>, ScriptError> {
            match ev.args.get(key) {
                None => Ok(None),
                Some(s) => s
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| ev.fail(index, format!("bad {key} list"))))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Some),
            }
        };
        let contracts: Vec<BribedContract> = match (list("values")?, list("bribes")?) {
            (Some(v), Some(b)) if v.len() == b.len() => v
                .into_iter()
                .zip(b)
                .map(|(value, bribe)| BribedContract { value, bribe })
                .collect(),
            (None, None) => {
                // The adversary's best case: k contracts at the largest
                // damage-aware value, each bribe one unit below it.
                let count: u64 = ev.or(index, "count", k)?;
                let value = if k == 0 {
                    0
                } else {
                    let v = (cost / Cost::from_integer(k as u128)).ceil().to_integer() - 1;
                    Amount::try_from(v).unwrap_or(Amount::MAX)
                };
                (0..count)
                    .map(|_| BribedContract {
                        value,
                        bribe: value.saturating_sub(1),
                    })
                    .collect()
            }
            _ => return Err(ev.fail(index, "values and bribes must be given together with equal lengths")),
        };
        let name = self.towers[ti].name.clone();
        match bribe_safe(&BribeScenario { k, contracts }, &cost) {
            Ok(v) => {
                let accepted = accepts_bribes(v.total, &cost);
                if accepted {
                    self.towers[ti].behavior = Behavior::Lazy;
                }
                self.metric("bribe_safe", v.safe);
                self.metric("bribe_total", v.total);
                self.metric("bribe_accepted", accepted);
                self.note(
                    index,
                    "bribe",
                    vec![
                        ("tower", name),
                        ("k", k.to_string()),
                        ("cost", cost.to_string()),
                        ("total", v.total.to_string()),
                        ("safe", v.safe.to_string()),
                    ],
                );
            }
            Err(p) => {
                let clause = match p.0 {
                    ModelClause::SecurityParameter => "security-parameter",
                    ModelClause::Cardinality { .. } => "cardinality",
                    ModelClause::BribeBelowValue { .. } => "bribe-below-value",
                    ModelClause::DamageAware { .. } => "damage-aware",
                };
                self.metric("bribe_safe", format!("precondition:{clause}"));
                self.note(index, "bribe", vec![("tower", name), ("violated", clause.to_string())]);
            }
        }
        Ok(())
    }

    /// Ground truth: the revoked commitment behind `entry` was mined inside
    /// the contract's range, its window has closed, and no tower's justice
    /// transaction made it into a block.
    pub fn truth(&self, hire: &Hire, entry: usize) -> bool {
        let state = hire.states[entry];
        let tip = self.chain.tip_height();
        let (lo, hi) = hire.contract.terms.monitor_range;
        self.cheats.iter().any(|c| {
            c.state == state
                && c.remedied_at.is_none()
                && c.mined_at.is_some_and(|h| {
                    (lo..=hi).contains(&h) && tip.is_some_and(|t| t >= h + self.config.dispute_period)
                })
        })
    }

    /// Proofs assembled from whatever the chain holds for `entry`, skipping
    /// every check `build_proof` makes.
    pub fn forge(&self, hire: &Hire, entry: usize) -> Vec<ProofOfBreach> {
        let prefix = hire.contract.terms.txid_prefixes[entry];
        let blob = &hire.contract.terms.encrypted_jtxs[entry];
        let Some((ctx, jtx)) = self.chain.blocks().iter().flat_map(|b| &b.transactions).find_map(|tx| {
            let id = tx.txid();
            if txid_prefix(&id) != prefix {
                return None;
            }
            decrypt_jtx(blob, &id).ok().map(|j| (tx.clone(), j))
        }) else {
            return Vec::new();
        };
        let id = ctx.txid();
        let base = ProofOfBreach {
            contract: hire.contract.clone(),
            server_preimage: hire.server_preimage,
            ctx_bytes: ctx.to_bytes(),
            ctx_inclusion: self.chain.merkle_proof(&id).expect("found on chain"),
            absence: None,
            jtx_bytes: jtx,
        };
        let mut out = vec![base.clone()];
        if let Some((spender, _)) = self.chain.spent_by(&id, 0) {
            let tx = self.chain.transaction(&spender).expect("spender is mined");
            out.push(ProofOfBreach {
                absence: Some(AbsenceEvidence {
                    spender: tx.to_bytes(),
                    inclusion: self.chain.merkle_proof(&spender).expect("spender is mined"),
                }),
                ..base
            });
        }
        out
    }

    pub fn audit(&self) -> Vec<AuditRow> {
        let mut rows = Vec::new();
        for hire in &self.hires {
            for entry in 0..hire.states.len() {
                let built = build_proof(&hire.contract, hire.server_preimage, &self.chain, entry);
                rows.push(AuditRow {
                    tower: self.towers[hire.tower].name.clone(),
                    entry,
                    state: hire.states[entry],
                    truth: self.truth(hire, entry),
                    verdicts: built.as_ref().ok().map(|p| verify_both(p, &self.chain)),
                    built: built.map(|_| ()),
                    forged: self
                        .forge(hire, entry)
                        .iter()
                        .map(|p| verify_both(p, &self.chain))
                        .collect(),
                });
            }
        }
        rows
    }

    /// Every output is spent at most once across the whole chain.
    pub fn single_spend_holds(&self) -> bool {
        let mut seen = HashSet::new();
        self.chain
            .blocks()
            .iter()
            .flat_map(|b| &b.transactions)
            .flat_map(|tx| &tx.inputs)
            .all(|i| seen.insert(*i))
    }

    fn finalize(&mut self) {
        let damage = self.cheats.iter().any(|c| {
            c.remedied_at.is_none()
                && c.mined_at.is_some_and(|h| {
                    self.chain
                        .tip_height()
                        .is_some_and(|t| t >= h + self.config.dispute_period)
                })
        });
        let justice = self
            .chain
            .blocks()
            .iter()
            .flat_map(|b| &b.transactions)
            .filter(|t| t.kind == TxKind::Justice)
            .count();
        let evicted: u64 = self.nodes.iter().map(|n| n.stats().evicted).sum();
        let stored_breaches: usize = self.nodes.iter().map(|n| n.len(RecordKind::Breach)).sum();
        let stored_revocations: usize = self.nodes.iter().map(|n| n.len(RecordKind::Revocation)).sum();
        self.metric("damage", damage);
        self.metric("justice_published", justice);
        self.metric("records_evicted", evicted);
        self.metric("hashes_mined", self.hashes);
        self.metric("breaches_proven", self.breaches_proven);
        self.metric("breaches_stored", stored_breaches);
        self.metric("revocations_stored", stored_revocations);
        self.metric("detections", self.detections);
        self.metric("hires", self.hires.len());
        self.metric("cheats", self.cheats.len());
        self.metric("tip_height", self.chain.tip_height().map_or(-1, |h| h as i64));
        self.metric("single_spend", self.single_spend_holds());
        for h in &self.hires {
            let name = &self.towers[h.tower].name;
            self.metrics
                .insert(format!("contract.{name}"), format!("{:?}", h.state.status).to_lowercase());
        }
        for (i, c) in self.cheats.iter().enumerate() {
            let fate = match (c.mined_at, c.remedied_at, c.swept_at) {
                (None, _, _) => "unmined",
                (Some(_), Some(_), _) => "remedied",
                (Some(_), None, Some(_)) => "swept",
                (Some(_), None, None) => "pending",
            };
            self.metrics.insert(format!("cheat.{i}"), fate.to_string());
            for (what, h) in [("mined_at", c.mined_at), ("remedied_at", c.remedied_at), ("swept_at", c.swept_at)] {
                if let Some(h) = h {
                    self.metrics.insert(format!("cheat.{i}.{what}"), h.to_string());
                }
            }
        }
    }
}

/// Runs `scenario` with `seed`, against fresh chain, store and market state.
pub fn run_world(scenario: &Scenario, seed: u64) -> (World, RunReport) {
    let mut report = RunReport {
        name: scenario.name.clone(),
        seed,
        ..Default::default()
    };
    let config = match MarketConfig::from_scenario(scenario) {
        Ok(c) => c,
        Err(e) => {
            report.error = Some(e.to_string());
            let fallback = MarketConfig::from_scenario(&Scenario {
                config: BTreeMap::new(),
                ..scenario.clone()
            })
            .expect("default configuration is valid");
            return (World::new(fallback, seed), report);
        }
    };
    let mut world = World::new(config, seed);
    for (i, ev) in scenario.events.iter().enumerate() {
        if let Err(e) = world.apply(i, ev) {
            report.error = Some(e.to_string());
            break;
        }
    }
    world.finalize();
    report.log = world.log.clone();
    report.metrics = world.metrics.clone();
    report.expectations = scenario
        .expectations
        .iter()
        .map(|(k, v)| ExpectationResult {
            key: k.clone(),
            expected: v.clone(),
            actual: world.metrics.get(k).cloned(),
        })
        .collect();
    (world, report)
}

pub fn run(scenario: &Scenario) -> RunReport {
    run_world(scenario, scenario.seed).1
}

pub fn run_with_seed(scenario: &Scenario, seed: u64) -> RunReport {
    run_world(scenario, seed).1
}
