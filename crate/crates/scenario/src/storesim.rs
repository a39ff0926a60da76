//! A single storage node under honest, flood and spam traffic.
//!
//! Commands file:
//!
//! ```text
//! seed = 1
//! honest count=16 min_priority=12
//! flood count=1000 max_priority=11
//! spam count=100
//! expect honest_evicted = 0
//! ```

use std::collections::{BTreeMap, HashSet};

use hashrep_core::chain::SimChain;
use hashrep_core::hashcash::{HashcashNonce, Reputation};
use hashrep_core::identity::{MarketId, PublicKey};
use hashrep_core::repstore::{RecordKind, StorageNode, StoreConfig, StoreError, Submission};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::records::{low_priority_ad, mint_server, ChainVerifier};
use crate::report::{ExpectationResult, LogEntry, RunReport};
use crate::script::{Scenario, ScriptError};

pub struct StoreSim {
    pub node: StorageNode,
    rng: ChaCha8Rng,
    market: MarketId,
    chain: SimChain,
    pub honest: HashSet<PublicKey>,
    pub honest_evicted: u64,
    pub hashes: u64,
    metrics: BTreeMap<String, u64>,
}

impl StoreSim {
    pub fn new(capacity: usize, ticket_bits: u32, seed: u64) -> Result<Self, StoreError> {
        Ok(StoreSim {
            node: StorageNode::new(StoreConfig::new(capacity, ticket_bits)?),
            rng: ChaCha8Rng::seed_from_u64(seed),
            market: MarketId::new(b"watchtowers".to_vec()).expect("nonempty id"),
            chain: SimChain::new(),
            honest: HashSet::new(),
            honest_evicted: 0,
            hashes: 0,
            metrics: BTreeMap::new(),
        })
    }

    fn bump(&mut self, key: &str, by: u64) {
        *self.metrics.entry(key.to_string()).or_default() += by;
    }

    /// Submits with a properly mined ticket; returns whether it was stored.
    fn submit_worked(&mut self, sub: &Submission) -> bool {
        let ticket = sub.mine_ticket(self.node.config().spam_ticket_bits, 0);
        self.hashes += ticket.0 + 1;
        match self.node.submit(sub, ticket, &ChainVerifier(&self.chain)) {
            Ok(a) => {
                if let Some(ev) = a.evicted {
                    self.bump("records_evicted", 1);
                    if self.honest.contains(&ev.subject.public_key) {
                        self.honest_evicted += 1;
                    }
                }
                true
            }
            Err(_) => false,
        }
    }

    /// Ads mined to at least `min_priority` bits.
    pub fn honest(&mut self, count: u64, min_priority: u32) -> u64 {
        let mut stored = 0;
        for i in 0..count {
            let s = mint_server(&mut self.rng, &self.market, min_priority, &format!("honest-{i}"), vec![])
                .expect("target within mining limit");
            self.hashes += s.attempts;
            self.honest.insert(s.identity.public_key);
            stored += self.submit_worked(&Submission::ad(&s.ad)) as u64;
        }
        self.bump("honest_accepted", stored);
        stored
    }

    /// Cheap ads of at most `max_priority` bits, each with a valid ticket.
    pub fn flood(&mut self, count: u64, max_priority: u32) -> u64 {
        let mut stored = 0;
        for _ in 0..count {
            let ad = low_priority_ad(&mut self.rng, &self.market, max_priority);
            stored += self.submit_worked(&Submission::ad(&ad)) as u64;
        }
        self.bump("flood_accepted", stored);
        self.bump("flood_rejected", count - stored);
        stored
    }

    /// Ads with unworked tickets; returns how many were refused.
    pub fn spam(&mut self, count: u64) -> u64 {
        let mut refused = 0;
        for _ in 0..count {
            let ad = low_priority_ad(&mut self.rng, &self.market, Reputation::MAX.bits());
            let ticket = HashcashNonce(self.rng.gen());
            refused += self
                .node
                .submit(&Submission::ad(&ad), ticket, &ChainVerifier(&self.chain))
                .is_err() as u64;
        }
        self.bump("spam_rejected", refused);
        refused
    }

    pub fn metrics(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = self.metrics.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
        for key in ["honest_accepted", "flood_accepted", "flood_rejected", "spam_rejected", "records_evicted"] {
            m.entry(key.to_string()).or_insert_with(|| "0".into());
        }
        m.insert("honest_evicted".into(), self.honest_evicted.to_string());
        m.insert("stored".into(), self.node.len(RecordKind::ServerAd).to_string());
        m.insert("flush_cost".into(), self.node.flush_cost(RecordKind::ServerAd).to_string());
        m.insert("hashes_mined".into(), self.hashes.to_string());
        m
    }
}

/// Runs a commands file against one node.
pub fn run_commands(text: &str, capacity: usize, ticket_bits: u32) -> Result<RunReport, ScriptError> {
    let script = Scenario::parse(text)?;
    let mut sim = StoreSim::new(capacity, ticket_bits, script.seed).map_err(|e| ScriptError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut report = RunReport {
        name: script.name.clone(),
        seed: script.seed,
        ..Default::default()
    };
    for (index, ev) in script.events.iter().enumerate() {
        let count: u64 = ev.require(index, "count")?;
        let (op, result) = match ev.op.as_str() {
            "honest" => ("stored", sim.honest(count, ev.require(index, "min_priority")?)),
            "flood" => ("stored", sim.flood(count, ev.require(index, "max_priority")?)),
            "spam" => ("refused", sim.spam(count)),
            other => return Err(ev.fail(index, format!("unknown command {other}"))),
        };
        report.log.push(LogEntry {
            index,
            op: ev.op.clone(),
            fields: vec![
                ("count".into(), count.to_string()),
                (op.into(), result.to_string()),
                ("honest_evicted".into(), sim.honest_evicted.to_string()),
            ],
        });
    }
    report.metrics = sim.metrics();
    report.expectations = script
        .expectations
        .iter()
        .map(|(k, v)| ExpectationResult {
            key: k.clone(),
            expected: v.clone(),
            actual: report.metrics.get(k).cloned(),
        })
        .collect();
    Ok(report)
}
