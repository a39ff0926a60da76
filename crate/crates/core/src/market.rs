//! Client-side market protocol: screening, selection, hash-locked purchase
//! and settlement, and the bribery model.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::breach::{is_revoked, verify_proof, ChainSource, ProofOfBreach};
use crate::docs::{activate, Contract, ContractState, DocError, ServerAd};
use crate::hashcash::{Cost, Digest256, Reputation, ReputationCostModel};
use crate::identity::{HashLock, Preimage, ServerIdentity};
use crate::repstore::Submission;
use crate::Amount;

/// Security parameter used when a caller does not choose one.
pub const DEFAULT_K: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateServer {
    pub identity: ServerIdentity,
    pub reputation: Reputation,
    pub cost: Cost,
    pub fee: Amount,
    pub endpoint: Vec<u8>,
}

impl CandidateServer {
    pub fn from_ad(ad: &ServerAd, value: Amount, model: &ReputationCostModel) -> Option<Self> {
        let reputation = ad.identity.reputation();
        Some(CandidateServer {
            identity: ad.identity.clone(),
            reputation,
            cost: model.cost(reputation).ok()?,
            fee: ad.fee_for(value)?,
            endpoint: ad.endpoint.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionParams {
    pub k: u64,
    pub value: Amount,
}

impl SelectionParams {
    /// `T = k * val(c)`, exact.
    pub fn threshold(&self) -> Cost {
        Cost::from_integer(self.k as u128 * self.value as u128)
    }
}

/// Screens candidates, caching proof verdicts by proof digest.
#[derive(Debug, Clone)]
pub struct Screener {
    pub model: ReputationCostModel,
    cache: HashMap<Digest256, bool>,
    verifications: u64,
}

impl Screener {
    pub fn new(model: ReputationCostModel) -> Self {
        Screener {
            model,
            cache: HashMap::new(),
            verifications: 0,
        }
    }

    /// Proof verifications actually run (cache misses).
    pub fn verifications(&self) -> u64 {
        self.verifications
    }

    fn proof_is_valid(&mut self, proof: &ProofOfBreach, source: ChainSource<'_>) -> bool {
        let key = proof.digest();
        if let Some(v) = self.cache.get(&key) {
            return *v;
        }
        self.verifications += 1;
        let valid = verify_proof(proof, source).is_valid();
        self.cache.insert(key, valid);
        valid
    }

    /// Keeps every advertised server quoting for `value` that has no valid,
    /// unrevoked proof-of-breach against it.
    pub fn screen(
        &mut self,
        ads: &[ServerAd],
        breaches: &[(ProofOfBreach, Option<Preimage>)],
        value: Amount,
        source: ChainSource<'_>,
    ) -> Vec<CandidateServer> {
        let mut discarded = HashSet::new();
        for (proof, revocation) in breaches {
            let server = proof.contract.terms.server.public_key;
            if discarded.contains(&server) {
                continue;
            }
            if revocation.is_some_and(|pre| is_revoked(proof, &pre)) {
                continue;
            }
            if self.proof_is_valid(proof, source) {
                discarded.insert(server);
            }
        }
        let mut seen = HashSet::new();
        ads.iter()
            .filter(|ad| ad.verify())
            .filter(|ad| !discarded.contains(&ad.identity.public_key))
            .filter(|ad| seen.insert(ad.identity.public_key))
            .filter_map(|ad| CandidateServer::from_ad(ad, value, &self.model))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no candidate has reputation cost above the threshold")]
pub struct NoEligibleCandidate;

/// Candidates whose cost strictly exceeds `threshold`.
pub fn eligible(threshold: &Cost, candidates: &[CandidateServer]) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| &c.cost > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Preference among eligible servers: lower fee, then higher cost, then the
/// lexicographically smaller key.
fn alg1_order(a: &CandidateServer, b: &CandidateServer) -> Ordering {
    a.fee
        .cmp(&b.fee)
        .then_with(|| b.cost.cmp(&a.cost))
        .then_with(|| a.identity.public_key.cmp(&b.identity.public_key))
}

/// Minimum-fee server among those whose cost exceeds the threshold.
pub fn select_alg1<'a>(
    threshold: &Cost,
    candidates: &'a [CandidateServer],
) -> Result<&'a CandidateServer, NoEligibleCandidate> {
    candidates
        .iter()
        .filter(|c| &c.cost > threshold)
        .min_by(|a, b| alg1_order(a, b))
        .ok_or(NoEligibleCandidate)
}

/// Runs the selection `n` times, removing each winner. Stops early when no
/// eligible candidate remains.
pub fn select_many(threshold: &Cost, candidates: &[CandidateServer], n: usize) -> Vec<CandidateServer> {
    let mut pool = candidates.to_vec();
    let mut chosen = Vec::new();
    while chosen.len() < n {
        let Ok(best) = select_alg1(threshold, &pool) else {
            break;
        };
        let best = best.clone();
        pool.retain(|c| c.identity.public_key != best.identity.public_key);
        chosen.push(best);
    }
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectionProperty {
    ReputationAware,
    FeeAware,
    DamageAware,
}

impl fmt::Display for SelectionProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionProperty::ReputationAware => "reputation-aware",
            SelectionProperty::FeeAware => "fee-aware",
            SelectionProperty::DamageAware => "damage-aware",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub property: SelectionProperty,
    /// Index of the candidate set in the input.
    pub set: usize,
    pub selected: usize,
    /// The candidate that should have been selected too, if any.
    pub witness: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectionReport {
    pub sets_checked: usize,
    pub selections: usize,
    pub violations: Vec<Violation>,
}

impl SelectionReport {
    pub fn count(&self, p: SelectionProperty) -> usize {
        self.violations.iter().filter(|v| v.property == p).count()
    }
}

/// Checks a selection method for the three desired properties.
///
/// `method` returns indices of the selected candidates. A selection of
/// (r, f) violates reputation-awareness if some unselected candidate has
/// r' > r and f' <= f, and fee-awareness if some unselected candidate has
/// f' < f and r' >= r. Damage-awareness requires k * val(c) < cost(s).
pub fn check_selection_properties<M>(
    method: M,
    params: SelectionParams,
    sets: &[Vec<CandidateServer>],
) -> SelectionReport
where
    M: Fn(&Cost, &[CandidateServer]) -> Vec<usize>,
{
    let threshold = params.threshold();
    let mut report = SelectionReport::default();
    for (set_idx, set) in sets.iter().enumerate() {
        report.sets_checked += 1;
        let selected = method(&threshold, set);
        let chosen: HashSet<usize> = selected.iter().copied().collect();
        for &s in &selected {
            report.selections += 1;
            let sel = &set[s];
            let unselected = (0..set.len()).filter(|i| !chosen.contains(i));
            for i in unselected {
                let other = &set[i];
                if other.reputation > sel.reputation && other.fee <= sel.fee {
                    report.violations.push(Violation {
                        property: SelectionProperty::ReputationAware,
                        set: set_idx,
                        selected: s,
                        witness: Some(i),
                    });
                }
                if other.fee < sel.fee && other.reputation >= sel.reputation {
                    report.violations.push(Violation {
                        property: SelectionProperty::FeeAware,
                        set: set_idx,
                        selected: s,
                        witness: Some(i),
                    });
                }
            }
            if sel.cost <= threshold {
                report.violations.push(Violation {
                    property: SelectionProperty::DamageAware,
                    set: set_idx,
                    selected: s,
                    witness: None,
                });
            }
        }
    }
    report
}

/// [`select_alg1`] as a method for [`check_selection_properties`].
pub fn alg1_method(threshold: &Cost, candidates: &[CandidateServer]) -> Vec<usize> {
    match select_alg1(threshold, candidates) {
        Ok(best) => candidates
            .iter()
            .position(|c| std::ptr::eq(c, best))
            .into_iter()
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// One-way payment channel, modeled as a prefunded balance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionalChannel {
    pub payer: Vec<u8>,
    pub payee: Vec<u8>,
    pub payer_balance: Amount,
    pub payee_balance: Amount,
    pub locked: Amount,
}

impl DirectionalChannel {
    pub fn new(payer: impl Into<Vec<u8>>, payee: impl Into<Vec<u8>>, fund: Amount) -> Self {
        DirectionalChannel {
            payer: payer.into(),
            payee: payee.into(),
            payer_balance: fund,
            payee_balance: 0,
            locked: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeState {
    Offered,
    Redeemed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExchangeError {
    #[error("payer balance {balance} below {amount}")]
    InsufficientFunds { balance: Amount, amount: Amount },
    #[error("preimage does not open the exchange lock")]
    WrongPreimage,
    #[error("exchange already {0:?}")]
    Closed(ExchangeState),
}

/// A hash-locked payment: redeemable only by revealing the lock's preimage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicExchange {
    pub lock: HashLock,
    pub amount: Amount,
    pub state: ExchangeState,
    pub revealed: Option<Preimage>,
}

impl AtomicExchange {
    pub fn offer(
        channel: &mut DirectionalChannel,
        lock: HashLock,
        amount: Amount,
    ) -> Result<Self, ExchangeError> {
        if channel.payer_balance < amount {
            return Err(ExchangeError::InsufficientFunds {
                balance: channel.payer_balance,
                amount,
            });
        }
        channel.payer_balance -= amount;
        channel.locked += amount;
        Ok(AtomicExchange {
            lock,
            amount,
            state: ExchangeState::Offered,
            revealed: None,
        })
    }

    /// Reveals the preimage and releases the payment in a single step.
    pub fn redeem(
        &mut self,
        channel: &mut DirectionalChannel,
        preimage: Preimage,
    ) -> Result<(), ExchangeError> {
        if self.state != ExchangeState::Offered {
            return Err(ExchangeError::Closed(self.state));
        }
        if !self.lock.opens_with(&preimage) {
            return Err(ExchangeError::WrongPreimage);
        }
        channel.locked -= self.amount;
        channel.payee_balance += self.amount;
        self.revealed = Some(preimage);
        self.state = ExchangeState::Redeemed;
        Ok(())
    }

    /// Refunds the payer after the timeout.
    pub fn expire(&mut self, channel: &mut DirectionalChannel) -> Result<(), ExchangeError> {
        if self.state != ExchangeState::Offered {
            return Err(ExchangeError::Closed(self.state));
        }
        channel.locked -= self.amount;
        channel.payer_balance += self.amount;
        self.state = ExchangeState::Expired;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("exchange lock does not match the contract")]
    LockMismatch,
    #[error("exchange expired without a preimage")]
    ExchangeExpired,
    #[error("exchange still pending")]
    ExchangePending,
    #[error("contract signature does not verify")]
    BadContract,
    #[error(transparent)]
    Doc(#[from] DocError),
}

fn revealed(exchange: &AtomicExchange) -> Result<Preimage, MarketError> {
    match exchange.state {
        ExchangeState::Offered => Err(MarketError::ExchangePending),
        ExchangeState::Expired => Err(MarketError::ExchangeExpired),
        ExchangeState::Redeemed => Ok(exchange.revealed.expect("redeemed exchange carries its preimage")),
    }
}

/// Activates `contract` with the preimage the server revealed to get paid.
pub fn purchase(
    contract: &Contract,
    state: &ContractState,
    exchange: &AtomicExchange,
) -> Result<ContractState, MarketError> {
    if exchange.lock != contract.terms.server_hash_image {
        return Err(MarketError::LockMismatch);
    }
    if !crate::docs::verify_contract_signature(contract) {
        return Err(MarketError::BadContract);
    }
    Ok(activate(contract, state, revealed(exchange)?)?)
}

/// Turns a redeemed settlement exchange into the revocation record to store.
pub fn settle(proof: &ProofOfBreach, exchange: &AtomicExchange) -> Result<Submission, MarketError> {
    if exchange.lock != proof.contract.terms.client_hash_image {
        return Err(MarketError::LockMismatch);
    }
    Ok(Submission::revocation(proof, revealed(exchange)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BribedContract {
    pub value: Amount,
    pub bribe: Amount,
}

/// Standing bribes on one server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BribeScenario {
    pub k: u64,
    pub contracts: Vec<BribedContract>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelClause {
    /// k must be at least one.
    SecurityParameter,
    /// At most k contracts carry standing bribes.
    Cardinality { contracts: usize, k: u64 },
    /// Each bribe is strictly below the contract's value.
    BribeBelowValue { index: usize },
    /// Each contract was selected damage-aware: k * val(c) < cost(s).
    DamageAware { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("scenario breaks the adversarial model: {0:?}")]
pub struct PreconditionViolated(pub ModelClause);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BribeVerdict {
    pub total: u128,
    pub safe: bool,
}

/// Totals the standing bribes and compares them with the server's cost.
pub fn bribe_safe(scenario: &BribeScenario, server_cost: &Cost) -> Result<BribeVerdict, PreconditionViolated> {
    let k = scenario.k;
    if k == 0 {
        return Err(PreconditionViolated(ModelClause::SecurityParameter));
    }
    if scenario.contracts.len() as u128 > k as u128 {
        return Err(PreconditionViolated(ModelClause::Cardinality {
            contracts: scenario.contracts.len(),
            k,
        }));
    }
    for (index, c) in scenario.contracts.iter().enumerate() {
        if c.bribe >= c.value {
            return Err(PreconditionViolated(ModelClause::BribeBelowValue { index }));
        }
        if Cost::from_integer(k as u128 * c.value as u128) >= *server_cost {
            return Err(PreconditionViolated(ModelClause::DamageAware { index }));
        }
    }
    let total: u128 = scenario.contracts.iter().map(|c| c.bribe as u128).sum();
    Ok(BribeVerdict {
        total,
        safe: Cost::from_integer(total) < *server_cost,
    })
}

/// A server takes its standing bribes only once they reach its cost.
pub fn accepts_bribes(total: u128, server_cost: &Cost) -> bool {
    Cost::from_integer(total) >= *server_cost
}
