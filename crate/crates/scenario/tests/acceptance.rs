//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#[path = "../../core/tests/common/indep.rs"]
mod indep;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hashrep_core::breach::{is_revoked, verify_proof, ChainSource, HeaderChain, ProofOfBreach, Verdict};
use hashrep_core::docs::{Contract, ContractState, ContractStatus, ServerAd};
use hashrep_core::hashcash::{mine, Cost, HashcashNonce, Reputation, ReputationCostModel};
use hashrep_core::identity::{MarketId, Preimage, PublicKey, ServerIdentity};
use hashrep_core::market::{
    alg1_method, bribe_safe, check_selection_properties, purchase, select_alg1, settle, AtomicExchange,
    BribeScenario, BribedContract, CandidateServer, DirectionalChannel, SelectionParams,
};
use hashrep_core::repstore::{flush_cost, flush_years, RecordKind};
use hashrep_sim::corpus::run_corpus;
use hashrep_sim::script::{builtin, Scenario};
use hashrep_sim::storesim::StoreSim;
use hashrep_sim::world::{run_world, World};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Schedule = [(usize, Step)];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn market() -> MarketId {
    MarketId::new(b"watchtowers".to_vec()).unwrap()
}

/// Leading zero bits of SHA-256(pk || len(market) || market || nonce), from scratch.
fn oracle_reputation(pk: &[u8; 32], market: &[u8], nonce: u64) -> (String, u32) {
    let mut h = Sha256::new();
    h.update(pk);
    h.update((market.len() as u32).to_be_bytes());
    h.update(market);
    h.update(nonce.to_be_bytes());
    let d = h.finalize();
    let mut bits = 0;
    for byte in d.iter() {
        bits += byte.leading_zeros();
        if *byte != 0 {
            break;
        }
    }
    (hex::encode(d), bits)
}

fn hashcash_statistics() -> Outcome {
    let started = Instant::now();
    let m = market();
    let runs = 1000u64;
    let mut total = 0u64;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pk: [u8; 32] = rng.gen();
        let mined = mine(&PublicKey(pk), &m, 12, rng.gen(), u64::MAX).map_err(|e| e.to_string())?;
        let (_, bits) = oracle_reputation(&pk, m.as_bytes(), mined.nonce.0);
        ensure!(bits >= 12, "seed {seed}: nonce gives only {bits} bits");
        total += mined.attempts;
    }
    let mean = total as f64 / runs as f64;
    let ratio = mean / 4096.0;
    ensure!((0.8..=1.25).contains(&ratio), "mean attempts {mean:.1} is {ratio:.3} x 2^12");
    ensure!(started.elapsed() < Duration::from_secs(30), "took {:?}", started.elapsed());
    Ok(format!("mean attempts {mean:.1} = {ratio:.3} x 2^12 over {runs} runs"))
}

fn doubling_law() -> Outcome {
    let prices = [
        Cost::from_integer(1),
        Cost::from_integer(3),
        Cost::new(7, 10),
        Cost::new(1, 3),
        Cost::new(5, 1 << 20),
    ];
    let mut checked = 0;
    for price in prices {
        let model = ReputationCostModel::new(price, 0);
        for r in 0..=63u32 {
            let c0 = model.cost(Reputation::new(r).unwrap()).map_err(|e| e.to_string())?;
            let c1 = model.cost(Reputation::new(r + 1).unwrap()).map_err(|e| e.to_string())?;
            ensure!(c1 == c0 * Cost::from_integer(2), "price {price}, r {r}: {c1} != 2 * {c0}");
            // c0 == price * 2^r, cross-multiplied in arbitrary precision.
            let lhs = BigUint::from(*c0.numer()) * BigUint::from(*price.denom());
            let rhs = (BigUint::from(*price.numer()) << r) * BigUint::from(*c0.denom());
            ensure!(lhs == rhs, "price {price}, r {r}: cost {c0} is not price * 2^r");
            checked += 1;
        }
    }
    Ok(format!("{checked} exact doublings over {} prices", prices.len()))
}

fn flood_resistance() -> Outcome {
    let capacity = 1024usize;
    let mut sim = StoreSim::new(capacity, 4, 7).map_err(|e| e.to_string())?;
    ensure!(sim.honest(capacity as u64, 12) == capacity as u64, "honest records were not all stored");
    let flood = 100_000u64;
    let accepted = sim.flood(flood, 11);
    ensure!(sim.honest_evicted == 0, "{} honest records evicted", sim.honest_evicted);

    let m = market();
    let mut r_max = 0;
    let mut honest_left = 0;
    for rec in sim.node.records(RecordKind::ServerAd) {
        let id = &rec.subject;
        let (_, bits) = oracle_reputation(&id.public_key.0, m.as_bytes(), id.nonce.0);
        ensure!(bits == rec.priority.bits(), "stored priority {} but digest gives {bits}", rec.priority);
        r_max = r_max.max(bits);
        honest_left += sim.honest.contains(&id.public_key) as usize;
    }
    ensure!(honest_left == capacity, "{honest_left} honest records remain");
    let expected = BigUint::from(capacity) << r_max;
    let reported = sim.node.flush_cost(RecordKind::ServerAd);
    ensure!(reported == expected, "flush cost {reported} != {capacity} * 2^{r_max}");

    let headline = flush_cost(1 << 40, Reputation::new(36).unwrap());
    ensure!(headline == BigUint::from(1u8) << 76u32, "2^40 * 2^36 gave {headline}");
    let years = flush_years(&headline, 1e13);
    ensure!(years >= 170.0, "{years:.1} years at 10 TH/s");
    Ok(format!(
        "{flood} flood ads, {accepted} accepted, 0 honest evicted; flush {capacity}*2^{r_max}; 2^76 hashes = {years:.0} years at 10 TH/s"
    ))
}

/// Extends `buf` with every multiset of `pairs` (indices nondecreasing from
/// `from`) up to `left` more elements and checks each.
fn enumerate_bribes(
    pairs: &[BribedContract],
    from: usize,
    left: u64,
    buf: &mut BribeScenario,
    cost: &Cost,
    cost_int: u128,
    tally: &mut (u64, Vec<String>),
) {
    tally.0 += 1;
    let total: u128 = buf.contracts.iter().map(|c| c.bribe as u128).sum();
    match bribe_safe(buf, cost) {
        Ok(v) if v.safe && v.total == total && total < cost_int => {}
        other => {
            if tally.1.len() < 5 {
                tally.1.push(format!("k={} cost={cost_int} {:?}: {other:?}", buf.k, buf.contracts));
            }
        }
    }
    if left == 0 {
        return;
    }
    for i in from..pairs.len() {
        buf.contracts.push(pairs[i]);
        enumerate_bribes(pairs, i, left - 1, buf, cost, cost_int, tally);
        buf.contracts.pop();
    }
}

fn bribery_brute_force() -> Outcome {
    let started = Instant::now();
    let mut tally = (0u64, Vec::new());
    for k in 1..=4u64 {
        for cost_int in 1..=64u128 {
            let cost = Cost::from_integer(cost_int);
            let pairs: Vec<BribedContract> = (1..)
                .take_while(|v: &u64| ((k * v) as u128) < cost_int)
                .flat_map(|value| (0..value).map(move |bribe| BribedContract { value, bribe }))
                .collect();
            let mut buf = BribeScenario {
                k,
                contracts: Vec::with_capacity(k as usize),
            };
            enumerate_bribes(&pairs, 0, k, &mut buf, &cost, cost_int, &mut tally);
        }
    }
    let elapsed = started.elapsed();
    ensure!(tally.1.is_empty(), "violations: {}", tally.1.join("; "));
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} scenarios, 0 violations", tally.0))
}

fn candidate(rng: &mut ChaCha8Rng, m: &MarketId) -> CandidateServer {
    let bits = rng.gen_range(0..=20u32);
    CandidateServer {
        identity: ServerIdentity::new(PublicKey(rng.gen()), m.clone(), HashcashNonce(0)),
        reputation: Reputation::new(bits).unwrap(),
        cost: Cost::from_integer(1u128 << bits),
        fee: rng.gen_range(0..20),
        endpoint: vec![],
    }
}

/// Lowest fee among eligible candidates, ties to higher cost then smaller key,
/// found by pairwise comparison.
fn brute_force_choice(threshold: &Cost, set: &[CandidateServer]) -> Option<usize> {
    let eligible: Vec<usize> = (0..set.len()).filter(|&i| set[i].cost > *threshold).collect();
    eligible.iter().copied().find(|&i| {
        eligible.iter().all(|&j| {
            let (a, b) = (&set[i], &set[j]);
            i == j
                || a.fee < b.fee
                || (a.fee == b.fee && a.cost > b.cost)
                || (a.fee == b.fee && a.cost == b.cost && a.identity.public_key < b.identity.public_key)
        })
    })
}

fn selection_properties() -> Outcome {
    let m = market();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = SelectionParams { k: 2, value: 3000 };
    let threshold = params.threshold();
    let sets: Vec<Vec<CandidateServer>> = (0..1000)
        .map(|_| {
            let n = rng.gen_range(1..=10);
            (0..n).map(|_| candidate(&mut rng, &m)).collect()
        })
        .collect();
    let report = check_selection_properties(alg1_method, params, &sets);
    ensure!(report.sets_checked == 1000, "checked {} sets", report.sets_checked);
    ensure!(report.violations.is_empty(), "violations: {:?}", &report.violations[..report.violations.len().min(3)]);
    for (i, set) in sets.iter().enumerate() {
        let got = alg1_method(&threshold, set).first().copied();
        ensure!(got == brute_force_choice(&threshold, set), "set {i}: alg1 {got:?} disagrees with oracle");
    }

    let worked: Vec<CandidateServer> = [(100u128, 5u64), (120, 5), (90, 1)]
        .iter()
        .enumerate()
        .map(|(i, &(cost, fee))| CandidateServer {
            identity: ServerIdentity::new(PublicKey([i as u8 + 1; 32]), m.clone(), HashcashNonce(0)),
            reputation: Reputation::new(6).unwrap(),
            cost: Cost::from_integer(cost),
            fee,
            endpoint: vec![],
        })
        .collect();
    let t = Cost::from_integer(95);
    let chosen = select_alg1(&t, &worked).map_err(|e| e.to_string())?;
    ensure!(
        (chosen.cost, chosen.fee) == (Cost::from_integer(120), 5),
        "worked example chose ({}, {})",
        chosen.cost,
        chosen.fee
    );
    ensure!(brute_force_choice(&t, &worked) == Some(1), "oracle disagrees on the worked example");
    Ok(format!(
        "{} sets, {} selections, 0 violations; worked example -> (120, 5)",
        report.sets_checked, report.selections
    ))
}

fn builtin_world(name: &str) -> Result<World, String> {
    let text = builtin(name).ok_or(format!("no builtin {name}"))?;
    let scenario = Scenario::parse(text).map_err(|e| e.to_string())?;
    let (world, report) = run_world(&scenario, scenario.seed);
    ensure!(report.passed(), "{name} failed:\n{}", report.render());
    Ok(world)
}

fn both_modes(p: &ProofOfBreach, world: &World) -> Result<(Verdict, Verdict), String> {
    let full = verify_proof(p, ChainSource::Full(&world.chain));
    let mut headers = HeaderChain::from_chain(&world.chain);
    if p.absence.is_none() {
        headers.attach_window(&world.chain, p).map_err(|e| e.to_string())?;
    }
    let light = verify_proof(p, ChainSource::Light(&headers));
    Ok((full, light))
}

fn metric<'a>(world: &'a World, key: &str) -> &'a str {
    world.metrics.get(key).map(String::as_str).unwrap_or("<missing>")
}

fn breach_pipeline() -> Outcome {
    let started = Instant::now();

    let lazy = builtin_world("lazy-tower")?;
    let hire = &lazy.hires[0];
    ensure!(!hire.proofs.is_empty(), "lazy tower produced no proof");
    for p in &hire.proofs {
        let (full, light) = both_modes(p, &lazy)?;
        ensure!(full.is_valid() && full == light, "lazy verdicts {full:?} / {light:?}");
    }
    ensure!(metric(&lazy, "discarded") == "t1", "lazy tower not discarded");

    let honest = builtin_world("honest-tower")?;
    ensure!(honest.hires[0].proofs.is_empty(), "honest tower has a proof");
    ensure!(metric(&honest, "breach.t1") == "remedied", "honest breach {}", metric(&honest, "breach.t1"));
    for row in honest.audit() {
        ensure!(row.built.is_err() && !row.truth, "honest entry {} yields a breach", row.entry);
    }

    let settled = builtin_world("settled")?;
    let hire = &settled.hires[0];
    let p = hire.proofs.first().ok_or("settled run has no proof")?;
    let (full, light) = both_modes(p, &settled)?;
    ensure!(full.is_valid() && full == light, "settled verdicts {full:?} / {light:?}");
    ensure!(is_revoked(p, &hire.client_preimage), "client preimage does not neutralize the proof");
    let cands = metric(&settled, "candidates");
    ensure!(cands.split(',').any(|c| c == "t1"), "settled tower screened out: {cands}");

    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("lazy valid/valid, honest remedied, settled revoked and kept; {elapsed:.2?}"))
}

fn soundness_corpus() -> Outcome {
    let t = run_corpus(1, 250);
    ensure!(t.scenarios >= 200, "only {} scenarios", t.scenarios);
    ensure!(t.script_errors == 0, "{} scripts failed", t.script_errors);
    ensure!(t.false_valid == 0 && t.missed == 0, "false-valid {} missed {}", t.false_valid, t.missed);
    ensure!(t.mode_disagreements == 0, "{} full/light disagreements", t.mode_disagreements);
    ensure!(t.true_breaches > 0, "corpus contains no breaches");
    Ok(format!(
        "{} scenarios, {} entries, {} true breaches, 0 false-valid, 0 missed",
        t.scenarios, t.entries, t.true_breaches
    ))
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Offer,
    RedeemWrong,
    Redeem,
    Expire,
}

/// One hash-locked payment: `payee` earns `amount` by revealing `secret`.
struct Leg {
    channel: DirectionalChannel,
    exchange: Option<AtomicExchange>,
    secret: Preimage,
    amount: u64,
    fund: u64,
}

impl Leg {
    fn new(payer: &str, payee: &str, secret: Preimage, amount: u64) -> Self {
        Leg {
            channel: DirectionalChannel::new(payer, payee, 50),
            exchange: None,
            secret,
            amount,
            fund: 50,
        }
    }

    fn apply(&mut self, step: Step) {
        let wrong = Preimage([0xEE; 32]);
        match (step, &mut self.exchange) {
            (Step::Offer, None) => {
                self.exchange = AtomicExchange::offer(&mut self.channel, self.secret.lock(), self.amount).ok();
            }
            (Step::RedeemWrong, Some(x)) => {
                let _ = x.redeem(&mut self.channel, wrong);
            }
            (Step::Redeem, Some(x)) => {
                let _ = x.redeem(&mut self.channel, self.secret);
            }
            (Step::Expire, Some(x)) => {
                let _ = x.expire(&mut self.channel);
            }
            _ => {}
        }
    }

    fn conserved(&self) -> bool {
        self.channel.payer_balance + self.channel.payee_balance + self.channel.locked == self.fund
    }

    fn paid(&self) -> bool {
        self.channel.payee_balance == self.amount
    }

    fn revealed(&self) -> Option<Preimage> {
        self.exchange.as_ref().and_then(|x| x.revealed)
    }
}

fn permutations(items: &mut Schedule, k: usize, out: &mut dyn FnMut(&Schedule)) {
    if k == items.len() {
        out(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

fn exchange_interleavings() -> Outcome {
    let world = builtin_world("settled")?;
    let hire = &world.hires[0];
    let contract: &Contract = &hire.contract;
    let proof = hire.proofs.first().ok_or("settled run has no proof")?;
    let fee = contract.terms.fee;

    let steps = [Step::Offer, Step::RedeemWrong, Step::Redeem, Step::Expire];
    let mut items: Vec<(usize, Step)> = (0..2).flat_map(|leg| steps.iter().map(move |&s| (leg, s))).collect();
    let mut runs = 0u64;
    let mut outcomes = [0u64; 4];
    let mut failures: Vec<String> = Vec::new();
    permutations(&mut items, 0, &mut |order| {
        runs += 1;
        // Purchase: the client pays the fee for the server preimage.
        // Settlement: the server pays the client for the client preimage.
        let mut legs = [
            Leg::new("client", "server", hire.server_preimage, fee),
            Leg::new("server", "client", hire.client_preimage, 7),
        ];
        for &(leg, step) in order {
            legs[leg].apply(step);
        }
        let bought = legs[0]
            .exchange
            .as_ref()
            .map(|x| purchase(contract, &ContractState::signed(), x));
        let activated = matches!(&bought, Some(Ok(s)) if s.status == ContractStatus::Active);
        let revocation = legs[1].exchange.as_ref().map(|x| settle(proof, x));
        let revoked = matches!(&revocation, Some(Ok(_)));
        if let Some(Ok(sub)) = &revocation {
            if sub.kind != RecordKind::Revocation {
                failures.push(format!("{order:?}: settlement produced {:?}", sub.kind));
            }
        }
        let checks = [
            (legs[0].conserved() && legs[1].conserved(), "balance not conserved"),
            (legs[0].paid() == activated, "purchase payment and activation disagree"),
            (legs[0].paid() == legs[0].revealed().is_some(), "server paid without revealing or vice versa"),
            (legs[1].paid() == revoked, "settlement payment and revocation disagree"),
            (legs[1].paid() == legs[1].revealed().is_some(), "client paid without revealing or vice versa"),
            (
                legs[1].revealed().is_none_or(|p| is_revoked(proof, &p)),
                "revealed client preimage does not revoke",
            ),
        ];
        for (ok, what) in checks {
            if !ok && failures.len() < 5 {
                failures.push(format!("{order:?}: {what}"));
            }
        }
        outcomes[legs[0].paid() as usize * 2 + legs[1].paid() as usize] += 1;
    });
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    ensure!(outcomes.iter().all(|&n| n > 0), "some outcome never reached: {outcomes:?}");
    Ok(format!(
        "{runs} orderings; neither/settle-only/purchase-only/both paid = {outcomes:?}"
    ))
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn read_golden(name: &str) -> Result<Vec<u8>, String> {
    fs::read(golden_dir().join(name)).map_err(|e| format!("{name}: {e}"))
}

fn golden_vectors() -> Outcome {
    let bytes = read_golden("contract.bin")?;
    let contract = Contract::from_bytes(&bytes).map_err(|e| format!("contract: {e}"))?;
    ensure!(contract.to_bytes() == bytes, "contract does not round-trip");
    ensure!(indep::encode_contract(&contract) == bytes, "independent contract encoding differs");

    let bytes = read_golden("server_ad.bin")?;
    let ad = ServerAd::from_bytes(&bytes).map_err(|e| format!("ad: {e}"))?;
    ensure!(ad.to_bytes() == bytes, "ad does not round-trip");
    ensure!(indep::encode_ad(&ad) == bytes, "independent ad encoding differs");
    ensure!(ad.verify(), "golden ad signature fails");

    let bytes = read_golden("proof.bin")?;
    let proof = ProofOfBreach::from_bytes(&bytes).map_err(|e| format!("proof: {e}"))?;
    ensure!(proof.to_bytes() == bytes, "proof does not round-trip");
    ensure!(indep::encode_proof(&proof) == bytes, "independent proof encoding differs");

    let text = String::from_utf8(read_golden("reputation.txt")?).map_err(|e| e.to_string())?;
    let mut vectors = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let field = |k: &str| {
            line.split('\t')
                .find_map(|f| f.strip_prefix(k).and_then(|v| v.strip_prefix('=')))
                .ok_or(format!("missing {k} in {line}"))
        };
        let id: [u8; 32] = hex::decode(field("id")?)
            .map_err(|e| e.to_string())?
            .try_into()
            .map_err(|_| "id is not 32 bytes".to_string())?;
        let nonce: u64 = field("nonce")?.parse().map_err(|_| "bad nonce".to_string())?;
        let (digest, bits) = oracle_reputation(&id, field("market")?.as_bytes(), nonce);
        ensure!(digest == field("digest")?, "digest mismatch in {line}");
        ensure!(bits.to_string() == field("reputation")?, "reputation mismatch in {line}");
        vectors += 1;
    }
    Ok(format!("contract, ad and proof bit-exact; {vectors} reputation vectors"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); _] = [
        ("hashcash statistics", hashcash_statistics),
        ("reputation doubling law", doubling_law),
        ("flood resistance and flush cost", flood_resistance),
        ("bribery brute force", bribery_brute_force),
        ("selection properties", selection_properties),
        ("end-to-end breach pipeline", breach_pipeline),
        ("proof soundness corpus", soundness_corpus),
        ("atomic exchange interleavings", exchange_interleavings),
        ("golden vectors", golden_vectors),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {}. {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name} ({elapsed:.2?}): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
