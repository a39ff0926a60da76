//! Randomized scenarios for checking proofs against ground truth.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::script::Scenario;
use crate::world::{run_world, AuditRow};

/// A random but well-formed scenario script.
pub fn random_scenario(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dispute = rng.gen_range(1..=6u64);
    let mut s = String::new();
    let _ = writeln!(s, "name = random-{seed}\nseed = {seed}\nhash_price = 1\nk = 2\ndispute_period = {dispute}\nticket_bits = 2\nnodes = 1");

    // Fund 100 with k = 2 needs cost above 200, so 8 bits suffice.
    let towers = rng.gen_range(1..=3);
    for t in 0..towers {
        let behavior = if rng.gen_bool(0.35) { "honest" } else { "lazy" };
        let _ = writeln!(s, "tower name=t{t} bits=8 quote=1000:{} behavior={behavior}", rng.gen_range(1..10));
    }
    let _ = writeln!(s, "channel alice=50 bob=50");
    let mut height = 1u64;
    let mut states = 0usize;
    let mut bob = 50u64;
    let pay = |s: &mut String, rng: &mut ChaCha8Rng, states: &mut usize, bob: &mut u64| {
        let from_bob = rng.gen_bool(0.5);
        let amount = rng.gen_range(1..=5);
        if from_bob {
            *bob -= amount;
        } else {
            *bob += amount;
        }
        let _ = writeln!(s, "pay from={} amount={amount}", if from_bob { "bob" } else { "alice" });
        *states += 1;
    };
    for _ in 0..rng.gen_range(1..=4) {
        pay(&mut s, &mut rng, &mut states, &mut bob);
    }
    let pre = rng.gen_range(0..=3);
    if pre > 0 {
        let _ = writeln!(s, "mine blocks={pre}");
        height += pre;
    }
    let start = height + rng.gen_range(0..=4);
    let _ = writeln!(
        s,
        "hire count={} monitor={} start={start}",
        rng.gen_range(1..=towers),
        rng.gen_range(0..=30)
    );
    if rng.gen_bool(0.3) {
        pay(&mut s, &mut rng, &mut states, &mut bob);
    }
    let _ = writeln!(s, "offline");
    let _ = writeln!(s, "mine blocks={}", rng.gen_range(0..=8));
    if rng.gen_bool(0.9) {
        // Mostly revoked states; the latest one is not a breach.
        let state = if rng.gen_bool(0.85) { rng.gen_range(0..states) } else { states };
        let _ = writeln!(s, "cheat state={state}");
    }
    let _ = writeln!(s, "mine blocks={}", rng.gen_range(0..=2 * dispute + 3));
    if rng.gen_bool(0.5) {
        let _ = writeln!(s, "sweep\nmine blocks={}", rng.gen_range(1..=2));
    }
    let _ = writeln!(s, "online");
    s
}

/// Per-scenario tallies over every contract entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusTally {
    pub scenarios: usize,
    pub entries: usize,
    pub true_breaches: usize,
    pub false_valid: usize,
    pub missed: usize,
    pub mode_disagreements: usize,
    pub script_errors: usize,
}

fn score(rows: &[AuditRow], t: &mut CorpusTally) {
    for r in rows {
        t.entries += 1;
        t.true_breaches += r.truth as usize;
        let mut any_valid = false;
        if let Some((full, light)) = &r.verdicts {
            any_valid |= full.is_valid() || light.is_valid();
            t.mode_disagreements += (full.is_valid() != light.is_valid()) as usize;
            if r.truth && !(full.is_valid() && light.is_valid()) {
                t.missed += 1;
            }
        } else if r.truth {
            t.missed += 1;
        }
        for (full, light) in &r.forged {
            any_valid |= full.is_valid() || light.is_valid();
        }
        if any_valid && !r.truth {
            t.false_valid += 1;
        }
    }
}

/// Plays `count` random scenarios starting at `first_seed`.
pub fn run_corpus(first_seed: u64, count: usize) -> CorpusTally {
    let mut tally = CorpusTally::default();
    for seed in first_seed..first_seed + count as u64 {
        tally.scenarios += 1;
        let scenario = Scenario::parse(&random_scenario(seed)).expect("generator emits valid scripts");
        let (world, report) = run_world(&scenario, seed);
        if report.error.is_some() || !world.single_spend_holds() {
            tally.script_errors += 1;
            continue;
        }
        score(&world.audit(), &mut tally);
    }
    tally
}
