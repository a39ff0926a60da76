//! Frozen encodings. Set `HASHREP_REGEN_GOLDEN=1` to rewrite the files.

mod common;

use std::fs;
use std::path::PathBuf;

use common::{scenario, Fixture, Tower};
use hashrep_core::breach::{build_proof, verify_proof, ChainSource, HeaderChain, ProofOfBreach, Verdict};
use hashrep_core::chain::SimChain;
use hashrep_core::docs::{Contract, FeeQuote, ServerAd};
use hashrep_core::hashcash::{compute_reputation, HashcashNonce};
use hashrep_core::identity::{MarketId, Preimage, PublicKey};
use common::indep::{encode_ad, encode_contract, encode_proof, Enc};
use sha2::{Digest, Sha256};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn regen() -> bool {
    std::env::var_os("HASHREP_REGEN_GOLDEN").is_some()
}

fn check(name: &str, bytes: &[u8]) {
    let path = dir().join(name);
    if regen() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, bytes).unwrap();
    }
    let frozen = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(frozen, bytes, "{name} drifted from its golden file");
}

fn fixture() -> (Fixture, ProofOfBreach, ServerAd) {
    let f = scenario(Tower::Lazy, (0, 30), 6, true);
    let p = build_proof(&f.contract, f.server_pre, &f.chain, 0).unwrap();
    let ad = ServerAd::sign(
        f.identity.clone(),
        b"tower.example:9911".to_vec(),
        vec![FeeQuote { max_value: 1000, fee: 3 }, FeeQuote { max_value: 100, fee: 1 }],
        &f.key,
    )
    .unwrap();
    (f, p, ad)
}

#[test]
fn reputation_vector() {
    let market = MarketId::new(b"m".to_vec()).unwrap();
    let r = compute_reputation(&PublicKey([0; 32]), &market, HashcashNonce(0));
    let mut input = vec![0u8; 32];
    input.extend_from_slice(&1u32.to_be_bytes());
    input.push(b'm');
    input.extend_from_slice(&0u64.to_be_bytes());
    let digest = Sha256::digest(&input);
    let zeros = digest.iter().position(|b| *b != 0).map_or(256, |i| i * 8 + digest[i].leading_zeros() as usize);
    assert_eq!(r.bits() as usize, zeros);
    check(
        "reputation.txt",
        format!("id={}\tmarket=m\tnonce=0\tdigest={}\treputation={}\n", "00".repeat(32), hex::encode(digest), zeros)
            .as_bytes(),
    );
}

#[test]
fn contract_vector() {
    let (f, _, _) = fixture();
    let bytes = f.contract.to_bytes();
    assert_eq!(encode_contract(&f.contract), bytes);
    check("contract.bin", &bytes);
    assert_eq!(Contract::from_bytes(&bytes).unwrap().to_bytes(), bytes);
}

#[test]
fn server_ad_vector() {
    let (_, _, ad) = fixture();
    let bytes = ad.to_bytes();
    assert_eq!(encode_ad(&ad), bytes);
    check("server_ad.bin", &bytes);
    let back = ServerAd::from_bytes(&bytes).unwrap();
    assert!(back.verify());
    assert_eq!(back.to_bytes(), bytes);
}

#[test]
fn proof_vector() {
    let (f, p, _) = fixture();
    let bytes = p.to_bytes();
    assert_eq!(encode_proof(&p), bytes);
    let mut e = Enc::default();
    e.tx(&f.ctx);
    assert_eq!(e.0, p.ctx_bytes);
    check("proof.bin", &bytes);
    assert_eq!(ProofOfBreach::from_bytes(&bytes).unwrap().to_bytes(), bytes);
}

fn verdict_label(v: &Verdict) -> String {
    match v.failed_condition() {
        None => "valid".into(),
        Some(c) => c.index().to_string(),
    }
}

/// Valid and invalid proofs against one chain, with expected verdicts for a
/// full node and for a header-only light client.
#[test]
fn proof_corpus() {
    let (f, valid, _) = fixture();
    let mut cases: Vec<(&str, ProofOfBreach)> = vec![("valid", valid.clone())];
    let mut p = valid.clone();
    p.ctx_bytes = vec![0xEE; 5];
    cases.push(("bad-format", p));
    let mut p = valid.clone();
    p.contract.terms.value += 1;
    cases.push(("bad-signature", p));
    let mut p = valid.clone();
    p.server_preimage = Preimage([0; 32]);
    cases.push(("bad-preimage", p));
    let mut p = valid.clone();
    p.ctx_inclusion.height = 1;
    cases.push(("bad-inclusion", p));
    let mut p = valid.clone();
    p.jtx_bytes = f.revs[1].jtx.to_bytes();
    cases.push(("bad-justice", p));
    let mut p = valid.clone();
    p.absence = None;
    cases.push(("no-absence", p));

    let headers = HeaderChain::from_chain(&f.chain);
    check("proofs/chain.snapshot", &f.chain.export_snapshot());
    check("proofs/headers.bin", &headers.to_bytes());

    let chain = SimChain::import_snapshot(&fs::read(dir().join("proofs/chain.snapshot")).unwrap()).unwrap();
    let headers = HeaderChain::from_bytes(&fs::read(dir().join("proofs/headers.bin")).unwrap()).unwrap();
    let mut manifest = String::new();
    for (name, p) in &cases {
        let file = format!("{name}.bin");
        check(&format!("proofs/{file}"), &p.to_bytes());
        let stored = ProofOfBreach::from_bytes(&fs::read(dir().join("proofs").join(&file)).unwrap());
        let (full, light) = match stored {
            Ok(p) => (
                verdict_label(&verify_proof(&p, ChainSource::Full(&chain))),
                verdict_label(&verify_proof(&p, ChainSource::Light(&headers))),
            ),
            Err(_) => ("1".into(), "1".into()),
        };
        manifest.push_str(&format!("{file}\tfull={full}\tlight={light}\n"));
    }
    check("proofs/manifest.txt", manifest.as_bytes());
    let expected = "valid.bin\tfull=valid\tlight=valid\n\
                    bad-format.bin\tfull=1\tlight=1\n\
                    bad-signature.bin\tfull=2\tlight=2\n\
                    bad-preimage.bin\tfull=3\tlight=3\n\
                    bad-inclusion.bin\tfull=4\tlight=4\n\
                    bad-justice.bin\tfull=5\tlight=5\n\
                    no-absence.bin\tfull=valid\tlight=6\n";
    assert_eq!(manifest, expected);
}
