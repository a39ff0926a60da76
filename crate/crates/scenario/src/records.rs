//! Seeded construction of server identities and ads.

use hashrep_core::breach::{verify_proof, ChainSource, ProofOfBreach};
use hashrep_core::chain::SimChain;
use hashrep_core::docs::{FeeQuote, ServerAd};
use hashrep_core::hashcash::{compute_reputation, mine, HashcashNonce, MineError};
use hashrep_core::identity::{keygen, MarketId, ServerIdentity, SigningKey};
use hashrep_core::repstore::RecordVerifier;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A server's key material and signed ad.
#[derive(Debug)]
pub struct MintedServer {
    pub key: SigningKey,
    pub identity: ServerIdentity,
    pub ad: ServerAd,
    pub attempts: u64,
}

/// Mines an identity with at least `bits` of reputation.
pub fn mint_server(
    rng: &mut ChaCha8Rng,
    market: &MarketId,
    bits: u32,
    endpoint: &str,
    quotes: Vec<FeeQuote>,
) -> Result<MintedServer, MineError> {
    let (key, pk) = keygen(rng.gen());
    let mined = mine(&pk, market, bits, rng.gen(), u64::MAX)?;
    let identity = ServerIdentity::new(pk, market.clone(), mined.nonce);
    let ad = ServerAd::sign(identity.clone(), endpoint.as_bytes().to_vec(), quotes, &key)
        .expect("ad is signed with the identity's own key");
    Ok(MintedServer {
        key,
        identity,
        ad,
        attempts: mined.attempts,
    })
}

/// A cheap identity whose reputation does not exceed `max_bits`.
pub fn low_priority_ad(rng: &mut ChaCha8Rng, market: &MarketId, max_bits: u32) -> ServerAd {
    let (key, pk) = keygen(rng.gen());
    let mut nonce: u64 = rng.gen();
    while compute_reputation(&pk, market, HashcashNonce(nonce)).bits() > max_bits {
        nonce = nonce.wrapping_add(1);
    }
    let identity = ServerIdentity::new(pk, market.clone(), HashcashNonce(nonce));
    ServerAd::sign(
        identity,
        b"flood".to_vec(),
        vec![FeeQuote {
            max_value: u64::MAX,
            fee: 0,
        }],
        &key,
    )
    .expect("ad is signed with the identity's own key")
}

/// `max:fee,max:fee`
pub fn parse_quotes(s: &str) -> Option<Vec<FeeQuote>> {
    s.split(',')
        .map(|q| {
            let (max, fee) = q.split_once(':')?;
            Some(FeeQuote {
                max_value: max.trim().parse().ok()?,
                fee: fee.trim().parse().ok()?,
            })
        })
        .collect()
}

/// Storage-node verifier backed by a full copy of the chain.
pub struct ChainVerifier<'a>(pub &'a SimChain);

impl RecordVerifier for ChainVerifier<'_> {
    fn verify_breach(&self, proof: &ProofOfBreach) -> bool {
        verify_proof(proof, ChainSource::Full(self.0)).is_valid()
    }
}
