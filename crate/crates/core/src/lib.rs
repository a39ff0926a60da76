//! Hashcash-backed server reputation and a watchtower market built on it.
//!
//! Servers mint their own reputation by grinding a nonce bound to their key
//! and market. Clients buy signed monitoring contracts, and a breached
//! contract turns into a publicly verifiable proof that storage nodes keep
//! under reputation priority.

pub mod breach;
pub mod chain;
pub mod codec;
pub mod docs;
pub mod hashcash;
pub mod identity;
pub mod market;
pub mod repstore;
pub mod watchtower;

/// Integer monetary units.
pub type Amount = u64;
