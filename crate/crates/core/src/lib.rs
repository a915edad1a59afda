//! Similarity-tilted autoregressive SMILES decoding and a budget-accounted
//! genetic optimizer built on top of it.

pub mod smiles;
pub mod fingerprint;
pub mod adapters;
pub mod policy;
pub mod rff;
pub mod guidance;
pub mod oracles;
pub mod ga;
