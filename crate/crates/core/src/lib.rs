//! Manifestation-guided hard-negative sampling for contrastive pretraining.
//!
//! Instances carry a binary manifestation vector (observable traits). Because
//! these vectors never change during training, Hamming distances between
//! them can be precomputed once ([`hamming_index`]) and used to build
//! minibatches whose negatives sit at a controlled semantic distance from
//! the anchor ([`negsampler`]). The [`contrastive`] module holds the
//! NT-Xent family of losses with exact gradients, and [`toytrain`] runs a
//! small synthetic pretraining experiment comparing the sampler against
//! uniform batches.

pub mod cli;
pub mod contrastive;
pub mod error;
pub mod hamming_index;
pub mod manifest;
pub mod negsampler;
pub mod toytrain;

pub use error::{Error, Result};
pub use hamming_index::HammingIndex;
pub use manifest::{
    decode, dedup_key, encode_record, hamming, Bits, DataFormat, DedupKey, ManifestDataset,
    Manifestation, ManifestationSchema, RawRecord, TraitGroup,
};
