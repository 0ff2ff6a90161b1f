//! Contextual graph embeddings for schema matching and entity resolution
//! across pairs of tables.

pub mod embed;
pub mod graph;
pub mod harness;
pub mod hashing;
pub mod matching;
pub mod similarity;
pub mod tabular;
pub mod textvec;
pub mod walks;

mod union_find;
