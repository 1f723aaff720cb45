//! Tooling for pre-trained word embeddings: reading and writing GloVe and
//! word2vec files, measuring vocabulary coverage and neighborhood overlap
//! between embedding spaces, building concatenated tables (and their
//! ablation variants) over a dataset vocabulary, and scoring IOBES tagging
//! output.

pub mod analysis;
pub mod cli;
pub mod combine;
pub mod corpus;
pub mod embedding;
pub mod tags;
