//! Cross-language retrieval experiment engine.
//!
//! The pipeline runs downstream of an external encoder: documents are cut
//! into passages ([`corpus`]), their token embeddings are exchanged through
//! [`embed_io`], indexed with 1-bit residual quantization ([`index`]),
//! searched with MaxSim and MaxP ([`search`]), combined ([`fusion`]),
//! reranked pointwise or by an oracle-driven 4-ary heapsort ([`rerank`],
//! [`oracle`]) and scored with nDCG and recall ([`eval`]).

pub mod cli;
pub mod corpus;
pub mod embed_io;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod index;
pub mod oracle;
pub mod pipeline;
pub mod rerank;
pub mod run;
pub mod search;
pub mod util;

pub use error::{Error, Result};
