//! `raseq`: a from-scratch neural sequence-to-sequence toolkit.
//!
//! The model is an RNNSearch-style encoder/decoder: a bidirectional LSTM
//! encoder, additive attention over the source annotations, and an LSTM
//! decoder with context feeding. On top of the plain content-based
//! addressing, the crate implements a recurrent attention memory: every
//! source word carries its own small LSTM that consumes a window of the
//! previous step's attention weights, and the resulting per-word state is
//! concatenated with the static annotation when scoring. The memory only
//! steers *where* the decoder looks; the context vector that is read out is
//! always a mixture of the static annotations.
//!
//! Everything runs on a minimal reverse-mode autodiff tape ([`tensor`]),
//! generic over `f32`/`f64` so that gradient checks can evaluate the same
//! graph in double precision. Training ([`training`]) is plain SGD with
//! gradient-norm rescaling; decoding ([`inference`]) is beam search with
//! attention tracing and copy-through UNK replacement; scoring ([`eval`])
//! is corpus-level tokenized BLEU.

pub mod data;
pub mod eval;
pub mod inference;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A caller violated an operation's contract (empty input, bad id, ...).
    #[error("contract error: {0}")]
    Contract(String),
    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Malformed file contents (corpus, config, checkpoint).
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// An I/O error tagged with the path it happened on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
