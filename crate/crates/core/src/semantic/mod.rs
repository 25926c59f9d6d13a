//! Semantic side channel: tokenization and index coding of captions,
//! residual-caption retrieval, and projected prompt optimization.

mod captioner;
mod index;
mod pfo;
mod vocab;

pub use captioner::{
    fill_residual_prompt, mock_residual, CaptionerClient, HttpCaptioner, CAPTION_PROMPT, DEFAULT_TOKEN_ENV,
    RESIDUAL_PROMPT,
};
pub use index::{
    baseline_compress, baseline_decompress, bits_per_index, decode_indices, encode_indices, unigram_prior,
    IndexMode, INDEX_HEADER_BYTES,
};
pub use pfo::{
    aux_loss, aux_loss_grad, combined_loss, pfo_optimize, project_embeddings, MlpDenoisingLoss, PfoConfig,
    PfoLoss, PfoOutcome, PfoRecord,
};
pub use vocab::{canonicalize, detokenize, tokenize, TokenSequence, Vocabulary, BYTE_TOKENS};

/// Default word list, most frequent first.
pub const DEFAULT_VOCAB: &str = include_str!("../../data/vocab.txt");
/// Checked-in caption corpus, one caption per line.
pub const CAPTION_CORPUS: &str = include_str!("../../data/captions.txt");
