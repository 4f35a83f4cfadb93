//! Attention-based seed screening.
//!
//! Scores diffusion seeds by how much early-step attention concentrates on
//! a prompt's core tokens, keeps the top K, and evaluates the resulting
//! rankings against externally supplied quality scores.
//!
//! * [`io`]: the ATTN v1 tensor codec and the JSON manifest.
//! * [`annotation`]: per-prompt token index sets.
//! * [`scoring`]: U-Net and DiT concentration scores.
//! * [`selection`]: ranking, top-K retention and NFE accounting.
//! * [`evaluation`]: overlap, NDCG, paired t-test and experiment drivers.
//! * [`synth`]: synthetic pools with a planted quality signal.
//! * [`oracle`]: a brute-force reference scorer.

pub mod annotation;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod oracle;
pub mod scoring;
pub mod selection;
pub mod synth;

pub use annotation::{Annotations, TokenAnnotation, TokenCategory};
pub use error::{Error, Result};
pub use io::{AttnTensor, ModelFamily, SeedManifest, SeedRecord, TensorKind};
pub use scoring::{score_pool, score_record, ScoreTable, ScoringConfig};
pub use selection::{rank, rank_scores, RankingResult};
