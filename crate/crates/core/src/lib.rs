//! Tokenizers, neighbor masking, guiding-task targets and dataset
//! statistics for nucleotide language-model pretraining.

pub mod alphabet;
pub mod benchstats;
pub mod error;
pub mod fasta;
pub mod guiding;
pub mod leakage;
pub mod masking;
pub mod pipeline;
pub mod rng;
pub mod tokenize;
pub mod vocabstats;
pub mod vocab;

pub use alphabet::{reverse_complement, DnaSequence};
pub use error::{Error, Result};
pub use guiding::{GuidingTargets, GuidingTask};
pub use leakage::{candidate_space_size, leakage_ratio, LeakageReport};
pub use masking::{MaskConfig, MaskMode, MaskPlan};
pub use tokenize::{NMode, TokenizerSpec};
pub use vocab::{Special, VocabKind, Vocabulary};
