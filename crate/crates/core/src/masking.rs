//! Neighbor masking for overlapping k-mer pretraining.
//!
//! A token at position `j` shares `k−1` bases with each of its `k−1`
//! neighbors on either side, so predicting it while any of them is visible
//! leaks the answer. [`MaskMode::Fixed`] masks the whole `(2k−1)`-window
//! around every target, never touches special tokens, and keeps only the
//! chosen targets as labels. [`MaskMode::Flawed`] reproduces the historical
//! DNABERT behaviour: an asymmetric `k`-wide window that also masks
//! sentinels, with every masked position used as a label.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sequence_rng, Purpose};
use crate::vocab::{Special, Vocabulary};

pub const DEFAULT_MASK_PROB: f64 = 0.11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    Fixed,
    Flawed,
}

impl FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(MaskMode::Fixed),
            "flawed" => Ok(MaskMode::Flawed),
            other => Err(Error::Config(format!("unknown masking mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub p: f64,
    pub k: usize,
    pub mode: MaskMode,
    pub master_seed: u64,
}

impl MaskConfig {
    pub fn new(p: f64, k: usize, mode: MaskMode, master_seed: u64) -> Result<Self> {
        let cfg = MaskConfig {
            p,
            k,
            mode,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("masking probability {} outside [0, 1]", self.p)));
        }
        if self.k == 0 {
            return Err(Error::Config("neighborhood k must be at least 1".into()));
        }
        Ok(())
    }

    /// Offsets masked around each target.
    pub fn neighbor_offsets(&self) -> std::ops::RangeInclusive<isize> {
        let k = self.k as isize;
        match self.mode {
            MaskMode::Fixed => (1 - k)..=(k - 1),
            MaskMode::Flawed => (1 - k / 2)..=(k - k / 2),
        }
    }
}

/// Masked input, input-masked positions and prediction targets for one
/// sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub input_ids: Vec<u32>,
    /// Prediction targets `M`, sorted.
    pub m_positions: Vec<usize>,
    /// Positions replaced by `[MASK]` in the input, sorted.
    pub m_in_positions: Vec<usize>,
    /// Original token id for every labelled position.
    pub labels: BTreeMap<usize, u32>,
}

/// Draw the prediction targets: each non-special position independently
/// with probability `cfg.p`, from the stream for `ordinal`.
pub fn select_targets(
    tokens: &[u32],
    vocab: &Vocabulary,
    cfg: &MaskConfig,
    ordinal: u64,
) -> Vec<usize> {
    let mut rng = sequence_rng(cfg.master_seed, Purpose::Masking, ordinal);
    tokens
        .iter()
        .enumerate()
        .filter(|&(_, &t)| !vocab.is_special(t))
        .filter(|_| rng.random::<f64>() < cfg.p)
        .map(|(i, _)| i)
        .collect()
}

/// Expand targets into a full masking plan.
pub fn neighbor_mask(
    tokens: &[u32],
    targets: &[usize],
    cfg: &MaskConfig,
    vocab: &Vocabulary,
) -> Result<MaskPlan> {
    cfg.validate()?;
    let mask_id = vocab.require_special(Special::Mask)?;
    let n = tokens.len();
    let mut in_m = vec![false; n];
    for &j in targets {
        if j >= n {
            return Err(Error::Domain(format!("target {j} outside sequence of length {n}")));
        }
        if vocab.is_special(tokens[j]) {
            return Err(Error::Domain(format!("target {j} is a special token")));
        }
        in_m[j] = true;
    }

    let mut in_m_in = in_m.clone();
    let offsets = cfg.neighbor_offsets();
    for j in (0..n).filter(|&j| in_m[j]) {
        for off in offsets.clone() {
            let i = j as isize + off;
            if i < 0 || i >= n as isize {
                continue;
            }
            let i = i as usize;
            if cfg.mode == MaskMode::Fixed && vocab.is_special(tokens[i]) {
                continue;
            }
            in_m_in[i] = true;
        }
    }

    let m_positions: Vec<usize> = (0..n).filter(|&i| in_m[i]).collect();
    let m_in_positions: Vec<usize> = (0..n).filter(|&i| in_m_in[i]).collect();
    let label_positions = match cfg.mode {
        MaskMode::Fixed => &m_positions,
        MaskMode::Flawed => &m_in_positions,
    };
    let labels = label_positions.iter().map(|&i| (i, tokens[i])).collect();
    let input_ids = tokens
        .iter()
        .zip(&in_m_in)
        .map(|(&t, &masked)| if masked { mask_id } else { t })
        .collect();
    Ok(MaskPlan {
        input_ids,
        m_positions,
        m_in_positions,
        labels,
    })
}

/// [`select_targets`] followed by [`neighbor_mask`].
pub fn mask_tokens(
    tokens: &[u32],
    vocab: &Vocabulary,
    cfg: &MaskConfig,
    ordinal: u64,
) -> Result<MaskPlan> {
    let targets = select_targets(tokens, vocab, cfg, ordinal);
    neighbor_mask(tokens, &targets, cfg, vocab)
}

/// True when no labelled position can see an unmasked non-special token
/// within distance `k − 1`.
pub fn verify_no_leakage(plan: &MaskPlan, k: usize, vocab: &Vocabulary) -> bool {
    let n = plan.input_ids.len();
    let mut masked = vec![false; n];
    for &i in &plan.m_in_positions {
        if i < n {
            masked[i] = true;
        }
    }
    let reach = k.saturating_sub(1);
    plan.labels.keys().all(|&j| {
        let lo = j.saturating_sub(reach);
        let hi = (j + reach).min(n.saturating_sub(1));
        (lo..=hi).all(|i| masked[i] || vocab.is_special(plan.input_ids[i]))
    })
}
