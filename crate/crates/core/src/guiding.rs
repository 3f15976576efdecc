//! Auxiliary supervision attached to a [`MaskPlan`]: frozen-token melting
//! (FTM), masked special tokens (MST), segment-order prediction (SOP) and
//! complementary-strand prediction (CSP).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskPlan;
use crate::vocab::{Special, Vocabulary};

pub const DEFAULT_SOP_REVERSE_PROB: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidingTask {
    Ftm,
    Mst,
    Sop,
    Csp,
}

impl fmt::Display for GuidingTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidingTask::Ftm => "ftm",
            GuidingTask::Mst => "mst",
            GuidingTask::Sop => "sop",
            GuidingTask::Csp => "csp",
        })
    }
}

impl FromStr for GuidingTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ftm" => Ok(GuidingTask::Ftm),
            "mst" => Ok(GuidingTask::Mst),
            "sop" => Ok(GuidingTask::Sop),
            "csp" => Ok(GuidingTask::Csp),
            other => Err(Error::Config(format!("unknown guiding task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    /// Ordinary vocabulary ids.
    Vocab,
    /// Reverse-complement label ids.
    Complement,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuidingLabels {
    PerPosition(BTreeMap<usize, u32>),
    Binary(u8),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidingTargets {
    pub task: GuidingTask,
    pub positions: Vec<usize>,
    pub labels: GuidingLabels,
    pub label_space: LabelSpace,
}

impl GuidingTargets {
    pub fn per_position(&self) -> Option<&BTreeMap<usize, u32>> {
        match &self.labels {
            GuidingLabels::PerPosition(m) => Some(m),
            GuidingLabels::Binary(_) => None,
        }
    }
}

/// Predict the leaky neighbors `M_in \ M` as well.
///
/// Only meaningful for overlapping tokenizers, so `k = 1` is rejected.
pub fn ftm_targets(tokens: &[u32], plan: &MaskPlan, k: usize) -> Result<GuidingTargets> {
    if k < 2 {
        return Err(Error::UnsupportedTask(
            "FTM needs an overlapping tokenizer (k >= 2)".into(),
        ));
    }
    let m: BTreeSet<usize> = plan.m_positions.iter().copied().collect();
    let positions: Vec<usize> = plan
        .m_in_positions
        .iter()
        .copied()
        .filter(|i| !m.contains(i))
        .collect();
    let labels = positions.iter().map(|&i| (i, tokens[i])).collect();
    Ok(GuidingTargets {
        task: GuidingTask::Ftm,
        positions,
        labels: GuidingLabels::PerPosition(labels),
        label_space: LabelSpace::Vocab,
    })
}

/// Mask every special token in the input and predict it.
pub fn mst_apply(
    tokens: &[u32],
    plan: &MaskPlan,
    vocab: &Vocabulary,
) -> Result<(Vec<u32>, GuidingTargets)> {
    let mask_id = vocab.require_special(Special::Mask)?;
    let mut input = plan.input_ids.clone();
    let mut labels = BTreeMap::new();
    for (i, &t) in tokens.iter().enumerate() {
        if vocab.is_special(t) {
            input[i] = mask_id;
            labels.insert(i, t);
        }
    }
    let targets = GuidingTargets {
        task: GuidingTask::Mst,
        positions: labels.keys().copied().collect(),
        labels: GuidingLabels::PerPosition(labels),
        label_space: LabelSpace::Vocab,
    };
    Ok((input, targets))
}

/// With probability `reverse_prob`, swap the two halves of the non-special
/// span (split at `⌊len/2⌋`) and label 1; otherwise leave it and label 0.
/// Special tokens keep their positions.
pub fn sop_transform<R: Rng + ?Sized>(
    tokens: &[u32],
    reverse_prob: f64,
    rng: &mut R,
    vocab: &Vocabulary,
) -> Result<(Vec<u32>, u8)> {
    if !(0.0..=1.0).contains(&reverse_prob) {
        return Err(Error::Config(format!("SOP probability {reverse_prob} outside [0, 1]")));
    }
    let slots: Vec<usize> = (0..tokens.len()).filter(|&i| !vocab.is_special(tokens[i])).collect();
    if slots.len() < 2 {
        return Ok((tokens.to_vec(), 0));
    }
    if rng.random::<f64>() >= reverse_prob {
        return Ok((tokens.to_vec(), 0));
    }
    let body: Vec<u32> = slots.iter().map(|&i| tokens[i]).collect();
    let mid = body.len() / 2;
    let swapped = body[mid..].iter().chain(&body[..mid]);
    let mut out = tokens.to_vec();
    for (&slot, &t) in slots.iter().zip(swapped) {
        out[slot] = t;
    }
    Ok((out, 1))
}

/// Predict the reverse complement of every strictly unmasked token.
pub fn csp_targets(tokens: &[u32], plan: &MaskPlan, vocab: &Vocabulary) -> Result<GuidingTargets> {
    let masked: BTreeSet<usize> = plan.m_in_positions.iter().copied().collect();
    let mut labels = BTreeMap::new();
    for (i, &t) in tokens.iter().enumerate() {
        if vocab.is_special(t) || masked.contains(&i) {
            continue;
        }
        labels.insert(i, vocab.rc_label(t)?);
    }
    let label_space = if vocab.rc_closed() {
        LabelSpace::Vocab
    } else {
        LabelSpace::Complement
    };
    Ok(GuidingTargets {
        task: GuidingTask::Csp,
        positions: labels.keys().copied().collect(),
        labels: GuidingLabels::PerPosition(labels),
        label_space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::{neighbor_mask, MaskConfig, MaskMode};
    use crate::vocab::build_kmer_vocab;
    use rand::SeedableRng;

    fn framed(v: &Vocabulary, body: &[u32]) -> Vec<u32> {
        let mut t = vec![v.special(Special::Cls).unwrap()];
        t.extend_from_slice(body);
        t.push(v.special(Special::Sep).unwrap());
        t
    }

    #[test]
    fn ftm_is_set_difference() {
        let v = build_kmer_vocab(3, false).unwrap();
        let tokens = framed(&v, &[1, 2, 3, 4, 5, 6, 7, 8]);
        let cfg = MaskConfig::new(0.11, 3, MaskMode::Fixed, 0).unwrap();
        let plan = neighbor_mask(&tokens, &[4], &cfg, &v).unwrap();
        let ftm = ftm_targets(&tokens, &plan, 3).unwrap();
        assert_eq!(ftm.positions, [2, 3, 5, 6]);
        assert_eq!(ftm.per_position().unwrap()[&5], tokens[5]);

        let dense = neighbor_mask(&tokens, &[1, 2, 3, 4, 5, 6, 7, 8], &cfg, &v).unwrap();
        assert!(ftm_targets(&tokens, &dense, 3).unwrap().positions.is_empty());
        assert!(matches!(ftm_targets(&tokens, &plan, 1), Err(Error::UnsupportedTask(_))));
    }

    #[test]
    fn mst_masks_sentinels() {
        let v = build_kmer_vocab(1, false).unwrap();
        let tokens = framed(&v, &[0, 1]);
        let cfg = MaskConfig::new(0.11, 1, MaskMode::Fixed, 0).unwrap();
        let plan = neighbor_mask(&tokens, &[1], &cfg, &v).unwrap();
        let (input, t) = mst_apply(&tokens, &plan, &v).unwrap();
        let mask = v.special(Special::Mask).unwrap();
        assert_eq!(input, [mask, mask, 1, mask]);
        assert_eq!(t.positions, [0, 3]);
        let labels = t.per_position().unwrap();
        assert_eq!(labels[&0], v.special(Special::Cls).unwrap());
        assert_eq!(labels[&3], v.special(Special::Sep).unwrap());

        let bare = [0, 1, 2];
        let plan = neighbor_mask(&bare, &[], &cfg, &v).unwrap();
        assert!(mst_apply(&bare, &plan, &v).unwrap().1.positions.is_empty());
    }

    #[test]
    fn sop_cases() {
        let v = build_kmer_vocab(1, false).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let tokens = framed(&v, &[0, 1, 2, 3]);
        let (same, label) = sop_transform(&tokens, 0.0, &mut rng, &v).unwrap();
        assert_eq!((same, label), (tokens.clone(), 0));
        let (swapped, label) = sop_transform(&tokens, 1.0, &mut rng, &v).unwrap();
        assert_eq!(label, 1);
        assert_eq!(swapped, framed(&v, &[2, 3, 0, 1]));
        let odd = framed(&v, &[0, 1, 2, 3, 0]);
        let (swapped, _) = sop_transform(&odd, 1.0, &mut rng, &v).unwrap();
        assert_eq!(swapped, framed(&v, &[2, 3, 0, 0, 1]));
        let short = framed(&v, &[3]);
        assert_eq!(sop_transform(&short, 1.0, &mut rng, &v).unwrap(), (short.clone(), 0));
        assert!(sop_transform(&tokens, 2.0, &mut rng, &v).is_err());
    }

    #[test]
    fn csp_complements_unmasked() {
        let v = build_kmer_vocab(1, false).unwrap();
        let a = v.id_of("A").unwrap();
        let c = v.id_of("C").unwrap();
        let tokens = framed(&v, &[a, c, a]);
        let cfg = MaskConfig::new(0.11, 1, MaskMode::Fixed, 0).unwrap();
        let plan = neighbor_mask(&tokens, &[2], &cfg, &v).unwrap();
        let t = csp_targets(&tokens, &plan, &v).unwrap();
        assert_eq!(t.positions, [1, 3]);
        assert_eq!(t.per_position().unwrap()[&1], v.id_of("T").unwrap());
        assert_eq!(t.label_space, LabelSpace::Vocab);

        let full = neighbor_mask(&tokens, &[1, 2, 3], &cfg, &v).unwrap();
        assert!(csp_targets(&tokens, &full, &v).unwrap().positions.is_empty());
    }
}
