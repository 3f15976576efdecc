//! Token frequency and successor-entropy tables, frequency × accuracy
//! bucketing, and vocabulary culling.
//!
//! "High-entropy" tokens are judged by the Shannon entropy of the token
//! that follows them in the corpus. It is a proxy for model uncertainty
//! that needs no trained model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::DnaSequence;
use crate::error::{Error, Result};
use crate::tokenize::TokenizerSpec;
use crate::vocab::{Special, Vocabulary, CULL_TOKEN};

/// Largest share of the non-special vocabulary that may be culled.
pub const MAX_CULL_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub token_id: u32,
    pub frequency: u64,
    pub rel_freq: f64,
    /// Entropy in bits of the next-token distribution.
    pub context_entropy: f64,
    pub accuracy: Option<f64>,
}

#[derive(Default)]
struct Tally {
    freq: Vec<u64>,
    succ: HashMap<(u32, u32), u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        if self.freq.len() < other.freq.len() {
            return other.merge(self);
        }
        for (a, b) in self.freq.iter_mut().zip(other.freq) {
            *a += b;
        }
        for (k, v) in other.succ {
            *self.succ.entry(k).or_insert(0) += v;
        }
        self
    }
}

/// Count every non-special token the tokenizer emits over `corpus`, and
/// the tokens that follow each one inside the same sequence.
///
/// Rows cover the non-special ids in id order; `rel_freq` is normalised
/// over them. Accuracy values, when given, must name non-special ids and
/// lie in `[0, 1]`.
pub fn compute_token_stats(
    corpus: &[DnaSequence],
    spec: &TokenizerSpec,
    accuracy: Option<&BTreeMap<u32, f64>>,
) -> Result<Vec<TokenStats>> {
    let vocab = spec.vocab();
    let n = vocab.non_special_count();
    if let Some(acc) = accuracy {
        let offenders: Vec<String> = acc
            .keys()
            .filter(|&&id| id as usize >= n)
            .map(|id| id.to_string())
            .collect();
        if !offenders.is_empty() {
            return Err(Error::Input(format!(
                "accuracy given for unknown or special token ids: {}",
                offenders.join(", ")
            )));
        }
        if let Some((id, v)) = acc.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("accuracy {v} for token {id} outside [0, 1]")));
        }
    }

    let tally = corpus
        .par_iter()
        .map(|seq| {
            let ids = spec.encode(seq);
            let mut t = Tally {
                freq: vec![0; n],
                succ: HashMap::new(),
            };
            for (i, &id) in ids.iter().enumerate() {
                if vocab.is_special(id) {
                    continue;
                }
                t.freq[id as usize] += 1;
                if let Some(&next) = ids.get(i + 1) {
                    *t.succ.entry((id, next)).or_insert(0) += 1;
                }
            }
            t
        })
        .reduce(Tally::default, Tally::merge);

    let mut freq = tally.freq;
    freq.resize(n, 0);
    let total: u64 = freq.iter().sum();
    let mut by_token: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut succ: Vec<_> = tally.succ.into_iter().collect();
    succ.sort_unstable();
    for ((a, _), c) in succ {
        by_token[a as usize].push(c);
    }

    Ok((0..n)
        .map(|id| TokenStats {
            token_id: id as u32,
            frequency: freq[id],
            rel_freq: if total == 0 { 0.0 } else { freq[id] as f64 / total as f64 },
            context_entropy: entropy_bits(&by_token[id]),
            accuracy: accuracy.and_then(|a| a.get(&(id as u32)).copied()),
        })
        .collect())
}

fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Read a `token_id,accuracy` CSV with a header row.
pub fn read_accuracy_csv(reader: impl Read) -> Result<BTreeMap<u32, f64>> {
    #[derive(Deserialize)]
    struct Row {
        token_id: u32,
        accuracy: f64,
    }
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        if out.insert(row.token_id, row.accuracy).is_some() {
            return Err(Error::Input(format!("duplicate accuracy row for token {}", row.token_id)));
        }
    }
    Ok(out)
}

pub fn load_accuracy_csv(path: impl AsRef<Path>) -> Result<BTreeMap<u32, f64>> {
    read_accuracy_csv(std::fs::File::open(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqBand {
    Low,
    Mid,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccBand {
    Low,
    High,
}

impl fmt::Display for FreqBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreqBand::Low => "low",
            FreqBand::Mid => "mid",
            FreqBand::High => "high",
        })
    }
}

impl fmt::Display for AccBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccBand::Low => "low",
            AccBand::High => "high",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub token_id: u32,
    pub freq_band: FreqBand,
    pub acc_band: AccBand,
}

/// Value at rank `ceil(q·n)` of the sorted sample (1-based).
fn lower_quantile(sorted: &[f64], num: usize, den: usize) -> f64 {
    let rank = (sorted.len() * num).div_ceil(den).max(1);
    sorted[rank - 1]
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Split tokens into three frequency bands and two accuracy bands.
///
/// Defaults are the tertiles of `rel_freq` and the median accuracy. A value
/// equal to an edge goes to the lower band.
pub fn bucket_tokens(
    stats: &[TokenStats],
    freq_edges: Option<(f64, f64)>,
    acc_edge: Option<f64>,
) -> Result<Vec<Bucket>> {
    let missing: Vec<String> = stats
        .iter()
        .filter(|s| s.accuracy.is_none())
        .map(|s| s.token_id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "accuracy missing for {} tokens: {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    if stats.is_empty() {
        return Ok(Vec::new());
    }
    let (lo, hi) = match freq_edges {
        Some((lo, hi)) if lo <= hi => (lo, hi),
        Some((lo, hi)) => {
            return Err(Error::Config(format!("frequency edges {lo} > {hi}")));
        }
        None => {
            let f = sorted(stats.iter().map(|s| s.rel_freq));
            (lower_quantile(&f, 1, 3), lower_quantile(&f, 2, 3))
        }
    };
    let acc_edge = acc_edge.unwrap_or_else(|| {
        let a = sorted(stats.iter().filter_map(|s| s.accuracy));
        lower_quantile(&a, 1, 2)
    });
    Ok(stats
        .iter()
        .map(|s| {
            let acc = s.accuracy.expect("checked above");
            Bucket {
                token_id: s.token_id,
                freq_band: if s.rel_freq <= lo {
                    FreqBand::Low
                } else if s.rel_freq <= hi {
                    FreqBand::Mid
                } else {
                    FreqBand::High
                },
                acc_band: if acc <= acc_edge { AccBand::Low } else { AccBand::High },
            }
        })
        .collect())
}

/// Write the stats table as CSV. Bands are left empty when `buckets` is
/// `None`.
pub fn write_stats_csv(
    out: impl Write,
    vocab: &Vocabulary,
    stats: &[TokenStats],
    buckets: Option<&[Bucket]>,
) -> Result<()> {
    let bands: HashMap<u32, &Bucket> = buckets
        .unwrap_or_default()
        .iter()
        .map(|b| (b.token_id, b))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "token_id",
        "token",
        "frequency",
        "rel_freq",
        "context_entropy",
        "accuracy",
        "freq_band",
        "acc_band",
    ])?;
    for s in stats {
        let b = bands.get(&s.token_id);
        w.write_record([
            s.token_id.to_string(),
            vocab.token(s.token_id).unwrap_or_default().to_string(),
            s.frequency.to_string(),
            s.rel_freq.to_string(),
            s.context_entropy.to_string(),
            s.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            b.map(|b| b.freq_band.to_string()).unwrap_or_default(),
            b.map(|b| b.acc_band.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CullSpec {
    pub remove_ids: BTreeSet<u32>,
}

/// A culled vocabulary and the map from old ids to new ones.
#[derive(Clone, Debug)]
pub struct CulledVocab {
    pub vocab: Vocabulary,
    /// Indexed by old id. Removed tokens map to `cull_id`.
    pub remap: Vec<u32>,
    pub cull_id: u32,
}

impl CulledVocab {
    /// Rewrite ids produced under the original vocabulary.
    pub fn remap_ids(&self, ids: &[u32]) -> Vec<u32> {
        ids.iter().map(|&i| self.remap[i as usize]).collect()
    }
}

/// Drop `spec.remove_ids` from the vocabulary and add a `[CULL]` token that
/// stands in for all of them.
pub fn cull_vocab(vocab: &Vocabulary, spec: &CullSpec) -> Result<CulledVocab> {
    let n = vocab.non_special_count();
    for &id in &spec.remove_ids {
        if id as usize >= vocab.len() {
            return Err(Error::Domain(format!("token id {id} is not in the vocabulary")));
        }
        if vocab.is_special(id) {
            return Err(Error::Domain(format!("special token {id} cannot be culled")));
        }
        if Some(id) == vocab.cull_id() {
            return Err(Error::Domain(format!("{CULL_TOKEN} itself cannot be culled")));
        }
    }
    let real = n - usize::from(vocab.cull_id().is_some());
    if spec.remove_ids.len() as f64 > MAX_CULL_FRACTION * real as f64 {
        return Err(Error::Constraint(format!(
            "culling {} of {real} tokens exceeds the 10% bound",
            spec.remove_ids.len()
        )));
    }

    let mut tokens = Vec::with_capacity(vocab.len() + 1);
    let mut remap = vec![u32::MAX; vocab.len()];
    for id in 0..n as u32 {
        if !spec.remove_ids.contains(&id) {
            remap[id as usize] = tokens.len() as u32;
            tokens.push(vocab.tokens()[id as usize].clone());
        }
    }
    let cull_id = match vocab.cull_id() {
        Some(old) => remap[old as usize],
        None => {
            tokens.push(CULL_TOKEN.to_string());
            tokens.len() as u32 - 1
        }
    };
    for &id in &spec.remove_ids {
        remap[id as usize] = cull_id;
    }
    let mut specials = BTreeMap::new();
    let mut ordered: Vec<(Special, u32)> = vocab.special_ids().collect();
    ordered.sort_by_key(|&(_, id)| id);
    for (s, old) in ordered {
        let new = tokens.len() as u32;
        remap[old as usize] = new;
        tokens.push(s.token().to_string());
        specials.insert(s.name().to_string(), new);
    }
    let culled = Vocabulary::from_parts(
        vocab.kind(),
        vocab.k(),
        tokens,
        &specials,
        vocab.merges().to_vec(),
    )?;
    Ok(CulledVocab {
        vocab: culled,
        remap,
        cull_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::NMode;
    use crate::vocab::build_kmer_vocab;
    use proptest::prelude::*;

    fn spec(k: usize) -> TokenizerSpec {
        TokenizerSpec::new(build_kmer_vocab(k, false).unwrap(), NMode::AsUnk, false).unwrap()
    }

    fn corpus(items: &[&str]) -> Vec<DnaSequence> {
        items.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn homopolymer_stats() {
        let s = compute_token_stats(&corpus(&["AAAA"]), &spec(1), None).unwrap();
        assert_eq!(s.iter().map(|r| r.frequency).collect::<Vec<_>>(), [4, 0, 0, 0]);
        assert_eq!(s[0].rel_freq, 1.0);
        assert_eq!(s[0].context_entropy, 0.0);
    }

    #[test]
    fn alternating_stats() {
        let s = compute_token_stats(&corpus(&["ACAC"]), &spec(1), None).unwrap();
        assert_eq!((s[0].frequency, s[1].frequency), (2, 2));
        assert_eq!((s[0].context_entropy, s[1].context_entropy), (0.0, 0.0));
        // A is followed by C and by G once each
        let s = compute_token_stats(&corpus(&["ACAG"]), &spec(1), None).unwrap();
        assert!((s[0].context_entropy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_pairs_across_sequences() {
        // "AC" then "GT": a cross-boundary pair would give C a successor
        let s = compute_token_stats(&corpus(&["AC", "GT"]), &spec(1), None).unwrap();
        let joined = compute_token_stats(&corpus(&["ACGT"]), &spec(1), None).unwrap();
        assert_eq!(s[1].context_entropy, 0.0);
        assert_eq!(s.iter().map(|r| r.frequency).sum::<u64>(), 4);
        assert_eq!(joined.iter().map(|r| r.frequency).sum::<u64>(), 4);
    }

    #[test]
    fn accuracy_validation() {
        let bad: BTreeMap<u32, f64> = [(2, 0.5), (70, 0.5), (4, 0.1)].into();
        let err = compute_token_stats(&corpus(&["ACGT"]), &spec(1), Some(&bad)).unwrap_err();
        assert!(err.to_string().contains("70") && err.to_string().contains('4'));
        let csv = "token_id,accuracy\n0,0.5\n3,0.25\n";
        let acc = read_accuracy_csv(csv.as_bytes()).unwrap();
        let s = compute_token_stats(&corpus(&["ACGT"]), &spec(1), Some(&acc)).unwrap();
        assert_eq!(s[3].accuracy, Some(0.25));
        assert_eq!(s[1].accuracy, None);
    }

    fn row(id: u32, rel_freq: f64, acc: f64) -> TokenStats {
        TokenStats {
            token_id: id,
            frequency: 0,
            rel_freq,
            context_entropy: 0.0,
            accuracy: Some(acc),
        }
    }

    #[test]
    fn one_token_per_bucket() {
        let stats = [
            row(0, 0.01, 0.2),
            row(1, 0.02, 0.9),
            row(2, 0.10, 0.3),
            row(3, 0.11, 0.8),
            row(4, 0.30, 0.1),
            row(5, 0.46, 0.7),
        ];
        let b = bucket_tokens(&stats, None, None).unwrap();
        let cells: BTreeSet<(FreqBand, AccBand)> = b.iter().map(|b| (b.freq_band, b.acc_band)).collect();
        assert_eq!(cells.len(), 6);
    }

    #[test]
    fn ties_go_low_and_edges_override() {
        let stats: Vec<TokenStats> = (0..5).map(|i| row(i, 0.2, 0.5)).collect();
        let b = bucket_tokens(&stats, None, None).unwrap();
        assert!(b.iter().all(|b| b.freq_band == FreqBand::Low && b.acc_band == AccBand::Low));

        let stats: Vec<TokenStats> = (0..4).map(|i| row(i, i as f64, i as f64 / 4.0)).collect();
        let b = bucket_tokens(&stats, Some((0.5, 2.0)), Some(0.0)).unwrap();
        let bands: Vec<FreqBand> = b.iter().map(|b| b.freq_band).collect();
        assert_eq!(bands, [FreqBand::Low, FreqBand::Mid, FreqBand::Mid, FreqBand::High]);
        assert_eq!(b[0].acc_band, AccBand::Low);
        assert!(b[1..].iter().all(|b| b.acc_band == AccBand::High));

        let mut partial = stats.clone();
        partial[2].accuracy = None;
        assert!(bucket_tokens(&partial, None, None).is_err());
    }

    #[test]
    fn cull_examples() {
        let v = build_kmer_vocab(3, false).unwrap();
        let c = cull_vocab(&v, &CullSpec::default()).unwrap();
        assert_eq!(c.vocab.non_special_count(), 65);
        assert_eq!(c.vocab.token(c.cull_id), Some(CULL_TOKEN));

        let atc = v.id_of("ATC").unwrap();
        let remove: BTreeSet<u32> = [atc, 1, 2, 3, 4, 5].into();
        let c = cull_vocab(&v, &CullSpec { remove_ids: remove }).unwrap();
        assert_eq!(c.vocab.non_special_count(), 59);
        let spec = TokenizerSpec::new(c.vocab.clone(), NMode::AsUnk, false).unwrap();
        let ids = spec.encode(&"ATCG".parse().unwrap());
        assert_eq!(ids[0], c.cull_id);
        assert_eq!(spec.vocab().token(ids[1]), Some("TCG"));

        let seven: BTreeSet<u32> = (0..7).collect();
        let err = cull_vocab(&v, &CullSpec { remove_ids: seven }).unwrap_err();
        assert!(matches!(err, Error::Constraint(_)));
        assert_eq!(err.exit_code(), 3);

        let special = v.special(Special::Cls).unwrap();
        let err = cull_vocab(&v, &CullSpec { remove_ids: [special].into() }).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn cull_round_trips_through_json() {
        let v = build_kmer_vocab(2, false).unwrap();
        let c = cull_vocab(&v, &CullSpec { remove_ids: [5].into() }).unwrap();
        let back = Vocabulary::from_json(&c.vocab.to_json().unwrap()).unwrap();
        assert_eq!(back, c.vocab);
        assert_eq!(back.cull_id(), Some(c.cull_id));
    }

    proptest! {
        #[test]
        fn stats_invariants(seqs in proptest::collection::vec("[ACGTN]{0,60}", 1..6)) {
            let corpus: Vec<DnaSequence> = seqs.iter().map(|s| s.parse().unwrap()).collect();
            let spec = spec(2);
            let stats = compute_token_stats(&corpus, &spec, None).unwrap();
            let emitted: usize = corpus
                .iter()
                .map(|s| spec.encode(s).iter().filter(|&&t| !spec.vocab().is_special(t)).count())
                .sum();
            prop_assert_eq!(stats.iter().map(|s| s.frequency).sum::<u64>() as usize, emitted);
            let total: f64 = stats.iter().map(|s| s.rel_freq).sum();
            prop_assert!(emitted == 0 || (total - 1.0).abs() < 1e-9);
            let cap = (spec.vocab().len() as f64).log2();
            prop_assert!(stats.iter().all(|s| (0.0..=cap + 1e-12).contains(&s.context_entropy)));
        }

        #[test]
        fn buckets_partition(vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)) {
            let stats: Vec<TokenStats> = vals
                .iter()
                .enumerate()
                .map(|(i, &(f, a))| row(i as u32, f, a))
                .collect();
            let b = bucket_tokens(&stats, None, None).unwrap();
            let ids: Vec<u32> = b.iter().map(|b| b.token_id).collect();
            prop_assert_eq!(ids, (0..stats.len() as u32).collect::<Vec<_>>());
        }
    }
}
