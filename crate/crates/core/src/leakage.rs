//! How much of a run of masked overlapping k-mers can be read off the
//! unmasked tokens around it.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::alphabet::{CODE, NUCLEOTIDES};
use crate::error::{Error, Result};
use crate::masking::MaskPlan;

/// Unknown-nucleotide budget for [`enumerate_consistent_completions`].
pub const MAX_UNKNOWNS: usize = 16;

fn check_km(k: usize, m: usize) -> Result<()> {
    if k == 0 || m == 0 {
        return Err(Error::Domain(format!("k and m must be positive (k={k}, m={m})")));
    }
    Ok(())
}

/// Percentage of a masked run of `m` consecutive `k`-mers that is
/// recoverable from its unmasked neighbors.
pub fn leakage_ratio(k: usize, m: usize) -> Result<f64> {
    check_km(k, m)?;
    if m < k {
        Ok(100.0)
    } else {
        Ok(100.0 * (k - 1) as f64 / m as f64)
    }
}

/// Fraction of the masked run's nucleotides that remain unknown.
pub fn max_entropy_ratio(k: usize, m: usize) -> Result<f64> {
    check_km(k, m)?;
    if m < k {
        Ok(0.0)
    } else {
        Ok((m - k + 1) as f64 / m as f64)
    }
}

/// Number of values masked token `i` (1-based) can take given unmasked
/// context on both sides of the run.
pub fn candidate_space_size(k: usize, m: usize, i: usize) -> Result<u64> {
    candidate_space_size_bounded(k, m, i, true, true)
}

/// As [`candidate_space_size`], with the option of a run that touches the
/// start (`left = false`) or end (`right = false`) of the sequence.
pub fn candidate_space_size_bounded(
    k: usize,
    m: usize,
    i: usize,
    left: bool,
    right: bool,
) -> Result<u64> {
    check_km(k, m)?;
    if i == 0 || i > m {
        return Err(Error::Domain(format!("position {i} outside 1..={m}")));
    }
    if k > 31 {
        return Err(Error::Domain(format!("k={k} too large")));
    }
    let from_left = if left { k.saturating_sub(i) } else { 0 };
    let from_right = if right { (k + i).saturating_sub(m + 1) } else { 0 };
    let unknown = k - k.min(from_left + from_right);
    Ok(4u64.pow(unknown as u32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub k: usize,
    pub m: usize,
    pub ratio_percent: f64,
    pub candidate_sizes: Vec<u64>,
    pub max_entropy_ratio: f64,
}

impl LeakageReport {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        let candidate_sizes = (1..=m)
            .map(|i| candidate_space_size(k, m, i))
            .collect::<Result<_>>()?;
        Ok(LeakageReport {
            k,
            m,
            ratio_percent: leakage_ratio(k, m)?,
            candidate_sizes,
            max_entropy_ratio: max_entropy_ratio(k, m)?,
        })
    }
}

/// A run of overlapping `k`-mer tokens, `None` marking masked ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedWindow {
    pub k: usize,
    pub tokens: Vec<Option<String>>,
}

impl MaskedWindow {
    /// Tokenize `bases` with stride 1 and hide the tokens at `masked`.
    pub fn from_bases(bases: &str, k: usize, masked: &[usize]) -> Result<Self> {
        if k == 0 || bases.len() < k {
            return Err(Error::Domain(format!("need at least k={k} bases")));
        }
        let mut tokens: Vec<Option<String>> = (0..=bases.len() - k)
            .map(|i| Some(bases[i..i + k].to_string()))
            .collect();
        for &j in masked {
            let slot = tokens
                .get_mut(j)
                .ok_or_else(|| Error::Domain(format!("masked position {j} out of range")))?;
            *slot = None;
        }
        Ok(MaskedWindow { k, tokens })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completions {
    /// Consistent assignments of the hidden nucleotides.
    pub total: u64,
    /// Distinct values each masked token takes, in window order.
    pub per_masked: Vec<(usize, u64)>,
}

/// Brute-force every assignment of the nucleotides covered by masked
/// tokens and keep those that agree with every unmasked token.
pub fn enumerate_consistent_completions(window: &MaskedWindow) -> Result<Completions> {
    let k = window.k;
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    let n_tok = window.tokens.len();
    if n_tok == 0 {
        return Ok(Completions { total: 1, per_masked: vec![] });
    }
    let len = n_tok + k - 1;
    let mut hidden = vec![false; len];
    for (j, t) in window.tokens.iter().enumerate() {
        match t {
            None => hidden[j..j + k].iter_mut().for_each(|h| *h = true),
            Some(s) => {
                if s.len() != k || s.bytes().any(|b| CODE[b as usize] > 3) {
                    return Err(Error::Domain(format!("token {s:?} is not a {k}-mer")));
                }
            }
        }
    }
    let mut bases = vec![0u8; len];
    for (j, t) in window.tokens.iter().enumerate() {
        if let Some(s) = t {
            for (o, b) in s.bytes().enumerate() {
                if !hidden[j + o] {
                    bases[j + o] = b.to_ascii_uppercase();
                }
            }
        }
    }
    let unknown: Vec<usize> = (0..len).filter(|&p| hidden[p]).collect();
    if unknown.len() > MAX_UNKNOWNS {
        return Err(Error::Resource(format!(
            "{} unknown nucleotides exceed the enumeration budget of {MAX_UNKNOWNS}",
            unknown.len()
        )));
    }
    let masked: Vec<usize> = (0..n_tok).filter(|&j| window.tokens[j].is_none()).collect();
    let mut seen: Vec<HashSet<Vec<u8>>> = vec![HashSet::new(); masked.len()];
    let mut total = 0u64;
    for assignment in 0..4u64.pow(unknown.len() as u32) {
        let mut a = assignment;
        for &p in &unknown {
            bases[p] = NUCLEOTIDES[(a & 3) as usize];
            a >>= 2;
        }
        let consistent = window.tokens.iter().enumerate().all(|(j, t)| match t {
            Some(s) => s.as_bytes().eq_ignore_ascii_case(&bases[j..j + k]),
            None => true,
        });
        if consistent {
            total += 1;
            for (set, &j) in seen.iter_mut().zip(&masked) {
                set.insert(bases[j..j + k].to_vec());
            }
        }
    }
    Ok(Completions {
        total,
        per_masked: masked.into_iter().zip(seen.iter().map(|s| s.len() as u64)).collect(),
    })
}

/// Length-weighted mean of [`leakage_ratio`] over the maximal runs of
/// consecutive prediction targets. Zero for an empty plan.
pub fn empirical_plan_leakage(plan: &MaskPlan, k: usize) -> Result<f64> {
    let runs = target_runs(&plan.m_positions);
    let total: usize = runs.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for &m in &runs {
        acc += m as f64 * leakage_ratio(k, m)?;
    }
    Ok(acc / total as f64)
}

fn target_runs(sorted: &[usize]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut iter = sorted.iter().copied();
    let Some(mut prev) = iter.next() else {
        return runs;
    };
    let mut len = 1;
    for p in iter {
        if p == prev + 1 {
            len += 1;
        } else {
            runs.push(len);
            len = 1;
        }
        prev = p;
    }
    runs.push(len);
    runs
}
