//! Sequence → token-id encoders for overlapping k-mers, non-overlapping
//! words and BPE, with three ways of handling `N`.

pub mod bpe;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{DnaSequence, CODE};
use crate::error::{Error, Result};
use crate::vocab::{Special, VocabKind, Vocabulary};

pub use bpe::{bpe_train, BpeModel, BpeTraining};

/// How windows or runs containing `N` are tokenized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NMode {
    /// Emit `[UNK]` for every window that touches an `N`.
    AsUnk,
    /// Skip windows that touch an `N`.
    Drop,
    /// Cover N-runs with dedicated N-run tokens.
    SegN,
}

impl FromStr for NMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "unk" | "as_unk" | "base" => Ok(NMode::AsUnk),
            "drop" | "without_n" => Ok(NMode::Drop),
            "segn" | "seg_n" => Ok(NMode::SegN),
            other => Err(Error::Config(format!("unknown N mode {other:?}"))),
        }
    }
}

/// A vocabulary together with its encoding options.
#[derive(Clone, Debug)]
pub struct TokenizerSpec {
    vocab: Vocabulary,
    n_mode: NMode,
    add_sentinels: bool,
    bpe: Option<BpeModel>,
    unk: Option<u32>,
}

impl TokenizerSpec {
    pub fn new(vocab: Vocabulary, n_mode: NMode, add_sentinels: bool) -> Result<Self> {
        let unk = vocab.special(Special::Unk);
        match n_mode {
            NMode::AsUnk if unk.is_none() => {
                return Err(Error::Config("N mode 'unk' needs an [UNK] token".into()))
            }
            NMode::SegN if vocab.kind() == VocabKind::Bpe => {
                return Err(Error::Config("N segmentation is only defined for k-mer and word vocabularies".into()))
            }
            NMode::SegN if vocab.n_run_tokens().is_empty() => {
                return Err(Error::Config(
                    "N segmentation needs a vocabulary built with N-run tokens".into(),
                ))
            }
            _ => {}
        }
        if add_sentinels {
            vocab.require_special(Special::Cls)?;
            vocab.require_special(Special::Sep)?;
        }
        let bpe = match vocab.kind() {
            VocabKind::Bpe => Some(BpeModel::new(&vocab)?),
            _ => None,
        };
        Ok(TokenizerSpec {
            vocab,
            n_mode,
            add_sentinels,
            bpe,
            unk,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn n_mode(&self) -> NMode {
        self.n_mode
    }

    pub fn add_sentinels(&self) -> bool {
        self.add_sentinels
    }

    /// Same spec with sentinels switched on or off.
    pub fn with_sentinels(mut self, on: bool) -> Result<Self> {
        if on {
            self.vocab.require_special(Special::Cls)?;
            self.vocab.require_special(Special::Sep)?;
        }
        self.add_sentinels = on;
        Ok(self)
    }

    /// Encode a validated sequence.
    pub fn encode(&self, seq: &DnaSequence) -> Vec<u32> {
        let mut out = Vec::new();
        self.open(&mut out);
        self.encode_body(seq.as_bytes(), &mut out);
        self.close(&mut out);
        out
    }

    /// Encode using up to `threads` workers. Output is identical to
    /// [`encode`](Self::encode) for any thread count.
    pub fn par_encode(&self, seq: &DnaSequence, threads: usize) -> Result<Vec<u32>> {
        let threads = threads.max(1);
        let parallel_ok = self.n_mode != NMode::SegN && self.vocab.kind() != VocabKind::Bpe;
        if threads == 1 || !parallel_ok {
            return Ok(self.encode(seq));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let bytes = seq.as_bytes();
        let k = self.vocab.k().unwrap_or(1);
        let (windows, stride) = match self.vocab.kind() {
            VocabKind::KmerOverlap => ((bytes.len() + 1).saturating_sub(k), 1),
            _ => (bytes.len() / k, k),
        };
        const CHUNK_WINDOWS: usize = 1 << 20;
        let chunks: Vec<(usize, usize)> = (0..windows)
            .step_by(CHUNK_WINDOWS)
            .map(|w| (w, (w + CHUNK_WINDOWS).min(windows)))
            .collect();
        let parts: Vec<Vec<u32>> = pool.install(|| {
            chunks
                .par_iter()
                .map(|&(w0, w1)| {
                    let lo = w0 * stride;
                    let hi = (w1 - 1) * stride + k;
                    let mut out = Vec::with_capacity(w1 - w0);
                    self.encode_body(&bytes[lo..hi], &mut out);
                    out
                })
                .collect()
        });
        let mut out = Vec::with_capacity(windows + 2);
        self.open(&mut out);
        for p in parts {
            out.extend_from_slice(&p);
        }
        self.close(&mut out);
        Ok(out)
    }

    fn open(&self, out: &mut Vec<u32>) {
        if self.add_sentinels {
            out.push(self.vocab.special(Special::Cls).expect("checked in new"));
        }
    }

    fn close(&self, out: &mut Vec<u32>) {
        if self.add_sentinels {
            out.push(self.vocab.special(Special::Sep).expect("checked in new"));
        }
    }

    fn encode_body(&self, bytes: &[u8], out: &mut Vec<u32>) {
        let unk = match self.n_mode {
            NMode::AsUnk => self.unk,
            _ => None,
        };
        match (self.vocab.kind(), self.n_mode) {
            (VocabKind::Bpe, _) => {
                self.bpe
                    .as_ref()
                    .expect("BPE model built in new")
                    .encode_into(bytes, unk, out);
            }
            (kind, NMode::SegN) => {
                let k = self.vocab.k().expect("k-mer vocabulary");
                let stride = if kind == VocabKind::KmerOverlap { 1 } else { k };
                let lens: Vec<usize> = self.vocab.n_run_tokens().iter().map(|t| t.0).collect();
                let segments =
                    segment_runs(bytes, k, stride, &lens).expect("priority list ends with \"N\"");
                for seg in segments {
                    out.push(match seg {
                        Segment::Window(at) => {
                            let code = crate::vocab::kmer_code(&bytes[at..at + k]).expect("ACGT window");
                            self.vocab.kmer_id(code)
                        }
                        Segment::NRun(len) => self.n_run_id(len),
                    });
                }
            }
            (VocabKind::KmerOverlap, _) => {
                kmer_windows(bytes, self.vocab.k().expect("k"), &self.vocab, unk, out)
            }
            (VocabKind::Word, _) => {
                word_windows(bytes, self.vocab.k().expect("k"), &self.vocab, unk, out)
            }
        }
    }

    fn n_run_id(&self, len: usize) -> u32 {
        self.vocab
            .n_run_tokens()
            .iter()
            .find(|t| t.0 == len)
            .map(|t| t.1)
            .expect("segment lengths come from the vocabulary")
    }

    /// Rebuild nucleotide text from ids. Specials are skipped; overlapping
    /// k-mers contribute one new base per token after the first.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        let mut first = true;
        for &id in ids {
            if self.vocab.is_special(id) {
                continue;
            }
            let t = self.vocab.token(id).unwrap_or("");
            match self.vocab.kind() {
                VocabKind::KmerOverlap if !first && !t.starts_with('N') => {
                    out.push_str(&t[t.len() - 1..])
                }
                _ => out.push_str(t),
            }
            first = false;
        }
        out
    }
}

fn kind_guard(spec: &TokenizerSpec, want: VocabKind) -> Result<()> {
    if spec.vocab.kind() != want {
        return Err(Error::Config(format!(
            "expected a {want} vocabulary, got {}",
            spec.vocab.kind()
        )));
    }
    Ok(())
}

/// Overlapping k-mer tokenization (stride 1).
pub fn kmer_tokenize(seq: &DnaSequence, spec: &TokenizerSpec) -> Result<Vec<u32>> {
    kind_guard(spec, VocabKind::KmerOverlap)?;
    Ok(spec.encode(seq))
}

/// Non-overlapping k-mer tokenization (stride k, remainder dropped).
pub fn word_tokenize(seq: &DnaSequence, spec: &TokenizerSpec) -> Result<Vec<u32>> {
    kind_guard(spec, VocabKind::Word)?;
    Ok(spec.encode(seq))
}

/// Merge-rank BPE encoding.
pub fn bpe_encode(seq: &DnaSequence, spec: &TokenizerSpec) -> Result<Vec<u32>> {
    kind_guard(spec, VocabKind::Bpe)?;
    Ok(spec.encode(seq))
}

fn kmer_windows(bytes: &[u8], k: usize, vocab: &Vocabulary, unk: Option<u32>, out: &mut Vec<u32>) {
    if bytes.len() < k {
        return;
    }
    let mask = ((1u64 << (2 * k)) - 1) as u32;
    let mut code = 0u32;
    let mut run = 0usize;
    out.reserve(bytes.len() - k + 1);
    for (i, &b) in bytes.iter().enumerate() {
        let c = CODE[b as usize];
        if c < 4 {
            code = ((code << 2) | c as u32) & mask;
            run += 1;
        } else {
            run = 0;
        }
        if i + 1 >= k {
            if run >= k {
                out.push(vocab.kmer_id(code));
            } else if let Some(u) = unk {
                out.push(u);
            }
        }
    }
}

fn word_windows(bytes: &[u8], k: usize, vocab: &Vocabulary, unk: Option<u32>, out: &mut Vec<u32>) {
    out.reserve(bytes.len() / k);
    for w in bytes.chunks_exact(k) {
        match crate::vocab::kmer_code(w) {
            Some(code) => out.push(vocab.kmer_id(code)),
            None => {
                if let Some(u) = unk {
                    out.push(u)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Segment {
    /// A k-length ACGT window starting at this offset.
    Window(usize),
    /// One N-run token of this length.
    NRun(usize),
}

/// Split into ACGT windows and greedy N-run tokens. N-runs are covered
/// longest-token-first with leftovers falling through to shorter tokens;
/// ACGT runs are tiled every `stride` bases and short remainders dropped.
pub(crate) fn segment_runs(
    seq: &[u8],
    k: usize,
    stride: usize,
    priority_lens: &[usize],
) -> Result<Vec<Segment>> {
    let n = seq.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        if seq[i] == b'N' {
            while j < n && seq[j] == b'N' {
                j += 1;
            }
            let len = j - i;
            let Some(&t) = priority_lens.iter().find(|&&t| len / t > 0) else {
                return Err(Error::Segmentation { offset: i, len });
            };
            let m = len / t;
            out.extend(std::iter::repeat_n(Segment::NRun(t), m));
            i += m * t;
        } else {
            while j < n && seq[j] != b'N' {
                j += 1;
            }
            if j - i >= k {
                out.extend((i..=j - k).step_by(stride).map(Segment::Window));
            }
            i = j;
        }
    }
    Ok(out)
}

/// Segment a sequence around `N`-runs: ACGT runs are tiled in steps of `k`
/// and every N-run is covered greedily by the longest fitting token of
/// `priority` (which must be homogeneous N-runs, longest first).
pub fn segment_with_n<S: AsRef<str>>(seq: &DnaSequence, k: usize, priority: &[S]) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let mut lens = Vec::with_capacity(priority.len());
    for t in priority {
        let t = t.as_ref();
        if t.is_empty() || t.bytes().any(|b| b != b'N') {
            return Err(Error::Config(format!("priority token {t:?} is not an N-run")));
        }
        if lens.last().is_some_and(|&prev| prev < t.len()) {
            return Err(Error::Config("priority list must be sorted by decreasing length".into()));
        }
        lens.push(t.len());
    }
    let bytes = seq.as_bytes();
    let segments = segment_runs(bytes, k, k, &lens)?;
    Ok(segments
        .into_iter()
        .map(|s| match s {
            Segment::Window(at) => seq.as_str()[at..at + k].to_string(),
            Segment::NRun(len) => "N".repeat(len),
        })
        .collect())
}

/// Default N-run priority list `N×k, …, N`.
pub fn default_n_priority(k: usize) -> Vec<String> {
    (1..=k).rev().map(|l| "N".repeat(l)).collect()
}
