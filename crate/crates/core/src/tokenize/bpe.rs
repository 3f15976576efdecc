//! Byte-pair-encoding trainer and merge-rank encoder over nucleotides.
//!
//! Training treats every N-free run as an independent unit, so no merge
//! ever spans an `N` or a sequence boundary. Pair frequencies count
//! non-overlapping occurrences left to right: a homopolymer run of `L`
//! identical symbols contributes `⌊L/2⌋` to its self-pair. Ties between
//! equally frequent pairs go to the lexicographically smaller concatenation
//! (then the shorter left operand), which makes training fully
//! deterministic.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};

use log::warn;

use crate::alphabet::{DnaSequence, CODE, NUCLEOTIDES};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

const NONE: u32 = u32::MAX;

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct BpeTraining {
    pub vocab: Vocabulary,
    pub merges_performed: usize,
    /// Set when the corpus ran out of mergeable pairs before `target_size`.
    pub exhausted: bool,
}

type Pair = (u32, u32);

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: i64,
    joined: Box<str>,
    left_len: usize,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.joined.cmp(&self.joined))
            .then_with(|| other.left_len.cmp(&self.left_len))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Trainer {
    sym: Vec<u32>,
    prev: Vec<u32>,
    next: Vec<u32>,
    strings: Vec<String>,
    string_ids: HashMap<String, u32>,
    counts: HashMap<Pair, i64>,
    sites: HashMap<Pair, Vec<u32>>,
    heap: BinaryHeap<Candidate>,
}

impl Trainer {
    fn new<'a>(corpus: impl IntoIterator<Item = &'a DnaSequence>) -> Self {
        let strings: Vec<String> = NUCLEOTIDES.iter().map(|&b| (b as char).to_string()).collect();
        let string_ids = strings.iter().cloned().zip(0..).collect();
        let mut t = Trainer {
            sym: Vec::new(),
            prev: Vec::new(),
            next: Vec::new(),
            strings,
            string_ids,
            counts: HashMap::new(),
            sites: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        let mut heads = Vec::new();
        for seq in corpus {
            for run in seq.as_bytes().split(|&b| b == b'N').filter(|r| !r.is_empty()) {
                let start = t.sym.len() as u32;
                heads.push(start);
                for (i, &b) in run.iter().enumerate() {
                    let idx = start + i as u32;
                    t.sym.push(CODE[b as usize] as u32);
                    t.prev.push(if i == 0 { NONE } else { idx - 1 });
                    t.next.push(if i + 1 == run.len() { NONE } else { idx + 1 });
                }
            }
        }
        for head in heads {
            let tail = t.run_tail(head);
            t.walk_pairs(head, tail, |t, pair, pos| {
                *t.counts.entry(pair).or_insert(0) += 1;
                t.sites.entry(pair).or_default().push(pos);
            });
        }
        let pairs: Vec<Pair> = t.counts.keys().copied().collect();
        for p in pairs {
            t.push_candidate(p);
        }
        t
    }

    fn run_tail(&self, mut i: u32) -> u32 {
        while self.next[i as usize] != NONE {
            i = self.next[i as usize];
        }
        i
    }

    fn same_run_start(&self, mut i: u32) -> u32 {
        let s = self.sym[i as usize];
        loop {
            let p = self.prev[i as usize];
            if p == NONE || self.sym[p as usize] != s {
                return i;
            }
            i = p;
        }
    }

    fn same_run_end(&self, mut i: u32) -> u32 {
        let s = self.sym[i as usize];
        loop {
            let n = self.next[i as usize];
            if n == NONE || self.sym[n as usize] != s {
                return i;
            }
            i = n;
        }
    }

    /// Visit the counted pairs between `start` (which must begin a run of
    /// identical symbols) and `end`, inclusive.
    fn walk_pairs(&mut self, start: u32, end: u32, mut f: impl FnMut(&mut Self, Pair, u32)) {
        let mut i = start;
        let mut offset = 0usize;
        while i != end {
            let j = self.next[i as usize];
            debug_assert_ne!(j, NONE, "end must be reachable from start");
            let (a, b) = (self.sym[i as usize], self.sym[j as usize]);
            if a != b || offset.is_multiple_of(2) {
                f(self, (a, b), i);
            }
            offset = if a == b { offset + 1 } else { 0 };
            i = j;
        }
    }

    fn push_candidate(&mut self, pair: Pair) {
        let count = self.counts.get(&pair).copied().unwrap_or(0);
        if count <= 0 {
            self.counts.remove(&pair);
            return;
        }
        let left = &self.strings[pair.0 as usize];
        let joined = format!("{left}{}", self.strings[pair.1 as usize]).into_boxed_str();
        self.heap.push(Candidate {
            count,
            joined,
            left_len: left.len(),
            pair,
        });
    }

    fn pop_best(&mut self) -> Option<Pair> {
        while let Some(c) = self.heap.pop() {
            if self.counts.get(&c.pair) == Some(&c.count) {
                return Some(c.pair);
            }
        }
        None
    }

    fn merge(&mut self, (a, b): Pair) {
        let joined = format!("{}{}", self.strings[a as usize], self.strings[b as usize]);
        let c = match self.string_ids.get(&joined) {
            Some(&id) => id,
            None => {
                let id = self.strings.len() as u32;
                self.strings.push(joined.clone());
                self.string_ids.insert(joined, id);
                id
            }
        };
        let mut positions = self.sites.remove(&(a, b)).unwrap_or_default();
        positions.sort_unstable();
        positions.dedup();
        let mut touched: HashSet<Pair> = HashSet::new();
        for p in positions {
            let q = self.next[p as usize];
            if self.sym[p as usize] != a || q == NONE || self.sym[q as usize] != b {
                continue;
            }
            let l = self.prev[p as usize];
            let r = self.next[q as usize];
            debug_assert!(a != b || l == NONE || self.sym[l as usize] != a);
            let start = if l != NONE { self.same_run_start(l) } else { p };
            let end = if r != NONE { self.same_run_end(r) } else { q };

            self.walk_pairs(start, end, |t, pair, _| {
                *t.counts.get_mut(&pair).expect("counted pair") -= 1;
                touched.insert(pair);
            });

            self.sym[p as usize] = c;
            self.next[p as usize] = r;
            if r != NONE {
                self.prev[r as usize] = p;
            }
            self.sym[q as usize] = NONE;
            self.prev[q as usize] = NONE;
            self.next[q as usize] = NONE;

            let end = if r != NONE { end } else { p };
            self.walk_pairs(start, end, |t, pair, pos| {
                *t.counts.entry(pair).or_insert(0) += 1;
                t.sites.entry(pair).or_default().push(pos);
                touched.insert(pair);
            });
        }
        for pair in touched {
            self.push_candidate(pair);
        }
    }
}

/// Learn `target_size − 4` merges over the corpus.
///
/// When the corpus runs out of pairs first, the vocabulary is returned at
/// the size reached and [`BpeTraining::exhausted`] is set.
pub fn bpe_train<'a>(
    corpus: impl IntoIterator<Item = &'a DnaSequence>,
    target_size: usize,
) -> Result<BpeTraining> {
    if target_size < NUCLEOTIDES.len() {
        return Err(Error::Config(format!(
            "BPE target size must be at least 4, got {target_size}"
        )));
    }
    let wanted = target_size - NUCLEOTIDES.len();
    let mut trainer = Trainer::new(corpus);
    let mut merges = Vec::with_capacity(wanted);
    let mut exhausted = false;
    while merges.len() < wanted {
        let Some(pair) = trainer.pop_best() else {
            exhausted = true;
            break;
        };
        merges.push((
            trainer.strings[pair.0 as usize].clone(),
            trainer.strings[pair.1 as usize].clone(),
        ));
        trainer.merge(pair);
    }
    if exhausted {
        warn!(
            "BPE corpus exhausted after {} of {} merges",
            merges.len(),
            wanted
        );
    }
    let merges_performed = merges.len();
    Ok(BpeTraining {
        vocab: Vocabulary::bpe(merges)?,
        merges_performed,
        exhausted,
    })
}

/// Merge table compiled from a BPE vocabulary.
///
/// Symbols live in an internal space with one id per distinct merge result;
/// `to_vocab` maps them onto vocabulary ids, sending tokens removed by
/// culling to `[CULL]`.
#[derive(Clone, Debug)]
pub struct BpeModel {
    ranks: HashMap<Pair, (u32, u32)>,
    to_vocab: Vec<u32>,
}

impl BpeModel {
    pub fn new(vocab: &Vocabulary) -> Result<Self> {
        let mut strings: Vec<String> = NUCLEOTIDES.iter().map(|&b| (b as char).to_string()).collect();
        let mut ids: HashMap<String, u32> = strings.iter().cloned().zip(0..).collect();
        let mut ranks = HashMap::with_capacity(vocab.merges().len());
        for (rank, (l, r)) in vocab.merges().iter().enumerate() {
            let (Some(&li), Some(&ri)) = (ids.get(l), ids.get(r)) else {
                return Err(Error::Input(format!("merge ({l:?}, {r:?}) has unknown operands")));
            };
            let joined = format!("{l}{r}");
            let out = *ids.entry(joined.clone()).or_insert_with(|| {
                strings.push(joined);
                strings.len() as u32 - 1
            });
            ranks.entry((li, ri)).or_insert((rank as u32, out));
        }
        let mut to_vocab = Vec::with_capacity(strings.len());
        for s in &strings {
            match vocab.id_of(s).or(vocab.cull_id()) {
                Some(id) => to_vocab.push(id),
                None => return Err(Error::Input(format!("BPE token {s:?} missing from vocabulary"))),
            }
        }
        Ok(BpeModel { ranks, to_vocab })
    }

    /// Encode normalized bytes; each `N` becomes `unk` when given and is
    /// skipped otherwise.
    pub(crate) fn encode_into(&self, bytes: &[u8], unk: Option<u32>, out: &mut Vec<u32>) {
        let mut first = true;
        for run in bytes.split(|&b| b == b'N') {
            if !first {
                if let Some(u) = unk {
                    out.push(u);
                }
            }
            first = false;
            if !run.is_empty() {
                let syms = self.merge_run(run);
                out.extend(syms.into_iter().map(|s| self.to_vocab[s as usize]));
            }
        }
    }

    fn merge_run(&self, run: &[u8]) -> Vec<u32> {
        let n = run.len();
        let mut sym: Vec<u32> = run.iter().map(|&b| CODE[b as usize] as u32).collect();
        let mut prev: Vec<u32> = (0..n as u32).map(|i| i.wrapping_sub(1)).collect();
        let mut next: Vec<u32> = (1..=n as u32).collect();
        prev[0] = NONE;
        next[n - 1] = NONE;

        let mut heap = BinaryHeap::new();
        let push = |heap: &mut BinaryHeap<_>, l: u32, r: u32, pos: u32| {
            if let Some(&(rank, _)) = self.ranks.get(&(l, r)) {
                heap.push(Reverse((rank, pos, l, r)));
            }
        };
        for i in 0..n.saturating_sub(1) {
            push(&mut heap, sym[i], sym[i + 1], i as u32);
        }
        while let Some(Reverse((_, pos, l, r))) = heap.pop() {
            let p = pos as usize;
            let q = next[p];
            if sym[p] != l || q == NONE || sym[q as usize] != r {
                continue;
            }
            let merged = self.ranks[&(l, r)].1;
            sym[p] = merged;
            let after = next[q as usize];
            next[p] = after;
            if after != NONE {
                prev[after as usize] = pos;
            }
            sym[q as usize] = NONE;
            next[q as usize] = NONE;
            if prev[p] != NONE {
                let lp = prev[p];
                push(&mut heap, sym[lp as usize], merged, lp);
            }
            if after != NONE {
                push(&mut heap, merged, sym[after as usize], pos);
            }
        }
        let mut out = Vec::new();
        let mut i = 0u32;
        while i != NONE {
            out.push(sym[i as usize]);
            i = next[i as usize];
        }
        out
    }
}
