//! Token vocabularies for the three tokenizer families.
//!
//! Ids are dense. Non-special tokens come first (ids `0..n`), then the
//! optional `[CULL]` replacement token, then the special tokens, so the
//! non-special label space stays contiguous when a vocabulary is culled.
//! k-mer ids follow base-4 order with `A < C < G < T`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::{reverse_complement_bytes, CODE, NUCLEOTIDES};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MAX_K: usize = 12;
pub const CULL_TOKEN: &str = "[CULL]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    KmerOverlap,
    Word,
    Bpe,
}

impl VocabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::KmerOverlap => "kmer_overlap",
            VocabKind::Word => "word",
            VocabKind::Bpe => "bpe",
        }
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmer" | "kmer_overlap" | "kmer-overlap" => Ok(VocabKind::KmerOverlap),
            "word" => Ok(VocabKind::Word),
            "bpe" => Ok(VocabKind::Bpe),
            other => Err(Error::Config(format!("unknown vocabulary kind {other:?}"))),
        }
    }
}

/// Non-biological sentinel tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Special {
    Cls,
    Sep,
    Mask,
    Pad,
    Unk,
}

impl Special {
    pub const ALL: [Special; 5] = [
        Special::Cls,
        Special::Sep,
        Special::Mask,
        Special::Pad,
        Special::Unk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Special::Cls => "CLS",
            Special::Sep => "SEP",
            Special::Mask => "MASK",
            Special::Pad => "PAD",
            Special::Unk => "UNK",
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Special::Cls => "[CLS]",
            Special::Sep => "[SEP]",
            Special::Mask => "[MASK]",
            Special::Pad => "[PAD]",
            Special::Unk => "[UNK]",
        }
    }

    pub fn from_name(name: &str) -> Option<Special> {
        Special::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// On-disk JSON layout. Field order is part of the format.
#[derive(Serialize, Deserialize)]
struct VocabFile {
    format_version: u32,
    kind: VocabKind,
    k: Option<usize>,
    tokens: Vec<String>,
    specials: BTreeMap<String, u32>,
    #[serde(default)]
    merges: Vec<(String, String)>,
}

#[derive(Clone)]
pub struct Vocabulary {
    kind: VocabKind,
    k: Option<usize>,
    tokens: Vec<String>,
    specials: [Option<u32>; 5],
    merges: Vec<(String, String)>,
    cull_id: Option<u32>,
    index: HashMap<String, u32>,
    special_mask: Vec<bool>,
    /// Number of ids below the first special (includes `[CULL]`).
    non_special: usize,
    rc_map: Vec<u32>,
    /// k-mer code -> id, only built when the layout is not canonical.
    kmer_lookup: Option<Vec<u32>>,
    /// N-run token ids, longest first.
    n_runs: Vec<(usize, u32)>,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("kind", &self.kind)
            .field("k", &self.k)
            .field("len", &self.tokens.len())
            .field("merges", &self.merges.len())
            .field("cull_id", &self.cull_id)
            .finish()
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.k == other.k
            && self.tokens == other.tokens
            && self.specials == other.specials
            && self.merges == other.merges
    }
}

impl Eq for Vocabulary {}

/// Token string of a k-mer code (base 4, most significant base first).
pub fn kmer_string(code: u32, k: usize) -> String {
    let mut buf = vec![b'A'; k];
    let mut c = code;
    for slot in buf.iter_mut().rev() {
        *slot = NUCLEOTIDES[(c & 3) as usize];
        c >>= 2;
    }
    String::from_utf8(buf).expect("ASCII")
}

/// Base-4 code of an `ACGT` string, `None` if it contains anything else.
pub fn kmer_code(s: &[u8]) -> Option<u32> {
    let mut code = 0u32;
    for &b in s {
        let c = CODE[b as usize];
        if c > 3 || b.is_ascii_lowercase() {
            return None;
        }
        code = (code << 2) | c as u32;
    }
    Some(code)
}

fn is_n_run(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b == b'N')
}

fn is_acgt(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
}

/// Build an overlapping k-mer vocabulary.
pub fn build_kmer_vocab(k: usize, include_n_tokens: bool) -> Result<Vocabulary> {
    Vocabulary::kmer(VocabKind::KmerOverlap, k, include_n_tokens)
}

impl Vocabulary {
    /// All `4^k` k-mers in lexicographic order, optionally the N-run tokens
    /// `N×k, …, N`, then the specials.
    pub fn kmer(kind: VocabKind, k: usize, include_n_tokens: bool) -> Result<Self> {
        if kind == VocabKind::Bpe {
            return Err(Error::Config("BPE vocabularies are built by training".into()));
        }
        if !(1..=MAX_K).contains(&k) {
            return Err(Error::Config(format!("k must be in 1..={MAX_K}, got {k}")));
        }
        let count = 1u32 << (2 * k);
        let mut tokens: Vec<String> = (0..count).map(|c| kmer_string(c, k)).collect();
        if include_n_tokens {
            tokens.extend((1..=k).rev().map(|len| "N".repeat(len)));
        }
        Self::assemble(kind, Some(k), tokens, Vec::new())
    }

    /// Base alphabet plus one token per merge result (duplicates collapse),
    /// then the specials.
    pub fn bpe(merges: Vec<(String, String)>) -> Result<Self> {
        let mut tokens: Vec<String> = NUCLEOTIDES.iter().map(|&b| (b as char).to_string()).collect();
        let mut seen: HashSet<String> = tokens.iter().cloned().collect();
        for (l, r) in &merges {
            let joined = format!("{l}{r}");
            if seen.insert(joined.clone()) {
                tokens.push(joined);
            }
        }
        Self::assemble(VocabKind::Bpe, None, tokens, merges)
    }

    fn assemble(
        kind: VocabKind,
        k: Option<usize>,
        mut tokens: Vec<String>,
        merges: Vec<(String, String)>,
    ) -> Result<Self> {
        let base = tokens.len() as u32;
        let mut specials = BTreeMap::new();
        for (i, s) in Special::ALL.into_iter().enumerate() {
            tokens.push(s.token().to_string());
            specials.insert(s.name().to_string(), base + i as u32);
        }
        Self::from_parts(kind, k, tokens, &specials, merges)
    }

    /// Validate raw parts and derive the lookup tables.
    pub fn from_parts(
        kind: VocabKind,
        k: Option<usize>,
        tokens: Vec<String>,
        specials_by_name: &BTreeMap<String, u32>,
        merges: Vec<(String, String)>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::Input(format!("vocabulary: {msg}")));
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), id as u32).is_some() {
                return bad(format!("duplicate token {t:?}"));
            }
        }

        let mut specials = [None; 5];
        let mut special_mask = vec![false; tokens.len()];
        for (name, &id) in specials_by_name {
            let Some(s) = Special::from_name(name) else {
                return bad(format!("unknown special {name:?}"));
            };
            match tokens.get(id as usize) {
                Some(t) if t == s.token() => {}
                _ => return bad(format!("special {name} does not point at {}", s.token())),
            }
            specials[s as usize] = Some(id);
            special_mask[id as usize] = true;
        }
        let non_special = special_mask.iter().take_while(|s| !**s).count();
        if special_mask[non_special..].iter().any(|s| !s) {
            return bad("special tokens must occupy the highest ids".into());
        }

        let cull_id = index.get(CULL_TOKEN).copied();

        match kind {
            VocabKind::KmerOverlap | VocabKind::Word => {
                let Some(k) = k.filter(|k| (1..=MAX_K).contains(k)) else {
                    return bad(format!("k-mer vocabulary needs k in 1..={MAX_K}"));
                };
                for t in &tokens[..non_special] {
                    let ok = t == CULL_TOKEN
                        || (t.len() == k && is_acgt(t))
                        || (t.len() <= k && is_n_run(t));
                    if !ok {
                        return bad(format!("token {t:?} is not a {k}-mer"));
                    }
                }
                if !merges.is_empty() {
                    return bad("merges are only valid for BPE".into());
                }
            }
            VocabKind::Bpe => {
                if k.is_some() {
                    return bad("BPE vocabularies carry no k".into());
                }
                let mut producible: HashSet<String> =
                    NUCLEOTIDES.iter().map(|&b| (b as char).to_string()).collect();
                for (l, r) in &merges {
                    if !producible.contains(l) || !producible.contains(r) {
                        return bad(format!("merge ({l:?}, {r:?}) uses an unknown operand"));
                    }
                    producible.insert(format!("{l}{r}"));
                }
                for t in &tokens[..non_special] {
                    if t != CULL_TOKEN && !producible.contains(t) {
                        return bad(format!("token {t:?} has no merge lineage"));
                    }
                }
            }
        }

        let mut vocab = Vocabulary {
            kind,
            k,
            tokens,
            specials,
            merges,
            cull_id,
            index,
            special_mask,
            non_special,
            rc_map: Vec::new(),
            kmer_lookup: None,
            n_runs: Vec::new(),
        };
        vocab.derive_tables()?;
        Ok(vocab)
    }

    fn derive_tables(&mut self) -> Result<()> {
        let n = self.non_special;
        let mut rc_map = vec![u32::MAX; self.tokens.len()];
        for (id, (t, slot)) in self.tokens[..n].iter().zip(&mut rc_map).enumerate() {
            *slot = if self.kind == VocabKind::Bpe || t == CULL_TOKEN {
                id as u32
            } else {
                let rc = reverse_complement_bytes(t.as_bytes())?;
                let rc = std::str::from_utf8(&rc).expect("ASCII");
                match self.index.get(rc).copied().or(self.cull_id) {
                    Some(j) => j,
                    None => {
                        return Err(Error::Input(format!(
                            "vocabulary: reverse complement of {t:?} is missing"
                        )))
                    }
                }
            };
        }
        self.rc_map = rc_map;

        let mut n_runs: Vec<(usize, u32)> = self.tokens[..n]
            .iter()
            .enumerate()
            .filter(|(_, t)| is_n_run(t))
            .map(|(id, t)| (t.len(), id as u32))
            .collect();
        n_runs.sort_by_key(|r| std::cmp::Reverse(r.0));
        self.n_runs = n_runs;

        if let Some(k) = self.k {
            let count = 1usize << (2 * k);
            let canonical = n >= count
                && self.tokens[..count]
                    .iter()
                    .enumerate()
                    .all(|(code, t)| kmer_code(t.as_bytes()) == Some(code as u32));
            if !canonical {
                let mut lookup = vec![u32::MAX; count];
                for (code, slot) in lookup.iter_mut().enumerate() {
                    let t = kmer_string(code as u32, k);
                    *slot = match self.index.get(&t).copied().or(self.cull_id) {
                        Some(id) => id,
                        None => {
                            return Err(Error::Input(format!(
                                "vocabulary: k-mer {t:?} is neither present nor culled"
                            )))
                        }
                    };
                }
                self.kmer_lookup = Some(lookup);
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    /// Neighborhood size for masking: `k` for overlapping k-mers, 1 otherwise.
    pub fn overlap_k(&self) -> usize {
        match self.kind {
            VocabKind::KmerOverlap => self.k.unwrap_or(1),
            _ => 1,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Count of ids below the specials, `[CULL]` included.
    pub fn non_special_count(&self) -> usize {
        self.non_special
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special_mask.get(id as usize).copied().unwrap_or(false)
    }

    pub fn special(&self, s: Special) -> Option<u32> {
        self.specials[s as usize]
    }

    pub fn require_special(&self, s: Special) -> Result<u32> {
        self.special(s)
            .ok_or_else(|| Error::Config(format!("vocabulary has no {} token", s.token())))
    }

    pub fn special_ids(&self) -> impl Iterator<Item = (Special, u32)> + '_ {
        Special::ALL
            .into_iter()
            .filter_map(|s| self.specials[s as usize].map(|id| (s, id)))
    }

    pub fn cull_id(&self) -> Option<u32> {
        self.cull_id
    }

    /// N-run tokens as `(length, id)`, longest first.
    pub fn n_run_tokens(&self) -> &[(usize, u32)] {
        &self.n_runs
    }

    /// True when every token's reverse complement is itself a token, so
    /// complementary-strand labels live in the same id space.
    pub fn rc_closed(&self) -> bool {
        self.kind != VocabKind::Bpe && self.cull_id.is_none()
    }

    /// Label id of the reverse complement of `id`.
    ///
    /// For k-mer and word vocabularies this is the id of the complementary
    /// token. For BPE it is `id` itself read in the parallel complementary
    /// label space (label `i` means "reverse complement of token `i`").
    pub fn rc_label(&self, id: u32) -> Result<u32> {
        if id as usize >= self.tokens.len() {
            return Err(Error::Domain(format!("token id {id} out of range")));
        }
        if self.is_special(id) {
            return Err(Error::Domain(format!(
                "special token {} has no complement",
                self.tokens[id as usize]
            )));
        }
        Ok(self.rc_map[id as usize])
    }

    /// Id of a k-mer code under this vocabulary (culled codes map to `[CULL]`).
    #[inline]
    pub(crate) fn kmer_id(&self, code: u32) -> u32 {
        match &self.kmer_lookup {
            Some(t) => t[code as usize],
            None => code,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let specials = self
            .special_ids()
            .map(|(s, id)| (s.name().to_string(), id))
            .collect();
        let file = VocabFile {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            k: self.k,
            tokens: self.tokens.clone(),
            specials,
            merges: self.merges.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(s)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported vocabulary format_version {}",
                file.format_version
            )));
        }
        Self::from_parts(file.kind, file.k, file.tokens, &file.specials, file.merges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
