//! Nucleotide alphabet and the validated [`DnaSequence`] type.
//!
//! Sequences are stored in canonical uppercase form over `{A, C, G, T, N}`.
//! Lowercase (soft-masked) input is uppercased on construction; every other
//! byte is rejected with its offset.

use std::fmt;

use crate::error::{Error, Result};

/// The four unambiguous nucleotides in canonical id order.
pub const NUCLEOTIDES: [u8; 4] = *b"ACGT";

const INVALID: u8 = 0xff;

/// 2-bit code of each byte: A=0, C=1, G=2, T=3, N=4, anything else `INVALID`.
/// Lowercase is accepted here because raw FASTA bodies go through it.
pub(crate) static CODE: [u8; 256] = {
    let mut t = [INVALID; 256];
    t[b'A' as usize] = 0;
    t[b'C' as usize] = 1;
    t[b'G' as usize] = 2;
    t[b'T' as usize] = 3;
    t[b'N' as usize] = 4;
    t[b'a' as usize] = 0;
    t[b'c' as usize] = 1;
    t[b'g' as usize] = 2;
    t[b't' as usize] = 3;
    t[b'n' as usize] = 4;
    t
};

static COMPLEMENT: [u8; 256] = {
    let mut t = [0u8; 256];
    t[b'A' as usize] = b'T';
    t[b'C' as usize] = b'G';
    t[b'G' as usize] = b'C';
    t[b'T' as usize] = b'A';
    t[b'N' as usize] = b'N';
    t
};

/// Complement of a canonical base; `N` maps to `N`.
///
/// Returns `None` for anything outside `{A, C, G, T, N}`.
#[inline]
pub fn complement(base: u8) -> Option<u8> {
    match COMPLEMENT[base as usize] {
        0 => None,
        c => Some(c),
    }
}

/// Uppercase `bytes` in place and check every symbol.
pub fn normalize_in_place(bytes: &mut [u8]) -> Result<()> {
    for (offset, b) in bytes.iter_mut().enumerate() {
        if CODE[*b as usize] == INVALID {
            return Err(Error::InvalidSymbol { byte: *b, offset });
        }
        b.make_ascii_uppercase();
    }
    Ok(())
}

/// Reverse complement of a raw byte string, validating as it goes.
pub fn reverse_complement_bytes(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(bytes.len());
    for (i, &b) in bytes.iter().enumerate().rev() {
        let upper = b.to_ascii_uppercase();
        match complement(upper) {
            Some(c) => out.push(c),
            None => return Err(Error::InvalidSymbol { byte: b, offset: i }),
        }
    }
    Ok(out)
}

/// An ordered nucleotide series with an opaque source identifier.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct DnaSequence {
    id: String,
    bases: Vec<u8>,
}

impl DnaSequence {
    pub fn new(id: impl Into<String>, bases: impl Into<Vec<u8>>) -> Result<Self> {
        let mut bases = bases.into();
        normalize_in_place(&mut bases)?;
        Ok(DnaSequence { id: id.into(), bases })
    }

    /// Build a sequence with an empty id.
    pub fn from_bases(bases: impl Into<Vec<u8>>) -> Result<Self> {
        Self::new(String::new(), bases)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bases
    }

    pub fn as_str(&self) -> &str {
        // only ASCII bases are ever stored
        std::str::from_utf8(&self.bases).expect("nucleotides are ASCII")
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bases
    }

    pub fn contains_n(&self) -> bool {
        self.bases.contains(&b'N')
    }

    /// Reverse complement, keeping the id.
    pub fn reverse_complement(&self) -> DnaSequence {
        let bases = self
            .bases
            .iter()
            .rev()
            .map(|&b| COMPLEMENT[b as usize])
            .collect();
        DnaSequence {
            id: self.id.clone(),
            bases,
        }
    }
}

impl fmt::Debug for DnaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DnaSequence")
            .field("id", &self.id)
            .field("bases", &self.as_str())
            .finish()
    }
}

impl fmt::Display for DnaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DnaSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DnaSequence::from_bases(s.as_bytes())
    }
}

/// Free-function form of [`DnaSequence::reverse_complement`].
pub fn reverse_complement(seq: &DnaSequence) -> DnaSequence {
    seq.reverse_complement()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rc(s: &str) -> String {
        s.parse::<DnaSequence>().unwrap().reverse_complement().to_string()
    }

    #[test]
    fn reverse_complement_examples() {
        assert_eq!(rc("ATCG"), "CGAT");
        assert_eq!(rc(""), "");
        assert_eq!(rc(&rc("GATTACA")), "GATTACA");
        assert_eq!(rc("NNA"), "TNN");
    }

    #[test]
    fn lowercase_is_uppercased() {
        let s: DnaSequence = "acgtn".parse().unwrap();
        assert_eq!(s.as_str(), "ACGTN");
    }

    #[test]
    fn invalid_byte_reports_offset() {
        match "ACXT".parse::<DnaSequence>() {
            Err(Error::InvalidSymbol { byte, offset }) => {
                assert_eq!(byte, b'X');
                assert_eq!(offset, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        match reverse_complement_bytes(b"AC-T") {
            Err(Error::InvalidSymbol { byte: b'-', offset: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn involution(s in "[ACGTN]{0,200}") {
            let seq: DnaSequence = s.parse().unwrap();
            let back = seq.reverse_complement().reverse_complement();
            prop_assert_eq!(back, seq);
        }

        #[test]
        fn raw_and_typed_agree(s in "[ACGTNacgtn]{0,100}") {
            let typed = s.parse::<DnaSequence>().unwrap().reverse_complement();
            prop_assert_eq!(reverse_complement_bytes(s.as_bytes()).unwrap(), typed.into_bytes());
        }
    }
}
