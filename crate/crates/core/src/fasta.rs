//! Streaming FASTA reader. Gzip input is detected from its magic bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;

use crate::alphabet::{normalize_in_place, DnaSequence};
use crate::error::{Error, Result};

/// Yields one [`DnaSequence`] per record, in file order. Only the record
/// being assembled is held in memory.
pub struct FastaReader<R> {
    inner: R,
    path: PathBuf,
    line_no: usize,
    buf: Vec<u8>,
    pending: Option<String>,
    done: bool,
}

impl<R: BufRead> FastaReader<R> {
    /// `label` names the source in error messages.
    pub fn new(inner: R, label: impl Into<PathBuf>) -> Self {
        FastaReader {
            inner,
            path: label.into(),
            line_no: 0,
            buf: Vec::new(),
            pending: None,
            done: false,
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    /// Read one line into `buf` without its terminator; false at EOF.
    fn next_line(&mut self) -> Result<bool> {
        self.buf.clear();
        if self.inner.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        while matches!(self.buf.last(), Some(b'\n' | b'\r')) {
            self.buf.pop();
        }
        Ok(true)
    }

    fn parse_header(&self) -> Result<String> {
        let text = std::str::from_utf8(&self.buf[1..])
            .map_err(|_| self.err(self.line_no, "header is not valid UTF-8"))?;
        match text.split_whitespace().next() {
            Some(id) => Ok(id.to_string()),
            None => Err(self.err(self.line_no, "header has no identifier")),
        }
    }

    fn read_record(&mut self) -> Result<Option<DnaSequence>> {
        let id = match self.pending.take() {
            Some(h) => h,
            None => loop {
                if !self.next_line()? {
                    return Ok(None);
                }
                match self.buf.first() {
                    None => continue,
                    Some(b'>') => break self.parse_header()?,
                    Some(_) => return Err(self.err(self.line_no, "sequence data before the first header")),
                }
            },
        };
        let mut bases = Vec::new();
        loop {
            if !self.next_line()? {
                self.done = true;
                break;
            }
            if self.buf.first() == Some(&b'>') {
                self.pending = Some(self.parse_header()?);
                break;
            }
            let start = bases.len();
            bases.extend(self.buf.iter().copied().filter(|b| !b.is_ascii_whitespace()));
            if let Err(Error::InvalidSymbol { byte, .. }) = normalize_in_place(&mut bases[start..]) {
                return Err(self.err(
                    self.line_no,
                    format!("invalid nucleotide {:?} in record {id}", byte as char),
                ));
            }
        }
        Ok(Some(DnaSequence::new(id, bases)?))
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<DnaSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done && self.pending.is_none() {
            return None;
        }
        match self.read_record() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                self.pending = None;
                Some(Err(e))
            }
        }
    }
}

/// Open a plain or gzip-compressed FASTA file.
pub fn read_fasta(path: impl AsRef<Path>) -> Result<FastaReader<Box<dyn BufRead + Send>>> {
    let path = path.as_ref();
    let mut file = BufReader::new(File::open(path)?);
    let gz = file.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    let inner: Box<dyn BufRead + Send> = if gz {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(file)
    };
    Ok(FastaReader::new(inner, path))
}

/// Parse FASTA text held in memory.
pub fn parse_fasta(data: impl Read) -> FastaReader<BufReader<impl Read>> {
    FastaReader::new(BufReader::new(data), "<input>")
}
