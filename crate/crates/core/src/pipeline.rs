//! FASTA → tokens → masking plan → guiding targets, written as JSONL with a
//! manifest of digests.
//!
//! Records are processed in parallel batches and written in input order.
//! Window `w` of record `r` draws from RNG stream `r·2³² + w`, so output is
//! byte-identical for any thread count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alphabet::DnaSequence;
use crate::error::{Error, Result};
use crate::fasta::read_fasta;
use crate::guiding::{
    csp_targets, ftm_targets, mst_apply, sop_transform, GuidingTargets, GuidingTask,
    DEFAULT_SOP_REVERSE_PROB,
};
use crate::masking::{mask_tokens, MaskConfig, MaskMode, DEFAULT_MASK_PROB};
use crate::rng::{sequence_rng, Purpose};
use crate::tokenize::{NMode, TokenizerSpec};
use crate::vocab::{Special, Vocabulary};

pub const DEFAULT_MAX_LEN: usize = 512;
/// Bases gathered before a parallel batch is dispatched.
const BATCH_BASES: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub vocab: PathBuf,
    pub output: PathBuf,
    /// Defaults to `<output>.manifest.json`.
    pub manifest: Option<PathBuf>,
    pub n_mode: NMode,
    pub sentinels: bool,
    pub mask_prob: f64,
    pub mode: MaskMode,
    pub seed: u64,
    pub guiding: Option<GuidingTask>,
    pub sop_prob: f64,
    /// Tokens per emitted window, sentinels included.
    pub max_len: usize,
    /// 0 lets rayon decide.
    pub threads: usize,
    pub gzip: bool,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, vocab: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            vocab: vocab.into(),
            output: output.into(),
            manifest: None,
            n_mode: NMode::AsUnk,
            sentinels: true,
            mask_prob: DEFAULT_MASK_PROB,
            mode: MaskMode::Fixed,
            seed: 0,
            guiding: None,
            sop_prob: DEFAULT_SOP_REVERSE_PROB,
            max_len: DEFAULT_MAX_LEN,
            threads: 0,
            gzip: false,
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| {
            let mut p = self.output.clone().into_os_string();
            p.push(".manifest.json");
            p.into()
        })
    }
}

/// The guiding block of a batch record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidingRecord {
    pub task: GuidingTask,
    pub positions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labels: Option<BTreeMap<usize, u32>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<u8>,
}

impl From<GuidingTargets> for GuidingRecord {
    fn from(t: GuidingTargets) -> Self {
        let (labels, label) = match t.labels {
            crate::guiding::GuidingLabels::PerPosition(m) => (Some(m), None),
            crate::guiding::GuidingLabels::Binary(b) => (None, Some(b)),
        };
        GuidingRecord {
            task: t.task,
            positions: t.positions,
            labels,
            label,
        }
    }
}

/// One JSONL line. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub seq_id: String,
    pub input_ids: Vec<u32>,
    pub m_in: Vec<usize>,
    pub m: Vec<usize>,
    pub labels: BTreeMap<usize, u32>,
    pub guiding: Option<GuidingRecord>,
}

/// Everything needed to turn one sequence into batch records.
pub struct Composer {
    /// Encodes without sentinels; windows are framed afterwards.
    spec: TokenizerSpec,
    framed: bool,
    cfg: MaskConfig,
    guiding: Option<GuidingTask>,
    sop_prob: f64,
    body_len: usize,
}

impl Composer {
    pub fn new(
        spec: TokenizerSpec,
        mask_prob: f64,
        mode: MaskMode,
        seed: u64,
        guiding: Option<GuidingTask>,
        sop_prob: f64,
        max_len: usize,
    ) -> Result<Self> {
        let framed = spec.add_sentinels();
        let frame = if framed { 2 } else { 0 };
        if max_len <= frame {
            return Err(Error::Config(format!("max length {max_len} leaves no room for tokens")));
        }
        if guiding == Some(GuidingTask::Ftm) && spec.vocab().overlap_k() < 2 {
            return Err(Error::UnsupportedTask(
                "FTM needs an overlapping k-mer vocabulary with k >= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&sop_prob) {
            return Err(Error::Config(format!("SOP probability {sop_prob} outside [0, 1]")));
        }
        let cfg = MaskConfig::new(mask_prob, spec.vocab().overlap_k(), mode, seed)?;
        Ok(Composer {
            body_len: max_len - frame,
            spec: spec.with_sentinels(false)?,
            framed,
            cfg,
            guiding,
            sop_prob,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.spec.vocab()
    }

    /// Split, frame, mask and attach guiding targets.
    pub fn compose(&self, seq: &DnaSequence, record: u64) -> Result<Vec<BatchRecord>> {
        let vocab = self.spec.vocab();
        let body = self.spec.encode(seq);
        let windows: Vec<&[u32]> = if body.is_empty() {
            vec![&[]]
        } else {
            body.chunks(self.body_len).collect()
        };
        let split = windows.len() > 1;
        let mut out = Vec::with_capacity(windows.len());
        for (w, window) in windows.into_iter().enumerate() {
            let ordinal = (record << 32) | w as u64;
            let mut tokens = Vec::with_capacity(window.len() + 2);
            if self.framed {
                tokens.push(vocab.require_special(Special::Cls)?);
                tokens.extend_from_slice(window);
                tokens.push(vocab.require_special(Special::Sep)?);
            } else {
                tokens.extend_from_slice(window);
            }
            let mut sop_label = None;
            if self.guiding == Some(GuidingTask::Sop) {
                let mut rng = sequence_rng(self.cfg.master_seed, Purpose::SentenceOrder, ordinal);
                let (swapped, label) = sop_transform(&tokens, self.sop_prob, &mut rng, vocab)?;
                tokens = swapped;
                sop_label = Some(label);
            }
            let mut plan = mask_tokens(&tokens, vocab, &self.cfg, ordinal)?;
            let guiding = match self.guiding {
                None => None,
                Some(GuidingTask::Ftm) => Some(ftm_targets(&tokens, &plan, self.cfg.k)?.into()),
                Some(GuidingTask::Csp) => Some(csp_targets(&tokens, &plan, vocab)?.into()),
                Some(GuidingTask::Mst) => {
                    let (input, t) = mst_apply(&tokens, &plan, vocab)?;
                    plan.input_ids = input;
                    Some(t.into())
                }
                Some(GuidingTask::Sop) => Some(GuidingRecord {
                    task: GuidingTask::Sop,
                    positions: Vec::new(),
                    labels: None,
                    label: sop_label,
                }),
            };
            out.push(BatchRecord {
                seq_id: if split {
                    format!("{}/{w}", seq.id())
                } else {
                    seq.id().to_string()
                },
                input_ids: plan.input_ids,
                m_in: plan.m_in_positions,
                m: plan.m_positions,
                labels: plan.labels,
                guiding,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub records: u64,
    pub sequences: u64,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            records: 0,
            sequences: 0,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<FileDigest> {
    let path = path.as_ref();
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

/// Plain or gzip output; gzip headers carry no timestamp.
pub fn create_output(path: impl AsRef<Path>, gzip: bool) -> Result<Box<dyn Write>> {
    let file = BufWriter::new(File::create(path)?);
    Ok(if gzip {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(file)
    })
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
}

/// Drive `f` over the FASTA records in parallel batches, writing its lines
/// in input order. Returns `(sequences, lines)`.
pub fn for_each_record_ordered<F>(
    input: &Path,
    threads: usize,
    out: &mut dyn Write,
    f: F,
) -> Result<(u64, u64)>
where
    F: Fn(&DnaSequence, u64) -> Result<Vec<String>> + Sync,
{
    let pool = thread_pool(threads)?;
    let mut reader = read_fasta(input)?;
    let mut sequences = 0u64;
    let mut lines = 0u64;
    loop {
        let mut batch = Vec::new();
        let mut bases = 0;
        while bases < BATCH_BASES {
            match reader.next() {
                Some(rec) => {
                    let rec = rec?;
                    bases += rec.len().max(1);
                    batch.push((sequences, rec));
                    sequences += 1;
                }
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<Vec<String>>> =
            pool.install(|| batch.par_iter().map(|(i, s)| f(s, *i)).collect());
        for r in results {
            for line in r? {
                out.write_all(line.as_bytes())?;
                out.write_all(b"\n")?;
                lines += 1;
            }
        }
    }
    out.flush()?;
    Ok((sequences, lines))
}

/// Run the full masking pipeline described by `cfg`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    let vocab = Vocabulary::load(&cfg.vocab)?;
    let spec = TokenizerSpec::new(vocab, cfg.n_mode, cfg.sentinels)?;
    let composer = Composer::new(
        spec,
        cfg.mask_prob,
        cfg.mode,
        cfg.seed,
        cfg.guiding,
        cfg.sop_prob,
        cfg.max_len,
    )?;
    let mut out = create_output(&cfg.output, cfg.gzip)?;
    let (sequences, records) = for_each_record_ordered(&cfg.input, cfg.threads, &mut out, |seq, i| {
        composer
            .compose(seq, i)?
            .iter()
            .map(|r| serde_json::to_string(r).map_err(Error::from))
            .collect()
    })?;
    drop(out);
    info!("wrote {records} records from {sequences} sequences");

    let mut manifest = Manifest::new(
        if cfg.guiding.is_some() { "guide" } else { "mask" },
        cfg,
    )?;
    manifest.inputs = vec![file_digest(&cfg.input)?, file_digest(&cfg.vocab)?];
    manifest.outputs = vec![file_digest(&cfg.output)?];
    manifest.records = records;
    manifest.sequences = sequences;
    manifest.write(cfg.manifest_path())?;
    Ok(manifest)
}

/// Write a JSON value to stdout followed by a newline.
pub fn print_json(value: &impl Serialize) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    lock.write_all(b"\n")?;
    Ok(())
}
