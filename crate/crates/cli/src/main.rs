use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use genotok::benchstats::{
    evaluate_criteria, load_runs_csv, load_scaling_csv, CriteriaOptions, ScalingPredictor,
    StdEstimator,
};
use genotok::fasta::read_fasta;
use genotok::guiding::GuidingTask;
use genotok::leakage::{empirical_plan_leakage, LeakageReport};
use genotok::masking::{MaskMode, MaskPlan, DEFAULT_MASK_PROB};
use genotok::pipeline::{
    create_output, file_digest, for_each_record_ordered, print_json, run_pipeline, Manifest,
    PipelineConfig, DEFAULT_MAX_LEN,
};
use genotok::tokenize::{bpe_train, NMode, TokenizerSpec};
use genotok::vocabstats::{
    bucket_tokens, compute_token_stats, cull_vocab, load_accuracy_csv, write_stats_csv, CullSpec,
};
use genotok::{DnaSequence, Error, Result, VocabKind, Vocabulary};

#[derive(Parser)]
#[command(name = "genotok", version, about = "Nucleotide tokenization and masked-pretraining data tools")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, env = "GENOTOK_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "GENOTOK_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a k-mer, word or BPE vocabulary.
    BuildVocab(BuildVocabArgs),
    /// Encode FASTA records to token ids.
    Tokenize(TokenizeArgs),
    /// Tokenize and mask FASTA records into a JSONL batch file.
    Mask(MaskArgs),
    /// As `mask`, with targets for one guiding task.
    Guide(GuideArgs),
    /// Analytic or per-plan leakage.
    Leakage(LeakageArgs),
    /// Token frequency, successor entropy and importance bands.
    VocabStats(VocabStatsArgs),
    /// Replace up to 10% of a vocabulary with a single [CULL] token.
    Cull(CullArgs),
    /// Dataset stability and validity criteria over benchmark runs.
    Benchstats(BenchstatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Kmer,
    Word,
    Bpe,
}

#[derive(Args)]
struct BuildVocabArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Token length for k-mer and word vocabularies.
    #[arg(long)]
    k: Option<usize>,
    /// Add N-run tokens for N segmentation.
    #[arg(long)]
    include_n: bool,
    /// Training corpus for BPE.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Target BPE vocabulary size, specials excluded.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TokenizerArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// unk, drop or segn.
    #[arg(long, default_value = "unk", value_parser = parse_from_str::<NMode>)]
    n_mode: NMode,
    /// Omit [CLS]/[SEP].
    #[arg(long)]
    no_sentinels: bool,
}

#[derive(Args)]
struct TokenizeArgs {
    #[command(flatten)]
    tok: TokenizerArgs,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    #[command(flatten)]
    tok: TokenizerArgs,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Target selection probability.
    #[arg(long, default_value_t = DEFAULT_MASK_PROB)]
    p: f64,
    /// fixed or flawed.
    #[arg(long, default_value = "fixed", value_parser = parse_from_str::<MaskMode>)]
    mode: MaskMode,
    /// Tokens per window, sentinels included.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long)]
    gzip: bool,
}

#[derive(Args)]
struct GuideArgs {
    #[command(flatten)]
    mask: MaskArgs,
    /// ftm, mst, sop or csp.
    #[arg(long, value_parser = parse_from_str::<GuidingTask>)]
    task: GuidingTask,
    /// Probability of swapping segment order for sop.
    #[arg(long, default_value_t = genotok::guiding::DEFAULT_SOP_REVERSE_PROB)]
    sop_prob: f64,
}

#[derive(Args)]
struct LeakageArgs {
    #[arg(long)]
    k: usize,
    /// Consecutive masked tokens.
    #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
    m: Option<usize>,
    /// JSONL batch from `mask`/`guide`; prints one leakage value per record.
    #[arg(long)]
    batch: Option<PathBuf>,
}

#[derive(Args)]
struct VocabStatsArgs {
    #[command(flatten)]
    tok: TokenizerArgs,
    #[arg(long, short)]
    input: PathBuf,
    /// CSV with token_id,accuracy columns.
    #[arg(long)]
    accuracy: Option<PathBuf>,
    /// Explicit frequency band edges `LOW,HIGH` on rel_freq.
    #[arg(long, value_parser = parse_edges)]
    freq_edges: Option<(f64, f64)>,
    #[arg(long)]
    acc_edge: Option<f64>,
    /// Defaults to stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CullArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Comma-separated ids to remove.
    #[arg(long, value_delimiter = ',')]
    remove: Vec<u32>,
    /// File with one id per line.
    #[arg(long)]
    remove_file: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    /// Write the old id -> new id table as JSON.
    #[arg(long)]
    remap: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Args)]
struct BenchstatsArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    scaling: Option<PathBuf>,
    /// Pass datasets with sigma below this instead of exp(mu + sigma).
    #[arg(long)]
    sigma_threshold: Option<f64>,
    #[arg(long, default_value_t = genotok::benchstats::DEFAULT_R2_MIN)]
    r2_min: f64,
    /// sample or population.
    #[arg(long, default_value = "sample", value_parser = parse_from_str::<StdEstimator>)]
    std: StdEstimator,
    /// log10 or linear.
    #[arg(long, default_value = "log10", value_parser = parse_from_str::<ScalingPredictor>)]
    predictor: ScalingPredictor,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_edges(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LOW,HIGH")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn load_spec(args: &TokenizerArgs) -> Result<TokenizerSpec> {
    TokenizerSpec::new(Vocabulary::load(&args.vocab)?, args.n_mode, !args.no_sentinels)
}

fn read_corpus(path: &Path) -> Result<Vec<DnaSequence>> {
    read_fasta(path)?.collect()
}

fn build_vocab(a: BuildVocabArgs) -> Result<()> {
    let vocab = match a.kind {
        KindArg::Kmer | KindArg::Word => {
            let k = a.k.ok_or_else(|| Error::Config("--k is required for k-mer and word vocabularies".into()))?;
            let kind = if matches!(a.kind, KindArg::Kmer) {
                VocabKind::KmerOverlap
            } else {
                VocabKind::Word
            };
            Vocabulary::kmer(kind, k, a.include_n)?
        }
        KindArg::Bpe => {
            let corpus = a.corpus.ok_or_else(|| Error::Config("--corpus is required for BPE".into()))?;
            let size = a.size.ok_or_else(|| Error::Config("--size is required for BPE".into()))?;
            let seqs = read_corpus(&corpus)?;
            let t = bpe_train(&seqs, size)?;
            if t.exhausted {
                warn!("vocabulary stopped at {} merges", t.merges_performed);
            }
            t.vocab
        }
    };
    vocab.save(&a.out)?;
    eprintln!("wrote {} tokens to {}", vocab.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TokenizeConfig<'a> {
    vocab: &'a Path,
    input: &'a Path,
    output: &'a Path,
    n_mode: NMode,
    sentinels: bool,
}

#[derive(Serialize)]
struct TokenRecord<'a> {
    seq_id: &'a str,
    ids: Vec<u32>,
}

fn tokenize(a: TokenizeArgs, threads: usize) -> Result<()> {
    let spec = load_spec(&a.tok)?;
    let mut out = create_output(&a.output, false)?;
    let (sequences, records) = for_each_record_ordered(&a.input, threads, &mut out, |seq, _| {
        let rec = TokenRecord {
            seq_id: seq.id(),
            ids: spec.encode(seq),
        };
        Ok(vec![serde_json::to_string(&rec)?])
    })?;
    drop(out);
    let cfg = TokenizeConfig {
        vocab: &a.tok.vocab,
        input: &a.input,
        output: &a.output,
        n_mode: a.tok.n_mode,
        sentinels: !a.tok.no_sentinels,
    };
    let mut m = Manifest::new("tokenize", &cfg)?;
    m.inputs = vec![file_digest(&a.input)?, file_digest(&a.tok.vocab)?];
    m.outputs = vec![file_digest(&a.output)?];
    m.sequences = sequences;
    m.records = records;
    let mut path = a.output.into_os_string();
    path.push(".manifest.json");
    m.write(PathBuf::from(path))
}

fn pipeline_config(a: MaskArgs, seed: u64, threads: usize) -> PipelineConfig {
    PipelineConfig {
        manifest: a.manifest,
        n_mode: a.tok.n_mode,
        sentinels: !a.tok.no_sentinels,
        mask_prob: a.p,
        mode: a.mode,
        seed,
        max_len: a.max_len,
        threads,
        gzip: a.gzip,
        ..PipelineConfig::new(a.input, a.tok.vocab, a.output)
    }
}

#[derive(Serialize)]
struct PlanLeakage {
    seq_id: String,
    leakage: f64,
}

fn leakage(a: LeakageArgs) -> Result<()> {
    if let Some(m) = a.m {
        return print_json(&LeakageReport::new(a.k, m)?);
    }
    let path = a.batch.expect("clap enforces --m or --batch");
    let reader = BufReader::new(File::open(&path)?);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg,
        };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let seq_id = v["seq_id"].as_str().unwrap_or_default().to_string();
        let m: Vec<usize> = serde_json::from_value(v["m"].clone())
            .map_err(|e| parse_err(format!("field m: {e}")))?;
        let plan = MaskPlan {
            input_ids: Vec::new(),
            m_in_positions: Vec::new(),
            m_positions: m,
            labels: BTreeMap::new(),
        };
        let rec = PlanLeakage {
            seq_id,
            leakage: empirical_plan_leakage(&plan, a.k)?,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn vocab_stats(a: VocabStatsArgs) -> Result<()> {
    let spec = load_spec(&a.tok)?;
    let corpus = read_corpus(&a.input)?;
    let accuracy = a.accuracy.as_ref().map(load_accuracy_csv).transpose()?;
    let stats = compute_token_stats(&corpus, &spec, accuracy.as_ref())?;
    let buckets = if accuracy.is_some() {
        Some(bucket_tokens(&stats, a.freq_edges, a.acc_edge)?)
    } else {
        None
    };
    let out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    write_stats_csv(out, spec.vocab(), &stats, buckets.as_deref())
}

fn cull(a: CullArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let mut remove: BTreeSet<u32> = a.remove.into_iter().collect();
    if let Some(p) = &a.remove_file {
        for (i, line) in BufReader::new(File::open(p)?).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let id = t.parse().map_err(|_| Error::Parse {
                path: p.clone(),
                line: i + 1,
                msg: format!("{t:?} is not a token id"),
            })?;
            remove.insert(id);
        }
    }
    let culled = cull_vocab(&vocab, &CullSpec { remove_ids: remove })?;
    culled.vocab.save(&a.out)?;
    if let Some(p) = a.remap {
        let mut s = serde_json::to_string_pretty(&culled.remap)?;
        s.push('\n');
        std::fs::write(p, s)?;
    }
    eprintln!(
        "wrote {} tokens ({} non-special) to {}",
        culled.vocab.len(),
        culled.vocab.non_special_count(),
        a.out.display()
    );
    Ok(())
}

fn benchstats(a: BenchstatsArgs) -> Result<()> {
    let runs = load_runs_csv(&a.runs)?;
    let scaling = match &a.scaling {
        Some(p) => load_scaling_csv(p)?,
        None => Vec::new(),
    };
    let opts = CriteriaOptions {
        std: a.std,
        sigma_threshold: a.sigma_threshold,
        r2_min: a.r2_min,
        predictor: a.predictor,
    };
    let report = evaluate_criteria(&runs, &scaling, &opts)?;
    if let Some(p) = &a.report {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        std::fs::write(p, s)?;
    }
    match a.format {
        ReportFormat::Json => print_json(&report),
        ReportFormat::Table => {
            print!("{}", report.to_table());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildVocab(a) => build_vocab(a),
        Command::Tokenize(a) => tokenize(a, cli.threads),
        Command::Mask(a) => {
            run_pipeline(&pipeline_config(a, cli.seed, cli.threads))?;
            Ok(())
        }
        Command::Guide(a) => {
            let cfg = PipelineConfig {
                guiding: Some(a.task),
                sop_prob: a.sop_prob,
                ..pipeline_config(a.mask, cli.seed, cli.threads)
            };
            run_pipeline(&cfg)?;
            Ok(())
        }
        Command::Leakage(a) => leakage(a),
        Command::VocabStats(a) => vocab_stats(a),
        Command::Cull(a) => cull(a),
        Command::Benchstats(a) => benchstats(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let report = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": code,
            });
            eprintln!("error: {e}");
            eprintln!("{report}");
            ExitCode::from(code as u8)
        }
    }
}
