//! `raseq` command line: train, translate, evaluate, dump-attention,
//! make-synthetic.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.
//! `RASEQ_SEED` acts as the seed fallback when no `--seed` flag is given.

use clap::{Args, Parser, Subcommand};
use raseq::data::{generate_synthetic, load_corpus, save_corpus, SyntheticSpec, TaskKind, Vocab};
use raseq::eval::bleu;
use raseq::inference::{decode, dump_attention, unk_replace};
use raseq::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams};
use raseq::training::{encode_corpus, train, TrainConfig};
use raseq::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "raseq",
    about = "Recurrent-attention sequence-to-sequence toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train a model on a parallel corpus.
    Train(TrainArgs),
    /// Translate a file of tokenized sentences with a trained model.
    Translate(TranslateArgs),
    /// Corpus-level tokenized BLEU of a hypothesis file against a reference file.
    Evaluate(EvaluateArgs),
    /// Write per-sentence attention matrices (.attn.tsv and .pgm).
    DumpAttention(DumpArgs),
    /// Generate a synthetic task corpus (<prefix>.src / <prefix>.tgt).
    MakeSynthetic(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Source-side training file (one tokenized sentence per line).
    #[arg(long)]
    src: PathBuf,
    /// Target-side training file.
    #[arg(long)]
    tgt: PathBuf,
    /// Held-out source file for per-epoch perplexity.
    #[arg(long, requires = "valid_tgt")]
    valid_src: Option<PathBuf>,
    /// Held-out target file.
    #[arg(long, requires = "valid_src")]
    valid_tgt: Option<PathBuf>,
    /// key=value training config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model path; also the stem for .report.tsv, vocab and
    /// per-epoch checkpoint files.
    #[arg(long)]
    out: PathBuf,
    /// Attention window radius k (window length 2k+1).
    #[arg(long)]
    window: Option<usize>,
    /// Train the plain content-addressed baseline (no attention memory).
    #[arg(long)]
    no_dynamic: bool,
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 32)]
    mem_dim: usize,
    /// Vocabulary cap for both sides (4 reserved ids included).
    #[arg(long, default_value_t = 10000)]
    vocab_size: usize,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f32>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    halve_start: Option<usize>,
    #[arg(long)]
    halve_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Keep the epoch with the best validation perplexity as the final
    /// model instead of the last one.
    #[arg(long, requires = "valid_src")]
    best: bool,
}

#[derive(Args)]
struct TranslateArgs {
    /// Checkpoint written by `raseq train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    /// Replace UNK outputs by the source token at the attention argmax.
    #[arg(long)]
    unk_replace: bool,
    /// Emission cap is this factor times the source length, plus 10.
    #[arg(long, default_value_t = 2)]
    max_len_factor: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    beam: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// copy | fertility | reorder | rare-word
    #[arg(long)]
    task: String,
    /// Number of sentence pairs.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_prefix: PathBuf,
    /// Distinct common content tokens.
    #[arg(long, default_value_t = 16)]
    vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 10)]
    max_len: usize,
}

fn env_seed() -> Option<u64> {
    std::env::var("RASEQ_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Translate(args) => cmd_translate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::DumpAttention(args) => cmd_dump_attention(args),
        Command::MakeSynthetic(args) => cmd_make_synthetic(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("raseq: {err}");
            ExitCode::from(1)
        }
    }
}

fn vocab_paths(model: &Path) -> (PathBuf, PathBuf) {
    (
        model.with_extension("src.vocab"),
        model.with_extension("tgt.vocab"),
    )
}

fn cmd_train(args: TrainArgs) -> raseq::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            TrainConfig::parse(&text)?
        }
        None => TrainConfig::default(),
    };
    // flags beat the config file
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr_initial = v;
    }
    if let Some(v) = args.epochs {
        cfg.total_epochs = v;
    }
    if let Some(v) = args.clip_norm {
        cfg.clip_norm = v;
    }
    if let Some(v) = args.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = args.halve_start {
        cfg.halve_start_epoch = v;
    }
    if let Some(v) = args.halve_every {
        cfg.halve_every = v;
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.seed.or_else(env_seed) {
        cfg.seed = v;
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    cfg.checkpoint_prefix = Some(args.out.clone());
    cfg.validate()?;

    let (corpus, dropped) = load_corpus(&args.src, &args.tgt)?;
    if dropped > 0 {
        eprintln!("raseq: dropped {dropped} pairs with an empty side");
    }
    let valid = match (&args.valid_src, &args.valid_tgt) {
        (Some(vs), Some(vt)) => {
            let (v, vd) = load_corpus(vs, vt)?;
            if vd > 0 {
                eprintln!("raseq: dropped {vd} validation pairs with an empty side");
            }
            Some(v)
        }
        _ => None,
    };

    let src_vocab = Vocab::build(corpus.sources(), args.vocab_size)?;
    let tgt_vocab = Vocab::build(corpus.targets(), args.vocab_size)?;
    let encoded = encode_corpus(&corpus, &src_vocab, &tgt_vocab);
    let encoded_valid = valid
        .as_ref()
        .map(|v| encode_corpus(v, &src_vocab, &tgt_vocab));

    let model_cfg = ModelConfig {
        src_vocab: src_vocab.len(),
        tgt_vocab: tgt_vocab.len(),
        embed_dim: args.embed_dim,
        hidden_dim: args.hidden_dim,
        mem_dim: args.mem_dim,
        window: cfg.window,
        use_dynamic: !args.no_dynamic,
    };
    let params = ModelParams::init(model_cfg, cfg.seed)?;

    let outcome = train(&encoded, &cfg, params, encoded_valid.as_deref());
    if outcome.is_err() {
        remove_partial_checkpoints(&args.out);
    }
    let (trained, report) = outcome?;

    let report_path = args.out.with_extension("report.tsv");
    std::fs::write(&report_path, report.to_tsv())
        .map_err(|e| Error::io(report_path.display().to_string(), e))?;
    let (src_vocab_path, tgt_vocab_path) = vocab_paths(&args.out);
    src_vocab.save(&src_vocab_path)?;
    tgt_vocab.save(&tgt_vocab_path)?;

    let final_model = if args.best {
        let best_epoch = report
            .epochs
            .iter()
            .filter_map(|r| r.valid_ppl.map(|p| (r.epoch, p)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("perplexities are finite"))
            .map(|(epoch, _)| epoch);
        match best_epoch {
            Some(epoch) => load_checkpoint(&args.out.with_extension(format!("epoch{epoch}.ckpt")))?,
            None => trained,
        }
    } else {
        trained
    };
    save_checkpoint(&final_model, &args.out)?;
    println!(
        "trained {} epochs on {} pairs; model written to {}",
        report.epochs.len(),
        encoded.len(),
        args.out.display()
    );
    Ok(())
}

fn remove_partial_checkpoints(out: &Path) {
    if let (Some(dir), Some(stem)) = (out.parent(), out.file_stem()) {
        let dir = if dir.as_os_str().is_empty() {
            Path::new(".")
        } else {
            dir
        };
        if let Ok(entries) = std::fs::read_dir(dir) {
            for entry in entries.flatten() {
                let name = entry.file_name();
                let name = name.to_string_lossy();
                if name.starts_with(&*stem.to_string_lossy()) && name.ends_with(".ckpt.tmp") {
                    let _ = std::fs::remove_file(entry.path());
                }
            }
        }
    }
}

fn load_model_and_vocabs(model: &Path) -> raseq::Result<(ModelParams<f32>, Vocab, Vocab)> {
    let params = load_checkpoint(model)?;
    let (src_path, tgt_path) = vocab_paths(model);
    let src_vocab = Vocab::load(&src_path)?;
    let tgt_vocab = Vocab::load(&tgt_path)?;
    if src_vocab.len() != params.cfg.src_vocab || tgt_vocab.len() != params.cfg.tgt_vocab {
        return Err(Error::Format(format!(
            "vocabulary files hold {}/{} tokens but the checkpoint expects {}/{}",
            src_vocab.len(),
            tgt_vocab.len(),
            params.cfg.src_vocab,
            params.cfg.tgt_vocab
        )));
    }
    Ok((params, src_vocab, tgt_vocab))
}

fn read_lines(path: &Path) -> raseq::Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn cmd_translate(args: TranslateArgs) -> raseq::Result<()> {
    if args.beam == 0 {
        return Err(Error::Contract("beam width must be at least 1".into()));
    }
    let (params, src_vocab, tgt_vocab) = load_model_and_vocabs(&args.model)?;
    let lines = read_lines(&args.input)?;
    let mut out = String::new();
    for line in &lines {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            out.push('\n');
            continue;
        }
        let ids = src_vocab.encode(&tokens);
        let decoded = decode(&params, &ids, args.beam, args.max_len_factor)?;
        let surfaces = if args.unk_replace {
            unk_replace(&decoded.trace, &tokens, &tgt_vocab)?
        } else {
            tgt_vocab.decode(&decoded.output_ids)
        };
        out.push_str(&surfaces.join(" "));
        out.push('\n');
    }
    if lines.is_empty() {
        out.clear();
    }
    std::fs::write(&args.output, out).map_err(|e| Error::io(args.output.display().to_string(), e))
}

fn cmd_evaluate(args: EvaluateArgs) -> raseq::Result<()> {
    let hyps = read_lines(&args.hyp)?;
    let refs = read_lines(&args.reference)?;
    let report = bleu(&hyps, &refs)?;
    println!("{}", report.to_line());
    Ok(())
}

fn cmd_dump_attention(args: DumpArgs) -> raseq::Result<()> {
    let (params, src_vocab, tgt_vocab) = load_model_and_vocabs(&args.model)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    let lines = read_lines(&args.input)?;
    for (i, line) in lines.iter().enumerate() {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            eprintln!("raseq: skipping empty line {}", i + 1);
            continue;
        }
        let ids = src_vocab.encode(&tokens);
        let decoded = decode(&params, &ids, args.beam, 2)?;
        if decoded.output_ids.is_empty() {
            eprintln!(
                "raseq: line {} decoded to an empty sentence, skipping",
                i + 1
            );
            continue;
        }
        let outputs = tgt_vocab.decode(&decoded.output_ids);
        let base = args.out_dir.join(format!("sent{:04}", i + 1));
        dump_attention(&decoded.trace, &tokens, &outputs, &base)?;
    }
    Ok(())
}

fn cmd_make_synthetic(args: SynthArgs) -> raseq::Result<()> {
    let task = TaskKind::from_str(&args.task)?;
    let spec = SyntheticSpec {
        task,
        vocab_size: args.vocab_size,
        min_len: args.min_len,
        max_len: args.max_len,
        pairs: args.n,
        seed: args.seed.or_else(env_seed).unwrap_or(1),
    };
    let corpus = generate_synthetic(&spec)?;
    save_corpus(&corpus, &args.out_prefix)?;
    println!(
        "wrote {} {} pairs to {}.src / {}.tgt",
        corpus.len(),
        task,
        args.out_prefix.display(),
        args.out_prefix.display()
    );
    Ok(())
}
