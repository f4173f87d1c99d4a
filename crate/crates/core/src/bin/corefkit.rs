use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use corefkit::config::{RunConfig, SEED_ENV};
use corefkit::corpus::{preprocess, read_documents, read_shard_file, read_shards, MaskingStats};
use corefkit::masking::TrainingInstance;
use corefkit::model::{init_params, ModelParams};
use corefkit::probe::{
    evaluate_disambiguation, evaluate_mlm_recovery, evaluate_recovery, read_probe_file, ProbeMode,
};
use corefkit::tokenizer::{build_vocab, Vocab};
use corefkit::trainer::train;
use corefkit::Error;

#[derive(Parser)]
#[command(
    name = "corefkit",
    version,
    about = "Coreference-aware MLM pretraining at desk scale"
)]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// random_subword, wwm, mrm or full.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a subword vocabulary from a corpus; writes OUT/vocab.txt.
    BuildVocab {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Tag, pack, mask and shard a corpus into OUT.
    Preprocess {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train on preprocessed shards; writes OUT/metrics.csv and OUT/model.cpkm.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Score a probe file with a checkpoint.
    Probe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        probe: Option<PathBuf>,
    },
    /// Print the instances of a shard file or manifest.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Masking statistics of preprocessed shards.
    Stats {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.into()),
            other => Failure::Data(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config(_)) => Failure::Usage(e),
            _ => Failure::Data(e),
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut overrides = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            Failure::Usage(anyhow::anyhow!("--set expects key=value, got {kv:?}"))
        })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let flags = [
        ("seed", cli.seed.map(|s| s.to_string())),
        ("mode", cli.mode.clone()),
        ("workers", cli.workers.map(|w| w.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    overrides.extend(
        flags
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
    );
    let path =
        |k: &str, p: &Option<PathBuf>| p.as_ref().map(|p| (k.to_string(), p.display().to_string()));
    let extra = match &cli.command {
        Command::BuildVocab { corpus } => vec![path("corpus", corpus)],
        Command::Preprocess { corpus, vocab } => vec![path("corpus", corpus), path("vocab", vocab)],
        Command::Train { manifest, vocab } => {
            vec![path("manifest", manifest), path("vocab", vocab)]
        }
        Command::Probe {
            checkpoint,
            vocab,
            probe,
        } => {
            vec![
                path("checkpoint", checkpoint),
                path("vocab", vocab),
                path("probe", probe),
            ]
        }
        Command::Inspect { vocab, .. } => vec![path("vocab", vocab)],
        Command::Stats { manifest } => vec![path("manifest", manifest)],
    };
    overrides.extend(extra.into_iter().flatten());
    let env_seed = std::env::var(SEED_ENV).ok();
    Ok(RunConfig::resolve(
        cli.config.as_deref(),
        env_seed.as_deref(),
        &overrides,
    )?)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| {
        Failure::Usage(anyhow::anyhow!(
            "missing required setting {key:?} (flag --{key} or config key)"
        ))
    })
}

fn load_instances(manifest: &Path) -> Result<Vec<TrainingInstance>, Failure> {
    Ok(read_shards(manifest)?.collect::<corefkit::Result<Vec<_>>>()?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::BuildVocab { .. } => {
            let corpus = required(&cfg.corpus, "corpus")?;
            let docs = read_documents(corpus, cfg.tagger)?;
            let vocab = build_vocab(
                docs.iter().flatten().map(|w| w.word.as_str()),
                cfg.vocab_target,
            )?;
            std::fs::create_dir_all(&cfg.out)
                .with_context(|| format!("creating {}", cfg.out.display()))?;
            let path = cfg.out.join("vocab.txt");
            vocab.save(&path)?;
            println!("vocab={} size={}", path.display(), vocab.len());
        }
        Command::Preprocess { .. } => {
            let docs = read_documents(required(&cfg.corpus, "corpus")?, cfg.tagger)?;
            let vocab = Vocab::load(required(&cfg.vocab, "vocab")?)?;
            let manifest = preprocess(&docs, &vocab, &cfg.preprocess_config(), &cfg.out)?;
            println!(
                "manifest={} instances={} shards={}",
                manifest.path().display(),
                manifest.total(),
                manifest.shards.len()
            );
        }
        Command::Train { .. } => {
            let data = load_instances(required(&cfg.manifest, "manifest")?)?;
            let vocab = Vocab::load(required(&cfg.vocab, "vocab")?)?;
            let params = init_params(&cfg.model_config(vocab.len()), cfg.seed)?;
            let tc = cfg.train_config();
            let every = (tc.steps / 20).max(1);
            let out = train(&data, params, &tc, Some(&cfg.out), |m| {
                if m.step % every == 0 {
                    eprintln!(
                        "step {} lr {:.3e} L {:.4} L_MRP {:.4} L_MLM {:.4}",
                        m.step, m.lr, m.total, m.mrp, m.mlm
                    );
                }
            })?;
            println!(
                "checkpoint={}",
                out.checkpoint
                    .expect("written with an output dir")
                    .display()
            );
        }
        Command::Probe { .. } => {
            let params = ModelParams::load(required(&cfg.checkpoint, "checkpoint")?)?;
            let vocab = Vocab::load(required(&cfg.vocab, "vocab")?)?;
            let items = read_probe_file(required(&cfg.probe, "probe")?, cfg.probe_mode)?;
            match cfg.probe_mode {
                ProbeMode::Recovery => {
                    let r = evaluate_recovery(&params, &vocab, &items)?;
                    let mlm = evaluate_mlm_recovery(&params, &vocab, &items)?;
                    println!(
                        "items={}\naccuracy_at_1={}\nmrr={}\nmlm_argmax_accuracy={mlm}",
                        r.items, r.accuracy_at_1, r.mrr
                    );
                }
                ProbeMode::Disambiguation => {
                    let acc = evaluate_disambiguation(&params, &vocab, &items)?;
                    println!("items={}\naccuracy={acc}", items.len());
                }
            }
        }
        Command::Inspect { path, limit, .. } => {
            let vocab = cfg.vocab.as_deref().map(Vocab::load).transpose()?;
            let instances =
                if path.file_name().is_some_and(|n| n == "manifest.txt") || path.is_dir() {
                    let manifest = if path.is_dir() {
                        path.join("manifest.txt")
                    } else {
                        path.clone()
                    };
                    read_shards(manifest)?
                        .take(*limit)
                        .collect::<corefkit::Result<Vec<_>>>()?
                } else {
                    read_shard_file(path)?.into_iter().take(*limit).collect()
                };
            for (i, inst) in instances.iter().enumerate() {
                println!("{}", describe(i, inst, vocab.as_ref()));
            }
        }
        Command::Stats { .. } => {
            let data = load_instances(required(&cfg.manifest, "manifest")?)?;
            print!("{}", MaskingStats::from_instances(&data).report());
        }
    }
    Ok(())
}

fn describe(index: usize, inst: &TrainingInstance, vocab: Option<&Vocab>) -> String {
    let tok = |id: u32| {
        vocab
            .and_then(|v| v.token(id))
            .map(String::from)
            .unwrap_or_else(|| id.to_string())
    };
    let input: Vec<String> = inst.input_ids.iter().map(|&id| tok(id)).collect();
    let labels: Vec<String> = inst
        .labeled_positions()
        .map(|(p, id)| format!("{p}:{}", tok(id)))
        .collect();
    let mut s = format!(
        "# instance {index} ({} tokens)\ninput: {}\nlabels: {}\n",
        inst.seq_len(),
        input.join(" "),
        labels.join(" ")
    );
    for t in &inst.mrp_targets {
        let refs: Vec<String> = t
            .referents
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect();
        s += &format!("mrp: ({},{}) <- {}\n", t.start, t.end, refs.join(" "));
    }
    for m in &inst.masked {
        s += &format!(
            "masked: ({},{}) {:?} {:?}\n",
            m.start, m.end, m.strategy, m.action
        );
    }
    s
}

/// The error chain, skipping causes already spelled out by their parent.
fn report(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg = format!("{msg}: {text}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {}", report(&e));
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(2)
        }
    }
}
