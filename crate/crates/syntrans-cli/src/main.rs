//! `syntrans`: dataset/corpus generation, tokenizer training, pre-training,
//! fine-tuning, evaluation, oracle checks, one-knob sweeps, and SVG reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/invariant violation,
//! 3 numerical failure.

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use syntrans_core::data::{
    self, concat_corpora, corpus_stats, read_corpus, read_split, subsample_nested, synth_corpus,
    write_corpus, CorpusSpec, Register, Split, SplitSizes, Task, TransformExample,
};
use syntrans_core::grammar::{Grammar, Lexicon};
use syntrans_core::stats::StatsError;
use syntrans_core::tokenizer::{Tokenizer, TokenizerConfig};
use syntrans_core::transform::{self, RuleName};
use syntrans_harness::evaluate::evaluate_checkpoints;
use syntrans_harness::report::render_report;
use syntrans_harness::sweep::{run_sweep, SweepAxis, SweepPretrain, SweepSpec};
use syntrans_harness::HarnessError;
use syntrans_model::checkpoint::{self, CheckpointSeries};
use syntrans_model::config::ArchConfig;
use syntrans_model::train::{self, TrainConfig, TrainError};
use syntrans_model::{Model, ModelError};

use crate::config::FlatConfig;

/// Marker for problems in how the tool was invoked (flag combinations,
/// config keys); mapped to exit code 1.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "syntrans",
    about = "Syntactic-transformation generalization testbed",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key/value config file (one `key = value` per line).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. `--set arch.dm=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<FlatConfig> {
        let mut cfg = match &self.config {
            Some(path) => FlatConfig::load(path).map_err(|e| usage(e.to_string()))?,
            None => FlatConfig::default(),
        };
        cfg.apply_overrides(&self.sets).map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/test/gen splits for one transformation task.
    GenData {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        n_train: usize,
        #[arg(long, default_value_t = 1_000)]
        n_test: usize,
        #[arg(long, default_value_t = 1_000)]
        n_gen: usize,
        /// Use the full published sizes (100k/10k/10k).
        #[arg(long)]
        paper_scale: bool,
        /// Custom lexicon table instead of the built-in one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Generate or manipulate pre-training corpora.
    GenCorpus {
        /// Synthesize a register (simple|complex|external).
        #[arg(long)]
        register: Option<Register>,
        #[arg(long)]
        words: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Source text for the external register.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Corpus to subsample into a nested family.
        #[arg(long)]
        subsample: Option<PathBuf>,
        /// Comma-separated word counts, strictly increasing.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Two corpora to concatenate and shuffle (give the flag twice).
        #[arg(long, num_args = 1)]
        concat: Vec<PathBuf>,
        /// Print corpus statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Train a subword tokenizer (or dump the word-level one).
    TrainTokenizer {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 8192)]
        vocab_size: usize,
        #[arg(long, default_value_t = 32)]
        sentinels: usize,
        /// Emit the closed word-level vocabulary instead.
        #[arg(long)]
        word: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Span-denoising pre-training on a corpus.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Resume or branch from an existing checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fine-tune on a generated dataset (from scratch unless --init given).
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Use the published fine-tuning recipe instead of desk defaults.
        #[arg(long)]
        paper_defaults: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate every checkpoint of a run on one dataset split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value = "gen")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate only the first N examples.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Apply a named transformation rule to a dataset and verify the
    /// expected oracle separation.
    OracleCheck {
        #[arg(long)]
        data: PathBuf,
        /// move-main | move-first | move-second
        #[arg(long)]
        rule: String,
        #[arg(long, default_value = "train,test,gen")]
        splits: String,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Run a one-knob sweep and analyze params vs accuracy.
    Sweep {
        /// nl|el|dl|dm|ff|nh|kv|corpus_size|register
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value = "quest")]
        tasks: String,
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Dataset generation seed.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2_000)]
        n_train: usize,
        #[arg(long, default_value_t = 500)]
        n_test: usize,
        #[arg(long, default_value_t = 500)]
        n_gen: usize,
        #[arg(long)]
        eval_limit: Option<usize>,
        /// Pre-train every point on this register.
        #[arg(long)]
        pretrain_register: Option<Register>,
        #[arg(long)]
        pretrain_words: Option<usize>,
        #[arg(long, default_value_t = 7)]
        pretrain_seed: u64,
        #[arg(long, default_value_t = 8192)]
        subword_vocab: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render an SVG chart from a sweep CSV.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_grammar(lexicon: &Option<PathBuf>) -> Result<Grammar> {
    match lexicon {
        Some(path) => {
            let raw = fs::read_to_string(path)
                .with_context(|| format!("reading lexicon {}", path.display()))?;
            Ok(Grammar::with_lexicon(Lexicon::from_table(&raw)?))
        }
        None => Ok(Grammar::default_grammar()),
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    raw.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|e| usage(format!("bad {what} '{s}': {e}"))))
        .collect()
}

fn cmd_gen_data(
    task: Task,
    out: &Path,
    seed: u64,
    sizes: SplitSizes,
    lexicon: &Option<PathBuf>,
) -> Result<()> {
    let grammar = load_grammar(lexicon)?;
    let set = data::build_transform_splits(task, &grammar, sizes, seed)?;
    data::write_splits(out, &set)?;
    for (split, examples) in set.iter() {
        println!(
            "wrote {} {split} examples to {}",
            examples.len(),
            data::split_file(out, split).display()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_corpus(
    register: Option<Register>,
    words: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    source: Option<PathBuf>,
    subsample: Option<PathBuf>,
    sizes: Option<String>,
    out_dir: Option<PathBuf>,
    concat: Vec<PathBuf>,
    stats: Option<PathBuf>,
    lexicon: Option<PathBuf>,
) -> Result<()> {
    let modes = [
        register.is_some(),
        subsample.is_some(),
        !concat.is_empty(),
        stats.is_some(),
    ];
    if modes.iter().filter(|&&m| m).count() != 1 {
        return Err(usage(
            "gen-corpus needs exactly one of --register, --subsample, --concat, --stats",
        ));
    }

    if let Some(path) = stats {
        let lines = read_corpus(&path)?;
        let s = corpus_stats(&lines);
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(());
    }

    let seed = seed.ok_or_else(|| usage("--seed is mandatory for corpus generation"))?;

    if let Some(register) = register {
        let words = words.ok_or_else(|| usage("--register needs --words"))?;
        let out = out.ok_or_else(|| usage("--register needs --out"))?;
        let grammar = load_grammar(&lexicon)?;
        let spec = CorpusSpec {
            register,
            size_words: words,
            seed,
            source_path: source,
        };
        let lines = synth_corpus(&spec, &grammar)?;
        write_corpus(&out, &lines)?;
        fs::write(
            out.with_extension("spec.json"),
            serde_json::to_string_pretty(&spec)?,
        )?;
        let s = corpus_stats(&lines);
        println!(
            "wrote {} sentences / {} words to {} (vocab {}, mean len {:.2})",
            s.sentences,
            s.words,
            out.display(),
            s.vocab_size,
            s.mean_sentence_len
        );
        return Ok(());
    }

    if let Some(corpus_path) = subsample {
        let sizes: Vec<usize> = parse_list(
            &sizes.ok_or_else(|| usage("--subsample needs --sizes"))?,
            "size",
        )?;
        let lines = read_corpus(&corpus_path)?;
        let families = subsample_nested(&lines, &sizes, seed)?;
        let stem = corpus_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into());
        let dir = out_dir.unwrap_or_else(|| {
            corpus_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."))
        });
        for (family, size) in families.iter().zip(&sizes) {
            let path = dir.join(format!("{stem}.{size}.txt"));
            write_corpus(&path, family)?;
            println!("wrote {} lines to {}", family.len(), path.display());
        }
        return Ok(());
    }

    // Concatenation mode.
    if concat.len() != 2 {
        return Err(usage("--concat takes exactly two corpora (give the flag twice)"));
    }
    let out = out.ok_or_else(|| usage("--concat needs --out"))?;
    let a = read_corpus(&concat[0])?;
    let b = read_corpus(&concat[1])?;
    let merged = concat_corpora(&a, &b, seed);
    write_corpus(&out, &merged)?;
    let s = corpus_stats(&merged);
    println!("wrote {} sentences / {} words to {}", s.sentences, s.words, out.display());
    Ok(())
}

fn cmd_train_tokenizer(
    corpus: Option<PathBuf>,
    vocab_size: usize,
    sentinels: usize,
    word: bool,
    out: &Path,
    lexicon: Option<PathBuf>,
) -> Result<()> {
    let tokenizer = if word {
        Tokenizer::word_level(&load_grammar(&lexicon)?)
    } else {
        let corpus = corpus.ok_or_else(|| usage("subword mode needs --corpus"))?;
        let lines = read_corpus(&corpus)?;
        let cfg = TokenizerConfig {
            vocab_size,
            n_sentinels: sentinels,
            ..TokenizerConfig::subword(vocab_size)
        };
        Tokenizer::train_subword(&lines, &cfg)?
    };
    tokenizer.save(out)?;
    println!(
        "wrote tokenizer ({} effective vocab) to {}",
        tokenizer.vocab_size(),
        out.display()
    );
    Ok(())
}

/// Resolves arch + train configs, preferring an existing checkpoint's
/// architecture when resuming.
fn resolve_model_and_configs(
    cfg_args: &ConfigArgs,
    tokenizer: &Tokenizer,
    init: &Option<PathBuf>,
    base_train: TrainConfig,
    seed: u64,
) -> Result<(Model<f32>, TrainConfig, FlatConfig)> {
    let flat = cfg_args.resolve()?;
    let mut used = Vec::new();
    let mut train_cfg = flat.build_train(base_train, &mut used)?;
    train_cfg.seed = seed;
    let model = match init {
        Some(path) => {
            // Architecture comes from the checkpoint; arch.* keys are not
            // applicable but parse them anyway so typo detection works.
            let _ = flat.build_arch(ArchConfig::desk(1), &mut used)?;
            checkpoint::load(path)?
        }
        None => {
            let base = ArchConfig::desk(tokenizer.vocab_size());
            let mut arch = flat.build_arch(base, &mut used)?;
            arch.max_len = arch.max_len.max(train_cfg.max_len);
            Model::init(&arch, seed)?
        }
    };
    flat.ensure_all_used(&used).map_err(|e| usage(e.to_string()))?;
    Ok((model, train_cfg, flat))
}

fn write_cli_snapshot(out: &Path, flat: &FlatConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("cli.conf"), flat.render())?;
    Ok(())
}

fn cmd_pretrain(
    corpus: &Path,
    tokenizer_path: &Path,
    out: &Path,
    seed: u64,
    init: &Option<PathBuf>,
    cfg_args: &ConfigArgs,
) -> Result<()> {
    let tokenizer = Tokenizer::load(tokenizer_path)?;
    let lines = read_corpus(corpus)?;
    let (mut model, train_cfg, flat) =
        resolve_model_and_configs(cfg_args, &tokenizer, init, TrainConfig::desk_pretrain(), seed)?;
    write_cli_snapshot(out, &flat)?;
    let outcome = train::pretrain(&mut model, &lines, &tokenizer, &train_cfg, out)?;
    println!(
        "pretrained {} steps, final loss {:.4}; checkpoints at {:?}",
        outcome.steps, outcome.final_loss, outcome.series.steps
    );
    Ok(())
}

fn cmd_finetune(
    data_dir: &Path,
    tokenizer_path: &Path,
    out: &Path,
    seed: u64,
    init: &Option<PathBuf>,
    paper_defaults: bool,
    cfg_args: &ConfigArgs,
) -> Result<()> {
    let tokenizer = Tokenizer::load(tokenizer_path)?;
    let train_split = read_split(data_dir, Split::Train)?;
    let pairs: Vec<(String, String)> = train_split
        .iter()
        .map(|e| (e.source_text(), e.target_text()))
        .collect();
    let base = if paper_defaults {
        TrainConfig::paper_finetune()
    } else {
        TrainConfig::desk_finetune()
    };
    let (mut model, train_cfg, flat) =
        resolve_model_and_configs(cfg_args, &tokenizer, init, base, seed)?;
    write_cli_snapshot(out, &flat)?;
    let outcome = train::finetune(&mut model, &pairs, &tokenizer, &train_cfg, out)?;
    println!(
        "fine-tuned {} steps, final loss {:.4}; checkpoints at {:?}",
        outcome.steps, outcome.final_loss, outcome.series.steps
    );
    Ok(())
}

fn cmd_eval(
    run: &Path,
    data_dir: &Path,
    tokenizer_path: &Path,
    split: Split,
    out: &Path,
    limit: Option<usize>,
    lexicon: &Option<PathBuf>,
) -> Result<()> {
    let grammar = load_grammar(lexicon)?;
    let tokenizer = Tokenizer::load(tokenizer_path)?;
    let mut examples = read_split(data_dir, split)?;
    if let Some(n) = limit {
        examples.truncate(n);
    }
    let series = CheckpointSeries::discover(run)?;
    let result = evaluate_checkpoints(&series, &examples, &tokenizer, &grammar, 0)?;
    let mut csv = String::from("step,seq_acc,targeted_acc\n");
    for c in &result.per_checkpoint {
        csv.push_str(&format!("{},{:.6},{:.6}\n", c.step, c.sequence_acc, c.targeted_acc));
    }
    csv.push_str(&format!("mean,{:.6},{:.6}\n", result.sequence_mean, result.targeted_mean));
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, csv)?;
    println!(
        "{split}: checkpoint-mean seq={:.4} targeted={:.4} over {} checkpoints -> {}",
        result.sequence_mean,
        result.targeted_mean,
        result.per_checkpoint.len(),
        out.display()
    );
    Ok(())
}

fn rule_predictions(
    rule: RuleName,
    examples: &[TransformExample],
    grammar: &Grammar,
) -> Result<Vec<Vec<String>>> {
    examples
        .iter()
        .map(|ex| {
            let out = match (rule, ex.task) {
                (RuleName::MoveMain, Task::Quest) => transform::replay::move_main_from_meta(
                    &ex.source,
                    ex.meta.main_aux_idx.ok_or_else(|| anyhow!("missing main_aux_idx"))?,
                )?,
                (RuleName::MoveMain, Task::Passiv) => transform::replay::passivize_main_from_meta(
                    &ex.source,
                    ex.meta.object_idx.ok_or_else(|| anyhow!("missing object_idx"))?,
                    grammar,
                )?,
                (RuleName::MoveFirst, Task::Quest) => {
                    transform::move_first_question(&ex.source, grammar)?
                }
                (RuleName::MoveSecond, Task::Passiv) => {
                    transform::passivize_second(&ex.source, grammar)?
                }
                (rule, task) => {
                    return Err(usage(format!("rule {rule} does not apply to task {task}")))
                }
            };
            Ok(out)
        })
        .collect()
}

fn cmd_oracle_check(
    data_dir: &Path,
    rule: &str,
    splits: &str,
    lexicon: &Option<PathBuf>,
) -> Result<()> {
    let rule: RuleName = rule.parse().map_err(usage)?;
    let grammar = load_grammar(lexicon)?;
    let splits: Vec<Split> = parse_list(splits, "split")?;
    let mut violations = Vec::new();
    for split in splits {
        let examples = read_split(data_dir, split)?;
        if examples.is_empty() {
            continue;
        }
        let task = examples[0].task;
        let predictions = rule_predictions(rule, &examples, &grammar)?;
        let (seq, targeted) =
            syntrans_harness::evaluate::score(&predictions, &examples, task, &grammar)?;
        println!(
            "split={split} rule={rule} n={} seq_acc={seq:.4} targeted_acc={targeted:.4}",
            examples.len()
        );
        let expect_ambiguous = matches!(split, Split::Train | Split::Test);
        match (rule, expect_ambiguous) {
            (RuleName::MoveMain, _) => {
                if seq != 1.0 || targeted != 1.0 {
                    violations.push(format!(
                        "{split}: hierarchical rule must reproduce targets exactly (seq {seq}, targeted {targeted})"
                    ));
                }
            }
            (_, true) => {
                if seq != 1.0 {
                    violations.push(format!(
                        "{split}: linear rule must match targets on ambiguous data (seq {seq})"
                    ));
                }
            }
            (_, false) => {
                if targeted != 0.0 {
                    violations.push(format!(
                        "{split}: linear rule must score 0 targeted accuracy on gen (got {targeted})"
                    ));
                }
            }
        }
    }
    if !violations.is_empty() {
        bail!(data::DataError::Invariant(violations.join("; ")));
    }
    println!("oracle separation holds for {rule}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    axis: &str,
    values: &str,
    tasks: &str,
    seeds: &str,
    out: &Path,
    data_seed: u64,
    sizes: SplitSizes,
    eval_limit: Option<usize>,
    pretrain_register: Option<Register>,
    pretrain_words: Option<usize>,
    pretrain_seed: u64,
    subword_vocab: usize,
    cfg_args: &ConfigArgs,
) -> Result<()> {
    let axis: SweepAxis = axis.parse().map_err(usage)?;
    let values: Vec<String> = values.split(',').map(str::to_string).filter(|s| !s.is_empty()).collect();
    let tasks: Vec<Task> = parse_list(tasks, "task")?;
    let seeds: Vec<u64> = parse_list(seeds, "seed")?;

    let flat = cfg_args.resolve()?;
    let mut used = Vec::new();
    let base_arch = flat.build_arch(ArchConfig::desk(0), &mut used)?;
    let finetune = flat.build_train(TrainConfig::desk_finetune(), &mut used)?;
    let pretrain_cfg =
        flat.build_train_with_prefix(TrainConfig::desk_pretrain(), &mut used, "pretrain")?;
    flat.ensure_all_used(&used).map_err(|e| usage(e.to_string()))?;

    let pretrain = match (pretrain_register, pretrain_words) {
        (Some(register), Some(size_words)) => Some(SweepPretrain {
            register,
            size_words,
            corpus_seed: pretrain_seed,
            config: pretrain_cfg,
            subword_vocab,
        }),
        (None, None) => None,
        _ => {
            return Err(usage(
                "--pretrain-register and --pretrain-words must be given together",
            ))
        }
    };

    let spec = SweepSpec {
        axis,
        values,
        base_arch,
        tasks,
        seeds,
        finetune,
        pretrain,
        data_sizes: sizes,
        data_seed,
        eval_limit,
        out_dir: out.to_path_buf(),
    };
    let grammar = Grammar::default_grammar();
    fs::create_dir_all(out)?;
    fs::write(out.join("cli.conf"), flat.render())?;
    let outcome = run_sweep(&spec, &grammar)?;
    println!("sweep complete: {} points", outcome.points.len());
    print!("{}", fs::read_to_string(&outcome.analysis_txt)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            task,
            out,
            seed,
            n_train,
            n_test,
            n_gen,
            paper_scale,
            lexicon,
        } => {
            let sizes = if paper_scale {
                SplitSizes::paper_scale()
            } else {
                SplitSizes {
                    n_train,
                    n_test,
                    n_gen,
                }
            };
            cmd_gen_data(task, &out, seed, sizes, &lexicon)
        }
        Command::GenCorpus {
            register,
            words,
            seed,
            out,
            source,
            subsample,
            sizes,
            out_dir,
            concat,
            stats,
            lexicon,
        } => cmd_gen_corpus(
            register, words, seed, out, source, subsample, sizes, out_dir, concat, stats, lexicon,
        ),
        Command::TrainTokenizer {
            corpus,
            vocab_size,
            sentinels,
            word,
            out,
            lexicon,
        } => cmd_train_tokenizer(corpus, vocab_size, sentinels, word, &out, lexicon),
        Command::Pretrain {
            corpus,
            tokenizer,
            out,
            seed,
            init,
            config,
        } => cmd_pretrain(&corpus, &tokenizer, &out, seed, &init, &config),
        Command::Finetune {
            data,
            tokenizer,
            out,
            seed,
            init,
            paper_defaults,
            config,
        } => cmd_finetune(&data, &tokenizer, &out, seed, &init, paper_defaults, &config),
        Command::Eval {
            run,
            data,
            tokenizer,
            split,
            out,
            limit,
            lexicon,
        } => cmd_eval(&run, &data, &tokenizer, split, &out, limit, &lexicon),
        Command::OracleCheck {
            data,
            rule,
            splits,
            lexicon,
        } => cmd_oracle_check(&data, &rule, &splits, &lexicon),
        Command::Sweep {
            axis,
            values,
            tasks,
            seeds,
            out,
            seed,
            n_train,
            n_test,
            n_gen,
            eval_limit,
            pretrain_register,
            pretrain_words,
            pretrain_seed,
            subword_vocab,
            config,
        } => cmd_sweep(
            &axis,
            &values,
            &tasks,
            &seeds,
            &out,
            seed,
            SplitSizes {
                n_train,
                n_test,
                n_gen,
            },
            eval_limit,
            pretrain_register,
            pretrain_words,
            pretrain_seed,
            subword_vocab,
            &config,
        ),
        Command::Report { csv, out } => {
            render_report(&csv, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<StatsError>().is_some() {
            return 3;
        }
        if let Some(m) = cause.downcast_ref::<ModelError>() {
            return match m {
                ModelError::NonFinite { .. } => 3,
                ModelError::BadConfig(_) => 1,
                _ => 2,
            };
        }
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            return match t {
                TrainError::BadConfig(_) => 1,
                TrainError::Model(ModelError::NonFinite { .. }) => 3,
                _ => 2,
            };
        }
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Stats(_) => 3,
                HarnessError::Invalid(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
