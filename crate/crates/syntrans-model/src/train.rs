//! Training loops: span-denoising pre-training over packed corpora and
//! teacher-forced fine-tuning over (source, target) pairs. Checkpoints are
//! emitted at every multiple of `checkpoint_every` plus the final step, the
//! per-step log goes to `train_log.csv`, and the resolved configuration to
//! `config.snapshot`.
//!
//! Model artifacts (checkpoints, snapshot) are byte-deterministic per
//! (seed, config, data); the log's wall-clock column is diagnostic only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use syntrans_core::tokenizer::{Tokenizer, TokenizerError};

use crate::checkpoint::{self, CheckpointSeries};
use crate::config::fnv1a64;
use crate::corrupt::span_corrupt;
use crate::model::{Batch, Model, EOS};
use crate::optim::{AdamW, LrSchedule};
use crate::pack::pack_sequences;
use crate::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("vocabulary mismatch: {0}")]
    Vocab(#[from] TokenizerError),
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("empty training data")]
    EmptyData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub lr: f64,
    pub batch: usize,
    /// Explicit step budget; wins over `epochs` when both are set.
    pub steps: Option<u64>,
    pub epochs: Option<u64>,
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Span-corruption rate and mean span length (pre-training only).
    pub corruption_rate: f64,
    pub mean_span: usize,
    pub max_len: usize,
    pub packing: bool,
    pub weight_decay: f64,
    /// Inverse-square-root decay after this many steps; constant when None.
    pub lr_plateau: Option<u64>,
    pub dropout: f64,
}

impl TrainConfig {
    /// The published fine-tuning recipe: batch 128, lr 5e-5, 10 epochs,
    /// checkpoint every 500 steps, window 128.
    pub fn paper_finetune() -> Self {
        TrainConfig {
            phase: Phase::Finetune,
            lr: 5e-5,
            batch: 128,
            steps: None,
            epochs: Some(10),
            checkpoint_every: 500,
            seed: 0,
            corruption_rate: 0.0,
            mean_span: 3,
            max_len: 128,
            packing: false,
            weight_decay: 0.0,
            lr_plateau: None,
            dropout: 0.0,
        }
    }

    /// CPU-scale fine-tuning defaults.
    pub fn desk_finetune() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch: 32,
            epochs: Some(10),
            checkpoint_every: 500,
            ..Self::paper_finetune()
        }
    }

    /// CPU-scale pre-training defaults: rate 0.15, mean span 3, packing on,
    /// rsqrt decay from step 100.
    pub fn desk_pretrain() -> Self {
        TrainConfig {
            phase: Phase::Pretrain,
            lr: 1e-3,
            batch: 16,
            steps: Some(1000),
            epochs: None,
            checkpoint_every: 250,
            seed: 0,
            corruption_rate: 0.15,
            mean_span: 3,
            max_len: 128,
            packing: true,
            weight_decay: 0.0,
            lr_plateau: Some(100),
            dropout: 0.0,
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        match self.lr_plateau {
            Some(plateau) => LrSchedule::InverseSqrt { lr: self.lr, plateau },
            None => LrSchedule::Constant { lr: self.lr },
        }
    }

    fn validate(&self, n_examples: usize) -> Result<u64, TrainError> {
        if !(0.0..1.0).contains(&self.corruption_rate) {
            return Err(TrainError::BadConfig("corruption_rate outside [0, 1)".into()));
        }
        if self.mean_span == 0 {
            return Err(TrainError::BadConfig("mean_span must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(TrainError::BadConfig("batch must be positive".into()));
        }
        if n_examples == 0 {
            return Err(TrainError::EmptyData);
        }
        let steps_per_epoch = n_examples.div_ceil(self.batch) as u64;
        let total = match (self.steps, self.epochs) {
            (Some(s), _) => s,
            (None, Some(e)) => e * steps_per_epoch,
            (None, None) => {
                return Err(TrainError::BadConfig("neither steps nor epochs given".into()))
            }
        };
        if self.checkpoint_every == 0 {
            return Err(TrainError::BadConfig("checkpoint_every must be positive".into()));
        }
        if total > 0 && self.checkpoint_every > total {
            return Err(TrainError::BadConfig(format!(
                "checkpoint_every {} exceeds the {total} total steps",
                self.checkpoint_every
            )));
        }
        Ok(total)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub series: CheckpointSeries,
    pub final_loss: f64,
    pub steps: u64,
    pub log_path: PathBuf,
}

/// Deterministic epoch-shuffled index stream.
struct BatchStream {
    n: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut s = BatchStream {
            n,
            batch,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(&self.epoch.to_le_bytes()));
        self.order = (0..self.n).collect();
        self.order.shuffle(&mut rng);
        self.pos = 0;
        self.epoch += 1;
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.n {
            self.reshuffle();
        }
        let end = (self.pos + self.batch).min(self.n);
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

fn derive_seed(seed: u64, step: u64, idx: usize) -> u64 {
    let mut bytes = [0u8; 24];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&step.to_le_bytes());
    bytes[16..].copy_from_slice(&(idx as u64).to_le_bytes());
    fnv1a64(&bytes)
}

fn write_snapshot(run_dir: &Path, cfg: &TrainConfig, model: &Model<f32>) -> Result<(), TrainError> {
    fs::create_dir_all(run_dir)?;
    let snapshot = serde_json::json!({
        "train": cfg,
        "arch": model.config,
        "init_fingerprint": model.rng_fingerprint,
    });
    fs::write(
        run_dir.join("config.snapshot"),
        serde_json::to_string_pretty(&snapshot).expect("serializable"),
    )?;
    Ok(())
}

/// Drives the step loop shared by both phases. `make_batch` maps the step
/// index and example indices to a concrete batch.
fn run_loop(
    model: &mut Model<f32>,
    n_examples: usize,
    cfg: &TrainConfig,
    run_dir: &Path,
    mut make_batch: impl FnMut(u64, &[usize]) -> Result<Batch, TrainError>,
) -> Result<TrainOutcome, TrainError> {
    let total = cfg.validate(n_examples)?;
    write_snapshot(run_dir, cfg, model)?;
    let mut log = std::io::BufWriter::new(fs::File::create(run_dir.join("train_log.csv"))?);
    writeln!(log, "step,loss,lr,wall_ms")?;

    model.dropout = cfg.dropout;
    let mut optimizer: AdamW<f32> = AdamW::new(cfg.schedule(), cfg.weight_decay);
    let mut stream = BatchStream::new(n_examples, cfg.batch, cfg.seed);
    let mut steps_saved: Vec<u64> = Vec::new();
    let mut final_loss = f64::NAN;

    if total == 0 {
        model.step = 0;
        checkpoint::save(model, &CheckpointSeries::path_for(run_dir, 0))?;
        steps_saved.push(0);
    }

    for step in 1..=total {
        let t0 = Instant::now();
        let indices = stream.next_batch();
        let batch = make_batch(step, &indices)?;
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, step, usize::MAX));
        let (loss, grads) = model
            .loss_and_grads(&batch, &mut dropout_rng)
            .map_err(|e| match e {
                ModelError::NonFinite { tensor } => ModelError::NonFinite {
                    tensor: format!("step {step}: {tensor}"),
                },
                other => other,
            })?;
        optimizer.apply(&mut model.params, &grads);
        model.step = step;
        final_loss = loss;
        writeln!(
            log,
            "{step},{loss:.6},{:.3e},{}",
            optimizer.current_lr(),
            t0.elapsed().as_millis()
        )?;
        if step % cfg.checkpoint_every == 0 {
            checkpoint::save(model, &CheckpointSeries::path_for(run_dir, step))?;
            steps_saved.push(step);
        }
    }
    if total > 0 && steps_saved.last() != Some(&total) {
        checkpoint::save(model, &CheckpointSeries::path_for(run_dir, total))?;
        steps_saved.push(total);
    }
    log.flush()?;
    Ok(TrainOutcome {
        series: CheckpointSeries {
            dir: run_dir.to_path_buf(),
            steps: steps_saved,
        },
        final_loss,
        steps: total,
        log_path: run_dir.join("train_log.csv"),
    })
}

fn check_vocab(model: &Model<f32>, tokenizer: &Tokenizer) -> Result<(), TrainError> {
    if tokenizer.vocab_size() > model.config.vocab {
        return Err(TrainError::BadConfig(format!(
            "tokenizer vocabulary {} exceeds the model vocabulary {}",
            tokenizer.vocab_size(),
            model.config.vocab
        )));
    }
    Ok(())
}

/// Span-denoising pre-training over a sentence corpus. Sentences are
/// encoded, packed to `max_len` (or truncated when packing is off), and
/// corrupted freshly at every step.
pub fn pretrain(
    model: &mut Model<f32>,
    corpus: &[String],
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    check_vocab(model, tokenizer)?;
    let encoded: Result<Vec<Vec<u32>>, TokenizerError> =
        corpus.par_iter().map(|line| tokenizer.encode(line)).collect();
    let encoded = encoded?;
    let examples: Vec<Vec<u32>> = if cfg.packing {
        pack_sequences(&encoded, cfg.max_len)
    } else {
        encoded
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|mut s| {
                s.truncate(cfg.max_len - 1);
                s.push(EOS);
                s
            })
            .collect()
    };
    let sentinel_base = tokenizer.sentinel_id(0).map_err(TrainError::Vocab)?;
    let n_sentinels = tokenizer.n_sentinels();
    let rate = cfg.corruption_rate;
    let mean_span = cfg.mean_span;
    let seed = cfg.seed;
    run_loop(model, examples.len(), cfg, run_dir, |step, indices| {
        let rows: Result<Vec<(Vec<u32>, Vec<u32>)>, ModelError> = indices
            .par_iter()
            .enumerate()
            .map(|(i, &idx)| {
                let corrupted = span_corrupt(
                    &examples[idx],
                    rate,
                    mean_span,
                    derive_seed(seed, step, i),
                    sentinel_base,
                    n_sentinels,
                )?;
                Ok((corrupted.input, corrupted.target))
            })
            .collect();
        Ok(Batch::from_pairs(&rows?))
    })
}

/// Teacher-forced fine-tuning over (source, target) text pairs. Sources and
/// targets get a trailing EOS. Unknown words surface as vocabulary errors.
pub fn finetune(
    model: &mut Model<f32>,
    pairs: &[(String, String)],
    tokenizer: &Tokenizer,
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<TrainOutcome, TrainError> {
    check_vocab(model, tokenizer)?;
    let encoded = encode_pairs(pairs, tokenizer)?;
    run_loop(model, encoded.len(), cfg, run_dir, |_step, indices| {
        let rows: Vec<(Vec<u32>, Vec<u32>)> =
            indices.iter().map(|&i| encoded[i].clone()).collect();
        Ok(Batch::from_pairs(&rows))
    })
}

/// Encodes text pairs with a trailing EOS on both sides.
pub fn encode_pairs(
    pairs: &[(String, String)],
    tokenizer: &Tokenizer,
) -> Result<Vec<(Vec<u32>, Vec<u32>)>, TrainError> {
    let encoded: Result<Vec<_>, TokenizerError> = pairs
        .par_iter()
        .map(|(src, tgt)| {
            let mut s = tokenizer.encode(src)?;
            s.push(EOS);
            let mut t = tokenizer.encode(tgt)?;
            t.push(EOS);
            Ok((s, t))
        })
        .collect();
    Ok(encoded?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ArchConfig;
    use syntrans_core::grammar::Grammar;
    use syntrans_core::tokenizer::TokenizerConfig;

    fn word_tokenizer() -> Tokenizer {
        Tokenizer::word_level(&Grammar::default_grammar())
    }

    fn tiny_model(vocab: usize) -> Model<f32> {
        let cfg = ArchConfig::new(1, 16, 32, 2, 8, vocab).with_max_len(32);
        Model::init(&cfg, 5).unwrap()
    }

    #[test]
    fn paper_finetune_echoes_the_published_recipe() {
        let cfg = TrainConfig::paper_finetune();
        assert_eq!(cfg.epochs, Some(10));
        assert_eq!(cfg.batch, 128);
        assert_eq!(cfg.lr, 5e-5);
        assert_eq!(cfg.checkpoint_every, 500);
        assert_eq!(cfg.max_len, 128);
    }

    #[test]
    fn desk_step_arithmetic_matches_epochs() {
        // 10k examples at batch 32 over 10 epochs is 3130 steps (313 per
        // epoch with the final short batch), 7 checkpoint files.
        let cfg = TrainConfig {
            batch: 32,
            epochs: Some(10),
            ..TrainConfig::desk_finetune()
        };
        let total = cfg.validate(10_000).unwrap();
        assert_eq!(total, 3130);
        let saved = (1..=total).filter(|s| s % cfg.checkpoint_every == 0).count() + 1;
        assert_eq!(saved, 7);
    }

    #[test]
    fn checkpoint_cadence_is_exact() {
        let tok = word_tokenizer();
        let mut model = tiny_model(tok.vocab_size());
        let pairs: Vec<(String, String)> = (0..8)
            .map(|i| {
                let w = if i % 2 == 0 { "the raven" } else { "the newts" };
                (w.to_string(), w.to_string())
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: Some(7),
            epochs: None,
            checkpoint_every: 3,
            batch: 4,
            ..TrainConfig::desk_finetune()
        };
        let out = finetune(&mut model, &pairs, &tok, &cfg, dir.path()).unwrap();
        assert_eq!(out.series.steps, vec![3, 6, 7]);
        let found = CheckpointSeries::discover(dir.path()).unwrap();
        assert_eq!(found.steps, vec![3, 6, 7]);
        assert!(out.log_path.exists());
        assert!(dir.path().join("config.snapshot").exists());
    }

    #[test]
    fn zero_steps_returns_only_the_initial_checkpoint() {
        let tok = word_tokenizer();
        let mut model = tiny_model(tok.vocab_size());
        let pairs = vec![("the raven".to_string(), "the raven".to_string())];
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: Some(0),
            epochs: None,
            ..TrainConfig::desk_finetune()
        };
        let out = finetune(&mut model, &pairs, &tok, &cfg, dir.path()).unwrap();
        assert_eq!(out.series.steps, vec![0]);
        let restored = out.series.load_step(0).unwrap();
        assert_eq!(restored.step, 0);
    }

    #[test]
    fn unknown_words_are_a_vocabulary_error() {
        let tok = word_tokenizer();
        let mut model = tiny_model(tok.vocab_size());
        let pairs = vec![("the xyzzy".to_string(), "the raven".to_string())];
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: Some(1),
            epochs: None,
            checkpoint_every: 1,
            ..TrainConfig::desk_finetune()
        };
        let err = finetune(&mut model, &pairs, &tok, &cfg, dir.path()).unwrap_err();
        assert!(matches!(err, TrainError::Vocab(TokenizerError::UnknownWord(_))));
    }

    #[test]
    fn oversized_tokenizer_is_rejected() {
        let tok = word_tokenizer();
        let mut model = tiny_model(16);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: Some(1),
            epochs: None,
            checkpoint_every: 1,
            ..TrainConfig::desk_finetune()
        };
        let err = finetune(
            &mut model,
            &[("a".into(), "b".into())],
            &tok,
            &cfg,
            dir.path(),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::BadConfig(_)));
    }

    #[test]
    fn pretraining_runs_and_is_byte_deterministic() {
        let g = Grammar::default_grammar();
        let corpus = syntrans_core::data::synth_corpus(
            &syntrans_core::data::CorpusSpec {
                register: syntrans_core::data::Register::Simple,
                size_words: 2_000,
                seed: 3,
                source_path: None,
            },
            &g,
        )
        .unwrap();
        let tok = Tokenizer::train_subword(&corpus, &TokenizerConfig::subword(600)).unwrap();
        let cfg = TrainConfig {
            steps: Some(10),
            checkpoint_every: 5,
            batch: 4,
            max_len: 32,
            ..TrainConfig::desk_pretrain()
        };
        let run = |dir: &Path| {
            let mut model = tiny_model(tok.vocab_size());
            pretrain(&mut model, &corpus, &tok, &cfg, dir).unwrap();
            fs::read(CheckpointSeries::path_for(dir, 10)).unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run(d1.path());
        let b = run(d2.path());
        assert_eq!(a, b, "same seed and corpus must give identical bytes");
    }

    #[test]
    fn finetune_learns_a_tiny_copy_task() {
        let tok = word_tokenizer();
        let mut model = tiny_model(tok.vocab_size());
        let g = Grammar::default_grammar();
        let mut pairs = Vec::new();
        for seed in 0..64 {
            let t = syntrans_core::grammar::sample_declarative(
                &g,
                seed,
                &syntrans_core::grammar::SampleOpts::default(),
            )
            .unwrap();
            let text = t.tokens().join(" ");
            pairs.push((text.clone(), text));
        }
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            steps: Some(60),
            epochs: None,
            checkpoint_every: 60,
            batch: 16,
            lr: 3e-3,
            ..TrainConfig::desk_finetune()
        };
        let encoded = encode_pairs(&pairs, &tok).unwrap();
        let initial = model.loss(&Batch::from_pairs(&encoded)).unwrap();
        let out = finetune(&mut model, &pairs, &tok, &cfg, dir.path()).unwrap();
        let after = model.loss(&Batch::from_pairs(&encoded)).unwrap();
        assert!(
            after < initial * 0.5,
            "loss should drop substantially: {initial} -> {after} (final train loss {})",
            out.final_loss
        );
    }
}
