//! The poverty-of-the-stimulus experiment: optional pre-training (once per
//! configuration), fine-tuning across seeds, checkpoint evaluation on the
//! in-distribution and generalization splits, and CSV emission. Per-seed
//! failures are recorded and the remaining seeds continue.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use syntrans_core::data::{read_split, Split, SplitSet, Task, TransformExample};
use syntrans_core::grammar::Grammar;
use syntrans_core::tokenizer::Tokenizer;
use syntrans_model::config::ArchConfig;
use syntrans_model::model::Model;
use syntrans_model::train::{self, TrainConfig};

use crate::evaluate::{evaluate_checkpoints, EvalResult};
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct PretrainJob {
    /// Short corpus label for the result rows ("simple-1000000", a stem of
    /// the corpus path, ...).
    pub label: String,
    pub corpus: Vec<String>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub arch: ArchConfig,
    pub task: Task,
    pub seeds: Vec<u64>,
    pub finetune: TrainConfig,
    pub pretrain: Option<PretrainJob>,
    /// Cap on evaluation examples per split (prefix), for CPU budgets.
    pub eval_limit: Option<usize>,
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub test: Option<EvalResult>,
    pub gen: Option<EvalResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSummary {
    pub split: Split,
    pub n_seeds: usize,
    pub seq_mean: f64,
    pub seq_std: f64,
    pub targeted_mean: f64,
    pub targeted_std: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub run_id: String,
    pub params: u64,
    pub pretrain_label: String,
    pub pretrain_words: usize,
    pub seed_outcomes: Vec<SeedOutcome>,
    pub summaries: Vec<SplitSummary>,
    pub results_csv: PathBuf,
    pub summary_csv: PathBuf,
}

impl ExperimentOutcome {
    pub fn summary_for(&self, split: Split) -> Option<&SplitSummary> {
        self.summaries.iter().find(|s| s.split == split)
    }
}

/// Sample mean and standard deviation (n-1 denominator; 0 when n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Loads the three splits of a dataset directory back into a `SplitSet`.
pub fn load_split_set(dir: &Path) -> Result<SplitSet, HarnessError> {
    let manifest = syntrans_core::data::read_manifest(dir)?;
    Ok(SplitSet {
        task: manifest.task,
        sizes: manifest.sizes,
        seed: manifest.seed,
        train: read_split(dir, Split::Train)?,
        test: read_split(dir, Split::Test)?,
        gen: read_split(dir, Split::Gen)?,
    })
}

fn limit<'a>(examples: &'a [TransformExample], cap: Option<usize>) -> &'a [TransformExample] {
    match cap {
        Some(n) => &examples[..n.min(examples.len())],
        None => examples,
    }
}

fn write_results_csv(
    path: &Path,
    cfg: &ExperimentConfig,
    params: u64,
    pretrain_label: &str,
    pretrain_words: usize,
    outcomes: &[SeedOutcome],
) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        f,
        "run_id,task,arch_fingerprint,params,pretrain_corpus,pretrain_words,seed,split,step,seq_acc,targeted_acc"
    )?;
    let fingerprint = cfg.arch.fingerprint();
    for outcome in outcomes {
        for result in [&outcome.test, &outcome.gen].into_iter().flatten() {
            for c in &result.per_checkpoint {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
                    cfg.run_id,
                    cfg.task,
                    fingerprint,
                    params,
                    pretrain_label,
                    pretrain_words,
                    outcome.seed,
                    result.split,
                    c.step,
                    c.sequence_acc,
                    c.targeted_acc
                )?;
            }
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},mean,{:.6},{:.6}",
                cfg.run_id,
                cfg.task,
                fingerprint,
                params,
                pretrain_label,
                pretrain_words,
                outcome.seed,
                result.split,
                result.sequence_mean,
                result.targeted_mean
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

fn write_summary_csv(
    path: &Path,
    cfg: &ExperimentConfig,
    params: u64,
    pretrain_label: &str,
    pretrain_words: usize,
    summaries: &[SplitSummary],
) -> Result<(), HarnessError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        f,
        "run_id,task,arch_fingerprint,params,pretrain_corpus,pretrain_words,split,n_seeds,seq_mean,seq_std,targeted_mean,targeted_std"
    )?;
    for s in summaries {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            cfg.run_id,
            cfg.task,
            cfg.arch.fingerprint(),
            params,
            pretrain_label,
            pretrain_words,
            s.split,
            s.n_seeds,
            s.seq_mean,
            s.seq_std,
            s.targeted_mean,
            s.targeted_std
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Runs the full experiment for one configuration. The model is pre-trained
/// at most once; each fine-tuning seed starts from the same pre-trained
/// weights (or a seed-specific fresh initialization for the from-scratch
/// baseline).
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &SplitSet,
    tokenizer: &Tokenizer,
    grammar: &Grammar,
) -> Result<ExperimentOutcome, HarnessError> {
    if data.task != cfg.task {
        return Err(HarnessError::Invalid(format!(
            "dataset task {} does not match experiment task {}",
            data.task, cfg.task
        )));
    }
    if cfg.seeds.is_empty() {
        return Err(HarnessError::Invalid("no fine-tuning seeds".into()));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let params = cfg.arch.count_params();

    let (pretrained, pretrain_label, pretrain_words) = match &cfg.pretrain {
        Some(job) => {
            let mut model = Model::<f32>::init(&cfg.arch, job.config.seed)?;
            train::pretrain(
                &mut model,
                &job.corpus,
                tokenizer,
                &job.config,
                &cfg.out_dir.join("pretrain"),
            )?;
            let words: usize = job.corpus.iter().map(|l| l.split_whitespace().count()).sum();
            (Some(model), job.label.clone(), words)
        }
        None => (None, "none".to_string(), 0),
    };

    let pairs: Vec<(String, String)> = data
        .train
        .iter()
        .map(|e| (e.source_text(), e.target_text()))
        .collect();

    let mut seed_outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let attempt = (|| -> Result<(EvalResult, EvalResult), HarnessError> {
            let mut model = match &pretrained {
                Some(m) => {
                    let mut fresh = m.clone();
                    fresh.step = 0;
                    fresh
                }
                None => Model::<f32>::init(&cfg.arch, seed)?,
            };
            let mut ft = cfg.finetune.clone();
            ft.seed = seed;
            let run_dir = cfg.out_dir.join(format!("seed_{seed}"));
            let outcome = train::finetune(&mut model, &pairs, tokenizer, &ft, &run_dir)?;
            let test = evaluate_checkpoints(
                &outcome.series,
                limit(&data.test, cfg.eval_limit),
                tokenizer,
                grammar,
                seed,
            )?;
            let gen = evaluate_checkpoints(
                &outcome.series,
                limit(&data.gen, cfg.eval_limit),
                tokenizer,
                grammar,
                seed,
            )?;
            Ok((test, gen))
        })();
        match attempt {
            Ok((test, gen)) => seed_outcomes.push(SeedOutcome {
                seed,
                test: Some(test),
                gen: Some(gen),
                error: None,
            }),
            Err(e) => seed_outcomes.push(SeedOutcome {
                seed,
                test: None,
                gen: None,
                error: Some(e.to_string()),
            }),
        }
    }

    let mut summaries = Vec::new();
    for split in [Split::Test, Split::Gen] {
        let results: Vec<&EvalResult> = seed_outcomes
            .iter()
            .filter_map(|o| match split {
                Split::Test => o.test.as_ref(),
                Split::Gen => o.gen.as_ref(),
                Split::Train => None,
            })
            .collect();
        if results.is_empty() {
            continue;
        }
        let (seq_mean, seq_std) =
            mean_std(&results.iter().map(|r| r.sequence_mean).collect::<Vec<_>>());
        let (targeted_mean, targeted_std) =
            mean_std(&results.iter().map(|r| r.targeted_mean).collect::<Vec<_>>());
        summaries.push(SplitSummary {
            split,
            n_seeds: results.len(),
            seq_mean,
            seq_std,
            targeted_mean,
            targeted_std,
        });
    }

    let results_csv = cfg.out_dir.join("results.csv");
    let summary_csv = cfg.out_dir.join("summary.csv");
    write_results_csv(
        &results_csv,
        cfg,
        params,
        &pretrain_label,
        pretrain_words,
        &seed_outcomes,
    )?;
    write_summary_csv(
        &summary_csv,
        cfg,
        params,
        &pretrain_label,
        pretrain_words,
        &summaries,
    )?;
    let failures: Vec<String> = seed_outcomes
        .iter()
        .filter_map(|o| o.error.as_ref().map(|e| format!("seed {}: {e}", o.seed)))
        .collect();
    if !failures.is_empty() {
        fs::write(cfg.out_dir.join("failures.txt"), failures.join("\n") + "\n")?;
    }

    Ok(ExperimentOutcome {
        run_id: cfg.run_id.clone(),
        params,
        pretrain_label,
        pretrain_words,
        seed_outcomes,
        summaries,
        results_csv,
        summary_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use syntrans_core::data::{build_transform_splits, SplitSizes};

    fn tiny_dataset(task: Task) -> SplitSet {
        let g = Grammar::default_grammar();
        build_transform_splits(
            task,
            &g,
            SplitSizes {
                n_train: 48,
                n_test: 8,
                n_gen: 8,
            },
            21,
        )
        .unwrap()
    }

    #[test]
    fn runs_two_seeds_and_writes_csvs() {
        let g = Grammar::default_grammar();
        let data = tiny_dataset(Task::Quest);
        let tok = Tokenizer::word_level(&g);
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            run_id: "unit".into(),
            arch: ArchConfig::new(1, 16, 32, 2, 8, tok.vocab_size()).with_max_len(48),
            task: Task::Quest,
            seeds: vec![1, 2],
            finetune: TrainConfig {
                steps: Some(4),
                epochs: None,
                checkpoint_every: 2,
                batch: 8,
                ..TrainConfig::desk_finetune()
            },
            pretrain: None,
            eval_limit: Some(4),
            out_dir: dir.path().join("run"),
        };
        let out = run_experiment(&cfg, &data, &tok, &g).unwrap();
        assert_eq!(out.seed_outcomes.len(), 2);
        assert!(out.seed_outcomes.iter().all(|o| o.error.is_none()));
        assert_eq!(out.summaries.len(), 2);
        let csv = fs::read_to_string(&out.results_csv).unwrap();
        // Two seeds x two splits x (2 checkpoints + mean row), plus header.
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 3);
        assert!(csv.contains("unit,quest"));
        let summary = fs::read_to_string(&out.summary_csv).unwrap();
        assert_eq!(summary.lines().count(), 3);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let g = Grammar::default_grammar();
        let data = tiny_dataset(Task::Passiv);
        let tok = Tokenizer::word_level(&g);
        let run = |dir: &Path| {
            let cfg = ExperimentConfig {
                run_id: "det".into(),
                arch: ArchConfig::new(1, 16, 32, 2, 8, tok.vocab_size()).with_max_len(48),
                task: Task::Passiv,
                seeds: vec![3],
                finetune: TrainConfig {
                    steps: Some(3),
                    epochs: None,
                    checkpoint_every: 3,
                    batch: 8,
                    ..TrainConfig::desk_finetune()
                },
                pretrain: None,
                eval_limit: Some(4),
                out_dir: dir.to_path_buf(),
            };
            let out = run_experiment(&cfg, &data, &tok, &g).unwrap();
            fs::read_to_string(&out.results_csv).unwrap()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        assert_eq!(run(d1.path()), run(d2.path()));
    }

    #[test]
    fn mismatched_task_is_rejected() {
        let g = Grammar::default_grammar();
        let data = tiny_dataset(Task::Quest);
        let tok = Tokenizer::word_level(&g);
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            run_id: "bad".into(),
            arch: ArchConfig::new(1, 16, 32, 2, 8, tok.vocab_size()),
            task: Task::Passiv,
            seeds: vec![1],
            finetune: TrainConfig::desk_finetune(),
            pretrain: None,
            eval_limit: None,
            out_dir: dir.path().to_path_buf(),
        };
        assert!(run_experiment(&cfg, &data, &tok, &g).is_err());
    }

    #[test]
    fn mean_std_matches_hand_computation() {
        let (m, s) = mean_std(&[0.2, 0.4, 0.6]);
        assert!((m - 0.4).abs() < 1e-12);
        assert!((s - 0.2).abs() < 1e-12);
        let (m, s) = mean_std(&[0.7]);
        assert_eq!((m, s), (0.7, 0.0));
    }
}
