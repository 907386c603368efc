//! Greedy-decodes every example at every checkpoint and aggregates the
//! metrics, including the checkpoint-mean values that serve as the headline
//! numbers.

use rayon::prelude::*;
use serde::Serialize;

use syntrans_core::data::{Split, Task, TransformExample};
use syntrans_core::grammar::Grammar;
use syntrans_core::tokenizer::Tokenizer;
use syntrans_model::checkpoint::CheckpointSeries;
use syntrans_model::decode::greedy_decode;
use syntrans_model::model::{Model, EOS};

use crate::metrics;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckpointEval {
    pub step: u64,
    pub sequence_acc: f64,
    /// Main-auxiliary accuracy for question formation, object accuracy for
    /// passivization.
    pub targeted_acc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub task: Task,
    pub split: Split,
    pub seed: u64,
    pub per_checkpoint: Vec<CheckpointEval>,
    pub sequence_mean: f64,
    pub targeted_mean: f64,
}

impl EvalResult {
    fn from_checkpoints(task: Task, split: Split, seed: u64, per: Vec<CheckpointEval>) -> Self {
        let n = per.len().max(1) as f64;
        let sequence_mean = per.iter().map(|c| c.sequence_acc).sum::<f64>() / n;
        let targeted_mean = per.iter().map(|c| c.targeted_acc).sum::<f64>() / n;
        EvalResult {
            task,
            split,
            seed,
            per_checkpoint: per,
            sequence_mean,
            targeted_mean,
        }
    }
}

/// Decodes one example set with a model: encode source, greedy-decode, and
/// split the decoded text back into words. The decode budget is the source
/// length plus a small margin, capped by the model's window.
pub fn decode_predictions(
    model: &Model<f32>,
    tokenizer: &Tokenizer,
    examples: &[TransformExample],
) -> Result<Vec<Vec<String>>, HarnessError> {
    examples
        .par_iter()
        .map(|ex| {
            let mut src = tokenizer.encode(&ex.source_text())?;
            src.push(EOS);
            let budget = (src.len() + 8).min(model.config.max_len);
            let ids = greedy_decode(model, &src, budget)?;
            let text = tokenizer.decode(&ids)?;
            Ok(text.split_whitespace().map(str::to_string).collect())
        })
        .collect()
}

pub fn score(
    predictions: &[Vec<String>],
    examples: &[TransformExample],
    task: Task,
    grammar: &Grammar,
) -> Result<(f64, f64), HarnessError> {
    let references: Vec<Vec<String>> = examples.iter().map(|e| e.target.clone()).collect();
    let seq = metrics::sequence_accuracy(predictions, &references)?;
    let targeted = match task {
        Task::Quest => metrics::main_aux_accuracy(predictions, examples, grammar)?,
        Task::Passiv => metrics::object_accuracy(predictions, examples, grammar)?,
    };
    Ok((seq, targeted))
}

/// Evaluates every checkpoint of a series on one example set.
pub fn evaluate_checkpoints(
    series: &CheckpointSeries,
    examples: &[TransformExample],
    tokenizer: &Tokenizer,
    grammar: &Grammar,
    seed: u64,
) -> Result<EvalResult, HarnessError> {
    if series.steps.is_empty() {
        return Err(HarnessError::EmptySeries);
    }
    if examples.is_empty() {
        return Err(HarnessError::Invalid("empty evaluation set".into()));
    }
    let task = examples[0].task;
    let split = examples[0].split;
    let mut per = Vec::with_capacity(series.steps.len());
    for &step in &series.steps {
        let model = series.load_step(step)?;
        let predictions = decode_predictions(&model, tokenizer, examples)?;
        let (sequence_acc, targeted_acc) = score(&predictions, examples, task, grammar)?;
        per.push(CheckpointEval {
            step,
            sequence_acc,
            targeted_acc,
        });
    }
    Ok(EvalResult::from_checkpoints(task, split, seed, per))
}

#[cfg(test)]
mod tests {
    use super::*;
    use syntrans_core::data::{build_transform_splits, SplitSizes};
    use syntrans_model::checkpoint;
    use syntrans_model::config::ArchConfig;

    #[test]
    fn empty_series_is_an_error() {
        let g = Grammar::default_grammar();
        let set = build_transform_splits(
            Task::Quest,
            &g,
            SplitSizes {
                n_train: 2,
                n_test: 2,
                n_gen: 2,
            },
            1,
        )
        .unwrap();
        let tok = Tokenizer::word_level(&g);
        let dir = tempfile::tempdir().unwrap();
        let series = CheckpointSeries {
            dir: dir.path().to_path_buf(),
            steps: vec![],
        };
        assert!(matches!(
            evaluate_checkpoints(&series, &set.test, &tok, &g, 0),
            Err(HarnessError::EmptySeries)
        ));
    }

    #[test]
    fn single_checkpoint_mean_equals_that_checkpoint_and_is_order_invariant() {
        let g = Grammar::default_grammar();
        let set = build_transform_splits(
            Task::Quest,
            &g,
            SplitSizes {
                n_train: 2,
                n_test: 6,
                n_gen: 2,
            },
            2,
        )
        .unwrap();
        let tok = Tokenizer::word_level(&g);
        let cfg = ArchConfig::desk(tok.vocab_size()).with_max_len(64);
        let model = Model::<f32>::init(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        checkpoint::save(&model, &CheckpointSeries::path_for(dir.path(), 0)).unwrap();
        let series = CheckpointSeries::discover(dir.path()).unwrap();

        let r = evaluate_checkpoints(&series, &set.test, &tok, &g, 7).unwrap();
        assert_eq!(r.per_checkpoint.len(), 1);
        assert_eq!(r.sequence_mean, r.per_checkpoint[0].sequence_acc);
        assert_eq!(r.targeted_mean, r.per_checkpoint[0].targeted_acc);

        let mut reversed = set.test.clone();
        reversed.reverse();
        let r2 = evaluate_checkpoints(&series, &reversed, &tok, &g, 7).unwrap();
        assert_eq!(r.sequence_mean, r2.sequence_mean);
        assert_eq!(r.targeted_mean, r2.targeted_mean);
    }

    #[test]
    fn two_checkpoint_mean_is_the_arithmetic_mean() {
        let per = vec![
            CheckpointEval {
                step: 500,
                sequence_acc: 0.4,
                targeted_acc: 0.2,
            },
            CheckpointEval {
                step: 1000,
                sequence_acc: 0.6,
                targeted_acc: 0.8,
            },
        ];
        let r = EvalResult::from_checkpoints(Task::Quest, Split::Gen, 0, per);
        assert!((r.sequence_mean - 0.5).abs() < 1e-12);
        assert!((r.targeted_mean - 0.5).abs() < 1e-12);
    }
}
