//! The three output metrics: exact sequence match, main-auxiliary accuracy
//! (first output word is the gold main auxiliary), and object accuracy (the
//! head noun of the output's initial NP is the gold object). Predictions
//! are compared at the word level, after any tokenizer decoding.

use syntrans_core::data::TransformExample;
use syntrans_core::grammar::Grammar;

use crate::HarnessError;

pub fn sequence_accuracy(
    predictions: &[Vec<String>],
    references: &[Vec<String>],
) -> Result<f64, HarnessError> {
    if predictions.len() != references.len() {
        return Err(HarnessError::LengthMismatch(predictions.len(), references.len()));
    }
    if predictions.is_empty() {
        return Err(HarnessError::Invalid("no examples to score".into()));
    }
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| p == r)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Fraction of predictions whose first word is the source's main auxiliary.
pub fn main_aux_accuracy(
    predictions: &[Vec<String>],
    examples: &[TransformExample],
    _grammar: &Grammar,
) -> Result<f64, HarnessError> {
    if predictions.len() != examples.len() {
        return Err(HarnessError::LengthMismatch(predictions.len(), examples.len()));
    }
    if predictions.is_empty() {
        return Err(HarnessError::Invalid("no examples to score".into()));
    }
    let mut hits = 0usize;
    for (pred, ex) in predictions.iter().zip(examples) {
        let idx = ex
            .meta
            .main_aux_idx
            .ok_or(HarnessError::MissingMeta("main_aux_idx"))?;
        let gold = &ex.source[idx];
        if pred.first() == Some(gold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

/// Fraction of predictions whose initial NP is headed by the gold object.
/// The scan walks the output until the first noun; hitting a verbal token
/// (or the end) first scores zero for that example.
pub fn object_accuracy(
    predictions: &[Vec<String>],
    examples: &[TransformExample],
    grammar: &Grammar,
) -> Result<f64, HarnessError> {
    if predictions.len() != examples.len() {
        return Err(HarnessError::LengthMismatch(predictions.len(), examples.len()));
    }
    if predictions.is_empty() {
        return Err(HarnessError::Invalid("no examples to score".into()));
    }
    let lex = grammar.lexicon();
    let mut hits = 0usize;
    for (pred, ex) in predictions.iter().zip(examples) {
        let idx = ex.meta.object_idx.ok_or(HarnessError::MissingMeta("object_idx"))?;
        let gold = ex.source[idx].to_lowercase();
        for word in pred {
            let w = word.to_lowercase();
            if lex.is_noun(&w) {
                if w == gold {
                    hits += 1;
                }
                break;
            }
            if lex.is_verbal(&w) || lex.is_auxiliary(&w) {
                break;
            }
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use syntrans_core::data::{build_transform_splits, SplitSizes, Task};
    use syntrans_core::transform::{move_first_question, passivize_second};

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn sequence_accuracy_counts_exact_matches_only() {
        let refs = vec![words("a b c"), words("d e")];
        assert_eq!(sequence_accuracy(&refs, &refs).unwrap(), 1.0);
        let preds = vec![words("a b c"), words("d e f")];
        assert_eq!(sequence_accuracy(&preds, &refs).unwrap(), 0.5);
        let off = vec![words("a b"), words("d")];
        assert_eq!(sequence_accuracy(&off, &refs).unwrap(), 0.0);
        assert!(sequence_accuracy(&refs[..1].to_vec(), &refs).is_err());
    }

    fn small_split(task: Task) -> syntrans_core::data::SplitSet {
        let g = Grammar::default_grammar();
        build_transform_splits(
            task,
            &g,
            SplitSizes {
                n_train: 30,
                n_test: 20,
                n_gen: 40,
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn main_aux_ignores_everything_after_the_first_word() {
        let g = Grammar::default_grammar();
        let set = small_split(Task::Quest);
        let ex = &set.gen[0];
        let gold = ex.source[ex.meta.main_aux_idx.unwrap()].clone();
        let mut garbled = vec![gold];
        garbled.extend(words("complete nonsense every token wrong"));
        let acc = main_aux_accuracy(&[garbled], &set.gen[..1], &g).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn oracles_separate_on_the_generalization_split() {
        let g = Grammar::default_grammar();
        let quest = small_split(Task::Quest);
        // Hierarchical targets score 1.0 on both metrics.
        let targets: Vec<Vec<String>> = quest.gen.iter().map(|e| e.target.clone()).collect();
        assert_eq!(main_aux_accuracy(&targets, &quest.gen, &g).unwrap(), 1.0);
        // MOVE-FIRST scores exactly 0.0 main-aux accuracy on gen.
        let move_first: Vec<Vec<String>> = quest
            .gen
            .iter()
            .map(|e| move_first_question(&e.source, &g).unwrap())
            .collect();
        assert_eq!(main_aux_accuracy(&move_first, &quest.gen, &g).unwrap(), 0.0);
        // And 1.0 on the ambiguous train split.
        let train_first: Vec<Vec<String>> = quest
            .train
            .iter()
            .map(|e| move_first_question(&e.source, &g).unwrap())
            .collect();
        assert_eq!(main_aux_accuracy(&train_first, &quest.train, &g).unwrap(), 1.0);

        let passiv = small_split(Task::Passiv);
        let targets: Vec<Vec<String>> = passiv.gen.iter().map(|e| e.target.clone()).collect();
        assert_eq!(object_accuracy(&targets, &passiv.gen, &g).unwrap(), 1.0);
        let move_second: Vec<Vec<String>> = passiv
            .gen
            .iter()
            .map(|e| passivize_second(&e.source, &g).unwrap())
            .collect();
        assert_eq!(object_accuracy(&move_second, &passiv.gen, &g).unwrap(), 0.0);
    }

    #[test]
    fn object_scan_fails_without_a_noun_before_the_verb() {
        let g = Grammar::default_grammar();
        let set = small_split(Task::Passiv);
        let pred = words("the observed by the raven .");
        let acc = object_accuracy(&[pred], &set.gen[..1], &g).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn targeted_metrics_bound_sequence_accuracy() {
        let g = Grammar::default_grammar();
        let set = small_split(Task::Quest);
        // Half the predictions exact, half only main-aux correct.
        let preds: Vec<Vec<String>> = set
            .gen
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if i % 2 == 0 {
                    e.target.clone()
                } else {
                    let mut p = e.target.clone();
                    let last = p.len() - 2;
                    p[last] = "raven".to_string();
                    p
                }
            })
            .collect();
        let refs: Vec<Vec<String>> = set.gen.iter().map(|e| e.target.clone()).collect();
        let seq = sequence_accuracy(&preds, &refs).unwrap();
        let aux = main_aux_accuracy(&preds, &set.gen, &g).unwrap();
        assert!(aux >= seq);
        assert_eq!(aux, 1.0);
        assert_eq!(seq, 0.5);
    }
}
