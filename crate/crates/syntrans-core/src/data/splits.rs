//! Builds the ambiguous train/test splits and the disambiguating
//! generalization split for one transformation task.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{Grammar, Modifier, PredicateStyle, SampleOpts};
use crate::transform::{move_main_question, passivize_main};

use super::{DataError, ExampleMeta, Split, Task, TransformExample};

/// Probability that a train/test sentence carries an object modifier
/// (an RC for question formation, a PP for passivization). Keeps the
/// ambiguous distribution varied without touching the subject.
const OBJECT_MODIFIER_PROB: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub n_train: usize,
    pub n_test: usize,
    pub n_gen: usize,
}

impl SplitSizes {
    /// Desk-scale defaults; `paper_scale` reaches the full published sizes.
    pub fn desk() -> Self {
        SplitSizes {
            n_train: 10_000,
            n_test: 1_000,
            n_gen: 1_000,
        }
    }

    pub fn paper_scale() -> Self {
        SplitSizes {
            n_train: 100_000,
            n_test: 10_000,
            n_gen: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitSet {
    pub task: Task,
    pub sizes: SplitSizes,
    pub seed: u64,
    pub train: Vec<TransformExample>,
    pub test: Vec<TransformExample>,
    pub gen: Vec<TransformExample>,
}

impl SplitSet {
    pub fn iter(&self) -> impl Iterator<Item = (Split, &[TransformExample])> {
        [
            (Split::Train, self.train.as_slice()),
            (Split::Test, self.test.as_slice()),
            (Split::Gen, self.gen.as_slice()),
        ]
        .into_iter()
    }

    pub fn get(&self, split: Split) -> &[TransformExample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::Gen => &self.gen,
        }
    }
}

fn sample_opts(task: Task, split: Split, rng: &mut ChaCha8Rng) -> SampleOpts {
    let ambiguous = !matches!(split, Split::Gen);
    match task {
        Task::Quest => SampleOpts {
            subject_modifier: if ambiguous { Modifier::None } else { Modifier::Rc },
            object_modifier: if ambiguous && rng.gen_bool(OBJECT_MODIFIER_PROB) {
                Modifier::Rc
            } else {
                Modifier::None
            },
            require_transitive: false,
            predicate: PredicateStyle::Auxiliated,
        },
        Task::Passiv => SampleOpts {
            subject_modifier: if ambiguous { Modifier::None } else { Modifier::Pp },
            object_modifier: if ambiguous && rng.gen_bool(OBJECT_MODIFIER_PROB) {
                Modifier::Pp
            } else {
                Modifier::None
            },
            require_transitive: true,
            predicate: PredicateStyle::SimplePast,
        },
    }
}

fn make_example(
    task: Task,
    split: Split,
    grammar: &Grammar,
    rng: &mut ChaCha8Rng,
) -> Result<TransformExample, DataError> {
    let opts = sample_opts(task, split, rng);
    let tree = grammar.sample_with_rng(rng, &opts)?;
    let source = tree.tokens();
    let (target, meta) = match task {
        Task::Quest => {
            let target = move_main_question(&tree)?;
            let meta = ExampleMeta {
                main_aux_idx: Some(tree.main_aux_index()?),
                first_aux_idx: Some(grammar.first_aux_index(&source)?),
                object_idx: None,
                nth_noun_idx: None,
                subject_modifier: opts.subject_modifier,
            };
            (target, meta)
        }
        Task::Passiv => {
            let target = passivize_main(&tree, grammar)?;
            let meta = ExampleMeta {
                main_aux_idx: None,
                first_aux_idx: None,
                object_idx: Some(tree.object_index()?),
                nth_noun_idx: Some(grammar.nth_noun_index(&source, 2)?),
                subject_modifier: opts.subject_modifier,
            };
            (target, meta)
        }
    };
    Ok(TransformExample {
        source,
        target,
        task,
        split,
        meta,
    })
}

/// A generalization example only disambiguates at the metric level when the
/// linear rule's pick differs from the correct one in surface form, not
/// just in position.
fn gen_surfaces_collide(ex: &TransformExample) -> bool {
    match ex.task {
        Task::Quest => match (ex.meta.main_aux_idx, ex.meta.first_aux_idx) {
            (Some(m), Some(f)) => ex.source[m] == ex.source[f],
            _ => false,
        },
        Task::Passiv => match (ex.meta.object_idx, ex.meta.nth_noun_idx) {
            (Some(o), Some(s)) => ex.source[o] == ex.source[s],
            _ => false,
        },
    }
}

/// Generates deduplicated splits. Train and test are drawn from the same
/// ambiguous distribution and share no source; the generalization split is
/// drawn from the subject-modified distribution. Deterministic per seed.
pub fn build_transform_splits(
    task: Task,
    grammar: &Grammar,
    sizes: SplitSizes,
    seed: u64,
) -> Result<SplitSet, DataError> {
    if sizes.n_train == 0 || sizes.n_test == 0 || sizes.n_gen == 0 {
        return Err(DataError::BadSpec("split sizes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = SplitSet {
        task,
        sizes,
        seed,
        train: Vec::with_capacity(sizes.n_train),
        test: Vec::with_capacity(sizes.n_test),
        gen: Vec::with_capacity(sizes.n_gen),
    };
    for split in Split::ALL {
        let n = match split {
            Split::Train => sizes.n_train,
            Split::Test => sizes.n_test,
            Split::Gen => sizes.n_gen,
        };
        let budget = n.saturating_mul(100) + 1_000;
        let mut attempts = 0usize;
        let bucket = match split {
            Split::Train => &mut out.train,
            Split::Test => &mut out.test,
            Split::Gen => &mut out.gen,
        };
        while bucket.len() < n {
            attempts += 1;
            if attempts > budget {
                return Err(DataError::Capacity {
                    split,
                    produced: bucket.len(),
                    requested: n,
                });
            }
            let ex = make_example(task, split, grammar, &mut rng)?;
            if split == Split::Gen && gen_surfaces_collide(&ex) {
                continue;
            }
            if !seen.insert(ex.source_text()) {
                continue;
            }
            ex.validate(grammar)?;
            bucket.push(ex);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_split, write_splits};
    use crate::grammar::{AuxAgreement, Lexicon, LexiconEntry, Number};

    fn small_sizes() -> SplitSizes {
        SplitSizes {
            n_train: 200,
            n_test: 50,
            n_gen: 50,
        }
    }

    #[test]
    fn quest_splits_hold_their_invariants() {
        let g = Grammar::default_grammar();
        let set = build_transform_splits(Task::Quest, &g, small_sizes(), 7).unwrap();
        for (split, examples) in set.iter() {
            for ex in examples {
                ex.validate(&g).unwrap();
                assert_eq!(ex.split, split);
            }
        }
        // Every gen example fronts the second auxiliary.
        for ex in &set.gen {
            let auxes = g.aux_indices(&ex.source);
            assert_eq!(ex.meta.main_aux_idx, Some(auxes[1]));
        }
    }

    #[test]
    fn passiv_splits_hold_their_invariants() {
        let g = Grammar::default_grammar();
        let set = build_transform_splits(Task::Passiv, &g, small_sizes(), 7).unwrap();
        for (_, examples) in set.iter() {
            for ex in examples {
                ex.validate(&g).unwrap();
            }
        }
        for ex in &set.gen {
            let third = g.nth_noun_index(&ex.source, 3).unwrap();
            assert_eq!(ex.meta.object_idx, Some(third));
            // The target fronts the third noun's NP.
            assert_eq!(ex.target[1], ex.source[third]);
        }
    }

    #[test]
    fn same_seed_is_byte_identical_and_distinct_seeds_differ() {
        let g = Grammar::default_grammar();
        let a = build_transform_splits(Task::Quest, &g, small_sizes(), 11).unwrap();
        let b = build_transform_splits(Task::Quest, &g, small_sizes(), 11).unwrap();
        let render = |s: &SplitSet| {
            s.iter()
                .flat_map(|(_, ex)| ex.iter().map(|e| format!("{}\t{}", e.source_text(), e.target_text())))
                .collect::<Vec<_>>()
        };
        assert_eq!(render(&a), render(&b));
        let c = build_transform_splits(Task::Quest, &g, small_sizes(), 12).unwrap();
        assert_ne!(render(&a), render(&c));
    }

    #[test]
    fn sources_are_deduplicated_across_splits() {
        let g = Grammar::default_grammar();
        let set = build_transform_splits(Task::Passiv, &g, small_sizes(), 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for (_, examples) in set.iter() {
            for ex in examples {
                assert!(seen.insert(ex.source_text()), "duplicate: {}", ex.source_text());
            }
        }
    }

    #[test]
    fn tiny_lexicon_hits_the_capacity_error() {
        let entries = vec![
            LexiconEntry::noun("raven", Number::Sg),
            LexiconEntry::noun("newts", Number::Pl),
            LexiconEntry::verb_trans("observe", "observed"),
            LexiconEntry::auxiliary("does", AuxAgreement::Sg),
            LexiconEntry::auxiliary("do", AuxAgreement::Pl),
            LexiconEntry::determiner("the"),
            LexiconEntry::preposition("near"),
            LexiconEntry::relativizer("that"),
        ];
        let g = Grammar::with_lexicon(Lexicon::new(entries).unwrap());
        let sizes = SplitSizes {
            n_train: 10_000,
            n_test: 10,
            n_gen: 10,
        };
        assert!(matches!(
            build_transform_splits(Task::Quest, &g, sizes, 1),
            Err(DataError::Capacity { split: Split::Train, .. })
        ));
    }

    #[test]
    fn round_trips_through_files() {
        let g = Grammar::default_grammar();
        let set = build_transform_splits(Task::Quest, &g, small_sizes(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_splits(dir.path(), &set).unwrap();
        for split in Split::ALL {
            let back = read_split(dir.path(), split).unwrap();
            assert_eq!(back, set.get(split));
        }
    }
}
