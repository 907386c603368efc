//! Dataset assembly: fine-tuning splits over the transformation tasks and
//! pre-training corpora (synthetic registers, subsamples, concatenations).
//!
//! File formats: examples are TSV (`source<TAB>target`, tokens
//! space-separated) with a JSON-Lines metadata sidecar; corpora are UTF-8,
//! one sentence per line.

mod corpus;
mod splits;

pub use corpus::{
    concat_corpora, corpus_stats, read_corpus, subsample_nested, synth_corpus, write_corpus,
    CorpusSpec, CorpusStats, Register,
};
pub use splits::{build_transform_splits, SplitSet, SplitSizes};

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, GrammarError, Modifier};
use crate::transform::{replay, TransformError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("grammar too small: produced {produced} distinct {split} examples of {requested}")]
    Capacity {
        split: Split,
        produced: usize,
        requested: usize,
    },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("bad corpus spec: {0}")]
    BadSpec(String),
    #[error("malformed dataset file {file}: {reason}")]
    Malformed { file: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Quest,
    Passiv,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Quest => "quest",
            Task::Passiv => "passiv",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quest" => Ok(Task::Quest),
            "passiv" => Ok(Task::Passiv),
            other => Err(format!("unknown task '{other}' (expected quest|passiv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Gen,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Gen];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Gen => "gen",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "gen" => Ok(Split::Gen),
            other => Err(format!("unknown split '{other}' (expected train|test|gen)")),
        }
    }
}

/// Positional ground truth recorded when an example is generated; enough to
/// audit the ambiguity invariants without re-deriving trees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    /// Main-clause auxiliary position (question formation).
    pub main_aux_idx: Option<usize>,
    /// Linearly first auxiliary position (question formation).
    pub first_aux_idx: Option<usize>,
    /// Object head-noun position (passivization).
    pub object_idx: Option<usize>,
    /// Position of the linearly second noun, the MOVE-SECOND target
    /// (passivization).
    pub nth_noun_idx: Option<usize>,
    pub subject_modifier: Modifier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformExample {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub task: Task,
    pub split: Split,
    pub meta: ExampleMeta,
}

impl TransformExample {
    pub fn source_text(&self) -> String {
        self.source.join(" ")
    }

    pub fn target_text(&self) -> String {
        self.target.join(" ")
    }

    /// Checks the per-example invariants: the target is the hierarchical
    /// transform of the source, and ambiguity matches the split.
    pub fn validate(&self, grammar: &Grammar) -> Result<(), DataError> {
        let fail = |reason: String| Err(DataError::Invariant(reason));
        match self.task {
            Task::Quest => {
                let main = self
                    .meta
                    .main_aux_idx
                    .ok_or_else(|| DataError::Invariant("quest example without main_aux_idx".into()))?;
                let first = self
                    .meta
                    .first_aux_idx
                    .ok_or_else(|| DataError::Invariant("quest example without first_aux_idx".into()))?;
                if grammar.first_aux_index(&self.source)? != first {
                    return fail(format!("first_aux_idx mismatch in '{}'", self.source_text()));
                }
                let expect = replay::move_main_from_meta(&self.source, main)?;
                if expect != self.target {
                    return fail(format!(
                        "target is not the hierarchical transform of '{}'",
                        self.source_text()
                    ));
                }
                let auxes = grammar.aux_indices(&self.source);
                match self.split {
                    Split::Train | Split::Test => {
                        if main != first {
                            return fail(format!("ambiguity broken in '{}'", self.source_text()));
                        }
                    }
                    Split::Gen => {
                        if auxes.len() < 2 || main != auxes[1] || main == first {
                            return fail(format!(
                                "generalization example not disambiguating: '{}'",
                                self.source_text()
                            ));
                        }
                        // The distractor must differ in surface form too,
                        // otherwise the linear rule's output starts with the
                        // right word by accident.
                        if self.source[main] == self.source[first] {
                            return fail(format!(
                                "distractor auxiliary shares the main surface in '{}'",
                                self.source_text()
                            ));
                        }
                    }
                }
            }
            Task::Passiv => {
                let object = self
                    .meta
                    .object_idx
                    .ok_or_else(|| DataError::Invariant("passiv example without object_idx".into()))?;
                let second = self
                    .meta
                    .nth_noun_idx
                    .ok_or_else(|| DataError::Invariant("passiv example without nth_noun_idx".into()))?;
                if grammar.nth_noun_index(&self.source, 2)? != second {
                    return fail(format!("nth_noun_idx mismatch in '{}'", self.source_text()));
                }
                let expect = replay::passivize_main_from_meta(&self.source, object, grammar)?;
                if expect != self.target {
                    return fail(format!(
                        "target is not the hierarchical transform of '{}'",
                        self.source_text()
                    ));
                }
                match self.split {
                    Split::Train | Split::Test => {
                        if object != second {
                            return fail(format!("ambiguity broken in '{}'", self.source_text()));
                        }
                    }
                    Split::Gen => {
                        let third = grammar.nth_noun_index(&self.source, 3)?;
                        if object != third || object == second {
                            return fail(format!(
                                "generalization example not disambiguating: '{}'",
                                self.source_text()
                            ));
                        }
                        if self.source[object] == self.source[second] {
                            return fail(format!(
                                "distractor noun shares the object surface in '{}'",
                                self.source_text()
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Dataset directory descriptor, written alongside the split files so runs
/// are reproducible from the snapshot alone.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetManifest {
    pub task: Task,
    pub sizes: SplitSizes,
    pub seed: u64,
}

pub fn split_file(dir: &Path, split: Split) -> std::path::PathBuf {
    dir.join(format!("{split}.tsv"))
}

pub fn meta_file(dir: &Path, split: Split) -> std::path::PathBuf {
    dir.join(format!("{split}.meta.jsonl"))
}

/// Writes the three split files, their metadata sidecars, and the manifest.
pub fn write_splits(dir: &Path, set: &SplitSet) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    for (split, examples) in set.iter() {
        let mut tsv = fs::File::create(split_file(dir, split))?;
        let mut meta = fs::File::create(meta_file(dir, split))?;
        for ex in examples {
            writeln!(tsv, "{}\t{}", ex.source_text(), ex.target_text())?;
            writeln!(meta, "{}", serde_json::to_string(&ex.meta)?)?;
        }
    }
    let manifest = DatasetManifest {
        task: set.task,
        sizes: set.sizes,
        seed: set.seed,
    };
    fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DataError> {
    let raw = fs::read_to_string(dir.join("dataset.json"))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Reads one split back, rejoining the TSV rows with their metadata lines.
pub fn read_split(dir: &Path, split: Split) -> Result<Vec<TransformExample>, DataError> {
    let manifest = read_manifest(dir)?;
    let tsv_path = split_file(dir, split);
    let tsv = BufReader::new(fs::File::open(&tsv_path)?);
    let meta = BufReader::new(fs::File::open(meta_file(dir, split))?);
    let mut out = Vec::new();
    for (lineno, (row, meta_line)) in tsv.lines().zip(meta.lines()).enumerate() {
        let row = row?;
        let meta_line = meta_line?;
        let (src, tgt) = row.split_once('\t').ok_or_else(|| DataError::Malformed {
            file: tsv_path.display().to_string(),
            reason: format!("line {} has no tab", lineno + 1),
        })?;
        let meta: ExampleMeta = serde_json::from_str(&meta_line)?;
        out.push(TransformExample {
            source: src.split_whitespace().map(str::to_string).collect(),
            target: tgt.split_whitespace().map(str::to_string).collect(),
            task: manifest.task,
            split,
            meta,
        });
    }
    Ok(out)
}
