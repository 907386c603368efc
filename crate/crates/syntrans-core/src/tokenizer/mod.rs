//! Word-level and byte-pair subword tokenizers behind one interface.
//!
//! Id layout is shared by both modes: `pad=0, eos=1, unk=2`, then a
//! contiguous sentinel block `3..3+K`, then content tokens. `vocab_size`
//! counts the specials. Text is treated as whitespace-normalized (single
//! spaces); within that alphabet `decode(encode(s)) == s` exactly.

mod bpe;

pub use bpe::BpeTokenizer;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::grammar::Grammar;

pub const PAD_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
const N_SPECIAL: usize = 3;

pub const DEFAULT_SENTINELS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum TokenizerError {
    #[error("word '{0}' is not in the vocabulary")]
    UnknownWord(String),
    #[error("id {0} is outside the vocabulary")]
    UnknownId(u32),
    #[error("sentinel {0} is outside the configured block")]
    SentinelOutOfRange(usize),
    #[error("vocab size {budget} cannot hold the {base} base symbols")]
    VocabTooSmall { budget: usize, base: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("bad tokenizer file: {0}")]
    BadFile(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TokenizerError {
    fn from(e: std::io::Error) -> Self {
        TokenizerError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerMode {
    Word,
    Subword,
}

#[derive(Debug, Clone, Copy)]
pub struct TokenizerConfig {
    pub mode: TokenizerMode,
    /// Maximum vocabulary size including specials (subword mode). The paper
    /// grid uses 8192 and 32768.
    pub vocab_size: usize,
    pub n_sentinels: usize,
}

impl TokenizerConfig {
    pub fn subword(vocab_size: usize) -> Self {
        TokenizerConfig {
            mode: TokenizerMode::Subword,
            vocab_size,
            n_sentinels: DEFAULT_SENTINELS,
        }
    }

    pub fn word() -> Self {
        TokenizerConfig {
            mode: TokenizerMode::Word,
            vocab_size: 0, // derived from the lexicon
            n_sentinels: DEFAULT_SENTINELS,
        }
    }
}

/// Number of ids reserved ahead of content tokens.
pub fn first_content_id(n_sentinels: usize) -> u32 {
    (N_SPECIAL + n_sentinels) as u32
}

/// Closed word-level vocabulary for the transformation tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTokenizer {
    n_sentinels: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl WordTokenizer {
    pub fn from_words<I: IntoIterator<Item = String>>(words: I, n_sentinels: usize) -> Self {
        let mut words: Vec<String> = words.into_iter().collect();
        words.sort();
        words.dedup();
        let base = first_content_id(n_sentinels);
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), base + i as u32))
            .collect();
        WordTokenizer {
            n_sentinels,
            words,
            index,
        }
    }

    /// Vocabulary over every surface the grammar can emit, plus the two
    /// terminators.
    pub fn from_grammar(grammar: &Grammar, n_sentinels: usize) -> Self {
        let words = grammar
            .lexicon()
            .all_surfaces()
            .map(str::to_string)
            .chain([".".to_string(), "?".to_string()]);
        Self::from_words(words, n_sentinels)
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        text.split_whitespace()
            .map(|w| {
                self.index
                    .get(w)
                    .copied()
                    .ok_or_else(|| TokenizerError::UnknownWord(w.to_string()))
            })
            .collect()
    }

    fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let base = first_content_id(self.n_sentinels);
        let mut parts: Vec<String> = Vec::new();
        for &id in ids {
            if id == PAD_ID || id == EOS_ID {
                continue;
            }
            if id == UNK_ID {
                parts.push("<unk>".to_string());
            } else if id < base {
                parts.push(format!("<sent_{}>", id - N_SPECIAL as u32));
            } else {
                let word = self
                    .words
                    .get((id - base) as usize)
                    .ok_or(TokenizerError::UnknownId(id))?;
                parts.push(word.clone());
            }
        }
        Ok(parts.join(" "))
    }

    pub fn vocab_size(&self) -> usize {
        first_content_id(self.n_sentinels) as usize + self.words.len()
    }
}

/// The two tokenizer modes behind one dispatch point.
#[derive(Debug, Clone, PartialEq)]
pub enum Tokenizer {
    Word(WordTokenizer),
    Subword(BpeTokenizer),
}

impl Tokenizer {
    pub fn word_level(grammar: &Grammar) -> Self {
        Tokenizer::Word(WordTokenizer::from_grammar(grammar, DEFAULT_SENTINELS))
    }

    /// Trains the subword tokenizer on a corpus; see [`BpeTokenizer::train`].
    pub fn train_subword(lines: &[String], config: &TokenizerConfig) -> Result<Self, TokenizerError> {
        Ok(Tokenizer::Subword(BpeTokenizer::train(lines, config)?))
    }

    pub fn mode(&self) -> TokenizerMode {
        match self {
            Tokenizer::Word(_) => TokenizerMode::Word,
            Tokenizer::Subword(_) => TokenizerMode::Subword,
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        match self {
            Tokenizer::Word(w) => w.encode(text),
            Tokenizer::Subword(b) => b.encode(text),
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        match self {
            Tokenizer::Word(w) => w.decode(ids),
            Tokenizer::Subword(b) => b.decode(ids),
        }
    }

    /// Effective vocabulary size: specials plus content tokens actually
    /// present.
    pub fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Word(w) => w.vocab_size(),
            Tokenizer::Subword(b) => b.vocab_size(),
        }
    }

    pub fn n_sentinels(&self) -> usize {
        match self {
            Tokenizer::Word(w) => w.n_sentinels,
            Tokenizer::Subword(b) => b.n_sentinels(),
        }
    }

    pub fn sentinel_id(&self, k: usize) -> Result<u32, TokenizerError> {
        if k >= self.n_sentinels() {
            return Err(TokenizerError::SentinelOutOfRange(k));
        }
        Ok((N_SPECIAL + k) as u32)
    }

    /// Serializes to the documented text format.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut out = String::from("syntrans-tokenizer v1\n");
        match self {
            Tokenizer::Word(w) => {
                writeln!(out, "mode=word").unwrap();
                writeln!(out, "vocab_size={}", w.vocab_size()).unwrap();
                writeln!(out, "sentinels={}", w.n_sentinels).unwrap();
                writeln!(out, "words={}", w.words.len()).unwrap();
                for word in &w.words {
                    writeln!(out, "{word}").unwrap();
                }
            }
            Tokenizer::Subword(b) => {
                writeln!(out, "mode=subword").unwrap();
                writeln!(out, "vocab_size={}", b.vocab_budget()).unwrap();
                writeln!(out, "sentinels={}", b.n_sentinels()).unwrap();
                writeln!(out, "merges={}", b.merges().len()).unwrap();
                for (l, r) in b.merges() {
                    writeln!(out, "{l} {r}").unwrap();
                }
            }
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let raw = fs::read_to_string(path)?;
        let mut lines = raw.lines();
        let header = lines.next().unwrap_or_default();
        if header != "syntrans-tokenizer v1" {
            return Err(TokenizerError::BadFile(format!("unexpected header '{header}'")));
        }
        let mut kv = HashMap::new();
        let mut body_marker = None;
        for line in lines.by_ref() {
            let Some((k, v)) = line.split_once('=') else {
                return Err(TokenizerError::BadFile(format!("expected key=value, got '{line}'")));
            };
            if k == "words" || k == "merges" {
                body_marker = Some((k.to_string(), parse_usize(v)?));
                break;
            }
            kv.insert(k.to_string(), v.to_string());
        }
        let n_sentinels = parse_usize(kv.get("sentinels").map(String::as_str).unwrap_or("32"))?;
        let vocab_size = parse_usize(kv.get("vocab_size").map(String::as_str).unwrap_or("0"))?;
        match (kv.get("mode").map(String::as_str), body_marker) {
            (Some("word"), Some((marker, count))) if marker == "words" => {
                let words: Vec<String> = lines.by_ref().take(count).map(str::to_string).collect();
                if words.len() != count {
                    return Err(TokenizerError::BadFile("truncated word list".into()));
                }
                Ok(Tokenizer::Word(WordTokenizer::from_words(words, n_sentinels)))
            }
            (Some("subword"), Some((marker, count))) if marker == "merges" => {
                let mut merges = Vec::with_capacity(count);
                for line in lines.by_ref().take(count) {
                    let (l, r) = line
                        .split_once(' ')
                        .ok_or_else(|| TokenizerError::BadFile(format!("bad merge line '{line}'")))?;
                    merges.push((parse_u32(l)?, parse_u32(r)?));
                }
                if merges.len() != count {
                    return Err(TokenizerError::BadFile("truncated merge list".into()));
                }
                Ok(Tokenizer::Subword(BpeTokenizer::from_merges(
                    merges,
                    vocab_size,
                    n_sentinels,
                )?))
            }
            (mode, _) => Err(TokenizerError::BadFile(format!("bad mode/body: {mode:?}"))),
        }
    }
}

fn parse_usize(s: &str) -> Result<usize, TokenizerError> {
    s.parse()
        .map_err(|_| TokenizerError::BadFile(format!("bad integer '{s}'")))
}

fn parse_u32(s: &str) -> Result<u32, TokenizerError> {
    s.parse()
        .map_err(|_| TokenizerError::BadFile(format!("bad integer '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{sample_declarative, SampleOpts};

    #[test]
    fn word_round_trip_on_sampled_sentences() {
        let g = Grammar::default_grammar();
        let tok = Tokenizer::word_level(&g);
        for seed in 0..50 {
            let t = sample_declarative(&g, seed, &SampleOpts::default()).unwrap();
            let text = t.tokens().join(" ");
            let ids = tok.encode(&text).unwrap();
            assert!(ids.iter().all(|&i| (i as usize) < tok.vocab_size()));
            assert_eq!(tok.decode(&ids).unwrap(), text);
        }
    }

    #[test]
    fn word_encode_rejects_unknown_words() {
        let g = Grammar::default_grammar();
        let tok = Tokenizer::word_level(&g);
        assert_eq!(
            tok.encode("the zorble runs"),
            Err(TokenizerError::UnknownWord("zorble".into()))
        );
    }

    #[test]
    fn specials_are_a_contiguous_block() {
        let g = Grammar::default_grammar();
        let tok = Tokenizer::word_level(&g);
        assert_eq!(tok.sentinel_id(0).unwrap(), 3);
        assert_eq!(tok.sentinel_id(31).unwrap(), 34);
        assert!(tok.sentinel_id(32).is_err());
        // Content ids start strictly above the sentinel block.
        let ids = tok.encode("the raven").unwrap();
        assert!(ids.iter().all(|&i| i >= first_content_id(32)));
    }

    #[test]
    fn empty_string_is_an_empty_sequence() {
        let g = Grammar::default_grammar();
        let tok = Tokenizer::word_level(&g);
        assert_eq!(tok.encode("").unwrap(), Vec::<u32>::new());
        assert_eq!(tok.decode(&[]).unwrap(), "");
    }

    #[test]
    fn word_save_load_round_trip() {
        let g = Grammar::default_grammar();
        let tok = Tokenizer::word_level(&g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tok.txt");
        tok.save(&path).unwrap();
        let back = Tokenizer::load(&path).unwrap();
        assert_eq!(tok, back);
    }
}
