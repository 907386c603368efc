//! Pre-training corpora: synthetic simple/complex registers, ingestion of
//! user-supplied text, nested subsampling, concatenation, and summary stats.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{Grammar, Modifier, PartOfSpeech, PredicateStyle, SampleOpts};
use crate::transform::move_main_question;

use super::DataError;

/// The complex register's vocabulary extension is derived from this fixed
/// stream, so the same extended vocabulary appears in every complex corpus
/// regardless of the sampling seed.
const COMPLEX_VOCAB_SEED: u64 = 0x5eed_c0de;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Register {
    Simple,
    Complex,
    External,
}

impl std::fmt::Display for Register {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Register::Simple => "simple",
            Register::Complex => "complex",
            Register::External => "external",
        })
    }
}

impl std::str::FromStr for Register {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(Register::Simple),
            "complex" => Ok(Register::Complex),
            "external" => Ok(Register::External),
            other => Err(format!("unknown register '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub register: Register,
    pub size_words: usize,
    pub seed: u64,
    pub source_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CorpusStats {
    pub words: usize,
    pub sentences: usize,
    pub mean_sentence_len: f64,
    pub type_token_ratio: f64,
    pub vocab_size: usize,
}

/// Content-word pools used for frequency-shaped lexical substitution.
struct ContentPools {
    noun_sg: Vec<String>,
    noun_pl: Vec<String>,
    trans_bare: Vec<String>,
    trans_past: Vec<String>,
    intrans: Vec<String>,
}

impl ContentPools {
    fn from_grammar(grammar: &Grammar) -> Self {
        let lex = grammar.lexicon();
        let mut pools = ContentPools {
            noun_sg: Vec::new(),
            noun_pl: Vec::new(),
            trans_bare: Vec::new(),
            trans_past: Vec::new(),
            intrans: Vec::new(),
        };
        for e in lex.entries() {
            match e.pos {
                PartOfSpeech::Noun => match e.number {
                    crate::grammar::Number::Pl => pools.noun_pl.push(e.surface.clone()),
                    _ => pools.noun_sg.push(e.surface.clone()),
                },
                PartOfSpeech::VerbTrans => {
                    pools.trans_bare.push(e.surface.clone());
                    if let Some(p) = &e.participle {
                        pools.trans_past.push(p.clone());
                    }
                }
                PartOfSpeech::VerbIntrans => pools.intrans.push(e.surface.clone()),
                _ => {}
            }
        }
        pools
    }

    /// Appends pseudoword lemmas, roughly a 10x extension over the built-in
    /// content vocabulary.
    fn extend_with_pseudowords(&mut self, grammar: &Grammar) {
        let mut rng = ChaCha8Rng::seed_from_u64(COMPLEX_VOCAB_SEED);
        let mut taken: HashSet<String> = grammar.lexicon().all_surfaces().map(str::to_string).collect();
        for _ in 0..450 {
            let w = pseudoword(&mut rng, &mut taken, &["s"]);
            self.noun_pl.push(format!("{w}s"));
            self.noun_sg.push(w);
        }
        for _ in 0..140 {
            let w = pseudoword(&mut rng, &mut taken, &["ed"]);
            self.trans_past.push(format!("{w}ed"));
            self.trans_bare.push(w);
        }
        for _ in 0..60 {
            let w = pseudoword(&mut rng, &mut taken, &[]);
            self.intrans.push(w);
        }
    }
}

/// CVC-ish pseudoword, unique among `taken` together with its suffixed
/// forms.
fn pseudoword(rng: &mut ChaCha8Rng, taken: &mut HashSet<String>, suffixes: &[&str]) -> String {
    const ONSETS: &[&str] = &[
        "b", "bl", "br", "cl", "cr", "d", "dr", "f", "fl", "fr", "g", "gl", "gr", "h", "j", "k",
        "l", "m", "n", "p", "pl", "pr", "qu", "r", "sk", "sl", "sm", "sn", "sp", "st", "str", "sw",
        "t", "tr", "v", "w", "z",
    ];
    const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "oo", "ou"];
    const CODAS: &[&str] = &[
        "b", "ck", "d", "f", "g", "l", "lk", "lt", "m", "n", "nd", "ng", "nk", "p", "rd", "rk",
        "rm", "rn", "rt", "sh", "sk", "sp", "st", "t", "th",
    ];
    loop {
        let mut w = String::new();
        let syllables = if rng.gen_bool(0.55) { 1 } else { 2 };
        for s in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(NUCLEI[rng.gen_range(0..NUCLEI.len())]);
            if s + 1 == syllables {
                w.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
            }
        }
        let clashes = taken.contains(&w)
            || suffixes.iter().any(|s| taken.contains(&format!("{w}{s}")));
        if !clashes {
            for s in suffixes {
                taken.insert(format!("{w}{s}"));
            }
            taken.insert(w.clone());
            return w;
        }
    }
}

/// Samples pool indices with probability proportional to 1/(rank+1); the
/// pool order defines the ranks, built-in words first.
struct ZipfPicker {
    cumulative: Vec<f64>,
}

impl ZipfPicker {
    fn new(len: usize) -> Self {
        let mut cumulative = Vec::with_capacity(len);
        let mut total = 0.0;
        for r in 0..len {
            total += 1.0 / (r as f64 + 1.0);
            cumulative.push(total);
        }
        ZipfPicker { cumulative }
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty pool");
        let u = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= u)
    }
}

struct RegisterParams {
    question_prob: f64,
    simple_past_prob: f64,
    subject_rc_prob: f64,
    subject_pp_prob: f64,
    object_rc_prob: f64,
    object_pp_prob: f64,
}

impl RegisterParams {
    /// Short sentences, no embedded clauses, built-in vocabulary only.
    /// Question-heavy, like child-directed speech.
    fn simple() -> Self {
        RegisterParams {
            question_prob: 0.4,
            simple_past_prob: 0.5,
            subject_rc_prob: 0.0,
            subject_pp_prob: 0.10,
            object_rc_prob: 0.0,
            object_pp_prob: 0.15,
        }
    }

    /// Longer sentences with RC/PP embedding up to depth 2 and the extended
    /// Zipf-tailed vocabulary.
    fn complex() -> Self {
        RegisterParams {
            question_prob: 0.25,
            simple_past_prob: 0.5,
            subject_rc_prob: 0.3,
            subject_pp_prob: 0.3,
            object_rc_prob: 0.25,
            object_pp_prob: 0.25,
        }
    }
}

fn pick_modifier(rng: &mut ChaCha8Rng, rc_prob: f64, pp_prob: f64) -> Modifier {
    let u: f64 = rng.gen();
    if u < rc_prob {
        Modifier::Rc
    } else if u < rc_prob + pp_prob {
        Modifier::Pp
    } else {
        Modifier::None
    }
}

fn synth_register(
    grammar: &Grammar,
    params: &RegisterParams,
    pools: Option<&ContentPools>,
    size_words: usize,
    seed: u64,
) -> Result<Vec<String>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = pools.map(|p| {
        (
            ZipfPicker::new(p.noun_sg.len()),
            ZipfPicker::new(p.noun_pl.len()),
            ZipfPicker::new(p.trans_bare.len()),
            ZipfPicker::new(p.trans_past.len()),
            ZipfPicker::new(p.intrans.len()),
        )
    });
    let lex = grammar.lexicon();
    let mut lines = Vec::new();
    let mut words = 0usize;
    while words < size_words {
        let question = rng.gen_bool(params.question_prob);
        let predicate = if !question && rng.gen_bool(params.simple_past_prob) {
            PredicateStyle::SimplePast
        } else {
            PredicateStyle::Auxiliated
        };
        let opts = SampleOpts {
            subject_modifier: pick_modifier(&mut rng, params.subject_rc_prob, params.subject_pp_prob),
            object_modifier: pick_modifier(&mut rng, params.object_rc_prob, params.object_pp_prob),
            require_transitive: false,
            predicate,
        };
        let tree = grammar.sample_with_rng(&mut rng, &opts)?;
        let mut tokens = if question {
            move_main_question(&tree)?
        } else {
            tree.tokens()
        };
        if let (Some(pools), Some((z_sg, z_pl, z_bare, z_past, z_in))) = (pools, zipf.as_ref()) {
            for t in tokens.iter_mut() {
                let replacement = match lex.lookup(t) {
                    Some(e) if e.pos == PartOfSpeech::Noun => match e.number {
                        crate::grammar::Number::Pl => Some(&pools.noun_pl[z_pl.pick(&mut rng)]),
                        _ => Some(&pools.noun_sg[z_sg.pick(&mut rng)]),
                    },
                    Some(e) if e.pos == PartOfSpeech::VerbTrans => {
                        Some(&pools.trans_bare[z_bare.pick(&mut rng)])
                    }
                    Some(e) if e.pos == PartOfSpeech::VerbIntrans => {
                        Some(&pools.intrans[z_in.pick(&mut rng)])
                    }
                    None if lex.participle_form(t).is_some() => {
                        Some(&pools.trans_past[z_past.pick(&mut rng)])
                    }
                    _ => None,
                };
                if let Some(r) = replacement {
                    *t = r.clone();
                }
            }
        }
        words += tokens.len();
        lines.push(tokens.join(" "));
    }
    Ok(lines)
}

/// Generates (or ingests) a corpus as newline-delimited sentences totaling
/// at least `size_words` whitespace tokens. Deterministic per spec.
pub fn synth_corpus(spec: &CorpusSpec, grammar: &Grammar) -> Result<Vec<String>, DataError> {
    if spec.size_words == 0 {
        return Err(DataError::BadSpec("size_words must be positive".into()));
    }
    match spec.register {
        Register::Simple => synth_register(grammar, &RegisterParams::simple(), None, spec.size_words, spec.seed),
        Register::Complex => {
            let deep = grammar.clone().with_embedding(2, 0.35);
            let mut pools = ContentPools::from_grammar(&deep);
            pools.extend_with_pseudowords(&deep);
            synth_register(&deep, &RegisterParams::complex(), Some(&pools), spec.size_words, spec.seed)
        }
        Register::External => {
            let path = spec
                .source_path
                .as_ref()
                .ok_or_else(|| DataError::BadSpec("external register needs source_path".into()))?;
            let file = BufReader::new(fs::File::open(path)?);
            let mut lines = Vec::new();
            let mut words = 0usize;
            for line in file.lines() {
                let line = line?;
                let normalized = line.split_whitespace().collect::<Vec<_>>().join(" ");
                if normalized.is_empty() {
                    continue;
                }
                words += normalized.split_whitespace().count();
                lines.push(normalized);
                if words >= spec.size_words {
                    break;
                }
            }
            if lines.is_empty() {
                return Err(DataError::BadSpec(format!(
                    "external corpus {} has no sentences",
                    path.display()
                )));
            }
            Ok(lines)
        }
    }
}

pub fn word_count(lines: &[String]) -> usize {
    lines.iter().map(|l| l.split_whitespace().count()).sum()
}

/// Uniform sentence-level subsamples with the nesting property: the
/// selection for a smaller size is a strict prefix (in shuffled order) of
/// every larger one, and lines are emitted in original corpus order.
pub fn subsample_nested(
    lines: &[String],
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<Vec<String>>, DataError> {
    if sizes.is_empty() {
        return Err(DataError::BadSpec("no subsample sizes given".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DataError::BadSpec("subsample sizes must be strictly increasing".into()));
    }
    if sizes[0] == 0 {
        return Err(DataError::BadSpec("subsample sizes must be positive".into()));
    }
    let total = word_count(lines);
    if *sizes.last().unwrap() > total {
        return Err(DataError::BadSpec(format!(
            "requested {} words but the corpus has {total}",
            sizes.last().unwrap()
        )));
    }
    let mut perm: Vec<usize> = (0..lines.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);

    let mut out = Vec::with_capacity(sizes.len());
    let mut cursor = 0usize;
    let mut words = 0usize;
    let mut selected: Vec<usize> = Vec::new();
    for &size in sizes {
        while words < size && cursor < perm.len() {
            let idx = perm[cursor];
            cursor += 1;
            words += lines[idx].split_whitespace().count();
            selected.push(idx);
        }
        let mut sorted = selected.clone();
        sorted.sort_unstable();
        out.push(sorted.into_iter().map(|i| lines[i].clone()).collect());
    }
    Ok(out)
}

/// Line-level concatenation followed by a seed-deterministic shuffle.
pub fn concat_corpora(a: &[String], b: &[String], seed: u64) -> Vec<String> {
    let mut all: Vec<String> = a.iter().chain(b.iter()).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all
}

pub fn corpus_stats(lines: &[String]) -> CorpusStats {
    let mut words = 0usize;
    let mut types: HashSet<&str> = HashSet::new();
    let mut sentences = 0usize;
    for line in lines {
        let mut any = false;
        for tok in line.split_whitespace() {
            any = true;
            words += 1;
            types.insert(tok);
        }
        if any {
            sentences += 1;
        }
    }
    CorpusStats {
        words,
        sentences,
        mean_sentence_len: if sentences == 0 { 0.0 } else { words as f64 / sentences as f64 },
        type_token_ratio: if words == 0 { 0.0 } else { types.len() as f64 / words as f64 },
        vocab_size: types.len(),
    }
}

pub fn write_corpus(path: &Path, lines: &[String]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<String>, DataError> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut lines = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(register: Register, size_words: usize, seed: u64) -> CorpusSpec {
        CorpusSpec {
            register,
            size_words,
            seed,
            source_path: None,
        }
    }

    #[test]
    fn registers_order_as_expected() {
        let g = Grammar::default_grammar();
        let simple = synth_corpus(&spec(Register::Simple, 20_000, 9), &g).unwrap();
        let complex = synth_corpus(&spec(Register::Complex, 20_000, 9), &g).unwrap();
        let s = corpus_stats(&simple);
        let c = corpus_stats(&complex);
        assert!(s.words >= 20_000);
        assert!(c.words >= 20_000);
        assert!(
            s.mean_sentence_len < c.mean_sentence_len,
            "simple {} vs complex {}",
            s.mean_sentence_len,
            c.mean_sentence_len
        );
        assert!(s.type_token_ratio < c.type_token_ratio);
        assert!(s.vocab_size < c.vocab_size);
        // Simple register median length stays short.
        let mut lens: Vec<usize> = simple.iter().map(|l| l.split_whitespace().count()).collect();
        lens.sort_unstable();
        assert!(lens[lens.len() / 2] <= 8, "median {}", lens[lens.len() / 2]);
        // No embedded clauses in the simple register.
        assert!(simple.iter().all(|l| !l.contains(" that ")));
    }

    #[test]
    fn generation_is_deterministic() {
        let g = Grammar::default_grammar();
        let a = synth_corpus(&spec(Register::Complex, 5_000, 3), &g).unwrap();
        let b = synth_corpus(&spec(Register::Complex, 5_000, 3), &g).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&spec(Register::Complex, 5_000, 4), &g).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn subsamples_nest_and_respect_targets() {
        let g = Grammar::default_grammar();
        let corpus = synth_corpus(&spec(Register::Simple, 30_000, 5), &g).unwrap();
        let sizes = [1_000, 5_000, 20_000];
        let fams = subsample_nested(&corpus, &sizes, 42).unwrap();
        for (i, fam) in fams.iter().enumerate() {
            let words = word_count(fam);
            assert!(words >= sizes[i]);
            // Overshoot is bounded by one sentence.
            let longest = fam.iter().map(|l| l.split_whitespace().count()).max().unwrap();
            assert!(words - sizes[i] < longest.max(1));
        }
        let small: HashSet<&String> = fams[0].iter().collect();
        let mid: HashSet<&String> = fams[1].iter().collect();
        let large: HashSet<&String> = fams[2].iter().collect();
        assert!(small.is_subset(&mid));
        assert!(mid.is_subset(&large));
    }

    #[test]
    fn subsample_at_full_size_is_identity() {
        let g = Grammar::default_grammar();
        let corpus = synth_corpus(&spec(Register::Simple, 2_000, 5), &g).unwrap();
        let total = word_count(&corpus);
        let fams = subsample_nested(&corpus, &[total], 1).unwrap();
        assert_eq!(fams[0], corpus);
    }

    #[test]
    fn subsample_rejects_oversized_requests() {
        let corpus = vec!["a b c".to_string()];
        assert!(subsample_nested(&corpus, &[10], 1).is_err());
        assert!(subsample_nested(&corpus, &[2, 2], 1).is_err());
    }

    #[test]
    fn concat_preserves_lines_and_matches_plain_shuffle_on_empty() {
        let a: Vec<String> = (0..50).map(|i| format!("sentence {i}")).collect();
        let b: Vec<String> = (0..20).map(|i| format!("other {i}")).collect();
        let merged = concat_corpora(&a, &b, 7);
        assert_eq!(merged.len(), a.len() + b.len());
        let mut sorted = merged.clone();
        sorted.sort();
        let mut expect: Vec<String> = a.iter().chain(b.iter()).cloned().collect();
        expect.sort();
        assert_eq!(sorted, expect);
        assert_eq!(concat_corpora(&a, &[], 7), concat_corpora(&a, &[], 7));
        assert_eq!(word_count(&merged), word_count(&a) + word_count(&b));
    }

    #[test]
    fn stats_handle_edge_cases() {
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
        let one = corpus_stats(&["a b a".to_string()]);
        assert_eq!(one.words, 3);
        assert_eq!(one.vocab_size, 2);
        assert_eq!(one.sentences, 1);
        assert!((one.type_token_ratio - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn external_register_normalizes_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.txt");
        std::fs::write(&path, "  hello   world \n\n  second line\n").unwrap();
        let g = Grammar::default_grammar();
        let spec = CorpusSpec {
            register: Register::External,
            size_words: 100,
            seed: 0,
            source_path: Some(path),
        };
        let lines = synth_corpus(&spec, &g).unwrap();
        assert_eq!(lines, vec!["hello world".to_string(), "second line".to_string()]);
    }
}
