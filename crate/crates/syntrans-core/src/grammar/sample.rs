//! Seeded sentence sampling. All randomness flows through a caller-provided
//! or seed-derived ChaCha stream, so identical (grammar, seed, opts) produce
//! identical trees.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{LexiconEntry, Number, PartOfSpeech};
use super::tree::{NodeLabel, ParseTree};
use super::{Grammar, GrammarError};

/// Optional modifier on an NP slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modifier {
    #[default]
    None,
    Rc,
    Pp,
}

/// Shape of the main-clause predicate. `Auxiliated` yields question-formation
/// style sentences ("the raven does observe the newts ."); `SimplePast`
/// yields passivization style ("the raven observed the newts .") and always
/// selects a transitive verb with a regular past form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PredicateStyle {
    #[default]
    Auxiliated,
    SimplePast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOpts {
    pub subject_modifier: Modifier,
    pub object_modifier: Modifier,
    pub require_transitive: bool,
    pub predicate: PredicateStyle,
}

impl Default for SampleOpts {
    fn default() -> Self {
        SampleOpts {
            subject_modifier: Modifier::None,
            object_modifier: Modifier::None,
            require_transitive: false,
            predicate: PredicateStyle::Auxiliated,
        }
    }
}

pub(super) struct Sampler<'g> {
    grammar: &'g Grammar,
    nouns: Vec<&'g LexiconEntry>,
    trans: Vec<&'g LexiconEntry>,
    regular_trans: Vec<&'g LexiconEntry>,
    intrans: Vec<&'g LexiconEntry>,
    active_aux: Vec<&'g LexiconEntry>,
    determiners: Vec<&'g LexiconEntry>,
    prepositions: Vec<&'g LexiconEntry>,
    relativizers: Vec<&'g LexiconEntry>,
}

impl<'g> Sampler<'g> {
    pub fn new(grammar: &'g Grammar) -> Self {
        let lex = grammar.lexicon();
        let active_aux = lex
            .of_pos(PartOfSpeech::Auxiliary)
            .filter(|e| !grammar.is_reserved_aux(&e.surface))
            .collect();
        let prepositions = lex
            .of_pos(PartOfSpeech::Preposition)
            .filter(|e| !grammar.is_reserved_prep(&e.surface))
            .collect();
        let trans: Vec<_> = lex.of_pos(PartOfSpeech::VerbTrans).collect();
        // Simple-past sentences reuse the participle as the past form, which
        // only holds for regular verbs.
        let regular_trans = trans
            .iter()
            .copied()
            .filter(|e| e.participle.as_deref().is_some_and(|p| p.ends_with("ed")))
            .collect();
        Sampler {
            grammar,
            nouns: lex.of_pos(PartOfSpeech::Noun).collect(),
            trans,
            regular_trans,
            intrans: lex.of_pos(PartOfSpeech::VerbIntrans).collect(),
            active_aux,
            determiners: lex.of_pos(PartOfSpeech::Determiner).collect(),
            prepositions,
            relativizers: lex.of_pos(PartOfSpeech::Relativizer).collect(),
        }
    }

    fn pick<'a>(
        &self,
        rng: &mut ChaCha8Rng,
        pool: &[&'a LexiconEntry],
        what: &str,
    ) -> Result<&'a LexiconEntry, GrammarError> {
        if pool.is_empty() {
            return Err(GrammarError::Unsatisfiable(format!("lexicon has no {what}")));
        }
        Ok(pool[rng.gen_range(0..pool.len())])
    }

    fn pick_aux(&self, rng: &mut ChaCha8Rng, number: Number) -> Result<&'g LexiconEntry, GrammarError> {
        let pool: Vec<_> = self
            .active_aux
            .iter()
            .copied()
            .filter(|e| e.aux_agreement.is_some_and(|a| a.matches(number)))
            .collect();
        if pool.is_empty() {
            return Err(GrammarError::Unsatisfiable(format!(
                "no auxiliary agrees with a {number:?} subject"
            )));
        }
        Ok(pool[rng.gen_range(0..pool.len())])
    }

    /// NP -> Det N (RC|PP)?  The head noun's number is returned for
    /// agreement further up.
    fn sample_np(
        &self,
        rng: &mut ChaCha8Rng,
        modifier: Modifier,
        depth: usize,
    ) -> Result<(ParseTree, Number), GrammarError> {
        let det = self.pick(rng, &self.determiners, "determiners")?;
        let noun = self.pick(rng, &self.nouns, "nouns")?;
        let mut children = vec![
            ParseTree::leaf(NodeLabel::Det, &det.surface),
            ParseTree::leaf(NodeLabel::Noun, &noun.surface),
        ];
        match modifier {
            Modifier::None => {}
            Modifier::Rc => children.push(self.sample_rc(rng, noun.number, depth + 1)?),
            Modifier::Pp => children.push(self.sample_pp(rng, depth + 1)?),
        }
        Ok((ParseTree::internal(NodeLabel::NP, children), noun.number))
    }

    /// Modifier for an embedded NP slot: none below the depth cap, otherwise
    /// sampled with the grammar's embedded-modifier probability.
    fn embedded_modifier(&self, rng: &mut ChaCha8Rng, depth: usize) -> Modifier {
        if depth >= self.grammar.max_embedding_depth() {
            return Modifier::None;
        }
        if rng.gen_bool(self.grammar.embedded_modifier_prob()) {
            if rng.gen_bool(0.5) {
                Modifier::Rc
            } else {
                Modifier::Pp
            }
        } else {
            Modifier::None
        }
    }

    /// RC -> Rel Aux V (NP)?  The embedded auxiliary agrees with the
    /// modified head noun.
    fn sample_rc(
        &self,
        rng: &mut ChaCha8Rng,
        head_number: Number,
        depth: usize,
    ) -> Result<ParseTree, GrammarError> {
        let rel = self.pick(rng, &self.relativizers, "relativizers")?;
        let aux = self.pick_aux(rng, head_number)?;
        let mut children = vec![
            ParseTree::leaf(NodeLabel::Rel, &rel.surface),
            ParseTree::leaf(NodeLabel::Aux, &aux.surface),
        ];
        let transitive = !self.trans.is_empty() && (self.intrans.is_empty() || rng.gen_bool(0.5));
        if transitive {
            let verb = self.pick(rng, &self.trans, "transitive verbs")?;
            children.push(ParseTree::leaf(NodeLabel::Verb, &verb.surface));
            let m = self.embedded_modifier(rng, depth);
            children.push(self.sample_np(rng, m, depth)?.0);
        } else {
            let verb = self.pick(rng, &self.intrans, "intransitive verbs")?;
            children.push(ParseTree::leaf(NodeLabel::Verb, &verb.surface));
        }
        Ok(ParseTree::internal(NodeLabel::RC, children))
    }

    /// PP -> P NP
    fn sample_pp(&self, rng: &mut ChaCha8Rng, depth: usize) -> Result<ParseTree, GrammarError> {
        let prep = self.pick(rng, &self.prepositions, "prepositions")?;
        let m = self.embedded_modifier(rng, depth);
        let (np, _) = self.sample_np(rng, m, depth)?;
        Ok(ParseTree::internal(
            NodeLabel::PP,
            vec![ParseTree::leaf(NodeLabel::Prep, &prep.surface), np],
        ))
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, opts: &SampleOpts) -> Result<ParseTree, GrammarError> {
        let wants_object = opts.require_transitive
            || opts.object_modifier != Modifier::None
            || opts.predicate == PredicateStyle::SimplePast;
        if opts.object_modifier != Modifier::None && self.trans.is_empty() {
            return Err(GrammarError::Unsatisfiable(
                "object modifier requested but the lexicon has no transitive verbs".into(),
            ));
        }

        let (subject, subj_number) = self.sample_np(rng, opts.subject_modifier, 0)?;

        let mut vp_children = Vec::new();
        let transitive = if wants_object {
            true
        } else if self.trans.is_empty() {
            false
        } else if self.intrans.is_empty() {
            true
        } else {
            rng.gen_bool(0.5)
        };

        match opts.predicate {
            PredicateStyle::Auxiliated => {
                let aux = self.pick_aux(rng, subj_number)?;
                vp_children.push(ParseTree::leaf(NodeLabel::Aux, &aux.surface));
                if transitive {
                    let verb = self.pick(rng, &self.trans, "transitive verbs")?;
                    vp_children.push(ParseTree::leaf(NodeLabel::Verb, &verb.surface));
                } else {
                    let verb = self.pick(rng, &self.intrans, "intransitive verbs")?;
                    vp_children.push(ParseTree::leaf(NodeLabel::Verb, &verb.surface));
                }
            }
            PredicateStyle::SimplePast => {
                let verb = self.pick(rng, &self.regular_trans, "regular transitive verbs")?;
                let past = verb.participle.clone().expect("regular transitive has participle");
                vp_children.push(ParseTree::leaf(NodeLabel::Verb, past));
            }
        }
        if transitive {
            vp_children.push(self.sample_np(rng, opts.object_modifier, 0)?.0);
        }

        let tree = ParseTree::internal(
            NodeLabel::S,
            vec![
                subject,
                ParseTree::internal(NodeLabel::VP, vp_children),
                ParseTree::leaf(NodeLabel::Term, "."),
            ],
        )
        .with_spans();
        debug_assert!(tree.validate().is_ok());
        Ok(tree)
    }
}

/// Samples one declarative sentence as a parse tree. Deterministic per
/// (grammar, seed, opts).
pub fn sample_declarative(
    grammar: &Grammar,
    seed: u64,
    opts: &SampleOpts,
) -> Result<ParseTree, GrammarError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sampler::new(grammar).sample(&mut rng, opts)
}
