//! The competing transformation hypotheses as executable rules.
//!
//! Hierarchical rules (`move_main_question`, `passivize_main`) consume a
//! parse tree; linear heuristics (`move_first_question`, `passivize_second`)
//! consume only the token sequence plus the closed lexicon. On sentences
//! without a subject modifier the two families coincide; a subject RC or PP
//! pulls them apart, which is what the generalization splits exploit.
//!
//! Sentence-initial capitalization is treated as presentation: rules operate
//! on lowercase forms and re-capitalize the first output token when the
//! input started capitalized.

use thiserror::Error;

use crate::grammar::{Grammar, GrammarError, NodeLabel, ParseTree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("main clause is intransitive; passivization needs a direct object")]
    Intransitive,
    #[error("need at least two nouns, found {0}")]
    TooFewNouns(usize),
    #[error("sentence does not end in a declarative terminator")]
    MissingTerminator,
    #[error("no participle form known for verb '{0}'")]
    UnknownVerb(String),
}

/// Rule identifiers used by the CLI oracle runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleName {
    MoveMain,
    MoveFirst,
    MoveSecond,
}

impl std::str::FromStr for RuleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "move-main" => Ok(RuleName::MoveMain),
            "move-first" => Ok(RuleName::MoveFirst),
            "move-second" => Ok(RuleName::MoveSecond),
            other => Err(format!("unknown rule '{other}'")),
        }
    }
}

impl std::fmt::Display for RuleName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RuleName::MoveMain => "move-main",
            RuleName::MoveFirst => "move-first",
            RuleName::MoveSecond => "move-second",
        })
    }
}

fn starts_upper(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_uppercase())
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn upper_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Lowercases the sentence-initial token, returning whether it was
/// capitalized.
fn normalize_case(tokens: &mut [String]) -> bool {
    let cap = tokens.first().is_some_and(|t| starts_upper(t));
    if cap {
        tokens[0] = lower_first(&tokens[0]);
    }
    cap
}

fn restore_case(mut tokens: Vec<String>, cap: bool) -> Vec<String> {
    if cap {
        if let Some(first) = tokens.first_mut() {
            *first = upper_first(first);
        }
    }
    tokens
}

fn front_aux_at(tokens: &[String], aux_idx: usize) -> Result<Vec<String>, TransformError> {
    let last = tokens.len() - 1;
    if tokens[last] != "." {
        return Err(TransformError::MissingTerminator);
    }
    let mut out = Vec::with_capacity(tokens.len());
    out.push(tokens[aux_idx].clone());
    for (i, t) in tokens.iter().enumerate().take(last) {
        if i != aux_idx {
            out.push(t.clone());
        }
    }
    out.push("?".to_string());
    Ok(out)
}

/// MOVE-MAIN for question formation: fronts the main-clause auxiliary and
/// swaps the terminator.
pub fn move_main_question(tree: &ParseTree) -> Result<Vec<String>, TransformError> {
    let main_idx = tree.main_aux_index()?;
    let mut tokens = tree.tokens();
    let cap = normalize_case(&mut tokens);
    Ok(restore_case(front_aux_at(&tokens, main_idx)?, cap))
}

/// MOVE-FIRST: fronts the linearly first auxiliary (prepose-and-delete).
pub fn move_first_question<S: AsRef<str>>(
    tokens: &[S],
    grammar: &Grammar,
) -> Result<Vec<String>, TransformError> {
    let mut tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let cap = normalize_case(&mut tokens);
    let first_idx = grammar.first_aux_index(&tokens)?;
    Ok(restore_case(front_aux_at(&tokens, first_idx)?, cap))
}

fn passive_surface(
    fronted: &[String],
    fronted_head: &str,
    verb: &str,
    demoted: &[String],
    terminator: &str,
    grammar: &Grammar,
) -> Result<Vec<String>, TransformError> {
    let number = grammar
        .lexicon()
        .noun_number(fronted_head)
        .ok_or_else(|| GrammarError::MalformedTree(format!("unknown noun '{fronted_head}'")))?;
    let copula = grammar.passive_aux(number);
    let participle = grammar
        .lexicon()
        .participle_form(verb)
        .ok_or_else(|| TransformError::UnknownVerb(verb.to_string()))?;
    let mut out = Vec::new();
    out.extend(fronted.iter().cloned());
    out.push(copula.to_string());
    out.push(participle.to_string());
    out.push("by".to_string());
    out.extend(demoted.iter().cloned());
    out.push(terminator.to_string());
    Ok(out)
}

/// MOVE-MAIN for passivization: fronts the object NP with its modifiers,
/// re-agrees the copula with the new subject, and demotes the original
/// subject NP (with its modifiers) into a "by" phrase.
pub fn passivize_main(tree: &ParseTree, grammar: &Grammar) -> Result<Vec<String>, TransformError> {
    let mut tokens = tree.tokens();
    let cap = normalize_case(&mut tokens);

    let subject = tree
        .child(NodeLabel::NP)
        .ok_or_else(|| GrammarError::MalformedTree("root has no subject NP".into()))?;
    let vp = tree
        .child(NodeLabel::VP)
        .ok_or_else(|| GrammarError::MalformedTree("root has no VP".into()))?;
    let object = vp.child(NodeLabel::NP).ok_or(TransformError::Intransitive)?;
    let verb = vp
        .child(NodeLabel::Verb)
        .and_then(|v| v.leaf.as_deref())
        .ok_or_else(|| GrammarError::MalformedTree("VP has no verb".into()))?;
    let object_head = object
        .children
        .iter()
        .find(|c| c.label == NodeLabel::Noun)
        .and_then(|n| n.leaf.as_deref())
        .ok_or_else(|| GrammarError::MalformedTree("object NP has no head noun".into()))?;

    let fronted = tokens[object.span.start..object.span.end].to_vec();
    let demoted = tokens[subject.span.start..subject.span.end].to_vec();
    let terminator = tokens.last().cloned().unwrap_or_else(|| ".".into());
    let out = passive_surface(&fronted, object_head, verb, &demoted, &terminator, grammar)?;
    Ok(restore_case(out, cap))
}

/// Extent of the minimal NP at a head noun: the noun plus an immediately
/// preceding determiner.
fn minimal_np(tokens: &[String], noun_idx: usize, grammar: &Grammar) -> (usize, usize) {
    let lex = grammar.lexicon();
    let start = if noun_idx > 0
        && lex
            .lookup(&tokens[noun_idx - 1])
            .is_some_and(|e| e.pos == crate::grammar::PartOfSpeech::Determiner)
    {
        noun_idx - 1
    } else {
        noun_idx
    };
    (start, noun_idx + 1)
}

/// Consumes a trailing `P Det? N` modifier directly after `end`, if present.
/// The agent marker "by" never heads a sampled modifier, so it is excluded.
fn trailing_pp(tokens: &[String], end: usize, grammar: &Grammar) -> usize {
    let lex = grammar.lexicon();
    let is_prep = |i: usize| {
        tokens.get(i).is_some_and(|t| {
            lex.lookup(t).is_some_and(|e| e.pos == crate::grammar::PartOfSpeech::Preposition)
                && !grammar.is_reserved_prep(t)
        })
    };
    if !is_prep(end) {
        return end;
    }
    let mut i = end + 1;
    if tokens
        .get(i)
        .is_some_and(|t| lex.lookup(t).is_some_and(|e| e.pos == crate::grammar::PartOfSpeech::Determiner))
    {
        i += 1;
    }
    if tokens.get(i).is_some_and(|t| lex.is_noun(t)) {
        i + 1
    } else {
        end
    }
}

/// MOVE-SECOND: fronts the NP headed by the linearly second noun (with its
/// trailing PP, if any) and rebuilds the sentence by the passive surface
/// recipe, demoting the first noun's minimal NP.
pub fn passivize_second<S: AsRef<str>>(
    tokens: &[S],
    grammar: &Grammar,
) -> Result<Vec<String>, TransformError> {
    let mut tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let cap = normalize_case(&mut tokens);

    let lex = grammar.lexicon();
    let nouns: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| lex.is_noun(t))
        .map(|(i, _)| i)
        .collect();
    if nouns.len() < 2 {
        return Err(TransformError::TooFewNouns(nouns.len()));
    }

    let second = nouns[1];
    let (np2_start, np2_end) = minimal_np(&tokens, second, grammar);
    let np2_end = trailing_pp(&tokens, np2_end, grammar);
    let fronted = tokens[np2_start..np2_end].to_vec();

    let verb = tokens
        .iter()
        .find(|t| grammar.lexicon().participle_form(t).is_some())
        .cloned()
        .ok_or_else(|| TransformError::UnknownVerb("<none>".into()))?;

    let (d_start, d_end) = minimal_np(&tokens, nouns[0], grammar);
    let demoted = tokens[d_start..d_end].to_vec();
    let terminator = tokens.last().cloned().unwrap_or_else(|| ".".into());

    let out = passive_surface(&fronted, &tokens[second], &verb, &demoted, &terminator, grammar)?;
    Ok(restore_case(out, cap))
}

/// Meta-driven replays: reconstruct the hierarchical outputs from a source
/// token sequence plus the positional metadata recorded at generation time.
/// Used to audit written datasets without re-deriving trees.
pub mod replay {
    use super::*;

    /// MOVE-MAIN replay for question formation given the recorded main
    /// auxiliary position.
    pub fn move_main_from_meta(
        tokens: &[String],
        main_aux_idx: usize,
    ) -> Result<Vec<String>, TransformError> {
        let mut tokens = tokens.to_vec();
        let cap = normalize_case(&mut tokens);
        Ok(restore_case(front_aux_at(&tokens, main_aux_idx)?, cap))
    }

    /// Hierarchical passivization replay given the recorded object head
    /// position. Valid for sentences whose object modifiers are PPs, which
    /// is how the passivization datasets are built.
    pub fn passivize_main_from_meta(
        tokens: &[String],
        object_idx: usize,
        grammar: &Grammar,
    ) -> Result<Vec<String>, TransformError> {
        let mut tokens = tokens.to_vec();
        let cap = normalize_case(&mut tokens);

        let (o_start, o_end) = minimal_np(&tokens, object_idx, grammar);
        let o_end = trailing_pp(&tokens, o_end, grammar);
        let fronted = tokens[o_start..o_end].to_vec();

        let verb = tokens
            .iter()
            .take(o_start)
            .rev()
            .find(|t| grammar.lexicon().participle_form(t).is_some())
            .cloned()
            .ok_or_else(|| TransformError::UnknownVerb("<none>".into()))?;

        // Subject NP: everything before the main verb, which directly
        // precedes the object in our sentence shapes.
        let verb_pos = tokens
            .iter()
            .take(o_start)
            .rposition(|t| *t == verb)
            .expect("verb located above");
        let demoted = tokens[..verb_pos].to_vec();
        let terminator = tokens.last().cloned().unwrap_or_else(|| ".".into());
        let out = passive_surface(
            &fronted,
            &tokens[object_idx].clone(),
            &verb,
            &demoted,
            &terminator,
            grammar,
        )?;
        Ok(restore_case(out, cap))
    }
}
