//! Closed-class lexicon: surface forms with the features the sampler and the
//! positional queries need (category, number, participles, aux agreement).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::GrammarError;

/// Word category. `PassiveParticiple` covers standalone participle entries in
/// user-supplied tables; participles of transitive verbs are also reachable
/// through [`LexiconEntry::participle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartOfSpeech {
    Noun,
    VerbIntrans,
    VerbTrans,
    Auxiliary,
    Determiner,
    Preposition,
    Relativizer,
    PassiveParticiple,
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PartOfSpeech::Noun => "noun",
            PartOfSpeech::VerbIntrans => "verb-intrans",
            PartOfSpeech::VerbTrans => "verb-trans",
            PartOfSpeech::Auxiliary => "auxiliary",
            PartOfSpeech::Determiner => "determiner",
            PartOfSpeech::Preposition => "preposition",
            PartOfSpeech::Relativizer => "relativizer",
            PartOfSpeech::PassiveParticiple => "passive-participle",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PartOfSpeech {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "noun" => PartOfSpeech::Noun,
            "verb-intrans" => PartOfSpeech::VerbIntrans,
            "verb-trans" => PartOfSpeech::VerbTrans,
            "auxiliary" => PartOfSpeech::Auxiliary,
            "determiner" => PartOfSpeech::Determiner,
            "preposition" => PartOfSpeech::Preposition,
            "relativizer" => PartOfSpeech::Relativizer,
            "passive-participle" => PartOfSpeech::PassiveParticiple,
            other => return Err(GrammarError::BadLexiconField(other.to_string())),
        })
    }
}

/// Grammatical number of a noun. `NA` for categories that do not inflect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Number {
    Sg,
    Pl,
    NA,
}

/// Subject numbers an auxiliary agrees with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxAgreement {
    Sg,
    Pl,
    Both,
}

impl AuxAgreement {
    pub fn matches(self, n: Number) -> bool {
        matches!(
            (self, n),
            (AuxAgreement::Both, _) | (AuxAgreement::Sg, Number::Sg) | (AuxAgreement::Pl, Number::Pl)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub pos: PartOfSpeech,
    pub number: Number,
    /// Past/participle form for transitive verbs ("observe" -> "observed").
    /// The same form serves as the simple-past in generated active sentences.
    pub participle: Option<String>,
    pub aux_agreement: Option<AuxAgreement>,
}

impl LexiconEntry {
    fn new(surface: &str, pos: PartOfSpeech) -> Self {
        LexiconEntry {
            surface: surface.to_string(),
            pos,
            number: Number::NA,
            participle: None,
            aux_agreement: None,
        }
    }

    pub fn noun(surface: &str, number: Number) -> Self {
        LexiconEntry {
            number,
            ..Self::new(surface, PartOfSpeech::Noun)
        }
    }

    pub fn verb_trans(surface: &str, participle: &str) -> Self {
        LexiconEntry {
            participle: Some(participle.to_string()),
            ..Self::new(surface, PartOfSpeech::VerbTrans)
        }
    }

    pub fn verb_intrans(surface: &str) -> Self {
        Self::new(surface, PartOfSpeech::VerbIntrans)
    }

    pub fn auxiliary(surface: &str, agreement: AuxAgreement) -> Self {
        LexiconEntry {
            aux_agreement: Some(agreement),
            ..Self::new(surface, PartOfSpeech::Auxiliary)
        }
    }

    pub fn determiner(surface: &str) -> Self {
        Self::new(surface, PartOfSpeech::Determiner)
    }

    pub fn preposition(surface: &str) -> Self {
        Self::new(surface, PartOfSpeech::Preposition)
    }

    pub fn relativizer(surface: &str) -> Self {
        Self::new(surface, PartOfSpeech::Relativizer)
    }
}

/// The full word inventory, indexed by surface form. Surfaces are unique
/// across categories so that token-level queries (first auxiliary, nth noun)
/// are unambiguous.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    by_surface: BTreeMap<String, usize>,
    /// Participle surface -> index of the owning transitive verb.
    participles: BTreeMap<String, usize>,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, GrammarError> {
        let mut by_surface = BTreeMap::new();
        let mut participles = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.surface.is_empty() {
                return Err(GrammarError::BadLexiconField("empty surface".into()));
            }
            match e.pos {
                PartOfSpeech::Noun => {
                    if e.number == Number::NA {
                        return Err(GrammarError::InvalidEntry(format!(
                            "noun '{}' needs a sg/pl number",
                            e.surface
                        )));
                    }
                }
                PartOfSpeech::VerbTrans => {
                    if e.participle.as_deref().is_none_or(str::is_empty) {
                        return Err(GrammarError::InvalidEntry(format!(
                            "transitive verb '{}' needs a participle form",
                            e.surface
                        )));
                    }
                }
                PartOfSpeech::Auxiliary => {
                    if e.aux_agreement.is_none() {
                        return Err(GrammarError::InvalidEntry(format!(
                            "auxiliary '{}' needs an agreement feature",
                            e.surface
                        )));
                    }
                }
                _ => {}
            }
            if by_surface.insert(e.surface.clone(), i).is_some() {
                return Err(GrammarError::InvalidEntry(format!(
                    "duplicate surface '{}'",
                    e.surface
                )));
            }
        }
        for (i, e) in entries.iter().enumerate() {
            if let Some(p) = &e.participle {
                if by_surface.contains_key(p) {
                    return Err(GrammarError::InvalidEntry(format!(
                        "participle '{p}' collides with a lexicon surface"
                    )));
                }
                participles.entry(p.clone()).or_insert(i);
            }
        }
        Ok(Lexicon {
            entries,
            by_surface,
            participles,
        })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn lookup(&self, surface: &str) -> Option<&LexiconEntry> {
        self.by_surface.get(surface).map(|&i| &self.entries[i])
    }

    pub fn is_auxiliary(&self, surface: &str) -> bool {
        self.lookup(surface)
            .is_some_and(|e| e.pos == PartOfSpeech::Auxiliary)
    }

    pub fn is_noun(&self, surface: &str) -> bool {
        self.lookup(surface).is_some_and(|e| e.pos == PartOfSpeech::Noun)
    }

    pub fn noun_number(&self, surface: &str) -> Option<Number> {
        self.lookup(surface)
            .filter(|e| e.pos == PartOfSpeech::Noun)
            .map(|e| e.number)
    }

    /// Participle form for a verb surface: the entry's own participle for a
    /// bare transitive, or the surface itself when it already is one.
    pub fn participle_form<'a>(&'a self, surface: &'a str) -> Option<&'a str> {
        if self.participles.contains_key(surface) {
            return Some(surface);
        }
        match self.lookup(surface) {
            Some(e) if e.pos == PartOfSpeech::PassiveParticiple => Some(surface),
            Some(e) => e.participle.as_deref(),
            None => None,
        }
    }

    /// True for bare verbs, simple-past/participle forms, and standalone
    /// participle entries. Used to stop the initial-NP scan in metrics.
    pub fn is_verbal(&self, surface: &str) -> bool {
        if self.participles.contains_key(surface) {
            return true;
        }
        self.lookup(surface).is_some_and(|e| {
            matches!(
                e.pos,
                PartOfSpeech::VerbTrans | PartOfSpeech::VerbIntrans | PartOfSpeech::PassiveParticiple
            )
        })
    }

    /// Index iterator over entries of one category, in insertion order.
    pub fn of_pos(&self, pos: PartOfSpeech) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(move |e| e.pos == pos)
    }

    /// All surfaces that may appear in a sentence, including participle forms.
    pub fn all_surfaces(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .map(|e| e.surface.as_str())
            .chain(self.participles.keys().map(|s| s.as_str()))
    }

    /// Parses the plain-text lexicon table: one entry per line,
    /// `surface<TAB or spaces>pos<...>number<...>participle`, `#` comments.
    /// For auxiliaries the number column carries the agreement feature
    /// (`sg`, `pl`, or `both`); `-` marks an absent field.
    pub fn from_table(text: &str) -> Result<Self, GrammarError> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 2 {
                return Err(GrammarError::BadLexiconLine(lineno + 1));
            }
            let pos: PartOfSpeech = fields[1].parse()?;
            let feature = fields.get(2).copied().unwrap_or("-");
            let participle = fields.get(3).copied().filter(|s| *s != "-");
            let mut entry = LexiconEntry::new(fields[0], pos);
            match pos {
                PartOfSpeech::Auxiliary => {
                    entry.aux_agreement = Some(match feature {
                        "sg" => AuxAgreement::Sg,
                        "pl" => AuxAgreement::Pl,
                        "both" | "-" => AuxAgreement::Both,
                        other => return Err(GrammarError::BadLexiconField(other.to_string())),
                    });
                }
                _ => {
                    entry.number = match feature {
                        "sg" => Number::Sg,
                        "pl" => Number::Pl,
                        "-" => Number::NA,
                        other => return Err(GrammarError::BadLexiconField(other.to_string())),
                    };
                }
            }
            entry.participle = participle.map(str::to_string);
            entries.push(entry);
        }
        Lexicon::new(entries)
    }

    /// Renders the same plain-text table accepted by [`Lexicon::from_table`].
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let feature = match e.pos {
                PartOfSpeech::Auxiliary => match e.aux_agreement.unwrap_or(AuxAgreement::Both) {
                    AuxAgreement::Sg => "sg",
                    AuxAgreement::Pl => "pl",
                    AuxAgreement::Both => "both",
                },
                _ => match e.number {
                    Number::Sg => "sg",
                    Number::Pl => "pl",
                    Number::NA => "-",
                },
            };
            let participle = e.participle.as_deref().unwrap_or("-");
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.surface, e.pos, feature, participle));
        }
        out
    }
}

/// Singular/plural animal nouns, regular transitive verbs plus `see`,
/// a handful of intransitives, number-marked auxiliaries, and the closed
/// function words used by the transformations.
pub fn default_entries() -> Vec<LexiconEntry> {
    let mut v = Vec::new();
    const ANIMALS: &[&str] = &[
        "raven", "newt", "salamander", "peacock", "yak", "dog", "cat", "bird", "frog", "toad",
        "lizard", "turtle", "rabbit", "ferret", "badger", "weasel", "otter", "beaver", "heron",
        "crow", "sparrow", "falcon", "eagle", "owl", "bat", "pig", "goat", "cow", "horse",
        "donkey", "camel", "llama", "panda", "koala", "tiger", "lion", "leopard", "zebra",
        "giraffe", "monkey", "lemur", "gecko", "iguana", "parrot", "pelican", "seal", "walrus",
        "dolphin", "whale", "shark",
    ];
    for a in ANIMALS {
        v.push(LexiconEntry::noun(a, Number::Sg));
        let plural = if a.ends_with('s') || a.ends_with('x') {
            format!("{a}es")
        } else {
            format!("{a}s")
        };
        v.push(LexiconEntry::noun(&plural, Number::Pl));
    }
    const TRANS: &[(&str, &str)] = &[
        ("observe", "observed"),
        ("applaud", "applauded"),
        ("admire", "admired"),
        ("follow", "followed"),
        ("watch", "watched"),
        ("approach", "approached"),
        ("avoid", "avoided"),
        ("comfort", "comforted"),
        ("encourage", "encouraged"),
        ("entertain", "entertained"),
        ("amuse", "amused"),
        ("confuse", "confused"),
        ("annoy", "annoyed"),
        ("call", "called"),
        ("visit", "visited"),
        ("help", "helped"),
        ("see", "seen"),
    ];
    for (bare, part) in TRANS {
        v.push(LexiconEntry::verb_trans(bare, part));
    }
    for bare in ["run", "sleep", "swim", "jump", "smile", "laugh", "wait", "arrive"] {
        v.push(LexiconEntry::verb_intrans(bare));
    }
    v.push(LexiconEntry::auxiliary("does", AuxAgreement::Sg));
    v.push(LexiconEntry::auxiliary("do", AuxAgreement::Pl));
    v.push(LexiconEntry::auxiliary("doesn't", AuxAgreement::Sg));
    v.push(LexiconEntry::auxiliary("don't", AuxAgreement::Pl));
    v.push(LexiconEntry::auxiliary("can", AuxAgreement::Both));
    v.push(LexiconEntry::auxiliary("can't", AuxAgreement::Both));
    v.push(LexiconEntry::auxiliary("was", AuxAgreement::Sg));
    v.push(LexiconEntry::auxiliary("were", AuxAgreement::Pl));
    v.push(LexiconEntry::auxiliary("is", AuxAgreement::Sg));
    v.push(LexiconEntry::auxiliary("are", AuxAgreement::Pl));
    for d in ["the", "your", "our", "my", "some", "her"] {
        v.push(LexiconEntry::determiner(d));
    }
    for p in ["near", "behind", "beside", "around", "above", "below", "by"] {
        v.push(LexiconEntry::preposition(p));
    }
    v.push(LexiconEntry::relativizer("that"));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lexicon_is_well_formed() {
        let lex = Lexicon::new(default_entries()).unwrap();
        assert!(lex.is_auxiliary("does"));
        assert!(lex.is_auxiliary("can"));
        assert!(!lex.is_auxiliary("raven"));
        assert_eq!(lex.noun_number("raven"), Some(Number::Sg));
        assert_eq!(lex.noun_number("newts"), Some(Number::Pl));
        assert!(lex.is_verbal("observed"));
        assert!(lex.is_verbal("observe"));
        assert!(lex.is_verbal("run"));
        assert!(!lex.is_verbal("behind"));
    }

    #[test]
    fn transitive_verbs_all_have_participles() {
        let lex = Lexicon::new(default_entries()).unwrap();
        for e in lex.of_pos(PartOfSpeech::VerbTrans) {
            assert!(e.participle.as_deref().is_some_and(|p| !p.is_empty()));
        }
    }

    #[test]
    fn rejects_duplicate_surfaces() {
        let entries = vec![
            LexiconEntry::noun("raven", Number::Sg),
            LexiconEntry::determiner("raven"),
        ];
        assert!(Lexicon::new(entries).is_err());
    }

    #[test]
    fn rejects_noun_without_number() {
        let mut e = LexiconEntry::noun("raven", Number::Sg);
        e.number = Number::NA;
        assert!(Lexicon::new(vec![e]).is_err());
    }

    #[test]
    fn table_round_trip() {
        let lex = Lexicon::new(default_entries()).unwrap();
        let table = lex.to_table();
        let back = Lexicon::from_table(&table).unwrap();
        assert_eq!(lex.entries(), back.entries());
    }

    #[test]
    fn table_rejects_garbage() {
        assert!(Lexicon::from_table("raven").is_err());
        assert!(Lexicon::from_table("raven nonsense-pos sg -").is_err());
    }
}
