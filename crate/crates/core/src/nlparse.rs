//! Restricted instruction language.
//!
//! Single-clause imperatives such as `YuMi, pick the green nut!` are turned
//! into an [`IntentFrame`] by one of two strategies:
//!
//! * [`Strategy::Heuristic`]: rule-table part-of-speech tags, then
//!   positional heuristics (vocative actor, first verb, last noun).
//! * [`Strategy::Triplet`]: noun-phrase chunking and a
//!   subject / predicate / object triplet.
//!
//! Word classes come from a [`Lexicon`] loaded from JSON. Determiners
//! (`the`, `a`, `an`) and conjunctions (`and`, `or`, `then`) are closed
//! classes and fixed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::PropertyValue;

pub const DEFAULT_ACTOR: &str = "yumi";

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.json");
const CONJUNCTIONS: [&str; 3] = ["and", "or", "then"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty instruction")]
    EmptyInput,
    #[error("no verb found")]
    NoVerbFound,
    #[error("no object to act on")]
    NoPatientFound,
    #[error("no subject-predicate-object triplet found")]
    NoTripletFound,
    #[error("unknown modifier `{0}`")]
    UnknownModifier(String),
    #[error("only single-clause commands are supported (found `{0}`)")]
    UnsupportedConjunction(String),
    #[error("unexpected word `{0}`")]
    UnexpectedToken(String),
}

impl ParseError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::EmptyInput => "EmptyInput",
            ParseError::NoVerbFound => "NoVerbFound",
            ParseError::NoPatientFound => "NoPatientFound",
            ParseError::NoTripletFound => "NoTripletFound",
            ParseError::UnknownModifier(_) => "UnknownModifier",
            ParseError::UnsupportedConjunction(_) => "UnsupportedConjunction",
            ParseError::UnexpectedToken(_) => "UnexpectedToken",
        }
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("malformed lexicon: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("word `{word}` is listed as both {first} and {second}")]
    Overlap {
        word: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("`{0}` is reserved as a determiner or conjunction")]
    Reserved(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub verbs: BTreeSet<String>,
    pub colors: BTreeSet<String>,
    pub shapes: BTreeSet<String>,
    #[serde(rename = "stopwords")]
    pub stop_words: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            verbs: Vec<String>,
            colors: Vec<String>,
            shapes: Vec<String>,
            stopwords: Vec<String>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let norm = |v: Vec<String>| v.into_iter().map(|w| w.trim().to_lowercase()).collect();
        let lex = Lexicon {
            verbs: norm(raw.verbs),
            colors: norm(raw.colors),
            shapes: norm(raw.shapes),
            stop_words: norm(raw.stopwords),
        };
        lex.validate()?;
        Ok(lex)
    }

    fn validate(&self) -> Result<(), LexiconError> {
        let classes = [
            ("verbs", &self.verbs),
            ("colors", &self.colors),
            ("shapes", &self.shapes),
            ("stopwords", &self.stop_words),
        ];
        for (i, (first, a)) in classes.iter().enumerate() {
            for (second, b) in &classes[i + 1..] {
                if let Some(word) = a.intersection(b).next() {
                    return Err(LexiconError::Overlap {
                        word: word.clone(),
                        first,
                        second,
                    });
                }
            }
            if let Some(w) = a.iter().find(|w| determiner(w).is_some() || CONJUNCTIONS.contains(&w.as_str())) {
                return Err(LexiconError::Reserved(w.clone()));
            }
        }
        Ok(())
    }

    /// Slot a modifier word fills, if it is a known adjective.
    pub fn modifier_slot(&self, word: &str) -> Option<&'static str> {
        if self.colors.contains(word) {
            Some("color")
        } else if self.shapes.contains(word) {
            Some("shape")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Determiner {
    Definite,
    Indefinite,
    None,
}

fn determiner(word: &str) -> Option<Determiner> {
    match word {
        "the" => Some(Determiner::Definite),
        "a" | "an" => Some(Determiner::Indefinite),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDescriptor {
    pub type_word: String,
    pub modifiers: Vec<PropertyValue>,
    pub determiner: Determiner,
}

/// Predicate-argument structure of one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentFrame {
    pub actor: String,
    pub action: String,
    pub patient: ObjectDescriptor,
    pub raw: String,
}

impl IntentFrame {
    /// Renders the frame back into template form, e.g.
    /// `yumi, pick the green nut!`.
    pub fn render(&self) -> String {
        let mut words = vec![self.action.clone()];
        match self.patient.determiner {
            Determiner::Definite => words.push("the".into()),
            Determiner::Indefinite => words.push("a".into()),
            Determiner::None => {}
        }
        words.extend(self.patient.modifiers.iter().map(|m| m.value.to_string()));
        words.push(self.patient.type_word.clone());
        format!("{}, {}!", self.actor, words.join(" "))
    }

    /// Same frame with `raw` cleared, for comparing intent only.
    pub fn intent(&self) -> IntentFrame {
        IntentFrame {
            raw: String::new(),
            ..self.clone()
        }
    }
}

impl fmt::Display for IntentFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let det = match self.patient.determiner {
            Determiner::Definite => "definite",
            Determiner::Indefinite => "indefinite",
            Determiner::None => "none",
        };
        let mods: Vec<String> = self.patient.modifiers.iter().map(|m| m.to_string()).collect();
        write!(
            f,
            "actor={} action={} patient={} modifiers=[{}] determiner={}",
            self.actor,
            self.action,
            self.patient.type_word,
            mods.join(", "),
            det
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Heuristic,
    Triplet,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "heuristic" => Ok(Strategy::Heuristic),
            "triplet" => Ok(Strategy::Triplet),
            other => Err(format!("unknown strategy `{other}` (expected heuristic or triplet)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Heuristic => "heuristic",
            Strategy::Triplet => "triplet",
        })
    }
}

/// Lowercased word tokens; every other non-space character is its own token.
pub fn tokenize(text: &str) -> Result<Vec<String>, ParseError> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' || c == '-' {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    if tokens.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Vocative,
    Verb,
    Adjective(&'static str),
    Det(Determiner),
    Stop,
    Punct,
    Noun,
}

fn is_punct(token: &str) -> bool {
    !token.chars().any(|c| c.is_alphanumeric() || c == '_' || c == '-')
}

#[derive(Debug, Clone)]
pub struct Parser {
    lexicon: Lexicon,
    default_actor: String,
}

impl Default for Parser {
    fn default() -> Self {
        Self::new(Lexicon::default())
    }
}

impl Parser {
    pub fn new(lexicon: Lexicon) -> Self {
        Self {
            lexicon,
            default_actor: DEFAULT_ACTOR.to_string(),
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn parse(&self, text: &str, strategy: Strategy) -> Result<IntentFrame, ParseError> {
        match strategy {
            Strategy::Heuristic => self.parse_heuristic(text),
            Strategy::Triplet => self.parse_triplet(text),
        }
    }

    fn tokens(&self, text: &str) -> Result<Vec<String>, ParseError> {
        let tokens = tokenize(text)?;
        if let Some(c) = tokens.iter().find(|t| CONJUNCTIONS.contains(&t.as_str())) {
            return Err(ParseError::UnsupportedConjunction(c.clone()));
        }
        Ok(tokens)
    }

    fn tag(&self, token: &str) -> Tag {
        if is_punct(token) {
            Tag::Punct
        } else if self.lexicon.verbs.contains(token) {
            Tag::Verb
        } else if let Some(slot) = self.lexicon.modifier_slot(token) {
            Tag::Adjective(slot)
        } else if let Some(d) = determiner(token) {
            Tag::Det(d)
        } else if self.lexicon.stop_words.contains(token) {
            Tag::Stop
        } else {
            Tag::Noun
        }
    }

    /// Rule-table tagging followed by positional heuristics.
    pub fn parse_heuristic(&self, text: &str) -> Result<IntentFrame, ParseError> {
        let tokens = self.tokens(text)?;
        let mut tags: Vec<Tag> = tokens.iter().map(|t| self.tag(t)).collect();

        let vocative = tokens.len() > 1 && tokens[1] == "," && !is_punct(&tokens[0]);
        if vocative {
            tags[0] = Tag::Vocative;
        }
        // imperative position: with no known verb, the clause-initial word is the verb
        if !tags.contains(&Tag::Verb) {
            let start = if vocative { 2 } else { 0 };
            if tags.get(start) == Some(&Tag::Noun) {
                tags[start] = Tag::Verb;
            }
        }

        let verb = tags.iter().position(|t| *t == Tag::Verb).ok_or(ParseError::NoVerbFound)?;
        let head = tags
            .iter()
            .rposition(|t| *t == Tag::Noun)
            .filter(|h| *h > verb)
            .ok_or(ParseError::NoPatientFound)?;

        let mut start = head;
        let mut modifiers = Vec::new();
        while start > verb + 1 {
            let Tag::Adjective(slot) = tags[start - 1] else { break };
            modifiers.push(PropertyValue::text(slot, tokens[start - 1].clone()));
            start -= 1;
        }
        modifiers.reverse();
        let mut det = Determiner::None;
        if start > verb + 1 {
            if let Tag::Det(d) = tags[start - 1] {
                det = d;
                start -= 1;
            }
        }
        // an unknown word in modifier position outranks other stray tokens
        if let Some(k) = (verb + 1..start).find(|k| tags[*k] == Tag::Noun) {
            return Err(ParseError::UnknownModifier(tokens[k].clone()));
        }
        if let Some(k) = (verb + 1..start).find(|k| !matches!(tags[*k], Tag::Stop | Tag::Punct)) {
            return Err(ParseError::UnexpectedToken(tokens[k].clone()));
        }
        if let Some(k) = (head + 1..tokens.len()).find(|k| !matches!(tags[*k], Tag::Stop | Tag::Punct)) {
            return Err(ParseError::UnexpectedToken(tokens[k].clone()));
        }

        Ok(IntentFrame {
            actor: if vocative { tokens[0].clone() } else { self.default_actor.clone() },
            action: tokens[verb].clone(),
            patient: ObjectDescriptor {
                type_word: tokens[head].clone(),
                modifiers,
                determiner: det,
            },
            raw: text.to_string(),
        })
    }

    /// Subject / predicate / object extraction over noun-phrase chunks.
    pub fn parse_triplet(&self, text: &str) -> Result<IntentFrame, ParseError> {
        let tokens = self.tokens(text)?;
        let tags: Vec<Tag> = tokens.iter().map(|t| self.tag(t)).collect();

        // chunk into noun phrases: maximal runs of determiners, adjectives
        // and nouns; stop words are skipped inside a phrase
        let mut phrases: Vec<Vec<usize>> = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        for (i, tag) in tags.iter().enumerate() {
            match tag {
                Tag::Det(_) | Tag::Adjective(_) | Tag::Noun => current.push(i),
                Tag::Stop => {}
                _ => {
                    if !current.is_empty() {
                        phrases.push(std::mem::take(&mut current));
                    }
                }
            }
        }
        if !current.is_empty() {
            phrases.push(current);
        }

        let predicate = tags.iter().position(|t| *t == Tag::Verb).ok_or(ParseError::NoTripletFound)?;
        let subject = phrases.iter().find(|p| *p.last().expect("non-empty") < predicate);
        let object = phrases
            .iter()
            .find(|p| p[0] > predicate)
            .ok_or(ParseError::NoTripletFound)?;

        let actor = match subject {
            Some(p) => {
                let h = *p.last().expect("non-empty");
                if tags[h] != Tag::Noun {
                    return Err(ParseError::NoTripletFound);
                }
                tokens[h].clone()
            }
            None => self.default_actor.clone(),
        };

        let (&head, body) = object.split_last().expect("non-empty");
        if tags[head] != Tag::Noun {
            return Err(ParseError::NoTripletFound);
        }
        let mut modifiers = Vec::new();
        let mut det = Determiner::None;
        for (pos, &i) in body.iter().enumerate() {
            match tags[i] {
                Tag::Det(d) if pos == 0 => det = d,
                Tag::Adjective(slot) => modifiers.push(PropertyValue::text(slot, tokens[i].clone())),
                Tag::Noun => return Err(ParseError::UnknownModifier(tokens[i].clone())),
                _ => return Err(ParseError::UnexpectedToken(tokens[i].clone())),
            }
        }

        Ok(IntentFrame {
            actor,
            action: tokens[predicate].clone(),
            patient: ObjectDescriptor {
                type_word: tokens[head].clone(),
                modifiers,
                determiner: det,
            },
            raw: text.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Parser {
        Parser::default()
    }

    fn frame(actor: &str, action: &str, noun: &str, mods: &[(&str, &str)], det: Determiner, raw: &str) -> IntentFrame {
        IntentFrame {
            actor: actor.into(),
            action: action.into(),
            patient: ObjectDescriptor {
                type_word: noun.into(),
                modifiers: mods.iter().map(|(s, v)| PropertyValue::text(*s, *v)).collect(),
                determiner: det,
            },
            raw: raw.into(),
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("YuMi, pick the screw!").unwrap(),
            ["yumi", ",", "pick", "the", "screw", "!"]
        );
        assert_eq!(tokenize("pick").unwrap(), ["pick"]);
        assert_eq!(tokenize(""), Err(ParseError::EmptyInput));
        assert_eq!(tokenize("   "), Err(ParseError::EmptyInput));
        assert_eq!(tokenize("pick the new_obj.").unwrap(), ["pick", "the", "new_obj", "."]);
    }

    #[test]
    fn heuristic_examples() {
        let raw = "YuMi, pick the screw!";
        assert_eq!(p().parse_heuristic(raw).unwrap(), frame("yumi", "pick", "screw", &[], Determiner::Definite, raw));
        let raw = "YuMi, pick the green nut!";
        assert_eq!(
            p().parse_heuristic(raw).unwrap(),
            frame("yumi", "pick", "nut", &[("color", "green")], Determiner::Definite, raw)
        );
        let raw = "YuMi, pick big clip!";
        assert_eq!(
            p().parse_heuristic(raw).unwrap(),
            frame("yumi", "pick", "clip", &[("shape", "big")], Determiner::None, raw)
        );
    }

    #[test]
    fn heuristic_errors() {
        assert_eq!(p().parse_heuristic("YuMi, frobnicate!"), Err(ParseError::NoPatientFound));
        assert_eq!(p().parse_heuristic("the green nut"), Err(ParseError::NoVerbFound));
        assert_eq!(
            p().parse_heuristic("YuMi, pick the shiny nut!"),
            Err(ParseError::UnknownModifier("shiny".into()))
        );
        assert_eq!(
            p().parse_heuristic("YuMi, pick the nut and place the box!"),
            Err(ParseError::UnsupportedConjunction("and".into()))
        );
        assert_eq!(
            p().parse_heuristic("YuMi, pick the nut green!"),
            Err(ParseError::UnexpectedToken("green".into()))
        );
    }

    #[test]
    fn unknown_noun_allowed() {
        let f = p().parse_heuristic("YuMi, pick the new_obj!").unwrap();
        assert_eq!(f.patient.type_word, "new_obj");
        let f = p().parse_triplet("YuMi, pick the new_obj!").unwrap();
        assert_eq!(f.patient.type_word, "new_obj");
    }

    #[test]
    fn triplet_examples() {
        let raw = "YuMi, pick the screw!";
        assert_eq!(p().parse_triplet(raw).unwrap(), p().parse_heuristic(raw).unwrap());
        let f = p().parse_triplet("pick the nut").unwrap();
        assert_eq!(f.actor, "yumi");
        assert_eq!(p().parse_triplet("the green nut"), Err(ParseError::NoTripletFound));
        assert_eq!(p().parse_triplet("YuMi, frobnicate!"), Err(ParseError::NoTripletFound));
        assert_eq!(
            p().parse_triplet("YuMi, pick the shiny nut!"),
            Err(ParseError::UnknownModifier("shiny".into()))
        );
    }

    #[test]
    fn dispatch_and_default_strategy() {
        assert_eq!(Strategy::default(), Strategy::Heuristic);
        let raw = "YuMi, pick a small blue clip!";
        assert_eq!(p().parse(raw, Strategy::Heuristic), p().parse_heuristic(raw));
        assert_eq!(p().parse(raw, Strategy::Triplet), p().parse_triplet(raw));
        assert_eq!("Triplet".parse::<Strategy>(), Ok(Strategy::Triplet));
        assert!("srl".parse::<Strategy>().is_err());
    }

    #[test]
    fn render_round_trip() {
        let f = p().parse_heuristic("YuMi, pick a small blue clip!").unwrap();
        assert_eq!(f.render(), "yumi, pick a small blue clip!");
        assert_eq!(p().parse_heuristic(&f.render()).unwrap().intent(), f.intent());
    }

    #[test]
    fn lexicon_loading() {
        let lex = Lexicon::from_json(r#"{"verbs":["Pick","weld"],"colors":["red"],"shapes":["big"],"stopwords":[]}"#).unwrap();
        assert!(lex.verbs.contains("weld"));
        assert!(lex.verbs.contains("pick"));
        let parser = Parser::new(lex);
        assert_eq!(parser.parse_heuristic("YuMi, weld the red box!").unwrap().action, "weld");

        let overlap = Lexicon::from_json(r#"{"verbs":["pick"],"colors":["pick"],"shapes":[],"stopwords":[]}"#);
        assert!(matches!(overlap, Err(LexiconError::Overlap { .. })));
        let reserved = Lexicon::from_json(r#"{"verbs":[],"colors":[],"shapes":[],"stopwords":["the"]}"#);
        assert!(matches!(reserved, Err(LexiconError::Reserved(_))));
        assert!(Lexicon::from_json(r#"{"verbs":[]}"#).is_err());
    }
}
