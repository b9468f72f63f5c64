//! Text analysis: normalize, tokenize, drop stopwords, stem.
//!
//! The same pipeline is used for documents at indexing time, for queries,
//! and for thesaurus terms, so that a query term and a document term compare
//! equal exactly when they are the same analyzed surface form.
//!
//! Stemming is a light, inflection-only (Krovetz-style) stemmer: it removes
//! plural `-s`/`-es`/`-ies`, past tense `-ed` and progressive `-ing`, and
//! consults a versioned exception lexicon for forms the rules cannot
//! recover. Derivational suffixes are left alone, so `injury` and `injure`
//! stay distinct terms.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::Deref;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the built-in stemming rules and exception lexicon. Stored in
/// index metadata so an index is always read back with the rules it was
/// built with.
pub const STEMMER_VERSION: u32 = 1;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const DEFAULT_STEM_LEXICON: &str = include_str!("../data/stem_exceptions.txt");

// Upper bound on rule applications; every rule shortens the word, so this
// only matters for pathological custom lexicons with mapping cycles.
const MAX_STEM_PASSES: usize = 32;

/// An analyzed term: lowercase (when configured), stemmed, whitespace-free.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Term(String);

impl Term {
    /// Wraps an already-analyzed surface form.
    pub fn new(surface: impl Into<String>) -> Self {
        Term(surface.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl Deref for Term {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Term {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Term {
    fn from(s: &str) -> Self {
        Term(s.to_owned())
    }
}

/// Token boundary rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenPattern {
    /// Maximal runs of Unicode letters and digits; everything else separates.
    #[default]
    AlphanumericRuns,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stem: bool,
    pub stopwords: BTreeSet<String>,
    #[serde(default)]
    pub token_pattern: TokenPattern,
    pub stemmer_version: u32,
    /// Full text of a custom stemmer exception lexicon. `None` selects the
    /// built-in lexicon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem_lexicon: Option<String>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            lowercase: true,
            stem: true,
            stopwords: parse_word_list(DEFAULT_STOPWORDS).into_iter().collect(),
            token_pattern: TokenPattern::AlphanumericRuns,
            stemmer_version: STEMMER_VERSION,
            stem_lexicon: None,
        }
    }
}

impl AnalyzerConfig {
    /// Replaces the stopword list with the contents of a word-list file.
    pub fn with_stopwords_text(mut self, text: &str) -> Self {
        self.stopwords = parse_word_list(text).into_iter().collect();
        self
    }

    pub fn without_stopwords(mut self) -> Self {
        self.stopwords.clear();
        self
    }

    pub fn with_stemming(mut self, stem: bool) -> Self {
        self.stem = stem;
        self
    }
}

/// Parses a one-entry-per-line file with `#` comments.
pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(strip_comment)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

/// Inflectional stemmer driven by suffix rules plus an exception lexicon.
#[derive(Clone, Debug, Default)]
pub struct Stemmer {
    mappings: HashMap<String, String>,
    protected: HashSet<String>,
}

impl Stemmer {
    /// The stemmer with the built-in exception lexicon.
    pub fn builtin() -> &'static Stemmer {
        static BUILTIN: OnceLock<Stemmer> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Stemmer::from_lexicon(DEFAULT_STEM_LEXICON).expect("built-in stem lexicon is well formed")
        })
    }

    /// Parses an exception lexicon: `word stem` maps a form to its stem,
    /// a bare `word` is never stemmed.
    pub fn from_lexicon(text: &str) -> Result<Stemmer> {
        let mut stemmer = Stemmer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [word] => {
                    stemmer.protected.insert(word.to_string());
                }
                [word, stem] => {
                    stemmer.mappings.insert(word.to_string(), stem.to_string());
                    stemmer.protected.insert(stem.to_string());
                }
                _ => {
                    return Err(Error::parse(
                        "stem lexicon",
                        i + 1,
                        "expected `word` or `word stem`",
                    ))
                }
            }
        }
        Ok(stemmer)
    }

    /// Stems a lowercase word. Applies rules until the word no longer
    /// changes, so `stem(stem(w)) == stem(w)`.
    pub fn stem(&self, word: &str) -> String {
        let mut current = word.to_owned();
        for _ in 0..MAX_STEM_PASSES {
            match self.step(&current) {
                Some(next) if next != current => current = next,
                _ => break,
            }
        }
        current
    }

    fn step(&self, w: &str) -> Option<String> {
        if self.protected.contains(w) {
            return None;
        }
        if let Some(mapped) = self.mappings.get(w) {
            return Some(mapped.clone());
        }
        if w.chars().count() < 3 {
            return None;
        }
        if w.ends_with('s') {
            strip_plural(w)
        } else if w.ends_with("ed") {
            strip_past(w)
        } else if w.ends_with("ing") {
            strip_progressive(w)
        } else {
            None
        }
    }
}

/// Stems with the built-in lexicon.
pub fn stem(word: &str) -> String {
    Stemmer::builtin().stem(word)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| is_vowel(c) || c == 'y')
}

fn is_consonant_at(chars: &[char], i: usize) -> bool {
    let c = chars[i];
    if is_vowel(c) {
        return false;
    }
    if c == 'y' {
        // y after a consonant acts as a vowel
        return i == 0 || !is_consonant_at(chars, i - 1);
    }
    c.is_alphabetic()
}

/// Number of vowel-consonant sequences, `[C](VC)^m[V]`.
fn measure(chars: &[char]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..chars.len() {
        let cons = is_consonant_at(chars, i);
        if cons && prev_vowel {
            m += 1;
        }
        prev_vowel = !cons;
    }
    m
}

fn ends_cvc(chars: &[char]) -> bool {
    let n = chars.len();
    n >= 3
        && is_consonant_at(chars, n - 3)
        && !is_consonant_at(chars, n - 2)
        && is_consonant_at(chars, n - 1)
        && !matches!(chars[n - 1], 'w' | 'x' | 'y')
}

fn strip_plural(w: &str) -> Option<String> {
    if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
        return None;
    }
    if let Some(base) = w.strip_suffix("ies") {
        return if base.chars().count() >= 2 {
            Some(format!("{base}y"))
        } else {
            Some(format!("{base}ie"))
        };
    }
    if let Some(base) = w.strip_suffix("es") {
        if ["ch", "sh", "x", "z", "ss"].iter().any(|s| base.ends_with(s)) && has_vowel(base) {
            return Some(base.to_owned());
        }
    }
    let base = &w[..w.len() - 1];
    if base.chars().count() >= 2 && has_vowel(base) {
        Some(base.to_owned())
    } else {
        None
    }
}

fn strip_past(w: &str) -> Option<String> {
    if w.ends_with("eed") {
        return None;
    }
    if let Some(base) = w.strip_suffix("ied") {
        return if base.chars().count() >= 2 {
            Some(format!("{base}y"))
        } else {
            Some(format!("{base}ie"))
        };
    }
    let base = &w[..w.len() - 2];
    restore_base(base)
}

fn strip_progressive(w: &str) -> Option<String> {
    let base = &w[..w.len() - 3];
    restore_base(base)
}

/// Repairs a base after removing `-ed`/`-ing`: undoubles a final consonant,
/// or restores a silent `e`.
fn restore_base(base: &str) -> Option<String> {
    let chars: Vec<char> = base.chars().collect();
    if chars.len() < 2 || !has_vowel(base) {
        return None;
    }
    if base.ends_with("at") && !base.ends_with("eat") && !base.ends_with("oat")
        || base.ends_with("bl")
        || base.ends_with("iz")
    {
        return Some(format!("{base}e"));
    }
    let n = chars.len();
    if chars[n - 1] == chars[n - 2]
        && is_consonant_at(&chars, n - 1)
        && !matches!(chars[n - 1], 'l' | 's' | 'z')
    {
        return Some(chars[..n - 1].iter().collect());
    }
    if measure(&chars) == 1 && ends_cvc(&chars) {
        return Some(format!("{base}e"));
    }
    Some(base.to_owned())
}

/// Configured text analyzer. Cheap to share across threads.
#[derive(Clone, Debug)]
pub struct Analyzer {
    cfg: AnalyzerConfig,
    stemmer: Option<Stemmer>,
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::new(AnalyzerConfig::default()).expect("default analyzer config is valid")
    }
}

impl Analyzer {
    pub fn new(cfg: AnalyzerConfig) -> Result<Analyzer> {
        if cfg.stemmer_version != STEMMER_VERSION {
            return Err(Error::VersionMismatch {
                found: cfg.stemmer_version,
                expected: STEMMER_VERSION,
            });
        }
        let stemmer = match &cfg.stem_lexicon {
            Some(text) => Some(Stemmer::from_lexicon(text)?),
            None => None,
        };
        Ok(Analyzer { cfg, stemmer })
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.cfg
    }

    fn stemmer(&self) -> &Stemmer {
        self.stemmer.as_ref().unwrap_or_else(|| Stemmer::builtin())
    }

    /// Analyzes `text`. With `keep_stopwords`, stopwords stay in the output
    /// (still stemmed); otherwise a token is dropped when either its surface
    /// form or its stem is a stopword.
    pub fn analyze(&self, text: &str, keep_stopwords: bool) -> Vec<Term> {
        let normalized;
        let text = if self.cfg.lowercase {
            normalized = text.to_lowercase();
            normalized.as_str()
        } else {
            text
        };
        let mut out = Vec::new();
        for token in tokenize(text, self.cfg.token_pattern) {
            if !keep_stopwords && self.cfg.stopwords.contains(token) {
                continue;
            }
            let surface = if self.cfg.stem {
                self.stemmer().stem(token)
            } else {
                token.to_owned()
            };
            if !keep_stopwords && self.cfg.stopwords.contains(&surface) {
                continue;
            }
            out.push(Term(surface));
        }
        out
    }

    /// Analyzes a single word, returning `None` when it is filtered out or
    /// splits into several tokens.
    pub fn analyze_term(&self, word: &str, keep_stopwords: bool) -> Option<Term> {
        let mut terms = self.analyze(word, keep_stopwords);
        if terms.len() == 1 {
            terms.pop()
        } else {
            None
        }
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.cfg.stopwords.contains(term)
    }
}

/// Splits text into tokens according to `pattern`.
pub fn tokenize(text: &str, pattern: TokenPattern) -> impl Iterator<Item = &str> {
    match pattern {
        TokenPattern::AlphanumericRuns => text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty()),
    }
}
