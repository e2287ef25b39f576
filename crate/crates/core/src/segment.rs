//! Rule-based segmentation into paragraphs, sentences and phrases, plus
//! tokenization and the pluggable token normalizer.
//!
//! Delimiter matches never split a word or numeral token, so gaps between
//! constituents hold only whitespace and punctuation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{ConstituentId, ConstituentTree, Document, GapMark, Level, Span, Token, TokenClass};

pub const DEFAULT_PARAGRAPH: &str = r"\n(?:[ \t]*\n)+";
pub const DEFAULT_SENTENCE: &str = r"[.!?:]\s+";
pub const DEFAULT_PHRASE: &str = r"[,;:()]";
pub const DEFAULT_NUMERAL: &str = r"[0-9]+(?:[.,/-][0-9]+)*";

#[derive(Clone, Debug)]
pub struct SegmentationRules {
    paragraph: Regex,
    sentence: Regex,
    phrase: Regex,
    numeral: String,
    numeral_prefix: Regex,
    numeral_full: Regex,
    abbreviations: BTreeSet<String>,
}

impl Default for SegmentationRules {
    fn default() -> Self {
        SegmentationRules::new(
            DEFAULT_PARAGRAPH,
            DEFAULT_SENTENCE,
            DEFAULT_PHRASE,
            DEFAULT_NUMERAL,
            std::iter::empty::<String>(),
        )
        .expect("default patterns compile")
    }
}

fn compile(key: &str, pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| Error::Pattern { key: key.to_string(), message: e.to_string() })
}

impl SegmentationRules {
    pub fn new(
        paragraph: &str,
        sentence: &str,
        phrase: &str,
        numeral: &str,
        abbreviations: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        Ok(SegmentationRules {
            paragraph: compile("paragraph", paragraph)?,
            sentence: compile("sentence", sentence)?,
            phrase: compile("phrase", phrase)?,
            numeral: numeral.to_string(),
            numeral_prefix: compile("numeral", &format!("^(?:{numeral})"))?,
            numeral_full: compile("numeral", &format!("^(?:{numeral})$"))?,
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.into().trim_end_matches('.').to_string())
                .filter(|a| !a.is_empty())
                .collect(),
        })
    }

    pub fn paragraph_pattern(&self) -> &str {
        self.paragraph.as_str()
    }

    pub fn sentence_pattern(&self) -> &str {
        self.sentence.as_str()
    }

    pub fn phrase_pattern(&self) -> &str {
        self.phrase.as_str()
    }

    pub fn numeral_pattern(&self) -> &str {
        &self.numeral
    }

    pub fn abbreviations(&self) -> &BTreeSet<String> {
        &self.abbreviations
    }

    pub fn is_numeral(&self, s: &str) -> bool {
        !s.is_empty() && self.numeral_full.is_match(s)
    }
}

/// Maps a token surface to the form used for counting and matching.
#[derive(Clone)]
pub struct Normalizer {
    name: String,
    map: Arc<dyn Fn(&str) -> String + Send + Sync>,
}

impl fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Normalizer").field("name", &self.name).finish()
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::case_fold()
    }
}

impl Normalizer {
    pub fn new(name: impl Into<String>, map: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Normalizer { name: name.into(), map: Arc::new(map) }
    }

    pub fn identity() -> Self {
        Normalizer::new("identity", str::to_string)
    }

    pub fn case_fold() -> Self {
        Normalizer::new("casefold", str::to_lowercase)
    }

    /// Case-folds, then replaces forms found in `lemmas` (keys are matched
    /// after case-folding).
    pub fn lemmatizing(name: impl Into<String>, lemmas: HashMap<String, String>) -> Self {
        let lemmas: HashMap<String, String> =
            lemmas.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        Normalizer::new(name, move |s| {
            let folded = s.to_lowercase();
            lemmas.get(&folded).cloned().unwrap_or(folded)
        })
    }

    /// Additionally rewrites decimal commas in numerals (`1,5` → `1.5`).
    pub fn with_decimal_point(self) -> Self {
        let inner = self.map.clone();
        let name = format!("{}+decimal", self.name);
        Normalizer::new(name, move |s| {
            let out = inner(s);
            let mut parts = out.split(',');
            let is_decimal = out.matches(',').count() == 1
                && parts.all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit()));
            if is_decimal {
                out.replace(',', ".")
            } else {
                out
            }
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, surface: &str) -> String {
        if surface.is_empty() {
            return String::new();
        }
        (self.map)(surface)
    }
}

pub(crate) fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32, 0x2010..=0x2027 | 0x2030..=0x205E | 0x3000..=0x303F | 0xFF01..=0xFF0F)
        || matches!(c, '«' | '»' | '¡' | '¿' | '§' | '¶' | '·' | '°')
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !is_punct(c)
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '’' | '-')
}

#[derive(Clone, Debug)]
struct RawToken {
    bytes: (usize, usize),
    class: TokenClass,
}

fn scan_tokens(text: &str, rules: &SegmentationRules) -> Vec<RawToken> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if let Some(m) = rules.numeral_prefix.find(&text[start..]) {
            let end = start + m.end();
            let follows_word = text[end..].chars().next().is_some_and(is_word_char);
            if m.end() > 0 && !m.as_str().chars().any(char::is_whitespace) && !follows_word {
                out.push(RawToken { bytes: (start, end), class: TokenClass::Numeral });
                while i < chars.len() && chars[i].0 < end {
                    i += 1;
                }
                continue;
            }
        }
        if is_word_char(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_word_char(cj) {
                    j += 1;
                } else if is_joiner(cj) && chars.get(j + 1).is_some_and(|&(_, n)| is_word_char(n)) {
                    j += 2;
                } else {
                    break;
                }
            }
            let end = byte_at(j);
            let class = if rules.is_numeral(&text[start..end]) { TokenClass::Numeral } else { TokenClass::Word };
            out.push(RawToken { bytes: (start, end), class });
            i = j;
        } else {
            out.push(RawToken { bytes: (start, byte_at(i + 1)), class: TokenClass::Punct });
            i += 1;
        }
    }
    out
}

/// Byte ranges of word and numeral tokens, for split-point checks.
struct Solid<'a>(&'a [RawToken], Vec<usize>);

impl<'a> Solid<'a> {
    fn new(tokens: &'a [RawToken]) -> Self {
        let idx = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.class != TokenClass::Punct)
            .map(|(i, _)| i)
            .collect();
        Solid(tokens, idx)
    }

    /// Whether `[a, b)` overlaps a word/numeral token, or (for an empty
    /// range) falls strictly inside one.
    fn overlaps(&self, a: usize, b: usize) -> bool {
        let pos = self.1.partition_point(|&i| self.0[i].bytes.1 <= a);
        match self.1.get(pos).map(|&i| self.0[i].bytes) {
            Some((s, e)) if a == b => s < a && a < e,
            Some((s, _)) => s < b,
            None => false,
        }
    }
}

fn trim(text: &str, (a, b): (usize, usize)) -> Option<(usize, usize)> {
    let s = &text[a..b];
    let lead = s.len() - s.trim_start().len();
    let tail = s.len() - s.trim_end().len();
    (a + lead < b - tail).then_some((a + lead, b - tail))
}

/// Splits `[lo, hi)` at non-empty matches of `re` that do not touch word
/// tokens. Returns the pieces between matches (untrimmed).
fn split_by(
    text: &str,
    (lo, hi): (usize, usize),
    re: &Regex,
    solid: &Solid<'_>,
    mut accept: impl FnMut(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    let mut pieces = Vec::new();
    let mut start = lo;
    for m in re.find_iter(&text[lo..hi]) {
        let (a, b) = (lo + m.start(), lo + m.end());
        if a == b || a < start || solid.overlaps(a, b) || !accept(a, b) {
            continue;
        }
        pieces.push((start, a));
        start = b;
    }
    pieces.push((start, hi));
    pieces
}

fn sentence_guard(text: &str, (a, b): (usize, usize), rules: &SegmentationRules) -> bool {
    if !text[a..b].starts_with('.') {
        return false;
    }
    let before = text[..a].rsplit(char::is_whitespace).next().unwrap_or("");
    let before = before.trim_start_matches(is_punct);
    let next_ok = text[b..]
        .trim_start()
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit() || c.is_lowercase());
    let mut chars = before.chars();
    let single_upper = matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase());
    let prev_ok = single_upper || rules.abbreviations.contains(before) || rules.is_numeral(before);
    prev_ok && next_ok
}

pub(crate) struct Segmentation {
    pub tree: ConstituentTree,
    pub tokens: Vec<Token>,
    pub gaps: Vec<GapMark>,
}

pub(crate) fn segment_full(text: &str, rules: &SegmentationRules) -> Segmentation {
    let raw = scan_tokens(text, rules);
    let solid = Solid::new(&raw);
    let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    char_bytes.push(text.len());
    let to_char = |b: usize| char_bytes.partition_point(|&x| x < b);
    let char_span = |(a, b): (usize, usize)| Span::new(to_char(a), to_char(b));

    let mut entries: Vec<(Level, Span, Option<ConstituentId>)> =
        vec![(Level::Document, Span::new(0, char_bytes.len() - 1), None)];
    let mut phrase_bytes: Vec<(usize, usize)> = Vec::new();

    let paragraphs = split_by(text, (0, text.len()), &rules.paragraph, &solid, |_, _| true);
    for para in paragraphs.into_iter().filter_map(|p| trim(text, p)) {
        let para_id = ConstituentId(entries.len() as u32);
        entries.push((Level::Paragraph, char_span(para), Some(ConstituentId::ROOT)));
        let mut sentences = Vec::new();
        let mut start = para.0;
        for m in rules.sentence.find_iter(&text[para.0..para.1]) {
            let (a, b) = (para.0 + m.start(), para.0 + m.end());
            if a == b || solid.overlaps(b, b) || solid.overlaps(a, a) || sentence_guard(text, (a, b), rules) {
                continue;
            }
            sentences.push((start, b));
            start = b;
        }
        sentences.push((start, para.1));
        for sent in sentences.into_iter().filter_map(|s| trim(text, s)) {
            let sent_id = ConstituentId(entries.len() as u32);
            entries.push((Level::Sentence, char_span(sent), Some(para_id)));
            for phrase in phrases_of(text, sent, rules, &solid) {
                entries.push((Level::Phrase, char_span(phrase), Some(sent_id)));
                phrase_bytes.push(phrase);
            }
        }
    }
    let tree = ConstituentTree::from_preorder(entries, char_bytes.len() - 1)
        .expect("segmenter builds a valid tree");

    let mut tokens = Vec::new();
    let mut gaps = Vec::new();
    let mut pi = 0;
    let mut index = 0;
    for t in &raw {
        while pi < phrase_bytes.len() && phrase_bytes[pi].1 <= t.bytes.0 {
            pi += 1;
            index = 0;
        }
        let inside = phrase_bytes
            .get(pi)
            .is_some_and(|&(a, b)| a <= t.bytes.0 && t.bytes.1 <= b);
        let surface = &text[t.bytes.0..t.bytes.1];
        if inside {
            tokens.push(Token {
                surface: surface.to_string(),
                normalized: surface.to_string(),
                index,
                class: t.class,
                span: char_span(t.bytes),
            });
            index += 1;
        } else {
            debug_assert_eq!(t.class, TokenClass::Punct);
            gaps.push(GapMark {
                offset: to_char(t.bytes.0),
                mark: surface.chars().next().expect("tokens are non-empty"),
            });
        }
    }
    Segmentation { tree, tokens, gaps }
}

fn phrases_of(
    text: &str,
    sent: (usize, usize),
    rules: &SegmentationRules,
    solid: &Solid<'_>,
) -> Vec<(usize, usize)> {
    let pieces = split_by(text, sent, &rules.phrase, solid, |_, b| b < sent.1);
    let has_word = |(a, b): (usize, usize)| text[a..b].chars().any(is_word_char);
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut pending: Option<usize> = None;
    for piece in pieces.into_iter().filter_map(|p| trim(text, p)) {
        if has_word(piece) {
            out.push((pending.take().unwrap_or(piece.0), piece.1));
        } else if let Some(last) = out.last_mut() {
            last.1 = piece.1;
        } else if pending.is_none() {
            pending = Some(piece.0);
        }
    }
    if out.is_empty() {
        out.push(sent);
    }
    out
}

/// Segments `text` into a constituent tree. Total: never fails.
pub fn segment(text: &str, rules: &SegmentationRules) -> ConstituentTree {
    segment_full(text, rules).tree
}

/// Tokens of one phrase, with `normalized` equal to the surface.
pub fn tokenize(doc: &Document, phrase: ConstituentId) -> Result<Vec<Token>> {
    let c = doc.constituent(phrase)?;
    if c.level != Level::Phrase {
        return Err(Error::Level { expected: Level::Phrase, found: c.level });
    }
    Ok(doc
        .tokens_under(phrase)?
        .iter()
        .map(|t| Token { normalized: t.surface.clone(), ..t.clone() })
        .collect())
}

/// Tokenizes free text (a query term, say) as one phrase.
pub fn tokenize_text(text: &str, rules: &SegmentationRules) -> Vec<Token> {
    let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    char_bytes.push(text.len());
    let to_char = |b: usize| char_bytes.partition_point(|&x| x < b);
    scan_tokens(text, rules)
        .into_iter()
        .enumerate()
        .map(|(index, t)| {
            let surface = text[t.bytes.0..t.bytes.1].to_string();
            Token {
                normalized: surface.clone(),
                surface,
                index,
                class: t.class,
                span: Span::new(to_char(t.bytes.0), to_char(t.bytes.1)),
            }
        })
        .collect()
}

pub fn normalize_tokens(tokens: &[Token], normalizer: &Normalizer) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| Token { normalized: normalizer.apply(&t.surface), ..t.clone() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DocId;
    use proptest::prelude::*;

    fn doc(text: &str) -> Document {
        Document::new(DocId::new("d").unwrap(), "en", text, &SegmentationRules::default(), &Normalizer::case_fold())
    }

    fn level_texts(d: &Document, level: Level) -> Vec<&str> {
        d.tree().at_level(level).map(|c| d.slice(c.span).unwrap()).collect()
    }

    #[test]
    fn empty_text_is_root_only() {
        let tree = segment("", &SegmentationRules::default());
        assert_eq!(tree.len(), 1);
        assert!(tree.root().children.is_empty());
    }

    #[test]
    fn paragraphs_and_sentences() {
        let d = doc("One. Two.\n\nThree.");
        let paras: Vec<_> = d.tree().at_level(Level::Paragraph).collect();
        assert_eq!(paras.len(), 2);
        assert_eq!(paras[0].children.len(), 2);
        assert_eq!(paras[1].children.len(), 1);
        assert_eq!(level_texts(&d, Level::Sentence), vec!["One.", "Two.", "Three."]);
    }

    #[test]
    fn numeral_guard_keeps_one_sentence() {
        let d = doc("Section 1. 5 applies.");
        assert_eq!(level_texts(&d, Level::Sentence), vec!["Section 1. 5 applies."]);
        // the split "1. 5" still tokenizes as numeral, punct, numeral
        let classes: Vec<TokenClass> = d.tokens().iter().map(|t| t.class).collect();
        assert_eq!(
            classes,
            vec![
                TokenClass::Word,
                TokenClass::Numeral,
                TokenClass::Punct,
                TokenClass::Numeral,
                TokenClass::Word,
                TokenClass::Punct
            ]
        );
    }

    #[test]
    fn initial_and_abbreviation_guards() {
        assert_eq!(level_texts(&doc("J. smith came. Then left."), Level::Sentence).len(), 2);
        let rules = SegmentationRules::new(
            DEFAULT_PARAGRAPH,
            DEFAULT_SENTENCE,
            DEFAULT_PHRASE,
            DEFAULT_NUMERAL,
            ["Art."],
        )
        .unwrap();
        let d = Document::new(DocId::new("d").unwrap(), "en", "See Art. 12 now.", &rules, &Normalizer::case_fold());
        assert_eq!(level_texts(&d, Level::Sentence), vec!["See Art. 12 now."]);
        // without the abbreviation list the period breaks
        assert_eq!(level_texts(&doc("See Art. 12 now."), Level::Sentence).len(), 2);
    }

    #[test]
    fn phrases_split_on_commas() {
        let d = doc("pigs, 12 cows.");
        assert_eq!(level_texts(&d, Level::Phrase), vec!["pigs", "12 cows."]);
        assert_eq!(d.gaps(), &[GapMark { offset: 4, mark: ',' }]);

        let first = d.tree().at_level(Level::Phrase).next().unwrap().id;
        let toks = tokenize(&d, first).unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!((toks[0].surface.as_str(), toks[0].class), ("pigs", TokenClass::Word));

        let second = d.tree().at_level(Level::Phrase).nth(1).unwrap().id;
        let toks = tokenize(&d, second).unwrap();
        let got: Vec<(&str, TokenClass, usize)> =
            toks.iter().map(|t| (t.surface.as_str(), t.class, t.index)).collect();
        assert_eq!(
            got,
            vec![
                ("12", TokenClass::Numeral, 0),
                ("cows", TokenClass::Word, 1),
                (".", TokenClass::Punct, 2)
            ]
        );
    }

    #[test]
    fn decimal_numeral_is_one_token() {
        let toks = tokenize_text("1.5", &SegmentationRules::default());
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].class, TokenClass::Numeral);
        // a decimal comma is not a phrase break
        let d = doc("weigh 1,5 kg");
        assert_eq!(level_texts(&d, Level::Phrase), vec!["weigh 1,5 kg"]);
    }

    #[test]
    fn trailing_punctuation_only_piece_joins_phrase() {
        let d = doc("foo (bar).");
        assert_eq!(level_texts(&d, Level::Phrase), vec!["foo", "bar)."]);
        let d = doc("...");
        assert_eq!(level_texts(&d, Level::Phrase), vec!["..."]);
    }

    #[test]
    fn tokenize_rejects_non_phrase() {
        let d = doc("a b");
        assert!(matches!(
            tokenize(&d, ConstituentId::ROOT),
            Err(Error::Level { expected: Level::Phrase, found: Level::Document })
        ));
    }

    #[test]
    fn word_joiners() {
        let toks = tokenize_text("don't well-known 4th -x", &SegmentationRules::default());
        let s: Vec<(&str, TokenClass)> = toks.iter().map(|t| (t.surface.as_str(), t.class)).collect();
        assert_eq!(
            s,
            vec![
                ("don't", TokenClass::Word),
                ("well-known", TokenClass::Word),
                ("4th", TokenClass::Word),
                ("-", TokenClass::Punct),
                ("x", TokenClass::Word)
            ]
        );
    }

    #[test]
    fn normalizers() {
        let toks = tokenize_text("Make", &SegmentationRules::default());
        assert_eq!(normalize_tokens(&toks, &Normalizer::case_fold())[0].normalized, "make");
        assert_eq!(normalize_tokens(&toks, &Normalizer::identity()), toks);

        let lemmas: HashMap<String, String> =
            [("made", "make"), ("making", "make")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let lem = Normalizer::lemmatizing("stub", lemmas);
        let toks = tokenize_text("make made making", &SegmentationRules::default());
        let before: BTreeSet<&str> = toks.iter().map(|t| t.normalized.as_str()).collect();
        let after_toks = normalize_tokens(&toks, &lem);
        let after: BTreeSet<&str> = after_toks.iter().map(|t| t.normalized.as_str()).collect();
        assert_eq!((before.len(), after.len()), (3, 1));
        assert!(after_toks.iter().zip(&toks).all(|(a, b)| a.surface == b.surface));

        let dec = Normalizer::case_fold().with_decimal_point();
        assert_eq!(dec.apply("1,5"), "1.5");
        assert_eq!(dec.apply("1,000,000"), "1,000,000");
        assert_eq!(dec.apply(""), "");
    }

    fn check_document(text: &str) {
        let d = doc(text);
        let tree = d.tree();
        // reconstruction: phrase texts plus gaps rebuild the input, and gaps hold no words
        let mut rebuilt = String::new();
        let mut cursor = 0;
        for p in tree.at_level(Level::Phrase) {
            assert!(!p.span.is_empty());
            let gap = d.slice(Span::new(cursor, p.span.start)).unwrap();
            assert!(gap.chars().all(|c| !is_word_char(c)), "word material in gap {gap:?}");
            rebuilt.push_str(gap);
            rebuilt.push_str(d.slice(p.span).unwrap());
            cursor = p.span.end;
        }
        let tail = d.slice(Span::new(cursor, d.char_len())).unwrap();
        assert!(tail.chars().all(|c| !is_word_char(c)));
        rebuilt.push_str(tail);
        assert_eq!(rebuilt, text);
        // word counts add up across levels
        for c in tree.iter() {
            let own = d.tokens_under(c.id).unwrap().iter().filter(|t| t.class == TokenClass::Word).count();
            if !c.children.is_empty() {
                let sum: usize = c
                    .children
                    .iter()
                    .map(|&k| d.tokens_under(k).unwrap().iter().filter(|t| t.class == TokenClass::Word).count())
                    .sum();
                assert_eq!(own, sum);
            }
            assert!(!c.span.is_empty() || c.id == ConstituentId::ROOT);
        }
        // numeral classification agrees with the pattern
        let rules = SegmentationRules::default();
        for t in d.tokens() {
            assert_eq!(t.class == TokenClass::Numeral, rules.is_numeral(&t.surface), "{t:?}");
        }
    }

    proptest! {
        #[test]
        fn segmentation_is_total_and_reconstructs(text in "[a-zA-Z0-9 .,;:!?()\\n\t'é-]{0,200}") {
            check_document(&text);
        }

        #[test]
        fn segmentation_handles_arbitrary_unicode(text in "\\PC{0,120}") {
            check_document(&text);
        }

        #[test]
        fn segmentation_is_deterministic(text in "[a-z0-9 .,\\n]{0,120}") {
            let a = doc(&text);
            let b = doc(&text);
            prop_assert_eq!(a, b);
        }
    }
}
