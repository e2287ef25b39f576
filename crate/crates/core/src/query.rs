//! Read-only queries over a loaded archive.

use std::collections::HashMap;

use serde::Serialize;

use crate::assign::{ConfidenceReport, CounterwordEntry};
use crate::error::{Error, Result};
use crate::lexica::{corpus_stats, CorpusStats};
use crate::model::{BeadShape, Bitext, Constituent, ConstituentId, Document, Level, Side, Span, TokenClass};
use crate::segment::{tokenize_text, Normalizer};
use crate::store::{Archive, FORMAT_VERSION};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstituentRef {
    pub id: ConstituentId,
    pub level: Level,
    pub span: Span,
}

impl From<&Constituent> for ConstituentRef {
    fn from(c: &Constituent) -> Self {
        ConstituentRef { id: c.id, level: c.level, span: c.span }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterpart {
    pub shape: BeadShape,
    pub cost: f64,
    pub constituents: Vec<ConstituentRef>,
    /// Covers all counterpart constituents, including any text between them.
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rung {
    pub constituent: ConstituentRef,
    pub counterpart: Option<Counterpart>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcordanceHit {
    pub bitext: String,
    pub side: Side,
    pub document: String,
    pub phrase: ConstituentRef,
    /// From the first to the last matched token.
    pub highlight: Span,
    pub sentence: ConstituentRef,
    pub sentence_text: String,
    pub counterpart: Option<Counterpart>,
    pub counterpart_text: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Concordance {
    pub term: Vec<String>,
    pub total: usize,
    pub hits: Vec<ConcordanceHit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterwordAnswer {
    pub word: String,
    pub side: Side,
    pub entries: Vec<CounterwordEntry>,
    pub report: ConfidenceReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BitextSummary {
    pub id: String,
    pub source: String,
    pub target: String,
    pub source_language: String,
    pub target_language: String,
    pub links: usize,
    pub total_cost: f64,
    pub degraded: Vec<Level>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArchiveSummary {
    pub format_version: u32,
    pub config_hash: String,
    pub normalizer: String,
    pub bitexts: usize,
    pub documents: usize,
    pub tokens: usize,
    pub links: usize,
    pub lexicon_entries: usize,
    pub presented_entries: usize,
    pub threshold: Option<f64>,
    pub phrases: usize,
    pub forks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SideStats {
    pub source: CorpusStats,
    pub target: CorpusStats,
}

/// Position of a matchable token inside one phrase.
#[derive(Clone, Copy, Debug)]
struct Posting {
    bitext: usize,
    side: Side,
    phrase: ConstituentId,
    offset: usize,
}

/// Words and numerals of a phrase, as `(normalized form, span)`.
fn phrase_terms(doc: &Document, phrase: ConstituentId, normalizer: &Normalizer) -> Vec<(String, Span)> {
    doc.tokens_under(phrase)
        .unwrap_or(&[])
        .iter()
        .filter(|t| t.class != TokenClass::Punct)
        .map(|t| (normalizer.apply(&t.surface), t.span))
        .collect()
}

/// Query engine over an immutable archive. An inverted index from normalized
/// forms to phrase positions is built once at construction.
pub struct QueryEngine {
    archive: Archive,
    normalizer: Normalizer,
    terms: HashMap<(usize, Side, ConstituentId), Vec<(String, Span)>>,
    index: HashMap<String, Vec<Posting>>,
}

impl QueryEngine {
    pub fn new(archive: Archive) -> Self {
        let normalizer = archive.config().build_normalizer();
        let mut terms = HashMap::new();
        let mut index: HashMap<String, Vec<Posting>> = HashMap::new();
        for (b, bitext) in archive.bitexts().iter().enumerate() {
            for side in [Side::Source, Side::Target] {
                let doc = bitext.side(side);
                for phrase in doc.tree().at_level(Level::Phrase) {
                    let found = phrase_terms(doc, phrase.id, &normalizer);
                    for (offset, (form, _)) in found.iter().enumerate() {
                        index.entry(form.clone()).or_default().push(Posting { bitext: b, side, phrase: phrase.id, offset });
                    }
                    terms.insert((b, side, phrase.id), found);
                }
            }
        }
        QueryEngine { archive, normalizer, terms, index }
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn bitext(&self, id: &str) -> Result<&Bitext> {
        self.archive.bitext(id).ok_or_else(|| Error::UnknownBitext(id.to_string()))
    }

    fn counterpart(bitext: &Bitext, side: Side, id: ConstituentId) -> Result<Option<Counterpart>> {
        let Some((members, link)) = bitext.counterpart(side, id)? else {
            return Ok(None);
        };
        let span = Span::new(members[0].span.start, members[members.len() - 1].span.end);
        Ok(Some(Counterpart {
            shape: link.shape()?,
            cost: link.cost,
            constituents: members.into_iter().map(ConstituentRef::from).collect(),
            span,
        }))
    }

    /// The smallest constituent enclosing `span` and each of its ancestors,
    /// smallest first, with their counterparts on the opposite side.
    pub fn countertext(&self, bitext: &str, side: Side, span: Span) -> Result<Vec<Rung>> {
        let b = self.bitext(bitext)?;
        let doc = b.side(side);
        let start = doc.smallest_enclosing(span)?;
        doc.context_ladder(start.id)?
            .into_iter()
            .map(|c| Ok(Rung { constituent: c.into(), counterpart: Self::counterpart(b, side, c.id)? }))
            .collect()
    }

    /// Normalized forms a query text matches on.
    pub fn query_terms(&self, text: &str) -> Vec<String> {
        tokenize_text(text, &self.archive.config().rules)
            .into_iter()
            .filter(|t| t.class != TokenClass::Punct)
            .map(|t| self.normalizer.apply(&t.surface))
            .collect()
    }

    /// Phrases containing `term` as a contiguous run of words and numerals
    /// (punctuation ignored), in corpus order. At most `limit` hits are
    /// returned; `total` counts all of them.
    pub fn concordance(&self, term: &str, side: Side, limit: usize) -> Result<Concordance> {
        if limit == 0 {
            return Err(Error::invalid("limit must be at least 1"));
        }
        let wanted = self.query_terms(term);
        let mut matches: Vec<(Posting, Span)> = Vec::new();
        if let Some(first) = wanted.first() {
            for p in self.index.get(first).into_iter().flatten().filter(|p| p.side == side) {
                let found = &self.terms[&(p.bitext, p.side, p.phrase)];
                let window = found.get(p.offset..p.offset + wanted.len());
                if window.is_some_and(|w| w.iter().map(|(f, _)| f).eq(wanted.iter())) {
                    let highlight = Span::new(found[p.offset].1.start, found[p.offset + wanted.len() - 1].1.end);
                    matches.push((*p, highlight));
                }
            }
        }
        matches.sort_by_key(|(p, h)| (p.bitext, h.start));
        let total = matches.len();
        let hits = matches
            .into_iter()
            .take(limit)
            .map(|(p, highlight)| self.hit(p, highlight))
            .collect::<Result<Vec<_>>>()?;
        Ok(Concordance { term: wanted, total, hits })
    }

    fn hit(&self, p: Posting, highlight: Span) -> Result<ConcordanceHit> {
        let bitext = &self.archive.bitexts()[p.bitext];
        let doc = bitext.side(p.side);
        let phrase = doc.constituent(p.phrase)?;
        let sentence = doc.constituent(phrase.parent.expect("phrases have a parent"))?;
        let counterpart = Self::counterpart(bitext, p.side, p.phrase)?;
        let counterpart_text = match &counterpart {
            Some(c) => Some(bitext.side(p.side.opposite()).slice(c.span)?.to_string()),
            None => None,
        };
        Ok(ConcordanceHit {
            bitext: bitext.id().to_string(),
            side: p.side,
            document: doc.id().to_string(),
            phrase: phrase.into(),
            highlight,
            sentence: sentence.into(),
            sentence_text: doc.slice(sentence.span)?.to_string(),
            counterpart,
            counterpart_text,
        })
    }

    /// Presented counterparts of a word, best first, with the lexicon's
    /// confidence report. Works from either side.
    pub fn counterwords(&self, word: &str, side: Side) -> Result<CounterwordAnswer> {
        let lexicon = self.archive.lexicon.as_ref().ok_or(Error::NoLexicon)?;
        let word = self.normalizer.apply(word.trim());
        let report = lexicon.self_evaluation(side, &word)?;
        let entries = lexicon.presented_for(side, &word).into_iter().cloned().collect();
        Ok(CounterwordAnswer { word, side, entries, report })
    }

    pub fn bitext_summaries(&self) -> Vec<BitextSummary> {
        self.archive
            .bitexts()
            .iter()
            .map(|b| BitextSummary {
                id: b.id().to_string(),
                source: b.source().id().to_string(),
                target: b.target().id().to_string(),
                source_language: b.source().language().to_string(),
                target_language: b.target().language().to_string(),
                links: b.links().len(),
                total_cost: b.total_cost(),
                degraded: b.degraded().iter().copied().collect(),
            })
            .collect()
    }

    pub fn summary(&self) -> ArchiveSummary {
        let a = &self.archive;
        ArchiveSummary {
            format_version: FORMAT_VERSION,
            config_hash: a.config().hash(),
            normalizer: self.normalizer.name().to_string(),
            bitexts: a.bitexts().len(),
            documents: a.documents().count(),
            tokens: a.documents().map(|(_, _, d)| d.tokens().len()).sum(),
            links: a.bitexts().iter().map(|b| b.links().len()).sum(),
            lexicon_entries: a.lexicon.as_ref().map_or(0, |l| l.entries().len()),
            presented_entries: a.lexicon.as_ref().map_or(0, |l| l.presented().count()),
            threshold: a.lexicon.as_ref().map(|l| l.threshold()),
            phrases: a.phrases.len(),
            forks: a.forks.len(),
        }
    }

    pub fn stats(&self) -> SideStats {
        let side = |s: Side| {
            let docs: Vec<&Document> = self.archive.bitexts().iter().map(|b| b.side(s)).collect();
            corpus_stats(&docs, &self.normalizer)
        };
        SideStats { source: side(Side::Source), target: side(Side::Target) }
    }
}
