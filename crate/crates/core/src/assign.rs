//! Counterword assignment inside aligned phrase pairs.
//!
//! Candidate pairs are word types that co-occur in a phrase-level link. Each
//! candidate is scored by a weighted sum of three agreement measures in
//! `[0, 1]`: relative position within the phrase, relative frequency (scaled
//! by co-occurrence reliability), and word length.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Bitext, ConstituentId, Document, Level, Side, TokenClass};
use crate::segment::Normalizer;

/// Maximum number of phrase-pair references kept per lexicon entry.
pub const EVIDENCE_CAP: usize = 10;

/// Words occurring fewer times than this are flagged as sparse.
pub const SPARSE_BELOW: u64 = 5;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// A phrase-level link of one bitext.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PhraseRef {
    pub bitext: String,
    pub link: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairStats {
    pub cooc: u32,
    /// One `(source, target)` relative-position pair per co-occurrence.
    pub positions: Vec<(f64, f64)>,
    pub evidence: Vec<PhraseRef>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CollectWarning {
    /// No phrase-level link with material on both sides was found.
    NoPhraseLinks,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooccurrenceTable {
    source_freq: BTreeMap<String, u64>,
    target_freq: BTreeMap<String, u64>,
    source_tokens: u64,
    target_tokens: u64,
    pairs: BTreeMap<(String, String), PairStats>,
    warning: Option<CollectWarning>,
}

impl CooccurrenceTable {
    pub fn frequency(&self, side: Side, word: &str) -> u64 {
        self.freqs(side).get(word).copied().unwrap_or(0)
    }

    pub fn freqs(&self, side: Side) -> &BTreeMap<String, u64> {
        match side {
            Side::Source => &self.source_freq,
            Side::Target => &self.target_freq,
        }
    }

    pub fn token_count(&self, side: Side) -> u64 {
        match side {
            Side::Source => self.source_tokens,
            Side::Target => self.target_tokens,
        }
    }

    pub fn pair(&self, source: &str, target: &str) -> Option<&PairStats> {
        self.pairs.get(&(source.to_string(), target.to_string()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, &PairStats)> {
        self.pairs.iter().map(|((s, t), p)| (s.as_str(), t.as_str(), p))
    }

    pub fn cooc(&self, source: &str, target: &str) -> u32 {
        self.pair(source, target).map_or(0, |p| p.cooc)
    }

    pub fn warning(&self) -> Option<CollectWarning> {
        self.warning
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn merge(&mut self, other: CooccurrenceTable) {
        for (w, f) in other.source_freq {
            *self.source_freq.entry(w).or_default() += f;
        }
        for (w, f) in other.target_freq {
            *self.target_freq.entry(w).or_default() += f;
        }
        self.source_tokens += other.source_tokens;
        self.target_tokens += other.target_tokens;
        for (key, stats) in other.pairs {
            let entry = self.pairs.entry(key).or_default();
            entry.cooc += stats.cooc;
            entry.positions.extend(stats.positions);
            let room = EVIDENCE_CAP.saturating_sub(entry.evidence.len());
            entry.evidence.extend(stats.evidence.into_iter().take(room));
        }
    }
}

/// Relative position of each word type in a phrase's word sequence.
fn relative_positions(words: &[String]) -> BTreeMap<&str, Vec<f64>> {
    let mut out: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let denom = words.len().saturating_sub(1).max(1) as f64;
    for (i, w) in words.iter().enumerate() {
        let pos = if words.len() == 1 { 0.5 } else { i as f64 / denom };
        out.entry(w.as_str()).or_default().push(pos);
    }
    out
}

fn normalized_words<'a>(doc: &'a Document, normalizer: &'a Normalizer) -> impl Iterator<Item = String> + 'a {
    doc.tokens()
        .iter()
        .filter(|t| t.class == TokenClass::Word)
        .map(|t| normalizer.apply(&t.surface))
}

/// Normalized word types of the given constituents, concatenated in order.
pub fn phrase_words(doc: &Document, ids: &[ConstituentId], normalizer: &Normalizer) -> Vec<String> {
    ids.iter()
        .flat_map(|&id| doc.tokens_under(id).unwrap_or(&[]))
        .filter(|t| t.class == TokenClass::Word)
        .map(|t| normalizer.apply(&t.surface))
        .collect()
}

fn collect_one(bitext: &Bitext, normalizer: &Normalizer) -> (CooccurrenceTable, bool) {
    let mut table = CooccurrenceTable::default();
    for w in normalized_words(bitext.source(), normalizer) {
        *table.source_freq.entry(w).or_default() += 1;
        table.source_tokens += 1;
    }
    for w in normalized_words(bitext.target(), normalizer) {
        *table.target_freq.entry(w).or_default() += 1;
        table.target_tokens += 1;
    }
    let mut any_link = false;
    for (link_index, link) in bitext.links_at(Level::Phrase) {
        if link.src.is_empty() || link.tgt.is_empty() {
            continue;
        }
        any_link = true;
        let src_words = phrase_words(bitext.source(), &link.src, normalizer);
        let tgt_words = phrase_words(bitext.target(), &link.tgt, normalizer);
        let src_pos = relative_positions(&src_words);
        let tgt_pos = relative_positions(&tgt_words);
        for (s, ps) in &src_pos {
            for (t, pt) in &tgt_pos {
                // one position pair per co-occurrence: the closest one
                let mut closest = (ps[0], pt[0]);
                for &a in ps {
                    for &b in pt {
                        if (a - b).abs() < (closest.0 - closest.1).abs() {
                            closest = (a, b);
                        }
                    }
                }
                let stats = table.pairs.entry((s.to_string(), t.to_string())).or_default();
                stats.cooc += 1;
                stats.positions.push(closest);
                if stats.evidence.len() < EVIDENCE_CAP {
                    stats.evidence.push(PhraseRef { bitext: bitext.id().to_string(), link: link_index });
                }
            }
        }
    }
    (table, any_link)
}

/// Builds co-occurrence statistics over the phrase links of all bitexts.
/// Only word tokens take part; numerals and punctuation are excluded.
pub fn collect(bitexts: &[Bitext], normalizer: &Normalizer) -> CooccurrenceTable {
    let partials: Vec<(CooccurrenceTable, bool)> =
        bitexts.par_iter().map(|b| collect_one(b, normalizer)).collect();
    let mut table = CooccurrenceTable::default();
    let mut any_link = false;
    for (partial, linked) in partials {
        any_link |= linked;
        table.merge(partial);
    }
    if !any_link {
        table.warning = Some(CollectWarning::NoPhraseLinks);
    }
    table
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssociationWeights {
    pos: f64,
    freq: f64,
    len: f64,
}

impl Default for AssociationWeights {
    fn default() -> Self {
        AssociationWeights { pos: 0.4, freq: 0.4, len: 0.2 }
    }
}

impl AssociationWeights {
    /// Weights are renormalized to sum to one.
    pub fn new(pos: f64, freq: f64, len: f64) -> Result<Self> {
        let all = [pos, freq, len];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("association weights must be finite and non-negative"));
        }
        let sum: f64 = all.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("at least one association weight must be positive"));
        }
        Ok(AssociationWeights { pos: pos / sum, freq: freq / sum, len: len / sum })
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn len(&self) -> f64 {
        self.len
    }

    pub fn combine(&self, pos: f64, freq: f64, len: f64) -> f64 {
        (self.pos * pos + self.freq * freq + self.len * len).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssociationScore {
    pub pos: f64,
    pub freq: f64,
    pub len: f64,
    pub score: f64,
}

/// Association of a candidate pair. Fails for pairs that never co-occur.
pub fn association(
    source: &str,
    target: &str,
    table: &CooccurrenceTable,
    weights: &AssociationWeights,
) -> Result<AssociationScore> {
    let stats = table
        .pair(source, target)
        .filter(|p| p.cooc > 0)
        .ok_or_else(|| Error::NotACandidate { source_type: source.to_string(), target_type: target.to_string() })?;
    let mean_gap = stats.positions.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / stats.positions.len() as f64;
    let pos = (1.0 - mean_gap).clamp(0.0, 1.0);

    let fs = table.frequency(Side::Source, source) as f64;
    let ft = table.frequency(Side::Target, target) as f64;
    let rf_s = fs / table.source_tokens as f64;
    let rf_t = ft / table.target_tokens as f64;
    let agreement = rf_s.min(rf_t) / rf_s.max(rf_t);
    let cooc = stats.cooc as f64;
    let reliability = (cooc * cooc / (fs * ft)).sqrt();
    let freq = (agreement * reliability).clamp(0.0, 1.0);

    let ls = source.chars().count() as f64;
    let lt = target.chars().count() as f64;
    let len = 1.0 - (ls - lt).abs() / ls.max(lt);

    Ok(AssociationScore { pos, freq, len, score: weights.combine(pos, freq, len) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterwordEntry {
    pub source: String,
    pub target: String,
    pub score: f64,
    pub pos: f64,
    pub freq: f64,
    pub len: f64,
    pub cooc: u32,
    pub evidence: Vec<PhraseRef>,
}

impl CounterwordEntry {
    pub fn word(&self, side: Side) -> &str {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConfidenceFlag {
    #[serde(rename = "LOW_CONFIDENCE")]
    LowConfidence,
    #[serde(rename = "SPARSE")]
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfidenceReport {
    pub word: String,
    pub side: Side,
    /// Best score over all candidates; 0 when there are none.
    pub max_score: f64,
    pub candidates: usize,
    pub frequency: u64,
    pub flags: Vec<ConfidenceFlag>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterwordLexicon {
    entries: Vec<CounterwordEntry>,
    threshold: f64,
    source_freq: BTreeMap<String, u64>,
    target_freq: BTreeMap<String, u64>,
    by_source: HashMap<String, Vec<usize>>,
    by_target: HashMap<String, Vec<usize>>,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::invalid(format!("threshold {threshold} is outside [0, 1]")))
    }
}

impl CounterwordLexicon {
    /// Assembles a lexicon; entries are put in canonical order
    /// (source, descending score, target).
    pub fn new(
        mut entries: Vec<CounterwordEntry>,
        threshold: f64,
        source_freq: BTreeMap<String, u64>,
        target_freq: BTreeMap<String, u64>,
    ) -> Result<Self> {
        check_threshold(threshold)?;
        entries.sort_by(|a, b| {
            a.source
                .cmp(&b.source)
                .then(b.score.total_cmp(&a.score))
                .then_with(|| a.target.cmp(&b.target))
        });
        let mut by_source: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_target: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_source.entry(e.source.clone()).or_default().push(i);
            by_target.entry(e.target.clone()).or_default().push(i);
        }
        for list in by_target.values_mut() {
            list.sort_by(|&a, &b| {
                entries[b].score.total_cmp(&entries[a].score).then_with(|| entries[a].source.cmp(&entries[b].source))
            });
        }
        Ok(CounterwordLexicon { entries, threshold, source_freq, target_freq, by_source, by_target })
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(CounterwordLexicon { threshold, ..self.clone() })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn entries(&self) -> &[CounterwordEntry] {
        &self.entries
    }

    pub fn frequencies(&self, side: Side) -> &BTreeMap<String, u64> {
        match side {
            Side::Source => &self.source_freq,
            Side::Target => &self.target_freq,
        }
    }

    pub fn presented(&self) -> impl Iterator<Item = &CounterwordEntry> {
        self.entries.iter().filter(move |e| e.score >= self.threshold)
    }

    /// All candidates for a word, best first.
    pub fn candidates(&self, side: Side, word: &str) -> impl Iterator<Item = &CounterwordEntry> {
        let index = match side {
            Side::Source => &self.by_source,
            Side::Target => &self.by_target,
        };
        index.get(word).into_iter().flatten().map(move |&i| &self.entries[i])
    }

    pub fn presented_for(&self, side: Side, word: &str) -> Vec<&CounterwordEntry> {
        self.candidates(side, word).filter(|e| e.score >= self.threshold).collect()
    }

    pub fn max_score(&self, side: Side, word: &str) -> Option<f64> {
        self.candidates(side, word).map(|e| e.score).reduce(f64::max)
    }

    /// Confidence of the lexicon about one word. Unknown words are an error,
    /// distinct from a low-confidence report.
    pub fn self_evaluation(&self, side: Side, word: &str) -> Result<ConfidenceReport> {
        let frequency = *self
            .frequencies(side)
            .get(word)
            .ok_or_else(|| Error::UnknownWord { word: word.to_string(), side })?;
        let candidates = self.candidates(side, word).count();
        let max_score = self.max_score(side, word).unwrap_or(0.0);
        let mut flags = Vec::new();
        if max_score < self.threshold {
            flags.push(ConfidenceFlag::LowConfidence);
        }
        if frequency < SPARSE_BELOW {
            flags.push(ConfidenceFlag::Sparse);
        }
        Ok(ConfidenceReport { word: word.to_string(), side, max_score, candidates, frequency, flags })
    }

    /// Tab-separated export, one entry per line:
    /// `source target score pos freq len cooc`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.source, e.target, e.score, e.pos, e.freq, e.len, e.cooc
            ));
        }
        out
    }
}

/// Scores every candidate pair of the corpus.
pub fn assign(
    bitexts: &[Bitext],
    normalizer: &Normalizer,
    weights: &AssociationWeights,
    threshold: f64,
) -> Result<CounterwordLexicon> {
    check_threshold(threshold)?;
    let table = collect(bitexts, normalizer);
    lexicon_from_table(&table, weights, threshold)
}

pub fn lexicon_from_table(
    table: &CooccurrenceTable,
    weights: &AssociationWeights,
    threshold: f64,
) -> Result<CounterwordLexicon> {
    let entries = table
        .pairs()
        .map(|(s, t, stats)| {
            let a = association(s, t, table, weights)?;
            Ok(CounterwordEntry {
                source: s.to_string(),
                target: t.to_string(),
                score: a.score,
                pos: a.pos,
                freq: a.freq,
                len: a.len,
                cooc: stats.cooc,
                evidence: stats.evidence.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CounterwordLexicon::new(entries, threshold, table.source_freq.clone(), table.target_freq.clone())
}
