//! Corpus-level products: draft phrase lists, fork reports and frequency
//! statistics.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::assign::{phrase_words, CounterwordLexicon};
use crate::error::{Error, Result};
use crate::model::{Bitext, ConstituentId, Document, Level, Side};
use crate::segment::Normalizer;

pub const MAX_NGRAM: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct PhraseOccurrence {
    pub bitext: String,
    pub phrase: ConstituentId,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedNgram {
    pub ngram: Vec<String>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhraseListEntry {
    pub side: Side,
    pub ngram: Vec<String>,
    pub freq: u64,
    /// First occurrence in corpus order.
    pub sample: PhraseOccurrence,
    pub paired: Option<PairedNgram>,
}

fn ngrams(words: &[String], max_len: usize) -> impl Iterator<Item = &[String]> {
    (1..=max_len.min(words.len())).flat_map(move |n| words.windows(n))
}

#[derive(Default)]
struct NgramTally {
    freq: u64,
    occurrences: Vec<(usize, ConstituentId)>,
}

fn tally_bitext(
    index: usize,
    bitext: &Bitext,
    side: Side,
    normalizer: &Normalizer,
    max_len: usize,
) -> BTreeMap<Vec<String>, NgramTally> {
    let doc = bitext.side(side);
    let mut out: BTreeMap<Vec<String>, NgramTally> = BTreeMap::new();
    for phrase in doc.tree().at_level(Level::Phrase) {
        let words = phrase_words(doc, &[phrase.id], normalizer);
        for gram in ngrams(&words, max_len) {
            let tally = out.entry(gram.to_vec()).or_default();
            tally.freq += 1;
            if tally.occurrences.last() != Some(&(index, phrase.id)) {
                tally.occurrences.push((index, phrase.id));
            }
        }
    }
    out
}

/// Best one-to-one matching of member words, averaged over the longer
/// n-gram so that unmatched members count as zero.
fn pairing_score(own: &[String], other: &[String], score: impl Fn(&str, &str) -> f64) -> f64 {
    fn best(i: usize, used: &mut [bool], table: &[Vec<f64>]) -> f64 {
        if i == table.len() {
            return 0.0;
        }
        let mut top = best(i + 1, used, table);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                top = top.max(table[i][j] + best(i + 1, used, table));
                used[j] = false;
            }
        }
        top
    }
    let table: Vec<Vec<f64>> = own.iter().map(|a| other.iter().map(|b| score(a, b)).collect()).collect();
    best(0, &mut vec![false; other.len()], &table) / own.len().max(other.len()) as f64
}

/// Frequent contiguous word n-grams within phrases of one corpus side.
///
/// With a lexicon, each n-gram is paired with the best-scoring n-gram drawn
/// from the counterpart phrases of its occurrences. Word scores come from
/// all lexicon entries, presented or not.
pub fn extract_phrases(
    bitexts: &[Bitext],
    side: Side,
    normalizer: &Normalizer,
    lexicon: Option<&CounterwordLexicon>,
    min_freq: u64,
    max_len: usize,
) -> Result<Vec<PhraseListEntry>> {
    if min_freq < 2 {
        return Err(Error::invalid(format!("min_freq must be at least 2, got {min_freq}")));
    }
    if !(1..=MAX_NGRAM).contains(&max_len) {
        return Err(Error::invalid(format!("max_len must be in 1..={MAX_NGRAM}, got {max_len}")));
    }
    let partials: Vec<_> = bitexts
        .par_iter()
        .enumerate()
        .map(|(i, b)| tally_bitext(i, b, side, normalizer, max_len))
        .collect();
    let mut tallies: BTreeMap<Vec<String>, NgramTally> = BTreeMap::new();
    for partial in partials {
        for (gram, t) in partial {
            let acc = tallies.entry(gram).or_default();
            acc.freq += t.freq;
            acc.occurrences.extend(t.occurrences);
        }
    }

    let scores: Option<HashMap<(&str, &str), f64>> = lexicon.map(|lex| {
        lex.entries()
            .iter()
            .map(|e| ((e.word(side), e.word(side.opposite())), e.score))
            .collect()
    });
    let word_score = |a: &str, b: &str| scores.as_ref().and_then(|m| m.get(&(a, b)).copied()).unwrap_or(0.0);

    let frequent: Vec<(Vec<String>, NgramTally)> =
        tallies.into_iter().filter(|(_, t)| t.freq >= min_freq).collect();
    let mut entries: Vec<PhraseListEntry> = frequent
        .into_par_iter()
        .map(|(gram, tally)| {
            let (first_bitext, first_phrase) = tally.occurrences[0];
            let paired = scores.as_ref().and_then(|_| {
                let mut support: BTreeMap<Vec<String>, u32> = BTreeMap::new();
                for &(b, phrase) in &tally.occurrences {
                    let bitext = &bitexts[b];
                    let Ok(Some((_, link))) = bitext.link_of(side, phrase) else { continue };
                    let other = side.opposite();
                    let words = phrase_words(bitext.side(other), link.members(other), normalizer);
                    let mut seen: Vec<&[String]> = ngrams(&words, max_len).collect();
                    seen.sort();
                    seen.dedup();
                    for g in seen {
                        *support.entry(g.to_vec()).or_default() += 1;
                    }
                }
                let mut best: Option<(f64, u32, Vec<String>)> = None;
                for (candidate, count) in support {
                    let s = pairing_score(&gram, &candidate, word_score);
                    let better = match &best {
                        None => s > 0.0,
                        Some((bs, bc, bg)) => {
                            s > *bs || (s == *bs && (count > *bc || (count == *bc && candidate.len() < bg.len())))
                        }
                    };
                    if better {
                        best = Some((s, count, candidate));
                    }
                }
                best.map(|(score, _, ngram)| PairedNgram { ngram, score })
            });
            PhraseListEntry {
                side,
                ngram: gram,
                freq: tally.freq,
                sample: PhraseOccurrence { bitext: bitexts[first_bitext].id().to_string(), phrase: first_phrase },
                paired,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.ngram.cmp(&b.ngram)));
    Ok(entries)
}

/// `side ngram freq sample_bitext sample_phrase paired_ngram paired_score`,
/// with the last two columns empty when there is no pairing.
pub fn phrases_to_tsv(entries: &[PhraseListEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let (pg, ps) = match &e.paired {
            Some(p) => (p.ngram.join(" "), p.score.to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.side,
            e.ngram.join(" "),
            e.freq,
            e.sample.bitext,
            e.sample.phrase,
            pg,
            ps
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForkBranch {
    pub counterpart: String,
    pub score: f64,
    pub cooc: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForkReport {
    pub pivot: String,
    pub side: Side,
    pub branches: Vec<ForkBranch>,
    /// Second-best branch score over best branch score.
    pub severity: f64,
}

/// Words on either side with two or more counterparts at or above the
/// threshold, most severe first.
pub fn detect_forks(lexicon: &CounterwordLexicon, fork_threshold: f64) -> Result<Vec<ForkReport>> {
    if !(0.0..=1.0).contains(&fork_threshold) {
        return Err(Error::invalid(format!("fork threshold {fork_threshold} is outside [0, 1]")));
    }
    let mut reports = Vec::new();
    for side in [Side::Source, Side::Target] {
        for pivot in lexicon.frequencies(side).keys() {
            let mut branches: Vec<ForkBranch> = lexicon
                .candidates(side, pivot)
                .filter(|e| e.score >= fork_threshold)
                .map(|e| ForkBranch { counterpart: e.word(side.opposite()).to_string(), score: e.score, cooc: e.cooc })
                .collect();
            if branches.len() < 2 {
                continue;
            }
            branches.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.counterpart.cmp(&b.counterpart)));
            let severity = if branches[0].score > 0.0 { branches[1].score / branches[0].score } else { 1.0 };
            reports.push(ForkReport { pivot: pivot.clone(), side, branches, severity });
        }
    }
    reports.sort_by(|a, b| {
        b.severity.total_cmp(&a.severity).then(a.side.cmp(&b.side)).then_with(|| a.pivot.cmp(&b.pivot))
    });
    Ok(reports)
}

/// One line per branch: `side pivot severity rank counterpart score cooc`.
pub fn forks_to_tsv(reports: &[ForkReport]) -> String {
    let mut out = String::new();
    for r in reports {
        for (rank, b) in r.branches.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.side, r.pivot, r.severity, rank, b.counterpart, b.score, b.cooc
            ));
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub token_count: u64,
    pub type_count: u64,
    /// Share of types occurring once.
    pub hapax_type_ratio: f64,
    /// Share of types occurring fewer than five times.
    pub below5_type_ratio: f64,
    /// Hapax types over all tokens, i.e. the share of tokens that are hapaxes.
    pub hapax_token_ratio: f64,
    /// Share of tokens whose type occurs fewer than five times.
    pub below5_token_ratio: f64,
    pub frequencies: BTreeMap<String, u64>,
}

impl CorpusStats {
    pub fn from_frequencies(frequencies: BTreeMap<String, u64>) -> Self {
        let token_count: u64 = frequencies.values().sum();
        let type_count = frequencies.len() as u64;
        let hapax = frequencies.values().filter(|&&f| f == 1).count() as u64;
        let rare_types = frequencies.values().filter(|&&f| f < 5).count() as u64;
        let rare_tokens: u64 = frequencies.values().filter(|&&f| f < 5).sum();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        CorpusStats {
            token_count,
            type_count,
            hapax_type_ratio: ratio(hapax, type_count),
            below5_type_ratio: ratio(rare_types, type_count),
            hapax_token_ratio: ratio(hapax, token_count),
            below5_token_ratio: ratio(rare_tokens, token_count),
            frequencies,
        }
    }
}

/// Exact frequency statistics over normalized word tokens.
pub fn corpus_stats(documents: &[&Document], normalizer: &Normalizer) -> CorpusStats {
    let partials: Vec<BTreeMap<String, u64>> = documents
        .par_iter()
        .map(|doc| {
            let mut freq = BTreeMap::new();
            let all: Vec<ConstituentId> = vec![ConstituentId::ROOT];
            for w in phrase_words(doc, &all, normalizer) {
                *freq.entry(w).or_default() += 1;
            }
            freq
        })
        .collect();
    let mut frequencies = BTreeMap::new();
    for partial in partials {
        for (w, f) in partial {
            *frequencies.entry(w).or_default() += f;
        }
    }
    CorpusStats::from_frequencies(frequencies)
}

/// `word freq`, most frequent first, ties alphabetical.
pub fn frequencies_to_tsv(stats: &CorpusStats) -> String {
    let mut rows: Vec<(&String, &u64)> = stats.frequencies.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    rows.into_iter().map(|(w, f)| format!("{w}\t{f}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{align_bitext, Band, CostModel};
    use crate::assign::{assign, AssociationWeights};
    use crate::model::DocId;
    use crate::segment::SegmentationRules;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(DocId::new(id).unwrap(), "en", text, &SegmentationRules::default(), &Normalizer::case_fold())
    }

    fn bitext(id: &str, src: &str, tgt: &str) -> Bitext {
        align_bitext(id, doc(&format!("{id}-s"), src), doc(&format!("{id}-t"), tgt), &CostModel::default(), &Band::default())
            .unwrap()
    }

    #[test]
    fn stats_small_examples() {
        let d = doc("d", "a b a");
        let s = corpus_stats(&[&d], &Normalizer::case_fold());
        assert_eq!((s.token_count, s.type_count, s.hapax_type_ratio), (3, 2, 0.5));
        assert_eq!(s.below5_type_ratio, 1.0);
        assert!((s.hapax_token_ratio - 1.0 / 3.0).abs() < 1e-15);

        let empty = corpus_stats(&[], &Normalizer::case_fold());
        assert_eq!(empty, CorpusStats::default());
        let blank = doc("e", "");
        assert_eq!(corpus_stats(&[&blank], &Normalizer::case_fold()).hapax_type_ratio, 0.0);
    }

    #[test]
    fn stats_exclude_numerals_and_punctuation() {
        let d = doc("d", "Cows, 12 cows; and (3) pigs.");
        let s = corpus_stats(&[&d], &Normalizer::case_fold());
        assert_eq!(s.frequencies.get("cows"), Some(&2));
        assert_eq!(s.token_count, 4);
    }

    #[test]
    fn recurring_trigram_and_its_parts() {
        let corpus = [
            bitext("a", "the value added tax applies", "x"),
            bitext("b", "value added tax, is due", "y"),
            bitext("c", "no value added tax here", "z"),
        ];
        let list = extract_phrases(&corpus, Side::Source, &Normalizer::case_fold(), None, 2, 4).unwrap();
        let find = |g: &str| list.iter().find(|e| e.ngram.join(" ") == g).map(|e| e.freq);
        assert_eq!(find("value added tax"), Some(3));
        for g in ["value", "added", "tax", "value added", "added tax"] {
            assert_eq!(find(g), Some(3), "{g}");
        }
        assert_eq!(find("the"), None);
        assert_eq!(list.len(), 6);
        assert_eq!(list[0].sample, PhraseOccurrence { bitext: "a".into(), phrase: ConstituentId(3) });
        assert!(list.windows(2).all(|w| w[0].freq > w[1].freq || (w[0].freq == w[1].freq && w[0].ngram < w[1].ngram)));
    }

    #[test]
    fn empty_corpus_and_bad_params() {
        assert!(extract_phrases(&[], Side::Source, &Normalizer::case_fold(), None, 2, 4).unwrap().is_empty());
        assert!(extract_phrases(&[], Side::Source, &Normalizer::case_fold(), None, 1, 4).is_err());
        assert!(extract_phrases(&[], Side::Source, &Normalizer::case_fold(), None, 2, 5).is_err());
    }

    #[test]
    fn phrases_pair_with_counterparts() {
        let text_s = "value added tax. value added tax. value added tax";
        let text_t = "imposta valore aggiunto. imposta valore aggiunto. imposta valore aggiunto";
        let corpus = [bitext("a", text_s, text_t), bitext("b", "tax", "imposta")];
        let n = Normalizer::case_fold();
        let lex = assign(&corpus, &n, &AssociationWeights::default(), 0.5).unwrap();
        let list = extract_phrases(&corpus, Side::Source, &n, Some(&lex), 2, 3).unwrap();
        let tax = list.iter().find(|e| e.ngram == ["tax"]).unwrap();
        assert_eq!(tax.freq, 4);
        let paired = tax.paired.as_ref().unwrap();
        assert_eq!(paired.ngram.len(), 1);
        let tri = list.iter().find(|e| e.ngram.len() == 3).unwrap();
        assert_eq!(tri.paired.as_ref().unwrap().ngram.len(), 3);
        let target = extract_phrases(&corpus, Side::Target, &n, Some(&lex), 2, 3).unwrap();
        assert!(target.iter().all(|e| e.side == Side::Target && e.paired.is_some()));
    }

    fn vessel_corpus() -> Vec<Bitext> {
        let mut out = Vec::new();
        for i in 0..4 {
            let tgt = if i % 2 == 0 { "fartyg" } else { "skepp" };
            out.push(bitext(&format!("v{i}"), "vessel", tgt));
        }
        out
    }

    #[test]
    fn planted_source_fork() {
        let n = Normalizer::case_fold();
        let lex = assign(&vessel_corpus(), &n, &AssociationWeights::default(), 0.5).unwrap();
        let forks = detect_forks(&lex, 0.5).unwrap();
        assert_eq!(forks.len(), 1);
        assert_eq!((forks[0].pivot.as_str(), forks[0].side), ("vessel", Side::Source));
        assert_eq!(forks[0].branches.len(), 2);
        assert!(forks[0].severity >= 0.8);
        assert!(forks[0].branches[0].score >= forks[0].branches[1].score);
        let tsv = forks_to_tsv(&forks);
        assert_eq!(tsv.lines().count(), 2);
    }

    #[test]
    fn one_to_one_lexicon_has_no_forks() {
        let corpus = [bitext("a", "cat. dog", "gatto. cane"), bitext("b", "dog. cat", "cane. gatto")];
        let lex = assign(&corpus, &Normalizer::case_fold(), &AssociationWeights::default(), 0.7).unwrap();
        assert!(detect_forks(&lex, lex.threshold()).unwrap().is_empty());
        assert!(detect_forks(&lex, 1.5).is_err());
    }

    fn arb_docs() -> impl Strategy<Value = Vec<String>> {
        let word = prop::sample::select(vec!["aa", "b", "cc", "d", "ee", "ff", "g"]);
        let phrase = prop::collection::vec(word, 1..6).prop_map(|w| w.join(" "));
        let sentence = prop::collection::vec(phrase, 1..4).prop_map(|p| p.join(", "));
        let text = prop::collection::vec(sentence, 0..5).prop_map(|s| s.join(". "));
        prop::collection::vec(text, 0..5)
    }

    proptest! {
        #[test]
        fn ngram_counts_are_consistent(texts in arb_docs()) {
            let corpus: Vec<Bitext> =
                texts.iter().enumerate().map(|(i, t)| bitext(&format!("b{i}"), t, t)).collect();
            let list = extract_phrases(&corpus, Side::Source, &Normalizer::case_fold(), None, 2, 4).unwrap();
            let freq: HashMap<Vec<String>, u64> = list.iter().map(|e| (e.ngram.clone(), e.freq)).collect();
            for e in &list {
                prop_assert!(e.freq >= 2);
                if e.ngram.len() > 1 {
                    for w in &e.ngram {
                        prop_assert!(e.freq <= freq[&vec![w.clone()]]);
                    }
                }
            }
        }

        #[test]
        fn stats_ignore_document_order(texts in arb_docs()) {
            let docs: Vec<Document> = texts.iter().enumerate().map(|(i, t)| doc(&format!("d{i}"), t)).collect();
            let forward: Vec<&Document> = docs.iter().collect();
            let backward: Vec<&Document> = docs.iter().rev().collect();
            let n = Normalizer::case_fold();
            let a = corpus_stats(&forward, &n);
            prop_assert_eq!(&a, &corpus_stats(&backward, &n));
            prop_assert!(a.hapax_type_ratio <= a.below5_type_ratio);
        }
    }
}
