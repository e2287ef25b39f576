//! Plain-text `key = value` configuration.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected. The
//! canonical rendering lists every key in a fixed order and is what archives
//! store and hash.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::align::{Band, CostModel};
use crate::assign::{AssociationWeights, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::lexica::MAX_NGRAM;
use crate::model::BeadShape;
use crate::segment::{
    Normalizer, SegmentationRules, DEFAULT_NUMERAL, DEFAULT_PARAGRAPH, DEFAULT_PHRASE, DEFAULT_SENTENCE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizerKind {
    CaseFold,
    Identity,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub rules: SegmentationRules,
    pub normalizer: NormalizerKind,
    pub decimal_point: bool,
    /// Surface form (case-folded) to lemma.
    pub lemmas: BTreeMap<String, String>,
    pub cost: CostModel,
    pub band: Band,
    pub weights: AssociationWeights,
    pub threshold: f64,
    /// Falls back to `threshold` when unset.
    pub fork_threshold: Option<f64>,
    pub min_freq: u64,
    pub max_len: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            rules: SegmentationRules::default(),
            normalizer: NormalizerKind::CaseFold,
            decimal_point: false,
            lemmas: BTreeMap::new(),
            cost: CostModel::default(),
            band: Band::default(),
            weights: AssociationWeights::default(),
            threshold: DEFAULT_THRESHOLD,
            fork_threshold: None,
            min_freq: 2,
            max_len: MAX_NGRAM,
        }
    }
}

impl PartialEq for Config {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

fn shape_key(shape: BeadShape) -> String {
    format!("align.penalty.{shape}")
}

fn number(line: usize, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config { line, message: format!("{key}: {value:?} is not a finite number") })
}

fn integer<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config { line, message: format!("{key}: {value:?} is not a whole number") })
}

fn boolean(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config { line, message: format!("{key}: {value:?} is not true or false") }),
    }
}

fn at_line(line: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Invalid(message) => Error::Config { line, message },
        other => other,
    }
}

fn parse_lemma_line(line: usize, value: &str) -> Result<(String, String)> {
    let mut parts = value.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(form), Some(lemma), None) => Ok((form.to_lowercase(), lemma.to_string())),
        _ => Err(Error::Config { line, message: format!("lemma entry {value:?} must be `form lemma`") }),
    }
}

impl Config {
    /// Parses configuration text. Relative `normalizer.lemmas` paths resolve
    /// against `base`.
    pub fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Config::default();
        let mut patterns: HashMap<&str, String> = HashMap::new();
        let mut abbreviations: Vec<String> = Vec::new();
        let mut weights = (cfg.weights.pos(), cfg.weights.freq(), cfg.weights.len());
        let mut weights_line = 0;
        let mut last_line = 0;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Config { line, message: format!("expected `key = value`, got {trimmed:?}") });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "segment.paragraph" | "segment.sentence" | "segment.phrase" | "segment.numeral" => {
                    let short = &key["segment.".len()..];
                    patterns.insert(short, value.to_string());
                }
                "segment.abbreviations" => {
                    abbreviations = value.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();
                }
                "normalizer" => {
                    cfg.normalizer = match value {
                        "casefold" => NormalizerKind::CaseFold,
                        "identity" => NormalizerKind::Identity,
                        _ => {
                            return Err(Error::Config {
                                line,
                                message: format!("normalizer must be casefold or identity, got {value:?}"),
                            })
                        }
                    }
                }
                "normalizer.decimal" => cfg.decimal_point = boolean(line, key, value)?,
                "normalizer.lemma" => {
                    let (form, lemma) = parse_lemma_line(line, value)?;
                    cfg.lemmas.insert(form, lemma);
                }
                "normalizer.lemmas" => {
                    let path = match base {
                        Some(dir) => dir.join(value),
                        None => Path::new(value).to_path_buf(),
                    };
                    let content = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    for (j, entry) in content.lines().enumerate() {
                        let entry = entry.trim();
                        if entry.is_empty() || entry.starts_with('#') {
                            continue;
                        }
                        let (form, lemma) = parse_lemma_line(j + 1, entry).map_err(|_| Error::Config {
                            line,
                            message: format!("{}:{}: expected `form lemma`", path.display(), j + 1),
                        })?;
                        cfg.lemmas.insert(form, lemma);
                    }
                }
                "align.w_num" => cfg.cost.w_num = number(line, key, value)?,
                "align.w_punct" => cfg.cost.w_punct = number(line, key, value)?,
                "align.w_len" => cfg.cost.w_len = number(line, key, value)?,
                "align.slack" => cfg.band.slack = integer(line, key, value)?,
                "align.proportional" => cfg.band.proportional = boolean(line, key, value)?,
                "assign.w_pos" => (weights.0, weights_line) = (number(line, key, value)?, line),
                "assign.w_freq" => (weights.1, weights_line) = (number(line, key, value)?, line),
                "assign.w_len" => (weights.2, weights_line) = (number(line, key, value)?, line),
                "assign.threshold" => cfg.threshold = number(line, key, value)?,
                "lexica.fork_threshold" => cfg.fork_threshold = Some(number(line, key, value)?),
                "lexica.min_freq" => cfg.min_freq = integer(line, key, value)?,
                "lexica.max_len" => cfg.max_len = integer(line, key, value)?,
                _ => {
                    let shape = key
                        .strip_prefix("align.penalty.")
                        .and_then(|s| BeadShape::ALL.into_iter().find(|b| b.to_string() == s));
                    match shape {
                        Some(shape) => {
                            cfg.cost = cfg.cost.clone().with_penalty(shape, number(line, key, value)?).map_err(at_line(line))?
                        }
                        None => return Err(Error::Config { line, message: format!("unknown key {key:?}") }),
                    }
                }
            }
        }

        let pattern = |k: &str, d: &str| patterns.get(k).cloned().unwrap_or_else(|| d.to_string());
        cfg.rules = SegmentationRules::new(
            &pattern("paragraph", DEFAULT_PARAGRAPH),
            &pattern("sentence", DEFAULT_SENTENCE),
            &pattern("phrase", DEFAULT_PHRASE),
            &pattern("numeral", DEFAULT_NUMERAL),
            abbreviations,
        )?;
        cfg.weights = AssociationWeights::new(weights.0, weights.1, weights.2).map_err(at_line(weights_line))?;
        cfg.validate().map_err(at_line(last_line))?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Config::parse_with_base(text, None)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse_with_base(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        if self.band.slack == 0 {
            return Err(Error::invalid("align.slack must be at least 1"));
        }
        for (name, t) in [("assign.threshold", Some(self.threshold)), ("lexica.fork_threshold", self.fork_threshold)] {
            if let Some(t) = t {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::invalid(format!("{name} must lie in [0, 1], got {t}")));
                }
            }
        }
        if self.min_freq < 2 {
            return Err(Error::invalid("lexica.min_freq must be at least 2"));
        }
        if !(1..=MAX_NGRAM).contains(&self.max_len) {
            return Err(Error::invalid(format!("lexica.max_len must be in 1..={MAX_NGRAM}")));
        }
        Ok(())
    }

    pub fn fork_threshold(&self) -> f64 {
        self.fork_threshold.unwrap_or(self.threshold)
    }

    pub fn build_normalizer(&self) -> Normalizer {
        let base = match (self.normalizer, self.lemmas.is_empty()) {
            (NormalizerKind::Identity, _) => Normalizer::identity(),
            (NormalizerKind::CaseFold, true) => Normalizer::case_fold(),
            (NormalizerKind::CaseFold, false) => {
                Normalizer::lemmatizing("casefold+lemmas", self.lemmas.clone().into_iter().collect())
            }
        };
        if self.decimal_point {
            base.with_decimal_point()
        } else {
            base
        }
    }

    /// Every key in a fixed order; parsing this text yields an equal config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("segment.paragraph", &self.rules.paragraph_pattern());
        put("segment.sentence", &self.rules.sentence_pattern());
        put("segment.phrase", &self.rules.phrase_pattern());
        put("segment.numeral", &self.rules.numeral_pattern());
        let abbreviations: Vec<&str> = self.rules.abbreviations().iter().map(String::as_str).collect();
        put("segment.abbreviations", &abbreviations.join(","));
        let kind = match self.normalizer {
            NormalizerKind::CaseFold => "casefold",
            NormalizerKind::Identity => "identity",
        };
        put("normalizer", &kind);
        put("normalizer.decimal", &self.decimal_point);
        for (form, lemma) in &self.lemmas {
            put("normalizer.lemma", &format!("{form} {lemma}"));
        }
        put("align.w_num", &self.cost.w_num);
        put("align.w_punct", &self.cost.w_punct);
        put("align.w_len", &self.cost.w_len);
        for shape in BeadShape::ALL {
            put(&shape_key(shape), &self.cost.penalty(shape));
        }
        put("align.slack", &self.band.slack);
        put("align.proportional", &self.band.proportional);
        put("assign.w_pos", &self.weights.pos());
        put("assign.w_freq", &self.weights.freq());
        put("assign.w_len", &self.weights.len());
        put("assign.threshold", &self.threshold);
        if let Some(t) = self.fork_threshold {
            put("lexica.fork_threshold", &t);
        }
        put("lexica.min_freq", &self.min_freq);
        put("lexica.max_len", &self.max_len);
        out
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
