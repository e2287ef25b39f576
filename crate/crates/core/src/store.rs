//! On-disk archive: a directory of line-oriented, tab-separated index files
//! plus one raw text file per document.
//!
//! ```text
//! manifest.tsv      format version, config hash, record counts, checksums
//! config.txt        canonical configuration
//! documents.tsv     id  language  char_len  sha256
//! docs/<id>.txt     document text (UTF-8, LF newlines)
//! constituents.tsv  doc  id  level  start  end  parent|-
//! tokens.tsv        doc  index|-  class|gap  start  end  normalized
//! bitexts.tsv       id  source_doc  target_doc  degraded_levels|-
//! links.tsv         bitext  index  level  src_ids|-  tgt_ids|-  cost
//! lexicon.tsv       source  target  score  pos  freq  len  cooc  evidence|-
//! frequencies.tsv   side  word  freq
//! phrases.tsv       side  ngram  freq  sample_bitext  sample_phrase  paired_ngram  paired_score
//! forks.tsv         side  pivot  severity  rank  counterpart  score  cooc
//! ```
//!
//! Every file is sorted canonically, so saving the same archive twice gives
//! identical bytes. Offsets are character offsets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::assign::{CounterwordEntry, CounterwordLexicon, PhraseRef};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::lexica::{forks_to_tsv, phrases_to_tsv, ForkBranch, ForkReport, PairedNgram, PhraseListEntry, PhraseOccurrence};
use crate::model::{
    Bitext, ConstituentId, ConstituentTree, DocId, Document, GapMark, Level, Link, Side, Span, Token, TokenClass,
};

pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.tsv";
const CONFIG: &str = "config.txt";
const DOCUMENTS: &str = "documents.tsv";
const CONSTITUENTS: &str = "constituents.tsv";
const TOKENS: &str = "tokens.tsv";
const BITEXTS: &str = "bitexts.tsv";
const LINKS: &str = "links.tsv";
const LEXICON: &str = "lexicon.tsv";
const FREQUENCIES: &str = "frequencies.tsv";
const PHRASES: &str = "phrases.tsv";
const FORKS: &str = "forks.tsv";

const INDEX_FILES: [&str; 10] =
    [CONFIG, DOCUMENTS, CONSTITUENTS, TOKENS, BITEXTS, LINKS, LEXICON, FREQUENCIES, PHRASES, FORKS];

/// Replaces CRLF and lone CR line endings with LF.
pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Default)]
pub struct Archive {
    config: Config,
    bitexts: Vec<Bitext>,
    pub lexicon: Option<CounterwordLexicon>,
    pub phrases: Vec<PhraseListEntry>,
    pub forks: Vec<ForkReport>,
}

impl PartialEq for Archive {
    fn eq(&self, other: &Self) -> bool {
        let costs = |a: &Archive| -> Vec<u64> {
            a.bitexts.iter().flat_map(|b| b.links().iter().map(|l| l.cost.to_bits())).collect()
        };
        self.config == other.config
            && self.bitexts == other.bitexts
            && costs(self) == costs(other)
            && self.lexicon == other.lexicon
            && self.phrases == other.phrases
            && self.forks == other.forks
    }
}

impl Archive {
    pub fn new(config: Config) -> Self {
        Archive { config, ..Archive::default() }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Bitexts ordered by id.
    pub fn bitexts(&self) -> &[Bitext] {
        &self.bitexts
    }

    pub fn bitext(&self, id: &str) -> Option<&Bitext> {
        self.bitexts
            .binary_search_by(|b| b.id().cmp(id))
            .ok()
            .map(|i| &self.bitexts[i])
    }

    /// Every document with its bitext and side, in archive order.
    pub fn documents(&self) -> impl Iterator<Item = (&Bitext, Side, &Document)> {
        self.bitexts
            .iter()
            .flat_map(|b| [Side::Source, Side::Target].map(move |s| (b, s, b.side(s))))
    }

    /// Adds a bitext, replacing any bitext with the same id. Ids must be
    /// usable as file names and document ids must stay unique.
    pub fn insert_bitext(&mut self, bitext: Bitext) -> Result<()> {
        DocId::new(bitext.id())?;
        let replaced = bitext.id().to_string();
        let taken: HashMap<&str, &str> = self
            .documents()
            .filter(|(b, _, _)| b.id() != replaced)
            .map(|(b, _, d)| (d.id().as_str(), b.id()))
            .collect();
        if bitext.source().id() == bitext.target().id() {
            return Err(Error::invalid(format!("bitext {replaced}: source and target share an id")));
        }
        for doc in [bitext.source(), bitext.target()] {
            if let Some(owner) = taken.get(doc.id().as_str()) {
                return Err(Error::invalid(format!("document {} already belongs to bitext {owner}", doc.id())));
            }
        }
        match self.bitexts.binary_search_by(|b| b.id().cmp(bitext.id())) {
            Ok(i) => self.bitexts[i] = bitext,
            Err(i) => self.bitexts.insert(i, bitext),
        }
        Ok(())
    }

    pub fn set_config(&mut self, config: Config) {
        self.config = config;
    }

    /// Drops derived products (lexicon, phrase lists, forks).
    pub fn clear_products(&mut self) {
        self.lexicon = None;
        self.phrases.clear();
        self.forks.clear();
    }

    /// Renders every file of the archive, keyed by relative path.
    pub fn render(&self) -> BTreeMap<String, Vec<u8>> {
        let mut files: BTreeMap<String, String> = BTreeMap::new();
        files.insert(CONFIG.into(), self.config.canonical());

        let mut docs: Vec<&Document> = self.documents().map(|(_, _, d)| d).collect();
        docs.sort_by(|a, b| a.id().cmp(b.id()));
        let (mut documents, mut constituents, mut tokens) = (String::new(), String::new(), String::new());
        let mut texts = BTreeMap::new();
        for d in &docs {
            documents.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                d.id(),
                d.language(),
                d.char_len(),
                sha256_hex(d.text().as_bytes())
            ));
            texts.insert(format!("docs/{}.txt", d.id()), d.text().to_string());
            for c in d.tree().iter() {
                let parent = c.parent.map_or("-".to_string(), |p| p.to_string());
                constituents.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    d.id(),
                    c.id,
                    c.level,
                    c.span.start,
                    c.span.end,
                    parent
                ));
            }
            let mut rows: Vec<(usize, String)> = d
                .tokens()
                .iter()
                .map(|t| {
                    let row = format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\n",
                        d.id(),
                        t.index,
                        t.class.as_str(),
                        t.span.start,
                        t.span.end,
                        t.normalized
                    );
                    (t.span.start, row)
                })
                .collect();
            rows.extend(
                d.gaps()
                    .iter()
                    .map(|g| (g.offset, format!("{}\t-\tgap\t{}\t{}\t\n", d.id(), g.offset, g.offset + 1))),
            );
            rows.sort_by_key(|(start, _)| *start);
            tokens.extend(rows.into_iter().map(|(_, r)| r));
        }
        files.insert(DOCUMENTS.into(), documents);
        files.insert(CONSTITUENTS.into(), constituents);
        files.insert(TOKENS.into(), tokens);

        let (mut bitexts, mut links) = (String::new(), String::new());
        let id_list = |ids: &[ConstituentId]| -> String {
            if ids.is_empty() {
                "-".into()
            } else {
                ids.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            }
        };
        for b in &self.bitexts {
            let degraded = if b.degraded().is_empty() {
                "-".to_string()
            } else {
                b.degraded().iter().map(|l| l.as_str()).collect::<Vec<_>>().join(",")
            };
            bitexts.push_str(&format!("{}\t{}\t{}\t{}\n", b.id(), b.source().id(), b.target().id(), degraded));
            for (i, l) in b.links().iter().enumerate() {
                links.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    b.id(),
                    i,
                    l.level,
                    id_list(&l.src),
                    id_list(&l.tgt),
                    l.cost
                ));
            }
        }
        files.insert(BITEXTS.into(), bitexts);
        files.insert(LINKS.into(), links);

        let (mut lexicon, mut frequencies) = (String::new(), String::new());
        if let Some(lex) = &self.lexicon {
            for e in lex.entries() {
                let evidence = if e.evidence.is_empty() {
                    "-".to_string()
                } else {
                    e.evidence.iter().map(|r| format!("{}:{}", r.bitext, r.link)).collect::<Vec<_>>().join(",")
                };
                lexicon.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    e.source, e.target, e.score, e.pos, e.freq, e.len, e.cooc, evidence
                ));
            }
            for side in [Side::Source, Side::Target] {
                for (w, f) in lex.frequencies(side) {
                    frequencies.push_str(&format!("{side}\t{w}\t{f}\n"));
                }
            }
        }
        files.insert(LEXICON.into(), lexicon);
        files.insert(FREQUENCIES.into(), frequencies);

        let mut phrases: Vec<&PhraseListEntry> = self.phrases.iter().collect();
        phrases.sort_by(|a, b| a.side.cmp(&b.side).then(b.freq.cmp(&a.freq)).then_with(|| a.ngram.cmp(&b.ngram)));
        let phrases: Vec<PhraseListEntry> = phrases.into_iter().cloned().collect();
        files.insert(PHRASES.into(), phrases_to_tsv(&phrases));
        files.insert(FORKS.into(), forks_to_tsv(&self.forks));

        let mut manifest = format!(
            "format_version\t{FORMAT_VERSION}\nconfig_hash\t{}\nnewlines\tlf\nlexicon\t{}\n",
            self.config.hash(),
            if self.lexicon.is_some() { "present" } else { "absent" }
        );
        if let Some(lex) = &self.lexicon {
            manifest.push_str(&format!("lexicon_threshold\t{}\n", lex.threshold()));
        }
        for name in INDEX_FILES {
            let content = &files[name];
            manifest.push_str(&format!("records\t{name}\t{}\n", content.lines().count()));
        }
        for name in INDEX_FILES {
            manifest.push_str(&format!("checksum\t{name}\t{}\n", sha256_hex(files[name].as_bytes())));
        }

        let mut out: BTreeMap<String, Vec<u8>> = files.into_iter().map(|(k, v)| (k, v.into_bytes())).collect();
        out.extend(texts.into_iter().map(|(k, v)| (k, v.into_bytes())));
        out.insert(MANIFEST.into(), manifest.into_bytes());
        out
    }

    /// Writes the archive to `path`, replacing any previous archive there.
    /// Files are written to a sibling temporary directory first and moved
    /// into place by rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .ok_or_else(|| Error::invalid(format!("{} is not a directory path", path.display())))?
            .to_string_lossy()
            .into_owned();
        let staging = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        std::fs::create_dir_all(staging.join("docs")).map_err(|e| Error::io(&staging, e))?;
        for (rel, bytes) in self.render() {
            let file = staging.join(&rel);
            std::fs::write(&file, bytes).map_err(|e| Error::io(&file, e))?;
        }
        let retired = parent.join(format!(".{name}.old-{}", std::process::id()));
        if path.exists() {
            std::fs::rename(path, &retired).map_err(|e| Error::io(path, e))?;
        }
        std::fs::rename(&staging, path).map_err(|e| Error::io(path, e))?;
        if retired.exists() {
            std::fs::remove_dir_all(&retired).map_err(|e| Error::io(&retired, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Archive> {
        if !path.is_dir() {
            return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "archive directory not found")));
        }
        let read = |rel: &str| -> Result<Option<String>> {
            let file = path.join(rel);
            match std::fs::read(&file) {
                Ok(bytes) => String::from_utf8(bytes)
                    .map(Some)
                    .map_err(|_| integrity(rel, 0, "file is not valid UTF-8")),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(Error::io(&file, e)),
            }
        };
        let manifest_text = read(MANIFEST)?.ok_or_else(|| truncated(MANIFEST, "missing"))?;
        let manifest = Manifest::parse(&manifest_text)?;

        let mut files: HashMap<&str, String> = HashMap::new();
        for name in INDEX_FILES {
            let content = read(name)?.ok_or_else(|| truncated(name, "missing"))?;
            let expected = manifest.records.get(name).copied().ok_or_else(|| integrity(MANIFEST, 0, &format!("no record count for {name}")))?;
            let found = content.lines().count();
            if !content.is_empty() && !content.ends_with('\n') {
                return Err(truncated(name, "last record is cut off"));
            }
            if found < expected {
                return Err(truncated(name, &format!("{found} of {expected} records present")));
            }
            if found > expected {
                return Err(integrity(name, expected + 1, &format!("{found} records, manifest lists {expected}")));
            }
            files.insert(name, content);
        }
        let loader = Loader { root: path.to_path_buf(), files, manifest };
        let archive = loader.build()?;
        for name in INDEX_FILES {
            let expected = &loader.manifest.checksums.get(name).cloned().unwrap_or_default();
            if &sha256_hex(loader.files[name].as_bytes()) != expected {
                return Err(integrity(name, 0, "checksum does not match the manifest"));
            }
        }
        Ok(archive)
    }
}

fn integrity(file: &str, line: usize, reason: &str) -> Error {
    Error::Integrity { file: file.to_string(), line, reason: reason.to_string() }
}

fn truncated(file: &str, reason: &str) -> Error {
    Error::Truncated { file: file.to_string(), reason: reason.to_string() }
}

struct Manifest {
    lexicon: bool,
    lexicon_threshold: Option<f64>,
    config_hash: String,
    records: HashMap<String, usize>,
    checksums: HashMap<String, String>,
}

impl Manifest {
    fn parse(text: &str) -> Result<Manifest> {
        let mut lines = text.lines().enumerate();
        match lines.next().map(|(_, l)| l.split('\t').collect::<Vec<_>>()) {
            Some(f) if f.len() == 2 && f[0] == "format_version" => {
                if f[1] != FORMAT_VERSION.to_string() {
                    return Err(Error::VersionMismatch { found: f[1].to_string(), expected: FORMAT_VERSION });
                }
            }
            _ => return Err(integrity(MANIFEST, 1, "first line must carry format_version")),
        }
        let mut m = Manifest {
            lexicon: false,
            lexicon_threshold: None,
            config_hash: String::new(),
            records: HashMap::new(),
            checksums: HashMap::new(),
        };
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || integrity(MANIFEST, i + 1, &format!("unreadable entry {line:?}"));
            match (f[0], f.len()) {
                ("config_hash", 2) => m.config_hash = f[1].to_string(),
                ("newlines", 2) if f[1] == "lf" => {}
                ("lexicon", 2) => m.lexicon = f[1] == "present",
                ("lexicon_threshold", 2) => m.lexicon_threshold = Some(f[1].parse().map_err(|_| bad())?),
                ("records", 3) => {
                    m.records.insert(f[1].to_string(), f[2].parse().map_err(|_| bad())?);
                }
                ("checksum", 3) => {
                    m.checksums.insert(f[1].to_string(), f[2].to_string());
                }
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }
}

/// Tab-separated fields of one record, with its file and line for errors.
struct Record<'a> {
    file: &'static str,
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Record<'a> {
    fn fail(&self, reason: impl AsRef<str>) -> Error {
        integrity(self.file, self.line, reason.as_ref())
    }

    fn get<T: FromStr>(&self, i: usize, what: &str) -> Result<T> {
        self.fields[i].parse().map_err(|_| self.fail(format!("bad {what} {:?}", self.fields[i])))
    }

    fn float(&self, i: usize, what: &str) -> Result<f64> {
        let v: f64 = self.get(i, what)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(format!("{what} is not finite")))
        }
    }

    fn ids(&self, i: usize) -> Result<Vec<ConstituentId>> {
        if self.fields[i] == "-" {
            return Ok(Vec::new());
        }
        self.fields[i]
            .split(',')
            .map(|s| s.parse().map(ConstituentId).map_err(|_| self.fail(format!("bad constituent id {s:?}"))))
            .collect()
    }
}

fn records<'a>(file: &'static str, content: &'a str, columns: usize) -> Result<Vec<Record<'a>>> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split('\t').collect();
            if fields.len() != columns {
                return Err(integrity(file, i + 1, &format!("expected {columns} fields, found {}", fields.len())));
            }
            Ok(Record { file, line: i + 1, fields })
        })
        .collect()
}

struct Loader<'f> {
    root: PathBuf,
    files: HashMap<&'f str, String>,
    manifest: Manifest,
}

impl Loader<'_> {
    fn build(&self) -> Result<Archive> {
        let config = Config::parse(&self.files[CONFIG]).map_err(|e| match e {
            Error::Config { line, message } => integrity(CONFIG, line, &message),
            other => integrity(CONFIG, 0, &other.to_string()),
        })?;
        if config.hash() != self.manifest.config_hash {
            return Err(integrity(MANIFEST, 0, "config hash does not match config.txt"));
        }
        let mut documents = self.documents()?;
        let bitexts = self.bitexts(&mut documents)?;
        let mut archive = Archive::new(config);
        for b in bitexts {
            let id = b.id().to_string();
            archive.insert_bitext(b).map_err(|e| integrity(BITEXTS, 0, &format!("{id}: {e}")))?;
        }
        if let Some((id, _)) = documents.into_iter().next() {
            return Err(integrity(DOCUMENTS, 0, &format!("document {id} belongs to no bitext")));
        }
        archive.lexicon = self.lexicon(&archive)?;
        archive.phrases = self.phrases(&archive)?;
        archive.forks = self.forks(&archive)?;
        Ok(archive)
    }

    fn documents(&self) -> Result<BTreeMap<String, (Document, usize)>> {
        let mut trees: BTreeMap<String, Vec<(Level, Span, Option<ConstituentId>)>> = BTreeMap::new();
        let mut tree_lines: HashMap<String, usize> = HashMap::new();
        for r in records(CONSTITUENTS, &self.files[CONSTITUENTS], 6)? {
            let entries = trees.entry(r.fields[0].to_string()).or_default();
            tree_lines.entry(r.fields[0].to_string()).or_insert(r.line);
            let id: u32 = r.get(1, "constituent id")?;
            if id as usize != entries.len() {
                return Err(r.fail(format!("constituent {id} is out of order")));
            }
            let parent = if r.fields[5] == "-" { None } else { Some(ConstituentId(r.get(5, "parent")?)) };
            entries.push((r.get(2, "level")?, Span::new(r.get(3, "start")?, r.get(4, "end")?), parent));
        }
        let mut token_rows: BTreeMap<String, Vec<Record>> = BTreeMap::new();
        for r in records(TOKENS, &self.files[TOKENS], 6)? {
            token_rows.entry(r.fields[0].to_string()).or_default().push(r);
        }

        let mut out = BTreeMap::new();
        for r in records(DOCUMENTS, &self.files[DOCUMENTS], 4)? {
            let id = DocId::new(r.fields[0]).map_err(|e| r.fail(e.to_string()))?;
            let rel = format!("docs/{id}.txt");
            let file = self.root.join(&rel);
            let text = match std::fs::read(&file) {
                Ok(bytes) => String::from_utf8(bytes).map_err(|_| integrity(&rel, 0, "not valid UTF-8"))?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(truncated(&rel, "missing")),
                Err(e) => return Err(Error::io(&file, e)),
            };
            let char_len: usize = r.get(2, "character length")?;
            let found = text.chars().count();
            if found < char_len {
                return Err(truncated(&rel, &format!("{found} of {char_len} characters present")));
            }
            if found != char_len || sha256_hex(text.as_bytes()) != r.fields[3] {
                return Err(integrity(&rel, 0, "text does not match its checksum in documents.tsv"));
            }
            let entries = trees.remove(id.as_str()).ok_or_else(|| r.fail(format!("no constituents for {id}")))?;
            let tree = ConstituentTree::from_preorder(entries, char_len)
                .map_err(|e| integrity(CONSTITUENTS, tree_lines[id.as_str()], &format!("{id}: {e}")))?;
            let chars: Vec<char> = text.chars().collect();
            let mut tokens = Vec::new();
            let mut gaps = Vec::new();
            let rows = token_rows.remove(id.as_str()).unwrap_or_default();
            let first_line = rows.first().map_or(0, |r| r.line);
            for t in &rows {
                let span = Span::new(t.get(3, "start")?, t.get(4, "end")?);
                if span.start >= span.end || span.end > chars.len() {
                    return Err(t.fail(format!("span {span} is outside the text")));
                }
                if t.fields[1] == "-" {
                    if t.fields[2] != "gap" || span.len() != 1 || !t.fields[5].is_empty() {
                        return Err(t.fail("malformed gap record"));
                    }
                    gaps.push(GapMark { offset: span.start, mark: chars[span.start] });
                } else {
                    tokens.push(Token {
                        surface: chars[span.start..span.end].iter().collect(),
                        normalized: t.fields[5].to_string(),
                        index: t.get(1, "token index")?,
                        class: t.get::<TokenClass>(2, "token class")?,
                        span,
                    });
                }
            }
            let language = r.fields[1].to_string();
            let doc = Document::from_parts(id.clone(), language, text, tree, tokens, gaps)
                .map_err(|e| integrity(TOKENS, first_line, &e.to_string()))?;
            out.insert(id.to_string(), (doc, r.line));
        }
        if let Some(id) = trees.keys().next() {
            return Err(integrity(CONSTITUENTS, tree_lines[id], &format!("unknown document {id}")));
        }
        if let Some((id, rows)) = token_rows.iter().next() {
            return Err(integrity(TOKENS, rows[0].line, &format!("unknown document {id}")));
        }
        Ok(out)
    }

    fn bitexts(&self, documents: &mut BTreeMap<String, (Document, usize)>) -> Result<Vec<Bitext>> {
        let mut links: BTreeMap<String, Vec<(Link, usize)>> = BTreeMap::new();
        for r in records(LINKS, &self.files[LINKS], 6)? {
            let list = links.entry(r.fields[0].to_string()).or_default();
            let index: usize = r.get(1, "link index")?;
            if index != list.len() {
                return Err(r.fail(format!("link {index} is out of order")));
            }
            let link = Link { level: r.get(2, "level")?, src: r.ids(3)?, tgt: r.ids(4)?, cost: r.float(5, "cost")? };
            link.shape().map_err(|e| r.fail(e.to_string()))?;
            list.push((link, r.line));
        }
        let mut out = Vec::new();
        for r in records(BITEXTS, &self.files[BITEXTS], 4)? {
            let mut take = |i: usize| {
                documents
                    .remove(r.fields[i])
                    .map(|(d, _)| d)
                    .ok_or_else(|| r.fail(format!("unknown or reused document {:?}", r.fields[i])))
            };
            let (source, target) = (take(1)?, take(2)?);
            let degraded: BTreeSet<Level> = if r.fields[3] == "-" {
                BTreeSet::new()
            } else {
                r.fields[3]
                    .split(',')
                    .map(|l| l.parse().map_err(|_| r.fail(format!("bad level {l:?}"))))
                    .collect::<Result<_>>()?
            };
            let own = links.remove(r.fields[0]).unwrap_or_default();
            let first_line = own.first().map_or(r.line, |(_, l)| *l);
            // stored order must already be canonical (document links first)
            if own.windows(2).any(|w| w[0].0.level < w[1].0.level) {
                return Err(integrity(LINKS, first_line, "links are not grouped by level"));
            }
            let mut last: HashMap<(Side, Level), ConstituentId> = HashMap::new();
            for (link, line) in &own {
                for (side, doc) in [(Side::Source, &source), (Side::Target, &target)] {
                    for &cid in link.members(side) {
                        let fits = doc.tree().get(cid).is_some_and(|c| c.level == link.level);
                        let ordered = last.insert((side, link.level), cid).is_none_or(|prev| prev < cid);
                        if !fits || !ordered {
                            let reason = format!("{side} constituent {cid} is missing, misplaced or out of order");
                            return Err(integrity(LINKS, *line, &reason));
                        }
                    }
                }
            }
            let own: Vec<Link> = own.into_iter().map(|(l, _)| l).collect();
            let bitext = Bitext::new(r.fields[0], source, target, own, degraded)
                .map_err(|e| integrity(LINKS, first_line, &e.to_string()))?;
            out.push(bitext);
        }
        if let Some((id, rows)) = links.iter().next() {
            return Err(integrity(LINKS, rows[0].1, &format!("unknown bitext {id}")));
        }
        Ok(out)
    }

    fn lexicon(&self, archive: &Archive) -> Result<Option<CounterwordLexicon>> {
        let entries_text = &self.files[LEXICON];
        let freq_text = &self.files[FREQUENCIES];
        if !self.manifest.lexicon {
            if !entries_text.is_empty() || !freq_text.is_empty() {
                return Err(integrity(LEXICON, 1, "lexicon records present but the manifest lists none"));
            }
            return Ok(None);
        }
        let threshold = self
            .manifest
            .lexicon_threshold
            .ok_or_else(|| integrity(MANIFEST, 0, "lexicon threshold missing"))?;
        let mut freqs: [BTreeMap<String, u64>; 2] = Default::default();
        for r in records(FREQUENCIES, freq_text, 3)? {
            let side: Side = r.get(0, "side")?;
            let slot = &mut freqs[side as usize];
            if slot.insert(r.fields[1].to_string(), r.get(2, "frequency")?).is_some() {
                return Err(r.fail("duplicate word"));
            }
        }
        let mut entries = Vec::new();
        for r in records(LEXICON, entries_text, 8)? {
            let evidence = if r.fields[7] == "-" {
                Vec::new()
            } else {
                r.fields[7]
                    .split(',')
                    .map(|item| {
                        let (bitext, link) = item.rsplit_once(':').ok_or_else(|| r.fail(format!("bad evidence {item:?}")))?;
                        let link: usize = link.parse().map_err(|_| r.fail(format!("bad evidence {item:?}")))?;
                        let resolves = archive
                            .bitext(bitext)
                            .and_then(|b| b.links().get(link))
                            .is_some_and(|l| l.level == Level::Phrase);
                        if !resolves {
                            return Err(r.fail(format!("evidence {item} does not resolve to a phrase link")));
                        }
                        Ok(PhraseRef { bitext: bitext.to_string(), link })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let entry = CounterwordEntry {
                source: r.fields[0].to_string(),
                target: r.fields[1].to_string(),
                score: r.float(2, "score")?,
                pos: r.float(3, "position score")?,
                freq: r.float(4, "frequency score")?,
                len: r.float(5, "length score")?,
                cooc: r.get(6, "co-occurrence count")?,
                evidence,
            };
            for v in [entry.score, entry.pos, entry.freq, entry.len] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(r.fail("score outside [0, 1]"));
                }
            }
            if !freqs[0].contains_key(&entry.source) || !freqs[1].contains_key(&entry.target) {
                return Err(r.fail("entry word missing from frequencies.tsv"));
            }
            entries.push(entry);
        }
        let [source, target] = freqs;
        let lex = CounterwordLexicon::new(entries, threshold, source, target)
            .map_err(|e| integrity(MANIFEST, 0, &e.to_string()))?;
        Ok(Some(lex))
    }

    fn phrases(&self, archive: &Archive) -> Result<Vec<PhraseListEntry>> {
        records(PHRASES, &self.files[PHRASES], 7)?
            .iter()
            .map(|r| {
                let side: Side = r.get(0, "side")?;
                let words = |i: usize| -> Vec<String> { r.fields[i].split(' ').map(str::to_string).collect() };
                let phrase = ConstituentId(r.get(4, "phrase id")?);
                let resolves = archive
                    .bitext(r.fields[3])
                    .and_then(|b| b.side(side).tree().get(phrase))
                    .is_some_and(|c| c.level == Level::Phrase);
                if !resolves || r.fields[1].is_empty() {
                    return Err(r.fail("sample does not resolve to a phrase"));
                }
                let paired = match (r.fields[5], r.fields[6]) {
                    ("", "") => None,
                    (_, _) => Some(PairedNgram { ngram: words(5), score: r.float(6, "pairing score")? }),
                };
                Ok(PhraseListEntry {
                    side,
                    ngram: words(1),
                    freq: r.get(2, "frequency")?,
                    sample: PhraseOccurrence { bitext: r.fields[3].to_string(), phrase },
                    paired,
                })
            })
            .collect()
    }

    fn forks(&self, archive: &Archive) -> Result<Vec<ForkReport>> {
        let mut out: Vec<ForkReport> = Vec::new();
        for r in records(FORKS, &self.files[FORKS], 7)? {
            let side: Side = r.get(0, "side")?;
            let rank: usize = r.get(3, "rank")?;
            let branch = ForkBranch {
                counterpart: r.fields[4].to_string(),
                score: r.float(5, "score")?,
                cooc: r.get(6, "co-occurrence count")?,
            };
            let known = archive.lexicon.as_ref().is_some_and(|lex| {
                lex.candidates(side, r.fields[1]).any(|e| e.word(side.opposite()) == branch.counterpart)
            });
            if !known {
                return Err(r.fail("fork branch is not a lexicon entry"));
            }
            if rank == 0 {
                out.push(ForkReport {
                    pivot: r.fields[1].to_string(),
                    side,
                    branches: vec![branch],
                    severity: r.float(2, "severity")?,
                });
            } else {
                match out.last_mut() {
                    Some(f) if f.pivot == r.fields[1] && f.side == side && f.branches.len() == rank => f.branches.push(branch),
                    _ => return Err(r.fail("fork branch without its report")),
                }
            }
        }
        if let Some(f) = out.iter().find(|f| f.branches.len() < 2) {
            return Err(integrity(FORKS, 0, &format!("fork on {} has a single branch", f.pivot)));
        }
        Ok(out)
    }
}
