//! The `bitext` command line. Output meant for machines goes to stdout;
//! warnings and errors go to stderr.
//!
//! Exit codes: 0 success (also for degraded alignments, which only warn),
//! 1 other failure, 2 configuration or usage error, 3 missing input,
//! 4 archive integrity failure.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use bitext_core::align::align_bitext;
use bitext_core::assign::{assign, collect, CollectWarning};
use bitext_core::config::Config;
use bitext_core::lexica::{
    corpus_stats, detect_forks, extract_phrases, forks_to_tsv, frequencies_to_tsv, phrases_to_tsv, CorpusStats,
};
use bitext_core::model::{Bitext, DocId, Document, Side};
use bitext_core::query::QueryEngine;
use bitext_core::store::{normalize_newlines, Archive};
use bitext_core::synth::{generate, precision, SyntheticSpec};
use bitext_core::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::api::{self, Params};

#[derive(Debug, Parser)]
#[command(name = "bitext", version, about = "Align parallel documents and query their counterparts")]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Archive directory.
    #[arg(long, global = true)]
    archive: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Inputs {
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long, default_value = "und")]
    src_lang: String,
    #[arg(long)]
    tgt: Option<PathBuf>,
    #[arg(long, default_value = "und")]
    tgt_lang: String,
    /// Bitext id; defaults to the source file name.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add a source/target document pair to the archive.
    Ingest(Inputs),
    /// Align every bitext in the archive (optionally ingesting a pair first).
    Align(Inputs),
    /// Build the counterword lexicon from phrase links.
    Assign {
        #[arg(long)]
        threshold: Option<f64>,
        /// Tab-separated `source target` pairs; reports presented-set precision.
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Extract draft phrase lists.
    Phrases {
        #[arg(long)]
        side: Option<Side>,
    },
    /// Report forks in the lexicon.
    Forks {
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Word frequency statistics of a file or an archive side.
    Stats {
        #[arg(long)]
        src: Option<PathBuf>,
        #[arg(long, default_value = "source")]
        side: Side,
        /// Print the frequency table instead of the summary.
        #[arg(long)]
        frequencies: bool,
    },
    /// Answer one query against the archive.
    Query {
        #[command(subcommand)]
        query: QueryCommand,
    },
    /// Serve the read-only HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write a seeded synthetic corpus and its planted dictionary.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        src_out: PathBuf,
        #[arg(long)]
        tgt_out: PathBuf,
        #[arg(long)]
        gold_out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum QueryCommand {
    Countertext {
        #[arg(long)]
        bitext: String,
        #[arg(long, default_value = "source")]
        side: String,
        #[arg(long)]
        start: usize,
        #[arg(long)]
        end: usize,
    },
    Counterwords {
        #[arg(long)]
        word: String,
        #[arg(long, default_value = "source")]
        side: String,
    },
    Concordance {
        #[arg(long)]
        term: String,
        #[arg(long, default_value = "source")]
        side: String,
        #[arg(long, default_value_t = api::DEFAULT_LIMIT)]
        limit: usize,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match &e {
            Error::Config { .. } | Error::Pattern { .. } => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
            Error::Integrity { .. } | Error::Truncated { .. } | Error::VersionMismatch { .. } => 4,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

type Outcome = Result<(), Failure>;

struct Context<'w> {
    config: Option<Config>,
    archive: Option<PathBuf>,
    out: &'w mut dyn Write,
    err: &'w mut dyn Write,
}

impl Context<'_> {
    fn archive_path(&self) -> Result<&Path, Failure> {
        self.archive.as_deref().ok_or_else(|| fail(2, "--archive is required"))
    }

    fn load(&self) -> Result<Archive, Failure> {
        Ok(Archive::load(self.archive_path()?)?)
    }

    /// Existing archive, or a fresh one. An explicit config replaces the
    /// stored one.
    fn load_or_create(&self) -> Result<Archive, Failure> {
        let path = self.archive_path()?;
        let mut archive = if path.join("manifest.tsv").exists() {
            Archive::load(path)?
        } else {
            Archive::new(self.config.clone().unwrap_or_default())
        };
        if let Some(cfg) = &self.config {
            if cfg.hash() != archive.config().hash() {
                archive.set_config(cfg.clone());
                archive.clear_products();
            }
        }
        Ok(archive)
    }

    fn print(&mut self, line: impl std::fmt::Display) -> Outcome {
        writeln!(self.out, "{line}").map_err(|e| fail(1, e.to_string()))
    }

    fn warn(&mut self, line: impl std::fmt::Display) {
        let _ = writeln!(self.err, "warning: {line}");
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(normalize_newlines(&text))
}

fn sanitize_id(raw: &str) -> String {
    let id: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    let id = id.trim_start_matches('.').to_string();
    if id.is_empty() {
        "bitext".into()
    } else {
        id
    }
}

fn ingest(archive: &mut Archive, inputs: &Inputs) -> Result<String, Failure> {
    let (Some(src), Some(tgt)) = (&inputs.src, &inputs.tgt) else {
        return Err(fail(2, "both --src and --tgt are required"));
    };
    let (src_text, tgt_text) = (read_text(src)?, read_text(tgt)?);
    let id = match &inputs.id {
        Some(id) => id.clone(),
        None => sanitize_id(&src.file_stem().unwrap_or_default().to_string_lossy()),
    };
    let cfg = archive.config().clone();
    let normalizer = cfg.build_normalizer();
    let doc = |suffix: &str, lang: &str, text: String| -> Result<Document, Failure> {
        let doc_id = DocId::new(format!("{id}.{suffix}"))?;
        Ok(Document::new(doc_id, lang, text, &cfg.rules, &normalizer))
    };
    let source = doc("src", &inputs.src_lang, src_text)?;
    let target = doc("tgt", &inputs.tgt_lang, tgt_text)?;
    let bitext = Bitext::new(id.clone(), source, target, Vec::new(), BTreeSet::new())?;
    archive.insert_bitext(bitext)?;
    archive.clear_products();
    Ok(id)
}

fn cmd_ingest(ctx: &mut Context, inputs: &Inputs) -> Outcome {
    let mut archive = ctx.load_or_create()?;
    let id = ingest(&mut archive, inputs)?;
    archive.save(ctx.archive_path()?)?;
    let b = archive.bitext(&id).expect("just inserted");
    ctx.print(json!({
        "bitext": id,
        "source_tokens": b.source().tokens().len(),
        "target_tokens": b.target().tokens().len(),
    }))
}

fn cmd_align(ctx: &mut Context, inputs: &Inputs) -> Outcome {
    let mut archive = ctx.load_or_create()?;
    if inputs.src.is_some() || inputs.tgt.is_some() {
        ingest(&mut archive, inputs)?;
    }
    let cfg = archive.config().clone();
    let normalizer = cfg.build_normalizer();
    let resegment = |d: &Document| Document::new(d.id().clone(), d.language(), d.text(), &cfg.rules, &normalizer);
    let aligned: Vec<Bitext> = archive
        .bitexts()
        .iter()
        .map(|b| align_bitext(b.id(), resegment(b.source()), resegment(b.target()), &cfg.cost, &cfg.band))
        .collect::<Result<_, _>>()?;
    for b in aligned {
        archive.insert_bitext(b)?;
    }
    archive.clear_products();
    archive.save(ctx.archive_path()?)?;
    for b in archive.bitexts() {
        if !b.degraded().is_empty() {
            let levels: Vec<&str> = b.degraded().iter().map(|l| l.as_str()).collect();
            ctx.warn(format!("bitext {}: alignment band widened at {} level", b.id(), levels.join(", ")));
        }
        ctx.print(json!({
            "bitext": b.id(),
            "total_cost": b.total_cost(),
            "links": b.links().len(),
            "degraded": b.degraded(),
        }))?;
    }
    Ok(())
}

fn read_gold(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = read_text(path)?;
    let mut gold = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((s, t)) = line.split_once('\t') else {
            return Err(fail(1, format!("{}:{}: expected `source<TAB>target`", path.display(), i + 1)));
        };
        gold.insert(s.trim().to_string(), t.trim().to_string());
    }
    Ok(gold)
}

fn cmd_assign(ctx: &mut Context, threshold: Option<f64>, gold: Option<&Path>) -> Outcome {
    let mut archive = ctx.load_or_create()?;
    let cfg = archive.config().clone();
    let threshold = threshold.unwrap_or(cfg.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(fail(2, format!("threshold {threshold} is outside [0, 1]")));
    }
    let normalizer = cfg.build_normalizer();
    if archive.bitexts().iter().any(|b| !b.is_aligned()) {
        ctx.warn("some bitexts are not aligned yet; run `align` first");
    }
    let lexicon = assign(archive.bitexts(), &normalizer, &cfg.weights, threshold)?;
    if collect(archive.bitexts(), &normalizer).warning() == Some(CollectWarning::NoPhraseLinks) {
        ctx.warn("no phrase-level links found; the lexicon is empty");
    }
    let mut report = json!({
        "entries": lexicon.entries().len(),
        "presented": lexicon.presented().count(),
        "threshold": threshold,
    });
    if let Some(path) = gold {
        let (p, n) = precision(&lexicon, &read_gold(path)?);
        report["precision"] = json!(p);
        report["evaluated"] = json!(n);
    }
    archive.clear_products();
    archive.lexicon = Some(lexicon);
    archive.save(ctx.archive_path()?)?;
    ctx.print(report)
}

fn cmd_phrases(ctx: &mut Context, side: Option<Side>) -> Outcome {
    let mut archive = ctx.load()?;
    let cfg = archive.config().clone();
    let normalizer = cfg.build_normalizer();
    let sides = match side {
        Some(s) => vec![s],
        None => vec![Side::Source, Side::Target],
    };
    let mut list = Vec::new();
    for s in sides {
        list.extend(extract_phrases(archive.bitexts(), s, &normalizer, archive.lexicon.as_ref(), cfg.min_freq, cfg.max_len)?);
    }
    archive.phrases = list;
    archive.save(ctx.archive_path()?)?;
    let tsv = phrases_to_tsv(&archive.phrases);
    ctx.print(tsv.trim_end())
}

fn cmd_forks(ctx: &mut Context, threshold: Option<f64>) -> Outcome {
    let mut archive = ctx.load()?;
    let lexicon = archive.lexicon.as_ref().ok_or(Error::NoLexicon)?;
    let threshold = threshold.or(archive.config().fork_threshold).unwrap_or(lexicon.threshold());
    archive.forks = detect_forks(lexicon, threshold).map_err(|e| fail(2, e.to_string()))?;
    archive.save(ctx.archive_path()?)?;
    let tsv = forks_to_tsv(&archive.forks);
    ctx.print(tsv.trim_end())
}

fn stats_json(s: &CorpusStats) -> serde_json::Value {
    json!({
        "token_count": s.token_count,
        "type_count": s.type_count,
        "hapax_type_ratio": s.hapax_type_ratio,
        "below5_type_ratio": s.below5_type_ratio,
        "hapax_token_ratio": s.hapax_token_ratio,
        "below5_token_ratio": s.below5_token_ratio,
    })
}

fn cmd_stats(ctx: &mut Context, src: Option<&Path>, side: Side, frequencies: bool) -> Outcome {
    let stats = match src {
        Some(path) => {
            let cfg = ctx.config.clone().unwrap_or_default();
            let normalizer = cfg.build_normalizer();
            let doc = Document::new(DocId::new("input")?, "und", read_text(path)?, &cfg.rules, &normalizer);
            corpus_stats(&[&doc], &normalizer)
        }
        None => {
            let archive = ctx.load()?;
            let normalizer = archive.config().build_normalizer();
            let docs: Vec<&Document> = archive.bitexts().iter().map(|b| b.side(side)).collect();
            corpus_stats(&docs, &normalizer)
        }
    };
    if frequencies {
        let tsv = frequencies_to_tsv(&stats);
        ctx.print(tsv.trim_end())
    } else {
        ctx.print(stats_json(&stats))
    }
}

fn cmd_query(ctx: &mut Context, query: &QueryCommand) -> Outcome {
    let engine = QueryEngine::new(ctx.load()?);
    let params = |pairs: &[(&str, String)]| -> Params { pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect() };
    let reply = match query {
        QueryCommand::Countertext { bitext, side, start, end } => api::countertext(
            &engine,
            bitext,
            &params(&[("side", side.clone()), ("start", start.to_string()), ("end", end.to_string())]),
        ),
        QueryCommand::Counterwords { word, side } => {
            api::counterwords(&engine, &params(&[("word", word.clone()), ("side", side.clone())]))
        }
        QueryCommand::Concordance { term, side, limit } => api::concordance(
            &engine,
            &params(&[("term", term.clone()), ("side", side.clone()), ("limit", limit.to_string())]),
        ),
    };
    ctx.print(&reply.body)?;
    match reply.status {
        200 => Ok(()),
        400 => Err(fail(2, "malformed query")),
        404 => Err(fail(1, "not found")),
        _ => Err(fail(1, "query failed")),
    }
}

fn cmd_serve(ctx: &mut Context, port: u16) -> Outcome {
    let engine = QueryEngine::new(ctx.load()?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| fail(1, e.to_string()))?;
    runtime
        .block_on(crate::server::serve(engine, port))
        .map_err(|e| fail(1, format!("server: {e}")))
}

fn cmd_synth(ctx: &mut Context, seed: u64, src: &Path, tgt: &Path, gold: &Path) -> Outcome {
    let corpus = generate(&SyntheticSpec { seed, ..SyntheticSpec::default() });
    let write = |path: &Path, text: &str| {
        std::fs::write(path, text).map_err(|e| Failure::from(Error::Io { path: path.to_path_buf(), source: e }))
    };
    write(src, &corpus.source)?;
    write(tgt, &corpus.target)?;
    let dict: String = corpus.dictionary.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
    write(gold, &dict)?;
    ctx.print(json!({ "seed": seed, "dictionary": corpus.dictionary.len() }))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    let config = match cli.config.as_deref().map(Config::load).transpose() {
        Ok(c) => c,
        Err(e) => {
            let f = Failure::from(e);
            // a config file that cannot be read is a configuration error
            let _ = writeln!(err, "error: {}", f.message);
            return 2;
        }
    };
    let mut ctx = Context { config, archive: cli.archive.clone(), out, err };
    let outcome = match &cli.command {
        Command::Ingest(inputs) => cmd_ingest(&mut ctx, inputs),
        Command::Align(inputs) => cmd_align(&mut ctx, inputs),
        Command::Assign { threshold, gold } => cmd_assign(&mut ctx, *threshold, gold.as_deref()),
        Command::Phrases { side } => cmd_phrases(&mut ctx, *side),
        Command::Forks { threshold } => cmd_forks(&mut ctx, *threshold),
        Command::Stats { src, side, frequencies } => cmd_stats(&mut ctx, src.as_deref(), *side, *frequencies),
        Command::Query { query } => cmd_query(&mut ctx, query),
        Command::Serve { port } => cmd_serve(&mut ctx, *port),
        Command::Synth { seed, src_out, tgt_out, gold_out } => cmd_synth(&mut ctx, *seed, src_out, tgt_out, gold_out),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message);
            f.code
        }
    }
}
