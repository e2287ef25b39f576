//! Documents, constituent trees, tokens, and the bitexts that link two
//! documents together level by level.
//!
//! All offsets are character offsets (Unicode scalar values), never bytes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::segment::{Normalizer, SegmentationRules};

/// Constituent levels, ordered so that `Phrase < Sentence < Paragraph < Document`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Phrase,
    Sentence,
    Paragraph,
    Document,
}

impl Level {
    pub const TOP_DOWN: [Level; 4] = [
        Level::Document,
        Level::Paragraph,
        Level::Sentence,
        Level::Phrase,
    ];

    pub fn child(self) -> Option<Level> {
        match self {
            Level::Document => Some(Level::Paragraph),
            Level::Paragraph => Some(Level::Sentence),
            Level::Sentence => Some(Level::Phrase),
            Level::Phrase => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Document => "document",
            Level::Paragraph => "paragraph",
            Level::Sentence => "sentence",
            Level::Phrase => "phrase",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "document" => Ok(Level::Document),
            "paragraph" => Ok(Level::Paragraph),
            "sentence" => Ok(Level::Sentence),
            "phrase" => Ok(Level::Phrase),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// Half-open interval `[start, end)` of character offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ConstituentId(pub u32);

impl ConstituentId {
    pub const ROOT: ConstituentId = ConstituentId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConstituentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constituent {
    pub id: ConstituentId,
    pub level: Level,
    pub span: Span,
    pub children: Vec<ConstituentId>,
    pub parent: Option<ConstituentId>,
}

/// Hierarchical segmentation of one document. Node ids are pre-order
/// positions, so ids of one level ascend in text order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstituentTree {
    nodes: Vec<Constituent>,
}

impl ConstituentTree {
    /// Builds a tree from `(level, span, parent)` triples in pre-order,
    /// validating every structural invariant against a text of `text_len`
    /// characters.
    pub fn from_preorder(
        entries: impl IntoIterator<Item = (Level, Span, Option<ConstituentId>)>,
        text_len: usize,
    ) -> Result<Self> {
        let mut nodes: Vec<Constituent> = Vec::new();
        for (i, (level, span, parent)) in entries.into_iter().enumerate() {
            let id = ConstituentId(i as u32);
            if span.start > span.end {
                return Err(Error::invalid(format!("constituent {id}: reversed span {span}")));
            }
            match parent {
                None if i != 0 => {
                    return Err(Error::invalid(format!("constituent {id}: only the root may lack a parent")))
                }
                Some(_) if i == 0 => return Err(Error::invalid("root constituent has a parent")),
                Some(p) if p.index() >= i => {
                    return Err(Error::invalid(format!("constituent {id}: parent {p} does not precede it")))
                }
                _ => {}
            }
            if let Some(p) = parent {
                let parent_node = &nodes[p.index()];
                if parent_node.level.child() != Some(level) {
                    return Err(Error::invalid(format!(
                        "constituent {id}: {level} cannot be a child of {}",
                        parent_node.level
                    )));
                }
                if !parent_node.span.contains(&span) {
                    return Err(Error::invalid(format!("constituent {id}: span {span} escapes its parent")));
                }
                if span.is_empty() {
                    return Err(Error::invalid(format!("constituent {id}: empty span")));
                }
                if let Some(prev) = parent_node.children.last() {
                    if nodes[prev.index()].span.end > span.start {
                        return Err(Error::invalid(format!("constituent {id}: overlaps its preceding sibling")));
                    }
                }
            } else if level != Level::Document || span != Span::new(0, text_len) {
                return Err(Error::invalid("root must be a document constituent covering the whole text"));
            }
            if let Some(p) = parent {
                nodes[p.index()].children.push(id);
            }
            nodes.push(Constituent { id, level, span, children: Vec::new(), parent });
        }
        if nodes.is_empty() {
            return Err(Error::invalid("tree has no root"));
        }
        // pre-order: a node's subtree must be contiguous, i.e. every node's parent
        // is on the path of the previous node.
        for i in 1..nodes.len() {
            let parent = nodes[i].parent.expect("checked above");
            let mut cursor = Some(ConstituentId(i as u32 - 1));
            let mut on_path = false;
            while let Some(c) = cursor {
                if c == parent {
                    on_path = true;
                    break;
                }
                cursor = nodes[c.index()].parent;
            }
            if !on_path {
                return Err(Error::invalid(format!("constituent {i}: tree is not in pre-order")));
            }
        }
        Ok(ConstituentTree { nodes })
    }

    pub fn root(&self) -> &Constituent {
        &self.nodes[0]
    }

    pub fn get(&self, id: ConstituentId) -> Option<&Constituent> {
        self.nodes.get(id.index())
    }

    pub(crate) fn node(&self, id: ConstituentId) -> Result<&Constituent> {
        self.get(id).ok_or(Error::Ownership(id.0))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constituent> {
        self.nodes.iter()
    }

    /// Constituents of one level, in text order.
    pub fn at_level(&self, level: Level) -> impl Iterator<Item = &Constituent> {
        self.nodes.iter().filter(move |c| c.level == level)
    }

    pub fn depth(&self, id: ConstituentId) -> usize {
        let mut depth = 0;
        let mut cursor = self.nodes[id.index()].parent;
        while let Some(p) = cursor {
            depth += 1;
            cursor = self.nodes[p.index()].parent;
        }
        depth
    }

    /// Deepest constituent whose span contains `span`. A query that coincides
    /// with a constituent's span resolves to the outermost constituent with
    /// exactly that span, so the whole text always maps to the root.
    pub fn smallest_enclosing(&self, span: Span) -> Result<&Constituent> {
        let root = self.root();
        if span.start > span.end || !root.span.contains(&span) {
            return Err(Error::Range { start: span.start, end: span.end, len: root.span.end });
        }
        let mut current = root;
        loop {
            if current.span == span {
                return Ok(current);
            }
            let idx = current
                .children
                .partition_point(|c| self.nodes[c.index()].span.end < span.end);
            match current.children.get(idx).map(|c| &self.nodes[c.index()]) {
                Some(child) if child.span.contains(&span) => current = child,
                _ => return Ok(current),
            }
        }
    }

    /// `[c, parent(c), ..., root]`.
    pub fn context_ladder(&self, id: ConstituentId) -> Result<Vec<&Constituent>> {
        let mut ladder = vec![self.node(id)?];
        while let Some(p) = ladder.last().and_then(|c| c.parent) {
            ladder.push(&self.nodes[p.index()]);
        }
        Ok(ladder)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenClass {
    Word,
    Numeral,
    Punct,
}

impl TokenClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Word => "word",
            TokenClass::Numeral => "numeral",
            TokenClass::Punct => "punct",
        }
    }
}

impl FromStr for TokenClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "word" => Ok(TokenClass::Word),
            "numeral" => Ok(TokenClass::Numeral),
            "punct" => Ok(TokenClass::Punct),
            other => Err(format!("unknown token class {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// Position within the enclosing phrase.
    pub index: usize,
    pub class: TokenClass,
    pub span: Span,
}

/// A punctuation mark that sits between phrases rather than inside one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GapMark {
    pub offset: usize,
    pub mark: char,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct DocId(String);

impl DocId {
    /// Document ids double as archive file names, so they are restricted to
    /// `[A-Za-z0-9._-]` and may not start with a dot.
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let ok = !id.is_empty()
            && !id.starts_with('.')
            && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
        if ok {
            Ok(DocId(id))
        } else {
            Err(Error::invalid(format!("invalid document id {id:?}")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    id: DocId,
    language: String,
    text: String,
    char_bytes: Vec<usize>,
    tree: ConstituentTree,
    tokens: Vec<Token>,
    gaps: Vec<GapMark>,
    token_ranges: Vec<Range<usize>>,
}

impl Document {
    /// Segments and tokenizes `text`.
    pub fn new(
        id: DocId,
        language: impl Into<String>,
        text: impl Into<String>,
        rules: &SegmentationRules,
        normalizer: &Normalizer,
    ) -> Self {
        let text = text.into();
        let seg = crate::segment::segment_full(&text, rules);
        let tokens = seg
            .tokens
            .into_iter()
            .map(|mut t| {
                t.normalized = normalizer.apply(&t.surface);
                t
            })
            .collect();
        Self::from_parts(id, language.into(), text, seg.tree, tokens, seg.gaps)
            .expect("segmenter output violates document invariants")
    }

    /// Assembles a document from stored parts, validating that tokens line up
    /// with the text and the phrase structure.
    pub fn from_parts(
        id: DocId,
        language: String,
        text: String,
        tree: ConstituentTree,
        tokens: Vec<Token>,
        gaps: Vec<GapMark>,
    ) -> Result<Self> {
        let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        char_bytes.push(text.len());
        let char_len = char_bytes.len() - 1;
        if tree.root().span != Span::new(0, char_len) {
            return Err(Error::invalid(format!("{id}: root span does not cover the text")));
        }
        let phrases: Vec<&Constituent> = tree.at_level(Level::Phrase).collect();
        let mut phrase_cursor = 0;
        let mut prev_end = 0;
        for (i, token) in tokens.iter().enumerate() {
            if token.span.is_empty() || token.span.start < prev_end || token.span.end > char_len {
                return Err(Error::invalid(format!("{id}: token {i} has a bad span {}", token.span)));
            }
            prev_end = token.span.end;
            while phrase_cursor < phrases.len() && phrases[phrase_cursor].span.end < token.span.end {
                phrase_cursor += 1;
            }
            match phrases.get(phrase_cursor) {
                Some(p) if p.span.contains(&token.span) => {}
                _ => return Err(Error::invalid(format!("{id}: token {i} lies outside every phrase"))),
            }
            let surface = &text[char_bytes[token.span.start]..char_bytes[token.span.end]];
            if surface != token.surface {
                return Err(Error::invalid(format!("{id}: token {i} surface does not match the text")));
            }
            let expected_index = match i.checked_sub(1).map(|j| &tokens[j]) {
                Some(prev) if phrases[phrase_cursor].span.contains(&prev.span) => prev.index + 1,
                _ => 0,
            };
            if token.index != expected_index {
                return Err(Error::invalid(format!("{id}: token {i} index is not consecutive")));
            }
        }
        let mut prev_gap = None;
        for gap in &gaps {
            let in_phrase = phrases
                .iter()
                .any(|p| p.span.start <= gap.offset && gap.offset < p.span.end);
            let actual = text[char_bytes.get(gap.offset).copied().unwrap_or(text.len())..]
                .chars()
                .next();
            if in_phrase || actual != Some(gap.mark) || prev_gap.is_some_and(|p| p >= gap.offset) {
                return Err(Error::invalid(format!("{id}: bad gap mark at {}", gap.offset)));
            }
            prev_gap = Some(gap.offset);
        }
        let token_ranges = tree
            .iter()
            .map(|c| {
                let lo = tokens.partition_point(|t| t.span.start < c.span.start);
                let hi = tokens.partition_point(|t| t.span.end <= c.span.end);
                lo..hi.max(lo)
            })
            .collect();
        Ok(Document { id, language, text, char_bytes, tree, tokens, gaps, token_ranges })
    }

    pub fn id(&self) -> &DocId {
        &self.id
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in characters.
    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    pub fn tree(&self) -> &ConstituentTree {
        &self.tree
    }

    pub fn constituent(&self, id: ConstituentId) -> Result<&Constituent> {
        self.tree.node(id)
    }

    /// Text under a character span.
    pub fn slice(&self, span: Span) -> Result<&str> {
        if span.start > span.end || span.end > self.char_len() {
            return Err(Error::Range { start: span.start, end: span.end, len: self.char_len() });
        }
        Ok(&self.text[self.char_bytes[span.start]..self.char_bytes[span.end]])
    }

    /// Every phrase token, in text order.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Phrase tokens lying under a constituent.
    pub fn tokens_under(&self, id: ConstituentId) -> Result<&[Token]> {
        self.tree.node(id)?;
        Ok(&self.tokens[self.token_ranges[id.index()].clone()])
    }

    pub fn gaps(&self) -> &[GapMark] {
        &self.gaps
    }

    pub fn gaps_within(&self, span: Span) -> &[GapMark] {
        let lo = self.gaps.partition_point(|g| g.offset < span.start);
        let hi = self.gaps.partition_point(|g| g.offset < span.end);
        &self.gaps[lo..hi.max(lo)]
    }

    pub fn smallest_enclosing(&self, span: Span) -> Result<&Constituent> {
        self.tree.smallest_enclosing(span)
    }

    pub fn context_ladder(&self, id: ConstituentId) -> Result<Vec<&Constituent>> {
        self.tree.context_ladder(id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Source => Side::Target,
            Side::Target => Side::Source,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "source" | "src" => Ok(Side::Source),
            "target" | "tgt" => Ok(Side::Target),
            other => Err(format!("unknown side {other:?}")),
        }
    }
}

/// Shape of an alignment bead, `source:target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BeadShape {
    #[serde(rename = "1:1")]
    OneOne,
    #[serde(rename = "2:1")]
    TwoOne,
    #[serde(rename = "1:2")]
    OneTwo,
    #[serde(rename = "2:2")]
    TwoTwo,
    #[serde(rename = "1:0")]
    OneZero,
    #[serde(rename = "0:1")]
    ZeroOne,
}

impl BeadShape {
    /// All shapes, in tie-breaking preference order.
    pub const ALL: [BeadShape; 6] = [
        BeadShape::OneOne,
        BeadShape::TwoOne,
        BeadShape::OneTwo,
        BeadShape::TwoTwo,
        BeadShape::OneZero,
        BeadShape::ZeroOne,
    ];

    pub fn from_counts(src: usize, tgt: usize) -> Result<Self> {
        Ok(match (src, tgt) {
            (1, 1) => BeadShape::OneOne,
            (2, 1) => BeadShape::TwoOne,
            (1, 2) => BeadShape::OneTwo,
            (2, 2) => BeadShape::TwoTwo,
            (1, 0) => BeadShape::OneZero,
            (0, 1) => BeadShape::ZeroOne,
            (s, t) => return Err(Error::Shape(s, t)),
        })
    }

    pub fn counts(self) -> (usize, usize) {
        match self {
            BeadShape::OneOne => (1, 1),
            BeadShape::TwoOne => (2, 1),
            BeadShape::OneTwo => (1, 2),
            BeadShape::TwoTwo => (2, 2),
            BeadShape::OneZero => (1, 0),
            BeadShape::ZeroOne => (0, 1),
        }
    }

    pub fn mirror(self) -> Self {
        let (s, t) = self.counts();
        BeadShape::from_counts(t, s).expect("mirror of a legal shape is legal")
    }

    pub fn is_indel(self) -> bool {
        matches!(self, BeadShape::OneZero | BeadShape::ZeroOne)
    }
}

impl fmt::Display for BeadShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (s, t) = self.counts();
        write!(f, "{s}:{t}")
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    pub level: Level,
    pub src: Vec<ConstituentId>,
    pub tgt: Vec<ConstituentId>,
    /// Aligner cost of this bead. Diagnostic only; ignored by equality.
    pub cost: f64,
}

impl PartialEq for Link {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level && self.src == other.src && self.tgt == other.tgt
    }
}

impl Link {
    pub fn shape(&self) -> Result<BeadShape> {
        BeadShape::from_counts(self.src.len(), self.tgt.len())
    }

    pub fn members(&self, side: Side) -> &[ConstituentId] {
        match side {
            Side::Source => &self.src,
            Side::Target => &self.tgt,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bitext {
    id: String,
    source: Document,
    target: Document,
    links: Vec<Link>,
    degraded: BTreeSet<Level>,
    lookup: HashMap<(Side, ConstituentId), usize>,
}

impl Bitext {
    /// Validates links against both documents. Links are kept grouped by
    /// level (document first) in the order given within a level.
    pub fn new(
        id: impl Into<String>,
        source: Document,
        target: Document,
        mut links: Vec<Link>,
        degraded: BTreeSet<Level>,
    ) -> Result<Self> {
        let id = id.into();
        links.sort_by_key(|l| std::cmp::Reverse(l.level));
        let mut lookup = HashMap::new();
        let mut last: HashMap<(Side, Level), ConstituentId> = HashMap::new();
        for (i, link) in links.iter().enumerate() {
            link.shape()
                .map_err(|e| Error::invalid(format!("bitext {id}, link {i}: {e}")))?;
            for side in [Side::Source, Side::Target] {
                let doc = if side == Side::Source { &source } else { &target };
                for &cid in link.members(side) {
                    let c = doc.tree().get(cid).ok_or_else(|| {
                        Error::invalid(format!("bitext {id}, link {i}: no {side} constituent {cid}"))
                    })?;
                    if c.level != link.level {
                        return Err(Error::invalid(format!(
                            "bitext {id}, link {i}: {side} constituent {cid} is a {}, not a {}",
                            c.level, link.level
                        )));
                    }
                    if let Some(prev) = last.insert((side, link.level), cid) {
                        if prev >= cid {
                            return Err(Error::invalid(format!(
                                "bitext {id}, link {i}: {side} links cross or repeat at {cid}"
                            )));
                        }
                    }
                    lookup.insert((side, cid), i);
                }
            }
        }
        Ok(Bitext { id, source, target, links, degraded, lookup })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> &Document {
        &self.source
    }

    pub fn target(&self) -> &Document {
        &self.target
    }

    pub fn side(&self, side: Side) -> &Document {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn links_at(&self, level: Level) -> impl Iterator<Item = (usize, &Link)> {
        self.links.iter().enumerate().filter(move |(_, l)| l.level == level)
    }

    /// Levels at which the aligner had to widen its band.
    pub fn degraded(&self) -> &BTreeSet<Level> {
        &self.degraded
    }

    pub fn is_aligned(&self) -> bool {
        !self.links.is_empty()
    }

    /// The link containing a constituent, if any.
    pub fn link_of(&self, side: Side, id: ConstituentId) -> Result<Option<(usize, &Link)>> {
        self.side(side).constituent(id)?;
        Ok(self.lookup.get(&(side, id)).map(|&i| (i, &self.links[i])))
    }

    /// Opposite-side constituents linked to `id`; `None` when unlinked or in
    /// an indel bead.
    pub fn counterpart(
        &self,
        side: Side,
        id: ConstituentId,
    ) -> Result<Option<(Vec<&Constituent>, &Link)>> {
        let Some((_, link)) = self.link_of(side, id)? else {
            return Ok(None);
        };
        let other = side.opposite();
        let members = link.members(other);
        if members.is_empty() {
            return Ok(None);
        }
        let doc = self.side(other);
        let constituents = members
            .iter()
            .map(|&c| doc.constituent(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some((constituents, link)))
    }

    /// Sum of all bead costs.
    pub fn total_cost(&self) -> f64 {
        self.links.iter().map(|l| l.cost).sum()
    }
}
