//! Order-preserving alignment of constituent sequences.
//!
//! Each level is aligned as a string-correction problem over beads
//! (1:1, 1:0, 0:1, 2:1, 1:2, 2:2) with a banded dynamic program. The only
//! evidence is the anchor signature of each constituent: its punctuation
//! marks, its numerals and its word count. Lower levels are aligned inside
//! the beads of the level above.

use std::collections::BTreeSet;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BeadShape, Bitext, ConstituentId, Document, Level, Link, TokenClass};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AnchorSignature {
    pub punct: Vec<char>,
    pub numerals: Vec<String>,
    pub word_count: usize,
}

/// Signature of everything under a constituent, including punctuation that
/// sits in the gaps between its phrases.
pub fn signature(doc: &Document, id: ConstituentId) -> Result<AnchorSignature> {
    let c = doc.constituent(id)?;
    let tokens = doc.tokens_under(id)?;
    let gaps = doc.gaps_within(c.span);
    let mut sig = AnchorSignature::default();
    let mut g = gaps.iter().peekable();
    for t in tokens {
        while let Some(gap) = g.next_if(|gap| gap.offset < t.span.start) {
            sig.punct.push(gap.mark);
        }
        match t.class {
            TokenClass::Word => sig.word_count += 1,
            TokenClass::Numeral => sig.numerals.push(t.normalized.clone()),
            TokenClass::Punct => sig.punct.extend(t.surface.chars()),
        }
    }
    sig.punct.extend(g.map(|gap| gap.mark));
    Ok(sig)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostModel {
    pub w_num: f64,
    pub w_punct: f64,
    pub w_len: f64,
    /// Indexed in [`BeadShape::ALL`] order.
    penalties: [f64; 6],
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { w_num: 1.0, w_punct: 0.5, w_len: 1.0, penalties: [0.0, 1.5, 1.5, 2.5, 3.0, 3.0] }
    }
}

fn shape_slot(shape: BeadShape) -> usize {
    BeadShape::ALL.iter().position(|&s| s == shape).expect("all shapes listed")
}

impl CostModel {
    pub fn new(w_num: f64, w_punct: f64, w_len: f64) -> Result<Self> {
        let model = CostModel { w_num, w_punct, w_len, ..CostModel::default() };
        model.validate()?;
        Ok(model)
    }

    pub fn penalty(&self, shape: BeadShape) -> f64 {
        self.penalties[shape_slot(shape)]
    }

    pub fn with_penalty(mut self, shape: BeadShape, value: f64) -> Result<Self> {
        self.penalties[shape_slot(shape)] = value;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_num, self.w_punct, self.w_len].into_iter().chain(self.penalties);
        if all.clone().any(|v| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid("cost weights and penalties must be finite and non-negative"));
        }
        let diag = self.penalty(BeadShape::OneOne);
        if self.penalties.iter().any(|&p| p < diag) {
            return Err(Error::invalid("the 1:1 penalty must not exceed any other bead penalty"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Band {
    pub slack: usize,
    pub proportional: bool,
}

impl Default for Band {
    fn default() -> Self {
        Band { slack: 20, proportional: true }
    }
}

impl Band {
    pub fn new(slack: usize, proportional: bool) -> Result<Self> {
        if slack == 0 {
            return Err(Error::invalid("band slack must be at least 1"));
        }
        Ok(Band { slack, proportional })
    }

    /// Band that admits every cell of an `m × n` problem.
    pub fn unrestricted(m: usize, n: usize) -> Self {
        Band { slack: m.max(n).max(1), proportional: false }
    }

    pub fn effective(&self, m: usize, n: usize) -> usize {
        if self.proportional {
            self.slack.max(m.max(n).div_ceil(10))
        } else {
            self.slack
        }
    }
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub(crate) fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = (diag + usize::from(x != y)).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

fn length_term(ws: usize, wt: usize) -> f64 {
    // |ln((ws+1)/(wt+1))|, written as a difference so both argument orders
    // give bit-identical results
    (((ws + 1) as f64).ln() - ((wt + 1) as f64).ln()).abs()
}

/// Cost of one bead. Multi-member sides are merged: numerals and punctuation
/// concatenated, word counts summed. Indels pay only their penalty and the
/// length term of the present side.
pub fn bead_cost(src: &[AnchorSignature], tgt: &[AnchorSignature], model: &CostModel) -> Result<f64> {
    let shape = BeadShape::from_counts(src.len(), tgt.len())?;
    let ws: usize = src.iter().map(|s| s.word_count).sum();
    let wt: usize = tgt.iter().map(|s| s.word_count).sum();
    let mut cost = model.penalty(shape);
    if !shape.is_indel() {
        let sn: Vec<&str> = src.iter().flat_map(|s| s.numerals.iter().map(String::as_str)).collect();
        let tn: Vec<&str> = tgt.iter().flat_map(|s| s.numerals.iter().map(String::as_str)).collect();
        let numeral_mismatch = if sn.is_empty() && tn.is_empty() {
            0.0
        } else {
            1.0 - 2.0 * lcs_len(&sn, &tn) as f64 / (sn.len() + tn.len()) as f64
        };
        let sp: Vec<char> = src.iter().flat_map(|s| s.punct.iter().copied()).collect();
        let tp: Vec<char> = tgt.iter().flat_map(|s| s.punct.iter().copied()).collect();
        let punct_distance = match sp.len().max(tp.len()) {
            0 => 0.0,
            longest => edit_distance(&sp, &tp) as f64 / longest as f64,
        };
        cost += model.w_num * numeral_mismatch + model.w_punct * punct_distance;
    }
    Ok(cost + model.w_len * length_term(ws, wt))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bead {
    pub shape: BeadShape,
    pub src: Range<usize>,
    pub tgt: Range<usize>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelAlignment {
    pub beads: Vec<Bead>,
    pub total_cost: f64,
    /// The band had to be widened to reach full coverage.
    pub degraded: bool,
}

struct BandedTable {
    lo: Vec<usize>,
    hi: Vec<usize>,
    offset: Vec<usize>,
    cost: Vec<f64>,
    back: Vec<u8>,
}

impl BandedTable {
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        (self.lo[i] <= j && j <= self.hi[i]).then(|| self.offset[i] + j - self.lo[i])
    }
}

/// Band cells satisfy `|i·n − j·m| ≤ slack·max(m, n)`: within `slack` of the
/// scaled diagonal, measured along the longer side. The condition is
/// symmetric in the two sequences.
fn solve(src: &[AnchorSignature], tgt: &[AnchorSignature], model: &CostModel, slack: usize) -> Option<(Vec<Bead>, f64)> {
    let (m, n) = (src.len(), tgt.len());
    let reach = (slack * m.max(n)) as i128;
    let (mi, ni) = (m as i128, n as i128);
    let mut table = BandedTable { lo: vec![0; m + 1], hi: vec![0; m + 1], offset: vec![0; m + 1], cost: vec![], back: vec![] };
    let mut total = 0;
    for i in 0..=m {
        let (lo, hi) = if m == 0 {
            (0, n)
        } else {
            let centre = i as i128 * ni;
            let lo = (centre - reach).max(0);
            let hi = centre + reach;
            // smallest j with j·m ≥ lo, largest j with j·m ≤ hi
            let lo = ((lo + mi - 1) / mi).max(0) as usize;
            let hi = ((hi / mi) as usize).min(n);
            (lo, hi)
        };
        table.lo[i] = lo;
        table.hi[i] = hi;
        table.offset[i] = total;
        total += (hi + 1).saturating_sub(lo);
    }
    table.cost = vec![f64::INFINITY; total];
    table.back = vec![u8::MAX; total];
    let origin = table.slot(0, 0)?;
    table.cost[origin] = 0.0;
    for i in 0..=m {
        for j in table.lo[i]..=table.hi[i].max(table.lo[i]) {
            let Some(here) = table.slot(i, j) else { continue };
            if i == 0 && j == 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_shape = u8::MAX;
            for (k, shape) in BeadShape::ALL.iter().enumerate() {
                let (a, b) = shape.counts();
                if i < a || j < b {
                    continue;
                }
                let Some(prev) = table.slot(i - a, j - b) else { continue };
                let base = table.cost[prev];
                if !base.is_finite() {
                    continue;
                }
                let c = base + bead_cost(&src[i - a..i], &tgt[j - b..j], model).expect("legal shape");
                if c < best {
                    best = c;
                    best_shape = k as u8;
                }
            }
            table.cost[here] = best;
            table.back[here] = best_shape;
        }
    }
    let end = table.slot(m, n)?;
    let total_cost = table.cost[end];
    if !total_cost.is_finite() {
        return None;
    }
    let mut beads = Vec::new();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = table.slot(i, j).expect("path stays in band");
        let shape = BeadShape::ALL[table.back[here] as usize];
        let (a, b) = shape.counts();
        let prev = table.slot(i - a, j - b).expect("path stays in band");
        beads.push(Bead { shape, src: i - a..i, tgt: j - b..j, cost: table.cost[here] - table.cost[prev] });
        i -= a;
        j -= b;
    }
    beads.reverse();
    // recompute bead costs exactly rather than as differences of sums
    for bead in &mut beads {
        bead.cost = bead_cost(&src[bead.src.clone()], &tgt[bead.tgt.clone()], model).expect("legal shape");
    }
    Some((beads, total_cost))
}

/// Minimum-cost monotone bead sequence covering both lists exactly once,
/// restricted to the band. Ties prefer shapes in [`BeadShape::ALL`] order.
pub fn align_level(src: &[AnchorSignature], tgt: &[AnchorSignature], model: &CostModel, band: &Band) -> LevelAlignment {
    align_with_slack(src, tgt, model, band.effective(src.len(), tgt.len()))
}

fn align_with_slack(src: &[AnchorSignature], tgt: &[AnchorSignature], model: &CostModel, mut slack: usize) -> LevelAlignment {
    let full = src.len().max(tgt.len()).max(1);
    let mut degraded = false;
    loop {
        if let Some((beads, total_cost)) = solve(src, tgt, model, slack) {
            return LevelAlignment { beads, total_cost, degraded };
        }
        assert!(slack < full, "an unrestricted band is always feasible");
        degraded = true;
        slack = (slack * 2).clamp(1, full);
    }
}

/// Aligns two segmented documents top-down: paragraphs over the whole
/// documents, sentences inside each paragraph bead, phrases inside each
/// sentence bead. Constituents under indel beads stay unlinked below.
pub fn align_bitext(
    id: impl Into<String>,
    source: Document,
    target: Document,
    model: &CostModel,
    band: &Band,
) -> Result<Bitext> {
    let src_sigs = all_signatures(&source)?;
    let tgt_sigs = all_signatures(&target)?;
    let mut links = vec![Link {
        level: Level::Document,
        src: vec![ConstituentId::ROOT],
        tgt: vec![ConstituentId::ROOT],
        cost: 0.0,
    }];
    let mut degraded = BTreeSet::new();
    let mut groups = vec![(vec![ConstituentId::ROOT], vec![ConstituentId::ROOT])];
    let mut level = Level::Document;
    while let Some(child_level) = level.child() {
        let children = |doc: &Document, parents: &[ConstituentId]| -> Vec<ConstituentId> {
            parents
                .iter()
                .flat_map(|&p| doc.tree().get(p).expect("linked ids exist").children.iter().copied())
                .collect()
        };
        let results: Vec<(Vec<ConstituentId>, Vec<ConstituentId>, LevelAlignment)> = groups
            .par_iter()
            .map(|(s, t)| {
                let s = children(&source, s);
                let t = children(&target, t);
                let ss: Vec<AnchorSignature> = s.iter().map(|c| src_sigs[c.index()].clone()).collect();
                let ts: Vec<AnchorSignature> = t.iter().map(|c| tgt_sigs[c.index()].clone()).collect();
                let alignment = align_level(&ss, &ts, model, band);
                (s, t, alignment)
            })
            .collect();
        let mut next = Vec::new();
        for (s, t, alignment) in results {
            if alignment.degraded {
                degraded.insert(child_level);
            }
            for bead in alignment.beads {
                let link = Link {
                    level: child_level,
                    src: s[bead.src].to_vec(),
                    tgt: t[bead.tgt].to_vec(),
                    cost: bead.cost,
                };
                if !bead.shape.is_indel() {
                    next.push((link.src.clone(), link.tgt.clone()));
                }
                links.push(link);
            }
        }
        groups = next;
        level = child_level;
    }
    Bitext::new(id, source, target, links, degraded)
}

fn all_signatures(doc: &Document) -> Result<Vec<AnchorSignature>> {
    doc.tree().iter().map(|c| signature(doc, c.id)).collect()
}
