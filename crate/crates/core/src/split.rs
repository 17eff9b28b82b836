//! Train / in-distribution test (IDT) / out-of-distribution test (ODT)
//! assignment and leak-free per-split pair filtering.
//!
//! Rules, applied in order:
//! 1. papers without any citation link are excluded;
//! 2. the `top_l` most frequent languages (among linked papers) are head
//!    languages; each head language is shuffled and cut into an ODT tail,
//!    an IDT share and the train remainder;
//! 3. linked papers in every other language go to ODT;
//! 4. a head language with fewer than two papers left after the tail cut
//!    cannot appear in both train and IDT, so it moves to ODT entirely;
//! 5. English ODT papers survive only when linked to a non-English ODT
//!    paper.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ENGLISH};
use crate::error::{Error, Result};
use crate::graph::CitationGraph;
use crate::relations::RelationPairSet;
use crate::store::{self, Reader, Writer, KIND_SPLIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Idt,
    Odt,
    Excluded,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Idt => "idt",
            Split::Odt => "odt",
            Split::Excluded => "excluded",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => Split::Train,
            1 => Split::Idt,
            2 => Split::Odt,
            3 => Split::Excluded,
            _ => return Err(Error::Corrupt(format!("unknown split tag {t}"))),
        })
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "idt" => Ok(Split::Idt),
            "odt" => Ok(Split::Odt),
            "excluded" => Ok(Split::Excluded),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub top_l: usize,
    pub idt_fraction: f64,
    /// Share of each head language held out into ODT.
    #[serde(default)]
    pub odt_tail_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            top_l: 30,
            idt_fraction: 0.1,
            odt_tail_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.top_l == 0 {
            return Err(Error::invalid("top_l must be at least 1"));
        }
        if !(self.idt_fraction > 0.0 && self.idt_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "idt_fraction must lie strictly between 0 and 1, got {}",
                self.idt_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.odt_tail_fraction) {
            return Err(Error::invalid(format!(
                "odt_tail_fraction must lie in [0, 1), got {}",
                self.odt_tail_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    split_of: Vec<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub head_languages: Vec<String>,
    /// Head languages moved to ODT because they were too small to split.
    pub demoted_languages: Vec<String>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn new(split_of: Vec<Split>) -> Self {
        SplitAssignment { split_of }
    }

    pub fn len(&self) -> usize {
        self.split_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.split_of.is_empty()
    }

    pub fn split_of(&self, ordinal: u32) -> Split {
        self.split_of[ordinal as usize]
    }

    pub fn as_slice(&self) -> &[Split] {
        &self.split_of
    }

    pub fn members(&self, split: Split) -> Vec<u32> {
        self.split_of
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split_of.iter().filter(|s| **s == split).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KIND_SPLIT);
        w.u64(self.split_of.len() as u64);
        for s in &self.split_of {
            w.u8(s.tag());
        }
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        store::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = store::read_file(path)?;
        let mut r = Reader::open(&bytes, KIND_SPLIT)?;
        let n = r.u64()? as usize;
        let split_of = (0..n)
            .map(|_| r.u8().and_then(Split::from_tag))
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(SplitAssignment { split_of })
    }

    /// Two-column `paper_id<TAB>split` audit listing.
    pub fn export_tsv<W: Write>(&self, corpus: &Corpus, mut out: W) -> std::io::Result<()> {
        for (p, s) in corpus.papers().iter().zip(&self.split_of) {
            writeln!(out, "{}\t{}", p.paper_id, s)?;
        }
        Ok(())
    }
}

pub fn split(
    corpus: &Corpus,
    graph: &CitationGraph,
    spec: &SplitSpec,
) -> Result<(SplitAssignment, SplitReport)> {
    spec.validate()?;
    if graph.num_nodes() != corpus.len() {
        return Err(Error::invalid(format!(
            "graph has {} nodes but corpus has {} papers",
            graph.num_nodes(),
            corpus.len()
        )));
    }
    let n = corpus.len();
    let mut report = SplitReport::default();
    let mut out = vec![Split::Excluded; n];

    // (1)
    let linked: Vec<u32> = (0..n as u32).filter(|&u| graph.degree(u) > 0).collect();

    // (2)-(4)
    let mut by_lang: std::collections::BTreeMap<&str, Vec<u32>> = Default::default();
    for &u in &linked {
        by_lang.entry(corpus.paper(u).language.as_str()).or_default().push(u);
    }
    let mut ranked: Vec<(&str, Vec<u32>)> = by_lang.into_iter().collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(b.0)));
    if ranked.len() < spec.top_l {
        let msg = format!(
            "corpus has {} linked languages, fewer than top_l = {}; using all of them",
            ranked.len(),
            spec.top_l
        );
        log::warn!("{msg}");
        report.warnings.push(msg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (rank, (lang, members)) in ranked.iter_mut().enumerate() {
        if rank >= spec.top_l {
            for &u in members.iter() {
                out[u as usize] = Split::Odt;
            }
            continue;
        }
        members.shuffle(&mut rng);
        let m = members.len();
        let tail = (spec.odt_tail_fraction * m as f64).floor() as usize;
        let rest = m - tail;
        if rest < 2 {
            let msg = format!("head language {lang:?} has {m} linked papers; too few to split, moved to ODT");
            log::warn!("{msg}");
            report.warnings.push(msg);
            report.demoted_languages.push(lang.to_string());
            for &u in members.iter() {
                out[u as usize] = Split::Odt;
            }
            continue;
        }
        report.head_languages.push(lang.to_string());
        let n_idt = ((spec.idt_fraction * rest as f64).round() as usize).clamp(1, rest - 1);
        for (i, &u) in members.iter().enumerate() {
            out[u as usize] = if i < tail {
                Split::Odt
            } else if i < tail + n_idt {
                Split::Idt
            } else {
                Split::Train
            };
        }
    }

    // (5)
    let non_english_odt =
        |v: u32| out[v as usize] == Split::Odt && !corpus.paper(v).is_english();
    let pruned: Vec<u32> = linked
        .iter()
        .copied()
        .filter(|&u| out[u as usize] == Split::Odt && corpus.paper(u).is_english())
        .filter(|&u| !graph.neighbors(u).into_iter().any(non_english_odt))
        .collect();
    for u in pruned {
        out[u as usize] = Split::Excluded;
    }

    Ok((SplitAssignment { split_of: out }, report))
}

/// Pairs with both endpoints in `target`; for ODT, English–English pairs
/// are removed as well.
pub fn split_pairs(
    pairs: &RelationPairSet,
    assignment: &SplitAssignment,
    corpus: &Corpus,
    target: Split,
) -> RelationPairSet {
    let kept = pairs
        .pairs
        .iter()
        .filter(|p| assignment.split_of(p.a) == target && assignment.split_of(p.b) == target)
        .filter(|p| {
            target != Split::Odt
                || !(corpus.paper(p.a).language == ENGLISH && corpus.paper(p.b).language == ENGLISH)
        })
        .copied()
        .collect();
    RelationPairSet {
        kind: pairs.kind.clone(),
        directed: pairs.directed,
        pairs: kept,
    }
}
