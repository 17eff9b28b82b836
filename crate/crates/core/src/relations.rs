//! Mining of direct-citation (DC), co-citation (CC) and
//! bibliographic-coupling (BC) pair sets, and their unions / intersections.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CitationGraph;
use crate::store::{self, Reader, Writer, KIND_PAIRS};

pub const DEFAULT_MAX_DEGREE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Dc,
    Cc,
    Bc,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Dc => "DC",
            Relation::Cc => "CC",
            Relation::Bc => "BC",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Relation::Dc => 0,
            Relation::Cc => 1,
            Relation::Bc => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => Relation::Dc,
            1 => Relation::Cc,
            2 => Relation::Bc,
            _ => return Err(Error::Corrupt(format!("unknown relation tag {t}"))),
        })
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DC" => Ok(Relation::Dc),
            "CC" => Ok(Relation::Cc),
            "BC" => Ok(Relation::Bc),
            other => Err(Error::invalid(format!("unknown relation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSetKind {
    Single(Relation),
    Union(Vec<Relation>),
    Intersection(Vec<Relation>),
}

impl PairSetKind {
    fn relations(&self) -> Vec<Relation> {
        match self {
            PairSetKind::Single(r) => vec![*r],
            PairSetKind::Union(v) | PairSetKind::Intersection(v) => v.clone(),
        }
    }
}

impl fmt::Display for PairSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[Relation], sep: &str| {
            v.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(sep)
        };
        match self {
            PairSetKind::Single(r) => write!(f, "{r}"),
            PairSetKind::Union(v) => f.write_str(&join(v, "∪")),
            PairSetKind::Intersection(v) => f.write_str(&join(v, "∩")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationPair {
    pub a: u32,
    pub b: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationPairSet {
    pub kind: PairSetKind,
    pub directed: bool,
    pub pairs: Vec<RelationPair>,
}

/// Hub papers left out of CC/BC expansion because their degree exceeded the
/// cap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub skipped_hubs: Vec<u32>,
}

impl RelationPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Undirected view with `a < b`, merging duplicate pairs by summing
    /// counts. Sorted by `(a, b)`.
    pub fn canonicalized(&self) -> RelationPairSet {
        if !self.directed {
            return self.clone();
        }
        let mut merged: HashMap<(u32, u32), u32> = HashMap::new();
        for p in &self.pairs {
            let key = if p.a < p.b { (p.a, p.b) } else { (p.b, p.a) };
            *merged.entry(key).or_default() += p.count;
        }
        RelationPairSet {
            kind: self.kind.clone(),
            directed: false,
            pairs: sorted_pairs(merged),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KIND_PAIRS);
        let (tag, rels) = match &self.kind {
            PairSetKind::Single(r) => (0u8, vec![*r]),
            PairSetKind::Union(v) => (1, v.clone()),
            PairSetKind::Intersection(v) => (2, v.clone()),
        };
        w.u8(tag);
        w.u32(rels.len() as u32);
        for r in rels {
            w.u8(r.tag());
        }
        w.u8(self.directed as u8);
        w.u64(self.pairs.len() as u64);
        for p in &self.pairs {
            w.u32(p.a);
            w.u32(p.b);
            w.u32(p.count);
        }
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        store::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = store::read_file(path)?;
        let mut r = Reader::open(&bytes, KIND_PAIRS)?;
        let tag = r.u8()?;
        let nrel = r.u32()? as usize;
        let rels = (0..nrel)
            .map(|_| r.u8().and_then(Relation::from_tag))
            .collect::<Result<Vec<_>>>()?;
        let kind = match (tag, rels.as_slice()) {
            (0, [one]) => PairSetKind::Single(*one),
            (1, _) => PairSetKind::Union(rels),
            (2, _) => PairSetKind::Intersection(rels),
            _ => return Err(Error::Corrupt(format!("bad pair-set kind tag {tag}"))),
        };
        let directed = r.u8()? != 0;
        let n = r.u64()? as usize;
        let mut pairs = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            pairs.push(RelationPair {
                a: r.u32()?,
                b: r.u32()?,
                count: r.u32()?,
            });
        }
        r.finish()?;
        Ok(RelationPairSet {
            kind,
            directed,
            pairs,
        })
    }
}

fn sorted_pairs(map: HashMap<(u32, u32), u32>) -> Vec<RelationPair> {
    let mut pairs: Vec<RelationPair> = map
        .into_iter()
        .map(|((a, b), count)| RelationPair { a, b, count })
        .collect();
    pairs.sort_unstable();
    pairs
}

pub fn mine_dc(graph: &CitationGraph) -> RelationPairSet {
    RelationPairSet {
        kind: PairSetKind::Single(Relation::Dc),
        directed: true,
        pairs: graph
            .edges()
            .map(|(a, b)| RelationPair { a, b, count: 1 })
            .collect(),
    }
}

/// Counts every unordered pair inside each node's adjacency list. Lists
/// longer than `max_degree` are skipped and reported.
fn mine_shared<'g>(
    adjacency: impl Fn(u32) -> &'g [u32] + Sync,
    n: usize,
    max_degree: usize,
) -> (Vec<RelationPair>, MiningReport) {
    let skipped_hubs: Vec<u32> = (0..n as u32)
        .filter(|&w| adjacency(w).len() > max_degree)
        .collect();
    if !skipped_hubs.is_empty() {
        log::warn!(
            "{} hub papers exceed the degree cap {max_degree} and were skipped",
            skipped_hubs.len()
        );
    }
    let counts = (0..n as u32)
        .into_par_iter()
        .fold(HashMap::<(u32, u32), u32>::new, |mut acc, w| {
            let adj = adjacency(w);
            if adj.len() <= max_degree {
                for (i, &a) in adj.iter().enumerate() {
                    for &b in &adj[i + 1..] {
                        *acc.entry((a, b)).or_default() += 1;
                    }
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut x, mut y| {
            if x.len() < y.len() {
                std::mem::swap(&mut x, &mut y);
            }
            for (k, c) in y {
                *x.entry(k).or_default() += c;
            }
            x
        });
    (sorted_pairs(counts), MiningReport { skipped_hubs })
}

/// Co-citation: `{a, b}` counted once per paper citing both.
pub fn mine_cc(graph: &CitationGraph, max_out_degree: usize) -> (RelationPairSet, MiningReport) {
    let (pairs, report) = mine_shared(|w| graph.out_adj(w), graph.num_nodes(), max_out_degree);
    (
        RelationPairSet {
            kind: PairSetKind::Single(Relation::Cc),
            directed: false,
            pairs,
        },
        report,
    )
}

/// Bibliographic coupling: `{a, b}` counted once per paper cited by both.
pub fn mine_bc(graph: &CitationGraph, max_in_degree: usize) -> (RelationPairSet, MiningReport) {
    let (pairs, report) = mine_shared(|w| graph.in_adj(w), graph.num_nodes(), max_in_degree);
    (
        RelationPairSet {
            kind: PairSetKind::Single(Relation::Bc),
            directed: false,
            pairs,
        },
        report,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CombineMode {
    Union,
    Intersection,
}

/// Union: every input is uniformly down-sampled (without replacement) to the
/// size of the smallest input, then concatenated. Intersection: canonical
/// pairs present in every input, with the minimum count.
pub fn combine(sets: &[RelationPairSet], mode: CombineMode, seed: u64) -> Result<RelationPairSet> {
    if sets.is_empty() {
        return Err(Error::invalid("combine needs at least one pair set"));
    }
    let canon: Vec<RelationPairSet> = sets.iter().map(RelationPairSet::canonicalized).collect();
    let relations: Vec<Relation> = canon.iter().flat_map(|s| s.kind.relations()).collect();
    match mode {
        CombineMode::Union => {
            let smallest = canon.iter().map(RelationPairSet::len).min().unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pairs = Vec::with_capacity(smallest * canon.len());
            for s in &canon {
                let mut picked = index::sample(&mut rng, s.len(), smallest).into_vec();
                picked.sort_unstable();
                pairs.extend(picked.into_iter().map(|i| s.pairs[i]));
            }
            Ok(RelationPairSet {
                kind: PairSetKind::Union(relations),
                directed: false,
                pairs,
            })
        }
        CombineMode::Intersection => {
            let mut acc: HashMap<(u32, u32), u32> =
                canon[0].pairs.iter().map(|p| ((p.a, p.b), p.count)).collect();
            for s in &canon[1..] {
                let other: HashMap<(u32, u32), u32> =
                    s.pairs.iter().map(|p| ((p.a, p.b), p.count)).collect();
                acc = acc
                    .into_iter()
                    .filter_map(|(k, c)| other.get(&k).map(|&c2| (k, c.min(c2))))
                    .collect();
            }
            Ok(RelationPairSet {
                kind: PairSetKind::Intersection(relations),
                directed: false,
                pairs: sorted_pairs(acc),
            })
        }
    }
}

/// One of the eleven positive-pair strategies: a single relation, or a
/// union / intersection of two or three relations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStrategy {
    pub relations: Vec<Relation>,
    pub mode: CombineMode,
}

impl PairStrategy {
    pub fn all() -> Vec<PairStrategy> {
        use Relation::*;
        let mut v: Vec<PairStrategy> = [Dc, Cc, Bc]
            .into_iter()
            .map(|r| PairStrategy {
                relations: vec![r],
                mode: CombineMode::Union,
            })
            .collect();
        for mode in [CombineMode::Union, CombineMode::Intersection] {
            for rels in [vec![Dc, Cc], vec![Dc, Bc], vec![Cc, Bc], vec![Dc, Cc, Bc]] {
                v.push(PairStrategy { relations: rels, mode });
            }
        }
        v
    }

    /// Builds the training pair set from the mined sets.
    pub fn apply(
        &self,
        dc: &RelationPairSet,
        cc: &RelationPairSet,
        bc: &RelationPairSet,
        seed: u64,
    ) -> Result<RelationPairSet> {
        let pick = |r: Relation| match r {
            Relation::Dc => dc.clone(),
            Relation::Cc => cc.clone(),
            Relation::Bc => bc.clone(),
        };
        if self.relations.len() == 1 {
            return Ok(pick(self.relations[0]));
        }
        let sets: Vec<RelationPairSet> = self.relations.iter().map(|&r| pick(r)).collect();
        combine(&sets, self.mode, seed)
    }
}

impl fmt::Display for PairStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = match self.mode {
            CombineMode::Union => "∪",
            CombineMode::Intersection => "∩",
        };
        let s: Vec<&str> = self.relations.iter().map(|r| r.as_str()).collect();
        f.write_str(&s.join(sep))
    }
}

impl FromStr for PairStrategy {
    type Err = Error;

    /// Accepts `DC`, `DC∪CC`, `DC+CC`, `DC|CC`, `DC∩CC`, `DC&CC` and the
    /// three-way forms; mixing operators is rejected.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let has_union = s.contains(['∪', '+', '|']);
        let has_inter = s.contains(['∩', '&']);
        if has_union && has_inter {
            return Err(Error::invalid(format!("strategy {s:?} mixes union and intersection")));
        }
        let mode = if has_inter {
            CombineMode::Intersection
        } else {
            CombineMode::Union
        };
        let relations = s
            .split(['∪', '+', '|', '∩', '&'])
            .map(str::parse)
            .collect::<Result<Vec<Relation>>>()?;
        let mut sorted = relations.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != relations.len() {
            return Err(Error::invalid(format!("strategy {s:?} repeats a relation")));
        }
        Ok(PairStrategy {
            relations: sorted,
            mode,
        })
    }
}
