//! Document model, JSON-lines ingestion and the binary corpus store.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{self, LanguageDetector};
use crate::store::{self, Reader, Writer, KIND_CORPUS};
use crate::tokenize::Tokenizer;

pub const ENGLISH: &str = "en";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paper {
    pub paper_id: String,
    pub title: String,
    pub abstract_text: String,
    pub content: Option<String>,
    pub language: String,
    pub categories: Vec<String>,
    pub token_count_abstract: u32,
    pub token_count_content: u32,
}

impl Paper {
    /// Builds a paper and fills in token counts with the default tokenizer.
    pub fn new(
        paper_id: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
        language: impl Into<String>,
    ) -> Self {
        let mut p = Paper {
            paper_id: paper_id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            content: None,
            language: language.into(),
            categories: Vec::new(),
            token_count_abstract: 0,
            token_count_content: 0,
        };
        p.recount();
        p
    }

    pub fn with_content(mut self, content: impl Into<String>) -> Self {
        self.content = Some(content.into());
        self.recount();
        self
    }

    pub fn recount(&mut self) {
        let t = Tokenizer::default();
        self.token_count_abstract = t.count(&self.abstract_text) as u32;
        self.token_count_content = self.content.as_deref().map_or(0, |c| t.count(c)) as u32;
    }

    pub fn is_english(&self) -> bool {
        self.language == ENGLISH
    }

    /// Text used to embed the paper: title, ". ", abstract.
    pub fn document_text(&self) -> String {
        format!("{}. {}", self.title, self.abstract_text)
    }
}

/// Whether the papers carry plain or summary-enriched abstracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Provenance {
    #[default]
    Raw,
    Enriched,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    papers: Vec<Paper>,
    index: HashMap<String, u32>,
    provenance: Provenance,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.papers == other.papers && self.provenance == other.provenance
    }
}

impl Corpus {
    pub fn new(papers: Vec<Paper>) -> Result<Self> {
        let mut index = HashMap::with_capacity(papers.len());
        for (i, p) in papers.iter().enumerate() {
            if p.paper_id.is_empty() {
                return Err(Error::invalid(format!("paper at position {i} has an empty id")));
            }
            if index.insert(p.paper_id.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate paper id {:?}", p.paper_id)));
            }
        }
        Ok(Corpus {
            papers,
            index,
            provenance: Provenance::Raw,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn papers(&self) -> &[Paper] {
        &self.papers
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn get(&self, ordinal: u32) -> Option<&Paper> {
        self.papers.get(ordinal as usize)
    }

    pub fn paper(&self, ordinal: u32) -> &Paper {
        &self.papers[ordinal as usize]
    }

    pub fn ordinal(&self, paper_id: &str) -> Option<u32> {
        self.index.get(paper_id).copied()
    }

    /// Distinct languages with their paper counts, most frequent first; ties
    /// by code.
    pub fn language_counts(&self) -> Vec<(String, usize)> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for p in &self.papers {
            *counts.entry(p.language.as_str()).or_default() += 1;
        }
        let mut v: Vec<(String, usize)> = counts.into_iter().map(|(k, c)| (k.to_string(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bytes().and_then(|b| std::fs::write(path, b).map_err(|e| Error::io(path, e)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(KIND_CORPUS);
        w.u8(match self.provenance {
            Provenance::Raw => 0,
            Provenance::Enriched => 1,
        });
        w.u64(self.papers.len() as u64);
        for p in &self.papers {
            let mut rec = Writer::headerless();
            rec.str(&p.paper_id);
            rec.str(&p.title);
            rec.str(&p.abstract_text);
            match &p.content {
                Some(c) => {
                    rec.u8(1);
                    rec.str(c);
                }
                None => rec.u8(0),
            }
            rec.str(&p.language);
            rec.u32(p.categories.len() as u32);
            for c in &p.categories {
                rec.str(c);
            }
            rec.u32(p.token_count_abstract);
            rec.u32(p.token_count_content);
            w.bytes(&rec.finish());
        }
        Ok(w.finish())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&store::read_file(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, KIND_CORPUS)?;
        let provenance = match r.u8()? {
            0 => Provenance::Raw,
            1 => Provenance::Enriched,
            x => return Err(Error::Corrupt(format!("unknown provenance flag {x}"))),
        };
        let n = r.u64()? as usize;
        let mut papers = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let mut rec = Reader::headerless(r.bytes()?);
            let paper_id = rec.str()?;
            let title = rec.str()?;
            let abstract_text = rec.str()?;
            let content = match rec.u8()? {
                0 => None,
                1 => Some(rec.str()?),
                x => return Err(Error::Corrupt(format!("bad content flag {x}"))),
            };
            let language = rec.str()?;
            let ncat = rec.u32()? as usize;
            let categories = (0..ncat).map(|_| rec.str()).collect::<Result<Vec<_>>>()?;
            let token_count_abstract = rec.u32()?;
            let token_count_content = rec.u32()?;
            rec.finish()?;
            papers.push(Paper {
                paper_id,
                title,
                abstract_text,
                content,
                language,
                categories,
                token_count_abstract,
                token_count_content,
            });
        }
        r.finish()?;
        let corpus = Corpus::new(papers).map_err(|e| Error::Corrupt(e.to_string()))?;
        Ok(corpus.with_provenance(provenance))
    }
}

/// One JSON-lines input record. Unknown keys are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct RawRecord {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub categories: Option<Vec<String>>,
}

/// Declared language when present and well-formed, otherwise the trigram
/// detector's guess over title and abstract.
pub fn detect_language(record: &RawRecord, detector: &LanguageDetector) -> String {
    if let Some(code) = record.language.as_deref().and_then(lang::normalize_code) {
        return code;
    }
    let text = format!(
        "{} {}",
        record.title,
        record.abstract_text.as_deref().unwrap_or("")
    );
    detector.detect(&text)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub lines: usize,
    pub malformed: usize,
    pub empty_dropped: usize,
    pub duplicates_merged: usize,
    pub papers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    #[default]
    JsonLines,
}

pub fn ingest(path: &Path, format: InputFormat) -> Result<(Corpus, IngestSummary)> {
    let InputFormat::JsonLines = format;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), &LanguageDetector::default())
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
}

pub fn ingest_reader<R: BufRead>(
    reader: R,
    detector: &LanguageDetector,
) -> Result<(Corpus, IngestSummary)> {
    let mut summary = IngestSummary::default();
    let mut papers: Vec<Paper> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        summary.lines += 1;
        let rec: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                log::debug!("skipping malformed record on line {}: {e}", summary.lines);
                summary.malformed += 1;
                continue;
            }
        };
        if rec.paper_id.trim().is_empty() {
            summary.malformed += 1;
            continue;
        }
        let abstract_text = rec.abstract_text.clone().unwrap_or_default();
        if rec.title.trim().is_empty() && abstract_text.trim().is_empty() {
            summary.empty_dropped += 1;
            continue;
        }
        let language = detect_language(&rec, detector);
        let mut paper = Paper {
            paper_id: rec.paper_id,
            title: rec.title,
            abstract_text,
            content: rec.content.filter(|c| !c.is_empty()),
            language,
            categories: rec.categories.unwrap_or_default(),
            token_count_abstract: 0,
            token_count_content: 0,
        };
        paper.recount();

        match seen.get(&paper.paper_id) {
            Some(&pos) => {
                summary.duplicates_merged += 1;
                if paper.token_count_abstract > papers[pos].token_count_abstract
                    || (paper.token_count_abstract == papers[pos].token_count_abstract
                        && paper.abstract_text.len() > papers[pos].abstract_text.len())
                {
                    papers[pos] = paper;
                }
            }
            None => {
                seen.insert(paper.paper_id.clone(), papers.len());
                papers.push(paper);
            }
        }
    }
    summary.papers = papers.len();
    Ok((Corpus::new(papers)?, summary))
}

/// Papers with a nonempty abstract, in corpus order.
pub fn filter_for_training(corpus: &Corpus) -> Corpus {
    let papers = corpus
        .papers()
        .iter()
        .filter(|p| !p.abstract_text.trim().is_empty())
        .cloned()
        .collect();
    Corpus::new(papers)
        .expect("sub-corpus of a valid corpus is valid")
        .with_provenance(corpus.provenance())
}
