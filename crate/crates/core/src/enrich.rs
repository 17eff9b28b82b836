//! English-summary enrichment of non-English documents.
//!
//! A non-English paper becomes
//! `Title: {title}. Abstract: ({summary}) {abstract}`; English papers keep
//! `Title: {title}. Abstract: {abstract}`. Summaries come from a top-N
//! truncation of the translated abstract or from an external generative
//! service, and never exceed `max_tokens` tokens.

use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Paper, Provenance};
use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

/// Prompt for short (64-token) summaries.
pub const SHORT_SUMMARY_PROMPT: &str =
    "Summarize the passage below with no more than 30 words in English.";
/// Prompt for long (128-token) summaries.
pub const LONG_SUMMARY_PROMPT: &str =
    "Extract the three most important findings from the passage below, and translate them to English.";

pub fn prompt_for(max_tokens: usize) -> &'static str {
    if max_tokens <= 64 {
        SHORT_SUMMARY_PROMPT
    } else {
        LONG_SUMMARY_PROMPT
    }
}

pub trait TranslationProvider: Send + Sync {
    fn translate(&self, text: &str, source_language: &str) -> Result<String>;
}

/// Returns the text unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl TranslationProvider for IdentityTranslator {
    fn translate(&self, text: &str, _source_language: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub text: String,
    pub prompt: String,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub summary: String,
}

pub trait SummaryClient: Send + Sync {
    fn summarize(&self, request: &SummaryRequest) -> Result<String>;
}

/// Offline stand-in that answers every request with a fixed text.
#[derive(Debug, Clone)]
pub struct EchoSummaryClient {
    pub reply: String,
}

impl SummaryClient for EchoSummaryClient {
    fn summarize(&self, _request: &SummaryRequest) -> Result<String> {
        Ok(self.reply.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    /// Environment variable holding a bearer token, if any.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub request: SummaryRequest,
    pub attempt: u32,
    pub outcome: std::result::Result<String, String>,
}

/// JSON-over-HTTP summarizer: POSTs `{text, prompt, max_tokens}` and reads
/// `{summary}`. Failed attempts are retried with exponential backoff.
pub struct HttpSummaryClient {
    config: EndpointConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    audit: Mutex<Vec<AuditEntry>>,
}

impl HttpSummaryClient {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        let token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} for the summarizer token is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Summarizer(e.to_string()))?;
        Ok(HttpSummaryClient {
            config,
            token,
            client,
            audit: Mutex::new(Vec::new()),
        })
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.audit.lock().expect("audit lock").clone()
    }

    fn attempt(&self, request: &SummaryRequest) -> std::result::Result<String, String> {
        let mut req = self.client.post(&self.config.url).json(request);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        resp.json::<SummaryResponse>()
            .map(|r| r.summary)
            .map_err(|e| format!("bad response body: {e}"))
    }
}

impl SummaryClient for HttpSummaryClient {
    fn summarize(&self, request: &SummaryRequest) -> Result<String> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let outcome = self.attempt(request);
            log::info!(
                "summarizer request (attempt {attempt}, {} chars): {:?}",
                request.text.len(),
                outcome.as_ref().map(|s| s.len())
            );
            self.audit.lock().expect("audit lock").push(AuditEntry {
                request: request.clone(),
                attempt,
                outcome: outcome.clone(),
            });
            match outcome {
                Ok(s) => return Ok(s),
                Err(e) => last = e,
            }
        }
        Err(Error::Summarizer(format!(
            "{} failed after {} attempts: {last}",
            self.config.url,
            self.config.max_retries + 1
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummarizerKind {
    TopnTruncation,
    ExternalService,
    OfflineStub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summarizer {
    pub kind: SummarizerKind,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedDocument {
    pub paper: u32,
    pub enriched_text: String,
    pub summary_used: bool,
    /// The configured summarizer failed and top-N truncation was used.
    pub fallback_used: bool,
    pub summary: Option<String>,
}

/// Translated abstract cut to its first `max_tokens` tokens.
pub fn summarize_topn(
    paper: &Paper,
    translator: &dyn TranslationProvider,
    max_tokens: usize,
) -> Result<String> {
    let translated = translator.translate(&paper.abstract_text, &paper.language)?;
    Ok(Tokenizer::default().truncate(&translated, max_tokens))
}

/// Generative summary from `client` with the length-appropriate prompt,
/// cut to `max_tokens` tokens.
pub fn external_summarize(
    paper: &Paper,
    client: &dyn SummaryClient,
    max_tokens: usize,
) -> Result<String> {
    let request = SummaryRequest {
        text: paper.abstract_text.clone(),
        prompt: prompt_for(max_tokens).to_string(),
        max_tokens,
    };
    let reply = client.summarize(&request)?;
    Ok(Tokenizer::default().truncate(&reply, max_tokens))
}

pub fn plain_template(title: &str, abstract_text: &str) -> String {
    format!("Title: {title}. Abstract: {abstract_text}")
}

pub fn summary_template(title: &str, summary: &str, abstract_text: &str) -> String {
    format!("Title: {title}. Abstract: ({summary}) {abstract_text}")
}

pub struct Enricher {
    pub summarizer: Summarizer,
    translator: Box<dyn TranslationProvider>,
    client: Option<Box<dyn SummaryClient>>,
}

impl Enricher {
    pub fn new(
        summarizer: Summarizer,
        translator: Box<dyn TranslationProvider>,
        client: Option<Box<dyn SummaryClient>>,
    ) -> Result<Self> {
        if summarizer.max_tokens == 0 {
            return Err(Error::invalid("summary max_tokens must be positive"));
        }
        if summarizer.kind != SummarizerKind::TopnTruncation && client.is_none() {
            return Err(Error::invalid(format!(
                "summarizer kind {:?} needs a client",
                summarizer.kind
            )));
        }
        Ok(Enricher {
            summarizer,
            translator,
            client,
        })
    }

    /// Top-N truncation with the identity translator.
    pub fn topn(max_tokens: usize) -> Self {
        Enricher {
            summarizer: Summarizer {
                kind: SummarizerKind::TopnTruncation,
                max_tokens,
            },
            translator: Box::new(IdentityTranslator),
            client: None,
        }
    }

    fn summary(&self, paper: &Paper) -> (String, bool) {
        let max = self.summarizer.max_tokens;
        let generated = match (&self.summarizer.kind, &self.client) {
            (SummarizerKind::TopnTruncation, _) | (_, None) => None,
            (_, Some(client)) => Some(external_summarize(paper, client.as_ref(), max)),
        };
        match generated {
            Some(Ok(s)) => (s, false),
            Some(Err(e)) => {
                log::warn!("summarizer failed for {}: {e}; using top-N truncation", paper.paper_id);
                (self.topn_or_abstract(paper), true)
            }
            None => (self.topn_or_abstract(paper), false),
        }
    }

    fn topn_or_abstract(&self, paper: &Paper) -> String {
        let max = self.summarizer.max_tokens;
        summarize_topn(paper, self.translator.as_ref(), max).unwrap_or_else(|e| {
            log::warn!("translation failed for {}: {e}; truncating the original", paper.paper_id);
            Tokenizer::default().truncate(&paper.abstract_text, max)
        })
    }

    pub fn enrich(&self, paper: &Paper, ordinal: u32) -> EnrichedDocument {
        if paper.is_english() {
            return EnrichedDocument {
                paper: ordinal,
                enriched_text: plain_template(&paper.title, &paper.abstract_text),
                summary_used: false,
                fallback_used: false,
                summary: None,
            };
        }
        let (summary, fallback_used) = self.summary(paper);
        EnrichedDocument {
            paper: ordinal,
            enriched_text: summary_template(&paper.title, &summary, &paper.abstract_text),
            summary_used: true,
            fallback_used,
            summary: Some(summary),
        }
    }
}

/// Enriches every paper, at most `max_concurrent` at a time, and returns
/// the documents in ordinal order together with a corpus whose non-English
/// abstracts carry the parenthesised summary.
pub fn enrich_corpus(
    corpus: &Corpus,
    enricher: &Enricher,
    max_concurrent: usize,
) -> Result<(Corpus, Vec<EnrichedDocument>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_concurrent.max(1))
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let docs: Vec<EnrichedDocument> = pool.install(|| {
        corpus
            .papers()
            .par_iter()
            .enumerate()
            .map(|(i, p)| enricher.enrich(p, i as u32))
            .collect()
    });
    let papers = corpus
        .papers()
        .iter()
        .zip(&docs)
        .map(|(p, d)| {
            let mut p = p.clone();
            if let Some(s) = &d.summary {
                p.abstract_text = format!("({s}) {}", p.abstract_text);
                p.recount();
            }
            p
        })
        .collect();
    Ok((Corpus::new(papers)?.with_provenance(Provenance::Enriched), docs))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Failing;

    impl SummaryClient for Failing {
        fn summarize(&self, _r: &SummaryRequest) -> Result<String> {
            Err(Error::Summarizer("offline".into()))
        }
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ")
    }

    fn stub(reply: &str, max_tokens: usize) -> Enricher {
        Enricher::new(
            Summarizer { kind: SummarizerKind::OfflineStub, max_tokens },
            Box::new(IdentityTranslator),
            Some(Box::new(EchoSummaryClient { reply: reply.into() })),
        )
        .unwrap()
    }

    #[test]
    fn english_is_plain() {
        let p = Paper::new("a", "T", "A", "en");
        let d = stub("SUMMARY", 64).enrich(&p, 0);
        assert_eq!(d.enriched_text, "Title: T. Abstract: A");
        assert!(!d.summary_used);
    }

    #[test]
    fn non_english_gets_summary() {
        let p = Paper::new("a", "T", "A", "de");
        let d = stub("SUMMARY", 64).enrich(&p, 3);
        assert_eq!(d.enriched_text, "Title: T. Abstract: (SUMMARY) A");
        assert!(d.summary_used);
        assert_eq!(d.paper, 3);
    }

    #[test]
    fn stub_summary_is_capped() {
        let p = Paper::new("a", "T", "A", "de");
        let d = stub(&words(200), 64).enrich(&p, 0);
        let s = d.summary.unwrap();
        assert_eq!(Tokenizer::default().count(&s), 64);
        assert_eq!(s, words(64));
    }

    #[test]
    fn topn_truncation() {
        let short = Paper::new("a", "T", words(30), "fr");
        assert_eq!(summarize_topn(&short, &IdentityTranslator, 64).unwrap(), words(30));
        let long = Paper::new("b", "T", words(200), "fr");
        assert_eq!(summarize_topn(&long, &IdentityTranslator, 128).unwrap(), words(128));
    }

    #[test]
    fn failure_falls_back_to_topn() {
        let e = Enricher::new(
            Summarizer { kind: SummarizerKind::ExternalService, max_tokens: 4 },
            Box::new(IdentityTranslator),
            Some(Box::new(Failing)),
        )
        .unwrap();
        let p = Paper::new("a", "T", words(10), "es");
        let d = e.enrich(&p, 0);
        assert!(d.fallback_used);
        assert_eq!(d.summary.as_deref(), Some(words(4).as_str()));
    }

    #[test]
    fn prompts_follow_length() {
        assert_eq!(prompt_for(64), SHORT_SUMMARY_PROMPT);
        assert_eq!(prompt_for(128), LONG_SUMMARY_PROMPT);
    }

    #[test]
    fn external_needs_client() {
        let s = Summarizer { kind: SummarizerKind::ExternalService, max_tokens: 64 };
        assert!(Enricher::new(s, Box::new(IdentityTranslator), None).is_err());
    }

    #[test]
    fn corpus_enrichment_is_ordered() {
        let c = Corpus::new(vec![
            Paper::new("a", "A", "english text", "en"),
            Paper::new("b", "B", "deutscher text", "de"),
        ])
        .unwrap();
        let (enriched, docs) = enrich_corpus(&c, &Enricher::topn(1), 4).unwrap();
        assert_eq!(docs.iter().map(|d| d.paper).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(enriched.paper(0).abstract_text, "english text");
        assert_eq!(enriched.paper(1).abstract_text, "(deutscher) deutscher text");
        assert_eq!(enriched.provenance(), Provenance::Enriched);
    }
}
