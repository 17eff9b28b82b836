//! Deterministic unicode word splitter.
//!
//! Text is NFKC-normalised, then split into maximal runs of alphanumeric
//! characters. Every other non-whitespace character is a token of its own,
//! as is every CJK ideograph or kana (those scripts do not use spaces).

use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { lowercase: false }
    }
}

/// Normalised text together with the byte spans of its tokens.
#[derive(Debug, Clone)]
pub struct Spans {
    pub text: String,
    pub spans: Vec<(usize, usize)>,
}

impl Spans {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Source text covering tokens `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        if start >= end {
            return "";
        }
        &self.text[self.spans[start].0..self.spans[end - 1].1]
    }
}

fn is_standalone(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FFFF)
}

impl Tokenizer {
    pub fn lowercasing() -> Self {
        Tokenizer { lowercase: true }
    }

    pub fn spans(&self, text: &str) -> Spans {
        let text: String = text.nfkc().collect();
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            let word = c.is_alphanumeric() && !is_standalone(c);
            if word {
                if run_start.is_none() {
                    run_start = Some(i);
                }
                continue;
            }
            if let Some(s) = run_start.take() {
                spans.push((s, i));
            }
            if !c.is_whitespace() {
                spans.push((i, i + c.len_utf8()));
            }
        }
        if let Some(s) = run_start {
            spans.push((s, text.len()));
        }
        Spans { text, spans }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let spans = self.spans(text);
        spans
            .spans
            .iter()
            .map(|&(s, e)| {
                let tok = &spans.text[s..e];
                if self.lowercase {
                    tok.to_lowercase()
                } else {
                    tok.to_string()
                }
            })
            .collect()
    }

    pub fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }

    /// Keeps the first `max_tokens` tokens of `text`, cutting the normalised
    /// text right after the last kept token.
    pub fn truncate(&self, text: &str, max_tokens: usize) -> String {
        let spans = self.spans(text);
        if spans.len() <= max_tokens {
            return spans.text.trim().to_string();
        }
        spans.slice(0, max_tokens).to_string()
    }
}
