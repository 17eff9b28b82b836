use std::io::Write;

use citesim_core::corpus::{detect_language, filter_for_training, ingest, ingest_reader, InputFormat, RawRecord};
use citesim_core::lang::LanguageDetector;
use citesim_core::pipeline::sha256_hex;
use citesim_core::synth::{multilingual_corpus, word, MultilingualConfig};
use citesim_core::{Corpus, Error, Paper, Tokenizer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(id: &str, title: &str, abs: &str) -> String {
    serde_json::json!({"paper_id": id, "title": title, "abstract": abs, "language": "en"}).to_string()
}

#[test]
fn malformed_lines_are_skipped_and_counted() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bad: Vec<usize> = rand::seq::index::sample(&mut rng, 100, 7).into_vec();
    let mut text = String::new();
    for i in 0..100 {
        if bad.contains(&i) {
            text.push_str(match i % 3 {
                0 => "{\"paper_id\": \"broken\"",
                1 => "not json at all",
                _ => "{\"title\": \"no id\"}",
            });
        } else {
            text.push_str(&record(&format!("id{i}"), &word(i), &format!("{} {}", word(i + 1), word(i + 2))));
        }
        text.push('\n');
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    std::fs::write(&path, &text).unwrap();
    let (corpus, summary) = ingest(&path, InputFormat::JsonLines).unwrap();
    assert_eq!(corpus.len(), 93);
    assert_eq!(summary.malformed, 7);
    assert_eq!(summary.papers, 93);
    // idempotent
    assert_eq!(ingest(&path, InputFormat::JsonLines).unwrap().0, corpus);
}

#[test]
fn duplicates_keep_the_longer_abstract() {
    let text = [
        record("a", "First", "short"),
        record("b", "Second", "only one"),
        record("a", "First again", "a much longer abstract text"),
        record("c", "", ""),
    ]
    .join("\n");
    let (corpus, s) = ingest_reader(text.as_bytes(), &LanguageDetector::default()).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!(corpus.paper(0).title, "First again");
    assert_eq!((s.duplicates_merged, s.empty_dropped), (1, 1));
    assert_eq!(corpus.ordinal("b"), Some(1));
}

#[test]
fn unreadable_file_is_fatal() {
    let err = ingest(std::path::Path::new("/nonexistent/c.jsonl"), InputFormat::JsonLines).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn language_detection() {
    let det = LanguageDetector::default();
    let rec = |lang: Option<&str>, title: &str, abs: &str| RawRecord {
        paper_id: "x".into(),
        title: title.into(),
        abstract_text: Some(abs.into()),
        content: None,
        language: lang.map(String::from),
        categories: None,
    };
    assert_eq!(detect_language(&rec(Some("de"), "Titel", ""), &det), "de");
    assert_eq!(detect_language(&rec(None, "", ""), &det), "und");
    let en = rec(
        None,
        "Learning document representations from citation links",
        "We show that the proposed method improves the retrieval of related scientific papers \
         across several benchmarks, and that it is robust to the choice of training data.",
    );
    assert_eq!(detect_language(&en, &det), "en");
}

#[test]
fn training_filter_keeps_papers_with_abstracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let empty: Vec<usize> = rand::seq::index::sample(&mut rng, 1000, 100).into_vec();
    let papers: Vec<Paper> = (0..1000)
        .map(|i| {
            let abs = if empty.contains(&i) { String::new() } else { word(i) };
            Paper::new(format!("p{i}"), "title", abs, "en")
        })
        .collect();
    let corpus = Corpus::new(papers).unwrap();
    let kept = filter_for_training(&corpus);
    assert_eq!(kept.len(), 900);
    let ids: Vec<&str> = kept.papers().iter().map(|p| p.paper_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort_by_key(|id| id[1..].parse::<usize>().unwrap());
    assert_eq!(ids, sorted);
    let full = Corpus::new(vec![Paper::new("a", "t", "x", "en")]).unwrap();
    assert_eq!(filter_for_training(&full), full);
}

#[test]
fn large_corpus_resaves_byte_identically() {
    let (corpus, _) = multilingual_corpus(&MultilingualConfig {
        papers: 10_000,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    corpus.save(&a).unwrap();
    let loaded = Corpus::load(&a).unwrap();
    assert_eq!(loaded, corpus);
    loaded.save(&b).unwrap();
    assert_eq!(sha256_hex(&std::fs::read(&a).unwrap()), sha256_hex(&std::fs::read(&b).unwrap()));
}

#[test]
fn store_rejects_bad_headers() {
    let corpus = Corpus::new(vec![Paper::new("a", "t", "x", "en")]).unwrap();
    let mut bytes = corpus.to_bytes().unwrap();
    assert_eq!(&bytes[..4], b"SDSM");
    bytes[4] = 9;
    let err = Corpus::from_bytes(&bytes).unwrap_err().to_string();
    assert!(err.contains('9') && err.contains('1'), "{err}");
    assert!(Corpus::from_bytes(b"JUNK").is_err());
    assert!(Corpus::from_bytes(&Corpus::new(vec![]).unwrap().to_bytes().unwrap()).unwrap().is_empty());
}

#[test]
fn duplicate_ids_are_rejected() {
    let r = Corpus::new(vec![Paper::new("a", "t", "x", "en"), Paper::new("a", "u", "y", "en")]);
    assert!(r.is_err());
}

fn arb_paper() -> impl Strategy<Value = Paper> {
    (
        "[a-z0-9/.]{1,12}",
        "\\PC{0,40}",
        "\\PC{0,80}",
        prop::option::of("\\PC{1,40}"),
        prop::sample::select(vec!["en", "de", "ja", "und"]),
        prop::collection::vec("[a-z.]{1,6}", 0..3),
    )
        .prop_map(|(id, t, a, c, l, cats)| {
            let mut p = Paper::new(id, t, a, l);
            if let Some(c) = c {
                p = p.with_content(c);
            }
            p.categories = cats;
            p
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_round_trip(papers in prop::collection::vec(arb_paper(), 0..12)) {
        let mut seen = std::collections::HashSet::new();
        let papers: Vec<Paper> = papers.into_iter().filter(|p| seen.insert(p.paper_id.clone())).collect();
        let corpus = Corpus::new(papers).unwrap();
        let bytes = corpus.to_bytes().unwrap();
        let back = Corpus::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &corpus);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        let tok = Tokenizer::default();
        for p in back.papers() {
            prop_assert_eq!(p.token_count_abstract as usize, tok.count(&p.abstract_text));
        }
    }

    #[test]
    fn ingest_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut file = Vec::new();
        for _ in 0..30 {
            let id = rng.random_range(0..20);
            writeln!(file, "{}", record(&format!("p{id}"), &word(rng.random_range(0..50)), &word(rng.random_range(0..50)))).unwrap();
        }
        let det = LanguageDetector::default();
        let a = ingest_reader(file.as_slice(), &det).unwrap();
        let b = ingest_reader(file.as_slice(), &det).unwrap();
        prop_assert_eq!(a, b);
    }
}
