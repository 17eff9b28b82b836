mod common;

use std::collections::{BTreeSet, HashSet};

use citesim_core::corpus::Paper;
use citesim_core::graph_embed::NodeEmbeddings;
use citesim_core::relations::{mine_cc, mine_dc};
use citesim_core::sampler::{
    export_triplets_tsv, load_triplets, make_batches, sample_scincl, sample_snippet_pairs, sample_specter_triplets,
    save_triplets, ScinclConfig, SnippetConfig,
};
use citesim_core::synth::{planted_clusters, random_graph, word};
use citesim_core::{CitationGraph, Corpus, Tokenizer, TripletExample};
use common::{full_sort, random_matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus_of(n: usize, words: impl Fn(usize) -> usize) -> Corpus {
    Corpus::new(
        (0..n)
            .map(|i| {
                let text: Vec<String> = (0..words(i)).map(|j| word(i * 31 + j)).collect();
                Paper::new(format!("p{i}"), format!("title {i}"), text.join(" "), "en")
            })
            .collect(),
    )
    .unwrap()
}

/// C with B→C, A↛C and C ∉ {A, B}.
fn candidates(g: &CitationGraph, a: u32, b: u32) -> BTreeSet<u32> {
    (0..g.num_nodes() as u32)
        .filter(|&c| c != a && c != b && g.cites(b, c) && !g.cites(a, c))
        .collect()
}

#[test]
fn specter_fixtures() {
    // A=0, B=1, C=2
    let g = CitationGraph::from_edges(3, [(0, 1), (1, 2)]);
    let t = sample_specter_triplets(&mine_dc(&g), &g, 1, 0).unwrap();
    assert!(t.contains(&TripletExample { anchor: 0, positive: 1, hard_negative: Some(2) }));
    let g = CitationGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]);
    let t = sample_specter_triplets(&mine_dc(&g), &g, 1, 0).unwrap();
    assert!(t.contains(&TripletExample { anchor: 0, positive: 1, hard_negative: None }));
}

#[test]
fn specter_negatives_match_brute_force_enumeration() {
    let g = random_graph(300, 0.03, 14);
    for (pairs, per_anchor) in [(mine_dc(&g), 1), (mine_dc(&g), 3), (mine_cc(&g, 200).0, 2)] {
        let triplets = sample_specter_triplets(&pairs, &g, per_anchor, 5).unwrap();
        let mut emitted = 0;
        for p in &pairs.pairs {
            let cands = candidates(&g, p.a, p.b);
            let mine: Vec<&TripletExample> =
                triplets.iter().filter(|t| t.anchor == p.a && t.positive == p.b).collect();
            if cands.is_empty() {
                assert_eq!(mine.len(), 1);
                assert_eq!(mine[0].hard_negative, None);
            } else {
                assert_eq!(mine.len(), per_anchor.min(cands.len()));
                let negs: HashSet<u32> = mine.iter().map(|t| t.hard_negative.unwrap()).collect();
                assert_eq!(negs.len(), mine.len());
                assert!(negs.iter().all(|c| cands.contains(c)));
            }
            emitted += mine.len();
        }
        assert_eq!(emitted, triplets.len());
        assert_eq!(triplets, sample_specter_triplets(&pairs, &g, per_anchor, 5).unwrap());
    }
}

#[test]
fn scincl_windows_match_full_sort() {
    let m = random_matrix(3000, 16, 33);
    let emb = NodeEmbeddings::new(m.clone()).unwrap();
    let cfg = ScinclConfig { i: 20, k: 2000, n: 5, per_anchor: 3 };
    let anchors: Vec<u32> = (0..3000).step_by(60).collect();
    let (triplets, windows) = sample_scincl(&emb, &anchors, &cfg, 9).unwrap();
    assert!(!windows.clipped);
    assert_eq!(triplets.len(), anchors.len() * 3);
    for t in &triplets {
        let order = full_sort(&m, t.anchor as usize);
        let rank = |x: u32| order.iter().position(|&y| y == x).unwrap() + 1;
        assert!((20..=25).contains(&rank(t.positive)));
        assert!((2000..=2005).contains(&rank(t.hard_negative.unwrap())));
    }
}

#[test]
fn scincl_small_windows_and_clipping() {
    let m = random_matrix(10, 4, 1);
    let emb = NodeEmbeddings::new(m.clone()).unwrap();
    let cfg = ScinclConfig { i: 1, k: 5, n: 1, per_anchor: 2 };
    let (t, _) = sample_scincl(&emb, &(0..10).collect::<Vec<_>>(), &cfg, 0).unwrap();
    for x in &t {
        let order = full_sort(&m, x.anchor as usize);
        let pos: BTreeSet<u32> = order[0..2].iter().copied().collect();
        let neg: BTreeSet<u32> = order[4..6].iter().copied().collect();
        assert!(pos.contains(&x.positive) && neg.contains(&x.hard_negative.unwrap()));
    }
    assert_eq!(t.len(), 20);

    let emb = NodeEmbeddings::new(random_matrix(100, 4, 2)).unwrap();
    let (_, w) = sample_scincl(&emb, &[0], &ScinclConfig::default(), 0).unwrap();
    assert!(w.clipped);
    assert!(sample_scincl(&emb, &[100], &ScinclConfig::default(), 0).is_err());
}

#[test]
fn scincl_positives_share_clusters_more_than_negatives() {
    let (m, labels) = planted_clusters(10, 300, 16, 0.6, 4);
    let emb = NodeEmbeddings::new(m).unwrap();
    let anchors: Vec<u32> = (0..3000).step_by(10).collect();
    let (t, _) = sample_scincl(&emb, &anchors, &ScinclConfig::default(), 1).unwrap();
    let rate = |f: &dyn Fn(&TripletExample) -> u32| {
        t.iter().filter(|x| labels[x.anchor as usize] == labels[f(x) as usize]).count() as f64 / t.len() as f64
    };
    let pos = rate(&|x| x.positive);
    let neg = rate(&|x| x.hard_negative.unwrap());
    assert!(pos > neg, "positives {pos}, negatives {neg}");
}

#[test]
fn snippet_pairs_respect_bounds_and_provenance() {
    let corpus = corpus_of(100, |i| 15 + (i * 7) % 300);
    let cfg = SnippetConfig { count: 500, min_len: 10, max_len: 256 };
    let pairs = sample_snippet_pairs(&corpus, &cfg, 3).unwrap();
    assert_eq!(pairs.len(), 500);
    let tok = Tokenizer::default();
    for p in &pairs {
        let source = &corpus.paper(p.source_paper).abstract_text;
        assert!(tok.count(source) >= 20);
        for s in [&p.a_text, &p.b_text] {
            assert!((10..=256).contains(&tok.count(s)));
            assert!(source.contains(s.as_str()));
        }
    }
    assert_eq!(pairs, sample_snippet_pairs(&corpus, &cfg, 3).unwrap());
}

#[test]
fn snippet_eligibility_boundaries() {
    let short = corpus_of(3, |_| 19);
    assert!(sample_snippet_pairs(&short, &SnippetConfig { count: 5, min_len: 10, max_len: 256 }, 0).is_err());
    let exact = corpus_of(1, |_| 20);
    let text = &exact.paper(0).abstract_text;
    let words: Vec<&str> = text.split(' ').collect();
    let (first, second) = (words[..10].join(" "), words[10..].join(" "));
    let pairs = sample_snippet_pairs(&exact, &SnippetConfig { count: 100_000, min_len: 10, max_len: 10 }, 2).unwrap();
    assert!(pairs.iter().any(|p| p.a_text == first && p.b_text == second));
}

#[test]
fn packing_drops_the_remainder() {
    let corpus = corpus_of(40, |_| 12);
    let triplets: Vec<TripletExample> = (0..10)
        .map(|i| TripletExample { anchor: 2 * i, positive: 2 * i + 1, hard_negative: None })
        .collect();
    let batches = make_batches(&triplets, &corpus, 4, 0).unwrap();
    assert_eq!(batches.len(), 2);
    assert!(batches.iter().all(|b| b.size() == 4 && b.right_texts.len() == 4));
    assert!(make_batches(&triplets[..3], &corpus, 4, 0).is_err());
    assert!(make_batches(&triplets, &corpus, 1, 0).is_err());
}

#[test]
fn duplicate_positive_is_redrawn() {
    let corpus = corpus_of(20, |_| 12);
    // rows 0 and 1 share positive 9
    let triplets = vec![
        TripletExample { anchor: 0, positive: 9, hard_negative: None },
        TripletExample { anchor: 1, positive: 9, hard_negative: None },
        TripletExample { anchor: 2, positive: 10, hard_negative: None },
        TripletExample { anchor: 3, positive: 11, hard_negative: None },
    ];
    for seed in 0..20 {
        if let Ok(batches) = make_batches(&triplets, &corpus, 2, seed) {
            for b in batches {
                let ids: HashSet<u32> = b.right_ids.iter().copied().collect();
                assert_eq!(ids.len(), b.right_ids.len());
            }
        }
    }
}

#[test]
fn large_batching_has_no_right_side_duplicates() {
    let n = 4000;
    let corpus = corpus_of(n, |_| 12);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut seen = HashSet::new();
    let mut triplets = Vec::new();
    while triplets.len() < 5000 {
        let a = rng.random_range(0..n as u32);
        let p = rng.random_range(0..n as u32);
        let h = rng.random_range(0..n as u32);
        if a != p && h != a && h != p && seen.insert((a.min(p), a.max(p))) {
            triplets.push(TripletExample { anchor: a, positive: p, hard_negative: rng.random_bool(0.5).then_some(h) });
        }
    }
    let known: HashSet<(u32, u32)> = triplets.iter().map(|t| (t.anchor.min(t.positive), t.anchor.max(t.positive))).collect();
    let batches = make_batches(&triplets, &corpus, 32, 1).unwrap();
    assert!(batches.len() >= 5000 / 32 - 5);
    for b in &batches {
        let right: HashSet<u32> = b.right_ids.iter().copied().collect();
        assert_eq!(right.len(), b.right_ids.len());
        for (i, &l) in b.left_ids.iter().enumerate() {
            for (j, &r) in b.right_ids.iter().enumerate() {
                if i != j {
                    assert!(!known.contains(&(l.min(r), l.max(r))), "known pair off the diagonal");
                }
            }
        }
        for (k, &row) in b.hard_negative_of.iter().enumerate() {
            assert_eq!(b.hard_negative_for(row), Some(b.size() + k));
        }
    }
}

#[test]
fn triplets_persist_and_export() {
    let corpus = corpus_of(5, |_| 12);
    let t = vec![
        TripletExample { anchor: 0, positive: 1, hard_negative: Some(2) },
        TripletExample { anchor: 3, positive: 4, hard_negative: None },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    save_triplets(&t, &path).unwrap();
    assert_eq!(load_triplets(&path).unwrap(), t);
    let mut out = Vec::new();
    export_triplets_tsv(&t, &corpus, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "p0\tp1\tp2\np3\tp4\t-\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn specter_triplets_satisfy_citation_predicate(seed in 0u64..1000, p in 0.01f64..0.1) {
        let g = random_graph(80, p, seed);
        for t in sample_specter_triplets(&mine_dc(&g), &g, 2, seed).unwrap() {
            prop_assert!(t.anchor != t.positive && g.cites(t.anchor, t.positive));
            if let Some(h) = t.hard_negative {
                prop_assert!(g.cites(t.positive, h) && !g.cites(t.anchor, h) && h != t.anchor && h != t.positive);
            }
        }
    }

    #[test]
    fn scincl_windows_are_disjoint(i in 1usize..50, n in 0usize..10, gap in 1usize..100, nodes in 2usize..500) {
        let cfg = ScinclConfig { i, k: i + n + gap, n, per_anchor: 1 };
        let w = cfg.windows(nodes);
        if !w.clipped {
            prop_assert!(w.positive.1 < w.negative.0);
        }
    }
}
