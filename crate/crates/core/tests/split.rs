use std::collections::{BTreeMap, BTreeSet};

use citesim_core::relations::{mine_bc, mine_cc, mine_dc};
use citesim_core::split::{split, split_pairs};
use citesim_core::synth::{multilingual_corpus, MultilingualConfig};
use citesim_core::{CitationGraph, Corpus, Split, SplitAssignment, SplitSpec};
use proptest::prelude::*;

fn fixture() -> (Corpus, CitationGraph) {
    multilingual_corpus(&MultilingualConfig {
        papers: 2000,
        seed: 7,
        ..Default::default()
    })
    .unwrap()
}

fn spec(seed: u64) -> SplitSpec {
    SplitSpec {
        top_l: 4,
        idt_fraction: 0.1,
        odt_tail_fraction: 0.05,
        seed,
    }
}

#[derive(Debug, Default, PartialEq)]
struct Counts {
    train: usize,
    idt: usize,
    odt: usize,
}

/// Per-language train / IDT / ODT counts from the rules alone: unlinked
/// papers drop out, head languages lose a floored tail to ODT and give a
/// rounded share of the rest to IDT, other languages go to ODT, English
/// ODT papers need a non-English ODT neighbour. The English pruning needs
/// actual ODT membership, so it is checked against `odt_of`.
fn reference_counts(
    corpus: &Corpus,
    graph: &CitationGraph,
    s: &SplitSpec,
    odt_of: &dyn Fn(u32) -> bool,
) -> BTreeMap<String, Counts> {
    let mut linked: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for u in 0..corpus.len() as u32 {
        if !graph.out_adj(u).is_empty() || !graph.in_adj(u).is_empty() {
            linked.entry(corpus.paper(u).language.clone()).or_default().push(u);
        }
    }
    let mut order: Vec<(&String, usize)> = linked.iter().map(|(l, m)| (l, m.len())).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut out = BTreeMap::new();
    for (rank, (lang, m)) in order.into_iter().enumerate() {
        let mut c = Counts::default();
        if rank < s.top_l {
            let tail = (s.odt_tail_fraction * m as f64).floor() as usize;
            let rest = m - tail;
            c.idt = ((s.idt_fraction * rest as f64).round() as usize).max(1).min(rest - 1);
            c.train = rest - c.idt;
            c.odt = tail;
        } else {
            c.odt = m;
        }
        if lang == "en" {
            c.odt = linked[lang]
                .iter()
                .filter(|&&u| odt_of(u))
                .filter(|&&u| {
                    graph
                        .out_adj(u)
                        .iter()
                        .chain(graph.in_adj(u))
                        .any(|&v| odt_of(v) && corpus.paper(v).language != "en")
                })
                .count();
        }
        out.insert(lang.clone(), c);
    }
    out
}

fn observed_counts(corpus: &Corpus, a: &SplitAssignment) -> BTreeMap<String, Counts> {
    let mut out: BTreeMap<String, Counts> = BTreeMap::new();
    for (u, s) in a.as_slice().iter().enumerate() {
        let c = out.entry(corpus.paper(u as u32).language.clone()).or_default();
        match s {
            Split::Train => c.train += 1,
            Split::Idt => c.idt += 1,
            Split::Odt => c.odt += 1,
            Split::Excluded => {}
        }
    }
    out
}

#[test]
fn counts_match_rule_rederivation() {
    let (corpus, graph) = fixture();
    let s = spec(7);
    let (a, report) = split(&corpus, &graph, &s).unwrap();
    assert_eq!(a.len(), corpus.len());
    assert_eq!(report.head_languages.len(), 4);

    // pre-pruning ODT: everything in ODT plus English papers the rule removed
    let pre_odt: BTreeSet<u32> = (0..corpus.len() as u32)
        .filter(|&u| {
            a.split_of(u) == Split::Odt
                || (a.split_of(u) == Split::Excluded && graph.degree(u) > 0 && corpus.paper(u).is_english())
        })
        .collect();
    let mut want = reference_counts(&corpus, &graph, &s, &|u| pre_odt.contains(&u));
    let got = observed_counts(&corpus, &a);
    want.retain(|_, c| *c != Counts::default());
    assert_eq!(got.into_iter().filter(|(_, c)| *c != Counts::default()).collect::<BTreeMap<_, _>>(), want);

    for u in 0..corpus.len() as u32 {
        if graph.degree(u) == 0 {
            assert_eq!(a.split_of(u), Split::Excluded);
        }
    }
}

#[test]
fn english_odt_papers_have_non_english_odt_neighbours() {
    let (corpus, graph) = fixture();
    let (a, _) = split(&corpus, &graph, &spec(7)).unwrap();
    for u in a.members(Split::Odt) {
        if corpus.paper(u).is_english() {
            assert!(graph
                .neighbors(u)
                .into_iter()
                .any(|v| a.split_of(v) == Split::Odt && !corpus.paper(v).is_english()));
        }
    }
}

#[test]
fn train_and_idt_share_languages() {
    let (corpus, graph) = fixture();
    let (a, _) = split(&corpus, &graph, &spec(7)).unwrap();
    let langs = |s: Split| -> BTreeSet<String> {
        a.members(s).into_iter().map(|u| corpus.paper(u).language.clone()).collect()
    };
    assert_eq!(langs(Split::Train), langs(Split::Idt));
    assert!(!langs(Split::Train).is_empty());
    // ODT holds languages unseen in training
    assert!(!langs(Split::Odt).is_subset(&langs(Split::Train)));
}

#[test]
fn split_pairs_equals_brute_force_filter() {
    let (corpus, graph) = fixture();
    let (a, _) = split(&corpus, &graph, &spec(7)).unwrap();
    for pairs in [mine_dc(&graph), mine_cc(&graph, 200).0, mine_bc(&graph, 200).0] {
        let mut total = 0;
        for target in [Split::Train, Split::Idt, Split::Odt] {
            let kept = split_pairs(&pairs, &a, &corpus, target);
            let want: Vec<_> = pairs
                .pairs
                .iter()
                .filter(|p| {
                    let same = a.split_of(p.a) == target && a.split_of(p.b) == target;
                    let en_en = corpus.paper(p.a).language == "en" && corpus.paper(p.b).language == "en";
                    same && !(target == Split::Odt && en_en)
                })
                .copied()
                .collect();
            assert_eq!(kept.pairs, want);
            assert!(kept.pairs.iter().all(|p| a.split_of(p.a) == a.split_of(p.b)));
            if target == Split::Odt {
                assert!(kept.pairs.iter().all(|p| !(corpus.paper(p.a).is_english() && corpus.paper(p.b).is_english())));
            }
            total += kept.len();
        }
        assert!(total <= pairs.len());
    }
}

#[test]
fn assignment_persists() {
    let (corpus, graph) = fixture();
    let (a, _) = split(&corpus, &graph, &spec(7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("split.bin");
    a.save(&p).unwrap();
    assert_eq!(SplitAssignment::load(&p).unwrap(), a);
    let mut tsv = Vec::new();
    a.export_tsv(&corpus, &mut tsv).unwrap();
    let text = String::from_utf8(tsv).unwrap();
    assert_eq!(text.lines().count(), corpus.len());
    let first = text.lines().next().unwrap();
    assert_eq!(first, format!("{}\t{}", corpus.paper(0).paper_id, a.split_of(0)));
}

#[test]
fn rejects_bad_specs() {
    let (corpus, graph) = fixture();
    for bad in [
        SplitSpec { top_l: 0, ..spec(0) },
        SplitSpec { idt_fraction: 0.0, ..spec(0) },
        SplitSpec { idt_fraction: 1.0, ..spec(0) },
    ] {
        assert!(split(&corpus, &graph, &bad).is_err());
    }
}

#[test]
fn few_languages_warns_and_proceeds() {
    let (corpus, graph) = fixture();
    let (a, report) = split(&corpus, &graph, &SplitSpec { top_l: 30, ..spec(1) }).unwrap();
    assert!(!report.warnings.is_empty());
    assert!(a.count(Split::Train) > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn split_is_deterministic_and_leak_free(seed in any::<u64>(), data_seed in 0u64..50) {
        let (corpus, graph) = multilingual_corpus(&MultilingualConfig {
            papers: 400,
            seed: data_seed,
            ..Default::default()
        })
        .unwrap();
        let s = SplitSpec { top_l: 3, ..spec(seed) };
        let (a, _) = split(&corpus, &graph, &s).unwrap();
        prop_assert_eq!(&a, &split(&corpus, &graph, &s).unwrap().0);
        let cc = mine_cc(&graph, 200).0;
        for target in [Split::Train, Split::Idt, Split::Odt] {
            let kept = split_pairs(&cc, &a, &corpus, target);
            prop_assert!(kept.pairs.iter().all(|p| a.split_of(p.a) == target && a.split_of(p.b) == target));
        }
    }
}
