use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ngram::{arpa_string, train_katz, NGramModel, Vocabulary, WordId, BOS, LOG_ZERO};

fn scan_rank1(bits: &[bool], i: usize) -> usize {
    bits[..i].iter().filter(|&&b| b).count()
}

fn scan_select(bits: &[bool], k: usize, want: bool) -> Option<usize> {
    bits.iter().enumerate().filter(|(_, &b)| b == want).nth(k).map(|(i, _)| i)
}

#[test]
fn rank_select_match_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (len, density) in [(0usize, 0.5), (1, 1.0), (63, 0.5), (64, 0.1), (513, 0.9), (5000, 0.5), (20_000, 0.02)] {
        let raw: Vec<bool> = (0..len).map(|_| rng.random_bool(density)).collect();
        let bv: BitVectorRS = raw.iter().copied().collect();
        assert_eq!(bv.len(), len);
        let ones = raw.iter().filter(|&&b| b).count();
        assert_eq!(bv.count_ones(), ones);
        for _ in 0..300 {
            let i = rng.random_range(0..=len);
            assert_eq!(bv.rank1(i), scan_rank1(&raw, i));
            assert_eq!(bv.rank1(i) + bv.rank0(i), i);
            let k = rng.random_range(0..=len.max(1));
            assert_eq!(bv.select1(k), scan_select(&raw, k, true));
            assert_eq!(bv.select0(k), scan_select(&raw, k, false));
            if let Some(p) = bv.select1(k) {
                assert_eq!(bv.rank1(p), k);
                assert!(bv.get(p));
            }
        }
    }
}

#[test]
fn two_leaf_tree_encoding() {
    let bits = louds_bits(&[2, 0, 0]);
    let got: Vec<u8> = (0..bits.len()).map(|i| bits.get(i) as u8).collect();
    assert_eq!(got, vec![1, 0, 1, 1, 0, 0, 0]);
}

fn unigram_model(words: &[&str]) -> NGramModel {
    let corpus = vec![words.iter().map(|w| w.to_string()).collect::<Vec<_>>()];
    let vocab = Vocabulary::from_sentences(&corpus).unwrap();
    train_katz(&corpus, 1, vocab).unwrap()
}

#[test]
fn unigram_model_is_one_level() {
    let model = unigram_model(&[]);
    let louds = LoudsNGramModel::build(&model).unwrap();
    // Root with the three reserved words as leaves.
    let got: Vec<u8> = (0..louds.bits().len()).map(|i| louds.bits().get(i) as u8).collect();
    assert_eq!(got, vec![1, 0, 1, 1, 1, 0, 0, 0, 0]);
    assert_eq!(louds.num_nodes(), louds.bits().count_ones());
    assert_eq!(louds.child_seek(ROOT, BOS), Some(1));
    assert_eq!(louds.child_seek(ROOT, 2), Some(3));
    assert_eq!(louds.child_seek(1, 2), None);
    for node in 1..louds.num_nodes() {
        assert_eq!(louds.level(node), 1);
        assert_eq!(louds.parent(node), Some(ROOT));
    }
    assert_eq!(louds.parent(ROOT), None);

    let model = unigram_model(&["a", "b", "c", "a"]);
    let louds = LoudsNGramModel::build(&model).unwrap();
    assert_eq!(louds.children(ROOT).len(), model.vocab().len());
}

/// Katz model from random sentences; roughly `sentences * 3` distinct n-grams.
fn random_model(seed: u64, vocab_size: usize, sentences: usize, order: usize) -> NGramModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Vec<String>> = (0..sentences)
        .map(|_| {
            let len = rng.random_range(1..8);
            (0..len)
                .map(|_| {
                    // Skewed word choice so counts vary.
                    let r: f64 = rng.random();
                    format!("w{}", (r * r * vocab_size as f64) as usize)
                })
                .collect()
        })
        .collect();
    let vocab = Vocabulary::from_sentences(&corpus).unwrap();
    train_katz(&corpus, order, vocab).unwrap()
}

#[test]
fn lookups_track_source_model() {
    let model = random_model(2, 30, 40, 3);
    let louds = LoudsNGramModel::build(&model).unwrap();
    let tol = 1.5 * louds.max_step();
    let v = model.vocab().len() as WordId;
    // Every stored n-gram, plus random backed-off queries.
    for n in 1..=3 {
        for (key, e) in model.sorted_ngrams(n) {
            let node = louds.find(key).unwrap();
            if e.log_prob > LOG_ZERO {
                assert!((louds.log_prob_of(node) - e.log_prob).abs() <= tol);
            }
            let (h, w) = key.split_at(n - 1);
            let got = louds.lookup(w[0], h).unwrap();
            assert!((got - model.log_prob(w[0], h)).abs() <= tol);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let hl = rng.random_range(0..4);
        let h: Vec<WordId> = (0..hl).map(|_| rng.random_range(0..v)).collect();
        let w = rng.random_range(1..v);
        let got = louds.lookup(w, &h).unwrap();
        assert!((got - model.log_prob(w, &h)).abs() <= tol, "{h:?} {w}");
    }
}

#[test]
fn lookup_recursion_base_cases() {
    let model = random_model(4, 10, 30, 2);
    let louds = LoudsNGramModel::build(&model).unwrap();
    let tol = 0.5 * louds.max_step();
    let w = model.vocab().id("w1").unwrap();
    let stored = model.entry(&[w]).unwrap().log_prob;
    assert!((louds.lookup(w, &[]).unwrap() - stored).abs() <= tol);
    // </s> never starts a context, so its backoff is zero and the unigram is returned.
    assert_eq!(model.backoff(&[crate::ngram::EOS]), 0.0);
    assert!((louds.lookup(w, &[crate::ngram::EOS]).unwrap() - stored).abs() <= tol);
    assert!(matches!(louds.lookup(w, &[v_out(&model)]), Err(crate::Error::OutOfVocabulary(_))));
    assert!(matches!(louds.lookup(v_out(&model), &[]), Err(crate::Error::OutOfVocabulary(_))));
}

fn v_out(model: &NGramModel) -> WordId {
    model.vocab().len() as WordId
}

#[test]
fn child_seek_agrees_with_adjacency_lists() {
    let model = random_model(5, 15, 25, 3);
    let louds = LoudsNGramModel::build(&model).unwrap();
    let keys = louds.ngrams();
    let mut adjacency: HashMap<Vec<WordId>, Vec<WordId>> = HashMap::new();
    for k in &keys {
        adjacency.entry(k[..k.len() - 1].to_vec()).or_default().push(k[k.len() - 1]);
    }
    let v = model.vocab().len() as WordId;
    let mut nodes: Vec<(usize, Vec<WordId>)> = vec![(ROOT, Vec::new())];
    nodes.extend(keys.iter().map(|k| (louds.find(k).unwrap(), k.clone())));
    for (node, key) in nodes {
        let kids = adjacency.get(&key).cloned().unwrap_or_default();
        for w in 0..v {
            let found = louds.child_seek(node, w);
            assert_eq!(found.is_some(), kids.contains(&w));
            if let Some(c) = found {
                assert_eq!(louds.word(c), w);
                assert_eq!(louds.parent(c), Some(node));
            }
        }
    }
}

#[test]
fn structure_is_lossless() {
    let model = random_model(6, 40, 60, 4);
    let louds = LoudsNGramModel::build(&model).unwrap();
    let rebuilt: BTreeSet<Vec<WordId>> = louds.ngrams().into_iter().collect();
    let source: BTreeSet<Vec<WordId>> = (1..=4)
        .flat_map(|n| model.sorted_ngrams(n).into_iter().map(|(k, _)| k.to_vec()))
        .collect();
    assert_eq!(rebuilt, source);
    assert_eq!(louds.num_ngrams(), model.num_ngrams());
}

#[test]
fn file_roundtrip_and_size() {
    let model = random_model(7, 200, 3000, 5);
    assert!(model.num_ngrams() >= 10_000, "{}", model.num_ngrams());
    let louds = LoudsNGramModel::build(&model).unwrap();
    let mut buf = Vec::new();
    louds.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"ELD1");
    assert_eq!(buf.len(), louds.serialized_len());
    let back = LoudsNGramModel::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(back, louds);
    let arpa = arpa_string(&model);
    assert!((buf.len() as f64) < 0.6 * arpa.len() as f64);

    buf[0] = b'Z';
    assert!(matches!(
        LoudsNGramModel::read_from(&mut buf.as_slice()),
        Err(crate::Error::Format(_))
    ));
}
