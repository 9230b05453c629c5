//! Library results against the brute-force oracles on random small cases.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use common::*;
use proptest::prelude::*;
use repart_core::query_exec::{evaluate_words, match_paths, IptMode};
use repart_core::swapper::{family, Board};
use repart_core::vm::{LabelCensus, RowCache, VertexStatus, VisitorMatrix, VmContext, VmParams};
use repart_core::{LabeledGraph, Partitioning, VertexId};

fn params() -> VmParams {
    VmParams {
        max_path_len: Some(CORPUS_T),
        safe_threshold: 1.0,
        length_cutoff: None,
    }
}

/// Fixed point of the family rule, recomputed from oracle flows.
fn naive_family(
    g: &LabeledGraph,
    p: &Partitioning,
    w: &OracleWorkload,
    max_len: usize,
    candidate: VertexId,
    threshold: f64,
) -> BTreeSet<VertexId> {
    let origin = p.part(candidate);
    let mut members = BTreeSet::from([candidate]);
    loop {
        let mut grown = false;
        let outside: Vec<VertexId> = g
            .vertices()
            .filter(|&n| p.part(n) == origin && !members.contains(&n))
            .collect();
        for n in outside {
            let score = oracle_score(g, p, w, n, max_len);
            if score.total <= 0.0 {
                continue;
            }
            let pulled = g
                .neighbors(n)
                .iter()
                .any(|m| members.contains(m) && score.flow.get(m).copied().unwrap_or(0.0) / score.total > threshold);
            if pulled {
                members.insert(n);
                grown = true;
            }
        }
        if !grown {
            return members;
        }
    }
}

#[test]
fn families_match_fixed_point() {
    let mut checked = 0;
    for seed in 0..80 {
        let case = random_case(seed);
        let (g, p) = (&case.graph, &case.partitioning);
        let t = build_trie(g, &case.queries, case.star_cap);
        let oracle = OracleWorkload::new(&case.queries, case.star_cap);
        let max_len = CORPUS_T.min(oracle.max_len()).saturating_sub(1);
        let ctx = VmContext::new(g, &t, params());
        let cache = RowCache::new();
        let mut model = ctx.model(&cache);
        let census = LabelCensus::new(g, p);
        let moved = HashSet::new();
        for part in 0..p.k() as u32 {
            let vm = VisitorMatrix::build(&mut model, p, &census, part).unwrap();
            let board = Board {
                partitioning: p,
                census: &census,
                moved: &moved,
            };
            for (&c, s) in &vm.per_vertex {
                if s.status != VertexStatus::Scored {
                    continue;
                }
                let fam = family(&mut model, &board, &vm, c, 0.5, usize::MAX).unwrap();
                assert_eq!(
                    fam.members,
                    naive_family(g, p, &oracle, max_len, c, 0.5),
                    "seed {seed} candidate {c}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn evaluator_matches_enumeration() {
    for seed in 0..60 {
        let case = random_case(seed);
        let g = &case.graph;
        for (q, _) in &case.queries {
            let words = q.expand(case.star_cap).unwrap();
            let mut expected = 0;
            let mut crossings = BTreeSet::new();
            for word in &words {
                let word: Vec<&str> = word.iter().map(String::as_str).collect();
                for path in match_paths(g, &word) {
                    expected += 1;
                    for j in 1..path.len() {
                        if case.partitioning.part(path[j - 1]) != case.partitioning.part(path[j]) {
                            crossings.insert(path[..=j].to_vec());
                        }
                    }
                }
            }
            let eval = evaluate_words(g, &case.partitioning, &words, IptMode::CompleteOnly);
            assert_eq!(eval.matches, expected, "seed {seed} query {q}");
            assert_eq!(eval.ipt, crossings.len(), "seed {seed} query {q}");
            let partial = evaluate_words(g, &case.partitioning, &words, IptMode::Partial);
            assert!(partial.ipt >= eval.ipt);
        }
    }
}

#[test]
fn cache_invalidation_reproduces_fresh_rows() {
    for seed in 0..40 {
        let case = random_case(seed);
        let g = &case.graph;
        let (first, rest) = case.queries.split_first().unwrap();
        let mut queries = vec![(first.0.clone(), 1.0)];
        let t0 = build_trie(g, &queries, case.star_cap);
        let ctx0 = VmContext::new(g, &t0, params());
        let mut cache = RowCache::new();
        let census = LabelCensus::new(g, &case.partitioning);
        for part in 0..case.partitioning.k() as u32 {
            let mut model = ctx0.model(&cache);
            VisitorMatrix::build(&mut model, &case.partitioning, &census, part).unwrap();
            let rows = model.into_new_rows();
            cache.absorb(rows);
        }
        queries.extend(rest.iter().cloned());
        let t1 = build_trie(g, &queries, case.star_cap);
        cache.invalidate(g, &t1.diff_since(&t0.snapshot()));
        let ctx1 = VmContext::new(g, &t1, params());
        let fresh = RowCache::new();
        for part in 0..case.partitioning.k() as u32 {
            let mut cached = ctx1.model(&cache);
            let mut clean = ctx1.model(&fresh);
            let a = VisitorMatrix::build(&mut cached, &case.partitioning, &census, part).unwrap();
            let b = VisitorMatrix::build(&mut clean, &case.partitioning, &census, part).unwrap();
            assert_eq!(a.per_vertex, b.per_vertex, "seed {seed}");
            assert_eq!(a.rows, b.rows, "seed {seed}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ipt_ignores_partition_names(seed in 0u64..10_000, shift in 1u32..4) {
        let case = random_case(seed);
        let k = case.partitioning.k();
        let renamed: Vec<u32> = case.partitioning.assignment().iter().map(|&x| (x + shift) % k as u32).collect();
        let renamed = Partitioning::new(k, renamed).unwrap();
        for (q, _) in &case.queries {
            let words = q.expand(case.star_cap).unwrap();
            let a = evaluate_words(&case.graph, &case.partitioning, &words, IptMode::Partial);
            let b = evaluate_words(&case.graph, &renamed, &words, IptMode::Partial);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn single_partition_has_no_ipt(seed in 0u64..10_000) {
        let case = random_case(seed);
        let one = Partitioning::new(1, vec![0; case.graph.len()]).unwrap();
        for (q, _) in &case.queries {
            let words = q.expand(case.star_cap).unwrap();
            prop_assert_eq!(evaluate_words(&case.graph, &one, &words, IptMode::Partial).ipt, 0);
        }
    }

    #[test]
    fn extroversion_matches_oracle_under_cutoff(seed in 0u64..10_000, cutoff in 1usize..4) {
        let case = random_case(seed);
        let t = build_trie(&case.graph, &case.queries, case.star_cap);
        let oracle = OracleWorkload::new(&case.queries, case.star_cap);
        let max_len = CORPUS_T.min(oracle.max_len()).saturating_sub(1).min(cutoff);
        let vm_params = VmParams { length_cutoff: Some(cutoff), ..params() };
        let ctx = VmContext::new(&case.graph, &t, vm_params);
        let cache = RowCache::new();
        let census = LabelCensus::new(&case.graph, &case.partitioning);
        let mut scores = BTreeMap::new();
        for part in 0..case.partitioning.k() as u32 {
            let mut model = ctx.model(&cache);
            let vm = VisitorMatrix::build(&mut model, &case.partitioning, &census, part).unwrap();
            for &u in vm.per_vertex.keys() {
                if let Ok(e) = vm.extroversion(u) {
                    scores.insert(u, e);
                }
            }
        }
        for (u, e) in scores {
            let want = oracle_score(&case.graph, &case.partitioning, &oracle, u, max_len);
            prop_assert!((e - want.extroversion()).abs() < 1e-9);
        }
    }
}
