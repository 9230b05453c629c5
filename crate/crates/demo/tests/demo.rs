use repart_demo::{enhance_generated, parse_workload, score_example, trie_nodes};

const WORKLOAD: &str = "0.5\ta.(b|c).(c|d)\n0.5\t(c|a).c.a\n";

fn prob(nodes: &[repart_demo::TrieNode], path: &str) -> f64 {
    nodes.iter().find(|n| n.path == path).unwrap().probability
}

#[test]
fn trie_matches_hand_values() {
    let nodes = trie_nodes(WORKLOAD).unwrap();
    assert!((prob(&nodes, "a") - 0.75).abs() < 1e-12);
    assert!((prob(&nodes, "a.b") - 0.25).abs() < 1e-12);
}

#[test]
fn bare_lines_get_unit_frequency() {
    let w = parse_workload("a.b\n\nc\n").unwrap();
    assert_eq!(w.len(), 2);
    assert!(w.iter().all(|(_, f)| *f == 0.5));
    assert!(parse_workload("\n").is_err());
    assert!(parse_workload("a..b").is_err());
}

#[test]
fn example_scores_track_the_split() {
    let ab = score_example(&[0, 0, 1, 0, 1, 1], "c.(b|d)").unwrap();
    assert_eq!(ab.total_ipt, 4);
    let v1 = score_example(&[0, 1, 0, 1, 1, 0], "c.(b|d)").unwrap();
    assert_eq!(v1.total_ipt, 2);
    let three = score_example(&[0, 0, 1, 0, 1, 1], WORKLOAD).unwrap();
    let v3 = &three.vertices[2];
    assert_eq!(v3.label, "c");
    assert!((v3.extroversion.unwrap() - 0.125).abs() < 1e-9, "{v3:?}");
    assert!(score_example(&[0, 1], WORKLOAD).is_err());
}

#[test]
fn enhancement_lowers_ipt_on_small_graph() {
    let view = enhance_generated(400, 4, 0.25, 7, "a.b.c\nb.c.d\nc.(d|a)").unwrap();
    assert_eq!(view.vertices, 400);
    assert!(!view.steps.is_empty());
    let last = view.steps.last().unwrap().ipt;
    assert!(last < view.initial_ipt, "{} -> {}", view.initial_ipt, last);
}
