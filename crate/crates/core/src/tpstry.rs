//! Traversal pattern summary trie.
//!
//! Every label string expanded from a workload query is inserted into a
//! prefix trie. Each node remembers which queries can produce its prefix and
//! carries a probability label `p(n)`: the frequency-weighted chance that a
//! traversal spells that prefix. Within one query the mass at a node splits
//! uniformly over the query's options there, where an option is either a
//! child tagged with the query or stopping, if one of the query's strings
//! ends at the node.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{Label, Vocabulary};
use crate::rpq::{ExpandError, LabelWord, QueryExpr, QueryHash};

/// Tolerance used when comparing probabilities between trie versions.
pub const DIFF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrieError {
    #[error("no frequency for query {0}")]
    MissingFrequency(QueryHash),
    #[error("prefix {0} has zero probability; recompute the trie")]
    ZeroProbabilityPrefix(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Node {
    children: BTreeMap<Label, Node>,
    tags: BTreeSet<QueryHash>,
    terminal: BTreeSet<QueryHash>,
    prob: f64,
}

impl Node {
    fn strip(&mut self, q: QueryHash) {
        self.tags.remove(&q);
        self.terminal.remove(&q);
        self.children.retain(|_, child| {
            child.strip(q);
            !child.tags.is_empty()
        });
    }

    fn depth(&self) -> usize {
        self.children.values().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    fn count(&self) -> usize {
        1 + self.children.values().map(Node::count).sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub struct Tpstry {
    vocabulary: Vocabulary,
    root: Node,
    max_depth: usize,
}

/// Frozen `path -> p(n)` pairs taken at a swapping iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrieSnapshot(BTreeMap<Vec<Label>, f64>);

impl TrieSnapshot {
    pub fn get(&self, path: &[Label]) -> Option<f64> {
        self.0.get(path).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Tpstry {
    /// Empty trie whose label ids agree with `vocabulary` (normally the graph's).
    pub fn new(vocabulary: Vocabulary) -> Self {
        let root = Node {
            prob: 1.0,
            ..Node::default()
        };
        Self {
            vocabulary,
            root,
            max_depth: 0,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Longest inserted string.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Number of nodes excluding the root.
    pub fn node_count(&self) -> usize {
        self.root.count() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.root.children.is_empty()
    }

    /// Queries currently tagged anywhere in the trie.
    pub fn queries(&self) -> &BTreeSet<QueryHash> {
        &self.root.tags
    }

    /// Inserts the strings of query `q`, tagging every node on their paths.
    /// The empty string adds nothing. Probabilities are not recomputed.
    pub fn insert_query(&mut self, q: QueryHash, strings: &BTreeSet<LabelWord>) {
        for word in strings.iter().filter(|w| !w.is_empty()) {
            let labels: Vec<Label> = word.iter().map(|n| self.vocabulary.intern(n)).collect();
            self.root.tags.insert(q);
            let mut node = &mut self.root;
            for &l in &labels {
                node = node.children.entry(l).or_default();
                node.tags.insert(q);
            }
            node.terminal.insert(q);
            self.max_depth = self.max_depth.max(labels.len());
        }
    }

    /// Expands `expr` and inserts it; returns its hash.
    pub fn insert_expr(&mut self, expr: &QueryExpr, star_cap: usize) -> Result<QueryHash, ExpandError> {
        let h = expr.canonical_hash();
        let strings = expr.expand(star_cap)?;
        self.insert_query(h, &strings);
        Ok(h)
    }

    /// Strips `q` everywhere and prunes nodes left without any tag.
    pub fn remove_query(&mut self, q: QueryHash) {
        self.root.strip(q);
        self.max_depth = self.root.depth();
    }

    /// Recomputes `p(n)` on every node from per-query relative frequencies.
    pub fn recompute_probabilities(&mut self, freqs: &BTreeMap<QueryHash, f64>) -> Result<(), TrieError> {
        for q in &self.root.tags {
            if !freqs.contains_key(q) {
                return Err(TrieError::MissingFrequency(*q));
            }
        }
        let conditional: BTreeMap<QueryHash, f64> = self.root.tags.iter().map(|&q| (q, 1.0)).collect();
        let options = option_counts(&self.root);
        for child in self.root.children.values_mut() {
            assign_probabilities(child, &conditional, &options, freqs);
        }
        self.root.prob = 1.0;
        Ok(())
    }

    fn node(&self, prefix: &[Label]) -> Option<&Node> {
        let mut node = &self.root;
        for l in prefix {
            node = node.children.get(l)?;
        }
        Some(node)
    }

    pub fn contains_prefix(&self, prefix: &[Label]) -> bool {
        self.node(prefix).is_some()
    }

    /// `p(n)` of the node at `prefix`, if it exists.
    pub fn probability(&self, prefix: &[Label]) -> Option<f64> {
        self.node(prefix).map(|n| n.prob)
    }

    pub fn tags(&self, prefix: &[Label]) -> Option<&BTreeSet<QueryHash>> {
        self.node(prefix).map(|n| &n.tags)
    }

    /// Child labels of the node at `prefix` with their probability
    /// conditioned on having reached it. Missing prefix gives an empty list.
    pub fn next_label_probs(&self, prefix: &[Label]) -> Result<Vec<(Label, f64)>, TrieError> {
        let Some(node) = self.node(prefix) else {
            return Ok(Vec::new());
        };
        if node.children.is_empty() {
            return Ok(Vec::new());
        }
        if node.prob <= 0.0 {
            return Err(TrieError::ZeroProbabilityPrefix(self.vocabulary.render(prefix)));
        }
        Ok(node.children.iter().map(|(&l, c)| (l, c.prob / node.prob)).collect())
    }

    /// Every node path (excluding the root) with its probability, depth first.
    pub fn paths(&self) -> Vec<(Vec<Label>, f64)> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        collect_paths(&self.root, &mut stack, &mut out);
        out
    }

    pub fn snapshot(&self) -> TrieSnapshot {
        TrieSnapshot(self.paths().into_iter().collect())
    }

    /// Paths whose probability changed, appeared or vanished since `snap`.
    pub fn diff_since(&self, snap: &TrieSnapshot) -> BTreeSet<Vec<Label>> {
        let now = self.snapshot();
        let mut changed = BTreeSet::new();
        for (path, p) in &now.0 {
            match snap.0.get(path) {
                Some(old) if (old - p).abs() <= DIFF_TOLERANCE => {}
                _ => {
                    changed.insert(path.clone());
                }
            }
        }
        for path in snap.0.keys() {
            if !now.0.contains_key(path) {
                changed.insert(path.clone());
            }
        }
        changed
    }

    /// One line per node, depth first with children in label-name order:
    /// `path<TAB>p(n)<TAB>tag,tag,...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack = Vec::new();
        self.dump_node(&self.root, &mut stack, &mut out);
        out
    }

    fn dump_node(&self, node: &Node, stack: &mut Vec<Label>, out: &mut String) {
        let mut children: Vec<(&Label, &Node)> = node.children.iter().collect();
        children.sort_by(|a, b| self.vocabulary.name(*a.0).cmp(self.vocabulary.name(*b.0)));
        for (&l, child) in children {
            stack.push(l);
            let tags: Vec<String> = child.tags.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.vocabulary.render(stack),
                child.prob,
                tags.join(",")
            );
            self.dump_node(child, stack, out);
            stack.pop();
        }
    }
}

/// Options per query at `node`: tagged children plus one if a string ends here.
fn option_counts(node: &Node) -> BTreeMap<QueryHash, usize> {
    let mut counts: BTreeMap<QueryHash, usize> = BTreeMap::new();
    for child in node.children.values() {
        for &q in &child.tags {
            *counts.entry(q).or_default() += 1;
        }
    }
    for &q in &node.terminal {
        *counts.entry(q).or_default() += 1;
    }
    counts
}

fn assign_probabilities(
    node: &mut Node,
    parent_conditional: &BTreeMap<QueryHash, f64>,
    parent_options: &BTreeMap<QueryHash, usize>,
    freqs: &BTreeMap<QueryHash, f64>,
) {
    // Pr(prefix | Q) = Pr(parent | Q) / (number of Q's options at the parent).
    let conditional: BTreeMap<QueryHash, f64> = node
        .tags
        .iter()
        .map(|&q| {
            let parent = parent_conditional.get(&q).copied().unwrap_or(0.0);
            let options = parent_options.get(&q).copied().unwrap_or(1).max(1);
            (q, parent / options as f64)
        })
        .collect();
    node.prob = conditional.iter().map(|(q, c)| c * freqs[q]).sum();
    let options = option_counts(node);
    for child in node.children.values_mut() {
        assign_probabilities(child, &conditional, &options, freqs);
    }
}

fn collect_paths(node: &Node, stack: &mut Vec<Label>, out: &mut Vec<(Vec<Label>, f64)>) {
    for (&l, child) in &node.children {
        stack.push(l);
        out.push((stack.clone(), child.prob));
        collect_paths(child, stack, out);
        stack.pop();
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rpq::parse;
    use proptest::prelude::*;

    pub(crate) const Q1: &str = "a.(b|c).(c|d)";
    pub(crate) const Q2: &str = "(c|a).c.a";

    pub(crate) fn vocab() -> Vocabulary {
        let mut v = Vocabulary::new();
        for l in ["a", "b", "c", "d"] {
            v.intern(l);
        }
        v
    }

    fn labels(t: &Tpstry, s: &str) -> Vec<Label> {
        s.chars().map(|c| t.vocabulary().get(&c.to_string()).unwrap()).collect()
    }

    /// The two-query trie with both queries at frequency 0.5.
    pub(crate) fn example_trie(v: Vocabulary) -> Tpstry {
        let mut t = Tpstry::new(v);
        let h1 = t.insert_expr(&parse(Q1).unwrap(), 3).unwrap();
        let h2 = t.insert_expr(&parse(Q2).unwrap(), 3).unwrap();
        t.recompute_probabilities(&BTreeMap::from([(h1, 0.5), (h2, 0.5)]))
            .unwrap();
        t
    }

    fn node_set(t: &Tpstry) -> BTreeSet<String> {
        t.paths()
            .iter()
            .map(|(p, _)| t.vocabulary().render(p).replace('.', ""))
            .collect()
    }

    #[test]
    fn insertion_tags_every_prefix() {
        let mut t = Tpstry::new(vocab());
        let q1 = parse(Q1).unwrap();
        let h1 = t.insert_expr(&q1, 3).unwrap();
        let expect: BTreeSet<String> = ["a", "ab", "ac", "abc", "abd", "acc", "acd"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(node_set(&t), expect);
        for (p, _) in t.paths() {
            assert_eq!(t.tags(&p).unwrap(), &BTreeSet::from([h1]));
        }
        let before = t.dump();
        t.insert_expr(&q1, 3).unwrap();
        assert_eq!(t.dump(), before);

        let h2 = t.insert_expr(&parse(Q2).unwrap(), 3).unwrap();
        assert_eq!(t.tags(&labels(&t, "ac")).unwrap(), &BTreeSet::from([h1, h2]));
        assert_eq!(t.tags(&labels(&t, "a")).unwrap(), &BTreeSet::from([h1, h2]));
        for new in ["c", "cc", "cca", "aca"] {
            assert_eq!(t.tags(&labels(&t, new)).unwrap(), &BTreeSet::from([h2]), "{new}");
        }
        assert_eq!(t.max_depth(), 3);
    }

    #[test]
    fn removal_restores_previous_trie() {
        let mut only_q1 = Tpstry::new(vocab());
        only_q1.insert_expr(&parse(Q1).unwrap(), 3).unwrap();

        let mut both = only_q1.clone();
        let h2 = both.insert_expr(&parse(Q2).unwrap(), 3).unwrap();
        both.remove_query(h2);
        assert_eq!(both.dump(), only_q1.dump());
        assert_eq!(both.root, only_q1.root);

        both.remove_query(QueryHash(12345));
        assert_eq!(both.root, only_q1.root);

        let h1 = parse(Q1).unwrap().canonical_hash();
        both.remove_query(h1);
        assert!(both.is_empty());
        assert_eq!(both.node_count(), 0);
        assert_eq!(both.max_depth(), 0);
    }

    #[test]
    fn worked_probabilities() {
        let t = example_trie(vocab());
        let p = |s: &str| t.probability(&labels(&t, s)).unwrap();
        assert_eq!(p("a"), 0.75);
        assert_eq!(p("ab"), 0.25);
        let expected = [
            ("abc", 0.125),
            ("abd", 0.125),
            ("c", 0.25),
            ("ac", 0.5),
            ("cc", 0.25),
            ("aca", 0.25),
            ("cca", 0.25),
            ("acc", 0.125),
            ("acd", 0.125),
        ];
        for (s, e) in expected {
            assert!((p(s) - e).abs() < 1e-9, "p({s}) = {}", p(s));
        }
    }

    #[test]
    fn missing_frequency_is_reported() {
        let mut t = Tpstry::new(vocab());
        let h = t.insert_expr(&parse(Q1).unwrap(), 3).unwrap();
        assert_eq!(
            t.recompute_probabilities(&BTreeMap::new()),
            Err(TrieError::MissingFrequency(h))
        );
    }

    #[test]
    fn next_label_conditionals() {
        let t = example_trie(vocab());
        let named = |s: &str| -> BTreeMap<String, f64> {
            t.next_label_probs(&labels(&t, s))
                .unwrap()
                .into_iter()
                .map(|(l, p)| (t.vocabulary().name(l).to_string(), p))
                .collect()
        };
        let ab = named("ab");
        assert!((ab["c"] - 0.5).abs() < 1e-12 && (ab["d"] - 0.5).abs() < 1e-12);
        let a = named("a");
        assert!((a["b"] - 1.0 / 3.0).abs() < 1e-12);
        assert!((a["c"] - 2.0 / 3.0).abs() < 1e-12);
        let mut v = vocab();
        let z = v.intern("z");
        let t = example_trie(v);
        assert!(t.next_label_probs(&[z, z, z]).unwrap().is_empty());
    }

    #[test]
    fn zero_probability_prefix() {
        let mut t = Tpstry::new(vocab());
        let h1 = t.insert_expr(&parse(Q1).unwrap(), 3).unwrap();
        t.recompute_probabilities(&BTreeMap::from([(h1, 0.0)])).unwrap();
        assert!(matches!(
            t.next_label_probs(&labels(&t, "a")),
            Err(TrieError::ZeroProbabilityPrefix(_))
        ));
    }

    #[test]
    fn terminal_strings_keep_stop_mass() {
        let mut t = Tpstry::new(vocab());
        let h = t.insert_expr(&parse("a.b*").unwrap(), 2).unwrap();
        t.recompute_probabilities(&BTreeMap::from([(h, 1.0)])).unwrap();
        // Strings a, ab, abb: at each node the query may stop or continue.
        assert_eq!(t.probability(&labels(&t, "a")), Some(1.0));
        assert_eq!(t.probability(&labels(&t, "ab")), Some(0.5));
        assert_eq!(t.probability(&labels(&t, "abb")), Some(0.25));
    }

    #[test]
    fn diff_reports_changes() {
        let t = example_trie(vocab());
        let snap = t.snapshot();
        assert!(t.diff_since(&snap).is_empty());

        let mut shifted = t.clone();
        let h1 = parse(Q1).unwrap().canonical_hash();
        let h2 = parse(Q2).unwrap().canonical_hash();
        shifted
            .recompute_probabilities(&BTreeMap::from([(h1, 1.0), (h2, 0.0)]))
            .unwrap();
        let changed = shifted.diff_since(&snap);
        assert!(changed.contains(&labels(&t, "a")));
        assert_eq!(shifted.probability(&labels(&t, "a")), Some(1.0));
        // abc carries only Q1 mass in both versions: 0.125 -> 0.25.
        assert!(changed.contains(&labels(&t, "abc")));

        let mut removed = t.clone();
        removed.remove_query(h2);
        let gone = removed.diff_since(&snap);
        for s in ["c", "cc", "cca", "aca"] {
            assert!(gone.contains(&labels(&t, s)), "{s}");
        }
    }

    #[test]
    fn dump_format() {
        let t = example_trie(vocab());
        let dump = t.dump();
        let first = dump.lines().next().unwrap();
        let fields: Vec<&str> = first.split('\t').collect();
        assert_eq!(fields[0], "a");
        assert_eq!(fields[1], "0.75");
        assert_eq!(fields[2].split(',').count(), 2);
        assert_eq!(dump.lines().count(), 11);
        assert!(dump.lines().any(|l| l.starts_with("a.c.a\t0.25\t")));
    }

    fn arb_query() -> impl Strategy<Value = QueryExpr> {
        let leaf = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(QueryExpr::atom);
        leaf.prop_recursive(3, 10, 2, |inner| {
            prop_oneof![
                3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| QueryExpr::concat(a, b)),
                2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| QueryExpr::alt(a, b)),
                1 => inner.prop_map(QueryExpr::star),
            ]
        })
    }

    fn check_mass(node: &Node) -> bool {
        let sum: f64 = node.children.values().map(|c| c.prob).sum();
        sum <= node.prob + 1e-9 && node.children.values().all(check_mass)
    }

    proptest! {
        #[test]
        fn probability_invariants(qs in prop::collection::vec((arb_query(), 1u32..10), 1..4)) {
            let mut t = Tpstry::new(vocab());
            let mut weights = BTreeMap::new();
            for (q, w) in &qs {
                let h = t.insert_expr(q, 2).unwrap();
                *weights.entry(h).or_insert(0.0) += *w as f64;
            }
            let total: f64 = weights.values().sum();
            let freqs: BTreeMap<_, _> = weights.into_iter().map(|(h, w)| (h, w / total)).collect();
            t.recompute_probabilities(&freqs).unwrap();
            prop_assert!(check_mass(&t.root));
            if !t.is_empty() {
                let live: f64 = freqs.iter().filter(|(h, _)| t.queries().contains(h)).map(|(_, f)| f).sum();
                let root_sum: f64 = t.root.children.values().map(|c| c.prob).sum();
                prop_assert!((root_sum - live).abs() < 1e-9);
            }
            for (p, _) in t.paths() {
                prop_assert!(!t.tags(&p).unwrap().is_empty());
                if let Ok(next) = t.next_label_probs(&p) {
                    prop_assert!(next.iter().all(|(_, q)| (0.0..=1.0 + 1e-9).contains(q)));
                    prop_assert!(next.iter().map(|(_, q)| q).sum::<f64>() <= 1.0 + 1e-9);
                }
            }
            prop_assert!(t.max_depth() <= 8);
        }

        #[test]
        fn insert_then_remove_is_identity(a in arb_query(), b in arb_query()) {
            let mut t = Tpstry::new(vocab());
            t.insert_expr(&a, 2).unwrap();
            let before = t.root.clone();
            let hb = b.canonical_hash();
            if hb != a.canonical_hash() {
                t.insert_expr(&b, 2).unwrap();
                t.remove_query(hb);
                prop_assert_eq!(t.root, before);
            }
        }
    }
}
