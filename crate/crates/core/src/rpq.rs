//! Regular path queries over vertex labels.
//!
//! Text syntax: identifiers are atoms, `.` concatenates, `+` and `|` are
//! union and alternation (equal precedence, left associative), postfix `*`
//! is Kleene star and binds tightest. Parentheses group.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default bound on the number of strings an expression may expand to.
pub const DEFAULT_EXPANSION_LIMIT: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at byte {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExpandError {
    #[error("expansion exceeds {limit} strings")]
    ExpansionOverflow { limit: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("timestamp {got} precedes last recorded timestamp {last}")]
    NonMonotoneTimestamp { last: u64, got: u64 },
}

/// Serialized as its text form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum QueryExpr {
    Atom(String),
    Concat(Box<QueryExpr>, Box<QueryExpr>),
    Union(Box<QueryExpr>, Box<QueryExpr>),
    Alt(Box<QueryExpr>, Box<QueryExpr>),
    Star(Box<QueryExpr>),
}

/// Stable digest of a query's syntax tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct QueryHash(pub u64);

impl fmt::Display for QueryHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl From<QueryHash> for String {
    fn from(h: QueryHash) -> String {
        h.to_string()
    }
}

impl TryFrom<String> for QueryHash {
    type Error = std::num::ParseIntError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        u64::from_str_radix(&s, 16).map(QueryHash)
    }
}

/// A label string produced by expansion: a sequence of label names.
pub type LabelWord = Vec<String>;

impl QueryExpr {
    pub fn atom(name: &str) -> Self {
        QueryExpr::Atom(name.to_string())
    }

    pub fn concat(a: QueryExpr, b: QueryExpr) -> Self {
        QueryExpr::Concat(Box::new(a), Box::new(b))
    }

    pub fn union(a: QueryExpr, b: QueryExpr) -> Self {
        QueryExpr::Union(Box::new(a), Box::new(b))
    }

    pub fn alt(a: QueryExpr, b: QueryExpr) -> Self {
        QueryExpr::Alt(Box::new(a), Box::new(b))
    }

    pub fn star(e: QueryExpr) -> Self {
        QueryExpr::Star(Box::new(e))
    }

    /// Digest of the fully parenthesised prefix form, so structurally
    /// distinct trees never share an input.
    pub fn canonical_hash(&self) -> QueryHash {
        let mut buf = String::new();
        self.write_prefix(&mut buf);
        let digest = Sha256::digest(buf.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        QueryHash(u64::from_be_bytes(bytes))
    }

    fn write_prefix(&self, out: &mut String) {
        match self {
            QueryExpr::Atom(a) => {
                out.push_str("(atom ");
                out.push_str(a);
                out.push(')');
            }
            QueryExpr::Concat(a, b) => binary_prefix(out, "cat", a, b),
            QueryExpr::Union(a, b) => binary_prefix(out, "union", a, b),
            QueryExpr::Alt(a, b) => binary_prefix(out, "alt", a, b),
            QueryExpr::Star(e) => {
                out.push_str("(star ");
                e.write_prefix(out);
                out.push(')');
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            QueryExpr::Union(..) | QueryExpr::Alt(..) => 0,
            QueryExpr::Concat(..) => 1,
            QueryExpr::Star(..) => 2,
            QueryExpr::Atom(_) => 3,
        }
    }

    /// Expands the expression into the set of label strings it denotes,
    /// truncating each Kleene star at `star_cap` repetitions.
    pub fn expand(&self, star_cap: usize) -> Result<BTreeSet<LabelWord>, ExpandError> {
        self.expand_bounded(star_cap, DEFAULT_EXPANSION_LIMIT)
    }

    pub fn expand_bounded(&self, star_cap: usize, limit: usize) -> Result<BTreeSet<LabelWord>, ExpandError> {
        let check = |set: BTreeSet<LabelWord>| {
            if set.len() > limit {
                Err(ExpandError::ExpansionOverflow { limit })
            } else {
                Ok(set)
            }
        };
        match self {
            QueryExpr::Atom(a) => Ok(BTreeSet::from([vec![a.clone()]])),
            QueryExpr::Union(a, b) | QueryExpr::Alt(a, b) => {
                let mut left = a.expand_bounded(star_cap, limit)?;
                left.extend(b.expand_bounded(star_cap, limit)?);
                check(left)
            }
            QueryExpr::Concat(a, b) => {
                let left = a.expand_bounded(star_cap, limit)?;
                let right = b.expand_bounded(star_cap, limit)?;
                if left.len().saturating_mul(right.len()) > limit.saturating_mul(64) {
                    return Err(ExpandError::ExpansionOverflow { limit });
                }
                check(append_all(&left, &right))
            }
            QueryExpr::Star(e) => {
                let base = e.expand_bounded(star_cap, limit)?;
                let mut out = BTreeSet::from([Vec::new()]);
                let mut power = BTreeSet::from([Vec::new()]);
                for _ in 0..star_cap {
                    power = append_all(&power, &base);
                    out.extend(power.iter().cloned());
                    if out.len() > limit {
                        return Err(ExpandError::ExpansionOverflow { limit });
                    }
                }
                Ok(out)
            }
        }
    }
}

fn binary_prefix(out: &mut String, tag: &str, a: &QueryExpr, b: &QueryExpr) {
    out.push('(');
    out.push_str(tag);
    out.push(' ');
    a.write_prefix(out);
    out.push(' ');
    b.write_prefix(out);
    out.push(')');
}

fn append_all(left: &BTreeSet<LabelWord>, right: &BTreeSet<LabelWord>) -> BTreeSet<LabelWord> {
    let mut out = BTreeSet::new();
    for x in left {
        for y in right {
            let mut w = x.clone();
            w.extend(y.iter().cloned());
            out.insert(w);
        }
    }
    out
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let operand = |f: &mut fmt::Formatter<'_>, e: &QueryExpr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            QueryExpr::Atom(a) => write!(f, "{a}"),
            QueryExpr::Concat(a, b) => {
                operand(f, a, 1)?;
                f.write_str(".")?;
                operand(f, b, 2)
            }
            QueryExpr::Union(a, b) | QueryExpr::Alt(a, b) => {
                let op = if matches!(self, QueryExpr::Union(..)) { "+" } else { "|" };
                operand(f, a, 0)?;
                f.write_str(op)?;
                operand(f, b, 1)
            }
            QueryExpr::Star(e) => {
                operand(f, e, 3)?;
                f.write_str("*")
            }
        }
    }
}

impl From<QueryExpr> for String {
    fn from(q: QueryExpr) -> String {
        q.to_string()
    }
}

impl TryFrom<String> for QueryExpr {
    type Error = SyntaxError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse(&s)
    }
}

impl std::str::FromStr for QueryExpr {
    type Err = SyntaxError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

pub fn parse(text: &str) -> Result<QueryExpr, SyntaxError> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let expr = parser.alternation()?;
    parser.skip_ws();
    if parser.pos < parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'s> {
    src: &'s [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> SyntaxError {
        SyntaxError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn alternation(&mut self) -> Result<QueryExpr, SyntaxError> {
        let mut left = self.concatenation()?;
        while let Some(op @ (b'+' | b'|')) = self.peek() {
            self.pos += 1;
            let right = self.concatenation()?;
            left = if op == b'+' {
                QueryExpr::union(left, right)
            } else {
                QueryExpr::alt(left, right)
            };
        }
        Ok(left)
    }

    fn concatenation(&mut self) -> Result<QueryExpr, SyntaxError> {
        let mut left = self.starred()?;
        while self.peek() == Some(b'.') {
            self.pos += 1;
            let right = self.starred()?;
            left = QueryExpr::concat(left, right);
        }
        Ok(left)
    }

    fn starred(&mut self) -> Result<QueryExpr, SyntaxError> {
        let mut e = self.primary()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            e = QueryExpr::star(e);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<QueryExpr, SyntaxError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.alternation()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if is_ident_byte(c) => {
                let start = self.pos;
                while self.pos < self.src.len() && is_ident_byte(self.src[self.pos]) {
                    self.pos += 1;
                }
                // Identifier bytes are ASCII, so the slice is valid UTF-8.
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(QueryExpr::atom(name))
            }
            Some(_) => Err(self.error("expected label or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

fn is_ident_byte(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'-' || c == b':'
}

/// Sliding-window relative frequency tracking.
pub trait FrequencyTracker: fmt::Debug + Send {
    fn record(&mut self, q: QueryHash, t: u64);
    fn frequencies(&self, now: u64) -> BTreeMap<QueryHash, f64>;
}

/// Exact per-event window.
#[derive(Debug, Clone)]
pub struct ExactWindow {
    window: u64,
    events: VecDeque<(QueryHash, u64)>,
}

impl ExactWindow {
    pub fn new(window: u64) -> Self {
        Self {
            window,
            events: VecDeque::new(),
        }
    }
}

fn in_window(window: u64, now: u64, t: u64) -> bool {
    t <= now && now - t < window
}

impl FrequencyTracker for ExactWindow {
    fn record(&mut self, q: QueryHash, t: u64) {
        self.events.push_back((q, t));
        // Retain one full window behind the newest event; older ones can never count.
        while let Some(&(_, old)) = self.events.front() {
            if t.saturating_sub(old) >= self.window {
                self.events.pop_front();
            } else {
                break;
            }
        }
    }

    fn frequencies(&self, now: u64) -> BTreeMap<QueryHash, f64> {
        let mut counts: BTreeMap<QueryHash, u64> = BTreeMap::new();
        for &(q, t) in &self.events {
            if in_window(self.window, now, t) {
                *counts.entry(q).or_default() += 1;
            }
        }
        normalize(counts)
    }
}

/// Approximate window: counts aggregated into fixed-width time buckets, so
/// memory is bounded by the bucket count rather than the event rate.
/// Expiry happens a whole bucket at a time.
#[derive(Debug, Clone)]
pub struct BucketedWindow {
    window: u64,
    width: u64,
    buckets: VecDeque<(u64, BTreeMap<QueryHash, u64>)>,
}

impl BucketedWindow {
    pub fn new(window: u64, buckets: u64) -> Self {
        let width = (window / buckets.max(1)).max(1);
        Self {
            window,
            width,
            buckets: VecDeque::new(),
        }
    }
}

impl FrequencyTracker for BucketedWindow {
    fn record(&mut self, q: QueryHash, t: u64) {
        let start = t - t % self.width;
        match self.buckets.back_mut() {
            Some((s, counts)) if *s == start => *counts.entry(q).or_default() += 1,
            _ => self.buckets.push_back((start, BTreeMap::from([(q, 1)]))),
        }
        while let Some(&(s, _)) = self.buckets.front() {
            if t.saturating_sub(s) >= self.window + self.width {
                self.buckets.pop_front();
            } else {
                break;
            }
        }
    }

    fn frequencies(&self, now: u64) -> BTreeMap<QueryHash, f64> {
        let mut counts: BTreeMap<QueryHash, u64> = BTreeMap::new();
        for (start, bucket) in &self.buckets {
            if in_window(self.window, now, *start) {
                for (&q, &c) in bucket {
                    *counts.entry(q).or_default() += c;
                }
            }
        }
        normalize(counts)
    }
}

fn normalize(counts: BTreeMap<QueryHash, u64>) -> BTreeMap<QueryHash, f64> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return BTreeMap::new();
    }
    counts.into_iter().map(|(q, c)| (q, c as f64 / total as f64)).collect()
}

/// Stream of query occurrences with a registry of the expressions seen.
#[derive(Debug)]
pub struct Workload {
    tracker: Box<dyn FrequencyTracker>,
    registry: HashMap<QueryHash, QueryExpr>,
    last: Option<u64>,
}

impl Workload {
    pub fn new(window_length: u64) -> Self {
        Self::with_tracker(Box::new(ExactWindow::new(window_length)))
    }

    pub fn with_tracker(tracker: Box<dyn FrequencyTracker>) -> Self {
        Self {
            tracker,
            registry: HashMap::new(),
            last: None,
        }
    }

    pub fn record_query(&mut self, q: &QueryExpr, t: u64) -> Result<QueryHash, WorkloadError> {
        if let Some(last) = self.last {
            if t < last {
                return Err(WorkloadError::NonMonotoneTimestamp { last, got: t });
            }
        }
        self.last = Some(t);
        let h = q.canonical_hash();
        self.registry.entry(h).or_insert_with(|| q.clone());
        self.tracker.record(h, t);
        Ok(h)
    }

    /// Relative frequencies of queries in the window ending at `now`.
    pub fn frequencies(&self, now: u64) -> BTreeMap<QueryHash, f64> {
        self.tracker.frequencies(now)
    }

    pub fn query(&self, h: QueryHash) -> Option<&QueryExpr> {
        self.registry.get(&h)
    }

    pub fn registry(&self) -> &HashMap<QueryHash, QueryExpr> {
        &self.registry
    }
}
