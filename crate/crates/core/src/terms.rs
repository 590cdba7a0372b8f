//! Term bags over unigrams, n-grams and dependency subtrees, plus document
//! frequency statistics for BM25 and idf token weighting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::ParseRecord;
use crate::error::{Error, Result};

/// Joins the parts of a multi-token term key.
pub const TERM_SEPARATOR: char = '\u{1f}';

/// Largest subtree size enumerated.
pub const MAX_SUBTREE_SIZE: usize = 4;

/// Parses longer than this are rejected by [`subtree_bag`].
pub const MAX_PARSE_TOKENS: usize = 512;

pub const DEFAULT_IDF_EPSILON: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermScheme {
    Unigram,
    Ngram { n_max: usize },
    DepSubtree { s_max: usize },
}

impl fmt::Display for TermScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermScheme::Unigram => f.write_str("unigram"),
            TermScheme::Ngram { n_max } => write!(f, "ngram{n_max}"),
            TermScheme::DepSubtree { s_max } => write!(f, "depst{s_max}"),
        }
    }
}

impl FromStr for TermScheme {
    type Err = Error;

    /// Accepts `unigram`, `ngram<N>` / `<N>gram`, and `depst<N>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown term scheme {s:?}"));
        let num = |digits: &str| digits.parse::<usize>().map_err(|_| bad());
        let s = s.trim().to_ascii_lowercase();
        if s == "unigram" || s == "1gram" {
            Ok(TermScheme::Unigram)
        } else if let Some(n) = s.strip_prefix("ngram") {
            Ok(TermScheme::Ngram { n_max: num(n)? })
        } else if let Some(n) = s.strip_suffix("gram") {
            Ok(TermScheme::Ngram { n_max: num(n)? })
        } else if let Some(n) = s.strip_prefix("depst") {
            Ok(TermScheme::DepSubtree { s_max: num(n)? })
        } else {
            Err(bad())
        }
    }
}

/// Multiset of canonical term keys under one scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermBag {
    scheme: TermScheme,
    counts: BTreeMap<String, u32>,
}

impl TermBag {
    pub fn empty(scheme: TermScheme) -> Self {
        Self {
            scheme,
            counts: BTreeMap::new(),
        }
    }

    pub fn scheme(&self) -> TermScheme {
        self.scheme
    }

    fn add(&mut self, key: String) {
        *self.counts.entry(key).or_insert(0) += 1;
    }

    /// Occurrences of `term`, 0 if absent.
    pub fn count(&self, term: &str) -> u32 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.counts.contains_key(term)
    }

    /// Sum of all counts.
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Terms in key order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.counts.iter().map(|(k, &c)| (k.as_str(), c))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> + '_ {
        self.counts.keys().map(String::as_str)
    }

    /// Adds every term of `other` into this bag.
    pub fn merge(&mut self, other: &TermBag) -> Result<()> {
        if self.scheme != other.scheme {
            return Err(Error::SchemeMismatch(self.scheme.to_string(), other.scheme.to_string()));
        }
        for (k, c) in other.iter() {
            *self.counts.entry(k.to_string()).or_insert(0) += c;
        }
        Ok(())
    }
}

/// Splits text into word tokens and single punctuation characters.
///
/// Used for lexical terms when no parse is available for a text.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

pub fn unigram_bag<S: AsRef<str>>(tokens: &[S]) -> TermBag {
    let mut bag = TermBag::empty(TermScheme::Unigram);
    for t in tokens {
        bag.add(t.as_ref().to_lowercase());
    }
    bag
}

/// All contiguous n-grams with `1 <= n <= n_max`, lowercased.
pub fn ngram_bag<S: AsRef<str>>(tokens: &[S], n_max: usize) -> Result<TermBag> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("n-gram size must be at least 1".into()));
    }
    let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
    let mut bag = TermBag::empty(TermScheme::Ngram { n_max });
    for n in 1..=n_max.min(lower.len()) {
        for window in lower.windows(n) {
            bag.add(join_key(window.iter().map(String::as_str)));
        }
    }
    Ok(bag)
}

fn join_key<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    let mut key = String::new();
    for (i, p) in parts.enumerate() {
        if i > 0 {
            key.push(TERM_SEPARATOR);
        }
        key.push_str(p);
    }
    key
}

/// Every connected subgraph of the dependency tree with at most `s_max`
/// nodes, as sorted token-index lists.
///
/// Each subgraph is produced exactly once, rooted at its topmost node: the
/// search grows a node set downward from that root, and a frontier node that
/// is passed over is never reconsidered on the same branch.
pub fn connected_subtrees(parse: &ParseRecord, s_max: usize) -> Result<Vec<Vec<usize>>> {
    check_subtree_args(parse, s_max)?;
    let children = parse.children();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(s_max);
    for top in 0..parse.len() {
        current.push(top);
        grow(&children, &mut current, &children[top], s_max, &mut out);
        current.pop();
    }
    Ok(out)
}

fn grow(
    children: &[Vec<usize>],
    current: &mut Vec<usize>,
    frontier: &[usize],
    s_max: usize,
    out: &mut Vec<Vec<usize>>,
) {
    let mut nodes = current.clone();
    nodes.sort_unstable();
    out.push(nodes);
    if current.len() == s_max {
        return;
    }
    for (i, &next) in frontier.iter().enumerate() {
        let mut rest: Vec<usize> = frontier[i + 1..].to_vec();
        rest.extend_from_slice(&children[next]);
        current.push(next);
        grow(children, current, &rest, s_max, out);
        current.pop();
    }
}

fn check_subtree_args(parse: &ParseRecord, s_max: usize) -> Result<()> {
    if !(1..=MAX_SUBTREE_SIZE).contains(&s_max) {
        return Err(Error::InvalidParameter(format!(
            "subtree size must be in 1..={MAX_SUBTREE_SIZE}, got {s_max}"
        )));
    }
    if parse.len() > MAX_PARSE_TOKENS {
        return Err(Error::InvalidParse {
            id: parse.id.clone(),
            message: format!("{} tokens exceeds the {MAX_PARSE_TOKENS}-token limit", parse.len()),
        });
    }
    parse.validate()
}

/// Canonical key for a subtree given its sorted node list.
///
/// `<top position>` then one `lemma/label` per node in token order, all
/// joined by [`TERM_SEPARATOR`]. The top position indexes into the node list.
pub fn subtree_key(parse: &ParseRecord, nodes: &[usize]) -> String {
    let top = nodes
        .iter()
        .position(|&n| {
            let h = parse.heads[n];
            h < 0 || !nodes.contains(&(h as usize))
        })
        .unwrap_or(0);
    let rendered: Vec<String> = nodes
        .iter()
        .map(|&n| format!("{}/{}", parse.lemmas[n], parse.dep_labels[n]))
        .collect();
    join_key(std::iter::once(top.to_string().as_str()).chain(rendered.iter().map(String::as_str)))
}

pub fn subtree_bag(parse: &ParseRecord, s_max: usize) -> Result<TermBag> {
    let mut bag = TermBag::empty(TermScheme::DepSubtree { s_max });
    for nodes in connected_subtrees(parse, s_max)? {
        bag.add(subtree_key(parse, &nodes));
    }
    Ok(bag)
}

/// Tokens used for lexical terms: the parse tokens when a parse is given,
/// otherwise [`tokenize`] of the raw text.
pub fn surface_tokens(text: &str, parse: Option<&ParseRecord>) -> Vec<String> {
    match parse {
        Some(p) => p.tokens.clone(),
        None => tokenize(text),
    }
}

/// Builds the bag for `scheme` from a token list, or from the parse for
/// subtree terms.
pub fn extract_bag(scheme: TermScheme, tokens: &[String], parse: Option<&ParseRecord>) -> Result<TermBag> {
    match scheme {
        TermScheme::Unigram => Ok(unigram_bag(tokens)),
        TermScheme::Ngram { n_max } => ngram_bag(tokens, n_max),
        TermScheme::DepSubtree { s_max } => match parse {
            Some(p) => subtree_bag(p, s_max),
            None => Err(Error::MissingResource {
                what: "dependency parse",
                id: String::new(),
            }),
        },
    }
}

/// Document frequencies over a collection of bags.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    scheme: TermScheme,
    n_docs: usize,
    df: BTreeMap<String, u32>,
    epsilon: f64,
    floor: f64,
}

pub fn idf_stats<'a>(bags: impl IntoIterator<Item = &'a TermBag>) -> Result<IdfTable> {
    let mut scheme = None;
    let mut n_docs = 0usize;
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for bag in bags {
        match scheme {
            None => scheme = Some(bag.scheme),
            Some(s) if s != bag.scheme => {
                return Err(Error::SchemeMismatch(s.to_string(), bag.scheme.to_string()))
            }
            _ => {}
        }
        n_docs += 1;
        for term in bag.terms() {
            *df.entry(term.to_string()).or_insert(0) += 1;
        }
    }
    let scheme = scheme.ok_or(Error::Empty("idf statistics need at least one document"))?;
    let mut table = IdfTable {
        scheme,
        n_docs,
        df,
        epsilon: DEFAULT_IDF_EPSILON,
        floor: 0.0,
    };
    table.floor = table.compute_floor();
    Ok(table)
}

impl IdfTable {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self.floor = self.compute_floor();
        self
    }

    pub fn scheme(&self) -> TermScheme {
        self.scheme
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `ln((N - df + 0.5) / (df + 0.5))` without flooring.
    pub fn raw_idf(&self, df: u32) -> f64 {
        let n = self.n_docs as f64;
        let df = f64::from(df);
        ((n - df + 0.5) / (df + 0.5)).ln()
    }

    /// epsilon times the mean of the positive raw idf values (0 if none).
    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn compute_floor(&self) -> f64 {
        let (sum, count) = self
            .df
            .values()
            .map(|&d| self.raw_idf(d))
            .filter(|&v| v > 0.0)
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            0.0
        } else {
            self.epsilon * sum / count as f64
        }
    }

    /// Okapi idf of `term`, floored at [`IdfTable::floor`]. Terms never seen in
    /// the collection get the maximum value, `ln((N + 0.5) / 0.5)`.
    pub fn okapi_idf(&self, term: &str) -> f64 {
        self.raw_idf(self.df(term)).max(self.floor)
    }
}

pub fn okapi_idf(table: &IdfTable, term: &str) -> f64 {
    table.okapi_idf(term)
}
