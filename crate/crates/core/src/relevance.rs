//! Instance-level informativeness metrics and independent top-k ranking.
//!
//! Every metric here scores a candidate `z` against a test input `x` as a sum
//! over salient aspects of `x`: embedding dimensions for cosine, query terms
//! for BM25, and test tokens for BERTScore recall. The set-level machinery in
//! [`crate::setcover`] reuses the same per-aspect terms.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidatePool, EmbeddingStore, Instance, ParseMap, ParseRecord, TokenMatrix};
use crate::error::{Error, Result};
use crate::terms::{self, IdfTable, TermBag, TermScheme};

pub const DEFAULT_BM25_K1: f64 = 1.5;
pub const DEFAULT_BM25_B: f64 = 0.75;

/// Tolerance on token weights summing to one.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Cosine,
    Bm25(TermScheme),
    /// BERTScore recall.
    Bsr,
    /// BERTScore precision.
    Bsp,
    /// BERTScore F1.
    Bsf1,
}

impl MetricKind {
    /// Whether the metric is a sum of per-aspect coverages of the test input.
    pub fn is_decomposable(&self) -> bool {
        matches!(self, MetricKind::Cosine | MetricKind::Bm25(_) | MetricKind::Bsr)
    }

    pub fn needs_embeddings(&self) -> bool {
        !matches!(self, MetricKind::Bm25(_))
    }

    pub fn needs_parses(&self) -> bool {
        matches!(self, MetricKind::Bm25(TermScheme::DepSubtree { .. }))
    }

    /// Display label, e.g. `BM25[ngram4]`.
    pub fn label(&self) -> String {
        match self {
            MetricKind::Cosine => "Cosine".into(),
            MetricKind::Bm25(s) => format!("BM25[{s}]"),
            MetricKind::Bsr => "BSR".into(),
            MetricKind::Bsp => "BSP".into(),
            MetricKind::Bsf1 => "BSF1".into(),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Cosine => f.write_str("cosine"),
            MetricKind::Bm25(s) => write!(f, "bm25:{s}"),
            MetricKind::Bsr => f.write_str("bsr"),
            MetricKind::Bsp => f.write_str("bsp"),
            MetricKind::Bsf1 => f.write_str("bsf1"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    /// `cosine`, `bm25` (unigram), `bm25:<scheme>`, `bsr`, `bsp`, `bsf1`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "cosine" => Ok(MetricKind::Cosine),
            "bm25" => Ok(MetricKind::Bm25(TermScheme::Unigram)),
            "bsr" => Ok(MetricKind::Bsr),
            "bsp" => Ok(MetricKind::Bsp),
            "bsf1" => Ok(MetricKind::Bsf1),
            other => match other.strip_prefix("bm25:") {
                Some(scheme) => Ok(MetricKind::Bm25(scheme.parse()?)),
                None => Err(Error::InvalidParameter(format!("unknown metric {s:?}"))),
            },
        }
    }
}

impl Serialize for MetricKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which text of a pool instance is scored as the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateText {
    #[default]
    InputOnly,
    InputPlusOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    #[serde(default = "default_k1")]
    pub bm25_k1: f64,
    #[serde(default = "default_b")]
    pub bm25_b: f64,
    #[serde(default)]
    pub use_idf_weights: bool,
    #[serde(default)]
    pub candidate_text: CandidateText,
}

fn default_k1() -> f64 {
    DEFAULT_BM25_K1
}

fn default_b() -> f64 {
    DEFAULT_BM25_B
}

impl MetricConfig {
    pub fn new(kind: MetricKind) -> Self {
        Self {
            kind,
            bm25_k1: DEFAULT_BM25_K1,
            bm25_b: DEFAULT_BM25_B,
            use_idf_weights: false,
            candidate_text: CandidateText::InputOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bm25_k1 > 0.0) || !self.bm25_k1.is_finite() {
            return Err(Error::InvalidParameter(format!("bm25 k1 must be > 0, got {}", self.bm25_k1)));
        }
        if !(0.0..=1.0).contains(&self.bm25_b) {
            return Err(Error::InvalidParameter(format!("bm25 b must be in [0, 1], got {}", self.bm25_b)));
        }
        if self.candidate_text == CandidateText::InputPlusOutput {
            match self.kind {
                MetricKind::Bm25(TermScheme::Unigram) | MetricKind::Bm25(TermScheme::Ngram { .. }) => {}
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "candidate_text = input_plus_output needs surface tokens; {other} scores \
                         precomputed input embeddings or input parses"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BertVariant {
    Recall,
    Precision,
    F1,
}

/// A pool candidate with its score for one test input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub position: usize,
    pub score: f64,
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Dot product of two unit vectors.
pub fn cosine_score(x: &[f32], z: &[f32]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch(x.len(), z.len()));
    }
    Ok(dot(x, z))
}

/// Saturated, length-normalized term frequency: `tf (k1 + 1) / (tf + k1 (1 - b + b |z| / avgdl))`.
pub fn bm25_tf_part(tf: f64, doc_len: f64, avg_doclen: f64, k1: f64, b: f64) -> f64 {
    if tf == 0.0 {
        return 0.0;
    }
    tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avg_doclen))
}

/// Okapi BM25 of a document bag for a query bag.
///
/// Each distinct query term contributes once per occurrence in the query.
pub fn bm25_score(
    query: &TermBag,
    doc: &TermBag,
    table: &IdfTable,
    avg_doclen: f64,
    k1: f64,
    b: f64,
) -> Result<f64> {
    Ok(bm25_term_contributions(query, doc, table, avg_doclen, k1, b)?
        .into_iter()
        .sum())
}

/// Per-term BM25 contributions, one per distinct query term in key order.
pub fn bm25_term_contributions(
    query: &TermBag,
    doc: &TermBag,
    table: &IdfTable,
    avg_doclen: f64,
    k1: f64,
    b: f64,
) -> Result<Vec<f64>> {
    for other in [doc.scheme(), table.scheme()] {
        if query.scheme() != other {
            return Err(Error::SchemeMismatch(query.scheme().to_string(), other.to_string()));
        }
    }
    if !(avg_doclen > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "average document length must be positive, got {avg_doclen}"
        )));
    }
    let doc_len = doc.total() as f64;
    Ok(query
        .iter()
        .map(|(term, q_count)| {
            let tf = f64::from(doc.count(term));
            f64::from(q_count) * table.okapi_idf(term) * bm25_tf_part(tf, doc_len, avg_doclen, k1, b)
        })
        .collect())
}

fn check_weights(what: &str, weights: &[f64], rows: usize) -> Result<()> {
    if rows == 0 {
        return Err(Error::Empty("token list"));
    }
    if weights.len() != rows {
        return Err(Error::InvalidParameter(format!(
            "{what}: {} weights for {rows} tokens",
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "{what}: weights must be nonnegative and sum to 1 (sum {sum})"
        )));
    }
    Ok(())
}

/// Best match of each x row against z: `max_j x_i . z_j`.
pub(crate) fn best_matches(x: &TokenMatrix<'_>, z: &TokenMatrix<'_>) -> Vec<f64> {
    x.rows()
        .map(|xi| z.rows().map(|zj| dot(xi, zj)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// BERTScore recall, precision or F1 between token embedding matrices.
pub fn bert_score(
    x: &TokenMatrix<'_>,
    z: &TokenMatrix<'_>,
    x_weights: &[f64],
    z_weights: &[f64],
    variant: BertVariant,
) -> Result<f64> {
    if x.dim() != z.dim() {
        return Err(Error::DimensionMismatch(x.dim(), z.dim()));
    }
    check_weights("x", x_weights, x.n_rows())?;
    check_weights("z", z_weights, z.n_rows())?;

    let mut best_x = vec![f64::NEG_INFINITY; x.n_rows()];
    let mut best_z = vec![f64::NEG_INFINITY; z.n_rows()];
    for (i, xi) in x.rows().enumerate() {
        for (j, zj) in z.rows().enumerate() {
            let s = dot(xi, zj);
            best_x[i] = best_x[i].max(s);
            best_z[j] = best_z[j].max(s);
        }
    }
    let recall = || best_x.iter().zip(x_weights).map(|(m, w)| m * w).sum::<f64>();
    let precision = || best_z.iter().zip(z_weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(match variant {
        BertVariant::Recall => recall(),
        BertVariant::Precision => precision(),
        BertVariant::F1 => {
            let (r, p) = (recall(), precision());
            if r + p == 0.0 {
                0.0
            } else {
                2.0 * r * p / (r + p)
            }
        }
    })
}

/// Uniform `1/|x|` weights, or idf-proportional weights when a unigram table is given.
pub fn token_weights<S: AsRef<str>>(tokens: &[S], table: Option<&IdfTable>) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::Empty("token list"));
    }
    let Some(table) = table else {
        return Ok(vec![1.0 / tokens.len() as f64; tokens.len()]);
    };
    let idf: Vec<f64> = tokens
        .iter()
        .map(|t| table.okapi_idf(&t.as_ref().to_lowercase()))
        .collect();
    normalize_weights(&idf)
}

/// Scales nonnegative masses to sum to one.
pub fn normalize_weights(mass: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("token weights have zero total idf mass".into()));
    }
    Ok(mass.iter().map(|m| m / total).collect())
}

/// Total order used for every ranking: score descending, then pool position ascending.
pub fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Side inputs a scorer may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct Resources<'a> {
    pub store: Option<&'a EmbeddingStore>,
    pub parses: Option<&'a ParseMap>,
}

#[derive(Debug)]
struct LexicalIndex {
    bags: Vec<TermBag>,
    table: IdfTable,
    avg_doclen: f64,
}

/// Test-side features, prepared once per test input.
#[derive(Debug)]
pub enum QueryFeatures<'s> {
    Sentence(&'s [f32]),
    Terms(TermBag),
    Tokens {
        matrix: TokenMatrix<'s>,
        weights: Vec<f64>,
    },
}

/// A metric bound to a candidate pool, with pool-side statistics precomputed.
///
/// Immutable once built; scoring methods take `&self` and can run
/// concurrently.
#[derive(Debug)]
pub struct Scorer<'a> {
    config: MetricConfig,
    pool: &'a CandidatePool,
    res: Resources<'a>,
    lexical: Option<LexicalIndex>,
    token_idf: Option<IdfTable>,
}

impl<'a> Scorer<'a> {
    pub fn new(config: MetricConfig, pool: &'a CandidatePool, res: Resources<'a>) -> Result<Self> {
        config.validate()?;
        if config.kind.needs_embeddings() && res.store.is_none() {
            return Err(Error::InvalidParameter(format!(
                "metric {} needs an embedding store",
                config.kind
            )));
        }
        if config.kind.needs_parses() && res.parses.is_none() {
            return Err(Error::InvalidParameter(format!(
                "metric {} needs dependency parses",
                config.kind
            )));
        }
        let mut scorer = Self {
            config,
            pool,
            res,
            lexical: None,
            token_idf: None,
        };
        if pool.is_empty() {
            return Ok(scorer);
        }
        match scorer.config.kind {
            MetricKind::Bm25(scheme) => {
                let bags = pool
                    .iter()
                    .map(|inst| scorer.candidate_bag(inst, scheme))
                    .collect::<Result<Vec<_>>>()?;
                let table = terms::idf_stats(&bags)?;
                let avg_doclen = bags.iter().map(|b| b.total() as f64).sum::<f64>() / bags.len() as f64;
                scorer.lexical = Some(LexicalIndex {
                    bags,
                    table,
                    avg_doclen,
                });
            }
            MetricKind::Bsr | MetricKind::Bsp | MetricKind::Bsf1 if scorer.config.use_idf_weights => {
                let store = scorer.store()?;
                let bags = pool
                    .iter()
                    .map(|inst| {
                        store
                            .token_strings(&inst.id)
                            .map(terms::unigram_bag)
                            .ok_or_else(|| missing("embeddings", &inst.id))
                    })
                    .collect::<Result<Vec<_>>>()?;
                scorer.token_idf = Some(terms::idf_stats(&bags)?);
            }
            _ => {}
        }
        Ok(scorer)
    }

    pub fn config(&self) -> &MetricConfig {
        &self.config
    }

    pub fn pool(&self) -> &'a CandidatePool {
        self.pool
    }

    pub fn resources(&self) -> Resources<'a> {
        self.res
    }

    fn store(&self) -> Result<&'a EmbeddingStore> {
        self.res
            .store
            .ok_or_else(|| Error::InvalidParameter("no embedding store".into()))
    }

    fn parse_for(&self, id: &str) -> Result<Option<&'a ParseRecord>> {
        match self.res.parses {
            None => Ok(None),
            Some(map) => map.get(id).map(Some).ok_or_else(|| missing("parse", id)),
        }
    }

    /// Surface tokens of an input: the parse tokens when parses are loaded,
    /// otherwise [`terms::tokenize`].
    pub fn input_tokens(&self, inst: &Instance) -> Result<Vec<String>> {
        Ok(terms::surface_tokens(&inst.input, self.parse_for(&inst.id)?))
    }

    fn candidate_bag(&self, inst: &Instance, scheme: TermScheme) -> Result<TermBag> {
        let mut tokens = self.input_tokens(inst)?;
        if self.config.candidate_text == CandidateText::InputPlusOutput {
            tokens.extend(terms::tokenize(&inst.output));
        }
        let parse = if scheme == TermScheme::Unigram || matches!(scheme, TermScheme::Ngram { .. }) {
            None
        } else {
            self.parse_for(&inst.id)?
        };
        terms::extract_bag(scheme, &tokens, parse).map_err(|e| attach_id(e, &inst.id))
    }

    fn token_weights_for(&self, id: &str) -> Result<Vec<f64>> {
        let strings = self.store()?.token_strings(id).ok_or_else(|| missing("embeddings", id))?;
        token_weights(strings, self.token_idf.as_ref())
    }

    /// Prepares the test-side features of `test`.
    pub fn query(&self, test: &Instance) -> Result<QueryFeatures<'a>> {
        match self.config.kind {
            MetricKind::Cosine => Ok(QueryFeatures::Sentence(
                self.store()?
                    .sentence(&test.id)
                    .ok_or_else(|| missing("embeddings", &test.id))?,
            )),
            MetricKind::Bm25(scheme) => {
                let tokens = self.input_tokens(test)?;
                let parse = match scheme {
                    TermScheme::DepSubtree { .. } => self.parse_for(&test.id)?,
                    _ => None,
                };
                Ok(QueryFeatures::Terms(
                    terms::extract_bag(scheme, &tokens, parse).map_err(|e| attach_id(e, &test.id))?,
                ))
            }
            MetricKind::Bsr | MetricKind::Bsp | MetricKind::Bsf1 => {
                let matrix = self
                    .store()?
                    .tokens(&test.id)
                    .ok_or_else(|| missing("embeddings", &test.id))?;
                let weights = self.token_weights_for(&test.id)?;
                Ok(QueryFeatures::Tokens { matrix, weights })
            }
        }
    }

    /// Pool positions eligible as demonstrations for `test`: all but the test itself.
    pub fn candidates(&self, test: &Instance) -> Vec<usize> {
        (0..self.pool.len())
            .filter(|&p| self.pool.at(p).id != test.id)
            .collect()
    }

    pub fn score(&self, query: &QueryFeatures<'_>, position: usize) -> Result<f64> {
        let cand = self.pool.at(position);
        match (self.config.kind, query) {
            (MetricKind::Cosine, QueryFeatures::Sentence(x)) => {
                let z = self
                    .store()?
                    .sentence(&cand.id)
                    .ok_or_else(|| missing("embeddings", &cand.id))?;
                cosine_score(x, z)
            }
            (MetricKind::Bm25(_), QueryFeatures::Terms(q)) => {
                let lex = self.lexical()?;
                bm25_score(
                    q,
                    &lex.bags[position],
                    &lex.table,
                    lex.avg_doclen,
                    self.config.bm25_k1,
                    self.config.bm25_b,
                )
            }
            (kind, QueryFeatures::Tokens { matrix, weights }) => {
                let variant = match kind {
                    MetricKind::Bsr => BertVariant::Recall,
                    MetricKind::Bsp => BertVariant::Precision,
                    _ => BertVariant::F1,
                };
                let z = self
                    .store()?
                    .tokens(&cand.id)
                    .ok_or_else(|| missing("embeddings", &cand.id))?;
                let z_weights = self.token_weights_for(&cand.id)?;
                bert_score(matrix, &z, weights, &z_weights, variant).map_err(|e| attach_id(e, &cand.id))
            }
            _ => Err(Error::InvalidParameter("query features do not match the metric".into())),
        }
    }

    fn lexical(&self) -> Result<&LexicalIndex> {
        self.lexical.as_ref().ok_or(Error::Empty("candidate pool"))
    }

    /// Per-aspect contributions of one candidate; they sum to [`Scorer::score`].
    ///
    /// Aspects are embedding dimensions (cosine), distinct query terms in key
    /// order (BM25), or test tokens (BSR).
    pub fn contributions(&self, query: &QueryFeatures<'_>, position: usize, out: &mut [f64]) -> Result<()> {
        let cand = self.pool.at(position);
        match (self.config.kind, query) {
            (MetricKind::Cosine, QueryFeatures::Sentence(x)) => {
                let z = self
                    .store()?
                    .sentence(&cand.id)
                    .ok_or_else(|| missing("embeddings", &cand.id))?;
                if z.len() != x.len() || out.len() != x.len() {
                    return Err(Error::DimensionMismatch(x.len(), z.len()));
                }
                for ((o, &a), &b) in out.iter_mut().zip(x.iter()).zip(z) {
                    *o = f64::from(a) * f64::from(b);
                }
            }
            (MetricKind::Bm25(_), QueryFeatures::Terms(q)) => {
                let lex = self.lexical()?;
                let parts = bm25_term_contributions(
                    q,
                    &lex.bags[position],
                    &lex.table,
                    lex.avg_doclen,
                    self.config.bm25_k1,
                    self.config.bm25_b,
                )?;
                out.copy_from_slice(&parts);
            }
            (MetricKind::Bsr, QueryFeatures::Tokens { matrix, weights }) => {
                let z = self
                    .store()?
                    .tokens(&cand.id)
                    .ok_or_else(|| missing("embeddings", &cand.id))?;
                if z.is_empty() {
                    return Err(attach_id(Error::Empty("token list"), &cand.id));
                }
                if z.dim() != matrix.dim() {
                    return Err(Error::DimensionMismatch(matrix.dim(), z.dim()));
                }
                for ((o, m), w) in out.iter_mut().zip(best_matches(matrix, &z)).zip(weights) {
                    *o = w * m;
                }
            }
            (kind, _) => return Err(Error::UnsupportedMetric(kind.to_string())),
        }
        Ok(())
    }

    /// Aspect keys of a query, in the order used by [`Scorer::contributions`].
    pub fn aspect_keys(&self, query: &QueryFeatures<'_>) -> Result<Vec<String>> {
        match (self.config.kind, query) {
            (MetricKind::Cosine, QueryFeatures::Sentence(x)) => {
                Ok((0..x.len()).map(|d| format!("dim{d}")).collect())
            }
            (MetricKind::Bm25(_), QueryFeatures::Terms(q)) => Ok(q.terms().map(str::to_string).collect()),
            (MetricKind::Bsr, QueryFeatures::Tokens { matrix, .. }) => Ok((0..matrix.n_rows())
                .map(|i| format!("tok{i}"))
                .collect()),
            (kind, _) => Err(Error::UnsupportedMetric(kind.to_string())),
        }
    }

    pub fn score_all(&self, query: &QueryFeatures<'_>, positions: &[usize]) -> Result<Vec<f64>> {
        positions.iter().map(|&p| self.score(query, p)).collect()
    }

    /// Scores every candidate independently and keeps the top `k`.
    pub fn rank_independent(&self, test: &Instance, k: usize) -> Result<Vec<ScoredCandidate>> {
        if k < 1 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let positions = self.candidates(test);
        if positions.is_empty() {
            return Err(Error::Empty("candidate pool"));
        }
        let query = self.query(test)?;
        let scores = self.score_all(&query, &positions)?;
        Ok(top_k(&positions, &scores, k)
            .into_iter()
            .map(|(position, score)| ScoredCandidate {
                id: self.pool.at(position).id.clone(),
                position,
                score,
            })
            .collect())
    }
}

/// Top `k` (position, score) pairs under [`rank_order`].
pub fn top_k(positions: &[usize], scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = positions.iter().copied().zip(scores.iter().copied()).collect();
    ranked.sort_by(|a, b| rank_order((a.1, a.0), (b.1, b.0)));
    ranked.truncate(k);
    ranked
}

fn missing(what: &'static str, id: &str) -> Error {
    Error::MissingResource {
        what,
        id: id.to_string(),
    }
}

fn attach_id(e: Error, id: &str) -> Error {
    match e {
        Error::MissingResource { what, id: ref old } if old.is_empty() => missing(what, id),
        Error::Empty(what) => Error::InvalidInstance {
            id: id.to_string(),
            message: format!("empty {what}"),
        },
        other => other,
    }
}
