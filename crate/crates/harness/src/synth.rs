//! Deterministic synthetic bundles whose test substructures are scattered
//! across candidates.
//!
//! Each group owns one test input made of four 4-word phrases `P1 P2 P3 P4`
//! and a handful of candidates built from it:
//!
//! * near-duplicates holding `P1 P2` intact, padded to a common length;
//! * scrambles holding every test word with no test bigram;
//! * one candidate each for `P3` and `P4`, surrounded by filler.
//!
//! The rest of the pool is filler. Token embeddings mix each word vector with
//! its neighbours, so exact phrase context matters to BERTScore as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use iclcover::corpus::{write_embeddings, write_parses, write_pool, EmbeddingRecord, Instance, ParseRecord};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};

const PHRASES: usize = 4;
const PHRASE_LEN: usize = 4;
const TEST_LEN: usize = PHRASES * PHRASE_LEN;
const DUP_PAD: usize = 2;
const SINGLE_PAD: usize = 3;
const NEIGHBOUR_WEIGHT: f64 = 0.5;

pub const POOL_FILE: &str = "pool.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const EMBEDDINGS_DIR: &str = "embeddings";
pub const PARSES_FILE: &str = "parses.jsonl";
pub const TEMPLATES_FILE: &str = "templates.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    pub seed: u64,
    pub groups: usize,
    pub pool_size: usize,
    pub dim: usize,
    pub duplicates: usize,
    pub scrambles: usize,
    pub filler_vocab: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            groups: 5,
            pool_size: 200,
            dim: 32,
            duplicates: 4,
            scrambles: 2,
            filler_vocab: 300,
        }
    }
}

impl SynthOptions {
    fn per_group(&self) -> usize {
        self.duplicates + self.scrambles + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub pool: Vec<Instance>,
    pub tests: Vec<Instance>,
    pub embeddings: Vec<EmbeddingRecord>,
    pub parses: Vec<ParseRecord>,
    pub dim: usize,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Word orders of the test that share no adjacent pair with it.
fn scramble(words: &[String], variant: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..PHRASE_LEN)
        .flat_map(|offset| (0..PHRASES).map(move |p| p * PHRASE_LEN + offset))
        .collect();
    if variant % 2 == 1 {
        order.reverse();
    }
    let shift = (variant / 2) % TEST_LEN;
    order.rotate_left(shift);
    order.into_iter().map(|i| words[i].clone()).collect()
}

struct Builder {
    rng: ChaCha8Rng,
    vectors: BTreeMap<String, Vec<f64>>,
    filler: Vec<String>,
    dim: usize,
}

impl Builder {
    fn vector(&mut self, word: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(word) {
            return v.clone();
        }
        let raw: Vec<f64> = (0..self.dim).map(|_| self.rng.sample(StandardNormal)).collect();
        let v = unit(&raw);
        self.vectors.insert(word.to_string(), v.clone());
        v
    }

    fn fillers(&mut self, n: usize) -> Vec<String> {
        self.filler.choose_multiple(&mut self.rng, n).cloned().collect()
    }

    fn record(&mut self, id: &str, words: &[String]) -> EmbeddingRecord {
        let vecs: Vec<Vec<f64>> = words.iter().map(|w| self.vector(w)).collect();
        let mut sum = vec![0.0; self.dim];
        for v in &vecs {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut token_vectors = Vec::with_capacity(words.len() * self.dim);
        for i in 0..vecs.len() {
            let mut t = vecs[i].clone();
            for j in [i.wrapping_sub(1), i + 1] {
                if let Some(n) = vecs.get(j) {
                    for (a, b) in t.iter_mut().zip(n) {
                        *a += NEIGHBOUR_WEIGHT * b;
                    }
                }
            }
            token_vectors.extend(to_f32(&unit(&t)));
        }
        EmbeddingRecord {
            id: id.to_string(),
            sentence: to_f32(&unit(&sum)),
            tokens: words.to_vec(),
            token_vectors,
        }
    }
}

/// A chain parse: each word heads the next.
fn chain_parse(id: &str, words: &[String]) -> ParseRecord {
    ParseRecord {
        id: id.to_string(),
        tokens: words.to_vec(),
        lemmas: words.to_vec(),
        heads: (0..words.len() as i64).map(|i| i - 1).collect(),
        dep_labels: (0..words.len())
            .map(|i| if i == 0 { "ROOT" } else { "dep" }.to_string())
            .collect(),
    }
}

pub fn generate(opts: &SynthOptions) -> Result<SynthBundle> {
    let structured = opts.groups * opts.per_group();
    if opts.groups == 0 || opts.dim == 0 || opts.pool_size < structured {
        return Err(HarnessError::Config(format!(
            "synthetic pool of {} cannot hold {} groups of {} structured candidates",
            opts.pool_size,
            opts.groups,
            opts.per_group()
        )));
    }
    if opts.filler_vocab < 2 * SINGLE_PAD {
        return Err(HarnessError::Config("filler vocabulary is too small".into()));
    }
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        vectors: BTreeMap::new(),
        filler: (0..opts.filler_vocab).map(|i| format!("f{i}")).collect(),
        dim: opts.dim,
    };

    let mut tests = Vec::new();
    let mut candidates: Vec<Vec<String>> = Vec::new();
    for g in 0..opts.groups {
        let words: Vec<String> = (0..TEST_LEN)
            .map(|i| format!("g{g}p{}w{}", i / PHRASE_LEN, i % PHRASE_LEN))
            .collect();
        let phrase = |p: usize| words[p * PHRASE_LEN..(p + 1) * PHRASE_LEN].to_vec();
        tests.push(words.clone());
        for _ in 0..opts.duplicates {
            let mut c = [phrase(0), phrase(1)].concat();
            c.extend(b.fillers(DUP_PAD));
            candidates.push(c);
        }
        for v in 0..opts.scrambles {
            candidates.push(scramble(&words, v));
        }
        for p in [2, 3] {
            let mut c = b.fillers(SINGLE_PAD);
            c.extend(phrase(p));
            c.extend(b.fillers(SINGLE_PAD));
            candidates.push(c);
        }
    }
    while candidates.len() < opts.pool_size {
        let n = b.rng.gen_range(6..=12);
        candidates.push(b.fillers(n));
    }
    candidates.shuffle(&mut b.rng);

    let lf = |words: &[String]| format!("answer ( {} )", words.join(" , "));
    let mut bundle = SynthBundle {
        pool: Vec::new(),
        tests: Vec::new(),
        embeddings: Vec::new(),
        parses: Vec::new(),
        dim: opts.dim,
    };
    let width = opts.pool_size.to_string().len();
    for (i, words) in candidates.iter().enumerate() {
        let id = format!("c{i:0width$}");
        bundle.pool.push(Instance::new(&id, words.join(" "), lf(words)));
        bundle.embeddings.push(b.record(&id, words));
        bundle.parses.push(chain_parse(&id, words));
    }
    for (g, words) in tests.iter().enumerate() {
        let id = format!("test{g}");
        bundle.tests.push(Instance::new(&id, words.join(" "), lf(words)));
        bundle.embeddings.push(b.record(&id, words));
        bundle.parses.push(chain_parse(&id, words));
    }
    Ok(bundle)
}

/// Writes pool, test split, embeddings, parses and a prompt template under `dir`.
pub fn write_bundle(dir: &Path, bundle: &SynthBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_pool(dir.join(POOL_FILE), &bundle.pool)?;
    write_pool(dir.join(TEST_FILE), &bundle.tests)?;
    write_embeddings(dir.join(EMBEDDINGS_DIR), bundle.dim, bundle.dim, &bundle.embeddings)?;
    write_parses(dir.join(PARSES_FILE), &bundle.parses)?;
    let templates = serde_json::json!({
        "synthetic": {
            "input_pattern": "Sentence: {input}",
            "output_pattern": "Logical Form: {output}",
            "separator": "\n\n",
        }
    });
    let path = dir.join(TEMPLATES_FILE);
    fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&templates).expect("static json")))
        .map_err(|e| HarnessError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use iclcover::terms::ngram_bag;

    #[test]
    fn scrambles_share_no_bigram_with_the_test() {
        let words: Vec<String> = (0..TEST_LEN).map(|i| format!("w{i}")).collect();
        let test = ngram_bag(&words, 2).unwrap();
        for v in 0..6 {
            let s = scramble(&words, v);
            let mut sorted = s.clone();
            sorted.sort();
            let mut all = words.clone();
            all.sort();
            assert_eq!(sorted, all);
            let bag = ngram_bag(&s, 2).unwrap();
            let shared = bag.terms().filter(|t| test.contains(t)).count();
            assert_eq!(shared, TEST_LEN, "variant {v} shares a bigram");
        }
    }

    #[test]
    fn generation_is_deterministic_and_sized() {
        let opts = SynthOptions::default();
        let a = generate(&opts).unwrap();
        assert_eq!(a, generate(&opts).unwrap());
        assert_eq!(a.pool.len(), 200);
        assert_eq!(a.tests.len(), 5);
        assert_eq!(a.embeddings.len(), 205);
        for p in &a.parses {
            p.validate().unwrap();
        }
        assert!(generate(&SynthOptions { pool_size: 10, ..opts }).is_err());
    }
}
