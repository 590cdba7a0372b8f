//! Binary embedding container.
//!
//! A store directory holds three files:
//!
//! ```text
//! manifest.json  {version: 1, dim_sentence, dim_token,
//!                 records: [{id, n_tokens, sent_offset, tok_offset, tokens}]}
//! sentence.f32   row-major little-endian f32, one dim_sentence row per record
//! tokens.f32     row-major little-endian f32, n_tokens rows of dim_token per record
//! ```
//!
//! Offsets count `f32` elements, not bytes. Both arrays are memory-mapped on
//! little-endian hosts and decoded into owned buffers elsewhere.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use memmap2::Mmap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SENTENCE_FILE: &str = "sentence.f32";
pub const TOKENS_FILE: &str = "tokens.f32";

/// Norm deviation that fails a load.
pub const NORM_HARD_TOLERANCE: f64 = 1e-3;
/// Norm deviation exporters are expected to stay within; larger deviations are logged.
pub const NORM_EXPECTED_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dim_sentence: usize,
    pub dim_token: usize,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub n_tokens: usize,
    pub sent_offset: usize,
    pub tok_offset: usize,
    pub tokens: Vec<String>,
}

/// Which records have their norms checked at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormCheck {
    #[default]
    All,
    /// Every n-th record, starting with the first.
    Stride(usize),
    Skip,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub norm_check: NormCheck,
}

enum F32Buf {
    Mapped(Mmap),
    Owned(Vec<f32>),
}

impl F32Buf {
    fn as_slice(&self) -> &[f32] {
        match self {
            // Mapped is only constructed after try_cast_slice succeeded on this buffer.
            F32Buf::Mapped(m) => bytemuck::cast_slice(&m[..]),
            F32Buf::Owned(v) => v,
        }
    }

    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len % 4 != 0 {
            return Err(Error::LengthMismatch(format!(
                "{} is {len} bytes, not a multiple of 4",
                path.display()
            )));
        }
        if len == 0 {
            return Ok(F32Buf::Owned(Vec::new()));
        }
        // SAFETY: the mapping is read-only and the store never hands out
        // references that outlive it. Concurrent truncation of the file by
        // another process is outside the supported contract.
        let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
        if cfg!(target_endian = "little") && bytemuck::try_cast_slice::<u8, f32>(&map[..]).is_ok() {
            return Ok(F32Buf::Mapped(map));
        }
        let decoded = map
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(F32Buf::Owned(decoded))
    }
}

impl std::fmt::Debug for F32Buf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            F32Buf::Mapped(m) => write!(f, "Mapped({} bytes)", m.len()),
            F32Buf::Owned(v) => write!(f, "Owned({} floats)", v.len()),
        }
    }
}

/// Borrowed row-major matrix of token embeddings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenMatrix<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> TokenMatrix<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(data.len(), dim));
        }
        Ok(Self { data, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'a, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }
}

/// Owned form of one record, used to build stores in memory and to write them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub sentence: Vec<f32>,
    pub tokens: Vec<String>,
    /// `tokens.len()` rows of `dim_token`, row-major.
    pub token_vectors: Vec<f32>,
}

/// Per-instance sentence vectors and contextual token matrices.
///
/// Immutable after construction.
#[derive(Debug)]
pub struct EmbeddingStore {
    dim_sentence: usize,
    dim_token: usize,
    records: Vec<ManifestRecord>,
    index: HashMap<String, usize>,
    sentence: F32Buf,
    tokens: F32Buf,
}

impl EmbeddingStore {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::load_with(dir, LoadOptions::default())
    }

    pub fn load_with(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let raw = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&raw).map_err(|e| Error::Parse {
            path: manifest_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let sentence = F32Buf::open(&dir.join(SENTENCE_FILE))?;
        let tokens = F32Buf::open(&dir.join(TOKENS_FILE))?;
        Self::assemble(manifest, sentence, tokens, opts)
    }

    /// Builds a store from owned records, laying them out exactly as
    /// [`write_embeddings`] would.
    pub fn from_records(
        dim_sentence: usize,
        dim_token: usize,
        records: &[EmbeddingRecord],
    ) -> Result<Self> {
        let (manifest, sentence, tokens) = layout(dim_sentence, dim_token, records)?;
        Self::assemble(
            manifest,
            F32Buf::Owned(sentence),
            F32Buf::Owned(tokens),
            LoadOptions::default(),
        )
    }

    fn assemble(manifest: Manifest, sentence: F32Buf, tokens: F32Buf, opts: LoadOptions) -> Result<Self> {
        if manifest.version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(manifest.version));
        }
        if manifest.dim_sentence == 0 || manifest.dim_token == 0 {
            return Err(Error::Embedding("dimensions must be positive".into()));
        }
        let (ds, dt) = (manifest.dim_sentence, manifest.dim_token);
        let sent_len = sentence.as_slice().len();
        let tok_len = tokens.as_slice().len();
        let mut index = HashMap::with_capacity(manifest.records.len());
        for (pos, rec) in manifest.records.iter().enumerate() {
            if rec.id.is_empty() {
                return Err(Error::Embedding(format!("record {pos} has an empty id")));
            }
            if index.insert(rec.id.clone(), pos).is_some() {
                return Err(Error::Embedding(format!("duplicate id {:?}", rec.id)));
            }
            if rec.tokens.len() != rec.n_tokens {
                return Err(Error::LengthMismatch(format!(
                    "record {:?}: n_tokens = {} but {} token strings",
                    rec.id,
                    rec.n_tokens,
                    rec.tokens.len()
                )));
            }
            let sent_end = rec.sent_offset.checked_add(ds);
            if sent_end.is_none_or(|end| end > sent_len) {
                return Err(Error::LengthMismatch(format!(
                    "record {:?}: sentence row at {}..{} exceeds {} elements in {SENTENCE_FILE}",
                    rec.id,
                    rec.sent_offset,
                    rec.sent_offset.saturating_add(ds),
                    sent_len
                )));
            }
            let tok_end = rec
                .n_tokens
                .checked_mul(dt)
                .and_then(|n| rec.tok_offset.checked_add(n));
            if tok_end.is_none_or(|end| end > tok_len) {
                return Err(Error::LengthMismatch(format!(
                    "record {:?}: {} token rows at offset {} exceed {} elements in {TOKENS_FILE}",
                    rec.id, rec.n_tokens, rec.tok_offset, tok_len
                )));
            }
        }

        let store = Self {
            dim_sentence: ds,
            dim_token: dt,
            records: manifest.records,
            index,
            sentence,
            tokens,
        };
        store.check_norms(opts.norm_check)?;
        Ok(store)
    }

    fn check_norms(&self, check: NormCheck) -> Result<()> {
        let stride = match check {
            NormCheck::All => 1,
            NormCheck::Stride(n) => n.max(1),
            NormCheck::Skip => return Ok(()),
        };
        let mut soft = 0usize;
        for rec in self.records.iter().step_by(stride) {
            let sent = &self.sentence.as_slice()[rec.sent_offset..rec.sent_offset + self.dim_sentence];
            soft += check_unit(&rec.id, "sentence", sent)?;
            let toks = self.token_slice(rec);
            for (i, row) in toks.chunks_exact(self.dim_token).enumerate() {
                soft += check_unit(&rec.id, &format!("token {i}"), row)?;
            }
        }
        if soft > 0 {
            log::warn!(
                "{soft} embedding rows deviate from unit norm by more than {NORM_EXPECTED_TOLERANCE}"
            );
        }
        Ok(())
    }

    fn token_slice(&self, rec: &ManifestRecord) -> &[f32] {
        &self.tokens.as_slice()[rec.tok_offset..rec.tok_offset + rec.n_tokens * self.dim_token]
    }

    pub fn dim_sentence(&self) -> usize {
        self.dim_sentence
    }

    pub fn dim_token(&self) -> usize {
        self.dim_token
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn sentence(&self, id: &str) -> Option<&[f32]> {
        let rec = &self.records[*self.index.get(id)?];
        Some(&self.sentence.as_slice()[rec.sent_offset..rec.sent_offset + self.dim_sentence])
    }

    pub fn tokens(&self, id: &str) -> Option<TokenMatrix<'_>> {
        let rec = &self.records[*self.index.get(id)?];
        Some(TokenMatrix {
            data: self.token_slice(rec),
            dim: self.dim_token,
        })
    }

    pub fn token_strings(&self, id: &str) -> Option<&[String]> {
        Some(&self.records[*self.index.get(id)?].tokens)
    }

    pub fn record(&self, id: &str) -> Option<EmbeddingRecord> {
        Some(EmbeddingRecord {
            id: id.to_string(),
            sentence: self.sentence(id)?.to_vec(),
            tokens: self.token_strings(id)?.to_vec(),
            token_vectors: self.tokens(id)?.as_slice().to_vec(),
        })
    }

    /// Writes the store back out in canonical layout (records in manifest order).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let records: Vec<_> = self.ids().filter_map(|id| self.record(id)).collect();
        write_embeddings(dir, self.dim_sentence, self.dim_token, &records)
    }
}

fn check_unit(id: &str, what: &str, v: &[f32]) -> Result<usize> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let dev = (norm - 1.0).abs();
    if !(dev <= NORM_HARD_TOLERANCE) {
        return Err(Error::NormViolation {
            id: id.to_string(),
            what: what.to_string(),
            norm,
            tol: NORM_HARD_TOLERANCE,
        });
    }
    Ok(usize::from(dev > NORM_EXPECTED_TOLERANCE))
}

fn layout(
    dim_sentence: usize,
    dim_token: usize,
    records: &[EmbeddingRecord],
) -> Result<(Manifest, Vec<f32>, Vec<f32>)> {
    let mut sentence = Vec::with_capacity(records.len() * dim_sentence);
    let mut tokens = Vec::new();
    let mut entries = Vec::with_capacity(records.len());
    for rec in records {
        if rec.sentence.len() != dim_sentence {
            return Err(Error::LengthMismatch(format!(
                "record {:?}: sentence vector has {} elements, expected {dim_sentence}",
                rec.id,
                rec.sentence.len()
            )));
        }
        if rec.token_vectors.len() != rec.tokens.len() * dim_token {
            return Err(Error::LengthMismatch(format!(
                "record {:?}: {} token strings but {} token elements (dim {dim_token})",
                rec.id,
                rec.tokens.len(),
                rec.token_vectors.len()
            )));
        }
        entries.push(ManifestRecord {
            id: rec.id.clone(),
            n_tokens: rec.tokens.len(),
            sent_offset: sentence.len(),
            tok_offset: tokens.len(),
            tokens: rec.tokens.clone(),
        });
        sentence.extend_from_slice(&rec.sentence);
        tokens.extend_from_slice(&rec.token_vectors);
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dim_sentence,
        dim_token,
        records: entries,
    };
    Ok((manifest, sentence, tokens))
}

/// Writes records into `dir` in the container format, creating `dir` if needed.
pub fn write_embeddings(
    dir: impl AsRef<Path>,
    dim_sentence: usize,
    dim_token: usize,
    records: &[EmbeddingRecord],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, sentence, tokens) = layout(dim_sentence, dim_token, records)?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    write_f32(&dir.join(SENTENCE_FILE), &sentence)?;
    write_f32(&dir.join(TOKENS_FILE), &tokens)
}

fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for x in data {
        w.write_all(&x.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
