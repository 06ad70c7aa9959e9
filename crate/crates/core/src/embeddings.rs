//! Pretrained word-embedding table and the similarity primitives built on it.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::StreamKey;
use crate::text::tokenize;

/// Dimension of the embeddings the game was designed around.
pub const DEFAULT_DIM: usize = 300;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("token list is empty after tokenization")]
    EmptyTokens,
}

/// Cosine similarity of two words. `oov` is set when either word is missing
/// from the table, in which case `value` is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WordSimilarity {
    pub value: f64,
    pub oov: bool,
}

/// Mean cross-pair similarity of two token lists.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TokenSimilarity {
    pub value: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

impl TokenSimilarity {
    /// No pair had both words in vocabulary.
    pub fn all_oov(&self) -> bool {
        self.pairs_used == 0
    }
}

/// Word → unit-normalized vector. Immutable after construction.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    /// Build from raw vectors. Keys are lowercased; the first occurrence of a
    /// key wins. Zero vectors are dropped (they have no direction).
    pub fn from_vectors<I, S>(dim: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut vectors = HashMap::new();
        for (i, (word, v)) in entries.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                continue;
            }
            let key = word.as_ref().to_lowercase();
            vectors
                .entry(key)
                .or_insert_with(|| v.iter().map(|x| (x / norm) as f32).collect());
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    /// Random Gaussian embeddings for the given words; used for synthetic
    /// fixtures where no pretrained file is available.
    pub fn random<S: AsRef<str>>(words: &[S], dim: usize, seed: u64) -> Self {
        let mut rng = StreamKey::new(seed).str("embeddings").rng();
        let entries: Vec<(String, Vec<f64>)> = words
            .iter()
            .map(|w| {
                let v = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                (w.as_ref().to_string(), v)
            })
            .collect();
        Self::from_vectors(dim, entries).expect("dimensions agree")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word).is_some()
    }

    fn lookup(&self, word: &str) -> Option<&[f32]> {
        match self.vectors.get(word) {
            Some(v) => Some(v),
            None => self.vectors.get(&word.to_lowercase()).map(Vec::as_slice),
        }
    }

    /// Cosine similarity of two words; 0 with `oov` set when either is unknown.
    pub fn word_similarity(&self, w1: &str, w2: &str) -> WordSimilarity {
        match (self.lookup(w1), self.lookup(w2)) {
            (Some(a), Some(b)) => {
                let value = if std::ptr::eq(a, b) {
                    1.0
                } else {
                    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
                    dot.clamp(-1.0, 1.0)
                };
                WordSimilarity { value, oov: false }
            }
            _ => WordSimilarity { value: 0.0, oov: true },
        }
    }

    /// Mean of `word_similarity(a, b)` over every cross pair, skipping pairs
    /// with an out-of-vocabulary word. Returns 0 when no pair is usable.
    pub fn avg_token_similarity<A, B>(
        &self,
        tokens_a: &[A],
        tokens_b: &[B],
    ) -> Result<TokenSimilarity, EmbeddingError>
    where
        A: AsRef<str>,
        B: AsRef<str>,
    {
        if tokens_a.is_empty() || tokens_b.is_empty() {
            return Err(EmbeddingError::EmptyTokens);
        }
        let mut sum = 0.0;
        let mut used = 0;
        let mut skipped = 0;
        for a in tokens_a {
            for b in tokens_b {
                let s = self.word_similarity(a.as_ref(), b.as_ref());
                if s.oov {
                    skipped += 1;
                } else {
                    sum += s.value;
                    used += 1;
                }
            }
        }
        let value = if used == 0 { 0.0 } else { sum / used as f64 };
        Ok(TokenSimilarity {
            value,
            pairs_used: used,
            pairs_skipped: skipped,
        })
    }

    /// [`avg_token_similarity`](Self::avg_token_similarity) over tokenized text.
    pub fn text_similarity(&self, a: &str, b: &str) -> Result<TokenSimilarity, EmbeddingError> {
        self.avg_token_similarity(&tokenize(a), &tokenize(b))
    }
}

/// Load a text embedding file: `word v1 ... vD` per line, optionally preceded
/// by a `count dim` header.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_embeddings(&text)
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    let mut declared_dim = None;
    if let Some((_, first)) = lines.peek() {
        let parts: Vec<&str> = first.split_whitespace().collect();
        if parts.len() == 2 && parts.iter().all(|p| p.parse::<usize>().is_ok()) {
            declared_dim = Some(parts[1].parse::<usize>().unwrap());
            lines.next();
        }
    }

    let mut entries = Vec::new();
    let mut dim = declared_dim;
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap_or_default();
        let v = parts
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EmbeddingError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        let expected = *dim.get_or_insert(v.len());
        if v.len() != expected || expected == 0 {
            return Err(EmbeddingError::DimensionMismatch {
                line: i + 1,
                expected,
                found: v.len(),
            });
        }
        entries.push((word.to_string(), v));
    }
    EmbeddingTable::from_vectors(dim.unwrap_or(0), entries)
}

/// Write raw (already normalized) vectors in the text format with a header.
pub fn write_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut words: Vec<&String> = table.vectors.keys().collect();
    words.sort();
    let mut out = Vec::new();
    writeln!(out, "{} {}", words.len(), table.dim)?;
    for w in words {
        let v: Vec<String> = table.vectors[w].iter().map(|x| x.to_string()).collect();
        writeln!(out, "{w} {}", v.join(" "))?;
    }
    fs::write(path, out)
}
