//! Dense text vectors for column sentences and cell tokens.
//!
//! Vectors come from a pretrained file in word2vec text format when the key
//! is present, and otherwise from a deterministic signed feature-hashing
//! embedding over character n-grams.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{hash_str, mix64};

#[derive(Debug, Error)]
pub enum TextVecError {
    #[error("cannot read vectors from {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: expected `<count> <dim>`")]
    MalformedHeader,
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("header announces {expected} vectors, file holds {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid hashing config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, TextVecError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorSource {
    File,
    Hashed,
}

/// Key → vector table with a fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorStore {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    source: VectorSource,
}

impl VectorStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> VectorSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Loads a word2vec text file: a `count dim` header, then one
/// `key v1 … v_dim` line per vector. Keys may contain spaces; the last `dim`
/// fields of a line are the values.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TextVecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_vectors(BufReader::new(file))
}

pub fn read_vectors<R: BufRead>(reader: R) -> Result<VectorStore> {
    let mut lines = reader.lines();
    let io_err = |source| TextVecError::Io {
        path: "<vectors>".into(),
        source,
    };
    let header = match lines.next() {
        Some(line) => line.map_err(io_err)?,
        None => return Err(TextVecError::MalformedHeader),
    };
    let mut parts = header.split_whitespace();
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => return Err(TextVecError::MalformedHeader),
        },
        _ => return Err(TextVecError::MalformedHeader),
    };

    let mut entries = HashMap::with_capacity(count);
    let mut found = 0;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 2;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let numeric_tail = fields
            .iter()
            .rev()
            .take_while(|f| f.parse::<f64>().is_ok())
            .count();
        if numeric_tail < dim || fields.len() == dim {
            return Err(TextVecError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: numeric_tail.min(fields.len().saturating_sub(1)),
            });
        }
        let split = fields.len() - dim;
        let key = fields[..split].join(" ");
        let values = fields[split..]
            .iter()
            .map(|f| f.parse::<f64>().expect("checked numeric"))
            .collect();
        if entries.insert(key.clone(), values).is_some() {
            warn!("duplicate vector key `{key}` on line {line_no}; keeping the last");
        }
        found += 1;
    }
    if found != count {
        return Err(TextVecError::CountMismatch {
            expected: count,
            found,
        });
    }
    Ok(VectorStore {
        dim,
        entries,
        source: VectorSource::File,
    })
}

/// Writes vectors in word2vec text format.
pub fn write_vectors<'a, W, T, I>(mut writer: W, dim: usize, rows: I) -> std::io::Result<()>
where
    W: Write,
    T: Display + 'a,
    I: ExactSizeIterator<Item = (&'a str, &'a [T])>,
{
    writeln!(writer, "{} {}", rows.len(), dim)?;
    for (key, values) in rows {
        write!(writer, "{key}")?;
        for v in values {
            write!(writer, " {v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Feature-hashing fallback parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashEmbedConfig {
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub seed: u64,
}

impl Default for HashEmbedConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            ngram_min: 3,
            ngram_max: 6,
            seed: 0,
        }
    }
}

impl HashEmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(TextVecError::InvalidConfig("dim must be positive".into()));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(TextVecError::InvalidConfig(format!(
                "need 0 < ngram_min <= ngram_max, got {}..{}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

/// A vector plus where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TextVector {
    pub values: Vec<f64>,
    pub source: VectorSource,
}

/// Sentence and token embedding provider: optional pretrained stores backed
/// by the hashing fallback.
#[derive(Clone, Debug, Default)]
pub struct TextEmbedder {
    sentences: Option<VectorStore>,
    tokens: Option<VectorStore>,
    hashing: HashEmbedConfig,
}

impl TextEmbedder {
    pub fn hashed(hashing: HashEmbedConfig) -> Result<Self> {
        hashing.validate()?;
        Ok(Self {
            sentences: None,
            tokens: None,
            hashing,
        })
    }

    pub fn with_sentence_store(mut self, store: VectorStore) -> Self {
        self.sentences = Some(store);
        self
    }

    pub fn with_token_store(mut self, store: VectorStore) -> Self {
        self.tokens = Some(store);
        self
    }

    pub fn hashing(&self) -> &HashEmbedConfig {
        &self.hashing
    }

    /// Vector for a column sentence. Input is trimmed before lookup.
    pub fn embed_sentence(&self, text: &str) -> TextVector {
        let text = text.trim();
        if let Some(v) = self.sentences.as_ref().and_then(|s| s.get(text)) {
            return TextVector {
                values: v.to_vec(),
                source: VectorSource::File,
            };
        }
        let dim = self.sentences.as_ref().map_or(self.hashing.dim, |s| s.dim);
        let folded = text.to_lowercase();
        TextVector {
            values: hash_embed(&folded, dim, &self.hashing),
            source: VectorSource::Hashed,
        }
    }

    /// Vector for a cell token; the fallback hashes the boundary-padded token
    /// so near spellings share most of their n-grams.
    pub fn embed_token(&self, token: &str) -> TextVector {
        let token = token.trim();
        if let Some(v) = self.tokens.as_ref().and_then(|s| s.get(token)) {
            return TextVector {
                values: v.to_vec(),
                source: VectorSource::File,
            };
        }
        let dim = self.tokens.as_ref().map_or(self.hashing.dim, |s| s.dim);
        let padded = format!("<{}>", token.to_lowercase());
        TextVector {
            values: hash_embed(&padded, dim, &self.hashing),
            source: VectorSource::Hashed,
        }
    }
}

/// Key under which a column's sentence vector is looked up.
pub fn sentence_key(name: &str, description: Option<&str>) -> String {
    match description.map(str::trim).filter(|d| !d.is_empty()) {
        Some(desc) => format!("{} which means {}", name.trim(), desc),
        None => name.trim().to_string(),
    }
}

/// L2-normalized sum of signed hashed character n-grams.
fn hash_embed(text: &str, dim: usize, cfg: &HashEmbedConfig) -> Vec<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut v = vec![0.0; dim];
    let mut add = |gram: &str| {
        let h = hash_str(gram, cfg.seed);
        let idx = (h % dim as u64) as usize;
        let sign = if mix64(h) >> 63 == 1 { -1.0 } else { 1.0 };
        v[idx] += sign;
    };
    if chars.len() < cfg.ngram_min {
        add(text);
    } else {
        let mut gram = String::new();
        for n in cfg.ngram_min..=cfg.ngram_max.min(chars.len()) {
            for window in chars.windows(n) {
                gram.clear();
                gram.extend(window);
                add(&gram);
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Every contribution cancelled; fall back to a one-hot of the whole text.
        let h = hash_str(text, cfg.seed);
        v[(h % dim as u64) as usize] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Cosine similarity clamped to [−1, 1]; a zero vector yields 0.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(TextVecError::LengthMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        warn!("cosine with a zero vector; returning 0");
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fallback() -> TextEmbedder {
        TextEmbedder::hashed(HashEmbedConfig::default()).unwrap()
    }

    #[test]
    fn loads_word2vec_text() {
        let store = read_vectors("1 3\nabc 0.1 0.2 0.3\n".as_bytes()).unwrap();
        assert_eq!(store.dim(), 3);
        assert_eq!(store.get("abc"), Some(&[0.1, 0.2, 0.3][..]));
        assert_eq!(store.source(), VectorSource::File);
    }

    #[test]
    fn keys_may_contain_spaces() {
        let store =
            read_vectors("1 2\nfunding which means money 2020 0.5 -1\n".as_bytes()).unwrap();
        assert_eq!(
            store.get("funding which means money 2020"),
            Some(&[0.5, -1.0][..])
        );
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            read_vectors("".as_bytes()),
            Err(TextVecError::MalformedHeader)
        ));
        assert!(matches!(
            read_vectors("x 3\n".as_bytes()),
            Err(TextVecError::MalformedHeader)
        ));
        assert!(matches!(
            read_vectors("1 3\nabc 0.1 0.2\n".as_bytes()),
            Err(TextVecError::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            read_vectors("2 1\na 0.1\n".as_bytes()),
            Err(TextVecError::CountMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn duplicate_key_last_wins() {
        let store = read_vectors("2 1\na 1\na 2\n".as_bytes()).unwrap();
        assert_eq!(store.get("a"), Some(&[2.0][..]));
    }

    #[test]
    fn file_vectors_are_bit_exact() {
        let store = read_vectors("1 2\ntok 0.1234567890123 -3e-7\n".as_bytes()).unwrap();
        let emb = fallback().with_token_store(store);
        let v = emb.embed_token("tok");
        assert_eq!(v.source, VectorSource::File);
        assert_eq!(v.values, vec![0.1234567890123, -3e-7]);
        assert_eq!(emb.embed_token("other").source, VectorSource::Hashed);
        assert_eq!(emb.embed_token("other").values.len(), 2);
    }

    #[test]
    fn write_then_read() {
        let mut buf = Vec::new();
        let rows = [("a", &[1.5f32, -2.0][..]), ("b", &[0.25f32, 0.0][..])];
        write_vectors(&mut buf, 2, rows.iter().map(|(k, v)| (*k, *v))).unwrap();
        let store = read_vectors(buf.as_slice()).unwrap();
        assert_eq!(store.get("a"), Some(&[1.5, -2.0][..]));
    }

    #[test]
    fn sentence_keys() {
        assert_eq!(
            sentence_key("funding", Some("the amount of financial support received")),
            "funding which means the amount of financial support received"
        );
        assert_eq!(sentence_key("funding", None), "funding");
        assert_eq!(sentence_key("funding", Some("  ")), "funding");
    }

    #[test]
    fn sentence_embedding_is_deterministic_and_trimmed() {
        let e = fallback();
        let a = e.embed_sentence("funding which means the amount of financial support received");
        let b = e.embed_sentence("funding which means the amount of financial support received  ");
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 300);
        assert!((cosine(&a.values, &b.values).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_spellings_are_closer() {
        let e = fallback();
        let base = e.embed_token("radcliffe").values;
        let typo = e.embed_token("radclife").values;
        let other = e.embed_token("zurich").values;
        assert!(cosine(&base, &typo).unwrap() > cosine(&base, &other).unwrap());
    }

    #[test]
    fn short_token_is_one_gram() {
        let e = TextEmbedder::hashed(HashEmbedConfig {
            ngram_min: 4,
            ..Default::default()
        })
        .unwrap();
        let v = e.embed_token("a").values;
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(TextVecError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn invalid_hash_config() {
        assert!(TextEmbedder::hashed(HashEmbedConfig {
            dim: 0,
            ..Default::default()
        })
        .is_err());
        assert!(TextEmbedder::hashed(HashEmbedConfig {
            ngram_min: 5,
            ngram_max: 4,
            ..Default::default()
        })
        .is_err());
    }

    proptest! {
        #[test]
        fn fallback_vectors_are_unit_norm(s in "\\PC{1,24}") {
            let e = fallback();
            for v in [e.embed_sentence(&s).values, e.embed_token(&s).values] {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
