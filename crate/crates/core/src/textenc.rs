//! Hashed character n-gram text embeddings and cosine similarity.
//!
//! Text is lowercased, punctuation becomes whitespace, and each word is
//! padded with `<` / `>` boundary markers before n-grams are taken. Every
//! n-gram is hashed (seeded FNV-1a) into one of `dimension` buckets. A gram
//! seen `c` times contributes `sqrt(c)` to its bucket, then the vector is
//! L2-normalized.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dimension: usize,
    pub ngram_size: usize,
    pub hash_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dimension: 256,
            ngram_size: 3,
            hash_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn check(&self) -> Result<()> {
        if self.dimension < 16 {
            return Err(Error::InvalidConfig(format!(
                "encoder dimension {} < 16",
                self.dimension
            )));
        }
        if !(2..=4).contains(&self.ngram_size) {
            return Err(Error::InvalidConfig(format!(
                "ngram_size {} not in {{2, 3, 4}}",
                self.ngram_size
            )));
        }
        Ok(())
    }
}

/// Unit-norm embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; fails on the zero vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Degenerate("cannot normalize a zero vector".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(PRIME);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Character n-grams of each boundary-padded word. Words whose padded form
/// is shorter than `n` yield the padded word itself.
pub fn ngrams(text: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for w in words(text) {
        let padded: Vec<char> = std::iter::once('<')
            .chain(w.chars())
            .chain(std::iter::once('>'))
            .collect();
        if padded.len() <= n {
            out.push(padded.iter().collect());
        } else {
            out.extend(padded.windows(n).map(|g| g.iter().collect::<String>()));
        }
    }
    out
}

pub fn encode(text: &str, config: &EncoderConfig) -> Result<EmbeddingVector> {
    config.check()?;
    let grams = ngrams(text, config.ngram_size);
    if grams.is_empty() {
        return Err(Error::EmptyText(text.to_string()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for g in &grams {
        *counts.entry(g.as_str()).or_default() += 1;
    }
    let mut values = vec![0.0; config.dimension];
    for (g, c) in counts {
        let bucket = (fnv1a(config.hash_seed, g.as_bytes()) % config.dimension as u64) as usize;
        values[bucket] += (c as f64).sqrt();
    }
    EmbeddingVector::normalized(values)
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(dot(a.values(), b.values()).clamp(-1.0, 1.0))
}

/// Pairwise-summed dot product; symmetric in its arguments bit for bit.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reads `id,v1,v2,...` lines, re-normalizing each vector.
pub fn import_vectors(path: &Path) -> Result<HashMap<String, EmbeddingVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").trim();
        if id.is_empty() {
            return Err(err("missing id".into()));
        }
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("bad component {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(err("no components".into()));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(format!("expected {d} components, found {}", values.len())))
            }
            _ => {}
        }
        let v = EmbeddingVector::normalized(values).map_err(|e| err(e.to_string()))?;
        out.insert(id.to_string(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc(s: &str) -> EmbeddingVector {
        encode(s, &EncoderConfig::default()).unwrap()
    }

    #[test]
    fn deterministic_and_unit() {
        let a = enc("Greek Yogurt");
        assert_eq!(a, enc("Greek Yogurt"));
        let n: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn blank_text_is_an_error() {
        assert!(matches!(
            encode("   ", &EncoderConfig::default()),
            Err(Error::EmptyText(_))
        ));
        assert!(encode("!!! ,,", &EncoderConfig::default()).is_err());
    }

    #[test]
    fn self_similarity_is_one() {
        let v = enc("chicken breast");
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_buckets_are_orthogonal() {
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        a[0] = 1.0;
        b[3] = 2.0;
        let a = EmbeddingVector::normalized(a).unwrap();
        let b = EmbeddingVector::normalized(b).unwrap();
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = EmbeddingVector::normalized(vec![1.0; 16]).unwrap();
        let b = EmbeddingVector::normalized(vec![1.0; 17]).unwrap();
        assert!(cosine(&a, &b).is_err());
    }

    #[test]
    fn related_text_scores_higher() {
        // Frozen from the default configuration.
        let base = enc("chicken breast");
        let near = cosine(&base, &enc("chicken breast, raw")).unwrap();
        let far = cosine(&base, &enc("chocolate cake")).unwrap();
        assert!(near > far);
        assert!((near - NEAR).abs() < 1e-12, "near = {near:.17}");
        assert!((far - FAR).abs() < 1e-12, "far = {far:.17}");
    }

    const NEAR: f64 = 0.901_387_818_865_997_6;
    const FAR: f64 = 0.153_846_153_846_153_85;

    #[test]
    fn padding_and_short_words() {
        assert_eq!(ngrams("ab", 3), vec!["<ab", "ab>"]);
        assert_eq!(ngrams("a", 3), vec!["<a>"]);
        assert_eq!(ngrams("a", 4), vec!["<a>"]);
        assert_eq!(ngrams("Oats, rolled!", 4).len(), 3 + 5);
    }

    #[test]
    fn config_bounds() {
        let bad = EncoderConfig {
            dimension: 8,
            ..Default::default()
        };
        assert!(encode("x", &bad).is_err());
        let bad = EncoderConfig {
            ngram_size: 5,
            ..Default::default()
        };
        assert!(encode("x", &bad).is_err());
    }

    #[test]
    fn import_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "p1,0.6,0.8\np2,3,4\n").unwrap();
        let m = import_vectors(&p).unwrap();
        assert_eq!(m["p1"].values(), &[0.6, 0.8]);
        let v = m["p2"].values();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn import_rejects_ragged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.csv");
        std::fs::write(&p, "p1,0.6,0.8\np2,1,2,3\n").unwrap();
        let err = import_vectors(&p).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in "[a-z ]{1,24}[a-z]", b in "[a-z ]{1,24}[a-z]") {
            let (x, y) = (enc(&a), enc(&b));
            prop_assert_eq!(cosine(&x, &y).unwrap(), cosine(&y, &x).unwrap());
        }

        #[test]
        fn case_and_padding_invariant(s in "[a-zA-Z]{1,10}( [a-zA-Z]{1,10}){0,3}") {
            let padded = format!("  {}\t", s.to_uppercase());
            prop_assert_eq!(enc(&s), enc(&padded));
        }

        #[test]
        fn always_unit_norm(s in "[a-z0-9]{1,12}( [a-z0-9,.]{0,12}){0,4}") {
            let v = enc(&s);
            let n: f64 = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
