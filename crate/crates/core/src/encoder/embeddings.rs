//! Pretrained word vectors in the plain-text word2vec/GloVe layout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// What a lookup of an unknown word returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// The zero vector; the token still occupies a time step.
    Zero,
}

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    zero: Vec<f64>,
    oov: OovPolicy,
    duplicates: usize,
    hash: String,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs. The first occurrence of a
    /// word wins; later ones are counted in [`duplicates`](Self::duplicates).
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<EmbeddingTable>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut index = HashMap::new();
        let mut vectors = Vec::new();
        let mut duplicates = 0;
        let mut hasher = Sha256::new();
        hasher.update((dim as u64).to_le_bytes());
        for (line, (word, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::EmbeddingDimension {
                    line: line + 1,
                    expected: dim,
                    found: vector.len(),
                });
            }
            let word = word.into();
            if index.contains_key(&word) {
                duplicates += 1;
                continue;
            }
            hasher.update((word.len() as u64).to_le_bytes());
            hasher.update(word.as_bytes());
            for x in &vector {
                hasher.update(x.to_le_bytes());
            }
            index.insert(word, vectors.len() / dim.max(1));
            vectors.extend(vector);
        }
        Ok(EmbeddingTable {
            dim,
            index,
            vectors,
            zero: vec![0.0; dim],
            oov: OovPolicy::Zero,
            duplicates,
            hash: hex::encode(hasher.finalize()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    /// Embeddings are never updated by training.
    pub fn is_frozen(&self) -> bool {
        true
    }

    /// Content hash over words and vectors in table order.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Total lookup: unknown words resolve through the OOV policy.
    pub fn lookup(&self, word: &str) -> &[f64] {
        match self.get(word) {
            Some(v) => v,
            None => match self.oov {
                OovPolicy::Zero => &self.zero,
            },
        }
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let count = parts.next()?.parse().ok()?;
    let dim = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((count, dim))
}

/// Reads a text embedding file: an optional `count dimension` header line,
/// then one `word v1 v2 ...` line per word.
pub fn load_embeddings(path: &Path, dimension: usize) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 1 {
            if let Some((_, declared)) = parse_header(&line) {
                if declared != dimension {
                    return Err(Error::EmbeddingDimension {
                        line: 1,
                        expected: dimension,
                        found: declared,
                    });
                }
                continue;
            }
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap().to_string();
        let values = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("bad vector component: {e}"),
            })?;
        if values.len() != dimension {
            return Err(Error::EmbeddingDimension {
                line: line_no,
                expected: dimension,
                found: values.len(),
            });
        }
        entries.push((word, values));
    }
    let table = EmbeddingTable::from_entries(dimension, entries)?;
    if table.duplicates() > 0 {
        log::warn!("{}: {} duplicate words ignored", path.display(), table.duplicates());
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), contents).unwrap();
        f
    }

    #[test]
    fn loads_small_file() {
        let f = write("a 1 2 3\nb 4 5 6\n");
        let t = load_embeddings(f.path(), 3).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b").unwrap(), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn header_line_is_optional() {
        let f = write("2 3\na 1 2 3\nb 4 5 6\n");
        assert_eq!(load_embeddings(f.path(), 3).unwrap().len(), 2);
        assert!(matches!(
            load_embeddings(f.path(), 4),
            Err(Error::EmbeddingDimension { line: 1, .. })
        ));
    }

    #[test]
    fn short_line_names_line() {
        let f = write("a 1 2 3\nb 4 5\n");
        match load_embeddings(f.path(), 3) {
            Err(Error::EmbeddingDimension { line, expected, found }) => {
                assert_eq!((line, expected, found), (2, 3, 2))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_first_wins() {
        let f = write("a 1 1\na 2 2\nb 0 0\n");
        let t = load_embeddings(f.path(), 2).unwrap();
        assert_eq!(t.duplicates(), 1);
        assert_eq!(t.get("a").unwrap(), [1.0, 1.0]);
    }

    #[test]
    fn unseen_word_is_zero() {
        let t = EmbeddingTable::from_entries(3, [("a", vec![1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(t.lookup("zzz"), [0.0, 0.0, 0.0]);
        assert!(t.get("zzz").is_none());
    }

    #[test]
    fn hash_tracks_content() {
        let a = EmbeddingTable::from_entries(1, [("a", vec![1.0])]).unwrap();
        let b = EmbeddingTable::from_entries(1, [("a", vec![1.5])]).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), EmbeddingTable::from_entries(1, [("a", vec![1.0])]).unwrap().hash());
    }
}
