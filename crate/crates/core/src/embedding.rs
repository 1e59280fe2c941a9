//! Word vectors, caption composition and the two distance functions used by
//! every later stage.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Fixed-length vector with finite components.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(DenseVector(components))
    }

    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_len(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &DenseVector) -> Result<()> {
        check_len(self, other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.0 {
            *c *= factor;
        }
    }
}

impl<'de> Deserialize<'de> for DenseVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let components = Vec::<f64>::deserialize(deserializer)?;
        DenseVector::new(components).map_err(serde::de::Error::custom)
    }
}

fn check_len(a: &DenseVector, b: &DenseVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Cosine similarity in `[-1, 1]`. A zero vector on either side yields 0.
pub fn cosine_similarity(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_len(a, b)?;
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    /// `token<TAB>c1<TAB>...<TAB>cD`, one token per line.
    #[default]
    Tsv,
    /// word2vec binary: an ASCII `count dim` header, then per entry the token,
    /// one space, and `dim` little-endian `f32` values.
    Binary,
}

/// Immutable token → vector map. Tokens are normalised on the way in and on
/// lookup, so lookups are case-insensitive.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, DenseVector>,
    warnings: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(EmbeddingTable {
            dimension,
            entries: HashMap::new(),
            warnings: Vec::new(),
        })
    }

    /// Builds a table from in-memory pairs. Duplicates keep the first entry.
    pub fn from_pairs<I, S>(dimension: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut table = EmbeddingTable::new(dimension)?;
        for (token, components) in pairs {
            let vector = DenseVector::new(components)?;
            if vector.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: vector.len(),
                });
            }
            table.insert(token.as_ref(), vector);
        }
        Ok(table)
    }

    /// Returns false (and records a warning) if the token was already present.
    fn insert(&mut self, raw_token: &str, vector: DenseVector) -> bool {
        let token = text::normalize(raw_token);
        if token.is_empty() {
            self.warnings
                .push(format!("token `{raw_token}` is empty after normalisation; skipped"));
            return false;
        }
        if self.entries.contains_key(&token) {
            log::warn!("duplicate embedding for `{token}`; keeping the first");
            self.warnings
                .push(format!("duplicate token `{token}`; first occurrence kept"));
            return false;
        }
        self.entries.insert(token, vector);
        true
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ingestion warnings (duplicates, tokens lost to normalisation).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn get(&self, token: &str) -> Option<&DenseVector> {
        if let Some(v) = self.entries.get(token) {
            return Some(v);
        }
        self.entries.get(&text::normalize(token))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some()
    }

    /// Sum of the vectors of every whitespace-separated word in `phrase`.
    /// `None` if the phrase is empty or any word is out of vocabulary.
    pub fn phrase_vector(&self, phrase: &str) -> Option<DenseVector> {
        let mut sum = DenseVector::zeros(self.dimension);
        let mut words = 0;
        for word in phrase.split_whitespace() {
            let v = self.get(word)?;
            sum.add_scaled(1.0, v).ok()?;
            words += 1;
        }
        (words > 0).then_some(sum)
    }
}

pub fn load_embeddings_file(
    path: &Path,
    format: EmbeddingFormat,
    dimension: usize,
) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_embeddings(BufReader::new(file), format, dimension, &path.display().to_string())
}

/// Parses an embedding stream. `source_name` is used in error messages.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    format: EmbeddingFormat,
    dimension: usize,
    source_name: &str,
) -> Result<EmbeddingTable> {
    let table = match format {
        EmbeddingFormat::Tsv => load_tsv(reader, dimension, source_name)?,
        EmbeddingFormat::Binary => load_word2vec_binary(reader, dimension, source_name)?,
    };
    if table.is_empty() {
        return Err(Error::EmptyInput(source_name.to_string()));
    }
    Ok(table)
}

fn load_tsv<R: BufRead>(reader: R, dimension: usize, source_name: &str) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dimension)?;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::ingest(source_name, line_no, e.to_string()))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let token = fields.next().unwrap_or_default();
        let components = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::ingest(source_name, line_no, format!("`{f}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if components.len() != dimension {
            return Err(Error::ingest(
                source_name,
                line_no,
                format!(
                    "expected {dimension} components, found {}",
                    components.len()
                ),
            ));
        }
        let vector = DenseVector::new(components)
            .map_err(|_| Error::ingest(source_name, line_no, "non-finite component"))?;
        table.insert(token, vector);
    }
    Ok(table)
}

fn load_word2vec_binary<R: BufRead>(
    mut reader: R,
    dimension: usize,
    source_name: &str,
) -> Result<EmbeddingTable> {
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::ingest(source_name, 1, e.to_string()))?;
    if header.trim().is_empty() {
        return Err(Error::EmptyInput(source_name.to_string()));
    }
    let parts: Vec<&str> = header.split_whitespace().collect();
    let parse = |s: Option<&&str>| -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ingest(source_name, 1, format!("bad header `{}`", header.trim())))
    };
    let count = parse(parts.first())?;
    let file_dim = parse(parts.get(1))?;
    if file_dim != dimension {
        return Err(Error::ingest(
            source_name,
            1,
            format!("header declares dimension {file_dim}, expected {dimension}"),
        ));
    }

    let mut table = EmbeddingTable::new(dimension)?;
    let mut buf = vec![0u8; dimension * 4];
    for entry in 0..count {
        let record = entry + 2;
        let mut word = Vec::new();
        reader
            .read_until(b' ', &mut word)
            .map_err(|e| Error::ingest(source_name, record, e.to_string()))?;
        if word.last() != Some(&b' ') {
            return Err(Error::ingest(source_name, record, "truncated entry"));
        }
        word.pop();
        let word = String::from_utf8_lossy(&word).trim().to_string();
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::ingest(source_name, record, "truncated vector"))?;
        let components: Vec<f64> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let vector = DenseVector::new(components)
            .map_err(|_| Error::ingest(source_name, record, "non-finite component"))?;
        table.insert(&word, vector);
    }
    Ok(table)
}

/// Tokens removed before composing a caption vector.
#[derive(Debug, Clone)]
pub struct StopwordList {
    tokens: HashSet<String>,
}

impl StopwordList {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens: HashSet<String> = tokens
            .into_iter()
            .map(|t| text::normalize(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(Error::EmptyInput("stopword list".into()));
        }
        Ok(StopwordList { tokens })
    }

    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::ingest(source_name, idx + 1, e.to_string()))?;
            tokens.push(line);
        }
        StopwordList::new(tokens).map_err(|_| Error::EmptyInput(source_name.to_string()))
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        StopwordList::load(BufReader::new(file), &path.display().to_string())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Result of composing a caption vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionVector {
    pub vector: DenseVector,
    /// Number of token vectors that were summed.
    pub coverage: usize,
    /// Non-stopword tokens that had no vector.
    pub missing: Vec<String>,
}

/// Sums the vectors of the non-stopword, in-vocabulary tokens. The result is
/// the zero vector when nothing survives.
pub fn caption_vector<S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable,
    stopwords: &StopwordList,
) -> CaptionVector {
    let mut vector = DenseVector::zeros(table.dimension());
    let mut coverage = 0;
    let mut missing = Vec::new();
    for token in tokens.iter().map(AsRef::as_ref) {
        if stopwords.contains(token) {
            continue;
        }
        match table.get(token) {
            Some(v) => {
                vector
                    .add_scaled(1.0, v)
                    .expect("table vectors share the table dimension");
                coverage += 1;
            }
            None => missing.push(token.to_string()),
        }
    }
    CaptionVector {
        vector,
        coverage,
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> DenseVector {
        DenseVector::new(c.to_vec()).unwrap()
    }

    fn tsv(input: &str, dim: usize) -> Result<EmbeddingTable> {
        load_embeddings(input.as_bytes(), EmbeddingFormat::Tsv, dim, "test")
    }

    #[test]
    fn tsv_single_line() {
        let t = tsv("cat\t0.1\t0.2\n", 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat"), Some(&v(&[0.1, 0.2])));
        assert!(t.warnings().is_empty());
    }

    #[test]
    fn tsv_duplicate_keeps_first() {
        let t = tsv("cat\t0.1\t0.2\ncat\t9\t9\n", 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat"), Some(&v(&[0.1, 0.2])));
        assert_eq!(t.warnings().len(), 1);
    }

    #[test]
    fn tsv_wrong_component_count_names_line() {
        let err = tsv("dog\t1\t2\ncat\t0.1\n", 2).unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tsv_empty_stream() {
        assert!(matches!(tsv("", 2), Err(Error::EmptyInput(_))));
        assert!(matches!(tsv("\n\n", 2), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn tsv_rejects_garbage_and_non_finite() {
        assert!(matches!(tsv("cat\tx\t1\n", 2), Err(Error::Ingest { line: 1, .. })));
        assert!(matches!(tsv("cat\tNaN\t1\n", 2), Err(Error::Ingest { line: 1, .. })));
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let t = tsv("Cat\t1\t0\n", 2).unwrap();
        assert!(t.contains("cat"));
        assert!(t.contains("CAT"));
    }

    #[test]
    fn binary_roundtrip() {
        let mut bytes = b"2 3\n".to_vec();
        for (word, vals) in [("cat", [1.0f32, 2.0, 3.0]), ("dog", [0.5, -0.5, 0.25])] {
            bytes.extend_from_slice(word.as_bytes());
            bytes.push(b' ');
            for x in vals {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            bytes.push(b'\n');
        }
        let t = load_embeddings(&bytes[..], EmbeddingFormat::Binary, 3, "bin").unwrap();
        assert_eq!(t.get("cat"), Some(&v(&[1.0, 2.0, 3.0])));
        assert_eq!(t.get("dog"), Some(&v(&[0.5, -0.5, 0.25])));
    }

    #[test]
    fn binary_dimension_and_truncation_errors() {
        let bytes = b"1 3\ncat ".to_vec();
        assert!(load_embeddings(&bytes[..], EmbeddingFormat::Binary, 4, "bin").is_err());
        assert!(matches!(
            load_embeddings(&bytes[..], EmbeddingFormat::Binary, 3, "bin"),
            Err(Error::Ingest { line: 2, .. })
        ));
        assert!(matches!(
            load_embeddings(&b""[..], EmbeddingFormat::Binary, 3, "bin"),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[1., 0.]), &v(&[1., 0.])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1., 0.]), &v(&[0., 1.])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&v(&[0., 0.]), &v(&[1., 1.])).unwrap(), 0.0);
        assert!(cosine_similarity(&v(&[1.]), &v(&[1., 0.])).is_err());
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_distance(&v(&[0., 0.]), &v(&[3., 4.])).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&v(&[2., 7.]), &v(&[2., 7.])).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&v(&[1.]), &v(&[4.])).unwrap(), 3.0);
        assert!(euclidean_distance(&v(&[1.]), &v(&[1., 2.])).is_err());
    }

    #[test]
    fn caption_vector_examples() {
        let t = EmbeddingTable::from_pairs(
            2,
            [("cat", vec![0.1, 0.2]), ("red", vec![1.0, 0.0]), ("dog", vec![0.0, 1.0])],
        )
        .unwrap();
        let a = StopwordList::new(["a"]).unwrap();
        let cv = caption_vector(&["a", "cat"], &t, &a);
        assert_eq!((cv.vector, cv.coverage), (v(&[0.1, 0.2]), 1));

        let at = StopwordList::new(["a", "the"]).unwrap();
        let cv = caption_vector(&["a", "the"], &t, &at);
        assert!(cv.vector.is_zero());
        assert_eq!(cv.coverage, 0);

        let cv = caption_vector(&["red", "dog", "zebra"], &t, &a);
        assert_eq!((cv.vector, cv.coverage), (v(&[1.0, 1.0]), 2));
        assert_eq!(cv.missing, vec!["zebra".to_string()]);
    }

    #[test]
    fn empty_stopwords_rejected() {
        assert!(StopwordList::new(Vec::<String>::new()).is_err());
        assert!(StopwordList::load(&b"\n  \n"[..], "sw").is_err());
    }

    #[test]
    fn phrase_vector_sums_words() {
        let t = EmbeddingTable::from_pairs(2, [("tennis", vec![1.0, 0.0]), ("ball", vec![0.0, 2.0])])
            .unwrap();
        assert_eq!(t.phrase_vector("tennis ball"), Some(v(&[1.0, 2.0])));
        assert_eq!(t.phrase_vector("tennis racket"), None);
        assert_eq!(t.phrase_vector(""), None);
    }

    fn vocab_table() -> (EmbeddingTable, Vec<String>) {
        let words: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let pairs = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), vec![i as f64 * 0.5 - 1.0, (i * i) as f64 * 0.1, 1.0]));
        (EmbeddingTable::from_pairs(3, pairs).unwrap(), words)
    }

    fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, len)
    }

    proptest! {
        #[test]
        fn caption_vector_permutation_invariant(idx in prop::collection::vec(0usize..8, 0..12), seed in any::<u64>()) {
            let (table, words) = vocab_table();
            let sw = StopwordList::new(["w0"]).unwrap();
            let tokens: Vec<&str> = idx.iter().map(|i| words[*i].as_str()).collect();
            let mut shuffled = tokens.clone();
            // deterministic rotation + reversal as the permutation
            if !shuffled.is_empty() {
                let k = (seed as usize) % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            let a = caption_vector(&tokens, &table, &sw);
            let b = caption_vector(&shuffled, &table, &sw);
            prop_assert_eq!(a.coverage, b.coverage);
            for (x, y) in a.vector.as_slice().iter().zip(b.vector.as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn caption_vector_ignores_appended_stopword(idx in prop::collection::vec(0usize..8, 0..12)) {
            let (table, words) = vocab_table();
            let sw = StopwordList::new(["w0", "w3"]).unwrap();
            let mut tokens: Vec<&str> = idx.iter().map(|i| words[*i].as_str()).collect();
            let base = caption_vector(&tokens, &table, &sw);
            tokens.push("w3");
            prop_assert_eq!(caption_vector(&tokens, &table, &sw), base);
        }

        #[test]
        fn cosine_scale_invariant(a in finite_vec(4), k in 0.001f64..1000.0) {
            let a = DenseVector::new(a).unwrap();
            prop_assume!(a.norm() > 1e-6);
            let mut b = a.clone();
            b.scale(k);
            prop_assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn euclidean_symmetric_and_triangle(a in finite_vec(5), b in finite_vec(5), c in finite_vec(5)) {
            let (a, b, c) = (DenseVector::new(a).unwrap(), DenseVector::new(b).unwrap(), DenseVector::new(c).unwrap());
            let ab = euclidean_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, euclidean_distance(&b, &a).unwrap());
            let ac = euclidean_distance(&a, &c).unwrap();
            let cb = euclidean_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
        }
    }
}
