//! TF-IDF n-gram vectorization, truncated-SVD projections, string
//! similarity helpers, dense-embedding ingestion, and question-answer pair
//! featurization.
//!
//! The pair featurizer is the pluggable encoder of this toolkit: it turns a
//! (question, answer) pair into a small dense vector (projection cosine,
//! normalized BM25+ score, token Jaccard, length ratio, optionally the raw
//! projections) that the trainable scoring heads consume.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Params, InvertedIndex};
use crate::bytesio::{ByteReader, ByteWriter};
use crate::corpus::{strip_accents, Preprocessor};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// All contiguous n-grams of `tokens` for n = 1..=n_max, joined with `_`.
pub fn ngrams(tokens: &[String], n_max: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in 1..=n_max.max(1) {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            out.push(window.join("_"));
        }
    }
    out
}

/// Sparse TF-IDF matrix over an n-gram vocabulary.
///
/// TF is the raw in-document count, IDF is `ln(N / df)`.
#[derive(Debug, Clone)]
pub struct TermDocMatrix {
    terms: Vec<String>,
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    ngram_max: usize,
}

impl TermDocMatrix {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn column_of(&self, term: &str) -> Option<usize> {
        self.vocab.get(term).copied()
    }

    /// Sparse TF-IDF row of training document `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn ngram_max(&self) -> usize {
        self.ngram_max
    }

    /// TF-IDF vector of an unseen document; n-grams outside the vocabulary
    /// are dropped.
    pub fn vector(&self, tokens: &[String]) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for gram in ngrams(tokens, self.ngram_max) {
            if let Some(&col) = self.vocab.get(&gram) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        counts
            .into_iter()
            .map(|(col, tf)| (col, tf * self.idf[col]))
            .collect()
    }

    pub fn dense_column_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_terms(), self.n_docs());
        for (doc, row) in self.rows.iter().enumerate() {
            for &(col, v) in row {
                m.set(col, doc, v);
            }
        }
        m
    }
}

/// Fit TF-IDF over tokenized documents.
pub fn tfidf_fit(corpus: &[Vec<String>], ngram_max: usize) -> Result<TermDocMatrix> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let docs_grams: Vec<Vec<String>> = corpus.iter().map(|t| ngrams(t, ngram_max)).collect();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for grams in &docs_grams {
        for gram in grams.iter().collect::<BTreeSet<_>>() {
            *df.entry(gram.clone()).or_insert(0) += 1;
        }
    }
    let terms: Vec<String> = df.keys().cloned().collect();
    let vocab: BTreeMap<String, usize> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let n = corpus.len() as f64;
    let idf: Vec<f64> = terms.iter().map(|t| (n / df[t] as f64).ln()).collect();
    let rows = docs_grams
        .iter()
        .map(|grams| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for gram in grams {
                *counts.entry(vocab[gram]).or_insert(0.0) += 1.0;
            }
            counts
                .into_iter()
                .map(|(col, tf)| (col, tf * idf[col]))
                .collect()
        })
        .collect();
    Ok(TermDocMatrix {
        terms,
        vocab,
        idf,
        rows,
        ngram_max,
    })
}

/// Rank-k truncated SVD of the (terms x docs) matrix: `T ~ U S V^T`.
///
/// New documents project into the k-space via `S^{-1} U^T d`.
#[derive(Debug, Clone)]
pub struct LsaProjection {
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
}

impl LsaProjection {
    pub fn fit(t: &TermDocMatrix, k: usize) -> Result<Self> {
        Self::from_matrix(&t.dense_column_matrix(), k)
    }

    /// `a` is terms x docs; columns are documents.
    pub fn from_matrix(a: &Matrix, k: usize) -> Result<Self> {
        let svd = matrix::svd_truncated(a, k)?;
        Ok(LsaProjection {
            u: svd.u,
            sigma: svd.sigma,
            v: svd.v,
        })
    }

    pub fn k(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_terms(&self) -> usize {
        self.u.rows()
    }

    pub fn n_docs(&self) -> usize {
        self.v.rows()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    /// Row of V for training document `j`.
    pub fn doc_row(&self, j: usize) -> &[f64] {
        self.v.row(j)
    }

    /// `S^{-1} U^T d` for a dense document vector of length `n_terms`.
    pub fn project(&self, d: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.u.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.u.rows(),
                got: d.len(),
            });
        }
        let mut out = self.u.transpose_matvec(d)?;
        self.rescale(&mut out)?;
        Ok(out)
    }

    /// Same as [`Self::project`] for a sparse document vector.
    pub fn project_sparse(&self, d: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k()];
        for &(row, value) in d {
            if row >= self.u.rows() {
                return Err(Error::DimensionMismatch {
                    expected: self.u.rows(),
                    got: row + 1,
                });
            }
            let u_row = self.u.row(row);
            for (o, &u_val) in out.iter_mut().zip(u_row) {
                *o += value * u_val;
            }
        }
        self.rescale(&mut out)?;
        Ok(out)
    }

    fn rescale(&self, out: &mut [f64]) -> Result<()> {
        for (o, &s) in out.iter_mut().zip(&self.sigma) {
            if s == 0.0 {
                return Err(Error::InvalidInput("zero singular value".into()));
            }
            *o /= s;
        }
        Ok(())
    }

    pub(crate) fn from_parts(u: Matrix, sigma: Vec<f64>, v: Matrix) -> Self {
        LsaProjection { u, sigma, v }
    }
}

/// Cosine similarity; errors on zero-norm input or mismatched dimensions.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let nu = matrix::norm(u);
    let nv = matrix::norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidInput("zero-norm vector".into()));
    }
    Ok(matrix::dot(u, v) / (nu * nv))
}

/// Unit-cost edit distance (insert, delete, substitute) over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn canonical(text: &str) -> String {
    let lowered = strip_accents(&text.to_lowercase());
    let cleaned: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Catalog lookup by exact match after canonicalization, falling back to the
/// entry with the smallest edit-distance ratio if it is below the threshold.
pub fn prefilter_match(
    text: &str,
    catalog: &[(String, String)],
    max_edit_ratio: f64,
) -> Option<String> {
    let canon = canonical(text);
    for (entry, label) in catalog {
        if canonical(entry) == canon {
            return Some(label.clone());
        }
    }
    let mut best: Option<(f64, &String)> = None;
    for (entry, label) in catalog {
        let entry_canon = canonical(entry);
        let denom = canon.chars().count().max(entry_canon.chars().count()).max(1);
        let ratio = levenshtein(&canon, &entry_canon) as f64 / denom as f64;
        if best.as_ref().is_none_or(|(r, _)| ratio < *r) {
            best = Some((ratio, label));
        }
    }
    match best {
        Some((ratio, label)) if ratio <= max_edit_ratio => Some(label.clone()),
        _ => None,
    }
}

/// Id -> dense vector table in word2vec text format.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Parse the text format: header `n dim`, then `id v1 .. vdim` per line.
    pub fn parse(reader: impl Read, origin: &Path) -> Result<Self> {
        let mut content = String::new();
        let mut reader = std::io::BufReader::new(reader);
        reader
            .read_to_string(&mut content)
            .map_err(|e| Error::io(origin, e))?;
        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty embedding file".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                msg: "expected `n dim` header".into(),
            })?;
        let dim: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                msg: "expected `n dim` header".into(),
            })?;
        let mut vectors = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = parts.next().unwrap().to_string();
            let values: Vec<f64> = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if values.len() != dim || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected {dim} finite values, got {}", values.len()),
                });
            }
            vectors.insert(id, values);
        }
        if vectors.len() != n {
            return Err(Error::InvalidInput(format!(
                "header declared {n} vectors, file has {}",
                vectors.len()
            )));
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, path)
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

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let va = self
            .get(a)
            .ok_or_else(|| Error::InvalidInput(format!("unknown id {a}")))?;
        let vb = self
            .get(b)
            .ok_or_else(|| Error::InvalidInput(format!("unknown id {b}")))?;
        cosine(va, vb)
    }
}

/// A fitted preprocessing + TF-IDF + SVD stack, self-contained for reuse.
#[derive(Debug, Clone)]
pub struct LsaModel {
    pub preprocessor: Preprocessor,
    terms: Vec<String>,
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
    ngram_max: usize,
    projection: LsaProjection,
}

impl LsaModel {
    pub fn fit(
        texts: &[String],
        preprocessor: Preprocessor,
        ngram_max: usize,
        k: usize,
    ) -> Result<Self> {
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| preprocessor.run(t)).collect();
        let tdm = tfidf_fit(&tokenized, ngram_max)?;
        let projection = LsaProjection::fit(&tdm, k)?;
        Ok(LsaModel {
            preprocessor,
            terms: tdm.terms.clone(),
            vocab: tdm.vocab.clone(),
            idf: tdm.idf.clone(),
            ngram_max,
            projection,
        })
    }

    pub fn k(&self) -> usize {
        self.projection.k()
    }

    pub fn projection(&self) -> &LsaProjection {
        &self.projection
    }

    pub fn embed_tokens(&self, tokens: &[String]) -> Vec<f64> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for gram in ngrams(tokens, self.ngram_max) {
            if let Some(&col) = self.vocab.get(&gram) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        let sparse: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(col, tf)| (col, tf * self.idf[col]))
            .collect();
        // Vocabulary columns always exist, and sigma > 0 by construction.
        self.projection.project_sparse(&sparse).unwrap_or_default()
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        self.embed_tokens(&self.preprocessor.run(text))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(b"FQKL");
        w.u32(1);
        for flag in [
            self.preprocessor.lowercase,
            self.preprocessor.strip_accents,
            self.preprocessor.remove_punct,
            self.preprocessor.remove_numbers,
            self.preprocessor.stemming,
        ] {
            w.u8(flag as u8);
        }
        w.u32(self.preprocessor.stopwords.len() as u32);
        for word in &self.preprocessor.stopwords {
            w.str(word);
        }
        w.u32(self.ngram_max as u32);
        w.u32(self.terms.len() as u32);
        for (term, &idf) in self.terms.iter().zip(&self.idf) {
            w.str(term);
            w.f64(idf);
        }
        let k = self.projection.k();
        w.u32(k as u32);
        w.u32(self.projection.n_docs() as u32);
        for &s in self.projection.sigma() {
            w.f64(s);
        }
        for v in self.projection.u().data() {
            w.f64(*v);
        }
        for v in self.projection.v().data() {
            w.f64(*v);
        }
        Ok(w.into_vec())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(b"FQKL")?;
        let version = r.u32()?;
        if version != 1 {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let lowercase = r.u8()? != 0;
        let strip = r.u8()? != 0;
        let punct = r.u8()? != 0;
        let numbers = r.u8()? != 0;
        let stemming = r.u8()? != 0;
        let n_stop = r.u32()? as usize;
        let mut stopwords = BTreeSet::new();
        for _ in 0..n_stop {
            stopwords.insert(r.str()?);
        }
        let preprocessor = Preprocessor {
            lowercase,
            strip_accents: strip,
            remove_punct: punct,
            remove_numbers: numbers,
            stopwords,
            stemming,
        };
        let ngram_max = r.u32()? as usize;
        let n_terms = r.u32()? as usize;
        let mut terms = Vec::with_capacity(n_terms);
        let mut idf = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            terms.push(r.str()?);
            idf.push(r.f64()?);
        }
        let k = r.u32()? as usize;
        let n_docs = r.u32()? as usize;
        let mut sigma = Vec::with_capacity(k);
        for _ in 0..k {
            sigma.push(r.f64()?);
        }
        let mut u_data = Vec::with_capacity(n_terms * k);
        for _ in 0..n_terms * k {
            u_data.push(r.f64()?);
        }
        let mut v_data = Vec::with_capacity(n_docs * k);
        for _ in 0..n_docs * k {
            v_data.push(r.f64()?);
        }
        let vocab = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(LsaModel {
            preprocessor,
            terms,
            vocab,
            idf,
            ngram_max,
            projection: LsaProjection::from_parts(
                Matrix::from_vec(n_terms, k, u_data)?,
                sigma,
                Matrix::from_vec(n_docs, k, v_data)?,
            ),
        })
    }
}

/// Knobs for [`PairFeaturizer`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Append both projections to the cross features.
    pub include_lsa_vectors: bool,
    pub bm25: Bm25Params,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            include_lsa_vectors: true,
            bm25: Bm25Params::default(),
        }
    }
}

/// Deterministic (question, answer) feature vectors:
/// `[projection cosine, per-question min-max BM25+, token Jaccard,
/// length ratio, optional q and a projections]`.
#[derive(Debug, Clone)]
pub struct PairFeaturizer {
    lsa: LsaModel,
    index: InvertedIndex,
    cfg: FeatureConfig,
}

impl PairFeaturizer {
    /// `answers` is the candidate pool the BM25 statistics come from.
    pub fn new(lsa: LsaModel, answers: &[(i64, String)], cfg: FeatureConfig) -> Result<Self> {
        cfg.bm25.validate()?;
        let docs: Vec<(i64, Vec<String>)> = answers
            .iter()
            .map(|(id, text)| (*id, lsa.preprocessor.run(text)))
            .collect();
        let index = crate::bm25::build_index(&docs)?;
        if index.n_docs() == 0 {
            return Err(Error::InvalidInput("empty answer pool".into()));
        }
        Ok(PairFeaturizer { lsa, index, cfg })
    }

    pub fn lsa(&self) -> &LsaModel {
        &self.lsa
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        4 + if self.cfg.include_lsa_vectors {
            2 * self.lsa.k()
        } else {
            0
        }
    }

    /// BM25+ of a query against arbitrary answer tokens, using the pool's
    /// document-frequency and length statistics.
    fn bm25_text(&self, q_tokens: &[String], a_tokens: &[String]) -> f64 {
        let params = &self.cfg.bm25;
        let n = self.index.n_docs() as f64;
        let avgdl = self.index.avgdl();
        let length_norm = if avgdl > 0.0 {
            a_tokens.len() as f64 / avgdl
        } else {
            0.0
        };
        let mut total = 0.0;
        for term in q_tokens {
            let tf = a_tokens.iter().filter(|t| *t == term).count() as f64;
            let df = self.index.document_frequency(term) as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let sat = tf * (params.k1 + 1.0)
                / (tf + params.k1 * (1.0 - params.b + params.b * length_norm));
            total += idf * (sat + params.delta);
        }
        total
    }

    fn cross_features(
        &self,
        q_tokens: &[String],
        q_proj: &[f64],
        a_tokens: &[String],
    ) -> (f64, f64, f64, Vec<f64>) {
        let a_proj = self.lsa.embed_tokens(a_tokens);
        let cos = cosine(q_proj, &a_proj).unwrap_or(0.0);
        let q_set: BTreeSet<&String> = q_tokens.iter().collect();
        let a_set: BTreeSet<&String> = a_tokens.iter().collect();
        let union = q_set.union(&a_set).count();
        let jaccard = if union == 0 {
            1.0
        } else {
            q_set.intersection(&a_set).count() as f64 / union as f64
        };
        let (lq, la) = (q_tokens.len() as f64, a_tokens.len() as f64);
        let length_ratio = if lq.max(la) == 0.0 {
            1.0
        } else {
            lq.min(la) / lq.max(la)
        };
        (cos, jaccard, length_ratio, a_proj)
    }

    /// Features for every candidate of one question; the BM25 component is
    /// min-max normalized within the candidate group (0.5 when degenerate).
    pub fn question_features(
        &self,
        question: &str,
        candidates: &[(i64, String)],
    ) -> Result<Vec<Vec<f64>>> {
        if candidates.is_empty() {
            return Err(Error::InvalidInput("no candidates".into()));
        }
        let q_tokens = self.lsa.preprocessor.run(question);
        let q_proj = self.lsa.embed_tokens(&q_tokens);
        let cand_tokens: Vec<Vec<String>> = candidates
            .iter()
            .map(|(_, text)| self.lsa.preprocessor.run(text))
            .collect();
        let raw_bm25: Vec<f64> = cand_tokens
            .iter()
            .map(|a| self.bm25_text(&q_tokens, a))
            .collect();
        let min = raw_bm25.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = raw_bm25.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        Ok(cand_tokens
            .iter()
            .zip(&raw_bm25)
            .map(|(a_tokens, &raw)| {
                let bm25_norm = if span > 0.0 { (raw - min) / span } else { 0.5 };
                let (cos, jaccard, length_ratio, a_proj) =
                    self.cross_features(&q_tokens, &q_proj, a_tokens);
                let mut f = vec![cos, bm25_norm, jaccard, length_ratio];
                if self.cfg.include_lsa_vectors {
                    f.extend_from_slice(&q_proj);
                    f.extend_from_slice(&a_proj);
                }
                f
            })
            .collect())
    }

    /// Single-pair convenience; equivalent to a one-candidate group.
    pub fn pair(&self, question: &str, answer: &str) -> Result<Vec<f64>> {
        Ok(self
            .question_features(question, &[(0, answer.to_string())])?
            .remove(0))
    }
}
