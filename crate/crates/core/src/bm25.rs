//! Inverted index and BM25+ relevance scoring.
//!
//! The score of a document D for a query Q is
//!
//! ```text
//! score(D, Q) = sum over query terms q of
//!     IDF(q) * [ TF(q, D) * (k1 + 1) / (TF(q, D) + k1 * (1 - b + b * |D| / avgdl)) + delta ]
//! ```
//!
//! evaluated literally: the sum runs over all query terms and `delta` is
//! added unconditionally, so a term absent from a document still contributes
//! `IDF * delta`. Adding a query term unknown to the corpus therefore shifts
//! every document by the same constant and never changes the ranking.
//! `IDF(q) = ln(1 + (N - df + 0.5) / (df + 0.5))`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub delta: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            delta: 1.0,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) {
            return Err(Error::InvalidInput(format!("k1 = {} must be > 0", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidInput(format!("b = {} not in [0, 1]", self.b)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "delta = {} must be >= 0",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<(i64, u32)>>,
    doc_lengths: BTreeMap<i64, u32>,
    avgdl: f64,
    n_docs: usize,
}

impl InvertedIndex {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_length(&self, doc_id: i64) -> Option<u32> {
        self.doc_lengths.get(&doc_id).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = i64> + '_ {
        self.doc_lengths.keys().copied()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_frequency(&self, term: &str, doc_id: i64) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| {
                p.binary_search_by_key(&doc_id, |&(d, _)| d)
                    .ok()
                    .map(|i| p[i].1)
            })
            .unwrap_or(0)
    }
}

/// Exact postings and length statistics for the given tokenized documents.
pub fn build_index(docs: &[(i64, Vec<String>)]) -> Result<InvertedIndex> {
    let mut doc_lengths = BTreeMap::new();
    let mut postings: BTreeMap<String, Vec<(i64, u32)>> = BTreeMap::new();
    for (doc_id, tokens) in docs {
        if doc_lengths.insert(*doc_id, tokens.len() as u32).is_some() {
            return Err(Error::InvalidInput(format!("duplicate doc_id {doc_id}")));
        }
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings
                .entry(term.to_string())
                .or_default()
                .push((*doc_id, tf));
        }
    }
    for list in postings.values_mut() {
        list.sort_by_key(|&(d, _)| d);
    }
    let n_docs = doc_lengths.len();
    let avgdl = if n_docs == 0 {
        0.0
    } else {
        doc_lengths.values().map(|&l| l as f64).sum::<f64>() / n_docs as f64
    };
    Ok(InvertedIndex {
        postings,
        doc_lengths,
        avgdl,
        n_docs,
    })
}

fn idf(index: &InvertedIndex, term: &str) -> f64 {
    let n = index.n_docs as f64;
    let df = index.document_frequency(term) as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Literal evaluation of the BM25+ formula for one document.
pub fn score(
    query: &[String],
    doc_id: i64,
    index: &InvertedIndex,
    params: &Bm25Params,
) -> Result<f64> {
    params.validate()?;
    if index.n_docs == 0 {
        return Err(Error::InvalidInput("empty index".into()));
    }
    let doc_len = index
        .doc_length(doc_id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown doc_id {doc_id}")))? as f64;
    let length_norm = if index.avgdl > 0.0 {
        doc_len / index.avgdl
    } else {
        0.0
    };
    let mut total = 0.0;
    for term in query {
        let tf = index.term_frequency(term, doc_id) as f64;
        let saturation =
            tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * length_norm));
        total += idf(index, term) * (saturation + params.delta);
    }
    Ok(total)
}

/// Top-k documents by descending BM25+ score; ties break by ascending doc id.
pub fn search(
    query: &[String],
    index: &InvertedIndex,
    params: &Bm25Params,
    k: usize,
) -> Result<Vec<(i64, f64)>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if index.n_docs == 0 {
        return Err(Error::InvalidInput("empty index".into()));
    }
    let mut scored: Vec<(i64, f64)> = index
        .doc_ids()
        .map(|doc_id| score(query, doc_id, index, params).map(|s| (doc_id, s)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexStats {
    n_docs: usize,
    avgdl: f64,
    doc_lengths: Vec<(i64, u32)>,
}

const POSTINGS_FILE: &str = "postings.bin";
const STATS_FILE: &str = "stats.json";

/// Persist the index as a directory: length-prefixed binary postings plus a
/// JSON stats file.
pub fn save_index(index: &InvertedIndex, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stats = IndexStats {
        n_docs: index.n_docs,
        avgdl: index.avgdl,
        doc_lengths: index.doc_lengths.iter().map(|(&d, &l)| (d, l)).collect(),
    };
    let stats_path = dir.join(STATS_FILE);
    let json = serde_json::to_vec_pretty(&stats).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(&stats_path, json).map_err(|e| Error::io(&stats_path, e))?;

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&(index.postings.len() as u64).to_le_bytes());
    for (term, list) in &index.postings {
        let bytes = term.as_bytes();
        buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(bytes);
        buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
        for &(doc_id, tf) in list {
            buf.extend_from_slice(&doc_id.to_le_bytes());
            buf.extend_from_slice(&tf.to_le_bytes());
        }
    }
    let postings_path = dir.join(POSTINGS_FILE);
    let mut file = std::fs::File::create(&postings_path).map_err(|e| Error::io(&postings_path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(&postings_path, e))
}

pub fn load_index(dir: &Path) -> Result<InvertedIndex> {
    let stats_path = dir.join(STATS_FILE);
    let stats_json =
        std::fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?;
    let stats: IndexStats = serde_json::from_str(&stats_json).map_err(|e| Error::Parse {
        path: stats_path.clone(),
        line: 0,
        msg: e.to_string(),
    })?;

    let postings_path = dir.join(POSTINGS_FILE);
    let mut bytes = Vec::new();
    std::fs::File::open(&postings_path)
        .map_err(|e| Error::io(&postings_path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(&postings_path, e))?;

    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::ModelFormat("truncated postings file".into()));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let n_terms = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    let mut postings = BTreeMap::new();
    for _ in 0..n_terms {
        let term_len = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let term = String::from_utf8(take(&mut cursor, term_len)?.to_vec())
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let n_postings = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let mut list = Vec::with_capacity(n_postings);
        for _ in 0..n_postings {
            let doc_id = i64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
            let tf = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
            list.push((doc_id, tf));
        }
        postings.insert(term, list);
    }

    Ok(InvertedIndex {
        postings,
        doc_lengths: stats.doc_lengths.into_iter().collect(),
        avgdl: stats.avgdl,
        n_docs: stats.n_docs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_document_counting() {
        let index = build_index(&[(0, toks(&["a", "b", "a"]))]).unwrap();
        assert_eq!(index.term_frequency("a", 0), 2);
        assert_eq!(index.term_frequency("b", 0), 1);
        assert_eq!(index.doc_length(0), Some(3));
        assert_eq!(index.avgdl(), 3.0);
    }

    #[test]
    fn duplicate_doc_id_is_rejected() {
        let docs = vec![(1, toks(&["a"])), (1, toks(&["b"]))];
        assert!(build_index(&docs).is_err());
    }

    #[test]
    fn empty_index_scores_error() {
        let index = build_index(&[]).unwrap();
        assert_eq!(index.n_docs(), 0);
        assert!(score(&toks(&["a"]), 0, &index, &Bm25Params::default()).is_err());
        assert!(search(&toks(&["a"]), &index, &Bm25Params::default(), 1).is_err());
    }

    #[test]
    fn empty_query_scores_zero() {
        let index = build_index(&[(0, toks(&["a"]))]).unwrap();
        assert_eq!(score(&[], 0, &index, &Bm25Params::default()).unwrap(), 0.0);
    }

    #[test]
    fn absent_term_contributes_idf_times_delta() {
        let index = build_index(&[(0, toks(&["a"])), (1, toks(&["b"]))]).unwrap();
        let params = Bm25Params::default();
        // "b" has TF = 0 in doc 0: its bracket reduces to delta.
        let n = 2.0f64;
        let df = 1.0f64;
        let expected_idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let got = score(&toks(&["b"]), 0, &index, &params).unwrap();
        assert!((got - expected_idf * params.delta).abs() < 1e-12);
    }

    /// Direct transcription of the scoring formula, used as the oracle.
    fn oracle_score(
        query: &[String],
        doc_id: i64,
        docs: &[(i64, Vec<String>)],
        params: &Bm25Params,
    ) -> f64 {
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
        let doc = &docs.iter().find(|(d, _)| *d == doc_id).unwrap().1;
        let mut total = 0.0;
        for term in query {
            let tf = doc.iter().filter(|t| *t == term).count() as f64;
            let df = docs
                .iter()
                .filter(|(_, t)| t.contains(term))
                .count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = if avgdl > 0.0 {
                doc.len() as f64 / avgdl
            } else {
                0.0
            };
            let sat = tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
            total += idf * (sat + params.delta);
        }
        total
    }

    #[test]
    fn three_doc_fixture_matches_direct_formula_evaluation() {
        let docs = vec![
            (0, toks(&["banco", "conta", "banco"])),
            (1, toks(&["cartao", "conta"])),
            (2, toks(&["emprestimo", "pessoal", "banco", "conta", "juros"])),
        ];
        let index = build_index(&docs).unwrap();
        let params = Bm25Params {
            k1: 1.2,
            b: 0.75,
            delta: 1.0,
        };
        let query = toks(&["banco", "juros", "inexistente"]);
        for doc_id in [0, 1, 2] {
            let got = score(&query, doc_id, &index, &params).unwrap();
            let want = oracle_score(&query, doc_id, &docs, &params);
            assert!((got - want).abs() <= 1e-9, "doc {doc_id}: {got} vs {want}");
        }
    }

    #[test]
    fn higher_tf_ranks_higher_at_equal_length() {
        let docs = vec![
            (0, toks(&["taxa", "conta", "conta"])),
            (1, toks(&["taxa", "taxa", "conta"])),
        ];
        let index = build_index(&docs).unwrap();
        let top = search(&toks(&["taxa"]), &index, &Bm25Params::default(), 2).unwrap();
        assert_eq!(top[0].0, 1);
    }

    #[test]
    fn search_single_doc() {
        let index = build_index(&[(7, toks(&["a"]))]).unwrap();
        let top = search(&toks(&["a"]), &index, &Bm25Params::default(), 1).unwrap();
        assert_eq!(top, vec![(7, top[0].1)]);
    }

    #[test]
    fn unknown_query_term_shifts_all_scores_by_the_same_constant() {
        let docs = vec![
            (0, toks(&["a", "b"])),
            (1, toks(&["a", "a"])),
            (2, toks(&["b", "c", "a"])),
        ];
        let index = build_index(&docs).unwrap();
        let params = Bm25Params::default();
        let base = toks(&["a", "b"]);
        let mut extended = base.clone();
        extended.push("zz_unseen".to_string());
        let mut shifts = Vec::new();
        for doc_id in [0, 1, 2] {
            let s0 = score(&base, doc_id, &index, &params).unwrap();
            let s1 = score(&extended, doc_id, &index, &params).unwrap();
            shifts.push(s1 - s0);
        }
        for w in shifts.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
        let r0 = search(&base, &index, &params, 3).unwrap();
        let r1 = search(&extended, &index, &params, 3).unwrap();
        let order0: Vec<i64> = r0.iter().map(|&(d, _)| d).collect();
        let order1: Vec<i64> = r1.iter().map(|&(d, _)| d).collect();
        assert_eq!(order0, order1);
    }

    #[test]
    fn classic_two_parameter_form_at_delta_zero_b_zero() {
        // With delta = 0 and b = 0 the bracket is tf(k1+1)/(tf+k1).
        let docs = vec![(0, toks(&["x", "x", "y"])), (1, toks(&["y"]))];
        let index = build_index(&docs).unwrap();
        let params = Bm25Params {
            k1: 1.2,
            b: 0.0,
            delta: 0.0,
        };
        let got = score(&toks(&["x"]), 0, &index, &params).unwrap();
        let idf = (1.0 + (2.0 - 1.0 + 0.5) / 1.5f64).ln();
        let want = idf * (2.0 * 2.2 / (2.0 + 1.2));
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn index_roundtrip_through_directory() {
        let docs = vec![
            (0, toks(&["a", "b", "a"])),
            (3, toks(&["c"])),
            (9, toks(&["a", "c", "c", "d"])),
        ];
        let index = build_index(&docs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_index(&index, dir.path()).unwrap();
        let loaded = load_index(dir.path()).unwrap();
        assert_eq!(loaded.n_docs(), index.n_docs());
        assert_eq!(loaded.avgdl(), index.avgdl());
        let q = toks(&["a", "c"]);
        for d in [0, 3, 9] {
            let a = score(&q, d, &index, &Bm25Params::default()).unwrap();
            let b = score(&q, d, &loaded, &Bm25Params::default()).unwrap();
            assert_eq!(a, b);
        }
    }
}
