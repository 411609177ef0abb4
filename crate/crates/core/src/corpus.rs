//! FAQ collection ingestion, anonymization, text preprocessing and
//! construction of the candidate-ranking dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Questions, answers and the question -> relevant-answer relation.
///
/// Each question has between one and five relevant answers; all ids are
/// unique and every relevance pair references existing ids.
#[derive(Debug, Clone)]
pub struct FaqCollection {
    questions: BTreeMap<i64, String>,
    answers: BTreeMap<i64, String>,
    relevance: BTreeSet<(i64, i64)>,
}

impl FaqCollection {
    pub fn new(
        questions: Vec<(i64, String)>,
        answers: Vec<(i64, String)>,
        relevance: BTreeSet<(i64, i64)>,
    ) -> Result<Self> {
        let mut q_map = BTreeMap::new();
        for (id, text) in questions {
            if q_map.insert(id, text).is_some() {
                return Err(Error::InvalidInput(format!("duplicate q_id {id}")));
            }
        }
        let mut a_map = BTreeMap::new();
        for (id, text) in answers {
            if a_map.insert(id, text).is_some() {
                return Err(Error::InvalidInput(format!("duplicate doc_id {id}")));
            }
        }
        let mut per_question: BTreeMap<i64, usize> = BTreeMap::new();
        for &(q, d) in &relevance {
            if !q_map.contains_key(&q) {
                return Err(Error::InvalidInput(format!(
                    "relevance references unknown q_id {q}"
                )));
            }
            if !a_map.contains_key(&d) {
                return Err(Error::InvalidInput(format!(
                    "relevance references unknown doc_id {d}"
                )));
            }
            *per_question.entry(q).or_insert(0) += 1;
        }
        for (&q, &count) in &per_question {
            if count > 5 {
                return Err(Error::InvalidInput(format!(
                    "q_id {q} has {count} relevant answers, maximum is 5"
                )));
            }
        }
        for &q in q_map.keys() {
            if !per_question.contains_key(&q) {
                return Err(Error::InvalidInput(format!(
                    "q_id {q} has no relevant answer"
                )));
            }
        }
        Ok(FaqCollection {
            questions: q_map,
            answers: a_map,
            relevance,
        })
    }

    pub fn question(&self, q_id: i64) -> Option<&str> {
        self.questions.get(&q_id).map(String::as_str)
    }

    pub fn answer(&self, doc_id: i64) -> Option<&str> {
        self.answers.get(&doc_id).map(String::as_str)
    }

    pub fn questions(&self) -> impl Iterator<Item = (i64, &str)> {
        self.questions.iter().map(|(id, t)| (*id, t.as_str()))
    }

    pub fn answers(&self) -> impl Iterator<Item = (i64, &str)> {
        self.answers.iter().map(|(id, t)| (*id, t.as_str()))
    }

    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn n_answers(&self) -> usize {
        self.answers.len()
    }

    pub fn is_relevant(&self, q_id: i64, doc_id: i64) -> bool {
        self.relevance.contains(&(q_id, doc_id))
    }

    pub fn relevance(&self) -> &BTreeSet<(i64, i64)> {
        &self.relevance
    }

    pub fn relevant_docs(&self, q_id: i64) -> Vec<i64> {
        self.relevance
            .range((q_id, i64::MIN)..=(q_id, i64::MAX))
            .map(|&(_, d)| d)
            .collect()
    }
}

/// One (question, candidate answer, binary label) sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingSample {
    pub q_id: i64,
    pub doc_id: i64,
    pub label: u8,
}

/// Toggles for [`preprocess`], applied in a fixed order:
/// lowercase, strip accents, remove punctuation, remove numbers,
/// remove stopwords, stem.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub lowercase: bool,
    pub strip_accents: bool,
    pub remove_punct: bool,
    pub remove_numbers: bool,
    pub stopword_file: Option<PathBuf>,
    pub stemming: bool,
}

impl PreprocessOptions {
    /// Everything on, no stopword list.
    pub fn all() -> Self {
        PreprocessOptions {
            lowercase: true,
            strip_accents: true,
            remove_punct: true,
            remove_numbers: true,
            stopword_file: None,
            stemming: false,
        }
    }
}

/// Compiled preprocessing pipeline with the stopword list resolved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessor {
    pub lowercase: bool,
    pub strip_accents: bool,
    pub remove_punct: bool,
    pub remove_numbers: bool,
    pub stopwords: BTreeSet<String>,
    pub stemming: bool,
}

impl Preprocessor {
    pub fn from_options(opts: &PreprocessOptions) -> Result<Self> {
        let stopwords = match &opts.stopword_file {
            None => BTreeSet::new(),
            Some(path) => load_stopwords(path)?,
        };
        Ok(Preprocessor {
            lowercase: opts.lowercase,
            strip_accents: opts.strip_accents,
            remove_punct: opts.remove_punct,
            remove_numbers: opts.remove_numbers,
            stopwords,
            stemming: opts.stemming,
        })
    }

    pub fn run(&self, text: &str) -> Vec<String> {
        let mut s: String = text.to_string();
        if self.lowercase {
            s = s.to_lowercase();
        }
        if self.strip_accents {
            s = strip_accents(&s);
        }
        if self.remove_punct {
            s = s
                .chars()
                .map(|c| {
                    if c.is_alphanumeric() || c.is_whitespace() {
                        c
                    } else {
                        ' '
                    }
                })
                .collect();
        }
        if self.remove_numbers {
            s = s.chars().filter(|c| !c.is_ascii_digit()).collect();
        }
        let mut tokens: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        if !self.stopwords.is_empty() {
            tokens.retain(|t| !self.stopwords.contains(t));
        }
        if self.stemming {
            tokens = tokens.iter().map(|t| stem_pt(t)).collect();
        }
        tokens
    }
}

/// Whitespace tokenization after the enabled transforms, in the fixed order.
pub fn preprocess(text: &str, opts: &PreprocessOptions) -> Result<Vec<String>> {
    Ok(Preprocessor::from_options(opts)?.run(text))
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("stopword file {}: {e}", path.display())))?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Remove combining marks after NFD decomposition ("ótimo" -> "otimo").
pub fn strip_accents(s: &str) -> String {
    use unicode_normalization::char::is_combining_mark;
    use unicode_normalization::UnicodeNormalization;
    s.nfd().filter(|c| !is_combining_mark(*c)).collect()
}

// Ordered longest-first; a light derivational stripper for Portuguese,
// accent-stripped variants included since stemming may run after accent
// removal.
const PT_SUFFIXES: &[&str] = &[
    "amentos", "imentos", "amento", "imento", "adoras", "adores", "adora", "ador", "mente",
    "ância", "ancia", "ência", "encia", "ações", "acoes", "ção", "cao", "agem", "ismo", "ista",
    "ável", "avel", "ível", "ivel", "oso", "osa",
];

/// Minimal suffix-stripping stemmer; keeps stems of at least three characters.
pub fn stem_pt(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    for suffix in PT_SUFFIXES {
        let suf: Vec<char> = suffix.chars().collect();
        if chars.len() > suf.len() && chars.ends_with(&suf) {
            let stem_len = chars.len() - suf.len();
            if stem_len >= 3 {
                return chars[..stem_len].iter().collect();
            }
        }
    }
    if chars.len() >= 4 && chars.last() == Some(&'s') {
        return chars[..chars.len() - 1].iter().collect();
    }
    word.to_string()
}

/// Replace every maximal ASCII digit run with uniformly random digits of the
/// same length. Non-digit characters and string length are preserved;
/// deterministic for a fixed seed.
pub fn anonymize_numbers(text: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    text.chars()
        .map(|c| {
            if c.is_ascii_digit() {
                char::from(b'0' + rng.gen_range(0..10u8))
            } else {
                c
            }
        })
        .collect()
}

/// Per question: every relevant answer with label 1 plus uniformly sampled
/// distinct non-relevant answers, `m` candidates in total.
pub fn build_ranking_dataset(
    faq: &FaqCollection,
    m: usize,
    seed: u64,
) -> Result<Vec<RankingSample>> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    if m > faq.n_answers() {
        return Err(Error::InvalidInput(format!(
            "m = {m} exceeds answer count {}",
            faq.n_answers()
        )));
    }
    let all_docs: Vec<i64> = faq.answers.keys().copied().collect();
    let mut samples = Vec::new();
    for (&q_id, _) in &faq.questions {
        let positives = faq.relevant_docs(q_id);
        if positives.len() > m {
            return Err(Error::InvalidInput(format!(
                "q_id {q_id} has {} positives, more than m = {m}",
                positives.len()
            )));
        }
        let positive_set: BTreeSet<i64> = positives.iter().copied().collect();
        for &doc_id in &positives {
            samples.push(RankingSample {
                q_id,
                doc_id,
                label: 1,
            });
        }
        let mut pool: Vec<i64> = all_docs
            .iter()
            .copied()
            .filter(|d| !positive_set.contains(d))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(q_id as u64);
        pool.shuffle(&mut rng);
        for &doc_id in pool.iter().take(m - positives.len()) {
            samples.push(RankingSample {
                q_id,
                doc_id,
                label: 0,
            });
        }
    }
    Ok(samples)
}

/// Split samples by question id; no question appears on both sides.
pub fn split(
    samples: &[RankingSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<RankingSample>, Vec<RankingSample>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split ratio {ratio} not in (0, 1)"
        )));
    }
    let mut q_ids: Vec<i64> = samples
        .iter()
        .map(|s| s.q_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    q_ids.shuffle(&mut rng);
    let n_train = (ratio * q_ids.len() as f64 + 0.5).floor() as usize;
    let train_ids: BTreeSet<i64> = q_ids.iter().take(n_train).copied().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in samples {
        if train_ids.contains(&s.q_id) {
            train.push(*s);
        } else {
            test.push(*s);
        }
    }
    Ok((train, test))
}

/// Fraction of positive and negative labels; the two sum to one.
pub fn imbalance_stats(samples: &[RankingSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample set".into()));
    }
    let pos = samples.iter().filter(|s| s.label == 1).count() as f64;
    let frac = pos / samples.len() as f64;
    Ok((frac, 1.0 - frac))
}

/// One line of the JSON-lines FAQ interchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaqRecord {
    pub q_id: i64,
    pub question: String,
    pub doc_id: i64,
    pub answer: String,
    pub label: u8,
}

/// Parse a JSON-lines FAQ file into a collection plus its sample rows.
pub fn read_faq_jsonl(path: &Path) -> Result<(FaqCollection, Vec<RankingSample>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FaqRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.label > 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("label {} not in {{0, 1}}", rec.label),
            });
        }
        records.push(rec);
    }
    collection_from_records(&records).map(|faq| {
        let samples = records
            .iter()
            .map(|r| RankingSample {
                q_id: r.q_id,
                doc_id: r.doc_id,
                label: r.label,
            })
            .collect();
        (faq, samples)
    })
}

pub fn collection_from_records(records: &[FaqRecord]) -> Result<FaqCollection> {
    let mut questions: BTreeMap<i64, String> = BTreeMap::new();
    let mut answers: BTreeMap<i64, String> = BTreeMap::new();
    let mut relevance = BTreeSet::new();
    for r in records {
        if let Some(prev) = questions.get(&r.q_id) {
            if prev != &r.question {
                return Err(Error::InvalidInput(format!(
                    "q_id {} appears with two different texts",
                    r.q_id
                )));
            }
        }
        questions.insert(r.q_id, r.question.clone());
        if let Some(prev) = answers.get(&r.doc_id) {
            if prev != &r.answer {
                return Err(Error::InvalidInput(format!(
                    "doc_id {} appears with two different texts",
                    r.doc_id
                )));
            }
        }
        answers.insert(r.doc_id, r.answer.clone());
        if r.label == 1 {
            relevance.insert((r.q_id, r.doc_id));
        }
    }
    FaqCollection::new(
        questions.into_iter().collect(),
        answers.into_iter().collect(),
        relevance,
    )
}

pub fn write_faq_jsonl(
    path: &Path,
    faq: &FaqCollection,
    samples: &[RankingSample],
) -> Result<()> {
    let mut out = Vec::new();
    for s in samples {
        let rec = FaqRecord {
            q_id: s.q_id,
            question: faq
                .question(s.q_id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown q_id {}", s.q_id)))?
                .to_string(),
            doc_id: s.doc_id,
            answer: faq
                .answer(s.doc_id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown doc_id {}", s.doc_id)))?
                .to_string(),
            label: s.label,
        };
        serde_json::to_writer(&mut out, &rec)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Samples for one question, with texts resolved, ready for featurization.
#[derive(Debug, Clone)]
pub struct QuestionCandidates {
    pub q_id: i64,
    pub question: String,
    /// (doc_id, answer text, label), ordered by doc_id.
    pub candidates: Vec<(i64, String, u8)>,
}

/// Group samples per question and resolve texts against the collection.
pub fn group_by_question(
    faq: &FaqCollection,
    samples: &[RankingSample],
) -> Result<Vec<QuestionCandidates>> {
    let mut grouped: BTreeMap<i64, Vec<(i64, String, u8)>> = BTreeMap::new();
    for s in samples {
        let answer = faq
            .answer(s.doc_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown doc_id {}", s.doc_id)))?;
        grouped
            .entry(s.q_id)
            .or_default()
            .push((s.doc_id, answer.to_string(), s.label));
    }
    grouped
        .into_iter()
        .map(|(q_id, mut candidates)| {
            candidates.sort_by_key(|(d, _, _)| *d);
            let question = faq
                .question(q_id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown q_id {q_id}")))?
                .to_string();
            Ok(QuestionCandidates {
                q_id,
                question,
                candidates,
            })
        })
        .collect()
}
