//! BILOU span tagging, window features for a per-token classifier, and
//! entity-level F1 with exact (start, end, class) matching.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bytesio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::features::LsaModel;
use crate::learn::{
    adamw_step, argmax, model_from_bytes, model_to_bytes, smoothed_ce_k, Model, OptimizerState,
    Schedule,
};

/// Typed token span: `start` inclusive, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub class_name: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, class_name: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            class_name: class_name.into(),
        }
    }
}

fn validate_spans(n_tokens: usize, spans: &[EntitySpan]) -> Result<()> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| s.start);
    let mut last_end = 0usize;
    for (i, span) in sorted.iter().enumerate() {
        if span.start >= span.end || span.end > n_tokens {
            return Err(Error::InvalidInput(format!(
                "span {}..{} out of range for {n_tokens} tokens",
                span.start, span.end
            )));
        }
        if i > 0 && span.start < last_end {
            return Err(Error::InvalidInput(format!(
                "span {}..{} overlaps a previous span",
                span.start, span.end
            )));
        }
        last_end = span.end;
    }
    Ok(())
}

/// Tag a sentence: unit spans get `U-`, two-token spans `B-`/`L-`, longer
/// spans `B-`,`I-`...,`L-`; everything else is `O`.
pub fn encode_bilou(n_tokens: usize, spans: &[EntitySpan]) -> Result<Vec<String>> {
    validate_spans(n_tokens, spans)?;
    let mut tags = vec!["O".to_string(); n_tokens];
    for span in spans {
        let class = &span.class_name;
        if span.end - span.start == 1 {
            tags[span.start] = format!("U-{class}");
        } else {
            tags[span.start] = format!("B-{class}");
            for slot in tags.iter_mut().take(span.end - 1).skip(span.start + 1) {
                *slot = format!("I-{class}");
            }
            tags[span.end - 1] = format!("L-{class}");
        }
    }
    Ok(tags)
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
    Last(&'a str),
    Unit(&'a str),
}

fn parse_tag(tag: &str) -> Result<Tag<'_>> {
    if tag == "O" {
        return Ok(Tag::Outside);
    }
    let (prefix, class) = tag
        .split_once('-')
        .ok_or_else(|| Error::InvalidInput(format!("unknown tag {tag}")))?;
    if class.is_empty() {
        return Err(Error::InvalidInput(format!("unknown tag {tag}")));
    }
    match prefix {
        "B" => Ok(Tag::Begin(class)),
        "I" => Ok(Tag::Inside(class)),
        "L" => Ok(Tag::Last(class)),
        "U" => Ok(Tag::Unit(class)),
        _ => Err(Error::InvalidInput(format!("unknown tag {tag}"))),
    }
}

/// Inverse of [`encode_bilou`] on valid sequences; invalid sequences are
/// repaired conservatively: `I`/`L` without `B` opens a span at that token,
/// a class change closes the open span, and a dangling `B` closes at the
/// last contiguous same-class tag.
pub fn decode_bilou(tags: &[String]) -> Result<Vec<EntitySpan>> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, raw) in tags.iter().enumerate() {
        let tag = parse_tag(raw)?;
        match tag {
            Tag::Outside => {
                if let Some((start, class)) = open.take() {
                    spans.push(EntitySpan::new(start, i, class));
                }
            }
            Tag::Unit(class) => {
                if let Some((start, open_class)) = open.take() {
                    spans.push(EntitySpan::new(start, i, open_class));
                }
                spans.push(EntitySpan::new(i, i + 1, class));
            }
            Tag::Begin(class) => {
                if let Some((start, open_class)) = open.take() {
                    spans.push(EntitySpan::new(start, i, open_class));
                }
                open = Some((i, class.to_string()));
            }
            Tag::Inside(class) => match &open {
                Some((_, open_class)) if open_class == class => {}
                Some((start, open_class)) => {
                    spans.push(EntitySpan::new(*start, i, open_class.clone()));
                    open = Some((i, class.to_string()));
                }
                None => open = Some((i, class.to_string())),
            },
            Tag::Last(class) => match open.take() {
                Some((start, open_class)) if open_class == class => {
                    spans.push(EntitySpan::new(start, i + 1, open_class));
                }
                Some((start, open_class)) => {
                    spans.push(EntitySpan::new(start, i, open_class));
                    spans.push(EntitySpan::new(i, i + 1, class.to_string()));
                }
                None => spans.push(EntitySpan::new(i, i + 1, class.to_string())),
            },
        }
    }
    if let Some((start, class)) = open {
        spans.push(EntitySpan::new(start, tags.len(), class));
    }
    Ok(spans)
}

/// Micro-averaged precision/recall/F1 over per-sentence span sets; a
/// prediction counts only on an exact (start, end, class) match.
pub fn entity_f1(
    pred: &[Vec<EntitySpan>],
    gold: &[Vec<EntitySpan>],
) -> Result<(f64, f64, f64)> {
    if pred.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: pred.len(),
        });
    }
    let mut tp = 0usize;
    let mut n_pred = 0usize;
    let mut n_gold = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        let gold_set: std::collections::BTreeSet<&EntitySpan> = g.iter().collect();
        n_pred += p.len();
        n_gold += g.len();
        tp += p.iter().filter(|span| gold_set.contains(span)).count();
    }
    let precision = if n_pred == 0 {
        0.0
    } else {
        tp as f64 / n_pred as f64
    };
    let recall = if n_gold == 0 {
        0.0
    } else {
        tp as f64 / n_gold as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Projection context plus shape features for the token classifier.
#[derive(Debug, Clone)]
pub struct NerContext {
    pub lsa: LsaModel,
}

const N_LENGTH_BUCKETS: usize = 6;

fn length_bucket(len: usize) -> usize {
    match len {
        0..=1 => 0,
        2 => 1,
        3 => 2,
        4..=6 => 3,
        7..=10 => 4,
        _ => 5,
    }
}

fn shape_features(token: &str) -> Vec<f64> {
    let mut f = vec![0.0; 2 + N_LENGTH_BUCKETS];
    if token.chars().all(|c| c.is_ascii_digit()) && !token.is_empty() {
        f[0] = 1.0;
    }
    if token.chars().next().is_some_and(char::is_uppercase) {
        f[1] = 1.0;
    }
    f[2 + length_bucket(token.chars().count())] = 1.0;
    f
}

/// Feature width produced by [`token_features`] for a window of `w`.
pub fn token_feature_dim(ctx: &NerContext, window: usize) -> usize {
    (2 * window + 1) * ctx.lsa.k() + 2 + N_LENGTH_BUCKETS
}

/// Concatenated projections of the tokens in `[pos-w, pos+w]` (zero vectors
/// beyond the sentence) plus shape features of the center token. The
/// capitalization flag is read before the projection pipeline lowercases.
pub fn token_features(
    tokens: &[String],
    pos: usize,
    ctx: &NerContext,
    window: usize,
) -> Result<Vec<f64>> {
    if pos >= tokens.len() {
        return Err(Error::InvalidInput(format!(
            "position {pos} out of range for {} tokens",
            tokens.len()
        )));
    }
    let k = ctx.lsa.k();
    let mut features = Vec::with_capacity(token_feature_dim(ctx, window));
    let lo = pos as i64 - window as i64;
    let hi = pos as i64 + window as i64;
    for i in lo..=hi {
        if i < 0 || i as usize >= tokens.len() {
            features.extend(std::iter::repeat(0.0).take(k));
        } else {
            features.extend(ctx.lsa.embed(&tokens[i as usize]));
        }
    }
    features.extend(shape_features(&tokens[pos]));
    Ok(features)
}

/// The full BILOU tag inventory for a class list: `O` plus
/// `B-/I-/L-/U-<class>` per class, in class order.
pub fn tag_inventory(classes: &[String]) -> Vec<String> {
    let mut tags = vec!["O".to_string()];
    for class in classes {
        for prefix in ["B", "I", "L", "U"] {
            tags.push(format!("{prefix}-{class}"));
        }
    }
    tags
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NerTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub window: usize,
    pub hidden: Option<usize>,
    pub seed: u64,
}

impl Default for NerTrainConfig {
    fn default() -> Self {
        NerTrainConfig {
            epochs: 5,
            learning_rate: 5e-5,
            warmup_fraction: 0.02,
            window: 2,
            hidden: None,
            seed: 42,
        }
    }
}

/// Per-token softmax classifier over the BILOU tag inventory, bundled with
/// its projection context.
#[derive(Debug, Clone)]
pub struct NerModel {
    pub classes: Vec<String>,
    pub tags: Vec<String>,
    pub window: usize,
    pub ctx: NerContext,
    pub model: Model,
}

/// Train the dense tagging head; prediction is argmax per token followed by
/// [`decode_bilou`] repair.
pub fn train_ner(
    dataset: &[(Vec<String>, Vec<String>)],
    classes: &[String],
    ctx: NerContext,
    cfg: &NerTrainConfig,
) -> Result<NerModel> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let tags = tag_inventory(classes);
    let tag_index: BTreeMap<&str, usize> =
        tags.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (tokens, token_tags) in dataset {
        if tokens.len() != token_tags.len() {
            return Err(Error::InvalidInput(
                "tokens and tags have different lengths".into(),
            ));
        }
        for (pos, tag) in token_tags.iter().enumerate() {
            let label = *tag_index
                .get(tag.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("tag {tag} outside class set")))?;
            features.push(token_features(tokens, pos, &ctx, cfg.window)?);
            labels.push(label);
        }
    }

    let mut model = Model::new(features[0].len(), cfg.hidden, tags.len(), cfg.seed);
    if cfg.epochs > 0 {
        let total_steps = (features.len() * cfg.epochs) as u64;
        let schedule = Schedule::new(total_steps, cfg.warmup_fraction, cfg.learning_rate)?;
        let mut state = OptimizerState::for_model(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..features.len()).collect();
        let adamw = crate::learn::AdamWConfig::default();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (logits, act) = model.forward_cached(&features[i])?;
                let (_, grad) = smoothed_ce_k(&logits, labels[i], 0.0)?;
                let grads = model.backward(&features[i], act.as_deref(), &grad)?;
                adamw_step(&mut model, &grads, &mut state, &adamw, &schedule)?;
            }
        }
    }
    Ok(NerModel {
        classes: classes.to_vec(),
        tags,
        window: cfg.window,
        ctx,
        model,
    })
}

impl NerModel {
    pub fn predict_tags(&self, tokens: &[String]) -> Result<Vec<String>> {
        tokens
            .iter()
            .enumerate()
            .map(|(pos, _)| {
                let f = token_features(tokens, pos, &self.ctx, self.window)?;
                let logits = self.model.forward(&f)?;
                Ok(self.tags[argmax(&logits)].clone())
            })
            .collect()
    }

    pub fn predict_spans(&self, tokens: &[String]) -> Result<Vec<EntitySpan>> {
        decode_bilou(&self.predict_tags(tokens)?)
    }

    pub fn token_accuracy(&self, dataset: &[(Vec<String>, Vec<String>)]) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for (tokens, gold) in dataset {
            let pred = self.predict_tags(tokens)?;
            total += gold.len();
            correct += pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        }
        if total == 0 {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        Ok(correct as f64 / total as f64)
    }

    /// Self-contained binary: classes, window, projection context, head.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = ByteWriter::new();
        w.bytes(b"FQKN");
        w.u32(1);
        w.u32(self.classes.len() as u32);
        for class in &self.classes {
            w.str(class);
        }
        w.u32(self.window as u32);
        let lsa_bytes = self.ctx.lsa.to_bytes()?;
        w.u32(lsa_bytes.len() as u32);
        w.bytes(&lsa_bytes);
        w.bytes(&model_to_bytes(&self.model));
        std::fs::write(path, w.into_vec()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader::new(&bytes);
        r.expect_magic(b"FQKN")?;
        let version = r.u32()?;
        if version != 1 {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let n_classes = r.u32()? as usize;
        let mut classes = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            classes.push(r.str()?);
        }
        let window = r.u32()? as usize;
        let lsa_len = r.u32()? as usize;
        let lsa = LsaModel::from_bytes(r.raw(lsa_len)?)?;
        let model = model_from_bytes(r.raw_rest())?;
        Ok(NerModel {
            tags: tag_inventory(&classes),
            classes,
            window,
            ctx: NerContext { lsa },
            model,
        })
    }
}

/// One line of the NER JSON-lines format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NerRecord {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

pub fn read_ner_jsonl(path: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NerRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.tokens.len() != rec.tags.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "tokens and tags differ in length".into(),
            });
        }
        out.push((rec.tokens, rec.tags));
    }
    Ok(out)
}

pub fn write_ner_jsonl(path: &Path, data: &[(Vec<String>, Vec<String>)]) -> Result<()> {
    let mut out = Vec::new();
    for (tokens, tags) in data {
        let rec = NerRecord {
            tokens: tokens.clone(),
            tags: tags.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_class_list(path: &Path) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let classes: Vec<String> = content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if classes.is_empty() {
        return Err(Error::InvalidInput("empty class list".into()));
    }
    Ok(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn encode_no_spans_is_all_outside() {
        assert_eq!(encode_bilou(3, &[]).unwrap(), tags(&["O", "O", "O"]));
    }

    #[test]
    fn encode_unit_span() {
        let spans = [EntitySpan::new(2, 3, "PROD")];
        assert_eq!(
            encode_bilou(4, &spans).unwrap(),
            tags(&["O", "O", "U-PROD", "O"])
        );
    }

    #[test]
    fn encode_three_token_span() {
        let spans = [EntitySpan::new(0, 3, "ORG")];
        assert_eq!(
            encode_bilou(3, &spans).unwrap(),
            tags(&["B-ORG", "I-ORG", "L-ORG"])
        );
    }

    #[test]
    fn encode_rejects_overlap_and_out_of_range() {
        let overlap = [EntitySpan::new(0, 2, "A"), EntitySpan::new(1, 3, "B")];
        assert!(encode_bilou(4, &overlap).is_err());
        let oob = [EntitySpan::new(2, 5, "A")];
        assert!(encode_bilou(4, &oob).is_err());
    }

    #[test]
    fn decode_all_outside_is_empty() {
        assert!(decode_bilou(&tags(&["O", "O"])).unwrap().is_empty());
    }

    #[test]
    fn decode_repairs_inside_without_begin() {
        let spans = decode_bilou(&tags(&["I-ORG", "O"])).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(0, 1, "ORG")]);
    }

    #[test]
    fn decode_rejects_unknown_tags() {
        assert!(decode_bilou(&tags(&["Q-ORG"])).is_err());
        assert!(decode_bilou(&tags(&["banana"])).is_err());
    }

    #[test]
    fn decode_repair_on_all_length_two_tag_pairs() {
        // Cross-check the repair rules by enumerating every pair over a
        // single class and verifying the output is valid and non-overlapping.
        let alphabet = ["O", "B-X", "I-X", "L-X", "U-X"];
        for a in alphabet {
            for b in alphabet {
                let spans = decode_bilou(&tags(&[a, b])).unwrap();
                validate_spans(2, &spans).expect("repaired spans must be valid");
                // Re-encoding the spans must produce a decodable sequence.
                let re = encode_bilou(2, &spans).unwrap();
                assert_eq!(decode_bilou(&re).unwrap(), spans);
            }
        }
    }

    #[test]
    fn entity_f1_exact_match_is_perfect() {
        let spans = vec![vec![EntitySpan::new(0, 2, "ORG")]];
        let (p, r, f) = entity_f1(&spans, &spans).unwrap();
        assert_eq!((p, r, f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn entity_f1_boundary_miss_counts_twice() {
        let pred = vec![vec![EntitySpan::new(0, 2, "ORG")]];
        let gold = vec![vec![EntitySpan::new(0, 3, "ORG")]];
        let (p, r, f) = entity_f1(&pred, &gold).unwrap();
        assert_eq!((p, r), (0.0, 0.0));
        assert_eq!(f, 0.0);
    }

    #[test]
    fn entity_f1_swapping_arguments_swaps_precision_and_recall() {
        let a = vec![vec![EntitySpan::new(0, 1, "X"), EntitySpan::new(2, 3, "Y")]];
        let b = vec![vec![EntitySpan::new(0, 1, "X")]];
        let (p1, r1, _) = entity_f1(&a, &b).unwrap();
        let (p2, r2, _) = entity_f1(&b, &a).unwrap();
        assert_eq!(p1, r2);
        assert_eq!(r1, p2);
    }

    #[test]
    fn entity_f1_matches_set_intersection_oracle() {
        // 100 deterministic sentences with scripted span patterns.
        let mut pred = Vec::new();
        let mut gold = Vec::new();
        for i in 0..100usize {
            let mut p = Vec::new();
            let mut g = Vec::new();
            if i % 2 == 0 {
                p.push(EntitySpan::new(0, 1, "A"));
            }
            if i % 3 == 0 {
                g.push(EntitySpan::new(0, 1, "A"));
            }
            if i % 5 == 0 {
                p.push(EntitySpan::new(2, 4, "B"));
                g.push(EntitySpan::new(2, 4, "B"));
            }
            pred.push(p);
            gold.push(g);
        }
        let (p, r, _) = entity_f1(&pred, &gold).unwrap();
        // Brute-force oracle over the same corpus.
        let mut tp = 0usize;
        let mut np = 0usize;
        let mut ng = 0usize;
        for (ps, gs) in pred.iter().zip(&gold) {
            np += ps.len();
            ng += gs.len();
            for span in ps {
                if gs.contains(span) {
                    tp += 1;
                }
            }
        }
        assert!((p - tp as f64 / np as f64).abs() < 1e-12);
        assert!((r - tp as f64 / ng as f64).abs() < 1e-12);
    }

    fn tiny_ctx() -> NerContext {
        use crate::corpus::{PreprocessOptions, Preprocessor};
        let pre = Preprocessor::from_options(&PreprocessOptions {
            lowercase: true,
            ..Default::default()
        })
        .unwrap();
        let texts: Vec<String> = vec![
            "cliente enviou cpf ontem".into(),
            "banco central consulta".into(),
            "cliente consulta cartao".into(),
            "banco enviou cartao".into(),
        ];
        let lsa = LsaModel::fit(&texts, pre, 1, 3).unwrap();
        NerContext { lsa }
    }

    #[test]
    fn window_zero_is_the_token_alone_plus_shape() {
        let ctx = tiny_ctx();
        let tokens = tags(&["cliente", "enviou", "cpf"]);
        let f = token_features(&tokens, 1, &ctx, 0).unwrap();
        assert_eq!(f.len(), ctx.lsa.k() + 2 + N_LENGTH_BUCKETS);
    }

    #[test]
    fn boundary_positions_zero_pad() {
        let ctx = tiny_ctx();
        let tokens = tags(&["cliente", "enviou", "cpf"]);
        let f = token_features(&tokens, 0, &ctx, 2).unwrap();
        let k = ctx.lsa.k();
        // Positions -2 and -1 are zero vectors.
        assert!(f[..2 * k].iter().all(|&v| v == 0.0));
        assert_eq!(f.len(), 5 * k + 2 + N_LENGTH_BUCKETS);
    }

    #[test]
    fn window_slots_match_standalone_projections() {
        let ctx = tiny_ctx();
        let tokens = tags(&["banco", "central", "consulta"]);
        let f = token_features(&tokens, 1, &ctx, 1).unwrap();
        let k = ctx.lsa.k();
        for (slot, token) in tokens.iter().enumerate() {
            let expected = ctx.lsa.embed(token);
            assert_eq!(&f[slot * k..(slot + 1) * k], expected.as_slice());
        }
    }

    #[test]
    fn shape_flags_fire_for_digits_and_capitalization() {
        let ctx = tiny_ctx();
        let digits = tags(&["12345"]);
        let f = token_features(&digits, 0, &ctx, 0).unwrap();
        let k = ctx.lsa.k();
        assert_eq!(f[k], 1.0);
        let f = token_features(&tags(&["Banco"]), 0, &ctx, 0).unwrap();
        assert_eq!(f[k + 1], 1.0);
    }

    #[test]
    fn train_memorizes_token_determined_tags() {
        let (dataset, classes) = crate::synth::ner_corpus(60, 3);
        let texts: Vec<String> = dataset.iter().map(|(t, _)| t.join(" ")).collect();
        let pre = crate::corpus::Preprocessor::from_options(&crate::corpus::PreprocessOptions {
            lowercase: true,
            ..Default::default()
        })
        .unwrap();
        let lsa = LsaModel::fit(&texts, pre, 1, 16).unwrap();
        let cfg = NerTrainConfig {
            epochs: 30,
            learning_rate: 0.05,
            window: 1,
            ..Default::default()
        };
        let model = train_ner(&dataset, &classes, NerContext { lsa }, &cfg).unwrap();
        let accuracy = model.token_accuracy(&dataset).unwrap();
        assert!(accuracy >= 0.99, "token accuracy {accuracy}");
    }

    #[test]
    fn zero_epochs_leaves_the_head_at_initialization() {
        let ctx = tiny_ctx();
        let dataset = vec![(tags(&["cliente", "cpf"]), tags(&["O", "U-DOC"]))];
        let classes = vec!["DOC".to_string()];
        let cfg = NerTrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let model = train_ner(&dataset, &classes, ctx.clone(), &cfg).unwrap();
        let fresh = Model::new(
            token_feature_dim(&ctx, cfg.window),
            cfg.hidden,
            tag_inventory(&classes).len(),
            cfg.seed,
        );
        assert_eq!(model.model, fresh);
    }

    #[test]
    fn train_rejects_tags_outside_the_class_set() {
        let ctx = tiny_ctx();
        let dataset = vec![(tags(&["cliente"]), tags(&["U-UNKNOWN"]))];
        let classes = vec!["DOC".to_string()];
        assert!(train_ner(&dataset, &classes, ctx, &NerTrainConfig::default()).is_err());
    }

    #[test]
    fn default_config_matches_training_recipe() {
        let cfg = NerTrainConfig::default();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.learning_rate, 5e-5);
        assert_eq!(cfg.warmup_fraction, 0.02);
        assert_eq!(cfg.window, 2);
    }

    #[test]
    fn ner_model_file_roundtrip() {
        let ctx = tiny_ctx();
        let dataset = vec![(tags(&["cliente", "cpf"]), tags(&["O", "U-DOC"]))];
        let classes = vec!["DOC".to_string()];
        let cfg = NerTrainConfig {
            epochs: 2,
            learning_rate: 0.01,
            window: 1,
            ..Default::default()
        };
        let model = train_ner(&dataset, &classes, ctx, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ner.bin");
        model.save(&path).unwrap();
        let loaded = NerModel::load(&path).unwrap();
        assert_eq!(loaded.classes, model.classes);
        assert_eq!(loaded.window, model.window);
        let tokens = tags(&["cliente", "cpf"]);
        assert_eq!(
            loaded.predict_tags(&tokens).unwrap(),
            model.predict_tags(&tokens).unwrap()
        );
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip_on_random_valid_spans(
            seed in 0u64..2000,
        ) {
            // Generate a random valid (non-overlapping, in-range) span set.
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_tokens = rng.gen_range(1usize..20);
            let classes = ["A", "B", "C"];
            let mut spans = Vec::new();
            let mut cursor = 0usize;
            while cursor < n_tokens {
                if rng.gen_bool(0.4) {
                    let len = rng.gen_range(1usize..=(n_tokens - cursor).min(4));
                    let class = classes[rng.gen_range(0..classes.len())];
                    spans.push(EntitySpan::new(cursor, cursor + len, class));
                    cursor += len;
                } else {
                    cursor += 1;
                }
            }
            let encoded = encode_bilou(n_tokens, &spans).unwrap();
            let mut decoded = decode_bilou(&encoded).unwrap();
            decoded.sort();
            let mut expected = spans.clone();
            expected.sort();
            prop_assert_eq!(decoded, expected);
        }

        #[test]
        fn decode_is_total_and_valid_on_arbitrary_tag_soup(
            raw in prop::collection::vec(0usize..9, 1..15),
        ) {
            let alphabet = ["O", "B-A", "I-A", "L-A", "U-A", "B-B", "I-B", "L-B", "U-B"];
            let sequence: Vec<String> = raw.iter().map(|&i| alphabet[i].to_string()).collect();
            let spans = decode_bilou(&sequence).unwrap();
            prop_assert!(validate_spans(sequence.len(), &spans).is_ok());
        }
    }
}
