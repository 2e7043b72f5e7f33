//! Incrementally trainable classifiers behind `text-*` and `image-*`
//! interventions.
//!
//! Text: bag-of-words logistic regression trained by full-batch gradient
//! descent. Patches: nearest class centroid over 16x16 normalized grayscale
//! features. Every training example is kept in the artifact's ledger so an
//! update always retrains on the complete data.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, to_grayscale, Frame, GrayImage, Region};
use crate::mask::{nms, Detection, HookKind};

pub const LEARNING_RATE: f64 = 0.1;
pub const L2: f64 = 1e-4;
/// Training stops once mean log-loss reaches this value.
pub const TARGET_LOSS: f64 = 0.1;
pub const MAX_EPOCHS: usize = 500;
pub const FEATURE_SIDE: u32 = 16;
pub const MIN_PATCH_SIDE: u32 = 8;
pub const PATCH_NMS_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Text,
    Patch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Payload {
    Text(String),
    Patch(GrayImage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub payload: Payload,
    pub label: Label,
    pub contributor: String,
    pub timestep: u64,
}

impl LabeledExample {
    pub fn text(s: impl Into<String>, label: Label, contributor: impl Into<String>, timestep: u64) -> Self {
        LabeledExample { payload: Payload::Text(s.into()), label, contributor: contributor.into(), timestep }
    }

    pub fn patch(img: GrayImage, label: Label, contributor: impl Into<String>, timestep: u64) -> Result<Self> {
        if img.width < MIN_PATCH_SIDE || img.height < MIN_PATCH_SIDE {
            return Err(Error::invalid(format!(
                "patch must be at least {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}, got {}x{}",
                img.width, img.height
            )));
        }
        Ok(LabeledExample { payload: Payload::Patch(img), label, contributor: contributor.into(), timestep })
    }

    pub fn kind(&self) -> ModelKind {
        match self.payload {
            Payload::Text(_) => ModelKind::Text,
            Payload::Patch(_) => ModelKind::Patch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameters {
    Text { vocabulary: Vec<String>, weights: Vec<f64>, bias: f64 },
    Patch { positive: Vec<f64>, negative: Vec<f64>, margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub num_positive: usize,
    pub num_negative: usize,
    pub final_loss: f64,
    pub epochs: usize,
    pub trained_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model_id: String,
    pub kind: ModelKind,
    pub version: u64,
    pub parameters: Parameters,
    pub training_meta: TrainingMeta,
    /// Every example the parameters were fit on.
    pub ledger: Vec<LabeledExample>,
}

impl ModelArtifact {
    fn text_params(&self) -> Result<(&[String], &[f64], f64)> {
        match &self.parameters {
            Parameters::Text { vocabulary, weights, bias } => Ok((vocabulary, weights, *bias)),
            Parameters::Patch { .. } => Err(Error::invalid(format!("model {} is a patch model", self.model_id))),
        }
    }

    fn patch_params(&self) -> Result<(&[f64], &[f64], f64)> {
        match &self.parameters {
            Parameters::Patch { positive, negative, margin } => Ok((positive, negative, *margin)),
            Parameters::Text { .. } => Err(Error::invalid(format!("model {} is a text model", self.model_id))),
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log(sigmoid(z))` for a positive, `-log(1 - sigmoid(z))` for a negative.
fn log_loss(z: f64, positive: bool) -> f64 {
    let m = if positive { -z } else { z };
    // log(1 + e^m) without overflow.
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

fn check_classes(pos: usize, neg: usize) -> Result<()> {
    match (pos, neg) {
        (0, 0) => Err(Error::invalid("training needs positive and negative examples; got none")),
        (0, _) => Err(Error::invalid("training needs at least one positive example")),
        (_, 0) => Err(Error::invalid("training needs at least one negative example")),
        _ => Ok(()),
    }
}

fn text_of(e: &LabeledExample) -> Result<&str> {
    match &e.payload {
        Payload::Text(s) => Ok(s),
        Payload::Patch(_) => Err(Error::invalid("patch example given to a text model")),
    }
}

fn example_order(a: &LabeledExample, b: &LabeledExample) -> Ordering {
    let payload = |e: &LabeledExample| match &e.payload {
        Payload::Text(s) => s.clone(),
        Payload::Patch(_) => String::new(),
    };
    (a.contributor.as_str(), a.timestep)
        .cmp(&(b.contributor.as_str(), b.timestep))
        .then_with(|| payload(a).cmp(&payload(b)))
        .then(a.label.cmp(&b.label))
}

struct SparseRow {
    cols: Vec<(usize, f64)>,
    positive: bool,
}

/// Trace of one gradient-descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub epochs: usize,
    pub final_loss: f64,
    /// Regularized objective after each accepted step, starting with the
    /// initial point.
    pub objective: Vec<f64>,
}

struct Point {
    w: Vec<f64>,
    b: f64,
    z: Vec<f64>,
    data: f64,
    obj: f64,
}

fn evaluate(rows: &[SparseRow], w: Vec<f64>, b: f64) -> Point {
    let z: Vec<f64> = rows.iter().map(|r| b + r.cols.iter().map(|&(j, v)| w[j] * v).sum::<f64>()).collect();
    let data = rows.iter().zip(&z).map(|(r, &zi)| log_loss(zi, r.positive)).sum::<f64>() / rows.len() as f64;
    let obj = data + 0.5 * L2 * w.iter().map(|v| v * v).sum::<f64>();
    Point { w, b, z, data, obj }
}

/// Full-batch gradient descent from `(w, b)`. A step that raises the
/// objective is undone and the learning rate halved.
fn descend(rows: &[SparseRow], w: Vec<f64>, b: f64) -> (Vec<f64>, f64, Descent) {
    let n = rows.len() as f64;
    let mut lr = LEARNING_RATE;
    let mut at = evaluate(rows, w, b);
    let mut trace = vec![at.obj];
    let mut epochs = 0;
    let mut grad = vec![0.0; at.w.len()];
    'epochs: while at.data > TARGET_LOSS && epochs < MAX_EPOCHS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (r, &z) in rows.iter().zip(&at.z) {
            let err = sigmoid(z) - if r.positive { 1.0 } else { 0.0 };
            gb += err;
            for &(j, v) in &r.cols {
                grad[j] += err * v;
            }
        }
        epochs += 1;
        loop {
            let nw: Vec<f64> = at.w.iter().zip(&grad).map(|(wi, gi)| wi - lr * (gi / n + L2 * wi)).collect();
            let next = evaluate(rows, nw, at.b - lr * gb / n);
            if next.obj <= at.obj {
                at = next;
                trace.push(at.obj);
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                break 'epochs;
            }
        }
    }
    let run = Descent { epochs, final_loss: at.data, objective: trace };
    (at.w, at.b, run)
}

/// Token counts per example, each token column scaled by `sqrt(n / df)`.
/// The scaling only conditions descent; stored weights are per raw count.
fn text_rows(examples: &[LabeledExample], vocab: &[String]) -> Result<(Vec<SparseRow>, Vec<f64>)> {
    let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut df = vec![0usize; vocab.len()];
    let mut rows = Vec::with_capacity(examples.len());
    for e in examples {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(text_of(e)?) {
            if let Some(&j) = index.get(t.as_str()) {
                *counts.entry(j).or_insert(0.0) += 1.0;
            }
        }
        for &j in counts.keys() {
            df[j] += 1;
        }
        rows.push(SparseRow { cols: counts.into_iter().collect(), positive: e.label == Label::Positive });
    }
    let n = examples.len() as f64;
    let scale: Vec<f64> = df.iter().map(|&d| if d == 0 { 1.0 } else { (n / d as f64).sqrt() }).collect();
    for r in &mut rows {
        for (j, v) in &mut r.cols {
            *v *= scale[*j];
        }
    }
    Ok((rows, scale))
}

fn vocabulary(examples: &[LabeledExample]) -> Result<Vec<String>> {
    let mut set = BTreeSet::new();
    for e in examples {
        set.extend(tokenize(text_of(e)?));
    }
    Ok(set.into_iter().collect())
}

fn counts(examples: &[LabeledExample]) -> (usize, usize) {
    let pos = examples.iter().filter(|e| e.label == Label::Positive).count();
    (pos, examples.len() - pos)
}

type TextParams<'a> = (&'a [String], &'a [f64], f64);

fn fit_text(model_id: &str, version: u64, mut ledger: Vec<LabeledExample>, warm: Option<TextParams>) -> Result<(ModelArtifact, Descent)> {
    let (pos, neg) = counts(&ledger);
    check_classes(pos, neg)?;
    ledger.sort_by(example_order);
    let vocab = vocabulary(&ledger)?;
    let (rows, scale) = text_rows(&ledger, &vocab)?;
    let (w0, b0) = match warm {
        Some((old_vocab, old_w, old_b)) => {
            let old: BTreeMap<&str, f64> = old_vocab.iter().map(|s| s.as_str()).zip(old_w.iter().copied()).collect();
            let w = vocab
                .iter()
                .zip(&scale)
                .map(|(t, s)| old.get(t.as_str()).copied().unwrap_or(0.0) / s)
                .collect();
            (w, old_b)
        }
        None => (vec![0.0; vocab.len()], 0.0),
    };
    let (w, bias, run) = descend(&rows, w0, b0);
    let weights = w.iter().zip(&scale).map(|(wi, s)| wi * s).collect();
    let artifact = ModelArtifact {
        model_id: model_id.to_string(),
        kind: ModelKind::Text,
        version,
        parameters: Parameters::Text { vocabulary: vocab, weights, bias },
        training_meta: TrainingMeta {
            num_positive: pos,
            num_negative: neg,
            final_loss: run.final_loss,
            epochs: run.epochs,
            trained_at: crate::now_ms(),
        },
        ledger,
    };
    Ok((artifact, run))
}

/// Cold-start text training. The artifact id is `"text"`; callers owning an
/// intervention rename it.
pub fn train_text(examples: &[LabeledExample]) -> Result<ModelArtifact> {
    train_text_traced(examples).map(|(m, _)| m)
}

/// [`train_text`] plus the descent trace.
pub fn train_text_traced(examples: &[LabeledExample]) -> Result<(ModelArtifact, Descent)> {
    fit_text("text", 1, examples.to_vec(), None)
}

/// `(label, P(positive))`.
pub fn predict_text(m: &ModelArtifact, s: &str) -> Result<(Label, f64)> {
    let (vocab, weights, bias) = m.text_params()?;
    let mut z = bias;
    for t in tokenize(s) {
        if let Ok(j) = vocab.binary_search(&t) {
            z += weights[j];
        }
    }
    let p = sigmoid(z);
    Ok((if p >= 0.5 { Label::Positive } else { Label::Negative }, p))
}

/// 16x16 bilinear downsample, mean removed, scaled to unit length (zero for
/// flat patches).
pub fn patch_feature(img: &GrayImage) -> Vec<f64> {
    let small = resize_bilinear(img, FEATURE_SIDE, FEATURE_SIDE).expect("feature side is nonzero");
    let mean = small.mean();
    let mut v: Vec<f64> = small.values.iter().map(|x| x - mean).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-9 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

/// Mean of `feats`, summed in a canonical order so the result does not
/// depend on example order.
fn centroid(mut feats: Vec<Vec<f64>>) -> Vec<f64> {
    feats.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    });
    let n = feats.len() as f64;
    let mut c = vec![0.0; (FEATURE_SIDE * FEATURE_SIDE) as usize];
    for f in &feats {
        for (ci, fi) in c.iter_mut().zip(f) {
            *ci += fi;
        }
    }
    c.iter_mut().for_each(|v| *v /= n);
    c
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn fit_patch(model_id: &str, version: u64, mut ledger: Vec<LabeledExample>) -> Result<ModelArtifact> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for e in &ledger {
        let Payload::Patch(img) = &e.payload else {
            return Err(Error::invalid("text example given to a patch model"));
        };
        if img.width < MIN_PATCH_SIDE || img.height < MIN_PATCH_SIDE {
            return Err(Error::invalid(format!(
                "patch must be at least {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}, got {}x{}",
                img.width, img.height
            )));
        }
        let f = patch_feature(img);
        match e.label {
            Label::Positive => pos.push(f),
            Label::Negative => neg.push(f),
        }
    }
    check_classes(pos.len(), neg.len())?;
    let (np, nn) = (pos.len(), neg.len());
    let positive = centroid(pos);
    let negative = centroid(neg);
    let margin = distance(&positive, &negative) / 2.0;
    ledger.sort_by(example_order);
    Ok(ModelArtifact {
        model_id: model_id.to_string(),
        kind: ModelKind::Patch,
        version,
        parameters: Parameters::Patch { positive, negative, margin },
        training_meta: TrainingMeta { num_positive: np, num_negative: nn, final_loss: 0.0, epochs: 0, trained_at: crate::now_ms() },
        ledger,
    })
}

pub fn train_patch(examples: &[LabeledExample]) -> Result<ModelArtifact> {
    fit_patch("patch", 1, examples.to_vec())
}

/// `(label, score)` of one patch: positive iff nearer the positive centroid;
/// score is the distance difference over the centroid separation, clamped
/// to `[0, 1]`.
pub fn classify_patch(m: &ModelArtifact, img: &GrayImage) -> Result<(Label, f64)> {
    let (p, n, margin) = m.patch_params()?;
    Ok(classify_feature(p, n, margin, &patch_feature(img)))
}

fn classify_feature(p: &[f64], n: &[f64], margin: f64, f: &[f64]) -> (Label, f64) {
    let (dp, dn) = (distance(p, f), distance(n, f));
    let score = if margin > 0.0 { ((dn - dp) / (2.0 * margin)).clamp(0.0, 1.0) } else { 0.0 };
    (if dp < dn { Label::Positive } else { Label::Negative }, score)
}

/// Sliding-window patch detection followed by NMS at IoU 0.3.
pub fn detect_patches(f: &Frame, m: &ModelArtifact, window: u32, stride: u32) -> Result<Vec<Detection>> {
    detect_patches_gray(&to_grayscale(f), m, window, stride)
}

pub fn detect_patches_gray(g: &GrayImage, m: &ModelArtifact, window: u32, stride: u32) -> Result<Vec<Detection>> {
    let (p, n, margin) = m.patch_params()?;
    if window < MIN_PATCH_SIDE || stride == 0 {
        return Err(Error::invalid(format!("window must be >= {MIN_PATCH_SIDE} and stride >= 1")));
    }
    if window > g.width || window > g.height {
        return Ok(Vec::new());
    }
    let mut dets = Vec::new();
    let mut y = 0;
    while y + window <= g.height {
        let mut x = 0;
        while x + window <= g.width {
            let r = Region { x, y, w: window, h: window };
            let crop = g.crop(&r)?;
            let (label, score) = classify_feature(p, n, margin, &patch_feature(&crop));
            if label == Label::Positive {
                dets.push(Detection { region: r, score, scale: 1.0, label: m.model_id.clone(), hook: HookKind::Model });
            }
            x += stride;
        }
        y += stride;
    }
    Ok(nms(dets, PATCH_NMS_IOU))
}

/// Retrains on the ledger plus `new_examples` and bumps the version. Text
/// models continue descent from their current weights; patch centroids are
/// recomputed. An empty update returns the model unchanged.
pub fn incremental_update(m: &ModelArtifact, new_examples: &[LabeledExample]) -> Result<ModelArtifact> {
    if new_examples.is_empty() {
        return Ok(m.clone());
    }
    if let Some(e) = new_examples.iter().find(|e| e.kind() != m.kind) {
        return Err(Error::invalid(format!("{:?} example given to {:?} model {}", e.kind(), m.kind, m.model_id)));
    }
    let mut ledger = m.ledger.clone();
    ledger.extend_from_slice(new_examples);
    match m.kind {
        ModelKind::Text => fit_text(&m.model_id, m.version + 1, ledger, Some(m.text_params()?)).map(|(a, _)| a),
        ModelKind::Patch => fit_patch(&m.model_id, m.version + 1, ledger),
    }
}

/// A first model for `model_id` (version 1) from `examples`.
pub fn train_named(model_id: &str, kind: ModelKind, examples: &[LabeledExample]) -> Result<ModelArtifact> {
    match kind {
        ModelKind::Text => fit_text(model_id, 1, examples.to_vec(), None).map(|(a, _)| a),
        ModelKind::Patch => fit_patch(model_id, 1, examples.to_vec()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

pub fn accuracy(m: &ModelArtifact, holdout: &TextCorpus) -> Result<f64> {
    let mut right = 0usize;
    for s in &holdout.positives {
        right += (predict_text(m, s)?.0 == Label::Positive) as usize;
    }
    for s in &holdout.negatives {
        right += (predict_text(m, s)?.0 == Label::Negative) as usize;
    }
    let total = holdout.positives.len() + holdout.negatives.len();
    Ok(if total == 0 { 0.0 } else { right as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: u64,
    pub accumulated_positives: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Collaboration {
    pub users: usize,
    pub rate: usize,
    pub steps: usize,
    pub seed: u64,
}

/// Simulated collaborative fine-tuning. Positives are shuffled once with
/// `seed` and dealt out disjointly, `rate` per user per timestep; every
/// negative is available from the first step. Each step retrains from
/// scratch on everything contributed so far and scores `holdout`.
pub fn simulate_collaboration(c: &Collaboration, corpus: &TextCorpus, holdout: &TextCorpus) -> Result<Vec<CurvePoint>> {
    if c.users == 0 || c.rate == 0 || c.steps == 0 {
        return Err(Error::invalid("users, rate and steps must all be >= 1"));
    }
    if corpus.positives.is_empty() || corpus.negatives.is_empty() {
        return Err(Error::invalid("corpus needs both positive and negative sentences"));
    }
    let mut order: Vec<usize> = (0..corpus.positives.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(c.seed));
    let mut examples: Vec<LabeledExample> = corpus
        .negatives
        .iter()
        .map(|s| LabeledExample::text(s.clone(), Label::Negative, "corpus", 0))
        .collect();
    let mut next = 0;
    let mut curve = Vec::with_capacity(c.steps);
    let mut last: Option<f64> = None;
    for t in 1..=c.steps as u64 {
        let before = next;
        for u in 0..c.users {
            for _ in 0..c.rate {
                if next < order.len() {
                    let s = &corpus.positives[order[next]];
                    examples.push(LabeledExample::text(s.clone(), Label::Positive, format!("user-{u:04}"), t));
                    next += 1;
                }
            }
        }
        let acc = match last {
            Some(a) if next == before => a,
            _ => accuracy(&train_text(&examples)?, holdout)?,
        };
        last = Some(acc);
        curve.push(CurvePoint { timestep: t, accumulated_positives: next, accuracy: acc });
    }
    Ok(curve)
}

/// Holdout accuracy of a model trained on the whole corpus at once.
pub fn baseline_accuracy(corpus: &TextCorpus, holdout: &TextCorpus) -> Result<f64> {
    let examples: Vec<LabeledExample> = corpus
        .positives
        .iter()
        .map(|s| LabeledExample::text(s.clone(), Label::Positive, "corpus", 0))
        .chain(corpus.negatives.iter().map(|s| LabeledExample::text(s.clone(), Label::Negative, "corpus", 0)))
        .collect();
    accuracy(&train_text(&examples)?, holdout)
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

fn pseudo_word(i: usize, syllables: usize) -> String {
    let mut n = i;
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        w.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
    }
    w
}

/// Sizes of the synthetic vocabularies.
pub const FILLER_WORDS: usize = 400;
pub const TARGET_WORDS: usize = 120;

/// Seeded synthetic corpus. Negatives are 6-12 neutral filler words;
/// positives mix in 1-2 words from a target lexicon drawn with Zipf-like
/// frequencies. A small share of sentences break the pattern (positives
/// without a target word, negatives with one), so accuracy saturates below 1.
pub fn synthetic_corpus(positives: usize, negatives: usize, seed: u64) -> TextCorpus {
    let filler: Vec<String> = (0..FILLER_WORDS).map(|i| pseudo_word(i, 2)).collect();
    let target: Vec<String> = (0..TARGET_WORDS).map(|i| pseudo_word(i, 3)).collect();
    let zipf: Vec<f64> = (0..TARGET_WORDS).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    let zsum: f64 = zipf.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick_target = |rng: &mut ChaCha8Rng| {
        let mut u = rng.random::<f64>() * zsum;
        for (i, z) in zipf.iter().enumerate() {
            if u < *z {
                return target[i].clone();
            }
            u -= z;
        }
        target[TARGET_WORDS - 1].clone()
    };
    let sentence = |rng: &mut ChaCha8Rng, targets: usize| {
        let len = rng.random_range(6..=12);
        let mut words: Vec<String> = (0..len).map(|_| filler[rng.random_range(0..FILLER_WORDS)].clone()).collect();
        for _ in 0..targets {
            let at = rng.random_range(0..=words.len());
            words.insert(at, pick_target(rng));
        }
        words.join(" ")
    };
    let pos = (0..positives)
        .map(|_| {
            let k = if rng.random::<f64>() < 0.08 { 0 } else { rng.random_range(1..=2) };
            sentence(&mut rng, k)
        })
        .collect();
    let neg = (0..negatives)
        .map(|_| {
            let k = usize::from(rng.random::<f64>() < 0.03);
            sentence(&mut rng, k)
        })
        .collect();
    TextCorpus { positives: pos, negatives: neg }
}

/// Sizes of the default simulation corpus and its holdout.
pub const CORPUS_POSITIVES: usize = 1000;
pub const CORPUS_NEGATIVES: usize = 5000;
pub const HOLDOUT_PER_CLASS: usize = 200;
const HOLDOUT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// The default training corpus for `seed` and a balanced holdout drawn
/// with a different seed.
pub fn default_corpora(seed: u64) -> (TextCorpus, TextCorpus) {
    (
        synthetic_corpus(CORPUS_POSITIVES, CORPUS_NEGATIVES, seed),
        synthetic_corpus(HOLDOUT_PER_CLASS, HOLDOUT_PER_CLASS, seed.wrapping_add(HOLDOUT_SEED_OFFSET)),
    )
}

/// Seeded split holding out `fraction` of each class (at least one
/// sentence per class when the class has two or more).
pub fn split_holdout(c: &TextCorpus, fraction: f64, seed: u64) -> (TextCorpus, TextCorpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = |v: &[String]| {
        let mut v = v.to_vec();
        v.shuffle(&mut rng);
        let k = ((v.len() as f64 * fraction).round() as usize).max(usize::from(v.len() >= 2)).min(v.len());
        let held = v.split_off(v.len() - k);
        (v, held)
    };
    let (pos, hpos) = split(&c.positives);
    let (neg, hneg) = split(&c.negatives);
    (TextCorpus { positives: pos, negatives: neg }, TextCorpus { positives: hpos, negatives: hneg })
}
