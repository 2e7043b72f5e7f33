//! Intervention registry and the sequential apply chain.
//!
//! An intervention pairs a hook configuration with a render action. Specs are
//! created and extended by compiling annotations whose label names the
//! intervention (`mask-*`, `text-*`, `image-*`). A user's activation set is an
//! ordered list of intervention ids; the chain runs each hook on the frame as
//! left by the previous intervention and renders its detections.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::history::Annotation;
use crate::image::{to_grayscale, Frame, GrayImage, Region};
use crate::mask::{Detection, HookKind, MaskTemplate, MatchMode, MatchParams, Matcher, PreparedFrame};
use crate::model::{
    detect_patches_gray, incremental_update, predict_text, train_named, LabeledExample, Label, ModelArtifact,
    ModelKind, MIN_PATCH_SIDE,
};
use crate::render::RenderAction;
use crate::text::{extract_chars, scan_text, BuiltinDetector, TextDetector, BUILTIN_DETECTOR_ID};

pub const DEFAULT_TEXT_CUTOFF: f64 = 0.5;
/// Background crops sampled per positive patch.
pub const NEGATIVES_PER_PATCH: usize = 4;

/// Sentences used as negatives for text interventions.
pub const NEUTRAL_CORPUS: [&str; 24] = [
    "see you at lunch tomorrow",
    "the weather is nice today",
    "new photos from the trip",
    "happy birthday to my sister",
    "coffee with friends this morning",
    "just finished a long run",
    "the garden looks great",
    "watching a movie tonight",
    "reading a good book",
    "welcome to the team",
    "thanks for the help",
    "our meeting moved to friday",
    "the train is running late",
    "dinner was delicious",
    "check out this recipe",
    "the kids loved the park",
    "weekend plans anyone",
    "learning to play guitar",
    "the sunset was beautiful",
    "congrats on the new job",
    "good morning everyone",
    "my cat is sleeping again",
    "trying a new bakery",
    "see the game last night",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionKind {
    Mask,
    Text,
    Image,
}

impl InterventionKind {
    pub fn prefix(self) -> &'static str {
        match self {
            InterventionKind::Mask => "mask",
            InterventionKind::Text => "text",
            InterventionKind::Image => "image",
        }
    }
}

/// Splits a label of the form `(mask|text|image)-[a-z0-9-]+`.
pub fn parse_label(label: &str) -> Result<InterventionKind> {
    let (prefix, rest) = label
        .split_once('-')
        .ok_or_else(|| Error::invalid(format!("label {label:?} must look like mask-<name>, text-<name> or image-<name>")))?;
    let kind = match prefix {
        "mask" => InterventionKind::Mask,
        "text" => InterventionKind::Text,
        "image" => InterventionKind::Image,
        _ => {
            return Err(Error::invalid(format!(
                "label {label:?} must start with mask-, text- or image-"
            )))
        }
    };
    if !crate::source::is_slug(rest) {
        return Err(Error::invalid(format!("label {label:?}: name after the prefix must match [a-z0-9-]+")));
    }
    Ok(kind)
}

fn default_iou() -> f64 {
    crate::mask::DEFAULT_IOU_THRESHOLD
}

fn default_detector() -> String {
    BUILTIN_DETECTOR_ID.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "hook", rename_all = "lowercase")]
pub enum HookConfig {
    Mask {
        templates: Vec<String>,
        threshold: f64,
        mode: MatchMode,
        #[serde(default = "default_iou")]
        iou_threshold: f64,
    },
    Text {
        model: String,
        cutoff: f64,
        #[serde(default = "default_detector")]
        detector: String,
    },
    Image {
        model: String,
        window: u32,
        stride: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub intervention_id: String,
    pub name: String,
    pub kind: InterventionKind,
    pub hook_config: HookConfig,
    pub render_action: RenderAction,
    pub owner: String,
    pub shared: bool,
    pub created_from: Vec<String>,
    pub version: u64,
}

/// Stable id of `owner`'s intervention `name`.
pub fn intervention_id(owner: &str, name: &str) -> String {
    let mut h = Sha256::new();
    h.update(owner.as_bytes());
    h.update([0]);
    h.update(name.as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationSet {
    pub user: String,
    pub ids: Vec<String>,
}

impl ActivationSet {
    pub fn new(user: impl Into<String>, ids: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("intervention {dup} activated twice")));
        }
        Ok(ActivationSet { user: user.into(), ids })
    }

    pub fn empty(user: impl Into<String>) -> Self {
        ActivationSet { user: user.into(), ids: Vec::new() }
    }
}

/// Specs plus the templates and models they reference, optionally mirrored
/// to a directory (`<root>/<owner>/<name>/`).
#[derive(Default)]
pub struct Registry {
    root: Option<PathBuf>,
    users: BTreeSet<String>,
    specs: BTreeMap<String, InterventionSpec>,
    templates: HashMap<String, MaskTemplate>,
    models: HashMap<String, ModelArtifact>,
}

impl Registry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every spec under `root` and persists later changes there.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        let mut reg = Registry { root: Some(root.clone()), ..Default::default() };
        for owner in sorted_dirs(&root)? {
            for dir in sorted_dirs(&owner)? {
                let spec_path = dir.join("spec.json");
                if !spec_path.is_file() {
                    continue;
                }
                let spec: InterventionSpec = serde_json::from_slice(&std::fs::read(&spec_path)?)?;
                match &spec.hook_config {
                    HookConfig::Mask { templates, .. } => {
                        for id in templates {
                            let t: MaskTemplate = serde_json::from_slice(&std::fs::read(dir.join(format!("{id}.json")))?)?;
                            reg.templates.insert(id.clone(), t);
                        }
                    }
                    HookConfig::Text { model, .. } | HookConfig::Image { model, .. } => {
                        let path = dir.join("model.json");
                        if path.is_file() {
                            let m: ModelArtifact = serde_json::from_slice(&std::fs::read(path)?)?;
                            reg.models.insert(model.clone(), m);
                        }
                    }
                }
                reg.users.insert(spec.owner.clone());
                reg.specs.insert(spec.intervention_id.clone(), spec);
            }
        }
        Ok(reg)
    }

    pub fn add_user(&mut self, user: &str) {
        self.users.insert(user.to_string());
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.users.contains(user)
    }

    pub fn spec(&self, id: &str) -> Option<&InterventionSpec> {
        self.specs.get(id)
    }

    pub fn specs(&self) -> impl Iterator<Item = &InterventionSpec> {
        self.specs.values()
    }

    pub fn find(&self, owner: &str, name: &str) -> Option<&InterventionSpec> {
        self.specs.get(&intervention_id(owner, name))
    }

    pub fn template(&self, id: &str) -> Option<&MaskTemplate> {
        self.templates.get(id)
    }

    pub fn model(&self, id: &str) -> Option<&ModelArtifact> {
        self.models.get(id)
    }

    /// Registers a spec with its payloads, replacing one with the same id.
    pub fn insert(
        &mut self,
        spec: InterventionSpec,
        templates: Vec<MaskTemplate>,
        model: Option<ModelArtifact>,
    ) -> Result<()> {
        parse_label(&spec.name)?;
        if !crate::is_valid_user(&spec.owner) {
            return Err(Error::invalid(format!("owner {:?} is not a valid user name", spec.owner)));
        }
        for t in &templates {
            self.templates.insert(t.template_id.clone(), t.clone());
        }
        if let Some(m) = &model {
            self.models.insert(m.model_id.clone(), m.clone());
        }
        self.users.insert(spec.owner.clone());
        self.persist(&spec, &templates, model.as_ref())?;
        self.specs.insert(spec.intervention_id.clone(), spec);
        Ok(())
    }

    /// Specs owned by `user` plus every shared spec, ordered by
    /// (kind, name, owner).
    pub fn list_available(&self, user: &str) -> Result<Vec<InterventionSpec>> {
        if !self.has_user(user) {
            return Err(Error::NotFound(format!("user {user}")));
        }
        let mut out: Vec<InterventionSpec> =
            self.specs.values().filter(|s| s.owner == user || s.shared).cloned().collect();
        out.sort_by(|a, b| (a.kind, &a.name, &a.owner).cmp(&(b.kind, &b.name, &b.owner)));
        out.dedup_by(|a, b| a.intervention_id == b.intervention_id);
        Ok(out)
    }

    pub fn share(&mut self, user: &str, id: &str, flag: bool) -> Result<InterventionSpec> {
        let spec = self.specs.get(id).ok_or_else(|| Error::NotFound(format!("intervention {id}")))?;
        if spec.owner != user {
            return Err(Error::PermissionDenied(format!("{user} does not own intervention {id}")));
        }
        if spec.shared == flag {
            return Ok(spec.clone());
        }
        let mut spec = spec.clone();
        spec.shared = flag;
        spec.version += 1;
        self.persist(&spec, &[], None)?;
        self.specs.insert(id.to_string(), spec.clone());
        Ok(spec)
    }

    /// Replaces the render action of an owned spec.
    pub fn set_render_action(&mut self, user: &str, id: &str, action: RenderAction) -> Result<InterventionSpec> {
        let spec = self.specs.get(id).ok_or_else(|| Error::NotFound(format!("intervention {id}")))?;
        if spec.owner != user {
            return Err(Error::PermissionDenied(format!("{user} does not own intervention {id}")));
        }
        let mut spec = spec.clone();
        if spec.render_action != action {
            spec.render_action = action;
            spec.version += 1;
            self.persist(&spec, &[], None)?;
            self.specs.insert(id.to_string(), spec.clone());
        }
        Ok(spec)
    }

    /// Every id must name a spec visible to the set's user whose templates
    /// or model exist.
    pub fn check_activation(&self, set: &ActivationSet) -> Result<()> {
        for id in &set.ids {
            let spec = self.specs.get(id).ok_or_else(|| Error::NotFound(format!("intervention {id}")))?;
            if spec.owner != set.user && !spec.shared {
                return Err(Error::PermissionDenied(format!("intervention {id} is not shared")));
            }
            self.resolve(spec)?;
        }
        Ok(())
    }

    fn resolve(&self, spec: &InterventionSpec) -> Result<()> {
        match &spec.hook_config {
            HookConfig::Mask { templates, .. } => {
                if let Some(t) = templates.iter().find(|t| !self.templates.contains_key(*t)) {
                    return Err(Error::NotFound(format!("template {t} of {}", spec.name)));
                }
            }
            HookConfig::Text { model, .. } | HookConfig::Image { model, .. } => {
                if !self.models.contains_key(model) {
                    return Err(Error::NotFound(format!("model {model} of {}", spec.name)));
                }
            }
        }
        Ok(())
    }

    /// Creates or extends the intervention named by the annotation label,
    /// using the annotated region of `frame`.
    pub fn compile_annotation(&mut self, a: &Annotation, frame: &Frame) -> Result<InterventionSpec> {
        let kind = parse_label(&a.label)?;
        if a.region.w == 0 || a.region.h == 0 || !a.region.fits(frame.width, frame.height) {
            return Err(Error::invalid(format!(
                "region {:?} is not inside the {}x{} frame",
                a.region, frame.width, frame.height
            )));
        }
        let id = intervention_id(&a.annotator, &a.label);
        let existing = self.specs.get(&id).cloned();
        let gray = to_grayscale(frame);
        let (spec, templates, model) = match kind {
            InterventionKind::Mask => {
                let (mut spec, mut tids, threshold, mode, iou) = match existing {
                    Some(s) => match &s.hook_config {
                        HookConfig::Mask { templates, threshold, mode, iou_threshold } => {
                            let (t, th, m, iou) = (templates.clone(), *threshold, *mode, *iou_threshold);
                            (s, t, th, m, iou)
                        }
                        _ => return Err(Error::Conflict(format!("{} is not a mask intervention", a.label))),
                    },
                    None => {
                        let mode = MatchMode::Intensity;
                        let (threshold, iou) = (mode.default_threshold(), default_iou());
                        let hook = HookConfig::Mask { templates: Vec::new(), threshold, mode, iou_threshold: iou };
                        (new_spec(&id, a, kind, hook), Vec::new(), threshold, mode, iou)
                    }
                };
                let tid = format!("{id}-t{}", tids.len() + 1);
                let crop = gray.crop(&a.region)?;
                let t = MaskTemplate::new(tid.clone(), a.label.clone(), crop, mode, Some(a.annotation_id.clone()))?;
                tids.push(tid);
                spec.hook_config = HookConfig::Mask { templates: tids, threshold, mode, iou_threshold: iou };
                (spec, vec![t], None)
            }
            InterventionKind::Text => {
                let tb = extract_chars(&gray, &a.region)?;
                let text = tb.text.trim().to_string();
                if !text.chars().any(|c| c.is_alphanumeric()) {
                    return Err(Error::AnnotationRejected(format!("no text found in region {:?}", a.region)));
                }
                let step = existing.as_ref().map_or(1, |s| s.version + 1);
                let positive = LabeledExample::text(text, Label::Positive, &a.annotator, step);
                let (spec, model) = match existing {
                    Some(s) => {
                        let HookConfig::Text { model, .. } = &s.hook_config else {
                            return Err(Error::Conflict(format!("{} is not a text intervention", a.label)));
                        };
                        let m = self.models.get(model).ok_or_else(|| Error::NotFound(format!("model {model}")))?;
                        (s.clone(), incremental_update(m, &[positive])?)
                    }
                    None => {
                        let mut examples = vec![positive];
                        examples.extend(
                            NEUTRAL_CORPUS.iter().map(|s| LabeledExample::text(*s, Label::Negative, "builtin", 0)),
                        );
                        let m = train_named(&id, ModelKind::Text, &examples)?;
                        let hook = HookConfig::Text { model: id.clone(), cutoff: DEFAULT_TEXT_CUTOFF, detector: default_detector() };
                        (new_spec(&id, a, kind, hook), m)
                    }
                };
                (spec, Vec::new(), Some(model))
            }
            InterventionKind::Image => {
                if a.region.w < MIN_PATCH_SIDE || a.region.h < MIN_PATCH_SIDE {
                    return Err(Error::AnnotationRejected(format!(
                        "image regions must be at least {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}"
                    )));
                }
                let step = existing.as_ref().map_or(1, |s| s.version + 1);
                let mut examples =
                    vec![LabeledExample::patch(gray.crop(&a.region)?, Label::Positive, &a.annotator, step)?];
                for r in background_crops(&gray, &a.region, NEGATIVES_PER_PATCH, seed_of(&a.annotation_id)) {
                    examples.push(LabeledExample::patch(gray.crop(&r)?, Label::Negative, &a.annotator, step)?);
                }
                let (spec, model) = match existing {
                    Some(s) => {
                        let HookConfig::Image { model, .. } = &s.hook_config else {
                            return Err(Error::Conflict(format!("{} is not an image intervention", a.label)));
                        };
                        let m = self.models.get(model).ok_or_else(|| Error::NotFound(format!("model {model}")))?;
                        (s.clone(), incremental_update(m, &examples)?)
                    }
                    None => {
                        let negatives = examples.iter().filter(|e| e.label == Label::Negative).count();
                        if negatives == 0 {
                            return Err(Error::AnnotationRejected(
                                "no background left outside the region to sample negatives from".into(),
                            ));
                        }
                        let m = train_named(&id, ModelKind::Patch, &examples)?;
                        let hook = HookConfig::Image { model: id.clone(), window: 0, stride: 0 };
                        (new_spec(&id, a, kind, hook), m)
                    }
                };
                let mut spec = spec;
                let window = patch_window(&model);
                spec.hook_config = HookConfig::Image { model: id.clone(), window, stride: (window / 16).max(1) };
                (spec, Vec::new(), Some(model))
            }
        };
        let mut spec = spec;
        if self.specs.contains_key(&id) {
            spec.version += 1;
            spec.created_from.push(a.annotation_id.clone());
        }
        self.insert(spec.clone(), templates, model)?;
        Ok(spec)
    }

    fn persist(&self, spec: &InterventionSpec, templates: &[MaskTemplate], model: Option<&ModelArtifact>) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let dir = root.join(&spec.owner).join(&spec.name);
        std::fs::create_dir_all(&dir)?;
        for t in templates {
            t.image.to_frame().write_png(&dir.join(format!("{}.png", t.template_id)))?;
            write_atomic(&dir.join(format!("{}.json", t.template_id)), &serde_json::to_vec(t)?)?;
        }
        if let Some(m) = model {
            write_atomic(&dir.join("model.json"), &serde_json::to_vec(m)?)?;
        }
        write_atomic(&dir.join("spec.json"), &serde_json::to_vec_pretty(spec)?)
    }
}

fn new_spec(id: &str, a: &Annotation, kind: InterventionKind, hook: HookConfig) -> InterventionSpec {
    InterventionSpec {
        intervention_id: id.to_string(),
        name: a.label.clone(),
        kind,
        hook_config: hook,
        render_action: RenderAction::default(),
        owner: a.annotator.clone(),
        shared: false,
        created_from: vec![a.annotation_id.clone()],
        version: 1,
    }
}

/// Rounded mean of `sqrt(w * h)` over the model's positive patches.
fn patch_window(m: &ModelArtifact) -> u32 {
    let sides: Vec<f64> = m
        .ledger
        .iter()
        .filter(|e| e.label == Label::Positive)
        .filter_map(|e| match &e.payload {
            crate::model::Payload::Patch(p) => Some((p.width as f64 * p.height as f64).sqrt()),
            _ => None,
        })
        .collect();
    let mean = sides.iter().sum::<f64>() / sides.len().max(1) as f64;
    (mean.round() as u32).max(MIN_PATCH_SIDE)
}

fn seed_of(s: &str) -> u64 {
    let d = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Up to `n` seeded crops the size of `r` that do not intersect it.
pub fn background_crops(g: &GrayImage, r: &Region, n: usize, seed: u64) -> Vec<Region> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    if r.w > g.width || r.h > g.height {
        return out;
    }
    for _ in 0..n * 50 {
        if out.len() == n {
            break;
        }
        let c = Region { x: rng.random_range(0..=g.width - r.w), y: rng.random_range(0..=g.height - r.h), w: r.w, h: r.h };
        if c.intersect(r).is_none() {
            out.push(c);
        }
    }
    out
}

fn sorted_dirs(p: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    v.sort();
    Ok(v)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStep {
    pub intervention_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChainReport {
    pub applied: Vec<ChainStep>,
    /// `(intervention_id, reason)` for interventions that were skipped.
    pub skipped: Vec<(String, String)>,
}

/// Runs activation sets frame after frame, keeping matcher caches and text
/// detectors between frames.
pub struct ChainRunner {
    matcher: Matcher,
    detectors: HashMap<String, Arc<dyn TextDetector>>,
}

impl Default for ChainRunner {
    fn default() -> Self {
        Self::new()
    }
}

impl ChainRunner {
    pub fn new() -> Self {
        let mut detectors: HashMap<String, Arc<dyn TextDetector>> = HashMap::new();
        detectors.insert(BUILTIN_DETECTOR_ID.to_string(), Arc::new(BuiltinDetector));
        ChainRunner { matcher: Matcher::new(), detectors }
    }

    pub fn add_detector(&mut self, d: Arc<dyn TextDetector>) {
        self.detectors.insert(d.detector_id().to_string(), d);
    }

    pub fn apply(&mut self, f: &Frame, active: &ActivationSet, reg: &Registry) -> Frame {
        self.apply_reported(f, active, reg).0
    }

    pub fn apply_reported(&mut self, f: &Frame, active: &ActivationSet, reg: &Registry) -> (Frame, ChainReport) {
        let mut out = f.clone();
        let mut report = ChainReport::default();
        let mut prepared: Option<PreparedFrame> = None;
        for id in &active.ids {
            let Some(spec) = reg.spec(id) else {
                tracing::warn!(intervention = %id, "unknown intervention skipped");
                report.skipped.push((id.clone(), "unknown intervention".into()));
                continue;
            };
            let prep = prepared.get_or_insert_with(|| PreparedFrame::new(&out));
            match self.detect(spec, &out, prep, reg) {
                Ok(dets) => {
                    for d in &dets {
                        spec.render_action.apply(&mut out, &d.region);
                    }
                    if !dets.is_empty() {
                        prepared = None;
                    }
                    report.applied.push(ChainStep { intervention_id: id.clone(), detections: dets });
                }
                Err(e) => {
                    tracing::warn!(intervention = %id, error = %e, "hook failed, intervention skipped");
                    report.skipped.push((id.clone(), e.to_string()));
                }
            }
        }
        (out, report)
    }

    /// Detections of one intervention's hook on `f`.
    pub fn detect(
        &mut self,
        spec: &InterventionSpec,
        f: &Frame,
        prepared: &mut PreparedFrame,
        reg: &Registry,
    ) -> Result<Vec<Detection>> {
        reg.resolve(spec)?;
        match &spec.hook_config {
            HookConfig::Mask { templates, threshold, iou_threshold, .. } => {
                let ts: Vec<&MaskTemplate> = templates.iter().filter_map(|t| reg.template(t)).collect();
                let params = MatchParams { threshold: *threshold, iou_threshold: *iou_threshold };
                Ok(self.matcher.detect_prepared(prepared, &ts, &params))
            }
            HookConfig::Text { model, cutoff, detector } => {
                let m = reg.model(model).expect("resolved above");
                let d = self
                    .detectors
                    .get(detector)
                    .cloned()
                    .ok_or_else(|| Error::HookUnavailable(format!("text detector {detector} not configured")))?;
                let mut dets = Vec::new();
                for tb in scan_text(f, d.as_ref())? {
                    let (_, p) = predict_text(m, &tb.text)?;
                    if p >= *cutoff {
                        dets.push(Detection { region: tb.region, score: p, scale: 1.0, label: model.clone(), hook: HookKind::Text });
                    }
                }
                Ok(dets)
            }
            HookConfig::Image { model, window, stride } => {
                let m = reg.model(model).expect("resolved above");
                detect_patches_gray(prepared.gray(), m, *window, *stride)
            }
        }
    }
}

/// One-shot chain application with fresh caches.
pub fn apply_chain(f: &Frame, active: &ActivationSet, reg: &Registry) -> Frame {
    ChainRunner::new().apply(f, active, reg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annotation(label: &str, region: Region, user: &str, n: u32) -> Annotation {
        Annotation {
            annotation_id: format!("a{n}"),
            record_id: "r".into(),
            region,
            label: label.into(),
            annotator: user.into(),
            created_ms: 0,
        }
    }

    fn planted() -> (Frame, Region) {
        let mut f = Frame::filled(96, 64, [200, 200, 200]);
        let r = Region { x: 30, y: 20, w: 16, h: 12 };
        for y in 0..r.h {
            for x in 0..r.w {
                let v = ((x * 37 + y * 91) % 200) as u8;
                f.set_pixel(r.x + x, r.y + y, [v, 255 - v, v / 2]);
            }
        }
        (f, r)
    }

    #[test]
    fn labels() {
        assert_eq!(parse_label("mask-stories").unwrap(), InterventionKind::Mask);
        assert_eq!(parse_label("image-cup-2").unwrap(), InterventionKind::Image);
        for bad in ["remove-ads", "mask-", "mask", "Mask-x", "text-Hate", "mask-a_b"] {
            assert!(matches!(parse_label(bad), Err(Error::InvalidArgument(_))), "{bad}");
        }
    }

    #[test]
    fn mask_annotations_accumulate() {
        let mut reg = Registry::in_memory();
        let (f, r) = planted();
        let s1 = reg.compile_annotation(&annotation("mask-stories", r, "ana", 1), &f).unwrap();
        let HookConfig::Mask { templates, .. } = &s1.hook_config else { panic!() };
        assert_eq!(templates.len(), 1);
        assert_eq!(s1.version, 1);
        let s2 = reg.compile_annotation(&annotation("mask-stories", r, "ana", 2), &f).unwrap();
        let HookConfig::Mask { templates, .. } = &s2.hook_config else { panic!() };
        assert_eq!(templates.len(), 2);
        assert_eq!(s2.intervention_id, s1.intervention_id);
        assert_eq!(s2.created_from, vec!["a1".to_string(), "a2".to_string()]);
        assert_eq!(s2.version, 2);
    }

    #[test]
    fn text_on_blank_is_rejected() {
        let mut reg = Registry::in_memory();
        let f = Frame::filled(64, 32, [255, 255, 255]);
        let err = reg.compile_annotation(&annotation("text-hate", Region { x: 4, y: 4, w: 40, h: 20 }, "ana", 1), &f);
        assert!(matches!(err, Err(Error::AnnotationRejected(_))));
        assert!(reg.specs().next().is_none());
    }

    #[test]
    fn region_outside_frame_is_invalid() {
        let mut reg = Registry::in_memory();
        let (f, _) = planted();
        let err = reg.compile_annotation(&annotation("mask-x", Region { x: 90, y: 0, w: 10, h: 10 }, "ana", 1), &f);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn chain_identity_and_single_step() {
        let mut reg = Registry::in_memory();
        let (f, r) = planted();
        let spec = reg.compile_annotation(&annotation("mask-box", r, "ana", 1), &f).unwrap();
        assert_eq!(apply_chain(&f, &ActivationSet::empty("ana"), &reg), f);
        let out = apply_chain(&f, &ActivationSet::new("ana", vec![spec.intervention_id.clone()]).unwrap(), &reg);
        let mut want = f.clone();
        want.fill_region(&r, [0, 0, 0]);
        assert_eq!(out, want);
    }

    #[test]
    fn unknown_ids_fail_open() {
        let mut reg = Registry::in_memory();
        let (f, r) = planted();
        let spec = reg.compile_annotation(&annotation("mask-box", r, "ana", 1), &f).unwrap();
        let set = ActivationSet::new("ana", vec!["nope".into(), spec.intervention_id.clone()]).unwrap();
        let (out, report) = ChainRunner::new().apply_reported(&f, &set, &reg);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(out, apply_chain(&f, &ActivationSet::new("ana", vec![spec.intervention_id]).unwrap(), &reg));
    }

    #[test]
    fn listing_and_sharing() {
        let mut reg = Registry::in_memory();
        reg.add_user("bo");
        assert!(reg.list_available("bo").unwrap().is_empty());
        assert!(matches!(reg.list_available("zed"), Err(Error::NotFound(_))));
        let (f, r) = planted();
        let a = reg.compile_annotation(&annotation("mask-ads", r, "ana", 1), &f).unwrap();
        let b = reg.compile_annotation(&annotation("mask-ads", r, "bo", 2), &f).unwrap();
        assert_ne!(a.intervention_id, b.intervention_id);
        assert!(matches!(reg.share("bo", &a.intervention_id, true), Err(Error::PermissionDenied(_))));
        let s = reg.share("ana", &a.intervention_id, true).unwrap();
        assert_eq!(s.version, 2);
        assert_eq!(reg.share("ana", &a.intervention_id, true).unwrap().version, 2);
        let seen = reg.list_available("bo").unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen.iter().filter(|s| s.name == "mask-ads").count(), 2);
        assert!(reg.check_activation(&ActivationSet::new("bo", vec![a.intervention_id.clone()]).unwrap()).is_ok());
        reg.share("ana", &a.intervention_id, false).unwrap();
        assert!(reg.check_activation(&ActivationSet::new("bo", vec![a.intervention_id]).unwrap()).is_err());
    }

    #[test]
    fn duplicate_activation_rejected() {
        assert!(ActivationSet::new("ana", vec!["x".into(), "x".into()]).is_err());
    }

    #[test]
    fn background_crops_avoid_region() {
        let g = GrayImage::filled(100, 80, 0.0);
        let r = Region { x: 10, y: 10, w: 30, h: 30 };
        let crops = background_crops(&g, &r, 4, 9);
        assert_eq!(crops.len(), 4);
        assert!(crops.iter().all(|c| c.intersect(&r).is_none() && c.fits(100, 80)));
        assert_eq!(crops, background_crops(&g, &r, 4, 9));
    }
}
