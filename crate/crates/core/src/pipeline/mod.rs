//! Training, full and pruned classification, transition detection,
//! benchmarking and model persistence.
//!
//! Each emotion `e` gets a "not e" detector: a linear SVM whose positive
//! class is every other emotion. The full path scores all six detectors on
//! features from all 24 points and picks the emotion whose detector reports
//! the least evidence of absence. The pruned path scores a second set of
//! detectors trained only on the points of each emotion's monitoring plan and
//! falls back to the full path unless exactly one of them accepts.

mod bench;
mod persist;
mod transitions;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::facegeo::{FaceModel, FeaturePointId, GeometryError, NormalizingTransform, Point};
use crate::faucodes::{au_bindings, ActionUnit, AuMapping, AuSet, Emotion, RuleError};
use crate::imaging::{
    canny, extract_patches, image_to_vector, rescale_landmarks, resize, vector_to_image,
    CannyParams, Image, ImageError, DEFAULT_PATCH_RADIUS, WORKING_HEIGHT, WORKING_WIDTH,
};
use crate::mlcore::{
    pca_fit, pca_project, pca_reconstruct, svm_train_with, Class, LabelMap, MlError, PcaModel,
    Sample, SvmModel, SvmParams,
};
use crate::ruleengine::{
    build_transition_tree, classify_observation, evaluate_tree, movement_along, plan_monitoring,
    AuObservation, DecisionTree, EmotionDecision, TreeLabel,
};
use crate::synthgen::{LabeledSample, Rendering};

pub use bench::{bench_compare, BenchReport, BenchRow, DetectorRow};
pub use persist::{load_bundle, parse_bundle, save_bundle, serialize_bundle, ModelFileError};
pub use transitions::{detect_transitions, TransitionEvent};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("image mode needs a rendered image with pixel landmarks")]
    MissingImage,
    #[error("dataset has no {0} samples")]
    MissingClass(Emotion),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sequence has {0} frames, need at least 2")]
    SequenceTooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Normalized displacement `(dx, dy)` of each point against the neutral face.
    Landmark,
    /// Pixel patches around each point of the preprocessed image.
    Image,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Landmark => "landmark",
            FeatureMode::Image => "image",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "landmark" => Some(FeatureMode::Landmark),
            "image" => Some(FeatureMode::Image),
            _ => None,
        }
    }
}

/// What image-mode patches sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchValues {
    /// Edge mask, 1 on edges and 0 elsewhere.
    Edges,
    /// Luminance scaled to `[0, 1]`.
    Luminance,
}

impl PatchValues {
    pub fn name(self) -> &'static str {
        match self {
            PatchValues::Edges => "edges",
            PatchValues::Luminance => "luminance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "edges" => Some(PatchValues::Edges),
            "luminance" => Some(PatchValues::Luminance),
            _ => None,
        }
    }
}

/// Everything that determines feature extraction and training.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: FeatureMode,
    pub width: usize,
    pub height: usize,
    /// Requested PCA components (image mode); capped at `n_train - 1`.
    pub components: usize,
    pub patch_radius: usize,
    pub canny: CannyParams,
    /// Run Canny on the PCA reconstruction rather than the resized image.
    pub canny_on_pca: bool,
    pub patch_values: PatchValues,
    pub svm_c: f64,
    pub seed: u64,
    /// Fraction of each class used for training.
    pub split_ratio: f64,
    /// AU presence threshold in normalized units.
    pub tau: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: FeatureMode::Landmark,
            width: WORKING_WIDTH,
            height: WORKING_HEIGHT,
            components: 10,
            patch_radius: DEFAULT_PATCH_RADIUS,
            canny: CannyParams::default(),
            canny_on_pca: true,
            patch_values: PatchValues::Edges,
            svm_c: 1.0,
            seed: 42,
            split_ratio: 1.0 / 3.0,
            tau: 0.05,
        }
    }
}

impl PipelineConfig {
    /// Feature values contributed by one point.
    pub fn block_len(&self) -> usize {
        match self.mode {
            FeatureMode::Landmark => 2,
            FeatureMode::Image => (2 * self.patch_radius + 1).pow(2),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::ConfigMismatch(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("working size must be positive");
        }
        if self.patch_radius == 0 {
            return bad("patch radius must be at least 1");
        }
        if self.components == 0 {
            return bad("components must be at least 1");
        }
        if !(self.svm_c > 0.0) || !self.svm_c.is_finite() {
            return bad("C must be positive");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split ratio must be in (0, 1)");
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad("tau must be positive");
        }
        let c = self.canny;
        if !(c.sigma > 0.0) || !(c.low >= 0.0) || !(c.low <= c.high) {
            return bad("canny needs sigma > 0 and 0 <= low <= high");
        }
        Ok(())
    }
}

/// Centering plus one shared scale, fitted on the training set. A single
/// scale keeps the relative size of features: per-feature standardization
/// would blow points that only carry noise up to the size of real movement.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Root-mean-square of the centred training features (1 when they are
    /// all constant), repeated per feature.
    pub scale: Vec<f64>,
}

impl Scaler {
    fn fit(rows: &[Vec<f64>]) -> Scaler {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut ss = 0.0;
        for r in rows {
            for (x, m) in r.iter().zip(&mean) {
                ss += (x - m) * (x - m);
            }
        }
        let rms = (ss / (n * d as f64)).sqrt();
        let scale = vec![if rms < 1e-12 { 1.0 } else { rms }; d];
        Scaler { mean, scale }
    }

    fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    /// Standardizes features laid out as consecutive per-point blocks.
    fn apply_blocks(&self, x: &mut [f64], points: &[FeaturePointId], block: usize) {
        for (k, id) in points.iter().enumerate() {
            let src = id.index() * block;
            for j in 0..block {
                let v = &mut x[k * block + j];
                *v = (*v - self.mean[src + j]) / self.scale[src + j];
            }
        }
    }
}

/// A "not e" detector on all 24 points.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub emotion: Emotion,
    pub model: SvmModel,
}

/// A "not e" detector restricted to the points of `e`'s monitoring plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedDetector {
    pub emotion: Emotion,
    /// Plan points in canonical order.
    pub points: Vec<FeaturePointId>,
    pub model: SvmModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBundle {
    pub config: PipelineConfig,
    /// Image mode with Canny on the reconstruction only.
    pub pca: Option<PcaModel>,
    pub scaler: Scaler,
    /// One per emotion, in canonical emotion order.
    pub detectors: Vec<Detector>,
    pub pruned: Vec<PrunedDetector>,
    /// Mean 48-dim landmark displacement of each training class.
    pub centroids: Vec<Vec<f64>>,
    /// Derived from the fields above on the first pruned classification;
    /// mutating a bundle after that leaves it stale.
    plan: PlanCache,
}

type FusedDetector = (Vec<(usize, [f64; 2])>, f64);

/// Pruned-path tables: the union of the plan points and the AU probes over
/// them, plus in landmark mode each pruned detector folded together with the
/// scaler into weights on raw displacements.
struct PrunedPlan {
    points: Vec<FeaturePointId>,
    /// Per emotion: `(slot, weights)` terms over `points` and the bias.
    fused: Vec<FusedDetector>,
    probes: Vec<(ActionUnit, [usize; 2], [Point; 2])>,
}

impl PrunedPlan {
    fn build(bundle: &TrainedBundle) -> PrunedPlan {
        let union: BTreeSet<FeaturePointId> = bundle
            .pruned
            .iter()
            .flat_map(|p| p.points.iter().copied())
            .collect();
        let points: Vec<FeaturePointId> = union.into_iter().collect();
        let slot = |id: FeaturePointId| points.iter().position(|&p| p == id);
        let fused = if bundle.config.mode == FeatureMode::Landmark {
            bundle
                .pruned
                .iter()
                .map(|det| {
                    let (mean, scale) = (&bundle.scaler.mean, &bundle.scaler.scale);
                    let w = &det.model.weights;
                    let mut bias = det.model.bias;
                    let terms = det
                        .points
                        .iter()
                        .enumerate()
                        .map(|(k, &id)| {
                            let f = [2 * id.index(), 2 * id.index() + 1];
                            let wk = [w[2 * k] / scale[f[0]], w[2 * k + 1] / scale[f[1]]];
                            bias -= wk[0] * mean[f[0]] + wk[1] * mean[f[1]];
                            (slot(id).expect("in union"), wk)
                        })
                        .collect();
                    (terms, bias)
                })
                .collect()
        } else {
            Vec::new()
        };
        let probes = probes()
            .iter()
            .filter_map(|p| {
                let a = slot(FeaturePointId::ALL[p.points[0]])?;
                let b = slot(FeaturePointId::ALL[p.points[1]])?;
                Some((p.au, [a, b], p.directions))
            })
            .collect();
        PrunedPlan {
            points,
            fused,
            probes,
        }
    }
}

#[derive(Default, Clone)]
struct PlanCache(OnceLock<std::sync::Arc<PrunedPlan>>);

impl PartialEq for PlanCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Debug for PlanCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.get().is_some() {
            "PlanCache(ready)"
        } else {
            "PlanCache(empty)"
        })
    }
}

/// Sample indices of a train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded per-class split. `round(n * ratio)` training samples overall,
/// shared between classes by largest remainder (ties to the earlier
/// emotion); every class keeps at least one training and one test sample.
pub fn split_dataset(
    samples: &[LabeledSample],
    ratio: f64,
    seed: u64,
) -> Result<Split, PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PipelineError::DegenerateSplit(format!(
            "ratio {ratio} not in (0, 1)"
        )));
    }
    let by_class: Vec<Vec<usize>> = Emotion::ALL
        .iter()
        .map(|&e| {
            (0..samples.len())
                .filter(|&i| samples[i].emotion == e)
                .collect()
        })
        .collect();
    for (e, idx) in Emotion::ALL.iter().zip(&by_class) {
        if idx.is_empty() {
            return Err(PipelineError::MissingClass(*e));
        }
        if idx.len() < 2 {
            return Err(PipelineError::DegenerateSplit(format!(
                "{e} has a single sample; need one for training and one for testing"
            )));
        }
    }
    let total = (samples.len() as f64 * ratio).round() as usize;
    let quotas: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * ratio).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    for &k in order.iter().cycle().take(12) {
        if assigned >= total {
            break;
        }
        if counts[k] < by_class[k].len() - 1 {
            counts[k] += 1;
            assigned += 1;
        }
    }
    for (k, c) in counts.iter_mut().enumerate() {
        *c = (*c).clamp(1, by_class[k].len() - 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, &k) in by_class.iter().zip(&counts) {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..k]);
        test.extend_from_slice(&shuffled[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Normalized displacements of the requested points.
struct LandmarkReader<'a> {
    expressive: &'a FaceModel,
    neutral: &'a FaceModel,
    te: NormalizingTransform,
    tn: NormalizingTransform,
}

impl<'a> LandmarkReader<'a> {
    fn new(sample: &'a LabeledSample) -> Result<Self, GeometryError> {
        Ok(LandmarkReader {
            expressive: &sample.expressive,
            neutral: &sample.neutral,
            te: NormalizingTransform::of(&sample.expressive)?,
            tn: NormalizingTransform::of(&sample.neutral)?,
        })
    }

    fn delta(&self, id: FeaturePointId) -> Point {
        let e = self.te.apply(self.expressive.point(id));
        let n = self.tn.apply(self.neutral.point(id));
        Point::new(e.x - n.x, e.y - n.y)
    }
}

/// 48-dim normalized displacement of all points, canonical order.
pub fn landmark_displacement(sample: &LabeledSample) -> Result<Vec<f64>, PipelineError> {
    let r = LandmarkReader::new(sample)?;
    Ok(FeaturePointId::ALL
        .iter()
        .flat_map(|&id| {
            let d = r.delta(id);
            [d.x, d.y]
        })
        .collect())
}

/// The image patch features are read from, with landmarks in its pixel frame.
fn patch_source(
    config: &PipelineConfig,
    pca: Option<&PcaModel>,
    rendering: &Rendering,
) -> Result<(Image, FaceModel), PipelineError> {
    let (w, h) = (config.width, config.height);
    let img = resize(&rendering.image, w, h)?;
    let landmarks = rescale_landmarks(
        &rendering.pixel_landmarks,
        (rendering.image.width, rendering.image.height),
        (w, h),
    );
    let base = match pca {
        Some(model) if config.canny_on_pca => {
            let v = image_to_vector(&img, w, h)?;
            let z = pca_project(model, &v)?;
            vector_to_image(&pca_reconstruct(model, &z)?, w, h)?
        }
        _ => img,
    };
    let source = match config.patch_values {
        PatchValues::Edges => canny(&base, config.canny)?.values(),
        PatchValues::Luminance => Image {
            pixels: base.pixels.iter().map(|v| v / 255.0).collect(),
            ..base
        },
    };
    Ok((source, landmarks))
}

fn image_features(
    config: &PipelineConfig,
    pca: Option<&PcaModel>,
    sample: &LabeledSample,
    monitored: &BTreeSet<FeaturePointId>,
) -> Result<Vec<f64>, PipelineError> {
    let rendering = sample
        .rendering
        .as_ref()
        .ok_or(PipelineError::MissingImage)?;
    let (source, landmarks) = patch_source(config, pca, rendering)?;
    Ok(extract_patches(
        &source,
        &landmarks,
        monitored,
        config.patch_radius,
    )?)
}

/// Raw (unstandardized) features of the monitored points, canonical order.
pub fn extract_features(
    config: &PipelineConfig,
    pca: Option<&PcaModel>,
    sample: &LabeledSample,
    monitored: &BTreeSet<FeaturePointId>,
) -> Result<Vec<f64>, PipelineError> {
    if monitored.is_empty() {
        return Err(PipelineError::ConfigMismatch("no monitored points".into()));
    }
    match config.mode {
        FeatureMode::Landmark => {
            let r = LandmarkReader::new(sample)?;
            Ok(monitored
                .iter()
                .flat_map(|&id| {
                    let d = r.delta(id);
                    [d.x, d.y]
                })
                .collect())
        }
        FeatureMode::Image => image_features(config, pca, sample, monitored),
    }
}

fn all_points() -> BTreeSet<FeaturePointId> {
    FeaturePointId::ALL.into_iter().collect()
}

/// Points each pruned detector reads: the no-prior monitoring plans.
pub fn pruned_points() -> Vec<(Emotion, Vec<FeaturePointId>)> {
    plan_monitoring(None)
        .into_iter()
        .map(|p| (p.hypothesis, p.points.into_iter().collect()))
        .collect()
}

fn select_blocks(full: &[f64], points: &[FeaturePointId], block: usize) -> Vec<f64> {
    points
        .iter()
        .flat_map(|id| {
            full[id.index() * block..(id.index() + 1) * block]
                .iter()
                .copied()
        })
        .collect()
}

fn train_detector(
    rows: &[Vec<f64>],
    labels: &[Emotion],
    emotion: Emotion,
    c: f64,
) -> Result<SvmModel, PipelineError> {
    let samples: Vec<Sample> = rows
        .iter()
        .zip(labels)
        .map(|(r, &l)| {
            let class = if l == emotion {
                Class::Negative
            } else {
                Class::Positive
            };
            Sample::new(r.clone(), class)
        })
        .collect();
    let label_map = LabelMap {
        positive: emotion.absence_label().to_string(),
        negative: emotion.name().to_string(),
    };
    Ok(svm_train_with(
        &samples,
        SvmParams {
            c,
            ..SvmParams::default()
        },
        label_map,
    )?)
}

/// Splits `samples`, fits PCA (image mode) and both detector sets on the
/// training part.
pub fn train(
    samples: &[LabeledSample],
    config: &PipelineConfig,
) -> Result<(TrainedBundle, Split), PipelineError> {
    config.validate()?;
    let split = split_dataset(samples, config.split_ratio, config.seed)?;
    let bundle = train_on(samples, &split.train, config)?;
    Ok((bundle, split))
}

pub fn train_on(
    samples: &[LabeledSample],
    train_idx: &[usize],
    config: &PipelineConfig,
) -> Result<TrainedBundle, PipelineError> {
    config.validate()?;
    let train: Vec<&LabeledSample> = train_idx.iter().map(|&i| &samples[i]).collect();
    for e in Emotion::ALL {
        if !train.iter().any(|s| s.emotion == e) {
            return Err(PipelineError::MissingClass(e));
        }
    }
    let pca = match config.mode {
        FeatureMode::Image if config.canny_on_pca => {
            let vectors = train
                .iter()
                .map(|s| {
                    let r = s.rendering.as_ref().ok_or(PipelineError::MissingImage)?;
                    let img = resize(&r.image, config.width, config.height)?;
                    Ok(image_to_vector(&img, config.width, config.height)?)
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let k = config.components.min(vectors.len() - 1).max(1);
            Some(pca_fit(&vectors, k)?)
        }
        _ => None,
    };

    let everything = all_points();
    let rows = train
        .iter()
        .map(|s| extract_features(config, pca.as_ref(), s, &everything))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<Emotion> = train.iter().map(|s| s.emotion).collect();
    let scaler = Scaler::fit(&rows);
    let standardized: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut x = r.clone();
            scaler.apply(&mut x);
            x
        })
        .collect();

    let detectors = Emotion::ALL
        .into_iter()
        .map(|e| {
            Ok(Detector {
                emotion: e,
                model: train_detector(&standardized, &labels, e, config.svm_c)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let block = config.block_len();
    let pruned = pruned_points()
        .into_iter()
        .map(|(e, points)| {
            let sub: Vec<Vec<f64>> = standardized
                .iter()
                .map(|r| select_blocks(r, &points, block))
                .collect();
            Ok(PrunedDetector {
                emotion: e,
                model: train_detector(&sub, &labels, e, config.svm_c)?,
                points,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut centroids = vec![vec![0.0; 48]; 6];
    let mut counts = [0usize; 6];
    for s in &train {
        let d = landmark_displacement(s)?;
        let c = &mut centroids[s.emotion.index()];
        for (a, b) in c.iter_mut().zip(&d) {
            *a += b;
        }
        counts[s.emotion.index()] += 1;
    }
    for (c, n) in centroids.iter_mut().zip(counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }

    Ok(TrainedBundle {
        config: config.clone(),
        pca,
        scaler,
        detectors,
        pruned,
        centroids,
        plan: PlanCache::default(),
    })
}

impl TrainedBundle {
    fn plan(&self) -> Result<&PrunedPlan, PipelineError> {
        if let Some(p) = self.plan.0.get() {
            return Ok(p);
        }
        self.check()?;
        Ok(self
            .plan
            .0
            .get_or_init(|| std::sync::Arc::new(PrunedPlan::build(self))))
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let d = 24 * self.config.block_len();
        let ok = self.detectors.len() == 6
            && self.pruned.len() == 6
            && self.centroids.len() == 6
            && self.scaler.mean.len() == d
            && self.scaler.scale.len() == d
            && self
                .detectors
                .iter()
                .zip(Emotion::ALL)
                .all(|(det, e)| det.emotion == e && det.model.dims() == d)
            && self.pruned.iter().zip(Emotion::ALL).all(|(p, e)| {
                p.emotion == e && p.model.dims() == p.points.len() * self.config.block_len()
            })
            && self.centroids.iter().all(|c| c.len() == 48);
        if ok {
            Ok(())
        } else {
            Err(PipelineError::ConfigMismatch(
                "bundle is incomplete or inconsistent".into(),
            ))
        }
    }
}

/// Outcome of [`classify_full`].
#[derive(Debug, Clone, PartialEq)]
pub struct FullDecision {
    pub emotion: Emotion,
    /// "Not e" scores in canonical emotion order.
    pub scores: [f64; 6],
    /// No detector claims the sample (every score is non-negative) or the
    /// sample does not move at all; `emotion` is then only the tie-break.
    pub low_confidence: bool,
}

fn argmin(scores: &[f64; 6]) -> Emotion {
    let mut best = 0;
    for k in 1..6 {
        if scores[k] < scores[best] {
            best = k;
        }
    }
    Emotion::ALL[best]
}

fn full_from_raw(bundle: &TrainedBundle, mut x: Vec<f64>) -> FullDecision {
    let still = x.iter().all(|&v| v == 0.0);
    bundle.scaler.apply(&mut x);
    let mut scores = [0.0; 6];
    for (s, d) in scores.iter_mut().zip(&bundle.detectors) {
        *s = d.model.score(&x);
    }
    let emotion = argmin(&scores);
    FullDecision {
        emotion,
        scores,
        low_confidence: still || scores.iter().all(|&s| s >= 0.0),
    }
}

/// Scores all six detectors on all 24 points. Ties go to the earlier emotion.
pub fn classify_full(
    bundle: &TrainedBundle,
    sample: &LabeledSample,
) -> Result<FullDecision, PipelineError> {
    let x = match bundle.config.mode {
        FeatureMode::Landmark => landmark_displacement(sample)?,
        FeatureMode::Image => {
            image_features(&bundle.config, bundle.pca.as_ref(), sample, &all_points())?
        }
    };
    Ok(full_from_raw(bundle, x))
}

/// Outcome of [`classify_pruned`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedDecision {
    pub emotion: Emotion,
    /// Distinct points read, plus 24 when the full path was needed.
    pub points_examined: usize,
    pub fallback: bool,
    /// Emotions whose pruned detector accepted the sample.
    /// Indexed by [`Emotion::index`].
    pub accepted: [bool; 6],
    /// Thresholded AUs over the points read.
    pub observation: AuObservation,
    pub rule_decision: EmotionDecision,
    /// Surprise transition tree evaluated on the observation, when the prior
    /// is Surprise.
    pub transition: Option<TreeLabel>,
}

/// A bound AU with the unit direction each of its two points must move in.
struct AuProbe {
    au: ActionUnit,
    points: [usize; 2],
    directions: [Point; 2],
}

fn probes() -> &'static [AuProbe] {
    static CELL: OnceLock<Vec<AuProbe>> = OnceLock::new();
    CELL.get_or_init(|| {
        ActionUnit::all()
            .filter_map(|au| match au_bindings(au) {
                AuMapping::Bound(b) => Some(AuProbe {
                    au,
                    points: b.points.map(FeaturePointId::index),
                    directions: b.points.map(|id| {
                        Point::new(
                            movement_along(b.point_action, id, Point::new(1.0, 0.0)),
                            movement_along(b.point_action, id, Point::new(0.0, 1.0)),
                        )
                    }),
                }),
                AuMapping::NonObservable => None,
            })
            .collect()
    })
}

fn surprise_tree() -> &'static DecisionTree {
    static CELL: OnceLock<DecisionTree> = OnceLock::new();
    CELL.get_or_init(|| build_transition_tree(Emotion::Surprise).expect("tabulated"))
}

fn observe(plan: &PrunedPlan, deltas: &[Point], tau: f64) -> AuObservation {
    let mut present = AuSet::EMPTY;
    let mut absent = AuSet::EMPTY;
    for &(au, [a, b], [da, db]) in &plan.probes {
        let (a, b) = (deltas[a], deltas[b]);
        if a.x * da.x + a.y * da.y > tau && b.x * db.x + b.y * db.y > tau {
            present.insert(au);
        } else {
            absent.insert(au);
        }
    }
    AuObservation::new(present, absent).expect("disjoint by construction")
}

fn hypothesis_order(prior: Option<Emotion>) -> [Emotion; 6] {
    let mut order = Emotion::ALL;
    if let Some(p) = prior {
        order.sort_by_key(|&e| (e != p, e));
    }
    order
}

/// Scores the pruned detectors, each on its own plan points only. Exactly
/// one acceptance (negative "not e" score) decides; otherwise the full path
/// does. A prior only sets the evaluation order and enables the transition
/// tree report.
pub fn classify_pruned(
    bundle: &TrainedBundle,
    sample: &LabeledSample,
    prior: Option<Emotion>,
) -> Result<PrunedDecision, PipelineError> {
    let config = &bundle.config;
    let plan = bundle.plan()?;
    let reader = LandmarkReader::new(sample)?;
    let mut buffer = [Point::new(0.0, 0.0); 24];
    for (d, &id) in buffer.iter_mut().zip(&plan.points) {
        *d = reader.delta(id);
    }
    let deltas = &buffer[..plan.points.len()];
    let mut accepted = [false; 6];
    match config.mode {
        FeatureMode::Landmark => {
            for e in hypothesis_order(prior) {
                let (terms, bias) = &plan.fused[e.index()];
                let score = terms.iter().fold(*bias, |acc, &(k, [wx, wy])| {
                    acc + wx * deltas[k].x + wy * deltas[k].y
                });
                accepted[e.index()] = score < 0.0;
            }
        }
        FeatureMode::Image => {
            let r = sample
                .rendering
                .as_ref()
                .ok_or(PipelineError::MissingImage)?;
            let (src, lm) = patch_source(config, bundle.pca.as_ref(), r)?;
            for e in hypothesis_order(prior) {
                let det = &bundle.pruned[e.index()];
                let monitored: BTreeSet<FeaturePointId> = det.points.iter().copied().collect();
                let mut x = extract_patches(&src, &lm, &monitored, config.patch_radius)?;
                bundle
                    .scaler
                    .apply_blocks(&mut x, &det.points, config.block_len());
                accepted[e.index()] = det.model.score(&x) < 0.0;
            }
        }
    }
    let read = plan.points.len();
    let observation = observe(plan, deltas, config.tau);
    let rule_decision = classify_observation(&observation);
    let transition =
        (prior == Some(Emotion::Surprise)).then(|| evaluate_tree(surprise_tree(), &observation));
    let mut hits = Emotion::ALL.into_iter().filter(|e| accepted[e.index()]);
    let (emotion, fallback) = if let (Some(e), None) = (hits.next(), hits.next()) {
        (e, false)
    } else {
        (classify_full(bundle, sample)?.emotion, true)
    };
    Ok(PrunedDecision {
        emotion,
        points_examined: read + if fallback { 24 } else { 0 },
        fallback,
        accepted,
        observation,
        rule_decision,
        transition,
    })
}
