//! Seeded synthetic faces.
//!
//! Expressive faces are the neutral template displaced by the point actions
//! of an emotion's observable AUs. Displacements of AUs sharing a point add
//! up. Gaussian noise is applied to active points only. All randomness comes
//! from ChaCha8 seeded with `seed_from_u64`, so a configuration always yields
//! the same bytes.
//!
//! Neutral template, normalized coordinates, y up (right side mirrors left):
//!
//! | point | x | y | point | x | y |
//! |-------|---|---|-------|---|---|
//! | bl1 | -0.35 | 0.45 | el1 | -0.5 | 0.0 |
//! | bl2 | -0.75 | 0.55 | el2 | -0.8 | 0.12 |
//! | bl3 | -1.15 | 0.45 | el3 | -0.8 | -0.1 |
//! | ml1 | -0.55 | -1.3 | el4 | -1.1 | 0.0 |
//! | ml2 | -0.3 | -1.18 | mm1 | 0.0 | -1.15 |
//! | ml3 | -0.3 | -1.42 | mm2 | 0.0 | -1.25 |
//! | | | | mm3 | 0.0 | -1.35 |
//! | | | | mm4 | 0.0 | -1.47 |

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::facegeo::{
    format_landmarks, parse_landmarks, FaceModel, FeaturePointId, GeometryError, LandmarkError,
    Point,
};
use crate::faucodes::{au_bindings, emotion_aus, AuMapping, AuSet, Emotion, PointAction};
use crate::imaging::{load_pgm, write_pgm, Image, ImageError, WORKING_HEIGHT, WORKING_WIDTH};
use crate::ruleengine::lateral_sign;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Landmarks {
        path: PathBuf,
        source: LandmarkError,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub per_class: usize,
    pub noise_sigma: f64,
    pub intensity: f64,
    pub seed: u64,
    pub render: bool,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            per_class: 50,
            noise_sigma: 0.01,
            intensity: 0.1,
            seed: 42,
            render: false,
            width: WORKING_WIDTH,
            height: WORKING_HEIGHT,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.per_class == 0 {
            return Err(SynthError::InvalidConfig(
                "per_class must be at least 1".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(SynthError::InvalidConfig("noise sigma must be >= 0".into()));
        }
        if !(self.intensity > 0.0) || !self.intensity.is_finite() {
            return Err(SynthError::InvalidConfig("intensity must be > 0".into()));
        }
        if self.width < 8 || self.height < 8 {
            return Err(SynthError::InvalidConfig(
                "render size must be at least 8x8".into(),
            ));
        }
        Ok(())
    }
}

/// A rendered face and its landmarks in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub image: Image,
    pub pixel_landmarks: FaceModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub neutral: FaceModel,
    pub expressive: FaceModel,
    pub emotion: Emotion,
    pub rendering: Option<Rendering>,
}

const TEMPLATE_LEFT: [(FeaturePointId, f64, f64); 10] = {
    use FeaturePointId::*;
    [
        (Bl1, -0.35, 0.45),
        (Bl2, -0.75, 0.55),
        (Bl3, -1.15, 0.45),
        (El1, -0.5, 0.0),
        (El2, -0.8, 0.12),
        (El3, -0.8, -0.1),
        (El4, -1.1, 0.0),
        (Ml1, -0.55, -1.3),
        (Ml2, -0.3, -1.18),
        (Ml3, -0.3, -1.42),
    ]
};

const TEMPLATE_MID: [(FeaturePointId, f64); 4] = {
    use FeaturePointId::*;
    [(Mm1, -1.15), (Mm2, -1.25), (Mm3, -1.35), (Mm4, -1.47)]
};

fn mirror(id: FeaturePointId) -> FeaturePointId {
    use FeaturePointId::*;
    match id {
        Bl1 => Br1,
        Bl2 => Br2,
        Bl3 => Br3,
        El1 => Er1,
        El2 => Er2,
        El3 => Er3,
        El4 => Er4,
        Ml1 => Mr1,
        Ml2 => Mr2,
        Ml3 => Mr3,
        other => other,
    }
}

pub fn neutral_template() -> FaceModel {
    let left = TEMPLATE_LEFT
        .iter()
        .flat_map(|&(id, x, y)| [(id, Point::new(x, y)), (mirror(id), Point::new(-x, y))]);
    let mid = TEMPLATE_MID.iter().map(|&(id, y)| (id, Point::new(0.0, y)));
    FaceModel::from_pairs(left.chain(mid)).expect("template is complete")
}

/// Displaces the bound points of every observable AU in `aus` by
/// `intensity`: up/down along y, stretch away from and tight towards the
/// midline along x. Non-observable AUs move nothing.
pub fn apply_aus(face: &FaceModel, aus: AuSet, intensity: f64) -> Result<FaceModel, GeometryError> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(GeometryError::InvalidInput(format!(
            "intensity must be > 0, got {intensity}"
        )));
    }
    let mut offsets = [Point::default(); 24];
    for au in aus.iter() {
        let AuMapping::Bound(b) = au_bindings(au) else {
            continue;
        };
        for p in b.points {
            let o = &mut offsets[p.index()];
            match b.point_action {
                PointAction::Up => o.y += intensity,
                PointAction::Down => o.y -= intensity,
                PointAction::Stretch => o.x += lateral_sign(p) * intensity,
                PointAction::Tight => o.x -= lateral_sign(p) * intensity,
            }
        }
    }
    face.map_points(|id, p| {
        let o = offsets[id.index()];
        Point::new(p.x + o.x, p.y + o.y)
    })
}

/// The noiseless expressive face of an emotion.
pub fn expressive_face(emotion: Emotion, intensity: f64) -> Result<FaceModel, GeometryError> {
    apply_aus(&neutral_template(), emotion_aus(emotion), intensity)
}

fn add_noise(
    face: &FaceModel,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<FaceModel, GeometryError> {
    face.map_points(|id, p| {
        if id.is_active() {
            let dx = noise.sample(rng);
            let dy = noise.sample(rng);
            Point::new(p.x + dx, p.y + dy)
        } else {
            p
        }
    })
}

fn noise_dist(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated sigma")
}

/// `per_class` samples per emotion, emotions in canonical order.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<LabeledSample>, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = noise_dist(cfg.noise_sigma);
    let neutral = neutral_template();
    let mut out = Vec::with_capacity(6 * cfg.per_class);
    for emotion in Emotion::ALL {
        let clean = expressive_face(emotion, cfg.intensity)?;
        for _ in 0..cfg.per_class {
            let expressive = add_noise(&clean, &noise, &mut rng)?;
            let rendering = cfg
                .render
                .then(|| render_face(&expressive, cfg.width, cfg.height));
            out.push(LabeledSample {
                neutral: neutral.clone(),
                expressive,
                emotion,
                rendering,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub face: FaceModel,
    /// Ground-truth state: the emotion being held or moved towards.
    pub state: Emotion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub neutral: FaceModel,
    pub frames: Vec<Frame>,
    /// Index of the first frame of each transition.
    pub boundaries: Vec<usize>,
}

/// The first state is held for `frames_per_state` frames; every following
/// state is reached by linear interpolation over `frames_per_state` frames,
/// the last of which shows the target expression.
pub fn generate_sequence(
    path: &[Emotion],
    frames_per_state: usize,
    cfg: &SynthConfig,
) -> Result<Sequence, SynthError> {
    cfg.validate()?;
    if path.is_empty() {
        return Err(SynthError::InvalidConfig("sequence path is empty".into()));
    }
    if frames_per_state < 2 {
        return Err(SynthError::InvalidConfig(
            "need at least 2 frames per state".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = noise_dist(cfg.noise_sigma);
    let faces = path
        .iter()
        .map(|&e| expressive_face(e, cfg.intensity))
        .collect::<Result<Vec<_>, _>>()?;
    let f = frames_per_state;
    let mut frames = Vec::with_capacity(path.len() * f);
    let mut boundaries = Vec::new();
    for _ in 0..f {
        frames.push(Frame {
            face: add_noise(&faces[0], &noise, &mut rng)?,
            state: path[0],
        });
    }
    for k in 1..path.len() {
        boundaries.push(k * f);
        let (a, b) = (&faces[k - 1], &faces[k]);
        for j in 0..f {
            let t = (j + 1) as f64 / f as f64;
            let mixed = a.map_points(|id, p| {
                let q = b.point(id);
                Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
            })?;
            frames.push(Frame {
                face: add_noise(&mixed, &noise, &mut rng)?,
                state: path[k],
            });
        }
    }
    Ok(Sequence {
        neutral: neutral_template(),
        frames,
        boundaries,
    })
}

/// Pixel mapping of normalized coordinates: `s = 0.4 * min(w, h)`,
/// `px = w/2 + x*s`, `py = 0.3*h - y*s`. Pixel centres sit on integers.
pub fn to_pixel(p: Point, w: usize, h: usize) -> Point {
    let s = 0.4 * w.min(h) as f64;
    Point::new(w as f64 / 2.0 + p.x * s, 0.3 * h as f64 - p.y * s)
}

pub fn from_pixel(p: Point, w: usize, h: usize) -> Point {
    let s = 0.4 * w.min(h) as f64;
    Point::new((p.x - w as f64 / 2.0) / s, (0.3 * h as f64 - p.y) / s)
}

fn stroke_paths() -> Vec<Vec<FeaturePointId>> {
    use FeaturePointId::*;
    vec![
        vec![Bl1, Bl2, Bl3],
        vec![Br1, Br2, Br3],
        vec![El1, El2, El4, El3, El1],
        vec![Er1, Er2, Er4, Er3, Er1],
        vec![Ml1, Ml2, Mm1, Mr2, Mr1, Mr3, Mm4, Ml3, Ml1],
        vec![Ml1, Mm2, Mr1],
        vec![Ml1, Mm3, Mr1],
    ]
}

fn segment_distance(px: f64, py: f64, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (px - a.x - t * dx).hypot(py - a.y - t * dy)
}

/// Dark anti-aliased strokes through the brow, eye and mouth groups on a
/// white canvas. Returns the image and the landmarks in pixel coordinates.
pub fn render_face(face: &FaceModel, w: usize, h: usize) -> Rendering {
    const HALF_WIDTH: f64 = 1.0;
    const INK: f64 = 215.0;
    let pixel_landmarks = face
        .map_points(|_, p| to_pixel(p, w, h))
        .expect("affine map keeps eye corners distinct");
    let mut coverage = vec![0.0f64; w * h];
    for stroke in stroke_paths() {
        for pair in stroke.windows(2) {
            let a = pixel_landmarks.point(pair[0]);
            let b = pixel_landmarks.point(pair[1]);
            let reach = HALF_WIDTH + 1.0;
            let x0 = (a.x.min(b.x) - reach).floor().max(0.0) as usize;
            let y0 = (a.y.min(b.y) - reach).floor().max(0.0) as usize;
            let x1 = ((a.x.max(b.x) + reach).ceil() as usize).min(w - 1);
            let y1 = ((a.y.max(b.y) + reach).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = segment_distance(x as f64, y as f64, a, b);
                    let c = (HALF_WIDTH + 0.5 - d).clamp(0.0, 1.0);
                    let slot = &mut coverage[y * w + x];
                    *slot = slot.max(c);
                }
            }
        }
    }
    let pixels = coverage.iter().map(|c| (255.0 - INK * c).round()).collect();
    Rendering {
        image: Image {
            width: w,
            height: h,
            pixels,
        },
        pixel_landmarks,
    }
}

/// A dataset read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub neutral: FaceModel,
    pub samples: Vec<LabeledSample>,
    /// Generator intensity, when the manifest records it.
    pub intensity: Option<f64>,
}

fn emotion_dir(e: Emotion) -> String {
    e.name().to_lowercase()
}

/// Writes `<root>/<emotion>/<index>.landmarks` (plus `.pgm` and
/// `.pixlandmarks` for rendered samples), `neutral.landmarks` and
/// `manifest.tsv`.
pub fn write_dataset(
    root: &Path,
    samples: &[LabeledSample],
    cfg: &SynthConfig,
) -> Result<(), SynthError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let neutral = samples
        .first()
        .map_or_else(neutral_template, |s| s.neutral.clone());
    write_file(
        &root.join("neutral.landmarks"),
        format_landmarks(&neutral).as_bytes(),
    )?;
    let mut manifest = format!(
        "# per_class={} noise={:?} intensity={:?} seed={} render={}\nsample\temotion\tseed\n",
        cfg.per_class, cfg.noise_sigma, cfg.intensity, cfg.seed, cfg.render
    );
    let mut counters = [0usize; 6];
    for s in samples {
        let dir = emotion_dir(s.emotion);
        fs::create_dir_all(root.join(&dir)).map_err(io_err(root))?;
        let idx = counters[s.emotion.index()];
        counters[s.emotion.index()] += 1;
        let rel = format!("{dir}/{idx:04}.landmarks");
        write_file(&root.join(&rel), format_landmarks(&s.expressive).as_bytes())?;
        if let Some(r) = &s.rendering {
            write_file(
                &root.join(format!("{dir}/{idx:04}.pgm")),
                &write_pgm(&r.image),
            )?;
            write_file(
                &root.join(format!("{dir}/{idx:04}.pixlandmarks")),
                format_landmarks(&r.pixel_landmarks).as_bytes(),
            )?;
        }
        let _ = writeln!(manifest, "{rel}\t{}\t{}", s.emotion, cfg.seed);
    }
    write_file(&root.join("manifest.tsv"), manifest.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String, SynthError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_landmarks(path: &Path) -> Result<FaceModel, SynthError> {
    parse_landmarks(&read_text(path)?).map_err(|source| SynthError::Landmarks {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads the optional rendering stored next to a `.landmarks` file.
pub fn read_rendering(landmarks_path: &Path) -> Result<Option<Rendering>, SynthError> {
    let pgm = landmarks_path.with_extension("pgm");
    if !pgm.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&pgm).map_err(io_err(&pgm))?;
    let image = load_pgm(&bytes).map_err(|e| SynthError::Image {
        path: pgm.clone(),
        source: e.into(),
    })?;
    let pixel_landmarks = read_landmarks(&landmarks_path.with_extension("pixlandmarks"))?;
    Ok(Some(Rendering {
        image,
        pixel_landmarks,
    }))
}

fn header_value(line: &str, key: &str) -> Option<f64> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

pub fn load_dataset(root: &Path) -> Result<Dataset, SynthError> {
    let manifest_path = root.join("manifest.tsv");
    let manifest = read_text(&manifest_path)?;
    let neutral = read_landmarks(&root.join("neutral.landmarks"))?;
    let mut intensity = None;
    let mut samples = Vec::new();
    let mut seen_header = false;
    for (i, line) in manifest.lines().enumerate() {
        let bad = |message: String| SynthError::Format {
            path: manifest_path.clone(),
            line: i + 1,
            message,
        };
        if let Some(comment) = line.strip_prefix('#') {
            intensity = intensity.or_else(|| header_value(comment, "intensity"));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if !line.starts_with("sample\temotion") {
                return Err(bad("missing `sample\\temotion\\tseed` header".into()));
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [rel, emotion, _seed] = cols[..] else {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        };
        let emotion: Emotion = emotion.parse().map_err(|e| bad(format!("{e}")))?;
        let path = root.join(rel);
        samples.push(LabeledSample {
            neutral: neutral.clone(),
            expressive: read_landmarks(&path)?,
            emotion,
            rendering: read_rendering(&path)?,
        });
    }
    if !seen_header {
        return Err(SynthError::Format {
            path: manifest_path,
            line: 1,
            message: "empty manifest".into(),
        });
    }
    Ok(Dataset {
        neutral,
        samples,
        intensity,
    })
}

/// Writes `neutral.landmarks`, `frame_XXX.landmarks` and `sequence.tsv`
/// (frame, ground-truth state, file; boundaries in a comment line).
pub fn write_sequence(dir: &Path, seq: &Sequence, intensity: f64) -> Result<(), SynthError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(
        &dir.join("neutral.landmarks"),
        format_landmarks(&seq.neutral).as_bytes(),
    )?;
    let bounds: Vec<String> = seq.boundaries.iter().map(|b| b.to_string()).collect();
    let mut index = format!(
        "# boundaries={} intensity={:?}\nframe\tstate\tfile\n",
        bounds.join(","),
        intensity
    );
    for (i, frame) in seq.frames.iter().enumerate() {
        let name = format!("frame_{i:03}.landmarks");
        write_file(&dir.join(&name), format_landmarks(&frame.face).as_bytes())?;
        let _ = writeln!(index, "{i}\t{}\t{name}", frame.state);
    }
    write_file(&dir.join("sequence.tsv"), index.as_bytes())
}

pub fn load_sequence(dir: &Path) -> Result<Sequence, SynthError> {
    let index_path = dir.join("sequence.tsv");
    let text = read_text(&index_path)?;
    let mut frames = Vec::new();
    let mut boundaries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |message: String| SynthError::Format {
            path: index_path.clone(),
            line: i + 1,
            message,
        };
        if let Some(comment) = line.strip_prefix('#') {
            for kv in comment.split_whitespace() {
                if let Some(list) = kv.strip_prefix("boundaries=") {
                    boundaries = list
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| bad(format!("bad boundary `{s}`"))))
                        .collect::<Result<_, _>>()?;
                }
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with("frame\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [_, state, file] = cols[..] else {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        };
        let state: Emotion = state.parse().map_err(|e| bad(format!("{e}")))?;
        frames.push(Frame {
            face: read_landmarks(&dir.join(file))?,
            state,
        });
    }
    Ok(Sequence {
        neutral: read_landmarks(&dir.join("neutral.landmarks"))?,
        frames,
        boundaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facegeo::normalize_face;
    use FeaturePointId::*;

    fn ids(v: &[u32]) -> AuSet {
        AuSet::from_ids(v).unwrap()
    }

    #[test]
    fn template_is_normalized_and_symmetric() {
        let t = neutral_template();
        let n = normalize_face(&t).unwrap();
        for (a, b) in t.points().iter().zip(n.points()) {
            assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
        for (l, r) in [(Bl1, Br1), (Bl2, Br2), (Bl3, Br3)] {
            assert_eq!(t.point(l).x, -t.point(r).x);
            assert_eq!(t.point(l).y, t.point(r).y);
        }
        let pts = t.points();
        for i in 0..24 {
            for j in i + 1..24 {
                assert_ne!(pts[i], pts[j]);
            }
        }
    }

    #[test]
    fn au16_moves_lower_lip_down() {
        let t = neutral_template();
        let f = apply_aus(&t, ids(&[16]), 0.05).unwrap();
        for (id, p) in f.iter() {
            let q = t.point(id);
            if id == Mm3 || id == Mm4 {
                assert!((p.y - (q.y - 0.05)).abs() < 1e-15 && p.x == q.x);
            } else {
                assert_eq!(p, q);
            }
        }
        assert_eq!(apply_aus(&t, AuSet::EMPTY, 0.05).unwrap(), t);
        assert!(apply_aus(&t, ids(&[16]), 0.0).is_err());
    }

    #[test]
    fn shared_points_add_up() {
        let t = neutral_template();
        let six = apply_aus(&t, ids(&[6]), 0.1).unwrap();
        let both = apply_aus(&t, ids(&[6, 12]), 0.1).unwrap();
        for id in [Mr1, Ml1] {
            let one = six.point(id).x - t.point(id).x;
            let two = both.point(id).x - t.point(id).x;
            assert!((two - 2.0 * one).abs() < 1e-12);
        }
        assert!(six.point(Mr1).x > t.point(Mr1).x && six.point(Ml1).x < t.point(Ml1).x);
    }

    #[test]
    fn dataset_determinism_and_size() {
        let cfg = SynthConfig {
            per_class: 10,
            ..SynthConfig::default()
        };
        let a = generate_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a, generate_dataset(&cfg).unwrap());
        let other = generate_dataset(&SynthConfig {
            seed: 43,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(a, other);
        for s in &a {
            for id in [El1, Er1, El4, Er4, Ml2, Mr2] {
                assert_eq!(
                    s.expressive.point(id),
                    expressive_face(s.emotion, 0.1).unwrap().point(id)
                );
            }
        }
    }

    #[test]
    fn noiseless_classes_are_constant() {
        let cfg = SynthConfig {
            per_class: 3,
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&cfg).unwrap();
        for chunk in data.chunks(3) {
            assert!(chunk.iter().all(|s| s.expressive == chunk[0].expressive));
        }
    }

    #[test]
    fn sequence_layout() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let seq = generate_sequence(&[Emotion::Surprise, Emotion::Happiness], 5, &cfg).unwrap();
        assert_eq!(seq.frames.len(), 10);
        assert_eq!(seq.boundaries, vec![5]);
        let single = generate_sequence(&[Emotion::Surprise], 4, &cfg).unwrap();
        assert!(single
            .frames
            .iter()
            .all(|f| f.face == single.frames[0].face));

        let fear = generate_sequence(&[Emotion::Surprise, Emotion::Fear], 5, &cfg).unwrap();
        for id in [Br1, Bl1] {
            let ys: Vec<f64> = fear.frames.iter().map(|f| f.face.point(id).y).collect();
            assert!(ys.windows(2).all(|w| w[1] <= w[0]));
            assert!(ys[9] < ys[4]);
        }
        assert!(generate_sequence(&[], 5, &cfg).is_err());
        assert!(generate_sequence(&[Emotion::Fear], 1, &cfg).is_err());
    }

    #[test]
    fn render_is_deterministic_and_invertible() {
        let face = expressive_face(Emotion::Happiness, 0.1).unwrap();
        let a = render_face(&face, 120, 100);
        assert_eq!(a, render_face(&face, 120, 100));
        assert!(a.image.pixels.iter().any(|&v| v < 128.0));
        for (id, p) in a.pixel_landmarks.iter() {
            let back = from_pixel(p, 120, 100);
            let q = face.point(id);
            assert!((back.x - q.x).abs() < 1e-12 && (back.y - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            per_class: 2,
            render: true,
            width: 64,
            height: 48,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&cfg).unwrap();
        write_dataset(dir.path(), &data, &cfg).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.samples, data);
        assert_eq!(back.intensity, Some(0.1));

        let seq = generate_sequence(&[Emotion::Surprise, Emotion::Sadness], 3, &cfg).unwrap();
        let sdir = dir.path().join("seq");
        write_sequence(&sdir, &seq, cfg.intensity).unwrap();
        assert_eq!(load_sequence(&sdir).unwrap(), seq);
    }
}
