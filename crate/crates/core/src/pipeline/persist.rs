//! Text model file.
//!
//! ```text
//! FAUPMODEL 1
//! [CONFIG]        key value lines
//! [SCALER]        mean, scale
//! [PCA]           dims, k, truncated, eigenvalues, mean, one `component` line each (image mode)
//! [DETECTOR NSur] labels, c, bias, weights, sv_count, margin, kkt_residual, objective (x6)
//! [PRUNED NSur]   points, then the detector fields (x6)
//! [CENTROID Surprise] values (x6)
//! [CHECKSUM]      64-bit FNV-1a of every preceding byte, lowercase hex
//! ```
//!
//! Reals are written with Rust's shortest round-trip formatting, so a load
//! followed by a save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::facegeo::FeaturePointId;
use crate::faucodes::Emotion;
use crate::imaging::CannyParams;
use crate::mlcore::{LabelMap, PcaModel, SvmModel};

use super::{
    Detector, FeatureMode, PatchValues, PipelineConfig, PlanCache, PrunedDetector, Scaler,
    TrainedBundle,
};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "FAUPMODEL";
const CHECKSUM_HEADER: &str = "[CHECKSUM]\n";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("unsupported model file version {0} (this build reads version 1)")]
    UnsupportedVersion(String),
    #[error("not a model file: missing `FAUPMODEL` header")]
    NotAModel,
    #[error("checksum mismatch: file says {stored}, contents hash to {actual}")]
    Checksum { stored: String, actual: String },
    #[error("model file has no checksum section (truncated?)")]
    MissingChecksum,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn floats(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 20);
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:?}");
    }
    s
}

fn write_model(out: &mut String, m: &SvmModel) {
    let _ = writeln!(
        out,
        "labels {} {}",
        m.label_map.positive, m.label_map.negative
    );
    let _ = writeln!(out, "c {:?}", m.c);
    let _ = writeln!(out, "bias {:?}", m.bias);
    let _ = writeln!(out, "weights {}", floats(&m.weights));
    let _ = writeln!(out, "sv_count {}", m.sv_count);
    let _ = writeln!(out, "margin {:?}", m.margin);
    let _ = writeln!(out, "kkt_residual {:?}", m.kkt_residual);
    let _ = writeln!(out, "objective {:?}", m.objective);
}

pub fn serialize_bundle(b: &TrainedBundle) -> String {
    let c = &b.config;
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n[CONFIG]\n");
    let _ = writeln!(out, "mode {}", c.mode.name());
    let _ = writeln!(out, "width {}", c.width);
    let _ = writeln!(out, "height {}", c.height);
    let _ = writeln!(out, "components {}", c.components);
    let _ = writeln!(out, "patch_radius {}", c.patch_radius);
    let _ = writeln!(out, "canny_sigma {:?}", c.canny.sigma);
    let _ = writeln!(out, "canny_low {:?}", c.canny.low);
    let _ = writeln!(out, "canny_high {:?}", c.canny.high);
    let _ = writeln!(out, "canny_on_pca {}", c.canny_on_pca);
    let _ = writeln!(out, "patch_values {}", c.patch_values.name());
    let _ = writeln!(out, "svm_c {:?}", c.svm_c);
    let _ = writeln!(out, "seed {}", c.seed);
    let _ = writeln!(out, "split_ratio {:?}", c.split_ratio);
    let _ = writeln!(out, "tau {:?}", c.tau);
    let _ = writeln!(
        out,
        "[SCALER]\nmean {}\nscale {}",
        floats(&b.scaler.mean),
        floats(&b.scaler.scale)
    );
    if let Some(p) = &b.pca {
        let _ = writeln!(
            out,
            "[PCA]\ndims {}\nk {}\ntruncated {}",
            p.dims(),
            p.k(),
            p.truncated
        );
        let _ = writeln!(out, "eigenvalues {}", floats(&p.eigenvalues));
        let _ = writeln!(out, "mean {}", floats(&p.mean));
        for comp in &p.components {
            let _ = writeln!(out, "component {}", floats(comp));
        }
    }
    for d in &b.detectors {
        let _ = writeln!(out, "[DETECTOR {}]", d.emotion.absence_label());
        write_model(&mut out, &d.model);
    }
    for p in &b.pruned {
        let _ = writeln!(out, "[PRUNED {}]", p.emotion.absence_label());
        let names: Vec<&str> = p.points.iter().map(|id| id.name()).collect();
        let _ = writeln!(out, "points {}", names.join(" "));
        write_model(&mut out, &p.model);
    }
    for (e, c) in Emotion::ALL.iter().zip(&b.centroids) {
        let _ = writeln!(out, "[CENTROID {}]\nvalues {}", e.name(), floats(c));
    }
    let sum = fnv1a64(out.as_bytes());
    out.push_str(CHECKSUM_HEADER);
    let _ = writeln!(out, "{sum:016x}");
    out
}

pub fn save_bundle(b: &TrainedBundle, path: &Path) -> Result<(), ModelFileError> {
    fs::write(path, serialize_bundle(b))?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<TrainedBundle, ModelFileError> {
    let bytes = fs::read(path)?;
    parse_bundle(&bytes)
}

struct Section<'a> {
    name: &'a str,
    line: usize,
    entries: Vec<(usize, &'a str, &'a str)>,
}

impl<'a> Section<'a> {
    fn malformed(&self, message: impl Into<String>) -> ModelFileError {
        ModelFileError::Malformed {
            line: self.line,
            message: format!("[{}]: {}", self.name, message.into()),
        }
    }

    fn raw(&self, key: &str) -> Result<(usize, &'a str), ModelFileError> {
        self.entries
            .iter()
            .find(|(_, k, _)| *k == key)
            .map(|&(l, _, v)| (l, v))
            .ok_or_else(|| self.malformed(format!("missing `{key}`")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, ModelFileError> {
        let (line, v) = self.raw(key)?;
        v.parse().map_err(|_| ModelFileError::Malformed {
            line,
            message: format!("bad value for `{key}`: `{v}`"),
        })
    }

    fn floats_of(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ModelFileError> {
        v.split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| ModelFileError::Malformed {
                    line,
                    message: format!("bad number `{t}` in `{key}`"),
                })
            })
            .collect()
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>, ModelFileError> {
        let (line, v) = self.raw(key)?;
        Self::floats_of(line, key, v)
    }

    fn all_floats(&self, key: &str) -> Result<Vec<Vec<f64>>, ModelFileError> {
        self.entries
            .iter()
            .filter(|(_, k, _)| *k == key)
            .map(|&(l, _, v)| Self::floats_of(l, key, v))
            .collect()
    }
}

fn read_model(s: &Section<'_>) -> Result<SvmModel, ModelFileError> {
    let (_, labels) = s.raw("labels")?;
    let mut parts = labels.split_whitespace();
    let (Some(positive), Some(negative), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(s.malformed("`labels` needs two names"));
    };
    Ok(SvmModel {
        weights: s.floats("weights")?,
        bias: s.get("bias")?,
        c: s.get("c")?,
        sv_count: s.get("sv_count")?,
        margin: s.get("margin")?,
        label_map: LabelMap {
            positive: positive.to_string(),
            negative: negative.to_string(),
        },
        kkt_residual: s.get("kkt_residual")?,
        objective: s.get("objective")?,
    })
}

/// Checks the header and checksum before reading anything else, so a
/// damaged file never yields a partial bundle.
pub fn parse_bundle(bytes: &[u8]) -> Result<TrainedBundle, ModelFileError> {
    let first_line = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let first = String::from_utf8_lossy(first_line);
    let mut head = first.split_whitespace();
    if head.next() != Some(MAGIC) {
        return Err(ModelFileError::NotAModel);
    }
    let version = head.next().unwrap_or("").to_string();
    if version != FORMAT_VERSION.to_string() {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let needle = CHECKSUM_HEADER.as_bytes();
    let at = bytes
        .windows(needle.len())
        .rposition(|w| w == needle)
        .filter(|&i| i == 0 || bytes[i - 1] == b'\n')
        .ok_or(ModelFileError::MissingChecksum)?;
    let body = &bytes[..at];
    let stored = String::from_utf8_lossy(&bytes[at + needle.len()..])
        .trim()
        .to_string();
    let actual = format!("{:016x}", fnv1a64(body));
    if stored != actual {
        return Err(ModelFileError::Checksum { stored, actual });
    }
    let text = std::str::from_utf8(body).map_err(|e| ModelFileError::Malformed {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;

    let mut sections: Vec<Section<'_>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let n = i + 1;
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(Section {
                name,
                line: n,
                entries: Vec::new(),
            });
            continue;
        }
        let Some(section) = sections.last_mut() else {
            return Err(ModelFileError::Malformed {
                line: n,
                message: "entry outside any section".into(),
            });
        };
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        section.entries.push((n, key, value));
    }
    let find = |name: &str| -> Result<&Section<'_>, ModelFileError> {
        sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ModelFileError::Malformed {
                line: 0,
                message: format!("missing section [{name}]"),
            })
    };

    let cs = find("CONFIG")?;
    let mode_name: String = cs.get("mode")?;
    let values_name: String = cs.get("patch_values")?;
    let config = PipelineConfig {
        mode: FeatureMode::parse(&mode_name)
            .ok_or_else(|| cs.malformed(format!("unknown mode `{mode_name}`")))?,
        width: cs.get("width")?,
        height: cs.get("height")?,
        components: cs.get("components")?,
        patch_radius: cs.get("patch_radius")?,
        canny: CannyParams {
            sigma: cs.get("canny_sigma")?,
            low: cs.get("canny_low")?,
            high: cs.get("canny_high")?,
        },
        canny_on_pca: cs.get("canny_on_pca")?,
        patch_values: PatchValues::parse(&values_name)
            .ok_or_else(|| cs.malformed(format!("unknown patch values `{values_name}`")))?,
        svm_c: cs.get("svm_c")?,
        seed: cs.get("seed")?,
        split_ratio: cs.get("split_ratio")?,
        tau: cs.get("tau")?,
    };

    let ss = find("SCALER")?;
    let scaler = Scaler {
        mean: ss.floats("mean")?,
        scale: ss.floats("scale")?,
    };

    let pca = match sections.iter().find(|s| s.name == "PCA") {
        None => None,
        Some(ps) => {
            let dims: usize = ps.get("dims")?;
            let k: usize = ps.get("k")?;
            let model = PcaModel {
                mean: ps.floats("mean")?,
                components: ps.all_floats("component")?,
                eigenvalues: ps.floats("eigenvalues")?,
                truncated: ps.get("truncated")?,
            };
            if model.mean.len() != dims
                || model.components.len() != k
                || model.eigenvalues.len() != k
                || model.components.iter().any(|c| c.len() != dims)
            {
                return Err(ps.malformed("sizes disagree with dims/k"));
            }
            Some(model)
        }
    };

    let mut detectors = Vec::with_capacity(6);
    let mut pruned = Vec::with_capacity(6);
    let mut centroids = Vec::with_capacity(6);
    for e in Emotion::ALL {
        let ds = find(&format!("DETECTOR {}", e.absence_label()))?;
        detectors.push(Detector {
            emotion: e,
            model: read_model(ds)?,
        });
        let ps = find(&format!("PRUNED {}", e.absence_label()))?;
        let (_, names) = ps.raw("points")?;
        let points = names
            .split_whitespace()
            .map(|n| {
                n.parse::<FeaturePointId>()
                    .map_err(|_| ps.malformed(format!("unknown point `{n}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        pruned.push(PrunedDetector {
            emotion: e,
            points,
            model: read_model(ps)?,
        });
        centroids.push(find(&format!("CENTROID {}", e.name()))?.floats("values")?);
    }

    let bundle = TrainedBundle {
        config,
        pca,
        scaler,
        detectors,
        pruned,
        centroids,
        plan: PlanCache::default(),
    };
    bundle.check().map_err(|e| ModelFileError::Malformed {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(bundle)
}
