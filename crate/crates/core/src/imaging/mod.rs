//! Greyscale image front-end: PGM I/O, resizing, vectorization, Canny edges
//! and fixed-size pixel patches around landmarks.

mod canny;
mod pgm;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::facegeo::{FaceModel, FeaturePointId};

pub use canny::{canny, CannyParams};
pub use pgm::{load_pgm, write_edge_pgm, write_pgm, PgmError};

pub const WORKING_WIDTH: usize = 490;
pub const WORKING_HEIGHT: usize = 400;
pub const DEFAULT_PATCH_RADIUS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("image is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    SizeMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Row-major luminance image, values nominally in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::InvalidArgument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Edges as 255 on a 0 background.
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .mask
                .iter()
                .map(|&m| if m { 255.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Edges as 1.0, background as 0.0.
    pub fn values(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.mask.iter().map(|&m| f64::from(u8::from(m))).collect(),
        }
    }
}

/// Bilinear resampling with pixel centres at half-integer coordinates and
/// clamped borders.
pub fn resize(img: &Image, w: usize, h: usize) -> Result<Image, ImageError> {
    if w == 0 || h == 0 {
        return Err(ImageError::InvalidArgument(
            "target size must be positive".into(),
        ));
    }
    if (w, h) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    let axis = |dst: usize, scale: f64, n: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1, fy) = axis(y, sy, img.height);
        for x in 0..w {
            let (x0, x1, fx) = axis(x, sx, img.width);
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            pixels.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(Image {
        width: w,
        height: h,
        pixels,
    })
}

/// Row-major flatten scaled to `[0, 1]`; the image must already have the
/// working size.
pub fn image_to_vector(img: &Image, w: usize, h: usize) -> Result<Vec<f64>, ImageError> {
    if (img.width, img.height) != (w, h) {
        return Err(ImageError::SizeMismatch {
            want_w: w,
            want_h: h,
            got_w: img.width,
            got_h: img.height,
        });
    }
    Ok(img.pixels.iter().map(|v| v / 255.0).collect())
}

/// Inverse of [`image_to_vector`].
pub fn vector_to_image(v: &[f64], w: usize, h: usize) -> Result<Image, ImageError> {
    Image::new(w, h, v.iter().map(|x| x * 255.0).collect())
}

/// Maps landmark coordinates from one image size to another under the same
/// half-pixel convention used by [`resize`].
pub fn rescale_landmarks(face: &FaceModel, from: (usize, usize), to: (usize, usize)) -> FaceModel {
    let sx = to.0 as f64 / from.0 as f64;
    let sy = to.1 as f64 / from.1 as f64;
    face.map_points(|_, p| {
        crate::facegeo::Point::new((p.x + 0.5) * sx - 0.5, (p.y + 0.5) * sy - 0.5)
    })
    .expect("positive scaling keeps eye corners distinct")
}

/// Concatenated `(2r+1)^2` windows centred on the monitored landmarks, in
/// canonical point order. `landmarks` are pixel coordinates (x = column,
/// y = row); windows reaching outside the image are zero-padded.
pub fn extract_patches(
    source: &Image,
    landmarks: &FaceModel,
    monitored: &BTreeSet<FeaturePointId>,
    radius: usize,
) -> Result<Vec<f64>, ImageError> {
    if monitored.is_empty() {
        return Err(ImageError::InvalidArgument("no monitored points".into()));
    }
    if radius == 0 {
        return Err(ImageError::InvalidArgument(
            "patch radius must be at least 1".into(),
        ));
    }
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut out = Vec::with_capacity(monitored.len() * side * side);
    for &id in monitored {
        let p = landmarks.point(id);
        let (cx, cy) = (p.x.round() as isize, p.y.round() as isize);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (cx + dx, cy + dy);
                let inside =
                    x >= 0 && y >= 0 && (x as usize) < source.width && (y as usize) < source.height;
                out.push(if inside {
                    source.get(x as usize, y as usize)
                } else {
                    0.0
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facegeo::Point;

    #[test]
    fn resize_identity_and_constant() {
        let img = Image::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(resize(&img, 3, 2).unwrap(), img);
        let c = resize(&Image::filled(5, 4, 77.0), 13, 3).unwrap();
        assert!(c.pixels.iter().all(|&v| (v - 77.0).abs() < 1e-12));
    }

    #[test]
    fn resize_two_pixels_to_four() {
        let img = Image::new(2, 1, vec![0.0, 255.0]).unwrap();
        let r = resize(&img, 4, 1).unwrap();
        // Source positions -0.25, 0.25, 0.75, 1.25 clamp to 0, 0.25, 0.75, 1.
        assert_eq!(r.pixels, vec![0.0, 63.75, 191.25, 255.0]);
        assert!(r.pixels.windows(2).all(|w| w[0] <= w[1]));
        assert!(resize(&img, 0, 1).is_err());
    }

    #[test]
    fn vector_layout() {
        let mut img = Image::filled(WORKING_WIDTH, WORKING_HEIGHT, 0.0);
        assert_eq!(
            image_to_vector(&img, WORKING_WIDTH, WORKING_HEIGHT)
                .unwrap()
                .len(),
            196_000
        );
        img.pixels[1] = 255.0;
        let v = image_to_vector(&img, WORKING_WIDTH, WORKING_HEIGHT).unwrap();
        assert_eq!(v[1], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert!(matches!(
            image_to_vector(&Image::filled(10, 10, 0.0), WORKING_WIDTH, WORKING_HEIGHT),
            Err(ImageError::SizeMismatch { .. })
        ));
    }

    fn grid_face(step: f64) -> FaceModel {
        let pts = FeaturePointId::ALL.map(|id| {
            let i = id.index() as f64;
            Point::new(5.0 + (i % 6.0) * step, 5.0 + (i / 6.0).floor() * step)
        });
        FaceModel::new(pts).unwrap()
    }

    #[test]
    fn patch_lengths() {
        let img = Image::filled(60, 40, 1.0);
        let face = grid_face(6.0);
        let all: BTreeSet<_> = FeaturePointId::ALL.into_iter().collect();
        assert_eq!(
            extract_patches(&img, &face, &all, 3).unwrap().len(),
            24 * 49
        );
        let two: BTreeSet<_> = [FeaturePointId::Mm3, FeaturePointId::Mm4].into();
        assert_eq!(extract_patches(&img, &face, &two, 3).unwrap().len(), 2 * 49);
        assert!(extract_patches(&img, &face, &BTreeSet::new(), 3).is_err());
    }

    #[test]
    fn corner_patch_is_padded() {
        let img = Image::filled(20, 20, 1.0);
        let face = grid_face(1.0)
            .map_points(|id, p| {
                if id == FeaturePointId::Bl1 {
                    Point::new(0.0, 0.0)
                } else {
                    p
                }
            })
            .unwrap();
        let one: BTreeSet<_> = [FeaturePointId::Bl1].into();
        let v = extract_patches(&img, &face, &one, 3).unwrap();
        assert_eq!(v.len(), 49);
        assert_eq!(v.iter().sum::<f64>(), 16.0);
    }
}
