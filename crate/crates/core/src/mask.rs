//! Binary masks, per-clip mask sequences and their on-disk encodings.
//!
//! Two encodings are supported: one single-channel PNG per frame with
//! values 0/255, and a run-length-encoded JSON sidecar holding the whole
//! sequence. RLE counts are row-major and alternate background/foreground
//! runs, always starting with a (possibly zero-length) background run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("mask shape mismatch: {0}")]
    Shape(String),
    #[error("non-binary pixel value {value} in {path}")]
    NonBinary { path: String, value: u8 },
    #[error("invalid run-length encoding: {0}")]
    Rle(String),
    #[error("image error for {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A single binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if bits.len() != height * width {
            return Err(MaskError::Shape(format!(
                "{} pixels for a {height}x{width} mask",
                bits.len()
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self { height, width, bits }
    }

    /// Axis-aligned filled rectangle `[top, bottom) x [left, right)`,
    /// clipped to the grid.
    pub fn rect(
        height: usize,
        width: usize,
        (top, left): (usize, usize),
        (bottom, right): (usize, usize),
    ) -> Self {
        Self::from_fn(height, width, |r, c| {
            r >= top && r < bottom && c >= left && c < right
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn to_rle(&self) -> Vec<u32> {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in &self.bits {
            if b == current {
                run += 1;
            } else {
                counts.push(run);
                current = b;
                run = 1;
            }
        }
        counts.push(run);
        counts
    }

    pub fn from_rle(height: usize, width: usize, counts: &[u32]) -> Result<Self, MaskError> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != (height * width) as u64 {
            return Err(MaskError::Rle(format!(
                "runs cover {total} pixels, expected {}",
                height * width
            )));
        }
        let mut bits = Vec::with_capacity(height * width);
        for (i, &c) in counts.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
        }
        Ok(Self { height, width, bits })
    }

    pub fn to_gray(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        })
    }

    /// Reads a single-channel 0/255 PNG. Any other value is rejected.
    pub fn read_png(path: &Path) -> Result<Self, MaskError> {
        let img = image::open(path)
            .map_err(|source| MaskError::Image {
                path: path.display().to_string(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        let mut bits = Vec::with_capacity((w * h) as usize);
        for p in img.pixels() {
            match p.0[0] {
                0 => bits.push(false),
                255 => bits.push(true),
                value => {
                    return Err(MaskError::NonBinary {
                        path: path.display().to_string(),
                        value,
                    })
                }
            }
        }
        Self::from_bits(h as usize, w as usize, bits)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), MaskError> {
        self.to_gray().save(path).map_err(|source| MaskError::Image {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Per-frame masks of one clip over a fixed frame grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    clip_id: String,
    height: usize,
    width: usize,
    masks: Vec<Mask>,
}

impl MaskSequence {
    pub fn new(
        clip_id: impl Into<String>,
        (height, width): (usize, usize),
        masks: Vec<Mask>,
    ) -> Result<Self, MaskError> {
        if let Some((i, m)) = masks
            .iter()
            .enumerate()
            .find(|(_, m)| m.dims() != (height, width))
        {
            return Err(MaskError::Shape(format!(
                "frame {i} is {}x{}, expected {height}x{width}",
                m.height, m.width
            )));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            height,
            width,
            masks,
        })
    }

    pub fn empty(clip_id: impl Into<String>, (height, width): (usize, usize), frames: usize) -> Self {
        Self {
            clip_id: clip_id.into(),
            height,
            width,
            masks: vec![Mask::empty(height, width); frames],
        }
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn with_clip_id(mut self, clip_id: impl Into<String>) -> Self {
        self.clip_id = clip_id.into();
        self
    }

    /// Fails unless `other` has the same frame count and frame shape.
    pub fn check_aligned(&self, other: &MaskSequence) -> Result<(), MaskError> {
        if self.dims() != other.dims() || self.len() != other.len() {
            return Err(MaskError::Shape(format!(
                "{} frames of {}x{} vs {} frames of {}x{}",
                self.len(),
                self.height,
                self.width,
                other.len(),
                other.height,
                other.width
            )));
        }
        Ok(())
    }

    pub fn to_rle(&self) -> RleSequence {
        RleSequence {
            height: self.height,
            width: self.width,
            frames: self.masks.iter().map(Mask::to_rle).collect(),
        }
    }

    pub fn from_rle(clip_id: impl Into<String>, rle: &RleSequence) -> Result<Self, MaskError> {
        let masks = rle
            .frames
            .iter()
            .map(|counts| Mask::from_rle(rle.height, rle.width, counts))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(clip_id, (rle.height, rle.width), masks)
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<(), MaskError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_vec(&self.to_rle())?)?;
        Ok(())
    }

    pub fn read_sidecar(clip_id: impl Into<String>, path: &Path) -> Result<Self, MaskError> {
        let rle: RleSequence = serde_json::from_slice(&fs::read(path)?)?;
        Self::from_rle(clip_id, &rle)
    }

    /// Writes `00000.png`, `00001.png`, … into `dir`.
    pub fn write_png_dir(&self, dir: &Path) -> Result<(), MaskError> {
        fs::create_dir_all(dir)?;
        for (i, m) in self.masks.iter().enumerate() {
            m.write_png(&dir.join(format!("{i:05}.png")))?;
        }
        Ok(())
    }

    /// Reads every `*.png` in `dir` in filename order.
    pub fn read_png_dir(clip_id: impl Into<String>, dir: &Path) -> Result<Self, MaskError> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        let masks = paths
            .iter()
            .map(|p| Mask::read_png(p))
            .collect::<Result<Vec<_>, _>>()?;
        let dims = masks.first().map(Mask::dims).unwrap_or((0, 0));
        Self::new(clip_id, dims, masks)
    }
}

/// JSON sidecar schema: `{"height": h, "width": w, "frames": [[runs…], …]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleSequence {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<u32>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_starts_with_background() {
        let m = Mask::from_bits(1, 4, vec![true, true, false, true]).unwrap();
        assert_eq!(m.to_rle(), vec![0, 2, 1, 1]);
        assert_eq!(Mask::empty(2, 2).to_rle(), vec![4]);
    }

    #[test]
    fn rle_rejects_wrong_total() {
        assert!(Mask::from_rle(2, 2, &[1, 2]).is_err());
    }

    #[test]
    fn sequence_rejects_mismatched_frames() {
        let err = MaskSequence::new("c", (2, 2), vec![Mask::empty(2, 2), Mask::empty(3, 2)]);
        assert!(matches!(err, Err(MaskError::Shape(_))));
    }

    #[test]
    fn png_round_trip_and_non_binary_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let seq = MaskSequence::new(
            "c",
            (3, 5),
            vec![Mask::rect(3, 5, (0, 1), (2, 4)), Mask::empty(3, 5)],
        )
        .unwrap();
        seq.write_png_dir(dir.path()).unwrap();
        assert_eq!(MaskSequence::read_png_dir("c", dir.path()).unwrap(), seq);

        let grey = image::GrayImage::from_pixel(2, 2, image::Luma([128]));
        let p = dir.path().join("grey.png");
        grey.save(&p).unwrap();
        assert!(matches!(
            Mask::read_png(&p),
            Err(MaskError::NonBinary { value: 128, .. })
        ));
    }

    proptest! {
        #[test]
        fn rle_round_trip(h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
            let m = Mask::from_fn(h, w, |r, c| (seed >> ((r * w + c) % 64)) & 1 == 1);
            prop_assert_eq!(Mask::from_rle(h, w, &m.to_rle()).unwrap(), m);
        }
    }
}
