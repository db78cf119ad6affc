//! How the check agent is shown a mask: rendered highlight images written
//! under the run directory, or the raw run-length masks inline.

use std::path::PathBuf;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, MediaItem, MediaKind};
use crate::mask::{Mask, MaskSequence};
use crate::media::{run_uri, MediaResolver};
use crate::model::MediaBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayStyle {
    /// Opacity of the highlight over masked pixels, in [0, 1].
    pub alpha: f32,
    pub color: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            color: [255, 0, 0],
        }
    }
}

fn color_name(c: [u8; 3]) -> String {
    match c {
        [255, 0, 0] => "red".into(),
        [0, 255, 0] => "green".into(),
        [0, 0, 255] => "blue".into(),
        [255, 255, 0] => "yellow".into(),
        [r, g, b] => format!("#{r:02x}{g:02x}{b:02x}"),
    }
}

/// Blends `style.color` over the masked pixels of `frame`.
pub fn blend(frame: &RgbImage, mask: &Mask, style: OverlayStyle) -> Result<RgbImage, BackendError> {
    let (w, h) = frame.dimensions();
    if (h as usize, w as usize) != mask.dims() {
        return Err(BackendError::Shape(format!(
            "frame is {h}x{w}, mask is {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    let a = style.alpha.clamp(0.0, 1.0);
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let p = frame.get_pixel(x, y).0;
        if !mask.get(y as usize, x as usize) {
            return Rgb(p);
        }
        let mix = |i: usize| ((1.0 - a) * p[i] as f32 + a * style.color[i] as f32).round() as u8;
        Rgb([mix(0), mix(1), mix(2)])
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Overlays {
    /// Attach each frame's run-length mask as text.
    Inline,
    /// Write highlighted frames to `overlays/<clip>/<step>/` in the run
    /// directory and attach them as images.
    Render {
        resolver: MediaResolver,
        style: OverlayStyle,
    },
}

impl Overlays {
    /// Bound into the check prompt's `{{overlay}}` placeholder.
    pub fn describe(&self) -> String {
        match self {
            Overlays::Inline => {
                "given per frame as row-major run-length counts, alternating background and object runs starting with background".into()
            }
            Overlays::Render { style, .. } => format!(
                "highlighted in {} at {:.0}% opacity, attached after the plain frames",
                color_name(style.color),
                style.alpha * 100.0
            ),
        }
    }

    pub fn attach(
        &self,
        bundle: &MediaBundle,
        masks: &MaskSequence,
        step: u32,
    ) -> Result<Vec<MediaItem>, BackendError> {
        if masks.len() != bundle.frame_count() {
            return Err(BackendError::Shape(format!(
                "{} masks for {} frames",
                masks.len(),
                bundle.frame_count()
            )));
        }
        match self {
            Overlays::Inline => Ok(bundle
                .frames()
                .iter()
                .zip(masks.masks())
                .map(|(f, m)| MediaItem {
                    kind: MediaKind::Mask,
                    index: Some(f.index),
                    uri: serde_json::to_string(&m.to_rle()).expect("counts serialize"),
                })
                .collect()),
            Overlays::Render { resolver, style } => {
                let run_root = resolver
                    .run_root
                    .as_ref()
                    .ok_or_else(|| BackendError::Media("overlays need a run directory".into()))?;
                let rel_dir = PathBuf::from("overlays")
                    .join(bundle.clip_id())
                    .join(step.to_string());
                std::fs::create_dir_all(run_root.join(&rel_dir))
                    .map_err(|e| BackendError::Media(e.to_string()))?;
                let mut items = Vec::with_capacity(masks.len());
                for (f, m) in bundle.frames().iter().zip(masks.masks()) {
                    let src = resolver.resolve(&f.uri);
                    let frame = image::open(&src)
                        .map_err(|e| BackendError::Media(format!("{}: {e}", src.display())))?
                        .into_rgb8();
                    let out = blend(&frame, m, *style)?;
                    let rel = rel_dir.join(format!("{:05}.png", f.index));
                    out.save(run_root.join(&rel))
                        .map_err(|e| BackendError::Media(e.to_string()))?;
                    items.push(MediaItem {
                        kind: MediaKind::Overlay,
                        index: Some(f.index),
                        uri: run_uri(&rel),
                    });
                }
                Ok(items)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::bundle;

    #[test]
    fn blend_only_touches_masked_pixels() {
        let frame = RgbImage::from_pixel(2, 1, Rgb([100, 100, 100]));
        let mask = Mask::from_bits(1, 2, vec![true, false]).unwrap();
        let out = blend(&frame, &mask, OverlayStyle::default()).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [178, 50, 50]);
        assert_eq!(out.get_pixel(1, 0).0, [100, 100, 100]);
    }

    #[test]
    fn rendered_overlays_land_in_the_run_directory() {
        let data = tempfile::tempdir().unwrap();
        let run = tempfile::tempdir().unwrap();
        let b = bundle("c", 2, (3, 4));
        std::fs::create_dir_all(data.path().join("frames/c")).unwrap();
        for i in 0..2 {
            RgbImage::new(4, 3)
                .save(data.path().join(format!("frames/c/{i:05}.png")))
                .unwrap();
        }
        let masks = MaskSequence::new("c", (3, 4), vec![Mask::rect(3, 4, (0, 0), (1, 1)); 2]).unwrap();
        let o = Overlays::Render {
            resolver: MediaResolver::new(data.path(), run.path()),
            style: OverlayStyle::default(),
        };
        let items = o.attach(&b, &masks, 1).unwrap();
        assert_eq!(items[1].uri, "run://overlays/c/1/00001.png");
        assert!(run.path().join("overlays/c/1/00001.png").exists());
        assert!(o.describe().contains("red"));
    }

    #[test]
    fn inline_masks() {
        let b = bundle("c", 2, (2, 2));
        let masks = MaskSequence::empty("c", (2, 2), 2);
        let items = Overlays::Inline.attach(&b, &masks, 0).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].uri, "[4]");
        assert!(Overlays::Inline
            .attach(&b, &MaskSequence::empty("c", (2, 2), 3), 0)
            .is_err());
    }
}
