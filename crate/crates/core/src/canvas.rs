//! Landmark placement, mask derivation and PNG I/O.
//!
//! Pixel values map as `v ↦ 2v/255 − 1` on load; saving inverts that with
//! round-half-up and clamping, so any image that came from an 8-bit file
//! round-trips exactly.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use base64::Engine as _;
use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::CompositionInput;
use crate::tensor::{Mask, Shape, Tensor};

/// Patch pixels with `alpha >= ALPHA_THRESHOLD` are painted and marked known.
pub const ALPHA_THRESHOLD: f64 = 0.5;
pub const MASK_THRESHOLD: u8 = 128;
const DATA_URL_PREFIX: &str = "data:image/png;base64,";

/// An image plus optional per-pixel alpha in `[0, 1]`, row-major `h × w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Tensor,
    pub alpha: Option<Vec<f64>>,
}

impl Patch {
    pub fn opaque(pixels: Tensor) -> Self {
        Patch { pixels, alpha: None }
    }

    pub fn with_alpha(pixels: Tensor, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != pixels.shape().pixels() {
            return Err(Error::invalid(format!("alpha has {} values for a {} patch", alpha.len(), pixels.shape())));
        }
        Ok(Patch { pixels, alpha: Some(alpha) })
    }

    fn opaque_at(&self, y: usize, x: usize) -> bool {
        match &self.alpha {
            None => true,
            Some(a) => a[y * self.pixels.shape().width + x] >= ALPHA_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub patch: Patch,
    /// Top-left corner; may be negative or past the canvas edge.
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

/// A composition with all patches decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub placements: Vec<Placement>,
    pub background: f64,
}

impl Composition {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Composition { width, height, channels, placements: Vec::new(), background: 0.0 }
    }

    pub fn place(mut self, patch: Patch, x: i64, y: i64, z: i64) -> Self {
        self.placements.push(Placement { patch, x, y, z });
        self
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasSize {
    pub w: usize,
    pub h: usize,
    /// 1 or 3. Defaults to the widest placed patch, or 1 for an empty canvas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementSpec {
    /// File path (relative to the spec's directory) or `data:image/png;base64,…`.
    pub image: String,
    pub x: i64,
    pub y: i64,
    #[serde(default)]
    pub z: i64,
}

/// JSON wire form shared by the CLI, the HTTP service and the UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSpec {
    pub canvas: CanvasSize,
    #[serde(default)]
    pub placements: Vec<PlacementSpec>,
    #[serde(default)]
    pub background: f64,
}

impl CompositionSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Decode every placement image. Relative paths resolve against `base_dir`;
    /// with no base dir only inline images are accepted.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Composition> {
        let mut placements = Vec::with_capacity(self.placements.len());
        for (i, p) in self.placements.iter().enumerate() {
            let patch = match p.image.strip_prefix(DATA_URL_PREFIX) {
                Some(b64) => {
                    let bytes = base64::engine::general_purpose::STANDARD
                        .decode(b64.trim())
                        .map_err(|e| Error::invalid(format!("placement {i}: bad base64 image: {e}")))?;
                    decode_png(&bytes).map_err(|e| Error::invalid(format!("placement {i}: {e}")))?
                }
                None => {
                    let Some(dir) = base_dir else {
                        return Err(Error::invalid(format!(
                            "placement {i}: file images are not allowed here, inline it as {DATA_URL_PREFIX}…"
                        )));
                    };
                    load_patch(&dir.join(&p.image))?
                }
            };
            placements.push(Placement { patch, x: p.x, y: p.y, z: p.z });
        }
        let channels = self
            .canvas
            .channels
            .unwrap_or_else(|| placements.iter().map(|p| p.patch.pixels.shape().channels).max().unwrap_or(1));
        Ok(Composition {
            width: self.canvas.w,
            height: self.canvas.h,
            channels,
            placements,
            background: self.background,
        })
    }
}

/// Inline a PNG as a data URL for [`PlacementSpec::image`].
pub fn png_data_url(png: &[u8]) -> String {
    format!("{DATA_URL_PREFIX}{}", base64::engine::general_purpose::STANDARD.encode(png))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub input: CompositionInput,
    /// Non-fatal problems, e.g. a placement that missed the canvas entirely.
    pub warnings: Vec<String>,
}

/// Paint placements in ascending `z` (ties keep list order, later on top),
/// clipped to the canvas. The mask is set wherever a painted pixel landed.
pub fn rasterize(comp: &Composition) -> Result<Rasterized> {
    if comp.width == 0 || comp.height == 0 {
        return Err(Error::invalid(format!("canvas must be non-empty, got {}x{}", comp.width, comp.height)));
    }
    if comp.channels != 1 && comp.channels != 3 {
        return Err(Error::invalid(format!("canvas must have 1 or 3 channels, got {}", comp.channels)));
    }
    if !comp.background.is_finite() {
        return Err(Error::invalid("background must be finite"));
    }
    let shape = comp.shape();
    let mut known = Tensor::filled(shape, comp.background);
    let mut keep = vec![false; shape.pixels()];
    let mut warnings = Vec::new();

    let mut order: Vec<usize> = (0..comp.placements.len()).collect();
    order.sort_by_key(|&i| comp.placements[i].z);

    for i in order {
        let p = &comp.placements[i];
        let ps = p.patch.pixels.shape();
        if ps.is_empty() {
            return Err(Error::invalid(format!("placement {i} has an empty patch ({ps})")));
        }
        if ps.channels != 1 && ps.channels != 3 {
            return Err(Error::invalid(format!("placement {i}: patch must have 1 or 3 channels, got {}", ps.channels)));
        }
        let (x0, y0) = (p.x, p.y);
        let (x1, y1) = (x0 + ps.width as i64, y0 + ps.height as i64);
        let (cx0, cy0) = (x0.max(0), y0.max(0));
        let (cx1, cy1) = (x1.min(comp.width as i64), y1.min(comp.height as i64));
        if cx0 >= cx1 || cy0 >= cy1 {
            warnings.push(format!(
                "placement {i} ({}x{} at {x0},{y0}) lies outside the {}x{} canvas",
                ps.width, ps.height, comp.width, comp.height
            ));
            continue;
        }
        let pixels = convert_channels(&p.patch.pixels, comp.channels);
        for cy in cy0..cy1 {
            for cx in cx0..cx1 {
                let (py, px) = ((cy - y0) as usize, (cx - x0) as usize);
                if !p.patch.opaque_at(py, px) {
                    continue;
                }
                let (cy, cx) = (cy as usize, cx as usize);
                for c in 0..comp.channels {
                    known.set(c, cy, cx, pixels.get(c, py, px));
                }
                keep[cy * comp.width + cx] = true;
            }
        }
    }
    let mask = Mask::from_bools(Shape::new(1, comp.height, comp.width), keep)?.broadcast(comp.channels)?;
    Ok(Rasterized { input: CompositionInput::new(known, mask)?, warnings })
}

/// Gray to RGB by replication; RGB to gray by channel mean.
fn convert_channels(img: &Tensor, channels: usize) -> Tensor {
    let s = img.shape();
    if s.channels == channels {
        return img.clone();
    }
    let mut out = Tensor::zeros(Shape::new(channels, s.height, s.width));
    for y in 0..s.height {
        for x in 0..s.width {
            if channels == 1 {
                let mean = (0..s.channels).map(|c| img.get(c, y, x)).sum::<f64>() / s.channels as f64;
                out.set(0, y, x, mean);
            } else {
                for c in 0..channels {
                    out.set(c, y, x, img.get(0, y, x));
                }
            }
        }
    }
    out
}

fn from_u8(v: u8) -> f64 {
    2.0 * v as f64 / 255.0 - 1.0
}

/// Round-half-up, clamped to `[0, 255]`. NaN maps to 0.
fn to_u8(v: f64) -> u8 {
    let q = ((v + 1.0) * 127.5 + 0.5).floor();
    if q.is_nan() {
        0
    } else {
        q.clamp(0.0, 255.0) as u8
    }
}

/// Decode a PNG into pixels and, when present, alpha.
pub fn decode_png(bytes: &[u8]) -> Result<Patch> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("cannot decode PNG: {e}")))?;
    let has_alpha = img.color().has_alpha();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw, alpha): (usize, Vec<u8>, Option<Vec<u8>>) = if img.color().has_color() {
        let rgba = img.to_rgba8();
        let mut planes = vec![0u8; 3 * w * h];
        let mut alpha = Vec::with_capacity(w * h);
        for (i, px) in rgba.pixels().enumerate() {
            for c in 0..3 {
                planes[c * w * h + i] = px[c];
            }
            alpha.push(px[3]);
        }
        (3, planes, has_alpha.then_some(alpha))
    } else {
        let la = img.to_luma_alpha8();
        let (luma, alpha): (Vec<u8>, Vec<u8>) = la.pixels().map(|px| (px[0], px[1])).unzip();
        (1, luma, has_alpha.then_some(alpha))
    };
    let pixels = Tensor::from_vec(Shape::new(channels, h, w), raw.into_iter().map(from_u8).collect())?;
    Ok(Patch { pixels, alpha: alpha.map(|a| a.into_iter().map(|v| v as f64 / 255.0).collect()) })
}

pub fn load_patch(path: &Path) -> Result<Patch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| Error::io(path, e))
}

/// Load an 8-bit grayscale or RGB PNG into `[-1, 1]`. Alpha is dropped.
pub fn load_image(path: &Path) -> Result<Tensor> {
    Ok(load_patch(path)?.pixels)
}

/// Encode a 1- or 3-channel image as an 8-bit PNG.
pub fn encode_png(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    let (w, h) = (s.width as u32, s.height as u32);
    let dynamic = match s.channels {
        1 => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(w, h, image.as_slice().iter().map(|&v| to_u8(v)).collect())
                .ok_or_else(|| Error::invalid(format!("cannot encode a {s} image")))?,
        ),
        3 => {
            let plane = s.pixels();
            let data = image.as_slice();
            let interleaved = (0..plane).flat_map(|i| (0..3).map(move |c| to_u8(data[c * plane + i]))).collect();
            DynamicImage::ImageRgb8(
                image::RgbImage::from_raw(w, h, interleaved)
                    .ok_or_else(|| Error::invalid(format!("cannot encode a {s} image")))?,
            )
        }
        c => return Err(Error::invalid(format!("PNG output needs 1 or 3 channels, got {c}"))),
    };
    let mut out = Vec::new();
    dynamic
        .write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG encoding failed: {e}")))?;
    Ok(out)
}

pub fn save_image(image: &Tensor, path: &Path) -> Result<()> {
    let png = encode_png(image)?;
    std::fs::write(path, png).map_err(|e| Error::io(path, e))
}

/// White (255) where known, black elsewhere. Uses the first channel.
pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let s = mask.shape();
    let first = Tensor::from_vec(
        Shape::new(1, s.height, s.width),
        mask.as_slice()[..s.pixels()].iter().map(|&k| if k { 1.0 } else { -1.0 }).collect(),
    )?;
    encode_png(&first)
}

/// Grayscale PNG to a `1 × h × w` mask; pixels `>= 128` are known.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("cannot decode PNG: {e}")))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::from_bools(Shape::new(1, h, w), img.pixels().map(|p| p[0] >= MASK_THRESHOLD).collect())
}

/// Load a mask, checking it against the companion image's `(height, width)`.
pub fn load_mask(path: &Path, expected: Option<(usize, usize)>) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mask = decode_mask(&bytes).map_err(|e| Error::io(path, e))?;
    if let Some((h, w)) = expected {
        let s = mask.shape();
        if (s.height, s.width) != (h, w) {
            return Err(Error::invalid(format!(
                "{}: mask is {}x{}, image is {w}x{h}",
                path.display(),
                s.width,
                s.height
            )));
        }
    }
    Ok(mask)
}

/// Resolve a spec file's relative image paths against its own directory.
pub fn load_spec(path: &Path) -> Result<Composition> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec = CompositionSpec::from_json(&text)?;
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    spec.resolve(Some(&dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solid(channels: usize, h: usize, w: usize, v: f64) -> Patch {
        Patch::opaque(Tensor::filled(Shape::new(channels, h, w), v))
    }

    #[test]
    fn empty_canvas_is_background() {
        let mut comp = Composition::new(5, 4, 3);
        comp.background = 0.25;
        let r = rasterize(&comp).unwrap();
        assert!(r.input.mask().all_unknown());
        assert!(r.input.known().as_slice().iter().all(|&v| v == 0.25));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn full_cover_patch() {
        let mut pixels = Tensor::zeros(Shape::new(1, 4, 6));
        for (i, v) in pixels.as_mut_slice().iter_mut().enumerate() {
            *v = i as f64 / 24.0;
        }
        let r = rasterize(&Composition::new(6, 4, 1).place(Patch::opaque(pixels.clone()), 0, 0, 0)).unwrap();
        assert!(r.input.mask().all_known());
        assert_eq!(r.input.known(), &pixels);
    }

    #[test]
    fn higher_z_wins_regardless_of_list_order() {
        let comp = Composition::new(4, 1, 1).place(solid(1, 1, 3, 0.9), 1, 0, 5).place(solid(1, 1, 3, -0.4), 0, 0, 1);
        let r = rasterize(&comp).unwrap();
        assert_eq!(r.input.known().as_slice(), &[-0.4, 0.9, 0.9, 0.9]);
        // equal z: later in the list is on top
        let comp = Composition::new(2, 1, 1).place(solid(1, 1, 2, 0.1), 0, 0, 0).place(solid(1, 1, 1, 0.2), 1, 0, 0);
        assert_eq!(rasterize(&comp).unwrap().input.known().as_slice(), &[0.1, 0.2]);
    }

    #[test]
    fn outside_placement_warns() {
        let comp = Composition::new(4, 4, 1).place(solid(1, 2, 2, 1.0), 4, 0, 0).place(solid(1, 2, 2, 1.0), -2, -2, 0);
        let r = rasterize(&comp).unwrap();
        assert_eq!(r.warnings.len(), 2);
        assert!(r.input.mask().all_unknown());
    }

    #[test]
    fn clipping_keeps_the_visible_part() {
        let comp = Composition::new(4, 4, 1).place(solid(1, 3, 3, 0.5), -1, 2, 0);
        let r = rasterize(&comp).unwrap();
        assert_eq!(r.input.mask().known_count(), 4);
        assert!(r.input.mask().get(0, 3, 1) && !r.input.mask().get(0, 1, 0));
    }

    #[test]
    fn zero_size_patch_is_an_error() {
        let comp = Composition::new(4, 4, 1).place(Patch::opaque(Tensor::zeros(Shape::new(1, 0, 3))), 0, 0, 0);
        assert!(matches!(rasterize(&comp), Err(Error::InvalidArgument(_))));
        assert!(rasterize(&Composition::new(0, 4, 1)).is_err());
        assert!(rasterize(&Composition::new(4, 4, 2)).is_err());
    }

    #[test]
    fn alpha_threshold() {
        let patch = Patch::with_alpha(Tensor::filled(Shape::new(1, 1, 3), 0.7), vec![0.49, 0.5, 1.0]).unwrap();
        let r = rasterize(&Composition::new(3, 1, 1).place(patch, 0, 0, 0)).unwrap();
        assert_eq!(r.input.mask().as_slice(), &[false, true, true]);
        assert_eq!(r.input.known().as_slice(), &[0.0, 0.7, 0.7]);
    }

    #[test]
    fn channel_conversion() {
        let gray = solid(1, 1, 1, 0.3);
        let r = rasterize(&Composition::new(1, 1, 3).place(gray, 0, 0, 0)).unwrap();
        assert_eq!(r.input.known().as_slice(), &[0.3, 0.3, 0.3]);
        assert_eq!(r.input.mask().known_count(), 3);
        let rgb = Patch::opaque(Tensor::from_vec(Shape::new(3, 1, 1), vec![0.0, 0.3, 0.6]).unwrap());
        let r = rasterize(&Composition::new(1, 1, 1).place(rgb, 0, 0, 0)).unwrap();
        assert!((r.input.known().as_slice()[0] - 0.3).abs() < 1e-15);
    }

    #[derive(Debug, Clone)]
    struct Rect {
        x: i64,
        y: i64,
        w: usize,
        h: usize,
        z: i64,
        value: f64,
        alpha: Vec<f64>,
    }

    fn rect() -> impl Strategy<Value = Rect> {
        (-4i64..10, -4i64..10, 1usize..6, 1usize..6, -2i64..3, -1.0f64..1.0).prop_flat_map(|(x, y, w, h, z, value)| {
            proptest::collection::vec(prop_oneof![Just(0.0), Just(0.3), Just(0.5), Just(1.0)], w * h)
                .prop_map(move |alpha| Rect { x, y, w, h, z, value, alpha })
        })
    }

    proptest! {
        #[test]
        fn rasterize_matches_brute_force(rects in proptest::collection::vec(rect(), 0..5)) {
            let mut comp = Composition::new(8, 8, 1);
            comp.background = -0.5;
            for (i, r) in rects.iter().enumerate() {
                // distinct per-pixel values so the winning patch is identifiable
                let data = (0..r.w * r.h).map(|k| r.value * 0.5 + (i * 64 + k) as f64 * 1e-4).collect();
                let pixels = Tensor::from_vec(Shape::new(1, r.h, r.w), data).unwrap();
                comp = comp.place(Patch::with_alpha(pixels, r.alpha.clone()).unwrap(), r.x, r.y, r.z);
            }
            let out = rasterize(&comp).unwrap();
            for y in 0..8i64 {
                for x in 0..8i64 {
                    // topmost: max z, then max index
                    let mut best: Option<(i64, usize, f64)> = None;
                    for (i, r) in rects.iter().enumerate() {
                        let (py, px) = (y - r.y, x - r.x);
                        if py < 0 || px < 0 || py >= r.h as i64 || px >= r.w as i64 {
                            continue;
                        }
                        let k = py as usize * r.w + px as usize;
                        if r.alpha[k] < 0.5 {
                            continue;
                        }
                        let v = r.value * 0.5 + (i * 64 + k) as f64 * 1e-4;
                        if best.is_none_or(|(bz, bi, _)| (r.z, i) > (bz, bi)) {
                            best = Some((r.z, i, v));
                        }
                    }
                    let (ux, uy) = (x as usize, y as usize);
                    prop_assert_eq!(out.input.mask().get(0, uy, ux), best.is_some());
                    let expect = best.map_or(-0.5, |b| b.2);
                    prop_assert_eq!(out.input.known().get(0, uy, ux), expect);
                }
            }
        }

        #[test]
        fn png_round_trip_is_exact(bytes in proptest::collection::vec(any::<u8>(), 12), rgb in any::<bool>()) {
            let channels = if rgb { 3 } else { 1 };
            let n = if rgb { 12 } else { 4 };
            let shape = Shape::new(channels, 2, n / (2 * channels));
            let img = Tensor::from_vec(shape, bytes[..n].iter().map(|&v| from_u8(v)).collect()).unwrap();
            let back = decode_png(&encode_png(&img).unwrap()).unwrap();
            prop_assert_eq!(back.pixels, img);
            prop_assert!(back.alpha.is_none());
        }
    }

    #[test]
    fn quantization_endpoints() {
        assert_eq!(from_u8(0), -1.0);
        assert_eq!(from_u8(255), 1.0);
        assert!((from_u8(128) - 0.00392156862745098).abs() < 1e-15);
        assert_eq!(to_u8(-3.0), 0);
        assert_eq!(to_u8(7.0), 255);
        assert_eq!(to_u8(f64::NAN), 0);
        // exactly half a level above 127 rounds up
        assert_eq!(to_u8(2.0 * 127.5 / 255.0 - 1.0), 128);
        for v in 0..=255u8 {
            assert_eq!(to_u8(from_u8(v)), v);
        }
    }

    #[test]
    fn file_round_trip_and_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Tensor::from_vec(Shape::new(3, 1, 2), vec![-1.0, 1.0, 0.0, 0.5, from_u8(17), from_u8(200)]).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.as_slice()[..2], [-1.0, 1.0]);
        assert_eq!(back.as_slice()[4..], [from_u8(17), from_u8(200)]);
        let missing = dir.path().join("missing.png");
        match load_image(&missing) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn rgba_alpha_is_read() {
        let img = image::RgbaImage::from_raw(2, 1, vec![10, 20, 30, 255, 40, 50, 60, 0]).unwrap();
        let mut png = Vec::new();
        DynamicImage::ImageRgba8(img).write_to(&mut Cursor::new(&mut png), ImageFormat::Png).unwrap();
        let patch = decode_png(&png).unwrap();
        assert_eq!(patch.pixels.shape(), Shape::new(3, 1, 2));
        assert_eq!(patch.alpha, Some(vec![1.0, 0.0]));
        assert_eq!(patch.pixels.get(2, 0, 1), from_u8(60));
    }

    fn gray_png(values: &[u8], w: u32) -> Vec<u8> {
        let img = image::GrayImage::from_raw(w, values.len() as u32 / w, values.to_vec()).unwrap();
        let mut png = Vec::new();
        DynamicImage::ImageLuma8(img).write_to(&mut Cursor::new(&mut png), ImageFormat::Png).unwrap();
        png
    }

    #[test]
    fn mask_thresholds() {
        assert!(decode_mask(&gray_png(&[255; 6], 3)).unwrap().all_known());
        assert!(decode_mask(&gray_png(&[0; 6], 3)).unwrap().all_unknown());
        assert_eq!(decode_mask(&gray_png(&[127, 128], 2)).unwrap().as_slice(), &[false, true]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        std::fs::write(&path, gray_png(&[0, 255, 255, 0], 2)).unwrap();
        assert_eq!(load_mask(&path, Some((2, 2))).unwrap().known_count(), 2);
        assert!(matches!(load_mask(&path, Some((2, 3))), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mask_png_echo() {
        let mask = Mask::from_bools(Shape::new(1, 1, 3), vec![true, false, true]).unwrap().broadcast(3).unwrap();
        let back = decode_mask(&encode_mask_png(&mask).unwrap()).unwrap();
        assert_eq!(back.as_slice(), &[true, false, true]);
    }

    #[test]
    fn spec_json_with_inline_and_file_images() {
        let dir = tempfile::tempdir().unwrap();
        let patch = Tensor::filled(Shape::new(1, 2, 2), 1.0);
        save_image(&patch, &dir.path().join("p.png")).unwrap();
        let inline = png_data_url(&encode_png(&Tensor::filled(Shape::new(3, 1, 1), -1.0)).unwrap());
        let text = format!(
            r#"{{"canvas": {{"w": 4, "h": 3}},
                "placements": [{{"image": "p.png", "x": 1, "y": 1, "z": 2}},
                               {{"image": "{inline}", "x": 0, "y": 0}}]}}"#
        );
        let spec = CompositionSpec::from_json(&text).unwrap();
        assert_eq!(spec.background, 0.0);
        assert_eq!(spec.placements[1].z, 0);
        let comp = spec.resolve(Some(dir.path())).unwrap();
        assert_eq!(comp.channels, 3);
        let r = rasterize(&comp).unwrap();
        assert_eq!(r.input.mask().known_count(), 3 * 5);
        assert_eq!(r.input.known().get(1, 2, 2), 1.0);
        assert_eq!(r.input.known().get(0, 0, 0), -1.0);

        // without a base directory file paths are refused
        assert!(spec.resolve(None).is_err());
        let back = CompositionSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        assert!(CompositionSpec::from_json(r#"{"canvas": {"w": 4}}"#).is_err());
    }
}
