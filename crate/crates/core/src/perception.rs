//! Camera frames, the synthetic camera engine and the threshold detector engine.
//!
//! Frames are row-major, channel-interleaved byte buffers. The detector is a
//! deterministic stand-in for a neural network: it binarizes a frame on mean
//! channel intensity and reports the tight bounding box of the bright pixels.

use log::warn;
use thiserror::Error;

use crate::datapack::{Payload, PayloadKind};
use crate::doc::{Doc, Value};
use crate::engine::{EngineScript, Registry, ScriptError};

pub const CAMERA_DATAPACK: &str = "smart_camera::camera";
pub const CAMERA_IMG_DATAPACK: &str = "camera_img";
pub const DETECTION_DATAPACK: &str = "detection";

pub const DEFAULT_WIDTH: u32 = 736;
pub const DEFAULT_HEIGHT: u32 = 480;
pub const BACKGROUND: u8 = 20;
pub const TARGET: u8 = 230;
pub const DEFAULT_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("image data has {actual} bytes, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("unsupported image depth {0}, expected 3")]
    UnsupportedDepth(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CameraFrame {
    pub image_height: u32,
    pub image_width: u32,
    pub image_depth: u32,
    pub image_data: Vec<u8>,
}

impl CameraFrame {
    pub fn new(height: u32, width: u32, depth: u32, data: Vec<u8>) -> Result<Self, FrameError> {
        let frame = Self {
            image_height: height,
            image_width: width,
            image_depth: depth,
            image_data: data,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn expected_len(&self) -> usize {
        self.image_height as usize * self.image_width as usize * self.image_depth as usize
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let expected = self.expected_len();
        if self.image_data.len() != expected {
            return Err(FrameError::LengthMismatch {
                expected,
                actual: self.image_data.len(),
            });
        }
        Ok(())
    }

    /// Detection networks want both sides to be multiples of 32; other sizes
    /// still work here but are reported.
    pub fn dimension_warning(&self) -> Option<String> {
        if !self.image_width.is_multiple_of(32) || !self.image_height.is_multiple_of(32) {
            Some(format!(
                "camera resolution {}x{} is not a multiple of 32",
                self.image_width, self.image_height
            ))
        } else {
            None
        }
    }

    /// Frame used to carry an arbitrary number of bytes through the transport.
    pub fn for_payload_size(bytes: usize) -> Self {
        let (h, w, d) = if bytes == (DEFAULT_WIDTH * DEFAULT_HEIGHT * 3) as usize {
            (DEFAULT_HEIGHT, DEFAULT_WIDTH, 3)
        } else {
            (1, bytes as u32, 1)
        };
        let data = (0..bytes).map(|i| (i % 251) as u8).collect();
        Self {
            image_height: h,
            image_width: w,
            image_depth: d,
            image_data: data,
        }
    }
}

/// Axis-aligned box in pixel coordinates, both corners inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub score: f64,
    pub label: String,
}

/// Three-dimensional view of a frame: `grid[row][col][chan]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelGrid {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<u8>,
}

impl PixelGrid {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.depth)
    }

    pub fn get(&self, row: usize, col: usize, chan: usize) -> u8 {
        self.data[(row * self.width + col) * self.depth + chan]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let start = (row * self.width + col) * self.depth;
        &self.data[start..start + self.depth]
    }
}

pub fn reshape_frame(frame: &CameraFrame) -> Result<PixelGrid, FrameError> {
    frame.validate()?;
    Ok(PixelGrid {
        height: frame.image_height as usize,
        width: frame.image_width as usize,
        depth: frame.image_depth as usize,
        data: frame.image_data.clone(),
    })
}

pub fn flatten_grid(grid: &PixelGrid) -> CameraFrame {
    CameraFrame {
        image_height: grid.height as u32,
        image_width: grid.width as u32,
        image_depth: grid.depth as u32,
        image_data: grid.data.clone(),
    }
}

/// RGB <-> BGR.
pub fn reverse_channels(grid: &PixelGrid) -> Result<PixelGrid, FrameError> {
    if grid.depth != 3 {
        return Err(FrameError::UnsupportedDepth(grid.depth as u32));
    }
    let mut out = grid.clone();
    for px in out.data.chunks_exact_mut(3) {
        px.swap(0, 2);
    }
    Ok(out)
}

/// Top-left corner of the target rectangle at a given step. The rectangle is
/// an eighth of the frame on each side and walks an 8x8 raster.
pub fn target_origin(step_index: u64, width: u32, height: u32) -> (u32, u32) {
    let (rw, rh) = (width / 8, height / 8);
    let col = (step_index % 8) as u32 * rw;
    let row = ((step_index / 8) % 8) as u32 * rh;
    (col, row)
}

pub fn render_frame(step_index: u64, width: u32, height: u32) -> CameraFrame {
    assert!(width >= 8 && height >= 8, "frame must be at least 8x8");
    let (w, h) = (width as usize, height as usize);
    let (x0, y0) = target_origin(step_index, width, height);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let (rw, rh) = (w / 8, h / 8);

    let mut data = vec![BACKGROUND; w * h * 3];
    for row in y0..y0 + rh {
        let start = (row * w + x0) * 3;
        data[start..start + rw * 3].fill(TARGET);
    }
    CameraFrame {
        image_height: height,
        image_width: width,
        image_depth: 3,
        image_data: data,
    }
}

/// Threshold detector. [`Detector::warm_up`] precomputes the per-pixel
/// brightness table; detection warms up lazily otherwise.
#[derive(Debug, Clone)]
pub struct Detector {
    threshold: u8,
    bright: Option<Vec<bool>>,
}

impl Detector {
    pub fn new(threshold: u8) -> Self {
        Self {
            threshold,
            bright: None,
        }
    }

    pub fn is_warm(&self) -> bool {
        self.bright.is_some()
    }

    /// Pixel is bright when its channel mean is at least the threshold, i.e.
    /// when the channel sum is at least three times it.
    pub fn warm_up(&mut self) {
        let cutoff = 3 * self.threshold as usize;
        self.bright = Some((0..=3 * 255).map(|sum| sum >= cutoff).collect());
    }

    pub fn detect(&mut self, frame: &CameraFrame) -> Result<Vec<Detection>, FrameError> {
        frame.validate()?;
        if frame.image_depth != 3 {
            return Err(FrameError::UnsupportedDepth(frame.image_depth));
        }
        if self.bright.is_none() {
            self.warm_up();
        }
        let table = self.bright.as_deref().unwrap_or_default();
        let w = frame.image_width as usize;

        let (mut x_min, mut y_min, mut x_max, mut y_max) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0usize;
        for (row, line) in frame.image_data.chunks_exact(w * 3).enumerate() {
            for (col, px) in line.chunks_exact(3).enumerate() {
                let sum = px[0] as usize + px[1] as usize + px[2] as usize;
                if table[sum] {
                    count += 1;
                    x_min = x_min.min(col);
                    x_max = x_max.max(col);
                    y_min = y_min.min(row);
                    y_max = y_max.max(row);
                }
            }
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let area = (x_max - x_min + 1) * (y_max - y_min + 1);
        Ok(vec![Detection {
            x_min: x_min as u32,
            y_min: y_min as u32,
            x_max: x_max as u32,
            y_max: y_max as u32,
            score: count as f64 / area as f64,
            label: "target".to_owned(),
        }])
    }
}

pub fn detect_stub(frame: &CameraFrame, threshold: u8) -> Result<Vec<Detection>, FrameError> {
    Detector::new(threshold).detect(frame)
}

/// Frame as the detector's `camera_img` document: height, width and the pixel
/// buffer.
pub fn frame_to_doc(frame: &CameraFrame) -> Doc {
    let mut d = Doc::new();
    d.insert("c_imageHeight".into(), Value::Int(frame.image_height as i64));
    d.insert("c_imageWidth".into(), Value::Int(frame.image_width as i64));
    d.insert("current_image_frame".into(), Value::Bytes(frame.image_data.clone()));
    d
}

/// Inverse of [`frame_to_doc`]. Returns `None` for the placeholder document an
/// unfed detector starts with (zero height) and for malformed documents.
pub fn frame_from_doc(doc: &Doc) -> Option<CameraFrame> {
    let h = u32::try_from(doc.get("c_imageHeight")?.as_i64()?).ok()?;
    let w = u32::try_from(doc.get("c_imageWidth")?.as_i64()?).ok()?;
    if h == 0 || w == 0 {
        return None;
    }
    let data = doc.get("current_image_frame")?.to_bytes()?;
    let pixels = h as usize * w as usize;
    if data.len() % pixels != 0 {
        return None;
    }
    CameraFrame::new(h, w, (data.len() / pixels) as u32, data).ok()
}

fn extra_u32(extra: &Doc, key: &str, default: u32) -> Result<u32, ScriptError> {
    match extra.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_i64()
            .and_then(|i| u32::try_from(i).ok())
            .ok_or_else(|| ScriptError(format!("{key} must be a non-negative integer"))),
    }
}

/// Renders one synthetic frame per engine step.
pub struct CameraEngine {
    width: u32,
    height: u32,
    steps: u64,
}

impl CameraEngine {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            steps: 0,
        }
    }

    pub fn from_extra(extra: &Doc) -> Result<Self, ScriptError> {
        let width = extra_u32(extra, "Width", DEFAULT_WIDTH)?;
        let height = extra_u32(extra, "Height", DEFAULT_HEIGHT)?;
        if width < 8 || height < 8 {
            return Err(ScriptError(format!("camera resolution {width}x{height} below 8x8")));
        }
        Ok(Self::new(width, height))
    }
}

impl EngineScript for CameraEngine {
    fn initialize(&mut self, registry: &mut Registry) -> Result<(), ScriptError> {
        registry.register(CAMERA_DATAPACK, PayloadKind::CameraFrame)?;
        if !self.width.is_multiple_of(32) || !self.height.is_multiple_of(32) {
            warn!(
                "camera resolution {}x{} is not a multiple of 32",
                self.width, self.height
            );
        }
        Ok(())
    }

    fn run_loop(&mut self, registry: &mut Registry, _timestep_ns: u64) -> Result<(), ScriptError> {
        let frame = render_frame(self.steps, self.width, self.height);
        self.steps += 1;
        registry.set(CAMERA_DATAPACK, Payload::CameraFrame(frame))?;
        Ok(())
    }
}

/// Consumes `camera_img` and publishes the detection (or an empty pack when
/// nothing was found).
pub struct DetectorEngine {
    detector: Detector,
}

impl DetectorEngine {
    pub fn new(threshold: u8) -> Self {
        Self {
            detector: Detector::new(threshold),
        }
    }

    pub fn from_extra(extra: &Doc) -> Result<Self, ScriptError> {
        let t = extra_u32(extra, "Threshold", DEFAULT_THRESHOLD as u32)?;
        let t = u8::try_from(t).map_err(|_| ScriptError("Threshold must be at most 255".into()))?;
        Ok(Self::new(t))
    }
}

impl EngineScript for DetectorEngine {
    fn initialize(&mut self, registry: &mut Registry) -> Result<(), ScriptError> {
        registry.register(CAMERA_IMG_DATAPACK, PayloadKind::Doc)?;
        let placeholder = crate::doc! {
            "c_imageHeight" => 0i64,
            "c_imageWidth" => 0i64,
            "current_image_frame" => Value::Array(vec![Value::Int(240), Value::Int(320), Value::Int(3)]),
        };
        registry.set(CAMERA_IMG_DATAPACK, Payload::Doc(placeholder))?;
        registry.register(DETECTION_DATAPACK, PayloadKind::Detection)?;
        self.detector.warm_up();
        Ok(())
    }

    fn run_loop(&mut self, registry: &mut Registry, _timestep_ns: u64) -> Result<(), ScriptError> {
        let frame = registry.get(CAMERA_IMG_DATAPACK)?.doc().ok().and_then(frame_from_doc);
        let found = match frame {
            Some(f) => self.detector.detect(&f).map_err(|e| ScriptError(e.to_string()))?,
            None => Vec::new(),
        };
        match found.into_iter().next() {
            Some(d) => registry.set(DETECTION_DATAPACK, Payload::Detection(d))?,
            None => registry.set_empty(DETECTION_DATAPACK)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_frame_length() {
        let f = render_frame(0, 736, 480);
        assert_eq!(f.image_data.len(), 1_059_840);
        assert_eq!(&f.image_data[..3], &[230, 230, 230]);
        assert_eq!(f.dimension_warning(), None);
        assert_eq!(f, render_frame(0, 736, 480));
    }

    #[test]
    fn reshape_indexing() {
        let f = CameraFrame::new(2, 2, 3, (0..12).collect()).unwrap();
        let g = reshape_frame(&f).unwrap();
        assert_eq!(g.pixel(1, 0), &[6, 7, 8]);
        assert_eq!(g.get(1, 1, 2), 11);
        assert_eq!(flatten_grid(&g), f);
    }

    #[test]
    fn truncated_frame_rejected() {
        let f = CameraFrame {
            image_height: 2,
            image_width: 2,
            image_depth: 3,
            image_data: vec![0; 11],
        };
        assert_eq!(
            reshape_frame(&f),
            Err(FrameError::LengthMismatch {
                expected: 12,
                actual: 11
            })
        );
    }

    #[test]
    fn channel_reversal() {
        let f = CameraFrame::new(1, 2, 3, vec![1, 2, 3, 5, 5, 5]).unwrap();
        let g = reverse_channels(&reshape_frame(&f).unwrap()).unwrap();
        assert_eq!(g.pixel(0, 0), &[3, 2, 1]);
        assert_eq!(g.pixel(0, 1), &[5, 5, 5]);

        let gray = CameraFrame::new(1, 1, 1, vec![9]).unwrap();
        assert_eq!(
            reverse_channels(&reshape_frame(&gray).unwrap()),
            Err(FrameError::UnsupportedDepth(1))
        );
    }

    #[test]
    fn detect_step_zero_box() {
        let d = detect_stub(&render_frame(0, 736, 480), 128).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].x_min, d[0].y_min, d[0].x_max, d[0].y_max), (0, 0, 91, 59));
        assert_eq!(d[0].score, 1.0);
    }

    #[test]
    fn dark_and_bright_frames() {
        let dark = CameraFrame::new(8, 8, 3, vec![20; 192]).unwrap();
        assert!(detect_stub(&dark, 128).unwrap().is_empty());
        let bright = CameraFrame::new(8, 16, 3, vec![200; 384]).unwrap();
        let d = detect_stub(&bright, 128).unwrap();
        assert_eq!((d[0].x_min, d[0].y_min, d[0].x_max, d[0].y_max), (0, 0, 15, 7));
        assert_eq!(d[0].score, 1.0);
    }

    #[test]
    fn warm_up_is_observable() {
        let mut det = Detector::new(128);
        assert!(!det.is_warm());
        det.warm_up();
        assert!(det.is_warm());
    }

    #[test]
    fn frame_doc_round_trip() {
        let f = render_frame(3, 64, 32);
        let doc = frame_to_doc(&f);
        assert_eq!(frame_from_doc(&doc), Some(f.clone()));
        let lowered = crate::doc::lower_doc(&doc);
        assert_eq!(frame_from_doc(&lowered), Some(f));
    }

    #[test]
    fn placeholder_doc_is_no_frame() {
        let d = crate::doc! {
            "c_imageHeight" => 0i64,
            "c_imageWidth" => 0i64,
            "current_image_frame" => Value::Array(vec![Value::Int(240)]),
        };
        assert_eq!(frame_from_doc(&d), None);
    }

    #[test]
    fn odd_resolution_warns() {
        assert!(render_frame(0, 100, 40).dimension_warning().is_some());
    }

    #[test]
    fn raster_walk() {
        assert_eq!(target_origin(0, 736, 480), (0, 0));
        assert_eq!(target_origin(1, 736, 480), (92, 0));
        assert_eq!(target_origin(9, 736, 480), (92, 60));
        assert_eq!(target_origin(64, 736, 480), (0, 0));
    }
}
