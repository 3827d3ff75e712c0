//! Three orthogonal views of an intensity volume, side by side.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MllmError;
use crate::taxonomy::Modality;
use crate::volume::Volume;

/// How each view is reduced from the volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    #[default]
    MidSlice,
    Max,
    Mean,
}

pub const DEFAULT_CT_WINDOW: (f64, f64) = (40.0, 400.0);
pub const DEFAULT_PANEL_HEIGHT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub modality: Modality,
    /// `(center, width)`. `None` uses 40/400 for CT and 1st-99th
    /// percentile scaling for MR.
    pub window: Option<(f64, f64)>,
    pub projection: Projection,
    pub panel_height: usize,
}

impl RenderOptions {
    pub fn new(modality: Modality) -> Self {
        RenderOptions {
            modality,
            window: None,
            projection: Projection::MidSlice,
            panel_height: DEFAULT_PANEL_HEIGHT,
        }
    }

    fn effective_window(&self) -> Option<(f64, f64)> {
        match (self.window, self.modality) {
            (Some(w), _) => Some(w),
            (None, Modality::Ct) => Some(DEFAULT_CT_WINDOW),
            (None, Modality::Mr) => None,
        }
    }
}

/// A single view before normalization. Row 0 is the top of the picture.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Physical size of one pixel `(horizontal, vertical)` in mm.
    pub pixel_mm: (f64, f64),
}

impl Panel {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn physical_size_mm(&self) -> (f64, f64) {
        (self.width as f64 * self.pixel_mm.0, self.height as f64 * self.pixel_mm.1)
    }
}

/// 8-bit grayscale composite of the axial, sagittal and coronal views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, one byte per pixel.
    pub pixels: Vec<u8>,
    /// Left edge of each panel.
    pub panel_offsets: [usize; 3],
}

impl CompositeImage {
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn panel_width(&self, panel: usize) -> usize {
        let end = if panel == 2 { self.width } else { self.panel_offsets[panel + 1] };
        end - self.panel_offsets[panel]
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("in-memory PNG header");
            w.write_image_data(&self.pixels).expect("in-memory PNG data");
        }
        out
    }

    pub fn write_png(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_png())
    }

    /// Stable fingerprint of size and pixels.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        (self.width, self.height, &self.pixels).hash(&mut h);
        h.finish()
    }
}

fn reduce(values: impl Iterator<Item = f64>, projection: Projection) -> f64 {
    match projection {
        Projection::MidSlice => unreachable!("mid-slice is not a reduction"),
        Projection::Max => values.fold(f64::NEG_INFINITY, f64::max),
        Projection::Mean => {
            let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            sum / n as f64
        }
    }
}

/// Extracts axial, sagittal and coronal panels from a canonical volume.
///
/// Axial: rows run anterior to posterior, columns along x. Sagittal: rows
/// run superior to inferior, columns along y. Coronal: rows superior to
/// inferior, columns along x.
pub fn extract_panels(volume: &Volume, projection: Projection) -> Result<[Panel; 3], MllmError> {
    let data = volume.intensities().ok_or(MllmError::NotIntensity)?;
    let [nx, ny, nz] = volume.dims();
    for (axis, &n) in volume.dims().iter().enumerate() {
        if n < 2 {
            return Err(MllmError::DegenerateAxis { axis, len: n });
        }
    }
    let [sx, sy, sz] = volume.spacing();
    let at = |i: usize, j: usize, k: usize| data[i + nx * (j + ny * k)];
    let pick = |n: usize, line: &dyn Fn(usize) -> f64| match projection {
        Projection::MidSlice => line(n / 2),
        p => reduce((0..n).map(line), p),
    };

    let mut axial = Vec::with_capacity(nx * ny);
    for r in 0..ny {
        let j = ny - 1 - r;
        for i in 0..nx {
            axial.push(pick(nz, &|k| at(i, j, k)));
        }
    }
    let mut sagittal = Vec::with_capacity(ny * nz);
    let mut coronal = Vec::with_capacity(nx * nz);
    for r in 0..nz {
        let k = nz - 1 - r;
        for j in 0..ny {
            sagittal.push(pick(nx, &|i| at(i, j, k)));
        }
        for i in 0..nx {
            coronal.push(pick(ny, &|j| at(i, j, k)));
        }
    }
    Ok([
        Panel { width: nx, height: ny, values: axial, pixel_mm: (sx, sy) },
        Panel { width: ny, height: nz, values: sagittal, pixel_mm: (sy, sz) },
        Panel { width: nx, height: nz, values: coronal, pixel_mm: (sx, sz) },
    ])
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Maps a panel to bytes using a fixed window or percentile scaling.
pub fn normalize_panel(panel: &Panel, window: Option<(f64, f64)>) -> Vec<u8> {
    let (lo, hi) = match window {
        Some((c, w)) => (c - w / 2.0, c + w / 2.0),
        None => {
            let mut v = panel.values.clone();
            v.sort_by(f64::total_cmp);
            (percentile(&v, 1.0), percentile(&v, 99.0))
        }
    };
    if hi <= lo {
        return vec![128; panel.values.len()];
    }
    panel
        .values
        .iter()
        .map(|&x| (((x - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Resamples bytes to `height` rows keeping the physical aspect ratio.
fn resize(panel: &Panel, bytes: &[u8], height: usize) -> (usize, Vec<u8>) {
    let (w_mm, h_mm) = panel.physical_size_mm();
    let width = ((height as f64 * w_mm / h_mm).round() as usize).max(1);
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let sr = r * panel.height / height;
        for c in 0..width {
            let sc = c * panel.width / width;
            out.push(bytes[sr * panel.width + sc]);
        }
    }
    (width, out)
}

/// Renders the composite image of a canonical intensity volume.
pub fn render_views(volume: &Volume, options: &RenderOptions) -> Result<CompositeImage, MllmError> {
    let panels = extract_panels(volume, options.projection)?;
    let height = options.panel_height.max(1);
    let window = options.effective_window();
    let scaled: Vec<(usize, Vec<u8>)> = panels
        .iter()
        .map(|p| resize(p, &normalize_panel(p, window), height))
        .collect();
    let width: usize = scaled.iter().map(|s| s.0).sum();
    let mut pixels = vec![0u8; width * height];
    let mut offsets = [0usize; 3];
    let mut x0 = 0;
    for (n, (w, data)) in scaled.iter().enumerate() {
        offsets[n] = x0;
        for r in 0..height {
            pixels[r * width + x0..r * width + x0 + w].copy_from_slice(&data[r * w..(r + 1) * w]);
        }
        x0 += w;
    }
    Ok(CompositeImage { width, height, pixels, panel_offsets: offsets })
}
