//! Pixel-space rectangles, axis-aligned affine maps and the resamplers that
//! move rasters through them.
//!
//! Pixel coordinates are continuous: pixel `(x, y)` covers `[x, x+1) × [y, y+1)`.
//! Every raster transform in the crate goes through [`composite_area`], which
//! computes each output pixel as the exact area average of the source pixels
//! under it. Labels are mapped with the same [`AxisAffine`], so a box edge and
//! the painted content under it stay aligned to sub-pixel accuracy.

use image::{Rgb, RgbImage};

/// Axis-aligned rectangle in continuous pixel coordinates, `x0 <= x1`, `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelRect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new(0.0, 0.0, width, height)
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn intersect(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        }
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    pub fn iou(&self, other: &PixelRect) -> f64 {
        let inter = self.intersect(other);
        let inter_area = if inter.is_empty() { 0.0 } else { inter.area() };
        let union = self.area() + other.area() - inter_area;
        if union <= 0.0 {
            0.0
        } else {
            inter_area / union
        }
    }

    pub fn scaled(&self, factor: f64) -> PixelRect {
        PixelRect::new(
            self.x0 * factor,
            self.y0 * factor,
            self.x1 * factor,
            self.y1 * factor,
        )
    }

    /// Integer pixel bounds obtained by rounding each edge, clamped to `[0, w] × [0, h]`.
    pub fn rounded_within(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let clamp = |v: f64, hi: u32| v.round().clamp(0.0, hi as f64) as u32;
        (
            clamp(self.x0, width),
            clamp(self.y0, height),
            clamp(self.x1, width),
            clamp(self.y1, height),
        )
    }
}

/// `x' = scale_x * x + offset_x`, `y' = scale_y * y + offset_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAffine {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl AxisAffine {
    pub fn new(scale_x: f64, scale_y: f64, offset_x: f64, offset_y: f64) -> Self {
        Self {
            scale_x,
            scale_y,
            offset_x,
            offset_y,
        }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 1.0, 0.0, 0.0)
    }

    pub fn map_point(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.scale_x * x + self.offset_x,
            self.scale_y * y + self.offset_y,
        )
    }

    /// Maps a rectangle through its corner points.
    pub fn map_rect(&self, rect: &PixelRect) -> PixelRect {
        let (ax, ay) = self.map_point(rect.x0, rect.y0);
        let (bx, by) = self.map_point(rect.x1, rect.y1);
        PixelRect::new(ax.min(bx), ay.min(by), ax.max(bx), ay.max(by))
    }

    /// Composition `other ∘ self`: apply `self` first, then `other`.
    pub fn then(&self, other: &AxisAffine) -> AxisAffine {
        AxisAffine {
            scale_x: other.scale_x * self.scale_x,
            scale_y: other.scale_y * self.scale_y,
            offset_x: other.scale_x * self.offset_x + other.offset_x,
            offset_y: other.scale_y * self.offset_y + other.offset_y,
        }
    }
}

/// Per-output-index list of `(source index, overlap length)` along one axis.
fn axis_weights(
    out_len: u32,
    src_len: u32,
    scale: f64,
    offset: f64,
    clip_lo: f64,
    clip_hi: f64,
) -> Vec<Vec<(u32, f64)>> {
    let mut weights = vec![Vec::new(); out_len as usize];
    let src_lo = offset;
    let src_hi = offset + scale * src_len as f64;
    let lo = clip_lo.max(src_lo).max(0.0);
    let hi = clip_hi.min(src_hi).min(out_len as f64);
    if hi <= lo {
        return weights;
    }
    let first = lo.floor() as u32;
    let last = (hi.ceil() as u32).min(out_len);
    for o in first..last {
        let a = (o as f64).max(lo);
        let b = ((o + 1) as f64).min(hi);
        if b <= a {
            continue;
        }
        let s_first = (((a - offset) / scale).floor().max(0.0)) as u32;
        let s_last = ((((b - offset) / scale).ceil()) as u32).min(src_len);
        let entry = &mut weights[o as usize];
        for s in s_first..s_last {
            let cell_lo = offset + scale * s as f64;
            let cell_hi = offset + scale * (s + 1) as f64;
            let overlap = b.min(cell_hi) - a.max(cell_lo);
            if overlap > 0.0 {
                entry.push((s, overlap));
            }
        }
    }
    weights
}

/// Float accumulation canvas for area compositing. Several sources with
/// disjoint clip regions can share edge pixels; their coverage adds up and the
/// background only fills what is left when the canvas is finished.
#[derive(Debug, Clone)]
pub struct AreaCanvas {
    width: u32,
    height: u32,
    sum: Vec<[f64; 3]>,
    cov: Vec<f64>,
}

impl AreaCanvas {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            sum: vec![[0.0; 3]; n],
            cov: vec![0.0; n],
        }
    }

    /// Adds the exact area-weighted content of `src` mapped through `map` and
    /// restricted to `clip`.
    pub fn draw(&mut self, src: &RgbImage, map: &AxisAffine, clip: &PixelRect) {
        let (dw, dh) = (self.width, self.height);
        let (sw, sh) = src.dimensions();
        if sw == 0 || sh == 0 || clip.is_empty() {
            return;
        }
        let wx = axis_weights(dw, sw, map.scale_x, map.offset_x, clip.x0, clip.x1);
        let wy = axis_weights(dh, sh, map.scale_y, map.offset_y, clip.y0, clip.y1);

        let cols: Vec<u32> = (0..dw).filter(|&x| !wx[x as usize].is_empty()).collect();
        let Some(row_min) = wy.iter().flatten().map(|&(r, _)| r).min() else {
            return;
        };
        let row_max = wy.iter().flatten().map(|&(r, _)| r).max().unwrap_or(row_min);
        if cols.is_empty() {
            return;
        }

        // Horizontal pass for every source row that contributes.
        let n_cols = cols.len();
        let mut horiz = vec![[0.0f64; 3]; (row_max - row_min + 1) as usize * n_cols];
        for r in row_min..=row_max {
            let base = (r - row_min) as usize * n_cols;
            for (ci, &x) in cols.iter().enumerate() {
                let mut acc = [0.0f64; 3];
                for &(s, w) in &wx[x as usize] {
                    let p = src.get_pixel(s, r).0;
                    acc[0] += w * p[0] as f64;
                    acc[1] += w * p[1] as f64;
                    acc[2] += w * p[2] as f64;
                }
                horiz[base + ci] = acc;
            }
        }
        let cov_x: Vec<f64> = cols
            .iter()
            .map(|&x| wx[x as usize].iter().map(|&(_, w)| w).sum())
            .collect();

        for y in 0..dh {
            let row_weights = &wy[y as usize];
            if row_weights.is_empty() {
                continue;
            }
            let cov_y: f64 = row_weights.iter().map(|&(_, w)| w).sum();
            for (ci, &x) in cols.iter().enumerate() {
                let i = y as usize * dw as usize + x as usize;
                for &(r, w) in row_weights {
                    let h = horiz[(r - row_min) as usize * n_cols + ci];
                    for c in 0..3 {
                        self.sum[i][c] += w * h[c];
                    }
                }
                self.cov[i] += cov_x[ci] * cov_y;
            }
        }
    }

    /// Blends the accumulated content over `background`.
    pub fn finish_over(&self, background: &mut RgbImage) {
        for (i, (sum, cov)) in self.sum.iter().zip(&self.cov).enumerate() {
            if *cov <= 0.0 {
                continue;
            }
            let (x, y) = (i as u32 % self.width, i as u32 / self.width);
            let keep = (1.0 - cov).max(0.0);
            let old = background.get_pixel(x, y).0;
            background.put_pixel(
                x,
                y,
                Rgb([
                    to_u8(sum[0] + keep * old[0] as f64),
                    to_u8(sum[1] + keep * old[1] as f64),
                    to_u8(sum[2] + keep * old[2] as f64),
                ]),
            );
        }
    }

    /// Converts to an image, filling uncovered area with `fill`.
    pub fn finish(&self, fill: [u8; 3]) -> RgbImage {
        let mut out = RgbImage::from_pixel(self.width, self.height, Rgb(fill));
        self.finish_over(&mut out);
        out
    }
}

/// Draws `src` onto `dst` through `map`, restricted to `clip` (in `dst` pixel
/// coordinates). Each destination pixel becomes the exact area average of the
/// mapped source content covering it; any uncovered fraction of the pixel
/// keeps its previous value.
pub fn composite_area(dst: &mut RgbImage, src: &RgbImage, map: &AxisAffine, clip: &PixelRect) {
    let (dw, dh) = dst.dimensions();
    let mut canvas = AreaCanvas::new(dw, dh);
    canvas.draw(src, map, clip);
    canvas.finish_over(dst);
}

pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Resamples `src` to `width × height` with bilinear interpolation at pixel
/// centres. Returns row-major float RGB values.
pub fn resize_bilinear(src: &RgbImage, width: u32, height: u32) -> Vec<[f64; 3]> {
    let (sw, sh) = src.dimensions();
    let mut out = Vec::with_capacity((width * height) as usize);
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let coord = |o: u32, scale: f64, len: u32| -> (u32, u32, f64) {
        let u = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = u.floor() as u32;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, u - i0 as f64)
    };
    for y in 0..height {
        let (y0, y1, fy) = coord(y, sy, sh);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, sx, sw);
            let p00 = src.get_pixel(x0, y0).0;
            let p10 = src.get_pixel(x1, y0).0;
            let p01 = src.get_pixel(x0, y1).0;
            let p11 = src.get_pixel(x1, y1).0;
            let mut v = [0.0; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                v[c] = top * (1.0 - fy) + bottom * fy;
            }
            out.push(v);
        }
    }
    out
}

/// Copies the integer pixel region `[x0, x1) × [y0, y1)`.
pub fn crop(src: &RgbImage, x0: u32, y0: u32, x1: u32, y1: u32) -> RgbImage {
    image::imageops::crop_imm(src, x0, y0, x1 - x0, y1 - y0).to_image()
}
