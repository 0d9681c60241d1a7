#![allow(dead_code)]

use domaug::{BoxLabel, DatasetSplit, DomainTag, LabeledImage, RgbImage, SplitRole};
use image::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: usize = 3;
const CLASS_COLORS: [[u8; 3]; CLASSES] = [[200, 40, 40], [40, 160, 60], [50, 70, 210]];

pub fn class_names() -> Vec<String> {
    (0..CLASSES).map(|i| format!("class{i}")).collect()
}

/// Integer-aligned box `[x0, x1) × [y0, y1)` as a normalised label.
pub fn pixel_box(class: usize, x0: u32, y0: u32, x1: u32, y1: u32, w: u32, h: u32) -> BoxLabel {
    let (w, h) = (w as f64, h as f64);
    BoxLabel::one_hot(
        class,
        CLASSES,
        (x0 + x1) as f64 / 2.0 / w,
        (y0 + y1) as f64 / 2.0 / h,
        (x1 - x0) as f64 / w,
        (y1 - y0) as f64 / h,
    )
}

/// A scene with a uniform-ish background and 1..=3 solid rectangles drawn in
/// their class colour. Rectangles are integer aligned.
pub fn scene(rng: &mut impl Rng, id: String, w: u32, h: u32, background: [u8; 3], domain: DomainTag) -> LabeledImage {
    let mut px = RgbImage::from_fn(w, h, |_, _| {
        let n = rng.random_range(0..12) as u8;
        Rgb(background.map(|c| c.saturating_add(n)))
    });
    let mut labels = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let class = rng.random_range(0..CLASSES);
        let bw = rng.random_range(w / 6..=w / 2);
        let bh = rng.random_range(h / 6..=h / 2);
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                px.put_pixel(x, y, Rgb(CLASS_COLORS[class]));
            }
        }
        labels.push(pixel_box(class, x0, y0, x0 + bw, y0 + bh, w, h));
    }
    LabeledImage::new(id, px, labels, domain)
}

fn random_dims(rng: &mut impl Rng, lo: u32, hi: u32) -> (u32, u32) {
    (rng.random_range(lo..=hi), rng.random_range(lo..=hi))
}

/// Bright source scenes.
pub fn source_split(n: usize, seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..n)
        .map(|i| {
            let (w, h) = random_dims(&mut rng, 64, 128);
            let bg = [rng.random_range(200..=235), rng.random_range(200..=235), rng.random_range(190..=225)];
            scene(&mut rng, format!("src_{i:04}"), w, h, bg, DomainTag::Source)
        })
        .collect();
    DatasetSplit {
        images,
        role: SplitRole::Source,
        category_names: class_names(),
    }
}

/// Dark, fog-tinted version of a bright scene.
pub fn fog(img: &LabeledImage) -> LabeledImage {
    let mut out = img.clone();
    for p in out.pixels.pixels_mut() {
        p.0 = p.0.map(|c| (c as f64 * 0.3 + 60.0 * 0.5 + 10.0).round() as u8);
        p.0[2] = p.0[2].saturating_add(12);
    }
    out
}

/// Dark, foggy target scenes.
pub fn target_split(n: usize, seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a7a);
    let images = (0..n)
        .map(|i| {
            let (w, h) = random_dims(&mut rng, 64, 128);
            let bg = [rng.random_range(200..=235), rng.random_range(200..=235), rng.random_range(190..=225)];
            let mut img = fog(&scene(&mut rng, format!("tgt_{i:02}"), w, h, bg, DomainTag::Target));
            img.domain = DomainTag::Target;
            img
        })
        .collect();
    DatasetSplit {
        images,
        role: SplitRole::Target,
        category_names: class_names(),
    }
}

pub fn solid(id: &str, w: u32, h: u32, v: [u8; 3], domain: DomainTag) -> LabeledImage {
    LabeledImage::new(id, RgbImage::from_pixel(w, h, Rgb(v)), Vec::new(), domain)
}

/// Bounding rectangle of a painted region recovered from a difference image
/// whose values are `255 × coverage`. Returns `(x0, y0, x1, y1, area)` with
/// sub-pixel edges taken from the fractional coverage of the border pixels.
///
/// The column profile of an axis-aligned rectangle is `fx(j)·H` and the row
/// profile `fy(i)·W`; a fully covered interior column (or row) pins `H` (or
/// `W`), and the painted total `W·H` gives the other.
pub fn marker_rect(diff: &[f64], w: u32, h: u32) -> Option<(f64, f64, f64, f64, f64)> {
    let (w, h) = (w as usize, h as usize);
    let mut col = vec![0.0; w];
    let mut row = vec![0.0; h];
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = diff[y * w + x] / 255.0;
            col[x] += v;
            row[y] += v;
            total += v;
        }
    }
    if total <= 0.0 {
        return None;
    }
    let span = |p: &[f64]| -> Option<(usize, usize)> {
        Some((p.iter().position(|&v| v > 0.0)?, p.iter().rposition(|&v| v > 0.0)?))
    };
    let (cx0, cx1) = span(&col)?;
    let (ry0, ry1) = span(&row)?;
    let peak = |p: &[f64]| p.iter().cloned().fold(0.0, f64::max);
    let (bw, bh) = if cx1 - cx0 >= 2 {
        let bh = peak(&col);
        (total / bh, bh)
    } else if ry1 - ry0 >= 2 {
        let bw = peak(&row);
        (bw, total / bw)
    } else {
        (peak(&row), peak(&col))
    };
    let edges = |p: &[f64], first: usize, last: usize, other: f64| -> (f64, f64) {
        let frac = |i: usize| (p[i] / other).min(1.0);
        if first == last {
            (first as f64, first as f64 + frac(first))
        } else {
            (first as f64 + 1.0 - frac(first), last as f64 + frac(last))
        }
    };
    let (x0, x1) = edges(&col, cx0, cx1, bh);
    let (y0, y1) = edges(&row, ry0, ry1, bw);
    Some((x0, y0, x1, y1, total))
}

pub fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let iw = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let ih = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let inter = iw * ih;
    let union = (a.2 - a.0) * (a.3 - a.1) + (b.2 - b.0) * (b.3 - b.1) - inter;
    inter / union
}

/// `a − b` per pixel on the first channel.
pub fn channel_diff(a: &RgbImage, b: &RgbImage) -> Vec<f64> {
    a.pixels().zip(b.pixels()).map(|(p, q)| p.0[0] as f64 - q.0[0] as f64).collect()
}

/// Outcome of checking one source box of a splice against its painted pixels.
#[derive(Debug, Clone, Copy)]
pub struct MarkerCheck {
    pub kept: bool,
    pub clipped: bool,
    /// Painted area after placement and clipping over the unclipped mapped area.
    pub area_ratio: f64,
    /// IoU of the output label with the painted rectangle, for kept boxes.
    pub iou: Option<f64>,
}

fn blank_of(img: &LabeledImage) -> LabeledImage {
    let mut out = img.clone();
    out.pixels = RgbImage::new(img.width(), img.height());
    out
}

/// Re-renders a splice once per source box with only that box painted and
/// compares the recovered rectangle to the recomputed label. Boxes must be
/// integer aligned in their tiles.
pub fn check_splice_labels(
    tiles: [&LabeledImage; 4],
    center: (f64, f64),
    config: &domaug::image_aug::ImageAugConfig,
) -> Vec<MarkerCheck> {
    use domaug::image_aug::render_splice;
    let side = config.canvas_side;
    let out = render_splice(tiles, center, config);
    let blanks: Vec<LabeledImage> = tiles.iter().map(|t| blank_of(t)).collect();
    let blank_render = render_splice([&blanks[0], &blanks[1], &blanks[2], &blanks[3]], center, config);
    let mut checks = Vec::new();
    for (q, tile) in tiles.iter().enumerate() {
        let scale = out.tiles[q].map.scale_x * 0.5;
        for (i, label) in tile.labels.iter().enumerate() {
            let r = label.to_pixel_rect(tile.width(), tile.height());
            let (x0, y0, x1, y1) = (r.x0.round() as u32, r.y0.round() as u32, r.x1.round() as u32, r.y1.round() as u32);
            let mut marked = blanks.clone();
            for y in y0..y1 {
                for x in x0..x1 {
                    marked[q].pixels.put_pixel(x, y, Rgb([255; 3]));
                }
            }
            let render = render_splice([&marked[0], &marked[1], &marked[2], &marked[3]], center, config);
            let diff = channel_diff(&render.image.pixels, &blank_render.image.pixels);
            let painted = marker_rect(&diff, side, side);
            let mapped_area = (x1 - x0) as f64 * (y1 - y0) as f64 * scale * scale;
            let area_ratio = painted.map_or(0.0, |p| p.4 / mapped_area);
            let found = out
                .box_origins
                .iter()
                .position(|o| o.contribution == q && o.box_index == i);
            let check = match found {
                Some(j) => {
                    let l = out.image.labels[j].to_pixel_rect(side, side);
                    let p = painted.expect("kept box has painted pixels");
                    MarkerCheck {
                        kept: true,
                        clipped: out.box_origins[j].clipped,
                        area_ratio,
                        iou: Some(iou((l.x0, l.y0, l.x1, l.y1), (p.0, p.1, p.2, p.3))),
                    }
                }
                None => MarkerCheck {
                    kept: false,
                    clipped: true,
                    area_ratio,
                    iou: None,
                },
            };
            checks.push(check);
        }
    }
    checks
}

/// A random tile with integer-aligned boxes of assorted sizes.
/// Box sides are at least `min_frac` of the tile's long side.
pub fn random_tile(rng: &mut impl Rng, id: String, domain: DomainTag, min_frac: f64) -> LabeledImage {
    let w = rng.random_range(40..=400);
    let h = rng.random_range(40..=400);
    let min_side = ((w.max(h) as f64 * min_frac).ceil() as u32).max(2);
    let mut px = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 251) as u8, (y * 3 % 241) as u8, 90]));
    let mut labels = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        let bw = rng.random_range(min_side.min(w / 2)..=w / 2);
        let bh = rng.random_range(min_side.min(h / 2)..=h / 2);
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        for y in y0..y0 + bh {
            px.put_pixel(x0, y, Rgb([250, 250, 0]));
        }
        labels.push(pixel_box(rng.random_range(0..CLASSES), x0, y0, x0 + bw, y0 + bh, w, h));
    }
    LabeledImage::new(id, px, labels, domain)
}
