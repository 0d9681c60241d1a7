//! Annotated detection datasets: in-memory types plus the YOLO-style
//! directory format (`images/`, `labels/`, optional `classes.txt`).
//!
//! A label line is either `class cx cy w h` (one-hot confidence) or the
//! extended `class conf cx cy w h`, which stores a soft confidence for the
//! box's class. Coordinates are normalised to the image size.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{composite_area, AxisAffine, PixelRect};

/// Fill value used for letterbox padding and empty mosaic regions.
pub const FILL_VALUE: u8 = 114;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
const CLASSES_FILE: &str = "classes.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainTag {
    Source,
    Target,
    Augmented,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
            DomainTag::Augmented => "augmented",
        }
    }
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(DomainTag::Source),
            "target" => Ok(DomainTag::Target),
            "augmented" => Ok(DomainTag::Augmented),
            other => Err(Error::InvalidDataset(format!("unknown domain tag '{other}'"))),
        }
    }
}

/// Role of a whole split. Augmented splits are what the pipeline emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Source,
    Target,
    Augmented,
}

impl SplitRole {
    pub fn domain_tag(self) -> DomainTag {
        match self {
            SplitRole::Source => DomainTag::Source,
            SplitRole::Target => DomainTag::Target,
            SplitRole::Augmented => DomainTag::Augmented,
        }
    }
}

/// One annotated object.
///
/// `class_id` is the box's nominal class; `class_conf` holds the soft
/// confidence vector over all classes. Augmentations only ever rescale the
/// entry at `class_id`, so the class survives even when its confidence is
/// scaled to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLabel {
    pub class_id: usize,
    pub class_conf: Vec<f64>,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxLabel {
    pub fn one_hot(class_id: usize, num_classes: usize, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::with_confidence(class_id, 1.0, num_classes, cx, cy, w, h)
    }

    pub fn with_confidence(
        class_id: usize,
        confidence: f64,
        num_classes: usize,
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
    ) -> Self {
        let mut class_conf = vec![0.0; num_classes];
        if class_id < num_classes {
            class_conf[class_id] = confidence;
        }
        Self {
            class_id,
            class_conf,
            cx,
            cy,
            w,
            h,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_conf.len()
    }

    /// Confidence of the nominal class.
    pub fn confidence(&self) -> f64 {
        self.class_conf.get(self.class_id).copied().unwrap_or(0.0)
    }

    pub fn is_one_hot(&self) -> bool {
        self.class_conf
            .iter()
            .enumerate()
            .all(|(i, &c)| if i == self.class_id { c == 1.0 } else { c == 0.0 })
    }

    pub fn scale_confidence(&mut self, factor: f64) {
        for c in &mut self.class_conf {
            *c = (*c * factor).clamp(0.0, 1.0);
        }
    }

    pub fn to_pixel_rect(&self, width: u32, height: u32) -> PixelRect {
        let (w, h) = (width as f64, height as f64);
        PixelRect::new(
            (self.cx - self.w / 2.0) * w,
            (self.cy - self.h / 2.0) * h,
            (self.cx + self.w / 2.0) * w,
            (self.cy + self.h / 2.0) * h,
        )
    }

    /// Replaces the geometry with `rect` normalised against `width × height`.
    pub fn set_pixel_rect(&mut self, rect: &PixelRect, width: u32, height: u32) {
        let (w, h) = (width as f64, height as f64);
        self.cx = ((rect.x0 + rect.x1) / 2.0 / w).clamp(0.0, 1.0);
        self.cy = ((rect.y0 + rect.y1) / 2.0 / h).clamp(0.0, 1.0);
        self.w = (rect.width() / w).clamp(0.0, 1.0);
        self.h = (rect.height() / h).clamp(0.0, 1.0);
    }

    /// Checks the label invariants against an image of `width × height`.
    pub fn validate(&self, num_classes: usize, width: u32, height: u32) -> Result<()> {
        if self.class_conf.len() != num_classes {
            return Err(Error::InvalidLabel(format!(
                "class_conf has {} entries, expected {num_classes}",
                self.class_conf.len()
            )));
        }
        if self.class_id >= num_classes {
            return Err(Error::InvalidLabel(format!(
                "class index {} out of range for {num_classes} classes",
                self.class_id
            )));
        }
        if let Some(c) = self.class_conf.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidLabel(format!("confidence {c} out of range")));
        }
        check_geometry(self.cx, self.cy, self.w, self.h, width, height).map_err(Error::InvalidLabel)
    }
}

fn check_geometry(cx: f64, cy: f64, w: f64, h: f64, width: u32, height: u32) -> std::result::Result<(), String> {
    for (name, v) in [("cx", cx), ("cy", cy)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{name} out of range"));
        }
    }
    for (name, v) in [("w", w), ("h", h)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(format!("{name} out of range"));
        }
    }
    // One pixel of slack for rounding in the producer.
    let tol_x = 1.0 / width.max(1) as f64;
    let tol_y = 1.0 / height.max(1) as f64;
    if cx - w / 2.0 < -tol_x || cx + w / 2.0 > 1.0 + tol_x {
        return Err("box extends outside the image horizontally".into());
    }
    if cy - h / 2.0 < -tol_y || cy + h / 2.0 > 1.0 + tol_y {
        return Err("box extends outside the image vertically".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub pixels: RgbImage,
    pub labels: Vec<BoxLabel>,
    pub domain: DomainTag,
}

impl LabeledImage {
    pub fn new(id: impl Into<String>, pixels: RgbImage, labels: Vec<BoxLabel>, domain: DomainTag) -> Self {
        Self {
            id: id.into(),
            pixels,
            labels,
            domain,
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.width() == 0 || self.height() == 0 {
            return Err(Error::InvalidDataset(format!("image '{}' is empty", self.id)));
        }
        for label in &self.labels {
            label
                .validate(num_classes, self.width(), self.height())
                .map_err(|e| Error::InvalidLabel(format!("image '{}': {e}", self.id)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub images: Vec<LabeledImage>,
    pub role: SplitRole,
    pub category_names: Vec<String>,
}

impl DatasetSplit {
    pub fn num_classes(&self) -> usize {
        self.category_names.len()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let tag = self.role.domain_tag();
        for img in &self.images {
            if img.domain != tag {
                return Err(Error::InvalidDataset(format!(
                    "image '{}' is tagged {} in a {} split",
                    img.id, img.domain, tag
                )));
            }
            img.validate(self.num_classes())?;
        }
        Ok(())
    }
}

/// A label line before the class count is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRecord {
    pub class_id: usize,
    pub confidence: Option<f64>,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Parses one label line. Blank lines yield `Ok(None)`.
pub fn parse_label_line(line: &str) -> std::result::Result<Option<LabelRecord>, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.is_empty() {
        return Ok(None);
    }
    if tokens.len() != 5 && tokens.len() != 6 {
        return Err(format!("expected 5 or 6 fields, found {}", tokens.len()));
    }
    let class_id: usize = tokens[0]
        .parse()
        .map_err(|_| format!("invalid class index '{}'", tokens[0]))?;
    let mut values = Vec::with_capacity(5);
    for tok in &tokens[1..] {
        let v: f64 = tok.parse().map_err(|_| format!("invalid number '{tok}'"))?;
        if !v.is_finite() {
            return Err(format!("non-finite value '{tok}'"));
        }
        values.push(v);
    }
    let (confidence, geom) = if values.len() == 5 {
        (Some(values[0]), &values[1..])
    } else {
        (None, &values[..])
    };
    if let Some(c) = confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err("confidence out of range".into());
        }
    }
    let (cx, cy, w, h) = (geom[0], geom[1], geom[2], geom[3]);
    for (name, v) in [("cx", cx), ("cy", cy)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{name} out of range"));
        }
    }
    for (name, v) in [("w", w), ("h", h)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(format!("{name} out of range"));
        }
    }
    Ok(Some(LabelRecord {
        class_id,
        confidence,
        cx,
        cy,
        w,
        h,
    }))
}

impl LabelRecord {
    pub fn into_box(self, num_classes: usize) -> BoxLabel {
        BoxLabel::with_confidence(
            self.class_id,
            self.confidence.unwrap_or(1.0),
            num_classes,
            self.cx,
            self.cy,
            self.w,
            self.h,
        )
    }
}

/// Formats a label as a 5-field line when one-hot, otherwise as the 6-field
/// soft-confidence line. Fails when confidence mass sits outside the nominal
/// class, which the line format cannot represent.
pub fn format_label_line(label: &BoxLabel) -> Result<String> {
    if label
        .class_conf
        .iter()
        .enumerate()
        .any(|(i, &c)| i != label.class_id && c != 0.0)
    {
        return Err(Error::InvalidLabel(format!(
            "class {} box carries confidence on other classes; not representable",
            label.class_id
        )));
    }
    let mut line = String::new();
    write!(line, "{}", label.class_id).unwrap();
    if !label.is_one_hot() {
        write!(line, " {}", fmt_coord(label.confidence())).unwrap();
    }
    for v in [label.cx, label.cy, label.w, label.h] {
        write!(line, " {}", fmt_coord(v)).unwrap();
    }
    Ok(line)
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.6}")
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        paths.push(entry.path());
    }
    paths.sort();
    Ok(paths)
}

fn read_classes(root: &Path) -> Result<Option<Vec<String>>> {
    let path = root.join(CLASSES_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(Error::InvalidDataset(format!("{} lists no classes", path.display())));
    }
    Ok(Some(names))
}

/// Loads a dataset directory laid out as `images/` + `labels/`.
///
/// Class names come from `classes.txt` when present; otherwise the class
/// count is inferred as one past the largest class index seen and names are
/// generated.
pub fn load_dataset(root: &Path, role: SplitRole) -> Result<DatasetSplit> {
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    for dir in [&images_dir, &labels_dir] {
        if !dir.is_dir() {
            return Err(Error::InvalidDataset(format!("{} is not a directory", dir.display())));
        }
    }

    let image_paths: Vec<PathBuf> = read_dir_sorted(&images_dir)?
        .into_iter()
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    let mut stems = BTreeSet::new();
    let mut jobs = Vec::with_capacity(image_paths.len());
    for path in image_paths {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidDataset(format!("unreadable file name {}", path.display())))?
            .to_string();
        if !stems.insert(stem.clone()) {
            return Err(Error::InvalidDataset(format!("duplicate image stem '{stem}'")));
        }
        let label_path = labels_dir.join(format!("{stem}.txt"));
        if !label_path.is_file() {
            return Err(Error::MissingLabel {
                root: root.to_path_buf(),
                stem,
            });
        }
        jobs.push((stem, path, label_path));
    }

    let loaded: Vec<(String, RgbImage, PathBuf, Vec<(usize, LabelRecord)>)> = jobs
        .into_par_iter()
        .map(|(stem, image_path, label_path)| {
            let text = fs::read_to_string(&label_path).map_err(|e| Error::io(&label_path, e))?;
            let mut records = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                match parse_label_line(line) {
                    Ok(Some(rec)) => records.push((idx + 1, rec)),
                    Ok(None) => {}
                    Err(message) => {
                        return Err(Error::LabelParse {
                            path: label_path.clone(),
                            line: idx + 1,
                            message,
                        })
                    }
                }
            }
            let pixels = image::open(&image_path)
                .map_err(|source| Error::Image {
                    path: image_path.clone(),
                    source,
                })?
                .to_rgb8();
            Ok((stem, pixels, label_path, records))
        })
        .collect::<Result<_>>()?;

    let category_names = match read_classes(root)? {
        Some(names) => names,
        None => {
            let max_class = loaded
                .iter()
                .flat_map(|(_, _, _, recs)| recs.iter().map(|(_, r)| r.class_id))
                .max();
            (0..max_class.map_or(1, |m| m + 1))
                .map(|i| format!("class{i}"))
                .collect()
        }
    };
    let num_classes = category_names.len();
    let tag = role.domain_tag();

    let mut images = Vec::with_capacity(loaded.len());
    for (stem, pixels, label_path, records) in loaded {
        let (width, height) = pixels.dimensions();
        let mut labels = Vec::with_capacity(records.len());
        for (line, rec) in records {
            if rec.class_id >= num_classes {
                return Err(Error::LabelParse {
                    path: label_path,
                    line,
                    message: format!("class index {} out of range for {num_classes} classes", rec.class_id),
                });
            }
            if let Err(message) = check_geometry(rec.cx, rec.cy, rec.w, rec.h, width, height) {
                return Err(Error::LabelParse {
                    path: label_path,
                    line,
                    message,
                });
            }
            labels.push(rec.into_box(num_classes));
        }
        images.push(LabeledImage::new(stem, pixels, labels, tag));
    }

    Ok(DatasetSplit {
        images,
        role,
        category_names,
    })
}

/// Writes `split` under `root` as PNG images, label files and `classes.txt`.
/// Returns the number of images written.
pub fn save_dataset(split: &DatasetSplit, root: &Path) -> Result<usize> {
    split.validate()?;
    let images_dir = root.join("images");
    let labels_dir = root.join("labels");
    for dir in [&images_dir, &labels_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let classes_path = root.join(CLASSES_FILE);
    let mut classes = split.category_names.join("\n");
    classes.push('\n');
    fs::write(&classes_path, classes).map_err(|e| Error::io(&classes_path, e))?;

    split.images.par_iter().try_for_each(|img| {
        let mut text = String::new();
        for label in &img.labels {
            text.push_str(&format_label_line(label)?);
            text.push('\n');
        }
        let label_path = labels_dir.join(format!("{}.txt", img.id));
        fs::write(&label_path, text).map_err(|e| Error::io(&label_path, e))?;
        let image_path = images_dir.join(format!("{}.png", img.id));
        img.pixels
            .save_with_format(&image_path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: image_path.clone(),
                source,
            })
    })?;
    Ok(split.images.len())
}

/// Maps one label through `map` into a `dst_w × dst_h` image, clipping to
/// `clip` (destination pixels).
///
/// Returns `None` when the clipped box keeps less than `min_area_ratio` of its
/// unclipped mapped area or is narrower than one pixel on either axis.
pub fn remap_label(
    label: &BoxLabel,
    src_dims: (u32, u32),
    map: &AxisAffine,
    clip: &PixelRect,
    dst_dims: (u32, u32),
    min_area_ratio: f64,
) -> Option<(BoxLabel, bool)> {
    let mapped = map.map_rect(&label.to_pixel_rect(src_dims.0, src_dims.1));
    let clipped = mapped.intersect(clip);
    if clipped.is_empty() {
        return None;
    }
    let was_clipped = clipped != mapped;
    if was_clipped && clipped.area() < min_area_ratio * mapped.area() {
        return None;
    }
    if clipped.width() < 1.0 || clipped.height() < 1.0 {
        return None;
    }
    let mut out = label.clone();
    out.set_pixel_rect(&clipped, dst_dims.0, dst_dims.1);
    Some((out, was_clipped))
}

/// Result of [`resize_letterbox`].
#[derive(Debug, Clone)]
pub struct Letterboxed {
    pub image: LabeledImage,
    /// Boxes that fell below one pixel after resizing.
    pub dropped: usize,
}

/// The placement used by [`resize_letterbox`] for an image of `width × height`.
pub fn letterbox_placement(width: u32, height: u32, side: u32) -> AxisAffine {
    let scale = side as f64 / width.max(height) as f64;
    let pad_x = (side as f64 - width as f64 * scale) / 2.0;
    let pad_y = (side as f64 - height as f64 * scale) / 2.0;
    AxisAffine::new(scale, scale, pad_x, pad_y)
}

/// Resizes to `side × side` preserving aspect ratio, padding both sides
/// symmetrically with [`FILL_VALUE`], and remaps the labels.
pub fn resize_letterbox(img: &LabeledImage, side: u32) -> Result<Letterboxed> {
    if side < 2 {
        return Err(Error::Config(format!("letterbox side must be >= 2, got {side}")));
    }
    if img.width() == side && img.height() == side {
        return Ok(Letterboxed {
            image: img.clone(),
            dropped: 0,
        });
    }
    let map = letterbox_placement(img.width(), img.height(), side);
    let mut canvas = RgbImage::from_pixel(side, side, Rgb([FILL_VALUE; 3]));
    let full = PixelRect::from_size(side as f64, side as f64);
    composite_area(&mut canvas, &img.pixels, &map, &full);

    let mut dropped = 0;
    let mut labels = Vec::with_capacity(img.labels.len());
    for label in &img.labels {
        match remap_label(label, (img.width(), img.height()), &map, &full, (side, side), 0.0) {
            Some((l, _)) => labels.push(l),
            None => dropped += 1,
        }
    }
    Ok(Letterboxed {
        image: LabeledImage::new(img.id.clone(), canvas, labels, img.domain),
        dropped,
    })
}
