//! Box-level cross-domain exchange.
//!
//! A host box's pixels are replaced by `β·host + (1−β)·donor`, where the
//! donor box (same class, other domain) is bilinearly resampled to the host
//! box size and `β` is a per-pixel weight map: all zeros (direct), one shared
//! Beta draw (mixture), or a scale-aware Gaussian centred in the box.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use image::Rgb;
use rand::Rng;

use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::geometry::{crop, resize_bilinear, to_u8};
use crate::image_aug::sample_lambda;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    Direct,
    Mixture { beta: f64 },
    Gaussian { sigma_x: f64, sigma_y: f64, mu_x: f64, mu_y: f64 },
}

/// Row-major `height × width` map of blend weights for the host pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub kind: WeightKind,
}

impl WeightMap {
    pub fn direct(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; (width * height) as usize],
            kind: WeightKind::Direct,
        }
    }

    pub fn mixture(width: u32, height: u32, beta: f64) -> Self {
        Self {
            width,
            height,
            values: vec![beta; (width * height) as usize],
            kind: WeightKind::Mixture { beta },
        }
    }

    /// Weight at local column `p`, row `q` (0-based).
    pub fn get(&self, p: u32, q: u32) -> f64 {
        self.values[(q * self.width + p) as usize]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `σx = (w/W)·sqrt(hw/2π)`, `σy = (h/H)·sqrt(hw/2π)`.
pub fn gaussian_sigmas(w: u32, h: u32, image_w: u32, image_h: u32) -> (f64, f64) {
    let root = ((h as f64 * w as f64) / (2.0 * PI)).sqrt();
    (
        w as f64 / image_w as f64 * root,
        h as f64 / image_h as f64 * root,
    )
}

/// `exp(−((p−μx)²/σx² + (q−μy)²/σy²))` at a real-valued local position.
pub fn gaussian_weight(p: f64, q: f64, sigma_x: f64, sigma_y: f64, mu_x: f64, mu_y: f64) -> f64 {
    let dx = (p - mu_x) / sigma_x;
    let dy = (q - mu_y) / sigma_y;
    (-(dx * dx + dy * dy)).exp()
}

/// Scale-aware Gaussian weights for a `w × h` box in a `W × H` image, peaking
/// at 1 in the box centre `((w−1)/2, (h−1)/2)`.
pub fn gaussian_weight_map(w: u32, h: u32, image_w: u32, image_h: u32) -> Result<WeightMap> {
    if w < 2 || h < 2 || w > image_w || h > image_h {
        return Err(Error::Augmentation(format!(
            "gaussian map needs 2 <= w <= W and 2 <= h <= H, got w={w} h={h} W={image_w} H={image_h}"
        )));
    }
    let (sigma_x, sigma_y) = gaussian_sigmas(w, h, image_w, image_h);
    let mu_x = (w as f64 - 1.0) / 2.0;
    let mu_y = (h as f64 - 1.0) / 2.0;
    let mut values = Vec::with_capacity((w * h) as usize);
    for q in 0..h {
        for p in 0..w {
            values.push(gaussian_weight(p as f64, q as f64, sigma_x, sigma_y, mu_x, mu_y));
        }
    }
    Ok(WeightMap {
        width: w,
        height: h,
        values,
        kind: WeightKind::Gaussian {
            sigma_x,
            sigma_y,
            mu_x,
            mu_y,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExchangeMode {
    Direct,
    Mixture { alpha_m: f64 },
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeConfig {
    pub mode: ExchangeMode,
    /// Probability that a host box is exchanged when a partner exists.
    pub p_exchange: f64,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        Self {
            mode: ExchangeMode::Gaussian,
            p_exchange: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxRef {
    pub image: usize,
    pub box_index: usize,
}

/// A host box and the donor box whose content is blended into it.
/// `host.image` is always 0; `donor.image` indexes the donor list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxPair {
    pub host: BoxRef,
    pub donor: BoxRef,
    pub common_w: u32,
    pub common_h: u32,
}

/// Integer pixel region covered by a box.
fn box_region(img: &LabeledImage, box_index: usize) -> (u32, u32, u32, u32) {
    img.labels[box_index]
        .to_pixel_rect(img.width(), img.height())
        .rounded_within(img.width(), img.height())
}

/// Pairs host boxes with same-class donor boxes.
///
/// Each host box that has at least one same-class donor is exchanged with
/// probability `p_exchange`, its partner drawn uniformly from all same-class
/// donor boxes. Host boxes smaller than 2 px on either side are never paired.
pub fn pair_boxes<R: Rng + ?Sized>(
    host: &LabeledImage,
    donors: &[LabeledImage],
    p_exchange: f64,
    rng: &mut R,
) -> Vec<BoxPair> {
    let mut by_class: BTreeMap<usize, Vec<BoxRef>> = BTreeMap::new();
    for (image, donor) in donors.iter().enumerate() {
        for (box_index, label) in donor.labels.iter().enumerate() {
            by_class
                .entry(label.class_id)
                .or_default()
                .push(BoxRef { image, box_index });
        }
    }
    let mut pairs = Vec::new();
    for (box_index, label) in host.labels.iter().enumerate() {
        let Some(candidates) = by_class.get(&label.class_id) else {
            continue;
        };
        if !rng.random_bool(p_exchange.clamp(0.0, 1.0)) {
            continue;
        }
        let donor = candidates[rng.random_range(0..candidates.len())];
        let (x0, y0, x1, y1) = box_region(host, box_index);
        let (common_w, common_h) = (x1 - x0, y1 - y0);
        if common_w < 2 || common_h < 2 {
            continue;
        }
        pairs.push(BoxPair {
            host: BoxRef { image: 0, box_index },
            donor,
            common_w,
            common_h,
        });
    }
    pairs
}

/// Blends the donor box into the host box in place and updates the host
/// box's confidence with the mean weight. Returns the weight map used.
pub fn exchange<R: Rng + ?Sized>(
    host: &mut LabeledImage,
    donors: &[LabeledImage],
    pair: &BoxPair,
    mode: ExchangeMode,
    rng: &mut R,
) -> Result<WeightMap> {
    let donor_img = donors
        .get(pair.donor.image)
        .ok_or_else(|| Error::Augmentation(format!("donor image {} out of range", pair.donor.image)))?;
    if pair.host.box_index >= host.labels.len() || pair.donor.box_index >= donor_img.labels.len() {
        return Err(Error::Augmentation("box pair refers to a missing box".into()));
    }
    let (hx0, hy0, hx1, hy1) = box_region(host, pair.host.box_index);
    if (hx1 - hx0, hy1 - hy0) != (pair.common_w, pair.common_h) {
        return Err(Error::Augmentation("host box no longer matches the pair's common size".into()));
    }
    let (dx0, dy0, dx1, dy1) = box_region(donor_img, pair.donor.box_index);
    if dx1 <= dx0 || dy1 <= dy0 {
        return Err(Error::Augmentation(format!(
            "donor box {} of '{}' is degenerate",
            pair.donor.box_index, donor_img.id
        )));
    }
    let patch = crop(&donor_img.pixels, dx0, dy0, dx1, dy1);
    let (w, h) = (pair.common_w, pair.common_h);
    let resized = resize_bilinear(&patch, w, h);

    let weights = match mode {
        ExchangeMode::Direct => WeightMap::direct(w, h),
        ExchangeMode::Mixture { alpha_m } => WeightMap::mixture(w, h, sample_lambda(alpha_m, rng)?),
        ExchangeMode::Gaussian => gaussian_weight_map(w, h, host.width(), host.height())?,
    };

    for q in 0..h {
        for p in 0..w {
            let beta = weights.get(p, q);
            let donor_px = resized[(q * w + p) as usize];
            let host_px = host.pixels.get_pixel(hx0 + p, hy0 + q).0;
            let out = Rgb(std::array::from_fn(|c| {
                to_u8(beta * host_px[c] as f64 + (1.0 - beta) * donor_px[c])
            }));
            host.pixels.put_pixel(hx0 + p, hy0 + q, out);
        }
    }

    let beta_bar = weights.mean();
    let donor_conf = &donor_img.labels[pair.donor.box_index].class_conf;
    let host_label = &mut host.labels[pair.host.box_index];
    for (i, c) in host_label.class_conf.iter_mut().enumerate() {
        let d = donor_conf.get(i).copied().unwrap_or(0.0);
        *c = (beta_bar * *c + (1.0 - beta_bar) * d).clamp(0.0, 1.0);
    }
    Ok(weights)
}

/// Pairs and exchanges boxes of `host` against `donors`. Returns the number of
/// exchanged boxes and the number of pairs skipped because they failed.
pub fn apply_exchange<R: Rng + ?Sized>(
    host: &mut LabeledImage,
    donors: &[LabeledImage],
    config: &ExchangeConfig,
    rng: &mut R,
) -> (usize, usize) {
    let pairs = pair_boxes(host, donors, config.p_exchange, rng);
    let mut done = 0;
    let mut skipped = 0;
    for pair in &pairs {
        match exchange(host, donors, pair, config.mode, rng) {
            Ok(_) => done += 1,
            Err(e) => {
                log::debug!("skipping box exchange: {e}");
                skipped += 1;
            }
        }
    }
    (done, skipped)
}
