//! Image-level cross-domain augmentation.
//!
//! *Splice* tiles `m` source and `n` target images (`m + n = 4`, both at
//! least one) into a 2×2 mosaic around a jittered centre. *Reallocation*
//! blends one source and one target image with `λ ~ Beta(α, α)` and scales
//! each side's box confidences by its weight. The two compose: reallocation
//! of two independent splice mosaics.

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::dataset::{remap_label, resize_letterbox, DomainTag, LabeledImage, FILL_VALUE};
use crate::error::{Error, Result};
use crate::geometry::{to_u8, AreaCanvas, AxisAffine, PixelRect};

/// Placement of one mosaic tile on the working canvas: the affine map from
/// tile pixels to canvas pixels plus the canvas region the tile may occupy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilePlacement {
    pub map: AxisAffine,
    pub crop: PixelRect,
}

impl TilePlacement {
    pub fn new(scale_x: f64, scale_y: f64, offset_x: f64, offset_y: f64, crop: PixelRect) -> Self {
        Self {
            map: AxisAffine::new(scale_x, scale_y, offset_x, offset_y),
            crop,
        }
    }

    /// Maps a tile-space box to canvas space through its corners.
    pub fn map_box(&self, rect: &PixelRect) -> PixelRect {
        self.map.map_rect(rect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Recipe {
    Splice,
    Reallocation,
    SpliceReallocation,
}

impl Recipe {
    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::Splice => "splice",
            Recipe::Reallocation => "reallocation",
            Recipe::SpliceReallocation => "splice_reallocation",
        }
    }
}

impl std::fmt::Display for Recipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "splice" => Ok(Recipe::Splice),
            "reallocation" => Ok(Recipe::Reallocation),
            "splice_reallocation" => Ok(Recipe::SpliceReallocation),
            other => Err(Error::InvalidDataset(format!("unknown recipe '{other}'"))),
        }
    }
}

/// One image that contributed to an augmented sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub origin_id: String,
    pub origin_domain: DomainTag,
    /// Pixel weight.
    pub lambda: f64,
    /// Weight applied to the contributor's box confidences.
    pub lambda_cls: f64,
}

/// Where an output box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxOrigin {
    /// Index into the sample's provenance.
    pub contribution: usize,
    /// Index of the box in the contributor's label list.
    pub box_index: usize,
    /// Whether the box was cut by its tile's crop region.
    pub clipped: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugWarnings {
    pub dropped_boxes: usize,
    pub skipped_exchanges: usize,
}

impl std::ops::AddAssign for AugWarnings {
    fn add_assign(&mut self, rhs: Self) {
        self.dropped_boxes += rhs.dropped_boxes;
        self.skipped_exchanges += rhs.skipped_exchanges;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub image: LabeledImage,
    pub recipe: Recipe,
    pub provenance: Vec<Contribution>,
    /// Parallel to `image.labels`.
    pub box_origins: Vec<BoxOrigin>,
    /// Tile placements on the working canvas; empty for plain reallocation.
    pub tiles: Vec<TilePlacement>,
    pub warnings: AugWarnings,
}

impl AugmentedSample {
    pub fn count_domain(&self, domain: DomainTag) -> usize {
        self.provenance.iter().filter(|c| c.origin_domain == domain).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageAugConfig {
    /// Output side length; mosaics are laid out on a canvas twice this size.
    pub canvas_side: u32,
    /// Minimum fraction of its mapped area a clipped box must keep.
    pub min_area_ratio: f64,
    /// Beta parameter for reallocation weights.
    pub alpha: f64,
}

impl Default for ImageAugConfig {
    fn default() -> Self {
        Self {
            canvas_side: 640,
            min_area_ratio: 0.2,
            alpha: 1.0,
        }
    }
}

impl ImageAugConfig {
    pub fn validate(&self) -> Result<()> {
        if self.canvas_side < 2 {
            return Err(Error::Config(format!("canvas_side must be >= 2, got {}", self.canvas_side)));
        }
        if !(0.0..=1.0).contains(&self.min_area_ratio) {
            return Err(Error::Config(format!("min_area_ratio must be in [0, 1], got {}", self.min_area_ratio)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Reference to an image in one of the two pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolRef {
    pub domain: DomainTag,
    pub index: usize,
}

/// Random choices of one splice: which images go to which quadrant
/// (top-left, top-right, bottom-left, bottom-right) and the mosaic centre on
/// the working canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicePlan {
    pub quadrants: [PoolRef; 4],
    pub center: (f64, f64),
}

fn sample_indices<R: Rng + ?Sized>(rng: &mut R, pool: usize, count: usize) -> Vec<usize> {
    if pool >= count {
        rand::seq::index::sample(rng, pool, count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..pool)).collect()
    }
}

/// Draws a splice plan with `n_source` source tiles (1..=3).
pub fn plan_splice_with_split<R: Rng + ?Sized>(
    n_source_pool: usize,
    n_target_pool: usize,
    n_source: usize,
    canvas_side: u32,
    rng: &mut R,
) -> Result<SplicePlan> {
    if !(1..=3).contains(&n_source) {
        return Err(Error::Augmentation(format!(
            "splice needs at least one image from each domain (m + n = 4, m, n >= 1); got m = {n_source}"
        )));
    }
    if n_source_pool == 0 || n_target_pool == 0 {
        return Err(Error::Augmentation("splice needs non-empty source and target pools".into()));
    }
    let mut refs: Vec<PoolRef> = sample_indices(rng, n_source_pool, n_source)
        .into_iter()
        .map(|index| PoolRef {
            domain: DomainTag::Source,
            index,
        })
        .chain(
            sample_indices(rng, n_target_pool, 4 - n_source)
                .into_iter()
                .map(|index| PoolRef {
                    domain: DomainTag::Target,
                    index,
                }),
        )
        .collect();
    refs.shuffle(rng);
    let side = canvas_side as i64;
    let cx = rng.random_range(side / 2..=side * 3 / 2) as f64;
    let cy = rng.random_range(side / 2..=side * 3 / 2) as f64;
    Ok(SplicePlan {
        quadrants: [refs[0], refs[1], refs[2], refs[3]],
        center: (cx, cy),
    })
}

pub fn plan_splice<R: Rng + ?Sized>(
    n_source_pool: usize,
    n_target_pool: usize,
    canvas_side: u32,
    rng: &mut R,
) -> Result<SplicePlan> {
    let n_source = rng.random_range(1..=3);
    plan_splice_with_split(n_source_pool, n_target_pool, n_source, canvas_side, rng)
}

/// Placement of a `width × height` tile in `quadrant` (0..4, row-major) of a
/// working canvas of side `2 * canvas_side` with the given centre. The tile is
/// scaled so its long side equals `canvas_side` and anchored at the centre.
pub fn quadrant_placement(quadrant: usize, width: u32, height: u32, center: (f64, f64), canvas_side: u32) -> TilePlacement {
    let work = 2.0 * canvas_side as f64;
    let scale = canvas_side as f64 / width.max(height) as f64;
    let (sw, sh) = (width as f64 * scale, height as f64 * scale);
    let (cx, cy) = center;
    let (ox, oy, region) = match quadrant {
        0 => (cx - sw, cy - sh, PixelRect::new(0.0, 0.0, cx, cy)),
        1 => (cx, cy - sh, PixelRect::new(cx, 0.0, work, cy)),
        2 => (cx - sw, cy, PixelRect::new(0.0, cy, cx, work)),
        _ => (cx, cy, PixelRect::new(cx, cy, work, work)),
    };
    let placed = PixelRect::new(ox, oy, ox + sw, oy + sh);
    TilePlacement::new(scale, scale, ox, oy, region.intersect(&placed))
}

/// Renders a splice from four tiles given in quadrant order.
pub fn render_splice(tiles: [&LabeledImage; 4], center: (f64, f64), config: &ImageAugConfig) -> AugmentedSample {
    let side = config.canvas_side;
    let to_output = AxisAffine::new(0.5, 0.5, 0.0, 0.0);
    let mut canvas = AreaCanvas::new(side, side);
    let mut labels = Vec::new();
    let mut origins = Vec::new();
    let mut provenance = Vec::with_capacity(4);
    let mut placements = Vec::with_capacity(4);
    let mut warnings = AugWarnings::default();

    for (q, tile) in tiles.iter().enumerate() {
        let placement = quadrant_placement(q, tile.width(), tile.height(), center, side);
        let map = placement.map.then(&to_output);
        let crop = placement.crop.scaled(0.5);
        canvas.draw(&tile.pixels, &map, &crop);
        for (box_index, label) in tile.labels.iter().enumerate() {
            match remap_label(label, (tile.width(), tile.height()), &map, &crop, (side, side), config.min_area_ratio) {
                Some((l, clipped)) => {
                    labels.push(l);
                    origins.push(BoxOrigin {
                        contribution: q,
                        box_index,
                        clipped,
                    });
                }
                None => warnings.dropped_boxes += 1,
            }
        }
        provenance.push(Contribution {
            origin_id: tile.id.clone(),
            origin_domain: tile.domain,
            lambda: 1.0,
            lambda_cls: 1.0,
        });
        placements.push(placement);
    }

    AugmentedSample {
        image: LabeledImage::new(String::new(), canvas.finish([FILL_VALUE; 3]), labels, DomainTag::Augmented),
        recipe: Recipe::Splice,
        provenance,
        box_origins: origins,
        tiles: placements,
        warnings,
    }
}

fn resolve<'a>(r: PoolRef, source: &'a [LabeledImage], target: &'a [LabeledImage]) -> &'a LabeledImage {
    match r.domain {
        DomainTag::Target => &target[r.index],
        _ => &source[r.index],
    }
}

/// Builds a 2×2 mosaic of `m` source and `4 - m` target images, `m` drawn
/// uniformly from 1..=3.
pub fn domain_splice<R: Rng + ?Sized>(
    pool_source: &[LabeledImage],
    pool_target: &[LabeledImage],
    config: &ImageAugConfig,
    rng: &mut R,
) -> Result<AugmentedSample> {
    let plan = plan_splice(pool_source.len(), pool_target.len(), config.canvas_side, rng)?;
    Ok(render_plan(&plan, pool_source, pool_target, config))
}

/// [`domain_splice`] with an explicit number of source tiles.
pub fn domain_splice_with_split<R: Rng + ?Sized>(
    pool_source: &[LabeledImage],
    pool_target: &[LabeledImage],
    n_source: usize,
    config: &ImageAugConfig,
    rng: &mut R,
) -> Result<AugmentedSample> {
    let plan = plan_splice_with_split(pool_source.len(), pool_target.len(), n_source, config.canvas_side, rng)?;
    Ok(render_plan(&plan, pool_source, pool_target, config))
}

pub fn render_plan(
    plan: &SplicePlan,
    pool_source: &[LabeledImage],
    pool_target: &[LabeledImage],
    config: &ImageAugConfig,
) -> AugmentedSample {
    let tiles = plan.quadrants.map(|r| resolve(r, pool_source, pool_target));
    render_splice(tiles, plan.center, config)
}

pub fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("invalid Beta({alpha}, {alpha}): {e}")))?;
    Ok(beta.sample(rng))
}

fn as_sample(img: &LabeledImage) -> AugmentedSample {
    AugmentedSample {
        image: img.clone(),
        recipe: Recipe::Reallocation,
        provenance: vec![Contribution {
            origin_id: img.id.clone(),
            origin_domain: img.domain,
            lambda: 1.0,
            lambda_cls: 1.0,
        }],
        box_origins: (0..img.labels.len())
            .map(|box_index| BoxOrigin {
                contribution: 0,
                box_index,
                clipped: false,
            })
            .collect(),
        tiles: Vec::new(),
        warnings: AugWarnings::default(),
    }
}

/// Pixel-wise `λ·a + (1−λ)·b` with concatenated, confidence-scaled labels.
/// Provenance weights of each side are multiplied by that side's weight.
pub fn blend_samples(a: &AugmentedSample, b: &AugmentedSample, lambda: f64, recipe: Recipe) -> Result<AugmentedSample> {
    if a.image.pixels.dimensions() != b.image.pixels.dimensions() {
        return Err(Error::Augmentation(format!(
            "reallocation needs equal dimensions, got {:?} and {:?}",
            a.image.pixels.dimensions(),
            b.image.pixels.dimensions()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Augmentation(format!("blend weight {lambda} outside [0, 1]")));
    }
    let (w, h) = a.image.pixels.dimensions();
    let pixels = RgbImage::from_fn(w, h, |x, y| {
        let pa = a.image.pixels.get_pixel(x, y).0;
        let pb = b.image.pixels.get_pixel(x, y).0;
        Rgb(std::array::from_fn(|c| to_u8(lambda * pa[c] as f64 + (1.0 - lambda) * pb[c] as f64)))
    });

    let weights = [lambda, 1.0 - lambda];
    let mut labels = Vec::with_capacity(a.image.labels.len() + b.image.labels.len());
    let mut origins = Vec::with_capacity(labels.capacity());
    let mut provenance = Vec::with_capacity(a.provenance.len() + b.provenance.len());
    let mut tiles = Vec::new();
    let mut warnings = AugWarnings::default();
    for (side, weight) in [a, b].into_iter().zip(weights) {
        let base = provenance.len();
        for (label, origin) in side.image.labels.iter().zip(&side.box_origins) {
            let mut l = label.clone();
            l.scale_confidence(weight);
            labels.push(l);
            origins.push(BoxOrigin {
                contribution: origin.contribution + base,
                ..*origin
            });
        }
        provenance.extend(side.provenance.iter().map(|c| Contribution {
            lambda: c.lambda * weight,
            lambda_cls: c.lambda_cls * weight,
            ..c.clone()
        }));
        tiles.extend_from_slice(&side.tiles);
        warnings += side.warnings;
    }

    Ok(AugmentedSample {
        image: LabeledImage::new(String::new(), pixels, labels, DomainTag::Augmented),
        recipe,
        provenance,
        box_origins: origins,
        tiles,
        warnings,
    })
}

fn check_cross_domain(a: &LabeledImage, b: &LabeledImage) -> Result<()> {
    let raw = |d: DomainTag| d != DomainTag::Augmented;
    if raw(a.domain) && raw(b.domain) && a.domain == b.domain {
        return Err(Error::Augmentation(format!(
            "reallocation pairs a source with a target image; both '{}' and '{}' are {}",
            a.id, b.id, a.domain
        )));
    }
    Ok(())
}

/// Blends two equally sized images with `λ ~ Beta(alpha, alpha)`.
pub fn domain_reallocation<R: Rng + ?Sized>(
    a: &LabeledImage,
    b: &LabeledImage,
    alpha: f64,
    rng: &mut R,
) -> Result<AugmentedSample> {
    check_cross_domain(a, b)?;
    let lambda = sample_lambda(alpha, rng)?;
    domain_reallocation_with_lambda(a, b, lambda)
}

/// [`domain_reallocation`] with a fixed weight.
pub fn domain_reallocation_with_lambda(a: &LabeledImage, b: &LabeledImage, lambda: f64) -> Result<AugmentedSample> {
    check_cross_domain(a, b)?;
    blend_samples(&as_sample(a), &as_sample(b), lambda, Recipe::Reallocation)
}

/// Letterboxes a random source and a random target image to the canvas size
/// and blends them.
pub fn random_reallocation<R: Rng + ?Sized>(
    pool_source: &[LabeledImage],
    pool_target: &[LabeledImage],
    config: &ImageAugConfig,
    rng: &mut R,
) -> Result<AugmentedSample> {
    if pool_source.is_empty() || pool_target.is_empty() {
        return Err(Error::Augmentation("reallocation needs non-empty source and target pools".into()));
    }
    let s = &pool_source[rng.random_range(0..pool_source.len())];
    let t = &pool_target[rng.random_range(0..pool_target.len())];
    let a = resize_letterbox(s, config.canvas_side)?;
    let b = resize_letterbox(t, config.canvas_side)?;
    let mut out = domain_reallocation(&a.image, &b.image, config.alpha, rng)?;
    out.warnings.dropped_boxes += a.dropped + b.dropped;
    Ok(out)
}

/// Reallocation applied to two independently drawn splice mosaics.
pub fn splice_then_reallocate<R: Rng + ?Sized>(
    pool_source: &[LabeledImage],
    pool_target: &[LabeledImage],
    config: &ImageAugConfig,
    rng: &mut R,
) -> Result<AugmentedSample> {
    let first = domain_splice(pool_source, pool_target, config, rng)?;
    let second = domain_splice(pool_source, pool_target, config, rng)?;
    let lambda = sample_lambda(config.alpha, rng)?;
    blend_samples(&first, &second, lambda, Recipe::SpliceReallocation)
}
