//! The epoch loop: generate candidates, embed, score against the target set,
//! keep the closest `⌊n_a·k⌋`, and write the kept set for the trainer.
//!
//! Run directory layout:
//!
//! ```text
//! <run>/config.toml
//! <run>/summary.csv
//! <run>/epoch_<n>/images/, labels/, classes.txt   kept candidates
//! <run>/epoch_<n>/scores.csv                      all candidates, ranked
//! <run>/epoch_<n>/provenance.csv                  one row per contributor
//! <run>/epoch_<n>/candidates/                     all candidates (file provider only)
//! ```

mod config;
mod report;

pub use config::{BoxExchange, DonorDomain, ExchangeStage, MetricName, PipelineConfig, ProviderSpec};
pub use report::{report, EpochReport, HistogramBin, Report};

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::box_aug::{apply_exchange, ExchangeConfig};
use crate::dataset::{resize_letterbox, save_dataset, DatasetSplit, DomainTag, LabeledImage, SplitRole};
use crate::embedding::{epoch_path, BuiltinProvider, EmbeddingProvider, EmbeddingVector, FileProvider};
use crate::error::{Error, Result};
use crate::image_aug::{
    blend_samples, domain_reallocation, plan_splice, render_splice, sample_lambda, AugWarnings, AugmentedSample,
    ImageAugConfig, Recipe,
};
use crate::selection::{filter_top_k, kept_count, score_candidates, write_scores_csv, ScoredCandidate};

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the generation stream for one epoch.
pub fn epoch_seed(global_seed: u64, epoch: u32) -> u64 {
    mix64(mix64(global_seed) ^ epoch as u64)
}

/// Seed of one candidate within an epoch's stream.
pub fn candidate_seed(global_seed: u64, epoch: u32, index: usize) -> u64 {
    mix64(epoch_seed(global_seed, epoch) ^ mix64(index as u64))
}

pub fn candidate_id(epoch: u32, index: usize) -> String {
    format!("e{epoch:03}_c{index:06}")
}

fn check_splits(source: &DatasetSplit, target: &DatasetSplit) -> Result<()> {
    if target.is_empty() {
        return Err(Error::InvalidDataset("target split is empty; at least one target image is required".into()));
    }
    if source.is_empty() {
        return Err(Error::InvalidDataset("source split is empty".into()));
    }
    if source.num_classes() != target.num_classes() {
        return Err(Error::InvalidDataset(format!(
            "source has {} classes but target has {}",
            source.num_classes(),
            target.num_classes()
        )));
    }
    Ok(())
}

struct Generator<'a> {
    source: &'a [LabeledImage],
    target: &'a [LabeledImage],
    aug: ImageAugConfig,
    mix: WeightedIndex<f64>,
    exchange: Option<ExchangeConfig>,
    stage: ExchangeStage,
    donor: DonorDomain,
}

impl<'a> Generator<'a> {
    fn new(source: &'a DatasetSplit, target: &'a DatasetSplit, config: &PipelineConfig) -> Result<Self> {
        let mix = WeightedIndex::new(config.mix_weights()).map_err(|e| Error::Config(format!("mix weights: {e}")))?;
        Ok(Self {
            source: &source.images,
            target: &target.images,
            aug: config.image_aug(),
            mix,
            exchange: config.exchange(),
            stage: config.exchange_stage,
            donor: config.exchange_donor,
        })
    }

    fn donors(&self) -> &'a [LabeledImage] {
        match self.donor {
            DonorDomain::Target => self.target,
            DonorDomain::Source => self.source,
        }
    }

    fn host_domain(&self) -> DomainTag {
        match self.donor {
            DonorDomain::Target => DomainTag::Source,
            DonorDomain::Source => DomainTag::Target,
        }
    }

    /// Applies input-stage exchange to `img` when it belongs to the host domain.
    fn prepare<'b>(&self, img: &'b LabeledImage, rng: &mut ChaCha8Rng, warnings: &mut AugWarnings) -> Cow<'b, LabeledImage> {
        match self.exchange {
            Some(ex) if self.stage == ExchangeStage::Inputs && img.domain == self.host_domain() => {
                let mut owned = img.clone();
                let (_, skipped) = apply_exchange(&mut owned, self.donors(), &ex, rng);
                warnings.skipped_exchanges += skipped;
                Cow::Owned(owned)
            }
            _ => Cow::Borrowed(img),
        }
    }

    fn splice(&self, rng: &mut ChaCha8Rng) -> Result<AugmentedSample> {
        let plan = plan_splice(self.source.len(), self.target.len(), self.aug.canvas_side, rng)?;
        let mut warnings = AugWarnings::default();
        let tiles: Vec<Cow<LabeledImage>> = plan
            .quadrants
            .iter()
            .map(|r| {
                let img = match r.domain {
                    DomainTag::Target => &self.target[r.index],
                    _ => &self.source[r.index],
                };
                self.prepare(img, rng, &mut warnings)
            })
            .collect();
        let mut out = render_splice([&tiles[0], &tiles[1], &tiles[2], &tiles[3]], plan.center, &self.aug);
        out.warnings += warnings;
        Ok(out)
    }

    fn reallocation(&self, rng: &mut ChaCha8Rng) -> Result<AugmentedSample> {
        let s = &self.source[rng.random_range(0..self.source.len())];
        let t = &self.target[rng.random_range(0..self.target.len())];
        let mut warnings = AugWarnings::default();
        let a = resize_letterbox(s, self.aug.canvas_side)?;
        let b = resize_letterbox(t, self.aug.canvas_side)?;
        warnings.dropped_boxes += a.dropped + b.dropped;
        let a = self.prepare(&a.image, rng, &mut warnings).into_owned();
        let b = self.prepare(&b.image, rng, &mut warnings).into_owned();
        let mut out = domain_reallocation(&a, &b, self.aug.alpha, rng)?;
        out.warnings += warnings;
        Ok(out)
    }

    fn generate(&self, id: String, seed: u64) -> Result<AugmentedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = match self.mix.sample(&mut rng) {
            0 => self.splice(&mut rng)?,
            1 => self.reallocation(&mut rng)?,
            _ => {
                let first = self.splice(&mut rng)?;
                let second = self.splice(&mut rng)?;
                let lambda = sample_lambda(self.aug.alpha, &mut rng)?;
                blend_samples(&first, &second, lambda, Recipe::SpliceReallocation)?
            }
        };
        if let (Some(ex), ExchangeStage::Composite) = (self.exchange, self.stage) {
            let (_, skipped) = apply_exchange(&mut sample.image, self.donors(), &ex, &mut rng);
            sample.warnings.skipped_exchanges += skipped;
        }
        sample.image.id = id;
        Ok(sample)
    }
}

/// Generates `config.candidates_per_epoch` augmented candidates for `epoch`.
/// Each candidate draws from its own stream seeded by
/// `(seed, epoch, index)`, so results do not depend on scheduling.
pub fn generate_candidates(
    source: &DatasetSplit,
    target: &DatasetSplit,
    config: &PipelineConfig,
    epoch: u32,
    seed: u64,
) -> Result<Vec<AugmentedSample>> {
    check_splits(source, target)?;
    let generator = Generator::new(source, target, config)?;
    (0..config.candidates_per_epoch)
        .into_par_iter()
        .map(|i| generator.generate(candidate_id(epoch, i), candidate_seed(seed, epoch, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl DistanceStats {
    pub fn from_distances(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut count = 0;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            count += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        (count > 0).then(|| Self {
            count,
            min,
            mean: sum / count as f64,
            max,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WarningCounts {
    pub dropped_boxes: usize,
    pub skipped_exchanges: usize,
    pub zero_norm_terms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochState {
    pub epoch: u32,
    /// Ascending distance.
    pub kept_ids: Vec<String>,
    /// All candidates, ranked.
    pub scored: Vec<ScoredCandidate>,
    pub kept: DistanceStats,
    pub rejected: Option<DistanceStats>,
    pub warnings: WarningCounts,
}

fn embed_all(
    provider: &dyn EmbeddingProvider,
    images: &[&LabeledImage],
    epoch: u32,
) -> Result<(Vec<EmbeddingVector>, Vec<String>)> {
    let results: Vec<Option<EmbeddingVector>> = images
        .par_iter()
        .map(|img| provider.embed(&img.id, img, epoch))
        .collect::<Result<_>>()?;
    let mut vectors = Vec::with_capacity(results.len());
    let mut missing = Vec::new();
    for (img, r) in images.iter().zip(results) {
        match r {
            Some(v) if v.dim() == provider.dim() => vectors.push(v),
            Some(v) => {
                return Err(Error::Dimension {
                    expected: provider.dim(),
                    found: v.dim(),
                    context: Some(format!("embedding of '{}'", img.id)),
                })
            }
            None => missing.push(img.id.clone()),
        }
    }
    Ok((vectors, missing))
}

pub fn epoch_dir(run_dir: &Path, epoch: u32) -> PathBuf {
    run_dir.join(format!("epoch_{epoch}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `candidate_id,recipe,contribution,origin_id,origin_domain,lambda,lambda_cls`.
pub fn write_provenance_csv(path: &Path, candidates: &[AugmentedSample]) -> Result<()> {
    let mut text = String::from("candidate_id,recipe,contribution,origin_id,origin_domain,lambda,lambda_cls\n");
    for c in candidates {
        for (i, p) in c.provenance.iter().enumerate() {
            writeln!(
                text,
                "{},{},{},{},{},{},{}",
                c.image.id, c.recipe, i, p.origin_id, p.origin_domain, p.lambda, p.lambda_cls
            )
            .unwrap();
        }
    }
    write_text(path, &text)
}

fn augmented_split(images: Vec<LabeledImage>, category_names: &[String]) -> DatasetSplit {
    DatasetSplit {
        images,
        role: SplitRole::Augmented,
        category_names: category_names.to_vec(),
    }
}

/// Embeds candidates and (letterboxed) targets, ranks candidates, keeps the
/// top `⌊n_a·k⌋`, and writes `epoch_<n>/` under `run_dir`.
pub fn run_epoch(
    candidates: &[AugmentedSample],
    target: &DatasetSplit,
    provider: &dyn EmbeddingProvider,
    config: &PipelineConfig,
    epoch: u32,
    run_dir: &Path,
) -> Result<EpochState> {
    let targets: Vec<LabeledImage> = target
        .images
        .par_iter()
        .map(|t| resize_letterbox(t, config.canvas_side).map(|l| l.image))
        .collect::<Result<_>>()?;
    let cand_refs: Vec<&LabeledImage> = candidates.iter().map(|c| &c.image).collect();
    let target_refs: Vec<&LabeledImage> = targets.iter().collect();
    let (cand_vecs, mut missing) = embed_all(provider, &cand_refs, epoch)?;
    let (target_vecs, missing_targets) = embed_all(provider, &target_refs, epoch)?;
    missing.extend(missing_targets);
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingEmbeddings { epoch, ids: missing });
    }

    let filter = config.filter();
    let outcome = score_candidates(&cand_vecs, &target_vecs, filter.metric)?;
    let kept_ids = filter_top_k(&outcome.scored, filter.k)?;
    let n_b = kept_ids.len();
    debug_assert_eq!(n_b, kept_count(candidates.len(), filter.k));
    let kept = DistanceStats::from_distances(outcome.scored[..n_b].iter().map(|s| s.distance))
        .expect("filter keeps at least one candidate");
    let rejected = DistanceStats::from_distances(outcome.scored[n_b..].iter().map(|s| s.distance));

    let mut warnings = WarningCounts {
        zero_norm_terms: outcome.zero_norm_terms,
        ..Default::default()
    };
    for c in candidates {
        warnings.dropped_boxes += c.warnings.dropped_boxes;
        warnings.skipped_exchanges += c.warnings.skipped_exchanges;
    }

    let dir = epoch_dir(run_dir, epoch);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let kept_set: std::collections::HashSet<&str> = kept_ids.iter().map(String::as_str).collect();
    let kept_images: Vec<LabeledImage> = candidates
        .iter()
        .filter(|c| kept_set.contains(c.image.id.as_str()))
        .map(|c| c.image.clone())
        .collect();
    save_dataset(&augmented_split(kept_images, &target.category_names), &dir)?;
    write_scores_csv(&dir.join("scores.csv"), &outcome.scored, n_b)?;
    write_provenance_csv(&dir.join("provenance.csv"), candidates)?;

    Ok(EpochState {
        epoch,
        kept_ids,
        scored: outcome.scored,
        kept,
        rejected,
        warnings,
    })
}

/// Blocks until `path` exists, checking every `poll` up to `timeout`.
pub fn wait_for_file(path: &Path, epoch: u32, timeout: Duration, poll: Duration) -> Result<()> {
    let start = Instant::now();
    loop {
        if path.is_file() {
            return Ok(());
        }
        let elapsed = start.elapsed();
        if elapsed >= timeout {
            return Err(Error::ProviderTimeout {
                epoch,
                path: path.to_path_buf(),
            });
        }
        std::thread::sleep(poll.min(timeout - elapsed));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub epochs: Vec<EpochState>,
}

impl RunSummary {
    pub fn total_kept(&self) -> usize {
        self.epochs.iter().map(|e| e.kept_ids.len()).sum()
    }

    pub const CSV_HEADER: &'static str = "epoch,candidates,kept,rejected,kept_min,kept_mean,kept_max,rejected_min,rejected_mean,rejected_max,dropped_boxes,skipped_exchanges,zero_norm_terms";

    pub fn to_csv(&self) -> String {
        let mut text = String::from(Self::CSV_HEADER);
        text.push('\n');
        for e in &self.epochs {
            let (rc, rmin, rmean, rmax) = match &e.rejected {
                Some(r) => (r.count.to_string(), r.min.to_string(), r.mean.to_string(), r.max.to_string()),
                None => ("0".into(), String::new(), String::new(), String::new()),
            };
            writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.epoch,
                e.scored.len(),
                e.kept.count,
                rc,
                e.kept.min,
                e.kept.mean,
                e.kept.max,
                rmin,
                rmean,
                rmax,
                e.warnings.dropped_boxes,
                e.warnings.skipped_exchanges,
                e.warnings.zero_norm_terms
            )
            .unwrap();
        }
        text
    }
}

/// Runs the full loop for `config.epochs` epochs and writes everything under
/// `run_dir`. The detector update between epochs is left to an external
/// trainer; with a file provider the loop waits for that trainer's
/// embedding file before scoring each epoch.
pub fn run_loop(
    source: &DatasetSplit,
    target: &DatasetSplit,
    config: &PipelineConfig,
    run_dir: &Path,
) -> Result<RunSummary> {
    config.validate()?;
    check_splits(source, target)?;
    let seed = config.require_seed()?;
    let provider = config.provider_spec()?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    write_text(&run_dir.join("config.toml"), &config.to_toml_string())?;

    let mut frozen: Option<Vec<AugmentedSample>> = None;
    let mut epochs = Vec::with_capacity(config.epochs as usize);
    for epoch in 1..=config.epochs {
        let candidates = match &frozen {
            Some(pool) => pool.clone(),
            None => generate_candidates(source, target, config, epoch, seed)?,
        };
        if config.frozen_pool && frozen.is_none() {
            frozen = Some(candidates.clone());
        }
        log::info!("epoch {epoch}: generated {} candidates", candidates.len());

        let state = match &provider {
            ProviderSpec::Builtin => run_epoch(&candidates, target, &BuiltinProvider, config, epoch, run_dir)?,
            ProviderSpec::File(template) => {
                let cand_dir = epoch_dir(run_dir, epoch).join("candidates");
                let images = candidates.iter().map(|c| c.image.clone()).collect();
                save_dataset(&augmented_split(images, &target.category_names), &cand_dir)?;
                let path = epoch_path(template, epoch);
                log::info!("epoch {epoch}: waiting for {}", path.display());
                wait_for_file(
                    &path,
                    epoch,
                    Duration::from_secs_f64(config.provider_timeout_secs),
                    Duration::from_millis(config.poll_interval_ms.max(1)),
                )?;
                let file_provider = FileProvider::load(&path, epoch)?;
                run_epoch(&candidates, target, &file_provider, config, epoch, run_dir)?
            }
        };
        log::info!(
            "epoch {epoch}: kept {} (mean distance {:.6})",
            state.kept.count,
            state.kept.mean
        );
        epochs.push(state);
    }

    let summary = RunSummary { epochs };
    write_text(&run_dir.join("summary.csv"), &summary.to_csv())?;
    Ok(summary)
}
