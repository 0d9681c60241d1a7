use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const BINS: usize = 10;
const BAR_WIDTH: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u32,
    pub kept: usize,
    pub rejected: usize,
    pub bins: Vec<HistogramBin>,
    pub recipes: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub epochs: Vec<EpochReport>,
    pub text: String,
}

impl Report {
    /// `epoch,bin,lo,hi,count,kept`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,bin,lo,hi,count,kept\n");
        for e in &self.epochs {
            for (i, b) in e.bins.iter().enumerate() {
                writeln!(out, "{},{},{},{},{},{}", e.epoch, i, b.lo, b.hi, b.count, b.kept).unwrap();
            }
        }
        out
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::InvalidDataset(format!("{}: {msg}", path.display()))
}

/// Header-indexed rows of a simple comma-separated file.
fn rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| bad(path, "empty file"))?
        .split(',')
        .map(String::from)
        .collect();
    let body = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    Ok((header, body))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| bad(path, format!("missing column '{name}'")))
}

fn histogram(scores: &[(f64, bool)]) -> Vec<HistogramBin> {
    let lo = scores.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let mut bins: Vec<HistogramBin> = (0..BINS)
        .map(|i| HistogramBin {
            lo: lo + width * i as f64,
            hi: if i + 1 == BINS && hi > lo { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
            kept: 0,
        })
        .collect();
    for &(d, kept) in scores {
        let i = (((d - lo) / width).floor() as usize).min(BINS - 1);
        bins[i].count += 1;
        bins[i].kept += kept as usize;
    }
    bins
}

/// Summarises a run directory: per-epoch distance histograms with kept
/// counts, recipe breakdown, and warning totals.
pub fn report(run_dir: &Path) -> Result<Report> {
    let summary_path = run_dir.join("summary.csv");
    if !summary_path.is_file() {
        return Err(bad(run_dir, "not a run directory (summary.csv missing)"));
    }
    let (header, summary_rows) = rows(&summary_path)?;
    let epoch_col = column(&summary_path, &header, "epoch")?;
    let warning_cols: Vec<(String, usize)> = ["dropped_boxes", "skipped_exchanges", "zero_norm_terms"]
        .iter()
        .map(|n| column(&summary_path, &header, n).map(|c| (n.to_string(), c)))
        .collect::<Result<_>>()?;
    if summary_rows.is_empty() {
        return Err(bad(&summary_path, "no epochs recorded"));
    }

    let mut epochs = Vec::new();
    for row in &summary_rows {
        let epoch: u32 = row
            .get(epoch_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&summary_path, "invalid epoch value"))?;
        let dir = super::epoch_dir(run_dir, epoch);

        let scores_path = dir.join("scores.csv");
        let (sh, srows) = rows(&scores_path)?;
        let (dcol, kcol) = (column(&scores_path, &sh, "distance")?, column(&scores_path, &sh, "kept")?);
        let scores: Vec<(f64, bool)> = srows
            .iter()
            .map(|r| {
                let d = r.get(dcol).and_then(|v| v.parse().ok()).ok_or_else(|| bad(&scores_path, "invalid distance"))?;
                Ok((d, r.get(kcol).map(String::as_str) == Some("1")))
            })
            .collect::<Result<_>>()?;
        if scores.is_empty() {
            return Err(bad(&scores_path, "no candidates"));
        }

        let prov_path = dir.join("provenance.csv");
        let (ph, prows) = rows(&prov_path)?;
        let (idcol, rcol) = (column(&prov_path, &ph, "candidate_id")?, column(&prov_path, &ph, "recipe")?);
        let mut seen = BTreeSet::new();
        let mut recipes = BTreeMap::new();
        for r in &prows {
            let (Some(id), Some(recipe)) = (r.get(idcol), r.get(rcol)) else {
                return Err(bad(&prov_path, "short row"));
            };
            if seen.insert(id.clone()) {
                *recipes.entry(recipe.clone()).or_insert(0) += 1;
            }
        }

        let warnings = warning_cols
            .iter()
            .map(|(name, c)| (name.clone(), row.get(*c).and_then(|v| v.parse().ok()).unwrap_or(0)))
            .collect();
        let kept = scores.iter().filter(|s| s.1).count();
        epochs.push(EpochReport {
            epoch,
            kept,
            rejected: scores.len() - kept,
            bins: histogram(&scores),
            recipes,
            warnings,
        });
    }

    let text = render(&epochs);
    Ok(Report { epochs, text })
}

fn render(epochs: &[EpochReport]) -> String {
    let mut out = String::new();
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for e in epochs {
        writeln!(out, "epoch {}: {} kept, {} rejected", e.epoch, e.kept, e.rejected).unwrap();
        let peak = e.bins.iter().map(|b| b.count).max().unwrap_or(1).max(1);
        for b in &e.bins {
            let kept_bar = b.kept * BAR_WIDTH / peak;
            let all_bar = b.count * BAR_WIDTH / peak;
            writeln!(
                out,
                "  [{:>12.6}, {:>12.6}) {:>6} {}{}",
                b.lo,
                b.hi,
                b.count,
                "#".repeat(kept_bar),
                ".".repeat(all_bar - kept_bar)
            )
            .unwrap();
        }
        let recipes: Vec<String> = e.recipes.iter().map(|(r, n)| format!("{r}={n}")).collect();
        writeln!(out, "  recipes: {}", recipes.join(" ")).unwrap();
        for (k, v) in &e.warnings {
            *totals.entry(k.clone()).or_insert(0) += v;
        }
    }
    let warnings: Vec<String> = totals.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "warnings: {}", warnings.join(" ")).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_conserves_counts() {
        let scores: Vec<(f64, bool)> = (0..37).map(|i| (i as f64 * 0.37, i < 20)).collect();
        let bins = histogram(&scores);
        assert_eq!(bins.len(), BINS);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 37);
        assert_eq!(bins.iter().map(|b| b.kept).sum::<usize>(), 20);
    }

    #[test]
    fn histogram_of_identical_values() {
        let bins = histogram(&[(2.0, true), (2.0, false)]);
        assert_eq!(bins[0].count, 2);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report(dir.path()).is_err());
    }
}
