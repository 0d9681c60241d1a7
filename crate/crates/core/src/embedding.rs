//! Image embeddings and the providers that supply them.
//!
//! The built-in provider is a fixed colour-grid descriptor. The file provider
//! reads vectors produced by an external trainer, one file per epoch:
//!
//! ```text
//! dim=<d>
//! <id> <v1> ... <vd>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::LabeledImage;
use crate::error::{Error, Result};

pub const GRID: u32 = 8;
pub const BUILTIN_DIM: usize = (GRID * GRID * 3) as usize;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_id: String,
    pub epoch: u32,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source_id: impl Into<String>, epoch: u32) -> Self {
        Self {
            values,
            source_id: source_id.into(),
            epoch,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Source of per-image feature vectors. Implementations must return the same
/// vector for the same image and epoch.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// True when vectors change between epochs because a trainer updates the
    /// underlying feature extractor.
    fn refreshable(&self) -> bool;

    /// Embeds `img` (known as `id`) at `epoch`. `Ok(None)` means the provider
    /// has no vector for that id.
    fn embed(&self, id: &str, img: &LabeledImage, epoch: u32) -> Result<Option<EmbeddingVector>>;
}

/// Per-axis `(pixel, overlap)` lists for splitting `len` pixels into `GRID` cells.
fn grid_weights(len: u32) -> Vec<Vec<(u32, f64)>> {
    let cell = len as f64 / GRID as f64;
    (0..GRID)
        .map(|g| {
            let lo = g as f64 * cell;
            let hi = (g + 1) as f64 * cell;
            let first = lo.floor() as u32;
            let last = (hi.ceil() as u32).min(len);
            (first..last)
                .filter_map(|p| {
                    let overlap = hi.min((p + 1) as f64) - lo.max(p as f64);
                    (overlap > 0.0).then_some((p, overlap))
                })
                .collect()
        })
        .collect()
}

/// Mean colour of each cell of an 8×8 grid laid over the image, per channel,
/// scaled to `[0, 1]`. Layout is row-major over cells, channel fastest.
pub fn embed_builtin(img: &LabeledImage) -> EmbeddingVector {
    let (w, h) = img.pixels.dimensions();
    let wx = grid_weights(w);
    let wy = grid_weights(h);
    let cell_area = (w as f64 / GRID as f64) * (h as f64 / GRID as f64);
    let mut values = Vec::with_capacity(BUILTIN_DIM);
    for row in &wy {
        for col in &wx {
            let mut acc = [0.0f64; 3];
            for &(y, fy) in row {
                for &(x, fx) in col {
                    let p = img.pixels.get_pixel(x, y).0;
                    let weight = fx * fy;
                    for c in 0..3 {
                        acc[c] += weight * p[c] as f64;
                    }
                }
            }
            values.extend(acc.iter().map(|a| a / cell_area / 255.0));
        }
    }
    EmbeddingVector::new(values, img.id.clone(), 0)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinProvider;

impl EmbeddingProvider for BuiltinProvider {
    fn dim(&self) -> usize {
        BUILTIN_DIM
    }

    fn refreshable(&self) -> bool {
        false
    }

    fn embed(&self, id: &str, img: &LabeledImage, epoch: u32) -> Result<Option<EmbeddingVector>> {
        let mut v = embed_builtin(img);
        v.source_id = id.to_string();
        v.epoch = epoch;
        Ok(Some(v))
    }
}

/// Vectors read from one embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }
}

fn file_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::EmbeddingFile {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_embedding_text(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| file_error(path, 1, "empty file, expected 'dim=<d>' header"))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| file_error(path, 1, format!("invalid header '{header}', expected 'dim=<d>'")))?;

    let mut vectors = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let mut tokens = line.split_whitespace();
        let Some(id) = tokens.next() else {
            continue;
        };
        let mut values = Vec::with_capacity(dim);
        for tok in tokens {
            let v: f64 = tok
                .parse()
                .map_err(|_| file_error(path, line_no, format!("record '{id}': invalid number '{tok}'")))?;
            if !v.is_finite() {
                return Err(file_error(path, line_no, format!("record '{id}': non-finite value '{tok}'")));
            }
            values.push(v);
        }
        if values.len() != dim {
            return Err(file_error(
                path,
                line_no,
                format!("record '{id}': dimension mismatch, expected {dim} values, found {}", values.len()),
            ));
        }
        if vectors.contains_key(id) {
            return Err(file_error(path, line_no, format!("duplicate id '{id}'")));
        }
        vectors.insert(id.to_string(), EmbeddingVector::new(values, id, 0));
    }
    Ok(EmbeddingTable { dim, vectors })
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_text(&text, path)
}

/// Writes vectors in the exchange format. All vectors must have length `dim`.
pub fn write_embedding_file<'a>(
    path: &Path,
    dim: usize,
    vectors: impl IntoIterator<Item = &'a EmbeddingVector>,
) -> Result<()> {
    let mut text = format!("dim={dim}\n");
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.dim(),
                context: Some(format!("vector '{}'", v.source_id)),
            });
        }
        text.push_str(&v.source_id);
        for x in &v.values {
            write!(text, " {x}").unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Serves vectors from one loaded embedding file, keyed by image id.
#[derive(Debug, Clone)]
pub struct FileProvider {
    table: EmbeddingTable,
    epoch: u32,
}

impl FileProvider {
    pub fn new(table: EmbeddingTable, epoch: u32) -> Self {
        Self { table, epoch }
    }

    pub fn load(path: &Path, epoch: u32) -> Result<Self> {
        Ok(Self::new(load_embedding_file(path)?, epoch))
    }
}

impl EmbeddingProvider for FileProvider {
    fn dim(&self) -> usize {
        self.table.dim
    }

    fn refreshable(&self) -> bool {
        true
    }

    fn embed(&self, id: &str, _img: &LabeledImage, epoch: u32) -> Result<Option<EmbeddingVector>> {
        if epoch != self.epoch {
            return Err(Error::Config(format!(
                "embedding file for epoch {} queried at epoch {epoch}",
                self.epoch
            )));
        }
        Ok(self.table.get(id).map(|v| EmbeddingVector {
            epoch,
            ..v.clone()
        }))
    }
}

/// Expands `{epoch}` in a provider path template.
pub fn epoch_path(template: &str, epoch: u32) -> PathBuf {
    PathBuf::from(template.replace("{epoch}", &epoch.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DomainTag;
    use image::{Rgb, RgbImage};

    fn img(px: RgbImage) -> LabeledImage {
        LabeledImage::new("x", px, vec![], DomainTag::Source)
    }

    #[test]
    fn mid_gray_embeds_to_constant() {
        let v = embed_builtin(&img(RgbImage::from_pixel(37, 23, Rgb([128, 128, 128]))));
        assert_eq!(v.dim(), 192);
        assert!(v.values.iter().all(|&x| (x - 128.0 / 255.0).abs() < 1e-12));
    }

    #[test]
    fn tiny_images_embed() {
        let v = embed_builtin(&img(RgbImage::from_pixel(1, 1, Rgb([255, 0, 51]))));
        assert_eq!(v.dim(), 192);
        assert!((v.values[0] - 1.0).abs() < 1e-12);
        assert!((v.values[191] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn cell_means_match_direct_average() {
        let px = RgbImage::from_fn(16, 16, |x, y| Rgb([(x * 16) as u8, (y * 16) as u8, ((x + y) * 7) as u8]));
        let v = embed_builtin(&img(px.clone()));
        // Cell (row 2, col 5) covers pixels x in 10..12, y in 4..6.
        let mut acc = [0.0; 3];
        for y in 4..6 {
            for x in 10..12 {
                let p = px.get_pixel(x, y).0;
                for c in 0..3 {
                    acc[c] += p[c] as f64 / 4.0 / 255.0;
                }
            }
        }
        let base = (2 * 8 + 5) * 3;
        for c in 0..3 {
            assert!((v.values[base + c] - acc[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn parses_small_file() {
        let t = parse_embedding_text("dim=4\na 1 2 3 4\n", Path::new("e.txt")).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap().values, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_duplicates_and_bad_records() {
        let p = Path::new("e.txt");
        let dup = parse_embedding_text("dim=2\na 1 2\na 3 4\n", p).unwrap_err();
        assert!(dup.to_string().contains("duplicate id 'a'"), "{dup}");
        let nan = parse_embedding_text("dim=2\na 1 NaN\n", p).unwrap_err();
        assert!(nan.to_string().contains("non-finite"), "{nan}");
        let inf = parse_embedding_text("dim=2\nb inf 1\n", p).unwrap_err();
        assert!(inf.to_string().contains("'b'"), "{inf}");
        let short = parse_embedding_text("dim=3\nc 1 2\n", p).unwrap_err();
        assert!(short.to_string().contains("dimension mismatch"), "{short}");
        assert!(parse_embedding_text("d=3\n", p).is_err());
        assert!(parse_embedding_text("", p).is_err());
    }

    #[test]
    fn epoch_template_expands() {
        assert_eq!(epoch_path("/tmp/emb_{epoch}.txt", 3), PathBuf::from("/tmp/emb_3.txt"));
    }
}
