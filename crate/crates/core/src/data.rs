//! Dataset ingestion and batching: MNIST IDX files, CSV tabular data,
//! synthetic generators, standardization, and seeded batch iteration.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::likelihood::Target;
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Rng};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803; // 2051
const IDX_LABELS_MAGIC: u32 = 0x0000_0801; // 2049

/// Targets for a whole dataset.
#[derive(Debug, Clone)]
pub enum Labels<S> {
    /// Integer class labels in `0..num_classes`.
    Classes {
        labels: Vec<usize>,
        num_classes: usize,
    },
    /// Real-valued regression targets, one row per sample.
    Regression(Matrix<S>),
}

/// Record of the normalization already applied to the features.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization<S> {
    Raw,
    /// Pixels scaled into `[0, 1]`.
    PixelScale,
    /// Per-feature standardization with the recorded statistics.
    Standardized { mean: Vec<S>, std: Vec<S> },
}

/// An in-memory dataset: `N x D` features plus labels.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    features: Matrix<S>,
    labels: Labels<S>,
    normalization: Normalization<S>,
}

/// One gathered minibatch.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub x: Matrix<S>,
    pub y: Vec<Target<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(features: Matrix<S>, labels: Labels<S>) -> Result<Self> {
        Self::with_normalization(features, labels, Normalization::Raw)
    }

    pub fn with_normalization(
        features: Matrix<S>,
        labels: Labels<S>,
        normalization: Normalization<S>,
    ) -> Result<Self> {
        if !features.all_finite() {
            return Err(Error::format("dataset features contain NaN or Inf"));
        }
        match &labels {
            Labels::Classes {
                labels: ls,
                num_classes,
            } => {
                if ls.len() != features.rows() {
                    return Err(Error::structural("label count does not match sample count"));
                }
                if ls.iter().any(|&l| l >= *num_classes) {
                    return Err(Error::format("class label out of range"));
                }
            }
            Labels::Regression(t) => {
                if t.rows() != features.rows() {
                    return Err(Error::structural("target count does not match sample count"));
                }
                if !t.all_finite() {
                    return Err(Error::format("regression targets contain NaN or Inf"));
                }
            }
        }
        Ok(Self {
            features,
            labels,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix<S> {
        &self.features
    }

    pub fn labels(&self) -> &Labels<S> {
        &self.labels
    }

    pub fn normalization(&self) -> &Normalization<S> {
        &self.normalization
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { num_classes, .. } => Some(*num_classes),
            Labels::Regression(_) => None,
        }
    }

    /// Output dimension a network needs for this dataset.
    pub fn output_dim(&self) -> usize {
        match &self.labels {
            Labels::Classes { num_classes, .. } => *num_classes,
            Labels::Regression(t) => t.cols(),
        }
    }

    pub fn target(&self, n: usize) -> Target<S> {
        match &self.labels {
            Labels::Classes { labels, .. } => Target::Class(labels[n]),
            Labels::Regression(t) => Target::Values(t.row(n).to_vec()),
        }
    }

    pub fn class_label(&self, n: usize) -> Option<usize> {
        match &self.labels {
            Labels::Classes { labels, .. } => Some(labels[n]),
            Labels::Regression(_) => None,
        }
    }

    /// Gathers the rows at `indices` into a batch.
    pub fn gather(&self, indices: &[usize]) -> Batch<S> {
        let mut x = Matrix::zeros(indices.len(), self.dim());
        for (r, &n) in indices.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.features.row(n));
        }
        let y = indices.iter().map(|&n| self.target(n)).collect();
        Batch { x, y }
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Batch<S> {
        let indices: Vec<usize> = (0..self.len()).collect();
        self.gather(&indices)
    }

    /// Fixed-order batches of `size` covering the dataset (for curvature
    /// passes and evaluation).
    pub fn ordered_batches(&self, size: usize) -> Vec<Batch<S>> {
        assert!(size >= 1);
        (0..self.len())
            .collect::<Vec<_>>()
            .chunks(size)
            .map(|c| self.gather(c))
            .collect()
    }

    /// Takes the subset at `indices` as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Matrix::zeros(indices.len(), self.dim());
        for (r, &n) in indices.iter().enumerate() {
            if n >= self.len() {
                return Err(Error::structural("subset index out of range"));
            }
            features.row_mut(r).copy_from_slice(self.features.row(n));
        }
        let labels = match &self.labels {
            Labels::Classes {
                labels,
                num_classes,
            } => Labels::Classes {
                labels: indices.iter().map(|&n| labels[n]).collect(),
                num_classes: *num_classes,
            },
            Labels::Regression(t) => {
                let mut sub = Matrix::zeros(indices.len(), t.cols());
                for (r, &n) in indices.iter().enumerate() {
                    sub.row_mut(r).copy_from_slice(t.row(n));
                }
                Labels::Regression(sub)
            }
        };
        Self::with_normalization(features, labels, self.normalization.clone())
    }

    /// Seeded split into disjoint train/test parts.
    pub fn split(&self, train_fraction: f64, rng: &mut Rng) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::structural("train fraction must be in [0, 1]"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        let n_train = (self.len() as f64 * train_fraction).floor() as usize;
        let train = self.subset(&order[..n_train])?;
        let test = self.subset(&order[n_train..])?;
        Ok((train, test))
    }

    /// Per-feature mean and standard deviation of this dataset.
    pub fn feature_stats(&self) -> (Vec<S>, Vec<S>) {
        let n = S::cast(self.len() as f64);
        let d = self.dim();
        let mut mean = vec![S::zero(); d];
        for r in 0..self.len() {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += self.features.get(r, j);
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut var = vec![S::zero(); d];
        for r in 0..self.len() {
            for (j, v) in var.iter_mut().enumerate() {
                let c = self.features.get(r, j) - mean[j];
                *v += c * c;
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / n).sqrt();
                if s > S::zero() {
                    s
                } else {
                    S::one()
                }
            })
            .collect();
        (mean, std)
    }

    /// Standardizes in place with the given statistics. Standardizing twice
    /// is an error: normalization is applied exactly once.
    pub fn standardize_with(&mut self, mean: &[S], std: &[S]) -> Result<()> {
        if matches!(self.normalization, Normalization::Standardized { .. }) {
            return Err(Error::structural("dataset is already standardized"));
        }
        if mean.len() != self.dim() || std.len() != self.dim() {
            return Err(Error::structural("standardization stats dimension mismatch"));
        }
        for r in 0..self.features.rows() {
            let row = self.features.row_mut(r);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) / std[j];
            }
        }
        self.normalization = Normalization::Standardized {
            mean: mean.to_vec(),
            std: std.to_vec(),
        };
        Ok(())
    }
}

/// Standardizes a train split to zero mean / unit variance and applies the
/// train statistics to the test split.
pub fn standardize_train_test<S: Scalar>(
    train: &mut Dataset<S>,
    test: &mut Dataset<S>,
) -> Result<()> {
    let (mean, std) = train.feature_stats();
    train.standardize_with(&mean, &std)?;
    test.standardize_with(&mean, &std)
}

/// Index batches for one epoch: a seeded permutation (or natural order when
/// `shuffle` is off) cut into chunks of `size`, keeping the last partial
/// chunk.
pub fn epoch_batches(n: usize, size: usize, rng: &mut Rng, shuffle: bool) -> Vec<Vec<usize>> {
    assert!(size >= 1, "batch size must be >= 1");
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    order.chunks(size).map(|c| c.to_vec()).collect()
}

fn read_u32_be(r: &mut impl Read, offset: &mut usize, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| {
        Error::format(format!("truncated IDX file reading {what} at byte {offset}"))
    })?;
    *offset += 4;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an MNIST-format IDX image/label file pair.
///
/// Pixels are scaled to `[0, 1]` and flattened row-major to `rows * cols`
/// features. `limit` keeps only the first `limit` samples (both files are
/// still validated against their headers).
pub fn load_mnist_idx<S: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    limit: Option<usize>,
) -> Result<Dataset<S>> {
    let mut img = std::io::BufReader::new(std::fs::File::open(images_path)?);
    let mut offset = 0usize;
    let magic = read_u32_be(&mut img, &mut offset, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "bad IDX image magic {magic:#010x} at byte 0 (expected {IDX_IMAGES_MAGIC:#010x})"
        )));
    }
    let count = read_u32_be(&mut img, &mut offset, "image count")? as usize;
    let rows = read_u32_be(&mut img, &mut offset, "image rows")? as usize;
    let cols = read_u32_be(&mut img, &mut offset, "image cols")? as usize;
    let keep = limit.map_or(count, |l| l.min(count));
    let dim = rows * cols;
    let mut pixels = vec![0u8; keep * dim];
    img.read_exact(&mut pixels).map_err(|_| {
        Error::format(format!(
            "truncated IDX image data: expected {} bytes from byte {offset}",
            keep * dim
        ))
    })?;

    let mut lab = std::io::BufReader::new(std::fs::File::open(labels_path)?);
    let mut loffset = 0usize;
    let magic = read_u32_be(&mut lab, &mut loffset, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "bad IDX label magic {magic:#010x} at byte 0 (expected {IDX_LABELS_MAGIC:#010x})"
        )));
    }
    let lcount = read_u32_be(&mut lab, &mut loffset, "label count")? as usize;
    if lcount != count {
        return Err(Error::format(format!(
            "IDX image/label count mismatch: {count} images vs {lcount} labels"
        )));
    }
    let mut raw_labels = vec![0u8; keep];
    lab.read_exact(&mut raw_labels).map_err(|_| {
        Error::format(format!(
            "truncated IDX label data: expected {keep} bytes from byte {loffset}"
        ))
    })?;

    let scale = S::cast(1.0 / 255.0);
    let data: Vec<S> = pixels.iter().map(|&p| S::cast(p as f64) * scale).collect();
    let features = Matrix::new(keep, dim, data)?;
    let labels = Labels::Classes {
        labels: raw_labels.iter().map(|&l| l as usize).collect(),
        num_classes: 10,
    };
    Dataset::with_normalization(features, labels, Normalization::PixelScale)
}

/// Writes images in the IDX format (inverse of the loader, for fixtures).
pub fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(images.len() as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    for img in images {
        if img.len() != rows * cols {
            return Err(Error::structural("image size mismatch"));
        }
        f.write_all(img)?;
    }
    Ok(())
}

/// Writes labels in the IDX format.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

/// Column selection for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Name of the integer label column.
    pub label_column: String,
    /// Feature columns in order; `None` takes every non-label column.
    pub feature_columns: Option<Vec<String>>,
    /// Number of classes; inferred as `max label + 1` when `None`.
    pub num_classes: Option<usize>,
}

/// Loads a classification CSV with a header row.
pub fn load_csv<S: Scalar>(path: &Path, schema: &CsvSchema) -> Result<Dataset<S>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format("empty CSV file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|c| *c == schema.label_column)
        .ok_or_else(|| {
            Error::format(format!(
                "label column '{}' not found in CSV header",
                schema.label_column
            ))
        })?;
    let feature_idx: Vec<usize> = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| {
                columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::format(format!("feature column '{n}' not found")))
            })
            .collect::<Result<_>>()?,
        None => (0..columns.len()).filter(|&i| i != label_idx).collect(),
    };

    let mut rows: Vec<S> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 1,
                columns.len(),
                fields.len()
            )));
        }
        for &fi in &feature_idx {
            let v: f64 = fields[fi].parse().map_err(|_| {
                Error::format(format!("line {}: bad number '{}'", lineno + 1, fields[fi]))
            })?;
            rows.push(S::cast(v));
        }
        let lab: usize = fields[label_idx].parse().map_err(|_| {
            Error::format(format!(
                "line {}: bad label '{}'",
                lineno + 1,
                fields[label_idx]
            ))
        })?;
        labels.push(lab);
        n += 1;
    }
    let num_classes = schema
        .num_classes
        .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let features = Matrix::new(n, feature_idx.len(), rows)?;
    Dataset::new(
        features,
        Labels::Classes {
            labels,
            num_classes,
        },
    )
}

/// Seeded Gaussian class blobs: `classes` centers in `d` dimensions with
/// isotropic `noise` around them, labels balanced round-robin.
pub fn synth_blobs<S: Scalar>(
    rng: &mut Rng,
    n: usize,
    d: usize,
    classes: usize,
    noise: f64,
) -> Result<Dataset<S>> {
    assert!(n >= 1 && d >= 1 && classes >= 1);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| rng.normal() * 3.0).collect())
        .collect();
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let c = r % classes;
        labels.push(c);
        for j in 0..d {
            features.set(r, j, S::cast(centers[c][j] + rng.normal() * noise));
        }
    }
    Dataset::new(
        features,
        Labels::Classes {
            labels,
            num_classes: classes,
        },
    )
}

/// Class blobs with `d_noise` pure-noise columns appended; returns the
/// dataset together with the indices of the noise features.
pub fn synth_noise_features<S: Scalar>(
    rng: &mut Rng,
    n: usize,
    d_signal: usize,
    d_noise: usize,
    classes: usize,
    noise: f64,
) -> Result<(Dataset<S>, Vec<usize>)> {
    let signal = synth_blobs::<S>(rng, n, d_signal, classes, noise)?;
    let d = d_signal + d_noise;
    let mut features = Matrix::zeros(n, d);
    for r in 0..n {
        for j in 0..d_signal {
            features.set(r, j, signal.features().get(r, j));
        }
        for j in d_signal..d {
            features.set(r, j, S::cast(rng.normal()));
        }
    }
    let ds = Dataset::new(features, signal.labels.clone())?;
    Ok((ds, (d_signal..d).collect()))
}

/// 5x7 bitmap glyphs for the digits 0-9, one string row per scanline.
const DIGIT_GLYPHS: [[&str; 7]; 10] = [
    [
        " ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### ",
    ],
    [
        "  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### ",
    ],
    [
        " ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####",
    ],
    [
        " ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### ",
    ],
    [
        "   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # ",
    ],
    [
        "#####", "#    ", "#### ", "    #", "    #", "#   #", " ### ",
    ],
    [
        " ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### ",
    ],
    [
        "#####", "    #", "   # ", "  #  ", "  #  ", " #   ", " #   ",
    ],
    [
        " ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### ",
    ],
    [
        " ### ", "#   #", "#   #", " ####", "    #", "    #", " ### ",
    ],
];

/// Renders one synthetic 28x28 digit image as raw bytes.
fn render_digit(class: usize, rng: &mut Rng) -> Vec<u8> {
    const SIDE: usize = 28;
    let glyph = &DIGIT_GLYPHS[class];
    let scale = rng.uniform_in(2.3, 3.4);
    let gw = (5.0 * scale) as usize;
    let gh = (7.0 * scale) as usize;
    let ox = ((SIDE - gw.min(SIDE)) as f64 * rng.uniform()) as usize;
    let oy = ((SIDE - gh.min(SIDE)) as f64 * rng.uniform()) as usize;
    let intensity = rng.uniform_in(0.55, 1.0);
    let mut img = vec![0.0f64; SIDE * SIDE];
    for py in 0..gh.min(SIDE - oy) {
        for px in 0..gw.min(SIDE - ox) {
            let gx = (px as f64 / scale) as usize;
            let gy = (py as f64 / scale) as usize;
            if gx < 5 && gy < 7 && glyph[gy].as_bytes()[gx] == b'#' {
                img[(oy + py) * SIDE + ox + px] = intensity;
            }
        }
    }
    // Background clutter: a few faint random dots make the task non-trivial.
    for _ in 0..6 {
        let pos = rng.below(SIDE * SIDE);
        img[pos] = (img[pos] + rng.uniform_in(0.1, 0.45)).min(1.0);
    }
    img.iter()
        .map(|&v| {
            let noisy = v + rng.normal() * 0.12;
            (noisy.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect()
}

/// Deterministic synthetic handwritten-digit stand-in: 28x28 glyph renderings
/// with jitter, scale, intensity, clutter, and pixel noise. Used when the
/// real MNIST IDX files are not available.
pub fn synth_digits_idx(dir: &Path, seed: u64, n_train: usize, n_test: usize) -> Result<()> {
    let mut rng = Rng::new(seed).derive(0xD161);
    let mut write_split = |prefix: &str, n: usize, rng: &mut Rng| -> Result<()> {
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 10;
            images.push(render_digit(class, rng));
            labels.push(class as u8);
        }
        // Shuffle so class order carries no signal.
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let images: Vec<Vec<u8>> = order.iter().map(|&i| images[i].clone()).collect();
        let labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        write_idx_images(&dir.join(format!("{prefix}-images-idx3-ubyte")), &images, 28, 28)?;
        write_idx_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")), &labels)
    };
    write_split("train", n_train, &mut rng)?;
    write_split("t10k", n_test, &mut rng)
}
