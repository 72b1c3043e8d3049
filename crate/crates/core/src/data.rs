//! Labeled datasets, file loaders, synthetic generators and the
//! distribution-shift mixture sampler.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Row-major feature matrix with one class label per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    source_tag: String,
}

#[derive(Deserialize)]
struct RawDataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    source_tag: String,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        Dataset::from_flat(raw.features, raw.dim, raw.labels, raw.num_classes, raw.source_tag)
    }
}

impl Dataset {
    pub fn from_flat(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidInput("num_classes must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Dimension {
                expected: labels.len() * dim,
                found: features.len(),
                context: "feature matrix size",
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            dim,
            labels,
            num_classes,
            source_tag: source_tag.into(),
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<usize>,
        num_classes: usize,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: r.len(),
                context: "row length",
            });
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                found: labels.len(),
                context: "label count",
            });
        }
        Self::from_flat(rows.concat(), dim, labels, num_classes, source_tag)
    }

    /// An empty dataset with a fixed shape, for incremental building.
    pub fn empty(dim: usize, num_classes: usize, source_tag: impl Into<String>) -> Result<Self> {
        Self::from_flat(Vec::new(), dim, Vec::new(), num_classes, source_tag)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    pub fn push(&mut self, x: &[f64], y: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
                context: "pushed row",
            });
        }
        if y >= self.num_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        self.features.extend_from_slice(x);
        self.labels.push(y);
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            dim: self.dim,
            labels,
            num_classes: self.num_classes,
            source_tag: self.source_tag.clone(),
        }
    }

    /// Concatenate datasets of identical shape, in order.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or(Error::Empty("dataset list"))?;
        let mut out = Dataset {
            features: Vec::with_capacity(parts.iter().map(|p| p.features.len()).sum()),
            dim: first.dim,
            labels: Vec::with_capacity(parts.iter().map(|p| p.len()).sum()),
            num_classes: first.num_classes,
            source_tag: first.source_tag.clone(),
        };
        for p in parts {
            if p.dim != out.dim {
                return Err(Error::Dimension {
                    expected: out.dim,
                    found: p.dim,
                    context: "concatenated dataset",
                });
            }
            if p.num_classes != out.num_classes {
                return Err(Error::Dimension {
                    expected: out.num_classes,
                    found: p.num_classes,
                    context: "concatenated class count",
                });
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }

    /// Z-score every feature column in place. Columns with (near) zero spread
    /// are only centered.
    pub fn standardize(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        for j in 0..self.dim {
            let mean = (0..n).map(|i| self.features[i * self.dim + j]).sum::<f64>() / n as f64;
            let var = (0..n)
                .map(|i| (self.features[i * self.dim + j] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let scale = if var.sqrt() > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
            for i in 0..n {
                let v = &mut self.features[i * self.dim + j];
                *v = (*v - mean) * scale;
            }
        }
    }

    /// Write a CSV snapshot with columns `x0..x{d-1},label`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (x, y) in self.iter() {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    /// Binary snapshot, little-endian:
    ///
    /// ```text
    /// b"MIDS" | version:u32 = 1 | rows:u64 | dim:u64 | classes:u64
    /// | tag_len:u64 | tag:utf8 | features:f64[rows*dim] row-major | labels:u32[rows]
    /// ```
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let tag = self.source_tag.as_bytes();
        let mut out = Vec::with_capacity(40 + tag.len() + self.features.len() * 8 + self.len() * 4);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        for v in [self.len(), self.dim, self.num_classes, tag.len()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(tag);
        for v in &self.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Dataset> {
        let bad = |m: &str| Error::Format {
            path: "<snapshot>".into(),
            message: m.to_string(),
        };
        let mut r = ByteReader::new(bytes);
        if r.take(4).ok_or_else(|| bad("truncated header"))? != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?);
        if version != 1 {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut header = [0usize; 4];
        for h in &mut header {
            *h = u64::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?) as usize;
        }
        let [rows, dim, classes, tag_len] = header;
        let tag = r.take(tag_len).ok_or_else(|| bad("truncated tag"))?;
        let tag = String::from_utf8(tag.to_vec()).map_err(|_| bad("tag is not utf-8"))?;
        let cells = rows.checked_mul(dim).ok_or_else(|| bad("shape overflow"))?;
        let mut features = Vec::with_capacity(cells);
        for _ in 0..cells {
            features.push(f64::from_le_bytes(r.array().ok_or_else(|| bad("truncated features"))?));
        }
        let mut labels = Vec::with_capacity(rows);
        for _ in 0..rows {
            labels.push(u32::from_le_bytes(r.array().ok_or_else(|| bad("truncated labels"))?) as usize);
        }
        if !r.is_done() {
            return Err(bad("trailing bytes"));
        }
        Dataset::from_flat(features, dim, labels, classes, tag)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_snapshot_bytes()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Dataset> {
        let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Dataset::from_snapshot_bytes(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.as_ref().to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"MIDS";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().expect("slice length checked"))
    }

    fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

// ---------------------------------------------------------------------------
// Synthetic Gaussians
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassSpec {
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub count: usize,
}

/// Draw `spec.count` points per class, grouped by class in spec order.
/// Labels are the class's position in `specs`.
pub fn synth_gaussian_classes(specs: &[GaussianClassSpec], seed: u64) -> Result<Dataset> {
    if specs.len() < 2 {
        return Err(Error::InvalidInput("at least two classes are required".into()));
    }
    let dim = specs[0].mean.len();
    for s in specs {
        if s.mean.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: s.mean.len(),
                context: "class mean",
            });
        }
        if !(s.sigma >= 0.0) || !s.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("invalid class sigma {}", s.sigma)));
        }
    }
    let mut rng = seed::rng(seed);
    let mut out = Dataset::empty(dim, specs.len(), "synthetic-gaussian")?;
    let mut x = vec![0.0; dim];
    for (label, s) in specs.iter().enumerate() {
        for _ in 0..s.count {
            for (xj, mj) in x.iter_mut().zip(&s.mean) {
                let z: f64 = rng.sample(StandardNormal);
                *xj = mj + s.sigma * z;
            }
            out.push(&x, label)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Populations and streams
// ---------------------------------------------------------------------------

/// A distribution over labeled points that can be sampled reproducibly.
pub trait Population: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn stream(&self, seed: u64) -> Box<dyn PointStream + '_>;
}

/// A seeded source of points. Successive draws from one stream never repeat a
/// point of an empirical pool.
pub trait PointStream {
    fn dim(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// Append one point's features to `features`, returning its label.
    fn next_point(&mut self, features: &mut Vec<f64>) -> Result<usize>;

    fn draw(&mut self, n: usize) -> Result<Dataset> {
        let mut features = Vec::with_capacity(n * self.dim());
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(self.next_point(&mut features)?);
        }
        Dataset::from_flat(features, self.dim(), labels, self.num_classes(), "stream")
    }
}

/// Class-conditional spherical Gaussians with a uniform class prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussians {
    pub means: Vec<Vec<f64>>,
    pub sigmas: Vec<f64>,
}

impl ClassGaussians {
    pub fn new(means: Vec<Vec<f64>>, sigmas: Vec<f64>) -> Result<Self> {
        let dim = means.first().map(Vec::len).unwrap_or(0);
        if means.len() < 2 {
            return Err(Error::InvalidInput("at least two classes are required".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("class means must be non-empty".into()));
        }
        if let Some(m) = means.iter().find(|m| m.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: m.len(),
                context: "class mean",
            });
        }
        if sigmas.len() != means.len() {
            return Err(Error::Dimension {
                expected: means.len(),
                found: sigmas.len(),
                context: "per-class sigma count",
            });
        }
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("class sigmas must be finite and >= 0".into()));
        }
        Ok(ClassGaussians { means, sigmas })
    }

    pub fn from_specs(specs: &[GaussianClassSpec]) -> Result<Self> {
        Self::new(
            specs.iter().map(|s| s.mean.clone()).collect(),
            specs.iter().map(|s| s.sigma).collect(),
        )
    }

    /// Class means drawn i.i.d. from `N(0, mean_scale^2)` per coordinate.
    pub fn random(
        num_classes: usize,
        dim: usize,
        mean_scale: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = seed::rng(seed);
        let means = (0..num_classes)
            .map(|_| {
                (0..dim)
                    .map(|_| mean_scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self::new(means, vec![sigma; num_classes])
    }
}

impl Population for ClassGaussians {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn num_classes(&self) -> usize {
        self.means.len()
    }

    fn stream(&self, seed: u64) -> Box<dyn PointStream + '_> {
        Box::new(GaussianStream {
            pop: self,
            rng: seed::rng(seed),
        })
    }
}

struct GaussianStream<'a> {
    pop: &'a ClassGaussians,
    rng: seed::Rng,
}

impl PointStream for GaussianStream<'_> {
    fn dim(&self) -> usize {
        self.pop.dim()
    }

    fn num_classes(&self) -> usize {
        self.pop.num_classes()
    }

    fn next_point(&mut self, features: &mut Vec<f64>) -> Result<usize> {
        let label = self.rng.random_range(0..self.pop.means.len());
        let sigma = self.pop.sigmas[label];
        for &m in &self.pop.means[label] {
            let z: f64 = self.rng.sample(StandardNormal);
            features.push(m + sigma * z);
        }
        Ok(label)
    }
}

/// A finite dataset treated as a population. Each stream walks a seeded
/// permutation, so draws within one stream are without replacement.
#[derive(Clone, Debug)]
pub struct EmpiricalPool {
    pub data: Dataset,
}

impl Population for EmpiricalPool {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    fn stream(&self, seed: u64) -> Box<dyn PointStream + '_> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut seed::rng(seed));
        Box::new(PoolStream {
            data: &self.data,
            order,
            next: 0,
        })
    }
}

struct PoolStream<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    next: usize,
}

impl PointStream for PoolStream<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    fn next_point(&mut self, features: &mut Vec<f64>) -> Result<usize> {
        let i = *self.order.get(self.next).ok_or_else(|| {
            Error::Insufficient(format!("empirical pool of {} points exhausted", self.data.len()))
        })?;
        self.next += 1;
        features.extend_from_slice(self.data.row(i));
        Ok(self.data.label(i))
    }
}

/// `(1 - alpha) * source + alpha * target`.
#[derive(Clone, Copy, Debug)]
pub struct MixtureSpec<'a> {
    pub source: &'a dyn Population,
    pub target: &'a dyn Population,
    pub shift_ratio: f64,
}

impl<'a> MixtureSpec<'a> {
    pub fn new(source: &'a dyn Population, target: &'a dyn Population, shift_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&shift_ratio) {
            return Err(Error::InvalidInput(format!(
                "shift ratio {shift_ratio} outside [0, 1]"
            )));
        }
        check_compatible(source.dim(), source.num_classes(), target.dim(), target.num_classes())?;
        Ok(MixtureSpec {
            source,
            target,
            shift_ratio,
        })
    }

    /// The source component is seeded with `seed` itself and the target with
    /// `child(seed, TARGET_DATA)`, so the boundary ratios reproduce the
    /// corresponding component stream exactly.
    pub fn stream(&self, seed: u64) -> MixtureStream<'a> {
        MixtureStream::new(
            self.source.stream(seed),
            self.target.stream(seed::child(seed, stream::TARGET_DATA)),
            self.shift_ratio,
            seed::child(seed, stream::MIXTURE),
        )
    }
}

fn check_compatible(d1: usize, k1: usize, d2: usize, k2: usize) -> Result<()> {
    if d1 != d2 {
        return Err(Error::Dimension {
            expected: d1,
            found: d2,
            context: "mixture component dimension",
        });
    }
    if k1 != k2 {
        return Err(Error::Dimension {
            expected: k1,
            found: k2,
            context: "mixture component class count",
        });
    }
    Ok(())
}

/// Per-sample Bernoulli choice between two component streams.
pub struct MixtureStream<'a> {
    source: Box<dyn PointStream + 'a>,
    target: Box<dyn PointStream + 'a>,
    shift_ratio: f64,
    rng: seed::Rng,
    origins: Vec<bool>,
}

impl<'a> MixtureStream<'a> {
    pub fn new(
        source: Box<dyn PointStream + 'a>,
        target: Box<dyn PointStream + 'a>,
        shift_ratio: f64,
        seed: u64,
    ) -> Self {
        MixtureStream {
            source,
            target,
            shift_ratio,
            rng: seed::rng(seed),
            origins: Vec::new(),
        }
    }

    /// One flag per point drawn so far: `true` when it came from the target.
    pub fn origins(&self) -> &[bool] {
        &self.origins
    }
}

impl PointStream for MixtureStream<'_> {
    fn dim(&self) -> usize {
        self.source.dim()
    }

    fn num_classes(&self) -> usize {
        self.source.num_classes()
    }

    fn next_point(&mut self, features: &mut Vec<f64>) -> Result<usize> {
        // No Bernoulli draw at the boundaries, so alpha in {0, 1} leaves the
        // component streams untouched.
        let from_target = if self.shift_ratio <= 0.0 {
            false
        } else if self.shift_ratio >= 1.0 {
            true
        } else {
            self.rng.random::<f64>() < self.shift_ratio
        };
        self.origins.push(from_target);
        if from_target {
            self.target.next_point(features)
        } else {
            self.source.next_point(features)
        }
    }
}

pub fn mixture_sample(mix: &MixtureSpec<'_>, n: usize, seed: u64) -> Result<Dataset> {
    mixture_sample_traced(mix, n, seed).map(|(d, _)| d)
}

/// Like [`mixture_sample`], also returning the per-sample origin flags.
pub fn mixture_sample_traced(
    mix: &MixtureSpec<'_>,
    n: usize,
    seed: u64,
) -> Result<(Dataset, Vec<bool>)> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let mut s = mix.stream(seed);
    let data = s.draw(n)?;
    Ok((data, s.origins().to_vec()))
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        fs::File::open(p)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(p, e))?;
        Ok(buf)
    };
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    parse_idx(&images, &labels).map_err(|e| match e {
        Error::Format { path, message } if path.as_os_str() == "<images>" => Error::Format {
            path: images_path.as_ref().to_path_buf(),
            message,
        },
        Error::Format { path, message } if path.as_os_str() == "<labels>" => Error::Format {
            path: labels_path.as_ref().to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parse an IDX image/label pair already in memory. Pixels are scaled to [0, 1].
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let img_err = |m: String| Error::Format {
        path: "<images>".into(),
        message: m,
    };
    let lbl_err = |m: String| Error::Format {
        path: "<labels>".into(),
        message: m,
    };

    let mut r = ByteReader::new(images);
    let magic = r.array().map(u32::from_be_bytes).ok_or_else(|| img_err("truncated header".into()))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(img_err(format!("bad magic number {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.array().map(u32::from_be_bytes).ok_or_else(|| img_err("truncated header".into()))? as usize;
    }
    let [n, rows, cols] = dims;
    let dim = rows * cols;
    let pixels = r
        .take(n * dim)
        .ok_or_else(|| img_err(format!("truncated: expected {} pixel bytes", n * dim)))?;

    let mut r = ByteReader::new(labels);
    let magic = r.array().map(u32::from_be_bytes).ok_or_else(|| lbl_err("truncated header".into()))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(lbl_err(format!("bad magic number {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n_labels = r.array().map(u32::from_be_bytes).ok_or_else(|| lbl_err("truncated header".into()))? as usize;
    if n_labels != n {
        return Err(Error::InvalidInput(format!(
            "image/label count mismatch: {n} images, {n_labels} labels"
        )));
    }
    let raw_labels = r
        .take(n)
        .ok_or_else(|| lbl_err(format!("truncated: expected {n} labels")))?;

    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| usize::from(l)).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::from_flat(features, dim, labels, num_classes, "idx")
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Load a headed CSV. Every column but `label_column` must be numeric; labels
/// are re-indexed densely in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("label column '{label_column}' not found"),
        })?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no feature columns".into(),
        });
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        for &c in &feature_cols {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: headers[c].to_string(),
                message: format!("non-numeric value '{cell}'"),
            })?;
            features.push(v);
        }
        let raw = rec.get(label_idx).unwrap_or("").to_string();
        let next = index.len();
        labels.push(*index.entry(raw).or_insert(next));
    }
    let num_classes = index.len().max(1);
    Dataset::from_flat(features, feature_cols.len(), labels, num_classes, format!("csv:{}", path.display()))
}
