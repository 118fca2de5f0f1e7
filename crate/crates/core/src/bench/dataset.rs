//! MNIST IDX ingestion and stratified sampling.

use std::path::{Path, PathBuf};

use faer::Mat;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ridge::{self, LabelMatrix};
use crate::rng::CounterStream;
use crate::{Error, Result};

/// Digit classes; labels are stored as `1..=CLASSES`.
pub const CLASSES: usize = 10;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unspecified,
}

/// Grey-level images with 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<u8>,
    labels: Vec<u32>,
    rows: usize,
    cols: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        images: Vec<u8>,
        labels: Vec<u32>,
        rows: usize,
        cols: usize,
        split: Split,
    ) -> Result<Self> {
        let pixels = rows * cols;
        if pixels == 0 {
            return Err(Error::InvalidArgument("images must have positive size".into()));
        }
        if images.len() != labels.len() * pixels {
            return Err(Error::dim(format!(
                "{} bytes of pixels for {} labels of {rows}x{cols} images",
                images.len(),
                labels.len()
            )));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l == 0 || l as usize > CLASSES)
        {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes: CLASSES,
            });
        }
        Ok(Self {
            images,
            labels,
            rows,
            cols,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * self.pixels()..(i + 1) * self.pixels()]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_matrix(&self) -> LabelMatrix {
        ridge::encode_labels(&self.labels, CLASSES).expect("labels validated on construction")
    }

    /// Pixels divided by 255, one row per image.
    pub fn normalized(&self) -> Mat<f64> {
        let p = self.pixels();
        Mat::from_fn(self.len(), p, |i, j| f64::from(self.images[i * p + j]) / 255.0)
    }

    /// The images at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let p = self.pixels();
        let mut images = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rows: self.rows,
            cols: self.cols,
            split: self.split,
        }
    }

    /// The first `n` images.
    pub fn head(&self, n: usize) -> Dataset {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    /// Hex SHA-256 over the shape, pixels and labels.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        h.update(&self.images);
        for l in &self.labels {
            h.update([*l as u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for &l in &self.labels {
            counts[l as usize - 1] += 1;
        }
        counts
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Idx {
            path: path.to_path_buf(),
            offset: offset as u64,
            message: format!("file ends before the header word at offset {offset}"),
        })
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let need = n * rows * cols;
    let data = &bytes[16..];
    if data.len() != need {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 16 + data.len().min(need) as u64,
            message: format!(
                "header declares {n} images of {rows}x{cols} ({need} bytes) but {} bytes follow",
                data.len()
            ),
        });
    }
    Ok((n, rows, cols, data.to_vec()))
}

/// Parses an IDX label file into raw 0-based labels.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let data = &bytes[8..];
    if data.len() != n {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 8 + data.len().min(n) as u64,
            message: format!("header declares {n} labels but {} bytes follow", data.len()),
        });
    }
    if let Some(i) = data.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::Idx {
            path: path.to_path_buf(),
            offset: 8 + i as u64,
            message: format!("label {} outside 0..{CLASSES}", data[i]),
        });
    }
    Ok(data.to_vec())
}

/// Loads an image file and its label file; labels are shifted to `1..=10`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    load_idx_split(images, labels, Split::Unspecified)
}

pub fn load_idx_split(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&read_file(images)?, images)?;
    let raw = parse_idx_labels(&read_file(labels)?, labels)?;
    if raw.len() != n {
        return Err(Error::Idx {
            path: labels.to_path_buf(),
            offset: 4,
            message: format!("{} labels for {n} images in {}", raw.len(), images.display()),
        });
    }
    Dataset::new(
        pixels,
        raw.into_iter().map(|l| u32::from(l) + 1).collect(),
        rows,
        cols,
        split,
    )
}

/// Standard file names of a split inside an MNIST directory.
pub fn mnist_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Test => "t10k",
        _ => "train",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir, split);
    load_idx_split(&images, &labels, split)
}

fn indices_by_class(labels: &[u32]) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize - 1].push(i);
    }
    by_class
}

/// Per-class quotas summing to `total`: equal shares, the remainder going to
/// the lowest labels, and shortfalls of small classes handed on to the rest.
fn quotas(available: &[usize], total: usize) -> Vec<usize> {
    let mut quota = vec![0; available.len()];
    let mut left = total;
    loop {
        let open: Vec<usize> = (0..available.len())
            .filter(|&c| quota[c] < available[c])
            .collect();
        if left == 0 || open.is_empty() {
            return quota;
        }
        let share = left / open.len();
        let mut extra = left % open.len();
        for &c in &open {
            let want = share + usize::from(extra > 0);
            extra = extra.saturating_sub(1);
            let take = want.min(available[c] - quota[c]);
            quota[c] += take;
            left -= take;
        }
    }
}

fn shuffled(mut v: Vec<usize>, seed: u64, class: usize) -> Vec<usize> {
    v.shuffle(&mut CounterStream::new(seed, class as u64, 0x5355_4253));
    v
}

/// Stratified sample of `n_sub` images without replacement, in original
/// order.
pub fn subsample(ds: &Dataset, n_sub: usize, seed: u64) -> Result<Dataset> {
    Ok(ds.select(&subsample_indices(ds.labels(), n_sub, seed)?))
}

pub fn subsample_indices(labels: &[u32], n_sub: usize, seed: u64) -> Result<Vec<usize>> {
    if n_sub > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n_sub} samples from {}",
            labels.len()
        )));
    }
    let by_class = indices_by_class(labels);
    let available: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = quotas(&available, n_sub);
    let mut picked: Vec<usize> = by_class
        .into_iter()
        .enumerate()
        .flat_map(|(c, idx)| {
            let mut s = shuffled(idx, seed, c);
            s.truncate(quota[c]);
            s
        })
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Stratified `(fit, validation)` partition of positions `0..labels.len()`
/// with about `fraction` of every class held out. Both lists are sorted.
pub fn validation_split(labels: &[u32], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for (c, idx) in indices_by_class(labels).into_iter().enumerate() {
        let take = ((idx.len() as f64) * fraction).round() as usize;
        let s = shuffled(idx, seed ^ 0x5641_4c49_4441_5445, c);
        val.extend_from_slice(&s[..take]);
        fit.extend_from_slice(&s[take..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}
