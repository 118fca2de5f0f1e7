//! Software model of the optical random projector.
//!
//! Pipeline per image: grey levels are quantized to `block² + 1` levels, each
//! pixel becomes a `block × block` patch of micromirrors with that many lit
//! (row-major fill), the binary frame is multiplied by a complex Gaussian
//! transmission matrix `H`, the camera records `|y|²` with optional noise, and
//! the sensor is averaged over `bin × bin` patches. Features are the square
//! roots of the binned intensities.
//!
//! `H` is never stored: entry `(r, c)` is drawn from the counter-based
//! generator keyed by `(seed, r, c)`, one sensor row at a time.

use num_complex::Complex64;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::rng::{self, CounterStream, Philox4x32, STREAM_TRANSMISSION};
use crate::{Error, Result};

/// Image, DMD and camera dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    /// Side of the square grey-level image.
    pub image_side: usize,
    /// Micromirrors per pixel side; `block² + 1` grey levels.
    pub block_side: usize,
    /// Zero border (in mirrors) added before the DMD rescale.
    pub border: usize,
    /// Horizontal replication factor of the DMD rescale.
    pub expand_x: usize,
    /// Vertical replication factor of the DMD rescale.
    pub expand_y: usize,
    /// Side of the square camera region.
    pub sensor_side: usize,
    /// Side of the averaging patch applied to the camera region.
    pub bin_side: usize,
}

impl Geometry {
    /// 28² MNIST digits, 4×4 mirror blocks, 1920×1080 DMD, 400² camera
    /// binned to 100².
    pub const CANONICAL: Geometry = Geometry {
        image_side: 28,
        block_side: 4,
        border: 4,
        expand_x: 16,
        expand_y: 9,
        sensor_side: 400,
        bin_side: 4,
    };

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.image_side,
            self.block_side,
            self.expand_x,
            self.expand_y,
            self.sensor_side,
            self.bin_side,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "geometry has a zero dimension: {self:?}"
            )));
        }
        if self.sensor_side % self.bin_side != 0 {
            return Err(Error::InvalidArgument(format!(
                "sensor side {} is not a multiple of the bin side {}",
                self.sensor_side, self.bin_side
            )));
        }
        if self.block_side * self.block_side > usize::from(u8::MAX) {
            return Err(Error::InvalidArgument("mirror block too large".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> u8 {
        (self.block_side * self.block_side) as u8
    }

    pub fn pixels(&self) -> usize {
        self.image_side * self.image_side
    }

    pub fn frame_side(&self) -> usize {
        self.image_side * self.block_side
    }

    /// Length of the flattened compact frame, the column count of `H`.
    pub fn input_dim(&self) -> usize {
        self.frame_side() * self.frame_side()
    }

    /// Camera pixels, the row count of `H`.
    pub fn output_dim(&self) -> usize {
        self.sensor_side * self.sensor_side
    }

    pub fn bins_side(&self) -> usize {
        self.sensor_side / self.bin_side
    }

    /// Largest feature count the camera can deliver.
    pub fn feature_capacity(&self) -> usize {
        self.bins_side() * self.bins_side()
    }

    /// `(width, height)` of the expanded DMD image.
    pub fn expanded_size(&self) -> (usize, usize) {
        let padded = self.frame_side() + 2 * self.border;
        (padded * self.expand_x, padded * self.expand_y)
    }

    /// Flat frame index of the `k`-th mirror (row-major) of pixel `pixel`.
    pub fn mirror_index(&self, pixel: usize, k: usize) -> usize {
        let (i, j) = (pixel / self.image_side, pixel % self.image_side);
        let b = self.block_side;
        (b * i + k / b) * self.frame_side() + b * j + k % b
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::CANONICAL
    }
}

/// `round(g · levels / 255)` with halves rounded up.
pub fn quantize_level(g: u8, levels: u8) -> u8 {
    let num = 2 * u32::from(g) * u32::from(levels) + 255;
    (num / 510) as u8
}

/// Quantizes 8-bit grey levels to `0..=16`.
pub fn quantize_grey(img: &[u8]) -> Vec<u8> {
    quantize_grey_levels(img, 16)
}

pub fn quantize_grey_levels(img: &[u8], levels: u8) -> Vec<u8> {
    img.iter().map(|&g| quantize_level(g, levels)).collect()
}

/// Binary micromirror pattern on the compact (unpadded, unscaled) grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmdFrame {
    side: usize,
    bits: Vec<u8>,
    source: Option<String>,
}

impl DmdFrame {
    pub fn dark(side: usize) -> Self {
        Self {
            side,
            bits: vec![0; side * side],
            source: None,
        }
    }

    pub fn from_bits(side: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(Error::dim(format!(
                "{} bits for a {side}x{side} frame",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("frame bits must be 0 or 1".into()));
        }
        Ok(Self {
            side,
            bits,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.side + col] == 1
    }

    pub fn set(&mut self, row: usize, col: usize, lit: bool) {
        self.bits[row * self.side + col] = u8::from(lit);
    }

    pub fn lit_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn lit_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// The frame as a 0/1 vector of length `side²`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

/// Lights the first `q` mirrors (row-major) of each pixel's block.
pub fn encode_dmd(q_img: &[u8], geom: &Geometry) -> Result<DmdFrame> {
    if q_img.len() != geom.pixels() {
        return Err(Error::dim(format!(
            "{} pixels for a {}x{} image",
            q_img.len(),
            geom.image_side,
            geom.image_side
        )));
    }
    let levels = geom.levels();
    let mut frame = DmdFrame::dark(geom.frame_side());
    for (pixel, &q) in q_img.iter().enumerate() {
        if q > levels {
            return Err(Error::InvalidArgument(format!(
                "quantized level {q} at pixel {pixel} exceeds {levels}"
            )));
        }
        for k in 0..q as usize {
            frame.bits[geom.mirror_index(pixel, k)] = 1;
        }
    }
    Ok(frame)
}

/// Lit-mirror count of every block.
pub fn decode_dmd(frame: &DmdFrame, geom: &Geometry) -> Result<Vec<u8>> {
    if frame.side != geom.frame_side() {
        return Err(Error::dim(format!(
            "frame side {} does not match geometry frame side {}",
            frame.side,
            geom.frame_side()
        )));
    }
    let per_block = geom.block_side * geom.block_side;
    Ok((0..geom.pixels())
        .map(|pixel| {
            (0..per_block)
                .map(|k| frame.bits[geom.mirror_index(pixel, k)])
                .sum()
        })
        .collect())
}

/// Full-resolution DMD image, row-major, `height` rows of `width` mirrors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedFrame {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<u8>,
}

impl ExpandedFrame {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x] == 1
    }

    pub fn lit_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// Pads the compact frame with the zero border and replicates every mirror
/// into an `expand_x × expand_y` block.
pub fn expand_frame(frame: &DmdFrame, geom: &Geometry) -> Result<ExpandedFrame> {
    if frame.side != geom.frame_side() {
        return Err(Error::dim(format!(
            "frame side {} does not match geometry frame side {}",
            frame.side,
            geom.frame_side()
        )));
    }
    let (width, height) = geom.expanded_size();
    let mut bits = vec![0u8; width * height];
    for r in 0..frame.side {
        for c in 0..frame.side {
            if !frame.get(r, c) {
                continue;
            }
            let y0 = (r + geom.border) * geom.expand_y;
            let x0 = (c + geom.border) * geom.expand_x;
            for y in y0..y0 + geom.expand_y {
                bits[y * width + x0..y * width + x0 + geom.expand_x].fill(1);
            }
        }
    }
    Ok(ExpandedFrame {
        width,
        height,
        bits,
    })
}

/// Seeded description of the transmission matrix `H` (`output_dim × input_dim`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpec {
    pub seed: u64,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Standard deviation of the real and of the imaginary part of each entry.
    pub component_std: f64,
}

impl TransmissionSpec {
    pub fn new(seed: u64, input_dim: usize, output_dim: usize) -> Self {
        Self {
            seed,
            input_dim,
            output_dim,
            component_std: 1.0,
        }
    }

    pub fn for_geometry(seed: u64, geom: &Geometry) -> Self {
        Self::new(seed, geom.input_dim(), geom.output_dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "transmission matrix dimensions must be positive".into(),
            ));
        }
        if !(self.component_std > 0.0 && self.component_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "component_std must be positive, got {}",
                self.component_std
            )));
        }
        Ok(())
    }

    fn generator(&self) -> Philox4x32 {
        Philox4x32::new(self.seed)
    }

    /// `H[row, col]`.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        entry_with(&self.generator(), self.component_std, row, col)
    }
}

// Ziggurat draws: the device path generates ~10^9 entries per seed, and
// Box-Muller's ln and sin_cos made that the dominant cost.
#[inline]
fn entry_with(g: &Philox4x32, std: f64, row: usize, col: usize) -> Complex64 {
    let mut s = CounterStream::tagged(*g, row as u64, col as u32, STREAM_TRANSMISSION);
    let re: f64 = StandardNormal.sample(&mut s);
    let im: f64 = StandardNormal.sample(&mut s);
    Complex64::new(re * std, im * std)
}

/// `y = Hx` for an arbitrary real input, generating `H` row by row.
///
/// Zero entries of `x` are skipped and the remaining columns are summed in
/// increasing index order, so the result does not depend on scheduling.
pub fn speckle_field_linear(x: &[f64], spec: &TransmissionSpec) -> Result<Vec<Complex64>> {
    speckle_field_rows(x, spec, 0..spec.output_dim)
}

/// Rows `rows` of `Hx`, for readouts that only need part of the camera.
pub fn speckle_field_rows(
    x: &[f64],
    spec: &TransmissionSpec,
    rows: std::ops::Range<usize>,
) -> Result<Vec<Complex64>> {
    spec.validate()?;
    if x.len() != spec.input_dim {
        return Err(Error::dim(format!(
            "input of length {} for a transmission matrix with {} columns",
            x.len(),
            spec.input_dim
        )));
    }
    if rows.end > spec.output_dim {
        return Err(Error::dim(format!(
            "rows up to {} requested from a matrix with {} rows",
            rows.end, spec.output_dim
        )));
    }
    let support: Vec<(usize, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect();
    let g = spec.generator();
    let std = spec.component_std;
    Ok(rows
        .into_par_iter()
        .map(|r| {
            support.iter().fold(Complex64::new(0.0, 0.0), |acc, &(c, v)| {
                acc + entry_with(&g, std, r, c) * v
            })
        })
        .collect())
}

/// Field leaving the medium for a binary DMD frame.
pub fn speckle_field(frame: &DmdFrame, spec: &TransmissionSpec) -> Result<Vec<Complex64>> {
    speckle_field_linear(&frame.to_vector(), spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMode {
    #[default]
    Off,
    /// 2×2 box average over neighbouring camera pixels.
    Smear,
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(CorrelationMode::Off),
            "smear" => Ok(CorrelationMode::Smear),
            other => Err(Error::InvalidArgument(format!(
                "unknown correlation mode {other:?} (expected off or smear)"
            ))),
        }
    }
}

/// Camera model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub shot_noise: bool,
    /// Mean photon count of a pixel at the frame-mean intensity.
    pub photon_budget: f64,
    /// 0 (analog) or 8.
    pub quantize_bits: u8,
    pub correlation: CorrelationMode,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            shot_noise: false,
            photon_budget: 1e4,
            quantize_bits: 0,
            correlation: CorrelationMode::Off,
        }
    }
}

impl DetectorSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_budget > 0.0 && self.photon_budget.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "photon budget must be positive, got {}",
                self.photon_budget
            )));
        }
        if self.quantize_bits != 0 && self.quantize_bits != 8 {
            return Err(Error::InvalidArgument(format!(
                "quantize_bits must be 0 or 8, got {}",
                self.quantize_bits
            )));
        }
        Ok(())
    }
}

/// Row-major grid of camera intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SensorGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} values for a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }
}

/// 2×2 box average; the last row and column reuse themselves at the edge.
fn smear(grid: &SensorGrid) -> SensorGrid {
    let (rows, cols) = (grid.rows, grid.cols);
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let r1 = (r + 1).min(rows - 1);
        for c in 0..cols {
            let c1 = (c + 1).min(cols - 1);
            out[r * cols + c] =
                0.25 * (grid.get(r, c) + grid.get(r, c1) + grid.get(r1, c) + grid.get(r1, c1));
        }
    }
    SensorGrid {
        rows,
        cols,
        data: out,
    }
}

/// Applies the detector chain to a grid of noiseless intensities:
/// pixel crosstalk, then shot noise, then 8-bit quantization.
///
/// Shot noise scales the grid so its mean equals `photon_budget` photons,
/// draws Poisson counts keyed by `(noise_seed, pixel)` and scales back.
/// Quantization maps `[0, max]` of the grid onto `0..=255` and back.
pub fn detect_intensity(
    grid: SensorGrid,
    spec: &DetectorSpec,
    noise_seed: u64,
) -> Result<SensorGrid> {
    spec.validate()?;
    let mut grid = if spec.correlation == CorrelationMode::Smear && !grid.data.is_empty() {
        smear(&grid)
    } else {
        grid
    };
    if spec.shot_noise {
        let mean = grid.mean();
        if mean > 0.0 {
            let scale = spec.photon_budget / mean;
            for (pixel, value) in grid.data.iter_mut().enumerate() {
                let lambda = *value * scale;
                if lambda > 0.0 {
                    let mut stream = rng::CounterStream::new(noise_seed, pixel as u64, 0);
                    let count: f64 = Poisson::new(lambda)
                        .map_err(|e| Error::InvalidArgument(format!("Poisson mean {lambda}: {e}")))?
                        .sample(&mut stream);
                    *value = count / scale;
                }
            }
        }
    }
    if spec.quantize_bits == 8 {
        let max = grid.data.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            for value in grid.data.iter_mut() {
                *value = (*value / max * 255.0).round() * max / 255.0;
            }
        }
    }
    Ok(grid)
}

/// Camera readout of a field over a `rows × cols` region.
pub fn detect_grid(
    y: &[Complex64],
    rows: usize,
    cols: usize,
    spec: &DetectorSpec,
    noise_seed: u64,
) -> Result<SensorGrid> {
    let grid = SensorGrid::new(rows, cols, y.iter().map(|z| z.norm_sqr()).collect())?;
    detect_intensity(grid, spec, noise_seed)
}

/// Camera readout of a full canonical 400×400 field.
pub fn detect(y: &[Complex64], spec: &DetectorSpec, noise_seed: u64) -> Result<SensorGrid> {
    let side = Geometry::CANONICAL.sensor_side;
    if y.len() != side * side {
        return Err(Error::dim(format!(
            "field of length {} for a {side}x{side} camera",
            y.len()
        )));
    }
    detect_grid(y, side, side, spec, noise_seed)
}

/// Means over aligned `bin × bin` patches, row-major.
pub fn bin_grid(grid: &SensorGrid, bin: usize) -> Result<Vec<f64>> {
    if bin == 0 || grid.rows % bin != 0 || grid.cols % bin != 0 {
        return Err(Error::dim(format!(
            "{}x{} grid cannot be split into {bin}x{bin} patches",
            grid.rows, grid.cols
        )));
    }
    let (br, bc) = (grid.rows / bin, grid.cols / bin);
    let norm = 1.0 / (bin * bin) as f64;
    let mut out = vec![0.0; br * bc];
    for r in 0..grid.rows {
        let row = &grid.data[r * grid.cols..(r + 1) * grid.cols];
        let dst = &mut out[(r / bin) * bc..(r / bin + 1) * bc];
        for (c, v) in row.iter().enumerate() {
            dst[c / bin] += v;
        }
    }
    out.iter_mut().for_each(|v| *v *= norm);
    Ok(out)
}

/// Canonical 400×400 → 100×100 binning.
pub fn bin_output(grid: &SensorGrid) -> Result<Vec<f64>> {
    let side = Geometry::CANONICAL.sensor_side;
    if grid.rows != side || grid.cols != side {
        return Err(Error::dim(format!(
            "expected a {side}x{side} grid, got {}x{}",
            grid.rows, grid.cols
        )));
    }
    bin_grid(grid, Geometry::CANONICAL.bin_side)
}

/// Camera rows read out to deliver `n_features` binned outputs.
///
/// The region covers every bin row that holds a requested feature, plus one
/// extra sensor row when crosstalk couples it in. Detector statistics (mean
/// for shot noise, maximum for quantization) are taken over this region.
pub fn readout_rows(geom: &Geometry, detectors: &[DetectorSpec], n_features: usize) -> usize {
    let bin_rows = n_features.div_ceil(geom.bins_side());
    let extra = detectors
        .iter()
        .any(|d| d.correlation == CorrelationMode::Smear) as usize;
    (bin_rows * geom.bin_side + extra).min(geom.sensor_side)
}

/// Everything the simulated device needs besides the images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub geometry: Geometry,
    pub transmission: TransmissionSpec,
    pub noise_seed: u64,
    /// Cap on the intensity buffer held per batch of images, in bytes.
    pub batch_bytes: usize,
}

impl DeviceConfig {
    pub fn canonical(seed: u64) -> Self {
        let geometry = Geometry::CANONICAL;
        Self {
            geometry,
            transmission: TransmissionSpec::for_geometry(seed, &geometry),
            noise_seed: rng::derive_seed(seed, 0x6e6f_6973_65),
            batch_bytes: 1 << 30,
        }
    }

    pub fn with_geometry(seed: u64, geometry: Geometry) -> Self {
        Self {
            geometry,
            transmission: TransmissionSpec::for_geometry(seed, &geometry),
            ..Self::canonical(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.transmission.validate()?;
        if self.transmission.input_dim != self.geometry.input_dim()
            || self.transmission.output_dim != self.geometry.output_dim()
        {
            return Err(Error::dim(format!(
                "transmission matrix is {}x{} but the geometry needs {}x{}",
                self.transmission.output_dim,
                self.transmission.input_dim,
                self.geometry.output_dim(),
                self.geometry.input_dim()
            )));
        }
        Ok(())
    }

    /// Noise seed of image `index` (its position in the dataset).
    pub fn image_noise_seed(&self, index: usize) -> u64 {
        rng::derive_seed(self.noise_seed, index as u64)
    }
}

/// Per-image pipeline, stage by stage. Reference for
/// [`device_features`] and useful for inspecting a single digit.
pub fn device_features_single(
    image: &[u8],
    index: usize,
    config: &DeviceConfig,
    detector: &DetectorSpec,
    n_features: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    let geom = &config.geometry;
    check_feature_count(geom, n_features)?;
    let q = quantize_grey_levels(image, geom.levels());
    let frame = encode_dmd(&q, geom)?;
    let rows = readout_rows(geom, std::slice::from_ref(detector), n_features);
    let window = speckle_field_rows(
        &frame.to_vector(),
        &config.transmission,
        0..rows * geom.sensor_side,
    )?;
    let grid = detect_grid(
        &window,
        rows,
        geom.sensor_side,
        detector,
        config.image_noise_seed(index),
    )?;
    Ok(features_from_grid(&grid, geom, n_features))
}

fn features_from_grid(grid: &SensorGrid, geom: &Geometry, n_features: usize) -> Vec<f64> {
    let bin_rows = n_features.div_ceil(geom.bins_side());
    let usable = SensorGrid {
        rows: bin_rows * geom.bin_side,
        cols: grid.cols,
        data: grid.data[..bin_rows * geom.bin_side * grid.cols].to_vec(),
    };
    let binned = bin_grid(&usable, geom.bin_side).expect("usable rows are whole bins");
    binned[..n_features].iter().map(|v| v.sqrt()).collect()
}

fn check_feature_count(geom: &Geometry, n_features: usize) -> Result<()> {
    if n_features == 0 || n_features > geom.feature_capacity() {
        return Err(Error::InvalidArgument(format!(
            "requested {n_features} features; the camera provides 1..={}",
            geom.feature_capacity()
        )));
    }
    Ok(())
}

/// Device features of `images` (row-major stack of `image_side²` grey
/// levels) for one detector.
pub fn device_features(
    images: &[u8],
    config: &DeviceConfig,
    detector: &DetectorSpec,
    n_features: usize,
) -> Result<FeatureMatrix> {
    Ok(device_features_multi(images, 0, config, std::slice::from_ref(detector), n_features)?
        .pop()
        .expect("one detector in, one matrix out"))
}

/// Device features for several detectors from a single pass over `H`.
///
/// `first_index` is the dataset position of the first image, used to key
/// per-image detector noise.
pub fn device_features_multi(
    images: &[u8],
    first_index: usize,
    config: &DeviceConfig,
    detectors: &[DetectorSpec],
    n_features: usize,
) -> Result<Vec<FeatureMatrix>> {
    config.validate()?;
    for d in detectors {
        d.validate()?;
    }
    let geom = config.geometry;
    check_feature_count(&geom, n_features)?;
    let pixels = geom.pixels();
    if images.len() % pixels != 0 {
        return Err(Error::dim(format!(
            "{} bytes is not a whole number of {}x{} images",
            images.len(),
            geom.image_side,
            geom.image_side
        )));
    }
    let n = images.len() / pixels;
    let levels = geom.levels();
    let stride = levels as usize + 1;

    // (pixel, level) for every lit pixel of every image.
    let active: Vec<Vec<(u32, u8)>> = images
        .chunks(pixels)
        .map(|img| {
            img.iter()
                .enumerate()
                .map(|(p, &g)| (p as u32, quantize_level(g, levels)))
                .filter(|&(_, q)| q > 0)
                .collect()
        })
        .collect();

    let mirror_cols: Vec<usize> = (0..pixels)
        .flat_map(|p| (0..levels as usize).map(move |k| (p, k)))
        .map(|(p, k)| geom.mirror_index(p, k))
        .collect();

    let rows = readout_rows(&geom, detectors, n_features);
    let window = rows * geom.sensor_side;
    let batch = (config.batch_bytes / (window * 8)).clamp(1, n.max(1));
    let generator = config.transmission.generator();
    let std = config.transmission.component_std;

    let mut outputs: Vec<faer::Mat<f64>> = detectors
        .iter()
        .map(|_| faer::Mat::zeros(n, n_features))
        .collect();

    for start in (0..n).step_by(batch) {
        let end = (start + batch).min(n);
        let width = end - start;
        let batch_active = &active[start..end];
        // Layout: intensity of camera pixel o for batch image b at o·width + b.
        let mut intensity = vec![0.0f64; window * width];
        intensity.par_chunks_mut(width).enumerate().for_each_init(
            || (vec![Complex64::new(0.0, 0.0); pixels * stride], ()),
            |(prefix, _), (o, out)| {
                for p in 0..pixels {
                    let base = p * stride;
                    let mut acc = Complex64::new(0.0, 0.0);
                    prefix[base] = acc;
                    for k in 0..levels as usize {
                        acc += entry_with(&generator, std, o, mirror_cols[p * levels as usize + k]);
                        prefix[base + k + 1] = acc;
                    }
                }
                for (slot, lit) in out.iter_mut().zip(batch_active) {
                    let y = lit.iter().fold(Complex64::new(0.0, 0.0), |acc, &(p, q)| {
                        acc + prefix[p as usize * stride + q as usize]
                    });
                    *slot = y.norm_sqr();
                }
            },
        );

        let rows_out: Vec<Result<Vec<Vec<f64>>>> = (0..width)
            .into_par_iter()
            .map(|b| {
                let data: Vec<f64> = (0..window).map(|o| intensity[o * width + b]).collect();
                let grid = SensorGrid::new(rows, geom.sensor_side, data)?;
                let seed = config.image_noise_seed(first_index + start + b);
                detectors
                    .iter()
                    .map(|d| {
                        let g = detect_intensity(grid.clone(), d, seed)?;
                        Ok(features_from_grid(&g, &geom, n_features))
                    })
                    .collect()
            })
            .collect();
        for (b, per_detector) in rows_out.into_iter().enumerate() {
            for (out, feats) in outputs.iter_mut().zip(per_detector?) {
                for (j, v) in feats.into_iter().enumerate() {
                    out[(start + b, j)] = v;
                }
            }
        }
    }

    let fingerprint_base = serde_json::json!({
        "path": "device",
        "config": config,
        "n_features": n_features,
    });
    outputs
        .into_iter()
        .zip(detectors)
        .map(|(x, d)| {
            let mut meta = fingerprint_base.clone();
            meta["detector"] = serde_json::to_value(d).expect("detector serializes");
            FeatureMatrix::new(x, crate::features::fingerprint_of(&meta))
        })
        .collect()
}
