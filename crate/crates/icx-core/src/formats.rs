//! Binary file formats for feature matrices, ordinal labels and spatial
//! feature maps, plus the in-memory types that mirror them.
//!
//! All three formats share the same conventions: a 4-byte ASCII magic, a
//! little-endian `u32` version, little-endian integer header fields, then a
//! packed little-endian `f32` (or `u8`) payload. Values are stored in 32-bit
//! precision on disk and widened to `f64` for computation.
//!
//! ```text
//! FMAT  magic "FMAT", u32 version=1, u32 dtype=1 (f32), u64 rows, u64 cols,
//!       rows*cols f32 row-major
//! LBL1  magic "LBL1", u32 version=1, u32 class count K, u64 count,
//!       count u8 class indices (each < K)
//! FMAP  magic "FMAP", u32 version=1, u64 images, u32 height, u32 width,
//!       u32 channels, images*H*W*C f32 image-major row-major channel-last
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const FMAT_MAGIC: &[u8; 4] = b"FMAT";
const LBL_MAGIC: &[u8; 4] = b"LBL1";
const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u32 = 1;

/// N x m matrix of per-sample feature vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    /// Free-text provenance tag; in-memory only, not serialized.
    pub source: Option<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "feature matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at flat index {pos}"
            )));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            source: None,
        })
    }

    /// Builds from `f64` values, narrowing to the on-disk `f32` precision.
    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| v as f32).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Widens to `f64` for computation.
    pub fn to_f64(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| {
            f64::from(self.data[i * self.cols + j])
        })
    }

    /// Copy of the given half-open row range.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return Err(Error::Validation(format!(
                "row range {start}..{end} out of bounds for {} rows",
                self.rows
            )));
        }
        FeatureMatrix::new(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }
}

/// Ordinal class labels in `0..K-1`, paired with an explicit class count so
/// a file that happens to contain one class still knows how many exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    values: Vec<u8>,
    classes: u32,
}

impl LabelVector {
    pub fn new(values: Vec<u8>, classes: u32) -> Result<Self> {
        if !(2..=256).contains(&classes) {
            return Err(Error::Validation(format!(
                "class count must be in 2..=256, got {classes}"
            )));
        }
        if let Some(pos) = values.iter().position(|&v| u32::from(v) >= classes) {
            return Err(Error::Validation(format!(
                "label {} at position {pos} is not below class count {classes}",
                values[pos]
            )));
        }
        Ok(LabelVector { values, classes })
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn classes(&self) -> u32 {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.values.len() {
            return Err(Error::Validation(format!(
                "label range {start}..{end} out of bounds for {} labels",
                self.values.len()
            )));
        }
        LabelVector::new(self.values[start..end].to_vec(), self.classes)
    }
}

/// Per-image spatial feature tensor from the layer before global average
/// pooling: `images` tensors of shape `height x width x channels`,
/// channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFeatureMap {
    images: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl SpatialFeatureMap {
    pub fn new(
        images: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if images == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Validation(
                "spatial map dimensions must all be positive".into(),
            ));
        }
        let expect = images * height * width * channels;
        if data.len() != expect {
            return Err(Error::Dimension(format!(
                "spatial map {images}x{height}x{width}x{channels} needs {expect} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite spatial value at flat index {pos}"
            )));
        }
        Ok(SpatialFeatureMap {
            images,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, image: usize, y: usize, x: usize, c: usize) -> f32 {
        let idx = ((image * self.height + y) * self.width + x) * self.channels + c;
        self.data[idx]
    }

    /// Feature vector of one grid cell, widened to `f64`.
    pub fn cell(&self, image: usize, y: usize, x: usize) -> Array1<f64> {
        Array1::from_iter((0..self.channels).map(|c| f64::from(self.at(image, y, x, c))))
    }

    /// Global average over the spatial grid of one image.
    pub fn pooled(&self, image: usize) -> Array1<f64> {
        let mut acc = vec![0.0_f64; self.channels];
        for y in 0..self.height {
            for x in 0..self.width {
                for (c, slot) in acc.iter_mut().enumerate() {
                    *slot += f64::from(self.at(image, y, x, c));
                }
            }
        }
        let cells = (self.height * self.width) as f64;
        Array1::from_iter(acc.into_iter().map(|v| v / cells))
    }
}

// ---------------------------------------------------------------------------
// binary encoding
// ---------------------------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or_else(|| Error::Format(format!("{what} length overflows")))?;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated file while reading {what}: expected {end} bytes, found {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != want {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(want),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes(s.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let s = self.take(8, what)?;
        Ok(u64::from_le_bytes(s.try_into().unwrap()))
    }

    fn f32_payload(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let n = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("{what} length overflows")))?;
        let s = self.take(n, what)?;
        Ok(s.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "trailing bytes: expected {} total, found {}",
                self.pos,
                self.bytes.len()
            )));
        }
        Ok(())
    }
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn usize_field(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} field {v} exceeds address space")))
}

pub fn write_feature_matrix(mat: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(28 + mat.data.len() * 4);
    buf.extend_from_slice(FMAT_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&DTYPE_F32.to_le_bytes());
    buf.extend_from_slice(&(mat.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(mat.cols as u64).to_le_bytes());
    for v in &mat.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes);
    r.magic(FMAT_MAGIC)?;
    check_version(r.u32("version")?)?;
    let dtype = r.u32("dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!(
            "unsupported dtype code {dtype}, expected {DTYPE_F32}"
        )));
    }
    let rows = usize_field(r.u64("rows")?, "rows")?;
    let cols = usize_field(r.u64("cols")?, "cols")?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("rows*cols overflows: {rows}x{cols}")))?;
    let data = r.f32_payload(count, "matrix payload")?;
    r.expect_end()?;
    FeatureMatrix::new(rows, cols, data)
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(20 + labels.values.len());
    buf.extend_from_slice(LBL_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&labels.classes.to_le_bytes());
    buf.extend_from_slice(&(labels.values.len() as u64).to_le_bytes());
    buf.extend_from_slice(&labels.values);
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes);
    r.magic(LBL_MAGIC)?;
    check_version(r.u32("version")?)?;
    let classes = r.u32("class count")?;
    let count = usize_field(r.u64("count")?, "count")?;
    let values = r.take(count, "label payload")?.to_vec();
    r.expect_end()?;
    LabelVector::new(values, classes)
}

pub fn write_spatial_map(map: &SpatialFeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(28 + map.data.len() * 4);
    buf.extend_from_slice(FMAP_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(map.images as u64).to_le_bytes());
    buf.extend_from_slice(&(map.height as u32).to_le_bytes());
    buf.extend_from_slice(&(map.width as u32).to_le_bytes());
    buf.extend_from_slice(&(map.channels as u32).to_le_bytes());
    for v in &map.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn read_spatial_map(path: impl AsRef<Path>) -> Result<SpatialFeatureMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes);
    r.magic(FMAP_MAGIC)?;
    check_version(r.u32("version")?)?;
    let images = usize_field(r.u64("images")?, "images")?;
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    let channels = r.u32("channels")? as usize;
    let count = images
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Format("spatial map size overflows".into()))?;
    let data = r.f32_payload(count, "spatial payload")?;
    r.expect_end()?;
    SpatialFeatureMap::new(images, height, width, channels, data)
}
