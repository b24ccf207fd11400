//! Dataset ingestion: IDX image containers and labeled tabular CSV files,
//! plus the image preprocessing and feature standardization used by the
//! experiment protocols.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad IDX magic {found:#010x} at offset 0 (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated IDX file: expected {expected} payload bytes, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("IDX dimension sizes {dims:?} overflow addressable memory")]
    DimensionOverflow { dims: Vec<u32> },
    #[error("IDX file has {images} images but label file has {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("CSV is empty")]
    EmptyCsv,
    #[error("CSV has no `label` column")]
    NoLabelColumn,
    #[error("CSV has {0} `label` columns")]
    DuplicateLabelColumn(usize),
    #[error("CSV row {row}, column {column}: {reason}")]
    Cell {
        row: usize,
        column: usize,
        reason: String,
    },
    #[error("CSV row {row} has {got} fields, expected {expected}")]
    FieldCount {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("image has {got} pixels, expected {height}x{width}")]
    PixelCount {
        got: usize,
        height: usize,
        width: usize,
    },
    #[error("max pooling needs even image dimensions, got {height}x{width}")]
    OddPoolInput { height: usize, width: usize },
}

/// Ground-truth class of a sample in the one-class protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Normal,
    Anomalous,
}

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Open a file, transparently gunzipping when the path ends in `.gz`.
fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>, DataError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

fn read_u32_be(r: &mut impl Read) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Grey-scale images plus their class ids.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    images: Vec<Vec<u8>>,
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ImageDataset {
    pub fn new(
        images: Vec<Vec<u8>>,
        height: usize,
        width: usize,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        for img in &images {
            if img.len() != height * width {
                return Err(DataError::PixelCount {
                    got: img.len(),
                    height,
                    width,
                });
            }
        }
        Ok(Self {
            images,
            height,
            width,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Parse a big-endian IDX image file (magic `0x00000803`, then item count,
/// rows, and columns as u32, then raw bytes). Gzip accepted by suffix.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(Vec<Vec<u8>>, usize, usize), DataError> {
    let mut r = open_maybe_gz(path.as_ref())?;
    let magic = read_u32_be(&mut r)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = read_u32_be(&mut r)?;
    let rows = read_u32_be(&mut r)?;
    let cols = read_u32_be(&mut r)?;
    let per_image = (rows as usize)
        .checked_mul(cols as usize)
        .filter(|&n| n > 0)
        .ok_or(DataError::DimensionOverflow {
            dims: vec![count, rows, cols],
        })?;
    let total = per_image
        .checked_mul(count as usize)
        .filter(|&n| n < (1 << 33))
        .ok_or(DataError::DimensionOverflow {
            dims: vec![count, rows, cols],
        })?;

    let mut payload = Vec::with_capacity(total);
    r.read_to_end(&mut payload)?;
    if payload.len() != total {
        return Err(DataError::Truncated {
            expected: total,
            got: payload.len(),
        });
    }
    let images = payload.chunks_exact(per_image).map(|c| c.to_vec()).collect();
    Ok((images, rows as usize, cols as usize))
}

/// Parse a big-endian IDX label file (magic `0x00000801`, then item count,
/// then raw bytes).
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, DataError> {
    let mut r = open_maybe_gz(path.as_ref())?;
    let magic = read_u32_be(&mut r)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = read_u32_be(&mut r)? as usize;
    let mut labels = Vec::with_capacity(count);
    r.read_to_end(&mut labels)?;
    if labels.len() != count {
        return Err(DataError::Truncated {
            expected: count,
            got: labels.len(),
        });
    }
    Ok(labels)
}

/// Read paired image and label files into one dataset.
pub fn load_image_dataset(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<ImageDataset, DataError> {
    let (images, height, width) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    ImageDataset::new(images, height, width, labels)
}

/// Write images in the IDX layout read by [`read_idx_images`]. Fixture and
/// export helper; byte-exact round trip.
pub fn write_idx_images(
    path: impl AsRef<Path>,
    images: &[Vec<u8>],
    height: usize,
    width: usize,
) -> Result<(), DataError> {
    let mut f = File::create(path)?;
    f.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(images.len() as u32).to_be_bytes())?;
    f.write_all(&(height as u32).to_be_bytes())?;
    f.write_all(&(width as u32).to_be_bytes())?;
    for img in images {
        f.write_all(img)?;
    }
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<(), DataError> {
    let mut f = File::create(path)?;
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

/// Scale pixels to `[0, 1]`, max-pool 2x2 with stride 2, and flatten
/// row-major. A 28x28 image becomes 196 features.
pub fn preprocess_image(pixels: &[u8], height: usize, width: usize) -> Result<Vec<f64>, DataError> {
    if pixels.len() != height * width {
        return Err(DataError::PixelCount {
            got: pixels.len(),
            height,
            width,
        });
    }
    if !height.is_multiple_of(2) || !width.is_multiple_of(2) {
        return Err(DataError::OddPoolInput { height, width });
    }
    let out_h = height / 2;
    let out_w = width / 2;
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let (y, x) = (oy * 2, ox * 2);
            let m = pixels[y * width + x]
                .max(pixels[y * width + x + 1])
                .max(pixels[(y + 1) * width + x])
                .max(pixels[(y + 1) * width + x + 1]);
            out.push(m as f64 / 255.0);
        }
    }
    Ok(out)
}

/// Numeric features with normal/anomalous labels.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    feature_names: Vec<String>,
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl TabularDataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<Label>,
    ) -> Self {
        debug_assert_eq!(features.len(), labels.len());
        Self {
            feature_names,
            features,
            labels,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.features.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn normal_indices(&self) -> Vec<usize> {
        (0..self.num_rows())
            .filter(|&i| self.labels[i] == Label::Normal)
            .collect()
    }

    pub fn anomalous_indices(&self) -> Vec<usize> {
        (0..self.num_rows())
            .filter(|&i| self.labels[i] == Label::Anomalous)
            .collect()
    }
}

/// Parse a UTF-8 comma-separated file with a header row. Exactly one column
/// must be named `label` and hold 0 (normal) or 1 (anomalous); every other
/// column is a numeric feature, kept in column order.
pub fn read_tabular_csv(path: impl AsRef<Path>) -> Result<TabularDataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or(DataError::EmptyCsv)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_columns: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, name)| **name == "label")
        .map(|(i, _)| i)
        .collect();
    let label_col = match label_columns.as_slice() {
        [] => return Err(DataError::NoLabelColumn),
        [one] => *one,
        many => return Err(DataError::DuplicateLabelColumn(many.len())),
    };
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, name)| name.to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(DataError::FieldCount {
                row,
                got: fields.len(),
                expected: columns.len(),
            });
        }
        let mut feature_row = Vec::with_capacity(feature_names.len());
        for (column, field) in fields.iter().enumerate() {
            if column == label_col {
                match *field {
                    "0" => labels.push(Label::Normal),
                    "1" => labels.push(Label::Anomalous),
                    other => {
                        return Err(DataError::Cell {
                            row,
                            column,
                            reason: format!("label must be 0 or 1, got {other:?}"),
                        })
                    }
                }
            } else {
                let value: f64 = field.parse().map_err(|e| DataError::Cell {
                    row,
                    column,
                    reason: format!("not a number ({e}): {field:?}"),
                })?;
                feature_row.push(value);
            }
        }
        features.push(feature_row);
    }
    if features.is_empty() {
        return Err(DataError::EmptyCsv);
    }
    Ok(TabularDataset::new(feature_names, features, labels))
}

/// Per-feature affine transform fitted on a training split: subtract the
/// mean, divide by the population standard deviation. Zero-variance
/// features pass through unscaled and are flagged.
#[derive(Debug, Clone)]
pub struct Standardization {
    means: Vec<f64>,
    stds: Vec<f64>,
    zero_variance: Vec<usize>,
}

impl Standardization {
    /// Fit on the rows selected by `indices`.
    pub fn fit(data: &TabularDataset, indices: &[usize]) -> Self {
        let d = data.num_features();
        let n = indices.len().max(1) as f64;
        let mut means = vec![0.0; d];
        for &i in indices {
            for (m, &v) in means.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for &i in indices {
            for ((var, &mean), &v) in vars.iter_mut().zip(&means).zip(data.row(i)) {
                let dev = v - mean;
                *var += dev * dev;
            }
        }
        let mut stds = Vec::with_capacity(d);
        let mut zero_variance = Vec::new();
        for (j, var) in vars.iter().enumerate() {
            let std = (var / n).sqrt();
            if std < 1e-12 * (means[j].abs() + 1.0) {
                zero_variance.push(j);
                stds.push(1.0);
            } else {
                stds.push(std);
            }
        }
        Self {
            means,
            stds,
            zero_variance,
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    /// Feature indices whose training variance vanished; these are passed
    /// through with only the mean removed.
    pub fn zero_variance_features(&self) -> &[usize] {
        &self.zero_variance
    }
}

/// Per-feature affine transform mapping a training split onto `[0, 1]`:
/// subtract the minimum, divide by the range. Test values outside the
/// training range extrapolate linearly past the unit interval. Constant
/// features collapse to 0 and are flagged.
///
/// This is the natural scaling for the fourier embedding, whose standard
/// basis property lives on the grid `{0, 1/(p-1), ..., 1}` and whose period
/// `p/(p-1)` aliases inputs spread much wider than the unit interval.
#[derive(Debug, Clone)]
pub struct MinMaxScaling {
    mins: Vec<f64>,
    ranges: Vec<f64>,
    constant: Vec<usize>,
}

impl MinMaxScaling {
    /// Fit on the rows selected by `indices`.
    pub fn fit(data: &TabularDataset, indices: &[usize]) -> Self {
        let d = data.num_features();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for &i in indices {
            for (j, &v) in data.row(i).iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        let mut ranges = Vec::with_capacity(d);
        let mut constant = Vec::new();
        for j in 0..d {
            let range = maxs[j] - mins[j];
            if range <= 0.0 || !range.is_finite() {
                constant.push(j);
                ranges.push(1.0);
            } else {
                ranges.push(range);
            }
        }
        Self {
            mins,
            ranges,
            constant,
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mins)
            .zip(&self.ranges)
            .map(|((&v, &lo), &range)| (v - lo) / range)
            .collect()
    }

    pub fn constant_features(&self) -> &[usize] {
        &self.constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn idx_fixture_roundtrips_byte_for_byte() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("images.idx");
        let images = vec![vec![0u8, 50, 100, 255], vec![1, 2, 3, 4]];
        write_idx_images(&path, &images, 2, 2).unwrap();

        // byte-level layout: magic, count, rows, cols, pixels
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 2]);
        assert_eq!(&bytes[8..12], &[0, 0, 0, 2]);
        assert_eq!(&bytes[12..16], &[0, 0, 0, 2]);
        assert_eq!(&bytes[16..], &[0, 50, 100, 255, 1, 2, 3, 4]);

        let (parsed, h, w) = read_idx_images(&path).unwrap();
        assert_eq!((h, w), (2, 2));
        assert_eq!(parsed, images);
    }

    #[test]
    fn idx_labels_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.idx");
        write_idx_labels(&path, &[7, 1, 0, 9]).unwrap();
        assert_eq!(read_idx_labels(&path).unwrap(), vec![7, 1, 0, 9]);
    }

    #[test]
    fn gzipped_idx_is_accepted_by_suffix() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        let dir = tempdir().unwrap();
        let plain = dir.path().join("images.idx");
        let images = vec![vec![10u8, 20, 30, 40]];
        write_idx_images(&plain, &images, 2, 2).unwrap();

        let gz_path = dir.path().join("images.idx.gz");
        let mut enc = GzEncoder::new(File::create(&gz_path).unwrap(), Compression::default());
        enc.write_all(&std::fs::read(&plain).unwrap()).unwrap();
        enc.finish().unwrap();

        let (parsed, h, w) = read_idx_images(&gz_path).unwrap();
        assert_eq!((h, w), (2, 2));
        assert_eq!(parsed, images);
    }

    #[test]
    fn wrong_magic_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, 0x0000_0999u32.to_be_bytes()).unwrap();
        match read_idx_images(&path) {
            Err(DataError::BadMagic { found, expected }) => {
                assert_eq!(found, 0x999);
                assert_eq!(expected, 0x803);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.idx");
        let mut bytes = Vec::new();
        bytes.extend(0x0000_0803u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend(2u32.to_be_bytes());
        bytes.extend([1u8, 2, 3]); // 8 expected
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_idx_images(&path),
            Err(DataError::Truncated {
                expected: 8,
                got: 3
            })
        ));
    }

    #[test]
    fn all_zero_image_preprocesses_to_zero_vector() {
        let out = preprocess_image(&[0u8; 28 * 28], 28, 28).unwrap();
        assert_eq!(out.len(), 196);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_bright_pixel_survives_pooling_once() {
        let mut pixels = vec![0u8; 28 * 28];
        pixels[13 * 28 + 5] = 255;
        let out = preprocess_image(&pixels, 28, 28).unwrap();
        let ones: Vec<usize> = out
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones, vec![6 * 14 + 2]);
        assert_eq!(out[6 * 14 + 2], 1.0);
    }

    #[test]
    fn pooling_matches_naive_double_loop() {
        let pixels: Vec<u8> = (0..28 * 28).map(|i| (i * 31 % 256) as u8).collect();
        let out = preprocess_image(&pixels, 28, 28).unwrap();
        for oy in 0..14 {
            for ox in 0..14 {
                let mut best = 0u8;
                for dy in 0..2 {
                    for dx in 0..2 {
                        best = best.max(pixels[(oy * 2 + dy) * 28 + ox * 2 + dx]);
                    }
                }
                assert_eq!(out[oy * 14 + ox], best as f64 / 255.0);
            }
        }
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn odd_dimensions_are_rejected() {
        assert!(matches!(
            preprocess_image(&[0u8; 27 * 28], 27, 28),
            Err(DataError::OddPoolInput { .. })
        ));
    }

    #[test]
    fn csv_fixture_parses_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,b,label\n1.5,2.5,0\n-3.0,0.25,1\n0,1e3,0\n").unwrap();
        let ds = read_tabular_csv(&path).unwrap();
        assert_eq!(ds.num_rows(), 3);
        assert_eq!(ds.num_features(), 2);
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.row(0), &[1.5, 2.5]);
        assert_eq!(ds.row(1), &[-3.0, 0.25]);
        assert_eq!(ds.row(2), &[0.0, 1000.0]);
        assert_eq!(ds.label(0), Label::Normal);
        assert_eq!(ds.label(1), Label::Anomalous);
        assert_eq!(ds.anomalous_indices(), vec![1]);
    }

    #[test]
    fn csv_errors_carry_row_and_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,label\n1.0,0\nnot_a_number,1\n").unwrap();
        match read_tabular_csv(&path) {
            Err(DataError::Cell { row, column, .. }) => {
                assert_eq!((row, column), (2, 0));
            }
            other => panic!("unexpected {other:?}"),
        }

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(read_tabular_csv(&empty), Err(DataError::EmptyCsv)));

        let unlabeled = dir.path().join("unlabeled.csv");
        std::fs::write(&unlabeled, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            read_tabular_csv(&unlabeled),
            Err(DataError::NoLabelColumn)
        ));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "a,label\n1,0\n2,0,9\n").unwrap();
        assert!(matches!(
            read_tabular_csv(&ragged),
            Err(DataError::FieldCount { row: 2, got: 3, expected: 2 })
        ));
    }

    #[test]
    fn standardization_uses_only_the_training_split() {
        let ds = TabularDataset::new(
            vec!["x".into(), "y".into()],
            vec![
                vec![1.0, 10.0],
                vec![3.0, 30.0],
                vec![100.0, -50.0],
                vec![200.0, -70.0],
            ],
            vec![Label::Normal; 4],
        );
        let stats = Standardization::fit(&ds, &[0, 1]);
        let train0 = stats.apply_row(ds.row(0));
        let train1 = stats.apply_row(ds.row(1));
        for j in 0..2 {
            let mean = (train0[j] + train1[j]) / 2.0;
            let var = (train0[j] * train0[j] + train1[j] * train1[j]) / 2.0 - mean * mean;
            assert!(mean.abs() < 1e-9, "train mean {mean}");
            assert!((var - 1.0).abs() < 1e-9, "train var {var}");
        }
        // test rows keep a visibly nonzero mean under the train transform
        let t2 = stats.apply_row(ds.row(2));
        let t3 = stats.apply_row(ds.row(3));
        assert!((t2[0] + t3[0]).abs() / 2.0 > 10.0);
    }

    #[test]
    fn minmax_scaling_maps_training_range_onto_unit_interval() {
        let ds = TabularDataset::new(
            vec!["x".into(), "c".into()],
            vec![vec![2.0, 7.0], vec![6.0, 7.0], vec![4.0, 7.0], vec![10.0, 7.0]],
            vec![Label::Normal; 4],
        );
        let scale = MinMaxScaling::fit(&ds, &[0, 1, 2]);
        assert_eq!(scale.constant_features(), &[1]);
        assert_eq!(scale.apply_row(&[2.0, 7.0]), vec![0.0, 0.0]);
        assert_eq!(scale.apply_row(&[6.0, 7.0]), vec![1.0, 0.0]);
        assert_eq!(scale.apply_row(&[4.0, 7.0]), vec![0.5, 0.0]);
        // out-of-range test values extrapolate past the unit interval
        assert_eq!(scale.apply_row(&[10.0, 9.0])[0], 2.0);
    }

    #[test]
    fn zero_variance_features_pass_through_flagged() {
        let ds = TabularDataset::new(
            vec!["const".into(), "live".into()],
            vec![vec![5.0, 1.0], vec![5.0, 3.0], vec![5.0, 5.0]],
            vec![Label::Normal; 3],
        );
        let stats = Standardization::fit(&ds, &[0, 1, 2]);
        assert_eq!(stats.zero_variance_features(), &[0]);
        let row = stats.apply_row(&[5.0, 3.0]);
        assert_eq!(row[0], 0.0); // mean removed, scale untouched
        assert!(row[1].abs() < 1e-12);
    }
}
