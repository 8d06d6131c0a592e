//! Datasets: synthetic Gaussian blobs, delimited text, and IDX image files.
//!
//! Every loader either returns a fully validated [`Dataset`] or an error;
//! there are no partial datasets.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    /// Held out for model selection; never used for final numbers.
    Validation,
    Eval,
}

/// `N×D` features with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::InvalidSpec("feature dimension must be >= 1".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                what: "feature buffer length",
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        if num_classes < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidSpec(format!("label {bad} out of range for {num_classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("features must be finite".into()));
        }
        Ok(Self { features, dim, labels, num_classes, split })
    }

    /// Re-declares the class count, e.g. so separately loaded splits agree.
    pub fn with_num_classes(self, num_classes: usize) -> Result<Self> {
        Self::new(self.features, self.dim, self.labels, num_classes, self.split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false; construction rejects empty datasets.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the rows at `indices` into a contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.sample(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }
}

/// Shuffled visiting order for one epoch; a permutation of `0..n` fixed by
/// `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Isotropic Gaussian clusters around class means drawn on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Per-coordinate noise standard deviation.
    pub spread: f64,
    pub seed: u64,
}

impl BlobsSpec {
    /// The 20-class desk benchmark: a linear probe lands between 60% and 80%.
    pub fn desk_benchmark(seed: u64) -> Self {
        Self { classes: 20, per_class: 100, dim: 32, spread: 0.375, seed }
    }
}

/// Draws one split of a blobs dataset. All splits share class means and use
/// independent noise streams.
pub fn make_blobs(spec: &BlobsSpec, split: Split) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::InvalidSpec(format!("blobs need at least 2 classes, got {}", spec.classes)));
    }
    if spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::InvalidSpec("blobs need per_class >= 1 and dim >= 1".into()));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::InvalidSpec(format!("spread must be >= 0, got {}", spec.spread)));
    }
    let means = class_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(match split {
        Split::Train => 1,
        Split::Eval => 2,
        Split::Validation => 3,
    });
    let n = spec.classes * spec.per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(m + spec.spread * noise);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, spec.dim, labels, spec.classes, split)
}

/// Unit-norm class centres, fixed by the seed alone.
pub fn class_means(spec: &BlobsSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelimitedOptions {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Zero-based column holding the integer class label.
    pub label_column: usize,
    #[serde(default)]
    pub has_header: bool,
    /// Defaults to `max(label) + 1`.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

fn default_delimiter() -> char {
    ','
}

impl DelimitedOptions {
    pub fn new(delimiter: char, label_column: usize) -> Self {
        Self { delimiter, label_column, has_header: false, num_classes: None }
    }
}

/// Parses delimited text with one sample per row.
pub fn parse_delimited(text: &[u8], opts: &DelimitedOptions, split: Split) -> Result<Dataset> {
    if !opts.delimiter.is_ascii() {
        return Err(Error::InvalidSpec(format!("delimiter {:?} must be ASCII", opts.delimiter)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(opts.has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text);

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if opts.label_column >= record.len() {
            return Err(Error::Parse {
                line,
                message: format!("label column {} missing from {} columns", opts.label_column, record.len()),
            });
        }
        if record.len() < 2 {
            return Err(Error::Parse { line, message: "need at least one feature column".into() });
        }
        dim.get_or_insert(record.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            if col == opts.label_column {
                let label: usize = cell.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("label {cell:?} is not a non-negative integer"),
                })?;
                labels.push(label);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Parse { line, message: format!("column {col}: {cell:?} is not a number") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, message: format!("column {col}: non-finite value") });
                }
                features.push(v);
            }
        }
    }
    let dim = dim.ok_or(Error::EmptyDataset)?;
    let num_classes = match opts.num_classes {
        Some(c) => c,
        None => labels.iter().max().map_or(0, |m| m.saturating_add(1)),
    };
    Dataset::new(features, dim, labels, num_classes, split)
}

pub fn load_delimited(path: &Path, opts: &DelimitedOptions, split: Split) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_delimited(&bytes, opts, split)
}

/// Writes `ds` so that [`parse_delimited`] with the same options reads it back
/// exactly. Labels go in `opts.label_column`.
pub fn write_delimited<W: Write>(ds: &Dataset, opts: &DelimitedOptions, out: W) -> Result<()> {
    if opts.label_column > ds.dim() {
        return Err(Error::InvalidSpec(format!("label column {} beyond {} features", opts.label_column, ds.dim())));
    }
    let mut writer = csv::WriterBuilder::new().delimiter(opts.delimiter as u8).from_writer(out);
    let io_err = |e: csv::Error| Error::Parse { line: 0, message: e.to_string() };
    if opts.has_header {
        let header: Vec<String> = (0..=ds.dim())
            .map(|c| if c == opts.label_column { "label".to_string() } else { format!("f{c}") })
            .collect();
        writer.write_record(&header).map_err(io_err)?;
    }
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds.sample(i).iter().map(|v| format!("{v:?}")).collect();
        row.insert(opts.label_column, ds.labels()[i].to_string());
        writer.write_record(&row).map_err(io_err)?;
    }
    writer.flush().map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
    Ok(())
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded IDX image file (unsigned bytes, three dimensions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header: {} bytes", bytes.len())))
}

fn idx_body<'a>(bytes: &'a [u8], header: usize, dims: &[u32]) -> Result<&'a [u8]> {
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::Idx("dimensions overflow".into()))?;
    let body = &bytes[header..];
    if body.len() < expected {
        return Err(Error::Idx(format!("truncated data: expected {expected} bytes, found {}", body.len())));
    }
    if body.len() > expected {
        return Err(Error::Idx(format!("{} trailing bytes", body.len() - expected)));
    }
    Ok(body)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Idx(format!("bad image magic {magic:#010x}")));
    }
    let (count, rows, cols) = (be_u32(bytes, 4)?, be_u32(bytes, 8)?, be_u32(bytes, 12)?);
    if rows == 0 || cols == 0 {
        return Err(Error::Idx(format!("empty image shape {rows}x{cols}")));
    }
    let body = idx_body(bytes, 16, &[count, rows, cols])?;
    Ok(IdxImages { count: count as usize, rows: rows as usize, cols: cols as usize, pixels: body.to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Idx(format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4)?;
    Ok(idx_body(bytes, 8, &[count])?.to_vec())
}

/// Flattens each image to `rows·cols` features scaled to `[0, 1]`.
pub fn idx_dataset(images: &IdxImages, labels: &[u8], num_classes: Option<usize>, split: Split) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::Idx(format!("{} images but {} labels", images.count, labels.len())));
    }
    let features = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(features, images.rows * images.cols, labels, classes, split)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, num_classes: Option<usize>, split: Split) -> Result<Dataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    idx_dataset(&parse_idx_images(&images)?, &parse_idx_labels(&labels)?, num_classes, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(spread: f64) -> BlobsSpec {
        BlobsSpec { classes: 4, per_class: 10, dim: 5, spread, seed: 9 }
    }

    #[test]
    fn zero_spread_puts_samples_on_means() {
        let ds = make_blobs(&spec(0.0), Split::Train).unwrap();
        let means = class_means(&spec(0.0));
        for i in 0..ds.len() {
            assert_eq!(ds.sample(i), means[ds.labels()[i]].as_slice());
        }
        // 1-NN against the training set is then perfect
        let eval = make_blobs(&spec(0.0), Split::Eval).unwrap();
        for i in 0..eval.len() {
            let nearest = (0..ds.len())
                .min_by(|&a, &b| {
                    let da: f64 = ds.sample(a).iter().zip(eval.sample(i)).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = ds.sample(b).iter().zip(eval.sample(i)).map(|(x, y)| (x - y).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(ds.labels()[nearest], eval.labels()[i]);
        }
    }

    #[test]
    fn blobs_are_seed_deterministic() {
        assert_eq!(make_blobs(&spec(0.3), Split::Train).unwrap(), make_blobs(&spec(0.3), Split::Train).unwrap());
        assert_ne!(make_blobs(&spec(0.3), Split::Train).unwrap(), make_blobs(&spec(0.3), Split::Eval).unwrap());
    }

    #[test]
    fn blobs_reject_bad_spec() {
        assert!(make_blobs(&BlobsSpec { classes: 1, ..spec(0.1) }, Split::Train).is_err());
        assert!(make_blobs(&BlobsSpec { per_class: 0, ..spec(0.1) }, Split::Train).is_err());
        assert!(make_blobs(&BlobsSpec { dim: 0, ..spec(0.1) }, Split::Train).is_err());
        assert!(make_blobs(&spec(-1.0), Split::Train).is_err());
    }

    #[test]
    fn means_are_unit_norm() {
        for m in class_means(&spec(0.1)) {
            let n: f64 = m.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 3, 0);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(50, 3, 0));
        assert_ne!(a, epoch_order(50, 3, 1));
        assert_ne!(a, epoch_order(50, 4, 0));
    }

    #[test]
    fn delimited_three_rows() {
        let text = b"0.5,1.5,0\n-1,2,1\n3,4.25,1\n";
        let ds = parse_delimited(text, &DelimitedOptions::new(',', 2), Split::Train).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.num_classes()), (3, 2, 2));
        assert_eq!(ds.sample(2), &[3.0, 4.25]);
        assert_eq!(ds.labels(), &[0, 1, 1]);
    }

    #[test]
    fn delimited_label_first_with_header() {
        let text = b"y;a;b\n1;0.5;1.5\n0;2;3\n";
        let opts = DelimitedOptions { has_header: true, ..DelimitedOptions::new(';', 0) };
        let ds = parse_delimited(text, &opts, Split::Eval).unwrap();
        assert_eq!(ds.sample(0), &[0.5, 1.5]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn delimited_reports_line_of_bad_cell() {
        let text = b"1,2,0\n3,abc,1\n";
        match parse_delimited(text, &DelimitedOptions::new(',', 2), Split::Train) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delimited_rejects_ragged_rows() {
        let text = b"1,2,0\n3,1\n";
        assert!(matches!(
            parse_delimited(text, &DelimitedOptions::new(',', 2), Split::Train),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn delimited_rejects_empty_and_bad_labels() {
        let opts = DelimitedOptions::new(',', 1);
        assert!(matches!(parse_delimited(b"", &opts, Split::Train), Err(Error::EmptyDataset)));
        assert!(parse_delimited(b"1.0,-1\n", &opts, Split::Train).is_err());
        assert!(parse_delimited(b"1.0,0\n2.0,0\n", &opts, Split::Train).is_err(), "single class");
        assert!(parse_delimited(b"nan,0\n2.0,1\n", &opts, Split::Train).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err =
            load_delimited(Path::new("/no/such/file.csv"), &DelimitedOptions::new(',', 0), Split::Train).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3];
        for v in [count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 8, 1];
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn idx_two_images() {
        let img = parse_idx_images(&idx_images(2, 2, 2, &[0, 255, 51, 102, 255, 0, 0, 0])).unwrap();
        let labels = parse_idx_labels(&idx_labels(&[1, 0])).unwrap();
        let ds = idx_dataset(&img, &labels, None, Split::Train).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 4));
        assert_eq!(ds.sample(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.sample(1), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ds.labels(), &[1, 0]);
    }

    #[test]
    fn idx_count_mismatch() {
        let img = parse_idx_images(&idx_images(2, 1, 1, &[1, 2])).unwrap();
        let labels = parse_idx_labels(&idx_labels(&[1, 0, 1])).unwrap();
        assert!(matches!(idx_dataset(&img, &labels, None, Split::Train), Err(Error::Idx(_))));
    }

    #[test]
    fn idx_rejects_malformed() {
        assert!(parse_idx_images(&idx_images(2, 2, 2, &[0; 7])).is_err(), "truncated");
        assert!(parse_idx_images(&idx_images(1, 1, 1, &[0; 2])).is_err(), "trailing");
        assert!(parse_idx_images(&idx_labels(&[1])).is_err(), "wrong magic");
        assert!(parse_idx_labels(&idx_images(1, 1, 1, &[0])).is_err(), "wrong magic");
        assert!(parse_idx_images(&[0, 0, 8]).is_err());
        assert!(parse_idx_images(&idx_images(u32::MAX, u32::MAX, u32::MAX, &[])).is_err());
        assert!(parse_idx_images(&idx_images(1, 0, 3, &[])).is_err());
    }
}
