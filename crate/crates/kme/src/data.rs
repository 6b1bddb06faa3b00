//! Datasets, the benchmark mixture generator, and the on-disk formats.
//!
//! File formats are deliberately plain: comma-separated decimal floats with
//! no quoting.  Floats are written in Rust's shortest round-trip notation,
//! so `read(write(d))` reproduces the exact bit patterns.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::kernel::KernelSpec;
use crate::rkhs::WeightedExpansion;
use crate::{KmeError, Result};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// A dense real-valued dataset: `n` rows of dimension `dim`, stored row-major.
///
/// Invariants: at least one row, at least one column, every value finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    dim: usize,
    /// Optional column names, carried through CSV round trips.
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from a row-major buffer of `n * dim` values.
    pub fn new(values: Vec<f64>, n: usize, dim: usize) -> Result<Self> {
        if n == 0 {
            return Err(KmeError::Empty("dataset rows"));
        }
        if dim == 0 {
            return Err(KmeError::InvalidConfig("dataset dim must be >= 1".into()));
        }
        if values.len() != n * dim {
            return Err(KmeError::DimMismatch { expected: n * dim, got: values.len() });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(KmeError::NonFinite("dataset values"));
        }
        Ok(Self { values, n, dim, column_names: None })
    }

    /// Builds a dataset from a list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(KmeError::Empty("dataset rows"));
        }
        let dim = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                let _ = i;
                return Err(KmeError::DimMismatch { expected: dim, got: r.len() });
            }
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            values.extend_from_slice(r);
        }
        Self::new(values, rows.len(), dim)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// The raw row-major buffer.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// A new dataset containing rows `[0, count)`.
    pub fn head(&self, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(KmeError::Empty("dataset rows"));
        }
        if count > self.n {
            return Err(KmeError::InvalidConfig(format!(
                "requested {count} rows but dataset has {}",
                self.n
            )));
        }
        Ok(Self {
            values: self.values[..count * self.dim].to_vec(),
            n: count,
            dim: self.dim,
            column_names: self.column_names.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Benchmark mixture
// ---------------------------------------------------------------------------

/// Number of mixture components in the benchmark generator.
pub const MIXTURE_COMPONENTS: usize = 10;
/// Mean of the Gaussian prior from which component centers are drawn.
pub const CENTER_PRIOR_MEAN: f64 = 100.0;
/// Variance of the center prior (covariance `200 * I`).
pub const CENTER_PRIOR_VAR: f64 = 200.0;
/// Per-component variance of the rows (covariance `30 * I`).
pub const COMPONENT_VAR: f64 = 30.0;

/// The 10-component Gaussian mixture used by the experiment harness.
///
/// Component weights are proportional to `1, 1/2, ..., 1/10`; component
/// centers are drawn from `N([100, ..., 100], 200 I)`; rows are drawn from
/// `N(center_k, 30 I)`.  Everything is a deterministic function of
/// `(dim, seed, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub dim: usize,
    pub seed: u64,
}

/// A generated sample together with its diagnostics: which component each
/// row came from and the component centers that were drawn.
#[derive(Debug, Clone)]
pub struct MixtureSample {
    pub data: Dataset,
    pub labels: Vec<usize>,
    pub centers: Dataset,
}

/// Normalized component weights `p_k` proportional to `1/(k+1)`.
pub fn mixture_weights() -> [f64; MIXTURE_COMPONENTS] {
    let mut w = [0.0; MIXTURE_COMPONENTS];
    let mut total = 0.0;
    for (k, slot) in w.iter_mut().enumerate() {
        *slot = 1.0 / (k as f64 + 1.0);
        total += *slot;
    }
    for slot in w.iter_mut() {
        *slot /= total;
    }
    w
}

/// Draws `n` rows from the benchmark mixture.  See [`MixtureSpec`].
pub fn generate_mixture(spec: &MixtureSpec, n: usize) -> Result<Dataset> {
    Ok(generate_mixture_labeled(spec, n)?.data)
}

/// As [`generate_mixture`], but also returns component labels and centers so
/// tests and diagnostics can check the per-component statistics.
///
/// Draw order (fixed for reproducibility): the 10 component centers first
/// (each `dim` standard normals), then per row one uniform for the component
/// choice followed by `dim` standard normals.
pub fn generate_mixture_labeled(spec: &MixtureSpec, n: usize) -> Result<MixtureSample> {
    if spec.dim == 0 {
        return Err(KmeError::InvalidConfig("mixture dim must be >= 1".into()));
    }
    if n == 0 {
        return Err(KmeError::Empty("requested mixture rows"));
    }
    let dim = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let center_std = CENTER_PRIOR_VAR.sqrt();
    let mut centers = Vec::with_capacity(MIXTURE_COMPONENTS * dim);
    for _ in 0..MIXTURE_COMPONENTS * dim {
        let z: f64 = rng.sample(StandardNormal);
        centers.push(CENTER_PRIOR_MEAN + center_std * z);
    }

    let weights = mixture_weights();
    let mut cdf = [0.0; MIXTURE_COMPONENTS];
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        cdf[k] = acc;
    }
    cdf[MIXTURE_COMPONENTS - 1] = 1.0;

    let row_std = COMPONENT_VAR.sqrt();
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let k = cdf.iter().position(|c| u < *c).unwrap_or(MIXTURE_COMPONENTS - 1);
        labels.push(k);
        for d in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            values.push(centers[k * dim + d] + row_std * z);
        }
    }

    Ok(MixtureSample {
        data: Dataset::new(values, n, dim)?,
        labels,
        centers: Dataset::new(centers, MIXTURE_COMPONENTS, dim)?,
    })
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    // std's Display for f64 prints the shortest decimal string that parses
    // back to the same bits, which is exactly the round-trip guarantee the
    // file format promises.
    format!("{v}")
}

fn split_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

fn parse_cell(cell: &str, line_no: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| KmeError::CsvParse {
        line: line_no,
        reason: format!("non-numeric cell '{}'", cell.trim()),
    })?;
    if !v.is_finite() {
        return Err(KmeError::CsvParse {
            line: line_no,
            reason: format!("non-finite value '{}'", cell.trim()),
        });
    }
    Ok(v)
}

/// Parses a dataset from CSV text.  A header row is optional: if every cell
/// of the first line parses as a number it is data, otherwise it is taken as
/// column names.  Errors name the offending (1-based) line.
pub fn parse_dataset_csv(text: &str) -> Result<Dataset> {
    let lines = split_lines(text);
    if lines.is_empty() {
        return Err(KmeError::Empty("csv file"));
    }

    let first_cells: Vec<&str> = lines[0].split(',').collect();
    let header_is_data = first_cells.iter().all(|c| c.trim().parse::<f64>().is_ok());
    let (names, dim, data_start) = if header_is_data {
        (None, first_cells.len(), 0)
    } else {
        let names: Vec<String> = first_cells.iter().map(|c| c.trim().to_string()).collect();
        (Some(names), first_cells.len(), 1)
    };

    let mut values = Vec::new();
    let mut n = 0;
    for (idx, line) in lines.iter().enumerate().skip(data_start) {
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim {
            return Err(KmeError::CsvParse {
                line: line_no,
                reason: format!("ragged row: expected {dim} columns, got {}", cells.len()),
            });
        }
        for cell in cells {
            values.push(parse_cell(cell, line_no)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(KmeError::Empty("csv data rows (file contained only a header)"));
    }
    let mut ds = Dataset::new(values, n, dim)?;
    ds.column_names = names;
    Ok(ds)
}

/// Reads a dataset CSV file (see [`parse_dataset_csv`]).
pub fn read_csv(path: &Path) -> Result<Dataset> {
    parse_dataset_csv(&fs::read_to_string(path)?)
}

/// Serializes a dataset to CSV text; the header is written only if the
/// dataset carries column names.
pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::new();
    if let Some(names) = &data.column_names {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for row in data.rows() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes a dataset CSV file (see [`dataset_to_csv`]).
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_csv(data))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Release CSV + metadata sidecar
// ---------------------------------------------------------------------------

/// Metadata sidecar written next to every release as `<release>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseMeta {
    /// `"subspace"`, `"rff"`, or `"baseline"`.
    pub algorithm: String,
    /// Kernel family name; always `"exp_quadratic"`.
    pub kernel: String,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub n_private: usize,
    pub m_synthetic: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_features: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_bound: Option<f64>,
}

/// Path of the metadata sidecar for a release file: `<release>.meta.json`.
pub fn meta_path(release_path: &Path) -> PathBuf {
    let mut s = release_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Serializes a release to CSV text with the mandatory
/// `weight,z_1,...,z_D` header.
pub fn release_to_csv(release: &WeightedExpansion) -> String {
    let dim = release.dim();
    let mut out = String::from("weight");
    for d in 1..=dim {
        out.push_str(&format!(",z_{d}"));
    }
    out.push('\n');
    for (w, row) in release.weights().iter().zip(release.points().rows()) {
        out.push_str(&fmt_f64(*w));
        for v in row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Writes a release CSV plus its metadata sidecar.
pub fn write_release(release: &WeightedExpansion, meta: &ReleaseMeta, path: &Path) -> Result<()> {
    fs::write(path, release_to_csv(release))?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| KmeError::Metadata(format!("serialize sidecar: {e}")))?;
    fs::write(meta_path(path), json + "\n")?;
    Ok(())
}

/// Parses release CSV text; the `weight,z_1,...,z_D` header is mandatory.
pub fn parse_release_csv(text: &str) -> Result<(Vec<f64>, Dataset)> {
    let lines = split_lines(text);
    if lines.is_empty() {
        return Err(KmeError::Empty("csv file"));
    }
    let header: Vec<&str> = lines[0].split(',').collect();
    let dim = header.len().saturating_sub(1);
    let header_ok = header.first().map(|c| c.trim() == "weight").unwrap_or(false)
        && dim >= 1
        && header[1..]
            .iter()
            .enumerate()
            .all(|(d, c)| c.trim() == format!("z_{}", d + 1));
    if !header_ok {
        return Err(KmeError::CsvParse {
            line: 1,
            reason: "missing or malformed release header (expected weight,z_1,...,z_D)".into(),
        });
    }

    let mut weights = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 1 {
            return Err(KmeError::CsvParse {
                line: line_no,
                reason: format!("ragged row: expected {} columns, got {}", dim + 1, cells.len()),
            });
        }
        weights.push(parse_cell(cells[0], line_no)?);
        for cell in &cells[1..] {
            values.push(parse_cell(cell, line_no)?);
        }
    }
    if weights.is_empty() {
        return Err(KmeError::Empty("csv data rows (file contained only a header)"));
    }
    let n = weights.len();
    Ok((weights, Dataset::new(values, n, dim)?))
}

/// Reads a release CSV and its metadata sidecar, reconstructing the weighted
/// expansion (kernel and L1 flag come from the sidecar).
pub fn read_release(path: &Path) -> Result<(WeightedExpansion, ReleaseMeta)> {
    let (weights, points) = parse_release_csv(&fs::read_to_string(path)?)?;
    let meta_file = meta_path(path);
    let meta_text = fs::read_to_string(&meta_file).map_err(|e| {
        KmeError::Metadata(format!("missing sidecar {}: {e}", meta_file.display()))
    })?;
    let meta: ReleaseMeta = serde_json::from_str(&meta_text)
        .map_err(|e| KmeError::Metadata(format!("malformed sidecar: {e}")))?;
    if meta.kernel != "exp_quadratic" {
        return Err(KmeError::Metadata(format!("unknown kernel '{}'", meta.kernel)));
    }
    let kernel = KernelSpec::exp_quadratic(meta.gamma)?;
    let expansion = WeightedExpansion::new(points, weights, kernel, meta.l1_bound)?;
    Ok((expansion, meta))
}

// ---------------------------------------------------------------------------
