//! Tabular feature data: loading, three-way splitting, column projection and
//! standardization.
//!
//! A [`Dataset`] is immutable once built. Subsets produced by
//! [`split_three_way`] keep the parent's class vocabulary, so a small
//! validation or test split may not contain every class.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::search::rng::RngStream;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("cannot parse {value:?} as a finite number at data row {row}, column {col}")]
    ParseError { row: usize, col: usize, value: String },
    #[error("data row {row} has {found} cells, header has {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("single class: label column has fewer than 2 distinct classes")]
    SingleClass,
    #[error("dataset invariant violated: {0}")]
    Invalid(String),
    #[error("feature mask length {mask} does not match feature count {features}")]
    LengthMismatch { mask: usize, features: usize },
    #[error("feature mask selects no feature")]
    EmptyMask,
    #[error("scaler arity {stats} does not match feature count {features}")]
    ArityMismatch { stats: usize, features: usize },
    #[error("invalid split specification: {0}")]
    InvalidSplit(String),
    #[error("{rows} rows cannot fill three non-empty splits")]
    TooFewRows { rows: usize },
    #[error("class {class:?} has too few rows to appear in the training split")]
    StratificationImpossible { class: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Feature matrix with named columns and integer-coded labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset and checks every invariant, including that each class
    /// appears at least once.
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let ds = Self::subset_unchecked(feature_names, rows, labels, class_names)?;
        let counts = ds.class_counts();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(DatasetError::Invalid(format!(
                "class {:?} has no rows",
                ds.class_names[c]
            )));
        }
        Ok(ds)
    }

    /// Same checks as [`Dataset::new`] except class coverage.
    fn subset_unchecked(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(DatasetError::Invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let width = feature_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(DatasetError::Invalid(format!(
                    "row {i} has {} values, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::Invalid(format!("row {i} has a non-finite value")));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DatasetError::Invalid(format!(
                "label {l} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self { feature_names, rows, labels, class_names })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order, sharing this dataset's
    /// vocabulary.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Appends `other`'s rows after this dataset's rows.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset, DatasetError> {
        if other.feature_names != self.feature_names || other.class_names != self.class_names {
            return Err(DatasetError::Invalid("concatenated datasets disagree on schema".into()));
        }
        let mut out = self.clone();
        out.rows.extend(other.rows.iter().cloned());
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Reads a comma-separated file with a header row. `label_column` becomes
    /// the class label; every other column must hold finite reals. Classes
    /// are coded in order of first appearance.
    pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Self, DatasetError> {
        let table = Table::read(path.as_ref())?;
        let label_idx = table.column_index(label_column)?;
        let feature_cols: Vec<usize> = (0..table.headers.len()).filter(|&c| c != label_idx).collect();
        if table.records.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }

        let mut class_names: Vec<String> = Vec::new();
        let mut class_index: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::with_capacity(table.records.len());
        for record in &table.records {
            let name = &record[label_idx];
            let code = *class_index.entry(name.clone()).or_insert_with(|| {
                class_names.push(name.clone());
                class_names.len() - 1
            });
            labels.push(code);
        }
        if class_names.len() < 2 {
            return Err(DatasetError::SingleClass);
        }

        let rows = table.parse_columns(&feature_cols)?;
        let feature_names = feature_cols.iter().map(|&c| table.headers[c].clone()).collect();
        Self::new(feature_names, rows, labels, class_names)
    }
}

/// Raw CSV contents: header plus string cells. Comma separator, no quoting.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        if !path.is_file() {
            return Err(DatasetError::MissingFile(path.display().to_string()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .quoting(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| DatasetError::Csv(e.to_string()))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| DatasetError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(DatasetError::EmptyDataset);
        }
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| DatasetError::Csv(e.to_string()))?;
            // trailing blank lines
            if rec.len() == 1 && rec[0].trim().is_empty() {
                continue;
            }
            if rec.len() != headers.len() {
                return Err(DatasetError::RaggedRow {
                    row: i + 1,
                    expected: headers.len(),
                    found: rec.len(),
                });
            }
            records.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(Self { headers, records })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    /// Parses the given columns of every record as finite reals. Rows are
    /// reported 1-based (first data row is 1), columns 0-based in file order.
    pub fn parse_columns(&self, cols: &[usize]) -> Result<Vec<Vec<f64>>, DatasetError> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                cols.iter()
                    .map(|&c| match rec[c].parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(DatasetError::ParseError {
                            row: i + 1,
                            col: c,
                            value: rec[c].clone(),
                        }),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Which feature columns a model sees. Always at least one bit set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureMask(Vec<bool>);

impl FeatureMask {
    pub fn new(bits: Vec<bool>) -> Result<Self, DatasetError> {
        if !bits.iter().any(|&b| b) {
            return Err(DatasetError::EmptyMask);
        }
        Ok(Self(bits))
    }

    pub fn all(n: usize) -> Self {
        assert!(n > 0, "mask over zero features");
        Self(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Picks the masked-in entries of a full-width vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.0).filter(|(_, &b)| b).map(|(&v, _)| v).collect()
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for FeatureMask {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(DatasetError::Invalid(format!("bad mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bits)
    }
}

impl Serialize for FeatureMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Keeps only the masked-in columns, in original order.
pub fn project(ds: &Dataset, mask: &FeatureMask) -> Result<Dataset, DatasetError> {
    if mask.len() != ds.n_features() {
        return Err(DatasetError::LengthMismatch { mask: mask.len(), features: ds.n_features() });
    }
    if mask.count() == 0 {
        return Err(DatasetError::EmptyMask);
    }
    let feature_names = ds
        .feature_names
        .iter()
        .zip(mask.bits())
        .filter(|(_, &b)| b)
        .map(|(n, _)| n.clone())
        .collect();
    Ok(Dataset {
        feature_names,
        rows: ds.rows.iter().map(|r| mask.apply(r)).collect(),
        labels: ds.labels.clone(),
        class_names: ds.class_names.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.6, valid_fraction: 0.2, test_fraction: 0.2, seed: 0, stratified: true }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fr = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if fr.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(DatasetError::InvalidSplit("every fraction must lie in (0, 1)".into()));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Split sizes for `n` rows: train and validation rounded half-up, the test
/// split takes the remainder.
pub fn split_sizes(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let train = round_half_up(spec.train_fraction * n as f64).min(n);
    let valid = round_half_up(spec.valid_fraction * n as f64).min(n - train);
    (train, valid, n - train - valid)
}

/// Partitions `ds` into disjoint train, validation and test datasets. Each
/// split lists its rows in ascending original order.
pub fn split_three_way(
    ds: &Dataset,
    spec: &SplitSpec,
) -> Result<(Dataset, Dataset, Dataset), DatasetError> {
    spec.validate()?;
    let n = ds.n_rows();
    let (n_train, n_valid, n_test) = split_sizes(n, spec);
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(DatasetError::TooFewRows { rows: n });
    }
    let mut rng = RngStream::from_seed(spec.seed);

    let (mut train, mut valid, mut test) = if spec.stratified {
        stratified_partition(ds, [n_train, n_valid, n_test], spec, &mut rng)?
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let test = order.split_off(n_train + n_valid);
        let valid = order.split_off(n_train);
        (order, valid, test)
    };
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok((ds.select_rows(&train), ds.select_rows(&valid), ds.select_rows(&test)))
}

type Partition = (Vec<usize>, Vec<usize>, Vec<usize>);

fn stratified_partition(
    ds: &Dataset,
    totals: [usize; 3],
    spec: &SplitSpec,
    rng: &mut RngStream,
) -> Result<Partition, DatasetError> {
    let counts = ds.class_counts();
    let n_classes = counts.len();
    let fractions = [spec.train_fraction, spec.valid_fraction];

    // alloc[c][s]: rows of class c going to split s. Train and validation
    // are apportioned by largest remainder against their global sizes; the
    // test split takes what is left of each class.
    let mut alloc = vec![[0usize; 3]; n_classes];
    for s in 0..2 {
        let quotas: Vec<f64> = counts.iter().map(|&nc| nc as f64 * fractions[s]).collect();
        let mut assigned = 0usize;
        for c in 0..n_classes {
            let avail = counts[c] - alloc[c][0] - alloc[c][1];
            alloc[c][s] = (quotas[c].floor() as usize).min(avail);
            assigned += alloc[c][s];
        }
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut pass = 0;
        while assigned < totals[s] && pass < 2 * n_classes + totals[s] {
            let c = order[pass % n_classes];
            if alloc[c][0] + alloc[c][1] < counts[c] {
                alloc[c][s] += 1;
                assigned += 1;
            }
            pass += 1;
        }
        while assigned > totals[s] {
            // only reachable through float floor quirks; trim from the largest
            let c = (0..n_classes).max_by_key(|&c| (alloc[c][s], std::cmp::Reverse(c))).unwrap();
            alloc[c][s] -= 1;
            assigned -= 1;
        }
    }
    for (c, a) in alloc.iter_mut().enumerate() {
        a[2] = counts[c] - a[0] - a[1];
        if a[0] == 0 {
            return Err(DatasetError::StratificationImpossible { class: ds.class_names[c].clone() });
        }
    }
    if alloc.iter().map(|a| a[1]).sum::<usize>() == 0 || alloc.iter().map(|a| a[2]).sum::<usize>() == 0 {
        return Err(DatasetError::TooFewRows { rows: ds.n_rows() });
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, rows) in by_class.iter_mut().enumerate() {
        rng.shuffle(rows);
        let [a, b, _] = alloc[c];
        train.extend_from_slice(&rows[..a]);
        valid.extend_from_slice(&rows[a..a + b]);
        test.extend_from_slice(&rows[a + b..]);
    }
    Ok((train, valid, test))
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ScalerStats {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.sd[j] == 0.0
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_constant(j)).collect()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(&v, (&m, &s))| if s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }
}

pub fn fit_standardizer(ds: &Dataset) -> ScalerStats {
    let n = ds.n_rows() as f64;
    let d = ds.n_features();
    let mut mean = vec![0.0; d];
    for row in &ds.rows {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in &ds.rows {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    // A column whose values are all identical has exactly zero deviation.
    let sd = (0..d)
        .map(|j| {
            let first = ds.rows[0][j];
            if ds.rows.iter().all(|r| r[j] == first) {
                0.0
            } else {
                (var[j] / n).sqrt()
            }
        })
        .collect();
    ScalerStats { mean, sd }
}

pub fn apply_standardizer(ds: &Dataset, stats: &ScalerStats) -> Result<Dataset, DatasetError> {
    if stats.len() != ds.n_features() {
        return Err(DatasetError::ArityMismatch { stats: stats.len(), features: ds.n_features() });
    }
    Ok(Dataset {
        feature_names: ds.feature_names.clone(),
        rows: ds.rows.iter().map(|r| stats.transform(r)).collect(),
        labels: ds.labels.clone(),
        class_names: ds.class_names.clone(),
    })
}
