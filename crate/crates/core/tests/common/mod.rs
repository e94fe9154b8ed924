//! Synthetic datasets with known ground truth.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use raceopt::search::rng::RngStream;
use raceopt::Dataset;

fn dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>, names: Vec<String>) -> Dataset {
    Dataset::new(names, rows, labels, vec!["a".into(), "b".into()]).unwrap()
}

/// Two classes from unit-variance 2-D Gaussians at (0,0) and (3,3), plus
/// `noise` independent standard-normal columns. Informative columns are 0
/// and 1.
pub fn two_gaussians(n: usize, noise: usize, seed: u64) -> Dataset {
    let mut s = RngStream::from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let mu = 3.0 * class as f64;
        let mut row = vec![mu + s.next_gaussian(), mu + s.next_gaussian()];
        row.extend((0..noise).map(|_| s.next_gaussian()));
        rows.push(row);
        labels.push(class);
    }
    let mut names = vec!["x0".to_string(), "x1".to_string()];
    names.extend((0..noise).map(|j| format!("noise{j}")));
    dataset(rows, labels, names)
}

/// Quadrant-parity XOR: centers at (+-1, +-1) with Gaussian jitter, label 1
/// when the signs differ, plus `noise` standard-normal columns.
pub fn noisy_xor(n: usize, jitter: f64, noise: usize, seed: u64) -> Dataset {
    let mut s = RngStream::from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (cx, cy) = [(-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)][i % 4];
        let mut row = vec![cx + jitter * s.next_gaussian(), cy + jitter * s.next_gaussian()];
        row.extend((0..noise).map(|_| s.next_gaussian()));
        rows.push(row);
        labels.push(usize::from(i % 4 >= 2));
    }
    let mut names = vec!["x0".to_string(), "x1".to_string()];
    names.extend((0..noise).map(|j| format!("noise{j}")));
    dataset(rows, labels, names)
}

pub fn write_csv(ds: &Dataset, label: &str, path: &Path) {
    let mut text = ds.feature_names().join(",");
    writeln!(text, ",{label}").unwrap();
    for (row, &y) in ds.rows().iter().zip(ds.labels()) {
        for v in row {
            write!(text, "{v},").unwrap();
        }
        writeln!(text, "{}", ds.class_names()[y]).unwrap();
    }
    std::fs::write(path, text).unwrap();
}
