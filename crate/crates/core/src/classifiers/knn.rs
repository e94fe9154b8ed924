//! Brute-force k-nearest neighbors on standardized features.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::argmax;
use crate::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

/// Stored training rows and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnFit {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn fit(ds: &Dataset) -> KnnFit {
    KnnFit { rows: ds.rows().to_vec(), labels: ds.labels().to_vec() }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl KnnFit {
    /// The `k` closest stored rows as (distance, row index), nearest first.
    /// Equal distances resolve to the lower row index; `k` is capped at the
    /// number of stored rows.
    pub fn neighbors(&self, x: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut d: Vec<(f64, usize)> = self.rows.iter().enumerate().map(|(i, r)| (euclidean(r, x), i)).collect();
        let k = k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, by_distance_then_index);
            d.truncate(k);
        }
        d.sort_unstable_by(by_distance_then_index);
        d
    }

    pub fn predict(&self, x: &[f64], k: usize, weighting: Weighting, n_classes: usize) -> usize {
        let mut votes = vec![0.0; n_classes];
        for (dist, i) in self.neighbors(x, k) {
            votes[self.labels[i]] += match weighting {
                Weighting::Uniform => 1.0,
                Weighting::InverseDistance => 1.0 / (dist + 1e-12),
            };
        }
        argmax(&votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::rng::RngStream;

    /// Full scan: sort every row by (distance, index), vote over the first k.
    fn oracle(fit: &KnnFit, x: &[f64], k: usize, weighting: Weighting, n_classes: usize) -> usize {
        let mut all: Vec<(f64, usize)> = fit
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut s = 0.0;
                for j in 0..r.len() {
                    s += (r[j] - x[j]) * (r[j] - x[j]);
                }
                (s.sqrt(), i)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut votes = vec![0.0; n_classes];
        for &(d, i) in all.iter().take(k) {
            votes[fit.labels[i]] += if weighting == Weighting::Uniform { 1.0 } else { 1.0 / (d + 1e-12) };
        }
        let mut best = 0;
        for c in 1..n_classes {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }

    #[test]
    fn majority_of_three() {
        let fit = KnnFit { rows: vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0]], labels: vec![1, 1, 0, 0] };
        assert_eq!(fit.predict(&[0.05], 3, Weighting::Uniform, 2), 1);
    }

    #[test]
    fn vote_tie_goes_to_lower_class() {
        let fit = KnnFit { rows: vec![vec![-1.0], vec![1.0]], labels: vec![1, 0] };
        assert_eq!(fit.predict(&[0.0], 2, Weighting::Uniform, 2), 0);
        assert_eq!(fit.predict(&[0.0], 2, Weighting::InverseDistance, 2), 0);
    }

    #[test]
    fn distance_tie_prefers_lower_row() {
        let fit = KnnFit { rows: vec![vec![1.0], vec![-1.0], vec![1.0]], labels: vec![1, 0, 0] };
        assert_eq!(fit.neighbors(&[0.0], 1), vec![(1.0, 0)]);
        assert_eq!(fit.predict(&[0.0], 1, Weighting::Uniform, 2), 1);
    }

    #[test]
    fn k_larger_than_training_set() {
        let fit = KnnFit { rows: vec![vec![0.0], vec![1.0], vec![2.0]], labels: vec![0, 1, 1] };
        assert_eq!(fit.neighbors(&[0.0], 10).len(), 3);
        assert_eq!(fit.predict(&[0.0], 10, Weighting::Uniform, 2), 1);
        assert_eq!(fit.predict(&[0.0], 10, Weighting::InverseDistance, 2), 0);
    }

    #[test]
    fn matches_full_scan_oracle() {
        let mut s = RngStream::from_seed(31);
        let rows: Vec<Vec<f64>> = (0..150).map(|_| (0..4).map(|_| s.next_gaussian()).collect()).collect();
        // some exact duplicates to exercise ties
        let mut rows = rows;
        for i in 0..10 {
            rows.push(rows[i].clone());
        }
        let labels = (0..rows.len()).map(|i| (i * 7) % 3).collect();
        let fit = KnnFit { rows, labels };
        for q in 0..200 {
            let x: Vec<f64> = if q % 10 == 0 { fit.rows[q % fit.rows.len()].clone() } else { (0..4).map(|_| s.next_gaussian()).collect() };
            let k = 1 + q % 25;
            let w = if q % 2 == 0 { Weighting::Uniform } else { Weighting::InverseDistance };
            assert_eq!(fit.predict(&x, k, w, 3), oracle(&fit, &x, k, w, 3), "query {q}");
        }
    }
}
