//! Test-only oracles, independent of the library's numerical paths.

#![allow(dead_code)]

use std::path::PathBuf;

use memscope::corpus::{parse_dataset, DatasetKind, DatasetRecord, ParentRelation};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn all_kinds() -> Vec<DatasetRecord> {
    let text = std::fs::read_to_string(fixture("all_kinds.jsonl")).unwrap();
    parse_dataset(text.as_bytes(), None).unwrap()
}

/// Deterministic invented child/parent records.
pub fn celebrity_records(n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| {
            let relation = if i % 2 == 0 {
                ParentRelation::Mother
            } else {
                ParentRelation::Father
            };
            DatasetRecord::celebrity(
                format!("cp{i:04}"),
                format!("Child{i} Family{i}"),
                format!("Parent{i} Family{i}"),
                relation,
            )
        })
        .collect()
}

pub fn idiom_records(n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| {
            DatasetRecord::completion(
                format!("idiom{i:04}"),
                DatasetKind::Idiom,
                format!("{} words end with w{i}", "lead ".repeat(i % 4 + 1).trim()),
            )
        })
        .collect()
}

/// Sample covariance (divisor N - 1) of the rows.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let means: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    rows.iter()
                        .map(|r| (r[a] - means[a]) * (r[b] - means[b]))
                        .sum::<f64>()
                        / (n - 1.0)
                })
                .collect()
        })
        .collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalue, eigenvector) pairs sorted by descending eigenvalue.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let d = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| (a[i][i], v.iter().map(|row| row[i]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is non-negative.
pub fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut pivot = 0;
    for j in 1..v.len() {
        if v[j].abs() > v[pivot].abs() {
            pivot = j;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Best accuracy of a single threshold on any one coordinate, trying both
/// orientations. A threshold on a projection axis is a linear boundary.
pub fn best_axis_threshold_accuracy(points: &[Vec<f64>], labels: &[bool]) -> f64 {
    let n = points.len();
    let mut best: f64 = 0.0;
    for axis in 0..points[0].len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        // Everything at or below position `cut` is predicted `false`.
        let total_true = labels.iter().filter(|&&l| l).count();
        let mut false_below = 0;
        let mut true_below = 0;
        for cut in 0..=n {
            let correct = false_below + (total_true - true_below);
            best = best
                .max(correct as f64 / n as f64)
                .max((n - correct) as f64 / n as f64);
            if cut < n {
                if labels[order[cut]] {
                    true_below += 1;
                } else {
                    false_below += 1;
                }
            }
        }
    }
    best
}
