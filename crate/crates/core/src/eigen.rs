//! Cyclic Jacobi eigen-decomposition for small dense symmetric matrices.
//!
//! Used for the 3x3 structure tensor and for the class-affinity Laplacian,
//! both tiny, so the O(n^3) per sweep cost does not matter.

use alloc::vec;
use alloc::vec::Vec;

/// Eigenvalues in ascending order, with unit eigenvectors stored as columns
/// (`vectors[row][k]` is component `row` of eigenvector `k`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.iter().map(|row| row[k]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Decomposes the symmetric matrix `m` (only the upper triangle is read).
pub fn symmetric_eigen(m: &[Vec<f64>]) -> SymmetricEigen {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if j >= i { m[i][j] } else { m[j][i] }).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= f64::EPSILON * f64::EPSILON * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
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

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let mut vectors = vec![vec![0.0; n]; n];
    for (k, &col) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row][k] = v[row][col];
        }
    }
    SymmetricEigen { values, vectors }
}
