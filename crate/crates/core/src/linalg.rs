//! Dense symmetric eigendecomposition (cyclic Jacobi) for the small Kronecker
//! factors of the last-layer Laplace approximation.

use alloc::vec;
use alloc::vec::Vec;

const MAX_SWEEPS: usize = 100;

/// `M = V diag(values) Vᵀ`; column `j` of the row-major `vectors` is the
/// eigenvector for `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    /// Decomposes a row-major symmetric `n × n` matrix. Only the upper
    /// triangle is read after symmetrization.
    pub fn new(matrix: &[f64], n: usize) -> Self {
        assert_eq!(matrix.len(), n * n, "matrix must be n × n");
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 0.5 * (matrix[i * n + j] + matrix[j * n + i]);
            }
        }
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            if off <= f64::EPSILON * f64::EPSILON * scale || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..n).map(|i| a[i * n + i]).collect();
        Self { n, values, vectors: v }
    }

    pub fn vector(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.vectors[i * self.n + j])
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Vᵀ x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| self.vector(j).zip(x).map(|(v, xi)| v * xi).sum())
            .collect()
    }
}
