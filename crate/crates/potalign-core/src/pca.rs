//! Two-component PCA of latent features, for exporting cluster layouts
//! to external plotting. Deterministic: a cyclic Jacobi eigensolver on
//! the covariance plus a fixed sign convention.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;
use crate::math;
use crate::{Error, Result};

/// Project rows of `x` onto the top-2 eigenvectors of their covariance.
/// Returns an `n x 2` matrix.
pub fn pca_2d(x: &Mat) -> Result<Mat> {
    let (n, k) = x.shape();
    if n < 2 || k < 2 {
        return Err(Error::InvalidParam {
            context: "pca needs at least 2 samples and 2 dimensions",
        });
    }
    if !x.is_finite() {
        return Err(Error::InvalidParam {
            context: "pca input must be finite",
        });
    }

    let mut mean = vec![0.0f64; k];
    for i in 0..n {
        for (t, v) in x.row(i).iter().enumerate() {
            mean[t] += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut cov = Mat::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..k {
            let da = row[a] - mean[a];
            for b in a..k {
                let db = row[b] - mean[b];
                cov[(a, b)] += da * db;
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(&cov, 100);

    // Two largest eigenvalues; ties keep the lower index.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = [order[0], order[1]];

    let mut components = Mat::zeros(2, k);
    for (c, &col) in top.iter().enumerate() {
        for t in 0..k {
            components[(c, t)] = vectors[(t, col)];
        }
        // Fix the sign: the largest-magnitude coordinate is positive.
        let mut best = 0;
        let mut best_abs = 0.0;
        for t in 0..k {
            let a = components[(c, t)].abs();
            if a > best_abs {
                best_abs = a;
                best = t;
            }
        }
        if components[(c, best)] < 0.0 {
            for t in 0..k {
                components[(c, t)] = -components[(c, t)];
            }
        }
    }

    let mut out = Mat::zeros(n, 2);
    for i in 0..n {
        let row = x.row(i);
        for c in 0..2 {
            let mut s = 0.0;
            for t in 0..k {
                s += (row[t] - mean[t]) * components[(c, t)];
            }
            out[(i, c)] = s;
        }
    }
    Ok(out)
}

/// Cyclic Jacobi rotations; returns (eigenvalues, column eigenvectors).
fn jacobi_eigen(sym: &Mat, max_sweeps: u32) -> (Vec<f64>, Mat) {
    let k = sym.n_rows();
    let mut a = sym.clone();
    let mut v = Mat::zeros(k, k);
    for i in 0..k {
        v[(i, i)] = 1.0;
    }

    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    1.0 / (theta - math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;

                for i in 0..k {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for i in 0..k {
                    let api = a[(p, i)];
                    let aqi = a[(q, i)];
                    a[(p, i)] = c * api - s * aqi;
                    a[(q, i)] = s * api + c * aqi;
                }
                for i in 0..k {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let eigenvalues = (0..k).map(|i| a[(i, i)]).collect();
    (eigenvalues, v)
}
