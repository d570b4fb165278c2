//! Box probabilities `P(−b ≤ Z ≤ b)` for a mean-zero Gaussian vector with a
//! given correlation matrix, by Genz's sequential conditioning integrated
//! with a deterministic Kronecker lattice.

use crate::stats::{normal_cdf, normal_quantile};

/// Lower Cholesky factor, or `None` when the matrix is not positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let diag = a[i][i] - s;
                if diag <= 1e-10 {
                    return None;
                }
                l[i][j] = diag.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

const LATTICE_PRIMES: [f64; 8] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];

/// `P(max_i |Z_i| ≤ bound)` with `points` quasi-random nodes.
/// Returns `None` if `corr` is singular.
pub fn symmetric_box_probability(corr: &[Vec<f64>], bound: f64, points: usize) -> Option<f64> {
    let d = corr.len();
    assert!(d >= 1 && d <= LATTICE_PRIMES.len() + 1, "unsupported dimension {d}");
    let l = cholesky(corr)?;
    if bound <= 0.0 {
        return Some(0.0);
    }
    let alphas: Vec<f64> = LATTICE_PRIMES[..d - 1]
        .iter()
        .map(|p| p.sqrt().fract())
        .collect();
    let lo0 = normal_cdf(-bound / l[0][0]);
    let hi0 = normal_cdf(bound / l[0][0]);
    let mut y = vec![0.0; d];
    let mut total = 0.0;
    for k in 1..=points {
        let (mut lo, mut hi) = (lo0, hi0);
        let mut f = hi - lo;
        for i in 1..d {
            // Baker's transform periodizes the integrand.
            let u = (k as f64 * alphas[i - 1]).fract();
            let w = 1.0 - (2.0 * u - 1.0).abs();
            let p = (lo + w * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = normal_quantile(p);
            let s: f64 = (0..i).map(|j| l[i][j] * y[j]).sum();
            lo = normal_cdf((-bound - s) / l[i][i]);
            hi = normal_cdf((bound - s) / l[i][i]);
            f *= hi - lo;
            if f == 0.0 {
                break;
            }
        }
        total += f;
    }
    Some(total / points as f64)
}
