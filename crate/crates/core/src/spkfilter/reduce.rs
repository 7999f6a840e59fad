use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ctcseg::LOG_ZERO;
use crate::error::{Error, Result};

/// Covariance determinants at or below this are treated as zero spread.
pub const DET_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    Pca,
    Tsne,
}

impl std::fmt::Display for Reducer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reducer::Pca => "pca",
            Reducer::Tsne => "tsne",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iters: 500,
            seed: 0,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduced {
    pub points: Vec<[f64; 2]>,
    /// Set when the input had no spread at all, so the embedding carries no information.
    pub degenerate: bool,
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    if rows.len() < 3 {
        return Err(Error::InsufficientUtterances {
            needed: 3,
            got: rows.len(),
        });
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::invalid("embedding rows must share a positive dimension"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("embedding contains non-finite values"));
    }
    Ok(dim)
}

pub fn reduce_2d(rows: &[Vec<f64>], reducer: Reducer, tsne: &TsneConfig) -> Result<Reduced> {
    match reducer {
        Reducer::Pca => pca_2d(rows),
        Reducer::Tsne => tsne_2d(rows, tsne),
    }
}

/// Projection of the centred rows onto the two leading principal axes. Each axis is signed so
/// that its largest-magnitude loading is positive (first such loading on ties). Inputs of
/// dimension one get a zero second coordinate.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Reduced> {
    let dim = check_rows(rows)?;
    let n = rows.len();
    if rows.iter().all(|r| r == &rows[0]) {
        return Ok(Reduced {
            points: vec![[0.0, 0.0]; n],
            degenerate: true,
        });
    }
    let mean: Vec<f64> = (0..dim)
        .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n as f64)
        .collect();
    let centred = DMatrix::from_fn(n, dim, |i, d| rows[i][d] - mean[d]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&k| {
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();

    let points = (0..n)
        .map(|i| {
            let mut p = [0.0; 2];
            for (slot, axis) in p.iter_mut().zip(&axes) {
                *slot = (0..dim).map(|d| centred[(i, d)] * axis[d]).sum();
            }
            p
        })
        .collect();
    Ok(Reduced {
        points,
        degenerate: false,
    })
}

fn squared_distances(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row `i` of the conditional affinity matrix, with the Gaussian precision found by bisection
/// so that the row's entropy matches `ln(perplexity)`.
fn conditional_row(dist: &[f64], i: usize, perplexity: f64, out: &mut [f64]) {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
    let min_d = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    for _ in 0..100 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, &d) in dist.iter().enumerate() {
            out[j] = if j == i { 0.0 } else { (-(d - min_d) * beta).exp() };
            sum += out[j];
            weighted += out[j] * (d - min_d);
        }
        let entropy = sum.ln() + beta * weighted / sum;
        for p in out.iter_mut() {
            *p /= sum;
        }
        let diff = entropy - target;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
}

/// Exact t-SNE to two dimensions. The perplexity is clipped to `(N − 1) / 3`.
pub fn tsne_2d(rows: &[Vec<f64>], cfg: &TsneConfig) -> Result<Reduced> {
    check_rows(rows)?;
    if !(cfg.perplexity > 0.0 && cfg.learning_rate > 0.0 && cfg.early_exaggeration >= 1.0) {
        return Err(Error::invalid("t-SNE needs positive perplexity and learning rate"));
    }
    let n = rows.len();
    let dist = squared_distances(rows);
    if dist.iter().all(|&d| d == 0.0) {
        return Ok(Reduced {
            points: vec![[0.0, 0.0]; n],
            degenerate: true,
        });
    }
    let perplexity = cfg.perplexity.min((n - 1) as f64 / 3.0).max(1.0);

    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        conditional_row(&dist[i * n..(i + 1) * n], i, perplexity, &mut cond[i * n..(i + 1) * n]);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut q = vec![0.0; n * n];

    for iter in 0..cfg.iters {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };

        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let w = 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2));
                q[i * n + j] = w;
                q[j * n + i] = w;
                z += 2.0 * w;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q[i * n + j];
                let coeff = 4.0 * (exaggeration * p[i * n + j] - w / z) * w;
                grad[0] += coeff * (y[i][0] - y[j][0]);
                grad[1] += coeff * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                let same_sign = (grad[k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same_sign {
                    (gains[i][k] * 0.8f64).max(0.01)
                } else {
                    gains[i][k] + 0.2
                };
                velocity[i][k] = momentum * velocity[i][k] - cfg.learning_rate * gains[i][k] * grad[k];
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        let mean = [
            y.iter().map(|p| p[0]).sum::<f64>() / n as f64,
            y.iter().map(|p| p[1]).sum::<f64>() / n as f64,
        ];
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
        }
    }
    Ok(Reduced {
        points: y,
        degenerate: false,
    })
}

/// Natural log of the determinant of the unbiased 2×2 covariance of `points`;
/// [`LOG_ZERO`] when the determinant is at most [`DET_EPSILON`].
pub fn variation_score(points: &[[f64; 2]]) -> Result<f64> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientUtterances { needed: 3, got: n });
    }
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let k = (n - 1) as f64;
    let det = (sxx / k) * (syy / k) - (sxy / k).powi(2);
    Ok(if det <= DET_EPSILON { LOG_ZERO } else { det.ln() })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    fn blobs(n_each: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            let centre: Vec<f64> = (0..dim).map(|d| if d == c { 8.0 } else { 0.0 }).collect();
            for _ in 0..n_each {
                rows.push(centre.iter().map(|m| m + noise.sample(&mut rng)).collect());
                labels.push(c);
            }
        }
        (rows, labels)
    }

    /// Mean silhouette coefficient, computed directly from its definition.
    fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
        let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let n = points.len();
        let mut total = 0.0;
        for i in 0..n {
            let mean_to = |c: usize| {
                let others: Vec<f64> = (0..n)
                    .filter(|&j| j != i && labels[j] == c)
                    .map(|j| dist(&points[i], &points[j]))
                    .collect();
                others.iter().sum::<f64>() / others.len() as f64
            };
            let a = mean_to(labels[i]);
            let b = mean_to(1 - labels[i]);
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn pca_of_planar_input_preserves_axis_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)])
            .collect();
        let r = pca_2d(&rows).unwrap();
        let var = |f: &dyn Fn(usize) -> f64| {
            let m = (0..200).map(f).sum::<f64>() / 200.0;
            (0..200).map(|i| (f(i) - m).powi(2)).sum::<f64>() / 199.0
        };
        let (v0, v1) = (var(&|i| r.points[i][0]), var(&|i| r.points[i][1]));
        let (u0, u1) = (var(&|i| rows[i][0]), var(&|i| rows[i][1]));
        assert!(v0 >= v1);
        // a rotation keeps total variance and the ln-det score
        assert!((v0 + v1 - u0 - u1).abs() < 1e-9);
        let input: Vec<[f64; 2]> = rows.iter().map(|r| [r[0], r[1]]).collect();
        assert!((variation_score(&r.points).unwrap() - variation_score(&input).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn pca_sign_convention() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -2.0 * i as f64, 0.0]).collect();
        let r = pca_2d(&rows).unwrap();
        // the leading axis is ±(1, -2, 0)/√5; its largest loading (-2) must come out positive
        assert!(r.points[9][0] < r.points[0][0]);
        let flipped: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let f = pca_2d(&flipped).unwrap();
        assert!((f.points[0][0] - r.points[9][0]).abs() < 1e-9);
    }

    #[test]
    fn identical_rows() {
        let rows = vec![vec![0.5, 0.5, 0.7]; 12];
        let r = pca_2d(&rows).unwrap();
        assert!(r.degenerate);
        assert!(r.points.iter().all(|p| *p == r.points[0]));
        assert_eq!(variation_score(&r.points).unwrap(), LOG_ZERO);
        let t = tsne_2d(&rows, &TsneConfig::default()).unwrap();
        assert!(t.degenerate);
    }

    #[test]
    fn too_few_rows() {
        let rows = vec![vec![1.0, 0.0]; 2];
        assert!(matches!(
            reduce_2d(&rows, Reducer::Pca, &TsneConfig::default()),
            Err(Error::InsufficientUtterances { needed: 3, got: 2 })
        ));
        assert!(variation_score(&[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn both_reducers_separate_blobs() {
        let (rows, labels) = blobs(25, 64, 11);
        let pca = pca_2d(&rows).unwrap();
        assert!(silhouette(&pca.points, &labels) > 0.5);
        let cfg = TsneConfig { iters: 300, ..Default::default() };
        let tsne = tsne_2d(&rows, &cfg).unwrap();
        assert!(!tsne.degenerate);
        assert!(silhouette(&tsne.points, &labels) > 0.5);
        assert_eq!(tsne, tsne_2d(&rows, &cfg).unwrap());
    }

    #[test]
    fn standard_normal_scores_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<[f64; 2]> = (0..1000).map(|_| [z.sample(&mut rng), z.sample(&mut rng)]).collect();
        assert!(variation_score(&pts).unwrap().abs() < 0.2);
    }

    #[test]
    fn determinant_oracle() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
        // unbiased variances 4/3 each, zero covariance
        assert!((variation_score(&pts).unwrap() - (16.0f64 / 9.0).ln()).abs() < 1e-12);
        let line = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert_eq!(variation_score(&line).unwrap(), LOG_ZERO);
    }

    proptest! {
        #[test]
        fn translation_and_scaling(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
            shift in (-100.0f64..100.0, -100.0f64..100.0),
            s in 0.1f64..10.0,
        ) {
            let pts: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let base = variation_score(&pts).unwrap();
            prop_assume!(base > -5.0);
            let moved: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + shift.0, p[1] + shift.1]).collect();
            prop_assert!((variation_score(&moved).unwrap() - base).abs() < 1e-6);
            let scaled: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] * s, p[1] * s]).collect();
            let got = variation_score(&scaled).unwrap();
            prop_assume!(got > LOG_ZERO);
            prop_assert!((got - base - 4.0 * s.ln()).abs() < 1e-6);
        }
    }
}
