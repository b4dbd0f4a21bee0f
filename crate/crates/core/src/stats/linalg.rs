//! Power iteration, a cyclic Jacobi eigensolver for small symmetric matrices,
//! and a dense linear solve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::vector::{axpy, canonical_sign, dot, norm};
use super::GradientBatch;
use crate::error::{Error, Result};

pub const DEFAULT_POWER_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularDirection {
    pub vector: Vec<f64>,
    /// Set when every row is zero and `vector` is the first basis vector.
    pub degenerate: bool,
}

/// `A^T A v` for the row matrix `A` of `batch`, without forming `A^T A`.
fn gram_apply(batch: &GradientBatch, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for row in batch.rows() {
        let c = dot(row, v);
        axpy(&mut out, c, row);
    }
    out
}

/// One normalized power-iteration step with the sign convention applied.
/// Returns `None` when the product vanishes.
pub fn power_step(batch: &GradientBatch, v: &[f64]) -> Option<Vec<f64>> {
    let mut w = gram_apply(batch, v);
    let n = norm(&w);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= n);
    canonical_sign(&mut w);
    Some(w)
}

/// Approximates the top right-singular vector of the (already centered) row
/// matrix by power iteration from a seeded Gaussian start.
///
/// The first nonzero entry of the result is nonnegative.
pub fn top_singular_direction(
    batch: &GradientBatch,
    iterations: usize,
    seed: u64,
) -> SingularDirection {
    let d = batch.dim();
    let basis = || {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    if batch.rows().iter().all(|r| r.iter().all(|&x| x == 0.0)) {
        return SingularDirection {
            vector: basis(),
            degenerate: true,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);

    for _ in 0..iterations.max(1) {
        v = match power_step(batch, &v) {
            Some(next) => next,
            None => {
                // start orthogonal to the row space: restart from the largest row
                let start = batch
                    .rows()
                    .iter()
                    .max_by(|a, b| norm(a).total_cmp(&norm(b)))
                    .expect("nonempty batch");
                power_step(batch, start).expect("nonzero row has nonzero Gram image")
            }
        };
    }
    SingularDirection {
        vector: v,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_symmetric(matrix: &[Vec<f64>]) -> Result<()> {
    let m = matrix.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if matrix.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    for i in 0..m {
        for j in i + 1..m {
            if (matrix[i][j] - matrix[j][i]).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenpairs are returned in ascending eigenvalue order.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> Result<Vec<EigenPair>> {
    check_symmetric(matrix)?;
    let m = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    // symmetrize away the tolerated asymmetry
    for i in 0..m {
        for j in i + 1..m {
            let s = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let scale = frobenius(&a).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
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

    let mut pairs: Vec<EigenPair> = (0..m)
        .map(|j| {
            let mut vector: Vec<f64> = v.iter().map(|row| row[j]).collect();
            canonical_sign(&mut vector);
            EigenPair {
                value: a[j][j],
                vector,
            }
        })
        .collect();
    pairs.sort_by(|x, y| x.value.total_cmp(&y.value));
    Ok(pairs)
}

/// The `count` smallest eigenpairs of a symmetric matrix, ascending.
pub fn smallest_eigenpairs(matrix: &[Vec<f64>], count: usize) -> Result<Vec<EigenPair>> {
    if count == 0 || count > matrix.len() {
        return Err(Error::InvalidParameter(format!(
            "eigenpair count {count} outside 1..={}",
            matrix.len()
        )));
    }
    let mut pairs = symmetric_eigen(matrix)?;
    pairs.truncate(count);
    Ok(pairs)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("nonempty range");
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidInput("singular linear system".into()));
        }
        m.swap(col, pivot);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor != 0.0 {
                for c in col..=n {
                    m[r][c] -= factor * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - tail) / m[r][r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[&[f64]]) -> GradientBatch {
        GradientBatch::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn top_direction_rank_one() {
        let b = batch(&[&[2., 0.], &[-3., 0.], &[0.5, 0.]]);
        let dir = top_singular_direction(&b, 50, 1);
        assert!(!dir.degenerate);
        assert!((dir.vector[0] - 1.0).abs() < 1e-12 && dir.vector[1].abs() < 1e-12);

        let dir = top_singular_direction(&batch(&[&[0., 3.]]), 50, 9);
        assert!(dir.vector[0].abs() < 1e-12 && (dir.vector[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_direction_matches_two_by_two_eigen_oracle() {
        // Gram = diag(8, 2): characteristic roots 8 and 2, top eigenvector e1
        let b = batch(&[&[2., 0.], &[-2., 0.], &[0., 1.], &[0., -1.]]);
        for seed in 0..10 {
            let dir = top_singular_direction(&b, 50, seed);
            assert!((dir.vector[0] - 1.0).abs() < 1e-6, "{:?}", dir.vector);
            assert!(dir.vector[1].abs() < 1e-6);
        }
    }

    #[test]
    fn top_direction_zero_rows_is_degenerate() {
        let dir = top_singular_direction(&batch(&[&[0., 0., 0.], &[0., 0., 0.]]), 50, 0);
        assert!(dir.degenerate);
        assert_eq!(dir.vector, vec![1., 0., 0.]);
    }

    #[test]
    fn top_direction_unit_norm_and_fixed_point() {
        let b = batch(&[&[3., 1., 0.], &[-3., -0.5, 0.2], &[0.1, 0.3, -0.2], &[-0.1, -0.8, 0.0]]);
        let dir = top_singular_direction(&b, 200, 4);
        assert!((norm(&dir.vector) - 1.0).abs() < 1e-9);
        let next = power_step(&b, &dir.vector).unwrap();
        for (a, c) in next.iter().zip(&dir.vector) {
            assert!((a - c).abs() < 1e-6);
        }
    }

    #[test]
    fn eigen_examples() {
        let id = vec![vec![1., 0.], vec![0., 1.]];
        let pairs = smallest_eigenpairs(&id, 2).unwrap();
        assert_eq!(pairs[0].value, 1.0);
        assert_eq!(pairs[1].value, 1.0);
        assert!(dot(&pairs[0].vector, &pairs[1].vector).abs() < 1e-12);

        let pairs = smallest_eigenpairs(&[vec![0., 0.], vec![0., 2.]], 1).unwrap();
        assert_eq!(pairs[0].value, 0.0);
        assert_eq!(pairs[0].vector, vec![1.0, 0.0]);

        // characteristic polynomial (2 - l)^2 - 1 = 0 => l in {1, 3}
        let pairs = smallest_eigenpairs(&[vec![2., 1.], vec![1., 2.]], 1).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-9);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pairs[0].vector[0] - s).abs() < 1e-9);
        assert!((pairs[0].vector[1] + s).abs() < 1e-9);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = vec![vec![1., 2.], vec![0., 1.]];
        assert!(matches!(smallest_eigenpairs(&m, 1), Err(Error::InvalidInput(_))));
        assert!(smallest_eigenpairs(&[vec![1.]], 2).is_err());
    }

    #[test]
    fn eigen_residuals_on_random_symmetric() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for m in [3usize, 7, 20, 40] {
            let mut a = vec![vec![0.0; m]; m];
            for i in 0..m {
                for j in i..m {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    a[i][j] = x;
                    a[j][i] = x;
                }
            }
            let pairs = smallest_eigenpairs(&a, m).unwrap();
            let fro = frobenius(&a);
            for p in &pairs {
                let mv: Vec<f64> = a.iter().map(|row| dot(row, &p.vector)).collect();
                let res: f64 = mv
                    .iter()
                    .zip(&p.vector)
                    .map(|(x, v)| (x - p.value * v).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-7 * fro, "residual {res}");
            }
            for i in 0..m {
                for j in i + 1..m {
                    assert!(dot(&pairs[i].vector, &pairs[j].vector).abs() < 1e-7);
                }
                assert!(i == 0 || pairs[i - 1].value <= pairs[i].value);
            }
        }
    }

    #[test]
    fn solve_small_system() {
        let x = solve_linear(&[vec![2., 1.], vec![1., 3.]], &[3., 5.]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve_linear(&[vec![1., 2.], vec![2., 4.]], &[1., 1.]).is_err());
    }
}
