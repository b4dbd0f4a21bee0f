use crate::error::{Error, Result};
use crate::stats::linalg::solve_linear;
use crate::stats::{smallest_eigenpairs, vector, GradientBatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LleParams {
    pub neighbors: usize,
    pub out_dim: usize,
    /// Ridge added to each local Gram matrix, relative to its trace.
    pub regularization: f64,
}

impl LleParams {
    /// k = max(2, floor(m / 10)), two output dimensions.
    pub fn for_size(m: usize) -> Self {
        LleParams {
            neighbors: (m / 10).max(2),
            out_dim: 2,
            regularization: 1e-3,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.neighbors < 2 || self.neighbors >= m {
            return Err(Error::InvalidParameter(format!(
                "lle needs 2 <= k < m, got k={} with m={m}",
                self.neighbors
            )));
        }
        if self.out_dim == 0 || self.out_dim >= m {
            return Err(Error::InvalidParameter(format!(
                "lle output dimension {} must lie in [1, m)",
                self.out_dim
            )));
        }
        if !(self.regularization > 0.0) || !self.regularization.is_finite() {
            return Err(Error::InvalidParameter("lle regularization must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LleEmbedding {
    /// One row of `out_dim` coordinates per input row.
    pub coords: Vec<Vec<f64>>,
    /// Neighbor positions per row, nearest first.
    pub neighbors: Vec<Vec<usize>>,
    /// Reconstruction weights aligned with `neighbors`.
    pub weights: Vec<Vec<f64>>,
}

/// k nearest rows of every row by Euclidean distance, excluding itself.
/// Equal distances go to the lower position.
pub fn neighbor_sets(batch: &GradientBatch, k: usize) -> Vec<Vec<usize>> {
    let rows = batch.rows();
    (0..rows.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| (vector::dist_sq(&rows[i], &rows[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Weights reconstructing each row from its neighbors, summing to one.
pub fn lle_weights(
    batch: &GradientBatch,
    neighbors: &[Vec<usize>],
    regularization: f64,
) -> Result<Vec<Vec<f64>>> {
    let rows = batch.rows();
    neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let k = nb.len();
            let z: Vec<Vec<f64>> = nb.iter().map(|&j| vector::sub(&rows[j], &rows[i])).collect();
            let mut gram: Vec<Vec<f64>> = (0..k)
                .map(|a| (0..k).map(|b| vector::dot(&z[a], &z[b])).collect())
                .collect();
            let trace: f64 = (0..k).map(|a| gram[a][a]).sum();
            let ridge = if trace > 0.0 {
                regularization * trace / k as f64
            } else {
                regularization
            };
            for (a, row) in gram.iter_mut().enumerate() {
                row[a] += ridge;
            }
            let w = solve_linear(&gram, &vec![1.0; k])?;
            let total: f64 = w.iter().sum();
            Ok(w.into_iter().map(|x| x / total).collect())
        })
        .collect()
}

pub fn lle_embed(batch: &GradientBatch, params: &LleParams) -> Result<LleEmbedding> {
    let m = batch.len();
    params.validate(m)?;
    let neighbors = neighbor_sets(batch, params.neighbors);
    let weights = lle_weights(batch, &neighbors, params.regularization)?;

    // I - W, then M = (I - W)^T (I - W)
    let mut iw = vec![vec![0.0; m]; m];
    for i in 0..m {
        iw[i][i] = 1.0;
        for (&j, &w) in neighbors[i].iter().zip(&weights[i]) {
            iw[i][j] -= w;
        }
    }
    let mut mm = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a..m {
            let v: f64 = (0..m).map(|r| iw[r][a] * iw[r][b]).sum();
            mm[a][b] = v;
            mm[b][a] = v;
        }
    }
    // Lift the constant direction above the spectrum so the smallest
    // eigenvectors are orthogonal to it.
    let lift = 1.0 + (0..m).map(|a| mm[a][a]).sum::<f64>();
    for row in mm.iter_mut() {
        for x in row.iter_mut() {
            *x += lift / m as f64;
        }
    }
    let pairs = smallest_eigenpairs(&mm, params.out_dim)?;
    let coords = (0..m)
        .map(|i| pairs.iter().map(|p| p.vector[i]).collect())
        .collect();
    Ok(LleEmbedding {
        coords,
        neighbors,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn line(m: usize, d: usize) -> GradientBatch {
        let dir: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 * 0.5).collect();
        let rows = (0..m)
            .map(|i| {
                let mut p = vec![0.3; d];
                vector::axpy(&mut p, i as f64, &dir);
                p
            })
            .collect();
        GradientBatch::from_rows(rows).unwrap()
    }

    fn cloud(m: usize, d: usize, seed: u64) -> GradientBatch {
        let mut r = rng::stream(&[seed]);
        GradientBatch::from_rows(
            (0..m)
                .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn defaults() {
        assert_eq!(LleParams::for_size(50).neighbors, 5);
        assert_eq!(LleParams::for_size(10).neighbors, 2);
        let p = LleParams { neighbors: 5, ..LleParams::for_size(5) };
        assert!(matches!(lle_embed(&line(5, 2), &p), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn weights_sum_to_one_and_columns_centered() {
        let b = cloud(30, 6, 4);
        let e = lle_embed(&b, &LleParams { neighbors: 4, ..LleParams::for_size(30) }).unwrap();
        for w in &e.weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for c in 0..2 {
            let mean = e.coords.iter().map(|r| r[c]).sum::<f64>() / 30.0;
            assert!(mean.abs() < 1e-7);
        }
    }

    #[test]
    fn line_order_preserved() {
        let b = line(20, 5);
        let p = LleParams { neighbors: 2, out_dim: 1, regularization: 1e-3 };
        let e = lle_embed(&b, &p).unwrap();
        let x: Vec<f64> = e.coords.iter().map(|r| r[0]).collect();
        let up = x.windows(2).all(|w| w[1] > w[0]);
        let down = x.windows(2).all(|w| w[1] < w[0]);
        assert!(up || down, "{x:?}");
    }

    #[test]
    fn duplicates_are_solvable() {
        let rows = vec![vec![1.0, 1.0]; 6];
        let b = GradientBatch::from_rows(rows).unwrap();
        let e = lle_embed(&b, &LleParams { neighbors: 3, out_dim: 1, regularization: 1e-3 }).unwrap();
        assert!(e.coords.iter().all(|r| r[0].is_finite()));
    }

    #[test]
    fn neighbors_and_weights_invariant_to_translation_and_scale() {
        let b = cloud(25, 4, 9);
        let nb = neighbor_sets(&b, 3);
        let w = lle_weights(&b, &nb, 1e-3).unwrap();
        let shifted = b.map_rows(|r| r.iter().map(|x| x + 7.5).collect()).unwrap();
        let scaled = b.map_rows(|r| vector::scale(r, 40.0)).unwrap();
        for other in [shifted, scaled] {
            let nb2 = neighbor_sets(&other, 3);
            assert_eq!(nb, nb2);
            let w2 = lle_weights(&other, &nb2, 1e-3).unwrap();
            for (a, b) in w.iter().flatten().zip(w2.iter().flatten()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
