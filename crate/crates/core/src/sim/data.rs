use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::vector;

/// Labeled feature rows stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Writes `sample_id,label,x0,...` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend((0..self.dim).map(|k| format!("x{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string(), self.labels[i].to_string()];
            rec.extend(self.features(i).iter().map(|x| x.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()
    }
}

/// Settings for the Gaussian-blob classification data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    /// Falls back to the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 32,
            per_class: 500,
            test_per_class: 100,
            separation: 6.0,
            seed: None,
        }
    }
}

/// Class means for isotropic unit-variance Gaussian blobs.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    means: Vec<Vec<f64>>,
}

impl SyntheticGenerator {
    /// Means are `separation` times random unit directions, orthonormalized
    /// by Gram-Schmidt while `num_classes <= dim`.
    pub fn new(num_classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Self> {
        if num_classes < 2 || dim == 0 {
            return Err(Error::InvalidParameter(
                "synthetic data needs at least 2 classes and dim >= 1".into(),
            ));
        }
        let mut rng = rng::stream(&[seed, 0xA11]);
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
        for _ in 0..num_classes {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if dirs.len() < dim {
                for u in &dirs {
                    let c = vector::dot(&v, u);
                    vector::axpy(&mut v, -c, u);
                }
            }
            let n = vector::norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            dirs.push(v);
        }
        Ok(Self {
            means: dirs.iter().map(|u| vector::scale(u, separation)).collect(),
        })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// `per_class` samples of every class, class-major order.
    pub fn sample(&self, per_class: usize, seed: u64) -> Dataset {
        let mut rng = rng::stream(&[seed, 0xDA7A]);
        let dim = self.means[0].len();
        let mut features = Vec::with_capacity(self.means.len() * per_class * dim);
        let mut labels = Vec::with_capacity(self.means.len() * per_class);
        for (class, mean) in self.means.iter().enumerate() {
            for _ in 0..per_class {
                features.extend(mean.iter().map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + z
                }));
                labels.push(class);
            }
        }
        Dataset::new(features, labels, dim, self.means.len()).expect("consistent shapes")
    }
}

pub fn generate_synthetic_dataset(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    Ok(SyntheticGenerator::new(num_classes, dim, separation, seed)?.sample(per_class, seed))
}

/// Train and held-out sets drawn around the same class means.
pub fn generate_split(spec: &SyntheticSpec, run_seed: u64) -> Result<(Dataset, Dataset)> {
    let seed = spec.seed.unwrap_or(run_seed);
    let generator = SyntheticGenerator::new(spec.num_classes, spec.dim, spec.separation, seed)?;
    let train = generator.sample(spec.per_class, rng::mix(&[seed, 1]));
    let test = generator.sample(spec.test_per_class, rng::mix(&[seed, 2]));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let a = generate_synthetic_dataset(4, 6, 25, 3.0, 9).unwrap();
        assert_eq!(a.len(), 100);
        for c in 0..4 {
            assert_eq!(a.labels().iter().filter(|&&y| y == c).count(), 25);
        }
        let b = generate_synthetic_dataset(4, 6, 25, 3.0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_separation_collapses_means() {
        let g = SyntheticGenerator::new(5, 8, 0.0, 1).unwrap();
        for m in g.means() {
            assert!(m.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn means_are_orthogonal_when_classes_fit() {
        let g = SyntheticGenerator::new(10, 32, 6.0, 3).unwrap();
        let m = g.means();
        for i in 0..10 {
            assert!((vector::norm(&m[i]) - 6.0).abs() < 1e-9);
            for j in i + 1..10 {
                assert!(vector::dot(&m[i], &m[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_shares_means() {
        let spec = SyntheticSpec { per_class: 200, test_per_class: 200, ..SyntheticSpec::default() };
        let (train, test) = generate_split(&spec, 5).unwrap();
        let class_mean = |d: &Dataset, c: usize| {
            let rows: Vec<&[f64]> = (0..d.len()).filter(|&i| d.label(i) == c).map(|i| d.features(i)).collect();
            vector::mean_of(rows, d.dim())
        };
        for c in 0..spec.num_classes {
            assert!(vector::dist(&class_mean(&train, c), &class_mean(&test, c)) < 1.0);
        }
    }
}
