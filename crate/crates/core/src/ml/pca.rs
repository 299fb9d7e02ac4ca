use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// One component per row, unit length, by decreasing variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Mean-centered principal components from the sample covariance.
    /// Each component's sign is fixed so its largest entry is positive.
    pub fn fit(data: &[Vec<f64>], k: usize) -> Result<Pca> {
        if data.len() < k || data.is_empty() {
            return Err(Error::InsufficientData(format!(
                "PCA needs at least {k} samples, got {}",
                data.len()
            )));
        }
        let d = data[0].len();
        if k > d {
            return Err(Error::InsufficientData(format!("{k} components requested from {d} features")));
        }
        let x = DMatrix::from_fn(data.len(), d, |i, j| data[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (data.len().max(2) - 1) as f64;
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = DMatrix::zeros(k, d);
        let mut explained_variance = Vec::with_capacity(k);
        for (r, &c) in order.iter().take(k).enumerate() {
            let mut v = eig.eigenvectors.column(c).clone_owned();
            let imax = v.iamax();
            if v[imax] < 0.0 {
                v = -v;
            }
            components.set_row(r, &v.transpose());
            explained_variance.push(eig.eigenvalues[c].max(0.0));
        }
        Ok(Pca {
            mean,
            components,
            explained_variance,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v) - &self.mean;
        (&self.components * x).iter().copied().collect()
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(z);
        (self.components.transpose() * z + &self.mean).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Correlated data: a few latent factors plus noise.
        let mix: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        (0..n)
            .map(|_| {
                let f: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                (0..d)
                    .map(|j| (0..4).map(|l| f[l] * mix[l][j]).sum::<f64>() + 0.05 * rng.random_range(-1.0..1.0) + j as f64)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn orthonormal_and_centered() {
        let data = sample(80, 52, 1);
        let pca = Pca::fit(&data, 26).unwrap();
        assert_eq!(pca.n_components(), 26);
        let g = &pca.components * pca.components.transpose();
        assert!((g - DMatrix::identity(26, 26)).amax() < 1e-6);
        let mean: Vec<f64> = pca.mean.iter().copied().collect();
        assert!(pca.transform(&mean).iter().all(|v| v.abs() < 1e-9));
        assert_eq!(pca.transform(&data[0]).len(), 26);
        assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn round_trip_on_the_component_span() {
        let data = sample(60, 10, 2);
        let pca = Pca::fit(&data, 4).unwrap();
        let z = [0.3, -1.2, 0.5, 2.0];
        let back = pca.transform(&pca.inverse_transform(&z));
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn reconstruction_matches_svd_optimum() {
        let data = sample(30, 8, 3);
        let k = 3;
        let pca = Pca::fit(&data, k).unwrap();
        let err = |f: &dyn Fn(&[f64]) -> Vec<f64>| -> f64 {
            data.iter()
                .map(|x| x.iter().zip(f(x)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum()
        };
        let pca_err = err(&|x| pca.inverse_transform(&pca.transform(x)));

        // Oracle: Eckart-Young says the best rank-k error is the sum of the
        // discarded squared singular values of the centered data.
        let d = data[0].len();
        let mut c = DMatrix::from_fn(data.len(), d, |i, j| data[i][j]);
        for j in 0..d {
            let m = c.column(j).mean();
            c.column_mut(j).add_scalar_mut(-m);
        }
        let mut sv: Vec<f64> = c.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let optimum: f64 = sv[k..].iter().map(|s| s * s).sum();
        assert!((pca_err - optimum).abs() <= 1e-8 * optimum.max(1.0));

        // Any other rank-k projection does no better.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let q = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let mean = pca.mean.clone();
            let other = err(&|x| {
                let xc = DVector::from_column_slice(x) - &mean;
                let p = &q * (q.transpose() * xc) + &mean;
                p.iter().copied().collect()
            });
            assert!(other >= pca_err - 1e-9);
        }
    }

    #[test]
    fn too_few_samples() {
        let data = sample(10, 52, 4);
        assert!(matches!(Pca::fit(&data, 26), Err(Error::InsufficientData(_))));
    }
}
