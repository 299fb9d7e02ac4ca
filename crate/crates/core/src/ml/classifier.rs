use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::viewsphere::Direction;

pub const NUM_CLASSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logistic,
    Discriminant,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::Discriminant => "lda",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub shrinkage: f64,
}

/// Linear scores over the 8 directions: `W [x; 1]` after standardizing `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub kind: ClassifierKind,
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
    /// `NUM_CLASSES x (d + 1)`, bias in the last column.
    pub weights: DMatrix<f64>,
}

fn standardize(xs: &[Vec<f64>]) -> (DVector<f64>, DVector<f64>) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mean = DVector::from_fn(d, |j, _| xs.iter().map(|x| x[j]).sum::<f64>() / n);
    let scale = DVector::from_fn(d, |j, _| {
        let var = xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
        if var > 1e-24 {
            var.sqrt()
        } else {
            1.0
        }
    });
    (mean, scale)
}

impl LinearClassifier {
    pub fn train(kind: ClassifierKind, xs: &[Vec<f64>], labels: &[Direction], params: &TrainParams) -> Result<Self> {
        assert_eq!(xs.len(), labels.len());
        let mut present = [false; NUM_CLASSES];
        for l in labels {
            present[l.index()] = true;
        }
        if present.iter().filter(|p| **p).count() < 2 {
            return Err(Error::InsufficientData("classifier needs at least two classes".into()));
        }
        let (mean, scale) = standardize(xs);
        let d = mean.len();
        let z: Vec<DVector<f64>> = xs
            .iter()
            .map(|x| (DVector::from_column_slice(x) - &mean).component_div(&scale))
            .collect();
        let weights = match kind {
            ClassifierKind::Logistic => fit_logistic(&z, labels, d, params),
            ClassifierKind::Discriminant => fit_lda(&z, labels, d, &present, params.shrinkage)?,
        };
        Ok(Self {
            kind,
            mean,
            scale,
            weights,
        })
    }

    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let z = (DVector::from_column_slice(x) - &self.mean).component_div(&self.scale);
        let d = z.len();
        let mut out = [0.0; NUM_CLASSES];
        for (k, o) in out.iter_mut().enumerate() {
            let row = self.weights.row(k);
            *o = row.columns(0, d).dot(&z.transpose()) + row[d];
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> Direction {
        let s = self.scores(x);
        let best = crate::policies::argmax_first(&s).expect("eight scores");
        Direction::ALL[best]
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[Direction]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let hits = xs.iter().zip(labels).filter(|(x, l)| self.predict(x) == **l).count();
        hits as f64 / xs.len() as f64
    }
}

/// Multinomial logistic regression by full-batch gradient descent.
fn fit_logistic(z: &[DVector<f64>], labels: &[Direction], d: usize, p: &TrainParams) -> DMatrix<f64> {
    let n = z.len() as f64;
    let mut w = DMatrix::<f64>::zeros(NUM_CLASSES, d + 1);
    let xs: Vec<DVector<f64>> = z.iter().map(|v| v.clone().insert_row(d, 1.0)).collect();
    for _ in 0..p.epochs {
        let mut grad = DMatrix::<f64>::zeros(NUM_CLASSES, d + 1);
        for (x, l) in xs.iter().zip(labels) {
            let logits = &w * x;
            let m = logits.max();
            let exp = logits.map(|v| (v - m).exp());
            let probs = &exp / exp.sum();
            let mut err = probs;
            err[l.index()] -= 1.0;
            grad += err * x.transpose();
        }
        grad /= n;
        let mut reg = w.clone() * p.l2;
        reg.column_mut(d).fill(0.0);
        w -= (grad + reg) * p.learning_rate;
    }
    w
}

/// Linear discriminant with a shrunk pooled covariance. Classes absent from
/// the data get a score of minus infinity.
fn fit_lda(
    z: &[DVector<f64>],
    labels: &[Direction],
    d: usize,
    present: &[bool; NUM_CLASSES],
    shrinkage: f64,
) -> Result<DMatrix<f64>> {
    let n = z.len();
    let mut means = vec![DVector::<f64>::zeros(d); NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (x, l) in z.iter().zip(labels) {
        means[l.index()] += x;
        counts[l.index()] += 1;
    }
    for k in 0..NUM_CLASSES {
        if counts[k] > 0 {
            means[k] /= counts[k] as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (x, l) in z.iter().zip(labels) {
        let e = x - &means[l.index()];
        cov += &e * e.transpose();
    }
    cov /= (n.saturating_sub(present.iter().filter(|p| **p).count())).max(1) as f64;
    let avg_var = cov.trace() / d as f64;
    let cov = cov * (1.0 - shrinkage) + DMatrix::identity(d, d) * (shrinkage * avg_var.max(1e-12));
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::InsufficientData("pooled covariance is singular".into()))?;
    let mut w = DMatrix::<f64>::zeros(NUM_CLASSES, d + 1);
    for k in 0..NUM_CLASSES {
        if counts[k] == 0 {
            w[(k, d)] = f64::NEG_INFINITY;
            continue;
        }
        let a = chol.solve(&means[k]);
        for j in 0..d {
            w[(k, j)] = a[j];
        }
        w[(k, d)] = -0.5 * means[k].dot(&a) + (counts[k] as f64 / n as f64).ln();
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> TrainParams {
        TrainParams {
            learning_rate: 0.5,
            epochs: 300,
            l2: 0.0,
            shrinkage: 1e-3,
        }
    }

    fn two_blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Direction>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let (c, l) = if i % 2 == 0 { (2.0, Direction::E) } else { (-2.0, Direction::W) };
            xs.push(vec![c + rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)]);
            ys.push(l);
        }
        (xs, ys)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (xs, ys) = two_blobs(100, 1);
        for kind in [ClassifierKind::Logistic, ClassifierKind::Discriminant] {
            let clf = LinearClassifier::train(kind, &xs, &ys, &params()).unwrap();
            assert_eq!(clf.accuracy(&xs, &ys), 1.0, "{kind:?}");
            assert!([Direction::E, Direction::W].contains(&clf.predict(&[0.1, 0.0])));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = two_blobs(40, 2);
        let a = LinearClassifier::train(ClassifierKind::Logistic, &xs, &ys, &params()).unwrap();
        let b = LinearClassifier::train(ClassifierKind::Logistic, &xs, &ys, &params()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let xs = vec![vec![0.0], vec![1.0]];
        let ys = vec![Direction::N; 2];
        assert!(LinearClassifier::train(ClassifierKind::Logistic, &xs, &ys, &params()).is_err());
    }
}
