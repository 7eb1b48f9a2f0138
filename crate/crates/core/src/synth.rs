//! Synthetic features with neural-collapse geometry.
//!
//! Class means form a simplex equiangular tight frame: `C` vectors of norm
//! `r` with pairwise inner product `-r^2 / (C - 1)`. The simplex is built in
//! `C - 1` coordinates and carried into `R^d` by a seeded random orthonormal
//! frame, so it is not aligned with any coordinate axis. Samples are the class
//! mean plus isotropic Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::matrix::{dist_sq, dot, norm_sq, Matrix};
use crate::probe::{argmax, softmax_ce, EvalResult};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSpec {
    pub num_classes: usize,
    pub ambient_dim: usize,
    pub samples_per_class: usize,
    pub within_class_sigma: f64,
    pub mean_radius: f64,
    pub seed: u64,
}

impl Default for CollapseSpec {
    /// Ten classes in `R^256`, 100 samples per class and split, noise at 5% of the radius.
    fn default() -> Self {
        Self {
            num_classes: 10,
            ambient_dim: 256,
            samples_per_class: 100,
            within_class_sigma: 0.05,
            mean_radius: 1.0,
            seed: 42,
        }
    }
}

impl CollapseSpec {
    pub fn validate(&self) -> Result<()> {
        check_simplex_dims(self.num_classes, self.ambient_dim)?;
        if !(self.within_class_sigma >= 0.0 && self.within_class_sigma.is_finite()) {
            return Err(Error::Geometry(format!(
                "within_class_sigma must be >= 0, got {}",
                self.within_class_sigma
            )));
        }
        if !(self.mean_radius > 0.0 && self.mean_radius.is_finite()) {
            return Err(Error::Geometry(format!(
                "mean_radius must be > 0, got {}",
                self.mean_radius
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Geometry("samples_per_class must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_simplex_dims(c: usize, d: usize) -> Result<()> {
    if c < 2 || c > d + 1 {
        return Err(Error::Geometry(format!(
            "a simplex of {c} points needs 2 <= C <= d + 1, got d = {d}"
        )));
    }
    Ok(())
}

/// Simplex ETF class means (`C x d`), rotated into `R^d` with a frame drawn from `rng`.
pub fn simplex_etf_means_with(
    rng: &mut SeededRng,
    c: usize,
    d: usize,
    radius: f64,
) -> Result<Matrix> {
    check_simplex_dims(c, d)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Geometry(format!("radius must be > 0, got {radius}")));
    }
    let m = c - 1;
    // Orthonormal basis of the complement of the all-ones vector (Helmert
    // basis): column j has 1/sqrt(j(j+1)) above the diagonal and
    // -j/sqrt(j(j+1)) on it. Row i is then the coordinate vector of
    // e_i - 1/C, which has norm sqrt((C-1)/C).
    let mut coords = vec![0.0; c * m];
    for j in 1..=m {
        let norm = ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            coords[i * m + (j - 1)] = 1.0 / norm;
        }
        coords[j * m + (j - 1)] = -(j as f64) / norm;
    }
    let scale = radius * (c as f64 / m as f64).sqrt();

    let frame = random_orthonormal_frame(rng, m, d);
    let mut data = vec![0.0; c * d];
    for i in 0..c {
        let out = &mut data[i * d..(i + 1) * d];
        for j in 0..m {
            let w = scale * coords[i * m + j];
            for (o, &f) in out.iter_mut().zip(&frame[j]) {
                *o += w * f;
            }
        }
    }
    Matrix::new(c, d, data)
}

/// [`simplex_etf_means_with`] from a fresh generator.
pub fn simplex_etf_means(c: usize, d: usize, radius: f64, seed: u64) -> Result<Matrix> {
    simplex_etf_means_with(&mut SeededRng::new(seed), c, d, radius)
}

/// `m` orthonormal vectors in `R^d` from Gram–Schmidt on Gaussian draws; this
/// is the first `m` columns of the Q factor of a Gaussian `d x m` matrix.
fn random_orthonormal_frame(rng: &mut SeededRng, m: usize, d: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(m);
    while frame.len() < m {
        let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        for _ in 0..2 {
            for b in &frame {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm_sq(&v).sqrt();
        // A Gaussian draw lands in the span of earlier vectors with
        // probability zero; redraw if it numerically does.
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            frame.push(v);
        }
    }
    frame
}

/// A generated train/test pair and the class means they were drawn around.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseDataset {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub means: Matrix,
}

/// Draws balanced train and test sets. The means and training noise come
/// from `seed`; the test noise from `seed + 1`.
pub fn generate_collapse_dataset(spec: &CollapseSpec) -> Result<CollapseDataset> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let means = simplex_etf_means_with(
        &mut rng,
        spec.num_classes,
        spec.ambient_dim,
        spec.mean_radius,
    )?;
    let train = sample_around(&means, spec, &mut rng, Split::Train)?;
    let mut test_rng = SeededRng::new(spec.seed.wrapping_add(1));
    let test = sample_around(&means, spec, &mut test_rng, Split::Test)?;
    Ok(CollapseDataset { train, test, means })
}

fn sample_around(
    means: &Matrix,
    spec: &CollapseSpec,
    rng: &mut SeededRng,
    split: Split,
) -> Result<LabeledDataset> {
    let (c, d) = means.shape();
    let n = c * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for class in 0..c {
        for _ in 0..spec.samples_per_class {
            data.extend(
                means
                    .row(class)
                    .iter()
                    .map(|&m| m + spec.within_class_sigma * rng.standard_normal()),
            );
            labels.push(class);
        }
    }
    LabeledDataset::new(Matrix::new(n, d, data)?, labels, c, split)
}

/// Assigns each row to the Euclidean-nearest mean (ties to the lowest index).
///
/// The reported loss is the cross-entropy of `softmax(-||x - mu_c||^2 / 2)`,
/// the class posterior under unit-variance isotropic noise.
pub fn nearest_mean_oracle(means: &Matrix, data: &LabeledDataset) -> Result<EvalResult> {
    if means.cols() != data.dim() {
        return Err(Error::Shape {
            op: "nearest_mean_oracle",
            left: means.shape(),
            right: data.features().shape(),
        });
    }
    if means.rows() != data.num_classes() {
        return Err(Error::Input(format!(
            "{} means for {} classes",
            means.rows(),
            data.num_classes()
        )));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for (x, &y) in data.features().row_iter().zip(data.labels()) {
        let scores: Vec<f64> = means.row_iter().map(|m| -0.5 * dist_sq(x, m)).collect();
        total += softmax_ce(&scores, y)?.0;
        predictions.push(argmax(&scores));
    }
    Ok(EvalResult::from_parts(predictions, data.labels(), total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(m: &Matrix) -> Matrix {
        m.matmul_transposed(m).unwrap()
    }

    #[test]
    fn two_classes_are_antipodal() {
        let m = simplex_etf_means(2, 5, 1.0, 3).unwrap();
        assert!((dot(m.row(0), m.row(1)) + 1.0).abs() < 1e-12);
        for i in 0..5 {
            assert!((m.get(0, i) + m.get(1, i)).abs() < 1e-12);
        }
    }

    #[test]
    fn three_classes_equiangular() {
        let r = 2.0;
        let m = simplex_etf_means(3, 7, r, 9).unwrap();
        let g = gram(&m);
        for i in 0..3 {
            assert!((g.get(i, i) - r * r).abs() < 1e-10);
            for j in 0..3 {
                if i != j {
                    assert!((g.get(i, j) + 0.5 * r * r).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn etf_identities_hold_up_to_c_equals_d_plus_one() {
        for (c, d, r) in [(10, 256, 1.0), (5, 4, 3.0), (17, 64, 0.5)] {
            let m = simplex_etf_means(c, d, r, 1).unwrap();
            let g = gram(&m);
            let off = -r * r / (c as f64 - 1.0);
            for i in 0..c {
                assert!((g.get(i, i).sqrt() - r).abs() < 1e-8);
                for j in 0..c {
                    if i != j {
                        assert!((g.get(i, j) - off).abs() < 1e-8);
                    }
                }
            }
        }
    }

    /// Numerical rank of a small symmetric PSD matrix by Gaussian
    /// elimination with full pivoting.
    fn numerical_rank(m: &Matrix, tol: f64) -> usize {
        let n = m.rows();
        let mut a: Vec<Vec<f64>> = m.row_iter().map(|r| r.to_vec()).collect();
        let mut rank = 0;
        for col in 0..n {
            let (mut pr, mut pc, mut best) = (0, 0, 0.0);
            for i in rank..n {
                for j in col..n {
                    if a[i][j].abs() > best {
                        (pr, pc, best) = (i, j, a[i][j].abs());
                    }
                }
            }
            if best < tol {
                break;
            }
            a.swap(rank, pr);
            for row in a.iter_mut() {
                row.swap(col, pc);
            }
            for i in (rank + 1)..n {
                let f = a[i][col] / a[rank][col];
                for j in col..n {
                    a[i][j] -= f * a[rank][j];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn gram_has_rank_c_minus_one() {
        let m = simplex_etf_means(6, 20, 1.0, 4).unwrap();
        assert_eq!(numerical_rank(&gram(&m), 1e-8), 5);
    }

    #[test]
    fn too_many_classes_rejected() {
        assert!(matches!(
            simplex_etf_means(6, 4, 1.0, 0),
            Err(Error::Geometry(_))
        ));
        assert!(simplex_etf_means(1, 4, 1.0, 0).is_err());
        assert!(simplex_etf_means(3, 4, 0.0, 0).is_err());
    }

    #[test]
    fn means_are_not_axis_aligned() {
        let m = simplex_etf_means(10, 256, 1.0, 42).unwrap();
        let max_coord = m.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max_coord < 0.5, "{max_coord}");
    }

    #[test]
    fn zero_noise_samples_are_means() {
        let spec = CollapseSpec {
            num_classes: 4,
            ambient_dim: 8,
            samples_per_class: 3,
            within_class_sigma: 0.0,
            mean_radius: 1.0,
            seed: 5,
        };
        let ds = generate_collapse_dataset(&spec).unwrap();
        for (x, &y) in ds.train.features().row_iter().zip(ds.train.labels()) {
            assert_eq!(x, ds.means.row(y));
        }
        assert_eq!(
            nearest_mean_oracle(&ds.means, &ds.test).unwrap().accuracy,
            1.0
        );
    }

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let spec = CollapseSpec {
            samples_per_class: 7,
            ..CollapseSpec::default()
        };
        let a = generate_collapse_dataset(&spec).unwrap();
        let b = generate_collapse_dataset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 70);
        assert_eq!(a.train.split(), Split::Train);
        assert_eq!(a.test.split(), Split::Test);
        for c in 0..10 {
            assert_eq!(a.train.labels().iter().filter(|&&l| l == c).count(), 7);
        }
        assert_ne!(a.train.features(), a.test.features());
    }

    #[test]
    fn high_snr_oracle_is_near_perfect() {
        let ds = generate_collapse_dataset(&CollapseSpec::default()).unwrap();
        let eval = nearest_mean_oracle(&ds.means, &ds.test).unwrap();
        assert!(eval.accuracy >= 0.99, "{}", eval.accuracy);
    }

    #[test]
    fn oracle_geometry() {
        let means = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let x = Matrix::from_rows(&[[0.9, 0.0]]).unwrap();
        let data = LabeledDataset::new(x, vec![0], 2, Split::Test).unwrap();
        let eval = nearest_mean_oracle(&means, &data).unwrap();
        assert_eq!(eval.predictions, vec![0]);
        let bad = Matrix::from_rows(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            nearest_mean_oracle(&bad, &data),
            Err(Error::Shape { .. })
        ));
    }
}
