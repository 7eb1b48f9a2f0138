//! Linear maps from the ambient feature space `R^d` into a subspace `R^k`.
//!
//! Three families share one carrier type:
//!
//! * oblivious Gaussian maps `(1/sqrt(k)) R` with `R_mn ~ N(0, 1)`, sampled
//!   once and frozen;
//! * PCA maps, whose rows are the top-k principal directions of the
//!   (train-mean-centred) features;
//! * learned maps, which start from a Gaussian map and are trained jointly
//!   with a probe (see [`crate::probe::train_learned_projection`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dist_sq, dot, norm_sq, Matrix};
use crate::rng::{gaussian_matrix, mix_seed, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Jl,
    Pca,
    Learned,
}

impl ProjectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Jl => "jl",
            Self::Pca => "pca",
            Self::Learned => "learned",
        }
    }
}

impl std::fmt::Display for ProjectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A frozen `k x d` map together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    map: Matrix,
    method: ProjectionMethod,
    seed: Option<u64>,
    scale_applied: bool,
}

impl ProjectionMatrix {
    /// Wraps an explicit map. `k > d` is rejected.
    pub fn from_map(map: Matrix, method: ProjectionMethod, seed: Option<u64>) -> Result<Self> {
        if map.rows() > map.cols() {
            return Err(Error::InvalidDimension(format!(
                "target dimension {} exceeds source dimension {}",
                map.rows(),
                map.cols()
            )));
        }
        Ok(Self {
            map,
            method,
            seed,
            scale_applied: false,
        })
    }

    /// `d x d` identity, tagged as a learned map. Diagnostics only.
    pub fn identity(d: usize) -> Result<Self> {
        Self::from_map(Matrix::identity(d)?, ProjectionMethod::Learned, None)
    }

    pub fn map(&self) -> &Matrix {
        &self.map
    }

    pub fn method(&self) -> ProjectionMethod {
        self.method
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn scale_applied(&self) -> bool {
        self.scale_applied
    }

    pub fn source_dim(&self) -> usize {
        self.map.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.map.rows()
    }

    /// Re-tags the map; used when a trained map is derived from a JL init.
    pub(crate) fn into_learned(self, map: Matrix) -> Self {
        Self {
            map,
            method: ProjectionMethod::Learned,
            seed: self.seed,
            scale_applied: self.scale_applied,
        }
    }

    /// Applies the map to a single vector of length `d`.
    pub fn apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.source_dim() {
            return Err(Error::Shape {
                op: "project",
                left: self.map.shape(),
                right: (h.len(), 1),
            });
        }
        Ok(self.map.row_iter().map(|r| dot(r, h)).collect())
    }
}

/// Samples `(1/sqrt(k)) R` with `R` a `k x d` standard normal matrix drawn from `rng`.
pub fn sample_jl(rng: &mut SeededRng, d: usize, k: usize) -> Result<ProjectionMatrix> {
    if k == 0 || k > d {
        return Err(Error::InvalidDimension(format!(
            "JL target dimension must satisfy 1 <= k <= d, got k = {k}, d = {d}"
        )));
    }
    let mut r = gaussian_matrix(rng, k, d)?;
    let scale = 1.0 / (k as f64).sqrt();
    r.data_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(ProjectionMatrix {
        map: r,
        method: ProjectionMethod::Jl,
        seed: Some(rng.seed()),
        scale_applied: true,
    })
}

/// [`sample_jl`] from a fresh generator; the same seed always gives the same map.
pub fn sample_jl_seeded(seed: u64, d: usize, k: usize) -> Result<ProjectionMatrix> {
    sample_jl(&mut SeededRng::new(seed), d, k)
}

/// Projects every row of `x` (`N x d`) to give an `N x k` matrix.
pub fn project(p: &ProjectionMatrix, x: &Matrix) -> Result<Matrix> {
    if x.cols() != p.source_dim() {
        return Err(Error::Shape {
            op: "project",
            left: x.shape(),
            right: p.map.shape(),
        });
    }
    let k = p.target_dim();
    let mut out = Vec::with_capacity(x.rows() * k);
    for row in x.row_iter() {
        out.extend(p.map.row_iter().map(|m| dot(m, row)));
    }
    Matrix::new(x.rows(), k, out)
}

/// A fitted PCA map plus the training mean it expects to be subtracted.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub projection: ProjectionMatrix,
    /// `1 x d` training mean.
    pub mean: Matrix,
    /// Eigenvalues of the sample covariance, descending, one per component.
    pub eigenvalues: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
    /// Largest `||C v - lambda v||` over the returned components.
    pub max_residual: f64,
}

impl PcaFit {
    /// Centres `x` with the training mean, then projects it.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        project(&self.projection, &x.sub_row(&self.mean)?)
    }

    pub fn captured_variance_fraction(&self) -> f64 {
        if self.total_variance == 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }
}

const PCA_MAX_ITERS: usize = 1000;
const PCA_TOL: f64 = 1e-10;
// Eigenvalues below this fraction of the total variance count as zero rank.
const PCA_RANK_TOL: f64 = 1e-12;

/// Top-`k` principal directions of `train` by power iteration with deflation.
///
/// The rows of the returned map are orthonormal and ordered by descending
/// eigenvalue. Each component runs at most 1000 iterations and stops early
/// once successive iterates differ by less than `1e-10`.
pub fn fit_pca(train: &Matrix, k: usize) -> Result<PcaFit> {
    let d = train.cols();
    if k == 0 || k > d {
        return Err(Error::InvalidDimension(format!(
            "PCA target dimension must satisfy 1 <= k <= d, got k = {k}, d = {d}"
        )));
    }
    if train.rows() < k {
        return Err(Error::InvalidDimension(format!(
            "PCA needs at least k = {k} rows, got {}",
            train.rows()
        )));
    }
    let mean = train.column_mean();
    let centered = train.sub_row(&mean)?;
    let cov = covariance(&centered);
    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut max_residual: f64 = 0.0;
    let mut cv = vec![0.0; d];

    for j in 0..k {
        let mut start_rng = SeededRng::new(mix_seed(j as u64));
        let mut v: Vec<f64> = (0..d).map(|_| start_rng.standard_normal()).collect();
        orthogonalize(&mut v, &components);
        normalize(&mut v);

        for _ in 0..PCA_MAX_ITERS {
            sym_matvec(&cov, &v, &mut cv);
            // Deflation: restrict the iteration to the complement of the
            // components already found.
            orthogonalize(&mut cv, &components);
            let n = norm_sq(&cv).sqrt();
            if n <= PCA_RANK_TOL * total_variance || n == 0.0 {
                return Err(Error::RankDeficient {
                    requested: k,
                    achieved: j,
                });
            }
            cv.iter_mut().for_each(|x| *x /= n);
            let change = dist_sq(&cv, &v).sqrt();
            std::mem::swap(&mut v, &mut cv);
            if change < PCA_TOL {
                break;
            }
        }

        sym_matvec(&cov, &v, &mut cv);
        let lambda = dot(&v, &cv);
        if lambda <= PCA_RANK_TOL * total_variance {
            return Err(Error::RankDeficient {
                requested: k,
                achieved: j,
            });
        }
        let residual = cv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(residual);
        eigenvalues.push(lambda);
        components.push(v);
    }

    let map = Matrix::from_rows(&components)?;
    Ok(PcaFit {
        projection: ProjectionMatrix {
            map,
            method: ProjectionMethod::Pca,
            seed: None,
            scale_applied: false,
        },
        mean,
        eigenvalues,
        total_variance,
        max_residual,
    })
}

/// Sample covariance `X^T X / (n - 1)` of already-centred rows, dense `d x d`.
fn covariance(centered: &Matrix) -> Vec<f64> {
    let d = centered.cols();
    let mut cov = vec![0.0; d * d];
    for row in centered.row_iter() {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let out = &mut cov[i * d..i * d + d];
            for (o, &rj) in out[i..].iter_mut().zip(&row[i..]) {
                *o += ri * rj;
            }
        }
    }
    let denom = (centered.rows().max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    cov
}

fn sym_matvec(a: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&a[i * d..(i + 1) * d], v);
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of modified Gram–Schmidt keep the basis orthonormal to
    // machine precision even after many deflations.
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = norm_sq(v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Pairwise distance distortion of a projection over a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub num_pairs: usize,
    /// Largest projected/original distance ratio.
    pub max_expansion: f64,
    /// Smallest projected/original distance ratio.
    pub max_contraction: f64,
    pub fraction_within_eps: f64,
    pub epsilon: f64,
}

/// Computes `||P h_i - P h_j|| / ||h_i - h_j||` over all pairs of distinct rows.
pub fn check_distortion(
    p: &ProjectionMatrix,
    x: &Matrix,
    epsilon: f64,
) -> Result<DistortionReport> {
    if x.rows() < 2 {
        return Err(Error::DegenerateInput(format!(
            "distortion needs at least 2 points, got {}",
            x.rows()
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Input(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let projected = project(p, x)?;
    let (lo, hi) = (1.0 - epsilon, 1.0 + epsilon);
    let mut num_pairs = 0usize;
    let mut within = 0usize;
    let mut max_expansion = f64::NEG_INFINITY;
    let mut max_contraction = f64::INFINITY;
    for i in 0..x.rows() {
        for j in (i + 1)..x.rows() {
            let orig = dist_sq(x.row(i), x.row(j));
            if orig == 0.0 {
                continue;
            }
            let ratio = (dist_sq(projected.row(i), projected.row(j)) / orig).sqrt();
            num_pairs += 1;
            if (lo..=hi).contains(&ratio) {
                within += 1;
            }
            max_expansion = max_expansion.max(ratio);
            max_contraction = max_contraction.min(ratio);
        }
    }
    if num_pairs == 0 {
        return Err(Error::DegenerateInput("all rows are identical".into()));
    }
    Ok(DistortionReport {
        num_pairs,
        max_expansion,
        max_contraction,
        fraction_within_eps: within as f64 / num_pairs as f64,
        epsilon,
    })
}
