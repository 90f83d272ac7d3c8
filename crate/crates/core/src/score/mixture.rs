//! Gaussian mixtures with diagonal or dense covariances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Covariance {
    /// Variances on the diagonal.
    Diagonal(Vec<f64>),
    /// Symmetric positive-definite matrix.
    Dense(#[serde(serialize_with = "ser_matrix")] DMatrix<f64>),
}

fn ser_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect();
    rows.serialize(s)
}

impl Covariance {
    pub fn isotropic(std: f64, dim: usize) -> Self {
        Covariance::Diagonal(vec![std * std; dim])
    }

    pub fn from_stds(stds: &[f64]) -> Self {
        Covariance::Diagonal(stds.iter().map(|s| s * s).collect())
    }

    /// `Σ_ij = σ² ρ^|i-j|`.
    pub fn ar1(std: f64, rho: f64, dim: usize) -> Self {
        if rho == 0.0 {
            return Self::isotropic(std, dim);
        }
        let var = std * std;
        Covariance::Dense(DMatrix::from_fn(dim, dim, |i, j| {
            var * rho.powi((i as i32 - j as i32).abs())
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(v) => v.len(),
            Covariance::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
            Covariance::Dense(m) => m.clone(),
        }
    }

    /// Factor of `Σ + shift·I`.
    pub fn factor(&self, shift: f64) -> Result<Factor> {
        match self {
            Covariance::Diagonal(v) => {
                let var: Vec<f64> = v.iter().map(|x| x + shift).collect();
                if var.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::NonPdCovariance(format!("diagonal {var:?}")));
                }
                let log_det = var.iter().map(|x| x.ln()).sum();
                Ok(Factor::Diagonal { var, log_det })
            }
            Covariance::Dense(m) => {
                let d = m.nrows();
                if m.ncols() != d {
                    return Err(Error::NonPdCovariance("matrix is not square".into()));
                }
                if (0..d).any(|i| {
                    (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()))
                }) {
                    return Err(Error::NonPdCovariance("matrix is not symmetric".into()));
                }
                let shifted = m + DMatrix::identity(d, d) * shift;
                Factor::cholesky(&shifted)
            }
        }
    }
}

/// Factorisation of a positive-definite matrix supporting solves and
/// products with the square-root factor.
#[derive(Debug, Clone)]
pub enum Factor {
    Diagonal {
        var: Vec<f64>,
        log_det: f64,
    },
    Cholesky {
        dim: usize,
        lower: Vec<f64>,
        log_det: f64,
    },
}

impl Factor {
    pub fn cholesky(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        let ch = nalgebra::Cholesky::new(m.clone())
            .ok_or_else(|| Error::NonPdCovariance("Cholesky factorisation failed".into()))?;
        let l = ch.l();
        let mut lower = vec![0.0; d * d];
        let mut log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                lower[i * d + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::NonPdCovariance("singular factor".into()));
        }
        Ok(Factor::Cholesky {
            dim: d,
            lower,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Diagonal { var, .. } => var.len(),
            Factor::Cholesky { dim, .. } => *dim,
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            Factor::Diagonal { log_det, .. } | Factor::Cholesky { log_det, .. } => *log_det,
        }
    }

    /// Writes `A⁻¹ v` into `out` and returns `vᵀ A⁻¹ v`.
    pub fn solve_quad(&self, v: &[f64], out: &mut [f64]) -> f64 {
        match self {
            Factor::Diagonal { var, .. } => {
                let mut q = 0.0;
                for j in 0..var.len() {
                    out[j] = v[j] / var[j];
                    q += v[j] * out[j];
                }
                q
            }
            Factor::Cholesky { dim, lower, .. } => {
                let d = *dim;
                let mut q = 0.0;
                for i in 0..d {
                    let mut s = v[i];
                    for j in 0..i {
                        s -= lower[i * d + j] * out[j];
                    }
                    out[i] = s / lower[i * d + i];
                    q += out[i] * out[i];
                }
                for i in (0..d).rev() {
                    let mut s = out[i];
                    for j in i + 1..d {
                        s -= lower[j * d + i] * out[j];
                    }
                    out[i] = s / lower[i * d + i];
                }
                q
            }
        }
    }

    /// Writes `L z` into `out`, where `L Lᵀ = A`.
    pub fn mul_sqrt(&self, z: &[f64], out: &mut [f64]) {
        match self {
            Factor::Diagonal { var, .. } => {
                for j in 0..var.len() {
                    out[j] = var[j].sqrt() * z[j];
                }
            }
            Factor::Cholesky { dim, lower, .. } => {
                let d = *dim;
                for i in 0..d {
                    out[i] = (0..=i).map(|j| lower[i * d + j] * z[j]).sum();
                }
            }
        }
    }
}

/// Weighted Gaussian components in `d` dimensions.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<Covariance>,
    #[serde(skip)]
    factors: Vec<Factor>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<Covariance>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Mixture("no components".into()));
        }
        if means.len() != k || covs.len() != k {
            return Err(Error::Mixture(format!(
                "{k} weights, {} means, {} covariances",
                means.len(),
                covs.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Mixture(format!(
                "weights must be positive: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::WeightsSum(sum));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Mixture("zero-dimensional component".into()));
        }
        for (m, c) in means.iter().zip(&covs) {
            if m.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: m.len(),
                });
            }
            if c.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: c.dim(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("component mean".into()));
            }
        }
        let factors = covs
            .iter()
            .map(|c| c.factor(0.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights,
            means,
            covs,
            factors,
        })
    }

    /// A single Gaussian component.
    pub fn gaussian(mean: Vec<f64>, cov: Covariance) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![cov])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Covariance] {
        &self.covs
    }

    /// Global mean `Σ π_k m_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }

    /// Per-coordinate variance of the mixture.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut out = vec![0.0; self.dim()];
        for k in 0..self.len() {
            let dense = self.covs[k].to_dense();
            for j in 0..self.dim() {
                let dm = self.means[k][j] - mean[j];
                out[j] += self.weights[k] * (dense[(j, j)] + dm * dm);
            }
        }
        out
    }

    fn component_log_pdfs(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut diff = vec![0.0; d];
        let mut w = vec![0.0; d];
        (0..self.len())
            .map(|k| {
                for j in 0..d {
                    diff[j] = x[j] - self.means[k][j];
                }
                let q = self.factors[k].solve_quad(&diff, &mut w);
                self.weights[k].ln() - 0.5 * (q + self.factors[k].log_det() + d as f64 * LN_2PI)
            })
            .collect()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_pdfs(x))
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Posterior component probabilities given a point `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let mut l = self.component_log_pdfs(x);
        let z = log_sum_exp(&l);
        for v in l.iter_mut() {
            *v = (*v - z).exp();
        }
        l
    }

    /// Draws a component label and a sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let mut out = vec![0.0; self.dim()];
        let k = self.sample_into(rng, &mut out);
        (k, out)
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = self.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z: Vec<f64> = (0..self.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factors[k].mul_sqrt(&z, out);
        for (o, m) in out.iter_mut().zip(&self.means[k]) {
            *o += m;
        }
        k
    }

    /// Marginal law of one coordinate.
    pub fn marginal(&self, coord: usize) -> Result<GaussianMixture> {
        if coord >= self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: coord + 1,
            });
        }
        let covs = self
            .covs
            .iter()
            .map(|c| Covariance::Diagonal(vec![c.to_dense()[(coord, coord)]]))
            .collect();
        let means = self.means.iter().map(|m| vec![m[coord]]).collect();
        GaussianMixture::new(self.weights.clone(), means, covs)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weight_sum_message() {
        let err = GaussianMixture::new(
            vec![0.7, 0.4],
            vec![vec![0.0], vec![1.0]],
            vec![Covariance::isotropic(1.0, 1); 2],
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "weights sum 1.1");
    }

    #[test]
    fn zero_std_is_not_pd() {
        let err = GaussianMixture::gaussian(vec![0.0], Covariance::isotropic(0.0, 1)).unwrap_err();
        assert!(err.to_string().starts_with("non-PD covariance"));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMixture::gaussian(vec![0.0; 2], Covariance::Dense(bad)).is_err());
    }

    #[test]
    fn dense_and_diagonal_agree() {
        let diag = Covariance::Diagonal(vec![0.5, 2.0, 1.5]);
        let dense = Covariance::Dense(diag.to_dense());
        let (fa, fb) = (diag.factor(0.3).unwrap(), dense.factor(0.3).unwrap());
        let v = [0.3, -1.0, 2.0];
        let (mut wa, mut wb) = ([0.0; 3], [0.0; 3]);
        let (qa, qb) = (fa.solve_quad(&v, &mut wa), fb.solve_quad(&v, &mut wb));
        assert!((qa - qb).abs() < 1e-14);
        assert!((fa.log_det() - fb.log_det()).abs() < 1e-14);
        for j in 0..3 {
            assert!((wa[j] - wb[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn ar1_solve_matches_nalgebra() {
        let c = Covariance::ar1(0.7, 0.8, 6);
        let f = c.factor(0.1).unwrap();
        let a = c.to_dense() + DMatrix::identity(6, 6) * 0.1;
        let v: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let mut w = vec![0.0; 6];
        let q = f.solve_quad(&v, &mut w);
        let exact = a.clone().try_inverse().unwrap() * DVector::from_column_slice(&v);
        for j in 0..6 {
            assert!((w[j] - exact[j]).abs() < 1e-12);
        }
        assert!((q - DVector::from_column_slice(&v).dot(&exact)).abs() < 1e-12);
        assert!((f.log_det() - a.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn pdf_integrates_to_one() {
        let gm = GaussianMixture::new(
            vec![0.6, 0.4],
            vec![vec![0.0], vec![1.5]],
            vec![Covariance::isotropic(0.2, 1), Covariance::isotropic(0.3, 1)],
        )
        .unwrap();
        let h = 1e-3;
        let total: f64 = (-3000..6000).map(|k| gm.pdf(&[k as f64 * h]) * h).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!((gm.mean()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sample_moments() {
        let gm = GaussianMixture::gaussian(vec![1.0, -2.0], Covariance::ar1(0.5, 0.5, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let (_, x) = gm.sample(&mut rng);
            mean[0] += x[0] / n as f64;
            mean[1] += x[1] / n as f64;
        }
        let tol = 4.0 * 0.5 / (n as f64).sqrt();
        assert!((mean[0] - 1.0).abs() < tol && (mean[1] + 2.0).abs() < tol);
    }

    #[test]
    fn responsibilities_dominance() {
        let gm = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![20.0]],
            vec![Covariance::isotropic(1.0, 1); 2],
        )
        .unwrap();
        let r = gm.responsibilities(&[20.0]);
        assert!(r[1] > 1.0 - 1e-6);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
