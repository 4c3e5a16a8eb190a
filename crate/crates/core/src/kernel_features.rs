//! Input kernels, Gram matrices and the kernel bound `κ`.
//!
//! Inputs are stored as an `m × d` matrix with one sample per row. The linear
//! kernel has the explicit feature map `X(x) = x`, so `F = R^d`; the Gaussian
//! kernel is only available through Gram matrices.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    Linear,
    /// `k(x, x′) = exp(−‖x − x′‖² / (2 bandwidth²))`.
    Gaussian { bandwidth: f64 },
}

impl Kernel {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::input(format!("Gaussian bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Kernel::Gaussian { bandwidth })
    }

    pub fn name(&self) -> String {
        match self {
            Kernel::Linear => "linear".to_string(),
            Kernel::Gaussian { bandwidth } => format!("gaussian({bandwidth})"),
        }
    }

    /// `sup_x k(x, x)` when it is known in closed form.
    pub fn kappa_sq(&self) -> Option<f64> {
        match self {
            Kernel::Linear => None,
            Kernel::Gaussian { .. } => Some(1.0),
        }
    }

    /// Whether the kernel has an explicit finite-dimensional feature map.
    pub fn has_explicit_features(&self) -> bool {
        matches!(self, Kernel::Linear)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }

    /// `k(x, x)`.
    pub fn diag(&self, x: &[f64]) -> f64 {
        match self {
            Kernel::Linear => x.iter().map(|a| a * a).sum(),
            Kernel::Gaussian { .. } => 1.0,
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    /// Accepts `linear`, `gaussian` (bandwidth 1) or `gaussian:<bandwidth>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "linear" => Ok(Kernel::Linear),
            None if s == "gaussian" => Kernel::gaussian(1.0),
            Some(("gaussian", bw)) => {
                let bw: f64 = bw
                    .parse()
                    .map_err(|_| Error::input(format!("bad Gaussian bandwidth `{bw}`")))?;
                Kernel::gaussian(bw)
            }
            _ => Err(Error::input(format!("unknown kernel `{s}` (expected linear or gaussian[:bw])"))),
        }
    }
}

pub(crate) fn check_finite(xs: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = xs.iter().position(|v| !v.is_finite()) {
        let (i, j) = (pos % xs.nrows(), pos / xs.nrows());
        return Err(Error::input(format!("{what} has a non-finite entry at row {i}, column {j}")));
    }
    Ok(())
}

fn row(xs: &DMatrix<f64>, i: usize) -> Vec<f64> {
    xs.row(i).iter().copied().collect()
}

/// `K_ij = k(x_i, x_j)` over the rows of `xs`.
pub fn gram_matrix(kernel: &Kernel, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if xs.nrows() == 0 {
        return Err(Error::input("Gram matrix of an empty dataset"));
    }
    check_finite(xs, "input matrix")?;
    if let Kernel::Linear = kernel {
        let g = xs * xs.transpose();
        // enforce exact symmetry
        return Ok((&g + g.transpose()) * 0.5);
    }
    let m = xs.nrows();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| row(xs, i)).collect();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        g[(i, i)] = kernel.eval(&rows[i], &rows[i]);
        for j in 0..i {
            let v = kernel.eval(&rows[i], &rows[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// `K_ij = k(a_i, b_j)`.
pub fn cross_gram(kernel: &Kernel, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim("cross Gram feature dimension", a.ncols(), b.ncols()));
    }
    check_finite(a, "input matrix")?;
    check_finite(b, "input matrix")?;
    if let Kernel::Linear = kernel {
        return Ok(a * b.transpose());
    }
    let ra: Vec<Vec<f64>> = (0..a.nrows()).map(|i| row(a, i)).collect();
    let rb: Vec<Vec<f64>> = (0..b.nrows()).map(|i| row(b, i)).collect();
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| kernel.eval(&ra[i], &rb[j])))
}

/// `max_i √k(x_i, x_i)`; exactly 1 for the Gaussian kernel.
pub fn empirical_kappa(kernel: &Kernel, xs: &DMatrix<f64>) -> Result<f64> {
    if xs.nrows() == 0 {
        return Err(Error::input("cannot compute kappa of an empty dataset"));
    }
    check_finite(xs, "input matrix")?;
    if let Some(k2) = kernel.kappa_sq() {
        return Ok(k2.sqrt());
    }
    let best = (0..xs.nrows())
        .map(|i| kernel.diag(xs.row(i).clone_owned().as_slice()))
        .fold(0.0f64, f64::max);
    Ok(best.sqrt())
}

/// Per-column affine standardization to mean 0 and variance 1.
///
/// Constant columns are centered but not scaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &DMatrix<f64>) -> Result<Self> {
        let m = xs.nrows();
        if m == 0 {
            return Err(Error::input("cannot standardize an empty dataset"));
        }
        check_finite(xs, "input matrix")?;
        let mut means = Vec::with_capacity(xs.ncols());
        let mut scales = Vec::with_capacity(xs.ncols());
        for col in xs.column_iter() {
            let mu = col.sum() / m as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m as f64;
            means.push(mu);
            scales.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Self { means, scales })
    }

    pub fn transform(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xs.ncols() != self.means.len() {
            return Err(Error::dim("standardizer columns", self.means.len(), xs.ncols()));
        }
        let mu = RowDVector::from_row_slice(&self.means);
        let mut out = xs.clone();
        for mut r in out.row_iter_mut() {
            r -= &mu;
            for (v, s) in r.iter_mut().zip(&self.scales) {
                *v /= s;
            }
        }
        Ok(out)
    }
}

/// Squared norms `k(x_i, x_i)` of each row.
pub fn diag_values(kernel: &Kernel, xs: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        xs.nrows(),
        (0..xs.nrows()).map(|i| kernel.diag(xs.row(i).clone_owned().as_slice())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, d, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn linear_gram_of_identity_rows() {
        let g = gram_matrix(&Kernel::Linear, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
    }

    #[test]
    fn gaussian_diagonal_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = random_matrix(&mut rng, 6, 3);
        let g = gram_matrix(&Kernel::gaussian(0.7).unwrap(), &xs).unwrap();
        for i in 0..6 {
            assert_eq!(g[(i, i)], 1.0);
        }
        assert_eq!(empirical_kappa(&Kernel::gaussian(0.7).unwrap(), &xs).unwrap(), 1.0);
    }

    #[test]
    fn linear_gram_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = random_matrix(&mut rng, 3, 4);
        let g = gram_matrix(&Kernel::Linear, &xs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += xs[(i, k)] * xs[(j, k)];
                }
                assert!((g[(i, j)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kappa_is_max_row_norm() {
        let xs = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.3, 0.4]);
        assert_eq!(empirical_kappa(&Kernel::Linear, &xs).unwrap(), 2.0);
        assert!(empirical_kappa(&Kernel::Linear, &DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn gram_rejects_non_finite() {
        let xs = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(gram_matrix(&Kernel::Linear, &xs).is_err());
    }

    #[test]
    fn gram_is_psd_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kernel in [Kernel::Linear, Kernel::gaussian(1.3).unwrap()] {
            let xs = random_matrix(&mut rng, 12, 3);
            let g = gram_matrix(&kernel, &xs).unwrap();
            assert_eq!(g, g.transpose());
            let eig = g.clone().symmetric_eigenvalues();
            assert!(eig.min() >= -1e-8 * g.trace());
        }
    }

    #[test]
    fn cross_gram_matches_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = random_matrix(&mut rng, 5, 2);
        let k = Kernel::gaussian(0.9).unwrap();
        let a = gram_matrix(&k, &xs).unwrap();
        let b = cross_gram(&k, &xs, &xs).unwrap();
        assert!((a - b).abs().max() < 1e-15);
    }

    #[test]
    fn standardizer_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs = random_matrix(&mut rng, 50, 3);
        xs.column_mut(2).fill(4.0);
        let s = Standardizer::fit(&xs).unwrap();
        let z = s.transform(&xs).unwrap();
        for j in 0..2 {
            let c = z.column(j);
            let mu = c.sum() / 50.0;
            let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 50.0;
            assert!(mu.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        assert!(z.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parse_kernel() {
        assert_eq!("linear".parse::<Kernel>().unwrap(), Kernel::Linear);
        assert_eq!(
            "gaussian:0.5".parse::<Kernel>().unwrap(),
            Kernel::Gaussian { bandwidth: 0.5 }
        );
        assert!("gaussian:-1".parse::<Kernel>().is_err());
        assert!("poly".parse::<Kernel>().is_err());
    }
}
