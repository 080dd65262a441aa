//! Bivariate VAR(p) least-squares fit and the Wald test for Granger
//! causality, used as the comparison baseline on band-filtered signals.

use crate::dvine::Direction;
use crate::error::{Result, SteError};
use crate::signal::TimeSeries;
use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Fitted bivariate VAR(p) with intercept; component 0 is x, component 1 y.
#[derive(Debug, Clone)]
pub struct VarModel {
    pub p: usize,
    /// lag matrices A_1..A_p, coeffs[l][target][source]
    pub coeffs: Vec<[[f64; 2]; 2]>,
    pub intercept: [f64; 2],
    /// innovation covariance from residuals
    pub sigma: [[f64; 2]; 2],
    pub residuals: Vec<[f64; 2]>,
    /// effective sample size (length minus p)
    pub n_eff: usize,
    /// (Z'Z)^{-1} for the shared regressor matrix, for Wald covariances
    zt_z_inv: DMatrix<f64>,
    /// companion spectral radius < 1
    pub stable: bool,
}

/// Equation-by-equation least squares on the shared regressor matrix
/// [1, x_{t-1}, y_{t-1}, ..., x_{t-p}, y_{t-p}].
pub fn fit_var(x: &TimeSeries, y: &TimeSeries, p: usize) -> Result<VarModel> {
    if p == 0 {
        return Err(SteError::Config("VAR order p must be >= 1".into()));
    }
    if x.values.len() != y.values.len() {
        return Err(SteError::Config("series lengths differ".into()));
    }
    let n = x.values.len();
    if n <= 10 * p {
        return Err(SteError::TooShort { need: 10 * p + 1, got: n });
    }
    let n_eff = n - p;
    let n_reg = 1 + 2 * p;
    let mut z = DMatrix::zeros(n_eff, n_reg);
    let mut tx = DMatrix::zeros(n_eff, 1);
    let mut ty = DMatrix::zeros(n_eff, 1);
    for (r, t) in (p..n).enumerate() {
        z[(r, 0)] = 1.0;
        for l in 1..=p {
            z[(r, 2 * l - 1)] = x.values[t - l];
            z[(r, 2 * l)] = y.values[t - l];
        }
        tx[(r, 0)] = x.values[t];
        ty[(r, 0)] = y.values[t];
    }
    let zt_z = z.transpose() * &z;
    let zt_z_inv = zt_z
        .try_inverse()
        .ok_or_else(|| SteError::FitFailure("singular regressor matrix".into()))?;
    let bx = &zt_z_inv * z.transpose() * &tx;
    let by = &zt_z_inv * z.transpose() * &ty;

    let intercept = [bx[(0, 0)], by[(0, 0)]];
    let mut coeffs = Vec::with_capacity(p);
    for l in 1..=p {
        coeffs.push([
            [bx[(2 * l - 1, 0)], bx[(2 * l, 0)]],
            [by[(2 * l - 1, 0)], by[(2 * l, 0)]],
        ]);
    }

    let rx = &tx - &z * &bx;
    let ry = &ty - &z * &by;
    let mut residuals = Vec::with_capacity(n_eff);
    let mut s = [[0.0; 2]; 2];
    for r in 0..n_eff {
        let e = [rx[(r, 0)], ry[(r, 0)]];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += e[i] * e[j];
            }
        }
        residuals.push(e);
    }
    let dof = (n_eff - n_reg) as f64;
    for row in &mut s {
        for v in row.iter_mut() {
            *v /= dof;
        }
    }

    // companion-matrix spectral radius
    let d = 2 * p;
    let mut comp = DMatrix::zeros(d, d);
    for (l, a) in coeffs.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                comp[(i, 2 * l + j)] = a[i][j];
            }
        }
    }
    for i in 2..d {
        comp[(i, i - 2)] = 1.0;
    }
    let radius = comp
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);

    Ok(VarModel {
        p,
        coeffs,
        intercept,
        sigma: s,
        residuals,
        n_eff,
        zt_z_inv,
        stable: radius < 1.0,
    })
}

/// Wald test of the p cross-lag coefficients of the source in the target's
/// equation; chi-square reference with p degrees of freedom.
pub fn wald_gc_test(model: &VarModel, direction: Direction) -> Result<(f64, f64)> {
    let p = model.p;
    // target equation and source regressor offset within each lag block
    let (target, source) = match direction {
        Direction::XToY => (1usize, 0usize),
        Direction::YToX => (0usize, 1usize),
    };
    // regressor indices of the source's lags: 1 + 2*(l-1) + source
    let idx: Vec<usize> = (1..=p).map(|l| 2 * l - 1 + source).collect();
    let b = DMatrix::from_iterator(p, 1, idx.iter().map(|&l| {
        let lag = (l - 1) / 2;
        model.coeffs[lag][target][source]
    }));
    let sigma_tt = model.sigma[target][target];
    let mut cov = DMatrix::zeros(p, p);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            cov[(r, c)] = sigma_tt * model.zt_z_inv[(i, j)];
        }
    }
    let cov_inv = cov
        .try_inverse()
        .ok_or_else(|| SteError::Numerical("singular Wald covariance".into()))?;
    let stat = (b.transpose() * cov_inv * &b)[(0, 0)];
    if !stat.is_finite() || stat < 0.0 {
        return Err(SteError::Numerical(format!("Wald statistic {stat}")));
    }
    let chi2 = ChiSquared::new(p as f64)
        .map_err(|e| SteError::Numerical(format!("chi-square dof: {e}")))?;
    let p_value = 1.0 - chi2.cdf(stat);
    Ok((stat, p_value))
}
