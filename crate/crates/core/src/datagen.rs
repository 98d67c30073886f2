//! Synthetic designs and responses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::PriorSpec;
use crate::special::std_normal_cdf;

/// Distribution of the raw entries `Yᵢⱼ` (zero mean, unit variance).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDistribution {
    #[default]
    Normal,
    /// Uniform on `(-√3, √3)`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// `Yᵢⱼ/√p`
    ScaledEntries,
    /// raw `Yᵢⱼ`
    RawEntries,
    /// intercept column of ones, remaining entries `Yᵢⱼ/√p`
    InterceptScaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignScheme {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub base: BaseDistribution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseScheme {
    AllOnes,
    AllZeros,
    WellSpecified,
}

fn base_draw<R: Rng + ?Sized>(base: BaseDistribution, rng: &mut R) -> f64 {
    match base {
        BaseDistribution::Normal => rng.sample(StandardNormal),
        BaseDistribution::Uniform => {
            let r = 3f64.sqrt();
            rng.sample(Uniform::new(-r, r).expect("finite bounds"))
        }
    }
}

pub fn gen_design<R: Rng + ?Sized>(scheme: &DesignScheme, rng: &mut R) -> Result<DMatrix<f64>> {
    let (n, p) = (scheme.n, scheme.p);
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("design needs n >= 1 and p >= 1".into()));
    }
    let scale = (p as f64).sqrt().recip();
    // filled row by row, so adding rows under a fixed seed keeps the earlier ones
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = match scheme.kind {
                DesignKind::ScaledEntries => base_draw(scheme.base, rng) * scale,
                DesignKind::RawEntries => base_draw(scheme.base, rng),
                DesignKind::InterceptScaled if j == 0 => 1.0,
                DesignKind::InterceptScaled => base_draw(scheme.base, rng) * scale,
            };
        }
    }
    if scheme.kind == DesignKind::InterceptScaled && p < 2 {
        return Err(Error::InvalidArgument("intercept design needs p >= 2".into()));
    }
    Ok(x)
}

/// Responses, plus the generating coefficients for well-specified data.
pub fn gen_responses<R: Rng + ?Sized>(
    scheme: ResponseScheme,
    x: &DMatrix<f64>,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(Vec<bool>, Option<DVector<f64>>)> {
    let n = x.nrows();
    match scheme {
        ResponseScheme::AllOnes => Ok((vec![true; n], None)),
        ResponseScheme::AllZeros => Ok((vec![false; n], None)),
        ResponseScheme::WellSpecified => {
            let p = x.ncols();
            let (_, cov) = prior.matrices(x)?;
            let l = cholesky(&cov)?;
            let xi = DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
            let beta = prior.mean_vector(p) + l * xi;
            let eta = x * &beta;
            let y = eta.iter().map(|&e| rng.random::<f64>() < std_normal_cdf(e)).collect();
            Ok((y, Some(beta)))
        }
    }
}

/// Centers and scales every non-intercept column to `Σxᵢⱼ = 0`,
/// `n⁻¹Σxᵢⱼ² = 1`. The intercept, if declared, is column 0.
pub fn standardize(x: &DMatrix<f64>, has_intercept: bool) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for j in 0..x.ncols() {
        if has_intercept && j == 0 {
            continue;
        }
        let mut col = out.column_mut(j);
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let rms = (col.norm_squared() / n).sqrt();
        if !(rms > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::ZeroVarianceColumn(j));
        }
        col /= rms;
    }
    Ok(out)
}
