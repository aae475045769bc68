//! Random-variate primitives used by the Gibbs sampler.
//!
//! Truncated normals use the inverse CDF for central regions and Robert's
//! exponential rejection once a standardized bound is more than
//! [`TAIL_THRESHOLD`] standard deviations out. Truncated multivariate normals
//! are drawn by coordinate-wise Gibbs sweeps over the conditional truncated
//! normals; point-mass dimensions are pinned and removed before any
//! factorization.

use ndarray::{Array1, Array2};
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{IrtmError, Result};
use crate::linalg::{self, Cholesky};
use crate::rng::RngStream;

/// Standardized distance beyond which the tail sampler takes over.
pub const TAIL_THRESHOLD: f64 = 4.0;

/// Default number of coordinate sweeps per truncated-MVN draw.
pub const DEFAULT_INNER_SWEEPS: usize = 5;

/// Closed interval `[lower, upper]` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationBounds {
    lower: f64,
    upper: f64,
}

impl TruncationBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(IrtmError::Contract(format!(
                "invalid truncation bounds [{lower}, {upper}]"
            )));
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(IrtmError::Contract(format!(
                "empty truncation region [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn non_negative() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn non_positive() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: 0.0,
        }
    }

    pub fn point(value: f64) -> Self {
        Self {
            lower: value,
            upper: value,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    fn clamp(&self, x: f64) -> f64 {
        x.max(self.lower).min(self.upper)
    }
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[inline]
pub fn standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from N(mean, sd²) restricted to `bounds`.
pub fn sample_truncated_normal(
    mean: f64,
    sd: f64,
    bounds: TruncationBounds,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(IrtmError::Contract(format!(
            "standard deviation must be positive and finite, got {sd}"
        )));
    }
    if !mean.is_finite() {
        return Err(IrtmError::Contract(format!("mean must be finite, got {mean}")));
    }
    Ok(truncated_normal_unchecked(mean, sd, bounds, rng))
}

/// Hot-path variant without argument validation.
#[inline]
pub(crate) fn truncated_normal_unchecked(
    mean: f64,
    sd: f64,
    bounds: TruncationBounds,
    rng: &mut RngStream,
) -> f64 {
    if bounds.is_point() {
        return bounds.lower;
    }
    let a = (bounds.lower - mean) / sd;
    let b = (bounds.upper - mean) / sd;
    let z = standard_truncated(a, b, rng);
    let x = bounds.clamp(mean + sd * z);
    debug_assert!(bounds.contains(x), "draw {x} escaped {bounds:?}");
    x
}

/// Standard normal restricted to `[a, b]`, `a < b`.
fn standard_truncated(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    // one-sided region holding the mode: acceptance is at least 1/2
    if (a <= 0.0 && b == f64::INFINITY) || (b >= 0.0 && a == f64::NEG_INFINITY) {
        loop {
            let z = standard_normal(rng);
            if a <= z && z <= b {
                return z;
            }
        }
    }
    if a >= TAIL_THRESHOLD {
        right_tail(a, b, rng)
    } else if b <= -TAIL_THRESHOLD {
        -right_tail(-b, -a, rng)
    } else if a > 0.0 {
        // keep CDF values on the small side where they are accurate
        -inverse_cdf_interval(-b, -a, rng)
    } else {
        inverse_cdf_interval(a, b, rng)
    }
}

fn inverse_cdf_interval(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    let pa = normal_cdf(a);
    let pb = normal_cdf(b);
    let u = pa + (pb - pa) * rng.uniform_open();
    normal_quantile(u).max(a).min(b)
}

/// Robert (1995) sampler for `[a, b]` with `a ≥ TAIL_THRESHOLD`.
fn right_tail(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    let width = b - a;
    if width * a < 1.0 {
        // narrow interval: uniform proposal
        loop {
            let z = a + width * rng.uniform_open();
            if rng.uniform_open().ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / alpha;
        if z > b {
            continue;
        }
        let d = z - alpha;
        if rng.uniform_open().ln() <= -0.5 * d * d {
            return z;
        }
    }
}

/// Draw from N(mean, covariance).
pub fn sample_mvn(
    mean: &Array1<f64>,
    covariance: &Array2<f64>,
    rng: &mut RngStream,
) -> Result<Array1<f64>> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(IrtmError::Contract(format!(
            "mean has length {d} but covariance is {}x{}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let chol = Cholesky::from_array(covariance)?;
    let z: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
    let mut out = vec![0.0; d];
    chol.mul_lower(&z, &mut out);
    Ok(Array1::from_iter(out.into_iter().zip(mean.iter()).map(|(x, m)| x + m)))
}

/// Draw from IW(df, scale) using the Bartlett decomposition of the
/// corresponding Wishart draw.
pub fn sample_inverse_wishart(
    df: f64,
    scale: &Array2<f64>,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    let d = scale.nrows();
    if scale.ncols() != d || d == 0 {
        return Err(IrtmError::Contract(format!(
            "scale must be square and non-empty, got {}x{}",
            d,
            scale.ncols()
        )));
    }
    if !(df > (d as f64) - 1.0) || !df.is_finite() {
        return Err(IrtmError::Domain(format!(
            "inverse-Wishart degrees of freedom must exceed d - 1 = {}, got {df}",
            d - 1
        )));
    }
    let scale_chol = Cholesky::from_array(scale)?;
    Ok(inverse_wishart_from_factor(df, &scale_chol, rng))
}

pub(crate) fn inverse_wishart_from_factor(
    df: f64,
    scale_chol: &Cholesky,
    rng: &mut RngStream,
) -> Array2<f64> {
    let d = scale_chol.dim();
    // Bartlett factor A (lower triangular): A Aᵀ ~ W(df, I)
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        let chi = ChiSquared::new(df - i as f64).expect("df - i > 0");
        a[i * d + i] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[i * d + j] = standard_normal(rng);
        }
    }
    // B = A⁻¹ (lower triangular)
    let mut b = vec![0.0; d * d];
    for j in 0..d {
        b[j * d + j] = 1.0 / a[j * d + j];
        for i in (j + 1)..d {
            let mut s = 0.0;
            for k in j..i {
                s += a[i * d + k] * b[k * d + j];
            }
            b[i * d + j] = -s / a[i * d + i];
        }
    }
    // M = L_S Bᵀ; X = M Mᵀ
    let l = scale_chol.factor();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..=i.min(d - 1) {
                s += l[i * d + k] * b[j * d + k];
            }
            m[i * d + j] = s;
        }
    }
    let mut x = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..d).map(|k| m[i * d + k] * m[j * d + k]).sum();
            x[[i, j]] = s;
            x[[j, i]] = s;
        }
    }
    x
}

/// Draw from N(mean, covariance) truncated to the box `bounds`.
///
/// Point-mass coordinates are returned exactly. The remaining coordinates are
/// conditioned on them (using the full precision when the full covariance is
/// positive definite, otherwise the free block alone), started from a
/// sequential conditional draw and refined by `n_inner_sweeps` Gibbs sweeps.
pub fn sample_truncated_mvn(
    mean: &Array1<f64>,
    covariance: &Array2<f64>,
    bounds: &[TruncationBounds],
    n_inner_sweeps: usize,
    rng: &mut RngStream,
) -> Result<Array1<f64>> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d || bounds.len() != d {
        return Err(IrtmError::Contract(format!(
            "dimension mismatch: mean {d}, covariance {}x{}, bounds {}",
            covariance.nrows(),
            covariance.ncols(),
            bounds.len()
        )));
    }
    let free: Vec<usize> = (0..d).filter(|&j| !bounds[j].is_point()).collect();
    let fixed: Vec<usize> = (0..d).filter(|&j| bounds[j].is_point()).collect();
    let mut out = Array1::zeros(d);
    for &j in &fixed {
        out[j] = bounds[j].lower();
    }
    if free.is_empty() {
        return Ok(out);
    }
    let nf = free.len();

    // precision and mean of the free block given the pinned coordinates
    let (precision, cond_mean) = match Cholesky::from_array(covariance) {
        Ok(full) if !fixed.is_empty() => {
            let q = full.inverse();
            let mut qf = vec![0.0; nf * nf];
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    qf[a * nf + b] = q[i * d + j];
                }
            }
            // h = Q_UU m_U - Q_UF (x_F - m_F)
            let mut shift: Vec<f64> = free
                .iter()
                .map(|&i| {
                    fixed
                        .iter()
                        .map(|&f| q[i * d + f] * (out[f] - mean[f]))
                        .sum::<f64>()
                })
                .collect();
            let qchol = Cholesky::new(&qf, nf)?;
            qchol.solve(&mut shift);
            let m: Vec<f64> = free
                .iter()
                .zip(&shift)
                .map(|(&i, s)| mean[i] - s)
                .collect();
            (qf, m)
        }
        _ => {
            let mut cf = vec![0.0; nf * nf];
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    cf[a * nf + b] = covariance[[i, j]];
                }
            }
            let cchol = Cholesky::new(&cf, nf)?;
            (cchol.inverse(), free.iter().map(|&i| mean[i]).collect())
        }
    };
    let free_bounds: Vec<TruncationBounds> = free.iter().map(|&i| bounds[i]).collect();

    // sequential start: each coordinate from its conditional given those
    // already placed, the rest held at their clamped means
    let mut x: Vec<f64> = cond_mean
        .iter()
        .zip(&free_bounds)
        .map(|(m, b)| b.clamp(*m))
        .collect();
    tmvn_gibbs_sweeps(&cond_mean, &precision, &free_bounds, &mut x, 1, rng);
    tmvn_gibbs_sweeps(&cond_mean, &precision, &free_bounds, &mut x, n_inner_sweeps, rng);

    for (a, &i) in free.iter().enumerate() {
        out[i] = x[a];
    }
    Ok(out)
}

/// Coordinate-wise Gibbs sweeps targeting N(mean, precision⁻¹) restricted to
/// `bounds`, updating `x` in place. `x` must start inside the box.
pub(crate) fn tmvn_gibbs_sweeps(
    mean: &[f64],
    precision: &[f64],
    bounds: &[TruncationBounds],
    x: &mut [f64],
    sweeps: usize,
    rng: &mut RngStream,
) {
    let n = mean.len();
    for _ in 0..sweeps {
        for j in 0..n {
            let qjj = precision[j * n + j];
            let mut s = 0.0;
            for l in 0..n {
                if l != j {
                    s += precision[j * n + l] * (x[l] - mean[l]);
                }
            }
            let cm = mean[j] - s / qjj;
            x[j] = truncated_normal_unchecked(cm, 1.0 / qjj.sqrt(), bounds[j], rng);
        }
    }
}

/// Symmetric and admits a Cholesky factor.
pub fn covariance_is_pd(covariance: &Array2<f64>) -> bool {
    linalg::is_symmetric(covariance, 1e-12) && Cholesky::from_array(covariance).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn mean_of(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        let v = normal_cdf(1.96);
        assert!((v - 0.9750021048517795).abs() < 5e-12, "{v:.17}");
        let v = normal_cdf(-1.0);
        assert!((v - 0.15865525393145707).abs() < 1e-12, "{v:.17}");
        assert!((normal_cdf(-8.0) - 6.22096057427178e-16).abs() < 1e-25);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &x in &[-7.5, -3.0, -0.3, 0.0, 0.7, 2.5, 6.0] {
            assert!((normal_quantile(normal_cdf(x)) - x).abs() < 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(TruncationBounds::new(1.0, 0.0).is_err());
        assert!(TruncationBounds::new(f64::NAN, 0.0).is_err());
        assert!(TruncationBounds::new(0.0, 0.0).unwrap().is_point());
    }

    #[test]
    fn non_positive_sd_rejected() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_truncated_normal(0.0, 0.0, TruncationBounds::unbounded(), &mut rng).is_err());
    }

    #[test]
    fn point_mass_returns_value() {
        let mut rng = RngStream::new(1, 0);
        let x = sample_truncated_normal(3.0, 2.0, TruncationBounds::point(0.25), &mut rng).unwrap();
        assert_eq!(x, 0.25);
    }

    #[test]
    fn far_tail_draws_stay_in_bounds() {
        let mut rng = RngStream::new(11, 0);
        for &(lo, hi) in &[(8.0, f64::INFINITY), (30.0, 30.01), (6.0, 7.0), (f64::NEG_INFINITY, -12.0)] {
            let b = TruncationBounds::new(lo, hi).unwrap();
            for _ in 0..2000 {
                let x = sample_truncated_normal(0.0, 1.0, b, &mut rng).unwrap();
                assert!(b.contains(x));
            }
        }
    }

    #[test]
    fn narrow_tail_interval_mean() {
        // [6, 6.5]: density ∝ exp(-z²/2), mean by quadrature
        let (lo, hi) = (6.0_f64, 6.5_f64);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let z = lo + (i as f64 + 0.5) * h;
            let w = (-0.5 * (z * z - lo * lo)).exp();
            num += z * w;
            den += w;
        }
        let expected = num / den;
        let mut rng = RngStream::new(5, 0);
        let b = TruncationBounds::new(lo, hi).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_truncated_normal(0.0, 1.0, b, &mut rng).unwrap())
            .collect();
        assert!((mean_of(&xs) - expected).abs() < 0.005);
    }

    #[test]
    fn mvn_rejects_singular_covariance() {
        let mut rng = RngStream::new(1, 0);
        let cov = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(sample_mvn(&array![0.0, 0.0], &cov, &mut rng).is_err());
    }

    #[test]
    fn inverse_wishart_domain() {
        let mut rng = RngStream::new(1, 0);
        let scale = Array2::eye(3);
        assert!(matches!(
            sample_inverse_wishart(2.0, &scale, &mut rng),
            Err(IrtmError::Domain(_))
        ));
        let x = sample_inverse_wishart(3.0, &scale, &mut rng).unwrap();
        assert!(covariance_is_pd(&x));
    }

    #[test]
    fn tmvn_point_mass_is_exact() {
        let mut rng = RngStream::new(3, 0);
        let cov = array![[2.0, 0.7], [0.7, 1.0]];
        let bounds = [TruncationBounds::unbounded(), TruncationBounds::point(0.0)];
        for _ in 0..100 {
            let x = sample_truncated_mvn(&array![1.0, 5.0], &cov, &bounds, 5, &mut rng).unwrap();
            assert_eq!(x[1], 0.0);
        }
    }

    #[test]
    fn tmvn_conditions_on_point_mass() {
        // x1 | x2 = 0 ~ N(0 + 0.8 (0 - 1), 1 - 0.64) when mean = (0, 1)
        let mut rng = RngStream::new(4, 0);
        let cov = array![[1.0, 0.8], [0.8, 1.0]];
        let bounds = [TruncationBounds::unbounded(), TruncationBounds::point(0.0)];
        let xs: Vec<f64> = (0..40_000)
            .map(|_| sample_truncated_mvn(&array![0.0, 1.0], &cov, &bounds, 1, &mut rng).unwrap()[0])
            .collect();
        let m = mean_of(&xs);
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((m + 0.8).abs() < 0.015, "mean {m}");
        assert!((v - 0.36).abs() < 0.015, "var {v}");
    }
}
