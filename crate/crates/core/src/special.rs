//! Gaussian CDF helpers, the probit potential `h = -log Φ` and half-line
//! truncated normals.
//!
//! Truncated normals are drawn by inverting their CDF, so every draw is a
//! deterministic, increasing function of a single uniform variate. The
//! couplings rely on this: feeding the same uniform to two chains gives a
//! monotone (comonotone) coupling.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// ln √(2π)
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// √(2/π)
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Beyond this standardized boundary the inversion works on the excess over
/// the boundary, in log space.
const DEEP_TAIL: f64 = 8.0;
const CF_TERMS: usize = 24;

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 5.0 {
        return (x * x).exp() * erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // Laplace continued fraction, evaluated bottom-up.
    let mut f = x;
    for k in (1..=CF_TERMS).rev() {
        f = x + (k as f64 * 0.5) / f;
    }
    1.0 / (f * PI.sqrt())
}

pub fn std_normal_pdf(r: f64) -> f64 {
    (-0.5 * r * r - LN_SQRT_2PI).exp()
}

pub fn std_normal_logpdf(r: f64) -> f64 {
    -0.5 * r * r - LN_SQRT_2PI
}

pub fn std_normal_cdf(r: f64) -> f64 {
    0.5 * erfc(-r * FRAC_1_SQRT_2)
}

/// `log Φ(r)`, accurate deep into the lower tail.
pub fn std_normal_logcdf(r: f64) -> f64 {
    if r.is_nan() {
        return f64::NAN;
    }
    if r >= 0.0 {
        return (-0.5 * erfc(r * FRAC_1_SQRT_2)).ln_1p();
    }
    if r == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let t = -r * FRAC_1_SQRT_2;
    if t < 5.0 {
        (0.5 * erfc(t)).ln()
    } else {
        (0.5 * erfcx(t)).ln() - t * t
    }
}

/// Inverse Mills ratio `φ(r)/Φ(r)`.
pub fn mills_inverse(r: f64) -> f64 {
    if r >= 0.0 {
        std_normal_pdf(r) / std_normal_cdf(r)
    } else {
        SQRT_2_OVER_PI / erfcx(-r * FRAC_1_SQRT_2)
    }
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Probit potential `h(r) = -log Φ(r)`.
pub fn h(r: f64) -> f64 {
    -std_normal_logcdf(r)
}

/// `h'(r) = -φ(r)/Φ(r)`.
pub fn h_prime(r: f64) -> f64 {
    -mills_inverse(r)
}

/// `h''(r) = h'(r)² - r·h'(r)`; lies in (0, 1).
pub fn h_second(r: f64) -> f64 {
    let lam = mills_inverse(r);
    lam * (lam + r)
}

/// Truncation region of a latent variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum HalfLine {
    /// `(0, ∞)`, response 1.
    Positive,
    /// `(-∞, 0]`, response 0.
    NonPositive,
}

impl HalfLine {
    pub fn from_response(y: bool) -> Self {
        if y {
            HalfLine::Positive
        } else {
            HalfLine::NonPositive
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            HalfLine::Positive => x > 0.0,
            HalfLine::NonPositive => x <= 0.0,
        }
    }

    /// `sgn(2y - 1)`.
    pub fn sign(self) -> f64 {
        match self {
            HalfLine::Positive => 1.0,
            HalfLine::NonPositive => -1.0,
        }
    }
}

/// A normal distribution restricted to a half-line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncNormParams {
    pub location: f64,
    pub scale: f64,
    pub region: HalfLine,
}

impl TruncNormParams {
    pub fn new(location: f64, scale: f64, region: HalfLine) -> Self {
        debug_assert!(scale > 0.0, "scale must be positive");
        Self {
            location,
            scale,
            region,
        }
    }

    /// Log of the untruncated mass on the region.
    pub fn log_mass(&self) -> f64 {
        let m = self.location / self.scale;
        match self.region {
            HalfLine::Positive => std_normal_logcdf(m),
            HalfLine::NonPositive => std_normal_logcdf(-m),
        }
    }
}

/// Excess `W - a` of `W ~ N(0,1)` conditioned on `W > a`, as the inverse CDF
/// at `u` (`ubar = 1 - u`).
fn excess_above(a: f64, u: f64, ubar: f64) -> f64 {
    if a > DEEP_TAIL {
        let log_ubar = if u < 0.5 { (-u).ln_1p() } else { ubar.ln() };
        return deep_tail_excess(a, log_ubar);
    }
    let w = if a >= 0.0 {
        -std_normal_quantile(ubar * std_normal_cdf(-a))
    } else {
        let lower = std_normal_cdf(a);
        let upper = std_normal_cdf(-a);
        let p = lower + u * upper;
        if p < 0.5 {
            std_normal_quantile(p)
        } else {
            -std_normal_quantile(ubar * upper)
        }
    };
    (w - a).max(0.0)
}

/// Solves `log Φ̄(a + e) - log Φ̄(a) = log_ubar` for `e ≥ 0` by Newton's method.
///
/// The exponential-tail guess `-log_ubar / a` sits to the right of the root
/// and the residual is concave in `e`, so the iterates decrease monotonically.
fn deep_tail_excess(a: f64, log_ubar: f64) -> f64 {
    if log_ubar >= 0.0 {
        return 0.0;
    }
    let t0 = a * FRAC_1_SQRT_2;
    let ln_cx0 = erfcx(t0).ln();
    let mut e = -log_ubar / a;
    for _ in 0..100 {
        let x = a + e;
        let cx = erfcx(x * FRAC_1_SQRT_2);
        let f = cx.ln() - ln_cx0 - 0.5 * e * (2.0 * a + e) - log_ubar;
        let slope = -SQRT_2_OVER_PI / cx;
        let step = f / slope;
        let next = (e - step).max(0.0);
        let done = (next - e).abs() <= 1e-15 * next.max(1e-300);
        e = next;
        if done {
            break;
        }
    }
    e
}

/// Inverse-CDF draw from a half-line truncated normal.
///
/// Increasing in `u`; the result always lies inside the region.
pub fn truncnorm_sample(params: &TruncNormParams, u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0, "u must be in (0, 1)");
    let s = params.scale;
    let a = -params.location / s;
    let ubar = 1.0 - u;
    match params.region {
        HalfLine::Positive => {
            let z = s * excess_above(a, u, ubar);
            if z > 0.0 {
                z
            } else {
                f64::MIN_POSITIVE
            }
        }
        HalfLine::NonPositive => -s * excess_above(-a, ubar, u),
    }
}

/// Log density of a half-line truncated normal; `-∞` outside the region.
pub fn truncnorm_logpdf(params: &TruncNormParams, x: f64) -> f64 {
    if !params.region.contains(x) {
        return f64::NEG_INFINITY;
    }
    let r = (x - params.location) / params.scale;
    std_normal_logpdf(r) - params.scale.ln() - params.log_mass()
}

/// Mean of a half-line truncated normal (Mills-ratio closed form).
pub fn truncnorm_mean(params: &TruncNormParams) -> f64 {
    let m = params.location / params.scale;
    match params.region {
        HalfLine::Positive => params.location + params.scale * mills_inverse(m),
        HalfLine::NonPositive => params.location - params.scale * mills_inverse(-m),
    }
}

/// Variance of a half-line truncated normal.
pub fn truncnorm_variance(params: &TruncNormParams) -> f64 {
    let m = params.location / params.scale;
    let r = match params.region {
        HalfLine::Positive => m,
        HalfLine::NonPositive => -m,
    };
    params.scale * params.scale * (1.0 - h_second(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logcdf_reference_values() {
        assert_relative_eq!(std_normal_logcdf(0.0), -std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(std_normal_logcdf(f64::INFINITY), 0.0);
        assert!(std_normal_logcdf(f64::NAN).is_nan());
        // mpmath, 40 digits
        let cases = [
            (-1.0, -1.841_021_645_009_263_5),
            (-5.0, -15.064_998_393_988_726),
            (-10.0, -53.231_285_150_512_47),
            (-20.0, -203.917_155_371_097_26),
            (-30.0, -454.321_243_956_343_2),
            (-37.0, -689.030_585_576_890_6),
            (-40.0, -804.608_442_013_753_8),
            (-100.0, -5_005.524_208_694_205),
            (3.0, -0.001_350_809_964_748_193_8),
            (8.0, -6.220_960_574_271_786e-16),
        ];
        for (r, want) in cases {
            assert_relative_eq!(std_normal_logcdf(r), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn erfcx_is_continuous_at_branch() {
        let below = erfcx(5.0 - 1e-12);
        let above = erfcx(5.0);
        assert_relative_eq!(below, above, max_relative = 1e-11);
    }

    #[test]
    fn potential_at_zero() {
        assert_relative_eq!(h(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_relative_eq!(h_prime(0.0), -(2.0 / PI).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(h_second(0.0), 2.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let step = 1e-5;
        let mut r = -8.0;
        while r <= 8.0 {
            let fd1 = (h(r + step) - h(r - step)) / (2.0 * step);
            let fd2 = (h_prime(r + step) - h_prime(r - step)) / (2.0 * step);
            assert!((fd1 - h_prime(r)).abs() < 1e-6, "h' at {r}");
            assert!((fd2 - h_second(r)).abs() < 1e-6, "h'' at {r}");
            r += 0.05;
        }
    }

    #[test]
    fn curvature_in_open_unit_interval() {
        let mut r = -12.0;
        while r <= 12.0 {
            let c = h_second(r);
            assert!(c > 0.0 && c < 1.0, "h''({r}) = {c}");
            r += 0.001;
        }
    }

    #[test]
    fn half_normal_median() {
        let p = TruncNormParams::new(0.0, 1.0, HalfLine::Positive);
        assert_relative_eq!(truncnorm_sample(&p, 0.5), 0.674_489_750_196_081_7, max_relative = 1e-12);
    }

    #[test]
    fn samples_stay_in_region_in_the_deep_tail() {
        for &loc in &[-1e3, -200.0, -40.0, -9.0, -8.0, -7.9, 0.0, 5.0, 60.0] {
            for &u in &[1e-300, 1e-17, 1e-9, 0.3, 0.5, 0.9, 1.0 - 1e-16] {
                let pos = TruncNormParams::new(loc, 1.3, HalfLine::Positive);
                let x = truncnorm_sample(&pos, u);
                assert!(x.is_finite() && x > 0.0, "loc {loc} u {u} -> {x}");
                let neg = TruncNormParams::new(-loc, 1.3, HalfLine::NonPositive);
                let y = truncnorm_sample(&neg, u);
                assert!(y.is_finite() && y <= 0.0, "loc {} u {u} -> {y}", -loc);
            }
        }
    }

    #[test]
    fn deep_tail_inverts_the_cdf() {
        // P(W > a + e | W > a) should equal 1 - u.
        for &a in &[8.5, 12.0, 40.0, 300.0] {
            for &u in &[0.01f64, 0.3, 0.77, 0.999] {
                let e = deep_tail_excess(a, (-u).ln_1p());
                let log_ratio = std_normal_logcdf(-(a + e)) - std_normal_logcdf(-a);
                // the check itself loses digits to cancellation near -a²/2
                assert_relative_eq!(log_ratio, (-u).ln_1p(), max_relative = 1e-9, epsilon = 4e-16 * a * a);
            }
        }
    }

    #[test]
    fn sampler_is_increasing_in_u() {
        for &loc in &[-30.0, -8.2, -2.0, 0.0, 0.3, 4.0] {
            for region in [HalfLine::Positive, HalfLine::NonPositive] {
                let p = TruncNormParams::new(loc, 0.7, region);
                let mut prev = f64::NEG_INFINITY;
                for k in 1..2000 {
                    let u = k as f64 / 2000.0;
                    let x = truncnorm_sample(&p, u);
                    assert!(x > prev, "loc {loc} {region:?} u {u}");
                    prev = x;
                }
            }
        }
    }

    #[test]
    fn logpdf_closed_form() {
        let p = TruncNormParams::new(0.0, 1.0, HalfLine::Positive);
        assert_eq!(truncnorm_logpdf(&p, -0.1), f64::NEG_INFINITY);
        assert_eq!(truncnorm_logpdf(&p, 0.0), f64::NEG_INFINITY);
        assert_relative_eq!(truncnorm_logpdf(&p, 0.5), -0.350_791_352_644_727_4, max_relative = 1e-13);
        let q = TruncNormParams::new(0.0, 1.0, HalfLine::NonPositive);
        assert!(truncnorm_logpdf(&q, 0.0).is_finite());
    }

    #[test]
    fn far_positive_location_is_untruncated() {
        let p = TruncNormParams::new(50.0, 1.0, HalfLine::Positive);
        for &u in &[0.1, 0.5, 0.9] {
            assert_relative_eq!(truncnorm_sample(&p, u), 50.0 + std_normal_quantile(u), max_relative = 1e-12);
        }
    }
}
