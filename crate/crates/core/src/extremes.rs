//! Maxima of `ℓ` independent absolute standard normals.
//!
//! `M_ℓ = max_{i≤ℓ} |X_i|` has distribution `Ψ_ℓ(x) = (2Φ(x) − 1)^ℓ`. The
//! centering `a_ℓ` solves `1/ℓ = 2φ(a)/a` and `b_ℓ = 1/a_ℓ`; under that
//! normalization `(M_ℓ − a_ℓ)/b_ℓ` approaches the Gumbel law. Expectations
//! here come from deterministic quadrature of survival functions, with an
//! explicit bound on the truncated tail.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI};

use crate::error::{domain, ensure_finite, Error, Result};
use crate::gaussian::sf_unchecked;
use crate::paths::{guarded_exp, EXP_LIMIT};
use crate::quadrature::integrate_pieces;

/// Euler-Mascheroni constant, the mean of the standard Gumbel law.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const BISECTION_STEPS: u32 = 60;
const QUAD_TOL: f64 = 1e-12;
/// Quadrature stops at `a_ℓ + TRUNCATION_WIDTHS · b_ℓ`.
const TRUNCATION_WIDTHS: f64 = 40.0;

/// Centering and scaling constants for level `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelNormalization {
    ell: u64,
    a: f64,
    b: f64,
}

impl GumbelNormalization {
    pub fn ell(&self) -> u64 {
        self.ell
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `|1/ℓ − 2φ(a)/a|`.
    pub fn residual(&self) -> f64 {
        (1.0 / self.ell as f64 - centering_rhs(self.a)).abs()
    }
}

/// `√(2/π)·e^{−y²/2}/y`, strictly decreasing on `(0, ∞)`.
fn centering_rhs(y: f64) -> f64 {
    FRAC_2_PI.sqrt() * (-0.5 * y * y).exp() / y
}

/// Solves `1/ℓ = √(2/π) e^{−a²/2} / a` by bisection.
pub fn solve_a(ell: u64) -> Result<GumbelNormalization> {
    if ell < 1 {
        return Err(domain("ell", "must be >= 1"));
    }
    let target = 1.0 / ell as f64;
    let mut lo = 1e-8;
    let mut hi = (2.0 * (ell as f64).ln()).sqrt().max(2.0) + 1.0;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if centering_rhs(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    Ok(GumbelNormalization { ell, a, b: 1.0 / a })
}

/// `ln(2Φ(x) − 1)` without cancellation at either end.
fn ln_two_sided(x: f64) -> f64 {
    let z = x * FRAC_1_SQRT_2;
    let e = libm::erf(z);
    if e < 0.5 {
        e.ln()
    } else {
        (-libm::erfc(z)).ln_1p()
    }
}

fn check_ell(ell: u64) -> Result<()> {
    if ell < 1 {
        Err(domain("ell", "must be >= 1"))
    } else {
        Ok(())
    }
}

/// `Ψ_ℓ(x) = (2Φ(x) − 1)^ℓ` for `x ≥ 0` (`+∞` allowed).
pub fn max_abs_cdf(ell: u64, x: f64) -> Result<f64> {
    check_ell(ell)?;
    if x.is_nan() {
        return Err(Error::NonFinite {
            what: "x",
            value: x,
        });
    }
    if x < 0.0 {
        return Err(domain("x", format!("must be >= 0, got {x}")));
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok((ell as f64 * ln_two_sided(x)).exp())
}

/// `1 − Ψ_ℓ(x)`.
fn max_abs_sf(ell: u64, x: f64) -> f64 {
    -(ell as f64 * ln_two_sided(x)).exp_m1()
}

/// Standard Gumbel distribution function `exp(−e^{−y})`.
pub fn gumbel_cdf(y: f64) -> f64 {
    (-(-y).exp()).exp()
}

/// An expectation from quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    /// Accumulated Gauss-Kronrod error estimate.
    pub quadrature_error: f64,
    /// Upper bound on the contribution beyond the truncation point.
    pub tail_bound: f64,
    pub truncation_point: f64,
}

/// Breakpoints clustering around `a_ℓ`, where the survival function drops.
fn breakpoints(norm: &GumbelNormalization) -> (Vec<f64>, f64) {
    let (a, b) = (norm.a, norm.b);
    let upper = a + TRUNCATION_WIDTHS * b;
    let mut pts = vec![0.0];
    for k in [-8.0, -4.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0] {
        let x = a + k * b;
        if x > 0.0 {
            pts.push(x);
        }
    }
    pts.push(upper);
    (pts, upper)
}

/// `∫₀^{x*} w(x)(1 − Ψ_ℓ(x)) dx` with `w(x) = e^{c(x−shift)}`, plus a bound for `[x*, ∞)`.
fn weighted_survival_integral(norm: &GumbelNormalization, c: f64, shift: f64) -> Expectation {
    let ell = norm.ell;
    let (pts, upper) = breakpoints(norm);
    let r = integrate_pieces(
        |x| (c * (x - shift)).exp() * max_abs_sf(ell, x),
        &pts,
        QUAD_TOL,
    );
    // 1 − Ψ ≤ 2ℓ(1 − Φ) ≤ 2ℓφ/x, and ∫_{x*}^∞ e^{cx}φ(x)dx = e^{c²/2}(1 − Φ(x* − c))
    let tail = 2.0 * ell as f64 / upper * (0.5 * c * c - c * shift).exp() * sf_unchecked(upper - c);
    Expectation {
        value: r.value,
        quadrature_error: r.abs_error,
        tail_bound: tail,
        truncation_point: upper,
    }
}

/// `E[M_ℓ] = ∫₀^∞ (1 − Ψ_ℓ(x)) dx`.
pub fn expected_max_abs(ell: u64) -> Result<f64> {
    Ok(expected_max_abs_detailed(ell)?.value)
}

pub fn expected_max_abs_detailed(ell: u64) -> Result<Expectation> {
    let norm = solve_a(ell)?;
    Ok(weighted_survival_integral(&norm, 0.0, 0.0))
}

/// `E[Y_ℓ] = (E[M_ℓ] − a_ℓ)/b_ℓ`, for `ℓ ≥ 3`.
pub fn centered_mean(ell: u64) -> Result<f64> {
    if ell < 3 {
        return Err(domain(
            "ell",
            format!("centered mean needs ell >= 3, got {ell}"),
        ));
    }
    let norm = solve_a(ell)?;
    let m = weighted_survival_integral(&norm, 0.0, 0.0).value;
    Ok(norm.a * (m - norm.a))
}

/// `W = (2√ℓ/(σb))·(exp(σb·y/(2√ℓ)) − 1)`.
pub fn w_transform(norm: &GumbelNormalization, sigma: f64, y: f64) -> Result<f64> {
    ensure_finite("sigma", sigma)?;
    ensure_finite("y", y)?;
    if sigma <= 0.0 {
        return Err(domain("sigma", format!("must be > 0, got {sigma}")));
    }
    let c = sigma * norm.b / (2.0 * (norm.ell as f64).sqrt());
    let arg = c * y;
    if arg.abs() > EXP_LIMIT {
        return Err(Error::Overflow {
            exponent: arg,
            limit: EXP_LIMIT,
        });
    }
    Ok(arg.exp_m1() / c)
}

/// `𝓘_ℓ = E[exp(σM_ℓ/(2√ℓ))]`.
pub fn exp_moment(ell: u64, sigma: f64) -> Result<f64> {
    Ok(exp_moment_detailed(ell, sigma)?.value)
}

/// `𝓘_ℓ = 1 + c∫₀^∞ e^{cx}(1 − Ψ_ℓ(x)) dx` with `c = σ/(2√ℓ)`.
pub fn exp_moment_detailed(ell: u64, sigma: f64) -> Result<Expectation> {
    ensure_finite("sigma", sigma)?;
    if sigma < 0.0 {
        return Err(domain("sigma", format!("must be >= 0, got {sigma}")));
    }
    let norm = solve_a(ell)?;
    let c = sigma / (2.0 * (ell as f64).sqrt());
    guarded_exp(c * (norm.a + TRUNCATION_WIDTHS * norm.b))?;
    if c == 0.0 {
        return Ok(Expectation {
            value: 1.0,
            quadrature_error: 0.0,
            tail_bound: 0.0,
            truncation_point: norm.a + TRUNCATION_WIDTHS * norm.b,
        });
    }
    let e = weighted_survival_integral(&norm, c, 0.0);
    Ok(Expectation {
        value: 1.0 + c * e.value,
        quadrature_error: c * e.quadrature_error,
        tail_bound: c * e.tail_bound,
        truncation_point: e.truncation_point,
    })
}

/// `E[W_ℓ]`, evaluated as `E[expm1(σ(M_ℓ − a_ℓ)/(2√ℓ))] / (σb_ℓ/(2√ℓ))`.
pub fn w_mean(ell: u64, sigma: f64) -> Result<f64> {
    ensure_finite("sigma", sigma)?;
    if sigma <= 0.0 {
        return Err(domain("sigma", format!("must be > 0, got {sigma}")));
    }
    let norm = solve_a(ell)?;
    let c = sigma / (2.0 * (ell as f64).sqrt());
    // E[h(M)] = h(0) + ∫ h'(x)(1 − Ψ(x)) dx with h(x) = expm1(c(x − a))
    let e = weighted_survival_integral(&norm, c, norm.a);
    let mean_h = (-c * norm.a).exp_m1() + c * e.value;
    Ok(mean_h / (c * norm.b))
}

/// Largest `E[Y_ℓ]` over `ells`: an empirical stand-in for the bound on the centered means.
pub fn centered_mean_supremum(ells: &[u64]) -> Result<f64> {
    ells.iter()
        .map(|&l| centered_mean(l))
        .try_fold(f64::NEG_INFINITY, |acc, v| Ok(acc.max(v?)))
}

/// Largest `E[W_ℓ]` over `ells` for fixed `σ`.
pub fn w_mean_supremum(ells: &[u64], sigma: f64) -> Result<f64> {
    ells.iter()
        .map(|&l| w_mean(l, sigma))
        .try_fold(f64::NEG_INFINITY, |acc, v| Ok(acc.max(v?)))
}
