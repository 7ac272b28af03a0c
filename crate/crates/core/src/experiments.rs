//! Closed-form and Monte Carlo truncation-error experiments, and the option
//! pricing application.
//!
//! Every Monte Carlo loop gives sample `k` the stream `stream.substream(k)`
//! and draws one coefficient set from it. Samples are processed in fixed
//! blocks whose summaries are merged in block order, so results do not depend
//! on how many rayon workers run the blocks. Coupled variants evaluate several
//! `(N, M)` pairs on one draw at the largest `M`; since lower levels are a
//! prefix of the draw, each row equals what the single-pair call returns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure_finite, Error, Result};
use crate::gaussian::{cdf_unchecked, RandomStream};
use crate::paths::{
    fill_grid, guarded_exp, l2_tail, sup_tail, GbmParams, GbmScratch, EXP_LIMIT, MAX_STORED_LEVEL,
};
use crate::stats::RunningStats;

/// Samples per work unit.
const BLOCK: u64 = 64;

/// Below this `|slope·h|` the cell integral of `e^{c+mt}` uses a Taylor rule.
const TAYLOR_SLOPE: f64 = 1e-8;

/// One line of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u32,
    pub d: u64,
    pub estimate: f64,
    pub std_error: f64,
    /// Model value for this `N`.
    pub reference: f64,
    pub samples: u64,
    /// Truth-proxy level `M`.
    pub reference_level: u32,
}

impl ConvergenceRow {
    fn new(n: u32, m: u32, stats: &RunningStats, reference: f64) -> Self {
        ConvergenceRow {
            n,
            d: 1u64 << n,
            estimate: stats.mean(),
            std_error: stats.std_error(),
            reference,
            samples: stats.count(),
            reference_level: m,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.estimate / self.reference
    }
}

/// `E ∫(B − B_N)² = 2^{−N}/6`.
pub fn exact_l2_error(n: u32) -> f64 {
    2f64.powi(-(n as i32)) / 6.0
}

/// `(1/π²) Σ_{j>d} 1/j²`: the L₂ error of the `d`-term Karhunen-Loève truncation.
pub fn kl_l2_tail(d: u64) -> Result<f64> {
    if d < 1 {
        return Err(domain("d", "must be >= 1"));
    }
    const TERMS: u64 = 1_000_000;
    let last = d + TERMS;
    let l = last as f64;
    // Euler-Maclaurin remainder Σ_{j>L} 1/j²
    let mut sum = 1.0 / l - 0.5 / (l * l) + 1.0 / (6.0 * l * l * l);
    for j in (d + 1..=last).rev() {
        let x = j as f64;
        sum += 1.0 / (x * x);
    }
    Ok(sum / (std::f64::consts::PI * std::f64::consts::PI))
}

/// `√(ln d / (2d))` for `d = 2^N`.
pub fn bm_sup_reference(n: u32) -> f64 {
    let d = 2f64.powi(n as i32);
    (d.ln() / (2.0 * d)).sqrt()
}

/// `√N · 2^{−N/2}`.
pub fn gbm_sup_reference(n: u32) -> f64 {
    (n as f64).sqrt() * 2f64.powf(-(n as f64) / 2.0)
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < 2 {
        Err(domain("samples", format!("need at least 2, got {samples}")))
    } else {
        Ok(())
    }
}

fn check_pairs(pairs: &[(u32, u32)]) -> Result<u32> {
    if pairs.is_empty() {
        return Err(domain("levels", "no (N, M) pairs given"));
    }
    let mut top = 0;
    for &(n, m) in pairs {
        if n >= m {
            return Err(Error::InvalidLevels { coarse: n, fine: m });
        }
        if m > MAX_STORED_LEVEL {
            return Err(Error::LevelCap {
                level: m,
                cap: MAX_STORED_LEVEL,
            });
        }
        top = top.max(m);
    }
    Ok(top)
}

fn tag(level: u32, sample: u64, e: Error) -> Error {
    match e {
        e @ Error::Sample { .. } => e,
        e => Error::Sample {
            level,
            sample,
            source: Box::new(e),
        },
    }
}

/// Runs `eval(scratch, sample_index, out)` for every sample and returns one
/// summary per output slot. Errors carry `level` and the sample index; the one
/// with the lowest sample index is reported.
fn run_samples<S, I, F>(
    samples: u64,
    width: usize,
    level: u32,
    init: I,
    eval: F,
) -> Result<Vec<RunningStats>>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, u64, &mut [f64]) -> Result<()> + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    let partial: Vec<Result<Vec<RunningStats>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut scratch = init();
            let mut out = vec![0.0; width];
            let mut stats = vec![RunningStats::new(); width];
            for k in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                eval(&mut scratch, k, &mut out).map_err(|e| tag(level, k, e))?;
                for (s, &v) in stats.iter_mut().zip(&out) {
                    if !v.is_finite() {
                        return Err(tag(
                            level,
                            k,
                            Error::NonFinite {
                                what: "sample",
                                value: v,
                            },
                        ));
                    }
                    s.push(v);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut total = vec![RunningStats::new(); width];
    for block in partial {
        for (t, s) in total.iter_mut().zip(block?) {
            *t = t.merge(&s);
        }
    }
    Ok(total)
}

/// Coefficients of sample `k` at `level`, into `buf`.
fn draw(buf: &mut Vec<f64>, stream: RandomStream, k: u64, level: u32) {
    buf.resize(1usize << level, 0.0);
    stream.substream(k).fill_normals(buf);
}

/// Monte Carlo `E ∫(B_M − B_N)²`; targets `(2^{−N} − 2^{−M})/6`.
pub fn mc_l2_error(stream: RandomStream, n: u32, m: u32, samples: u64) -> Result<RunningStats> {
    Ok(mc_l2_error_coupled(stream, &[(n, m)], samples)?.remove(0))
}

/// [`mc_l2_error`] for several `(N, M)` pairs on common draws.
pub fn mc_l2_error_coupled(
    stream: RandomStream,
    pairs: &[(u32, u32)],
    samples: u64,
) -> Result<Vec<RunningStats>> {
    check_samples(samples)?;
    let top = check_pairs(pairs)?;
    run_samples(samples, pairs.len(), pairs[0].0, Vec::new, |buf, k, out| {
        draw(buf, stream, k, top);
        for (o, &(n, m)) in out.iter_mut().zip(pairs) {
            *o = l2_tail(&buf[..1usize << m], n, m);
        }
        Ok(())
    })
}

/// Monte Carlo `E‖B_M − B_N‖_∞` with reference `√(ln d/(2d))`.
pub fn mc_sup_error_bm(
    stream: RandomStream,
    n: u32,
    m: u32,
    samples: u64,
) -> Result<ConvergenceRow> {
    Ok(mc_sup_error_bm_coupled(stream, &[(n, m)], samples)?.remove(0))
}

/// [`mc_sup_error_bm`] for several `(N, M)` pairs on common draws.
pub fn mc_sup_error_bm_coupled(
    stream: RandomStream,
    pairs: &[(u32, u32)],
    samples: u64,
) -> Result<Vec<ConvergenceRow>> {
    check_samples(samples)?;
    let top = check_pairs(pairs)?;
    let stats = run_samples(samples, pairs.len(), pairs[0].0, Vec::new, |buf, k, out| {
        draw(buf, stream, k, top);
        for (o, &(n, m)) in out.iter_mut().zip(pairs) {
            *o = sup_tail(&buf[..1usize << m], n, m);
        }
        Ok(())
    })?;
    Ok(pairs
        .iter()
        .zip(&stats)
        .map(|(&(n, m), s)| ConvergenceRow::new(n, m, s, bm_sup_reference(n)))
        .collect())
}

/// Monte Carlo `E‖S_M − S_N‖_∞` (oversampled grid max) with reference `√N·2^{−N/2}`.
pub fn mc_sup_error_gbm(
    params: &GbmParams,
    stream: RandomStream,
    n: u32,
    m: u32,
    oversample: u32,
    samples: u64,
) -> Result<ConvergenceRow> {
    Ok(mc_sup_error_gbm_coupled(params, stream, &[(n, m)], oversample, samples)?.remove(0))
}

/// [`mc_sup_error_gbm`] for several `(N, M)` pairs on common draws.
pub fn mc_sup_error_gbm_coupled(
    params: &GbmParams,
    stream: RandomStream,
    pairs: &[(u32, u32)],
    oversample: u32,
    samples: u64,
) -> Result<Vec<ConvergenceRow>> {
    check_samples(samples)?;
    let top = check_pairs(pairs)?;
    if oversample == 0 {
        return Err(domain("oversample", "must be >= 1"));
    }
    let init = || (Vec::new(), GbmScratch::default());
    let stats = run_samples(
        samples,
        pairs.len(),
        pairs[0].0,
        init,
        |(buf, scratch), k, out| {
            draw(buf, stream, k, top);
            for (o, &(n, m)) in out.iter_mut().zip(pairs) {
                *o = scratch
                    .sup(params, &buf[..1usize << m], n, m, oversample)
                    .map_err(|e| tag(n, k, e))?;
            }
            Ok(())
        },
    )?;
    Ok(pairs
        .iter()
        .zip(&stats)
        .map(|(&(n, m), s)| ConvergenceRow::new(n, m, s, gbm_sup_reference(n)))
        .collect())
}

/// Observed and model ratio between consecutive rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioDiagnostic {
    /// `N` of the later row.
    pub n: u32,
    pub observed: f64,
    pub model: f64,
}

/// `estimate_{i+1}/estimate_i` against `reference_{i+1}/reference_i`.
///
/// For the GBM reference the model ratio is `√((N+1)/N)/√2`.
pub fn successive_ratios(rows: &[ConvergenceRow]) -> Vec<RatioDiagnostic> {
    rows.windows(2)
        .map(|w| RatioDiagnostic {
            n: w[1].n,
            observed: w[1].estimate / w[0].estimate,
            model: w[1].reference / w[0].reference,
        })
        .collect()
}

/// Least-squares fit `estimate ≈ C·reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub constant: f64,
    /// `max |estimate/(C·reference) − 1|`.
    pub max_residual: f64,
}

pub fn fit_rate(rows: &[ConvergenceRow]) -> Result<RateFit> {
    if rows.len() < 3 {
        return Err(domain(
            "rows",
            format!("need at least 3 rows, got {}", rows.len()),
        ));
    }
    let (mut er, mut rr) = (0.0, 0.0);
    for r in rows {
        ensure_finite("estimate", r.estimate)?;
        ensure_finite("reference", r.reference)?;
        er += r.estimate * r.reference;
        rr += r.reference * r.reference;
    }
    if rr == 0.0 {
        return Err(domain("rows", "all references are zero"));
    }
    let c = er / rr;
    let max_residual = rows
        .iter()
        .filter(|r| r.reference != 0.0)
        .map(|r| (r.estimate / (c * r.reference) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        constant: c,
        max_residual,
    })
}

fn check_strike(strike: f64) -> Result<()> {
    ensure_finite("strike", strike)?;
    if strike < 0.0 {
        Err(domain("strike", format!("must be >= 0, got {strike}")))
    } else {
        Ok(())
    }
}

/// `∫₀¹ S_N(t) dt` from the level-`N` grid of `B_N`, exactly: the exponent
/// `μt + σB_N(t)` is affine on every cell.
fn average_on_grid(params: &GbmParams, grid: &[f64]) -> Result<f64> {
    let cells = grid.len() - 1;
    let h = 1.0 / cells as f64;
    let mu = params.drift();
    let sigma = params.sigma();
    let mut left = sigma * grid[0];
    let mut total = 0.0;
    for (j, &b) in grid.iter().enumerate().skip(1) {
        let right = mu * (j as f64 * h) + sigma * b;
        if right.abs() > EXP_LIMIT {
            return Err(Error::Overflow {
                exponent: right,
                limit: EXP_LIMIT,
            });
        }
        let rise = right - left;
        let e = guarded_exp(left)?;
        total += if rise.abs() < TAYLOR_SLOPE * h {
            h * e * (1.0 + rise / 2.0 + rise * rise / 6.0)
        } else {
            // ∫ e^{c+mt} over the cell = e^c (e^{mh} − 1)/m
            h * e * rise.exp_m1() / rise
        };
        left = right;
    }
    Ok(params.s0() * total)
}

/// `∫₀¹ S_N(t) dt` for the path of `coeffs` at `N = coeffs.level()`.
pub fn time_average(params: &GbmParams, coeffs: &crate::paths::CoefficientSet) -> Result<f64> {
    let n = coeffs.level();
    let mut grid = vec![0.0; (1usize << n) + 1];
    fill_grid(coeffs.as_slice(), n, n, &mut grid);
    average_on_grid(params, &grid)
}

/// `e^{−r} max(A − K, 0)` with `T = 1`.
fn discounted_call(params: &GbmParams, underlying: f64, strike: f64) -> f64 {
    (-params.r()).exp() * (underlying - strike).max(0.0)
}

/// Monte Carlo price of the continuously averaged Asian call on `S_N`.
pub fn price_asian(
    params: &GbmParams,
    strike: f64,
    stream: RandomStream,
    n: u32,
    samples: u64,
) -> Result<RunningStats> {
    check_samples(samples)?;
    check_strike(strike)?;
    if n > MAX_STORED_LEVEL {
        return Err(Error::LevelCap {
            level: n,
            cap: MAX_STORED_LEVEL,
        });
    }
    let init = || (Vec::new(), vec![0.0; (1usize << n) + 1]);
    let stats = run_samples(samples, 1, n, init, |(buf, grid), k, out| {
        draw(buf, stream, k, n);
        fill_grid(buf, n, n, grid);
        out[0] = discounted_call(params, average_on_grid(params, grid)?, strike);
        Ok(())
    })?;
    Ok(stats[0])
}

/// Coupled comparison of `P_N` with the reference-level price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsianDifference {
    pub n: u32,
    pub reference_level: u32,
    /// Statistics of `P_N`.
    pub price: RunningStats,
    /// Statistics of `P_N − P_ref` per path.
    pub difference: RunningStats,
    /// Statistics of `|P_N − P_ref|` per path.
    pub abs_difference: RunningStats,
}

/// `P_N − P_{reference_level}` on common draws for each `N` in `levels`.
///
/// The row for `N` uses the same per-sample payoff as `price_asian` at `N`.
pub fn asian_differences(
    params: &GbmParams,
    strike: f64,
    stream: RandomStream,
    levels: &[u32],
    reference_level: u32,
    samples: u64,
) -> Result<Vec<AsianDifference>> {
    check_samples(samples)?;
    check_strike(strike)?;
    let pairs: Vec<(u32, u32)> = levels.iter().map(|&n| (n, reference_level)).collect();
    let top = check_pairs(&pairs)?;
    let width = 1 + 3 * levels.len();
    let init = || (Vec::new(), Vec::new());
    let stats = run_samples(
        samples,
        width,
        reference_level,
        init,
        |(buf, grid), k, out| {
            draw(buf, stream, k, top);
            grid.resize((1usize << top) + 1, 0.0);
            fill_grid(buf, top, top, grid);
            let reference = discounted_call(params, average_on_grid(params, grid)?, strike);
            out[0] = reference;
            for (slot, &n) in out[1..].chunks_mut(3).zip(levels) {
                let g = &mut grid[..(1usize << n) + 1];
                fill_grid(&buf[..1usize << n], n, n, g);
                let p = discounted_call(
                    params,
                    average_on_grid(params, g).map_err(|e| tag(n, k, e))?,
                    strike,
                );
                slot[0] = p;
                slot[1] = p - reference;
                slot[2] = (p - reference).abs();
            }
            Ok(())
        },
    )?;
    Ok(levels
        .iter()
        .zip(stats[1..].chunks(3))
        .map(|(&n, s)| AsianDifference {
            n,
            reference_level,
            price: s[0],
            difference: s[1],
            abs_difference: s[2],
        })
        .collect())
}

/// Monte Carlo European call on `S_N(1)`, built from a level-`level` draw.
///
/// `B_N(1) = x₀` at every level, so the result does not depend on `level`.
pub fn european_mc(
    params: &GbmParams,
    strike: f64,
    stream: RandomStream,
    level: u32,
    samples: u64,
) -> Result<RunningStats> {
    check_samples(samples)?;
    check_strike(strike)?;
    if level > MAX_STORED_LEVEL {
        return Err(Error::LevelCap {
            level,
            cap: MAX_STORED_LEVEL,
        });
    }
    let init = || (Vec::new(), vec![0.0; (1usize << level) + 1]);
    let stats = run_samples(samples, 1, level, init, |(buf, grid), k, out| {
        draw(buf, stream, k, level);
        fill_grid(buf, level, level, grid);
        let exponent = params.drift() + params.sigma() * grid[grid.len() - 1];
        out[0] = discounted_call(params, params.s0() * guarded_exp(exponent)?, strike);
        Ok(())
    })?;
    Ok(stats[0])
}

/// [`european_mc`] at level 0: one coefficient per sample.
pub fn european_sanity(
    params: &GbmParams,
    strike: f64,
    stream: RandomStream,
    samples: u64,
) -> Result<RunningStats> {
    european_mc(params, strike, stream, 0, samples)
}

/// Black-Scholes call price with unit maturity.
pub fn black_scholes_call(params: &GbmParams, strike: f64) -> Result<f64> {
    check_strike(strike)?;
    let (s0, r, sigma) = (params.s0(), params.r(), params.sigma());
    if strike == 0.0 {
        return Ok(s0);
    }
    let d1 = ((s0 / strike).ln() + r + 0.5 * sigma * sigma) / sigma;
    let d2 = d1 - sigma;
    Ok(s0 * cdf_unchecked(d1) - strike * (-r).exp() * cdf_unchecked(d2))
}

/// `e^{−r}·E∫₀¹ S(t) dt = e^{−r}s0(e^r − 1)/r`, the zero-strike Asian price.
pub fn asian_zero_strike(params: &GbmParams) -> f64 {
    let (s0, r) = (params.s0(), params.r());
    if r == 0.0 {
        s0
    } else {
        (-r).exp() * s0 * r.exp_m1() / r
    }
}

/// A priori constant `C` for the envelope `C·√N·2^{−N/2}` on `E|P_N − P|`.
///
/// `|P_N − P| ≤ e^{−r}‖S_N − S‖_∞ ≤ e^{−r}s0σe^{|μ|}e^{σ‖B‖_∞}‖B − B_N‖_∞`, with
/// `E e^{σ‖B‖_∞} ≤ 1 + 4e^{σ²/2}` from the reflection principle and
/// `(2 + √2)√(ln d/(2d)) = (2 + √2)√(ln 2/2)·√N·2^{−N/2}` for the sup-error.
/// The product of expectations stands in for the expectation of the product.
pub fn asian_envelope_constant(params: &GbmParams) -> f64 {
    let (s0, r, sigma) = (params.s0(), params.r(), params.sigma());
    let moment = 1.0 + 4.0 * (0.5 * sigma * sigma).exp();
    let sup_constant = (2.0 + std::f64::consts::SQRT_2) * (std::f64::consts::LN_2 / 2.0).sqrt();
    (-r).exp() * s0 * sigma * params.drift().abs().exp() * moment * sup_constant
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{sample_coefficients, CoefficientSet};
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    fn row(n: u32, estimate: f64, reference: f64) -> ConvergenceRow {
        ConvergenceRow {
            n,
            d: 1 << n,
            estimate,
            std_error: 0.0,
            reference,
            samples: 10,
            reference_level: n + 1,
        }
    }

    #[test]
    fn exact_l2_values() {
        assert_eq!(exact_l2_error(0), 1.0 / 6.0);
        assert!((exact_l2_error(4) - 0.010_416_666_666_666_666).abs() < 1e-18);
        for n in 0..30 {
            assert_eq!(exact_l2_error(n + 1) / exact_l2_error(n), 0.5);
        }
    }

    #[test]
    fn kl_tail_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        // ζ(2) = π²/6, so the d = 1 tail is 1/6 − 1/π²
        assert!((kl_l2_tail(1).unwrap() - (1.0 / 6.0 - 1.0 / pi2)).abs() < 1e-12);
        for d in [1u64, 2, 7, 64, 1024, 1 << 20] {
            let v = kl_l2_tail(d).unwrap();
            assert!(v <= 1.0 / (pi2 * d as f64));
            assert!(v >= 1.0 / (pi2 * (d + 1) as f64));
        }
        let ratio = exact_l2_error(20) / kl_l2_tail(1 << 20).unwrap();
        assert!((ratio - pi2 / 6.0).abs() < 1e-5);
        assert!(kl_l2_tail(0).is_err());
    }

    #[test]
    fn fit_rate_examples() {
        let rows: Vec<_> = (4..8)
            .map(|n| row(n, 2.0 * gbm_sup_reference(n), gbm_sup_reference(n)))
            .collect();
        let fit = fit_rate(&rows).unwrap();
        assert!((fit.constant - 2.0).abs() < 1e-15);
        assert!(fit.max_residual < 1e-15);
        assert!(fit_rate(&rows[..1]).is_err());
        let zeros: Vec<_> = (0..3).map(|n| row(n, 1.0, 0.0)).collect();
        assert!(fit_rate(&zeros).is_err());
    }

    #[test]
    fn successive_ratio_model() {
        let rows: Vec<_> = (4..8).map(|n| row(n, 1.0, gbm_sup_reference(n))).collect();
        for r in successive_ratios(&rows) {
            let n = (r.n - 1) as f64;
            let model = ((n + 1.0) / n).sqrt() / std::f64::consts::SQRT_2;
            assert!((r.model - model).abs() < 1e-15);
        }
    }

    #[test]
    fn references() {
        assert!((bm_sup_reference(10) - (1024f64.ln() / 2048.0).sqrt()).abs() < 1e-16);
        assert!((gbm_sup_reference(4) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn black_scholes_values() {
        let p = GbmParams::new(100.0, 0.05, 0.2).unwrap();
        // standard textbook value for S=K=100, r=5%, σ=20%, T=1
        assert!((black_scholes_call(&p, 100.0).unwrap() - 10.450_583_572_185_565).abs() < 1e-9);
        assert_eq!(black_scholes_call(&p, 0.0).unwrap(), 100.0);
        assert!(black_scholes_call(&p, -1.0).is_err());
    }

    #[test]
    fn time_average_matches_quadrature() {
        let p = GbmParams::new(2.0, 0.1, 0.7).unwrap();
        let c = sample_coefficients(RandomStream::new(8), 5).unwrap();
        let exact = time_average(&p, &c).unwrap();
        let oracle = integrate(
            |t| 2.0 * (p.drift() * t + 0.7 * crate::paths::eval_bn(&c, t).unwrap()).exp(),
            0.0,
            1.0,
            1e-13,
        );
        // the integrand has kinks at level-5 nodes; quadrature resolves them adaptively
        assert!(
            (exact - oracle.value).abs() < 1e-10,
            "{exact} vs {}",
            oracle.value
        );
    }

    #[test]
    fn time_average_flat_cells_use_taylor_rule() {
        // zero path with zero drift: S ≡ s0
        let p = GbmParams::new(3.0, 0.5, 1.0).unwrap();
        let c = CoefficientSet::zeros(4).unwrap();
        let v = time_average(&p, &c).unwrap();
        assert!((v - 3.0).abs() < 1e-15);
        let tiny = GbmParams::new(3.0, 0.0, 1e-12).unwrap();
        let c = sample_coefficients(RandomStream::new(1), 6).unwrap();
        assert!((time_average(&tiny, &c).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn coupled_rows_equal_single_calls() {
        let s = RandomStream::new(17);
        let pairs = [(2, 6), (3, 7), (4, 8)];
        let coupled = mc_l2_error_coupled(s, &pairs, 50).unwrap();
        for (&(n, m), c) in pairs.iter().zip(&coupled) {
            assert_eq!(*c, mc_l2_error(s, n, m, 50).unwrap());
        }
        let rows = mc_sup_error_bm_coupled(s, &pairs, 50).unwrap();
        for (&(n, m), r) in pairs.iter().zip(&rows) {
            assert_eq!(*r, mc_sup_error_bm(s, n, m, 50).unwrap());
        }
        let p = GbmParams::new(1.0, 0.0, 1.0).unwrap();
        let rows = mc_sup_error_gbm_coupled(&p, s, &pairs, 4, 20).unwrap();
        for (&(n, m), r) in pairs.iter().zip(&rows) {
            assert_eq!(*r, mc_sup_error_gbm(&p, s, n, m, 4, 20).unwrap());
        }
        let diffs = asian_differences(&p, 1.0, s, &[3, 5], 7, 30).unwrap();
        for d in &diffs {
            assert_eq!(d.price, price_asian(&p, 1.0, s, d.n, 30).unwrap());
        }
    }

    #[test]
    fn argument_validation() {
        let s = RandomStream::new(1);
        assert!(matches!(
            mc_l2_error(s, 4, 4, 10),
            Err(Error::InvalidLevels { .. })
        ));
        assert!(mc_l2_error(s, 2, 4, 1).is_err());
        assert!(matches!(
            mc_sup_error_bm(s, 2, 27, 10),
            Err(Error::LevelCap { .. })
        ));
        let p = GbmParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(price_asian(&p, -1.0, s, 3, 10).is_err());
        assert!(mc_sup_error_gbm(&p, s, 2, 4, 0, 10).is_err());
        let two = mc_l2_error(s, 3, 5, 2).unwrap();
        assert!(two.std_error().is_finite() && two.std_error() > 0.0);
    }

    #[test]
    fn overflow_reports_level_and_sample() {
        let s = RandomStream::new(3);
        let wild = GbmParams::new(1.0, 0.0, 400.0).unwrap();
        match mc_sup_error_gbm(&wild, s, 2, 4, 2, 100) {
            Err(Error::Sample { level, source, .. }) => {
                assert_eq!(level, 2);
                assert!(matches!(*source, Error::Overflow { .. }));
            }
            other => panic!("expected a tagged overflow, got {other:?}"),
        }
    }

    #[test]
    fn european_is_level_independent() {
        let p = GbmParams::new(100.0, 0.05, 0.2).unwrap();
        let s = RandomStream::new(4);
        let a = european_mc(&p, 95.0, s, 0, 500).unwrap();
        let b = european_mc(&p, 95.0, s, 10, 500).unwrap();
        assert_eq!(a, b);
        let zero = european_sanity(&p, 0.0, s, 200_000).unwrap();
        assert!((zero.mean() - 100.0).abs() < 3.0 * zero.std_error());
    }

    #[test]
    fn asian_price_edges_and_monotonicity() {
        let p = GbmParams::new(100.0, 0.05, 0.2).unwrap();
        let s = RandomStream::new(6);
        let far = price_asian(&p, 1e10 * 100.0, s, 6, 200).unwrap();
        assert_eq!(far.mean(), 0.0);
        let mut prev = f64::INFINITY;
        for k in [0.0, 80.0, 100.0, 120.0] {
            let v = price_asian(&p, k, s, 6, 500).unwrap().mean();
            assert!(v <= prev);
            prev = v;
        }
        let zero = price_asian(&p, 0.0, s, 8, 20_000).unwrap();
        assert!((zero.mean() - asian_zero_strike(&p)).abs() < 3.0 * zero.std_error());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = RandomStream::new(23);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_sup_error_bm_coupled(s, &[(3, 8), (4, 9)], 1000).unwrap())
        };
        let one = run(1);
        for threads in [2, 3, 8] {
            let other = run(threads);
            for (a, b) in one.iter().zip(&other) {
                assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
                assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
            }
        }
    }

    proptest! {
        #[test]
        fn call_payoff_is_lipschitz(a in -1e3f64..1e3, b in -1e3f64..1e3, k in 0f64..1e3) {
            let lhs = ((a - k).max(0.0) - (b - k).max(0.0)).abs();
            // each side is one rounded subtraction away from exact
            let slack = 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(k);
            prop_assert!(lhs <= (a - b).abs() + slack);
        }
    }
}
