//! Truncated Lévy-Ciesielski paths `B_N`, their geometric counterparts `S_N`,
//! and exact norms of differences between truncation levels.
//!
//! Coefficients are stored level-major in single-index order
//! (`x₀`, `x_{1,1}`, `x_{2,1}`, `x_{2,2}`, ...). Sampling draws them in the same
//! order, so a level-`M` set drawn from a stream extends the level-`N` set
//! drawn from that stream: `B_N` and `B_M` built that way are coupled.

use std::io::{BufRead, Write};

use crate::basis::{check_dyadic, eta, peak_value, BasisIndex, MAX_LEVEL};
use crate::error::{domain, ensure_finite, Error, Result};
use crate::gaussian::RandomStream;
use crate::io::{csv_error, format_real, read_level_comment};

/// Largest level for which coefficients or grids are materialized.
pub const MAX_STORED_LEVEL: u32 = 26;

/// Exponents beyond `±EXP_LIMIT` are reported as [`Error::Overflow`].
pub const EXP_LIMIT: f64 = 700.0;

/// Oversampling factor used for GBM sup-norms when none is given.
pub const DEFAULT_OVERSAMPLE: u32 = 64;

fn check_stored(level: u32) -> Result<()> {
    if level > MAX_STORED_LEVEL {
        Err(Error::LevelCap {
            level,
            cap: MAX_STORED_LEVEL,
        })
    } else {
        Ok(())
    }
}

#[inline]
pub(crate) fn guarded_exp(x: f64) -> Result<f64> {
    if x.abs() > EXP_LIMIT || x.is_nan() {
        Err(Error::Overflow {
            exponent: x,
            limit: EXP_LIMIT,
        })
    } else {
        Ok(x.exp())
    }
}

/// The realized coefficients `x₀, x_{n,i}` (`n ≤ N`) of one path: `2^N` values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    level: u32,
    values: Vec<f64>,
}

impl CoefficientSet {
    /// Wraps `2^level` values given in single-index order.
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        check_stored(level)?;
        let expected = 1usize << level;
        if values.len() != expected {
            return Err(domain(
                "coefficients",
                format!(
                    "level {level} needs {expected} values, got {}",
                    values.len()
                ),
            ));
        }
        for &v in &values {
            ensure_finite("coefficient", v)?;
        }
        Ok(Self { level, values })
    }

    pub fn zeros(level: u32) -> Result<Self> {
        check_stored(level)?;
        Ok(Self {
            level,
            values: vec![0.0; 1usize << level],
        })
    }

    /// Returns the set with one coefficient replaced.
    pub fn with(mut self, index: BasisIndex, value: f64) -> Result<Self> {
        ensure_finite("coefficient", value)?;
        if index.level() > self.level {
            return Err(domain(
                "index",
                format!("level {} above set level {}", index.level(), self.level),
            ));
        }
        self.values[index.single() as usize - 1] = value;
        Ok(self)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of coefficients, `d = 2^N`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn get(&self, index: BasisIndex) -> Option<f64> {
        (index.level() <= self.level).then(|| self.values[index.single() as usize - 1])
    }

    /// `x_{n,1..=2^{n-1}}` for `1 ≤ n ≤ N`.
    pub fn level_coefficients(&self, n: u32) -> &[f64] {
        assert!(
            n >= 1 && n <= self.level,
            "level {n} not in 1..={}",
            self.level
        );
        level_slice(&self.values, n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// The coefficients of levels `≤ n`, i.e. the set defining `B_n`.
    pub fn truncated(&self, n: u32) -> Result<Self> {
        if n > self.level {
            return Err(domain(
                "level",
                format!("cannot truncate level {} set to {n}", self.level),
            ));
        }
        Ok(Self {
            level: n,
            values: self.values[..1usize << n].to_vec(),
        })
    }

    /// Writes `# coefficient-set level=N` followed by `k,level,position,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# coefficient-set level={}", self.level)
            .map_err(|e| Error::InvalidArgument(format!("write: {e}")))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "level", "position", "value"])
            .map_err(csv_error)?;
        for (slot, v) in self.values.iter().enumerate() {
            let idx = BasisIndex::from_single(slot as u64 + 1)?;
            w.write_record([
                idx.single().to_string(),
                idx.level().to_string(),
                idx.position().to_string(),
                format_real(*v),
            ])
            .map_err(csv_error)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("write: {e}")))
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let level = read_level_comment(&mut input, "coefficient-set")?;
        check_stored(level)?;
        let mut values = vec![f64::NAN; 1usize << level];
        let mut rdr = csv::Reader::from_reader(input);
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let k: u64 = parse_field(&rec, 0)?;
            let v: f64 = parse_field(&rec, 3)?;
            if k == 0 || k as usize > values.len() {
                return Err(domain("k", format!("index {k} outside level {level}")));
            }
            values[k as usize - 1] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(domain("coefficients", "incomplete coefficient set"));
        }
        Self::new(level, values)
    }
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize) -> Result<T> {
    rec.get(col)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| domain("csv", format!("bad field {col} in {rec:?}")))
}

#[inline]
fn level_slice(values: &[f64], n: u32) -> &[f64] {
    let start = 1usize << (n - 1);
    &values[start..2 * start]
}

/// Values of a path on the dyadic grid `j / 2^M`, `j = 0..=2^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPath {
    level: u32,
    values: Vec<f64>,
}

impl DyadicPath {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Grid abscissa `j / 2^M`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * 2f64.powi(-(self.level as i32))
    }

    /// Writes `# dyadic-path level=M` followed by `j,t,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# dyadic-path level={}", self.level)
            .map_err(|e| Error::InvalidArgument(format!("write: {e}")))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "t", "value"]).map_err(csv_error)?;
        for (j, v) in self.values.iter().enumerate() {
            w.write_record([j.to_string(), format_real(self.time(j)), format_real(*v)])
                .map_err(csv_error)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidArgument(format!("write: {e}")))
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let level = read_level_comment(&mut input, "dyadic-path")?;
        check_stored(level)?;
        let mut values = vec![f64::NAN; (1usize << level) + 1];
        let mut rdr = csv::Reader::from_reader(input);
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let j: usize = parse_field(&rec, 0)?;
            let v: f64 = parse_field(&rec, 2)?;
            *values
                .get_mut(j)
                .ok_or_else(|| domain("j", format!("grid index {j} outside level {level}")))? = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(domain("path", "incomplete dyadic path"));
        }
        Ok(Self { level, values })
    }
}

/// Parameters of `S(t) = s0·exp((r - σ²/2)t + σB(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    s0: f64,
    r: f64,
    sigma: f64,
}

impl GbmParams {
    pub fn new(s0: f64, r: f64, sigma: f64) -> Result<Self> {
        ensure_finite("s0", s0)?;
        ensure_finite("r", r)?;
        ensure_finite("sigma", sigma)?;
        if s0 <= 0.0 {
            return Err(domain("s0", format!("must be > 0, got {s0}")));
        }
        if sigma <= 0.0 {
            return Err(domain("sigma", format!("must be > 0, got {sigma}")));
        }
        Ok(Self { s0, r, sigma })
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `r - σ²/2`.
    pub fn drift(&self) -> f64 {
        self.r - 0.5 * self.sigma * self.sigma
    }
}

/// Draws a level-`level` coefficient set in canonical order.
pub fn sample_coefficients(stream: RandomStream, level: u32) -> Result<CoefficientSet> {
    check_stored(level)?;
    let mut values = vec![0.0; 1usize << level];
    stream.fill_normals(&mut values);
    Ok(CoefficientSet { level, values })
}

/// `B_N(t)` by descending the dyadic refinement, O(N).
///
/// At every dyadic `t = j/2^M` (`M ≤ 62`) the result is bit-identical to
/// `eval_on_grid(coeffs, M).values()[j]`; elsewhere the final level-`N` cell
/// is interpolated linearly.
pub fn eval_bn(coeffs: &CoefficientSet, t: f64) -> Result<f64> {
    ensure_finite("t", t)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(domain("t", format!("expected t in [0, 1], got {t}")));
    }
    let scaled = t * 2f64.powi(MAX_LEVEL as i32);
    if scaled.fract() == 0.0 {
        eval_bn_dyadic(coeffs, scaled as u64, MAX_LEVEL)
    } else {
        Ok(descend(coeffs, t, None))
    }
}

/// `B_N(j / 2^m)`; bit-identical to the level-`m` grid value.
pub fn eval_bn_dyadic(coeffs: &CoefficientSet, j: u64, m: u32) -> Result<f64> {
    check_dyadic(j, m)?;
    // reduce j/2^m to lowest terms
    let (j, m) = if j == 0 {
        (0, 0)
    } else {
        let tz = j.trailing_zeros().min(m);
        (j >> tz, m - tz)
    };
    Ok(descend(coeffs, j as f64 * 2f64.powi(-(m as i32)), Some(m)))
}

/// Bisection descent; `dyadic_level` is the exact level of `t` if it is dyadic.
fn descend(coeffs: &CoefficientSet, t: f64, dyadic_level: Option<u32>) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut vlo, mut vhi) = (0.0f64, coeffs.x0());
    if t == 0.0 {
        return 0.0;
    }
    if t == 1.0 {
        return vhi;
    }
    let last = match dyadic_level {
        Some(m) => m,
        None => coeffs.level,
    };
    let mut cell = 0usize;
    for n in 1..=last {
        let mid = 0.5 * (lo + hi);
        let vmid = if n <= coeffs.level {
            0.5 * (vlo + vhi) + peak_value(n) * level_slice(&coeffs.values, n)[cell]
        } else {
            0.5 * (vlo + vhi)
        };
        if t == mid {
            return vmid;
        }
        if t < mid {
            hi = mid;
            vhi = vmid;
            cell *= 2;
        } else {
            lo = mid;
            vlo = vmid;
            cell = 2 * cell + 1;
        }
    }
    vlo + (vhi - vlo) * ((t - lo) / (hi - lo))
}

/// `B_N(t)` as the literal basis sum `x₀η₀(t) + Σ x_{n,i}η_{n,i}(t)`, using
/// the single active hat per level. Independent of the refinement route.
pub fn eval_bn_series(coeffs: &CoefficientSet, t: f64) -> Result<f64> {
    let mut sum = coeffs.x0() * eta(BasisIndex::LINEAR, t)?;
    let mut comp = 0.0;
    for n in 1..=coeffs.level {
        let width = 2f64.powi(-(n as i32 - 1));
        let count = 1usize << (n - 1);
        let i = ((t / width) as usize).min(count - 1);
        let term = level_slice(&coeffs.values, n)[i] * eta(BasisIndex::hat(n, i as u64 + 1)?, t)?;
        // Neumaier summation
        let next = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - next) + term;
        } else {
            comp += (term - next) + sum;
        }
        sum = next;
    }
    Ok(sum + comp)
}

/// `B_N` on the level-`m` grid by midpoint refinement, O(2^m).
pub fn eval_on_grid(coeffs: &CoefficientSet, m: u32) -> Result<DyadicPath> {
    if m < coeffs.level {
        return Err(Error::InvalidLevels {
            coarse: m,
            fine: coeffs.level,
        });
    }
    check_stored(m)?;
    let mut values = vec![0.0; (1usize << m) + 1];
    fill_grid(&coeffs.values, coeffs.level, m, &mut values);
    Ok(DyadicPath { level: m, values })
}

/// Refines the prefix `values[..2^level]` onto the level-`m` grid.
pub(crate) fn fill_grid(values: &[f64], level: u32, m: u32, grid: &mut [f64]) {
    debug_assert_eq!(grid.len(), (1usize << m) + 1);
    let last = grid.len() - 1;
    grid[0] = 0.0;
    grid[last] = values[0];
    for n in 1..=m {
        let step = 1usize << (m - n + 1);
        let half = step / 2;
        if n <= level {
            let p = peak_value(n);
            for (c, &x) in level_slice(values, n).iter().enumerate() {
                let l = c * step;
                grid[l + half] = 0.5 * (grid[l] + grid[l + step]) + p * x;
            }
        } else {
            for l in (0..last).step_by(step) {
                grid[l + half] = 0.5 * (grid[l] + grid[l + step]);
            }
        }
    }
}

/// Visits `B_m - B_n` on each level-`n` cell, refined to level `m`.
///
/// The difference vanishes on the level-`n` grid, so each cell is built
/// independently from the coefficients of levels `n+1..=m` it contains.
/// `visit` receives the cell index and the `2^{m-n} + 1` values.
pub(crate) fn for_each_tail_cell(
    values: &[f64],
    n: u32,
    m: u32,
    mut visit: impl FnMut(usize, &[f64]),
) {
    let span = 1usize << (m - n);
    let mut buf = vec![0.0; span + 1];
    let peaks: Vec<f64> = (n + 1..=m).map(peak_value).collect();
    for cell in 0..(1usize << n) {
        buf[0] = 0.0;
        buf[span] = 0.0;
        for (k, &p) in (n + 1..=m).zip(&peaks) {
            let per_cell = 1usize << (k - 1 - n);
            let xs = &level_slice(values, k)[cell * per_cell..(cell + 1) * per_cell];
            let step = 1usize << (m - k + 1);
            let half = step / 2;
            for (q, &x) in xs.iter().enumerate() {
                let l = q * step;
                buf[l + half] = 0.5 * (buf[l] + buf[l + step]) + p * x;
            }
        }
        visit(cell, &buf);
    }
}

fn check_pair(n: u32, m: u32) -> Result<()> {
    if n >= m {
        Err(Error::InvalidLevels { coarse: n, fine: m })
    } else {
        Ok(())
    }
}

/// `‖B_M − B_N‖_∞` for `M = fine.level()`, exact: the difference is
/// piecewise linear on the level-`M` grid.
pub fn sup_diff_bm(fine: &CoefficientSet, n: u32) -> Result<f64> {
    check_pair(n, fine.level)?;
    Ok(sup_tail(&fine.values, n, fine.level))
}

pub(crate) fn sup_tail(values: &[f64], n: u32, m: u32) -> f64 {
    let mut best = 0.0f64;
    for_each_tail_cell(values, n, m, |_, cell| {
        for &v in cell {
            best = best.max(v.abs());
        }
    });
    best
}

/// `∫₀¹ (B_M − B_N)² dt` for `M = fine.level()`, integrating the
/// quadratic exactly on every level-`M` cell.
pub fn l2_diff_sq(fine: &CoefficientSet, n: u32) -> Result<f64> {
    check_pair(n, fine.level)?;
    Ok(l2_tail(&fine.values, n, fine.level))
}

pub(crate) fn l2_tail(values: &[f64], n: u32, m: u32) -> f64 {
    let mut total = 0.0;
    for_each_tail_cell(values, n, m, |_, cell| {
        let mut s = 0.0;
        for w in cell.windows(2) {
            s += w[0] * w[0] + w[0] * w[1] + w[1] * w[1];
        }
        total += s;
    });
    total * 2f64.powi(-(m as i32)) / 3.0
}

/// `S_N` on the grid of `path`.
pub fn gbm_on_grid(params: &GbmParams, path: &DyadicPath) -> Result<Vec<f64>> {
    let mu = params.drift();
    path.values
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let s = params.s0 * guarded_exp(mu * path.time(j) + params.sigma * b)?;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::Overflow {
                    exponent: mu * path.time(j) + params.sigma * b,
                    limit: EXP_LIMIT,
                })
            }
        })
        .collect()
}

/// Max of `|S_M − S_N|` over the level-`M` grid with `oversample − 1` extra
/// equispaced points per cell.
///
/// This is a lower bound on `‖S_M − S_N‖_∞` that increases to it under
/// refinement; doubling `oversample` never lowers it. Cells whose rigorous
/// bound `s0·e^{max exponent}·max|σ(B_M − B_N)|` cannot beat the running
/// maximum are skipped, which leaves the result unchanged.
pub fn sup_diff_gbm(
    params: &GbmParams,
    fine: &CoefficientSet,
    n: u32,
    oversample: u32,
) -> Result<f64> {
    check_pair(n, fine.level)?;
    let mut scratch = GbmScratch::default();
    scratch.sup(params, &fine.values, n, fine.level, oversample)
}

/// Reusable buffers for [`sup_diff_gbm`] in sample loops.
#[derive(Debug, Default)]
pub(crate) struct GbmScratch {
    // exponents μt + σB on the level-M grid, then their exponentials
    fine: Vec<f64>,
    coarse: Vec<f64>,
    fine_exp: Vec<f64>,
    coarse_exp: Vec<f64>,
}

impl GbmScratch {
    pub(crate) fn sup(
        &mut self,
        params: &GbmParams,
        values: &[f64],
        n: u32,
        m: u32,
        oversample: u32,
    ) -> Result<f64> {
        if oversample == 0 {
            return Err(domain("oversample", "must be >= 1"));
        }
        check_stored(m)?;
        let len = (1usize << m) + 1;
        self.fine.resize(len, 0.0);
        self.coarse.resize(len, 0.0);
        self.fine_exp.resize(len, 0.0);
        self.coarse_exp.resize(len, 0.0);
        fill_grid(values, m, m, &mut self.fine);
        fill_grid(values, n, m, &mut self.coarse);

        let mu = params.drift();
        let sigma = params.sigma;
        let h = 2f64.powi(-(m as i32));
        let mut best = 0.0f64;
        for j in 0..len {
            let t = j as f64 * h;
            let a = mu * t + sigma * self.fine[j];
            let c = mu * t + sigma * self.coarse[j];
            if a.abs() > EXP_LIMIT || c.abs() > EXP_LIMIT {
                return Err(Error::Overflow {
                    exponent: if a.abs() > c.abs() { a } else { c },
                    limit: EXP_LIMIT,
                });
            }
            let (ea, ec) = (a.exp(), c.exp());
            self.fine[j] = a;
            self.coarse[j] = c;
            self.fine_exp[j] = ea;
            self.coarse_exp[j] = ec;
            best = best.max((ea - ec).abs());
        }
        if oversample > 1 {
            let inv = 1.0 / oversample as f64;
            for j in 0..len - 1 {
                let (a0, a1) = (self.fine[j], self.fine[j + 1]);
                let (c0, c1) = (self.coarse[j], self.coarse[j + 1]);
                let top = self.fine_exp[j]
                    .max(self.fine_exp[j + 1])
                    .max(self.coarse_exp[j])
                    .max(self.coarse_exp[j + 1]);
                let gap = (a0 - c0).abs().max((a1 - c1).abs());
                // |e^a − e^c| ≤ e^{max(a,c)}|a − c|, plus a rounding allowance
                if top * gap + 8.0 * f64::EPSILON * top <= best {
                    continue;
                }
                for k in 1..oversample {
                    let w = k as f64 * inv;
                    let a = a0 + (a1 - a0) * w;
                    let c = c0 + (c1 - c0) * w;
                    best = best.max((a.exp() - c.exp()).abs());
                }
            }
        }
        Ok(params.s0 * best)
    }
}

/// `‖x‖_𝒳` restricted to the stored levels:
/// `|x₀| + Σ_{n≤N} max_i |x_{n,i}| 2^{-(n+1)/2}`.
pub fn xnorm_truncated(coeffs: &CoefficientSet) -> f64 {
    let mut total = coeffs.x0().abs();
    for n in 1..=coeffs.level {
        let m = level_slice(&coeffs.values, n)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        total += m * peak_value(n);
    }
    total
}
