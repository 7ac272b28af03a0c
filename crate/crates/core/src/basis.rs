//! Faber-Schauder basis on [0, 1]: the linear function `η₀(t) = t` and the
//! dyadic hats `η_{n,i}` supported on `[(2i-2)/2ⁿ, 2i/2ⁿ]` with peak
//! `2^{-(n+1)/2}` at the midpoint `(2i-1)/2ⁿ`.

use std::f64::consts::SQRT_2;

use crate::error::{domain, ensure_finite, Error, Result};

/// Highest supported hat level; keeps `2ⁿ` inside `u64`.
pub const MAX_LEVEL: u32 = 62;

/// A basis function, either `η₀` (level 0) or the hat `η_{n,i}`.
///
/// The single-index form counts `η₀` as 1 and `η_{n,i}` as `2^{n-1} + i`,
/// which is also the storage order of coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex {
    level: u32,
    position: u64,
}

impl BasisIndex {
    /// `η₀`.
    pub const LINEAR: BasisIndex = BasisIndex {
        level: 0,
        position: 0,
    };

    /// `η_{n,i}` with `1 ≤ i ≤ 2^{n-1}`.
    pub fn hat(level: u32, position: u64) -> Result<Self> {
        if level == 0 {
            return Err(domain("level", "hat functions start at level 1"));
        }
        if level > MAX_LEVEL {
            return Err(Error::LevelCap {
                level,
                cap: MAX_LEVEL,
            });
        }
        let count = 1u64 << (level - 1);
        if position == 0 || position > count {
            return Err(domain(
                "position",
                format!("level {level} has positions 1..={count}, got {position}"),
            ));
        }
        Ok(Self { level, position })
    }

    pub fn from_single(k: u64) -> Result<Self> {
        match k {
            0 => Err(domain("single index", "indices start at 1")),
            1 => Ok(Self::LINEAR),
            _ => {
                let level = (k - 1).ilog2() + 1;
                Self::hat(level, k - (1u64 << (level - 1)))
            }
        }
    }

    pub fn single(&self) -> u64 {
        if self.level == 0 {
            1
        } else {
            (1u64 << (self.level - 1)) + self.position
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Position within the level; 0 for `η₀`.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn is_linear(&self) -> bool {
        self.level == 0
    }

    fn require_hat(&self) -> Result<()> {
        if self.is_linear() {
            Err(domain("index", "eta_0 has full support and no peak"))
        } else {
            Ok(())
        }
    }
}

/// Slope factor `2^{(n-1)/2}` of the level-`n` hats.
///
/// Always a power of two times either 1 or the rounded `√2`, so
/// [`peak_value`] is an exact power-of-two rescaling of it.
pub fn level_scale(level: u32) -> f64 {
    debug_assert!(level >= 1);
    let e = level as i32 - 1;
    if e % 2 == 0 {
        2f64.powi(e / 2)
    } else {
        SQRT_2 * 2f64.powi((e - 1) / 2)
    }
}

/// `2^{-(n+1)/2}`, the common maximum of the level-`n` hats.
pub fn peak_value(level: u32) -> f64 {
    level_scale(level) * 2f64.powi(-(level as i32))
}

/// Evaluates a basis function at real `t ∈ [0, 1]`.
///
/// Branches are half-open: the rising branch covers `[lo, mid)` and the
/// falling branch `[mid, hi]`.
pub fn eta(index: BasisIndex, t: f64) -> Result<f64> {
    ensure_finite("t", t)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(domain("t", format!("expected t in [0, 1], got {t}")));
    }
    if index.is_linear() {
        return Ok(t);
    }
    let (lo, mid, hi) = hat_breaks(index);
    let s = level_scale(index.level);
    Ok(if t < lo || t > hi {
        0.0
    } else if t < mid {
        s * (t - lo)
    } else {
        s * (hi - t)
    })
}

/// Evaluates a basis function at the dyadic point `j / 2^m`.
///
/// Branch selection uses exact integer comparison.
pub fn eta_dyadic(index: BasisIndex, j: u64, m: u32) -> Result<f64> {
    check_dyadic(j, m)?;
    if index.is_linear() {
        return Ok(j as f64 * 2f64.powi(-(m as i32)));
    }
    let n = index.level;
    let common = n.max(m);
    let t = u128::from(j) << (common - m);
    let shift = common - n;
    let lo = u128::from(2 * index.position - 2) << shift;
    let mid = u128::from(2 * index.position - 1) << shift;
    let hi = u128::from(2 * index.position) << shift;
    let unit = 2f64.powi(-(common as i32));
    let s = level_scale(n);
    Ok(if t <= lo || t >= hi {
        0.0
    } else if t < mid {
        s * ((t - lo) as f64 * unit)
    } else {
        s * ((hi - t) as f64 * unit)
    })
}

pub(crate) fn check_dyadic(j: u64, m: u32) -> Result<()> {
    if m > MAX_LEVEL {
        return Err(Error::LevelCap {
            level: m,
            cap: MAX_LEVEL,
        });
    }
    if j > 1u64 << m {
        return Err(domain("t", format!("{j}/2^{m} exceeds 1")));
    }
    Ok(())
}

fn hat_breaks(index: BasisIndex) -> (f64, f64, f64) {
    let h = 2f64.powi(-(index.level as i32));
    let i = index.position as f64;
    ((2.0 * i - 2.0) * h, (2.0 * i - 1.0) * h, 2.0 * i * h)
}

/// Closed support `[(2i-2)/2ⁿ, 2i/2ⁿ]` of a hat.
pub fn support(index: BasisIndex) -> Result<(f64, f64)> {
    index.require_hat()?;
    let (lo, _, hi) = hat_breaks(index);
    Ok((lo, hi))
}

/// Peak location `(2i-1)/2ⁿ` of a hat.
pub fn midpoint(index: BasisIndex) -> Result<f64> {
    index.require_hat()?;
    Ok(hat_breaks(index).1)
}

/// Maximum value of a hat, `2^{-(n+1)/2}`.
pub fn peak(index: BasisIndex) -> Result<f64> {
    index.require_hat()?;
    Ok(peak_value(index.level))
}
