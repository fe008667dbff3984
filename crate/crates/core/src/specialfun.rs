//! Cylinder Bessel functions of the first kind, their derivatives, and
//! positive roots.
//!
//! Small arguments use the power series; everything else uses Miller's
//! backward recurrence normalized by `J_0 + 2 * sum_k J_2k = 1`. Both paths
//! hold an absolute error of about 1e-15 for orders up to [`MAX_ORDER`] and
//! `|x| <= 100`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported Bessel order.
pub const MAX_ORDER: u32 = 50;
/// Largest supported root index.
pub const MAX_ROOT_INDEX: u32 = 50;

/// Residual bound every returned root satisfies.
pub const ROOT_TOLERANCE: f64 = 1e-12;

const SERIES_LIMIT: f64 = 4.0;
const RESCALE_THRESHOLD: f64 = 1e250;

fn check_order(order: u32) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            max: MAX_ORDER,
        });
    }
    Ok(())
}

/// `J_m(x)`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    check_order(order)?;
    if !x.is_finite() {
        return Err(Error::invalid("x", format!("non-finite argument {x}")));
    }
    Ok(j_signed(order, x))
}

/// `J_m'(x)` through `J_0' = -J_1` and `J_m' = (J_{m-1} - J_{m+1}) / 2`.
pub fn bessel_j_prime(order: u32, x: f64) -> Result<f64> {
    check_order(order)?;
    if !x.is_finite() {
        return Err(Error::invalid("x", format!("non-finite argument {x}")));
    }
    Ok(j_prime_unchecked(order, x))
}

pub(crate) fn j_prime_unchecked(order: u32, x: f64) -> f64 {
    if order == 0 {
        -j_signed(1, x)
    } else {
        0.5 * (j_signed(order - 1, x) - j_signed(order + 1, x))
    }
}

/// `J_m(x) / x`, continuous at the origin.
pub(crate) fn j_over_x(order: u32, x: f64) -> f64 {
    if x.abs() < 1e-8 {
        return match order {
            0 => f64::INFINITY,
            1 => 0.5 - x * x / 16.0,
            _ => 0.0,
        };
    }
    j_signed(order, x) / x
}

pub(crate) fn j_signed(order: u32, x: f64) -> f64 {
    let v = j_unsigned(order, x.abs());
    if x < 0.0 && order % 2 == 1 {
        -v
    } else {
        v
    }
}

fn j_unsigned(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if x <= SERIES_LIMIT {
        power_series(m, x)
    } else {
        miller(m, x)
    }
}

fn power_series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=m {
        lead *= half / k as f64;
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    for k in 1..200 {
        term *= q / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(m: u32, x: f64) -> f64 {
    let scale = (m as f64).max(x);
    let mut start = (scale + 40.0 + 8.0 * scale.sqrt()).ceil() as u32;
    if start % 2 == 1 {
        start += 1;
    }
    let two_over_x = 2.0 / x;
    let mut above = 0.0;
    let mut current = 1e-300_f64.max(f64::MIN_POSITIVE);
    let mut target = 0.0;
    let mut norm = 0.0;
    let mut k = start;
    loop {
        if k == m {
            target = current;
        }
        if k == 0 {
            norm += current;
        } else if k.is_multiple_of(2) {
            norm += 2.0 * current;
        }
        if k == 0 {
            break;
        }
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        k -= 1;
        if current.abs() > RESCALE_THRESHOLD {
            current /= RESCALE_THRESHOLD;
            above /= RESCALE_THRESHOLD;
            target /= RESCALE_THRESHOLD;
            norm /= RESCALE_THRESHOLD;
        }
    }
    target / norm
}

/// McMahon's large-zero expansion for the `n`-th positive zero of `J_m`.
pub fn mcmahon_guess(order: u32, index: u32) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let beta = (index as f64 + 0.5 * order as f64 - 0.25) * PI;
    let e = 8.0 * beta;
    beta - (mu - 1.0) / e
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e.powi(3))
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * e.powi(5))
}

/// The `n`-th positive root `chi_{mn}` of `J_m`.
pub fn bessel_root(order: u32, index: u32) -> Result<f64> {
    check_order(order)?;
    check_index(index)?;
    if let Some(table) = GLOBAL_TABLE.get() {
        if let Some(v) = table.get(order, index) {
            return Ok(v);
        }
    }
    Ok(*roots_of_order(order, index)?.last().expect("index >= 1"))
}

fn check_index(index: u32) -> Result<()> {
    if index == 0 || index > MAX_ROOT_INDEX {
        return Err(Error::UnsupportedRootIndex {
            index,
            max: MAX_ROOT_INDEX,
        });
    }
    Ok(())
}

/// First `count` positive roots of `J_m`.
///
/// Brackets come from a sign-change scan starting at `x = m` (no positive
/// zero lies below the order) with a step well under the minimal zero
/// spacing, so the root index is exact. Each bracket is refined by Newton
/// steps seeded with McMahon's guess and guarded by bisection.
pub fn roots_of_order(order: u32, count: u32) -> Result<Vec<f64>> {
    check_order(order)?;
    check_index(count)?;
    const STEP: f64 = 0.25;
    let mut roots = Vec::with_capacity(count as usize);
    let mut a = order as f64;
    let mut fa = j_unsigned(order, a);
    while roots.len() < count as usize {
        let b = a + STEP;
        let fb = j_unsigned(order, b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            let idx = roots.len() as u32 + 1;
            roots.push(refine_root(order, idx, a, b, fa)?);
        }
        a = b;
        fa = fb;
    }
    Ok(roots)
}

fn refine_root(order: u32, index: u32, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64> {
    let lo_sign = f_lo.signum();
    let guess = mcmahon_guess(order, index);
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    let mut fx = j_unsigned(order, x);
    for _ in 0..200 {
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let slope = j_prime_unchecked(order, x);
        let newton = x - fx / slope;
        let next = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * x;
        x = next;
        fx = j_unsigned(order, x);
        if converged {
            break;
        }
    }
    if fx.abs() <= ROOT_TOLERANCE {
        Ok(x)
    } else {
        Err(Error::RootNotConverged {
            order,
            index,
            lo,
            hi,
            residual: fx.abs(),
        })
    }
}

/// Precomputed roots `chi_{mn}` for `m <= max_order`, `n <= max_index`.
#[derive(Debug, Clone)]
pub struct BesselRootTable {
    roots: Vec<Vec<f64>>,
}

static GLOBAL_TABLE: OnceLock<BesselRootTable> = OnceLock::new();

impl BesselRootTable {
    pub fn build(max_order: u32, max_index: u32) -> Result<Self> {
        check_order(max_order)?;
        check_index(max_index)?;
        let roots = (0..=max_order)
            .map(|m| roots_of_order(m, max_index))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { roots })
    }

    /// Shared table of the low-order roots used by the mode library.
    ///
    /// Built on first use; read-only afterwards.
    pub fn global() -> &'static BesselRootTable {
        GLOBAL_TABLE.get_or_init(|| Self::build(10, 10).expect("low-order Bessel roots converge"))
    }

    pub fn get(&self, order: u32, index: u32) -> Option<f64> {
        if index == 0 {
            return None;
        }
        self.roots
            .get(order as usize)
            .and_then(|r| r.get(index as usize - 1))
            .copied()
    }

    pub fn roots(&self, order: u32) -> Option<&[f64]> {
        self.roots.get(order as usize).map(Vec::as_slice)
    }

    pub fn max_order(&self) -> u32 {
        self.roots.len() as u32 - 1
    }
}
