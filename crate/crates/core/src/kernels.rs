//! Helmholtz fundamental solution and the double-layer kernel.

use std::f64::consts::PI;

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Scaling of the fundamental solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// `e^{ikr} / (4 pi r)`; textbook jump relations hold.
    #[default]
    #[serde(rename = "standard_4pi")]
    Standard4Pi,
    /// `e^{ikr} / r`, for cross-checking formulas written without the `1/4pi`.
    #[serde(rename = "paper_raw")]
    PaperRaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub k: f64,
    pub normalization: Normalization,
}

impl KernelParams {
    pub fn new(k: f64) -> Self {
        Self {
            k,
            normalization: Normalization::Standard4Pi,
        }
    }

    pub fn with_normalization(k: f64, normalization: Normalization) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::invalid("k", "wavenumber must be finite and nonnegative"));
        }
        Ok(Self { k, normalization })
    }

    fn scale(&self) -> f64 {
        match self.normalization {
            Normalization::Standard4Pi => 1.0 / (4.0 * PI),
            Normalization::PaperRaw => 1.0,
        }
    }
}

fn separation(x: Vec3, y: Vec3) -> Result<(Vec3, f64)> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::CoincidentPoints);
    }
    Ok((d, r))
}

/// `Phi(x, y) = e^{ik|x-y|} / (4 pi |x-y|)`.
pub fn phi(x: Vec3, y: Vec3, p: &KernelParams) -> Result<c64> {
    let (_, r) = separation(x, y)?;
    Ok(c64::from_polar(p.scale() / r, p.k * r))
}

/// `nu_y . grad_y Phi(x, y)`.
pub fn dlp_kernel(x: Vec3, y: Vec3, nu_y: Vec3, p: &KernelParams) -> Result<c64> {
    separation(x, y)?;
    Ok(dlp_unchecked(x, y, nu_y, p))
}

/// `grad_x` of [`dlp_kernel`].
pub fn grad_x_dlp_kernel(x: Vec3, y: Vec3, nu_y: Vec3, p: &KernelParams) -> Result<[c64; 3]> {
    separation(x, y)?;
    Ok(dlp_with_grad_unchecked(x, y, nu_y, p).1)
}

#[inline]
pub(crate) fn dlp_unchecked(x: Vec3, y: Vec3, nu: Vec3, p: &KernelParams) -> c64 {
    let d = x - y;
    let r2 = d.dot(d);
    let r = r2.sqrt();
    let kr = p.k * r;
    let (s, c) = kr.sin_cos();
    // e^{ikr} (1 - ikr) / r^3
    let g = c64::new(c + kr * s, s - kr * c) * (p.scale() / (r2 * r));
    g * nu.dot(d)
}

#[inline]
pub(crate) fn dlp_with_grad_unchecked(x: Vec3, y: Vec3, nu: Vec3, p: &KernelParams) -> (c64, [c64; 3]) {
    let d = x - y;
    let r2 = d.dot(d);
    let r = r2.sqrt();
    let kr = p.k * r;
    let (s, c) = kr.sin_cos();
    let e = c64::new(c, s) * p.scale();
    let g = e * c64::new(1.0, -kr) / (r2 * r);
    let nd = nu.dot(d);
    let h = e * c64::new(kr * kr - 3.0, 3.0 * kr) * (nd / (r2 * r2 * r));
    let grad = [g * nu.x + h * d.x, g * nu.y + h * d.y, g * nu.z + h * d.z];
    (g * nd, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts() -> Vec<(Vec3, Vec3, Vec3)> {
        vec![
            (Vec3::new(0.3, -0.2, 0.5), Vec3::new(-0.1, 0.4, 0.2), Vec3::new(1.0, 2.0, -0.5).normalized()),
            (Vec3::new(1.5, 0.0, 0.1), Vec3::new(0.0, 0.03, 0.0), Vec3::new(0.0, 1.0, 0.0)),
            (Vec3::new(-0.7, 2.2, -1.3), Vec3::new(0.2, 0.1, 0.05), Vec3::new(-0.3, 0.4, 0.8).normalized()),
        ]
    }

    #[test]
    fn static_limit_and_symmetry() {
        let p0 = KernelParams::new(0.0);
        let v = phi(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), &p0).unwrap();
        assert!((v - c64::new(1.0 / (4.0 * PI), 0.0)).norm() < 1e-16);
        let p = KernelParams::new(2.3);
        for (x, y, _) in pts() {
            assert_eq!(phi(x, y, &p).unwrap(), phi(y, x, &p).unwrap());
            let r = (x - y).norm();
            assert!((phi(x, y, &p).unwrap().norm() - 1.0 / (4.0 * PI * r)).abs() < 1e-15);
        }
        let raw = KernelParams::with_normalization(2.3, Normalization::PaperRaw).unwrap();
        let (x, y, _) = pts()[0];
        assert!((phi(x, y, &raw).unwrap() - phi(x, y, &p).unwrap() * (4.0 * PI)).norm() < 1e-14);
    }

    #[test]
    fn coincident_points_rejected() {
        let p = KernelParams::new(1.0);
        let x = Vec3::new(0.1, 0.2, 0.3);
        assert!(matches!(phi(x, x, &p), Err(Error::CoincidentPoints)));
        assert!(dlp_kernel(x, x, Vec3::new(1.0, 0.0, 0.0), &p).is_err());
        assert!(grad_x_dlp_kernel(x, x, Vec3::new(1.0, 0.0, 0.0), &p).is_err());
    }

    #[test]
    fn dlp_orthogonal_and_static_dipole() {
        let p = KernelParams::new(1.7);
        let x = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(dlp_kernel(x, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), &p).unwrap(), c64::new(0.0, 0.0));
        let p0 = KernelParams::new(0.0);
        let (x, y, nu) = pts()[0];
        let d = x - y;
        let r = d.norm();
        let cosphi = nu.dot(d) / r;
        let v = dlp_kernel(x, y, nu, &p0).unwrap();
        assert!((v.re - cosphi / (4.0 * PI * r * r)).abs() < 1e-15 && v.im == 0.0);
    }

    #[test]
    fn dlp_matches_finite_difference_in_y() {
        let p = KernelParams::new(1.3);
        let h = 1e-6;
        for (x, y, nu) in pts() {
            let exact = dlp_kernel(x, y, nu, &p).unwrap();
            let fd = (phi(x, y + nu * h, &p).unwrap() - phi(x, y - nu * h, &p).unwrap()) / (2.0 * h);
            assert!((exact - fd).norm() <= 1e-7 * exact.norm(), "{exact} vs {fd}");
        }
    }

    #[test]
    fn gradient_matches_finite_difference_in_x() {
        let p = KernelParams::new(1.3);
        let h = 1e-5;
        let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        for (x, y, nu) in pts() {
            let g = grad_x_dlp_kernel(x, y, nu, &p).unwrap();
            let gnorm = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for (a, e) in axes.iter().enumerate() {
                let fd = (dlp_kernel(x + *e * h, y, nu, &p).unwrap() - dlp_kernel(x - *e * h, y, nu, &p).unwrap())
                    / (2.0 * h);
                assert!((g[a] - fd).norm() <= 1e-6 * gnorm, "{a}: {} vs {fd}", g[a]);
            }
        }
    }

    #[test]
    fn helmholtz_residual_away_from_source() {
        let k = 1.9;
        let p = KernelParams::new(k);
        let y = Vec3::new(0.1, -0.2, 0.0);
        let h = 1e-3;
        for x in [Vec3::new(1.2, 0.4, -0.3), Vec3::new(-0.5, 1.5, 0.9)] {
            let f = |q: Vec3| phi(q, y, &p).unwrap();
            let mut lap = f(x) * -6.0;
            for e in [Vec3::new(h, 0.0, 0.0), Vec3::new(0.0, h, 0.0), Vec3::new(0.0, 0.0, h)] {
                lap += f(x + e) + f(x - e);
            }
            lap /= h * h;
            let res = (lap + f(x) * (k * k)).norm();
            assert!(res <= 1e-5 * (k * k * f(x).norm()), "{res}");
        }
    }
}
