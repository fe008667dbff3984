//! TM waveguide modes of a circular guide of radius `R` aligned with `x`.

use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::geometry::{Vec3, WaveParameters};
use crate::specialfun::{bessel_j, bessel_root, j_over_x, j_prime_unchecked, j_signed};

/// Radial tolerance for points on the wall.
const WALL_SLACK: f64 = 1e-12;

/// One `TM_{mn}` mode `E_x = E_mn J_m(r chi/R) cos(m theta) e^{i beta x}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub m: u32,
    pub n: u32,
    pub amplitude: c64,
    pub chi: f64,
    /// Real for propagating modes, `+i|beta|` for evanescent ones.
    pub beta: c64,
    pub radius: f64,
    pub k: f64,
    pub omega: f64,
    pub c: f64,
}

impl ModeSpec {
    pub fn new(m: u32, n: u32, amplitude: c64, radius: f64, wave: &WaveParameters) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("waveguide radius", "must be positive"));
        }
        let chi = bessel_root(m, n)?;
        let k = wave.k();
        let kc = chi / radius;
        let b2 = k * k - kc * kc;
        let beta = if b2 >= 0.0 {
            c64::new(b2.sqrt(), 0.0)
        } else {
            log::warn!("TM({m},{n}) is evanescent at k = {k}: cutoff {kc}");
            c64::new(0.0, (-b2).sqrt())
        };
        Ok(Self {
            m,
            n,
            amplitude,
            chi,
            beta,
            radius,
            k,
            omega: wave.omega(),
            c: wave.c(),
        })
    }

    pub fn cutoff_wavenumber(&self) -> f64 {
        self.chi / self.radius
    }

    pub fn is_propagating(&self) -> bool {
        self.k > self.cutoff_wavenumber()
    }

    fn check_inside(&self, p: Vec3) -> Result<(f64, f64)> {
        let r = p.radial();
        if r > self.radius * (1.0 + WALL_SLACK) {
            return Err(Error::OutsideGuide {
                x: p.x,
                y: p.y,
                z: p.z,
                r,
                radius: self.radius,
            });
        }
        Ok((r, p.azimuth()))
    }

    fn axial(&self, x: f64) -> c64 {
        (c64::i() * self.beta * x).exp() * self.amplitude
    }
}

/// Longitudinal field of a single mode.
pub fn mode_ex(mode: &ModeSpec, p: Vec3) -> Result<c64> {
    let (r, theta) = mode.check_inside(p)?;
    let j = bessel_j(mode.m, r * mode.cutoff_wavenumber())?;
    Ok(mode.axial(p.x) * (j * (mode.m as f64 * theta).cos()))
}

/// Cartesian gradient of [`mode_ex`].
pub fn mode_grad_ex(mode: &ModeSpec, p: Vec3) -> Result<[c64; 3]> {
    let (r, theta) = mode.check_inside(p)?;
    if mode.m > crate::specialfun::MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order: mode.m,
            max: crate::specialfun::MAX_ORDER,
        });
    }
    let kc = mode.cutoff_wavenumber();
    let m = mode.m;
    let rho = r * kc;
    let e = mode.axial(p.x);
    let (s_m, c_m) = (mode.m as f64 * theta).sin_cos();
    let value = e * (j_signed(m, rho) * c_m);
    let dr = kc * j_prime_unchecked(m, rho) * c_m;
    // (1/r) d/dtheta, finite on the axis
    let dtheta = if m == 0 { 0.0 } else { -(m as f64) * kc * j_over_x(m, rho) * s_m };
    let (st, ct) = theta.sin_cos();
    let gy = ct * dr - st * dtheta;
    let gz = st * dr + ct * dtheta;
    Ok([c64::i() * mode.beta * value, e * gy, e * gz])
}

/// Transverse field components recovered from `E_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseFields {
    pub ey: c64,
    pub ez: c64,
    pub by: c64,
    pub bz: c64,
}

pub fn mode_transverse(mode: &ModeSpec, p: Vec3) -> Result<TransverseFields> {
    if !mode.is_propagating() {
        return Err(Error::Evanescent { m: mode.m, n: mode.n });
    }
    let gap = mode.k * mode.k - mode.beta.norm_sqr();
    if gap.abs() <= 1e-14 * mode.k * mode.k {
        return Err(Error::DegenerateMode {
            m: mode.m,
            n: mode.n,
            gap,
        });
    }
    let g = mode_grad_ex(mode, p)?;
    let e_coef = c64::i() * mode.beta / gap;
    let b_coef = c64::new(0.0, mode.omega / (mode.c * mode.c) / gap);
    Ok(TransverseFields {
        ey: e_coef * g[1],
        ez: e_coef * g[2],
        by: -b_coef * g[2],
        bz: b_coef * g[1],
    })
}

/// Superposition of `E_x` over a list of modes.
pub fn field_ex(modes: &[ModeSpec], p: Vec3) -> Result<c64> {
    modes.iter().try_fold(c64::new(0.0, 0.0), |acc, m| Ok(acc + mode_ex(m, p)?))
}

/// Superposition of the gradients of `E_x`.
pub fn field_grad_ex(modes: &[ModeSpec], p: Vec3) -> Result<[c64; 3]> {
    let mut g = [c64::new(0.0, 0.0); 3];
    for m in modes {
        let d = mode_grad_ex(m, p)?;
        for a in 0..3 {
            g[a] += d[a];
        }
    }
    Ok(g)
}
