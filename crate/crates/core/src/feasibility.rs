//! Taper profile, the magnetic surface current `M = E_b theta_hat` on the
//! antenna, and the computable part of the longitudinal trace discrepancy.

use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::geometry::{AntennaGeometry, SurfaceMesh, Vec3};

/// Value and slope of the cut-off function `d` at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaperValue {
    pub d: f64,
    pub d_prime: f64,
}

/// Quintic smoothstep cut-off on `[-l, l]`: zero at `|x| = l`, one on the
/// plateau `|x| <= l - c_t`, `C^2` across both band edges.
pub fn taper(x: f64, l: f64, c_t: f64) -> Result<TaperValue> {
    if !(c_t > 0.0 && c_t < l) {
        return Err(Error::invalid("taper_length", format!("need 0 < c_t < l, got c_t = {c_t}, l = {l}")));
    }
    if x.abs() >= l {
        return Ok(TaperValue { d: 0.0, d_prime: 0.0 });
    }
    let t = ((l - x.abs()) / c_t).min(1.0);
    let d = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    let dt = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    // dt/dx = -sign(x) / c_t
    let d_prime = -x.signum() * dt / c_t;
    Ok(TaperValue { d, d_prime })
}

/// Closed-form bound `C(l, c_t) = 15 / (8 c_t)` on `|d'|`, attained mid-band.
pub fn taper_derivative_bound(c_t: f64) -> f64 {
    15.0 / (8.0 * c_t)
}

/// Magnetic current sample at one antenna node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSample {
    pub position: Vec3,
    pub theta: f64,
    /// Unit azimuthal direction of the current.
    pub direction: Vec3,
    /// Complex magnitude, equal to `E_b` at the node.
    pub magnitude: c64,
    pub d: f64,
    pub slope: f64,
    pub weight: f64,
}

impl CurrentSample {
    /// Cartesian components of `M`.
    pub fn vector(&self) -> [c64; 3] {
        let m = self.magnitude;
        [m * self.direction.x, m * self.direction.y, m * self.direction.z]
    }
}

#[derive(Debug, Clone)]
pub struct MagneticCurrent {
    pub samples: Vec<CurrentSample>,
}

impl MagneticCurrent {
    pub fn l2_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.weight * s.magnitude.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.samples.iter().map(|s| s.magnitude.norm()).fold(0.0, f64::max)
    }

    /// `max |M|` over nodes with `|x| > x_cut` divided by the global maximum.
    pub fn end_band_ratio(&self, x_cut: f64) -> f64 {
        let total = self.max_magnitude();
        if total == 0.0 {
            return 0.0;
        }
        let band = self
            .samples
            .iter()
            .filter(|s| s.position.x.abs() > x_cut)
            .map(|s| s.magnitude.norm())
            .fold(0.0, f64::max);
        band / total
    }

    /// Writes `x,theta,re_m,im_m,d,delta_prime`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,theta,re_m,im_m,d,delta_prime")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.position.x, s.theta, s.magnitude.re, s.magnitude.im, s.d, s.slope
            )?;
        }
        Ok(())
    }
}

fn profile_values(geom: &AntennaGeometry, x: f64) -> (f64, f64) {
    if geom.is_straight() {
        (if x.abs() < geom.half_length { 1.0 } else { 0.0 }, 0.0)
    } else {
        let t = taper(x, geom.half_length, geom.taper_length).unwrap_or(TaperValue { d: 0.0, d_prime: 0.0 });
        (t.d, geom.delta * t.d_prime)
    }
}

/// Pairs each `E_b` sample with the azimuthal unit vector of its node.
pub fn build_current(eb: &[c64], antenna: &SurfaceMesh, geom: &AntennaGeometry) -> Result<MagneticCurrent> {
    if eb.len() != antenna.len() {
        return Err(Error::DimensionMismatch {
            context: "E_b trace vs antenna mesh",
            expected: antenna.len(),
            got: eb.len(),
        });
    }
    if antenna.frames.len() != antenna.len() {
        return Err(Error::invalid("antenna mesh", "azimuthal frame missing"));
    }
    let samples = eb
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let p = antenna.nodes[i];
            let (d, slope) = profile_values(geom, p.x);
            CurrentSample {
                position: p,
                theta: antenna.thetas[i],
                direction: antenna.frames[i].azimuthal,
                magnitude: e,
                d,
                slope,
                weight: antenna.weights[i],
            }
        })
        .collect();
    Ok(MagneticCurrent { samples })
}

/// Computable part of the longitudinal trace discrepancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExsReport {
    /// `|| (delta')^2 E_b / (sqrt(delta'^2 + 1) + 1) ||_{L^2}`.
    pub slope_term: f64,
    /// `|| E_b ||_{L^2}` on the same mesh.
    pub eb_norm: f64,
    /// `|| delta' ||_{L^2} * bound` when a bound on the transverse field is supplied.
    /// The transverse term itself needs the exterior Maxwell solve.
    pub transverse_budget: Option<f64>,
}

/// First bound term of `E_xs - E_b`; zero for the straight profile.
pub fn exs_discrepancy(eb: &[c64], antenna: &SurfaceMesh, geom: &AntennaGeometry) -> Result<f64> {
    Ok(exs_report(eb, antenna, geom, None)?.slope_term)
}

pub fn exs_report(
    eb: &[c64],
    antenna: &SurfaceMesh,
    geom: &AntennaGeometry,
    transverse_bound: Option<f64>,
) -> Result<ExsReport> {
    if eb.len() != antenna.len() {
        return Err(Error::DimensionMismatch {
            context: "E_b trace vs antenna mesh",
            expected: antenna.len(),
            got: eb.len(),
        });
    }
    let mut slope_term = 0.0;
    let mut eb_norm = 0.0;
    let mut slope_norm = 0.0;
    for ((p, w), e) in antenna.nodes.iter().zip(&antenna.weights).zip(eb) {
        let s = geom.slope_at(p.x);
        let s2 = s * s;
        // E_b (sqrt(s^2+1) - 1), written without cancellation
        let term = s2 / ((s2 + 1.0).sqrt() + 1.0);
        slope_term += w * term * term * e.norm_sqr();
        eb_norm += w * e.norm_sqr();
        slope_norm += w * s2;
    }
    Ok(ExsReport {
        slope_term: slope_term.sqrt(),
        eb_norm: eb_norm.sqrt(),
        transverse_budget: transverse_bound.map(|b| b * slope_norm.sqrt()),
    })
}
