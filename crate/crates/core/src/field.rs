//! Evaluation of the synthesized double-layer field and its error norms.

use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{AntennaGeometry, SurfaceMesh, Vec3};
use crate::kernels::{dlp_unchecked, dlp_with_grad_unchecked, KernelParams};
use crate::modes::{field_ex, field_grad_ex, ModeSpec};
use crate::operator::SEPARATION_FRACTION;
use crate::quadrature::{gauss_legendre_on, periodic_trapezoid};

/// Field values (and optionally gradients) at a list of points.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub points: Vec<Vec3>,
    pub values: Vec<c64>,
    pub gradients: Option<Vec<[c64; 3]>>,
    /// Indices of points closer to the source than the separation threshold.
    pub flagged: Vec<usize>,
}

/// Quadrature-weighted source strengths `w_j v_j`.
fn strengths(values: &[c64], source: &SurfaceMesh) -> Result<Vec<c64>> {
    if values.len() != source.len() {
        return Err(Error::DimensionMismatch {
            context: "density vs source mesh",
            expected: source.len(),
            got: values.len(),
        });
    }
    Ok(values.iter().zip(&source.weights).map(|(v, w)| v * w).collect())
}

/// `u(x) = sum_j w_j v_j dlp(x, y_j, nu_j)` at every point.
pub fn evaluate(
    values: &[c64],
    source: &SurfaceMesh,
    points: &[Vec3],
    params: &KernelParams,
    with_gradient: bool,
) -> Result<FieldGrid> {
    let q = strengths(values, source)?;
    let threshold = if params.k > 0.0 {
        SEPARATION_FRACTION * 2.0 * std::f64::consts::PI / params.k
    } else {
        0.0
    };
    let per_point: Vec<Result<(c64, [c64; 3], bool)>> = points
        .par_iter()
        .map(|&x| {
            let mut u = c64::new(0.0, 0.0);
            let mut g = [c64::new(0.0, 0.0); 3];
            let mut dmin = f64::INFINITY;
            for ((y, nu), qj) in source.nodes.iter().zip(&source.normals).zip(&q) {
                let d = (x - *y).norm();
                if d == 0.0 {
                    return Err(Error::CoincidentPoints);
                }
                dmin = dmin.min(d);
                if with_gradient {
                    let (k, gk) = dlp_with_grad_unchecked(x, *y, *nu, params);
                    u += k * qj;
                    for a in 0..3 {
                        g[a] += gk[a] * qj;
                    }
                } else {
                    u += dlp_unchecked(x, *y, *nu, params) * qj;
                }
            }
            Ok((u, g, dmin < threshold))
        })
        .collect();
    let mut grid = FieldGrid {
        points: points.to_vec(),
        values: Vec::with_capacity(points.len()),
        gradients: with_gradient.then(|| Vec::with_capacity(points.len())),
        flagged: Vec::new(),
    };
    for (i, r) in per_point.into_iter().enumerate() {
        let (u, g, close) = r?;
        grid.values.push(u);
        if let Some(gs) = grid.gradients.as_mut() {
            gs.push(g);
        }
        if close {
            grid.flagged.push(i);
        }
    }
    if !grid.flagged.is_empty() {
        log::warn!("{} evaluation points closer than {threshold:e} to the source", grid.flagged.len());
    }
    Ok(grid)
}

/// Trace `E_b` of the field on the antenna mesh. The source surface must lie
/// strictly inside the antenna.
pub fn trace_eb(
    values: &[c64],
    source: &SurfaceMesh,
    antenna: &SurfaceMesh,
    geom: &AntennaGeometry,
    params: &KernelParams,
) -> Result<Vec<c64>> {
    let worst = source
        .nodes
        .iter()
        .map(|p| geom.radius_at(p.x) - p.radial())
        .fold(f64::INFINITY, f64::min);
    if !(worst > 0.0) {
        return Err(Error::Nesting {
            what: "source surface not strictly inside the antenna".into(),
            clearance: worst,
        });
    }
    Ok(evaluate(values, source, &antenna.nodes, params, false)?.values)
}

/// Control-region error norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlError {
    /// `||u + E_x||_{H^1(D_c)}`.
    pub h1: f64,
    /// `||E_x||_{H^1(D_c)}`.
    pub h1_reference: f64,
    /// `max |u + E_x| / max |E_x|` over the quadrature nodes.
    pub linf_rel: f64,
    pub max_reference: f64,
    /// Volume-weighted RMS of `E_x` over the region.
    pub rms_reference: f64,
}

impl ControlError {
    pub fn h1_rel(&self) -> f64 {
        relative(self.h1, self.h1_reference)
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Errors of `u + E_x` on a control quadrature; `grid` must carry gradients
/// and match `weights` node by node.
pub fn control_error(grid: &FieldGrid, weights: &[f64], modes: &[ModeSpec]) -> Result<ControlError> {
    if grid.points.is_empty() {
        return Err(Error::Empty("control grid"));
    }
    if weights.len() != grid.points.len() {
        return Err(Error::DimensionMismatch {
            context: "control weights vs grid",
            expected: grid.points.len(),
            got: weights.len(),
        });
    }
    let grads = grid
        .gradients
        .as_ref()
        .ok_or_else(|| Error::invalid("control grid", "gradients required for the H1 norm"))?;
    let mut h1 = 0.0;
    let mut h1_ref = 0.0;
    let mut l2_ref = 0.0;
    let mut vol = 0.0;
    let mut max_err: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for (i, p) in grid.points.iter().enumerate() {
        let e = field_ex(modes, *p)?;
        let ge = field_grad_ex(modes, *p)?;
        let w = weights[i];
        let diff = grid.values[i] + e;
        let mut gd = 0.0;
        let mut gr = 0.0;
        for a in 0..3 {
            gd += (grads[i][a] + ge[a]).norm_sqr();
            gr += ge[a].norm_sqr();
        }
        h1 += w * (diff.norm_sqr() + gd);
        h1_ref += w * (e.norm_sqr() + gr);
        l2_ref += w * e.norm_sqr();
        vol += w;
        max_err = max_err.max(diff.norm());
        max_ref = max_ref.max(e.norm());
    }
    Ok(ControlError {
        h1: h1.sqrt(),
        h1_reference: h1_ref.sqrt(),
        linf_rel: relative(max_err, max_ref),
        max_reference: max_ref,
        rms_reference: (l2_ref / vol).sqrt(),
    })
}

/// Sampling of the waveguide wall `r = R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WallSampling {
    pub n_axial: usize,
    pub n_azimuthal: usize,
}

/// Field size on the waveguide wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuietReport {
    /// `||u||_{L^2}` over the wall section `|x| <= L`.
    pub l2_wall: f64,
    pub wall_area: f64,
    /// `l2_wall / sqrt(wall_area)`.
    pub rms_wall: f64,
    /// RMS over the wall rings at `x = +-L/2`.
    pub rms_half_l: f64,
    /// RMS over the wall rings at `x = +-2L`.
    pub rms_two_l: f64,
}

pub fn quiet_error(
    values: &[c64],
    source: &SurfaceMesh,
    params: &KernelParams,
    radius: f64,
    half_length: f64,
    sampling: WallSampling,
) -> Result<QuietReport> {
    if sampling.n_axial < 2 || sampling.n_azimuthal < 4 {
        return Err(Error::invalid("wall sampling", "need at least 2 axial and 4 azimuthal points"));
    }
    let (xs, wx) = gauss_legendre_on(sampling.n_axial, -half_length, half_length);
    let (ts, h) = periodic_trapezoid(sampling.n_azimuthal, 0.0);
    let mut pts = Vec::with_capacity(xs.len() * ts.len());
    let mut ws = Vec::with_capacity(pts.capacity());
    for (x, w) in xs.iter().zip(&wx) {
        for t in &ts {
            pts.push(Vec3::cylindrical(*x, radius, *t));
            ws.push(w * radius * h);
        }
    }
    let ring = |x: f64| -> Vec<Vec3> { ts.iter().map(|t| Vec3::cylindrical(x, radius, *t)).collect() };
    let u = evaluate(values, source, &pts, params, false)?.values;
    let l2: f64 = u.iter().zip(&ws).map(|(u, w)| w * u.norm_sqr()).sum::<f64>().sqrt();
    let area: f64 = ws.iter().sum();
    let rms_rings = |xa: f64| -> Result<f64> {
        let mut p = ring(xa);
        p.extend(ring(-xa));
        let v = evaluate(values, source, &p, params, false)?.values;
        Ok((v.iter().map(|u| u.norm_sqr()).sum::<f64>() / v.len() as f64).sqrt())
    };
    Ok(QuietReport {
        l2_wall: l2,
        wall_area: area,
        rms_wall: l2 / area.sqrt(),
        rms_half_l: rms_rings(0.5 * half_length)?,
        rms_two_l: rms_rings(2.0 * half_length)?,
    })
}

/// Writes `x,y,z,re_u,im_u,re_exi,im_exi,abs_u_plus_exi`.
pub fn write_grid_csv<W: std::io::Write>(points: &[Vec3], u: &[c64], e: &[c64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,y,z,re_u,im_u,re_exi,im_exi,abs_u_plus_exi")?;
    for ((p, u), e) in points.iter().zip(u).zip(e) {
        writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{:e},{:e}",
            p.x,
            p.y,
            p.z,
            u.re,
            u.im,
            e.re,
            e.im,
            (u + e).norm()
        )?;
    }
    Ok(())
}
