//! Surfaces of revolution about the waveguide axis (`x`) and their
//! quadrature meshes.
//!
//! Every surface is described by a meridian profile in the `(x, r)`
//! half-plane which is revolved with an equispaced azimuthal trapezoid
//! rule. Profiles are smooth, so the azimuthal rule is spectrally accurate
//! and Gauss-Legendre along the profile converges fast.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{taper, taper_derivative_bound};
use crate::quadrature::{gauss_legendre_on, periodic_trapezoid};

/// Point or vector in `R^3`, with `x` along the waveguide axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Point from cylindrical coordinates `(x, r, theta)`.
    pub fn cylindrical(x: f64, r: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(x, r * c, r * s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    /// Distance from the `x` axis.
    pub fn radial(self) -> f64 {
        self.y.hypot(self.z)
    }

    pub fn azimuth(self) -> f64 {
        self.z.atan2(self.y)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// How a configured frequency value is turned into an angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyInterpretation {
    /// The value is `omega` in rad/s.
    Angular,
    /// The value is `f` in Hz; `omega = 2 pi f`.
    Cyclic,
}

impl fmt::Display for FrequencyInterpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrequencyInterpretation::Angular => "angular",
            FrequencyInterpretation::Cyclic => "cyclic",
        })
    }
}

/// Time-harmonic wave parameters; `k = omega / c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParameters {
    omega: f64,
    c: f64,
    k: f64,
}

impl WaveParameters {
    pub fn new(omega: f64, c: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid("omega", "must be positive and finite"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("c", "must be positive and finite"));
        }
        Ok(Self {
            omega,
            c,
            k: omega / c,
        })
    }

    pub fn from_frequency(value: f64, interpretation: FrequencyInterpretation, c: f64) -> Result<Self> {
        let omega = match interpretation {
            FrequencyInterpretation::Angular => value,
            FrequencyInterpretation::Cyclic => 2.0 * PI * value,
        };
        Self::new(omega, c)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.k
    }
}

/// Coaxial antenna of revolution with radius profile `delta * d(x)` on `[-l, l]`.
///
/// `taper_length == 0` gives the straight cylinder (flat ends), any positive
/// value the smooth pinched profile with quintic transitions on the end bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaGeometry {
    pub half_length: f64,
    pub delta: f64,
    pub taper_length: f64,
}

impl AntennaGeometry {
    pub fn straight(radius: f64, half_length: f64) -> Self {
        Self {
            half_length,
            delta: radius,
            taper_length: 0.0,
        }
    }

    pub fn tapered(delta: f64, half_length: f64, taper_length: f64) -> Self {
        Self {
            half_length,
            delta,
            taper_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_length > 0.0) {
            return Err(Error::invalid("antenna.half_length", "must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("antenna.delta", "radius must be positive"));
        }
        if !(self.taper_length >= 0.0 && self.taper_length < self.half_length) {
            return Err(Error::invalid(
                "antenna.taper_length",
                format!("must lie in [0, l); got {} with l = {}", self.taper_length, self.half_length),
            ));
        }
        Ok(())
    }

    pub fn is_straight(&self) -> bool {
        self.taper_length == 0.0
    }

    /// Radius `delta_n(x)`; zero outside `(-l, l)`.
    pub fn radius_at(&self, x: f64) -> f64 {
        if x.abs() >= self.half_length {
            return 0.0;
        }
        if self.is_straight() {
            return self.delta;
        }
        self.delta * taper(x, self.half_length, self.taper_length).map(|t| t.d).unwrap_or(0.0)
    }

    /// Slope `delta_n'(x)`.
    pub fn slope_at(&self, x: f64) -> f64 {
        if self.is_straight() || x.abs() >= self.half_length {
            return 0.0;
        }
        self.delta * taper(x, self.half_length, self.taper_length).map(|t| t.d_prime).unwrap_or(0.0)
    }

    /// Closed-form bound `C(l, c_t) * delta` on `|delta_n'|`.
    pub fn slope_bound(&self) -> f64 {
        if self.is_straight() {
            0.0
        } else {
            self.delta * taper_derivative_bound(self.taper_length)
        }
    }
}

/// Which physical surface a mesh discretizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SurfaceId {
    /// The antenna boundary.
    Antenna,
    /// The interior source surface carrying the density.
    Source,
    /// The enclosure of the `i`-th control region.
    Control(usize),
    /// The truncated waveguide boundary.
    Truncation,
    Other(String),
}

impl fmt::Display for SurfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceId::Antenna => f.write_str("antenna"),
            SurfaceId::Source => f.write_str("source"),
            SurfaceId::Control(i) => write!(f, "control{i}"),
            SurfaceId::Truncation => f.write_str("truncation"),
            SurfaceId::Other(s) => f.write_str(s),
        }
    }
}

/// Local tangent frame at a mesh node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    /// Unit tangent along the meridian (direction of increasing profile parameter).
    pub meridian: Vec3,
    /// Unit azimuthal vector `theta_hat = (0, -sin theta, cos theta)`.
    pub azimuthal: Vec3,
}

/// Quadrature mesh of a surface of revolution.
///
/// Nodes are stored ring by ring: node `ring * n_azimuthal + j` lies on
/// profile node `ring` at azimuth `theta_j`.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub id: SurfaceId,
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub frames: Vec<Frame>,
    pub thetas: Vec<f64>,
    pub n_azimuthal: usize,
}

impl SurfaceMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rings(&self) -> usize {
        self.nodes.len() / self.n_azimuthal.max(1)
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_j w_j (nu_j . x_j)`, which equals three times the enclosed volume
    /// for a closed surface.
    pub fn position_flux(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.normals)
            .zip(&self.weights)
            .map(|((p, n), w)| w * n.dot(*p))
            .sum()
    }

    /// Smallest node-to-node distance between two meshes.
    pub fn min_distance_to(&self, other: &SurfaceMesh) -> f64 {
        min_distance(&self.nodes, &other.nodes)
    }
}

pub(crate) fn min_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            let d = *p - *q;
            let d2 = d.dot(d);
            if d2 < best {
                best = d2;
            }
        }
    }
    best.sqrt()
}

/// One node of a meridian profile in the `(x, r)` half-plane.
#[derive(Debug, Clone, Copy)]
struct ProfileNode {
    x: f64,
    r: f64,
    /// Outward unit normal `(n_x, n_r)`.
    nx: f64,
    nr: f64,
    /// Unit tangent `(t_x, t_r)`.
    tx: f64,
    tr: f64,
    /// Arc-length weight.
    ds: f64,
}

#[derive(Debug, Default)]
struct Profile(Vec<ProfileNode>);

impl Profile {
    /// Straight segment from `p0` to `p1` with the given outward normal.
    fn line(&mut self, p0: (f64, f64), p1: (f64, f64), n: usize, normal: (f64, f64)) {
        let len = ((p1.0 - p0.0).powi(2) + (p1.1 - p0.1).powi(2)).sqrt();
        let (tx, tr) = ((p1.0 - p0.0) / len, (p1.1 - p0.1) / len);
        let (s, w) = gauss_legendre_on(n, 0.0, len);
        for (s, w) in s.into_iter().zip(w) {
            self.0.push(ProfileNode {
                x: p0.0 + tx * s,
                r: p0.1 + tr * s,
                nx: normal.0,
                nr: normal.1,
                tx,
                tr,
                ds: w,
            });
        }
    }

    /// Circular arc `center + rho (cos a, sin a)` for `a` in `[a0, a1]`, normal pointing away from the center.
    fn arc(&mut self, center: (f64, f64), rho: f64, a0: f64, a1: f64, n: usize) {
        let sense = (a1 - a0).signum();
        let (a, w) = gauss_legendre_on(n, a0, a1);
        for (a, w) in a.into_iter().zip(w) {
            let (s, c) = a.sin_cos();
            self.0.push(ProfileNode {
                x: center.0 + rho * c,
                r: center.1 + rho * s,
                nx: c,
                nr: s,
                tx: -s * sense,
                tr: c * sense,
                ds: rho * w.abs(),
            });
        }
    }

    /// Graph `r = f(x)` on `[a, b]` with outward normal `(-f', 1) / sqrt(1 + f'^2)`.
    fn graph(&mut self, f: impl Fn(f64) -> (f64, f64), a: f64, b: f64, n: usize) {
        let (xs, w) = gauss_legendre_on(n, a, b);
        for (x, w) in xs.into_iter().zip(w) {
            let (r, dr) = f(x);
            let s = (1.0 + dr * dr).sqrt();
            self.0.push(ProfileNode {
                x,
                r,
                nx: -dr / s,
                nr: 1.0 / s,
                tx: 1.0 / s,
                tr: dr / s,
                ds: s * w,
            });
        }
    }

    fn revolve(&self, id: SurfaceId, n_azimuthal: usize, phase: f64) -> SurfaceMesh {
        let (thetas, h) = periodic_trapezoid(n_azimuthal, phase);
        let cap = self.0.len() * n_azimuthal;
        let mut mesh = SurfaceMesh {
            id,
            nodes: Vec::with_capacity(cap),
            normals: Vec::with_capacity(cap),
            weights: Vec::with_capacity(cap),
            frames: Vec::with_capacity(cap),
            thetas: Vec::with_capacity(cap),
            n_azimuthal,
        };
        for p in &self.0 {
            for &t in &thetas {
                let (s, c) = t.sin_cos();
                mesh.nodes.push(Vec3::new(p.x, p.r * c, p.r * s));
                mesh.normals.push(Vec3::new(p.nx, p.nr * c, p.nr * s));
                mesh.weights.push(p.ds * p.r * h);
                mesh.frames.push(Frame {
                    meridian: Vec3::new(p.tx, p.tr * c, p.tr * s),
                    azimuthal: Vec3::new(0.0, -s, c),
                });
                mesh.thetas.push(t);
            }
        }
        mesh
    }
}

fn check_resolution(name: &str, value: usize, min: usize) -> Result<()> {
    if value < min {
        return Err(Error::invalid(name, format!("resolution {value} below minimum {min}")));
    }
    Ok(())
}

/// Mesh of the antenna boundary `z = (x, delta_n(x) cos theta, delta_n(x) sin theta)`.
///
/// For the straight profile only the lateral cylinder is meshed. For the
/// tapered profile the axial nodes are split over the two taper bands and
/// the plateau so the piecewise profile is integrated panel by panel.
pub fn make_antenna_mesh(geom: &AntennaGeometry, n_axial: usize, n_azimuthal: usize) -> Result<SurfaceMesh> {
    geom.validate()?;
    check_resolution("n_axial", n_axial, 4)?;
    check_resolution("n_azimuthal", n_azimuthal, 4)?;
    let l = geom.half_length;
    let profile_fn = |x: f64| (geom.radius_at(x), geom.slope_at(x));
    let mut profile = Profile::default();
    if geom.is_straight() {
        profile.graph(profile_fn, -l, l, n_axial);
    } else {
        let ct = geom.taper_length;
        let band = ((n_axial as f64 * ct / (2.0 * l)).round() as usize).max(n_axial / 4).max(2);
        let plateau = n_axial.saturating_sub(2 * band).max(2);
        profile.graph(profile_fn, -l, -l + ct, band);
        if l - ct > -l + ct {
            profile.graph(profile_fn, -l + ct, l - ct, plateau);
        }
        profile.graph(profile_fn, l - ct, l, band);
    }
    if let Some(bad) = profile.0.iter().find(|p| !(p.r >= 0.0) || !p.r.is_finite()) {
        return Err(Error::invalid("antenna profile", format!("radius {} at x = {}", bad.r, bad.x)));
    }
    Ok(profile.revolve(SurfaceId::Antenna, n_azimuthal, 0.0))
}

/// Mesh resolution of a revolved enclosure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnclosureResolution {
    /// Nodes along the longest straight run of the profile.
    pub straight: usize,
    /// Nodes per rounded cap or corner arc.
    pub cap: usize,
    pub azimuthal: usize,
}

/// Annular control shell `{delta + l1 <= r <= delta + l1 + l2} x [x_c - a, x_c + a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRegion {
    pub x_center: f64,
    pub x_half: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    #[serde(skip)]
    pub nodes: Vec<Vec3>,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

impl ControlRegion {
    pub fn new(x_center: f64, x_half: f64, r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(x_half > 0.0) {
            return Err(Error::invalid("control.x_half", "must be positive"));
        }
        if !(r_inner > 0.0 && r_outer > r_inner) {
            return Err(Error::invalid(
                "control radii",
                format!("need 0 < r_inner < r_outer, got {r_inner}, {r_outer}"),
            ));
        }
        Ok(Self {
            x_center,
            x_half,
            r_inner,
            r_outer,
            nodes: Vec::new(),
            weights: Vec::new(),
        })
    }

    pub fn volume(&self) -> f64 {
        PI * (self.r_outer.powi(2) - self.r_inner.powi(2)) * 2.0 * self.x_half
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x_center - self.x_half, self.x_center + self.x_half)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let r = p.radial();
        (p.x - self.x_center).abs() <= self.x_half && r >= self.r_inner && r <= self.r_outer
    }

    /// Signed distance in the meridian plane from `(x, r)` to the shell's
    /// rectangular cross-section (negative inside).
    pub fn signed_distance(&self, x: f64, r: f64) -> f64 {
        let cx = self.x_center;
        let cr = 0.5 * (self.r_inner + self.r_outer);
        let hx = self.x_half;
        let hr = 0.5 * (self.r_outer - self.r_inner);
        let qx = (x - cx).abs() - hx;
        let qr = (r - cr).abs() - hr;
        let outside = qx.max(0.0).hypot(qr.max(0.0));
        outside + qx.max(qr).min(0.0)
    }
}

/// Populates the volume quadrature of a control shell: Gauss-Legendre in `r`
/// and `x`, periodic trapezoid in `theta` (offset by half a step so the
/// nodes never coincide with surface meshes), weights include the Jacobian `r`.
pub fn make_control_quadrature(region: &ControlRegion, n_r: usize, n_theta: usize, n_x: usize) -> Result<ControlRegion> {
    check_resolution("n_r", n_r, 2)?;
    check_resolution("n_theta", n_theta, 4)?;
    check_resolution("n_x", n_x, 2)?;
    let (rs, wr) = gauss_legendre_on(n_r, region.r_inner, region.r_outer);
    let (x0, x1) = region.x_range();
    let (xs, wx) = gauss_legendre_on(n_x, x0, x1);
    let (ts, h) = periodic_trapezoid(n_theta, PI / n_theta as f64);
    let mut out = region.clone();
    out.nodes.clear();
    out.weights.clear();
    for (x, wx) in xs.iter().zip(&wx) {
        for (r, wr) in rs.iter().zip(&wr) {
            for t in &ts {
                out.nodes.push(Vec3::cylindrical(*x, *r, *t));
                out.weights.push(wx * wr * r * h);
            }
        }
    }
    Ok(out)
}

/// Which auxiliary surface to mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnclosureKind {
    /// The interior source surface.
    Source,
    /// Enclosure of the control region with the given index.
    Control(usize),
    /// Truncated waveguide boundary.
    Truncation,
}

/// Parameters of the auxiliary surfaces nested around the antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliarySurfaces {
    pub antenna: AntennaGeometry,
    /// Standoff `s_n` between the source surface and the antenna.
    pub source_standoff: f64,
    pub control_regions: Vec<ControlRegion>,
    /// Offset of each control enclosure from its shell.
    pub control_clearance: f64,
    /// Half-length `L` of the straight part of the truncation surface.
    pub truncation_half_length: f64,
    pub waveguide_radius: f64,
}

impl AuxiliarySurfaces {
    /// Radius and half-extent (tip position) of the source capsule.
    pub fn source_capsule(&self) -> (f64, f64) {
        let rho = self.antenna.delta - self.source_standoff;
        let tip = self.antenna.half_length - self.antenna.taper_length - self.source_standoff;
        (rho, tip)
    }

    /// Checks every analytic nesting condition and reports the first
    /// offending clearance.
    pub fn validate(&self) -> Result<()> {
        self.antenna.validate()?;
        let nest = |what: String, clearance: f64| -> Result<()> {
            if clearance > 0.0 && clearance.is_finite() {
                Ok(())
            } else {
                Err(Error::Nesting { what, clearance })
            }
        };
        nest("source standoff s_n".into(), self.source_standoff)?;
        let (rho, tip) = self.source_capsule();
        nest("source capsule radius (delta - s_n)".into(), rho)?;
        nest("source capsule straight section (tip - radius)".into(), tip - rho + f64::EPSILON)?;
        nest("control enclosure clearance".into(), self.control_clearance)?;
        let r_wall = self.waveguide_radius;
        nest("waveguide radius".into(), r_wall)?;
        nest(
            "truncation half-length L >= R (caps must end before 2L)".into(),
            self.truncation_half_length - r_wall + f64::EPSILON,
        )?;
        if self.control_regions.is_empty() {
            return Err(Error::Empty("control region list"));
        }
        let g = self.control_clearance;
        let l_trunc = self.truncation_half_length;
        for (i, c) in self.control_regions.iter().enumerate() {
            nest(format!("control[{i}] inner radius vs antenna radius"), c.r_inner - self.antenna.delta)?;
            nest(format!("control[{i}] outer radius vs waveguide wall"), r_wall - c.r_outer)?;
            nest(
                format!("control[{i}] enclosure vs antenna (r_inner - g - delta)"),
                c.r_inner - g - self.antenna.delta,
            )?;
            nest(
                format!("control[{i}] enclosure vs waveguide wall (R - r_outer - g)"),
                r_wall - c.r_outer - g,
            )?;
            nest(
                format!("control[{i}] enclosure vs truncation end (L - |x_c| - a - g)"),
                l_trunc - c.x_center.abs() - c.x_half - g,
            )?;
            for (j, d) in self.control_regions.iter().enumerate().skip(i + 1) {
                let x_gap = (c.x_center - d.x_center).abs() - c.x_half - d.x_half - 2.0 * g;
                let r_gap = (c.r_inner - d.r_outer).max(d.r_inner - c.r_outer) - 2.0 * g;
                nest(format!("control enclosures {i} and {j} overlap"), x_gap.max(r_gap))?;
            }
        }
        Ok(())
    }

    /// Node-wise nesting check of assembled meshes: the source lies strictly
    /// inside the antenna, every control quadrature node lies inside its
    /// enclosure, and every enclosure node lies outside the antenna and
    /// inside the truncated guide.
    pub fn verify_nodewise(
        &self,
        source: &SurfaceMesh,
        enclosures: &[SurfaceMesh],
        regions: &[ControlRegion],
        truncation: &SurfaceMesh,
    ) -> Result<()> {
        let a = &self.antenna;
        let worst_source = source
            .nodes
            .iter()
            .map(|p| a.radius_at(p.x) - p.radial())
            .fold(f64::INFINITY, f64::min);
        if !(worst_source > 0.0) {
            return Err(Error::Nesting {
                what: "source node outside antenna".into(),
                clearance: worst_source,
            });
        }
        for (i, (mesh, region)) in enclosures.iter().zip(regions).enumerate() {
            let g = self.control_clearance;
            let worst = region
                .nodes
                .iter()
                .map(|p| g - region.signed_distance(p.x, p.radial()))
                .fold(f64::INFINITY, f64::min);
            if !(worst > 0.0) {
                return Err(Error::Nesting {
                    what: format!("control[{i}] quadrature node outside its enclosure"),
                    clearance: worst,
                });
            }
            let worst_antenna = mesh
                .nodes
                .iter()
                .map(|p| p.radial() - a.radius_at(p.x))
                .fold(f64::INFINITY, f64::min);
            if !(worst_antenna > 0.0) {
                return Err(Error::Nesting {
                    what: format!("control[{i}] enclosure node inside antenna"),
                    clearance: worst_antenna,
                });
            }
            let worst_wall = mesh
                .nodes
                .iter()
                .map(|p| truncation_signed_clearance(p, self.truncation_half_length, self.waveguide_radius))
                .fold(f64::INFINITY, f64::min);
            if !(worst_wall > 0.0) {
                return Err(Error::Nesting {
                    what: format!("control[{i}] enclosure node outside truncated guide"),
                    clearance: worst_wall,
                });
            }
        }
        if truncation.is_empty() {
            return Err(Error::Empty("truncation mesh"));
        }
        Ok(())
    }
}

/// Distance from `p` to the truncation capsule boundary, positive inside.
fn truncation_signed_clearance(p: &Vec3, l: f64, radius: f64) -> f64 {
    let x = p.x.abs();
    let r = p.radial();
    if x <= l {
        radius - r
    } else {
        radius - (x - l).hypot(r)
    }
}

fn capsule_profile(profile: &mut Profile, rho: f64, straight_half: f64, n_straight: usize, n_cap: usize) {
    profile.arc((-straight_half, 0.0), rho, PI, 0.5 * PI, n_cap);
    if straight_half > 0.0 {
        profile.line((-straight_half, rho), (straight_half, rho), n_straight, (0.0, 1.0));
    }
    profile.arc((straight_half, 0.0), rho, 0.5 * PI, 0.0, n_cap);
}

/// Mesh of one auxiliary surface.
///
/// * `Source`: capsule of radius `delta - s_n` whose tips sit `s_n` inside the
///   antenna plateau ends.
/// * `Control(i)`: boundary of the `g`-offset of the `i`-th shell's cross-section
///   (a rounded rectangle with corner radius `g`), revolved.
/// * `Truncation`: capsule of radius `R` with straight part `|x| <= L`.
pub fn make_enclosure_mesh(aux: &AuxiliarySurfaces, kind: EnclosureKind, res: EnclosureResolution) -> Result<SurfaceMesh> {
    aux.validate()?;
    check_resolution("straight", res.straight, 2)?;
    check_resolution("cap", res.cap, 2)?;
    check_resolution("azimuthal", res.azimuthal, 4)?;
    let mut profile = Profile::default();
    let id = match kind {
        EnclosureKind::Source => {
            let (rho, tip) = aux.source_capsule();
            capsule_profile(&mut profile, rho, tip - rho, res.straight, res.cap);
            SurfaceId::Source
        }
        EnclosureKind::Truncation => {
            let r = aux.waveguide_radius;
            capsule_profile(&mut profile, r, aux.truncation_half_length, res.straight, res.cap);
            SurfaceId::Truncation
        }
        EnclosureKind::Control(i) => {
            let region = aux
                .control_regions
                .get(i)
                .ok_or_else(|| Error::invalid("control index", format!("{i} out of range")))?;
            let g = aux.control_clearance;
            let (x0, x1) = region.x_range();
            let (r0, r1) = (region.r_inner, region.r_outer);
            let long = x1 - x0;
            let side = ((res.straight as f64 * (r1 - r0) / long).ceil() as usize).max(res.straight / 3).max(2);
            // counter-clockwise in the (x, r) plane: bottom, right, top, left
            profile.line((x0, r0 - g), (x1, r0 - g), res.straight, (0.0, -1.0));
            profile.arc((x1, r0), g, 1.5 * PI, 2.0 * PI, res.cap);
            profile.line((x1 + g, r0), (x1 + g, r1), side, (1.0, 0.0));
            profile.arc((x1, r1), g, 0.0, 0.5 * PI, res.cap);
            profile.line((x1, r1 + g), (x0, r1 + g), res.straight, (0.0, 1.0));
            profile.arc((x0, r1), g, 0.5 * PI, PI, res.cap);
            profile.line((x0 - g, r1), (x0 - g, r0), side, (-1.0, 0.0));
            profile.arc((x0, r0), g, PI, 1.5 * PI, res.cap);
            SurfaceId::Control(i)
        }
    };
    Ok(profile.revolve(id, res.azimuthal, 0.0))
}

/// Capsule of radius `rho` whose straight part spans `|x| <= straight_half`,
/// centered on the axis. Used by the quadrature oracles.
pub fn make_capsule_mesh(id: SurfaceId, rho: f64, straight_half: f64, res: EnclosureResolution) -> Result<SurfaceMesh> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho", format!("must be positive, got {rho}")));
    }
    if !(straight_half >= 0.0 && straight_half.is_finite()) {
        return Err(Error::invalid("straight_half", format!("must be nonnegative, got {straight_half}")));
    }
    check_resolution("straight", res.straight, 2)?;
    check_resolution("cap", res.cap, 2)?;
    check_resolution("azimuthal", res.azimuthal, 4)?;
    let mut profile = Profile::default();
    capsule_profile(&mut profile, rho, straight_half, res.straight, res.cap);
    Ok(profile.revolve(id, res.azimuthal, 0.0))
}

/// Volume enclosed by a capsule of radius `rho` and straight half-length `h`.
pub fn capsule_volume(rho: f64, h: f64) -> f64 {
    PI * rho * rho * 2.0 * h + 4.0 / 3.0 * PI * rho.powi(3)
}

/// Area of a capsule of radius `rho` and straight half-length `h`.
pub fn capsule_area(rho: f64, h: f64) -> f64 {
    2.0 * PI * rho * 2.0 * h + 4.0 * PI * rho * rho
}

/// Volume of the revolved `g`-offset of a control shell cross-section (Pappus).
pub fn enclosure_volume(region: &ControlRegion, g: f64) -> f64 {
    let w = 2.0 * region.x_half;
    let h = region.r_outer - region.r_inner;
    let area = w * h + 2.0 * g * (w + h) + PI * g * g;
    let centroid = 0.5 * (region.r_inner + region.r_outer);
    2.0 * PI * centroid * area
}

/// Writes meshes as CSV with header `surface_id,x,y,z,nx,ny,nz,w`.
pub fn write_mesh_csv<W: std::io::Write>(meshes: &[&SurfaceMesh], mut out: W) -> std::io::Result<()> {
    writeln!(out, "surface_id,x,y,z,nx,ny,nz,w")?;
    for mesh in meshes {
        for ((p, n), w) in mesh.nodes.iter().zip(&mesh.normals).zip(&mesh.weights) {
            writeln!(out, "{},{},{},{},{},{},{},{}", mesh.id, p.x, p.y, p.z, n.x, n.y, n.z, w)?;
        }
    }
    Ok(())
}
