//! Tikhonov-regularized densities through one thin SVD of the weighted operator.

use faer::Mat;
use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{norm, BlockOperator, BlockRole};

/// Thin singular value decomposition `K = U diag(s) V^*`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    /// `sigma_max / sigma_min`, capped at `1 / f64::EPSILON` once the smallest
    /// singular value falls below round-off.
    pub fn condition(&self) -> f64 {
        let max = self.sigma_max();
        if max == 0.0 {
            return f64::INFINITY;
        }
        max / self.sigma_min().max(max * f64::EPSILON)
    }
}

pub fn factorize(op: &BlockOperator) -> Result<Svd> {
    factorize_matrix(&op.matrix)
}

pub fn factorize_matrix(m: &Mat<c64>) -> Result<Svd> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Empty("operator matrix"));
    }
    let svd = m.thin_svd().map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let s_diag = svd.S().column_vector();
    let s: Vec<f64> = (0..s_diag.nrows()).map(|i| s_diag[i].re).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("non-finite singular value".into()));
    }
    Ok(Svd {
        u: svd.U().to_owned(),
        s,
        v: svd.V().to_owned(),
    })
}

/// Regularized density and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySolution {
    /// Physical density values on the source nodes.
    pub values: Vec<c64>,
    /// Weighted coordinates `sqrt(w_j) v_j`.
    pub weighted: Vec<c64>,
    pub alpha: f64,
    /// `||(K v - b)_control|| / ||b_control||` over control blocks.
    pub residual_control: f64,
    /// `||(K v)_quiet|| / ||b_control||`, with the block gains divided out.
    pub residual_quiet: f64,
    /// `||v||_{L^2}` on the source surface, from the filter factors.
    pub source_norm: f64,
    /// `||K v - b||` in the weighted target space, from the filter factors.
    pub residual: f64,
}

/// Right-hand side projected on the left singular vectors, ready for
/// repeated solves.
pub struct TikhonovProblem<'a> {
    op: &'a BlockOperator,
    svd: &'a Svd,
    b: Vec<c64>,
    ub: Vec<c64>,
    /// `||b||^2 - ||U^* b||^2`: the part of `b` outside the range of `U`.
    outside2: f64,
    control_norm: f64,
}

impl<'a> TikhonovProblem<'a> {
    pub fn new(op: &'a BlockOperator, svd: &'a Svd, b: Vec<c64>) -> Result<Self> {
        if b.len() != op.nrows() {
            return Err(Error::DimensionMismatch {
                context: "right-hand side",
                expected: op.nrows(),
                got: b.len(),
            });
        }
        if svd.u.nrows() != op.nrows() || svd.v.nrows() != op.ncols() {
            return Err(Error::DimensionMismatch {
                context: "factorization vs operator",
                expected: op.nrows(),
                got: svd.u.nrows(),
            });
        }
        let ub: Vec<c64> = (0..svd.s.len())
            .map(|k| {
                let mut acc = c64::new(0.0, 0.0);
                for (i, bi) in b.iter().enumerate() {
                    acc += svd.u[(i, k)].conj() * bi;
                }
                acc
            })
            .collect();
        let outside2 = (norm(&b).powi(2) - norm(&ub).powi(2)).max(0.0);
        let control_norm = op
            .blocks
            .iter()
            .filter(|blk| blk.role == BlockRole::Control)
            .map(|blk| norm(&b[blk.rows.clone()]).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            op,
            svd,
            b,
            ub,
            outside2,
            control_norm,
        })
    }

    pub fn rhs(&self) -> &[c64] {
        &self.b
    }

    pub fn solve(&self, alpha: f64) -> Result<DensitySolution> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be positive and finite, got {alpha}")));
        }
        let n = self.op.ncols();
        let mut coef = Vec::with_capacity(self.svd.s.len());
        let mut norm2 = 0.0;
        let mut res2 = self.outside2;
        for (s, ub) in self.svd.s.iter().zip(&self.ub) {
            let f = s / (s * s + alpha);
            let g = alpha / (s * s + alpha);
            coef.push(ub * f);
            norm2 += f * f * ub.norm_sqr();
            res2 += g * g * ub.norm_sqr();
        }
        let mut y = vec![c64::new(0.0, 0.0); n];
        for (k, c) in coef.iter().enumerate() {
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += self.svd.v[(j, k)] * c;
            }
        }
        let ky = self.op.apply(&y)?;
        let mut ctrl = 0.0;
        let mut quiet = 0.0;
        for blk in &self.op.blocks {
            let rows = blk.rows.clone();
            match blk.role {
                BlockRole::Control => {
                    ctrl += ky[rows.clone()]
                        .iter()
                        .zip(&self.b[rows])
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                }
                BlockRole::Quiet => quiet += ky[rows].iter().map(|a| a.norm_sqr()).sum::<f64>() / (blk.gain * blk.gain),
            }
        }
        let denom = if self.control_norm > 0.0 { self.control_norm } else { 1.0 };
        Ok(DensitySolution {
            values: self.op.unscale_density(&y)?,
            weighted: y,
            alpha,
            residual_control: ctrl.sqrt() / denom,
            residual_quiet: quiet.sqrt() / denom,
            source_norm: norm2.sqrt(),
            residual: res2.sqrt(),
        })
    }

    /// One solve per `alpha`; `alphas` must be strictly decreasing and positive.
    pub fn sweep(&self, alphas: &[f64]) -> Result<Vec<DensitySolution>> {
        check_sweep(alphas)?;
        alphas.par_iter().map(|&a| self.solve(a)).collect()
    }
}

fn check_sweep(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha list"));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::invalid("alphas", "must be positive and finite"));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("alphas", "must be strictly decreasing"));
    }
    Ok(())
}

/// Factorizes and solves for one `alpha`.
pub fn tikhonov_solve(op: &BlockOperator, b: &[c64], alpha: f64) -> Result<DensitySolution> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
    }
    let svd = factorize(op)?;
    TikhonovProblem::new(op, &svd, b.to_vec())?.solve(alpha)
}

pub fn alpha_sweep(op: &BlockOperator, b: &[c64], alphas: &[f64]) -> Result<Vec<DensitySolution>> {
    check_sweep(alphas)?;
    let svd = factorize(op)?;
    TikhonovProblem::new(op, &svd, b.to_vec())?.sweep(alphas)
}

/// `n` geometrically spaced values from `hi` down to `lo`.
pub fn geometric_alphas(hi: f64, lo: f64, n: usize) -> Result<Vec<f64>> {
    if !(hi > lo && lo > 0.0) || n < 2 {
        return Err(Error::invalid("alpha range", format!("need hi > lo > 0 and n >= 2, got {hi}, {lo}, {n}")));
    }
    let (a, b) = (hi.log10(), lo.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

/// `||(alpha I + K^* K) y - K^* b|| / ||K^* b||` in weighted coordinates.
pub fn normal_equation_residual(op: &BlockOperator, b: &[c64], sol: &DensitySolution) -> Result<f64> {
    let ky = op.apply(&sol.weighted)?;
    let kky = op.adjoint_apply(&ky)?;
    let kb = op.adjoint_apply(b)?;
    let r: Vec<c64> = kky
        .iter()
        .zip(&kb)
        .zip(&sol.weighted)
        .map(|((a, c), y)| y * sol.alpha + a - c)
        .collect();
    let denom = norm(&kb);
    Ok(if denom > 0.0 { norm(&r) / denom } else { norm(&r) })
}

/// Rule for choosing `alpha` from a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum AlphaStrategy {
    Fixed { alpha: f64 },
    /// Largest `alpha` whose control residual is at most `tau`.
    Discrepancy { tau: f64 },
    /// Maximum curvature of the log-log (residual, norm) curve.
    LCorner,
    /// Smallest control error. [`pick_alpha`] ranks by the control residual;
    /// the pipeline ranks by the `L^inf` error over the control region.
    MinControlError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    /// Position in the sweep, `None` for a fixed value outside it.
    pub index: Option<usize>,
    /// `false` when the rule could not be met and a fallback was used.
    pub satisfied: bool,
}

pub fn pick_alpha(sweep: &[DensitySolution], strategy: AlphaStrategy) -> Result<AlphaChoice> {
    if let AlphaStrategy::Fixed { alpha } = strategy {
        let index = sweep.iter().position(|s| s.alpha == alpha);
        return Ok(AlphaChoice {
            alpha,
            index,
            satisfied: true,
        });
    }
    if sweep.is_empty() {
        return Err(Error::Empty("alpha sweep"));
    }
    let choice = |i: usize, satisfied: bool| AlphaChoice {
        alpha: sweep[i].alpha,
        index: Some(i),
        satisfied,
    };
    match strategy {
        AlphaStrategy::Fixed { .. } => unreachable!(),
        AlphaStrategy::Discrepancy { tau } => match sweep.iter().position(|s| s.residual_control <= tau) {
            Some(i) => Ok(choice(i, true)),
            None => {
                log::warn!("no alpha reaches control residual {tau}; using the smallest");
                Ok(choice(sweep.len() - 1, false))
            }
        },
        AlphaStrategy::LCorner => {
            let pts: Vec<(f64, f64)> = sweep.iter().map(|s| (s.residual.ln(), s.source_norm.ln())).collect();
            Ok(choice(l_corner(&pts), true))
        }
        AlphaStrategy::MinControlError => Ok(choice(argmin(sweep.iter().map(|s| s.residual_control)), true)),
    }
}

/// Index of the smallest finite value (first on ties).
pub fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Corner of a curve traversed with decreasing `alpha`: the interior point
/// of largest clockwise Menger curvature. Fewer than three points give the last.
pub fn l_corner(points: &[(f64, f64)]) -> usize {
    if points.len() < 3 {
        return points.len().saturating_sub(1);
    }
    let mut best = (points.len() - 1, f64::NEG_INFINITY);
    for i in 1..points.len() - 1 {
        let (p, q, r) = (points[i - 1], points[i], points[i + 1]);
        let a = (q.0 - p.0, q.1 - p.1);
        let b = (r.0 - q.0, r.1 - q.1);
        let c = (r.0 - p.0, r.1 - p.1);
        let la = a.0.hypot(a.1);
        let lb = b.0.hypot(b.1);
        let lc = c.0.hypot(c.1);
        if la == 0.0 || lb == 0.0 || lc == 0.0 {
            continue;
        }
        let kappa = -2.0 * (a.0 * b.1 - a.1 * b.0) / (la * lb * lc);
        if kappa.is_finite() && kappa > best.1 {
            best = (i, kappa);
        }
    }
    best.0
}

/// Writes `alpha,residual,residual_control,residual_quiet,source_norm`.
pub fn write_sweep_csv<W: std::io::Write>(sweep: &[DensitySolution], mut out: W) -> std::io::Result<()> {
    writeln!(out, "alpha,residual,residual_control,residual_quiet,source_norm")?;
    for s in sweep {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e}",
            s.alpha, s.residual, s.residual_control, s.residual_quiet, s.source_norm
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, SurfaceId, SurfaceMesh, Vec3};
    use crate::kernels::KernelParams;
    use crate::operator::{assemble, Target};

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        }
        fn c(&mut self) -> c64 {
            c64::new(self.next(), self.next())
        }
    }

    fn random_operator(m: usize, n: usize, seed: u64) -> BlockOperator {
        let mut rng = Lcg(seed);
        let mut mat = Mat::<c64>::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                mat[(i, j)] = rng.c();
            }
        }
        BlockOperator {
            matrix: mat,
            row_scale: vec![1.0; m],
            col_scale: vec![1.0; n],
            blocks: vec![crate::operator::Block {
                id: SurfaceId::Control(0),
                role: BlockRole::Control,
                rows: 0..m,
                gain: 1.0,
            }],
            min_distance: 1.0,
        }
    }

    /// Gaussian elimination with partial pivoting on `(alpha I + A^* A) x = A^* b`.
    fn dense_normal_solve(a: &Mat<c64>, b: &[c64], alpha: f64) -> Vec<c64> {
        let n = a.ncols();
        let mut g = vec![vec![c64::new(0.0, 0.0); n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = c64::new(0.0, 0.0);
                for k in 0..a.nrows() {
                    s += a[(k, i)].conj() * a[(k, j)];
                }
                g[i][j] = s + if i == j { c64::new(alpha, 0.0) } else { c64::new(0.0, 0.0) };
            }
            g[i][n] = (0..a.nrows()).map(|k| a[(k, i)].conj() * b[k]).sum();
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| g[x][col].norm().partial_cmp(&g[y][col].norm()).unwrap()).unwrap();
            g.swap(col, piv);
            for row in col + 1..n {
                let f = g[row][col] / g[col][col];
                for k in col..=n {
                    let t = g[col][k];
                    g[row][k] -= f * t;
                }
            }
        }
        let mut x = vec![c64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut s = g[i][n];
            for k in i + 1..n {
                s -= g[i][k] * x[k];
            }
            x[i] = s / g[i][i];
        }
        x
    }

    #[test]
    fn filter_factors_match_dense_normal_equations() {
        let op = random_operator(50, 30, 11);
        let mut rng = Lcg(5);
        let b: Vec<c64> = (0..50).map(|_| rng.c()).collect();
        for alpha in [1e-3, 0.1, 3.0] {
            let sol = tikhonov_solve(&op, &b, alpha).unwrap();
            let dense = dense_normal_solve(&op.matrix, &b, alpha);
            let diff: Vec<c64> = sol.weighted.iter().zip(&dense).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) <= 1e-10 * norm(&dense), "alpha {alpha}");
            assert!(normal_equation_residual(&op, &b, &sol).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn limits_of_alpha_and_zero_rhs() {
        let op = random_operator(20, 12, 3);
        let mut rng = Lcg(8);
        let b: Vec<c64> = (0..20).map(|_| rng.c()).collect();
        let svd = factorize(&op).unwrap();
        let prob = TikhonovProblem::new(&op, &svd, b.clone()).unwrap();
        let big = prob.solve(1e12 * svd.sigma_max().powi(2)).unwrap();
        assert!(big.source_norm <= 1e-11 * norm(&b));
        let zero = TikhonovProblem::new(&op, &svd, vec![c64::new(0.0, 0.0); 20]).unwrap().solve(1e-3).unwrap();
        assert!(zero.values.iter().all(|v| v.norm() == 0.0));
        assert!(prob.solve(0.0).is_err());
        assert!(prob.solve(-1.0).is_err());
    }

    #[test]
    fn sweep_is_monotone_and_validated() {
        let op = random_operator(40, 25, 17);
        let mut rng = Lcg(2);
        let b: Vec<c64> = (0..40).map(|_| rng.c()).collect();
        let alphas = geometric_alphas(10.0, 1e-6, 12).unwrap();
        let sweep = alpha_sweep(&op, &b, &alphas).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].residual <= w[0].residual * (1.0 + 1e-12));
            assert!(w[1].source_norm >= w[0].source_norm * (1.0 - 1e-12));
        }
        assert!(alpha_sweep(&op, &b, &[1.0, 2.0]).is_err());
        assert!(alpha_sweep(&op, &b, &[]).is_err());
        assert!(alpha_sweep(&op, &b, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn filter_norms_agree_with_direct_norms() {
        let op = random_operator(30, 18, 23);
        let mut rng = Lcg(4);
        let b: Vec<c64> = (0..30).map(|_| rng.c()).collect();
        let sol = tikhonov_solve(&op, &b, 0.05).unwrap();
        let ky = op.apply(&sol.weighted).unwrap();
        let r: Vec<c64> = ky.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!((norm(&r) - sol.residual).abs() <= 1e-12 * norm(&b));
        assert!((norm(&sol.weighted) - sol.source_norm).abs() <= 1e-12 * sol.source_norm);
        assert!((sol.residual_control - norm(&r) / norm(&b)).abs() <= 1e-12);
    }

    fn fake(alpha: f64, res: f64, nrm: f64) -> DensitySolution {
        DensitySolution {
            values: vec![],
            weighted: vec![],
            alpha,
            residual_control: res,
            residual_quiet: 0.0,
            source_norm: nrm,
            residual: res,
        }
    }

    #[test]
    fn pick_alpha_rules() {
        let one = [fake(0.5, 1.0, 1.0)];
        for s in [AlphaStrategy::LCorner, AlphaStrategy::Discrepancy { tau: 1e-9 }, AlphaStrategy::MinControlError] {
            assert_eq!(pick_alpha(&one, s).unwrap().alpha, 0.5);
        }
        let sweep = [fake(1.0, 0.5, 1.0), fake(0.1, 0.2, 2.0), fake(0.01, 0.1, 4.0)];
        let c = pick_alpha(&sweep, AlphaStrategy::Discrepancy { tau: 10.0 }).unwrap();
        assert_eq!((c.alpha, c.satisfied), (1.0, true));
        let c = pick_alpha(&sweep, AlphaStrategy::Discrepancy { tau: 0.15 }).unwrap();
        assert_eq!(c.alpha, 0.01);
        let c = pick_alpha(&sweep, AlphaStrategy::Discrepancy { tau: 1e-3 }).unwrap();
        assert_eq!((c.alpha, c.satisfied), (0.01, false));
        assert_eq!(pick_alpha(&sweep, AlphaStrategy::Fixed { alpha: 0.1 }).unwrap().index, Some(1));
        assert!(pick_alpha(&[], AlphaStrategy::LCorner).is_err());
    }

    #[test]
    fn l_corner_finds_synthetic_corner() {
        // nearly horizontal leg from (10, 0) to (0, 0.1), then nearly vertical leg upward
        let mut pts: Vec<(f64, f64)> = (0..=10).map(|i| (10.0 - i as f64, 0.01 * i as f64)).collect();
        pts.extend((1..10).map(|i| (-0.01 * i as f64, 0.1 + i as f64)));
        assert_eq!(l_corner(&pts), 10);
    }

    #[test]
    fn sweep_csv_has_one_row_per_alpha() {
        let sweep = [fake(1.0, 0.5, 1.0), fake(0.1, 0.2, 2.0)];
        let mut buf = Vec::new();
        write_sweep_csv(&sweep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("alpha,residual,residual_control,residual_quiet,source_norm\n"));
    }

    #[test]
    fn adjoint_identity_on_assembled_operator() {
        let mesh = |id, shift: f64, n: usize| {
            let mut m = SurfaceMesh {
                id,
                nodes: vec![],
                normals: vec![],
                weights: vec![],
                frames: vec![],
                thetas: vec![],
                n_azimuthal: 1,
            };
            for i in 0..n {
                let t = i as f64 * 0.7;
                m.nodes.push(Vec3::new(shift + 0.1 * i as f64, t.cos(), t.sin()));
                m.normals.push(Vec3::new(0.0, t.cos(), t.sin()));
                m.weights.push(0.2 + 0.01 * i as f64);
                m.frames.push(Frame {
                    meridian: Vec3::new(1.0, 0.0, 0.0),
                    azimuthal: Vec3::new(0.0, -t.sin(), t.cos()),
                });
                m.thetas.push(t);
            }
            m
        };
        let src = mesh(SurfaceId::Source, 0.0, 8);
        let a = mesh(SurfaceId::Control(0), 3.0, 6);
        let b = mesh(SurfaceId::Truncation, -4.0, 5);
        let op = assemble(&src, &[Target::control(&a), Target::quiet(&b, 0.01)], &KernelParams::new(1.0)).unwrap();
        let mut rng = Lcg(9);
        for _ in 0..20 {
            let x: Vec<c64> = (0..8).map(|_| rng.c()).collect();
            let y: Vec<c64> = (0..11).map(|_| rng.c()).collect();
            let kx = op.apply(&x).unwrap();
            let ky = op.adjoint_apply(&y).unwrap();
            let lhs = crate::operator::inner(&kx, &y);
            let rhs = crate::operator::inner(&x, &ky);
            assert!((lhs - rhs).norm() <= 1e-13 * norm(&kx) * norm(&y));
        }
    }
}
