//! Weighted collocation matrix of the double-layer operator from the source
//! surface to a stack of target surfaces.
//!
//! Row `i` is scaled by `gain * sqrt(w_i)` and column `j` by `sqrt(w_j)`, so
//! Euclidean inner products of stacked vectors are the (gain-weighted) `L^2`
//! inner products on the targets and the conjugate transpose is the discrete
//! adjoint.

use std::ops::Range;

use faer::Mat;
use num_complex::Complex64 as c64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{min_distance, SurfaceId, SurfaceMesh};
use crate::kernels::{dlp_unchecked, KernelParams};

/// Minimum source-target distance as a fraction of the wavelength.
pub const SEPARATION_FRACTION: f64 = 1e-3;

/// Role of a row block in the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    /// The density should reproduce `-E_x` here.
    Control,
    /// The density should produce a vanishing field here.
    Quiet,
}

/// A target surface together with its role and row gain.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub mesh: &'a SurfaceMesh,
    pub role: BlockRole,
    /// Extra amplitude weight of the block in the target inner product.
    pub gain: f64,
}

impl<'a> Target<'a> {
    pub fn control(mesh: &'a SurfaceMesh) -> Self {
        Self {
            mesh,
            role: BlockRole::Control,
            gain: 1.0,
        }
    }

    pub fn quiet(mesh: &'a SurfaceMesh, gain: f64) -> Self {
        Self {
            mesh,
            role: BlockRole::Quiet,
            gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: SurfaceId,
    pub role: BlockRole,
    pub rows: Range<usize>,
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub matrix: Mat<c64>,
    pub row_scale: Vec<f64>,
    pub col_scale: Vec<f64>,
    pub blocks: Vec<Block>,
    pub min_distance: f64,
}

/// Assembles the stacked operator. Entries are computed independently, so
/// the result does not depend on the thread count.
pub fn assemble(source: &SurfaceMesh, targets: &[Target<'_>], params: &KernelParams) -> Result<BlockOperator> {
    if source.is_empty() {
        return Err(Error::Empty("source mesh"));
    }
    if targets.is_empty() {
        return Err(Error::Empty("target list"));
    }
    let wavelength = if params.k > 0.0 {
        2.0 * std::f64::consts::PI / params.k
    } else {
        f64::INFINITY
    };
    let threshold = if wavelength.is_finite() { SEPARATION_FRACTION * wavelength } else { 0.0 };
    let mut min_dist = f64::INFINITY;
    for t in targets {
        if !(t.gain > 0.0 && t.gain.is_finite()) {
            return Err(Error::invalid(format!("gain of block {}", t.mesh.id), "must be positive"));
        }
        let d = min_distance(&t.mesh.nodes, &source.nodes);
        if !(d > threshold) {
            return Err(Error::Separation {
                source_id: source.id.to_string(),
                target_id: t.mesh.id.to_string(),
                distance: d,
                threshold,
            });
        }
        min_dist = min_dist.min(d);
    }

    let mut blocks = Vec::with_capacity(targets.len());
    let mut row_scale = Vec::new();
    let mut row_nodes = Vec::new();
    for t in targets {
        let start = row_scale.len();
        row_scale.extend(t.mesh.weights.iter().map(|w| t.gain * w.sqrt()));
        row_nodes.extend_from_slice(&t.mesh.nodes);
        blocks.push(Block {
            id: t.mesh.id.clone(),
            role: t.role,
            rows: start..row_scale.len(),
            gain: t.gain,
        });
    }
    let col_scale: Vec<f64> = source.weights.iter().map(|w| w.sqrt()).collect();
    let (m, n) = (row_scale.len(), col_scale.len());

    let columns: Vec<Vec<c64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = source.nodes[j];
            let nu = source.normals[j];
            let cs = col_scale[j];
            row_nodes
                .iter()
                .zip(&row_scale)
                .map(|(x, rs)| dlp_unchecked(*x, y, nu, params) * (rs * cs))
                .collect()
        })
        .collect();
    let mut matrix = Mat::<c64>::zeros(m, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            matrix[(i, j)] = *v;
        }
    }
    if let Some((i, j)) = first_non_finite(&matrix) {
        return Err(Error::invalid("operator entry", format!("non-finite value at ({i}, {j})")));
    }
    Ok(BlockOperator {
        matrix,
        row_scale,
        col_scale,
        blocks,
        min_distance: min_dist,
    })
}

fn first_non_finite(m: &Mat<c64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Some((i, j));
            }
        }
    }
    None
}

impl BlockOperator {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `K x` for a weighted density `x`.
    pub fn apply(&self, x: &[c64]) -> Result<Vec<c64>> {
        check_len("apply", self.ncols(), x.len())?;
        let mut out = vec![c64::new(0.0, 0.0); self.nrows()];
        for (j, xj) in x.iter().enumerate() {
            if *xj == c64::new(0.0, 0.0) {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(i, j)] * xj;
            }
        }
        Ok(out)
    }

    /// `K^* y` for stacked weighted traces `y`.
    pub fn adjoint_apply(&self, y: &[c64]) -> Result<Vec<c64>> {
        check_len("adjoint_apply", self.nrows(), y.len())?;
        Ok((0..self.ncols())
            .map(|j| {
                let mut acc = c64::new(0.0, 0.0);
                for (i, yi) in y.iter().enumerate() {
                    acc += self.matrix[(i, j)].conj() * yi;
                }
                acc
            })
            .collect())
    }

    /// Physical density values to weighted coordinates.
    pub fn scale_density(&self, v: &[c64]) -> Result<Vec<c64>> {
        check_len("scale_density", self.ncols(), v.len())?;
        Ok(v.iter().zip(&self.col_scale).map(|(v, s)| v * s).collect())
    }

    pub fn unscale_density(&self, x: &[c64]) -> Result<Vec<c64>> {
        check_len("unscale_density", self.ncols(), x.len())?;
        Ok(x.iter().zip(&self.col_scale).map(|(v, s)| v / s).collect())
    }

    /// Point values on the targets to weighted stacked coordinates.
    pub fn scale_traces(&self, values: &[c64]) -> Result<Vec<c64>> {
        check_len("scale_traces", self.nrows(), values.len())?;
        Ok(values.iter().zip(&self.row_scale).map(|(v, s)| v * s).collect())
    }

    pub fn unscale_traces(&self, y: &[c64]) -> Result<Vec<c64>> {
        check_len("unscale_traces", self.nrows(), y.len())?;
        Ok(y.iter().zip(&self.row_scale).map(|(v, s)| v / s).collect())
    }

    pub fn block_slice<'v>(&self, y: &'v [c64], block: usize) -> &'v [c64] {
        &y[self.blocks[block].rows.clone()]
    }

    /// Splits a stacked vector into one vector per block.
    pub fn split(&self, y: &[c64]) -> Result<Vec<Vec<c64>>> {
        check_len("split", self.nrows(), y.len())?;
        Ok(self.blocks.iter().map(|b| y[b.rows.clone()].to_vec()).collect())
    }

    pub fn concat(&self, parts: &[Vec<c64>]) -> Result<Vec<c64>> {
        check_len("concat blocks", self.blocks.len(), parts.len())?;
        let mut out = Vec::with_capacity(self.nrows());
        for (b, p) in self.blocks.iter().zip(parts) {
            check_len("concat block length", b.rows.len(), p.len())?;
            out.extend_from_slice(p);
        }
        Ok(out)
    }

    /// Writes the matrix as: magic `WGNKMAT1`, `u64` rows, cols and block
    /// count, then per block `u64` start, end, `u32` name length and UTF-8
    /// name, then row-major `(re, im)` pairs of little-endian `f64`.
    pub fn write_dump<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"WGNKMAT1")?;
        for v in [self.nrows(), self.ncols(), self.blocks.len()] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for b in &self.blocks {
            out.write_all(&(b.rows.start as u64).to_le_bytes())?;
            out.write_all(&(b.rows.end as u64).to_le_bytes())?;
            let name = b.id.to_string();
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
        }
        let mut row = Vec::with_capacity(16 * self.ncols());
        for i in 0..self.nrows() {
            row.clear();
            for j in 0..self.ncols() {
                let v = self.matrix[(i, j)];
                row.extend_from_slice(&v.re.to_le_bytes());
                row.extend_from_slice(&v.im.to_le_bytes());
            }
            out.write_all(&row)?;
        }
        Ok(())
    }
}

/// Euclidean inner product `<a, b> = sum a_i conj(b_i)`.
pub fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { context, expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Frame, Vec3};
    use crate::kernels::dlp_kernel;

    fn single(id: SurfaceId, p: Vec3, n: Vec3, w: f64) -> SurfaceMesh {
        SurfaceMesh {
            id,
            nodes: vec![p],
            normals: vec![n],
            weights: vec![w],
            frames: vec![Frame {
                meridian: Vec3::new(1.0, 0.0, 0.0),
                azimuthal: Vec3::new(0.0, 0.0, 1.0),
            }],
            thetas: vec![0.0],
            n_azimuthal: 1,
        }
    }

    fn cloud(id: SurfaceId, n: usize, shift: f64, seed: u64) -> SurfaceMesh {
        let mut s = seed;
        let mut rnd = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64)
        };
        let mut mesh = single(id, Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), 1.0);
        mesh.nodes.clear();
        mesh.normals.clear();
        mesh.weights.clear();
        for _ in 0..n {
            mesh.nodes.push(Vec3::new(shift + rnd(), rnd(), rnd()));
            mesh.normals.push(Vec3::new(rnd() - 0.5, rnd() - 0.5, rnd() - 0.5).normalized());
            mesh.weights.push(0.1 + rnd());
        }
        mesh
    }

    #[test]
    fn single_entry_is_scaled_kernel() {
        let p = KernelParams::new(1.2);
        let src = single(SurfaceId::Source, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 0.3);
        let tgt = single(SurfaceId::Control(0), Vec3::new(0.5, 0.4, 0.1), Vec3::new(1.0, 0.0, 0.0), 0.7);
        let op = assemble(&src, &[Target::control(&tgt)], &p).unwrap();
        let k = dlp_kernel(tgt.nodes[0], src.nodes[0], src.normals[0], &p).unwrap();
        assert!((op.matrix[(0, 0)] - k * (0.7f64.sqrt() * 0.3f64.sqrt())).norm() < 1e-16);
    }

    #[test]
    fn blocks_partition_rows_and_round_trip() {
        let p = KernelParams::new(1.0);
        let src = cloud(SurfaceId::Source, 7, 0.0, 1);
        let a = cloud(SurfaceId::Control(0), 5, 3.0, 2);
        let b = cloud(SurfaceId::Truncation, 4, -3.0, 3);
        let op = assemble(&src, &[Target::control(&a), Target::quiet(&b, 0.1)], &p).unwrap();
        assert_eq!(op.blocks[0].rows, 0..5);
        assert_eq!(op.blocks[1].rows, 5..9);
        let y: Vec<c64> = (0..9).map(|i| c64::new(i as f64, -(i as f64))).collect();
        assert_eq!(op.concat(&op.split(&y).unwrap()).unwrap(), y);
        assert!(op.apply(&[c64::new(0.0, 0.0); 6]).is_err());
        assert!(op.apply(&[c64::new(0.0, 0.0); 7]).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(op.adjoint_apply(&[c64::new(0.0, 0.0); 9]).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn apply_equals_direct_summation() {
        let p = KernelParams::new(0.8);
        let src = cloud(SurfaceId::Source, 9, 0.0, 4);
        let tgt = cloud(SurfaceId::Control(0), 6, 2.5, 5);
        let op = assemble(&src, &[Target::control(&tgt)], &p).unwrap();
        let ones = op.scale_density(&[c64::new(1.0, 0.0); 9]).unwrap();
        let traces = op.unscale_traces(&op.apply(&ones).unwrap()).unwrap();
        for (i, x) in tgt.nodes.iter().enumerate() {
            let mut direct = c64::new(0.0, 0.0);
            for j in 0..src.len() {
                direct += dlp_kernel(*x, src.nodes[j], src.normals[j], &p).unwrap() * src.weights[j];
            }
            assert!((traces[i] - direct).norm() <= 1e-14 * direct.norm());
        }
    }

    #[test]
    fn too_close_surfaces_rejected() {
        let p = KernelParams::new(1.0);
        let src = single(SurfaceId::Source, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 0.3);
        let tgt = single(SurfaceId::Control(0), Vec3::new(1e-4, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 0.7);
        assert!(matches!(
            assemble(&src, &[Target::control(&tgt)], &p),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn dump_layout() {
        let p = KernelParams::new(1.0);
        let src = cloud(SurfaceId::Source, 3, 0.0, 6);
        let tgt = cloud(SurfaceId::Control(0), 2, 3.0, 7);
        let op = assemble(&src, &[Target::control(&tgt)], &p).unwrap();
        let mut buf = Vec::new();
        op.write_dump(&mut buf).unwrap();
        let header = 8 + 24 + 16 + 4 + "control0".len();
        assert_eq!(buf.len(), header + 2 * 3 * 16);
        assert_eq!(&buf[..8], b"WGNKMAT1");
        let off = header + 16 * 4; // row 1, column 1
        let re = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        assert_eq!(re, op.matrix[(1, 1)].re);
    }
}
