//! End-to-end run: meshes, operator, regularized density, error report, and
//! file exports. Each stage tags its errors with the stage name.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64 as c64;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::feasibility::{build_current, exs_report, ExsReport, MagneticCurrent};
use crate::field::{control_error, evaluate, quiet_error, trace_eb, write_grid_csv, ControlError, QuietReport, WallSampling};
use crate::geometry::{
    make_antenna_mesh, make_control_quadrature, make_enclosure_mesh, write_mesh_csv, AntennaGeometry, AuxiliarySurfaces,
    ControlRegion, EnclosureKind, EnclosureResolution, SurfaceMesh, Vec3, WaveParameters,
};
use crate::kernels::KernelParams;
use crate::modes::{field_ex, ModeSpec};
use crate::operator::{assemble, BlockOperator, BlockRole, Target};
use crate::solver::{factorize, geometric_alphas, pick_alpha, AlphaStrategy, DensitySolution, Svd, TikhonovProblem};

/// Meshes and physical inputs of one run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub wave: WaveParameters,
    pub kernel: KernelParams,
    pub modes: Vec<ModeSpec>,
    pub antenna_geometry: AntennaGeometry,
    pub aux: AuxiliarySurfaces,
    pub source: SurfaceMesh,
    pub enclosures: Vec<SurfaceMesh>,
    pub truncation: SurfaceMesh,
    /// Control shells with populated volume quadrature.
    pub regions: Vec<ControlRegion>,
}

impl Problem {
    pub fn build(config: &RunConfig) -> Result<Self> {
        Self::build_inner(config).map_err(|e| e.in_stage("geometry"))
    }

    fn build_inner(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let wave = config.wave_parameters()?;
        let kernel = config.kernel_params()?;
        let modes = config.mode_specs()?;
        let aux = config.auxiliary_surfaces()?;
        let m = &config.mesh;
        let source = make_enclosure_mesh(
            &aux,
            EnclosureKind::Source,
            EnclosureResolution {
                straight: m.source_straight,
                cap: m.source_cap,
                azimuthal: m.azimuthal,
            },
        )?;
        let enclosures = (0..aux.control_regions.len())
            .map(|i| {
                make_enclosure_mesh(
                    &aux,
                    EnclosureKind::Control(i),
                    EnclosureResolution {
                        straight: m.control_straight,
                        cap: m.control_cap,
                        azimuthal: m.azimuthal,
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let truncation = make_enclosure_mesh(
            &aux,
            EnclosureKind::Truncation,
            EnclosureResolution {
                straight: m.truncation_straight,
                cap: m.truncation_cap,
                azimuthal: m.azimuthal,
            },
        )?;
        let regions = aux
            .control_regions
            .iter()
            .map(|r| make_control_quadrature(r, m.control_r, m.control_theta, m.control_x))
            .collect::<Result<Vec<_>>>()?;
        aux.verify_nodewise(&source, &enclosures, &regions, &truncation)?;
        Ok(Self {
            config: config.clone(),
            wave,
            kernel,
            modes,
            antenna_geometry: config.antenna_geometry(),
            aux,
            source,
            enclosures,
            truncation,
            regions,
        })
    }

    pub fn antenna_mesh(&self) -> Result<SurfaceMesh> {
        make_antenna_mesh(&self.antenna_geometry, self.config.mesh.antenna_axial, self.config.mesh.azimuthal)
    }

    pub fn assemble(&self) -> Result<BlockOperator> {
        let mut targets: Vec<Target<'_>> = self.enclosures.iter().map(Target::control).collect();
        targets.push(Target::quiet(&self.truncation, self.config.surfaces.quiet_weight));
        assemble(&self.source, &targets, &self.kernel).map_err(|e| e.in_stage("operator"))
    }

    /// Stacked weighted right-hand side: `-E_x` on control blocks, zero on quiet blocks.
    pub fn rhs(&self, op: &BlockOperator) -> Result<Vec<c64>> {
        let mut values = vec![c64::new(0.0, 0.0); op.nrows()];
        for (b, blk) in op.blocks.iter().enumerate() {
            if blk.role != BlockRole::Control {
                continue;
            }
            let mesh = &self.enclosures[b];
            for (i, p) in blk.rows.clone().zip(&mesh.nodes) {
                values[i] = -field_ex(&self.modes, *p)?;
            }
        }
        op.scale_traces(&values)
    }

    /// Control-region errors of a density, one entry per region.
    pub fn control_errors(&self, density: &[c64], with_gradient: bool) -> Result<Vec<ControlError>> {
        self.regions
            .iter()
            .map(|r| {
                let grid = evaluate(density, &self.source, &r.nodes, &self.kernel, with_gradient)?;
                if with_gradient {
                    control_error(&grid, &r.weights, &self.modes)
                } else {
                    linf_only(&grid.values, r, &self.modes)
                }
            })
            .collect()
    }

    pub fn quiet_report(&self, density: &[c64]) -> Result<QuietReport> {
        quiet_error(
            density,
            &self.source,
            &self.kernel,
            self.aux.waveguide_radius,
            self.aux.truncation_half_length,
            WallSampling {
                n_axial: self.config.mesh.wall_axial,
                n_azimuthal: self.config.mesh.wall_azimuthal,
            },
        )
    }

    /// Largest per-region relative `L^inf` error.
    pub fn linf_rel(&self, density: &[c64]) -> Result<f64> {
        Ok(self
            .regions
            .iter()
            .map(|r| {
                let u = evaluate(density, &self.source, &r.nodes, &self.kernel, false)?.values;
                Ok(linf_only(&u, r, &self.modes)?.linf_rel)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max))
    }
}

fn linf_only(u: &[c64], region: &ControlRegion, modes: &[ModeSpec]) -> Result<ControlError> {
    let mut max_err: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for (p, u) in region.nodes.iter().zip(u) {
        let e = field_ex(modes, *p)?;
        max_err = max_err.max((u + e).norm());
        max_ref = max_ref.max(e.norm());
    }
    let linf_rel = if max_ref > 0.0 {
        max_err / max_ref
    } else if max_err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ControlError {
        h1: f64::NAN,
        h1_reference: f64::NAN,
        linf_rel,
        max_reference: max_ref,
        rms_reference: f64::NAN,
    })
}

/// Per-region entry of the metrics report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionMetrics {
    pub index: usize,
    pub linf_rel: f64,
    pub h1_control: f64,
    pub h1_control_rel: f64,
}

/// Deterministic metrics of a solve; key order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub alpha: f64,
    pub strategy: String,
    pub alpha_rule_satisfied: bool,
    pub linf_rel: f64,
    pub h1_control: f64,
    pub h1_control_rel: f64,
    pub l2_quiet: f64,
    pub l2_quiet_rel: f64,
    pub wall_rms_half_l: f64,
    pub wall_rms_two_l: f64,
    pub residual_control: f64,
    pub residual_quiet: f64,
    pub source_norm: f64,
    pub condition_estimate: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub source_unknowns: usize,
    pub target_rows: usize,
    pub min_separation: f64,
    pub k: f64,
    pub omega: f64,
    pub frequency_interpretation: String,
    pub regions: Vec<RegionMetrics>,
}

/// Wall-clock seconds per stage; kept apart from [`Metrics`] so the metrics
/// file is reproducible byte for byte.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub geometry: f64,
    pub assembly: f64,
    pub factorization: f64,
    pub sweep: f64,
    pub evaluation: f64,
    pub total: f64,
}

/// Everything a solve produces.
pub struct SolveOutcome {
    pub problem: Problem,
    pub operator: BlockOperator,
    pub svd: Svd,
    pub sweep: Vec<DensitySolution>,
    /// `L^inf` error of every sweep member.
    pub sweep_linf: Vec<f64>,
    pub density: DensitySolution,
    pub control: Vec<ControlError>,
    pub quiet: QuietReport,
    pub metrics: Metrics,
    pub timings: Timings,
}

/// Runs the pipeline. `alpha_override` replaces the configured strategy with a fixed value.
pub fn solve(config: &RunConfig, alpha_override: Option<f64>) -> Result<SolveOutcome> {
    let t0 = Instant::now();
    let problem = Problem::build(config)?;
    let t_geom = t0.elapsed().as_secs_f64();

    let t = Instant::now();
    let op = problem.assemble()?;
    let b = problem.rhs(&op).map_err(|e| e.in_stage("operator"))?;
    let t_asm = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let svd = factorize(&op).map_err(|e| e.in_stage("solver"))?;
    let t_fac = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let s = &config.solver;
    let alphas = geometric_alphas(s.alpha_max, s.alpha_min, s.alpha_count).map_err(|e| e.in_stage("solver"))?;
    let prob = TikhonovProblem::new(&op, &svd, b).map_err(|e| e.in_stage("solver"))?;
    let sweep = prob.sweep(&alphas).map_err(|e| e.in_stage("solver"))?;
    let sweep_linf = sweep
        .iter()
        .map(|d| problem.linf_rel(&d.values))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("field"))?;
    let strategy = match alpha_override {
        Some(alpha) => AlphaStrategy::Fixed { alpha },
        None => s.strategy().map_err(|e| e.in_stage("solver"))?,
    };
    let (density, satisfied) = match strategy {
        AlphaStrategy::MinControlError => {
            let i = crate::solver::argmin(sweep_linf.iter().copied());
            (sweep[i].clone(), true)
        }
        other => {
            let choice = pick_alpha(&sweep, other).map_err(|e| e.in_stage("solver"))?;
            let d = match choice.index {
                Some(i) => sweep[i].clone(),
                None => prob.solve(choice.alpha).map_err(|e| e.in_stage("solver"))?,
            };
            (d, choice.satisfied)
        }
    };
    let t_sweep = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let control = problem
        .control_errors(&density.values, true)
        .map_err(|e| e.in_stage("field"))?;
    let quiet = problem.quiet_report(&density.values).map_err(|e| e.in_stage("field"))?;
    let t_eval = t.elapsed().as_secs_f64();

    let rms_ref = control
        .iter()
        .map(|c| c.rms_reference)
        .fold(0.0, f64::max);
    let h1: f64 = control.iter().map(|c| c.h1 * c.h1).sum::<f64>().sqrt();
    let h1_ref: f64 = control.iter().map(|c| c.h1_reference * c.h1_reference).sum::<f64>().sqrt();
    let metrics = Metrics {
        alpha: density.alpha,
        strategy: strategy_name(&strategy),
        alpha_rule_satisfied: satisfied,
        linf_rel: control.iter().map(|c| c.linf_rel).fold(0.0, f64::max),
        h1_control: h1,
        h1_control_rel: if h1_ref > 0.0 { h1 / h1_ref } else { 0.0 },
        l2_quiet: quiet.l2_wall,
        l2_quiet_rel: if rms_ref > 0.0 { quiet.rms_wall / rms_ref } else { 0.0 },
        wall_rms_half_l: quiet.rms_half_l,
        wall_rms_two_l: quiet.rms_two_l,
        residual_control: density.residual_control,
        residual_quiet: density.residual_quiet,
        source_norm: density.source_norm,
        condition_estimate: svd.condition(),
        sigma_max: svd.sigma_max(),
        sigma_min: svd.sigma_min(),
        source_unknowns: op.ncols(),
        target_rows: op.nrows(),
        min_separation: op.min_distance,
        k: problem.wave.k(),
        omega: problem.wave.omega(),
        frequency_interpretation: config.wave.frequency_interpretation.to_string(),
        regions: control
            .iter()
            .enumerate()
            .map(|(index, c)| RegionMetrics {
                index,
                linf_rel: c.linf_rel,
                h1_control: c.h1,
                h1_control_rel: c.h1_rel(),
            })
            .collect(),
    };
    let timings = Timings {
        geometry: t_geom,
        assembly: t_asm,
        factorization: t_fac,
        sweep: t_sweep,
        evaluation: t_eval,
        total: t0.elapsed().as_secs_f64(),
    };
    log::info!(
        "alpha {:e}: linf_rel {:.3e}, quiet_rel {:.3e}, {} unknowns, {:.1} s",
        metrics.alpha,
        metrics.linf_rel,
        metrics.l2_quiet_rel,
        metrics.source_unknowns,
        timings.total
    );
    Ok(SolveOutcome {
        problem,
        operator: op,
        svd,
        sweep,
        sweep_linf,
        density,
        control,
        quiet,
        metrics,
        timings,
    })
}

fn strategy_name(s: &AlphaStrategy) -> String {
    match s {
        AlphaStrategy::Fixed { .. } => "fixed",
        AlphaStrategy::Discrepancy { .. } => "discrepancy",
        AlphaStrategy::LCorner => "l_corner",
        AlphaStrategy::MinControlError => "min_control_error",
    }
    .to_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

impl SolveOutcome {
    /// Writes `metrics.json`, `timings.json`, `density.csv`, `sweep.csv` and `mesh.csv`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("metrics.json"), &self.metrics)?;
        write_json(&dir.join("timings.json"), &self.timings)?;
        let mut w = create(&dir.join("density.csv"))?;
        write_density_csv(&self.problem.source, &self.density.values, &mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("sweep.csv"))?;
        crate::solver::write_sweep_csv(&self.sweep, &mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("mesh.csv"))?;
        let mut meshes: Vec<&SurfaceMesh> = vec![&self.problem.source];
        meshes.extend(self.problem.enclosures.iter());
        meshes.push(&self.problem.truncation);
        write_mesh_csv(&meshes, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_matrix_dump(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        self.operator.write_dump(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Writes `x,y,z,theta,re_v,im_v` for each source node.
pub fn write_density_csv<W: Write>(source: &SurfaceMesh, values: &[c64], mut out: W) -> Result<()> {
    if values.len() != source.len() {
        return Err(Error::DimensionMismatch {
            context: "density vs source mesh",
            expected: source.len(),
            got: values.len(),
        });
    }
    writeln!(out, "x,y,z,theta,re_v,im_v")?;
    for ((p, t), v) in source.nodes.iter().zip(&source.thetas).zip(values) {
        writeln!(out, "{},{},{},{},{},{}", p.x, p.y, p.z, t, v.re, v.im)?;
    }
    Ok(())
}

/// Reads a density written by [`write_density_csv`] and checks that its nodes
/// match `source`.
pub fn read_density_csv(path: &Path, source: &SurfaceMesh) -> Result<Vec<c64>> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("density file {} not found", path.display()),
        )));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "x,y,z,theta,re_v,im_v" {
        return Err(Error::Parse(format!("unexpected density header `{header}`")));
    }
    let mut values = Vec::with_capacity(source.len());
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("density row {}: {e}", row + 1)))?;
        if f.len() != 6 {
            return Err(Error::Parse(format!("density row {}: expected 6 columns", row + 1)));
        }
        let i = values.len();
        let node = source
            .nodes
            .get(i)
            .ok_or_else(|| Error::Parse(format!("density has more rows than the {} source nodes", source.len())))?;
        let p = Vec3::new(f[0], f[1], f[2]);
        if (p - *node).norm() > 1e-9 * (1.0 + node.norm()) {
            return Err(Error::Parse(format!("density row {} does not match the source mesh", row + 1)));
        }
        values.push(c64::new(f[4], f[5]));
    }
    if values.len() != source.len() {
        return Err(Error::DimensionMismatch {
            context: "density file rows",
            expected: source.len(),
            got: values.len(),
        });
    }
    Ok(values)
}

/// Cross-section of the field at one axial station.
pub struct Slice {
    pub x: f64,
    pub points: Vec<Vec3>,
    pub u: Vec<c64>,
    pub e: Vec<c64>,
}

/// Polar grids over the control annulus at each `x` (the annulus of the region
/// containing `x`, else the first region).
pub fn slices(problem: &Problem, density: &[c64], xs: &[f64]) -> Result<Vec<Slice>> {
    let out = &problem.config.output;
    xs.iter()
        .map(|&x| {
            let region = problem
                .aux
                .control_regions
                .iter()
                .find(|r| (x - r.x_center).abs() <= r.x_half)
                .unwrap_or(&problem.aux.control_regions[0]);
            let mut points = Vec::with_capacity(out.grid_radial * out.grid_azimuthal);
            for i in 0..out.grid_radial {
                let r = region.r_inner + (region.r_outer - region.r_inner) * i as f64 / (out.grid_radial - 1) as f64;
                for j in 0..out.grid_azimuthal {
                    let t = 2.0 * std::f64::consts::PI * j as f64 / out.grid_azimuthal as f64;
                    points.push(Vec3::cylindrical(x, r, t));
                }
            }
            let u = evaluate(density, &problem.source, &points, &problem.kernel, false)?.values;
            let e = points
                .iter()
                .map(|p| field_ex(&problem.modes, *p))
                .collect::<Result<Vec<_>>>()?;
            Ok(Slice { x, points, u, e })
        })
        .collect()
}

pub fn slice_file_name(x: f64) -> String {
    format!("grid_x{x}.csv")
}

pub fn write_slices(dir: &Path, slices: &[Slice]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    slices
        .iter()
        .map(|s| {
            let path = dir.join(slice_file_name(s.x));
            let mut w = create(&path)?;
            write_grid_csv(&s.points, &s.u, &s.e, &mut w)?;
            w.flush()?;
            Ok(path)
        })
        .collect()
}

/// Magnetic current on the configured antenna and its discrepancy report.
pub fn magnetic_current(problem: &Problem, density: &[c64]) -> Result<(SurfaceMesh, MagneticCurrent, ExsReport)> {
    let antenna = problem.antenna_mesh()?;
    let eb = trace_eb(density, &problem.source, &antenna, &problem.antenna_geometry, &problem.kernel)?;
    let current = build_current(&eb, &antenna, &problem.antenna_geometry)?;
    let report = exs_report(&eb, &antenna, &problem.antenna_geometry, None)?;
    Ok((antenna, current, report))
}
