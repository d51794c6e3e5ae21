//! Batch driver: run benchmarks across thickness/refinement grids and emit
//! CSV tables, optional VTK snapshots and a plot script.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use crate::analysis::{self, ConvergenceTable, ErrorReport};
use crate::error::{Error, Result};
use crate::maxent::{compute_nodal_spacing, MaxentConfig, NodalSpacing, NodeSet};
use crate::mesh::{
    generate_disk_mesh, generate_parallelogram_mesh, generate_square_mesh, read_mesh, MeshPattern,
    TriangulationMesh,
};
use crate::problems::{
    benchmark_material, circle_problem, parallelogram_problem, patch_problem, square_problem,
    BenchmarkProblem, PlateMaterial, ProblemKind,
};
use crate::solve::{apply_dirichlet, solve_spd};
use crate::vanp::{
    assemble_system, build_cell_data, build_projection_tables, essential_conditions,
    recover_nodal_shear, QuadratureScheme, Solution,
};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternChoice {
    Structured,
    Unstructured,
}

/// Fully resolved run parameters (flags override file values).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub t_over_l: Vec<f64>,
    pub gamma: f64,
    pub quadrature: QuadratureScheme,
    pub levels: usize,
    pub mesh_files: Vec<PathBuf>,
    pub pattern: PatternChoice,
    pub skew_deg: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub vtk: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: ProblemKind::Patch,
            t_over_l: vec![0.1, 0.01, 0.001, 0.0001],
            gamma: 2.0,
            quadrature: QuadratureScheme::Qc3,
            levels: 3,
            mesh_files: Vec::new(),
            pattern: PatternChoice::Structured,
            skew_deg: 45.0,
            seed: 0,
            out: None,
            vtk: None,
        }
    }
}

/// JSON file image of the config; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub t_over_l: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub quadrature: Option<String>,
    pub levels: Option<usize>,
    pub mesh: Option<Vec<String>>,
    pub mesh_pattern: Option<String>,
    pub skew_deg: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub vtk: Option<String>,
}

pub fn parse_problem(s: &str) -> Result<ProblemKind> {
    match s {
        "patch" => Ok(ProblemKind::Patch),
        "circle" => Ok(ProblemKind::Circle),
        "square" => Ok(ProblemKind::Square),
        "parallelogram" => Ok(ProblemKind::Parallelogram),
        _ => Err(Error::Config(format!("unknown problem `{s}`"))),
    }
}

pub fn parse_quadrature(s: &str) -> Result<QuadratureScheme> {
    match s {
        "qc3" => Ok(QuadratureScheme::Qc3),
        "st3" => Ok(QuadratureScheme::St3),
        "st6" => Ok(QuadratureScheme::St6),
        _ => Err(Error::Config(format!("unknown quadrature `{s}`"))),
    }
}

pub fn parse_pattern(s: &str) -> Result<PatternChoice> {
    match s {
        "structured" => Ok(PatternChoice::Structured),
        "unstructured" => Ok(PatternChoice::Unstructured),
        _ => Err(Error::Config(format!("unknown mesh pattern `{s}`"))),
    }
}

impl RunConfig {
    /// Apply a JSON config file underneath already-set flags: flags win.
    pub fn merge_file(mut self, file: &FileConfig, overridden: &ConfigOverrides) -> Result<Self> {
        if let (false, Some(p)) = (overridden.problem, file.problem.as_deref()) {
            self.problem = parse_problem(p)?;
        }
        if let (false, Some(t)) = (overridden.t_over_l, file.t_over_l.as_ref()) {
            self.t_over_l = t.clone();
        }
        if let (false, Some(g)) = (overridden.gamma, file.gamma) {
            self.gamma = g;
        }
        if let (false, Some(q)) = (overridden.quadrature, file.quadrature.as_deref()) {
            self.quadrature = parse_quadrature(q)?;
        }
        if let (false, Some(l)) = (overridden.levels, file.levels) {
            self.levels = l;
        }
        if let (false, Some(m)) = (overridden.mesh_files, file.mesh.as_ref()) {
            self.mesh_files = m.iter().map(PathBuf::from).collect();
        }
        if let (false, Some(p)) = (overridden.pattern, file.mesh_pattern.as_deref()) {
            self.pattern = parse_pattern(p)?;
        }
        if let (false, Some(s)) = (overridden.skew_deg, file.skew_deg) {
            self.skew_deg = s;
        }
        if let (false, Some(s)) = (overridden.seed, file.seed) {
            self.seed = s;
        }
        if let (false, Some(o)) = (overridden.out, file.out.as_deref()) {
            self.out = Some(PathBuf::from(o));
        }
        if let (false, Some(v)) = (overridden.vtk, file.vtk.as_deref()) {
            self.vtk = Some(PathBuf::from(v));
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_over_l.is_empty() {
            return Err(Error::Config("empty t/L list".into()));
        }
        for &t in &self.t_over_l {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("t/L = {t} outside (0, 1)")));
            }
        }
        if self.mesh_files.is_empty() && self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.skew_deg > 0.0 && self.skew_deg < 90.0) {
            return Err(Error::Config("skew angle outside (0, 90)".into()));
        }
        Ok(())
    }
}

/// Which fields were set on the command line (so file values cannot clobber
/// them).
#[derive(Debug, Default, Clone, Copy)]
pub struct ConfigOverrides {
    pub problem: bool,
    pub t_over_l: bool,
    pub gamma: bool,
    pub quadrature: bool,
    pub levels: bool,
    pub mesh_files: bool,
    pub pattern: bool,
    pub skew_deg: bool,
    pub seed: bool,
    pub out: bool,
    pub vtk: bool,
}

/// Cells per side for a refinement level of each benchmark family.
pub fn level_to_resolution(problem: ProblemKind, level: usize) -> usize {
    match problem {
        ProblemKind::Patch => level + 1,
        ProblemKind::Circle => level, // disk refinement index
        ProblemKind::Square => 1 << (level + 1),
        ProblemKind::Parallelogram => 1 << level,
    }
}

/// Build the integration mesh for one refinement level.
pub fn mesh_for_level(config: &RunConfig, level: usize) -> Result<TriangulationMesh> {
    if !config.mesh_files.is_empty() {
        let idx = level - 1;
        let path = config.mesh_files.get(idx).ok_or_else(|| {
            Error::Config(format!("no mesh file for level {level}"))
        })?;
        return read_mesh(path);
    }
    let n = level_to_resolution(config.problem, level);
    let pattern = match config.pattern {
        PatternChoice::Structured => MeshPattern::Structured,
        PatternChoice::Unstructured => MeshPattern::Perturbed {
            seed: config.seed.wrapping_add(level as u64),
        },
    };
    match config.problem {
        ProblemKind::Patch | ProblemKind::Square => generate_square_mesh(n, pattern),
        ProblemKind::Circle => Ok(generate_disk_mesh(n)),
        ProblemKind::Parallelogram => {
            generate_parallelogram_mesh(200.0, 100.0, config.skew_deg, n)
        }
    }
}

/// Characteristic length of the problem domain, used to turn t/L into t.
pub fn characteristic_length(problem: ProblemKind) -> f64 {
    match problem {
        // unit square side, unit disk radius
        ProblemKind::Patch | ProblemKind::Square | ProblemKind::Circle => 1.0,
        // unit thickness plate: t/L is not a free parameter
        ProblemKind::Parallelogram => 100.0,
    }
}

pub fn problem_for(kind: ProblemKind, material: &PlateMaterial, skew_deg: f64) -> BenchmarkProblem {
    match kind {
        ProblemKind::Patch => patch_problem(),
        ProblemKind::Circle => circle_problem(material),
        ProblemKind::Square => square_problem(material),
        ProblemKind::Parallelogram => parallelogram_problem(skew_deg),
    }
}

/// Everything reusable across a thickness sweep at one refinement level.
pub struct LevelContext {
    pub mesh: TriangulationMesh,
    pub std_spacing: NodalSpacing,
    pub enh_spacing: NodalSpacing,
    pub cells: Vec<crate::vanp::CellQuadData>,
    pub tables: crate::vanp::ProjectionTable,
    pub config: MaxentConfig,
    pub scheme: QuadratureScheme,
}

impl LevelContext {
    pub fn build(
        mesh: TriangulationMesh,
        gamma: f64,
        scheme: QuadratureScheme,
    ) -> Result<LevelContext> {
        let mesh = mesh.enhance_with_barycenters()?;
        let std_spacing = compute_nodal_spacing(&mesh, NodeSet::Standard)?;
        let enh_spacing = compute_nodal_spacing(&mesh, NodeSet::Enhanced)?;
        let config = MaxentConfig::with_gamma(gamma);
        let cells = build_cell_data(&mesh, &std_spacing, &enh_spacing, &config, scheme)?;
        let tables = build_projection_tables(&mesh, &cells)?;
        Ok(LevelContext {
            mesh,
            std_spacing,
            enh_spacing,
            cells,
            tables,
            config,
            scheme,
        })
    }

    /// Assemble, constrain and solve for one thickness.
    pub fn solve(&self, material: &PlateMaterial, problem: &BenchmarkProblem) -> Result<Solution> {
        let system = assemble_system(
            &self.mesh,
            material,
            problem,
            &self.tables,
            &self.cells,
            self.scheme,
        )?;
        let bc = essential_conditions(&self.mesh, &system.dof_map, problem);
        let reduced = apply_dirichlet(&system.matrix_upper(), &system.f, &bc)?;
        let full = solve_spd(&reduced)?;
        Ok(Solution::from_full(&system.dof_map, &full))
    }
}

/// One CSV row of results.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub problem: ProblemKind,
    pub t_over_l: f64,
    pub gamma: f64,
    pub quadrature: QuadratureScheme,
    pub level: usize,
    pub report: ErrorReport,
    /// Center deflection probe (parallelogram only).
    pub center_w: Option<f64>,
}

#[derive(Debug, Default)]
pub struct RunArtifacts {
    pub records: Vec<RunRecord>,
    pub summary: String,
    pub csv: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn records_to_csv(records: &[RunRecord], summary: &str) -> String {
    let mut out = String::from(
        "problem,t_over_L,gamma,quadrature,level,h,dofs,rel_L2,rel_H1,rel_s_nodal,runtime_s\n",
    );
    for r in records {
        let (l2, h1) = if r.report.rel_l2.is_finite() && r.problem != ProblemKind::Parallelogram {
            (r.report.rel_l2.to_string(), r.report.rel_h1.to_string())
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.problem.name(),
            r.t_over_l,
            r.gamma,
            r.quadrature.name(),
            r.level,
            r.report.h,
            r.report.dofs,
            l2,
            h1,
            fmt_opt(r.report.rel_s_nodal),
            r.report.runtime_s,
        );
    }
    for line in summary.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out
}

/// Execute a full (t/L, level) grid for one configuration.
pub fn run(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let levels: Vec<usize> = if config.mesh_files.is_empty() {
        (1..=config.levels).collect()
    } else {
        (1..=config.mesh_files.len()).collect()
    };
    let el = characteristic_length(config.problem);

    let mut records = Vec::new();
    let mut summary = String::new();
    for &level in &levels {
        let t0 = Instant::now();
        let base_mesh = mesh_for_level(config, level)?;
        let ctx = LevelContext::build(base_mesh, config.gamma, config.quadrature)?;
        let setup_s = t0.elapsed().as_secs_f64();

        let thicknesses: Vec<f64> = if config.problem == ProblemKind::Parallelogram {
            vec![1.0 / el] // unit thickness
        } else {
            config.t_over_l.clone()
        };
        for &tl in &thicknesses {
            let t1 = Instant::now();
            let material = benchmark_material(tl * el);
            let problem = problem_for(config.problem, &material, config.skew_deg);
            let solution = ctx.solve(&material, &problem)?;
            let runtime = setup_s / thicknesses.len() as f64 + t1.elapsed().as_secs_f64();

            let (report, center_w) = if problem.exact.is_some() {
                (
                    analysis::compute_error_norms(
                        &solution,
                        &problem,
                        &ctx.mesh,
                        &ctx.cells,
                        &ctx.tables,
                        &material,
                        runtime,
                    )?,
                    None,
                )
            } else {
                let center = plate_center(&ctx.mesh, config);
                let sample = analysis::sample_field(
                    &solution,
                    &ctx.mesh,
                    &ctx.std_spacing,
                    &ctx.enh_spacing,
                    &ctx.config,
                    &ctx.tables,
                    &material,
                    &[center],
                )?;
                (
                    ErrorReport {
                        h: ctx.mesh.h,
                        rel_l2: f64::NAN,
                        rel_h1: f64::NAN,
                        rel_s_nodal: None,
                        dofs: ctx.mesh.n_standard() + 2 * ctx.mesh.n_enhanced(),
                        runtime_s: runtime,
                    },
                    Some(sample[0].w),
                )
            };
            if let Some(dir) = &config.vtk {
                let name = format!(
                    "{}_{}_t{}_L{}.vtk",
                    config.problem.name(),
                    config.quadrature.name(),
                    tl,
                    level
                );
                let path = if dir.extension().is_some() && levels.len() == 1 && thicknesses.len() == 1
                {
                    dir.clone()
                } else {
                    std::fs::create_dir_all(dir)?;
                    dir.join(name)
                };
                let s_nodes = recover_nodal_shear(&solution, &ctx.tables, &material);
                std::fs::write(&path, vtk_snapshot(&ctx.mesh, &solution, &s_nodes))?;
            }
            records.push(RunRecord {
                problem: config.problem,
                t_over_l: tl,
                gamma: config.gamma,
                quadrature: config.quadrature,
                level,
                report,
                center_w,
            });
        }
    }

    // trailing summary: fitted rates per thickness, or center deflections
    if config.problem == ProblemKind::Parallelogram {
        let _ = writeln!(summary, "center deflection vs reference 6.52:");
        for r in &records {
            let _ = writeln!(
                summary,
                "level {}: w_center = {}",
                r.level,
                r.center_w.unwrap_or(f64::NAN)
            );
        }
    } else {
        for &tl in &config.t_over_l {
            let rows: Vec<ErrorReport> = records
                .iter()
                .filter(|r| r.t_over_l == tl)
                .map(|r| r.report.clone())
                .collect();
            if rows.len() >= 2 {
                let table = ConvergenceTable::from_rows(rows);
                let _ = writeln!(
                    summary,
                    "t/L = {tl}: L2 rate = {}, H1 rate = {}{}",
                    fmt_opt(table.rate_l2),
                    fmt_opt(table.rate_h1),
                    table
                        .rate_s
                        .map(|r| format!(", s rate = {r}"))
                        .unwrap_or_default(),
                );
                if let Some(rate) = table.rate_l2 {
                    if !(rate > 0.5) {
                        let _ = writeln!(summary, "t/L = {tl}: WARNING: non-convergent (L2 rate {rate})");
                    }
                }
            }
        }
    }

    let csv = records_to_csv(&records, &summary);
    if let Some(out) = &config.out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(out, &csv)?;
        std::fs::write(plot_script_path(out), plot_script(out))?;
    }
    Ok(RunArtifacts {
        records,
        summary,
        csv,
    })
}

/// Run the three integration schemes on identical meshes; one combined CSV.
pub fn compare_quadratures(config: &RunConfig) -> Result<RunArtifacts> {
    let mut all = Vec::new();
    let mut summary = String::new();
    for scheme in [
        QuadratureScheme::Qc3,
        QuadratureScheme::St6,
        QuadratureScheme::St3,
    ] {
        let sub = RunConfig {
            quadrature: scheme,
            out: None,
            vtk: config.vtk.clone(),
            ..config.clone()
        };
        let art = run(&sub)?;
        for line in art.summary.lines() {
            let _ = writeln!(summary, "{}: {line}", scheme.name());
        }
        all.extend(art.records);
    }
    let csv = records_to_csv(&all, &summary);
    if let Some(out) = &config.out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(out, &csv)?;
        std::fs::write(plot_script_path(out), plot_script(out))?;
    }
    Ok(RunArtifacts {
        records: all,
        summary,
        csv,
    })
}

pub fn plate_center(mesh: &TriangulationMesh, config: &RunConfig) -> Vec2 {
    match config.problem {
        ProblemKind::Parallelogram => {
            let th = config.skew_deg.to_radians();
            Vec2::new((200.0 + 100.0 * th.cos()) / 2.0, 100.0 * th.sin() / 2.0)
        }
        ProblemKind::Circle => Vec2::zeros(),
        _ => {
            let _ = mesh;
            Vec2::new(0.5, 0.5)
        }
    }
}

fn plot_script_path(csv: &Path) -> PathBuf {
    let mut name = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    name.push_str("_plot.py");
    csv.with_file_name(name)
}

/// Emit a small matplotlib script that renders log-log error curves from the
/// CSV next to it.
fn plot_script(csv: &Path) -> String {
    let csv_name = csv
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results.csv".into());
    format!(
        r##"#!/usr/bin/env python3
"""Log-log convergence curves for {csv_name}."""
import csv
import os
from collections import defaultdict

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = []
with open(os.path.join(here, "{csv_name}")) as f:
    for row in csv.reader(line for line in f if not line.startswith("#")):
        rows.append(row)
header, rows = rows[0], rows[1:]
idx = {{name: k for k, name in enumerate(header)}}

series = defaultdict(list)
for row in rows:
    if not row[idx["rel_L2"]]:
        continue
    key = (row[idx["quadrature"]], row[idx["t_over_L"]])
    series[key].append((float(row[idx["h"]]), float(row[idx["rel_L2"]]),
                        float(row[idx["rel_H1"]])))

fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
for (quad, tl), pts in sorted(series.items()):
    pts.sort(reverse=True)
    hs = [p[0] for p in pts]
    axes[0].loglog(hs, [p[1] for p in pts], "o-", label=f"{{quad}}, t/L={{tl}}")
    axes[1].loglog(hs, [p[2] for p in pts], "s-", label=f"{{quad}}, t/L={{tl}}")
axes[0].set(xlabel="h", ylabel="relative L2 error")
axes[1].set(xlabel="h", ylabel="relative H1 seminorm error")
for ax in axes:
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
fig.tight_layout()
out = os.path.join(here, "{csv_name}".replace(".csv", "") + ".png")
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
"##
    )
}

/// Legacy ASCII VTK snapshot: deflection scalar plus rotation and shear
/// vectors at the standard nodes.
pub fn vtk_snapshot(mesh: &TriangulationMesh, solution: &Solution, shear: &[Vec2]) -> String {
    let n = mesh.n_standard();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("plate fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {n} double");
    for node in &mesh.nodes[..n] {
        let _ = writeln!(out, "{} {} 0", node.x.x, node.x.y);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.cells.len(), 4 * mesh.cells.len());
    for cell in &mesh.cells {
        let _ = writeln!(
            out,
            "3 {} {} {}",
            cell.vertices[0], cell.vertices[1], cell.vertices[2]
        );
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.cells.len());
    for _ in &mesh.cells {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    out.push_str("SCALARS w double 1\nLOOKUP_TABLE default\n");
    for a in 0..n {
        let _ = writeln!(out, "{}", solution.w[a]);
    }
    out.push_str("VECTORS rotation double\n");
    for a in 0..n {
        let _ = writeln!(out, "{} {} 0", solution.r[a].x, solution.r[a].y);
    }
    out.push_str("VECTORS shear double\n");
    for a in 0..n {
        let _ = writeln!(out, "{} {} 0", shear[a].x, shear[a].y);
    }
    out
}
