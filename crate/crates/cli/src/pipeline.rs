//! Command pipelines: build the run from the config, execute, and emit the
//! output files plus a digest manifest.
//!
//! Nothing time- or host-dependent goes into emitted files; wall-clock
//! timings are reported on the diagnostic stream only, so identical configs
//! and seeds reproduce byte-identical outputs.

use nalgebra::Vector2;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use stepped_core::boundary::{Admissibility, BoundaryData, Obstacles};
use stepped_core::diagnostics::{
    caccioppoli_energy, detect_facets, detect_jump_segments, gradient_modulus, h_continuity,
    hessian_energy, CaccioppoliParams,
};
use stepped_core::error::SolveError;
use stepped_core::field::ScalarField;
use stepped_core::geometry::GradientPolygon;
use stepped_core::io::{
    fmt_g17, read_field_csv, read_mesh_csv, write_field_csv, write_field_pgm, write_mesh_csv,
};
use stepped_core::mesh::TriMesh;
use stepped_core::penalty::{build_penalized, PenaltySchedule};
use stepped_core::sampler::{
    enumerate_tilings, hexagon_stepped_data, rescale_to_graph, sample_mean_height, LatticeRegion,
    CONVENTION_LINES,
};
use stepped_core::solver::{constraint_violation, solve, InitStrategy, Problem, Tolerances};
use stepped_core::tension::{SingularTerm, TensionModel};

use crate::config::{ConfigError, RawConfig};

/// Failures mapped to process exit codes by `main`.
#[derive(Debug)]
pub enum RunError {
    /// Exit 1: configuration, input files, environment.
    Config(String),
    /// Exit 2: boundary data admits no constrained extension.
    Inadmissible(String),
    /// Exit 3: an iteration cap was hit before the tolerance.
    NonConvergence(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "{m}"),
            RunError::Inadmissible(m) => write!(f, "inadmissible boundary data: {m}"),
            RunError::NonConvergence(m) => write!(f, "no convergence: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<SolveError> for RunError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Inadmissible(b) => RunError::Inadmissible(b.to_string()),
            SolveError::NonConvergence { .. } => RunError::NonConvergence(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

fn io_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Config(e.to_string())
}

/// Tracks every emitted file so the manifest can digest them at the end.
pub struct Emitter {
    dir: PathBuf,
    files: Vec<String>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(io_err)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let p = self.path(name);
        std::fs::write(p, text).map_err(io_err)
    }

    /// Digest manifest over everything emitted, sorted by file name.
    fn finish(mut self) -> Result<(), RunError> {
        self.files.sort();
        self.files.dedup();
        let mut out = String::new();
        for name in &self.files {
            let bytes = std::fs::read(self.dir.join(name)).map_err(io_err)?;
            let mut h = Sha256::new();
            h.update(&bytes);
            out.push_str(&format!("{:x}  {}\n", h.finalize(), name));
        }
        std::fs::write(self.dir.join("manifest.txt"), out).map_err(io_err)
    }
}

fn summary_text(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// What the domain preset was, for boundary presets that need its shape.
enum DomainKind {
    Rectangle,
    Hexagon { a: u32, b: u32, c: u32, refine: u32 },
    Polygon,
}

fn build_domain(cfg: &RawConfig) -> Result<(Arc<TriMesh>, DomainKind), RunError> {
    let preset = cfg.get_str("domain", "preset", "unit-square");
    match preset.as_str() {
        "unit-square" => {
            let nx = cfg.get_usize("domain", "nx", 64)?;
            let ny = cfg.get_usize("domain", "ny", nx)?;
            let mesh = TriMesh::structured_rectangle(0.0, 0.0, 1.0, 1.0, nx, ny)
                .map_err(io_err)?;
            Ok((Arc::new(mesh), DomainKind::Rectangle))
        }
        "rectangle" => {
            let x0 = cfg.get_f64("domain", "x0", 0.0)?;
            let y0 = cfg.get_f64("domain", "y0", 0.0)?;
            let w = cfg.get_f64("domain", "width", 1.0)?;
            let h = cfg.get_f64("domain", "height", 1.0)?;
            let nx = cfg.get_usize("domain", "nx", 64)?;
            let ny = cfg.get_usize("domain", "ny", nx)?;
            let mesh = TriMesh::structured_rectangle(x0, y0, w, h, nx, ny).map_err(io_err)?;
            Ok((Arc::new(mesh), DomainKind::Rectangle))
        }
        "hexagon" => {
            let a = cfg.get_u32("domain", "a", 1)?;
            let b = cfg.get_u32("domain", "b", 1)?;
            let c = cfg.get_u32("domain", "c", 1)?;
            let refine = cfg.get_u32("domain", "refine", 24)?;
            let mesh = TriMesh::lattice_hexagon(a, b, c, refine).map_err(io_err)?;
            Ok((Arc::new(mesh), DomainKind::Hexagon { a, b, c, refine }))
        }
        "polygon" => {
            let verts = cfg
                .get_f64_list("domain", "vertices")?
                .ok_or_else(|| RunError::Config("[domain] polygon needs `vertices`".into()))?;
            if verts.len() < 6 || verts.len() % 2 != 0 {
                return Err(RunError::Config(
                    "[domain] vertices must be 3 or more x y pairs".into(),
                ));
            }
            let ring: Vec<Vector2<f64>> = verts
                .chunks(2)
                .map(|c| Vector2::new(c[0], c[1]))
                .collect();
            let target_h = cfg.get_f64("domain", "target_h", 0.05)?;
            let mesh = TriMesh::polygon(&ring, target_h).map_err(io_err)?;
            Ok((Arc::new(mesh), DomainKind::Polygon))
        }
        other => Err(RunError::Config(format!("unknown domain preset `{other}`"))),
    }
}

fn build_polygon(cfg: &RawConfig) -> Result<GradientPolygon, RunError> {
    let preset = cfg.get_str("polygon", "preset", "square");
    let polygon = match preset.as_str() {
        "square" => {
            let scale = cfg.get_f64("polygon", "scale", 1.0)?;
            GradientPolygon::square(scale)
        }
        "lozenge-triangle" => GradientPolygon::lozenge_triangle(),
        "custom" => {
            let verts = cfg
                .get_f64_list("polygon", "vertices")?
                .ok_or_else(|| RunError::Config("[polygon] custom needs `vertices`".into()))?;
            let ring: Vec<Vector2<f64>> = verts
                .chunks(2)
                .map(|c| Vector2::new(c[0], c[1]))
                .collect();
            GradientPolygon::new(ring).map_err(io_err)?
        }
        other => {
            return Err(RunError::Config(format!(
                "unknown polygon preset `{other}`"
            )))
        }
    };
    if polygon.reversed_on_load() {
        eprintln!("note: polygon vertex ring reversed to counterclockwise orientation");
    }
    Ok(polygon)
}

fn build_tension(cfg: &RawConfig, polygon: GradientPolygon) -> Result<TensionModel, RunError> {
    let model = cfg.get_str("tension", "model", "quadratic");
    match model.as_str() {
        "quadratic" => Ok(TensionModel::quadratic(polygon)),
        "lozenge" => TensionModel::lozenge(polygon).map_err(io_err),
        "custom-singular" => {
            let tuples = cfg
                .get_tuple_list("tension", "singular_points")?
                .ok_or_else(|| {
                    RunError::Config("[tension] custom-singular needs `singular_points`".into())
                })?;
            let mut terms = Vec::new();
            for t in &tuples {
                if t.len() != 4 {
                    return Err(RunError::Config(
                        "[tension] singular_points entries are `x y exponent weight`".into(),
                    ));
                }
                terms.push(SingularTerm {
                    center: Vector2::new(t[0], t[1]),
                    exponent: t[2],
                    weight: t[3],
                });
            }
            let base = cfg.get_f64("tension", "base_weight", 1.0)?;
            let radius = cfg.get_f64("tension", "singular_radius", 1e-3)?;
            TensionModel::custom_singular(polygon, terms, base, radius).map_err(io_err)
        }
        other => Err(RunError::Config(format!("unknown tension model `{other}`"))),
    }
}

fn outline_polyline(mesh: &TriMesh) -> Vec<Vector2<f64>> {
    mesh.boundary_loop.iter().map(|&v| mesh.nodes[v]).collect()
}

fn build_boundary(
    cfg: &RawConfig,
    mesh: &TriMesh,
    kind: &DomainKind,
) -> Result<BoundaryData, RunError> {
    let preset = cfg.get_str("boundary", "preset", "zero");
    let density = cfg.get_f64("boundary", "sample_density", mesh.h / 4.0)?;
    match preset.as_str() {
        "zero" => {
            let ring = outline_polyline(mesh);
            let values = vec![0.0; ring.len()];
            BoundaryData::new(ring, values, density).map_err(io_err)
        }
        "linear" => {
            let p0 = cfg
                .get_f64_list("boundary", "p0")?
                .ok_or_else(|| RunError::Config("[boundary] linear needs `p0 = px py`".into()))?;
            if p0.len() != 2 {
                return Err(RunError::Config("[boundary] p0 must be two numbers".into()));
            }
            let slope = Vector2::new(p0[0], p0[1]);
            let ring = outline_polyline(mesh);
            let values = ring.iter().map(|y| slope.dot(y)).collect();
            BoundaryData::new(ring, values, density).map_err(io_err)
        }
        "hexagon-stepped" => match kind {
            DomainKind::Hexagon { a, b, c, refine } => {
                Ok(hexagon_stepped_data(*a, *b, *c, *refine))
            }
            _ => Err(RunError::Config(
                "[boundary] hexagon-stepped requires the hexagon domain preset".into(),
            )),
        },
        "explicit" => {
            let verts = cfg
                .get_f64_list("boundary", "vertices")?
                .ok_or_else(|| RunError::Config("[boundary] explicit needs `vertices`".into()))?;
            let values = cfg
                .get_f64_list("boundary", "values")?
                .ok_or_else(|| RunError::Config("[boundary] explicit needs `values`".into()))?;
            let ring: Vec<Vector2<f64>> = verts
                .chunks(2)
                .map(|c| Vector2::new(c[0], c[1]))
                .collect();
            BoundaryData::new(ring, values, density).map_err(io_err)
        }
        other => Err(RunError::Config(format!(
            "unknown boundary preset `{other}`"
        ))),
    }
}

fn build_schedule(cfg: &RawConfig) -> Result<PenaltySchedule, RunError> {
    let d = PenaltySchedule::default();
    Ok(PenaltySchedule {
        c_base: cfg.get_f64("schedule", "c_base", d.c_base)?,
        eps_base: cfg.get_f64("schedule", "eps_base", d.eps_base)?,
        moll_base: cfg.get_f64("schedule", "moll_base", d.moll_base)?,
        m_max: cfg.get_usize("schedule", "m_max", d.m_max)?,
    })
}

fn build_tolerances(cfg: &RawConfig) -> Result<Tolerances, RunError> {
    let d = Tolerances::default();
    Ok(Tolerances {
        kkt_scale: cfg.get_f64("solver", "kkt_scale", d.kkt_scale)?,
        constraint: cfg.get_f64("solver", "constraint_tol", d.constraint)?,
        energy: cfg.get_f64("solver", "energy_tol", d.energy)?,
        max_iterations: cfg.get_usize("solver", "max_iterations", d.max_iterations)?,
        boundary_layer_factor: cfg.get_f64("solver", "boundary_layer_factor", d.boundary_layer_factor)?,
    })
}

fn build_init(cfg: &RawConfig) -> Result<InitStrategy, RunError> {
    match cfg.get_str("solver", "init", "zero").as_str() {
        "zero" => Ok(InitStrategy::Zero),
        "lower" => Ok(InitStrategy::LowerObstacle),
        "upper" => Ok(InitStrategy::UpperObstacle),
        other => Err(RunError::Config(format!("unknown solver init `{other}`"))),
    }
}

fn build_region(cfg: &RawConfig, seed_override: Option<u64>) -> Result<(Arc<LatticeRegion>, SamplerParams), RunError> {
    let preset = cfg.get_str("sampler", "region", "hexagon");
    let region = match preset.as_str() {
        "hexagon" => {
            let a = cfg.get_u32("sampler", "a", 24)?;
            let b = cfg.get_u32("sampler", "b", a)?;
            let c = cfg.get_u32("sampler", "c", a)?;
            let eps = cfg.get_f64("sampler", "epsilon", 1.0 / a.max(b).max(c) as f64)?;
            LatticeRegion::hexagon(a, b, c, eps).map_err(io_err)?
        }
        "explicit" => {
            let sites = cfg
                .get_tuple_list("sampler", "sites")?
                .ok_or_else(|| RunError::Config("[sampler] explicit needs `sites`".into()))?;
            let boundary = cfg
                .get_tuple_list("sampler", "boundary")?
                .ok_or_else(|| RunError::Config("[sampler] explicit needs `boundary`".into()))?;
            let eps = cfg.get_f64("sampler", "epsilon", 1.0)?;
            let site_list: Vec<(i64, i64)> = sites
                .iter()
                .map(|t| (t[0] as i64, t[1] as i64))
                .collect();
            let boundary_list: Vec<(i64, i64, i64)> = boundary
                .iter()
                .map(|t| (t[0] as i64, t[1] as i64, t[2] as i64))
                .collect();
            LatticeRegion::new(site_list, &boundary_list, eps).map_err(|e| {
                RunError::Inadmissible(e.to_string())
            })?
        }
        other => {
            return Err(RunError::Config(format!(
                "unknown sampler region `{other}`"
            )))
        }
    };
    let interior = region.interior_count();
    let default_burn = 2 * interior;
    let params = SamplerParams {
        burn_in: cfg.get_usize("sampler", "burn_in", default_burn)?,
        samples: cfg.get_usize("sampler", "samples", 50)?,
        thinning: cfg.get_usize("sampler", "thinning", (interior / 8).max(1))?,
        seed: match seed_override {
            Some(s) => {
                // Consume the config key so strict checking stays quiet.
                let _ = cfg.get_u64("sampler", "seed", 0)?;
                s
            }
            None => cfg.get_u64("sampler", "seed", 12345)?,
        },
    };
    Ok((Arc::new(region), params))
}

struct SamplerParams {
    burn_in: usize,
    samples: usize,
    thinning: usize,
    seed: u64,
}

fn raster_settings(cfg: &RawConfig) -> Result<(bool, usize), RunError> {
    let on = cfg.get_str("output", "raster", "false");
    let width = cfg.get_usize("output", "raster_width", 400)?;
    match on.as_str() {
        "true" | "1" | "yes" => Ok((true, width)),
        "false" | "0" | "no" => Ok((false, width)),
        other => Err(RunError::Config(format!(
            "[output] raster must be boolean, got `{other}`"
        ))),
    }
}

pub fn run_solve(cfg: &RawConfig, out: &Path, _seed: Option<u64>) -> Result<(), RunError> {
    let t0 = std::time::Instant::now();
    let (mesh, kind) = build_domain(cfg)?;
    let polygon = build_polygon(cfg)?;
    let model = build_tension(cfg, polygon)?;
    let data = build_boundary(cfg, &mesh, &kind)?;
    let schedule = build_schedule(cfg)?;
    let tol = build_tolerances(cfg)?;
    let init = build_init(cfg)?;
    let (raster, raster_width) = raster_settings(cfg)?;
    cfg.finish()?;

    let problem = Problem {
        mesh: mesh.clone(),
        model,
        data,
    };
    let report = solve(&problem, &schedule, &tol, init)?;
    eprintln!(
        "solve: {} stages, {} iterations, wall time {:?}",
        report.stages.len(),
        report.iterations,
        report.wall_time
    );

    let mut em = Emitter::new(out)?;
    write_field_csv(&em.path("field.csv"), &report.field).map_err(io_err)?;
    write_mesh_csv(&em.path("mesh.csv"), &mesh).map_err(io_err)?;

    let mut entries: Vec<(String, String)> = vec![
        ("command".into(), "solve".into()),
        ("nodes".into(), mesh.node_count().to_string()),
        ("triangles".into(), mesh.triangle_count().to_string()),
        ("mesh_h".into(), fmt_g17(mesh.h)),
        ("stages_run".into(), report.stages.len().to_string()),
        ("iterations".into(), report.iterations.to_string()),
        (
            "el_residual_norm".into(),
            fmt_g17(report.el_residual_norm),
        ),
        ("rigid_nodes".into(), report.rigid_node_count.to_string()),
        (
            "lipschitz_bound".into(),
            fmt_g17(report.field.lipschitz_bound()),
        ),
    ];
    for (k, stage) in report.stages.iter().enumerate() {
        entries.push((
            format!("energy_stage_{stage}"),
            fmt_g17(*report.energy_history[k].last().unwrap()),
        ));
        entries.push((
            format!("gauge_excess_stage_{stage}"),
            fmt_g17(report.max_gauge_excess[k]),
        ));
    }
    if problem.model.is_lozenge() {
        for line in CONVENTION_LINES {
            let (k, v) = line.split_once(" = ").unwrap();
            entries.push((k.to_string(), v.to_string()));
        }
    }
    em.write_text("summary.txt", &summary_text(&entries))?;

    let mut rep = String::from("# per-stage energy histories (one accepted iterate per line)\n");
    for (k, stage) in report.stages.iter().enumerate() {
        rep.push_str(&format!("stage m={stage}\n"));
        for e in &report.energy_history[k] {
            rep.push_str(&format!("  {}\n", fmt_g17(*e)));
        }
    }
    em.write_text("report.txt", &rep)?;

    if raster {
        write_field_pgm(&em.path("u.pgm"), &report.field, raster_width, None)
            .map_err(io_err)?;
        let slopes: Vec<f64> = (0..mesh.triangle_count())
            .map(|t| report.field.gradient(t).norm())
            .collect();
        write_field_pgm(
            &em.path("grad.pgm"),
            &report.field,
            raster_width,
            Some(&slopes),
        )
        .map_err(io_err)?;
    }
    em.finish()?;
    eprintln!("solve finished in {:?}", t0.elapsed());
    Ok(())
}

pub fn run_obstacles(cfg: &RawConfig, out: &Path) -> Result<(), RunError> {
    let (mesh, kind) = build_domain(cfg)?;
    let polygon = build_polygon(cfg)?;
    let data = build_boundary(cfg, &mesh, &kind)?;
    cfg.finish()?;
    let admissibility = data.check_admissible(&polygon);
    let mut em = Emitter::new(out)?;
    let mut entries: Vec<(String, String)> = vec![("command".into(), "obstacles".into())];
    match &admissibility {
        Admissibility::Valid => entries.push(("admissible".into(), "true".into())),
        Admissibility::Violation { y1, y2, slack } => {
            entries.push(("admissible".into(), "false".into()));
            entries.push(("violation_y1".into(), format!("{} {}", fmt_g17(y1.x), fmt_g17(y1.y))));
            entries.push(("violation_y2".into(), format!("{} {}", fmt_g17(y2.x), fmt_g17(y2.y))));
            entries.push(("violation_slack".into(), fmt_g17(*slack)));
            em.write_text("summary.txt", &summary_text(&entries))?;
            em.finish()?;
            return Err(RunError::Inadmissible(format!(
                "worst pair slack {slack:.6e}"
            )));
        }
    }
    let obs = Obstacles::compute(&data, &polygon, &mesh)
        .map_err(|e| RunError::Inadmissible(e.to_string()))?;
    let lower = ScalarField::new(mesh.clone(), obs.lower.clone()).map_err(io_err)?;
    let upper = ScalarField::new(mesh.clone(), obs.upper.clone()).map_err(io_err)?;
    write_field_csv(&em.path("lower.csv"), &lower).map_err(io_err)?;
    write_field_csv(&em.path("upper.csv"), &upper).map_err(io_err)?;
    write_mesh_csv(&em.path("mesh.csv"), &mesh).map_err(io_err)?;
    let rigid = obs.rigid_nodes(1e-12).len();
    if rigid > 0 {
        eprintln!("note: {rigid} rigid nodes (obstacles meet); solution pinned there");
    }
    entries.push(("rigid_nodes".into(), rigid.to_string()));
    let (le, _) = constraint_violation(&lower, &polygon, 0.0);
    let (ue, _) = constraint_violation(&upper, &polygon, 0.0);
    entries.push(("lower_gauge_excess".into(), fmt_g17(le)));
    entries.push(("upper_gauge_excess".into(), fmt_g17(ue)));
    em.write_text("summary.txt", &summary_text(&entries))?;
    em.finish()
}

pub fn run_sample(cfg: &RawConfig, out: &Path, seed: Option<u64>) -> Result<(), RunError> {
    let t0 = std::time::Instant::now();
    let (region, params) = build_region(cfg, seed)?;
    cfg.finish()?;
    let report = sample_mean_height(
        &region,
        params.burn_in,
        params.samples,
        params.thinning,
        params.seed,
    );
    eprintln!(
        "sample: warmup {} sweeps (coupled: {}), {} samples, wall time {:?}",
        report.warmup_sweeps,
        report.coupled,
        report.samples,
        t0.elapsed()
    );
    let mut em = Emitter::new(out)?;
    let mut mean_csv = String::from("i,j,mean_height\n");
    for (&(i, j), &m) in region.sites().iter().zip(&report.mean) {
        mean_csv.push_str(&format!("{i},{j},{}\n", fmt_g17(m)));
    }
    em.write_text("mean.csv", &mean_csv)?;
    let field = rescale_to_graph(&report.mean, &region, None).map_err(io_err)?;
    write_field_csv(&em.path("field.csv"), &field).map_err(io_err)?;
    write_mesh_csv(&em.path("mesh.csv"), field.mesh()).map_err(io_err)?;
    let mut entries: Vec<(String, String)> = vec![
        ("command".into(), "sample".into()),
        ("sites".into(), region.sites().len().to_string()),
        ("interior_sites".into(), region.interior_count().to_string()),
        ("epsilon".into(), fmt_g17(region.epsilon())),
        ("burn_in_sweeps".into(), params.burn_in.to_string()),
        ("samples".into(), params.samples.to_string()),
        ("thinning_sweeps".into(), params.thinning.to_string()),
        ("seed".into(), params.seed.to_string()),
        ("coupled".into(), report.coupled.to_string()),
        ("warmup_sweeps".into(), report.warmup_sweeps.to_string()),
    ];
    for line in CONVENTION_LINES {
        let (k, v) = line.split_once(" = ").unwrap();
        entries.push((k.to_string(), v.to_string()));
    }
    em.write_text("summary.txt", &summary_text(&entries))?;
    em.finish()
}

pub fn run_enumerate(cfg: &RawConfig, out: &Path) -> Result<(), RunError> {
    let (region, _) = build_region(cfg, None)?;
    cfg.finish()?;
    let count = enumerate_tilings(&region).map_err(|e| RunError::Config(e.to_string()))?;
    let mut em = Emitter::new(out)?;
    let entries: Vec<(String, String)> = vec![
        ("command".into(), "enumerate".into()),
        ("sites".into(), region.sites().len().to_string()),
        ("interior_sites".into(), region.interior_count().to_string()),
        ("tilings".into(), count.to_string()),
    ];
    em.write_text("summary.txt", &summary_text(&entries))?;
    em.finish()
}

/// Load a field either nodewise against its own emitted mesh, or as bare
/// point rows.
fn load_field(
    field_path: &str,
    mesh_path: Option<&str>,
) -> Result<(Vec<(Vector2<f64>, f64)>, Option<Arc<TriMesh>>), RunError> {
    let rows = read_field_csv(Path::new(field_path)).map_err(io_err)?;
    let mesh = match mesh_path {
        Some(p) => Some(read_mesh_csv(Path::new(p)).map_err(io_err)?),
        None => None,
    };
    Ok((rows, mesh))
}

pub fn run_compare(cfg: &RawConfig, out: &Path) -> Result<(), RunError> {
    let field_a = cfg.require("compare", "field_a")?.to_string();
    let field_b = cfg.require("compare", "field_b")?.to_string();
    let mesh_a = cfg.get("compare", "mesh_a").map(|s| s.to_string());
    let mesh_b = cfg.get("compare", "mesh_b").map(|s| s.to_string());
    cfg.finish()?;
    let (rows_a, mesh_a) = load_field(&field_a, mesh_a.as_deref())?;
    let (rows_b, mesh_b) = load_field(&field_b, mesh_b.as_deref())?;

    let same_nodes = rows_a.len() == rows_b.len()
        && rows_a
            .iter()
            .zip(&rows_b)
            .all(|((p, _), (q, _))| (p - q).norm() <= 1e-9);
    let (diffs, weighting): (Vec<(Vector2<f64>, f64)>, &str) = if same_nodes {
        (
            rows_a
                .iter()
                .zip(&rows_b)
                .map(|((p, a), (_, b))| (*p, a - b))
                .collect(),
            if mesh_a.is_some() { "lumped" } else { "uniform" },
        )
    } else {
        // Interpolate B onto A's nodes; needs B's mesh.
        let mb = mesh_b.clone().ok_or_else(|| {
            RunError::Config(
                "meshes differ: compare needs `mesh_b` to interpolate field_b".into(),
            )
        })?;
        if mb.node_count() != rows_b.len() {
            return Err(RunError::Config(
                "field_b row count does not match mesh_b".into(),
            ));
        }
        let fb = ScalarField::new(mb, rows_b.iter().map(|r| r.1).collect())
            .map_err(io_err)?;
        let mut diffs = Vec::with_capacity(rows_a.len());
        for (p, a) in &rows_a {
            let b = fb.value_at(*p).ok_or_else(|| {
                RunError::Config(format!(
                    "mesh mismatch: node ({}, {}) lies outside field_b's mesh",
                    p.x, p.y
                ))
            })?;
            diffs.push((*p, a - b));
        }
        (diffs, if mesh_a.is_some() { "lumped" } else { "uniform" })
    };

    let weights: Vec<f64> = match &mesh_a {
        Some(m) if m.node_count() == diffs.len() => m.lumped_weights(),
        _ => vec![1.0; diffs.len()],
    };
    let total: f64 = weights.iter().sum();
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for ((_, d), w) in diffs.iter().zip(&weights) {
        l2 += w * d * d;
        linf = linf.max(d.abs());
    }
    let l2 = (l2 / total).sqrt();

    let mut em = Emitter::new(out)?;
    let mut diff_csv = String::from("node_x,node_y,difference\n");
    for (p, d) in &diffs {
        diff_csv.push_str(&format!("{},{},{}\n", fmt_g17(p.x), fmt_g17(p.y), fmt_g17(*d)));
    }
    em.write_text("diff.csv", &diff_csv)?;
    let entries: Vec<(String, String)> = vec![
        ("command".into(), "compare".into()),
        ("nodes".into(), diffs.len().to_string()),
        ("weighting".into(), weighting.into()),
        ("l2".into(), fmt_g17(l2)),
        ("linf".into(), fmt_g17(linf)),
    ];
    em.write_text("summary.txt", &summary_text(&entries))?;
    em.finish()
}

pub fn run_diagnose(cfg: &RawConfig, out: &Path) -> Result<(), RunError> {
    let field_path = cfg.require("diagnose", "field")?.to_string();
    let mesh_path = cfg.require("diagnose", "mesh")?.to_string();
    let polygon = build_polygon(cfg)?;
    let facet_tol = cfg.get_f64("diagnose", "facet_tol", 0.3)?;
    let jump_tol = cfg.get_f64("diagnose", "jump_tol", 0.5)?;
    let radii = cfg
        .get_f64_list("diagnose", "radii")?
        .unwrap_or_else(|| vec![0.05, 0.1, 0.2]);
    let margin = cfg.get_f64("diagnose", "margin", 0.25)?;
    let window = cfg
        .get_f64_list("diagnose", "window")?
        .unwrap_or_else(|| vec![0.5, 0.5, 0.25]);
    let direction = cfg
        .get_f64_list("diagnose", "direction")?
        .unwrap_or_else(|| vec![1.0, 0.0]);
    let c0 = cfg.get_f64("diagnose", "c0", 0.15)?;
    let c1 = cfg.get_f64("diagnose", "c1", 0.35)?;
    cfg.finish()?;
    if window.len() != 3 || direction.len() != 2 {
        return Err(RunError::Config(
            "[diagnose] window is `cx cy r`, direction is `ex ey`".into(),
        ));
    }

    let mesh = read_mesh_csv(Path::new(&mesh_path)).map_err(io_err)?;
    let rows = read_field_csv(Path::new(&field_path)).map_err(io_err)?;
    if rows.len() != mesh.node_count() {
        return Err(RunError::Config(
            "field rows do not match mesh node count".into(),
        ));
    }
    let u = ScalarField::new(mesh.clone(), rows.iter().map(|r| r.1).collect())
        .map_err(io_err)?;

    let mut em = Emitter::new(out)?;
    let mut entries: Vec<(String, String)> = vec![("command".into(), "diagnose".into())];

    // Facets.
    let facets = detect_facets(&u, &polygon, facet_tol);
    let mut facets_txt = String::new();
    for (k, f) in facets.iter().enumerate() {
        facets_txt.push_str(&format!(
            "facet {k}\n  vertex_index = {}\n  vertex = {} {}\n  triangles = {}\n  upper_convex = {}\n  lower_concave = {}\n  worst_upper_violation = {}\n  worst_lower_violation = {}\n",
            f.vertex_index,
            fmt_g17(f.vertex.x),
            fmt_g17(f.vertex.y),
            f.triangles.len(),
            f.upper_convex,
            f.lower_concave,
            fmt_g17(f.worst_upper_violation),
            fmt_g17(f.worst_lower_violation),
        ));
    }
    em.write_text("facets.txt", &facets_txt)?;
    entries.push(("facet_count".into(), facets.len().to_string()));
    entries.push((
        "facet_verdicts_pass".into(),
        facets
            .iter()
            .all(|f| f.upper_convex && f.lower_concave)
            .to_string(),
    ));

    // Jump segments.
    let jumps = detect_jump_segments(&u, &polygon, jump_tol);
    let mut jumps_txt = format!(
        "jump_edges = {}\nangular_tol_deg = {}\nreach_tol = {}\naffine_tol = {}\n",
        jumps.jump_edge_count,
        fmt_g17(jumps.angular_tol_deg),
        fmt_g17(jumps.reach_tol),
        fmt_g17(jumps.affine_tol)
    );
    for (k, s) in jumps.segments.iter().enumerate() {
        jumps_txt.push_str(&format!(
            "segment {k}\n  midpoint = {} {}\n  direction = {} {}\n  extent = {} {}\n  matched_side = {}\n  angular_deviation_deg = {}\n  reaches_boundary = {} {}\n  affine_residual = {}\n  edges = {}\n  compliant = {}\n",
            fmt_g17(s.midpoint.x),
            fmt_g17(s.midpoint.y),
            fmt_g17(s.direction.x),
            fmt_g17(s.direction.y),
            fmt_g17(s.extent.0),
            fmt_g17(s.extent.1),
            s.matched_side,
            fmt_g17(s.angular_deviation_deg),
            s.reaches_boundary.0,
            s.reaches_boundary.1,
            fmt_g17(s.affine_residual),
            s.edge_count,
            s.compliant,
        ));
    }
    em.write_text("jumps.txt", &jumps_txt)?;
    entries.push(("jump_segments".into(), jumps.segments.len().to_string()));
    entries.push((
        "jump_segments_compliant".into(),
        jumps.segments.iter().filter(|s| s.compliant).count().to_string(),
    ));

    // Moduli curves.
    let grad_curve = gradient_modulus(&u, &radii, margin);
    let mut csv = String::from("delta,omega\n");
    for (d, w) in &grad_curve {
        csv.push_str(&format!("{},{}\n", fmt_g17(*d), fmt_g17(*w)));
    }
    em.write_text("gradient_modulus.csv", &csv)?;
    let h_curve = h_continuity(&u, &polygon, &radii, margin);
    let mut csv = String::from("delta,omega_h\n");
    for (d, w) in &h_curve {
        csv.push_str(&format!("{},{}\n", fmt_g17(*d), fmt_g17(*w)));
    }
    em.write_text("h_continuity.csv", &csv)?;

    // Cutoff energies over the window.
    let params = CaccioppoliParams {
        direction: Vector2::new(direction[0], direction[1]),
        c0,
        c1,
        window_center: Vector2::new(window[0], window[1]),
        window_radius: window[2],
    };
    match caccioppoli_energy(&u, &params) {
        Ok(e) => entries.push(("caccioppoli_energy".into(), fmt_g17(e))),
        Err(e) => entries.push(("caccioppoli_energy_error".into(), e.to_string())),
    }
    match hessian_energy(&u, |_| true, params.window_center, params.window_radius) {
        Ok(e) => entries.push(("hessian_energy".into(), fmt_g17(e))),
        Err(e) => entries.push(("hessian_energy_error".into(), e.to_string())),
    }
    em.write_text("summary.txt", &summary_text(&entries))?;
    em.finish()
}

pub fn run_tension_eval(cfg: &RawConfig, out: &Path) -> Result<(), RunError> {
    let polygon = build_polygon(cfg)?;
    let model = build_tension(cfg, polygon)?;
    let points = cfg
        .get_tuple_list("tension-eval", "points")?
        .ok_or_else(|| RunError::Config("[tension-eval] needs `points = x y ; x y ...`".into()))?;
    let order = cfg.get_usize("tension-eval", "order", 2)? as u8;
    let stage = cfg.get_usize("tension-eval", "penalized_stage", 0)?;
    let schedule = build_schedule(cfg)?;
    cfg.finish()?;
    let mut em = Emitter::new(out)?;
    let mut csv =
        String::from("px,py,status,value,grad_x,grad_y,hess_xx,hess_xy,hess_yy\n");
    for p in &points {
        if p.len() != 2 {
            return Err(RunError::Config(
                "[tension-eval] points entries are `x y`".into(),
            ));
        }
        let q = Vector2::new(p[0], p[1]);
        let jet = if stage >= 1 {
            Ok(build_penalized(&model, stage, &schedule).eval(q, order))
        } else {
            model.eval(q, order)
        };
        match jet {
            Ok(j) => {
                let g = j.gradient.unwrap_or_default();
                let h = j.hessian.unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},ok,{},{},{},{},{},{}\n",
                    fmt_g17(q.x),
                    fmt_g17(q.y),
                    fmt_g17(j.value),
                    fmt_g17(g.x),
                    fmt_g17(g.y),
                    fmt_g17(h[(0, 0)]),
                    fmt_g17(h[(0, 1)]),
                    fmt_g17(h[(1, 1)])
                ));
            }
            Err(e) => {
                let status = match e {
                    stepped_core::error::TensionError::OutsideDomain { .. } => "outside-domain",
                    stepped_core::error::TensionError::SingularPoint { .. } => "singular-point",
                    _ => "error",
                };
                csv.push_str(&format!(
                    "{},{},{status},0,0,0,0,0,0\n",
                    fmt_g17(q.x),
                    fmt_g17(q.y)
                ));
            }
        }
    }
    em.write_text("values.csv", &csv)?;
    let entries: Vec<(String, String)> = vec![
        ("command".into(), "tension-eval".into()),
        ("points".into(), points.len().to_string()),
        ("order".into(), order.to_string()),
        ("penalized_stage".into(), stage.to_string()),
    ];
    em.write_text("summary.txt", &summary_text(&entries))?;
    em.finish()
}
