//! P1 finite-element minimization of the penalized energies with
//! continuation over the penalty stage.
//!
//! Discrete energy: `E(U) = sum_T area(T) F_m(grad U|_T)`. Each stage is
//! minimized by damped projected Newton:
//! - the nodal obstacle band `[lower, upper]` is enforced as a hard box
//!   constraint (the problem is equivalent to the obstacle formulation, and
//!   the penalized minimizer would otherwise overshoot the obstacles by
//!   O(C_m^(-1/2)) exactly where the continuum solution touches them);
//! - unknowns at an active bound with outward-pointing gradient are pinned
//!   to the identity row of the Newton system;
//! - the step is a backtracking Armijo search along the projected path
//!   `clamp(U + alpha d)`, so the per-stage energy history is monotone.
//!
//! Stages are warm-started and stop early once the compact-set gauge excess
//! and the energy settle below their tolerances.

use nalgebra::Vector2;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::boundary::{BoundaryData, Obstacles};
use crate::error::SolveError;
use crate::field::ScalarField;
use crate::geometry::GradientPolygon;
use crate::linalg::{pairwise_sum, rcm_order, SkylineMatrix};
use crate::mesh::TriMesh;
use crate::penalty::{build_penalized, PenaltySchedule, PenalizedTension};
use crate::tension::TensionModel;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// KKT tolerance per unit area: tol.kkt = kkt_scale * area(domain).
    pub kkt_scale: f64,
    /// Continuation stops once the compact-set gauge excess is below this.
    pub constraint: f64,
    /// Relative energy-change threshold of the continuation stop rule.
    pub energy: f64,
    /// Newton iteration cap per stage. Models with near-singular
    /// curvature (capped Hessian blocks) converge linearly rather than
    /// quadratically near the cap radius, so the default leaves headroom.
    pub max_iterations: usize,
    /// Compact-set inset: triangles within `boundary_layer_factor * h` of
    /// the domain boundary are excluded from the gauge-excess measure.
    pub boundary_layer_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kkt_scale: 1e-8,
            constraint: 5e-2,
            energy: 1e-9,
            max_iterations: 500,
            boundary_layer_factor: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitStrategy {
    Zero,
    LowerObstacle,
    UpperObstacle,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Arc<TriMesh>,
    pub model: TensionModel,
    pub data: BoundaryData,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub field: ScalarField,
    /// Accepted energies per stage (first entry is the stage's warm start).
    pub energy_history: Vec<Vec<f64>>,
    /// Compact-set max gauge excess after each stage.
    pub max_gauge_excess: Vec<f64>,
    /// Stages actually run (m values).
    pub stages: Vec<usize>,
    /// Final projected KKT residual (max norm).
    pub el_residual_norm: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    /// Nodes pinned because the obstacle gap vanished.
    pub rigid_node_count: usize,
}

/// Discrete energy and its exact gradient with respect to nodal values
/// (boundary components are zero).
pub fn assemble_energy(
    mesh: &TriMesh,
    pen: &PenalizedTension,
    values: &[f64],
) -> (f64, Vec<f64>) {
    let mut contribs = Vec::with_capacity(mesh.triangle_count());
    let mut grad = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let mut g = Vector2::zeros();
        for (corner, &v) in tri.iter().enumerate() {
            g += mesh.hat_gradient(t, corner) * values[v];
        }
        let area = mesh.area(t);
        let jet = pen.eval(g, 1);
        contribs.push(area * jet.value);
        let dg = jet.gradient.expect("order 1");
        for (corner, &v) in tri.iter().enumerate() {
            if !mesh.is_boundary_node(v) {
                grad[v] += area * dg.dot(&mesh.hat_gradient(t, corner));
            }
        }
    }
    (pairwise_sum(&contribs), grad)
}

/// Weak-form Euler-Lagrange residual per node: for each interior node the
/// discrete divergence `sum_T area(T) grad F_m(grad u|_T) . grad hat_v|_T`;
/// zero at boundary nodes.
pub fn el_residual(u: &ScalarField, pen: &PenalizedTension) -> Vec<f64> {
    let (_, grad) = assemble_energy(u.mesh(), pen, u.values());
    grad
}

/// Max gauge excess of triangle gradients over the compact set that keeps a
/// `boundary_inset` margin from the domain boundary, plus every offending
/// triangle (positive excess) in that set.
pub fn constraint_violation(
    u: &ScalarField,
    n: &GradientPolygon,
    boundary_inset: f64,
) -> (f64, Vec<(usize, f64)>) {
    let mesh = u.mesh();
    let mut max_excess = f64::NEG_INFINITY;
    let mut offenders = Vec::new();
    for t in 0..mesh.triangle_count() {
        if mesh.distance_to_boundary(mesh.barycenter(t)) < boundary_inset {
            continue;
        }
        let e = n.gauge_excess(u.gradient(t));
        max_excess = max_excess.max(e);
        if e > 0.0 {
            offenders.push((t, e));
        }
    }
    if max_excess == f64::NEG_INFINITY {
        // Inset swallowed the whole mesh; fall back to all triangles.
        for t in 0..mesh.triangle_count() {
            let e = n.gauge_excess(u.gradient(t));
            max_excess = max_excess.max(e);
            if e > 0.0 {
                offenders.push((t, e));
            }
        }
    }
    offenders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    (max_excess, offenders)
}

struct System {
    /// Unknown index per node (None for Dirichlet/rigid nodes).
    unknown_of_node: Vec<Option<usize>>,
    node_of_unknown: Vec<usize>,
    /// Coupling pattern in unknown indices.
    pattern: Vec<Vec<usize>>,
}

fn build_system(mesh: &TriMesh, rigid: &[bool]) -> System {
    let free_nodes: Vec<usize> = (0..mesh.node_count())
        .filter(|&v| !mesh.is_boundary_node(v) && !rigid[v])
        .collect();
    // Adjacency among free nodes for RCM.
    let mut idx0 = vec![usize::MAX; mesh.node_count()];
    for (k, &v) in free_nodes.iter().enumerate() {
        idx0[v] = k;
    }
    let mut adj = vec![Vec::new(); free_nodes.len()];
    for tri in &mesh.triangles {
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    let (va, vb) = (tri[a], tri[b]);
                    if idx0[va] != usize::MAX && idx0[vb] != usize::MAX {
                        adj[idx0[va]].push(idx0[vb]);
                    }
                }
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let order = rcm_order(&adj);
    let node_of_unknown: Vec<usize> = order.iter().map(|&k| free_nodes[k]).collect();
    let mut unknown_of_node = vec![None; mesh.node_count()];
    for (u, &v) in node_of_unknown.iter().enumerate() {
        unknown_of_node[v] = Some(u);
    }
    let mut pattern = vec![Vec::new(); node_of_unknown.len()];
    for tri in &mesh.triangles {
        for a in 0..3 {
            for b in 0..3 {
                if let (Some(ua), Some(ub)) = (unknown_of_node[tri[a]], unknown_of_node[tri[b]]) {
                    pattern[ua].push(ub);
                }
            }
        }
    }
    for l in &mut pattern {
        l.sort_unstable();
        l.dedup();
    }
    System {
        unknown_of_node,
        node_of_unknown,
        pattern,
    }
}

/// Minimize the penalized energies over the schedule, warm-starting each
/// stage from the previous one.
pub fn solve(
    problem: &Problem,
    schedule: &PenaltySchedule,
    tol: &Tolerances,
    init: InitStrategy,
) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    let mesh = &problem.mesh;
    let polygon = problem.model.polygon();
    let obstacles = Obstacles::compute(&problem.data, polygon, mesh)?;
    let dirichlet = problem.data.dirichlet_values(mesh)?;

    let value_scale = problem
        .data
        .values()
        .iter()
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    let rigid_tol = 1e-12 * value_scale;
    let mut rigid = vec![false; mesh.node_count()];
    let mut rigid_node_count = 0;
    for v in mesh.interior_nodes() {
        if obstacles.upper[v] - obstacles.lower[v] <= rigid_tol {
            rigid[v] = true;
            rigid_node_count += 1;
        }
    }

    let mut u = vec![0.0; mesh.node_count()];
    for &(v, phi) in &dirichlet {
        u[v] = phi;
    }
    for v in mesh.interior_nodes() {
        u[v] = match init {
            InitStrategy::Zero => 0.0f64.clamp(obstacles.lower[v], obstacles.upper[v]),
            InitStrategy::LowerObstacle => obstacles.lower[v],
            InitStrategy::UpperObstacle => obstacles.upper[v],
        };
        if rigid[v] {
            u[v] = 0.5 * (obstacles.lower[v] + obstacles.upper[v]);
        }
    }

    let system = build_system(mesh, &rigid);
    let n_unknowns = system.node_of_unknown.len();
    let tol_kkt = tol.kkt_scale * mesh.total_area();
    let inset = tol.boundary_layer_factor * mesh.h;

    let mut energy_history = Vec::new();
    let mut max_gauge_excess = Vec::new();
    let mut stages = Vec::new();
    let mut iterations = 0usize;
    let mut last_energy: Option<f64> = None;
    let mut final_residual = 0.0;

    for m in 1..=schedule.m_max {
        let pen = build_penalized(&problem.model, m, schedule);
        let mut history = Vec::new();
        let (mut energy, mut grad) = assemble_energy(mesh, &pen, &u);
        history.push(energy);
        let mut residual = projected_residual(&u, &grad, &obstacles, &system);
        let mut converged = residual <= tol_kkt || n_unknowns == 0;
        let mut matrix = SkylineMatrix::from_pattern(&system.pattern);
        let mut iters_this_stage = 0;
        while !converged {
            if iters_this_stage >= tol.max_iterations {
                return Err(SolveError::NonConvergence {
                    stage: m,
                    iterations: iters_this_stage,
                });
            }
            iters_this_stage += 1;
            iterations += 1;
            assemble_hessian(mesh, &pen, &u, &system, &mut matrix);
            // Active bounds with outward gradient are pinned for this step.
            let mut rhs = vec![0.0; n_unknowns];
            for (k, &v) in system.node_of_unknown.iter().enumerate() {
                let at_lower = u[v] <= obstacles.lower[v] + 1e-14 * value_scale;
                let at_upper = u[v] >= obstacles.upper[v] - 1e-14 * value_scale;
                if (at_lower && grad[v] > 0.0) || (at_upper && grad[v] < 0.0) {
                    matrix.pin_identity(k);
                    rhs[k] = 0.0;
                } else {
                    rhs[k] = -grad[v];
                }
            }
            let chol = matrix
                .clone()
                .factorize()
                .map_err(SolveError::LinearSolve)?;
            let d = chol.solve(&rhs);
            // Backtracking along the projected path.
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let mut trial = u.clone();
                let mut dir_dot = 0.0;
                for (k, &v) in system.node_of_unknown.iter().enumerate() {
                    let t =
                        (u[v] + alpha * d[k]).clamp(obstacles.lower[v], obstacles.upper[v]);
                    dir_dot += grad[v] * (t - u[v]);
                    trial[v] = t;
                }
                let (e_trial, g_trial) = assemble_energy(mesh, &pen, &trial);
                if e_trial <= energy + 1e-4 * dir_dot {
                    u = trial;
                    energy = e_trial;
                    grad = g_trial;
                    history.push(energy);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // The quadratic model failed to produce descent at machine
                // precision, which at this point means we sit at the
                // constrained optimum up to rounding.
                break;
            }
            residual = projected_residual(&u, &grad, &obstacles, &system);
            converged = residual <= tol_kkt;
        }
        final_residual = residual;
        let field = ScalarField::new(mesh.clone(), u.clone()).expect("length ok");
        let (excess, _) = constraint_violation(&field, polygon, inset);
        energy_history.push(history);
        max_gauge_excess.push(excess);
        stages.push(m);
        let settled = excess <= tol.constraint
            && last_energy
                .map(|e| (e - energy).abs() <= tol.energy * energy.abs().max(1e-300))
                .unwrap_or(false);
        last_energy = Some(energy);
        if settled {
            break;
        }
    }

    let field = ScalarField::new(mesh.clone(), u).expect("length ok");
    Ok(SolveReport {
        field,
        energy_history,
        max_gauge_excess,
        stages,
        el_residual_norm: final_residual,
        iterations,
        wall_time: start.elapsed(),
        rigid_node_count,
    })
}

fn projected_residual(
    u: &[f64],
    grad: &[f64],
    obstacles: &Obstacles,
    system: &System,
) -> f64 {
    let mut r: f64 = 0.0;
    for &v in &system.node_of_unknown {
        let step = (u[v] - grad[v]).clamp(obstacles.lower[v], obstacles.upper[v]);
        r = r.max((u[v] - step).abs());
    }
    r
}

fn assemble_hessian(
    mesh: &TriMesh,
    pen: &PenalizedTension,
    values: &[f64],
    system: &System,
    matrix: &mut SkylineMatrix,
) {
    matrix.reset();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let mut g = Vector2::zeros();
        for (corner, &v) in tri.iter().enumerate() {
            g += mesh.hat_gradient(t, corner) * values[v];
        }
        let area = mesh.area(t);
        let h = pen.eval(g, 2).hessian.expect("order 2");
        for a in 0..3 {
            let Some(ua) = system.unknown_of_node[tri[a]] else {
                continue;
            };
            let ga = mesh.hat_gradient(t, a);
            for b in 0..3 {
                let Some(ub) = system.unknown_of_node[tri[b]] else {
                    continue;
                };
                if ub > ua {
                    continue;
                }
                let gb = mesh.hat_gradient(t, b);
                matrix.add(ua, ub, area * (ga.transpose() * h * gb)[(0, 0)]);
            }
        }
    }
}
