//! Numerical probes of the regularity structure of solver outputs:
//! cutoff derivative energies, gradient moduli of continuity, facet
//! geometry, discontinuity segments, and continuity through the sphere map.
//!
//! Everything here is a pure function of an immutable field and explicit
//! tolerances; verdicts are deterministic. Gradient recovery is the
//! area-weighted nodal average of the piecewise-constant P1 gradients.

use nalgebra::Vector2;
use std::collections::HashMap;

use crate::error::DiagnosticsError;
use crate::field::ScalarField;
use crate::geometry::GradientPolygon;

/// Cutoff-energy parameters: direction, thresholds and window disk for
/// `int |grad G(u_e)|^2` with the smoothstep cutoff G.
#[derive(Clone, Copy, Debug)]
pub struct CaccioppoliParams {
    pub direction: Vector2<f64>,
    pub c0: f64,
    pub c1: f64,
    pub window_center: Vector2<f64>,
    pub window_radius: f64,
}

/// The cutoff: smoothstep rescaled to [c0, c1]; 0 below, 1 above, slope
/// bounded by 1.5/(c1-c0).
pub fn smooth_step(t: f64, c0: f64, c1: f64) -> f64 {
    let s = ((t - c0) / (c1 - c0)).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn check_window(
    u: &ScalarField,
    center: Vector2<f64>,
    radius: f64,
) -> Result<(), DiagnosticsError> {
    if u.mesh().distance_to_boundary(center) < radius {
        return Err(DiagnosticsError::WindowOutsideDomain {
            center: (center.x, center.y),
            radius,
        });
    }
    Ok(())
}

/// `int_window |grad G(u_e)|^2` with `u_e` the recovered nodal directional
/// derivative and the gradient taken triangle-wise on `G(u_e)`.
pub fn caccioppoli_energy(
    u: &ScalarField,
    params: &CaccioppoliParams,
) -> Result<f64, DiagnosticsError> {
    assert!(params.c0 < params.c1, "thresholds must be ordered");
    check_window(u, params.window_center, params.window_radius)?;
    let mesh = u.mesh();
    let e = params.direction.normalize();
    let per_tri: Vec<f64> = (0..mesh.triangle_count())
        .map(|t| e.dot(&u.gradient(t)))
        .collect();
    let u_e = u.recover_triangle_scalar(&per_tri);
    let g_of_ue: Vec<f64> = u_e
        .iter()
        .map(|&t| smooth_step(t, params.c0, params.c1))
        .collect();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if (mesh.barycenter(t) - params.window_center).norm() > params.window_radius {
            continue;
        }
        let mut grad = Vector2::zeros();
        for (corner, &v) in tri.iter().enumerate() {
            grad += mesh.hat_gradient(t, corner) * g_of_ue[v];
        }
        total += mesh.area(t) * grad.norm_squared();
    }
    Ok(total)
}

/// `int` of the squared Frobenius norm of the recovered Hessian over the
/// window triangles whose raw gradient satisfies the predicate.
pub fn hessian_energy(
    u: &ScalarField,
    gradient_region: impl Fn(Vector2<f64>) -> bool,
    window_center: Vector2<f64>,
    window_radius: f64,
) -> Result<f64, DiagnosticsError> {
    check_window(u, window_center, window_radius)?;
    let mesh = u.mesh();
    let nodal = u.recovered_nodal_gradients();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if (mesh.barycenter(t) - window_center).norm() > window_radius {
            continue;
        }
        if !gradient_region(u.gradient(t)) {
            continue;
        }
        let mut hx = Vector2::zeros();
        let mut hy = Vector2::zeros();
        for (corner, &v) in tri.iter().enumerate() {
            let hat = mesh.hat_gradient(t, corner);
            hx += hat * nodal[v].x;
            hy += hat * nodal[v].y;
        }
        total += mesh.area(t) * (hx.norm_squared() + hy.norm_squared());
    }
    Ok(total)
}

/// Modulus-of-continuity curve: `omega(delta) = max over sampled centers of
/// diam(grad u(B_delta(center)))`, over triangle gradients with barycenter
/// in the ball. Centers are interior mesh nodes at distance >= `margin`
/// from the boundary, subsampled deterministically to at most 400.
pub fn gradient_modulus(u: &ScalarField, radii: &[f64], margin: f64) -> Vec<(f64, f64)> {
    curve_of_moduli(u, radii, margin, |g| [g.x, g.y, 0.0])
}

/// Same construction applied to `H(grad u)`: jumps between gradients that
/// both sit near the constraint boundary collapse, which is the point of
/// the sphere map.
pub fn h_continuity(
    u: &ScalarField,
    n: &GradientPolygon,
    radii: &[f64],
    margin: f64,
) -> Vec<(f64, f64)> {
    curve_of_moduli(u, radii, margin, |g| n.h_map(g))
}

fn curve_of_moduli(
    u: &ScalarField,
    radii: &[f64],
    margin: f64,
    map: impl Fn(Vector2<f64>) -> [f64; 3],
) -> Vec<(f64, f64)> {
    let mesh = u.mesh();
    let centers: Vec<Vector2<f64>> = {
        let all: Vec<Vector2<f64>> = mesh
            .nodes
            .iter()
            .copied()
            .filter(|&p| mesh.distance_to_boundary(p) >= margin)
            .collect();
        let stride = (all.len() / 400).max(1);
        all.into_iter().step_by(stride).collect()
    };
    let images: Vec<(Vector2<f64>, [f64; 3])> = (0..mesh.triangle_count())
        .map(|t| (mesh.barycenter(t), map(u.gradient(t))))
        .collect();
    let mut curve = Vec::with_capacity(radii.len());
    for &delta in radii {
        let mut omega: f64 = 0.0;
        for &c in &centers {
            let members: Vec<&[f64; 3]> = images
                .iter()
                .filter(|(b, _)| (b - c).norm() <= delta)
                .map(|(_, v)| v)
                .collect();
            for i in 0..members.len() {
                for j in (i + 1)..members.len() {
                    let d = (0..3)
                        .map(|k| (members[i][k] - members[j][k]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    omega = omega.max(d);
                }
            }
        }
        curve.push((delta, omega));
    }
    curve
}

/// One detected facet: the connected region where the gradient sits within
/// `facet_tol` of a polygon vertex, with its outline split into the two
/// graphs over the axis perpendicular to the vertex direction.
#[derive(Clone, Debug)]
pub struct FacetReport {
    pub vertex_index: usize,
    pub vertex: Vector2<f64>,
    pub triangles: Vec<usize>,
    /// Outline chains in world coordinates, ordered along the chain.
    pub upper_chain: Vec<Vector2<f64>>,
    pub lower_chain: Vec<Vector2<f64>>,
    pub upper_convex: bool,
    pub lower_concave: bool,
    pub worst_upper_violation: f64,
    pub worst_lower_violation: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FacetOptions {
    /// Gradient distance to the vertex defining facet membership.
    pub facet_tol: f64,
    /// Verdicts pass when the worst second-difference violation is below.
    pub geometric_tol: f64,
    /// Chain points within this distance of the domain boundary do not
    /// enter the verdicts; only the outline inside the domain carries the
    /// convex/concave structure.
    pub boundary_skip: f64,
    /// Components smaller than this many triangles are noise.
    pub min_triangles: usize,
}

impl FacetOptions {
    pub fn for_mesh_size(facet_tol: f64, h: f64) -> Self {
        Self {
            facet_tol,
            geometric_tol: 2.0 * h,
            boundary_skip: 2.0 * h,
            min_triangles: 4,
        }
    }
}

pub fn detect_facets(u: &ScalarField, n: &GradientPolygon, facet_tol: f64) -> Vec<FacetReport> {
    detect_facets_with(u, n, &FacetOptions::for_mesh_size(facet_tol, u.mesh().h))
}

pub fn detect_facets_with(
    u: &ScalarField,
    n: &GradientPolygon,
    opts: &FacetOptions,
) -> Vec<FacetReport> {
    let mesh = u.mesh();
    let edge_tris = edge_triangles(mesh);
    let mut reports = Vec::new();
    for (vi, &p) in n.vertices().iter().enumerate() {
        let marked: Vec<bool> = (0..mesh.triangle_count())
            .map(|t| (u.gradient(t) - p).norm() <= opts.facet_tol)
            .collect();
        let omega = n.vertex_inward_direction(vi);
        for component in connected_components(mesh, &edge_tris, &marked) {
            if component.len() < opts.min_triangles {
                continue;
            }
            if let Some(report) = facet_report(u, vi, p, omega, &component, &edge_tris, opts) {
                reports.push(report);
            }
        }
    }
    reports
}

fn edge_triangles(mesh: &crate::mesh::TriMesh) -> HashMap<(usize, usize), Vec<usize>> {
    let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            map.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    map
}

fn connected_components(
    mesh: &crate::mesh::TriMesh,
    edge_tris: &HashMap<(usize, usize), Vec<usize>>,
    marked: &[bool],
) -> Vec<Vec<usize>> {
    let mut seen = vec![false; marked.len()];
    let mut components = Vec::new();
    for start in 0..marked.len() {
        if !marked[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(t) = stack.pop() {
            comp.push(t);
            let tri = mesh.triangles[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                for &other in &edge_tris[&(a.min(b), a.max(b))] {
                    if other != t && marked[other] && !seen[other] {
                        seen[other] = true;
                        stack.push(other);
                    }
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}

fn facet_report(
    u: &ScalarField,
    vertex_index: usize,
    vertex: Vector2<f64>,
    omega: Vector2<f64>,
    component: &[usize],
    edge_tris: &HashMap<(usize, usize), Vec<usize>>,
    opts: &FacetOptions,
) -> Option<FacetReport> {
    let mesh = u.mesh();
    let in_comp: std::collections::HashSet<usize> = component.iter().copied().collect();
    // Directed outline half-edges: CCW triangles trace the region CCW.
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &t in component {
        let tri = mesh.triangles[t];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let shared = &edge_tris[&(a.min(b), a.max(b))];
            let exposed = shared.iter().all(|&o| o == t || !in_comp.contains(&o));
            if exposed {
                next.entry(a).or_insert(b);
            }
        }
    }
    // Trace cycles; keep the one with the largest enclosed area.
    let mut visited: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    for s in starts {
        if visited.contains(&s) {
            continue;
        }
        let mut cycle = vec![s];
        visited.insert(s);
        let mut cur = s;
        loop {
            let Some(&n) = next.get(&cur) else { break };
            if n == s {
                break;
            }
            if visited.contains(&n) {
                break;
            }
            visited.insert(n);
            cycle.push(n);
            cur = n;
        }
        if cycle.len() >= 3 {
            let area: f64 = (0..cycle.len())
                .map(|k| {
                    let a = mesh.nodes[cycle[k]];
                    let b = mesh.nodes[cycle[(k + 1) % cycle.len()]];
                    a.x * b.y - b.x * a.y
                })
                .sum();
            if best.as_ref().map(|(ba, _)| area.abs() > *ba).unwrap_or(true) {
                best = Some((area.abs(), cycle));
            }
        }
    }
    let (_, cycle) = best?;
    // Split at the extreme parameters along the axis perpendicular to omega.
    let s_axis = Vector2::new(omega.y, -omega.x);
    let s_of = |v: usize| mesh.nodes[v].dot(&s_axis);
    let t_of = |v: usize| mesh.nodes[v].dot(&omega);
    let imin = (0..cycle.len())
        .min_by(|&a, &b| s_of(cycle[a]).total_cmp(&s_of(cycle[b])))
        .unwrap();
    let imax = (0..cycle.len())
        .max_by(|&a, &b| s_of(cycle[a]).total_cmp(&s_of(cycle[b])))
        .unwrap();
    let mut chain_a = Vec::new();
    let mut k = imin;
    loop {
        chain_a.push(cycle[k]);
        if k == imax {
            break;
        }
        k = (k + 1) % cycle.len();
    }
    let mut chain_b = Vec::new();
    let mut k = imax;
    loop {
        chain_b.push(cycle[k]);
        if k == imin {
            break;
        }
        k = (k + 1) % cycle.len();
    }
    chain_b.reverse();
    let mean_t = |chain: &[usize]| -> f64 {
        chain.iter().map(|&v| t_of(v)).sum::<f64>() / chain.len().max(1) as f64
    };
    let (upper_idx, lower_idx) = if mean_t(&chain_a) >= mean_t(&chain_b) {
        (chain_a, chain_b)
    } else {
        (chain_b, chain_a)
    };
    // Second-difference verdicts over interior chain points.
    let violation = |chain: &[usize], upper: bool| -> f64 {
        let pts: Vec<(f64, f64)> = chain
            .iter()
            .filter(|&&v| mesh.distance_to_boundary(mesh.nodes[v]) > opts.boundary_skip)
            .map(|&v| (s_of(v), t_of(v)))
            .collect();
        let mut worst: f64 = 0.0;
        for w in pts.windows(3) {
            let (s1, t1) = w[0];
            let (s2, t2) = w[1];
            let (s3, t3) = w[2];
            if (s3 - s1).abs() < 1e-14 {
                continue;
            }
            let lerp = t1 + (t3 - t1) * (s2 - s1) / (s3 - s1);
            let v = if upper { t2 - lerp } else { lerp - t2 };
            worst = worst.max(v);
        }
        worst
    };
    let worst_upper = violation(&upper_idx, true);
    let worst_lower = violation(&lower_idx, false);
    Some(FacetReport {
        vertex_index,
        vertex,
        triangles: component.to_vec(),
        upper_chain: upper_idx.iter().map(|&v| mesh.nodes[v]).collect(),
        lower_chain: lower_idx.iter().map(|&v| mesh.nodes[v]).collect(),
        upper_convex: worst_upper <= opts.geometric_tol,
        lower_concave: worst_lower <= opts.geometric_tol,
        worst_upper_violation: worst_upper,
        worst_lower_violation: worst_lower,
    })
}

/// One fitted discontinuity segment.
#[derive(Clone, Debug)]
pub struct JumpSegment {
    pub midpoint: Vector2<f64>,
    pub direction: Vector2<f64>,
    /// Parameter range along `direction` relative to `midpoint`.
    pub extent: (f64, f64),
    pub matched_side: usize,
    pub angular_deviation_deg: f64,
    pub reaches_boundary: (bool, bool),
    pub affine_residual: f64,
    pub edge_count: usize,
    pub compliant: bool,
}

#[derive(Clone, Debug)]
pub struct JumpReport {
    pub segments: Vec<JumpSegment>,
    pub jump_edge_count: usize,
    pub angular_tol_deg: f64,
    pub reach_tol: f64,
    pub affine_tol: f64,
}

/// Cluster high-jump edges into chains, fit a segment to each, and check
/// the three marks of a structural discontinuity segment: direction within
/// 5 degrees of a side normal, boundary reach within 2h, and the
/// restriction of `u` affine with the side-vertex slope within 4 h M.
pub fn detect_jump_segments(
    u: &ScalarField,
    n: &GradientPolygon,
    jump_tol: f64,
) -> JumpReport {
    let mesh = u.mesh();
    let angular_tol_deg = 5.0;
    let reach_tol = 2.0 * mesh.h;
    let affine_tol = 4.0 * mesh.h * u.lipschitz_bound();
    let cluster_angle_cos = (15.0_f64).to_radians().cos();

    let edge_tris = edge_triangles(mesh);
    // Jump edges with their (sign-ambiguous) jump directions.
    let mut edges: Vec<((usize, usize), Vector2<f64>)> = Vec::new();
    let mut keys: Vec<(usize, usize)> = edge_tris.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let tris = &edge_tris[&key];
        if tris.len() != 2 {
            continue;
        }
        let d = u.gradient(tris[0]) - u.gradient(tris[1]);
        if d.norm() > jump_tol {
            edges.push((key, d.normalize()));
        }
    }
    let jump_edge_count = edges.len();
    // Union-find over edges sharing a node with agreeing jump direction.
    let mut parent: Vec<usize> = (0..edges.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let mut by_node: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, ((a, b), _)) in edges.iter().enumerate() {
        by_node.entry(*a).or_default().push(i);
        by_node.entry(*b).or_default().push(i);
    }
    let mut nodes: Vec<usize> = by_node.keys().copied().collect();
    nodes.sort_unstable();
    for v in nodes {
        let list = &by_node[&v];
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                let (ei, ej) = (list[i], list[j]);
                if edges[ei].1.dot(&edges[ej].1).abs() >= cluster_angle_cos {
                    let (ri, rj) = (find(&mut parent, ei), find(&mut parent, ej));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
    }
    let mut clusters: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..edges.len() {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let mut roots: Vec<usize> = clusters.keys().copied().collect();
    roots.sort_unstable();

    let mut segments = Vec::new();
    for root in roots {
        let members = &clusters[&root];
        if members.len() < 2 {
            continue;
        }
        // Fit the principal direction through the member edge endpoints.
        let mut node_set: Vec<usize> = members
            .iter()
            .flat_map(|&i| [edges[i].0 .0, edges[i].0 .1])
            .collect();
        node_set.sort_unstable();
        node_set.dedup();
        let pts: Vec<Vector2<f64>> = node_set.iter().map(|&v| mesh.nodes[v]).collect();
        let mean = pts.iter().fold(Vector2::zeros(), |a, p| a + p) / pts.len() as f64;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &pts {
            let d = p - mean;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let dir = Vector2::new(theta.cos(), theta.sin());
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &pts {
            let t = (p - mean).dot(&dir);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        // Match by the gradient pairs across the jump: the side whose
        // endpoints are nearest to the two one-sided gradients. (Matching by
        // direction alone cannot tell opposite sides of a symmetric polygon
        // apart.)
        let mut matched_side = 0;
        let mut best_score = f64::INFINITY;
        for i in 0..n.side_count() {
            let pi = n.vertices()[i];
            let pj = n.vertices()[(i + 1) % n.side_count()];
            let mut score = 0.0;
            for &e in members {
                let ga = u.gradient(edge_tris[&edges[e].0][0]);
                let gb = u.gradient(edge_tris[&edges[e].0][1]);
                score += ((ga - pi).norm() + (gb - pj).norm())
                    .min((ga - pj).norm() + (gb - pi).norm());
            }
            if score < best_score {
                best_score = score;
                matched_side = i;
            }
        }
        let cosine = n.inward_normal(matched_side).dot(&dir).abs();
        let angular_deviation_deg = cosine.clamp(-1.0, 1.0).acos().to_degrees();
        let end_lo = mean + dir * lo;
        let end_hi = mean + dir * hi;
        let reaches = (
            mesh.distance_to_boundary(end_lo) <= reach_tol,
            mesh.distance_to_boundary(end_hi) <= reach_tol,
        );
        // Affine check against both endpoint slopes of the matched side
        // (they agree on the segment line itself).
        let side = (
            n.vertices()[matched_side],
            n.vertices()[(matched_side + 1) % n.side_count()],
        );
        let residual_for = |p: Vector2<f64>| -> f64 {
            let samples: Vec<f64> = node_set
                .iter()
                .map(|&v| u.values()[v] - p.dot(&mesh.nodes[v]))
                .collect();
            let c = samples.iter().sum::<f64>() / samples.len() as f64;
            samples
                .iter()
                .map(|s| (s - c).abs())
                .fold(0.0, f64::max)
        };
        let affine_residual = residual_for(side.0).min(residual_for(side.1));
        let compliant = angular_deviation_deg <= angular_tol_deg
            && (reaches.0 || reaches.1)
            && affine_residual <= affine_tol;
        segments.push(JumpSegment {
            midpoint: mean,
            direction: dir,
            extent: (lo, hi),
            matched_side,
            angular_deviation_deg,
            reaches_boundary: reaches,
            affine_residual,
            edge_count: members.len(),
            compliant,
        });
    }
    segments.sort_by(|a, b| b.edge_count.cmp(&a.edge_count));
    JumpReport {
        segments,
        jump_edge_count,
        angular_tol_deg,
        reach_tol,
        affine_tol,
    }
}
