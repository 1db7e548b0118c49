//! Conforming P1 triangulations of polygonal domains.
//!
//! Presets are structured so acceptance runs are reproducible bit-for-bit:
//! - rectangles: a regular grid split along the (+1,+1) diagonal;
//! - hexagons (projections of boxes along (1,1,1)): the triangular lattice
//!   itself, so solver nodes coincide with sampler sites at matching
//!   resolution.
//!
//! General simple polygons are ear-clipped and then uniformly refined
//! (4-way midpoint subdivision) until the target mesh size is met.

use nalgebra::Vector2;
use std::collections::HashMap;

use crate::error::MeshError;

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub nodes: Vec<Vector2<f64>>,
    /// Counterclockwise index triples.
    pub triangles: Vec<[usize; 3]>,
    /// Node indices along the domain boundary, as an ordered closed loop.
    pub boundary_loop: Vec<usize>,
    /// Max edge length.
    pub h: f64,
    areas: Vec<f64>,
    /// Gradients of the three nodal hat functions per triangle.
    hat_gradients: Vec<[Vector2<f64>; 3]>,
    is_boundary: Vec<bool>,
    node_triangles: Vec<Vec<usize>>,
}

impl TriMesh {
    pub fn new(
        nodes: Vec<Vector2<f64>>,
        triangles: Vec<[usize; 3]>,
        boundary_loop: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let mut areas = Vec::with_capacity(triangles.len());
        let mut hat_gradients = Vec::with_capacity(triangles.len());
        let mut h: f64 = 0.0;
        for (index, t) in triangles.iter().enumerate() {
            let [a, b, c] = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
            let area2 = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
            if area2 <= 0.0 {
                return Err(MeshError::DegenerateTriangle { index });
            }
            areas.push(0.5 * area2);
            // grad of the hat at vertex k: rotate the opposite edge by 90
            // degrees into the triangle and normalize by twice the area.
            let grads = [
                perp(c - b) / area2,
                perp(a - c) / area2,
                perp(b - a) / area2,
            ];
            hat_gradients.push(grads);
            h = h.max((b - a).norm()).max((c - b).norm()).max((a - c).norm());
        }
        let mut is_boundary = vec![false; nodes.len()];
        for &i in &boundary_loop {
            is_boundary[i] = true;
        }
        let mut node_triangles = vec![Vec::new(); nodes.len()];
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                node_triangles[v].push(ti);
            }
        }
        Ok(Self {
            nodes,
            triangles,
            boundary_loop,
            h,
            areas,
            hat_gradients,
            is_boundary,
            node_triangles,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn hat_gradient(&self, t: usize, corner: usize) -> Vector2<f64> {
        self.hat_gradients[t][corner]
    }

    pub fn is_boundary_node(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.is_boundary[v])
    }

    pub fn triangles_at_node(&self, v: usize) -> &[usize] {
        &self.node_triangles[v]
    }

    pub fn barycenter(&self, t: usize) -> Vector2<f64> {
        let [a, b, c] = self.triangles[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    /// Lumped nodal area weights (each triangle contributes a third).
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                w[v] += self.areas[ti] / 3.0;
            }
        }
        w
    }

    /// Distance from a point to the boundary polyline.
    pub fn distance_to_boundary(&self, p: Vector2<f64>) -> f64 {
        let n = self.boundary_loop.len();
        let mut d = f64::INFINITY;
        for i in 0..n {
            let a = self.nodes[self.boundary_loop[i]];
            let b = self.nodes[self.boundary_loop[(i + 1) % n]];
            d = d.min((crate::geometry::closest_on_segment(a, b, p) - p).norm());
        }
        d
    }

    /// Locate the triangle containing `p` (with a small tolerance) and its
    /// barycentric coordinates there. Linear scan; meshes are desk-scale.
    pub fn locate(&self, p: Vector2<f64>) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for (ti, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]];
            let area2 = 2.0 * self.areas[ti];
            let l0 = ((b - p).x * (c - p).y - (b - p).y * (c - p).x) / area2;
            let l1 = ((c - p).x * (a - p).y - (c - p).y * (a - p).x) / area2;
            let l2 = 1.0 - l0 - l1;
            let worst = l0.min(l1).min(l2);
            if worst >= -1e-10 {
                return Some((ti, [l0, l1, l2]));
            }
            if best.map(|(_, _, w)| worst > w).unwrap_or(true) {
                best = Some((ti, [l0, l1, l2], worst));
            }
        }
        // Accept a slightly-outside point (mesh-boundary rounding).
        best.filter(|&(_, _, w)| w > -1e-6).map(|(t, l, _)| (t, l))
    }

    /// Structured rectangle mesh on [x0, x0+w] x [y0, y0+h] with nx-by-ny
    /// cells, each split along the lower-left to upper-right diagonal.
    pub fn structured_rectangle(
        x0: f64,
        y0: f64,
        w: f64,
        h: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self, MeshError> {
        if nx < 2 || ny < 2 || w <= 0.0 || h <= 0.0 {
            return Err(MeshError::BadResolution(format!(
                "rectangle {nx}x{ny} with extents {w}x{h}"
            )));
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Vector2::new(
                    x0 + w * i as f64 / nx as f64,
                    y0 + h * j as f64 / ny as f64,
                ));
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut ring = Vec::new();
        for i in 0..nx {
            ring.push(id(i, 0));
        }
        for j in 0..ny {
            ring.push(id(nx, j));
        }
        for i in (1..=nx).rev() {
            ring.push(id(i, ny));
        }
        for j in (1..=ny).rev() {
            ring.push(id(0, j));
        }
        Self::new(nodes, triangles, ring)
    }

    /// Triangular-lattice mesh of the hexagon that is the (1,1,1)-projection
    /// of the box [0,a] x [0,b] x [0,c], with `refine` lattice steps per box
    /// unit. Node (i,j) of the lattice sits at
    /// ((i-j)/sqrt2, (i+j)/sqrt6) / refine.
    pub fn lattice_hexagon(a: u32, b: u32, c: u32, refine: u32) -> Result<Self, MeshError> {
        if a == 0 || b == 0 || c == 0 || refine == 0 {
            return Err(MeshError::BadResolution(format!(
                "hexagon {a}x{b}x{c} refine {refine}"
            )));
        }
        let (an, bn, cn) = (
            (a * refine) as i64,
            (b * refine) as i64,
            (c * refine) as i64,
        );
        let eps = 1.0 / refine as f64;
        let in_hex = |i: i64, j: i64| hexagon_contains(an, bn, cn, i, j);
        let mut index = HashMap::new();
        let mut nodes = Vec::new();
        let mut sites = Vec::new();
        for i in -cn..=an {
            for j in -cn..=bn {
                if in_hex(i, j) {
                    index.insert((i, j), nodes.len());
                    nodes.push(lattice_position(i, j) * eps);
                    sites.push((i, j));
                }
            }
        }
        let mut triangles = Vec::new();
        for &(i, j) in &sites {
            // Up triangle (v, v+(1,0), v+(1,1)) and down (v, v+(1,1), v+(0,1)).
            if let (Some(&v0), Some(&v1), Some(&v2)) = (
                index.get(&(i, j)),
                index.get(&(i + 1, j)),
                index.get(&(i + 1, j + 1)),
            ) {
                triangles.push([v0, v1, v2]);
            }
            if let (Some(&v0), Some(&v1), Some(&v2)) = (
                index.get(&(i, j)),
                index.get(&(i + 1, j + 1)),
                index.get(&(i, j + 1)),
            ) {
                triangles.push([v0, v1, v2]);
            }
        }
        let ring = hexagon_rim(an, bn, cn)
            .into_iter()
            .map(|s| index[&s])
            .collect();
        Self::new(nodes, triangles, ring)
    }

    /// Mesh a simple polygon: ear clipping, then uniform midpoint refinement
    /// until the mesh size is at most `target_h`.
    pub fn polygon(ring: &[Vector2<f64>], target_h: f64) -> Result<Self, MeshError> {
        if ring.len() < 3 || target_h <= 0.0 {
            return Err(MeshError::EarClipFailed);
        }
        let mut nodes: Vec<Vector2<f64>> = ring.to_vec();
        // Enforce CCW.
        let area2: f64 = (0..nodes.len())
            .map(|i| {
                let a = nodes[i];
                let b = nodes[(i + 1) % nodes.len()];
                a.x * b.y - b.x * a.y
            })
            .sum();
        if area2 < 0.0 {
            nodes.reverse();
        }
        let mut triangles = ear_clip(&nodes)?;
        let mut boundary_ring: Vec<usize> = (0..nodes.len()).collect();
        let max_edge = |nodes: &[Vector2<f64>], tris: &[[usize; 3]]| -> f64 {
            tris.iter()
                .map(|t| {
                    let [a, b, c] = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
                    (b - a).norm().max((c - b).norm()).max((a - c).norm())
                })
                .fold(0.0, f64::max)
        };
        // Refine at least once so interior nodes exist; flip to Delaunay after
        // every pass to clear the slivers ear clipping leaves behind.
        loop {
            let (n2, t2, b2) = refine_once(&nodes, &triangles, &boundary_ring);
            nodes = n2;
            triangles = t2;
            boundary_ring = b2;
            delaunay_flips(&nodes, &mut triangles);
            if max_edge(&nodes, &triangles) <= target_h {
                break;
            }
        }
        Self::new(nodes, triangles, boundary_ring)
    }
}

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Lattice coordinates: the (1,1,1)-projection of integer points, in the
/// frame w1 = (1,-1,0)/sqrt2, w2 = (1,1,-2)/sqrt6.
pub fn lattice_position(i: i64, j: i64) -> Vector2<f64> {
    Vector2::new(
        (i - j) as f64 / 2.0_f64.sqrt(),
        (i + j) as f64 / 6.0_f64.sqrt(),
    )
}

/// Membership of the two-axis lattice hexagon for the a x b x c box:
/// -c <= i <= a, -c <= j <= b, -b <= i-j <= a.
pub fn hexagon_contains(a: i64, b: i64, c: i64, i: i64, j: i64) -> bool {
    -c <= i && i <= a && -c <= j && j <= b && -b <= i - j && i - j <= a
}

/// The rim sites of the lattice hexagon in counterclockwise order, starting
/// at the corner (a, 0) and following the sides
/// (a,0)-(a,b)-(0,b)-(-c,b-c)-(-c,-c)-(a-c,-c)-(a,0).
pub fn hexagon_rim(a: i64, b: i64, c: i64) -> Vec<(i64, i64)> {
    let mut rim = Vec::with_capacity(2 * (a + b + c) as usize);
    for j in 0..b {
        rim.push((a, j));
    }
    for k in 0..a {
        rim.push((a - k, b));
    }
    for k in 0..c {
        rim.push((-k, b - k));
    }
    for k in 0..b {
        rim.push((-c, b - c - k));
    }
    for k in 0..a {
        rim.push((-c + k, -c));
    }
    for k in 0..c {
        rim.push((a - c + k, -c + k));
    }
    rim
}

fn ear_clip(nodes: &[Vector2<f64>]) -> Result<Vec<[usize; 3]>, MeshError> {
    let n = nodes.len();
    let mut ring: Vec<usize> = (0..n).collect();
    let mut triangles = Vec::with_capacity(n - 2);
    let mut guard = 0;
    while ring.len() > 3 {
        let m = ring.len();
        let mut clipped = false;
        for k in 0..m {
            let i0 = ring[(k + m - 1) % m];
            let i1 = ring[k];
            let i2 = ring[(k + 1) % m];
            let (a, b, c) = (nodes[i0], nodes[i1], nodes[i2]);
            let cr = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
            if cr <= 1e-14 {
                continue;
            }
            // No other ring vertex inside the candidate ear.
            let mut ok = true;
            for &j in &ring {
                if j == i0 || j == i1 || j == i2 {
                    continue;
                }
                if point_in_triangle(nodes[j], a, b, c) {
                    ok = false;
                    break;
                }
            }
            if ok {
                triangles.push([i0, i1, i2]);
                ring.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(MeshError::EarClipFailed);
        }
        guard += 1;
        if guard > 10 * n {
            return Err(MeshError::EarClipFailed);
        }
    }
    triangles.push([ring[0], ring[1], ring[2]]);
    Ok(triangles)
}

/// Lawson flip passes: flip every interior edge that fails the in-circle
/// test until the triangulation is (locally) Delaunay. Boundary edges have a
/// single incident triangle and are never touched, so the result respects
/// the input polygon.
fn delaunay_flips(nodes: &[Vector2<f64>], triangles: &mut Vec<[usize; 3]>) {
    for _pass in 0..60 {
        let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edge_map.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        let mut dirty = vec![false; triangles.len()];
        let mut flipped_any = false;
        let mut keys: Vec<_> = edge_map.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let tris = &edge_map[&key];
            if tris.len() != 2 {
                continue;
            }
            let (t1, t2) = (tris[0], tris[1]);
            if dirty[t1] || dirty[t2] {
                continue;
            }
            let (a, b) = key;
            let c = *triangles[t1].iter().find(|&&v| v != a && v != b).unwrap();
            let d = *triangles[t2].iter().find(|&&v| v != a && v != b).unwrap();
            if c == d {
                continue;
            }
            if in_circumcircle(nodes[a], nodes[b], nodes[c], nodes[d]) {
                // Replace (a,b,c) and (a,b,d) with (c,d,a) and (d,c,b),
                // orienting each CCW.
                let mk = |x: usize, y: usize, z: usize| -> Option<[usize; 3]> {
                    let cr = (nodes[y] - nodes[x]).x * (nodes[z] - nodes[x]).y
                        - (nodes[y] - nodes[x]).y * (nodes[z] - nodes[x]).x;
                    if cr > 1e-14 {
                        Some([x, y, z])
                    } else if cr < -1e-14 {
                        Some([x, z, y])
                    } else {
                        None
                    }
                };
                if let (Some(n1), Some(n2)) = (mk(c, d, a), mk(d, c, b)) {
                    triangles[t1] = n1;
                    triangles[t2] = n2;
                    dirty[t1] = true;
                    dirty[t2] = true;
                    flipped_any = true;
                }
            }
        }
        if !flipped_any {
            break;
        }
    }
}

fn in_circumcircle(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>, d: Vector2<f64>) -> bool {
    // Positive determinant <=> d strictly inside the circumcircle of the CCW
    // triangle (a, b, c). Orient (a, b, c) CCW first.
    let orient = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
    let (b, c) = if orient >= 0.0 { (b, c) } else { (c, b) };
    let m = |p: Vector2<f64>| (p.x - d.x, p.y - d.y, (p.x * p.x - d.x * d.x) + (p.y * p.y - d.y * d.y));
    let (ax, ay, az) = m(a);
    let (bx, by, bz) = m(b);
    let (cx, cy, cz) = m(c);
    let det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx);
    det > 1e-14
}

fn point_in_triangle(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> bool {
    let s0 = (b - a).x * (p - a).y - (b - a).y * (p - a).x;
    let s1 = (c - b).x * (p - b).y - (c - b).y * (p - b).x;
    let s2 = (a - c).x * (p - c).y - (a - c).y * (p - c).x;
    s0 > 1e-14 && s1 > 1e-14 && s2 > 1e-14
}

fn refine_once(
    nodes: &[Vector2<f64>],
    triangles: &[[usize; 3]],
    boundary_ring: &[usize],
) -> (Vec<Vector2<f64>>, Vec<[usize; 3]>, Vec<usize>) {
    let mut nodes = nodes.to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, nodes: &mut Vec<Vector2<f64>>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            nodes.push((nodes[a] + nodes[b]) * 0.5);
            nodes.len() - 1
        })
    };
    let mut out = Vec::with_capacity(4 * triangles.len());
    for t in triangles {
        let [a, b, c] = *t;
        let ab = mid(a, b, &mut nodes);
        let bc = mid(b, c, &mut nodes);
        let ca = mid(c, a, &mut nodes);
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    // Boundary ring picks up the edge midpoints.
    let m = boundary_ring.len();
    let mut ring = Vec::with_capacity(2 * m);
    for k in 0..m {
        let a = boundary_ring[k];
        let b = boundary_ring[(k + 1) % m];
        ring.push(a);
        ring.push(mid(a, b, &mut nodes));
    }
    (nodes, out, ring)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_rectangle_counts_and_area() {
        let m = TriMesh::structured_rectangle(0.0, 0.0, 1.0, 1.0, 8, 8).unwrap();
        assert_eq!(m.node_count(), 81);
        assert_eq!(m.triangle_count(), 128);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert_eq!(m.boundary_loop.len(), 32);
        assert_eq!(m.interior_nodes().count(), 49);
        assert!((m.h - 2.0_f64.sqrt() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_hexagon_small() {
        let m = TriMesh::lattice_hexagon(1, 1, 1, 1).unwrap();
        assert_eq!(m.node_count(), 7);
        assert_eq!(m.triangle_count(), 6);
        assert_eq!(m.boundary_loop.len(), 6);
        assert_eq!(m.interior_nodes().count(), 1);
        // Regular unit hexagon with side sqrt(2/3).
        let side = (2.0_f64 / 3.0).sqrt();
        assert!((m.total_area() - 1.5 * 3.0_f64.sqrt() * side * side).abs() < 1e-12);
    }

    #[test]
    fn lattice_hexagon_refined_matches_domain() {
        for refine in [1u32, 2, 3] {
            let m = TriMesh::lattice_hexagon(2, 1, 1, refine).unwrap();
            let sides = 2 * ((2 + 1 + 1) * refine) as usize;
            assert_eq!(m.boundary_loop.len(), sides);
            // Hexagon area is the same at every refinement.
            let m1 = TriMesh::lattice_hexagon(2, 1, 1, 1).unwrap();
            assert!((m.total_area() - m1.total_area()).abs() < 1e-10);
        }
    }

    #[test]
    fn polygon_mesher_refines_to_target() {
        let ring = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.8, 0.8),
            Vector2::new(0.2, 1.1),
        ];
        let m = TriMesh::polygon(&ring, 0.2).unwrap();
        assert!(m.h <= 0.2);
        let quad_area = 0.5
            * ((0..4)
                .map(|i| {
                    let a = ring[i];
                    let b = ring[(i + 1) % 4];
                    a.x * b.y - b.x * a.y
                })
                .sum::<f64>());
        assert!((m.total_area() - quad_area).abs() < 1e-10);
    }

    #[test]
    fn locate_and_barycentrics() {
        let m = TriMesh::structured_rectangle(0.0, 0.0, 1.0, 1.0, 4, 4).unwrap();
        let p = Vector2::new(0.33, 0.41);
        let (t, l) = m.locate(p).unwrap();
        let tri = m.triangles[t];
        let rec = m.nodes[tri[0]] * l[0] + m.nodes[tri[1]] * l[1] + m.nodes[tri[2]] * l[2];
        assert!((rec - p).norm() < 1e-12);
        assert!(l.iter().all(|&x| x >= -1e-10));
    }

    #[test]
    fn boundary_distance() {
        let m = TriMesh::structured_rectangle(0.0, 0.0, 1.0, 1.0, 4, 4).unwrap();
        assert!((m.distance_to_boundary(Vector2::new(0.5, 0.5)) - 0.5).abs() < 1e-12);
        assert!((m.distance_to_boundary(Vector2::new(0.1, 0.5)) - 0.1).abs() < 1e-12);
    }
}
