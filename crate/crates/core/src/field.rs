//! Piecewise-linear scalar fields on triangulations.

use nalgebra::Vector2;
use std::sync::Arc;

use crate::error::FieldError;
use crate::mesh::TriMesh;

/// A P1 field: nodal values plus the exact per-triangle gradients of the
/// interpolant.
#[derive(Clone, Debug)]
pub struct ScalarField {
    mesh: Arc<TriMesh>,
    values: Vec<f64>,
    gradients: Vec<Vector2<f64>>,
}

impl ScalarField {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != mesh.node_count() {
            return Err(FieldError::LengthMismatch {
                values: values.len(),
                nodes: mesh.node_count(),
            });
        }
        let gradients = compute_gradients(&mesh, &values);
        Ok(Self {
            mesh,
            values,
            gradients,
        })
    }

    /// Sample a function at the nodes.
    pub fn from_fn(mesh: Arc<TriMesh>, f: impl Fn(Vector2<f64>) -> f64) -> Self {
        let values = mesh.nodes.iter().map(|&p| f(p)).collect();
        Self::new(mesh, values).expect("length matches by construction")
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradient(&self, t: usize) -> Vector2<f64> {
        self.gradients[t]
    }

    pub fn gradients(&self) -> &[Vector2<f64>] {
        &self.gradients
    }

    /// The discrete Lipschitz bound: max per-triangle gradient norm.
    pub fn lipschitz_bound(&self) -> f64 {
        self.gradients
            .iter()
            .map(|g| g.norm())
            .fold(0.0, f64::max)
    }

    /// Interpolate the field at an arbitrary point of the domain.
    pub fn value_at(&self, p: Vector2<f64>) -> Option<f64> {
        let (t, l) = self.mesh.locate(p)?;
        let tri = self.mesh.triangles[t];
        Some(self.values[tri[0]] * l[0] + self.values[tri[1]] * l[1] + self.values[tri[2]] * l[2])
    }

    /// Re-interpolate onto another mesh (nodewise point location).
    pub fn interpolate_onto(&self, target: Arc<TriMesh>) -> Result<ScalarField, FieldError> {
        let mut values = Vec::with_capacity(target.node_count());
        for (i, &p) in target.nodes.iter().enumerate() {
            match self.value_at(p) {
                Some(v) => values.push(v),
                None => {
                    return Err(FieldError::MeshMismatch(format!(
                        "target node {i} at ({}, {}) lies outside the source mesh",
                        p.x, p.y
                    )))
                }
            }
        }
        ScalarField::new(target, values)
    }

    /// Area-weighted RMS and max nodal difference against a field on the
    /// same node set (interpolate first otherwise).
    pub fn compare(&self, other: &ScalarField) -> Result<(f64, f64), FieldError> {
        if self.values.len() != other.values.len() {
            return Err(FieldError::MeshMismatch(format!(
                "node counts differ: {} vs {}",
                self.values.len(),
                other.values.len()
            )));
        }
        for (a, b) in self.mesh.nodes.iter().zip(other.mesh.nodes.iter()) {
            if (a - b).norm() > 1e-9 {
                return Err(FieldError::MeshMismatch(
                    "node coordinates differ".to_string(),
                ));
            }
        }
        let w = self.mesh.lumped_weights();
        let total: f64 = w.iter().sum();
        let mut l2 = 0.0;
        let mut linf: f64 = 0.0;
        for i in 0..self.values.len() {
            let d = self.values[i] - other.values[i];
            l2 += w[i] * d * d;
            linf = linf.max(d.abs());
        }
        Ok(((l2 / total).sqrt(), linf))
    }

    /// Per-triangle gradients averaged to nodes with area weights; this is
    /// the recovery the diagnostics use to put the piecewise-constant
    /// gradient back into the P1 space.
    pub fn recovered_nodal_gradients(&self) -> Vec<Vector2<f64>> {
        let mut acc = vec![Vector2::zeros(); self.mesh.node_count()];
        let mut w = vec![0.0; self.mesh.node_count()];
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let a = self.mesh.area(t);
            for &v in tri {
                acc[v] += self.gradients[t] * a;
                w[v] += a;
            }
        }
        for (g, ww) in acc.iter_mut().zip(&w) {
            if *ww > 0.0 {
                *g /= *ww;
            }
        }
        acc
    }

    /// Same recovery for an arbitrary per-triangle scalar.
    pub fn recover_triangle_scalar(&self, per_triangle: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.mesh.node_count()];
        let mut w = vec![0.0; self.mesh.node_count()];
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let a = self.mesh.area(t);
            for &v in tri {
                acc[v] += per_triangle[t] * a;
                w[v] += a;
            }
        }
        for (x, ww) in acc.iter_mut().zip(&w) {
            if *ww > 0.0 {
                *x /= *ww;
            }
        }
        acc
    }
}

fn compute_gradients(mesh: &TriMesh, values: &[f64]) -> Vec<Vector2<f64>> {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let mut g = Vector2::zeros();
            for (corner, &v) in tri.iter().enumerate() {
                g += mesh.hat_gradient(t, corner) * values[v];
            }
            g
        })
        .collect()
}
