//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex at vertex {vertex}")]
    NotStrictlyConvex { vertex: usize },
    #[error("polygon side {side} is degenerate")]
    DegenerateSide { side: usize },
    #[error("polygon has empty interior")]
    EmptyInterior,
    #[error("interior point is not strictly inside the polygon")]
    InteriorPointNotInterior,
}

#[derive(Debug, Error)]
pub enum TensionError {
    #[error("evaluation point lies outside the constraint polygon (excess {excess:.3e})")]
    OutsideDomain { excess: f64 },
    #[error("second derivatives requested within radius {radius} of singular point {index}")]
    SingularPoint { index: usize, radius: f64 },
    #[error("lozenge tension requires a triangular constraint polygon, got {sides} sides")]
    NotATriangle { sides: usize },
    #[error("singularity exponent {value} outside (0,1)")]
    BadSingularExponent { value: f64 },
    #[error("singular point {index} is not strictly inside the polygon")]
    SingularPointOutside { index: usize },
    #[error("Legendre transform did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
}

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("boundary polyline is not closed or has fewer than 3 vertices")]
    MalformedBoundary,
    #[error("boundary polyline is self-intersecting near segment {segment}")]
    SelfIntersecting { segment: usize },
    #[error("boundary values count {values} does not match polyline vertex count {vertices}")]
    ValueCountMismatch { values: usize, vertices: usize },
    #[error(
        "boundary data is inadmissible: worst pair ({y1:?}, {y2:?}) exceeds the support bound by {slack:.6e}"
    )]
    Inadmissible {
        y1: (f64, f64),
        y2: (f64, f64),
        slack: f64,
    },
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {index} has non-positive area")]
    DegenerateTriangle { index: usize },
    #[error("mesh has no interior nodes")]
    NoInteriorNodes,
    #[error("polygon ear clipping failed (ring may be self-intersecting)")]
    EarClipFailed,
    #[error("requested resolution is invalid: {0}")]
    BadResolution(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Inadmissible(#[from] BoundaryError),
    #[error("stage m={stage} did not reach the KKT tolerance in {iterations} iterations")]
    NonConvergence { stage: usize, iterations: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
}

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("window disk (center {center:?}, radius {radius}) is not inside the domain")]
    WindowOutsideDomain { center: (f64, f64), radius: f64 },
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("boundary heights admit no valid extension (site ({0}, {1}))")]
    InadmissibleBoundary(i64, i64),
    #[error("region has {sites} interior sites; exact enumeration is capped at {cap}")]
    TooLarge { sites: usize, cap: usize },
    #[error("region is not connected")]
    Disconnected,
    #[error("region is not simply connected (euler characteristic {0})")]
    NotSimplyConnected(i64),
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("fields live on different meshes and interpolation failed: {0}")]
    MeshMismatch(String),
    #[error("field length {values} does not match mesh node count {nodes}")]
    LengthMismatch { values: usize, nodes: usize },
}
