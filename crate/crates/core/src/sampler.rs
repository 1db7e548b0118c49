//! Random stepped surfaces: lozenge tilings of triangular-lattice regions
//! as integer height functions, with single-site Glauber dynamics, exact
//! enumeration on tiny regions, and rescaling to solver fields.
//!
//! Height rule (frozen; shared by validity checks, enumeration and the
//! dynamics). Sites are the two-axis lattice coordinates `(i, j)`, the
//! projection of `Z^3` along (1,1,1) with fiber `(i+t, j+t, t)`. A height
//! function `tau` encodes the monotone cube stack `A` via
//! `tau(i,j) = max { t : (i+t, j+t, t) in A }`, and `tau` is valid iff
//! `tau(v) - tau(v + d)` lies in `{0, 1}` for every in-region pair with
//! `d` among `(1,0)`, `(0,1)`, `(1,1)`. A site flip adds or removes one cube. The
//! geometric surface point above `(i, j)` is at height
//! `(i + j + 3 tau + 3)/sqrt(3)` over the plane position
//! `((i-j)/sqrt(2), (i+j)/sqrt(6))`, both scaled by the lattice spacing.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::SamplerError;
use crate::field::ScalarField;
use crate::mesh::{hexagon_contains, hexagon_rim, lattice_position, TriMesh};

/// The three "downhill" lattice directions of the height rule.
pub const STEP_DIRS: [(i64, i64); 3] = [(1, 0), (0, 1), (1, 1)];

/// The frozen coordinate conventions, emitted into run metadata so any
/// normalization mismatch between producers and consumers is diagnosable
/// from the artifacts alone.
pub const CONVENTION_LINES: &[&str] = &[
    "convention.plane_frame = w1=(1,-1,0)/sqrt2 w2=(1,1,-2)/sqrt6 vertical=(1,1,1)/sqrt3",
    "convention.site_position = ((i-j)/sqrt2, (i+j)/sqrt6) * epsilon",
    "convention.surface_height = (i + j + 3*tau + 3)/sqrt3 * epsilon",
    "convention.height_rule = tau(v) - tau(v+d) in {0,1} for d in {(1,0),(0,1),(1,1)}",
    "convention.gradient_triangle = (-sqrt6/2,-sqrt2/2) (sqrt6/2,-sqrt2/2) (0,sqrt2)",
];

/// Cap on interior sites for exact enumeration.
pub const ENUMERATION_CAP: usize = 30;

/// The deterministic stream every chain runs on.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug)]
pub struct LatticeRegion {
    sites: Vec<(i64, i64)>,
    index: HashMap<(i64, i64), usize>,
    is_boundary: Vec<bool>,
    boundary_heights: Vec<i64>,
    interior: Vec<usize>,
    /// `down[v][k] = index of v + STEP_DIRS[k]`, when in the region.
    down: Vec<[Option<usize>; 3]>,
    /// `up[v][k] = index of v - STEP_DIRS[k]`.
    up: Vec<[Option<usize>; 3]>,
    min_ext: Vec<i64>,
    max_ext: Vec<i64>,
    epsilon: f64,
}

impl LatticeRegion {
    /// Boxed a x b x c hexagon with the wireframe boundary heights of the
    /// empty stack, at lattice spacing `epsilon`.
    pub fn hexagon(a: u32, b: u32, c: u32, epsilon: f64) -> Result<Self, SamplerError> {
        let (an, bn, cn) = (a as i64, b as i64, c as i64);
        let mut sites = Vec::new();
        for i in -cn..=an {
            for j in -cn..=bn {
                if hexagon_contains(an, bn, cn, i, j) {
                    sites.push((i, j));
                }
            }
        }
        let rim: Vec<(i64, i64)> = hexagon_rim(an, bn, cn);
        // Boundary heights of the empty stack: tau0 = -1 - min(i, j, 0).
        let heights = rim
            .iter()
            .map(|&(i, j)| (i, j, -1 - i.min(j).min(0)))
            .collect::<Vec<_>>();
        Self::new(sites, &heights, epsilon)
    }

    /// Build from an explicit site set and boundary heights.
    pub fn new(
        sites: Vec<(i64, i64)>,
        boundary: &[(i64, i64, i64)],
        epsilon: f64,
    ) -> Result<Self, SamplerError> {
        let mut sites = sites;
        sites.sort_unstable();
        sites.dedup();
        let index: HashMap<(i64, i64), usize> =
            sites.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let mut is_boundary = vec![false; sites.len()];
        let mut boundary_heights = vec![0i64; sites.len()];
        for &(i, j, h) in boundary {
            let k = *index
                .get(&(i, j))
                .ok_or(SamplerError::InadmissibleBoundary(i, j))?;
            is_boundary[k] = true;
            boundary_heights[k] = h;
        }
        let mut down = vec![[None; 3]; sites.len()];
        let mut up = vec![[None; 3]; sites.len()];
        for (v, &(i, j)) in sites.iter().enumerate() {
            for (k, &(di, dj)) in STEP_DIRS.iter().enumerate() {
                down[v][k] = index.get(&(i + di, j + dj)).copied();
                up[v][k] = index.get(&(i - di, j - dj)).copied();
            }
        }
        let interior: Vec<usize> = (0..sites.len()).filter(|&v| !is_boundary[v]).collect();
        let region = Self {
            min_ext: Vec::new(),
            max_ext: Vec::new(),
            sites,
            index,
            is_boundary,
            boundary_heights,
            interior,
            down,
            up,
            epsilon,
        };
        region.check_topology()?;
        let (min_ext, max_ext) = region.extensions()?;
        Ok(Self {
            min_ext,
            max_ext,
            ..region
        })
    }

    fn check_topology(&self) -> Result<(), SamplerError> {
        if self.sites.is_empty() {
            return Err(SamplerError::Disconnected);
        }
        // Connectivity over the 6-neighbor graph.
        let mut seen = vec![false; self.sites.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for k in 0..3 {
                for nb in [self.down[v][k], self.up[v][k]].into_iter().flatten() {
                    if !seen[nb] {
                        seen[nb] = true;
                        count += 1;
                        stack.push(nb);
                    }
                }
            }
        }
        if count != self.sites.len() {
            return Err(SamplerError::Disconnected);
        }
        // Euler characteristic of the triangulated complex must be 1.
        let v = self.sites.len() as i64;
        let mut e = 0i64;
        let mut f = 0i64;
        for s in 0..self.sites.len() {
            for k in 0..3 {
                if self.down[s][k].is_some() {
                    e += 1;
                }
            }
            // Up and down lattice triangles anchored at s.
            if self.down[s][0].is_some() && self.down[s][2].is_some() {
                f += 1;
            }
            if self.down[s][1].is_some() && self.down[s][2].is_some() {
                f += 1;
            }
        }
        let chi = v - e + f;
        if chi != 1 {
            return Err(SamplerError::NotSimplyConnected(chi));
        }
        Ok(())
    }

    /// Pointwise minimal and maximal valid extensions of the boundary
    /// heights, by constraint relaxation.
    fn extensions(&self) -> Result<(Vec<i64>, Vec<i64>), SamplerError> {
        const INF: i64 = i64::MAX / 4;
        let mut hi = vec![INF; self.sites.len()];
        let mut lo = vec![-INF; self.sites.len()];
        for v in 0..self.sites.len() {
            if self.is_boundary[v] {
                hi[v] = self.boundary_heights[v];
                lo[v] = self.boundary_heights[v];
            }
        }
        // Max extension: h(v+d) <= h(v), h(v) <= h(v+d) + 1.
        loop {
            let mut changed = false;
            for v in 0..self.sites.len() {
                let mut bound = INF;
                for k in 0..3 {
                    if let Some(u) = self.up[v][k] {
                        bound = bound.min(hi[u]);
                    }
                    if let Some(w) = self.down[v][k] {
                        bound = bound.min(hi[w].saturating_add(1));
                    }
                }
                if bound < hi[v] {
                    hi[v] = bound;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        loop {
            let mut changed = false;
            for v in 0..self.sites.len() {
                let mut bound = -INF;
                for k in 0..3 {
                    if let Some(u) = self.up[v][k] {
                        bound = bound.max(lo[u].saturating_sub(1));
                    }
                    if let Some(w) = self.down[v][k] {
                        bound = bound.max(lo[w]);
                    }
                }
                if bound > lo[v] {
                    lo[v] = bound;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for v in 0..self.sites.len() {
            let feasible = if self.is_boundary[v] {
                hi[v] == self.boundary_heights[v] && lo[v] == self.boundary_heights[v]
            } else {
                lo[v] <= hi[v] && hi[v] < INF && lo[v] > -INF
            };
            if !feasible {
                let (i, j) = self.sites[v];
                return Err(SamplerError::InadmissibleBoundary(i, j));
            }
        }
        Ok((lo, hi))
    }

    pub fn sites(&self) -> &[(i64, i64)] {
        &self.sites
    }

    pub fn site_index(&self, i: i64, j: i64) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn minimal_heights(&self) -> &[i64] {
        &self.min_ext
    }

    pub fn maximal_heights(&self) -> &[i64] {
        &self.max_ext
    }
}

/// Initialization choice for a tiling chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitTiling {
    Minimal,
    Maximal,
}

#[derive(Clone, Debug)]
pub struct TilingState {
    region: Arc<LatticeRegion>,
    heights: Vec<i64>,
    flippable: Vec<bool>,
    flippable_count: usize,
    #[cfg(debug_assertions)]
    steps_taken: u64,
}

/// The minimal or maximal stepped surface consistent with the boundary: the
/// discrete analogues of the obstacle pair.
pub fn init_tiling(region: &Arc<LatticeRegion>, mode: InitTiling) -> TilingState {
    let heights = match mode {
        InitTiling::Minimal => region.min_ext.clone(),
        InitTiling::Maximal => region.max_ext.clone(),
    };
    TilingState::from_heights(region.clone(), heights)
}

impl TilingState {
    fn from_heights(region: Arc<LatticeRegion>, heights: Vec<i64>) -> Self {
        let mut state = Self {
            flippable: vec![false; heights.len()],
            flippable_count: 0,
            region,
            heights,
            #[cfg(debug_assertions)]
            steps_taken: 0,
        };
        for v in 0..state.heights.len() {
            let f = state.moves_at(v) != (false, false);
            state.flippable[v] = f;
            if f {
                state.flippable_count += 1;
            }
        }
        state
    }

    pub fn region(&self) -> &Arc<LatticeRegion> {
        &self.region
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn flippable_count(&self) -> usize {
        self.flippable_count
    }

    /// Admissible interval of the height at `v` given its neighbors.
    fn local_interval(&self, v: usize) -> (i64, i64) {
        let mut lo = i64::MIN / 4;
        let mut hi = i64::MAX / 4;
        for k in 0..3 {
            if let Some(u) = self.region.up[v][k] {
                lo = lo.max(self.heights[u] - 1);
                hi = hi.min(self.heights[u]);
            }
            if let Some(w) = self.region.down[v][k] {
                lo = lo.max(self.heights[w]);
                hi = hi.min(self.heights[w] + 1);
            }
        }
        (lo, hi)
    }

    /// (can move down, can move up) at site `v`.
    fn moves_at(&self, v: usize) -> (bool, bool) {
        if self.region.is_boundary[v] {
            return (false, false);
        }
        let (lo, hi) = self.local_interval(v);
        (self.heights[v] - 1 >= lo, self.heights[v] + 1 <= hi)
    }

    /// Every pairwise constraint holds and heights sit in the extension
    /// sandwich.
    pub fn is_valid(&self) -> bool {
        for v in 0..self.heights.len() {
            if self.region.is_boundary[v]
                && self.heights[v] != self.region.boundary_heights[v]
            {
                return false;
            }
            if self.heights[v] < self.region.min_ext[v]
                || self.heights[v] > self.region.max_ext[v]
            {
                return false;
            }
            for k in 0..3 {
                if let Some(w) = self.region.down[v][k] {
                    let d = self.heights[v] - self.heights[w];
                    if !(0..=1).contains(&d) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Recompute the flippable set from scratch and compare with the
    /// maintained one.
    pub fn audit_flippable(&self) -> bool {
        (0..self.heights.len())
            .all(|v| self.flippable[v] == (self.moves_at(v) != (false, false)))
    }

    fn apply_move(&mut self, v: usize, delta: i64) {
        self.heights[v] += delta;
        let mut touched = vec![v];
        for k in 0..3 {
            if let Some(u) = self.region.up[v][k] {
                touched.push(u);
            }
            if let Some(w) = self.region.down[v][k] {
                touched.push(w);
            }
        }
        for t in touched {
            let f = self.moves_at(t) != (false, false);
            if f != self.flippable[t] {
                self.flippable_count = if f {
                    self.flippable_count + 1
                } else {
                    self.flippable_count - 1
                };
                self.flippable[t] = f;
            }
        }
    }

    /// One lazy heat-bath step: a uniformly random interior site attempts a
    /// +1 or -1 move with probability 1/2 each, accepted when the height
    /// rule allows it. Uniform over tilings by detailed balance (the
    /// probability of any particular allowed move is always 1/(2 n)).
    pub fn glauber_step(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let n = self.region.interior.len();
        if n == 0 {
            return false;
        }
        // Sampled audits in debug builds: every 10^4 steps, recheck the
        // full validity and the maintained flippable set.
        #[cfg(debug_assertions)]
        {
            self.steps_taken += 1;
            if self.steps_taken % 10_000 == 0 {
                debug_assert!(self.is_valid(), "height rule violated mid-chain");
                debug_assert!(self.audit_flippable(), "flippable set out of sync");
            }
        }
        let v = self.region.interior[rng.gen_range(0..n)];
        let upward = rng.gen_bool(0.5);
        let (can_down, can_up) = self.moves_at(v);
        if upward && can_up {
            self.apply_move(v, 1);
            true
        } else if !upward && can_down {
            self.apply_move(v, -1);
            false
        } else {
            false
        }
    }

    /// Coupled step driven by the same randomness on two chains; preserves
    /// the sitewise order of states (monotone coupling).
    fn coupled_step(a: &mut TilingState, b: &mut TilingState, rng: &mut ChaCha8Rng) {
        let n = a.region.interior.len();
        if n == 0 {
            return;
        }
        let v = a.region.interior[rng.gen_range(0..n)];
        let upward = rng.gen_bool(0.5);
        for state in [a, b] {
            let (can_down, can_up) = state.moves_at(v);
            if upward && can_up {
                state.apply_move(v, 1);
            } else if !upward && can_down {
                state.apply_move(v, -1);
            }
        }
    }
}

/// Exact number of tilings by depth-first extension of heights in site
/// order, pruned by the extension sandwich.
pub fn enumerate_tilings(region: &LatticeRegion) -> Result<u128, SamplerError> {
    if region.interior.len() > ENUMERATION_CAP {
        return Err(SamplerError::TooLarge {
            sites: region.interior.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let mut count = 0u128;
    enumerate_impl(region, &mut |_| count += 1);
    Ok(count)
}

/// All interior height assignments (small regions only; test oracle and
/// uniformity checks).
pub fn enumerate_all_heights(region: &LatticeRegion) -> Result<Vec<Vec<i64>>, SamplerError> {
    if region.interior.len() > ENUMERATION_CAP {
        return Err(SamplerError::TooLarge {
            sites: region.interior.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let mut all = Vec::new();
    enumerate_impl(region, &mut |h| all.push(h.to_vec()));
    Ok(all)
}

fn enumerate_impl(region: &LatticeRegion, visit: &mut impl FnMut(&[i64])) {
    let mut heights = region.boundary_heights.clone();
    let order = region.interior.clone();
    fn rec(
        region: &LatticeRegion,
        order: &[usize],
        k: usize,
        heights: &mut Vec<i64>,
        visit: &mut impl FnMut(&[i64]),
    ) {
        if k == order.len() {
            visit(heights);
            return;
        }
        let v = order[k];
        let assigned = |u: usize| -> bool {
            region.is_boundary[u] || order[..k].contains(&u)
        };
        let mut lo = region.min_ext[v];
        let mut hi = region.max_ext[v];
        for d in 0..3 {
            if let Some(u) = region.up[v][d] {
                if assigned(u) {
                    lo = lo.max(heights[u] - 1);
                    hi = hi.min(heights[u]);
                }
            }
            if let Some(w) = region.down[v][d] {
                if assigned(w) {
                    lo = lo.max(heights[w]);
                    hi = hi.min(heights[w] + 1);
                }
            }
        }
        for h in lo..=hi {
            heights[v] = h;
            rec(region, order, k + 1, heights, visit);
        }
    }
    rec(region, &order, 0, &mut heights, visit);
}

/// Result of a mean-height run.
#[derive(Clone, Debug)]
pub struct MeanHeightReport {
    /// Per-site mean heights (boundary sites keep their fixed heights).
    pub mean: Vec<f64>,
    /// The min/max chains met sitewise before sampling started.
    pub coupled: bool,
    /// Sweeps spent before sampling (max of burn-in and coupling time).
    pub warmup_sweeps: usize,
    pub samples: usize,
}

/// Mean heights under the uniform measure: a coupled pair of chains from
/// the minimal and maximal surfaces runs until it meets (the empirical
/// mixing certificate) and at least `burn_in` sweeps, then one chain is
/// averaged over `samples` states separated by `thinning` sweeps.
/// Deterministic for a fixed seed.
pub fn sample_mean_height(
    region: &Arc<LatticeRegion>,
    burn_in: usize,
    samples: usize,
    thinning: usize,
    seed: u64,
) -> MeanHeightReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut low = init_tiling(region, InitTiling::Minimal);
    let mut high = init_tiling(region, InitTiling::Maximal);
    let steps_per_sweep = region.interior_count().max(1);
    let coupling_cap = 100 * burn_in.max(1);
    let mut warmup = 0;
    let mut coupled = low.heights == high.heights;
    while warmup < burn_in || (!coupled && warmup < coupling_cap) {
        for _ in 0..steps_per_sweep {
            TilingState::coupled_step(&mut low, &mut high, &mut rng);
        }
        warmup += 1;
        coupled = low.heights == high.heights;
        if coupled && warmup >= burn_in {
            break;
        }
    }
    let mut sums = vec![0i64; region.sites().len()];
    let samples = samples.max(1);
    for _ in 0..samples {
        for _ in 0..thinning * steps_per_sweep {
            low.glauber_step(&mut rng);
        }
        for (s, &h) in sums.iter_mut().zip(low.heights.iter()) {
            *s += h;
        }
    }
    MeanHeightReport {
        mean: sums.iter().map(|&s| s as f64 / samples as f64).collect(),
        coupled,
        warmup_sweeps: warmup,
        samples,
    }
}

/// Geometric surface height over the projection plane for a (possibly
/// fractional, after averaging) lattice height.
pub fn surface_height(i: i64, j: i64, tau: f64, epsilon: f64) -> f64 {
    ((i + j + 3) as f64 + 3.0 * tau) / 3.0_f64.sqrt() * epsilon
}

/// Rescale per-site heights to a P1 field on the lattice triangulation and
/// optionally re-interpolate onto a solver mesh.
pub fn rescale_to_graph(
    mean: &[f64],
    region: &LatticeRegion,
    target: Option<&Arc<TriMesh>>,
) -> Result<ScalarField, crate::error::FieldError> {
    let eps = region.epsilon;
    let nodes: Vec<nalgebra::Vector2<f64>> = region
        .sites
        .iter()
        .map(|&(i, j)| lattice_position(i, j) * eps)
        .collect();
    let mut triangles = Vec::new();
    for (v, &(i, j)) in region.sites.iter().enumerate() {
        if let (Some(a), Some(b)) = (region.index.get(&(i + 1, j)), region.index.get(&(i + 1, j + 1)))
        {
            triangles.push([v, *a, *b]);
        }
        if let (Some(a), Some(b)) = (region.index.get(&(i + 1, j + 1)), region.index.get(&(i, j + 1)))
        {
            triangles.push([v, *a, *b]);
        }
    }
    let boundary_loop = trace_outline(region, &triangles);
    let mesh = Arc::new(
        TriMesh::new(nodes, triangles, boundary_loop).expect("lattice triangles are CCW"),
    );
    let values: Vec<f64> = region
        .sites
        .iter()
        .zip(mean)
        .map(|(&(i, j), &tau)| surface_height(i, j, tau, eps))
        .collect();
    let field = ScalarField::new(mesh, values)?;
    match target {
        None => Ok(field),
        Some(t) => field.interpolate_onto(t.clone()),
    }
}

fn trace_outline(region: &LatticeRegion, triangles: &[[usize; 3]]) -> Vec<usize> {
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if edge_count[&(a.min(b), a.max(b))] == 1 {
                next.insert(a, b);
            }
        }
    }
    let Some((&start, _)) = next.iter().min_by_key(|(&a, _)| region.sites[a]) else {
        return Vec::new();
    };
    let mut ring = vec![start];
    let mut cur = start;
    while let Some(&n) = next.get(&cur) {
        if n == start {
            break;
        }
        ring.push(n);
        cur = n;
        if ring.len() > next.len() {
            break;
        }
    }
    ring
}

/// Dirichlet data of the stepped wireframe on the continuum hexagon of the
/// a x b x c box: the rim heights of the minimal (equivalently maximal)
/// stepped surface at lattice spacing `1/refine`, attached to the rim
/// positions of the refined lattice. This is the boundary preset the
/// solver-versus-sampler comparison uses on both sides.
pub fn hexagon_stepped_data(
    a: u32,
    b: u32,
    c: u32,
    refine: u32,
) -> crate::boundary::BoundaryData {
    let (an, bn, cn) = (
        (a * refine) as i64,
        (b * refine) as i64,
        (c * refine) as i64,
    );
    let eps = 1.0 / refine as f64;
    let rim = hexagon_rim(an, bn, cn);
    let polyline: Vec<nalgebra::Vector2<f64>> = rim
        .iter()
        .map(|&(i, j)| lattice_position(i, j) * eps)
        .collect();
    let values: Vec<f64> = rim
        .iter()
        .map(|&(i, j)| {
            let tau = -1 - i.min(j).min(0);
            surface_height(i, j, tau as f64, eps)
        })
        .collect();
    let h = (2.0_f64 / 3.0).sqrt() * eps;
    crate::boundary::BoundaryData::new(polyline, values, h / 4.0)
        .expect("hexagon rim is a simple closed polyline")
}

/// Exact boxed-plane-partition count (product formula), as an oracle for
/// the enumerator.
pub fn boxed_count_product(a: u32, b: u32, c: u32) -> u128 {
    let mut num = 1u128;
    let mut den = 1u128;
    for i in 1..=a as u128 {
        for j in 1..=b as u128 {
            for k in 1..=c as u128 {
                num *= i + j + k - 1;
                den *= i + j + k - 2;
                let g = gcd(num, den);
                num /= g;
                den /= g;
            }
        }
    }
    debug_assert_eq!(den, 1);
    num / den
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hexagon(a: u32, b: u32, c: u32) -> Arc<LatticeRegion> {
        Arc::new(LatticeRegion::hexagon(a, b, c, 1.0 / a.max(b).max(c) as f64).unwrap())
    }

    #[test]
    fn unit_hexagon_has_two_tilings() {
        let region = hexagon(1, 1, 1);
        assert_eq!(region.interior_count(), 1);
        assert_eq!(enumerate_tilings(&region).unwrap(), 2);
        let min = init_tiling(&region, InitTiling::Minimal);
        let max = init_tiling(&region, InitTiling::Maximal);
        assert!(min.is_valid() && max.is_valid());
        // The empty and full corner differ by exactly one cube at the center.
        let center = region.site_index(0, 0).unwrap();
        assert_eq!(min.heights()[center], -1);
        assert_eq!(max.heights()[center], 0);
        for v in 0..region.sites().len() {
            assert!(min.heights()[v] <= max.heights()[v]);
        }
    }

    #[test]
    fn counts_match_macmahon_product() {
        assert_eq!(boxed_count_product(1, 1, 1), 2);
        assert_eq!(boxed_count_product(2, 2, 2), 20);
        assert_eq!(boxed_count_product(3, 3, 3), 980);
        for (a, b, c) in [(1, 1, 1), (2, 1, 1), (2, 2, 1), (2, 2, 2), (3, 2, 1)] {
            let region = hexagon(a, b, c);
            assert_eq!(
                enumerate_tilings(&region).unwrap(),
                boxed_count_product(a, b, c),
                "hexagon {a}x{b}x{c}"
            );
        }
    }

    #[test]
    fn degenerate_region_has_one_tiling() {
        // A single rim with no interior sites is boundary-forced.
        let region = hexagon(1, 1, 1);
        let sub_sites: Vec<(i64, i64)> = region
            .sites()
            .iter()
            .copied()
            .filter(|&s| s != (0, 0))
            .collect();
        // Remove the center: every remaining site is boundary.
        let heights: Vec<(i64, i64, i64)> = sub_sites
            .iter()
            .map(|&(i, j)| (i, j, -1 - i.min(j).min(0)))
            .collect();
        // The punctured hexagon is not simply connected, so use a smaller
        // forced patch instead: one lattice triangle.
        let tri_sites = vec![(0, 0), (1, 0), (1, 1)];
        let tri_heights: Vec<(i64, i64, i64)> =
            tri_sites.iter().map(|&(i, j)| (i, j, 0)).collect();
        let tri = LatticeRegion::new(tri_sites, &tri_heights, 1.0).unwrap();
        assert_eq!(enumerate_tilings(&tri).unwrap(), 1);
        assert!(LatticeRegion::new(sub_sites, &heights, 1.0).is_err());
    }

    #[test]
    fn inadmissible_boundary_detected() {
        let region = hexagon(1, 1, 1);
        let mut heights: Vec<(i64, i64, i64)> = region
            .sites()
            .iter()
            .filter(|&&s| s != (0, 0))
            .map(|&(i, j)| (i, j, -1 - i.min(j).min(0)))
            .collect();
        // Corrupt one rim height far out of range.
        heights[0].2 += 10;
        let r = LatticeRegion::new(region.sites().to_vec(), &heights, 1.0);
        assert!(matches!(r, Err(SamplerError::InadmissibleBoundary(_, _))));
    }

    #[test]
    fn two_state_chain_switches_half_the_time() {
        let region = hexagon(1, 1, 1);
        let mut state = init_tiling(&region, InitTiling::Minimal);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let steps = 100_000;
        let mut switches = 0;
        let mut prev = state.heights().to_vec();
        for _ in 0..steps {
            state.glauber_step(&mut rng);
            if state.heights() != &prev[..] {
                switches += 1;
                prev = state.heights().to_vec();
            }
        }
        // Binomial(steps, 1/2): three sigma is ~474.
        let sigma = (steps as f64 * 0.25).sqrt();
        assert!((switches as f64 - steps as f64 * 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn validity_and_flippable_audit_hold_along_the_chain() {
        let region = hexagon(2, 2, 2);
        let mut state = init_tiling(&region, InitTiling::Minimal);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for step in 0..20_000 {
            state.glauber_step(&mut rng);
            if step % 1000 == 0 {
                assert!(state.is_valid());
                assert!(state.audit_flippable());
            }
        }
        assert!(state.is_valid());
        assert!(state.audit_flippable());
    }

    #[test]
    fn monotone_sandwich_is_preserved() {
        let region = hexagon(3, 3, 3);
        let mut low = init_tiling(&region, InitTiling::Minimal);
        let mut high = init_tiling(&region, InitTiling::Maximal);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50_000 {
            TilingState::coupled_step(&mut low, &mut high, &mut rng);
        }
        for v in 0..region.sites().len() {
            assert!(low.heights()[v] <= high.heights()[v]);
            assert!(low.heights()[v] >= region.minimal_heights()[v]);
            assert!(high.heights()[v] <= region.maximal_heights()[v]);
        }
    }

    #[test]
    fn mean_height_deterministic_and_symmetric() {
        let region = hexagon(2, 2, 2);
        let a = sample_mean_height(&region, 50, 200, 2, 42);
        let b = sample_mean_height(&region, 50, 200, 2, 42);
        assert_eq!(a.mean, b.mean);
        assert!(a.coupled);
        // Center-cube occupancy is a fair coin under the uniform measure:
        // mean center height of the 1x1x1 hexagon is -1/2 within 3 sigma of
        // the thinned-sample binomial error.
        let small = hexagon(1, 1, 1);
        let r = sample_mean_height(&small, 20, 4000, 2, 9);
        let center = small.site_index(0, 0).unwrap();
        let sigma = 0.5 / (4000.0_f64).sqrt();
        // Thinned samples are weakly correlated; allow 4x the iid band.
        assert!(
            (r.mean[center] + 0.5).abs() < 4.0 * 3.0 * sigma,
            "center mean {}",
            r.mean[center]
        );
    }

    #[test]
    fn unique_tiling_region_reproduces_heights_exactly() {
        let tri_sites = vec![(0, 0), (1, 0), (1, 1)];
        let tri_heights: Vec<(i64, i64, i64)> =
            tri_sites.iter().map(|&(i, j)| (i, j, 0)).collect();
        let tri = Arc::new(LatticeRegion::new(tri_sites, &tri_heights, 1.0).unwrap());
        let r = sample_mean_height(&tri, 5, 10, 1, 3);
        assert_eq!(r.mean, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn minimal_extension_rescales_to_vertex_slopes() {
        // On the all-(i,j >= 0) sector of the empty stack the surface is a
        // plane of slope equal to a polygon vertex.
        let region = hexagon(4, 4, 4);
        let tau: Vec<f64> = region
            .minimal_heights()
            .iter()
            .map(|&h| h as f64)
            .collect();
        let field = rescale_to_graph(&tau, &region, None).unwrap();
        let n = crate::geometry::GradientPolygon::lozenge_triangle();
        let pz = n.vertices()[2];
        let mesh = field.mesh().clone();
        for t in 0..mesh.triangle_count() {
            let bary = mesh.barycenter(t);
            // Stay inside the sector i, j >= 1 (in lattice coordinates).
            let eps = region.epsilon();
            let i = (2.0_f64.sqrt() * bary.x + 6.0_f64.sqrt() * bary.y) / (2.0 * eps);
            let j = (6.0_f64.sqrt() * bary.y - 2.0_f64.sqrt() * bary.x) / (2.0 * eps);
            if i >= 1.0 && j >= 1.0 {
                assert!(
                    (field.gradient(t) - pz).norm() < 1e-9,
                    "sector slope mismatch at {bary:?}"
                );
            }
        }
        // Identity comparison after a round trip through rescaling.
        let again = rescale_to_graph(&tau, &region, Some(&mesh)).unwrap();
        let (l2, linf) = field.compare(&again).unwrap();
        assert!(l2 < 1e-13 && linf < 1e-13);
    }

    #[test]
    fn empirical_distribution_is_uniform_on_small_hexagon() {
        // 20 tilings of the 2x2x2 hexagon: chi-square over a thinned chain.
        let region = hexagon(2, 2, 2);
        let all = enumerate_all_heights(&region).unwrap();
        assert_eq!(all.len(), 20);
        let index_of: HashMap<Vec<i64>, usize> = all
            .iter()
            .enumerate()
            .map(|(k, h)| (h.clone(), k))
            .collect();
        let mut state = init_tiling(&region, InitTiling::Minimal);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let steps_per_sweep = region.interior_count();
        let sweeps = 100_000;
        let thin = 10;
        let mut counts = vec![0usize; 20];
        for sweep in 0..sweeps {
            for _ in 0..steps_per_sweep {
                state.glauber_step(&mut rng);
            }
            if sweep % thin == 0 {
                counts[index_of[state.heights()]] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let expected = total as f64 / 20.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 19 dof: mean 19, sigma sqrt(38); 3 sigma above the mean.
        assert!(chi2 < 19.0 + 3.0 * 38.0_f64.sqrt(), "chi2 = {chi2}");
    }
}
