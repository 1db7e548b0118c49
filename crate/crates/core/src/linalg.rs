//! Skyline (variable-band) Cholesky for the SPD Newton systems, with
//! reverse Cuthill-McKee ordering to keep the profile tight. Factorization
//! and solves are strictly sequential with a fixed operation order, so
//! repeated runs are bit-identical.

/// Reverse Cuthill-McKee over an undirected adjacency list. Returns `order`
/// with `order[k] = original index of the k-th reordered unknown`.
pub fn rcm_order(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |v: usize| adjacency[v].len();
    // Process components from the lowest-degree unvisited seed.
    loop {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree(v), v));
        let Some(seed) = seed else { break };
        visited[seed] = true;
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree(w), w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Symmetric matrix stored by rows over the profile
/// `col_start[i] ..= i`; entries outside the profile are structural zeros.
#[derive(Clone, Debug)]
pub struct SkylineMatrix {
    col_start: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl SkylineMatrix {
    /// Build the profile from the coupling pattern (`neighbors[i]` lists the
    /// unknowns coupled to `i`; only lower-triangle spans matter).
    pub fn from_pattern(neighbors: &[Vec<usize>]) -> Self {
        let n = neighbors.len();
        let mut col_start = Vec::with_capacity(n);
        for (i, nbrs) in neighbors.iter().enumerate() {
            let lo = nbrs
                .iter()
                .copied()
                .filter(|&j| j <= i)
                .min()
                .unwrap_or(i)
                .min(i);
            col_start.push(lo);
        }
        let rows = col_start
            .iter()
            .enumerate()
            .map(|(i, &lo)| vec![0.0; i - lo + 1])
            .collect();
        Self { col_start, rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn reset(&mut self) {
        for row in &mut self.rows {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Accumulate into the symmetric entry (i, j); callers may pass either
    /// triangle order.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(c >= self.col_start[r], "entry outside skyline profile");
        let off = c - self.col_start[r];
        self.rows[r][off] += v;
    }

    #[cfg(test)]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.col_start[r] {
            return 0.0;
        }
        self.rows[r][c - self.col_start[r]]
    }

    /// Replace row/column `i` by the identity row (used to pin active or
    /// Dirichlet unknowns without changing the profile).
    pub fn pin_identity(&mut self, i: usize) {
        let lo = self.col_start[i];
        for x in &mut self.rows[i] {
            *x = 0.0;
        }
        self.rows[i][i - lo] = 1.0;
        for r in (i + 1)..self.rows.len() {
            if self.col_start[r] <= i {
                let off = i - self.col_start[r];
                self.rows[r][off] = 0.0;
            }
        }
    }

    /// In-place Cholesky over the profile. Fails on a non-positive pivot.
    pub fn factorize(mut self) -> Result<SkylineCholesky, String> {
        let n = self.n();
        for i in 0..n {
            let lo_i = self.col_start[i];
            for j in lo_i..=i {
                let lo_j = self.col_start[j];
                let start = lo_i.max(lo_j);
                let mut sum = 0.0;
                for k in start..j {
                    sum += self.rows[i][k - lo_i] * self.rows[j][k - lo_j];
                }
                if j < i {
                    let d = self.rows[j][j - lo_j];
                    self.rows[i][j - lo_i] = (self.rows[i][j - lo_i] - sum) / d;
                } else {
                    let v = self.rows[i][i - lo_i] - sum;
                    if v <= 0.0 || !v.is_finite() {
                        return Err(format!("non-positive pivot {v:.3e} at row {i}"));
                    }
                    self.rows[i][i - lo_i] = v.sqrt();
                }
            }
        }
        Ok(SkylineCholesky {
            col_start: self.col_start,
            rows: self.rows,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    col_start: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl SkylineCholesky {
    /// Solve `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows.len();
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = self.col_start[i];
            let mut sum = x[i];
            for k in lo..i {
                sum -= self.rows[i][k - lo] * x[k];
            }
            x[i] = sum / self.rows[i][i - lo];
        }
        for i in (0..n).rev() {
            let lo = self.col_start[i];
            x[i] /= self.rows[i][i - lo];
            let xi = x[i];
            for k in lo..i {
                x[k] -= self.rows[i][k - lo] * xi;
            }
        }
        x
    }
}

/// Fixed-order pairwise (tree) summation; the combination order never
/// depends on chunking, so accumulation is bit-stable.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}
