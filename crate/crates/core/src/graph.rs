//! Weighted graphs, nullifier coefficient extraction, and combined
//! measurement-noise widths.
//!
//! Vertices are 1-based in every external format, matching the usual
//! convention for graph-state literature; the internal adjacency structure is
//! an implementation detail.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A weighted graph `(V, E, W)`: `n` vertices and real-weighted undirected
/// edges with no self-loops and no duplicate pairs.
///
/// Immutable after construction; safe to share across workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct WeightedGraph {
    n: usize,
    /// Canonical edges (i < j, 1-based) with weights.
    edges: Vec<(usize, usize, f64)>,
    /// Adjacency: for each vertex (0-based slot), list of (neighbor, weight).
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// Wire format: `{"n": int, "edges": [[i, j, weight], ...]}` with 1-based
/// vertex indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphFile> for WeightedGraph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        WeightedGraph::new(f.n, &f.edges)
    }
}

impl From<WeightedGraph> for GraphFile {
    fn from(g: WeightedGraph) -> Self {
        GraphFile {
            n: g.n,
            edges: g.edges,
        }
    }
}

impl WeightedGraph {
    /// Validates and builds a graph from 1-based `(i, j, weight)` edges.
    ///
    /// Edges are canonicalized to `i < j`; duplicates are detected on the
    /// canonical form. Self-loops, out-of-range indices, and non-finite
    /// weights are rejected with the offending edge named.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph(
                "vertex count must be at least 1".into(),
            ));
        }
        let mut canonical: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            if i < 1 || i > n || j < 1 || j > n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has a vertex outside 1..={n}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-finite weight {w}"
                )));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if canonical.iter().any(|&(x, y, _)| (x, y) == (a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            canonical.push((a, b, w));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, w) in &canonical {
            adjacency[a - 1].push((b, w));
            adjacency[b - 1].push((a, w));
        }
        for neigh in &mut adjacency {
            neigh.sort_by_key(|&(j, _)| j);
        }
        Ok(Self {
            n,
            edges: canonical,
            adjacency,
        })
    }

    /// Vertex count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical edge list (i < j, 1-based).
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Neighbors of 1-based vertex `i` as `(neighbor, weight)` pairs.
    pub fn neighbors(&self, i: usize) -> Result<&[(usize, f64)]> {
        self.check_vertex(i)?;
        Ok(&self.adjacency[i - 1])
    }

    /// Validation warnings: zero-weight edges are permitted but inert.
    pub fn warnings(&self) -> Vec<String> {
        self.edges
            .iter()
            .filter(|&&(_, _, w)| w == 0.0)
            .map(|&(i, j, _)| {
                format!("edge ({i}, {j}) has zero weight and is mathematically inert")
            })
            .collect()
    }

    /// Coefficients of the nullifier `g_i = p_i - sum_{j in N(i)} W_ij x_j`.
    pub fn nullifier_coefficients(&self, i: usize) -> Result<NullifierSpec> {
        self.check_vertex(i)?;
        let x_coefficients = self.adjacency[i - 1]
            .iter()
            .map(|&(j, w)| (j, -w))
            .collect();
        Ok(NullifierSpec {
            vertex: i,
            p_coefficient: 1.0,
            x_coefficients,
        })
    }

    /// Combined measurement-noise width for nullifier `i`:
    /// `delta_i = sqrt(nu^2 + mu_x^2 * sum_j W_ij^2)`.
    pub fn combined_measurement_noise(&self, i: usize, noise: &NoiseModel) -> Result<f64> {
        self.check_vertex(i)?;
        let weight_sq: f64 = self.adjacency[i - 1].iter().map(|&(_, w)| w * w).sum();
        Ok((noise.p_width * noise.p_width + noise.x_width * noise.x_width * weight_sq).sqrt())
    }

    /// Worst-case combined width `delta = max_i delta_i`.
    pub fn max_combined_noise(&self, noise: &NoiseModel) -> f64 {
        (1..=self.n)
            .map(|i| {
                self.combined_measurement_noise(i, noise)
                    .expect("vertex in range")
            })
            .fold(0.0, f64::max)
    }

    /// All nullifier combined widths, indexed by vertex - 1.
    pub fn combined_noise_vector(&self, noise: &NoiseModel) -> Vec<f64> {
        (1..=self.n)
            .map(|i| {
                self.combined_measurement_noise(i, noise)
                    .expect("vertex in range")
            })
            .collect()
    }

    fn check_vertex(&self, i: usize) -> Result<()> {
        if i < 1 || i > self.n {
            Err(Error::VertexOutOfRange {
                index: i,
                n: self.n,
            })
        } else {
            Ok(())
        }
    }
}

/// Coefficients of one nullifier: unit weight on `p_i` and `-W_ij` on each
/// neighboring `x_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullifierSpec {
    pub vertex: usize,
    pub p_coefficient: f64,
    /// Neighbor index (1-based) -> coefficient `-W_ij`, sorted by index.
    pub x_coefficients: Vec<(usize, f64)>,
}

impl NullifierSpec {
    /// Evaluates the nullifier on classical outcomes: `p_i - sum W_ij x_j`.
    /// `x_outcomes` must align with `x_coefficients`.
    pub fn evaluate(&self, p_outcome: f64, x_outcomes: &[f64]) -> f64 {
        debug_assert_eq!(x_outcomes.len(), self.x_coefficients.len());
        let xs: f64 = self
            .x_coefficients
            .iter()
            .zip(x_outcomes)
            .map(|(&(_, c), &x)| c * x)
            .sum();
        self.p_coefficient * p_outcome + xs
    }
}

/// Gaussian measurement-noise widths for the two quadratures, in the
/// `exp(-t^2/w^2)` width convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Width of the p-quadrature measurement noise.
    pub p_width: f64,
    /// Width of the x-quadrature measurement noise.
    pub x_width: f64,
}

impl NoiseModel {
    pub fn new(p_width: f64, x_width: f64) -> Result<Self> {
        if !(p_width >= 0.0) || !(x_width >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise widths must be non-negative, got nu={p_width}, mu_x={x_width}"
            )));
        }
        Ok(Self { p_width, x_width })
    }

    /// Noiseless measurement.
    pub fn noiseless() -> Self {
        Self {
            p_width: 0.0,
            x_width: 0.0,
        }
    }
}
