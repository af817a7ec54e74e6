//! Undirected weighted graphs on dense adjacency storage, plus the degree and
//! Laplacian operators built from them.
//!
//! A [`Graph`] is validated on construction and immutable afterwards: the
//! adjacency is exactly symmetric, nonnegative, and has a zero diagonal.
//! Invalid inputs are rejected rather than repaired.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph needs at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("adjacency is not symmetric: A[{i}][{j}] = {a_ij} but A[{j}][{i}] = {a_ji}")]
    AsymmetricInput {
        i: usize,
        j: usize,
        a_ij: f64,
        a_ji: f64,
    },
    #[error("negative edge weight {weight} at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },
    #[error("nonzero diagonal entry {weight} at node {i}")]
    NonzeroDiagonal { i: usize, weight: f64 },
    #[error("non-finite weight at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("node {0} is isolated (zero degree)")]
    IsolatedNode(usize),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Node degrees `d_i = sum_j A_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(DVector<f64>);

impl DegreeVector {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First node with zero degree, if any.
    pub fn first_isolated(&self) -> Option<usize> {
        self.0.iter().position(|&d| d == 0.0)
    }
}

/// Validated undirected weighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
}

impl Graph {
    /// Validates `adjacency` and wraps it. Symmetry is checked bitwise.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows < 2 {
            return Err(GraphError::TooSmall(rows));
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = adjacency[(i, j)];
                if !w.is_finite() {
                    return Err(GraphError::NonFinite { i, j });
                }
                if w < 0.0 {
                    return Err(GraphError::NegativeWeight { i, j, weight: w });
                }
            }
        }
        for i in 0..rows {
            if adjacency[(i, i)] != 0.0 {
                return Err(GraphError::NonzeroDiagonal {
                    i,
                    weight: adjacency[(i, i)],
                });
            }
            for j in (i + 1)..cols {
                let (a_ij, a_ji) = (adjacency[(i, j)], adjacency[(j, i)]);
                if a_ij.to_bits() != a_ji.to_bits() {
                    return Err(GraphError::AsymmetricInput { i, j, a_ij, a_ji });
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Builds a graph from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GraphError> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(GraphError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::from_adjacency(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
    }

    /// Complete graph `K_n` with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Self::from_adjacency(DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 0.0 } else { 1.0 },
        ))
    }

    /// Path `0 - 1 - ... - (n-1)` with unit weights.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        Self::from_adjacency(DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Star with centre 0 and `n - 1` leaves.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        Self::from_adjacency(DMatrix::from_fn(n, n, |i, j| {
            if i != j && (i == 0 || j == 0) {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn degrees(&self) -> DegreeVector {
        let n = self.num_nodes();
        DegreeVector(DVector::from_fn(n, |i, _| self.adjacency.row(i).sum()))
    }

    /// `L = D - A`.
    pub fn combinatorial_laplacian(&self) -> DMatrix<f64> {
        let mut lap = -self.adjacency.clone();
        let degrees = self.degrees();
        for i in 0..self.num_nodes() {
            lap[(i, i)] = degrees.get(i);
        }
        lap
    }

    /// `I - D^{-1/2} A D^{-1/2}`; every node must have positive degree.
    pub fn normalized_laplacian(&self) -> Result<DMatrix<f64>, GraphError> {
        let degrees = self.degrees();
        if let Some(i) = degrees.first_isolated() {
            return Err(GraphError::IsolatedNode(i));
        }
        let inv_sqrt = degrees.as_vector().map(|d| 1.0 / d.sqrt());
        let n = self.num_nodes();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let scaled = inv_sqrt[i] * self.adjacency[(i, j)] * inv_sqrt[j];
            if i == j {
                1.0 - scaled
            } else {
                -scaled
            }
        }))
    }

    /// Breadth-first reachability from node 0 over edges with positive weight.
    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for (v, flag) in seen.iter_mut().enumerate() {
                if !*flag && self.adjacency[(u, v)] > 0.0 {
                    *flag = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }

    /// Parses a whitespace-separated `i j w` edge list with 0-based indices.
    /// Blank lines and lines starting with `#` are skipped. Each undirected
    /// edge may be listed once or twice; the node count is the largest index
    /// plus one unless `num_nodes` is given.
    pub fn parse_edge_list(text: &str, num_nodes: Option<usize>) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut max_index = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| GraphError::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected `i j w`, found {} fields",
                    fields.len()
                )));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|e| parse_err(format!("bad node index {:?}: {e}", fields[0])))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|e| parse_err(format!("bad node index {:?}: {e}", fields[1])))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|e| parse_err(format!("bad weight {:?}: {e}", fields[2])))?;
            max_index = max_index.max(i).max(j);
            edges.push((lineno + 1, i, j, w));
        }
        let n = num_nodes.unwrap_or(max_index + 1);
        let mut adjacency = DMatrix::zeros(n, n);
        for (line, i, j, w) in edges {
            if i >= n || j >= n {
                return Err(GraphError::Parse {
                    line,
                    message: format!("node index out of range for {n} nodes"),
                });
            }
            let existing: f64 = adjacency[(i, j)];
            if existing != 0.0 && existing.to_bits() != w.to_bits() {
                return Err(GraphError::Parse {
                    line,
                    message: format!("conflicting weights {existing} and {w} for edge ({i}, {j})"),
                });
            }
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
        }
        Self::from_adjacency(adjacency)
    }

    /// Parses a dense comma-separated adjacency matrix, one row per line.
    pub fn parse_dense_csv(text: &str) -> Result<Self, GraphError> {
        let mut rows = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| GraphError::Parse {
                        line: lineno + 1,
                        message: format!("bad entry {field:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Loads a graph file: `.csv` is read as a dense adjacency matrix, anything
    /// else as an edge list.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::parse_dense_csv(&text),
            _ => Self::parse_edge_list(&text, None),
        }
    }
}
