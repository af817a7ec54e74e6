//! Seeded synthetic data: two-class stochastic block model graphs, Gaussian
//! mixture node features, and Frobenius-normalized Gaussian weight matrices.
//!
//! All randomness comes from [`SeededRng`], a ChaCha8 stream seeded through
//! `rand_core`'s `seed_from_u64`. Uniform variates take the top 53 bits of
//! each 64-bit output; normal variates use the Box–Muller transform, both
//! outputs of each pair consumed in order. These conversions are implemented
//! here so that a seed reproduces bit-identical data on any platform.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid SBM probabilities p = {p}, q = {q}: need 0 <= q < p <= 1")]
    InvalidProbabilities { p: f64, q: f64 },
    #[error("labels must be +1 or -1, found {0} at index {1}")]
    InvalidLabel(i8, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("noise standard deviation must be positive, got {0}")]
    InvalidNoise(f64),
    #[error("invalid weight shape {rows}x{cols} or target norm {target}")]
    InvalidWeightSpec {
        rows: usize,
        cols: usize,
        target: f64,
    },
    #[error("no connected SBM sample after {0} redraws")]
    NoConnectedSample(usize),
    #[error("weight draw was all zeros twice")]
    DegenerateDraw,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Portable seeded random stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`; `p = 1` always succeeds and `p = 0` never does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal variate (Box–Muller).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the logarithm is finite.
        let radius = (-2.0 * (1.0 - self.uniform()).ln()).sqrt();
        let angle = TAU * self.uniform();
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    pub fn normal_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.standard_normal())
    }

    /// Matrix of i.i.d. standard normals, filled row by row.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let values: Vec<f64> = (0..rows * cols).map(|_| self.standard_normal()).collect();
        DMatrix::from_row_slice(rows, cols, &values)
    }
}

/// Independent child seed for stream `index` of `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Balanced two-class labels: the first `ceil(n / 2)` nodes are `+1`, the rest `-1`.
pub fn balanced_labels(n: usize) -> Vec<i8> {
    let positives = n.div_ceil(2);
    (0..n).map(|i| if i < positives { 1 } else { -1 }).collect()
}

fn validate_labels(labels: &[i8]) -> Result<(), SynthError> {
    match labels.iter().position(|&y| y != 1 && y != -1) {
        Some(i) => Err(SynthError::InvalidLabel(labels[i], i)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub num_nodes: usize,
    pub p_intra: f64,
    pub q_inter: f64,
    pub labels: Vec<i8>,
    pub seed: u64,
}

impl SbmParams {
    /// Balanced labels for `num_nodes` nodes.
    pub fn balanced(num_nodes: usize, p_intra: f64, q_inter: f64, seed: u64) -> Self {
        Self {
            num_nodes,
            p_intra,
            q_inter,
            labels: balanced_labels(num_nodes),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (p, q) = (self.p_intra, self.q_inter);
        if !(0.0..p).contains(&q) || p > 1.0 {
            return Err(SynthError::InvalidProbabilities { p, q });
        }
        if self.labels.len() != self.num_nodes {
            return Err(SynthError::DimensionMismatch(format!(
                "{} labels for {} nodes",
                self.labels.len(),
                self.num_nodes
            )));
        }
        validate_labels(&self.labels)
    }
}

/// Samples a two-class SBM graph.
///
/// Pairs `i < j` are visited in row-major order and each consumes exactly one
/// uniform draw, so the edge set is a fixed function of the seed.
pub fn sample_sbm(params: &SbmParams) -> Result<Graph, SynthError> {
    params.validate()?;
    let n = params.num_nodes;
    let mut rng = SeededRng::new(params.seed);
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if params.labels[i] == params.labels[j] {
                params.p_intra
            } else {
                params.q_inter
            };
            if rng.bernoulli(prob) {
                adjacency[(i, j)] = 1.0;
                adjacency[(j, i)] = 1.0;
            }
        }
    }
    Ok(Graph::from_adjacency(adjacency)?)
}

/// Draws SBM graphs with seeds `seed, seed + 1, ...` until one is connected.
/// Returns the graph and the number of rejected draws.
pub fn sample_connected_sbm(
    params: &SbmParams,
    max_redraws: usize,
) -> Result<(Graph, usize), SynthError> {
    let mut current = params.clone();
    for redraws in 0..=max_redraws {
        let g = sample_sbm(&current)?;
        if g.is_connected() {
            return Ok((g, redraws));
        }
        current.seed = current.seed.wrapping_add(1);
    }
    Err(SynthError::NoConnectedSample(max_redraws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub mean_vector: Vec<f64>,
    pub noise_std: f64,
    pub num_channels: usize,
    pub seed: u64,
}

impl GmmParams {
    /// Mean vector with i.i.d. standard-normal entries drawn from `mean_seed`.
    pub fn random_mean(num_channels: usize, noise_std: f64, mean_seed: u64, seed: u64) -> Self {
        let mut rng = SeededRng::new(mean_seed);
        Self {
            mean_vector: rng.normal_vector(num_channels).iter().copied().collect(),
            noise_std,
            num_channels,
            seed,
        }
    }
}

/// `F0[i][j] = y_i * mu_j + eps_ij` with `eps_ij ~ N(0, sigma^2)`, noise
/// drawn row by row.
pub fn sample_gmm_features(labels: &[i8], params: &GmmParams) -> Result<DMatrix<f64>, SynthError> {
    validate_labels(labels)?;
    if params.mean_vector.len() != params.num_channels {
        return Err(SynthError::DimensionMismatch(format!(
            "mean vector has length {} but {} channels were requested",
            params.mean_vector.len(),
            params.num_channels
        )));
    }
    if !(params.noise_std > 0.0) {
        return Err(SynthError::InvalidNoise(params.noise_std));
    }
    let mut rng = SeededRng::new(params.seed);
    let (n, m) = (labels.len(), params.num_channels);
    let mut features = DMatrix::zeros(n, m);
    for i in 0..n {
        let y = f64::from(labels[i]);
        for j in 0..m {
            features[(i, j)] = y * params.mean_vector[j] + params.noise_std * rng.standard_normal();
        }
    }
    Ok(features)
}

/// Gaussian `rows x cols` matrix rescaled to Frobenius norm `target_frobenius`.
pub fn sample_weight(
    rows: usize,
    cols: usize,
    target_frobenius: f64,
    seed: u64,
) -> Result<DMatrix<f64>, SynthError> {
    if rows == 0 || cols == 0 || !(target_frobenius > 0.0) || !target_frobenius.is_finite() {
        return Err(SynthError::InvalidWeightSpec {
            rows,
            cols,
            target: target_frobenius,
        });
    }
    let mut rng = SeededRng::new(seed);
    for _attempt in 0..2 {
        let raw = rng.normal_matrix(rows, cols);
        let norm = raw.norm();
        if norm > 0.0 {
            return Ok(raw * (target_frobenius / norm));
        }
    }
    Err(SynthError::DegenerateDraw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
        let mut c = SeededRng::new(43);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn uniform_range() {
        let mut rng = SeededRng::new(7);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = SeededRng::new(11);
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        // Var of the sample variance for N(0,1) is 2/(n-1).
        assert!((var - 1.0).abs() < 5.0 * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn balanced_label_split() {
        assert_eq!(balanced_labels(5), vec![1, 1, 1, -1, -1]);
        assert_eq!(balanced_labels(4), vec![1, 1, -1, -1]);
    }

    #[test]
    fn sbm_extremes() {
        // q < p is enforced, so the complete graph comes from a single class with p = 1.
        let one_class = SbmParams {
            num_nodes: 7,
            p_intra: 1.0,
            q_inter: 0.0,
            labels: vec![1; 7],
            seed: 3,
        };
        assert_eq!(sample_sbm(&one_class).unwrap(), Graph::complete(7).unwrap());

        let mut params = SbmParams::balanced(6, 1.0, 0.0, 5);
        let split = sample_sbm(&params).unwrap();
        assert!(!split.is_connected());
        for i in 0..6 {
            for j in 0..6 {
                let same = params.labels[i] == params.labels[j];
                let expected = if i != j && same { 1.0 } else { 0.0 };
                assert_eq!(split.adjacency()[(i, j)], expected);
            }
        }

        params.q_inter = 1.0;
        assert_eq!(
            sample_sbm(&params),
            Err(SynthError::InvalidProbabilities { p: 1.0, q: 1.0 })
        );
    }

    #[test]
    fn sbm_rejects_bad_labels() {
        let mut params = SbmParams::balanced(4, 0.5, 0.1, 0);
        params.labels[2] = 0;
        assert_eq!(sample_sbm(&params), Err(SynthError::InvalidLabel(0, 2)));
        params.labels.pop();
        assert!(matches!(
            sample_sbm(&params),
            Err(SynthError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn connected_redraw() {
        let params = SbmParams::balanced(6, 1.0, 0.0, 5);
        assert_eq!(
            sample_connected_sbm(&params, 3),
            Err(SynthError::NoConnectedSample(3))
        );
        let (g, redraws) = sample_connected_sbm(&SbmParams::balanced(30, 0.8, 0.3, 9), 10).unwrap();
        assert!(g.is_connected());
        assert_eq!(redraws, 0);
    }

    #[test]
    fn gmm_with_negligible_noise() {
        let labels = balanced_labels(6);
        let mut mean = vec![0.0; 6];
        mean[0] = 1.0;
        let params = GmmParams {
            mean_vector: mean,
            noise_std: 1e-12,
            num_channels: 6,
            seed: 1,
        };
        let f = sample_gmm_features(&labels, &params).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if j == 0 { f64::from(labels[i]) } else { 0.0 };
                assert!((f[(i, j)] - expected).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn gmm_errors() {
        let labels = balanced_labels(4);
        let mut params = GmmParams::random_mean(3, 10.0, 1, 2);
        params.num_channels = 4;
        assert!(matches!(
            sample_gmm_features(&labels, &params),
            Err(SynthError::DimensionMismatch(_))
        ));
        let mut params = GmmParams::random_mean(3, 0.0, 1, 2);
        params.noise_std = 0.0;
        assert_eq!(
            sample_gmm_features(&labels, &params),
            Err(SynthError::InvalidNoise(0.0))
        );
    }

    #[test]
    fn weight_normalization() {
        let w = sample_weight(1, 1, 1.0, 3).unwrap();
        assert_eq!(w[(0, 0)].abs(), 1.0);
        for target in [10.0, 1.0] {
            let w = sample_weight(100, 100, target, 8).unwrap();
            assert!((w.norm() - target).abs() <= 1e-12);
        }
        assert!(sample_weight(0, 3, 1.0, 0).is_err());
        assert!(sample_weight(3, 3, -1.0, 0).is_err());
    }
}
