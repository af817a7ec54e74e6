//! Graph filters, graph-convolution forward passes, and high-frequency energy
//! traces.
//!
//! A [`Filter`] couples the propagation operator `H` applied in the forward
//! pass with a descending eigendecomposition whose first eigenvector `h_1` is
//! the nonnegative low-frequency direction. For the random-walk filter
//! `I - alpha D^{-1} L`, which is not symmetric, the decomposition belongs to
//! the similar symmetric operator `D^{1/2} H D^{-1/2}` and all energies are
//! measured on `D^{1/2} F`; such filters report [`Coordinates::Conjugated`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::spectral::{EigenOrdering, SpectralDecomposition, SpectralError};
use crate::synth::{derive_seed, sample_weight, SynthError};

/// Energies below this value are floored before taking logarithms.
pub const ENERGY_FLOOR: f64 = 1e-250;

const SPECTRUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcnError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("graph is not connected")]
    NotConnected,
    #[error("alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("surgery eigenvalue must satisfy |a| <= 1, got {0}")]
    SurgeryOutOfRange(f64),
    #[error("filter eigenvalue {value} outside (-1, 1]")]
    SpectrumOutOfRange { value: f64 },
    #[error("top filter eigenvalue is {0}, expected 1")]
    TopEigenvalueNotOne(f64),
    #[error("top eigenvalue is degenerate ({0} vs {1}); low-frequency direction is ambiguous")]
    AmbiguousLowFrequency(f64, f64),
    #[error("low-frequency eigenvector has a negative entry {0}")]
    NegativeLowFrequency(f64),
    #[error("operation needs a symmetric filter")]
    NonSymmetricFilter,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("signal has zero Frobenius norm")]
    ZeroSignal,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Gcn,
    Sym,
    Rw,
    Surgery,
    Custom,
}

/// Basis in which filter energies are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinates {
    Standard,
    /// Energies of `D^{1/2} F` (random-walk filter).
    Conjugated,
}

#[derive(Debug, Clone, PartialEq)]
enum Propagation {
    Dense(DMatrix<f64>),
    /// `h h^T + a (I - h h^T)`, applied without forming the matrix.
    LowRank {
        low: DVector<f64>,
        a: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    kind: FilterKind,
    propagation: Propagation,
    decomposition: SpectralDecomposition,
    mu_high: f64,
    /// Diagonal of `Q` with `Q H Q^{-1}` symmetric, for non-symmetric filters.
    conjugation: Option<DVector<f64>>,
    boundary: bool,
}

fn spectrum_mu_high(d: &SpectralDecomposition) -> f64 {
    d.eigenvalues()
        .iter()
        .skip(1)
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

impl Filter {
    /// Wraps a symmetric propagation matrix, checking the spectral conditions
    /// on a low-pass filter: eigenvalues in `(-1, 1]`, a simple top eigenvalue
    /// equal to one, and a nonnegative top eigenvector.
    pub fn from_symmetric(matrix: DMatrix<f64>, kind: FilterKind) -> Result<Self, GcnError> {
        let decomposition =
            SpectralDecomposition::eigendecompose(&matrix, EigenOrdering::DescendingValue)?;
        Self::validated(Propagation::Dense(matrix), decomposition, kind, None, true)
    }

    fn validated(
        propagation: Propagation,
        decomposition: SpectralDecomposition,
        kind: FilterKind,
        conjugation: Option<DVector<f64>>,
        require_simple_top: bool,
    ) -> Result<Self, GcnError> {
        let values = decomposition.eigenvalues();
        let top = values[0];
        if (top - 1.0).abs() > SPECTRUM_TOL {
            return Err(GcnError::TopEigenvalueNotOne(top));
        }
        if let Some(&bad) = values
            .iter()
            .find(|&&x| x <= -1.0 - SPECTRUM_TOL || x > 1.0 + SPECTRUM_TOL)
        {
            return Err(GcnError::SpectrumOutOfRange { value: bad });
        }
        if require_simple_top && values.len() > 1 && (top - values[1]).abs() <= SPECTRUM_TOL {
            return Err(GcnError::AmbiguousLowFrequency(top, values[1]));
        }
        let low = decomposition.eigenvectors().column(0);
        let most_negative = low.iter().copied().fold(0.0_f64, f64::min);
        if most_negative < -1e-10 {
            return Err(GcnError::NegativeLowFrequency(most_negative));
        }
        let boundary = values.iter().any(|&x| x <= -1.0 + SPECTRUM_TOL);
        let mu_high = spectrum_mu_high(&decomposition);
        Ok(Self {
            kind,
            propagation,
            decomposition,
            mu_high,
            conjugation,
            boundary,
        })
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    /// `max_{i >= 2} |mu_i|`.
    pub fn mu_high(&self) -> f64 {
        self.mu_high
    }

    pub fn num_nodes(&self) -> usize {
        self.decomposition.len()
    }

    /// Low-frequency eigenvector `h_1`.
    pub fn low_frequency(&self) -> DVector<f64> {
        self.decomposition.eigenvector(1)
    }

    pub fn coordinates(&self) -> Coordinates {
        if self.conjugation.is_some() {
            Coordinates::Conjugated
        } else {
            Coordinates::Standard
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.conjugation.is_none()
    }

    /// Whether some eigenvalue sits at the `-1` end of the admissible range.
    pub fn is_boundary(&self) -> bool {
        self.boundary
    }

    /// Diagonal of the conjugating scaling `D^{1/2}` for the random-walk filter.
    pub fn conjugation(&self) -> Option<&DVector<f64>> {
        self.conjugation.as_ref()
    }

    /// Dense propagation matrix `H` as applied in the forward pass.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.propagation {
            Propagation::Dense(m) => m.clone(),
            Propagation::LowRank { low, a } => {
                let n = low.len();
                let outer = low * low.transpose();
                &outer + (DMatrix::identity(n, n) - &outer) * *a
            }
        }
    }

    /// `H F`.
    pub fn apply(&self, signal: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.propagation {
            Propagation::Dense(m) => m * signal,
            Propagation::LowRank { low, a } => {
                let coefficients = low.tr_mul(signal);
                signal * *a + low * coefficients * (1.0 - a)
            }
        }
    }

    /// The signal expressed in the coordinates where the decomposition applies.
    pub fn spectral_coordinates(&self, signal: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.conjugation {
            None => signal.clone(),
            Some(q) => {
                let mut out = signal.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= q[i];
                }
                out
            }
        }
    }

    /// `E_h` of `signal` with respect to this filter.
    pub fn high_freq_energy(&self, signal: &DMatrix<f64>) -> Result<f64, GcnError> {
        Ok(self
            .decomposition
            .high_freq_energy(&self.spectral_coordinates(signal))?)
    }

    /// `E_1..E_N` of `signal` with respect to this filter's eigenbasis.
    pub fn direction_energies(&self, signal: &DMatrix<f64>) -> Result<Vec<f64>, GcnError> {
        Ok(self
            .decomposition
            .direction_energies(&self.spectral_coordinates(signal))?)
    }
}

fn connected_degrees(g: &Graph) -> Result<DVector<f64>, GcnError> {
    let degrees = g.degrees();
    if let Some(i) = degrees.first_isolated() {
        return Err(GraphError::IsolatedNode(i).into());
    }
    if !g.is_connected() {
        return Err(GcnError::NotConnected);
    }
    Ok(degrees.as_vector().clone())
}

fn check_alpha(alpha: f64) -> Result<(), GcnError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(GcnError::AlphaOutOfRange(alpha))
    }
}

/// `(D + I)^{-1/2} (A + I) (D + I)^{-1/2}`.
pub fn build_filter_gcn(g: &Graph) -> Result<Filter, GcnError> {
    if !g.is_connected() {
        return Err(GcnError::NotConnected);
    }
    let n = g.num_nodes();
    let inv_sqrt = g.degrees().as_vector().map(|d| 1.0 / (d + 1.0).sqrt());
    let a = g.adjacency();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let self_loop = if i == j { 1.0 } else { 0.0 };
        inv_sqrt[i] * (a[(i, j)] + self_loop) * inv_sqrt[j]
    });
    Filter::from_symmetric(matrix, FilterKind::Gcn)
}

fn sym_matrix(g: &Graph, alpha: f64) -> Result<DMatrix<f64>, GcnError> {
    let normalized = g.normalized_laplacian()?;
    let n = g.num_nodes();
    Ok(DMatrix::identity(n, n) - normalized * alpha)
}

/// `I - alpha D^{-1/2} L D^{-1/2}`.
pub fn build_filter_sym(g: &Graph, alpha: f64) -> Result<Filter, GcnError> {
    connected_degrees(g)?;
    check_alpha(alpha)?;
    Filter::from_symmetric(sym_matrix(g, alpha)?, FilterKind::Sym)
}

/// `I - alpha D^{-1} L`, decomposed through its symmetric conjugate.
pub fn build_filter_rw(g: &Graph, alpha: f64) -> Result<Filter, GcnError> {
    let degrees = connected_degrees(g)?;
    check_alpha(alpha)?;
    let n = g.num_nodes();
    let laplacian = g.combinatorial_laplacian();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - alpha * laplacian[(i, j)] / degrees[i]
    });
    let row_defect = (&matrix * DVector::from_element(n, 1.0))
        .add_scalar(-1.0)
        .amax();
    if row_defect > 1e-10 {
        return Err(GcnError::InvalidConfig(format!(
            "random-walk filter rows do not sum to one (defect {row_defect:e})"
        )));
    }
    let symmetric = sym_matrix(g, alpha)?;
    let decomposition =
        SpectralDecomposition::eigendecompose(&symmetric, EigenOrdering::DescendingValue)?;
    let conjugation = degrees.map(f64::sqrt);
    Filter::validated(
        Propagation::Dense(matrix),
        decomposition,
        FilterKind::Rw,
        Some(conjugation),
        true,
    )
}

/// Keeps `h_1` of `base` with eigenvalue 1 and replaces every other eigenvalue by `a`.
pub fn build_filter_surgery(base: &Filter, a: f64) -> Result<Filter, GcnError> {
    if !base.is_symmetric() {
        return Err(GcnError::NonSymmetricFilter);
    }
    if !(a.abs() <= 1.0) {
        return Err(GcnError::SurgeryOutOfRange(a));
    }
    let n = base.num_nodes();
    let eigenvalues = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { a });
    let decomposition = SpectralDecomposition::from_parts(
        eigenvalues,
        base.decomposition.eigenvectors().clone(),
        EigenOrdering::DescendingValue,
    )?;
    Filter::validated(
        Propagation::LowRank {
            low: base.low_frequency(),
            a,
        },
        decomposition,
        FilterKind::Surgery,
        None,
        false,
    )
}

/// Symmetric filter from an arbitrary matrix.
pub fn build_filter_custom(matrix: DMatrix<f64>) -> Result<Filter, GcnError> {
    Filter::from_symmetric(matrix, FilterKind::Custom)
}

/// High-pass companion `sum_{i >= 2} |mu_i| h_i h_i^T` of a filter.
#[derive(Debug, Clone, PartialEq)]
pub struct HighPass {
    matrix: DMatrix<f64>,
    decomposition: SpectralDecomposition,
    coordinates: Coordinates,
}

impl HighPass {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Ascending PSD decomposition; position 1 is `h_1` with eigenvalue 0.
    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    pub fn coordinates(&self) -> Coordinates {
        self.coordinates
    }
}

/// Builds `H~`. For the random-walk filter the operator lives in conjugated
/// coordinates and is flagged as such.
pub fn high_pass(filter: &Filter) -> Result<HighPass, GcnError> {
    let d = filter.decomposition();
    let n = d.len();
    let magnitudes: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                d.eigenvalues()[i].abs()
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // h_1 stays first; the rest ascend by |mu_i| (stable on ties).
    order[1..].sort_by(|&a, &b| magnitudes[a].total_cmp(&magnitudes[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| magnitudes[i]));
    let eigenvectors = DMatrix::from_fn(n, n, |row, col| d.eigenvectors()[(row, order[col])]);
    let decomposition = SpectralDecomposition::from_parts(
        eigenvalues,
        eigenvectors,
        EigenOrdering::AscendingValue,
    )?;
    let matrix = decomposition.reconstruct();
    Ok(HighPass {
        matrix,
        decomposition,
        coordinates: filter.coordinates(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    ResGcn,
    Appnp,
    Gcnii,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::ResGcn => "resgcn",
            Variant::Appnp => "appnp",
            Variant::Gcnii => "gcnii",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub variant: Variant,
    pub depth: usize,
    /// `m_0, ..., m_K`.
    pub widths: Vec<usize>,
    pub weight_frobenius: f64,
    /// Per-layer `alpha_k`, `k = 0..K-1` (APPNP and GCNII).
    pub alpha: Vec<f64>,
    /// Per-layer `beta_k` (GCNII).
    pub beta: Vec<f64>,
    /// Apply ReLU on the last layer of the plain variant.
    pub relu_final: bool,
    pub seed: u64,
}

impl GcnConfig {
    /// Constant width `m`, `alpha_k = beta_k = 0.5`.
    pub fn uniform(
        variant: Variant,
        depth: usize,
        width: usize,
        weight_frobenius: f64,
        seed: u64,
    ) -> Self {
        Self {
            variant,
            depth,
            widths: vec![width; depth + 1],
            weight_frobenius,
            alpha: vec![0.5; depth],
            beta: vec![0.5; depth],
            relu_final: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GcnError> {
        let bad = |msg: String| Err(GcnError::InvalidConfig(msg));
        if self.depth == 0 {
            return bad("depth must be positive".into());
        }
        if self.widths.len() != self.depth + 1 || self.widths.contains(&0) {
            return bad(format!(
                "need {} positive widths, got {:?}",
                self.depth + 1,
                self.widths
            ));
        }
        if self.variant != Variant::Plain && self.widths.iter().any(|&m| m != self.widths[0]) {
            return bad(format!("{} requires constant widths", self.variant.name()));
        }
        if !(self.weight_frobenius > 0.0) {
            return bad("weight_frobenius must be positive".into());
        }
        for (name, values) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if values.len() < self.depth {
                return bad(format!("{name} needs {} entries", self.depth));
            }
            if values.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return bad(format!("{name} entries must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Seed of `W^(k)`.
    pub fn layer_seed(&self, layer: usize) -> u64 {
        derive_seed(self.seed, layer as u64)
    }

    pub fn weight(&self, layer: usize) -> Result<DMatrix<f64>, GcnError> {
        Ok(sample_weight(
            self.widths[layer],
            self.widths[layer + 1],
            self.weight_frobenius,
            self.layer_seed(layer),
        )?)
    }

    /// Whether the weight norms satisfy the `||W||_F <= 1` hypothesis.
    pub fn theorem_mode(&self) -> bool {
        self.weight_frobenius <= 1.0
    }
}

/// Forward-pass record: every layer output and its high-frequency energy.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub config: GcnConfig,
    /// `F^(0), ..., F^(K)`.
    pub outputs: Vec<DMatrix<f64>>,
    /// `E_h(F^(k))` measured in the filter's coordinates.
    pub eh_per_layer: Vec<f64>,
    /// `||W^(k)||_F`, `k = 0..K-1`.
    pub weight_norms: Vec<f64>,
    pub frobenius_norms: Vec<f64>,
    pub coordinates: Coordinates,
}

impl LayerTrace {
    pub fn depth(&self) -> usize {
        self.outputs.len() - 1
    }

    pub fn final_output(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("trace holds at least F^(0)")
    }

    /// CSV with columns `layer,Eh,ln_Eh,frobenius_norm`.
    pub fn to_csv(&self) -> String {
        trace_csv(&self.eh_per_layer, &self.frobenius_norms)
    }
}

fn trace_csv(energies: &[f64], norms: &[f64]) -> String {
    let mut out = String::from("layer,Eh,ln_Eh,frobenius_norm\n");
    for (k, (&eh, &norm)) in energies.iter().zip(norms).enumerate() {
        out.push_str(&format!("{k},{eh:e},{},{norm:e}\n", floored_ln(eh)));
    }
    out
}

/// `ln(max(x, ENERGY_FLOOR))`.
pub fn floored_ln(x: f64) -> f64 {
    x.max(ENERGY_FLOOR).ln()
}

fn relu(m: DMatrix<f64>) -> DMatrix<f64> {
    m.map(|x| x.max(0.0))
}

/// State carried between layers, separate from the per-depth final step.
struct Propagator<'a> {
    config: &'a GcnConfig,
    filter: &'a Filter,
    input: &'a DMatrix<f64>,
}

impl Propagator<'_> {
    /// Layer `k -> k + 1`; `last` selects the final-layer form.
    fn step(
        &self,
        layer: usize,
        current: &DMatrix<f64>,
        weight: &DMatrix<f64>,
        last: bool,
    ) -> DMatrix<f64> {
        let cfg = self.config;
        match cfg.variant {
            Variant::Plain => {
                let linear = self.filter.apply(current) * weight;
                if last && !cfg.relu_final {
                    linear
                } else {
                    relu(linear)
                }
            }
            Variant::ResGcn => {
                let linear = self.filter.apply(current) * weight;
                if last {
                    linear + current
                } else {
                    relu(linear) + current
                }
            }
            Variant::Appnp => {
                let alpha = cfg.alpha[layer];
                self.filter.apply(current) * (1.0 - alpha) + (self.input * weight) * alpha
            }
            Variant::Gcnii => {
                let (alpha, beta) = (cfg.alpha[layer], cfg.beta[layer]);
                let m = weight.nrows();
                let mixed = self.filter.apply(current) * (1.0 - alpha) + self.input * alpha;
                let transform = weight * beta + DMatrix::identity(m, m) * (1.0 - beta);
                let linear = mixed * transform;
                if last {
                    linear
                } else {
                    relu(linear)
                }
            }
        }
    }
}

fn check_input(config: &GcnConfig, filter: &Filter, input: &DMatrix<f64>) -> Result<(), GcnError> {
    config.validate()?;
    if input.nrows() != filter.num_nodes() || input.ncols() != config.widths[0] {
        return Err(GcnError::DimensionMismatch(format!(
            "input is {}x{}, expected {}x{}",
            input.nrows(),
            input.ncols(),
            filter.num_nodes(),
            config.widths[0]
        )));
    }
    Ok(())
}

/// Runs the layers, handing each of `F^(0), ..., F^(K)` to `visit`.
/// Returns the weight norms and the final output.
fn run_layers<V>(
    config: &GcnConfig,
    filter: &Filter,
    input: &DMatrix<f64>,
    mut visit: V,
) -> Result<(Vec<f64>, DMatrix<f64>), GcnError>
where
    V: FnMut(&DMatrix<f64>) -> Result<(), GcnError>,
{
    check_input(config, filter, input)?;
    let propagator = Propagator {
        config,
        filter,
        input,
    };
    visit(input)?;
    let mut current = input.clone();
    let mut weight_norms = Vec::with_capacity(config.depth);
    for layer in 0..config.depth {
        let weight = config.weight(layer)?;
        weight_norms.push(weight.norm());
        current = propagator.step(layer, &current, &weight, layer + 1 == config.depth);
        visit(&current)?;
    }
    Ok((weight_norms, current))
}

/// Runs the configured network and records every layer.
pub fn forward(
    config: &GcnConfig,
    filter: &Filter,
    input: &DMatrix<f64>,
) -> Result<LayerTrace, GcnError> {
    let mut outputs = Vec::with_capacity(config.depth + 1);
    let (weight_norms, _) = run_layers(config, filter, input, |f| {
        outputs.push(f.clone());
        Ok(())
    })?;
    let eh_per_layer = outputs
        .iter()
        .map(|f| filter.high_freq_energy(f))
        .collect::<Result<Vec<_>, _>>()?;
    let frobenius_norms = outputs.iter().map(|f| f.norm()).collect();
    Ok(LayerTrace {
        config: config.clone(),
        outputs,
        eh_per_layer,
        weight_norms,
        frobenius_norms,
        coordinates: filter.coordinates(),
    })
}

/// Per-layer summary of a forward pass that keeps only the final output.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTrace {
    pub eh_per_layer: Vec<f64>,
    pub frobenius_norms: Vec<f64>,
    pub weight_norms: Vec<f64>,
    pub final_output: DMatrix<f64>,
    pub coordinates: Coordinates,
}

impl EnergyTrace {
    /// CSV with columns `layer,Eh,ln_Eh,frobenius_norm`.
    pub fn to_csv(&self) -> String {
        trace_csv(&self.eh_per_layer, &self.frobenius_norms)
    }
}

/// Same energies as [`forward`] with memory independent of the depth.
pub fn forward_energies(
    config: &GcnConfig,
    filter: &Filter,
    input: &DMatrix<f64>,
) -> Result<EnergyTrace, GcnError> {
    let mut eh_per_layer = Vec::with_capacity(config.depth + 1);
    let mut frobenius_norms = Vec::with_capacity(config.depth + 1);
    let (weight_norms, final_output) = run_layers(config, filter, input, |f| {
        eh_per_layer.push(filter.high_freq_energy(f)?);
        frobenius_norms.push(f.norm());
        Ok(())
    })?;
    Ok(EnergyTrace {
        eh_per_layer,
        frobenius_norms,
        weight_norms,
        final_output,
        coordinates: filter.coordinates(),
    })
}

/// Final outputs of the depth-`K` networks for every `K` in `depths`, sharing
/// the layer weights of `config` (whose `depth` must cover the largest `K`).
/// Layers before the last use the hidden-layer form; the last uses the
/// final-layer form, exactly as [`forward`] with `depth = K` would.
pub fn forward_depths(
    config: &GcnConfig,
    filter: &Filter,
    input: &DMatrix<f64>,
    depths: &[usize],
) -> Result<Vec<(usize, DMatrix<f64>)>, GcnError> {
    check_input(config, filter, input)?;
    if let Some(&bad) = depths.iter().find(|&&k| k == 0 || k > config.depth) {
        return Err(GcnError::InvalidConfig(format!(
            "depth {bad} outside 1..={}",
            config.depth
        )));
    }
    let propagator = Propagator {
        config,
        filter,
        input,
    };
    let deepest = depths.iter().copied().max().unwrap_or(0);
    let mut hidden = input.clone();
    let mut finals = Vec::with_capacity(depths.len());
    for layer in 0..deepest {
        let weight = config.weight(layer)?;
        if depths.contains(&(layer + 1)) {
            finals.push((layer + 1, propagator.step(layer, &hidden, &weight, true)));
        }
        if layer + 1 < deepest {
            hidden = propagator.step(layer, &hidden, &weight, false);
        }
    }
    finals.sort_by_key(|(k, _)| depths.iter().position(|d| d == k));
    Ok(finals)
}

/// `F / ||F||_F`.
pub fn normalize_frobenius(signal: &DMatrix<f64>) -> Result<DMatrix<f64>, GcnError> {
    let norm = signal.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(GcnError::ZeroSignal);
    }
    Ok(signal / norm)
}

/// Mean and standard error of `ln E_h` per layer across traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAggregate {
    pub layer: usize,
    pub mean_ln_eh: f64,
    pub stderr_ln_eh: f64,
    pub trials: usize,
}

pub fn aggregate_ln_eh(energies: &[Vec<f64>]) -> Vec<LayerAggregate> {
    let layers = energies.iter().map(Vec::len).min().unwrap_or(0);
    (0..layers)
        .map(|layer| {
            let logs: Vec<f64> = energies.iter().map(|e| floored_ln(e[layer])).collect();
            let n = logs.len() as f64;
            let mean = logs.iter().sum::<f64>() / n;
            let stderr = if logs.len() > 1 {
                let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            LayerAggregate {
                layer,
                mean_ln_eh: mean,
                stderr_ln_eh: stderr,
                trials: logs.len(),
            }
        })
        .collect()
}

/// CSV with columns `layer,mean_ln_Eh,stderr_ln_Eh,trials`.
pub fn aggregate_to_csv(rows: &[LayerAggregate]) -> String {
    let mut out = String::from("layer,mean_ln_Eh,stderr_ln_Eh,trials\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.layer, row.mean_ln_eh, row.stderr_ln_eh, row.trials
        ));
    }
    out
}
