//! Margin reports for the approximation and over-smoothing inequalities.
//!
//! Every check evaluates `lhs <= rhs` on concrete data and records
//! `margin = rhs - lhs`. A record counts as a violation when
//! `margin < -1e-9 (1 + |rhs|)`. Checks whose hypotheses fail on the given
//! data (weights above unit norm, non-symmetric filters) return reports
//! marked not applicable instead of asserting anything.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gcn::{high_pass, Filter, GcnError, LayerTrace, Variant};
use crate::smoothness::{
    difference_norm, k_functional, modulus, multichannel_k, multichannel_modulus,
    smoothness_seminorm, NamedConstants, SmoothnessError,
};
use crate::spectral::{EigenOrdering, SpectralDecomposition, SpectralError};
use crate::synth::SeededRng;

/// Relative slack applied to every comparison.
pub const RELATIVE_SLACK: f64 = 1e-9;

/// Tolerated weight norm overshoot from rescaling round-off.
const WEIGHT_NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error(transparent)]
    Smoothness(#[from] SmoothnessError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error("target has {target} channels but the network output has {output}")]
    ChannelMismatch { target: usize, output: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// One evaluated inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    #[serde(flatten)]
    pub params: BTreeMap<String, Value>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl BoundRecord {
    pub fn is_violation(&self) -> bool {
        self.margin < -violation_slack(self.rhs)
    }
}

/// `1e-9 (1 + |rhs|)`.
pub fn violation_slack(rhs: f64) -> f64 {
    RELATIVE_SLACK * (1.0 + rhs.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub name: String,
    pub instances: usize,
    pub applicable: bool,
    /// Smallest margin over all records; absent when nothing was asserted.
    pub worst_margin: Option<f64>,
    pub violated: bool,
    /// Reported, never asserted, measurements.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub measured: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub records: Vec<BoundRecord>,
}

impl BoundCheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            instances: 1,
            applicable: true,
            worst_margin: None,
            violated: false,
            measured: BTreeMap::new(),
            notes: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Report that asserts nothing because a hypothesis failed.
    pub fn not_applicable(name: impl Into<String>, reason: impl Into<String>) -> Self {
        let mut report = Self::new(name);
        report.applicable = false;
        report.notes.push(reason.into());
        report
    }

    pub fn push(&mut self, params: BTreeMap<String, Value>, lhs: f64, rhs: f64) {
        let record = BoundRecord {
            params,
            lhs,
            rhs,
            margin: rhs - lhs,
        };
        self.absorb(&record);
        self.records.push(record);
    }

    fn absorb(&mut self, record: &BoundRecord) {
        // NaN margins count as violations: a check that cannot be evaluated must not pass.
        let worst = match self.worst_margin {
            Some(w) if !(record.margin < w) && !record.margin.is_nan() => w,
            _ => record.margin,
        };
        self.worst_margin = Some(worst);
        self.violated |= record.is_violation() || record.margin.is_nan();
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Records a measurement. Keys starting with `min_` keep the smallest
    /// value seen, all others the largest.
    pub fn measure(&mut self, key: &str, value: f64) {
        let keep_min = key.starts_with("min_");
        let entry = self.measured.entry(key.to_string()).or_insert(value);
        if (keep_min && value < *entry) || (!keep_min && value > *entry) {
            *entry = value;
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundRecord> {
        self.records
            .iter()
            .filter(|r| r.is_violation() || r.margin.is_nan())
    }

    /// Combines per-instance reports into one, tagging each record with its
    /// instance index. Applicable only if some part was applicable.
    pub fn merge(name: impl Into<String>, parts: Vec<BoundCheckReport>) -> Self {
        let mut merged = Self::new(name);
        merged.instances = 0;
        merged.applicable = parts.is_empty();
        for (index, part) in parts.into_iter().enumerate() {
            merged.instances += part.instances;
            merged.applicable |= part.applicable;
            for (key, value) in part.measured {
                merged.measure(&key, value);
            }
            for note in part.notes {
                merged.notes.push(format!("instance {index}: {note}"));
            }
            for mut record in part.records {
                record.params.insert("instance".into(), json!(index));
                merged.absorb(&record);
                merged.records.push(record);
            }
        }
        merged
    }

    /// Drops all but the `keep` records closest to violation. The summary
    /// fields still describe the full set.
    pub fn retain_worst(&mut self, keep: usize) {
        let total = self.records.len();
        if total <= keep {
            return;
        }
        let severity = |r: &BoundRecord| {
            if r.margin.is_nan() {
                f64::NEG_INFINITY
            } else {
                r.margin / violation_slack(r.rhs)
            }
        };
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| severity(&self.records[a]).total_cmp(&severity(&self.records[b])));
        let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
        kept.sort_unstable();
        let records = std::mem::take(&mut self.records);
        self.records = kept.into_iter().map(|i| records[i].clone()).collect();
        self.note(format!("kept the {keep} tightest of {total} records"));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Builds a parameter map from `(key, value)` pairs.
pub fn params<const K: usize>(pairs: [(&str, Value); K]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn require_ascending(d: &SpectralDecomposition) -> Result<(), BoundsError> {
    if d.ordering() != EigenOrdering::AscendingValue {
        return Err(SpectralError::WrongOrdering(d.ordering()).into());
    }
    Ok(())
}

/// `lambda_n^{-1/2}`, or `None` when `lambda_n` vanishes.
fn natural_scale(d: &SpectralDecomposition, n: usize) -> Option<f64> {
    let lambda = d.eigenvalue(n);
    (lambda > 0.0).then(|| lambda.sqrt().recip())
}

/// Constants used by the Jackson-type checks; scaling is a test hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacksonConstants {
    pub cr_prime_scale: f64,
    pub cr_scale: f64,
}

impl Default for JacksonConstants {
    fn default() -> Self {
        Self {
            cr_prime_scale: 1.0,
            cr_scale: 1.0,
        }
    }
}

/// Jackson inequality, single-frequency bound, and the tail-sum bound for
/// every admissible `n`.
pub fn check_jackson(
    d: &SpectralDecomposition,
    f: &DVector<f64>,
    r: u32,
) -> Result<BoundCheckReport, BoundsError> {
    check_jackson_with(d, f, r, JacksonConstants::default())
}

pub fn check_jackson_with(
    d: &SpectralDecomposition,
    f: &DVector<f64>,
    r: u32,
    constants: JacksonConstants,
) -> Result<BoundCheckReport, BoundsError> {
    require_ascending(d)?;
    let n_max = d.len();
    let mut report = BoundCheckReport::new("jackson");
    if n_max < 2 || natural_scale(d, 2).is_none() {
        return Ok(BoundCheckReport::not_applicable(
            "jackson",
            "second eigenvalue vanishes; graph is not connected",
        ));
    }
    let cr_prime = NamedConstants::jackson_cr_prime(r) * constants.cr_prime_scale;
    let cr = NamedConstants::single_freq_cr(r) * constants.cr_scale;
    let spectrum = d.gft(f)?;

    // omega[n] = omega_r(f, lambda_n^{-1/2}) for n = 2..N (index 0 and 1 unused).
    let mut omega = vec![0.0; n_max + 1];
    for (n, slot) in omega.iter_mut().enumerate().skip(2) {
        let t = natural_scale(d, n).expect("ascending spectrum past a positive lambda_2");
        *slot = modulus(d, r, t, f)?.value;
    }
    // tail[n] = sum_{k > n} omega[k].
    let mut tail = vec![0.0; n_max + 1];
    for n in (1..n_max).rev() {
        tail[n] = tail[n + 1] + omega[n + 1];
    }

    for n in 1..=n_max {
        let best = d.best_approx_error(n, f)?;
        if n >= 2 {
            report.push(
                params([
                    ("inequality", json!("jackson")),
                    ("n", json!(n)),
                    ("r", json!(r)),
                ]),
                best,
                cr_prime * omega[n],
            );
            report.push(
                params([
                    ("inequality", json!("single_frequency")),
                    ("n", json!(n)),
                    ("r", json!(r)),
                ]),
                spectrum[n - 1].abs(),
                cr * omega[n],
            );
        }
        report.push(
            params([
                ("inequality", json!("tail_sum")),
                ("n", json!(n)),
                ("r", json!(r)),
            ]),
            best,
            cr * tail[n],
        );
    }
    Ok(report)
}

/// Two-sided comparison between the `r`-th difference at the natural scale
/// and `L^{r/2}` on the band-limited part `P_n f`, plus the bound of the
/// latter by the modulus of `f` itself.
pub fn check_equivalence_lemma2(
    d: &SpectralDecomposition,
    f: &DVector<f64>,
    r: u32,
    n: usize,
) -> Result<BoundCheckReport, BoundsError> {
    require_ascending(d)?;
    let name = "band_limited_equivalence";
    if n < 2 || n > d.len() {
        return Err(BoundsError::InvalidInput(format!(
            "n = {n} outside 2..={}",
            d.len()
        )));
    }
    let Some(t) = natural_scale(d, n) else {
        return Ok(BoundCheckReport::not_applicable(
            name,
            format!("lambda_{n} vanishes"),
        ));
    };
    let band = d.project_pw(n, f)?;
    let scaled = smoothness_seminorm(d, r, &band)? * t.powi(r as i32);
    // Round-off leaves ~1e-16 relative residue when P_n f lies in the kernel.
    if scaled <= 1e-12 * band.norm() || scaled == 0.0 {
        let mut report = BoundCheckReport::new(name);
        report.note(format!("skipped degenerate case: L^(r/2) P_{n} f = 0"));
        return Ok(report);
    }
    let difference = difference_norm(d, t, r, &band)?;
    let omega = modulus(d, r, t, f)?.value;
    let lower = NamedConstants::equiv_lower(r);

    let mut report = BoundCheckReport::new(name);
    let tag = |relation: &str| {
        params([
            ("relation", json!(relation)),
            ("n", json!(n)),
            ("r", json!(r)),
        ])
    };
    report.push(tag("ratio_lower"), lower * scaled, difference);
    report.push(tag("ratio_upper"), difference, scaled);
    report.push(tag("smoothness_vs_modulus"), scaled, omega / lower);
    report.measure("max_ratio", difference / scaled);
    report.measure("min_ratio", difference / scaled);
    Ok(report)
}

/// `omega_r(f, t) <= 2^r K_r(f, t)` on every `t`, reporting `max K / omega`.
pub fn check_k_omega(
    d: &SpectralDecomposition,
    f: &DVector<f64>,
    r: u32,
    t_grid: &[f64],
) -> Result<BoundCheckReport, BoundsError> {
    let single = DMatrix::from_column_slice(f.len(), 1, f.as_slice());
    k_omega_report("k_omega", d, &single, r, t_grid, |t| {
        Ok((modulus(d, r, t, f)?.value, k_functional(d, r, t, f)?.value))
    })
}

/// Summed-over-channels version of [`check_k_omega`].
pub fn check_k_omega_multichannel(
    d: &SpectralDecomposition,
    signal: &DMatrix<f64>,
    r: u32,
    t_grid: &[f64],
) -> Result<BoundCheckReport, BoundsError> {
    k_omega_report("k_omega_multichannel", d, signal, r, t_grid, |t| {
        Ok((
            multichannel_modulus(d, r, t, signal)?,
            multichannel_k(d, r, t, signal)?,
        ))
    })
}

fn k_omega_report<F>(
    name: &str,
    d: &SpectralDecomposition,
    signal: &DMatrix<f64>,
    r: u32,
    t_grid: &[f64],
    mut evaluate: F,
) -> Result<BoundCheckReport, BoundsError>
where
    F: FnMut(f64) -> Result<(f64, f64), BoundsError>,
{
    require_ascending(d)?;
    if t_grid.is_empty() {
        return Err(BoundsError::InvalidInput("t grid is empty".into()));
    }
    if signal.nrows() != d.len() {
        return Err(SpectralError::DimensionMismatch {
            expected: d.len(),
            found: signal.nrows(),
        }
        .into());
    }
    let mut report = BoundCheckReport::new(name);
    let factor = 2.0_f64.powi(r as i32);
    for &t in t_grid {
        let (omega, k) = evaluate(t)?;
        report.push(
            params([("r", json!(r)), ("t", json!(t))]),
            omega,
            factor * k,
        );
        if omega > 0.0 {
            report.measure("max_k_over_omega", k / omega);
        }
    }
    Ok(report)
}

/// `||P relu(f)||^2 <= ||P f||^2` with `P` the projection off `h_1`.
pub fn check_relu_projection(
    h1: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<BoundCheckReport, BoundsError> {
    if h1.len() != f.len() {
        return Err(BoundsError::InvalidInput(
            "h_1 and f differ in length".into(),
        ));
    }
    if (h1.norm() - 1.0).abs() > 1e-10 {
        return Err(BoundsError::InvalidInput(format!(
            "h_1 has norm {}",
            h1.norm()
        )));
    }
    if h1.iter().any(|&x| x < 0.0) {
        return Err(BoundsError::InvalidInput("h_1 has a negative entry".into()));
    }
    let off_low = |v: &DVector<f64>| (v - h1 * h1.dot(v)).norm_squared();
    let rectified = f.map(|x| x.max(0.0));
    let mut report = BoundCheckReport::new("relu_projection");
    report.push(BTreeMap::new(), off_low(&rectified), off_low(f));
    Ok(report)
}

fn theorem_hypotheses(trace: &LayerTrace, filter: &Filter) -> Result<(), String> {
    if trace.config.variant != Variant::Plain {
        return Err(format!(
            "variant {} is not the plain graph convolution",
            trace.config.variant.name()
        ));
    }
    if let Some((k, norm)) = trace
        .weight_norms
        .iter()
        .enumerate()
        .find(|(_, &w)| w > 1.0 + WEIGHT_NORM_SLACK)
    {
        return Err(format!("weight {k} has Frobenius norm {norm} > 1"));
    }
    if filter.num_nodes() != trace.outputs[0].nrows() {
        return Err("filter and trace sizes differ".into());
    }
    Ok(())
}

/// `E_h(F^(k)) <= mu_high^{2k} ||F^(0)||_F^2` at every layer, plus the
/// per-layer contraction `E_h(F^(k+1)) <= mu_high^2 E_h(F^(k))`.
pub fn check_decay_bound(
    trace: &LayerTrace,
    filter: &Filter,
) -> Result<BoundCheckReport, BoundsError> {
    let name = "high_frequency_decay";
    if let Err(reason) = theorem_hypotheses(trace, filter) {
        return Ok(BoundCheckReport::not_applicable(name, reason));
    }
    let mu = filter.mu_high();
    let initial = filter
        .spectral_coordinates(&trace.outputs[0])
        .norm_squared();
    let mut report = BoundCheckReport::new(name);
    if filter.is_symmetric() {
        report.note("coordinates: standard");
    } else {
        report.note("coordinates: conjugated");
    }
    for k in 1..trace.outputs.len() {
        let eh = trace.eh_per_layer[k];
        report.push(
            params([("form", json!("closed")), ("layer", json!(k))]),
            eh,
            mu.powi(2 * k as i32) * initial,
        );
        report.push(
            params([("form", json!("induction")), ("layer", json!(k))]),
            eh,
            mu * mu * trace.eh_per_layer[k - 1] + RELATIVE_SLACK * initial,
        );
    }
    Ok(report)
}

/// Once `mu_high^k sqrt(N) ||F^(0)||_F <= 1e-7`, the outputs are orthogonal
/// to a random unit `v` perpendicular to `h_1` up to `1e-6` summed over channels.
pub fn check_decay_convergence(
    trace: &LayerTrace,
    filter: &Filter,
    seed: u64,
) -> Result<BoundCheckReport, BoundsError> {
    let name = "high_frequency_convergence";
    if let Err(reason) = theorem_hypotheses(trace, filter) {
        return Ok(BoundCheckReport::not_applicable(name, reason));
    }
    let mu = filter.mu_high();
    let n = filter.num_nodes();
    let initial = filter.spectral_coordinates(&trace.outputs[0]).norm();
    let h1 = filter.low_frequency();
    let mut rng = SeededRng::new(seed);
    let raw = rng.normal_vector(n);
    let perpendicular = &raw - &h1 * h1.dot(&raw);
    let v = perpendicular.normalize();

    let mut report = BoundCheckReport::new(name);
    for k in 1..trace.outputs.len() {
        if mu.powi(k as i32) * (n as f64).sqrt() * initial > 1e-7 {
            continue;
        }
        let coords = filter.spectral_coordinates(&trace.outputs[k]);
        let lhs: f64 = coords.column_iter().map(|c| c.dot(&v).abs()).sum();
        report.push(params([("layer", json!(k))]), lhs, 1e-6);
    }
    if report.records.is_empty() {
        report.note("threshold mu_high^k sqrt(N) ||F0|| <= 1e-7 not reached");
    }
    Ok(report)
}

/// Lower bound on `||F - F^(K)||_F` through the modulus of `F` against the
/// high-pass operator. Every layer of the trace is treated as the output of a
/// network of that depth when the trace's layers all share the hidden form
/// (plain variant with final ReLU); otherwise only the last layer is used.
pub fn check_lower_bound(
    target: &DMatrix<f64>,
    trace: &LayerTrace,
    filter: &Filter,
    r_values: &[u32],
    t_grid: &[f64],
) -> Result<BoundCheckReport, BoundsError> {
    let name = "approximation_lower_bound";
    let output = trace.final_output();
    if target.ncols() != output.ncols() {
        return Err(BoundsError::ChannelMismatch {
            target: target.ncols(),
            output: output.ncols(),
        });
    }
    if target.nrows() != output.nrows() {
        return Err(BoundsError::InvalidInput(
            "target and output differ in node count".into(),
        ));
    }
    if let Err(reason) = theorem_hypotheses(trace, filter) {
        return Ok(BoundCheckReport::not_applicable(name, reason));
    }
    if !filter.is_symmetric() {
        return Ok(BoundCheckReport::not_applicable(
            name,
            "filter is not symmetric; the bound is stated for orthonormal eigenvectors",
        ));
    }
    let high = high_pass(filter)?;
    let mu = filter.mu_high();
    let m = target.ncols() as f64;
    let initial = trace.outputs[0].norm();
    let depth = trace.depth();
    let layers: Vec<usize> = if trace.config.relu_final {
        (1..=depth).collect()
    } else {
        vec![depth]
    };

    let mut report = BoundCheckReport::new(name);
    for &r in r_values {
        for &t in t_grid {
            let w = multichannel_modulus(high.decomposition(), r, t, target)?;
            let leading = w * NamedConstants::equiv_c1(r) / m.sqrt();
            for &k in &layers {
                let lhs = (target - &trace.outputs[k]).norm();
                let correction = if r == 0 {
                    mu.powi(k as i32) * initial
                } else {
                    (t / 2.0).powi(r as i32) * mu.powf(k as f64 + f64::from(r) / 2.0) * initial
                };
                // The bound reads rhs <= lhs; stored as lhs <= rhs of the record.
                report.push(
                    params([("depth", json!(k)), ("r", json!(r)), ("t", json!(t))]),
                    leading - correction,
                    lhs,
                );
            }
        }
    }
    Ok(report)
}
