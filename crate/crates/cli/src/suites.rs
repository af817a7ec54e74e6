//! Seeded randomized sweeps over the bound checks.
//!
//! Each suite draws its instances from `derive_seed(seed, index)`, so the
//! result is independent of how rayon schedules the work.

use graph_approx::bounds::{
    check_decay_bound, check_decay_convergence, check_equivalence_lemma2, check_jackson_with,
    check_k_omega, check_k_omega_multichannel, check_lower_bound, check_relu_projection, params,
    BoundCheckReport, JacksonConstants,
};
use graph_approx::gcn::{
    build_filter_gcn, build_filter_rw, build_filter_sym, forward, Filter, GcnConfig, Variant,
};
use graph_approx::smoothness::{apply_half_power, k_functional, k_functional_oracle, modulus};
use graph_approx::synth::{
    derive_seed, sample_connected_sbm, sample_gmm_features, GmmParams, SbmParams, SeededRng,
};
use graph_approx::{Graph, SpectralDecomposition};
use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::CliError;

const MAX_REDRAWS: usize = 1000;

/// Inclusive node-count range for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRange {
    pub min: usize,
    pub max: usize,
}

impl NodeRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn draw(&self, rng: &mut SeededRng) -> usize {
        let span = (self.max - self.min + 1) as f64;
        self.min + ((rng.uniform() * span) as usize).min(self.max - self.min)
    }
}

/// Connected two-class SBM with randomized size and edge probabilities.
pub fn random_graph(seed: u64, nodes: NodeRange) -> Result<Graph, CliError> {
    let mut rng = SeededRng::new(seed);
    let n = nodes.draw(&mut rng);
    let p = 0.5 + 0.45 * rng.uniform();
    let q = (0.05 + 0.35 * rng.uniform()) * p;
    let params = SbmParams::balanced(n, p, q, rng.next_u64());
    Ok(sample_connected_sbm(&params, MAX_REDRAWS)?.0)
}

fn laplacian(g: &Graph) -> Result<SpectralDecomposition, CliError> {
    Ok(SpectralDecomposition::of_laplacian(
        &g.combinatorial_laplacian(),
    )?)
}

/// `10^u` with `u` uniform in `[lo, hi]`.
fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    10f64.powf(lo + (hi - lo) * rng.uniform())
}

fn par_collect<T, F>(count: usize, job: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize) -> Result<T, CliError> + Sync + Send,
{
    (0..count).into_par_iter().map(job).collect()
}

fn tag(mut report: BoundCheckReport, key: &str, value: Value) -> BoundCheckReport {
    for record in &mut report.records {
        record.params.insert(key.to_string(), value.clone());
    }
    report
}

/// Renames a merged report without touching its records.
fn named(mut report: BoundCheckReport, name: &str) -> BoundCheckReport {
    report.name = name.to_string();
    report
}

/// `| |e^{ih} - 1|^2 - 4 sin^2(h/2) |` for uniform `h` in `[-100, 100]`,
/// asserted below `1e-12`.
pub fn translation_identity(samples: usize, seed: u64) -> BoundCheckReport {
    let mut rng = SeededRng::new(seed);
    let mut report = BoundCheckReport::new("translation_identity");
    report.instances = samples;
    for _ in 0..samples {
        let h = -100.0 + 200.0 * rng.uniform();
        let direct = (Complex::from_polar(1.0, h) - 1.0).norm_sqr();
        let closed = 4.0 * (0.5 * h).sin().powi(2);
        let error = (direct - closed).abs();
        report.measure("max_abs_error", error);
        report.push(params([("h", json!(h))]), error, 1e-12);
    }
    report.retain_worst(20);
    report
}

/// The four structural properties of the modulus on random instances.
pub fn modulus_properties(
    instances: usize,
    seed: u64,
    nodes: NodeRange,
) -> Result<BoundCheckReport, CliError> {
    let parts = par_collect(instances, |i| {
        let s = derive_seed(seed, i as u64);
        let g = random_graph(s, nodes)?;
        let d = laplacian(&g)?;
        let mut rng = SeededRng::new(derive_seed(s, 1));
        let n = g.num_nodes();
        let f1 = rng.normal_vector(n);
        let f2 = rng.normal_vector(n);
        let r = (rng.uniform() * 4.0) as u32;
        let t = log_uniform(&mut rng, -3.0, 1.0);
        let w = |f: &DVector<f64>, r: u32, t: f64| modulus(&d, r, t, f).map(|m| m.value);

        let mut report = BoundCheckReport::new("modulus_properties");
        let base = w(&f1, r, t)?;
        for lambda in [0.5_f64, 2.0, 7.3] {
            report.push(
                params([
                    ("property", json!("dilation")),
                    ("r", json!(r)),
                    ("t", json!(t)),
                    ("lambda", json!(lambda)),
                ]),
                w(&f1, r, lambda * t)?,
                (1.0 + lambda).powi(r as i32) * base,
            );
        }
        report.push(
            params([
                ("property", json!("subadditive")),
                ("r", json!(r)),
                ("t", json!(t)),
            ]),
            w(&(&f1 + &f2), r, t)?,
            base + w(&f2, r, t)?,
        );
        for j in 1..=r {
            report.push(
                params([
                    ("property", json!("order_reduction")),
                    ("r", json!(r)),
                    ("t", json!(t)),
                    ("j", json!(j)),
                ]),
                base,
                2f64.powi(j as i32) * w(&f1, r - j, t)?,
            );
            let smoothed = apply_half_power(&d, j, &f1)?;
            report.push(
                params([
                    ("property", json!("derivative")),
                    ("r", json!(r)),
                    ("t", json!(t)),
                    ("j", json!(j)),
                ]),
                base,
                t.powi(j as i32) * w(&smoothed, r - j, t)?,
            );
        }
        Ok(report)
    })?;
    let mut merged = BoundCheckReport::merge("modulus_properties", parts);
    merged.retain_worst(200);
    Ok(merged)
}

/// Jackson, single-frequency, and tail-sum bounds for every `r` in `r_values`.
pub fn jackson(
    instances: usize,
    seed: u64,
    nodes: NodeRange,
    r_values: &[u32],
    constants: JacksonConstants,
) -> Result<BoundCheckReport, CliError> {
    let parts = par_collect(instances, |i| {
        let s = derive_seed(seed, i as u64);
        let g = random_graph(s, nodes)?;
        let d = laplacian(&g)?;
        let f = SeededRng::new(derive_seed(s, 1)).normal_vector(g.num_nodes());
        let per_r = r_values
            .iter()
            .map(|&r| check_jackson_with(&d, &f, r, constants))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(named(BoundCheckReport::merge("jackson", per_r), "jackson"))
    })?;
    let mut merged = BoundCheckReport::merge("jackson", parts);
    if constants != JacksonConstants::default() {
        merged.note(format!(
            "constants scaled: C_r x {}, C'_r x {}",
            constants.cr_scale, constants.cr_prime_scale
        ));
    }
    merged.retain_worst(200);
    Ok(merged)
}

/// Band-limited equivalence at every `n >= 2` for every `r` in `r_values`.
pub fn equivalence(
    instances: usize,
    seed: u64,
    nodes: NodeRange,
    r_values: &[u32],
) -> Result<BoundCheckReport, CliError> {
    let parts = par_collect(instances, |i| {
        let s = derive_seed(seed, i as u64);
        let g = random_graph(s, nodes)?;
        let d = laplacian(&g)?;
        let f = SeededRng::new(derive_seed(s, 1)).normal_vector(g.num_nodes());
        let mut pieces = Vec::new();
        for &r in r_values {
            for n in 2..=g.num_nodes() {
                pieces.push(check_equivalence_lemma2(&d, &f, r, n)?);
            }
        }
        let mut report = BoundCheckReport::merge("band_limited_equivalence", pieces);
        report.instances = 1;
        for record in &mut report.records {
            record.params.remove("instance");
        }
        Ok(report)
    })?;
    let mut merged = BoundCheckReport::merge("band_limited_equivalence", parts);
    merged.retain_worst(200);
    Ok(merged)
}

/// Reports from the K-functional sweep on small graphs.
pub struct KFunctionalReports {
    /// One-parameter family against the direct minimizer.
    pub agreement: BoundCheckReport,
    pub k_omega: BoundCheckReport,
    pub k_omega_multichannel: BoundCheckReport,
}

/// Scales `t` cycle through ten log-spaced values in `[1e-2, 1e2]`; `r`
/// cycles through `0..=3` at a different period so every pair occurs.
pub fn k_functional_sweep(
    instances: usize,
    seed: u64,
    nodes: NodeRange,
) -> Result<KFunctionalReports, CliError> {
    let parts = par_collect(instances, |i| {
        let s = derive_seed(seed, i as u64);
        let g = random_graph(s, nodes)?;
        let d = laplacian(&g)?;
        let n = g.num_nodes();
        let mut rng = SeededRng::new(derive_seed(s, 1));
        let signal = rng.normal_matrix(n, 3);
        let f: DVector<f64> = signal.column(0).into_owned();
        let r = (i % 4) as u32;
        let t = 10f64.powf(-2.0 + 4.0 * ((i / 4) % 10) as f64 / 9.0);

        let family = k_functional(&d, r, t, &f)?.value;
        let oracle = k_functional_oracle(&d, r, t, &f, derive_seed(s, 2))?;
        let mut agreement = BoundCheckReport::new("k_functional_oracle");
        let relative = (family - oracle).abs() / oracle.max(f64::MIN_POSITIVE);
        agreement.measure("max_relative_difference", relative);
        agreement.push(
            params([("n", json!(n)), ("r", json!(r)), ("t", json!(t))]),
            (family - oracle).abs(),
            1e-6 * oracle,
        );
        let single = tag(check_k_omega(&d, &f, r, &[t])?, "n", json!(n));
        let multi = tag(
            check_k_omega_multichannel(&d, &signal, r, &[t])?,
            "n",
            json!(n),
        );
        Ok((agreement, single, multi))
    })?;
    let mut agreement = Vec::new();
    let mut single = Vec::new();
    let mut multi = Vec::new();
    for (a, s, m) in parts {
        agreement.push(a);
        single.push(s);
        multi.push(m);
    }
    Ok(KFunctionalReports {
        agreement: BoundCheckReport::merge("k_functional_oracle", agreement),
        k_omega: BoundCheckReport::merge("k_omega", single),
        k_omega_multichannel: BoundCheckReport::merge("k_omega_multichannel", multi),
    })
}

/// ReLU never increases the energy off `h_1`. Even cases use the constant
/// vector, odd cases the top eigenvector of the renormalized filter of a
/// random graph. Each `f` is Gaussian plus a random multiple of `h_1`.
pub fn relu_projection(
    cases: usize,
    seed: u64,
    nodes: NodeRange,
) -> Result<BoundCheckReport, CliError> {
    let parts = par_collect(cases, |i| {
        let s = derive_seed(seed, i as u64);
        let mut rng = SeededRng::new(derive_seed(s, 1));
        let (kind, h1) = if i % 2 == 0 {
            let n = nodes.draw(&mut rng);
            (
                "uniform",
                DVector::from_element(n, (n as f64).sqrt().recip()),
            )
        } else {
            let g = random_graph(s, nodes)?;
            let h = g
                .degrees()
                .as_vector()
                .map(|d| (d + 1.0).sqrt())
                .normalize();
            ("renormalized", h)
        };
        let shift = 3.0 * rng.standard_normal();
        let f = rng.normal_vector(h1.len()) + &h1 * shift;
        Ok(tag(check_relu_projection(&h1, &f)?, "h1", json!(kind)))
    })?;
    let mut merged = BoundCheckReport::merge("relu_projection", parts);
    merged.retain_worst(50);
    Ok(merged)
}

/// Filters used by the decay sweep.
fn classical_filters(g: &Graph, alpha: f64) -> Result<Vec<(&'static str, Filter)>, CliError> {
    Ok(vec![
        ("gcn", build_filter_gcn(g)?),
        ("sym", build_filter_sym(g, alpha)?),
        ("rw", build_filter_rw(g, alpha)?),
    ])
}

fn gmm_features(
    labels: &[i8],
    channels: usize,
    sigma: f64,
    seed: u64,
) -> Result<DMatrix<f64>, CliError> {
    let params =
        GmmParams::random_mean(channels, sigma, derive_seed(seed, 0), derive_seed(seed, 1));
    Ok(sample_gmm_features(labels, &params)?)
}

/// Paper-default SBM of size `n` with its labels.
pub fn paper_graph(n: usize, p: f64, q: f64, seed: u64) -> Result<(Graph, Vec<i8>), CliError> {
    let params = SbmParams::balanced(n, p, q, seed);
    let (g, _) = sample_connected_sbm(&params, MAX_REDRAWS)?;
    Ok((g, params.labels))
}

/// Decay bound, its per-layer form, and the convergence clause under unit
/// weight norms.
pub struct DecayReports {
    pub bound: BoundCheckReport,
    pub convergence: BoundCheckReport,
}

pub fn decay_bound(
    trials: usize,
    seed: u64,
    n: usize,
    depth: usize,
) -> Result<DecayReports, CliError> {
    let parts = par_collect(trials, |i| {
        let s = derive_seed(seed, i as u64);
        let (g, labels) = paper_graph(n, 0.8, 0.3, derive_seed(s, 0))?;
        let input = gmm_features(&labels, n, 10.0, derive_seed(s, 1))?;
        let config = GcnConfig::uniform(Variant::Plain, depth, n, 1.0, derive_seed(s, 2));
        let mut bounds = Vec::new();
        let mut convergence = Vec::new();
        for (name, filter) in classical_filters(&g, 0.75)? {
            let trace = forward(&config, &filter, &input)?;
            bounds.push(tag(
                check_decay_bound(&trace, &filter)?,
                "filter",
                json!(name),
            ));
            convergence.push(tag(
                check_decay_convergence(&trace, &filter, derive_seed(s, 3))?,
                "filter",
                json!(name),
            ));
        }
        Ok((
            flatten("high_frequency_decay", bounds),
            flatten("high_frequency_convergence", convergence),
        ))
    })?;
    let (bounds, convergence): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    let mut bound = BoundCheckReport::merge("high_frequency_decay", bounds);
    bound.retain_worst(300);
    let mut convergence = BoundCheckReport::merge("high_frequency_convergence", convergence);
    convergence.retain_worst(300);
    Ok(DecayReports { bound, convergence })
}

/// Merges sub-reports of one instance without adding instance tags.
fn flatten(name: &str, mut parts: Vec<BoundCheckReport>) -> BoundCheckReport {
    let mut notes: Vec<String> = parts
        .iter_mut()
        .flat_map(|p| std::mem::take(&mut p.notes))
        .collect();
    notes.dedup();
    let mut report = BoundCheckReport::merge(name, parts);
    report.instances = 1;
    for record in &mut report.records {
        record.params.remove("instance");
    }
    report.notes = notes;
    report
}

/// Lower bound on the distance from a random target to the network output,
/// with unit weight norms, `m` channels, and depths `1..=depth`.
pub fn lower_bound(
    trials: usize,
    seed: u64,
    n: usize,
    channels: usize,
    depth: usize,
    r_values: &[u32],
    t_grid: &[f64],
) -> Result<BoundCheckReport, CliError> {
    let parts = par_collect(trials, |i| {
        let s = derive_seed(seed, i as u64);
        let (g, labels) = paper_graph(n, 0.8, 0.3, derive_seed(s, 0))?;
        let input = gmm_features(&labels, channels, 10.0, derive_seed(s, 1))?;
        let target = gmm_features(&labels, channels, 10.0, derive_seed(s, 2))?;
        let config = GcnConfig::uniform(Variant::Plain, depth, channels, 1.0, derive_seed(s, 3));
        let mut pieces = Vec::new();
        for (name, filter) in [
            ("gcn", build_filter_gcn(&g)?),
            ("sym", build_filter_sym(&g, 0.75)?),
        ] {
            let trace = forward(&config, &filter, &input)?;
            pieces.push(tag(
                check_lower_bound(&target, &trace, &filter, r_values, t_grid)?,
                "filter",
                json!(name),
            ));
        }
        Ok(flatten("approximation_lower_bound", pieces))
    })?;
    let mut merged = BoundCheckReport::merge("approximation_lower_bound", parts);
    merged.retain_worst(300);
    Ok(merged)
}

/// Spectral range of the three classical filters and agreement of the top
/// eigenvector with its closed form.
pub fn filter_spectra(
    graphs: usize,
    seed: u64,
    nodes: NodeRange,
    alpha: f64,
) -> Result<BoundCheckReport, CliError> {
    let parts = par_collect(graphs, |i| {
        let g = random_graph(derive_seed(seed, i as u64), nodes)?;
        let n = g.num_nodes();
        let degrees = g.degrees().as_vector().clone();
        let mut report = BoundCheckReport::new("filter_spectra");
        for (name, filter) in classical_filters(&g, alpha)? {
            let values = filter.decomposition().eigenvalues();
            let top = values.max();
            let bottom = values.min();
            // Closed-form top eigenvector in the coordinates of the decomposition.
            let predicted = match name {
                "gcn" => degrees.map(|d| (d + 1.0).sqrt()).normalize(),
                _ => degrees.map(f64::sqrt).normalize(),
            };
            // Eigen-residual of the operator that is actually applied.
            let operator_residual = if name == "rw" {
                let ones = DMatrix::from_element(n, 1, 1.0);
                (filter.apply(&ones) - &ones).norm() / (n as f64).sqrt()
            } else {
                let p = DMatrix::from_column_slice(n, 1, predicted.as_slice());
                (filter.apply(&p) - &p).norm()
            };
            let vector_gap = (filter.low_frequency() - &predicted).norm();
            let residual = operator_residual.max(vector_gap);
            report.measure("max_eigenvalue", top);
            report.measure("min_eigenvalue", bottom);
            report.measure("max_top_residual", residual);
            let p = |check: &str| {
                params([
                    ("filter", json!(name)),
                    ("check", json!(check)),
                    ("n", json!(n)),
                ])
            };
            report.push(p("upper"), top, 1.0 + 1e-9);
            report.push(p("lower"), -bottom, 1.0 + 1e-9);
            report.push(p("top_eigenvector"), residual, 1e-8);
        }
        Ok(report)
    })?;
    let mut merged = BoundCheckReport::merge("filter_spectra", parts);
    merged.retain_worst(300);
    Ok(merged)
}

/// Suite sizes used by `verify`.
#[derive(Debug, Clone)]
pub struct SuitePlan {
    pub instances: usize,
    pub nodes: NodeRange,
    pub max_r: u32,
    pub constants: JacksonConstants,
    pub seed: u64,
}

/// Runs every suite and returns the reports in a fixed order.
pub fn run_all(plan: &SuitePlan) -> Result<Vec<BoundCheckReport>, CliError> {
    let stream = |k: u64| derive_seed(plan.seed, 1000 + k);
    let small = NodeRange::new(plan.nodes.min, plan.nodes.max.min(16).max(plan.nodes.min));
    let jackson_orders: Vec<u32> = (1..=plan.max_r.max(1)).collect();
    let all_orders: Vec<u32> = (0..=plan.max_r).collect();
    let decay_nodes = plan.nodes.max;
    let trials = plan.instances.min(20);

    let mut reports = vec![translation_identity(10_000, stream(0))];
    reports.push(modulus_properties(plan.instances, stream(1), plan.nodes)?);
    reports.push(jackson(
        plan.instances,
        stream(2),
        plan.nodes,
        &jackson_orders,
        plan.constants,
    )?);
    reports.push(equivalence(
        plan.instances,
        stream(3),
        plan.nodes,
        &all_orders,
    )?);
    let k = k_functional_sweep(plan.instances, stream(4), small)?;
    reports.extend([k.agreement, k.k_omega, k.k_omega_multichannel]);
    reports.push(relu_projection(10_000, stream(5), plan.nodes)?);
    let decay = decay_bound(trials, stream(6), decay_nodes, 30)?;
    reports.extend([decay.bound, decay.convergence]);
    reports.push(lower_bound(
        trials,
        stream(7),
        16,
        4,
        20,
        &[0, 1, 2],
        &[0.1, 1.0, 5.0],
    )?);
    reports.push(filter_spectra(plan.instances, stream(8), plan.nodes, 0.75)?);
    Ok(reports)
}
