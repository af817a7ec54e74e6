//! High-frequency energy experiments: decay under the classical filters,
//! spectral surgery, and skip-connection variants.

use std::fmt::Write;

use graph_approx::bounds::{check_decay_bound, BoundCheckReport};
use graph_approx::gcn::{
    aggregate_ln_eh, aggregate_to_csv, build_filter_gcn, build_filter_rw, build_filter_surgery,
    build_filter_sym, floored_ln, forward, forward_depths, forward_energies, normalize_frobenius,
    Filter, GcnConfig, LayerAggregate, Variant, ENERGY_FLOOR,
};
use graph_approx::synth::{
    balanced_labels, derive_seed, sample_connected_sbm, sample_gmm_features, GmmParams, SbmParams,
};
use graph_approx::Graph;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, FilterChoice, MeanMode};
use crate::output::OutputDir;
use crate::svg::{bar_chart, line_chart, Series};
use crate::CliError;

/// Graph, labels and input features of one trial.
pub struct TrialInputs {
    pub graph: Graph,
    pub labels: Vec<i8>,
    pub features: DMatrix<f64>,
    /// Seed for the layer weights.
    pub weight_seed: u64,
}

/// Draws the inputs of `trial`. A fixed graph (from a file) is reused;
/// otherwise each trial samples its own connected SBM.
pub fn trial_inputs(
    config: &ExperimentConfig,
    fixed: Option<&Graph>,
    trial: usize,
) -> Result<TrialInputs, CliError> {
    let seed = derive_seed(config.seed, trial as u64);
    let (graph, labels) = match fixed {
        Some(g) => (g.clone(), balanced_labels(g.num_nodes())),
        None => {
            let params = SbmParams::balanced(
                config.num_nodes(),
                config.graph.p,
                config.graph.q,
                derive_seed(seed, 0),
            );
            let (g, _redraws) = sample_connected_sbm(&params, 1000)?;
            (g, params.labels)
        }
    };
    let width = config.gcn.width.unwrap_or(graph.num_nodes());
    let sigma = config.features.sigma;
    let params = match config.features.mean_mode {
        MeanMode::Random => {
            GmmParams::random_mean(width, sigma, derive_seed(seed, 1), derive_seed(seed, 2))
        }
        MeanMode::Ones => GmmParams {
            mean_vector: vec![1.0; width],
            noise_std: sigma,
            num_channels: width,
            seed: derive_seed(seed, 2),
        },
    };
    let features = sample_gmm_features(&labels, &params)?;
    Ok(TrialInputs {
        graph,
        labels,
        features,
        weight_seed: derive_seed(seed, 3),
    })
}

pub fn load_fixed_graph(config: &ExperimentConfig) -> Result<Option<Graph>, CliError> {
    match &config.graph.file {
        None => Ok(None),
        Some(path) => Graph::load(path)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
    }
}

fn build_classical(g: &Graph, choice: FilterChoice, alpha: f64) -> Result<Filter, CliError> {
    Ok(match choice {
        FilterChoice::Gcn => build_filter_gcn(g)?,
        FilterChoice::Sym => build_filter_sym(g, alpha)?,
        FilterChoice::Rw => build_filter_rw(g, alpha)?,
    })
}

fn plain_config(config: &ExperimentConfig, width: usize, seed: u64) -> GcnConfig {
    let mut gcn = GcnConfig::uniform(
        Variant::Plain,
        config.gcn.depth,
        width,
        config.gcn.weight_frobenius,
        seed,
    );
    gcn.alpha = vec![config.gcn.alpha_k; config.gcn.depth];
    gcn.beta = vec![config.gcn.beta_k; config.gcn.depth];
    gcn
}

/// Per-layer energies of one filter, plus the bound report in theorem mode.
struct FilterRun {
    energies: Vec<f64>,
    trace_csv: String,
    bound: Option<BoundCheckReport>,
}

fn run_plain(
    config: &ExperimentConfig,
    inputs: &TrialInputs,
    filter: &Filter,
) -> Result<FilterRun, CliError> {
    let gcn = plain_config(config, inputs.features.ncols(), inputs.weight_seed);
    if gcn.theorem_mode() {
        let trace = forward(&gcn, filter, &inputs.features)?;
        let bound = check_decay_bound(&trace, filter)?;
        Ok(FilterRun {
            energies: trace.eh_per_layer.clone(),
            trace_csv: trace.to_csv(),
            bound: Some(bound),
        })
    } else {
        let trace = forward_energies(&gcn, filter, &inputs.features)?;
        Ok(FilterRun {
            trace_csv: trace.to_csv(),
            energies: trace.eh_per_layer,
            bound: None,
        })
    }
}

/// Aggregated `ln E_h` curve of one filter.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub rows: Vec<LayerAggregate>,
}

impl Curve {
    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_ln_eh).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CurveOutcome {
    pub curves: Vec<Curve>,
    /// Decay bound checks; `None` unless every weight has norm at most one.
    pub bound: Option<BoundCheckReport>,
}

impl CurveOutcome {
    pub fn violated(&self) -> bool {
        self.bound.as_ref().is_some_and(|b| b.violated)
    }
}

/// Least-squares line through `points`: `(slope, intercept, r_squared)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, mean_y - slope * mean_x, r2)
}

/// Fit over the layers whose mean energy stays above the floor.
pub fn decay_fit(curve: &Curve) -> (f64, f64, f64) {
    let floor = ENERGY_FLOOR.ln();
    let points: Vec<(f64, f64)> = curve
        .rows
        .iter()
        .take_while(|r| r.mean_ln_eh > floor)
        .map(|r| (r.layer as f64, r.mean_ln_eh))
        .collect();
    linear_fit(&points)
}

fn long_csv(key: &str, curves: &[Curve]) -> String {
    let mut out = format!("{key},layer,mean_ln_Eh,stderr_ln_Eh,trials\n");
    for curve in curves {
        for row in &curve.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                curve.label, row.layer, row.mean_ln_eh, row.stderr_ln_eh, row.trials
            );
        }
    }
    out
}

fn curves_svg(title: &str, curves: &[Curve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: c.label.clone(),
            points: c
                .rows
                .iter()
                .map(|r| (r.layer as f64, r.mean_ln_eh))
                .collect(),
        })
        .collect();
    line_chart(title, "layer k", "mean ln E_h", &series)
}

fn merge_bounds(name: &str, parts: Vec<(String, BoundCheckReport)>) -> BoundCheckReport {
    let tagged = parts
        .into_iter()
        .map(|(label, mut report)| {
            for record in &mut report.records {
                record.params.insert("filter".into(), json!(label));
            }
            report
        })
        .collect();
    BoundCheckReport::merge(name, tagged)
}

/// Plain network under each classical filter, `trials` independent draws.
pub fn run_decay(
    config: &ExperimentConfig,
    out: &mut OutputDir,
    svg: bool,
) -> Result<CurveOutcome, CliError> {
    let fixed = load_fixed_graph(config)?;
    let filters = config.gcn.filters.clone();
    let runs: Vec<Vec<FilterRun>> = (0..config.trials())
        .into_par_iter()
        .map(|trial| {
            let inputs = trial_inputs(config, fixed.as_ref(), trial)?;
            filters
                .iter()
                .map(|&choice| {
                    run_plain(
                        config,
                        &inputs,
                        &build_classical(&inputs.graph, choice, config.gcn.alpha)?,
                    )
                })
                .collect()
        })
        .collect::<Result<_, CliError>>()?;

    let mut curves = Vec::new();
    let mut bounds = Vec::new();
    for (i, choice) in filters.iter().enumerate() {
        let label = choice.name().to_string();
        let energies: Vec<Vec<f64>> = runs.iter().map(|r| r[i].energies.clone()).collect();
        let rows = aggregate_ln_eh(&energies);
        out.csv(
            &format!("decay_{label}.csv"),
            config,
            &aggregate_to_csv(&rows),
        )?;
        for (trial, run) in runs.iter().enumerate() {
            out.csv(
                &format!("traces/decay_{label}_trial{trial:04}.csv"),
                config,
                &run[i].trace_csv,
            )?;
        }
        for run in &runs {
            if let Some(b) = &run[i].bound {
                bounds.push((label.clone(), b.clone()));
            }
        }
        curves.push(Curve { label, rows });
    }
    out.csv("decay_long.csv", config, &long_csv("filter", &curves))?;
    if svg {
        out.raw(
            "decay.svg",
            &curves_svg("High-frequency energy by filter", &curves),
        )?;
    }
    let bound = finish_bound(out, "decay_bound", bounds)?;
    Ok(CurveOutcome { curves, bound })
}

fn finish_bound(
    out: &mut OutputDir,
    name: &str,
    parts: Vec<(String, BoundCheckReport)>,
) -> Result<Option<BoundCheckReport>, CliError> {
    if parts.is_empty() {
        return Ok(None);
    }
    let mut report = merge_bounds(name, parts);
    report.retain_worst(500);
    out.report(&report)?;
    Ok(Some(report))
}

/// Surgery filters over the renormalized filter's eigenbasis; every `a`
/// sees the same graph, features and weights within a trial.
pub fn run_surgery(
    config: &ExperimentConfig,
    out: &mut OutputDir,
    svg: bool,
) -> Result<CurveOutcome, CliError> {
    let fixed = load_fixed_graph(config)?;
    let values = config.gcn.surgery.clone();
    let runs: Vec<Vec<FilterRun>> = (0..config.trials())
        .into_par_iter()
        .map(|trial| {
            let inputs = trial_inputs(config, fixed.as_ref(), trial)?;
            let base = build_filter_gcn(&inputs.graph)?;
            values
                .iter()
                .map(|&a| run_plain(config, &inputs, &build_filter_surgery(&base, a)?))
                .collect()
        })
        .collect::<Result<_, CliError>>()?;

    let mut curves = Vec::new();
    let mut bounds = Vec::new();
    for (j, &a) in values.iter().enumerate() {
        let label = format!("{a}");
        let energies: Vec<Vec<f64>> = runs.iter().map(|r| r[j].energies.clone()).collect();
        let rows = aggregate_ln_eh(&energies);
        out.csv(
            &format!("surgery_h{}.csv", j + 1),
            config,
            &aggregate_to_csv(&rows),
        )?;
        for (trial, run) in runs.iter().enumerate() {
            out.csv(
                &format!("traces/surgery_h{}_trial{trial:04}.csv", j + 1),
                config,
                &run[j].trace_csv,
            )?;
        }
        for run in &runs {
            if let Some(b) = &run[j].bound {
                bounds.push((format!("a={a}"), b.clone()));
            }
        }
        curves.push(Curve { label, rows });
    }
    out.csv("surgery_long.csv", config, &long_csv("a", &curves))?;
    if svg {
        out.raw(
            "surgery.svg",
            &curves_svg("High-frequency energy after spectral surgery", &curves),
        )?;
    }
    let bound = finish_bound(out, "surgery_bound", bounds)?;
    Ok(CurveOutcome { curves, bound })
}

/// One row of the skip-connection table.
#[derive(Debug, Clone)]
pub struct SkipRow {
    pub variant: Variant,
    pub depth: usize,
    pub median_ln_eh: f64,
    pub mean_ln_eh: f64,
    pub min_ln_eh: f64,
    pub max_ln_eh: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct SkipOutcome {
    pub rows: Vec<SkipRow>,
    /// Mean direction energies `E_i` of the normalized deepest output, per variant.
    pub histograms: Vec<(Variant, Vec<f64>)>,
}

impl SkipOutcome {
    pub fn row(&self, variant: Variant, depth: usize) -> Option<&SkipRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.depth == depth)
    }

    pub fn histogram(&self, variant: Variant) -> Option<&[f64]> {
        self.histograms
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, h)| h.as_slice())
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

struct SkipTrial {
    /// `[variant][depth index]` of `ln E_h` for the normalized output.
    ln_eh: Vec<Vec<f64>>,
    /// `[variant]` direction energies at the deepest layer.
    directions: Vec<Vec<f64>>,
}

/// Skip-connection variants with the renormalized filter; the table depths
/// share one trajectory per variant and trial.
pub fn run_skip(
    config: &ExperimentConfig,
    out: &mut OutputDir,
    svg: bool,
) -> Result<SkipOutcome, CliError> {
    let fixed = load_fixed_graph(config)?;
    let variants = config.gcn.variants.clone();
    let deepest = config.gcn.depth;
    let mut depths = config.gcn.table_depths.clone();
    if !depths.contains(&deepest) {
        depths.push(deepest);
    }
    let trials: Vec<SkipTrial> = (0..config.trials())
        .into_par_iter()
        .map(|trial| {
            let inputs = trial_inputs(config, fixed.as_ref(), trial)?;
            let filter = build_filter_gcn(&inputs.graph)?;
            let mut ln_eh = Vec::new();
            let mut directions = Vec::new();
            for &variant in &variants {
                let mut gcn = plain_config(config, inputs.features.ncols(), inputs.weight_seed);
                gcn.variant = variant;
                gcn.relu_final = false;
                let finals = forward_depths(&gcn, &filter, &inputs.features, &depths)?;
                let mut row = Vec::new();
                for (k, output) in finals {
                    let normalized = normalize_frobenius(&output)?;
                    row.push(floored_ln(filter.high_freq_energy(&normalized)?));
                    if k == deepest {
                        directions.push(filter.direction_energies(&normalized)?);
                    }
                }
                ln_eh.push(row);
            }
            Ok(SkipTrial { ln_eh, directions })
        })
        .collect::<Result<_, CliError>>()?;

    let mut rows = Vec::new();
    let mut per_trial = String::from("variant,trial,K,ln_Eh\n");
    let mut table = String::from("variant,K,median_ln_Eh,mean_ln_Eh,min_ln_Eh,max_ln_Eh,trials\n");
    for (v, &variant) in variants.iter().enumerate() {
        for (d, &depth) in depths.iter().enumerate() {
            if !config.gcn.table_depths.contains(&depth) {
                continue;
            }
            let values: Vec<f64> = trials.iter().map(|t| t.ln_eh[v][d]).collect();
            for (trial, value) in values.iter().enumerate() {
                let _ = writeln!(per_trial, "{},{trial},{depth},{value}", variant.name());
            }
            let row = SkipRow {
                variant,
                depth,
                median_ln_eh: median(&values),
                mean_ln_eh: values.iter().sum::<f64>() / values.len() as f64,
                min_ln_eh: values.iter().copied().fold(f64::INFINITY, f64::min),
                max_ln_eh: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                trials: values.len(),
            };
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                variant.name(),
                depth,
                row.median_ln_eh,
                row.mean_ln_eh,
                row.min_ln_eh,
                row.max_ln_eh,
                row.trials
            );
            rows.push(row);
        }
    }

    let mut histograms = Vec::new();
    let mut hist_csv = String::from("variant,direction,mean_energy\n");
    for (v, &variant) in variants.iter().enumerate() {
        let n = trials[0].directions[v].len();
        let mean: Vec<f64> = (0..n)
            .map(|i| trials.iter().map(|t| t.directions[v][i]).sum::<f64>() / trials.len() as f64)
            .collect();
        for (i, e) in mean.iter().enumerate() {
            let _ = writeln!(hist_csv, "{},{},{e}", variant.name(), i + 1);
        }
        if svg {
            out.raw(
                &format!("skip_histogram_{}.svg", variant.name()),
                &bar_chart(
                    &format!("{} direction energies at K = {deepest}", variant.name()),
                    "eigen-direction i",
                    "mean E_i",
                    &mean,
                ),
            )?;
        }
        histograms.push((variant, mean));
    }
    out.csv("skip_table.csv", config, &table)?;
    out.csv("skip_trials.csv", config, &per_trial)?;
    out.csv("skip_histogram.csv", config, &hist_csv)?;
    if svg {
        let series: Vec<Series> = variants
            .iter()
            .map(|&variant| Series {
                label: variant.name().to_string(),
                points: rows
                    .iter()
                    .filter(|r| r.variant == variant)
                    .map(|r| (r.depth as f64, r.median_ln_eh))
                    .collect(),
            })
            .collect();
        out.raw(
            "skip_table.svg",
            &line_chart(
                "Median ln E_h of normalized output",
                "depth K",
                "ln E_h",
                &series,
            ),
        )?;
    }
    Ok(SkipOutcome { rows, histograms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_and_median() {
        let (slope, intercept, r2) = linear_fit(&[(0.0, 1.0), (1.0, -1.0), (2.0, -3.0)]);
        assert!(
            (slope + 2.0).abs() < 1e-12
                && (intercept - 1.0).abs() < 1e-12
                && (r2 - 1.0).abs() < 1e-12
        );
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
