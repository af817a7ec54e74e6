//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line whether or not it succeeds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::{Duration, Instant};

use graph_approx::bounds::{check_jackson, BoundCheckReport, JacksonConstants};
use graph_approx::smoothness::k_functional;
use graph_approx::{Graph, SpectralDecomposition};
use graph_approx_cli::config::{Experiment, ExperimentConfig, Scale};
use graph_approx_cli::experiments::{decay_fit, run_decay, run_skip, run_surgery};
use graph_approx_cli::output::OutputDir;
use graph_approx_cli::suites::{self, NodeRange};
use nalgebra::DVector;

const SEED: u64 = 20_241_019;
const NODES: NodeRange = NodeRange { min: 4, max: 64 };

type Check = Result<String, String>;

/// Fails with the first violated record of `report`.
fn clean(report: &BoundCheckReport) -> Check {
    if !report.applicable {
        return Err(format!(
            "{} not applicable: {:?}",
            report.name, report.notes
        ));
    }
    if report.violated {
        let first = report.violations().next();
        return Err(format!(
            "{} violated, worst margin {:?}, e.g. {first:?}",
            report.name, report.worst_margin
        ));
    }
    let margin = match report.worst_margin {
        Some(m) => format!("worst margin {m:.3e}"),
        None => "no records asserted".to_string(),
    };
    Ok(format!(
        "{}: {} instances, {margin}",
        report.name, report.instances
    ))
}
fn measured(report: &BoundCheckReport, key: &str) -> Result<f64, String> {
    report
        .measured
        .get(key)
        .copied()
        .ok_or_else(|| format!("{} has no measurement {key}", report.name))
}

fn k2() -> SpectralDecomposition {
    let g = Graph::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).expect("K2");
    SpectralDecomposition::of_laplacian(&g.combinatorial_laplacian()).expect("K2 spectrum")
}

fn unit_impulse() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 0.0])
}

fn a1() -> Check {
    let report = suites::translation_identity(10_000, SEED);
    let max = measured(&report, "max_abs_error")?;
    if max > 1e-12 {
        return Err(format!("max abs error {max:.3e} > 1e-12"));
    }
    Ok(format!(
        "max abs error {max:.3e} over {} samples",
        report.instances
    ))
}

fn a2() -> Check {
    clean(&suites::modulus_properties(200, SEED, NODES).map_err(|e| e.to_string())?)
}

fn a3() -> Check {
    let sweep = clean(
        &suites::jackson(100, SEED, NODES, &[1, 2, 3], JacksonConstants::default())
            .map_err(|e| e.to_string())?,
    )?;
    let report = check_jackson(&k2(), &unit_impulse(), 1).map_err(|e| e.to_string())?;
    let record = report
        .records
        .iter()
        .find(|r| r.params["inequality"] == "single_frequency" && r.params["n"] == 2)
        .ok_or("K2 single-frequency record missing")?;
    let expected = 0.5f64.sqrt();
    if (record.lhs - expected).abs() > 1e-9 || (record.rhs - expected).abs() > 1e-9 {
        return Err(format!(
            "K2 single-frequency lhs {} rhs {}, expected both {expected}",
            record.lhs, record.rhs
        ));
    }
    Ok(format!(
        "{sweep}; K2 single-frequency lhs = rhs = {:.12}",
        record.rhs
    ))
}

fn a4() -> Check {
    let report = suites::equivalence(100, SEED, NODES, &[0, 1, 2, 3]).map_err(|e| e.to_string())?;
    let summary = clean(&report)?;
    let (lo, hi) = (
        measured(&report, "min_ratio")?,
        measured(&report, "max_ratio")?,
    );
    Ok(format!("{summary}; ratios in [{lo:.4}, {hi:.4}]"))
}

fn a5_a6() -> (Check, Check) {
    let sweep = match suites::k_functional_sweep(100, SEED, NodeRange::new(4, 16)) {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let a5 = (|| {
        let summary = clean(&sweep.agreement)?;
        let rel = measured(&sweep.agreement, "max_relative_difference")?;
        let closed = k_functional(&k2(), 1, 1.0, &unit_impulse())
            .map_err(|e| e.to_string())?
            .value;
        if (closed - 0.5).abs() > 1e-9 {
            return Err(format!("K2 K-functional {closed}, expected 0.5"));
        }
        Ok(format!(
            "{summary}; max relative gap {rel:.2e}; K2 value {closed:.12}"
        ))
    })();
    let a6 = (|| {
        let single = clean(&sweep.k_omega)?;
        let multi = clean(&sweep.k_omega_multichannel)?;
        let ratio = measured(&sweep.k_omega, "max_k_over_omega")?;
        if !ratio.is_finite() {
            return Err(format!("max K/omega ratio is {ratio}"));
        }
        Ok(format!("{single}; {multi}; max K/omega {ratio:.4}"))
    })();
    (a5, a6)
}

fn a7() -> Check {
    let report = suites::relu_projection(10_000, SEED, NODES).map_err(|e| e.to_string())?;
    let worst = report.worst_margin.ok_or("no records")?;
    if worst < -1e-12 {
        return Err(format!("worst margin {worst:.3e} below -1e-12"));
    }
    clean(&report)
}

fn a8() -> Check {
    let reports = suites::decay_bound(20, SEED, 64, 30).map_err(|e| e.to_string())?;
    let summary = format!(
        "{}; {}",
        clean(&reports.bound)?,
        clean(&reports.convergence)?
    );
    // At depth 30 the convergence threshold is seldom met, so deeper runs
    // make sure the clause is exercised at all.
    let deep = suites::decay_bound(5, SEED ^ 1, 64, 80).map_err(|e| e.to_string())?;
    let asserted = deep.convergence.records.len();
    if asserted == 0 {
        return Err("convergence clause never reached even at depth 80".into());
    }
    Ok(format!(
        "{summary}; depth 80: {}",
        clean(&deep.convergence)?
    ))
}

fn a9() -> Check {
    clean(
        &suites::lower_bound(20, SEED, 16, 4, 20, &[0, 1, 2], &[0.1, 1.0, 5.0])
            .map_err(|e| e.to_string())?,
    )
}

fn desk(experiment: Experiment) -> ExperimentConfig {
    let mut config = ExperimentConfig::for_experiment(experiment);
    config.scale = Scale::Desk;
    config.seed = SEED;
    config
}

fn scratch() -> (tempfile::TempDir, OutputDir) {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = OutputDir::create(dir.path()).expect("output dir");
    (dir, out)
}

fn a10() -> Check {
    let config = desk(Experiment::Decay);
    if (
        config.num_nodes(),
        config.trials(),
        config.gcn.weight_frobenius,
    ) != (200, 50, 10.0)
    {
        return Err("desk preset differs from N=200, 50 trials, |W|=10".into());
    }
    let (_dir, mut out) = scratch();
    let outcome = run_decay(&config, &mut out, false).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for curve in &outcome.curves {
        let means = curve.means();
        if let Some(k) = means.windows(2).position(|w| !(w[1] < w[0])) {
            return Err(format!(
                "{}: mean ln E_h not decreasing at layer {}",
                curve.label,
                k + 1
            ));
        }
        let (slope, _, r2) = decay_fit(curve);
        if !(slope < 0.0 && r2 >= 0.9) {
            return Err(format!("{}: slope {slope:.4}, R^2 {r2:.4}", curve.label));
        }
        lines.push(format!("{} slope {slope:.3} R^2 {r2:.4}", curve.label));
    }
    Ok(lines.join(", "))
}

fn a11() -> Check {
    let config = desk(Experiment::Surgery);
    if config.trials() != 100 || config.gcn.surgery != [1.0, 0.75, 0.5, 0.25] {
        return Err("surgery preset differs from 100 trials and a = 1, 0.75, 0.5, 0.25".into());
    }
    let (_dir, mut out) = scratch();
    let outcome = run_surgery(&config, &mut out, false).map_err(|e| e.to_string())?;
    let means: Vec<Vec<f64>> = outcome.curves.iter().map(|c| c.means()).collect();
    for k in 3..=30 {
        for j in 1..means.len() {
            if !(means[j][k] < means[j - 1][k]) {
                return Err(format!(
                    "layer {k}: a = {} gives {:.4}, not below a = {} at {:.4}",
                    outcome.curves[j].label,
                    means[j][k],
                    outcome.curves[j - 1].label,
                    means[j - 1][k]
                ));
            }
        }
    }
    let at30: Vec<String> = outcome
        .curves
        .iter()
        .map(|c| format!("a={}: {:.2}", c.label, c.rows[30].mean_ln_eh))
        .collect();
    Ok(format!(
        "ordered at every k in 3..=30; layer 30 means {}",
        at30.join(", ")
    ))
}

fn a12() -> Check {
    use graph_approx::gcn::Variant;
    let config = desk(Experiment::Skip);
    if (
        config.num_nodes(),
        config.trials(),
        config.width(),
        config.gcn.alpha_k,
        config.gcn.beta_k,
    ) != (100, 20, 100, 0.5, 0.5)
    {
        return Err("skip preset differs from N=m=100, 20 trials, alpha=beta=0.5".into());
    }
    let (_dir, mut out) = scratch();
    let outcome = run_skip(&config, &mut out, false).map_err(|e| e.to_string())?;
    let median = |v: Variant, k: usize| {
        outcome
            .row(v, k)
            .map(|r| r.median_ln_eh)
            .ok_or_else(|| format!("missing row {} K={k}", v.name()))
    };
    let (res20, res50) = (median(Variant::ResGcn, 20)?, median(Variant::ResGcn, 50)?);
    if !(res20 <= -8.0 && res50 <= -20.0) {
        return Err(format!(
            "ResGCN medians {res20:.3} at K=20 and {res50:.3} at K=50"
        ));
    }
    for v in [Variant::Appnp, Variant::Gcnii] {
        for k in [1, 5, 10, 20, 30, 40, 50] {
            let m = median(v, k)?;
            if !(m > -0.5 && m < 0.0) {
                return Err(format!(
                    "{} median {m:.4} at K={k} outside (-0.5, 0)",
                    v.name()
                ));
            }
        }
    }
    let share = |v: Variant| {
        outcome
            .histogram(v)
            .map(|h| h[0])
            .ok_or_else(|| format!("no histogram for {}", v.name()))
    };
    let res = share(Variant::ResGcn)?;
    let (appnp, gcnii) = (share(Variant::Appnp)?, share(Variant::Gcnii)?);
    if !(res >= 0.999 && appnp <= 0.1 && gcnii <= 0.1) {
        return Err(format!(
            "direction-1 shares ResGCN {res:.5}, APPNP {appnp:.5}, GCNII {gcnii:.5}"
        ));
    }
    Ok(format!(
        "ResGCN medians {res20:.2} (K=20) {res50:.2} (K=50); direction-1 shares {res:.5} / {appnp:.4} / {gcnii:.4}"
    ))
}

fn a13() -> Check {
    let report = suites::filter_spectra(100, SEED, NODES, 0.75).map_err(|e| e.to_string())?;
    let top = measured(&report, "max_eigenvalue")?;
    let bottom = measured(&report, "min_eigenvalue")?;
    let residual = measured(&report, "max_top_residual")?;
    if !(top <= 1.0 + 1e-9 && bottom > -1.0 - 1e-9 && residual <= 1e-8) {
        return Err(format!(
            "eigenvalues in [{bottom}, {top}], top residual {residual:.3e}"
        ));
    }
    Ok(format!(
        "{} graphs, eigenvalues in [{bottom:.4}, {top:.12}], top residual {residual:.2e}",
        report.instances
    ))
}

fn a14() -> Check {
    let corrupted = JacksonConstants {
        cr_scale: 0.5,
        ..JacksonConstants::default()
    };
    let report =
        suites::jackson(50, SEED, NODES, &[1, 2, 3], corrupted).map_err(|e| e.to_string())?;
    if !report.violated {
        return Err("halving the single-frequency constant went unnoticed".into());
    }
    Ok(format!(
        "corrupted constant detected, worst margin {:.3e}",
        report.worst_margin.unwrap_or(f64::NAN)
    ))
}

struct Criterion {
    id: &'static str,
    limit: Duration,
}

fn report(c: &Criterion, elapsed: Duration, outcome: &Check) -> bool {
    let in_time = elapsed <= c.limit;
    let pass = outcome.is_ok() && in_time;
    let detail = match outcome {
        Ok(s) | Err(s) => s,
    };
    let timing = format!("{:.1}s of {}s", elapsed.as_secs_f64(), c.limit.as_secs());
    let late = if in_time { "" } else { " (over time limit)" };
    println!(
        "{:<4} {} [{timing}]{late} {detail}",
        c.id,
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let simple: Vec<(Criterion, fn() -> Check)> = vec![
        (
            Criterion {
                id: "A1",
                limit: secs(1),
            },
            a1,
        ),
        (
            Criterion {
                id: "A2",
                limit: secs(120),
            },
            a2,
        ),
        (
            Criterion {
                id: "A3",
                limit: secs(300),
            },
            a3,
        ),
        (
            Criterion {
                id: "A4",
                limit: secs(300),
            },
            a4,
        ),
    ];
    let later: Vec<(Criterion, fn() -> Check)> = vec![
        (
            Criterion {
                id: "A7",
                limit: secs(10),
            },
            a7,
        ),
        (
            Criterion {
                id: "A8",
                limit: secs(120),
            },
            a8,
        ),
        (
            Criterion {
                id: "A9",
                limit: secs(300),
            },
            a9,
        ),
        (
            Criterion {
                id: "A10",
                limit: secs(300),
            },
            a10,
        ),
        (
            Criterion {
                id: "A11",
                limit: secs(300),
            },
            a11,
        ),
        (
            Criterion {
                id: "A12",
                limit: secs(600),
            },
            a12,
        ),
        (
            Criterion {
                id: "A13",
                limit: secs(120),
            },
            a13,
        ),
        (
            Criterion {
                id: "A14",
                limit: secs(60),
            },
            a14,
        ),
    ];

    let mut all_pass = true;
    for (criterion, check) in &simple {
        let start = Instant::now();
        let outcome = check();
        all_pass &= report(criterion, start.elapsed(), &outcome);
    }
    // A5 and A6 share one instance set; the A6 limit is not separately given.
    let start = Instant::now();
    let (a5, a6) = a5_a6();
    let elapsed = start.elapsed();
    all_pass &= report(
        &Criterion {
            id: "A5",
            limit: secs(600),
        },
        elapsed,
        &a5,
    );
    all_pass &= report(
        &Criterion {
            id: "A6",
            limit: secs(600),
        },
        elapsed,
        &a6,
    );
    for (criterion, check) in &later {
        let start = Instant::now();
        let outcome = check();
        all_pass &= report(criterion, start.elapsed(), &outcome);
    }

    if all_pass {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: some criteria FAILED");
        std::process::exit(1);
    }
}
