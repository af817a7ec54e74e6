use graph_approx::gcn::{
    build_filter_gcn, build_filter_rw, build_filter_sym, forward, GcnConfig, Variant,
};
use graph_approx::smoothness::{apply_half_power, k_functional, modulus};
use graph_approx::synth::{sample_connected_sbm, sample_sbm, SbmParams, SeededRng};
use graph_approx::{Graph, SpectralDecomposition};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn laplacian_decomposition(g: &Graph) -> SpectralDecomposition {
    SpectralDecomposition::of_laplacian(&g.combinatorial_laplacian()).unwrap()
}

fn connected_sbm(n: usize, seed: u64) -> Graph {
    sample_connected_sbm(&SbmParams::balanced(n, 0.6, 0.2, seed), 200)
        .unwrap()
        .0
}

#[test]
fn parseval_and_reconstruction() {
    for seed in 0..10 {
        let g = connected_sbm(12 + seed as usize, seed);
        let d = laplacian_decomposition(&g);
        let f = SeededRng::new(seed).normal_vector(g.num_nodes());
        let spectrum = d.gft(&f).unwrap();
        assert!((spectrum.norm() - f.norm()).abs() < 1e-12 * f.norm());
        assert!((d.igft(&spectrum).unwrap() - &f).amax() < 1e-12);
        assert!((d.reconstruct() - g.combinatorial_laplacian()).amax() < 1e-10);
    }
}

#[test]
fn connectivity_matches_second_eigenvalue() {
    let mut disconnected_seen = 0;
    for seed in 0..40 {
        let g = sample_sbm(&SbmParams::balanced(10, 0.3, 0.05, seed)).unwrap();
        let d = laplacian_decomposition(&g);
        let connected = d.eigenvalue(2) > 1e-9;
        assert_eq!(connected, g.is_connected(), "seed {seed}");
        disconnected_seen += usize::from(!connected);
    }
    assert!(
        disconnected_seen > 0,
        "sweep should include disconnected draws"
    );
}

#[test]
fn best_approximation_matches_least_squares() {
    let g = connected_sbm(15, 3);
    let d = laplacian_decomposition(&g);
    let f = SeededRng::new(11).normal_vector(15);
    for n in 1..=15 {
        let basis = d.eigenvectors().columns(0, n).into_owned();
        let normal = basis.transpose() * &basis;
        let coefficients = normal.cholesky().unwrap().solve(&(basis.transpose() * &f));
        let residual = (&f - &basis * coefficients).norm();
        assert!((d.best_approx_error(n, &f).unwrap() - residual).abs() < 1e-10);
    }
}

#[test]
fn modulus_properties_on_sbm_graphs() {
    let mut rng = SeededRng::new(2024);
    for instance in 0..12 {
        let g = connected_sbm(6 + instance * 3, instance as u64);
        let d = laplacian_decomposition(&g);
        let n = g.num_nodes();
        let f1 = rng.normal_vector(n);
        let f2 = rng.normal_vector(n);
        let r = (instance % 4) as u32;
        let t = 10f64.powf(-3.0 + 4.0 * rng.uniform());
        let w = |f: &DVector<f64>, r: u32, t: f64| modulus(&d, r, t, f).unwrap().value;
        let slack = |x: f64| 1e-9 * (1.0 + x.abs());

        for lambda in [0.5_f64, 2.0, 7.3] {
            let rhs = (1.0 + lambda).powi(r as i32) * w(&f1, r, t);
            assert!(w(&f1, r, lambda * t) <= rhs + slack(rhs));
        }
        let rhs = w(&f1, r, t) + w(&f2, r, t);
        assert!(w(&(&f1 + &f2), r, t) <= rhs + slack(rhs));
        for j in 1..=r {
            let rhs = 2f64.powi(j as i32) * w(&f1, r - j, t);
            assert!(w(&f1, r, t) <= rhs + slack(rhs));
            let smoothed = apply_half_power(&d, j, &f1).unwrap();
            let rhs = t.powi(j as i32) * w(&smoothed, r - j, t);
            assert!(w(&f1, r, t) <= rhs + slack(rhs));
        }
    }
}

#[test]
fn modulus_and_k_are_monotone_in_t() {
    let g = connected_sbm(10, 8);
    let d = laplacian_decomposition(&g);
    let f = SeededRng::new(5).normal_vector(10);
    for r in 0..=3 {
        let mut previous = (0.0, 0.0);
        for i in 0..25 {
            let t = 10f64.powf(-3.0 + 4.0 * i as f64 / 24.0);
            let w = modulus(&d, r, t, &f).unwrap().value;
            let k = k_functional(&d, r, t, &f).unwrap().value;
            assert!(w >= previous.0 * (1.0 - 1e-9), "omega r={r} t={t}");
            assert!(k >= previous.1 * (1.0 - 1e-9), "K r={r} t={t}");
            previous = (w, k);
        }
    }
}

#[test]
fn sbm_edge_density() {
    let (n, p, q) = (30, 0.6, 0.15);
    let (mut intra, mut inter) = (0.0, 0.0);
    let trials = 200;
    for seed in 0..trials {
        let params = SbmParams::balanced(n, p, q, seed);
        let g = sample_sbm(&params).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                let edge = g.adjacency()[(i, j)];
                if params.labels[i] == params.labels[j] {
                    intra += edge;
                } else {
                    inter += edge;
                }
            }
        }
    }
    // 15 nodes per class: 2 * C(15, 2) intra pairs and 225 inter pairs per draw.
    let intra_pairs = (trials * 210) as f64;
    let inter_pairs = (trials * 225) as f64;
    let within = |hits: f64, pairs: f64, prob: f64| {
        let se = (prob * (1.0 - prob) / pairs).sqrt();
        ((hits / pairs) - prob).abs() < 5.0 * se
    };
    assert!(within(intra, intra_pairs, p));
    assert!(within(inter, inter_pairs, q));
}

#[test]
fn filter_spectra_are_admissible() {
    for seed in 0..10 {
        let g = connected_sbm(20, 100 + seed);
        let degrees = g.degrees();
        for filter in [
            build_filter_gcn(&g).unwrap(),
            build_filter_sym(&g, 0.75).unwrap(),
            build_filter_rw(&g, 0.75).unwrap(),
        ] {
            let values = filter.decomposition().eigenvalues();
            assert!(values.iter().all(|&x| x > -1.0 - 1e-9 && x <= 1.0 + 1e-9));
            assert!(filter.mu_high() < 1.0);
            assert!(filter.low_frequency().iter().all(|&x| x >= 0.0));
        }
        // Predicted top eigenvector of the renormalized filter: (D + I)^{1/2} 1.
        let predicted = degrees.as_vector().map(|d| (d + 1.0).sqrt()).normalize();
        let gcn = build_filter_gcn(&g).unwrap();
        assert!((gcn.low_frequency() - predicted).norm() < 1e-8);
    }
}

fn small_graph() -> impl Strategy<Value = (Graph, u64)> {
    (3usize..12, any::<u64>()).prop_map(|(n, seed)| {
        let g = sample_connected_sbm(&SbmParams::balanced(n, 0.9, 0.5, seed), 500)
            .map(|(g, _)| g)
            .unwrap_or_else(|_| Graph::complete(n).unwrap());
        (g, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvectors_orthonormal((g, _) in small_graph()) {
        let d = laplacian_decomposition(&g);
        let v = d.eigenvectors();
        let gram = v.transpose() * v;
        prop_assert!((gram - DMatrix::identity(g.num_nodes(), g.num_nodes())).amax() < 1e-10);
        prop_assert_eq!(d.eigenvalue(1), 0.0);
    }

    #[test]
    fn energies_partition_the_norm((g, seed) in small_graph(), channels in 1usize..4) {
        let filter = build_filter_sym(&g, 0.75).unwrap();
        let signal = SeededRng::new(seed).normal_matrix(g.num_nodes(), channels);
        let energies = filter.direction_energies(&signal).unwrap();
        let total: f64 = energies.iter().sum();
        prop_assert!((total - signal.norm_squared()).abs() < 1e-10 * (1.0 + total));
        let high = filter.high_freq_energy(&signal).unwrap();
        prop_assert!((high - (total - energies[0])).abs() < 1e-9 * (1.0 + total));
    }

    #[test]
    fn unit_weight_decay((g, seed) in small_graph()) {
        let filter = build_filter_gcn(&g).unwrap();
        let n = g.num_nodes();
        let input = SeededRng::new(seed ^ 1).normal_matrix(n, n);
        let config = GcnConfig::uniform(Variant::Plain, 8, n, 1.0, seed);
        let trace = forward(&config, &filter, &input).unwrap();
        let initial = input.norm_squared();
        for (k, eh) in trace.eh_per_layer.iter().enumerate() {
            let bound = filter.mu_high().powi(2 * k as i32) * initial;
            prop_assert!(*eh <= bound + 1e-9 * (1.0 + bound));
        }
    }
}
