use ::dyca::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

/// A few random sinusoids in `n` channels plus a little noise.
fn signal_strategy() -> impl Strategy<Value = Signal> {
    (3usize..=6, 400usize..800, any::<u64>()).prop_map(|(n, t, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let fs = 100.0;
        let mut q = Array2::<f64>::zeros((n, t));
        for _ in 0..n {
            let f: f64 = rng.random_range(0.5..10.0);
            let w: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..t {
                let s = (std::f64::consts::TAU * f * i as f64 / fs).sin();
                for c in 0..n {
                    q[[c, i]] += w[c] * s + 0.02 * rng.random_range(-1.0..1.0);
                }
            }
        }
        Signal::new(q, fs).unwrap()
    })
}

fn max_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigenvalues_lie_in_unit_interval(q in signal_strategy()) {
        let s = dyca_spectrum(&q, &DycaOptions::default()).unwrap();
        prop_assert!(s.eigenvalues.iter().all(|&l| (-1e-6..=1.0 + 1e-6).contains(&l)), "{:?}", s.eigenvalues);
    }

    #[test]
    fn eigenvalues_ignore_scaling(q in signal_strategy(), exp in -4.0f64..4.0, negate in any::<bool>()) {
        let c = 10f64.powf(exp) * if negate { -1.0 } else { 1.0 };
        let base = dyca_spectrum(&q, &DycaOptions::default()).unwrap().eigenvalues;
        let scaled = Signal::new(q.data().mapv(|x| x * c), q.sample_rate_hz()).unwrap();
        let e = dyca_spectrum(&scaled, &DycaOptions::default()).unwrap().eigenvalues;
        prop_assert!(max_diff(&base, &e) <= 1e-10);
    }

    #[test]
    fn eigenvalues_ignore_invertible_mixing(q in signal_strategy(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = q.n_channels();
        let m = Array2::from_shape_fn((n, n), |(i, j)| rng.random_range(-1.0..1.0) + if i == j { 3.0 } else { 0.0 });
        let base = dyca_spectrum(&q, &DycaOptions::default()).unwrap();
        let mixed = Signal::new(m.dot(&q.data()), q.sample_rate_hz()).unwrap();
        let s = dyca_spectrum(&mixed, &DycaOptions::default()).unwrap();
        prop_assert!(max_diff(&base.eigenvalues, &s.eigenvalues) <= 1e-6);
    }

    #[test]
    fn min_cost_is_one_minus_eigenvalue(q in signal_strategy()) {
        let s = dyca_spectrum(&q, &DycaOptions::default()).unwrap();
        for (j, &l) in s.eigenvalues.iter().enumerate() {
            let (d, _) = min_cost(s.u_vectors.column(j), &q).unwrap();
            prop_assert!((d - (1.0 - l)).abs() <= 1e-8, "pair {}: {} vs {}", j, d, 1.0 - l);
        }
    }

    #[test]
    fn basis_is_orthonormal(q in signal_strategy()) {
        let model = dyca_fit(&q, &DycaOptions::default()).unwrap();
        let g = model.basis.t().dot(&model.basis);
        let err = (&g - &Array2::<f64>::eye(g.nrows())).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        prop_assert!(err <= 1e-10);
        prop_assert!(model.basis.ncols() <= 2 * model.m);
    }

    #[test]
    fn labels_follow_containment(start in 0.0f64..30.0, len in 0.5f64..15.0) {
        let cfg = WindowConfig::default();
        let fs = 256.0;
        let windows = ::dyca::signal::windows_for_length(60 * 256, fs, &cfg).unwrap();
        let event = Event::seizure(start, start + len);
        let labels = label_windows(&windows, std::slice::from_ref(&event), fs);
        for (w, l) in windows.iter().zip(labels) {
            let inside = w.start_seconds(fs) >= start - 1e-9 && w.end_seconds(fs) <= start + len + 1e-9;
            prop_assert_eq!(l, inside);
        }
    }
}
