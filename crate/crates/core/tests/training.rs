use cosa::adapter::{AdaptedLinear, Adapter, CosaAdapter, LoraAdapter};
use cosa::randgen::{derive_seed, gaussian_matrix, RngStream};
use cosa::train::*;

#[test]
fn default_inspan_recovers_core() {
    let trace = run_toy(&ToyTaskSpec::default_inspan()).unwrap();
    assert_eq!(trace.losses.len(), 5000);
    assert!(trace.core_rel_error.unwrap() <= 1e-3, "{:?}", trace.core_rel_error);
    assert!(trace.losses.iter().all(|l| l.is_finite()));
    let windows = window_means(&trace.losses, 100);
    assert!(windows.windows(2).all(|w| w[1] <= w[0]), "{windows:?}");
}

#[test]
fn offspan_with_full_orthonormal_dictionary_fits() {
    let task = ToyTaskSpec {
        kind: ToyTaskKind::OffspanRegression,
        m: 12,
        n: 10,
        a: 12,
        b: 10,
        orthonormalize: true,
        steps: 5000,
        ..ToyTaskSpec::default_inspan()
    };
    let trace = run_toy(&task).unwrap();
    assert!(trace.core_rel_error.is_none());
    assert!(trace.delta_rel_error <= 1e-3, "{}", trace.delta_rel_error);
}

#[test]
fn offspan_residual_is_reported_not_zero() {
    let task = ToyTaskSpec {
        kind: ToyTaskKind::OffspanRegression,
        m: 16,
        n: 12,
        a: 4,
        b: 3,
        steps: 1500,
        ..ToyTaskSpec::default_inspan()
    };
    let trace = run_toy(&task).unwrap();
    assert!(trace.final_loss < trace.initial_loss);
    assert!(trace.delta_rel_error > 0.1);
}

#[test]
fn larger_cores_never_lose_much() {
    for data_seed in [1u64, 2, 3] {
        for kind in [ToyTaskKind::InspanRecovery, ToyTaskKind::OffspanRegression] {
            let base = ToyTaskSpec {
                kind,
                m: 24,
                n: 16,
                data_seed,
                steps: 3000,
                ..ToyTaskSpec::default_inspan()
            };
            let rows = sweep_ab(&base, &[4, 8], &[2, 4]).unwrap();
            let loss = |a, b| rows.iter().find(|r| r.a == a && r.b == b).unwrap().final_loss;
            for (small, big) in [((4, 2), (8, 2)), ((4, 2), (4, 4)), ((4, 4), (8, 4)), ((8, 2), (8, 4))] {
                let (ls, lb) = (loss(small.0, small.1), loss(big.0, big.1));
                assert!(lb <= 1.1 * ls + 1e-12, "{kind:?} seed {data_seed}: {small:?} {ls} vs {big:?} {lb}");
            }
        }
    }
}

fn fixture_dims(rng: &mut RngStream) -> (usize, usize, usize, usize, usize) {
    let a = 1 + rng.next_below(8) as usize;
    let b = 1 + rng.next_below(8) as usize;
    let m = a + rng.next_below(4) as usize;
    let n = b + rng.next_below(4) as usize;
    let batch = [1, 3][rng.next_below(2) as usize];
    (m, n, a, b, batch)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = RngStream::new(404);
    for t in 0..24u64 {
        let (m, n, a, b, batch) = fixture_dims(&mut rng);
        let seed = derive_seed(404, t);
        let mut cosa = CosaAdapter::new(seed, m, n, a, b, 0.5 + t as f64 / 10.0).unwrap();
        cosa.set_core(gaussian_matrix(seed ^ 1, a, b)).unwrap();
        let layer = AdaptedLinear::new(gaussian_matrix(seed ^ 2, m, n), Adapter::Cosa(cosa)).unwrap();
        let x = gaussian_matrix(seed ^ 3, n, batch);
        let target = gaussian_matrix(seed ^ 4, m, batch);
        let err = grad_check(&layer, &x, &target, 1e-5).unwrap();
        assert!(err <= 1e-6, "cosa fixture {t}: {err}");

        let r = a.min(b);
        let mut lora = LoraAdapter::new(seed, m, n, r, 1.5).unwrap();
        lora.set_factors(gaussian_matrix(seed ^ 5, r, n), gaussian_matrix(seed ^ 6, m, r)).unwrap();
        let layer = AdaptedLinear::new(gaussian_matrix(seed ^ 2, m, n), Adapter::Lora(lora)).unwrap();
        let err = grad_check(&layer, &x, &target, 1e-5).unwrap();
        assert!(err <= 1e-6, "lora fixture {t}: {err}");
    }
}

#[test]
fn fresh_adapters_are_transparent() {
    let mut rng = RngStream::new(7);
    for t in 0..100u64 {
        let (m, n, a, b, batch) = fixture_dims(&mut rng);
        let w0 = gaussian_matrix(derive_seed(7, t), m, n);
        let x = gaussian_matrix(derive_seed(8, t), n, batch);
        let expected = w0.matmul(&x).unwrap();
        let cosa = CosaAdapter::new(t, m, n, a, b, 2.0).unwrap();
        let lora = LoraAdapter::new(t, m, n, a.min(b), 2.0).unwrap();
        for adapter in [Adapter::Cosa(cosa), Adapter::Lora(lora)] {
            let layer = AdaptedLinear::new(w0.clone(), adapter).unwrap();
            assert_eq!(layer.forward(&x).unwrap().data(), expected.data());
        }
    }
}
