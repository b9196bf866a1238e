use bernstein_rl::regression::{
    bernstein_radius, faury_radius, hoeffding_radius, weighted_oful_radius, ConfidenceSpec, WlsState,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Stream {
    dim: usize,
    lambda: f64,
    rows: Vec<(Vec<f64>, f64, f64)>,
}

fn stream() -> impl Strategy<Value = Stream> {
    (1usize..10, 0.05f64..5.0).prop_flat_map(|(dim, lambda)| {
        let row = (prop::collection::vec(-1.0f64..1.0, dim), -3.0f64..3.0, 0.05f64..3.0);
        prop::collection::vec(row, 1..150).prop_map(move |rows| Stream { dim, lambda, rows })
    })
}

fn absorb(s: &Stream) -> WlsState {
    let mut w = WlsState::new(s.dim, s.lambda).unwrap();
    for (x, y, sb) in &s.rows {
        w.update(&DVector::from_column_slice(x), *y, *sb).unwrap();
    }
    w
}

fn direct_gram(s: &Stream) -> DMatrix<f64> {
    let mut g = DMatrix::identity(s.dim, s.dim) * s.lambda;
    for (x, _, sb) in &s.rows {
        for i in 0..s.dim {
            for j in 0..s.dim {
                g[(i, j)] += x[i] * x[j] / (sb * sb);
            }
        }
    }
    g
}

fn spec(dim: usize) -> ConfidenceSpec {
    ConfidenceSpec {
        dim,
        noise_bound: 1.0,
        sigma: 0.3,
        context_bound: 1.0,
        lambda: 1.0,
        delta: 0.05,
        param_bound: 1.0,
        sigma_bar_min: 0.5,
    }
}

proptest! {
    #[test]
    fn gram_matches_direct_sum(s in stream()) {
        let w = absorb(&s);
        let g = direct_gram(&s);
        prop_assert!((w.gram() - &g).norm() <= 1e-8 * g.norm());
        let inv_err = (w.gram_inv() * &g - DMatrix::identity(s.dim, s.dim)).norm();
        prop_assert!(inv_err <= 1e-8, "inverse residual {}", inv_err);
    }

    #[test]
    fn estimate_solves_normal_equations(s in stream()) {
        let w = absorb(&s);
        let g = direct_gram(&s);
        let mut b = DVector::zeros(s.dim);
        for (x, y, sb) in &s.rows {
            b += DVector::from_column_slice(x) * (y / (sb * sb));
        }
        let mu = w.estimate();
        prop_assert!((&g * &mu - &b).norm() <= 1e-8 * b.norm().max(1.0));
    }

    #[test]
    fn logdet_matches_cholesky(s in stream()) {
        let w = absorb(&s);
        let chol = direct_gram(&s).cholesky().unwrap();
        let want: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        prop_assert!((w.logdet() - want).abs() <= 1e-8 * want.abs().max(1.0));
    }

    #[test]
    fn potential_within_bound(s in stream()) {
        let w = absorb(&s);
        prop_assert!(w.potential() <= w.potential_bound());
        prop_assert!(w.potential() <= s.rows.len() as f64);
    }

    #[test]
    fn bonus_shrinks_after_update(s in stream(), probe in prop::collection::vec(-1.0f64..1.0, 1..10)) {
        let mut w = absorb(&s);
        let x = DVector::from_fn(s.dim, |i, _| probe[i % probe.len()]);
        let before = w.bonus(&x);
        w.update(&x, 0.0, 1.0).unwrap();
        prop_assert!(w.bonus(&x) <= before + 1e-12);
    }

    #[test]
    fn radii_grow_with_t(d in 1usize..64, t in 1u64..1_000_000) {
        let sp = spec(d);
        prop_assert!(bernstein_radius(&sp, t + 1) > bernstein_radius(&sp, t));
        prop_assert!(hoeffding_radius(&sp, t + 1) > hoeffding_radius(&sp, t));
        prop_assert!(weighted_oful_radius(&sp, t + 1) > weighted_oful_radius(&sp, t));
        prop_assert!(faury_radius(&sp, t + 1) > faury_radius(&sp, t));
    }
}

#[test]
fn zero_time_radii() {
    let sp = spec(4);
    assert_eq!(bernstein_radius(&sp, 0), 0.0);
    assert_eq!(weighted_oful_radius(&sp, 0), 0.0);
    assert_eq!(hoeffding_radius(&sp, 0), 1.0);
}
