use nalgebra::DMatrix;
use proptest::prelude::*;

use seerl::env::Action;
use seerl::learner::ActionDist;
use seerl::selection::{
    build_b_matrix, kl_between, project_onto_simplex, select_top_m, solve_simplex_qp, weighted_error,
};

fn psd_from(factor: &[f64], n: usize) -> DMatrix<f64> {
    let rows = factor.len() / n;
    let a = DMatrix::from_row_slice(rows, n, factor);
    let b = a.transpose() * a;
    (&b + b.transpose()) * 0.5
}

fn quad(q: &DMatrix<f64>, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            s += w[i] * q[(i, j)] * w[j];
        }
    }
    s
}

fn psd3() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=3).prop_flat_map(|rank| prop::collection::vec(-3.0f64..3.0, rank * 3).prop_map(|f| psd_from(&f, 3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solution_lies_on_the_simplex(b in psd3()) {
        let sol = solve_simplex_qp(&b, 1e-8).unwrap();
        prop_assert!((sol.w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(sol.w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn no_grid_point_beats_the_solver(b in psd3()) {
        let q = &b + DMatrix::identity(3, 3) * 1e-8;
        let sol = solve_simplex_qp(&b, 1e-8).unwrap();
        let got = quad(&q, &sol.w);
        for i in 0..=50 {
            for j in 0..=(50 - i) {
                let w = [i as f64 / 50.0, j as f64 / 50.0, (50 - i - j) as f64 / 50.0];
                prop_assert!(got <= quad(&q, &w) + 1e-9);
            }
        }
    }

    #[test]
    fn scaling_the_matrix_keeps_the_minimiser(b in psd3(), c in 0.1f64..10.0) {
        let a = solve_simplex_qp(&b, 0.0).unwrap();
        let s = solve_simplex_qp(&(&b * c), 0.0).unwrap();
        // compare objective values: flat directions make the argmin non-unique
        let (qa, qs) = (quad(&b, &a.w), quad(&b, &s.w));
        prop_assert!((qa - qs).abs() <= 1e-7 * (1.0 + qa.abs()));
    }

    #[test]
    fn built_matrix_is_symmetric_psd(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 3), 1..20),
        raw in prop::collection::vec(0.01f64..1.0, 20),
        probe in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let total: f64 = raw[..rows.len()].iter().sum();
        let weights: Vec<f64> = raw[..rows.len()].iter().map(|p| p / total).collect();
        let m = build_b_matrix(&weights, &rows);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        prop_assert!(quad(&m, &probe) >= -1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let p = project_onto_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let again = project_onto_simplex(&p);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn top_m_picks_largest_weights(w in prop::collection::vec(0.0f64..1.0, 1..9), pick in 1usize..9) {
        let m = pick.min(w.len());
        let chosen = select_top_m(&w, m);
        prop_assert_eq!(chosen.len(), m);
        prop_assert!(chosen.windows(2).all(|p| p[0] < p[1]));
        let floor = chosen.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
        for i in (0..w.len()).filter(|i| !chosen.contains(i)) {
            prop_assert!(w[i] <= floor);
        }
    }

    #[test]
    fn error_indicator_is_monotone_in_threshold(
        err in 0.0f64..2.0, t1 in 0.0f64..2.0, t2 in 0.0f64..2.0,
        a in prop::collection::vec(-1.0f64..1.0, 2), e in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let (pa, ea) = (Action::Continuous(a), Action::Continuous(e));
        prop_assert!(weighted_error(err, &pa, &ea, lo, 0.1) >= weighted_error(err, &pa, &ea, hi, 0.1));
        // an action that agrees with the ensemble counts once the loss reaches the threshold
        prop_assert_eq!(weighted_error(err, &pa, &pa, lo, 0.1), u8::from(err >= lo));
        let far = Action::Continuous(vec![5.0, 5.0]);
        prop_assert_eq!(weighted_error(err, &pa, &far, lo, 0.1), 0);
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_self(
        logits_p in prop::collection::vec(-4.0f64..4.0, 4),
        logits_q in prop::collection::vec(-4.0f64..4.0, 4),
    ) {
        let p = ActionDist::categorical_from_logits(&logits_p);
        let q = ActionDist::categorical_from_logits(&logits_q);
        prop_assert!(kl_between(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl_between(&p, &p).unwrap().abs() <= 1e-12);
    }
}

/// `KL(p || q)` for one-dimensional Gaussians by trapezoidal integration of
/// `p(x) (log p(x) - log q(x))`.
fn kl_by_quadrature(mp: f64, sp: f64, mq: f64, sq: f64) -> f64 {
    let log_pdf = |x: f64, m: f64, s: f64| -(x - m).powi(2) / (2.0 * s * s) - (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let (lo, hi) = (mp - 14.0 * sp, mp + 14.0 * sp);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let lp = log_pdf(x, mp, sp);
        lp.exp() * (lp - log_pdf(x, mq, sq))
    };
    let mut sum = 0.5 * (f(lo) + f(hi));
    for k in 1..n {
        sum += f(lo + k as f64 * h);
    }
    sum * h
}

#[test]
fn gaussian_kl_matches_quadrature() {
    let cases = [(0.0, 1.0, 0.0, 1.0), (0.0, 1.0, 1.0, 1.0), (0.3, 0.5, -0.2, 1.4), (1.0, 2.0, 0.0, 0.7)];
    for (mp, sp, mq, sq) in cases {
        let got = kl_between(&ActionDist::gaussian(vec![mp], &[sp]), &ActionDist::gaussian(vec![mq], &[sq])).unwrap();
        let want = kl_by_quadrature(mp, sp, mq, sq);
        assert!((got - want).abs() <= 1e-6, "({mp},{sp}) vs ({mq},{sq}): {got} vs {want}");
    }
    // independent dimensions add
    let p = ActionDist::gaussian(vec![0.3, 1.0], &[0.5, 2.0]);
    let q = ActionDist::gaussian(vec![-0.2, 0.0], &[1.4, 0.7]);
    let want = kl_by_quadrature(0.3, 0.5, -0.2, 1.4) + kl_by_quadrature(1.0, 2.0, 0.0, 0.7);
    assert!((kl_between(&p, &q).unwrap() - want).abs() <= 1e-6);
}

#[test]
fn categorical_kl_matches_direct_sum() {
    let p = [0.5f64, 0.25, 0.125, 0.125];
    let q = [0.25, 0.25, 0.25, 0.25];
    let want: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
    let got = kl_between(&ActionDist::categorical(p.to_vec()), &ActionDist::categorical(q.to_vec())).unwrap();
    assert!((got - want).abs() <= 1e-12);
}
