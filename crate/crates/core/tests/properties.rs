use nalgebra::DMatrix;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::sample::subsequence;

use crossover_design::correlation::build_correlation;
use crossover_design::design::{build_design_matrix, linear_predictor, logit, mean_response};
use crossover_design::gee::{
    contrast_variance, evaluate_design, model_based_variance, weighted_information,
};
use crossover_design::linalg::symmetric_pinv;
use crossover_design::{
    AllocationDesign, ContrastTarget, DesignError, ModelForm, ModelParams, TreatmentSequence,
    WorkingCorrelation,
};

#[derive(Debug, Clone)]
struct Case {
    design: AllocationDesign,
    other_weights: Vec<f64>,
    theta: ModelParams,
    work: WorkingCorrelation,
    truth: WorkingCorrelation,
    target: ContrastTarget,
    form: ModelForm,
}

fn correlation(kind: u8, alpha: f64) -> WorkingCorrelation {
    match kind {
        0 => WorkingCorrelation::INDEPENDENT,
        1 => WorkingCorrelation::compound_symmetric(alpha),
        _ => WorkingCorrelation::ar1(alpha),
    }
}

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn cases() -> impl Strategy<Value = Case> {
    (2usize..=4)
        .prop_flat_map(|p| {
            let n = 1usize << p;
            (
                Just(p),
                subsequence((0..n).collect::<Vec<_>>(), 2..=n.min(6)),
                vec(0.05f64..1.0, 6),
                vec(0.05f64..1.0, 6),
                (
                    -1.0f64..1.0,
                    vec(-1.0f64..1.0, p),
                    -1.5f64..1.5,
                    -1.0f64..1.0,
                ),
                (0u8..3, -0.3f64..0.8, 0u8..3, -0.3f64..0.8),
                any::<bool>(),
                any::<bool>(),
            )
        })
        .prop_map(
            |(p, idx, w1, w2, (mu, beta, tau, rho), (k1, a1, k2, a2), carry, direct)| {
                let universe = TreatmentSequence::universe(p).unwrap();
                let support: Vec<_> = idx.iter().map(|&i| universe[i].clone()).collect();
                let k = support.len();
                let form = if carry {
                    ModelForm::CARRYOVER
                } else {
                    ModelForm::NO_CARRYOVER
                };
                let target = if direct || !carry {
                    ContrastTarget::Direct
                } else {
                    ContrastTarget::Carryover
                };
                Case {
                    design: AllocationDesign::new(support, normalized(&w1[..k])).unwrap(),
                    other_weights: normalized(&w2[..k]),
                    theta: ModelParams::new(mu, beta, tau, if carry { rho } else { 0.0 }).unwrap(),
                    work: correlation(k1, a1),
                    truth: correlation(k2, a2),
                    target,
                    form,
                }
            },
        )
}

fn variance(
    c: &Case,
    design: &AllocationDesign,
    theta: &ModelParams,
    truth: Option<&WorkingCorrelation>,
) -> Option<f64> {
    evaluate_design(design, theta, &c.work, truth, c.target, c.form)
        .unwrap()
        .contrast_variance
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sandwich_with_true_working_correlation_is_model_based(c in cases()) {
        let model = variance(&c, &c.design, &c.theta, None);
        let sandwich = variance(&c, &c.design, &c.theta, Some(&c.work));
        prop_assert_eq!(model.is_some(), sandwich.is_some());
        if let (Some(a), Some(b)) = (model, sandwich) {
            prop_assert!(rel_diff(a, b) <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn dual_design_at_reflected_theta_has_same_variance(c in cases()) {
        for truth in [None, Some(&c.truth)] {
            let a = variance(&c, &c.design, &c.theta, truth);
            let b = variance(&c, &c.design.dual(), &c.theta.dual(), truth);
            prop_assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!(rel_diff(a, b) <= 1e-12, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn model_based_variance_is_midpoint_convex(c in cases()) {
        let other = AllocationDesign::new(c.design.support().to_vec(), c.other_weights.clone()).unwrap();
        let mid_w: Vec<f64> = c.design.weights().iter().zip(&c.other_weights).map(|(a, b)| 0.5 * (a + b)).collect();
        let mid = AllocationDesign::new(c.design.support().to_vec(), mid_w).unwrap();
        if let (Some(a), Some(b), Some(m)) = (
            variance(&c, &c.design, &c.theta, None),
            variance(&c, &other, &c.theta, None),
            variance(&c, &mid, &c.theta, None),
        ) {
            prop_assert!(m <= 0.5 * (a + b) * (1.0 + 1e-10), "{} > mean of {} and {}", m, a, b);
        }
    }

    #[test]
    fn scaling_weights_scales_variance_inversely(c in cases(), lambda in 0.1f64..50.0) {
        let support = c.design.support();
        let m1 = weighted_information(support, c.design.weights(), &c.theta, &c.work, c.form).unwrap();
        let scaled: Vec<f64> = c.design.weights().iter().map(|w| w * lambda).collect();
        let m2 = weighted_information(support, &scaled, &c.theta, &c.work, c.form).unwrap();
        let v1 = contrast_variance(&model_based_variance(&m1).unwrap(), &m1, c.target, c.form);
        let v2 = contrast_variance(&model_based_variance(&m2).unwrap(), &m2, c.target, c.form);
        match (v1, v2) {
            (Ok(a), Ok(b)) => prop_assert!(rel_diff(a, b * lambda) <= 1e-9),
            (Err(DesignError::NotEstimable { .. }), Err(DesignError::NotEstimable { .. })) => {}
            other => prop_assert!(false, "estimability changed with scale: {:?}", other),
        }
    }

    #[test]
    fn ridge_generalized_inverse_agrees_on_estimable_targets(c in cases()) {
        let m = weighted_information(c.design.support(), c.design.weights(), &c.theta, &c.work, c.form).unwrap();
        let Ok(v) = contrast_variance(&model_based_variance(&m).unwrap(), &m, c.target, c.form) else {
            return Ok(());
        };
        let pinv = symmetric_pinv(&m).unwrap();
        let null = DMatrix::identity(m.nrows(), m.nrows()) - &pinv.projector;
        let p = c.design.periods();
        let sel = c.target.selector(c.form, p).unwrap();
        for eps in [1e-6, 1e-8] {
            let ridge = (&m + &null * eps).cholesky().expect("ridged matrix is positive definite").inverse();
            let r = (sel.transpose() * ridge * &sel)[(0, 0)];
            prop_assert!(rel_diff(v, r) <= 1e-8, "eps {}: {} vs {}", eps, v, r);
        }
    }

    #[test]
    fn dual_sequence_negates_treatment_columns(p in 2usize..=8, bits in any::<u8>(), carry in any::<bool>()) {
        let universe = TreatmentSequence::universe(p).unwrap();
        let seq = &universe[bits as usize % universe.len()];
        let form = if carry { ModelForm::CARRYOVER } else { ModelForm::NO_CARRYOVER };
        let x = build_design_matrix(seq, form).into_inner();
        let xd = build_design_matrix(&seq.dual(), form).into_inner();
        let treatment_cols = form.tau_index(p)..x.ncols();
        for j in 0..x.ncols() {
            let sign = if treatment_cols.contains(&j) { -1.0 } else { 1.0 };
            prop_assert_eq!(xd.column(j).into_owned(), x.column(j) * sign);
        }
    }

    #[test]
    fn stacked_universe_has_one_redundant_column(p in 2usize..=8, carry in any::<bool>()) {
        let form = if carry { ModelForm::CARRYOVER } else { ModelForm::NO_CARRYOVER };
        let universe = TreatmentSequence::universe(p).unwrap();
        let cols = form.columns(p);
        let mut stacked = DMatrix::zeros(universe.len() * p, cols);
        for (k, s) in universe.iter().enumerate() {
            stacked.rows_mut(k * p, p).copy_from(build_design_matrix(s, form).matrix());
        }
        let sv = stacked.svd(false, false).singular_values;
        let rank = sv.iter().filter(|s| **s > 1e-10 * sv.max()).count();
        prop_assert_eq!(rank, cols - 1);
    }

    #[test]
    fn logistic_inverts_logit(mu in 1e-6f64..(1.0 - 1e-6)) {
        let back = mean_response(&nalgebra::DVector::from_element(1, logit(mu)))[0];
        prop_assert!((back - mu).abs() <= 1e-12);
    }

    #[test]
    fn null_treatment_effects_give_sequence_free_means(
        p in 2usize..=5, mu in -2.0f64..2.0, beta in vec(-1.0f64..1.0, 5),
    ) {
        let theta = ModelParams::new(mu, beta[..p].to_vec(), 0.0, 0.0).unwrap();
        let universe = TreatmentSequence::universe(p).unwrap();
        let first = linear_predictor(&build_design_matrix(&universe[0], ModelForm::CARRYOVER), &theta).unwrap();
        for s in &universe[1..] {
            let eta = linear_predictor(&build_design_matrix(s, ModelForm::CARRYOVER), &theta).unwrap();
            prop_assert_eq!(mean_response(&eta), mean_response(&first));
        }
    }

    #[test]
    fn correlation_is_positive_definite_inside_its_range(p in 2usize..=8, ar in any::<bool>(), t in 0.0f64..1.0) {
        let (lo, hi) = if ar { (-1.0, 1.0) } else { (-1.0 / (p as f64 - 1.0), 1.0) };
        let alpha = lo + 1e-6 + t * (hi - lo - 2e-6);
        let c = if ar { WorkingCorrelation::ar1(alpha) } else { WorkingCorrelation::compound_symmetric(alpha) };
        let r = build_correlation(&c, p).unwrap();
        let eig = r.clone().symmetric_eigenvalues();
        prop_assert!(eig.min() > 0.0, "alpha {} eigenvalues {}", alpha, eig);
        prop_assert!((r.trace() - p as f64).abs() < 1e-12);
    }
}
