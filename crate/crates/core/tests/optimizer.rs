use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crossover_design::optimize::{
    grid_oracle, optimize_allocation, optimize_with, GradientMode, Objective, OptimizerSettings,
};
use crossover_design::study::{draw_parameters, ParameterSpace};
use crossover_design::{
    ContrastTarget, DesignError, ModelForm, ModelParams, OptimizationProblem, TreatmentSequence,
    WorkingCorrelation,
};

fn seqs(names: &[&str]) -> Vec<TreatmentSequence> {
    names.iter().map(|s| s.parse().unwrap()).collect()
}

fn problem(
    support: Vec<TreatmentSequence>,
    theta: ModelParams,
    work: WorkingCorrelation,
) -> OptimizationProblem {
    OptimizationProblem {
        support,
        theta,
        work,
        truth: None,
        target: ContrastTarget::Direct,
        form: ModelForm::CARRYOVER,
    }
}

fn b1_theta(p: usize, index: u64) -> ModelParams {
    let space = ParameterSpace::builtin("B1").unwrap();
    draw_parameters(&space, p, ModelForm::CARRYOVER, 11, index)
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-10 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn two_point_support_matches_golden_section() {
    for (i, names) in [["ABB", "AAB"], ["ABB", "BBA"], ["AAA", "BAB"]]
        .iter()
        .enumerate()
    {
        let prob = problem(
            seqs(names),
            b1_theta(3, i as u64),
            WorkingCorrelation::compound_symmetric(0.2),
        );
        let obj = Objective::new(&prob).unwrap();
        let f = |t: f64| obj.value(&[t, 1.0 - t]).unwrap().unwrap_or(f64::INFINITY);
        let t = golden_section(f, 1e-9, 1.0 - 1e-9);
        let opt = optimize_allocation(&prob).unwrap();
        let grid = grid_oracle(&prob, 0.01).unwrap();
        assert!(
            (opt.weights[0] - t).abs() < 1e-4,
            "{names:?}: {} vs {t}",
            opt.weights[0]
        );
        assert!((grid.weights[0] - t).abs() <= 0.01 + 1e-12);
        assert!(opt.objective <= f(t) * (1.0 + 1e-9));
    }
}

#[test]
fn full_three_period_universe_matches_coarse_grid() {
    let support = TreatmentSequence::universe(3).unwrap();
    for i in 0..3 {
        let prob = problem(
            support.clone(),
            b1_theta(3, 100 + i),
            WorkingCorrelation::compound_symmetric(0.2),
        );
        let opt = optimize_allocation(&prob).unwrap();
        let grid = grid_oracle(&prob, 0.05).unwrap();
        assert!(grid.objective >= opt.objective * (1.0 - 1e-9));
        assert!(opt.objective <= grid.objective * (1.0 + 1e-3));
    }
}

#[test]
fn optimum_beats_equal_allocation() {
    for p in 2..=4 {
        let support = TreatmentSequence::universe(p).unwrap();
        for i in 0..10 {
            let prob = problem(
                support.clone(),
                b1_theta(p, i),
                WorkingCorrelation::ar1(0.4),
            );
            let obj = Objective::new(&prob).unwrap();
            let even = obj
                .value(&vec![1.0 / support.len() as f64; support.len()])
                .unwrap()
                .unwrap();
            let res = optimize_allocation(&prob).unwrap();
            assert!(res.objective <= even);
            assert!(res.kkt_gap <= 1e-6 && res.converged);
            assert!((res.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(res.weights.iter().all(|w| *w >= 0.0));
        }
    }
}

#[test]
fn support_order_does_not_change_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = seqs(&["ABB", "AAB", "BAA", "BBA", "ABA"]);
    for i in 0..10 {
        let theta = b1_theta(3, 200 + i);
        let mut shuffled = base.clone();
        for k in (1..shuffled.len()).rev() {
            shuffled.swap(k, rng.random_range(0..=k));
        }
        let a = optimize_allocation(&problem(
            base.clone(),
            theta.clone(),
            WorkingCorrelation::compound_symmetric(0.4),
        ))
        .unwrap();
        let b = optimize_allocation(&problem(
            shuffled,
            theta,
            WorkingCorrelation::compound_symmetric(0.4),
        ))
        .unwrap();
        assert!((a.objective - b.objective).abs() <= 2e-6 * a.objective);
    }
}

#[test]
fn dual_closed_support_admits_symmetric_optimum() {
    let support = seqs(&["AABB", "BBAA", "ABBA", "BAAB", "ABAB", "BABA"]);
    let dual_index: Vec<usize> = support
        .iter()
        .map(|s| support.iter().position(|t| *t == s.dual()).unwrap())
        .collect();
    for (mu, beta) in [(0.0, 0.0), (0.4, -0.3), (-0.5, 0.8)] {
        let theta = ModelParams::new(mu, vec![beta; 4], 0.0, 0.0).unwrap();
        for work in [
            WorkingCorrelation::INDEPENDENT,
            WorkingCorrelation::ar1(0.6),
        ] {
            let prob = problem(support.clone(), theta.clone(), work);
            let res = optimize_allocation(&prob).unwrap();
            let sym: Vec<f64> = (0..support.len())
                .map(|i| 0.5 * (res.weights[i] + res.weights[dual_index[i]]))
                .collect();
            let v = Objective::new(&prob).unwrap().value(&sym).unwrap().unwrap();
            assert!(
                v <= res.objective * (1.0 + 1e-9),
                "{v} vs {}",
                res.objective
            );
        }
    }
}

#[test]
fn misspecified_optimum_satisfies_numerical_kkt_check() {
    let space = ParameterSpace::builtin("B5").unwrap();
    for i in 0..5 {
        let theta = draw_parameters(&space, 3, ModelForm::CARRYOVER, 3, i);
        let prob = OptimizationProblem {
            truth: Some(WorkingCorrelation::ar1(0.4)),
            ..problem(
                TreatmentSequence::universe(3).unwrap(),
                theta,
                WorkingCorrelation::compound_symmetric(0.4),
            )
        };
        let res = optimize_allocation(&prob).unwrap();
        let obj = Objective::new(&prob).unwrap();
        let grad = obj.numerical_gradient(&res.weights, 1e-6).unwrap().unwrap();
        let mean: f64 = res.weights.iter().zip(&grad).map(|(w, g)| w * g).sum();
        let worst = grad.iter().map(|g| mean - g).fold(0.0, f64::max);
        assert!(
            worst / res.objective <= 1e-5,
            "gap {}",
            worst / res.objective
        );
    }
}

#[test]
fn gradient_modes_reach_the_same_optimum() {
    let fd = OptimizerSettings {
        gradient: GradientMode::FiniteDifference,
        ..OptimizerSettings::default()
    };
    for i in 0..4 {
        let prob = OptimizationProblem {
            truth: Some(WorkingCorrelation::ar1(0.4)),
            ..problem(
                seqs(&["ABB", "AAB", "BAA", "BBA"]),
                b1_theta(3, 300 + i),
                WorkingCorrelation::compound_symmetric(0.4),
            )
        };
        let a = optimize_allocation(&prob).unwrap();
        let b = optimize_with(&prob, &fd).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-5 * a.objective);
    }
}

#[test]
fn non_estimable_supports_are_rejected_by_both_paths() {
    let prob = problem(
        seqs(&["ABAB"]),
        ModelParams::zero(4),
        WorkingCorrelation::ar1(0.2),
    );
    assert!(matches!(
        optimize_allocation(&prob),
        Err(DesignError::NotEstimable { .. })
    ));
    assert!(matches!(
        grid_oracle(&prob, 0.5),
        Err(DesignError::NotEstimable { .. })
    ));

    // Without carryover the carryover contrast cannot even be selected.
    let prob = OptimizationProblem {
        target: ContrastTarget::Carryover,
        form: ModelForm::NO_CARRYOVER,
        ..problem(
            seqs(&["AB", "BA"]),
            ModelParams::zero(2),
            WorkingCorrelation::INDEPENDENT,
        )
    };
    assert!(optimize_allocation(&prob).is_err());
}

#[test]
fn constant_sequences_identify_direct_effect_through_period_one() {
    // Period 1 carries no carryover, so AA against BB separates tau.
    let prob = problem(
        seqs(&["AA", "BB"]),
        ModelParams::zero(2),
        WorkingCorrelation::INDEPENDENT,
    );
    let opt = optimize_allocation(&prob).unwrap();
    let grid = grid_oracle(&prob, 0.01).unwrap();
    assert!((opt.objective - 4.0).abs() < 1e-9);
    assert!((grid.objective - opt.objective).abs() < 1e-9);
}
