//! Optimal allocation of subjects to a fixed set of sequences.
//!
//! The objective is the variance of the target contrast, model-based or
//! sandwich, as a function of the allocation weights. Minimization runs
//! multiplicative weight updates followed by pairwise vertex exchanges with
//! an exact line search, stopping when the equivalence-theorem gap
//! (largest improving directional derivative toward a vertex, relative to
//! the objective) falls below tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correlation::{build_correlation, WorkingCorrelation};
use crate::design::{ModelForm, ModelParams, TreatmentSequence};
use crate::error::{DesignError, Result};
use crate::gee::{
    is_estimable, sequence_terms, support_label, validate_support, ContrastTarget, SequenceTerms,
};
use crate::linalg::symmetric_pinv;

/// Largest lattice the grid oracle will enumerate.
pub const GRID_POINT_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub support: Vec<TreatmentSequence>,
    pub theta: ModelParams,
    pub work: WorkingCorrelation,
    /// Present only when the true correlation differs from the working one.
    pub truth: Option<WorkingCorrelation>,
    pub target: ContrastTarget,
    pub form: ModelForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub support: Vec<TreatmentSequence>,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest improving directional derivative toward a vertex, divided by
    /// the objective.
    pub kkt_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientMode {
    Analytic,
    /// Central differences with step 1e-6 on each weight.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub tolerance: f64,
    pub max_iters: usize,
    /// Multiplicative sweeps before switching to vertex exchanges.
    pub multiplicative_sweeps: usize,
    pub gradient: GradientMode,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 10_000,
            multiplicative_sweeps: 5,
            gradient: GradientMode::Analytic,
        }
    }
}

const FD_STEP: f64 = 1e-6;
const LINE_SEARCH_EVALS: usize = 60;

/// Objective value and its partial derivatives in each weight.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl Evaluation {
    /// Relative equivalence-theorem gap at `weights`.
    pub fn kkt_gap(&self, weights: &[f64]) -> f64 {
        let mean: f64 = weights.iter().zip(&self.gradient).map(|(w, g)| w * g).sum();
        let worst = self
            .gradient
            .iter()
            .map(|g| mean - g)
            .fold(0.0_f64, f64::max);
        worst / self.value
    }
}

/// Contrast variance as a function of allocation weights for one parameter
/// value. Per-sequence information terms are computed once.
#[derive(Debug, Clone)]
pub struct Objective {
    terms: Vec<SequenceTerms>,
    selector: DVector<f64>,
    sandwich: bool,
}

impl Objective {
    pub fn new(problem: &OptimizationProblem) -> Result<Self> {
        validate_support(&problem.support)?;
        let p = problem.support[0].periods();
        if problem.theta.periods() != p {
            return Err(DesignError::DimensionMismatch(format!(
                "parameters have {} period effects, support has {p} periods",
                problem.theta.periods()
            )));
        }
        problem.theta.validate()?;
        let work_r = build_correlation(&problem.work, p)?;
        let truth_r = problem
            .truth
            .as_ref()
            .map(|t| build_correlation(t, p))
            .transpose()?;
        let terms = problem
            .support
            .iter()
            .map(|s| sequence_terms(s, &problem.theta, &work_r, truth_r.as_ref(), problem.form))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            terms,
            selector: problem.target.selector(problem.form, p)?,
            sandwich: problem.truth.is_some(),
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn bread(&self, weights: &[f64]) -> DMatrix<f64> {
        let m = self.selector.len();
        let mut b = DMatrix::zeros(m, m);
        for (t, &w) in self.terms.iter().zip(weights) {
            if w != 0.0 {
                b += &t.information * w;
            }
        }
        b
    }

    fn meat(&self, weights: &[f64]) -> DMatrix<f64> {
        let m = self.selector.len();
        let mut s = DMatrix::zeros(m, m);
        for (t, &w) in self.terms.iter().zip(weights) {
            if w != 0.0 {
                s += t
                    .meat
                    .as_ref()
                    .expect("sandwich objective carries meat terms")
                    * w;
            }
        }
        s
    }

    /// Contrast variance, or `None` where the target is not estimable.
    pub fn value(&self, weights: &[f64]) -> Result<Option<f64>> {
        Ok(self.evaluate_inner(weights, false)?.map(|e| e.value))
    }

    /// Value and analytic gradient, or `None` where not estimable.
    pub fn evaluate(&self, weights: &[f64]) -> Result<Option<Evaluation>> {
        self.evaluate_inner(weights, true)
    }

    fn evaluate_inner(&self, weights: &[f64], with_gradient: bool) -> Result<Option<Evaluation>> {
        let bread = self.bread(weights);
        let pinv = symmetric_pinv(&bread)?;
        if !is_estimable(&pinv, &self.selector) {
            return Ok(None);
        }
        let g = &pinv.inverse * &self.selector;
        if !self.sandwich {
            let value = self.selector.dot(&g);
            let gradient = if with_gradient {
                self.terms
                    .iter()
                    .map(|t| -g.dot(&(&t.information * &g)))
                    .collect()
            } else {
                Vec::new()
            };
            return finite(value).map(|value| Some(Evaluation { value, gradient }));
        }
        let meat = self.meat(weights);
        let sg = &meat * &g;
        let value = g.dot(&sg);
        let gradient = if with_gradient {
            let h = &pinv.inverse * sg;
            self.terms
                .iter()
                .map(|t| {
                    let j = t
                        .meat
                        .as_ref()
                        .expect("sandwich objective carries meat terms");
                    g.dot(&(j * &g)) - 2.0 * g.dot(&(&t.information * &h))
                })
                .collect()
        } else {
            Vec::new()
        };
        finite(value).map(|value| Some(Evaluation { value, gradient }))
    }

    /// Central finite-difference gradient; weights are perturbed one at a
    /// time without renormalization.
    pub fn numerical_gradient(&self, weights: &[f64], step: f64) -> Result<Option<Vec<f64>>> {
        let mut w = weights.to_vec();
        let mut grad = Vec::with_capacity(w.len());
        for i in 0..w.len() {
            let orig = w[i];
            w[i] = orig + step;
            let up = self.value(&w)?;
            w[i] = orig - step;
            let down = self.value(&w)?;
            w[i] = orig;
            match (up, down) {
                (Some(u), Some(d)) => grad.push((u - d) / (2.0 * step)),
                _ => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    /// Second derivatives in the weights indexed by `active`: analytic
    /// `2 (I_i g)' B⁺ (I_j g)` for the model-based objective, central
    /// differences of the gradient otherwise.
    pub fn hessian(
        &self,
        weights: &[f64],
        active: &[usize],
        mode: GradientMode,
    ) -> Result<Option<DMatrix<f64>>> {
        let k = active.len();
        if !self.sandwich && mode == GradientMode::Analytic {
            let pinv = symmetric_pinv(&self.bread(weights))?;
            if !is_estimable(&pinv, &self.selector) {
                return Ok(None);
            }
            let g = &pinv.inverse * &self.selector;
            let u = DMatrix::from_columns(
                &active
                    .iter()
                    .map(|&i| &self.terms[i].information * &g)
                    .collect::<Vec<_>>(),
            );
            return Ok(Some(u.transpose() * &pinv.inverse * u * 2.0));
        }
        let mut h = DMatrix::zeros(k, k);
        let mut w = weights.to_vec();
        for (col, &j) in active.iter().enumerate() {
            let orig = w[j];
            let step = FD_STEP * orig.max(1e-3);
            w[j] = orig + step;
            let up = self.evaluate_with(&w, mode)?;
            w[j] = orig - step;
            let down = self.evaluate_with(&w, mode)?;
            w[j] = orig;
            let (Some(up), Some(down)) = (up, down) else {
                return Ok(None);
            };
            for (row, &i) in active.iter().enumerate() {
                h[(row, col)] = (up.gradient[i] - down.gradient[i]) / (2.0 * step);
            }
        }
        Ok(Some((&h + h.transpose()) * 0.5))
    }

    fn evaluate_with(&self, weights: &[f64], mode: GradientMode) -> Result<Option<Evaluation>> {
        match mode {
            GradientMode::Analytic => self.evaluate(weights),
            GradientMode::FiniteDifference => {
                let Some(value) = self.value(weights)? else {
                    return Ok(None);
                };
                Ok(self
                    .numerical_gradient(weights, FD_STEP)?
                    .map(|gradient| Evaluation { value, gradient }))
            }
        }
    }
}

fn finite(value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DesignError::NumericalFailure(format!(
            "contrast variance evaluated to {value}"
        )))
    }
}

fn barycenter(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// An estimable starting point: the barycenter, else a pair midpoint.
fn estimable_start(objective: &Objective, support: &[TreatmentSequence]) -> Result<Vec<f64>> {
    let n = objective.len();
    let center = barycenter(n);
    if objective.value(&center)?.is_some() {
        return Ok(center);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut w = vec![0.0; n];
            w[i] = 0.5;
            w[j] = 0.5;
            if objective.value(&w)?.is_some() {
                return Ok(w);
            }
        }
    }
    Err(DesignError::NotEstimable {
        context: format!("support {}", support_label(support)),
    })
}

pub fn optimize_allocation(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    optimize_with(problem, &OptimizerSettings::default())
}

pub fn optimize_with(
    problem: &OptimizationProblem,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let objective = Objective::new(problem)?;
    let start = estimable_start(&objective, &problem.support)?;
    optimize_from(&objective, problem, start, settings)
}

/// Runs the optimizer from a given estimable starting allocation.
pub fn optimize_from_weights(
    problem: &OptimizationProblem,
    start: Vec<f64>,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let objective = Objective::new(problem)?;
    if start.len() != objective.len() {
        return Err(DesignError::DimensionMismatch(format!(
            "{} starting weights for {} sequences",
            start.len(),
            objective.len()
        )));
    }
    let total: f64 = start.iter().sum();
    let start: Vec<f64> = start.iter().map(|w| w / total).collect();
    if objective.value(&start)?.is_none() {
        return Err(DesignError::NotEstimable {
            context: format!("starting allocation on {}", support_label(&problem.support)),
        });
    }
    optimize_from(&objective, problem, start, settings)
}

fn optimize_from(
    objective: &Objective,
    problem: &OptimizationProblem,
    mut weights: Vec<f64>,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    let n = objective.len();
    let mut eval = objective
        .evaluate_with(&weights, settings.gradient)?
        .expect("starting point is estimable");
    let mut iterations = 0;
    loop {
        let gap = eval.kkt_gap(&weights);
        if gap <= settings.tolerance || n == 1 {
            return Ok(OptimizationResult {
                support: problem.support.clone(),
                weights,
                objective: eval.value,
                iterations,
                converged: true,
                kkt_gap: gap.max(0.0),
            });
        }
        if iterations >= settings.max_iters {
            let best = OptimizationResult {
                support: problem.support.clone(),
                weights,
                objective: eval.value,
                iterations,
                converged: false,
                kkt_gap: gap,
            };
            return Err(DesignError::BudgetExhausted {
                iterations,
                kkt_gap: gap,
                best: Box::new(best),
            });
        }
        iterations += 1;

        if let Some((w, e)) = snap_negligible(objective, &weights, &eval, settings.gradient)? {
            weights = w;
            eval = e;
            continue;
        }
        if iterations <= settings.multiplicative_sweeps {
            if let Some((w, e)) =
                multiplicative_step(objective, &weights, &eval, settings.gradient)?
            {
                weights = w;
                eval = e;
                continue;
            }
        }
        if face_gap(&weights, &eval) > 0.5 * settings.tolerance {
            if let Some((w, e)) = face_newton_step(objective, &weights, &eval, settings.gradient)? {
                weights = w;
                eval = e;
                continue;
            }
        }
        match exchange_step(objective, &weights, &eval, settings.gradient)? {
            Some((w, e)) => {
                weights = w;
                eval = e;
            }
            None => {
                // no admissible pair improves; accept the current point
                let gap = eval.kkt_gap(&weights);
                let best = OptimizationResult {
                    support: problem.support.clone(),
                    weights,
                    objective: eval.value,
                    iterations,
                    converged: false,
                    kkt_gap: gap,
                };
                return Err(DesignError::BudgetExhausted {
                    iterations,
                    kkt_gap: gap,
                    best: Box::new(best),
                });
            }
        }
    }
}

/// Weights this far below the largest one only block boundary steps.
const NEGLIGIBLE_WEIGHT: f64 = 1e-12;

/// Zeroes negligible weights when doing so keeps the target estimable and
/// does not raise the objective beyond rounding.
fn snap_negligible(
    objective: &Objective,
    weights: &[f64],
    eval: &Evaluation,
    mode: GradientMode,
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let cutoff = NEGLIGIBLE_WEIGHT * weights.iter().copied().fold(0.0, f64::max);
    if !weights.iter().any(|&w| w > 0.0 && w < cutoff) {
        return Ok(None);
    }
    let mut next: Vec<f64> = weights
        .iter()
        .map(|&w| if w < cutoff { 0.0 } else { w })
        .collect();
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|w| *w /= total);
    match objective.evaluate_with(&next, mode)? {
        Some(e) if e.value <= eval.value * (1.0 + 1e-9) => Ok(Some((next, e))),
        _ => Ok(None),
    }
}

/// `w_i <- w_i sqrt((d_i + s) / (phi + s))` with `d = -grad`; the shift `s`
/// keeps factors positive when the sandwich gradient changes sign.
fn multiplicative_step(
    objective: &Objective,
    weights: &[f64],
    eval: &Evaluation,
    mode: GradientMode,
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let mean: f64 = -weights
        .iter()
        .zip(&eval.gradient)
        .map(|(w, g)| w * g)
        .sum::<f64>();
    let lowest = eval
        .gradient
        .iter()
        .map(|g| -g)
        .fold(f64::INFINITY, f64::min);
    let shift = if lowest < 0.0 { -2.0 * lowest } else { 0.0 };
    let mut next: Vec<f64> = weights
        .iter()
        .zip(&eval.gradient)
        .map(|(w, g)| w * ((-g + shift) / (mean + shift)).max(0.0).sqrt())
        .collect();
    let total: f64 = next.iter().sum();
    if !(total > 0.0) {
        return Ok(None);
    }
    next.iter_mut().for_each(|w| *w /= total);
    match objective.evaluate_with(&next, mode)? {
        Some(e) if e.value < eval.value => Ok(Some((next, e))),
        _ => Ok(None),
    }
}

/// Spread of the gradient over the current support, relative to the value.
fn face_gap(weights: &[f64], eval: &Evaluation) -> f64 {
    let (lo, hi) = weights
        .iter()
        .zip(&eval.gradient)
        .filter(|(w, _)| **w > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, g)| {
            (lo.min(*g), hi.max(*g))
        });
    (hi - lo) / eval.value
}

/// Relative eigenvalue below which a face direction counts as flat.
const FLAT_CURVATURE: f64 = 1e-9;

/// Second-order step on the face spanned by the current support.
///
/// The reduced Hessian is split by its eigenvalues. Curved directions get a
/// Newton step with backtracking. Flat or concave directions along which the
/// gradient still has weight are followed with an exact line search, which
/// usually ends on the boundary and drops a support point.
fn face_newton_step(
    objective: &Objective,
    weights: &[f64],
    eval: &Evaluation,
    mode: GradientMode,
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let active: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let k = active.len();
    if k < 2 {
        return Ok(None);
    }
    let Some(hessian) = objective.hessian(weights, &active, mode)? else {
        return Ok(None);
    };
    let basis = simplex_tangent_basis(k);
    let reduced = basis.transpose() * &hessian * &basis;
    let gradient = DVector::from_iterator(k, active.iter().map(|&i| eval.gradient[i]));
    let reduced_gradient = basis.transpose() * &gradient;
    let eigen = reduced.symmetric_eigen();
    let top = eigen.eigenvalues.amax();

    let mut newton = DVector::zeros(k - 1);
    let mut flat = DVector::zeros(k - 1);
    for (i, &lambda) in eigen.eigenvalues.iter().enumerate() {
        let v = eigen.eigenvectors.column(i);
        let c = v.dot(&reduced_gradient);
        if lambda > FLAT_CURVATURE * top {
            newton -= v * (c / lambda);
        } else {
            flat -= v * c;
        }
    }
    let full = |d: &DVector<f64>| -> Vec<f64> {
        let mut out = vec![0.0; weights.len()];
        for (x, &i) in (&basis * d).iter().zip(&active) {
            out[i] = *x;
        }
        out
    };

    if flat.norm() >= 0.5 * reduced_gradient.norm() {
        return search_along(objective, weights, eval, &full(&flat), mode);
    }
    let direction = full(&newton);
    let slope: f64 = direction
        .iter()
        .zip(&eval.gradient)
        .map(|(d, g)| d * g)
        .sum();
    if !(slope < 0.0) {
        return Ok(None);
    }
    let (step_max, blocking) = boundary(weights, &direction);
    let step_max = step_max.min(1.0);
    let mut step = step_max;
    for _ in 0..30 {
        let mut w = move_along(weights, &direction, step);
        if step == step_max {
            if let Some(i) = blocking {
                w[i] = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        if let Some(e) = objective.evaluate_with(&w, mode)? {
            if e.value <= eval.value + 1e-4 * step * slope {
                return Ok(Some((w, e)));
            }
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Orthonormal basis of the zero-sum subspace of `R^k`, taken from the
/// Householder reflection that maps `e_1` onto the normalized ones vector.
fn simplex_tangent_basis(k: usize) -> DMatrix<f64> {
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    v[0] -= 1.0;
    let vv = v.dot(&v);
    let reflector = DMatrix::identity(k, k) - &v * v.transpose() * (2.0 / vv);
    reflector.columns(1, k - 1).into_owned()
}

/// Largest step keeping `weights + t d` non-negative and the weight that
/// hits zero first.
fn boundary(weights: &[f64], direction: &[f64]) -> (f64, Option<usize>) {
    let mut t_max = f64::INFINITY;
    let mut blocking = None;
    for (i, (&w, &d)) in weights.iter().zip(direction).enumerate() {
        if d < 0.0 && w / -d < t_max {
            t_max = w / -d;
            blocking = Some(i);
        }
    }
    (t_max, blocking)
}

fn move_along(weights: &[f64], direction: &[f64], t: f64) -> Vec<f64> {
    weights
        .iter()
        .zip(direction)
        .map(|(w, d)| (w + t * d).max(0.0))
        .collect()
}

/// Moves mass from the worst support point to the best vertex.
fn exchange_step(
    objective: &Objective,
    weights: &[f64],
    eval: &Evaluation,
    mode: GradientMode,
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let grad = &eval.gradient;
    let to = (0..grad.len())
        .min_by(|&a, &b| grad[a].total_cmp(&grad[b]))
        .expect("non-empty support");
    let from = (0..grad.len())
        .filter(|&i| weights[i] > 0.0 && i != to)
        .max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
    let Some(from) = from else {
        return Ok(None);
    };
    let mut direction = vec![0.0; weights.len()];
    direction[to] = 1.0;
    direction[from] = -1.0;
    search_along(objective, weights, eval, &direction, mode)
}

/// Exact line search along a zero-sum `direction` up to the simplex
/// boundary, driven by the sign of the directional derivative.
fn search_along(
    objective: &Objective,
    weights: &[f64],
    eval: &Evaluation,
    direction: &[f64],
    mode: GradientMode,
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let slope =
        |e: &Evaluation| -> f64 { direction.iter().zip(&e.gradient).map(|(d, g)| d * g).sum() };
    let slope0 = slope(eval);
    if !(slope0 < 0.0) {
        return Ok(None);
    }
    let (t_max, blocking) = boundary(weights, direction);
    if !t_max.is_finite() {
        return Ok(None);
    }
    let step_to = |t: f64| -> Vec<f64> {
        let mut w = move_along(weights, direction, t);
        if t >= t_max {
            if let Some(i) = blocking {
                w[i] = 0.0;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    };

    let full = step_to(t_max);
    let mut hi_eval = objective.evaluate_with(&full, mode)?;
    if let Some(e) = &hi_eval {
        // a vanishing weight may not change the value beyond rounding
        if slope(e) <= 0.0 && e.value <= eval.value * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(Some((full, hi_eval.take().expect("checked"))));
        }
    }

    // Bracket [lo, hi] with slope(lo) < 0 and slope(hi) > 0 (or hi inadmissible).
    let (mut lo, mut lo_slope) = (0.0, slope0);
    let (mut hi, mut hi_slope) = (t_max, hi_eval.as_ref().map(slope));
    let mut best: Option<(f64, Evaluation)> = None;
    let mut side = 0i8;
    for _ in 0..LINE_SEARCH_EVALS {
        let t = match hi_slope {
            Some(hs) if hs.is_finite() => {
                // Illinois-modified regula falsi
                let (ls, hs) = match side {
                    1 => (lo_slope, hs * 0.5),
                    -1 => (lo_slope * 0.5, hs),
                    _ => (lo_slope, hs),
                };
                let t = lo - ls * (hi - lo) / (hs - ls);
                if t > lo && t < hi {
                    t
                } else {
                    0.5 * (lo + hi)
                }
            }
            _ => 0.5 * (lo + hi),
        };
        let w = step_to(t);
        let Some(e) = objective.evaluate_with(&w, mode)? else {
            hi = t;
            hi_slope = None;
            continue;
        };
        let s = slope(&e);
        if best.as_ref().is_none_or(|(_, b)| e.value < b.value) {
            best = Some((t, e.clone()));
        }
        if s < 0.0 {
            lo = t;
            lo_slope = s;
            side = if side == -1 { 1 } else { -1 };
        } else {
            hi = t;
            hi_slope = Some(s);
            side = if side == 1 { -1 } else { 1 };
        }
        if s.abs() <= 1e-3 * slope0.abs() * f64::EPSILON.sqrt()
            || hi - lo <= 1e-15 * t_max.max(1e-300)
        {
            break;
        }
    }
    match best {
        Some((t, e)) if e.value < eval.value => Ok(Some((step_to(t), e))),
        _ => Ok(None),
    }
}

/// Exhaustive search over simplex lattice points with weights in multiples
/// of `resolution`.
pub fn grid_oracle(problem: &OptimizationProblem, resolution: f64) -> Result<OptimizationResult> {
    let objective = Objective::new(problem)?;
    let steps = (1.0 / resolution).round();
    if !(resolution > 0.0) || steps < 1.0 || (steps * resolution - 1.0).abs() > 1e-9 {
        return Err(DesignError::InvalidDesign(format!(
            "grid resolution {resolution} must divide 1"
        )));
    }
    let steps = steps as usize;
    let n = objective.len();
    let points = lattice_size(steps, n);
    if points > GRID_POINT_LIMIT {
        return Err(DesignError::ComplexityGuard {
            points,
            limit: GRID_POINT_LIMIT,
        });
    }

    let mut counts = vec![0usize; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut visited = 0usize;
    let mut visit = |counts: &[usize]| -> Result<()> {
        visited += 1;
        let w: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
        if let Some(v) = objective.value(&w)? {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, w));
            }
        }
        Ok(())
    };
    enumerate_compositions(steps, 0, &mut counts, &mut visit)?;

    let (value, weights) = best.ok_or_else(|| DesignError::NotEstimable {
        context: format!("support {}", support_label(&problem.support)),
    })?;
    let gap = objective
        .evaluate(&weights)?
        .map(|e| e.kkt_gap(&weights))
        .unwrap_or(f64::INFINITY);
    Ok(OptimizationResult {
        support: problem.support.clone(),
        weights,
        objective: value,
        iterations: visited,
        converged: true,
        kkt_gap: gap,
    })
}

/// Number of compositions of `steps` into `parts` nonnegative parts.
pub fn lattice_size(steps: usize, parts: usize) -> u128 {
    // C(steps + parts - 1, parts - 1)
    let k = parts.saturating_sub(1) as u128;
    let n = steps as u128 + k;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > GRID_POINT_LIMIT * 1000 {
            return acc;
        }
    }
    acc
}

fn enumerate_compositions<F>(
    remaining: usize,
    index: usize,
    counts: &mut [usize],
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    if index == counts.len() - 1 {
        counts[index] = remaining;
        return visit(counts);
    }
    for c in 0..=remaining {
        counts[index] = c;
        enumerate_compositions(remaining - c, index + 1, counts, visit)?;
    }
    counts[index] = 0;
    Ok(())
}
