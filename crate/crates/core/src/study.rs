//! Monte Carlo efficiency studies over parameter boxes.
//!
//! For each sampled parameter value the locally optimal design over all 2^p
//! sequences is computed, and every catalog design is scored by
//! `(Var_opt / Var_design)^(1/m)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::WorkingCorrelation;
use crate::design::{ModelForm, ModelParams, TreatmentSequence};
use crate::error::{DesignError, Result};
use crate::gee::{parameter_count, validate_support, ContrastTarget};
use crate::optimize::{
    optimize_from_weights, optimize_with, Objective, OptimizationProblem, OptimizerSettings,
};

/// Per-draw efficiencies may exceed one by at most this much.
pub const EFFICIENCY_SLACK: f64 = 1e-6;

pub const DEFAULT_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(DesignError::InvalidSpace(format!(
                "{what} interval [{}, {}] is not a finite closed interval",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * u
        }
    }
}

/// Period-effect ranges: one interval shared by every period, or one per
/// period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRange {
    Shared(Interval),
    PerPeriod(Vec<Interval>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub name: String,
    pub mu: Interval,
    pub beta: BetaRange,
    pub tau: Interval,
    pub rho: Interval,
    /// Correlation parameter attached to the space.
    #[serde(default)]
    pub alpha: f64,
}

const MU_WIDE: Interval = Interval::new(-0.5, 0.5);
const BETA_WIDE: Interval = Interval::new(-1.0, 1.0);
const TAU_WIDE: Interval = Interval::new(-1.5, 1.5);
const RHO_WIDE: Interval = Interval::new(-1.0, 1.0);
const TAU_NARROW: Interval = Interval::new(-0.2, 1.5);
const RHO_NARROW: Interval = Interval::new(-0.2, 1.0);

pub const BUILTIN_SPACES: [&str; 7] = ["B1", "B2", "B3", "B4", "B5", "B6", "senn"];

impl ParameterSpace {
    /// B1..B6 and the two-period asthma-trial box `senn`.
    pub fn builtin(name: &str) -> Option<Self> {
        let boxed = |name: &str, tau, rho, alpha| Self {
            name: name.to_string(),
            mu: MU_WIDE,
            beta: BetaRange::Shared(BETA_WIDE),
            tau,
            rho,
            alpha,
        };
        match name.to_ascii_uppercase().as_str() {
            "B1" => Some(boxed("B1", TAU_WIDE, RHO_WIDE, 0.2)),
            "B2" => Some(boxed("B2", TAU_WIDE, RHO_WIDE, 0.4)),
            "B3" => Some(boxed("B3", TAU_WIDE, RHO_WIDE, 0.6)),
            "B4" => Some(boxed("B4", TAU_NARROW, RHO_NARROW, 0.2)),
            "B5" => Some(boxed("B5", TAU_NARROW, RHO_NARROW, 0.4)),
            "B6" => Some(boxed("B6", TAU_NARROW, RHO_NARROW, 0.6)),
            // Confidence intervals of a no-carryover fit with a single
            // period-2 effect; period 1 is the reference.
            "SENN" => Some(Self {
                name: "senn".to_string(),
                mu: Interval::new(1.1573, 5.0893),
                beta: BetaRange::PerPeriod(vec![
                    Interval::point(0.0),
                    Interval::new(-2.8390, 0.4932),
                ]),
                tau: Interval::new(-5.1738, -1.4029),
                rho: Interval::point(0.0),
                alpha: 0.0,
            }),
            _ => None,
        }
    }

    pub fn beta_interval(&self, period: usize) -> Interval {
        match &self.beta {
            BetaRange::Shared(i) => *i,
            BetaRange::PerPeriod(v) => v[period],
        }
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        self.mu.validate("mu")?;
        self.tau.validate("tau")?;
        self.rho.validate("rho")?;
        match &self.beta {
            BetaRange::Shared(i) => i.validate("beta")?,
            BetaRange::PerPeriod(v) => {
                if v.len() != periods {
                    return Err(DesignError::InvalidSpace(format!(
                        "space {} has {} period ranges, study uses {periods} periods",
                        self.name,
                        v.len()
                    )));
                }
                for i in v {
                    i.validate("beta")?;
                }
            }
        }
        if !self.alpha.is_finite() {
            return Err(DesignError::InvalidSpace("alpha must be finite".into()));
        }
        Ok(())
    }

    /// Same box with tau and rho reflected through zero.
    pub fn reflected(&self) -> Self {
        let flip = |i: Interval| Interval::new(-i.hi, -i.lo);
        Self {
            name: format!("{}-reflected", self.name),
            tau: flip(self.tau),
            rho: flip(self.rho),
            ..self.clone()
        }
    }
}

/// Independent uniform draws on the box; draw `i` comes from its own
/// ChaCha stream so the list does not depend on scheduling.
pub fn sample_parameters(
    space: &ParameterSpace,
    periods: usize,
    form: ModelForm,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<ModelParams>> {
    space.validate(periods)?;
    Ok((0..n_draws)
        .map(|i| draw_parameters(space, periods, form, seed, i as u64))
        .collect())
}

pub fn draw_parameters(
    space: &ParameterSpace,
    periods: usize,
    form: ModelForm,
    seed: u64,
    index: u64,
) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mu = space.mu.sample(&mut rng);
    let beta = (0..periods)
        .map(|i| space.beta_interval(i).sample(&mut rng))
        .collect();
    let tau = space.tau.sample(&mut rng);
    let rho = if form.include_carryover {
        space.rho.sample(&mut rng)
    } else {
        0.0
    };
    ModelParams { mu, beta, tau, rho }
}

/// `(optimal / candidate)^(1/m)`.
pub fn efficiency(candidate_var: f64, optimal_var: f64, m: usize) -> f64 {
    (optimal_var / candidate_var).powf(1.0 / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    /// Equal weight on every support sequence.
    Fixed,
    /// Weights optimized on the support for each draw.
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignCatalogEntry {
    pub name: String,
    pub support: Vec<TreatmentSequence>,
    pub allocation: Allocation,
}

impl DesignCatalogEntry {
    fn new(name: &str, support: &[&str], allocation: Allocation) -> Self {
        Self {
            name: name.to_string(),
            support: support
                .iter()
                .map(|s| s.parse().expect("catalog sequences are valid"))
                .collect(),
            allocation,
        }
    }

    pub fn periods(&self) -> usize {
        self.support[0].periods()
    }

    /// Parses an inline design: `ABB+BAA` (equal weights) or `ABB+BAA@opt`.
    pub fn parse_inline(token: &str) -> Result<Self> {
        let (body, allocation) = match token.strip_suffix("@opt") {
            Some(b) => (b, Allocation::Optimized),
            None => (token, Allocation::Fixed),
        };
        let support = body
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<TreatmentSequence>>>()?;
        validate_support(&support)?;
        Ok(Self {
            name: token.to_string(),
            support,
            allocation,
        })
    }
}

/// Built-in designs for two, three and four periods.
pub fn catalog(periods: usize) -> Vec<DesignCatalogEntry> {
    use Allocation::*;
    match periods {
        2 => vec![
            DesignCatalogEntry::new("D1", &["AB", "BA"], Fixed),
            DesignCatalogEntry::new("D2", &["AB", "AA", "BA", "BB"], Fixed),
        ],
        3 => vec![
            DesignCatalogEntry::new("d1", &["ABB", "BAA"], Optimized),
            DesignCatalogEntry::new("d2", &["ABB", "BAA"], Fixed),
            DesignCatalogEntry::new("d3", &["ABB", "AAA", "BAA", "BBB"], Fixed),
            DesignCatalogEntry::new("d4", &["ABB", "AAB", "BAA", "BBA"], Fixed),
            DesignCatalogEntry::new("d5", &["ABB", "ABA", "BAA", "BAB"], Fixed),
            DesignCatalogEntry::new("d6", &["AAA", "BBB"], Fixed),
        ],
        4 => vec![
            DesignCatalogEntry::new("I", &["AABB", "BBAA", "ABBA", "BAAB"], Optimized),
            DesignCatalogEntry::new("II", &["AABB", "BBAA", "ABBA", "BAAB"], Fixed),
            DesignCatalogEntry::new("III", &["AABB", "BBAA"], Fixed),
            DesignCatalogEntry::new("IV", &["ABBA", "BAAB"], Fixed),
        ],
        _ => Vec::new(),
    }
}

/// Looks up a catalog name (case-insensitive) or parses an inline design.
pub fn resolve_design(token: &str, periods: usize) -> Result<DesignCatalogEntry> {
    let token = token.trim();
    if let Some(entry) = catalog(periods)
        .into_iter()
        .find(|e| e.name.eq_ignore_ascii_case(token))
    {
        return Ok(entry);
    }
    let entry = DesignCatalogEntry::parse_inline(token).map_err(|_| {
        DesignError::InvalidDesign(format!(
            "{token:?} is neither a {periods}-period catalog design nor an inline support like ABB+BAA"
        ))
    })?;
    if entry.periods() != periods {
        return Err(DesignError::InvalidDesign(format!(
            "design {token} has {} periods, study uses {periods}",
            entry.periods()
        )));
    }
    Ok(entry)
}

/// Which objective the reference optimum minimizes in a misspecified run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumObjective {
    /// Minimize the sandwich variance (the same objective candidates are scored by).
    #[default]
    Sandwich,
    /// Minimize the model-based variance under the working correlation and
    /// score the resulting allocations with the sandwich variance.
    ModelBased,
}

impl fmt::Display for OptimumObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimumObjective::Sandwich => "sandwich",
            OptimumObjective::ModelBased => "model_based",
        })
    }
}

/// Everything that defines one study run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub space: ParameterSpace,
    pub periods: usize,
    pub form: ModelForm,
    pub work: WorkingCorrelation,
    pub truth: Option<WorkingCorrelation>,
    pub target: ContrastTarget,
    pub designs: Vec<DesignCatalogEntry>,
    pub draws: usize,
    pub seed: u64,
    /// Overrides the default exponent `m` (number of packed parameters).
    pub eff_exponent: Option<usize>,
    pub optimum: OptimumObjective,
}

impl StudySpec {
    pub fn new(
        space: ParameterSpace,
        periods: usize,
        form: ModelForm,
        work: WorkingCorrelation,
        target: ContrastTarget,
        designs: Vec<DesignCatalogEntry>,
    ) -> Self {
        Self {
            space,
            periods,
            form,
            work,
            truth: None,
            target,
            designs,
            draws: DEFAULT_DRAWS,
            seed: 0,
            eff_exponent: None,
            optimum: OptimumObjective::Sandwich,
        }
    }

    pub fn exponent(&self) -> usize {
        self.eff_exponent
            .unwrap_or_else(|| parameter_count(self.form, self.periods))
    }

    pub fn correlation_label(&self) -> String {
        match &self.truth {
            Some(t) => format!("{}/{}", self.work, t),
            None => self.work.to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(DesignError::InvalidSpace(
                "at least one draw is required".into(),
            ));
        }
        self.space.validate(self.periods)?;
        self.work.validate(self.periods)?;
        if let Some(t) = &self.truth {
            t.validate(self.periods)?;
        }
        self.target.selector(self.form, self.periods)?;
        if let Some(0) = self.eff_exponent {
            return Err(DesignError::InvalidDesign(
                "efficiency exponent must be positive".into(),
            ));
        }
        for d in &self.designs {
            validate_support(&d.support)?;
            if d.periods() != self.periods {
                return Err(DesignError::InvalidDesign(format!(
                    "design {} has {} periods, study uses {}",
                    d.name,
                    d.periods(),
                    self.periods
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceWeight {
    pub sequence: TreatmentSequence,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub name: String,
    pub support: Vec<TreatmentSequence>,
    pub allocation: Allocation,
    pub estimable: bool,
    pub min_eff: Option<f64>,
    pub median_eff: Option<f64>,
    /// Mean optimized weights, for designs with optimized allocation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_weights: Option<Vec<SequenceWeight>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub space: String,
    pub periods: usize,
    pub carryover: bool,
    pub correlation: String,
    pub target: ContrastTarget,
    pub draws: usize,
    pub seed: u64,
    pub eff_exponent: usize,
    pub optimum_objective: OptimumObjective,
    pub designs: Vec<DesignSummary>,
    pub average_optimal_allocation: Vec<SequenceWeight>,
}

impl EfficiencyReport {
    pub fn design(&self, name: &str) -> Option<&DesignSummary> {
        self.designs.iter().find(|d| d.name == name)
    }
}

/// Per-draw detail kept alongside the summary.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub report: EfficiencyReport,
    pub parameters: Vec<ModelParams>,
    /// `efficiencies[d][i]`: design `d` at draw `i`; empty for non-estimable designs.
    pub efficiencies: Vec<Vec<f64>>,
    /// Optimal weights over the full universe at each draw.
    pub optimal_weights: Vec<Vec<f64>>,
    pub optimal_variances: Vec<f64>,
}

/// Rounds to 12 significant digits, the precision of every emitted report.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Midpoint of the two central order statistics for an even count.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct DrawResult {
    optimal_weights: Vec<f64>,
    optimal_variance: f64,
    efficiencies: Vec<f64>,
    design_weights: Vec<Option<Vec<f64>>>,
}

/// Embeds support weights into the universe ordering.
fn embed(
    universe: &[TreatmentSequence],
    support: &[TreatmentSequence],
    weights: &[f64],
) -> Vec<f64> {
    let mut full = vec![0.0; universe.len()];
    for (s, w) in support.iter().zip(weights) {
        let idx = universe
            .iter()
            .position(|u| u == s)
            .expect("support within universe");
        full[idx] = *w;
    }
    full
}

fn problem_for(
    spec: &StudySpec,
    support: Vec<TreatmentSequence>,
    theta: &ModelParams,
    truth: Option<WorkingCorrelation>,
) -> OptimizationProblem {
    OptimizationProblem {
        support,
        theta: theta.clone(),
        work: spec.work,
        truth,
        target: spec.target,
        form: spec.form,
    }
}

fn optimize_or_fail(
    problem: &OptimizationProblem,
    settings: &OptimizerSettings,
) -> Result<(Vec<f64>, f64)> {
    let r = optimize_with(problem, settings)?;
    Ok((r.weights, r.objective))
}

fn run_draw(
    spec: &StudySpec,
    universe: &[TreatmentSequence],
    estimable: &[bool],
    theta: &ModelParams,
    settings: &OptimizerSettings,
) -> Result<DrawResult> {
    let scored_truth = spec.truth;
    let optimize_truth = match spec.optimum {
        OptimumObjective::Sandwich => spec.truth,
        OptimumObjective::ModelBased => None,
    };
    let scorer = Objective::new(&problem_for(spec, universe.to_vec(), theta, scored_truth))?;
    let score = |w: &[f64]| -> Result<f64> {
        scorer.value(w)?.ok_or_else(|| DesignError::NotEstimable {
            context: format!("allocation {w:?} at theta {theta:?}"),
        })
    };

    let universe_problem = problem_for(spec, universe.to_vec(), theta, optimize_truth);
    let (mut optimal_weights, _) = optimize_or_fail(&universe_problem, settings)?;
    let mut optimal_variance = score(&optimal_weights)?;

    let mut variances = Vec::with_capacity(spec.designs.len());
    let mut design_weights = Vec::with_capacity(spec.designs.len());
    for (entry, &ok) in spec.designs.iter().zip(estimable) {
        if !ok {
            variances.push(f64::NAN);
            design_weights.push(None);
            continue;
        }
        let weights = match entry.allocation {
            Allocation::Fixed => vec![1.0 / entry.support.len() as f64; entry.support.len()],
            Allocation::Optimized => {
                let p = problem_for(spec, entry.support.clone(), theta, optimize_truth);
                optimize_or_fail(&p, settings)?.0
            }
        };
        let full = embed(universe, &entry.support, &weights);
        variances.push(score(&full)?);
        design_weights.push((entry.allocation == Allocation::Optimized).then_some(weights));
    }

    // A non-convex sandwich objective can leave the universe search in a
    // local minimum; restart it from any catalog design that beats it.
    if spec.optimum == OptimumObjective::Sandwich {
        let best = variances
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1));
        if let Some((d, &v)) = best {
            if v < optimal_variance * (1.0 - EFFICIENCY_SLACK) {
                let entry = &spec.designs[d];
                let start_support = match &design_weights[d] {
                    Some(w) => w.clone(),
                    None => vec![1.0 / entry.support.len() as f64; entry.support.len()],
                };
                let start = embed(universe, &entry.support, &start_support);
                let r = optimize_from_weights(&universe_problem, start, settings)?;
                if r.objective < optimal_variance {
                    optimal_weights = r.weights;
                    optimal_variance = score(&optimal_weights)?;
                }
            }
        }
    }

    let m = spec.exponent();
    let efficiencies = variances
        .iter()
        .map(|&v| {
            if v.is_finite() {
                efficiency(v, optimal_variance, m)
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(DrawResult {
        optimal_weights,
        optimal_variance,
        efficiencies,
        design_weights,
    })
}

fn mean_weights(
    support: &[TreatmentSequence],
    rows: impl Iterator<Item = Vec<f64>>,
    count: usize,
) -> Vec<SequenceWeight> {
    let mut sums = vec![0.0; support.len()];
    for row in rows {
        for (s, w) in sums.iter_mut().zip(row) {
            *s += w;
        }
    }
    support
        .iter()
        .zip(sums)
        .map(|(s, total)| SequenceWeight {
            sequence: s.clone(),
            weight: round_sig12(total / count as f64),
        })
        .collect()
}

pub fn run_study(spec: &StudySpec) -> Result<StudyOutcome> {
    run_study_with(spec, &OptimizerSettings::default())
}

pub fn run_study_with(spec: &StudySpec, settings: &OptimizerSettings) -> Result<StudyOutcome> {
    spec.validate()?;
    let parameters =
        sample_parameters(&spec.space, spec.periods, spec.form, spec.draws, spec.seed)?;
    run_study_on(spec, parameters, settings)
}

/// Runs the study protocol on an explicit list of parameter values instead
/// of sampling the space; `spec.draws` is ignored and `spec.seed` is only
/// echoed in the report.
pub fn run_study_on(
    spec: &StudySpec,
    parameters: Vec<ModelParams>,
    settings: &OptimizerSettings,
) -> Result<StudyOutcome> {
    spec.validate()?;
    if parameters.is_empty() {
        return Err(DesignError::InvalidSpace(
            "at least one draw is required".into(),
        ));
    }
    for theta in &parameters {
        if theta.periods() != spec.periods {
            return Err(DesignError::DimensionMismatch(format!(
                "theta has {} period effects, study uses {}",
                theta.periods(),
                spec.periods
            )));
        }
        theta.validate()?;
    }
    let universe = TreatmentSequence::universe(spec.periods)?;

    // Estimability depends only on the support, not on theta.
    let probe = Objective::new(&problem_for(spec, universe.clone(), &parameters[0], None))?;
    let estimable = spec
        .designs
        .iter()
        .map(|d| {
            let w = embed(
                &universe,
                &d.support,
                &vec![1.0 / d.support.len() as f64; d.support.len()],
            );
            Ok(probe.value(&w)?.is_some())
        })
        .collect::<Result<Vec<bool>>>()?;
    if probe
        .value(&vec![1.0 / universe.len() as f64; universe.len()])?
        .is_none()
    {
        return Err(DesignError::NotEstimable {
            context: format!("full {}-period universe", spec.periods),
        });
    }

    let draws: Vec<DrawResult> = parameters
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            run_draw(spec, &universe, &estimable, theta, settings)
                .map_err(|e| annotate(e, i, theta))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut efficiencies = vec![Vec::new(); spec.designs.len()];
    for (d, eff) in efficiencies.iter_mut().enumerate() {
        if estimable[d] {
            *eff = draws.iter().map(|r| r.efficiencies[d]).collect();
        }
    }
    if let Some((d, i, e)) = efficiencies
        .iter()
        .enumerate()
        .flat_map(|(d, v)| v.iter().enumerate().map(move |(i, e)| (d, i, *e)))
        .find(|(_, _, e)| *e > 1.0 + EFFICIENCY_SLACK)
    {
        if spec.optimum == OptimumObjective::Sandwich {
            return Err(DesignError::NumericalFailure(format!(
                "design {} has efficiency {e} > 1 at draw {i}; the reference optimum is not optimal",
                spec.designs[d].name
            )));
        }
    }

    let designs = spec
        .designs
        .iter()
        .enumerate()
        .map(|(d, entry)| {
            let eff = &efficiencies[d];
            let (min_eff, median_eff) = if estimable[d] {
                let min = eff.iter().copied().fold(f64::INFINITY, f64::min);
                (Some(round_sig12(min)), Some(round_sig12(median(eff))))
            } else {
                (None, None)
            };
            let mean = (estimable[d] && entry.allocation == Allocation::Optimized).then(|| {
                mean_weights(
                    &entry.support,
                    draws
                        .iter()
                        .map(|r| r.design_weights[d].clone().expect("optimized weights")),
                    draws.len(),
                )
            });
            DesignSummary {
                name: entry.name.clone(),
                support: entry.support.clone(),
                allocation: entry.allocation,
                estimable: estimable[d],
                min_eff,
                median_eff,
                mean_weights: mean,
            }
        })
        .collect();

    let report = EfficiencyReport {
        space: spec.space.name.clone(),
        periods: spec.periods,
        carryover: spec.form.include_carryover,
        correlation: spec.correlation_label(),
        target: spec.target,
        draws: draws.len(),
        seed: spec.seed,
        eff_exponent: spec.exponent(),
        optimum_objective: spec.optimum,
        designs,
        average_optimal_allocation: mean_weights(
            &universe,
            draws.iter().map(|r| r.optimal_weights.clone()),
            draws.len(),
        ),
    };
    Ok(StudyOutcome {
        report,
        parameters,
        efficiencies,
        optimal_weights: draws.iter().map(|r| r.optimal_weights.clone()).collect(),
        optimal_variances: draws.iter().map(|r| r.optimal_variance).collect(),
    })
}

fn annotate(e: DesignError, index: usize, theta: &ModelParams) -> DesignError {
    match e {
        DesignError::NumericalFailure(msg) => {
            DesignError::NumericalFailure(format!("draw {index} (theta {theta:?}): {msg}"))
        }
        DesignError::NotEstimable { context } => DesignError::NotEstimable {
            context: format!("draw {index}: {context}"),
        },
        other => other,
    }
}

/// Compound-symmetric working correlation against an AR(1) truth, both with
/// the space's alpha, scored with the sandwich variance.
pub fn misspecification_study(
    space: &ParameterSpace,
    periods: usize,
    designs: Vec<DesignCatalogEntry>,
    n_draws: usize,
    seed: u64,
) -> Result<StudyOutcome> {
    let mut spec = StudySpec::new(
        space.clone(),
        periods,
        ModelForm::CARRYOVER,
        WorkingCorrelation::compound_symmetric(space.alpha),
        ContrastTarget::Direct,
        designs,
    );
    spec.truth = Some(WorkingCorrelation::ar1(space.alpha));
    spec.draws = n_draws;
    spec.seed = seed;
    run_study(&spec)
}

/// Two-period, no-carryover comparison of `{AB, BA}` against
/// `{AB, AA, BA, BB}` over the asthma-trial box.
pub fn senn_study(n_draws: usize, seed: u64, work: WorkingCorrelation) -> Result<StudyOutcome> {
    let mut spec = StudySpec::new(
        ParameterSpace::builtin("senn").expect("built-in space"),
        2,
        ModelForm::NO_CARRYOVER,
        work,
        ContrastTarget::Direct,
        catalog(2),
    );
    spec.draws = n_draws;
    spec.seed = seed;
    run_study(&spec)
}
