//! Study configuration shared by the JSON config file and command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationKind, WorkingCorrelation};
use crate::design::{ModelForm, ModelParams};
use crate::error::{DesignError, Result};
use crate::gee::ContrastTarget;
use crate::study::{
    catalog, resolve_design, OptimumObjective, ParameterSpace, StudySpec, DEFAULT_DRAWS,
};

/// A built-in space name or a full inline box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceRef {
    Name(String),
    Inline(ParameterSpace),
}

impl SpaceRef {
    pub fn resolve(&self) -> Result<ParameterSpace> {
        match self {
            SpaceRef::Name(n) => ParameterSpace::builtin(n)
                .ok_or_else(|| DesignError::Config(format!("unknown parameter space {n:?}"))),
            SpaceRef::Inline(s) => Ok(s.clone()),
        }
    }
}

/// A correlation whose alpha may be left to the parameter space.
///
/// Written either as text (`ind`, `cs`, `ar1:0.4`) or as
/// `{"kind": "cs", "alpha": 0.4}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRef {
    pub kind: CorrelationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl CorrelationRef {
    pub fn resolve(&self, space_alpha: f64) -> WorkingCorrelation {
        match self.kind {
            CorrelationKind::Independent => WorkingCorrelation::INDEPENDENT,
            CorrelationKind::CompoundSymmetric => {
                WorkingCorrelation::compound_symmetric(self.alpha.unwrap_or(space_alpha))
            }
            CorrelationKind::Ar1 => WorkingCorrelation::ar1(self.alpha.unwrap_or(space_alpha)),
        }
    }
}

impl FromStr for CorrelationRef {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, alpha) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s, None),
        };
        let kind = match kind.to_ascii_lowercase().as_str() {
            "ind" | "independent" => CorrelationKind::Independent,
            "cs" => CorrelationKind::CompoundSymmetric,
            "ar1" => CorrelationKind::Ar1,
            other => {
                return Err(DesignError::InvalidCorrelation(format!(
                    "unknown correlation kind {other:?}"
                )))
            }
        };
        let alpha = alpha
            .map(|a| {
                a.trim().parse::<f64>().map_err(|e| {
                    DesignError::InvalidCorrelation(format!("bad alpha in {s:?}: {e}"))
                })
            })
            .transpose()?;
        Ok(Self { kind, alpha })
    }
}

impl fmt::Display for CorrelationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.alpha {
            Some(a) => write!(f, "{}:{a}", self.kind.label()),
            None => f.write_str(self.kind.label()),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CorrelationInput {
    Text(String),
    Object {
        kind: CorrelationKind,
        #[serde(default)]
        alpha: Option<f64>,
    },
}

fn deserialize_correlation<'de, D>(d: D) -> std::result::Result<Option<CorrelationRef>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let input: Option<CorrelationInput> = Option::deserialize(d)?;
    input
        .map(|i| match i {
            CorrelationInput::Text(s) => s.parse().map_err(serde::de::Error::custom),
            CorrelationInput::Object { kind, alpha } => Ok(CorrelationRef { kind, alpha }),
        })
        .transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Guesses the format from a file extension; CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

impl FromStr for OutputFormat {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(DesignError::Config(format!(
                "unknown output format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

/// Every field is optional so a file and a set of flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub periods: Option<usize>,
    pub carryover: Option<bool>,
    pub space: Option<SpaceRef>,
    #[serde(deserialize_with = "deserialize_correlation")]
    pub correlation: Option<CorrelationRef>,
    #[serde(deserialize_with = "deserialize_correlation")]
    pub truth: Option<CorrelationRef>,
    pub target: Option<ContrastTarget>,
    pub designs: Option<Vec<String>>,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<OutputSpec>,
    pub eff_exponent: Option<usize>,
    pub optimum: Option<OptimumObjective>,
    pub threads: Option<usize>,
}

macro_rules! take_some {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field; } )*
    };
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DesignError::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DesignError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overridden_by(mut self, other: StudyConfig) -> Self {
        take_some!(
            self,
            other,
            periods,
            carryover,
            space,
            correlation,
            truth,
            target,
            designs,
            draws,
            seed,
            eff_exponent,
            optimum,
            threads
        );
        if let Some(o) = other.output {
            let mut out = self.output.unwrap_or_default();
            if o.path.is_some() {
                out.path = o.path;
            }
            if o.format.is_some() {
                out.format = o.format;
            }
            self.output = Some(out);
        }
        self
    }

    pub fn output_path(&self) -> Option<&Path> {
        self.output.as_ref().and_then(|o| o.path.as_deref())
    }

    /// Explicit format, else the output file's extension, else CSV.
    pub fn output_format(&self) -> OutputFormat {
        let out = self.output.as_ref();
        out.and_then(|o| o.format)
            .or_else(|| {
                out.and_then(|o| o.path.as_deref())
                    .map(OutputFormat::from_path)
            })
            .unwrap_or(OutputFormat::Csv)
    }

    pub fn to_spec(&self) -> Result<StudySpec> {
        let periods = self
            .periods
            .ok_or_else(|| DesignError::Config("periods is required".into()))?;
        let space = self
            .space
            .as_ref()
            .ok_or_else(|| DesignError::Config("space is required".into()))?
            .resolve()?;
        let work = self
            .correlation
            .ok_or_else(|| DesignError::Config("correlation is required".into()))?
            .resolve(space.alpha);
        let truth = self.truth.map(|t| t.resolve(space.alpha));
        let form = if self.carryover.unwrap_or(true) {
            ModelForm::CARRYOVER
        } else {
            ModelForm::NO_CARRYOVER
        };
        let designs = match &self.designs {
            Some(names) => names
                .iter()
                .map(|n| resolve_design(n, periods))
                .collect::<Result<Vec<_>>>()?,
            None => catalog(periods),
        };
        if designs.is_empty() {
            return Err(DesignError::Config(format!(
                "no designs given and there is no built-in catalog for {periods} periods"
            )));
        }
        let mut spec = StudySpec::new(
            space,
            periods,
            form,
            work,
            self.target.unwrap_or(ContrastTarget::Direct),
            designs,
        );
        spec.truth = truth;
        spec.draws = self.draws.unwrap_or(DEFAULT_DRAWS);
        spec.seed = self.seed.unwrap_or(0);
        spec.eff_exponent = self.eff_exponent;
        spec.optimum = self.optimum.unwrap_or_default();
        Ok(spec)
    }
}

/// Parses a parameter value from JSON (`{"mu": .., "beta": [..], ..}`), the
/// word `zero`, or a comma list in packed order `mu,beta_1..beta_p,tau[,rho]`.
pub fn parse_theta(text: &str, periods: usize, form: ModelForm) -> Result<ModelParams> {
    let text = text.trim();
    let theta = if text.starts_with('{') {
        serde_json::from_str::<ModelParams>(text)
            .map_err(|e| DesignError::Config(format!("theta: {e}")))?
    } else if text.eq_ignore_ascii_case("zero") {
        ModelParams::zero(periods)
    } else {
        let values = text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| DesignError::Config(format!("theta entry {v:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let with_rho = periods + 3;
        let rho = match values.len() {
            n if n == with_rho => values[with_rho - 1],
            n if n == with_rho - 1 && !form.include_carryover => 0.0,
            n => {
                return Err(DesignError::Config(format!(
                    "theta needs {} comma-separated values for {periods} periods, got {n}",
                    if form.include_carryover {
                        with_rho
                    } else {
                        with_rho - 1
                    }
                )))
            }
        };
        ModelParams::new(
            values[0],
            values[1..=periods].to_vec(),
            values[periods + 1],
            rho,
        )?
    };
    if theta.periods() != periods {
        return Err(DesignError::DimensionMismatch(format!(
            "theta has {} period effects, expected {periods}",
            theta.periods()
        )));
    }
    theta.validate()?;
    Ok(theta)
}
