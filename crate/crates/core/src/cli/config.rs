use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arm, EstimandKind, EstimandSpec, DEFAULT_EPS, DEFAULT_FOLDS};
use crate::nuisance::{NoiseMode, NuisanceSpecs};
use crate::sensitivity::DEFAULT_CURVE_POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Estimate,
    Simulate,
    Sensitivity,
    QuadraticCompare,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Estimate => "estimate",
            Command::Simulate => "simulate",
            Command::Sensitivity => "sensitivity",
            Command::QuadraticCompare => "quadratic-compare",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ArmArg {
    #[serde(rename = "0")]
    #[value(name = "0")]
    Control,
    #[serde(rename = "1")]
    #[value(name = "1")]
    Treated,
    #[serde(rename = "contrast")]
    #[value(name = "contrast")]
    Contrast,
}

impl ArmArg {
    pub fn arm(self) -> Arm {
        match self {
            ArmArg::Control => Arm::Control,
            ArmArg::Treated => Arm::Treated,
            ArmArg::Contrast => Arm::Contrast,
        }
    }
}

pub(crate) fn arm_label(arm: Arm) -> &'static str {
    match arm {
        Arm::Control => "0",
        Arm::Treated => "1",
        Arm::Contrast => "contrast",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Ge,
    Tr,
}

impl KindArg {
    pub fn kind(self) -> EstimandKind {
        match self {
            KindArg::Ge => EstimandKind::Generalization,
            KindArg::Tr => EstimandKind::Transportation,
        }
    }
}

pub(crate) fn kind_label(kind: EstimandKind) -> &'static str {
    match kind {
        EstimandKind::Generalization => "ge",
        EstimandKind::Transportation => "tr",
    }
}

/// Flat run configuration. Every field may be omitted in the file; missing
/// values are filled per command by [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub arm: Option<ArmArg>,
    pub kind: Option<KindArg>,
    pub eps: Option<f64>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub curve_points: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    pub alpha_grid: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub noise: Option<NoiseMode>,
    pub k_basis: Option<Vec<usize>>,
    pub gram_n: Option<usize>,
    pub fixed_nuisances: Option<bool>,
    pub learners: Option<NuisanceSpecs>,
}

macro_rules! overlay {
    ($self:ident, $other:ident, $($f:ident),*) => {
        $( if $other.$f.is_some() { $self.$f = $other.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("invalid run configuration: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read configuration {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
    }

    /// Values set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(
            self,
            other,
            command,
            source,
            target,
            schema,
            out,
            arm,
            kind,
            eps,
            folds,
            seed,
            delta1,
            delta2,
            curve_points,
            n_grid,
            alpha_grid,
            reps,
            estimators,
            noise,
            k_basis,
            gram_n,
            fixed_nuisances,
            learners
        );
    }

    /// Fills the defaults relevant to `command`, drops settings that do not
    /// apply to it and validates the result.
    pub fn resolve(&self, command: Command) -> Result<RunConfig> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::Config(format!(
                    "configuration is for '{c}' but the '{command}' subcommand was run"
                )));
            }
        }
        let mut r = RunConfig {
            command: Some(command),
            out: Some(self.out.clone().unwrap_or_else(|| PathBuf::from("out"))),
            seed: Some(self.seed.unwrap_or(1)),
            ..RunConfig::default()
        };
        let data_command = matches!(command, Command::Estimate | Command::Sensitivity);
        if data_command {
            for (name, v) in [
                ("source", &self.source),
                ("target", &self.target),
                ("schema", &self.schema),
            ] {
                if v.is_none() {
                    return Err(Error::Config(format!("'{command}' needs --{name}")));
                }
            }
            r.source = self.source.clone();
            r.target = self.target.clone();
            r.schema = self.schema.clone();
            r.kind = Some(self.kind.unwrap_or(KindArg::Tr));
            r.eps = Some(self.eps.unwrap_or(DEFAULT_EPS));
            r.folds = Some(self.folds.unwrap_or(DEFAULT_FOLDS));
            r.learners = Some(self.learners.clone().unwrap_or_default());
        }
        match command {
            Command::Estimate => {}
            Command::Sensitivity => {
                r.arm = Some(self.arm.unwrap_or(ArmArg::Contrast));
                r.delta1 = Some(self.delta1.unwrap_or(0.0));
                r.delta2 = Some(self.delta2.unwrap_or(0.0));
                r.curve_points = Some(self.curve_points.unwrap_or(DEFAULT_CURVE_POINTS));
            }
            Command::Simulate => {
                let d = crate::simulation::StudyConfig::default();
                r.n_grid = Some(self.n_grid.clone().unwrap_or(d.n_grid));
                r.alpha_grid = Some(self.alpha_grid.clone().unwrap_or(d.alpha_grid));
                r.reps = Some(self.reps.unwrap_or(d.replications));
                r.estimators = Some(self.estimators.clone().unwrap_or(d.estimators));
                r.noise = Some(self.noise.unwrap_or(d.noise));
                r.k_basis = self.k_basis.clone();
            }
            Command::QuadraticCompare => {
                let d = crate::simulation::QrCompareConfig::default();
                r.n_grid = Some(self.n_grid.clone().unwrap_or(d.n_grid));
                r.alpha_grid = Some(self.alpha_grid.clone().unwrap_or(d.alpha_grid));
                r.reps = Some(self.reps.unwrap_or(d.replications));
                r.k_basis = Some(self.k_basis.clone().unwrap_or(d.k_grid));
                r.kind = Some(self.kind.unwrap_or(KindArg::Ge));
                r.noise = Some(self.noise.unwrap_or(d.noise));
                r.gram_n = self.gram_n;
                r.fixed_nuisances = Some(self.fixed_nuisances.unwrap_or(d.fixed_nuisances));
            }
        }
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps < 0.5) {
                return Err(Error::Config(format!(
                    "eps must lie in (0, 0.5), got {eps}"
                )));
            }
        }
        if let Some(k) = self.folds {
            if k < 2 {
                return Err(Error::Config(format!("folds must be at least 2, got {k}")));
            }
        }
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if let Some(d) = v {
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::Config(format!(
                        "{name} must be finite and nonnegative, got {d}"
                    )));
                }
            }
        }
        if let Some(p) = self.curve_points {
            if p < 2 {
                return Err(Error::Config(format!(
                    "curve_points must be at least 2, got {p}"
                )));
            }
        }
        if self.reps == Some(0) {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if let Some(l) = &self.learners {
            l.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("out"))
    }

    pub fn estimand(&self) -> EstimandSpec {
        EstimandSpec::new(
            self.kind.unwrap_or(KindArg::Tr).kind(),
            self.arm.unwrap_or(ArmArg::Contrast).arm(),
        )
    }
}
