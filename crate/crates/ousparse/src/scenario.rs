//! Declarative experiment configuration: JSON schema, validation, sweep
//! expansion, and the canonical content hash stamped on every output row.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SolverConfig;
use crate::levy::{JumpKind, JumpSpec, LevyModel};
use crate::tuning::{CvConfig, TailClass};

/// Which drift estimators a scenario runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Lasso,
    Slope,
    TruncatedMle,
    TrueMle,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::Slope => "slope",
            EstimatorKind::TruncatedMle => "truncated_mle",
            EstimatorKind::TrueMle => "true_mle",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(EstimatorKind::Lasso),
            "slope" => Ok(EstimatorKind::Slope),
            "truncated_mle" => Ok(EstimatorKind::TruncatedMle),
            "true_mle" => Ok(EstimatorKind::TrueMle),
            other => Err(Error::Config(format!(
                "unknown estimator {other:?}; expected lasso, slope, truncated_mle, or true_mle"
            ))),
        }
    }
}

/// Brownian component of the driving noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    /// `Σ = scale · I`.
    ScaledIdentity { scale: f64 },
    /// Explicit `Σ` rows.
    Matrix { rows: Vec<Vec<f64>> },
}

/// Jump component of the driving noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpsSpec {
    None,
    Laplace { scale: f64, intensity: f64 },
    SymmetricPareto { alpha: f64, x_min: f64, intensity: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub sigma: SigmaSpec,
    pub jumps: JumpsSpec,
}

impl ModelSpec {
    /// Instantiates the noise model at dimension `d`.
    pub fn build(&self, d: usize) -> Result<LevyModel> {
        let sigma = match &self.sigma {
            SigmaSpec::ScaledIdentity { scale } => {
                if !scale.is_finite() || *scale < 0.0 {
                    return Err(Error::Config(format!(
                        "sigma scale must be a nonnegative finite number, got {scale}"
                    )));
                }
                Array2::eye(d) * *scale
            }
            SigmaSpec::Matrix { rows } => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!(
                        "sigma matrix must be {d}x{d} to match the scenario dimension"
                    )));
                }
                let mut m = Array2::<f64>::zeros((d, d));
                for (i, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        m[[i, j]] = *v;
                    }
                }
                m
            }
        };
        let jumps = match &self.jumps {
            JumpsSpec::None => JumpSpec::new(JumpKind::None, 0.0)?,
            JumpsSpec::Laplace { scale, intensity } => {
                JumpSpec::new(JumpKind::Laplace { scale: *scale }, *intensity)?
            }
            JumpsSpec::SymmetricPareto {
                alpha,
                x_min,
                intensity,
            } => JumpSpec::new(
                JumpKind::SymmetricPareto {
                    alpha: *alpha,
                    x_min: *x_min,
                },
                *intensity,
            )?,
        };
        LevyModel::new(sigma, jumps)
    }
}

/// Tail-class description for the theoretical truncation level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailClassSpec {
    Continuous,
    BoundedJumps { a0: f64 },
    SubWeibull { alpha: f64, c_alpha: f64 },
    PolyMoment { p: f64 },
}

impl TailClassSpec {
    pub fn to_tail_class(self) -> TailClass {
        match self {
            TailClassSpec::Continuous => TailClass::Continuous,
            TailClassSpec::BoundedJumps { a0 } => TailClass::BoundedJumps { a0 },
            TailClassSpec::SubWeibull { alpha, c_alpha } => {
                TailClass::SubWeibull { alpha, c_alpha }
            }
            TailClassSpec::PolyMoment { p } => TailClass::PolyMoment { p },
        }
    }
}

/// How the truncation levels `b` and `η` are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruncationSpec {
    /// Smallest levels whose filters each drop at most `target_fraction`
    /// of the windows.
    Auto { target_fraction: f64 },
    /// Fixed levels; the `b` and `eta` sweep parameters override these.
    Fixed { b: f64, eta: f64 },
    /// `η` from the tail-dependent closed form (needs the generating
    /// model, so simulation only); `b` stays user-chosen.
    Theoretical {
        b: f64,
        tail_class: TailClassSpec,
        delta_exponent: f64,
    },
}

/// How the penalty levels are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TuningSpec {
    /// Consecutive-split cross-validation.
    Cv {
        #[serde(default)]
        train_fraction: Option<f64>,
        #[serde(default)]
        grid: Option<Vec<f64>>,
    },
    /// One fixed level for every penalized estimator.
    Fixed { lambda: f64 },
    /// Closed-form levels from the oracle bounds (needs the generating
    /// model, so simulation only).
    Theoretical {
        c_star: f64,
        #[serde(default = "default_mc_draws")]
        mc_draws: usize,
    },
}

fn default_mc_draws() -> usize {
    1_000_000
}

impl TuningSpec {
    pub fn cv_config(&self) -> Result<Option<CvConfig>> {
        match self {
            TuningSpec::Cv {
                train_fraction,
                grid,
            } => {
                let mut cfg = CvConfig::default();
                if let Some(tf) = train_fraction {
                    cfg.train_fraction = *tf;
                }
                if let Some(g) = grid {
                    cfg.grid = g.clone();
                }
                Ok(Some(cfg))
            }
            _ => Ok(None),
        }
    }
}

/// Scenario field a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    D,
    NObs,
    DeltaN,
    B,
    Eta,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::D => "d",
            SweepParam::NObs => "n_obs",
            SweepParam::DeltaN => "delta_n",
            SweepParam::B => "b",
            SweepParam::Eta => "eta",
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_dt_fine() -> f64 {
    1e-2
}

fn default_value_range() -> (f64, f64) {
    (-0.5, 0.5)
}

fn default_solver() -> SolverSpec {
    SolverSpec {
        max_iters: 10_000,
        rel_tol: 1e-8,
    }
}

/// Optimizer budget; mirrors the solver defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl SolverSpec {
    pub fn to_config(self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One self-contained experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub d: usize,
    pub s: usize,
    pub big_t: f64,
    pub n_obs: usize,
    #[serde(default = "default_dt_fine")]
    pub dt_fine: f64,
    #[serde(default = "default_value_range")]
    pub value_range: (f64, f64),
    pub model: ModelSpec,
    pub truncation: TruncationSpec,
    pub estimators: Vec<EstimatorKind>,
    pub tuning: TuningSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_solver")]
    pub solver: SolverSpec,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the base configuration and every sweep-expanded variant.
    pub fn validate(&self) -> Result<()> {
        self.validate_applied()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep values must be nonempty".into()));
            }
            for &value in &sweep.values {
                let applied = self.apply_sweep(sweep.param, value)?;
                applied.validate_applied().map_err(|e| {
                    Error::Config(format!(
                        "sweep {} = {value} produces an invalid scenario: {e}",
                        sweep.param
                    ))
                })?;
            }
        }
        Ok(())
    }

    /// Field checks that must hold for a directly runnable configuration.
    fn validate_applied(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.s < self.d || self.s > self.d * self.d {
            return Err(Error::Config(format!(
                "sparsity must satisfy d <= s <= d², got s = {} for d = {}",
                self.s, self.d
            )));
        }
        if !(self.big_t > 0.0) || !self.big_t.is_finite() {
            return Err(Error::Config(format!(
                "big_t must be positive, got {}",
                self.big_t
            )));
        }
        if self.n_obs < 1 {
            return Err(Error::Config("n_obs must be at least 1".into()));
        }
        if !(self.dt_fine > 0.0) || !self.dt_fine.is_finite() {
            return Err(Error::Config(format!(
                "dt_fine must be positive, got {}",
                self.dt_fine
            )));
        }
        let steps = (self.big_t / self.dt_fine).round() as usize;
        if steps < self.n_obs {
            return Err(Error::Config(format!(
                "n_obs = {} exceeds the {} fine steps on [0, {}] at dt_fine = {}",
                self.n_obs, steps, self.big_t, self.dt_fine
            )));
        }
        let (lo, hi) = self.value_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!(
                "value_range must be a finite interval with lo < hi, got ({lo}, {hi})"
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        match &self.truncation {
            TruncationSpec::Auto { target_fraction } => {
                if !(*target_fraction > 0.0 && *target_fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "auto truncation target fraction must lie in (0, 1), got {target_fraction}"
                    )));
                }
            }
            TruncationSpec::Fixed { b, eta } => {
                if !(*b > 0.0) || b.is_nan() || !(*eta > 0.0) || eta.is_nan() {
                    return Err(Error::Config(format!(
                        "fixed truncation levels must be positive, got b = {b}, eta = {eta}"
                    )));
                }
            }
            TruncationSpec::Theoretical {
                b,
                delta_exponent,
                ..
            } => {
                if !(*b > 0.0) || b.is_nan() {
                    return Err(Error::Config(format!(
                        "theoretical truncation still needs a positive b, got {b}"
                    )));
                }
                if !(*delta_exponent > 0.0) || !delta_exponent.is_finite() {
                    return Err(Error::Config(format!(
                        "growth exponent must be positive, got {delta_exponent}"
                    )));
                }
                if !(self.big_t > 1.0) {
                    return Err(Error::Config(
                        "theoretical truncation needs big_t > 1 so log(T) is positive".into(),
                    ));
                }
            }
        }
        match &self.tuning {
            TuningSpec::Cv { .. } => {
                self.tuning
                    .cv_config()?
                    .expect("cv mode yields a config")
                    .validate()?;
            }
            TuningSpec::Fixed { lambda } => {
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return Err(Error::Config(format!(
                        "fixed lambda must be nonnegative and finite, got {lambda}"
                    )));
                }
            }
            TuningSpec::Theoretical { c_star, mc_draws } => {
                if !(*c_star > 0.0) || !c_star.is_finite() {
                    return Err(Error::Config(format!(
                        "c_star must be positive, got {c_star}"
                    )));
                }
                if *mc_draws == 0 {
                    return Err(Error::Config("mc_draws must be positive".into()));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if matches!(sweep.param, SweepParam::B | SweepParam::Eta)
                && !matches!(self.truncation, TruncationSpec::Fixed { .. })
            {
                return Err(Error::Config(
                    "sweeping b or eta requires fixed-mode truncation".into(),
                ));
            }
        }
        self.solver.to_config()?;
        self.model.build(self.d)?;
        Ok(())
    }

    /// Returns a copy with one sweep value substituted in. The sweep field
    /// itself is preserved so the hash stays that of the parent scenario.
    pub fn apply_sweep(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut applied = self.clone();
        let as_count = |value: f64, what: &str| -> Result<usize> {
            if !(value >= 1.0) || value.fract() != 0.0 || !value.is_finite() {
                return Err(Error::Config(format!(
                    "sweep value for {what} must be a positive integer, got {value}"
                )));
            }
            Ok(value as usize)
        };
        match param {
            SweepParam::D => applied.d = as_count(value, "d")?,
            SweepParam::NObs => applied.n_obs = as_count(value, "n_obs")?,
            SweepParam::DeltaN => {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::Config(format!(
                        "sweep value for delta_n must be positive, got {value}"
                    )));
                }
                let n = (self.big_t / value).round();
                if n < 1.0 {
                    return Err(Error::Config(format!(
                        "delta_n = {value} leaves no observation windows on [0, {}]",
                        self.big_t
                    )));
                }
                applied.n_obs = n as usize;
            }
            SweepParam::B => match &mut applied.truncation {
                TruncationSpec::Fixed { b, .. } => *b = value,
                _ => {
                    return Err(Error::Config(
                        "sweeping b requires fixed-mode truncation".into(),
                    ))
                }
            },
            SweepParam::Eta => match &mut applied.truncation {
                TruncationSpec::Fixed { eta, .. } => *eta = value,
                _ => {
                    return Err(Error::Config(
                        "sweeping eta requires fixed-mode truncation".into(),
                    ))
                }
            },
        }
        Ok(applied)
    }

    /// Canonical serialization: fields in declaration order, independent
    /// of the key order in the source file.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Content hash of the canonical serialization (hex SHA-256).
    pub fn hash(&self) -> Result<String> {
        Ok(crate::util::sha256_hex(self.canonical_json()?.as_bytes()))
    }
}
