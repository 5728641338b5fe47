//! Experiment configuration: a TOML file, validated in full before any run.
//!
//! Every section is optional and falls back to the constant-market demo.
//! See `configs/` for annotated examples.

use std::path::Path;

use constrained_growth::market::{OuStochVol, VolMap};
use constrained_growth::verification::challengers;
use constrained_growth::{ConstraintPair, Limit, MarketModel, MarketPoint, RiskMeasure, RiskParams, SimConfig, StrategyRule};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn field_err(field: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub market: MarketConfig,
    pub constraint: ConstraintConfig,
    pub strategies: Vec<String>,
    pub sim: SimSection,
    pub outputs: OutputConfig,
    pub checks: Vec<String>,
    pub risk: RiskGrid,
    pub delta: DeltaGrid,
    pub project: ProjectSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            market: MarketConfig::default(),
            constraint: ConstraintConfig::default(),
            strategies: vec!["merton".into(), "relative_projected".into()],
            sim: SimSection::default(),
            outputs: OutputConfig::default(),
            checks: Vec::new(),
            risk: RiskGrid::default(),
            delta: DeltaGrid::default(),
            project: ProjectSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketConfig {
    Constant {
        r: f64,
        mu: VectorSpec,
        sigma: MatrixSpec,
    },
    Sinusoidal {
        r: f64,
        mu: f64,
        mu_amp: f64,
        sigma: f64,
        sigma_amp: f64,
        period: f64,
    },
    Ou {
        r: f64,
        mu: f64,
        nu: f64,
        #[serde(default)]
        vbar: f64,
        #[serde(default)]
        rho: f64,
        #[serde(default = "default_vol_lo")]
        vol_lo: f64,
        #[serde(default = "default_vol_hi")]
        vol_hi: f64,
        #[serde(default)]
        v0: f64,
    },
}

fn default_vol_lo() -> f64 {
    0.1
}

fn default_vol_hi() -> f64 {
    0.6
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self::Constant {
            r: 0.03,
            mu: VectorSpec::Scalar(0.05),
            sigma: MatrixSpec::Scalar(0.2),
        }
    }
}

impl MarketConfig {
    pub fn r(&self) -> f64 {
        match self {
            Self::Constant { r, .. } | Self::Sinusoidal { r, .. } | Self::Ou { r, .. } => *r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureName {
    Var,
    Tvar,
    Lel,
}

impl From<MeasureName> for RiskMeasure {
    fn from(m: MeasureName) -> Self {
        match m {
            MeasureName::Var => RiskMeasure::VaR,
            MeasureName::Tvar => RiskMeasure::TVaR,
            MeasureName::Lel => RiskMeasure::LEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitKind {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    pub measure: MeasureName,
    pub alpha: f64,
    /// Horizon in years; defaults to ten trading days.
    pub tau: f64,
    /// Rate used inside the risk measure; defaults to the market's `r`.
    pub r: Option<f64>,
    pub limit_kind: LimitKind,
    pub limit: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            measure: MeasureName::Var,
            alpha: 0.05,
            tau: 10.0 / 252.0,
            r: None,
            limit_kind: LimitKind::Relative,
            limit: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub x0_wealth: f64,
    pub record_stride: usize,
    pub noise_substeps: usize,
    /// Fraction of the horizon dropped before estimating growth.
    pub burn_in: f64,
    /// Gauss-Hermite nodes (OU) or phase samples (periodic) for targets.
    pub quadrature_nodes: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: 1000.0,
            dt: 0.01,
            paths: 20,
            x0_wealth: 1.0,
            record_stride: 100,
            noise_substeps: 1,
            burn_in: 0.0,
            quadrature_nodes: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: Format,
    /// Output file; standard output when absent.
    pub path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskGrid {
    pub measures: Vec<MeasureName>,
    pub wealths: Vec<f64>,
    pub zeta_mu: Vec<f64>,
    pub zeta_sigma: Vec<f64>,
    /// Monte Carlo samples per row; 0 skips the oracle.
    pub oracle_samples: usize,
}

impl Default for RiskGrid {
    fn default() -> Self {
        Self {
            measures: vec![MeasureName::Var, MeasureName::Tvar, MeasureName::Lel],
            wealths: vec![1.0, 10.0],
            zeta_mu: vec![0.0, 0.05],
            zeta_sigma: vec![0.0, 0.2],
            oracle_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeltaGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_steps: usize,
    pub wealths: Vec<f64>,
}

impl Default for DeltaGrid {
    fn default() -> Self {
        Self {
            lambda_min: 0.05,
            lambda_max: 3.0,
            lambda_steps: 60,
            wealths: vec![1.0, 10.0, 1e3, 1e6],
        }
    }
}

impl DeltaGrid {
    pub fn lambdas(&self) -> Vec<f64> {
        if self.lambda_steps == 1 {
            return vec![self.lambda_min];
        }
        let h = (self.lambda_max - self.lambda_min) / (self.lambda_steps - 1) as f64;
        (0..self.lambda_steps).map(|k| self.lambda_min + h * k as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectSection {
    pub instances: usize,
    pub max_assets: usize,
    pub max_factors: usize,
    pub wealth_min: f64,
    pub wealth_max: f64,
}

impl Default for ProjectSection {
    fn default() -> Self {
        Self {
            instances: 12,
            max_assets: 3,
            max_factors: 4,
            wealth_min: 2.5,
            wealth_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub quick: bool,
}

pub const CHECKS: [&str; 11] = [
    "risk_oracle",
    "delta_reference",
    "delta_monotone",
    "projection_oracle",
    "growth_target",
    "naive_constant",
    "ergodic",
    "coalescence",
    "supermartingale",
    "log_dominance",
    "dominance",
];

/// A validated configuration with the core objects built.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: MarketModel,
    pub pair: ConstraintPair,
    pub params: RiskParams,
    pub rules: Vec<StrategyRule>,
    pub sim: SimConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    ConfigError(format!("line {line}: {msg}"))
                }
                None => ConfigError(msg),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// SHA-256 over the canonical JSON form, excluding output routing.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.outputs = OutputConfig::default();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build(self) -> Result<Experiment, ConfigError> {
        let model = build_market(&self.market)?;
        let c = &self.constraint;
        let r = c.r.unwrap_or(self.market.r());
        let params = RiskParams::new(c.alpha, c.tau, r).map_err(|e| field_err("constraint", e))?;
        let limit = match c.limit_kind {
            LimitKind::Relative => Limit::Relative { limit: c.limit },
            LimitKind::Absolute => Limit::Absolute { limit: c.limit },
        };
        let pair = ConstraintPair::new(c.measure.into(), limit, params).map_err(|e| field_err("constraint", e))?;

        let rules = self
            .strategies
            .iter()
            .enumerate()
            .map(|(i, s)| parse_strategy(s).map_err(|e| field_err(&format!("strategies[{i}]"), e.0)))
            .collect::<Result<Vec<_>, _>>()?;
        if rules.is_empty() {
            return Err(field_err("strategies", "at least one strategy is required"));
        }
        if !pair.is_relative() {
            if let Some(i) = rules.iter().position(|r| matches!(r, StrategyRule::RelativeProjected)) {
                return Err(field_err(&format!("strategies[{i}]"), "relative_projected needs limit_kind = \"relative\""));
            }
        }
        for (i, name) in self.checks.iter().enumerate() {
            if !CHECKS.contains(&name.as_str()) {
                return Err(field_err(
                    &format!("checks[{i}]"),
                    format!("unknown check '{name}' (known: {})", CHECKS.join(", ")),
                ));
            }
        }
        if !pair.is_relative() && self.checks.iter().any(|c| c == "supermartingale" || c == "log_dominance") {
            return Err(field_err("checks", "supermartingale and log_dominance need a relative constraint"));
        }

        let s = &self.sim;
        let sim = SimConfig {
            horizon: s.horizon,
            dt: s.dt,
            paths: s.paths,
            seed: self.seed,
            x0_wealth: s.x0_wealth,
            record_stride: s.record_stride,
            noise_substeps: s.noise_substeps,
        };
        sim.validate().map_err(|e| field_err("sim", e))?;
        if !(0.0..1.0).contains(&s.burn_in) {
            return Err(field_err("sim.burn_in", format!("must lie in [0, 1), got {}", s.burn_in)));
        }
        if s.quadrature_nodes < 2 {
            return Err(field_err("sim.quadrature_nodes", "need at least 2 nodes"));
        }
        validate_grids(&self)?;
        Ok(Experiment {
            config: self,
            model,
            pair,
            params,
            rules,
            sim,
        })
    }
}

fn validate_grids(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let positive = |field: &str, values: &[f64]| -> Result<(), ConfigError> {
        match values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            Some(i) => Err(field_err(&format!("{field}[{i}]"), format!("must be positive and finite, got {}", values[i]))),
            None if values.is_empty() => Err(field_err(field, "must not be empty")),
            None => Ok(()),
        }
    };
    let risk = &cfg.risk;
    positive("risk.wealths", &risk.wealths)?;
    if risk.measures.is_empty() {
        return Err(field_err("risk.measures", "must not be empty"));
    }
    if let Some(i) = risk.zeta_mu.iter().position(|v| !v.is_finite()) {
        return Err(field_err(&format!("risk.zeta_mu[{i}]"), "must be finite"));
    }
    if let Some(i) = risk.zeta_sigma.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(field_err(&format!("risk.zeta_sigma[{i}]"), "must be non-negative and finite"));
    }
    if risk.oracle_samples != 0 && risk.oracle_samples < 1000 {
        return Err(field_err("risk.oracle_samples", "use 0 to skip the oracle or at least 1000"));
    }

    let d = &cfg.delta;
    if !(d.lambda_min > 0.0 && d.lambda_max >= d.lambda_min && d.lambda_max.is_finite()) {
        return Err(field_err("delta", "need 0 < lambda_min <= lambda_max < inf"));
    }
    if d.lambda_steps == 0 {
        return Err(field_err("delta.lambda_steps", "must be at least 1"));
    }
    positive("delta.wealths", &d.wealths)?;

    let p = &cfg.project;
    if !(1..=3).contains(&p.max_assets) {
        return Err(field_err("project.max_assets", "must lie in 1..=3"));
    }
    if p.max_factors < p.max_assets {
        return Err(field_err("project.max_factors", "must be at least max_assets"));
    }
    if !(p.wealth_min > 0.0 && p.wealth_max >= p.wealth_min && p.wealth_max.is_finite()) {
        return Err(field_err("project", "need 0 < wealth_min <= wealth_max < inf"));
    }
    Ok(())
}

fn build_market(m: &MarketConfig) -> Result<MarketModel, ConfigError> {
    let err = |e: constrained_growth::Error| field_err("market", e);
    match m {
        MarketConfig::Constant { r, mu, sigma } => {
            let mu = match mu {
                VectorSpec::Scalar(v) => DVector::from_element(1, *v),
                VectorSpec::Vector(v) => DVector::from_vec(v.clone()),
            };
            let sigma = match sigma {
                MatrixSpec::Scalar(v) => DMatrix::from_element(1, 1, *v),
                MatrixSpec::Rows(rows) => {
                    let cols = rows.first().map_or(0, Vec::len);
                    if rows.iter().any(|row| row.len() != cols) || cols == 0 {
                        return Err(field_err("market.sigma", "rows must be non-empty and of equal length"));
                    }
                    DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied())
                }
            };
            Ok(MarketModel::Constant(MarketPoint::new(*r, mu, sigma).map_err(err)?))
        }
        MarketConfig::Sinusoidal {
            r,
            mu,
            mu_amp,
            sigma,
            sigma_amp,
            period,
        } => MarketModel::sinusoidal(*r, *mu, *mu_amp, *sigma, *sigma_amp, *period).map_err(err),
        MarketConfig::Ou {
            r,
            mu,
            nu,
            vbar,
            rho,
            vol_lo,
            vol_hi,
            v0,
        } => {
            let vol = VolMap::logistic(*vol_lo, *vol_hi).map_err(|e| field_err("market.vol_lo/vol_hi", e))?;
            MarketModel::ou(OuStochVol {
                r: *r,
                mu: *mu,
                nu: *nu,
                vbar: *vbar,
                rho: *rho,
                vol,
                v0: *v0,
            })
            .map_err(err)
        }
    }
}

/// Parses a strategy tag as printed by `StrategyRule::tag`.
pub fn parse_strategy(tag: &str) -> Result<StrategyRule, ConfigError> {
    let tag = tag.trim();
    let arg = |prefix: &str| -> Option<Result<f64, ConfigError>> {
        let inner = tag.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
        Some(
            inner
                .trim()
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("bad number '{inner}' in '{tag}'"))),
        )
    };
    let rule = match tag {
        "merton" => StrategyRule::MertonUnconstrained,
        "projected_current" => StrategyRule::ProjectedCurrent,
        "projected_limiting" => StrategyRule::ProjectedLimiting,
        "relative_projected" => StrategyRule::RelativeProjected,
        _ => {
            if let Some(c) = arg("fixed_fraction") {
                let c = c?;
                if !(c.is_finite() && c >= 0.0) {
                    return Err(ConfigError(format!("fixed fraction must be non-negative, got {c}")));
                }
                StrategyRule::FixedFraction(c)
            } else if let Some(k) = arg("scaled_projection") {
                let k = k?;
                if !(0.0..=1.0).contains(&k) {
                    return Err(ConfigError(format!("scaling must lie in [0, 1], got {k}")));
                }
                StrategyRule::ScaledProjection(k)
            } else if let Some(rule) = challengers().into_iter().find(|c| c.tag() == tag) {
                rule
            } else {
                return Err(ConfigError(format!("unknown strategy '{tag}'")));
            }
        }
    };
    Ok(rule)
}
