//! Simulation configuration: a TOML schema with named presets.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::Family;
use crate::error::{Error, Result};
use crate::linalg::{build_ar_covariance, build_banded_precision, SymMatrix};
use crate::stats::{default_method, StatMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    LinearGaussEstimated,
    LogisticGaussEstimated,
    LinearTMisspec,
    LogisticTMisspec,
    Custom,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::LinearGaussEstimated => "linear_gauss_estimated",
            Setting::LogisticGaussEstimated => "logistic_gauss_estimated",
            Setting::LinearTMisspec => "linear_t_misspec",
            Setting::LogisticTMisspec => "logistic_t_misspec",
            Setting::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureModel {
    Gaussian,
    T,
}

/// Where the knockoff working distribution comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkingModelKind {
    /// Shrinkage covariance of the replication's own `X`.
    Estimated,
    /// The true covariance (Gaussian features: perfect knockoffs), or the
    /// moment-matched `N(0, ν/(ν-2) Σ)` for t features.
    Oracle,
}

/// Feature covariance (Gaussian) or scale matrix (t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    /// `Σ = Ω⁻¹` with `Ω_ij = base^|i-j|` for `|i-j| < band`.
    BandedPrecision { base: f64, band: usize },
    /// `Σ_ij = rho^|i-j|`.
    Ar { rho: f64 },
    Identity,
}

impl CovarianceSpec {
    pub fn sigma(&self, p: usize) -> Result<SymMatrix> {
        match *self {
            CovarianceSpec::BandedPrecision { base, band } => build_banded_precision(p, base, band)?.inverse(),
            CovarianceSpec::Ar { rho } => build_ar_covariance(p, rho),
            CovarianceSpec::Identity => Ok(SymMatrix::identity(p)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfwerConfig {
    pub k: usize,
    pub q: f64,
}

/// One simulation run. Unset optional fields take the setting's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub setting: Setting,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub statistic: Option<StatMethod>,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub fixed_beta: bool,
    #[serde(default)]
    pub offset: u8,
    #[serde(default)]
    pub kfwer: Option<KfwerConfig>,
    #[serde(default)]
    pub n_signals: Option<usize>,
    #[serde(default)]
    pub signal_magnitude: Option<f64>,
    #[serde(default)]
    pub family: Option<Family>,
    #[serde(default)]
    pub features: Option<FeatureModel>,
    #[serde(default)]
    pub covariance: Option<CovarianceSpec>,
    #[serde(default)]
    pub working_model: Option<WorkingModelKind>,
}

fn default_q() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

pub const PRESETS: &[&str] = &[
    "setting1",
    "setting2",
    "t-linear",
    "t-logistic",
    "setting1-desk",
    "setting2-desk",
    "t-linear-desk",
    "t-logistic-desk",
];

impl SimConfig {
    fn base(setting: Setting, n: usize, p: usize, replications: usize) -> Self {
        Self {
            setting,
            n,
            p,
            replications,
            q: 0.2,
            statistic: None,
            nu: None,
            seed: 1,
            fixed_beta: true,
            offset: 0,
            kfwer: None,
            n_signals: None,
            signal_magnitude: None,
            family: None,
            features: None,
            covariance: None,
            working_model: None,
        }
    }

    /// Named presets: the full-scale settings (`p = 400`, 100 replications)
    /// and `-desk` versions (`p = 100`, 50 replications, signal counts scaled down).
    pub fn preset(name: &str) -> Result<Self> {
        let (stem, desk) = match name.strip_suffix("-desk") {
            Some(stem) => (stem, true),
            None => (name, false),
        };
        let (p, reps) = if desk { (100, 50) } else { (400, 100) };
        let mut c = match stem {
            "setting1" => Self::base(Setting::LinearGaussEstimated, 250, p, reps),
            "setting2" => Self::base(Setting::LogisticGaussEstimated, 500, p, reps),
            "t-linear" => {
                let mut c = Self::base(Setting::LinearTMisspec, 300, p, reps);
                c.nu = Some(10.0);
                c
            }
            "t-logistic" => {
                let mut c = Self::base(Setting::LogisticTMisspec, 300, p, reps);
                c.nu = Some(10.0);
                c
            }
            _ => {
                return Err(Error::Config(format!("unknown preset `{name}` (known: {})", PRESETS.join(", "))));
            }
        };
        if desk {
            c.n_signals = Some(match c.resolved_family() {
                Family::Linear => 12,
                Family::Logistic => 8,
            });
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolved_family(&self) -> Family {
        match self.setting {
            Setting::LinearGaussEstimated | Setting::LinearTMisspec => Family::Linear,
            Setting::LogisticGaussEstimated | Setting::LogisticTMisspec => Family::Logistic,
            Setting::Custom => self.family.unwrap_or_default(),
        }
    }

    pub fn resolved_features(&self) -> FeatureModel {
        match self.setting {
            Setting::LinearGaussEstimated | Setting::LogisticGaussEstimated => FeatureModel::Gaussian,
            Setting::LinearTMisspec | Setting::LogisticTMisspec => FeatureModel::T,
            Setting::Custom => self.features.unwrap_or(FeatureModel::Gaussian),
        }
    }

    pub fn resolved_covariance(&self) -> CovarianceSpec {
        self.covariance.unwrap_or(match self.resolved_features() {
            FeatureModel::Gaussian => CovarianceSpec::BandedPrecision { base: 0.2, band: 10 },
            FeatureModel::T => CovarianceSpec::Ar { rho: 0.5 },
        })
    }

    /// t settings default to the moment-matched oracle working model; Gaussian
    /// settings to in-sample estimation.
    pub fn resolved_working_model(&self) -> WorkingModelKind {
        self.working_model.unwrap_or(match self.resolved_features() {
            FeatureModel::Gaussian => WorkingModelKind::Estimated,
            FeatureModel::T => WorkingModelKind::Oracle,
        })
    }

    pub fn resolved_statistic(&self) -> StatMethod {
        self.statistic.unwrap_or_else(|| default_method(self.resolved_family()))
    }

    pub fn resolved_n_signals(&self) -> usize {
        self.n_signals.unwrap_or(match self.resolved_family() {
            Family::Linear => 50,
            Family::Logistic => 30,
        })
    }

    pub fn resolved_magnitude(&self) -> f64 {
        self.signal_magnitude.unwrap_or(3.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.replications < 1 {
            return bad("replications must be at least 1".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if self.n < 2 || self.p < 1 {
            return bad(format!("need n >= 2 and p >= 1, got n = {}, p = {}", self.n, self.p));
        }
        if self.offset > 1 {
            return bad(format!("offset must be 0 or 1, got {}", self.offset));
        }
        if self.resolved_n_signals() > self.p {
            return bad(format!("{} signals exceed p = {}", self.resolved_n_signals(), self.p));
        }
        if let Some(k) = self.kfwer {
            if k.k < 1 || !(k.q > 0.0 && k.q < 1.0) {
                return bad(format!("kfwer needs k >= 1 and 0 < q < 1, got k = {}, q = {}", k.k, k.q));
            }
        }
        match (self.resolved_features(), self.nu) {
            (FeatureModel::T, None) => return bad("t features need `nu`".into()),
            (FeatureModel::T, Some(nu)) if !(nu > 2.0) => return bad(format!("nu must exceed 2, got {nu}")),
            _ => {}
        }
        if self.setting != Setting::Custom && (self.family.is_some() || self.features.is_some()) {
            return bad(format!("`family` and `features` are fixed by setting `{}`; use setting = \"custom\"", self.setting));
        }
        let stat = self.resolved_statistic();
        match (stat, self.resolved_family()) {
            (StatMethod::RcdDebiased, Family::Logistic) | (StatMethod::RcdDebiasedGlm, Family::Linear) => {
                return bad(format!("statistic {stat} does not match the {:?} family", self.resolved_family()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let c = SimConfig::preset(name).unwrap();
            assert!(c.replications >= 1);
        }
        let s1 = SimConfig::preset("setting1").unwrap();
        assert_eq!((s1.n, s1.p, s1.replications, s1.resolved_n_signals()), (250, 400, 100, 50));
        assert_eq!(s1.resolved_statistic(), StatMethod::RcdDebiased);
        let s2 = SimConfig::preset("setting2-desk").unwrap();
        assert_eq!((s2.p, s2.replications), (100, 50));
        assert_eq!(s2.resolved_statistic(), StatMethod::RcdDebiasedGlm);
        assert!(SimConfig::preset("nope").is_err());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = SimConfig::from_toml_str(
            r#"
            setting = "linear_t_misspec"
            n = 300
            p = 50
            replications = 3
            nu = 5.0
            seed = 7
            [kfwer]
            k = 5
            q = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(c.q, 0.2);
        assert!(c.fixed_beta);
        assert_eq!(c.resolved_covariance(), CovarianceSpec::Ar { rho: 0.5 });
        assert_eq!(c.resolved_working_model(), WorkingModelKind::Oracle);
        let back = SimConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = "setting = \"linear_gauss_estimated\"\nn = 50\np = 20\nreplications = 2\nn_signals = 4\n";
        assert!(SimConfig::from_toml_str(ok).is_ok());
        for bad in [
            ok.replace("replications = 2", "replications = 0"),
            format!("{ok}q = 1.5\n"),
            format!("{ok}bogus = 1\n"),
            ok.replace("linear_gauss_estimated", "linear_t_misspec"),
            format!("{ok}statistic = \"rcd_debiased_glm\"\n"),
            format!("{ok}family = \"logistic\"\n"),
        ] {
            assert!(matches!(SimConfig::from_toml_str(&bad), Err(Error::Config(_))), "{bad}");
        }
        let custom = "setting = \"custom\"\nfamily = \"logistic\"\nfeatures = \"gaussian\"\nn = 50\np = 20\nreplications = 2\nn_signals = 3\n[covariance]\nkind = \"identity\"\n";
        let c = SimConfig::from_toml_str(custom).unwrap();
        assert_eq!(c.resolved_family(), Family::Logistic);
        assert_eq!(c.resolved_covariance(), CovarianceSpec::Identity);
    }
}
