//! Experiment configuration: one TOML file, every field explicit.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use bellbet::bounds::{design_protocol, ProtocolDesign};
use bellbet::chsh::AngleConfig;
use bellbet::quantum::{CorrelationSense, QuantumModel};
use bellbet::referee::{ClaimantSpec, ProtocolMode, RunPlan};
use bellbet::strategies::{locality_class, StrategySpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// An angle: a number of radians or an expression such as `"3pi/8"`.
#[derive(Debug, Clone, PartialEq)]
pub enum Angle {
    Radians(f64),
    Expr(String),
}

impl Angle {
    pub fn radians(&self) -> Result<f64, ConfigError> {
        match self {
            Angle::Radians(r) => Ok(*r),
            Angle::Expr(e) => parse_angle(e).ok_or_else(|| ConfigError::Invalid(format!("cannot read angle {e:?}"))),
        }
    }
}

/// Accepts `[-]<a>`, `[-][a][*]pi[/b]` and `[-]<a>/<b>` with decimal `a`, `b`.
pub fn parse_angle(text: &str) -> Option<f64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let (sign, t) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, t.as_str()),
    };
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().ok()?),
        None => (t, 1.0),
    };
    let num = match num.strip_suffix("pi").or_else(|| num.strip_suffix('π')) {
        Some(coef) => {
            let coef = coef.strip_suffix('*').unwrap_or(coef);
            if coef.is_empty() {
                PI
            } else {
                coef.parse::<f64>().ok()? * PI
            }
        }
        None => num.parse::<f64>().ok()?,
    };
    let v = sign * num / den;
    (v.is_finite() && den != 0.0).then_some(v)
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Angle::Radians(r) => s.serialize_f64(*r),
            Angle::Expr(e) => s.serialize_str(e),
        }
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            I(i64),
            S(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::F(f) => Angle::Radians(f),
            Raw::I(i) => Angle::Radians(i as f64),
            Raw::S(s) => {
                if parse_angle(&s).is_none() {
                    return Err(serde::de::Error::custom(format!("cannot read angle {s:?}")));
                }
                Angle::Expr(s)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Angles {
    pub alpha1: Angle,
    pub alpha2: Angle,
    pub beta1: Angle,
    pub beta2: Angle,
}

impl Angles {
    pub fn optimal() -> Self {
        Angles {
            alpha1: Angle::Expr("pi/8".into()),
            alpha2: Angle::Expr("3pi/8".into()),
            beta1: Angle::Expr("-pi/4".into()),
            beta2: Angle::Radians(0.0),
        }
    }

    pub fn aspect() -> Self {
        Angles {
            alpha1: Angle::Radians(0.0),
            alpha2: Angle::Expr("pi/3".into()),
            beta1: Angle::Expr("-pi/3".into()),
            beta2: Angle::Radians(0.0),
        }
    }

    /// `optimal`, `aspect`, or four comma-separated angles.
    pub fn from_arg(text: &str) -> Result<Self, ConfigError> {
        match text.trim() {
            "optimal" => Ok(Angles::optimal()),
            "aspect" => Ok(Angles::aspect()),
            other => {
                let parts: Vec<&str> = other.split(',').map(str::trim).collect();
                let [a1, a2, b1, b2] = parts[..] else {
                    return Err(ConfigError::Invalid(format!("expected four angles, got {other:?}")));
                };
                let angle = |s: &str| {
                    parse_angle(s)
                        .map(|_| Angle::Expr(s.to_string()))
                        .ok_or_else(|| ConfigError::Invalid(format!("cannot read angle {s:?}")))
                };
                Ok(Angles {
                    alpha1: angle(a1)?,
                    alpha2: angle(a2)?,
                    beta1: angle(b1)?,
                    beta2: angle(b2)?,
                })
            }
        }
    }

    pub fn resolve(&self) -> Result<AngleConfig<f64>, ConfigError> {
        AngleConfig::new(
            self.alpha1.radians()?,
            self.alpha2.radians()?,
            self.beta1.radians()?,
            self.beta2.radians()?,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Either a fixed value or `"auto"`, meaning "derive from the design".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AutoOr<T> {
    #[default]
    Auto,
    Value(T),
}

impl<T: Serialize> Serialize for AutoOr<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for AutoOr<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "lowercase")]
        enum Keyword {
            Auto,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Keyword(Keyword),
            Value(T),
        }
        Ok(match Raw::<T>::deserialize(d).map_err(|_| serde::de::Error::custom("expected \"auto\" or an integer"))? {
            Raw::Keyword(Keyword::Auto) => AutoOr::Auto,
            Raw::Value(v) => AutoOr::Value(v),
        })
    }
}

impl<T: fmt::Display> fmt::Display for AutoOr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoOr::Auto => f.write_str("auto"),
            AutoOr::Value(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ProtocolMode,
    pub n: AutoOr<u64>,
    pub critical_value: AutoOr<i64>,
    pub seed: u64,
    pub target_error: f64,
    pub locality_enforced: bool,
    pub output: PathBuf,
    pub angles: Angles,
    pub side: ClaimantSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: ProtocolMode::Sequential,
            n: AutoOr::Auto,
            critical_value: AutoOr::Auto,
            seed: 0,
            target_error: 1e-6,
            locality_enforced: true,
            output: PathBuf::from("bellbet-log.ndjson"),
            angles: Angles::optimal(),
            side: ClaimantSpec::Quantum {
                correlation_sense: CorrelationSense::EqualPolarization,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over everything that affects the outcome (the output path
    /// does not).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// The quantum expectation per trial the design is built around.
    pub fn design_mean(&self, angles: &AngleConfig<f64>) -> f64 {
        let sense = match &self.side {
            ClaimantSpec::Quantum { correlation_sense } => *correlation_sense,
            ClaimantSpec::Strategy(_) => CorrelationSense::EqualPolarization,
        };
        QuantumModel::new(*angles, sense).mean_per_trial()
    }

    pub fn design(&self, angles: &AngleConfig<f64>) -> Result<ProtocolDesign<f64>, ConfigError> {
        if !(self.target_error > 0.0 && self.target_error < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "target_error must lie strictly between 0 and 1, got {}",
                self.target_error
            )));
        }
        let mu = self.design_mean(angles);
        let invalid = |e: bellbet::bounds::BoundsError| ConfigError::Invalid(e.to_string());
        match (self.n, self.critical_value) {
            (AutoOr::Value(0), _) => Err(ConfigError::Invalid("n must be positive".into())),
            (AutoOr::Auto, AutoOr::Auto) => design_protocol(mu, self.target_error).map_err(invalid),
            (AutoOr::Value(n), AutoOr::Auto) => ProtocolDesign::midpoint(n, mu).map_err(invalid),
            (AutoOr::Value(n), AutoOr::Value(c)) => ProtocolDesign::evaluate(n, c, mu).map_err(invalid),
            (AutoOr::Auto, AutoOr::Value(_)) => {
                Err(ConfigError::Invalid("a fixed critical_value needs a fixed n".into()))
            }
        }
    }

    pub fn plan(&self) -> Result<RunPlan, ConfigError> {
        let angles = self.angles.resolve()?;
        if let ClaimantSpec::Strategy(spec) = &self.side {
            check_strategy(spec)?;
        }
        Ok(RunPlan {
            config_hash: self.hash(),
            seed: self.seed,
            mode: self.mode,
            angles,
            design: self.design(&angles)?,
            claimant: self.side.clone(),
            locality_enforced: self.locality_enforced,
        })
    }
}

fn check_strategy(spec: &StrategySpec) -> Result<(), ConfigError> {
    locality_class(spec).map(|_| ()).map_err(|e| ConfigError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_expressions() {
        let cases = [
            ("pi/8", PI / 8.0),
            ("3pi/8", 3.0 * PI / 8.0),
            ("3*pi/8", 3.0 * PI / 8.0),
            ("-pi/4", -PI / 4.0),
            ("- pi / 3", -PI / 3.0),
            ("π", PI),
            ("0", 0.0),
            ("1.5", 1.5),
            ("1/2", 0.5),
        ];
        for (text, want) in cases {
            assert_eq!(parse_angle(text), Some(want), "{text}");
        }
        for bad in ["", "pie", "pi/0", "x/3", "--pi"] {
            assert_eq!(parse_angle(bad), None, "{bad}");
        }
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = ExperimentConfig::default().to_toml();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), ExperimentConfig::default());
        for key in ["mode", "n", "critical_value", "seed", "target_error", "locality_enforced", "output", "[angles]", "[side]"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
    }

    #[test]
    fn reads_a_hand_written_config() {
        let cfg = ExperimentConfig::parse(
            r#"
            mode = "cloned-source"
            n = 2000
            critical_value = "auto"
            seed = 11
            target_error = 1e-6
            locality_enforced = true
            output = "x.ndjson"
            [angles]
            alpha1 = 0
            alpha2 = "pi/3"
            beta1 = "-pi/3"
            beta2 = 0.0
            [side]
            kind = "strategy"
            name = "constant"
            params = { bit = 0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, ProtocolMode::ClonedSource);
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.design.n, 2000);
        assert_eq!(plan.design.critical_value, 2000 / 32);
        assert_eq!(plan.angles, AngleConfig::aspect());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ExperimentConfig::default().to_toml();
        assert!(ExperimentConfig::parse(&format!("colour = 1\n{base}")).is_err());
        assert!(ExperimentConfig::parse(&base.replace("mode = \"sequential\"", "mode = \"parallel\"")).is_err());
        assert!(ExperimentConfig::parse(&base.replace("alpha1 = \"pi/8\"", "alpha1 = \"tau\"")).is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.n = AutoOr::Value(0);
        assert!(cfg.plan().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.target_error = 1.0;
        assert!(cfg.plan().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.side = ClaimantSpec::Strategy(StrategySpec::named("telepathy"));
        assert!(cfg.plan().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.n = AutoOr::Value(100);
        cfg.critical_value = AutoOr::Value(1000);
        assert!(cfg.plan().is_err());
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere.ndjson");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
