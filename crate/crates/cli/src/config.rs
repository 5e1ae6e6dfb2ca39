//! Experiment configuration: what the flags or a config file ask for, and the
//! fully resolved form embedded in every output.

use std::fmt;
use std::path::{Path, PathBuf};

use mixlab_core::io::RoofFile;
use mixlab_core::{read_roof, Precision, RoofSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Rejected input: malformed config, missing or irrelevant parameters.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Classify,
    Solve,
    Stretch,
    Sublevel,
    Visits,
    Correlate,
    FiberProfile,
    Hitting,
    Weyl,
    L2,
    ReturnCheck,
    Conjugacy,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Classify => "classify",
            Experiment::Solve => "solve",
            Experiment::Stretch => "stretch",
            Experiment::Sublevel => "sublevel",
            Experiment::Visits => "visits",
            Experiment::Correlate => "correlate",
            Experiment::FiberProfile => "fiber-profile",
            Experiment::Hitting => "hitting",
            Experiment::Weyl => "weyl",
            Experiment::L2 => "l2",
            Experiment::ReturnCheck => "return-check",
            Experiment::Conjugacy => "conjugacy",
        }
    }

    pub fn needs_roof(self) -> bool {
        !matches!(self, Experiment::Sublevel | Experiment::ReturnCheck)
    }

    /// Default values of every parameter the experiment reads. Parameters
    /// absent here are rejected.
    fn defaults(self) -> Params {
        let double = Some(Precision::Double);
        let cube = Some([0.0, 0.5, 0.0, 0.5, 0.5]);
        match self {
            Experiment::Classify | Experiment::Solve => Params::default(),
            Experiment::Stretch => Params {
                c: Some(2.0),
                n: Some(vec![100, 1000, 10_000]),
                grid: Some(512),
                precision: double,
                ..Params::default()
            },
            Experiment::Sublevel => Params {
                deltas: Some(vec![1e-1, 1e-2, 1e-3, 1e-4]),
                grid: Some(1 << 22),
                degree: Some(3),
                polys: Some(10),
                seed: Some(0),
                ..Params::default()
            },
            Experiment::Visits => Params {
                c: Some(2.0),
                n: Some(vec![100, 1000, 10_000]),
                x: Some(0.1),
                y: Some(0.2),
                precision: double,
                ..Params::default()
            },
            Experiment::Correlate => Params {
                t: Some(vec![0.0, 50.0, 100.0, 200.0]),
                cube,
                samples: Some(100_000),
                seed: Some(0),
                precision: double,
                ..Params::default()
            },
            Experiment::FiberProfile => Params {
                t: Some(vec![0.0, 50.0, 100.0, 200.0]),
                x: Some(0.25),
                arc: Some([0.0, 0.5]),
                cube,
                grid: Some(1024),
                precision: double,
                ..Params::default()
            },
            Experiment::Hitting => Params {
                c: Some(2.0),
                t: Some(vec![100.0, 1000.0, 10_000.0]),
                grid: Some(256),
                precision: double,
                ..Params::default()
            },
            Experiment::Weyl => Params {
                terms: Some(24),
                grid: Some(256),
                precision: double,
                ..Params::default()
            },
            Experiment::L2 => Params {
                n: Some(vec![1, 10, 100, 10_000]),
                ..Params::default()
            },
            Experiment::ReturnCheck => Params {
                points: Some(100),
                seed: Some(0),
                ..Params::default()
            },
            Experiment::Conjugacy => Params {
                t: Some(vec![0.7, 3.3, 10.1]),
                points: Some(100),
                seed: Some(0),
                precision: double,
                ..Params::default()
            },
        }
    }
}

/// Numeric parameters. Each experiment reads a subset; see
/// [`Experiment::defaults`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Threshold `C` on Birkhoff sums.
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    /// Fiber arc `[y', y'']`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arc: Option<[f64; 2]>,
    /// Cube `[x1, x2, y1, y2, height]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cube: Option<[f64; 5]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polys: Option<u64>,
    /// Number of continued-fraction terms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<usize>,
}

fn to_map(p: &Params) -> Map<String, Value> {
    match serde_json::to_value(p).expect("plain data serializes") {
        Value::Object(m) => m,
        _ => unreachable!("params serialize to an object"),
    }
}

impl Params {
    /// `self` with every parameter set in `top` replaced.
    pub fn overlay(&self, top: &Params) -> Params {
        let mut merged = to_map(self);
        merged.extend(to_map(top));
        serde_json::from_value(Value::Object(merged)).expect("merged params deserialize")
    }

    fn validate(&self) -> anyhow::Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite, got {v}")))
            }
        };
        let positive_int = |name: &str, v: Option<u64>| match v {
            Some(0) => Err(invalid(format!("{name} must be positive"))),
            _ => Ok(()),
        };
        if let Some(c) = self.c {
            finite("C", c)?;
            if c <= 0.0 {
                return Err(invalid(format!("C must be positive, got {c}")));
            }
        }
        for &t in self.t.iter().flatten() {
            finite("t", t)?;
        }
        if self.n.iter().flatten().any(|&n| n == 0) {
            return Err(invalid("every n must be positive"));
        }
        if self.t.as_ref().is_some_and(Vec::is_empty) || self.n.as_ref().is_some_and(Vec::is_empty) {
            return Err(invalid("time lists must not be empty"));
        }
        positive_int("grid", self.grid.map(|v| v as u64))?;
        positive_int("samples", self.samples)?;
        positive_int("points", self.points)?;
        positive_int("degree", self.degree.map(|v| v as u64))?;
        positive_int("polys", self.polys)?;
        positive_int("terms", self.terms.map(|v| v as u64))?;
        for (name, v) in [("x", self.x), ("y", self.y)] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }
        if let Some([a, b]) = self.arc {
            finite("arc", a)?;
            finite("arc", b)?;
            if !(a < b && b - a <= 1.0) {
                return Err(invalid(format!("arc [{a}, {b}] must satisfy a < b <= a + 1")));
            }
        }
        for &v in self.cube.iter().flatten() {
            finite("cube", v)?;
        }
        for &d in self.deltas.iter().flatten() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid(format!("thresholds must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Where the roof comes from: a file, or its contents inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoofSource {
    Path(PathBuf),
    Inline(RoofFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roof: Option<RoofSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub params: Params,
}

/// A config with the roof loaded and every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub roof: Option<RoofSpec>,
}

impl ExperimentConfig {
    /// Reads a config file. Relative roof paths are taken relative to the
    /// file's directory.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if let Some(RoofSource::Path(roof)) = &mut config.roof {
            if roof.is_relative() {
                *roof = path.parent().unwrap_or(Path::new(".")).join(&*roof);
            }
        }
        Ok(config)
    }

    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let defaults = self.experiment.defaults();
        let allowed = to_map(&defaults);
        for key in to_map(&self.params).keys() {
            if key != "workers" && !allowed.contains_key(key) {
                return Err(invalid(format!("{} does not use parameter {key}", self.experiment.name())));
            }
        }
        let params = defaults.overlay(&self.params);
        params.validate()?;

        let roof = if self.experiment.needs_roof() {
            let mut spec = match &self.roof {
                None => return Err(invalid(format!("{} needs a roof", self.experiment.name()))),
                Some(RoofSource::Path(path)) => read_roof(path)?,
                Some(RoofSource::Inline(file)) => file.decode()?,
            };
            if let Some(alpha) = self.alpha {
                spec.map.alpha = alpha;
            }
            if let Some(beta) = self.beta {
                spec.map.beta = beta;
            }
            if !(spec.map.alpha.is_finite() && spec.map.beta.is_finite()) {
                return Err(invalid("alpha and beta must be finite"));
            }
            spec.map = spec.map.with_precision(params.precision.unwrap_or_default());
            Some(spec)
        } else {
            if self.roof.is_some() || self.alpha.is_some() || self.beta.is_some() {
                return Err(invalid(format!("{} does not take a roof", self.experiment.name())));
            }
            None
        };

        let config = ExperimentConfig {
            experiment: self.experiment,
            roof: roof
                .as_ref()
                .map(|r| RoofSource::Inline(RoofFile::from_parts(&r.map, &r.poly))),
            alpha: None,
            beta: None,
            params,
        };
        Ok(Resolved { config, roof })
    }
}
