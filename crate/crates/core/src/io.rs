//! JSON formats shared by the library and the command-line tool.
//!
//! A roof file holds the map parameters and the coefficients of
//! `e^{2πi(mx + ky)}`:
//!
//! ```json
//! {"alpha": 0.618, "beta": 0.0, "degree_y": 1,
//!  "coeffs": [{"k": 1, "m": 0, "re": 0.0, "im": -0.5}, ...], "real": true}
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cohomology::{Classification, Verdict};
use crate::error::{MixlabError, Result};
use crate::skewshift::SkewShift;
use crate::trig::FiberedTrigPoly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRecord {
    pub k: i64,
    pub m: i64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoofFile {
    pub alpha: f64,
    pub beta: f64,
    pub degree_y: usize,
    pub coeffs: Vec<ModeRecord>,
    pub real: bool,
}

/// A decoded roof file.
#[derive(Debug, Clone, PartialEq)]
pub struct RoofSpec {
    pub map: SkewShift,
    pub poly: FiberedTrigPoly,
}

impl RoofFile {
    pub fn from_parts(map: &SkewShift, poly: &FiberedTrigPoly) -> Self {
        Self {
            alpha: map.alpha,
            beta: map.beta,
            degree_y: poly.degree_y(),
            coeffs: poly
                .modes()
                .map(|(m, k, c)| ModeRecord { k, m, re: c.re, im: c.im })
                .collect(),
            real: poly.is_real(),
        }
    }

    pub fn decode(&self) -> Result<RoofSpec> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(MixlabError::Parse(format!("{what} is not finite")))
            }
        };
        let alpha = finite(self.alpha, "alpha")?;
        let beta = finite(self.beta, "beta")?;
        let mut modes = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            if c.k.unsigned_abs() as usize > self.degree_y {
                return Err(MixlabError::Parse(format!(
                    "coefficient k = {} exceeds degree_y = {}",
                    c.k, self.degree_y
                )));
            }
            modes.push((c.m, c.k, Complex64::new(finite(c.re, "re")?, finite(c.im, "im")?)));
        }
        Ok(RoofSpec {
            map: SkewShift::new(alpha, beta),
            poly: FiberedTrigPoly::from_modes(modes, self.real)?,
        })
    }
}

pub fn roof_from_json(text: &str) -> Result<RoofSpec> {
    let file: RoofFile = serde_json::from_str(text).map_err(|e| MixlabError::Parse(e.to_string()))?;
    file.decode()
}

pub fn roof_to_json(map: &SkewShift, poly: &FiberedTrigPoly) -> String {
    serde_json::to_string_pretty(&RoofFile::from_parts(map, poly)).expect("plain data serializes")
}

pub fn read_roof(path: &Path) -> Result<RoofSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| MixlabError::Parse(format!("{}: {e}", path.display())))?;
    roof_from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub m: i64,
    pub n: i64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub threshold: f64,
    pub components: Vec<ReportEntry>,
}

impl From<&Classification> for ClassificationReport {
    fn from(c: &Classification) -> Self {
        Self {
            verdict: c.verdict,
            threshold: c.threshold,
            components: c
                .values
                .iter()
                .map(|v| ReportEntry {
                    m: v.label.m,
                    n: v.label.n,
                    re: v.value.re,
                    im: v.value.im,
                    abs: v.value.norm(),
                })
                .collect(),
        }
    }
}
