//! Fourier analysis of the skew-shift's action on `L²(T²)`.
//!
//! Composition with `f` maps `e_{a,b}` to a multiple of `e_{a+b,b}`, so for
//! `b ≠ 0` the modes split into orbits `{(m + jn, n) : j ∈ Z}` labelled by
//! `n ≠ 0` and `0 ≤ m < |n|`. On each orbit the cohomological equation
//! `u∘f − u = Φ` is a first-order difference equation in `j` with a single
//! obstruction, the invariant distribution `D_{(m,n)}`.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::frac_mul_dd;
use crate::error::{MixlabError, Result};
use crate::skewshift::{rotation_transfer, FiberWalker, SkewShift, DEFAULT_DIVISOR_FLOOR};
use crate::trig::{cis, FiberedTrigPoly, TrigPoly1D};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrbitLabel {
    pub m: i64,
    pub n: i64,
}

impl OrbitLabel {
    pub fn new(m: i64, n: i64) -> Result<Self> {
        if n == 0 || m < 0 || m >= n.abs() {
            return Err(MixlabError::InvalidParameter(format!(
                "orbit label ({m}, {n}) needs n != 0 and 0 <= m < |n|"
            )));
        }
        Ok(Self { m, n })
    }

    /// Label and index `j` of the mode `e_{a,b}`; `None` for `b = 0`.
    pub fn of_mode(a: i64, b: i64) -> Option<(Self, i64)> {
        if b == 0 {
            return None;
        }
        let m = a.rem_euclid(b.abs());
        Some((Self { m, n: b }, (a - m) / b))
    }

    /// The mode `(m + jn, n)`.
    pub fn mode(&self, j: i64) -> (i64, i64) {
        (self.m + j * self.n, self.n)
    }

    /// `θ_j = (αm + βn)j + αn·C(j,2)` in turns, reduced mod 1 in
    /// double-double.
    pub fn phase(&self, f: &SkewShift, j: i64) -> f64 {
        let (m, n, j) = (self.m as i128, self.n as i128, j as i128);
        let binom = j * (j - 1) / 2;
        let theta = frac_mul_dd(m * j, f.alpha) + frac_mul_dd(n * j, f.beta) + frac_mul_dd(n * binom, f.alpha);
        crate::dd::wrap01(theta.frac().to_f64())
    }
}

impl fmt::Display for OrbitLabel {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "({}, {})", self.m, self.n)
    }
}

/// `Σ_j Φ_j e_{m+jn, n}` with finite support, stored densely from `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpectrum {
    label: OrbitLabel,
    first: i64,
    coeffs: Vec<Complex64>,
}

impl ComponentSpectrum {
    pub fn zero(label: OrbitLabel) -> Self {
        Self {
            label,
            first: 0,
            coeffs: Vec::new(),
        }
    }

    /// Repeated indices are summed; zero coefficients at the ends are trimmed.
    pub fn new(label: OrbitLabel, terms: impl IntoIterator<Item = (i64, Complex64)>) -> Self {
        let terms: Vec<_> = terms.into_iter().collect();
        let Some(first) = terms.iter().map(|t| t.0).min() else {
            return Self::zero(label);
        };
        let last = terms.iter().map(|t| t.0).max().unwrap_or(first);
        let mut coeffs = vec![ZERO; (last - first + 1) as usize];
        for (j, c) in terms {
            coeffs[(j - first) as usize] += c;
        }
        Self { label, first, coeffs }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.last() == Some(&ZERO) {
            self.coeffs.pop();
        }
        let lead = self.coeffs.iter().take_while(|c| **c == ZERO).count();
        self.coeffs.drain(..lead);
        self.first += lead as i64;
        if self.coeffs.is_empty() {
            self.first = 0;
        }
        self
    }

    pub fn label(&self) -> OrbitLabel {
        self.label
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Inclusive index range of the support.
    pub fn support(&self) -> Option<(i64, i64)> {
        (!self.coeffs.is_empty()).then(|| (self.first, self.first + self.coeffs.len() as i64 - 1))
    }

    pub fn coefficient(&self, j: i64) -> Complex64 {
        let i = j - self.first;
        if i < 0 || i as usize >= self.coeffs.len() {
            ZERO
        } else {
            self.coeffs[i as usize]
        }
    }

    /// `(j, Φ_j)` over the support, zeros included.
    pub fn terms(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, c)| (self.first + i as i64, *c))
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let lo = self.support().map_or(0, |s| s.0).min(other.support().map_or(0, |s| s.0));
        let hi = self.support().map_or(0, |s| s.1).max(other.support().map_or(0, |s| s.1));
        (lo..=hi)
            .map(|j| (self.coefficient(j) - other.coefficient(j)).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_poly(&self) -> FiberedTrigPoly {
        let modes = self.terms().map(|(j, c)| {
            let (a, b) = self.label.mode(j);
            (a, b, c)
        });
        FiberedTrigPoly::from_modes(modes, false).expect("unflagged construction cannot fail")
    }

    /// Spectrum of `S∘f`: index `j` moves to `j + 1` with phase
    /// `e^{2πi((m+jn)α + nβ)}`.
    pub fn compose_with(&self, f: &SkewShift) -> Self {
        let (m, n) = (self.label.m as i128, self.label.n as i128);
        let terms = self.terms().map(|(j, c)| {
            let phase = (frac_mul_dd(m + j as i128 * n, f.alpha) + frac_mul_dd(n, f.beta)).frac();
            (j + 1, c * cis(phase.to_f64()))
        });
        Self::new(self.label, terms)
    }

    /// `S∘f − S`.
    pub fn coboundary(&self, f: &SkewShift) -> Self {
        let moved = self.compose_with(f);
        let terms: Vec<_> = moved.terms().chain(self.terms().map(|(j, c)| (j, -c))).collect();
        Self::new(self.label, terms)
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_from_modes(self.terms().map(|(j, c)| {
            let (a, b) = self.label.mode(j);
            (a, b, c)
        }), s)
    }
}

/// A function split into its `b = 0` part and its orbit components.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Modes `e_{a,0}`, a function of `x` alone.
    pub base: TrigPoly1D,
    /// Nonzero components ordered by `(m, n)`.
    pub components: Vec<ComponentSpectrum>,
}

impl Decomposition {
    pub fn reconstruct(&self) -> FiberedTrigPoly {
        self.components
            .iter()
            .fold(FiberedTrigPoly::from_base(&self.base), |acc, c| &acc + &c.to_poly())
    }
}

pub fn decompose_components(phi: &FiberedTrigPoly) -> Decomposition {
    let mut grouped: std::collections::BTreeMap<OrbitLabel, Vec<(i64, Complex64)>> = Default::default();
    let mut base = Vec::new();
    for (a, b, c) in phi.modes() {
        match OrbitLabel::of_mode(a, b) {
            None => base.push((a, c)),
            Some((label, j)) => grouped.entry(label).or_default().push((j, c)),
        }
    }
    let base = TrigPoly1D::from_coefficients(base, false).expect("unflagged construction cannot fail");
    let base = if phi.is_real() {
        TrigPoly1D::from_coefficients(base.terms(), true).unwrap_or(base)
    } else {
        base
    };
    Decomposition {
        base,
        components: grouped
            .into_iter()
            .map(|(label, terms)| ComponentSpectrum::new(label, terms))
            .filter(|s| !s.is_zero())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionValue {
    pub label: OrbitLabel,
    pub value: Complex64,
}

/// `D_{(m,n)}(S) = Σ_j Φ_j e^{−2πiθ_j}`.
pub fn evaluate_distribution(f: &SkewShift, spectrum: &ComponentSpectrum) -> DistributionValue {
    let value = spectrum
        .terms()
        .map(|(j, c)| c * cis(-spectrum.label.phase(f, j)))
        .sum();
    DistributionValue {
        label: spectrum.label,
        value,
    }
}

/// Transfer function of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSolution {
    pub transfer: ComponentSpectrum,
    /// Max difference between the left-sum and right-sum solutions; equals
    /// `|D|` in exact arithmetic, so it measures the residual obstruction.
    pub right_sum_gap: f64,
}

/// Solves `u∘f − u = S` on one component by
/// `u_j = −e^{2πiθ_j} Σ_{k≤j} Φ_k e^{−2πiθ_k}`.
pub fn solve_component(f: &SkewShift, spectrum: &ComponentSpectrum, tol: f64) -> Result<ComponentSolution> {
    let label = spectrum.label;
    let Some((lo, hi)) = spectrum.support() else {
        return Ok(ComponentSolution {
            transfer: ComponentSpectrum::zero(label),
            right_sum_gap: 0.0,
        });
    };
    let d = evaluate_distribution(f, spectrum).value;
    if d.norm() > tol * spectrum.l2_norm() {
        return Err(MixlabError::ObstructionNonzero {
            label,
            re: d.re,
            im: d.im,
        });
    }
    let twisted: Vec<Complex64> = (lo..=hi)
        .map(|j| spectrum.coefficient(j) * cis(-label.phase(f, j)))
        .collect();
    let total: Complex64 = twisted.iter().sum();
    let mut left = Vec::with_capacity(twisted.len());
    let mut gap = 0.0f64;
    let mut partial = ZERO;
    for (j, t) in (lo..hi).zip(&twisted) {
        partial += t;
        let rotation = cis(label.phase(f, j));
        let u_left = -rotation * partial;
        let u_right = rotation * (total - partial);
        gap = gap.max((u_left - u_right).norm());
        left.push((j, u_left));
    }
    Ok(ComponentSolution {
        transfer: ComponentSpectrum::new(label, left),
        right_sum_gap: gap,
    })
}

/// `Φ − mean = u∘f − u` with its transfer function.
#[derive(Debug, Clone, PartialEq)]
pub struct RoofSolution {
    pub transfer: FiberedTrigPoly,
    pub mean: Complex64,
}

/// Solves the cohomological equation for a whole function: each orbit
/// component by [`solve_component`] and the fiber average by the rotation
/// solver. Fails on the first nonvanishing distribution.
pub fn solve_roof(f: &SkewShift, phi: &FiberedTrigPoly, tol: f64) -> Result<RoofSolution> {
    let parts = decompose_components(phi);
    let base = rotation_transfer(&parts.base, f.alpha, DEFAULT_DIVISOR_FLOOR)?;
    let mut transfer = FiberedTrigPoly::from_base(&base.transfer);
    for component in &parts.components {
        transfer = &transfer + &solve_component(f, component, tol)?.transfer.to_poly();
    }
    if phi.is_real() {
        transfer = FiberedTrigPoly::from_modes(transfer.modes(), true)
            .map_err(|_| MixlabError::InvalidParameter("transfer of a real function lost realness".into()))?;
    }
    Ok(RoofSolution {
        transfer,
        mean: base.mean,
    })
}

fn sobolev_from_modes(modes: impl Iterator<Item = (i64, i64, Complex64)>, s: f64) -> f64 {
    modes
        .map(|(a, b, c)| (1.0 + (a * a + b * b) as f64).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `(Σ (1 + m² + n²)^s |c_{m,n}|²)^{1/2}`.
pub fn sobolev_norm(phi: &FiberedTrigPoly, s: f64) -> f64 {
    sobolev_from_modes(phi.modes(), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Mixing,
    Trivial,
}

impl fmt::Display for Verdict {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(match self {
            Verdict::Mixing => "mixing",
            Verdict::Trivial => "trivial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    /// Distribution values of every nonzero component of `φ`.
    pub values: Vec<DistributionValue>,
    /// `tol · ‖φ‖_{L²}`; a value above it is a nonvanishing obstruction.
    pub threshold: f64,
}

/// Mixing iff some invariant distribution of the zero-fiber-average part is
/// nonzero beyond `tol · ‖φ‖_{L²}`. Positivity of `Φ` is not required.
pub fn classify_roof(f: &SkewShift, phi: &FiberedTrigPoly, tol: f64) -> Classification {
    let (zero_avg, _) = phi.project();
    let threshold = tol * zero_avg.l2_norm();
    let values: Vec<_> = decompose_components(&zero_avg)
        .components
        .iter()
        .map(|s| evaluate_distribution(f, s))
        .collect();
    let verdict = if values.iter().any(|v| v.value.norm() > threshold) {
        Verdict::Mixing
    } else {
        Verdict::Trivial
    };
    Classification {
        verdict,
        values,
        threshold,
    }
}

/// `‖Σ_{k<N} S∘f^k‖²_{L²}`, exactly, as `Σ_ℓ |Σ_{j=ℓ−N+1}^{ℓ} Φ_j e^{−2πiθ_j}|²`.
pub fn ergodic_sum_l2(f: &SkewShift, spectrum: &ComponentSpectrum, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(MixlabError::InvalidParameter("ergodic_sum_l2 needs N >= 1".into()));
    }
    let Some((lo, hi)) = spectrum.support() else {
        return Ok(0.0);
    };
    let mut prefix = Vec::with_capacity((hi - lo + 2) as usize);
    prefix.push(ZERO);
    let mut acc = ZERO;
    for j in lo..=hi {
        acc += spectrum.coefficient(j) * cis(-spectrum.label.phase(f, j));
        prefix.push(acc);
    }
    let width = (hi - lo + 1) as u64;
    // prefix[i] = Σ_{j < lo+i}; window ending at ℓ covers [ℓ−N+1, ℓ].
    let at = |i: i64| prefix[i.clamp(0, width as i64) as usize];
    let mut total = 0.0;
    let last = hi + n as i64 - 1;
    let mut l = lo;
    while l <= last {
        let upper = l - lo + 1;
        let lower = l - lo + 1 - n as i64;
        let window = at(upper) - at(lower);
        // Windows strictly inside or strictly past the support are constant
        // in ℓ; count them in one step.
        if upper >= width as i64 && lower <= 0 {
            let run = (lo + n as i64 - l).min(last - l + 1);
            total += window.norm_sqr() * run as f64;
            l += run;
        } else {
            total += window.norm_sqr();
            l += 1;
        }
    }
    Ok(total)
}

/// Continued-fraction data of `α = [0; a₁, a₂, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergentTimes {
    pub alpha: f64,
    pub partial_quotients: Vec<u64>,
    /// `q₁ = a₁`, `q_{ℓ+1} = a_{ℓ+1} q_ℓ + q_{ℓ−1}` with `q₀ = 1`.
    pub denominators: Vec<u64>,
}

/// First `terms` convergent denominators of `α ∈ (0, 1)`, from the exact
/// Euclidean algorithm on the dyadic rational that the float represents.
/// Every float is rational, so the expansion always terminates; it is an
/// error if that happens before `terms` quotients.
pub fn convergent_times(alpha: f64, terms: usize) -> Result<ConvergentTimes> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MixlabError::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let bits = alpha.to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let (mantissa, shift) = if exponent == 0 {
        (bits & ((1 << 52) - 1), 1074)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), 1075 - exponent)
    };
    if shift > 127 {
        return Err(MixlabError::InvalidParameter(format!("alpha = {alpha:e} is too small")));
    }
    let (mut num, mut den) = (mantissa as u128, 1u128 << shift);
    let (mut q_prev, mut q) = (0u128, 1u128);
    let mut partial_quotients = Vec::with_capacity(terms);
    let mut denominators = Vec::with_capacity(terms);
    while partial_quotients.len() < terms {
        if num == 0 {
            return Err(MixlabError::RationalAlpha {
                terms: partial_quotients.len(),
            });
        }
        let a = den / num;
        (num, den) = (den % num, num);
        (q_prev, q) = (q, a * q + q_prev);
        let (Ok(a), Ok(q)) = (u64::try_from(a), u64::try_from(q)) else {
            return Err(MixlabError::InvalidParameter("convergent denominator exceeds u64".into()));
        };
        partial_quotients.push(a);
        denominators.push(q);
    }
    Ok(ConvergentTimes {
        alpha,
        partial_quotients,
        denominators,
    })
}

fn zero_average_check(phi: &FiberedTrigPoly) -> Result<()> {
    let magnitude = phi.fiber_average_magnitude();
    if magnitude > 1e-14 * (1.0 + phi.abs_sum()) {
        return Err(MixlabError::NonzeroFiberAverage { magnitude });
    }
    Ok(())
}

/// `max |Φ_N(x, y)| / √N` over a `grid × grid` midpoint lattice, a lower
/// bound for the true supremum. `Φ` must have zero fiber average.
pub fn uniform_bound_scan(f: &SkewShift, phi: &FiberedTrigPoly, n: u64, grid: usize) -> Result<f64> {
    Ok(uniform_bound_profile(f, phi, &[n], grid)?[0])
}

/// [`uniform_bound_scan`] at several `N` in one pass per grid row.
pub fn uniform_bound_profile(f: &SkewShift, phi: &FiberedTrigPoly, times: &[u64], grid: usize) -> Result<Vec<f64>> {
    zero_average_check(phi)?;
    if grid < 128 {
        return Err(MixlabError::InvalidParameter(format!("scan grid {grid} < 128")));
    }
    if times.is_empty() || times.contains(&0) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MixlabError::InvalidParameter("scan times must be positive and strictly increasing".into()));
    }
    let d = phi.degree_y();
    let ys: Vec<Vec<Complex64>> = (0..grid)
        .map(|j| {
            let y = (j as f64 + 0.5) / grid as f64;
            (-(d as i64)..=d as i64).map(|k| cis(crate::dd::frac_mul(k as i128, y))).collect()
        })
        .collect();
    let horizon = *times.last().expect("nonempty");
    let rows: Vec<Vec<f64>> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / grid as f64;
            let mut walker = FiberWalker::new(f, phi, x, horizon);
            let mut coeffs = vec![ZERO; 2 * d + 1];
            let mut out = Vec::with_capacity(times.len());
            for &n in times {
                while walker.steps() < n {
                    walker.advance();
                }
                walker.coefficients_into(&mut coeffs);
                let row_max = ys
                    .iter()
                    .map(|e| coeffs.iter().zip(e).map(|(c, e)| c * e).sum::<Complex64>().norm())
                    .fold(0.0, f64::max);
                out.push(row_max / (n as f64).sqrt());
            }
            out
        })
        .collect();
    Ok((0..times.len())
        .map(|t| rows.iter().map(|r| r[t]).fold(0.0, f64::max))
        .collect())
}
