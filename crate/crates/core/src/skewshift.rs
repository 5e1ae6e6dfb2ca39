//! The linear skew-shift `f(x, y) = (x + α, y + x + β)` on the 2-torus and
//! its Birkhoff sums.
//!
//! Orbits are never produced by composing floating-point steps. Instead the
//! base coordinate `x_j = x + jα` is recomputed from an error-free product at
//! every step, and the fiber phase `p_j = jx + jβ + C(j,2)α` is advanced by
//! `p_{j+1} = p_j + x_j + β (mod 1)`. The absolute phase error after `n`
//! steps is then `O(n·ε)`; forming `C(j,2)·α` directly would give `O(n²·ε)`.
//! Sums longer than [`EXTENDED_PRECISION_THRESHOLD`] switch to double-double.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::{circle_diff, frac_mul_dd, two_prod, two_sum, wrap01, DoubleDouble};
use crate::error::{MixlabError, Result};
use crate::trig::{cis, powers_into, FiberedTrigPoly, TrigPoly1D};

/// Orbit lengths above this use double-double phases regardless of the
/// requested precision.
pub const EXTENDED_PRECISION_THRESHOLD: u64 = 10_000_000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    Double,
    DoubleDouble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewShift {
    pub alpha: f64,
    pub beta: f64,
    pub precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap01(x),
            y: wrap01(y),
        }
    }

    /// Max of the circular distances in each coordinate.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        circle_diff(self.x, other.x)
            .abs()
            .max(circle_diff(self.y, other.y).abs())
    }
}

impl SkewShift {
    /// Parameters are reduced mod 1. Irrationality of `alpha` is the caller's
    /// assertion; with rational `alpha` the map is not uniquely ergodic and
    /// experiments silently lose their meaning.
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha: wrap01(alpha),
            beta: wrap01(beta),
            precision: Precision::Double,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    /// `(√5 − 1)/2`.
    pub fn golden(beta: f64) -> Self {
        Self::new((5f64.sqrt() - 1.0) / 2.0, beta)
    }

    pub fn extended_for(&self, n: u64) -> bool {
        self.precision == Precision::DoubleDouble || n > EXTENDED_PRECISION_THRESHOLD
    }

    pub fn step(&self, p: TorusPoint) -> TorusPoint {
        TorusPoint::new(p.x + self.alpha, p.y + p.x + self.beta)
    }

    pub fn inverse_step(&self, p: TorusPoint) -> TorusPoint {
        let x = wrap01(p.x - self.alpha);
        TorusPoint::new(x, p.y - x - self.beta)
    }

    /// `f^j(x, y) = (x + jα, y + jx + jβ + C(j,2)α)` evaluated with
    /// double-double products, so the cost and the error do not grow with `j`.
    pub fn orbit_at(&self, p: TorusPoint, j: u64) -> TorusPoint {
        let j = j as i128;
        let binom = j * (j - 1) / 2;
        let x = (DoubleDouble::from_f64(p.x) + frac_mul_dd(j, self.alpha)).frac();
        let y = (DoubleDouble::from_f64(p.y)
            + jx_frac(j, p.x)
            + frac_mul_dd(j, self.beta)
            + frac_mul_dd(binom, self.alpha))
        .frac();
        TorusPoint::new(x.to_f64(), y.to_f64())
    }

    pub fn accumulator(&self, x: f64, n: u64) -> PhaseAccumulator {
        PhaseAccumulator::new(self, x, self.extended_for(n))
    }
}

/// Fractional part of `j·x` for a non-integer `x`.
fn jx_frac(j: i128, x: f64) -> DoubleDouble {
    frac_mul_dd(j, x)
}

/// Tracks `x_j = x + jα` and `p_j = jx + jβ + C(j,2)α` modulo 1.
///
/// `f^j(x, y) = (x_j, y + p_j)`, so one accumulator serves every `y` on the
/// fiber over `x`.
#[derive(Debug, Clone)]
pub struct PhaseAccumulator {
    alpha: f64,
    beta: f64,
    x0: f64,
    x: DoubleDouble,
    p: DoubleDouble,
    j: u64,
    extended: bool,
}

impl PhaseAccumulator {
    pub fn new(f: &SkewShift, x: f64, extended: bool) -> Self {
        let x0 = wrap01(x);
        Self {
            alpha: f.alpha,
            beta: f.beta,
            x0,
            x: DoubleDouble::from_f64(x0),
            p: DoubleDouble::ZERO,
            j: 0,
            extended,
        }
    }

    #[inline]
    pub fn index(&self) -> u64 {
        self.j
    }

    /// `x_j ∈ [0, 1)`.
    #[inline]
    pub fn base(&self) -> f64 {
        wrap01(self.x.to_f64())
    }

    /// `p_j ∈ [0, 1)`.
    #[inline]
    pub fn phase(&self) -> f64 {
        wrap01(self.p.to_f64())
    }

    /// Fiber coordinate of `f^j(x, y)`.
    #[inline]
    pub fn fiber_coordinate(&self, y: f64) -> f64 {
        if self.extended {
            wrap01((self.p + DoubleDouble::from_f64(y)).frac().to_f64())
        } else {
            wrap01(self.p.hi + y)
        }
    }

    #[inline]
    pub fn advance(&mut self) {
        self.j += 1;
        if self.extended {
            self.p = (self.p + self.x + DoubleDouble::from_f64(self.beta)).frac();
            self.x = (DoubleDouble::from_f64(self.x0) + frac_mul_dd(self.j as i128, self.alpha)).frac();
        } else {
            self.p.hi = wrap01(self.p.hi + self.x.hi + self.beta);
            // j < 2^53, so j as f64 is exact and two_prod recovers jα exactly.
            let (hi, lo) = two_prod(self.j as f64, self.alpha);
            let ja = wrap01(hi - hi.floor() + lo);
            self.x.hi = wrap01(self.x0 + ja);
        }
    }
}

/// Walks `p, f(p), f²(p), ...` or, backwards, `p, f⁻¹(p), f⁻²(p), ...`.
///
/// `f⁻¹ = σ∘g∘σ` with `σ(x, y) = (−x, y)` and `g` the skew-shift with
/// parameters `(α, α − β)`, so both directions share the phase recursion.
#[derive(Debug, Clone)]
pub struct OrbitCursor {
    acc: PhaseAccumulator,
    y: f64,
    flip: bool,
}

impl OrbitCursor {
    pub fn forward(f: &SkewShift, p: TorusPoint, horizon: u64) -> Self {
        Self {
            acc: f.accumulator(p.x, horizon),
            y: p.y,
            flip: false,
        }
    }

    pub fn backward(f: &SkewShift, p: TorusPoint, horizon: u64) -> Self {
        let g = SkewShift::new(f.alpha, f.alpha - f.beta).with_precision(f.precision);
        Self {
            acc: g.accumulator(-p.x, horizon),
            y: p.y,
            flip: true,
        }
    }

    pub fn steps(&self) -> u64 {
        self.acc.index()
    }

    #[inline]
    pub fn point(&self) -> TorusPoint {
        let x = self.acc.base();
        TorusPoint::new(if self.flip { -x } else { x }, self.acc.fiber_coordinate(self.y))
    }

    #[inline]
    pub fn advance(&mut self) {
        self.acc.advance();
    }
}

/// Neumaier-compensated complex sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: Complex64) {
        let (re, cre) = two_sum(self.sum.re, v.re);
        let (im, cim) = two_sum(self.sum.im, v.im);
        self.sum = Complex64::new(re, im);
        self.carry += Complex64::new(cre, cim);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

/// `Φ_n(p) = Σ_{j<n} Φ(f^j p)`, with `Φ_0 = 0`.
pub fn birkhoff_sum(f: &SkewShift, phi: &FiberedTrigPoly, p: TorusPoint, n: u64) -> Complex64 {
    let mut acc = f.accumulator(p.x, n);
    let mut px = vec![ZERO; phi.degree_x() + 1];
    let mut py = vec![ZERO; phi.degree_y() + 1];
    let mut sum = CompensatedSum::default();
    for _ in 0..n {
        powers_into(acc.base(), &mut px);
        powers_into(acc.fiber_coordinate(p.y), &mut py);
        sum.add(phi.eval_with_powers(&px, &py));
        acc.advance();
    }
    sum.value()
}

/// Cumulative fiber coefficients `c_{k,n}(x) = Σ_{j<n} c_k(x_j) e^{2πik p_j}`,
/// so that `Φ_n(x, y) = Σ_k c_{k,n}(x) e^{2πiky}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberCoefficients {
    degree_y: usize,
    values: Vec<Complex64>,
}

impl FiberCoefficients {
    pub fn degree_y(&self) -> usize {
        self.degree_y
    }

    pub fn coefficient(&self, k: i64) -> Complex64 {
        let d = self.degree_y as i64;
        if k.abs() > d {
            ZERO
        } else {
            self.values[(k + d) as usize]
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn eval(&self, y: f64) -> Complex64 {
        let d = self.degree_y as i64;
        let mut py = vec![ZERO; self.degree_y + 1];
        powers_into(y, &mut py);
        (-d..=d)
            .map(|k| {
                let e = if k >= 0 { py[k as usize] } else { py[(-k) as usize].conj() };
                self.values[(k + d) as usize] * e
            })
            .sum()
    }

    /// `∂_y` of the fiber function.
    pub fn derivative(&self) -> FiberCoefficients {
        let d = self.degree_y as i64;
        let values = (-d..=d)
            .map(|k| self.values[(k + d) as usize] * Complex64::new(0.0, std::f64::consts::TAU * k as f64))
            .collect();
        FiberCoefficients {
            degree_y: self.degree_y,
            values,
        }
    }

    /// Drops `k = 0`, turning `Φ_n` into `φ_n`.
    pub fn without_average(&self) -> FiberCoefficients {
        let mut out = self.clone();
        out.values[self.degree_y] = ZERO;
        out
    }
}

/// Walks the fiber over a fixed `x`, accumulating the coefficients of `Φ_n`
/// one step at a time.
pub struct FiberWalker<'a> {
    poly: &'a FiberedTrigPoly,
    acc: PhaseAccumulator,
    px: Vec<Complex64>,
    pp: Vec<Complex64>,
    term: Vec<Complex64>,
    sums: Vec<CompensatedSum>,
}

impl<'a> FiberWalker<'a> {
    pub fn new(f: &SkewShift, poly: &'a FiberedTrigPoly, x: f64, horizon: u64) -> Self {
        let width = 2 * poly.degree_y() + 1;
        Self {
            poly,
            acc: f.accumulator(x, horizon),
            px: vec![ZERO; poly.degree_x() + 1],
            pp: vec![ZERO; poly.degree_y() + 1],
            term: vec![ZERO; width],
            sums: vec![CompensatedSum::default(); width],
        }
    }

    /// Number of terms accumulated so far.
    pub fn steps(&self) -> u64 {
        self.acc.index()
    }

    /// Adds the coefficients of `Φ ∘ f^j` for the current `j` and advances.
    /// Returns those per-step coefficients.
    #[inline]
    pub fn advance(&mut self) -> &[Complex64] {
        powers_into(self.acc.base(), &mut self.px);
        powers_into(self.acc.phase(), &mut self.pp);
        self.poly.fiber_values_into(&self.px, &mut self.term);
        let d = self.poly.degree_y() as i64;
        for (i, (t, s)) in self.term.iter_mut().zip(self.sums.iter_mut()).enumerate() {
            let k = i as i64 - d;
            let e = if k >= 0 { self.pp[k as usize] } else { self.pp[(-k) as usize].conj() };
            *t *= e;
            s.add(*t);
        }
        self.acc.advance();
        &self.term
    }

    pub fn coefficients(&self) -> FiberCoefficients {
        FiberCoefficients {
            degree_y: self.poly.degree_y(),
            values: self.sums.iter().map(CompensatedSum::value).collect(),
        }
    }

    /// Writes the current cumulative coefficients into `out` without
    /// allocating.
    #[inline]
    pub fn coefficients_into(&self, out: &mut [Complex64]) {
        for (o, s) in out.iter_mut().zip(&self.sums) {
            *o = s.value();
        }
    }
}

/// `c_{k,n}(x)` for all `|k| ≤ d`.
pub fn fiber_coefficients(f: &SkewShift, phi: &FiberedTrigPoly, x: f64, n: u64) -> FiberCoefficients {
    let mut walker = FiberWalker::new(f, phi, x, n);
    for _ in 0..n {
        walker.advance();
    }
    walker.coefficients()
}

/// `φ_N(f^n p) − φ_N(p)`, which must equal `φ_n(f^N p) − φ_n(p)`.
pub fn decoupling_difference(f: &SkewShift, phi: &FiberedTrigPoly, p: TorusPoint, n: u64, big_n: u64) -> Complex64 {
    let (zero_avg, _) = phi.project();
    birkhoff_sum(f, &zero_avg, f.orbit_at(p, n), big_n) - birkhoff_sum(f, &zero_avg, p, big_n)
}

/// An arc `[a, b]` of the fiber circle; `b < a` wraps through 0 and `[0, 1]`
/// is the whole fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub a: f64,
    pub b: f64,
}

impl Arc {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn full() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn length(&self) -> f64 {
        if self.b > self.a {
            (self.b - self.a).min(1.0)
        } else {
            wrap01(self.b - self.a)
        }
    }

    /// Point at arc parameter `s ∈ [0, 1]`.
    pub fn at(&self, s: f64) -> f64 {
        wrap01(self.a + s * self.length())
    }

    /// `n` points including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let denom = (n.max(2) - 1) as f64;
        (0..n).map(|i| self.at(i as f64 / denom)).collect()
    }

    /// `n` cell midpoints.
    pub fn midpoints(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.at((i as f64 + 0.5) / n as f64)).collect()
    }
}

/// `ΔΦ_n(I) = max_I Φ_n(x, ·) − min_I Φ_n(x, ·)` on the arc `I`, from a
/// uniform grid refined by golden-section search around the extremal cells.
pub fn stretch(f: &SkewShift, phi: &FiberedTrigPoly, x: f64, arc: Arc, n: u64, resolution: usize) -> Result<f64> {
    if resolution < 64 {
        return Err(MixlabError::InvalidParameter(format!("stretch resolution {resolution} < 64")));
    }
    if arc.length() <= 0.0 {
        return Err(MixlabError::InvalidParameter("empty arc".into()));
    }
    let coeffs = fiber_coefficients(f, phi, x, n);
    Ok(fiber_oscillation(&coeffs, arc, resolution))
}

/// Oscillation of the real fiber function given by `coeffs` along `arc`.
pub fn fiber_oscillation(coeffs: &FiberCoefficients, arc: Arc, resolution: usize) -> f64 {
    let g = |s: f64| coeffs.eval(arc.at(s)).re;
    let denom = (resolution - 1) as f64;
    let samples: Vec<f64> = (0..resolution).map(|i| g(i as f64 / denom)).collect();
    let (imax, _) = samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let (imin, _) = samples
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    let bracket = |i: usize| {
        let lo = i.saturating_sub(1) as f64 / denom;
        let hi = (i + 1).min(resolution - 1) as f64 / denom;
        (lo, hi)
    };
    let (lo, hi) = bracket(imax);
    let neg_max = golden_section(|s| -g(s), lo, hi).min(-samples[imax]);
    let (lo, hi) = bracket(imin);
    let min = golden_section(g, lo, hi).min(samples[imin]);
    -neg_max - min
}

/// Minimum value of a unimodal function on `[lo, hi]`.
fn golden_section(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..80 {
        if (hi - lo).abs() < 1e-13 {
            break;
        }
        if hc < hd {
            hi = d;
            d = c;
            hd = hc;
            c = hi - r * (hi - lo);
            hc = h(c);
        } else {
            lo = c;
            c = d;
            hc = hd;
            d = lo + r * (hi - lo);
            hd = h(d);
        }
    }
    hc.min(hd).min(h(lo)).min(h(hi))
}

/// Grid estimate of a sublevel-set measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublevelEstimate {
    pub measure: f64,
    /// Cells in which `|g| − C` changes sign, as a fraction of all cells:
    /// only those cells can be misclassified by the midpoint rule.
    pub error_bound: f64,
}

fn count_row(values: impl Iterator<Item = f64>, c: f64) -> (u64, u64) {
    let mut below = 0u64;
    let mut crossings = 0u64;
    let mut prev: Option<bool> = None;
    let mut first: Option<bool> = None;
    for v in values {
        let inside = v < c;
        below += inside as u64;
        if let Some(p) = prev {
            crossings += (p != inside) as u64;
        } else {
            first = Some(inside);
        }
        prev = Some(inside);
    }
    if let (Some(a), Some(b)) = (first, prev) {
        crossings += (a != b) as u64;
    }
    (below, crossings)
}

fn check_sublevel_args(c: f64, grid: usize) -> Result<()> {
    if !(c > 0.0) {
        return Err(MixlabError::InvalidParameter(format!("sublevel threshold C = {c} must be positive")));
    }
    if grid < 64 {
        return Err(MixlabError::InvalidParameter(format!("sublevel grid {grid} < 64")));
    }
    Ok(())
}

/// `Leb{y ∈ T : |g(y)| < C}` on a midpoint grid.
pub fn sublevel_measure_1d(g: impl Fn(f64) -> f64, c: f64, grid: usize) -> Result<SublevelEstimate> {
    check_sublevel_args(c, grid)?;
    let (below, crossings) = count_row((0..grid).map(|i| g((i as f64 + 0.5) / grid as f64).abs()), c);
    Ok(SublevelEstimate {
        measure: below as f64 / grid as f64,
        error_bound: crossings as f64 / grid as f64,
    })
}

/// `Leb²{(x, y) ∈ T² : |g(x, y)| < C}` on a `grid × grid` midpoint lattice.
/// Rows are processed in parallel and combined in row order.
pub fn sublevel_measure_2d(g: impl Fn(f64, f64) -> f64 + Sync, c: f64, grid: usize) -> Result<SublevelEstimate> {
    check_sublevel_args(c, grid)?;
    let rows: Vec<(u64, u64)> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / grid as f64;
            count_row((0..grid).map(|j| g(x, (j as f64 + 0.5) / grid as f64).abs()), c)
        })
        .collect();
    Ok(combine_rows(&rows, grid))
}

fn combine_rows(rows: &[(u64, u64)], grid: usize) -> SublevelEstimate {
    let (below, crossings) = rows.iter().fold((0u64, 0u64), |a, r| (a.0 + r.0, a.1 + r.1));
    let cells = (grid * grid) as f64;
    SublevelEstimate {
        measure: below as f64 / cells,
        error_bound: crossings as f64 / cells,
    }
}

/// Table of `e^{2πiky}` for `k = 0..=d` at the `grid` midpoints.
fn fiber_table(degree: usize, grid: usize) -> Vec<Vec<Complex64>> {
    (0..grid)
        .map(|j| {
            let mut p = vec![ZERO; degree + 1];
            powers_into((j as f64 + 0.5) / grid as f64, &mut p);
            p
        })
        .collect()
}

#[inline]
fn eval_from_table(values: &[Complex64], pw: &[Complex64], degree: usize) -> Complex64 {
    let d = degree as i64;
    let mut acc = ZERO;
    for (i, v) in values.iter().enumerate() {
        let k = i as i64 - d;
        let e = if k >= 0 { pw[k as usize] } else { pw[(-k) as usize].conj() };
        acc += v * e;
    }
    acc
}

/// `Leb²(|φ_n| < C)` for the zero-fiber-average part `φ` of `Φ`, evaluated on
/// a `grid × grid` midpoint lattice through the fiber coefficients of `φ_n`.
pub fn birkhoff_sublevel_measure(
    f: &SkewShift,
    phi: &FiberedTrigPoly,
    n: u64,
    c: f64,
    grid: usize,
) -> Result<SublevelEstimate> {
    check_sublevel_args(c, grid)?;
    let (zero_avg, _) = phi.project();
    let d = zero_avg.degree_y();
    let table = fiber_table(d, grid);
    let rows: Vec<(u64, u64)> = (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / grid as f64;
            let coeffs = fiber_coefficients(f, &zero_avg, x, n);
            count_row(table.iter().map(|pw| eval_from_table(coeffs.values(), pw, d).norm()), c)
        })
        .collect();
    Ok(combine_rows(&rows, grid))
}

/// `(1/N)·#{0 ≤ n < N : |φ_n(p)| < C}` along one orbit.
pub fn visit_fraction(f: &SkewShift, phi: &FiberedTrigPoly, p: TorusPoint, c: f64, big_n: u64) -> Result<f64> {
    if !(c > 0.0) || big_n == 0 {
        return Err(MixlabError::InvalidParameter("visit_fraction needs C > 0 and N >= 1".into()));
    }
    let (zero_avg, _) = phi.project();
    let mut acc = f.accumulator(p.x, big_n);
    let mut px = vec![ZERO; zero_avg.degree_x() + 1];
    let mut py = vec![ZERO; zero_avg.degree_y() + 1];
    let mut sum = CompensatedSum::default();
    let mut hits = 0u64;
    for _ in 0..big_n {
        hits += (sum.value().norm() < c) as u64;
        powers_into(acc.base(), &mut px);
        powers_into(acc.fiber_coordinate(p.y), &mut py);
        sum.add(zero_avg.eval_with_powers(&px, &py));
        acc.advance();
    }
    Ok(hits as f64 / big_n as f64)
}

/// Solution of `g(x + α) − g(x) = φ⊥(x) − mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationTransfer {
    pub transfer: TrigPoly1D,
    pub mean: Complex64,
}

pub const DEFAULT_DIVISOR_FLOOR: f64 = 1e-12;

/// Solves the cohomological equation of the circle rotation by `α` for a
/// trigonometric polynomial: `ĝ_m = φ̂_m / (e^{2πimα} − 1)` for `m ≠ 0`.
pub fn rotation_transfer(perp: &TrigPoly1D, alpha: f64, divisor_floor: f64) -> Result<RotationTransfer> {
    let mut terms = Vec::new();
    for (m, a) in perp.terms() {
        if m == 0 {
            continue;
        }
        let divisor = cis(crate::dd::frac_mul(m as i128, alpha)) - Complex64::new(1.0, 0.0);
        if divisor.norm() < divisor_floor {
            return Err(MixlabError::SmallDivisor {
                frequency: m,
                divisor: divisor.norm(),
            });
        }
        terms.push((m, a / divisor));
    }
    let transfer = TrigPoly1D::from_coefficients(terms, false)?;
    let transfer = if perp.is_real() {
        TrigPoly1D::from_raw(
            transfer.degree(),
            (-(transfer.degree() as i64)..=transfer.degree() as i64)
                .map(|m| transfer.coefficient(m))
                .collect(),
            true,
        )
    } else {
        transfer
    };
    Ok(RotationTransfer {
        transfer,
        mean: perp.coefficient(0),
    })
}

/// Least-squares slope of `log Leb(|P| < δ)` against `log δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub deltas: Vec<f64>,
    pub measures: Vec<f64>,
}

/// Empirical sublevel exponent of a trigonometric polynomial on the circle.
/// All thresholds are counted in a single pass over the midpoint grid.
pub fn sublevel_power_law(poly: &TrigPoly1D, deltas: &[f64], grid: usize) -> Result<PowerLawFit> {
    if deltas.len() < 2 || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(MixlabError::InvalidParameter("need at least two positive thresholds".into()));
    }
    if grid < 64 {
        return Err(MixlabError::InvalidParameter(format!("grid {grid} < 64")));
    }
    const CHUNK: usize = 1 << 14;
    let chunks = grid.div_ceil(CHUNK);
    let counts: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0u64; deltas.len()];
            let mut pw = vec![ZERO; poly.degree() + 1];
            for i in c * CHUNK..((c + 1) * CHUNK).min(grid) {
                powers_into((i as f64 + 0.5) / grid as f64, &mut pw);
                let v = poly.eval_with_powers(&pw).norm();
                for (slot, &d) in local.iter_mut().zip(deltas) {
                    *slot += (v < d) as u64;
                }
            }
            local
        })
        .collect();
    let measures: Vec<f64> = (0..deltas.len())
        .map(|i| counts.iter().map(|c| c[i]).sum::<u64>() as f64 / grid as f64)
        .collect();
    if measures.iter().any(|&m| m <= 0.0) {
        return Err(MixlabError::InvalidParameter(
            "a sublevel set is empty at this grid resolution; refine the grid or raise the thresholds".into(),
        ));
    }
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = measures.iter().map(|m| m.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(PowerLawFit {
        slope,
        intercept,
        deltas: deltas.to_vec(),
        measures,
    })
}

pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::catalog;
    use std::f64::consts::TAU;

    fn golden() -> SkewShift {
        SkewShift::golden(0.0)
    }

    #[test]
    fn step_examples() {
        let f = SkewShift::new(0.0, 0.0);
        assert_eq!(f.step(TorusPoint::new(0.25, 0.5)), TorusPoint::new(0.25, 0.75));
        let f = SkewShift::new(0.3, 0.4);
        let q = f.step(TorusPoint::new(0.1, 0.2));
        assert!((q.x - 0.4).abs() < 1e-15 && (q.y - 0.7).abs() < 1e-15);
        let p = TorusPoint::new(0.123, 0.987);
        let back = f.inverse_step(f.step(p));
        assert!(back.distance(&p) <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn orbit_at_examples() {
        let f = SkewShift::new(2f64.sqrt() - 1.0, 0.0);
        let p = TorusPoint::new(0.0, 0.0);
        assert_eq!(f.orbit_at(p, 0), p);
        let mut q = p;
        for _ in 0..3 {
            q = f.step(q);
        }
        let r = f.orbit_at(p, 3);
        assert!(r.distance(&q) < 1e-15);
        assert!((r.x - 0.242640687).abs() < 1e-9 && (r.y - 0.242640687).abs() < 1e-9);

        let f = SkewShift::new(0.3271, 0.577);
        let p = TorusPoint::new(0.2, 0.9);
        let two = f.orbit_at(p, 2);
        assert!((two.y - wrap01(p.y + 2.0 * p.x + 2.0 * f.beta + f.alpha)).abs() < 1e-15);
    }

    #[test]
    fn orbit_at_agrees_with_iteration() {
        let f = SkewShift::new(0.7548776662466927, 0.1234);
        let p = TorusPoint::new(0.31, 0.77);
        let mut q = p;
        for j in 1..=10_000u64 {
            q = f.step(q);
            if j % 997 == 0 || j == 10_000 {
                assert!(f.orbit_at(p, j).distance(&q) <= 1e-9, "j = {j}");
            }
        }
    }

    #[test]
    fn accumulator_tracks_closed_form_in_both_precisions() {
        let f = SkewShift::golden(0.3);
        let x = 0.41;
        let y = 0.05;
        for extended in [false, true] {
            let mut acc = PhaseAccumulator::new(&f, x, extended);
            for _ in 0..200_000 {
                acc.advance();
            }
            let exact = f.orbit_at(TorusPoint::new(x, y), 200_000);
            let got = TorusPoint::new(acc.base(), acc.fiber_coordinate(y));
            let tol = if extended { 1e-14 } else { 1e-10 };
            assert!(got.distance(&exact) < tol, "extended = {extended}: {}", got.distance(&exact));
        }
    }

    #[test]
    fn cursors_walk_both_directions() {
        let f = SkewShift::new(0.7548776662466927, 0.31);
        let p = TorusPoint::new(0.42, 0.17);
        let (mut fwd, mut bwd) = (OrbitCursor::forward(&f, p, 500), OrbitCursor::backward(&f, p, 500));
        let (mut q, mut r) = (p, p);
        for _ in 0..500 {
            fwd.advance();
            bwd.advance();
            q = f.step(q);
            r = f.inverse_step(r);
        }
        assert!(fwd.point().distance(&q) < 1e-11);
        assert!(bwd.point().distance(&r) < 1e-11);
        assert!(f.orbit_at(bwd.point(), 500).distance(&p) < 1e-11);
    }

    #[test]
    fn birkhoff_examples() {
        let f = golden();
        let one = FiberedTrigPoly::constant(1.0);
        let p = TorusPoint::new(0.3, 0.8);
        assert!((birkhoff_sum(&f, &one, p, 37) - Complex64::new(37.0, 0.0)).norm() < 1e-12);
        assert_eq!(birkhoff_sum(&f, &one, p, 0), ZERO);

        let sine = catalog::sine_roof(0.0);
        let f = SkewShift::new(0.5, 0.0);
        let v = birkhoff_sum(&f, &sine, TorusPoint::new(0.25, 0.0), 2);
        assert!((v.re - 1.0).abs() < 1e-15 && v.im.abs() < 1e-15);
    }

    #[test]
    fn fiber_coefficient_examples() {
        let f = SkewShift::new(0.3819, 0.0);
        let sine = catalog::sine_roof(0.0);
        let c1 = fiber_coefficients(&f, &sine, 0.0, 1);
        assert!((c1.coefficient(1) - sine.fiber(1).eval(0.0)).norm() < 1e-15);
        let c2 = fiber_coefficients(&f, &sine, 0.0, 2);
        assert!((c2.coefficient(1) - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn fiber_coefficients_match_birkhoff_sums() {
        let f = SkewShift::new(0.2137, 0.618);
        let phi = catalog::cosine_sine_roof(2, 3, 4.0);
        let x = 0.377;
        let n = 1000;
        let coeffs = fiber_coefficients(&f, &phi, x, n);
        for j in 0..64 {
            let y = j as f64 / 64.0;
            let direct = birkhoff_sum(&f, &phi, TorusPoint::new(x, y), n);
            assert!((coeffs.eval(y) - direct).norm() < 1e-9);
        }
    }

    #[test]
    fn derivative_commutes_with_birkhoff_sum() {
        let f = SkewShift::golden(0.2);
        let phi = catalog::weyl_roof(&[(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.5, 0.5))], 3.0);
        let x = 0.123;
        let n = 300;
        let dcoeffs = fiber_coefficients(&f, &phi, x, n).derivative();
        let h = 1e-5;
        for &y in &[0.1, 0.45, 0.8] {
            let fd = (birkhoff_sum(&f, &phi, TorusPoint::new(x, y + h), n)
                - birkhoff_sum(&f, &phi, TorusPoint::new(x, y - h), n))
                / (2.0 * h);
            let an = dcoeffs.eval(y);
            assert!((fd - an).norm() <= 1e-5 * an.norm().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn decoupling_examples() {
        let f = SkewShift::golden(0.1);
        let p = TorusPoint::new(0.2, 0.7);
        let phi = catalog::sine_roof(2.0);
        let lhs = decoupling_difference(&f, &phi, p, 40, 40);
        let rhs = decoupling_difference(&f, &phi, p, 40, 40);
        assert_eq!(lhs, rhs);
        let c = FiberedTrigPoly::constant(5.0);
        assert_eq!(decoupling_difference(&f, &c, p, 3, 9), ZERO);
        let phi = catalog::cosine_sine_roof(1, 2, 3.0);
        let lhs = decoupling_difference(&f, &phi, p, 17, 230);
        let rhs = decoupling_difference(&f, &phi, p, 230, 17);
        assert!((lhs - rhs).norm() < 1e-8);
    }

    #[test]
    fn stretch_examples() {
        let f = SkewShift::new(0.3819, 0.0);
        let c = FiberedTrigPoly::constant(2.0);
        assert!(stretch(&f, &c, 0.2, Arc::full(), 10, 64).unwrap().abs() < 1e-12);
        let sine = catalog::sine_roof(0.0);
        let s1 = stretch(&f, &sine, 0.3, Arc::full(), 1, 64).unwrap();
        assert!((s1 - 2.0).abs() < 1e-6 * 2.0);
        let s2 = stretch(&f, &sine, 0.0, Arc::full(), 2, 64).unwrap();
        assert!((s2 - 4.0).abs() < 1e-6 * 4.0);
        assert!(stretch(&f, &sine, 0.0, Arc::full(), 2, 32).is_err());
    }

    #[test]
    fn stretch_bounded_by_derivative() {
        let f = SkewShift::golden(0.3);
        let phi = catalog::sine_roof(2.0);
        let x = 0.71;
        let arc = Arc::new(0.2, 0.35);
        for n in [5u64, 50, 500] {
            let s = stretch(&f, &phi, x, arc, n, 256).unwrap();
            let d = fiber_coefficients(&f, &phi, x, n).derivative();
            let dmax = arc.grid(4096).iter().map(|&y| d.eval(y).norm()).fold(0.0, f64::max);
            assert!(s <= arc.length() * dmax * (1.0 + 1e-3) + 1e-12);
        }
    }

    #[test]
    fn sublevel_examples() {
        assert_eq!(sublevel_measure_1d(|_| 0.0, 1.0, 64).unwrap().measure, 1.0);
        let f = golden();
        let one = FiberedTrigPoly::constant(1.0);
        let three = sublevel_measure_2d(|x, y| birkhoff_sum(&f, &one, TorusPoint::new(x, y), 3).re, 2.0, 64).unwrap();
        assert_eq!(three.measure, 0.0);
        let est = sublevel_measure_1d(|y| (TAU * y).sin(), 0.5, 4096).unwrap();
        assert!((est.measure - 1.0 / 3.0).abs() <= est.error_bound + 1e-12);
        assert!(est.error_bound <= 4.0 / 4096.0);
        assert!(sublevel_measure_1d(|_| 0.0, 0.0, 64).is_err());
        assert!(sublevel_measure_1d(|_| 0.0, 1.0, 32).is_err());
    }

    #[test]
    fn sublevel_invariant_under_the_map() {
        let f = SkewShift::golden(0.25);
        let g = catalog::cosine_sine_roof(1, 1, 0.2);
        let grid = 256;
        let plain = sublevel_measure_2d(|x, y| g.eval_real(x, y), 0.7, grid).unwrap();
        let moved = sublevel_measure_2d(
            |x, y| {
                let q = f.step(TorusPoint::new(x, y));
                g.eval_real(q.x, q.y)
            },
            0.7,
            grid,
        )
        .unwrap();
        let tol = 2.0 * plain.error_bound.max(moved.error_bound);
        assert!((plain.measure - moved.measure).abs() <= tol);
    }

    #[test]
    fn birkhoff_sublevel_matches_generic_estimator() {
        let f = SkewShift::golden(0.0);
        let phi = catalog::sine_roof(2.0);
        let (zero_avg, _) = phi.project();
        let fast = birkhoff_sublevel_measure(&f, &phi, 20, 2.0, 128).unwrap();
        let slow = sublevel_measure_2d(|x, y| birkhoff_sum(&f, &zero_avg, TorusPoint::new(x, y), 20).re, 2.0, 128).unwrap();
        assert!((fast.measure - slow.measure).abs() <= 1.0 / (128.0 * 128.0));
    }

    #[test]
    fn visit_fraction_examples() {
        let f = golden();
        let p = TorusPoint::new(0.1, 0.2);
        assert_eq!(visit_fraction(&f, &FiberedTrigPoly::constant(1.0), p, 0.5, 1000).unwrap(), 1.0);
        assert_eq!(visit_fraction(&f, &catalog::sine_roof(2.0), p, 0.5, 1).unwrap(), 1.0);
        let early = visit_fraction(&f, &catalog::sine_roof(2.0), p, 2.0, 100).unwrap();
        let late = visit_fraction(&f, &catalog::sine_roof(2.0), p, 2.0, 10_000).unwrap();
        assert!(late < early, "{late} !< {early}");
        // Independent oracle: naive stepping and summation of sin(2πy).
        let naive = |n: usize| {
            let (mut q, mut sum, mut hits) = (p, 0.0f64, 0usize);
            for _ in 0..n {
                hits += (sum.abs() < 2.0) as usize;
                sum += (TAU * q.y).sin();
                q = f.step(q);
            }
            hits as f64 / n as f64
        };
        assert_eq!(early, naive(100));
        assert_eq!(late, naive(10_000));
        // Frozen regression values.
        assert_eq!(early, 0.15);
        assert_eq!(late, 0.046);
    }

    #[test]
    fn rotation_transfer_examples() {
        let r = rotation_transfer(&TrigPoly1D::constant(3.0), 0.3, DEFAULT_DIVISOR_FLOOR).unwrap();
        assert!(r.transfer.is_zero());
        assert_eq!(r.mean, Complex64::new(3.0, 0.0));

        let cos = TrigPoly1D::from_coefficients([(1, Complex64::new(0.5, 0.0)), (-1, Complex64::new(0.5, 0.0))], true).unwrap();
        let r = rotation_transfer(&cos, 0.25, DEFAULT_DIVISOR_FLOOR).unwrap();
        assert!((r.transfer.coefficient(1) - Complex64::new(-0.25, -0.25)).norm() < 1e-15);
        assert!((r.transfer.coefficient(-1) - Complex64::new(-0.25, 0.25)).norm() < 1e-15);
        for i in 0..256 {
            let x = i as f64 / 256.0;
            let lhs = r.transfer.eval(x + 0.25) - r.transfer.eval(x);
            assert!((lhs.re - (TAU * x).cos()).abs() < 1e-9 && lhs.im.abs() < 1e-9);
        }

        let err = rotation_transfer(&cos, 0.5, DEFAULT_DIVISOR_FLOOR);
        assert!(err.is_ok(), "m = 1 is not resonant at alpha = 1/2");
        let cos2 = TrigPoly1D::from_coefficients([(2, Complex64::new(0.5, 0.0)), (-2, Complex64::new(0.5, 0.0))], true).unwrap();
        assert!(matches!(
            rotation_transfer(&cos2, 0.5, DEFAULT_DIVISOR_FLOOR),
            Err(MixlabError::SmallDivisor { frequency: -2 | 2, .. })
        ));
    }

    #[test]
    fn power_law_of_a_cosine() {
        // Leb(|cos 2πx| < δ) = (2/π) asin δ ≈ 0.6366 δ: slope 1.
        let cos = TrigPoly1D::from_coefficients([(1, Complex64::new(0.5, 0.0)), (-1, Complex64::new(0.5, 0.0))], true).unwrap();
        let fit = sublevel_power_law(&cos, &[1e-1, 1e-2, 1e-3], 1 << 20).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.01, "{fit:?}");
    }
}
