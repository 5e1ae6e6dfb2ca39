//! The special flow under a roof `Φ > 0` over the skew-shift: phase space
//! `{(x, y, z) : 0 ≤ z < Φ(x, y)}`, points move up at unit speed and jump
//! from `(p, Φ(p))` to `(f(p), 0)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::{circle_diff, two_sum};
use crate::error::{MixlabError, Result};
use crate::skewshift::{Arc, FiberWalker, OrbitCursor, SkewShift, TorusPoint};
use crate::trig::{cis, FiberedTrigPoly};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const TARGET_SLACK: f64 = 1e-4;
const MAX_CERTIFY_GRID: usize = 2048;

/// A roof with certified bounds `certified_min ≤ Φ ≤ certified_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Roof {
    poly: FiberedTrigPoly,
    certified_min: f64,
    certified_max: f64,
    mean: f64,
}

impl Roof {
    pub fn poly(&self) -> &FiberedTrigPoly {
        &self.poly
    }

    pub fn certified_min(&self) -> f64 {
        self.certified_min
    }

    pub fn certified_max(&self) -> f64 {
        self.certified_max
    }

    /// `∫Φ`, the normalizer of the invariant measure.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    #[inline]
    pub fn eval(&self, p: TorusPoint) -> f64 {
        self.poly.eval_real(p.x, p.y)
    }
}

/// Bounds a real roof on a uniform vertex grid of spacing `h`. Every point
/// lies within `h/2` of a vertex in each coordinate and the gradient
/// vanishes at an extremum, so the extremal values differ from the grid
/// extremes by at most `½ (2π)² Σ |c| (|m| + |k|)² (h/2)²`.
pub fn certify_roof(poly: &FiberedTrigPoly) -> Result<Roof> {
    if !poly.is_real() {
        return Err(MixlabError::InvalidParameter("a roof must be real-flagged".into()));
    }
    let max_freq = poly
        .modes()
        .map(|(m, k, _)| m.unsigned_abs().max(k.unsigned_abs()) as usize)
        .max()
        .unwrap_or(0);
    let curvature: f64 = poly
        .modes()
        .map(|(m, k, c)| c.norm() * ((m.abs() + k.abs()) as f64).powi(2))
        .sum::<f64>()
        * 0.5
        * std::f64::consts::TAU.powi(2);
    let slack_at = |grid: usize| curvature * (0.5 / grid as f64).powi(2);
    let mut grid = (8 * max_freq).max(8);
    while slack_at(grid) > TARGET_SLACK && grid < MAX_CERTIFY_GRID {
        grid = (2 * grid).min(MAX_CERTIFY_GRID);
    }
    let slack = slack_at(grid);
    let (lo, hi) = (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / grid as f64;
            (0..grid).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), j| {
                let v = poly.eval_real(x, j as f64 / grid as f64);
                (lo.min(v), hi.max(v))
            })
        })
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let certified_min = lo - slack;
    if certified_min <= 0.0 {
        return Err(MixlabError::NonPositiveRoof { lower_bound: certified_min });
    }
    Ok(Roof {
        poly: poly.clone(),
        certified_min,
        certified_max: hi + slack,
        mean: poly.mean().re,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FlowPoint {
    pub fn new(roof: &Roof, x: f64, y: f64, z: f64) -> Result<Self> {
        let base = TorusPoint::new(x, y);
        let height = roof.eval(base);
        if !(0.0..height).contains(&z) {
            return Err(MixlabError::InvalidParameter(format!(
                "height z = {z} outside [0, {height}) at ({x}, {y})"
            )));
        }
        Ok(Self { x: base.x, y: base.y, z })
    }

    pub fn base(&self) -> TorusPoint {
        TorusPoint { x: self.x, y: self.y }
    }
}

/// `[x₁, x₂] × [y₁, y₂] × [0, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub height: f64,
}

impl Cube {
    pub fn new(x: (f64, f64), y: (f64, f64), height: f64) -> Result<Self> {
        let ok = |(a, b): (f64, f64)| 0.0 <= a && a < b && b <= 1.0;
        if !ok(x) || !ok(y) || !(height > 0.0) {
            return Err(MixlabError::InvalidParameter(format!(
                "cube needs 0 <= x1 < x2 <= 1, 0 <= y1 < y2 <= 1 and h > 0, got {x:?} x {y:?} x {height}"
            )));
        }
        Ok(Self { x, y, height })
    }

    pub fn volume(&self) -> f64 {
        (self.x.1 - self.x.0) * (self.y.1 - self.y.0) * self.height
    }

    /// `μ(Q) = |Q| / ∫Φ`.
    pub fn measure(&self, roof: &Roof) -> f64 {
        self.volume() / roof.mean()
    }

    #[inline]
    pub fn contains(&self, p: &FlowPoint) -> bool {
        (self.x.0..=self.x.1).contains(&p.x) && (self.y.0..=self.y.1).contains(&p.y) && (0.0..=self.height).contains(&p.z)
    }

    fn check_fits(&self, roof: &Roof) -> Result<()> {
        if self.height >= roof.certified_min() {
            return Err(MixlabError::InvalidParameter(format!(
                "cube height {} must be below the certified roof minimum {}",
                self.height,
                roof.certified_min()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Neumaier sum of positive reals.
#[derive(Debug, Clone, Copy, Default)]
struct RunningSum {
    sum: f64,
    carry: f64,
}

impl RunningSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.sum, v);
        self.sum = s;
        self.carry += e;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn horizon(roof: &Roof, level: f64) -> u64 {
    (level / roof.certified_min()).ceil().max(0.0) as u64 + 1
}

/// `n_t`: the largest `n ≥ 0` with `Φ_n(x, y) < t + z`, together with `Φ_n`.
fn hit(roof: &Roof, f: &SkewShift, p: &FlowPoint, t: f64) -> (u64, f64, OrbitCursor) {
    let level = t + p.z;
    let mut cursor = OrbitCursor::forward(f, p.base(), horizon(roof, level));
    let mut sum = RunningSum::default();
    loop {
        let v = roof.eval(cursor.point());
        if sum.value() + v < level {
            sum.add(v);
            cursor.advance();
        } else {
            return (cursor.steps(), sum.value(), cursor);
        }
    }
}

pub fn hit_count(roof: &Roof, f: &SkewShift, p: &FlowPoint, t: f64) -> Result<u64> {
    if !(t >= 0.0) {
        return Err(MixlabError::InvalidParameter(format!("hit_count needs t >= 0, got {t}")));
    }
    Ok(hit(roof, f, p, t).0)
}

/// `f^Φ_t(p)`. Negative times walk `f⁻¹`, adding roof values until the
/// height is nonnegative again, which is the exact inverse of the forward
/// construction.
pub fn flow_at(roof: &Roof, f: &SkewShift, p: &FlowPoint, t: f64) -> FlowPoint {
    if t >= 0.0 {
        let (_, sum, cursor) = hit(roof, f, p, t);
        let q = cursor.point();
        FlowPoint {
            x: q.x,
            y: q.y,
            z: (t + p.z) - sum,
        }
    } else {
        let deficit = p.z + t;
        if deficit >= 0.0 {
            return FlowPoint { z: deficit, ..*p };
        }
        let mut cursor = OrbitCursor::backward(f, p.base(), horizon(roof, -deficit));
        let mut sum = RunningSum::default();
        while deficit + sum.value() < 0.0 {
            cursor.advance();
            sum.add(roof.eval(cursor.point()));
        }
        let q = cursor.point();
        FlowPoint {
            x: q.x,
            y: q.y,
            z: deficit + sum.value(),
        }
    }
}

/// The `index`-th sample of the invariant probability measure for `seed`,
/// by rejection from `T² × [0, certified_max]`. Each index owns its own
/// ChaCha stream, so results do not depend on how indices are scheduled.
pub fn sample_measure(roof: &Roof, seed: u64, index: u64) -> FlowPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        let z = rng.random::<f64>() * roof.certified_max();
        let base = TorusPoint::new(x, y);
        if z < roof.eval(base) {
            return FlowPoint { x: base.x, y: base.y, z };
        }
    }
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < 1000 {
        return Err(MixlabError::InvalidParameter(format!("need at least 1000 samples, got {samples}")));
    }
    Ok(())
}

/// Fraction of samples satisfying `event`, evaluated in parallel and counted
/// exactly, so the result is independent of the worker count.
fn monte_carlo(roof: &Roof, samples: u64, seed: u64, event: impl Fn(&FlowPoint) -> bool + Sync) -> (f64, f64) {
    let hits: u64 = (0..samples)
        .into_par_iter()
        .map(|i| event(&sample_measure(roof, seed, i)) as u64)
        .sum();
    let p = hits as f64 / samples as f64;
    let sd = (p * (1.0 - p) * samples as f64 / (samples as f64 - 1.0)).sqrt();
    (p, sd / (samples as f64).sqrt())
}

/// Monte-Carlo `μ(f^Φ_{−t} Q)`, which equals `μ(Q)` by invariance.
pub fn preimage_measure(roof: &Roof, f: &SkewShift, q: &Cube, t: f64, samples: u64, seed: u64) -> Result<CorrelationEstimate> {
    check_samples(samples)?;
    q.check_fits(roof)?;
    let (value, std_error) = monte_carlo(roof, samples, seed, |p| q.contains(&flow_at(roof, f, p, t)));
    Ok(CorrelationEstimate {
        value,
        std_error,
        samples,
        seed,
    })
}

/// Monte-Carlo `μ(Q₁ ∩ f^Φ_{−t} Q₂) − μ(Q₁) μ(Q₂)`; the product term is
/// exact.
pub fn correlate_cubes(
    roof: &Roof,
    f: &SkewShift,
    q1: &Cube,
    q2: &Cube,
    t: f64,
    samples: u64,
    seed: u64,
) -> Result<CorrelationEstimate> {
    check_samples(samples)?;
    q1.check_fits(roof)?;
    q2.check_fits(roof)?;
    let (joint, std_error) = monte_carlo(roof, samples, seed, |p| q1.contains(p) && q2.contains(&flow_at(roof, f, p, t)));
    Ok(CorrelationEstimate {
        value: joint - q1.measure(roof) * q2.measure(roof),
        std_error,
        samples,
        seed,
    })
}

/// `Leb({x} × arc ∩ f^Φ_{−t} Q)` from a midpoint grid of `resolution`
/// points on the arc, starting every point at height 0.
pub fn fiber_mixing_profile(roof: &Roof, f: &SkewShift, x: f64, arc: Arc, q: &Cube, t: f64, resolution: usize) -> Result<f64> {
    if resolution < 256 {
        return Err(MixlabError::InvalidParameter(format!("profile resolution {resolution} < 256")));
    }
    q.check_fits(roof)?;
    let ys = arc.midpoints(resolution);
    let inside: usize = ys
        .par_iter()
        .map(|&y| {
            let p = FlowPoint { x: crate::dd::wrap01(x), y, z: 0.0 };
            q.contains(&flow_at(roof, f, &p, t)) as usize
        })
        .sum();
    Ok(inside as f64 / resolution as f64 * arc.length())
}

/// Minimum and maximum of `n_t(x, ·)` (at height 0) over a fiber grid, found
/// from the fiber coefficients of `Φ_n` without walking every grid point.
struct FiberHits {
    n_min: u64,
    n_max: u64,
    /// Cumulative coefficients of `Φ_{n_min}`.
    at_min: Vec<Complex64>,
}

fn grid_extrema(coeffs: &[Complex64], table: &[Vec<Complex64>]) -> (f64, f64) {
    table.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        let v = coeffs.iter().zip(e).map(|(c, e)| c * e).sum::<Complex64>().re;
        (lo.min(v), hi.max(v))
    })
}

fn fiber_table(degree: usize, ys: &[f64]) -> Vec<Vec<Complex64>> {
    let d = degree as i64;
    ys.iter()
        .map(|&y| (-d..=d).map(|k| cis(crate::dd::frac_mul(k as i128, y))).collect())
        .collect()
}

fn fiber_hits(roof: &Roof, f: &SkewShift, x: f64, table: &[Vec<Complex64>], t: f64) -> FiberHits {
    let poly = roof.poly();
    let d = poly.degree_y();
    let mut walker = FiberWalker::new(f, poly, x, horizon(roof, t));
    let mut coeffs = vec![ZERO; 2 * d + 1];
    let mut prev = coeffs.clone();
    let mut n_min = None;
    loop {
        // coeffs holds Φ_n with n = walker.steps().
        let n = walker.steps();
        let center = coeffs[d].re;
        let spread: f64 = coeffs.iter().enumerate().filter(|(i, _)| *i != d).map(|(_, c)| c.norm()).sum();
        let (lo, hi) = if center - spread < t && center + spread >= t {
            grid_extrema(&coeffs, table)
        } else {
            (center - spread, center + spread)
        };
        if n_min.is_none() && hi >= t {
            n_min = Some((n - 1, prev.clone()));
        }
        if lo >= t {
            let (n_min, at_min) = n_min.expect("max >= min");
            return FiberHits {
                n_min,
                n_max: n - 1,
                at_min,
            };
        }
        prev.copy_from_slice(&coeffs);
        walker.advance();
        walker.coefficients_into(&mut coeffs);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationBounds {
    pub n_min: u64,
    pub n_max: u64,
    /// `ΔΦ_{n_min}` on the arc grid.
    pub stretch: f64,
    /// `ΔΦ/Φ̄ − Φ̄/Φ̲`.
    pub lower: f64,
    /// `ΔΦ/Φ̲ + Φ̄/Φ̲`.
    pub upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    /// Bound on the variation of `Φ_{n_min}` across one grid cell, the
    /// resolution error of the grid proxies.
    pub cell_variation: f64,
}

pub const DEFAULT_FIBER_RESOLUTION: usize = 1024;

/// Spread of the return counts `n_t(x, y)` over `y` in an arc, against the
/// stretch of `Φ_{n_min}` on the same arc. The certified roof bounds stand
/// in for the true extrema, which only loosens both inequalities.
pub fn discrete_iteration_bounds(roof: &Roof, f: &SkewShift, x: f64, arc: Arc, t: f64, resolution: usize) -> Result<IterationBounds> {
    if !(t > 0.0) {
        return Err(MixlabError::InvalidParameter(format!("discrete_iteration_bounds needs t > 0, got {t}")));
    }
    if resolution < 2 {
        return Err(MixlabError::InvalidParameter("need at least two fiber points".into()));
    }
    let d = roof.poly().degree_y();
    let table = fiber_table(d, &arc.grid(resolution));
    let hits = fiber_hits(roof, f, x, &table, t);
    let (lo, hi) = grid_extrema(&hits.at_min, &table);
    let stretch = hi - lo;
    let (floor, ceil) = (roof.certified_min(), roof.certified_max());
    let spread = (hits.n_max - hits.n_min) as f64;
    let lower = stretch / ceil - ceil / floor;
    let upper = stretch / floor + ceil / floor;
    let derivative: f64 = hits
        .at_min
        .iter()
        .enumerate()
        .map(|(i, c)| std::f64::consts::TAU * (i as f64 - d as f64).abs() * c.norm())
        .sum();
    Ok(IterationBounds {
        n_min: hits.n_min,
        n_max: hits.n_max,
        stretch,
        lower,
        upper,
        lower_holds: lower <= spread,
        upper_holds: spread <= upper,
        cell_variation: derivative * arc.length() / (resolution - 1) as f64,
    })
}

/// Fraction of base points `x` (midpoint grid) outside `X(t, C)`: those
/// where `max_y |φ_{n̲_t(x)}(x, y)| ≤ C`, with `n̲_t(x)` the minimum of
/// `n_t(x, ·)` over a `grid`-point fiber grid.
pub fn hitting_complement_measure(roof: &Roof, f: &SkewShift, t: f64, c: f64, grid: usize) -> Result<f64> {
    if !(c > 1.0) {
        return Err(MixlabError::InvalidParameter(format!("hitting threshold C = {c} must exceed 1")));
    }
    if grid < 256 {
        return Err(MixlabError::InvalidParameter(format!("hitting grid {grid} < 256")));
    }
    if !(t >= 0.0) {
        return Err(MixlabError::InvalidParameter(format!("hitting time t = {t} must be nonnegative")));
    }
    let d = roof.poly().degree_y();
    let table = fiber_table(d, &Arc::full().midpoints(grid));
    let failing: usize = (0..grid)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / grid as f64;
            if t == 0.0 {
                return 1;
            }
            let mut coeffs = fiber_hits(roof, f, x, &table, t).at_min;
            coeffs[d] = ZERO;
            let peak = table
                .iter()
                .map(|e| coeffs.iter().zip(e).map(|(c, e)| c * e).sum::<Complex64>().norm())
                .fold(0.0, f64::max);
            (peak <= c) as usize
        })
        .sum();
    Ok(failing as f64 / grid as f64)
}

/// Reduces `(q, w)` into the fundamental domain `T² × [0, C)` of the
/// constant-roof suspension: `(f^k q, w − kC)` with `k = ⌊w / C⌋`.
fn reduce_constant(f: &SkewShift, q: TorusPoint, w: f64, c: f64) -> (TorusPoint, f64) {
    let k = (w / c).floor();
    let z = w - k * c;
    let steps = k.abs() as u64;
    let mut cursor = if k >= 0.0 {
        OrbitCursor::forward(f, q, steps)
    } else {
        OrbitCursor::backward(f, q, steps)
    };
    for _ in 0..steps {
        cursor.advance();
    }
    let base = cursor.point();
    (base, z)
}

fn constant_suspension_distance(f: &SkewShift, a: (TorusPoint, f64), b: (TorusPoint, f64), c: f64) -> f64 {
    let direct = |a: (TorusPoint, f64), b: (TorusPoint, f64)| a.0.distance(&b.0).max((a.1 - b.1).abs());
    // Points just below C and just above 0 are neighbours across the roof.
    direct(a, b)
        .min(direct((f.step(a.0), a.1 - c), b))
        .min(direct(a, (f.step(b.0), b.1 - c)))
}

/// Tolerance on `‖u∘f − u − (Φ − C_Φ)‖` accepted before the conjugacy test.
pub const COBOUNDARY_TOLERANCE: f64 = 1e-9;

/// For a roof with `Φ − C_Φ = u∘f − u`, the map `I(x, y, z) = (x, y, z + u(x, y))`
/// conjugates `f^Φ_t` to the constant-roof flow `f^{C_Φ}_t`. Returns the
/// largest deviation between `I∘f^Φ_t` and `f^{C_Φ}_t∘I` over `points`
/// invariant-measure samples, both reduced to the constant-roof domain.
pub fn trivial_conjugacy_check(
    roof: &Roof,
    f: &SkewShift,
    transfer: &FiberedTrigPoly,
    constant: f64,
    t: f64,
    points: u64,
    seed: u64,
) -> Result<f64> {
    if !(constant > 0.0) {
        return Err(MixlabError::InvalidParameter(format!("suspension constant {constant} must be positive")));
    }
    let shifted = roof.poly() - &FiberedTrigPoly::constant(constant);
    let residual = (&(&transfer.compose_with(f) - transfer) - &shifted).abs_sum();
    if residual > COBOUNDARY_TOLERANCE {
        return Err(MixlabError::NotACoboundary { residual });
    }
    let worst = (0..points)
        .into_par_iter()
        .map(|i| {
            let p = sample_measure(roof, seed, i);
            let moved = flow_at(roof, f, &p, t);
            let lhs = reduce_constant(f, moved.base(), moved.z + transfer.eval_real(moved.x, moved.y), constant);
            let rhs = reduce_constant(f, p.base(), p.z + transfer.eval_real(p.x, p.y) + t, constant);
            constant_suspension_distance(f, lhs, rhs, constant)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Distance between flow points, circular in the base.
pub fn flow_distance(a: &FlowPoint, b: &FlowPoint) -> f64 {
    circle_diff(a.x, b.x)
        .abs()
        .max(circle_diff(a.y, b.y).abs())
        .max((a.z - b.z).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::{solve_roof, DEFAULT_TOLERANCE};
    use crate::trig::catalog;
    use proptest::prelude::*;

    fn sine() -> Roof {
        certify_roof(&catalog::sine_roof(2.0)).unwrap()
    }

    #[test]
    fn certify_examples() {
        let c = certify_roof(&FiberedTrigPoly::constant(2.0)).unwrap();
        assert_eq!((c.certified_min(), c.certified_max(), c.mean()), (2.0, 2.0, 2.0));
        let s = sine();
        assert!((s.certified_min() - 1.0).abs() <= 1e-3 && s.certified_min() <= 1.0);
        assert!((s.certified_max() - 3.0).abs() <= 1e-3 && s.certified_max() >= 3.0);
        assert!(matches!(
            certify_roof(&catalog::sine_roof(0.0)),
            Err(MixlabError::NonPositiveRoof { .. })
        ));
        assert!(matches!(
            certify_roof(&catalog::coboundary_roof(0.0, 2.0)),
            Err(MixlabError::NonPositiveRoof { .. })
        ));
        let complex = FiberedTrigPoly::from_modes([(0, 0, Complex64::new(2.0, 0.0))], false).unwrap();
        assert!(certify_roof(&complex).is_err());
    }

    #[test]
    fn certified_bounds_enclose_samples() {
        let poly = catalog::cosine_sine_roof(2, 3, 3.0);
        let roof = certify_roof(&poly).unwrap();
        for i in 0..1000 {
            let (x, y) = ((i as f64 * 0.618_034) % 1.0, (i as f64 * 0.414_213_5) % 1.0);
            let v = poly.eval_real(x, y);
            assert!(roof.certified_min() <= v && v <= roof.certified_max());
        }
    }

    #[test]
    fn hit_count_examples() {
        let one = certify_roof(&FiberedTrigPoly::constant(1.0)).unwrap();
        let f = SkewShift::golden(0.0);
        let p = FlowPoint::new(&one, 0.3, 0.6, 0.0).unwrap();
        assert_eq!(hit_count(&one, &f, &p, 2.5).unwrap(), 2);
        assert_eq!(hit_count(&one, &f, &p, 0.0).unwrap(), 0);
        let half = SkewShift::new(0.5, 0.5);
        let origin = FlowPoint::new(&sine(), 0.0, 0.0, 0.0).unwrap();
        assert_eq!(hit_count(&sine(), &half, &origin, 3.0).unwrap(), 1);
        assert!(hit_count(&sine(), &half, &origin, -1.0).is_err());
    }

    #[test]
    fn flow_examples() {
        let one = certify_roof(&FiberedTrigPoly::constant(1.0)).unwrap();
        let f = SkewShift::golden(0.3);
        let p = FlowPoint::new(&one, 0.3, 0.6, 0.0).unwrap();
        assert_eq!(flow_at(&one, &f, &p, 0.0), p);
        let q = flow_at(&one, &f, &p, 2.5);
        let base = f.orbit_at(p.base(), 2);
        assert!(base.distance(&q.base()) < 1e-15 && (q.z - 0.5).abs() < 1e-15);

        let half = SkewShift::new(0.5, 0.5);
        let origin = FlowPoint::new(&sine(), 0.0, 0.0, 0.0).unwrap();
        let q = flow_at(&sine(), &half, &origin, 3.0);
        assert!((q.x - 0.5).abs() < 1e-15 && (q.y - 0.5).abs() < 1e-15 && (q.z - 1.0).abs() < 1e-15);
        let back = flow_at(&sine(), &half, &q, -3.0);
        assert!(flow_distance(&back, &origin) < 1e-14);
    }

    #[test]
    fn hit_count_is_monotone_with_unit_jumps() {
        let roof = sine();
        let f = SkewShift::golden(0.1);
        let p = FlowPoint::new(&roof, 0.2, 0.9, 0.4).unwrap();
        let mut last = 0;
        for i in 0..2000 {
            let n = hit_count(&roof, &f, &p, i as f64 * 0.05).unwrap();
            assert!(n >= last && n - last <= 1);
            assert!(n as f64 <= (i as f64 * 0.05 + p.z) / roof.certified_min());
            last = n;
        }
    }

    #[test]
    fn sampling_is_deterministic_and_inside_the_domain() {
        let roof = sine();
        assert_eq!(sample_measure(&roof, 7, 3), sample_measure(&roof, 7, 3));
        assert_ne!(sample_measure(&roof, 7, 3), sample_measure(&roof, 7, 4));
        for i in 0..10_000 {
            let p = sample_measure(&roof, 11, i);
            assert!(p.z >= 0.0 && p.z < roof.eval(p.base()));
        }
    }

    #[test]
    fn slab_measure() {
        // μ(z < h) = h / ∫Φ for h below the roof minimum.
        let roof = sine();
        let full = Cube::new((0.0, 1.0), (0.0, 1.0), 0.5).unwrap();
        let est = preimage_measure(&roof, &SkewShift::golden(0.0), &full, 0.0, 1_000_000, 5).unwrap();
        assert!((est.value - 0.25).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn correlation_at_time_zero() {
        let roof = sine();
        let f = SkewShift::golden(0.0);
        let q = Cube::new((0.0, 0.5), (0.0, 0.5), 0.5).unwrap();
        let est = correlate_cubes(&roof, &f, &q, &q, 0.0, 200_000, 3).unwrap();
        let mu = q.measure(&roof);
        assert!((est.value - mu * (1.0 - mu)).abs() <= 3.0 * est.std_error, "{est:?}");
        assert!(correlate_cubes(&roof, &f, &q, &q, 0.0, 999, 3).is_err());
        let tall = Cube::new((0.0, 0.5), (0.0, 0.5), 1.5).unwrap();
        assert!(correlate_cubes(&roof, &f, &tall, &q, 0.0, 1000, 3).is_err());
    }

    #[test]
    fn fiber_profile_examples() {
        let roof = sine();
        let f = SkewShift::golden(0.0);
        let q = Cube::new((0.2, 0.6), (0.1, 0.9), 0.5).unwrap();
        let arc = Arc::new(0.3, 0.5);
        let full = fiber_mixing_profile(&roof, &f, 0.4, arc, &q, 0.0, 256).unwrap();
        assert!((full - 0.2).abs() < 1e-15);
        assert_eq!(fiber_mixing_profile(&roof, &f, 0.8, arc, &q, 0.0, 256).unwrap(), 0.0);
        assert!(fiber_mixing_profile(&roof, &f, 0.8, arc, &q, 0.0, 128).is_err());

        // Naive oracle: plain stepping and summation from height 0.
        let q = Cube::new((0.0, 0.5), (0.0, 0.5), 0.5).unwrap();
        let arc = Arc::new(0.0, 0.5);
        let t = 200.0;
        let inside = arc
            .midpoints(1024)
            .into_iter()
            .filter(|&y| {
                let (mut p, mut sum) = (TorusPoint::new(0.25, y), 0.0);
                while sum + roof.eval(p) < t {
                    sum += roof.eval(p);
                    p = f.step(p);
                }
                let z = t - sum;
                p.x < 0.5 && p.y < 0.5 && z < 0.5
            })
            .count();
        let profile = fiber_mixing_profile(&roof, &f, 0.25, arc, &q, t, 1024).unwrap();
        assert_eq!(profile, inside as f64 / 1024.0 * 0.5);
        assert_eq!(profile, 0.06103515625);
    }

    #[test]
    fn iteration_bound_examples() {
        let f = SkewShift::golden(0.0);
        let two = certify_roof(&FiberedTrigPoly::constant(2.0)).unwrap();
        let b = discrete_iteration_bounds(&two, &f, 0.3, Arc::full(), 7.0, 256).unwrap();
        assert_eq!((b.n_min, b.n_max), (3, 3));
        assert!(b.stretch.abs() < 1e-12 && b.lower_holds && b.upper_holds);
        assert!((b.upper - 1.0).abs() < 1e-12);

        let roof = sine();
        let b = discrete_iteration_bounds(&roof, &f, 0.3, Arc::full(), 100.0, 1024).unwrap();
        assert!(b.lower_holds && b.upper_holds, "{b:?}");
        let b = discrete_iteration_bounds(&roof, &f, 0.3, Arc::full(), 0.5, 256).unwrap();
        assert_eq!((b.n_min, b.n_max), (0, 0));
    }

    #[test]
    fn fiber_hits_agree_with_pointwise_counts() {
        let roof = sine();
        let f = SkewShift::golden(0.2);
        let arc = Arc::new(0.1, 0.4);
        let ys = arc.grid(64);
        let b = discrete_iteration_bounds(&roof, &f, 0.37, arc, 250.0, 64).unwrap();
        let counts: Vec<u64> = ys
            .iter()
            .map(|&y| hit_count(&roof, &f, &FlowPoint { x: 0.37, y, z: 0.0 }, 250.0).unwrap())
            .collect();
        assert_eq!(b.n_min, *counts.iter().min().unwrap());
        assert_eq!(b.n_max, *counts.iter().max().unwrap());
    }

    #[test]
    fn hitting_examples() {
        let f = SkewShift::golden(0.0);
        let one = certify_roof(&FiberedTrigPoly::constant(1.0)).unwrap();
        assert_eq!(hitting_complement_measure(&one, &f, 50.0, 2.0, 256).unwrap(), 1.0);
        assert_eq!(hitting_complement_measure(&sine(), &f, 0.5, 2.0, 256).unwrap(), 1.0);
        assert!(hitting_complement_measure(&sine(), &f, 10.0, 1.0, 256).is_err());

        // Naive oracle at t = 100: pointwise n_t over the fiber grid, then the
        // peak of the zero-average Birkhoff sum at the smallest count.
        let roof = sine();
        let ys = Arc::full().midpoints(256);
        let failing = (0..256)
            .filter(|&i| {
                let x = (i as f64 + 0.5) / 256.0;
                let count = |y: f64| hit_count(&roof, &f, &FlowPoint { x, y, z: 0.0 }, 100.0).unwrap();
                let n_min = ys.iter().map(|&y| count(y)).min().unwrap();
                let peak = ys
                    .iter()
                    .map(|&y| {
                        let mut p = TorusPoint::new(x, y);
                        let mut sum = 0.0;
                        for _ in 0..n_min {
                            sum += (std::f64::consts::TAU * p.y).sin();
                            p = f.step(p);
                        }
                        sum.abs()
                    })
                    .fold(0.0, f64::max);
                peak <= 2.0
            })
            .count();
        let early = hitting_complement_measure(&roof, &f, 100.0, 2.0, 256).unwrap();
        assert_eq!(early, failing as f64 / 256.0);
        let late = hitting_complement_measure(&roof, &f, 10_000.0, 2.0, 256).unwrap();
        assert_eq!(early, 0.0546875);
        assert_eq!(late, 0.00390625);
    }

    #[test]
    fn conjugacy_examples() {
        let f = SkewShift::golden(0.0);
        let three = certify_roof(&FiberedTrigPoly::constant(3.0)).unwrap();
        assert_eq!(trivial_conjugacy_check(&three, &f, &FiberedTrigPoly::zero(), 3.0, 4.2, 50, 1).unwrap(), 0.0);

        let poly = catalog::coboundary_roof(f.beta, 3.0);
        let roof = certify_roof(&poly).unwrap();
        let sol = solve_roof(&f, &poly, DEFAULT_TOLERANCE).unwrap();
        let dev = trivial_conjugacy_check(&roof, &f, &sol.transfer, sol.mean.re, 3.3, 100, 2).unwrap();
        assert!(dev <= 1e-8, "{dev}");

        assert!(matches!(
            trivial_conjugacy_check(&sine(), &f, &FiberedTrigPoly::zero(), 2.0, 1.0, 10, 1),
            Err(MixlabError::NotACoboundary { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn flow_group_law(s in -1000.0f64..1000.0, t in -1000.0f64..1000.0, index in 0u64..1000) {
            let roof = sine();
            let f = SkewShift::golden(0.3);
            let p = sample_measure(&roof, 99, index);
            let two = flow_at(&roof, &f, &flow_at(&roof, &f, &p, s), t);
            let one = flow_at(&roof, &f, &p, s + t);
            prop_assert!(flow_distance(&two, &one) <= 1e-9, "{:?} vs {:?}", two, one);
        }
    }
}
