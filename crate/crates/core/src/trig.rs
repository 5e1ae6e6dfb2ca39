//! Trigonometric polynomials on the circle and fibered trigonometric
//! polynomials on the 2-torus.
//!
//! A [`FiberedTrigPoly`] is `Φ(x, y) = Σ_{|k|≤d} c_k(x) e^{2πiky}` where every
//! `c_k` is itself a finite Fourier series in `x`. This is exactly the class of
//! roof functions whose fiber average is a trigonometric polynomial, so every
//! value of this type is an admissible roof up to positivity.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{MixlabError, Result};
use crate::skewshift::SkewShift;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `e^{2πiθ}` for `θ` measured in turns.
#[inline]
pub fn cis(turns: f64) -> Complex64 {
    let r = turns - turns.round();
    let (s, c) = (TAU * r).sin_cos();
    Complex64::new(c, s)
}

/// Fills `out[0..=deg]` with `w^0, w^1, ..., w^deg` for `w = e^{2πiθ}`.
#[inline]
pub(crate) fn powers_into(turns: f64, out: &mut [Complex64]) {
    let w = cis(turns);
    let mut acc = Complex64::new(1.0, 0.0);
    for slot in out.iter_mut() {
        *slot = acc;
        acc *= w;
    }
}

#[inline]
fn power(pw: &[Complex64], m: i64) -> Complex64 {
    if m >= 0 {
        pw[m as usize]
    } else {
        pw[(-m) as usize].conj()
    }
}

fn realness_tolerance(coeffs: &[Complex64]) -> f64 {
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    1e-12 * (1.0 + max)
}

/// A trigonometric polynomial `Σ_{|m|≤D} a_m e^{2πimx}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly1D {
    degree: usize,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl TrigPoly1D {
    pub fn zero() -> Self {
        Self {
            degree: 0,
            coeffs: vec![ZERO],
            real: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            degree: 0,
            coeffs: vec![Complex64::new(c, 0.0)],
            real: true,
        }
    }

    /// Builds from `(m, a_m)` pairs; repeated frequencies are summed. A
    /// real-flagged polynomial must satisfy `a_{-m} = conj(a_m)`.
    pub fn from_coefficients<I>(terms: I, real: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, Complex64)>,
    {
        let terms: Vec<_> = terms.into_iter().collect();
        let degree = terms.iter().map(|(m, _)| m.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![ZERO; 2 * degree + 1];
        for (m, c) in terms {
            coeffs[(m + degree as i64) as usize] += c;
        }
        let p = Self { degree, coeffs, real };
        if real {
            p.check_real()?;
        }
        Ok(p)
    }

    fn check_real(&self) -> Result<()> {
        let tol = realness_tolerance(&self.coeffs);
        let d = self.degree as i64;
        for m in -d..=d {
            if (self.coefficient(-m) - self.coefficient(m).conj()).norm() > tol {
                return Err(MixlabError::RealnessViolation { m, k: 0 });
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coefficient(&self, m: i64) -> Complex64 {
        let d = self.degree as i64;
        if m.abs() > d {
            ZERO
        } else {
            self.coeffs[(m + d) as usize]
        }
    }

    /// Nonzero `(m, a_m)` pairs in increasing `m`.
    pub fn terms(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let d = self.degree as i64;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != ZERO)
            .map(move |(i, c)| (i as i64 - d, *c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let mut pw = vec![ZERO; self.degree + 1];
        powers_into(x, &mut pw);
        self.eval_with_powers(&pw)
    }

    #[inline]
    pub(crate) fn eval_with_powers(&self, pw: &[Complex64]) -> Complex64 {
        let d = self.degree as i64;
        let mut acc = ZERO;
        for (i, c) in self.coeffs.iter().enumerate() {
            acc += c * power(pw, i as i64 - d);
        }
        acc
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.eval(x).re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            real: self.real,
        }
    }

    /// `Σ |a_m|`, an upper bound for the sup norm.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Sup norm of the coefficient vector.
    pub fn coefficient_sup(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn from_raw(degree: usize, coeffs: Vec<Complex64>, real: bool) -> Self {
        debug_assert_eq!(coeffs.len(), 2 * degree + 1);
        Self { degree, coeffs, real }
    }
}

/// `Φ(x, y) = Σ_{|k|≤d} Σ_{|m|≤D} c_{m,k} e^{2πi(mx + ky)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedTrigPoly {
    degree_y: usize,
    degree_x: usize,
    /// Row `k + d`, column `m + D`.
    coeffs: Vec<Complex64>,
    real: bool,
}

impl FiberedTrigPoly {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            degree_y: 0,
            degree_x: 0,
            coeffs: vec![Complex64::new(c, 0.0)],
            real: true,
        }
    }

    /// Builds from `(m, k, c)` triples meaning `c·e^{2πi(mx+ky)}`; repeated
    /// modes are summed. Real-flagged input must already be symmetric.
    pub fn from_modes<I>(modes: I, real: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, i64, Complex64)>,
    {
        let modes: Vec<_> = modes.into_iter().collect();
        let degree_x = modes.iter().map(|(m, _, _)| m.unsigned_abs() as usize).max().unwrap_or(0);
        let degree_y = modes.iter().map(|(_, k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
        let mut p = Self {
            degree_y,
            degree_x,
            coeffs: vec![ZERO; (2 * degree_y + 1) * (2 * degree_x + 1)],
            real,
        };
        for (m, k, c) in modes {
            let i = p.index(m, k);
            p.coeffs[i] += c;
        }
        if real {
            p.check_real()?;
        }
        Ok(p)
    }

    /// `Re Σ c·e^{2πi(mx+ky)}`, symmetrized into a real-flagged polynomial.
    pub fn real_part_of<I>(modes: I) -> Self
    where
        I: IntoIterator<Item = (i64, i64, Complex64)>,
    {
        let sym: Vec<_> = modes
            .into_iter()
            .flat_map(|(m, k, c)| [(m, k, c * 0.5), (-m, -k, c.conj() * 0.5)])
            .collect();
        Self::from_modes(sym, true).expect("symmetrized modes are real")
    }

    /// Lifts a function of `x` alone.
    pub fn from_base(g: &TrigPoly1D) -> Self {
        Self::from_modes(g.terms().map(|(m, c)| (m, 0, c)), g.is_real())
            .expect("realness inherited from the base polynomial")
    }

    fn check_real(&self) -> Result<()> {
        let tol = realness_tolerance(&self.coeffs);
        for (m, k, c) in self.all_modes() {
            if (self.coefficient(-m, -k) - c.conj()).norm() > tol {
                return Err(MixlabError::RealnessViolation { m, k });
            }
        }
        Ok(())
    }

    #[inline]
    fn index(&self, m: i64, k: i64) -> usize {
        let w = 2 * self.degree_x + 1;
        (k + self.degree_y as i64) as usize * w + (m + self.degree_x as i64) as usize
    }

    pub fn degree_y(&self) -> usize {
        self.degree_y
    }

    pub fn degree_x(&self) -> usize {
        self.degree_x
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn coefficient(&self, m: i64, k: i64) -> Complex64 {
        if m.unsigned_abs() as usize > self.degree_x || k.unsigned_abs() as usize > self.degree_y {
            ZERO
        } else {
            self.coeffs[self.index(m, k)]
        }
    }

    fn all_modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        let w = 2 * self.degree_x + 1;
        let (dx, dy) = (self.degree_x as i64, self.degree_y as i64);
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| ((i % w) as i64 - dx, (i / w) as i64 - dy, *c))
    }

    /// Nonzero `(m, k, c)` triples, ordered by `k` then `m`.
    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        self.all_modes().filter(|(_, _, c)| *c != ZERO)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }

    /// The coefficient function `c_k(x)`.
    pub fn fiber(&self, k: i64) -> TrigPoly1D {
        let w = 2 * self.degree_x + 1;
        if k.unsigned_abs() as usize > self.degree_y {
            return TrigPoly1D::from_raw(self.degree_x, vec![ZERO; w], k == 0 && self.real);
        }
        let start = (k + self.degree_y as i64) as usize * w;
        TrigPoly1D::from_raw(self.degree_x, self.coeffs[start..start + w].to_vec(), k == 0 && self.real)
    }

    /// Max `|c_{m,0}|`: zero iff the fiber average vanishes identically.
    pub fn fiber_average_magnitude(&self) -> f64 {
        let d = self.degree_x as i64;
        (-d..=d).map(|m| self.coefficient(m, 0).norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        let mut px = vec![ZERO; self.degree_x + 1];
        let mut py = vec![ZERO; self.degree_y + 1];
        powers_into(x, &mut px);
        powers_into(y, &mut py);
        self.eval_with_powers(&px, &py)
    }

    #[inline]
    pub(crate) fn eval_with_powers(&self, px: &[Complex64], py: &[Complex64]) -> Complex64 {
        let w = 2 * self.degree_x + 1;
        let (dx, dy) = (self.degree_x as i64, self.degree_y as i64);
        let mut acc = ZERO;
        for (r, row) in self.coeffs.chunks_exact(w).enumerate() {
            let mut ck = ZERO;
            for (i, c) in row.iter().enumerate() {
                ck += c * power(px, i as i64 - dx);
            }
            acc += ck * power(py, r as i64 - dy);
        }
        acc
    }

    pub fn eval_real(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).re
    }

    /// Writes `c_k(x)` for `k = -d..=d` into `out` (length `2d+1`), using the
    /// power table `px` of `e^{2πix}` (length `D+1`).
    #[inline]
    pub(crate) fn fiber_values_into(&self, px: &[Complex64], out: &mut [Complex64]) {
        let w = 2 * self.degree_x + 1;
        let dx = self.degree_x as i64;
        for (row, slot) in self.coeffs.chunks_exact(w).zip(out.iter_mut()) {
            let mut ck = ZERO;
            for (i, c) in row.iter().enumerate() {
                ck += c * power(px, i as i64 - dx);
            }
            *slot = ck;
        }
    }

    /// Splits `Φ = φ + φ⊥` into the zero-fiber-average part and the fiber
    /// average `φ⊥(x) = ∫ Φ(x, y) dy`.
    pub fn project(&self) -> (FiberedTrigPoly, TrigPoly1D) {
        let perp = self.fiber(0);
        let mut phi = self.clone();
        let w = 2 * self.degree_x + 1;
        let start = self.degree_y * w;
        for c in &mut phi.coeffs[start..start + w] {
            *c = ZERO;
        }
        (phi, perp)
    }

    /// `Φ ∘ f` for the skew-shift `f(x,y) = (x+α, y+x+β)`:
    /// `e_{m,k} ∘ f = e^{2πi(mα+kβ)} e_{m+k,k}`.
    pub fn compose_with(&self, f: &SkewShift) -> Self {
        let modes: Vec<_> = self
            .modes()
            .map(|(m, k, c)| {
                let phase = crate::dd::wrap01(
                    crate::dd::frac_mul(m as i128, f.alpha) + crate::dd::frac_mul(k as i128, f.beta),
                );
                (m + k, k, c * cis(phase))
            })
            .collect();
        let mut out = Self::from_modes(modes, false).expect("unflagged construction cannot fail");
        out.real = self.real;
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }

    /// `(Σ |c|²)^{1/2}`, the L² norm on the torus.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Σ |c|`, an upper bound for the sup norm.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Mean over the torus, `c_{0,0}`.
    pub fn mean(&self) -> Complex64 {
        self.coefficient(0, 0)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        let modes = self
            .modes()
            .chain(other.modes().map(|(m, k, c)| (m, k, c * sign)));
        let mut out = Self::from_modes(modes, false).expect("unflagged construction cannot fail");
        out.real = self.real && other.real;
        out
    }
}

impl Add for &FiberedTrigPoly {
    type Output = FiberedTrigPoly;
    fn add(self, rhs: Self) -> FiberedTrigPoly {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &FiberedTrigPoly {
    type Output = FiberedTrigPoly;
    fn sub(self, rhs: Self) -> FiberedTrigPoly {
        self.combine(rhs, -1.0)
    }
}

impl Mul<f64> for &FiberedTrigPoly {
    type Output = FiberedTrigPoly;
    fn mul(self, s: f64) -> FiberedTrigPoly {
        self.scale(s)
    }
}

/// Catalog of roofs used throughout the tests and the CLI.
pub mod catalog {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// `sin(2πy) + c`.
    pub fn sine_roof(c: f64) -> FiberedTrigPoly {
        &FiberedTrigPoly::real_part_of([(0, 1, Complex64::new(0.0, -1.0))]) + &FiberedTrigPoly::constant(c)
    }

    /// `cos(2π(kx + y)) + sin(2πlx) + c`.
    pub fn cosine_sine_roof(k: i64, l: i64, c: f64) -> FiberedTrigPoly {
        let osc = FiberedTrigPoly::real_part_of([(k, 1, Complex64::new(1.0, 0.0)), (l, 0, Complex64::new(0.0, -1.0))]);
        &osc + &FiberedTrigPoly::constant(c)
    }

    /// `Re Σ_j a_j e^{2πi(jx+y)} + c`.
    pub fn weyl_roof(a: &[(i64, Complex64)], c: f64) -> FiberedTrigPoly {
        let osc = FiberedTrigPoly::real_part_of(a.iter().map(|&(j, aj)| (j, 1, aj)));
        &osc + &FiberedTrigPoly::constant(c)
    }

    /// `c + Re(e^{2πiβ} e_{1,1} − e_{0,1})`, the real part of the coboundary
    /// of `e_{0,1}` shifted by `c`.
    pub fn coboundary_roof(beta: f64, c: f64) -> FiberedTrigPoly {
        let osc = FiberedTrigPoly::real_part_of([(1, 1, cis(beta)), (0, 1, Complex64::new(-1.0, 0.0))]);
        &osc + &FiberedTrigPoly::constant(c)
    }

    /// Real zero-mean polynomial of the given degree whose coefficients are
    /// drawn from the unit square, then rescaled to coefficient sup-norm 1.
    /// Deterministic in `(seed, index)`.
    pub fn random_unit_poly(degree: usize, seed: u64, index: u64) -> Result<TrigPoly1D> {
        if degree == 0 {
            return Err(MixlabError::InvalidParameter("random polynomial needs degree >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut half: Vec<Complex64> = (0..degree)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let sup = half.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for c in &mut half {
            *c /= sup;
        }
        let terms = half
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| [(i as i64 + 1, c), (-(i as i64) - 1, c.conj())]);
        TrigPoly1D::from_coefficients(terms, true)
    }
}
