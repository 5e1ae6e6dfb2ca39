//! The Heisenberg group in the unipotent model
//!
//! ```text
//!          | 1  x  z |
//! [x,y,z] = | 0  1  y |
//!          | 0  0  1 |
//! ```
//!
//! its standard lattice `Γ = {[a, b, k/E]}`, nilflows on `Γ\N`, the section
//! `{y = 0}` with its return map, and return times of time-changed flows.

use crate::dd::{wrap01, DoubleDouble};
use crate::error::{MixlabError, Result};
use crate::skewshift::SkewShift;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeisenbergElement {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl HeisenbergElement {
    pub const IDENTITY: Self = Self { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.x, -self.y, -self.z + self.x * self.y)
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [[1.0, self.x, self.z], [0.0, 1.0, self.y], [0.0, 0.0, 1.0]]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl std::ops::Mul for HeisenbergElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        group_mul(self, rhs)
    }
}

/// `[x₁,y₁,z₁]·[x₂,y₂,z₂] = [x₁+x₂, y₁+y₂, z₁+z₂+x₁y₂]`.
pub fn group_mul(a: HeisenbergElement, b: HeisenbergElement) -> HeisenbergElement {
    HeisenbergElement::new(a.x + b.x, a.y + b.y, a.z + b.z + a.x * b.y)
}

/// `W = w_x X + w_y Y + w_z Z` in the Lie algebra.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlgebraVector {
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
}

impl AlgebraVector {
    pub fn new(wx: f64, wy: f64, wz: f64) -> Self {
        Self { wx, wy, wz }
    }

    pub fn scale(&self, t: f64) -> Self {
        Self::new(t * self.wx, t * self.wy, t * self.wz)
    }

    /// Skew-shift parameters of the return map to `{y = 0}`:
    /// `α = w_x/w_y`, `β = w_z/w_y + w_x/(2w_y)`.
    ///
    /// The flow is uniquely ergodic only when `α` is irrational, which floats
    /// cannot witness; that is the caller's assertion.
    pub fn section_map(&self) -> Result<SkewShift> {
        if self.wy == 0.0 {
            return Err(MixlabError::DegenerateSection);
        }
        let alpha = self.wx / self.wy;
        Ok(SkewShift::new(alpha, self.wz / self.wy + alpha / 2.0))
    }
}

/// `exp(tW) = [t·w_x, t·w_y, t·w_z + t²·w_x·w_y/2]`.
pub fn group_exp(w: AlgebraVector, t: f64) -> HeisenbergElement {
    HeisenbergElement::new(t * w.wx, t * w.wy, t * w.wz + 0.5 * t * t * w.wx * w.wy)
}

/// Inverse of [`group_exp`] at `t = 1`.
pub fn group_log(g: HeisenbergElement) -> AlgebraVector {
    AlgebraVector::new(g.x, g.y, g.z - 0.5 * g.x * g.y)
}

/// The lattice `Γ = {[a, b, k/E] : a, b, k ∈ Z}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    euler: u32,
}

impl Default for Lattice {
    fn default() -> Self {
        Self { euler: 1 }
    }
}

impl Lattice {
    pub fn new(euler: u32) -> Result<Self> {
        if euler == 0 {
            return Err(MixlabError::InvalidParameter("Euler number must be >= 1".into()));
        }
        Ok(Self { euler })
    }

    pub fn euler(&self) -> u32 {
        self.euler
    }
}

/// `[a, b, k/E] ∈ Γ`, stored by its integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeElement {
    pub a: i64,
    pub b: i64,
    pub k: i64,
}

impl LatticeElement {
    pub fn to_element(&self, lattice: Lattice) -> HeisenbergElement {
        HeisenbergElement::new(self.a as f64, self.b as f64, self.k as f64 / lattice.euler as f64)
    }
}

/// A point of `Γ\N` in the fundamental domain `[0,1)² × [0,1/E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NilPoint {
    g: HeisenbergElement,
    lattice: Lattice,
}

impl NilPoint {
    pub fn element(&self) -> HeisenbergElement {
        self.g
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    /// The point `j(x, z) = Γ[x, 0, z]` of the section `{y = 0}`.
    pub fn on_section(x: f64, z: f64, lattice: Lattice) -> Self {
        reduce_mod_lattice(HeisenbergElement::new(x, 0.0, z), lattice).0
    }
}

fn dd_floor(v: DoubleDouble) -> f64 {
    let f = v.hi.floor();
    if v.hi == f && v.lo < 0.0 {
        f - 1.0
    } else {
        f
    }
}

fn reduce_dd(x: DoubleDouble, y: DoubleDouble, z: DoubleDouble, lattice: Lattice) -> (NilPoint, LatticeElement) {
    let b = dd_floor(y);
    let y = y - DoubleDouble::from_f64(b);
    let a = dd_floor(x);
    let x = x - DoubleDouble::from_f64(a);
    let e = lattice.euler as f64;
    let scaled = (z - y.mul_f64(a)).mul_f64(e);
    let k = dd_floor(scaled);
    let z = wrap01((scaled - DoubleDouble::from_f64(k)).to_f64()) / e;
    let point = NilPoint {
        g: HeisenbergElement::new(wrap01(x.to_f64()), wrap01(y.to_f64()), z),
        lattice,
    };
    (point, LatticeElement { a: a as i64, b: b as i64, k: k as i64 })
}

/// Reduces `g` into the fundamental domain: `y` first, then `x` (which shifts
/// `z` by `−⌊x⌋·y`), then `z` modulo `1/E`. Returns the reduced point and the
/// lattice element `γ` with `γ · point = g`.
pub fn reduce_mod_lattice(g: HeisenbergElement, lattice: Lattice) -> (NilPoint, LatticeElement) {
    reduce_dd(
        DoubleDouble::from_f64(g.x),
        DoubleDouble::from_f64(g.y),
        DoubleDouble::from_f64(g.z),
        lattice,
    )
}

/// `Γp · exp(tW)`. The product is formed in double-double so that the flow
/// law holds to well below `1e-10` for `|t|` in the thousands.
pub fn nilflow_at(p: &NilPoint, w: AlgebraVector, t: f64) -> NilPoint {
    let g = p.g;
    let dd = DoubleDouble::from_f64;
    let (tx, ex) = crate::dd::two_prod(t, w.wx);
    let (ty, ey) = crate::dd::two_prod(t, w.wy);
    let dx = DoubleDouble { hi: tx, lo: ex };
    let dy = DoubleDouble { hi: ty, lo: ey };
    let x = dd(g.x) + dx;
    let y = dd(g.y) + dy;
    // z + t·w_z + t²·w_x·w_y/2 + x₀·t·w_y
    let z = dd(g.z) + dd(t).mul_f64(w.wz) + dx.mul_dd(dy).mul_f64(0.5) + dy.mul_f64(g.x);
    reduce_dd(x, y, z, p.lattice).0
}

/// First return of `Γ[x,0,z]` to the section, `(x + α, z + x + β)` reduced
/// mod 1 with the parameters of [`AlgebraVector::section_map`].
///
/// The return time is `1/w_y`. For `w_y < 0` this is the map at the signed
/// time `1/w_y`, i.e. the inverse of the forward first return.
pub fn poincare_return(w: AlgebraVector, x: f64, z: f64) -> Result<(f64, f64)> {
    let f = w.section_map()?;
    let x = wrap01(x);
    Ok((wrap01(x + f.alpha), wrap01(z + x + f.beta)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionReturn {
    pub x: f64,
    pub z: f64,
    /// Signed: negative when the orbit was followed backwards (`w_y < 0`).
    pub time: f64,
}

/// Time tolerance of the crossing search in [`poincare_return_numeric`].
pub const RETURN_TIME_TOLERANCE: f64 = 1e-12;

/// Flows `Γ[x,0,z]` with [`nilflow_at`] in the direction of `sign(w_y)` and
/// locates the first crossing of `{y = 0}` by scanning then bisecting.
/// Independent of the closed form; used to validate it.
pub fn poincare_return_numeric(w: AlgebraVector, x: f64, z: f64) -> Result<SectionReturn> {
    if w.wy == 0.0 {
        return Err(MixlabError::DegenerateSection);
    }
    let start = NilPoint::on_section(x, z, Lattice::default());
    let sign = w.wy.signum();
    let y_at = |tau: f64| nilflow_at(&start, w, sign * tau).g.y;
    // Steps of 1/8 turn in y keep the circle lift unambiguous.
    let step = 1.0 / (8.0 * w.wy.abs());
    let (mut lo, mut lift_lo, mut y_lo) = (0.0f64, 0.0f64, start.g.y);
    let mut hi = step;
    loop {
        let y_hi = y_at(hi);
        let lift_hi = lift_lo + crate::dd::circle_diff(y_hi, y_lo);
        if lift_hi.abs() >= 1.0 {
            break;
        }
        lo = hi;
        lift_lo = lift_hi;
        y_lo = y_hi;
        hi += step;
    }
    while hi - lo > RETURN_TIME_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let lift_mid = lift_lo + crate::dd::circle_diff(y_at(mid), y_lo);
        if lift_mid.abs() >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let landed = nilflow_at(&start, w, sign * tau).g;
    Ok(SectionReturn {
        x: landed.x,
        z: landed.z,
        time: sign * tau,
    })
}

pub const DEFAULT_QUADRATURE_TOLERANCE: f64 = 1e-10;
const MAX_SIMPSON_DEPTH: u32 = 50;

/// Return time to the section for the flow time-changed by `alpha_fn`,
/// `∫₀^{1/w_y} alpha_fn(Γ[x,0,z]·exp(tW)) dt`, by adaptive Simpson.
/// Signed like [`SectionReturn::time`].
pub fn timechange_return_time(
    alpha_fn: impl Fn(&NilPoint) -> f64,
    w: AlgebraVector,
    x: f64,
    z: f64,
    tol: f64,
) -> Result<f64> {
    if w.wy == 0.0 {
        return Err(MixlabError::DegenerateSection);
    }
    if !(tol > 0.0) {
        return Err(MixlabError::InvalidParameter(format!("quadrature tolerance {tol} must be positive")));
    }
    let start = NilPoint::on_section(x, z, Lattice::default());
    let sign = w.wy.signum();
    let g = |tau: f64| -> Result<f64> {
        let v = alpha_fn(&nilflow_at(&start, w, sign * tau));
        if v <= 0.0 || v.is_nan() {
            Err(MixlabError::NonPositiveTimeChange { value: v })
        } else {
            Ok(v)
        }
    };
    let b = 1.0 / w.wy.abs();
    let (fa, fm, fb) = (g(0.0)?, g(0.5 * b)?, g(b)?);
    let whole = b / 6.0 * (fa + 4.0 * fm + fb);
    Ok(sign * simpson(&g, 0.0, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH)?)
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    g: &impl Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (g(lm)?, g(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
