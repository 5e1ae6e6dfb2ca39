//! Shared inputs for the `kernels` benchmarks.

use mixlab_core::{catalog, certify_roof, FiberedTrigPoly, Roof, SkewShift};

/// The golden-mean skew-shift with `β = 0`.
pub fn golden() -> SkewShift {
    SkewShift::golden(0.0)
}

/// `sin(2πy) + 2` and its certified roof.
pub fn mixing_roof() -> (FiberedTrigPoly, Roof) {
    let poly = catalog::sine_roof(2.0);
    let roof = certify_roof(&poly).expect("sin + 2 is positive");
    (poly, roof)
}

/// `cos(2π(x + y)) + sin(2πx) + 3`, a roof with `x`-dependent fiber
/// coefficients.
pub fn mixed_roof() -> FiberedTrigPoly {
    catalog::cosine_sine_roof(1, 1, 3.0)
}
