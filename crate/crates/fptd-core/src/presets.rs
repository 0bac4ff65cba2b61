//! Named model building blocks shared by the CLI and the validation suite.

use crate::error::Result;
use crate::exponent::LevyExponent;
use crate::measure::Measure;

/// `psi(l) = l^2 / 2`: standard Brownian motion.
pub fn brownian() -> LevyExponent {
    LevyExponent::new(0.0, 1.0, vec![], None).expect("valid exponent")
}

/// `psi(l) = l^2 - l`: Brownian motion with variance 2 drifting to `+oo`
/// (`psi^{-1}(0) = 1`).
pub fn brownian_with_drift() -> LevyExponent {
    LevyExponent::new(-1.0, 2.0, vec![], None).expect("valid exponent")
}

/// `psi(l) = 2l + e^{-l} - 1`: downward drift plus unit upward jumps at
/// rate one; linear at infinity.
pub fn compound_poisson() -> LevyExponent {
    LevyExponent::new(1.0, 0.0, vec![(1.0, 1.0)], None).expect("valid exponent")
}

/// `gamma = delta_0`: constant velocity, the process is the pk-spLp itself.
pub fn gamma_dirac_zero() -> Measure {
    Measure::dirac(0.0, 1.0)
}

/// `gamma = delta_alpha`: exponential velocity `A(x) = e^{alpha x}`
/// (self-similar after the space transform).
pub fn gamma_single_atom(alpha: f64, mass: f64) -> Measure {
    Measure::dirac(alpha, mass)
}

/// Unit-rate Lebesgue measure restricted to `[0, z_max]`, represented
/// exactly by uniform bins (`A(x) ~ x` for `x >> 1/z_max`).
pub fn gamma_lebesgue(z_max: f64, bins: usize) -> Result<Measure> {
    let h = z_max / bins as f64;
    Measure::from_grid(0.0, h, vec![h; bins])
}
