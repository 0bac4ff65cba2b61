//! The Laplace exponent of a spectrally positive Levy process.
//!
//! Convention: `psi(lambda) = c*lambda + (sigma^2/2)*lambda^2 +
//! int (e^{-lambda r} - 1 + lambda r 1{r<=1}) Jump(dr)` so that
//! `E[e^{-lambda (xi_u - xi_0)}] = e^{u psi(lambda)}` with no killing.
//! Any other compensation cutoff is a reparametrization of the drift.
//!
//! The right-continuous inverse `psi^{-1}(u) = inf{s : psi(s) > u}` picks the
//! largest root on the increasing branch, so `psi^{-1}(0) > 0` exactly when
//! the process drifts to `+oo`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

/// Relative tolerance for the compensated jump-density integrals.
const DENSITY_QUAD_TOL: f64 = 1e-11;
/// Largest lambda probed when bracketing roots of psi.
const LAMBDA_MAX: f64 = 1e15;
/// Inverse results below this snap to exactly zero.
const INVERSE_SNAP: f64 = 1e-12;

/// Absolutely continuous jump part, given by a pointwise density on `(0, oo)`.
#[derive(Clone)]
pub struct JumpDensity {
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Declared growth `density(r) = O(r^{-a})` as `r -> 0+`; `a < 3` required.
    singular_exponent: f64,
    /// Quadrature truncates the support here; the density must be negligible beyond.
    upper_cutoff: f64,
}

impl JumpDensity {
    pub fn new(
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        singular_exponent: f64,
        upper_cutoff: f64,
    ) -> Result<Self> {
        if !(singular_exponent < 3.0) {
            return Err(Error::JumpDensityNotIntegrable(singular_exponent));
        }
        if !(upper_cutoff > 0.0) || !upper_cutoff.is_finite() {
            return Err(Error::InvalidExponent(format!(
                "density upper cutoff must be positive finite, got {upper_cutoff}"
            )));
        }
        Ok(JumpDensity {
            density: Arc::new(density),
            singular_exponent,
            upper_cutoff,
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.density)(r)
    }

    pub fn upper_cutoff(&self) -> f64 {
        self.upper_cutoff
    }
}

impl fmt::Debug for JumpDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpDensity")
            .field("singular_exponent", &self.singular_exponent)
            .field("upper_cutoff", &self.upper_cutoff)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct LevyExponent {
    drift: f64,
    gaussian: f64,
    jump_atoms: Vec<(f64, f64)>,
    jump_density: Option<JumpDensity>,
}

impl LevyExponent {
    /// Build and sanity-check an exponent. `jump_atoms` are `(size, rate)`
    /// pairs with positive sizes and rates. Rejects subordinators.
    pub fn new(
        drift: f64,
        gaussian: f64,
        jump_atoms: Vec<(f64, f64)>,
        jump_density: Option<JumpDensity>,
    ) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidExponent(format!("drift {drift} not finite")));
        }
        if !gaussian.is_finite() || gaussian < 0.0 {
            return Err(Error::InvalidExponent(format!(
                "gaussian coefficient {gaussian} must be nonnegative"
            )));
        }
        for &(r, rate) in &jump_atoms {
            if !(r > 0.0) || !r.is_finite() || !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::InvalidExponent(format!(
                    "jump atom (size {r}, rate {rate}) must have positive finite entries"
                )));
            }
        }
        let psi = LevyExponent {
            drift,
            gaussian,
            jump_atoms,
            jump_density,
        };
        psi.check_shape()?;
        Ok(psi)
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn gaussian(&self) -> f64 {
        self.gaussian
    }

    pub fn jump_atoms(&self) -> &[(f64, f64)] {
        &self.jump_atoms
    }

    pub fn jump_density(&self) -> Option<&JumpDensity> {
        self.jump_density.as_ref()
    }

    /// Evaluate `psi(lambda)` for `lambda >= 0`. Atom terms are exact; the
    /// density part uses adaptive quadrature split at the compensation
    /// boundary `r = 1`, where the integrand changes analytic form.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "psi is evaluated on [0, oo), got {lambda}"
            )));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let mut value = self.drift * lambda + 0.5 * self.gaussian * lambda * lambda;
        for &(r, rate) in &self.jump_atoms {
            value += rate * compensated(lambda, r);
        }
        if let Some(d) = &self.jump_density {
            let lower = quad::integrate(
                |r| {
                    if r <= 0.0 {
                        0.0
                    } else {
                        compensated(lambda, r) * d.eval(r)
                    }
                },
                0.0,
                1.0f64.min(d.upper_cutoff),
                DENSITY_QUAD_TOL,
            )?;
            value += lower.value;
            if d.upper_cutoff > 1.0 {
                let upper = quad::integrate(
                    |r| ((-lambda * r).exp_m1()) * d.eval(r),
                    1.0,
                    d.upper_cutoff,
                    DENSITY_QUAD_TOL,
                )?;
                value += upper.value;
            }
        }
        Ok(value)
    }

    /// `psi^{-1}(u) = inf{s : psi(s) > u}` for `u >= 0`, by bracketing and
    /// bisection on the increasing branch; results below 1e-12 snap to zero.
    pub fn right_inverse(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) || !u.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "the inverse is defined on [0, oo), got {u}"
            )));
        }
        // Bracket: find hi with psi(hi) > u.
        let mut hi = 1.0;
        let mut psi_hi = self.eval(hi)?;
        while psi_hi <= u {
            hi *= 2.0;
            if hi > LAMBDA_MAX {
                return Err(Error::BracketExceeded {
                    lambda_max: LAMBDA_MAX,
                });
            }
            psi_hi = self.eval(hi)?;
        }
        // Minimizer of the convex psi on [0, hi] by ternary search, so the
        // bisection below stays on the increasing branch.
        let (mut a, mut b) = (0.0, hi);
        while b - a > 1e-13 * (1.0 + b) {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if self.eval(m1)? <= self.eval(m2)? {
                b = m2;
            } else {
                a = m1;
            }
        }
        let mut lo = a;
        for _ in 0..200 {
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.eval(mid)? > u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(if hi < INVERSE_SNAP { 0.0 } else { hi })
    }

    /// Esscher transform: the exponent of `psi(psi^{-1}(p) + .) - p`, returned
    /// as a genuine triplet. With `beta = psi^{-1}(p)`: the drift gains
    /// `sigma^2 beta` plus the compensation correction
    /// `int_{(0,1]} r (1 - e^{-beta r}) Jump(dr)`, the Gaussian part is
    /// unchanged, and the jump measure is tilted to `e^{-beta r} Jump(dr)`.
    /// Satisfies `psi_tilted(0) = 0` exactly and `psi_tilted^{-1}(0) = 0`
    /// within bisection accuracy.
    pub fn esscher(&self, killing: f64) -> Result<LevyExponent> {
        if !(killing >= 0.0) || !killing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "killing rate must be nonnegative, got {killing}"
            )));
        }
        let beta = self.right_inverse(killing)?;
        if beta == 0.0 {
            return Ok(self.clone());
        }
        let mut drift = self.drift + self.gaussian * beta;
        let jump_atoms: Vec<(f64, f64)> = self
            .jump_atoms
            .iter()
            .map(|&(r, rate)| {
                if r <= 1.0 {
                    drift += rate * r * (-(-beta * r).exp_m1());
                }
                (r, rate * (-beta * r).exp())
            })
            .collect();
        let jump_density = match &self.jump_density {
            None => None,
            Some(d) => {
                let correction = quad::integrate(
                    |r| {
                        if r <= 0.0 {
                            0.0
                        } else {
                            r * (-(-beta * r).exp_m1()) * d.eval(r)
                        }
                    },
                    0.0,
                    1.0f64.min(d.upper_cutoff),
                    DENSITY_QUAD_TOL,
                )?;
                drift += correction.value;
                let inner = d.clone();
                Some(JumpDensity {
                    density: Arc::new(move |r: f64| (-beta * r).exp() * inner.eval(r)),
                    singular_exponent: d.singular_exponent,
                    upper_cutoff: d.upper_cutoff,
                })
            }
        };
        LevyExponent::new(drift, self.gaussian, jump_atoms, jump_density)
    }

    /// Grid sanity checks: psi(0) = 0 structurally, convexity (nondecreasing
    /// difference quotients) on a 200-point log grid, and not a subordinator
    /// (psi must eventually be positive and increasing).
    fn check_shape(&self) -> Result<()> {
        let grid: Vec<f64> = (0..200)
            .map(|i| 10f64.powf(-4.0 + 10.0 * i as f64 / 199.0))
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&l| self.eval(l)).collect::<Result<_>>()?;
        let mut prev_slope = f64::NEG_INFINITY;
        let mut max_abs: f64 = 1.0;
        for v in &vals {
            max_abs = max_abs.max(v.abs());
        }
        for i in 1..grid.len() {
            let slope = (vals[i] - vals[i - 1]) / (grid[i] - grid[i - 1]);
            if slope < prev_slope - 1e-7 * (1.0 + prev_slope.abs()) {
                return Err(Error::InvalidExponent(format!(
                    "not convex near lambda = {}",
                    grid[i]
                )));
            }
            prev_slope = prev_slope.max(slope);
        }
        if self.gaussian == 0.0 {
            // psi must go to +oo; probe a doubling sweep.
            let mut l = 1.0;
            let mut ok = false;
            while l <= 1e12 {
                if self.eval(l)? > 0.0 {
                    ok = true;
                    break;
                }
                l *= 2.0;
            }
            if !ok {
                return Err(Error::InvalidExponent(
                    "psi stays nonpositive; the process is a subordinator".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The compensated jump integrand `e^{-lambda r} - 1 + lambda r 1{r <= 1}`,
/// evaluated stably for small `lambda r`.
fn compensated(lambda: f64, r: f64) -> f64 {
    let x = lambda * r;
    if r <= 1.0 {
        // e^{-x} - 1 + x, stable via expm1
        (-x).exp_m1() + x
    } else {
        (-x).exp_m1()
    }
}

/// Explosion is precluded when `p > 0`, or `p = 0` and the process does not
/// drift to `+oo` (`psi^{-1}(0) = 0`). Otherwise the first-passage problem
/// only determines the scale measure together with the carrier restriction.
pub fn explosion_safe(psi: &LevyExponent, killing: f64) -> bool {
    if killing > 0.0 {
        return true;
    }
    matches!(psi.right_inverse(0.0), Ok(root) if root <= 1e-10)
}
