//! The model: a killed spectrally positive Levy process driven along its
//! paths with velocity `A(position)`, where `1/A` is the Laplace transform
//! of the representing measure `gamma`.

use crate::error::{Error, Result};
use crate::exponent::LevyExponent;
use crate::measure::Measure;
use crate::quad;

/// State interval `I`: `[lower, oo)`, `(lower, oo)` or the whole line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    /// `None` encodes `inf I = -oo`.
    pub lower: Option<f64>,
    pub lower_included: bool,
}

impl Interval {
    pub const WHOLE_LINE: Interval = Interval {
        lower: None,
        lower_included: false,
    };

    pub fn half_line(lower: f64, included: bool) -> Interval {
        Interval {
            lower: Some(lower),
            lower_included: included,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self.lower {
            None => x.is_finite(),
            Some(l) => x.is_finite() && if self.lower_included { x >= l } else { x > l },
        }
    }

    /// Interior `I \ {inf I}`.
    pub fn interior_contains(&self, x: f64) -> bool {
        match self.lower {
            None => x.is_finite(),
            Some(l) => x.is_finite() && x > l,
        }
    }
}

/// Verdict of the heuristic boundary-membership probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMembership {
    Included,
    Excluded,
    /// The probe is a finite computation against an analytic condition;
    /// this is the safe fallback.
    Inconclusive,
}

/// Coarse shape of gamma, used to route solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaShape {
    /// `gamma = c delta_0`, so `A` is constant: the process is the pk-spLp itself.
    DiracAtZero { mass: f64 },
    /// Atoms carried by a lattice `alpha N`.
    Lattice { alpha: f64 },
    /// Pure density part.
    AbsolutelyContinuous,
    /// Atoms (off-lattice or mixed with a density part).
    General,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub psi: LevyExponent,
    /// Killing rate `p`, kept separate from `psi`.
    pub killing: f64,
    /// Representing measure of `1/A`; `A = 1 / gamma_hat` on the interior.
    pub gamma: Measure,
    pub interval: Interval,
}

impl Model {
    pub fn new(
        psi: LevyExponent,
        killing: f64,
        gamma: Measure,
        interval: Interval,
    ) -> Result<Self> {
        if !(killing >= 0.0) || !killing.is_finite() {
            return Err(Error::InvalidModel(format!(
                "killing rate must be nonnegative, got {killing}"
            )));
        }
        gamma.validate()?;
        if gamma.is_zero() {
            return Err(Error::InvalidModel(
                "gamma must be a non-zero measure".into(),
            ));
        }
        if gamma.divergent {
            return Err(Error::InvalidModel("gamma must be finite".into()));
        }
        let model = Model {
            psi,
            killing,
            gamma,
            interval,
        };
        // gamma_hat must be finite on the interior; for this representation it
        // always is, but probe a few points to catch overflow for deep lower
        // bounds (gamma_hat blows up only as theta -> -oo, where A -> 0, which
        // is fine for membership but signals a strange interval choice).
        if let Some(l) = model.interval.lower {
            for k in 1..=4 {
                let theta = l + 0.25 * k as f64;
                if !model.gamma.laplace(theta).is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "gamma_hat overflows at theta = {theta}"
                    )));
                }
            }
            // the declared boundary membership must not contradict the
            // integral test when that test is conclusive
            match model.boundary_membership()? {
                BoundaryMembership::Included if !interval.lower_included => {
                    return Err(Error::InvalidModel(format!(
                        "the boundary test says inf I = {l} belongs to I, but the interval excludes it"
                    )));
                }
                BoundaryMembership::Excluded if interval.lower_included => {
                    return Err(Error::InvalidModel(format!(
                        "the boundary test says inf I = {l} is not attained, but the interval includes it"
                    )));
                }
                _ => {}
            }
        }
        Ok(model)
    }

    /// The base point `psi^{-1}(p)`; every scale measure is carried by
    /// `[base, oo)`.
    pub fn base_point(&self) -> Result<f64> {
        self.psi.right_inverse(self.killing)
    }

    /// `1/A` at position `y`, i.e. the Laplace transform of gamma there.
    pub fn clock_rate(&self, y: f64) -> f64 {
        self.gamma.laplace(y)
    }

    /// `psi(z) - p`.
    pub fn shifted_psi(&self, z: f64) -> Result<f64> {
        Ok(self.psi.eval(z)? - self.killing)
    }

    pub fn gamma_shape(&self) -> GammaShape {
        let has_grid = self
            .gamma
            .grid
            .as_ref()
            .is_some_and(|g| g.masses.iter().any(|&m| m > 0.0));
        if !has_grid {
            let atoms = &self.gamma.atoms;
            if atoms.len() == 1 && atoms[0].0.abs() <= 1e-12 {
                return GammaShape::DiracAtZero { mass: atoms[0].1 };
            }
            if let Some(alpha) = lattice_spacing(atoms) {
                return GammaShape::Lattice { alpha };
            }
            return GammaShape::General;
        }
        if self.gamma.atoms.is_empty() {
            return GammaShape::AbsolutelyContinuous;
        }
        GammaShape::General
    }

    /// Density of the grid part of gamma at `z` (zero outside, and zero on
    /// atom-only measures).
    pub fn gamma_density(&self, z: f64) -> f64 {
        match &self.gamma.grid {
            None => 0.0,
            Some(g) => {
                if z < g.origin {
                    return 0.0;
                }
                let i = ((z - g.origin) / g.spacing).floor() as usize;
                if i >= g.masses.len() {
                    0.0
                } else {
                    g.masses[i] / g.spacing
                }
            }
        }
    }

    /// Numeric probe of the boundary condition
    /// `inf I in I  iff  int^oo dl / (l A(inf I + 1/l) psi(l)) < oo`,
    /// on geometric windows `[L, 4L]`. Heuristic: Cauchy-converging partial
    /// integrals mean `Included`, windows that stop shrinking mean at least
    /// logarithmic divergence, anything else is `Inconclusive`.
    pub fn boundary_membership(&self) -> Result<BoundaryMembership> {
        let lower = self
            .interval
            .lower
            .ok_or_else(|| Error::InvalidModel("boundary probe needs inf I > -oo".into()))?;
        let lo = self.psi.right_inverse(0.0)? + 1.0;
        let mut increments = Vec::with_capacity(18);
        let mut left = lo;
        for _ in 0..18 {
            let right = 4.0 * left;
            let integrand = |lam: f64| {
                let a_inv = self.gamma.laplace(lower + 1.0 / lam);
                match self.psi.eval(lam) {
                    Ok(p) if p > 0.0 => a_inv / (lam * p),
                    _ => 0.0,
                }
            };
            let r = quad::integrate(integrand, left, right, 1e-9)?;
            increments.push(r.value);
            left = right;
        }
        let last = *increments.last().unwrap();
        if last < 1e-8 {
            return Ok(BoundaryMembership::Included);
        }
        let n = increments.len();
        let tail_ratios_high =
            (n - 3..n).all(|k| increments[k] >= 0.8 * increments[k - 1] && increments[k] > 1e-8);
        if tail_ratios_high {
            return Ok(BoundaryMembership::Excluded);
        }
        Ok(BoundaryMembership::Inconclusive)
    }
}

/// Largest common spacing of a set of atom locations on `(0, oo)`, if they
/// sit on a lattice `alpha N` (within tolerance). Approximate gcd by
/// Euclid's algorithm with a floating-point floor.
pub fn lattice_spacing(atoms: &[(f64, f64)]) -> Option<f64> {
    if atoms.is_empty() {
        return None;
    }
    if atoms[0].0 <= 1e-12 {
        return None; // mass at zero: not carried by alpha N
    }
    let tol = 1e-9;
    let mut g = atoms[0].0;
    for &(z, _) in &atoms[1..] {
        let mut a = g.max(z);
        let mut b = g.min(z);
        while b > tol * (1.0 + a) {
            let r = a % b;
            a = b;
            b = if r > b - r { b - r } else { r };
        }
        g = a;
        if g < 1e-6 {
            return None;
        }
    }
    // verify
    for &(z, _) in atoms {
        let k = (z / g).round();
        if k < 1.0 || (z - k * g).abs() > tol * (1.0 + z) {
            return None;
        }
    }
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian() -> LevyExponent {
        LevyExponent::new(0.0, 1.0, vec![], None).unwrap()
    }

    fn quadratic() -> LevyExponent {
        LevyExponent::new(0.0, 2.0, vec![], None).unwrap() // psi = l^2
    }

    fn cpp() -> LevyExponent {
        // drift + unit jumps: psi(l) = 2l + e^{-l} - 1, linear at infinity
        LevyExponent::new(1.0, 0.0, vec![(1.0, 1.0)], None).unwrap()
    }

    #[test]
    fn interval_membership() {
        let i = Interval::half_line(0.0, true);
        assert!(i.contains(0.0) && !i.interior_contains(0.0));
        let j = Interval::half_line(0.0, false);
        assert!(!j.contains(0.0) && j.contains(0.1));
        assert!(Interval::WHOLE_LINE.contains(-50.0));
    }

    #[test]
    fn csbp_like_boundary_is_included() {
        // psi = l^2, gamma ~ Lebesgue: integrand ~ 1/l^2
        let gamma = Measure::from_grid(0.0, 1e15, vec![1e15]).unwrap();
        let m = Model::new(quadratic(), 0.0, gamma, Interval::half_line(0.0, true)).unwrap();
        assert_eq!(
            m.boundary_membership().unwrap(),
            BoundaryMembership::Included
        );
    }

    #[test]
    fn brownian_boundary_is_included() {
        // A == 1: integrand ~ 2/l^3
        let gamma = Measure::dirac(0.0, 1.0);
        let m = Model::new(brownian(), 0.0, gamma, Interval::half_line(0.0, true)).unwrap();
        assert_eq!(
            m.boundary_membership().unwrap(),
            BoundaryMembership::Included
        );
    }

    #[test]
    fn linear_psi_boundary_depends_on_speed() {
        // tail comparison oracle: with A == 1 the integrand is ~ 1/(2 l^2)
        // (included); with A(x) ~ x it is ~ 1/(2 l) (excluded).
        let with_unit_speed = Model::new(
            cpp(),
            0.0,
            Measure::dirac(0.0, 1.0),
            Interval::half_line(0.0, true),
        )
        .unwrap();
        assert_eq!(
            with_unit_speed.boundary_membership().unwrap(),
            BoundaryMembership::Included
        );
        let lebesgue = Measure::from_grid(0.0, 1e15, vec![1e15]).unwrap();
        let with_linear_speed = Model::new(
            cpp(),
            0.0,
            lebesgue.clone(),
            Interval::half_line(0.0, false),
        )
        .unwrap();
        assert_eq!(
            with_linear_speed.boundary_membership().unwrap(),
            BoundaryMembership::Excluded
        );
        // declaring the boundary included contradicts the conclusive test
        assert!(Model::new(cpp(), 0.0, lebesgue, Interval::half_line(0.0, true)).is_err());
    }

    #[test]
    fn gamma_shapes() {
        let m = |g| Model::new(brownian(), 0.0, g, Interval::WHOLE_LINE).unwrap();
        assert_eq!(
            m(Measure::dirac(0.0, 1.0)).gamma_shape(),
            GammaShape::DiracAtZero { mass: 1.0 }
        );
        match m(Measure::from_atoms(vec![(1.0, 1.0), (2.0, 0.5)]).unwrap()).gamma_shape() {
            GammaShape::Lattice { alpha } => assert!((alpha - 1.0).abs() < 1e-9),
            s => panic!("unexpected shape {s:?}"),
        }
        match m(Measure::from_atoms(vec![(2.0, 1.0), (3.0, 0.5)]).unwrap()).gamma_shape() {
            GammaShape::Lattice { alpha } => assert!((alpha - 1.0).abs() < 1e-9),
            s => panic!("unexpected shape {s:?}"),
        }
        assert_eq!(
            m(Measure::from_grid(0.0, 0.5, vec![0.5; 4]).unwrap()).gamma_shape(),
            GammaShape::AbsolutelyContinuous
        );
        let mixed = Measure::from_atoms(vec![(1.0, 1.0)])
            .unwrap()
            .add(&Measure::from_grid(1.0, 0.5, vec![0.5, 0.5]).unwrap())
            .unwrap();
        assert_eq!(m(mixed).gamma_shape(), GammaShape::General);
    }

    #[test]
    fn off_lattice_atoms_have_no_spacing() {
        assert!(lattice_spacing(&[(1.0, 1.0), (std::f64::consts::SQRT_2, 1.0)]).is_none());
        assert!(lattice_spacing(&[(0.0, 1.0)]).is_none());
    }

    #[test]
    fn zero_gamma_rejected() {
        let err = Model::new(brownian(), 0.0, Measure::empty(), Interval::WHOLE_LINE);
        assert!(err.is_err());
    }

    #[test]
    fn gamma_density_lookup() {
        let g = Measure::from_grid(1.0, 0.5, vec![0.5, 1.0]).unwrap();
        let m = Model::new(brownian(), 0.0, g, Interval::WHOLE_LINE).unwrap();
        assert_eq!(m.gamma_density(0.5), 0.0);
        assert_eq!(m.gamma_density(1.1), 1.0);
        assert_eq!(m.gamma_density(1.7), 2.0);
        assert_eq!(m.gamma_density(2.5), 0.0);
    }
}
