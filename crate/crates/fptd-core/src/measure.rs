//! Finite measures on `[0, oo)`: atoms plus an optional gridded density part.
//!
//! The representation is closed under the operations the scale-measure
//! constructions need: Laplace transforms, convolution, weighting by a
//! pointwise function, and translation. Atoms are exact throughout. A grid
//! part carries each bin's mass uniformly on `[z0 + i h, z0 + (i+1) h)`, so
//! its Laplace transform is the exact integral over each bin.
//!
//! Grid-involved convolutions move mass by at most one bin width; the
//! accumulated displacement bound is tracked in `location_slack`, from which
//! a bound on the Laplace factorization error follows (`laplace_bias`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two locations closer than this (relative to scale) are one atom.
const MERGE_TOL: f64 = 1e-9;

/// Gridded density part: bin `i` carries `masses[i]` uniformly on
/// `[origin + i*spacing, origin + (i+1)*spacing)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: f64,
    pub spacing: f64,
    pub masses: Vec<f64>,
}

/// A finite measure on `[0, oo)`, possibly flagged as divergent
/// (infinite total mass detected, e.g. a `q/0` weight on an atom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    /// Sorted `(location, mass)` pairs, locations strictly increasing, masses positive.
    pub atoms: Vec<(f64, f64)>,
    pub grid: Option<Grid>,
    /// Set when an operation produced an infinite-mass object; `laplace` then returns +oo.
    pub divergent: bool,
    /// Upper bound on how far any mass may have been displaced by grid
    /// convolutions and lattice snapping, in units of location.
    pub location_slack: f64,
}

fn merge_close(a: f64, b: f64) -> bool {
    (b - a).abs() <= MERGE_TOL * (1.0 + a.abs().max(b.abs()))
}

fn normalize_atoms(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.retain(|&(_, m)| m > 0.0);
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (z, m) in atoms {
        match out.last_mut() {
            Some(last) if merge_close(last.0, z) => last.1 += m,
            _ => out.push((z, m)),
        }
    }
    out
}

/// Exact Laplace factor of a uniform unit-mass bin of width `h` at the
/// origin: `(1 - e^{-theta h}) / (theta h)`, with the `theta -> 0` limit.
fn bin_factor(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

impl Measure {
    pub fn empty() -> Self {
        Measure {
            atoms: Vec::new(),
            grid: None,
            divergent: false,
            location_slack: 0.0,
        }
    }

    pub fn dirac(location: f64, mass: f64) -> Self {
        Measure {
            atoms: if mass > 0.0 {
                vec![(location, mass)]
            } else {
                Vec::new()
            },
            grid: None,
            divergent: false,
            location_slack: 0.0,
        }
    }

    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(z, m) in &atoms {
            if !z.is_finite() || z < 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "atom location {z} not in [0, oo)"
                )));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "atom mass {m} not finite nonnegative"
                )));
            }
        }
        Ok(Measure {
            atoms: normalize_atoms(atoms),
            grid: None,
            divergent: false,
            location_slack: 0.0,
        })
    }

    pub fn from_grid(origin: f64, spacing: f64, masses: Vec<f64>) -> Result<Self> {
        if !origin.is_finite() || origin < 0.0 {
            return Err(Error::InvalidMeasure(format!(
                "grid origin {origin} not in [0, oo)"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "grid spacing {spacing} must be positive"
            )));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidMeasure(
                "grid masses must be finite nonnegative".into(),
            ));
        }
        Ok(Measure {
            atoms: Vec::new(),
            grid: Some(Grid {
                origin,
                spacing,
                masses,
            }),
            divergent: false,
            location_slack: 0.0,
        })
    }

    /// Validity check used on deserialized input.
    pub fn validate(&self) -> Result<()> {
        for w in self.atoms.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidMeasure("atom locations must increase".into()));
            }
        }
        for &(z, m) in &self.atoms {
            if !z.is_finite() || z < 0.0 || !m.is_finite() || m <= 0.0 {
                return Err(Error::InvalidMeasure(format!("bad atom ({z}, {m})")));
            }
        }
        if let Some(g) = &self.grid {
            if !g.origin.is_finite() || g.origin < 0.0 || !(g.spacing > 0.0) {
                return Err(Error::InvalidMeasure("bad grid descriptor".into()));
            }
            if g.masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
                return Err(Error::InvalidMeasure("bad grid masses".into()));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        !self.divergent
            && self.atoms.is_empty()
            && self
                .grid
                .as_ref()
                .is_none_or(|g| g.masses.iter().all(|&m| m == 0.0))
    }

    pub fn total_mass(&self) -> f64 {
        if self.divergent {
            return f64::INFINITY;
        }
        let a: f64 = self.atoms.iter().map(|&(_, m)| m).sum();
        let g: f64 = self.grid.as_ref().map_or(0.0, |g| g.masses.iter().sum());
        a + g
    }

    /// Infimum of the support (left edge for grid bins), `None` for the zero measure.
    pub fn support_infimum(&self) -> Option<f64> {
        let atom = self.atoms.first().map(|&(z, _)| z);
        let grid = self.grid.as_ref().and_then(|g| {
            g.masses
                .iter()
                .position(|&m| m > 0.0)
                .map(|i| g.origin + i as f64 * g.spacing)
        });
        match (atom, grid) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, b) => b,
        }
    }

    /// Mass of the atom at `location`, 0 when there is none.
    pub fn atom_mass_at(&self, location: f64) -> f64 {
        self.atoms
            .iter()
            .find(|&&(z, _)| merge_close(z, location))
            .map_or(0.0, |&(_, m)| m)
    }

    /// Laplace transform at `theta` (any real; may be +oo for divergent measures
    /// or overflow for very negative `theta`).
    pub fn laplace(&self, theta: f64) -> f64 {
        if self.divergent {
            return f64::INFINITY;
        }
        let mut total = 0.0;
        for &(z, m) in &self.atoms {
            total += m * (-theta * z).exp();
        }
        if let Some(g) = &self.grid {
            let rho = (-theta * g.spacing).exp();
            let mut s = 0.0;
            for &m in g.masses.iter().rev() {
                s = s * rho + m;
            }
            total += s * (-theta * g.origin).exp() * bin_factor(theta * g.spacing);
        }
        total
    }

    /// Bound on `|laplace(mu * nu, theta) - mu_hat(theta) nu_hat(theta)|` coming from
    /// the tracked location slack, valid for `theta >= 0`.
    pub fn laplace_bias(&self, theta: f64) -> f64 {
        if self.location_slack == 0.0 {
            return 0.0;
        }
        let l = self.laplace(theta);
        ((theta.abs() * self.location_slack).exp() - 1.0) * l
    }

    /// Translate by `s >= 0`.
    pub fn shift(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "shift must be nonnegative, got {s}"
            )));
        }
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.0 += s;
        }
        if let Some(g) = &mut out.grid {
            g.origin += s;
        }
        Ok(out)
    }

    /// Multiply by the density `f`: atom masses by `f(location)`, bin masses by
    /// `f(bin midpoint)`. An infinite value of `f` on positive mass marks the
    /// result divergent instead of erroring.
    pub fn scale_by_function(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut divergent = self.divergent;
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for &(z, m) in &self.atoms {
            let w = f(z);
            debug_assert!(!w.is_nan(), "weight function returned NaN at {z}");
            if w.is_infinite() {
                divergent = true;
            } else if w > 0.0 {
                atoms.push((z, m * w));
            }
        }
        let grid = self.grid.as_ref().map(|g| {
            let masses = g
                .masses
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    if m == 0.0 {
                        return 0.0;
                    }
                    let mid = g.origin + (i as f64 + 0.5) * g.spacing;
                    let w = f(mid);
                    debug_assert!(!w.is_nan(), "weight function returned NaN at {mid}");
                    if w.is_infinite() {
                        divergent = true;
                        0.0
                    } else {
                        m * w
                    }
                })
                .collect();
            Grid {
                origin: g.origin,
                spacing: g.spacing,
                masses,
            }
        });
        Measure {
            atoms,
            grid,
            divergent,
            location_slack: self.location_slack,
        }
    }

    /// Convolution. Atom pairs are exact; an atom against a grid shifts the
    /// grid (snapped onto the common lattice, at most `h/2` displacement);
    /// grid against grid is the discrete convolution of bin masses with the
    /// product mass of two bins split evenly over the two lattice cells it
    /// truly spans. The displacement bound accumulates in `location_slack`.
    pub fn convolve(&self, other: &Measure) -> Result<Measure> {
        if self.divergent || other.divergent {
            return Err(Error::DivergentMeasure);
        }
        let mut slack = self.location_slack + other.location_slack;

        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for &(za, ma) in &self.atoms {
            for &(zb, mb) in &other.atoms {
                atoms.push((za + zb, ma * mb));
            }
        }

        // Collect grid contributions as (origin, spacing, masses) pieces.
        let mut pieces: Vec<(f64, Grid)> = Vec::new(); // (extra snap slack, grid)
        if let Some(g) = &other.grid {
            for &(za, ma) in &self.atoms {
                let masses = g.masses.iter().map(|&m| m * ma).collect();
                pieces.push((
                    0.0,
                    Grid {
                        origin: g.origin + za,
                        spacing: g.spacing,
                        masses,
                    },
                ));
            }
        }
        if let Some(g) = &self.grid {
            for &(zb, mb) in &other.atoms {
                let masses = g.masses.iter().map(|&m| m * mb).collect();
                pieces.push((
                    0.0,
                    Grid {
                        origin: g.origin + zb,
                        spacing: g.spacing,
                        masses,
                    },
                ));
            }
            if let Some(go) = &other.grid {
                if (g.spacing - go.spacing).abs() > MERGE_TOL * g.spacing.max(go.spacing) {
                    return Err(Error::IncompatibleSpacing {
                        left: g.spacing,
                        right: go.spacing,
                    });
                }
                let n1 = g.masses.len();
                let n2 = go.masses.len();
                let mut raw = vec![0.0; n1 + n2 - 1];
                for (i, &mi) in g.masses.iter().enumerate() {
                    if mi == 0.0 {
                        continue;
                    }
                    for (j, &mj) in go.masses.iter().enumerate() {
                        raw[i + j] += mi * mj;
                    }
                }
                // Product of two uniform bins spans two lattice cells; split evenly.
                let mut masses = vec![0.0; n1 + n2];
                for (k, &c) in raw.iter().enumerate() {
                    masses[k] += 0.5 * c;
                    masses[k + 1] += 0.5 * c;
                }
                pieces.push((
                    g.spacing,
                    Grid {
                        origin: g.origin + go.origin,
                        spacing: g.spacing,
                        masses,
                    },
                ));
            }
        }

        let grid = if pieces.is_empty() {
            None
        } else {
            let h = pieces[0].1.spacing;
            for (_, p) in &pieces {
                if (p.spacing - h).abs() > MERGE_TOL * h {
                    return Err(Error::IncompatibleSpacing {
                        left: h,
                        right: p.spacing,
                    });
                }
            }
            let base = pieces
                .iter()
                .map(|(_, p)| p.origin)
                .fold(f64::INFINITY, f64::min);
            let mut end = 0usize;
            let mut offsets = Vec::with_capacity(pieces.len());
            for (extra, p) in &pieces {
                let k = ((p.origin - base) / h).round() as usize;
                let snap = (p.origin - (base + k as f64 * h)).abs();
                slack = slack.max(self.location_slack + other.location_slack + snap + extra);
                offsets.push(k);
                end = end.max(k + p.masses.len());
            }
            let mut masses = vec![0.0; end];
            for ((_, p), k) in pieces.iter().zip(&offsets) {
                for (i, &m) in p.masses.iter().enumerate() {
                    masses[k + i] += m;
                }
            }
            Some(Grid {
                origin: base,
                spacing: h,
                masses,
            })
        };

        Ok(Measure {
            atoms: normalize_atoms(atoms),
            grid,
            divergent: false,
            location_slack: slack,
        })
    }

    /// Re-bin the grid part onto a new spacing, preserving total mass. Each
    /// source bin's mass spreads uniformly over its interval and is collected
    /// into the target bins; mass moves by at most one bin width of either
    /// lattice, which accrues to `location_slack`.
    pub fn resampled(&self, spacing: f64) -> Result<Measure> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "resampling spacing must be positive, got {spacing}"
            )));
        }
        let Some(g) = &self.grid else {
            return Ok(self.clone());
        };
        let width = g.masses.len() as f64 * g.spacing;
        let n_new = (width / spacing).ceil().max(1.0) as usize;
        let mut masses = vec![0.0; n_new];
        for (i, &m) in g.masses.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let lo = i as f64 * g.spacing;
            let hi = lo + g.spacing;
            let density = m / g.spacing;
            let mut j = ((lo / spacing).floor() as usize).min(n_new - 1);
            loop {
                let b_lo = j as f64 * spacing;
                let b_hi = b_lo + spacing;
                let overlap = hi.min(b_hi) - lo.max(b_lo);
                if overlap > 0.0 {
                    masses[j] += density * overlap;
                }
                if b_hi >= hi || j + 1 >= n_new {
                    // any residual sliver from rounding lands in the last bin
                    if b_hi < hi && j + 1 >= n_new {
                        masses[n_new - 1] += density * (hi - b_hi).max(0.0);
                    }
                    break;
                }
                j += 1;
            }
        }
        Ok(Measure {
            atoms: self.atoms.clone(),
            grid: Some(Grid {
                origin: g.origin,
                spacing,
                masses,
            }),
            divergent: self.divergent,
            location_slack: self.location_slack + g.spacing.max(spacing),
        })
    }

    /// Pointwise sum of two measures. Grid parts must share their lattice.
    pub fn add(&self, other: &Measure) -> Result<Measure> {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let grid = match (&self.grid, &other.grid) {
            (None, None) => None,
            (Some(g), None) | (None, Some(g)) => Some(g.clone()),
            (Some(a), Some(b)) => {
                if (a.spacing - b.spacing).abs() > MERGE_TOL * a.spacing {
                    return Err(Error::IncompatibleSpacing {
                        left: a.spacing,
                        right: b.spacing,
                    });
                }
                let h = a.spacing;
                let base = a.origin.min(b.origin);
                let ka = ((a.origin - base) / h).round() as usize;
                let kb = ((b.origin - base) / h).round() as usize;
                for (g, k) in [(a, ka), (b, kb)] {
                    let snap = (g.origin - (base + k as f64 * h)).abs();
                    if snap > MERGE_TOL * (1.0 + base.abs()) {
                        return Err(Error::InvalidMeasure(
                            "grid parts do not share a lattice; resample first".into(),
                        ));
                    }
                }
                let n = (ka + a.masses.len()).max(kb + b.masses.len());
                let mut masses = vec![0.0; n];
                for (i, &m) in a.masses.iter().enumerate() {
                    masses[ka + i] += m;
                }
                for (i, &m) in b.masses.iter().enumerate() {
                    masses[kb + i] += m;
                }
                Some(Grid {
                    origin: base,
                    spacing: h,
                    masses,
                })
            }
        };
        Ok(Measure {
            atoms: normalize_atoms(atoms),
            grid,
            divergent: self.divergent || other.divergent,
            location_slack: self.location_slack.max(other.location_slack),
        })
    }

    /// Scalar multiple.
    pub fn scaled(&self, c: f64) -> Measure {
        debug_assert!(c >= 0.0);
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.1 *= c;
        }
        if let Some(g) = &mut out.grid {
            for m in &mut g.masses {
                *m *= c;
            }
        }
        out
    }

    /// Replace the grid part by midpoint atoms of the same bin masses.
    /// Exact in total mass; displaces mass by at most `spacing/2` per bin,
    /// with Laplace error `O((theta h)^2 / 24)` instead of the bound.
    pub fn atomized(&self) -> Measure {
        let Some(g) = &self.grid else {
            return self.clone();
        };
        let mut atoms = self.atoms.clone();
        for (i, &m) in g.masses.iter().enumerate() {
            if m > 0.0 {
                atoms.push((g.origin + (i as f64 + 0.5) * g.spacing, m));
            }
        }
        Measure {
            atoms: normalize_atoms(atoms),
            grid: None,
            divergent: self.divergent,
            location_slack: self.location_slack + 0.5 * g.spacing,
        }
    }
}
