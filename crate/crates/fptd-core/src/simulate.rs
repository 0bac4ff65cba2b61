//! Monte Carlo ground truth: simulate the killed process on its internal
//! clock, accumulate the external time `int du / A(position)`, and estimate
//! `E_x[e^{-q T_l^-}; T_l^- < lifetime]`.
//!
//! The simulable class is drift + Brownian part + finite-activity positive
//! jumps; an absolutely continuous jump part is discretized into rate atoms
//! and jumps below the cutoff are dropped together with their compensation
//! (the neglected part perturbs the exponent at second order in the cutoff).
//!
//! Downward motion is continuous, so passage happens on the diffusion part:
//! each step applies a Brownian-bridge crossing check against the barrier,
//! which removes the O(sqrt(dt)) bias of plain step-granularity detection.
//! Paths use one counter-derived RNG stream each, so estimates do not depend
//! on thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::quad;

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Internal-time Euler step.
    pub dt: f64,
    /// Internal-time budget; paths still alive at the budget are censored.
    pub internal_budget: f64,
    /// Jumps below this size are dropped (with their compensation).
    pub jump_cutoff: f64,
}

impl SimOptions {
    pub fn new(dt: f64) -> Self {
        SimOptions {
            dt,
            internal_budget: 1e4,
            jump_cutoff: 1e-3,
        }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.internal_budget = budget;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.internal_budget > 0.0) {
            return Err(Error::InvalidArgument(
                "internal budget must be positive".into(),
            ));
        }
        if !(self.jump_cutoff > 0.0) {
            return Err(Error::InvalidArgument(
                "jump cutoff must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Where a single path ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub position: f64,
    pub elapsed_internal: f64,
    pub elapsed_external: f64,
    pub killed: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FptdEstimate {
    pub q: f64,
    pub x: f64,
    pub level: f64,
    /// Mean of `e^{-q T}` over all paths, non-passed contributing zero.
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_passed: usize,
    pub n_killed: usize,
    pub n_censored: usize,
    /// One-sided bound on the mass censoring may have removed:
    /// `sum_censored e^{-q ext_at_budget} / n`.
    pub censor_bias_bound: f64,
    pub dt: f64,
    pub seed: u64,
}

/// Path dynamics compiled from the exponent: path drift with the kept jumps'
/// compensation folded in, Gaussian coefficient, and jump atoms with their
/// cumulative rates for sampling.
#[derive(Debug, Clone)]
struct Dynamics {
    drift: f64,
    sigma: f64,
    jump_sizes: Vec<f64>,
    jump_cum_rates: Vec<f64>,
    total_rate: f64,
}

fn compile_dynamics(model: &Model, cutoff: f64) -> Result<Dynamics> {
    let psi = &model.psi;
    let mut atoms: Vec<(f64, f64)> = psi
        .jump_atoms()
        .iter()
        .copied()
        .filter(|&(r, _)| r >= cutoff)
        .collect();
    if let Some(d) = psi.jump_density() {
        // Geometric bins from the cutoff to the declared upper end, each an
        // atom at the bin's mass centroid with the bin's total rate.
        let hi = d.upper_cutoff();
        if hi > cutoff {
            let n_bins = 128usize;
            let ratio = (hi / cutoff).powf(1.0 / n_bins as f64);
            let mut left = cutoff;
            for _ in 0..n_bins {
                let right = (left * ratio).min(hi);
                let rate = quad::integrate(|r| d.eval(r), left, right, 1e-8)?.value;
                if rate > 0.0 {
                    let mean = quad::integrate(|r| r * d.eval(r), left, right, 1e-8)?.value;
                    atoms.push((mean / rate, rate));
                }
                left = right;
            }
        }
    }
    // Path drift: -(c + sum of compensation of the kept jumps with size <= 1).
    let mut drift = -psi.drift();
    for &(r, rate) in &atoms {
        if r <= 1.0 {
            drift -= rate * r;
        }
    }
    let mut cum = Vec::with_capacity(atoms.len());
    let mut total = 0.0;
    for &(_, rate) in &atoms {
        total += rate;
        cum.push(total);
    }
    Ok(Dynamics {
        drift,
        sigma: psi.gaussian().sqrt(),
        jump_sizes: atoms.iter().map(|&(r, _)| r).collect(),
        jump_cum_rates: cum,
        total_rate: total,
    })
}

fn sample_jump(dyn_: &Dynamics, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen::<f64>() * dyn_.total_rate;
    let idx = dyn_.jump_cum_rates.partition_point(|&c| c < u);
    dyn_.jump_sizes[idx.min(dyn_.jump_sizes.len() - 1)]
}

fn exp_rv(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).ln() / rate
}

fn run_path(
    model: &Model,
    dyn_: &Dynamics,
    x0: f64,
    level: f64,
    opts: &SimOptions,
    rng: &mut ChaCha8Rng,
) -> PathState {
    run_path_observed(model, dyn_, x0, level, opts, rng, |_, _, _| {})
}

#[allow(clippy::too_many_arguments)]
fn run_path_observed(
    model: &Model,
    dyn_: &Dynamics,
    x0: f64,
    level: f64,
    opts: &SimOptions,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(f64, f64, f64),
) -> PathState {
    let dt = opts.dt;
    let sqrt_dt = dt.sqrt();
    let sigma = dyn_.sigma;
    let kill_at = if model.killing > 0.0 {
        exp_rv(rng, model.killing)
    } else {
        f64::INFINITY
    };
    let mut next_jump = if dyn_.total_rate > 0.0 {
        exp_rv(rng, dyn_.total_rate)
    } else {
        f64::INFINITY
    };

    let mut position = x0;
    let mut internal = 0.0f64;
    let mut external = 0.0f64;
    let mut rate_here = model.clock_rate(position);

    while internal < opts.internal_budget {
        let step = dt.min(opts.internal_budget - internal);
        // diffusion + drift move
        let y0 = position;
        let mut y1 = y0 + dyn_.drift * step;
        if sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            y1 += sigma * sqrt_dt * z;
        }
        // crossing of the barrier by the continuous part within this step
        let mut crossed_at: Option<f64> = None;
        if y1 <= level {
            let denom = y0 - y1;
            let tau = if denom > 0.0 {
                (step * (y0 - level) / denom).clamp(0.0, step)
            } else {
                step
            };
            crossed_at = Some(tau);
        } else if sigma > 0.0 && y0 > level {
            let a = y0 - level;
            let b = y1 - level;
            let p_cross = (-2.0 * a * b / (sigma * sigma * step)).exp();
            let u: f64 = rng.gen();
            if u < p_cross {
                crossed_at = Some(step * a / (a + b));
            }
        }

        if let Some(tau) = crossed_at {
            if kill_at <= internal + tau {
                let r_kill = model.clock_rate(y0);
                return PathState {
                    position: y0,
                    elapsed_internal: kill_at,
                    elapsed_external: external + (kill_at - internal) * 0.5 * (rate_here + r_kill),
                    killed: true,
                    passed: false,
                };
            }
            let rate_cross = model.clock_rate(level);
            return PathState {
                position: level,
                elapsed_internal: internal + tau,
                elapsed_external: external + tau * 0.5 * (rate_here + rate_cross),
                killed: false,
                passed: true,
            };
        }

        if kill_at <= internal + step {
            let r1 = model.clock_rate(y1);
            return PathState {
                position: y1,
                elapsed_internal: kill_at,
                elapsed_external: external + (kill_at - internal) * 0.5 * (rate_here + r1),
                killed: true,
                passed: false,
            };
        }

        // positive jumps inside the step (they only move the path up)
        while next_jump <= internal + step {
            y1 += sample_jump(dyn_, rng);
            next_jump += exp_rv(rng, dyn_.total_rate);
        }

        let r1 = model.clock_rate(y1);
        external += step * 0.5 * (rate_here + r1);
        rate_here = r1;
        position = y1;
        internal += step;
        observe(internal, position, external);
    }

    PathState {
        position,
        elapsed_internal: internal,
        elapsed_external: external,
        killed: false,
        passed: false,
    }
}

/// Simulate a single path on its own RNG stream (derived from `(seed, stream)`).
pub fn simulate_path(
    model: &Model,
    x0: f64,
    level: f64,
    opts: &SimOptions,
    seed: u64,
    stream: u64,
) -> Result<PathState> {
    opts.validate()?;
    check_geometry(model, x0, level)?;
    let dyn_ = compile_dynamics(model, opts.jump_cutoff)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(run_path(model, &dyn_, x0, level, opts, &mut rng))
}

/// Debugging view of one path: the final state plus a trace with one
/// `(internal, position, external)` record every `every` steps, drawn from
/// exactly the same stream as `simulate_path`.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn trace_path(
    model: &Model,
    x0: f64,
    level: f64,
    opts: &SimOptions,
    seed: u64,
    stream: u64,
    every: usize,
) -> Result<(PathState, Vec<(f64, f64, f64)>)> {
    opts.validate()?;
    check_geometry(model, x0, level)?;
    if every == 0 {
        return Err(Error::InvalidArgument(
            "trace stride must be positive".into(),
        ));
    }
    let dyn_ = compile_dynamics(model, opts.jump_cutoff)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut trace = vec![(0.0, x0, 0.0)];
    let mut count = 0usize;
    let state = run_path_observed(model, &dyn_, x0, level, opts, &mut rng, |u, pos, ext| {
        count += 1;
        if count.is_multiple_of(every) {
            trace.push((u, pos, ext));
        }
    });
    trace.push((
        state.elapsed_internal,
        state.position,
        state.elapsed_external,
    ));
    Ok((state, trace))
}

fn check_geometry(model: &Model, x0: f64, level: f64) -> Result<()> {
    if !model.interval.contains(x0) {
        return Err(Error::OutsideInterval(x0));
    }
    if !model.interval.interior_contains(level) {
        return Err(Error::OutsideInterval(level));
    }
    if level >= x0 {
        return Err(Error::LevelAboveIssue { level, x: x0 });
    }
    Ok(())
}

/// Estimate `E_x[e^{-q T_l^-}; T_l^- < lifetime]` for several `q` at once,
/// reusing the same paths (common random numbers make the estimates
/// pointwise ordered in `q`).
pub fn estimate_fptd_many(
    model: &Model,
    qs: &[f64],
    x: f64,
    level: f64,
    n: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<Vec<FptdEstimate>> {
    opts.validate()?;
    check_geometry(model, x, level)?;
    if n < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 paths, got {n}"
        )));
    }
    for &q in qs {
        if !(q >= 0.0) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "q must be nonnegative, got {q}"
            )));
        }
    }
    let dyn_ = compile_dynamics(model, opts.jump_cutoff)?;
    let outcomes: Vec<PathState> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            run_path(model, &dyn_, x, level, opts, &mut rng)
        })
        .collect();

    let n_passed = outcomes.iter().filter(|o| o.passed).count();
    let n_killed = outcomes.iter().filter(|o| o.killed).count();
    let n_censored = n - n_passed - n_killed;

    let mut estimates = Vec::with_capacity(qs.len());
    for &q in qs {
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut censor_bound = 0.0f64;
        for o in &outcomes {
            let v = if o.passed {
                (-q * o.elapsed_external).exp()
            } else {
                0.0
            };
            sum += v;
            sum_sq += v * v;
            if !o.passed && !o.killed {
                censor_bound += (-q * o.elapsed_external).exp();
            }
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        estimates.push(FptdEstimate {
            q,
            x,
            level,
            mean,
            std_error: (var / nf).sqrt(),
            n_paths: n,
            n_passed,
            n_killed,
            n_censored,
            censor_bias_bound: censor_bound / nf,
            dt: opts.dt,
            seed,
        });
    }
    Ok(estimates)
}

pub fn estimate_fptd(
    model: &Model,
    q: f64,
    x: f64,
    level: f64,
    n: usize,
    opts: &SimOptions,
    seed: u64,
) -> Result<FptdEstimate> {
    Ok(estimate_fptd_many(model, &[q], x, level, n, opts, seed)?
        .pop()
        .expect("one estimate per q"))
}
