//! Collision master equation and its time integration.
//!
//! For a channel `{(k, l), (m, n)}` the net forward flux is
//! `J = A [n_k n_l u_m u_n - n_m n_n u_k u_l]` with `u = g + s n`. Each
//! occurrence of a level in the in-pair loses `J`, each occurrence in the
//! out-pair gains `J`; a diagonal pair such as `(1, 1)` therefore moves two
//! particles. Particle number and energy are conserved channel by channel.

use rayon::prelude::*;

use crate::entropy::{self, EntropyDiagnostics};
use crate::error::{invalid, Error, Result};
use crate::gas::{moments, GasState};
use crate::kernel::CollisionKernel;
use crate::qmath::QIndex;
use crate::scalar::Scalar;
use crate::sum::NeumaierSum;

/// How per-channel work is scheduled. Both modes reduce in canonical channel
/// order and produce bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Canonical,
    /// Channel terms are evaluated on the rayon pool.
    Parallel,
}

fn fluxes_raw<T: Scalar>(
    degeneracy: &[T],
    sign: T,
    occ: &[T],
    kernel: &CollisionKernel<T>,
    reduction: Reduction,
) -> Vec<T> {
    let flux = |ch: &crate::kernel::CollisionChannel<T>| -> T {
        let [a, b, c, d] = ch.id.levels();
        let u = |k: usize| degeneracy[k] + sign * occ[k];
        let forward = occ[a] * occ[b] * u(c) * u(d);
        let reverse = occ[c] * occ[d] * u(a) * u(b);
        ch.rate * (forward - reverse)
    };
    match reduction {
        Reduction::Canonical => kernel.channels().iter().map(flux).collect(),
        Reduction::Parallel => kernel.channels().par_iter().map(flux).collect(),
    }
}

pub(crate) fn rhs_raw<T: Scalar>(
    degeneracy: &[T],
    sign: T,
    occ: &[T],
    kernel: &CollisionKernel<T>,
    reduction: Reduction,
) -> Vec<T> {
    let flux = fluxes_raw(degeneracy, sign, occ, kernel, reduction);
    let mut acc = vec![NeumaierSum::new(); occ.len()];
    for (ch, &j) in kernel.channels().iter().zip(&flux) {
        let [a, b, c, d] = ch.id.levels();
        acc[a].add(-j);
        acc[b].add(-j);
        acc[c].add(j);
        acc[d].add(j);
    }
    acc.iter().map(NeumaierSum::value).collect()
}

/// Net forward flux of every channel, in kernel order.
pub fn fluxes<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>, reduction: Reduction) -> Vec<T> {
    let g: Vec<T> = state.levels().iter().map(|l| l.degeneracy).collect();
    fluxes_raw(&g, state.statistics().sign_as(), &state.occupations(), kernel, reduction)
}

/// `dn_k/dt` for every level.
///
/// # Panics
/// If the kernel references levels the state does not have.
pub fn rhs<T: Scalar>(state: &GasState<T>, kernel: &CollisionKernel<T>, reduction: Reduction) -> Vec<T> {
    assert_eq!(kernel.level_count(), state.len(), "kernel and state disagree on level count");
    let g: Vec<T> = state.levels().iter().map(|l| l.degeneracy).collect();
    rhs_raw(&g, state.statistics().sign_as(), &state.occupations(), kernel, reduction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub t_end: T,
    /// Accepted steps between samples.
    pub sample_every: usize,
    /// Reject-and-halve budget per step.
    pub max_halvings: u32,
    pub convergence_tol: T,
    /// Consecutive samples below `convergence_tol` that count as converged.
    pub convergence_samples: usize,
    pub reduction: Reduction,
}

impl<T: Scalar> IntegratorConfig<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self {
            dt,
            t_end,
            sample_every: 1,
            max_halvings: 30,
            convergence_tol: T::lit(1e-12),
            convergence_samples: 10,
            reduction: Reduction::Canonical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return Err(invalid("integrator", format!("dt = {} must be positive", self.dt)));
        }
        // t_end = 0 is the trivial single-record run
        if !(self.t_end.is_finite() && self.t_end >= T::zero()) {
            return Err(invalid("integrator", format!("t_end = {} must be nonnegative", self.t_end)));
        }
        if self.sample_every == 0 {
            return Err(invalid("integrator", "sample_every must be at least 1"));
        }
        if self.max_halvings > 60 {
            return Err(invalid("integrator", format!("max_halvings = {} exceeds 60", self.max_halvings)));
        }
        if !(self.convergence_tol >= T::zero()) || self.convergence_samples == 0 {
            return Err(invalid("integrator", "convergence_tol must be >= 0 and convergence_samples >= 1"));
        }
        Ok(())
    }
}

/// Result of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub state: GasState<T>,
    /// Step actually taken, `dt / 2^halvings`.
    pub dt: T,
    pub halvings: u32,
}

/// One classical RK4 step. A result that leaves the admissible region
/// (`n < 0`, or `g + s n <= 0`) is discarded and the step retried at half
/// size, at most `max_halvings` times.
pub fn step<T: Scalar>(
    state: &GasState<T>,
    kernel: &CollisionKernel<T>,
    dt: T,
    max_halvings: u32,
    reduction: Reduction,
) -> Result<StepOutcome<T>> {
    let g: Vec<T> = state.levels().iter().map(|l| l.degeneracy).collect();
    let sign = state.statistics().sign_as::<T>();
    step_with(state, |occ| rhs_raw(&g, sign, occ, kernel, reduction), dt, max_halvings)
}

pub(crate) fn step_with<T: Scalar, F: Fn(&[T]) -> Vec<T>>(
    state: &GasState<T>,
    f: F,
    dt: T,
    max_halvings: u32,
) -> Result<StepOutcome<T>> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(invalid("step", format!("dt = {dt} must be positive")));
    }
    let g: Vec<T> = state.levels().iter().map(|l| l.degeneracy).collect();
    let sign = state.statistics().sign_as::<T>();
    let n0 = state.occupations();
    let k1 = f(&n0);

    let mut h = dt;
    let mut last_reason = String::new();
    for halvings in 0..=max_halvings {
        let half = h / T::two();
        let axpy = |k: &[T], c: T| -> Vec<T> { n0.iter().zip(k).map(|(&n, &k)| n + c * k).collect() };
        let k2 = f(&axpy(&k1, half));
        let k3 = f(&axpy(&k2, half));
        let k4 = f(&axpy(&k3, h));
        let sixth = h / T::lit(6.0);
        let next: Vec<T> = (0..n0.len())
            .map(|i| n0[i] + sixth * ((k1[i] + k4[i]) + T::two() * (k2[i] + k3[i])))
            .collect();

        let bad = next.iter().zip(&g).position(|(&n, &g)| !(n.is_finite() && n >= T::zero() && g + sign * n > T::zero()));
        match bad {
            None => {
                return Ok(StepOutcome {
                    state: state.with_occupations(&next)?,
                    dt: h,
                    halvings,
                })
            }
            Some(k) => {
                last_reason = format!("level {k} left the admissible region (n = {})", next[k]);
                h = half;
            }
        }
    }
    Err(Error::StepBudget {
        t: f64::NAN,
        halvings: max_halvings,
        reason: last_reason,
    })
}

/// One sampled instant of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord<T> {
    pub t: T,
    pub occupations: Vec<T>,
    /// Rates are NaN when the state touches `n = 0` or `g + s n = 0`.
    pub entropy: EntropyDiagnostics<T>,
    pub n: T,
    pub e: T,
    /// Step rejections accumulated since the start of the run.
    pub rejections: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub records: Vec<TimeSeriesRecord<T>>,
    pub final_state: GasState<T>,
    pub converged: bool,
    pub steps: u64,
    pub rejections: u64,
}

fn sample<T: Scalar>(
    t: T,
    state: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
    rejections: u64,
    reduction: Reduction,
) -> TimeSeriesRecord<T> {
    let entropy = entropy::diagnostics(state, kernel, q, reduction).unwrap_or_else(|_| EntropyDiagnostics {
        s_q: entropy::entropy_sq(state, q).unwrap_or_else(|_| T::nan()),
        rate_chain: T::nan(),
        rate_weighted: T::nan(),
        rate_symmetric: T::nan(),
        min_n_tilde: T::nan(),
        negative_phi_channels: 0,
    });
    let (n, e) = moments(state);
    TimeSeriesRecord {
        t,
        occupations: state.occupations(),
        entropy,
        n,
        e,
        rejections,
    }
}

/// Integrates to `config.t_end`, or until `max |dn/dt|` stays below
/// `convergence_tol` for `convergence_samples` consecutive samples.
pub fn run<T: Scalar>(
    initial: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
    config: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    match run_partial(initial, kernel, q, config)? {
        (traj, None) => Ok(traj),
        (_, Some(err)) => Err(err),
    }
}

/// Like [`run`], but a failure part-way returns the trajectory recorded so
/// far together with the error. Configuration errors are returned directly.
pub fn run_partial<T: Scalar>(
    initial: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
    config: &IntegratorConfig<T>,
) -> Result<(Trajectory<T>, Option<Error>)> {
    run_observed(initial, kernel, q, config, |_| {})
}

/// [`run_partial`] that hands every new record to `observe` as it is taken.
pub fn run_observed<T: Scalar, F: FnMut(&TimeSeriesRecord<T>)>(
    initial: &GasState<T>,
    kernel: &CollisionKernel<T>,
    q: QIndex<T>,
    config: &IntegratorConfig<T>,
    mut observe: F,
) -> Result<(Trajectory<T>, Option<Error>)> {
    config.validate()?;
    if kernel.level_count() != initial.len() {
        return Err(invalid(
            "kernel",
            format!("kernel spans {} levels, state has {}", kernel.level_count(), initial.len()),
        ));
    }
    let reduction = config.reduction;
    let mut state = initial.clone();
    let mut t = T::zero();
    let mut steps = 0u64;
    let mut rejections = 0u64;
    let mut quiet_samples = 0usize;
    let mut converged = false;
    let mut failure = None;
    let mut records = vec![sample(t, &state, kernel, q, 0, reduction)];
    observe(&records[0]);
    // guards against a vanishing final step from accumulated rounding in t
    let slack = config.dt * T::lit(1e-9);

    while config.t_end - t > slack {
        let h = config.dt.min(config.t_end - t);
        match step(&state, kernel, h, config.max_halvings, reduction) {
            Ok(out) => {
                state = out.state;
                t = t + out.dt;
                steps += 1;
                rejections += u64::from(out.halvings);
            }
            Err(Error::StepBudget { halvings, reason, .. }) => {
                failure = Some(Error::StepBudget {
                    t: t.to_f64_lossy(),
                    halvings,
                    reason,
                });
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        if steps % config.sample_every as u64 == 0 {
            records.push(sample(t, &state, kernel, q, rejections, reduction));
            observe(records.last().unwrap());
            let max_rate = rhs(&state, kernel, reduction)
                .into_iter()
                .fold(T::zero(), |m, r| m.max(r.abs()));
            if max_rate < config.convergence_tol {
                quiet_samples += 1;
                if quiet_samples >= config.convergence_samples {
                    converged = true;
                    break;
                }
            } else {
                quiet_samples = 0;
            }
        }
    }
    if records.last().map(|r| r.t) != Some(t) {
        records.push(sample(t, &state, kernel, q, rejections, reduction));
        observe(records.last().unwrap());
    }
    Ok((
        Trajectory {
            records,
            final_state: state,
            converged,
            steps,
            rejections,
        },
        failure,
    ))
}

impl<T: Scalar> Trajectory<T> {
    /// CSV with header
    /// `t,S_q,rate_chain,rate_weighted,rate_symmetric,N,E,min_n_tilde,neg_phi_count,n_0,...`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let levels = self.final_state.len();
        let mut header: Vec<String> = [
            "t",
            "S_q",
            "rate_chain",
            "rate_weighted",
            "rate_symmetric",
            "N",
            "E",
            "min_n_tilde",
            "neg_phi_count",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..levels).map(|k| format!("n_{k}")));
        w.write_record(&header)?;
        for r in &self.records {
            let d = &r.entropy;
            let mut row = vec![
                r.t.to_string(),
                d.s_q.to_string(),
                d.rate_chain.to_string(),
                d.rate_weighted.to_string(),
                d.rate_symmetric.to_string(),
                r.n.to_string(),
                r.e.to_string(),
                d.min_n_tilde.to_string(),
                d.negative_phi_channels.to_string(),
            ];
            row.extend(r.occupations.iter().map(|n| n.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
