//! Doléans-Dade exponential `z_t = 1 + ∫_0^t z_{s−} α(s) dM_s` on a jump path.
//!
//! With positive jumps and `α >= 0` the solution is explicit:
//!
//! ```text
//! z_t = exp(−m1 ∫_0^t α ds) · Π_{t_i ≤ t} (1 + α(t_i) z_i)
//! ```
//!
//! It is evaluated in log form, so large products and strong decay do not
//! overflow or underflow before the final `exp`.

mod control;
mod quadrature;

pub use control::ControlSpec;
pub use quadrature::integrate_alpha_power;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path_sim::{JumpPath, StopKind, StoppingTime};
use crate::scalar::Scalar;

use quadrature::alpha_power_on_segment;

/// State of `z` around one jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord<S> {
    pub time: S,
    pub size: S,
    /// `α(t_i)`, evaluated before the jump.
    pub alpha: S,
    /// `z_{t_i−}`
    pub z_left: S,
    /// `z_{t_i}`
    pub z_right: S,
    /// `∫_0^{t_i} α ds`
    pub integral_alpha: S,
    /// `Σ_{j ≤ i} log(1 + α(t_j) z_j)`
    pub log_jump_sum: S,
}

/// The exponential along one path, optionally frozen after a stopping time.
#[derive(Debug, Clone)]
pub struct ExponentialTrajectory<'a, S> {
    path: &'a JumpPath<S>,
    control: ControlSpec<S>,
    quad_step: S,
    end: S,
    jumps: Vec<JumpRecord<S>>,
    integral_alpha: S,
    alpha_jump_sum: S,
    log_terminal: S,
}

impl<'a, S: Scalar> ExponentialTrajectory<'a, S> {
    fn evolve(
        path: &'a JumpPath<S>,
        control: ControlSpec<S>,
        end: S,
        quad_step: S,
    ) -> Result<Self> {
        if !(quad_step > S::zero()) {
            return Err(Error::QuadStepNonPositive(quad_step.as_f64()));
        }
        control.validate()?;
        let drift = path.drift_rate();
        let mut jumps = Vec::new();
        let mut integral = S::zero();
        let mut log_jumps = S::zero();
        let mut alpha_jump_sum = S::zero();
        for seg in path.segments() {
            if seg.start > end {
                break;
            }
            let to = seg.end.min(end);
            integral = integral
                + alpha_power_on_segment(&control, &seg, drift, seg.start, to, quad_step, 1);
            // the jump closing this segment, if it happens by `end`
            if seg.index < path.jump_count() && seg.end <= end {
                let i = seg.index;
                let alpha = control.alpha_at_jump(path, i);
                let size = path.jump_sizes()[i];
                let log_left = -drift * integral + log_jumps;
                log_jumps = log_jumps + (alpha * size).ln_1p();
                alpha_jump_sum = alpha_jump_sum + alpha * size;
                jumps.push(JumpRecord {
                    time: seg.end,
                    size,
                    alpha,
                    z_left: log_left.exp(),
                    z_right: (-drift * integral + log_jumps).exp(),
                    integral_alpha: integral,
                    log_jump_sum: log_jumps,
                });
            }
        }
        Ok(Self {
            path,
            control,
            quad_step,
            end,
            jumps,
            integral_alpha: integral,
            alpha_jump_sum,
            log_terminal: -drift * integral + log_jumps,
        })
    }

    pub fn path(&self) -> &'a JumpPath<S> {
        self.path
    }

    pub fn control(&self) -> &ControlSpec<S> {
        &self.control
    }

    /// Time after which the control is switched off (`T` when unstopped).
    pub fn end(&self) -> S {
        self.end
    }

    pub fn values_at_jumps(&self) -> &[JumpRecord<S>] {
        &self.jumps
    }

    /// `∫_0^{end} α ds`
    pub fn integral_alpha(&self) -> S {
        self.integral_alpha
    }

    pub fn terminal(&self) -> S {
        self.log_terminal.exp()
    }

    pub fn log_terminal(&self) -> S {
        self.log_terminal
    }

    /// `∫_0^{end} α dM = Σ α(t_i) z_i − m1 ∫ α ds`.
    pub fn stochastic_integral(&self) -> S {
        self.alpha_jump_sum - self.path.drift_rate() * self.integral_alpha
    }

    /// `log z_end − ∫ α dM = Σ [log(1 + α z_i) − α z_i]`, never positive.
    pub fn jump_sign_gap(&self) -> S {
        self.jumps.iter().fold(S::zero(), |acc, j| {
            acc + (j.alpha * j.size).ln_1p() - j.alpha * j.size
        })
    }

    fn log_value(&self, t: S, include_jump_at_t: bool) -> Result<S> {
        let horizon = self.path.horizon();
        if !(t >= S::zero() && t <= horizon) {
            return Err(Error::TimeOutOfRange {
                t: t.as_f64(),
                horizon: horizon.as_f64(),
            });
        }
        if t > self.end || (t == self.end && include_jump_at_t) {
            return Ok(self.log_terminal);
        }
        let k = if include_jump_at_t {
            self.path.jumps_through(t)
        } else {
            self.path.jumps_before(t)
        };
        let (integral, log_jumps) = match k {
            0 => (S::zero(), S::zero()),
            _ => (
                self.jumps[k - 1].integral_alpha,
                self.jumps[k - 1].log_jump_sum,
            ),
        };
        let seg = self.path.segment(k);
        let drift = self.path.drift_rate();
        let integral = integral
            + alpha_power_on_segment(&self.control, &seg, drift, seg.start, t, self.quad_step, 1);
        Ok(-drift * integral + log_jumps)
    }

    /// `z_t`; constant after the stop.
    pub fn value_at(&self, t: S) -> Result<S> {
        Ok(self.log_value(t, true)?.exp())
    }

    /// `z_{t−}`
    pub fn left_value_at(&self, t: S) -> Result<S> {
        Ok(self.log_value(t, false)?.exp())
    }
}

/// Product-formula exponential on `[0, T]`.
///
/// `quad_step` bounds the trapezoid step for supremum-dependent controls;
/// constant controls integrate exactly.
pub fn doleans_dade<'a, S: Scalar>(
    path: &'a JumpPath<S>,
    control: &ControlSpec<S>,
    quad_step: S,
) -> Result<ExponentialTrajectory<'a, S>> {
    ExponentialTrajectory::evolve(path, *control, path.horizon(), quad_step)
}

/// Exponential driven by `1{stop >= s} α(s)`, i.e. `z_{t ∧ stop}`. A jump at
/// the stopping time itself is included.
pub fn stopped_exponential<'a, S: Scalar>(
    path: &'a JumpPath<S>,
    control: &ControlSpec<S>,
    stop: &StoppingTime<S>,
    quad_step: S,
) -> Result<ExponentialTrajectory<'a, S>> {
    if stop.origin != path.fingerprint() {
        return Err(Error::StopFromForeignPath);
    }
    ExponentialTrajectory::evolve(path, *control, stop.effective(path.horizon()), quad_step)
}

/// Explicit Euler for the integral equation on the union of a uniform grid
/// and the jump times: `z ← z (1 − α m1 h)` across drift steps and
/// `z ← z (1 + α z_i)` at jumps. First-order convergent to [`doleans_dade`].
pub fn doleans_dade_oracle<S: Scalar>(
    path: &JumpPath<S>,
    control: &ControlSpec<S>,
    grid_step: S,
) -> Result<S> {
    if !(grid_step > S::zero()) {
        return Err(Error::QuadStepNonPositive(grid_step.as_f64()));
    }
    control.validate()?;
    let horizon = path.horizon();
    let drift = path.drift_rate();
    let times = path.jump_times();
    let sizes = path.jump_sizes();
    let mut z = S::one();
    let mut s = S::zero();
    let mut next_jump = 0;
    let mut k = 1usize;
    while s < horizon {
        let grid = (grid_step * S::from_usize(k).unwrap()).min(horizon);
        let jump = times.get(next_jump).copied().unwrap_or(S::infinity());
        let next = grid.min(jump);
        // α frozen at its right limit at the left node
        let alpha = control.alpha_from_sup(path.sup_sq(s)?);
        z = z * (S::one() - alpha * drift * (next - s));
        s = next;
        if next == jump {
            let alpha = control.alpha_from_sup(path.running_sup_sq(s)?);
            z = z * (S::one() + alpha * sizes[next_jump]);
            next_jump += 1;
        }
        if next == grid {
            k += 1;
        }
    }
    Ok(z)
}

/// `τ_n = inf{t : z_{t−} >= n}`.
///
/// `z` never increases between jumps, so the left limit can only reach `n`
/// right after a jump; `τ_n` is the first jump time with `z_{t_i} >= n`.
pub fn tau_n<S: Scalar>(traj: &ExponentialTrajectory<'_, S>, n: S) -> StoppingTime<S> {
    let origin = traj.path.fingerprint();
    if n <= S::one() {
        return StoppingTime {
            kind: StopKind::TauN(n),
            value: Some(S::zero()),
            origin,
        };
    }
    match traj.jumps.iter().find(|j| j.z_right >= n) {
        Some(j) => StoppingTime {
            kind: StopKind::TauN(n),
            value: Some(j.time),
            origin,
        },
        None => StoppingTime {
            kind: StopKind::Horizon,
            value: None,
            origin,
        },
    }
}

/// `ψ(x) = x log x + 1 − x`, with `ψ(0) = 1`.
pub fn entropy_psi<S: Scalar>(x: S) -> Result<S> {
    if x < S::zero() || x.is_nan() {
        return Err(Error::NegativeArgument(x.as_f64()));
    }
    if x == S::zero() {
        return Ok(S::one());
    }
    Ok(x * x.ln() + S::one() - x)
}
