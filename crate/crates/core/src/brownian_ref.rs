//! Brownian reference case: `z_T = exp(∫ α dB − ½ ∫ α² ds)` on a grid.
//!
//! Each step uses the exact-form factor `exp(α_k ΔB_k − ½ α_k² h)` with `α_k`
//! frozen at the left node, so `z` is an exact discrete-time martingale for
//! any predictable control and stays positive.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::path_stream;
use crate::scalar::Scalar;
use crate::stats::McEstimate;
use crate::stoch_exp::ControlSpec;

/// Brownian motion sampled at `k·h`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath<S> {
    grid_step: S,
    values: Vec<S>,
}

impl<S: Scalar> BrownianPath<S> {
    pub fn from_values(grid_step: S, values: Vec<S>) -> Result<Self> {
        if !(grid_step > S::zero()) {
            return Err(Error::QuadStepNonPositive(grid_step.as_f64()));
        }
        if values.len() < 2 || values[0] != S::zero() {
            return Err(Error::InvalidPath(
                "brownian path needs B_0 = 0 and at least one step".into(),
            ));
        }
        Ok(Self { grid_step, values })
    }

    pub fn grid_step(&self) -> S {
        self.grid_step
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> S {
        self.grid_step * S::from_usize(self.steps()).unwrap()
    }

    /// `B_{kh}` for `k = 0..=steps`.
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn terminal(&self) -> S {
        *self.values.last().unwrap()
    }

    pub fn increments(&self) -> impl Iterator<Item = S> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    /// `max_k B²_{kh}`
    pub fn sup_sq(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &b| m.max(b * b))
    }

    /// Path on the grid of step `2h`, for coupled refinement studies.
    pub fn coarsened(&self) -> Option<Self> {
        if !self.steps().is_multiple_of(2) {
            return None;
        }
        Some(Self {
            grid_step: self.grid_step + self.grid_step,
            values: self.values.iter().step_by(2).copied().collect(),
        })
    }
}

/// Standard Brownian path on `[0, T]` with `round(T/h)` equal steps.
pub fn simulate_bm<S: Scalar, R: Rng + ?Sized>(
    horizon: S,
    grid_step: S,
    rng: &mut R,
) -> Result<BrownianPath<S>> {
    if !(horizon.is_finite() && horizon > S::zero()) {
        return Err(Error::InvalidHorizon(horizon.as_f64()));
    }
    if !(grid_step > S::zero()) {
        return Err(Error::QuadStepNonPositive(grid_step.as_f64()));
    }
    let steps = (horizon / grid_step).round().max(S::one());
    let h = horizon / steps;
    let scale = h.sqrt();
    let n = steps.to_usize().unwrap();
    let mut values = Vec::with_capacity(n + 1);
    let mut b = S::zero();
    values.push(b);
    for _ in 0..n {
        b = b + scale * S::sample_std_normal(rng);
        values.push(b);
    }
    Ok(BrownianPath {
        grid_step: h,
        values,
    })
}

/// Everything the harness needs from one Brownian exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmExponential<S> {
    pub z: S,
    pub log_z: S,
    /// `Σ α_k h` up to the stop
    pub integral_alpha: S,
    /// `Σ α_k² h` up to the stop
    pub integral_alpha_sq: S,
    /// `B` at the stop (or `T`)
    pub b_stop: S,
    /// `max_{k ≤ stop} B²_{kh}`
    pub sup_sq: S,
    /// grid index of the stop; `None` if not triggered
    pub stop_index: Option<usize>,
}

/// Exponential with the control switched off from the first node where
/// `1 + max_{j≤k} B²_{jh} >= n`.
pub fn exponential_bm_stopped<S: Scalar>(
    path: &BrownianPath<S>,
    control: &ControlSpec<S>,
    stop_level: Option<S>,
) -> BmExponential<S> {
    let h = path.grid_step;
    let half = S::lit(0.5);
    let mut sup = S::zero();
    let mut log_z = S::zero();
    let mut int_a = S::zero();
    let mut int_a2 = S::zero();
    let mut stop_index = None;
    for (k, w) in path.values.windows(2).enumerate() {
        sup = sup.max(w[0] * w[0]);
        if stop_level.is_some_and(|n| S::one() + sup >= n) {
            stop_index = Some(k);
            break;
        }
        let alpha = control.alpha_from_sup(sup);
        log_z = log_z + alpha * (w[1] - w[0]) - half * alpha * alpha * h;
        int_a = int_a + alpha * h;
        int_a2 = int_a2 + alpha * alpha * h;
    }
    let last = stop_index.unwrap_or(path.steps());
    let sup_sq = path.values[..=last]
        .iter()
        .fold(S::zero(), |m, &b| m.max(b * b));
    BmExponential {
        z: log_z.exp(),
        log_z,
        integral_alpha: int_a,
        integral_alpha_sq: int_a2,
        b_stop: path.values[last],
        sup_sq,
        stop_index,
    }
}

/// `z_T = exp(Σ α_k ΔB_k − ½ Σ α_k² h)`.
pub fn exponential_bm<S: Scalar>(path: &BrownianPath<S>, control: &ControlSpec<S>) -> S {
    exponential_bm_stopped(path, control, None).z
}

/// Per-path `(z_T, B_T − ∫ α ds)`; the second entry is centered under the
/// measure `z_T dP`.
pub fn bm_drift_check<S: Scalar>(path: &BrownianPath<S>, control: &ControlSpec<S>) -> (S, S) {
    let e = exponential_bm_stopped(path, control, None);
    (e.z, e.b_stop - e.integral_alpha)
}

/// `Ẽ[B_T − ∫ α ds]` over a batch, weighted by `z_T`.
pub fn bm_drift_residual<S: Scalar>(
    paths: &[BrownianPath<S>],
    control: &ControlSpec<S>,
    seed_base: u64,
) -> Result<McEstimate<S>> {
    let values: Vec<S> = paths
        .iter()
        .map(|p| {
            let (z, r) = bm_drift_check(p, control);
            z * r
        })
        .collect();
    McEstimate::from_samples(&values, seed_base)
}

/// One rung of [`refinement_ladder`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel<S> {
    pub grid_step: S,
    /// `Ê z^{(h)}_T`
    pub mean_z: McEstimate<S>,
    /// `Ê |z^{(h)}_T − z^{(ref)}_T|` on the same Brownian paths
    pub strong_error: McEstimate<S>,
}

/// Simulates paths on `finest_step`, then evaluates the exponential on the
/// coarsened grids `2·finest_step, …, 2^levels·finest_step` of the same
/// paths and compares each with the finest value. Coarsest level first.
pub fn refinement_ladder<S: Scalar>(
    control: &ControlSpec<S>,
    horizon: S,
    finest_step: S,
    levels: usize,
    num_paths: usize,
    seed: u64,
) -> Result<Vec<RefinementLevel<S>>> {
    if num_paths == 0 {
        return Err(Error::EmptyBatch);
    }
    let rows: Vec<Vec<S>> = (0..num_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_stream(seed, i);
            let mut path = simulate_bm(horizon, finest_step, &mut rng)?;
            let mut zs = vec![exponential_bm(&path, control)];
            for _ in 0..levels {
                path = path
                    .coarsened()
                    .ok_or_else(|| Error::InvalidPath("grid does not coarsen evenly".into()))?;
                zs.push(exponential_bm(&path, control));
            }
            Ok(zs)
        })
        .collect::<Result<_>>()?;
    let h = simulate_bm(horizon, finest_step, &mut path_stream(seed, 0))?.grid_step();
    (1..=levels)
        .rev()
        .map(|l| {
            let z: Vec<S> = rows.iter().map(|r| r[l]).collect();
            let err: Vec<S> = rows.iter().map(|r| (r[l] - r[0]).abs()).collect();
            Ok(RefinementLevel {
                grid_step: h * S::lit(2f64.powi(l as i32)),
                mean_z: McEstimate::from_samples(&z, seed)?,
                strong_error: McEstimate::from_samples(&err, seed)?,
            })
        })
        .collect()
}
