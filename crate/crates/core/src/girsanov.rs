//! Change of measure `dP̃ = zⁿ_T dP` by reweighting simulated paths.
//!
//! Under `P̃` the jump compensator becomes `1{σ_n ≥ s}(1 + α(s) z) K(dz) ds`,
//! `M^n` picks up the drift `A^n_t = m2 ∫_0^{t∧σ_n} α ds`, and `M^n − A^n` is
//! a square-integrable martingale with bracket `∫_0^{t∧σ_n} (m2 + α m3) ds`.
//! The checks here estimate both sides of those identities on one weighted
//! sample, so each comparison is a paired difference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump_measure::{JumpMeasureSpec, Moments};
use crate::path_sim::{simulate_path, JumpPath, StoppingTime};
use crate::rng::{path_seed_id, path_stream};
use crate::scalar::Scalar;
use crate::stats::McEstimate;
use crate::stoch_exp::{integrate_alpha_power, stopped_exponential, ControlSpec};

/// One path with its density `zⁿ_T`.
#[derive(Debug, Clone)]
pub struct TiltedSample<S> {
    pub path: JumpPath<S>,
    pub weight: S,
    pub log_weight: S,
    pub stop: StoppingTime<S>,
    /// `T ∧ σ_n`
    pub stop_time: S,
    /// `∫_0^{T∧σ_n} α ds`
    pub integral_alpha: S,
}

/// Paths simulated under `P` together with their weights.
#[derive(Debug, Clone)]
pub struct TiltedBatch<S> {
    pub samples: Vec<TiltedSample<S>>,
    pub measure: JumpMeasureSpec<S>,
    pub moments: Moments<S>,
    pub control: ControlSpec<S>,
    pub stop_level: Option<S>,
    pub horizon: S,
    pub quad_step: S,
    pub seed: u64,
}

fn stop_for<S: Scalar>(path: &JumpPath<S>, stop_level: Option<S>) -> StoppingTime<S> {
    match stop_level {
        Some(n) => path.sigma_n(n),
        None => StoppingTime::horizon(path),
    }
}

impl<S: Scalar> TiltedSample<S> {
    fn new(
        path: JumpPath<S>,
        control: &ControlSpec<S>,
        stop_level: Option<S>,
        quad_step: S,
    ) -> Result<Self> {
        let stop = stop_for(&path, stop_level);
        let (weight, log_weight, integral_alpha) = {
            let traj = stopped_exponential(&path, control, &stop, quad_step)?;
            (traj.terminal(), traj.log_terminal(), traj.integral_alpha())
        };
        let stop_time = stop.effective(path.horizon());
        Ok(Self {
            path,
            weight,
            log_weight,
            stop,
            stop_time,
            integral_alpha,
        })
    }
}

impl<S: Scalar> TiltedBatch<S> {
    /// Simulates `num_paths` paths in parallel. Path `i` uses stream `(seed, i)`.
    pub fn simulate(
        measure: &JumpMeasureSpec<S>,
        control: &ControlSpec<S>,
        stop_level: Option<S>,
        horizon: S,
        num_paths: usize,
        seed: u64,
        quad_step: S,
    ) -> Result<Self> {
        if let Err(mut errs) = measure.validate() {
            return Err(errs.remove(0));
        }
        control.validate()?;
        if num_paths == 0 {
            return Err(Error::EmptyBatch);
        }
        let samples = (0..num_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_stream(seed, i);
                let path = simulate_path(measure, horizon, &mut rng, path_seed_id(seed, i))?;
                TiltedSample::new(path, control, stop_level, quad_step)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            measure: measure.clone(),
            moments: measure.moments(),
            control: *control,
            stop_level,
            horizon,
            quad_step,
            seed,
        })
    }

    /// Weights existing paths, e.g. ones loaded from a golden file.
    pub fn from_paths(
        paths: Vec<JumpPath<S>>,
        measure: &JumpMeasureSpec<S>,
        control: &ControlSpec<S>,
        stop_level: Option<S>,
        quad_step: S,
        seed: u64,
    ) -> Result<Self> {
        let horizon = paths.first().ok_or(Error::EmptyBatch)?.horizon();
        let samples = paths
            .into_iter()
            .map(|p| TiltedSample::new(p, control, stop_level, quad_step))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            measure: measure.clone(),
            moments: measure.moments(),
            control: *control,
            stop_level,
            horizon,
            quad_step,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn weights(&self) -> Vec<S> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    fn estimate<F>(&self, f: F) -> Result<McEstimate<S>>
    where
        F: Fn(&TiltedSample<S>) -> Result<S>,
    {
        let values = self.samples.iter().map(f).collect::<Result<Vec<_>>>()?;
        McEstimate::from_samples(&values, self.seed)
    }

    /// `∫_0^{t ∧ σ_n} α ds` on sample `s`.
    fn integral_alpha_to(&self, s: &TiltedSample<S>, t: S) -> S {
        let upto = t.min(s.stop_time);
        if upto == s.stop_time {
            s.integral_alpha
        } else {
            integrate_alpha_power(&s.path, &self.control, upto, self.quad_step, 1)
        }
    }
}

/// `Ẽ f = E[zⁿ_T f]`, estimated by the weighted sample mean.
pub fn tilted_expectation<S, F>(batch: &TiltedBatch<S>, functional: F) -> Result<McEstimate<S>>
where
    S: Scalar,
    F: Fn(&TiltedSample<S>) -> S,
{
    batch.estimate(|s| Ok(s.weight * functional(s)))
}

/// Shape of a test function `u(z)`; all vanish near `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TestShape<S> {
    Zero,
    /// `1{z > q}`
    Indicator {
        q: S,
    },
    /// `z · 1{z > ε}`
    SizeAbove {
        eps: S,
    },
    /// `z² · 1{z > ε}`
    SizeSqAbove {
        eps: S,
    },
}

/// `u(s, z) = 1{s ∈ (lo, hi]} · shape(z)`; no window means all of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction<S> {
    pub name: String,
    pub shape: TestShape<S>,
    pub window: Option<(S, S)>,
}

impl<S: Scalar> TestFunction<S> {
    pub fn new(name: impl Into<String>, shape: TestShape<S>) -> Self {
        Self {
            name: name.into(),
            shape,
            window: None,
        }
    }

    pub fn windowed(mut self, lo: S, hi: S) -> Self {
        self.window = Some((lo, hi));
        self
    }

    pub fn eval_size(&self, z: S) -> S {
        match self.shape {
            TestShape::Zero => S::zero(),
            TestShape::Indicator { q } => indicator(z > q),
            TestShape::SizeAbove { eps } => z * indicator(z > eps),
            TestShape::SizeSqAbove { eps } => z * z * indicator(z > eps),
        }
    }

    fn in_window(&self, s: S) -> bool {
        self.window.is_none_or(|(lo, hi)| s > lo && s <= hi)
    }

    /// `(∫ u K(dz), ∫ u z K(dz))`
    fn kernel_integrals(&self, measure: &JumpMeasureSpec<S>) -> (S, S) {
        match self.shape {
            TestShape::Zero => (S::zero(), S::zero()),
            TestShape::Indicator { q } => {
                (measure.partial_moment(0, q), measure.partial_moment(1, q))
            }
            TestShape::SizeAbove { eps } => (
                measure.partial_moment(1, eps),
                measure.partial_moment(2, eps),
            ),
            TestShape::SizeSqAbove { eps } => (
                measure.partial_moment(2, eps),
                measure.partial_moment(3, eps),
            ),
        }
    }

    fn vanishes_near_zero(&self) -> bool {
        match self.shape {
            TestShape::Zero => true,
            TestShape::Indicator { q } => q >= S::zero(),
            TestShape::SizeAbove { eps } | TestShape::SizeSqAbove { eps } => eps > S::zero(),
        }
    }
}

#[inline]
fn indicator<S: Scalar>(b: bool) -> S {
    if b {
        S::one()
    } else {
        S::zero()
    }
}

/// Default suite: `1{z > q}` at the quartiles of the size law, `z·1{z > ε}`
/// and `z²·1{z > ε}` with `ε = 1e-6`.
///
/// For laws with atoms the quartile threshold is moved halfway down to the
/// next smaller atom, so the indicator counts the quartile atom itself
/// instead of collapsing to zero.
pub fn default_test_functions<S: Scalar>(measure: &JumpMeasureSpec<S>) -> Vec<TestFunction<S>> {
    let mut out: Vec<TestFunction<S>> = Vec::new();
    let atoms = measure.atom_sizes();
    for (label, p) in [("q25", 0.25), ("q50", 0.5), ("q75", 0.75)] {
        let mut q = measure.size_quantile(S::lit(p));
        if measure.is_atomic() {
            let below = atoms
                .iter()
                .copied()
                .filter(|&a| a < q)
                .fold(S::zero(), S::max);
            q = (q + below) / S::lit(2.0);
        }
        if out
            .iter()
            .any(|f| matches!(f.shape, TestShape::Indicator { q: other } if other == q))
        {
            continue;
        }
        out.push(TestFunction::new(
            format!("indicator_{label}"),
            TestShape::Indicator { q },
        ));
    }
    let eps = S::lit(1e-6);
    out.push(TestFunction::new(
        "size_above_eps",
        TestShape::SizeAbove { eps },
    ));
    out.push(TestFunction::new(
        "size_sq_above_eps",
        TestShape::SizeSqAbove { eps },
    ));
    out
}

/// Both sides of the tilted compensator identity for one test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatorRow<S> {
    pub name: String,
    /// `Ẽ Σ_{t_j ≤ T∧σ_n} u(t_j, z_j)`
    pub lhs: McEstimate<S>,
    /// `Ẽ ∫_0^{T∧σ_n} ∫ u(s, z) (1 + α(s) z) K(dz) ds`
    pub rhs: McEstimate<S>,
    /// paired `lhs − rhs`
    pub diff: McEstimate<S>,
    pub z_score: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatorReport<S> {
    pub control: ControlSpec<S>,
    pub stop_level: Option<S>,
    pub horizon: S,
    pub num_paths: usize,
    pub rows: Vec<CompensatorRow<S>>,
}

impl<S: Scalar> CompensatorReport<S> {
    pub fn max_abs_z(&self) -> S {
        self.rows
            .iter()
            .fold(S::zero(), |m, r| m.max(r.z_score.abs()))
    }

    pub fn all_within(&self, k: S) -> bool {
        self.rows.iter().all(|r| r.diff.within(S::zero(), k))
    }
}

/// Paired estimate of the compensator identity for each test function.
pub fn verify_compensator<S: Scalar>(
    batch: &TiltedBatch<S>,
    tests: &[TestFunction<S>],
) -> Result<CompensatorReport<S>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut rows = Vec::with_capacity(tests.len());
    for u in tests {
        if !u.vanishes_near_zero() {
            return Err(Error::UnboundedTestFunction(format!(
                "{} does not vanish near 0",
                u.name
            )));
        }
        let (k0, k1) = u.kernel_integrals(&batch.measure);
        if !(k0.is_finite() && k1.is_finite()) {
            return Err(Error::UnboundedTestFunction(u.name.clone()));
        }
        let n = batch.len();
        let mut lhs = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        let mut diff = Vec::with_capacity(n);
        for s in &batch.samples {
            let path = &s.path;
            let mut sum = S::zero();
            for (&t, &z) in path.jump_times().iter().zip(path.jump_sizes()) {
                if t > s.stop_time {
                    break;
                }
                if u.in_window(t) {
                    let v = u.eval_size(z);
                    if !v.is_finite() {
                        return Err(Error::UnboundedTestFunction(u.name.clone()));
                    }
                    sum = sum + v;
                }
            }
            let (lo, hi) = u.window.unwrap_or((S::zero(), batch.horizon));
            let lo = lo.max(S::zero()).min(s.stop_time);
            let hi = hi.min(s.stop_time).max(lo);
            let int_alpha = batch.integral_alpha_to(s, hi) - batch.integral_alpha_to(s, lo);
            let comp = k0 * (hi - lo) + k1 * int_alpha;
            lhs.push(s.weight * sum);
            rhs.push(s.weight * comp);
            diff.push(s.weight * (sum - comp));
        }
        let diff = McEstimate::from_samples(&diff, batch.seed)?;
        rows.push(CompensatorRow {
            name: u.name.clone(),
            lhs: McEstimate::from_samples(&lhs, batch.seed)?,
            rhs: McEstimate::from_samples(&rhs, batch.seed)?,
            z_score: diff.z_score(S::zero()),
            diff,
        });
    }
    Ok(CompensatorReport {
        control: batch.control,
        stop_level: batch.stop_level,
        horizon: batch.horizon,
        num_paths: batch.len(),
        rows,
    })
}

/// Simulates a fresh batch and checks the compensator identity on it.
#[allow(clippy::too_many_arguments)]
pub fn simulate_and_verify_compensator<S: Scalar>(
    measure: &JumpMeasureSpec<S>,
    control: &ControlSpec<S>,
    stop_level: Option<S>,
    horizon: S,
    num_paths: usize,
    tests: &[TestFunction<S>],
    seed: u64,
    quad_step: S,
) -> Result<CompensatorReport<S>> {
    let batch = TiltedBatch::simulate(
        measure, control, stop_level, horizon, num_paths, seed, quad_step,
    )?;
    verify_compensator(&batch, tests)
}

fn stopped_upto<S: Scalar>(path: &JumpPath<S>, stop_level: Option<S>, t: S) -> Result<S> {
    if !(t >= S::zero() && t <= path.horizon()) {
        return Err(Error::TimeOutOfRange {
            t: t.as_f64(),
            horizon: path.horizon().as_f64(),
        });
    }
    Ok(stop_for(path, stop_level).effective(path.horizon()).min(t))
}

/// `Aⁿ_t = m2 ∫_0^{t∧σ_n} α ds`.
pub fn drift_a<S: Scalar>(
    path: &JumpPath<S>,
    control: &ControlSpec<S>,
    moments: &Moments<S>,
    stop_level: Option<S>,
    t: S,
    quad_step: S,
) -> Result<S> {
    let upto = stopped_upto(path, stop_level, t)?;
    Ok(moments.m2 * integrate_alpha_power(path, control, upto, quad_step, 1))
}

/// `⟨M̃ⁿ⟩_t = ∫_0^{t∧σ_n} (m2 + α(s) m3) ds`.
pub fn tilted_qv<S: Scalar>(
    path: &JumpPath<S>,
    control: &ControlSpec<S>,
    moments: &Moments<S>,
    stop_level: Option<S>,
    t: S,
    quad_step: S,
) -> Result<S> {
    let upto = stopped_upto(path, stop_level, t)?;
    Ok(moments.m2 * upto + moments.m3 * integrate_alpha_power(path, control, upto, quad_step, 1))
}

fn centered<S: Scalar>(batch: &TiltedBatch<S>, s: &TiltedSample<S>, t: S) -> Result<(S, S)> {
    let upto = t.min(s.stop_time);
    let m = s.path.eval(upto)?;
    let int_alpha = batch.integral_alpha_to(s, upto);
    let a = batch.moments.m2 * int_alpha;
    let qv = batch.moments.m2 * upto + batch.moments.m3 * int_alpha;
    Ok((m - a, qv))
}

/// `Ẽ[Mⁿ_t − Aⁿ_t]` at each checkpoint; zero under the tilted measure.
pub fn tilted_martingale_residual<S: Scalar>(
    batch: &TiltedBatch<S>,
    checkpoints: &[S],
) -> Result<Vec<McEstimate<S>>> {
    checkpoints
        .iter()
        .map(|&t| batch.estimate(|s| Ok(s.weight * centered(batch, s, t)?.0)))
        .collect()
}

/// `Ẽ[(Mⁿ_t − Aⁿ_t)² − ⟨M̃ⁿ⟩_t]` at each checkpoint; zero under the tilted measure.
pub fn tilted_qv_residual<S: Scalar>(
    batch: &TiltedBatch<S>,
    checkpoints: &[S],
) -> Result<Vec<McEstimate<S>>> {
    checkpoints
        .iter()
        .map(|&t| {
            batch.estimate(|s| {
                let (x, qv) = centered(batch, s, t)?;
                Ok(s.weight * (x * x - qv))
            })
        })
        .collect()
}

/// `Ẽ[(Mⁿ_t − Aⁿ_t)²]` at each checkpoint.
pub fn tilted_second_moment<S: Scalar>(
    batch: &TiltedBatch<S>,
    checkpoints: &[S],
) -> Result<Vec<McEstimate<S>>> {
    checkpoints
        .iter()
        .map(|&t| {
            batch.estimate(|s| {
                let (x, _) = centered(batch, s, t)?;
                Ok(s.weight * x * x)
            })
        })
        .collect()
}

/// A tilted estimate checked against a target value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEstimate<S> {
    pub t: S,
    pub estimate: McEstimate<S>,
    pub target: S,
    pub z_score: S,
}

/// Compensator rows, tilted jump count and the tilted martingale checks on one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovCheck<S> {
    pub compensator: CompensatorReport<S>,
    /// `Ẽ N_{T∧σ_n}`
    pub tilted_jump_count: McEstimate<S>,
    /// `(λ + a m1) T` for a constant control without stopping
    pub tilted_jump_count_closed_form: Option<S>,
    /// `Ẽ[Mⁿ_t − Aⁿ_t]`, target 0
    pub martingale: Vec<CheckpointEstimate<S>>,
    /// paired `Ẽ[(Mⁿ_t − Aⁿ_t)² − ⟨M̃ⁿ⟩_t]`, target 0
    pub qv_residual: Vec<CheckpointEstimate<S>>,
    /// `Ẽ[(Mⁿ_t − Aⁿ_t)²]` against `(m2 + a m3) t`; constant controls only
    pub second_moment: Vec<CheckpointEstimate<S>>,
    pub consistent: bool,
}

/// Runs every tilted-measure check on `batch` at threshold `k` standard errors.
pub fn verify_girsanov<S: Scalar>(
    batch: &TiltedBatch<S>,
    checkpoints: &[S],
    k: S,
) -> Result<GirsanovCheck<S>> {
    let compensator = verify_compensator(batch, &default_test_functions(&batch.measure))?;
    let count = tilted_expectation(batch, |s| {
        S::from_usize(s.path.jumps_through(s.stop_time)).unwrap()
    })?;
    let closed_form = match (batch.control, batch.stop_level) {
        (ControlSpec::Zero, None) => Some(batch.measure.rate * batch.horizon),
        (ControlSpec::Constant { a }, None) => {
            Some((batch.measure.rate + a * batch.moments.m1) * batch.horizon)
        }
        _ => None,
    };
    let wrap = |t: S, estimate: McEstimate<S>, target: S| CheckpointEstimate {
        t,
        z_score: estimate.z_score(target),
        estimate,
        target,
    };
    let martingale: Vec<_> = checkpoints
        .iter()
        .zip(tilted_martingale_residual(batch, checkpoints)?)
        .map(|(&t, e)| wrap(t, e, S::zero()))
        .collect();
    let qv_residual: Vec<_> = checkpoints
        .iter()
        .zip(tilted_qv_residual(batch, checkpoints)?)
        .map(|(&t, e)| wrap(t, e, S::zero()))
        .collect();
    let qv_slope = match (batch.control, batch.stop_level) {
        (ControlSpec::Zero, None) => Some(batch.moments.m2),
        (ControlSpec::Constant { a }, None) => Some(batch.moments.m2 + a * batch.moments.m3),
        _ => None,
    };
    let second_moment = match qv_slope {
        Some(slope) => checkpoints
            .iter()
            .zip(tilted_second_moment(batch, checkpoints)?)
            .map(|(&t, e)| wrap(t, e, slope * t))
            .collect(),
        None => Vec::new(),
    };
    let consistent = compensator.all_within(k)
        && closed_form.is_none_or(|c| count.within(c, k))
        && martingale.iter().all(|c| c.estimate.within(c.target, k))
        && qv_residual.iter().all(|c| c.estimate.within(c.target, k))
        && second_moment.iter().all(|c| c.estimate.within(c.target, k));
    Ok(GirsanovCheck {
        compensator,
        tilted_jump_count: count,
        tilted_jump_count_closed_form: closed_form,
        martingale,
        qv_residual,
        second_moment,
        consistent,
    })
}
