//! Monte Carlo experiments around `E z_T = 1`.
//!
//! [`simulate_outcomes`] reduces every path to a handful of numbers in
//! parallel; all estimates are then computed serially from that vector in
//! path order, so results do not depend on the thread count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian_ref::{exponential_bm_stopped, simulate_bm};
use crate::config::{Driver, ExperimentConfig};
use crate::error::{Error, Result};
use crate::girsanov::TiltedBatch;
use crate::jump_measure::Moments;
use crate::path_sim::{simulate_path, StoppingTime};
use crate::rng::{path_seed_id, path_stream};
use crate::scalar::Scalar;
use crate::stats::McEstimate;
use crate::stoch_exp::{entropy_psi, integrate_alpha_power, stopped_exponential, ControlSpec};

/// Levels `K` of the reported tail masses `E[z 1{z > K}]`.
pub const TAIL_LEVELS: [f64; 4] = [2.0, 5.0, 10.0, 50.0];

/// A single weight carrying more than this share of the total weight marks
/// an estimate as dominated by its tail.
pub const HEAVY_TAIL_SHARE: f64 = 0.01;

/// Per-path summary used by every estimator below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome<S> {
    /// `zⁿ_T`
    pub z: S,
    pub log_z: S,
    pub jumps: usize,
    /// `T ∧ σ_n`
    pub stop_time: S,
    pub stopped: bool,
    /// `sup_{s ≤ T∧σ_n} M²_s`
    pub sup_sq: S,
    /// `∫_0^{T∧σ_n} α ds`
    pub integral_alpha: S,
    /// `∫_0^{T∧σ_n} α² ds`
    pub integral_alpha_sq: S,
    /// driver value at `T ∧ σ_n`
    pub driver_at_stop: S,
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(pool.install(f))
}

/// Simulates and summarizes `config.num_paths` paths.
pub fn simulate_outcomes<S: Scalar>(config: &ExperimentConfig<S>) -> Result<Vec<PathOutcome<S>>> {
    config.validate()?;
    let control = config.control;
    let stop_level = config.stop_level;
    let horizon = config.horizon;
    let quad = config.quad_step;
    let seed = config.seed;
    match &config.driver {
        Driver::Jump(measure) => (0..config.num_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_stream(seed, i);
                let path = simulate_path(measure, horizon, &mut rng, path_seed_id(seed, i))?;
                let stop = match stop_level {
                    Some(n) => path.sigma_n(n),
                    None => StoppingTime::horizon(&path),
                };
                let traj = stopped_exponential(&path, &control, &stop, quad)?;
                let stop_time = stop.effective(horizon);
                Ok(PathOutcome {
                    z: traj.terminal(),
                    log_z: traj.log_terminal(),
                    jumps: path.jump_count(),
                    stop_time,
                    stopped: stop.triggered(),
                    sup_sq: path.sup_sq(stop_time)?,
                    integral_alpha: traj.integral_alpha(),
                    integral_alpha_sq: integrate_alpha_power(&path, &control, stop_time, quad, 2),
                    driver_at_stop: path.eval(stop_time)?,
                })
            })
            .collect(),
        Driver::Brownian { grid_step } => (0..config.num_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_stream(seed, i);
                let path = simulate_bm(horizon, *grid_step, &mut rng)?;
                let e = exponential_bm_stopped(&path, &control, stop_level);
                let stop_time = match e.stop_index {
                    Some(k) => path.grid_step() * S::from_usize(k).unwrap(),
                    None => horizon,
                };
                Ok(PathOutcome {
                    z: e.z,
                    log_z: e.log_z,
                    jumps: 0,
                    stop_time,
                    stopped: e.stop_index.is_some(),
                    sup_sq: e.sup_sq,
                    integral_alpha: e.integral_alpha,
                    integral_alpha_sq: e.integral_alpha_sq,
                    driver_at_stop: e.b_stop,
                })
            })
            .collect(),
    }
}

fn estimate<S: Scalar>(
    outcomes: &[PathOutcome<S>],
    seed: u64,
    f: impl Fn(&PathOutcome<S>) -> S,
) -> Result<McEstimate<S>> {
    let values: Vec<S> = outcomes.iter().map(f).collect();
    McEstimate::from_samples(&values, seed)
}

/// Outcome of a martingale test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `|mean − 1| <= threshold · stderr`
    Consistent,
    Deviation,
    /// Off target, but the estimate is dominated by a few huge weights.
    InconclusiveHeavyTail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Deviation => "deviation",
            Verdict::InconclusiveHeavyTail => "inconclusive_heavy_tail",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTest<S> {
    pub estimate: McEstimate<S>,
    pub verdict: Verdict,
    /// The control violates the linear-growth bound; the verdict is a
    /// measurement, not a check of a known answer.
    pub exploratory: bool,
    /// Largest single `z` over the sum of all `z`.
    pub max_weight_share: S,
}

fn martingale_from<S: Scalar>(
    outcomes: &[PathOutcome<S>],
    config: &ExperimentConfig<S>,
) -> Result<MartingaleTest<S>> {
    let est = estimate(outcomes, config.seed, |o| o.z)?;
    let total = est.mean * S::from_usize(est.count).unwrap();
    let max = outcomes.iter().fold(S::zero(), |m, o| m.max(o.z));
    let share = if total > S::zero() {
        max / total
    } else {
        S::zero()
    };
    let exploratory = config.control.is_violator();
    let verdict = if est.within(S::one(), config.verdict_threshold) {
        Verdict::Consistent
    } else if exploratory && share > S::lit(HEAVY_TAIL_SHARE) {
        Verdict::InconclusiveHeavyTail
    } else {
        Verdict::Deviation
    };
    Ok(MartingaleTest {
        estimate: est,
        verdict,
        exploratory,
        max_weight_share: share,
    })
}

/// Estimates `E zⁿ_T` (unstopped when no stop level is set) and compares it with 1.
pub fn run_martingale_test<S: Scalar>(config: &ExperimentConfig<S>) -> Result<MartingaleTest<S>> {
    martingale_from(&simulate_outcomes(config)?, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentCheck<S> {
    pub estimate: McEstimate<S>,
    /// `exp(a² m2 T)` for jumps, `exp(a² T)` for Brownian motion
    pub closed_form: S,
    pub z_score: S,
    pub consistent: bool,
}

/// `E z_T²` for a constant control against its closed form. Any stop level
/// in the config is ignored.
pub fn second_moment_check<S: Scalar>(
    config: &ExperimentConfig<S>,
) -> Result<SecondMomentCheck<S>> {
    let a = match config.control {
        ControlSpec::Constant { a } => a,
        ControlSpec::Zero => S::zero(),
        other => return Err(Error::NonConstantControl(other.family().into())),
    };
    let closed_form = match &config.driver {
        Driver::Jump(m) => (a * a * m.moments().m2 * config.horizon).exp(),
        Driver::Brownian { .. } => (a * a * config.horizon).exp(),
    };
    let unstopped = config.clone().with_stop_level(None);
    let est = estimate(&simulate_outcomes(&unstopped)?, config.seed, |o| o.z * o.z)?;
    Ok(SecondMomentCheck {
        z_score: est.z_score(closed_form),
        consistent: est.within(closed_form, config.verdict_threshold),
        estimate: est,
        closed_form,
    })
}

/// `E ψ(zⁿ) = Ẽ log zⁿ` and the entropy bound `Ẽ log zⁿ <= m2 Ẽ ∫ α² ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyCheck<S> {
    /// `Ê ψ(zⁿ_T)`
    pub psi_mean: McEstimate<S>,
    /// `Ê[zⁿ_T log zⁿ_T]`, i.e. `Ẽ log zⁿ_T`
    pub tilted_log: McEstimate<S>,
    /// paired `ψ(z) − z log z = 1 − z`
    pub identity_gap: McEstimate<S>,
    pub identity_holds: bool,
    /// `κ Ê[z ∫ α² ds]` with `κ = m2` for jumps and `½` for Brownian motion
    pub bound_rhs: McEstimate<S>,
    /// paired `z log z − κ z ∫ α² ds`; nonpositive in expectation
    pub bound_gap: McEstimate<S>,
    pub bound_holds: bool,
}

fn entropy_coefficient<S: Scalar>(config: &ExperimentConfig<S>) -> S {
    match &config.driver {
        Driver::Jump(m) => m.moments().m2,
        Driver::Brownian { .. } => S::lit(0.5),
    }
}

fn z_log_z<S: Scalar>(o: &PathOutcome<S>) -> S {
    if o.z == S::zero() {
        S::zero()
    } else {
        o.z * o.log_z
    }
}

fn entropy_from<S: Scalar>(
    outcomes: &[PathOutcome<S>],
    config: &ExperimentConfig<S>,
) -> Result<EntropyCheck<S>> {
    let seed = config.seed;
    let k = config.verdict_threshold;
    let kappa = entropy_coefficient(config);
    let psi_mean = estimate(outcomes, seed, |o| entropy_psi(o.z).unwrap_or(S::nan()))?;
    let tilted_log = estimate(outcomes, seed, z_log_z)?;
    let identity_gap = estimate(outcomes, seed, |o| {
        entropy_psi(o.z).unwrap_or(S::nan()) - z_log_z(o)
    })?;
    let bound_rhs = estimate(outcomes, seed, |o| kappa * o.z * o.integral_alpha_sq)?;
    let bound_gap = estimate(outcomes, seed, |o| {
        z_log_z(o) - kappa * o.z * o.integral_alpha_sq
    })?;
    Ok(EntropyCheck {
        identity_holds: identity_gap.within(S::zero(), k),
        bound_holds: bound_gap.mean <= k * bound_gap.stderr,
        psi_mean,
        tilted_log,
        identity_gap,
        bound_rhs,
        bound_gap,
    })
}

/// Entropy identity and bound on the stopped exponential. Requires a stop level.
pub fn entropy_identity_check<S: Scalar>(config: &ExperimentConfig<S>) -> Result<EntropyCheck<S>> {
    if config.stop_level.is_none() {
        return Err(Error::MissingStopLevel);
    }
    entropy_from(&simulate_outcomes(config)?, config)
}

/// Constants of the Gronwall bound `Ṽⁿ_T <= r e^{rT}`, assembled from the
/// proof chain for `Ṽⁿ_t = Ẽ sup_{s ≤ t∧σ_n} M²_s`:
///
/// ```text
/// sup M²      <= 2 sup A² + 2 sup M̃²
/// sup A²      <= m2² T ∫ α²                     (Cauchy-Schwarz)
/// Ẽ sup M̃²   <= 4 Ẽ ∫ (m2 + m3 α)              (Doob)
///             <= 4 Ẽ ∫ (m2 + m3/2 + m3 α²/2)    (α <= (1 + α²)/2)
/// α²          <= c² (1 + sup M²)
/// ```
///
/// giving `Ṽ_t <= ∫_0^t [k_free + k_alpha (1 + Ṽ_s)] ds` with
/// `k_free = 8 m2 + 4 m3` and `k_alpha = (2 m2² T + 4 m3) c²`, hence
/// `Ṽ_t <= r (1 + ∫ Ṽ)` for `r = max((k_free + k_alpha) T, k_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallConstants<S> {
    pub m1: S,
    pub m2: S,
    pub m3: S,
    /// `c²`
    pub growth: S,
    pub horizon: S,
    pub split_factor: S,
    pub doob_factor: S,
    /// `m2² T`
    pub cauchy_schwarz_factor: S,
    pub k_free: S,
    pub k_alpha: S,
    pub r: S,
    /// `r e^{rT}`
    pub bound: S,
    /// `(k_free + k_alpha) T e^{k_alpha T}`, the direct Gronwall solution
    pub sharp_bound: S,
}

impl<S: Scalar> GronwallConstants<S> {
    pub fn assemble(moments: &Moments<S>, growth: S, horizon: S) -> Self {
        let two = S::lit(2.0);
        let four = S::lit(4.0);
        let split = two;
        let doob = four;
        let cs = moments.m2 * moments.m2 * horizon;
        let k_free = split * doob * (moments.m2 + moments.m3 / two);
        let k_alpha = (split * cs + split * doob * moments.m3 / two) * growth;
        let r = ((k_free + k_alpha) * horizon).max(k_alpha);
        Self {
            m1: moments.m1,
            m2: moments.m2,
            m3: moments.m3,
            growth,
            horizon,
            split_factor: split,
            doob_factor: doob,
            cauchy_schwarz_factor: cs,
            k_free,
            k_alpha,
            r,
            bound: r * (r * horizon).exp(),
            sharp_bound: (k_free + k_alpha) * horizon * (k_alpha * horizon).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport<S> {
    /// `Ẽ sup_{s ≤ T∧σ_n} M²_s`
    pub v_hat: McEstimate<S>,
    pub constants: GronwallConstants<S>,
    /// `bound − (v̂ + threshold · stderr)`
    pub margin: S,
    pub ok: bool,
}

fn benes_growth<S: Scalar>(control: &ControlSpec<S>) -> Result<S> {
    match *control {
        ControlSpec::BenesSqrt { c } => Ok(c * c),
        ControlSpec::Zero => Ok(S::zero()),
        other => Err(Error::NonBenesControl(other.family().into())),
    }
}

fn gronwall_from<S: Scalar>(
    outcomes: &[PathOutcome<S>],
    config: &ExperimentConfig<S>,
) -> Result<GronwallReport<S>> {
    let growth = benes_growth(&config.control)?;
    let measure = config
        .driver
        .measure()
        .ok_or(Error::WrongDriver { expected: "jump" })?;
    let constants = GronwallConstants::assemble(&measure.moments(), growth, config.horizon);
    let v_hat = estimate(outcomes, config.seed, |o| o.z * o.sup_sq)?;
    let margin = constants.bound - (v_hat.mean + config.verdict_threshold * v_hat.stderr);
    Ok(GronwallReport {
        ok: margin >= S::zero(),
        v_hat,
        constants,
        margin,
    })
}

/// Tilted `Ẽ sup M²` against the assembled bound. Requires a Benes
/// (or zero) control and a jump driver.
pub fn gronwall_margin<S: Scalar>(config: &ExperimentConfig<S>) -> Result<GronwallReport<S>> {
    benes_growth(&config.control)?;
    gronwall_from(&simulate_outcomes(config)?, config)
}

/// `Ẽ sup_{s ≤ t∧σ_n} M²_s` at several `t` on one batch weighted by `zⁿ_T`.
/// Nondecreasing in `t` path by path.
pub fn gronwall_profile<S: Scalar>(
    config: &ExperimentConfig<S>,
    times: &[S],
) -> Result<Vec<McEstimate<S>>> {
    benes_growth(&config.control)?;
    let measure = config
        .driver
        .measure()
        .ok_or(Error::WrongDriver { expected: "jump" })?;
    let batch = TiltedBatch::simulate(
        measure,
        &config.control,
        config.stop_level,
        config.horizon,
        config.num_paths,
        config.seed,
        config.quad_step,
    )?;
    times
        .iter()
        .map(|&t| {
            let values = batch
                .samples
                .iter()
                .map(|s| Ok(s.weight * s.path.sup_sq(t.min(s.stop_time))?))
                .collect::<Result<Vec<S>>>()?;
            McEstimate::from_samples(&values, config.seed)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMass<S> {
    pub level: S,
    pub mass: S,
}

/// Everything reported for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport<S> {
    pub mean_z: McEstimate<S>,
    pub entropy: EntropyCheck<S>,
    /// `E[z 1{z > K}]`
    pub tail_mass: Vec<TailMass<S>>,
    pub stopped_fraction: S,
    pub mean_jumps: S,
    pub gronwall: Option<GronwallReport<S>>,
}

impl<S: Scalar> DiagnosticsReport<S> {
    pub fn tail(&self, level: f64) -> Option<S> {
        self.tail_mass
            .iter()
            .find(|t| t.level == S::lit(level))
            .map(|t| t.mass)
    }
}

fn diagnostics_from<S: Scalar>(
    outcomes: &[PathOutcome<S>],
    config: &ExperimentConfig<S>,
) -> Result<DiagnosticsReport<S>> {
    let n = S::from_usize(outcomes.len()).unwrap();
    let tail_mass = TAIL_LEVELS
        .iter()
        .map(|&k| {
            let level = S::lit(k);
            let mass = estimate(outcomes, config.seed, |o| {
                if o.z > level {
                    o.z
                } else {
                    S::zero()
                }
            })?
            .mean;
            Ok(TailMass { level, mass })
        })
        .collect::<Result<Vec<_>>>()?;
    let gronwall = match (&config.driver, benes_growth(&config.control)) {
        (Driver::Jump(_), Ok(_)) => Some(gronwall_from(outcomes, config)?),
        _ => None,
    };
    Ok(DiagnosticsReport {
        mean_z: estimate(outcomes, config.seed, |o| o.z)?,
        entropy: entropy_from(outcomes, config)?,
        tail_mass,
        stopped_fraction: S::from_usize(outcomes.iter().filter(|o| o.stopped).count()).unwrap() / n,
        mean_jumps: S::from_usize(outcomes.iter().map(|o| o.jumps).sum()).unwrap() / n,
        gronwall,
    })
}

/// One finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult<S> {
    pub id: String,
    pub config: ExperimentConfig<S>,
    pub martingale: MartingaleTest<S>,
    pub diagnostics: DiagnosticsReport<S>,
    pub wall_ms: u64,
}

/// Simulates once and derives the martingale verdict and all diagnostics.
pub fn run_experiment<S: Scalar>(
    config: &ExperimentConfig<S>,
    index: usize,
) -> Result<ExperimentResult<S>> {
    let started = Instant::now();
    let outcomes = simulate_outcomes(config)?;
    let martingale = martingale_from(&outcomes, config)?;
    let diagnostics = diagnostics_from(&outcomes, config)?;
    Ok(ExperimentResult {
        id: config.id.clone().unwrap_or_else(|| format!("exp{index}")),
        config: config.clone(),
        martingale,
        diagnostics,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Runs every config in order.
pub fn sweep<S: Scalar>(configs: &[ExperimentConfig<S>]) -> Result<Vec<ExperimentResult<S>>> {
    if configs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| run_experiment(c, i))
        .collect()
}

/// Numbers compared by [`single_thread_check`].
pub fn numeric_fingerprint<S: Scalar>(r: &ExperimentResult<S>) -> Vec<f64> {
    let d = &r.diagnostics;
    let mut v = vec![
        r.martingale.estimate.mean.as_f64(),
        r.martingale.estimate.stderr.as_f64(),
        d.entropy.psi_mean.mean.as_f64(),
        d.entropy.tilted_log.mean.as_f64(),
        d.entropy.bound_rhs.mean.as_f64(),
    ];
    v.extend(d.tail_mass.iter().map(|t| t.mass.as_f64()));
    if let Some(g) = &d.gronwall {
        v.push(g.v_hat.mean.as_f64());
        v.push(g.v_hat.stderr.as_f64());
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreadCheck {
    pub threads: usize,
    pub max_relative_difference: f64,
    pub tolerance: f64,
    pub ok: bool,
}

/// Relative tolerance between parallel and serial runs.
pub const THREAD_TOLERANCE: f64 = 1e-12;

/// Largest relative difference between two runs of the same configs.
pub fn compare_runs<S: Scalar>(a: &[ExperimentResult<S>], b: &[ExperimentResult<S>]) -> f64 {
    let mut worst = if a.len() == b.len() {
        0.0f64
    } else {
        f64::INFINITY
    };
    for (p, s) in a.iter().zip(b) {
        let (fp, fs) = (numeric_fingerprint(p), numeric_fingerprint(s));
        if fp.len() != fs.len() {
            return f64::INFINITY;
        }
        for (x, y) in fp.into_iter().zip(fs) {
            let diff = if x == y || (x.is_nan() && y.is_nan()) {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs())
            };
            worst = worst.max(diff);
        }
    }
    worst
}

impl ThreadCheck {
    pub fn from_runs<S: Scalar>(
        threads: usize,
        parallel: &[ExperimentResult<S>],
        serial: &[ExperimentResult<S>],
    ) -> Self {
        let worst = compare_runs(parallel, serial);
        Self {
            threads,
            max_relative_difference: worst,
            tolerance: THREAD_TOLERANCE,
            ok: worst <= THREAD_TOLERANCE,
        }
    }
}

/// Reruns `configs` on one thread and compares with a run on `threads`.
pub fn single_thread_check<S: Scalar>(
    configs: &[ExperimentConfig<S>],
    threads: usize,
) -> Result<ThreadCheck> {
    let parallel = with_threads(threads, || sweep(configs))??;
    let serial = with_threads(1, || sweep(configs))??;
    Ok(ThreadCheck::from_runs(threads, &parallel, &serial))
}
