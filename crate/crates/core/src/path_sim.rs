//! Exact event-driven simulation of the compensated compound-Poisson driver
//! `M_t = Σ_{t_i ≤ t} z_i − m1·t`, and closed-form queries on its paths.
//!
//! Between jumps `M` is affine with slope `−m1`, so every quantity the rest of
//! the crate needs (values, left limits, running suprema of `M²_{s−}`,
//! first-passage times) is resolved segment by segment without a time grid.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump_measure::JumpMeasureSpec;
use crate::scalar::Scalar;

/// One realization of the driver on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "PathRecord<S>",
    into = "PathRecord<S>",
    bound = "S: Scalar"
)]
pub struct JumpPath<S> {
    horizon: S,
    jump_times: Vec<S>,
    jump_sizes: Vec<S>,
    drift_rate: S,
    seed_id: u64,
    // M just after jump i
    post_jump: Vec<S>,
    // sup of M²_{s−} over [0, a_k] together with the right limit M²_{a_k}, for segment k
    segment_floor: Vec<S>,
    fingerprint: u64,
}

/// Plain serialized form of a [`JumpPath`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord<S> {
    pub horizon: S,
    pub jump_times: Vec<S>,
    pub jump_sizes: Vec<S>,
    pub drift_rate: S,
    pub seed_id: u64,
}

impl<S: Scalar> TryFrom<PathRecord<S>> for JumpPath<S> {
    type Error = Error;

    fn try_from(r: PathRecord<S>) -> Result<Self> {
        JumpPath::new(
            r.horizon,
            r.jump_times,
            r.jump_sizes,
            r.drift_rate,
            r.seed_id,
        )
    }
}

impl<S: Scalar> From<JumpPath<S>> for PathRecord<S> {
    fn from(p: JumpPath<S>) -> Self {
        PathRecord {
            horizon: p.horizon,
            jump_times: p.jump_times,
            jump_sizes: p.jump_sizes,
            drift_rate: p.drift_rate,
            seed_id: p.seed_id,
        }
    }
}

/// Inter-jump piece of a path. On `(start, end]` the left limit is
/// `M_{s−} = start_value − m1·(s − start)` and the running supremum of
/// `M²_{s−}` is `max(sup_floor, M²_{s−})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<S> {
    pub index: usize,
    pub start: S,
    pub end: S,
    pub start_value: S,
    pub sup_floor: S,
}

impl<S: Scalar> Segment<S> {
    #[inline]
    pub fn left_value(&self, drift: S, t: S) -> S {
        self.start_value - drift * (t - self.start)
    }
}

/// What a stopping time is the first passage of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopKind<S> {
    /// `inf{t : 1 + sup_{s≤t} M²_{s−} >= n}`
    SigmaN(S),
    /// `inf{t : z_{t−} >= n}`
    TauN(S),
    /// Deterministic time.
    Fixed,
    /// Never triggered on `[0, T]`.
    Horizon,
}

/// Stopping time tied to the path it was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingTime<S> {
    pub kind: StopKind<S>,
    /// `None` is the never-triggered marker.
    pub value: Option<S>,
    pub origin: u64,
}

impl<S: Scalar> StoppingTime<S> {
    pub fn horizon(path: &JumpPath<S>) -> Self {
        Self {
            kind: StopKind::Horizon,
            value: None,
            origin: path.fingerprint(),
        }
    }

    /// Deterministic stop at `t`, clamped to `[0, T]`.
    pub fn fixed(path: &JumpPath<S>, t: S) -> Self {
        Self {
            kind: StopKind::Fixed,
            value: Some(t.max(S::zero()).min(path.horizon())),
            origin: path.fingerprint(),
        }
    }

    pub fn triggered(&self) -> bool {
        self.value.is_some()
    }

    /// `stop ∧ horizon`.
    pub fn effective(&self, horizon: S) -> S {
        self.value.map_or(horizon, |v| v.min(horizon))
    }
}

impl<S: Scalar> JumpPath<S> {
    pub fn new(
        horizon: S,
        jump_times: Vec<S>,
        jump_sizes: Vec<S>,
        drift_rate: S,
        seed_id: u64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > S::zero()) {
            return Err(Error::InvalidHorizon(horizon.as_f64()));
        }
        if jump_times.len() != jump_sizes.len() {
            return Err(Error::InvalidPath(format!(
                "{} jump times but {} sizes",
                jump_times.len(),
                jump_sizes.len()
            )));
        }
        if !(drift_rate.is_finite() && drift_rate >= S::zero()) {
            return Err(Error::InvalidPath(format!("drift rate {drift_rate}")));
        }
        let mut prev = S::zero();
        for &t in &jump_times {
            if !(t > prev && t <= horizon) {
                return Err(Error::InvalidPath(format!(
                    "jump time {t} out of order or outside (0, T]"
                )));
            }
            prev = t;
        }
        if let Some(z) = jump_sizes
            .iter()
            .find(|z| !(z.is_finite() && **z > S::zero()))
        {
            return Err(Error::NonPositiveJumpSize(format!("path jump of size {z}")));
        }

        let n = jump_times.len();
        let mut post_jump = Vec::with_capacity(n);
        let mut segment_floor = Vec::with_capacity(n + 1);
        let mut cum = S::zero();
        let mut floor = S::zero();
        segment_floor.push(floor);
        for (&t, &z) in jump_times.iter().zip(&jump_sizes) {
            let pre = cum - drift_rate * t;
            cum = cum + z;
            let post = cum - drift_rate * t;
            floor = floor.max(pre * pre).max(post * post);
            post_jump.push(post);
            segment_floor.push(floor);
        }

        let mut h = DefaultHasher::new();
        h.write_u64(seed_id);
        h.write_u64(horizon.as_f64().to_bits());
        h.write_u64(drift_rate.as_f64().to_bits());
        for (&t, &z) in jump_times.iter().zip(&jump_sizes) {
            h.write_u64(t.as_f64().to_bits());
            h.write_u64(z.as_f64().to_bits());
        }

        Ok(Self {
            horizon,
            jump_times,
            jump_sizes,
            drift_rate,
            seed_id,
            post_jump,
            segment_floor,
            fingerprint: h.finish(),
        })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn jump_times(&self) -> &[S] {
        &self.jump_times
    }

    pub fn jump_sizes(&self) -> &[S] {
        &self.jump_sizes
    }

    pub fn drift_rate(&self) -> S {
        self.drift_rate
    }

    pub fn seed_id(&self) -> u64 {
        self.seed_id
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    /// Hash of the path's content; stopping times carry it as their origin.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `M_{t_i}` just after jump `i`.
    pub fn post_jump_value(&self, i: usize) -> S {
        self.post_jump[i]
    }

    /// `M_{t_i−}` just before jump `i`.
    pub fn pre_jump_value(&self, i: usize) -> S {
        self.post_jump[i] - self.jump_sizes[i]
    }

    /// `sup_{s ∈ [0, t_i]} M²_{s−}`: the running supremum seen by a
    /// predictable integrand at jump `i`, which excludes that jump.
    pub fn sup_sq_before_jump(&self, i: usize) -> S {
        let pre = self.pre_jump_value(i);
        self.segment_floor[i].max(pre * pre)
    }

    fn check_time(&self, t: S) -> Result<()> {
        if t >= S::zero() && t <= self.horizon {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange {
                t: t.as_f64(),
                horizon: self.horizon.as_f64(),
            })
        }
    }

    /// Number of jumps at times `<= t`.
    pub fn jumps_through(&self, t: S) -> usize {
        self.jump_times.partition_point(|&s| s <= t)
    }

    /// Number of jumps at times `< t`.
    pub fn jumps_before(&self, t: S) -> usize {
        self.jump_times.partition_point(|&s| s < t)
    }

    pub fn segment_count(&self) -> usize {
        self.jump_times.len() + 1
    }

    /// Segment `k` runs from jump `k` (or time 0) to jump `k + 1` (or `T`).
    pub fn segment(&self, k: usize) -> Segment<S> {
        let (start, start_value) = if k == 0 {
            (S::zero(), S::zero())
        } else {
            (self.jump_times[k - 1], self.post_jump[k - 1])
        };
        let end = self.jump_times.get(k).copied().unwrap_or(self.horizon);
        Segment {
            index: k,
            start,
            end,
            start_value,
            sup_floor: self.segment_floor[k],
        }
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment<S>> + '_ {
        (0..self.segment_count()).map(move |k| self.segment(k))
    }

    /// `M_t`, including a jump at `t`.
    pub fn eval(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        let k = self.jumps_through(t);
        Ok(self.value_after(k, t))
    }

    /// `M_{t−}`, excluding a jump at `t`.
    pub fn eval_left(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        let k = self.jumps_before(t);
        Ok(self.value_after(k, t))
    }

    #[inline]
    fn value_after(&self, k: usize, t: S) -> S {
        if k == 0 {
            -self.drift_rate * t
        } else {
            self.post_jump[k - 1] - self.drift_rate * (t - self.jump_times[k - 1])
        }
    }

    /// `sup_{s ∈ [0, t]} M²_{s−}`.
    ///
    /// `M²` is convex on each affine piece, so the supremum is a maximum over
    /// segment endpoints (post-jump right limits and pre-jump left limits).
    pub fn running_sup_sq(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        if t == S::zero() {
            return Ok(S::zero());
        }
        let seg = self.segment(self.jumps_before(t));
        let m = seg.left_value(self.drift_rate, t);
        Ok(seg.sup_floor.max(m * m))
    }

    /// `sup_{s ∈ [0, t]} M²_s`, which also counts a jump at `t`.
    pub fn sup_sq(&self, t: S) -> Result<S> {
        let m = self.eval(t)?;
        Ok(self.running_sup_sq(t)?.max(m * m))
    }

    /// `σ_n = inf{t : 1 + sup_{s ≤ t} M²_{s−} >= n}`, solved exactly on each
    /// affine piece. `n <= 1` stops at 0.
    ///
    /// When the level is first exceeded by a jump at `t_i`, `σ_n = t_i`: the
    /// infimum is not attained and the stopped supremum excludes that jump.
    pub fn sigma_n(&self, n: S) -> StoppingTime<S> {
        let kind = StopKind::SigmaN(n);
        let stop = |value| StoppingTime {
            kind,
            value,
            origin: self.fingerprint,
        };
        let level = n - S::one();
        if level <= S::zero() {
            return stop(Some(S::zero()));
        }
        let radius = level.sqrt();
        for seg in self.segments() {
            if seg.sup_floor >= level {
                return stop(Some(seg.start));
            }
            if self.drift_rate > S::zero() {
                // start_value² < level, so only the downward crossing of −√level is possible
                let hit = seg.start + (seg.start_value + radius) / self.drift_rate;
                if hit <= seg.end {
                    return stop(Some(hit));
                }
            }
        }
        StoppingTime {
            kind: StopKind::Horizon,
            value: None,
            origin: self.fingerprint,
        }
    }

    /// Copy of the path with everything after `t` removed and horizon `t`.
    pub fn truncated(&self, t: S) -> Result<Self> {
        self.check_time(t)?;
        let k = self.jumps_through(t);
        let t = t.max(S::min_positive_value());
        JumpPath::new(
            t,
            self.jump_times[..k].to_vec(),
            self.jump_sizes[..k].to_vec(),
            self.drift_rate,
            self.seed_id,
        )
    }
}

/// Exact simulation on `(0, T]`: exponential inter-arrival times at rate `λ`
/// and i.i.d. sizes from `K/λ`. The drift rate is the closed-form `m1`.
pub fn simulate_path<S: Scalar, R: Rng + ?Sized>(
    spec: &JumpMeasureSpec<S>,
    horizon: S,
    rng: &mut R,
    seed_id: u64,
) -> Result<JumpPath<S>> {
    if !(horizon.is_finite() && horizon > S::zero()) {
        return Err(Error::InvalidHorizon(horizon.as_f64()));
    }
    let mut times = Vec::new();
    let mut sizes = Vec::new();
    let mut t = S::zero();
    loop {
        t = t + S::sample_exp1(rng) / spec.rate;
        if t > horizon {
            break;
        }
        // f32 rounding can repeat a time when inter-arrivals underflow
        if times.last().is_some_and(|&last| t <= last) {
            continue;
        }
        times.push(t);
        sizes.push(spec.sample_jump(rng));
    }
    JumpPath::new(horizon, times, sizes, spec.moments().m1, seed_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_jump() -> JumpPath<f64> {
        JumpPath::new(1.0, vec![0.5], vec![2.0], 1.0, 0).unwrap()
    }

    #[test]
    fn eval_examples() {
        let p = single_jump();
        assert_eq!(p.eval(0.5).unwrap(), 1.5);
        assert_eq!(p.eval_left(0.5).unwrap(), -0.5);
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert_eq!(p.eval_left(0.0).unwrap(), 0.0);
        assert_eq!(p.eval(0.25).unwrap(), p.eval_left(0.25).unwrap());
        assert_eq!(p.eval(1.0).unwrap(), 1.0);
        assert!(matches!(p.eval(1.5), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(
            p.eval_left(-0.1),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn running_sup_examples() {
        let flat = JumpPath::new(2.0, vec![], vec![], 1.0, 0).unwrap();
        assert_eq!(flat.running_sup_sq(2.0).unwrap(), 4.0);

        let p = single_jump();
        // M_{s−} → 1.5 as s ↓ 0.5
        assert_eq!(p.running_sup_sq(1.0).unwrap(), 2.25);
        // at the jump time itself only the pre-jump value counts
        assert_eq!(p.running_sup_sq(0.5).unwrap(), 0.25);
        assert_eq!(p.sup_sq(0.5).unwrap(), 2.25);
        assert_eq!(p.running_sup_sq(0.0).unwrap(), 0.0);
        assert_eq!(p.sup_sq_before_jump(0), 0.25);
    }

    #[test]
    fn sigma_examples() {
        let flat = JumpPath::new(3.0, vec![], vec![], 1.0, 0).unwrap();
        let s = flat.sigma_n(5.0);
        assert_eq!(s.value, Some(2.0));
        assert_eq!(s.kind, StopKind::SigmaN(5.0));
        assert_eq!(flat.sigma_n(1.0).value, Some(0.0));
        assert_eq!(flat.sigma_n(100.0).kind, StopKind::Horizon);
        assert!(!flat.sigma_n(100.0).triggered());

        // jump from −0.5 to 1.5 at 0.5 crosses level 1 + 2
        let p = single_jump();
        assert_eq!(p.sigma_n(3.0).value, Some(0.5));
        assert_eq!(p.sigma_n(3.0).effective(1.0), 0.5);
    }

    #[test]
    fn constructor_rejects_bad_paths() {
        assert!(JumpPath::new(1.0, vec![0.5, 0.4], vec![1.0, 1.0], 1.0, 0).is_err());
        assert!(JumpPath::new(1.0, vec![1.5], vec![1.0], 1.0, 0).is_err());
        assert!(JumpPath::new(1.0, vec![0.5], vec![0.0], 1.0, 0).is_err());
        assert!(JumpPath::new(1.0, vec![0.5], vec![], 1.0, 0).is_err());
        assert!(JumpPath::<f64>::new(0.0, vec![], vec![], 1.0, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = single_jump();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("jump_times"));
        assert!(!text.contains("post_jump"));
        let back: JumpPath<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<JumpPath<f64>>(
            r#"{"horizon":1,"jump_times":[0.5],"jump_sizes":[-1],"drift_rate":1,"seed_id":0}"#
        )
        .is_err());
    }

    #[test]
    fn truncation_keeps_prefix() {
        let p = JumpPath::new(1.0, vec![0.2, 0.6], vec![1.0, 1.0], 1.0, 5).unwrap();
        let q = p.truncated(0.6).unwrap();
        assert_eq!(q.jump_count(), 2);
        assert_eq!(q.horizon(), 0.6);
        let q = p.truncated(0.5).unwrap();
        assert_eq!(q.jump_count(), 1);
        assert_eq!(q.eval(0.5).unwrap(), p.eval(0.5).unwrap());
    }
}
