//! Time integrals of functions of the running supremum.
//!
//! On a segment the running supremum is `max(floor, (v − m1·(s − a))²)`. It
//! stays at `floor` until the left limit drops below `−√floor`, then grows
//! smoothly. The flat part is integrated exactly and the growing part with a
//! composite trapezoid rule.

use crate::path_sim::{JumpPath, Segment};
use crate::scalar::Scalar;

use super::control::ControlSpec;

/// `∫_{from}^{to} φ(sup_{u≤s} M²_{u−}) ds` for `seg.start <= from <= to <= seg.end`.
pub(crate) fn integrate_on_segment<S: Scalar, F: Fn(S) -> S>(
    seg: &Segment<S>,
    drift: S,
    from: S,
    to: S,
    quad_step: S,
    phi: F,
) -> S {
    if to <= from {
        return S::zero();
    }
    let kink = if drift > S::zero() {
        seg.start + (seg.start_value + seg.sup_floor.sqrt()) / drift
    } else {
        S::infinity()
    };
    let flat_end = kink.min(to).max(from);
    let mut total = phi(seg.sup_floor) * (flat_end - from);
    if to > flat_end {
        let len = to - flat_end;
        let n = (len / quad_step).ceil().max(S::one());
        let steps = n.to_usize().unwrap_or(usize::MAX).max(1);
        let h = len / n;
        let f = |s: S| {
            let m = seg.left_value(drift, s);
            phi(seg.sup_floor.max(m * m))
        };
        let mut acc = (f(flat_end) + f(to)) / S::lit(2.0);
        for i in 1..steps {
            acc = acc + f(flat_end + h * S::from_usize(i).unwrap());
        }
        total = total + acc * h;
    }
    total
}

/// `∫_{from}^{to} α(s)^power ds` on one segment.
pub(crate) fn alpha_power_on_segment<S: Scalar>(
    control: &ControlSpec<S>,
    seg: &Segment<S>,
    drift: S,
    from: S,
    to: S,
    quad_step: S,
    power: i32,
) -> S {
    match *control {
        ControlSpec::Zero => S::zero(),
        ControlSpec::Constant { a } => a.powi(power) * (to - from).max(S::zero()),
        _ => integrate_on_segment(seg, drift, from, to, quad_step, |f| {
            control.alpha_from_sup(f).powi(power)
        }),
    }
}

/// `∫_0^{upto} α(s)^power ds` over a whole path.
pub fn integrate_alpha_power<S: Scalar>(
    path: &JumpPath<S>,
    control: &ControlSpec<S>,
    upto: S,
    quad_step: S,
    power: i32,
) -> S {
    let mut total = S::zero();
    for seg in path.segments() {
        if seg.start >= upto {
            break;
        }
        let to = seg.end.min(upto);
        total = total
            + alpha_power_on_segment(
                control,
                &seg,
                path.drift_rate(),
                seg.start,
                to,
                quad_step,
                power,
            );
    }
    total
}
