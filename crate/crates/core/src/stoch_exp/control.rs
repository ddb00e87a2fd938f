use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path_sim::JumpPath;
use crate::scalar::Scalar;

/// Nonnegative predictable control `α(ω, t)`.
///
/// Every family is a function of `sup_{s∈[0,t]} M²_{s−}` only, which reads
/// the path strictly before `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlSpec<S> {
    Zero,
    Constant {
        a: S,
    },
    /// `c · sqrt(1 + sup M²_{s−})`
    BenesSqrt {
        c: S,
    },
    /// `c · (1 + sup M²_{s−})^{p/2}`; violates the linear-growth bound for `p > 1`.
    Power {
        c: S,
        p: S,
    },
}

impl<S: Scalar> ControlSpec<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: S| x.is_finite() && x >= S::zero();
        match *self {
            ControlSpec::Zero => Ok(()),
            ControlSpec::Constant { a } if ok(a) => Ok(()),
            ControlSpec::BenesSqrt { c } if ok(c) => Ok(()),
            ControlSpec::Power { c, p } if ok(c) && p.is_finite() && p > S::zero() => Ok(()),
            other => Err(Error::InvalidControl(format!("{other:?}"))),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ControlSpec::Zero => "zero",
            ControlSpec::Constant { .. } => "constant",
            ControlSpec::BenesSqrt { .. } => "benes_sqrt",
            ControlSpec::Power { .. } => "power",
        }
    }

    /// Compact parameter string for reports, e.g. `c=1`.
    pub fn params(&self) -> String {
        match self {
            ControlSpec::Zero => "none".to_string(),
            ControlSpec::Constant { a } => format!("a={a}"),
            ControlSpec::BenesSqrt { c } => format!("c={c}"),
            ControlSpec::Power { c, p } => format!("c={c};p={p}"),
        }
    }

    /// Whether `α` varies with the running supremum (and so needs quadrature).
    pub fn is_sup_dependent(&self) -> bool {
        matches!(
            self,
            ControlSpec::BenesSqrt { .. } | ControlSpec::Power { .. }
        )
    }

    /// Constant `K` with `α² <= K · (1 + sup M²_{s−})`, if the family satisfies
    /// the linear-growth condition.
    pub fn growth_constant(&self) -> Option<S> {
        match *self {
            ControlSpec::Zero => Some(S::zero()),
            ControlSpec::Constant { a } => Some(a * a),
            ControlSpec::BenesSqrt { c } => Some(c * c),
            ControlSpec::Power { c, p } if p <= S::one() => Some(c * c),
            ControlSpec::Power { .. } => None,
        }
    }

    /// Controls outside the linear-growth class; results for these are exploratory.
    pub fn is_violator(&self) -> bool {
        self.growth_constant().is_none()
    }

    /// `α` as a function of the running supremum `sup M²_{s−}`.
    #[inline]
    pub fn alpha_from_sup(&self, sup_sq: S) -> S {
        match *self {
            ControlSpec::Zero => S::zero(),
            ControlSpec::Constant { a } => a,
            ControlSpec::BenesSqrt { c } => c * (S::one() + sup_sq).sqrt(),
            ControlSpec::Power { c, p } => c * (S::one() + sup_sq).powf(p / S::lit(2.0)),
        }
    }

    /// `α(t)` on a path.
    pub fn alpha_at(&self, path: &JumpPath<S>, t: S) -> Result<S> {
        Ok(self.alpha_from_sup(path.running_sup_sq(t)?))
    }

    /// `α(t_i)` at jump `i`, computed before the jump is seen.
    pub fn alpha_at_jump(&self, path: &JumpPath<S>, i: usize) -> S {
        self.alpha_from_sup(path.sup_sq_before_jump(i))
    }
}
