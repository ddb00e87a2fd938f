//! The jump measure `K(dz)` on the positive half-line.
//!
//! `K` is stored as a total rate `λ = K(ℝ₊)` and a normalized size law, so
//! `K(dz) = λ · P(Z ∈ dz)`. Only finite-activity measures are representable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Scalar;

/// Shape of the normalized jump-size law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JumpKind<S> {
    /// Every jump has size one.
    UnitJump,
    /// Finitely many atoms `(size, weight)`; weights are relative.
    FixedAtoms(Vec<(S, S)>),
    /// Exponential sizes with the given mean.
    ExponentialSizes { mean: S },
    /// Pareto sizes, `P(Z > z) = (scale / z)^shape` for `z >= scale`.
    ParetoSizes { scale: S, shape: S },
}

impl<S> JumpKind<S> {
    /// Name used in config files and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            JumpKind::UnitJump => "unit_jump",
            JumpKind::FixedAtoms(_) => "fixed_atoms",
            JumpKind::ExponentialSizes { .. } => "exp_sizes",
            JumpKind::ParetoSizes { .. } => "pareto_sizes",
        }
    }
}

/// `K(dz) = rate · law(kind)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasureSpec<S> {
    pub kind: JumpKind<S>,
    pub rate: S,
}

/// Power moments `m_k = ∫ z^k K(dz)`, per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments<S> {
    pub m1: S,
    pub m2: S,
    pub m3: S,
}

impl<S: Scalar> Moments<S> {
    pub fn get(&self, k: u32) -> S {
        match k {
            0 => S::one(),
            1 => self.m1,
            2 => self.m2,
            3 => self.m3,
            _ => panic!("only moments up to order 3 are tracked"),
        }
    }
}

impl<S: Scalar> JumpMeasureSpec<S> {
    pub fn new(kind: JumpKind<S>, rate: S) -> Self {
        Self { kind, rate }
    }

    pub fn unit(rate: S) -> Self {
        Self::new(JumpKind::UnitJump, rate)
    }

    pub fn exponential(mean: S, rate: S) -> Self {
        Self::new(JumpKind::ExponentialSizes { mean }, rate)
    }

    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<Error>> {
        let mut errors = Vec::new();
        if !(self.rate.is_finite() && self.rate > S::zero()) {
            errors.push(Error::NonPositiveRate(self.rate.as_f64()));
        }
        match &self.kind {
            JumpKind::UnitJump => {}
            JumpKind::FixedAtoms(atoms) => {
                if atoms.is_empty() {
                    errors.push(Error::InvalidAtomWeight("no atoms given".into()));
                }
                for (i, &(size, weight)) in atoms.iter().enumerate() {
                    if !(size.is_finite() && size > S::zero()) {
                        errors.push(Error::NonPositiveJumpSize(format!(
                            "atom {i} has size {size}"
                        )));
                    }
                    if !(weight.is_finite() && weight > S::zero()) {
                        errors.push(Error::InvalidAtomWeight(format!(
                            "atom {i} has weight {weight}"
                        )));
                    }
                }
            }
            JumpKind::ExponentialSizes { mean } => {
                if !(mean.is_finite() && *mean > S::zero()) {
                    errors.push(Error::NonPositiveJumpSize(format!(
                        "exponential mean {mean}"
                    )));
                }
            }
            JumpKind::ParetoSizes { scale, shape } => {
                if !(scale.is_finite() && *scale > S::zero()) {
                    errors.push(Error::NonPositiveJumpSize(format!("pareto scale {scale}")));
                }
                if !(shape.is_finite() && *shape > S::lit(3.0)) {
                    errors.push(Error::InfiniteThirdMoment(format!(
                        "pareto shape {shape} must exceed 3"
                    )));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Closed-form `m1, m2, m3`. Assumes a validated spec.
    pub fn moments(&self) -> Moments<S> {
        Moments {
            m1: self.rate * self.size_moment(1),
            m2: self.rate * self.size_moment(2),
            m3: self.rate * self.size_moment(3),
        }
    }

    /// `E[Z^k]` under the normalized size law.
    pub fn size_moment(&self, k: u32) -> S {
        self.size_partial_moment(k, S::neg_infinity())
    }

    /// `E[Z^k 1{Z > q}]` under the normalized size law.
    pub fn size_partial_moment(&self, k: u32, q: S) -> S {
        let ki = k as i32;
        match &self.kind {
            JumpKind::UnitJump => {
                if S::one() > q {
                    S::one()
                } else {
                    S::zero()
                }
            }
            JumpKind::FixedAtoms(atoms) => {
                let total: S = atoms.iter().fold(S::zero(), |acc, a| acc + a.1);
                atoms
                    .iter()
                    .filter(|a| a.0 > q)
                    .fold(S::zero(), |acc, &(z, w)| acc + w * z.powi(ki))
                    / total
            }
            JumpKind::ExponentialSizes { mean } => {
                // θ^k Γ(k+1, x) with x = q/θ, Γ(k+1, x) = k! e^{-x} Σ_{j≤k} x^j / j!
                let x = (q / *mean).max(S::zero());
                let mut term = S::one();
                let mut series = S::one();
                for j in 1..=k {
                    term = term * x / S::from_u32(j).unwrap();
                    series = series + term;
                }
                let fact = (1..=k).fold(S::one(), |acc, j| acc * S::from_u32(j).unwrap());
                mean.powi(ki) * fact * (-x).exp() * series
            }
            JumpKind::ParetoSizes { scale, shape } => {
                let kf = S::from_u32(k).unwrap();
                if *shape <= kf {
                    return S::infinity();
                }
                let lower = q.max(*scale);
                *shape * scale.powf(*shape) * lower.powf(kf - *shape) / (*shape - kf)
            }
        }
    }

    /// `∫ z^k 1{z > q} K(dz)`.
    pub fn partial_moment(&self, k: u32, q: S) -> S {
        self.rate * self.size_partial_moment(k, q)
    }

    /// Generalized inverse `inf{z : F(z) >= p}` of the size law.
    pub fn size_quantile(&self, p: S) -> S {
        match &self.kind {
            JumpKind::UnitJump => S::one(),
            JumpKind::FixedAtoms(atoms) => {
                let mut sorted = atoms.clone();
                sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let total: S = sorted.iter().fold(S::zero(), |acc, a| acc + a.1);
                let mut cum = S::zero();
                for &(z, w) in &sorted {
                    cum = cum + w / total;
                    if cum >= p {
                        return z;
                    }
                }
                sorted.last().unwrap().0
            }
            JumpKind::ExponentialSizes { mean } => -*mean * (-p).ln_1p(),
            JumpKind::ParetoSizes { scale, shape } => {
                *scale * (S::one() - p).powf(-S::one() / *shape)
            }
        }
    }

    /// True for laws with atoms, where `1{z > q}` and `1{z >= q}` differ.
    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, JumpKind::UnitJump | JumpKind::FixedAtoms(_))
    }

    /// Sorted distinct atom sizes of an atomic law.
    pub fn atom_sizes(&self) -> Vec<S> {
        let mut sizes: Vec<S> = match &self.kind {
            JumpKind::UnitJump => vec![S::one()],
            JumpKind::FixedAtoms(atoms) => atoms.iter().map(|a| a.0).collect(),
            _ => Vec::new(),
        };
        sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sizes.dedup();
        sizes
    }

    /// One draw from the normalized size law `K(dz)/λ`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        match &self.kind {
            JumpKind::UnitJump => S::one(),
            JumpKind::FixedAtoms(atoms) => {
                let total: S = atoms.iter().fold(S::zero(), |acc, a| acc + a.1);
                let u = S::sample_open01(rng) * total;
                let mut cum = S::zero();
                for &(z, w) in atoms {
                    cum = cum + w;
                    if u < cum {
                        return z;
                    }
                }
                atoms.last().unwrap().0
            }
            JumpKind::ExponentialSizes { mean } => *mean * S::sample_exp1(rng),
            JumpKind::ParetoSizes { scale, shape } => {
                *scale * S::sample_open01(rng).powf(-S::one() / *shape)
            }
        }
    }
}
