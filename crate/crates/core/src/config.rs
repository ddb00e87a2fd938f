//! JSON experiment configs.
//!
//! ```json
//! {
//!   "id": "benes-c1",
//!   "measure": {"kind": "unit_jump", "rate": 1},
//!   "control": {"family": "benes_sqrt", "c": 1},
//!   "T": 1,
//!   "num_paths": 100000,
//!   "stop_level": null,
//!   "quad_step": 0.001,
//!   "seed": 1,
//!   "verdict_threshold": 4
//! }
//! ```
//!
//! Brownian experiments replace `measure` with `"driver": "brownian"` and a
//! `grid_step`. Every error names the JSON path of the offending field.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jump_measure::{JumpKind, JumpMeasureSpec};
use crate::scalar::Scalar;
use crate::stoch_exp::ControlSpec;

pub const DEFAULT_NUM_PATHS: usize = 100_000;
pub const DEFAULT_VERDICT_THRESHOLD: f64 = 4.0;
pub const DEFAULT_SEED: u64 = 1;
/// Default quadrature step as a fraction of the horizon.
pub const DEFAULT_QUAD_FRACTION: f64 = 1e-3;

/// What drives the exponential.
#[derive(Debug, Clone, PartialEq)]
pub enum Driver<S> {
    Jump(JumpMeasureSpec<S>),
    Brownian { grid_step: S },
}

impl<S: Scalar> Driver<S> {
    pub fn measure(&self) -> Option<&JumpMeasureSpec<S>> {
        match self {
            Driver::Jump(m) => Some(m),
            Driver::Brownian { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Driver::Jump(m) => m.kind.name(),
            Driver::Brownian { .. } => "brownian",
        }
    }
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig<S> {
    pub id: Option<String>,
    pub driver: Driver<S>,
    pub control: ControlSpec<S>,
    pub horizon: S,
    pub num_paths: usize,
    pub stop_level: Option<S>,
    pub quad_step: S,
    pub seed: u64,
    pub verdict_threshold: S,
}

impl<S: Scalar> ExperimentConfig<S> {
    /// Config with every optional field at its default.
    pub fn new(driver: Driver<S>, control: ControlSpec<S>, horizon: S) -> Self {
        Self {
            id: None,
            driver,
            control,
            horizon,
            num_paths: DEFAULT_NUM_PATHS,
            stop_level: None,
            quad_step: horizon * S::lit(DEFAULT_QUAD_FRACTION),
            seed: DEFAULT_SEED,
            verdict_threshold: S::lit(DEFAULT_VERDICT_THRESHOLD),
        }
    }

    pub fn jump(measure: JumpMeasureSpec<S>, control: ControlSpec<S>, horizon: S) -> Self {
        Self::new(Driver::Jump(measure), control, horizon)
    }

    pub fn with_paths(mut self, n: usize) -> Self {
        self.num_paths = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stop_level(mut self, n: Option<S>) -> Self {
        self.stop_level = n;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Driver::Jump(m) = &self.driver {
            if let Err(errs) = m.validate() {
                return Err(schema("$.measure", join_errors(&errs)));
            }
        }
        if let Driver::Brownian { grid_step } = self.driver {
            if !(grid_step > S::zero() && grid_step.is_finite()) {
                return Err(schema("$.grid_step", "must be positive"));
            }
        }
        self.control
            .validate()
            .map_err(|e| schema("$.control", e.to_string()))?;
        if !(self.horizon > S::zero() && self.horizon.is_finite()) {
            return Err(schema("$.T", "must be positive"));
        }
        if self.num_paths == 0 {
            return Err(schema("$.num_paths", "must be positive"));
        }
        if let Some(n) = self.stop_level {
            if !(n >= S::one()) {
                return Err(schema("$.stop_level", "must be at least 1"));
            }
        }
        if !(self.quad_step > S::zero()) {
            return Err(Error::QuadStepNonPositive(self.quad_step.as_f64()));
        }
        if !(self.verdict_threshold > S::zero()) {
            return Err(schema("$.verdict_threshold", "must be positive"));
        }
        Ok(())
    }
}

fn join_errors(errs: &[Error]) -> String {
    errs.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::SchemaViolation {
        path: path.to_string(),
        message: message.into(),
    }
}

struct Fields<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn of(value: &'a Value, path: &str) -> Result<Self> {
        match value.as_object() {
            Some(map) => Ok(Self {
                path: path.to_string(),
                map,
            }),
            None => Err(schema(path, "expected an object")),
        }
    }

    fn child(&self, key: &str) -> String {
        format!("{}.{}", self.path, key)
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(schema(&self.child(k), "unknown field")),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| schema(&self.child(key), "expected a number")),
        }
    }

    fn required_number(&self, key: &str) -> Result<f64> {
        self.number(key)?
            .ok_or_else(|| schema(&self.child(key), "missing required field"))
    }

    /// Nonnegative number; negative values are reported as such.
    fn nonneg(&self, key: &str) -> Result<f64> {
        let x = self.required_number(key)?;
        if x < 0.0 {
            return Err(Error::NegativeParameter {
                path: self.child(key),
            });
        }
        Ok(x)
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let x = self.nonneg(key)?;
        if x == 0.0 {
            return Err(schema(&self.child(key), "must be positive"));
        }
        Ok(x)
    }

    fn unsigned(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| schema(&self.child(key), "expected a nonnegative integer")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| schema(&self.child(key), "expected a string")),
        }
    }
}

fn parse_measure<S: Scalar>(value: &Value, path: &str) -> Result<JumpMeasureSpec<S>> {
    let f = Fields::of(value, path)?;
    f.reject_unknown(&["kind", "rate", "params"])?;
    let kind_name = f
        .string("kind")?
        .ok_or_else(|| schema(&f.child("kind"), "missing required field"))?;
    let rate = f.positive("rate")?;
    let params_path = f.child("params");
    let empty = Value::Object(Map::new());
    let params = Fields::of(f.get("params").unwrap_or(&empty), &params_path)?;
    let kind = match kind_name {
        "unit_jump" => {
            params.reject_unknown(&[])?;
            JumpKind::UnitJump
        }
        "fixed_atoms" => {
            params.reject_unknown(&["atoms"])?;
            let atoms_path = params.child("atoms");
            let list = params
                .get("atoms")
                .and_then(Value::as_array)
                .ok_or_else(|| schema(&atoms_path, "expected an array of [size, weight] pairs"))?;
            let mut atoms = Vec::with_capacity(list.len());
            for (i, pair) in list.iter().enumerate() {
                let p = format!("{atoms_path}[{i}]");
                let xs = pair
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| schema(&p, "expected [size, weight]"))?;
                let size = xs[0]
                    .as_f64()
                    .ok_or_else(|| schema(&format!("{p}[0]"), "expected a number"))?;
                let weight = xs[1]
                    .as_f64()
                    .ok_or_else(|| schema(&format!("{p}[1]"), "expected a number"))?;
                if size < 0.0 {
                    return Err(Error::NegativeParameter {
                        path: format!("{p}[0]"),
                    });
                }
                if weight < 0.0 {
                    return Err(Error::NegativeParameter {
                        path: format!("{p}[1]"),
                    });
                }
                atoms.push((S::lit(size), S::lit(weight)));
            }
            JumpKind::FixedAtoms(atoms)
        }
        "exp_sizes" => {
            params.reject_unknown(&["mean"])?;
            JumpKind::ExponentialSizes {
                mean: S::lit(params.positive("mean")?),
            }
        }
        "pareto_sizes" => {
            params.reject_unknown(&["scale", "shape"])?;
            JumpKind::ParetoSizes {
                scale: S::lit(params.positive("scale")?),
                shape: S::lit(params.positive("shape")?),
            }
        }
        other => {
            return Err(schema(
                &f.child("kind"),
                format!("unknown measure kind '{other}'"),
            ))
        }
    };
    let spec = JumpMeasureSpec::new(kind, S::lit(rate));
    spec.validate()
        .map_err(|errs| schema(path, join_errors(&errs)))?;
    Ok(spec)
}

fn parse_control<S: Scalar>(value: &Value, path: &str) -> Result<ControlSpec<S>> {
    let f = Fields::of(value, path)?;
    let family = f
        .string("family")?
        .ok_or_else(|| schema(&f.child("family"), "missing required field"))?;
    let control = match family {
        "zero" => {
            f.reject_unknown(&["family"])?;
            ControlSpec::Zero
        }
        "constant" => {
            f.reject_unknown(&["family", "a"])?;
            ControlSpec::Constant {
                a: S::lit(f.nonneg("a")?),
            }
        }
        "benes_sqrt" => {
            f.reject_unknown(&["family", "c"])?;
            ControlSpec::BenesSqrt {
                c: S::lit(f.nonneg("c")?),
            }
        }
        "power" => {
            f.reject_unknown(&["family", "c", "p"])?;
            ControlSpec::Power {
                c: S::lit(f.nonneg("c")?),
                p: S::lit(f.positive("p")?),
            }
        }
        other => {
            return Err(Error::UnknownControlFamily {
                path: f.child("family"),
                family: other.to_string(),
            })
        }
    };
    Ok(control)
}

fn parse_value<S: Scalar>(value: &Value, path: &str) -> Result<ExperimentConfig<S>> {
    let f = Fields::of(value, path)?;
    f.reject_unknown(&[
        "id",
        "driver",
        "measure",
        "grid_step",
        "control",
        "T",
        "num_paths",
        "stop_level",
        "quad_step",
        "seed",
        "verdict_threshold",
    ])?;
    let driver = match f.string("driver")?.unwrap_or("jump") {
        "jump" => {
            if f.get("grid_step").is_some() {
                return Err(schema(
                    &f.child("grid_step"),
                    "only valid for the brownian driver",
                ));
            }
            let measure = f
                .get("measure")
                .ok_or_else(|| schema(&f.child("measure"), "missing required field"))?;
            Driver::Jump(parse_measure(measure, &f.child("measure"))?)
        }
        "brownian" => {
            if f.get("measure").is_some() {
                return Err(schema(
                    &f.child("measure"),
                    "not used by the brownian driver",
                ));
            }
            Driver::Brownian {
                grid_step: S::lit(f.positive("grid_step")?),
            }
        }
        other => {
            return Err(schema(
                &f.child("driver"),
                format!("unknown driver '{other}'"),
            ))
        }
    };
    let control = parse_control(
        f.get("control")
            .ok_or_else(|| schema(&f.child("control"), "missing required field"))?,
        &f.child("control"),
    )?;
    let horizon = S::lit(f.positive("T")?);
    let mut config = ExperimentConfig::new(driver, control, horizon);
    config.id = f.string("id")?.map(str::to_string);
    if let Some(n) = f.unsigned("num_paths")? {
        if n == 0 {
            return Err(schema(&f.child("num_paths"), "must be positive"));
        }
        config.num_paths = n as usize;
    }
    if f.get("stop_level").is_some() {
        let n = f.nonneg("stop_level")?;
        if n < 1.0 {
            return Err(schema(&f.child("stop_level"), "must be at least 1"));
        }
        config.stop_level = Some(S::lit(n));
    }
    if f.get("quad_step").is_some() {
        config.quad_step = S::lit(f.positive("quad_step")?);
    }
    if let Some(seed) = f.unsigned("seed")? {
        config.seed = seed;
    }
    if f.get("verdict_threshold").is_some() {
        config.verdict_threshold = S::lit(f.positive("verdict_threshold")?);
    }
    config.validate()?;
    Ok(config)
}

/// Parses one experiment config.
pub fn parse_config<S: Scalar>(text: &str) -> Result<ExperimentConfig<S>> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
    parse_value(&value, "$")
}

/// Parses a single config, a JSON array of configs, or `{"experiments": [...]}`.
pub fn parse_configs<S: Scalar>(text: &str) -> Result<Vec<ExperimentConfig<S>>> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
    let (list, prefix) = match &value {
        Value::Array(items) => (items.as_slice(), "$".to_string()),
        Value::Object(map) if map.contains_key("experiments") => {
            if map.len() != 1 {
                return Err(schema("$", "a sweep file holds only 'experiments'"));
            }
            match &map["experiments"] {
                Value::Array(items) => (items.as_slice(), "$.experiments".to_string()),
                _ => return Err(schema("$.experiments", "expected an array")),
            }
        }
        _ => return Ok(vec![parse_value(&value, "$")?]),
    };
    if list.is_empty() {
        return Err(schema(&prefix, "no experiments given"));
    }
    list.iter()
        .enumerate()
        .map(|(i, v)| parse_value(v, &format!("{prefix}[{i}]")))
        .collect()
}

/// Fully explicit JSON form; parsing it yields the same config.
pub fn config_to_json<S: Scalar>(config: &ExperimentConfig<S>) -> Value {
    let control = match config.control {
        ControlSpec::Zero => json!({"family": "zero"}),
        ControlSpec::Constant { a } => json!({"family": "constant", "a": a.as_f64()}),
        ControlSpec::BenesSqrt { c } => json!({"family": "benes_sqrt", "c": c.as_f64()}),
        ControlSpec::Power { c, p } => json!({"family": "power", "c": c.as_f64(), "p": p.as_f64()}),
    };
    let mut out = json!({
        "control": control,
        "T": config.horizon.as_f64(),
        "num_paths": config.num_paths,
        "stop_level": config.stop_level.map(|n| n.as_f64()),
        "quad_step": config.quad_step.as_f64(),
        "seed": config.seed,
        "verdict_threshold": config.verdict_threshold.as_f64(),
    });
    let obj = out.as_object_mut().unwrap();
    if let Some(id) = &config.id {
        obj.insert("id".into(), json!(id));
    }
    match &config.driver {
        Driver::Jump(m) => {
            let params = match &m.kind {
                JumpKind::UnitJump => json!({}),
                JumpKind::FixedAtoms(atoms) => json!({
                    "atoms": atoms.iter().map(|&(z, w)| json!([z.as_f64(), w.as_f64()])).collect::<Vec<_>>()
                }),
                JumpKind::ExponentialSizes { mean } => json!({"mean": mean.as_f64()}),
                JumpKind::ParetoSizes { scale, shape } => {
                    json!({"scale": scale.as_f64(), "shape": shape.as_f64()})
                }
            };
            obj.insert("driver".into(), json!("jump"));
            obj.insert(
                "measure".into(),
                json!({"kind": m.kind.name(), "rate": m.rate.as_f64(), "params": params}),
            );
        }
        Driver::Brownian { grid_step } => {
            obj.insert("driver".into(), json!("brownian"));
            obj.insert("grid_step".into(), json!(grid_step.as_f64()));
        }
    }
    out
}

/// SHA-256 of the canonical (sorted-key, compact) JSON form.
pub fn config_hash<S: Scalar>(config: &ExperimentConfig<S>) -> String {
    let canonical = serde_json::to_string(&config_to_json(config)).unwrap();
    hex(&Sha256::digest(canonical.as_bytes()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
