//! Admissible control sets and control processes.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{ensure_len, Error, Result};

/// Box `Λ = Π_j [lower_j, upper_j]`; infinite bounds allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        ensure_len("control box upper bounds", upper.len(), lower.len())?;
        if lower.is_empty() {
            return Err(Error::DimensionMismatch("control box needs at least one coordinate".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidParameter(format!("empty control interval [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^m`.
    pub fn symmetric(m: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; m], vec![r; m])
    }

    pub fn unbounded(m: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; m], upper: vec![f64::INFINITY; m] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, h))| *v >= l - SLACK * l.abs().max(1.0) && *v <= h + SLACK * h.abs().max(1.0))
    }

    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }

    /// The `2^m` corners of a bounded box, in binary counting order.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        (0..1usize << m)
            .map(|bits| {
                (0..m)
                    .map(|j| if bits >> j & 1 == 1 { self.upper[j] } else { self.lower[j] })
                    .collect()
            })
            .collect()
    }
}

/// Càdlàg piecewise-constant control: `values[i]` on `[jump_times[i], jump_times[i+1])`,
/// the last value held forever.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleControl {
    jump_times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SimpleControl {
    pub fn new(jump_times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        ensure_len("simple control values", values.len(), jump_times.len())?;
        if jump_times.first() != Some(&0.0) {
            return Err(Error::TimeGrid("simple control must start at t = 0".into()));
        }
        if jump_times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::TimeGrid("jump times must be finite and strictly increasing".into()));
        }
        let m = values[0].len();
        for v in &values {
            ensure_len("control value", v.len(), m)?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InadmissibleControl("non-finite control value".into()));
            }
        }
        Ok(Self { jump_times, values })
    }

    pub fn constant(u: Vec<f64>) -> Self {
        Self { jump_times: vec![0.0], values: vec![u] }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn control_dim(&self) -> usize {
        self.values[0].len()
    }

    /// Right-continuous value at `t >= 0`.
    pub fn value_at(&self, t: f64) -> &[f64] {
        let i = self.jump_times.partition_point(|&s| s <= t).saturating_sub(1);
        &self.values[i]
    }

    /// `(start, end, value)` for every interval, the last one ending at `+∞`.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        self.jump_times.iter().enumerate().map(|(i, &a)| {
            let b = self.jump_times.get(i + 1).copied().unwrap_or(f64::INFINITY);
            (a, b, self.values[i].as_slice())
        })
    }

    pub fn check_admissible(&self, lambda_set: &ControlBox) -> Result<()> {
        match self.values.iter().find(|v| !lambda_set.contains(v)) {
            Some(v) => Err(Error::InadmissibleControl(format!("{v:?} outside the control box"))),
            None => Ok(()),
        }
    }
}

type PolicyFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// State feedback `u = φ(x)`, frozen over each simulation step.
#[derive(Clone)]
pub struct FeedbackPolicy {
    name: String,
    control_dim: usize,
    policy: Arc<PolicyFn>,
    admissible: Option<ControlBox>,
    projections: Arc<AtomicUsize>,
}

impl fmt::Debug for FeedbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackPolicy")
            .field("name", &self.name)
            .field("control_dim", &self.control_dim)
            .field("admissible", &self.admissible)
            .finish()
    }
}

impl FeedbackPolicy {
    pub fn new(name: impl Into<String>, control_dim: usize, policy: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            control_dim,
            policy: Arc::new(policy),
            admissible: None,
            projections: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Outputs leaving `b` are projected back onto it.
    pub fn with_box(mut self, b: ControlBox) -> Self {
        self.admissible = Some(b);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    /// Number of outputs projected onto the box so far.
    pub fn projections(&self) -> usize {
        self.projections.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = (self.policy)(x);
        if u.len() != self.control_dim {
            return Err(Error::InadmissibleControl(format!(
                "feedback '{}' returned {} values, expected {}",
                self.name,
                u.len(),
                self.control_dim
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InadmissibleControl(format!("feedback '{}' returned a non-finite value", self.name)));
        }
        match &self.admissible {
            Some(b) if !b.contains(&u) => {
                if self.projections.fetch_add(1, Ordering::Relaxed) == 0 {
                    log::warn!("feedback '{}' left the control box at {u:?}; projecting", self.name);
                }
                Ok(b.project(&u))
            }
            _ => Ok(u),
        }
    }
}

/// Either an open-loop simple control or a closed-loop feedback.
#[derive(Debug, Clone)]
pub enum ControlProcess {
    Simple(SimpleControl),
    Feedback(FeedbackPolicy),
}

impl ControlProcess {
    pub fn zero(m: usize) -> Self {
        Self::Simple(SimpleControl::constant(vec![0.0; m]))
    }

    pub fn control_dim(&self) -> usize {
        match self {
            Self::Simple(s) => s.control_dim(),
            Self::Feedback(f) => f.control_dim(),
        }
    }

    pub fn value(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Simple(s) => Ok(s.value_at(t).to_vec()),
            Self::Feedback(f) => f.evaluate(x),
        }
    }

    /// Interior jump times (open-loop only).
    pub fn jump_times(&self) -> &[f64] {
        match self {
            Self::Simple(s) => &s.jump_times()[1..],
            Self::Feedback(_) => &[],
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Simple(s) if s.jump_times().len() == 1 => format!("constant{:?}", s.values()[0]),
            Self::Simple(s) => format!("simple({} jumps)", s.jump_times().len() - 1),
            Self::Feedback(f) => format!("feedback({})", f.name()),
        }
    }
}

impl From<SimpleControl> for ControlProcess {
    fn from(s: SimpleControl) -> Self {
        Self::Simple(s)
    }
}

impl From<FeedbackPolicy> for ControlProcess {
    fn from(f: FeedbackPolicy) -> Self {
        Self::Feedback(f)
    }
}
