//! Indicator events and the constraints built on top of them.

use std::fmt;

use crate::error::{Error, Result};

/// Returns the complement of an indicator.
///
/// A desired behavior is expressed as an upper bound on how often its
/// negation occurs.
#[inline]
pub fn invert_indicator(flag: bool) -> bool {
    !flag
}

/// One boolean per tracked behavior. When used inside the agent the layout is
/// `K` behavioral-constraint flags followed by the success flag.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EventVector(Vec<bool>);

impl EventVector {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn set(&mut self, k: usize, flag: bool) {
        self.0[k] = flag;
    }

    /// Numeric value of flag `k`: exactly 0 or 1.
    pub fn value(&self, k: usize) -> f64 {
        if self.0[k] {
            1.0
        } else {
            0.0
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }
}

impl From<Vec<bool>> for EventVector {
    fn from(flags: Vec<bool>) -> Self {
        Self(flags)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// Rate must stay at or below the threshold.
    Upper,
    /// Rate must stay at or above the threshold.
    Lower,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Upper => write!(f, "upper"),
            Bound::Lower => write!(f, "lower"),
        }
    }
}

/// Which raw environment event feeds a constraint, optionally negated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Indicator {
    pub event: usize,
    pub inverted: bool,
}

impl Indicator {
    pub fn direct(event: usize) -> Self {
        Self { event, inverted: false }
    }

    pub fn inverted(event: usize) -> Self {
        Self { event, inverted: true }
    }

    pub fn read(&self, raw: &EventVector) -> bool {
        let flag = raw.get(self.event);
        if self.inverted {
            invert_indicator(flag)
        } else {
            flag
        }
    }
}

/// A bound on the rate at which an indicator fires.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSpec {
    pub name: String,
    pub bound: Bound,
    /// Normalized threshold: a probability in `[0, 1]`.
    pub threshold: f64,
    pub indicator: Indicator,
}

impl ConstraintSpec {
    pub fn upper(name: impl Into<String>, threshold: f64, indicator: Indicator) -> Self {
        Self { name: name.into(), bound: Bound::Upper, threshold, indicator }
    }

    pub fn lower(name: impl Into<String>, threshold: f64, indicator: Indicator) -> Self {
        Self { name: name.into(), bound: Bound::Lower, threshold, indicator }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "constraint '{}' threshold {} outside [0, 1]",
                self.name, self.threshold
            )));
        }
        Ok(())
    }

    /// Whether an observed rate respects this constraint.
    pub fn satisfied_by(&self, rate: f64) -> bool {
        match self.bound {
            Bound::Upper => rate <= self.threshold,
            Bound::Lower => rate >= self.threshold,
        }
    }
}

/// The behavioral constraints of a run plus the optional success constraint.
///
/// Projects raw environment events onto the agent's event layout: the `K`
/// behavioral slots in order, then the success slot when present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    pub behaviors: Vec<ConstraintSpec>,
    pub success: Option<ConstraintSpec>,
}

impl ConstraintSet {
    pub fn new(behaviors: Vec<ConstraintSpec>, success: Option<ConstraintSpec>) -> Result<Self> {
        let set = Self { behaviors, success };
        set.validate()?;
        Ok(set)
    }

    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for spec in self.specs() {
            spec.validate()?;
        }
        if let Some(s) = &self.success {
            if s.bound != Bound::Lower {
                return Err(Error::Config(format!(
                    "success constraint '{}' must be a lower bound",
                    s.name
                )));
            }
        }
        Ok(())
    }

    /// Number of behavioral constraints `K`.
    pub fn k(&self) -> usize {
        self.behaviors.len()
    }

    /// Number of multiplier slots: `K`, plus one for the success constraint.
    pub fn slots(&self) -> usize {
        self.behaviors.len() + usize::from(self.success.is_some())
    }

    pub fn has_success(&self) -> bool {
        self.success.is_some()
    }

    /// Specs in slot order.
    pub fn specs(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.behaviors.iter().chain(self.success.iter())
    }

    pub fn specs_vec(&self) -> Vec<ConstraintSpec> {
        self.specs().cloned().collect()
    }

    pub fn project(&self, raw: &EventVector) -> EventVector {
        EventVector::new(self.specs().map(|s| s.indicator.read(raw)).collect())
    }

    /// Largest raw event index referenced by any spec.
    pub fn max_event_index(&self) -> Option<usize> {
        self.specs().map(|s| s.indicator.event).max()
    }
}
