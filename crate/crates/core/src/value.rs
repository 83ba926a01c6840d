//! Cell values: finite reals for continuous columns, opaque tokens for
//! categorical ones.
//!
//! Values need a total order so they can key `BTreeMap`s (deterministic
//! iteration everywhere), which is why floats are wrapped in [`FiniteF64`].

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

/// A finite `f64` with total order semantics. `NaN` and infinities are
/// rejected at construction; `-0.0` is normalized to `0.0` so equal reals
/// compare and hash identically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FiniteF64(FiniteRepr);

// Inner wrapper so the Ord impl can rely on total_cmp over normalized bits.
#[derive(Clone, Copy, Debug)]
struct FiniteRepr(f64);

impl PartialEq for FiniteRepr {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for FiniteRepr {}
impl PartialOrd for FiniteRepr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for FiniteRepr {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl FiniteF64 {
    /// Returns `None` for non-finite input.
    pub fn new(x: f64) -> Option<Self> {
        if x.is_finite() {
            // normalize -0.0 so dedup treats it as 0.0
            Some(FiniteF64(FiniteRepr(if x == 0.0 { 0.0 } else { x })))
        } else {
            None
        }
    }

    pub fn get(self) -> f64 {
        self.0.0
    }
}

/// A single cell value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    /// A continuous (finite real) value.
    Num(FiniteF64),
    /// A categorical token, compared as an exact string.
    Str(String),
}

impl Value {
    /// Wraps a finite real. Panics on NaN/infinity; parsing layers must
    /// validate before constructing.
    pub fn num(x: f64) -> Self {
        Value::Num(FiniteF64::new(x).expect("continuous values must be finite"))
    }

    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x.get()),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Num(_) => None,
            Value::Str(s) => Some(s.as_str()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{}", x.get()),
            Value::Str(s) => f.write_str(s),
        }
    }
}
