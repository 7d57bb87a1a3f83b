//! Extended reals for log-MGF values.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// A real number or `+∞`.
///
/// Log-MGFs are `+∞` past their radius of convergence. Keeping that as a
/// separate variant (instead of an overflowed `f64`) lets root finders tell
/// "divergent" from "large".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInfinity => None,
        }
    }

    /// Lossy view as `f64` (`+∞` maps to `f64::INFINITY`).
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }

    pub fn scale(self, c: f64) -> ExtReal {
        debug_assert!(c >= 0.0);
        match self {
            ExtReal::Finite(x) => ExtReal::Finite(c * x),
            ExtReal::PosInfinity if c == 0.0 => ExtReal::Finite(0.0),
            ExtReal::PosInfinity => ExtReal::PosInfinity,
        }
    }

    /// `true` when the value is `+∞` or strictly positive.
    pub fn is_positive(self) -> bool {
        match self {
            ExtReal::Finite(x) => x > 0.0,
            ExtReal::PosInfinity => true,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtReal::PosInfinity
        } else {
            ExtReal::Finite(x)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInfinity,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInfinity => f.write_str("+inf"),
        }
    }
}
