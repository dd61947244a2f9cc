use serde::{Deserialize, Serialize};

/// Private rates of relay 1 and 2 plus the common rate, in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateTriple {
    pub r1: f64,
    pub r2: f64,
    pub rc: f64,
}

impl RateTriple {
    pub const ZERO: RateTriple = RateTriple { r1: 0.0, r2: 0.0, rc: 0.0 };

    pub fn new(r1: f64, r2: f64, rc: f64) -> Self {
        RateTriple { r1, r2, rc }
    }

    pub fn sum(&self) -> f64 {
        self.r1 + self.r2 + self.rc
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r1, self.r2, self.rc]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        RateTriple::new(a[0], a[1], a[2])
    }

    /// True when every component of `self` is at least the matching one of `other` minus `tol`.
    pub fn dominates(&self, other: &RateTriple, tol: f64) -> bool {
        self.r1 >= other.r1 - tol && self.r2 >= other.r2 - tol && self.rc >= other.rc - tol
    }

    pub fn is_nonnegative(&self) -> bool {
        self.r1 >= 0.0 && self.r2 >= 0.0 && self.rc >= 0.0
    }

    pub fn swapped(&self) -> Self {
        RateTriple::new(self.r2, self.r1, self.rc)
    }
}
