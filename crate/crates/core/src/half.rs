//! Half-integer quantum numbers.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A half-integer stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Half(pub i64);

impl Half {
    pub const ZERO: Half = Half(0);

    pub fn from_twice(twice: i64) -> Self {
        Half(twice)
    }

    pub fn from_int(n: i64) -> Self {
        Half(2 * n)
    }

    /// Spin of `n` two-level atoms in the fully symmetric sector.
    pub fn spin_of(n: u64) -> Self {
        Half(n as i64)
    }

    pub fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Integer value; panics on odd halves.
    pub fn to_int(self) -> i64 {
        assert!(self.is_integer(), "{self} is not an integer");
        self.0 / 2
    }

    pub fn abs(self) -> Self {
        Half(self.0.abs())
    }
}

impl Add for Half {
    type Output = Half;
    fn add(self, rhs: Half) -> Half {
        Half(self.0 + rhs.0)
    }
}

impl Sub for Half {
    type Output = Half;
    fn sub(self, rhs: Half) -> Half {
        Half(self.0 - rhs.0)
    }
}

impl Neg for Half {
    type Output = Half;
    fn neg(self) -> Half {
        Half(-self.0)
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_display() {
        let a = Half::from_twice(3);
        let b = Half::from_int(1);
        assert_eq!((a + b).to_string(), "5/2");
        assert_eq!((a - a).to_string(), "0");
        assert_eq!((-a).value(), -1.5);
        assert!(Half::spin_of(4).is_integer());
    }
}
