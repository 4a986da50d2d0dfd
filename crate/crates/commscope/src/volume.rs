use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

use num_rational::Ratio;
use num_traits::ToPrimitive;

/// Exact communication volume, in elements or bytes depending on context.
///
/// The (g-1)/g collective factors make volumes rational; carrying them as
/// reduced fractions keeps every total exact. Rounding happens only when a
/// value is displayed or exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Volume(Ratio<u128>);

impl Volume {
    pub fn zero() -> Self {
        Volume(Ratio::from_integer(0))
    }

    pub fn from_int(n: u128) -> Self {
        Volume(Ratio::from_integer(n))
    }

    /// `num / den`; `den` must be nonzero.
    pub fn ratio(num: u128, den: u128) -> Self {
        assert!(den > 0, "volume denominator must be nonzero");
        Volume(Ratio::new(num, den))
    }

    pub fn is_zero(&self) -> bool {
        *self.0.numer() == 0
    }

    pub fn is_integral(&self) -> bool {
        *self.0.denom() == 1
    }

    /// The exact integer value, when the volume is integral.
    pub fn as_integer(&self) -> Option<u128> {
        self.is_integral().then(|| *self.0.numer())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Multiply by the exact fraction `num / den`.
    pub fn scale(self, num: u128, den: u128) -> Self {
        assert!(den > 0, "volume denominator must be nonzero");
        Volume(self.0 * Ratio::new(num, den))
    }

    pub fn div_int(self, den: u128) -> Self {
        self.scale(1, den)
    }

    pub fn numer(&self) -> u128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u128 {
        *self.0.denom()
    }
}

impl From<u64> for Volume {
    fn from(n: u64) -> Self {
        Volume::from_int(n as u128)
    }
}

impl Add for Volume {
    type Output = Volume;
    fn add(self, rhs: Volume) -> Volume {
        Volume(self.0 + rhs.0)
    }
}

impl AddAssign for Volume {
    fn add_assign(&mut self, rhs: Volume) {
        self.0 += rhs.0;
    }
}

impl Mul<u64> for Volume {
    type Output = Volume;
    fn mul(self, rhs: u64) -> Volume {
        Volume(self.0 * Ratio::from_integer(rhs as u128))
    }
}

impl Sum for Volume {
    fn sum<I: Iterator<Item = Volume>>(iter: I) -> Volume {
        iter.fold(Volume::zero(), |acc, v| acc + v)
    }
}

impl Default for Volume {
    fn default() -> Self {
        Volume::zero()
    }
}

impl fmt::Display for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_integer() {
            Some(n) => write!(f, "{n}"),
            // Shortest f64 representation; exactness is preserved internally.
            None => write!(f, "{}", self.to_f64()),
        }
    }
}
