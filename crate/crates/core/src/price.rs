//! Exact two-fraction-digit yen amounts.

use core::fmt;
use core::ops::{Mul, Neg, Sub};
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A signed yen amount stored as an integer number of hundredths.
///
/// Prices in the data model are never held as binary floating point so that
/// every serializer renders them byte-exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Yen(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum YenParseError {
    #[error("empty amount")]
    Empty,
    #[error("invalid amount `{0}`: expected digits with exactly 2 fraction digits")]
    Format(alloc::string::String),
    #[error("amount `{0}` is out of range")]
    Overflow(alloc::string::String),
}

impl Yen {
    pub const ZERO: Yen = Yen(0);

    pub const fn from_hundredths(hundredths: i64) -> Self {
        Yen(hundredths)
    }

    pub const fn hundredths(self) -> i64 {
        self.0
    }

    pub const fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub const fn abs(self) -> Yen {
        Yen(self.0.abs())
    }

    pub const fn signum(self) -> i64 {
        self.0.signum()
    }

    /// Lossy conversion for metric arithmetic and plotting only.
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Parses an amount that carries exactly two fraction digits, e.g. `9988.05`.
    pub fn parse_strict(s: &str) -> Result<Self, YenParseError> {
        Self::parse_with(s, true)
    }

    /// Parses an amount with zero, one or two fraction digits (`9960.2`, `16349`).
    ///
    /// Used for JSON numbers, whose textual form may drop trailing zeros.
    pub fn parse_lenient(s: &str) -> Result<Self, YenParseError> {
        Self::parse_with(s, false)
    }

    fn parse_with(s: &str, strict: bool) -> Result<Self, YenParseError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(YenParseError::Empty);
        }
        let bad = || YenParseError::Format(s.into());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if strict && frac_part.len() != 2 {
            return Err(bad());
        }
        if frac_part.len() > 2 || (body.contains('.') && frac_part.is_empty()) {
            return Err(bad());
        }
        let overflow = || YenParseError::Overflow(s.into());
        let mut value: i64 = 0;
        for b in int_part.bytes() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(i64::from(b - b'0')))
                .ok_or_else(overflow)?;
        }
        let mut frac: i64 = 0;
        for (i, b) in frac_part.bytes().enumerate() {
            frac += i64::from(b - b'0') * if i == 0 { 10 } else { 1 };
        }
        let total = value
            .checked_mul(100)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(overflow)?;
        Ok(Yen(if negative { -total } else { total }))
    }
}

impl fmt::Display for Yen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Yen {
    type Err = YenParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Yen::parse_strict(s)
    }
}

impl Sub for Yen {
    type Output = Yen;

    fn sub(self, rhs: Yen) -> Yen {
        Yen(self.0 - rhs.0)
    }
}

impl Neg for Yen {
    type Output = Yen;

    fn neg(self) -> Yen {
        Yen(-self.0)
    }
}

impl Mul<i64> for Yen {
    type Output = Yen;

    fn mul(self, rhs: i64) -> Yen {
        Yen(self.0 * rhs)
    }
}
