//! Exact rational arithmetic for walking speeds and slope constants.
//!
//! Desired and maximum speeds are finite decimals in scenario files; keeping
//! them as reduced fractions makes the urn refill pair minimal by
//! construction and slope entry/exit round trips exact.

use num_rational::Ratio;
use thiserror::Error;

/// Non-negative rational number (reduced automatically by `num-rational`).
pub type Rational = Ratio<u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RationalParseError {
    #[error("empty number")]
    Empty,
    #[error("invalid number `{0}`")]
    Invalid(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
}

/// Parses `"2"`, `"1.4"`, or a fraction `"a/b"` where each side is itself a
/// plain decimal, into a reduced rational.
pub fn parse_rational(text: &str) -> Result<Rational, RationalParseError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(RationalParseError::Empty);
    }
    if let Some((num, den)) = text.split_once('/') {
        let n = parse_decimal(num)?;
        let d = parse_decimal(den)?;
        if d == Rational::from_integer(0) {
            return Err(RationalParseError::DivisionByZero(text.to_string()));
        }
        Ok(n / d)
    } else {
        parse_decimal(text)
    }
}

fn parse_decimal(text: &str) -> Result<Rational, RationalParseError> {
    let text = text.trim();
    let invalid = || RationalParseError::Invalid(text.to_string());
    if text.is_empty() {
        return Err(RationalParseError::Empty);
    }
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(invalid());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(invalid());
    }
    let int: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| invalid())? };
    let mut numer = int;
    let mut denom: u64 = 1;
    for c in frac_part.chars() {
        numer = numer
            .checked_mul(10)
            .and_then(|n| n.checked_add(c as u64 - '0' as u64))
            .ok_or_else(invalid)?;
        denom = denom.checked_mul(10).ok_or_else(invalid)?;
    }
    Ok(Rational::new(numer, denom))
}

/// Canonical text form read back exactly by [`parse_rational`].
pub fn format_rational(r: Rational) -> String {
    if *r.denom() == 1 {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Lossy conversion for reporting and float-side arithmetic.
pub fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_reduce() {
        assert_eq!(parse_rational("1.4").unwrap(), Rational::new(7, 5));
        assert_eq!(parse_rational("2.33").unwrap(), Rational::new(233, 100));
        assert_eq!(parse_rational("2").unwrap(), Rational::from_integer(2));
        assert_eq!(parse_rational("0.4292").unwrap(), Rational::new(1073, 2500));
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_rational("1/3").unwrap(), Rational::new(1, 3));
        assert_eq!(parse_rational("100/233").unwrap(), Rational::new(100, 233));
        assert_eq!(parse_rational("1.0/1.6").unwrap(), Rational::new(5, 8));
        assert_eq!(parse_rational("1.3/2.0").unwrap(), Rational::new(13, 20));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_rational("").is_err());
        assert!(parse_rational("1.2.3").is_err());
        assert!(parse_rational("-1").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn round_trip_format() {
        for text in ["7/5", "233/100", "3", "5/8"] {
            let r = parse_rational(text).unwrap();
            assert_eq!(parse_rational(&format_rational(r)).unwrap(), r);
        }
    }
}
