//! Exact decimal parsing and formatting over arbitrary-precision rationals.
//!
//! All quantities in the engine are [`BigRational`]s. Input tokens are plain
//! decimals (`123`, `0.0601`), never floats, so parsing is lossless. Rounding
//! happens only when a value is formatted for output, always half-even.

use std::fmt;

use num::bigint::Sign;
use num::{BigInt, BigRational, Integer, One, Signed, Zero};

/// Why a token is not an acceptable decimal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecimalError {
    Empty,
    Negative,
    Malformed,
    TooPrecise { max_places: u32, found: u32 },
}

impl fmt::Display for DecimalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecimalError::Empty => f.write_str("empty"),
            DecimalError::Negative => f.write_str("negative"),
            DecimalError::Malformed => f.write_str("malformed decimal"),
            DecimalError::TooPrecise { max_places, found } => write!(
                f,
                "precision loss: {found} decimal places exceed the {max_places} allowed"
            ),
        }
    }
}

impl std::error::Error for DecimalError {}

/// A parsed non-negative decimal together with the number of fractional
/// digits it was written with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDecimal {
    pub value: BigRational,
    pub places: u32,
}

/// Parses `digits[.digits]`, optionally signed. No exponents, no thousands
/// separators, no surrounding whitespace.
pub fn parse_signed(token: &str) -> Result<ParsedDecimal, DecimalError> {
    if token.is_empty() {
        return Err(DecimalError::Empty);
    }
    let (negative, body) = match token.as_bytes()[0] {
        b'-' => (true, &token[1..]),
        b'+' => (false, &token[1..]),
        _ => (false, token),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if int_part.is_empty() || !all_digits(int_part) {
        return Err(DecimalError::Malformed);
    }
    let frac = frac_part.unwrap_or("");
    if frac_part.is_some() && (frac.is_empty() || !all_digits(frac)) {
        return Err(DecimalError::Malformed);
    }
    let mut digits = String::with_capacity(int_part.len() + frac.len());
    digits.push_str(int_part);
    digits.push_str(frac);
    let mut numer: BigInt = digits.parse().map_err(|_| DecimalError::Malformed)?;
    if negative {
        numer = -numer;
    }
    let places = frac.len() as u32;
    let value = BigRational::new(numer, pow10(places));
    Ok(ParsedDecimal { value, places })
}

/// Parses a non-negative decimal token.
pub fn parse_non_negative(token: &str) -> Result<ParsedDecimal, DecimalError> {
    let parsed = parse_signed(token)?;
    if parsed.value.is_negative() {
        return Err(DecimalError::Negative);
    }
    Ok(parsed)
}

/// Parses a non-negative decimal with at most `max_places` fractional digits.
///
/// Trailing fractional zeros count towards precision only if they carry a
/// nonzero digit after them, so `1.10000000000` is accepted for 8 places.
pub fn parse_with_places(token: &str, max_places: u32) -> Result<BigRational, DecimalError> {
    let parsed = parse_non_negative(token)?;
    let significant = significant_places(&parsed.value);
    match significant {
        Some(p) if p <= max_places => Ok(parsed.value),
        Some(p) => Err(DecimalError::TooPrecise { max_places, found: p }),
        None => unreachable!("parsed decimals always terminate"),
    }
}

pub(crate) fn pow10(exp: u32) -> BigInt {
    num::pow(BigInt::from(10u8), exp as usize)
}

/// Number of fractional digits needed to write `value` exactly, or `None`
/// when its decimal expansion does not terminate.
pub fn significant_places(value: &BigRational) -> Option<u32> {
    let mut denom = value.denom().clone();
    let two = BigInt::from(2u8);
    let five = BigInt::from(5u8);
    let (mut twos, mut fives) = (0u32, 0u32);
    while denom.is_even() {
        denom /= &two;
        twos += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        fives += 1;
    }
    denom.is_one().then_some(twos.max(fives))
}

/// Canonical decimal form of a terminating rational: no exponent, no
/// trailing fractional zeros, `0` for zero.
pub fn to_decimal_string(value: &BigRational) -> Option<String> {
    let places = significant_places(value)?;
    Some(format_fixed(value, places))
}

/// Exact textual form: canonical decimal when terminating, `p/q` otherwise.
pub fn to_exact_string(value: &BigRational) -> String {
    to_decimal_string(value).unwrap_or_else(|| format!("{}/{}", value.numer(), value.denom()))
}

/// Inverse of [`to_exact_string`].
pub fn parse_exact_string(token: &str) -> Result<BigRational, DecimalError> {
    match token.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.parse().map_err(|_| DecimalError::Malformed)?;
            let q: BigInt = q.parse().map_err(|_| DecimalError::Malformed)?;
            if q.is_zero() || q.is_negative() {
                return Err(DecimalError::Malformed);
            }
            Ok(BigRational::new(p, q))
        }
        None => parse_signed(token).map(|p| p.value),
    }
}

/// Rounds a rational to the nearest integer, ties to even.
pub fn round_half_even(value: &BigRational) -> BigInt {
    let (q, r) = value.numer().div_mod_floor(value.denom());
    let twice = &r * 2u8;
    match twice.cmp(value.denom()) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1u8,
        std::cmp::Ordering::Equal => {
            if q.is_even() {
                q
            } else {
                q + 1u8
            }
        }
    }
}

/// Rounds to `places` fractional digits, ties to even.
pub fn round_to_places(value: &BigRational, places: u32) -> BigRational {
    let scale = pow10(places);
    let scaled = value * BigRational::from_integer(scale.clone());
    BigRational::new(round_half_even(&scaled), scale)
}

/// Rounds to `sig` significant digits, ties to even. Zero stays zero.
pub fn round_significant(value: &BigRational, sig: u32) -> BigRational {
    assert!(sig > 0, "at least one significant digit");
    if value.is_zero() {
        return BigRational::zero();
    }
    let exponent = decimal_exponent(&value.abs());
    let shift = sig as i64 - 1 - exponent;
    let factor = if shift >= 0 {
        BigRational::from_integer(pow10(shift as u32))
    } else {
        BigRational::new(BigInt::one(), pow10((-shift) as u32))
    };
    let rounded = round_half_even(&(value * &factor));
    BigRational::from_integer(rounded) / factor
}

/// floor(log10(value)) for value > 0.
fn decimal_exponent(value: &BigRational) -> i64 {
    let numer_digits = value.numer().to_str_radix(10).len() as i64;
    let denom_digits = value.denom().to_str_radix(10).len() as i64;
    // True exponent is either this estimate or one less.
    let estimate = numer_digits - denom_digits;
    let threshold = if estimate >= 0 {
        BigRational::from_integer(pow10(estimate as u32))
    } else {
        BigRational::new(BigInt::one(), pow10((-estimate) as u32))
    };
    if *value >= threshold {
        estimate
    } else {
        estimate - 1
    }
}

/// Formats with exactly `places` fractional digits after half-even rounding.
pub fn format_fixed(value: &BigRational, places: u32) -> String {
    let scaled = round_half_even(&(value * BigRational::from_integer(pow10(places))));
    let negative = scaled.sign() == Sign::Minus;
    let digits = scaled.abs().to_str_radix(10);
    let places = places as usize;
    let body = if places == 0 {
        digits
    } else if digits.len() > places {
        let (i, f) = digits.split_at(digits.len() - places);
        format!("{i}.{f}")
    } else {
        format!("0.{}{}", "0".repeat(places - digits.len()), digits)
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

/// Half-even rounding to `sig` significant digits, written canonically.
pub fn format_significant(value: &BigRational, sig: u32) -> String {
    let rounded = round_significant(value, sig);
    to_decimal_string(&rounded).expect("rounded values terminate")
}
