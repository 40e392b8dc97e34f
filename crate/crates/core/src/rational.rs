//! Exact rational helpers shared by the construction, engine and simulator.

use std::str::FromStr;

use malachite_base::num::arithmetic::traits::{Ceiling, Floor, Pow};
use malachite_base::num::basic::traits::{One, Zero};
use malachite_base::num::conversion::traits::RoundingFrom;
use malachite_base::rounding_modes::RoundingMode;
use malachite_nz::natural::Natural;
pub use malachite_q::Rational;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {input:?} as a rational (expected \"p/q\", an integer or a decimal)")]
pub struct ParseRationalError {
    pub input: String,
}

/// Parses `"p/q"`, integers and plain decimals (`"2.87586"`, `"-0.5"`) exactly.
pub fn parse_rational(input: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError {
        input: input.to_string(),
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err());
    }
    if s.contains('/') {
        return Rational::from_str(s).map_err(|_| err());
    }
    let (negative, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}");
    let numerator = Natural::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| err())?;
    let denominator = Natural::from(10u32).pow(frac_part.len() as u64);
    let value = Rational::from_naturals(numerator, denominator);
    Ok(if negative { -value } else { value })
}

/// Nearest `f64` to an exact rational.
pub fn to_f64(value: &Rational) -> f64 {
    f64::rounding_from(value, RoundingMode::Nearest).0
}

/// Renders a rational as `"p/q"` (or `"p"` for integers).
pub fn to_string(value: &Rational) -> String {
    value.to_string()
}

/// `u64` view of an integral rational, if it fits.
pub fn to_u64(value: &Rational) -> Option<u64> {
    if *value.denominator_ref() != 1u32 || *value < 0u32 {
        return None;
    }
    u64::try_from(value.numerator_ref()).ok()
}

pub fn from_u64(value: u64) -> Rational {
    Rational::from(value)
}

pub fn ratio(numerator: u64, denominator: u64) -> Rational {
    Rational::from_unsigneds(numerator, denominator)
}

pub fn abs_diff(a: &Rational, b: &Rational) -> Rational {
    let d = a - b;
    if d < 0u32 {
        -d
    } else {
        d
    }
}

fn decimal_scale(digits: u32) -> Rational {
    Rational::from(Natural::from(10u32).pow(u64::from(digits)))
}

fn round_down(value: &Rational, digits: u32) -> Rational {
    let scale = decimal_scale(digits);
    Rational::from((value * &scale).floor()) / scale
}

fn round_up(value: &Rational, digits: u32) -> Rational {
    let scale = decimal_scale(digits);
    Rational::from((value * &scale).ceiling()) / scale
}

/// Alternating Taylor sum for `exp(-z)`, `0 <= z <= 1`, stopped after a
/// positive (`upper == true`) or negative term so the partial sum brackets
/// the true value from the requested side.
fn exp_neg_taylor(z: &Rational, digits: u32, upper: bool) -> Rational {
    let tolerance = Rational::ONE / decimal_scale(digits + 5);
    let mut sum = Rational::ONE;
    let mut term = Rational::ONE;
    let mut n: u64 = 0;
    loop {
        n += 1;
        term = term * z / Rational::from(n);
        if n % 2 == 1 {
            sum -= &term;
        } else {
            sum += &term;
        }
        let ends_positive = n.is_multiple_of(2);
        if term < tolerance && ends_positive == upper {
            return sum;
        }
    }
}

fn check_exp_argument(y: &Rational) {
    assert!(
        *y >= 0u32 && *y <= 1u32,
        "exp(-y) bounds are implemented for 0 <= y <= 1"
    );
}

/// Rigorous upper bound on `exp(-y)` for `0 <= y <= 1`, with roughly
/// `digits` correct decimal digits and a denominator of `10^digits`.
pub fn exp_neg_upper(y: &Rational, digits: u32) -> Rational {
    check_exp_argument(y);
    let y_low = round_down(y, digits + 5);
    round_up(&exp_neg_taylor(&y_low, digits, true), digits)
}

/// Rigorous lower bound on `exp(-y)` for `0 <= y <= 1`.
pub fn exp_neg_lower(y: &Rational, digits: u32) -> Rational {
    check_exp_argument(y);
    let y_high = round_up(y, digits + 5);
    let value = round_down(&exp_neg_taylor(&y_high, digits, false), digits);
    if value < 0u32 {
        Rational::ZERO
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("3/2").unwrap(), ratio(3, 2));
        assert_eq!(parse_rational("6/4").unwrap(), ratio(3, 2));
        assert_eq!(parse_rational("7").unwrap(), from_u64(7));
        assert_eq!(parse_rational("2.5").unwrap(), ratio(5, 2));
        assert_eq!(parse_rational("0.125").unwrap(), ratio(1, 8));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("-1.25").unwrap(), -ratio(5, 4));
        assert_eq!(parse_rational("7.233629").unwrap(), ratio(7_233_629, 1_000_000));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "abc", "1/0", "1.2.3", "1e5", "--1", "."] {
            assert!(parse_rational(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn exp_bounds_bracket_the_float_value() {
        for (n, d) in [(0u64, 1u64), (1, 1), (3, 4), (13, 16), (1, 3), (999, 1000)] {
            let y = ratio(n, d);
            let lo = exp_neg_lower(&y, 50);
            let hi = exp_neg_upper(&y, 50);
            assert!(lo <= hi);
            let f = (-(n as f64) / d as f64).exp();
            assert!((to_f64(&lo) - f).abs() < 1e-15);
            assert!((to_f64(&hi) - f).abs() < 1e-15);
            assert!(&hi - &lo < Rational::ONE / decimal_scale(48));
        }
    }

    #[test]
    fn exp_of_zero_is_exactly_one() {
        assert_eq!(exp_neg_upper(&Rational::ZERO, 50), Rational::ONE);
        assert_eq!(exp_neg_lower(&Rational::ZERO, 50), Rational::ONE);
    }
}
