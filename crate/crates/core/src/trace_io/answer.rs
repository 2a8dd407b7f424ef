//! Canonical answer forms used for vote grouping and correctness labels.
//!
//! Equivalence is normalization-based: two answers match when their
//! canonical strings are equal. Numeric answers (integers, decimals and
//! simple `a/b` fractions) collapse to a reduced rational, everything else
//! is compared as lowercased text with whitespace collapsed.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};

const SPACING_REMOVED: &[&str] = &["\\,", "\\;", "\\:", "\\!"];
const SPACING_TO_SPACE: &[&str] = &["\\qquad", "\\quad", "\\ "];

/// Canonical form of a raw answer string. Total and idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let mut current = collapse_whitespace(&raw.to_lowercase());
    loop {
        let next = collapse_whitespace(&strip_boxed(&strip_spacing(&current)));
        if next == current {
            break;
        }
        current = next;
    }
    match parse_rational(&current) {
        Some(value) => render_rational(&value),
        None => current,
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_spacing(s: &str) -> String {
    let mut out = s.to_owned();
    for cmd in SPACING_TO_SPACE {
        out = out.replace(cmd, " ");
    }
    for cmd in SPACING_REMOVED {
        out = out.replace(cmd, "");
    }
    out
}

/// Removes one `\boxed{...}` layer when it encloses the whole string.
fn strip_boxed(s: &str) -> String {
    const OPEN: &str = "\\boxed{";
    let Some(rest) = s.strip_prefix(OPEN) else {
        return s.to_owned();
    };
    if !rest.ends_with('}') {
        return s.to_owned();
    }
    let mut depth = 1usize;
    for (idx, ch) in rest.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    // The opening brace must close at the very end.
                    if idx + 1 == rest.len() {
                        return rest[..idx].trim().to_owned();
                    }
                    return s.to_owned();
                }
            }
            _ => {}
        }
    }
    s.to_owned()
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let value = if all_digits(body) {
        BigRational::from_integer(body.parse::<BigInt>().ok()?)
    } else if let Some((num, den)) = body.split_once('/') {
        if !all_digits(num) || !all_digits(den) {
            return None;
        }
        let den = den.parse::<BigInt>().ok()?;
        if den.is_zero() {
            return None;
        }
        BigRational::new(num.parse::<BigInt>().ok()?, den)
    } else if let Some((int_part, frac_part)) = body.split_once('.') {
        let int_ok = int_part.is_empty() || all_digits(int_part);
        let frac_ok = frac_part.is_empty() || all_digits(frac_part);
        if !int_ok || !frac_ok || (int_part.is_empty() && frac_part.is_empty()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let numer = digits.parse::<BigInt>().ok()?;
        let denom = num::pow(BigInt::from(10u32), frac_part.len());
        BigRational::new(numer, denom)
    } else {
        return None;
    };
    Some(if negative { -value } else { value })
}

fn render_rational(value: &BigRational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}
