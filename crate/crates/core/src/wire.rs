//! Position stream wire format.
//!
//! One message per fix, newline terminated:
//!
//! ```text
//! POS <x> <y>\n
//! ```
//!
//! `x` and `y` are meters in fixed notation with exactly six fraction digits
//! and an optional leading minus, e.g. `POS 1.367000 -0.250000\n`.

/// Formats one position message. Returns `None` for non-finite coordinates.
pub fn format_position(x: f64, y: f64) -> Option<String> {
    if !(x.is_finite() && y.is_finite()) {
        return None;
    }
    Some(format!("POS {} {}\n", fixed6(x), fixed6(y)))
}

fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    // values that round to zero keep no sign
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Parses one message line, with or without its trailing `\n`.
pub fn parse_position(line: &str) -> Option<(f64, f64)> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let rest = line.strip_prefix("POS ")?;
    let (x, y) = rest.split_once(' ')?;
    Some((parse_decimal(x)?, parse_decimal(y)?))
}

fn parse_decimal(s: &str) -> Option<f64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = digits.split_once('.')?;
    let well_formed = !int.is_empty()
        && frac.len() == 6
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.bytes().all(|b| b.is_ascii_digit());
    if !well_formed {
        return None;
    }
    s.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats_fixed_six_decimals() {
        assert_eq!(format_position(1.367, 2.360).unwrap(), "POS 1.367000 2.360000\n");
        assert_eq!(format_position(0.0, 0.0).unwrap(), "POS 0.000000 0.000000\n");
        assert_eq!(format_position(-0.0, -1e-9).unwrap(), "POS 0.000000 0.000000\n");
        assert_eq!(format_position(-0.25, 10.0).unwrap(), "POS -0.250000 10.000000\n");
        assert!(format_position(f64::NAN, 0.0).is_none());
    }

    #[test]
    fn parses_strict_grammar() {
        assert_eq!(parse_position("POS 1.367000 2.360000\n"), Some((1.367, 2.360)));
        assert_eq!(parse_position("POS -1.000000 0.500000"), Some((-1.0, 0.5)));
        for bad in [
            "garbage",
            "POS 1.36700 2.360000",
            "POS 1.367000  2.360000",
            "POS 1.367000 2.360000 3.000000",
            "pos 1.367000 2.360000",
            "POS .367000 2.360000",
            "POS 1.367000 +2.360000",
            "POS 1e3 2.360000",
            "POS 1.367000 2.360000\r",
            "",
        ] {
            assert_eq!(parse_position(bad), None, "{bad:?}");
        }
    }

    proptest! {
        #[test]
        fn round_trip_within_half_micrometer(x in -1e4f64..1e4, y in -1e4f64..1e4) {
            let line = format_position(x, y).unwrap();
            prop_assert!(line.ends_with('\n'));
            let (px, py) = parse_position(&line).unwrap();
            prop_assert!((px - x).abs() <= 5.000001e-7);
            prop_assert!((py - y).abs() <= 5.000001e-7);
            prop_assert_eq!(format_position(px, py).unwrap(), line);
        }
    }
}
